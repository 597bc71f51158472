//! Law of the coupled solver against direct solves and exact recurrences.

use std::f64::consts::PI;

use mimcmc::rng::{Purpose, StreamKey};
use mimcmc::spde::{coupled_solve, exp_euler_solve, DrivingNoise, InitialModes, Recording, Resolution};
use mimcmc::stats::Moments;
use mimcmc::{corners, Bases, ModelParams, MultiIndex};

/// Mean and variance of `u_{k,M}` by iterating the affine update by hand.
fn recurrence(params: &ModelParams, k: usize, h: f64, steps: usize) -> (f64, f64) {
    let lam = PI * PI * (k * k) as f64;
    let a = (-lam * h).exp() + params.theta * (1.0 - (-lam * h).exp()) / lam;
    let s2 = params.sigma * params.sigma * (1.0 - (-2.0 * lam * h).exp()) / (2.0 * lam);
    let (mut m, mut v) = (params.u0.value(k), 0.0);
    for _ in 0..steps {
        m *= a;
        v = a * a * v + s2;
    }
    (m, v)
}

#[test]
fn corners_match_direct_solves_and_recurrence() {
    let params = ModelParams::default();
    let bases = Bases::default();
    let alpha = MultiIndex::from([1, 1]);
    let set = corners(&alpha);
    let fine = Resolution::new(set.finest(), bases, 1.0).unwrap();
    let n = 100_000;

    let mut rng = StreamKey::new(1, Purpose::Custom(10)).rng();
    let mut coupled: Vec<Vec<Moments>> = set
        .corners()
        .iter()
        .map(|c| vec![Moments::default(); Resolution::new(c, bases, 1.0).unwrap().modes])
        .collect();
    for _ in 0..n {
        let noise = DrivingNoise::for_resolution(&fine, &mut rng);
        let sol = coupled_solve(&set, &params, bases, &noise, &Recording::Final).unwrap();
        for (m, path) in coupled.iter_mut().zip(&sol.paths) {
            for (mk, u) in m.iter_mut().zip(path.final_state()) {
                mk.push(*u);
            }
        }
    }

    for (c, moments) in set.corners().iter().zip(&coupled) {
        let res = Resolution::new(c, bases, 1.0).unwrap();
        let mut direct = vec![Moments::default(); res.modes];
        let mut rng = StreamKey::new(2, Purpose::Custom(11)).alpha(c).rng();
        for _ in 0..n {
            let noise = DrivingNoise::for_resolution(&res, &mut rng);
            let path = exp_euler_solve(&params, &res, &noise).unwrap();
            for (mk, u) in direct.iter_mut().zip(path.final_state()) {
                mk.push(*u);
            }
        }
        for k in 1..=res.modes {
            let (em, ev) = recurrence(&params, k, res.step, res.steps);
            let (a, b) = (&moments[k - 1], &direct[k - 1]);
            let se_mean = (ev / n as f64).sqrt();
            let se_var = ev * (2.0 / (n - 1) as f64).sqrt();
            assert!((a.mean() - em).abs() < 4.0 * se_mean, "corner {c} mode {k}: coupled mean");
            assert!((b.mean() - em).abs() < 4.0 * se_mean, "corner {c} mode {k}: direct mean");
            assert!((a.variance() - ev).abs() < 4.0 * se_var, "corner {c} mode {k}: coupled var");
            assert!((b.variance() - ev).abs() < 4.0 * se_var, "corner {c} mode {k}: direct var");
            // two-sample comparison of the coupled and direct laws
            assert!((a.mean() - b.mean()).abs() < 4.0 * se_mean * 2f64.sqrt());
        }
    }
}

#[test]
fn time_coupling_is_pathwise_exact_without_drift() {
    // θ = 0: the coarse propagator is the square of the fine one, so the
    // merged increments reproduce the fine path at every other step.
    let params = ModelParams { theta: 0.0, ..ModelParams::default() };
    let bases = Bases { k0: 6, m0: 8 };
    let set = corners(&MultiIndex::from([0, 3]));
    let fine = Resolution::new(set.finest(), bases, 1.0).unwrap();
    let mut rng = StreamKey::new(3, Purpose::Custom(12)).rng();
    for _ in 0..20 {
        let noise = DrivingNoise::for_resolution(&fine, &mut rng);
        let sol = coupled_solve(&set, &params, bases, &noise, &Recording::Full).unwrap();
        let (coarse, finer) = (&sol.paths[0], &sol.paths[1]);
        assert_eq!(finer.steps(), 2 * coarse.steps());
        for n in 0..=coarse.steps() {
            let (a, b) = (coarse.state_at(n).unwrap(), finer.state_at(2 * n).unwrap());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "step {n}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn space_coupling_keeps_leading_modes() {
    let params = ModelParams::default();
    let bases = Bases::default();
    let set = corners(&MultiIndex::from([2, 0]));
    let fine = Resolution::new(set.finest(), bases, 1.0).unwrap();
    let mut rng = StreamKey::new(4, Purpose::Custom(13)).rng();
    let noise = DrivingNoise::for_resolution(&fine, &mut rng);
    let sol = coupled_solve(&set, &params, bases, &noise, &Recording::Final).unwrap();
    let (coarse, finer) = (sol.paths[0].final_state(), sol.paths[1].final_state());
    assert_eq!(coarse.len() * 2, finer.len());
    assert_eq!(coarse, &finer[..coarse.len()]);
}

#[test]
fn zero_noise_decays_every_mode() {
    let params = ModelParams { sigma: 0.0, u0: InitialModes::Constant(1.0), ..ModelParams::default() };
    let res = Resolution::new(&MultiIndex::from([3, 2]), Bases::default(), 1.0).unwrap();
    let path = exp_euler_solve(&params, &res, &DrivingNoise::zeros(res.modes, res.steps)).unwrap();
    for (k, u) in path.final_state().iter().enumerate() {
        let (m, _) = recurrence(&params, k + 1, res.step, res.steps);
        assert!((u - m).abs() <= 1e-12 * m.abs().max(1e-300));
    }
}
