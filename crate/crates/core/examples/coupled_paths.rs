//! One driving noise, four coupled solves: the corners of alpha = (1, 1).

use mimcmc::rng::{Purpose, StreamKey};
use mimcmc::spde::{coupled_solve, qoi, DrivingNoise, Recording, Resolution};
use mimcmc::{corners, Bases, ModelParams, MultiIndex, QoiKind};

fn main() -> mimcmc::Result<()> {
    let params = ModelParams::default();
    let bases = Bases::default();
    let set = corners(&MultiIndex::from([1, 1]));
    let fine = Resolution::new(set.finest(), bases, params.t_final)?;
    let mut rng = StreamKey::new(7, Purpose::Custom(1)).rng();
    let noise = DrivingNoise::for_resolution(&fine, &mut rng);

    let sol = coupled_solve(&set, &params, bases, &noise, &Recording::Final)?;
    for (res, path) in sol.resolutions.iter().zip(&sol.paths) {
        println!(
            "{}: K={:3} M={:3}  u_1(T)={:+.5}  Q={:+.5}",
            res.alpha,
            res.modes,
            res.steps,
            path.final_state()[0],
            qoi(path, QoiKind::Weighted)
        );
    }
    Ok(())
}
