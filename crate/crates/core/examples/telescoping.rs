//! Corner stencils and the telescoping identity on a 2-D index set.

use mimcmc::multi_index::delta_weights;
use mimcmc::{corners, MultiIndex, TensorIndexSet};

fn main() {
    let alpha = MultiIndex::from([2, 1]);
    let set = corners(&alpha);
    println!("corners of {alpha}:");
    for (c, w) in set.corners().iter().zip(set.coefficients()) {
        println!("  {c}  {w:+}");
    }

    // any table f; the sum of mixed differences over the box returns f at the top
    let f = |a: &MultiIndex| (3 * a.get(0) * a.get(0) + 7 * a.get(1) + 1) as i64;
    let top = TensorIndexSet::new(vec![3, 2]).unwrap();
    let total: i64 = top
        .indices()
        .iter()
        .flat_map(|a| delta_weights(a))
        .map(|(b, w)| w as i64 * f(&b))
        .sum();
    println!("sum of differences = {total}, f(3,2) = {}", f(&MultiIndex::from([3, 2])));
}
