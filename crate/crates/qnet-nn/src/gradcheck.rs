//! Central finite-difference gradient verification.

use crate::params::{Gradients, ParameterSet};

/// Compares analytic gradients against central finite differences of
/// `loss_fn` and returns the worst relative error over every parameter
/// scalar. The denominator is floored at 1e-6 so near-zero gradient pairs
/// compare absolutely.
pub fn max_relative_error(
    ps: &mut ParameterSet,
    analytic: &Gradients,
    mut loss_fn: impl FnMut(&ParameterSet) -> f64,
    h: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        for i in 0..ps.get(id).data.len() {
            let orig = ps.get(id).data[i];
            ps.get_mut(id).data[i] = orig + h;
            let lp = loss_fn(ps);
            ps.get_mut(id).data[i] = orig - h;
            let lm = loss_fn(ps);
            ps.get_mut(id).data[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.get(id).data[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
