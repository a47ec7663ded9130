//! Central finite-difference gradients, used to verify backpropagation.

use super::{Gradients, QNetwork};
use crate::Scalar;

/// Numerically differentiates `loss` w.r.t. every parameter of `net` with
/// central differences of half-width `h`.
pub fn finite_difference<T, F>(net: &QNetwork<T>, h: T, mut loss: F) -> Gradients<T>
where
    T: Scalar,
    F: FnMut(&QNetwork<T>) -> T,
{
    let mut probe = net.clone();
    let mut grads = Gradients::zeros_like(net);
    let n_slices = net.param_slices().len();
    let two_h = h + h;
    for s in 0..n_slices {
        let len = net.param_slices()[s].len();
        for i in 0..len {
            let orig = probe.param_slices()[s][i];
            probe.param_slices_mut()[s][i] = orig + h;
            let up = loss(&probe);
            probe.param_slices_mut()[s][i] = orig - h;
            let down = loss(&probe);
            probe.param_slices_mut()[s][i] = orig;
            grads.slices_mut()[s][i] = (up - down) / two_h;
        }
    }
    grads
}

/// `|a - b| / max(|a|, |b|, floor)`: relative error that degrades to an
/// absolute error (scaled by `1/floor`) for near-zero gradients.
pub fn relative_error<T: Scalar>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest elementwise [`relative_error`] between two gradient sets.
pub fn max_relative_error<T: Scalar>(a: &Gradients<T>, b: &Gradients<T>, floor: T) -> T {
    a.slices()
        .into_iter()
        .zip(b.slices())
        .flat_map(|(x, y)| x.iter().zip(y).map(move |(&p, &q)| relative_error(p, q, floor)))
        .fold(T::zero(), T::max)
}
