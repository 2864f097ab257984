//! Central finite differences.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{BenchError, Result};
use crate::value::Value;

/// Step size for a coordinate of magnitude `x`.
pub fn step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// `(f(x + h) - f(x - h)) / 2h` with the perturbation applied to one
/// coordinate.
pub fn central(mut f: impl FnMut(f64) -> Result<f64>, x: f64, h: f64) -> Result<Option<f64>> {
    let up = f(x + h)?;
    let down = f(x - h)?;
    let d = (up - down) / (2.0 * h);
    Ok(d.is_finite().then_some(d))
}

/// Mixed relative error, absolute below magnitude one.
pub fn rel_err(ad: f64, fd: f64) -> f64 {
    if !ad.is_finite() || !fd.is_finite() {
        return f64::INFINITY;
    }
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0)
}

/// One perturbed coordinate: element `element` of input `input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub input: usize,
    pub element: usize,
}

/// Every coordinate of the listed inputs.
pub fn all_directions(inputs: &[Value], which: &[usize]) -> Vec<Direction> {
    which
        .iter()
        .flat_map(|&input| (0..inputs[input].len()).map(move |element| Direction { input, element }))
        .collect()
}

/// Up to `max` distinct directions, keeping their order.
pub fn sample_directions(candidates: Vec<Direction>, max: usize, rng: &mut impl Rng) -> Vec<Direction> {
    if candidates.len() <= max {
        return candidates;
    }
    let mut picked = sample(rng, candidates.len(), max).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| candidates[i]).collect()
}

/// Directional derivatives of `f` along each direction.
pub fn fd_gradient(
    mut f: impl FnMut(&[Value]) -> Result<f64>,
    inputs: &[Value],
    directions: &[Direction],
) -> Result<Vec<f64>> {
    let mut work = inputs.to_vec();
    directions
        .iter()
        .map(|d| {
            let x = inputs[d.input].data()[d.element];
            let h = step(x);
            let r = central(
                |xp| {
                    work[d.input].data_mut()[d.element] = xp;
                    f(&work)
                },
                x,
                h,
            );
            work[d.input].data_mut()[d.element] = x;
            r?.ok_or(BenchError::NonFinite { input: d.input, element: d.element })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_four() {
        let d = central(|x| Ok(x * x), 4.0, step(4.0)).unwrap().unwrap();
        assert!((d - 8.0).abs() < 1e-6);
    }

    #[test]
    fn linear_is_exact_for_any_step() {
        for h in [1e-8, 1e-3, 0.5, 4.0] {
            let d = central(|x| Ok(3.0 * x - 2.0), 1.25, h).unwrap().unwrap();
            assert!((d - 3.0).abs() < 1e-7, "h = {h}: {d}");
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let inputs = [Value::Scalar(0.0)];
        let dirs = all_directions(&inputs, &[0]);
        let r = fd_gradient(|v| Ok(1.0 / v[0].scalar().abs().min(0.0)), &inputs, &dirs);
        assert!(matches!(r, Err(BenchError::NonFinite { input: 0, element: 0 })));
    }

    #[test]
    fn relative_error_is_absolute_near_zero() {
        assert_eq!(rel_err(1e-9, 0.0), 1e-9);
        assert_eq!(rel_err(200.0, 100.0), 0.5);
        assert_eq!(rel_err(f64::NAN, 1.0), f64::INFINITY);
    }
}
