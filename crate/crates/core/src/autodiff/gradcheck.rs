//! Central-finite-difference verification of analytic gradients.

use super::{Graph, Tensor};
use crate::array::Array;
use crate::error::{Result, RoseError};

/// Compares the analytic gradient of a scalar-valued function against central
/// finite differences, returning the max over coordinates of
/// |analytic − numeric| / max(1, |analytic|).
///
/// `f` is rebuilt on a fresh graph per evaluation; `h` must lie in
/// [1e-7, 1e-3]. Errors if `f` is non-finite at any probe point.
pub fn check_gradient(
    f: impl Fn(&Graph, &Tensor) -> Tensor,
    x: &Array,
    h: f64,
) -> Result<f64> {
    assert!(
        (1e-7..=1e-3).contains(&h),
        "check_gradient: step {h} outside [1e-7, 1e-3]"
    );
    let eval = |a: &Array, coord: usize| -> Result<f64> {
        let g = Graph::new();
        let t = g.constant(a.clone());
        let y = f(&g, &t);
        assert!(y.len() == 1, "check_gradient: f must be scalar-valued");
        let v = y.item();
        if !v.is_finite() {
            return Err(RoseError::invalid(format!(
                "check_gradient: non-finite value at probe of coordinate {coord}"
            )));
        }
        Ok(v)
    };

    let analytic = {
        let g = Graph::new();
        let t = g.leaf(x.clone(), true);
        let y = f(&g, &t);
        assert!(y.len() == 1, "check_gradient: f must be scalar-valued");
        if !y.item().is_finite() {
            return Err(RoseError::invalid(
                "check_gradient: non-finite value at base point".to_string(),
            ));
        }
        y.backward();
        t.grad().unwrap_or_else(|| Array::zeros(x.shape()))
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = eval(&probe, i)?;
        probe.data_mut()[i] = orig - h;
        let fm = eval(&probe, i)?;
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let disc = (a - numeric).abs() / a.abs().max(1.0);
        if disc > worst {
            worst = disc;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn sum_of_squares_passes() {
        let mut r = Rng::new(0);
        let x = Array::from_fn(&[3, 3], |_| r.uniform(-2.0, 2.0));
        let d = check_gradient(|_, t| t.mul(t).sum(), &x, 1e-5).unwrap();
        assert!(d < 1e-6, "discrepancy {d}");
    }

    #[test]
    fn abs_away_from_origin_passes() {
        let mut r = Rng::new(1);
        let x = Array::from_fn(&[4, 4], |_| {
            let v = r.uniform(0.1, 1.0);
            if r.next_f64() < 0.5 {
                -v
            } else {
                v
            }
        });
        let d = check_gradient(|_, t| t.abs().sum(), &x, 1e-5).unwrap();
        assert!(d < 1e-5, "discrepancy {d}");
    }

    #[test]
    fn log_near_zero_reports_non_finite() {
        let x = Array::new(&[1], vec![1e-9]);
        let err = check_gradient(|_, t| t.log().sum(), &x, 1e-5);
        assert!(err.is_err());
        let msg = err.unwrap_err().to_string();
        assert!(msg.contains("coordinate 0"), "{msg}");
    }

    #[test]
    #[should_panic(expected = "outside")]
    fn rejects_out_of_range_step() {
        let x = Array::scalar(1.0);
        let _ = check_gradient(|_, t| t.sum(), &x, 1e-2);
    }
}
