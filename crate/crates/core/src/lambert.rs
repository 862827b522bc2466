//! Principal branch of the Lambert W function.

use crate::error::{Error, Result};

/// The branch point `−1/e`.
pub const BRANCH_POINT: f64 = -0.36787944117144233;

const MAX_ITERS: usize = 50;

/// `W₀(t)`: the solution `w ≥ −1` of `w·e^w = t`, for `t ≥ −1/e`.
///
/// Initial guess: the branch-point series `−1 + p − p²/3 + 11p³/72` with
/// `p = √(2(e·t + 1))` for `t < −0.32`, `ln(1 + t)` up to `t = 3`, and the
/// asymptotic `L₁ − L₂ + L₂/L₁` (`L₁ = ln t`, `L₂ = ln L₁`) beyond. Refined by
/// Halley's method.
pub fn lambert_w0(t: f64) -> Result<f64> {
    if t.is_nan() || t < BRANCH_POINT {
        return Err(Error::Domain(format!(
            "lambert_w0 needs an argument >= -1/e, got {t}"
        )));
    }
    if t == BRANCH_POINT {
        return Ok(-1.0);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut w = if t < -0.32 {
        let p = (2.0 * (std::f64::consts::E * t + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if t < 3.0 {
        t.ln_1p()
    } else {
        let l1 = t.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    let tol = 1e-15 * t.abs().max(1.0);
    for _ in 0..MAX_ITERS {
        let ew = w.exp();
        let r = w * ew - t;
        if r.abs() <= tol {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = r / (ew * wp1 - (w + 2.0) * r / (2.0 * wp1));
        if !step.is_finite() {
            break;
        }
        let next = (w - step).max(-1.0);
        if next == w {
            break;
        }
        w = next;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(t: f64) -> f64 {
        let w = lambert_w0(t).unwrap();
        (w * w.exp() - t).abs() / t.abs().max(1.0)
    }

    #[test]
    fn anchors() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0);
        assert_eq!(BRANCH_POINT, -(-1f64).exp());
    }

    #[test]
    fn domain_error_below_branch_point() {
        assert!(matches!(lambert_w0(-0.5), Err(Error::Domain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn residual_over_range() {
        for i in 0..=2000 {
            let t = BRANCH_POINT + (1000.0 - BRANCH_POINT) * (i as f64 / 2000.0).powi(3);
            assert!(residual(t) <= 1e-12, "t = {t}");
        }
        for t in [BRANCH_POINT + 1e-16, BRANCH_POINT + 1e-10, -0.32, -0.3199, 2.999, 3.0, 1e6] {
            assert!(residual(t) <= 1e-12, "t = {t}");
        }
    }

    #[test]
    fn known_values() {
        // omega constant and W(1000)
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w0(1000.0).unwrap() - 5.249_602_852_401_596).abs() < 1e-13);
    }
}
