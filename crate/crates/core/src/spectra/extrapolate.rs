use serde::Serialize;

use crate::error::{Error, Result};

/// Fit λ(R) = limit + amplitude · exp(−rate · R) through three points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub limit: f64,
    /// `None` when the last two values coincide (already converged).
    pub rate: Option<f64>,
    pub amplitude: f64,
}

/// Exact three-point exponential fit for increasing `r` and decreasing `l`.
pub fn exponential_tail(r: [f64; 3], l: [f64; 3]) -> Result<ExponentialFit> {
    if !(r[0] < r[1] && r[1] < r[2]) {
        return Err(Error::Parameter(format!("radii {r:?} must increase")));
    }
    let (d1, d2) = (l[0] - l[1], l[1] - l[2]);
    if d2 == 0.0 && d1 >= 0.0 {
        return Ok(ExponentialFit { limit: l[2], rate: None, amplitude: 0.0 });
    }
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Extrapolation(format!("values {l:?} are not strictly decreasing")));
    }
    let q = d1 / d2;
    // ratio (e^{-b r0} − e^{-b r1}) / (e^{-b r1} − e^{-b r2}) increases from its b → 0 limit to ∞
    let ratio = |b: f64| {
        let e = |x: f64| (-b * (x - r[1])).exp();
        (e(r[0]) - 1.0) / (1.0 - e(r[2]))
    };
    let floor = (r[1] - r[0]) / (r[2] - r[1]);
    if q <= floor * (1.0 + 1e-12) {
        return Err(Error::Extrapolation(format!(
            "gap ratio {q} does not exceed the linear-decay value {floor}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while ratio(hi) < q {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Extrapolation(format!("gap ratio {q} is too large to fit")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    // amplitude relative to e^{-b r2}: d2 = a e^{-b r2} (e^{b (r2 − r1)} − 1)
    let tail = d2 / ((b * (r[2] - r[1])).exp() - 1.0);
    Ok(ExponentialFit { limit: l[2] - tail, rate: Some(b), amplitude: tail * (b * r[2]).exp() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_exponential() {
        let f = |x: f64| 2.5 + 0.7 * (-1.3 * x).exp();
        let fit = exponential_tail([4.0, 6.0, 9.0], [f(4.0), f(6.0), f(9.0)]).unwrap();
        assert!((fit.limit - 2.5).abs() < 1e-12);
        assert!((fit.rate.unwrap() - 1.3).abs() < 1e-8);
        assert!((fit.amplitude - 0.7).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_geometric() {
        assert!(exponential_tail([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]).is_err());
        assert!(exponential_tail([1.0, 2.0, 3.0], [1.0, 2.0, 1.0]).is_err());
        let c = exponential_tail([1.0, 2.0, 3.0], [2.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.limit, 1.0);
    }
}
