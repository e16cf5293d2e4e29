//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals and on
//! `(0, ∞)` via the map `u = L·s/(1−s)`.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tolerance: 1e-10,
            rel_tolerance: 1e-8,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tolerance > 0.0 && self.rel_tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidArgument(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
}

// Kronrod 15-point nodes (non-negative half) and weights, with the embedded
// 7-point Gauss weights on the odd nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, pair) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
        *pair = (f1, f2);
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * half;
    let resasc = asc * half.abs();
    let resabs = abs_sum * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over `[a, b]`, bisecting the worst segment until the total
/// error estimate meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Integral> {
    cfg.validate()?;
    let first = gauss_kronrod(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::from([first]);
    let mut subdivisions = 0;
    loop {
        if !value.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                error_estimate: f64::INFINITY,
                subdivisions,
            });
        }
        if error <= cfg.abs_tolerance.max(cfg.rel_tolerance * value.abs()) {
            return Ok(Integral {
                value,
                error_estimate: error,
                subdivisions,
            });
        }
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                error_estimate: error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gauss_kronrod(&f, worst.a, mid);
        let right = gauss_kronrod(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        // running sums drift; refresh them every so often
        if subdivisions % 32 == 0 {
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integrates `f` over `(0, ∞)` using `u = scale·s/(1−s)`, `s ∈ (0, 1)`.
///
/// `scale` should be a characteristic length of the integrand so that its
/// mass sits away from the endpoints of `s`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    scale: f64,
    cfg: &QuadratureConfig,
) -> Result<Integral> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::NonPositive {
            name: "scale",
            value: scale,
        });
    }
    let g = |s: f64| {
        let one_minus = 1.0 - s;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let u = scale * s / one_minus;
        let v = f(u);
        if v == 0.0 {
            0.0
        } else {
            v * scale / (one_minus * one_minus)
        }
    };
    integrate(g, 0.0, 1.0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let cfg = QuadratureConfig::default();
        let r = integrate(|x| 3.0 * x * x + 1.0, 0.0, 2.0, &cfg).unwrap();
        assert!((r.value - 10.0).abs() < 1e-13);
        assert_eq!(r.subdivisions, 0);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let cfg = QuadratureConfig::default();
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, &cfg).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn semi_infinite_exponential() {
        let cfg = QuadratureConfig::default();
        for &rate in &[0.01, 1.0, 30.0] {
            let r = integrate_semi_infinite(|u| rate * (-rate * u).exp(), 1.0 / rate, &cfg).unwrap();
            assert!((r.value - 1.0).abs() < 1e-10, "rate={rate} {r:?}");
        }
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = QuadratureConfig {
            max_subdivisions: 3,
            ..Default::default()
        };
        let err = integrate(|x| (1.0 / x).sin() / x, 1e-6, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { subdivisions: 3, .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = QuadratureConfig {
            abs_tolerance: 0.0,
            ..Default::default()
        };
        assert!(integrate(|x| x, 0.0, 1.0, &cfg).is_err());
    }
}
