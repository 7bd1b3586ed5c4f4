//! Moment summaries and normal quantiles shared by every interval method.

use crate::error::{Error, Result};
use crate::space::batch_runs;

/// Upper `p` quantile of the standard normal, `z_p = Φ⁻¹(1 - p)`.
pub fn z_upper(p: f64) -> f64 {
    -normal_quantile(p)
}

/// Inverse standard normal CDF.
///
/// Wichura's AS 241 (PPND16) rational approximation, relative accuracy about
/// 1e-16 over the open unit interval.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile needs p in (0, 1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_8e-15,
];

/// Means and sample covariance (divisor `n - 1`) of `P` per-sample terms.
///
/// With batch labels the rows are first averaged within each batch and the
/// summary is taken over batch means, so `n` is the number of batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<const P: usize> {
    pub mean: [f64; P],
    pub cov: [[f64; P]; P],
    pub n: usize,
    pub batched: bool,
}

impl<const P: usize> Moments<P> {
    pub fn from_terms(terms: &[[f64; P]], batch_ids: Option<&[u32]>) -> Result<Self> {
        let (units, batched) = match batch_ids {
            None => (terms.to_vec(), false),
            Some(ids) => {
                if ids.len() != terms.len() {
                    return Err(Error::invalid("batch labels do not match term rows"));
                }
                let means = batch_runs(ids)
                    .into_iter()
                    .map(|r| {
                        let len = r.len() as f64;
                        let mut m = [0.0; P];
                        for t in &terms[r] {
                            for p in 0..P {
                                m[p] += t[p];
                            }
                        }
                        m.map(|v| v / len)
                    })
                    .collect::<Vec<_>>();
                (means, true)
            }
        };
        let n = units.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 {} to estimate a covariance, got {n}",
                if batched { "batches" } else { "rows" }
            )));
        }
        let nf = n as f64;
        let mut mean = [0.0; P];
        for u in &units {
            for p in 0..P {
                mean[p] += u[p];
            }
        }
        mean = mean.map(|v| v / nf);
        let mut cov = [[0.0; P]; P];
        for u in &units {
            for a in 0..P {
                let da = u[a] - mean[a];
                for b in a..P {
                    cov[a][b] += da * (u[b] - mean[b]);
                }
            }
        }
        for a in 0..P {
            for b in a..P {
                cov[a][b] /= nf - 1.0;
                cov[b][a] = cov[a][b];
            }
        }
        Ok(Moments {
            mean,
            cov,
            n,
            batched,
        })
    }

    /// `gᵀ Σ̂ g`.
    pub fn quadratic_form(&self, g: &[f64; P]) -> f64 {
        let mut acc = 0.0;
        for a in 0..P {
            for b in 0..P {
                acc += g[a] * self.cov[a][b] * g[b];
            }
        }
        acc
    }

    pub fn cov_rows(&self) -> Vec<Vec<f64>> {
        self.cov.iter().map(|r| r.to_vec()).collect()
    }
}

/// Clamp a quadratic-form variance that rounding pushed just below zero.
/// Anything more negative than rounding can explain is a bug.
pub(crate) fn nonnegative_variance(v: f64, scale: f64, what: &str) -> f64 {
    if v >= 0.0 {
        return v;
    }
    assert!(
        v >= -1e-10 * scale.abs().max(f64::MIN_POSITIVE),
        "{what}: negative variance {v} from a quadratic form"
    );
    0.0
}

/// `n/(n-1) (y_i - ȳ)²`, the per-sample terms whose mean is the unbiased
/// sample variance.
pub fn variance_terms(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let c = n / (n - 1.0);
    y.iter().map(|v| c * (v - mean).powi(2)).collect()
}

/// Mean and standard error of the mean; the error is `None` for one value.
pub fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_reference_values() {
        // tabulated standard normal quantiles
        let table = [
            (0.975, 1.959_963_984_540_054),
            (0.995, 2.575_829_303_548_900_4),
            (0.5, 0.0),
            (0.841_344_746_068_542_9, 1.0),
            (0.025, -1.959_963_984_540_054),
            (1e-10, -6.361_340_902_404_056),
        ];
        for (p, z) in table {
            assert!((normal_quantile(p) - z).abs() < 1e-9, "p={p}");
        }
        assert!((z_upper(0.025) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_erfc_by_bisection() {
        // independent route: bisection on Φ built from a continued-fraction-free series
        fn phi(x: f64) -> f64 {
            // Simpson integration of the density from 0
            let steps = 20_000;
            let h = x / steps as f64;
            let f = |t: f64| (-0.5 * t * t).exp();
            let mut s = f(0.0) + f(x);
            for i in 1..steps {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            0.5 + s * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
        }
        for p in [0.6, 0.8, 0.9, 0.95, 0.99] {
            let z = normal_quantile(p);
            assert!((phi(z) - p).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn moments_plain_and_batched() {
        let terms = [[1.0, 2.0], [3.0, 2.0], [5.0, 8.0], [7.0, 4.0]];
        let m = Moments::from_terms(&terms, None).unwrap();
        assert_eq!(m.mean, [4.0, 4.0]);
        assert!((m.cov[0][0] - 20.0 / 3.0).abs() < 1e-12);
        assert!((m.cov[0][1] - 4.0).abs() < 1e-12);
        assert_eq!(m.cov[0][1], m.cov[1][0]);

        let b = Moments::from_terms(&terms, Some(&[0, 0, 1, 1])).unwrap();
        assert_eq!(b.n, 2);
        assert!(b.batched);
        assert_eq!(b.mean, [4.0, 4.0]);
        // batch means (2,2) and (6,6)
        assert!((b.cov[0][0] - 8.0).abs() < 1e-12);
        assert!((b.cov[0][1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn moments_need_two_units() {
        assert!(Moments::from_terms(&[[1.0]], None).is_err());
        assert!(Moments::from_terms(&[[1.0], [2.0]], Some(&[0, 0])).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [100.0f64, 1000.0, 10000.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [100.0f64, 1000.0, 10000.0]
            .iter()
            .map(|v| (3.0 * v.powf(-0.5)).ln())
            .collect();
        assert!((ols_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
    }
}
