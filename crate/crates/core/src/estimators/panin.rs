//! Intervals from the surrogate-error bound
//! `|S^f - S| <= min{1, E + 2√S^f, E + 2√(1 - S^f)} · E`, with `E` the root
//! relative MSE of the surrogate.
//!
//! The interval is `[Ŝ^f - B̂, Ŝ^f + B̂]` widened by a normal quantile times a
//! delta-method standard error of each endpoint. The endpoints are smooth
//! functions of four term means on the same `n` base points:
//! `A^f` and `V^f` (Jansen on surrogate pairs), `M` and `V*` (MSE of `f`
//! and variance of `f*`). The plug-in uses `S̃ = clip(Ŝ^f, 0, 1)`; its
//! derivative is taken as zero where the clip is active.

use super::floodgate::base_predictions;
use super::{check_alpha, clip01, Diagnostics, IntervalResult, MethodTag};
use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::space::{resample_conditional, InputSpace, ResampleBlock};
use crate::stats::{nonnegative_variance, variance_terms, z_upper, Moments};
use crate::surrogate::Surrogate;

#[derive(Clone, Debug, PartialEq)]
pub struct PaninTerms {
    pub input_index: usize,
    /// `½(f_i - f(x̃_i, z_i))²`
    pub a_f: Vec<f64>,
    pub v_f: Vec<f64>,
    /// `(f*_i - f_i)²`
    pub m: Vec<f64>,
    pub v_star: Vec<f64>,
    pub batch_ids: Option<Vec<u32>>,
}

/// Terms for input `j`: `n` model outputs from the dataset and `2n`
/// surrogate calls (`n` if the dataset carries surrogate outputs).
pub fn panin_terms(
    data: &EvaluatedDataset,
    s: &dyn Surrogate,
    space: &InputSpace,
    j: usize,
    seed: u64,
) -> Result<PaninTerms> {
    if data.rows() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 evaluated points, got {}",
            data.rows()
        )));
    }
    let base = base_predictions(data, s)?;
    let block = resample_conditional(space, &data.inputs, j, 1, seed)?;
    panin_terms_from_block(data, &base, s, &block)
}

pub(crate) fn panin_terms_from_block(
    data: &EvaluatedDataset,
    base: &[f64],
    s: &dyn Surrogate,
    block: &ResampleBlock,
) -> Result<PaninTerms> {
    let n = data.rows();
    if base.len() != n || block.rows() != n {
        return Err(Error::invalid("terms need one prediction and one resample row per point"));
    }
    let j = block.input_index;
    let mut row = vec![0.0; data.dim()];
    let a_f = (0..n)
        .map(|i| {
            row.copy_from_slice(data.inputs.row(i));
            row[j] = block.draws(i)[0];
            0.5 * (base[i] - s.predict(&row)).powi(2)
        })
        .collect();
    Ok(PaninTerms {
        input_index: j,
        a_f,
        v_f: variance_terms(base),
        m: data
            .outputs
            .iter()
            .zip(base)
            .map(|(y, f)| (y - f).powi(2))
            .collect(),
        v_star: variance_terms(&data.outputs),
        batch_ids: data.batch_ids().map(<[u32]>::to_vec),
    })
}

/// Which term of the minimum is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Branch {
    One,
    Lower,
    Upper,
}

/// `min{1, e + 2√s, e + 2√(1 - s)} · e` for `s` in `[0, 1]`.
pub fn panin_bound(e: f64, s: f64) -> f64 {
    bound(e, s).0
}

fn bound(e: f64, s: f64) -> (f64, Branch) {
    let lo = e + 2.0 * s.sqrt();
    let hi = e + 2.0 * (1.0 - s).sqrt();
    let (g, b) = if 1.0 <= lo && 1.0 <= hi {
        (1.0, Branch::One)
    } else if lo <= hi {
        (lo, Branch::Lower)
    } else {
        (hi, Branch::Upper)
    };
    (g * e, b)
}

pub fn panin_interval(terms: &PaninTerms, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let rows = terms.a_f.len();
    if [terms.v_f.len(), terms.m.len(), terms.v_star.len()]
        .iter()
        .any(|&l| l != rows)
    {
        return Err(Error::invalid("Panin term arrays differ in length"));
    }
    let stacked: Vec<[f64; 4]> = (0..rows)
        .map(|i| [terms.a_f[i], terms.v_f[i], terms.m[i], terms.v_star[i]])
        .collect();
    let mom = Moments::from_terms(&stacked, terms.batch_ids.as_deref())?;
    let [a, vf, m, vs] = mom.mean;
    let z = z_upper(alpha / 2.0);
    let mut diagnostics = Diagnostics {
        terms: vec!["a_f".into(), "v_f".into(), "m".into(), "v_star".into()],
        term_means: mom.mean.to_vec(),
        covariance: mom.cov_rows(),
        s_lower: 0.0,
        s_upper: 0.0,
        n: mom.n,
        rows,
        k: Some(1),
        alpha,
        z,
        batched: mom.batched,
        degenerate: false,
        extras: Default::default(),
    };
    if vs == 0.0 || vf == 0.0 {
        diagnostics.degenerate = true;
        return Ok(IntervalResult {
            input_index: terms.input_index,
            method: MethodTag::Panin,
            lower: 0.0,
            upper: 1.0,
            point_lower: 0.0,
            point_upper: 1.0,
            diagnostics,
        });
    }
    let s_f = a / vf;
    let e = (m / vs).sqrt();
    let s_t = clip01(s_f);
    let (b, branch) = bound(e, s_t);

    let interior = s_f > 0.0 && s_f < 1.0;
    let (db_de, db_ds) = match branch {
        Branch::One => (1.0, 0.0),
        Branch::Lower => (
            2.0 * e + 2.0 * s_t.sqrt(),
            if interior { e / s_t.sqrt() } else { 0.0 },
        ),
        Branch::Upper => (
            2.0 * e + 2.0 * (1.0 - s_t).sqrt(),
            if interior { -e / (1.0 - s_t).sqrt() } else { 0.0 },
        ),
    };
    // Gradients with respect to (Ā^f, V̄^f, M̄, V̄*).
    let g_s = [1.0 / vf, -s_f / vf, 0.0, 0.0];
    let g_e = if e > 0.0 {
        [0.0, 0.0, 1.0 / (2.0 * e * vs), -e / (2.0 * vs)]
    } else {
        [0.0; 4]
    };
    let g_b: [f64; 4] = std::array::from_fn(|p| db_de * g_e[p] + db_ds * g_s[p]);
    let g_lower: [f64; 4] = std::array::from_fn(|p| g_s[p] - g_b[p]);
    let g_upper: [f64; 4] = std::array::from_fn(|p| g_s[p] + g_b[p]);
    let scale = |g: &[f64; 4]| {
        (0..4)
            .map(|p| g[p] * g[p] * mom.cov[p][p])
            .sum::<f64>()
    };
    let s_l = nonnegative_variance(mom.quadratic_form(&g_lower), scale(&g_lower), "panin lower")
        .sqrt();
    let s_u = nonnegative_variance(mom.quadratic_form(&g_upper), scale(&g_upper), "panin upper")
        .sqrt();
    let root_n = (mom.n as f64).sqrt();

    diagnostics.s_lower = s_l;
    diagnostics.s_upper = s_u;
    let x = &mut diagnostics.extras;
    x.insert("surrogate_index".into(), s_f);
    x.insert("relative_rmse".into(), e);
    x.insert("bound".into(), b);
    x.insert(
        "bound_branch".into(),
        match branch {
            Branch::One => 0.0,
            Branch::Lower => 1.0,
            Branch::Upper => 2.0,
        },
    );
    Ok(IntervalResult {
        input_index: terms.input_index,
        method: MethodTag::Panin,
        lower: clip01(s_f - b - z * s_l / root_n),
        upper: clip01(s_f + b + z * s_u / root_n),
        point_lower: s_f - b,
        point_upper: s_f + b,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{build_surrogate_pairs, spf_surrogate};
    use crate::models::{AdditiveLinear, Model};
    use crate::space::sample_iid;
    use crate::surrogate::{LinearSurrogate, ModelSurrogate};

    #[test]
    fn bound_branches() {
        assert_eq!(panin_bound(0.0, 0.3), 0.0);
        assert_eq!(panin_bound(1.0, 0.5), 1.0);
        // e = 0.1, s = 0.01: e + 2√s = 0.3 is the minimum.
        assert!((panin_bound(0.1, 0.01) - 0.03).abs() < 1e-15);
        // e = 0.1, s = 0.99: e + 2√(1-s) = 0.3.
        assert!((panin_bound(0.1, 0.99) - 0.03).abs() < 1e-15);
        assert_eq!(panin_bound(0.5, 0.5), 0.5);
    }

    #[test]
    fn population_width_exceeds_floodgate_width() {
        // Ê² < 2·min{...}·Ê on a grid with 0 < Ê < 1 and 0 < S < 1.
        for i in 1..100 {
            for k in 1..100 {
                let e = i as f64 / 100.0;
                let s = k as f64 / 100.0;
                assert!(e * e < 2.0 * panin_bound(e, s), "e={e} s={s}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = AdditiveLinear::new(vec![1.0, 2.0, 0.5]).unwrap();
        let space = f.input_space();
        let data = EvaluatedDataset::evaluate(&f, sample_iid(&space, 300, 7).unwrap()).unwrap();
        let s = LinearSurrogate {
            intercept: 0.05,
            coeffs: vec![1.2, 1.8, 0.7],
        };
        let t = panin_terms(&data, &s, &space, 1, 8).unwrap();
        let r = panin_interval(&t, 0.05).unwrap();
        let mom = Moments::<4>::from_terms(
            &(0..300)
                .map(|i| [t.a_f[i], t.v_f[i], t.m[i], t.v_star[i]])
                .collect::<Vec<_>>(),
            None,
        )
        .unwrap();
        let endpoint = |mu: [f64; 4], sign: f64| {
            let sf = mu[0] / mu[1];
            let e = (mu[2] / mu[3]).sqrt();
            sf + sign * panin_bound(e, sf.clamp(0.0, 1.0))
        };
        for (sign, sd) in [(-1.0, r.diagnostics.s_lower), (1.0, r.diagnostics.s_upper)] {
            let mut g = [0.0; 4];
            for p in 0..4 {
                let h = 1e-6 * mom.mean[p].abs();
                let mut up = mom.mean;
                let mut dn = mom.mean;
                up[p] += h;
                dn[p] -= h;
                g[p] = (endpoint(up, sign) - endpoint(dn, sign)) / (2.0 * h);
            }
            let fd = mom.quadratic_form(&g).sqrt();
            assert!((fd - sd).abs() < 1e-5 * sd, "{fd} vs {sd}");
        }
    }

    #[test]
    fn exact_surrogate_reduces_to_surrogate_spf() {
        let f = AdditiveLinear::new(vec![1.0, 2.0]).unwrap();
        let space = f.input_space();
        let seed = 21;
        let data = EvaluatedDataset::evaluate(&f, sample_iid(&space, 200, seed).unwrap()).unwrap();
        let s = ModelSurrogate(f.clone());
        let pairs = build_surrogate_pairs(&s, &space, 200, seed).unwrap();
        for j in 0..2 {
            let p = panin_interval(&panin_terms(&data, &s, &space, j, seed).unwrap(), 0.05).unwrap();
            let q = spf_surrogate(&pairs, j, 0.05).unwrap();
            assert_eq!(p.diagnostics.extras["bound"], 0.0);
            assert!((p.lower - q.lower).abs() < 1e-12);
            assert!((p.upper - q.upper).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_error_gives_unit_interval() {
        // A surrogate uncorrelated with the model and of equal spread: E ≈ 1.4.
        let f = AdditiveLinear::new(vec![1.0, 0.0001]).unwrap();
        let space = f.input_space();
        let data = EvaluatedDataset::evaluate(&f, sample_iid(&space, 500, 2).unwrap()).unwrap();
        let s = LinearSurrogate {
            intercept: 0.0,
            coeffs: vec![0.0, 10000.0],
        };
        let r = panin_interval(&panin_terms(&data, &s, &space, 0, 3).unwrap(), 0.05).unwrap();
        assert_eq!((r.lower, r.upper), (0.0, 1.0));
    }
}
