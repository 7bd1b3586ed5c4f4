//! Test functions with closed-form total-order indices.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;

use super::Model;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::space::{InputMarginal, InputSpace};

/// `sin x₁ + a sin² x₂ + b x₃⁴ sin x₁` on `(-π, π)³`.
#[derive(Clone, Debug)]
pub struct Ishigami {
    pub a: f64,
    pub b: f64,
}

impl Ishigami {
    pub fn new(a: f64, b: f64) -> Self {
        Ishigami { a, b }
    }
}

impl Default for Ishigami {
    fn default() -> Self {
        Ishigami::new(7.0, 0.1)
    }
}

impl Model for Ishigami {
    fn name(&self) -> &str {
        "ishigami"
    }

    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let s1 = x[0].sin();
        let s2 = x[1].sin();
        s1 + self.a * s2 * s2 + self.b * x[2].powi(4) * s1
    }

    fn input_space(&self) -> InputSpace {
        InputSpace::new(
            (1..=3)
                .map(|i| InputMarginal::uniform(format!("x_{i}"), -PI, PI))
                .collect(),
        )
        .expect("static space")
    }

    fn total_indices(&self) -> Option<Vec<f64>> {
        let (a, b) = (self.a, self.b);
        let pi4 = PI.powi(4);
        let pi8 = PI.powi(8);
        let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
        let total = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
        Some(vec![(v1 + v13) / total, v2 / total, v13 / total])
    }
}

/// `Σ aᵢ xᵢ` on the unit cube; input `j` has index `aⱼ² / Σ aᵢ²`.
#[derive(Clone, Debug)]
pub struct AdditiveLinear {
    coeffs: Vec<f64>,
}

impl AdditiveLinear {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("additive model needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("additive coefficients must be finite"));
        }
        Ok(AdditiveLinear { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// All-zero coefficients: a constant model whose indices are 0 by convention.
    pub fn is_degenerate(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

impl Model for AdditiveLinear {
    fn name(&self) -> &str {
        "additive"
    }

    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    fn input_space(&self) -> InputSpace {
        InputSpace::unit_cube(self.dim()).expect("d >= 1")
    }

    fn total_indices(&self) -> Option<Vec<f64>> {
        let total: f64 = self.coeffs.iter().map(|a| a * a).sum();
        Some(
            self.coeffs
                .iter()
                .map(|a| if total == 0.0 { 0.0 } else { a * a / total })
                .collect(),
        )
    }
}

/// Same value everywhere. Every index is 0.
#[derive(Clone, Debug)]
pub struct Constant {
    pub d: usize,
    pub value: f64,
}

impl Model for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn input_space(&self) -> InputSpace {
        InputSpace::unit_cube(self.d).expect("d >= 1")
    }

    fn total_indices(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.d])
    }
}

/// Seeded sparse high-dimensional test function on the unit cube:
///
/// ```text
/// f(x) = Σ_{j ∈ A} a_j x_j + Σ_{(p,q) ∈ P} c_pq (x_p - ½)(x_q - ½)
/// ```
///
/// `A` holds `max(2, d/5)` active coordinates chosen by a seeded shuffle, each
/// with `|a_j|` uniform in `[0.5, 2]` and a random sign. `P` holds
/// `max(1, d/10)` distinct pairs of active coordinates with `|c_pq|` uniform in
/// `[1, 4]`. Interaction terms are centered, so they are orthogonal to every
/// main effect and to each other, giving
///
/// ```text
/// Var f = Σ a_j²/12 + Σ c_pq²/144,   S_j = (a_j²/12 + Σ_{pairs ∋ j} c²/144) / Var f.
/// ```
///
/// Evaluation costs `O(|A| + |P|)` operations.
#[derive(Clone, Debug)]
pub struct SyntheticHighDim {
    d: usize,
    seed: u64,
    linear: Vec<(usize, f64)>,
    pairs: Vec<(usize, usize, f64)>,
}

impl SyntheticHighDim {
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        if d < 10 {
            return Err(Error::invalid("synthetic high-dimensional model needs d >= 10"));
        }
        let mut rng = SeedStream::new(seed).rng("synthetic-highdim", d as u64);
        let mut coords: Vec<usize> = (0..d).collect();
        coords.shuffle(&mut rng);
        let mut active = coords[..(d / 5).max(2)].to_vec();
        active.sort_unstable();
        let signed = |lo: f64, hi: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let mag = rng.random_range(lo..hi);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        };
        let linear = active
            .iter()
            .map(|&j| (j, signed(0.5, 2.0, &mut rng)))
            .collect();
        let mut candidates = Vec::new();
        for (i, &p) in active.iter().enumerate() {
            for &q in &active[i + 1..] {
                candidates.push((p, q));
            }
        }
        candidates.shuffle(&mut rng);
        let pairs = candidates
            .into_iter()
            .take((d / 10).max(1))
            .map(|(p, q)| (p, q, signed(1.0, 4.0, &mut rng)))
            .collect();
        Ok(SyntheticHighDim {
            d,
            seed,
            linear,
            pairs,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn active_inputs(&self) -> Vec<usize> {
        self.linear.iter().map(|&(j, _)| j).collect()
    }
}

impl Model for SyntheticHighDim {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|&(j, a)| a * x[j]).sum();
        let inter: f64 = self
            .pairs
            .iter()
            .map(|&(p, q, c)| c * (x[p] - 0.5) * (x[q] - 0.5))
            .sum();
        lin + inter
    }

    fn input_space(&self) -> InputSpace {
        InputSpace::unit_cube(self.d).expect("d >= 10")
    }

    fn total_indices(&self) -> Option<Vec<f64>> {
        let mut parts = vec![0.0; self.d];
        for &(j, a) in &self.linear {
            parts[j] += a * a / 12.0;
        }
        let mut total: f64 = parts.iter().sum();
        for &(p, q, c) in &self.pairs {
            let v = c * c / 144.0;
            parts[p] += v;
            parts[q] += v;
            total += v;
        }
        Some(parts.into_iter().map(|v| v / total).collect())
    }
}
