//! Width-[2, 1] Kolmogorov-Arnold network.
//!
//! Two learnable univariate activations, one per input, summed at the single
//! output node:
//!
//! ```text
//! ŷ = A1(T̄) + A2(k̄),   A(x) = w·silu(x) + Σ_i c_i B_i(x)
//! ```
//!
//! `B_i` are degree-p B-splines on a uniform grid of G intervals, extended by
//! p knots on each side, giving G + p basis functions. Spline inputs are
//! clamped to the grid domain; the silu term always sees the raw input.

use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{HorizonPair, NormalizationParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    pub lo: f64,
    pub hi: f64,
    pub intervals: usize,
    /// Polynomial degree of the basis (3 = cubic).
    pub order: usize,
}

impl Default for SplineGrid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            intervals: 4,
            order: 3,
        }
    }
}

impl SplineGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::InvalidModel(format!(
                "grid domain [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        if self.intervals == 0 {
            return Err(Error::InvalidModel("grid needs at least one interval".into()));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.intervals + self.order
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.intervals as f64
    }

    /// Extended uniform knot vector, `G + 2p + 1` entries.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        let p = self.order as f64;
        (0..=self.intervals + 2 * self.order)
            .map(|j| self.lo + (j as f64 - p) * h)
            .collect()
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// The `p + 1` basis functions that can be nonzero at `x`, and the index of
/// the first of them.
pub fn bspline_nonzero(grid: &SplineGrid, x: f64) -> (usize, Vec<f64>) {
    let p = grid.order;
    let g = grid.intervals;
    let h = grid.spacing();
    let x = grid.clamp(x);
    // interval inside the domain; x = hi belongs to the last one
    let cell = (((x - grid.lo) / h).floor() as usize).min(g - 1);
    let span = cell + p;
    let knot = |j: usize| grid.lo + (j as f64 - p as f64) * h;

    let mut n = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = x - knot(span + 1 - j);
        right[j] = knot(span + j) - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    (cell, n)
}

/// All `G + p` basis values at `x` (clamped to the grid domain).
pub fn bspline_basis(grid: &SplineGrid, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_basis()];
    let (first, vals) = bspline_nonzero(grid, x);
    out[first..first + vals.len()].copy_from_slice(&vals);
    out
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub w_silu: f64,
    pub coeffs: Vec<f64>,
    pub grid: SplineGrid,
}

impl Activation {
    pub fn zeros(grid: SplineGrid) -> Self {
        Self {
            w_silu: 0.0,
            coeffs: vec![0.0; grid.n_basis()],
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.coeffs.len() != self.grid.n_basis() {
            return Err(Error::InvalidModel(format!(
                "expected {} spline coefficients, got {}",
                self.grid.n_basis(),
                self.coeffs.len()
            )));
        }
        if !self.w_silu.is_finite() || self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite activation parameter".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (first, b) = bspline_nonzero(&self.grid, x);
        let spline: f64 = b
            .iter()
            .zip(&self.coeffs[first..])
            .map(|(bi, ci)| bi * ci)
            .sum();
        self.w_silu * silu(x) + spline
    }

    /// `∂A/∂θ` for θ = (w_silu, c_0..c_{G+p-1}), written into `out`.
    fn param_gradient(&self, x: f64, scale: f64, out: &mut [f64]) {
        out[0] += scale * silu(x);
        let (first, b) = bspline_nonzero(&self.grid, x);
        for (o, bi) in out[1 + first..].iter_mut().zip(&b) {
            *o += scale * bi;
        }
    }

    fn n_params(&self) -> usize {
        1 + self.coeffs.len()
    }
}

/// Mean |A(x)| over the inputs.
pub fn activation_l1(a: &Activation, inputs: &[f64]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(inputs.iter().map(|&x| a.eval(x).abs()).sum::<f64>() / inputs.len() as f64)
}

/// Shannon entropy of the magnitudes normalized to a distribution;
/// `0·ln 0 = 0`. All-zero magnitudes give 0.
pub fn entropy(magnitudes: &[f64]) -> f64 {
    let total: f64 = magnitudes.iter().sum();
    if total <= 0.0 {
        warn!("all activation magnitudes are zero; entropy regularizer inactive");
        return 0.0;
    }
    -magnitudes
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let p = m / total;
            p * p.ln()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(rename = "horizon_N")]
    pub horizon_n: usize,
    #[serde(rename = "E")]
    pub last_cycle: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanModel {
    /// Acts on the normalized temperature T̄.
    pub a1: Activation,
    /// Acts on the normalized cycle number k̄.
    pub a2: Activation,
    pub norm: NormalizationParams,
    pub meta: ModelMeta,
}

impl KanModel {
    /// Silu weight 1 and spline coefficients drawn from U(−0.1, 0.1).
    pub fn init(grid: SplineGrid, norm: NormalizationParams, meta: ModelMeta) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let mut act = || Activation {
            w_silu: 1.0,
            coeffs: (0..grid.n_basis()).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            grid,
        };
        let a1 = act();
        let a2 = act();
        Self { a1, a2, norm, meta }
    }

    pub fn zeros(grid: SplineGrid, norm: NormalizationParams, meta: ModelMeta) -> Self {
        Self {
            a1: Activation::zeros(grid),
            a2: Activation::zeros(grid),
            norm,
            meta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.a1.validate()?;
        self.a2.validate()?;
        if self.a1.grid != self.a2.grid {
            return Err(Error::InvalidModel("activations must share one grid".into()));
        }
        Ok(())
    }

    pub fn forward(&self, t_bar: f64, k_bar: f64) -> f64 {
        self.a1.eval(t_bar) + self.a2.eval(k_bar)
    }

    pub fn n_params(&self) -> usize {
        self.a1.n_params() + self.a2.n_params()
    }

    /// Flat parameter vector `[w1, c1.., w2, c2..]`.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for a in [&self.a1, &self.a2] {
            v.push(a.w_silu);
            v.extend_from_slice(&a.coeffs);
        }
        v
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_params(), "parameter length mismatch");
        let n1 = self.a1.n_params();
        for (a, chunk) in [&mut self.a1, &mut self.a2]
            .into_iter()
            .zip([&theta[..n1], &theta[n1..]])
        {
            a.w_silu = chunk[0];
            a.coeffs.copy_from_slice(&chunk[1..]);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        let model = doc.into_model();
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Weights of the composite objective
/// `ℓ = ℓ_pred + λ(ν₁|𝔸|₁ + ν₂ S(𝔸))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub nu1: f64,
    pub nu2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub pred: f64,
    /// |A1|₁ + |A2|₁
    pub l1: f64,
    pub entropy: f64,
}

/// Loss terms and their (sub)gradient w.r.t. [`KanModel::params`].
pub fn loss_and_gradient(
    model: &KanModel,
    batch: &[HorizonPair],
    weights: &LossWeights,
) -> Result<(LossTerms, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let n1 = model.a1.n_params();
    let mut grad = vec![0.0; model.n_params()];
    let mut pred = 0.0;
    let mut l1 = [0.0; 2];
    let mut sign_grad = [vec![0.0; n1], vec![0.0; model.a2.n_params()]];

    for p in batch {
        let y1 = model.a1.eval(p.t_bar);
        let y2 = model.a2.eval(p.k_bar);
        let r = y1 + y2 - p.target;
        pred += r * r;
        let (g1, g2) = grad.split_at_mut(n1);
        model.a1.param_gradient(p.t_bar, 2.0 * r / n, g1);
        model.a2.param_gradient(p.k_bar, 2.0 * r / n, g2);

        l1[0] += y1.abs();
        l1[1] += y2.abs();
        // subgradient of |·| taken as 0 at 0
        if y1 != 0.0 {
            model.a1.param_gradient(p.t_bar, y1.signum() / n, &mut sign_grad[0]);
        }
        if y2 != 0.0 {
            model.a2.param_gradient(p.k_bar, y2.signum() / n, &mut sign_grad[1]);
        }
    }
    pred /= n;
    l1[0] /= n;
    l1[1] /= n;
    let l1_total = l1[0] + l1[1];
    let s = entropy(&l1);

    if weights.lambda != 0.0 {
        // dS/dl_j = −(ln p_j + S)/L, taken as 0 for a zero magnitude
        let ds = |lj: f64| {
            if lj > 0.0 && l1_total > 0.0 {
                -((lj / l1_total).ln() + s) / l1_total
            } else {
                0.0
            }
        };
        for (j, sg) in sign_grad.iter().enumerate() {
            let coef = weights.lambda * (weights.nu1 + weights.nu2 * ds(l1[j]));
            let off = if j == 0 { 0 } else { n1 };
            for (g, d) in grad[off..].iter_mut().zip(sg) {
                *g += coef * d;
            }
        }
    }

    let total = pred + weights.lambda * (weights.nu1 * l1_total + weights.nu2 * s);
    Ok((
        LossTerms {
            total,
            pred,
            l1: l1_total,
            entropy: s,
        },
        grad,
    ))
}

/// Gradient of the mean squared prediction error alone.
pub fn pred_gradient(model: &KanModel, batch: &[HorizonPair]) -> Result<Vec<f64>> {
    let zero = LossWeights {
        lambda: 0.0,
        nu1: 0.0,
        nu2: 0.0,
    };
    loss_and_gradient(model, batch, &zero).map(|(_, g)| g)
}

mod f17 {
    //! Floats written with 17 significant digits.
    use serde::Serializer;
    use serde_json::value::RawValue;

    fn raw(x: f64) -> Box<RawValue> {
        RawValue::from_string(format!("{x:.16e}")).expect("formatted float is valid JSON")
    }

    pub fn one<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&raw(*x), s)
    }

    pub fn many<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Box<RawValue>> = xs.iter().map(|&x| raw(x)).collect();
        serde::Serialize::serialize(&v, s)
    }
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    #[serde(serialize_with = "f17::one")]
    lo: f64,
    #[serde(serialize_with = "f17::one")]
    hi: f64,
    intervals: usize,
    order: usize,
}

#[derive(Serialize, Deserialize)]
struct ActivationDoc {
    #[serde(serialize_with = "f17::one")]
    w_silu: f64,
    #[serde(serialize_with = "f17::many")]
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormDoc {
    #[serde(serialize_with = "f17::one")]
    t_min: f64,
    #[serde(serialize_with = "f17::one")]
    t_max: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    grid: GridDoc,
    a1: ActivationDoc,
    a2: ActivationDoc,
    norm: NormDoc,
    meta: ModelMeta,
}

impl From<&KanModel> for ModelDoc {
    fn from(m: &KanModel) -> Self {
        let g = m.a1.grid;
        let act = |a: &Activation| ActivationDoc {
            w_silu: a.w_silu,
            coeffs: a.coeffs.clone(),
        };
        Self {
            grid: GridDoc {
                lo: g.lo,
                hi: g.hi,
                intervals: g.intervals,
                order: g.order,
            },
            a1: act(&m.a1),
            a2: act(&m.a2),
            norm: NormDoc {
                t_min: m.norm.t_min,
                t_max: m.norm.t_max,
            },
            meta: m.meta,
        }
    }
}

impl ModelDoc {
    fn into_model(self) -> KanModel {
        let grid = SplineGrid {
            lo: self.grid.lo,
            hi: self.grid.hi,
            intervals: self.grid.intervals,
            order: self.grid.order,
        };
        let act = |a: ActivationDoc| Activation {
            w_silu: a.w_silu,
            coeffs: a.coeffs,
            grid,
        };
        KanModel {
            a1: act(self.a1),
            a2: act(self.a2),
            norm: NormalizationParams {
                t_min: self.norm.t_min,
                t_max: self.norm.t_max,
            },
            meta: self.meta,
        }
    }
}
