//! Closed-form extraction from the learned cycle activation A2(k̄).
//!
//! Each dictionary entry is fit by a global stage (coarse parameter grid, or
//! a 1-D scan when the model is linear in the remaining parameters) followed
//! by damped Gauss-Newton refinement, and scored by R².

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::KanModel;

pub const DEFAULT_SAMPLES: usize = 200;

/// R² values closer than this count as tied when ranking. The three-parameter
/// forms contain the affine one as a limit, so on near-affine data they win
/// by amounts far below anything the fit can resolve.
pub const R2_TIE_TOL: f64 = 1e-5;
/// Tie tolerance between the two sign branches of one power fit.
const BRANCH_TIE_TOL: f64 = 1e-12;

/// Coarse grid for power forms: `a, b ∈ [−20, 20]`, 200 × 200.
const POWER_GRID_RANGE: f64 = 20.0;
const POWER_GRID_STEPS: usize = 200;
/// Local minima of the coarse grid handed to the refinement stage.
const REFINE_STARTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCurve {
    pub k_bar: Vec<f64>,
    pub values: Vec<f64>,
}

impl ActivationCurve {
    pub fn new(k_bar: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if k_bar.len() != values.len() {
            return Err(Error::InvalidCurve("length mismatch".into()));
        }
        if k_bar.len() < 2 {
            return Err(Error::InvalidCurve("need at least 2 samples".into()));
        }
        if k_bar.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCurve("k_bar must be strictly increasing".into()));
        }
        if values.iter().chain(&k_bar).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite sample".into()));
        }
        Ok(Self { k_bar, values })
    }

    pub fn len(&self) -> usize {
        self.k_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_bar.is_empty()
    }

    /// The curve with a constant subtracted.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            k_bar: self.k_bar.clone(),
            values: self.values.iter().map(|v| v - shift).collect(),
        }
    }
}

/// A2 on a uniform k̄ grid over [0, 1].
pub fn sample_a2(model: &KanModel, n_samples: usize) -> Result<ActivationCurve> {
    if n_samples < 2 {
        return Err(Error::InvalidCurve("need at least 2 samples".into()));
    }
    let last = (n_samples - 1) as f64;
    let k_bar: Vec<f64> = (0..n_samples).map(|i| i as f64 / last).collect();
    let values = k_bar.iter().map(|&k| model.a2.eval(k)).collect();
    ActivationCurve::new(k_bar, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    /// a + b·k̄
    Affine,
    /// (a − b·k̄)ⁿ
    Power(u8),
    /// a·e^{b·k̄} + c
    Exp,
    /// a·ln(b·k̄ + 1) + c
    Log,
}

impl FitForm {
    pub const DICTIONARY: [FitForm; 6] = [
        FitForm::Affine,
        FitForm::Exp,
        FitForm::Log,
        FitForm::Power(2),
        FitForm::Power(3),
        FitForm::Power(4),
    ];

    pub fn n_params(self) -> usize {
        match self {
            FitForm::Affine | FitForm::Power(_) => 2,
            FitForm::Exp | FitForm::Log => 3,
        }
    }

    pub fn degree(self) -> u8 {
        match self {
            FitForm::Affine => 1,
            FitForm::Power(n) => n,
            FitForm::Exp | FitForm::Log => u8::MAX,
        }
    }

    pub fn name(self) -> String {
        match self {
            FitForm::Affine => "affine".into(),
            FitForm::Power(n) => format!("power_{n}"),
            FitForm::Exp => "exp".into(),
            FitForm::Log => "log".into(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "affine" => Some(FitForm::Affine),
            "exp" => Some(FitForm::Exp),
            "log" => Some(FitForm::Log),
            _ => name
                .strip_prefix("power_")
                .and_then(|n| n.parse().ok())
                .map(FitForm::Power),
        }
    }

    pub fn eval(self, p: &[f64], k: f64) -> f64 {
        match self {
            FitForm::Affine => p[0] + p[1] * k,
            FitForm::Power(n) => (p[0] - p[1] * k).powi(i32::from(n)),
            FitForm::Exp => p[0] * (p[1] * k).exp() + p[2],
            FitForm::Log => p[0] * (p[1] * k).ln_1p() + p[2],
        }
    }

    /// Value and gradient w.r.t. the parameters.
    fn eval_grad(self, p: &[f64], k: f64, g: &mut [f64]) -> f64 {
        match self {
            FitForm::Affine => {
                g[0] = 1.0;
                g[1] = k;
                p[0] + p[1] * k
            }
            FitForm::Power(n) => {
                let base = p[0] - p[1] * k;
                let n = i32::from(n);
                let d = f64::from(n) * base.powi(n - 1);
                g[0] = d;
                g[1] = -d * k;
                base.powi(n)
            }
            FitForm::Exp => {
                let e = (p[1] * k).exp();
                g[0] = e;
                g[1] = p[0] * k * e;
                g[2] = 1.0;
                p[0] * e + p[2]
            }
            FitForm::Log => {
                let arg = p[1] * k + 1.0;
                g[0] = arg.ln();
                g[1] = p[0] * k / arg;
                g[2] = 1.0;
                p[0] * arg.ln() + p[2]
            }
        }
    }

    fn admissible(self, p: &[f64]) -> bool {
        p.iter().all(|v| v.is_finite()) && (self != FitForm::Log || p[1] > -1.0)
    }
}

impl fmt::Display for FitForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicFit {
    pub form: FitForm,
    pub params: Vec<f64>,
    pub r2: f64,
}

impl SymbolicFit {
    pub fn eval(&self, k: f64) -> f64 {
        self.form.eval(&self.params, k)
    }

    /// Human-readable formula over the normalized cycle axis.
    pub fn formula(&self) -> String {
        let p = &self.params;
        let body = match self.form {
            FitForm::Affine => format!("{:.6} + {:.6}*kbar", p[0], p[1]),
            FitForm::Power(n) => format!("({:.6} - {:.6}*kbar)^{n}", p[0], p[1]),
            FitForm::Exp => format!("{:.6}*exp({:.6}*kbar) + {:.6}", p[0], p[1], p[2]),
            FitForm::Log => format!("{:.6}*ln({:.6}*kbar + 1) + {:.6}", p[0], p[1], p[2]),
        };
        format!("A2(kbar) = {body}, kbar in [0, 1]")
    }

    /// For power forms: `|a − b·k̄|` stays away from zero on [0, 1].
    pub fn base_nonvanishing(&self) -> bool {
        match self.form {
            FitForm::Power(_) => {
                let (a, b) = (self.params[0], self.params[1]);
                let end = a - b;
                a != 0.0 && end != 0.0 && a.signum() == end.signum()
            }
            _ => true,
        }
    }
}

/// `1 − SS_res/SS_tot`. A constant target gives 1 for an exact fit and −∞
/// otherwise.
pub fn r2(y_true: &[f64], y_fit: &[f64]) -> Result<f64> {
    if y_true.len() != y_fit.len() || y_true.len() < 2 {
        return Err(Error::InvalidCurve(
            "r2 needs two equal-length series of at least 2 points".into(),
        ));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = y_true.iter().zip(y_fit).map(|(y, f)| (y - f).powi(2)).sum();
    if ss_tot == 0.0 {
        warn!("r2: target has zero variance");
        return Ok(if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - ss_res / ss_tot)
}

fn sse(form: FitForm, p: &[f64], k: &[f64], y: &[f64]) -> f64 {
    if !form.admissible(p) {
        return f64::INFINITY;
    }
    let s: f64 = k
        .iter()
        .zip(y)
        .map(|(&k, &y)| (form.eval(p, k) - y).powi(2))
        .sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Solves the small dense system `A x = b` by Gaussian elimination with
/// partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (row, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[col + 1 + row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Damped Gauss-Newton (Levenberg-Marquardt) refinement of `p0`.
fn refine(form: FitForm, p0: &[f64], k: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut cost = sse(form, &p, k, y);
    if !cost.is_finite() {
        return (p, cost);
    }
    let mut mu = 1e-3;
    let mut g = vec![0.0; n];
    for _ in 0..500 {
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (&ki, &yi) in k.iter().zip(y) {
            let r = form.eval_grad(&p, ki, &mut g) - yi;
            for a in 0..n {
                jtr[a] += g[a] * r;
                for b in 0..n {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut sys = jtj.clone();
            for (a, row) in sys.iter_mut().enumerate() {
                row[a] += mu * jtj[a][a].max(1e-12);
            }
            let Some(delta) = solve(sys, jtr.iter().map(|v| -v).collect()) else {
                mu *= 4.0;
                continue;
            };
            let cand: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let c = sse(form, &cand, k, y);
            if c < cost {
                let small = delta
                    .iter()
                    .zip(&p)
                    .all(|(d, v)| d.abs() <= 1e-15 * v.abs().max(1e-300));
                p = cand;
                cost = c;
                mu = (mu / 3.0).max(1e-15);
                improved = !small;
                break;
            }
            mu *= 4.0;
        }
        if !improved || cost == 0.0 {
            break;
        }
    }
    (p, cost)
}

/// Least squares for `y ≈ c0·u + c1` with fixed basis `u`.
fn linear_two(u: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = u.len() as f64;
    let su: f64 = u.iter().sum();
    let sy: f64 = y.iter().sum();
    let suu: f64 = u.iter().map(|v| v * v).sum();
    let suy: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * suu - su * su;
    if det.abs() <= 1e-14 * (n * suu).max(1e-300) {
        return None;
    }
    let c0 = (n * suy - su * sy) / det;
    let c1 = (sy - c0 * su) / n;
    Some((c0, c1))
}

fn finish(form: FitForm, params: Vec<f64>, curve: &ActivationCurve) -> Result<SymbolicFit> {
    if !form.admissible(&params) {
        return Err(Error::FitFailed {
            form: form.name(),
            reason: "no admissible parameters".into(),
        });
    }
    let fitted: Vec<f64> = curve.k_bar.iter().map(|&k| form.eval(&params, k)).collect();
    let r2 = r2(&curve.values, &fitted)?;
    Ok(SymbolicFit { form, params, r2 })
}

fn subsample(curve: &ActivationCurve, max: usize) -> (Vec<f64>, Vec<f64>) {
    let n = curve.len();
    if n <= max {
        return (curve.k_bar.clone(), curve.values.clone());
    }
    (0..max)
        .map(|i| {
            let j = i * (n - 1) / (max - 1);
            (curve.k_bar[j], curve.values[j])
        })
        .unzip()
}

pub fn fit_affine(curve: &ActivationCurve) -> Result<SymbolicFit> {
    let (b, a) = linear_two(&curve.k_bar, &curve.values).ok_or_else(|| Error::FitFailed {
        form: "affine".into(),
        reason: "singular design".into(),
    })?;
    finish(FitForm::Affine, vec![a, b], curve)
}

/// Fits `(a − b·k̄)ⁿ`, n ∈ {2, 3, 4}.
pub fn fit_power_form(curve: &ActivationCurve, n: u8) -> Result<SymbolicFit> {
    if !(2..=4).contains(&n) {
        return Err(Error::FitFailed {
            form: format!("power_{n}"),
            reason: "degree must be 2, 3 or 4".into(),
        });
    }
    let form = FitForm::Power(n);
    let (ks, ys) = subsample(curve, 200);
    let step = 2.0 * POWER_GRID_RANGE / (POWER_GRID_STEPS - 1) as f64;
    let axis = |i: usize| -POWER_GRID_RANGE + i as f64 * step;
    let mut grid = vec![f64::INFINITY; POWER_GRID_STEPS * POWER_GRID_STEPS];
    for i in 0..POWER_GRID_STEPS {
        for j in 0..POWER_GRID_STEPS {
            grid[i * POWER_GRID_STEPS + j] = sse(form, &[axis(i), axis(j)], &ks, &ys);
        }
    }
    // local minima of the grid (8-neighbourhood), best first
    let mut minima: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..POWER_GRID_STEPS {
        for j in 0..POWER_GRID_STEPS {
            let v = grid[i * POWER_GRID_STEPS + j];
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0)
                        || ni < 0
                        || nj < 0
                        || ni >= POWER_GRID_STEPS as i64
                        || nj >= POWER_GRID_STEPS as i64
                    {
                        continue;
                    }
                    if grid[ni as usize * POWER_GRID_STEPS + nj as usize] < v {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                minima.push((v, i, j));
            }
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.truncate(REFINE_STARTS);
    if minima.is_empty() {
        return Err(Error::FitFailed {
            form: form.name(),
            reason: "coarse grid produced no finite candidate".into(),
        });
    }

    let mut best: Option<SymbolicFit> = None;
    for &(_, i, j) in &minima {
        let (mut p, _) = refine(form, &[axis(i), axis(j)], &curve.k_bar, &curve.values);
        if n.is_multiple_of(2) && p[0] < 0.0 {
            // (a − bk)ⁿ = (−a + bk)ⁿ for even n
            p = vec![-p[0], -p[1]];
        }
        let cand = finish(form, p, curve)?;
        best = Some(match best {
            None => cand,
            Some(cur) => prefer_power(cur, cand),
        });
    }
    let fit = best.expect("at least one refinement start");
    if curve_is_constant(curve) {
        warn!("{}: constant curve, R² is degenerate", form.name());
    }
    Ok(fit)
}

fn curve_is_constant(curve: &ActivationCurve) -> bool {
    curve.values.windows(2).all(|w| w[0] == w[1])
}

/// Higher R² wins; within the tie tolerance prefer a non-vanishing base,
/// then the orientation whose reconstructed SoH does not increase.
fn prefer_power(cur: SymbolicFit, cand: SymbolicFit) -> SymbolicFit {
    if (cand.r2 - cur.r2).abs() > BRANCH_TIE_TOL {
        return if cand.r2 > cur.r2 { cand } else { cur };
    }
    let key = |f: &SymbolicFit| (f.base_nonvanishing(), power_is_physical(f));
    if key(&cand) > key(&cur) {
        cand
    } else {
        cur
    }
}

/// |a − b·k̄| nondecreasing on [0, 1], so `aⁿ/(a − b·k̄)ⁿ` does not rise.
pub fn power_is_physical(fit: &SymbolicFit) -> bool {
    let (a, b) = (fit.params[0], fit.params[1]);
    (a - b).abs() >= a.abs()
}

/// 1-D scan over `b` with the linear parameters solved exactly, then joint
/// refinement.
fn fit_separable(
    form: FitForm,
    curve: &ActivationCurve,
    b_grid: &[f64],
    basis: impl Fn(f64, f64) -> f64,
) -> Result<SymbolicFit> {
    let (ks, ys) = subsample(curve, 400);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &b in b_grid {
        let u: Vec<f64> = ks.iter().map(|&k| basis(b, k)).collect();
        let Some((a, c)) = linear_two(&u, &ys) else {
            continue;
        };
        let p = vec![a, b, c];
        let s = sse(form, &p, &ks, &ys);
        if best.as_ref().is_none_or(|(bs, _)| s < *bs) {
            best = Some((s, p));
        }
    }
    let (_, p0) = best.ok_or_else(|| Error::FitFailed {
        form: form.name(),
        reason: "no nondegenerate start".into(),
    })?;
    let (p, _) = refine(form, &p0, &curve.k_bar, &curve.values);
    finish(form, p, curve)
}

/// `a·e^{b·k̄} + c`
pub fn fit_exp(curve: &ActivationCurve) -> Result<SymbolicFit> {
    let grid: Vec<f64> = (0..=400)
        .map(|i| -20.0 + 0.1 * i as f64)
        .filter(|b: &f64| b.abs() > 1e-9)
        .collect();
    fit_separable(FitForm::Exp, curve, &grid, |b, k| (b * k).exp())
}

/// `a·ln(b·k̄ + 1) + c`, b > −1
pub fn fit_log(curve: &ActivationCurve) -> Result<SymbolicFit> {
    let mut grid: Vec<f64> = (0..=300).map(|i| 10f64.powf(-3.0 + 0.02 * i as f64)).collect();
    grid.extend((0..100).map(|i| -(10f64.powf(-3.0 + 3.0 * i as f64 / 100.0)).min(0.999)));
    fit_separable(FitForm::Log, curve, &grid, |b, k| (b * k).ln_1p())
}

pub fn fit_form(curve: &ActivationCurve, form: FitForm) -> Result<SymbolicFit> {
    match form {
        FitForm::Affine => fit_affine(curve),
        FitForm::Power(n) => fit_power_form(curve, n),
        FitForm::Exp => fit_exp(curve),
        FitForm::Log => fit_log(curve),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryFit {
    /// Best first.
    pub ranked: Vec<SymbolicFit>,
    pub failures: Vec<(FitForm, String)>,
}

impl DictionaryFit {
    pub fn best(&self) -> Option<&SymbolicFit> {
        self.ranked.first()
    }

    pub fn get(&self, form: FitForm) -> Option<&SymbolicFit> {
        self.ranked.iter().find(|f| f.form == form)
    }
}

/// Secondary order inside a tie: fewer parameters, then lower degree.
fn simplicity(f: &SymbolicFit) -> (usize, u8, FitForm) {
    (f.form.n_params(), f.form.degree(), f.form)
}

/// Ranks by R² descending. Fits within [`R2_TIE_TOL`] of the best remaining
/// fit form a tie group, ordered by simplicity.
pub fn rank(mut fits: Vec<SymbolicFit>) -> Vec<SymbolicFit> {
    fits.sort_by(|a, b| b.r2.total_cmp(&a.r2).then(simplicity(a).cmp(&simplicity(b))));
    let mut out = Vec::with_capacity(fits.len());
    let mut rest = fits.into_iter().peekable();
    while let Some(lead) = rest.next() {
        let mut group = vec![lead];
        while let Some(next) = rest.next_if(|f| group[0].r2 - f.r2 <= R2_TIE_TOL) {
            group.push(next);
        }
        group.sort_by_key(simplicity);
        out.extend(group);
    }
    out
}

/// Fits every dictionary entry; failures are recorded, not fatal.
pub fn fit_dictionary(curve: &ActivationCurve) -> DictionaryFit {
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    let mut forms = FitForm::DICTIONARY.to_vec();
    forms.sort_by_key(|f| f.name());
    for form in forms {
        match fit_form(curve, form) {
            Ok(f) => ranked.push(f),
            Err(e) => failures.push((form, e.to_string())),
        }
    }
    DictionaryFit {
        ranked: rank(ranked),
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub form: String,
    pub params: Vec<f64>,
    pub r2: f64,
    pub formula: String,
    /// Which A2 curve was fit: `raw` or `anchored`.
    pub curve: String,
}

impl FitRecord {
    pub fn new(fit: &SymbolicFit, curve: &str) -> Self {
        Self {
            form: fit.form.name(),
            params: fit.params.clone(),
            // JSON has no −∞
            r2: if fit.r2.is_finite() { fit.r2 } else { -1e300 },
            formula: fit.formula(),
            curve: curve.into(),
        }
    }

    pub fn to_fit(&self) -> Option<SymbolicFit> {
        Some(SymbolicFit {
            form: FitForm::parse(&self.form)?,
            params: self.params.clone(),
            r2: self.r2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(f: impl Fn(f64) -> f64) -> ActivationCurve {
        let k: Vec<f64> = (0..DEFAULT_SAMPLES)
            .map(|i| i as f64 / (DEFAULT_SAMPLES - 1) as f64)
            .collect();
        let y = k.iter().map(|&x| f(x)).collect();
        ActivationCurve::new(k, y).unwrap()
    }

    #[test]
    fn r2_reference_values() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&y, &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((r2(&y, &[0.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r2(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(r2(&[2.0, 2.0], &[2.0, 2.5]).unwrap(), f64::NEG_INFINITY);
        assert!(r2(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cubic_recovered_from_manufactured_curve() {
        let c = curve(|k| (2.0 - 0.5 * k).powi(3));
        let f = fit_power_form(&c, 3).unwrap();
        assert!((f.params[0] - 2.0).abs() < 1e-6 && (f.params[1] - 0.5).abs() < 1e-6, "{f:?}");
        assert!(f.r2 >= 1.0 - 1e-9);
    }

    #[test]
    fn even_power_canonical_sign() {
        let c = curve(|k| (1.5 + 0.7 * k).powi(2));
        let f = fit_power_form(&c, 2).unwrap();
        assert!((f.params[0] - 1.5).abs() < 1e-6 && (f.params[1] + 0.7).abs() < 1e-6, "{f:?}");
        assert!(power_is_physical(&f));
    }

    #[test]
    fn constant_curve_takes_degenerate_path() {
        let c = curve(|_| 3.0);
        let f = fit_power_form(&c, 2).unwrap();
        assert!(f.r2 == 1.0 || f.r2 == f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_degree_rejected() {
        assert!(fit_power_form(&curve(|k| k), 5).is_err());
    }

    #[test]
    fn exp_and_log_recovered() {
        let e = fit_exp(&curve(|k| 0.8 * (-1.3 * k).exp() + 0.1)).unwrap();
        for (got, want) in e.params.iter().zip([0.8, -1.3, 0.1]) {
            assert!(((got - want) / want).abs() < 1e-4, "{e:?}");
        }
        let l = fit_log(&curve(|k| 1.5 * (3.0 * k).ln_1p() + 0.2)).unwrap();
        for (got, want) in l.params.iter().zip([1.5, 3.0, 0.2]) {
            assert!(((got - want) / want).abs() < 1e-4, "{l:?}");
        }
    }

    #[test]
    fn affine_curve_ranks_affine_first() {
        let d = fit_dictionary(&curve(|k| 0.4 + 0.25 * k));
        let best = d.best().unwrap();
        assert_eq!(best.form, FitForm::Affine);
        assert!((best.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_curve_ranks_cubic_above_other_powers() {
        let d = fit_dictionary(&curve(|k| (2.0 - 0.5 * k).powi(3)));
        let pos = |f| d.ranked.iter().position(|x| x.form == f).unwrap();
        assert_eq!(pos(FitForm::Power(3)), 0, "{:?}", d.ranked);
        assert!(pos(FitForm::Power(3)) < pos(FitForm::Power(2)));
        assert!(pos(FitForm::Power(3)) < pos(FitForm::Power(4)));
    }

    #[test]
    fn ties_prefer_fewer_parameters() {
        let fit = |form, r2| SymbolicFit {
            form,
            params: vec![0.0; 3],
            r2,
        };
        let r = rank(vec![
            fit(FitForm::Exp, 0.999_999_8),
            fit(FitForm::Power(3), 0.999_999_0),
            fit(FitForm::Affine, 0.999_999_0),
            fit(FitForm::Power(2), 0.9994),
        ]);
        let forms: Vec<FitForm> = r.iter().map(|f| f.form).collect();
        assert_eq!(
            forms,
            [FitForm::Affine, FitForm::Power(3), FitForm::Exp, FitForm::Power(2)]
        );
    }

    #[test]
    fn form_names_round_trip() {
        for f in FitForm::DICTIONARY {
            assert_eq!(FitForm::parse(&f.name()), Some(f));
        }
        assert_eq!(FitForm::parse("power_x"), None);
    }
}
