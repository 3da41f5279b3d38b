//! Power-fade state of health, `SoH(k) = 100·R(k₀)/R(k)`, computed from the
//! IR drop at CC start, from the learned cycle activation, or from a fitted
//! closed form.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{CycleDataset, HorizonPair};
use crate::error::{Error, Result};
use crate::kan::KanModel;
use crate::symbolic::{power_is_physical, ActivationCurve, FitForm, FitRecord, SymbolicFit};

/// Denominators below this are treated as zero.
pub const EPS: f64 = 1e-9;
/// Smallest current change accepted as the CC-start step.
pub const IR_STEP_THRESHOLD: f64 = 0.5;
pub const DEFAULT_THRESHOLD: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SohSource {
    Oracle,
    BaselineIr,
    SplineA2 { anchored: bool },
    ClosedForm(FitForm),
}

impl SohSource {
    pub fn name(self) -> String {
        match self {
            SohSource::Oracle => "oracle".into(),
            SohSource::BaselineIr => "baseline_ir".into(),
            SohSource::SplineA2 { anchored: false } => "spline_a2".into(),
            SohSource::SplineA2 { anchored: true } => "spline_a2_anchored".into(),
            SohSource::ClosedForm(FitForm::Power(n)) => format!("power_form_{n}"),
            SohSource::ClosedForm(f) => format!("{f}_form"),
        }
    }
}

impl fmt::Display for SohSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SohPoint {
    pub cycle: usize,
    pub soh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SohCurve {
    pub source: SohSource,
    pub points: Vec<SohPoint>,
    /// Closed-form parameters, when the curve came from a fit.
    pub params: Option<Vec<f64>>,
}

impl SohCurve {
    pub fn new(source: SohSource, points: Vec<SohPoint>) -> Self {
        Self {
            source,
            points,
            params: None,
        }
    }

    pub fn cycles(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.cycle).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.soh).collect()
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].soh < w[0].soh)
    }
}

/// SoH from the voltage jump at the first current step of every cycle.
pub fn baseline_ir_soh(dataset: &CycleDataset) -> Result<SohCurve> {
    if dataset.cycles.is_empty() {
        return Err(Error::NoCycles);
    }
    let mut resistances = Vec::with_capacity(dataset.cycles.len());
    for rec in &dataset.cycles {
        let r = rec
            .samples
            .windows(2)
            .find(|w| (w[1].current - w[0].current).abs() >= IR_STEP_THRESHOLD)
            .map(|w| (w[1].voltage - w[0].voltage) / (w[1].current - w[0].current))
            .ok_or(Error::NoCurrentStep(rec.cycle))?;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidCurve(format!(
                "cycle {}: IR-drop resistance {r} is not positive",
                rec.cycle
            )));
        }
        resistances.push((rec.cycle, r));
    }
    let r0 = resistances[0].1;
    let points = resistances
        .into_iter()
        .map(|(cycle, r)| SohPoint {
            cycle,
            soh: r0 / r * 100.0,
        })
        .collect();
    Ok(SohCurve::new(SohSource::BaselineIr, points))
}

/// How the learned constant that may sit in either activation is treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OffsetHandling {
    /// Use A2 as learned.
    Raw,
    /// Use `A2 − shift`.
    Anchored { shift: f64 },
}

impl OffsetHandling {
    pub fn shift(self) -> f64 {
        match self {
            OffsetHandling::Raw => 0.0,
            OffsetHandling::Anchored { shift } => shift,
        }
    }
}

/// Least-squares line `A1(T̄) ≈ slope·T̄ + intercept` over the training
/// inputs, and the intercept a pure relaxation toward ambient would have.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub slope: f64,
    pub intercept: f64,
    pub expected_intercept: f64,
    pub shift: f64,
}

impl Anchor {
    pub fn handling(&self) -> OffsetHandling {
        OffsetHandling::Anchored { shift: self.shift }
    }
}

/// `ambient_bar` is the ambient temperature in normalized units. Over one
/// horizon the ambient part of the response is `(1 − γᴺ)·T̄∞`, so with
/// `γᴺ` estimated as the fitted slope the constant that belongs in A1 is
/// `(1 − slope)·T̄∞`; whatever A1 lacks of it was absorbed by A2.
pub fn estimate_anchor(model: &KanModel, train: &[HorizonPair], ambient_bar: f64) -> Result<Anchor> {
    if train.len() < 2 {
        return Err(Error::EmptyBatch);
    }
    let n = train.len() as f64;
    let xs: Vec<f64> = train.iter().map(|p| p.t_bar).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| model.a1.eval(x)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 * n {
        return Err(Error::InvalidCurve(
            "training inputs have no spread; A1 slope is unidentifiable".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let expected_intercept = (1.0 - slope) * ambient_bar;
    Ok(Anchor {
        slope,
        intercept,
        expected_intercept,
        shift: expected_intercept - intercept,
    })
}

/// A2 evaluated at `k/E` for every cycle `k = 0..=E`.
pub fn a2_cycle_curve(model: &KanModel, last_cycle: usize) -> Result<ActivationCurve> {
    let k_bar: Vec<f64> = (0..=last_cycle)
        .map(|k| crate::data::k_bar(k, last_cycle))
        .collect();
    let values = k_bar.iter().map(|&k| model.a2.eval(k)).collect();
    ActivationCurve::new(k_bar, values)
}

fn cycle_of(k_bar: f64, last_cycle: usize) -> usize {
    (k_bar * last_cycle as f64).round() as usize
}

/// `SoH(k) = A2(k̄₀)/A2(k̄)·100`, with sample `i` mapped to cycle
/// `round(k̄·E)`.
pub fn soh_from_a2(
    curve: &ActivationCurve,
    handling: OffsetHandling,
    last_cycle: usize,
) -> Result<SohCurve> {
    let shift = handling.shift();
    let first = curve.values[0] - shift;
    let mut points = Vec::with_capacity(curve.len());
    for (&k, &v) in curve.k_bar.iter().zip(&curve.values) {
        let v = v - shift;
        if v.abs() <= EPS || first.abs() <= EPS || v.signum() != first.signum() {
            return Err(Error::A2CrossesZero);
        }
        points.push(SohPoint {
            cycle: cycle_of(k, last_cycle),
            soh: first / v * 100.0,
        });
    }
    let anchored = matches!(handling, OffsetHandling::Anchored { .. });
    Ok(SohCurve::new(SohSource::SplineA2 { anchored }, points))
}

/// Power forms whose base shrinks over [0, 1] would make SoH rise; the
/// mirrored branch `b → −b` is used instead.
pub fn oriented(fit: &SymbolicFit) -> SymbolicFit {
    let mut out = fit.clone();
    if let FitForm::Power(_) = fit.form {
        if !power_is_physical(fit) {
            out.params[1] = -out.params[1];
        }
    }
    out
}

/// `f(0)/f(k̄)·100` for the orientation-resolved fit.
pub fn soh_closed_form(fit: &SymbolicFit, k_bar: f64) -> Result<f64> {
    let fit = oriented(fit);
    if let FitForm::Power(_) = fit.form {
        let (a, b) = (fit.params[0], fit.params[1]);
        for k in [0.0, k_bar] {
            if (a - b * k).abs() <= EPS {
                return Err(Error::VanishingBase(k));
            }
        }
    }
    let num = fit.eval(0.0);
    let den = fit.eval(k_bar);
    if num.abs() <= EPS || den.abs() <= EPS || num.signum() != den.signum() {
        return Err(Error::A2CrossesZero);
    }
    Ok(num / den * 100.0)
}

/// Closed-form SoH at every cycle `0..=E`.
pub fn closed_form_curve(fit: &SymbolicFit, last_cycle: usize) -> Result<SohCurve> {
    let points = (0..=last_cycle)
        .map(|k| {
            soh_closed_form(fit, crate::data::k_bar(k, last_cycle))
                .map(|soh| SohPoint { cycle: k, soh })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut curve = SohCurve::new(SohSource::ClosedForm(fit.form), points);
    curve.params = Some(oriented(fit).params);
    Ok(curve)
}

/// First cycle whose SoH is at or below `threshold`.
pub fn crossing_cycle(curve: &SohCurve, threshold: f64) -> Option<usize> {
    curve
        .points
        .iter()
        .find(|p| p.soh <= threshold)
        .map(|p| p.cycle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMetrics {
    pub stats: ErrorStats,
    /// `(cycle, estimate − reference)`
    pub series: Vec<(usize, f64)>,
}

pub fn error_metrics(estimate: &SohCurve, reference: &SohCurve) -> Result<ErrorMetrics> {
    if estimate.points.is_empty() {
        return Err(Error::SupportMismatch("empty curve".into()));
    }
    if estimate.cycles() != reference.cycles() {
        return Err(Error::SupportMismatch(format!(
            "{} has {} cycles, {} has {}",
            estimate.source,
            estimate.points.len(),
            reference.source,
            reference.points.len()
        )));
    }
    let series: Vec<(usize, f64)> = estimate
        .points
        .iter()
        .zip(&reference.points)
        .map(|(e, r)| (e.cycle, e.soh - r.soh))
        .collect();
    let n = series.len() as f64;
    let mae = series.iter().map(|(_, e)| e.abs()).sum::<f64>() / n;
    let rmse = (series.iter().map(|(_, e)| e * e).sum::<f64>() / n).sqrt();
    let max = series.iter().map(|(_, e)| e.abs()).fold(0.0, f64::max);
    Ok(ErrorMetrics {
        stats: ErrorStats { mae, rmse, max },
        series,
    })
}

/// `cycle,soh_percent,source`, curves one after another.
pub fn write_soh_csv<W: Write>(curves: &[&SohCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cycle", "soh_percent", "source"])?;
    for c in curves {
        let name = c.source.name();
        for p in &c.points {
            w.serialize((p.cycle, p.soh, &name))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `cycle,error_percent,source` against a common reference.
pub fn write_error_csv<W: Write>(errors: &[(SohSource, &ErrorMetrics)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cycle", "error_percent", "source"])?;
    for (src, m) in errors {
        let name = src.name();
        for (cycle, e) in &m.series {
            w.serialize((cycle, e, &name))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SohReport {
    pub threshold: f64,
    /// Crossing cycle per source; `null` when never crossed.
    pub milestones: BTreeMap<String, Option<usize>>,
    /// Errors of each estimate against the reference curve.
    pub reference: String,
    pub errors: BTreeMap<String, ErrorStats>,
    pub formulas: Vec<FitRecord>,
}

impl SohReport {
    pub fn build(
        curves: &[&SohCurve],
        reference: &SohCurve,
        formulas: Vec<FitRecord>,
        threshold: f64,
    ) -> Result<(Self, Vec<(SohSource, ErrorMetrics)>)> {
        let mut milestones = BTreeMap::new();
        let mut errors = BTreeMap::new();
        let mut series = Vec::new();
        milestones.insert(reference.source.name(), crossing_cycle(reference, threshold));
        for c in curves {
            milestones.insert(c.source.name(), crossing_cycle(c, threshold));
            if c.source == reference.source {
                continue;
            }
            match error_metrics(c, reference) {
                Ok(m) => {
                    errors.insert(c.source.name(), m.stats);
                    series.push((c.source, m));
                }
                Err(e) => warn!("{}: {e}", c.source),
            }
        }
        Ok((
            Self {
                threshold,
                milestones,
                reference: reference.source.name(),
                errors,
                formulas,
            },
            series,
        ))
    }
}
