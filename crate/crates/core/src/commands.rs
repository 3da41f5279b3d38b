//! Batch commands behind the `sohkan` binary. Each writes its artifacts to
//! an output directory and finishes with a `<command>.manifest.json` that
//! lists them; a run is complete iff its manifest exists.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{self, CycleDataset, NormalizationParams, PairLayout, PairSets};
use crate::error::{Error, Result};
use crate::kan::{KanModel, ModelMeta, SplineGrid};
use crate::plot::{box_plot_svg, LinePlot, Series};
use crate::soh::{
    self, a2_cycle_curve, Anchor, OffsetHandling, SohCurve, SohPoint, SohReport, SohSource,
    DEFAULT_THRESHOLD,
};
use crate::symbolic::{self, ActivationCurve, DictionaryFit, FitRecord};
use crate::thermal::{simulate_life, CycleProfile, ResistanceSchedule, ThermalParams};
use crate::trainer::{self, TrainConfig, TrainReport};

/// Default synthetic schedule: linear growth reaching 69.14 % power-fade
/// SoH at the last cycle.
pub const DEFAULT_R_BOL: f64 = 0.06;
pub const DEFAULT_EOL_SOH: f64 = 69.14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub thermal: ThermalParams,
    pub profile: CycleProfile,
    pub schedule: ResistanceSchedule,
    pub train: TrainConfig,
    /// SoH milestone threshold, %.
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            thermal: ThermalParams::default(),
            profile: CycleProfile::default(),
            schedule: ResistanceSchedule::linear_to_eol_soh(DEFAULT_R_BOL, DEFAULT_EOL_SOH),
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn layout(&self) -> PairLayout {
        PairLayout::new(self.train.horizon_n)
    }

    pub fn grid(&self) -> SplineGrid {
        SplineGrid {
            intervals: self.train.grid_intervals,
            order: self.train.spline_order,
            ..SplineGrid::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
}

/// Collects output paths for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents)?;
        Ok(p)
    }

    fn finish(
        self,
        command: &str,
        config: &RunConfig,
        inputs: Vec<PathBuf>,
        started: Instant,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.train.seed,
            config: config.clone(),
            inputs,
            outputs: self.files,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(format!("{command}.manifest.json"));
        fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

fn write_oracle(oracle: &SohCurve, path: &Path) -> Result<()> {
    soh::write_soh_csv(&[oracle], fs::File::create(path)?)
}

/// Reads a `cycle,soh_percent,source` file holding a single curve.
pub fn read_soh_csv(path: &Path) -> Result<Vec<SohPoint>> {
    #[derive(Deserialize)]
    struct Row {
        cycle: usize,
        soh_percent: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        points.push(SohPoint {
            cycle: row.cycle,
            soh: row.soh_percent,
        });
    }
    Ok(points)
}

fn model_for(config: &RunConfig, norm: NormalizationParams, last_cycle: usize) -> KanModel {
    KanModel::init(
        config.grid(),
        norm,
        ModelMeta {
            horizon_n: config.train.horizon_n,
            last_cycle,
            seed: config.train.seed,
        },
    )
}

/// Everything the SoH stage derives from a trained model.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub anchor: Option<Anchor>,
    pub raw_curve: ActivationCurve,
    /// The curve the dictionary was fit to: anchored when an anchor is
    /// available, raw otherwise.
    pub fit_curve: ActivationCurve,
    pub fit_curve_name: &'static str,
    pub dictionary: DictionaryFit,
}

impl Analysis {
    pub fn handling(&self) -> OffsetHandling {
        self.anchor.map_or(OffsetHandling::Raw, |a| a.handling())
    }

    pub fn fit_records(&self) -> Vec<FitRecord> {
        self.dictionary
            .ranked
            .iter()
            .map(|f| FitRecord::new(f, self.fit_curve_name))
            .collect()
    }
}

/// Samples A2 at every cycle, estimates the anchor when training pairs are
/// available and fits the dictionary.
pub fn analyse(model: &KanModel, train_pairs: Option<(&PairSets, f64)>) -> Result<Analysis> {
    let last = model.meta.last_cycle;
    let raw_curve = a2_cycle_curve(model, last)?;
    let anchor = match train_pairs {
        Some((pairs, ambient_bar)) => Some(soh::estimate_anchor(model, &pairs.train, ambient_bar)?),
        None => None,
    };
    let (fit_curve, fit_curve_name) = match anchor {
        Some(a) => (raw_curve.shifted(a.shift), "anchored"),
        None => (raw_curve.clone(), "raw"),
    };
    let dictionary = symbolic::fit_dictionary(&fit_curve);
    for (form, reason) in &dictionary.failures {
        warn!("{form} fit failed: {reason}");
    }
    Ok(Analysis {
        anchor,
        raw_curve,
        fit_curve,
        fit_curve_name,
        dictionary,
    })
}

/// SoH curves from every source that can be evaluated. Sources that fail
/// (e.g. raw A2 crossing zero) are logged and left out.
pub fn soh_curves(
    analysis: &Analysis,
    fits: &[FitRecord],
    dataset: Option<&CycleDataset>,
    last_cycle: usize,
) -> Result<Vec<SohCurve>> {
    let mut curves = Vec::new();
    if let Some(ds) = dataset {
        match soh::baseline_ir_soh(ds) {
            Ok(c) => curves.push(c),
            Err(e) => warn!("baseline_ir: {e}"),
        }
    }
    let mut modes = vec![OffsetHandling::Raw];
    if let Some(a) = analysis.anchor {
        modes.push(a.handling());
    }
    for mode in modes {
        match soh::soh_from_a2(&analysis.raw_curve, mode, last_cycle) {
            Ok(c) => curves.push(c),
            Err(e) => warn!("spline_a2 ({mode:?}): {e}"),
        }
    }
    for rec in fits {
        let Some(fit) = rec.to_fit() else {
            warn!("unknown fit form {}", rec.form);
            continue;
        };
        match soh::closed_form_curve(&fit, last_cycle) {
            Ok(c) => curves.push(c),
            Err(e) => warn!("{}: {e}", rec.form),
        }
    }
    Ok(curves)
}

/// In-memory end-to-end run on simulated data.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub dataset: CycleDataset,
    pub oracle: SohCurve,
    pub norm: NormalizationParams,
    pub pairs: PairSets,
    pub model: KanModel,
    pub report: TrainReport,
    pub analysis: Analysis,
    pub curves: Vec<SohCurve>,
    pub soh_report: SohReport,
}

impl Pipeline {
    pub fn curve(&self, source: SohSource) -> Option<&SohCurve> {
        self.curves.iter().find(|c| c.source == source)
    }
}

pub fn train_on(
    dataset: &CycleDataset,
    config: &RunConfig,
) -> Result<(NormalizationParams, PairSets, KanModel, TrainReport)> {
    let (norm, pairs) = data::prepare(dataset, &config.layout())?;
    let init = model_for(config, norm, dataset.last_cycle());
    let (model, mut report) = trainer::train(&init, &pairs.train, &pairs.validation, &config.train)?;
    report.test_rmse_c = Some(trainer::evaluate_rmse(&model, &pairs.test, &norm)?);
    Ok((norm, pairs, model, report))
}

pub fn run_pipeline(config: &RunConfig) -> Result<Pipeline> {
    let (dataset, oracle) = simulate_life(&config.thermal, &config.profile, &config.schedule)?;
    let (norm, pairs, model, report) = train_on(&dataset, config)?;
    let ambient_bar = norm.normalize(dataset.mean_ambient());
    let analysis = analyse(&model, Some((&pairs, ambient_bar)))?;
    let records = analysis.fit_records();
    let mut curves = soh_curves(&analysis, &records, Some(&dataset), dataset.last_cycle())?;
    curves.insert(0, oracle.clone());
    let refs: Vec<&SohCurve> = curves.iter().collect();
    let (soh_report, _) = SohReport::build(&refs, &oracle, records, config.threshold)?;
    Ok(Pipeline {
        dataset,
        oracle,
        norm,
        pairs,
        model,
        report,
        analysis,
        curves,
        soh_report,
    })
}

fn loss_plot(report: &TrainReport) -> LinePlot {
    let train = report
        .steps
        .iter()
        .map(|s| (s.step as f64, s.train.total))
        .collect();
    let pred = report
        .steps
        .iter()
        .map(|s| (s.step as f64, s.train.pred))
        .collect();
    let val = report
        .steps
        .iter()
        .map(|s| (s.step as f64, s.val_loss))
        .collect();
    let mut p = LinePlot::new("Training and validation loss", "step", "loss")
        .with_series(Series::new("train (total)", train))
        .with_series(Series::new("train (prediction MSE)", pred))
        .with_series(Series::new("validation (MSE)", val));
    p.log_y = true;
    p
}

fn a2_plot(analysis: &Analysis) -> LinePlot {
    let pts = |c: &ActivationCurve| c.k_bar.iter().copied().zip(c.values.iter().copied()).collect();
    let mut p = LinePlot::new("Cycle activation A2", "normalized cycle kbar", "A2")
        .with_series(Series::new("A2 (raw)", pts(&analysis.raw_curve)));
    if analysis.anchor.is_some() {
        p = p.with_series(Series::new("A2 (anchored)", pts(&analysis.fit_curve)));
    }
    if let Some(best) = analysis.dictionary.best() {
        let fitted = analysis
            .fit_curve
            .k_bar
            .iter()
            .map(|&k| (k, best.eval(k)))
            .collect();
        p = p.with_series(Series::new(format!("{} fit", best.form), fitted));
    }
    p
}

fn soh_plot(curves: &[&SohCurve], threshold: f64) -> LinePlot {
    let mut p = LinePlot::new("Power-fade state of health", "cycle", "SoH (%)");
    for c in curves {
        let pts = c.points.iter().map(|q| (q.cycle as f64, q.soh)).collect();
        p = p.with_series(Series::new(c.source.name(), pts));
    }
    p.hlines.push((threshold, format!("{threshold}%")));
    p
}

fn write_a2_csv(analysis: &Analysis, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k_bar", "a2_raw", "a2_fit_curve"])?;
    for i in 0..analysis.raw_curve.len() {
        w.serialize((
            analysis.raw_curve.k_bar[i],
            analysis.raw_curve.values[i],
            analysis.fit_curve.values[i],
        ))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_val_loss: f64,
    pub test_rmse_c: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub norm: NormalizationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsFile {
    pub anchor: Option<Anchor>,
    pub fits: Vec<FitRecord>,
    pub failures: Vec<(String, String)>,
}

fn json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// `simulate`: synthetic telemetry plus the exact SoH curve.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let mut o = Outputs::new(out)?;
    let (ds, oracle) = simulate_life(&config.thermal, &config.profile, &config.schedule)?;
    info!(
        "simulated {} cycles, {} samples",
        ds.cycles.len(),
        ds.n_samples()
    );
    ds.save_csv(o.path("dataset.csv"))?;
    write_oracle(&oracle, &o.path("oracle_soh.csv"))?;
    o.finish("simulate", config, vec![], started)
}

/// `ingest`: validates a dataset and exports the horizon pairs.
pub fn cmd_ingest(config: &RunConfig, dataset: &Path, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let mut o = Outputs::new(out)?;
    let ds = CycleDataset::load_csv(dataset)?;
    let (norm, pairs) = data::prepare(&ds, &config.layout())?;
    info!(
        "{} cycles: {} train / {} validation / {} test pairs",
        ds.cycles.len(),
        pairs.train.len(),
        pairs.validation.len(),
        pairs.test.len()
    );
    pairs.write_csv(fs::File::create(o.path("pairs.csv"))?)?;
    o.write("normalization.json", json(&norm)?)?;
    o.finish("ingest", config, vec![dataset.to_path_buf()], started)
}

/// `train`: fits the KAN and writes the model, loss history and plot.
pub fn cmd_train(config: &RunConfig, dataset: &Path, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let mut o = Outputs::new(out)?;
    let ds = CycleDataset::load_csv(dataset)?;
    let (norm, pairs, model, report) = train_on(&ds, config)?;
    info!(
        "trained {} steps: val MSE {:.3e}, test RMSE {:.3} °C",
        report.steps.len(),
        report.final_val_loss,
        report.test_rmse_c.unwrap_or(f64::NAN)
    );
    model.save(o.path("model.json"))?;
    report.save_csv(o.path("train_report.csv"))?;
    let summary = TrainSummary {
        steps: report.steps.len(),
        final_val_loss: report.final_val_loss,
        test_rmse_c: report.test_rmse_c,
        n_train: pairs.train.len(),
        n_validation: pairs.validation.len(),
        n_test: pairs.test.len(),
        norm,
    };
    o.write("train_summary.json", json(&summary)?)?;
    loss_plot(&report).save(o.path("loss.svg"))?;
    o.finish("train", config, vec![dataset.to_path_buf()], started)
}

/// Pairs of `dataset` under the model's own normalization and horizon, and
/// the normalized mean ambient; the inputs of the anchored correction.
pub fn anchor_inputs(model: &KanModel, dataset: &CycleDataset) -> Result<(PairSets, f64)> {
    let idx = data::split_indices(dataset, &PairLayout::new(model.meta.horizon_n))?;
    let pairs = data::build_pairs(dataset, &model.norm, &idx);
    Ok((pairs, model.norm.normalize(dataset.mean_ambient())))
}

/// `extract`: dictionary fits of A2. With a dataset the anchored curve is
/// fit; without one, the raw curve.
pub fn cmd_extract(
    config: &RunConfig,
    model_path: &Path,
    dataset: Option<&Path>,
    out: &Path,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut o = Outputs::new(out)?;
    let model = KanModel::load(model_path)?;
    let mut inputs = vec![model_path.to_path_buf()];
    let ds = dataset.map(CycleDataset::load_csv).transpose()?;
    let anchor_data = match &ds {
        Some(ds) => Some(anchor_inputs(&model, ds)?),
        None => None,
    };
    if let Some(p) = dataset {
        inputs.push(p.to_path_buf());
    }
    let analysis = analyse(&model, anchor_data.as_ref().map(|(p, a)| (p, *a)))?;
    if let Some(best) = analysis.dictionary.best() {
        info!("best fit {} (R² = {:.6}): {}", best.form, best.r2, best.formula());
    }
    let file = FitsFile {
        anchor: analysis.anchor,
        fits: analysis.fit_records(),
        failures: analysis
            .dictionary
            .failures
            .iter()
            .map(|(f, r)| (f.name(), r.clone()))
            .collect(),
    };
    o.write("fits.json", json(&file)?)?;
    write_a2_csv(&analysis, &o.path("a2_curve.csv"))?;
    a2_plot(&analysis).save(o.path("a2_curve.svg"))?;
    o.finish("extract", config, inputs, started)
}

/// `soh`: SoH curves from every source, their errors against a reference
/// and the milestone report. The reference is the oracle curve when given,
/// otherwise the IR-drop baseline.
pub fn cmd_soh(
    config: &RunConfig,
    model_path: &Path,
    fits_path: &Path,
    dataset: &Path,
    oracle: Option<&Path>,
    out: &Path,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut o = Outputs::new(out)?;
    let model = KanModel::load(model_path)?;
    let fits: FitsFile = serde_json::from_str(&fs::read_to_string(fits_path)?)?;
    let ds = CycleDataset::load_csv(dataset)?;
    let mut inputs = vec![
        model_path.to_path_buf(),
        fits_path.to_path_buf(),
        dataset.to_path_buf(),
    ];

    let last = model.meta.last_cycle;
    if ds.last_cycle() != last {
        return Err(Error::SupportMismatch(format!(
            "model was trained with E = {last}, dataset has E = {}",
            ds.last_cycle()
        )));
    }
    let analysis = Analysis {
        anchor: fits.anchor,
        raw_curve: a2_cycle_curve(&model, last)?,
        fit_curve: a2_cycle_curve(&model, last)?,
        fit_curve_name: "raw",
        dictionary: DictionaryFit {
            ranked: Vec::new(),
            failures: Vec::new(),
        },
    };
    let mut curves = soh_curves(&analysis, &fits.fits, Some(&ds), last)?;
    let reference = match oracle {
        Some(p) => {
            inputs.push(p.to_path_buf());
            SohCurve::new(SohSource::Oracle, read_soh_csv(p)?)
        }
        None => curves
            .iter()
            .find(|c| c.source == SohSource::BaselineIr)
            .cloned()
            .ok_or_else(|| Error::InvalidCurve("no reference curve available".into()))?,
    };
    if reference.source == SohSource::Oracle {
        curves.insert(0, reference.clone());
    }
    let refs: Vec<&SohCurve> = curves.iter().collect();
    let (report, errors) = SohReport::build(&refs, &reference, fits.fits, config.threshold)?;
    for (src, cycle) in &report.milestones {
        match cycle {
            Some(k) => info!("{src}: {}% at cycle {k}", config.threshold),
            None => info!("{src}: never crosses {}%", config.threshold),
        }
    }

    soh::write_soh_csv(&refs, fs::File::create(o.path("soh.csv"))?)?;
    let err_refs: Vec<(SohSource, &soh::ErrorMetrics)> =
        errors.iter().map(|(s, m)| (*s, m)).collect();
    soh::write_error_csv(&err_refs, fs::File::create(o.path("soh_errors.csv"))?)?;
    o.write("report.json", json(&report)?)?;
    soh_plot(&refs, config.threshold).save(o.path("soh.svg"))?;
    let groups: Vec<(String, Vec<f64>)> = errors
        .iter()
        .map(|(s, m)| (s.name(), m.series.iter().map(|e| e.1).collect()))
        .collect();
    o.write(
        "soh_errors.svg",
        box_plot_svg(
            &format!("SoH error against {}", reference.source),
            "error (percentage points)",
            &groups,
        ),
    )?;
    o.finish("soh", config, inputs, started)
}

/// `report`: simulate, train, extract and soh in one directory.
pub fn cmd_report(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let sim = cmd_simulate(config, out)?;
    let ds = out.join("dataset.csv");
    let oracle = out.join("oracle_soh.csv");
    let ing = cmd_ingest(config, &ds, out)?;
    let tr = cmd_train(config, &ds, out)?;
    let model = out.join("model.json");
    let ex = cmd_extract(config, &model, Some(&ds), out)?;
    let sh = cmd_soh(config, &model, &out.join("fits.json"), &ds, Some(&oracle), out)?;
    let mut o = Outputs::new(out)?;
    for m in [&sim, &ing, &tr, &ex, &sh] {
        o.files.extend(m.outputs.iter().cloned());
        o.files.push(out.join(format!("{}.manifest.json", m.command)));
    }
    o.finish("report", config, vec![], started)
}
