//! Telemetry ingestion and horizon-pair construction.
//!
//! A dataset is a list of cycle records, each a uniformly sampled series of
//! `(t, T, I, V)` rows. For every cycle the constant-current phase is
//! located, and three disjoint sample indices (train / validation / test)
//! are chosen inside it. Each index `i` yields one pair
//! `x = (T̄(i), k/E) → y = T̄(i + N)`.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = [
    "cycle",
    "t_s",
    "temp_c",
    "current_a",
    "voltage_v",
    "ambient_c",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub temp: f64,
    pub current: f64,
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub t_ambient: f64,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CycleDataset {
    pub cycles: Vec<CycleRecord>,
}

impl CycleDataset {
    /// Index E of the last cycle.
    pub fn last_cycle(&self) -> usize {
        self.cycles.last().map_or(0, |c| c.cycle)
    }

    /// Sampling interval of the first cycle with at least two samples.
    pub fn sample_interval(&self) -> Option<f64> {
        self.cycles
            .iter()
            .find(|c| c.samples.len() >= 2)
            .map(|c| c.samples[1].t - c.samples[0].t)
    }

    pub fn mean_ambient(&self) -> f64 {
        let n = self.cycles.len().max(1) as f64;
        self.cycles.iter().map(|c| c.t_ambient).sum::<f64>() / n
    }

    pub fn n_samples(&self) -> usize {
        self.cycles.iter().map(|c| c.samples.len()).sum()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, path)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for c in &self.cycles {
            for s in &c.samples {
                w.serialize((c.cycle, s.t, s.temp, s.current, s.voltage, c.t_ambient))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the telemetry CSV. `origin` is only used in error messages.
    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let parse_err = |row: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            row,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let mut col = [0usize; 6];
        for (slot, name) in col.iter_mut().zip(CSV_HEADER) {
            *slot = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))?;
        }

        let mut cycles: Vec<CycleRecord> = Vec::new();
        let mut tau: Option<f64> = None;
        for (i, rec) in rdr.records().enumerate() {
            // header is row 1
            let row = i + 2;
            let rec = rec?;
            let field = |j: usize| -> Result<&str> {
                rec.get(col[j])
                    .ok_or_else(|| parse_err(row, format!("missing field `{}`", CSV_HEADER[j])))
            };
            let num = |j: usize| -> Result<f64> {
                let raw = field(j)?;
                let v: f64 = raw.parse().map_err(|_| {
                    parse_err(row, format!("`{}`: cannot parse `{raw}`", CSV_HEADER[j]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(row, format!("`{}` is not finite", CSV_HEADER[j])));
                }
                Ok(v)
            };
            let cycle: usize = field(0)?
                .parse()
                .map_err(|_| parse_err(row, format!("bad cycle index `{}`", field(0).unwrap_or(""))))?;
            let sample = Sample {
                t: num(1)?,
                temp: num(2)?,
                current: num(3)?,
                voltage: num(4)?,
            };
            let ambient = num(5)?;

            let expected_new = cycles.last().map_or(0, |c| c.cycle + 1);
            match cycles.last_mut() {
                Some(last) if last.cycle == cycle => {
                    if ambient != last.t_ambient {
                        return Err(parse_err(
                            row,
                            format!("ambient changes within cycle {cycle}"),
                        ));
                    }
                    let prev = last.samples.last().expect("cycle records are never empty");
                    let dt = sample.t - prev.t;
                    if dt <= 0.0 {
                        return Err(parse_err(
                            row,
                            format!("non-monotone time in cycle {cycle}: {} after {}", sample.t, prev.t),
                        ));
                    }
                    match tau {
                        None => tau = Some(dt),
                        Some(step) if ((dt - step) / step).abs() > 1e-6 => {
                            return Err(parse_err(
                                row,
                                format!("non-uniform sampling in cycle {cycle}: Δt = {dt}, expected {step}"),
                            ));
                        }
                        Some(_) => {}
                    }
                    last.samples.push(sample);
                }
                _ => {
                    if cycle != expected_new {
                        return Err(parse_err(
                            row,
                            format!("cycle {cycle} out of order (expected cycle {expected_new})"),
                        ));
                    }
                    cycles.push(CycleRecord {
                        cycle,
                        t_ambient: ambient,
                        samples: vec![sample],
                    });
                }
            }
        }
        if cycles.is_empty() {
            return Err(Error::NoCycles);
        }
        Ok(Self { cycles })
    }
}

/// Min-max temperature scaling fitted on the training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub t_min: f64,
    pub t_max: f64,
}

impl NormalizationParams {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if t_max.partial_cmp(&t_min) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::DegenerateRange(t_min));
        }
        Ok(Self { t_min, t_max })
    }

    pub fn delta(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn normalize(&self, temp: f64) -> f64 {
        (temp - self.t_min) / self.delta()
    }

    pub fn denormalize(&self, t_bar: f64) -> f64 {
        t_bar * self.delta() + self.t_min
    }
}

/// Longest contiguous run with `|I − i_current| ≤ tol`, as a half-open
/// sample range. `min_len` is the shortest acceptable run (N + 1 for a
/// horizon of N steps).
pub fn extract_cc_phase(
    record: &CycleRecord,
    i_current: f64,
    tol: f64,
    min_len: usize,
) -> Result<Range<usize>> {
    let mut best = 0..0;
    let mut start = None;
    for (i, s) in record.samples.iter().enumerate() {
        let on = (s.current - i_current).abs() <= tol;
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                if i - st > best.len() {
                    best = st..i;
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        let end = record.samples.len();
        if end - st > best.len() {
            best = st..end;
        }
    }
    if best.len() < min_len.max(1) {
        return Err(Error::CcPhaseTooShort {
            cycle: record.cycle,
            needed: min_len,
            found: best.len(),
        });
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// Offsets (in samples, from CC start) of the train/validation/test inputs.
///
/// With `rotate`, cycle `k` assigns `base[(k + s) % 3]` to split `s`, so
/// every split sees all three phase positions across the life while the
/// three indices of any one cycle stay distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOffsets {
    pub base: [usize; 3],
    pub rotate: bool,
}

impl SplitOffsets {
    /// `[0, ⌊N/3⌋, ⌊2N/3⌋]`, rotated.
    pub fn for_horizon(n: usize) -> Self {
        Self {
            base: [0, n / 3, 2 * n / 3],
            rotate: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.base;
        if a == b || b == c || a == c {
            return Err(Error::OffsetCollision(self.base));
        }
        Ok(())
    }

    /// Offsets for `[train, validation, test]` in cycle `k`.
    pub fn for_cycle(&self, k: usize) -> [usize; 3] {
        if self.rotate {
            let r = k % 3;
            [self.base[r], self.base[(r + 1) % 3], self.base[(r + 2) % 3]]
        } else {
            self.base
        }
    }

    pub fn max(&self) -> usize {
        self.base.into_iter().max().unwrap_or(0)
    }
}

/// How pairs are laid out inside each cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLayout {
    /// Horizon N in samples (H = N·τ).
    pub horizon: usize,
    pub offsets: SplitOffsets,
    /// Nominal CC current; `None` takes the largest |I| in each cycle.
    pub cc_current: Option<f64>,
    /// Current tolerance for CC detection, A.
    pub cc_tol: f64,
}

impl PairLayout {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            offsets: SplitOffsets::for_horizon(horizon),
            cc_current: None,
            cc_tol: 0.05,
        }
    }
}

/// Absolute sample indices of one input/target pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub cycle: usize,
    pub input: usize,
    pub target: usize,
}

/// Locates the CC phase of every cycle and returns per-split sample indices.
pub fn split_indices(dataset: &CycleDataset, layout: &PairLayout) -> Result<[Vec<SampleIndex>; 3]> {
    layout.offsets.validate()?;
    if dataset.cycles.is_empty() {
        return Err(Error::NoCycles);
    }
    let needed = layout.offsets.max() + layout.horizon + 1;
    let mut out: [Vec<SampleIndex>; 3] = Default::default();
    for rec in &dataset.cycles {
        let i_cc = layout.cc_current.unwrap_or_else(|| {
            rec.samples
                .iter()
                .map(|s| s.current)
                .fold(0.0, |m: f64, c| if c.abs() > m.abs() { c } else { m })
        });
        let cc = extract_cc_phase(rec, i_cc, layout.cc_tol, layout.horizon + 1)?;
        if cc.len() < needed {
            return Err(Error::CcPhaseTooShort {
                cycle: rec.cycle,
                needed,
                found: cc.len(),
            });
        }
        for (split, off) in out.iter_mut().zip(layout.offsets.for_cycle(rec.cycle)) {
            let input = cc.start + off;
            split.push(SampleIndex {
                cycle: rec.cycle,
                input,
                target: input + layout.horizon,
            });
        }
    }
    Ok(out)
}

/// Min/max over the training inputs and targets only.
pub fn compute_normalization(
    dataset: &CycleDataset,
    train: &[SampleIndex],
) -> Result<NormalizationParams> {
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for idx in train {
        let s = &dataset.cycles[idx.cycle].samples;
        for i in [idx.input, idx.target] {
            lo = lo.min(s[i].temp);
            hi = hi.max(s[i].temp);
        }
    }
    NormalizationParams::new(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonPair {
    pub cycle: usize,
    pub t_bar: f64,
    pub k_bar: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSets {
    pub train: Vec<HorizonPair>,
    pub validation: Vec<HorizonPair>,
    pub test: Vec<HorizonPair>,
}

impl PairSets {
    pub fn get(&self, split: Split) -> &[HorizonPair] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Debug export: `cycle,k_bar,t_bar_in,t_bar_target,split`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cycle", "k_bar", "t_bar_in", "t_bar_target", "split"])?;
        for split in Split::ALL {
            for p in self.get(split) {
                w.serialize((p.cycle, p.k_bar, p.t_bar, p.target, split.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Normalized cycle number k/E; 0 for a single-cycle dataset.
pub fn k_bar(cycle: usize, last_cycle: usize) -> f64 {
    if last_cycle == 0 {
        0.0
    } else {
        cycle as f64 / last_cycle as f64
    }
}

/// Builds one pair per cycle per split. Test-split inputs are left
/// unclamped even when they fall outside [0, 1].
pub fn build_pairs(
    dataset: &CycleDataset,
    norm: &NormalizationParams,
    indices: &[Vec<SampleIndex>; 3],
) -> PairSets {
    let last = dataset.last_cycle();
    let make = |idx: &Vec<SampleIndex>| -> Vec<HorizonPair> {
        idx.iter()
            .map(|ix| {
                let s = &dataset.cycles[ix.cycle].samples;
                HorizonPair {
                    cycle: ix.cycle,
                    t_bar: norm.normalize(s[ix.input].temp),
                    k_bar: k_bar(ix.cycle, last),
                    target: norm.normalize(s[ix.target].temp),
                }
            })
            .collect()
    };
    PairSets {
        train: make(&indices[0]),
        validation: make(&indices[1]),
        test: make(&indices[2]),
    }
}

/// Full ingestion: CC detection, normalization from the training split,
/// pair construction.
pub fn prepare(dataset: &CycleDataset, layout: &PairLayout) -> Result<(NormalizationParams, PairSets)> {
    let idx = split_indices(dataset, layout)?;
    let norm = compute_normalization(dataset, &idx[0])?;
    Ok((norm, build_pairs(dataset, &norm, &idx)))
}
