//! Lumped (single-temperature) cell thermal model.
//!
//! The cell is treated as one thermal mass exchanging heat with ambient air
//! by convection and heated by ohmic loss:
//!
//! ```text
//! dT/dt = (I²R − hA(T − T∞)) / (ρ c_p ν)
//! ```
//!
//! integrated with explicit Euler at the sampling interval τ. After min-max
//! normalization the same update reads `T̄' = γ T̄ + D + ξ`, which iterated N
//! times has the closed form implemented by [`closed_form_horizon`].
//!
//! The simulator doubles as the ground-truth oracle for the pipeline: the
//! resistance schedule fixes the true power-fade curve `R(0)/R(k)`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{CycleDataset, CycleRecord, NormalizationParams, Sample};
use crate::error::{Error, Result};
use crate::soh::{SohCurve, SohPoint, SohSource};

/// Physical constants of the lumped model.
///
/// Defaults are a synthetic cylindrical-cell parameter set (≈45 g cell,
/// 1000 s thermal time constant) that gives a 10-12 °C rise over a 1C
/// constant-current charge at beginning of life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalParams {
    /// Convective heat transfer coefficient, W/(m²·K).
    pub h: f64,
    /// Cell surface area, m².
    pub area: f64,
    /// Density, kg/m³.
    pub rho: f64,
    /// Specific heat capacity, J/(kg·K).
    pub cp: f64,
    /// Cell volume, m³.
    pub nu: f64,
    /// Sampling interval, s.
    pub tau: f64,
    /// Ambient temperature, °C.
    pub t_ambient: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            h: 10.0,
            area: 0.0042,
            rho: 2700.0,
            cp: 1000.0,
            nu: 1.65e-5,
            tau: 10.0,
            t_ambient: 23.0,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("h", self.h),
            ("area", self.area),
            ("rho", self.rho),
            ("cp", self.cp),
            ("nu", self.nu),
            ("tau", self.tau),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !self.t_ambient.is_finite() {
            return Err(Error::InvalidParams("t_ambient must be finite".into()));
        }
        let k = self.step_decay();
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::InvalidParams(format!(
                "h·A·τ/(ρ·c_p·ν) = {k} outside (0, 1); Euler step unstable"
            )));
        }
        Ok(())
    }

    /// ρ·c_p·ν, J/K.
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cp * self.nu
    }

    /// h·A·τ/(ρ·c_p·ν): fraction of the excess temperature lost per step.
    pub fn step_decay(&self) -> f64 {
        self.h * self.area * self.tau / self.heat_capacity()
    }

    /// Per-step retention factor γ of the normalized model.
    pub fn gamma(&self) -> f64 {
        1.0 - self.step_decay()
    }

    /// Ambient forcing term ξ of the normalized model.
    pub fn xi(&self, norm: &NormalizationParams) -> f64 {
        self.step_decay() * (self.t_ambient - norm.t_min) / norm.delta()
    }

    /// Per-step normalized heat generation D = τI²R/(ρ c_p ν Δ_T).
    pub fn heat_term(&self, current: f64, resistance: f64, norm: &NormalizationParams) -> f64 {
        self.tau * current * current * resistance / (self.heat_capacity() * norm.delta())
    }

    /// Steady-state rise above ambient, I²R/(hA).
    pub fn steady_state_rise(&self, current: f64, resistance: f64) -> f64 {
        current * current * resistance / (self.h * self.area)
    }
}

/// One explicit Euler step of the lumped model.
pub fn step(temp: f64, params: &ThermalParams, current: f64, resistance: f64) -> Result<f64> {
    if !temp.is_finite() {
        return Err(Error::NonFiniteTemperature(temp));
    }
    let heating = current * current * resistance;
    let cooling = params.h * params.area * (temp - params.t_ambient);
    Ok(temp + params.tau * (heating - cooling) / params.heat_capacity())
}

/// One step of the normalized model, `γ T̄ + D + ξ`.
pub fn normalized_step(t_bar: f64, heat: f64, gamma: f64, xi: f64) -> f64 {
    gamma * t_bar + heat + xi
}

/// `Σ_{j=0}^{n-1} γ^j`, with the γ = 1 limit handled.
pub fn geometric_sum(gamma: f64, n: u32) -> f64 {
    let n_f = f64::from(n);
    let delta = 1.0 - gamma;
    if delta == 0.0 {
        n_f
    } else if gamma > 0.0 {
        // expm1/ln_1p keep full precision when γ is close to 1
        -(n_f * (-delta).ln_1p()).exp_m1() / delta
    } else {
        (1.0 - gamma.powi(n as i32)) / delta
    }
}

/// Normalized temperature N steps ahead under constant heat generation:
/// `γᴺ T̄ + (D + ξ) Σ_{j<N} γʲ`.
pub fn closed_form_horizon(t_bar: f64, heat: f64, gamma: f64, xi: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParams("horizon N must be >= 1".into()));
    }
    let decay = if gamma > 0.0 {
        (f64::from(n) * gamma.ln()).exp()
    } else {
        gamma.powi(n as i32)
    };
    Ok(decay * t_bar + (heat + xi) * geometric_sum(gamma, n))
}

/// Growth law of the equivalent series resistance over cycle life.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `R(k) = R_bol (1 + growth·k/E)`
    Linear { growth: f64 },
    /// `R(k) = R_bol (1 + Σ_i coeffs[i]·(k/E)^(i+1))`
    Polynomial { coeffs: Vec<f64> },
    /// Absolute per-cycle resistance in Ω, indexed by cycle.
    Table { ohms: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceSchedule {
    pub r_bol: f64,
    #[serde(flatten)]
    pub kind: ScheduleKind,
}

impl ResistanceSchedule {
    pub fn constant(r_bol: f64) -> Self {
        Self {
            r_bol,
            kind: ScheduleKind::Constant,
        }
    }

    pub fn linear(r_bol: f64, growth: f64) -> Self {
        Self {
            r_bol,
            kind: ScheduleKind::Linear { growth },
        }
    }

    /// Linear growth that puts the power-fade SoH at `soh_eol_percent` on
    /// the last cycle.
    pub fn linear_to_eol_soh(r_bol: f64, soh_eol_percent: f64) -> Self {
        Self::linear(r_bol, 100.0 / soh_eol_percent - 1.0)
    }

    pub fn resistance(&self, cycle: usize, last_cycle: usize) -> f64 {
        let frac = if last_cycle == 0 {
            0.0
        } else {
            cycle as f64 / last_cycle as f64
        };
        match &self.kind {
            ScheduleKind::Constant => self.r_bol,
            ScheduleKind::Linear { growth } => self.r_bol * (1.0 + growth * frac),
            ScheduleKind::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for c in coeffs.iter().rev() {
                    acc = (acc + c) * frac;
                }
                self.r_bol * (1.0 + acc)
            }
            ScheduleKind::Table { ohms } => ohms[cycle],
        }
    }

    pub fn validate(&self, last_cycle: usize) -> Result<()> {
        if !(self.r_bol.is_finite() && self.r_bol > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "r_bol must be > 0, got {}",
                self.r_bol
            )));
        }
        if let ScheduleKind::Table { ohms } = &self.kind {
            if ohms.len() <= last_cycle {
                return Err(Error::InvalidSchedule(format!(
                    "table has {} entries, need {}",
                    ohms.len(),
                    last_cycle + 1
                )));
            }
            if ohms[0] != self.r_bol {
                return Err(Error::InvalidSchedule(
                    "table entry for cycle 0 must equal r_bol".into(),
                ));
            }
        }
        for k in 0..=last_cycle {
            let r = self.resistance(k, last_cycle);
            if !r.is_finite() || r < self.r_bol {
                return Err(Error::InvalidSchedule(format!(
                    "R({k}) = {r} is below r_bol = {}",
                    self.r_bol
                )));
            }
        }
        Ok(())
    }
}

/// Per-cycle load profile: one constant-current charge then a rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleProfile {
    /// CC charge current, A.
    pub current: f64,
    /// CC phase length, s.
    pub cc_duration: f64,
    /// Rest after the CC phase, s.
    pub rest_duration: f64,
    /// Index of the last cycle E; cycles 0..=E are simulated.
    pub n_cycles: usize,
    /// Open-circuit voltage used for the synthetic voltage trace, V.
    pub ocv: f64,
}

impl Default for CycleProfile {
    fn default() -> Self {
        Self {
            current: 3.0,
            cc_duration: 2400.0,
            rest_duration: 600.0,
            n_cycles: 997,
            ocv: 3.6,
        }
    }
}

impl CycleProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.current.is_finite() && self.current > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "CC current must be > 0, got {}",
                self.current
            )));
        }
        if !(self.cc_duration >= 0.0 && self.rest_duration >= 0.0) {
            return Err(Error::InvalidProfile("durations must be >= 0".into()));
        }
        Ok(())
    }

    fn phase_samples(duration: f64, tau: f64, phase: &str) -> usize {
        let exact = duration / tau;
        let n = exact.floor();
        if (exact - n).abs() > 1e-9 * exact.max(1.0) {
            warn!("{phase} duration {duration} s is not a multiple of τ = {tau} s; truncated to {n} samples");
        }
        n as usize
    }

    pub fn cc_samples(&self, tau: f64) -> usize {
        Self::phase_samples(self.cc_duration, tau, "CC")
    }

    pub fn rest_samples(&self, tau: f64) -> usize {
        Self::phase_samples(self.rest_duration, tau, "rest")
    }

    /// Samples per cycle record: one pre-charge rest point, the CC phase,
    /// then the rest phase.
    pub fn samples_per_cycle(&self, tau: f64) -> usize {
        1 + self.cc_samples(tau) + self.rest_samples(tau)
    }
}

/// Simulates one cycle starting at `t_start` seconds with initial temperature
/// `t0`.
///
/// Sample 0 is a rest point (I = 0, V = OCV) so the record begins with a
/// current step into the CC phase; the voltage jumps by exactly `I·R_k`.
/// The current held at sample `i` acts over `[t_i, t_{i+1})`.
pub fn simulate_cycle(
    params: &ThermalParams,
    profile: &CycleProfile,
    r_k: f64,
    t0: f64,
    t_start: f64,
) -> Result<Vec<Sample>> {
    if !(r_k.is_finite() && r_k > 0.0) {
        return Err(Error::InvalidSchedule(format!("R_k must be > 0, got {r_k}")));
    }
    let n_cc = profile.cc_samples(params.tau);
    let n_rest = profile.rest_samples(params.tau);
    let total = 1 + n_cc + n_rest;
    let mut samples = Vec::with_capacity(total);
    let mut temp = t0;
    for i in 0..total {
        let current = if (1..=n_cc).contains(&i) {
            profile.current
        } else {
            0.0
        };
        samples.push(Sample {
            t: t_start + i as f64 * params.tau,
            temp,
            current,
            voltage: profile.ocv + current * r_k,
        });
        temp = step(temp, params, current, r_k)?;
    }
    Ok(samples)
}

/// Simulates cycles `0..=E`, each starting at ambient, and returns the
/// telemetry together with the exact power-fade curve `100·R(0)/R(k)`.
pub fn simulate_life(
    params: &ThermalParams,
    profile: &CycleProfile,
    schedule: &ResistanceSchedule,
) -> Result<(CycleDataset, SohCurve)> {
    params.validate()?;
    profile.validate()?;
    let last = profile.n_cycles;
    schedule.validate(last)?;

    let per_cycle = profile.samples_per_cycle(params.tau) as f64;
    let mut cycles = Vec::with_capacity(last + 1);
    let mut points = Vec::with_capacity(last + 1);
    let r0 = schedule.resistance(0, last);
    for k in 0..=last {
        let r_k = schedule.resistance(k, last);
        let t_start = k as f64 * per_cycle * params.tau;
        let samples = simulate_cycle(params, profile, r_k, params.t_ambient, t_start)?;
        cycles.push(CycleRecord {
            cycle: k,
            t_ambient: params.t_ambient,
            samples,
        });
        points.push(SohPoint {
            cycle: k,
            soh: r0 / r_k * 100.0,
        });
    }
    Ok((
        CycleDataset { cycles },
        SohCurve::new(SohSource::Oracle, points),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> ThermalParams {
        // h·A/(ρ c_p ν) = 0.001 s⁻¹ with ρ c_p ν = 1000 J/K
        ThermalParams {
            h: 1.0,
            area: 1.0,
            rho: 1.0,
            cp: 1000.0,
            nu: 1.0,
            tau: 1.0,
            t_ambient: 23.0,
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = unit_params();
        assert_eq!(step(23.0, &p, 0.0, 0.05).unwrap(), 23.0);
    }

    #[test]
    fn single_euler_step_by_hand() {
        let p = unit_params();
        // I²R/(ρ c_p ν) = 0.005 K/s → I²R = 5 W
        let t = step(23.0, &p, 1.0, 5.0).unwrap();
        assert!((t - 23.005).abs() < 1e-12, "{t}");
    }

    #[test]
    fn non_finite_temperature_rejected() {
        let p = unit_params();
        assert!(matches!(
            step(f64::NAN, &p, 1.0, 1.0),
            Err(Error::NonFiniteTemperature(_))
        ));
    }

    #[test]
    fn monotone_approach_to_steady_state() {
        let p = unit_params();
        let (i, r) = (1.0, 5.0);
        let ss = p.t_ambient + p.steady_state_rise(i, r);
        let mut t = p.t_ambient;
        for _ in 0..20_000 {
            let next = step(t, &p, i, r).unwrap();
            assert!(next > t && next < ss);
            t = next;
        }
        assert!((ss - t) / (ss - p.t_ambient) < 1e-6);
    }

    #[test]
    fn unstable_params_rejected() {
        let p = ThermalParams {
            tau: 2000.0,
            ..unit_params()
        };
        assert!(p.validate().is_err());
        assert!(ThermalParams::default().validate().is_ok());
    }

    #[test]
    fn horizon_base_case_and_hand_value() {
        let one = closed_form_horizon(0.5, 0.07, 0.9, 0.03, 1).unwrap();
        assert!((one - (0.9 * 0.5 + 0.1)).abs() < 1e-15);
        let three = closed_form_horizon(0.5, 0.06, 0.9, 0.04, 3).unwrap();
        assert!((three - 0.6355).abs() < 1e-12, "{three}");
    }

    #[test]
    fn horizon_gamma_one_limit() {
        let v = closed_form_horizon(0.25, 0.01, 1.0, 0.0, 40).unwrap();
        assert!((v - (0.25 + 40.0 * 0.01)).abs() < 1e-14);
        assert!(closed_form_horizon(0.25, 0.01, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn default_profile_rise_is_in_design_band() {
        let p = ThermalParams::default();
        let prof = CycleProfile::default();
        let s = simulate_cycle(&p, &prof, 0.06, p.t_ambient, 0.0).unwrap();
        let peak = s.iter().map(|x| x.temp).fold(f64::MIN, f64::max);
        let rise = peak - p.t_ambient;
        assert!((10.0..=15.0).contains(&rise), "rise {rise}");
    }

    #[test]
    fn rest_only_profile_decays_to_ambient() {
        let p = ThermalParams::default();
        let prof = CycleProfile {
            cc_duration: 0.0,
            rest_duration: 5000.0,
            ..CycleProfile::default()
        };
        let s = simulate_cycle(&p, &prof, 0.06, 35.0, 0.0).unwrap();
        for w in s.windows(2) {
            assert_eq!(w[0].current, 0.0);
            assert!(w[1].temp < w[0].temp && w[1].temp > p.t_ambient);
        }
    }

    #[test]
    fn doubled_resistance_doubles_steady_rise() {
        let p = ThermalParams::default();
        let prof = CycleProfile {
            cc_duration: 40_000.0,
            rest_duration: 0.0,
            ..CycleProfile::default()
        };
        let rise = |r: f64| {
            let s = simulate_cycle(&p, &prof, r, p.t_ambient, 0.0).unwrap();
            s.last().unwrap().temp - p.t_ambient
        };
        let ratio = rise(0.12) / rise(0.06);
        assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn voltage_jump_over_current_step_is_resistance() {
        let p = ThermalParams::default();
        let prof = CycleProfile::default();
        let s = simulate_cycle(&p, &prof, 0.0731, p.t_ambient, 0.0).unwrap();
        let r = (s[1].voltage - s[0].voltage) / (s[1].current - s[0].current);
        assert!((r - 0.0731).abs() < 1e-12);
    }

    #[test]
    fn cc_duration_truncated_to_whole_steps() {
        let prof = CycleProfile {
            cc_duration: 2405.0,
            ..CycleProfile::default()
        };
        assert_eq!(prof.cc_samples(10.0), 240);
    }

    #[test]
    fn schedules() {
        let c = ResistanceSchedule::constant(0.05);
        assert_eq!(c.resistance(500, 997), 0.05);
        let l = ResistanceSchedule::linear(0.05, 0.4286);
        assert_eq!(l.resistance(0, 997), 0.05);
        let soh_eol = 100.0 * 0.05 / l.resistance(997, 997);
        assert!((soh_eol - 100.0 / 1.4286).abs() < 1e-9);
        let poly = ResistanceSchedule {
            r_bol: 0.05,
            kind: ScheduleKind::Polynomial {
                coeffs: vec![0.1, 0.2],
            },
        };
        assert!((poly.resistance(10, 10) - 0.05 * 1.3).abs() < 1e-15);
        let bad = ResistanceSchedule::linear(0.05, -0.1);
        assert!(bad.validate(10).is_err());
        let table = ResistanceSchedule {
            r_bol: 0.05,
            kind: ScheduleKind::Table {
                ohms: vec![0.05, 0.051],
            },
        };
        assert!(table.validate(1).is_ok());
        assert!(table.validate(2).is_err());
    }

    #[test]
    fn constant_schedule_oracle_is_flat() {
        let prof = CycleProfile {
            n_cycles: 5,
            ..CycleProfile::default()
        };
        let (ds, soh) = simulate_life(
            &ThermalParams::default(),
            &prof,
            &ResistanceSchedule::constant(0.06),
        )
        .unwrap();
        assert_eq!(ds.cycles.len(), 6);
        assert!(soh.points.iter().all(|p| p.soh == 100.0));
    }

    #[test]
    fn equilibrium_life_stays_at_ambient() {
        let p = ThermalParams::default();
        let prof = CycleProfile::default();
        let s = simulate_cycle(
            &p,
            &CycleProfile {
                cc_duration: 0.0,
                ..prof
            },
            0.06,
            p.t_ambient,
            0.0,
        )
        .unwrap();
        assert!(s.iter().all(|x| x.temp == p.t_ambient));
    }
}
