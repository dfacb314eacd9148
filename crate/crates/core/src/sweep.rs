//! Grid evaluation over `(drive, T, U, τ)` for any subset of methods.
//!
//! The expensive object is the propagator of each `(drive, U, τ)`; it is
//! built once and reused for every temperature. The non-interacting
//! propagator does not depend on `U` and is built once per `(drive, τ)`,
//! serving both the NI and the exact+NI records of every `U`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::{
    scheme_outcome, ApproximationScheme, Grid, RampEndpoints, SchemeOutcome, ThermalInputs, RELATIVE_ERROR_FLOOR,
};
use crate::drive::{DriveKind, DriveProtocol};
use crate::error::{domain, Error, Result};
use crate::lattice::{build_sector_basis, ChainOperators, ChainSpec};
use crate::metrics::{EvolvedHamiltonian, Method, WorkEntropyRecord};
use crate::propagate::{StepPolicy, DEFAULT_STEPS};

pub const PRESET_TEMPERATURES: [f64; 3] = [0.2, 2.5, 20.0];
pub const PRESET_U_COUNT: usize = 21;
pub const PRESET_TAU_COUNT: usize = 20;
pub const PRESET_U_RANGE: [f64; 2] = [0.0, 10.0];
pub const PRESET_TAU_RANGE: [f64; 2] = [0.5, 10.0];

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(rename = "L")]
    pub sites: usize,
    pub drives: Vec<DriveKind>,
    /// Units of `J/k_B`.
    pub temperatures: Vec<f64>,
    #[serde(rename = "U_values")]
    pub u_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub steps: StepPolicy,
    pub methods: Vec<Method>,
    pub output: Option<PathBuf>,
}

/// Flat file form of [`SweepConfig`]; absent keys take preset values.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "L")]
    sites: usize,
    drives: Option<Vec<String>>,
    temperatures: Option<Vec<f64>>,
    #[serde(rename = "U_values")]
    u_values: Option<Vec<f64>>,
    #[serde(rename = "U_range")]
    u_range: Option<[f64; 2]>,
    #[serde(rename = "U_count")]
    u_count: Option<usize>,
    tau_values: Option<Vec<f64>>,
    tau_range: Option<[f64; 2]>,
    tau_count: Option<usize>,
    steps: Option<usize>,
    tol: Option<f64>,
    methods: Option<Vec<String>>,
    output: Option<PathBuf>,
}

fn axis(name: &str, values: Option<Vec<f64>>, range: Option<[f64; 2]>, count: Option<usize>, preset: (f64, f64, usize)) -> Result<Vec<f64>> {
    match (values, range) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("give either {name}_values or {name}_range, not both"))),
        (Some(v), None) => {
            if count.is_some() {
                return Err(Error::Parse(format!("{name}_count only applies to {name}_range")));
            }
            Ok(v)
        }
        (None, Some([lo, hi])) => Ok(linspace(lo, hi, count.unwrap_or(preset.2))),
        (None, None) => Ok(linspace(preset.0, preset.1, count.unwrap_or(preset.2))),
    }
}

impl SweepConfig {
    /// Full grid: all drives, three temperatures, 21 `U` in `[0, 10]`,
    /// 20 `τ` in `[0.5, 10]`, every method, 2000 steps.
    pub fn preset(sites: usize) -> Self {
        Self {
            sites,
            drives: DriveKind::PRESETS.to_vec(),
            temperatures: PRESET_TEMPERATURES.to_vec(),
            u_values: linspace(PRESET_U_RANGE[0], PRESET_U_RANGE[1], PRESET_U_COUNT),
            tau_values: linspace(PRESET_TAU_RANGE[0], PRESET_TAU_RANGE[1], PRESET_TAU_COUNT),
            steps: StepPolicy::Fixed(DEFAULT_STEPS),
            methods: Method::ALL.to_vec(),
            output: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let preset = Self::preset(raw.sites);
        let drives = match raw.drives {
            Some(d) => d.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => preset.drives,
        };
        let methods = match raw.methods {
            Some(m) => m.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => preset.methods,
        };
        let steps = match (raw.steps, raw.tol) {
            (Some(_), Some(_)) => return Err(Error::Parse("give either steps or tol, not both".into())),
            (Some(n), None) => StepPolicy::Fixed(n),
            (None, Some(t)) => StepPolicy::Converged(t),
            (None, None) => preset.steps,
        };
        let config = Self {
            sites: raw.sites,
            drives,
            temperatures: raw.temperatures.unwrap_or(preset.temperatures),
            u_values: axis(
                "U",
                raw.u_values,
                raw.u_range,
                raw.u_count,
                (PRESET_U_RANGE[0], PRESET_U_RANGE[1], PRESET_U_COUNT),
            )?,
            tau_values: axis(
                "tau",
                raw.tau_values,
                raw.tau_range,
                raw.tau_count,
                (PRESET_TAU_RANGE[0], PRESET_TAU_RANGE[1], PRESET_TAU_COUNT),
            )?,
            steps,
            methods,
            output: raw.output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        ChainSpec::half_filled(self.sites, 0.0)?;
        fn distinct<T: PartialEq + std::fmt::Debug>(what: &str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(domain(format!("{what} must not be empty")));
            }
            for (i, a) in v.iter().enumerate() {
                if v[..i].contains(a) {
                    return Err(domain(format!("{what} lists {a:?} twice")));
                }
            }
            Ok(())
        }
        distinct("drives", &self.drives)?;
        distinct("methods", &self.methods)?;
        distinct("temperatures", &self.temperatures)?;
        distinct("U values", &self.u_values)?;
        distinct("tau values", &self.tau_values)?;
        if self.drives.contains(&DriveKind::Custom) {
            return Err(domain("sweeps only support the preset drives"));
        }
        for &kind in &self.drives {
            DriveProtocol::preset(kind, self.sites, 1.0)?;
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(domain(format!("temperatures must be positive and finite, got {t}")));
        }
        if let Some(u) = self.u_values.iter().find(|u| !u.is_finite()) {
            return Err(domain(format!("U values must be finite, got {u}")));
        }
        if let Some(t) = self.tau_values.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(domain(format!("tau values must be positive and finite, got {t}")));
        }
        self.steps.validate()
    }

    pub fn cell_count(&self) -> usize {
        self.drives.len() * self.temperatures.len() * self.u_values.len() * self.tau_values.len() * self.methods.len()
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One propagator built during a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorInfo {
    pub drive: DriveKind,
    /// `None` for the non-interacting propagator shared by every `U`.
    #[serde(rename = "U")]
    pub interaction: Option<f64>,
    pub tau: f64,
    pub steps: usize,
    pub unitarity_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: SweepConfig,
    pub config_hash: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_seconds: f64,
    pub threads: usize,
    pub relative_error_floor: f64,
    pub propagators: Vec<PropagatorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<WorkEntropyRecord>,
    pub provenance: Provenance,
}

/// Write order: drive, T, U, τ, method, with names compared as text.
pub fn record_order(a: &WorkEntropyRecord, b: &WorkEntropyRecord) -> std::cmp::Ordering {
    a.drive
        .as_str()
        .cmp(b.drive.as_str())
        .then(a.temperature.total_cmp(&b.temperature))
        .then(a.interaction.total_cmp(&b.interaction))
        .then(a.tau.total_cmp(&b.tau))
        .then(a.method.as_str().cmp(b.method.as_str()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn cell_key(drive: DriveKind, u: Option<f64>, tau: f64) -> String {
    match u {
        Some(u) => format!("drive={drive} U={u} tau={tau}"),
        None => format!("drive={drive} U=all tau={tau} (non-interacting)"),
    }
}

fn record(
    drive: DriveKind,
    thermal: &ThermalInputs,
    u: f64,
    tau: f64,
    method: Method,
    out: SchemeOutcome,
    steps: usize,
) -> WorkEntropyRecord {
    WorkEntropyRecord {
        drive,
        temperature: thermal.temperature,
        interaction: u,
        tau,
        method,
        w_avg: out.w_avg,
        w_ext: -out.w_avg,
        d_f: out.d_f,
        d_s: out.entropy.value,
        steps,
        clamped: out.entropy.clamped,
        error_floor: false,
    }
}

/// Exact model of one `(drive, U)` with its thermal inputs per temperature.
struct ExactContext {
    drive: usize,
    u: f64,
    ends: RampEndpoints,
    thermal: Vec<ThermalInputs>,
}

/// Non-interacting model of one drive.
struct NiContext {
    ends: RampEndpoints,
    thermal: Vec<ThermalInputs>,
}

enum Task {
    Exact { context: usize, tau: f64 },
    NonInteracting { drive: usize, tau: f64 },
}

/// Evaluates every cell of `config`. `progress(done, total)` is called
/// after each propagator.
pub fn run_sweep(config: &SweepConfig, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<SweepResult> {
    config.validate()?;
    let clock = Instant::now();
    let started_unix = unix_now();
    let want = |m| config.methods.contains(&m);
    let need_exact_state = want(Method::Exact) || want(Method::ExactNonInteracting);
    let need_ni = want(Method::NonInteracting) || want(Method::ExactNonInteracting);

    let base = ChainSpec::half_filled(config.sites, 0.0)?;
    let basis = build_sector_basis(&base)?;
    let ni_ops = ChainOperators::new(&basis, &base)?;
    let drives: Vec<DriveProtocol> = config
        .drives
        .iter()
        .map(|&k| DriveProtocol::preset(k, config.sites, 1.0))
        .collect::<Result<_>>()?;
    let thermal_for = |ends: &RampEndpoints| -> Result<Vec<ThermalInputs>> {
        config.temperatures.iter().map(|&t| ThermalInputs::new(ends, t)).collect()
    };

    let ni: Vec<NiContext> = drives
        .par_iter()
        .map(|d| {
            let ends = RampEndpoints::new(ni_ops.clone(), d)?;
            let thermal = thermal_for(&ends)?;
            Ok(NiContext { ends, thermal })
        })
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, f64)> = if need_exact_state {
        (0..drives.len()).flat_map(|d| config.u_values.iter().map(move |&u| (d, u))).collect()
    } else {
        Vec::new()
    };
    let exact: Vec<ExactContext> = pairs
        .par_iter()
        .map(|&(d, u)| {
            let ops = ni_ops.with_interaction(u);
            let ends = RampEndpoints::new(ops, &drives[d])?;
            let thermal = thermal_for(&ends)?;
            Ok(ExactContext { drive: d, u, ends, thermal })
        })
        .collect::<Result<_>>()?;
    let exact_index: HashMap<(usize, u64), usize> =
        exact.iter().enumerate().map(|(i, c)| ((c.drive, c.u.to_bits()), i)).collect();

    let mut tasks = Vec::new();
    if want(Method::Exact) {
        for (i, _) in exact.iter().enumerate() {
            for &tau in &config.tau_values {
                tasks.push(Task::Exact { context: i, tau });
            }
        }
    }
    if need_ni {
        for d in 0..drives.len() {
            for &tau in &config.tau_values {
                tasks.push(Task::NonInteracting { drive: d, tau });
            }
        }
    }

    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let outputs: Vec<(Vec<WorkEntropyRecord>, PropagatorInfo)> = tasks
        .par_iter()
        .map(|task| {
            let result = match *task {
                Task::Exact { context, tau } => {
                    let c = &exact[context];
                    let kind = config.drives[c.drive];
                    let run = || -> Result<_> {
                        let drive = drives[c.drive].with_tau(tau)?;
                        let probes: Vec<_> = c.thermal.iter().map(|t| &t.state).collect();
                        let prop = config.steps.propagate(&c.ends.ops, &drive, &c.ends.hf, &probes)?;
                        let evolved = EvolvedHamiltonian::new(&prop, &c.ends.hf)?;
                        let ni_thermal = &ni[c.drive].thermal;
                        let mut records = Vec::new();
                        for (t, nt) in c.thermal.iter().zip(ni_thermal) {
                            let out = scheme_outcome(ApproximationScheme::EXACT, t, &c.ends, &evolved, t.d_f, nt.d_f)?;
                            records.push(record(kind, t, c.u, tau, Method::Exact, out, prop.steps));
                        }
                        let info = PropagatorInfo {
                            drive: kind,
                            interaction: Some(c.u),
                            tau,
                            steps: prop.steps,
                            unitarity_error: prop.unitarity_error(),
                        };
                        Ok((records, info))
                    };
                    run().map_err(|e| Error::Cell { key: cell_key(kind, Some(c.u), tau), source: Box::new(e) })
                }
                Task::NonInteracting { drive: d, tau } => {
                    let kind = config.drives[d];
                    let n = &ni[d];
                    let run = || -> Result<_> {
                        let drive = drives[d].with_tau(tau)?;
                        let probes: Vec<_> = n.thermal.iter().map(|t| &t.state).collect();
                        let prop = config.steps.propagate(&n.ends.ops, &drive, &n.ends.hf, &probes)?;
                        let evolved = EvolvedHamiltonian::new(&prop, &n.ends.hf)?;
                        let mut records = Vec::new();
                        for (ti, nt) in n.thermal.iter().enumerate() {
                            let ni_out = if want(Method::NonInteracting) {
                                Some(scheme_outcome(ApproximationScheme::NI, nt, &n.ends, &evolved, nt.d_f, nt.d_f)?)
                            } else {
                                None
                            };
                            for &u in &config.u_values {
                                if let Some(out) = ni_out {
                                    records.push(record(kind, nt, u, tau, Method::NonInteracting, out, prop.steps));
                                }
                                if want(Method::ExactNonInteracting) {
                                    let c = &exact[exact_index[&(d, u.to_bits())]];
                                    let t = &c.thermal[ti];
                                    let out = scheme_outcome(
                                        ApproximationScheme::EXACT_NI,
                                        t,
                                        &n.ends,
                                        &evolved,
                                        t.d_f,
                                        nt.d_f,
                                    )
                                    .map_err(|e| Error::Cell {
                                        key: format!("{} T={}", cell_key(kind, Some(u), tau), t.temperature),
                                        source: Box::new(e),
                                    })?;
                                    records.push(record(kind, t, u, tau, Method::ExactNonInteracting, out, prop.steps));
                                }
                            }
                        }
                        let info = PropagatorInfo {
                            drive: kind,
                            interaction: None,
                            tau,
                            steps: prop.steps,
                            unitarity_error: prop.unitarity_error(),
                        };
                        Ok((records, info))
                    };
                    run().map_err(|e| match e {
                        Error::Cell { .. } => e,
                        e => Error::Cell { key: cell_key(kind, None, tau), source: Box::new(e) },
                    })
                }
            };
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            progress(k, total);
            result
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(config.cell_count());
    let mut propagators = Vec::with_capacity(outputs.len());
    for (r, info) in outputs {
        records.extend(r);
        propagators.push(info);
    }
    mark_error_floor(&mut records);
    records.sort_by(record_order);
    propagators.sort_by(|a, b| {
        a.drive
            .as_str()
            .cmp(b.drive.as_str())
            .then(a.interaction.is_some().cmp(&b.interaction.is_some()))
            .then(a.interaction.unwrap_or(0.0).total_cmp(&b.interaction.unwrap_or(0.0)))
            .then(a.tau.total_cmp(&b.tau))
    });

    let provenance = Provenance {
        config: config.clone(),
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        finished_unix: unix_now(),
        wall_seconds: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        relative_error_floor: RELATIVE_ERROR_FLOOR,
        propagators,
    };
    Ok(SweepResult { records, provenance })
}

/// Flags approximate records whose exact counterpart has `|W_ext|` below
/// the relative-error floor. Without exact records nothing is flagged.
fn mark_error_floor(records: &mut [WorkEntropyRecord]) {
    let key = |r: &WorkEntropyRecord| (r.drive, r.temperature.to_bits(), r.interaction.to_bits(), r.tau.to_bits());
    let exact: HashMap<_, f64> =
        records.iter().filter(|r| r.method == Method::Exact).map(|r| (key(r), r.w_ext)).collect();
    for r in records.iter_mut().filter(|r| r.method != Method::Exact) {
        if let Some(w) = exact.get(&key(r)) {
            r.error_floor = w.abs() < RELATIVE_ERROR_FLOOR;
        }
    }
}

/// Record fields that can be laid out as a `U × τ` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    WorkAverage,
    WorkExtracted,
    FreeEnergy,
    Entropy,
}

impl Quantity {
    pub fn of(&self, r: &WorkEntropyRecord) -> f64 {
        match self {
            Quantity::WorkAverage => r.w_avg,
            Quantity::WorkExtracted => r.w_ext,
            Quantity::FreeEnergy => r.d_f,
            Quantity::Entropy => r.d_s,
        }
    }
}

impl SweepResult {
    /// Records of one `(drive, T, method)` panel.
    pub fn panel(&self, drive: DriveKind, temperature: f64, method: Method) -> Vec<&WorkEntropyRecord> {
        self.records
            .iter()
            .filter(|r| r.drive == drive && r.temperature == temperature && r.method == method)
            .collect()
    }

    /// One panel as a `U × τ` grid over the configured axes.
    pub fn grid(&self, drive: DriveKind, temperature: f64, method: Method, quantity: Quantity) -> Result<Grid> {
        let config = &self.provenance.config;
        let panel = self.panel(drive, temperature, method);
        let lookup: HashMap<(u64, u64), f64> =
            panel.iter().map(|r| ((r.interaction.to_bits(), r.tau.to_bits()), quantity.of(r))).collect();
        let mut values = Vec::with_capacity(config.u_values.len() * config.tau_values.len());
        for u in &config.u_values {
            for tau in &config.tau_values {
                let v = lookup.get(&(u.to_bits(), tau.to_bits())).ok_or_else(|| {
                    domain(format!("no {method} record for drive={drive} T={temperature} U={u} tau={tau}"))
                })?;
                values.push(*v);
            }
        }
        Grid::new(config.u_values.clone(), config.tau_values.clone(), values)
    }
}

/// Location of an extreme value; `u` is `None` when the method does not
/// depend on `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub u: Option<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSummary {
    pub drive: DriveKind,
    pub temperature: f64,
    pub method: Method,
    pub cells: usize,
    pub w_ext_min: Extremum,
    pub w_ext_max: Extremum,
    pub d_s_min: Extremum,
    pub d_s_max: Extremum,
}

/// Minimum and maximum of `W_ext` and `ΔS` per `(drive, T, method)`, in
/// record order; ties keep the first cell.
pub fn summarize(result: &SweepResult) -> Vec<PanelSummary> {
    let mut out: Vec<PanelSummary> = Vec::new();
    for r in &result.records {
        let u = (r.method != Method::NonInteracting).then_some(r.interaction);
        let here = |value| Extremum { value, u, tau: r.tau };
        let same_panel = |s: &PanelSummary| s.drive == r.drive && s.temperature == r.temperature && s.method == r.method;
        match out.iter_mut().find(|s| same_panel(s)) {
            Some(s) => {
                s.cells += 1;
                if r.w_ext < s.w_ext_min.value {
                    s.w_ext_min = here(r.w_ext);
                }
                if r.w_ext > s.w_ext_max.value {
                    s.w_ext_max = here(r.w_ext);
                }
                if r.d_s < s.d_s_min.value {
                    s.d_s_min = here(r.d_s);
                }
                if r.d_s > s.d_s_max.value {
                    s.d_s_max = here(r.d_s);
                }
            }
            None => out.push(PanelSummary {
                drive: r.drive,
                temperature: r.temperature,
                method: r.method,
                cells: 1,
                w_ext_min: here(r.w_ext),
                w_ext_max: here(r.w_ext),
                d_s_min: here(r.d_s),
                d_s_max: here(r.d_s),
            }),
        }
    }
    out
}
