//! Built-in invariant suite run by the `validate` command.
//!
//! Every check reduces to a non-negative violation measure per cell; the
//! check passes when the worst cell stays within its tolerance.

use std::fmt;

use rayon::prelude::*;

use crate::approx::{scheme_outcome, ApproximationScheme, ModelPair, ThermalInputs};
use crate::drive::{DriveKind, DriveProtocol};
use crate::error::Result;
use crate::lattice::ChainSpec;
use crate::metrics::{average_work, jarzynski_check, work_distribution, EvolvedHamiltonian, JARZYNSKI_TOL};
use crate::propagate::{propagate_with, PropagationOptions, UNITARITY_TOL};
use crate::sweep::PRESET_TEMPERATURES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Unitarity,
    Normalization,
    FirstMoment,
    Jarzynski,
    SecondLaw,
    NiInteractionIndependence,
    EntropyClamp,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Unitarity,
        Check::Normalization,
        Check::FirstMoment,
        Check::Jarzynski,
        Check::SecondLaw,
        Check::NiInteractionIndependence,
        Check::EntropyClamp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Check::Unitarity => "unitarity",
            Check::Normalization => "normalization",
            Check::FirstMoment => "first-moment",
            Check::Jarzynski => "jarzynski",
            Check::SecondLaw => "second-law",
            Check::NiInteractionIndependence => "ni-u-independence",
            Check::EntropyClamp => "entropy-clamp",
        }
    }

    /// Largest acceptable violation.
    pub fn tolerance(&self) -> f64 {
        match self {
            Check::Unitarity => UNITARITY_TOL,
            Check::Normalization => 1e-10,
            Check::FirstMoment => 1e-9,
            Check::Jarzynski => JARZYNSKI_TOL,
            Check::SecondLaw => 1e-10,
            Check::NiInteractionIndependence => 1e-12,
            Check::EntropyClamp => 0.0,
        }
    }

    fn unit(&self) -> &'static str {
        match self {
            Check::FirstMoment | Check::NiInteractionIndependence => " J",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Chains of 2 and 4 sites only.
    pub quick: bool,
    /// Test hook: halve one slice of every interacting propagator.
    pub inject_fault: bool,
    pub steps: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { quick: true, inject_fault: false, steps: 400 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: Check,
    pub worst: f64,
    pub worst_cell: String,
    pub cells: usize,
    pub passed: bool,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<18} worst={:.3e}{} tol={:.1e}{} cells={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.check.name(),
            self.worst,
            self.check.unit(),
            self.check.tolerance(),
            self.check.unit(),
            self.cells
        )?;
        if !self.passed {
            write!(f, " at {}", self.worst_cell)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn outcome(&self, check: Check) -> &CheckOutcome {
        self.outcomes.iter().find(|o| o.check == check).expect("every check is reported")
    }
}

struct Sample {
    check: Check,
    value: f64,
    cell: String,
}

fn grid(quick: bool) -> Vec<(usize, DriveKind, f64)> {
    let mut sizes = vec![2, 4];
    if !quick {
        sizes.push(6);
    }
    let mut cells = Vec::new();
    for l in sizes {
        for kind in DriveKind::PRESETS {
            for tau in [0.5, 3.0, 10.0] {
                cells.push((l, kind, tau));
            }
        }
    }
    cells
}

fn interactions(sites: usize) -> &'static [f64] {
    if sites >= 6 {
        &[0.0, 5.0]
    } else {
        &[0.0, 2.5, 7.0]
    }
}

fn evaluate(sites: usize, kind: DriveKind, tau: f64, options: &ValidationOptions) -> Result<Vec<Sample>> {
    let drive = DriveProtocol::preset(kind, sites, tau)?;
    let prop_opts = PropagationOptions {
        steps: options.steps,
        verify_unitarity: false,
        ..PropagationOptions::default()
    };
    let faulty = PropagationOptions { fault_step: options.inject_fault.then_some(options.steps / 2), ..prop_opts };
    let mut samples = Vec::new();
    let mut push = |check, value: f64, cell: String| samples.push(Sample { check, value, cell });
    let mut ni_work: Vec<Vec<f64>> = Vec::new();
    for &u in interactions(sites) {
        let spec = ChainSpec::half_filled(sites, u)?;
        let models = ModelPair::new(&spec, &drive)?;
        let exact = propagate_with(&models.exact.ops, &drive, &faulty)?;
        let ni = propagate_with(&models.ni.ops, &drive, &prop_opts)?;
        let base = format!("L={sites} drive={kind} U={u} tau={tau}");
        let cell = |t: f64| format!("{base} T={t}");
        push(Check::Unitarity, exact.unitarity_error(), format!("{base} (exact)"));
        push(Check::Unitarity, ni.unitarity_error(), format!("{base} (ni)"));
        let evolved_ni = EvolvedHamiltonian::new(&ni, &models.ni.hf)?;
        let mut ni_row = Vec::new();
        for t in PRESET_TEMPERATURES {
            let th = ThermalInputs::new(&models.exact, t)?;
            let th_ni = ThermalInputs::new(&models.ni, t)?;
            let e = &models.exact;
            let dist = work_distribution(&e.initial, &th.state.populations, &exact, &e.final_)?;
            let norm = (dist.total_probability() - 1.0)
                .abs()
                .max(-dist.min_probability())
                .max(
                    dist.initial_marginal()
                        .iter()
                        .zip(&th.state.populations)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                );
            push(Check::Normalization, norm, cell(t));
            let w = average_work(&th.state, &exact, &e.h0, &e.hf)?;
            push(Check::FirstMoment, (dist.mean_work() - w).abs(), cell(t));
            push(Check::Jarzynski, jarzynski_check(&dist, th.beta, th.d_f).relative, cell(t));
            push(Check::SecondLaw, -(th.beta * (w - th.d_f)), cell(t));
            let ni_out = scheme_outcome(ApproximationScheme::NI, &th_ni, &models.ni, &evolved_ni, th.d_f, th_ni.d_f)?;
            ni_row.push(ni_out.w_avg);
            let mixed =
                scheme_outcome(ApproximationScheme::EXACT_NI, &th, &models.ni, &evolved_ni, th.d_f, th_ni.d_f)?;
            push(Check::EntropyClamp, -mixed.entropy.value, cell(t));
        }
        ni_work.push(ni_row);
    }
    for (ti, t) in PRESET_TEMPERATURES.iter().enumerate() {
        let column = ni_work.iter().map(|row| row[ti]);
        let spread = column.clone().fold(f64::NEG_INFINITY, f64::max) - column.fold(f64::INFINITY, f64::min);
        push(
            Check::NiInteractionIndependence,
            spread,
            format!("L={sites} drive={kind} tau={tau} T={t}"),
        );
    }
    Ok(samples)
}

/// Runs every check over the built-in grid.
pub fn run_validation(options: &ValidationOptions) -> Result<ValidationReport> {
    let cells = grid(options.quick);
    let samples: Vec<Vec<Sample>> = cells
        .par_iter()
        .map(|&(l, kind, tau)| evaluate(l, kind, tau, options))
        .collect::<Result<_>>()?;
    let outcomes = Check::ALL
        .iter()
        .map(|&check| {
            let mut worst = f64::NEG_INFINITY;
            let mut worst_cell = String::new();
            let mut count = 0;
            for s in samples.iter().flatten().filter(|s| s.check == check) {
                count += 1;
                // a NaN sticks as the worst value and fails the check
                if !worst.is_nan() && !(s.value <= worst) {
                    worst = s.value;
                    worst_cell = s.cell.clone();
                }
            }
            let passed = count > 0 && worst <= check.tolerance();
            CheckOutcome { check, worst, worst_cell, cells: count, passed }
        })
        .collect();
    Ok(ValidationReport { outcomes })
}
