//! Exact thermodynamic quantities of a driven closed system: average work,
//! the two-point-measurement work distribution, entropy production and the
//! adiabatic and sudden-quench reference values.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::drive::DriveKind;
use crate::error::{domain, Error, Result};
use crate::linalg::SplitComplex;
use crate::propagate::Propagator;
use crate::spectra::{Spectrum, ThermalState};

/// Imaginary residue of `Tr[U ρ U† H_f]` tolerated before the trace is
/// declared numerically broken.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-10;

/// Relative Jarzynski deviation below which a check passes.
pub const JARZYNSKI_TOL: f64 = 1e-8;

/// How a record was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "ni")]
    NonInteracting,
    #[serde(rename = "exact-ni")]
    ExactNonInteracting,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Exact, Method::NonInteracting, Method::ExactNonInteracting];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::NonInteracting => "ni",
            Method::ExactNonInteracting => "exact-ni",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Method::Exact),
            "ni" => Ok(Method::NonInteracting),
            "exact-ni" | "exact+ni" | "exact_ni" => Ok(Method::ExactNonInteracting),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Work, free energy and entropy of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkEntropyRecord {
    pub drive: DriveKind,
    pub temperature: f64,
    pub interaction: f64,
    pub tau: f64,
    pub method: Method,
    /// ⟨W⟩ (J)
    pub w_avg: f64,
    /// −⟨W⟩ (J)
    pub w_ext: f64,
    /// ΔF (J)
    pub d_f: f64,
    /// ΔS (dimensionless)
    pub d_s: f64,
    pub steps: usize,
    /// The entropy estimate was clamped at zero.
    pub clamped: bool,
    /// The exact reference work of this cell is below the relative-error floor.
    pub error_floor: bool,
}

impl WorkEntropyRecord {
    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }
}

/// `ΔS = β(⟨W⟩ − ΔF)`.
pub fn entropy_variation(w_avg: f64, d_f: f64, beta: f64) -> f64 {
    beta * (w_avg - d_f)
}

fn check_dims(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(domain(format!("{what}: dimension {a} does not match {b}")));
    }
    Ok(())
}

/// `Tr[ρ A]` for symmetric `ρ`, returning `(real, imaginary)` parts.
fn trace_with(rho: &DMatrix<f64>, a: &SplitComplex) -> (f64, f64) {
    let re = rho.component_mul(&a.re).sum();
    let im = rho.component_mul(&a.im.transpose()).sum();
    (re, im)
}

/// `U† H_f U`: the final Hamiltonian pulled back through the evolution, so
/// that `Tr[U ρ₀ U† H_f] = Tr[ρ₀ U† H_f U]` costs one elementwise product
/// per initial state.
#[derive(Debug, Clone)]
pub struct EvolvedHamiltonian {
    pulled_back: SplitComplex,
}

impl EvolvedHamiltonian {
    pub fn new(prop: &Propagator, hf: &DMatrix<f64>) -> Result<Self> {
        check_dims("final Hamiltonian", hf.nrows(), prop.dim())?;
        Ok(Self { pulled_back: prop.split().congruence(hf) })
    }

    pub fn dim(&self) -> usize {
        self.pulled_back.re.nrows()
    }

    /// `Tr[ρ U† H_f U]`, failing if the imaginary residue is not negligible.
    pub fn expectation(&self, rho0: &ThermalState) -> Result<f64> {
        check_dims("initial state", rho0.dim(), self.dim())?;
        let (re, im) = trace_with(&rho0.rho, &self.pulled_back);
        if im.abs() > IMAGINARY_RESIDUE_TOL * re.abs().max(1.0) {
            return Err(Error::Numerical(format!("Tr[ρ_f H_f] has imaginary part {im:e}")));
        }
        Ok(re)
    }
}

/// `Tr[U ρ₀ U† H_f]` with the imaginary residue checked and dropped.
pub fn evolved_energy(rho0: &ThermalState, prop: &Propagator, hf: &DMatrix<f64>) -> Result<f64> {
    check_dims("propagator", prop.dim(), rho0.dim())?;
    EvolvedHamiltonian::new(prop, hf)?.expectation(rho0)
}

/// `⟨W⟩ = Tr[U ρ₀ U† H_f] − Tr[ρ₀ H₀]`.
pub fn average_work(rho0: &ThermalState, prop: &Propagator, h0: &DMatrix<f64>, hf: &DMatrix<f64>) -> Result<f64> {
    check_dims("initial Hamiltonian", h0.nrows(), rho0.dim())?;
    Ok(evolved_energy(rho0, prop, hf)? - rho0.expectation(h0))
}

/// `Tr[ρ₀ (H_f − H₀)]`, the `τ → 0` limit of the average work.
pub fn sudden_quench_work(rho0: &ThermalState, h0: &DMatrix<f64>, hf: &DMatrix<f64>) -> Result<f64> {
    check_dims("initial Hamiltonian", h0.nrows(), rho0.dim())?;
    check_dims("final Hamiltonian", hf.nrows(), rho0.dim())?;
    Ok(rho0.expectation(&(hf - h0)))
}

/// Extracted work in the adiabatic limit, `−Σₙ pₙ⁰ (Eₙ^f − Eₙ⁰)`, pairing
/// initial and final levels by ascending index.
pub fn adiabatic_work(initial: &Spectrum, populations: &[f64], final_: &Spectrum) -> Result<f64> {
    check_dims("final spectrum", final_.dim(), initial.dim())?;
    check_dims("populations", populations.len(), initial.dim())?;
    Ok(-populations
        .iter()
        .zip(initial.eigenvalues.iter().zip(&final_.eigenvalues))
        .map(|(p, (e0, ef))| p * (ef - e0))
        .sum::<f64>())
}

/// Joint two-point-measurement probabilities `p_{n,m}` (row `n` = initial
/// level, column `m` = final level).
#[derive(Debug, Clone)]
pub struct WorkDistribution {
    pub joint: DMatrix<f64>,
    pub initial_energies: Vec<f64>,
    pub final_energies: Vec<f64>,
}

impl WorkDistribution {
    /// `Σ p_{n,m} (E_m^f − Eₙ⁰)`.
    pub fn mean_work(&self) -> f64 {
        let mut total = 0.0;
        for (n, e0) in self.initial_energies.iter().enumerate() {
            for (m, ef) in self.final_energies.iter().enumerate() {
                total += self.joint[(n, m)] * (ef - e0);
            }
        }
        total
    }

    pub fn total_probability(&self) -> f64 {
        self.joint.sum()
    }

    /// Row sums, which reproduce the initial populations.
    pub fn initial_marginal(&self) -> Vec<f64> {
        self.joint.row_iter().map(|r| r.sum()).collect()
    }

    /// Conditional probabilities `p_{m|n}`; rows with zero weight stay zero.
    pub fn conditional(&self) -> DMatrix<f64> {
        let mut out = self.joint.clone();
        for (n, mut row) in out.row_iter_mut().enumerate() {
            let s: f64 = self.joint.row(n).sum();
            if s > 0.0 {
                row /= s;
            }
        }
        out
    }

    /// Most negative entry; rounding may leave tiny negatives.
    pub fn min_probability(&self) -> f64 {
        self.joint.min()
    }
}

/// Squared transition amplitudes `|⟨Ψ_m^f|U|Ψₙ⁰⟩|²` as a matrix indexed
/// `(n, m)`.
pub fn transition_probabilities(initial: &Spectrum, prop: &Propagator, final_: &Spectrum) -> Result<DMatrix<f64>> {
    check_dims("propagator", prop.dim(), initial.dim())?;
    check_dims("final spectrum", final_.dim(), initial.dim())?;
    let u = prop.split();
    let vf_t = final_.eigenvectors.transpose();
    let re = &vf_t * &u.re * &initial.eigenvectors;
    let im = &vf_t * &u.im * &initial.eigenvectors;
    // re[(m, n)] = Re⟨m|U|n⟩
    Ok(DMatrix::from_fn(initial.dim(), final_.dim(), |n, m| {
        re[(m, n)] * re[(m, n)] + im[(m, n)] * im[(m, n)]
    }))
}

/// `p_{n,m} = pₙ⁰ |⟨Ψ_m^f|U|Ψₙ⁰⟩|²`.
pub fn work_distribution(
    initial: &Spectrum,
    populations: &[f64],
    prop: &Propagator,
    final_: &Spectrum,
) -> Result<WorkDistribution> {
    check_dims("populations", populations.len(), initial.dim())?;
    let mut joint = transition_probabilities(initial, prop, final_)?;
    for (n, mut row) in joint.row_iter_mut().enumerate() {
        row *= populations[n];
    }
    Ok(WorkDistribution {
        joint,
        initial_energies: initial.eigenvalues.clone(),
        final_energies: final_.eigenvalues.clone(),
    })
}

/// Outcome of a Jarzynski-equality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JarzynskiCheck {
    /// `|⟨e^{−βW}⟩ − e^{−βΔF}|`
    pub deviation: f64,
    /// deviation divided by `e^{−βΔF}`
    pub relative: f64,
    pub passed: bool,
}

/// Compares `⟨e^{−βW}⟩` over the joint distribution with `e^{−βΔF}`.
///
/// Both sides are scaled by `e^{βΔF}` before subtraction so large `β·W`
/// values do not overflow.
pub fn jarzynski_check(dist: &WorkDistribution, beta: f64, d_f: f64) -> JarzynskiCheck {
    let mut scaled = 0.0;
    for (n, e0) in dist.initial_energies.iter().enumerate() {
        for (m, ef) in dist.final_energies.iter().enumerate() {
            let p = dist.joint[(n, m)];
            if p > 0.0 {
                // p itself may be tiny while the exponential overflows
                scaled += (p.ln() - beta * (ef - e0 - d_f)).exp();
            }
        }
    }
    let relative = (scaled - 1.0).abs();
    let reference = (-beta * d_f).exp();
    JarzynskiCheck {
        deviation: relative * reference,
        relative,
        passed: relative <= JARZYNSKI_TOL,
    }
}
