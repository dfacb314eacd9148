//! Eigendecomposition, Gibbs states, partition functions and free-energy
//! differences.
//!
//! All Boltzmann weights are computed relative to the lowest eigenvalue so
//! that `β·E` never reaches the exponential directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::lattice::HamiltonianMatrix;

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `V diag(f(E)) Vᵀ`.
    pub fn function_of(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            self.eigenvectors[(r, c)] * f(self.eigenvalues[c])
        });
        scaled * self.eigenvectors.transpose()
    }
}

/// Diagonalizes a real symmetric (Hermitian) matrix.
pub fn diagonalize_matrix(h: &DMatrix<f64>) -> Result<Spectrum> {
    if !h.is_square() {
        return Err(domain("matrix is not square"));
    }
    let scale = h.amax().max(1.0);
    let asym = (h - h.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(domain(format!("matrix is not Hermitian (max asymmetry {asym:e})")));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum { eigenvalues, eigenvectors })
}

pub fn diagonalize(h: &HamiltonianMatrix) -> Result<Spectrum> {
    diagonalize_matrix(&h.matrix)
}

/// `ln Z` together with the energy shift used to stabilize it:
/// `ln Z = -β·shift + ln Σ exp(-β(Eₙ - shift))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition {
    pub log_z: f64,
    pub shift: f64,
}

impl LogPartition {
    pub fn value(&self) -> f64 {
        self.log_z.exp()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta < 0.0 {
        return Err(domain(format!("inverse temperature must be non-negative, got {beta}")));
    }
    Ok(())
}

/// Normalized Boltzmann weights and the stabilized partition function.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> (Vec<f64>, LogPartition) {
    let shift = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = if beta.is_infinite() {
        energies.iter().map(|&e| if e == shift { 1.0 } else { 0.0 }).collect()
    } else {
        energies.iter().map(|&e| (-beta * (e - shift)).exp()).collect()
    };
    let sum: f64 = raw.iter().sum();
    let log_z = if beta.is_infinite() {
        f64::NEG_INFINITY
    } else {
        -beta * shift + sum.ln()
    };
    (raw.into_iter().map(|w| w / sum).collect(), LogPartition { log_z, shift })
}

pub fn partition_function(spectrum: &Spectrum, beta: f64) -> Result<LogPartition> {
    check_beta(beta)?;
    Ok(boltzmann_weights(&spectrum.eigenvalues, beta).1)
}

/// Gibbs state `exp(-βH)/Z` of a diagonalized Hamiltonian.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub beta: f64,
    pub rho: DMatrix<f64>,
    /// Occupation of each eigenvector, in the spectrum's order.
    pub populations: Vec<f64>,
    pub log_partition: LogPartition,
}

impl ThermalState {
    pub fn dim(&self) -> usize {
        self.populations.len()
    }

    /// `Tr[ρ A]` for a real symmetric `A`.
    pub fn expectation(&self, a: &DMatrix<f64>) -> f64 {
        self.rho.component_mul(a).sum()
    }
}

pub fn thermal_state(spectrum: &Spectrum, beta: f64) -> Result<ThermalState> {
    check_beta(beta)?;
    let (populations, log_partition) = boltzmann_weights(&spectrum.eigenvalues, beta);
    let v = &spectrum.eigenvectors;
    let weighted = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * populations[c]);
    let mut rho = weighted * v.transpose();
    // symmetrize away rounding so ρ = ρ† holds exactly
    let sym = (&rho + rho.transpose()) * 0.5;
    rho = sym;
    Ok(ThermalState { beta, rho, populations, log_partition })
}

/// Result of a free-energy difference evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyDelta {
    pub value: f64,
    /// Set when `β = 0`, where `ΔF` is reported as 0 (`Z_f = Z_0 = dim`).
    pub infinite_temperature: bool,
}

/// `ΔF = -(1/β) ln(Z_f / Z_0)` in log-domain arithmetic.
pub fn free_energy_delta(initial: &Spectrum, final_: &Spectrum, beta: f64) -> Result<FreeEnergyDelta> {
    check_beta(beta)?;
    if initial.dim() != final_.dim() {
        return Err(Error::Domain(format!(
            "spectra dimensions differ ({} vs {})",
            initial.dim(),
            final_.dim()
        )));
    }
    if beta == 0.0 {
        return Ok(FreeEnergyDelta { value: 0.0, infinite_temperature: true });
    }
    if beta.is_infinite() {
        return Ok(FreeEnergyDelta {
            value: final_.ground_energy() - initial.ground_energy(),
            infinite_temperature: false,
        });
    }
    let z0 = boltzmann_weights(&initial.eigenvalues, beta).1;
    let zf = boltzmann_weights(&final_.eigenvalues, beta).1;
    // (log Zf - log Z0) split into shift and residual parts to avoid
    // cancellation between two large -β·shift terms
    let residual = (zf.log_z + beta * zf.shift) - (z0.log_z + beta * z0.shift);
    let value = (zf.shift - z0.shift) - residual / beta;
    Ok(FreeEnergyDelta { value, infinite_temperature: false })
}

/// Column vector of eigenvalues, handy for reconstruction checks.
pub fn eigenvalue_vector(spectrum: &Spectrum) -> DVector<f64> {
    DVector::from_column_slice(&spectrum.eigenvalues)
}
