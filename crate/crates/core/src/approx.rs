//! Approximate work and entropy schemes.
//!
//! A scheme names which Hamiltonian prepares the initial Gibbs state and
//! which one drives the evolution. The evolution choice also fixes the
//! Hamiltonians used to measure energy at `t = 0` and `t = τ`, so a scheme
//! can never mix an evolution from one model with energies from another.
//!
//! | scheme      | initial state | evolution and energies |
//! |-------------|---------------|------------------------|
//! | exact       | interacting   | interacting            |
//! | NI          | `U = 0`       | `U = 0`                |
//! | exact+NI    | interacting   | `U = 0`                |

use nalgebra::DMatrix;

use crate::drive::DriveProtocol;
use crate::error::{domain, Error, Result};
use crate::lattice::{build_sector_basis, ChainOperators, ChainSpec};
use crate::metrics::{EvolvedHamiltonian, Method, WorkEntropyRecord};
use crate::propagate::StepPolicy;
use crate::spectra::{diagonalize_matrix, free_energy_delta, thermal_state, Spectrum, ThermalState};

/// Relative errors divide by `max(|exact|, ε)` with this `ε` (J).
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-9;

/// Which model a stage of the protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Interacting,
    NonInteracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ApproximationScheme {
    initial: Model,
    evolution: Model,
}

impl ApproximationScheme {
    pub const EXACT: Self = Self { initial: Model::Interacting, evolution: Model::Interacting };
    pub const NI: Self = Self { initial: Model::NonInteracting, evolution: Model::NonInteracting };
    pub const EXACT_NI: Self = Self { initial: Model::Interacting, evolution: Model::NonInteracting };

    /// Fails for a non-interacting state evolved with interactions, which is
    /// not one of the supported schemes.
    pub fn new(initial: Model, evolution: Model) -> Result<Self> {
        if initial == Model::NonInteracting && evolution == Model::Interacting {
            return Err(domain("a non-interacting initial state with interacting evolution is not supported"));
        }
        Ok(Self { initial, evolution })
    }

    pub fn initial(&self) -> Model {
        self.initial
    }

    pub fn evolution(&self) -> Model {
        self.evolution
    }

    pub fn method(&self) -> Method {
        match (self.initial, self.evolution) {
            (Model::Interacting, Model::Interacting) => Method::Exact,
            (Model::NonInteracting, _) => Method::NonInteracting,
            (Model::Interacting, Model::NonInteracting) => Method::ExactNonInteracting,
        }
    }
}

impl From<Method> for ApproximationScheme {
    fn from(m: Method) -> Self {
        match m {
            Method::Exact => Self::EXACT,
            Method::NonInteracting => Self::NI,
            Method::ExactNonInteracting => Self::EXACT_NI,
        }
    }
}

/// Hamiltonians at both ends of a ramp and their spectra, for one model.
#[derive(Debug, Clone)]
pub struct RampEndpoints {
    pub ops: ChainOperators,
    pub h0: DMatrix<f64>,
    pub hf: DMatrix<f64>,
    pub initial: Spectrum,
    pub final_: Spectrum,
}

impl RampEndpoints {
    pub fn new(ops: ChainOperators, drive: &DriveProtocol) -> Result<Self> {
        let h0 = ops.dense(&drive.initial_potential())?.matrix;
        let hf = ops.dense(&drive.final_potential())?.matrix;
        let initial = diagonalize_matrix(&h0)?;
        let final_ = diagonalize_matrix(&hf)?;
        Ok(Self { ops, h0, hf, initial, final_ })
    }
}

/// Everything a cell needs that depends on temperature but not on `τ`.
#[derive(Debug, Clone)]
pub struct ThermalInputs {
    pub temperature: f64,
    pub beta: f64,
    pub state: ThermalState,
    /// `ΔF` of the same model as `state`.
    pub d_f: f64,
}

impl ThermalInputs {
    pub fn new(ends: &RampEndpoints, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(domain(format!("temperature must be positive and finite, got {temperature}")));
        }
        Self::with_labels(ends, temperature, 1.0 / temperature)
    }

    pub fn from_beta(ends: &RampEndpoints, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(domain(format!("inverse temperature must be positive and finite, got {beta}")));
        }
        Self::with_labels(ends, 1.0 / beta, beta)
    }

    fn with_labels(ends: &RampEndpoints, temperature: f64, beta: f64) -> Result<Self> {
        let state = thermal_state(&ends.initial, beta)?;
        let d_f = free_energy_delta(&ends.initial, &ends.final_, beta)?.value;
        Ok(Self { temperature, beta, state, d_f })
    }
}

/// Entropy estimate of a scheme; `clamped` records that a negative raw
/// value was replaced by zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// `ΔS` for a scheme's work. NI uses its own `ΔF^{NI}`; exact+NI uses the
/// exact `ΔF` and clamps the result at zero.
pub fn approx_entropy(
    scheme: ApproximationScheme,
    w_approx: f64,
    beta: f64,
    df_exact: f64,
    df_ni: f64,
) -> Result<EntropyEstimate> {
    if !(beta > 0.0) {
        return Err(domain(format!("entropy needs a positive inverse temperature, got {beta}")));
    }
    let d_f = match scheme.method() {
        Method::NonInteracting => df_ni,
        _ => df_exact,
    };
    let raw = beta * (w_approx - d_f);
    if scheme.method() == Method::ExactNonInteracting && raw < 0.0 {
        return Ok(EntropyEstimate { value: 0.0, raw, clamped: true });
    }
    Ok(EntropyEstimate { value: raw, raw, clamped: false })
}

/// Work, free energy and entropy of one scheme at one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOutcome {
    pub w_avg: f64,
    /// `ΔF` that entered the entropy (`ΔF^{NI}` for NI, exact otherwise).
    pub d_f: f64,
    pub entropy: EntropyEstimate,
}

/// Evaluates `⟨W⟩ = Tr[ρ₀ U†H_fU] − Tr[ρ₀ H₀]` for a scheme.
///
/// `state` is the thermal input of the scheme's initial model, `evolved`
/// and `evo` belong to its evolution model, and `df_exact`/`df_ni` feed the
/// entropy estimate.
pub fn scheme_outcome(
    scheme: ApproximationScheme,
    state: &ThermalInputs,
    evo: &RampEndpoints,
    evolved: &EvolvedHamiltonian,
    df_exact: f64,
    df_ni: f64,
) -> Result<SchemeOutcome> {
    let w_avg = evolved.expectation(&state.state)? - state.state.expectation(&evo.h0);
    let entropy = approx_entropy(scheme, w_avg, state.beta, df_exact, df_ni)?;
    let d_f = if scheme.method() == Method::NonInteracting { df_ni } else { df_exact };
    Ok(SchemeOutcome { w_avg, d_f, entropy })
}

/// Both models of one `(drive, U)` pair.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub exact: RampEndpoints,
    pub ni: RampEndpoints,
}

impl ModelPair {
    pub fn new(spec: &ChainSpec, drive: &DriveProtocol) -> Result<Self> {
        let basis = build_sector_basis(spec)?;
        let ops = ChainOperators::new(&basis, spec)?;
        let ni_ops = ops.with_interaction(0.0);
        Ok(Self { exact: RampEndpoints::new(ops, drive)?, ni: RampEndpoints::new(ni_ops, drive)? })
    }

    pub fn endpoints(&self, model: Model) -> &RampEndpoints {
        match model {
            Model::Interacting => &self.exact,
            Model::NonInteracting => &self.ni,
        }
    }
}

/// Work record of a single cell under `scheme`, computed from scratch.
pub fn approx_work(
    scheme: ApproximationScheme,
    spec: &ChainSpec,
    drive: &DriveProtocol,
    beta: f64,
    steps: StepPolicy,
) -> Result<WorkEntropyRecord> {
    steps.validate()?;
    let models = ModelPair::new(spec, drive)?;
    let exact = ThermalInputs::from_beta(&models.exact, beta)?;
    let ni = ThermalInputs::from_beta(&models.ni, beta)?;
    let state = match scheme.initial() {
        Model::Interacting => &exact,
        Model::NonInteracting => &ni,
    };
    let evo = models.endpoints(scheme.evolution());
    let probe = match scheme.evolution() {
        Model::Interacting => &exact.state,
        Model::NonInteracting => &ni.state,
    };
    let prop = steps.propagate(&evo.ops, drive, &evo.hf, &[probe])?;
    let evolved = EvolvedHamiltonian::new(&prop, &evo.hf)?;
    let out = scheme_outcome(scheme, state, evo, &evolved, exact.d_f, ni.d_f)?;
    Ok(WorkEntropyRecord {
        drive: drive.kind,
        temperature: exact.temperature,
        interaction: spec.interaction(),
        tau: drive.tau,
        method: scheme.method(),
        w_avg: out.w_avg,
        w_ext: -out.w_avg,
        d_f: out.d_f,
        d_s: out.entropy.value,
        steps: prop.steps,
        clamped: out.entropy.clamped,
        error_floor: false,
    })
}

/// How the `t = 0` energy of the exact+NI adiabatic value is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialEnergyForm {
    /// `Tr[ρ₀ H₀^{NI}] = Σ_{i,n} E_i^{NI,0} pₙ⁰ |a_{i,n}|²`, consistent with
    /// the trace definition of the work.
    #[default]
    Trace,
    /// `Σₙ pₙ⁰ Eₙ^{NI,0}`, the form the work distribution would give.
    Populations,
}

/// Adiabatic limit of the exact+NI work, in the `⟨W⟩` sign convention:
///
/// `Σ_{n,m} E_m^{f,NI} pₙ⁰ |a_{m,n}|² − (t = 0 term)`,
///
/// with `a_{m,n} = ⟨Ψ_m^{NI}(0)|Ψₙ⁰⟩` and NI levels followed by ascending
/// index.
pub fn exact_ni_adiabatic_work(
    exact_initial: &Spectrum,
    populations: &[f64],
    ni_initial: &Spectrum,
    ni_final: &Spectrum,
    form: InitialEnergyForm,
) -> Result<f64> {
    let n = exact_initial.dim();
    if populations.len() != n || ni_initial.dim() != n || ni_final.dim() != n {
        return Err(domain("spectra and populations must share one dimension"));
    }
    let a = ni_initial.eigenvectors.transpose() * &exact_initial.eigenvectors;
    let mut final_term = 0.0;
    let mut initial_term = 0.0;
    for (col, &p) in populations.iter().enumerate() {
        for m in 0..n {
            let w = p * a[(m, col)] * a[(m, col)];
            final_term += w * ni_final.eigenvalues[m];
            initial_term += w * ni_initial.eigenvalues[m];
        }
    }
    if form == InitialEnergyForm::Populations {
        initial_term = populations.iter().zip(&ni_initial.eigenvalues).map(|(p, e)| p * e).sum();
    }
    Ok(final_term - initial_term)
}

/// Values on a `U × τ` grid, row-major with one row per `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub u_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(u_values: Vec<f64>, tau_values: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != u_values.len() * tau_values.len() {
            return Err(domain(format!(
                "grid has {} values for {} × {} points",
                values.len(),
                u_values.len(),
                tau_values.len()
            )));
        }
        Ok(Self { u_values, tau_values, values })
    }

    pub fn at(&self, u_index: usize, tau_index: usize) -> f64 {
        self.values[u_index * self.tau_values.len() + tau_index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrorMap {
    pub grid: Grid,
    /// Cells whose exact value fell below the floor.
    pub floored: Vec<bool>,
    pub floor: f64,
}

/// `|approx − exact| / max(|exact|, ε)` cell by cell.
pub fn relative_error_map(approx: &Grid, exact: &Grid) -> Result<RelativeErrorMap> {
    if approx.u_values != exact.u_values || approx.tau_values != exact.tau_values {
        return Err(Error::Domain("grids do not share coordinates".into()));
    }
    let (values, floored) = approx
        .values
        .iter()
        .zip(&exact.values)
        .map(|(a, e)| {
            let floored = e.abs() < RELATIVE_ERROR_FLOOR;
            ((a - e).abs() / e.abs().max(RELATIVE_ERROR_FLOOR), floored)
        })
        .unzip();
    Ok(RelativeErrorMap {
        grid: Grid { u_values: exact.u_values.clone(), tau_values: exact.tau_values.clone(), values },
        floored,
        floor: RELATIVE_ERROR_FLOOR,
    })
}
