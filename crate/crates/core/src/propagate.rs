//! Time-ordered evolution operator of a linearly driven chain.
//!
//! The ramp `[0, τ]` is split into `steps` equal slices and each slice is
//! replaced by the exact exponential of the Hamiltonian at its midpoint:
//!
//! `U = Π_{k = steps-1 … 0} exp(-i H(t_k + δt/2) δt)`.
//!
//! Each factor is applied either through a Chebyshev–Bessel expansion of
//! the sparse Hamiltonian (default, truncated below `1e-17`) or by
//! diagonalizing the instantaneous matrix.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveProtocol;
use crate::error::{domain, Error, Result};
use crate::lattice::{ChainOperators, ChainSpec, SectorBasis};
use crate::linalg::SplitComplex;
use crate::spectra::{diagonalize_matrix, ThermalState};

/// Unitarity tolerance enforced on every propagator.
pub const UNITARITY_TOL: f64 = 1e-9;

/// Default number of midpoint slices for production sweeps.
pub const DEFAULT_STEPS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepExponential {
    #[default]
    Chebyshev,
    Diagonalize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub steps: usize,
    pub method: StepExponential,
    /// Fail with a numerical error when `max|U†U - I|` exceeds
    /// [`UNITARITY_TOL`].
    pub verify_unitarity: bool,
    /// Test hook: scale the factor of this slice by 1/2.
    pub fault_step: Option<usize>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            method: StepExponential::Chebyshev,
            verify_unitarity: true,
            fault_step: None,
        }
    }
}

impl PropagationOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }
}

/// Evolution operator over a whole ramp.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub matrix: DMatrix<Complex64>,
    pub steps: usize,
    pub tau: f64,
}

impl Propagator {
    pub fn identity(dim: usize, tau: f64) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), steps: 0, tau }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn split(&self) -> SplitComplex {
        SplitComplex::from_complex(&self.matrix)
    }

    pub fn unitarity_error(&self) -> f64 {
        self.split().unitarity_error()
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Propagator) -> Propagator {
        Propagator {
            matrix: &self.matrix * &first.matrix,
            steps: self.steps + first.steps,
            tau: self.tau + first.tau,
        }
    }
}

/// Bessel functions `J_0(x) … J_n(x)` by Miller's backward recurrence,
/// normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = n.max(x.ceil() as usize) + 20 + (x.sqrt() * 10.0) as usize;
    let mut next = 0.0f64; // J_{k+1}
    let mut cur = 1e-300f64; // J_k
    let mut norm = 0.0f64;
    let mut vals = vec![0.0; start + 1];
    vals[start] = cur;
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / x) * cur - next;
        next = cur;
        cur = prev;
        vals[k - 1] = cur;
        if cur.abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    for (k, v) in vals.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for (o, v) in out.iter_mut().zip(&vals) {
        *o = v / norm;
    }
    out
}

/// Chebyshev coefficients `J_k(x)` truncated once they drop below `1e-17`
/// past the transition region `k > x`.
fn chebyshev_coefficients(x: f64) -> Vec<f64> {
    let guess = (x.ceil() as usize) + 30 + (4.0 * x.cbrt()).ceil() as usize;
    let j = bessel_j_sequence(x, guess);
    let mut last = 0;
    for (k, v) in j.iter().enumerate() {
        last = k;
        if k as f64 > x && v.abs() < 1e-17 {
            break;
        }
    }
    j[..=last].to_vec()
}

/// Precomputed data for one Chebyshev slice, shared by all column blocks.
struct SlicePlan {
    /// `(diag - center) / radius`
    diag: Vec<f64>,
    inv_radius: f64,
    /// Coefficients of `T_k`: `(-i)^k (2 - δ_k0) J_k`, stored as the real
    /// factor; even `k` multiply 1, odd `k` multiply `i`.
    coefs: Vec<f64>,
}

impl SlicePlan {
    fn new(diag: &[f64], hop: &Hopping<'_>, dt: f64) -> (Self, f64) {
        let (lo, hi) = hop.gershgorin(diag);
        let center = 0.5 * (lo + hi);
        let radius = 0.5 * (hi - lo);
        if radius <= 0.0 {
            let plan = Self { diag: vec![0.0; diag.len()], inv_radius: 0.0, coefs: vec![1.0] };
            return (plan, center);
        }
        let inv_radius = 1.0 / radius;
        let diag = diag.iter().map(|d| (d - center) * inv_radius).collect();
        let coefs = chebyshev_coefficients(radius * dt)
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                if k == 0 {
                    return j;
                }
                let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                if k % 2 == 0 {
                    2.0 * j * sign
                } else {
                    -2.0 * j * sign
                }
            })
            .collect();
        (Self { diag, inv_radius, coefs }, center)
    }
}

/// Off-diagonal part of a Hamiltonian in CSR form.
#[derive(Debug, Clone)]
struct Hopping<'a> {
    row_ptr: std::borrow::Cow<'a, [usize]>,
    cols: std::borrow::Cow<'a, [usize]>,
    vals: std::borrow::Cow<'a, [f64]>,
}

impl Hopping<'_> {
    fn gershgorin(&self, diag: &[f64]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (r, d) in diag.iter().enumerate() {
            let radius: f64 = self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().map(|v| v.abs()).sum();
            lo = lo.min(d - radius);
            hi = hi.max(d + radius);
        }
        (lo, hi)
    }
}

/// Invariant subspace spanned by orthonormal vectors on the sector basis.
///
/// When `n_up = n_down` the Hamiltonian commutes with exchanging the up and
/// down configurations, `(a, b) ↔ (b, a)`, so the sector splits into an even
/// and an odd block that are evolved independently. The on-site part is
/// identical on exchanged partners, which keeps the block diagonal a plain
/// weighted copy of the full one.
struct Block<'a> {
    /// `(sector index, coefficient)` components of each block vector.
    members: Vec<Vec<(usize, f64)>>,
    hop: Hopping<'a>,
}

impl Block<'_> {
    fn dim(&self) -> usize {
        self.members.len()
    }

    fn diagonal_from(&self, full: &[f64], out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.members) {
            *o = m.iter().map(|&(i, c)| c * c * full[i]).sum();
        }
    }
}

fn symmetry_blocks(ops: &ChainOperators) -> Vec<Block<'_>> {
    let (row_ptr, cols, vals) = ops.hopping_pattern();
    let basis = ops.basis();
    let whole = || Block {
        members: (0..ops.dim()).map(|i| vec![(i, 1.0)]).collect(),
        hop: Hopping { row_ptr: row_ptr.into(), cols: cols.into(), vals: vals.into() },
    };
    match basis.sector() {
        Some((a, b)) if a == b && ops.dim() > 1 => {}
        _ => return vec![whole()],
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for (i, &(up, down)) in basis.states().iter().enumerate() {
        if up == down {
            even.push(vec![(i, 1.0)]);
        } else if up < down {
            let Some(j) = basis.index_of((down, up)) else {
                return vec![whole()];
            };
            even.push(vec![(i, h), (j, h)]);
            odd.push(vec![(i, h), (j, -h)]);
        }
    }
    [even, odd]
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|members| {
            // sector index -> (block vector, coefficient)
            let mut owner = vec![(usize::MAX, 0.0); ops.dim()];
            for (v, m) in members.iter().enumerate() {
                for &(i, c) in m {
                    owner[i] = (v, c);
                }
            }
            let mut b_ptr = vec![0];
            let mut b_cols = Vec::new();
            let mut b_vals = Vec::new();
            let mut row = std::collections::BTreeMap::new();
            for m in &members {
                row.clear();
                for &(i, c) in m {
                    for idx in row_ptr[i]..row_ptr[i + 1] {
                        let (w, cw) = owner[cols[idx]];
                        if w != usize::MAX {
                            *row.entry(w).or_insert(0.0) += c * cw * vals[idx];
                        }
                    }
                }
                for (&w, &x) in &row {
                    if x.abs() > 1e-14 {
                        b_cols.push(w);
                        b_vals.push(x);
                    }
                }
                b_ptr.push(b_cols.len());
            }
            Block {
                members,
                hop: Hopping { row_ptr: b_ptr.into(), cols: b_cols.into(), vals: b_vals.into() },
            }
        })
        .collect()
}

/// Evolves `W / 2` consecutive columns of the identity through every slice.
///
/// Rows are stored as `[re, im, re, im, …]` arrays of width `W`; padding
/// columns beyond `n` start at zero and stay zero.
fn evolve_block<const W: usize>(
    plans: &[SlicePlan],
    hop: &Hopping<'_>,
    n: usize,
    col0: usize,
    fault: Option<usize>,
) -> Vec<[f64; W]> {
    let mut u = vec![[0.0; W]; n];
    for (j, c) in (col0..n.min(col0 + W / 2)).enumerate() {
        u[c][2 * j] = 1.0;
    }
    let mut t1 = vec![[0.0; W]; n];
    let mut acc_re = vec![[0.0; W]; n];
    let mut acc_im = vec![[0.0; W]; n];

    for (step, plan) in plans.iter().enumerate() {
        if plan.coefs.len() > 1 {
            chebyshev_block(plan, hop, &mut u, &mut t1, &mut acc_re, &mut acc_im);
        }
        if fault == Some(step) {
            for row in u.iter_mut() {
                for x in row.iter_mut() {
                    *x *= 0.5;
                }
            }
        }
    }
    u
}

#[inline(always)]
fn hop_row<const W: usize>(out: &mut [f64; W], hop: &Hopping<'_>, r: usize, scale: f64, src: &[[f64; W]]) {
    for idx in hop.row_ptr[r]..hop.row_ptr[r + 1] {
        let v = scale * hop.vals[idx];
        let x = &src[hop.cols[idx]];
        for j in 0..W {
            out[j] += v * x[j];
        }
    }
}

fn chebyshev_block<const W: usize>(
    plan: &SlicePlan,
    hop: &Hopping<'_>,
    u: &mut Vec<[f64; W]>,
    t1: &mut Vec<[f64; W]>,
    acc_re: &mut [[f64; W]],
    acc_im: &mut [[f64; W]],
) {
    let n = u.len();
    let c = &plan.coefs;
    let c1 = c[1];
    // k = 0, 1
    for r in 0..n {
        let d = plan.diag[r];
        let mut out = [0.0; W];
        for j in 0..W {
            out[j] = d * u[r][j];
            acc_re[r][j] = c[0] * u[r][j];
        }
        hop_row(&mut out, hop, r, plan.inv_radius, u);
        for j in 0..W {
            acc_im[r][j] = c1 * out[j];
        }
        t1[r] = out;
    }
    // T_{k+1} = 2 H̃ T_k - T_{k-1}, written over T_{k-1}
    let (mut cur, mut prev) = (t1, u);
    for (k, &ck) in c.iter().enumerate().skip(2) {
        let acc: &mut [[f64; W]] = if k % 2 == 0 { &mut *acc_re } else { &mut *acc_im };
        let scale = 2.0 * plan.inv_radius;
        for r in 0..n {
            let d = 2.0 * plan.diag[r];
            let mut out = [0.0; W];
            let (cr, pr) = (&cur[r], &prev[r]);
            for j in 0..W {
                out[j] = d * cr[j] - pr[j];
            }
            hop_row(&mut out, hop, r, scale, cur);
            for j in 0..W {
                acc[r][j] += ck * out[j];
            }
            prev[r] = out;
        }
        std::mem::swap(&mut cur, &mut prev);
    }
    // the result overwrites whichever buffer is the original `u`
    let target: &mut Vec<[f64; W]> = if c.len() % 2 == 0 { prev } else { cur };
    // U = A + iB for complex A, B
    for r in 0..n {
        let (a, b) = (&acc_re[r], &acc_im[r]);
        let row = &mut target[r];
        for j in (0..W).step_by(2) {
            row[j] = a[j] - b[j + 1];
            row[j + 1] = a[j + 1] + b[j];
        }
    }
}

/// Runs all column blocks and assembles the propagator (without the global
/// phase).
fn evolve_columns<const W: usize>(plans: &[SlicePlan], hop: &Hopping<'_>, n: usize, fault: Option<usize>) -> SplitComplex {
    use rayon::prelude::*;
    let per_block = W / 2;
    let blocks: Vec<usize> = (0..n).step_by(per_block).collect();
    let results: Vec<Vec<[f64; W]>> = blocks
        .par_iter()
        .map(|&col0| evolve_block::<W>(plans, hop, n, col0, fault))
        .collect();
    let mut re = DMatrix::zeros(n, n);
    let mut im = DMatrix::zeros(n, n);
    for (&col0, rows) in blocks.iter().zip(&results) {
        for (r, row) in rows.iter().enumerate() {
            for j in 0..per_block.min(n - col0) {
                re[(r, col0 + j)] = row[2 * j];
                im[(r, col0 + j)] = row[2 * j + 1];
            }
        }
    }
    SplitComplex { re, im }
}

/// `exp(-i H dt)` of a dense real symmetric matrix via its eigenbasis.
pub fn step_exponential_dense(h: &DMatrix<f64>, dt: f64) -> Result<SplitComplex> {
    let s = diagonalize_matrix(h)?;
    let re = s.function_of(|e| (e * dt).cos());
    let im = s.function_of(|e| -(e * dt).sin());
    Ok(SplitComplex { re, im })
}

/// Evolution operator for `drive` acting on the chain described by `ops`.
pub fn propagate_with(ops: &ChainOperators, drive: &DriveProtocol, options: &PropagationOptions) -> Result<Propagator> {
    if options.steps == 0 {
        return Err(domain("step count must be at least 1"));
    }
    if drive.sites() != ops.spec().sites() {
        return Err(domain(format!(
            "drive has {} sites but chain has {}",
            drive.sites(),
            ops.spec().sites()
        )));
    }
    let n = ops.dim();
    let dt = drive.tau / options.steps as f64;
    let mut potential = vec![0.0; drive.sites()];
    let mut diagonal_at = |k: usize, out: &mut Vec<f64>| {
        let t_mid = (k as f64 + 0.5) * dt;
        drive.potential_into(t_mid, &mut potential);
        ops.diagonal_into(&potential, out);
    };

    let matrix = match options.method {
        StepExponential::Chebyshev => {
            let blocks = symmetry_blocks(ops);
            let mut full_diag = vec![0.0; n];
            let diags: Vec<Vec<f64>> = (0..options.steps)
                .map(|k| {
                    diagonal_at(k, &mut full_diag);
                    full_diag.clone()
                })
                .collect();
            let mut matrix = DMatrix::<Complex64>::zeros(n, n);
            for block in &blocks {
                let m = block.dim();
                let mut phase = Complex64::new(1.0, 0.0);
                let mut diag = vec![0.0; m];
                let plans: Vec<SlicePlan> = diags
                    .iter()
                    .map(|d| {
                        block.diagonal_from(d, &mut diag);
                        let (plan, center) = SlicePlan::new(&diag, &block.hop, dt);
                        phase *= Complex64::new(0.0, -center * dt).exp();
                        plan
                    })
                    .collect();
                let fault = options.fault_step;
                let hop = &block.hop;
                let u = match m {
                    0..=4 => evolve_columns::<8>(&plans, hop, m, fault),
                    5..=8 => evolve_columns::<16>(&plans, hop, m, fault),
                    9..=16 => evolve_columns::<32>(&plans, hop, m, fault),
                    _ => evolve_columns::<64>(&plans, hop, m, fault),
                };
                // U = Σ_blocks S U_b Sᵀ
                for (a, ma) in block.members.iter().enumerate() {
                    for (b, mb) in block.members.iter().enumerate() {
                        let z = Complex64::new(u.re[(a, b)], u.im[(a, b)]) * phase;
                        for &(r, cr) in ma {
                            for &(c, cc) in mb {
                                matrix[(r, c)] += z * (cr * cc);
                            }
                        }
                    }
                }
            }
            matrix
        }
        StepExponential::Diagonalize => {
            let mut u = SplitComplex { re: DMatrix::identity(n, n), im: DMatrix::zeros(n, n) };
            for k in 0..options.steps {
                let mut h = ops.sparse(&drive.initial_potential())?;
                diagonal_at(k, &mut h.diagonal);
                let f = step_exponential_dense(&h.to_dense(), dt)?;
                let re = &f.re * &u.re - &f.im * &u.im;
                let im = &f.re * &u.im + &f.im * &u.re;
                u = SplitComplex { re, im };
                if options.fault_step == Some(k) {
                    u.re *= 0.5;
                    u.im *= 0.5;
                }
            }
            u.to_complex()
        }
    };
    let prop = Propagator { matrix, steps: options.steps, tau: drive.tau };
    if options.verify_unitarity {
        let err = prop.unitarity_error();
        if !(err <= UNITARITY_TOL) {
            return Err(Error::Numerical(format!(
                "propagator deviates from unitarity by {err:e} ({} steps)",
                options.steps
            )));
        }
    }
    Ok(prop)
}

/// Evolution operator with `steps` midpoint slices and default settings.
pub fn propagate(spec: &ChainSpec, basis: &SectorBasis, drive: &DriveProtocol, steps: usize) -> Result<Propagator> {
    let ops = ChainOperators::new(basis, spec)?;
    propagate_with(&ops, drive, &PropagationOptions::with_steps(steps))
}

/// How many slices a propagator uses: a fixed count, or step doubling
/// until the probe energies agree to `tol` (J).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    Fixed(usize),
    Converged(f64),
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Fixed(DEFAULT_STEPS)
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepPolicy::Fixed(0) => Err(domain("step count must be at least 1")),
            StepPolicy::Converged(tol) if !(tol > 0.0 && tol.is_finite()) => {
                Err(domain(format!("tolerance must be positive, got {tol}")))
            }
            _ => Ok(()),
        }
    }

    /// Propagator for `drive`; `probes` are the states whose evolved energy
    /// decides convergence.
    pub fn propagate(
        &self,
        ops: &ChainOperators,
        drive: &DriveProtocol,
        hf: &DMatrix<f64>,
        probes: &[&ThermalState],
    ) -> Result<Propagator> {
        match *self {
            StepPolicy::Fixed(steps) => propagate_with(ops, drive, &PropagationOptions::with_steps(steps)),
            StepPolicy::Converged(tol) => converged_propagate(ops, drive, hf, probes, &ConvergenceOptions::new(tol)),
        }
    }
}

impl fmt::Display for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepPolicy::Fixed(n) => write!(f, "{n} steps"),
            StepPolicy::Converged(tol) => write!(f, "auto(tol {tol:e} J)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    pub tol: f64,
    pub base_steps: usize,
    pub max_doublings: usize,
    pub method: StepExponential,
}

impl ConvergenceOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, base_steps: 250, max_doublings: 10, method: StepExponential::Chebyshev }
    }
}

/// `Tr[U ρ U† H_f]`.
pub fn final_energy(prop: &Propagator, rho0: &DMatrix<f64>, hf: &DMatrix<f64>) -> f64 {
    let a = prop.split().congruence(hf);
    crate::linalg::trace_real_hermitian(rho0, &a)
}

/// Doubles the step count from `base_steps` until the probe energies
/// `Tr[U ρ U† H_f]` (one per probe state) change by less than `tol`.
///
/// Returns the coarser propagator of the first pair that agrees, so a
/// constant Hamiltonian is accepted at the base step count.
pub fn converged_propagate(
    ops: &ChainOperators,
    drive: &DriveProtocol,
    hf: &DMatrix<f64>,
    probes: &[&ThermalState],
    options: &ConvergenceOptions,
) -> Result<Propagator> {
    if !(options.tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {}", options.tol)));
    }
    if options.base_steps == 0 {
        return Err(domain("base step count must be at least 1"));
    }
    let run = |steps: usize| {
        let opts = PropagationOptions { steps, method: options.method, ..PropagationOptions::default() };
        let prop = propagate_with(ops, drive, &opts)?;
        let energies: Vec<f64> = probes.iter().map(|p| final_energy(&prop, &p.rho, hf)).collect();
        Ok::<_, Error>((prop, energies))
    };
    let mut steps = options.base_steps;
    let (mut coarse, mut coarse_e) = run(steps)?;
    let mut change = f64::INFINITY;
    for _ in 0..options.max_doublings {
        let (fine, fine_e) = run(steps * 2)?;
        change = coarse_e
            .iter()
            .zip(&fine_e)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < options.tol {
            return Ok(coarse);
        }
        steps *= 2;
        coarse = fine;
        coarse_e = fine_e;
    }
    Err(Error::Convergence { tol: options.tol, steps, change })
}
