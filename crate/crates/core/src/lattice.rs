//! Occupation-number bases and the inhomogeneous Hubbard Hamiltonian.
//!
//! Sites are numbered `0..L` internally (site `i` here is site `i + 1` in the
//! usual one-based labelling). A basis state is a pair of bit masks
//! `(up, down)`; bit `i` of a mask is set when site `i` holds a fermion of
//! that spin. Fermionic operators are ordered canonically as
//! `c†(0,↑) … c†(L-1,↑) c†(0,↓) … c†(L-1,↓)`, i.e. orbital `i + σ·L`.

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};

/// Largest chain this crate will enumerate; masks are stored in `u32`.
pub const MAX_SITES: usize = 16;

/// Chain geometry, particle content and couplings. Energies are in units of
/// the hopping `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec {
    sites: usize,
    n_up: usize,
    n_down: usize,
    hopping: f64,
    interaction: f64,
}

impl ChainSpec {
    pub fn new(sites: usize, n_up: usize, n_down: usize, hopping: f64, interaction: f64) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&sites) {
            return Err(domain(format!("site count {sites} outside 2..={MAX_SITES}")));
        }
        if n_up > sites || n_down > sites {
            return Err(domain(format!(
                "particle counts ({n_up}, {n_down}) exceed {sites} sites"
            )));
        }
        if !(hopping > 0.0 && hopping.is_finite()) {
            return Err(domain(format!("hopping must be positive and finite, got {hopping}")));
        }
        if !interaction.is_finite() {
            return Err(domain("interaction must be finite"));
        }
        Ok(Self { sites, n_up, n_down, hopping, interaction })
    }

    /// Half-filled chain (`n_up = n_down = L/2`) with `J = 1`.
    pub fn half_filled(sites: usize, interaction: f64) -> Result<Self> {
        if sites % 2 != 0 {
            return Err(domain(format!("half filling needs an even site count, got {sites}")));
        }
        Self::new(sites, sites / 2, sites / 2, 1.0, interaction)
    }

    /// Same chain with a different on-site interaction.
    pub fn with_interaction(&self, interaction: f64) -> Self {
        Self { interaction, ..*self }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn particles(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn interaction(&self) -> f64 {
        self.interaction
    }
}

/// An ordered set of `(up, down)` occupation configurations.
///
/// States are unique and sorted lexicographically by `(up, down)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    sites: usize,
    sector: Option<(usize, usize)>,
    states: Vec<(u32, u32)>,
}

impl SectorBasis {
    /// Arbitrary configurations on `sites` sites, not restricted to one
    /// particle-number sector. Duplicates are removed.
    pub fn from_states(sites: usize, mut states: Vec<(u32, u32)>) -> Result<Self> {
        if !(1..=MAX_SITES).contains(&sites) {
            return Err(domain(format!("site count {sites} outside 1..={MAX_SITES}")));
        }
        let limit = 1u32 << sites;
        if let Some(bad) = states.iter().find(|(u, d)| *u >= limit || *d >= limit) {
            return Err(domain(format!("state {bad:?} has bits beyond site {sites}")));
        }
        states.sort_unstable();
        states.dedup();
        let sector = match states.first() {
            Some(&(u, d)) => {
                let (nu, nd) = (u.count_ones(), d.count_ones());
                states
                    .iter()
                    .all(|&(a, b)| a.count_ones() == nu && b.count_ones() == nd)
                    .then_some((nu as usize, nd as usize))
            }
            None => None,
        };
        Ok(Self { sites, sector, states })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// `(n_up, n_down)` when every state shares the same particle numbers.
    pub fn sector(&self) -> Option<(usize, usize)> {
        self.sector
    }

    pub fn states(&self) -> &[(u32, u32)] {
        &self.states
    }

    pub fn index_of(&self, state: (u32, u32)) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
}

/// All `sites`-bit masks with exactly `count` bits set, ascending.
pub fn masks_with_popcount(sites: usize, count: usize) -> Vec<u32> {
    if count > sites {
        return Vec::new();
    }
    if count == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    // Gosper's hack: next larger integer with the same popcount.
    let mut m: u32 = (1u32 << count) - 1;
    let limit = 1u32 << sites;
    while m < limit {
        out.push(m);
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

/// Enumerates the `(n_up, n_down)` sector of the chain.
pub fn build_sector_basis(spec: &ChainSpec) -> Result<SectorBasis> {
    let ups = masks_with_popcount(spec.sites, spec.n_up);
    let downs = masks_with_popcount(spec.sites, spec.n_down);
    let states = ups
        .iter()
        .flat_map(|&u| downs.iter().map(move |&d| (u, d)))
        .collect();
    Ok(SectorBasis {
        sites: spec.sites,
        sector: Some((spec.n_up, spec.n_down)),
        states,
    })
}

/// Per-state number of doubly occupied sites.
pub fn double_occupancy_diagonal(basis: &SectorBasis) -> Vec<u32> {
    basis.states.iter().map(|&(u, d)| (u & d).count_ones()).collect()
}

/// Sign of moving a fermion between orbitals `a` and `b` in the occupation
/// word `occ`: `(-1)` to the number of occupied orbitals strictly between.
pub fn jordan_wigner_sign(occ: u64, a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo <= 1 {
        return 1.0;
    }
    let between = ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1);
    if (occ & between).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Hermitian Hubbard matrix in a given basis, together with the potential
/// vector it was assembled with.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub spec: ChainSpec,
    pub potential: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }
}

/// Real symmetric matrix stored as an explicit diagonal plus a CSR
/// off-diagonal part.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub diagonal: Vec<f64>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for r in 0..n {
            m[(r, r)] = self.diagonal[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += self.vals[k];
            }
        }
        m
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim() {
            let radius: f64 = self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                .iter()
                .map(|v| v.abs())
                .sum();
            lo = lo.min(self.diagonal[r] - radius);
            hi = hi.max(self.diagonal[r] + radius);
        }
        (lo, hi)
    }
}

/// Time-independent pieces of the Hubbard operator in a fixed basis: the
/// hopping pattern, double occupancies and site occupations. Assembling the
/// matrix for a new potential only rebuilds the diagonal.
#[derive(Debug, Clone)]
pub struct ChainOperators {
    spec: ChainSpec,
    basis: SectorBasis,
    double_occ: Vec<u32>,
    /// `occupations[s * L + i]` = n_i in state s (0, 1 or 2).
    occupations: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl ChainOperators {
    pub fn new(basis: &SectorBasis, spec: &ChainSpec) -> Result<Self> {
        if basis.sites != spec.sites {
            return Err(domain(format!(
                "basis has {} sites but chain has {}",
                basis.sites, spec.sites
            )));
        }
        let l = spec.sites;
        let dim = basis.dim();
        let mut occupations = Vec::with_capacity(dim * l);
        for &(u, d) in &basis.states {
            for i in 0..l {
                occupations.push((((u >> i) & 1) + ((d >> i) & 1)) as f64);
            }
        }

        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &(u, d) in &basis.states {
            row.clear();
            let occ = u as u64 | ((d as u64) << l);
            for spin in 0..2 {
                let mask = if spin == 0 { u } else { d };
                for i in 0..l - 1 {
                    // open chain: bonds (i, i+1) only
                    let j = i + 1;
                    let (bi, bj) = ((mask >> i) & 1, (mask >> j) & 1);
                    if bi == bj {
                        continue;
                    }
                    let (from, to) = if bi == 1 { (i, j) } else { (j, i) };
                    let moved = mask ^ (1 << i) ^ (1 << j);
                    let target = if spin == 0 { (moved, d) } else { (u, moved) };
                    let Some(col) = basis.index_of(target) else {
                        continue;
                    };
                    let sign = jordan_wigner_sign(occ, from + spin * l, to + spin * l);
                    row.push((col, -spec.hopping * sign));
                }
            }
            row.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }

        Ok(Self {
            spec: *spec,
            basis: basis.clone(),
            double_occ: double_occupancy_diagonal(basis),
            occupations,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Same hopping pattern, different interaction strength.
    pub fn with_interaction(&self, interaction: f64) -> Self {
        Self { spec: self.spec.with_interaction(interaction), ..self.clone() }
    }

    fn check_potential(&self, potential: &[f64]) -> Result<()> {
        if potential.len() != self.spec.sites {
            return Err(domain(format!(
                "potential has {} entries for {} sites",
                potential.len(),
                self.spec.sites
            )));
        }
        Ok(())
    }

    /// Diagonal `U·(double occupancies) + Σ v_i n_i`, written into `out`.
    pub fn diagonal_into(&self, potential: &[f64], out: &mut [f64]) {
        let l = self.spec.sites;
        let u = self.spec.interaction;
        for (s, slot) in out.iter_mut().enumerate() {
            let occ = &self.occupations[s * l..(s + 1) * l];
            let onsite: f64 = occ.iter().zip(potential).map(|(n, v)| n * v).sum();
            *slot = u * self.double_occ[s] as f64 + onsite;
        }
    }

    pub fn diagonal(&self, potential: &[f64]) -> Result<Vec<f64>> {
        self.check_potential(potential)?;
        let mut out = vec![0.0; self.dim()];
        self.diagonal_into(potential, &mut out);
        Ok(out)
    }

    pub fn sparse(&self, potential: &[f64]) -> Result<SparseHamiltonian> {
        Ok(SparseHamiltonian {
            diagonal: self.diagonal(potential)?,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.clone(),
        })
    }

    pub fn hopping_pattern(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.cols, &self.vals)
    }

    pub fn dense(&self, potential: &[f64]) -> Result<HamiltonianMatrix> {
        let matrix = self.sparse(potential)?.to_dense();
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-14 {
            return Err(Error::Numerical(format!(
                "assembled Hamiltonian not Hermitian (max asymmetry {asym:e})"
            )));
        }
        Ok(HamiltonianMatrix { spec: self.spec, potential: potential.to_vec(), matrix })
    }
}

/// Dense Hubbard Hamiltonian for the potential `v` in `basis`.
pub fn assemble_hamiltonian(basis: &SectorBasis, spec: &ChainSpec, v: &[f64]) -> Result<HamiltonianMatrix> {
    ChainOperators::new(basis, spec)?.dense(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn sector_dimensions() {
        for (l, n, expected) in [(2, 1, 4), (4, 2, 36), (6, 3, 400)] {
            let spec = ChainSpec::new(l, n, n, 1.0, 0.0).unwrap();
            assert_eq!(build_sector_basis(&spec).unwrap().dim(), expected);
        }
    }

    #[test]
    fn sector_dimension_matches_enumeration() {
        for l in 2..=8 {
            for nu in 0..=l {
                for nd in 0..=l {
                    let spec = ChainSpec::new(l, nu, nd, 1.0, 0.0).unwrap();
                    let basis = build_sector_basis(&spec).unwrap();
                    let brute: Vec<(u32, u32)> = (0..1u32 << l)
                        .flat_map(|u| (0..1u32 << l).map(move |d| (u, d)))
                        .filter(|(u, d)| u.count_ones() as usize == nu && d.count_ones() as usize == nd)
                        .collect();
                    assert_eq!(basis.dim(), binomial(l, nu) * binomial(l, nd));
                    assert_eq!(basis.states(), brute.as_slice());
                }
            }
        }
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(ChainSpec::new(4, 5, 1, 1.0, 0.0).is_err());
        assert!(ChainSpec::new(4, 1, 1, 0.0, 0.0).is_err());
        assert!(ChainSpec::half_filled(5, 0.0).is_err());
    }

    #[test]
    fn double_occupancy_counts() {
        let basis = SectorBasis::from_states(2, vec![(0b01, 0b01), (0b01, 0b10)]).unwrap();
        assert_eq!(double_occupancy_diagonal(&basis), vec![1, 0]);

        // Brute force: sum over all 3-up/3-down configurations of 6 sites.
        let spec = ChainSpec::half_filled(6, 0.0).unwrap();
        let basis = build_sector_basis(&spec).unwrap();
        let total: u32 = double_occupancy_diagonal(&basis).iter().sum();
        let mut brute = 0;
        for u in 0..64u32 {
            for d in 0..64u32 {
                if u.count_ones() == 3 && d.count_ones() == 3 {
                    brute += (0..6).filter(|i| (u >> i) & 1 == 1 && (d >> i) & 1 == 1).count() as u32;
                }
            }
        }
        assert_eq!(total, brute);
        assert_eq!(total, 600);
    }

    #[test]
    fn jordan_wigner_counts_between() {
        assert_eq!(jordan_wigner_sign(0b1111, 0, 1), 1.0);
        assert_eq!(jordan_wigner_sign(0b0110, 0, 3), 1.0);
        assert_eq!(jordan_wigner_sign(0b0010, 0, 2), -1.0);
        assert_eq!(jordan_wigner_sign(0b0010, 2, 0), -1.0);
    }

    #[test]
    fn hamiltonian_rejects_bad_potential() {
        let spec = ChainSpec::half_filled(2, 0.0).unwrap();
        let basis = build_sector_basis(&spec).unwrap();
        assert!(assemble_hamiltonian(&basis, &spec, &[0.0; 3]).is_err());
    }

    #[test]
    fn atomic_limit_diagonal() {
        let spec = ChainSpec::half_filled(2, 3.0).unwrap();
        let basis = build_sector_basis(&spec).unwrap();
        let ops = ChainOperators::new(&basis, &spec).unwrap();
        let mut diag = ops.diagonal(&[0.0, 0.0]).unwrap();
        diag.sort_by(f64::total_cmp);
        assert_eq!(diag, vec![0.0, 0.0, 3.0, 3.0]);
    }

    #[test]
    fn exact_symmetry() {
        let spec = ChainSpec::half_filled(4, 2.5).unwrap();
        let basis = build_sector_basis(&spec).unwrap();
        let h = assemble_hamiltonian(&basis, &spec, &[0.3, -1.0, 2.0, 0.1]).unwrap();
        assert_eq!(h.matrix, h.matrix.transpose());
    }

    #[test]
    fn particle_number_is_conserved_across_sectors() {
        // Union of (2,1) and (1,2) sectors of a 3-site chain.
        let mut states = Vec::new();
        for (nu, nd) in [(2, 1), (1, 2), (1, 1)] {
            for u in masks_with_popcount(3, nu) {
                for d in masks_with_popcount(3, nd) {
                    states.push((u, d));
                }
            }
        }
        let basis = SectorBasis::from_states(3, states).unwrap();
        assert_eq!(basis.sector(), None);
        let spec = ChainSpec::new(3, 1, 1, 1.0, 2.0).unwrap();
        let h = assemble_hamiltonian(&basis, &spec, &[0.5, -0.2, 0.7]).unwrap();
        let mut coupled = 0;
        for (a, &(ua, da)) in basis.states().iter().enumerate() {
            for (b, &(ub, db)) in basis.states().iter().enumerate() {
                let same = ua.count_ones() == ub.count_ones() && da.count_ones() == db.count_ones();
                if !same {
                    assert_eq!(h.matrix[(a, b)], 0.0);
                } else if a != b && h.matrix[(a, b)] != 0.0 {
                    coupled += 1;
                }
            }
        }
        assert!(coupled > 0);
    }
}
