//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's Hamiltonian, propagator or
//! thermodynamics code.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Site potentials `(mu0, mutau)` of the preset ramps, written out from
/// their definitions.
pub fn preset_potentials(kind: &str, sites: usize) -> (Vec<f64>, Vec<f64>) {
    let l = sites as f64;
    (1..=sites)
        .map(|i| match kind {
            "comb" => {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                (0.5 * s, 4.5 * s)
            }
            "mi" => {
                if i == sites / 2 || i == sites / 2 + 1 {
                    (0.5, 10.0)
                } else {
                    (0.0, 0.0)
                }
            }
            "aef" => {
                let x = i as f64;
                (x / l - 0.5, 20.0 / l * x - 10.0)
            }
            other => panic!("unknown drive {other}"),
        })
        .unzip()
}

/// Open-chain single-particle Hamiltonian with hopping `-1`.
pub fn one_body_h(v: &[f64]) -> DMatrix<f64> {
    let l = v.len();
    DMatrix::from_fn(l, l, |r, c| {
        if r == c {
            v[r]
        } else if r.abs_diff(c) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

fn expm_i(h: &DMatrix<f64>, dt: f64) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(h.clone());
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * dt)));
    &v * phases * v.transpose()
}

/// Midpoint-rule single-particle propagator of `v(t) = mu0 + mutau t/tau`.
pub fn one_body_propagator(mu0: &[f64], mutau: &[f64], tau: f64, steps: usize) -> DMatrix<Complex64> {
    let l = mu0.len();
    let dt = tau / steps as f64;
    let mut u = DMatrix::<Complex64>::identity(l, l);
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        let v: Vec<f64> = mu0.iter().zip(mutau).map(|(a, b)| a + b * t / tau).collect();
        u = expm_i(&one_body_h(&v), dt) * u;
    }
    u
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Canonical occupations of `count` fermions over `levels`, with `ln Z`.
fn canonical(levels: &[f64], count: usize, beta: f64) -> (Vec<f64>, f64) {
    let sets = subsets(levels.len(), count);
    let energies: Vec<f64> = sets.iter().map(|s| s.iter().map(|&i| levels[i]).sum()).collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut occ = vec![0.0; levels.len()];
    for (s, w) in sets.iter().zip(&weights) {
        for &i in s {
            occ[i] += w / z;
        }
    }
    (occ, z.ln() - beta * e_min)
}

/// Work and free energy of a half-filled chain at `U = 0`, from single
/// particle quantities only.
#[derive(Debug, Clone, Copy)]
pub struct OneBodyResult {
    pub w_avg: f64,
    pub d_f: f64,
    pub d_s: f64,
}

pub fn one_body_oracle(mu0: &[f64], mutau: &[f64], tau: f64, beta: f64, steps: usize) -> OneBodyResult {
    let l = mu0.len();
    let n = l / 2;
    let vf: Vec<f64> = mu0.iter().zip(mutau).map(|(a, b)| a + b).collect();
    let h0 = one_body_h(mu0);
    let hf = one_body_h(&vf);
    let e0 = SymmetricEigen::new(h0);
    let ef = SymmetricEigen::new(hf.clone());
    let (occ, ln_z0) = canonical(e0.eigenvalues.as_slice(), n, beta);
    let (_, ln_zf) = canonical(ef.eigenvalues.as_slice(), n, beta);
    let u = one_body_propagator(mu0, mutau, tau, steps);
    let hfc = hf.map(|x| Complex64::new(x, 0.0));
    let pulled = u.adjoint() * hfc * &u;
    let mut initial = 0.0;
    let mut evolved = 0.0;
    for k in 0..l {
        let phi = e0.eigenvectors.column(k).map(|x| Complex64::new(x, 0.0));
        evolved += occ[k] * (phi.adjoint() * &pulled * &phi)[(0, 0)].re;
        initial += occ[k] * e0.eigenvalues[k];
    }
    // two independent spin species
    let w_avg = 2.0 * (evolved - initial);
    let d_f = -2.0 * (ln_zf - ln_z0) / beta;
    OneBodyResult { w_avg, d_f, d_s: beta * (w_avg - d_f) }
}

/// All sums of `count` distinct single-particle levels, for both spins.
pub fn free_many_body_levels(v: &[f64]) -> Vec<f64> {
    let eig = SymmetricEigen::new(one_body_h(v));
    let levels = eig.eigenvalues.as_slice().to_vec();
    let sums: Vec<f64> = subsets(v.len(), v.len() / 2).iter().map(|s| s.iter().map(|&i| levels[i]).sum()).collect();
    let mut out: Vec<f64> = sums.iter().flat_map(|a| sums.iter().map(move |b| a + b)).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Half-filled Hubbard Hamiltonian built from explicit creation and
/// annihilation operators on occupation tuples. Modes are interleaved
/// `2·site + spin`, unlike the library.
pub fn reference_hamiltonian(v: &[f64], u: f64) -> DMatrix<f64> {
    let l = v.len();
    let modes = 2 * l;
    let half = l / 2;
    let states: Vec<Vec<bool>> = (0u32..1 << modes)
        .map(|m| (0..modes).map(|b| m >> b & 1 == 1).collect::<Vec<_>>())
        .filter(|occ: &Vec<bool>| {
            (0..l).filter(|&s| occ[2 * s]).count() == half && (0..l).filter(|&s| occ[2 * s + 1]).count() == half
        })
        .collect();
    let index = |occ: &Vec<bool>| states.iter().position(|s| s == occ);
    let dim = states.len();
    let mut h = DMatrix::zeros(dim, dim);
    for (col, occ) in states.iter().enumerate() {
        for s in 0..l {
            let up = occ[2 * s];
            let dn = occ[2 * s + 1];
            h[(col, col)] += v[s] * (up as u8 + dn as u8) as f64;
            if up && dn {
                h[(col, col)] += u;
            }
        }
        for s in 0..l - 1 {
            for spin in 0..2 {
                for (a, b) in [(2 * s + spin, 2 * (s + 1) + spin), (2 * (s + 1) + spin, 2 * s + spin)] {
                    // -c†_a c_b
                    if !occ[b] || occ[a] {
                        continue;
                    }
                    let mut next = occ.clone();
                    let mut sign = if occ[..b].iter().filter(|&&x| x).count() % 2 == 0 { 1.0 } else { -1.0 };
                    next[b] = false;
                    if next[..a].iter().filter(|&&x| x).count() % 2 == 1 {
                        sign = -sign;
                    }
                    next[a] = true;
                    let row = index(&next).unwrap();
                    h[(row, col)] -= sign;
                }
            }
        }
    }
    h
}

/// Cyclic Jacobi eigenvalues of a real symmetric matrix, ascending.
pub fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    e.sort_by(f64::total_cmp);
    e
}
