//! Linear-in-time on-site driving protocols.
//!
//! Every protocol has the form `v_i(t) = μ_i⁰ + μ_i^τ · t/τ`, so the
//! potential at `t = τ` is `μ⁰ + μ^τ` and the final Hamiltonian does not
//! depend on `τ`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    /// Alternating-sign potential on every site.
    Comb,
    /// Only the two central sites are driven.
    #[serde(rename = "mi")]
    MiddleIsland,
    /// Linear potential slope across the chain.
    #[serde(rename = "aef")]
    AppliedElectricField,
    Custom,
}

impl DriveKind {
    pub const PRESETS: [DriveKind; 3] = [DriveKind::MiddleIsland, DriveKind::Comb, DriveKind::AppliedElectricField];

    pub fn as_str(&self) -> &'static str {
        match self {
            DriveKind::Comb => "comb",
            DriveKind::MiddleIsland => "mi",
            DriveKind::AppliedElectricField => "aef",
            DriveKind::Custom => "custom",
        }
    }
}

impl fmt::Display for DriveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "comb" => Ok(DriveKind::Comb),
            "mi" | "middle-island" | "middleisland" => Ok(DriveKind::MiddleIsland),
            "aef" | "applied-electric-field" => Ok(DriveKind::AppliedElectricField),
            "custom" => Ok(DriveKind::Custom),
            other => Err(Error::Parse(format!("unknown drive '{other}'"))),
        }
    }
}

/// Per-site coefficients of a linear ramp and its duration (units of 1/J).
#[derive(Debug, Clone, PartialEq)]
pub struct DriveProtocol {
    pub kind: DriveKind,
    pub mu0: Vec<f64>,
    pub mutau: Vec<f64>,
    pub tau: f64,
}

const COMB_MU0: f64 = 0.5;
const COMB_MUTAU: f64 = 4.5;
const MI_MU0: f64 = 0.5;
const MI_MUTAU: f64 = 10.0;
const AEF_MU0: f64 = 0.5;
const AEF_MUTAU: f64 = 10.0;

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain(format!("drive time must be positive and finite, got {tau}")));
    }
    Ok(())
}

impl DriveProtocol {
    /// One of the preset ramps on an `sites`-site chain.
    pub fn preset(kind: DriveKind, sites: usize, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if sites < 2 {
            return Err(domain(format!("drives need at least 2 sites, got {sites}")));
        }
        let l = sites as f64;
        // one-based site label i = 1..=L
        let labels = 1..=sites;
        let (mu0, mutau): (Vec<f64>, Vec<f64>) = match kind {
            DriveKind::Comb => labels
                .map(|i| {
                    let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                    (COMB_MU0 * s, COMB_MUTAU * s)
                })
                .unzip(),
            DriveKind::MiddleIsland => {
                if sites % 2 != 0 {
                    return Err(domain(format!("middle-island drive needs an even site count, got {sites}")));
                }
                let mid = sites / 2;
                labels
                    .map(|i| if i == mid || i == mid + 1 { (MI_MU0, MI_MUTAU) } else { (0.0, 0.0) })
                    .unzip()
            }
            DriveKind::AppliedElectricField => labels
                .map(|i| {
                    let x = i as f64;
                    (2.0 * AEF_MU0 / l * x - AEF_MU0, 2.0 * AEF_MUTAU / l * x - AEF_MUTAU)
                })
                .unzip(),
            DriveKind::Custom => return Err(domain("custom drives need explicit coefficients")),
        };
        Ok(Self { kind, mu0, mutau, tau })
    }

    pub fn custom(mu0: Vec<f64>, mutau: Vec<f64>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if mu0.len() != mutau.len() {
            return Err(domain(format!(
                "coefficient vectors differ in length ({} vs {})",
                mu0.len(),
                mutau.len()
            )));
        }
        if mu0.iter().chain(&mutau).any(|x| !x.is_finite()) {
            return Err(domain("drive coefficients must be finite"));
        }
        Ok(Self { kind: DriveKind::Custom, mu0, mutau, tau })
    }

    pub fn sites(&self) -> usize {
        self.mu0.len()
    }

    /// Same ramp coefficients with another duration.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { tau, ..self.clone() })
    }

    /// `v(t)`, without range checking; used inside the propagator.
    pub(crate) fn potential_unchecked(&self, t: f64) -> Vec<f64> {
        let s = t / self.tau;
        self.mu0.iter().zip(&self.mutau).map(|(a, b)| a + b * s).collect()
    }

    pub(crate) fn potential_into(&self, t: f64, out: &mut [f64]) {
        let s = t / self.tau;
        for ((o, a), b) in out.iter_mut().zip(&self.mu0).zip(&self.mutau) {
            *o = a + b * s;
        }
    }

    /// Potential at `t = 0`.
    pub fn initial_potential(&self) -> Vec<f64> {
        self.mu0.clone()
    }

    /// Potential at `t = τ`; independent of `τ`.
    pub fn final_potential(&self) -> Vec<f64> {
        self.mu0.iter().zip(&self.mutau).map(|(a, b)| a + b).collect()
    }

    /// Restriction of the ramp to `[start, end] ⊂ [0, τ]`, re-expressed as a
    /// ramp of duration `end - start`.
    pub fn segment(&self, start: f64, end: f64) -> Result<Self> {
        if !(0.0 <= start && start < end && end <= self.tau) {
            return Err(domain(format!("segment [{start}, {end}] not inside [0, {}]", self.tau)));
        }
        let mu0 = self.potential_unchecked(start);
        let rate = (end - start) / self.tau;
        let mutau = self.mutau.iter().map(|b| b * rate).collect();
        Ok(Self { kind: DriveKind::Custom, mu0, mutau, tau: end - start })
    }
}

pub fn build_drive(kind: DriveKind, sites: usize, tau: f64) -> Result<DriveProtocol> {
    DriveProtocol::preset(kind, sites, tau)
}

/// `v_i(t) = μ_i⁰ + μ_i^τ·t/τ` for `0 ≤ t ≤ τ`.
pub fn potential_at(drive: &DriveProtocol, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=drive.tau).contains(&t) {
        return Err(domain(format!("time {t} outside [0, {}]", drive.tau)));
    }
    Ok(drive.potential_unchecked(t))
}
