//! Covariances of coordinatewise-nondecreasing functionals of a random field.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{internal_rng, TestVerdict};
use crate::error::{argument, Error, Result};
use crate::observables::estimate_b;

/// A coordinatewise-nondecreasing functional of a lattice field.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneFunctional {
    Projection {
        site: usize,
    },
    Min {
        sites: Vec<usize>,
    },
    Max {
        sites: Vec<usize>,
    },
    /// `Σ_i 1/(1 + e^{-(u_i - center)/width})`.
    Bump {
        sites: Vec<usize>,
        center: f64,
        width: f64,
    },
    #[serde(skip)]
    Custom {
        name: String,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        declared_monotone: bool,
    },
}

impl fmt::Debug for MonotoneFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl MonotoneFunctional {
    pub fn label(&self) -> String {
        let list = |s: &[usize]| s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Self::Projection { site } => format!("u[{site}]"),
            Self::Min { sites } => format!("min(u[{}])", list(sites)),
            Self::Max { sites } => format!("max(u[{}])", list(sites)),
            Self::Bump { sites, center, width } => format!("bump(u[{}];{center},{width})", list(sites)),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Self::Projection { site } => u[*site],
            Self::Min { sites } => sites.iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min),
            Self::Max { sites } => sites.iter().map(|&i| u[i]).fold(f64::NEG_INFINITY, f64::max),
            Self::Bump { sites, center, width } => sites.iter().map(|&i| 1.0 / (1.0 + (-(u[i] - center) / width).exp())).sum(),
            Self::Custom { f, .. } => f(u),
        }
    }

    fn sites(&self) -> Vec<usize> {
        match self {
            Self::Projection { site } => vec![*site],
            Self::Min { sites } | Self::Max { sites } | Self::Bump { sites, .. } => sites.clone(),
            Self::Custom { .. } => Vec::new(),
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        if let Self::Custom { name, declared_monotone, .. } = self {
            if !declared_monotone {
                return Err(Error::Refused(format!("functional {name} is not declared nondecreasing")));
            }
            return Ok(());
        }
        let sites = self.sites();
        if sites.is_empty() {
            return Err(argument(format!("{} uses no sites", self.label())));
        }
        if let Some(&bad) = sites.iter().find(|&&i| i >= len) {
            return Err(argument(format!("site {bad} outside a field of {len} sites")));
        }
        if let Self::Bump { width, .. } = self {
            if !(*width > 0.0) {
                return Err(argument("bump width must be positive"));
            }
        }
        Ok(())
    }

    /// Raises random coordinates of sample fields and checks the value does not drop.
    fn spot_check(&self, frames: &[&[f64]]) -> Result<()> {
        if !matches!(self, Self::Custom { .. }) {
            return Ok(());
        }
        let mut rng = internal_rng("monotone-spot-check", &[frames.len() as u64], 0);
        for _ in 0..64 {
            let base = frames[rng.random_range(0..frames.len())];
            let i = rng.random_range(0..base.len());
            let mut raised = base.to_vec();
            raised[i] += rng.random_range(0.01..1.0) * (1.0 + base[i].abs());
            if self.eval(&raised) < self.eval(base) - 1e-12 * (1.0 + self.eval(base).abs()) {
                return Err(Error::Refused(format!("functional {} decreases when coordinate {i} increases", self.label())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssociationPair {
    pub h1: MonotoneFunctional,
    pub h2: MonotoneFunctional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCovariance {
    pub h1: String,
    pub h2: String,
    pub cov: f64,
    pub se: f64,
    pub pass: bool,
}

/// Passes when every pair has covariance at least `-slack` standard errors.
pub fn association_check(frames: &[&[f64]], pairs: &[AssociationPair], slack: f64) -> Result<(TestVerdict, Vec<PairCovariance>)> {
    if pairs.is_empty() {
        return Err(argument("no functional pairs configured"));
    }
    let len = frames.first().map(|f| f.len()).unwrap_or(0);
    for p in pairs {
        p.h1.validate(len)?;
        p.h2.validate(len)?;
        p.h1.spot_check(frames)?;
        p.h2.spot_check(frames)?;
    }
    let mut out = Vec::with_capacity(pairs.len());
    let mut worst = f64::INFINITY;
    for p in pairs {
        let a: Vec<f64> = frames.iter().map(|u| p.h1.eval(u)).collect();
        let b: Vec<f64> = frames.iter().map(|u| p.h2.eval(u)).collect();
        let e = estimate_b(&a, &b)?;
        let z = if e.se > 0.0 { e.value / e.se } else if e.value >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        worst = worst.min(z);
        out.push(PairCovariance { h1: p.h1.label(), h2: p.h2.label(), cov: e.value, se: e.se, pass: z >= -slack });
    }
    let verdict = TestVerdict {
        name: "association".into(),
        statistic: worst,
        p_value: None,
        distance: None,
        threshold: -slack,
        pass: out.iter().all(|p| p.pass),
        n: frames.len(),
        seed_digest: None,
        note: format!("smallest covariance z-score over {} pairs", out.len()),
    };
    Ok((verdict, out))
}
