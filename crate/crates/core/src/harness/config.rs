//! Experiment configuration: presets per campaign, TOML overrides, exhaustive
//! validation and the canonical digest.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{HeatSymbol, LatticeGrid};
use crate::noise::{NoiseKind, NoiseModel};
use crate::observables::ObservableSpec;
use crate::solver::DiffusionSpec;
use crate::stats::{AssociationPair, MonotoneFunctional};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignKind {
    Validate,
    Clt,
    Kpz,
    Fclt,
    Rate,
    LowerBound,
    Malliavin,
    Associate,
    TnClt,
    Dalang,
    Constants,
}

impl CampaignKind {
    pub const ALL: [CampaignKind; 11] = [
        Self::Validate,
        Self::Clt,
        Self::Kpz,
        Self::Fclt,
        Self::Rate,
        Self::LowerBound,
        Self::Malliavin,
        Self::Associate,
        Self::TnClt,
        Self::Dalang,
        Self::Constants,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Clt => "clt",
            Self::Kpz => "kpz",
            Self::Fclt => "fclt",
            Self::Rate => "rate",
            Self::LowerBound => "lower-bound",
            Self::Malliavin => "malliavin",
            Self::Associate => "associate",
            Self::TnClt => "tn-clt",
            Self::Dalang => "dalang",
            Self::Constants => "constants",
        }
    }

    /// Whether the campaign simulates replicas at all.
    pub fn simulates(&self) -> bool {
        !matches!(self, Self::Dalang)
    }
}

impl fmt::Display for CampaignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    /// `dirac`, `gaussian` or `exponential`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

impl NoiseSection {
    fn kind(&self, problems: &mut Vec<String>) -> Option<NoiseKind> {
        let (want_b, want_r) = match self.kind.as_str() {
            "dirac" => (false, false),
            "gaussian" => (true, false),
            "exponential" => (false, true),
            other => {
                problems.push(format!("noise.kind must be dirac, gaussian or exponential, got {other:?}"));
                return None;
            }
        };
        let mut ok = true;
        for (name, want, value) in [("bandwidth", want_b, self.bandwidth), ("rate", want_r, self.rate)] {
            match (want, value) {
                (true, None) => {
                    problems.push(format!("noise.{name} is required for noise.kind = {:?}", self.kind));
                    ok = false;
                }
                (false, Some(_)) => {
                    problems.push(format!("noise.{name} does not apply to noise.kind = {:?}", self.kind));
                    ok = false;
                }
                (true, Some(v)) if !(v > 0.0 && v.is_finite()) => {
                    problems.push(format!("noise.{name} must be positive and finite, got {v}"));
                    ok = false;
                }
                _ => {}
            }
        }
        if !ok {
            return None;
        }
        Some(match self.kind.as_str() {
            "dirac" => NoiseKind::Dirac,
            "gaussian" => NoiseKind::Gaussian { bandwidth: self.bandwidth.unwrap() },
            _ => NoiseKind::Exponential { rate: self.rate.unwrap() },
        })
    }

    /// Typical correlation length of `f`.
    fn reach(&self) -> f64 {
        match self.kind.as_str() {
            "gaussian" => self.bandwidth.unwrap_or(0.0).max(0.0).sqrt(),
            "exponential" => 1.0 / self.rate.unwrap_or(f64::INFINITY),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSection {
    /// `pam`, `constant` or `affine`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl DiffusionSection {
    fn pam() -> Self {
        Self { kind: "pam".into(), value: None, a: None, b: None }
    }

    fn spec(&self, problems: &mut Vec<String>) -> Option<DiffusionSpec> {
        let finite = |name: &str, v: Option<f64>, problems: &mut Vec<String>| match v {
            Some(x) if x.is_finite() => Some(x),
            Some(x) => {
                problems.push(format!("diffusion.{name} must be finite, got {x}"));
                None
            }
            None => {
                problems.push(format!("diffusion.{name} is required for diffusion.kind = {:?}", self.kind));
                None
            }
        };
        let stray = |names: &[(&str, Option<f64>)], problems: &mut Vec<String>| {
            for (n, v) in names {
                if v.is_some() {
                    problems.push(format!("diffusion.{n} does not apply to diffusion.kind = {:?}", self.kind));
                }
            }
        };
        let spec = match self.kind.as_str() {
            "pam" => {
                stray(&[("value", self.value), ("a", self.a), ("b", self.b)], problems);
                Some(DiffusionSpec::Linear)
            }
            "constant" => {
                stray(&[("a", self.a), ("b", self.b)], problems);
                finite("value", self.value, problems).map(DiffusionSpec::Constant)
            }
            "affine" => {
                stray(&[("value", self.value)], problems);
                match (finite("a", self.a, problems), finite("b", self.b, problems)) {
                    (Some(a), Some(b)) => Some(DiffusionSpec::Affine { a, b }),
                    _ => None,
                }
            }
            other => {
                problems.push(format!("diffusion.kind must be pam, constant or affine, got {other:?}"));
                None
            }
        }?;
        if let Err(e) = spec.validate() {
            problems.extend(flatten(e));
            return None;
        }
        Some(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub d: usize,
    pub dx: f64,
    pub dt: f64,
    /// Side length of the periodic box; `length / dx` must be a power of two.
    pub length: f64,
    pub symbol: HeatSymbol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessSection {
    pub store_noise: bool,
    /// Largest tolerated fraction of failed replicas.
    pub failure_budget: f64,
    /// Write replica 0 as `trajectory.csv` plus per-frame summaries.
    pub export_trajectory: bool,
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self { store_noise: false, failure_budget: 1e-3, export_trajectory: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateSection {
    pub gaussian_time: f64,
    pub lags: Vec<f64>,
    pub pam_times: Vec<f64>,
    /// Evenly spaced base sites averaged within each replica, per model.
    pub gaussian_probe_sites: usize,
    pub pam_probe_sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltSection {
    pub k: f64,
    pub gamma_delta: f64,
    /// Start of every time increment in the Hölder check.
    pub holder_base: f64,
    pub gaps: Vec<f64>,
    pub holder_windows: Vec<f64>,
    pub holder_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSection {
    pub delta: f64,
    pub r: f64,
    /// Window from which the condition-3 bound must be nonvacuous.
    pub nonvacuous_from: f64,
    /// Condition (1 or 2) and constant `C` for the `t_N = N` sequence.
    pub condition: u8,
    pub c: f64,
    pub sequence_windows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalliavinSection {
    pub s: f64,
    pub t_end: f64,
    /// Perturbation site; the middle of the box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<usize>,
    pub continuations: usize,
    /// Offset in sites from `z` of the Clark–Ocone evaluation point.
    pub clark_ocone_offset: i64,
    /// `σ₀` for the constant-σ derivative check.
    pub sigma0: f64,
    pub envelope_offsets: Vec<i64>,
    /// `ε` of the moment-envelope constant.
    pub envelope_eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssociateSection {
    pub sigma0: f64,
    pub pairs: Vec<AssociationPair>,
}

impl PartialEq for AssociateSection {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TnCltSection {
    /// `t_N = c log₂ N`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DalangSection {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSection {
    pub k: f64,
    pub eps: Vec<f64>,
    /// Moment order for the plug-in `Θ_t` (must exceed 4).
    pub theta_k: f64,
    /// `(L, λ, B)` for the rate bound; all three or none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

/// Everything that determines a campaign's numbers. The output directory and
/// worker count are run options and do not enter the digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub campaign: CampaignKind,
    pub seed: u64,
    pub replicas: usize,
    /// Window lengths `N`.
    pub windows: Vec<f64>,
    /// Observation times.
    pub times: Vec<f64>,
    pub noise: NoiseSection,
    pub diffusion: DiffusionSection,
    pub observable: ObservableSpec,
    pub grid: GridSection,
    pub harness: HarnessSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fclt: Option<FcltSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<LowerBoundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malliavin: Option<MalliavinSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub associate: Option<AssociateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tn_clt: Option<TnCltSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dalang: Option<DalangSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
}

impl PartialEq for ExperimentConfig {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_json() == other.canonical_json()
    }
}

/// Command-line overrides applied after the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
}

fn flatten(e: Error) -> Vec<String> {
    match e {
        Error::Config(list) => list,
        other => vec![other.to_string()],
    }
}

fn base(campaign: CampaignKind, replicas: usize, length: f64) -> ExperimentConfig {
    ExperimentConfig {
        campaign,
        seed: 20240601,
        replicas,
        windows: Vec::new(),
        times: Vec::new(),
        noise: NoiseSection { kind: "dirac".into(), bandwidth: None, rate: None },
        diffusion: DiffusionSection::pam(),
        observable: ObservableSpec::Identity,
        grid: GridSection { d: 1, dx: 0.125, dt: 0.00625, length, symbol: HeatSymbol::Lattice },
        harness: HarnessSection::default(),
        validate: None,
        fclt: None,
        lower_bound: None,
        malliavin: None,
        associate: None,
        tn_clt: None,
        dalang: None,
        constants: None,
    }
}

impl ExperimentConfig {
    /// Default configuration of each campaign.
    pub fn preset(campaign: CampaignKind) -> Self {
        use CampaignKind::*;
        match campaign {
            Validate => {
                let mut c = base(campaign, 5000, 64.0);
                c.diffusion = DiffusionSection { kind: "constant".into(), value: Some(1.0), a: None, b: None };
                c.validate = Some(ValidateSection {
                    gaussian_time: 0.5,
                    lags: vec![0.0, 0.25, 0.5, 1.0],
                    pam_times: vec![0.25, 0.5, 1.0],
                    gaussian_probe_sites: 1,
                    pam_probe_sites: 8,
                });
                c
            }
            Clt | Kpz => {
                let mut c = base(campaign, 2000, 1024.0);
                c.windows = vec![512.0];
                c.times = vec![0.5];
                if campaign == Kpz {
                    c.observable = ObservableSpec::Log;
                }
                c
            }
            Rate => {
                let mut c = base(campaign, 2000, 1024.0);
                c.windows = vec![32.0, 64.0, 128.0, 256.0, 512.0];
                c.times = vec![2.0];
                c
            }
            Fclt => {
                let mut c = base(campaign, 2000, 512.0);
                c.windows = vec![256.0];
                c.times = vec![0.3, 0.6];
                c.fclt = Some(FcltSection {
                    k: 2.0,
                    gamma_delta: 0.45,
                    holder_base: 0.3,
                    gaps: vec![0.0125, 0.025, 0.05, 0.1, 0.2],
                    holder_windows: vec![16.0, 32.0, 64.0, 128.0, 256.0],
                    holder_gap: 0.1,
                });
                c
            }
            LowerBound => {
                let mut c = base(campaign, 1000, 1024.0);
                c.windows = vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
                c.times = vec![0.5];
                c.lower_bound = Some(LowerBoundSection {
                    delta: 0.1,
                    r: 1.0,
                    nonvacuous_from: 64.0,
                    condition: 1,
                    c: 1.0,
                    sequence_windows: vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0],
                });
                c
            }
            Malliavin => {
                let mut c = base(campaign, 200, 16.0);
                c.times = vec![0.2, 0.35, 0.5];
                c.harness.store_noise = true;
                c.malliavin = Some(MalliavinSection {
                    s: 0.1,
                    t_end: 0.5,
                    z: None,
                    continuations: 2000,
                    clark_ocone_offset: 0,
                    sigma0: 1.0,
                    envelope_offsets: vec![0, 2, 4, 8],
                    envelope_eps: 0.5,
                });
                c
            }
            Associate => {
                let mut c = base(campaign, 2000, 16.0);
                c.times = vec![0.5];
                let p = |site| MonotoneFunctional::Projection { site };
                c.associate = Some(AssociateSection {
                    sigma0: 1.0,
                    pairs: vec![
                        AssociationPair { h1: p(0), h2: p(0) },
                        AssociationPair { h1: p(0), h2: p(2) },
                        AssociationPair { h1: p(0), h2: MonotoneFunctional::Min { sites: vec![2, 4] } },
                        AssociationPair { h1: p(0), h2: MonotoneFunctional::Max { sites: vec![1, 6] } },
                        AssociationPair {
                            h1: p(0),
                            h2: MonotoneFunctional::Bump { sites: vec![1, 2, 3], center: 1.0, width: 0.5 },
                        },
                        AssociationPair {
                            h1: MonotoneFunctional::Min { sites: vec![0, 1] },
                            h2: MonotoneFunctional::Max { sites: vec![3, 5] },
                        },
                    ],
                });
                c
            }
            TnClt => {
                let mut c = base(campaign, 1000, 1024.0);
                c.windows = vec![64.0, 128.0, 256.0, 512.0];
                c.tn_clt = Some(TnCltSection { c: 0.2 });
                c
            }
            Dalang => {
                let mut c = base(campaign, 0, 16.0);
                c.dalang = Some(DalangSection {
                    alphas: vec![0.0, 0.25, 0.45, 0.5, 0.75],
                    lambdas: vec![0.1, 0.5, 1.0, 2.0, 10.0],
                    ys: vec![0.1, 1.0, 10.0],
                });
                c
            }
            Constants => {
                let mut c = base(campaign, 500, 16.0);
                c.times = vec![0.25, 0.5, 1.0];
                c.constants = Some(ConstantsSection { k: 4.0, eps: vec![0.25, 0.5, 0.75], theta_k: 8.0, l: None, lambda: None, b: None });
                c
            }
        }
    }

    /// Preset, then the TOML file at `path`, then `overrides`; validated.
    pub fn load(campaign: CampaignKind, path: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", p.display())]))?),
            None => None,
        };
        Self::from_toml_str(campaign, text.as_deref().unwrap_or(""), overrides)
    }

    pub fn from_toml_str(campaign: CampaignKind, text: &str, overrides: Overrides) -> Result<Self> {
        let preset = Self::preset(campaign);
        let mut merged = toml::Value::try_from(&preset).map_err(|e| Error::Internal(format!("preset does not serialize: {e}")))?;
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![format!("TOML syntax: {e}")]))?;
        let mut problems = Vec::new();
        if let Some(v) = user.get("campaign") {
            if v.as_str() != Some(campaign.as_str()) {
                problems.push(format!("config file is for campaign {v}, but {campaign} was requested"));
            }
        }
        merge(&mut merged, toml::Value::Table(user));
        let mut unknown = Vec::new();
        let parsed: std::result::Result<Self, _> = serde_ignored::deserialize(merged, |p| unknown.push(p.to_string()));
        problems.extend(unknown.into_iter().map(|k| format!("unknown key {k}")));
        let mut config = match parsed {
            Ok(c) => c,
            Err(e) => {
                problems.push(format!("{e}"));
                return Err(Error::Config(problems));
            }
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(r) = overrides.replicas {
            config.replicas = r;
        }
        if let Err(e) = config.validate() {
            problems.extend(flatten(e));
        }
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let mut p = Vec::new();
        let kind = self.noise.kind(&mut p).ok_or(Error::Config(p))?;
        NoiseModel::new(kind, self.grid.d)
    }

    pub fn diffusion_spec(&self) -> Result<DiffusionSpec> {
        let mut p = Vec::new();
        self.diffusion.spec(&mut p).ok_or(Error::Config(p))
    }

    pub fn lattice(&self) -> Result<LatticeGrid> {
        let n = (self.grid.length / self.grid.dx).round();
        if !(n >= 2.0 && n < 1e9) || (n * self.grid.dx - self.grid.length).abs() > 1e-9 * self.grid.length {
            return Err(Error::Config(vec![format!(
                "grid.length = {} is not a multiple of grid.dx = {}",
                self.grid.length, self.grid.dx
            )]));
        }
        Ok(LatticeGrid::new(self.grid.d, n as usize, self.grid.dx, self.grid.dt)?.with_symbol(self.grid.symbol))
    }

    /// `t_N = c log₂ N` for the tn-clt schedule.
    pub fn tn_times(&self) -> Vec<f64> {
        let c = self.tn_clt.as_ref().map_or(0.0, |s| s.c);
        self.windows.iter().map(|n| c * n.log2()).collect()
    }

    /// Largest simulated time.
    pub fn t_max(&self) -> f64 {
        use CampaignKind::*;
        let mut ts: Vec<f64> = self.times.clone();
        match self.campaign {
            Validate => {
                if let Some(v) = &self.validate {
                    ts.push(v.gaussian_time);
                    ts.extend(&v.pam_times);
                }
            }
            Fclt => {
                if let Some(f) = &self.fclt {
                    ts.extend(f.gaps.iter().map(|g| f.holder_base + g));
                    ts.push(f.holder_base + f.holder_gap);
                }
            }
            Malliavin => {
                if let Some(m) = &self.malliavin {
                    ts.push(m.t_end);
                }
            }
            TnClt => ts.extend(self.tn_times()),
            _ => {}
        }
        ts.into_iter().fold(0.0, f64::max)
    }

    /// Largest spatial extent that must stay clear of wrap-around.
    pub fn max_extent(&self) -> f64 {
        let mut ext = self.windows.iter().copied().fold(0.0, f64::max);
        if let Some(v) = &self.validate {
            ext = ext.max(v.lags.iter().copied().fold(0.0, f64::max));
        }
        if let Some(f) = &self.fclt {
            ext = ext.max(f.holder_windows.iter().copied().fold(0.0, f64::max));
        }
        if let Some(a) = &self.associate {
            let span = a
                .pairs
                .iter()
                .flat_map(|p| [site_span(&p.h1), site_span(&p.h2)])
                .flatten()
                .fold(0usize, usize::max);
            ext = ext.max(span as f64 * self.grid.dx);
        }
        if let Some(m) = &self.malliavin {
            let off = m.envelope_offsets.iter().chain([&m.clark_ocone_offset]).map(|o| o.unsigned_abs()).max().unwrap_or(0);
            ext = ext.max(2.0 * off as f64 * self.grid.dx);
        }
        ext
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        use CampaignKind::*;
        let mut p: Vec<String> = Vec::new();
        let kind = self.noise.kind(&mut p);
        let sigma = self.diffusion.spec(&mut p);
        if let Err(e) = self.observable.validate() {
            p.extend(flatten(e));
        }
        if !(self.harness.failure_budget >= 0.0 && self.harness.failure_budget < 1.0) {
            p.push(format!("harness.failure_budget must lie in [0, 1), got {}", self.harness.failure_budget));
        }
        let grid = match self.lattice() {
            Ok(g) => Some(g),
            Err(e) => {
                p.extend(flatten(e));
                None
            }
        };
        if let (Some(k), true) = (kind, (1..=2).contains(&self.grid.d)) {
            if let Err(e) = NoiseModel::new(k, self.grid.d) {
                p.extend(flatten(e));
            }
        }
        let on_step = |t: f64| {
            let k = (t / self.grid.dt).round();
            (k * self.grid.dt - t).abs() <= 1e-9 * t.max(1.0)
        };
        let check_times = |label: &str, ts: &[f64], p: &mut Vec<String>| {
            for &t in ts {
                if !(t > 0.0 && t.is_finite()) {
                    p.push(format!("{label}: time {t} must be positive and finite"));
                } else if self.grid.dt > 0.0 && !on_step(t) {
                    p.push(format!("{label}: time {t} is not a multiple of grid.dt = {}", self.grid.dt));
                }
            }
        };
        let on_lattice = |x: f64| {
            let k = (x / self.grid.dx).round();
            (k * self.grid.dx - x).abs() <= 1e-9 * x.abs().max(1.0)
        };
        let check_windows = |label: &str, ws: &[f64], p: &mut Vec<String>| {
            for &n in ws {
                if !(n > 0.0 && n.is_finite()) {
                    p.push(format!("{label}: window {n} must be positive"));
                } else if self.grid.dx > 0.0 && !on_lattice(n) {
                    p.push(format!("{label}: window {n} is not a multiple of grid.dx = {}", self.grid.dx));
                }
            }
        };
        check_times("times", &self.times, &mut p);
        check_windows("windows", &self.windows, &mut p);

        let expect = |name: &str, present: bool, wanted: bool, p: &mut Vec<String>| {
            if present && !wanted {
                p.push(format!("section [{name}] does not apply to campaign {}", self.campaign));
            }
            if !present && wanted {
                p.push(format!("section [{name}] is required for campaign {}", self.campaign));
            }
        };
        expect("validate", self.validate.is_some(), self.campaign == Validate, &mut p);
        expect("fclt", self.fclt.is_some(), self.campaign == Fclt, &mut p);
        expect("lower_bound", self.lower_bound.is_some(), self.campaign == LowerBound, &mut p);
        expect("malliavin", self.malliavin.is_some(), self.campaign == Malliavin, &mut p);
        expect("associate", self.associate.is_some(), self.campaign == Associate, &mut p);
        expect("tn_clt", self.tn_clt.is_some(), self.campaign == TnClt, &mut p);
        expect("dalang", self.dalang.is_some(), self.campaign == Dalang, &mut p);
        expect("constants", self.constants.is_some(), self.campaign == Constants, &mut p);

        let min_reps = |n: usize, p: &mut Vec<String>| {
            if self.replicas < n {
                p.push(format!("campaign {} needs at least {n} replicas, got {}", self.campaign, self.replicas));
            }
        };
        let count = |what: &str, len: usize, lo: usize, hi: usize, p: &mut Vec<String>| {
            if len < lo || len > hi {
                if lo == hi {
                    p.push(format!("campaign {} takes exactly {lo} {what}, got {len}", self.campaign));
                } else {
                    p.push(format!("campaign {} takes {lo} to {hi} {what}, got {len}", self.campaign));
                }
            }
        };
        let pam_like = |p: &mut Vec<String>, what: &str| {
            if let Some(s) = &sigma {
                if !matches!(s, DiffusionSpec::Linear) {
                    p.push(format!("campaign {} requires diffusion.kind = \"pam\" ({what})", self.campaign));
                }
            }
        };
        match self.campaign {
            Validate => {
                if let Some(s) = &sigma {
                    if !s.is_constant() {
                        p.push("campaign validate runs the Gaussian oracle and requires diffusion.kind = \"constant\"".into());
                    }
                }
                if let Some(v) = &self.validate {
                    check_times("validate.gaussian_time", &[v.gaussian_time], &mut p);
                    check_times("validate.pam_times", &v.pam_times, &mut p);
                    if v.lags.is_empty() || v.pam_times.is_empty() {
                        p.push("validate.lags and validate.pam_times must be nonempty".into());
                    }
                    for &l in &v.lags {
                        if !(l >= 0.0) || !on_lattice(l) {
                            p.push(format!("validate.lags: {l} must be a nonnegative multiple of grid.dx"));
                        }
                    }
                    if v.gaussian_probe_sites == 0 || v.pam_probe_sites == 0 {
                        p.push("validate.gaussian_probe_sites and validate.pam_probe_sites must be at least 1".into());
                    }
                }
                if !self.windows.is_empty() || !self.times.is_empty() {
                    p.push("campaign validate takes its times from [validate]; windows and times must be empty".into());
                }
                min_reps(crate::stats::MIN_NORMALITY_SAMPLES, &mut p);
            }
            Clt | Kpz => {
                count("windows", self.windows.len(), 1, 8, &mut p);
                count("times", self.times.len(), 1, 4, &mut p);
                min_reps(crate::observables::MIN_LIMIT_REPLICAS, &mut p);
                if self.campaign == Kpz {
                    pam_like(&mut p, "the Hopf–Cole transform needs u > 0");
                    if !matches!(self.observable, ObservableSpec::Log) {
                        p.push("campaign kpz requires observable.kind = \"log\"".into());
                    }
                }
            }
            Rate => {
                count("windows", self.windows.len(), 4, 32, &mut p);
                count("times", self.times.len(), 1, 1, &mut p);
                min_reps(crate::stats::MIN_DISTANCE_SAMPLES, &mut p);
                let lo = self.windows.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = self.windows.iter().copied().fold(0.0, f64::max);
                if hi < 10.0 * lo {
                    p.push(format!("rate windows {lo}..{hi} must span at least a decade"));
                }
            }
            Fclt => {
                count("windows", self.windows.len(), 1, 1, &mut p);
                count("times", self.times.len(), 2, 5, &mut p);
                min_reps(1000, &mut p);
                if let Some(f) = &self.fclt {
                    if !(f.k > 0.0 && f.gamma_delta > 0.0) {
                        p.push("fclt.k and fclt.gamma_delta must be positive".into());
                    }
                    check_times("fclt.holder_base", &[f.holder_base], &mut p);
                    let shifted: Vec<f64> = f.gaps.iter().chain([&f.holder_gap]).map(|g| f.holder_base + g).collect();
                    check_times("fclt.gaps", &shifted, &mut p);
                    check_windows("fclt.holder_windows", &f.holder_windows, &mut p);
                    if f.gaps.len() < 4 || f.holder_windows.len() < 4 {
                        p.push("fclt.gaps and fclt.holder_windows need at least 4 values each".into());
                    }
                }
            }
            LowerBound => {
                count("windows", self.windows.len(), 1, 32, &mut p);
                count("times", self.times.len(), 1, 1, &mut p);
                min_reps(crate::observables::MIN_B_PAIRS, &mut p);
                if !matches!(self.observable, ObservableSpec::Identity) {
                    p.push("campaign lower-bound requires observable.kind = \"identity\"".into());
                }
                if let Some(lb) = &self.lower_bound {
                    if !(lb.delta > 0.0 && lb.r > 0.0 && lb.c > 0.0) {
                        p.push("lower_bound.delta, lower_bound.r and lower_bound.c must be positive".into());
                    }
                    if let Some(&t) = self.times.first() {
                        if lb.delta > t {
                            p.push(format!("lower_bound.delta = {} exceeds the time {t}", lb.delta));
                        }
                    }
                    if !(lb.condition == 1 || lb.condition == 2) {
                        p.push(format!("lower_bound.condition must be 1 or 2, got {}", lb.condition));
                    }
                    if lb.sequence_windows.is_empty() {
                        p.push("lower_bound.sequence_windows must be nonempty".into());
                    }
                }
            }
            Malliavin => {
                min_reps(1, &mut p);
                if !self.harness.store_noise {
                    p.push("campaign malliavin requires harness.store_noise = true".into());
                }
                pam_like(&mut p, "positivity is checked for σ(u) = u");
                if let Some(m) = &self.malliavin {
                    if !(m.s >= 0.0) || (m.s > 0.0 && !on_step(m.s)) {
                        p.push(format!("malliavin.s = {} must be a nonnegative multiple of grid.dt", m.s));
                    }
                    check_times("malliavin.t_end", &[m.t_end], &mut p);
                    if !(m.t_end > m.s) {
                        p.push("malliavin.t_end must exceed malliavin.s".into());
                    }
                    for &t in &self.times {
                        if t <= m.s || t > m.t_end {
                            p.push(format!("times: {t} must lie in (malliavin.s, malliavin.t_end]"));
                        }
                    }
                    if m.continuations < crate::malliavin::MIN_CONTINUATIONS {
                        p.push(format!("malliavin.continuations must be at least {}", crate::malliavin::MIN_CONTINUATIONS));
                    }
                    if let (Some(z), Some(g)) = (m.z, &grid) {
                        if z >= g.len() {
                            p.push(format!("malliavin.z = {z} outside the grid of {} sites", g.len()));
                        }
                    }
                    if !(m.sigma0 > 0.0) {
                        p.push("malliavin.sigma0 must be positive".into());
                    }
                    if !(m.envelope_eps > 0.0 && m.envelope_eps < 1.0) {
                        p.push(format!("malliavin.envelope_eps = {} must lie in (0, 1)", m.envelope_eps));
                    }
                }
                if self.times.is_empty() {
                    p.push("campaign malliavin needs at least one output time".into());
                }
            }
            Associate => {
                count("times", self.times.len(), 1, 1, &mut p);
                min_reps(crate::observables::MIN_B_PAIRS, &mut p);
                pam_like(&mut p, "the constant-σ companion run is implied");
                if let Some(a) = &self.associate {
                    if !(a.sigma0 > 0.0) {
                        p.push("associate.sigma0 must be positive".into());
                    }
                    if a.pairs.is_empty() {
                        p.push("associate.pairs must be nonempty".into());
                    }
                    if let Some(g) = &grid {
                        for (i, pair) in a.pairs.iter().enumerate() {
                            for h in [&pair.h1, &pair.h2] {
                                let sites = site_list(h);
                                if sites.is_empty() {
                                    p.push(format!("associate.pairs[{i}]: {} uses no sites", h.label()));
                                }
                                if let Some(s) = sites.iter().find(|&&s| s >= g.len()) {
                                    p.push(format!("associate.pairs[{i}]: site {s} outside the grid"));
                                }
                                if let MonotoneFunctional::Bump { width, .. } = h {
                                    if !(*width > 0.0) {
                                        p.push(format!("associate.pairs[{i}]: bump width must be positive"));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            TnClt => {
                count("windows", self.windows.len(), 2, 16, &mut p);
                if !self.times.is_empty() {
                    p.push("campaign tn-clt derives its times from tn_clt.c; times must be empty".into());
                }
                min_reps(crate::stats::MIN_DISTANCE_SAMPLES, &mut p);
                if !matches!(self.observable, ObservableSpec::Identity) {
                    p.push("campaign tn-clt requires observable.kind = \"identity\"".into());
                }
                if let Some(s) = &self.tn_clt {
                    if !(s.c > 0.0) {
                        p.push("tn_clt.c must be positive".into());
                    } else {
                        check_times("tn_clt schedule", &self.tn_times(), &mut p);
                    }
                }
            }
            Dalang => {
                if let Some(s) = &self.dalang {
                    if s.alphas.iter().any(|a| !(0.0..1.0).contains(a)) {
                        p.push("dalang.alphas must lie in [0, 1)".into());
                    }
                    if s.lambdas.iter().chain(&s.ys).any(|v| !(*v > 0.0)) {
                        p.push("dalang.lambdas and dalang.ys must be positive".into());
                    }
                }
            }
            Constants => {
                if let Some(s) = &self.constants {
                    if !(s.k >= 2.0) {
                        p.push(format!("constants.k must be at least 2, got {}", s.k));
                    }
                    if s.eps.is_empty() || s.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                        p.push("constants.eps must be nonempty with values in (0, 1)".into());
                    }
                    if !(s.theta_k > 4.0) {
                        p.push(format!("constants.theta_k must exceed 4, got {}", s.theta_k));
                    }
                    let given = [s.l, s.lambda, s.b].iter().filter(|v| v.is_some()).count();
                    if given != 0 && given != 3 {
                        p.push("constants.l, constants.lambda and constants.b must be given together".into());
                    }
                }
                if self.times.is_empty() {
                    p.push("campaign constants needs at least one time".into());
                }
            }
        }
        if self.campaign.simulates() {
            let margin = self.max_extent() + 12.0 * self.t_max().sqrt() + 8.0 * self.noise.reach();
            if self.grid.length < margin {
                p.push(format!(
                    "grid.length = {} is below the margin max extent + 12√t_max + 8·(noise reach) = {margin:.4}",
                    self.grid.length
                ));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// JSON with sorted keys; the digest is taken over this text.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("configuration serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn site_list(h: &MonotoneFunctional) -> Vec<usize> {
    match h {
        MonotoneFunctional::Projection { site } => vec![*site],
        MonotoneFunctional::Min { sites } | MonotoneFunctional::Max { sites } | MonotoneFunctional::Bump { sites, .. } => sites.clone(),
        MonotoneFunctional::Custom { .. } => Vec::new(),
    }
}

fn site_span(h: &MonotoneFunctional) -> Option<usize> {
    let s = site_list(h);
    Some(s.iter().max()? - s.iter().min()?)
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot @ toml::Value::Table(_)) if v.is_table() => merge(slot, v),
                    Some(slot) => *slot = v,
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
