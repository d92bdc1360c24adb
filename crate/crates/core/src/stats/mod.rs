//! Statistical verdicts: calibrated normality tests, the TV proxy, power-law
//! rate fits, functional-CLT and Hölder-moment checks, association tests.

mod association;
mod distance;
mod fit;
mod normality;
mod process;

pub use association::{association_check, AssociationPair, MonotoneFunctional, PairCovariance};
pub use distance::{distance_to_gaussian, tv_normals_bound, DistanceEstimate, MIN_DISTANCE_SAMPLES};
pub use fit::{holder_moment_check, rate_fit, HolderInput, HolderReport, RateFit};
pub use normality::{ks_statistic, normality_test, normality_test_with, MIN_NORMALITY_SAMPLES};
pub use process::{fclt_check, symmetric_eigenvalues, tn_clt_check, GaussianLimitSpec, TnPoint};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Outcome of one statistical check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub distance: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub n: usize,
    pub seed_digest: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl TestVerdict {
    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn with_seed_digest(mut self, digest: Option<String>) -> Self {
        self.seed_digest = digest;
        self
    }
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Deterministic internal stream for calibration work, keyed by a label and
/// integer parameters.
pub(crate) fn internal_rng(label: &str, keys: &[u64], stream: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    for k in keys {
        h.update(k.to_le_bytes());
    }
    let seed: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}
