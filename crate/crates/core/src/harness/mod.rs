//! Campaign orchestration: configuration, seeding, parallel replication and
//! persistence.
//!
//! Every replica draws from its own counter-based stream keyed by
//! `(seed, replica, purpose)`, so results do not depend on the worker count
//! or on scheduling. Replicas run in fixed-size chunks; records of a finished
//! chunk are appended to `replicas.csv` in replica order.

mod campaigns;
mod config;
mod output;
mod seed;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    AssociateSection, CampaignKind, ConstantsSection, DalangSection, DiffusionSection, ExperimentConfig, FcltSection, GridSection,
    HarnessSection, LowerBoundSection, MalliavinSection, NoiseSection, Overrides, TnCltSection, ValidateSection,
};
pub use output::{prepare_output_dir, read_replicas_csv, summary_table, write_outputs, ReplicaSink, OUTPUT_FILES};
pub use seed::{replica_key, replica_tag, seed_set_digest, seed_stream};

use crate::error::{Error, Result};
use crate::solver::FieldFrame;
use crate::stats::TestVerdict;

/// One replica's contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    /// Tag of the replica's primary stream.
    pub seed: String,
    pub values: Vec<f64>,
    /// Sites or samples rejected for domain violations.
    pub rejected: usize,
    pub failure: Option<String>,
}

impl ReplicaRecord {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Mean, variance and standard error of one record column over the
/// non-failed replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnAggregate {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

/// Recomputes the column aggregates from records.
pub fn aggregate(columns: &[String], records: &[ReplicaRecord]) -> Vec<ColumnAggregate> {
    columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let v: Vec<f64> = records.iter().filter(|r| r.ok()).map(|r| r.values[j]).collect();
            let n = v.len();
            let mean = if n > 0 { v.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let variance = if n > 1 { v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { f64::NAN };
            ColumnAggregate { name: name.clone(), n, mean, variance, se: (variance / n as f64).sqrt() }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub wall_seconds: f64,
    pub replicas_per_second: f64,
    pub workers: usize,
}

/// A plot-ready table written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotTable {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub campaign: CampaignKind,
    pub config_digest: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub records: Vec<ReplicaRecord>,
    pub replicas: usize,
    pub failed: usize,
    pub aggregates: Vec<ColumnAggregate>,
    /// Campaign-specific estimators.
    pub estimators: serde_json::Value,
    pub verdicts: Vec<TestVerdict>,
    pub metrics: Metrics,
    #[serde(skip)]
    pub plots: Vec<PlotTable>,
    /// Extra JSON documents, by file name.
    #[serde(skip)]
    pub documents: Vec<(String, serde_json::Value)>,
    #[serde(skip)]
    pub trajectory: Option<Vec<FieldFrame>>,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&TestVerdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the rayon default when absent.
    pub workers: Option<usize>,
    /// Output directory; nothing is written when absent.
    pub out: Option<PathBuf>,
    pub force: bool,
}

/// What a campaign hands back before the generic bookkeeping.
pub(crate) struct CampaignOutput {
    pub columns: Vec<String>,
    pub records: Vec<ReplicaRecord>,
    pub estimators: serde_json::Value,
    pub verdicts: Vec<TestVerdict>,
    pub plots: Vec<PlotTable>,
    pub documents: Vec<(String, serde_json::Value)>,
}

const CHUNK: usize = 64;

/// Runs `count` replicas in parallel chunks, streaming records to `sink`.
pub(crate) fn replicate<P, F>(count: usize, sink: &mut Option<ReplicaSink>, f: F) -> Result<Vec<(ReplicaRecord, Option<P>)>>
where
    P: Send,
    F: Fn(usize) -> (ReplicaRecord, Option<P>) + Sync + Send,
{
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    while start < count {
        let end = (start + CHUNK).min(count);
        let chunk: Vec<(ReplicaRecord, Option<P>)> = (start..end).into_par_iter().map(&f).collect();
        if let Some(s) = sink.as_mut() {
            s.write(chunk.iter().map(|c| &c.0))?;
        }
        out.extend(chunk);
        start = end;
    }
    Ok(out)
}

/// Validates, runs and (when an output directory is given) persists a campaign.
pub fn run_campaign(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    if options.workers == Some(0) {
        return Err(Error::Config(vec!["--workers must be at least 1".into()]));
    }
    let digest = config.digest();
    if let Some(dir) = &options.out {
        prepare_output_dir(dir, &digest, options.force)?;
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = options.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| Error::Internal(format!("thread pool: {e}")))?
    };
    let workers = pool.current_num_threads();
    let started = Instant::now();
    let mut sink = match &options.out {
        Some(dir) => Some(ReplicaSink::create(&dir.join("replicas.csv"), &campaigns::columns(config)?)?),
        None => None,
    };
    let out = pool.install(|| campaigns::run(config, &mut sink))?;
    if let Some(s) = sink.take() {
        s.finish()?;
    }
    let trajectory = if config.harness.export_trajectory && config.campaign.simulates() {
        Some(pool.install(|| campaigns::export_trajectory(config))?)
    } else {
        None
    };
    let wall = started.elapsed().as_secs_f64();
    let failed = out.records.iter().filter(|r| !r.ok()).count();
    let mut verdicts = out.verdicts;
    if config.campaign.simulates() && !out.records.is_empty() {
        let frac = failed as f64 / out.records.len() as f64;
        verdicts.push(TestVerdict {
            name: "failure_budget".into(),
            statistic: frac,
            p_value: None,
            distance: None,
            threshold: config.harness.failure_budget,
            pass: frac <= config.harness.failure_budget,
            n: out.records.len(),
            seed_digest: None,
            note: format!("{failed} failed replicas"),
        });
    }
    let result = ExperimentResult {
        campaign: config.campaign,
        config_digest: digest,
        aggregates: aggregate(&out.columns, &out.records),
        columns: out.columns,
        replicas: out.records.len(),
        failed,
        records: out.records,
        estimators: out.estimators,
        verdicts,
        metrics: Metrics {
            wall_seconds: wall,
            replicas_per_second: if wall > 0.0 { config.replicas as f64 / wall } else { 0.0 },
            workers,
        },
        plots: out.plots,
        documents: out.documents,
        trajectory,
    };
    if let Some(dir) = &options.out {
        write_outputs(dir, config, &result)?;
    }
    Ok(result)
}
