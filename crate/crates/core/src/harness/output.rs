//! Files written by a campaign and the reader for the replica CSV.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{ExperimentConfig, ExperimentResult, ReplicaRecord};
use crate::error::{Error, Result};

/// Files whose presence marks a directory as holding results.
pub const OUTPUT_FILES: [&str; 5] = ["config.json", "replicas.csv", "verdicts.json", "summary.txt", "result.json"];

/// Creates `dir` if needed and refuses to reuse one holding results unless `force`.
pub fn prepare_output_dir(dir: &Path, digest: &str, force: bool) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::Io(format!("{} exists and is not a directory", dir.display())));
    }
    let existing: Vec<&str> = OUTPUT_FILES.iter().copied().filter(|f| dir.join(f).exists()).collect();
    if !existing.is_empty() && !force {
        let previous = fs::read_to_string(dir.join("config.json"))
            .ok()
            .and_then(|text| serde_json::from_str::<ExperimentConfig>(&text).ok())
            .map(|c| c.digest());
        let relation = match previous {
            Some(d) if d == digest => "the same configuration digest".to_string(),
            Some(d) => format!("a different configuration (digest {})", &d[..12]),
            None => "unreadable earlier results".to_string(),
        };
        return Err(Error::Refused(format!(
            "{} already holds {} from {relation}; pass --force to overwrite",
            dir.display(),
            existing.join(", ")
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn clean(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Streaming writer for `replicas.csv`.
pub struct ReplicaSink {
    out: BufWriter<File>,
}

impl ReplicaSink {
    pub fn create(path: &Path, columns: &[String]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut header = String::from("replica,seed");
        for c in columns {
            header.push(',');
            header.push_str(&clean(c));
        }
        header.push_str(",rejected,failure\n");
        out.write_all(header.as_bytes())?;
        Ok(Self { out })
    }

    pub fn write<'a>(&mut self, records: impl Iterator<Item = &'a ReplicaRecord>) -> Result<()> {
        for r in records {
            let mut line = format!("{},{}", r.replica, r.seed);
            for v in &r.values {
                // `{}` on f64 prints the shortest representation that parses back exactly
                write!(line, ",{v}").unwrap();
            }
            write!(line, ",{},{}\n", r.rejected, r.failure.as_deref().map(clean).unwrap_or_default()).unwrap();
            self.out.write_all(line.as_bytes())?;
        }
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads `replicas.csv` back into column names and records.
pub fn read_replicas_csv(path: &Path) -> Result<(Vec<String>, Vec<ReplicaRecord>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| Error::Io("empty replica file".into()))??;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() < 4 || fields[0] != "replica" || fields[fields.len() - 1] != "failure" {
        return Err(Error::Io(format!("unexpected replica header {header:?}")));
    }
    let columns: Vec<String> = fields[2..fields.len() - 2].iter().map(|s| s.to_string()).collect();
    let bad = |n: usize| Error::Io(format!("malformed replica row {n}"));
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != columns.len() + 4 {
            return Err(bad(n));
        }
        let values = parts[2..2 + columns.len()].iter().map(|s| s.parse::<f64>().map_err(|_| bad(n))).collect::<Result<Vec<_>>>()?;
        let failure = parts[parts.len() - 1];
        records.push(ReplicaRecord {
            replica: parts[0].parse().map_err(|_| bad(n))?,
            seed: parts[1].to_string(),
            values,
            rejected: parts[parts.len() - 2].parse().map_err(|_| bad(n))?,
            failure: (!failure.is_empty()).then(|| failure.to_string()),
        });
    }
    Ok((columns, records))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Human-readable verdict table.
pub fn summary_table(config: &ExperimentConfig, result: &ExperimentResult) -> String {
    let mut s = String::new();
    writeln!(s, "campaign {}  digest {}", config.campaign, result.config_digest).unwrap();
    writeln!(s, "replicas {} (failed {})  seed {}", result.replicas, result.failed, config.seed).unwrap();
    writeln!(s).unwrap();
    let width = result.verdicts.iter().map(|v| v.name.len()).max().unwrap_or(8).max(8);
    writeln!(s, "{:<6} {:<width$} {:>14} {:>12} {:>8}  note", "result", "check", "statistic", "threshold", "n").unwrap();
    for v in &result.verdicts {
        writeln!(
            s,
            "{:<6} {:<width$} {:>14.6e} {:>12.4e} {:>8}  {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.statistic,
            v.threshold,
            v.n,
            v.note
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(
        s,
        "overall {}  ({:.1} s, {:.2} replicas/s, {} workers)",
        if result.passed() { "PASS" } else { "FAIL" },
        result.metrics.wall_seconds,
        result.metrics.replicas_per_second,
        result.metrics.workers
    )
    .unwrap();
    s
}

/// Writes everything except the already streamed `replicas.csv`.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    fs::write(dir.join("config.json"), config.canonical_json() + "\n")?;
    if !dir.join("replicas.csv").exists() {
        let mut sink = ReplicaSink::create(&dir.join("replicas.csv"), &result.columns)?;
        sink.write(result.records.iter())?;
        sink.finish()?;
    }
    write_json(&dir.join("verdicts.json"), &result.verdicts)?;
    write_json(&dir.join("result.json"), result)?;
    fs::write(dir.join("summary.txt"), summary_table(config, result))?;
    for plot in &result.plots {
        let mut text = plot.header.join(",");
        text.push('\n');
        for row in &plot.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(dir.join(&plot.file), text)?;
    }
    for (name, doc) in &result.documents {
        write_json(&dir.join(name), doc)?;
    }
    if let Some(frames) = &result.trajectory {
        let mut out = BufWriter::new(File::create(dir.join("trajectory.csv"))?);
        out.write_all(b"t,x_index,u\n")?;
        let mut summary = Vec::with_capacity(frames.len());
        for f in frames {
            for (i, u) in f.values.iter().enumerate() {
                writeln!(out, "{},{i},{u}", f.t)?;
            }
            let n = f.values.len() as f64;
            let mean = f.values.iter().sum::<f64>() / n;
            let sd = (f.values.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n).sqrt();
            summary.push(serde_json::json!({
                "t": f.t,
                "sites": f.values.len(),
                "mean": mean,
                "sd": sd,
                "min": f.values.iter().copied().fold(f64::INFINITY, f64::min),
                "max": f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }));
        }
        out.flush()?;
        write_json(&dir.join("trajectory_frames.json"), &summary)?;
    }
    Ok(())
}
