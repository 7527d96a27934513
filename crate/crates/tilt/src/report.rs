//! Run manifests, metric rows, and seed-grid aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tiltlab_core::corpstats::{RunAggregate, WelchResult};

use crate::{Result, TiltError};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub language: String,
    pub architecture: String,
    pub objective: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

/// Record of one completed run. `seeds` lists the seeds that determine it,
/// outermost first (pretraining seed, then transfer seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    #[serde(default)]
    pub language: String,
    #[serde(default)]
    pub architecture: String,
    #[serde(default)]
    pub objective: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub deterministic: bool,
}

impl RunManifest {
    /// Writes `<dir>/manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        self.write_to(&path)?;
        Ok(path)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn seed(&self) -> u64 {
        self.seeds.last().copied().unwrap_or(0)
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        self.metrics
            .iter()
            .map(|(metric, &value)| MetricRow {
                run_id: self.run_id.clone(),
                language: self.language.clone(),
                architecture: self.architecture.clone(),
                objective: self.objective.clone(),
                metric: metric.clone(),
                value,
                seed: self.seed(),
            })
            .collect()
    }
}

pub fn write_rows<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> TiltError {
    TiltError::Data(e.to_string())
}

/// Manifests of every `<root>/<run>/manifest.json` (and `<root>/manifest.json`),
/// ordered by path.
pub fn load_runs(root: &Path) -> Result<Vec<RunManifest>> {
    let mut paths = Vec::new();
    if root.join(MANIFEST_FILE).is_file() {
        paths.push(root.join(MANIFEST_FILE));
    }
    for entry in fs::read_dir(root)? {
        let p = entry?.path().join(MANIFEST_FILE);
        if p.is_file() {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(TiltError::Data(format!("no run manifests under {}", root.display())));
    }
    paths.iter().map(|p| RunManifest::load(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Language,
    Architecture,
    Objective,
}

impl GroupKey {
    fn of(self, m: &RunManifest) -> &str {
        match self {
            GroupKey::Language => &m.language,
            GroupKey::Architecture => &m.architecture,
            GroupKey::Objective => &m.objective,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "language" => Ok(GroupKey::Language),
            "architecture" => Ok(GroupKey::Architecture),
            "objective" => Ok(GroupKey::Objective),
            _ => Err(TiltError::Config(format!("unknown grouping '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub group: Vec<String>,
    pub metric: String,
    pub aggregate: RunAggregate,
}

fn value(m: &RunManifest, metric: &str) -> Result<f64> {
    m.metrics
        .get(metric)
        .copied()
        .ok_or_else(|| TiltError::Data(format!("run '{}' has no metric '{metric}'", m.run_id)))
}

/// Values of `metric` for runs in one group. With `by_pretrain_seed`, runs
/// sharing their first seed are averaged into one value first.
fn group_values(runs: &[&RunManifest], metric: &str, by_pretrain_seed: bool) -> Result<Vec<f64>> {
    if !by_pretrain_seed {
        return runs.iter().map(|m| value(m, metric)).collect();
    }
    let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for m in runs {
        by_seed.entry(m.seeds.first().copied().unwrap_or(0)).or_default().push(value(m, metric)?);
    }
    Ok(by_seed.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect())
}

/// Mean and sample std of `metric` per group.
pub fn aggregate(runs: &[RunManifest], metric: &str, keys: &[GroupKey], by_pretrain_seed: bool) -> Result<Vec<AggregateRow>> {
    let mut groups: BTreeMap<Vec<String>, Vec<&RunManifest>> = BTreeMap::new();
    for m in runs {
        groups.entry(keys.iter().map(|k| k.of(m).to_string()).collect()).or_default().push(m);
    }
    groups
        .into_iter()
        .map(|(group, members)| {
            let values = group_values(&members, metric, by_pretrain_seed)?;
            Ok(AggregateRow {
                group,
                metric: metric.to_string(),
                aggregate: RunAggregate::new(values).map_err(|e| TiltError::Data(e.to_string()))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub welch: WelchResult,
}

/// Welch's test of `metric` between the runs whose `key` is `a` and `b`.
pub fn compare(runs: &[RunManifest], metric: &str, key: GroupKey, a: &str, b: &str, by_pretrain_seed: bool) -> Result<Comparison> {
    let pick = |name: &str| -> Result<RunAggregate> {
        let members: Vec<&RunManifest> = runs.iter().filter(|m| key.of(m) == name).collect();
        if members.is_empty() {
            return Err(TiltError::Data(format!("no runs with {key:?} '{name}'")));
        }
        RunAggregate::new(group_values(&members, metric, by_pretrain_seed)?).map_err(|e| TiltError::Data(e.to_string()))
    };
    let mut ga = pick(a)?;
    let gb = pick(b)?;
    let welch = ga.compare(&gb).map_err(|e| TiltError::Data(e.to_string()))?;
    Ok(Comparison {
        metric: metric.to_string(),
        a: a.to_string(),
        b: b.to_string(),
        mean_a: ga.mean,
        mean_b: gb.mean,
        welch,
    })
}

/// Plot-ready CSV: one column per grouping key, then metric, n, mean, std.
pub fn write_aggregates<W: std::io::Write>(rows: &[AggregateRow], keys: &[GroupKey], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = keys
        .iter()
        .map(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect();
    header.extend(["metric", "n", "mean", "std"].map(String::from));
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = r.group.clone();
        rec.push(r.metric.clone());
        rec.push(r.aggregate.values.len().to_string());
        rec.push(r.aggregate.mean.to_string());
        rec.push(r.aggregate.std.map(|s| s.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tiltlab_core::corpstats::welch_t_test;

    fn run(id: &str, lang: &str, arch: &str, seeds: [u64; 2], ppl: f64) -> RunManifest {
        RunManifest {
            run_id: id.into(),
            command: "transfer-lm".into(),
            language: lang.into(),
            architecture: arch.into(),
            objective: "clm".into(),
            config_sha256: sha256_hex(b"cfg"),
            seeds: seeds.to_vec(),
            checkpoints: vec![],
            metrics: [("ppl".to_string(), ppl)].into(),
            deterministic: true,
        }
    }

    #[test]
    fn identical_values_have_zero_spread() {
        let runs: Vec<RunManifest> = (0..9).map(|i| run(&format!("r{i}"), "zipf", "lstm", [i / 3, i % 3], 171.5)).collect();
        let agg = aggregate(&runs, "ppl", &[GroupKey::Language], false).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].aggregate.mean, 171.5);
        assert_eq!(agg[0].aggregate.std, Some(0.0));
        assert_eq!(agg[0].aggregate.values.len(), 9);
        let by_seed = aggregate(&runs, "ppl", &[GroupKey::Language], true).unwrap();
        assert_eq!(by_seed[0].aggregate.values.len(), 3);
    }

    #[test]
    fn comparison_delegates_to_welch() {
        let a = [150.0, 152.0, 149.0];
        let b = [170.0, 166.0, 175.0, 171.0];
        let mut runs: Vec<RunManifest> = a.iter().enumerate().map(|(i, &v)| run(&format!("a{i}"), "nesting_dep", "lstm", [i as u64, 0], v)).collect();
        runs.extend(b.iter().enumerate().map(|(i, &v)| run(&format!("b{i}"), "uniform", "lstm", [i as u64, 0], v)));
        let c = compare(&runs, "ppl", GroupKey::Language, "nesting_dep", "uniform", false).unwrap();
        assert_eq!(c.welch, welch_t_test(&a, &b).unwrap());
        assert!(c.mean_a < c.mean_b);
    }

    #[test]
    fn architecture_grouping_splits_columns() {
        let runs = vec![
            run("a", "zipf", "lstm", [0, 0], 1.0),
            run("b", "zipf", "transformer", [0, 0], 2.0),
            run("c", "uniform", "lstm", [0, 0], 3.0),
        ];
        let keys = [GroupKey::Language, GroupKey::Architecture];
        let agg = aggregate(&runs, "ppl", &keys, false).unwrap();
        let mut out = Vec::new();
        write_aggregates(&agg, &keys, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "language,architecture,metric,n,mean,std");
        assert_eq!(lines[1], "uniform,lstm,ppl,1,3,");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn missing_metric_is_reported() {
        let runs = vec![run("a", "zipf", "lstm", [0, 0], 1.0)];
        let err = aggregate(&runs, "uas", &[GroupKey::Language], false).unwrap_err();
        assert!(err.to_string().contains("uas"));
    }

    #[test]
    fn manifests_round_trip_through_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("x", "zipf", "lstm", [1, 2], 5.0);
        r.save(&dir.path().join("x")).unwrap();
        run("y", "zipf", "lstm", [1, 3], 6.0).save(&dir.path().join("y")).unwrap();
        let runs = load_runs(dir.path()).unwrap();
        assert_eq!(runs[0], r);
        assert_eq!(runs.len(), 2);
        let mut out = Vec::new();
        write_rows(&runs[0].rows(), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "run_id,language,architecture,objective,metric,value,seed\nx,zipf,lstm,clm,ppl,5.0,2\n"
        );
        assert!(load_runs(&dir.path().join("x").join("none")).is_err());
    }
}
