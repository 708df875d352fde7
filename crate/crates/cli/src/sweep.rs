//! Cartesian parameter sweeps over a base run configuration.
//!
//! A sweep file looks like
//!
//! ```json
//! {
//!   "base": "base.json",
//!   "axes": [
//!     {"path": "physical.R", "values": [0.5, 1.0]},
//!     {"path": "controller", "values": [{"family": "modal", "mu": 0, "count": 1}, "auto"]}
//!   ]
//! }
//! ```
//!
//! `base` is either a path (relative to the sweep file) or an inline config.
//! Each `path` is a dot-separated key path into the config; missing objects
//! along the way are created.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use burgers_stab::config::{run, RunOutcome};
use burgers_stab::{Error, RunConfig};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use crate::{artifacts, exit_code, EXIT_CONFIG};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: Value,
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<SweepSpec> {
        let spec: SweepSpec = serde_json::from_str(text).context("invalid sweep file")?;
        if spec.axes.is_empty() {
            bail!("sweep file has no axes");
        }
        for a in &spec.axes {
            if a.values.is_empty() {
                bail!("axis `{}` has no values", a.path);
            }
            if a.path.is_empty() || a.path.split('.').any(str::is_empty) {
                bail!("malformed axis path `{}`", a.path);
            }
        }
        Ok(spec)
    }

    /// The base config as JSON, reading it from disk if given as a path.
    pub fn base_config(&self, dir: &Path) -> Result<(Value, PathBuf)> {
        match &self.base {
            Value::String(p) => {
                let path = dir.join(p);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading base config {}", path.display()))?;
                let v = serde_json::from_str(&text)
                    .with_context(|| format!("parsing base config {}", path.display()))?;
                let parent = path
                    .parent()
                    .map_or_else(|| dir.to_path_buf(), Path::to_path_buf);
                Ok((v, parent))
            }
            Value::Object(_) => Ok((self.base.clone(), dir.to_path_buf())),
            _ => bail!("`base` must be a path or an object"),
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis values of point `i`; the last axis varies fastest.
    pub fn point(&self, mut i: usize) -> Vec<Value> {
        let mut out = vec![Value::Null; self.axes.len()];
        for (slot, a) in out.iter_mut().zip(&self.axes).rev() {
            *slot = a.values[i % a.values.len()].clone();
            i /= a.values.len();
        }
        out
    }
}

pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (n, key) in keys.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().unwrap()
            }
            _ => bail!(
                "cannot set `{path}`: `{}` is not an object",
                keys[..n].join(".")
            ),
        };
        if n + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one key")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run: String,
    pub point: Vec<Value>,
    pub status: String,
    pub exit_code: u8,
    pub claim: Option<String>,
    pub fitted_rate: Option<f64>,
    pub certified_rate: Option<f64>,
    /// `Some(false)` also when the ledger's conditions fail.
    pub verdict: Option<bool>,
    pub conditions_met: Option<bool>,
    pub mu: Option<f64>,
    pub modes: Option<usize>,
    pub message: String,
}

impl SummaryRow {
    fn failed(run: String, point: Vec<Value>, code: u8, status: &str, message: String) -> Self {
        SummaryRow {
            run,
            point,
            status: status.into(),
            exit_code: code,
            claim: None,
            fitted_rate: None,
            certified_rate: None,
            verdict: None,
            conditions_met: None,
            mu: None,
            modes: None,
            message,
        }
    }

    pub fn from_outcome(run: String, point: Vec<Value>, out: &RunOutcome) -> Self {
        let (status, code) = artifacts::status(out);
        let a = out.analysis.as_ref();
        let ledger = out.certification.ledger.as_ref();
        let claim = a.map(|a| a.claim);
        let fit = a.and_then(|a| a.fit);
        let certified = claim.and_then(|c| ledger.and_then(|l| l.certified_rate(c)));
        let conditions_met = claim.and_then(|c| ledger.map(|l| l.conditions_met(c)));
        let verdict = match (
            a.and_then(|a| a.certificate_verdict.as_ref()),
            fit,
            conditions_met,
        ) {
            (Some(v), _, _) => Some(v.pass),
            (None, Some(_), Some(false)) => Some(false),
            _ => None,
        };
        let message = out
            .simulation
            .divergence
            .as_ref()
            .map(|e| e.to_string())
            .or_else(|| a.and_then(|a| a.fit_error.clone()))
            .or_else(|| a.and_then(|a| a.certificate_error.clone()))
            .unwrap_or_default();
        let spec = out.certification.controller;
        SummaryRow {
            run,
            point,
            status: status.into(),
            exit_code: code,
            claim: claim.map(|c| c.name().to_string()),
            fitted_rate: fit.map(|f| f.rate),
            certified_rate: certified,
            verdict,
            conditions_met,
            mu: Some(spec.mu),
            modes: Some(spec.count),
            message,
        }
    }
}

fn run_point(
    spec: &SweepSpec,
    base: &Value,
    base_dir: &Path,
    out_dir: &Path,
    i: usize,
) -> SummaryRow {
    let name = format!("run-{i:04}");
    let point = spec.point(i);
    let mut cfg_json = base.clone();
    for (a, v) in spec.axes.iter().zip(&point) {
        if let Err(e) = set_path(&mut cfg_json, &a.path, v.clone()) {
            return SummaryRow::failed(name, point, EXIT_CONFIG, "config-error", e.to_string());
        }
    }
    let cfg = match RunConfig::from_json(&cfg_json.to_string(), Some(base_dir)) {
        Ok(c) => c,
        Err(e) => {
            return SummaryRow::failed(name, point, EXIT_CONFIG, "config-error", e.to_string())
        }
    };
    let start = Instant::now();
    let out = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let status = match e {
                Error::Infeasible { .. } | Error::RateTooSmall { .. } => "infeasible",
                _ => "config-error",
            };
            // keep the config next to the failure for inspection
            let dir = out_dir.join(&name);
            let _ = fs::create_dir_all(&dir)
                .and_then(|_| fs::write(dir.join(artifacts::CONFIG_FILE), cfg.pretty_json()));
            return SummaryRow::failed(name, point, exit_code(&e), status, e.to_string());
        }
    };
    let wall = start.elapsed().as_secs_f64();
    match artifacts::write_run(&out_dir.join(&name), &cfg, &out, wall) {
        Ok(_) => SummaryRow::from_outcome(name, point, &out),
        Err(e) => SummaryRow::failed(name, point, EXIT_CONFIG, "io-error", format!("{e:#}")),
    }
}

/// Run every point of the sweep with at most `jobs` runs in flight. Rows come
/// back in point order regardless of scheduling.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &Value,
    base_dir: &Path,
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    Ok(pool.install(|| {
        (0..spec.len())
            .into_par_iter()
            .map(|i| run_point(spec, base, base_dir, out_dir, i))
            .collect()
    }))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub fn write_summary(path: &Path, spec: &SweepSpec, rows: &[SummaryRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["run".to_string()];
    header.extend(spec.axes.iter().map(|a| a.path.clone()));
    header.extend(
        [
            "status",
            "exit_code",
            "claim",
            "fitted_rate",
            "certified_rate",
            "verdict",
            "conditions_met",
            "mu",
            "modes",
            "message",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.run.clone()];
        rec.extend(r.point.iter().map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }));
        rec.extend([
            r.status.clone(),
            r.exit_code.to_string(),
            opt(r.claim.as_ref()),
            num(r.fitted_rate),
            num(r.certified_rate),
            r.verdict
                .map(|p| if p { "pass" } else { "fail" }.to_string())
                .unwrap_or_default(),
            opt(r.conditions_met),
            num(r.mu),
            opt(r.modes),
            r.message.clone(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
