use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use burgers_stab::config::RunOutcome;
use burgers_stab::{RunConfig, VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{EXIT_DIVERGED, EXIT_OK};

pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const FINAL_STATE_FILE: &str = "final_state.csv";
pub const LEDGER_TEXT_FILE: &str = "ledger.txt";
pub const LEDGER_JSON_FILE: &str = "ledger.json";
pub const PLAN_FILE: &str = "plan.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub schema: u32,
    /// SHA-256 of the canonical config JSON.
    pub config_sha256: String,
    pub seed: u64,
    pub system: String,
    pub status: String,
    pub exit_code: u8,
    pub steps_taken: usize,
    pub rows: usize,
    pub wall_time_s: f64,
    pub divergence: Option<String>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

pub fn fingerprint(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.canonical_json().as_bytes()).iter().fold(
        String::with_capacity(64),
        |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        },
    )
}

/// One row per node: `x`, master `v`, follower `v` (empty without follower).
pub fn final_state_csv(out: &RunOutcome) -> String {
    let sim = &out.simulation;
    let v = sim.master.v();
    let f = sim.follower.as_ref().map(|s| s.v());
    let grid = v.grid();
    let mut s = String::from("x,v,v_follower\n");
    for (i, x) in v.values().iter().enumerate() {
        let _ = write!(s, "{:.16e},{:.16e},", grid.node(i), x);
        if let Some(f) = f {
            let _ = write!(s, "{:.16e}", f.values()[i]);
        }
        s.push('\n');
    }
    s
}

pub fn status(out: &RunOutcome) -> (&'static str, u8) {
    if out.simulation.divergence.is_some() {
        ("diverged", EXIT_DIVERGED)
    } else {
        ("completed", EXIT_OK)
    }
}

/// Write every artifact of a finished run into `dir` (created if missing).
pub fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    out: &RunOutcome,
    wall_time_s: f64,
) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        fs::write(dir.join(name), body)
            .with_context(|| format!("writing {}", dir.join(name).display()))?;
        files.push(name.to_string());
        Ok(())
    };
    put(CONFIG_FILE, &cfg.pretty_json())?;
    put(TRACE_FILE, &out.simulation.trace.to_csv_string())?;
    put(FINAL_STATE_FILE, &final_state_csv(out))?;
    if let Some(l) = &out.certification.ledger {
        put(LEDGER_TEXT_FILE, &l.report())?;
        put(LEDGER_JSON_FILE, &l.to_json())?;
    }
    if let Some(p) = &out.certification.plan {
        put(PLAN_FILE, &serde_json::to_string_pretty(p)?)?;
    }
    if let Some(a) = &out.analysis {
        put(ANALYSIS_FILE, &serde_json::to_string_pretty(a)?)?;
    }
    let (status, code) = status(out);
    let manifest = Manifest {
        tool: "burgers-stab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: VERSION.into(),
        schema: cfg.schema,
        config_sha256: fingerprint(cfg),
        seed: cfg.seed,
        system: cfg.system.name().into(),
        status: status.into(),
        exit_code: code,
        steps_taken: out.simulation.steps_taken,
        rows: out.simulation.trace.len(),
        wall_time_s,
        divergence: out.simulation.divergence.as_ref().map(|e| e.to_string()),
        warnings: out.simulation.warnings.clone(),
        files,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Re-read a run directory's config, validate it and check it against the
/// manifest fingerprint and file list.
pub fn verify_run_dir(dir: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(
        &fs::read_to_string(dir.join(MANIFEST_FILE))
            .with_context(|| format!("reading manifest in {}", dir.display()))?,
    )?;
    let cfg = RunConfig::from_json(&fs::read_to_string(dir.join(CONFIG_FILE))?, None)?;
    let fp = fingerprint(&cfg);
    if fp != m.config_sha256 {
        bail!(
            "config fingerprint {fp} does not match manifest {}",
            m.config_sha256
        );
    }
    for f in &m.files {
        if !dir.join(f).is_file() {
            bail!("manifest lists missing file {f}");
        }
    }
    Ok(m)
}
