//! Versioned JSON run configuration and the orchestration that turns it into
//! a simulation, a ledger and a rate verdict.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, compare_rate, compare_to_certificate, default_burn_in, fit_decay_rate, Quantity, RateFit,
    Verdict,
};
use crate::basis::{GridField, GridSpec, ModalBasis};
use crate::certificates::{
    bnn_ledger, obe_ledger, plan_gains_bnn, plan_gains_obe, BnnFamily, BnnInputs,
    CertificateLedger, Claim, InequalityConstants, ObeTarget, Plan,
};
use crate::controllers::{ControllerFamily, ControllerSpec};
use crate::dynamics::{
    simulate, InitialData, PhysicalParams, Scenario, Scheme, Simulation, SourceTerm, StepperConfig,
    System, SystemKind,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Modes used by the `random` preset.
pub const RANDOM_PRESET_MODES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Zero,
    /// `amplitude * w_1`
    Mode1,
    /// `amplitude * x (1 - x)`
    Bump,
    /// Seeded sine polynomial over the first ten modes, scaled to L² norm
    /// `amplitude`.
    Random,
}

/// Initial field: a preset or a file of sampled interior values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// One value per interior node; a second column, if present, is used
    /// (so `x,v` files written by `run` can be read back).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Scalar channel (obe only).
    #[serde(default)]
    pub u0: f64,
}

fn one() -> f64 {
    1.0
}

impl InitialSpec {
    pub fn preset(preset: Preset, amplitude: f64) -> Self {
        InitialSpec {
            preset: Some(preset),
            amplitude,
            file: None,
            u0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerSpec {
    /// Added to the master's initial field.
    pub perturbation: InitialSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    /// Defaults to `min(1e-3, spacing / 4)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,
    #[serde(default = "yes")]
    pub check_cfl: bool,
    #[serde(default)]
    pub linearize: bool,
}

fn yes() -> bool {
    true
}

impl Default for StepperSection {
    fn default() -> Self {
        StepperSection {
            dt: None,
            scheme: Scheme::default(),
            cfl_safety: None,
            check_cfl: true,
            linearize: false,
        }
    }
}

impl StepperSection {
    pub fn resolve(&self, grid: GridSpec) -> StepperConfig {
        let mut s = StepperConfig::new(self.dt.unwrap_or_else(|| StepperConfig::default_dt(grid)));
        s.scheme = self.scheme;
        if let Some(c) = self.cfl_safety {
            s.cfl_safety = c;
        }
        s.check_cfl = self.check_cfl;
        s.linearize = self.linearize;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControllerChoice {
    /// Ask the planner for `(mu, N)`.
    Auto(AutoKeyword),
    Spec(ControllerSpec),
}

impl Default for ControllerChoice {
    fn default() -> Self {
        ControllerChoice::Spec(ControllerSpec::none())
    }
}

/// Planner inputs used by `"controller": "auto"` and by the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default)]
    pub h0: f64,
    #[serde(default)]
    pub h0_sup: f64,
    /// Obe target; defaults to l2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ObeTarget>,
    /// Bnn modal family; defaults to modal-l2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<BnnFamily>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<Claim>,
    /// Defaults to the absorbing-ball entry time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_floor() -> f64 {
    analysis::DEFAULT_FLOOR
}

fn default_tolerance() -> f64 {
    analysis::DEFAULT_TOLERANCE
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            claim: None,
            burn_in: None,
            floor: default_floor(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub system: System,
    pub physical: PhysicalParams,
    #[serde(default)]
    pub source: SourceTerm,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follower: Option<FollowerSpec>,
    pub grid: GridSpec,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub controller: ControllerChoice,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub constants: InequalityConstants,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub horizon: f64,
    #[serde(default = "one_usize")]
    pub sample_stride: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one_usize() -> usize {
    1
}

impl RunConfig {
    /// Parse and validate. `base` resolves relative initial-data paths.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<RunConfig> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        match raw.get("schema").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "unsupported schema {v} (this build reads schema {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Config("missing integer field `schema`".into())),
        }
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(f) = p {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        };
        fix(&mut self.initial.file);
        if let Some(f) = &mut self.follower {
            fix(&mut f.perturbation.file);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema {}", self.schema)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if self.sample_stride == 0 {
            return Err(Error::param("sample_stride", "must be at least 1"));
        }
        self.constants.validate()?;
        check_initial(&self.initial, "initial")?;
        if let Some(f) = &self.follower {
            check_initial(&f.perturbation, "follower.perturbation")?;
        }
        if self.system.is_controlled() && self.follower.is_none() {
            return Err(Error::param(
                "follower",
                "controlled systems need a follower perturbation",
            ));
        }
        if let ControllerChoice::Auto(_) = self.controller {
            if !self.system.is_controlled() {
                return Err(Error::param(
                    "controller",
                    "\"auto\" needs a controlled system",
                ));
            }
            if self.system.kind() == SystemKind::Bnn && self.planner.xi.is_none() {
                return Err(Error::param(
                    "planner.xi",
                    "\"auto\" on a bnn system needs the prescribed rate xi",
                ));
            }
        }
        let a = &self.analysis;
        if !(a.tolerance >= 0.0 && a.tolerance < 1.0) {
            return Err(Error::param("analysis.tolerance", "must lie in [0, 1)"));
        }
        if !(a.floor >= 0.0) {
            return Err(Error::param("analysis.floor", "must be non-negative"));
        }
        if let Some(c) = a.claim {
            if c.is_obe() != (self.system.kind() == SystemKind::Obe) {
                return Err(Error::param(
                    "analysis.claim",
                    format!("claim {c} does not belong to system {}", self.system.name()),
                ));
            }
        }
        Ok(())
    }

    /// Compact JSON with fields in declaration order; the fingerprint input.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Claim analysed by default for this system.
    pub fn claim(&self) -> Claim {
        if let Some(c) = self.analysis.claim {
            return c;
        }
        match self.system {
            System::Obe | System::ObeControlled => match self.planner.target {
                Some(ObeTarget::H1) => Claim::ObeH1,
                _ => Claim::ObeL2,
            },
            System::Bnn | System::BnnControlledModal => match self.planner.family {
                Some(BnnFamily::ModalH1) => Claim::BnnH1Modal,
                _ => Claim::BnnL2Modal,
            },
            System::BnnControlledVolume => Claim::BnnL2Volume,
        }
    }

    pub fn bnn_inputs(&self) -> Option<BnnInputs> {
        self.planner.xi.map(|xi| BnnInputs {
            xi,
            h0: self.planner.h0,
            h0_sup: self.planner.h0_sup,
        })
    }
}

fn check_initial(s: &InitialSpec, field: &'static str) -> Result<()> {
    match (&s.preset, &s.file) {
        (Some(_), Some(_)) => Err(Error::param(
            field,
            "give either `preset` or `file`, not both",
        )),
        (None, None) => Err(Error::param(field, "needs `preset` or `file`")),
        _ if !s.amplitude.is_finite() => Err(Error::param(field, "amplitude must be finite")),
        _ => Ok(()),
    }
}

/// Sample a preset on the grid. `rng` feeds the `random` preset.
pub fn sample_preset(
    preset: Preset,
    amplitude: f64,
    grid: GridSpec,
    rng: &mut ChaCha8Rng,
) -> Result<GridField> {
    Ok(match preset {
        Preset::Zero => GridField::zeros(grid),
        Preset::Mode1 => crate::basis::eigenpair(1, grid)?.function.scaled(amplitude),
        Preset::Bump => GridField::from_fn(grid, |x| amplitude * x * (1.0 - x)),
        Preset::Random => {
            let modes = RANDOM_PRESET_MODES.min(grid.max_mode());
            let c: Vec<f64> = (0..modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if norm > 0.0 { amplitude / norm } else { 0.0 };
            let c: Vec<f64> = c.into_iter().map(|x| x * scale).collect();
            ModalBasis::new(grid, modes)?.reconstruct(&c)?
        }
    })
}

/// Read sampled interior values: one number per line, or `x,v` pairs. A
/// non-numeric first line is treated as a header.
pub fn read_field_file(path: &Path, grid: GridSpec) -> Result<GridField> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cell = line.split(',').next_back().unwrap_or("").trim();
        match cell.parse::<f64>() {
            Ok(v) => vals.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Config(format!(
                    "{}:{}: bad number `{cell}`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if vals.len() != grid.points() {
        return Err(Error::Config(format!(
            "{}: {} values but the grid has {} interior points",
            path.display(),
            vals.len(),
            grid.points()
        )));
    }
    GridField::from_values(grid, vals)
}

fn sample_initial(s: &InitialSpec, grid: GridSpec, rng: &mut ChaCha8Rng) -> Result<GridField> {
    match (&s.preset, &s.file) {
        (Some(p), _) => sample_preset(*p, s.amplitude, grid, rng),
        (None, Some(f)) => Ok(read_field_file(f, grid)?.scaled(s.amplitude)),
        _ => Err(Error::param("initial", "needs `preset` or `file`")),
    }
}

/// Resolved controller, planner output and ledger for a configuration.
#[derive(Debug, Clone)]
pub struct Certification {
    pub controller: ControllerSpec,
    pub plan: Option<Plan>,
    pub ledger: Option<CertificateLedger>,
}

/// Run the planner if asked, then evaluate the ledger at the resolved gain.
/// A bnn ledger needs `planner.xi`; without it no ledger is produced.
pub fn certify(cfg: &RunConfig) -> Result<Certification> {
    let plan = match cfg.controller {
        ControllerChoice::Auto(_) => Some(match cfg.system {
            System::ObeControlled => plan_gains_obe(
                &cfg.physical,
                &cfg.constants,
                cfg.planner.target.unwrap_or(ObeTarget::L2),
            )?,
            System::BnnControlledModal | System::BnnControlledVolume => {
                let family = if cfg.system == System::BnnControlledVolume {
                    BnnFamily::VolumeL2
                } else {
                    match cfg.planner.family.unwrap_or(BnnFamily::ModalL2) {
                        BnnFamily::VolumeL2 => {
                            return Err(Error::param(
                                "planner.family",
                                "volume family needs the bnn-controlled-volume system",
                            ))
                        }
                        f => f,
                    }
                };
                let inp = cfg
                    .bnn_inputs()
                    .ok_or_else(|| Error::param("planner.xi", "required for bnn planning"))?;
                plan_gains_bnn(&cfg.physical, &cfg.constants, &inp, family, None)?
            }
            _ => {
                return Err(Error::param(
                    "controller",
                    "\"auto\" needs a controlled system",
                ))
            }
        }),
        ControllerChoice::Spec(_) => None,
    };
    let controller = match (&plan, cfg.controller) {
        (Some(p), _) => ControllerSpec {
            family: cfg.system.controller_family(),
            mu: p.mu,
            count: p.modes,
        },
        (None, ControllerChoice::Spec(s)) => s.validated()?,
        (None, ControllerChoice::Auto(_)) => unreachable!("auto always plans"),
    };
    let (mu, n) = if controller.family == ControllerFamily::None {
        (0.0, 1)
    } else {
        (controller.mu, controller.count.max(1))
    };
    let ledger = match &plan {
        Some(p) => Some(p.ledger.clone()),
        None => match cfg.system.kind() {
            SystemKind::Obe => obe_ledger(&cfg.physical, &cfg.constants, mu, n).ok(),
            SystemKind::Bnn => cfg
                .bnn_inputs()
                .and_then(|inp| bnn_ledger(&cfg.physical, &cfg.constants, &inp, mu, n).ok()),
        },
    };
    Ok(Certification {
        controller,
        plan,
        ledger,
    })
}

/// Build the simulation input. Master and follower presets draw from one
/// generator seeded with `cfg.seed`, master first.
pub fn scenario(cfg: &RunConfig, controller: ControllerSpec) -> Result<Scenario> {
    let grid = cfg.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v0 = sample_initial(&cfg.initial, grid, &mut rng)?;
    let follower = match &cfg.follower {
        Some(f) => {
            let dv = sample_initial(&f.perturbation, grid, &mut rng)?;
            Some(InitialData {
                v: v0.add_scaled(1.0, &dv)?,
                u: cfg.initial.u0 + f.perturbation.u0,
            })
        }
        None => None,
    };
    Ok(Scenario {
        system: cfg.system,
        params: cfg.physical,
        source: cfg.source.clone(),
        stepper: cfg.stepper.resolve(grid),
        controller,
        master: InitialData {
            v: v0,
            u: cfg.initial.u0,
        },
        follower,
        horizon: cfg.horizon,
        sample_stride: cfg.sample_stride,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOutcome {
    pub claim: Claim,
    pub burn_in: f64,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    /// Rate-only comparison against the claim's certified rate.
    pub rate_verdict: Option<Verdict>,
    /// Full comparison; `None` with `certificate_error` set when the theorem's
    /// conditions do not hold.
    pub certificate_verdict: Option<Verdict>,
    pub certificate_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub certification: Certification,
    pub simulation: Simulation,
    pub analysis: Option<AnalysisOutcome>,
}

/// Fit the claim's quantity and compare with the ledger. Needs follower data.
pub fn analyse(
    cfg: &RunConfig,
    sim: &Simulation,
    ledger: Option<&CertificateLedger>,
) -> Option<AnalysisOutcome> {
    let claim = cfg.claim();
    let trace = &sim.trace;
    let quantity = Quantity::for_claim(claim);
    quantity.evaluate(trace).ok()?;
    let burn_in = cfg
        .analysis
        .burn_in
        .unwrap_or_else(|| ledger.map_or(0.0, |l| default_burn_in(trace, l, claim)));
    let fit = fit_decay_rate(trace, quantity, burn_in, cfg.analysis.floor);
    let certified = ledger.and_then(|l| l.certified_rate(claim));
    let mut out = AnalysisOutcome {
        claim,
        burn_in,
        fit: None,
        fit_error: None,
        rate_verdict: None,
        certificate_verdict: None,
        certificate_error: None,
    };
    match fit {
        Ok(f) => {
            out.fit = Some(f);
            if let Some(c) = certified {
                let mut v = compare_rate(f.rate, c, cfg.analysis.tolerance);
                v.claim = Some(claim);
                v.conditions_met = ledger.is_some_and(|l| l.conditions_met(claim));
                out.rate_verdict = Some(v);
            }
            match ledger.map(|l| compare_to_certificate(&f, l, claim, cfg.analysis.tolerance)) {
                Some(Ok(v)) => out.certificate_verdict = Some(v),
                Some(Err(e)) => out.certificate_error = Some(e.to_string()),
                None => out.certificate_error = Some("no ledger for this configuration".into()),
            }
        }
        Err(e) => out.fit_error = Some(e.to_string()),
    }
    Some(out)
}

/// Plan (if asked), simulate and analyse one configuration. Divergence is
/// reported in `simulation.divergence`, not as an error.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let certification = certify(cfg)?;
    let sc = scenario(cfg, certification.controller)?;
    let simulation = simulate(&sc)?;
    let analysis = analyse(cfg, &simulation, certification.ledger.as_ref());
    Ok(RunOutcome {
        certification,
        simulation,
        analysis,
    })
}
