//! Closed-form certificate constants and the gain planners built on them.
//!
//! Every bound that the stability proofs only assert to exist is evaluated here
//! as twice the steady-state quotient of its Grönwall inequality. Each constant
//! is stored in the ledger together with the formula that produced it.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::dynamics::PhysicalParams;
use crate::error::{Error, Result};

/// First Dirichlet eigenvalue `π²`.
pub const LAMBDA1: f64 = PI * PI;

/// Margin factor applied at each fixed-point iterate.
pub const PLANNER_MARGIN: f64 = 1.05;
pub const PLANNER_MAX_ITER: usize = 200;
pub const PLANNER_RTOL: f64 = 1e-10;
/// Gains beyond this are reported as divergence of the fixed point.
pub const PLANNER_MU_CAP: f64 = 1e12;

fn lambda(k: usize) -> f64 {
    let a = k as f64 * PI;
    a * a
}

/// Interpolation constants: `‖u‖_{L⁴} ≤ β₄‖u‖^{3/4}‖∂ₓu‖^{1/4}`,
/// `‖∂ₓv‖_{L³} ≤ β₃‖v‖^{5/12}‖∂ₓ²v‖^{7/12}` and `‖u‖²_∞ ≤ c₀‖∂ₓu‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityConstants {
    #[serde(default = "default_beta4")]
    pub beta4: f64,
    #[serde(default = "default_beta3")]
    pub beta3: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn default_beta4() -> f64 {
    2f64.powf(0.25)
}

// ‖f‖²_∞ ≤ 2‖f‖‖f'‖ for f = ∂ₓv (which has a zero), then ‖f‖² ≤ ‖v‖‖∂ₓ²v‖.
fn default_beta3() -> f64 {
    2f64.powf(1.0 / 6.0)
}

fn default_c0() -> f64 {
    0.25
}

impl Default for InequalityConstants {
    fn default() -> Self {
        InequalityConstants {
            beta4: default_beta4(),
            beta3: default_beta3(),
            c0: default_c0(),
        }
    }
}

impl InequalityConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta4", self.beta4),
            ("beta3", self.beta3),
            ("c0", self.c0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: match name {
                        "beta4" => "constants.beta4",
                        "beta3" => "constants.beta3",
                        _ => "constants.c0",
                    },
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// `β₃²⁴ 7⁷ 2⁻⁹`, the coefficient left after Young's inequality on the
    /// cubic derivative term.
    pub fn young_coefficient(&self) -> f64 {
        self.beta3.powi(24) * 7f64.powi(7) / 2f64.powi(9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    ObeL2,
    ObeH1,
    BnnL2Modal,
    BnnH1Modal,
    BnnL2Volume,
}

impl Claim {
    pub const ALL: [Claim; 5] = [
        Claim::ObeL2,
        Claim::ObeH1,
        Claim::BnnL2Modal,
        Claim::BnnH1Modal,
        Claim::BnnL2Volume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Claim::ObeL2 => "obe-l2",
            Claim::ObeH1 => "obe-h1",
            Claim::BnnL2Modal => "bnn-l2-modal",
            Claim::BnnH1Modal => "bnn-h1-modal",
            Claim::BnnL2Volume => "bnn-l2-volume",
        }
    }

    pub fn parse(s: &str) -> Option<Claim> {
        Claim::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn is_obe(self) -> bool {
        matches!(self, Claim::ObeL2 | Claim::ObeH1)
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerSystem {
    Obe,
    Bnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub name: String,
    pub value: f64,
    pub formula: String,
}

/// One sufficient condition, stored as `margin = lhs - rhs` so that it holds
/// iff `margin > 0` (strict) or `margin >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub claim: Claim,
    pub statement: String,
    pub margin: f64,
    pub strict: bool,
    pub satisfied: bool,
}

impl Condition {
    fn new(claim: Claim, name: &str, statement: &str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let margin = lhs - rhs;
        Condition {
            name: format!("{}.{}", claim.name(), name),
            claim,
            statement: statement.to_string(),
            margin,
            strict,
            satisfied: holds(margin, strict),
        }
    }
}

fn holds(margin: f64, strict: bool) -> bool {
    if strict {
        margin > 0.0
    } else {
        margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateLedger {
    pub system: LedgerSystem,
    pub mu: f64,
    pub modes: usize,
    pub inputs: Vec<Constant>,
    pub constants: Vec<Constant>,
    pub conditions: Vec<Condition>,
    pub corrections: Vec<String>,
}

impl CertificateLedger {
    fn new(system: LedgerSystem, mu: f64, modes: usize) -> Self {
        CertificateLedger {
            system,
            mu,
            modes,
            inputs: Vec::new(),
            constants: Vec::new(),
            conditions: Vec::new(),
            corrections: Vec::new(),
        }
    }

    fn input(&mut self, name: &str, value: f64) {
        self.inputs.push(Constant {
            name: name.into(),
            value,
            formula: String::new(),
        });
    }

    fn put(&mut self, name: &str, value: f64, formula: &str) -> f64 {
        self.constants.push(Constant {
            name: name.into(),
            value,
            formula: formula.into(),
        });
        value
    }

    /// Value of the named constant (or input).
    pub fn get(&self, name: &str) -> Option<f64> {
        self.constants
            .iter()
            .chain(&self.inputs)
            .find(|c| c.name == name)
            .map(|c| c.value)
    }

    fn must(&self, name: &str) -> f64 {
        self.get(name).unwrap_or(f64::NAN)
    }

    pub fn conditions_for(&self, claim: Claim) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(move |c| c.claim == claim)
    }

    pub fn covers(&self, claim: Claim) -> bool {
        self.conditions_for(claim).next().is_some()
    }

    /// Whether every condition of the claim holds. `false` if the ledger does
    /// not cover the claim.
    pub fn conditions_met(&self, claim: Claim) -> bool {
        self.covers(claim) && self.conditions_for(claim).all(|c| c.satisfied)
    }

    pub fn failed_conditions(&self, claim: Claim) -> Vec<String> {
        self.conditions_for(claim)
            .filter(|c| !c.satisfied)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Certified exponential rate of the squared error norm for the claim.
    pub fn certified_rate(&self, claim: Claim) -> Option<f64> {
        let name = match claim {
            Claim::ObeL2 => "d2",
            Claim::ObeH1 => "alpha0",
            Claim::BnnL2Modal | Claim::BnnH1Modal => "xi",
            Claim::BnnL2Volume => "volume_rate",
        };
        self.get(name)
    }

    /// Every stored flag agrees with its stored margin.
    pub fn is_consistent(&self) -> bool {
        self.conditions
            .iter()
            .all(|c| c.satisfied == holds(c.margin, c.strict))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let sys = match self.system {
            LedgerSystem::Obe => "obe",
            LedgerSystem::Bnn => "bnn",
        };
        let _ = writeln!(s, "certificate ledger ({sys})");
        let _ = writeln!(s, "  mu = {:.10e}", self.mu);
        let _ = writeln!(s, "  N  = {}", self.modes);
        let _ = writeln!(s, "inputs");
        for c in &self.inputs {
            let _ = writeln!(s, "  {:<12} {:>24.16e}", c.name, c.value);
        }
        let _ = writeln!(s, "constants");
        for c in &self.constants {
            let _ = writeln!(s, "  {:<12} {:>24.16e}   {}", c.name, c.value, c.formula);
        }
        let _ = writeln!(s, "conditions");
        for c in &self.conditions {
            let _ = writeln!(
                s,
                "  [{}] {:<34} margin {:>24.16e}   {}",
                if c.satisfied { "ok" } else { "FAIL" },
                c.name,
                c.margin,
                c.statement
            );
        }
        if !self.corrections.is_empty() {
            let _ = writeln!(s, "corrections applied");
            for c in &self.corrections {
                let _ = writeln!(s, "  - {c}");
            }
        }
        s
    }
}

impl fmt::Display for CertificateLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.report())
    }
}

fn check_nu_r(params: &PhysicalParams) -> Result<()> {
    if !(params.nu > 0.0 && params.nu.is_finite()) {
        return Err(Error::param(
            "physical.nu",
            format!("viscosity must be positive, got {}", params.nu),
        ));
    }
    if !(params.r >= 0.0 && params.r.is_finite()) {
        return Err(Error::param(
            "physical.R",
            format!("must be non-negative, got {}", params.r),
        ));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0) || mu.is_nan() {
        return Err(Error::param("mu", format!("gain must be >= 0, got {mu}")));
    }
    Ok(())
}

/// Evaluate every OBE constant at gain `mu` and `n` controlled modes.
pub fn obe_ledger(
    params: &PhysicalParams,
    k: &InequalityConstants,
    mu: f64,
    n: usize,
) -> Result<CertificateLedger> {
    check_nu_r(params)?;
    k.validate()?;
    check_mu(mu)?;
    let (nu, r) = (params.nu, params.r);
    let c = k.young_coefficient();
    let lam_n1 = lambda(n + 1);
    let third = nu.powf(-1.0 / 3.0);

    let mut l = CertificateLedger::new(LedgerSystem::Obe, mu, n);
    l.input("nu", nu);
    l.input("R", r);
    l.input("beta4", k.beta4);
    l.input("beta3", k.beta3);
    l.input("c0", k.c0);

    let d0 = l.put("d0", nu * 1f64.min(2.0 * LAMBDA1), "ν min(1, 2λ1)");
    let d1 = l.put("d1", nu * 1f64.min(2.0 * LAMBDA1), "ν min(1, 2λ1)");
    l.put("d2", nu * 1f64.min(LAMBDA1), "ν min(1, λ1)");
    l.put(
        "alpha0",
        0.5 * nu * 1f64.min(0.5 * LAMBDA1),
        "(ν/2) min(1, λ1/2)",
    );
    l.put("C", c, "β3^24 7^7 2^-9");
    let m1 = l.put("M1", 2.0 * r * r / (nu * d0), "2R²/(ν d0)");
    let m2 = l.put(
        "M2",
        2.0 * (m1 * m1 / nu + c * nu.powi(-7) * m1.powi(5)) / (LAMBDA1 * nu),
        "2[M1²/ν + C ν^-7 M1^5]/(λ1 ν)",
    );
    let m3 = l.put(
        "M3",
        2.0 * r * r / (nu * d1) + mu * m1 / d1,
        "2R²/(ν d1) + μ M1/d1",
    );
    let m4 = l.put(
        "M4",
        2.0 * (m1 * m3 / nu + c * nu.powi(-7) * m3.powi(5) + 0.5 * mu * m2) / (LAMBDA1 * nu),
        "2[M1 M3/ν + C ν^-7 M3^5 + (μ/2) M2]/(λ1 ν)",
    );
    let m5 = l.put(
        "M5",
        m3.sqrt()
            + m3 * m3 / (2.0 * nu)
            + 0.75
                * third
                * k.beta4.powf(8.0 / 3.0)
                * (m4.sqrt() + 2.0 * m2.sqrt()).powf(4.0 / 3.0),
        "√M3 + M3²/(2ν) + ¾ ν^-1/3 β4^8/3 (√M4 + 2√M2)^4/3",
    );
    let c0sq = k.c0 * k.c0;
    let q0 = l.put(
        "Q0",
        4.0 * c0sq / nu * m4 + (4.0 * c0sq / nu + 1.0 / (2.0 * nu)) * m2 + m3.sqrt(),
        "(4c0²/ν) M4 + (4c0²/ν + 1/(2ν)) M2 + √M3",
    );
    l.put("lambda_N1", lam_n1, "((N+1)π)²");

    l.conditions.push(Condition::new(
        Claim::ObeL2,
        "gain",
        "μ ≥ M5",
        mu,
        m5,
        false,
    ));
    l.conditions.push(Condition::new(
        Claim::ObeL2,
        "modes",
        "M5/λ_{N+1} ≤ ν/4",
        nu / 4.0,
        m5 / lam_n1,
        false,
    ));
    l.conditions.push(Condition::new(
        Claim::ObeH1,
        "gain",
        "μ ≥ Q0",
        mu,
        q0,
        false,
    ));
    l.conditions.push(Condition::new(
        Claim::ObeH1,
        "modes",
        "Q0/λ_{N+1} ≤ ν/4",
        nu / 4.0,
        q0 / lam_n1,
        false,
    ));

    l.corrections
        .push("Q0: leading coefficient taken as 4c0²/ν (typo 4νc0²/ν)".into());
    l.corrections
        .push("H1 error estimate: repeated ‖∂ₓṽ‖² read as ‖∂ₓṽ‖² + ‖∂ₓv‖²".into());
    l.corrections.push(
        "H1 synchronization: decay exponent read as α0(t - T5), so the certified rate is α0".into(),
    );
    Ok(l)
}

/// Source and rate inputs for the BNN certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnnInputs {
    /// Prescribed synchronization rate ξ.
    pub xi: f64,
    /// `∫₀^∞ ‖h‖² dt`.
    #[serde(default)]
    pub h0: f64,
    /// `sup_t ‖h(t)‖²`.
    #[serde(default)]
    pub h0_sup: f64,
}

/// `A0 = ¾ν^{-1/3}[(2β4)^{4/3} H4^{2/3} + β4^{4/3} H2^{2/3}]`.
pub fn bnn_a0(k: &InequalityConstants, nu: f64, h2: f64, h4: f64) -> f64 {
    let t = 0.75 * nu.powf(-1.0 / 3.0);
    t * (2.0 * k.beta4).powf(4.0 / 3.0) * h4.powf(2.0 / 3.0)
        + t * k.beta4.powf(4.0 / 3.0) * h2.powf(2.0 / 3.0)
}

/// `A1 = R + ¾β4^{4/3}ν^{-1/3}H2^{2/3}`.
pub fn bnn_a1(k: &InequalityConstants, nu: f64, r: f64, h2: f64) -> f64 {
    r + 0.75 * k.beta4.powf(4.0 / 3.0) * nu.powf(-1.0 / 3.0) * h2.powf(2.0 / 3.0)
}

/// `Q1 = (4c0²/ν)(H4 + H3) + R + k λ1^{-1/2}(H1 + H3)√H2`.
#[allow(clippy::too_many_arguments)]
pub fn bnn_q1(
    k: &InequalityConstants,
    nu: f64,
    r: f64,
    kappa: f64,
    h1: f64,
    h2: f64,
    h3: f64,
    h4: f64,
) -> f64 {
    4.0 * k.c0 * k.c0 / nu * (h4 + h3) + r + kappa / LAMBDA1.sqrt() * (h1 + h3) * h2.sqrt()
}

fn check_bnn_inputs(params: &PhysicalParams, inp: &BnnInputs) -> Result<()> {
    check_nu_r(params)?;
    if !(params.k > 0.0 && params.k.is_finite()) {
        return Err(Error::param(
            "physical.k",
            format!("must be positive, got {}", params.k),
        ));
    }
    if !(inp.h0 >= 0.0 && inp.h0_sup >= 0.0) {
        return Err(Error::param("h0", "source energies must be non-negative"));
    }
    let min = LAMBDA1 * params.nu / 2.0;
    if !(inp.xi > min) {
        return Err(Error::RateTooSmall { xi: inp.xi, min });
    }
    Ok(())
}

/// Evaluate every BNN constant at gain `mu` and count `n` (modes for the
/// modal claims, intervals for the volume claim).
pub fn bnn_ledger(
    params: &PhysicalParams,
    k: &InequalityConstants,
    inp: &BnnInputs,
    mu: f64,
    n: usize,
) -> Result<CertificateLedger> {
    check_bnn_inputs(params, inp)?;
    k.validate()?;
    check_mu(mu)?;
    let (nu, r, kappa) = (params.nu, params.r, params.k);
    let (h0, h0s) = (inp.h0, inp.h0_sup);
    let c = k.young_coefficient();
    let lam_n1 = lambda(n + 1);

    let mut l = CertificateLedger::new(LedgerSystem::Bnn, mu, n);
    l.input("nu", nu);
    l.input("R", r);
    l.input("k", kappa);
    l.input("xi", inp.xi);
    l.input("H0", h0);
    l.input("H0_sup", h0s);
    l.input("beta4", k.beta4);
    l.input("beta3", k.beta3);
    l.input("c0", k.c0);

    let sigma = l.put("sigma", inp.xi - LAMBDA1 * nu / 2.0, "ξ - λ1ν/2");
    let a0r = l.put("a0", 0.5 * nu * LAMBDA1, "νλ1/2");
    l.put("volume_rate", sigma + a0r, "σ + a0");
    l.put("C", c, "β3^24 7^7 2^-9");
    let h1 = l.put(
        "H1",
        (2.0 * (r * r / (2.0 * LAMBDA1 * nu * kappa) + h0 / (LAMBDA1 * nu))).sqrt(),
        "√(2[R²/(2λ1νk) + H0/(λ1ν)])",
    );
    let h2 = l.put(
        "H2",
        2.0 * (4.0 * h0s / nu + 4.0 * r * r * h1 * h1 / nu + c * nu.powi(-7) * h1.powi(10))
            / (nu * LAMBDA1),
        "2[4H0_sup/ν + 4R²H1²/ν + C ν^-7 H1^10]/(νλ1)",
    );
    let h3 = l.put(
        "H3",
        (2.0 * (0.25 * mu * h1 * h1 + 0.25 * h0s + (1.0 + r * r) / (2.0 * kappa)) / (nu * LAMBDA1))
            .sqrt(),
        "√(2[(μ/4)H1² + H0_sup/4 + (1+R²)/(2k)]/(νλ1))",
    );
    let h4 = l.put(
        "H4",
        4.0 * (0.5 * c * nu.powi(-7) * h3.powi(10)
            + 4.0 * r * r * h3 * h3
            + 4.0 * h0s
            + 0.25 * mu * h2)
            / (nu * LAMBDA1),
        "4[(C/2) ν^-7 H3^10 + 4R²H3² + 4H0_sup + (μ/4)H2]/(νλ1)",
    );
    let a0 = l.put(
        "A0",
        bnn_a0(k, nu, h2, h4),
        "¾ν^-1/3 [(2β4)^4/3 H4^2/3 + β4^4/3 H2^2/3]",
    );
    let a1 = l.put("A1", bnn_a1(k, nu, r, h2), "R + ¾β4^4/3 ν^-1/3 H2^2/3");
    let q1 = l.put(
        "Q1",
        bnn_q1(k, nu, r, kappa, h1, h2, h3, h4),
        "(4c0²/ν)(H4 + H3) + R + k λ1^-1/2 (H1 + H3)√H2",
    );
    l.put("lambda_N1", lam_n1, "((N+1)π)²");

    l.conditions.push(Condition::new(
        Claim::BnnL2Modal,
        "gain",
        "μ > σ/2 + R + A0",
        mu,
        sigma / 2.0 + r + a0,
        true,
    ));
    l.conditions.push(Condition::new(
        Claim::BnnL2Modal,
        "modes",
        "ν/2 > (σ + 2A0 + 2R)/λ_{N+1}",
        nu / 2.0,
        (sigma + 2.0 * a0 + 2.0 * r) / lam_n1,
        true,
    ));
    l.conditions.push(Condition::new(
        Claim::BnnH1Modal,
        "gain",
        "μ > Q1 + σ/2",
        mu,
        q1 + sigma / 2.0,
        true,
    ));
    l.conditions.push(Condition::new(
        Claim::BnnH1Modal,
        "modes",
        "ν/2 > (σ + 2Q1)/λ_{N+1}",
        nu / 2.0,
        (sigma + 2.0 * q1) / lam_n1,
        true,
    ));
    l.conditions.push(Condition::new(
        Claim::BnnL2Volume,
        "gain-derivation",
        "μ ≥ A1 + σ/2",
        mu,
        a1 + sigma / 2.0,
        false,
    ));
    l.conditions.push(Condition::new(
        Claim::BnnL2Volume,
        "gain-theorem",
        "μ ≥ σ + A1",
        mu,
        sigma + a1,
        false,
    ));
    let nf = n as f64;
    l.conditions.push(Condition::new(
        Claim::BnnL2Volume,
        "resolution",
        "νλ1 ≥ (4/ν) μ² / N²",
        nu * LAMBDA1,
        4.0 / nu * mu * mu / (nf * nf),
        false,
    ));
    l.corrections.push(
        "volume gain: both μ ≥ A1 + σ/2 and μ ≥ σ + A1 are required (the stricter one decides)"
            .into(),
    );
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObeTarget {
    L2,
    H1,
}

impl ObeTarget {
    pub fn claim(self) -> Claim {
        match self {
            ObeTarget::L2 => Claim::ObeL2,
            ObeTarget::H1 => Claim::ObeH1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnnFamily {
    ModalL2,
    ModalH1,
    VolumeL2,
}

impl BnnFamily {
    pub fn claim(self) -> Claim {
        match self {
            BnnFamily::ModalL2 => Claim::BnnL2Modal,
            BnnFamily::ModalH1 => Claim::BnnH1Modal,
            BnnFamily::VolumeL2 => Claim::BnnL2Volume,
        }
    }
}

/// Planner output: gain, count, certified rate and the ledger at `(mu, modes)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub claim: Claim,
    pub mu: f64,
    pub modes: usize,
    pub certified_rate: f64,
    pub iterations: usize,
    pub ledger: CertificateLedger,
}

/// `mu_{i+1} = PLANNER_MARGIN * bound(mu_i)` from `mu_0 = 0`.
fn fixed_point(name: &str, bound: impl Fn(f64) -> Result<f64>) -> Result<(f64, usize)> {
    let mut mu = 0.0;
    for i in 0..PLANNER_MAX_ITER {
        let b = bound(mu)?;
        let next = PLANNER_MARGIN * b;
        if !next.is_finite() || next > PLANNER_MU_CAP {
            return Err(Error::Infeasible {
                bound: name.into(),
                detail: format!(
                    "iterate {i}: {name}(μ = {mu:.6e}) = {b:.6e}; {name} grows faster than μ and the gain iteration exceeds {PLANNER_MU_CAP:e}"
                ),
            });
        }
        if (next - mu).abs() <= PLANNER_RTOL * next.abs() {
            return Ok((next, i + 1));
        }
        mu = next;
    }
    Err(Error::Infeasible {
        bound: name.into(),
        detail: format!("gain iteration did not settle within {PLANNER_MAX_ITER} iterations (last μ = {mu:.6e})"),
    })
}

/// Smallest `N >= 1` with `λ_{N+1} ≥ threshold` (or `>` when `strict`).
fn modes_for(threshold: f64, strict: bool) -> Result<usize> {
    if !threshold.is_finite() {
        return Err(Error::Infeasible {
            bound: "lambda_N1".into(),
            detail: format!("mode threshold {threshold}"),
        });
    }
    let ok = |n: usize| {
        if strict {
            lambda(n + 1) > threshold
        } else {
            lambda(n + 1) >= threshold
        }
    };
    let guess = (threshold.max(0.0).sqrt() / PI).ceil() as usize;
    let mut n = guess.saturating_sub(2).max(1);
    while n > 1 && ok(n - 1) {
        n -= 1;
    }
    while !ok(n) {
        n += 1;
    }
    Ok(n)
}

/// Solve `mu ≥ bound(mu)` and `λ_{N+1} ≥ 4 bound / nu` for the OBE claim.
pub fn plan_gains_obe(
    params: &PhysicalParams,
    k: &InequalityConstants,
    target: ObeTarget,
) -> Result<Plan> {
    let name = match target {
        ObeTarget::L2 => "M5",
        ObeTarget::H1 => "Q0",
    };
    let (mu, iterations) = fixed_point(name, |mu| Ok(obe_ledger(params, k, mu, 1)?.must(name)))?;
    let bound = obe_ledger(params, k, mu, 1)?.must(name);
    let modes = modes_for(4.0 * bound / params.nu, false)?;
    let ledger = obe_ledger(params, k, mu, modes)?;
    let claim = target.claim();
    Ok(Plan {
        claim,
        mu,
        modes,
        certified_rate: ledger.certified_rate(claim).unwrap_or(f64::NAN),
        iterations,
        ledger,
    })
}

/// BNN planner. Modal families iterate the gain over the μ-dependence of H3 and
/// H4; the volume family takes `mu = max(A1 + σ/2, σ + A1)` and the smallest `N`
/// with `νλ1 ≥ (4/ν) μ²/N²`. A supplied `fixed_mu` skips the gain search and
/// only sizes `N`.
pub fn plan_gains_bnn(
    params: &PhysicalParams,
    k: &InequalityConstants,
    inp: &BnnInputs,
    family: BnnFamily,
    fixed_mu: Option<f64>,
) -> Result<Plan> {
    let base = bnn_ledger(params, k, inp, 0.0, 1)?;
    let sigma = base.must("sigma");
    let r = params.r;
    let nu = params.nu;
    let (mu, iterations) = match (fixed_mu, family) {
        (Some(mu), _) => {
            check_mu(mu)?;
            (mu, 0)
        }
        (None, BnnFamily::ModalL2) => fixed_point("A0", |mu| {
            Ok(sigma / 2.0 + r + bnn_ledger(params, k, inp, mu, 1)?.must("A0"))
        })?,
        (None, BnnFamily::ModalH1) => fixed_point("Q1", |mu| {
            Ok(bnn_ledger(params, k, inp, mu, 1)?.must("Q1") + sigma / 2.0)
        })?,
        (None, BnnFamily::VolumeL2) => {
            let a1 = base.must("A1");
            ((a1 + sigma / 2.0).max(sigma + a1), 0)
        }
    };
    let at = bnn_ledger(params, k, inp, mu, 1)?;
    let modes = match family {
        BnnFamily::ModalL2 => modes_for(2.0 * (sigma + 2.0 * at.must("A0") + 2.0 * r) / nu, true)?,
        BnnFamily::ModalH1 => modes_for(2.0 * (sigma + 2.0 * at.must("Q1")) / nu, true)?,
        BnnFamily::VolumeL2 => volume_count(mu, nu)?,
    };
    let ledger = bnn_ledger(params, k, inp, mu, modes)?;
    let claim = family.claim();
    Ok(Plan {
        claim,
        mu,
        modes,
        certified_rate: ledger.certified_rate(claim).unwrap_or(f64::NAN),
        iterations,
        ledger,
    })
}

/// Smallest `N >= 1` with `νλ1 ≥ (4/ν) μ²/N²`, i.e. `N ≥ 2μ/(ν√λ1)`.
pub fn volume_count(mu: f64, nu: f64) -> Result<usize> {
    let target = 2.0 * mu / (nu * LAMBDA1.sqrt());
    if !target.is_finite() || target > 1e15 {
        return Err(Error::Infeasible {
            bound: "N".into(),
            detail: format!("volume count {target:e} is not representable"),
        });
    }
    let ok = |n: usize| nu * LAMBDA1 - 4.0 / nu * mu * mu / (n as f64 * n as f64) >= 0.0;
    let mut n = (target.ceil() as usize).max(1);
    while n > 1 && ok(n - 1) {
        n -= 1;
    }
    while !ok(n) {
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(nu: f64, r: f64, k: f64) -> PhysicalParams {
        PhysicalParams::new(nu, r, k)
    }

    #[test]
    fn obe_substitutions() {
        let l = obe_ledger(&p(1.0, 1.0, 0.0), &InequalityConstants::default(), 0.0, 1).unwrap();
        assert_eq!(l.get("d0"), Some(1.0));
        assert_eq!(l.get("M1"), Some(2.0));
        assert_eq!(l.get("M3"), Some(2.0));
        assert_eq!(l.get("d2"), Some(1.0));
        assert!(l.is_consistent());
    }

    #[test]
    fn obe_m5_increases_with_r() {
        let k = InequalityConstants::default();
        let a = obe_ledger(&p(1.0, 1.0, 0.0), &k, 3.0, 2)
            .unwrap()
            .get("M5")
            .unwrap();
        let b = obe_ledger(&p(1.0, 2.0, 0.0), &k, 3.0, 2)
            .unwrap()
            .get("M5")
            .unwrap();
        assert!(b > a);
    }

    #[test]
    fn obe_large_viscosity_plan_replays() {
        let plan = plan_gains_obe(
            &p(10.0, 0.1, 0.0),
            &InequalityConstants::default(),
            ObeTarget::L2,
        )
        .unwrap();
        assert!(plan.ledger.conditions_met(Claim::ObeL2), "{}", plan.ledger);
        assert_eq!(plan.modes, 1);
        assert_eq!(plan.certified_rate, 10.0);
    }

    #[test]
    fn bnn_h1_sq_example() {
        let l = bnn_ledger(
            &p(1.0, 1.0, 1.0),
            &InequalityConstants::default(),
            &BnnInputs {
                xi: 10.0,
                h0: 0.0,
                h0_sup: 0.0,
            },
            0.0,
            1,
        )
        .unwrap();
        let h1 = l.get("H1").unwrap();
        assert!((h1 * h1 - 1.0 / (PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_bounds() {
        let k = InequalityConstants::default();
        assert_eq!(bnn_a0(&k, 0.7, 0.0, 0.0), 0.0);
        assert_eq!(bnn_q1(&k, 0.7, 1.5, 1.0, 0.0, 0.0, 0.0, 0.0), 1.5);
    }

    #[test]
    fn rate_too_small() {
        let nu = 0.5;
        let r = bnn_ledger(
            &p(nu, 2.0, 1.0),
            &InequalityConstants::default(),
            &BnnInputs {
                xi: LAMBDA1 * nu / 2.0,
                h0: 0.0,
                h0_sup: 0.0,
            },
            1.0,
            1,
        );
        assert!(matches!(r, Err(Error::RateTooSmall { .. })));
    }

    #[test]
    fn volume_count_example() {
        assert_eq!(volume_count(10.0, 1.0).unwrap(), 7);
        assert_eq!(volume_count(0.0, 1.0).unwrap(), 1);
    }

    #[test]
    fn modes_for_threshold() {
        assert_eq!(modes_for(0.0, false).unwrap(), 1);
        assert_eq!(modes_for(lambda(4), false).unwrap(), 3);
        assert_eq!(modes_for(lambda(4), true).unwrap(), 4);
    }

    #[test]
    fn fixed_point_zero_bound() {
        assert_eq!(fixed_point("b", |_| Ok(0.0)).unwrap().0, 0.0);
        let (mu, _) = fixed_point("b", |mu| Ok(1.0 + 0.5 * mu)).unwrap();
        // mu = 1.05 (1 + mu/2)
        assert!((mu - 1.05 / (1.0 - 0.525)).abs() < 1e-8);
        assert!(matches!(
            fixed_point("b", |mu| Ok(1.0 + mu * mu)),
            Err(Error::Infeasible { .. })
        ));
    }
}
