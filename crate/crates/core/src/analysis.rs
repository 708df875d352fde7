//! Trace post-processing: decay-rate fits, certificate comparison and the
//! random inequality ensemble.
//!
//! The theorems bound squared norms, so every fit is done on a squared-norm
//! combination and the reported rate is the decay constant of that squared
//! quantity. A certified `e^{-d t}` bound on `‖z‖²` is compared with the fitted
//! rate of `‖z‖²`, not of `‖z‖`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{
    self, derivative_samples, eigenvalue, h1_seminorm, second_difference, trapezoid_full,
    GridField, GridSpec, ModalBasis, VolumePartition,
};
use crate::certificates::{CertificateLedger, Claim, InequalityConstants};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    L2V = 0,
    H1V = 1,
    U = 2,
    L2Z = 3,
    H1Z = 4,
    W = 5,
    ControlL2 = 6,
}

impl Channel {
    pub const COUNT: usize = 7;
    pub const ALL: [Channel; 7] = [
        Channel::L2V,
        Channel::H1V,
        Channel::U,
        Channel::L2Z,
        Channel::H1Z,
        Channel::W,
        Channel::ControlL2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::L2V => "l2_v",
            Channel::H1V => "h1_v",
            Channel::U => "U",
            Channel::L2Z => "l2_z",
            Channel::H1Z => "h1_z",
            Channel::W => "W",
            Channel::ControlL2 => "control_l2",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.name() == s)
    }
}

pub const CSV_HEADER: &str = "t,l2_v,h1_v,U,l2_z,h1_z,W,control_l2";

/// Time series of norms for one run. Channels not produced by a system are
/// absent and serialize as empty CSV cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    times: Vec<f64>,
    columns: [Option<Vec<f64>>; Channel::COUNT],
    pub meta: String,
}

impl Trace {
    pub fn new(channels: &[Channel]) -> Self {
        let mut columns: [Option<Vec<f64>>; Channel::COUNT] = Default::default();
        for c in channels {
            columns[*c as usize] = Some(Vec::new());
        }
        Trace {
            times: Vec::new(),
            columns,
            meta: String::new(),
        }
    }

    /// Build from complete columns (used by tests and the synthetic fits).
    pub fn from_columns(times: Vec<f64>, cols: Vec<(Channel, Vec<f64>)>) -> Result<Self> {
        let chans: Vec<Channel> = cols.iter().map(|c| c.0).collect();
        let mut tr = Trace::new(&chans);
        for (i, &t) in times.iter().enumerate() {
            let mut row = [None; Channel::COUNT];
            for (c, v) in &cols {
                row[*c as usize] = Some(
                    *v.get(i)
                        .ok_or_else(|| Error::Config(format!("column {} too short", c.name())))?,
                );
            }
            tr.push_row(t, &row)?;
        }
        Ok(tr)
    }

    pub fn push_row(&mut self, t: f64, row: &[Option<f64>; Channel::COUNT]) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Config(format!(
                    "trace times must increase strictly ({t} after {last})"
                )));
            }
        }
        for (i, c) in self.columns.iter().enumerate() {
            if c.is_some() != row[i].is_some() {
                return Err(Error::Config(format!(
                    "row at t = {t} does not match the trace columns ({})",
                    Channel::ALL[i].name()
                )));
            }
        }
        self.times.push(t);
        for (c, v) in self.columns.iter_mut().zip(row) {
            if let (Some(c), Some(v)) = (c, v) {
                c.push(*v);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn column(&self, c: Channel) -> Option<&[f64]> {
        self.columns[c as usize].as_deref()
    }

    pub fn has(&self, c: Channel) -> bool {
        self.columns[c as usize].is_some()
    }

    pub fn channels(&self) -> Vec<Channel> {
        Channel::ALL.into_iter().filter(|c| self.has(*c)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        let mut line = String::new();
        for (i, t) in self.times.iter().enumerate() {
            line.clear();
            let _ = write!(line, "{t:.16e}");
            for c in &self.columns {
                line.push(',');
                if let Some(c) = c {
                    let _ = write!(line, "{:.16e}", c[i]);
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Parse the CSV format written by [`Trace::write_csv`]. A column is
    /// present iff its cells are non-empty in every row.
    pub fn read_csv(text: &str) -> Result<Trace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty trace file".into()))?;
        if header.trim() != CSV_HEADER {
            return Err(Error::Config(format!(
                "unexpected trace header `{}` (want `{CSV_HEADER}`)",
                header.trim()
            )));
        }
        let mut rows: Vec<(f64, [Option<f64>; Channel::COUNT])> = Vec::new();
        for (ln, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != Channel::COUNT + 1 {
                return Err(Error::Config(format!(
                    "trace line {}: expected 8 cells, got {}",
                    ln + 2,
                    cells.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("trace line {}: bad number `{s}`", ln + 2)))
            };
            let t = num(cells[0])?;
            let mut row = [None; Channel::COUNT];
            for i in 0..Channel::COUNT {
                if !cells[i + 1].is_empty() {
                    row[i] = Some(num(cells[i + 1])?);
                }
            }
            rows.push((t, row));
        }
        let present: Vec<Channel> = Channel::ALL
            .into_iter()
            .filter(|c| rows.first().is_some_and(|r| r.1[*c as usize].is_some()))
            .collect();
        let mut tr = Trace::new(&present);
        for (t, row) in rows {
            tr.push_row(t, &row)?;
        }
        Ok(tr)
    }
}

/// Squared-norm combinations that the theorems bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// `‖z‖² + W²`
    ObeL2,
    /// `½‖∂ₓz‖² + ‖z‖² + W²`
    ObeH1,
    /// `‖z‖²`
    BnnL2,
    /// `‖∂ₓz‖²`
    BnnH1,
    /// Square of a single channel.
    Squared(Channel),
}

impl Quantity {
    pub fn for_claim(claim: Claim) -> Quantity {
        match claim {
            Claim::ObeL2 => Quantity::ObeL2,
            Claim::ObeH1 => Quantity::ObeH1,
            Claim::BnnL2Modal | Claim::BnnL2Volume => Quantity::BnnL2,
            Claim::BnnH1Modal => Quantity::BnnH1,
        }
    }

    pub fn evaluate(&self, trace: &Trace) -> Result<Vec<f64>> {
        let col = |c: Channel| {
            trace
                .column(c)
                .ok_or_else(|| Error::Config(format!("trace has no `{}` column", c.name())))
        };
        let n = trace.len();
        let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
        Ok(match self {
            Quantity::ObeL2 => {
                let (z, w) = (col(Channel::L2Z)?, col(Channel::W)?);
                (0..n).map(|i| z[i] * z[i] + w[i] * w[i]).collect()
            }
            Quantity::ObeH1 => {
                let (z, dz, w) = (col(Channel::L2Z)?, col(Channel::H1Z)?, col(Channel::W)?);
                (0..n)
                    .map(|i| 0.5 * dz[i] * dz[i] + z[i] * z[i] + w[i] * w[i])
                    .collect()
            }
            Quantity::BnnL2 => sq(col(Channel::L2Z)?),
            Quantity::BnnH1 => sq(col(Channel::H1Z)?),
            Quantity::Squared(c) => sq(col(*c)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Positive for decay.
    pub rate: f64,
    /// Intercept of `ln y = intercept - rate t`.
    pub intercept: f64,
    pub window: (f64, f64),
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub floor_hit: bool,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;
pub const DEFAULT_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOLERANCE: f64 = 0.1;

/// Least-squares slope of `ln y` against `t` on `[burn_in, first sample below
/// floor)`.
pub fn fit_series(times: &[f64], values: &[f64], burn_in: f64, floor: f64) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::Config("times and values differ in length".into()));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut floor_hit = false;
    for (&t, &y) in times.iter().zip(values) {
        if t < burn_in {
            continue;
        }
        if y.is_nan() || y.is_infinite() {
            return Err(Error::Domain { t, value: y });
        }
        if floor > 0.0 && y < floor {
            floor_hit = true;
            break;
        }
        if y <= 0.0 {
            return Err(Error::Domain { t, value: y });
        }
        ts.push(t);
        ys.push(y.ln());
    }
    if ts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            available: ts.len(),
        });
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        sxy += (t - tm) * (y - ym);
        sxx += (t - tm) * (t - tm);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss: f64 = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum();
    Ok(RateFit {
        rate: -slope,
        intercept,
        window: (ts[0], *ts.last().unwrap()),
        residual: (ss / n).sqrt(),
        floor_hit,
        samples: ts.len(),
    })
}

pub fn fit_decay_rate(
    trace: &Trace,
    quantity: Quantity,
    burn_in: f64,
    floor: f64,
) -> Result<RateFit> {
    let y = quantity.evaluate(trace)?;
    fit_series(trace.times(), &y, burn_in, floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim: Option<Claim>,
    pub fitted_rate: f64,
    pub certified_rate: f64,
    pub tolerance: f64,
    /// `fitted - certified`.
    pub margin: f64,
    pub pass: bool,
    pub conditions_met: bool,
}

/// Rate-only comparison: pass iff `fitted ≥ certified (1 - tolerance)`.
pub fn compare_rate(fitted: f64, certified: f64, tolerance: f64) -> Verdict {
    Verdict {
        claim: None,
        fitted_rate: fitted,
        certified_rate: certified,
        tolerance,
        margin: fitted - certified,
        pass: fitted >= certified * (1.0 - tolerance),
        conditions_met: false,
    }
}

/// Compare a fit with the claim's certified rate. Errors with
/// [`Error::Precondition`] when the ledger's conditions for the claim do not
/// hold, since the theorem then says nothing.
pub fn compare_to_certificate(
    fit: &RateFit,
    ledger: &CertificateLedger,
    claim: Claim,
    tolerance: f64,
) -> Result<Verdict> {
    if !ledger.conditions_met(claim) {
        let mut failed = ledger.failed_conditions(claim);
        if failed.is_empty() {
            failed.push(format!("ledger does not cover {claim}"));
        }
        return Err(Error::Precondition {
            claim: claim.name().into(),
            failed,
        });
    }
    let certified = ledger
        .certified_rate(claim)
        .ok_or_else(|| Error::Config(format!("ledger has no certified rate for {claim}")))?;
    let mut v = compare_rate(fit.rate, certified, tolerance);
    v.claim = Some(claim);
    v.conditions_met = true;
    Ok(v)
}

/// Start of the analysis window: the first sample from which the master stays
/// inside the claim's absorbing ball for one time unit (or until the trace
/// ends). Returns the last sample time if the ball is never held.
pub fn default_burn_in(trace: &Trace, ledger: &CertificateLedger, claim: Claim) -> f64 {
    let times = trace.times();
    if times.is_empty() {
        return 0.0;
    }
    let get = |n: &str| ledger.get(n).unwrap_or(f64::INFINITY);
    let l2 = trace.column(Channel::L2V);
    let h1 = trace.column(Channel::H1V);
    let u = trace.column(Channel::U);
    let inside = |i: usize| -> bool {
        let v2 = l2.map_or(0.0, |c| c[i] * c[i]);
        let dv2 = h1.map_or(0.0, |c| c[i] * c[i]);
        match claim {
            Claim::ObeL2 | Claim::ObeH1 => {
                let u2 = u.map_or(0.0, |c| c[i] * c[i]);
                v2 + u2 <= get("M1") && dv2 <= get("M2")
            }
            Claim::BnnL2Modal | Claim::BnnH1Modal => v2 <= get("H1").powi(2) && dv2 <= get("H2"),
            Claim::BnnL2Volume => dv2 <= get("H2"),
        }
    };
    let n = times.len();
    // first index from which every sample within one time unit is inside
    let mut start = None;
    let mut run_start = 0;
    let mut in_run = false;
    for i in 0..n {
        if inside(i) {
            if !in_run {
                run_start = i;
                in_run = true;
            }
            if times[i] - times[run_start] >= 1.0 || i + 1 == n {
                start = Some(run_start);
                break;
            }
        } else {
            in_run = false;
        }
    }
    start.map_or(times[n - 1], |i| times[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample: usize,
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub seed: u64,
    pub count: usize,
    pub max_mode: usize,
    pub points: usize,
    pub slack: f64,
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Smallest `rhs + slack - lhs` seen per inequality.
    pub worst_margin: BTreeMap<String, f64>,
    /// Largest `lhs / rhs` seen per inequality.
    pub worst_ratio: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "inequality ensemble: seed {} count {} modes <= {} grid M = {} slack {:e}",
            self.seed, self.count, self.max_mode, self.points, self.slack
        );
        for (name, m) in &self.worst_margin {
            let _ = writeln!(
                s,
                "  {:<22} worst margin {:>+.6e}  worst ratio {:.6}",
                name, m, self.worst_ratio[name]
            );
        }
        let _ = writeln!(
            s,
            "checks {}  violations {}",
            self.checks,
            self.violations.len()
        );
        for v in self.violations.iter().take(20) {
            let _ = writeln!(
                s,
                "  sample {} {}: {:.6e} > {:.6e}",
                v.sample, v.inequality, v.lhs, v.rhs
            );
        }
        s
    }

    fn check(&mut self, sample: usize, name: &str, lhs: f64, rhs: f64) {
        self.checks += 1;
        let margin = rhs + self.slack - lhs;
        let m = self
            .worst_margin
            .entry(name.into())
            .or_insert(f64::INFINITY);
        *m = m.min(margin);
        let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
        let r = self.worst_ratio.entry(name.into()).or_insert(0.0);
        *r = r.max(ratio);
        if !(margin >= 0.0) {
            self.violations.push(Violation {
                sample,
                inequality: name.into(),
                lhs,
                rhs,
            });
        }
    }
}

pub const ENSEMBLE_SLACK: f64 = 1e-8;
pub const TAIL_COUNTS: [usize; 4] = [1, 2, 5, 10];

fn l3_norm_of_derivative(u: &GridField) -> f64 {
    let d = derivative_samples(u);
    let cubes: Vec<f64> = d.iter().map(|x| x.abs().powi(3)).collect();
    trapezoid_full(&cubes, u.grid().spacing()).cbrt()
}

/// Check every inequality on one field, appending to `report`.
pub fn check_field(
    u: &GridField,
    k: &InequalityConstants,
    sample: usize,
    report: &mut InequalityReport,
) -> Result<()> {
    let grid = u.grid();
    let u2 = u.l2_norm_sq();
    let du = h1_seminorm(u);
    let du2 = du * du;
    report.check(sample, "poincare", u2, du2 / eigenvalue(1));

    let max_n = *TAIL_COUNTS.iter().max().unwrap();
    let coeffs = ModalBasis::new(grid, max_n.min(grid.max_mode()))?.coeffs(u)?;
    for &n in TAIL_COUNTS.iter().filter(|&&n| n <= coeffs.len()) {
        let head: f64 = coeffs[..n].iter().map(|c| c * c).sum();
        report.check(
            sample,
            &format!("tail N={n}"),
            (u2 - head).max(0.0),
            du2 / eigenvalue(n + 1),
        );
        report.check(sample, &format!("parseval N={n}"), head, u2);
    }
    for &n in TAIL_COUNTS.iter().filter(|&&n| 4 * n <= grid.points()) {
        let part = VolumePartition::new(n)?;
        let avg = basis::volume_averages(u, &part)?;
        let p = basis::piecewise_reconstruct(&avg, &part, grid)?;
        report.check(
            sample,
            &format!("volume N={n}"),
            u.sub(&p)?.l2_norm(),
            du / n as f64,
        );
    }
    let sup = u.sup_norm();
    report.check(sample, "agmon", sup * sup, k.c0 * du2);
    report.check(
        sample,
        "gn-l4",
        u.lp_norm(4.0),
        k.beta4 * u2.sqrt().powf(0.75) * du.powf(0.25),
    );
    let d2 = second_difference(u).l2_norm();
    report.check(
        sample,
        "gn-l3-derivative",
        l3_norm_of_derivative(u),
        k.beta3 * u2.sqrt().powf(5.0 / 12.0) * d2.powf(7.0 / 12.0),
    );
    Ok(())
}

/// Random sine polynomials `Σ_{k≤max_mode} c_k w_k`, `c_k ~ U[-1, 1]`, checked
/// against the Poincaré, tail, Parseval, volume-element, Agmon and the two
/// interpolation inequalities.
pub fn inequality_ensemble(
    seed: u64,
    count: usize,
    max_mode: usize,
    constants: &InequalityConstants,
    grid: GridSpec,
) -> Result<InequalityReport> {
    if count == 0 {
        return Err(Error::param("count", "need at least one sample"));
    }
    if max_mode == 0 {
        return Err(Error::param("max_mode", "need at least one mode"));
    }
    let basis = ModalBasis::new(grid, max_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InequalityReport {
        seed,
        count,
        max_mode,
        points: grid.points(),
        slack: ENSEMBLE_SLACK,
        checks: 0,
        violations: Vec::new(),
        worst_margin: BTreeMap::new(),
        worst_ratio: BTreeMap::new(),
    };
    for s in 0..count {
        let c: Vec<f64> = (0..max_mode)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let u = basis.reconstruct(&c)?;
        check_field(&u, constants, s, &mut report)?;
    }
    Ok(report)
}
