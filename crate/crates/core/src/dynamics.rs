//! Time integration of the original Burgers system (OBE)
//!
//! ```text
//! v_t = U v + nu v_xx - 2 v v_x,      U' = R - nu U - ‖v‖²
//! ```
//!
//! and of the Burgers equation with nonlocal damping (BNN)
//!
//! ```text
//! v_t = nu v_xx - 2 v v_x + R v - k ‖v‖² v + h
//! ```
//!
//! with homogeneous Dirichlet conditions on `[0, 1]`. Diffusion is implicit
//! (Crank-Nicolson or backward Euler), every other term explicit (AB2 or
//! forward Euler). The advection term is discretized in conservative form
//! `∂ₓ(v²)` with centered differences.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::analysis::{Channel, Trace};
use crate::basis::{h1_seminorm, GridField, GridSpec};
use crate::controllers::{Controller, ControllerFamily, ControllerSpec};
use crate::error::{Error, Result};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub nu: f64,
    #[serde(rename = "R", alias = "r")]
    pub r: f64,
    #[serde(default)]
    pub k: f64,
}

impl PhysicalParams {
    pub fn new(nu: f64, r: f64, k: f64) -> Self {
        PhysicalParams { nu, r, k }
    }

    /// Checks `nu > 0`, `R > 0` and, for the nonlocal system, `k > 0`.
    pub fn validate(&self, nonlocal: bool) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::param(
                "physical.nu",
                format!("viscosity must be positive, got {}", self.nu),
            ));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(
                "physical.R",
                format!("must be positive, got {}", self.r),
            ));
        }
        if nonlocal && !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::param(
                "physical.k",
                format!("must be positive for bnn, got {}", self.k),
            ));
        }
        Ok(())
    }
}

/// Named closed-form sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticSource {
    /// Forcing that makes `e^{-t} sin(pi x)` an exact solution of the BNN
    /// equation for the current parameters.
    Mms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceTerm {
    #[default]
    Zero,
    /// Fixed spatial profile damped in time as `e^{-decay t}`.
    Sampled {
        values: Vec<f64>,
        #[serde(default)]
        decay: f64,
    },
    Analytic {
        id: AnalyticSource,
    },
}

impl SourceTerm {
    pub fn is_zero(&self) -> bool {
        matches!(self, SourceTerm::Zero)
    }

    pub fn evaluate(&self, t: f64, grid: GridSpec, params: &PhysicalParams) -> Result<GridField> {
        let mut out = vec![0.0; grid.points()];
        self.fill(t, grid, params, &mut out)?;
        GridField::from_values(grid, out)
    }

    fn fill(&self, t: f64, grid: GridSpec, params: &PhysicalParams, out: &mut [f64]) -> Result<()> {
        match self {
            SourceTerm::Zero => out.fill(0.0),
            SourceTerm::Sampled { values, decay } => {
                if values.len() != out.len() {
                    return Err(Error::GridMismatch {
                        left: out.len(),
                        right: values.len(),
                    });
                }
                let s = (-decay * t).exp();
                for (o, v) in out.iter_mut().zip(values) {
                    *o = s * v;
                }
            }
            SourceTerm::Analytic {
                id: AnalyticSource::Mms,
            } => {
                let e1 = (-t).exp();
                let e2 = e1 * e1;
                let c = -1.0 + params.nu * PI * PI - params.r + 0.5 * params.k * e2;
                for (i, o) in out.iter_mut().enumerate() {
                    let x = grid.node(i);
                    *o = c * e1 * (PI * x).sin() + PI * e2 * (2.0 * PI * x).sin();
                }
            }
        }
        Ok(())
    }
}

/// Exact solution forced by [`AnalyticSource::Mms`].
pub fn mms_exact(t: f64, grid: GridSpec) -> GridField {
    let e = (-t).exp();
    GridField::from_fn(grid, |x| e * (PI * x).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    ImexCnAb2,
    ImexBeFe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Enforce `dt <= cfl_safety * spacing / max(1, max|v|)` before each step.
    #[serde(default = "yes")]
    pub check_cfl: bool,
    /// Drop the advection term (test hook for the heat-equation limit).
    #[serde(default)]
    pub linearize: bool,
}

fn default_cfl() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        StepperConfig {
            dt,
            scheme: Scheme::default(),
            cfl_safety: default_cfl(),
            check_cfl: true,
            linearize: false,
        }
    }

    /// `dt = min(1e-3, spacing / 4)`.
    pub fn default_dt(grid: GridSpec) -> f64 {
        (0.25 * grid.spacing()).min(1e-3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(
                "stepper.dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::param(
                "stepper.cfl_safety",
                format!("must lie in (0, 1], got {}", self.cfl_safety),
            ));
        }
        Ok(())
    }

    pub fn admissible_dt(&self, grid: GridSpec, sup: f64) -> f64 {
        self.cfl_safety * grid.spacing() / sup.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObeState {
    pub t: f64,
    pub v: GridField,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnState {
    pub t: f64,
    pub v: GridField,
}

#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Obe(ObeState),
    Bnn(BnnState),
}

impl State {
    pub fn t(&self) -> f64 {
        match self {
            State::Obe(s) => s.t,
            State::Bnn(s) => s.t,
        }
    }

    pub fn v(&self) -> &GridField {
        match self {
            State::Obe(s) => &s.v,
            State::Bnn(s) => &s.v,
        }
    }

    pub fn u(&self) -> Option<f64> {
        match self {
            State::Obe(s) => Some(s.u),
            State::Bnn(_) => None,
        }
    }
}

/// `∂ₓ(v²)` by centered differences with zero boundary values, added to `out`
/// with weight `c`.
fn add_advection(v: &[f64], h: f64, c: f64, out: &mut [f64]) {
    let m = v.len();
    let w = c / (2.0 * h);
    for i in 0..m {
        let l = if i > 0 { v[i - 1] } else { 0.0 };
        let r = if i + 1 < m { v[i + 1] } else { 0.0 };
        out[i] += w * (r * r - l * l);
    }
}

fn add_laplacian(v: &[f64], h: f64, c: f64, out: &mut [f64]) {
    let m = v.len();
    let w = c / (h * h);
    for i in 0..m {
        let l = if i > 0 { v[i - 1] } else { 0.0 };
        let r = if i + 1 < m { v[i + 1] } else { 0.0 };
        out[i] += w * (r - 2.0 * v[i] + l);
    }
}

fn sq_norm(v: &[f64], h: f64) -> f64 {
    h * v.iter().map(|x| x * x).sum::<f64>()
}

fn ensure_finite(t: f64, v: &[f64], u: f64) -> Result<()> {
    if !u.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            t,
            reason: "non-finite value in state".into(),
        });
    }
    Ok(())
}

fn check_control(v: &GridField, control: Option<&GridField>) -> Result<()> {
    match control {
        Some(c) => v.check_same_grid(c),
        None => Ok(()),
    }
}

/// Time derivative of the OBE state: `(dv/dt, dU/dt)`.
pub fn rhs_obe(
    state: &ObeState,
    params: &PhysicalParams,
    control: Option<&GridField>,
) -> Result<(GridField, f64)> {
    check_control(&state.v, control)?;
    ensure_finite(state.t, state.v.values(), state.u)?;
    let mut out = vec![0.0; state.v.grid().points()];
    let du = obe_explicit(
        state.v.values(),
        state.u,
        state.v.grid().spacing(),
        params,
        control,
        false,
        &mut out,
    );
    add_laplacian(
        state.v.values(),
        state.v.grid().spacing(),
        params.nu,
        &mut out,
    );
    Ok((GridField::from_values(state.v.grid(), out)?, du))
}

/// Time derivative of the BNN state.
pub fn rhs_bnn(
    state: &BnnState,
    params: &PhysicalParams,
    source: &GridField,
    control: Option<&GridField>,
) -> Result<GridField> {
    check_control(&state.v, control)?;
    state.v.check_same_grid(source)?;
    ensure_finite(state.t, state.v.values(), 0.0)?;
    let h = state.v.grid().spacing();
    let mut out = vec![0.0; state.v.grid().points()];
    bnn_explicit(
        state.v.values(),
        h,
        params,
        source.values(),
        control,
        false,
        &mut out,
    );
    add_laplacian(state.v.values(), h, params.nu, &mut out);
    GridField::from_values(state.v.grid(), out)
}

fn obe_explicit(
    v: &[f64],
    u: f64,
    h: f64,
    params: &PhysicalParams,
    control: Option<&GridField>,
    linearize: bool,
    out: &mut [f64],
) -> f64 {
    for (o, x) in out.iter_mut().zip(v) {
        *o = u * x;
    }
    if !linearize {
        add_advection(v, h, -1.0, out);
    }
    if let Some(c) = control {
        for (o, x) in out.iter_mut().zip(c.values()) {
            *o += x;
        }
    }
    params.r - params.nu * u - sq_norm(v, h)
}

fn bnn_explicit(
    v: &[f64],
    h: f64,
    params: &PhysicalParams,
    source: &[f64],
    control: Option<&GridField>,
    linearize: bool,
    out: &mut [f64],
) {
    let growth = params.r - params.k * sq_norm(v, h);
    for ((o, x), s) in out.iter_mut().zip(v).zip(source) {
        *o = growth * x + s;
    }
    if !linearize {
        add_advection(v, h, -1.0, out);
    }
    if let Some(c) = control {
        for (o, x) in out.iter_mut().zip(c.values()) {
            *o += x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Obe,
    Bnn,
}

/// One-system IMEX integrator. Holds the factored implicit matrix and the
/// explicit history needed by AB2.
#[derive(Debug, Clone)]
pub struct Stepper {
    kind: SystemKind,
    params: PhysicalParams,
    cfg: StepperConfig,
    grid: GridSpec,
    solver: Tridiagonal,
    explicit_diffusion: f64,
    prev: Option<(Vec<f64>, f64)>,
    source_buf: Vec<f64>,
}

impl Stepper {
    pub fn new(
        kind: SystemKind,
        params: PhysicalParams,
        cfg: StepperConfig,
        grid: GridSpec,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(params.nu > 0.0) {
            return Err(Error::param("physical.nu", "viscosity must be positive"));
        }
        let theta = match cfg.scheme {
            Scheme::ImexCnAb2 => 0.5,
            Scheme::ImexBeFe => 1.0,
        };
        let h = grid.spacing();
        let r = cfg.dt * params.nu / (h * h);
        let solver =
            Tridiagonal::symmetric_toeplitz(grid.points(), 1.0 + 2.0 * theta * r, -theta * r)?;
        Ok(Stepper {
            kind,
            params,
            cfg,
            grid,
            solver,
            explicit_diffusion: (1.0 - theta) * cfg.dt * params.nu,
            prev: None,
            source_buf: vec![0.0; grid.points()],
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Forget the multistep history; the next step is a forward-Euler start.
    pub fn reset(&mut self) {
        self.prev = None;
    }

    fn check_step(&self, t: f64, v: &GridField) -> Result<()> {
        if self.cfg.check_cfl {
            let admissible = self.cfg.admissible_dt(self.grid, v.sup_norm());
            if self.cfg.dt > admissible * (1.0 + 1e-12) {
                return Err(Error::StepSize {
                    dt: self.cfg.dt,
                    admissible,
                });
            }
        }
        ensure_finite(t, v.values(), 0.0)
    }

    fn advance(
        &mut self,
        t: f64,
        v: &GridField,
        u: f64,
        source: &SourceTerm,
        control: Option<&GridField>,
    ) -> Result<(GridField, f64)> {
        if v.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.points(),
                right: v.grid().points(),
            });
        }
        check_control(v, control)?;
        self.check_step(t, v)?;
        let h = self.grid.spacing();
        let vals = v.values();
        let mut e = vec![0.0; vals.len()];
        let fu = match self.kind {
            SystemKind::Obe => obe_explicit(
                vals,
                u,
                h,
                &self.params,
                control,
                self.cfg.linearize,
                &mut e,
            ),
            SystemKind::Bnn => {
                source.fill(t, self.grid, &self.params, &mut self.source_buf)?;
                bnn_explicit(
                    vals,
                    h,
                    &self.params,
                    &self.source_buf,
                    control,
                    self.cfg.linearize,
                    &mut e,
                );
                0.0
            }
        };
        let dt = self.cfg.dt;
        let mut rhs = vals.to_vec();
        let u_next = match (&self.prev, self.cfg.scheme) {
            (Some((pe, pu)), Scheme::ImexCnAb2) => {
                for ((r, a), b) in rhs.iter_mut().zip(&e).zip(pe) {
                    *r += dt * (1.5 * a - 0.5 * b);
                }
                u + dt * (1.5 * fu - 0.5 * pu)
            }
            _ => {
                for (r, a) in rhs.iter_mut().zip(&e) {
                    *r += dt * a;
                }
                u + dt * fu
            }
        };
        if self.explicit_diffusion != 0.0 {
            add_laplacian(vals, h, self.explicit_diffusion, &mut rhs);
        }
        self.solver.solve_in_place(&mut rhs);
        self.prev = Some((e, fu));
        ensure_finite(t + dt, &rhs, u_next)?;
        Ok((GridField::from_values(self.grid, rhs)?, u_next))
    }

    pub fn step_obe(&mut self, state: &ObeState, control: Option<&GridField>) -> Result<ObeState> {
        if self.kind != SystemKind::Obe {
            return Err(Error::param("system", "stepper was built for bnn"));
        }
        let (v, u) = self.advance(state.t, &state.v, state.u, &SourceTerm::Zero, control)?;
        Ok(ObeState {
            t: state.t + self.cfg.dt,
            v,
            u,
        })
    }

    pub fn step_bnn(
        &mut self,
        state: &BnnState,
        source: &SourceTerm,
        control: Option<&GridField>,
    ) -> Result<BnnState> {
        if self.kind != SystemKind::Bnn {
            return Err(Error::param("system", "stepper was built for obe"));
        }
        let (v, _) = self.advance(state.t, &state.v, 0.0, source, control)?;
        Ok(BnnState {
            t: state.t + self.cfg.dt,
            v,
        })
    }

    pub fn step(
        &mut self,
        state: &State,
        source: &SourceTerm,
        control: Option<&GridField>,
    ) -> Result<State> {
        match state {
            State::Obe(s) => self.step_obe(s, control).map(State::Obe),
            State::Bnn(s) => self.step_bnn(s, source, control).map(State::Bnn),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    Obe,
    ObeControlled,
    Bnn,
    BnnControlledModal,
    BnnControlledVolume,
}

impl System {
    pub const ALL: [System; 5] = [
        System::Obe,
        System::ObeControlled,
        System::Bnn,
        System::BnnControlledModal,
        System::BnnControlledVolume,
    ];

    pub fn kind(self) -> SystemKind {
        match self {
            System::Obe | System::ObeControlled => SystemKind::Obe,
            _ => SystemKind::Bnn,
        }
    }

    pub fn is_controlled(self) -> bool {
        !matches!(self, System::Obe | System::Bnn)
    }

    /// Controller family the system expects when active.
    pub fn controller_family(self) -> ControllerFamily {
        match self {
            System::Obe | System::Bnn => ControllerFamily::None,
            System::ObeControlled | System::BnnControlledModal => ControllerFamily::Modal,
            System::BnnControlledVolume => ControllerFamily::Volume,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            System::Obe => "obe",
            System::ObeControlled => "obe-controlled",
            System::Bnn => "bnn",
            System::BnnControlledModal => "bnn-controlled-modal",
            System::BnnControlledVolume => "bnn-controlled-volume",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub v: GridField,
    /// Scalar channel; ignored for bnn.
    pub u: f64,
}

/// Everything `simulate` needs, with initial data already sampled.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: System,
    pub params: PhysicalParams,
    pub source: SourceTerm,
    pub stepper: StepperConfig,
    pub controller: ControllerSpec,
    pub master: InitialData,
    /// Controlled copy; required for controlled systems, optional otherwise.
    pub follower: Option<InitialData>,
    pub horizon: f64,
    pub sample_stride: usize,
}

impl Scenario {
    pub fn grid(&self) -> GridSpec {
        self.master.v.grid()
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.stepper.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !self.stepper.linearize {
            self.params
                .validate(self.system.kind() == SystemKind::Bnn)?;
        }
        self.stepper.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if self.sample_stride == 0 {
            return Err(Error::param("sample_stride", "must be at least 1"));
        }
        if self.system.kind() == SystemKind::Obe && !self.source.is_zero() {
            return Err(Error::param(
                "source",
                "the obe system takes no source term",
            ));
        }
        let spec = self.controller.validated()?;
        let expected = self.system.controller_family();
        if spec.family != ControllerFamily::None && spec.family != expected {
            return Err(Error::param(
                "controller.family",
                format!(
                    "system {} cannot use a {:?} controller",
                    self.system.name(),
                    spec.family
                ),
            ));
        }
        if self.system.is_controlled() && self.follower.is_none() {
            return Err(Error::param(
                "follower",
                "controlled systems need follower initial data",
            ));
        }
        if let Some(f) = &self.follower {
            self.master.v.check_same_grid(&f.v)?;
        }
        Ok(())
    }
}

/// Result of a run. A run that diverges still returns its trace, truncated at
/// the last finite sample, and the last finite states.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub trace: Trace,
    pub master: State,
    pub follower: Option<State>,
    pub steps_taken: usize,
    pub divergence: Option<Error>,
    pub warnings: Vec<String>,
}

fn initial_state(system: System, d: &InitialData) -> State {
    match system.kind() {
        SystemKind::Obe => State::Obe(ObeState {
            t: 0.0,
            v: d.v.clone(),
            u: d.u,
        }),
        SystemKind::Bnn => State::Bnn(BnnState {
            t: 0.0,
            v: d.v.clone(),
        }),
    }
}

/// Integrate the master and (if present) the follower in lock step. The
/// controller reads the same-time difference `follower - master` and acts on
/// the follower only.
pub fn simulate(sc: &Scenario) -> Result<Simulation> {
    sc.validate()?;
    let grid = sc.grid();
    let kind = sc.system.kind();
    let controller = if sc.system.is_controlled() {
        Some(Controller::new(sc.controller, grid)?)
    } else {
        None
    };

    let mut channels = vec![Channel::L2V, Channel::H1V];
    if kind == SystemKind::Obe {
        channels.push(Channel::U);
    }
    if sc.follower.is_some() {
        channels.extend([Channel::L2Z, Channel::H1Z]);
        if kind == SystemKind::Obe {
            channels.push(Channel::W);
        }
    }
    if controller.is_some() {
        channels.push(Channel::ControlL2);
    }
    let mut trace = Trace::new(&channels);

    let mut master = initial_state(sc.system, &sc.master);
    let mut follower = sc.follower.as_ref().map(|f| initial_state(sc.system, f));
    let mut ms = Stepper::new(kind, sc.params, sc.stepper, grid)?;
    let mut fs = ms.clone();

    let dt = sc.stepper.dt;
    let n_steps = sc.steps();
    let mut divergence = None;
    let mut steps_taken = 0;
    let mut energy = SourceEnergy::default();

    for n in 0..=n_steps {
        let t = n as f64 * dt;
        let z = match &follower {
            Some(f) => Some(f.v().sub(master.v())?),
            None => None,
        };
        let control = match (&controller, &z) {
            (Some(c), Some(z)) => c.apply(z)?,
            _ => None,
        };
        if n % sc.sample_stride == 0 {
            let mut row = [None; Channel::COUNT];
            row[Channel::L2V as usize] = Some(master.v().l2_norm());
            row[Channel::H1V as usize] = Some(h1_seminorm(master.v()));
            row[Channel::U as usize] = master.u();
            if let (Some(f), Some(z)) = (&follower, &z) {
                row[Channel::L2Z as usize] = Some(z.l2_norm());
                row[Channel::H1Z as usize] = Some(h1_seminorm(z));
                if let (Some(a), Some(b)) = (f.u(), master.u()) {
                    row[Channel::W as usize] = Some((a - b).abs());
                }
            }
            if controller.is_some() {
                row[Channel::ControlL2 as usize] =
                    Some(control.as_ref().map_or(0.0, |c| c.l2_norm()));
            }
            trace.push_row(t, &row)?;
        }
        if n == n_steps {
            break;
        }
        if kind == SystemKind::Bnn && !sc.source.is_zero() {
            energy.add(t, dt, sc.source.evaluate(t, grid, &sc.params)?.l2_norm_sq());
        }

        let next = ms
            .step(&master, &sc.source, None)
            .and_then(|m| match &follower {
                Some(f) => fs
                    .step(f, &sc.source, control.as_ref())
                    .map(|f| (m, Some(f))),
                None => Ok((m, None)),
            });
        match next {
            Ok((m, f)) => {
                master = with_time(m, t + dt);
                follower = f.map(|f| with_time(f, t + dt));
                steps_taken += 1;
            }
            Err(Error::StepSize { dt, admissible }) if n > 0 => {
                divergence = Some(Error::Divergence {
                    t,
                    reason: format!("solution left the resolvable range (dt {dt:e} exceeds admissible {admissible:e})"),
                });
                break;
            }
            Err(e @ Error::Divergence { .. }) => {
                divergence = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let mut warnings = Vec::new();
    if let Some(w) = energy.linear_growth_warning() {
        warnings.push(w);
    }
    Ok(Simulation {
        trace,
        master,
        follower,
        steps_taken,
        divergence,
        warnings,
    })
}

fn with_time(mut s: State, t: f64) -> State {
    // keep t = n * dt exactly rather than an accumulated sum
    match &mut s {
        State::Obe(o) => o.t = t,
        State::Bnn(b) => b.t = t,
    }
    s
}

/// Running `∫‖h‖² dt`, split at the midpoint of the run so linear growth can
/// be recognised.
#[derive(Debug, Default)]
struct SourceEnergy {
    samples: Vec<(f64, f64)>,
}

impl SourceEnergy {
    fn add(&mut self, t: f64, dt: f64, sq: f64) {
        self.samples.push((t, sq * dt));
    }

    fn linear_growth_warning(&self) -> Option<String> {
        let end = self.samples.last()?.0;
        let half = 0.5 * end;
        let (mut first, mut second) = (0.0, 0.0);
        for &(t, e) in &self.samples {
            if t < half {
                first += e;
            } else {
                second += e;
            }
        }
        if first > 0.0 && second >= 0.5 * first {
            Some(format!(
                "source energy keeps growing (∫‖h‖²dt: {first:.3e} on the first half of the run, {second:.3e} on the second); \
                 the source may not be square integrable in time"
            ))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::eigenpair;

    fn grid() -> GridSpec {
        GridSpec::new(256).unwrap()
    }

    #[test]
    fn rhs_obe_zero_field() {
        let s = ObeState {
            t: 0.0,
            v: GridField::zeros(grid()),
            u: 0.7,
        };
        let p = PhysicalParams::new(1.3, 2.0, 0.0);
        let (dv, du) = rhs_obe(&s, &p, None).unwrap();
        assert_eq!(dv.sup_norm(), 0.0);
        assert!((du - (2.0 - 1.3 * 0.7)).abs() < 1e-15);
        let s = ObeState { u: 2.0 / 1.3, ..s };
        assert!(rhs_obe(&s, &p, None).unwrap().1.abs() < 1e-15);
    }

    #[test]
    fn rhs_obe_linearization() {
        let eps = 1e-6;
        let w1 = eigenpair(1, grid()).unwrap().function;
        let s = ObeState {
            t: 0.0,
            v: w1.scaled(eps),
            u: 0.0,
        };
        let (dv, _) = rhs_obe(&s, &PhysicalParams::new(1.0, 1.0, 0.0), None).unwrap();
        let expected = w1.scaled(-PI * PI * eps);
        let rel = dv.sub(&expected).unwrap().l2_norm() / expected.l2_norm();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn rhs_bnn_examples() {
        let g = grid();
        let zero = GridField::zeros(g);
        let s = BnnState {
            t: 0.0,
            v: zero.clone(),
        };
        assert_eq!(
            rhs_bnn(&s, &PhysicalParams::new(1.0, 2.0, 1.0), &zero, None)
                .unwrap()
                .sup_norm(),
            0.0
        );

        let w2 = eigenpair(2, g).unwrap().function;
        let eps = 1e-6;
        let s = BnnState {
            t: 0.0,
            v: w2.scaled(eps),
        };
        let nu = 0.8;
        let dv = rhs_bnn(&s, &PhysicalParams::new(nu, 0.0, 1.0), &zero, None).unwrap();
        let expected = w2.scaled(-nu * 4.0 * PI * PI * eps);
        assert!(dv.sub(&expected).unwrap().l2_norm() / expected.l2_norm() < 1e-4);
    }

    #[test]
    fn rhs_bnn_near_steady_mode() {
        let g = grid();
        let p = PhysicalParams::new(0.1, 3.0, 1.0);
        let c = ((p.r - p.nu * PI * PI) / p.k).sqrt();
        let v = eigenpair(1, g).unwrap().function.scaled(c);
        let s = BnnState {
            t: 0.0,
            v: v.clone(),
        };
        let dv = rhs_bnn(&s, &p, &GridField::zeros(g), None).unwrap();
        // what remains is the advection of the mode, which has no w1 component
        let w1 = eigenpair(1, g).unwrap().function;
        let along = crate::basis::l2_inner(&dv, &w1).unwrap();
        assert!(along.abs() < 0.05 * v.l2_norm(), "{along}");
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = GridSpec::new(64).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0);
        let mut st = Stepper::new(SystemKind::Bnn, p, StepperConfig::new(1e-3), g).unwrap();
        let mut s = BnnState {
            t: 0.0,
            v: GridField::zeros(g),
        };
        for _ in 0..20 {
            s = st.step_bnn(&s, &SourceTerm::Zero, None).unwrap();
        }
        assert_eq!(s.v.sup_norm(), 0.0);
    }

    #[test]
    fn cfl_violation_reports_admissible_dt() {
        let g = GridSpec::new(64).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0);
        let mut st = Stepper::new(SystemKind::Bnn, p, StepperConfig::new(0.1), g).unwrap();
        let s = BnnState {
            t: 0.0,
            v: GridField::zeros(g),
        };
        match st.step_bnn(&s, &SourceTerm::Zero, None) {
            Err(Error::StepSize { admissible, .. }) => {
                assert!((admissible - 0.5 / 65.0).abs() < 1e-15)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn source_sampled_and_mms() {
        let g = GridSpec::new(16).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0);
        let s = SourceTerm::Sampled {
            values: vec![2.0; 16],
            decay: 1.0,
        };
        let f = s.evaluate(1.0, g, &p).unwrap();
        assert!((f.values()[3] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let bad = SourceTerm::Sampled {
            values: vec![1.0; 3],
            decay: 0.0,
        };
        assert!(bad.evaluate(0.0, g, &p).is_err());
    }

    #[test]
    fn scenario_validation() {
        let g = GridSpec::new(32).unwrap();
        let d = InitialData {
            v: GridField::zeros(g),
            u: 0.0,
        };
        let mut sc = Scenario {
            system: System::ObeControlled,
            params: PhysicalParams::new(1.0, 1.0, 0.0),
            source: SourceTerm::Zero,
            stepper: StepperConfig::new(1e-3),
            controller: ControllerSpec::modal(1.0, 2).unwrap(),
            master: d.clone(),
            follower: None,
            horizon: 1.0,
            sample_stride: 1,
        };
        assert!(sc.validate().is_err());
        sc.follower = Some(d);
        sc.validate().unwrap();
        sc.controller = ControllerSpec::volume(1.0, 2).unwrap();
        assert!(sc.validate().is_err());
        sc.controller = ControllerSpec::none();
        sc.system = System::Bnn;
        assert!(sc.validate().is_err(), "k = 0 is invalid for bnn");
    }
}
