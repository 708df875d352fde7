//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use burgers_stab::analysis::{inequality_ensemble, Quantity};
use burgers_stab::certificates::{
    bnn_ledger, obe_ledger, plan_gains_bnn, plan_gains_obe, BnnFamily, ObeTarget, Plan, LAMBDA1,
};
use burgers_stab::config::{run, Preset, RunOutcome};
use burgers_stab::dynamics::{
    mms_exact, simulate, AnalyticSource, BnnState, InitialData, Stepper, SystemKind,
};
use burgers_stab::{
    BnnInputs, Channel, ControllerSpec, Error, GridField, GridSpec, InequalityConstants,
    PhysicalParams, RunConfig, Scenario, Scheme, SourceTerm, StepperConfig, System,
};
use serde_json::{json, Value};

type Planner<'a> = Box<dyn Fn(f64) -> Result<Plan, Error> + 'a>;
type Criterion = (u32, fn() -> Outcome, u64);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(v: Value) -> RunConfig {
    RunConfig::from_json(&v.to_string(), None).expect("acceptance config")
}

fn obe_setup(controller: Value, target: &str) -> Value {
    json!({
        "schema": 1,
        "system": "obe-controlled",
        "physical": {"nu": 1.0, "R": 1.0},
        "initial": {"preset": "bump", "amplitude": 0.5},
        "follower": {"perturbation": {"preset": "random", "amplitude": 0.5}},
        "grid": {"points": 256},
        "stepper": {"dt": 5e-4},
        "controller": controller,
        "planner": {"target": target},
        "horizon": 15.0,
        "sample_stride": 10,
        "seed": 2024
    })
}

fn bnn_setup(system: &str, controller: Value) -> Value {
    json!({
        "schema": 1,
        "system": system,
        "physical": {"nu": 0.5, "R": 2.0, "k": 1.0},
        "initial": {"preset": "bump", "amplitude": 0.5},
        "follower": {"perturbation": {"preset": "random", "amplitude": 0.5}},
        "grid": {"points": 256},
        "stepper": {"dt": 5e-4},
        "controller": controller,
        "planner": {"xi": 5.0, "family": "modal-l2"},
        "horizon": 5.0,
        "sample_stride": 10,
        "seed": 2024
    })
}

fn describe_fit(out: &RunOutcome, threshold: f64) -> Outcome {
    let Some(a) = &out.analysis else {
        return outcome(false, "no analysis produced");
    };
    if let Some(e) = &out.simulation.divergence {
        return outcome(false, format!("simulation diverged: {e}"));
    }
    match (&a.fit, &a.fit_error) {
        (Some(f), _) => outcome(
            f.rate >= threshold,
            format!(
                "fitted rate {:.4} over [{:.3}, {:.3}] ({} samples), need >= {threshold:.4}",
                f.rate, f.window.0, f.window.1, f.samples
            ),
        ),
        (None, Some(e)) => outcome(false, format!("fit failed: {e}")),
        (None, None) => outcome(false, "fit failed"),
    }
}

fn criterion_1() -> Outcome {
    let g = GridSpec::new(512).unwrap();
    let r = inequality_ensemble(42, 1000, 20, &InequalityConstants::default(), g).unwrap();
    outcome(
        r.passed(),
        format!(
            "{} fields, {} checks, {} violations",
            r.count,
            r.checks,
            r.violations.len()
        ),
    )
}

fn planned_obe(target: &str, claim_threshold: impl Fn(&RunOutcome) -> f64) -> Outcome {
    match run(&config(obe_setup(json!("auto"), target))) {
        Ok(out) => {
            let threshold = claim_threshold(&out);
            describe_fit(&out, threshold)
        }
        Err(e @ Error::Infeasible { .. }) => outcome(false, format!("planner gave no gains: {e}")),
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn criterion_2() -> Outcome {
    // d2 = nu min(1, lambda1) = 1
    planned_obe("l2", |_| 0.9)
}

fn criterion_3() -> Outcome {
    planned_obe("h1", |out| {
        let rate = out
            .certification
            .ledger
            .as_ref()
            .and_then(|l| l.get("alpha0"))
            .unwrap_or(f64::INFINITY);
        0.9 * rate
    })
}

fn criterion_4() -> Outcome {
    match run(&config(bnn_setup("bnn-controlled-modal", json!("auto")))) {
        Ok(out) => describe_fit(&out, 0.9 * 5.0),
        Err(e) => outcome(false, format!("planner gave no gains: {e}")),
    }
}

fn criterion_5() -> Outcome {
    let p = PhysicalParams::new(0.5, 2.0, 1.0);
    let inp = BnnInputs {
        xi: 5.0,
        h0: 0.0,
        h0_sup: 0.0,
    };
    let plan = match plan_gains_bnn(
        &p,
        &InequalityConstants::default(),
        &inp,
        BnnFamily::VolumeL2,
        None,
    ) {
        Ok(plan) => plan,
        Err(e) => return outcome(false, format!("planner gave no gains: {e}")),
    };
    // four nodes per volume element; dt then defaults to a quarter spacing
    let mut v = bnn_setup("bnn-controlled-volume", json!("auto"));
    v["grid"]["points"] = json!(4 * plan.modes);
    v["stepper"] = json!({});
    v["horizon"] = json!(0.01);
    v["planner"] = json!({"xi": 5.0});
    let out = match run(&config(v)) {
        Ok(out) => out,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let l = out.certification.ledger.as_ref().unwrap();
    let target = l.get("sigma").unwrap() + l.get("a0").unwrap();
    let mut o = describe_fit(&out, 0.9 * target);
    o.detail = format!(
        "mu {:.2}, N {}, M {}; {}",
        plan.mu,
        plan.modes,
        4 * plan.modes,
        o.detail
    );
    o
}

fn criterion_6() -> Outcome {
    let v = bnn_setup(
        "bnn-controlled-modal",
        json!({"family": "modal", "mu": 0.0, "count": 1}),
    );
    let out = match run(&config(v)) {
        Ok(out) => out,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let a = out.analysis.as_ref().unwrap();
    match &a.fit {
        Some(f) if f.rate > 0.0 => outcome(
            f.rate < 2.5,
            format!(
                "uncontrolled error decays at {:.4}; contrast needs < 2.5 or no decay",
                f.rate
            ),
        ),
        Some(f) => outcome(true, format!("no decay (fitted rate {:.4})", f.rate)),
        None => outcome(
            true,
            format!(
                "no decay ({})",
                a.fit_error.as_deref().unwrap_or("fit failed")
            ),
        ),
    }
}

fn mms_solution(m: usize, dt: f64, horizon: f64) -> GridField {
    let g = GridSpec::new(m).unwrap();
    let p = PhysicalParams::new(0.5, 1.0, 1.0);
    let mut cfg = StepperConfig::new(dt);
    cfg.scheme = Scheme::ImexCnAb2;
    cfg.check_cfl = false;
    let mut st = Stepper::new(SystemKind::Bnn, p, cfg, g).unwrap();
    let src = SourceTerm::Analytic {
        id: AnalyticSource::Mms,
    };
    let n = (horizon / dt).round() as usize;
    let mut s = BnnState {
        t: 0.0,
        v: mms_exact(0.0, g),
    };
    for i in 0..n {
        s = st.step_bnn(&s, &src, None).unwrap();
        s.t = (i + 1) as f64 * dt;
    }
    s.v
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = (
        x.iter().map(|v| v.ln()).collect(),
        y.iter().map(|v| v.ln()).collect(),
    );
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_7() -> Outcome {
    let horizon = 0.1;
    let ms = [64, 128, 256, 512];
    let mut h = Vec::new();
    let mut err = Vec::new();
    for &m in &ms {
        let g = GridSpec::new(m).unwrap();
        let e = mms_solution(m, 1e-5, horizon)
            .sub(&mms_exact(horizon, g))
            .unwrap();
        h.push(g.spacing());
        err.push(e.l2_norm());
    }
    let p_space = slope(&h, &err);

    let horizon = 0.2;
    let dts = [4e-3, 2e-3, 1e-3];
    let reference = mms_solution(512, 1e-3 / 16.0, horizon);
    let terr: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            mms_solution(512, dt, horizon)
                .sub(&reference)
                .unwrap()
                .l2_norm()
        })
        .collect();
    let p_time = slope(&dts, &terr);
    outcome(
        (p_space - 2.0).abs() <= 0.2 && p_time >= 1.5,
        format!(
            "spatial order {p_space:.3} (errors {}), temporal order {p_time:.3} (errors {})",
            sci(&err),
            sci(&terr)
        ),
    )
}

fn criterion_8() -> Outcome {
    let g = GridSpec::new(64).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
    let v0 = burgers_stab::config::sample_preset(Preset::Bump, 0.5, g, &mut rng).unwrap();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for system in System::ALL {
        let (params, controller) = match system {
            System::Obe => (PhysicalParams::new(1.0, 1.0, 0.0), ControllerSpec::none()),
            System::ObeControlled => (
                PhysicalParams::new(1.0, 1.0, 0.0),
                ControllerSpec::modal(10.0, 4).unwrap(),
            ),
            System::Bnn => (PhysicalParams::new(0.5, 2.0, 1.0), ControllerSpec::none()),
            System::BnnControlledModal => (
                PhysicalParams::new(0.5, 2.0, 1.0),
                ControllerSpec::modal(10.0, 4).unwrap(),
            ),
            System::BnnControlledVolume => (
                PhysicalParams::new(0.5, 2.0, 1.0),
                ControllerSpec::volume(10.0, 4).unwrap(),
            ),
        };
        let sc = Scenario {
            system,
            params,
            source: SourceTerm::Zero,
            stepper: StepperConfig::new(1e-3),
            controller,
            master: InitialData {
                v: v0.clone(),
                u: 0.0,
            },
            follower: Some(InitialData {
                v: v0.clone(),
                u: 0.0,
            }),
            horizon: 10.0,
            sample_stride: 1,
        };
        match simulate(&sc) {
            Ok(sim) if sim.divergence.is_none() => {
                let m = sim
                    .trace
                    .column(Channel::L2Z)
                    .unwrap()
                    .iter()
                    .fold(0.0f64, |a, &b| a.max(b));
                worst = worst.max(m);
                if m > 1e-10 {
                    failures.push(format!("{}: {m:e}", system.name()));
                }
            }
            Ok(sim) => failures.push(format!("{}: {}", system.name(), sim.divergence.unwrap())),
            Err(e) => failures.push(format!("{}: {e}", system.name())),
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("max ||z|| over five systems {worst:e}")
        } else {
            failures.join("; ")
        },
    )
}

fn modes_or_inf(p: &Result<Plan, Error>) -> (f64, f64) {
    match p {
        Ok(p) => (p.mu, p.modes as f64),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    }
}

fn criterion_9() -> Outcome {
    let k = InequalityConstants::default();
    let nus: Vec<f64> = (0..5).map(|i| 0.2 + 0.45 * i as f64).collect();
    let rs: Vec<f64> = (0..5).map(|i| 0.5 + 0.875 * i as f64).collect();
    let mut problems = Vec::new();
    let mut feasible = 0;
    let mut total = 0;
    for &nu in &nus {
        let inp = BnnInputs {
            xi: LAMBDA1 * nu / 2.0 + 1.0,
            h0: 0.0,
            h0_sup: 0.0,
        };
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        let planners: Vec<(&str, Planner)> = vec![
            (
                "obe-l2",
                Box::new(|r| plan_gains_obe(&PhysicalParams::new(nu, r, 0.0), &k, ObeTarget::L2)),
            ),
            (
                "obe-h1",
                Box::new(|r| plan_gains_obe(&PhysicalParams::new(nu, r, 0.0), &k, ObeTarget::H1)),
            ),
            (
                "bnn-modal-l2",
                Box::new(|r| {
                    plan_gains_bnn(
                        &PhysicalParams::new(nu, r, 1.0),
                        &k,
                        &inp,
                        BnnFamily::ModalL2,
                        None,
                    )
                }),
            ),
            (
                "bnn-modal-h1",
                Box::new(|r| {
                    plan_gains_bnn(
                        &PhysicalParams::new(nu, r, 1.0),
                        &k,
                        &inp,
                        BnnFamily::ModalH1,
                        None,
                    )
                }),
            ),
            (
                "bnn-volume-l2",
                Box::new(|r| {
                    plan_gains_bnn(
                        &PhysicalParams::new(nu, r, 1.0),
                        &k,
                        &inp,
                        BnnFamily::VolumeL2,
                        None,
                    )
                }),
            ),
        ];
        for (name, planner) in &planners {
            let mut points = Vec::new();
            for &r in &rs {
                total += 1;
                let plan = planner(r);
                if let Ok(p) = &plan {
                    feasible += 1;
                    let replay = if name.starts_with("obe") {
                        obe_ledger(&PhysicalParams::new(nu, r, 0.0), &k, p.mu, p.modes)
                    } else {
                        bnn_ledger(&PhysicalParams::new(nu, r, 1.0), &k, &inp, p.mu, p.modes)
                    };
                    match replay {
                        Ok(l) if l.conditions_met(p.claim) => {}
                        Ok(l) => problems.push(format!(
                            "{name} nu={nu} R={r}: replay fails {:?}",
                            l.failed_conditions(p.claim)
                        )),
                        Err(e) => problems.push(format!("{name} nu={nu} R={r}: replay error {e}")),
                    }
                }
                points.push(modes_or_inf(&plan));
            }
            series.push((name.to_string(), points));
        }
        for (name, pts) in series {
            for (i, w) in pts.windows(2).enumerate() {
                if w[1].0 < w[0].0 || w[1].1 < w[0].1 {
                    problems.push(format!(
                        "{name} nu={nu}: (mu, N) drops from {:?} at R={} to {:?} at R={}",
                        w[0],
                        rs[i],
                        w[1],
                        rs[i + 1]
                    ));
                }
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{feasible}/{total} planner calls feasible, all replay, all monotone in R")
        } else {
            problems.join("; ")
        },
    )
}

fn criterion_10() -> Outcome {
    // no feasible plan exists for the criterion-2 parameters, so a fixed gain
    // stands in for the planner output
    let cfg = config(obe_setup(
        json!({"family": "modal", "mu": 20.0, "count": 4}),
        "l2",
    ));
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    let (ca, cb) = (
        a.simulation.trace.to_csv_string(),
        b.simulation.trace.to_csv_string(),
    );
    let rate = a
        .analysis
        .as_ref()
        .and_then(|x| x.fit)
        .map_or("none".to_string(), |f| format!("{:.4}", f.rate));
    let z = Quantity::ObeL2
        .evaluate(&a.simulation.trace)
        .map(|v| v.len())
        .unwrap_or(0);
    outcome(
        ca == cb && !ca.is_empty(),
        format!(
            "criterion-2 setup at mu 20, N 4: {} rows, {} bytes, identical: {}; fitted rate {rate}",
            z,
            ca.len(),
            ca == cb
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, criterion_1, 10),
        (2, criterion_2, 60),
        (3, criterion_3, 60),
        (4, criterion_4, 60),
        (5, criterion_5, 60),
        (6, criterion_6, 60),
        (7, criterion_7, 600),
        (8, criterion_8, 600),
        (9, criterion_9, 600),
        (10, criterion_10, 600),
    ];
    let mut failed = 0;
    for (n, f, budget) in criteria {
        let start = Instant::now();
        let mut o = f();
        let elapsed = start.elapsed();
        if elapsed > Duration::from_secs(budget) {
            o.pass = false;
            o.detail = format!("{}; over the {budget} s budget", o.detail);
        }
        println!(
            "{} criterion {n}: {} [{:.2} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
