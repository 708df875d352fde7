//! Certificate constants and planner outputs against values frozen from the
//! 50-digit evaluation in `oracles/certificates.py`.

#![allow(clippy::excessive_precision)]

use burgers_stab::certificates::{
    bnn_ledger, obe_ledger, plan_gains_bnn, plan_gains_obe, volume_count, BnnFamily, BnnInputs,
    Claim, InequalityConstants, ObeTarget, LAMBDA1,
};
use burgers_stab::{Error, PhysicalParams};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

macro_rules! assert_rel {
    ($a:expr, $b:expr) => {
        assert_rel!($a, $b, 1e-12)
    };
    ($a:expr, $b:expr, $rel:expr) => {{
        let (a, b) = ($a, $b);
        assert!(
            close(a, b, $rel),
            "{} = {a:e}, expected {b:e}",
            stringify!($a)
        );
    }};
}

fn bnn_setup() -> (PhysicalParams, BnnInputs) {
    (
        PhysicalParams::new(0.5, 2.0, 1.0),
        BnnInputs {
            xi: 5.0,
            h0: 0.0,
            h0_sup: 0.0,
        },
    )
}

#[test]
fn obe_ledger_at_unit_parameters() {
    let l = obe_ledger(
        &PhysicalParams::new(1.0, 1.0, 0.0),
        &InequalityConstants::default(),
        0.0,
        1,
    )
    .unwrap();
    let g = |n: &str| l.get(n).unwrap();
    assert_eq!(g("M1"), 2.0);
    assert_eq!(g("M3"), 2.0);
    assert_rel!(g("M2"), 166885.51365019268932);
    assert_rel!(g("M4"), 166885.51365019268932);
    assert_rel!(g("M5"), 15617.696501593013785);
    assert_rel!(g("Q0"), 166886.92786375506241);
}

#[test]
fn obe_planner_feasible_point() {
    let plan = plan_gains_obe(
        &PhysicalParams::new(2.0, 0.5, 0.0),
        &InequalityConstants::default(),
        ObeTarget::L2,
    )
    .unwrap();
    assert_rel!(plan.mu, 0.4845231489511972226, 1e-11);
    assert_eq!(plan.modes, 1);
    assert_eq!(plan.iterations, 12);
    assert_eq!(plan.certified_rate, 2.0);
    let g = |n: &str| plan.ledger.get(n).unwrap();
    assert_eq!(g("M1"), 0.125);
    assert_rel!(g("M2"), 0.0014132657125540803845);
    assert_rel!(g("M3"), 0.15528269680944982641, 1e-11);
    assert_rel!(g("M4"), 0.0028572843646464037292, 1e-11);
    assert_rel!(g("M5"), 0.46145061805079910172, 1e-11);
    assert_rel!(g("Q0"), 0.39494639064240904271, 1e-11);
    assert!(plan.ledger.conditions_met(Claim::ObeL2));
}

#[test]
fn obe_planner_unit_parameters_is_infeasible() {
    let p = PhysicalParams::new(1.0, 1.0, 0.0);
    for (target, bound) in [(ObeTarget::L2, "M5"), (ObeTarget::H1, "Q0")] {
        match plan_gains_obe(&p, &InequalityConstants::default(), target) {
            Err(Error::Infeasible { bound: b, .. }) => assert_eq!(b, bound),
            other => panic!("{other:?}"),
        }
        // also with the larger interpolation constant
        let k = InequalityConstants {
            beta3: 2.0,
            ..Default::default()
        };
        assert!(matches!(
            plan_gains_obe(&p, &k, target),
            Err(Error::Infeasible { .. })
        ));
    }
}

#[test]
fn bnn_ledger_golden() {
    let (p, inp) = bnn_setup();
    let l = bnn_ledger(&p, &InequalityConstants::default(), &inp, 3.0, 1).unwrap();
    let g = |n: &str| l.get(n).unwrap();
    assert_rel!(g("sigma"), 2.5325988997276603453);
    assert_rel!(g("a0"), 2.4674011002723396547);
    assert_rel!(g("H1"), 0.90031631615710606956);
    assert_rel!(g("H2"), 467161.9883810233101, 1e-11);
    assert_rel!(g("H3"), 1.1223169830915870797);
    assert_rel!(g("H4"), 4517149.2969788217625, 1e-11);
    assert_rel!(g("A0"), 89145.960194552179856, 1e-11);
    assert_rel!(g("A1"), 7169.9163097902115399, 1e-11);
    assert_rel!(g("Q1"), 2259017.2586387004871, 1e-11);
}

#[test]
fn bnn_volume_plan_golden() {
    let (p, inp) = bnn_setup();
    let plan = plan_gains_bnn(
        &p,
        &InequalityConstants::default(),
        &inp,
        BnnFamily::VolumeL2,
        None,
    )
    .unwrap();
    assert_rel!(plan.mu, 7172.4489086899392003, 1e-11);
    assert_eq!(plan.modes, 9133);
    assert_rel!(plan.certified_rate, 5.0, 1e-14);
    assert!(
        plan.ledger.conditions_met(Claim::BnnL2Volume),
        "{}",
        plan.ledger
    );

    let k2 = InequalityConstants {
        beta3: 2.0,
        ..Default::default()
    };
    let plan = plan_gains_bnn(&p, &k2, &inp, BnnFamily::VolumeL2, None).unwrap();
    assert_eq!(plan.modes, 94195430);
}

#[test]
fn bnn_modal_plans_are_infeasible() {
    let (p, inp) = bnn_setup();
    for (fam, bound) in [(BnnFamily::ModalL2, "A0"), (BnnFamily::ModalH1, "Q1")] {
        match plan_gains_bnn(&p, &InequalityConstants::default(), &inp, fam, None) {
            Err(Error::Infeasible { bound: b, .. }) => assert_eq!(b, bound),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn volume_count_with_fixed_gain() {
    let p = PhysicalParams::new(1.0, 1.0, 1.0);
    let inp = BnnInputs {
        xi: LAMBDA1 / 2.0 + 1.0,
        h0: 0.0,
        h0_sup: 0.0,
    };
    let plan = plan_gains_bnn(
        &p,
        &InequalityConstants::default(),
        &inp,
        BnnFamily::VolumeL2,
        Some(10.0),
    )
    .unwrap();
    assert_eq!(plan.modes, 7);
    assert_eq!(volume_count(10.0, 1.0).unwrap(), 7);
}

#[test]
fn rate_at_boundary_is_rejected() {
    let p = PhysicalParams::new(0.5, 2.0, 1.0);
    let inp = BnnInputs {
        xi: LAMBDA1 * 0.5 / 2.0,
        h0: 0.0,
        h0_sup: 0.0,
    };
    let r = plan_gains_bnn(
        &p,
        &InequalityConstants::default(),
        &inp,
        BnnFamily::ModalL2,
        None,
    );
    assert!(matches!(r, Err(Error::RateTooSmall { .. })));
}

#[test]
fn ledgers_are_deterministic_and_consistent() {
    let (p, inp) = bnn_setup();
    let k = InequalityConstants::default();
    let a = bnn_ledger(&p, &k, &inp, 12.5, 7).unwrap();
    let b = bnn_ledger(&p, &k, &inp, 12.5, 7).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.is_consistent());
    let o = obe_ledger(&PhysicalParams::new(0.3, 2.0, 0.0), &k, 4.0, 3).unwrap();
    assert!(o.is_consistent());
    assert!(o.get("M1").unwrap() >= 0.0);
}

#[test]
fn rate_ordering() {
    for nu in [0.2, 1.0, 3.0] {
        let l = obe_ledger(
            &PhysicalParams::new(nu, 1.0, 0.0),
            &InequalityConstants::default(),
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(l.certified_rate(Claim::ObeL2), Some(nu));
    }
}

#[test]
fn report_names_every_condition_and_correction() {
    let (p, inp) = bnn_setup();
    let l = bnn_ledger(&p, &InequalityConstants::default(), &inp, 3.0, 2).unwrap();
    let r = l.report();
    for c in &l.conditions {
        assert!(r.contains(&c.name));
    }
    assert!(r.contains("corrections applied"));
    let back: burgers_stab::CertificateLedger = serde_json::from_str(&l.to_json()).unwrap();
    assert_eq!(back, l);
}
