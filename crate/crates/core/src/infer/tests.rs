use rand::SeedableRng;

use super::*;
use crate::cbn::tests::{app0, app1, chain_world, radar_world_one_heli, stmt_of, sym, y};
use crate::cbn::{core, log_prob, target_vars, Targets};
use crate::dsl::load_model;
use crate::dsl::tests::corpus;
use crate::value::ObjectId;

fn chain() -> Model {
    load_model(&corpus("chain.oum")).unwrap()
}

fn radar() -> Model {
    load_model(&corpus("radar.oum")).unwrap()
}

#[test]
fn proposal_logprob_matches_hand_computation() {
    let m = chain();
    let targets = Targets::from_model(&m);
    let from = chain_world(&m, 1, 1, None);
    let to = chain_world(&m, 0, 1, Some(1));
    // pick X out of V = {X}, propose 0 (mass .1), then Y(2) = 1 with
    // parent-conditional probability 1
    let lp = proposal_logprob(&m, &from, &to, &app0(&m, "X"), &targets);
    let expect = -(1.0f64).ln() + 0.1f64.ln() + 1.0f64.ln();
    assert!((lp - expect).abs() < 1e-12);
    // no new variables in the reverse direction
    let lp_rev = proposal_logprob(&m, &to, &from, &app0(&m, "X"), &targets);
    let expect_rev = -(2.0f64).ln() + 0.6f64.ln();
    assert!((lp_rev - expect_rev).abs() < 1e-12);
}

#[test]
fn acceptance_ratio_matches_the_fig4_hand_value() {
    let m = chain();
    let targets = Targets::from_model(&m);
    let from = chain_world(&m, 1, 1, None);
    let to = chain_world(&m, 0, 1, Some(1));
    let alpha = acceptance_ratio(&m, &from, &to, &app0(&m, "X"), &targets);
    assert!((alpha - 0.5).abs() < 1e-12, "got {alpha}");
    // the reverse move is always accepted
    let alpha_rev = acceptance_ratio(&m, &to, &from, &app0(&m, "X"), &targets);
    assert!((alpha_rev - 1.0).abs() < 1e-12);
}

#[test]
#[should_panic(expected = "not reachable")]
fn proposal_logprob_rejects_unreachable_pairs() {
    let m = chain();
    let targets = Targets::from_model(&m);
    let from = chain_world(&m, 0, 1, Some(1));
    let mut to = chain_world(&m, 0, 1, Some(0));
    to.set_value(&m, app0(&m, "X"), Value::Int(2));
    // from and to differ on both X and Y(2)
    let _ = proposal_logprob(&m, &from, &to, &app0(&m, "X"), &targets);
}

#[test]
fn gibbs_weights_reproduce_the_candidate_hand_values() {
    let m = chain();
    let targets = Targets::from_model(&m);
    let w0 = chain_world(&m, 0, 1, Some(1));
    let x = app0(&m, "X");
    let tv = target_vars(&m, &w0, &targets);
    let keep = core(&m, &w0, &x, &tv);
    assert_eq!(keep, [y(&m, 1)].into_iter().collect());
    let ups: std::collections::BTreeSet<_> = [y(&m, 1)].into_iter().collect();

    // sigma0 itself: w = p_X(0) * p_Y1 / |V| = .1 * .5 / 2
    let w = gibbs_log_weight(&m, &w0, &targets, &x, &ups).exp();
    assert!((w - 0.025).abs() < 1e-12, "w(sigma0) = {w}");

    // X = 1 drops Y(2): w = .6 * .5 / 1
    let mut rng = ChainRng::seed_from_u64(0);
    let c1 = build_candidate(&m, &w0, &targets, &keep, &x, Value::Int(1), true, &mut rng);
    assert_eq!(c1.world.dump(&m), "X = 1\nY(1) = 1");
    let w1 = gibbs_log_weight(&m, &c1.world, &targets, &x, &ups).exp();
    assert!((w1 - 0.3).abs() < 1e-12, "w(sigma1) = {w1}");

    // X = 2 resamples Y(2) fresh: w = .3 * (1/(3+y)) / 2
    let c2 = build_candidate(&m, &w0, &targets, &keep, &x, Value::Int(2), true, &mut rng);
    assert!(c2.world.contains(&y(&m, 2)));
    let y2 = match c2.world.value(&y(&m, 2)).unwrap() {
        Value::Int(v) => *v,
        _ => unreachable!(),
    };
    let w2 = gibbs_log_weight(&m, &c2.world, &targets, &x, &ups).exp();
    let expect = 0.15 / (3.0 + y2 as f64);
    assert!((w2 - expect).abs() < 1e-12, "w(sigma2) = {w2}");
}

#[test]
fn gibbs_update_installs_one_of_the_candidates_and_never_rejects() {
    let m = chain();
    let targets = Targets::from_model(&m);
    let w0 = chain_world(&m, 0, 1, Some(1));
    let x = app0(&m, "X");
    let dom = finite_domain(&m, &w0, &x).unwrap();
    assert_eq!(dom, vec![Value::Int(0), Value::Int(1), Value::Int(2)]);
    let mut rng = ChainRng::seed_from_u64(11);
    for _ in 0..50 {
        let out = gibbs_update(&m, &w0, &targets, &x, &dom, false, &mut rng);
        let xv = out.world.value(&x).unwrap().clone();
        match xv {
            Value::Int(0) => assert_eq!(out.world.dump(&m), w0.dump(&m)),
            Value::Int(1) => assert_eq!(out.world.dump(&m), "X = 1\nY(1) = 1"),
            Value::Int(2) => {
                assert!(out.world.contains(&y(&m, 2)));
                assert_eq!(out.world.len(), 3);
            }
            other => panic!("unexpected X value {other:?}"),
        }
        check_world_invariants(&m, &out.world, &targets).unwrap();
    }
}

#[test]
fn pickable_vars_exclude_evidence_and_counts() {
    let m = radar();
    let targets = Targets::from_model(&m);
    let w = radar_world_one_heli(&m);
    let picks = pickable_vars(&m, &w, &targets);
    let names: Vec<String> = picks.iter().map(|v| m.display_var(v)).collect();
    assert_eq!(
        names,
        [
            "WingType(Aircraft(WingType=Helicopter)#1)",
            "RotorLength(Aircraft(WingType=Helicopter)#1)",
            "Source(b1)",
            "Source(b2)",
            "Source(b3)",
            "Source(b4)",
            "Source(b5)",
            "Source(b6)"
        ]
    );
}

#[test]
fn noblock_cannot_flip_a_wing_type_with_rotor_pinned() {
    let m = radar();
    let targets = Targets::from_model(&m);
    let w = radar_world_one_heli(&m);
    let air_stmt = stmt_of(&m, "Aircraft", 1);
    let a = Value::Obj(ObjectId::Generated {
        stmt: air_stmt,
        binding: vec![sym(&m, "Helicopter")],
        index: 1,
    });
    let wt = app1(&m, "WingType", a);
    let dom = finite_domain(&m, &w, &wt).unwrap();
    let mut rng = ChainRng::seed_from_u64(3);
    for _ in 0..60 {
        let out = gibbs_update(&m, &w, &targets, &wt, &dom, true, &mut rng);
        assert!(
            !out.changed,
            "the ablation sampler flipped a wing type past a pinned rotor"
        );
    }
    // the full sampler drops RotorLength from the core and can flip
    let mut flipped = false;
    for _ in 0..60 {
        let out = gibbs_update(&m, &w, &targets, &wt, &dom, false, &mut rng);
        if out.changed {
            flipped = true;
            check_world_invariants(&m, &out.world, &targets).unwrap();
        }
    }
    assert!(flipped, "the full sampler should flip occasionally");
}

#[test]
fn birth_then_death_restores_the_world_exactly() {
    let m = radar();
    let w = radar_world_one_heli(&m);
    let air_stmt = stmt_of(&m, "Aircraft", 1);
    let fwp = sym(&m, "FixedWingPlane");
    let num = GroundVar::num(air_stmt, vec![fwp.clone()]);
    let before = log_prob(&m, &w);
    let mut w2 = w.clone();
    let n = w2.count(air_stmt, &[fwp.clone()]).unwrap();
    w2.set_value(&m, num.clone(), Value::Int(n as i64 + 1));
    w2.refresh_structure(&m);
    assert!(log_prob(&m, &w2) < before, "an extra silent plane costs mass");
    w2.set_value(&m, num, Value::Int(n as i64));
    w2.refresh_structure(&m);
    assert_eq!(w2.dump(&m), w.dump(&m));
    assert!((log_prob(&m, &w2) - before).abs() < 1e-12);
}

#[test]
fn death_with_no_spare_object_is_a_rejected_noop() {
    let m = load_model(
        "
type Ball;
type Draw;
random Ball BallDrawn(Draw);
random Boolean Heavy(Ball);
random Boolean Felt(Draw);
guaranteed Draw Draw[2];
#Ball ~ Poisson[1.5];
BallDrawn(d) ~ UniformChoice({Ball b});
Heavy(b) ~ Bernoulli[0.4];
Felt(d) {
  if BallDrawn(d) != null then
    ~TabularCPD[[0.9, 0.1], [0.2, 0.8]](Heavy(BallDrawn(d)))
};
obs Felt(Draw1) = true;
obs Felt(Draw2) = false;
query Heavy(BallDrawn(Draw1));
",
    )
    .unwrap();
    let targets = Targets::from_model(&m);
    let mut state = init_chain(&m, &targets, 7).unwrap();
    // shrink to the minimum: keep proposing deaths until none is eligible
    for _ in 0..200 {
        if let Some(out) = birth_death_update(&m, &state.world, &targets, false, &mut state.rng)
        {
            state.world = out.world;
        }
    }
    let ball_stmt = stmt_of(&m, "Ball", 0);
    let n = state.world.count(ball_stmt, &[]).unwrap();
    let k = state.world.referenced_indices(ball_stmt, &[]).len() as u64;
    assert!(n >= k && k >= 1);
    if n == k {
        // a death proposal now must be a rejected no-op
        for _ in 0..50 {
            if let Some(out) =
                birth_death_update(&m, &state.world, &targets, false, &mut state.rng)
            {
                if !out.accepted && !out.was_birth {
                    assert_eq!(out.world.dump(&m), state.world.dump(&m));
                    return;
                }
                state.world = out.world;
            }
        }
    }
}

#[test]
fn init_chain_produces_a_feasible_minimal_world() {
    let m = chain();
    let targets = Targets::from_model(&m);
    let state = init_chain(&m, &targets, 42).unwrap();
    check_world_invariants(&m, &state.world, &targets).unwrap();
    assert_eq!(state.world.value(&y(&m, 1)), Some(&Value::Int(1)));
}

#[test]
fn init_chain_on_radar_starts_with_false_alarms_only() {
    let m = radar();
    let targets = Targets::from_model(&m);
    let state = init_chain(&m, &targets, 0).unwrap();
    check_world_invariants(&m, &state.world, &targets).unwrap();
    for b in ["b1", "b2", "b3", "b4", "b5", "b6"] {
        assert_eq!(
            state.world.value(&app1(&m, "Source", sym(&m, b))),
            Some(&Value::Null)
        );
    }
    assert!(log_prob(&m, &state.world) > NEG_INF);
}

#[test]
fn init_chain_reports_failure_on_contradictory_evidence() {
    // observing a tabular value with probability zero under every parent
    // configuration
    let m = load_model(
        "
random Boolean A;
random Boolean B;
A ~ Bernoulli[0.5];
B ~ TabularCPD[[1.0, 0.0], [1.0, 0.0]](A);
obs B = true;
query A;
",
    )
    .unwrap();
    let targets = Targets::from_model(&m);
    match init_chain(&m, &targets, 1) {
        Err(InferError::InitFailure { attempts }) => assert_eq!(attempts, 10_000),
        other => panic!("expected initialization failure, got {other:?}"),
    }
}

#[test]
fn run_is_deterministic_per_seed() {
    let m = radar();
    let mut cfg = SamplerConfig::new(SamplerKind::Gibbs, 400, 100, 9);
    cfg.debug_checks = true;
    let a = run(&m, &cfg, &[200, 400]).unwrap();
    let b = run(&m, &cfg, &[200, 400]).unwrap();
    assert_eq!(format!("{:?}", a.estimates), format!("{:?}", b.estimates));
    assert_eq!(
        format!("{:?}", a.checkpoints),
        format!("{:?}", b.checkpoints)
    );
    assert_eq!(a.checkpoints.len(), 2);
}

#[test]
fn all_steps_inside_init_phase_yield_no_samples() {
    let m = chain();
    let mut cfg = SamplerConfig::new(SamplerKind::Gibbs, 10, 0, 5);
    cfg.init_phase = Some(10);
    let out = run(&m, &cfg, &[]).unwrap();
    assert_eq!(out.estimates[0].samples, 0);
    assert!(out.estimates[0].mean().is_none());
}

#[test]
fn invalid_configs_are_rejected() {
    let m = chain();
    let cfg = SamplerConfig::new(SamplerKind::Gibbs, 10, 10, 5);
    assert!(matches!(run(&m, &cfg, &[]), Err(InferError::Config(_))));
    let mut cfg = SamplerConfig::new(SamplerKind::Gibbs, 10, 0, 5);
    cfg.birth_death_rate = 1.0;
    assert!(matches!(run(&m, &cfg, &[]), Err(InferError::Config(_))));
}

#[test]
fn chain_posterior_smoke_with_the_full_sampler() {
    let m = chain();
    let mut cfg = SamplerConfig::new(SamplerKind::Gibbs, 30_000, 500, 123);
    cfg.debug_checks = false;
    let out = run(&m, &cfg, &[]).unwrap();
    let est = &out.estimates[0];
    let p1 = est.probability(&Value::Int(1)).unwrap();
    assert!((p1 - 0.6792).abs() < 0.03, "P(X=1|Y1=1) ~ {p1}");
}

#[test]
fn urn_chain_runs_with_mh_and_birth_death() {
    let m = load_model(&corpus("urn.oum")).unwrap();
    let mut cfg = SamplerConfig::new(SamplerKind::ParentMh, 2_000, 200, 3);
    cfg.debug_checks = true;
    let out = run(&m, &cfg, &[]).unwrap();
    assert!(out.estimates[0].is_numeric());
    let mean = out.estimates[0].mean().unwrap();
    assert!((0.0..100.0).contains(&mean));
    assert!(out.move_stats.birth.proposed + out.move_stats.death.proposed > 0);
}
