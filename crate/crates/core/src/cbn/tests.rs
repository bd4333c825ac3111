use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::cbn::*;
use crate::dist::{Distribution, NEG_INF};
use crate::dsl::load_model;
use crate::dsl::tests::corpus;
use crate::model::Model;
use crate::value::{GroundVar, ObjectId, StmtId, Value};

fn chain() -> Model {
    load_model(&corpus("chain.oum")).unwrap()
}

fn radar() -> Model {
    load_model(&corpus("radar.oum")).unwrap()
}

fn smallnet() -> Model {
    load_model(&corpus("smallnet.oum")).unwrap()
}

// Closed-universe single-aircraft model: WingType is an ordinary random
// variable here, so the switching structure can be probed without objects.
fn example1() -> Model {
    load_model(
        "
type AircraftType;
type Length;
guaranteed AircraftType Helicopter, FixedWingPlane;
guaranteed Length Short, Long;
random AircraftType WingType;
random Length RotorLength;
random Boolean BladeFlash;
WingType ~ Categorical[0.5, 0.5];
RotorLength { if WingType = Helicopter then ~TabularCPD[[0.4, 0.6]] };
BladeFlash {
  if WingType = Helicopter then
    ~TabularCPD[[0.9, 0.1], [0.6, 0.4]](RotorLength)
  else
    ~Bernoulli[0.1]
};
obs BladeFlash = true;
query WingType;
",
    )
    .unwrap()
}

pub fn app0(m: &Model, f: &str) -> GroundVar {
    GroundVar::app(m.func_id_by_name(f).unwrap(), vec![])
}

pub fn app1(m: &Model, f: &str, arg: Value) -> GroundVar {
    GroundVar::app(m.func_id_by_name(f).unwrap(), vec![arg])
}

pub fn sym(m: &Model, name: &str) -> Value {
    let sid = m
        .symbols
        .iter()
        .position(|s| s == name)
        .unwrap_or_else(|| panic!("symbol {name}"));
    let sid = crate::value::SymbolId(sid as u32);
    // guaranteed lists tell us the owner type; evidence symbols live in
    // set_evidence
    for (ti, t) in m.types.iter().enumerate() {
        if t.guaranteed.contains(&sid) {
            return Value::Obj(ObjectId::Guaranteed {
                ty: crate::value::TypeId(ti as u32),
                sym: sid,
            });
        }
    }
    for se in &m.set_evidence {
        if se.symbols.contains(&sid) {
            return Value::Obj(ObjectId::Evidence { ty: se.ty, sym: sid });
        }
    }
    panic!("symbol {name} has no owner");
}

/// The statement generating `ty_name` with `n_origins` origin functions.
pub fn stmt_of(m: &Model, ty_name: &str, n_origins: usize) -> StmtId {
    let ty = m.type_id_by_name(ty_name).unwrap();
    for s in &m.ty(ty).stmts {
        if m.stmt(*s).origins.len() == n_origins {
            return *s;
        }
    }
    panic!("no statement for {ty_name} with {n_origins} origins");
}

pub fn y(m: &Model, i: i64) -> GroundVar {
    app1(m, "Y", Value::Int(i))
}

/// chain world [X=x, Y(1)=y1] plus optional Y(2).
pub fn chain_world(m: &Model, x: i64, y1: i64, y2: Option<i64>) -> PartialWorld {
    let mut w = PartialWorld::new();
    w.set_value(m, app0(m, "X"), Value::Int(x));
    if let Some(v) = y2 {
        w.set_value(m, y(m, 2), Value::Int(v));
    }
    w.set_value(m, y(m, 1), Value::Int(y1));
    w
}

#[test]
fn example1_trace_and_support() {
    let m = example1();
    let mut w = PartialWorld::new();
    w.set_value(&m, app0(&m, "WingType"), sym(&m, "FixedWingPlane"));
    w.set_value(&m, app0(&m, "BladeFlash"), Value::Bool(true));
    let t = eval_tree(&m, &w, &app0(&m, "BladeFlash"));
    assert!(t.supported());
    assert_eq!(t.refs, vec![app0(&m, "WingType")]);
    assert!(t.guard_refs.contains(&app0(&m, "WingType")));
    assert!(supports(&m, &w, &app0(&m, "BladeFlash")));

    let mut w2 = PartialWorld::new();
    w2.set_value(&m, app0(&m, "WingType"), sym(&m, "Helicopter"));
    let t2 = eval_tree(&m, &w2, &app0(&m, "BladeFlash"));
    assert_eq!(
        t2.result,
        TraceResult::Unsupported(app0(&m, "RotorLength"))
    );
    assert!(!supports(&m, &w2, &app0(&m, "BladeFlash")));
}

#[test]
fn root_variable_has_empty_refs() {
    let m = chain();
    let w = PartialWorld::new();
    let t = eval_tree(&m, &w, &app0(&m, "X"));
    assert!(t.refs.is_empty());
    match t.dist().unwrap() {
        Distribution::Categorical(items) => {
            assert_eq!(items.len(), 3);
            assert!((items[1].1 - 0.6).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    assert!(supports(&m, &w, &app0(&m, "X")), "no parents");
}

#[test]
fn log_prob_matches_hand_computation_on_chain_worlds() {
    let m = chain();
    let w = chain_world(&m, 1, 1, None);
    assert!((log_prob(&m, &w) - (0.6f64.ln() + 0.5f64.ln())).abs() < 1e-12);

    let w2 = chain_world(&m, 0, 1, Some(1));
    let expect = 0.1f64.ln() + 0.5f64.ln() + 1.0f64.ln();
    assert!((log_prob(&m, &w2) - expect).abs() < 1e-12);

    let empty = PartialWorld::new();
    assert_eq!(log_prob(&m, &empty), 0.0);
}

#[test]
#[should_panic(expected = "self-supporting")]
fn log_prob_rejects_non_self_supporting_worlds() {
    let m = chain();
    let mut w = PartialWorld::new();
    // Y(1) with X missing
    w.set_value(&m, y(&m, 1), Value::Int(1));
    let _ = log_prob(&m, &w);
}

#[test]
fn children_come_from_the_inverse_reference_relation() {
    let m = chain();
    let w = chain_world(&m, 0, 1, Some(1));
    let x = app0(&m, "X");
    assert_eq!(
        children(&m, &w, &x),
        [y(&m, 1), y(&m, 2)].into_iter().collect()
    );
    assert!(children(&m, &w, &y(&m, 1)).is_empty());
}

#[test]
fn example1_children_of_wingtype() {
    let m = example1();
    let mut w = PartialWorld::new();
    w.set_value(&m, app0(&m, "WingType"), sym(&m, "Helicopter"));
    w.set_value(&m, app0(&m, "RotorLength"), sym(&m, "Long"));
    w.set_value(&m, app0(&m, "BladeFlash"), Value::Bool(true));
    assert_eq!(
        children(&m, &w, &app0(&m, "WingType")),
        [app0(&m, "RotorLength"), app0(&m, "BladeFlash")]
            .into_iter()
            .collect()
    );
    assert!(is_switching_parent(
        &w,
        &app0(&m, "WingType"),
        &app0(&m, "BladeFlash")
    ));
    assert!(!is_switching_parent(
        &w,
        &app0(&m, "RotorLength"),
        &app0(&m, "BladeFlash")
    ));
    assert!(!is_switching_parent(
        &w,
        &app0(&m, "WingType"),
        &app0(&m, "WingType")
    ));
    assert!(is_switching_var(&w, &app0(&m, "WingType")));
    assert!(!is_switching_var(&w, &app0(&m, "RotorLength")));
}

#[test]
fn edge_contingency_on_the_chain() {
    let m = chain();
    let w = chain_world(&m, 0, 1, Some(1));
    let x = app0(&m, "X");
    // Y(1) refs [X, Y(2)]: the Y(2) -> Y(1) edge is contingent on X
    assert!(is_edge_contingent(&w, &y(&m, 1), &y(&m, 2), &x));
    // the X -> Y(1) edge is not contingent on X
    assert!(!is_edge_contingent(&w, &y(&m, 1), &x, &x));
    // contingency on something never referenced
    assert!(!is_edge_contingent(&w, &y(&m, 1), &y(&m, 2), &y(&m, 1)));
}

#[test]
fn core_and_upsilon_on_the_chain() {
    let m = chain();
    let w = chain_world(&m, 0, 1, Some(1));
    let x = app0(&m, "X");
    let targets = [y(&m, 1)].into_iter().collect();
    let c = core(&m, &w, &x, &targets);
    assert_eq!(c, [y(&m, 1)].into_iter().collect());
    let u = upsilon(&m, &w, &x, &targets);
    assert_eq!(u, [y(&m, 1)].into_iter().collect());
    // ancestors stay in the core: X is in core(sigma, Y(2))
    let c2 = core(&m, &w, &y(&m, 2), &targets);
    assert!(c2.contains(&x));
}

#[test]
fn core_of_a_non_switching_variable_is_everything_else() {
    let m = smallnet();
    let mut w = PartialWorld::new();
    w.set_value(&m, app0(&m, "Cloudy"), Value::Bool(true));
    w.set_value(&m, app0(&m, "Sprinkler"), Value::Bool(false));
    w.set_value(&m, app0(&m, "Rain"), Value::Bool(true));
    w.set_value(&m, app0(&m, "WetGrass"), Value::Bool(true));
    let targets = [
        app0(&m, "WetGrass"),
        app0(&m, "Cloudy"),
        app0(&m, "Rain"),
    ]
    .into_iter()
    .collect();
    for name in ["Cloudy", "Sprinkler", "Rain"] {
        let x = app0(&m, name);
        let c = core(&m, &w, &x, &targets);
        let everything_else: std::collections::BTreeSet<_> =
            w.vars().filter(|v| **v != x).cloned().collect();
        assert_eq!(c, everything_else, "core of {name}");
        assert_eq!(
            upsilon(&m, &w, &x, &targets),
            children(&m, &w, &x),
            "upsilon of {name}"
        );
    }
}

#[test]
fn finite_domain_of_radar_variables() {
    let m = radar();
    let air_stmt = stmt_of(&m, "Aircraft", 1);
    let heli = sym(&m, "Helicopter");
    let a = ObjectId::Generated {
        stmt: air_stmt,
        binding: vec![heli.clone()],
        index: 1,
    };
    let w = radar_world_one_heli(&m);
    let wt = app1(&m, "WingType", Value::Obj(a.clone()));
    let dom = finite_domain(&m, &w, &wt).unwrap();
    assert_eq!(dom, vec![sym(&m, "Helicopter"), sym(&m, "FixedWingPlane")]);
    let rl = app1(&m, "RotorLength", Value::Obj(a));
    let dom = finite_domain(&m, &w, &rl).unwrap();
    let mut names: Vec<String> = dom.iter().map(|v| m.display_value(v)).collect();
    names.sort();
    assert_eq!(names, ["Long", "Short", "null"]);
    // number variables are never enumerated
    let nv = GroundVar::num(air_stmt, vec![sym(&m, "Helicopter")]);
    assert!(finite_domain(&m, &w, &nv).is_none());
    // the labeling variable of b2 ranges over null, the referenced
    // helicopter, and one fresh spare per wing type with spares
    let source_b2 = app1(&m, "Source", sym(&m, "b2"));
    let dom = finite_domain(&m, &w, &source_b2).unwrap();
    let names: Vec<String> = dom.iter().map(|v| m.display_value(v)).collect();
    assert_eq!(
        names,
        [
            "null",
            "Aircraft(WingType=Helicopter)#1",
            "Aircraft(WingType=Helicopter)#2",
            "Aircraft(WingType=FixedWingPlane)#1"
        ]
    );
}

/// Radar world: two helicopters (one with blip b1, rotor Short), one spare
/// fixed-wing plane, blips b2..b6 false alarms.
pub fn radar_world_one_heli(m: &Model) -> PartialWorld {
    let mut w = PartialWorld::new();
    let air_stmt = stmt_of(m, "Aircraft", 1);
    let blip_fa = stmt_of(m, "Blip", 0);
    let blip_src = stmt_of(m, "Blip", 1);
    let heli = sym(m, "Helicopter");
    let fwp = sym(m, "FixedWingPlane");
    let a = Value::Obj(ObjectId::Generated {
        stmt: air_stmt,
        binding: vec![heli.clone()],
        index: 1,
    });
    w.set_value(m, GroundVar::num(air_stmt, vec![heli.clone()]), Value::Int(2));
    w.set_value(m, GroundVar::num(air_stmt, vec![fwp.clone()]), Value::Int(1));
    w.set_value(m, GroundVar::num(blip_fa, vec![]), Value::Int(5));
    w.set_value(m, GroundVar::num(blip_src, vec![a.clone()]), Value::Int(1));
    w.set_value(m, app1(m, "Source", sym(m, "b1")), a.clone());
    for b in ["b2", "b3", "b4", "b5", "b6"] {
        w.set_value(m, app1(m, "Source", sym(m, b)), Value::Null);
    }
    w.set_value(m, app1(m, "WingType", a.clone()), heli);
    w.set_value(m, app1(m, "RotorLength", a.clone()), sym(m, "Short"));
    w.set_value(m, app1(m, "BladeFlash", sym(m, "b1")), Value::Bool(true));
    for b in ["b2", "b3", "b4", "b5", "b6"] {
        w.set_value(m, app1(m, "BladeFlash", sym(m, b)), Value::Bool(false));
    }
    w
}

#[test]
fn radar_world_log_prob_matches_hand_computation() {
    let m = radar();
    let w = radar_world_one_heli(&m);
    assert!(w.is_self_supporting());
    w.check_coherence(&m).unwrap();

    let pois = |rate: f64, k: u64| crate::dist::poisson_ln_pmf(rate, k);
    // counts: 2 helicopters (one with the blip, one spare), 1 spare plane
    let expect = pois(1.0, 2)      // #Aircraft(H) = 2
        + pois(4.0, 1)             // #Aircraft(F) = 1
        + pois(2.0, 5)             // 5 false alarms
        + pois(1.0, 1)             // blip group of the referenced helicopter
        + pois(1.0, 0)             // spare helicopter has no blips
        + pois(1.0, 0)             // spare plane has no blips
        + 0.4f64.ln()              // RotorLength = Short
        + 0.1f64.ln()              // BladeFlash(b1) = true given Short
        + 5.0 * 0.99f64.ln()       // five quiet false alarms
        + (120.0f64 / 720.0).ln()  // labeling: 5! 1! / 6!
        + 2.0f64.ln(); // index multiplicity: the referenced helicopter is one of 2
    assert!(
        (log_prob(&m, &w) - expect).abs() < 1e-10,
        "got {} want {expect}",
        log_prob(&m, &w)
    );
}

#[test]
fn radar_trace_structure_and_core_drops_rotor_on_wingtype_flip() {
    let m = radar();
    let w = radar_world_one_heli(&m);
    let air_stmt = stmt_of(&m, "Aircraft", 1);
    let a = Value::Obj(ObjectId::Generated {
        stmt: air_stmt,
        binding: vec![sym(&m, "Helicopter")],
        index: 1,
    });
    let bf1 = app1(&m, "BladeFlash", sym(&m, "b1"));
    let wt = app1(&m, "WingType", a.clone());
    let rl = app1(&m, "RotorLength", a.clone());
    let src1 = app1(&m, "Source", sym(&m, "b1"));
    let t = w.trace(&bf1).unwrap();
    assert_eq!(t.refs, vec![src1.clone(), wt.clone(), rl.clone()]);
    assert!(t.guard_refs.contains(&src1));
    assert!(t.guard_refs.contains(&wt));
    assert!(!t.guard_refs.contains(&rl));

    assert_eq!(
        children(&m, &w, &wt),
        [rl.clone(), bf1.clone()].into_iter().collect()
    );
    let targets = Targets::from_model(&m);
    let tv = target_vars(&m, &w, &targets);
    let c = core(&m, &w, &wt, &tv);
    assert!(!c.contains(&rl), "RotorLength must drop from the core");
    assert!(c.contains(&bf1));
    assert_eq!(
        upsilon(&m, &w, &wt, &tv),
        [bf1].into_iter().collect()
    );
}

#[test]
fn prune_removes_unsupported_rotor_length() {
    let m = example1();
    let mut w = PartialWorld::new();
    w.set_value(&m, app0(&m, "WingType"), sym(&m, "FixedWingPlane"));
    w.set_value(&m, app0(&m, "RotorLength"), Value::Null);
    w.set_value(&m, app0(&m, "BladeFlash"), Value::Bool(true));
    let targets = Targets::from_model(&m);
    prune(&m, &mut w, &targets);
    assert!(!w.contains(&app0(&m, "RotorLength")));
    assert!(w.contains(&app0(&m, "WingType")));
    let before = w.dump(&m);
    prune(&m, &mut w, &targets);
    assert_eq!(before, w.dump(&m), "prune is idempotent");
}

#[test]
fn extend_to_minimal_is_a_fixed_point_on_minimal_worlds() {
    let m = chain();
    let mut w = chain_world(&m, 1, 1, None);
    let targets = Targets::from_model(&m);
    let before = w.dump(&m);
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let lp = extend_to_minimal(&m, &mut w, &targets, &mut rng);
    assert_eq!(lp, 0.0);
    assert_eq!(w.dump(&m), before);
}

#[test]
fn extend_samples_the_missing_tail_variable() {
    let m = chain();
    let targets = Targets::from_model(&m);
    // core(sigma0, X) = {Y(1)}; flip X to 2 and rebuild
    let mut w = PartialWorld::new();
    w.set_value(&m, app0(&m, "X"), Value::Int(2));
    w.set_value(&m, y(&m, 1), Value::Int(1));
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let lp = extend_to_minimal(&m, &mut w, &targets, &mut rng);
    assert!(w.contains(&y(&m, 2)), "Y(2) supports Y(1) when X = 2");
    let y2 = match w.value(&y(&m, 2)).unwrap() {
        Value::Int(v) => *v,
        _ => unreachable!(),
    };
    // Bernoulli(1/3) sampling probability
    let expect = if y2 == 1 {
        (1.0f64 / 3.0).ln()
    } else {
        (2.0f64 / 3.0).ln()
    };
    assert!((lp - expect).abs() < 1e-12);
    check_world_invariants(&m, &w, &targets).unwrap();
}

#[test]
fn extend_from_y1_and_x1_needs_nothing() {
    let m = chain();
    let mut w = chain_world(&m, 1, 1, None);
    let targets = Targets::from_model(&m);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let lp = extend_to_minimal(&m, &mut w, &targets, &mut rng);
    assert_eq!(lp, 0.0);
    assert_eq!(w.len(), 2);
}

#[test]
fn dump_is_sorted_and_stable() {
    let m = chain();
    let w = chain_world(&m, 0, 1, Some(1));
    assert_eq!(w.dump(&m), "X = 0\nY(1) = 1\nY(2) = 1");
}

#[test]
fn log_prob_is_additive_over_recomputed_conditionals() {
    let m = radar();
    let w = radar_world_one_heli(&m);
    let mut total = struct_log(&m, &w);
    for (var, value) in w.entries() {
        let t = eval_tree(&m, &w, var);
        total += t.dist().unwrap().log_density(value);
    }
    assert!((total - log_prob(&m, &w)).abs() < 1e-12);
}

#[test]
fn infeasible_world_has_zero_probability() {
    let m = example1();
    let mut w = PartialWorld::new();
    // null rotor length under a helicopter wing is impossible
    w.set_value(&m, app0(&m, "WingType"), sym(&m, "Helicopter"));
    w.set_value(&m, app0(&m, "RotorLength"), Value::Null);
    w.set_value(&m, app0(&m, "BladeFlash"), Value::Bool(true));
    assert_eq!(log_prob(&m, &w), NEG_INF);
}

#[test]
fn trace_cache_stays_coherent_under_random_mutation() {
    let m = smallnet();
    let vars = ["Cloudy", "Sprinkler", "Rain", "WetGrass", "SlipperyRoad"];
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut w = PartialWorld::new();
    for step in 0..500 {
        let pick = vars[(step * 7 + 3) % vars.len()];
        let var = app0(&m, pick);
        use rand::Rng;
        if rng.random::<f64>() < 0.3 && w.contains(&var) {
            w.unassign(&m, &var);
        } else {
            w.set_value(&m, var, Value::Bool(rng.random::<f64>() < 0.5));
        }
        w.check_coherence(&m)
            .unwrap_or_else(|e| panic!("step {step}: {e}"));
    }
}

#[test]
fn canonicalize_renames_by_stable_referencer() {
    let m = radar();
    let mut w = radar_world_one_heli(&m);
    let air_stmt = stmt_of(&m, "Aircraft", 1);
    let heli = sym(&m, "Helicopter");
    // move b1's source to index 2, leaving index 1 unreferenced
    let a2 = Value::Obj(ObjectId::Generated {
        stmt: air_stmt,
        binding: vec![heli.clone()],
        index: 2,
    });
    let a1 = Value::Obj(ObjectId::Generated {
        stmt: air_stmt,
        binding: vec![heli.clone()],
        index: 1,
    });
    w.set_value(&m, app1(&m, "Source", sym(&m, "b1")), a2.clone());
    let old_rl = app1(&m, "RotorLength", a1.clone());
    let old_wt = app1(&m, "WingType", a1.clone());
    let old_group = GroundVar::num(stmt_of(&m, "Blip", 1), vec![a1.clone()]);
    w.unassign(&m, &old_rl);
    w.unassign(&m, &old_wt);
    w.unassign(&m, &old_group);
    w.set_value(&m, app1(&m, "WingType", a2.clone()), heli.clone());
    w.set_value(&m, app1(&m, "RotorLength", a2.clone()), sym(&m, "Short"));
    w.refresh_structure(&m);
    // the referenced helicopter is back at index 1
    assert_eq!(
        w.value(&app1(&m, "Source", sym(&m, "b1"))).unwrap(),
        &a1
    );
    assert!(w.contains(&app1(&m, "RotorLength", a1)));
    w.check_coherence(&m).unwrap();
}
