use crate::dsl::ast::{Decl, Obs, Program};
use crate::dsl::{load_model, parse, print_program, validate};
use crate::model::{DomainClass, TypeRef};
use crate::value::Value;

pub fn corpus(name: &str) -> String {
    let path = format!("{}/models/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path}: {e}"))
}

fn count<F: Fn(&Decl) -> bool>(p: &Program, f: F) -> usize {
    p.decls.iter().filter(|d| f(d)).count()
}

#[test]
fn radar_parses_with_expected_declaration_counts() {
    let p = parse(&corpus("radar.oum")).unwrap();
    assert_eq!(count(&p, |d| matches!(d, Decl::Type { .. })), 4);
    assert_eq!(count(&p, |d| matches!(d, Decl::OriginFunc { .. })), 2);
    assert_eq!(count(&p, |d| matches!(d, Decl::RandomFunc { .. })), 2);
    assert_eq!(count(&p, |d| matches!(d, Decl::Number { .. })), 3);
    assert_eq!(count(&p, |d| matches!(d, Decl::Dependency { .. })), 2);
    assert_eq!(
        count(&p, |d| matches!(d, Decl::Obs(Obs::SetEvidence { .. }))),
        1
    );
    assert_eq!(count(&p, |d| matches!(d, Decl::Obs(Obs::Scalar { .. }))), 6);
    assert_eq!(count(&p, |d| matches!(d, Decl::Query { .. })), 6);
}

#[test]
fn urn_parses_with_indexed_guaranteed_symbols() {
    let p = parse(&corpus("urn.oum")).unwrap();
    assert_eq!(count(&p, |d| matches!(d, Decl::Number { .. })), 1);
    assert_eq!(count(&p, |d| matches!(d, Decl::Obs(Obs::Scalar { .. }))), 10);
    assert_eq!(count(&p, |d| matches!(d, Decl::Query { .. })), 10);
    let m = load_model(&corpus("urn.oum")).unwrap();
    let draw = m.type_id_by_name("Draw").unwrap();
    let names: Vec<&str> = m
        .ty(draw)
        .guaranteed
        .iter()
        .map(|s| m.symbol_name(*s))
        .collect();
    assert_eq!(names.len(), 10);
    assert_eq!(names[0], "Draw1");
    assert_eq!(names[9], "Draw10");
}

#[test]
fn empty_input_parses_to_empty_program() {
    let p = parse("").unwrap();
    assert!(p.decls.is_empty());
}

#[test]
fn syntax_error_reports_location_and_expectation() {
    let err = parse("type ;").unwrap_err();
    assert_eq!(err.loc.line, 1);
    assert!(err.message.contains("expected type name"), "{}", err.message);
}

#[test]
fn corpus_round_trips_through_the_printer() {
    for name in [
        "chain.oum",
        "radar.oum",
        "urn.oum",
        "urn-disc.oum",
        "smallnet.oum",
        "alarm.oum",
    ] {
        let p1 = parse(&corpus(name)).unwrap();
        let printed = print_program(&p1);
        let p2 = parse(&printed).unwrap_or_else(|e| {
            panic!("{name}: printed program fails to reparse: {} at {}", e.message, e.loc)
        });
        assert_eq!(strip_locs(&p1), strip_locs(&p2), "{name} round trip");
    }
}

// structural comparison ignoring source locations
fn strip_locs(p: &Program) -> String {
    format!("{:?}", parse(&print_program(p)).map(|q| print_program(&q)))
}

#[test]
fn validate_reports_all_errors_not_just_the_first() {
    let src = "
random Boolean A;
A ~ Bernoulli[0.5];
obs Undeclared1 = true;
obs Undeclared2 = false;
query A;
";
    let diags = validate(&parse(src).unwrap()).unwrap_err();
    assert!(diags.len() >= 2, "{diags:?}");
    assert!(diags.iter().all(|d| d.message.contains("undeclared name")));
}

#[test]
fn validate_rejects_bad_guard_and_arity_and_rows() {
    let src = "
random Boolean A;
random Boolean B;
A ~ Bernoulli[0.5, 0.5];
B { if 1 + 2 then ~Bernoulli[0.1] else ~TabularCPD[[0.5, 0.5], [0.1, 0.9]] };
query A;
";
    let diags = validate(&parse(src).unwrap()).unwrap_err();
    let text = diags
        .iter()
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    assert!(text.contains("takes 1 parameter"), "{text}");
    assert!(text.contains("guard expression must be Boolean"), "{text}");
    assert!(text.contains("TabularCPD has 2 row(s)"), "{text}");
}

#[test]
fn validate_rejects_set_evidence_without_number_statement() {
    let src = "
type Blip;
random Boolean F(Blip);
F(b) ~ Bernoulli[0.5];
obs {Blip b} = {b1, b2};
query F(b1);
";
    let diags = validate(&parse(src).unwrap()).unwrap_err();
    assert!(diags
        .iter()
        .any(|d| d.message.contains("no number statement")));
}

#[test]
fn validate_rejects_direct_self_loop() {
    let src = "
random Boolean A(Integer);
A(i) { if A(i) then ~Bernoulli[0.1] else ~Bernoulli[0.9] };
query A(1);
";
    let diags = validate(&parse(src).unwrap()).unwrap_err();
    assert!(diags
        .iter()
        .any(|d| d.message.contains("references `A` on the same arguments")));
    // a shifted argument is fine
    let ok = "
random Integer A(Integer);
A(i) { if i = 5 then ~Bernoulli[0.5] else ~Bernoulli(1 / (1 + A(i + 1))) };
query A(1);
";
    assert!(validate(&parse(ok).unwrap()).is_ok());
}

#[test]
fn validation_is_deterministic() {
    let src = "
obs A = true;
obs B = false;
query C;
";
    let a = format!("{:?}", validate(&parse(src).unwrap()).unwrap_err());
    let b = format!("{:?}", validate(&parse(src).unwrap()).unwrap_err());
    assert_eq!(a, b);
}

#[test]
fn radar_switching_analysis_marks_guard_referenced_functions() {
    let m = load_model(&corpus("radar.oum")).unwrap();
    let wing = m.func_id_by_name("WingType").unwrap();
    let source = m.func_id_by_name("Source").unwrap();
    let rotor = m.func_id_by_name("RotorLength").unwrap();
    let flash = m.func_id_by_name("BladeFlash").unwrap();
    assert!(m.func(wing).may_switch);
    assert!(m.func(source).may_switch);
    assert!(!m.func(rotor).may_switch, "leaf-parameter reference only");
    assert!(!m.func(flash).may_switch);
    // static children: BladeFlash depends on all three
    assert!(m.func(wing).static_children.contains(&flash));
    assert!(m.func(rotor).static_children.contains(&flash));
    assert!(m.func(source).static_children.contains(&flash));
}

#[test]
fn urn_marks_ball_drawn_as_may_switch() {
    let m = load_model(&corpus("urn.oum")).unwrap();
    let bd = m.func_id_by_name("BallDrawn").unwrap();
    assert!(m.func(bd).may_switch);
}

#[test]
fn radar_domain_classification() {
    let m = load_model(&corpus("radar.oum")).unwrap();
    let wing = m.func_id_by_name("WingType").unwrap();
    match m.func_domain_class(wing) {
        DomainClass::Finite(dom) => {
            let names: Vec<String> = dom.iter().map(|v| m.display_value(v)).collect();
            assert_eq!(names, ["Helicopter", "FixedWingPlane"]);
        }
        other => panic!("WingType classified {other:?}"),
    }
    let rotor = m.func_id_by_name("RotorLength").unwrap();
    match m.func_domain_class(rotor) {
        DomainClass::Finite(dom) => {
            let mut names: Vec<String> = dom.iter().map(|v| m.display_value(v)).collect();
            names.sort();
            assert_eq!(names, ["Long", "Short", "null"]);
        }
        other => panic!("RotorLength classified {other:?}"),
    }
    let source = m.func_id_by_name("Source").unwrap();
    assert_eq!(*m.func_domain_class(source), DomainClass::FinitePerWorld);
}

#[test]
fn urn_domain_classification_and_child_index() {
    let m = load_model(&corpus("urn.oum")).unwrap();
    let tw = m.func_id_by_name("TrueWeight").unwrap();
    let ow = m.func_id_by_name("ObsWeight").unwrap();
    let bd = m.func_id_by_name("BallDrawn").unwrap();
    assert_eq!(*m.func_domain_class(tw), DomainClass::Continuous);
    assert_eq!(*m.func_domain_class(ow), DomainClass::Continuous);
    assert_eq!(*m.func_domain_class(bd), DomainClass::FinitePerWorld);
    assert!(m.child_index.is_empty(), "no origin functions in the urn");
}

#[test]
fn radar_child_index_schema_has_source_inverse() {
    let m = load_model(&corpus("radar.oum")).unwrap();
    let source = m.func_id_by_name("Source").unwrap();
    let blip = m.type_id_by_name("Blip").unwrap();
    let aircraft = m.type_id_by_name("Aircraft").unwrap();
    assert!(m
        .child_index
        .iter()
        .any(|e| e.origin == source
            && e.indexed_type == blip
            && e.group_type == TypeRef::Decl(aircraft)));
    // anchored structure: both #Aircraft instances, the false-alarm #Blip
    assert_eq!(m.anchored.len(), 3);
}

#[test]
fn closed_network_has_no_child_index_entries() {
    let m = load_model(&corpus("smallnet.oum")).unwrap();
    assert!(m.child_index.is_empty());
    assert!(m.anchored.is_empty());
    let c = m.func_id_by_name("Cloudy").unwrap();
    assert_eq!(
        *m.func_domain_class(c),
        DomainClass::Finite(vec![Value::Bool(false), Value::Bool(true)])
    );
}

#[test]
fn chain_model_loads_with_integer_bernoulli() {
    let m = load_model(&corpus("chain.oum")).unwrap();
    let x = m.func_id_by_name("X").unwrap();
    assert_eq!(
        *m.func_domain_class(x),
        DomainClass::Finite(vec![Value::Int(0), Value::Int(1), Value::Int(2)])
    );
    let y = m.func_id_by_name("Y").unwrap();
    assert_eq!(
        *m.func_domain_class(y),
        DomainClass::Finite(vec![Value::Int(0), Value::Int(1)])
    );
    assert!(m.func(x).may_switch, "X appears in every Y guard");
    assert!(
        !m.func(y).may_switch,
        "Y(i+1) only parameterizes a leaf, it never switches"
    );
    assert_eq!(m.evidence.len(), 1);
    assert_eq!(m.evidence[0].1, Value::Int(1));
}

#[test]
fn guaranteed_type_with_number_statement_is_rejected() {
    let src = "
type Ball;
guaranteed Ball b0;
#Ball ~ Poisson[2.0];
random Ball Pick;
Pick ~ UniformChoice({Ball b});
query Pick;
";
    let diags = validate(&parse(src).unwrap()).unwrap_err();
    assert!(
        diags
            .iter()
            .any(|d| d.message.contains("both guaranteed objects and number statements")),
        "{diags:?}"
    );
}
