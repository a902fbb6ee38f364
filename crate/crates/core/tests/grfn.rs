mod common;

use std::collections::{BTreeMap, BTreeSet};

use grfn::fortran::parse_source;
use grfn::grfn::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::straight_line;

const LAIS: &str = include_str!("../../../fixtures/lais.f");
const LAIS_INPUTS: [&str; 8] = ["SWFAC", "PD", "EMP1", "EMP2", "N", "NB", "PT", "DN"];

fn lais() -> Grfn {
    lower_in(&parse_source(LAIS).unwrap(), "LAIS").unwrap()
}

fn grfn_of(src: &str, unit: &str) -> Grfn {
    lower_in(&parse_source(src).unwrap(), unit).unwrap()
}

fn inputs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn fig1_inputs() -> BTreeMap<String, f64> {
    inputs(&[
        ("SWFAC", 1.0),
        ("PD", 1.0),
        ("EMP1", 0.104),
        ("EMP2", 0.0),
        ("N", 2.0),
        ("NB", 1.0),
        ("PT", 1.0),
        ("DN", 1.0),
    ])
}

fn ids(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| format!("LAIS::{s}")).collect()
}

/// Direct evaluation of the two LAIS statements.
fn lais_oracle(x: &BTreeMap<String, f64>) -> f64 {
    let a = (x["EMP2"] * (x["N"] - x["NB"])).exp();
    x["SWFAC"] * x["PD"] * x["EMP1"] * x["PT"] * (a / (1.0 + a)) * x["DN"]
}

fn random_lais_point(rng: &mut impl Rng) -> BTreeMap<String, f64> {
    LAIS_INPUTS
        .iter()
        .map(|n| (n.to_string(), rng.gen_range(0.1..2.0)))
        .collect()
}

fn check_invariants(g: &Grfn) {
    assert_eq!(g.find_cycle(), None);
    g.check().unwrap();
    let mut producers: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &g.functions {
        *producers.entry(f.output.as_str()).or_default() += 1;
    }
    assert!(producers.values().all(|&n| n == 1));
    let mut versions: BTreeMap<(&str, &str), Vec<u32>> = BTreeMap::new();
    for v in &g.variables {
        versions
            .entry((&v.scope, &v.name))
            .or_default()
            .push(v.version);
    }
    for vs in versions.values_mut() {
        vs.sort();
        let start = vs[0];
        assert!(start <= 1);
        assert!(
            vs.iter().enumerate().all(|(i, &v)| v == start + i as u32),
            "{vs:?}"
        );
    }
    for l in &g.loops {
        check_invariants(&l.body);
    }
}

#[test]
fn lais_structure() {
    let g = lais();
    let assigns: Vec<_> = g.functions_of_kind(FunctionKind::Assign).collect();
    assert_eq!(assigns.len(), 2);
    assert_eq!(g.functions.len(), 2);
    let a = assigns.iter().find(|f| f.output == "LAIS::A::1").unwrap();
    let got: BTreeSet<String> = a.inputs.iter().cloned().collect();
    assert_eq!(got, ids(&["EMP2::0", "N::0", "NB::0"]));
    let d = assigns
        .iter()
        .find(|f| f.output == "LAIS::DLAI::1")
        .unwrap();
    let got: BTreeSet<String> = d.inputs.iter().cloned().collect();
    assert_eq!(
        got,
        ids(&["SWFAC::0", "PD::0", "EMP1::0", "PT::0", "A::1", "DN::0"])
    );
    assert!(assigns.iter().all(|f| f.latex.is_some()));
    check_invariants(&g);
}

#[test]
fn self_assignment_bumps_version() {
    let g = grfn_of("SUBROUTINE S(X)\nREAL X\nX = X\nEND\n", "S");
    assert_eq!(g.functions.len(), 1);
    assert_eq!(g.functions[0].inputs, vec!["S::X::0".to_string()]);
    assert_eq!(g.functions[0].output, "S::X::1");
    let out = execute(&g, &inputs(&[("X", 3.5)])).unwrap();
    assert_eq!(out["X"], 3.5);
}

const IF_SRC: &str =
    "SUBROUTINE S(T, Y)\nREAL T, Y\nIF (T .GT. 0) THEN\n Y = 1\nELSE\n Y = 2\nEND IF\nEND\n";

#[test]
fn conditional_lowering() {
    let g = grfn_of(IF_SRC, "S");
    let count = |k| g.functions_of_kind(k).count();
    assert_eq!(count(FunctionKind::Condition), 1);
    assert_eq!(count(FunctionKind::Assign), 2);
    assert_eq!(count(FunctionKind::Decision), 1);
    let ys = g.variables.iter().filter(|v| v.name == "Y").count();
    assert_eq!(ys, 3);
    let decision = g.functions_of_kind(FunctionKind::Decision).next().unwrap();
    assert_eq!(g.output_var("Y").unwrap().id, decision.output);
    check_invariants(&g);

    assert_eq!(execute(&g, &inputs(&[("T", 1.0)])).unwrap()["Y"], 1.0);
    assert_eq!(execute(&g, &inputs(&[("T", -1.0)])).unwrap()["Y"], 2.0);
}

#[test]
fn untaken_branch_cannot_fault() {
    let src = "SUBROUTINE S(X, Y)\nREAL X, Y\nIF (X .GT. 0) THEN\n Y = LOG(X)\nELSE\n Y = 0\nEND IF\nEND\n";
    let g = grfn_of(src, "S");
    assert_eq!(execute(&g, &inputs(&[("X", -1.0)])).unwrap()["Y"], 0.0);
    assert_eq!(execute(&g, &inputs(&[("X", 1.0)])).unwrap()["Y"], 0.0);
    let d = gradient(&g, &inputs(&[("X", 2.0)]), "Y").unwrap();
    assert!((d["X"] - 0.5).abs() < 1e-15);
}

#[test]
fn lais_execution() {
    let out = execute(&lais(), &fig1_inputs()).unwrap();
    assert_eq!(out["A"], 1.0);
    assert!((out["DLAI"] - 0.052).abs() < 1e-12);
}

#[test]
fn lais_matches_direct_evaluation() {
    let g = lais();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let x = random_lais_point(&mut rng);
        let out = execute(&g, &x).unwrap();
        assert_eq!(out["DLAI"], lais_oracle(&x));
    }
}

#[test]
fn lais_gradient() {
    let d = gradient(&lais(), &fig1_inputs(), "DLAI").unwrap();
    assert_eq!(d.len(), 8);
    assert!((d["SWFAC"] - 0.052).abs() < 1e-15);
}

#[test]
fn gradient_matches_finite_differences() {
    let g = lais();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    for _ in 0..5 {
        let x = random_lais_point(&mut rng);
        let d = gradient(&g, &x, "DLAI").unwrap();
        for name in LAIS_INPUTS {
            let mut up = x.clone();
            let mut down = x.clone();
            *up.get_mut(name).unwrap() += h;
            *down.get_mut(name).unwrap() -= h;
            let fd = (lais_oracle(&up) - lais_oracle(&down)) / (2.0 * h);
            let err = (d[name] - fd).abs() / fd.abs().max(1.0);
            assert!(err <= 1e-5, "{name}: {} vs {fd}", d[name]);
        }
    }
}

#[test]
fn constant_network_has_zero_partials() {
    let g = grfn_of("SUBROUTINE S(X, Y)\nREAL X, Y\nY = 2 + 0 * X\nEND\n", "S");
    let d = gradient(&g, &inputs(&[("X", 4.0)]), "Y").unwrap();
    assert_eq!(d["X"], 0.0);
    let g = grfn_of("SUBROUTINE S(X, Y)\nREAL X, Y\nY = 2\nEND\n", "S");
    let d = gradient(&g, &inputs(&[("X", 4.0)]), "Y").unwrap();
    assert!(d.values().all(|&v| v == 0.0));
}

#[test]
fn logical_output_is_not_differentiable() {
    let g = grfn_of(
        "SUBROUTINE S(X, B)\nREAL X\nLOGICAL B\nB = X .GT. 1\nEND\n",
        "S",
    );
    assert!(matches!(
        gradient(&g, &inputs(&[("X", 4.0)]), "B"),
        Err(ExecError::NonDifferentiable { .. })
    ));
    assert!(matches!(
        gradient(&g, &inputs(&[("X", 4.0)]), "Q"),
        Err(ExecError::UnknownOutput(_))
    ));
}

#[test]
fn min_max_follow_selected_argument() {
    let g = grfn_of(
        "SUBROUTINE S(X, Y, Z)\nREAL X, Y, Z\nZ = MAX(X, Y) * MIN(X, Y)\nEND\n",
        "S",
    );
    let d = gradient(&g, &inputs(&[("X", 2.0), ("Y", 3.0)]), "Z").unwrap();
    assert_eq!((d["X"], d["Y"]), (3.0, 2.0));
    // ties take the first argument
    let g = grfn_of(
        "SUBROUTINE S(X, Y, Z)\nREAL X, Y, Z\nZ = MAX(X, Y)\nEND\n",
        "S",
    );
    let d = gradient(&g, &inputs(&[("X", 1.0), ("Y", 1.0)]), "Z").unwrap();
    assert_eq!((d["X"], d["Y"]), (1.0, 0.0));
}

#[test]
fn domain_errors_name_the_node() {
    let g = grfn_of("SUBROUTINE S(X, Y)\nREAL X, Y\nY = 1 / X\nEND\n", "S");
    match execute(&g, &inputs(&[("X", 0.0)])) {
        Err(ExecError::Domain { node, .. }) => assert_eq!(node, "S::__assign__::0"),
        other => panic!("{other:?}"),
    }
    let g = grfn_of(
        "SUBROUTINE S(X, Y)\nREAL X, Y\nY = SQRT(X) + LOG(X)\nEND\n",
        "S",
    );
    assert!(matches!(
        execute(&g, &inputs(&[("X", -1.0)])),
        Err(ExecError::Domain { .. })
    ));
    let g = grfn_of("SUBROUTINE S(X, Y)\nREAL X, Y\nY = EXP(X)\nEND\n", "S");
    assert_eq!(
        execute(&g, &inputs(&[("X", 1000.0)])).unwrap()["Y"],
        f64::INFINITY
    );
}

#[test]
fn unbound_input_is_named() {
    let mut x = fig1_inputs();
    x.remove("PT");
    assert_eq!(
        execute(&lais(), &x),
        Err(ExecError::UnboundInput("PT".into()))
    );
}

#[test]
fn input_names_are_case_insensitive() {
    let x: BTreeMap<String, f64> = fig1_inputs()
        .into_iter()
        .map(|(k, v)| (k.to_lowercase(), v))
        .collect();
    assert!((execute(&lais(), &x).unwrap()["DLAI"] - 0.052).abs() < 1e-12);
}

#[test]
fn do_loop_accumulates() {
    let src = "SUBROUTINE S(N, TOTAL)\nINTEGER N, I\nREAL TOTAL\nTOTAL = 0\nDO I = 1, N\n TOTAL = TOTAL + I\nEND DO\nEND\n";
    let g = grfn_of(src, "S");
    assert_eq!(g.loops.len(), 1);
    assert!(g.functions_of_kind(FunctionKind::LoopBody).count() >= 1);
    check_invariants(&g);
    assert_eq!(execute(&g, &inputs(&[("N", 10.0)])).unwrap()["TOTAL"], 55.0);
    assert_eq!(execute(&g, &inputs(&[("N", 0.0)])).unwrap()["TOTAL"], 0.0);
}

#[test]
fn loop_with_stride_and_array() {
    let src = "\
SUBROUTINE S(N, S2)
INTEGER N, I
REAL V(10), S2
DO I = 1, N
  V(I) = I * I
END DO
S2 = 0
DO I = N, 1, -2
  S2 = S2 + V(I)
END DO
END
";
    let g = grfn_of(src, "S");
    check_invariants(&g);
    // 25 + 9 + 1
    assert_eq!(execute(&g, &inputs(&[("N", 5.0)])).unwrap()["S2"], 35.0);
    assert!(matches!(
        execute(&g, &inputs(&[("N", 11.0)])),
        Err(ExecError::Domain { .. })
    ));
}

#[test]
fn loop_gradient() {
    let src =
        "SUBROUTINE S(X, Y)\nREAL X, Y\nINTEGER I\nY = 1\nDO I = 1, 3\n Y = Y * X\nEND DO\nEND\n";
    let g = grfn_of(src, "S");
    let d = gradient(&g, &inputs(&[("X", 2.0)]), "Y").unwrap();
    assert_eq!(d["X"], 12.0);
}

#[test]
fn calls_are_inlined() {
    let src = "\
SUBROUTINE MAIN(X, Y)
REAL X, Y
CALL SQR(X, Y)
Y = Y + F(X)
END
SUBROUTINE SQR(A, B)
REAL A, B
B = A * A
END
REAL FUNCTION F(Z)
REAL Z
F = 2 * Z
END
";
    let g = grfn_of(src, "MAIN");
    check_invariants(&g);
    assert_eq!(execute(&g, &inputs(&[("X", 3.0)])).unwrap()["Y"], 15.0);
    let d = gradient(&g, &inputs(&[("X", 3.0)]), "Y").unwrap();
    assert_eq!(d["X"], 8.0);
}

#[test]
fn recursion_and_arity_are_rejected() {
    let rec = "SUBROUTINE A(X)\nREAL X\nCALL A(X)\nEND\n";
    let p = parse_source(rec).unwrap();
    assert!(matches!(
        lower_in(&p, "A"),
        Err(LoweringError::Recursion(..))
    ));
    let arity = "SUBROUTINE A(X)\nREAL X\nCALL B(X, X)\nEND\nSUBROUTINE B(Y)\nREAL Y\nEND\n";
    let p = parse_source(arity).unwrap();
    assert!(matches!(
        lower_in(&p, "A"),
        Err(LoweringError::Arity { .. })
    ));
}

#[test]
fn module_variables_and_constants() {
    let src = "\
MODULE CONSTS
REAL, PARAMETER :: K = 3.0
REAL :: SHIFT = 1.0
END MODULE
SUBROUTINE S(X, Y)
USE CONSTS
REAL X, Y
Y = K * X + SHIFT
END
";
    let g = grfn_of(src, "S");
    assert_eq!(execute(&g, &inputs(&[("X", 2.0)])).unwrap()["Y"], 7.0);
    assert_eq!(
        execute(&g, &inputs(&[("X", 2.0), ("SHIFT", 0.0)])).unwrap()["Y"],
        6.0
    );
}

#[test]
fn integer_division_truncates() {
    let g = grfn_of(
        "SUBROUTINE S(I, J, R)\nINTEGER I, J\nREAL R\nJ = I / 2\nR = I / 2.0\nEND\n",
        "S",
    );
    let out = execute(&g, &inputs(&[("I", 7.0)])).unwrap();
    assert_eq!((out["J"], out["R"]), (3.0, 3.5));
}

#[test]
fn orders_agree_and_runs_repeat() {
    let src = "\
SUBROUTINE S(A, B, C, D)
REAL A, B, C, D
C = A * B
D = A + B
IF (C .GT. D) THEN
  C = C - D
  D = 0
END IF
D = D + SIN(C)
END
";
    let g = grfn_of(src, "S");
    let x = inputs(&[("A", 3.0), ("B", 4.0)]);
    let f = execute_ordered(&g, &x, EvalOrder::Forward).unwrap();
    let r = execute_ordered(&g, &x, EvalOrder::Reverse).unwrap();
    assert_eq!(f, r);
    assert_eq!(f, execute(&g, &x).unwrap());
}

#[test]
fn json_round_trip() {
    let src = "SUBROUTINE S(N, T)\nINTEGER N, I\nREAL T\nT = 0\nDO I = 1, N\n IF (I .GT. 2) T = T + I\nEND DO\nEND\n";
    for g in [lais(), grfn_of(src, "S"), grfn_of(IF_SRC, "S")] {
        let json = g.to_json();
        let back = Grfn::from_json(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), json);
    }
    let g = grfn_of(src, "S");
    assert_eq!(execute(&g, &inputs(&[("N", 5.0)])).unwrap()["T"], 12.0);
}

#[test]
fn json_field_order() {
    let json = lais().to_json();
    let keys = [
        "variables",
        "functions",
        "edges",
        "inputs",
        "outputs",
        "groundings",
    ];
    let pos: Vec<usize> = keys
        .iter()
        .map(|k| json.find(&format!("\n  \"{k}\"")).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    let g = lais();
    let sexpr = grfn::ir::sexpr::to_sexpr(g.functions[0].expression.as_ref().unwrap());
    assert_eq!(sexpr, "(call EXP (* EMP2 (- N NB)))");
    assert!(json.contains(&format!("\"expression\": \"{sexpr}\"")));
}

#[test]
fn dot_shapes() {
    let dot = to_dot(&lais());
    assert!(dot.contains("\"LAIS::A::1\" [shape=ellipse"));
    assert!(dot.contains("\"LAIS::__assign__::0\" [shape=box, label=\"ASSIGN\\n"));
    assert!(dot.contains("\"LAIS::A::1\" -> \"LAIS::__assign__::1\";"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn straight_line_semantics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = straight_line::generate(&mut rng);
        let src = straight_line::to_fortran(&p);
        let g = grfn_of(&src, "P");
        check_invariants(&g);
        for _ in 0..10 {
            let x = straight_line::random_inputs(&p, &mut rng);
            match (straight_line::interpret(&p, &x), execute(&g, &x)) {
                (Ok(want), Ok(got)) => {
                    for (k, v) in &want {
                        prop_assert!(straight_line::same(*v, got[k]), "{k}: {v} vs {}\n{src}", got[k]);
                    }
                }
                (Err(_), Err(ExecError::Domain { .. })) => {}
                (want, got) => prop_assert!(false, "{want:?} vs {got:?}\n{src}"),
            }
        }
    }

    #[test]
    fn evaluation_order_is_irrelevant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = straight_line::generate(&mut rng);
        let g = grfn_of(&straight_line::to_fortran(&p), "P");
        let x = straight_line::random_inputs(&p, &mut rng);
        let f = execute_ordered(&g, &x, EvalOrder::Forward);
        let r = execute_ordered(&g, &x, EvalOrder::Reverse);
        prop_assert_eq!(f.is_ok(), r.is_ok());
        if let (Ok(f), Ok(r)) = (f, r) {
            for (k, v) in &f {
                prop_assert!(straight_line::same(*v, r[k]));
            }
        }
    }

    #[test]
    fn lais_partials_match_differences(vals in proptest::collection::vec(0.1f64..2.0, 8)) {
        let x: BTreeMap<String, f64> = LAIS_INPUTS.iter().map(|s| s.to_string()).zip(vals).collect();
        let d = gradient(&lais(), &x, "DLAI").unwrap();
        let h = 1e-6;
        for name in LAIS_INPUTS {
            let mut up = x.clone();
            let mut down = x.clone();
            *up.get_mut(name).unwrap() += h;
            *down.get_mut(name).unwrap() -= h;
            let fd = (lais_oracle(&up) - lais_oracle(&down)) / (2.0 * h);
            prop_assert!((d[name] - fd).abs() / fd.abs().max(1.0) <= 1e-5);
        }
    }
}
