#[path = "common/dag.rs"]
#[allow(dead_code)]
mod dag;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use grfn::analysis::*;
use grfn::fortran::parse_source;
use grfn::grfn::{execute, lower_in, Grfn};
use grfn::grounding::{comment_records, ground, DEFAULT_THRESHOLD};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LAIS: &str = include_str!("../../../fixtures/lais.f");
const LAIS_DELTN: &str = include_str!("../../../fixtures/lais_deltn.f");
const ISHIGAMI: &str = include_str!("../../../fixtures/ishigami.f");
const LAIS_BOUNDS: &str = include_str!("../../../fixtures/lais_bounds.json");

fn grfn_of(src: &str, unit: &str) -> Grfn {
    lower_in(&parse_source(src).unwrap(), unit).unwrap()
}

fn grounded(src: &str, unit: &str) -> Grfn {
    let p = parse_source(src).unwrap();
    ground(
        &lower_in(&p, unit).unwrap(),
        &comment_records(&p),
        &[],
        DEFAULT_THRESHOLD,
    )
    .0
}

fn model(body: &str, args: &str) -> Grfn {
    let src = format!(
        "      SUBROUTINE M({args}, Y)\n      REAL {args}, Y\n      Y = {body}\n      END\n"
    );
    grfn_of(&src, "M")
}

fn unit_bounds(names: &[&str]) -> Bounds {
    Bounds(names.iter().map(|n| (n.to_string(), (0.0, 1.0))).collect())
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Closed-form Sobol decomposition of the Ishigami function.
fn ishigami_oracle(a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
    let v = v1 + v2 + v13;
    ([v1 / v, v2 / v, 0.0], [(v1 + v13) / v, v2 / v, v13 / v])
}

fn ishigami_report(n: usize, seed: u64) -> SensitivityReport {
    let b = Bounds(
        ["X1", "X2", "X3"]
            .iter()
            .map(|n| (n.to_string(), (-PI, PI)))
            .collect(),
    );
    sobol_indices(&grfn_of(ISHIGAMI, "ISHIGA"), "Y", &b, n, seed).unwrap()
}

fn check_report_invariants(r: &SensitivityReport) {
    let eps = mc_epsilon(r.n_samples);
    for i in &r.indices {
        assert!(i.st >= i.s1 - eps, "{i:?}");
        assert!(i.s1 >= -eps && i.s1 <= 1.0 + eps, "{i:?}");
    }
    let sum: f64 = r.indices.iter().map(|i| i.s1).sum();
    assert!(sum <= 1.0 + eps, "sum S1 = {sum}");
}

#[test]
fn ishigami_closed_form_matches_brute_force_variance() {
    // plain Monte Carlo variance of the function against the closed form
    use rand::Rng;
    let (a, b) = (7.0, 0.1);
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v = v1 + a * a / 8.0 + b * b * PI.powi(8) * 8.0 / 225.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ys: Vec<f64> = (0..400_000)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-PI..PI)).collect();
            x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
        })
        .collect();
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
    assert!((var - v).abs() / v < 0.02, "{var} vs {v}");
    let (s1, _) = ishigami_oracle(a, b);
    assert!((s1[0] - 0.3139).abs() < 1e-3 && (s1[1] - 0.4424).abs() < 1e-3);
}

#[test]
fn ishigami_indices() {
    let r = ishigami_report(4096, 42);
    let (s1, st) = ishigami_oracle(7.0, 0.1);
    for (k, name) in ["X1", "X2", "X3"].iter().enumerate() {
        let i = r.index(name).unwrap();
        assert!(
            (i.s1 - s1[k]).abs() <= 0.05,
            "{name}: S1 {} vs {}",
            i.s1,
            s1[k]
        );
        assert!(
            (i.st - st[k]).abs() <= 0.05,
            "{name}: ST {} vs {}",
            i.st,
            st[k]
        );
    }
    assert!(r.index("X1").unwrap().st > r.index("X1").unwrap().s1);
    assert_eq!(r.evaluations, 4096 * 5);
    assert_eq!(r.top_pair, Some(("X1".into(), "X2".into())));
    check_report_invariants(&r);
}

#[test]
fn reports_are_reproducible() {
    let a = serde_json::to_string(&ishigami_report(256, 7)).unwrap();
    let b = serde_json::to_string(&ishigami_report(256, 7)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, serde_json::to_string(&ishigami_report(256, 8)).unwrap());
}

#[test]
fn single_active_input() {
    let g = model("X1", "X1, X2");
    let n = 1024;
    let r = sobol_indices(&g, "Y", &unit_bounds(&["X1", "X2"]), n, 3).unwrap();
    let eps = mc_epsilon(n);
    let (x1, x2) = (r.index("X1").unwrap(), r.index("X2").unwrap());
    assert!(
        (x1.s1 - 1.0).abs() <= eps && (x1.st - 1.0).abs() <= eps,
        "{x1:?}"
    );
    assert!(x2.s1.abs() <= eps && x2.st.abs() <= eps, "{x2:?}");
    assert_eq!(r.top_pair, Some(("X1".into(), "X2".into())));

    let s = top_pair_surface(&g, "Y", &unit_bounds(&["X1", "X2"]), &r, 5).unwrap();
    assert_eq!(s.points.len(), 25);
    for row in s.points.chunks(5) {
        assert!(row.iter().all(|p| p.2 == row[0].2), "constant along X2");
    }
}

#[test]
fn additive_model() {
    let g = model("X1 + X2", "X1, X2");
    let n = 4096;
    let r = sobol_indices(&g, "Y", &unit_bounds(&["X1", "X2"]), n, 11).unwrap();
    let eps = mc_epsilon(n);
    for i in &r.indices {
        assert!((i.s1 - 0.5).abs() <= eps, "{i:?}");
    }
    let sum: f64 = r.indices.iter().map(|i| i.s1).sum();
    assert!((sum - 1.0).abs() <= eps);
    check_report_invariants(&r);

    let s = top_pair_surface(&g, "Y", &unit_bounds(&["X1", "X2"]), &r, 2).unwrap();
    let corners: Vec<(f64, f64, f64)> = s.points.clone();
    assert_eq!(
        corners,
        vec![
            (0.0, 0.0, 0.0),
            (0.0, 1.0, 1.0),
            (1.0, 0.0, 1.0),
            (1.0, 1.0, 2.0)
        ]
    );
    assert!(s.to_csv().starts_with("x,y,f\n0,0,0\n"));
}

#[test]
fn constant_model_has_zero_indices() {
    let g = model("2.0 + 0.0 * X1", "X1, X2");
    let r = sobol_indices(&g, "Y", &unit_bounds(&["X1", "X2"]), 64, 1).unwrap();
    assert_eq!(r.variance, 0.0);
    assert!(r.indices.iter().all(|i| i.s1 == 0.0 && i.st == 0.0));
    assert_eq!(r.warnings.len(), 1);
}

#[test]
fn sampling_errors() {
    let g = model("X1", "X1, X2");
    let b = unit_bounds(&["X1", "X2"]);
    assert!(matches!(
        sobol_indices(&g, "Y", &b, 100, 1),
        Err(AnalysisError::SampleCount(100))
    ));
    assert!(matches!(
        sobol_indices(&g, "Y", &b, 32, 1),
        Err(AnalysisError::SampleCount(32))
    ));
    assert!(matches!(
        sobol_indices(&g, "Q", &b, 64, 1),
        Err(AnalysisError::UnknownOutput(_))
    ));
    assert!(matches!(
        sobol_indices(&g, "Y", &unit_bounds(&["X2"]), 64, 1),
        Err(AnalysisError::MissingBounds(n)) if n == "X1"
    ));
    assert!(matches!(
        sobol_indices(&g, "Y", &unit_bounds(&["X1", "ZZ"]), 64, 1),
        Err(AnalysisError::UnknownInput(_))
    ));
    let bad = Bounds(BTreeMap::from([("X1".to_string(), (1.0, 0.0))]));
    assert!(matches!(
        sobol_indices(&g, "Y", &bad, 64, 1),
        Err(AnalysisError::Bounds(_))
    ));
}

#[test]
fn domain_error_names_the_sample() {
    let g = model("LOG(X1 - 0.5)", "X1");
    let err = sobol_indices(&g, "Y", &unit_bounds(&["X1"]), 64, 1).unwrap_err();
    match err {
        AnalysisError::Exec { sample, .. } => assert!(sample["X1"] <= 0.5),
        e => panic!("{e}"),
    }
}

#[test]
fn lais_surface_matches_execute() {
    let g = grfn_of(LAIS, "LAIS");
    let bounds = Bounds::from_json(LAIS_BOUNDS).unwrap();
    let r = sobol_indices(&g, "DLAI", &bounds, 256, 5).unwrap();
    check_report_invariants(&r);
    let s = top_pair_surface(&g, "DLAI", &bounds, &r, 5).unwrap();
    let (x, y) = r.top_pair.clone().unwrap();
    assert_eq!((s.x.clone(), s.y.clone()), (x.clone(), y.clone()));
    assert_eq!(s.points.len(), 25);
    for (i, (xv, yv, f)) in s.points.iter().enumerate() {
        let mut point: BTreeMap<String, f64> = bounds
            .0
            .iter()
            .map(|(k, (lo, hi))| (k.clone(), lo + 0.5 * (hi - lo)))
            .collect();
        point.insert(x.clone(), *xv);
        point.insert(y.clone(), *yv);
        assert_eq!(*f, execute(&g, &point).unwrap()["DLAI"], "point {i}");
        let (lo, hi) = bounds.0[&x];
        assert_eq!(
            *xv,
            if i / 5 == 4 {
                hi
            } else {
                lo + (hi - lo) * (i / 5) as f64 / 4.0
            }
        );
    }
}

#[test]
fn lais_shares_every_name_with_itself() {
    let g = grounded(LAIS, "LAIS");
    let pairs = shared_variables(&g, &g);
    assert_eq!(pairs.len(), 10);
    assert!(pairs.iter().all(|p| p.name_a == p.name_b && p.score == 1.0));
    let r = structural_compare(&g, &g, DEFAULT_THRESHOLD);
    for side in [&r.a, &r.b] {
        assert_eq!(side.counts.isolated, 0);
        assert_eq!(side.counts.control, 0);
        assert_eq!(side.counts.shared, 10);
        assert_eq!(side.counts.path, 2);
    }
}

#[test]
fn renamed_variable_matched_by_description() {
    let (a, b) = (grounded(LAIS, "LAIS"), grounded(LAIS_DELTN, "LAIS"));
    let pairs = shared_variables(&a, &b);
    assert_eq!(pairs.len(), 10);
    let dn = pairs.iter().find(|p| p.name_a == "DN").unwrap();
    assert_eq!(dn.name_b, "DELTN");
    // names alone are too far apart: 1 - 3/5 = 0.4
    assert_eq!(dn.score, 1.0);
    assert!(pairs
        .iter()
        .filter(|p| p.name_a != "DN")
        .all(|p| p.name_a == p.name_b));
    // without descriptions the rename is missed
    let raw = shared_variables(&grfn_of(LAIS, "LAIS"), &grfn_of(LAIS_DELTN, "LAIS"));
    assert_eq!(raw.len(), 9);
}

#[test]
fn disjoint_models() {
    let a = grfn_of(LAIS, "LAIS");
    let b = model("XQZ * 2.0", "XQZ");
    assert!(shared_variables(&a, &b).is_empty());
    let r = structural_compare(&a, &b, DEFAULT_THRESHOLD);
    assert_eq!(r.a.counts.isolated, r.a.classes.len());
    assert_eq!(r.b.counts.isolated, r.b.classes.len());
}

#[test]
fn comparison_dot_colors() {
    let g = grfn_of(LAIS, "LAIS");
    let r = structural_compare(&g, &g, DEFAULT_THRESHOLD);
    let dot = comparison_dot(&g, &g, &r);
    assert!(dot.starts_with("digraph comparison {"));
    assert!(dot.contains("\"a:LAIS::DN::0\" [shape=ellipse, color=blue"));
    assert!(dot.contains("color=black, label=\"ASSIGN\""));
    assert_eq!(dot.matches("style=dashed").count(), 10);
}

fn hand_graph(vars: &[&str], fns: &[(&str, &[&str], &str)]) -> NodeGraph {
    let mut g = NodeGraph::default();
    for v in vars {
        g.nodes.insert(v.to_string(), NodeRole::Variable);
    }
    for (f, ins, out) in fns {
        g.nodes.insert(f.to_string(), NodeRole::Function);
        for i in *ins {
            g.edges.insert((i.to_string(), f.to_string()));
        }
        g.edges.insert((f.to_string(), out.to_string()));
    }
    g
}

fn counts(c: &BTreeMap<String, NodeClass>) -> [usize; 4] {
    let k = ClassCounts::of(c);
    [k.shared, k.path, k.control, k.isolated]
}

#[test]
fn pt_like_graph() {
    let g = hand_graph(
        &["TMAX", "TMIN", "SRAD", "XHLAI", "MSALB", "TD", "EEQ", "EO"],
        &[
            ("f_td", &["TMAX", "TMIN"], "TD"),
            ("f_alb", &["XHLAI"], "MSALB"),
            ("f_eeq", &["SRAD", "MSALB", "TD"], "EEQ"),
            ("f_eo", &["EEQ", "TMAX"], "EO"),
        ],
    );
    assert_eq!(g.nodes.len(), 12);
    let shared = set(&["TMAX", "TMIN", "SRAD", "EO"]);
    let c = classify_graph(&g, &shared);
    assert_eq!(c, dag::brute_force_classes(&g, &shared));
    assert_eq!(counts(&c), [4, 5, 2, 1]);
    assert_eq!(c["MSALB"], NodeClass::Control);
    assert_eq!(c["f_alb"], NodeClass::Control);
}

#[test]
fn asce_like_graph() {
    let g = hand_graph(
        &[
            "TMAX", "TMIN", "TAVG", "SRAD", "RN", "ES", "DELTA", "U2", "ETO", "ELEV", "GAMMA",
            "WDIR",
        ],
        &[
            ("f_tavg", &["TMAX", "TMIN"], "TAVG"),
            ("f_es", &["TMAX", "TMIN"], "ES"),
            ("f_delta", &["TAVG"], "DELTA"),
            ("f_rn", &["SRAD"], "RN"),
            ("f_gamma", &["ELEV"], "GAMMA"),
            (
                "f_eto",
                &["RN", "DELTA", "GAMMA", "ES", "U2", "TAVG"],
                "ETO",
            ),
        ],
    );
    assert_eq!(g.nodes.len(), 18);
    let shared = set(&["TMAX", "TMIN", "SRAD", "ETO"]);
    let c = classify_graph(&g, &shared);
    assert_eq!(c, dag::brute_force_classes(&g, &shared));
    assert_eq!(counts(&c), [4, 9, 3, 2]);
}

#[test]
fn random_graphs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let (g, shared) = dag::random_node_graph(&mut rng, 12);
        assert_eq!(
            classify_graph(&g, &shared),
            dag::brute_force_classes(&g, &shared)
        );
    }
}

fn arb_graph() -> impl Strategy<Value = (NodeGraph, BTreeSet<String>, BTreeSet<String>)> {
    any::<u64>().prop_map(|seed| {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, shared) = dag::random_node_graph(&mut rng, 12);
        let mut more = shared.clone();
        for n in g.nodes.keys() {
            if rng.gen_bool(0.3) {
                more.insert(n.clone());
            }
        }
        (g, shared, more)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn classes_partition_and_match_oracle((g, shared, _) in arb_graph()) {
        let c = classify_graph(&g, &shared);
        prop_assert_eq!(c.keys().collect::<Vec<_>>(), g.nodes.keys().collect::<Vec<_>>());
        let k = ClassCounts::of(&c);
        prop_assert_eq!(k.shared + k.path + k.control + k.isolated, g.nodes.len());
        prop_assert_eq!(c, dag::brute_force_classes(&g, &shared));
    }

    #[test]
    fn enlarging_shared_never_isolates((g, small, large) in arb_graph()) {
        let (a, b) = (classify_graph(&g, &small), classify_graph(&g, &large));
        for (n, c) in &a {
            if matches!(c, NodeClass::Shared | NodeClass::Path) {
                prop_assert!(matches!(b[n], NodeClass::Shared | NodeClass::Path), "{} became {:?}", n, b[n]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn additive_indices_sum_to_one(c1 in 0.5f64..4.0, c2 in 0.5f64..4.0, seed in any::<u64>()) {
        let g = model(&format!("{c1} * X1 + {c2} * X2"), "X1, X2");
        let n = 1024;
        let r = sobol_indices(&g, "Y", &unit_bounds(&["X1", "X2"]), n, seed).unwrap();
        let eps = mc_epsilon(n);
        let sum: f64 = r.indices.iter().map(|i| i.s1).sum();
        prop_assert!((sum - 1.0).abs() <= eps, "sum {}", sum);
        for i in &r.indices {
            prop_assert!(i.st >= i.s1 - eps);
        }
    }
}
