use std::collections::{BTreeMap, BTreeSet};

use grfn::equation::{parse_latex, tex_lines, SymbolHints};
use grfn::fortran::parse_source;
use grfn::grfn::{lower_in, Grfn};
use grfn::grounding::*;
use grfn::ir::{BinaryOp, Expression, PairProgram};
use proptest::prelude::*;

const LAIS: &str = include_str!("../../../fixtures/lais.f");
const LAIS_TEX: &str = include_str!("../../../fixtures/lais.tex");

fn program() -> PairProgram {
    parse_source(LAIS).unwrap()
}

fn lais() -> Grfn {
    lower_in(&program(), "LAIS").unwrap()
}

fn hints() -> SymbolHints {
    SymbolHints::new(["SWFAC", "PT", "PD", "EMP1", "EMP2", "DLAI", "NB", "DN"])
}

fn equation(name: &str) -> grfn::equation::EquationIR {
    let line = tex_lines(LAIS_TEX)
        .into_iter()
        .find(|l| l.latex.trim_start().starts_with(name))
        .unwrap();
    parse_latex(&line.latex, &hints()).unwrap()
}

#[test]
fn lais_comment_records() {
    let records = comment_records(&program());
    assert_eq!(records.len(), 8);
    assert!(records
        .iter()
        .all(|r| r.source == GroundingSource::Comment && r.score == 1.0));
    let dlai = records.iter().find(|r| r.variable.name == "DLAI").unwrap();
    assert_eq!(dlai.description, "daily increase in leaf area index");
    assert_eq!(dlai.units.as_deref(), Some("m2/m2/d"));
    assert_eq!(dlai.variable.scope, "LAIS");
    let pd = records.iter().find(|r| r.variable.name == "PD").unwrap();
    assert_eq!(pd.description, "plant density");
    assert_eq!(pd.units.as_deref(), Some("m-2"));
    let dn = records.iter().find(|r| r.variable.name == "DN").unwrap();
    assert_eq!(dn.units, None);
}

#[test]
fn ground_attaches_all_comment_records() {
    let g = lais();
    let (grounded, report) = ground(&g, &comment_records(&program()), &[], DEFAULT_THRESHOLD);
    assert_eq!(report.attached, 8);
    assert!(report.unresolved.is_empty());
    assert_eq!(grounded.groundings.len(), 8);
    assert!(g.groundings.is_empty(), "input is left alone");
    let vars = grfn_variables(&grounded);
    for r in &grounded.groundings {
        assert!(vars.contains(&r.variable), "{:?}", r.variable);
        assert!((0.0..=1.0).contains(&r.score));
        assert!(!r.description.is_empty());
    }
}

#[test]
fn empty_records_change_nothing() {
    let g = lais();
    let (grounded, report) = ground(&g, &[], &[], DEFAULT_THRESHOLD);
    assert_eq!(grounded, g);
    assert_eq!(report, GroundReport::default());
}

#[test]
fn unknown_variable_is_reported() {
    let r = GroundingRecord {
        variable: VarRef {
            scope: "LAIS".into(),
            name: "QQ".into(),
        },
        description: "something".into(),
        units: None,
        source: GroundingSource::Comment,
        score: 1.0,
    };
    let (g, report) = ground(&lais(), &[r], &[], DEFAULT_THRESHOLD);
    assert!(g.groundings.is_empty());
    assert_eq!(report.unresolved.len(), 1);
    assert_eq!(report.unresolved[0].symbol, "QQ");
}

#[test]
fn text_mention_attaches() {
    let m =
        parse_mentions_tsv("EMP1\tmaximum leaf area expansion per leaf\tm2/leaf\tintro\n").unwrap();
    let (g, report) = ground(&lais(), &comment_records(&program()), &m, DEFAULT_THRESHOLD);
    assert_eq!(report.attached, 9);
    let text: Vec<_> = g
        .groundings
        .iter()
        .filter(|r| r.source == GroundingSource::Text)
        .collect();
    assert_eq!(text.len(), 1);
    assert_eq!(text[0].variable.name, "EMP1");
    assert_eq!(text[0].units.as_deref(), Some("m2/leaf"));
    assert_eq!(text[0].score, 1.0);
}

#[test]
fn mention_matched_by_description() {
    // no name resemblance, but the description matches the PD comment
    let m = vec![TextMention {
        symbol: "\\rho".into(),
        description: "plant density".into(),
        units: None,
        origin: "t".into(),
    }];
    let (g, report) = ground(&lais(), &comment_records(&program()), &m, DEFAULT_THRESHOLD);
    assert!(report.unresolved.is_empty());
    let r = g
        .groundings
        .iter()
        .find(|r| r.source == GroundingSource::Text)
        .unwrap();
    assert_eq!(r.variable.name, "PD");
}

#[test]
fn unmatched_mention_is_reported() {
    let m = vec![TextMention {
        symbol: "Θ".into(),
        description: "soil temperature".into(),
        units: None,
        origin: "t".into(),
    }];
    let (_, report) = ground(&lais(), &[], &m, DEFAULT_THRESHOLD);
    assert_eq!(report.attached, 0);
    assert_eq!(report.unresolved.len(), 1);
    assert_eq!(report.unresolved[0].source, GroundingSource::Text);
}

#[test]
fn a_equation_is_exact() {
    let r = match_equation(&equation("a"), &lais(), &hints(), DEFAULT_THRESHOLD).unwrap();
    assert_eq!(r.verdict, Verdict::Exact);
    assert_eq!(r.output, "LAIS::A::1");
    assert!(r.code_only.is_empty() && r.equation_only.is_empty());
}

#[test]
fn dlai_equation_is_subset() {
    let r = match_equation(&equation("dLAI"), &lais(), &hints(), DEFAULT_THRESHOLD).unwrap();
    assert_eq!(r.verdict, Verdict::Subset);
    assert_eq!(r.output, "LAIS::DLAI::1");
    assert_eq!(r.code_only, vec!["DN".to_string()]);
    assert!(r.equation_only.is_empty());
    assert_eq!(r.shared.len(), 5);
}

#[test]
fn disjoint_equation_mismatches() {
    let eq = parse_latex("z = q + r", &SymbolHints::default()).unwrap();
    let r = match_equation(&eq, &lais(), &hints(), DEFAULT_THRESHOLD).unwrap();
    assert_eq!(r.verdict, Verdict::Mismatch);
    assert!(r.shared.is_empty());
}

#[test]
fn no_assign_nodes() {
    let g = lower_in(
        &parse_source("      SUBROUTINE E\n      END\n").unwrap(),
        "E",
    )
    .unwrap();
    let eq = parse_latex("z = q", &SymbolHints::default()).unwrap();
    assert_eq!(
        match_equation(&eq, &g, &hints(), DEFAULT_THRESHOLD).unwrap_err(),
        MatchError::NoAssignNodes
    );
}

#[test]
fn alignment_ties_pick_smallest_name() {
    let vars: BTreeSet<VarRef> = ["XB", "XA"]
        .iter()
        .map(|n| VarRef {
            scope: "S".into(),
            name: n.to_string(),
        })
        .collect();
    let r = align_symbols(
        &BTreeSet::from(["XC".to_string()]),
        &vars,
        &BTreeMap::new(),
        &BTreeMap::new(),
        DEFAULT_THRESHOLD,
    );
    assert_eq!(r.matches[0].variable.name, "XA");
    assert_eq!(r.matches[0].score, 0.5);
}

fn arb_expr() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        "[a-e]".prop_map(Expression::var),
        (1u32..5).prop_map(|n| Expression::num(n.to_string())),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        (
            prop_oneof![
                Just(BinaryOp::Add),
                Just(BinaryOp::Mul),
                Just(BinaryOp::Sub),
                Just(BinaryOp::Div)
            ],
            inner.clone(),
            inner,
        )
            .prop_map(|(op, l, r)| Expression::binary(op, l, r))
    })
}

/// Randomly swap operands of `+`/`*` and rotate their chains.
fn shuffle(e: &Expression, bits: &mut impl Iterator<Item = bool>) -> Expression {
    match e {
        Expression::Binary { op, left, right } => {
            let (l, r) = (shuffle(left, bits), shuffle(right, bits));
            if !matches!(op, BinaryOp::Add | BinaryOp::Mul) {
                return Expression::binary(*op, l, r);
            }
            let (l, r) = if bits.next().unwrap_or(false) {
                (r, l)
            } else {
                (l, r)
            };
            // (x op y) op z  ->  x op (y op z)
            if bits.next().unwrap_or(false) {
                if let Expression::Binary {
                    op: o2,
                    left: x,
                    right: y,
                } = &l
                {
                    if o2 == op {
                        return Expression::binary(
                            *op,
                            (**x).clone(),
                            Expression::binary(*op, (**y).clone(), r),
                        );
                    }
                }
            }
            Expression::binary(*op, l, r)
        }
        other => other.clone(),
    }
}

proptest! {
    #[test]
    fn canonical_form_ignores_ac(e in arb_expr(), bits in prop::collection::vec(any::<bool>(), 64)) {
        let none = BTreeMap::new();
        let s = shuffle(&e, &mut bits.into_iter());
        prop_assert_eq!(canonicalize(&e, &none), canonicalize(&s, &none));
        let c = canonicalize(&e, &none);
        prop_assert_eq!(compare(&c, &canonicalize(&s, &none)).verdict, Verdict::Exact);
    }

    #[test]
    fn name_similarity_symmetric(a in "[A-Za-z_{}0-9]{0,8}", b in "[A-Za-z_{}0-9]{0,8}") {
        prop_assert_eq!(name_similarity(&a, &b), name_similarity(&b, &a));
        let s = name_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn exact_means_equal_forms(a in arb_expr(), b in arb_expr()) {
        let none = BTreeMap::new();
        let (ca, cb) = (canonicalize(&a, &none), canonicalize(&b, &none));
        prop_assert_eq!(compare(&ca, &cb).verdict == Verdict::Exact, ca == cb);
    }
}
