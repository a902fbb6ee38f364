use grfn::equation::*;
use grfn::fortran::parse_source;
use grfn::grfn::lower_in;
use grfn::ir::{render_latex, BinaryOp, Expression, UnaryOp};
use proptest::prelude::*;

const CORPUS: &str = include_str!("../../../fixtures/equations.tex");
const HINTS: &str = include_str!("../../../fixtures/equations.hints");

fn corpus_hints() -> SymbolHints {
    SymbolHints::new(HINTS.lines().filter(|l| !l.trim().is_empty()))
}

#[test]
fn corpus_has_twenty_equations() {
    let lines = tex_lines(CORPUS);
    assert_eq!(lines.len(), 20);
    let h = corpus_hints();
    for l in &lines {
        let eq = parse_latex(&l.latex, &h).unwrap_or_else(|e| panic!("line {}: {e}", l.line));
        assert!(eq.lhs.is_some(), "line {}", l.line);
        assert!(eq.warnings.is_empty(), "line {}: {:?}", l.line, eq.warnings);
    }
}

#[test]
fn corpus_round_trips() {
    let h = corpus_hints();
    for l in tex_lines(CORPUS) {
        let eq = parse_latex(&l.latex, &h).unwrap();
        let rendered = render_latex(&eq.rhs);
        let (again, _) = parse_latex_expression(&rendered, &h).unwrap();
        assert_eq!(again, eq.rhs, "line {}: {rendered}", l.line);
        assert_eq!(render_latex(&again), rendered);
    }
}

#[test]
fn grfn_latex_parses_back() {
    let p = parse_source(include_str!("../../../fixtures/lais.f")).unwrap();
    let g = lower_in(&p, "LAIS").unwrap();
    let h = SymbolHints::new(g.variables.iter().map(|v| v.name.clone()));
    for f in &g.functions {
        let eq = parse_latex(f.latex.as_ref().unwrap(), &h).unwrap();
        assert_eq!(&eq.rhs, f.expression.as_ref().unwrap());
        assert_eq!(
            eq.lhs.as_deref(),
            g.variable(&f.output).map(|v| v.name.as_str())
        );
    }
}

#[test]
fn equation_ir_json() {
    let eq = parse_latex("a = e^{EMP2 (N - nb)}", &corpus_hints()).unwrap();
    let json = serde_json::to_string(&eq).unwrap();
    assert!(
        json.contains("\"rhs\":\"(call EXP (* EMP2 (- N nb)))\""),
        "{json}"
    );
    let back: EquationIR = serde_json::from_str(&json).unwrap();
    assert_eq!(back, eq);
}

const NAMES: &[&str] = &["x", "y", "alpha", "SWFAC", "EMP2", "N_max", "T_1"];

fn arb_expr() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| Expression::num(n.to_string())),
        (0u32..100, 1u32..100).prop_map(|(a, b)| Expression::num(format!("{a}.{b}"))),
        proptest::sample::select(NAMES).prop_map(Expression::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), 0usize..5).prop_map(|(l, r, k)| {
                let op = [
                    BinaryOp::Add,
                    BinaryOp::Sub,
                    BinaryOp::Mul,
                    BinaryOp::Div,
                    BinaryOp::Pow,
                ][k];
                Expression::binary(op, l, r)
            }),
            inner
                .clone()
                .prop_map(|e| Expression::unary(UnaryOp::Neg, e)),
            (
                inner.clone(),
                proptest::sample::select(&["EXP", "LOG", "SQRT", "SIN", "ABS"][..])
            )
                .prop_map(|(e, f)| Expression::call(f, vec![e])),
            (inner.clone(), inner).prop_map(|(a, b)| Expression::call("MAX", vec![a, b])),
        ]
    })
}

fn hints() -> SymbolHints {
    SymbolHints::new(["SWFAC", "EMP2"])
}

proptest! {
    #[test]
    fn render_parse_round_trip(e in arb_expr()) {
        let s = render_latex(&e);
        let (back, w) = parse_latex_expression(&s, &hints()).unwrap();
        prop_assert!(w.is_empty());
        prop_assert_eq!(&back, &e, "{}", s);
    }

    #[test]
    fn render_is_idempotent_after_one_trip(e in arb_expr()) {
        let s = render_latex(&e);
        let (back, _) = parse_latex_expression(&s, &hints()).unwrap();
        prop_assert_eq!(render_latex(&back), s);
    }

    #[test]
    fn parsing_is_deterministic(e in arb_expr()) {
        let s = render_latex(&e);
        prop_assert_eq!(parse_latex(&s, &hints()), parse_latex(&s, &hints()));
    }

    #[test]
    fn true_names_do_not_change_clean_parses(e in arb_expr()) {
        let s = render_latex(&e);
        let (before, w) = parse_latex_expression(&s, &hints()).unwrap();
        prop_assume!(w.is_empty());
        let mut more = hints();
        more.extend(NAMES.iter().filter(|n| n.len() > 1 && !n.contains('_')).copied());
        let (after, _) = parse_latex_expression(&s, &more).unwrap();
        prop_assert_eq!(before, after);
    }
}
