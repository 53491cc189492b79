use noisecalc::expr::{EvalErrorKind, Expr, ExprError};

fn eval(src: &str, x: f64) -> f64 {
    Expr::parse(src).unwrap().eval(x, 0.0).unwrap()
}

#[test]
fn grammar_examples() {
    assert_eq!(eval("x - x^3", 2.0), -6.0);
    assert_eq!(eval("sqrt(2*x)", 0.5), 1.0);
    assert_eq!(eval("x ^ 3 ^ 2", 2.0), 512.0);
    assert_eq!(eval("-x", 3.0), -3.0);
    assert_eq!(eval("exp(0)", 7.0), 1.0);
    assert_eq!(eval("-x^2", 2.0), -4.0);
    assert_eq!(eval("2.5e-1 * 4", 0.0), 1.0);
    assert_eq!(eval("abs(-x) + tanh(0)", 1.5), 1.5);
}

#[test]
fn evaluation_errors_name_their_cause() {
    let e = Expr::parse("1/ (x - 1)").unwrap();
    match e.eval(1.0, 0.25) {
        Err(ExprError::Eval { kind: EvalErrorKind::DivisionByZero, x, t, .. }) => assert_eq!((x, t), (1.0, 0.25)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        Expr::parse("log(x)").unwrap().eval(0.0, 0.0),
        Err(ExprError::Eval { kind: EvalErrorKind::LogOfNonPositive, .. })
    ));
    assert!(matches!(
        Expr::parse("sqrt(x)").unwrap().eval(-1.0, 0.0),
        Err(ExprError::Eval { kind: EvalErrorKind::SqrtOfNegative, .. })
    ));
}

#[test]
fn syntax_and_identifier_errors() {
    assert!(matches!(Expr::parse("2x"), Err(ExprError::Syntax { position: 1, .. })));
    assert!(matches!(Expr::parse("(x + 1"), Err(ExprError::Syntax { position: 6, .. })));
    assert!(matches!(Expr::parse("cosh(x)"), Err(ExprError::UnknownIdentifier { position: 0, .. })));
    assert!(Expr::parse("").is_err());
}

#[test]
fn derivative_examples() {
    let d = Expr::parse("x^2").unwrap().derivative().unwrap();
    for x in [-2.0, -0.5, 0.0, 1.0, 3.0] {
        assert!((d.eval(x, 0.0).unwrap() - 2.0 * x).abs() < 1e-12);
    }
    let d = Expr::parse("sqrt(2*x)").unwrap().derivative().unwrap();
    assert!((d.eval(0.5, 0.0).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(Expr::parse("t").unwrap().derivative().unwrap().eval(1.0, 2.0).unwrap(), 0.0);
    assert!(matches!(Expr::parse("abs(x)").unwrap().derivative(), Err(ExprError::UnsupportedDerivative { .. })));
}

#[test]
fn dependence_on_state() {
    assert!(Expr::parse("1 + t*x").unwrap().depends_on_x());
    assert!(!Expr::parse("sin(t) + 2").unwrap().depends_on_x());
    assert!(Expr::parse("sin(t) + 2").unwrap().depends_on_t());
    assert!(!Expr::parse("x^2").unwrap().depends_on_t());
}
