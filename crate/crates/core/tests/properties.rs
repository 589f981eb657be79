use bcsimplex::expr::{parse_expr, parse_polynomial, Expr};
use bcsimplex::model::load_str;
use bcsimplex::poly::{vars, Interval, IntervalBox, Polynomial, Vars};
use proptest::prelude::*;

fn space() -> Vars {
    vars(&["x", "y", "z"])
}

fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u32..4, 3), -20i32..=20), 0..8)
        .prop_map(|ts| Polynomial::from_terms(space(), ts.into_iter().map(|(e, c)| (e, f64::from(c)))))
}

fn boxes() -> impl Strategy<Value = IntervalBox> {
    prop::collection::vec((-3.0f64..3.0, 0.01f64..2.0), 3).prop_map(|bs| {
        IntervalBox::new(space(), bs.into_iter().map(|(lo, w)| Interval::new(lo, lo + w).unwrap()).collect()).unwrap()
    })
}

fn grid(b: &IntervalBox, n: usize) -> Vec<Vec<f64>> {
    let axis = |i: usize| -> Vec<f64> {
        let iv = b.bounds()[i];
        (0..=n).map(|k| iv.lo + (iv.hi - iv.lo) * k as f64 / n as f64).map(|v| v.min(iv.hi)).collect()
    };
    let (a, c, d) = (axis(0), axis(1), axis(2));
    let mut out = Vec::new();
    for x in &a {
        for y in &c {
            for z in &d {
                out.push(vec![*x, *y, *z]);
            }
        }
    }
    out
}

fn plain() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-1000.0f64..1000.0).prop_map(Expr::Const),
        (0u32..1000).prop_map(|k| Expr::Const(f64::from(k) / 8.0)),
        prop::sample::select(vec!["x", "y", "z"]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), 0u32..5).prop_map(|(a, k)| Expr::pow(a, k)),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

fn with_trig() -> impl Strategy<Value = Expr> {
    prop_oneof![
        plain(),
        plain().prop_map(|a| Expr::Sin(Box::new(a))),
        (plain(), plain()).prop_map(|(a, b)| Expr::mul(a, Expr::Cos(Box::new(b)))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn enclosure_contains_grid(p in poly(), b in boxes()) {
        let iv = p.bound(&b).unwrap();
        let r = p.bound_refined(&b, 3).unwrap();
        for pt in grid(&b, 4) {
            let v = p.eval(&pt).unwrap();
            prop_assert!(iv.lo <= v && v <= iv.hi, "{v} not in {iv}");
            prop_assert!(r.lo <= v && v <= r.hi, "{v} not in refined {r}");
        }
    }

    #[test]
    fn refinement_is_monotone(p in poly(), b in boxes()) {
        let mut prev = p.bound_refined(&b, 0).unwrap();
        for d in 1..5 {
            let next = p.bound_refined(&b, d).unwrap();
            prop_assert!(prev.contains_interval(&next), "depth {d}: {next} not inside {prev}");
            prev = next;
        }
    }

    #[test]
    fn add_then_subtract(p in poly(), q in poly()) {
        prop_assert_eq!(&(&p + &q) - &q, p);
    }

    #[test]
    fn canonical_text_round_trips(p in poly()) {
        prop_assert_eq!(parse_polynomial(&p.to_string(), &space()).unwrap(), p);
    }

    #[test]
    fn print_then_parse(e in with_trig()) {
        let text = e.to_string();
        let back = parse_expr(&text).unwrap();
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn lie_derivative_matches_finite_difference(x in -1.0f64..1.0, y in -1.0f64..1.0, u in -1.0f64..1.0) {
        let sys = load_str(
            "states: x, y\ninputs: u\ndynamics:\n  dx/dt = y - x^3\n  dy/dt = -x + u*y\nadmissible:\n  x in [-2, 2]\n  y in [-2, 2]\ncontrols:\n  u in [-1, 1]\n",
            &[],
        ).unwrap();
        let h = parse_polynomial("x^2*y + 3*y^2 - x", sys.space()).unwrap();
        let dh = h.lie_derivative(&sys.vector_field());
        let mut f = [0.0; 2];
        sys.eval_field(&[x, y, u], &mut f);
        let eps = 1e-6;
        let at = |s: f64| h.eval(&[x + s * f[0], y + s * f[1], u]).unwrap();
        let fd = (at(eps) - at(-eps)) / (2.0 * eps);
        let exact = dh.eval(&[x, y, u]).unwrap();
        prop_assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{fd} vs {exact}");
    }
}
