use approxcc::approxgen::{degree_candidates, search_degree, ApproxSpec};
use approxcc::expr::{RealExpr, UnaryOp};
use approxcc::frontend::PLACEHOLDER;
use approxcc::numerics::{interval_eval, Env, Interval};
use proptest::prelude::*;

fn u() -> RealExpr {
    RealExpr::var(PLACEHOLDER)
}

fn spec_strategy() -> impl Strategy<Value = ApproxSpec> {
    let op = prop::sample::select(vec![
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Sqrt,
    ]);
    (op, 0.0f64..1.0, -2.0f64..0.8, 5.0f64..11.0).prop_map(|(op, at, log_width, digits)| {
        let width = 10f64.powf(log_width);
        let dom = match op {
            UnaryOp::Log | UnaryOp::Sqrt => Interval::new(0.1 + 4.0 * at, 0.1 + 4.0 * at + width),
            UnaryOp::Tan => {
                let lo = -1.4 + 2.0 * at;
                Interval::new(lo, (lo + width).min(1.45))
            }
            _ => Interval::new(-6.0 + 12.0 * at, -6.0 + 12.0 * at + width),
        };
        let f = RealExpr::unary(op, u());
        let mut env = Env::new();
        env.insert(PLACEHOLDER.into(), dom);
        let mag = interval_eval(&f, &env).unwrap().mag();
        ApproxSpec::new(f, dom, mag * 10f64.powf(-digits))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pieces_partition_the_fitted_domain(spec in spec_strategy()) {
        let imp = search_degree(&spec).unwrap();
        prop_assert!(imp.certified_error <= spec.target);
        let first = imp.pieces.first().unwrap();
        let last = imp.pieces.last().unwrap();
        prop_assert_eq!(first.domain.lo.to_bits(), imp.fit_domain.lo.to_bits());
        prop_assert_eq!(last.domain.hi.to_bits(), imp.fit_domain.hi.to_bits());
        for w in imp.pieces.windows(2) {
            prop_assert_eq!(w[0].domain.hi.to_bits(), w[1].domain.lo.to_bits());
            prop_assert!(w[0].domain.lo < w[0].domain.hi);
        }
        prop_assert!(imp.pieces.iter().all(|p| p.certified_error <= imp.certified_error));
        prop_assert_eq!(&search_degree(&spec).unwrap(), &imp);
    }

    #[test]
    fn trig_anywhere_selects_the_high_degrees(
        outer in prop::sample::select(vec![UnaryOp::Exp, UnaryOp::Sqrt, UnaryOp::Log]),
        inner in prop::sample::select(vec![UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp, UnaryOp::Tan]),
        k in 0.5f64..3.0,
    ) {
        let body = RealExpr::add(RealExpr::constant(k), RealExpr::unary(inner, RealExpr::mul(RealExpr::constant(k), u())));
        let f = RealExpr::unary(outer, body);
        let expected = if matches!(inner, UnaryOp::Sin | UnaryOp::Cos) { vec![12, 16, 20, 24] } else { vec![4, 8, 12, 16] };
        prop_assert_eq!(degree_candidates(&f), expected);
    }
}
