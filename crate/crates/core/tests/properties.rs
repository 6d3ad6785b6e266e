//! Property tests for the exact algebra layer: the Poisson bracket's
//! defining identities, soundness of rewriting in generators, and the
//! parser/printer round trip — all on randomly generated polynomials.

use proptest::prelude::*;

use redrec_core::poly::ratio;
use redrec_core::{
    express_in_generators, parse_poly, poisson_bracket, Poly, Rational, SymbolTable,
};
use redrec_core::poly::jacobi_identity_residual;

fn small_rational() -> impl Strategy<Value = Rational> {
    (-9i64..=9, 1i64..=9).prop_map(|(n, d)| ratio(n, d))
}

/// Sparse polynomial in 4 phase variables, few terms, small exponents.
fn poly4() -> impl Strategy<Value = Poly> {
    prop::collection::vec(
        (small_rational(), prop::collection::vec(0u32..=2, 4)),
        0..5,
    )
    .prop_map(|terms| {
        let mut p = Poly::zero(4);
        for (c, exps) in terms {
            let e: Vec<(usize, u32)> = exps.into_iter().enumerate().collect();
            let term = Poly::term(4, c, &e).expect("valid term");
            p = p.checked_add(&term).expect("same variable space");
        }
        p
    })
}

/// Polynomial in 2 generator variables with degree ≤ 2 monomials, so its
/// substitution into the degree-2 generators stays at degree ≤ 4.
fn gen_poly() -> impl Strategy<Value = Poly> {
    prop::collection::vec(
        (small_rational(), (0u32..=2, 0u32..=2).prop_filter("degree ≤ 2", |(a, b)| a + b <= 2)),
        0..4,
    )
    .prop_map(|terms| {
        let mut p = Poly::zero(2);
        for (c, (e1, e2)) in terms {
            let term = Poly::term(2, c, &[(0, e1), (1, e2)]).expect("valid term");
            p = p.checked_add(&term).expect("same variable space");
        }
        p
    })
}

proptest! {
    #[test]
    fn bracket_is_antisymmetric(f in poly4(), g in poly4()) {
        let fg = poisson_bracket(&f, &g).expect("bracket");
        let gf = poisson_bracket(&g, &f).expect("bracket");
        prop_assert_eq!(fg, gf.neg());
    }

    #[test]
    fn bracket_obeys_the_leibniz_rule(f in poly4(), g in poly4(), h in poly4()) {
        let lhs = poisson_bracket(&f, &g.checked_mul(&h).expect("product")).expect("bracket");
        let rhs = poisson_bracket(&f, &g).expect("bracket")
            .checked_mul(&h).expect("product")
            .checked_add(&g.checked_mul(&poisson_bracket(&f, &h).expect("bracket")).expect("product"))
            .expect("sum");
        prop_assert_eq!(lhs, rhs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_satisfies_the_jacobi_identity(f in poly4(), g in poly4(), h in poly4()) {
        let r = jacobi_identity_residual(&f, &g, &h).expect("residual");
        prop_assert!(r.is_zero());
    }

    #[test]
    fn expressing_in_generators_substitutes_back(e in gen_poly()) {
        // σ = px² + py² and j₃ = y·px − x·py on (x, y, px, py)
        let t = SymbolTable::phase_space(2);
        let gens = [
            parse_poly("px^2 + py^2", &t).expect("parses"),
            parse_poly("y*px - x*py", &t).expect("parses"),
        ];
        let f = e.substitute(&gens).expect("substitution");
        let expr = express_in_generators(&f, &gens, 2)
            .expect("elimination runs")
            .expect("constructed instances are expressible");
        prop_assert_eq!(expr.substitute(&gens).expect("substitution"), f);
    }
}

proptest! {
    #[test]
    fn printing_then_parsing_is_the_identity(p in poly4()) {
        let t = SymbolTable::phase_space(2);
        let text = p.to_string_with(&["x", "y", "px", "py"]);
        let back = parse_poly(&text, &t).expect("rendered text parses");
        prop_assert_eq!(back, p);
    }
}
