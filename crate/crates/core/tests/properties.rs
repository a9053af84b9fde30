//! Randomized laws with a fixed seed, so every run sees the same instances.

use acclab::calculus_orders::{b_compose, sc_compose, sc_compose_closed, CalculusOrders};
use acclab::corner_blowup::{BlowupCenter, CornerSpace};
use acclab::heat::{b_cylinder_kernel, cone_mode_kernel, euclidean_kernel};
use acclab::model_geometry::WarpFamily;
use acclab::phg_index::{q, Dims, Exponent, IndexSet, IndexTerm, Order};
use acclab::spectral::{rayleigh_minimax_bound, solve_mode, SLGrid};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(0x00ac_c1ab), failure_persistence: None, ..ProptestConfig::default() }
}

fn exponent() -> impl Strategy<Value = Exponent> {
    (-12i64..12, 1i64..5, -2i64..3).prop_map(|(a, b, n)| Exponent::affine_n(q(a, b), q(n, 2)))
}

fn index_set() -> impl Strategy<Value = IndexSet> {
    prop::collection::vec((exponent(), 0u32..3), 1..4)
        .prop_map(|v| IndexSet::new(v.into_iter().map(|(a, p)| IndexTerm::new(a, p))))
}

fn order() -> impl Strategy<Value = Order> {
    prop_oneof![4 => index_set().prop_map(Order::Finite), 1 => Just(Order::Infinite)]
}

fn dims() -> impl Strategy<Value = Dims> {
    (2i64..8).prop_map(Dims::new)
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn sum_is_commutative_and_associative(a in index_set(), b in index_set(), c in index_set()) {
        prop_assert_eq!(a.sum(&b), b.sum(&a));
        prop_assert_eq!(a.sum(&b).sum(&c), a.sum(&b.sum(&c)));
        prop_assert_eq!(a.sum(&IndexSet::unit()), a.clone());
    }

    #[test]
    fn union_is_a_semilattice(a in index_set(), b in index_set(), c in index_set()) {
        prop_assert_eq!(a.union(&b), b.union(&a));
        prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
        prop_assert_eq!(a.union(&a), a.clone());
    }

    #[test]
    fn sum_distributes_over_union(a in index_set(), b in index_set(), c in index_set()) {
        prop_assert_eq!(a.sum(&b.union(&c)), a.sum(&b).union(&a.sum(&c)));
    }

    #[test]
    fn shift_is_sum_with_singleton(a in index_set(), s in exponent()) {
        prop_assert_eq!(a.shift(s), a.sum(&IndexSet::single(s)));
        prop_assert_eq!(a.shift(s).shift(-s), a.clone());
    }

    #[test]
    fn leading_order_is_additive(a in index_set(), b in index_set(), d in dims()) {
        let la = a.leading_order(&d).unwrap();
        let lb = b.leading_order(&d).unwrap();
        let ls = a.sum(&b).leading_order(&d).unwrap();
        prop_assert_eq!((la.alpha + lb.alpha).eval(&d), ls.alpha.eval(&d));
        prop_assert!(ls.p >= la.p + lb.p);
    }

    #[test]
    fn canonical_and_membership(a in index_set(), b in index_set()) {
        let s = a.sum(&b);
        prop_assert!(s.is_canonical());
        for x in &a.terms {
            for y in &b.terms {
                prop_assert!(s.contains(&IndexTerm::new(x.alpha + y.alpha, x.p + y.p)));
            }
        }
        let u = a.union(&b);
        prop_assert!(a.terms.iter().chain(&b.terms).all(|t| u.contains(t)));
    }

    #[test]
    fn infinite_sentinel_laws(a in order()) {
        prop_assert_eq!(a.sum(&Order::Infinite), Order::Infinite);
        prop_assert_eq!(a.union(&Order::Infinite), a.clone());
    }

    #[test]
    fn b_composition_is_associative(k in prop::array::uniform3(-6i64..0), e in prop::array::uniform3(order())) {
        let op = |i: usize| CalculusOrders::b(q(k[i], 2), e[i].clone());
        let left = b_compose(&b_compose(&op(0), &op(1)).unwrap(), &op(2)).unwrap();
        let right = b_compose(&op(0), &b_compose(&op(1), &op(2)).unwrap()).unwrap();
        prop_assert_eq!(left.face_orders, right.face_orders);
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn sc_pipeline_matches_closed_form(
        ka in -6i64..0, kb in -6i64..0,
        a110 in order(), a220 in order(), b110 in order(), b220 in order(), d in dims(),
    ) {
        let a = CalculusOrders::sc(q(ka, 2), a110, a220);
        let b = CalculusOrders::sc(q(kb, 2), b110, b220);
        let closed = sc_compose_closed(&a, &b).unwrap();
        let piped = sc_compose(&a, &b, &d).unwrap();
        prop_assert_eq!(closed.face_orders, piped.face_orders);
    }
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn cone_kernel_symmetric_positive(nu in 0.0f64..6.0, n in 2u32..6, x in 0.01f64..3.0, xp in 0.01f64..3.0, t in 0.01f64..4.0) {
        let a = cone_mode_kernel(nu, n, x, xp, t).unwrap();
        let b = cone_mode_kernel(nu, n, xp, x, t).unwrap();
        prop_assert!(a > 0.0 && a.is_finite());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn euclidean_kernel_symmetric_positive(z in prop::collection::vec(-3.0f64..3.0, 3), zp in prop::collection::vec(-3.0f64..3.0, 3), t in 0.05f64..4.0) {
        let a = euclidean_kernel(3, &z, &zp, t).unwrap();
        let b = euclidean_kernel(3, &zp, &z, t).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn cylinder_kernel_symmetric_positive(s in -4.0f64..4.0, sp in -4.0f64..4.0, t in 0.05f64..4.0, mu in 0.0f64..30.0) {
        let a = b_cylinder_kernel(s, sp, t, mu).unwrap();
        let b = b_cylinder_kernel(sp, s, t, mu).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-14 * a.max(1e-300));
    }

    #[test]
    fn disjoint_blowups_commute(
        k in 4usize..7,
        picks in prop::collection::vec(any::<bool>(), 6),
    ) {
        let names: Vec<(String, String)> = (0..k).map(|i| (format!("F{i}"), format!("x{i}"))).collect();
        let refs: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let base = CornerSpace::product("p", &refs);
        let (mut s1, mut s2): (Vec<&str>, Vec<&str>) = (Vec::new(), Vec::new());
        for (i, (f, _)) in refs.iter().enumerate() {
            if picks[i] { s1.push(f) } else { s2.push(f) }
        }
        prop_assume!(s1.len() >= 2 && s2.len() >= 2);
        let c_a = BlowupCenter::radial(s1.iter().copied(), s1.len() as i64);
        let c_b = BlowupCenter::radial(s2.iter().copied(), s2.len() as i64);
        let ab = base.blow_up(c_a.clone(), "G").unwrap().blow_up(c_b.clone(), "H").unwrap();
        let ba = base.blow_up(c_b, "H").unwrap().blow_up(c_a, "G").unwrap();
        let mut fa = ab.face_names();
        let mut fb = ba.face_names();
        fa.sort();
        fb.sort();
        prop_assert_eq!(fa, fb);
        prop_assert_eq!(&ab.face_lifts, &ba.face_lifts);
        for (_, v) in &refs {
            prop_assert_eq!(ab.lift_of_var(v).unwrap(), ba.lift_of_var(v).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(config(32))]

    /// Any trial space gives Galerkin values at or above the discrete eigenvalues.
    #[test]
    fn minimax_upper_bound(
        c in 0.4f64..1.5, eps in 0.02f64..0.3, l in 0u32..3,
        coef in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..4),
    ) {
        let fam = WarpFamily::capped(3, c, l).unwrap();
        let mu = fam.cross_section.modes[l as usize].mu;
        let op = fam.radial_operator(mu, eps).unwrap();
        let grid = SLGrid::for_operator(&op, 128).unwrap();
        let sol = solve_mode(&op, &grid, coef.len()).unwrap();
        let g = sol.gamma;
        let fns: Vec<Box<dyn Fn(f64) -> f64>> = coef
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let a = a.clone();
                Box::new(move |x: f64| {
                    x.powf(g) * (1.0 - x) * (1.0 + a[0] * x + a[1] * x * x + a[2] * x.powi(3) + x.powi(i as i32 + 4))
                }) as Box<dyn Fn(f64) -> f64>
            })
            .collect();
        let trial: Vec<&dyn Fn(f64) -> f64> = fns.iter().map(|f| f.as_ref()).collect();
        let bounds = rayleigh_minimax_bound(&op, &grid, &trial).unwrap();
        for (b, l) in bounds.iter().zip(&sol.values) {
            prop_assert!(*b >= l * (1.0 - 1e-9), "bound {} below eigenvalue {}", b, l);
        }
    }
}
