use carnot_homog::{GroupPoint, GroupSpec};
use proptest::prelude::*;

fn groups() -> impl Strategy<Value = GroupSpec> {
    prop_oneof![Just(GroupSpec::heisenberg1()), Just(GroupSpec::engel())]
}

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn with_points(k: usize) -> impl Strategy<Value = (GroupSpec, Vec<GroupPoint>)> {
    groups().prop_flat_map(move |g| {
        let n = g.dim();
        (Just(g.clone()), prop::collection::vec(coords(n), k))
            .prop_map(|(g, cs)| {
                let pts = cs.iter().map(|c| g.point(c).unwrap()).collect();
                (g, pts)
            })
    })
}

fn close(a: &GroupPoint, b: &GroupPoint, tol: f64) -> bool {
    let scale = 1.0 + a.coords().iter().chain(b.coords()).fold(0.0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) <= tol * scale
}

proptest! {
    #[test]
    fn composition_is_associative((g, p) in with_points(3)) {
        let l = g.compose(&g.compose(&p[0], &p[1]), &p[2]);
        let r = g.compose(&p[0], &g.compose(&p[1], &p[2]));
        prop_assert!(close(&l, &r, 1e-12), "{l:?} vs {r:?}");
    }

    #[test]
    fn inverse_cancels_on_both_sides((g, p) in with_points(1)) {
        let e = g.identity();
        prop_assert!(close(&g.compose(&p[0], &g.inverse(&p[0])), &e, 1e-12));
        prop_assert!(close(&g.compose(&g.inverse(&p[0]), &p[0]), &e, 1e-12));
        prop_assert!(close(&g.compose(&e, &p[0]), &p[0], 0.0));
    }

    #[test]
    fn dilation_is_an_automorphism((g, p) in with_points(2), lambda in 0.05f64..8.0) {
        let l = g.dilate(lambda, &g.compose(&p[0], &p[1])).unwrap();
        let r = g.compose(&g.dilate(lambda, &p[0]).unwrap(), &g.dilate(lambda, &p[1]).unwrap());
        prop_assert!(close(&l, &r, 1e-12), "{l:?} vs {r:?}");
    }

    #[test]
    fn norm_is_homogeneous_and_symmetric((g, p) in with_points(1), lambda in 0.05f64..8.0) {
        let n = g.hnorm(&p[0]);
        let nd = g.hnorm(&g.dilate(lambda, &p[0]).unwrap());
        prop_assert!((nd - lambda * n).abs() <= 1e-12 * (1.0 + nd));
        let ni = g.hnorm(&g.inverse(&p[0]));
        prop_assert!((ni - n).abs() <= 1e-12 * (1.0 + n));
        prop_assert!(n >= 0.0);
    }

    #[test]
    fn x_lines_scale_under_dilation(g in groups(), q in coords(2), c in 0.1f64..5.0, t in -2.0f64..2.0) {
        let l = g.x_line_e(&q, c * t);
        let r = g.dilate(c, &g.x_line_e(&q, t)).unwrap();
        prop_assert!(close(&l, &r, 1e-10), "{l:?} vs {r:?}");
    }

    #[test]
    fn x_lines_are_one_parameter_subgroups(g in groups(), q in coords(2), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let l = g.x_line_e(&q, s + t);
        let r = g.compose(&g.x_line_e(&q, s), &g.x_line_e(&q, t));
        prop_assert!(close(&l, &r, 1e-12));
    }
}

#[test]
fn heisenberg_law_by_hand() {
    let g = GroupSpec::heisenberg1();
    let x = g.point(&[1.0, 0.0, 0.0]).unwrap();
    let y = g.point(&[0.0, 1.0, 0.0]).unwrap();
    let xy = g.compose(&x, &y);
    let yx = g.compose(&y, &x);
    assert_eq!(xy.coords(), &[1.0, 1.0, 0.5]);
    assert_eq!(yx.coords(), &[1.0, 1.0, -0.5]);
    // The commutator is purely vertical.
    let c = g.compose(&g.compose(&x, &y), &g.compose(&g.inverse(&x), &g.inverse(&y)));
    assert_eq!(c.coords(), &[0.0, 0.0, 1.0]);
}

#[test]
fn engel_inverse_is_not_negation() {
    let g = GroupSpec::engel();
    let x = g.point(&[1.0, 2.0, 0.0, 0.0]).unwrap();
    let inv = g.inverse(&x);
    assert_ne!(inv.coords(), &[-1.0, -2.0, 0.0, 0.0]);
    let e = g.compose(&x, &inv);
    assert!(e.coords().iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn unknown_group_and_bad_points_are_rejected() {
    assert!(GroupSpec::by_name("sl2").is_err());
    let g = GroupSpec::heisenberg1();
    assert!(g.point(&[0.0, 0.0]).is_err());
    assert!(g.point(&[0.0, f64::INFINITY, 0.0]).is_err());
    assert!(g.dilate(-1.0, &g.identity()).is_err());
}
