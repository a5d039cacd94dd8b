use carnot_homog::paths::{cc_bracket, cc_lower, integrate, CcBudget, Control};
use carnot_homog::{GroupPoint, GroupSpec};
use proptest::prelude::*;

fn groups() -> impl Strategy<Value = GroupSpec> {
    prop_oneof![Just(GroupSpec::heisenberg1()), Just(GroupSpec::engel())]
}

/// A group, a start point and a control with 1 to 6 pieces.
fn setup() -> impl Strategy<Value = (GroupSpec, GroupPoint, Control)> {
    groups().prop_flat_map(|g| {
        let n = g.dim();
        (
            Just(g),
            prop::collection::vec(-1.5f64..1.5, n),
            prop::collection::vec((0.05f64..1.0, -2.0f64..2.0, -2.0f64..2.0), 1..7),
        )
            .prop_map(|(g, x, ps)| {
                let pieces = ps
                    .into_iter()
                    .map(|(d, a, b)| carnot_homog::paths::Piece { duration: d, velocity: vec![a, b] })
                    .collect();
                let x = g.point(&x).unwrap();
                (g, x, Control::new(pieces).unwrap())
            })
    })
}

fn close(a: &GroupPoint, b: &GroupPoint, tol: f64) -> bool {
    let scale = 1.0 + a.coords().iter().chain(b.coords()).fold(0.0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) <= tol * scale
}

proptest! {
    #[test]
    fn left_translation_commutes_with_integration((g, x, c) in setup(), z in prop::collection::vec(-1.0f64..1.0, 4)) {
        let z = g.point(&z[..g.dim()]).unwrap();
        let p = integrate(&g, &x, &c, 2).unwrap();
        let q = integrate(&g, &g.compose(&z, &x), &c, 2).unwrap();
        prop_assert!(close(&q.end(), &g.compose(&z, &p.end()), 1e-11));
    }

    #[test]
    fn dilated_controls_give_dilated_paths((g, x, c) in setup(), lambda in 0.2f64..3.0) {
        let p = integrate(&g, &x, &c, 1).unwrap();
        let d = p.dilate(&g, lambda, 1).unwrap();
        prop_assert!(close(&d.end(), &g.dilate(lambda, &p.end()).unwrap(), 1e-11));
        prop_assert!((c.dilate(lambda).length() - lambda * c.length()).abs() <= 1e-12 * (1.0 + c.length()));
    }

    #[test]
    fn time_rescaling_keeps_endpoint_and_length((g, x, c) in setup(), k in 0.2f64..5.0) {
        let r = c.time_rescale(k).unwrap();
        prop_assert!((r.total_time() - c.total_time() / k).abs() <= 1e-12 * c.total_time());
        prop_assert!((r.length() - c.length()).abs() <= 1e-12 * (1.0 + c.length()));
        prop_assert!(close(&r.endpoint(&g, &x), &c.endpoint(&g, &x), 1e-11));
    }

    #[test]
    fn concatenation_composes_increments((g, x, c) in setup(), (_, _, d) in setup()) {
        let e = g.identity();
        let whole = c.concat(&d).endpoint(&g, &x);
        let split = g.compose(&c.endpoint(&g, &x), &d.endpoint(&g, &e));
        prop_assert!(close(&whole, &split, 1e-11));
    }

    #[test]
    fn resampling_keeps_time_and_bounds_length((_g, _x, c) in setup(), n in 1usize..12) {
        let r = c.resample_uniform(n);
        prop_assert_eq!(r.len(), n);
        prop_assert!((r.total_time() - c.total_time()).abs() <= 1e-12);
        // Averaging velocities can only shorten the curve.
        prop_assert!(r.length() <= c.length() * (1.0 + 1e-12));
    }

    #[test]
    fn cc_bracket_is_ordered_and_witnessed(g in groups(), x in prop::collection::vec(-1.0f64..1.0, 4)) {
        let y = g.identity();
        let x = g.point(&x[..g.dim()]).unwrap();
        let b = cc_bracket(&g, &x, &y, CcBudget::NONE).unwrap();
        prop_assert!(b.lower <= b.upper * (1.0 + 1e-9));
        prop_assert!((b.lower - cc_lower(&g, &x, &y)).abs() <= 1e-15);
        let end = b.witness.endpoint(&g, &y);
        prop_assert!(end.max_abs_diff(&x) < 1e-9, "{end:?} vs {x:?}");
    }
}

#[test]
fn straight_line_is_an_x_line() {
    let g = GroupSpec::engel();
    let q = [0.7, -1.1];
    let c = Control::constant(&q, 2.0, 5);
    let p = integrate(&g, &g.identity(), &c, 3).unwrap();
    assert!(p.end().max_abs_diff(&g.x_line_e(&q, 2.0)) < 1e-13);
    assert_eq!(p.samples.len(), 16);
    assert!(p.integration_error < 1e-13);
}

#[test]
fn malformed_controls_are_rejected() {
    use carnot_homog::paths::Piece;
    assert!(Control::new(vec![Piece { duration: 0.0, velocity: vec![1.0, 0.0] }]).is_err());
    assert!(Control::new(vec![
        Piece { duration: 1.0, velocity: vec![1.0, 0.0] },
        Piece { duration: 1.0, velocity: vec![1.0] }
    ])
    .is_err());
    let g = GroupSpec::heisenberg1();
    let c = Control::constant(&[1.0, 0.0, 0.0], 1.0, 1);
    assert!(integrate(&g, &g.identity(), &c, 1).is_err());
    assert!(integrate(&g, &g.identity(), &Control::constant(&[1.0, 0.0], 1.0, 1), 0).is_err());
}
