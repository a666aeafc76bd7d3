use metric_currents::complex_ops::{gaussian_bump, real_probe_forms};
use metric_currents::current::Boundary;
use metric_currents::slicing::{
    delbar_slice_commutation_check, halves, mollified_slice, sheet_counts, slice_integral_check,
    slice_integral_check_many, slice_points, slice_points_regular, BaseGrid, SliceOptions,
};
use metric_currents::{
    fixtures, CoordinateProjection, Current, Expr, MetricForm, QuadOptions, C64,
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn z1() -> CoordinateProjection {
    CoordinateProjection::new(vec![0])
}

#[test]
fn graph_fiber_is_one_point() {
    let t = fixtures::parabola_graph().unwrap();
    let s = slice_points(&t, &z1(), &[c(0.25, 0.0)], &SliceOptions::default()).unwrap();
    assert!(s.regular);
    assert_eq!(s.atoms.len(), 1);
    let a = &s.atoms[0];
    assert_eq!(a.multiplicity, 1);
    assert!((a.point[0] - c(0.25, 0.0)).norm() < 1e-12);
    assert!((a.point[1] - c(0.0625, 0.0)).norm() < 1e-12);
}

#[test]
fn branch_pair_has_two_sheets() {
    let t = fixtures::two_branch(0.3, 1.0).unwrap();
    let s = slice_points(&t, &z1(), &[c(0.25, 0.0)], &SliceOptions::default()).unwrap();
    assert!(s.regular);
    assert_eq!(s.total(), 2);
    let mut ws: Vec<f64> = s.atoms.iter().map(|a| a.point[1].re).collect();
    ws.sort_by(f64::total_cmp);
    assert!(
        (ws[0] + 0.5).abs() < 1e-12 && (ws[1] - 0.5).abs() < 1e-12,
        "{ws:?}"
    );
    for a in &s.atoms {
        assert_eq!(a.multiplicity, 1);
        assert!((a.point[0] - c(0.25, 0.0)).norm() < 1e-9);
        assert!(a.point[1].im.abs() < 1e-12);
    }
}

#[test]
fn empty_slice_outside_support() {
    let t = fixtures::parabola_graph().unwrap();
    let s = slice_points(&t, &z1(), &[c(3.0, 0.5)], &SliceOptions::default()).unwrap();
    assert!(s.atoms.is_empty() && s.regular);
    assert_eq!(s.evaluate(&Expr::one()).unwrap(), c(0.0, 0.0));
}

#[test]
fn multiplicities_follow_cell_weights() {
    let t = fixtures::disk_in(1, 1.0, c(0.0, 0.0), 2).unwrap();
    let s = slice_points(&t, &z1(), &[c(0.1, -0.3)], &SliceOptions::default()).unwrap();
    assert_eq!(s.total(), 2);
    let neg = fixtures::disk().unwrap().scaled(-1);
    let s = slice_points(&neg, &z1(), &[c(0.1, -0.3)], &SliceOptions::default()).unwrap();
    assert_eq!(s.total(), -1);
}

#[test]
fn conjugate_orientation_flips_sign() {
    // the disk parametrized through conj(z) has reversed orientation
    let t = fixtures::disk().unwrap();
    let flip = metric_currents::ExpressionMap::new(2, vec![Expr::z(0).conj()]).unwrap();
    let s = slice_points(
        &t.pushforward(&flip).unwrap(),
        &z1(),
        &[c(0.2, 0.2)],
        &SliceOptions::default(),
    )
    .unwrap();
    assert_eq!(s.total(), -1);
}

#[test]
fn critical_base_point_is_flagged_and_perturbed() {
    // polar parametrization degenerates at the center
    let t = fixtures::disk().unwrap();
    let o = SliceOptions::default();
    let s = slice_points(&t, &z1(), &[c(0.0, 0.0)], &o).unwrap();
    assert!(!s.regular);
    let s = slice_points_regular(&t, &z1(), &[c(0.0, 0.0)], &o).unwrap();
    assert!(s.regular && s.total() == 1);
    assert!(s.base[0].norm() > 0.0 && s.base[0].norm() <= 1e-6 + 1e-15);
    for a in &s.atoms {
        assert!((a.point[0] - s.base[0]).norm() < 1e-9);
    }
}

#[test]
fn slice_argument_errors() {
    let t = fixtures::parabola_graph().unwrap();
    let o = SliceOptions::default();
    assert!(slice_points(
        &t,
        &CoordinateProjection::new(vec![0, 1]),
        &[c(0.0, 0.0); 2],
        &o
    )
    .is_err());
    assert!(slice_points(&t, &CoordinateProjection::new(vec![5]), &[c(0.0, 0.0)], &o).is_err());
    assert!(slice_points(&t, &z1(), &[], &o).is_err());
}

#[test]
fn four_dimensional_slice() {
    let t = fixtures::bidisk_graph().unwrap();
    let p = CoordinateProjection::new(vec![0, 1]);
    let x = [c(0.3, 0.1), c(-0.2, 0.4)];
    let s = slice_points(&t, &p, &x, &SliceOptions::default()).unwrap();
    assert!(s.regular);
    assert_eq!(s.total(), 1);
    let a = &s.atoms[0];
    assert!((a.point[2] - x[0] * x[0]).norm() < 1e-10);
    assert!((a.point[3] - x[0] * x[1]).norm() < 1e-10);
    // w1 = z1^2 covers the base twice
    let p = CoordinateProjection::new(vec![2, 1]);
    let s = slice_points(
        &t,
        &p,
        &[c(0.25, 0.0), c(0.1, 0.1)],
        &SliceOptions::default(),
    )
    .unwrap();
    assert_eq!(s.total(), 2);
}

fn assert_slice_integral(
    t: &metric_currents::RectifiableCurrent,
    grid: impl Fn(usize) -> BaseGrid,
    fs: &[Expr],
) {
    let o = SliceOptions::default();
    let q = QuadOptions {
        order: 32,
        panels: 2,
    };
    let coarse = slice_integral_check_many(t, &z1(), fs, &grid(16), &o, &q).unwrap();
    let fine = slice_integral_check_many(t, &z1(), fs, &grid(32), &o, &q).unwrap();
    for (c, f) in coarse.iter().zip(&fine) {
        assert_eq!(c.grid_points, 256);
        assert!(c.residual < 1e-4, "{c:?}");
        assert!(halves(c.residual, f.residual, 1e-11), "{c:?} {f:?}");
    }
}

#[test]
fn slice_integral_on_disk() {
    let t = fixtures::disk().unwrap();
    let fs = [
        Expr::one(),
        gaussian_bump(&[0.3, -0.2], 0.7),
        Expr::z(0).powi(2).re(),
    ];
    assert_slice_integral(&t, |n| BaseGrid::polar(c(0.0, 0.0), 0.0, 1.0, n), &fs);
}

#[test]
fn slice_integral_on_branch_pair() {
    let t = fixtures::two_branch(0.3, 1.0).unwrap();
    let fs = [
        Expr::one(),
        gaussian_bump(&[0.3, -0.2, 0.5, 0.1], 0.8),
        Expr::z(1).re(),
    ];
    assert_slice_integral(&t, |n| BaseGrid::polar(c(0.0, 0.0), 0.09, 1.0, n), &fs);
}

#[test]
fn slice_integral_midpoint_grid_converges() {
    // smooth f vanishing near the rim keeps the midpoint rule second order
    let t = fixtures::disk().unwrap();
    let r2 = (Expr::z(0) * Expr::z(0).conj()).re();
    let f = (Expr::one() - r2).pos().powi(3);
    let o = SliceOptions::default();
    let q = QuadOptions::order(24);
    let g = |n| BaseGrid::box_midpoint(&[c(-1.0, -1.0)], &[c(1.0, 1.0)], n);
    let a = slice_integral_check(&t, &z1(), &f, &g(16), &o, &q).unwrap();
    let b = slice_integral_check(&t, &z1(), &f, &g(32), &o, &q).unwrap();
    assert!((a.current_side.re - std::f64::consts::PI / 4.0).abs() < 1e-12);
    assert!(
        a.residual < 1e-2 && halves(a.residual, b.residual, 1e-11),
        "{a:?} {b:?}"
    );
}

#[test]
fn vanishing_function_gives_zero_on_both_sides() {
    let t = fixtures::disk().unwrap();
    let r2 = (Expr::z(0) * Expr::z(0).conj()).re();
    let f = (r2 - Expr::real(4.0)).pos();
    let rep = slice_integral_check(
        &t,
        &z1(),
        &f,
        &BaseGrid::polar(c(0.0, 0.0), 0.0, 1.0, 8),
        &SliceOptions::default(),
        &QuadOptions::default(),
    )
    .unwrap();
    assert_eq!(rep.slice_side, c(0.0, 0.0));
    assert_eq!(rep.current_side, c(0.0, 0.0));
}

#[test]
fn sheet_count_constant_along_paths() {
    let o = SliceOptions::default();
    let circle: Vec<Vec<C64>> = (0..20)
        .map(|j| vec![C64::from_polar(0.5, 0.1 + j as f64 * 0.31)])
        .collect();
    let t = fixtures::two_branch(0.3, 1.0).unwrap();
    assert!(sheet_counts(&t, &z1(), &circle, &o)
        .unwrap()
        .iter()
        .all(|&n| n == 2));

    let segment: Vec<Vec<C64>> = (0..20)
        .map(|j| vec![c(-0.9 + 0.09 * j as f64, 0.05)])
        .collect();
    let t = fixtures::parabola_graph().unwrap();
    assert!(sheet_counts(&t, &z1(), &segment, &o)
        .unwrap()
        .iter()
        .all(|&n| n == 1));

    let t = fixtures::bidisk_graph().unwrap();
    let p = CoordinateProjection::new(vec![2, 1]);
    let path: Vec<Vec<C64>> = (0..20)
        .map(|j| vec![C64::from_polar(0.4, 0.3 * j as f64), c(0.1, -0.2)])
        .collect();
    assert!(sheet_counts(&t, &p, &path, &o)
        .unwrap()
        .iter()
        .all(|&n| n == 2));
}

#[test]
fn mollified_slice_converges_quadratically() {
    let t = fixtures::parabola_graph().unwrap();
    let f = gaussian_bump(&[0.4, 0.1, -0.3, 0.2], 0.6);
    let exact = slice_points_regular(&t, &z1(), &[c(0.0, 0.0)], &SliceOptions::default())
        .unwrap()
        .evaluate(&f)
        .unwrap();
    let mut errs = Vec::new();
    for (eps, panels) in [(0.2, 5), (0.1, 10), (0.05, 20)] {
        let s = mollified_slice(&t, &z1(), &[c(0.0, 0.0)], eps).unwrap();
        assert_eq!(s.dim(), 0);
        let v = s
            .evaluate(
                &MetricForm::new(f.clone(), vec![]),
                &QuadOptions { order: 8, panels },
            )
            .unwrap();
        errs.push((v - exact).norm());
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..5.0).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn mollified_slice_trivial_cases() {
    let t = fixtures::parabola_graph().unwrap();
    let q = QuadOptions {
        order: 8,
        panels: 4,
    };
    let s = mollified_slice(&t, &z1(), &[c(0.0, 0.0)], 0.25).unwrap();
    assert_eq!(
        s.evaluate(&MetricForm::new(Expr::zero(), vec![]), &q)
            .unwrap(),
        c(0.0, 0.0)
    );
    let far = mollified_slice(&t, &z1(), &[c(5.0, 0.0)], 0.05).unwrap();
    assert_eq!(
        far.evaluate(&MetricForm::new(Expr::one(), vec![]), &q)
            .unwrap(),
        c(0.0, 0.0)
    );
    assert!(mollified_slice(&t, &z1(), &[c(0.0, 0.0)], 0.0).is_err());
}

#[test]
fn boundary_of_slice_is_slice_of_boundary() {
    // slicing a 3-current by one complex coordinate: the sign is (-1)^2
    let t = fixtures::disk_cylinder().unwrap();
    let dt = t.boundary().unwrap();
    let q = QuadOptions {
        order: 12,
        panels: 4,
    };
    let fs = [
        (Expr::z(1) - Expr::real(0.25) * Expr::z(0).powi(2)).re(),
        gaussian_bump(&[0.1, 0.0, 0.3, -0.2], 0.9),
    ];
    for f in &fs {
        let sl = mollified_slice(&t, &z1(), &[c(0.0, 0.0)], 0.25).unwrap();
        let lhs = Boundary { inner: &sl }
            .evaluate(&MetricForm::new(f.clone(), vec![]), &q)
            .unwrap();
        let sdt = mollified_slice(&dt, &z1(), &[c(0.0, 0.0)], 0.25).unwrap();
        let rhs = sdt
            .evaluate(&MetricForm::new(f.clone(), vec![]), &q)
            .unwrap();
        assert!((lhs - rhs).norm() < 1e-8, "{lhs} {rhs}");
    }
    // on T the first function is 2s - 1, so both sides equal 2
    let sl = mollified_slice(&t, &z1(), &[c(0.0, 0.0)], 0.25).unwrap();
    let v = Boundary { inner: &sl }
        .evaluate(&MetricForm::new(fs[0].clone(), vec![]), &q)
        .unwrap();
    assert!((v - c(2.0, 0.0)).norm() < 1e-10, "{v}");
}

#[test]
fn delbar_commutes_with_holomorphic_slicing() {
    // the two pipelines agree pointwise, so a coarse rule suffices
    let q = QuadOptions {
        order: 4,
        panels: 4,
    };
    for t in [
        fixtures::bidisk_graph_c3().unwrap(),
        fixtures::bidisk_graph().unwrap(),
    ] {
        let probes = real_probe_forms(1, 10, &t.support_bbox(), 31);
        let rep =
            delbar_slice_commutation_check(&t, &[Expr::z(1)], &[c(0.0, 0.0)], 0.25, &probes, &q)
                .unwrap();
        assert_eq!(rep.slice_of_delbar.len(), 10);
        assert!(rep.residual < 1e-8, "{rep:?}");
        assert!(
            rep.slice_of_delbar.iter().any(|v| v.norm() > 1e-6),
            "{rep:?}"
        );
    }
}

#[test]
fn commutation_requires_holomorphic_map() {
    let t = fixtures::bidisk_graph_c3().unwrap();
    let probes = real_probe_forms(1, 1, &t.support_bbox(), 1);
    let r = delbar_slice_commutation_check(
        &t,
        &[Expr::z(1).conj()],
        &[c(0.0, 0.0)],
        0.25,
        &probes,
        &QuadOptions::default(),
    );
    assert!(r.is_err());
}
