use metric_currents::boundary_solver::arrangement::winding_number;
use metric_currents::boundary_solver::*;
use metric_currents::{fixtures, CurrentError, Expr, RectifiableCurrent, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn circle(coords: &[Expr], radius: f64, center: C64) -> RectifiableCurrent {
    fixtures::curve_over_circle(coords, radius, center, 1).unwrap()
}

fn parabola_cycle() -> RectifiableCurrent {
    let z = Expr::z(0);
    circle(&[z.clone(), z.powi(2)], 1.0, c(0.0, 0.0))
}

fn stage(r: Result<impl std::fmt::Debug, CurrentError>) -> String {
    match r {
        Err(CurrentError::Stage { stage, .. }) => stage,
        other => panic!("expected a stage error, got {other:?}"),
    }
}

#[test]
fn circle_validates_without_crossings() {
    let rep = validate_cycle(&parabola_cycle(), &BoundaryOptions::default()).unwrap();
    assert!(rep.passed && rep.moment_condition_flag, "{rep:?}");
    assert!(rep.crossings.is_empty());
    // |dz/du| = 2 pi everywhere
    assert!((rep.immersion_ratio - 1.0).abs() < 1e-12);
    assert!(rep.cycle_residual < 1e-8);
}

#[test]
fn figure_eight_has_one_transversal_crossing() {
    let rep = validate_cycle(&fixtures::figure_eight().unwrap(), &BoundaryOptions::default()).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert_eq!(rep.crossings.len(), 1, "{:?}", rep.crossings);
    let x = &rep.crossings[0];
    assert!(x.point.norm() < 1e-10);
    // tangents 2 pi (1 + i) and 2 pi (-1 + i) are orthogonal
    assert!((x.sin_angle - 1.0).abs() < 1e-9);
}

#[test]
fn collapsed_shadow_fails_immersion() {
    let z = Expr::z(0);
    let m = circle(&[z.re(), z.powi(2)], 1.0, c(0.0, 0.0));
    let rep = validate_cycle(&m, &BoundaryOptions::default()).unwrap();
    assert!(!rep.immersed && !rep.passed, "{rep:?}");
    assert_eq!(stage(solve_scalar(&m, 1, &BoundaryOptions::default())), "validate_cycle");
}

#[test]
fn open_curve_fails_cycle_check() {
    let z = Expr::z(0);
    // upper half of the unit circle
    let shadow = fixtures::circle_point(&(Expr::real(0.5) * Expr::var(0)));
    let m = fixtures::curve_from_shadow(&shadow, &[z.clone(), z.powi(2)], 1).unwrap();
    let rep = validate_cycle(&m, &BoundaryOptions::default()).unwrap();
    assert!(!rep.closed && !rep.passed, "{rep:?}");
}

#[test]
fn arrangement_of_circle_has_two_faces() {
    let arr = build_arrangement(&parabola_cycle(), &BoundaryOptions::default()).unwrap();
    let mut w: Vec<(i64, bool)> = arr.faces.iter().map(|f| (f.winding, f.unbounded)).collect();
    w.sort();
    assert_eq!(w, vec![(0, true), (1, false)]);
    assert_eq!(arr.adjacency, vec![(0, 1)]);
    assert_eq!(arr.face_at(c(0.1, 0.2)).map(|f| arr.faces[f].winding), Some(1));
    assert_eq!(arr.face_at(c(5.0, 0.0)), Some(arr.unbounded_face()));
    assert_eq!(arr.face_at(c(1.0, 0.0)), None);
}

#[test]
fn figure_eight_arrangement_matches_winding_oracle() {
    let arr = build_arrangement(&fixtures::figure_eight().unwrap(), &BoundaryOptions::default()).unwrap();
    let mut w: Vec<i64> = arr.faces.iter().map(|f| f.winding).collect();
    w.sort();
    assert_eq!(w, vec![-1, 0, 1]);
    // independent oracle: the lobes of sin(2 pi t)(1 + i cos(2 pi t)) at x = +-1/2
    for (p, want) in [(c(0.5, 0.0), 1.0), (c(-0.5, 0.0), 1.0), (c(0.0, 0.9), 0.0)] {
        let got = winding_number(&arr.curves, p);
        let face = arr.face_at(p).unwrap();
        assert_eq!(arr.faces[face].winding as f64, got.round());
        assert!((got.abs() - want).abs() < 1e-9, "{p}: {got}");
    }
    let l = arr.faces[arr.face_at(c(0.5, 0.0)).unwrap()].winding;
    let r = arr.faces[arr.face_at(c(-0.5, 0.0)).unwrap()].winding;
    assert_eq!(l, -r);
}

#[test]
fn two_disjoint_circles_give_three_faces() {
    let z = Expr::z(0);
    let m = circle(&[z.clone(), z.powi(2)], 0.5, c(-1.0, 0.0))
        .plus(&circle(&[z.clone(), z.powi(2)], 0.5, c(1.0, 0.0)))
        .unwrap();
    let arr = build_arrangement(&m, &BoundaryOptions::default()).unwrap();
    let mut w: Vec<i64> = arr.faces.iter().map(|f| f.winding).collect();
    w.sort();
    assert_eq!(w, vec![0, 1, 1]);
}

#[test]
fn moments_of_parabola_cycle() {
    let m = parabola_cycle();
    for z in [c(0.1, -0.2), c(-0.5, 0.4), c(0.0, 0.0)] {
        let n = cauchy_moments(&m, 1, z, 3, 24, 128).unwrap();
        // residue at zeta = z of zeta^{2s} / (zeta - z)
        for (s, v) in n.iter().enumerate() {
            assert!((v - z.powu(2 * s as u32)).norm() < 1e-12, "s={s} z={z}: {v}");
        }
    }
    for z in [c(1.5, 0.0), c(-2.0, 3.0)] {
        let n = cauchy_moments(&m, 1, z, 3, 24, 128).unwrap();
        assert!(n.iter().all(|v| v.norm() < 1e-12), "{n:?}");
    }
    assert_eq!(stage(cauchy_moments(&m, 1, c(1.0, 0.0), 2, 24, 128)), "cauchy_moments");
    assert!(cauchy_moments(&m, 2, c(0.0, 0.0), 2, 24, 128).is_err());
}

fn zero_sheet_exterior(faces: &[(bool, usize)]) {
    for (unbounded, sheets) in faces {
        if *unbounded {
            assert_eq!(*sheets, 0);
        }
    }
}

#[test]
fn scalar_solve_of_parabola_cycle() {
    let s = solve_scalar(&parabola_cycle(), 1, &BoundaryOptions::default()).unwrap();
    assert_eq!(s.faces.len(), 2);
    zero_sheet_exterior(&s.faces.iter().map(|f| (f.unbounded, f.sheets)).collect::<Vec<_>>());
    let disk = s.faces.iter().find(|f| !f.unbounded).unwrap();
    assert_eq!((disk.sheets, disk.sign), (1, 1));
    assert!(disk.grid.len() > 500);
    let err = disk
        .grid
        .iter()
        .zip(&disk.branches)
        .map(|(z, b)| (b[0] - z * z).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    assert!(disk.n0_deviation < 1e-9);
    // N_1 = z^2 is a polynomial on the disk face
    assert!(disk.moment_fit_residual.unwrap() < 1e-8);
}

#[test]
fn branch_pair_boundary_tracks_square_roots() {
    let m = fixtures::two_branch_boundary(0.3, 1.0).unwrap();
    let rep = validate_cycle(&m, &BoundaryOptions::default()).unwrap();
    assert!(rep.passed && rep.overlapping && rep.crossings.is_empty(), "{rep:?}");
    let s = solve_scalar(&m, 1, &BoundaryOptions::default()).unwrap();
    let mut kinds: Vec<(i64, usize, bool)> = s.faces.iter().map(|f| (f.winding, f.sheets, f.unbounded)).collect();
    kinds.sort();
    // exterior, inner disk |z| < 0.09 and the annulus carrying both sheets
    assert_eq!(kinds, vec![(0, 0, false), (0, 0, true), (2, 2, false)]);
    let ann = s.faces.iter().find(|f| f.sheets == 2).unwrap();
    for (z, b) in ann.grid.iter().zip(&ann.branches) {
        assert!((b[0] + b[1]).norm() < 1e-8);
        assert!((b[0] * b[0] - z).norm() < 1e-8);
    }
    // along every tree edge the labels stay on their own branch
    assert!(ann.continuous(), "jump {} vs separation {}", ann.max_jump, ann.min_separation);
    for (g, p) in ann.parent.iter().enumerate() {
        if let Some(p) = p {
            let d = (ann.branches[g][0] - ann.branches[*p][0]).norm();
            assert!(d < (ann.branches[g][0] - ann.branches[*p][1]).norm());
        }
    }
    // the square-root sheets are not single-valued on the annulus
    assert_eq!(stage(assemble(&m, 2, None, &BoundaryOptions::default())), "assemble");
}

#[test]
fn conjugate_perturbation_is_rejected() {
    let z = Expr::z(0);
    let m = circle(&[z.clone(), z.powi(2) + Expr::real(0.1) * z.conj()], 1.0, c(0.0, 0.0));
    let o = BoundaryOptions::default();
    assert!(validate_cycle(&m, &o).unwrap().passed);
    // N_1 = -0.1 / z outside the circle, and e_2 = -0.1 z inside
    let outside = cauchy_moments(&m, 1, c(2.0, 0.0), 2, 24, 128).unwrap();
    assert!((outside[1] + 0.05).norm() < 1e-10, "{outside:?}");
    let inside = cauchy_moments(&m, 1, c(0.5, 0.0), 2, 24, 128).unwrap();
    let e2 = (inside[1] * inside[1] - inside[2]) / 2.0;
    assert!((e2 + 0.05).norm() < 1e-10, "{e2}");
    assert_eq!(stage(solve_scalar(&m, 1, &o)), "moment_condition");
    assert_eq!(stage(assemble(&m, 2, None, &o)), "moment_condition");
}

#[test]
fn parabola_chain_assembles_and_verifies() {
    let m = parabola_cycle();
    let sol = assemble(&m, 2, None, &BoundaryOptions::default()).unwrap();
    let disk = sol.faces.iter().find(|f| f.sheets == 1).unwrap();
    let err = disk
        .grid
        .iter()
        .zip(&disk.branches)
        .map(|(z, b)| (b[0][1] - z * z).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    zero_sheet_exterior(&sol.faces.iter().map(|f| (f.unbounded, f.sheets)).collect::<Vec<_>>());
    assert_eq!(sol.tail_bound, 0.0);
    // mass of the graph of z^2 over the unit disk: pi (1 + 2) = 3 pi
    assert!((sol.mass.total - 3.0 * std::f64::consts::PI).abs() < 1e-8, "{}", sol.mass.total);
    let q = metric_currents::QuadOptions::order(24);
    let r = verify_boundary(&sol.current, &m, 50, 7, &q).unwrap();
    assert!(r.passed && r.normalized < 1e-6, "{r:?}");
    let coarse = verify_boundary(&sol.current, &m, 50, 7, &metric_currents::QuadOptions::order(6)).unwrap();
    assert!(r.max_abs <= coarse.max_abs, "{} vs {}", r.max_abs, coarse.max_abs);
    // negative control
    let zero = RectifiableCurrent::zero(m.ambient.clone(), 2);
    let r0 = verify_boundary(&zero, &m, 50, 7, &q).unwrap();
    assert!(!r0.passed && r0.normalized > 1e-3, "{r0:?}");
}

#[test]
fn figure_eight_chain_has_opposite_lobes() {
    let m = fixtures::figure_eight().unwrap();
    let o = BoundaryOptions::default();
    let s = solve_scalar(&m, 1, &o).unwrap();
    assert_eq!(s.faces.len(), 3);
    let mut signs: Vec<(i64, usize)> = s.faces.iter().map(|f| (f.sign * f.sheets as i64, f.sheets)).collect();
    signs.sort();
    assert_eq!(signs, vec![(-1, 1), (0, 0), (1, 1)]);
    let sol = assemble(&m, 2, None, &o).unwrap();
    for f in sol.faces.iter().filter(|f| f.sheets > 0) {
        for (z, b) in f.grid.iter().zip(&f.branches) {
            assert!((b[0][1] - z * z).norm() < 1e-6);
        }
    }
    let q = metric_currents::QuadOptions { order: 24, panels: 4 };
    let r = verify_boundary(&sol.current, &m, 50, 3, &q).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn nested_circles_give_three_sheets() {
    let m = fixtures::nested_circles().unwrap();
    let sol = assemble(&m, 2, None, &BoundaryOptions::default()).unwrap();
    let mut counts: Vec<usize> = sol.faces.iter().filter(|f| !f.unbounded).map(|f| f.sheets).collect();
    counts.sort();
    assert_eq!(counts, vec![1, 2]);
    assert_eq!(sol.graph_sheets, 3);
    assert!(sol.mass.total.is_finite() && sol.mass.total > 0.0);
    // inner disk: sheets z^2 and z/2 + 3
    let (face, vals) = sol.branches_at(c(0.2, 0.1)).unwrap();
    assert_eq!(face.sheets, 2);
    let z = c(0.2, 0.1);
    let mut w: Vec<C64> = vals.iter().map(|v| v[1]).collect();
    w.sort_by(|a, b| a.re.total_cmp(&b.re));
    assert!((w[0] - z * z).norm() < 1e-6 && (w[1] - (z * 0.5 + 3.0)).norm() < 1e-6, "{w:?}");
    let r = verify_boundary(&sol.current, &m, 50, 11, &metric_currents::QuadOptions::order(24)).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn factorial_tail_is_cauchy() {
    let (m, tail) = fixtures::by_name(
        "factorial-curve",
        &fixtures::FixtureParams {
            n: Some(16),
            ..Default::default()
        },
    )
    .unwrap();
    let tail = tail.unwrap();
    let o = BoundaryOptions::default();
    let a12 = assemble(&m, 12, Some(&tail), &o).unwrap();
    let a16 = assemble(&m, 16, Some(&tail), &o).unwrap();
    // direct summation of sum_{n > 12} (1/n!)^2
    let mut fact: f64 = (1..=12).map(|n| n as f64).product();
    let mut want = 0.0;
    for n in 13..40 {
        fact *= n as f64;
        want += (1.0 / fact).powi(2);
    }
    assert!(want < 1e-19);
    assert!((a12.tail_bound_sq - want).abs() < 1e-6 * want, "{} vs {want}", a12.tail_bound_sq);
    for sol in [&a12, &a16] {
        let disk = sol.faces.iter().find(|f| f.sheets == 1).unwrap();
        for (z, b) in disk.grid.iter().zip(&disk.branches) {
            let mut f = 1.0;
            for j in 1..sol.n_trunc {
                f *= (j + 1) as f64;
                assert!((b[0][j] - z.powu(j as u32 + 1) / f).norm() < 1e-6);
            }
        }
    }
    let d = a12.sup_distance(&a16);
    assert!(d > 0.0 && d < a12.tail_bound, "{d} vs {}", a12.tail_bound);
}

#[test]
fn exact_truncation_has_zero_tail() {
    let m = circle(&fixtures::factorial_coords(12), 1.0, c(0.0, 0.0));
    let sol = assemble(&m, 12, None, &BoundaryOptions::default()).unwrap();
    assert_eq!(sol.tail_bound, 0.0);
    let disk = sol.faces.iter().find(|f| f.sheets == 1).unwrap();
    let z = disk.grid[disk.grid.len() / 2];
    let fit = &disk.fits[0];
    assert!((fit[11].eval(&[z]) - z.powu(12) / 479001600.0).norm() < 1e-10);
}

#[test]
fn closed_extra_component_keeps_residual_but_warns() {
    let m = parabola_cycle();
    let sol = assemble(&m, 2, None, &BoundaryOptions::default()).unwrap();
    // boundary of the solid {(z, z^2 + 1.5 + 0.5 s) : |z| <= 0.3}
    let z = fixtures::polar(&Expr::var(0), &Expr::var(1), 0.3, c(0.0, 0.0));
    let w = z.powi(2) + Expr::real(1.5) + Expr::real(0.5) * Expr::var(2);
    let solid = RectifiableCurrent::from_cells(2, 3, vec![metric_currents::Cell::from_exprs(3, vec![z, w], 1).unwrap()]).unwrap();
    let closed = solid.boundary().unwrap();
    let t = sol.current.plus(&closed).unwrap();
    let q = metric_currents::QuadOptions::order(24);
    let r1 = verify_boundary(&sol.current, &m, 20, 5, &q).unwrap();
    let r2 = verify_boundary(&t, &m, 20, 5, &q).unwrap();
    assert!(r2.passed && (r1.max_abs - r2.max_abs).abs() < 1e-8, "{r1:?} {r2:?}");
    assert!(mass_minimality_warning(&t, &sol, &q).is_some());
    assert!(mass_minimality_warning(&sol.current, &sol, &metric_currents::QuadOptions::default()).is_none());
}

#[test]
fn linear_family_has_linear_modulus() {
    let z = Expr::z(0);
    let family: Vec<(f64, RectifiableCurrent)> = [1.0, 1.25, 1.5, 1.75, 2.0]
        .iter()
        .map(|&s| (s, circle(&[z.clone(), Expr::real(s) * z.powi(2)], 1.0, c(0.0, 0.0))))
        .collect();
    let o = BoundaryOptions::default();
    let rep = family_continuity_check(&family, 2, &o).unwrap();
    assert_eq!(rep.segments, vec![(1.0, 2.0)]);
    // oracle: |ds| sup |z|^2 over the shared solve grid
    let sol = assemble(&family[0].1, 2, None, &o).unwrap();
    let sup = sol
        .faces
        .iter()
        .filter(|f| f.sheets > 0)
        .flat_map(|f| f.grid.iter().map(|z| z.norm_sqr()))
        .fold(0.0, f64::max);
    for row in &rep.rows {
        let d = row.distance.unwrap();
        assert!((d - 0.25 * sup).abs() < 1e-6, "{row:?} vs {}", 0.25 * sup);
    }
    assert!((rep.constant - sup).abs() < 1e-5);

    let constant: Vec<(f64, RectifiableCurrent)> = (0..3).map(|i| (i as f64, parabola_cycle())).collect();
    let rep = family_continuity_check(&constant, 2, &o).unwrap();
    assert!(rep.rows.iter().all(|r| r.distance.unwrap() < 1e-12), "{rep:?}");
}

#[test]
fn limacon_family_splits_at_the_loop() {
    let z = Expr::z(0);
    let family: Vec<(f64, RectifiableCurrent)> = [0.5, 0.6, 1.3, 1.4]
        .iter()
        .map(|&a| (a, fixtures::curve_from_shadow(&fixtures::limacon_shadow(a), &[z.clone(), z.powi(2)], 1).unwrap()))
        .collect();
    let rep = family_continuity_check(&family, 2, &BoundaryOptions::default()).unwrap();
    assert_eq!(rep.segments, vec![(0.5, 0.6), (1.3, 1.4)], "{rep:?}");
    assert!(rep.rows[1].split && !rep.rows[0].split && !rep.rows[2].split);
    // the shadow moves, the chain w = z^2 does not
    assert!(rep.rows[2].distance.unwrap() < 1e-6, "{rep:?}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

        #[test]
        fn quadratic_graphs_are_recovered(
            cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.5f64..1.5,
            a in -1.0f64..1.0, b in -1.0f64..1.0, k in -2.0f64..2.0,
        ) {
            let z = Expr::z(0);
            let g = Expr::c(c(a, b)) * z.powi(2) + Expr::real(k) * &z;
            let m = circle(&[z.clone(), g], r, c(cx, cy));
            let o = BoundaryOptions { raster: 96, grid: 24, ..Default::default() };
            let s = solve_scalar(&m, 1, &o).unwrap();
            for f in &s.faces {
                prop_assert_eq!(f.sheets, if f.unbounded { 0 } else { 1 });
                prop_assert!(f.n0_deviation < 1e-3);
                for (p, v) in f.grid.iter().zip(&f.branches).filter(|_| f.sheets > 0) {
                    let want = c(a, b) * p * p + k * p;
                    prop_assert!((v[0] - want).norm() < 1e-6);
                }
            }
        }
    }
}
