use super::*;
use crate::spectrum::{alpha_threshold, regime_alphas};
use std::f64::consts::PI;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn closed_form_small_examples() {
    let s = solve_closed(0, 2.0).unwrap();
    assert!(close(&s.l, &[0.0, 1.0, 0.0], 1e-12));
    assert!((s.d0 + 1.0).abs() < 1e-12 && (s.d_k1 - 1.0).abs() < 1e-12);

    let s = solve_closed(1, 2.0).unwrap();
    assert!(close(&s.l, &[0.0, 0.5, 0.5, 0.0], 1e-12));
    assert!((s.d0 - 0.5).abs() < 1e-12 && (s.d_k1 + 0.5).abs() < 1e-12);

    // Symmetric solve: l_1 = 1/(3+a), l_2 = (1+a)/(3+a), d0 = (a(1+a) - 1)/(3+a).
    let a = 0.8;
    let s = solve_closed(2, a).unwrap();
    let expect = [0.0, 1.0 / 3.8, 1.8 / 3.8, 1.0 / 3.8, 0.0];
    assert!(close(&s.l, &expect, 1e-12));
    assert!((s.d0 - (a * (1.0 + a) - 1.0) / (3.0 + a)).abs() < 1e-12);
    assert!((s.d0 - 0.115789).abs() < 1e-6);
}

#[test]
fn closed_form_boundary_streams_match_recomputation() {
    for l in 1..=6 {
        for alpha in regime_alphas(l, 7) {
            for k in 0..=l + 1 {
                let s = solve_closed(k, alpha).unwrap();
                let (d0, dk1) = boundary_streams(&s.l, alpha);
                assert!((d0 - s.d0).abs() < 1e-12, "L={l} K={k} alpha={alpha}");
                assert!((dk1 - s.d_k1).abs() < 1e-12);
                assert!(s.l[1..=k + 1].iter().all(|&v| v > 0.0));
                for j in 0..=k + 2 {
                    assert!((s.l[j] - s.l[k + 2 - j]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn closed_form_rejects_large_windows() {
    assert!(matches!(
        solve_closed(3, 2.0),
        Err(LinsysError::Regime { k: 3, regime: 1, .. })
    ));
    assert!(matches!(solve_closed(1, 1.0), Err(LinsysError::Spectrum(_))));
}

#[test]
fn direct_matches_hand_elimination() {
    let s = solve_direct(1, 2.0, 0.0).unwrap();
    assert!(close(&s.l, &solve_closed(1, 2.0).unwrap().l, 1e-10));

    // d_1: l1 - l2 + 2 l3 = 0; d_2: -2 l1 + l2 - l3 + 0.5 = 0; l1 + l2 + l3 = 1
    // => l3 = 0, l1 = l2 = 0.5.
    let s = solve_direct(2, 2.0, 0.25).unwrap();
    assert!(s.unique);
    assert!(close(&s.l, &[0.0, 0.5, 0.5, 0.0, 0.25], 1e-12));
    assert!(s.recurrence_residual(2.0) < 1e-12);
    assert!(s.normalization_residual() < 1e-12);
}

#[test]
fn direct_flags_non_unique_at_resonance() {
    // omega = 2 pi / 11 makes (K + 2) omega = 2 pi for K = 9.
    let alpha = alpha_threshold(9).finite().unwrap();
    assert!((crate::spectrum::omega(alpha).unwrap() - 2.0 * PI / 11.0).abs() < 1e-12);
    let s = solve_direct(9, alpha, 0.0).unwrap();
    assert!(!s.unique);
    assert!(s.recurrence_residual(alpha) < 1e-10);
    assert!(s.normalization_residual() < 1e-10);
    // Away from resonance the same K is unique.
    assert!(solve_direct(9, 0.4, 0.0).unwrap().unique);
}

#[test]
fn direct_reports_infeasible_prescription() {
    // At resonance l_0 = 0 forces l_11 = 0; prescribing l_11 = 1 is inconsistent.
    let alpha = alpha_threshold(9).finite().unwrap();
    assert!(matches!(
        solve_direct(9, alpha, 1.0),
        Err(LinsysError::Infeasible { .. })
    ));
}

#[test]
fn affine_examples() {
    let s = solve_affine(1, 2.0, &[0.0]).unwrap();
    assert!(close(&s.l, &[0.0, 0.5, 0.5, 0.0], 1e-12));
    assert!((s.d_l1 + 0.5).abs() < 1e-12);

    // l_1 = (1 + d_1)/2, d_2 = -0.5 - 1.5 d_1.
    let s = solve_affine(1, 2.0, &[0.2]).unwrap();
    assert!(close(&s.l, &[0.0, 0.6, 0.4, 0.0], 1e-12));
    assert!((s.d_l1 + 0.8).abs() < 1e-12);
    assert!((s.c[0] - 1.5).abs() < 1e-12);
    assert!((s.d0_base - 0.5).abs() < 1e-12);
    let (r1, r2) = s.identity_residuals();
    assert!(r1 < 1e-12 && r2 < 1e-12);
}

#[test]
fn affine_rejects_wrong_regime() {
    assert!(matches!(
        solve_affine(2, 2.0, &[0.0, 0.0]),
        Err(LinsysError::AlphaOutsideRegime { .. })
    ));
    assert!(matches!(
        solve_affine(1, 2.0, &[0.0, 0.0]),
        Err(LinsysError::Shape { .. })
    ));
}

#[test]
fn affine_matrix_equation_holds() {
    for l in 1..=5 {
        for alpha in regime_alphas(l, 5) {
            let d: Vec<f64> = (0..l).map(|i| 0.1 * (i as f64 + 1.0) - 0.2).collect();
            let s = solve_affine(l, alpha, &d).unwrap();
            let lhs = affine_matrix(l, alpha).mul_vec(&s.l);
            let mut rhs = vec![0.0, 0.0, 1.0];
            rhs.extend(&d);
            assert!(close(&lhs, &rhs, 1e-10));
            assert!(s.c.iter().all(|&c| c > 0.0), "L={l} alpha={alpha} c={:?}", s.c);
        }
    }
}

/// Independent route: scan prescribed `l_{K+2}` on a grid through the dense
/// solver and keep the smallest `d_0` among non-negative solutions.
fn c_by_grid(k: usize, alpha: f64, tmax: f64, n: usize) -> f64 {
    (0..=n)
        .filter_map(|i| {
            let t = tmax * i as f64 / n as f64;
            let s = solve_direct(k, alpha, t).ok()?;
            s.l[1..].iter().all(|&v| v >= -1e-12).then_some(s.d0)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn c_oracle_spot_values() {
    assert!((c_oracle(1, 2.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((c_oracle(2, 2.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((c_by_grid(1, 2.0, 0.5, 1000) - 0.5).abs() < 1e-9);
    assert!((c_by_grid(2, 2.0, 0.25, 1000) - 0.5).abs() < 1e-9);
}

#[test]
fn c_oracle_agrees_with_grid_scan() {
    for (k, alpha) in [(2, 0.8), (3, 0.8), (4, 2.0), (3, 0.55), (5, 0.7)] {
        let c = c_oracle(k, alpha).unwrap();
        let grid = c_by_grid(k, alpha, 1.0, 20000);
        assert!(c > 0.0);
        assert!(grid >= c - 1e-9, "K={k} alpha={alpha}: grid {grid} below oracle {c}");
        assert!(grid - c < 1e-3, "K={k} alpha={alpha}: grid {grid} vs oracle {c}");
    }
}

#[test]
fn c_oracle_at_k_equal_l_is_closed_form() {
    for l in 1..=5 {
        for alpha in regime_alphas(l, 4) {
            let c = c_oracle(l, alpha).unwrap();
            let d0 = solve_closed(l, alpha).unwrap().d0;
            assert!((c - d0).abs() < 1e-10, "L={l} alpha={alpha}");
        }
    }
}

#[test]
fn stream_gap_examples() {
    let s = solve_closed(1, 2.0).unwrap();
    let g = stream_gap(1, 2.0, &s).unwrap();
    assert!((g.value + 1.0).abs() < 1e-12);
    assert!(g.residual < 1e-12);
    assert_eq!(g.c_oracle, Some(0.5));

    let s = SystemSolution::from_vector(2, 2.0, vec![0.0, 0.2, 0.6, 0.2, 0.0], false);
    assert!(s.recurrence_residual(2.0) < 1e-12);
    let g = stream_gap(2, 2.0, &s).unwrap();
    assert!((g.value + 1.0).abs() < 1e-12);

    assert!(matches!(
        stream_gap(1, 0.8, &solve_closed(1, 0.8).unwrap()),
        Err(LinsysError::Regime { .. })
    ));
}

#[test]
fn family_points_solve_the_system() {
    for (k, alpha) in [(3, 2.0), (6, 0.8), (9, 0.45)] {
        let f = SolutionFamily::new(k, alpha).unwrap();
        for t in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let s = f.solution_at(t);
            assert!(s.recurrence_residual(alpha) < 1e-10);
            assert!(s.normalization_residual() < 1e-12);
            assert_eq!(s.l[0], 0.0);
        }
    }
}

#[test]
fn sign_scan_pattern() {
    let rows = sign_scan(2.0, 4).unwrap();
    assert_eq!(rows.len(), 5);
    assert!((rows[0].d0_min + 1.0).abs() < 1e-12);
    assert!((rows[1].d0_min - 0.5).abs() < 1e-12);
    assert_eq!(rows[3].method, ScanMethod::Family);

    let rows = sign_scan(0.8, 3).unwrap();
    assert!(rows[1].d0_max < 0.0);
    assert!(rows[2].d0_min > 0.0 && rows[3].d0_min > 0.0);
}
