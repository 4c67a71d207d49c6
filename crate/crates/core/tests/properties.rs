use proptest::prelude::*;

use stuckwalk::analysis::detect_localization;
use stuckwalk::linsys::{solve_closed, solve_direct, SolutionFamily};
use stuckwalk::logmath::{log1mexp, logaddexp};
use stuckwalk::rng::derive_seed;
use stuckwalk::spectrum::{alpha_threshold, classify, omega, Params, DEFAULT_CRITICAL_TOL};
use stuckwalk::stats::{wilson, Z95};
use stuckwalk::walk::{simulate, WalkState};

fn alpha_in(regime: usize, u: f64) -> f64 {
    let lo = 2.0 * std::f64::consts::PI / (regime as f64 + 3.0);
    let hi = 2.0 * std::f64::consts::PI / (regime as f64 + 2.0);
    1.0 / (1.0 + 2.0 * (lo + (hi - lo) * u).cos())
}

proptest! {
    #[test]
    fn classify_inverts_thresholds(regime in 1usize..40, u in 0.02f64..0.98) {
        let alpha = alpha_in(regime, u);
        prop_assert_eq!(classify(alpha, DEFAULT_CRITICAL_TOL).unwrap(), regime);
        prop_assert!(alpha_threshold(regime).is_above(alpha));
        prop_assert!(!alpha_threshold(regime + 1).is_above(alpha));
        let w = omega(alpha).unwrap();
        prop_assert!(((1.0 - alpha) / (2.0 * alpha) - w.cos()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_direct(regime in 1usize..10, u in 0.02f64..0.98, extra in 0usize..2) {
        let alpha = alpha_in(regime, u);
        let k = regime + extra;
        let c = solve_closed(k, alpha).unwrap();
        let d = solve_direct(k, alpha, 0.0).unwrap();
        for (x, y) in c.l.iter().zip(&d.l) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!(c.recurrence_residual(alpha) < 1e-10);
        prop_assert!(c.d0 > 0.0);
        prop_assert!(c.is_nonnegative());
    }

    #[test]
    fn family_members_solve_the_system(regime in 1usize..6, u in 0.02f64..0.98, extra in 0usize..5, t in -3.0f64..3.0) {
        let alpha = alpha_in(regime, u);
        let k = regime + extra;
        let sol = SolutionFamily::new(k, alpha).unwrap().solution_at(t);
        prop_assert!(sol.recurrence_residual(alpha) < 1e-9);
        prop_assert!(sol.normalization_residual() < 1e-9);
        prop_assert_eq!(sol.l[0], 0.0);
    }

    #[test]
    fn reflection_mirrors_the_window(seed in any::<u64>()) {
        let p = Params::new(2.0, 1.0).unwrap();
        let pos = simulate(&p, 3000, seed).positions;
        let neg: Vec<i64> = pos.iter().map(|x| -x).collect();
        let a = detect_localization(&p, &pos, 0.5).unwrap();
        let b = detect_localization(&p, &neg, 0.5).unwrap();
        prop_assert_eq!(b.window, [-a.window[1], -a.window[0]]);
        prop_assert_eq!(a.localized, b.localized);
        let rev: Vec<f64> = a.profile.iter().rev().copied().collect();
        prop_assert_eq!(b.profile, rev);
    }

    #[test]
    fn replayed_state_is_consistent(seed in any::<u64>(), alpha in 0.4f64..3.0, beta in 0.1f64..2.0) {
        let Ok(p) = Params::new(alpha, beta) else { return Ok(()); };
        let t = simulate(&p, 500, seed);
        prop_assert_eq!(&t.positions, &simulate(&p, 500, seed).positions);
        let s = WalkState::from_positions(&p, &t.positions).unwrap();
        prop_assert!(s.check_identities().is_ok());
        prop_assert_eq!(s.pos(), *t.positions.last().unwrap());
    }

    #[test]
    fn derived_seeds_are_distinct(master in any::<u64>(), i in 0u64..1_000_000, gap in 1u64..1000) {
        prop_assert_eq!(derive_seed(master, i), derive_seed(master, i));
        prop_assert_ne!(derive_seed(master, i), derive_seed(master, i + gap));
    }

    #[test]
    fn log_helpers(x in -30.0f64..-1e-3, a in -50.0f64..50.0, b in -50.0f64..50.0) {
        prop_assert!((log1mexp(x) - (-x.exp()).ln_1p()).abs() < 1e-12);
        let direct = (a.exp() + b.exp()).ln();
        prop_assert!((logaddexp(a, b) - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn wilson_brackets_the_estimate(n in 1u64..10_000, frac in 0.0f64..=1.0) {
        let k = (n as f64 * frac).round() as u64;
        let ci = wilson(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= ci.lo && ci.lo <= p + 1e-12);
        prop_assert!(p - 1e-12 <= ci.hi && ci.hi <= 1.0);
    }
}
