//! Randomized structural properties of the statistics, metrics, and
//! generators, exercised over fuzzed inputs.

use feedaudit_core::cover::joint_k_cover_stop;
use feedaudit_core::error::CoverError;
use feedaudit_core::iid::{iid_tester, required_m, threshold, HalvedSamples, IIDTestConfig};
use feedaudit_core::calibrate::CalibrationConstants;
use feedaudit_core::oracle::linf_matrix_distance;
use feedaudit_core::scenario::{make_scenario, ScenarioSpec};
use feedaudit_core::seed::Seed;
use proptest::collection::vec as pvec;
use proptest::prelude::*;

fn config(n: u32, m: u64, c: f64) -> IIDTestConfig {
    IIDTestConfig {
        u: 1,
        n,
        m,
        eps1: 0.0,
        eps2: 0.5,
        delta: 0.1,
        c,
        poissonize: false,
    }
}

fn halves(n: u32, m: usize) -> impl Strategy<Value = HalvedSamples> {
    (pvec(1..=n, m), pvec(1..=n, m))
        .prop_map(|(half1, half2)| HalvedSamples { half1, half2 })
}

/// A strategy over rectangular nonnegative matrices of one shared shape.
fn matrices(rows: usize, cols: usize, count: usize) -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    pvec(pvec(pvec(0.0..1.0f64, cols), rows), count)
}

proptest! {
    /// A walk that has covered every state k' times has covered it k <= k'
    /// times at some earlier step, so the stop time is monotone in k, and
    /// loosening the budget never changes a successful stop.
    #[test]
    fn cover_stop_is_monotone_in_k(
        walk in pvec(1..=3u32, 1..200),
        k1 in 1..6u64,
        k2 in 1..6u64,
    ) {
        let (k_lo, k_hi) = (k1.min(k2), k1.max(k2));
        let budget = walk.len() as u32;
        let run = |k: u64| {
            let mut walks = [walk.iter().copied()];
            joint_k_cover_stop(&mut walks, 3, k, budget)
        };
        match (run(k_lo), run(k_hi)) {
            (Ok(lo), Ok(hi)) => prop_assert!(lo <= hi),
            (Err(_), Ok(_)) => prop_assert!(false, "harder target stopped, easier did not"),
            (Ok(lo), Err(CoverError::BudgetExceeded { consumed, .. })) => {
                prop_assert!(lo <= consumed + 1)
            }
            (Err(_), Err(_)) => {}
            (_, Err(CoverError::Stationary(_))) => unreachable!("no stationary profile here"),
        }
        // A larger budget cannot change a stop that already happened.
        if let Ok(t) = run(k_lo) {
            let mut walks = [walk.iter().copied().chain(std::iter::repeat(1))];
            prop_assert_eq!(joint_k_cover_stop(&mut walks, 3, k_lo, budget + 50), Ok(t));
        }
    }

    /// Without Poissonization the statistic uses no randomness, and every
    /// ingredient is symmetric in the two sides, so swapping them changes
    /// nothing.
    #[test]
    fn swapping_sides_preserves_the_statistic(
        p in halves(3, 24),
        q in halves(3, 24),
    ) {
        let cfg = config(3, 12, 0.7);
        let a = iid_tester(&[p.clone()], &[q.clone()], &cfg, Seed::new(1)).unwrap();
        let b = iid_tester(&[q], &[p], &cfg, Seed::new(2)).unwrap();
        prop_assert_eq!(a.statistic.total, b.statistic.total);
        prop_assert_eq!(a.decision, b.decision);
    }

    /// Counts are order-free, so permuting the symbols the tester consumes
    /// (here: whole halves) leaves the statistic alone.
    #[test]
    fn symbol_order_is_irrelevant(
        p in halves(4, 20),
        q in halves(4, 20),
        rot in 0..20usize,
    ) {
        let cfg = config(4, 20, 0.7);
        let mut p_rot = p.clone();
        let len = p_rot.half1.len();
        p_rot.half1.rotate_left(rot % len);
        p_rot.half2.rotate_right(rot % len);
        let a = iid_tester(&[p], &[q.clone()], &cfg, Seed::new(3)).unwrap();
        let b = iid_tester(&[p_rot], &[q], &cfg, Seed::new(3)).unwrap();
        prop_assert_eq!(a.statistic.total, b.statistic.total);
    }

    /// The threshold scales linearly in c, so raising c can only turn NO
    /// into YES, never the reverse.
    #[test]
    fn verdict_is_monotone_in_c(
        p in halves(3, 24),
        q in halves(3, 24),
        c1 in 0.1..4.0f64,
        c2 in 0.1..4.0f64,
    ) {
        let (lo, hi) = (c1.min(c2), c1.max(c2));
        let a = iid_tester(&[p.clone()], &[q.clone()], &config(3, 12, lo), Seed::new(4)).unwrap();
        let b = iid_tester(&[p], &[q], &config(3, 12, hi), Seed::new(4)).unwrap();
        prop_assert!(
            !(a.decision == feedaudit_core::Decision::Yes
                && b.decision == feedaudit_core::Decision::No),
            "raising c flipped YES to NO"
        );
        let t_lo = threshold(&config(3, 12, lo));
        let t_hi = threshold(&config(3, 12, hi));
        prop_assert!(t_lo <= t_hi);
        // Linearity against the unit-c threshold.
        let unit = threshold(&config(3, 12, 1.0));
        prop_assert!((t_lo - lo * unit).abs() <= 1e-9 * unit.max(1.0));
    }

    /// The threshold grows with the per-half sample count.
    #[test]
    fn threshold_is_monotone_in_m(m1 in 1..500u64, m2 in 1..500u64) {
        let (lo, hi) = (m1.min(m2), m1.max(m2));
        prop_assert!(threshold(&config(3, lo, 0.7)) <= threshold(&config(3, hi, 0.7)));
    }

    /// Max-row l1 distance is a metric: zero at identity, symmetric, and
    /// triangular.
    #[test]
    fn linf_is_a_metric(ms in matrices(3, 3, 3)) {
        let (a, b, c) = (&ms[0], &ms[1], &ms[2]);
        prop_assert_eq!(linf_matrix_distance(a, a).unwrap(), 0.0);
        let ab = linf_matrix_distance(a, b).unwrap();
        let ba = linf_matrix_distance(b, a).unwrap();
        prop_assert_eq!(ab, ba);
        let ac = linf_matrix_distance(a, c).unwrap();
        let bc = linf_matrix_distance(b, c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(ab >= 0.0);
    }

    /// The sample requirement responds to each parameter the way the
    /// budget formula's terms do.
    #[test]
    fn required_m_is_monotone(
        n1 in 1..40u32,
        n2 in 1..40u32,
        delta1 in 0.01..0.5f64,
        delta2 in 0.01..0.5f64,
        eps2 in 0.05..1.0f64,
        frac in 0.0..1.0f64,
    ) {
        let constants = CalibrationConstants {
            c: 0.7,
            big_c: 24.0,
            regime_constant: 0.25,
        };
        let eps1 = frac * 0.25 * eps2;
        let m = |n: u32, e1: f64, e2: f64, d: f64| required_m(n, 2, e1, e2, d, &constants).unwrap();
        // Larger alphabet: never fewer samples.
        let (n_lo, n_hi) = (n1.min(n2), n1.max(n2));
        prop_assert!(m(n_lo, eps1, eps2, 0.1) <= m(n_hi, eps1, eps2, 0.1));
        // Larger allowed risk: never more samples.
        let (d_lo, d_hi) = (delta1.min(delta2), delta1.max(delta2));
        prop_assert!(m(n1, eps1, eps2, d_hi) <= m(n1, eps1, eps2, d_lo));
        // Wider upper tolerance: never more samples.
        let wider = (eps2 * 1.5).min(1.0);
        prop_assert!(m(n1, eps1, wider, 0.1) <= m(n1, eps1, eps2, 0.1));
        // Larger lower tolerance within the regime: never fewer samples.
        prop_assert!(m(n1, eps1, eps2, 0.1) >= m(n1, 0.0, eps2, 0.1));
    }

    /// Constructed scenarios realize their gap targets under the entry
    /// floor, and perturbed rows stay stochastic.
    #[test]
    fn scenarios_realize_feasible_gaps(
        n in 2..6u32,
        hint in 0.0..0.7f64,
        gap_frac in 0.0..1.0f64,
    ) {
        // The default reference row has minimum entry (1-hint)/n; everything
        // above the floor in the other n-1 entries is movable.
        let nf = f64::from(n);
        let spread = (1.0 - hint) / nf;
        let floor = 1.0 / (10.0 * nf);
        let diag = hint + spread;
        let movable = (diag - floor) + (nf - 2.0) * (spread - floor);
        let gap = gap_frac * 2.0 * movable;
        let spec = ScenarioSpec {
            n,
            users: 1,
            gap: vec![gap],
            mixing_hint: hint,
            epochs: 1,
            adversarial: 0,
            eps1: 0.0,
            eps2: 2.0,
            reference: None,
        };
        let s = make_scenario(&spec, Seed::new(7)).unwrap();
        let user = &s.epochs[0].users[0];
        prop_assert!((user.realized_gap - gap).abs() < 1e-9);
        for row in user.filtered.rows() {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&v| v >= floor - 1e-12));
        }
    }
}
