mod common;

use approx::assert_relative_eq;
use mfcca::detrend::Detrender;
use mfcca::fluctuation::{covariances, detrend, fluctuation_surface_single, FluctuationConfig, SegmentationConfig};
use mfcca::network::{mean_path_length, mst, mst_metrics, DistanceMatrix, MetricOptions, PathMetric};
use mfcca::rho::{rho_q, RhoMatrix};
use mfcca::series::{build_index, profile, synchronize_with, to_returns, IndexMode, PriceSeries};
use mfcca::synth;
use mfcca::tail::{fit_tail, TailMethod};
use mfcca::window::RollingWindow;
use proptest::prelude::*;

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

fn nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![-50.0f64..-0.05, 0.05f64..50.0]
}

/// Irregular tick times with gaps shorter than `max_gap` intervals.
fn ticks(max_gap: i64) -> impl Strategy<Value = (Vec<i64>, Vec<f64>)> {
    (prop::collection::vec(1..=max_gap, 5..60), 0i64..5).prop_flat_map(|(gaps, start)| {
        let mut t = start * 60_000;
        let mut ts = vec![t];
        for g in gaps {
            t += g * 60_000;
            ts.push(t);
        }
        let n = ts.len();
        (Just(ts), prop::collection::vec(0.5f64..200.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_closes(x in prop::collection::vec(-1e3f64..1e3, 2..2000)) {
        let p = profile(&x).unwrap();
        let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!(p.last().abs() <= 1e-12 * scale, "{}", p.last());
    }

    #[test]
    fn synchronize_is_idempotent(a in ticks(5), b in ticks(5)) {
        let sa = PriceSeries::new("A", a.0, a.1, 60_000).unwrap();
        let sb = PriceSeries::new("B", b.0, b.1, 60_000).unwrap();
        if let Ok(panel) = synchronize_with(&[sa, sb], 60_000, 10) {
            let again = synchronize_with(&panel.to_price_series().unwrap(), 60_000, 10).unwrap();
            prop_assert_eq!(again, panel);
        }
    }

    #[test]
    fn raw_sum_index_is_linear(
        cols in prop::collection::vec(prop::collection::vec(0.5f64..100.0, 30), 2..6),
        k in 0.1f64..10.0,
    ) {
        let n = cols.len();
        let make = |scale: f64| {
            let series: Vec<PriceSeries> = cols
                .iter()
                .enumerate()
                .map(|(i, c)| PriceSeries::regular(format!("M{i}"), 0, 60_000, c.iter().map(|p| p * scale).collect()).unwrap())
                .collect();
            synchronize_with(&series, 60_000, 1).unwrap()
        };
        let ids: Vec<String> = (0..n).map(|i| format!("M{i}")).collect();
        let base = build_index(&make(1.0), &ids, IndexMode::RawSum, "I").unwrap();
        let scaled = build_index(&make(k), &ids, IndexMode::RawSum, "I").unwrap();
        let split = n / 2;
        let left = build_index(&make(1.0), &ids[..split.max(1)], IndexMode::RawSum, "L").unwrap();
        let right = build_index(&make(1.0), &ids[split.max(1)..], IndexMode::RawSum, "R").unwrap();
        for t in 0..base.len() {
            assert_relative_eq!(scaled.prices[t], k * base.prices[t], max_relative = 1e-12);
            assert_relative_eq!(left.prices[t] + right.prices[t], base.prices[t], max_relative = 1e-12);
        }
        let rebased = build_index(&make(k), &ids, IndexMode::Rebased, "I").unwrap();
        let rebased1 = build_index(&make(1.0), &ids, IndexMode::Rebased, "I").unwrap();
        for t in 0..base.len() {
            assert_relative_eq!(rebased.prices[t], rebased1.prices[t], max_relative = 1e-12);
        }
    }

    #[test]
    fn returns_ignore_price_units(p in prop::collection::vec(1.0f64..2.0, 10..200), k in 1e-3f64..1e3) {
        let a = PriceSeries::regular("A", 0, 60_000, p.clone()).unwrap();
        let b = PriceSeries::regular("A", 0, 60_000, p.iter().map(|v| v * k).collect()).unwrap();
        if let (Ok(ra), Ok(rb)) = (to_returns(&a, 60_000), to_returns(&b, 60_000)) {
            for (x, y) in ra.values.iter().zip(&rb.values) {
                prop_assert!((x - y).abs() < 1e-6, "{x} {y}");
            }
        }
    }

    #[test]
    fn polynomial_segments_detrend_to_zero(c in prop::collection::vec(-5.0f64..5.0, 4), s in 5usize..64) {
        let d = Detrender::new(s, 3).unwrap();
        let seg: Vec<f64> = (0..s)
            .map(|i| { let t = i as f64; c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t })
            .collect();
        let peak = seg.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for r in d.residual(&seg) {
            prop_assert!(r.abs() < 1e-9 * peak, "{r}");
        }
    }

    #[test]
    fn fluctuation_scales_with_amplitude(x in signal(512), k in nonzero()) {
        let y: Vec<f64> = x.iter().map(|v| k * v).collect();
        let q = [-2.0, -0.5, 0.5, 2.0, 3.0];
        let cfg = FluctuationConfig::default();
        let a = fluctuation_surface_single(&x, &q, &[16, 32, 64], &cfg).unwrap();
        let b = fluctuation_surface_single(&y, &q, &[16, 32, 64], &cfg).unwrap();
        for si in 0..3 {
            for qi in 0..q.len() {
                let (u, v) = (a.value(si, qi), b.value(si, qi));
                if u.is_finite() {
                    assert_relative_eq!(v, k.abs() * u, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn segment_covariance_obeys_cauchy_schwarz(x in signal(400), y in signal(400), s in 5usize..100, m in 1usize..4) {
        prop_assume!(s >= m + 2);
        let cfg = SegmentationConfig::new(s).with_degree(m);
        let dx = detrend(&profile(&x).unwrap(), &cfg).unwrap();
        let dy = detrend(&profile(&y).unwrap(), &cfg).unwrap();
        let xy = covariances(&dx, &dy).unwrap();
        let xx = covariances(&dx, &dx).unwrap();
        let yy = covariances(&dy, &dy).unwrap();
        for v in 0..xy.len() {
            prop_assert!(xx.values[v] >= 0.0 && yy.values[v] >= 0.0);
            let bound = (xx.values[v] * yy.values[v]).sqrt();
            prop_assert!(xy.values[v].abs() <= bound * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn rho_is_bounded_symmetric_and_affine_invariant(
        x in signal(640),
        y in signal(640),
        a in nonzero(),
        b in -100.0f64..100.0,
        q in 0.2f64..6.0,
        s in prop::sample::select(vec![10usize, 16, 32, 64, 160]),
    ) {
        let cfg = SegmentationConfig::new(s);
        let (Ok(r), Ok(rt)) = (rho_q(&x, &y, q, &cfg), rho_q(&y, &x, q, &cfg)) else {
            return Ok(());
        };
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r.value));
        prop_assert_eq!(r.value, rt.value);
        let xa: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ra = rho_q(&xa, &y, q, &cfg).unwrap().value;
        prop_assert!((ra - a.signum() * r.value).abs() < 1e-9, "{ra} vs {}", r.value);
    }

    #[test]
    fn prim_matches_kruskal(n in 2usize..40, seed in any::<u64>()) {
        let d = common::random_distances(n, seed);
        let t = mst(&d).unwrap();
        prop_assert_eq!(t.edges.len(), n - 1);
        prop_assert_eq!(t.degrees.iter().sum::<usize>(), 2 * (n - 1));
        assert_relative_eq!(t.total_weight, common::kruskal_weight(&d), max_relative = 1e-12);
    }

    #[test]
    fn tree_metrics_ignore_asset_order(n in 3usize..30, seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let d = common::random_distances(n, seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut synth::rng(perm_seed, 3));
        let assets: Vec<String> = order.iter().map(|&i| d.assets[i].clone()).collect();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = d.get(order[i], order[j]);
            }
        }
        let dp = DistanceMatrix::from_entries(assets, values).unwrap();
        let to_rho = |m: &DistanceMatrix| {
            let v: Vec<f64> = (0..n * n).map(|k| 1.0 - m.get(k / n, k % n).powi(2) / 2.0).collect();
            RhoMatrix::from_entries(m.assets.clone(), 1.0, 10, v).unwrap()
        };
        let (t, tp) = (mst(&d).unwrap(), mst(&dp).unwrap());
        let edge_names = |t: &mfcca::network::MstResult| {
            let mut e: Vec<(String, String)> = t
                .edges
                .iter()
                .map(|e| {
                    let (a, b) = (t.assets[e.parent].clone(), t.assets[e.child].clone());
                    if a < b { (a, b) } else { (b, a) }
                })
                .collect();
            e.sort();
            e
        };
        prop_assert_eq!(edge_names(&t), edge_names(&tp));
        let m = mst_metrics(&t, &to_rho(&d), MetricOptions::default()).unwrap();
        let mp = mst_metrics(&tp, &to_rho(&dp), MetricOptions::default()).unwrap();
        prop_assert_eq!(m.mean_path_length, mp.mean_path_length);
        prop_assert_eq!(m.k_max, mp.k_max);
        prop_assert_eq!(m.hub_id, mp.hub_id);
        assert_relative_eq!(m.mean_rho, mp.mean_rho, max_relative = 1e-12);
        prop_assert!(mean_path_length(&t, PathMetric::Weighted) > 0.0);
    }

    #[test]
    fn window_count_formula(total in 0usize..10_000, len in 1usize..2_000, step in 1usize..500) {
        let w = RollingWindow::new(len, step).unwrap();
        let want = if total < len { 0 } else { (total - len) / step + 1 };
        prop_assert_eq!(w.count(total), want);
        let ranges: Vec<_> = w.ranges(total).collect();
        prop_assert_eq!(ranges.len(), want);
        prop_assert!(ranges.iter().all(|r| r.end <= total && r.len() == len));
    }

    #[test]
    fn hill_is_invariant_to_units_and_sign(seed in 0u64..1000, k in nonzero()) {
        let x = synth::pareto(2.5, 2000, seed).unwrap();
        let y: Vec<f64> = x.iter().map(|v| k * v).collect();
        let a = fit_tail(&x, 0.05, TailMethod::Hill).unwrap();
        let b = fit_tail(&y, 0.05, TailMethod::Hill).unwrap();
        assert_relative_eq!(a.gamma, b.gamma, max_relative = 1e-12);
    }
}
