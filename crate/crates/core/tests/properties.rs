use chrono::NaiveDate;
use flu_hgam::arima::{difference, inverse_transform, poly, transform};
use flu_hgam::forecast::{aggregate_bottom_up, nearest_rank, to_quantiles, Level, PathSet, QUANTILES};
use flu_hgam::gam::family::draw_negative_binomial;
use flu_hgam::rng::{substream, Stream};
use flu_hgam::scoring::interval_score;
use flu_hgam::spline::{basis_dimension, BasisConfig, BasisError};
use proptest::prelude::*;

fn path_set(n_series: usize, n_samples: usize, horizon: usize, values: Vec<u64>) -> PathSet<u64> {
    PathSet {
        series_ids: (0..n_series).map(|i| format!("U{i}")).collect(),
        first_date: NaiveDate::from_ymd_opt(2022, 11, 7).unwrap(),
        n_samples,
        horizon,
        values,
    }
}

fn unit_paths() -> impl Strategy<Value = (PathSet<u64>, Vec<usize>, usize)> {
    (1usize..8, 1usize..4, 1usize..20, 1usize..6).prop_flat_map(|(n_units, n_regions, n_samples, horizon)| {
        (
            prop::collection::vec(0u64..10_000, n_units * n_samples * horizon),
            prop::collection::vec(0..n_regions, n_units),
        )
            .prop_map(move |(values, regions)| (path_set(n_units, n_samples, horizon, values), regions, n_regions))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn basis_dimension_is_floor_of_ratio(t_length in 1usize..400, t_d in 0.5f64..60.0) {
        let expected = (t_length as f64 / t_d + 1e-9).floor() as usize;
        match basis_dimension(BasisConfig { t_length, t_d }) {
            Ok(k) => prop_assert!(k == expected && k >= 2),
            Err(BasisError::DimensionTooSmall(k)) => prop_assert!(k == expected && k < 2),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn bottom_up_sums_reconcile((units, regions, n_regions) in unit_paths()) {
        let ids: Vec<String> = (0..n_regions).map(|r| format!("R{r}")).collect();
        let h = aggregate_bottom_up(&units, &regions, &ids).unwrap();
        for s in 0..units.n_samples {
            for t in 0..units.horizon {
                let mut by_region = vec![0u64; n_regions];
                for (u, &r) in regions.iter().enumerate() {
                    by_region[r] += units.get(u, s, t);
                }
                for (r, v) in by_region.iter().enumerate() {
                    prop_assert_eq!(h.region.get(r, s, t), *v);
                }
                prop_assert_eq!(h.nation.get(0, s, t), by_region.iter().sum::<u64>());
            }
        }
    }

    #[test]
    fn quantiles_are_ordered_and_within_sample_range((units, _, _) in unit_paths()) {
        for set in to_quantiles(&units, Level::Unit, &QUANTILES) {
            let u = units.series_ids.iter().position(|id| *id == set.series_id).unwrap();
            for h in 0..units.horizon {
                let col = units.column(u, h);
                let (lo, hi) = (*col.iter().min().unwrap() as f64, *col.iter().max().unwrap() as f64);
                for k in 0..QUANTILES.len() {
                    prop_assert!(set.values[k][h] >= lo && set.values[k][h] <= hi);
                    if k > 0 {
                        prop_assert!(set.values[k - 1][h] <= set.values[k][h]);
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_rank_meets_its_level(mut xs in prop::collection::vec(-1e3f64..1e3, 1..60), tau in 0.01f64..0.99) {
        xs.sort_by(f64::total_cmp);
        let q = nearest_rank(&xs, tau);
        let at_or_below = xs.iter().filter(|&&x| x <= q).count() as f64;
        let below = xs.iter().filter(|&&x| x < q).count() as f64;
        let n = xs.len() as f64;
        prop_assert!(at_or_below / n >= tau - 1e-9);
        prop_assert!(below / n < tau + 1e-9);
    }

    #[test]
    fn interval_score_is_nonnegative_and_decomposes(
        a in -1e3f64..1e3, b in -1e3f64..1e3, alpha in 0.01f64..0.99, y in -2e3f64..2e3,
    ) {
        let (l, u) = if a <= b { (a, b) } else { (b, a) };
        let s = interval_score(l, u, alpha, y).unwrap();
        prop_assert!(s.score >= 0.0);
        prop_assert!((s.score - (s.sharpness + s.underprediction + s.overprediction)).abs() <= 1e-9 * (1.0 + s.score));
        prop_assert!(s.underprediction == 0.0 || s.overprediction == 0.0);
    }

    #[test]
    fn log1p_transform_round_trips(xs in prop::collection::vec(0u32..100_000, 1..50)) {
        let counts: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
        for (z, x) in transform(&counts).unwrap().iter().zip(&counts) {
            prop_assert!((inverse_transform(*z) - x).abs() <= 1e-9 * (1.0 + x));
        }
    }

    #[test]
    fn differencing_matches_the_lag_polynomial(
        z in prop::collection::vec(-50.0f64..50.0, 20..60), d in 0usize..3, big_d in 0usize..2,
    ) {
        let s = 7;
        let w = difference(&z, d, big_d, s).unwrap();
        let delta = poly::differencing(d, big_d, s);
        let lost = d + big_d * s;
        prop_assert_eq!(w.len(), z.len() - lost);
        for (i, v) in w.iter().enumerate() {
            let t = i + lost;
            let direct = z[t] - delta.iter().enumerate().map(|(k, c)| c * z[t - k - 1]).sum::<f64>();
            prop_assert!((v - direct).abs() <= 1e-9);
        }
    }

    #[test]
    fn stationary_reparameterisation_stays_stationary(u in prop::collection::vec(-4.0f64..4.0, 1..5)) {
        let phi = poly::from_unconstrained(&u);
        prop_assert!(poly::roots_outside(&phi, 1.0));
        let back = poly::partial_autocorrelations(&phi).unwrap();
        for (r, x) in back.iter().zip(&u) {
            prop_assert!((r - x.tanh()).abs() <= 1e-8);
        }
    }

    #[test]
    fn nb_draws_are_seed_deterministic(seed in 0u64..10_000, mu in 0.01f64..500.0, theta in 0.1f64..100.0) {
        let draw = || {
            let mut rng = substream(seed, Stream::GamSampler, 0);
            (0..20).map(|_| draw_negative_binomial(&mut rng, mu, theta)).collect::<Vec<u64>>()
        };
        prop_assert_eq!(draw(), draw());
    }
}
