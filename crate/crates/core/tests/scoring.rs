use flu_hgam::forecast::QUANTILES;
use flu_hgam::gam::family::draw_negative_binomial;
use flu_hgam::rng::{stream, Stream};
use flu_hgam::scoring::{bias, pinball, summarize, wis, QuantileForecast};
use proptest::prelude::*;
use statrs::distribution::{DiscreteCDF, NegativeBinomial};

fn sorted5(mut q: [f64; 5]) -> QuantileForecast {
    q.sort_by(f64::total_cmp);
    QuantileForecast::new(q).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wis_is_twice_mean_pinball(q in prop::array::uniform5(-100.0f64..100.0), y in -150.0f64..150.0) {
        let f = sorted5(q);
        let w = wis(&f, y).unwrap();
        let oracle = 2.0 * QUANTILES.iter().zip(&f.q).map(|(&tau, &qv)| pinball(qv, tau, y)).sum::<f64>() / 5.0;
        prop_assert!((w.score - oracle).abs() <= 1e-9 * oracle.max(1.0));
        prop_assert!((w.score - (w.sharpness + w.underprediction + w.overprediction)).abs() <= 1e-12 * w.score.max(1.0));
        prop_assert!(w.underprediction >= 0.0 && w.overprediction >= 0.0);
    }

    #[test]
    fn bias_non_increasing_in_y(q in prop::array::uniform5(0.0f64..50.0), a in -10.0f64..60.0, b in -10.0f64..60.0) {
        let f = sorted5(q);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bias(&f, hi) <= bias(&f, lo));
        prop_assert!((-1.0..=1.0).contains(&bias(&f, lo)));
    }

    #[test]
    fn reports_ignore_order(qs in prop::collection::vec(prop::array::uniform5(0.0f64..50.0), 1..20), seed in 0u64..1000) {
        let fs: Vec<QuantileForecast> = qs.into_iter().map(sorted5).collect();
        let obs: Vec<f64> = (0..fs.len()).map(|i| ((i as u64 * 7919 + seed) % 60) as f64).collect();
        let a = summarize("m", "unit", "overall", &fs, &obs).unwrap();
        let rev_f: Vec<_> = fs.iter().rev().cloned().collect();
        let rev_o: Vec<_> = obs.iter().rev().cloned().collect();
        let b = summarize("m", "unit", "overall", &rev_f, &rev_o).unwrap();
        prop_assert!((a.interval_score - b.interval_score).abs() <= 1e-9 * a.interval_score.max(1.0));
        prop_assert_eq!(a.mae, b.mae);
        prop_assert_eq!(a.coverage_50, b.coverage_50);
        prop_assert_eq!(a.coverage_90, b.coverage_90);
        prop_assert!(a.interval_score >= a.underprediction + a.overprediction - 1e-12);
    }
}

/// NB(mu, theta) quantiles as the smallest k with F(k) >= tau.
fn nb_quantiles(mu: f64, theta: f64) -> [f64; 5] {
    let d = NegativeBinomial::new(theta, theta / (theta + mu)).unwrap();
    QUANTILES.map(|tau| {
        let mut k = 0u64;
        while d.cdf(k) < tau {
            k += 1;
        }
        k as f64
    })
}

#[test]
fn true_quantiles_score_best() {
    let (mu, theta) = (50.0, 5.0);
    let mut rng = stream(3, Stream::ArimaMonteCarlo);
    let ys: Vec<f64> = (0..2000).map(|_| draw_negative_binomial(&mut rng, mu, theta) as f64).collect();
    let mean_wis = |f: &QuantileForecast| ys.iter().map(|&y| wis(f, y).unwrap().score).sum::<f64>() / ys.len() as f64;
    let truth = nb_quantiles(mu, theta);
    let best = mean_wis(&QuantileForecast::new(truth).unwrap());
    let m = truth[2];
    let perturbed: Vec<[f64; 5]> = vec![
        truth.map(|q| q + 5.0),
        truth.map(|q| q - 5.0),
        truth.map(|q| q + 15.0),
        truth.map(|q| (q - 15.0).max(0.0)),
        truth.map(|q| m + 1.5 * (q - m)),
        truth.map(|q| m + 0.6 * (q - m)),
        truth.map(|q| m + 2.5 * (q - m)),
        truth.map(|q| m + 0.3 * (q - m)),
        truth.map(|q| q * 1.2),
        truth.map(|q| q * 0.8),
    ];
    for p in perturbed {
        let score = mean_wis(&sorted5(p));
        assert!(best <= score, "{p:?}: {score} < {best}");
    }
}
