//! Seeded synthetic epidemic panels: a peaked national wave, spatially smooth unit
//! offsets drawn from an MRF prior, day-of-week reporting effects, and negative
//! binomial counts.

use chrono::NaiveDate;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{
    build_adjacency, count_components, graph_laplacian, AdjacencyGraph, AdmissionsPanel, GeoUnit,
    Geography,
};
use crate::gam::family::draw_negative_binomial;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_units: usize,
    pub n_regions: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    /// Day index of the national peak.
    pub peak_day: f64,
    /// Log admissions per person per day at the peak.
    pub peak_log_rate: f64,
    /// Slope of the national log-rate on day 0.
    pub growth_rate: f64,
    /// Magnitude of the national log-rate slope on the last day.
    pub decay_rate: f64,
    /// Standard deviation of the spatially smooth unit log-rate offsets.
    pub unit_noise_sd: f64,
    /// Multipliers Monday..Sunday; rescaled to geometric mean 1.
    pub dow_multipliers: [f64; 7],
    pub theta: f64,
    pub population_median: f64,
    /// Standard deviation of log population.
    pub population_log_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_units: 42,
            n_regions: 7,
            n_days: 119,
            start: NaiveDate::from_ymd_opt(2022, 9, 5).expect("valid date"),
            peak_day: 84.0,
            peak_log_rate: (1.8e-5f64).ln(),
            growth_rate: 0.08,
            decay_rate: 0.06,
            unit_noise_sd: 0.3,
            dow_multipliers: [1.15, 1.10, 1.05, 1.0, 0.95, 0.85, 0.90],
            theta: 10.0,
            population_median: 1.3e6,
            population_log_sd: 0.3,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    /// Log day-of-week multipliers, centred to sum to zero.
    pub fn log_dow(&self) -> [f64; 7] {
        let logs = self.dow_multipliers.map(f64::ln);
        let mean = logs.iter().sum::<f64>() / 7.0;
        logs.map(|l| l - mean)
    }

    /// National log-rate: a Gaussian bump whose widths are set by the growth rate at
    /// the start and the decay rate at the end of the season.
    pub fn national_log_rate(&self, day: f64) -> f64 {
        let last = (self.n_days.max(2) - 1) as f64;
        let width2 = if day <= self.peak_day {
            (self.peak_day.max(1.0)) / self.growth_rate
        } else {
            ((last - self.peak_day).max(1.0)) / self.decay_rate
        };
        self.peak_log_rate - (day - self.peak_day).powi(2) / (2.0 * width2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub panel: AdmissionsPanel,
    pub geo: Geography,
    pub graph: AdjacencyGraph,
    /// Expected counts `mean[unit][day]`.
    pub mean: Vec<Vec<f64>>,
    pub unit_offsets: Vec<f64>,
}

fn random_graph<R: Rng + ?Sized>(rng: &mut R, spec: &SyntheticSpec) -> (Vec<GeoUnit>, Vec<(String, String)>) {
    let n = spec.n_units;
    let points: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));
    let mut region = vec![0; n];
    for (rank, &u) in by_x.iter().enumerate() {
        region[u] = rank * spec.n_regions / n;
    }
    let units: Vec<GeoUnit> = (0..n)
        .map(|u| {
            let z: f64 = rng.sample(StandardNormal);
            GeoUnit {
                unit_id: format!("U{:02}", u + 1),
                region_id: format!("R{:02}", region[u] + 1),
                population: (spec.population_median.ln() + spec.population_log_sd * z).exp().round(),
                centroid: points[u],
            }
        })
        .collect();

    let dist = |a: usize, b: usize| (points[a].0 - points[b].0).hypot(points[a].1 - points[b].1);
    let mut edges = std::collections::BTreeSet::new();
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| dist(a, x).total_cmp(&dist(a, y)));
        for &b in others.iter().take(3) {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    // join components through their closest pair until connected
    while count_components(n, edges.iter().copied()) > 1 {
        let comp = component_labels(n, &edges);
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            for b in 0..n {
                if comp[a] == 0 && comp[b] != 0 && dist(a, b) < best.0 {
                    best = (dist(a, b), a, b);
                }
            }
        }
        edges.insert((best.1.min(best.2), best.1.max(best.2)));
    }
    let pairs = edges
        .into_iter()
        .map(|(a, b)| (units[a].unit_id.clone(), units[b].unit_id.clone()))
        .collect();
    (units, pairs)
}

fn component_labels(n: usize, edges: &std::collections::BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            let m = label[a].min(label[b]);
            if label[a] != m || label[b] != m {
                label[a] = m;
                label[b] = m;
                changed = true;
            }
        }
        if !changed {
            return label;
        }
    }
}

/// Generates a panel, its geography and adjacency graph. Fully determined by `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> SyntheticData {
    assert!(spec.n_units >= 1 && spec.n_regions >= 1 && spec.n_regions <= spec.n_units);
    assert!(spec.theta > 0.0 && spec.growth_rate > 0.0 && spec.decay_rate > 0.0);
    assert!(spec.dow_multipliers.iter().all(|&m| m > 0.0));
    let mut graph_rng = stream(spec.seed, Stream::Graph);
    let (units, pairs) = if spec.n_units == 1 {
        let u = GeoUnit {
            unit_id: "U01".into(),
            region_id: "R01".into(),
            population: spec.population_median.round(),
            centroid: (0.0, 0.0),
        };
        (vec![u], Vec::new())
    } else {
        random_graph(&mut graph_rng, spec)
    };
    let graph = build_adjacency(&units, &pairs).expect("generated graph is connected");
    let ids: Vec<String> = units.iter().map(|u| u.unit_id.clone()).collect();

    // spatially smooth offsets: x ~ N(0, (L + 0.05 I)^{-1}), centred and rescaled
    let n = units.len();
    let offsets: Vec<f64> = if n > 1 {
        let lap = graph_laplacian(&graph, &ids).expect("order matches nodes");
        let scale = lap.diagonal().mean();
        let precision = lap / scale + DMatrix::identity(n, n) * 0.05;
        let chol = Cholesky::new(precision).expect("precision is positive definite");
        let z = DVector::from_fn(n, |_, _| graph_rng.sample::<f64, _>(StandardNormal));
        let x = chol.l().tr_solve_lower_triangular(&z).expect("positive diagonal");
        let mean = x.mean();
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        x.iter().map(|v| spec.unit_noise_sd * (v - mean) / sd.max(1e-12)).collect()
    } else {
        vec![0.0]
    };

    let log_dow = spec.log_dow();
    let first_dow = crate::data::day_of_week(spec.start);
    let mut rng = stream(spec.seed, Stream::Generator);
    let mut mean = vec![vec![0.0; spec.n_days]; n];
    let mut counts = vec![vec![0u64; spec.n_days]; n];
    for day in 0..spec.n_days {
        let nat = spec.national_log_rate(day as f64);
        let dow = log_dow[(first_dow + day) % 7];
        for u in 0..n {
            let mu = units[u].population * (nat + offsets[u] + dow).exp();
            mean[u][day] = mu;
            counts[u][day] = draw_negative_binomial(&mut rng, mu, spec.theta);
        }
    }
    let panel = AdmissionsPanel::from_series(spec.start, ids, counts).expect("complete panel");
    let geo = Geography::new(units).expect("valid generated geography");
    SyntheticData { panel, geo, graph, mean, unit_offsets: offsets }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let spec = SyntheticSpec { seed: 17, ..Default::default() };
        assert_eq!(generate_synthetic(&spec), generate_synthetic(&spec));
        let other = generate_synthetic(&SyntheticSpec { seed: 18, ..Default::default() });
        assert_ne!(generate_synthetic(&spec).panel, other.panel);
    }

    #[test]
    fn default_shape() {
        let data = generate_synthetic(&SyntheticSpec::default());
        assert_eq!(data.panel.n_units(), 42);
        assert_eq!(data.geo.n_regions(), 7);
        assert_eq!(data.panel.n_days(), 119);
        assert!(data.geo.region_members().iter().all(|m| m.len() == 6));
    }

    #[test]
    fn large_theta_is_poisson_like() {
        let spec = SyntheticSpec {
            theta: 1e6,
            n_units: 6,
            n_regions: 2,
            n_days: 3000,
            growth_rate: 1e-6,
            decay_rate: 1e-6,
            peak_day: 1500.0,
            dow_multipliers: [1.0; 7],
            unit_noise_sd: 0.0,
            population_log_sd: 0.0,
            ..Default::default()
        };
        let data = generate_synthetic(&spec);
        for u in 0..6 {
            let xs: Vec<f64> = data.panel.series(u).iter().map(|&c| c as f64).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!((0.9..=1.1).contains(&(v / m)), "unit {u}: ratio {}", v / m);
        }
    }

    #[test]
    fn day_of_week_multiplier_shows_up() {
        let mut dow = [1.0; 7];
        dow[0] = 2.0;
        let spec = SyntheticSpec {
            dow_multipliers: dow,
            growth_rate: 1e-6,
            decay_rate: 1e-6,
            n_days: 364,
            peak_day: 180.0,
            unit_noise_sd: 0.0,
            ..Default::default()
        };
        let data = generate_synthetic(&spec);
        let first = crate::data::day_of_week(spec.start);
        let mut sums = [0.0; 7];
        for u in 0..data.panel.n_units() {
            for (day, &c) in data.panel.series(u).iter().enumerate() {
                sums[(first + day) % 7] += c as f64;
            }
        }
        let geo_mean = (sums.iter().map(|s| s.ln()).sum::<f64>() / 7.0).exp();
        let ratio = sums[0] / geo_mean;
        let expected = 2.0 / 2f64.powf(1.0 / 7.0);
        assert!((ratio / expected - 1.0).abs() < 0.1, "{ratio} vs {expected}");
    }
}
