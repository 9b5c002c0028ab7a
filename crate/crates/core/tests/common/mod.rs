#![allow(dead_code)]

use flu_hgam::data::CalendarFeatures;
use flu_hgam::gam::{assemble_design, fit_design, FittedGAM, ModelSpec};
use flu_hgam::harness::{generate_synthetic, SyntheticData, SyntheticSpec};

/// Fit to exact expected counts `exp(log p_i + a + u_i + r t)` over a 63-day window.
pub fn noise_free_growth_fit(rate: f64) -> (SyntheticData, FittedGAM) {
    let data = generate_synthetic(&SyntheticSpec::default());
    let w = data.panel.window(0, 63);
    let spec = ModelSpec::default();
    let cal = CalendarFeatures::for_panel(&w);
    let design = assemble_design(&w, &data.geo, &data.graph, &cal, &spec).unwrap();
    let response = (0..w.n_units())
        .flat_map(|u| {
            let pop = data.geo.units()[u].population;
            let offset = data.unit_offsets[u];
            (0..63).map(move |t| pop * (-11.0 + offset + rate * t as f64).exp())
        })
        .collect();
    let fitted = fit_design(&design.with_response(response), w.start(), &spec).unwrap();
    (data, fitted)
}

/// Default synthetic panel fitted on days 20..83.
pub fn default_fit() -> (SyntheticData, FittedGAM) {
    let data = generate_synthetic(&SyntheticSpec::default());
    let w = data.panel.window(20, 63);
    let cal = CalendarFeatures::for_panel(&w);
    let fitted = flu_hgam::gam::fit(&w, &data.geo, &data.graph, &cal, &ModelSpec::default()).unwrap();
    (data, fitted)
}
