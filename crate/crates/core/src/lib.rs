//! Hierarchical negative-binomial GAM forecasting of sub-regional daily hospital
//! admissions, with an automatically selected seasonal ARIMA baseline and proper
//! scoring of quantile forecasts.

pub mod data;
pub mod spline;
pub mod gam;
pub mod forecast;
pub mod scoring;
pub mod arima;
pub mod io;
pub mod rng;
pub mod harness;
