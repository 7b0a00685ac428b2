//! Data-driven stochastic parametrization of hypoelliptic Langevin systems.
//!
//! Two modeling routes are implemented side by side and benchmarked on the
//! same data:
//!
//! * continuous time: simulate `dx = y dt, dy = (-γy - V'(x)) dt + σ dB`,
//!   estimate `(γ, α | β, σ)` from discrete observations of `x` with a
//!   shifted-drift contrast, then forecast by integrating the fitted SDE;
//! * discrete time: fit a NARMA model whose nonlinear terms are read off a
//!   numerical scheme, by conditional likelihood, and forecast with it.
//!
//! The [`linear_analytic`] module carries the exact results for the linear
//! oscillator (propagator, autocovariance, ARMA(2,1) equivalence) that the
//! rest of the crate is tested against.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod contrast;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod linear_analytic;
pub mod lsq;
pub mod narma;
pub mod quadrature;
pub mod sde;
pub mod seed;
pub mod simplex;
pub mod stats;

pub use contrast::{fit_contrast, ContrastFamily, ContrastFit, ContrastTheta};
pub use error::{Error, Result};
pub use forecast::{ForecastConfig, Predictor, RmseCurve};
pub use linear_analytic::{ArmaEquiv, ArmaSpec, Propagator2};
pub use narma::{NarmaFit, NarmaModel, NarmaSpec, NarmaStructure};
pub use sde::{LangevinParams, ObservationSeries, PhaseState, PotentialSpec, Scheme, SimConfig};
