//! Long-run statistics: histogram density, autocorrelation, and the analytic
//! stationary position marginal.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::sde::LangevinParams;

pub const DEFAULT_BINS: usize = 81;
pub const DEFAULT_MAX_LAG: usize = 200;

/// Equal-width histogram normalized to unit integral.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        self.bin_edges
            .windows(2)
            .zip(&self.densities)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,density\n");
        for (w, d) in self.bin_edges.windows(2).zip(&self.densities) {
            let _ = writeln!(s, "{:e},{:e},{:e}", w[0], w[1], d);
        }
        s
    }
}

pub fn empirical_pdf(series: &[f64], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be positive".into()));
    }
    if series.len() < 10 * n_bins {
        return Err(Error::InsufficientData { needed: 10 * n_bins, got: series.len() });
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) || !(hi - lo).is_finite() {
        return Err(Error::DegenerateData(format!("series range [{lo}, {hi}] is empty")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in series {
        let i = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + i as f64 * width })
        .collect();
    let n = series.len() as f64;
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, w)| c as f64 / (n * (w[1] - w[0])))
        .collect();
    Ok(Histogram { bin_edges, densities })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfCurve {
    /// `values[k]` is the autocorrelation at lag `k`.
    pub values: Vec<f64>,
}

impl AcfCurve {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn to_csv(&self, h: f64) -> String {
        let mut s = String::from("lag,t,acf\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{:e},{:e}", k, k as f64 * h, v);
        }
        s
    }
}

/// `ρ(k) = Σ (x_n - x̄)(x_{n+k} - x̄) / Σ (x_n - x̄)²`.
pub fn empirical_acf(series: &[f64], max_lag: usize) -> Result<AcfCurve> {
    if series.len() <= 10 * max_lag || series.len() < 2 {
        return Err(Error::InsufficientData { needed: 10 * max_lag + 1, got: series.len() });
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateData("constant series has no autocorrelation".into()));
    }
    let values = (0..=max_lag)
        .map(|k| dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect();
    Ok(AcfCurve { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPdf {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Set when the density at either end of the grid exceeds 1e-6 of the peak,
    /// meaning the grid cuts off visible mass.
    pub boundary_warning: bool,
}

/// Position marginal of the invariant law, `p(x) ∝ exp(-(2γ/σ²) V(x))`,
/// normalized over `[grid[0], grid[last]]`.
///
/// Meant for the Kramers family, but valid for any confining potential.
pub fn kramers_stationary_pdf_x(params: &LangevinParams, grid: &[f64]) -> Result<StationaryPdf> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("grid must be strictly increasing with at least two points".into()));
    }
    let k = 2.0 * params.gamma / (params.sigma * params.sigma);
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    // Shift by the smallest potential value on a fine scan to avoid overflow.
    let v_min = (0..=4096)
        .map(|i| params.potential.value(a + (b - a) * i as f64 / 4096.0))
        .fold(f64::INFINITY, f64::min);
    let unnorm = |x: f64| (-k * (params.potential.value(x) - v_min)).exp();
    let crude = adaptive_simpson(unnorm, a, b, f64::INFINITY);
    let z = adaptive_simpson(unnorm, a, b, 1e-12 * crude);
    let density: Vec<f64> = grid.iter().map(|&x| unnorm(x) / z).collect();
    let peak = density.iter().copied().fold(0.0, f64::max);
    let boundary_warning = density[0] > 1e-6 * peak || density[density.len() - 1] > 1e-6 * peak;
    Ok(StationaryPdf { grid: grid.to_vec(), density, boundary_warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_analytic::{stationary_autocov, ExactLinearStepper};
    use crate::sde::{simulate_and_observe, SimConfig};
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn uniform_grid_is_flat() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let h = empirical_pdf(&x, 10).unwrap();
        for d in &h.densities {
            assert_close!(*d, 1.0, 1e-12);
        }
        assert_close!(h.integral(), 1.0, 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(empirical_pdf(&[2.0; 1000], 10), Err(Error::DegenerateData(_))));
        assert!(matches!(empirical_acf(&[2.0; 1000], 10), Err(Error::DegenerateData(_))));
        assert!(matches!(empirical_pdf(&[1.0, 2.0], 10), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn iid_noise_acf_is_flat() {
        let mut rng = seed::stream(2);
        let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let acf = empirical_acf(&x, 20).unwrap();
        assert_eq!(acf.values[0], 1.0);
        let band = 3.0 / (x.len() as f64).sqrt();
        assert!(acf.values[1..].iter().filter(|v| v.abs() > band).count() <= 1);
    }

    #[test]
    fn linear_series_matches_gaussian_and_autocov() {
        let step = ExactLinearStepper::new(0.5, 4.0, 1.0, 1.0 / 32.0).unwrap();
        let mut rng = seed::stream(8);
        let mut s = step.stationary_sample(&mut rng);
        let x: Vec<f64> = (0..1_000_000)
            .map(|_| {
                s = step.step(s, &mut rng);
                s.x
            })
            .collect();
        let hist = empirical_pdf(&x, DEFAULT_BINS).unwrap();
        let gauss = |v: f64| (-v * v / 0.5).exp() / (0.5 * std::f64::consts::PI).sqrt();
        let sup = hist
            .centers()
            .iter()
            .zip(&hist.densities)
            .map(|(c, d)| (gauss(*c) - d).abs())
            .fold(0.0, f64::max);
        assert!(sup <= 0.05, "sup-norm {sup}");

        let acf = empirical_acf(&x, DEFAULT_MAX_LAG).unwrap();
        let exact = stationary_autocov(0.5, 4.0, 1.0, 1.0 / 32.0, DEFAULT_MAX_LAG).unwrap();
        for (e, a) in exact.iter().zip(&acf.values) {
            assert_close!(*a, e / exact[0], 0.03);
        }
    }

    #[test]
    fn kramers_marginal_shape() {
        let beta = 10f64.sqrt().recip();
        let p = LangevinParams::kramers(0.5, beta, 1.0).unwrap();
        let grid: Vec<f64> = (0..=2000).map(|i| (i as f64 - 1000.0) / 500.0).collect();
        let pdf = kramers_stationary_pdf_x(&p, &grid).unwrap();
        assert!(!pdf.boundary_warning);
        for i in 0..grid.len() {
            assert_eq!(pdf.density[i], pdf.density[grid.len() - 1 - i]);
        }
        // Trapezoid cross-check of the normalization.
        let trap: f64 = grid
            .windows(2)
            .zip(pdf.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum();
        assert_close!(trap, 1.0, 1e-6);
        let argmax = (0..grid.len()).max_by(|&a, &b| pdf.density[a].total_cmp(&pdf.density[b])).unwrap();
        assert_close!(grid[argmax].abs(), beta, 2e-3);

        let narrow = kramers_stationary_pdf_x(&p, &[-0.3, 0.0, 0.3]).unwrap();
        assert!(narrow.boundary_warning);
    }

    #[test]
    fn kramers_marginal_matches_simulation() {
        let beta = 10f64.sqrt().recip();
        let p = LangevinParams::kramers(0.5, beta, 1.0).unwrap();
        let cfg = SimConfig::new(1.0 / 64.0, 10_000_000, 17).with_burn_in(100.0);
        let x = simulate_and_observe(&p, &cfg, 1.0 / 64.0, false).unwrap().observations.into_values();
        let hist = empirical_pdf(&x, DEFAULT_BINS).unwrap();
        let pdf = kramers_stationary_pdf_x(&p, &hist.centers()).unwrap();
        // Normalized over the sampled range, which holds all but ~1e-9 of the mass.
        let sup = pdf
            .density
            .iter()
            .zip(&hist.densities)
            .map(|(a, d)| (a - d).abs())
            .fold(0.0, f64::max);
        assert!(sup <= 0.05, "sup-norm {sup}");
    }

    #[test]
    fn acf_reversal_symmetry() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let mut r = x.clone();
        r.reverse();
        let a = empirical_acf(&x, 10).unwrap();
        let b = empirical_acf(&r, 10).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert_close!(*u, *v, 1e-12);
        }
    }

    #[test]
    fn csv_shapes() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert_eq!(empirical_pdf(&x, 5).unwrap().to_csv().lines().count(), 6);
        assert_eq!(empirical_acf(&x, 3).unwrap().to_csv(0.5).lines().nth(2).unwrap(), "1,5e-1,".to_owned()
            + &format!("{:e}", empirical_acf(&x, 3).unwrap().values[1]));
    }
}
