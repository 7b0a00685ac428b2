//! Ensemble forecasting and the RMSE benchmark.
//!
//! Held-out data are cut into `N0` disjoint pieces of length `K`. Every
//! predictor launches `N_ens` members from the first `m` observed values of a
//! piece; the ensemble mean is compared with the data at each lead time and
//! the error is root-mean-squared over pieces.

use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::narma::{compute_residuals, simulate_narma, NarmaModel, DIVERGENCE_GUARD};
use crate::sde::{step, stride_of, LangevinParams, ObservationSeries, PhaseState, Scheme};
use crate::seed;

pub const DEFAULT_DT_SOLVE: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Sde {
        params: LangevinParams,
        scheme: Scheme,
        dt_solve: f64,
    },
    Narma {
        model: NarmaModel,
    },
}

impl Predictor {
    pub fn sde(params: LangevinParams) -> Self {
        Self::Sde { params, scheme: Scheme::It2, dt_solve: DEFAULT_DT_SOLVE }
    }

    fn validate(&self, h: f64, config: &ForecastConfig) -> Result<()> {
        match self {
            Self::Sde { dt_solve, .. } => stride_of(h, *dt_solve).map(|_| ()),
            Self::Narma { model } => {
                let need = model.spec.init_len();
                if config.init_len < need {
                    return Err(Error::InvalidParameter(format!(
                        "NARMA with q = {} needs init_len >= {need}, got {}",
                        model.spec.q, config.init_len
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForecastConfig {
    /// Number of pieces `N0`.
    pub n_pieces: usize,
    /// Members per ensemble `N_ens`.
    pub n_ens: usize,
    /// Piece length `K`, in observations.
    pub horizon: usize,
    /// Observations shared by all members at the start of a piece.
    pub init_len: usize,
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_pieces == 0 {
            errs.push("n_pieces must be positive".to_string());
        }
        if self.n_ens == 0 {
            errs.push("n_ens must be positive".to_string());
        }
        if self.init_len < 2 {
            errs.push(format!("init_len must be at least 2, got {}", self.init_len));
        }
        if self.horizon <= self.init_len {
            errs.push(format!("horizon {} must exceed init_len {}", self.horizon, self.init_len));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Index ranges `[K·i, K·i + K)` for `i = 1..=N0`.
pub fn make_pieces(n_obs: usize, config: &ForecastConfig) -> Result<Vec<Range<usize>>> {
    config.validate()?;
    let k = config.horizon;
    let max_feasible = (n_obs / k).saturating_sub(1);
    if config.n_pieces > max_feasible {
        return Err(Error::TooManyPieces { requested: config.n_pieces, max_feasible });
    }
    Ok((1..=config.n_pieces).map(|i| k * i..k * i + k).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    /// Surviving members, each of length `K`.
    pub members: Vec<Vec<f64>>,
    pub diverged: usize,
}

impl EnsembleForecast {
    /// Ensemble mean; the first `init_len` entries are the data themselves so
    /// that the error there is exactly zero. `None` if every member diverged.
    pub fn mean(&self, piece: &[f64], init_len: usize) -> Option<Vec<f64>> {
        if self.members.is_empty() {
            return None;
        }
        let n = self.members.len() as f64;
        Some(
            (0..piece.len())
                .map(|k| {
                    if k < init_len {
                        piece[k]
                    } else {
                        self.members.iter().map(|m| m[k]).sum::<f64>() / n
                    }
                })
                .collect(),
        )
    }
}

fn sde_member<R: Rng + ?Sized>(
    params: &LangevinParams,
    scheme: Scheme,
    dt_solve: f64,
    stride: usize,
    start: PhaseState,
    n_out: usize,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let mut s = start;
    let mut out = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        for _ in 0..stride {
            s = step(params, scheme, s, dt_solve, rng);
        }
        if !(s.x.abs() <= DIVERGENCE_GUARD && s.y.is_finite()) {
            return None;
        }
        out.push(s.x);
    }
    Some(out)
}

/// `N_ens` forecasts over one piece, member `j` drawing from stream
/// `derive(seed, j)`.
pub fn ensemble_forecast(
    predictor: &Predictor,
    piece: &[f64],
    h: f64,
    config: &ForecastConfig,
    seed: u64,
) -> Result<EnsembleForecast> {
    config.validate()?;
    predictor.validate(h, config)?;
    let m = config.init_len;
    if piece.len() <= m {
        return Err(Error::InsufficientData { needed: m + 1, got: piece.len() });
    }
    let n_out = piece.len() - m;
    let head = &piece[..m];

    let run: Box<dyn Fn(&mut seed::StreamRng) -> Option<Vec<f64>> + '_> = match predictor {
        Predictor::Sde { params, scheme, dt_solve } => {
            let stride = stride_of(h, *dt_solve)?;
            let start = PhaseState::new(head[m - 1], (head[m - 1] - head[m - 2]) / h);
            let (params, scheme, dt) = (*params, *scheme, *dt_solve);
            Box::new(move |rng| sde_member(&params, scheme, dt, stride, start, n_out, rng))
        }
        Predictor::Narma { model } => {
            let window = ObservationSeries::new(h, head.to_vec())?;
            let trace = compute_residuals(model, &window)?;
            let q = model.spec.q;
            let init_xi = trace.xi[trace.xi.len().saturating_sub(q)..].to_vec();
            Box::new(move |rng| simulate_narma(model, n_out, head, &init_xi, rng).ok())
        }
    };

    let mut members = Vec::with_capacity(config.n_ens);
    let mut diverged = 0;
    for j in 0..config.n_ens {
        let mut rng = seed::task_stream(seed, j as u64);
        match run(&mut rng) {
            Some(tail) => {
                let mut full = head.to_vec();
                full.extend(tail);
                members.push(full);
            }
            None => diverged += 1,
        }
    }
    Ok(EnsembleForecast { members, diverged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseCurve {
    pub h: f64,
    pub config: ForecastConfig,
    /// `values[k - 1] = RMSE(kh)` for `k = 1..=K`.
    pub values: Vec<f64>,
    pub diverged_members: usize,
    /// Pieces where every member diverged; left out of the average.
    pub failed_pieces: usize,
}

impl RmseCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t,rmse\n");
        for (i, v) in self.values.iter().enumerate() {
            let k = i + 1;
            let _ = writeln!(s, "{},{:e},{:e}", k, k as f64 * self.h, v);
        }
        s
    }

    /// Largest pointwise gap to another curve.
    pub fn max_deviation(&self, other: &RmseCurve) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean over the last quarter of lead times.
    pub fn plateau(&self) -> f64 {
        let tail = &self.values[self.values.len() * 3 / 4..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// One wide file with a column per curve, headed `rmse_<name>`.
pub fn wide_csv(columns: &[(&str, &RmseCurve)]) -> Result<String> {
    let first = columns.first().ok_or(Error::MismatchedConfig)?.1;
    if columns.iter().any(|(_, c)| c.config != first.config || c.h != first.h) {
        return Err(Error::MismatchedConfig);
    }
    let mut s = String::from("k,t");
    for (name, _) in columns {
        s += &format!(",rmse_{name}");
    }
    s.push('\n');
    for i in 0..first.values.len() {
        let k = i + 1;
        let _ = write!(s, "{},{:e}", k, k as f64 * first.h);
        for (_, c) in columns {
            let _ = write!(s, ",{:e}", c.values[i]);
        }
        s.push('\n');
    }
    Ok(s)
}

/// RMSE of ensemble means against the data they forecast. Pieces whose
/// forecast is `None` are skipped and counted.
pub fn rmse_curve(
    means: &[Option<Vec<f64>>],
    pieces: &[&[f64]],
    h: f64,
    config: &ForecastConfig,
    diverged_members: usize,
) -> Result<RmseCurve> {
    if means.len() != pieces.len() || pieces.iter().any(|p| p.len() != config.horizon) {
        return Err(Error::MismatchedConfig);
    }
    let mut sums = vec![0.0; config.horizon];
    let mut used = 0usize;
    for (mean, data) in means.iter().zip(pieces) {
        let Some(mean) = mean else { continue };
        if mean.len() != config.horizon {
            return Err(Error::MismatchedConfig);
        }
        used += 1;
        for ((s, a), b) in sums.iter_mut().zip(mean).zip(data.iter()) {
            *s += (a - b) * (a - b);
        }
    }
    let values = sums
        .iter()
        .map(|s| if used > 0 { (s / used as f64).sqrt() } else { f64::NAN })
        .collect();
    Ok(RmseCurve {
        h,
        config: *config,
        values,
        diverged_members,
        failed_pieces: means.len() - used,
    })
}

/// Runs every predictor on the same pieces of `obs`. Predictor `p` on piece
/// `i` draws from `derive(derive(base_seed, p), i)`, so results do not depend
/// on how work is scheduled.
pub fn forecast_experiment(
    obs: &ObservationSeries,
    predictors: &[Predictor],
    config: &ForecastConfig,
    base_seed: u64,
) -> Result<Vec<RmseCurve>> {
    let ranges = make_pieces(obs.len(), config)?;
    let pieces: Vec<&[f64]> = ranges.iter().map(|r| &obs.values()[r.clone()]).collect();
    let h = obs.h();
    predictors
        .iter()
        .enumerate()
        .map(|(p, predictor)| {
            predictor.validate(h, config)?;
            let pred_seed = seed::derive(base_seed, p as u64);
            let results: Vec<(Option<Vec<f64>>, usize)> = pieces
                .par_iter()
                .enumerate()
                .map(|(i, piece)| {
                    let ens = ensemble_forecast(predictor, piece, h, config, seed::derive(pred_seed, i as u64))?;
                    Ok((ens.mean(piece, config.init_len), ens.diverged))
                })
                .collect::<Result<_>>()?;
            let diverged = results.iter().map(|r| r.1).sum();
            let means: Vec<_> = results.into_iter().map(|r| r.0).collect();
            rmse_curve(&means, &pieces, h, config, diverged)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_analytic::propagator;
    use crate::narma::{NarmaSpec, NarmaStructure};
    use crate::sde::{simulate_and_observe, SimConfig};

    fn cfg(n_pieces: usize, n_ens: usize, horizon: usize, init_len: usize) -> ForecastConfig {
        ForecastConfig { n_pieces, n_ens, horizon, init_len }
    }

    #[test]
    fn pieces_arithmetic() {
        let p = make_pieces(50, &cfg(3, 1, 10, 5)).unwrap();
        assert_eq!(p, vec![10..20, 20..30, 30..40]);
        assert!(matches!(
            make_pieces(50, &cfg(5, 1, 10, 5)),
            Err(Error::TooManyPieces { requested: 5, max_feasible: 4 })
        ));
        assert!(make_pieces(50, &cfg(1, 1, 5, 5)).is_err());
    }

    #[test]
    fn noiseless_members_coincide() {
        let spec = NarmaSpec::new(NarmaStructure::M3, 0).unwrap();
        let model = NarmaModel::new(spec, [1.9, -0.95], vec![0.01, 0.0, -0.02], vec![], 0.0, 0.0).unwrap();
        let piece: Vec<f64> = (0..30).map(|i| (i as f64 * 0.2).sin()).collect();
        let c = cfg(1, 5, 30, 5);
        let e = ensemble_forecast(&Predictor::Narma { model }, &piece, 0.125, &c, 3).unwrap();
        assert_eq!(e.members.len(), 5);
        assert!(e.members.iter().all(|m| m == &e.members[0]));
        assert_eq!(&e.members[0][..5], &piece[..5]);

        let params = LangevinParams { sigma: 0.0, ..LangevinParams::linear(0.5, 4.0, 1.0).unwrap() };
        let e = ensemble_forecast(&Predictor::sde(params), &piece, 0.125, &c, 3).unwrap();
        assert!(e.members.iter().all(|m| m == &e.members[0]));
    }

    #[test]
    fn sde_mean_follows_propagator() {
        let (g, a) = (0.5, 4.0);
        let params = LangevinParams::linear(g, a, 1.0).unwrap();
        let h = 0.125;
        let piece = [0.0, 0.1, 0.3, 0.45, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let c = cfg(1, 40_000, piece.len(), 5);
        let e = ensemble_forecast(&Predictor::sde(params), &piece, h, &c, 1).unwrap();
        let mean = e.mean(&piece, 5).unwrap();
        let (x0, y0) = (0.6, (0.6 - 0.45) / h);
        for k in 5..piece.len() {
            let lead = (k - 4) as f64 * h;
            let p = propagator(g, a, lead).unwrap();
            let want = p.a11 * x0 + p.a12 * y0;
            // Standard error of the mean is at most 0.5/200.
            assert_close!(mean[k], want, 0.01);
        }
    }

    #[test]
    fn rmse_examples() {
        let c = cfg(1, 1, 8, 3);
        let data: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let r = rmse_curve(&[Some(data.clone())], &[&data], 0.5, &c, 0).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));

        let mut shifted = data.clone();
        for v in &mut shifted[3..] {
            *v += 0.25;
        }
        let r = rmse_curve(&[Some(shifted)], &[&data], 0.5, &c, 0).unwrap();
        assert_eq!(&r.values[..3], &[0.0; 3]);
        assert!(r.values[3..].iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(rmse_curve(&[None], &[&data[..4]], 0.5, &c, 0).is_err());
        assert_eq!(r.to_csv().lines().count(), 9);
    }

    #[test]
    fn experiment_is_deterministic_and_starts_at_zero() {
        let params = LangevinParams::linear(0.5, 4.0, 1.0).unwrap();
        let sim = SimConfig::new(1.0 / 64.0, 64 * 400, 5);
        let obs = simulate_and_observe(&params, &sim, 0.125, false).unwrap().observations;
        let c = cfg(20, 8, 40, 5);
        let preds = [Predictor::sde(params)];
        let a = forecast_experiment(&obs, &preds, &c, 77).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| forecast_experiment(&obs, &preds, &c, 77).unwrap());
        assert_eq!(a, b);
        assert!(a[0].values[..5].iter().all(|&v| v == 0.0));
        assert!(a[0].values[5..].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn wide_csv_checks_configs() {
        let c = cfg(1, 1, 6, 2);
        let r = RmseCurve { h: 0.5, config: c, values: vec![0.0; 6], diverged_members: 0, failed_pieces: 0 };
        let s = wide_csv(&[("true", &r), ("est_sde", &r), ("narma", &r)]).unwrap();
        assert_eq!(s.lines().next().unwrap(), "k,t,rmse_true,rmse_est_sde,rmse_narma");
        assert_eq!(s.lines().count(), 7);
        let other = RmseCurve { config: cfg(2, 1, 6, 2), ..r.clone() };
        assert!(matches!(wide_csv(&[("a", &r), ("b", &other)]), Err(Error::MismatchedConfig)));
    }
}
