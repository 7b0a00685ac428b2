//! Experiment configuration and end-to-end pipelines.
//!
//! A configuration is flat `key = value` text with dotted keys. Numbers accept
//! the forms `0.5`, `1e4`, `1/32` and `2^15`. Every dataset `i` is simulated
//! from seed `derive(sim.seed, i)`, so single-dataset commands see exactly the
//! first dataset of a replicate run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::contrast::{fit_contrast, ContrastFamily, ContrastFit};
use crate::error::{Error, Result};
use crate::forecast::{forecast_experiment, wide_csv, ForecastConfig, Predictor, RmseCurve};
use crate::linear_analytic::arma21_equiv;
use crate::narma::{fit_narma, simulate_narma, NarmaFit, NarmaFitOptions, NarmaSpec, NarmaStructure};
use crate::sde::{
    simulate_and_observe, stride_of, LangevinParams, ObservationSeries, PhaseState, Scheme, SimConfig,
};
use crate::seed;
use crate::stats::{empirical_acf, empirical_pdf, kramers_stationary_pdf_x, AcfCurve, Histogram, StationaryPdf};

/// Stream indices under `sim.seed` reserved for work other than datasets.
const FORECAST_STREAM: u64 = u64::MAX;
const FIT_STREAM: u64 = u64::MAX - 1;
const SURROGATE_STREAM: u64 = u64::MAX - 2;

pub const TABLE_SPACINGS: [f64; 3] = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
pub const CONSISTENCY_FRACTIONS: [f64; 4] = [0.125, 0.25, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Ct,
    Narma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: ContrastFamily,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub method: FitMethod,
    pub structure: NarmaStructure,
    pub q: usize,
    pub restarts: usize,
    pub n0: usize,
    pub n_ens: usize,
    pub k: usize,
    pub dt_solve: f64,
    pub n_datasets: usize,
    pub n_bins: usize,
    pub max_lag: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: ContrastFamily::Linear,
            gamma: 0.5,
            alpha: 4.0,
            beta: 10f64.sqrt().recip(),
            sigma: 1.0,
            dt: 1.0 / 1024.0,
            t_end: 1e4,
            burn_in: 1000.0,
            seed: 1,
            scheme: Scheme::It2,
            x0: 0.5,
            y0: 0.5,
            h: 1.0 / 32.0,
            method: FitMethod::Ct,
            structure: NarmaStructure::M3,
            q: 0,
            restarts: 5,
            n0: 1000,
            n_ens: 20,
            k: 120,
            dt_solve: 1.0 / 64.0,
            n_datasets: 20,
            n_bins: 81,
            max_lag: 200,
        }
    }
}

pub const KEYS: [&str; 24] = [
    "model.family",
    "model.gamma",
    "model.alpha",
    "model.beta",
    "model.sigma",
    "sim.dt",
    "sim.T",
    "sim.burn_in",
    "sim.seed",
    "sim.scheme",
    "sim.x0",
    "sim.y0",
    "obs.h",
    "fit.method",
    "fit.structure",
    "fit.q",
    "fit.restarts",
    "forecast.n0",
    "forecast.n_ens",
    "forecast.k",
    "forecast.dt_solve",
    "replicate.n_datasets",
    "stats.n_bins",
    "stats.max_lag",
];

/// Parses `0.5`, `1e4`, `1/32`, `2^15` and `-2^-3`.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let atom = |a: &str| -> std::result::Result<f64, String> {
        let a = a.trim();
        match a.split_once('^') {
            Some((b, e)) => {
                let b: f64 = b.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
                let e: f64 = e.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
                Ok(b.powf(e))
            }
            None => a.parse().map_err(|_| format!("bad number `{a}`")),
        }
    };
    let v = match s.split_once('/') {
        Some((n, d)) => atom(n)? / atom(d)?,
        None => atom(s)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let v = parse_number(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
        Ok(v as usize)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

impl ExperimentConfig {
    /// Sets one key; the error names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let f = || parse_number(value);
        let n = || parse_count(value);
        let r: std::result::Result<(), String> = (|| {
            match key {
                "model.family" => self.family = value.parse().map_err(|e: Error| e.to_string())?,
                "model.gamma" => self.gamma = f()?,
                "model.alpha" => self.alpha = f()?,
                "model.beta" => self.beta = f()?,
                "model.sigma" => self.sigma = f()?,
                "sim.dt" => self.dt = f()?,
                "sim.T" => self.t_end = f()?,
                "sim.burn_in" => self.burn_in = f()?,
                "sim.seed" => self.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
                "sim.scheme" => self.scheme = value.parse().map_err(|e: Error| e.to_string())?,
                "sim.x0" => self.x0 = f()?,
                "sim.y0" => self.y0 = f()?,
                "obs.h" => self.h = f()?,
                "fit.method" => {
                    self.method = match value.to_ascii_lowercase().as_str() {
                        "ct" => FitMethod::Ct,
                        "narma" => FitMethod::Narma,
                        _ => return Err(format!("unknown method `{value}` (ct | narma)")),
                    }
                }
                "fit.structure" => self.structure = value.parse().map_err(|e: Error| e.to_string())?,
                "fit.q" => self.q = n()?,
                "fit.restarts" => self.restarts = n()?,
                "forecast.n0" => self.n0 = n()?,
                "forecast.n_ens" => self.n_ens = n()?,
                "forecast.k" => self.k = n()?,
                "forecast.dt_solve" => self.dt_solve = f()?,
                "replicate.n_datasets" => self.n_datasets = n()?,
                "stats.n_bins" => self.n_bins = n()?,
                "stats.max_lag" => self.max_lag = n()?,
                _ => return Err("unknown key".to_string()),
            }
            Ok(())
        })();
        r.map_err(|e| Error::Config(vec![format!("{key}: {e}")]))
    }

    /// Applies `key = value` lines (blank lines and `#` comments allowed),
    /// reporting every bad line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut errs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(Error::Config(e)) = self.set(k.trim(), v) {
                        errs.extend(e.into_iter().map(|m| format!("line {}: {m}", i + 1)));
                    }
                }
                None => errs.push(format!("line {}: expected `key = value`", i + 1)),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Applies `key=value` overrides, reporting every bad one.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut errs = Vec::new();
        for o in overrides {
            match o.as_ref().split_once('=') {
                Some((k, v)) => {
                    if let Err(Error::Config(e)) = self.set(k.trim(), v) {
                        errs.extend(e);
                    }
                }
                None => errs.push(format!("override `{}` is not key=value", o.as_ref())),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let method = match self.method {
            FitMethod::Ct => "ct",
            FitMethod::Narma => "narma",
        };
        let vals: [String; 24] = [
            self.family.to_string(),
            self.gamma.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.sigma.to_string(),
            self.dt.to_string(),
            self.t_end.to_string(),
            self.burn_in.to_string(),
            self.seed.to_string(),
            self.scheme.to_string(),
            self.x0.to_string(),
            self.y0.to_string(),
            self.h.to_string(),
            method.to_string(),
            self.structure.to_string(),
            self.q.to_string(),
            self.restarts.to_string(),
            self.n0.to_string(),
            self.n_ens.to_string(),
            self.k.to_string(),
            self.dt_solve.to_string(),
            self.n_datasets.to_string(),
            self.n_bins.to_string(),
            self.max_lag.to_string(),
        ];
        KEYS.iter().zip(vals).fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    fn violations(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                e.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive("model.gamma", self.gamma);
        positive("model.sigma", self.sigma);
        match self.family {
            ContrastFamily::Linear => positive("model.alpha", self.alpha),
            ContrastFamily::Kramers => positive("model.beta", self.beta),
        }
        positive("sim.dt", self.dt);
        positive("sim.T", self.t_end);
        positive("obs.h", self.h);
        positive("forecast.dt_solve", self.dt_solve);
        if !(self.burn_in >= 0.0) {
            e.push(format!("sim.burn_in must be non-negative, got {}", self.burn_in));
        }
        if self.h > 0.0 && self.dt > 0.0 && stride_of(self.h, self.dt).is_err() {
            e.push(format!("obs.h = {} must be a multiple of sim.dt = {}", self.h, self.dt));
        }
        if self.h > 0.0 && self.dt_solve > 0.0 && stride_of(self.h, self.dt_solve).is_err() {
            e.push(format!("obs.h = {} must be a multiple of forecast.dt_solve = {}", self.h, self.dt_solve));
        }
        if self.h > 0.0 && self.t_end > 0.0 && self.n_obs() < 4 {
            e.push(format!("sim.T / obs.h gives {} observations, need at least 4", self.n_obs()));
        }
        if self.structure == NarmaStructure::M4 && self.q == 0 {
            e.push("fit.q must be at least 1 for structure M4".to_string());
        }
        if self.n0 == 0 {
            e.push("forecast.n0 must be positive".to_string());
        }
        if self.n_ens == 0 {
            e.push("forecast.n_ens must be positive".to_string());
        }
        if self.k <= self.init_len() {
            e.push(format!("forecast.k = {} must exceed the initialization length {}", self.k, self.init_len()));
        }
        if self.n_datasets < 2 {
            e.push(format!("replicate.n_datasets must be at least 2, got {}", self.n_datasets));
        }
        if self.n_bins == 0 {
            e.push("stats.n_bins must be positive".to_string());
        }
        e
    }

    /// Checks every constraint and lists all violations.
    pub fn validate(&self) -> Result<()> {
        let e = self.violations();
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    /// [`validate`](Self::validate) plus the forecast capacity constraint
    /// `K·(N0+1)·h ≤ T/2`.
    pub fn validate_forecast(&self) -> Result<()> {
        let mut e = self.violations();
        let need = self.k as f64 * (self.n0 + 1) as f64 * self.h;
        if need > 0.5 * self.t_end * (1.0 + 1e-12) {
            e.push(format!(
                "forecast.k * (forecast.n0 + 1) * obs.h = {need} exceeds sim.T / 2 = {}",
                0.5 * self.t_end
            ));
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    pub fn n_obs(&self) -> usize {
        (self.t_end / self.h).round() as usize
    }

    pub fn params(&self) -> Result<LangevinParams> {
        match self.family {
            ContrastFamily::Linear => LangevinParams::linear(self.gamma, self.alpha, self.sigma),
            ContrastFamily::Kramers => LangevinParams::kramers(self.gamma, self.beta, self.sigma),
        }
    }

    pub fn narma_spec(&self) -> Result<NarmaSpec> {
        NarmaSpec::new(self.structure, self.q)
    }

    /// Shared initialization length `2·max(p, q) + 1`.
    pub fn init_len(&self) -> usize {
        2 * self.q.max(2) + 1
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        ForecastConfig { n_pieces: self.n0, n_ens: self.n_ens, horizon: self.k, init_len: self.init_len() }
    }

    pub fn fit_options(&self) -> NarmaFitOptions {
        NarmaFitOptions { restarts: self.restarts, seed: seed::derive(self.seed, FIT_STREAM), ..Default::default() }
    }

    pub fn dataset_seed(&self, index: usize) -> u64 {
        seed::derive(self.seed, index as u64)
    }

    fn sim_config(&self, seed: u64, t_end: f64) -> SimConfig {
        SimConfig::new(self.dt, (t_end / self.dt).round() as usize, seed)
            .with_scheme(self.scheme)
            .with_initial(PhaseState::new(self.x0, self.y0))
            .with_burn_in(self.burn_in)
    }
}

/// Observations of dataset `index` at spacing `h`.
pub fn generate_dataset_at(cfg: &ExperimentConfig, index: usize, h: f64) -> Result<ObservationSeries> {
    let params = cfg.params()?;
    let sim = cfg.sim_config(cfg.dataset_seed(index), cfg.t_end);
    Ok(simulate_and_observe(&params, &sim, h, false)?.observations)
}

pub fn generate_dataset(cfg: &ExperimentConfig, index: usize) -> Result<ObservationSeries> {
    generate_dataset_at(cfg, index, cfg.h)
}

/// Named estimates from one fit.
pub type Estimates = Vec<(String, f64)>;

pub fn ct_estimates(fit: &ContrastFit) -> Estimates {
    let drift = match fit.family {
        ContrastFamily::Linear => "alpha",
        ContrastFamily::Kramers => "beta",
    };
    vec![
        ("gamma".into(), fit.theta.gamma),
        (drift.into(), fit.theta.drift2),
        ("sigma".into(), fit.theta.sigma2.sqrt()),
    ]
}

pub fn narma_estimates(fit: &NarmaFit) -> Estimates {
    let m = &fit.model;
    let mut v = vec![("a1".to_string(), m.a[0]), ("a2".to_string(), m.a[1])];
    v.extend(m.b.iter().enumerate().map(|(i, b)| (format!("b{}", i + 1), *b)));
    v.extend(m.c.iter().enumerate().map(|(i, c)| (format!("c{}", i + 1), *c)));
    v.push(("mu".into(), m.mu));
    v.push(("c0".into(), m.c0));
    v
}

fn fit_estimates(cfg: &ExperimentConfig, obs: &ObservationSeries) -> Result<Estimates> {
    match cfg.method {
        FitMethod::Ct => Ok(ct_estimates(&fit_contrast(obs, cfg.family)?)),
        FitMethod::Narma => Ok(narma_estimates(&fit_narma(cfg.narma_spec()?, obs, &cfg.fit_options())?)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateReport {
    pub h: f64,
    pub params: Vec<ParamSummary>,
    pub n_datasets: usize,
    pub n_ok: usize,
    /// `(dataset index, error)` for every excluded dataset.
    pub failures: Vec<(usize, String)>,
}

impl ReplicateReport {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub const CSV_HEADER: &'static str = "h,parameter,mean,std,n_ok,n_failed";

    pub fn csv_rows(&self) -> String {
        self.params.iter().fold(String::new(), |mut s, p| {
            let _ = writeln!(
                s,
                "{:e},{},{:e},{:e},{},{}",
                self.h,
                p.name,
                p.mean,
                p.std,
                self.n_ok,
                self.failures.len()
            );
            s
        })
    }
}

/// Mean and sample standard deviation per parameter over successful fits.
pub fn summarize(h: f64, results: Vec<Result<Estimates>>) -> Result<ReplicateReport> {
    let n_datasets = results.len();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    let first = ok.first().ok_or_else(|| {
        Error::DegenerateData(format!("all {n_datasets} datasets failed: {}", failures[0].1))
    })?;
    let n = ok.len() as f64;
    let params = first
        .iter()
        .enumerate()
        .map(|(j, (name, _))| {
            let mean = ok.iter().map(|e| e[j].1).sum::<f64>() / n;
            let var = if ok.len() > 1 {
                ok.iter().map(|e| (e[j].1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            ParamSummary { name: name.clone(), mean, std: var.sqrt() }
        })
        .collect();
    Ok(ReplicateReport { h, params, n_datasets, n_ok: ok.len(), failures })
}

/// Fits `cfg.n_datasets` independent datasets at each spacing in `hs`.
///
/// Each trajectory is simulated once at the finest spacing and subsampled for
/// the coarser ones, so all spacings see the same paths.
pub fn replicate_over_spacings(cfg: &ExperimentConfig, hs: &[f64]) -> Result<Vec<ReplicateReport>> {
    cfg.validate()?;
    let finest = hs.iter().copied().fold(f64::INFINITY, f64::min);
    let strides = hs.iter().map(|&h| stride_of(h, finest)).collect::<Result<Vec<_>>>()?;
    let per_dataset: Vec<Vec<Result<Estimates>>> = (0..cfg.n_datasets)
        .into_par_iter()
        .map(|i| match generate_dataset_at(cfg, i, finest) {
            Ok(obs) => strides
                .iter()
                .map(|&s| obs.subsample(s).and_then(|o| fit_estimates(cfg, &o)))
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                strides.iter().map(|_| Err(Error::DegenerateData(msg.clone()))).collect()
            }
        })
        .collect();
    let mut by_h: Vec<Vec<Result<Estimates>>> = hs.iter().map(|_| Vec::new()).collect();
    for row in per_dataset {
        for (slot, r) in by_h.iter_mut().zip(row) {
            slot.push(r);
        }
    }
    hs.iter().zip(by_h).map(|(&h, r)| summarize(h, r)).collect()
}

pub fn replicate_estimators(cfg: &ExperimentConfig) -> Result<ReplicateReport> {
    Ok(replicate_over_spacings(cfg, &[cfg.h])?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub spec: NarmaSpec,
    pub coefficient: String,
    /// One entry per fraction; `None` where the fit failed.
    pub values: Vec<Option<f64>>,
    /// `max_f |θ_f - θ_1| / |θ_1|` against the longest prefix.
    pub oscillation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyTable {
    pub fractions: Vec<f64>,
    pub rows: Vec<ConsistencyRow>,
    pub failures: Vec<String>,
}

impl ConsistencyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("structure,q,coefficient");
        for f in &self.fractions {
            let _ = write!(s, ",frac_{f}");
        }
        s += ",oscillation\n";
        let cell = |v: Option<f64>| v.map_or("failed".to_string(), |v| format!("{v:e}"));
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.spec.structure, r.spec.q, r.coefficient);
            for v in &r.values {
                let _ = write!(s, ",{}", cell(*v));
            }
            let _ = writeln!(s, ",{}", cell(r.oscillation));
        }
        s
    }

    pub fn row(&self, structure: NarmaStructure, coefficient: &str) -> Option<&ConsistencyRow> {
        self.rows.iter().find(|r| r.spec.structure == structure && r.coefficient == coefficient)
    }
}

/// Fits every spec on every prefix `obs[..f·N]`.
pub fn consistency_scan(
    obs: &ObservationSeries,
    specs: &[NarmaSpec],
    fractions: &[f64],
    opts: &NarmaFitOptions,
) -> Result<ConsistencyTable> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidParameter("fractions must lie in (0, 1]".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let longest = fractions
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for spec in specs {
        let fits: Vec<Option<Estimates>> = fractions
            .par_iter()
            .map(|&f| {
                let n = ((obs.len() as f64) * f).round() as usize;
                obs.slice(0..n).and_then(|o| fit_narma(*spec, &o, opts)).map(|fit| narma_estimates(&fit))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .zip(fractions)
            .map(|(r, f)| {
                r.map_err(|e| failures.push(format!("{} q={} fraction {f}: {e}", spec.structure, spec.q)))
                    .ok()
            })
            .collect();
        let names: Vec<String> = match fits.iter().flatten().next() {
            Some(e) => e.iter().map(|(n, _)| n.clone()).collect(),
            None => continue,
        };
        for (j, name) in names.into_iter().enumerate() {
            let values: Vec<Option<f64>> = fits.iter().map(|f| f.as_ref().map(|e| e[j].1)).collect();
            let oscillation = values[longest].and_then(|reference| {
                values
                    .iter()
                    .map(|v| v.map(|v| (v - reference).abs() / reference.abs()))
                    .collect::<Option<Vec<f64>>>()
                    .map(|d| d.into_iter().fold(0.0, f64::max))
            });
            rows.push(ConsistencyRow { spec: *spec, coefficient: name, values, oscillation });
        }
    }
    Ok(ConsistencyTable { fractions: fractions.to_vec(), rows, failures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub ct: ContrastFit,
    pub narma: NarmaFit,
    pub rmse_true: RmseCurve,
    pub rmse_est_sde: RmseCurve,
    pub rmse_narma: RmseCurve,
}

impl ForecastReport {
    pub fn wide_csv(&self) -> Result<String> {
        wide_csv(&[("true", &self.rmse_true), ("est_sde", &self.rmse_est_sde), ("narma", &self.rmse_narma)])
    }
}

/// Fits both models on the first half of `obs` and benchmarks them, along
/// with the true system, on pieces of the second half.
pub fn forecast_pipeline(cfg: &ExperimentConfig, obs: &ObservationSeries) -> Result<ForecastReport> {
    cfg.validate()?;
    let (train, test) = obs.halves()?;
    let ct = fit_contrast(&train, cfg.family)?;
    let narma = fit_narma(cfg.narma_spec()?, &train, &cfg.fit_options())?;
    let predictors = [
        Predictor::Sde { params: cfg.params()?, scheme: Scheme::It2, dt_solve: cfg.dt_solve },
        Predictor::Sde { params: ct.theta.to_params(cfg.family)?, scheme: Scheme::It2, dt_solve: cfg.dt_solve },
        Predictor::Narma { model: narma.model.clone() },
    ];
    let mut curves = forecast_experiment(
        &test,
        &predictors,
        &cfg.forecast_config(),
        seed::derive(cfg.seed, FORECAST_STREAM),
    )?
    .into_iter();
    let mut next = || curves.next().ok_or(Error::MismatchedConfig);
    Ok(ForecastReport { ct, narma, rmse_true: next()?, rmse_est_sde: next()?, rmse_narma: next()? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub pdf: Histogram,
    pub acf: AcfCurve,
    /// Analytic marginal at the histogram centers, for the Kramers family.
    pub analytic_pdf: Option<StationaryPdf>,
}

pub fn stats_pipeline(cfg: &ExperimentConfig, series: &[f64]) -> Result<StatsReport> {
    let pdf = empirical_pdf(series, cfg.n_bins)?;
    let acf = empirical_acf(series, cfg.max_lag)?;
    let analytic_pdf = match cfg.family {
        ContrastFamily::Kramers => Some(kramers_stationary_pdf_x(&cfg.params()?, &pdf.centers())?),
        ContrastFamily::Linear => None,
    };
    Ok(StatsReport { pdf, acf, analytic_pdf })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproduceTarget {
    Table1,
    Table2,
    Table3,
    Table4,
    Table5,
    FigRmse,
    FigAcfPdf,
}

impl std::str::FromStr for ReproduceTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "table1" => Self::Table1,
            "table2" => Self::Table2,
            "table3" => Self::Table3,
            "table4" => Self::Table4,
            "table5" => Self::Table5,
            "fig-rmse" => Self::FigRmse,
            "fig-acfpdf" => Self::FigAcfPdf,
            other => return Err(Error::Parse(format!("unknown reproduce target `{other}`"))),
        })
    }
}

impl std::fmt::Display for ReproduceTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Table1 => "table1",
            Self::Table2 => "table2",
            Self::Table3 => "table3",
            Self::Table4 => "table4",
            Self::Table5 => "table5",
            Self::FigRmse => "fig-rmse",
            Self::FigAcfPdf => "fig-acfpdf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Simulate,
    EstimateCt,
    FitNarma,
    Forecast,
    Stats,
    Replicate,
    Consistency,
    Reproduce(ReproduceTarget),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Self::Simulate => "simulate".into(),
            Self::EstimateCt => "estimate-ct".into(),
            Self::FitNarma => "fit-narma".into(),
            Self::Forecast => "forecast".into(),
            Self::Stats => "stats".into(),
            Self::Replicate => "replicate".into(),
            Self::Consistency => "consistency".into(),
            Self::Reproduce(t) => format!("reproduce {t}"),
        }
    }
}

/// Writes files into one output directory and remembers their names.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn load_or_simulate(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<ObservationSeries> {
    match input {
        Some(p) => ObservationSeries::from_csv(std::io::BufReader::new(fs::File::open(p)?)),
        None => generate_dataset(cfg, 0),
    }
}

fn with_family(cfg: &ExperimentConfig, family: ContrastFamily, method: FitMethod) -> ExperimentConfig {
    ExperimentConfig { family, method, ..cfg.clone() }
}

/// Runs `command` and writes its CSV outputs and `manifest.txt` into `out`.
/// Returns the names of the files written.
pub fn run_command(
    cfg: &ExperimentConfig,
    command: &Command,
    out: &Path,
    input: Option<&Path>,
) -> Result<Vec<String>> {
    match command {
        Command::Forecast | Command::Reproduce(ReproduceTarget::FigRmse) => cfg.validate_forecast()?,
        _ => cfg.validate()?,
    }
    fs::create_dir_all(out)?;
    let mut o = Outputs { dir: out.to_path_buf(), written: Vec::new() };
    match command {
        Command::Simulate => {
            o.write("observations.csv", &generate_dataset(cfg, 0)?.to_csv())?;
        }
        Command::EstimateCt => {
            let obs = load_or_simulate(cfg, input)?;
            o.write("ct_fit.csv", &fit_contrast(&obs, cfg.family)?.to_csv())?;
        }
        Command::FitNarma => {
            let obs = load_or_simulate(cfg, input)?;
            let fit = fit_narma(cfg.narma_spec()?, &obs, &cfg.fit_options())?;
            o.write("narma_model.txt", &narma_report(&fit))?;
        }
        Command::Forecast => {
            let obs = load_or_simulate(cfg, input)?;
            write_forecast(&mut o, &forecast_pipeline(cfg, &obs)?)?;
        }
        Command::Stats => {
            let obs = load_or_simulate(cfg, input)?;
            write_stats(&mut o, "data", &stats_pipeline(cfg, obs.values())?, obs.h())?;
        }
        Command::Replicate => {
            let r = replicate_estimators(cfg)?;
            o.write("replicate.csv", &replicate_csv(&[r]))?;
        }
        Command::Consistency => {
            let obs = load_or_simulate(cfg, input)?;
            let t = consistency_scan(&obs, &[cfg.narma_spec()?], &CONSISTENCY_FRACTIONS, &cfg.fit_options())?;
            o.write("consistency.csv", &t.to_csv())?;
        }
        Command::Reproduce(target) => reproduce(cfg, *target, &mut o)?,
    }
    let mut manifest = format!("sparam {}\ncommand = {}\n\n[config]\n", env!("CARGO_PKG_VERSION"), command.name());
    manifest += &cfg.to_text();
    manifest += "\n[outputs]\n";
    for f in &o.written {
        manifest += f;
        manifest.push('\n');
    }
    o.write("manifest.txt", &manifest)?;
    Ok(o.written)
}

fn narma_report(fit: &NarmaFit) -> String {
    let mut s = fit.model.to_kv();
    let _ = writeln!(s, "# nll = {}", fit.nll);
    let _ = writeln!(s, "# converged = {}", fit.converged);
    let moduli = fit.model.ma_root_moduli();
    if !moduli.is_empty() {
        let m: Vec<String> = moduli.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "# ma_root_moduli = {}", m.join(" "));
    }
    s
}

fn replicate_csv(reports: &[ReplicateReport]) -> String {
    let mut s = format!("{}\n", ReplicateReport::CSV_HEADER);
    for r in reports {
        s += &r.csv_rows();
    }
    s
}

fn write_forecast(o: &mut Outputs, r: &ForecastReport) -> Result<()> {
    o.write("ct_fit.csv", &r.ct.to_csv())?;
    o.write("narma_model.txt", &narma_report(&r.narma))?;
    o.write("rmse_true.csv", &r.rmse_true.to_csv())?;
    o.write("rmse_est_sde.csv", &r.rmse_est_sde.to_csv())?;
    o.write("rmse_narma.csv", &r.rmse_narma.to_csv())?;
    o.write("rmse_wide.csv", &r.wide_csv()?)
}

fn write_stats(o: &mut Outputs, tag: &str, r: &StatsReport, h: f64) -> Result<()> {
    o.write(&format!("pdf_{tag}.csv"), &r.pdf.to_csv())?;
    o.write(&format!("acf_{tag}.csv"), &r.acf.to_csv(h))?;
    if let Some(a) = &r.analytic_pdf {
        let mut s = String::from("x,density\n");
        for (x, d) in a.grid.iter().zip(&a.density) {
            let _ = writeln!(s, "{x:e},{d:e}");
        }
        o.write("pdf_analytic.csv", &s)?;
    }
    Ok(())
}

fn reproduce(cfg: &ExperimentConfig, target: ReproduceTarget, o: &mut Outputs) -> Result<()> {
    use ContrastFamily::{Kramers, Linear};
    match target {
        ReproduceTarget::Table1 | ReproduceTarget::Table3 => {
            let family = if target == ReproduceTarget::Table1 { Linear } else { Kramers };
            let c = with_family(cfg, family, FitMethod::Ct);
            let reports = replicate_over_spacings(&c, &TABLE_SPACINGS)?;
            o.write(&format!("{target}.csv"), &replicate_csv(&reports))
        }
        ReproduceTarget::Table2 => {
            let c = ExperimentConfig {
                structure: NarmaStructure::Arma,
                q: 1,
                ..with_family(cfg, Linear, FitMethod::Narma)
            };
            let reports = replicate_over_spacings(&c, &TABLE_SPACINGS)?;
            let mut s = String::from("h,parameter,t_value,mean,std\n");
            for r in &reports {
                let t = arma21_equiv(c.gamma, c.alpha, c.sigma, r.h)?;
                let rows = [
                    ("a1", t.a1, "a1", 1.0),
                    ("neg_a2", -t.a2, "a2", -1.0),
                    ("theta1", t.theta1, "c1", 1.0),
                    ("sigma_w", t.sigma_w, "c0", 1.0),
                ];
                for (label, tv, key, sign) in rows {
                    let p = r.get(key).ok_or(Error::MismatchedConfig)?;
                    let _ = writeln!(s, "{:e},{label},{tv:e},{:e},{:e}", r.h, sign * p.mean, p.std);
                }
            }
            o.write("table2.csv", &s)
        }
        ReproduceTarget::Table4 => {
            let c = with_family(cfg, Kramers, FitMethod::Narma);
            let reports = replicate_over_spacings(&c, &TABLE_SPACINGS)?;
            o.write("table4.csv", &replicate_csv(&reports))
        }
        ReproduceTarget::Table5 => {
            let c = with_family(cfg, Kramers, FitMethod::Narma);
            let obs = generate_dataset(&c, 0)?;
            let specs = [NarmaSpec::new(NarmaStructure::M2, 0)?, NarmaSpec::new(NarmaStructure::M3, 0)?];
            let t = consistency_scan(&obs, &specs, &CONSISTENCY_FRACTIONS, &c.fit_options())?;
            o.write("table5.csv", &t.to_csv())
        }
        ReproduceTarget::FigRmse => {
            let c = with_family(cfg, Kramers, FitMethod::Narma);
            let obs = generate_dataset(&c, 0)?;
            write_forecast(o, &forecast_pipeline(&c, &obs)?)
        }
        ReproduceTarget::FigAcfPdf => {
            let c = with_family(cfg, Kramers, FitMethod::Narma);
            let obs = generate_dataset(&c, 0)?;
            let (train, _) = obs.halves()?;
            let ct = fit_contrast(&train, Kramers)?;
            let narma = fit_narma(c.narma_spec()?, &train, &c.fit_options())?;
            write_stats(o, "data", &stats_pipeline(&c, obs.values())?, c.h)?;

            let surrogate_seed = seed::derive(c.seed, SURROGATE_STREAM);
            let mut rng = seed::task_stream(surrogate_seed, 0);
            let narma_path = simulate_narma(&narma.model, obs.len(), &obs.values()[..2], &[], &mut rng)?;
            write_stats(o, "narma", &stats_pipeline(&c, &narma_path)?, c.h)?;

            let est = ct.theta.to_params(Kramers)?;
            let sim = SimConfig::new(c.dt_solve, (c.t_end / c.dt_solve).round() as usize, seed::derive(surrogate_seed, 1))
                .with_initial(PhaseState::new(c.x0, c.y0))
                .with_burn_in(c.burn_in);
            let est_path = simulate_and_observe(&est, &sim, c.h, false)?.observations;
            write_stats(o, "est_sde", &stats_pipeline(&c, est_path.values())?, c.h)
        }
    }
}

/// The resolved configuration as a sorted map, for diagnostics.
pub fn config_map(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    cfg.to_text()
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}
