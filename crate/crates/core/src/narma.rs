//! NARMA(2, q) models whose nonlinear terms are read off a numerical scheme.
//!
//! `X_n = Φ_n + ξ_n` with
//! `Φ_n = μ + a1 X_{n-1} + a2 X_{n-2} + Σ b_k Q_k + Σ_{j=1}^q c_j ξ_{n-j}`
//! and `ξ_n ~ N(0, c0²)`. The regressors `Q_k` depend on the structure:
//!
//! | structure | `Q_k` |
//! |-----------|-------|
//! | ARMA | none |
//! | M1 | `X_{n-2}³` |
//! | M2 | `X_{n-1}³`, `X_{n-2}²(X_{n-1} - X_{n-2})` |
//! | M3 | M2 and `X_{n-2}³` |
//! | M4 | `X_{n-1}³`, `X_{n-2}²X_{n-1}`, `X_{n-2}³`, `X_{n-2}⁵`, `X_{n-2}²ξ_{n-1}` |
//!
//! Fitting maximizes the conditional likelihood, where shocks are rebuilt
//! recursively from data starting from `ξ_1 = … = ξ_m = 0`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsq::LeastSquares;
use crate::sde::ObservationSeries;
use crate::seed;
use crate::simplex::{minimize, SimplexOptions};

/// Order of the autoregressive part; fixed for every structure.
pub const P: usize = 2;

/// `|X|` beyond this counts as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NarmaStructure {
    Arma,
    M1,
    M2,
    M3,
    M4,
}

impl NarmaStructure {
    pub const ALL: [NarmaStructure; 5] = [Self::Arma, Self::M1, Self::M2, Self::M3, Self::M4];

    pub fn n_nonlinear(self) -> usize {
        match self {
            Self::Arma => 0,
            Self::M1 => 1,
            Self::M2 => 2,
            Self::M3 => 3,
            Self::M4 => 5,
        }
    }

    /// Whether the last regressor multiplies a past shock.
    fn has_shock_term(self) -> bool {
        self == Self::M4
    }

    /// Writes `Q_k(X_{n-1}, X_{n-2}, ξ_{n-1})` into `out`.
    #[inline]
    fn terms(self, x1: f64, x2: f64, xi1: f64, out: &mut [f64; 5]) {
        let x2sq = x2 * x2;
        match self {
            Self::Arma => {}
            Self::M1 => out[0] = x2sq * x2,
            Self::M2 | Self::M3 => {
                out[0] = x1 * x1 * x1;
                out[1] = x2sq * (x1 - x2);
                out[2] = x2sq * x2;
            }
            Self::M4 => {
                out[0] = x1 * x1 * x1;
                out[1] = x2sq * x1;
                out[2] = x2sq * x2;
                out[3] = x2sq * x2sq * x2;
                out[4] = x2sq * xi1;
            }
        }
    }
}

impl fmt::Display for NarmaStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Arma => "ARMA",
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::M3 => "M3",
            Self::M4 => "M4",
        })
    }
}

impl FromStr for NarmaStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ARMA" => Ok(Self::Arma),
            "M1" => Ok(Self::M1),
            "M2" => Ok(Self::M2),
            "M3" => Ok(Self::M3),
            "M4" => Ok(Self::M4),
            other => Err(Error::Parse(format!("unknown NARMA structure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NarmaSpec {
    pub structure: NarmaStructure,
    pub q: usize,
}

impl NarmaSpec {
    pub fn new(structure: NarmaStructure, q: usize) -> Result<Self> {
        if structure.has_shock_term() && q == 0 {
            return Err(Error::InvalidParameter(format!("{structure} needs q >= 1")));
        }
        Ok(Self { structure, q })
    }

    /// Number of initial values whose shocks are set to zero, `max(p, q)`.
    pub fn m(&self) -> usize {
        P.max(self.q)
    }

    /// Free coefficients `(a, b, c, μ)`.
    pub fn dim(&self) -> usize {
        P + self.structure.n_nonlinear() + self.q + 1
    }

    /// Forecast initialization length `2·max(p, q) + 1`.
    pub fn init_len(&self) -> usize {
        2 * self.m() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarmaModel {
    pub spec: NarmaSpec,
    pub a: [f64; 2],
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub mu: f64,
    /// Shock standard deviation.
    pub c0: f64,
}

impl NarmaModel {
    pub fn new(spec: NarmaSpec, a: [f64; 2], b: Vec<f64>, c: Vec<f64>, mu: f64, c0: f64) -> Result<Self> {
        let model = Self { spec, a, b, c, mu, c0 };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let nb = self.spec.structure.n_nonlinear();
        if self.b.len() != nb || self.c.len() != self.spec.q {
            return Err(Error::InvalidParameter(format!(
                "{} with q = {} needs {} b and {} c coefficients, got {} and {}",
                self.spec.structure,
                self.spec.q,
                nb,
                self.spec.q,
                self.b.len(),
                self.c.len()
            )));
        }
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidParameter(format!("c0 must be non-negative, got {}", self.c0)));
        }
        Ok(())
    }

    /// Coefficients packed as `[a1, a2, b.., c.., μ]`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = self.a.to_vec();
        v.extend(&self.b);
        v.extend(&self.c);
        v.push(self.mu);
        v
    }

    fn unpack(spec: NarmaSpec, v: &[f64], c0: f64) -> Self {
        let nb = spec.structure.n_nonlinear();
        Self {
            spec,
            a: [v[0], v[1]],
            b: v[2..2 + nb].to_vec(),
            c: v[2 + nb..2 + nb + spec.q].to_vec(),
            mu: v[2 + nb + spec.q],
            c0,
        }
    }

    /// `Φ_n` given the two previous values and `xi_hist[j-1] = ξ_{n-j}`.
    #[inline]
    fn phi(&self, x1: f64, x2: f64, xi_hist: &[f64]) -> f64 {
        let mut q = [0.0; 5];
        let xi1 = xi_hist.first().copied().unwrap_or(0.0);
        self.spec.structure.terms(x1, x2, xi1, &mut q);
        let mut v = self.mu + self.a[0] * x1 + self.a[1] * x2;
        for (b, t) in self.b.iter().zip(&q) {
            v += b * t;
        }
        for (c, xi) in self.c.iter().zip(xi_hist) {
            v += c * xi;
        }
        v
    }

    /// Moduli of the reciprocal roots of `1 + c1 z + … + cq z^q`; all below
    /// one means the MA part is invertible.
    pub fn ma_root_moduli(&self) -> Vec<f64> {
        let q = self.c.len();
        if q == 0 {
            return Vec::new();
        }
        let mut m = DMatrix::<f64>::zeros(q, q);
        for (j, &c) in self.c.iter().enumerate() {
            m[(0, j)] = -c;
        }
        for i in 1..q {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues().iter().map(|z| z.norm()).collect()
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "structure = {}\np = {}\nq = {}\na1 = {}\na2 = {}\n",
            self.spec.structure, P, self.spec.q, self.a[0], self.a[1]
        );
        for (i, b) in self.b.iter().enumerate() {
            s += &format!("b{} = {}\n", i + 1, b);
        }
        for (i, c) in self.c.iter().enumerate() {
            s += &format!("c{} = {}\n", i + 1, c);
        }
        s += &format!("mu = {}\nc0 = {}\n", self.mu, self.c0);
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Parse(format!("missing key `{k}`")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Parse(format!("bad number for `{k}`")))
        };
        let structure: NarmaStructure = get("structure")?.parse()?;
        let p: usize = get("p")?.parse().map_err(|_| Error::Parse("bad p".into()))?;
        if p != P {
            return Err(Error::Parse(format!("only p = {P} is supported, got {p}")));
        }
        let q: usize = get("q")?.parse().map_err(|_| Error::Parse("bad q".into()))?;
        let spec = NarmaSpec::new(structure, q)?;
        let b = (1..=structure.n_nonlinear()).map(|i| num(&format!("b{i}"))).collect::<Result<_>>()?;
        let c = (1..=q).map(|i| num(&format!("c{i}"))).collect::<Result<_>>()?;
        Self::new(spec, [num("a1")?, num("a2")?], b, c, num("mu")?, num("c0")?)
    }
}

/// Shocks `ξ_n` for `n = m+1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    pub m: usize,
    pub xi: Vec<f64>,
}

/// Pushes `v` onto the front of a fixed-length history.
#[inline]
fn shift_in(hist: &mut [f64], v: f64) {
    if !hist.is_empty() {
        hist.rotate_right(1);
        hist[0] = v;
    }
}

/// Runs the shock recursion over `x`, calling `sink` with every new `ξ_n`.
fn run_residuals(model: &NarmaModel, x: &[f64], mut sink: impl FnMut(f64)) -> Result<()> {
    let m = model.spec.m();
    if x.len() <= m {
        return Err(Error::InsufficientData { needed: m + 1, got: x.len() });
    }
    let mut hist = vec![0.0; model.spec.q];
    for n in m..x.len() {
        let phi = model.phi(x[n - 1], x[n - 2], &hist);
        if !phi.is_finite() {
            return Err(Error::NumericOverflow { index: n });
        }
        let xi = x[n] - phi;
        shift_in(&mut hist, xi);
        sink(xi);
    }
    Ok(())
}

pub fn compute_residuals(model: &NarmaModel, obs: &ObservationSeries) -> Result<ResidualTrace> {
    let mut xi = Vec::with_capacity(obs.len());
    run_residuals(model, obs.values(), |v| xi.push(v))?;
    Ok(ResidualTrace { m: model.spec.m(), xi })
}

fn residual_ss(model: &NarmaModel, x: &[f64]) -> Result<f64> {
    let mut ss = 0.0;
    run_residuals(model, x, |v| ss += v * v)?;
    if ss.is_finite() {
        Ok(ss)
    } else {
        Err(Error::NumericOverflow { index: x.len() - 1 })
    }
}

fn nll_from_ss(ss: f64, c0: f64, n: usize, q: usize) -> f64 {
    let c02 = c0 * c0;
    ss / (2.0 * c02) + 0.5 * (n - q) as f64 * c02.ln()
}

/// `Σ ξ_n²/(2c0²) + ((N - q)/2) log c0²`.
pub fn conditional_nll(model: &NarmaModel, obs: &ObservationSeries) -> Result<f64> {
    let ss = residual_ss(model, obs.values())?;
    Ok(nll_from_ss(ss, model.c0, obs.len(), model.spec.q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarmaFitOptions {
    /// Jittered restarts after the first simplex run.
    pub restarts: usize,
    pub simplex: SimplexOptions,
    /// Initial simplex step as a fraction of each coefficient.
    pub step_frac: f64,
    /// Relative jitter applied between restarts.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for NarmaFitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            simplex: SimplexOptions::default(),
            step_frac: 0.1,
            jitter: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarmaFit {
    pub model: NarmaModel,
    pub nll: f64,
    /// Best objective after the initial run and after every restart.
    pub history: Vec<f64>,
    pub converged: bool,
    pub evals: usize,
}

/// Least-squares fit with the MA part and any shock-driven regressor held at zero.
fn least_squares_init(spec: NarmaSpec, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let nb = spec.structure.n_nonlinear();
    let nb_ls = if spec.structure.has_shock_term() { nb - 1 } else { nb };
    let ncols = P + nb_ls + 1;
    let mut ls = LeastSquares::new(ncols);
    let mut row = vec![0.0; ncols];
    let mut q = [0.0; 5];
    for n in spec.m()..x.len() {
        let (x1, x2) = (x[n - 1], x[n - 2]);
        spec.structure.terms(x1, x2, 0.0, &mut q);
        row[0] = x1;
        row[1] = x2;
        row[P..P + nb_ls].copy_from_slice(&q[..nb_ls]);
        row[ncols - 1] = 1.0;
        ls.push(&row, x[n]);
    }
    let sol = ls.solve()?;
    let mut packed = sol.coef[..P + nb_ls].to_vec();
    packed.resize(P + nb + spec.q, 0.0);
    packed.push(sol.coef[ncols - 1]);
    Ok((packed, sol.rss))
}

/// Conditional maximum-likelihood fit.
///
/// With `q = 0` the estimator is ordinary least squares. Otherwise the sum of
/// squared shocks is minimized by Nelder–Mead (with `c0²` profiled out),
/// starting from the least-squares fit with `c = 0`, followed by jittered
/// restarts from the best point so far.
pub fn fit_narma(spec: NarmaSpec, obs: &ObservationSeries, opts: &NarmaFitOptions) -> Result<NarmaFit> {
    let spec = NarmaSpec::new(spec.structure, spec.q)?;
    let x = obs.values();
    let needed = 50 * spec.dim();
    if x.len() < needed {
        return Err(Error::InsufficientData { needed, got: x.len() });
    }
    let n_eff = (x.len() - spec.q) as f64;
    let (init, rss) = least_squares_init(spec, x)?;

    if spec.q == 0 {
        let c0 = (rss / n_eff).sqrt();
        let model = NarmaModel::unpack(spec, &init, c0);
        // Recompute so that `nll` is consistent with `conditional_nll`.
        let ss = residual_ss(&model, x)?;
        let c0 = (ss / n_eff).sqrt();
        let model = NarmaModel { c0, ..model };
        let nll = nll_from_ss(ss, c0, x.len(), 0);
        return Ok(NarmaFit { model, nll, history: vec![nll], converged: true, evals: 0 });
    }

    let objective = |v: &[f64]| {
        let model = NarmaModel::unpack(spec, v, 1.0);
        residual_ss(&model, x).unwrap_or(f64::INFINITY)
    };
    let steps_for = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&c| if c != 0.0 { opts.step_frac * c.abs() } else { 0.1 })
            .collect()
    };
    let to_nll = |ss: f64| 0.5 * n_eff + 0.5 * n_eff * (ss / n_eff).ln();

    let first = minimize(objective, &init, &steps_for(&init), &opts.simplex);
    let mut best = first.clone();
    let mut evals = first.evals;
    let mut history = vec![to_nll(best.f)];
    let mut rng = seed::stream(opts.seed);
    for _ in 0..opts.restarts {
        let start: Vec<f64> = best
            .x
            .iter()
            .map(|&c| {
                let u: f64 = rng.sample(StandardNormal);
                if c != 0.0 { c * (1.0 + opts.jitter * u) } else { opts.jitter * u }
            })
            .collect();
        let run = minimize(objective, &start, &steps_for(&start), &opts.simplex);
        evals += run.evals;
        if run.f < best.f {
            best = run;
        }
        history.push(to_nll(best.f));
    }
    if !best.f.is_finite() {
        return Err(Error::NumericOverflow { index: x.len() - 1 });
    }
    let c0 = (best.f / n_eff).sqrt();
    Ok(NarmaFit {
        model: NarmaModel::unpack(spec, &best.x, c0),
        nll: to_nll(best.f),
        history,
        converged: best.converged,
        evals,
    })
}

/// Iterates the model forward `n_steps` times with fresh Gaussian shocks.
///
/// `init` supplies at least two past values (the last is the most recent).
/// `init_xi` lists past shocks, most recent last; missing entries are zero.
pub fn simulate_narma<R: Rng + ?Sized>(
    model: &NarmaModel,
    n_steps: usize,
    init: &[f64],
    init_xi: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if init.len() < P {
        return Err(Error::InsufficientData { needed: P, got: init.len() });
    }
    let q = model.spec.q;
    let mut hist = vec![0.0; q];
    for (slot, v) in hist.iter_mut().zip(init_xi.iter().rev()) {
        *slot = *v;
    }
    let (mut x2, mut x1) = (init[init.len() - 2], init[init.len() - 1]);
    let mut out = Vec::with_capacity(n_steps);
    for step in 1..=n_steps {
        let z: f64 = rng.sample(StandardNormal);
        let xi = model.c0 * z;
        let x = model.phi(x1, x2, &hist) + xi;
        if !(x.abs() <= DIVERGENCE_GUARD) {
            return Err(Error::Instability { step });
        }
        shift_in(&mut hist, xi);
        (x2, x1) = (x1, x);
        out.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityReport {
    pub stable: bool,
    pub diverged_count: usize,
}

/// Runs `n_realizations` independent simulations of `horizon` steps from
/// `init` and counts divergences.
pub fn stability_probe(
    model: &NarmaModel,
    horizon: usize,
    n_realizations: usize,
    init: &[f64],
    base_seed: u64,
) -> Result<StabilityReport> {
    if horizon < 100_000 {
        return Err(Error::InvalidParameter(format!("stability horizon must be at least 1e5, got {horizon}")));
    }
    if init.len() < P {
        return Err(Error::InsufficientData { needed: P, got: init.len() });
    }
    let diverged_count = (0..n_realizations)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = seed::task_stream(base_seed, i as u64);
            simulate_narma(model, horizon, init, &[], &mut rng).is_err()
        })
        .count();
    Ok(StabilityReport { stable: diverged_count == 0, diverged_count })
}
