//! Langevin model family and its explicit integrators.
//!
//! The system is `dx = y dt`, `dy = a(x, y) dt + σ dB` with
//! `a(x, y) = -γy - V'(x)`. Two schemes are provided: Euler–Maruyama and the
//! Itô–Taylor scheme of strong order 2.0, the latter driven by the exactly
//! correlated pair `(σΔB, σ∫ΔB dt)`.

use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialSpec {
    /// `V(x) = αx²/2`.
    Quadratic { alpha: f64 },
    /// `V(x) = βx⁴/4 - αx²/2`.
    DoubleWell { alpha: f64, beta: f64 },
    /// `V(x) = β⁻²x⁴/4 - x²/2`, wells at `±β`.
    KramersForm { beta: f64 },
}

impl PotentialSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PotentialSpec::Quadratic { alpha } => alpha > 0.0 && alpha.is_finite(),
            PotentialSpec::DoubleWell { alpha, beta } => {
                alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()
            }
            PotentialSpec::KramersForm { beta } => beta > 0.0 && beta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("potential {self:?} needs positive finite coefficients")))
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Quadratic { alpha } => 0.5 * alpha * x * x,
            PotentialSpec::DoubleWell { alpha, beta } => 0.25 * beta * x.powi(4) - 0.5 * alpha * x * x,
            PotentialSpec::KramersForm { beta } => 0.25 * x.powi(4) / (beta * beta) - 0.5 * x * x,
        }
    }

    /// `V'(x)`.
    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Quadratic { alpha } => alpha * x,
            PotentialSpec::DoubleWell { alpha, beta } => beta * x * x * x - alpha * x,
            PotentialSpec::KramersForm { beta } => x * x * x / (beta * beta) - x,
        }
    }

    /// `V''(x)`.
    pub fn hess(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Quadratic { alpha } => alpha,
            PotentialSpec::DoubleWell { alpha, beta } => 3.0 * beta * x * x - alpha,
            PotentialSpec::KramersForm { beta } => 3.0 * x * x / (beta * beta) - 1.0,
        }
    }

    /// Rewrites a Kramers-form potential as the equivalent double well.
    pub fn to_double_well(self) -> Self {
        match self {
            PotentialSpec::KramersForm { beta } => PotentialSpec::DoubleWell {
                alpha: 1.0,
                beta: 1.0 / (beta * beta),
            },
            other => other,
        }
    }

    /// Inverse of [`to_double_well`](Self::to_double_well); only double wells
    /// with `α = 1` have a Kramers form.
    pub fn to_kramers(self) -> Option<Self> {
        match self {
            PotentialSpec::KramersForm { .. } => Some(self),
            PotentialSpec::DoubleWell { alpha, beta } if alpha == 1.0 => {
                Some(PotentialSpec::KramersForm { beta: 1.0 / beta.sqrt() })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinParams {
    pub gamma: f64,
    pub potential: PotentialSpec,
    pub sigma: f64,
}

impl LangevinParams {
    pub fn new(gamma: f64, potential: PotentialSpec, sigma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        potential.validate()?;
        Ok(Self { gamma, potential, sigma })
    }

    /// Linear oscillator with `V(x) = αx²/2`.
    pub fn linear(gamma: f64, alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(gamma, PotentialSpec::Quadratic { alpha }, sigma)
    }

    /// Kramers oscillator with wells at `±β`.
    pub fn kramers(gamma: f64, beta: f64, sigma: f64) -> Result<Self> {
        Self::new(gamma, PotentialSpec::KramersForm { beta }, sigma)
    }

    /// Einstein relation `σ²/(2γ)`.
    pub fn temperature(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Per-step stochastic increments: `w ≈ σΔB`, `z ≈ σ∫ΔB dt`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoisePair {
    pub w: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    Em,
    #[default]
    It2,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" | "euler" | "euler-maruyama" => Ok(Scheme::Em),
            "it2" | "ito-taylor" => Ok(Scheme::It2),
            _ => Err(Error::Parse(format!("unknown scheme '{s}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Em => "em",
            Scheme::It2 => "it2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Recorded steps, not counting burn-in.
    pub n_steps: usize,
    /// Steps integrated and discarded before recording starts.
    pub burn_in_steps: usize,
    pub seed: u64,
    pub initial: PhaseState,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dt: f64, n_steps: usize, seed: u64) -> Self {
        Self {
            dt,
            n_steps,
            burn_in_steps: 0,
            seed,
            initial: PhaseState::new(0.5, 0.5),
            scheme: Scheme::It2,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_initial(mut self, initial: PhaseState) -> Self {
        self.initial = initial;
        self
    }

    /// Discards roughly `time` units before recording.
    pub fn with_burn_in(mut self, time: f64) -> Self {
        self.burn_in_steps = (time / self.dt).round() as usize;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if !self.initial.is_finite() {
            return Err(Error::InvalidParameter("initial state must be finite".into()));
        }
        Ok(())
    }
}

/// Discrete observations `x_{nh}`, `n = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    h: f64,
    values: Vec<f64>,
}

impl ObservationSeries {
    /// Minimum length accepted by the contrast.
    pub const MIN_LEN: usize = 4;

    pub fn new(h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("observation spacing must be positive, got {h}")));
        }
        if values.len() < Self::MIN_LEN {
            return Err(Error::InsufficientData { needed: Self::MIN_LEN, got: values.len() });
        }
        Ok(Self { h, values })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Contiguous sub-series `values[range]`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.h, self.values[range].to_vec())
    }

    /// Splits into first and second halves (the second gets the odd element).
    pub fn halves(&self) -> Result<(Self, Self)> {
        let mid = self.len() / 2;
        Ok((self.slice(0..mid)?, self.slice(mid..self.len())?))
    }

    /// Every `stride`-th value, i.e. the series observed at spacing `stride·h`.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        let values = self.values.iter().skip(stride - 1).step_by(stride).copied().collect();
        Self::new(self.h * stride as f64, values)
    }

    /// CSV with header `n,t,x`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str("n,t,x\n");
        for (i, x) in self.values.iter().enumerate() {
            let n = i + 1;
            let _ = writeln!(out, "{},{:.16e},{:.16e}", n, n as f64 * self.h, x);
        }
        out
    }

    /// Parses the format written by [`to_csv`](Self::to_csv). The spacing is
    /// recovered from the first row's `t / n`.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "n,t,x" {
            return Err(Error::Parse("expected header 'n,t,x'".into()));
        }
        let mut h = None;
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 2)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            let n = fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            let t = parse(fields[1])?;
            if h.is_none() {
                h = Some(t / n as f64);
            }
            values.push(parse(fields[2])?);
        }
        let h = h.ok_or_else(|| Error::Parse("no data rows".into()))?;
        Self::new(h, values)
    }
}

/// `a(x, y) = -γy - V'(x)`.
pub fn drift_a(params: &LangevinParams, state: PhaseState) -> f64 {
    -params.gamma * state.y - params.potential.grad(state.x)
}

/// Draws `(W, Z)` with `Var W = σ²h`, `Var Z = σ²h³/3`, `Cov = σ²h²/2`.
pub fn sample_noise_pair<R: Rng + ?Sized>(sigma: f64, h: f64, rng: &mut R) -> NoisePair {
    let xi: f64 = rng.sample(StandardNormal);
    let eta: f64 = rng.sample(StandardNormal);
    noise_from_normals(sigma, h, xi, eta)
}

#[inline]
fn noise_from_normals(sigma: f64, h: f64, xi: f64, eta: f64) -> NoisePair {
    NoisePair {
        w: sigma * h.sqrt() * xi,
        z: sigma * 0.5 * h * h.sqrt() * (xi + eta / 3f64.sqrt()),
    }
}

pub fn step_em(params: &LangevinParams, state: PhaseState, dt: f64, noise: NoisePair) -> PhaseState {
    PhaseState {
        x: state.x + state.y * dt,
        y: state.y + dt * drift_a(params, state) + noise.w,
    }
}

/// One Itô–Taylor 2.0 step, specialised to `a_y = -γ`, `a_yy = 0`.
pub fn step_it2(params: &LangevinParams, state: PhaseState, dt: f64, noise: NoisePair) -> PhaseState {
    let g = params.gamma;
    let PhaseState { x, y } = state;
    let vp = params.potential.grad(x);
    let vpp = params.potential.hess(x);
    let damp = 1.0 - 0.5 * g * dt;
    let dt2 = dt * dt;
    PhaseState {
        x: x + dt * damp * y - 0.5 * dt2 * vp + noise.z,
        y: y * (1.0 - g * dt + 0.5 * g * g * dt2 - 0.5 * dt2 * vpp) - dt * damp * vp + noise.w - g * noise.z,
    }
}

/// Advances `state` by one step of `scheme`, drawing fresh noise from `rng`.
#[inline]
pub fn step<R: Rng + ?Sized>(
    params: &LangevinParams,
    scheme: Scheme,
    state: PhaseState,
    dt: f64,
    rng: &mut R,
) -> PhaseState {
    match scheme {
        Scheme::Em => {
            let xi: f64 = rng.sample(StandardNormal);
            step_em(params, state, dt, NoisePair { w: params.sigma * dt.sqrt() * xi, z: 0.0 })
        }
        Scheme::It2 => {
            let noise = sample_noise_pair(params.sigma, dt, rng);
            step_it2(params, state, dt, noise)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Every recorded phase state, when requested.
    pub path: Option<Vec<PhaseState>>,
    pub observations: ObservationSeries,
}

/// Number of integrator steps per observation, if `obs_h` is a multiple of `dt`.
pub fn stride_of(obs_h: f64, dt: f64) -> Result<usize> {
    let ratio = obs_h / dt;
    let stride = ratio.round();
    if !(stride >= 1.0) || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Incommensurate { obs_h, dt });
    }
    Ok(stride as usize)
}

/// Integrates `config.n_steps` steps after burn-in and records `x` every
/// `obs_h / dt` steps.
pub fn simulate_and_observe(
    params: &LangevinParams,
    config: &SimConfig,
    obs_h: f64,
    keep_path: bool,
) -> Result<SimOutput> {
    config.validate()?;
    let stride = stride_of(obs_h, config.dt)?;
    let mut rng = seed::stream(config.seed);
    let mut state = config.initial;
    for step_idx in 0..config.burn_in_steps {
        state = step(params, config.scheme, state, config.dt, &mut rng);
        if !state.is_finite() {
            return Err(Error::Instability { step: step_idx + 1 });
        }
    }
    let mut path = keep_path.then(|| Vec::with_capacity(config.n_steps));
    let mut values = Vec::with_capacity(config.n_steps / stride);
    for step_idx in 1..=config.n_steps {
        state = step(params, config.scheme, state, config.dt, &mut rng);
        if !state.is_finite() {
            return Err(Error::Instability { step: config.burn_in_steps + step_idx });
        }
        if let Some(p) = path.as_mut() {
            p.push(state);
        }
        if step_idx % stride == 0 {
            values.push(state.x);
        }
    }
    Ok(SimOutput {
        path,
        observations: ObservationSeries::new(obs_h, values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> LangevinParams {
        LangevinParams::linear(0.5, 4.0, 1.0).unwrap()
    }

    fn kramers() -> LangevinParams {
        LangevinParams::kramers(0.5, 1.0 / 10f64.sqrt(), 1.0).unwrap()
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift_a(&linear(), PhaseState::new(0.0, 0.0)), 0.0);
        let b = 1.0 / 10f64.sqrt();
        assert_close!(drift_a(&kramers(), PhaseState::new(b, 0.0)), 0.0, 1e-15);
        assert_close!(drift_a(&linear(), PhaseState::new(1.0, 2.0)), -5.0, 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LangevinParams::linear(0.0, 4.0, 1.0).is_err());
        assert!(LangevinParams::linear(0.5, -1.0, 1.0).is_err());
        assert!(LangevinParams::kramers(0.5, 0.3, 0.0).is_err());
        assert!(LangevinParams::new(0.5, PotentialSpec::DoubleWell { alpha: 1.0, beta: f64::NAN }, 1.0).is_err());
    }

    #[test]
    fn temperature_is_einstein_relation() {
        let p = LangevinParams::linear(0.25, 1.0, 2.0).unwrap();
        assert_close!(p.temperature(), 8.0, 1e-15);
    }

    #[test]
    fn kramers_double_well_round_trip() {
        let k = PotentialSpec::KramersForm { beta: 0.3 };
        let dw = k.to_double_well();
        match dw {
            PotentialSpec::DoubleWell { alpha, beta } => {
                assert_eq!(alpha, 1.0);
                assert_close!(beta, 1.0 / 0.09, 1e-12);
            }
            _ => panic!("expected double well"),
        }
        match dw.to_kramers().unwrap() {
            PotentialSpec::KramersForm { beta } => assert_close!(beta, 0.3, 1e-15),
            _ => panic!(),
        }
        for x in [-1.3, -0.2, 0.0, 0.7, 2.0] {
            assert_close!(k.grad(x), dw.grad(x), 1e-12);
            assert_close!(k.hess(x), dw.hess(x), 1e-12);
            assert_close!(k.value(x), dw.value(x), 1e-12);
        }
        assert!(PotentialSpec::DoubleWell { alpha: 2.0, beta: 1.0 }.to_kramers().is_none());
    }

    #[test]
    fn zero_sigma_gives_zero_noise() {
        let mut rng = seed::stream(3);
        for _ in 0..100 {
            let n = sample_noise_pair(0.0, 0.1, &mut rng);
            assert_eq!((n.w, n.z), (0.0, 0.0));
        }
    }

    #[test]
    fn em_examples() {
        let p = LangevinParams { gamma: 0.0, ..linear() };
        let s = step_em(&p, PhaseState::new(1.0, 0.0), 0.1, NoisePair::default());
        assert_close!(s.x, 1.0, 1e-15);
        assert_close!(s.y, -0.4, 1e-15);

        let k = kramers();
        let well = PhaseState::new(1.0 / 10f64.sqrt(), 0.0);
        let s = step_em(&k, well, 0.01, NoisePair::default());
        assert_close!(s.x, well.x, 1e-15);
        assert_close!(s.y, 0.0, 1e-15);

        let s0 = PhaseState::new(0.3, -0.7);
        let s = step_em(&k, s0, 1e-9, NoisePair::default());
        assert_close!(s.x, s0.x, 1e-8);
        assert_close!(s.y, s0.y, 1e-8);
    }

    #[test]
    fn it2_examples() {
        let s = step_it2(&kramers(), PhaseState::default(), 0.01, NoisePair::default());
        assert_eq!(s, PhaseState::default());

        let s = step_it2(&linear(), PhaseState::new(1.0, 0.0), 1.0 / 32.0, NoisePair::default());
        // x' = 1 - 0.5·(1/1024)·4, y' = -(1/32)(1 - 0.25/32)·4
        assert_close!(s.x, 1.0 - 2.0 / 1024.0, 1e-15);
        assert_close!(s.x, 0.998047, 5e-7);
        assert_close!(s.y, -(1.0 / 32.0) * (1.0 - 0.25 / 32.0) * 4.0, 1e-15);
        assert_close!(s.y, -0.124023, 5e-7);
    }

    #[test]
    fn it2_matches_generic_scheme_for_langevin_drift() {
        // Generic IT2 with a_x = -V'', a_y = -γ, a_yy = 0.
        let p = kramers();
        let state = PhaseState::new(0.4, -0.3);
        let dt = 0.05;
        let noise = NoisePair { w: 0.02, z: 0.001 };
        let a = drift_a(&p, state);
        let ax = -p.potential.hess(state.x);
        let ay = -p.gamma;
        let x = state.x + dt * state.y + 0.5 * dt * dt * a + noise.z;
        let y = state.y + dt * a + 0.5 * dt * dt * (ax * state.y + a * ay) + noise.w + ay * noise.z;
        let s = step_it2(&p, state, dt, noise);
        assert_close!(s.x, x, 1e-15);
        assert_close!(s.y, y, 1e-15);
    }

    #[test]
    fn stride_must_be_integral() {
        assert_eq!(stride_of(1.0 / 32.0, 1.0 / 1024.0).unwrap(), 32);
        assert!(matches!(stride_of(0.1, 0.03), Err(Error::Incommensurate { .. })));
        assert!(stride_of(0.001, 0.01).is_err());
    }

    #[test]
    fn unit_stride_records_every_step() {
        let cfg = SimConfig::new(0.01, 50, 9);
        let out = simulate_and_observe(&kramers(), &cfg, 0.01, true).unwrap();
        let xs: Vec<f64> = out.path.unwrap().iter().map(|s| s.x).collect();
        assert_eq!(xs, out.observations.values());
    }

    #[test]
    fn observation_count() {
        let cfg = SimConfig::new(1.0 / 1024.0, 1024, 1);
        let out = simulate_and_observe(&linear(), &cfg, 1.0 / 32.0, false).unwrap();
        assert_eq!(out.observations.len(), 32);
        assert!(out.path.is_none());
    }

    #[test]
    fn same_seed_same_series() {
        let cfg = SimConfig::new(1.0 / 256.0, 4096, 77).with_burn_in(1.0);
        let a = simulate_and_observe(&kramers(), &cfg, 1.0 / 32.0, false).unwrap();
        let b = simulate_and_observe(&kramers(), &cfg, 1.0 / 32.0, false).unwrap();
        assert_eq!(a.observations.to_csv(), b.observations.to_csv());
        let c = simulate_and_observe(&kramers(), &SimConfig { seed: 78, ..cfg }, 1.0 / 32.0, false).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = SimConfig::new(1.0 / 64.0, 640, 5);
        let obs = simulate_and_observe(&kramers(), &cfg, 1.0 / 16.0, false).unwrap().observations;
        let csv = obs.to_csv();
        assert!(csv.starts_with("n,t,x\n1,6.2500000000000000e-2,"));
        let back = ObservationSeries::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            ObservationSeries::new(0.1, vec![1.0, 2.0, 3.0]),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
        assert!(ObservationSeries::new(0.0, vec![0.0; 10]).is_err());
    }

    #[test]
    fn subsample_and_halves() {
        let obs = ObservationSeries::new(0.5, (1..=12).map(f64::from).collect()).unwrap();
        let sub = obs.subsample(3).unwrap();
        assert_eq!(sub.values(), &[3.0, 6.0, 9.0, 12.0]);
        assert_eq!(sub.h(), 1.5);
        let (a, b) = obs.halves().unwrap();
        assert_eq!(a.len() + b.len(), 12);
        assert_eq!(b.values()[0], 7.0);
    }
}
