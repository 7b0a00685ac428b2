//! Exact results for the linear oscillator `dx = y dt, dy = (-γy - αx) dt + σ dB`.
//!
//! With `A = [[0, 1], [-α, -γ]]` the transition over a step `h` is
//! `X' = e^{Ah} X + W`, `W ~ N(0, Σ_h)`. The sampled position `x_{nh}` is a
//! stationary Gaussian process with the same law as an invertible ARMA(2,1);
//! [`arma21_equiv`] computes that ARMA and [`sde_from_arma`] inverts it.
//!
//! Complex eigenvalue pairs are handled in real trigonometric form so every
//! output is exactly real.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::sde::{LangevinParams, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenKind {
    DistinctReal,
    ComplexPair,
    Repeated,
}

/// `e^{At} = c0(t)·I + c1(t)·A` by Cayley–Hamilton.
#[derive(Debug, Clone, Copy)]
struct Spectrum {
    kind: EigenKind,
    /// Real part shared by both eigenvalues in the complex and repeated cases; `-γ/2`.
    mu: f64,
    /// `√|Δ|/2` with `Δ = γ² - 4α`.
    nu: f64,
}

impl Spectrum {
    fn new(gamma: f64, alpha: f64) -> Self {
        let disc = gamma * gamma - 4.0 * alpha;
        let kind = if disc.abs() <= 1e-14 * (gamma * gamma + 4.0 * alpha) {
            EigenKind::Repeated
        } else if disc > 0.0 {
            EigenKind::DistinctReal
        } else {
            EigenKind::ComplexPair
        };
        Self {
            kind,
            mu: -0.5 * gamma,
            nu: 0.5 * disc.abs().sqrt(),
        }
    }

    fn eigenvalues(&self) -> (Complex<f64>, Complex<f64>) {
        match self.kind {
            EigenKind::DistinctReal => (
                Complex::new(self.mu + self.nu, 0.0),
                Complex::new(self.mu - self.nu, 0.0),
            ),
            EigenKind::ComplexPair => (Complex::new(self.mu, self.nu), Complex::new(self.mu, -self.nu)),
            EigenKind::Repeated => (Complex::new(self.mu, 0.0), Complex::new(self.mu, 0.0)),
        }
    }

    /// `(c0(t), c1(t))`.
    fn coeffs(&self, t: f64) -> (f64, f64) {
        let decay = (self.mu * t).exp();
        match self.kind {
            EigenKind::DistinctReal => {
                let s = (self.nu * t).sinh() / self.nu;
                (decay * ((self.nu * t).cosh() - self.mu * s), decay * s)
            }
            EigenKind::ComplexPair => {
                let s = (self.nu * t).sin() / self.nu;
                (decay * ((self.nu * t).cos() - self.mu * s), decay * s)
            }
            EigenKind::Repeated => (decay * (1.0 - self.mu * t), decay * t),
        }
    }
}

/// Entries of `e^{Ah}` and the eigenstructure of `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub eigen_kind: EigenKind,
    pub lambda1: Complex<f64>,
    pub lambda2: Complex<f64>,
}

impl Propagator2 {
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn apply(&self, s: PhaseState) -> PhaseState {
        PhaseState {
            x: self.a11 * s.x + self.a12 * s.y,
            y: self.a21 * s.x + self.a22 * s.y,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Closed-form `e^{Ah}` for `A = [[0, 1], [-α, -γ]]`.
pub fn propagator(gamma: f64, alpha: f64, h: f64) -> Result<Propagator2> {
    check_positive("gamma", gamma)?;
    check_positive("alpha", alpha)?;
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("h must be non-negative, got {h}")));
    }
    let spec = Spectrum::new(gamma, alpha);
    let (c0, c1) = spec.coeffs(h);
    let (lambda1, lambda2) = spec.eigenvalues();
    Ok(Propagator2 {
        a11: c0,
        a12: c1,
        a21: -alpha * c1,
        a22: c0 - gamma * c1,
        eigen_kind: spec.kind,
        lambda1,
        lambda2,
    })
}

/// Covariance of the one-step noise `(W₁, W₂)` of the exact discretisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteNoiseCov {
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
}

impl DiscreteNoiseCov {
    /// Lower Cholesky factor `(l11, l21, l22)`; tolerates singular matrices.
    pub fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.c11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { self.c12 / l11 } else { 0.0 };
        let l22 = (self.c22 - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let tr = self.c11 + self.c22;
        let det = self.c11 * self.c22 - self.c12 * self.c12;
        let r = (0.25 * tr * tr - det).max(0.0).sqrt();
        (0.5 * tr - r, 0.5 * tr + r)
    }
}

/// `Σ_h = σ² ∫₀^h e^{As} e₂ e₂ᵀ e^{Aᵀs} ds`, by adaptive quadrature.
pub fn discrete_noise_cov(gamma: f64, alpha: f64, sigma: f64, h: f64) -> Result<DiscreteNoiseCov> {
    check_positive("gamma", gamma)?;
    check_positive("alpha", alpha)?;
    check_positive("h", h)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
    }
    let spec = Spectrum::new(gamma, alpha);
    let col = move |s: f64| {
        let (c0, c1) = spec.coeffs(s);
        (c1, c0 - gamma * c1)
    };
    let integrate = |f: &dyn Fn(f64) -> f64| {
        // Coarse pass sets the scale for a relative tolerance of ~1e-10.
        let coarse = adaptive_simpson(f, 0.0, h, f64::INFINITY).abs();
        adaptive_simpson(f, 0.0, h, (1e-11 * coarse).max(f64::MIN_POSITIVE))
    };
    let s2 = sigma * sigma;
    Ok(DiscreteNoiseCov {
        c11: s2 * integrate(&|s| col(s).0 * col(s).0),
        c12: s2 * integrate(&|s| col(s).0 * col(s).1),
        c22: s2 * integrate(&|s| col(s).1 * col(s).1),
    })
}

/// Exact-in-distribution sampler for the linear oscillator on a fixed grid.
#[derive(Debug, Clone, Copy)]
pub struct ExactLinearStepper {
    pub propagator: Propagator2,
    pub noise: DiscreteNoiseCov,
    chol: (f64, f64, f64),
    stationary_sd: (f64, f64),
}

impl ExactLinearStepper {
    pub fn new(gamma: f64, alpha: f64, sigma: f64, h: f64) -> Result<Self> {
        let propagator = propagator(gamma, alpha, h)?;
        let noise = discrete_noise_cov(gamma, alpha, sigma, h)?;
        let var_y = sigma * sigma / (2.0 * gamma);
        Ok(Self {
            propagator,
            noise,
            chol: noise.cholesky(),
            stationary_sd: ((var_y / alpha).sqrt(), var_y.sqrt()),
        })
    }

    pub fn from_params(params: &LangevinParams, h: f64) -> Result<Self> {
        match params.potential {
            crate::sde::PotentialSpec::Quadratic { alpha } => Self::new(params.gamma, alpha, params.sigma, h),
            _ => Err(Error::InvalidParameter("exact stepping needs a quadratic potential".into())),
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, state: PhaseState, rng: &mut R) -> PhaseState {
        let xi: f64 = rng.sample(StandardNormal);
        let eta: f64 = rng.sample(StandardNormal);
        let (l11, l21, l22) = self.chol;
        let mean = self.propagator.apply(state);
        PhaseState {
            x: mean.x + l11 * xi,
            y: mean.y + l21 * xi + l22 * eta,
        }
    }

    /// Draw from the stationary law `N(0, diag(σ²/(2γα), σ²/(2γ)))`.
    pub fn stationary_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseState {
        let xi: f64 = rng.sample(StandardNormal);
        let eta: f64 = rng.sample(StandardNormal);
        PhaseState {
            x: self.stationary_sd.0 * xi,
            y: self.stationary_sd.1 * eta,
        }
    }
}

/// One exact transition over `h`. Builds the transition each call; use
/// [`ExactLinearStepper`] for long chains.
pub fn exact_linear_step<R: Rng + ?Sized>(
    gamma: f64,
    alpha: f64,
    sigma: f64,
    h: f64,
    state: PhaseState,
    rng: &mut R,
) -> Result<PhaseState> {
    Ok(ExactLinearStepper::new(gamma, alpha, sigma, h)?.step(state, rng))
}

/// Stationary autocovariance `γ_j = E[x_{kh} x_{(k+j)h}]`, `j = 0..=max_lag`.
pub fn stationary_autocov(gamma: f64, alpha: f64, sigma: f64, h: f64, max_lag: usize) -> Result<Vec<f64>> {
    check_positive("gamma", gamma)?;
    check_positive("alpha", alpha)?;
    check_positive("sigma", sigma)?;
    check_positive("h", h)?;
    let g0 = sigma * sigma / (2.0 * alpha * gamma);
    let disc = gamma * gamma - 4.0 * alpha;
    let spec = Spectrum::new(gamma, alpha);
    let shape = |t: f64| -> f64 {
        match spec.kind {
            EigenKind::DistinctReal => {
                let sq = disc.sqrt();
                let (l1, l2) = (0.5 * (-gamma + sq), 0.5 * (-gamma - sq));
                (l1 * (l2 * t).exp() - l2 * (l1 * t).exp()) / (l1 - l2)
            }
            EigenKind::ComplexPair => {
                let w = 0.5 * (-disc).sqrt();
                (-0.5 * gamma * t).exp() * ((w * t).cos() + gamma / (-disc).sqrt() * (w * t).sin())
            }
            EigenKind::Repeated => {
                let l0 = -0.5 * gamma;
                (l0 * t).exp() * (1.0 - l0 * t)
            }
        }
    };
    Ok((0..=max_lag).map(|j| g0 * shape(j as f64 * h)).collect())
}

/// Parameters of the ARMA(2,1) `X_{n+2} = a1 X_{n+1} + a2 X_n + W_n + θ1 W_{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaEquiv {
    pub a1: f64,
    pub a2: f64,
    pub theta1: f64,
    pub sigma_w: f64,
}

impl ArmaEquiv {
    pub fn to_spec(&self) -> ArmaSpec {
        ArmaSpec {
            phi: vec![self.a1, self.a2],
            theta: vec![self.theta1],
            sigma_w2: self.sigma_w * self.sigma_w,
        }
    }
}

/// The invertible ARMA(2,1) with the same law as the sampled linear oscillator.
pub fn arma21_equiv(gamma: f64, alpha: f64, sigma: f64, h: f64) -> Result<ArmaEquiv> {
    let p = propagator(gamma, alpha, h)?;
    let a1 = p.trace();
    let a2 = -(-gamma * h).exp();
    let g = stationary_autocov(gamma, alpha, sigma, h, 2)?;
    let lhs0 = g[0] - g[1] * a1 - g[2] * a2;
    let lhs1 = g[1] * (1.0 - a2) - g[0] * a1;
    // σ_W²(1 + θ² + θa1) = lhs0 and σ_W²θ = lhs1, so θ² + (a1 - c)θ + 1 = 0.
    let c = lhs0 / lhs1;
    let disc = (c - a1).powi(2) - 4.0;
    if !(disc >= 0.0) {
        return Err(Error::NoInvertibleRoot { discriminant: disc });
    }
    let roots = [0.5 * (c - a1 - disc.sqrt()), 0.5 * (c - a1 + disc.sqrt())];
    let theta1 = if roots[0].abs() <= roots[1].abs() { roots[0] } else { roots[1] };
    let sigma_w2 = lhs1 / theta1;
    if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
        return Err(Error::NoInvertibleRoot { discriminant: disc });
    }
    Ok(ArmaEquiv {
        a1,
        a2,
        theta1,
        sigma_w: sigma_w2.sqrt(),
    })
}

/// `X_n - Σφ_i X_{n-i} = W_n + Σθ_j W_{n-j}`, `W ~ N(0, σ_W²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaSpec {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma_w2: f64,
}

impl ArmaSpec {
    /// True when every root of `φ(z)` lies strictly outside the unit disk.
    pub fn is_causal(&self) -> bool {
        let p = self.phi.len();
        if p == 0 {
            return true;
        }
        // Companion matrix of z^p - φ1 z^{p-1} - ... - φp; its eigenvalues are
        // the reciprocal roots of φ(z).
        let mut m = DMatrix::<f64>::zeros(p, p);
        for (j, &phi) in self.phi.iter().enumerate() {
            m[(0, j)] = phi;
        }
        for i in 1..p {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues().iter().all(|z| z.norm() < 1.0 - 1e-12)
    }

    /// ψ-weights `ψ_0..=ψ_n` of the causal representation.
    pub fn psi_weights(&self, n: usize) -> Vec<f64> {
        let mut psi = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut v = if j == 0 { 1.0 } else { self.theta.get(j - 1).copied().unwrap_or(0.0) };
            for k in 1..=j.min(self.phi.len()) {
                v += self.phi[k - 1] * psi[j - k];
            }
            psi.push(v);
        }
        psi
    }
}

/// Autocovariance `γ(0..=max_lag)` of a causal ARMA.
///
/// Lags up to `max(p, q)` come from the linear system obtained by
/// multiplying the defining equation by `X_{n-k}`; later lags iterate the
/// homogeneous recursion.
pub fn arma_autocov(spec: &ArmaSpec, max_lag: usize) -> Result<Vec<f64>> {
    if !spec.is_causal() {
        return Err(Error::NonCausal);
    }
    let p = spec.phi.len();
    let q = spec.theta.len();
    let r = p.max(q) + 1;
    let psi = spec.psi_weights(q);
    let theta_at = |j: usize| if j == 0 { 1.0 } else { spec.theta[j - 1] };

    let mut lhs = DMatrix::<f64>::zeros(r, r);
    let mut rhs = DVector::<f64>::zeros(r);
    for k in 0..r {
        lhs[(k, k)] += 1.0;
        for i in 1..=p {
            let lag = (k as isize - i as isize).unsigned_abs();
            lhs[(k, lag)] -= spec.phi[i - 1];
        }
        if k <= q {
            rhs[k] = spec.sigma_w2 * (k..=q).map(|j| theta_at(j) * psi[j - k]).sum::<f64>();
        }
    }
    let head = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateData("singular autocovariance system".into()))?;

    let mut gamma: Vec<f64> = head.iter().copied().collect();
    while gamma.len() <= max_lag {
        let k = gamma.len();
        let next = (1..=p).map(|i| spec.phi[i - 1] * gamma[k - i]).sum();
        gamma.push(next);
    }
    gamma.truncate(max_lag + 1);
    Ok(gamma)
}

/// Recovers `(γ, α, σ)` from the ARMA(2,1) equivalent at spacing `h`.
pub fn sde_from_arma(equiv: &ArmaEquiv, h: f64) -> Result<LangevinParams> {
    check_positive("h", h)?;
    let ArmaEquiv { a1, a2, .. } = *equiv;
    if !(a2 > -1.0 && a2 < 0.0) {
        return Err(Error::InvalidRoots(format!("a2 = {a2} is outside (-1, 0)")));
    }
    let gamma = -(-a2).ln() / h;
    // The reciprocal roots w = e^{λh} of φ(z) solve w² - a1 w - a2 = 0.
    let disc = a1 * a1 + 4.0 * a2;
    let alpha = if disc < 0.0 {
        let modulus_log = 0.5 * (-a2).ln();
        let arg = (-disc).sqrt().atan2(a1);
        (modulus_log * modulus_log + arg * arg) / (h * h)
    } else {
        let w1 = 0.5 * (a1 + disc.sqrt());
        let w2 = 0.5 * (a1 - disc.sqrt());
        if !(w1 > 0.0 && w2 > 0.0) {
            return Err(Error::InvalidRoots(format!(
                "real reciprocal roots {w1}, {w2} must be positive"
            )));
        }
        (w1.ln() / h) * (w2.ln() / h)
    };
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidRoots(format!("implied alpha {alpha} is not positive")));
    }
    let g0 = arma_autocov(&equiv.to_spec(), 0)?[0];
    let sigma = (2.0 * gamma * alpha * g0).sqrt();
    LangevinParams::linear(gamma, alpha, sigma)
}
