//! Spectral kernels and the second-order amplitudes built from them.
//!
//! Units: every integral is evaluated with frequencies measured in `1/T` and
//! lengths in `T`, where `T` is the geometry's duration scale, and the result
//! is converted back at the end. For the Dirac models the amplitudes carry
//! dimension `T^-4`; the Klein-Gordon ones are dimensionless.
//!
//! Dirac amplitudes (single handedness, `m` = 1):
//!
//! ```text
//! |E_i|^2  =  1/(8 pi^4) int dp dq  p^2 q^2 |e_i(W_i + p + q)|^2
//! <0|X_AB> = -1/(8 pi^4) int dp dq  K(p,q;L) e_A(W_A + p + q) e_B(W_B - p - q)
//! <E_A|E_B> = 1/(8 pi^4) int dp dq  K(p,q;L) e_A(W_A + p + q) e_B(W_B + p + q)
//! K(p,q;L) = p^2 q^2 [j0(pL) j0(qL) - j1(pL) j1(qL)]
//! ```
//!
//! Integrating out `p - q` at fixed `w = p + q` leaves one-dimensional forms
//! with kernel [`reduced_kernel`]: `w^5/30` for emission and
//! `f(wL)/L^5`, `f(x) = -x^3 cos x/6 + x^2 sin x/2 + x cos x - sin x`, for the
//! spatial terms.

use std::collections::HashMap;
use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{
    integrate_1d, integrate_1d_with_envelope, integrate_2d, truncation_point, IntegrationSpec,
    QuadratureError, QuadratureResult,
};
use crate::windows::{WindowError, WindowProfile, WindowShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("spinor undefined for the zero momentum")]
    ZeroMomentum,
    #[error("invalid detector: {0}")]
    Detector(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("{0} has no brute-force oracle")]
    NoOracle(&'static str),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    /// Energy gap `W >= 0`.
    pub gap: f64,
    #[serde(default)]
    pub position: [f64; 3],
    pub window: WindowProfile,
}

impl DetectorSpec {
    pub fn new(gap: f64, position: [f64; 3], window: WindowProfile) -> Self {
        Self {
            gap,
            position,
            window,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.gap >= 0.0 && self.gap.is_finite()) {
            return Err(KernelError::Detector(format!(
                "gap must be finite and >= 0, got {}",
                self.gap
            )));
        }
        if self.position.iter().any(|x| !x.is_finite()) {
            return Err(KernelError::Detector("position must be finite".into()));
        }
        self.window.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Separation `L = |x_B - x_A|`.
    pub separation: f64,
    /// Common window duration scale `T`.
    pub duration: f64,
    /// Require causal disconnection, enforced as `L >= 3T`.
    #[serde(default)]
    pub causal: bool,
}

impl GeometrySpec {
    pub fn new(separation: f64, duration: f64) -> Self {
        Self {
            separation,
            duration,
            causal: false,
        }
    }

    pub fn causal(mut self, on: bool) -> Self {
        self.causal = on;
        self
    }

    /// Radius of the region each detector probes during the interaction.
    pub fn probe_radius(&self) -> f64 {
        self.duration
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(KernelError::Geometry(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(KernelError::Geometry(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.causal && self.separation < 3.0 * self.duration {
            return Err(KernelError::Geometry(format!(
                "causal separation needs L >= 3T, got L/T = {}",
                self.separation / self.duration
            )));
        }
        Ok(())
    }

    /// Checks that the detector positions reproduce the separation.
    pub fn check_detectors(&self, a: &DetectorSpec, b: &DetectorSpec) -> Result<(), KernelError> {
        self.validate()?;
        a.validate()?;
        b.validate()?;
        let d: f64 = (0..3)
            .map(|i| (b.position[i] - a.position[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if (d - self.separation).abs() > 1e-9 * self.separation {
            return Err(KernelError::Geometry(format!(
                "detector positions are {d} apart, geometry says {}",
                self.separation
            )));
        }
        Ok(())
    }

    /// Detectors placed at the origin and at `L` along z.
    pub fn place(
        &self,
        a: WindowProfile,
        gap_a: f64,
        b: WindowProfile,
        gap_b: f64,
    ) -> (DetectorSpec, DetectorSpec) {
        (
            DetectorSpec::new(gap_a, [0.0; 3], a),
            DetectorSpec::new(gap_b, [0.0, 0.0, self.separation], b),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldModel {
    DiracRight,
    DiracLeft,
    DiracBoth,
    KleinGordon,
    DiracScalarAblated,
}

impl FieldModel {
    pub const ALL: [FieldModel; 5] = [
        FieldModel::DiracRight,
        FieldModel::DiracLeft,
        FieldModel::DiracBoth,
        FieldModel::KleinGordon,
        FieldModel::DiracScalarAblated,
    ];

    /// Number of handedness sectors coupled.
    pub fn multiplier(self) -> f64 {
        match self {
            FieldModel::DiracBoth => 2.0,
            _ => 1.0,
        }
    }

    pub fn is_dirac(self) -> bool {
        !matches!(self, FieldModel::KleinGordon)
    }

    fn prefactor(self) -> f64 {
        if self.is_dirac() {
            1.0 / (8.0 * PI.powi(4))
        } else {
            1.0
        }
    }

    /// Power of `T` carried by every amplitude.
    fn dimension(self) -> i32 {
        if self.is_dirac() {
            -4
        } else {
            0
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldModel::DiracRight => "dirac_right",
            FieldModel::DiracLeft => "dirac_left",
            FieldModel::DiracBoth => "dirac_both",
            FieldModel::KleinGordon => "klein_gordon",
            FieldModel::DiracScalarAblated => "dirac_scalar_ablated",
        }
    }
}

/// A quadrature value with its error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate<V> {
    pub value: V,
    pub error: f64,
    pub converged: bool,
    pub evals: usize,
    pub truncated_at: Option<f64>,
}

impl<V: Copy> Estimate<V> {
    fn exact(value: V) -> Self {
        Self {
            value,
            error: 0.0,
            converged: true,
            evals: 0,
            truncated_at: None,
        }
    }

    fn map(self, f: impl Fn(V) -> V, scale: f64) -> Self {
        Self {
            value: f(self.value),
            error: self.error * scale.abs(),
            ..self
        }
    }
}

/// Both evaluation paths of one amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPath {
    /// One-dimensional form after the exact `p - q` integration.
    pub reduced: Estimate<Complex64>,
    /// Direct two-dimensional `(p, q)` quadrature.
    pub planar: Option<Estimate<Complex64>>,
    /// Whether the paths agree within their combined error bars (or 1e-6
    /// relative, whichever is looser). `None` when only one path ran.
    pub agree: Option<bool>,
}

impl DualPath {
    pub fn value(&self) -> Complex64 {
        self.reduced.value
    }

    pub fn converged(&self) -> bool {
        self.reduced.converged && self.planar.map_or(true, |p| p.converged)
    }

    fn new(reduced: Estimate<Complex64>, planar: Option<Estimate<Complex64>>) -> Self {
        let agree = planar.map(|p| {
            let diff = (p.value - reduced.value).norm();
            let scale = p.value.norm().max(reduced.value.norm());
            diff <= (p.error + reduced.error).max(1e-6 * scale)
        });
        Self {
            reduced,
            planar,
            agree,
        }
    }
}

/// Second-order amplitudes entering the partially transposed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSet {
    pub ea2: f64,
    pub eb2: f64,
    pub x_ab: Complex64,
    pub e_ab: Complex64,
    pub ea2_err: f64,
    pub eb2_err: f64,
    pub x_ab_err: f64,
    pub e_ab_err: f64,
}

impl AmplitudeSet {
    pub fn new(ea2: f64, eb2: f64, x_ab: Complex64, e_ab: Complex64) -> Self {
        Self {
            ea2,
            eb2,
            x_ab,
            e_ab,
            ea2_err: 0.0,
            eb2_err: 0.0,
            x_ab_err: 0.0,
            e_ab_err: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.ea2,
            self.eb2,
            self.x_ab.re,
            self.x_ab.im,
            self.e_ab.re,
            self.e_ab.im,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Every amplitude multiplied by `c`, error bars included.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            ea2: c * self.ea2,
            eb2: c * self.eb2,
            x_ab: self.x_ab * c,
            e_ab: self.e_ab * c,
            ea2_err: c.abs() * self.ea2_err,
            eb2_err: c.abs() * self.eb2_err,
            x_ab_err: c.abs() * self.x_ab_err,
            e_ab_err: c.abs() * self.e_ab_err,
        }
    }

    /// `|x_ab|^2 - ea2 * eb2` with a first-order error bar.
    pub fn margin(&self) -> Estimate<f64> {
        let x = self.x_ab.norm();
        Estimate {
            value: x * x - self.ea2 * self.eb2,
            error: 2.0 * x * self.x_ab_err
                + self.x_ab_err.powi(2)
                + self.ea2 * self.eb2_err
                + self.eb2 * self.ea2_err,
            converged: true,
            evals: 0,
            truncated_at: None,
        }
    }
}

/// Full result of [`amplitudes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeReport {
    pub model: FieldModel,
    pub amplitudes: AmplitudeSet,
    pub emission_a: Estimate<f64>,
    pub emission_b: Estimate<f64>,
    pub exchange: DualPath,
    pub cross: DualPath,
}

impl AmplitudeReport {
    pub fn converged(&self) -> bool {
        self.emission_a.converged
            && self.emission_b.converged
            && self.exchange.converged()
            && self.cross.converged()
    }

    pub fn paths_agree(&self) -> bool {
        self.exchange.agree.unwrap_or(true) && self.cross.agree.unwrap_or(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalPaths {
    #[default]
    Reduced,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelOptions {
    pub rel_tol: f64,
    /// Absolute tolerance of the spatial amplitudes, as a fraction of
    /// `sqrt(ea2 * eb2)`.
    pub abs_floor: f64,
    pub paths: EvalPaths,
    pub max_evals: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_floor: 1e-12,
            paths: EvalPaths::Reduced,
            max_evals: 4_000_000,
        }
    }
}

impl KernelOptions {
    pub fn both_paths(mut self) -> Self {
        self.paths = EvalPaths::Both;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

// ---------------------------------------------------------------------------
// Spinors and angular kernels

/// Right-handed unit spinor `(p_x - i p_y, p - p_z) / sqrt(2p(p - p_z))`.
pub fn spinor_r(p: [f64; 3]) -> Result<[Complex64; 2], KernelError> {
    let rho2 = p[0] * p[0] + p[1] * p[1];
    let norm = (rho2 + p[2] * p[2]).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(KernelError::ZeroMomentum);
    }
    if p[2] < 0.0 {
        let s = 1.0 / (2.0 * norm * (norm - p[2])).sqrt();
        return Ok([
            Complex64::new(p[0] * s, -p[1] * s),
            Complex64::new((norm - p[2]) * s, 0.0),
        ]);
    }
    // Upper hemisphere: p - p_z = rho^2 / (p + p_z) avoids the cancellation.
    let rho = rho2.sqrt();
    if rho == 0.0 {
        return Ok([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    }
    let up = ((norm + p[2]) / (2.0 * norm)).sqrt();
    let down = rho / (2.0 * norm * (norm + p[2])).sqrt();
    Ok([
        Complex64::new(p[0] / rho * up, -p[1] / rho * up),
        Complex64::new(down, 0.0),
    ])
}

/// Left-handed spinor, `u_l(p) = u_r(-p)`.
pub fn spinor_l(p: [f64; 3]) -> Result<[Complex64; 2], KernelError> {
    spinor_r([-p[0], -p[1], -p[2]])
}

/// Spherical Bessel function `j_n` for n = 0, 1.
pub fn spherical_bessel(n: u32, x: f64) -> f64 {
    if x.abs() < 1.0 {
        // x^n sum_k (-x^2/2)^k / (k! (2n + 2k + 1)!!)
        let h = -0.5 * x * x;
        let mut dfact = 1.0;
        for j in 1..=n {
            dfact *= (2 * j + 1) as f64;
        }
        let mut term = 1.0 / dfact;
        let mut sum = term;
        for k in 1..20 {
            term *= h / (k as f64 * (2 * n + 2 * k + 1) as f64);
            sum += term;
        }
        return x.powi(n as i32) * sum;
    }
    match n {
        0 => x.sin() / x,
        1 => x.sin() / (x * x) - x.cos() / x,
        _ => unimplemented!("only j0 and j1 are needed"),
    }
}

/// `K(p, q; L) = p^2 q^2 [j0(pL) j0(qL) - j1(pL) j1(qL)]`, the solid-angle
/// average of `(1 + p.q/pq) exp(i (p + q).L)` times `p^2 q^2`.
pub fn angular_kernel(p: f64, q: f64, l: f64) -> f64 {
    let (x, y) = (p * l, q * l);
    let pq = p * q;
    pq * pq
        * (spherical_bessel(0, x) * spherical_bessel(0, y)
            - spherical_bessel(1, x) * spherical_bessel(1, y))
}

/// Kernel with the `p.q/pq` term removed: `p^2 q^2 j0(pL) j0(qL)`.
pub fn ablated_kernel(p: f64, q: f64, l: f64) -> f64 {
    let pq = p * q;
    pq * pq * (spherical_bessel(0, p * l) * spherical_bessel(0, q * l))
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn odd_series(x: f64, coef: impl Fn(u32) -> f64) -> f64 {
    let x2 = x * x;
    let mut pow = x.powi(5);
    let mut sum = 0.0;
    for n in 2..28 {
        sum += coef(n) * pow;
        pow *= x2;
    }
    sum
}

/// `f(x) = -x^3 cos x/6 + x^2 sin x/2 + x cos x - sin x`, so that
/// `int_0^w K(p, w - p; L) dp = f(wL) / L^5`.
pub fn dirac_reduced(x: f64) -> f64 {
    if x.abs() < 2.0 {
        odd_series(x, |n| {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 / (6.0 * factorial(2 * n - 2)) - 0.5 / factorial(2 * n - 1)
                + 1.0 / factorial(2 * n)
                - 1.0 / factorial(2 * n + 1))
        })
    } else {
        let (s, c) = x.sin_cos();
        -x * x * x * c / 6.0 + 0.5 * x * x * s + x * c - s
    }
}

/// `g(x) = -x^3 cos x/12 - x cos x/4 + sin x/4`, the reduced ablated kernel.
pub fn ablated_reduced(x: f64) -> f64 {
    if x.abs() < 2.0 {
        odd_series(x, |n| {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 / (12.0 * factorial(2 * n - 2)) - 0.25 / factorial(2 * n)
                + 0.25 / factorial(2 * n + 1))
        })
    } else {
        let (s, c) = x.sin_cos();
        -x * x * x * c / 12.0 - 0.25 * x * c + 0.25 * s
    }
}

/// One-dimensional kernel at total frequency `w`; `l = 0` gives the emission
/// kernel.
pub fn reduced_kernel(model: FieldModel, w: f64, l: f64) -> f64 {
    match model {
        FieldModel::KleinGordon => {
            if l == 0.0 {
                w
            } else {
                (w * l).sin() / l
            }
        }
        _ if l == 0.0 => w.powi(5) / 30.0,
        FieldModel::DiracScalarAblated => ablated_reduced(w * l) / l.powi(5),
        _ => dirac_reduced(w * l) / l.powi(5),
    }
}

/// Upper bound on `|reduced_kernel|`, valid for every `l`.
fn reduced_bound(model: FieldModel, w: f64) -> f64 {
    if model.is_dirac() {
        w.powi(5) / 30.0
    } else {
        w
    }
}

// ---------------------------------------------------------------------------
// Amplitude integrals

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transfer {
    Emission,
    Exchange,
    Cross,
}

/// A window seen in units `T = 1`.
#[derive(Clone, Copy)]
struct Scaled {
    w: WindowProfile,
    t: f64,
    gap: f64,
}

impl Scaled {
    fn new(d: &DetectorSpec, t: f64) -> Self {
        Self {
            w: d.window,
            t,
            gap: d.gap * t,
        }
    }
    fn at(&self, nu: f64) -> f64 {
        self.w.eval_transform(nu / self.t) / self.t
    }
    fn env(&self, nu: f64) -> f64 {
        self.w.envelope_bound(nu / self.t) / self.t
    }
    /// Fastest oscillation rate of the transform in `nu`.
    fn rate(&self) -> f64 {
        match self.w.shape {
            WindowShape::Gaussian => 0.0,
            WindowShape::SuperoscComb(p) => 0.5 * p.speedup.max(1.0) * self.w.duration / self.t,
        }
    }
}

struct Problem {
    model: FieldModel,
    transfer: Transfer,
    a: Scaled,
    b: Scaled,
    l: f64,
}

impl Problem {
    /// Window product at total frequency `w`.
    fn windows(&self, w: f64) -> f64 {
        let (a, b) = (&self.a, &self.b);
        match self.transfer {
            Transfer::Emission => a.at(a.gap + w).powi(2),
            Transfer::Exchange => a.at(a.gap + w) * b.at(b.gap - w),
            Transfer::Cross => a.at(a.gap + w) * b.at(b.gap + w),
        }
    }

    fn windows_env(&self, w: f64) -> f64 {
        let (a, b) = (&self.a, &self.b);
        match self.transfer {
            Transfer::Emission => a.env(a.gap + w).powi(2),
            Transfer::Exchange => a.env(a.gap + w) * b.env((w - b.gap).max(0.0)),
            Transfer::Cross => a.env(a.gap + w) * b.env(b.gap + w),
        }
    }

    fn kernel_l(&self) -> f64 {
        if self.transfer == Transfer::Emission {
            0.0
        } else {
            self.l
        }
    }

    fn envelope(&self, w: f64) -> f64 {
        reduced_bound(self.model, w) * self.windows_env(w)
    }

    fn osc(&self) -> f64 {
        let win = match self.transfer {
            Transfer::Emission => 2.0 * self.a.rate(),
            _ => self.a.rate() + self.b.rate(),
        };
        self.kernel_l() + win
    }

    fn is_zero(&self) -> bool {
        self.a.w.is_zero() || (self.transfer != Transfer::Emission && self.b.w.is_zero())
    }

    fn sign(&self) -> f64 {
        if self.transfer == Transfer::Exchange && self.model.is_dirac() {
            -1.0
        } else {
            1.0
        }
    }

    fn spec(&self, opts: &KernelOptions, abs_tol: f64) -> IntegrationSpec {
        IntegrationSpec::semi_infinite(0.0)
            .with_rel_tol(opts.rel_tol)
            .with_abs_tol(abs_tol)
            .with_osc_scale(self.osc())
            .with_max_evals(opts.max_evals)
    }

    /// Runs `integrate(cut)` on `[0, cut]`, lowering the cut-off while the
    /// envelope tail past it dominates the error budget.
    fn truncated<G>(
        &self,
        spec: &IntegrationSpec,
        mut integrate: G,
    ) -> Result<Estimate<f64>, KernelError>
    where
        G: FnMut(f64) -> Result<QuadratureResult<f64>, KernelError>,
    {
        let mut scale = 1.0;
        let mut evals = 0;
        loop {
            let env = |w| self.envelope(w);
            let Some(x) = truncation_point(0.0, spec.abs_tol * scale, spec.rel_tol * scale, &env)
            else {
                return Ok(Estimate::exact(0.0));
            };
            let r = integrate(x)?;
            let tail = self.tail(x)?;
            let error = r.error_estimate + tail;
            let tol = spec.abs_tol.max(spec.rel_tol * r.value.abs());
            evals += r.evals;
            let converged = r.converged && error <= tol;
            if converged || tail <= 0.5 * tol || scale < 1e-12 || evals >= spec.max_evals {
                return Ok(Estimate {
                    value: r.value,
                    error,
                    converged,
                    evals,
                    truncated_at: Some(x),
                });
            }
            scale *= (0.25 * tol / tail).clamp(1e-4, 0.5);
        }
    }

    fn tail(&self, cut: f64) -> Result<f64, KernelError> {
        let r = integrate_1d(
            |w| self.envelope(w),
            &IntegrationSpec::finite(cut, 2.0 * cut).with_rel_tol(1e-2),
        )?;
        Ok(r.value.abs())
    }

    /// Raw reduced integral (no prefactor, sign or unit conversion).
    fn reduced(&self, opts: &KernelOptions, abs_tol: f64) -> Result<Estimate<f64>, KernelError> {
        if self.is_zero() {
            return Ok(Estimate::exact(0.0));
        }
        let spec = self.spec(opts, abs_tol);
        let l = self.kernel_l();
        let r = integrate_1d_with_envelope(
            |w| reduced_kernel(self.model, w, l) * self.windows(w),
            &spec,
            |w| self.envelope(w),
        )?;
        Ok(Estimate {
            value: r.value,
            error: r.error_estimate,
            converged: r.converged,
            evals: r.evals,
            truncated_at: r.truncated_at,
        })
    }

    /// Raw two-dimensional integral over the triangle `p + q <= X`.
    fn planar(&self, opts: &KernelOptions, abs_tol: f64) -> Result<Estimate<f64>, KernelError> {
        if self.is_zero() {
            return Ok(Estimate::exact(0.0));
        }
        let spec = self.spec(opts, abs_tol);
        let l = self.kernel_l();
        let osc = self.osc();
        self.truncated(&spec, |x| {
            let outer = IntegrationSpec::finite(0.0, x)
                .with_rel_tol(opts.rel_tol)
                .with_abs_tol(abs_tol)
                .with_osc_scale(osc)
                .with_max_evals(opts.max_evals);
            let r = if self.model.is_dirac() {
                let ablated = self.model == FieldModel::DiracScalarAblated;
                let inner = IntegrationSpec::finite(0.0, 1.0)
                    .with_rel_tol(opts.rel_tol)
                    .with_abs_tol(abs_tol / x)
                    .with_osc_scale(osc * x)
                    .with_max_evals(opts.max_evals);
                integrate_2d(
                    |p, s| {
                        let span = x - p;
                        let q = s * span;
                        let k = if l == 0.0 {
                            p * p * q * q
                        } else if ablated {
                            ablated_kernel(p, q, l)
                        } else {
                            angular_kernel(p, q, l)
                        };
                        span * k * self.windows(p + q)
                    },
                    &outer,
                    &inner,
                )?
            } else {
                // sin(wL)/L = w int_0^1 cos(w L c) dc
                let inner = IntegrationSpec::finite(0.0, 1.0)
                    .with_rel_tol(opts.rel_tol)
                    .with_abs_tol(abs_tol / x)
                    .with_osc_scale(l * x)
                    .with_max_evals(opts.max_evals);
                integrate_2d(
                    |w, c| w * (w * l * c).cos() * self.windows(w),
                    &outer,
                    &inner,
                )?
            };
            Ok(r)
        })
    }

    /// Converts a raw integral to the physical amplitude.
    fn finish(&self, raw: Estimate<f64>, t: f64) -> Estimate<Complex64> {
        let c = self.sign() * self.model.prefactor() * t.powi(self.model.dimension());
        let m = self.model.multiplier();
        let e = raw.map(|v| v * c, c);
        Estimate {
            value: Complex64::new(e.value * m, 0.0),
            error: e.error * m,
            converged: e.converged,
            evals: e.evals,
            truncated_at: e.truncated_at.map(|x| x / t),
        }
    }
}

fn emission_problem(d: &DetectorSpec, model: FieldModel, t: f64) -> Problem {
    let s = Scaled::new(d, t);
    Problem {
        model,
        transfer: Transfer::Emission,
        a: s,
        b: s,
        l: 0.0,
    }
}

fn real_part(e: Estimate<Complex64>) -> Estimate<f64> {
    Estimate {
        value: e.value.re,
        error: e.error,
        converged: e.converged,
        evals: e.evals,
        truncated_at: e.truncated_at,
    }
}

/// `|E|^2` from the one-dimensional `w^5/30` (Dirac) or `w` (Klein-Gordon)
/// form. Units follow the window's own duration.
pub fn emission_norm2(
    d: &DetectorSpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<Estimate<f64>, KernelError> {
    d.validate()?;
    let t = d.window.duration;
    let pb = emission_problem(d, model, t);
    Ok(real_part(pb.finish(pb.reduced(opts, 0.0)?, t)))
}

/// `|E|^2` from the two-dimensional `(p, q)` integral.
pub fn emission_norm2_planar(
    d: &DetectorSpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<Estimate<f64>, KernelError> {
    d.validate()?;
    let t = d.window.duration;
    let pb = emission_problem(d, model, t);
    Ok(real_part(pb.finish(pb.planar(opts, 0.0)?, t)))
}

fn spatial(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    model: FieldModel,
    transfer: Transfer,
    opts: &KernelOptions,
    emissions: Option<(f64, f64)>,
) -> Result<DualPath, KernelError> {
    geom.check_detectors(da, db)?;
    let t = geom.duration;
    let pb = Problem {
        model,
        transfer,
        a: Scaled::new(da, t),
        b: Scaled::new(db, t),
        l: geom.separation / t,
    };
    let (ea, eb) = match emissions {
        Some(e) => e,
        None => {
            let ea = emission_problem(da, model, t).reduced(opts, 0.0)?.value;
            let eb = emission_problem(db, model, t).reduced(opts, 0.0)?.value;
            (ea, eb)
        }
    };
    let abs_tol = opts.abs_floor * (ea * eb).abs().sqrt();
    let (reduced, planar) = if opts.paths == EvalPaths::Both {
        let (r, p) = rayon::join(|| pb.reduced(opts, abs_tol), || pb.planar(opts, abs_tol));
        (r?, Some(p?))
    } else {
        (pb.reduced(opts, abs_tol)?, None)
    };
    Ok(DualPath::new(
        pb.finish(reduced, t),
        planar.map(|p| pb.finish(p, t)),
    ))
}

/// `<0|X_AB>`, the amplitude for exchanging a virtual pair.
pub fn exchange_amplitude(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<DualPath, KernelError> {
    spatial(da, db, geom, model, Transfer::Exchange, opts, None)
}

/// `<E_A|E_B>`, the overlap of the two emitted pair states.
pub fn cross_emission(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<DualPath, KernelError> {
    spatial(da, db, geom, model, Transfer::Cross, opts, None)
}

/// All four amplitudes of one configuration, in units of `geom.duration`.
pub fn amplitudes(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<AmplitudeReport, KernelError> {
    geom.check_detectors(da, db)?;
    let t = geom.duration;
    let pa = emission_problem(da, model, t);
    let pb = emission_problem(db, model, t);
    let (ra, rb) = rayon::join(|| pa.reduced(opts, 0.0), || pb.reduced(opts, 0.0));
    let (ra, rb) = (ra?, rb?);
    let raw = Some((ra.value, rb.value));
    let (x, e) = rayon::join(
        || spatial(da, db, geom, model, Transfer::Exchange, opts, raw),
        || spatial(da, db, geom, model, Transfer::Cross, opts, raw),
    );
    let (exchange, cross) = (x?, e?);
    let emission_a = real_part(pa.finish(ra, t));
    let emission_b = real_part(pb.finish(rb, t));
    let amplitudes = AmplitudeSet {
        ea2: emission_a.value,
        eb2: emission_b.value,
        x_ab: exchange.value(),
        e_ab: cross.value(),
        ea2_err: emission_a.error,
        eb2_err: emission_b.error,
        x_ab_err: exchange.reduced.error,
        e_ab_err: cross.reduced.error,
    };
    Ok(AmplitudeReport {
        model,
        amplitudes,
        emission_a,
        emission_b,
        exchange,
        cross,
    })
}

/// `|<0|X_AB>|^2 - |E_A|^2 |E_B|^2`; positive means the detectors end up
/// entangled.
pub fn condition_margin(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<Estimate<f64>, KernelError> {
    let r = amplitudes(da, db, geom, model, opts)?;
    let mut m = r.amplitudes.margin();
    m.converged = r.converged();
    m.evals =
        r.emission_a.evals + r.emission_b.evals + r.exchange.reduced.evals + r.cross.reduced.evals;
    Ok(m)
}

/// Both sides of the condition in its expanded form: the `w^3 cos(wL)` line
/// integral plus six times the remaining `(w1, w2)` double integral, squared,
/// against `1/25` of the product of the `w^5` emission integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpandedCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_err: f64,
    pub rhs_err: f64,
    pub converged: bool,
}

impl ExpandedCondition {
    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Evaluates [`ExpandedCondition`] for real windows, in units of `geom.duration`.
pub fn expanded_condition(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    opts: &KernelOptions,
) -> Result<ExpandedCondition, KernelError> {
    geom.check_detectors(da, db)?;
    let t = geom.duration;
    let (a, b) = (Scaled::new(da, t), Scaled::new(db, t));
    let l = geom.separation / t;
    let osc = l + a.rate() + b.rate();
    let base = |lower: f64| {
        IntegrationSpec::semi_infinite(lower)
            .with_rel_tol(opts.rel_tol)
            .with_abs_tol(0.0)
            .with_osc_scale(osc)
            .with_max_evals(opts.max_evals)
    };
    let w5 = |s: Scaled| {
        integrate_1d_with_envelope(
            |w: f64| w.powi(5) * s.at(s.gap + w).powi(2),
            &base(0.0),
            |w: f64| w.powi(5) * s.env(s.gap + w).powi(2),
        )
    };
    let (ea, eb) = (w5(a)?, w5(b)?);
    let env_x = |w: f64| (1.0 + w * l).powi(3) * a.env(a.gap + w) * b.env((w - b.gap).max(0.0));
    let cut0 = truncation_point(0.0, 0.0, opts.rel_tol, &env_x).unwrap_or(0.0);
    // Absolute tolerance relative to the integral of the envelope, since the
    // line and plane parts can cancel each other.
    let mass = integrate_1d(
        env_x,
        &IntegrationSpec::finite(0.0, cut0.max(1e-12)).with_rel_tol(1e-3),
    )?
    .value;
    let spec = base(0.0).with_abs_tol(opts.rel_tol * mass);
    let line = integrate_1d_with_envelope(
        |w: f64| w.powi(3) * (w * l).cos() * a.at(a.gap + w) * b.at(b.gap - w) / (l * l),
        &spec,
        env_x,
    )?;
    let cut = truncation_point(0.0, spec.abs_tol, spec.rel_tol, &env_x).unwrap_or(0.0);
    let plane = if cut > 0.0 {
        let sq = IntegrationSpec::finite(0.0, cut)
            .with_rel_tol(opts.rel_tol)
            .with_abs_tol(spec.abs_tol / cut)
            .with_osc_scale(osc)
            .with_max_evals(opts.max_evals);
        integrate_2d(
            |w1: f64, w2: f64| {
                let (s1, c1) = (w1 * l).sin_cos();
                let (s2, c2) = (w2 * l).sin_cos();
                let br = s1 * s2 - w1 * l * c1 * s2 - w2 * l * s1 * c2;
                br / l.powi(4) * a.at(a.gap + w1 + w2) * b.at(b.gap - w1 - w2)
            },
            &sq,
            &sq,
        )?
    } else {
        QuadratureResult::zero()
    };
    let inner = line.value + 6.0 * plane.value;
    let inner_err = line.error_estimate + 6.0 * plane.error_estimate;
    let rhs = ea.value * eb.value / 25.0;
    Ok(ExpandedCondition {
        lhs: inner * inner,
        rhs,
        lhs_err: 2.0 * inner.abs() * inner_err + inner_err * inner_err,
        rhs_err: (ea.error_estimate * eb.value + eb.error_estimate * ea.value) / 25.0,
        converged: ea.converged && eb.converged && line.converged && plane.converged,
    })
}

// ---------------------------------------------------------------------------
// Brute-force oracle

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    Right,
    Left,
}

/// Angular weight integrated over both solid angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngularWeight {
    /// `|u(p)^dagger u(q)|^2` from explicit spinors.
    Spinor(Handedness),
    /// `(1 + p.q/pq) / 2` written out directly.
    HalfDot,
    /// The constant `1/2` alone.
    Half,
}

const N_PHI: usize = 8;

/// Direct quadrature of `int dOmega_p dOmega_q w(p, q) exp(i (p + q).L)` with
/// `L` along z. The weight is split into separable components, so the double
/// angular integral is a sum of products of single ones.
pub struct AngularOracle {
    weight: AngularWeight,
    // Per node count: (cos theta nodes, weights, phi-summed components).
    tables: HashMap<usize, (Vec<f64>, Vec<f64>, Vec<[Complex64; 4]>)>,
}

impl AngularOracle {
    pub fn new(weight: AngularWeight) -> Self {
        Self {
            weight,
            tables: HashMap::new(),
        }
    }

    fn components(&self, dir: [f64; 3]) -> [Complex64; 4] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self.weight {
            AngularWeight::Half => [
                Complex64::new(r, 0.0),
                Complex64::default(),
                Complex64::default(),
                Complex64::default(),
            ],
            AngularWeight::HalfDot => {
                // Paired with the same components of q below.
                let mut c = [Complex64::default(); 4];
                c[0] = Complex64::new(r, 0.0);
                for i in 0..3 {
                    c[i + 1] = Complex64::new(r * dir[i], 0.0);
                }
                c
            }
            AngularWeight::Spinor(h) => {
                let u = match h {
                    Handedness::Right => spinor_r(dir),
                    Handedness::Left => spinor_l(dir),
                }
                .expect("unit direction");
                [
                    u[0] * u[0].conj(),
                    u[0] * u[1].conj(),
                    u[1] * u[0].conj(),
                    u[1] * u[1].conj(),
                ]
            }
        }
    }

    fn table(&mut self, n: usize) -> &(Vec<f64>, Vec<f64>, Vec<[Complex64; 4]>) {
        if !self.tables.contains_key(&n) {
            let gl = GaussLegendre::new(n.try_into().expect("n > 0"));
            let mut cs = Vec::with_capacity(n);
            let mut ws = Vec::with_capacity(n);
            let mut comps = Vec::with_capacity(n);
            for &(c, w) in gl.as_node_weight_pairs() {
                let s = (1.0 - c * c).max(0.0).sqrt();
                let mut acc = [Complex64::default(); 4];
                for j in 0..N_PHI {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / N_PHI as f64;
                    let dir = [s * phi.cos(), s * phi.sin(), c];
                    let k = self.components(dir);
                    for i in 0..4 {
                        acc[i] += k[i] * (2.0 * PI / N_PHI as f64);
                    }
                }
                cs.push(c);
                ws.push(w);
                comps.push(acc);
            }
            self.tables.insert(n, (cs, ws, comps));
        }
        &self.tables[&n]
    }

    /// Single solid-angle integrals `int dOmega a_k(p) exp(i kappa cos theta)`.
    pub fn moments(&mut self, kappa: f64) -> [Complex64; 4] {
        let n = ((0.75 * kappa.abs() + 24.0) / 8.0).ceil() as usize * 8;
        let (cs, ws, comps) = self.table(n);
        let mut out = [Complex64::default(); 4];
        for ((&c, &w), k) in cs.iter().zip(ws).zip(comps) {
            let e = Complex64::from_polar(w, kappa * c);
            for i in 0..4 {
                out[i] += e * k[i];
            }
        }
        out
    }

    fn pair(&self, a: &[Complex64; 4], b: &[Complex64; 4]) -> Complex64 {
        match self.weight {
            // tr(P_p P_q) = sum_ij P_p[i][j] P_q[j][i]
            AngularWeight::Spinor(_) => a[0] * b[0] + a[1] * b[2] + a[2] * b[1] + a[3] * b[3],
            _ => a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3],
        }
    }

    /// `int dOmega_p dOmega_q w(p, q) exp(i (p + q) . L z)`.
    pub fn integrate(&mut self, p: f64, q: f64, l: f64) -> Complex64 {
        let a = self.moments(p * l);
        let b = self.moments(q * l);
        self.pair(&a, &b)
    }
}

fn oracle_weight(model: FieldModel) -> Result<AngularWeight, KernelError> {
    match model {
        FieldModel::DiracRight | FieldModel::DiracBoth => {
            Ok(AngularWeight::Spinor(Handedness::Right))
        }
        FieldModel::DiracLeft => Ok(AngularWeight::Spinor(Handedness::Left)),
        FieldModel::DiracScalarAblated => Ok(AngularWeight::Half),
        FieldModel::KleinGordon => Err(KernelError::NoOracle("klein_gordon")),
    }
}

fn brute_force(
    pb: &Problem,
    opts: &KernelOptions,
    abs_tol: f64,
) -> Result<Estimate<f64>, KernelError> {
    if pb.is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    let spec = pb.spec(opts, abs_tol);
    let l = pb.kernel_l();
    let norm = 2.0 / (4.0 * PI).powi(2);
    let osc = pb.osc();
    let mut oracle = AngularOracle::new(oracle_weight(pb.model)?);
    pb.truncated(&spec, |x| {
        let outer = IntegrationSpec::finite(0.0, x)
            .with_rel_tol(opts.rel_tol)
            .with_abs_tol(abs_tol)
            .with_osc_scale(osc)
            .with_max_evals(opts.max_evals);
        let inner = IntegrationSpec::finite(0.0, 1.0)
            .with_rel_tol(opts.rel_tol)
            .with_abs_tol(abs_tol / x)
            .with_osc_scale(osc * x)
            .with_max_evals(opts.max_evals);
        let mut cached: Option<(f64, [Complex64; 4])> = None;
        let r = integrate_2d(
            |p, s| {
                let span = x - p;
                let q = s * span;
                let a = match cached {
                    Some((pc, m)) if pc == p => m,
                    _ => {
                        let m = oracle.moments(p * l);
                        cached = Some((p, m));
                        m
                    }
                };
                let b = oracle.moments(q * l);
                let ang = norm * oracle.pair(&a, &b).re;
                span * p * p * q * q * ang * pb.windows(p + q)
            },
            &outer,
            &inner,
        )?;
        Ok(r)
    })
}

/// `|E|^2` with the angular factor from explicit spinors, integrated
/// numerically over both solid angles and the `(p, q)` quarter plane.
pub fn brute_force_emission(
    d: &DetectorSpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<Estimate<f64>, KernelError> {
    d.validate()?;
    let t = d.window.duration;
    let pb = emission_problem(d, model, t);
    Ok(real_part(pb.finish(brute_force(&pb, opts, 0.0)?, t)))
}

/// `<0|X_AB>` with the angular factor from explicit spinors.
pub fn brute_force_exchange(
    da: &DetectorSpec,
    db: &DetectorSpec,
    geom: &GeometrySpec,
    model: FieldModel,
    opts: &KernelOptions,
) -> Result<Estimate<Complex64>, KernelError> {
    geom.check_detectors(da, db)?;
    let t = geom.duration;
    let ea = emission_problem(da, model, t).reduced(opts, 0.0)?.value;
    let eb = emission_problem(db, model, t).reduced(opts, 0.0)?.value;
    let pb = Problem {
        model,
        transfer: Transfer::Exchange,
        a: Scaled::new(da, t),
        b: Scaled::new(db, t),
        l: geom.separation / t,
    };
    let raw = brute_force(&pb, opts, opts.abs_floor * (ea * eb).abs().sqrt())?;
    Ok(pb.finish(raw, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gauss_pair(gap: f64, l: f64) -> (DetectorSpec, DetectorSpec, GeometrySpec) {
        let g = GeometrySpec::new(l, 1.0);
        let w = WindowProfile::gaussian(1.0, 1.0);
        let (a, b) = g.place(w, gap, w, gap);
        (a, b, g)
    }

    #[test]
    fn expanded_form_matches_raw_ratio() {
        for (gap, l) in [(2.0, 3.0), (4.0, 5.0), (1.0, 2.0)] {
            let (a, b, g) = gauss_pair(gap, l);
            let opts = KernelOptions::default().with_rel_tol(1e-10);
            let raw = amplitudes(&a, &b, &g, FieldModel::DiracRight, &opts)
                .unwrap()
                .amplitudes;
            let ex = expanded_condition(&a, &b, &g, &opts).unwrap();
            assert!(ex.converged, "{ex:?}");
            let r1 = raw.x_ab.norm_sqr() / (raw.ea2 * raw.eb2);
            let r2 = ex.lhs / ex.rhs;
            assert!(
                ((r1 - r2) / r1).abs() < 1e-7,
                "gap {gap} L {l}: {r1} vs {r2}"
            );
        }
    }

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn spinor_poles() {
        let down = spinor_r([0.0, 0.0, -2.0]).unwrap();
        assert_eq!(down, [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let up = spinor_r([0.0, 0.0, 3.0]).unwrap();
        assert_eq!(up, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        // Approaching +z along p_y = 0 from p_x > 0.
        let near = spinor_r([1e-9, 0.0, 1.0]).unwrap();
        assert!((near[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(spinor_r([0.0; 3]), Err(KernelError::ZeroMomentum));
    }

    #[test]
    fn bessel_branches_join() {
        for n in 0..2 {
            let below = spherical_bessel(n, 1.0 - 1e-12);
            let above = spherical_bessel(n, 1.0 + 1e-12);
            assert!((below - above).abs() < 1e-12);
        }
        assert_eq!(spherical_bessel(0, 0.0), 1.0);
        assert_eq!(spherical_bessel(1, 0.0), 0.0);
    }

    #[test]
    fn kernel_expanded_form() {
        for &(p, q, l) in &[(1.0f64, 2.0f64, 3.0f64), (0.3, 4.0, 5.0), (2.5, 2.5, 8.0)] {
            let (pl, ql) = (p * l, q * l);
            let expanded = -(p * q / (l * l)) * ((p + q) * l).cos()
                + p / l.powi(3) * pl.cos() * ql.sin()
                + q / l.powi(3) * pl.sin() * ql.cos()
                - pl.sin() * ql.sin() / l.powi(4);
            assert!((angular_kernel(p, q, l) - expanded).abs() < 1e-13 * expanded.abs().max(1e-3));
            let abl = p * q * pl.sin() * ql.sin() / (l * l);
            assert!((ablated_kernel(p, q, l) - abl).abs() < 1e-13);
        }
        assert_eq!(angular_kernel(2.0, 3.0, 0.0), 36.0);
    }

    #[test]
    fn angular_oracle_reproduces_kernel() {
        let norm = 2.0 / (4.0 * PI).powi(2);
        let mut o = AngularOracle::new(AngularWeight::HalfDot);
        let brute = norm * o.integrate(1.0, 2.0, 3.0).re * 4.0;
        let k = angular_kernel(1.0, 2.0, 3.0);
        assert!(((brute - k) / k).abs() < 1e-6, "{brute} vs {k}");
        let mut h = AngularOracle::new(AngularWeight::Half);
        let half = h.integrate(1.0, 2.0, 3.0);
        let closed = (4.0 * PI).powi(2) / 2.0 * spherical_bessel(0, 3.0) * spherical_bessel(0, 6.0);
        assert!(((half.re - closed) / closed).abs() < 1e-6);
        assert!(half.im.abs() < 1e-12);
        for h in [Handedness::Right, Handedness::Left] {
            let mut s = AngularOracle::new(AngularWeight::Spinor(h));
            let v = norm * s.integrate(1.0, 2.0, 3.0).re * 4.0;
            assert!(((v - k) / k).abs() < 1e-6);
        }
    }

    #[test]
    fn reduced_kernels_integrate_planar_ones() {
        for &l in &[0.5, 3.0, 8.0] {
            for &w in &[0.01, 0.4, 1.3, 2.9, 6.0] {
                let spec = IntegrationSpec::finite(0.0, w)
                    .with_rel_tol(1e-13)
                    .with_abs_tol(1e-300)
                    .with_osc_scale(l);
                let full = integrate_1d(|p| angular_kernel(p, w - p, l), &spec)
                    .unwrap()
                    .value;
                let abl = integrate_1d(|p| ablated_kernel(p, w - p, l), &spec)
                    .unwrap()
                    .value;
                let rf = reduced_kernel(FieldModel::DiracRight, w, l);
                let ra = reduced_kernel(FieldModel::DiracScalarAblated, w, l);
                assert!(
                    (full - rf).abs() <= 1e-10 * rf.abs().max(1e-300) + 1e-16,
                    "{l} {w}: {full} {rf}"
                );
                assert!(
                    (abl - ra).abs() <= 1e-10 * ra.abs().max(1e-300) + 1e-16,
                    "{l} {w}: {abl} {ra}"
                );
            }
        }
    }

    #[test]
    fn reduced_series_matches_closed_form_near_switch() {
        for &x in &[1.5, 1.99, 2.0] {
            let (s, c) = f64::sin_cos(x);
            let f = -x * x * x * c / 6.0 + 0.5 * x * x * s + x * c - s;
            let g = -x * x * x * c / 12.0 - 0.25 * x * c + 0.25 * s;
            assert!(((dirac_reduced(x) - f) / f).abs() < 1e-13);
            assert!(((ablated_reduced(x) - g) / g).abs() < 1e-13);
        }
        let x = 1e-3;
        assert!(((dirac_reduced(x) - x.powi(5) / 30.0) / (x.powi(5) / 30.0)).abs() < 1e-5);
    }

    #[test]
    fn emission_zero_window() {
        let d = DetectorSpec::new(1.0, [0.0; 3], WindowProfile::gaussian(0.0, 1.0));
        for m in FieldModel::ALL {
            assert_eq!(
                emission_norm2(&d, m, &KernelOptions::default())
                    .unwrap()
                    .value,
                0.0
            );
        }
    }

    #[test]
    fn handedness_equal_and_doubling() {
        let (a, b, g) = gauss_pair(2.0, 3.0);
        let o = KernelOptions::default();
        let r = amplitudes(&a, &b, &g, FieldModel::DiracRight, &o)
            .unwrap()
            .amplitudes;
        let l = amplitudes(&a, &b, &g, FieldModel::DiracLeft, &o)
            .unwrap()
            .amplitudes;
        let both = amplitudes(&a, &b, &g, FieldModel::DiracBoth, &o)
            .unwrap()
            .amplitudes;
        assert_eq!(r, l);
        assert_eq!(both, r.scaled(2.0));
    }

    #[test]
    fn emission_dual_path() {
        let o = KernelOptions::default().with_rel_tol(1e-10);
        let d = DetectorSpec::new(2.0, [0.0; 3], WindowProfile::gaussian(1.0, 1.0));
        for m in [FieldModel::DiracRight, FieldModel::KleinGordon] {
            let a = emission_norm2(&d, m, &o).unwrap();
            let b = emission_norm2_planar(&d, m, &o).unwrap();
            assert!(a.converged && b.converged);
            assert!(((a.value - b.value) / a.value).abs() < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn exchange_dual_path_gaussian() {
        let (a, b, g) = gauss_pair(2.0, 3.0);
        let o = KernelOptions::default().with_rel_tol(1e-10).both_paths();
        for m in [
            FieldModel::DiracRight,
            FieldModel::DiracScalarAblated,
            FieldModel::KleinGordon,
        ] {
            let x = exchange_amplitude(&a, &b, &g, m, &o).unwrap();
            let p = x.planar.unwrap();
            assert!(x.agree.unwrap(), "{m:?}: {x:?}");
            assert!(((x.value() - p.value).norm() / x.value().norm()) < 1e-6);
            let c = cross_emission(&a, &b, &g, m, &o).unwrap();
            assert!(c.agree.unwrap(), "{m:?}: {c:?}");
        }
    }

    #[test]
    fn scale_invariance() {
        let o = KernelOptions::default();
        let (a, b, g) = gauss_pair(2.0, 3.0);
        let lam = 2.0;
        let g2 = GeometrySpec::new(3.0 * lam, lam);
        let w2 = WindowProfile::gaussian(1.0, lam);
        let (a2, b2) = g2.place(w2, 2.0 / lam, w2, 2.0 / lam);
        let r1 = amplitudes(&a, &b, &g, FieldModel::DiracRight, &o)
            .unwrap()
            .amplitudes;
        let r2 = amplitudes(&a2, &b2, &g2, FieldModel::DiracRight, &o)
            .unwrap()
            .amplitudes;
        let s = lam.powi(-4);
        assert!(((r2.x_ab.re - s * r1.x_ab.re) / r1.x_ab.re).abs() < 1e-10);
        assert!(((r2.ea2 - s * r1.ea2) / r1.ea2).abs() < 1e-10);
        let ratio = |r: AmplitudeSet| r.x_ab.norm_sqr() / (r.ea2 * r.eb2);
        assert!(((ratio(r1) - ratio(r2)) / ratio(r1)).abs() < 1e-10);
    }

    #[test]
    fn far_detectors_decouple() {
        let (a, b, g) = gauss_pair(1.0, 50.0);
        let o = KernelOptions::default();
        let r = amplitudes(&a, &b, &g, FieldModel::DiracRight, &o).unwrap();
        assert!(r.amplitudes.e_ab.norm() < 1e-6 * r.amplitudes.ea2);
    }

    #[test]
    fn coincident_limit_of_cross_emission() {
        let (a, b, g) = gauss_pair(1.0, 1e-3);
        let o = KernelOptions::default();
        let r = amplitudes(&a, &b, &g, FieldModel::DiracRight, &o)
            .unwrap()
            .amplitudes;
        assert!(((r.e_ab.re - r.ea2) / r.ea2).abs() < 1e-2);
    }

    #[test]
    fn gaussian_far_margin_negative() {
        let (a, b, g) = gauss_pair(2.0, 10.0);
        let m = condition_margin(
            &a,
            &b,
            &g,
            FieldModel::DiracRight,
            &KernelOptions::default(),
        )
        .unwrap();
        assert!(m.value < 0.0);
    }

    #[test]
    fn geometry_checks() {
        assert!(GeometrySpec::new(2.0, 1.0).causal(true).validate().is_err());
        assert!(GeometrySpec::new(3.0, 1.0).causal(true).validate().is_ok());
        let g = GeometrySpec::new(3.0, 1.0);
        let w = WindowProfile::gaussian(1.0, 1.0);
        let a = DetectorSpec::new(1.0, [0.0; 3], w);
        let b = DetectorSpec::new(1.0, [0.0, 2.0, 0.0], w);
        assert!(matches!(
            g.check_detectors(&a, &b),
            Err(KernelError::Geometry(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn spinor_identities(a in prop::array::uniform3(-5.0f64..5.0), b in prop::array::uniform3(-5.0f64..5.0)) {
            prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            prop_assume!(b.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let (ua, ub) = (spinor_r(a).unwrap(), spinor_r(b).unwrap());
            prop_assert!(((ua[0].norm_sqr() + ua[1].norm_sqr()) - 1.0).abs() < 1e-12);
            // Helicity: (sigma . p_hat) u = u.
            let n = unit(a);
            let s0 = ua[0] * n[2] + ua[1] * Complex64::new(n[0], -n[1]);
            let s1 = ua[0] * Complex64::new(n[0], n[1]) - ua[1] * n[2];
            prop_assert!((s0 - ua[0]).norm() < 1e-12 && (s1 - ua[1]).norm() < 1e-12);
            let m = unit(b);
            let overlap = (ua[0].conj() * ub[0] + ua[1].conj() * ub[1]).norm_sqr();
            let dot = n[0] * m[0] + n[1] * m[1] + n[2] * m[2];
            prop_assert!((overlap - 0.5 * (1.0 + dot)).abs() < 1e-12);
            let (la, lb) = (spinor_l(a).unwrap(), spinor_l(b).unwrap());
            let lo = (la[0].conj() * lb[0] + la[1].conj() * lb[1]).norm_sqr();
            prop_assert!((lo - overlap).abs() < 1e-12);
        }

        #[test]
        fn kernels_symmetric(p in 0.0f64..20.0, q in 0.0f64..20.0, l in 0.01f64..20.0) {
            prop_assert_eq!(angular_kernel(p, q, l), angular_kernel(q, p, l));
            prop_assert_eq!(ablated_kernel(p, q, l), ablated_kernel(q, p, l));
            prop_assert!(angular_kernel(p, q, l).abs() <= p * p * q * q * (1.0 + 1e-12));
        }

        #[test]
        fn reduced_bounded_and_odd(w in 0.0f64..40.0, l in 0.0f64..20.0) {
            for m in FieldModel::ALL {
                let k = reduced_kernel(m, w, l);
                prop_assert!(k.abs() <= reduced_bound(m, w) * (1.0 + 1e-12) + 1e-300);
            }
            prop_assert_eq!(dirac_reduced(-w * l), -dirac_reduced(w * l));
        }
    }
}
