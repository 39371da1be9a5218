//! Coupling windows `eps(t)` and their frequency transforms.
//!
//! Transform convention: `eps~(nu) = int dt eps(t) exp(i nu t)`. Every window
//! here is even in time, so the transform is real and even.
//!
//! Two families are provided:
//!
//! * `Gaussian`: `eps0 * exp(-t^2 / 2T^2)`.
//! * `SuperoscComb`: a time-limited train of narrow Gaussian spikes whose
//!   transform is `Re[(cos(nu d) + i a sin(nu d))^N] * exp(-nu^2 s^2 / 2)`,
//!   `d = T / 2N`. Near the band centre the bracket behaves like
//!   `exp(i a N d nu)`, i.e. it oscillates `a` times faster than its fastest
//!   Fourier component `N d = T/2`.
//!
//! Both families can be multiplied by `cos(nu0 t)` in time, which moves the
//! transform to `(eps~(nu - nu0) + eps~(nu + nu0)) / 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("duration must be positive and finite, got {0}")]
    Duration(f64),
    #[error("comb order must be even and >= 2, got {0}")]
    Order(u32),
    #[error("superoscillation speed-up must be >= 1, got {0}")]
    Speedup(f64),
    #[error("smoothing width {sigma} must satisfy 0 < sigma < spacing/3 = {limit}")]
    Smoothing { sigma: f64, limit: f64 },
    #[error("modulation frequency must be finite and >= 0, got {0}")]
    Modulation(f64),
    #[error("separation L = {l} too short for duration T = {t}: need L >= T/2")]
    Separation { l: f64, t: f64 },
    #[error("speed-up {a} does not reproduce the separation: a*T/2 = {got}, L = {want}")]
    SpeedupMismatch { a: f64, got: f64, want: f64 },
}

/// Parameters of the superoscillatory comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperoscParams {
    /// Order `N` of the comb polynomial; even.
    pub order: u32,
    /// Speed-up `a >= 1` of the local oscillation over the fastest component.
    pub speedup: f64,
    /// Width `s` of each time spike.
    pub smoothing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowShape {
    Gaussian,
    SuperoscComb(SuperoscParams),
}

/// A temporally symmetric coupling window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowProfile {
    /// Coupling strength `eps0`.
    pub amplitude: f64,
    /// Duration scale `T`.
    pub duration: f64,
    /// Band-centre modulation `nu0` (`cos(nu0 t)` in time).
    #[serde(default)]
    pub modulation: f64,
    pub shape: WindowShape,
}

/// Oscillation the synthesized transform should follow near its band centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OscTarget {
    /// `cos(nu L)`, used for the Dirac condition.
    #[default]
    Cos,
    /// `sin(nu L)`, used for the Klein-Gordon condition.
    Sin,
}

/// Output of [`synthesize_superosc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedWindow {
    pub window: WindowProfile,
    /// Centre of the superoscillating band (equals the modulation, or 0).
    pub band_center: f64,
    /// Largest offset from the centre over which measured zero-crossing
    /// spacing stays within 10% of `pi/L`.
    pub band_half_width: f64,
}

impl SuperoscParams {
    pub fn spacing(&self, duration: f64) -> f64 {
        duration / (2.0 * self.order as f64)
    }

    /// `Re[(cos x + i a sin x)^N]`.
    fn comb(&self, x: f64) -> f64 {
        let z = Complex64::new(x.cos(), self.speedup * x.sin());
        z.powi(self.order as i32).re
    }

    /// Spike positions `j d` (j >= 0) and weights, spikes at `+-j d` sharing a
    /// weight. The centre spike (j = 0) carries its full weight.
    pub fn spikes(&self, duration: f64) -> Vec<(f64, f64)> {
        let n = self.order as usize;
        let d = self.spacing(duration);
        let p = 0.5 * (1.0 + self.speedup);
        let q = 0.5 * (1.0 - self.speedup);
        // Binomial coefficients built iteratively; N stays small.
        let mut binom = vec![1.0f64; n + 1];
        for k in 1..=n {
            binom[k] = binom[k - 1] * (n - k + 1) as f64 / k as f64;
        }
        // Term k sits at (2k - N) d; fold +- positions together.
        let mut out: Vec<(f64, f64)> = Vec::new();
        for k in 0..=n {
            let c = binom[k] * p.powi(k as i32) * q.powi((n - k) as i32);
            let j = (2 * k as i64 - n as i64).unsigned_abs() as f64;
            match out.iter_mut().find(|(t, _)| *t == j * d) {
                Some(slot) => slot.1 += c,
                None => out.push((j * d, c)),
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

impl WindowProfile {
    pub fn gaussian(amplitude: f64, duration: f64) -> Self {
        Self {
            amplitude,
            duration,
            modulation: 0.0,
            shape: WindowShape::Gaussian,
        }
    }

    pub fn comb(
        amplitude: f64,
        duration: f64,
        params: SuperoscParams,
    ) -> Result<Self, WindowError> {
        let w = Self {
            amplitude,
            duration,
            modulation: 0.0,
            shape: WindowShape::SuperoscComb(params),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_modulation(mut self, nu0: f64) -> Self {
        self.modulation = nu0;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(WindowError::Duration(self.duration));
        }
        if !(self.modulation >= 0.0 && self.modulation.is_finite()) {
            return Err(WindowError::Modulation(self.modulation));
        }
        if let WindowShape::SuperoscComb(p) = self.shape {
            if p.order < 2 || p.order % 2 != 0 {
                return Err(WindowError::Order(p.order));
            }
            if !(p.speedup >= 1.0 && p.speedup.is_finite()) {
                return Err(WindowError::Speedup(p.speedup));
            }
            let limit = p.spacing(self.duration) / 3.0;
            if !(p.smoothing > 0.0 && p.smoothing < limit) {
                return Err(WindowError::Smoothing {
                    sigma: p.smoothing,
                    limit,
                });
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Coupling density `eps(t)`.
    pub fn eval_time(&self, t: f64) -> f64 {
        let t = t.abs();
        let base = match self.shape {
            WindowShape::Gaussian => {
                let x = t / self.duration;
                (-0.5 * x * x).exp()
            }
            WindowShape::SuperoscComb(p) => {
                let s = p.smoothing;
                let norm = 1.0 / (s * (2.0 * PI).sqrt());
                let g = |u: f64| norm * (-0.5 * (u / s) * (u / s)).exp();
                p.spikes(self.duration)
                    .into_iter()
                    .map(|(tj, c)| {
                        if tj == 0.0 {
                            c * g(t)
                        } else {
                            0.5 * c * (g(t - tj) + g(t + tj))
                        }
                    })
                    .sum()
            }
        };
        let m = if self.modulation != 0.0 {
            (self.modulation * t).cos()
        } else {
            1.0
        };
        self.amplitude * base * m
    }

    fn base_transform(&self, nu: f64) -> f64 {
        match self.shape {
            WindowShape::Gaussian => {
                let x = nu * self.duration;
                self.duration * (2.0 * PI).sqrt() * (-0.5 * x * x).exp()
            }
            WindowShape::SuperoscComb(p) => {
                let d = p.spacing(self.duration);
                let s = p.smoothing;
                p.comb(nu * d) * (-0.5 * nu * nu * s * s).exp()
            }
        }
    }

    /// Frequency transform `eps~(nu)`; real and even.
    pub fn eval_transform(&self, nu: f64) -> f64 {
        let nu = nu.abs();
        let v = if self.modulation == 0.0 {
            self.base_transform(nu)
        } else {
            0.5 * (self.base_transform(nu - self.modulation)
                + self.base_transform(nu + self.modulation))
        };
        self.amplitude * v
    }

    fn base_envelope(&self, nu: f64) -> f64 {
        match self.shape {
            WindowShape::Gaussian => self.base_transform(nu),
            WindowShape::SuperoscComb(p) => {
                let s = p.smoothing;
                (1.0 + p.speedup * p.speedup).powf(0.5 * p.order as f64)
                    * (-0.5 * nu * nu * s * s).exp()
            }
        }
    }

    /// Upper bound on `|eps~|` at `nu`, non-increasing in `|nu|`.
    pub fn envelope_bound(&self, nu: f64) -> f64 {
        let nu = (nu.abs() - self.modulation).max(0.0);
        self.amplitude.abs() * self.base_envelope(nu)
    }

    /// Half-length of the interval outside which `eps(t)` is negligible.
    pub fn time_extent(&self) -> f64 {
        match self.shape {
            WindowShape::Gaussian => 12.0 * self.duration,
            WindowShape::SuperoscComb(p) => 0.5 * self.duration + 12.0 * p.smoothing,
        }
    }

    /// Largest time-domain frequency content scale, used to pick grids.
    pub fn spectral_scale(&self) -> f64 {
        match self.shape {
            WindowShape::Gaussian => 1.0 / self.duration,
            WindowShape::SuperoscComb(p) => 1.0 / p.smoothing,
        }
    }
}

/// Build a comb whose transform oscillates like `cos(nu L)` (or `sin(nu L)`)
/// near its band centre, using the speed-up `a = 2L/T`.
///
/// With a `Sin` target the modulation is moved to the nearest frequency at or
/// above `nu0` with `nu0 L = pi/2 (mod 2 pi)`, which turns the local
/// `cos((nu - nu0) L)` into `sin(nu L)`; likewise a `Cos` target with
/// non-zero `nu0` snaps to `nu0 L = 0 (mod 2 pi)`.
pub fn synthesize_superosc(
    separation: f64,
    duration: f64,
    order: u32,
    smoothing: f64,
    nu0: f64,
    amplitude: f64,
    target: OscTarget,
) -> Result<SynthesizedWindow, WindowError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(WindowError::Duration(duration));
    }
    if !(separation >= 0.5 * duration && separation.is_finite()) {
        return Err(WindowError::Separation {
            l: separation,
            t: duration,
        });
    }
    if !(nu0 >= 0.0 && nu0.is_finite()) {
        return Err(WindowError::Modulation(nu0));
    }
    let speedup = 2.0 * separation / duration;
    let got = speedup * duration / 2.0;
    if (got - separation).abs() > 1e-12 * separation {
        return Err(WindowError::SpeedupMismatch {
            a: speedup,
            got,
            want: separation,
        });
    }
    let params = SuperoscParams {
        order,
        speedup,
        smoothing,
    };
    let mut window = WindowProfile::comb(amplitude, duration, params)?;

    let period = 2.0 * PI / separation;
    let phase = match target {
        OscTarget::Cos => 0.0,
        OscTarget::Sin => 0.25 * period,
    };
    let center = if nu0 == 0.0 && target == OscTarget::Cos {
        0.0
    } else {
        let k = ((nu0 - phase) / period).ceil().max(0.0);
        phase + k * period
    };
    window.modulation = center;
    let band_half_width = measure_band(&window, center, separation);
    Ok(SynthesizedWindow {
        window,
        band_center: center,
        band_half_width,
    })
}

/// Zero crossings of `eps~` on `[from, to]`, located by sign changes on a
/// grid of step `h` and refined by bisection.
pub fn zero_crossings(w: &WindowProfile, from: f64, to: f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let n = ((to - from) / h).ceil() as usize;
    let mut x0 = from;
    let mut f0 = w.eval_transform(x0);
    for i in 1..=n {
        let x1 = (from + h * i as f64).min(to);
        let f1 = w.eval_transform(x1);
        if f0 == 0.0 {
            out.push(x0);
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = w.eval_transform(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

fn measure_band(w: &WindowProfile, center: f64, separation: f64) -> f64 {
    let spacing = PI / separation;
    let reach = match w.shape {
        WindowShape::SuperoscComb(p) => PI / (2.0 * p.spacing(w.duration)),
        WindowShape::Gaussian => 0.0,
    };
    let zeros = zero_crossings(w, center, center + reach, spacing / 64.0);
    let mut band = 0.0;
    for pair in zeros.windows(2) {
        let gap = pair[1] - pair[0];
        if (gap - spacing).abs() > 0.1 * spacing {
            break;
        }
        band = pair[1] - center;
    }
    band
}
