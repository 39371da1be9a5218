//! Adaptive Gauss-Kronrod integration over finite, semi-infinite and
//! rectangular domains.
//!
//! Every amplitude in the crate goes through this module. The engine is a
//! globally adaptive 7/15-point Gauss-Kronrod scheme: the panel with the
//! largest error estimate is bisected until the total error falls below
//! `max(abs_tol, rel_tol * |value|)` or the evaluation budget runs out. Node
//! sets are fixed and panels are always processed in the same order, so a
//! given integral is bit-reproducible regardless of how many threads the
//! caller runs.
//!
//! Oscillatory integrands (factors like `cos(wL)`) are handled by capping the
//! initial panel width at a quarter of the period `2*pi/osc_scale` before any
//! adaptivity happens.
//!
//! Semi-infinite domains are either mapped onto `[0, 1)` with
//! `x = a + t / (1 - t)`, or truncated where a caller supplied envelope
//! bound drops below the tolerance ([`integrate_1d_with_envelope`]).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kronrod abscissae on `[-1, 1]` (non-negative half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the 7-point rule living on `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const EVALS_PER_PANEL: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid integration spec: {0}")]
    InvalidSpec(String),
}

/// Upper end of an integration range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upper {
    Finite(f64),
    Infinite,
}

/// Domain and tolerance description for a single integration variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    pub lower: f64,
    pub upper: Upper,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub abs_tol: f64,
    /// Length scale `L` of `cos(wL)`-type factors; `0` disables the panel cap.
    #[serde(default)]
    pub osc_scale: f64,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
}

fn default_rel_tol() -> f64 {
    1e-8
}

fn default_max_evals() -> usize {
    4_000_000
}

impl IntegrationSpec {
    pub fn finite(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper: Upper::Finite(upper),
            rel_tol: default_rel_tol(),
            abs_tol: 0.0,
            osc_scale: 0.0,
            max_evals: default_max_evals(),
        }
    }

    pub fn semi_infinite(lower: f64) -> Self {
        Self {
            upper: Upper::Infinite,
            ..Self::finite(lower, lower + 1.0)
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_osc_scale(mut self, osc_scale: f64) -> Self {
        self.osc_scale = osc_scale;
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !self.lower.is_finite() {
            return Err(QuadratureError::InvalidSpec(
                "lower bound must be finite".into(),
            ));
        }
        if let Upper::Finite(b) = self.upper {
            if !(b.is_finite() && b > self.lower) {
                return Err(QuadratureError::InvalidSpec(format!(
                    "need lower < upper, got [{}, {}]",
                    self.lower, b
                )));
            }
        }
        if !(self.rel_tol > 0.0) {
            return Err(QuadratureError::InvalidSpec(
                "rel_tol must be positive".into(),
            ));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(QuadratureError::InvalidSpec(
                "abs_tol must be non-negative".into(),
            ));
        }
        if !(self.osc_scale >= 0.0 && self.osc_scale.is_finite()) {
            return Err(QuadratureError::InvalidSpec(
                "osc_scale must be finite and >= 0".into(),
            ));
        }
        if self.max_evals == 0 {
            return Err(QuadratureError::InvalidSpec(
                "max_evals must be positive".into(),
            ));
        }
        Ok(())
    }

    fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value)
    }
}

/// Value type an integrand may return: real or complex.
pub trait Integrand:
    Copy + Debug + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl Integrand for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Integrand for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult<V> {
    pub value: V,
    pub error_estimate: f64,
    pub evals: usize,
    pub converged: bool,
    /// Upper end actually used when a semi-infinite range was truncated.
    pub truncated_at: Option<f64>,
}

impl<V: Integrand> QuadratureResult<V> {
    pub(crate) fn zero() -> Self {
        Self {
            value: V::default(),
            error_estimate: 0.0,
            evals: 0,
            converged: true,
            truncated_at: None,
        }
    }
}

struct Panel<V> {
    a: f64,
    b: f64,
    value: V,
    aux: f64,
    error: f64,
}

// Max-heap on error; ties broken by creation order so the refinement
// sequence never depends on anything but the integrand values.
struct HeapKey {
    error: f64,
    seq: usize,
    idx: usize,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One 15-point Kronrod panel. `f` returns the integrand value and an
/// auxiliary non-negative density that is integrated alongside it but takes
/// no part in error control (used by the nested 2D driver).
fn gk15<V: Integrand, F: FnMut(f64) -> (V, f64)>(f: &mut F, a: f64, b: f64) -> (V, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let (fc, auxc) = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut aux = auxc * WGK[7];
    let mut res_abs = fc.magnitude() * WGK[7];

    let mut fv1 = [V::default(); 7];
    let mut fv2 = [V::default(); 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, a1) = f(center - dx);
        let (f2, a2) = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k = res_k + (f1 + f2) * WGK[j];
        res_abs += WGK[j] * (f1.magnitude() + f2.magnitude());
        aux += WGK[j] * (a1 + a2);
        if j % 2 == 1 {
            res_g = res_g + (f1 + f2) * WG[j / 2];
        }
    }

    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).magnitude();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }

    let hl = half.abs();
    let err = rescale_error(
        ((res_k - res_g) * half).magnitude(),
        res_abs * hl,
        res_asc * hl,
    );
    (res_k * half, aux * hl, err)
}

/// Core adaptive driver on a finite interval.
fn adaptive<V: Integrand, F: FnMut(f64) -> (V, f64)>(
    mut f: F,
    a: f64,
    b: f64,
    spec: &IntegrationSpec,
    initial_width: Option<f64>,
) -> (QuadratureResult<V>, f64) {
    let n_init = match initial_width {
        Some(w) if w > 0.0 => (((b - a) / w).ceil() as usize).max(1),
        _ => 1,
    };
    // Never let the initial partition alone exhaust the budget.
    let n_init = n_init.min((spec.max_evals / EVALS_PER_PANEL).max(1));

    let mut panels: Vec<Panel<V>> = Vec::with_capacity(n_init * 2);
    let mut heap = BinaryHeap::with_capacity(n_init * 2);
    let mut total = V::default();
    let mut total_err = 0.0;
    let mut evals = 0;
    let mut finite = true;
    let width = (b - a) / n_init as f64;
    for i in 0..n_init {
        let pa = a + width * i as f64;
        let pb = if i + 1 == n_init {
            b
        } else {
            a + width * (i + 1) as f64
        };
        let (v, aux, e) = gk15(&mut f, pa, pb);
        evals += EVALS_PER_PANEL;
        finite &= v.is_finite_value() && e.is_finite();
        total = total + v;
        total_err += e;
        heap.push(HeapKey {
            error: e,
            seq: i,
            idx: i,
        });
        panels.push(Panel {
            a: pa,
            b: pb,
            value: v,
            aux,
            error: e,
        });
    }

    let mut seq = n_init;
    let mut converged = finite && total_err <= spec.tolerance(total.magnitude());
    while !converged && finite && evals + 2 * EVALS_PER_PANEL <= spec.max_evals {
        let Some(top) = heap.pop() else { break };
        let p = &panels[top.idx];
        let (pa, pb) = (p.a, p.b);
        let mid = 0.5 * (pa + pb);
        if !(mid > pa && mid < pb) || (pb - pa) <= 4.0 * f64::EPSILON * pa.abs().max(pb.abs()) {
            // Cannot split further; leave it out of the heap for good.
            continue;
        }
        let (v1, x1, e1) = gk15(&mut f, pa, mid);
        let (v2, x2, e2) = gk15(&mut f, mid, pb);
        evals += 2 * EVALS_PER_PANEL;
        finite &= v1.is_finite_value() && v2.is_finite_value() && e1.is_finite() && e2.is_finite();

        let old = &panels[top.idx];
        total = total - old.value + v1 + v2;
        total_err += e1 + e2 - old.error;

        let left = top.idx;
        panels[left] = Panel {
            a: pa,
            b: mid,
            value: v1,
            aux: x1,
            error: e1,
        };
        heap.push(HeapKey {
            error: e1,
            seq,
            idx: left,
        });
        seq += 1;
        panels.push(Panel {
            a: mid,
            b: pb,
            value: v2,
            aux: x2,
            error: e2,
        });
        heap.push(HeapKey {
            error: e2,
            seq,
            idx: panels.len() - 1,
        });
        seq += 1;

        // Periodically resum to stop the running totals from drifting.
        if seq % 256 == 0 {
            let (t, te) = resum(&mut panels);
            total = t;
            total_err = te;
        }
        converged = total_err <= spec.tolerance(total.magnitude());
    }

    let (total, total_err) = resum(&mut panels);
    let aux_total: f64 = panels.iter().map(|p| p.aux).sum();
    let converged = finite && total_err <= spec.tolerance(total.magnitude());
    (
        QuadratureResult {
            value: total,
            error_estimate: total_err,
            evals,
            converged,
            truncated_at: None,
        },
        aux_total,
    )
}

/// Deterministic left-to-right summation of the panel values.
fn resum<V: Integrand>(panels: &mut [Panel<V>]) -> (V, f64) {
    let mut order: Vec<usize> = (0..panels.len()).collect();
    order.sort_by(|&i, &j| panels[i].a.total_cmp(&panels[j].a));
    let mut v = V::default();
    let mut e = 0.0;
    for i in order {
        v = v + panels[i].value;
        e += panels[i].error;
    }
    (v, e)
}

fn panel_cap(spec: &IntegrationSpec) -> Option<f64> {
    (spec.osc_scale > 0.0).then(|| 2.0 * PI / spec.osc_scale / 4.0)
}

fn integrate_with_aux<V: Integrand, F: FnMut(f64) -> (V, f64)>(
    mut f: F,
    spec: &IntegrationSpec,
) -> Result<(QuadratureResult<V>, f64), QuadratureError> {
    spec.validate()?;
    match spec.upper {
        Upper::Finite(b) => Ok(adaptive(f, spec.lower, b, spec, panel_cap(spec))),
        Upper::Infinite => {
            let a = spec.lower;
            let mapped = move |t: f64| {
                let s = 1.0 - t;
                let x = a + t / s;
                let jac = 1.0 / (s * s);
                let (v, aux) = f(x);
                if jac.is_finite() {
                    (v * jac, aux * jac)
                } else {
                    (V::default(), 0.0)
                }
            };
            Ok(adaptive(mapped, 0.0, 1.0, spec, None))
        }
    }
}

/// Integrate `f` over the range described by `spec`.
///
/// A semi-infinite range is mapped onto `[0, 1)`; the oscillation panel cap
/// only applies to finite ranges, so oscillatory integrands on `[a, inf)`
/// should go through [`integrate_1d_with_envelope`].
pub fn integrate_1d<V: Integrand, F: FnMut(f64) -> V>(
    mut f: F,
    spec: &IntegrationSpec,
) -> Result<QuadratureResult<V>, QuadratureError> {
    integrate_with_aux(|x| (f(x), 0.0), spec).map(|(r, _)| r)
}

/// Like [`integrate_1d`], but a semi-infinite range is truncated at the
/// point where `envelope` (an eventually decreasing upper bound on `|f|`)
/// falls below `max(abs_tol, 1e-3 * rel_tol * peak)`. The truncation point is
/// recorded in the result and a bound on the discarded tail is added to the
/// error estimate.
pub fn integrate_1d_with_envelope<V, F, E>(
    f: F,
    spec: &IntegrationSpec,
    envelope: E,
) -> Result<QuadratureResult<V>, QuadratureError>
where
    V: Integrand,
    F: FnMut(f64) -> V,
    E: Fn(f64) -> f64,
{
    spec.validate()?;
    if let Upper::Finite(_) = spec.upper {
        return integrate_1d(f, spec);
    }
    let mut f = f;
    let mut scale = 1.0;
    let mut total_evals = 0;
    loop {
        let cut = truncation_point(
            spec.lower,
            spec.abs_tol * scale,
            spec.rel_tol * scale,
            &envelope,
        );
        let Some(cut) = cut else {
            // Envelope vanishes identically: nothing to integrate.
            let mut r = QuadratureResult::zero();
            r.truncated_at = Some(spec.lower);
            return Ok(r);
        };
        let finite = IntegrationSpec {
            upper: Upper::Finite(cut),
            ..*spec
        };
        let mut res = integrate_1d(&mut f, &finite)?;
        let tail = integrate_1d(
            |x| envelope(x),
            &IntegrationSpec::finite(cut, 2.0 * cut - spec.lower).with_rel_tol(1e-2),
        )?;
        let tol = finite.tolerance(res.value.magnitude());
        total_evals += res.evals + tail.evals;
        res.error_estimate += tail.value.abs();
        res.evals = total_evals;
        res.truncated_at = Some(cut);
        res.converged = res.converged && res.error_estimate <= tol;
        // A value far below the envelope's scale needs a lower cut-off.
        if res.converged
            || tail.value.abs() <= 0.5 * tol
            || scale < 1e-12
            || total_evals >= spec.max_evals
        {
            return Ok(res);
        }
        scale *= (0.25 * tol / tail.value.abs()).clamp(1e-4, 0.5);
    }
}

/// Find where a decaying envelope crosses the truncation threshold.
/// Returns `None` if the envelope is zero everywhere it was probed.
pub fn truncation_point<E: Fn(f64) -> f64>(
    lower: f64,
    abs_tol: f64,
    rel_tol: f64,
    envelope: &E,
) -> Option<f64> {
    let mut peak: f64 = 0.0;
    let mut step = 1.0_f64;
    // Probe near the lower end as well; the envelope may start by rising.
    for k in 0..8 {
        peak = peak.max(envelope(lower + step * k as f64 / 8.0));
    }
    let mut prev = lower;
    let mut x = lower + step;
    for _ in 0..200 {
        let v = envelope(x);
        peak = peak.max(v);
        let thr = abs_tol.max(1e-3 * rel_tol * peak);
        if peak > 0.0 && v <= thr && envelope(2.0 * x - lower) <= thr {
            // Bisect between the last two probes for the crossing.
            let (mut lo, mut hi) = (prev, x);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if envelope(mid) > thr {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(hi.max(lower + f64::EPSILON.max(1e-12)));
        }
        prev = x;
        step *= 2.0;
        x = lower + step;
    }
    if peak == 0.0 {
        None
    } else {
        Some(x)
    }
}

/// Integrate `f(x, y)` over the tensor product of two ranges.
///
/// The outer `x` integral is adaptive over the inner `y` integrals, which are
/// run at a tenth of their nominal relative tolerance. The reported error is
/// the outer estimate plus the outer integral of the inner error estimates.
pub fn integrate_2d<V: Integrand, F: FnMut(f64, f64) -> V>(
    mut f: F,
    spec_x: &IntegrationSpec,
    spec_y: &IntegrationSpec,
) -> Result<QuadratureResult<V>, QuadratureError> {
    spec_x.validate()?;
    spec_y.validate()?;
    let inner_spec = IntegrationSpec {
        rel_tol: spec_y.rel_tol * 0.1,
        abs_tol: spec_y.abs_tol * 0.1,
        ..*spec_y
    };
    let mut inner_evals = 0usize;
    let mut inner_ok = true;
    let (mut outer, aux) = integrate_with_aux(
        |x| {
            // Validity was checked above, so this cannot fail.
            let r =
                integrate_1d(|y| f(x, y), &inner_spec).unwrap_or_else(|_| QuadratureResult::zero());
            inner_evals += r.evals;
            inner_ok &= r.converged;
            (r.value, r.error_estimate)
        },
        spec_x,
    )?;
    outer.error_estimate += aux;
    outer.evals += inner_evals;
    let tol = spec_x
        .abs_tol
        .max(spec_y.abs_tol)
        .max(spec_x.rel_tol.max(spec_y.rel_tol) * outer.value.magnitude());
    outer.converged = outer.converged && inner_ok && outer.error_estimate <= tol;
    Ok(outer)
}
