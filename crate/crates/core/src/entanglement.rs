//! Partially transposed two-detector state and the Peres test.
//!
//! Basis order is `{dd, du, ud, uu}` (`d` = ground, `u` = excited). At second
//! order the transposed matrix splits into the blocks `{0, 3}` and `{1, 2}`:
//!
//! ```text
//! [ 1 - eA - eB   e_ab  ]     [ eB    -x  ]
//! [ conj(e_ab)    |x|^2 ]     [ -x*   eA  ]
//! ```
//!
//! The `uu` entry is the norm of the two-pair state, which is fourth order in
//! the couplings; it is filled with its vacuum projection `|x|^2`. That entry
//! only enters the outer block, so it cannot manufacture a negative
//! eigenvalue in the inner one. It can in the outer block, whenever
//! `|e_ab|^2 > (1 - eA - eB) |x|^2`; such a violation only counts once it
//! exceeds its error bar.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::AmplitudeSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntanglementError {
    #[error("amplitudes must be finite")]
    NonFinite,
    #[error("emission norms must be non-negative, got {0} and {1}")]
    NegativeEmission(f64, f64),
    #[error("outside the perturbative regime: eA2 + eB2 = {0} >= 1")]
    NotPerturbative(f64),
}

/// The partially transposed density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PTMatrix {
    pub matrix: Matrix4<Complex64>,
    pub amplitudes: AmplitudeSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub peres_violated: bool,
    pub negativity: f64,
    pub negativity_err: f64,
    pub min_eigenvalue: f64,
    pub min_eigenvalue_err: f64,
    pub margin: f64,
    pub margin_err: f64,
    /// Outer block pair followed by inner block pair, each ascending.
    pub eigenvalues: [f64; 4],
}

pub fn assemble_pt(amps: &AmplitudeSet) -> Result<PTMatrix, EntanglementError> {
    if !amps.is_finite() {
        return Err(EntanglementError::NonFinite);
    }
    if amps.ea2 < 0.0 || amps.eb2 < 0.0 {
        return Err(EntanglementError::NegativeEmission(amps.ea2, amps.eb2));
    }
    let total = amps.ea2 + amps.eb2;
    if total >= 1.0 {
        return Err(EntanglementError::NotPerturbative(total));
    }
    let c = |v: f64| Complex64::new(v, 0.0);
    let mut m = Matrix4::<Complex64>::zeros();
    m[(0, 0)] = c(1.0 - total);
    m[(0, 3)] = amps.e_ab;
    m[(3, 0)] = amps.e_ab.conj();
    m[(1, 1)] = c(amps.eb2);
    m[(2, 2)] = c(amps.ea2);
    m[(1, 2)] = -amps.x_ab;
    m[(2, 1)] = -amps.x_ab.conj();
    m[(3, 3)] = c(amps.x_ab.norm_sqr());
    Ok(PTMatrix {
        matrix: m,
        amplitudes: *amps,
    })
}

/// Eigenvalues of `[[a, z], [z*, d]]`, ascending. The small one is formed as
/// `det / large` to keep its relative precision.
fn block_eigs(a: f64, d: f64, z2: f64) -> [f64; 2] {
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + z2).sqrt();
    let det = a * d - z2;
    if mean >= 0.0 {
        let hi = mean + r;
        let lo = if hi != 0.0 { det / hi } else { 0.0 };
        [lo, hi]
    } else {
        let lo = mean - r;
        let hi = if lo != 0.0 { det / lo } else { 0.0 };
        [lo, hi]
    }
}

/// Smallest inner-block eigenvalue, `2 (eA eB - |x|^2) / (eA + eB + r)`, and
/// its partial derivatives in `(eA, eB, |x|)`.
fn inner_min(ea: f64, eb: f64, x: f64) -> (f64, [f64; 3]) {
    let s = ea + eb;
    let d = ea - eb;
    let r = (d * d + 4.0 * x * x).sqrt();
    if s + r == 0.0 {
        return (0.0, [0.5, 0.5, 0.0]);
    }
    let lam = 2.0 * (ea * eb - x * x) / (s + r);
    let grad = if r > 0.0 {
        [0.5 * (1.0 - d / r), 0.5 * (1.0 + d / r), -2.0 * x / r]
    } else {
        [0.5, 0.5, 0.0]
    };
    (lam, grad)
}

pub fn peres_test(m: &PTMatrix) -> EntanglementReport {
    let a = &m.amplitudes;
    let outer = block_eigs(m.matrix[(0, 0)].re, m.matrix[(3, 3)].re, a.e_ab.norm_sqr());
    let x = a.x_ab.norm();
    let (lam, g) = inner_min(a.ea2, a.eb2, x);
    let inner_hi = a.ea2 + a.eb2 - lam;
    let lam_err = g[0].abs() * a.ea2_err + g[1].abs() * a.eb2_err + g[2].abs() * a.x_ab_err;
    // Small outer eigenvalue is det / large with det = (1 - eA - eB)|x|^2 - |e_ab|^2.
    let outer_err = if outer[1] > 0.0 {
        let ddet = (1.0 - a.ea2 - a.eb2) * 2.0 * x * a.x_ab_err
            + x * x * (a.ea2_err + a.eb2_err)
            + 2.0 * a.e_ab.norm() * a.e_ab_err;
        ddet / outer[1]
    } else {
        0.0
    };
    let eigenvalues = [outer[0], outer[1], lam, inner_hi];
    let mut negativity = 0.0;
    let mut negativity_err = 0.0;
    for (v, e) in [(outer[0], outer_err), (outer[1], 0.0), (lam, lam_err), (inner_hi, 0.0)] {
        if v < 0.0 {
            negativity -= v;
            negativity_err += e;
        }
    }
    let (min_eigenvalue, min_eigenvalue_err) = if outer[0] < lam { (outer[0], outer_err) } else { (lam, lam_err) };
    let margin = a.margin();
    EntanglementReport {
        peres_violated: negativity > negativity_err,
        negativity,
        negativity_err,
        min_eigenvalue,
        min_eigenvalue_err,
        margin: margin.value,
        margin_err: margin.error,
        eigenvalues,
    }
}

/// Negativity from the inner block alone.
pub fn leading_order_negativity(amps: &AmplitudeSet) -> f64 {
    let (lam, _) = inner_min(amps.ea2, amps.eb2, amps.x_ab.norm());
    (-lam).max(0.0)
}

/// Error bar of [`leading_order_negativity`] from the amplitude error bars.
pub fn leading_order_negativity_err(amps: &AmplitudeSet) -> f64 {
    let (lam, g) = inner_min(amps.ea2, amps.eb2, amps.x_ab.norm());
    if lam >= 0.0 {
        return 0.0;
    }
    g[0].abs() * amps.ea2_err + g[1].abs() * amps.eb2_err + g[2].abs() * amps.x_ab_err
}
