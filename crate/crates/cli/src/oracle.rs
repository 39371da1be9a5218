use harvest_core::kernels::{
    amplitudes, brute_force_emission, brute_force_exchange, emission_norm2, emission_norm2_planar,
    exchange_amplitude, expanded_condition, FieldModel, GeometrySpec, KernelError, KernelOptions,
};
use harvest_core::quadrature::{integrate_1d, IntegrationSpec};
use harvest_core::windows::WindowProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::OracleConfig;

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub check: String,
    pub omega_t: Option<f64>,
    pub l_over_t: Option<f64>,
    pub value: f64,
    pub reference: f64,
    pub rel_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleRow {
    fn new(check: &str, at: Option<(f64, f64)>, value: f64, reference: f64, tolerance: f64, converged: bool) -> Self {
        let rel_diff = (value - reference).abs() / reference.abs().max(f64::MIN_POSITIVE);
        Self {
            check: check.to_string(),
            omega_t: at.map(|a| a.0),
            l_over_t: at.map(|a| a.1),
            value,
            reference,
            rel_diff,
            tolerance,
            pass: converged && rel_diff <= tolerance,
        }
    }
}

fn grid_rows(gap: f64, l: f64, tol: f64, opts: &KernelOptions) -> Result<Vec<OracleRow>, KernelError> {
    let g = GeometrySpec::new(l, 1.0);
    let w = WindowProfile::gaussian(1.0, 1.0);
    let (a, b) = g.place(w, gap, w, gap);
    let at = Some((gap, l));
    let mut rows = Vec::new();
    for model in [FieldModel::DiracRight, FieldModel::DiracScalarAblated] {
        let name = model.name();
        let e = emission_norm2(&a, model, opts)?;
        let eb = brute_force_emission(&a, model, opts)?;
        let ep = emission_norm2_planar(&a, model, opts)?;
        rows.push(OracleRow::new(&format!("{name} emission brute force"), at, eb.value, e.value, tol, e.converged && eb.converged));
        rows.push(OracleRow::new(&format!("{name} emission planar"), at, ep.value, e.value, tol, e.converged && ep.converged));
        let x = exchange_amplitude(&a, &b, &g, model, opts)?;
        let xb = brute_force_exchange(&a, &b, &g, model, opts)?;
        let reduced = x.reduced.value.re;
        rows.push(OracleRow::new(&format!("{name} exchange brute force"), at, xb.value.re, reduced, tol, x.reduced.converged && xb.converged));
        if let Some(p) = x.planar {
            rows.push(OracleRow::new(&format!("{name} exchange planar"), at, p.value.re, reduced, tol, x.converged()));
        }
    }
    let kg = exchange_amplitude(&a, &b, &g, FieldModel::KleinGordon, opts)?;
    if let Some(p) = kg.planar {
        rows.push(OracleRow::new("KleinGordon exchange planar", at, p.value.re, kg.reduced.value.re, tol, kg.converged()));
    }
    Ok(rows)
}

/// Brute-force and dual-path comparisons over the grid, followed by the
/// expanded-form checks.
pub fn run(cfg: &OracleConfig, kernel: &KernelOptions) -> Result<Vec<OracleRow>, KernelError> {
    let opts = kernel.both_paths();
    let points: Vec<(f64, f64)> =
        cfg.gaps.iter().flat_map(|&g| cfg.separations.iter().map(move |&l| (g, l))).collect();
    let grid: Vec<Vec<OracleRow>> = points
        .par_iter()
        .map(|&(g, l)| grid_rows(g, l, cfg.tolerance, &opts))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<OracleRow> = grid.into_iter().flatten().collect();

    for w in [0.5, 1.0, 3.0, 7.0] {
        let spec = IntegrationSpec::finite(0.0, w).with_rel_tol(1e-13);
        let c3 = integrate_1d(|p| p * (w - p), &spec)?;
        let c5 = integrate_1d(|p| (p * (w - p)).powi(2), &spec)?;
        rows.push(OracleRow::new("line weight w^3/6", None, c3.value, w.powi(3) / 6.0, 1e-10, c3.converged));
        rows.push(OracleRow::new("line weight w^5/30", None, c5.value, w.powi(5) / 30.0, 1e-10, c5.converged));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<_> = (0..cfg.expanded_samples)
        .map(|_| {
            let l = rng.random_range(2.0..8.0);
            let wa = WindowProfile::gaussian(rng.random_range(0.5..2.0), 1.0).with_modulation(rng.random_range(0.0..2.0));
            let wb = WindowProfile::gaussian(rng.random_range(0.5..2.0), 1.0);
            (l, wa, rng.random_range(0.0..6.0), wb, rng.random_range(0.0..6.0))
        })
        .collect();
    let agree = samples
        .par_iter()
        .map(|&(l, wa, ga, wb, gb)| {
            let g = GeometrySpec::new(l, 1.0);
            let (a, b) = g.place(wa, ga, wb, gb);
            let raw = amplitudes(&a, &b, &g, FieldModel::DiracRight, kernel)?.amplitudes;
            let ex = expanded_condition(&a, &b, &g, kernel)?;
            Ok(usize::from((raw.margin().value > 0.0) == (ex.margin() > 0.0)))
        })
        .collect::<Result<Vec<usize>, KernelError>>()?
        .iter()
        .sum::<usize>();
    if cfg.expanded_samples > 0 {
        rows.push(OracleRow::new(
            "expanded form sign agreement",
            None,
            agree as f64,
            cfg.expanded_samples as f64,
            0.0,
            true,
        ));
    }
    Ok(rows)
}
