//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts the verdict.

use std::io::Write;
use std::time::{Duration, Instant};

use harvest_core::entanglement::{assemble_pt, leading_order_negativity, peres_test};
use harvest_core::experiments::{
    ablation_study, fit_sweep, gaussian_reference, kg_baseline, optimize_window, sweep_negativity,
    SweepSpec, TemplateFamily,
};
use harvest_core::kernels::{
    amplitudes, brute_force_emission, brute_force_exchange, emission_norm2, exchange_amplitude,
    expanded_condition, spinor_l, spinor_r, FieldModel, GeometrySpec, KernelOptions,
};
use harvest_core::quadrature::{integrate_1d, IntegrationSpec};
use harvest_core::windows::{SuperoscParams, WindowProfile};
use harvest_core::{AmplitudeSet, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "[acceptance {n}] {verdict} {name} ({:.1}s): {detail}\n",
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn info(n: u32, msg: &str) {
    let _ = std::io::stderr().write_all(format!("[acceptance {n}] info: {msg}\n").as_bytes());
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let opts = KernelOptions::default().both_paths();
    let mut worst = (0.0f64, String::new());
    let mut ok = true;
    for gap in [1.0, 2.0, 4.0] {
        for l in [3.0, 5.0, 8.0] {
            let g = GeometrySpec::new(l, 1.0);
            let w = WindowProfile::gaussian(1.0, 1.0);
            let (a, b) = g.place(w, gap, w, gap);
            let model = FieldModel::DiracRight;
            let e1 = emission_norm2(&a, model, &opts).unwrap();
            let e2 = brute_force_emission(&a, model, &opts).unwrap();
            let x = exchange_amplitude(&a, &b, &g, model, &opts).unwrap();
            let xb = brute_force_exchange(&a, &b, &g, model, &opts).unwrap();
            let planar = x.planar.expect("both paths requested");
            let checks = [
                ("emission brute", rel(e2.value, e1.value)),
                (
                    "exchange brute",
                    (xb.value - x.reduced.value).norm() / x.reduced.value.norm(),
                ),
                (
                    "exchange planar",
                    (planar.value - x.reduced.value).norm() / x.reduced.value.norm(),
                ),
            ];
            if !(e1.converged && e2.converged && x.converged() && xb.converged) {
                ok = false;
                info(
                    1,
                    &format!(
                        "unconverged at OmegaT={gap}, L/T={l}: emission {} {} exchange {} {}",
                        e1.converged,
                        e2.converged,
                        x.converged(),
                        xb.converged
                    ),
                );
            }
            for (what, r) in checks {
                if !(r <= 1e-5) {
                    ok = false;
                }
                if r > worst.0 || r.is_nan() {
                    worst = (r, format!("{what} at OmegaT={gap}, L/T={l}"));
                }
            }
        }
    }
    let el = start.elapsed();
    let pass = ok && el <= Duration::from_secs(120);
    report(
        1,
        "oracle equivalence",
        pass,
        el,
        &format!("worst rel diff {:.3e} ({}), tol 1e-5", worst.0, worst.1),
    );
    assert!(pass);
}

#[test]
fn criterion_2_expanded_normalization() {
    let start = Instant::now();
    // Line integrals of the radial weights over p + q = w.
    let mut const_err: f64 = 0.0;
    for w in [0.5, 1.0, 3.0, 7.0] {
        let spec = IntegrationSpec::finite(0.0, w).with_rel_tol(1e-13);
        let c3 = integrate_1d(|p| p * (w - p), &spec).unwrap().value;
        let c5 = integrate_1d(|p| (p * (w - p)).powi(2), &spec)
            .unwrap()
            .value;
        const_err = const_err
            .max(rel(c3, w.powi(3) / 6.0))
            .max(rel(c5, w.powi(5) / 30.0));
    }
    // |x|^2 > eA eB with x = (1/6)[...] and e = (1/30) int w^5 gives the
    // expanded coefficient (1/30)^2 / (1/6)^2.
    let derived = (1.0f64 / 30.0).powi(2) / (1.0f64 / 6.0).powi(2);
    let printed = 1.0 / 25.0;
    let coeff_ok = rel(derived, printed) <= 1e-10;
    if !coeff_ok {
        info(2, &format!("erratum: derived right-hand coefficient {derived} differs from printed {printed}; raw condition governs"));
    } else {
        info(
            2,
            "no erratum: derived coefficients 6 and 1/25 match the printed expanded form",
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = KernelOptions::default();
    let (mut agree, mut pos) = (0, 0);
    let n = 20;
    for _ in 0..n {
        let l = rng.random_range(2.0..8.0);
        let g = GeometrySpec::new(l, 1.0);
        let wa = WindowProfile::gaussian(rng.random_range(0.5..2.0), 1.0)
            .with_modulation(rng.random_range(0.0..2.0));
        let wb = WindowProfile::gaussian(rng.random_range(0.5..2.0), 1.0);
        let (a, b) = g.place(
            wa,
            rng.random_range(0.0..6.0),
            wb,
            rng.random_range(0.0..6.0),
        );
        let raw = amplitudes(&a, &b, &g, FieldModel::DiracRight, &opts)
            .unwrap()
            .amplitudes;
        let ex = expanded_condition(&a, &b, &g, &opts).unwrap();
        let m = raw.margin().value;
        pos += usize::from(m > 0.0);
        agree += usize::from((m > 0.0) == (ex.margin() > 0.0));
    }
    let el = start.elapsed();
    let pass = const_err <= 1e-10 && coeff_ok && agree == n;
    report(
        2,
        "expanded-form normalization",
        pass,
        el,
        &format!("sign agreement {agree}/{n} ({pos} entangled), constants rel err {const_err:.1e}, coefficient 1/25 {}", if coeff_ok { "confirmed" } else { "differs" }),
    );
    assert!(pass);
}

#[test]
fn criterion_3_superoscillatory_distillation() {
    let start = Instant::now();
    let spec = SweepSpec::new(vec![5.0, 8.0], FieldModel::DiracRight);
    let mut found_all = true;
    let mut gauss_neg_all = true;
    let mut parts = Vec::new();
    for &l in &spec.grid {
        let r = optimize_window(&spec, l).unwrap();
        let best = r.best.unwrap();
        let g = gaussian_reference(l, 2.0, FieldModel::DiracRight, &spec).unwrap();
        found_all &= r.found;
        gauss_neg_all &= g.margin < 0.0;
        parts.push(format!(
            "L/T={l}: optimized margin {:.3e} +- {:.1e} after {} evals, Gaussian(OmegaT=2) margin {:.3e}",
            best.margin,
            best.margin_err,
            r.log.len(),
            g.margin
        ));
    }
    let el = start.elapsed();
    let pass = found_all && gauss_neg_all && el <= Duration::from_secs(600);
    report(
        3,
        "superoscillatory distillation",
        pass,
        el,
        &parts.join("; "),
    );

    let mut gs = spec.clone();
    gs.template = TemplateFamily::Gaussian;
    for &l in &gs.grid {
        let r = optimize_window(&gs, l).unwrap();
        let b = r.best.unwrap();
        info(
            3,
            &format!(
                "Gaussian template with free gaps at L/T={l}: margin {:.3e} +- {:.1e} at gaps ({:.3}, {:.3})",
                b.margin, b.margin_err, b.params.gap_a, b.params.gap_b
            ),
        );
    }
    assert!(pass);
}

#[test]
fn criterion_4_scaling_bound() {
    let start = Instant::now();
    let spec = SweepSpec::new(vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0], FieldModel::DiracRight);
    let table = sweep_negativity(&spec).unwrap();
    let fit = fit_sweep(&table);
    let el = start.elapsed();
    let negs: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{}:{:.2e}", r.l_over_t, r.negativity))
        .collect();
    let (pass, detail) = match &fit {
        Ok(f) => (
            f.p <= 2.3,
            format!(
                "fitted p = {:.4} (p=2 fit rms {:.2e}); negativities {}",
                f.p,
                f.fixed_p2.rms,
                negs.join(" ")
            ),
        ),
        Err(e) => (
            false,
            format!("no fit: {e}; negativities {}", negs.join(" ")),
        ),
    };
    let pass = pass && el <= Duration::from_secs(1800);
    report(4, "scaling bound", pass, el, &detail);
    assert!(pass);
}

#[test]
fn criterion_5_handedness() {
    let start = Instant::now();
    let opts = KernelOptions::default();
    let comb = WindowProfile::comb(
        1.0,
        1.0,
        SuperoscParams {
            order: 6,
            speedup: 2.0,
            smoothing: 0.02,
        },
    )
    .unwrap();
    let gauss = WindowProfile::gaussian(1.0, 1.0);
    let mut worst: f64 = 0.0;
    let mut neg_ok = true;
    for (wa, wb, gap, l) in [
        (gauss, gauss, 3.0, 5.0),
        (gauss, comb, 1.5, 3.0),
        (comb, comb, 0.5, 4.0),
    ] {
        let g = GeometrySpec::new(l, 1.0);
        let (a, b) = g.place(wa, gap, wb, gap);
        let r = amplitudes(&a, &b, &g, FieldModel::DiracRight, &opts)
            .unwrap()
            .amplitudes;
        let d = amplitudes(&a, &b, &g, FieldModel::DiracBoth, &opts)
            .unwrap()
            .amplitudes;
        let pairs = [
            (d.ea2, r.ea2),
            (d.eb2, r.eb2),
            (d.x_ab.re, r.x_ab.re),
            (d.x_ab.im, r.x_ab.im),
            (d.e_ab.re, r.e_ab.re),
            (d.e_ab.im, r.e_ab.im),
        ];
        for (dv, rv) in pairs {
            if rv != 0.0 {
                worst = worst.max(rel(dv, 2.0 * rv));
            } else if dv != 0.0 {
                worst = f64::INFINITY;
            }
        }
        // Normalize into the perturbative range before comparing negativities.
        let s = 0.01 / r.ea2.max(r.eb2);
        let (rs, ds) = (r.scaled(s), d.scaled(s));
        let (nr, nd) = (leading_order_negativity(&rs), leading_order_negativity(&ds));
        neg_ok &= if nr == 0.0 {
            nd == 0.0
        } else {
            rel(nd, 2.0 * nr) <= 1e-14
        };
    }
    let a = AmplitudeSet::new(
        0.003,
        0.004,
        Complex64::new(0.01, -0.002),
        Complex64::new(0.001, 0.0),
    );
    neg_ok &= leading_order_negativity(&a.scaled(2.0)) == 2.0 * leading_order_negativity(&a);
    let el = start.elapsed();
    let pass = worst <= 1e-14 && neg_ok;
    report(
        5,
        "handedness doubling",
        pass,
        el,
        &format!("worst rel diff {worst:.1e} (tol 1e-14), negativity doubles: {neg_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_ablation() {
    let start = Instant::now();
    let spec = SweepSpec::new(vec![3.0, 5.0, 8.0], FieldModel::DiracRight);
    let rep = ablation_study(&spec).unwrap();
    let full_all = rep.rows.iter().all(|r| r.full_found);
    let ablated_none = rep
        .rows
        .iter()
        .all(|r| !r.ablated_found && !(r.ablated_margin > 0.0));
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| {
            format!(
                "L/T={}: full {:.3e} ({}), ablated {:.3e} ({})",
                r.l_over_t, r.full_margin, r.full_found, r.ablated_margin, r.ablated_found
            )
        })
        .collect();
    let el = start.elapsed();
    let pass = full_all && ablated_none;
    report(
        6,
        "ablation",
        pass,
        el,
        &format!("ablated budget {}; {}", rep.ablated_budget, rows.join("; ")),
    );

    let mut gs = spec.clone();
    gs.template = TemplateFamily::Gaussian;
    for r in ablation_study(&gs).unwrap().rows {
        info(
            6,
            &format!(
                "Gaussian template at L/T={}: full margin {:.3e} ({}), ablated margin {:.3e} ({})",
                r.l_over_t, r.full_margin, r.full_found, r.ablated_margin, r.ablated_found
            ),
        );
    }
    assert!(pass);
}

#[test]
fn criterion_7_klein_gordon_baseline() {
    let start = Instant::now();
    let spec = SweepSpec::new(vec![5.0], FieldModel::KleinGordon);
    let rep = kg_baseline(&spec).unwrap();
    let row = rep.rows[0];
    let far = gaussian_reference(10.0, 2.0, FieldModel::KleinGordon, &spec).unwrap();
    let el = start.elapsed();
    let pass = row.superosc_found && far.margin < 0.0;
    report(
        7,
        "Klein-Gordon baseline",
        pass,
        el,
        &format!(
            "sin-targeted margin at L/T=5 {:.3e} +- {:.1e} (found {}), Gaussian margin at L/T=10 {:.3e}",
            row.superosc_margin, row.superosc_margin_err, row.superosc_found, far.margin
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_property_suites() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fails: Vec<&str> = Vec::new();

    // Spinors: unit norm, positive helicity, overlap (1 + p.q)/2.
    let mut spin_err: f64 = 0.0;
    for _ in 0..200 {
        let mut v = || {
            let p: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [p[0] / n, p[1] / n, p[2] / n]
        };
        let (p, q) = (v(), v());
        let forms: [(fn([f64; 3]) -> _, f64); 2] = [(spinor_r, 1.0), (spinor_l, -1.0)];
        for (f, sign) in forms {
            let u = f(p).unwrap();
            let w = f(q).unwrap();
            spin_err = spin_err.max((u[0].norm_sqr() + u[1].norm_sqr() - 1.0).abs());
            // sigma.p acting on u.
            let s0 = u[0] * p[2] + u[1] * Complex64::new(p[0], -p[1]);
            let s1 = u[0] * Complex64::new(p[0], p[1]) - u[1] * p[2];
            spin_err = spin_err
                .max((s0 - u[0] * sign).norm())
                .max((s1 - u[1] * sign).norm());
            let ov = (u[0].conj() * w[0] + u[1].conj() * w[1]).norm_sqr();
            let dot = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
            spin_err = spin_err.max((ov - 0.5 * (1.0 + dot)).abs());
        }
    }
    if spin_err > 1e-12 {
        fails.push("spinor identities");
    }

    // Windows: evenness of the transform and Parseval.
    let comb = WindowProfile::comb(
        1.3,
        1.0,
        SuperoscParams {
            order: 8,
            speedup: 3.0,
            smoothing: 0.015,
        },
    )
    .unwrap();
    let windows = [
        WindowProfile::gaussian(0.7, 1.0),
        WindowProfile::gaussian(1.0, 0.5).with_modulation(4.0),
        comb,
        comb.with_modulation(2.5),
    ];
    let mut even_err: f64 = 0.0;
    let mut pars_err: f64 = 0.0;
    for w in &windows {
        for _ in 0..100 {
            let nu = rng.random_range(0.0..60.0);
            let (a, b) = (w.eval_transform(nu), w.eval_transform(-nu));
            even_err = even_err.max((a - b).abs() / a.abs().max(1.0));
        }
        let te = w.time_extent();
        let time = integrate_1d(
            |t| w.eval_time(t).powi(2),
            &IntegrationSpec::finite(-te, te)
                .with_rel_tol(1e-10)
                .with_osc_scale(w.spectral_scale()),
        )
        .unwrap()
        .value;
        let nmax = 12.0 * w.spectral_scale() + w.modulation;
        let freq = integrate_1d(
            |nu| w.eval_transform(nu).powi(2),
            &IntegrationSpec::finite(-nmax, nmax)
                .with_rel_tol(1e-10)
                .with_osc_scale(1.0),
        )
        .unwrap()
        .value
            / (2.0 * std::f64::consts::PI);
        pars_err = pars_err.max(rel(freq, time));
    }
    if even_err > 1e-10 {
        fails.push("transform evenness");
    }
    if pars_err > 1e-6 {
        fails.push("Parseval");
    }

    // Condition ratio under t -> 2t, L -> 2L, Omega -> Omega/2.
    let opts = KernelOptions::default();
    let ratio = |scale: f64| {
        let g = GeometrySpec::new(4.0 * scale, scale);
        let w = WindowProfile::gaussian(1.0, scale);
        let (a, b) = g.place(w, 2.5 / scale, w, 3.0 / scale);
        let r = amplitudes(&a, &b, &g, FieldModel::DiracRight, &opts)
            .unwrap()
            .amplitudes;
        r.x_ab.norm_sqr() / (r.ea2 * r.eb2)
    };
    let scale_err = rel(ratio(2.0), ratio(1.0));
    if scale_err > 1e-10 {
        fails.push("scale invariance");
    }

    // PT block eigenvalues against a full eigensolve.
    let mut block_err: f64 = 0.0;
    for _ in 0..200 {
        let a = AmplitudeSet::new(
            rng.random_range(0.0..0.2),
            rng.random_range(0.0..0.2),
            Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
            Complex64::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
        );
        let m = assemble_pt(&a).unwrap();
        let mut full: Vec<f64> = m
            .matrix
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        full.sort_by(f64::total_cmp);
        let mut blocks = peres_test(&m).eigenvalues.to_vec();
        blocks.sort_by(f64::total_cmp);
        for (x, y) in blocks.iter().zip(&full) {
            block_err = block_err.max((x - y).abs());
        }
    }
    if block_err > 1e-12 {
        fails.push("PT block consistency");
    }

    // Determinism.
    let mut ds = SweepSpec::new(vec![4.0], FieldModel::DiracRight);
    ds.template = TemplateFamily::Gaussian;
    ds.budget = 40;
    ds.seed = 11;
    let r1 = serde_json::to_string(&optimize_window(&ds, 4.0).unwrap()).unwrap();
    let r2 = serde_json::to_string(&optimize_window(&ds, 4.0).unwrap()).unwrap();
    if r1 != r2 {
        fails.push("determinism");
    }

    let el = start.elapsed();
    let pass = fails.is_empty() && el <= Duration::from_secs(60);
    report(
        8,
        "property suites",
        pass,
        el,
        &format!(
            "spinor {spin_err:.1e}, evenness {even_err:.1e}, Parseval {pars_err:.1e}, scale {scale_err:.1e}, blocks {block_err:.1e}, determinism {}{}",
            r1 == r2,
            if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }
        ),
    );
    assert!(pass);
}
