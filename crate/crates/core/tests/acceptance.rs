//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use bergman_balance::bergman::{
    bergman_geodesic, ding_derivative, eval_fs_potential, fs_moment, functional_em,
    geodesic_sample, quantised_ding,
};
use bergman_balance::coupled::{
    check_lmrfmc, coupled_fs, coupled_moment, coupled_quantised_ding, CoupledForms, CoupledModel,
};
use bergman_balance::delta::{
    default_candidates, delta_m_toric, lattice_points, order, s_m, s_m_filtration, Rational,
};
use bergman_balance::linalg::{random_hermitian, CMat, C64};
use bergman_balance::model::ToricOptions;
use bergman_balance::polytope::{ReflexivePolytope, ToricValuation};
use bergman_balance::random::stream;
use bergman_balance::slope::{f_invariant, SlopeReport, SlopeSchedule};
use bergman_balance::soliton::{
    g_moment_residual, quantised_g_ding, solve_g_balanced, weight_decomposition, GFunction,
};
use bergman_balance::solver::{certify, solve_balanced, Method, SolverConfig, SolverStatus};
use bergman_balance::{GeodesicGenerator, HermitianForm, ManifoldModel};
use std::time::Instant;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn perturbed(n: usize, norm: f64, rng: &mut impl rand::Rng) -> HermitianForm {
    HermitianForm::new(CMat::identity(n, n) + random_hermitian(n, norm, rng)).unwrap()
}

fn diag(d: &[f64]) -> GeodesicGenerator {
    GeodesicGenerator::from_diagonal(d, false).unwrap()
}

/// 1. Balanced existence on the line, m = 2, 3, 4.
fn balanced_existence() -> Check {
    let mut worst_res = 0.0f64;
    let mut worst_osc = 0.0f64;
    let mut slowest = 0.0f64;
    for m in 2..=4u32 {
        let start = Instant::now();
        let model = ManifoldModel::p1(m, 4 * m as usize + 4).map_err(e2s)?;
        let n = model.basis_size();
        let mut rng = stream(1, &format!("existence-{m}"));
        for trial in 0..20 {
            let h0 = perturbed(n, 0.5, &mut rng);
            let out = solve_balanced(&model, &h0, &SolverConfig::default()).map_err(e2s)?;
            ensure(
                out.status == SolverStatus::Converged,
                format!("m={m} trial {trial}: {}", out.reason),
            )?;
            ensure(
                out.trace.rows.len() <= 201,
                format!("m={m} trial {trial}: too many iterations"),
            )?;
            let cert = certify(&model, &out.form, 1e-6).map_err(e2s)?;
            worst_res = worst_res.max(cert.moment_residual);
            worst_osc = worst_osc.max(cert.rho_oscillation);
        }
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }
    ensure(worst_res < 1e-8, format!("moment residual {worst_res:e}"))?;
    ensure(
        worst_osc < 1e-6,
        format!("Bergman oscillation {worst_osc:e}"),
    )?;
    ensure(slowest < 60.0, format!("slowest level took {slowest:.1}s"))?;
    Ok(format!(
        "residual {worst_res:.1e}, oscillation {worst_osc:.1e}, slowest m {slowest:.2}s"
    ))
}

/// 2. Convexity of ℒ and affinity of ℰₘ along random geodesics, m = 3.
fn convexity() -> Check {
    let model = ManifoldModel::p1(3, 48).map_err(e2s)?;
    let n = model.basis_size();
    let mut rng = stream(2, "convexity");
    let h = 0.25;
    let (mut min_l, mut max_e) = (f64::INFINITY, 0.0f64);
    for _ in 0..50 {
        let gen = GeodesicGenerator::new(random_hermitian(n, 1.0, &mut rng), false).map_err(e2s)?;
        let vals: Vec<(f64, f64)> = (0..=20)
            .map(|j| {
                let s = geodesic_sample(&model, &gen, j as f64 * h, false).unwrap();
                (s.l, s.em)
            })
            .collect();
        for w in vals.windows(3) {
            min_l = min_l.min(w[0].0 - 2.0 * w[1].0 + w[2].0);
            max_e = max_e.max((w[0].1 - 2.0 * w[1].1 + w[2].1).abs());
        }
    }
    ensure(min_l >= -1e-6, format!("second difference of L {min_l:e}"))?;
    ensure(max_e < 1e-12, format!("second difference of E_m {max_e:e}"))?;
    Ok(format!("min d2 L {min_l:.2e}, max |d2 E_m| {max_e:.1e}"))
}

/// 3. Ding derivative against central differences.
fn gradient_consistency() -> Check {
    let model = ManifoldModel::p1(3, 32).map_err(e2s)?;
    let n = model.basis_size();
    let mut rng = stream(3, "gradient");
    let dt = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let gen = GeodesicGenerator::new(random_hermitian(n, 1.0, &mut rng), false).map_err(e2s)?;
        let t: f64 = dt + 2.0 * rand::Rng::random::<f64>(&mut rng);
        let d = |s: f64| quantised_ding(&model, &bergman_geodesic(&gen, s).unwrap()).unwrap();
        let fd = (d(t + dt) - d(t - dt)) / (2.0 * dt);
        let an = ding_derivative(&model, &gen, t).map_err(e2s)?;
        worst = worst.max((fd - an).abs());
    }
    ensure(worst < 1e-6, format!("derivative mismatch {worst:e}"))?;
    Ok(format!("max mismatch {worst:.1e}"))
}

fn slope_fields(r: &SlopeReport) -> [f64; 3] {
    [r.f_invariant, r.ding_numeric, r.chow_numeric]
}

/// 4. Translation and gauge invariance.
fn translation_invariance() -> Check {
    let model = ManifoldModel::p1(2, 16).map_err(e2s)?;
    let mut rng = stream(4, "translation");
    let mut worst_d = 0.0f64;
    for _ in 0..20 {
        let h = perturbed(5, 0.5, &mut rng);
        let c: f64 = 4.0 * rand::Rng::random::<f64>(&mut rng) - 2.0;
        let a = quantised_ding(&model, &h).map_err(e2s)?;
        let b = quantised_ding(&model, &h.scale_exp(c)).map_err(e2s)?;
        worst_d = worst_d.max((a - b).abs());
    }
    let graded = ManifoldModel::p1_graded(2, 8, 30, 6).map_err(e2s)?;
    let schedule = SlopeSchedule::for_level(2);
    let base = [1.0, 0.0, 0.0, 0.0, 0.0];
    let r0 = f_invariant(&graded, &diag(&base), &schedule).map_err(e2s)?;
    let mut worst_s = 0.0f64;
    for c in [0.7, -1.3] {
        let shifted: Vec<f64> = base.iter().map(|x| x + c).collect();
        let r1 = f_invariant(&graded, &diag(&shifted), &schedule).map_err(e2s)?;
        for (x, y) in slope_fields(&r0).iter().zip(slope_fields(&r1)) {
            worst_s = worst_s.max((x - y).abs());
        }
    }
    ensure(worst_d < 1e-10, format!("Ding shift {worst_d:e}"))?;
    ensure(worst_s < 1e-10, format!("slope report shift {worst_s:e}"))?;
    Ok(format!("Ding {worst_d:.1e}, slopes {worst_s:.1e}"))
}

/// 5. Slope identities on the line, m = 2.
fn slope_identities() -> Check {
    let model = ManifoldModel::p1_graded(2, 8, 30, 6).map_err(e2s)?;
    let schedule = SlopeSchedule::for_level(2);
    let scalar = f_invariant(&model, &diag(&[0.8; 5]), &schedule).map_err(e2s)?;
    let aut = f_invariant(&model, &diag(&[4.0, 3.0, 2.0, 1.0, 0.0]), &schedule).map_err(e2s)?;
    let one = f_invariant(&model, &diag(&[1.0, 0.0, 0.0, 0.0, 0.0]), &schedule).map_err(e2s)?;
    ensure(
        scalar.f_invariant.abs() < 1e-10,
        format!("scalar generator f = {:e}", scalar.f_invariant),
    )?;
    ensure(
        aut.f_invariant.abs() < 1e-4,
        format!("automorphism generator f = {:e}", aut.f_invariant),
    )?;
    ensure(
        one.f_invariant > 1e-3,
        format!("one-sided generator f = {:e}", one.f_invariant),
    )?;
    ensure(
        one.extrapolation_gap < 1e-5,
        format!("extrapolation gap {:e}", one.extrapolation_gap),
    )?;
    Ok(format!(
        "f(cI) {:.1e}, f(aut) {:.1e}, f(e11) {:.8} (gap {:.1e})",
        scalar.f_invariant, aut.f_invariant, one.f_invariant, one.extrapolation_gap
    ))
}

/// 6. Instability of the blown-up plane at m = 1.
fn instability() -> Check {
    let start = Instant::now();
    let p = ReflexivePolytope::blowup_p2();
    let model = ManifoldModel::toric(&p, 1, 256, &ToricOptions::default()).map_err(e2s)?;
    // the symmetry axis of the polygon, towards the exceptional edge
    let xi = [1i64, 1];
    let weights: Vec<f64> = model
        .exponents()
        .ok_or("toric model has exponents")?
        .iter()
        .map(|u| (u[0] * xi[0] + u[1] * xi[1]) as f64)
        .collect();
    let neg: Vec<f64> = weights.iter().map(|w| -w).collect();
    let schedule = SlopeSchedule::for_level(1);
    let fa = f_invariant(&model, &diag(&weights), &schedule)
        .map_err(e2s)?
        .f_invariant;
    let fb = f_invariant(&model, &diag(&neg), &schedule)
        .map_err(e2s)?
        .f_invariant;
    ensure(
        (fa + fb).abs() < 1e-6,
        format!("f(A) + f(-A) = {:e}", fa + fb),
    )?;
    ensure(fa.abs() > 1e-3, format!("|f(A)| = {:e}", fa.abs()))?;
    // the destabilizing direction is the one with negative f
    let bad = if fa < 0.0 { &weights } else { &neg };
    let cfg = SolverConfig {
        method: Method::Gradient,
        max_iters: 400,
        ..SolverConfig::default()
    };
    // the drift is visible long before quadrature detail matters
    let coarse = ManifoldModel::toric(&p, 1, 96, &ToricOptions::default()).map_err(e2s)?;
    let out = solve_balanced(&coarse, &HermitianForm::identity(coarse.basis_size()), &cfg)
        .map_err(e2s)?;
    ensure(
        out.status == SolverStatus::Diverging,
        format!("gradient solver ended {:?}: {}", out.status, out.reason),
    )?;
    // the iterate drifts along H_t = exp(−2t A_bad): log H is a negative multiple of A_bad
    let logs: Vec<f64> = (0..model.basis_size())
        .map(|i| out.form.matrix()[(i, i)].re.ln())
        .collect();
    let mean_l = logs.iter().sum::<f64>() / logs.len() as f64;
    let mean_b = bad.iter().sum::<f64>() / bad.len() as f64;
    let cov: f64 = logs
        .iter()
        .zip(bad.iter())
        .map(|(l, b)| (l - mean_l) * (b - mean_b))
        .sum();
    let nl = logs
        .iter()
        .map(|l| (l - mean_l).powi(2))
        .sum::<f64>()
        .sqrt();
    let nb = bad.iter().map(|b| (b - mean_b).powi(2)).sum::<f64>().sqrt();
    let corr = -cov / (nl * nb);
    ensure(
        corr > 0.9,
        format!("drift correlation with the destabilizing ray {corr:.3}"),
    )?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.0}s"))?;
    Ok(format!(
        "f(A) {fa:.8}, f(-A) {fb:.8}, solver: {} (corr {corr:.3}), {secs:.1}s",
        out.reason
    ))
}

/// 7. Coupled measure identity and the single-factor reduction.
fn coupled_identity() -> Check {
    let cm = CoupledModel::p1(2, &[1, 1], 16).map_err(e2s)?;
    let mut rng = stream(7, "coupled");
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let forms = CoupledForms {
            forms: vec![perturbed(3, 0.5, &mut rng), perturbed(3, 0.5, &mut rng)],
        };
        worst = worst.max(check_lmrfmc(&cm, &forms).map_err(e2s)?);
    }
    let single = CoupledModel::p1(2, &[2], 16).map_err(e2s)?;
    let plain = ManifoldModel::p1(2, 16).map_err(e2s)?;
    let mut red = 0.0f64;
    for _ in 0..5 {
        let h = perturbed(5, 0.5, &mut rng);
        let forms = CoupledForms {
            forms: vec![h.clone()],
        };
        let a = coupled_fs(&single, &forms).map_err(e2s)?;
        let b = eval_fs_potential(&plain, &h).map_err(e2s)?;
        red = red.max(
            a.values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        );
        let d1 = coupled_quantised_ding(&single, &forms).map_err(e2s)?;
        red = red.max((d1 - quantised_ding(&plain, &h).map_err(e2s)?).abs());
        let m1 = &coupled_moment(&single, &forms).map_err(e2s)?.moments[0];
        red = red.max((m1 - fs_moment(&plain, &h).map_err(e2s)?.moment).norm());
    }
    ensure(
        worst < 1e-10,
        format!("measure identity residual {worst:e}"),
    )?;
    ensure(red < 1e-12, format!("single-factor reduction {red:e}"))?;
    let corrupted = cm.with_corrupted_correction(|p| if p % 7 == 0 { 0.05 } else { 0.0 });
    let forms = CoupledForms::reference(&cm);
    let neg = check_lmrfmc(&corrupted, &forms).map_err(e2s)?;
    ensure(
        neg > 1e-3,
        format!("corrupted correction not detected ({neg:e})"),
    )?;
    Ok(format!(
        "identity {worst:.1e}, reduction {red:.1e}, negative control {neg:.1e}"
    ))
}

/// 8. g-soliton reduction and a nonconstant g.
fn soliton() -> Check {
    let model = ManifoldModel::p1(3, 16).map_err(e2s)?;
    let dec = weight_decomposition(&model).map_err(e2s)?;
    let one = GFunction::one();
    let mut rng = stream(8, "soliton");
    let n = model.basis_size();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let d: Vec<f64> = (0..n)
            .map(|_| 0.5 + rand::Rng::random::<f64>(&mut rng))
            .collect();
        let h = HermitianForm::new(CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            d.iter().map(|x| C64::from(*x)),
        )))
        .map_err(e2s)?;
        let a = quantised_g_ding(&model, &h, &one, &dec).map_err(e2s)?;
        worst = worst.max((a - quantised_ding(&model, &h).map_err(e2s)?).abs());
        let (r, _) = g_moment_residual(&model, &h, &one, &dec).map_err(e2s)?;
        worst = worst.max((r - fs_moment(&model, &h).map_err(e2s)?.residual()).norm());
        worst = worst.max(
            (bergman_balance::soliton::functional_egm(&h, &one, &dec, 3).map_err(e2s)?
                - functional_em(&h, 3).map_err(e2s)?)
            .abs(),
        );
        let cfg = SolverConfig::default();
        let gs = solve_g_balanced(&model, &one, &dec, &h, &cfg).map_err(e2s)?;
        let ps = solve_balanced(&model, &h, &cfg).map_err(e2s)?;
        worst = worst.max((gs.form.matrix() - ps.form.matrix()).norm());
    }
    ensure(worst < 1e-12, format!("g = 1 reduction {worst:e}"))?;
    let g = GFunction::Quadratic {
        base: 1.0,
        curvature: 0.3,
        center: vec![1.0],
    };
    let out = solve_g_balanced(
        &model,
        &g,
        &dec,
        &HermitianForm::identity(n),
        &SolverConfig::default(),
    )
    .map_err(e2s)?;
    let (_, res) = g_moment_residual(&model, &out.form, &g, &dec).map_err(e2s)?;
    ensure(out.status == SolverStatus::Converged, out.reason.clone())?;
    ensure(res < 1e-8, format!("g-moment residual {res:e}"))?;
    Ok(format!(
        "reduction {worst:.1e}, g-moment residual {res:.1e} for g = 1 + 0.3 (x - 1)^2"
    ))
}

/// 9. Lattice counting for δₘ.
fn delta_counting() -> Check {
    let line = ReflexivePolytope::projective_line();
    for m in 1..=20 {
        let d = delta_m_toric(&line, m, &default_candidates(&line, 3)).map_err(e2s)?;
        ensure(
            d.value == Rational::from_integer(1),
            format!("delta_{m}(P1) = {}", d.value),
        )?;
    }
    let p2 = ReflexivePolytope::projective_plane();
    let mut checked = 0;
    for m in 1..=5 {
        for v in default_candidates(&p2, 3) {
            ensure(
                s_m(&p2, m, &v).map_err(e2s)? == s_m_filtration(&p2, m, &v).map_err(e2s)?,
                format!("S_{m}({v}) on P2"),
            )?;
            checked += 1;
        }
    }
    let bl = ReflexivePolytope::blowup_p2();
    let cands = default_candidates(&bl, 3);
    let mut table = Vec::new();
    for m in 1..=6 {
        let d = delta_m_toric(&bl, m, &cands).map_err(e2s)?;
        table.push(format!("m={m}: {} at {}", d.value, d.argmin));
        for name in ["p1", "p2", "p1xp1", "bl1p2"] {
            let p = ReflexivePolytope::named(name).map_err(e2s)?;
            for v in default_candidates(&p, 3) {
                let ords: Vec<i64> = lattice_points(&p, m)
                    .iter()
                    .map(|u| order(&p, m, u, &v))
                    .collect();
                let lhs: i64 = ords.iter().sum();
                let rhs: i64 = (1..=ords.iter().copied().max().unwrap_or(0))
                    .map(|j| ords.iter().filter(|&&o| o >= j).count() as i64)
                    .sum();
                ensure(
                    lhs == rhs,
                    format!("filtration identity at {name}, m={m}, v={v}"),
                )?;
            }
        }
    }
    let _ = ToricValuation::new(vec![1, 0]).map_err(e2s)?;
    Ok(format!(
        "{checked} exact S_m matches on P2; Bl1P2 toric upper bounds {}",
        table.join(", ")
    ))
}

/// 10. Byte-identical outputs under a fixed seed.
fn determinism() -> Check {
    let run = || -> Result<String, String> {
        let model = ManifoldModel::p1(3, 16).map_err(e2s)?;
        let mut rng = stream(10, "determinism");
        let h = perturbed(7, 0.5, &mut rng);
        let out = solve_balanced(&model, &h, &SolverConfig::default()).map_err(e2s)?;
        let graded = ManifoldModel::p1_graded(2, 8, 30, 6).map_err(e2s)?;
        let r = f_invariant(
            &graded,
            &diag(&[1.0, 0.0, 0.0, 0.0, 0.0]),
            &SlopeSchedule::for_level(2),
        )
        .map_err(e2s)?;
        Ok(format!(
            "{}{}{}",
            out.trace.to_csv(),
            bergman_balance::io::form_to_json(&out.form),
            serde_json::to_string(&r).map_err(e2s)?
        ))
    };
    let a = run()?;
    let b = run()?;
    ensure(a == b, "outputs differ between runs")?;
    Ok(format!("{} identical bytes", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("balanced existence", balanced_existence),
        ("convexity", convexity),
        ("gradient consistency", gradient_consistency),
        ("translation invariance", translation_invariance),
        ("slope identities", slope_identities),
        ("instability", instability),
        ("coupled measure identity", coupled_identity),
        ("g-soliton", soliton),
        ("delta lattice counting", delta_counting),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS criterion {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name} [{secs:.1}s]: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
