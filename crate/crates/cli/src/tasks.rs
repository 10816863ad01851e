//! One function per task. Each reads its own section of the config.

use crate::{invariants, CliError, ExperimentConfig, Status, TaskOutput};
use bergman_balance::bergman::quantised_ding;
use bergman_balance::coupled::{
    coupled_moment, coupled_quantised_ding, coupled_slope, solve_coupled_balanced, CoupledForms,
    CoupledModel,
};
use bergman_balance::delta::{default_candidates, delta_m_toric, DELTA_CSV_HEADER};
use bergman_balance::io::{
    form_from_json, form_to_json, generator_from_json, parse_polytope, MatrixJson,
};
use bergman_balance::linalg::{random_hermitian, CMat};
use bergman_balance::model::ToricOptions;
use bergman_balance::polytope::ReflexivePolytope;
use bergman_balance::random::stream;
use bergman_balance::slope::{f_invariant, SlopeSchedule};
use bergman_balance::soliton::{
    g_moment_residual, gbar, quantised_g_ding, solve_g_balanced, weight_decomposition, GFunction,
};
use bergman_balance::solver::{certify, solve_balanced, SolverConfig, SolverStatus};
use bergman_balance::{GeodesicGenerator, HermitianForm, ManifoldModel};
use serde_json::{json, Value};

type Out = Result<TaskOutput, CliError>;

pub fn dispatch(cfg: &ExperimentConfig, task: &str) -> Out {
    match task {
        "solve-balanced" => solve(cfg),
        "certify" => certify_task(cfg),
        "slope" => slope(cfg),
        "soliton-solve" => soliton(cfg),
        "coupled-solve" => coupled_solve(cfg),
        "coupled-slope" => coupled_slope_task(cfg),
        "delta-toric" => delta(cfg),
        "check-invariants" => invariants::run(cfg),
        other => Err(CliError::Input(format!("unknown task {other:?}"))),
    }
}

/// A polytope given by name (`p1`, `p2`, `p1xp1`, `bl1p2`) or by vertex file.
pub fn polytope(cfg: &ExperimentConfig) -> Result<ReflexivePolytope, CliError> {
    let name: String = cfg.require("model", "polytope")?;
    if let Ok(p) = ReflexivePolytope::named(&name) {
        return Ok(p);
    }
    let path = cfg.path("model", "polytope")?.expect("key present");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(ReflexivePolytope::new(parse_polytope(&text)?)?)
}

pub fn level(cfg: &ExperimentConfig) -> Result<u32, CliError> {
    cfg.require("model", "m")
}

pub fn model(cfg: &ExperimentConfig) -> Result<ManifoldModel, CliError> {
    let m = level(cfg)?;
    let kind: String = cfg.get_or("model", "kind", "p1".to_string())?;
    let model = match kind.as_str() {
        "p1" => {
            let res = cfg.get_or("model", "resolution", 4 * m as usize + 4)?;
            ManifoldModel::p1(m, res)?
        }
        "p1-graded" => {
            let min = 2 * m as usize + 2;
            ManifoldModel::p1_graded(
                m,
                cfg.get_or("model", "per_panel", min.max(8))?,
                cfg.get_or("model", "panels", 30)?,
                cfg.get_or("model", "azimuth", min)?,
            )?
        }
        "toric" => {
            let opts = ToricOptions {
                radius: cfg.get("model", "radius")?,
                angles: cfg.get("model", "angles")?,
            };
            ManifoldModel::toric(
                &polytope(cfg)?,
                m,
                cfg.get_or("model", "resolution", 64)?,
                &opts,
            )?
        }
        other => return Err(CliError::Input(format!("unknown model kind {other:?}"))),
    };
    Ok(model)
}

fn model_json(model: &ManifoldModel) -> Value {
    serde_json::to_value(model.metadata()).expect("metadata serializes")
}

pub fn solver_config(cfg: &ExperimentConfig) -> Result<SolverConfig, CliError> {
    let d = SolverConfig::default();
    let method = match cfg.raw("solver", "method") {
        Some(s) => s.parse()?,
        None => d.method,
    };
    let c = SolverConfig {
        method,
        max_iters: cfg.get_or("solver", "max_iters", d.max_iters)?,
        residual_tol: cfg.get_or("solver", "tol", d.residual_tol)?,
        step_size: cfg.get_or("solver", "step_size", d.step_size)?,
        damping: cfg.get_or("solver", "damping", d.damping)?,
        gauge: cfg.get_or("solver", "gauge", d.gauge)?,
        seed: cfg.seed()?,
        ding_floor: cfg.get_or("solver", "ding_floor", d.ding_floor)?,
        growth_window: cfg.get_or("solver", "growth_window", d.growth_window)?,
        stall_window: cfg.get_or("solver", "stall_window", d.stall_window)?,
        stall_tolerance: cfg.get_or("solver", "stall_tolerance", d.stall_tolerance)?,
    };
    c.validate()?;
    Ok(c)
}

fn solver_tolerances(c: &SolverConfig) -> Value {
    json!({
        "residual_tol": c.residual_tol,
        "oscillation_tol": 10.0 * c.residual_tol,
        "ding_floor": c.ding_floor,
        "growth_window": c.growth_window,
        "stall_window": c.stall_window,
        "stall_tolerance": c.stall_tolerance,
    })
}

/// Starting form: a JSON file, or the reference form plus a seeded random
/// hermitian perturbation of norm `[solver] perturbation`.
fn initial_form(cfg: &ExperimentConfig, n: usize, label: &str) -> Result<HermitianForm, CliError> {
    if let Some(p) = cfg.path("solver", "init")? {
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Input(e.to_string()))?;
        let h = form_from_json(&text)?;
        if h.dim() != n {
            return Err(CliError::Input(format!(
                "initial form has size {}, expected {n}",
                h.dim()
            )));
        }
        return Ok(h);
    }
    let eps: f64 = cfg.get_or("solver", "perturbation", 0.0)?;
    if eps == 0.0 {
        return Ok(HermitianForm::identity(n));
    }
    let mut rng = stream(cfg.seed()?, label);
    Ok(HermitianForm::new(
        CMat::identity(n, n) + random_hermitian(n, eps, &mut rng),
    )?)
}

fn status_of(s: SolverStatus) -> Status {
    if s == SolverStatus::Converged {
        Status::Ok
    } else {
        Status::NonConvergence
    }
}

fn solve(cfg: &ExperimentConfig) -> Out {
    let model = model(cfg)?;
    let sc = solver_config(cfg)?;
    let h0 = initial_form(cfg, model.basis_size(), "solve-balanced/init")?;
    let out = solve_balanced(&model, &h0, &sc)?;
    let cert = certify(&model, &out.form, 10.0 * sc.residual_tol)?;
    let last = out.trace.rows.last();
    Ok(TaskOutput {
        status: status_of(out.status),
        model: model_json(&model),
        tolerances: solver_tolerances(&sc),
        result: json!({
            "converged": out.status == SolverStatus::Converged,
            "solver_status": out.status,
            "reason": out.reason,
            "method": sc.method,
            "iterations": out.trace.rows.len().saturating_sub(1),
            "ding": last.map(|r| r.ding),
            "certificate": cert,
            "form": MatrixJson::from_matrix(out.form.matrix()),
        }),
        files: vec![
            ("trace.csv".into(), out.trace.to_csv()),
            ("form.json".into(), form_to_json(&out.form) + "\n"),
        ],
    })
}

fn certify_task(cfg: &ExperimentConfig) -> Out {
    let model = model(cfg)?;
    let tol: f64 = cfg.get_or("certify", "tol", 1e-8)?;
    let h = match cfg.path("certify", "form")? {
        Some(p) => form_from_json(
            &std::fs::read_to_string(&p).map_err(|e| CliError::Input(e.to_string()))?,
        )?,
        None => HermitianForm::identity(model.basis_size()),
    };
    if h.dim() != model.basis_size() {
        return Err(CliError::Input(format!(
            "form has size {}, expected {}",
            h.dim(),
            model.basis_size()
        )));
    }
    let cert = certify(&model, &h, tol)?;
    Ok(TaskOutput {
        status: if cert.balanced {
            Status::Ok
        } else {
            Status::ValidationFailure
        },
        model: model_json(&model),
        tolerances: json!({ "tol": tol }),
        result: json!({ "certificate": cert, "ding": quantised_ding(&model, &h)? }),
        files: vec![],
    })
}

fn schedule(cfg: &ExperimentConfig, m: u32) -> Result<SlopeSchedule, CliError> {
    let d = SlopeSchedule::for_level(m);
    Ok(SlopeSchedule {
        t_start: cfg.get_or("slope", "t_start", d.t_start)?,
        t_max: cfg.get_or("slope", "t_max", d.t_max)?,
        gap_tol: cfg.get_or("slope", "gap_tol", d.gap_tol)?,
        monotone_tol: cfg.get_or("slope", "monotone_tol", d.monotone_tol)?,
    })
}

fn schedule_json(s: &SlopeSchedule) -> Value {
    json!({ "t_start": s.t_start, "t_max": s.t_max, "gap_tol": s.gap_tol, "monotone_tol": s.monotone_tol })
}

/// Generator from `generator` (JSON file), `eigenvalues` (diagonal) or
/// `torus` (the one-parameter subgroup with that cocharacter).
fn generator(
    cfg: &ExperimentConfig,
    section: &str,
    suffix: &str,
    model: Option<&ManifoldModel>,
) -> Result<GeodesicGenerator, CliError> {
    let integral: bool = cfg.get_or(section, "integral", false)?;
    if let Some(p) = cfg.path(section, &format!("generator{suffix}"))? {
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Input(e.to_string()))?;
        return Ok(generator_from_json(&text)?);
    }
    if let Some(ev) = cfg.list::<f64>(section, &format!("eigenvalues{suffix}"))? {
        return Ok(GeodesicGenerator::from_diagonal(&ev, integral)?);
    }
    if let (Some(xi), Some(model)) = (cfg.list::<i64>(section, &format!("torus{suffix}"))?, model) {
        let w = model
            .torus_weights()
            .ok_or_else(|| CliError::Input("model has no torus action".into()))?;
        if w.first().map(Vec::len) != Some(xi.len()) {
            return Err(CliError::Input(format!(
                "torus cocharacter needs {} entries",
                w[0].len()
            )));
        }
        let d: Vec<f64> = w
            .iter()
            .map(|u| u.iter().zip(&xi).map(|(a, b)| a * b).sum::<i64>() as f64)
            .collect();
        return Ok(GeodesicGenerator::from_diagonal(&d, true)?);
    }
    Err(CliError::Input(format!(
        "[{section}] needs generator{suffix}, eigenvalues{suffix} or torus{suffix}"
    )))
}

fn slope(cfg: &ExperimentConfig) -> Out {
    let model = model(cfg)?;
    let gen = generator(cfg, "slope", "", Some(&model))?;
    if gen.dim() != model.basis_size() {
        return Err(CliError::Input(format!(
            "generator has size {}, expected {}",
            gen.dim(),
            model.basis_size()
        )));
    }
    let sched = schedule(cfg, model.m())?;
    let r = f_invariant(&model, &gen, &sched)?;
    let status = if r.extrapolation_gap < sched.gap_tol {
        Status::Ok
    } else {
        Status::NonConvergence
    };
    let samples = r.samples_csv();
    Ok(TaskOutput {
        status,
        model: model_json(&model),
        tolerances: schedule_json(&sched),
        result: serde_json::to_value(&r).expect("slope report serializes"),
        files: vec![("slope_samples.csv".into(), samples)],
    })
}

/// `g` from `[soliton]`: `g = constant | affine | exponential | quadratic | tabulated`
/// with the matching parameter keys.
pub fn g_function(cfg: &ExperimentConfig) -> Result<GFunction, CliError> {
    let s = "soliton";
    let kind: String = cfg.get_or(s, "g", "constant".to_string())?;
    let list = |k: &str| -> Result<Vec<f64>, CliError> {
        cfg.list(s, k)?
            .ok_or_else(|| CliError::Input(format!("missing [{s}] {k}")))
    };
    Ok(match kind.as_str() {
        "constant" => GFunction::Constant {
            value: cfg.get_or(s, "value", 1.0)?,
        },
        "affine" => GFunction::Affine {
            c0: cfg.require(s, "c0")?,
            c: list("c")?,
        },
        "exponential" => GFunction::Exponential {
            scale: cfg.get_or(s, "scale", 1.0)?,
            rate: list("rate")?,
            center: list("center")?,
        },
        "quadratic" => GFunction::Quadratic {
            base: cfg.get_or(s, "base", 1.0)?,
            curvature: cfg.require(s, "curvature")?,
            center: list("center")?,
        },
        "tabulated" => GFunction::Tabulated {
            nodes: list("nodes")?,
            values: list("values")?,
        },
        other => return Err(CliError::Input(format!("unknown g {other:?}"))),
    })
}

fn soliton(cfg: &ExperimentConfig) -> Out {
    let model = model(cfg)?;
    let g = g_function(cfg)?;
    let dec = weight_decomposition(&model)?;
    let sc = solver_config(cfg)?;
    let out = solve_g_balanced(
        &model,
        &g,
        &dec,
        &HermitianForm::identity(model.basis_size()),
        &sc,
    )?;
    let (_, residual) = g_moment_residual(&model, &out.form, &g, &dec)?;
    Ok(TaskOutput {
        status: status_of(out.status),
        model: model_json(&model),
        tolerances: solver_tolerances(&sc),
        result: json!({
            "converged": out.status == SolverStatus::Converged,
            "solver_status": out.status,
            "reason": out.reason,
            "g": g,
            "gbar": gbar(&g, &dec, model.m())?,
            "block_sizes": dec.multiplicities(),
            "g_moment_residual": residual,
            "g_ding": quantised_g_ding(&model, &out.form, &g, &dec)?,
            "form": MatrixJson::from_matrix(out.form.matrix()),
        }),
        files: vec![("trace.csv".into(), out.trace.to_csv())],
    })
}

fn coupled_model(cfg: &ExperimentConfig) -> Result<(CoupledModel, Value), CliError> {
    let m = level(cfg)?;
    let degrees = cfg.list::<u32>("coupled", "degrees")?.unwrap_or(vec![1, 1]);
    let kind: String = cfg.get_or("model", "kind", "p1".to_string())?;
    let min = 2 * m as usize + 2;
    let (cm, grid) = match kind.as_str() {
        "p1" => {
            let res = cfg.get_or("model", "resolution", 4 * m as usize + 4)?;
            let cm = CoupledModel::p1(m, &degrees, res)?;
            (
                cm,
                json!({ "kind": "p1", "polar_nodes": res, "azimuth_nodes": res, "polar_exactness_degree": 2 * res - 1 }),
            )
        }
        "p1-graded" => {
            let (pp, panels, az) = (
                cfg.get_or("model", "per_panel", min.max(8))?,
                cfg.get_or("model", "panels", 30usize)?,
                cfg.get_or("model", "azimuth", min)?,
            );
            let cm = CoupledModel::p1_graded(m, &degrees, pp, panels, az)?;
            (
                cm,
                json!({ "kind": "p1-graded", "per_panel": pp, "panels_per_pole": panels, "azimuth_nodes": az, "polar_exactness_degree": 2 * pp - 1 }),
            )
        }
        other => {
            return Err(CliError::Input(format!(
                "coupled tasks support p1 and p1-graded, not {other:?}"
            )))
        }
    };
    let meta = json!({
        "m": m,
        "degrees": degrees,
        "basis_sizes": cm.basis_sizes(),
        "grid_points": cm.len(),
        "grid": grid,
        "max_correction": cm.correction().iter().fold(0.0f64, |a, x| a.max(x.abs())),
    });
    Ok((cm, meta))
}

fn coupled_solve(cfg: &ExperimentConfig) -> Out {
    let (cm, meta) = coupled_model(cfg)?;
    let sc = solver_config(cfg)?;
    let mut forms = Vec::new();
    for (i, n) in cm.basis_sizes().into_iter().enumerate() {
        forms.push(initial_form(cfg, n, &format!("coupled-solve/init-{i}"))?);
    }
    let out = solve_coupled_balanced(&cm, &CoupledForms { forms }, &sc)?;
    let residuals: Vec<f64> = coupled_moment(&cm, &out.forms)?
        .residuals()
        .iter()
        .map(|r| r.norm())
        .collect();
    Ok(TaskOutput {
        status: status_of(out.status),
        model: meta,
        tolerances: solver_tolerances(&sc),
        result: json!({
            "converged": out.status == SolverStatus::Converged,
            "solver_status": out.status,
            "reason": out.reason,
            "sweeps": out.trace.rows.last().map(|r| r.sweep),
            "ding": coupled_quantised_ding(&cm, &out.forms)?,
            "factor_residuals": residuals,
            "forms": out.forms.forms.iter().map(|h| MatrixJson::from_matrix(h.matrix())).collect::<Vec<_>>(),
        }),
        files: vec![("trace.csv".into(), out.trace.to_csv())],
    })
}

fn coupled_slope_task(cfg: &ExperimentConfig) -> Out {
    let (cm, meta) = coupled_model(cfg)?;
    let mut gens = Vec::new();
    for (i, n) in cm.basis_sizes().into_iter().enumerate() {
        let g = generator(cfg, "coupled", &format!("_{}", i + 1), None)?;
        if g.dim() != n {
            return Err(CliError::Input(format!(
                "generator {} has size {}, expected {n}",
                i + 1,
                g.dim()
            )));
        }
        gens.push(g);
    }
    let sched = schedule(cfg, cm.m())?;
    let r = coupled_slope(&cm, &gens, &sched)?;
    let mut csv = String::from("t,dL/dt,dE/dt\n");
    for s in &r.samples {
        csv.push_str(&format!("{:e},{:e},{:e}\n", s.t, s.dl_dt, s.de_dt));
    }
    Ok(TaskOutput {
        status: if r.gap < sched.gap_tol {
            Status::Ok
        } else {
            Status::NonConvergence
        },
        model: meta,
        tolerances: schedule_json(&sched),
        result: serde_json::to_value(&r).expect("coupled slope serializes"),
        files: vec![("slope_samples.csv".into(), csv)],
    })
}

fn delta(cfg: &ExperimentConfig) -> Out {
    let p = polytope(cfg)?;
    let m_min: u32 = cfg.get_or("delta", "m_min", 1)?;
    let m_max: u32 = cfg.get_or("delta", "m_max", 6)?;
    let bound: i64 = cfg.get_or("delta", "bound", 3)?;
    if m_min == 0 || m_max < m_min || bound < 1 {
        return Err(CliError::Input(
            "need 1 <= m_min <= m_max and bound >= 1".into(),
        ));
    }
    let candidates = default_candidates(&p, bound);
    let mut csv = String::from(DELTA_CSV_HEADER);
    let mut rows = Vec::new();
    for m in m_min..=m_max {
        let r = delta_m_toric(&p, m, &candidates)?;
        csv.push_str(&r.csv_rows());
        rows.push(json!({
            "m": m,
            "delta_m": r.value.to_string(),
            "delta_m_float": *r.value.numer() as f64 / *r.value.denom() as f64,
            "argmin": r.argmin,
            "label": r.label,
        }));
    }
    Ok(TaskOutput {
        status: Status::Ok,
        model: json!({ "polytope": p.vertices(), "rank": p.rank(), "lattice_points": p.lattice_points(1).len() }),
        tolerances: json!({ "arithmetic": "exact rational", "candidate_bound": bound, "candidates": candidates.len() }),
        result: json!({ "levels": rows }),
        files: vec![("delta.csv".into(), csv)],
    })
}
