//! Invariant suite across all modules, with measured residuals.
//!
//! `[invariants] inject = energy-sign` flips the sign of `ℰₘ` inside the Ding
//! functional under test. It exists so the suite can be shown to catch a
//! broken energy: the supporting-line form of convexity then fails along the
//! scalar directions.

use crate::{CliError, ExperimentConfig, Status, TaskOutput};
use bergman_balance::bergman::{bergman_geodesic, ding_derivative, functional_em, quantised_ding};
use bergman_balance::coupled::{check_lmrfmc, CoupledForms, CoupledModel};
use bergman_balance::delta::{default_candidates, s_m, s_m_filtration};
use bergman_balance::linalg::{random_hermitian, CMat};
use bergman_balance::polytope::ReflexivePolytope;
use bergman_balance::random::stream;
use bergman_balance::slope::{f_invariant, SlopeSchedule};
use bergman_balance::soliton::{quantised_g_ding, weight_decomposition, GFunction};
use bergman_balance::solver::certify;
use bergman_balance::{GeodesicGenerator, HermitianForm, ManifoldModel, Result};
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    None,
    EnergySign,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    /// `measured <= tol` passes, except for lower bounds where `measured >= -tol` does.
    pub tol: f64,
    pub pass: bool,
}

fn upper(name: &'static str, measured: f64, tol: f64) -> Check {
    Check {
        name,
        measured,
        tol,
        pass: measured <= tol,
    }
}

fn lower(name: &'static str, measured: f64, tol: f64) -> Check {
    Check {
        name,
        measured,
        tol,
        pass: measured >= -tol,
    }
}

struct Ding<'a> {
    model: &'a ManifoldModel,
    sign: f64,
}

impl Ding<'_> {
    fn energy(&self, h: &HermitianForm) -> Result<f64> {
        Ok(self.sign * functional_em(h, self.model.m())?)
    }

    fn at(&self, h: &HermitianForm) -> Result<f64> {
        // quantised_ding = L − ℰₘ, so L is recovered by adding ℰₘ back
        let l = quantised_ding(self.model, h)? + functional_em(h, self.model.m())?;
        Ok(l - self.energy(h)?)
    }
}

fn probe_generators(n: usize, count: usize, seed: u64) -> Result<Vec<GeodesicGenerator>> {
    let mut rng = stream(seed, "invariants/generators");
    let mut gens = vec![
        GeodesicGenerator::from_diagonal(&vec![1.0; n], true)?,
        GeodesicGenerator::from_diagonal(&vec![-1.0; n], true)?,
    ];
    for _ in 0..count {
        gens.push(GeodesicGenerator::new(
            random_hermitian(n, 1.0, &mut rng),
            false,
        )?);
    }
    Ok(gens)
}

fn perturbed(n: usize, rng: &mut impl rand::Rng) -> Result<HermitianForm> {
    HermitianForm::new(CMat::identity(n, n) + random_hermitian(n, 0.5, rng))
}

/// Runs every check on a `ℙ¹` model of level `[invariants] m`.
pub fn suite(cfg: &ExperimentConfig) -> std::result::Result<Vec<Check>, CliError> {
    let m: u32 = cfg.get_or("invariants", "m", 3)?;
    let res: usize = cfg.get_or("invariants", "resolution", 4 * m as usize + 4)?;
    let count: usize = cfg.get_or("invariants", "geodesics", 10)?;
    let seed = cfg.seed()?;
    let inject = match cfg.raw("invariants", "inject").unwrap_or("none") {
        "none" => Injection::None,
        "energy-sign" => Injection::EnergySign,
        other => return Err(CliError::Input(format!("unknown injection {other:?}"))),
    };
    let model = ManifoldModel::p1(m, res)?;
    let n = model.basis_size();
    let ding = Ding {
        model: &model,
        sign: if inject == Injection::EnergySign {
            -1.0
        } else {
            1.0
        },
    };
    let gens = probe_generators(n, count, seed)?;
    let mut out = Vec::new();

    let mass: f64 = model.reference_masses().iter().sum();
    out.push(upper("reference-mass", (mass - 1.0).abs(), 1e-12));

    let cert = certify(&model, &HermitianForm::identity(n), 1e-8)?;
    out.push(upper("reference-balanced", cert.moment_residual, 1e-8));

    let mut rng = stream(seed, "invariants/forms");
    let mut shift = 0.0f64;
    for k in 0..count {
        let h = perturbed(n, &mut rng)?;
        let c = k as f64 * 0.37 - 1.5;
        shift = shift.max((ding.at(&h)? - ding.at(&h.scale_exp(c))?).abs());
    }
    out.push(upper("ding-translation", shift, 1e-10));

    // second differences on t ∈ [0, 5] and the supporting line at t = 0
    let h = 0.25;
    let (mut affine, mut convex, mut support) = (0.0f64, f64::INFINITY, f64::INFINITY);
    for gen in &gens {
        let e = |t: f64| ding.energy(&bergman_geodesic(gen, t)?);
        let d = |t: f64| ding.at(&bergman_geodesic(gen, t)?);
        let es: Vec<f64> = (0..=20).map(|j| e(j as f64 * h)).collect::<Result<_>>()?;
        let ds: Vec<f64> = (0..=20).map(|j| d(j as f64 * h)).collect::<Result<_>>()?;
        for j in 0..19 {
            affine = affine.max((es[j] - 2.0 * es[j + 1] + es[j + 2]).abs());
            convex = convex.min(ds[j] - 2.0 * ds[j + 1] + ds[j + 2]);
        }
        let d0 = ding_derivative(&model, gen, 0.0)?;
        for (j, dj) in ds.iter().enumerate() {
            support = support.min(dj - ds[0] - j as f64 * h * d0);
        }
    }
    out.push(upper("energy-affine", affine, 1e-12));
    out.push(lower("ding-convexity", convex.min(support), 1e-6));

    let dt = 1e-4;
    let mut grad = 0.0f64;
    for (k, gen) in gens.iter().enumerate() {
        let t = 0.2 + 0.15 * k as f64;
        let d = |s: f64| quantised_ding(&model, &bergman_geodesic(gen, s)?);
        let fd = (d(t + dt)? - d(t - dt)?) / (2.0 * dt);
        grad = grad.max((fd - ding_derivative(&model, gen, t)?).abs());
    }
    out.push(upper("gradient-consistency", grad, 1e-6));

    let cm = CoupledModel::p1(2, &[1, 1], 16)?;
    let mut gap = 0.0f64;
    for _ in 0..count.min(10) {
        let forms = CoupledForms {
            forms: vec![perturbed(3, &mut rng)?, perturbed(3, &mut rng)?],
        };
        gap = gap.max(check_lmrfmc(&cm, &forms)?);
    }
    out.push(upper("coupled-measure-identity", gap, 1e-10));

    let dec = weight_decomposition(&model)?;
    let mut red = 0.0f64;
    for _ in 0..count.min(10) {
        let diag: Vec<f64> = (0..n)
            .map(|_| (rand::Rng::random::<f64>(&mut rng) - 0.5).exp())
            .collect();
        let hd = HermitianForm::from_real_diagonal(&diag)?;
        red = red.max(
            (quantised_g_ding(&model, &hd, &GFunction::one(), &dec)?
                - quantised_ding(&model, &hd)?)
            .abs(),
        );
    }
    out.push(upper("soliton-reduction", red, 1e-12));

    let mut mismatches = 0usize;
    for p in [
        ReflexivePolytope::projective_plane(),
        ReflexivePolytope::p1_times_p1(),
        ReflexivePolytope::blowup_p2(),
    ] {
        for v in default_candidates(&p, 2) {
            for lvl in 1..=4 {
                if s_m(&p, lvl, &v)? != s_m_filtration(&p, lvl, &v)? {
                    mismatches += 1;
                }
            }
        }
    }
    out.push(upper("delta-filtration-count", mismatches as f64, 0.0));

    let graded = ManifoldModel::p1_graded(2, 8, 30, 6)?;
    let scalar = GeodesicGenerator::from_diagonal(&[1.0; 5], true)?;
    let f = f_invariant(&graded, &scalar, &SlopeSchedule::for_level(2))?;
    out.push(upper("slope-scalar-generator", f.f_invariant.abs(), 1e-10));
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> std::result::Result<TaskOutput, CliError> {
    let checks = suite(cfg)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let m: u32 = cfg.get_or("invariants", "m", 3)?;
    let res: usize = cfg.get_or("invariants", "resolution", 4 * m as usize + 4)?;
    let model = ManifoldModel::p1(m, res)?;
    Ok(TaskOutput {
        status: if failed.is_empty() {
            Status::Ok
        } else {
            Status::ValidationFailure
        },
        model: serde_json::to_value(model.metadata()).expect("metadata serializes"),
        tolerances: checks
            .iter()
            .map(|c| (c.name.to_string(), json!(c.tol)))
            .collect::<serde_json::Map<_, _>>()
            .into(),
        result: json!({
            "injection": cfg.raw("invariants", "inject").unwrap_or("none"),
            "passed": checks.len() - failed.len(),
            "failed": failed,
            "checks": checks,
        }),
        files: vec![],
    })
}
