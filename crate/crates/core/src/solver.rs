//! Balanced metric solvers: fixed-point iteration of `Hilb ∘ FS` and
//! geodesic gradient descent on the quantised Ding functional.

use crate::bergman::{bergman_from_moment, bergman_oscillation, fs_moment, FsMoment};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_exp, CMat, HermitianForm, C64};
use crate::model::ManifoldModel;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedPoint,
    Gradient,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-point" => Ok(Method::FixedPoint),
            "gradient" => Ok(Method::Gradient),
            other => Err(Error::InvalidInput(format!(
                "unknown solver method {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    pub residual_tol: f64,
    /// Initial step of the gradient method.
    pub step_size: f64,
    /// Weight of the previous iterate in the fixed-point update.
    pub damping: f64,
    /// Renormalize iterates to `det H = 1`.
    pub gauge: bool,
    pub seed: u64,
    /// Diverging once `𝒟ₘ` falls below this value.
    pub ding_floor: f64,
    /// Diverging once the residual has grown this many iterations in a row.
    pub growth_window: usize,
    /// Diverging once the residual has stayed flat (relative spread below
    /// `stall_tolerance`) for this many strictly descending iterations while
    /// far from converged; `0` disables the check.
    pub stall_window: usize,
    pub stall_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::FixedPoint,
            max_iters: 200,
            residual_tol: 1e-8,
            step_size: 0.5,
            damping: 0.0,
            gauge: true,
            seed: 0,
            ding_floor: -50.0,
            growth_window: 20,
            stall_window: 20,
            stall_tolerance: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidInput("residual_tol must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidInput("damping must lie in [0, 1)".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidInput("step_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIters,
    Diverging,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub ding: f64,
    pub residual: f64,
    pub oscillation: f64,
    /// Accepted gradient step, or the damping weight for fixed-point updates.
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,ding,residual,oscillation,step,backtracks\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{}\n",
                r.iteration, r.ding, r.residual, r.oscillation, r.step, r.backtracks
            ));
        }
        s
    }

    pub fn ding_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ding).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub form: HermitianForm,
    pub trace: SolverTrace,
    pub status: SolverStatus,
    pub reason: String,
}

/// What the moment matrix is driven to, and how the energy term is weighted.
#[derive(Debug, Clone)]
pub(crate) enum Target {
    /// `M = I/N`, energy `ℰₘ`.
    Plain,
    /// `M = diag(t)` with `Σ t = 1`, energy `−(1/m) Σ tᵢ log λᵢ(H)` on blocks.
    Weighted {
        target: Vec<f64>,
        block_of: Vec<usize>,
    },
}

impl Target {
    fn weights(&self, n: usize) -> Vec<f64> {
        match self {
            Target::Plain => vec![1.0 / n as f64; n],
            Target::Weighted { target, .. } => target.clone(),
        }
    }

    /// Energy term of the functional being minimized.
    fn energy(&self, h: &HermitianForm, m: u32) -> Result<f64> {
        match self {
            Target::Plain => crate::bergman::functional_em(h, m),
            Target::Weighted { target, block_of } => {
                crate::soliton::weighted_energy(h, target, block_of, m)
            }
        }
    }

    fn residual(&self, fm: &FsMoment) -> CMat {
        let n = fm.moment.nrows();
        let w = self.weights(n);
        let mut r = &fm.moment * C64::from(n as f64);
        for i in 0..n {
            r[(i, i)] -= C64::from(n as f64 * w[i]);
        }
        r
    }
}

struct Eval {
    form: HermitianForm,
    fm: FsMoment,
    ding: f64,
    residual: CMat,
    res_norm: f64,
    oscillation: f64,
}

fn evaluate(model: &ManifoldModel, h: HermitianForm, target: &Target) -> Result<Eval> {
    let fm = fs_moment(model, &h)?;
    let ding = -fm.log_mass - target.energy(&h, model.m())?;
    let residual = target.residual(&fm);
    let res_norm = residual.norm();
    let oscillation = match target {
        Target::Plain => bergman_oscillation(model, &bergman_from_moment(model, &fm), &fm),
        Target::Weighted { .. } => f64::NAN,
    };
    Ok(Eval {
        form: h,
        fm,
        ding,
        residual,
        res_norm,
        oscillation,
    })
}

fn gauge(h: HermitianForm, on: bool) -> Result<HermitianForm> {
    if on {
        h.gauge_normalized()
    } else {
        Ok(h)
    }
}

fn breakdown(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::SolverBreakdown {
        iteration,
        source: Box::new(e),
    }
}

/// Finds an anticanonically balanced form starting from `h_init`.
pub fn solve_balanced(
    model: &ManifoldModel,
    h_init: &HermitianForm,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    solve_with_target(model, h_init, cfg, &Target::Plain)
}

pub(crate) fn solve_with_target(
    model: &ManifoldModel,
    h_init: &HermitianForm,
    cfg: &SolverConfig,
    target: &Target,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    if h_init.dim() != model.basis_size() {
        return Err(Error::ShapeMismatch {
            expected: model.basis_size(),
            got: h_init.dim(),
        });
    }
    let n = model.basis_size();
    let m = model.m();
    let weights = target.weights(n);
    let inv_sqrt: Vec<f64> = weights.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut cur = evaluate(
        model,
        gauge(h_init.clone(), cfg.gauge).map_err(breakdown(0))?,
        target,
    )
    .map_err(breakdown(0))?;
    let mut trace = SolverTrace::default();
    let mut step = cfg.step_size;
    let mut growth = 0usize;
    let mut stall = 0usize;
    let mut recent: Vec<f64> = Vec::new();
    let push = |trace: &mut SolverTrace, it: usize, e: &Eval, step: f64, bt: usize| {
        trace.rows.push(TraceRow {
            iteration: it,
            ding: e.ding,
            residual: e.res_norm,
            oscillation: e.oscillation,
            step,
            backtracks: bt,
        });
    };
    push(&mut trace, 0, &cur, 0.0, 0);
    let converged = |e: &Eval| {
        e.res_norm < cfg.residual_tol
            && (e.oscillation.is_nan() || e.oscillation < 10.0 * cfg.residual_tol)
    };
    let done = |form: HermitianForm, trace: SolverTrace, status: SolverStatus, reason: String| {
        Ok(SolveOutcome {
            form,
            trace,
            status,
            reason,
        })
    };
    if converged(&cur) {
        return done(
            cur.form,
            trace,
            SolverStatus::Converged,
            "initial form already balanced".into(),
        );
    }
    for it in 1..=cfg.max_iters {
        let w = &cur.fm.whitening;
        let (next, used_step, backtracks) = match cfg.method {
            Method::FixedPoint => {
                let mut k = cur.fm.moment.clone();
                for i in 0..n {
                    for j in 0..n {
                        k[(i, j)] *= C64::from(inv_sqrt[i] * inv_sqrt[j]);
                    }
                }
                let k = k * C64::from(1.0 - cfg.damping)
                    + CMat::identity(n, n) * C64::from(cfg.damping);
                let h = HermitianForm::new(w.unwhiten(&k)).map_err(breakdown(it))?;
                let e = evaluate(model, gauge(h, cfg.gauge).map_err(breakdown(it))?, target)
                    .map_err(breakdown(it))?;
                (e, cfg.damping, 0)
            }
            Method::Gradient => {
                let slope = -2.0 / (m as f64 * n as f64) * cur.res_norm * cur.res_norm;
                let mut s = step;
                let mut bt = 0;
                let accepted = loop {
                    let k = hermitian_exp(&cur.residual, 2.0 * s);
                    let trial = HermitianForm::new(w.unwhiten(&k))
                        .and_then(|h| gauge(h, cfg.gauge))
                        .and_then(|h| evaluate(model, h, target));
                    if let Ok(e) = trial {
                        if e.ding <= cur.ding + 1e-4 * s * slope
                            || (e.res_norm < cur.res_norm
                                && e.ding <= cur.ding + 1e-14 * (1.0 + cur.ding.abs()))
                        {
                            break Some(e);
                        }
                    }
                    bt += 1;
                    s *= 0.5;
                    if bt > 40 {
                        break None;
                    }
                };
                match accepted {
                    Some(e) => {
                        step = if bt == 0 {
                            (s * 1.5).min(64.0 * cfg.step_size)
                        } else {
                            s
                        };
                        (e, s, bt)
                    }
                    None => {
                        return done(
                            cur.form,
                            trace,
                            SolverStatus::MaxIters,
                            format!("line search found no descent at iteration {it}"),
                        )
                    }
                }
            }
        };
        let prev_res = cur.res_norm;
        let prev_ding = cur.ding;
        cur = next;
        push(&mut trace, it, &cur, used_step, backtracks);
        if converged(&cur) {
            return done(
                cur.form,
                trace,
                SolverStatus::Converged,
                format!("residual below tolerance after {it} iterations"),
            );
        }
        if cur.ding < cfg.ding_floor {
            return done(
                cur.form,
                trace,
                SolverStatus::Diverging,
                format!("quantised Ding below floor {}", cfg.ding_floor),
            );
        }
        growth = if cur.res_norm > prev_res {
            growth + 1
        } else {
            0
        };
        if growth >= cfg.growth_window {
            return done(
                cur.form,
                trace,
                SolverStatus::Diverging,
                format!("residual grew for {growth} consecutive iterations"),
            );
        }
        if cfg.stall_window > 0 {
            if cur.ding < prev_ding && cur.res_norm > 1e3 * cfg.residual_tol {
                stall += 1;
                recent.push(cur.res_norm);
            } else {
                stall = 0;
                recent.clear();
            }
            if stall >= cfg.stall_window {
                let window = &recent[recent.len() - cfg.stall_window..];
                let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
                if (hi - lo) / hi < cfg.stall_tolerance {
                    return done(
                        cur.form,
                        trace,
                        SolverStatus::Diverging,
                        format!(
                            "Ding decreasing with residual flat at {hi:.3e} for {stall} iterations"
                        ),
                    );
                }
            }
        }
    }
    done(
        cur.form,
        trace,
        SolverStatus::MaxIters,
        format!("no convergence within {} iterations", cfg.max_iters),
    )
}

/// The four equivalent characterizations of a balanced form, measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// `‖N M − I‖_F` in the whitened frame.
    pub moment_residual: f64,
    /// `sup |ρₘ − mean| / mean`.
    pub rho_oscillation: f64,
    /// `‖Hilb∘FS(H) − H‖_F / ‖H‖_F`.
    pub fixed_point_residual: f64,
    /// `max |d/ds 𝒟ₘ|` at `s = 0` over elementary hermitian directions.
    pub max_probe_derivative: f64,
    pub tol: f64,
    pub balanced: bool,
}

pub fn certify(model: &ManifoldModel, h: &HermitianForm, tol: f64) -> Result<Certificate> {
    let fm = fs_moment(model, h)?;
    let n = model.basis_size();
    let residual = fm.residual();
    let moment_residual = residual.norm();
    let rho_oscillation = bergman_oscillation(model, &bergman_from_moment(model, &fm), &fm);
    let fixed_point_residual = (fm.hilb() - h.matrix()).norm() / h.frobenius_norm();
    let scale = 2.0 / (model.m() as f64 * n as f64);
    let mut probe = 0.0f64;
    for i in 0..n {
        probe = probe.max((scale * residual[(i, i)].re).abs());
        for j in i + 1..n {
            // B = (E_ij + E_ji)/√2 and i(E_ij − E_ji)/√2 pair with Re and Im of R_ji
            let z = residual[(j, i)] * (2.0 * FRAC_1_SQRT_2);
            probe = probe.max((scale * z.re).abs()).max((scale * z.im).abs());
        }
    }
    let balanced =
        moment_residual < tol && rho_oscillation < tol && fixed_point_residual < tol && probe < tol;
    Ok(Certificate {
        moment_residual,
        rho_oscillation,
        fixed_point_residual,
        max_probe_derivative: probe,
        tol,
        balanced,
    })
}
