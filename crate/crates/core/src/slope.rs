//! Asymptotic slopes of `ℒ`, `ℰ` and `𝒟ₘ` along Bergman geodesic rays.
//!
//! Derivatives are sampled on a 5-point stencil `[t/2, t]` for a doubling
//! sequence of times `t`. Each stencil is extrapolated twice: by the Shanks
//! transform, which removes two exponentially decaying corrections, and by a
//! fit in powers of `1/t` for rays whose derivatives approach the limit
//! algebraically. The gap between consecutive extrapolants is the convergence
//! diagnostic, and the tail model with the smaller final gap is reported.

use crate::bergman::{geodesic_sample, GeodesicSample};
use crate::error::{Error, Result};
use crate::linalg::GeodesicGenerator;
use crate::model::ManifoldModel;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SlopeSchedule {
    pub t_start: f64,
    pub t_max: f64,
    pub gap_tol: f64,
    /// Largest admissible drop between consecutive derivative samples.
    pub monotone_tol: f64,
}

impl SlopeSchedule {
    /// Starts at `t = 1/2`, doubles up to `40/m`, stops at gap `1e-5`.
    pub fn for_level(m: u32) -> Self {
        Self {
            t_start: 0.5,
            t_max: 40.0 / m as f64,
            gap_tol: 1e-5,
            monotone_tol: 1e-8,
        }
    }

    /// The doubling sequence of stencil end points.
    pub fn times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = self.t_start;
        while t <= self.t_max * (1.0 + 1e-12) {
            out.push(t);
            t *= 2.0;
        }
        if out.last().is_some_and(|l| *l < self.t_max * (1.0 - 1e-12)) {
            out.push(self.t_max);
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_start > 0.0 && self.t_max >= self.t_start && self.gap_tol > 0.0) {
            return Err(Error::InvalidInput(
                "slope schedule needs 0 < t_start ≤ t_max and gap_tol > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Shanks transform of the five samples by Wynn's epsilon algorithm, which
/// removes two geometric error terms. Falls back to a single Aitken step and
/// then to the last sample when differences vanish below rounding level or the
/// accelerated value leaves a plausible range.
pub fn extrapolate(xs: &[f64; 5]) -> f64 {
    let last = xs[4];
    let scale = last.abs().max(1.0);
    let spread = xs.iter().map(|x| (x - last).abs()).fold(0.0, f64::max);
    if spread <= 1e-13 * scale {
        return last;
    }
    let plausible = |v: f64| v.is_finite() && (v - last).abs() <= 4.0 * spread;
    let tiny = 1e-13 * scale;
    // eps[k][j]: column k of the epsilon table, row j
    let mut prev = vec![0.0; 6];
    let mut cur: Vec<f64> = xs.to_vec();
    let mut evens = vec![last];
    for k in 1..=4 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let d = cur[j + 1] - cur[j];
            if d.abs() <= if k % 2 == 1 { tiny } else { 0.0 } || d == 0.0 {
                return evens
                    .into_iter()
                    .rev()
                    .find(|v| plausible(*v))
                    .unwrap_or(last);
            }
            next.push(prev[j + 1] + 1.0 / d);
        }
        prev = cur;
        cur = next;
        if k % 2 == 0 {
            evens.push(*cur.last().unwrap());
        }
    }
    evens
        .into_iter()
        .rev()
        .find(|v| plausible(*v))
        .unwrap_or(last)
}

/// Least-squares fit of `a + b/t + c/t² + d/t³` to the stencil, returning `a`.
pub fn extrapolate_algebraic(ts: &[f64; 5], xs: &[f64; 5]) -> f64 {
    let t_ref = ts[4];
    let a = nalgebra::DMatrix::from_fn(5, 4, |i, j| (t_ref / ts[i]).powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(xs);
    match a.svd(true, true).solve(&b, 1e-14) {
        Ok(c) if c[0].is_finite() => c[0],
        _ => xs[4],
    }
}

/// How the derivative samples approach their limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailModel {
    Exponential,
    Algebraic,
}

/// Extrapolants of one derivative series over successive stencils.
#[derive(Debug, Clone)]
struct Tail {
    shanks: Option<f64>,
    algebraic: Option<f64>,
    gap_shanks: f64,
    gap_algebraic: f64,
}

impl Tail {
    fn new() -> Self {
        Self {
            shanks: None,
            algebraic: None,
            gap_shanks: f64::INFINITY,
            gap_algebraic: f64::INFINITY,
        }
    }

    fn push(&mut self, ts: &[f64; 5], xs: &[f64; 5]) {
        let s = extrapolate(xs);
        let a = extrapolate_algebraic(ts, xs);
        if let Some(p) = self.shanks {
            self.gap_shanks = (s - p).abs();
        }
        if let Some(p) = self.algebraic {
            self.gap_algebraic = (a - p).abs();
        }
        self.shanks = Some(s);
        self.algebraic = Some(a);
    }

    fn gap(&self) -> f64 {
        self.gap_shanks.min(self.gap_algebraic)
    }

    fn model(&self) -> TailModel {
        if self.gap_algebraic < self.gap_shanks {
            TailModel::Algebraic
        } else {
            TailModel::Exponential
        }
    }

    fn value(&self) -> f64 {
        match self.model() {
            TailModel::Exponential => self.shanks.unwrap_or(f64::NAN),
            TailModel::Algebraic => self.algebraic.unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeSampleRow {
    pub t: f64,
    pub dl_dt: f64,
    pub de_dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub slope_l: f64,
    pub slope_e: f64,
    pub ding_numeric: f64,
    pub chow_numeric: f64,
    pub f_invariant: f64,
    /// Stencil end points actually used.
    pub t_schedule: Vec<f64>,
    pub gap_l: f64,
    pub gap_e: f64,
    /// `max(gap_l, gap_e)`.
    pub extrapolation_gap: f64,
    /// Tail model used for the `ℒ` slope.
    pub tail_model: TailModel,
    /// `λ_max` removed from the generator before sampling.
    pub overflow_shift: f64,
    /// Largest deviation of `∫ω_φⁿ` from `∫ω₀ⁿ` over the samples, relative.
    pub volume_drift: f64,
    pub samples: Vec<SlopeSampleRow>,
}

impl SlopeReport {
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("t,dL/dt,dE/dt\n");
        for r in &self.samples {
            s.push_str(&format!("{:e},{:e},{:e}\n", r.t, r.dl_dt, r.de_dt));
        }
        s
    }
}

pub(crate) struct Run {
    pub tail_model: TailModel,
    pub slope_l: f64,
    pub slope_e: f64,
    pub gap_l: f64,
    pub gap_e: f64,
    pub ends: Vec<f64>,
    pub samples: Vec<GeodesicSample>,
}

fn run(
    model: &ManifoldModel,
    gen: &GeodesicGenerator,
    schedule: &SlopeSchedule,
    with_energy: bool,
) -> Result<Run> {
    if gen.dim() != model.basis_size() {
        return Err(Error::ShapeMismatch {
            expected: model.basis_size(),
            got: gen.dim(),
        });
    }
    run_with(schedule, with_energy, |t| {
        geodesic_sample(model, gen, t, with_energy)
    })
}

pub(crate) fn run_with<F>(schedule: &SlopeSchedule, with_energy: bool, sampler: F) -> Result<Run>
where
    F: Fn(f64) -> Result<GeodesicSample> + Sync + Send,
{
    schedule.validate()?;
    let mut samples: Vec<GeodesicSample> = Vec::new();
    let mut ends = Vec::new();
    let (mut tail_l, mut tail_e) = (Tail::new(), Tail::new());
    for t in schedule.times() {
        let h = t / 8.0;
        let stencil: [f64; 5] = std::array::from_fn(|j| t - (4 - j) as f64 * h);
        let pts = crate::par::map_points(5, |j| {
            samples
                .iter()
                .find(|s| s.t == stencil[j])
                .cloned()
                .map(Ok)
                .unwrap_or_else(|| sampler(stencil[j]))
        });
        let pts: Vec<GeodesicSample> = pts.into_iter().collect::<Result<_>>()?;
        let dl: [f64; 5] = std::array::from_fn(|j| pts[j].dl_dt);
        tail_l.push(&stencil, &dl);
        if with_energy {
            let de: [f64; 5] = std::array::from_fn(|j| pts[j].de_dt.unwrap_or(f64::NAN));
            tail_e.push(&stencil, &de);
        }
        for p in pts {
            if !samples.iter().any(|s| s.t == p.t) {
                samples.push(p);
            }
        }
        ends.push(t);
        let e_done = !with_energy || tail_e.gap() < schedule.gap_tol;
        if tail_l.gap() < schedule.gap_tol && e_done {
            break;
        }
    }
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    check_monotone(&samples, |s| s.dl_dt, schedule.monotone_tol)?;
    if with_energy {
        check_monotone(&samples, |s| s.de_dt.unwrap_or(0.0), schedule.monotone_tol)?;
    }
    Ok(Run {
        tail_model: tail_l.model(),
        slope_l: tail_l.value(),
        slope_e: if with_energy {
            tail_e.value()
        } else {
            f64::NAN
        },
        gap_l: tail_l.gap(),
        gap_e: if with_energy { tail_e.gap() } else { f64::NAN },
        ends,
        samples,
    })
}

fn check_monotone(
    samples: &[GeodesicSample],
    f: impl Fn(&GeodesicSample) -> f64,
    tol: f64,
) -> Result<()> {
    for w in samples.windows(2) {
        let drop = f(&w[0]) - f(&w[1]);
        if drop > tol {
            return Err(Error::NonMonotone { t: w[1].t, drop });
        }
    }
    Ok(())
}

/// Asymptotic slope of `ℒ(FS(H_t))` and the final extrapolation gap.
pub fn slope_l(
    model: &ManifoldModel,
    gen: &GeodesicGenerator,
    schedule: &SlopeSchedule,
) -> Result<(f64, f64)> {
    let r = run(model, gen, schedule, false)?;
    Ok((r.slope_l, r.gap_l))
}

/// Asymptotic slope of `ℰ(FS(H_t))` and the final extrapolation gap.
pub fn slope_e(
    model: &ManifoldModel,
    gen: &GeodesicGenerator,
    schedule: &SlopeSchedule,
) -> Result<(f64, f64)> {
    let r = run(model, gen, schedule, true)?;
    Ok((r.slope_e, r.gap_e))
}

/// Slopes of `ℒ` and `ℰ`, split into the Ding and Chow parts; their sum is
/// the asymptotic slope of `𝒟ₘ`.
pub fn f_invariant(
    model: &ManifoldModel,
    gen: &GeodesicGenerator,
    schedule: &SlopeSchedule,
) -> Result<SlopeReport> {
    let r = run(model, gen, schedule, true)?;
    let n = model.basis_size() as f64;
    let mf = model.m() as f64;
    let trace_term = gen.trace_sym() / (mf * n);
    let ding_numeric = r.slope_l - r.slope_e;
    let chow_numeric = r.slope_e - trace_term;
    let volume_drift = r
        .samples
        .iter()
        .filter_map(|s| s.omega_ratio)
        .map(|x| (x - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(SlopeReport {
        slope_l: r.slope_l,
        slope_e: r.slope_e,
        ding_numeric,
        chow_numeric,
        f_invariant: r.slope_l - trace_term,
        t_schedule: r.ends,
        gap_l: r.gap_l,
        gap_e: r.gap_e,
        extrapolation_gap: r.gap_l.max(r.gap_e),
        tail_model: r.tail_model,
        overflow_shift: gen.lambda_max(),
        volume_drift,
        samples: r
            .samples
            .iter()
            .map(|s| SlopeSampleRow {
                t: s.t,
                dl_dt: s.dl_dt,
                de_dt: s.de_dt.unwrap_or(f64::NAN),
            })
            .collect(),
    })
}
