//! FS and Hilb maps, the functionals `ℒ`, `ℰ`, `ℰₘ`, `𝒟ₘ`, the Bergman
//! function and moment residuals, all evaluated through the whitened frame
//! `x(p) = W† v(p)` of a form with `W† H W = I`.

use crate::error::{Error, Result};
use crate::linalg::{CMat, GeodesicGenerator, HermitianForm, Whitening, C64};
use crate::model::ManifoldModel;
use crate::par;
use nalgebra::DVector;
use serde::Serialize;
use std::f64::consts::PI;

/// A real function on the quadrature grid of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    pub values: Vec<f64>,
    pub tag: u64,
}

impl Potential {
    pub fn constant(model: &ManifoldModel, c: f64) -> Self {
        Self {
            values: vec![c; model.len()],
            tag: model.tag(),
        }
    }

    pub fn from_values(model: &ManifoldModel, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.len() {
            return Err(Error::ShapeMismatch {
                expected: model.len(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "potential has non-finite value {bad}"
            )));
        }
        Ok(Self {
            values,
            tag: model.tag(),
        })
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            tag: self.tag,
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check(&self, model: &ManifoldModel) -> Result<()> {
        if self.values.len() != model.len() || self.tag != model.tag() {
            return Err(Error::ShapeMismatch {
                expected: model.len(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

fn check_form(model: &ManifoldModel, h: &HermitianForm) -> Result<()> {
    if h.dim() != model.basis_size() {
        return Err(Error::ShapeMismatch {
            expected: model.basis_size(),
            got: h.dim(),
        });
    }
    Ok(())
}

/// Whitened section values `w† v(p)` for the points in `range`.
fn whitened(model: &ManifoldModel, wa: &CMat, range: std::ops::Range<usize>) -> CMat {
    wa * model.section_values().columns(range.start, range.len())
}

/// Hermitian `n × n` coefficient matrix `g_{ab̄}` of a Kähler form at a point,
/// in the chart coordinates, with `ω = (i/2π) Σ g_{ab̄} dz_a ∧ dz̄_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetric {
    pub g: [[C64; 2]; 2],
}

/// Kähler form sampled on the grid.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub dim: usize,
    pub points: Vec<PointMetric>,
}

fn metric_at(model: &ManifoldModel, wa: &CMat, p: usize, x: &DVector<C64>) -> PointMetric {
    let n = model.dim();
    let v = model.section_values().column(p);
    let mf = model.m() as f64;
    let x2 = x.norm_squared();
    let ys: Vec<DVector<C64>> = (0..n)
        .map(|a| {
            let c = model.jet_multiplier(p, a);
            let s = model.jet_scale(p, a);
            let d = DVector::from_iterator(v.len(), v.iter().zip(c).map(|(vi, ci)| vi * (ci * s)));
            wa * d
        })
        .collect();
    let mut g = [[C64::from(0.0); 2]; 2];
    for a in 0..n {
        for b in 0..n {
            let yy = ys[a].dotc(&ys[b]);
            let yx = ys[a].dotc(x);
            let xy = x.dotc(&ys[b]);
            g[a][b] = (yy * x2 - yx * xy) / (mf * x2 * x2);
        }
    }
    PointMetric { g }
}

/// Density of `ω_A ∧ ω_B` (or `ω_A` when `n = 1`) with respect to the quadrature measure.
fn wedge_density(model: &ManifoldModel, p: usize, a: &PointMetric, b: &PointMetric) -> f64 {
    let j = model.chart_jacobian(p);
    if model.dim() == 1 {
        // curve case: only `a` is used
        return a.g[0][0].re / PI * j;
    }
    let (a, b) = (&a.g, &b.g);
    let mixed =
        0.5 * (a[0][0] * b[1][1] + a[1][1] * b[0][0] - a[0][1] * b[1][0] - a[1][0] * b[0][1]).re;
    2.0 / (PI * PI) * mixed * j
}

fn top_density(model: &ManifoldModel, p: usize, g: &PointMetric) -> f64 {
    wedge_density(model, p, g, g)
}

/// Discrete `∫ ω₀ⁿ`.
pub(crate) fn reference_volume(model: &ManifoldModel) -> f64 {
    let n = model.basis_size();
    let id = CMat::identity(n, n);
    par::reduce(
        model.len(),
        |r| {
            let xs = whitened(model, &id, r.clone());
            r.clone()
                .enumerate()
                .map(|(i, p)| {
                    let x = xs.column(i).into_owned();
                    model.grid().weights[p] * top_density(model, p, &metric_at(model, &id, p, &x))
                })
                .sum::<f64>()
        },
        |a, b| a + b,
    )
    .unwrap_or(0.0)
}

/// `FS(H)(p) = (1/m) log(v† H⁻¹ v)`.
pub fn eval_fs_potential(model: &ManifoldModel, h: &HermitianForm) -> Result<Potential> {
    check_form(model, h)?;
    let w = h.whitening()?;
    Ok(fs_from_whitening(model, &w))
}

pub(crate) fn fs_from_whitening(model: &ManifoldModel, w: &Whitening) -> Potential {
    let wa = w.w.adjoint();
    let mf = model.m() as f64;
    let values = par::map_chunks(model.len(), |r| {
        let xs = whitened(model, &wa, r);
        xs.column_iter()
            .map(|x| (x.norm_squared().ln() + 2.0 * w.log_scale) / mf)
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Potential {
        values,
        tag: model.tag(),
    }
}

/// Point masses of `dμ_φ = e^{−φ} dμ₀`.
pub fn volume_form(model: &ManifoldModel, phi: &Potential) -> Result<Vec<f64>> {
    phi.check(model)?;
    Ok(model
        .reference_masses()
        .iter()
        .zip(&phi.values)
        .map(|(m, f)| m * (-f).exp())
        .collect())
}

fn sum(v: &[f64]) -> f64 {
    par::reduce(v.len(), |r| v[r].iter().sum::<f64>(), |a, b| a + b).unwrap_or(0.0)
}

/// `ℒ(φ) = −log ∫ dμ_φ`.
pub fn functional_l(model: &ManifoldModel, phi: &Potential) -> Result<f64> {
    phi.check(model)?;
    // factor out the minimum of φ so the exponentials stay in range
    let lo = phi.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = model
        .reference_masses()
        .iter()
        .zip(&phi.values)
        .map(|(m, f)| m * (lo - f).exp())
        .collect();
    Ok(lo - sum(&shifted).ln())
}

/// `ℰₘ(H) = −log det(H H₀⁻¹) / (m Nₘ)`.
pub fn functional_em(h: &HermitianForm, m: u32) -> Result<f64> {
    Ok(-h.log_det()? / (m as f64 * h.dim() as f64))
}

/// `Hilb(φ)_{ij} = (Nₘ / ∫dμ_φ) ∫ e^{−mφ} h₀(s_j, s_i) dμ_φ`.
pub fn hilb(model: &ManifoldModel, phi: &Potential) -> Result<HermitianForm> {
    phi.check(model)?;
    let n = model.basis_size();
    let mf = model.m() as f64;
    let lo = phi.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mu = model.reference_masses();
    let v = model.section_values();
    let (mass, g) = par::reduce(
        model.len(),
        |r| {
            let mut g = CMat::zeros(n, n);
            let mut mass = 0.0;
            for p in r {
                let a = mu[p] * (lo - phi.values[p]).exp();
                mass += a;
                let c = v.column(p);
                g.gerc(
                    C64::from(a * (-mf * (phi.values[p] - lo)).exp()),
                    &c,
                    &c,
                    C64::from(1.0),
                );
            }
            (mass, g)
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    )
    .ok_or(Error::Missing("grid"))?;
    // e^{−mφ} was evaluated relative to e^{−m·lo}
    let scale = n as f64 * (-mf * lo).exp() / mass;
    let form = HermitianForm::new(g * C64::from(scale))?;
    form.cholesky().map_err(|e| match e {
        Error::NotPositiveDefinite { index, pivot } => Error::NotPositiveDefinite { index, pivot },
        other => other,
    })?;
    Ok(form)
}

/// Moment data of `FS(H)` in the whitened frame.
#[derive(Debug, Clone)]
pub struct FsMoment {
    pub whitening: Whitening,
    /// `M = ⨍ x x† / |x|² dμ_{FS(H)}`, trace one.
    pub moment: CMat,
    /// `log ∫ dμ_{FS(H)}`.
    pub log_mass: f64,
}

impl FsMoment {
    /// `Hilb(FS(H))` reconstructed from the moment matrix.
    pub fn hilb(&self) -> CMat {
        let n = self.moment.nrows();
        self.whitening
            .unwhiten(&(&self.moment * C64::from(n as f64)))
    }

    /// `R = N M − I`, the whitened `Hilb(FS(H)) − H`.
    pub fn residual(&self) -> CMat {
        let n = self.moment.nrows();
        &self.moment * C64::from(n as f64) - CMat::identity(n, n)
    }
}

pub(crate) fn moment_from_whitening(model: &ManifoldModel, w: Whitening) -> FsMoment {
    let n = model.basis_size();
    let mf = model.m() as f64;
    let wa = w.w.adjoint();
    let mu = model.reference_masses();
    let (q, acc) = par::reduce(
        model.len(),
        |r| {
            let xs = whitened(model, &wa, r.clone());
            let mut acc = CMat::zeros(n, n);
            let mut qs = 0.0;
            for (i, p) in r.enumerate() {
                let x = xs.column(i);
                let x2 = x.norm_squared();
                let q = mu[p] * x2.powf(-1.0 / mf);
                qs += q;
                acc.gerc(C64::from(q / x2), &x, &x, C64::from(1.0));
            }
            (qs, acc)
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    )
    .expect("model grid is nonempty");
    let mut moment = acc / C64::from(q);
    moment = (&moment + moment.adjoint()) * C64::from(0.5);
    let log_mass = q.ln() - 2.0 * w.log_scale / mf;
    FsMoment {
        whitening: w,
        moment,
        log_mass,
    }
}

pub fn fs_moment(model: &ManifoldModel, h: &HermitianForm) -> Result<FsMoment> {
    check_form(model, h)?;
    Ok(moment_from_whitening(model, h.whitening()?))
}

/// `Hilb ∘ FS (H)`.
pub fn hilb_fs(model: &ManifoldModel, h: &HermitianForm) -> Result<HermitianForm> {
    HermitianForm::new(fs_moment(model, h)?.hilb())
}

/// `𝒟ₘ(H) = ℒ(FS(H)) − ℰₘ(H)`.
pub fn quantised_ding(model: &ManifoldModel, h: &HermitianForm) -> Result<f64> {
    let fm = fs_moment(model, h)?;
    Ok(-fm.log_mass - functional_em(h, model.m())?)
}

/// `H_t = e^{−tA*} e^{−tA}` for `t ≥ 0`.
pub fn bergman_geodesic(gen: &GeodesicGenerator, t: f64) -> Result<HermitianForm> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "geodesic time {t} must be nonnegative"
        )));
    }
    Ok(gen.at(t))
}

/// `ρₘ(p) = x† M⁻¹ x / (Vol |x|²)`: the Bergman function of `FS(H)`.
pub fn bergman_function(model: &ManifoldModel, h: &HermitianForm) -> Result<Potential> {
    let fm = fs_moment(model, h)?;
    Ok(bergman_from_moment(model, &fm))
}

pub(crate) fn bergman_from_moment(model: &ManifoldModel, fm: &FsMoment) -> Potential {
    let m_inv = HermitianForm::new(fm.moment.clone())
        .and_then(|f| f.whitening())
        .map(|w| &w.w * w.w.adjoint())
        .expect("moment matrix of a positive form is positive definite");
    let wa = fm.whitening.w.adjoint();
    let vol = model.metadata().exact_volume;
    let values = par::map_chunks(model.len(), |r| {
        let xs = whitened(model, &wa, r);
        xs.column_iter()
            .map(|x| {
                let y = &m_inv * x;
                x.dotc(&y).re / (vol * x.norm_squared())
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Potential {
        values,
        tag: model.tag(),
    }
}

/// `sup |ρ − mean| / mean`, the mean taken against `dμ_{FS(H)}`.
pub fn bergman_oscillation(model: &ManifoldModel, rho: &Potential, fm: &FsMoment) -> f64 {
    let mean = model.basis_size() as f64 / model.metadata().exact_volume;
    let _ = fm;
    rho.values
        .iter()
        .map(|r| (r - mean).abs())
        .fold(0.0, f64::max)
        / mean
}

/// Whitened residual `R = W†(Hilb(FS(H)) − H)W` and its Frobenius norm.
pub fn moment_residual(model: &ManifoldModel, h: &HermitianForm) -> Result<(CMat, f64)> {
    let r = fs_moment(model, h)?.residual();
    let norm = r.norm();
    Ok((r, norm))
}

/// `d/dt 𝒟ₘ(H_t)` along the Bergman geodesic of `gen` from `H₀`.
pub fn ding_derivative(model: &ManifoldModel, gen: &GeodesicGenerator, t: f64) -> Result<f64> {
    Ok(geodesic_sample(model, gen, t, false)?.ding_derivative())
}

/// `d/ds 𝒟ₘ` at `s = 0` along `H_s = W^{−†} e^{−2sB} W^{−1}` for a direction `B`
/// written in the whitened frame of `fm`: `(2/(mN)) tr(B R)`.
pub fn whitened_ding_derivative(fm: &FsMoment, b: &CMat, m: u32) -> f64 {
    let n = fm.moment.nrows();
    2.0 / (m as f64 * n as f64) * (b * fm.residual()).trace().re
}

/// Kähler form `ω_{FS(H)}` on the grid.
pub fn metric_field(model: &ManifoldModel, h: &HermitianForm) -> Result<MetricField> {
    check_form(model, h)?;
    let w = h.whitening()?;
    Ok(metric_field_whitened(model, &w.w))
}

fn metric_field_whitened(model: &ManifoldModel, w: &CMat) -> MetricField {
    let wa = w.adjoint();
    let points = par::map_chunks(model.len(), |r| {
        let xs = whitened(model, &wa, r.clone());
        r.enumerate()
            .map(|(i, p)| metric_at(model, &wa, p, &xs.column(i).into_owned()))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    MetricField {
        dim: model.dim(),
        points,
    }
}

/// Reference Kähler form `ω₀` on the grid.
pub fn reference_metric(model: &ManifoldModel) -> MetricField {
    let n = model.basis_size();
    metric_field_whitened(model, &CMat::identity(n, n))
}

/// Discrete `∫ ω_φⁿ`.
pub fn omega_volume(model: &ManifoldModel, field: &MetricField) -> f64 {
    let dens: Vec<f64> = (0..model.len())
        .map(|p| model.grid().weights[p] * top_density(model, p, &field.points[p]))
        .collect();
    sum(&dens)
}

/// `ℰ(φ) = 1/((n+1)Vol) Σⱼ ∫ φ ω₀^{n−j} ∧ ω_φ^j` with `ω_φ` supplied by the caller.
pub fn functional_e_from(
    model: &ManifoldModel,
    phi: &Potential,
    omega: &MetricField,
) -> Result<f64> {
    phi.check(model)?;
    if omega.points.len() != model.len() || omega.dim != model.dim() {
        return Err(Error::Missing("metric field for this grid"));
    }
    let reference = reference_metric(model);
    let n = model.dim();
    let terms: Vec<f64> = (0..model.len())
        .map(|p| {
            let (g0, g) = (&reference.points[p], &omega.points[p]);
            let d = if n == 1 {
                wedge_density(model, p, g0, g0) + wedge_density(model, p, g, g)
            } else {
                wedge_density(model, p, g0, g0)
                    + wedge_density(model, p, g0, g)
                    + wedge_density(model, p, g, g)
            };
            model.grid().weights[p] * phi.values[p] * d
        })
        .collect();
    Ok(sum(&terms) / ((n as f64 + 1.0) * model.volume()))
}

/// `ℰ(FS(H))` with the exact analytic `ω_{FS(H)}`.
pub fn functional_e(model: &ManifoldModel, h: &HermitianForm) -> Result<f64> {
    let phi = eval_fs_potential(model, h)?;
    let omega = metric_field(model, h)?;
    functional_e_from(model, &phi, &omega)
}

/// Values and first derivatives of the functionals at one time of a Bergman geodesic.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicSample {
    pub t: f64,
    /// `ℒ(FS(H_t))`.
    pub l: f64,
    /// `ℰₘ(H_t)`.
    pub em: f64,
    pub dl_dt: f64,
    pub dem_dt: f64,
    /// `d/dt ℰ(FS(H_t)) = ∫ φ̇ ω_φⁿ / ∫ ω_φⁿ`, when requested.
    pub de_dt: Option<f64>,
    /// `∫ ω_φⁿ / ∫ ω₀ⁿ`, a volume conservation check.
    pub omega_ratio: Option<f64>,
    /// `(2/m) Σ (λᵢ − λ_max) (Mᵢᵢ − 1/N)`, free of the shift cancellation.
    pub(crate) ding: f64,
}

impl GeodesicSample {
    pub fn ding_derivative(&self) -> f64 {
        self.ding
    }

    pub fn quantised_ding(&self) -> f64 {
        self.l - self.em
    }
}

/// Evaluates the geodesic of `gen` at `t` in the eigenframe of `A − λ_max·Id`,
/// so all whitened values stay bounded; the shift is added back afterwards.
pub fn geodesic_sample(
    model: &ManifoldModel,
    gen: &GeodesicGenerator,
    t: f64,
    with_energy: bool,
) -> Result<GeodesicSample> {
    if gen.dim() != model.basis_size() {
        return Err(Error::ShapeMismatch {
            expected: model.basis_size(),
            got: gen.dim(),
        });
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!(
            "geodesic time {t} must be finite and nonnegative"
        )));
    }
    let (shifted, lmax) = gen.gauge_shifted();
    let h = shifted.at(t);
    let w = h.whitening()?;
    if !w.w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Overflow(format!("whitening overflow at t = {t}")));
    }
    let fm = moment_from_whitening(model, w);
    let n = model.basis_size();
    let mf = model.m() as f64;
    let lam = shifted.eigenvalues();
    let diag_term: f64 = (0..n).map(|i| lam[i] * fm.moment[(i, i)].re).sum();
    let dl_dt = 2.0 / mf * (diag_term + lmax);
    let dem_dt = gen.trace_sym() / (mf * n as f64);
    let ding = 2.0 / mf
        * (0..n)
            .map(|i| lam[i] * (fm.moment[(i, i)].re - 1.0 / n as f64))
            .sum::<f64>();
    let l = -fm.log_mass + 2.0 * t * lmax / mf;
    let em = t * gen.trace_sym() / (mf * n as f64);
    let (de_dt, omega_ratio) = if with_energy {
        let wa = fm.whitening.w.adjoint();
        let (num, den) = par::reduce(
            model.len(),
            |r| {
                let xs = whitened(model, &wa, r.clone());
                let mut num = 0.0;
                let mut den = 0.0;
                for (i, p) in r.enumerate() {
                    let x = xs.column(i).into_owned();
                    let x2 = x.norm_squared();
                    let phidot =
                        2.0 / mf * (0..n).map(|k| lam[k] * x[k].norm_sqr()).sum::<f64>() / x2;
                    let d = model.grid().weights[p]
                        * top_density(model, p, &metric_at(model, &wa, p, &x));
                    num += phidot * d;
                    den += d;
                }
                (num, den)
            },
            |a, b| (a.0 + b.0, a.1 + b.1),
        )
        .expect("model grid is nonempty");
        (
            Some(num / den + 2.0 * lmax / mf),
            Some(den / model.volume()),
        )
    } else {
        (None, None)
    };
    Ok(GeodesicSample {
        t,
        l,
        em,
        dl_dt,
        dem_dt,
        de_dt,
        omega_ratio,
        ding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_hermitian;
    use crate::model::ToricOptions;
    use crate::polytope::ReflexivePolytope;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_form(n: usize, eps: f64, seed: u64) -> HermitianForm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HermitianForm::new(CMat::identity(n, n) + random_hermitian(n, eps, &mut rng)).unwrap()
    }

    #[test]
    fn reference_values_vanish() {
        let model = ManifoldModel::p1(2, 8).unwrap();
        let id = HermitianForm::identity(5);
        let phi = eval_fs_potential(&model, &id).unwrap();
        assert!(phi.values.iter().all(|v| v.abs() < 1e-15));
        assert!(functional_l(&model, &phi).unwrap().abs() < 1e-15);
        assert!(functional_e(&model, &id).unwrap().abs() < 1e-15);
        assert_eq!(functional_em(&id, 2).unwrap(), 0.0);
        assert!(quantised_ding(&model, &id).unwrap().abs() < 1e-14);
        let c = Potential::constant(&model, 0.7);
        assert!((sum(&volume_form(&model, &c).unwrap()) - (-0.7f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn fs_oracle_near_north_pole() {
        let model = ManifoldModel::p1(1, 4).unwrap();
        let h = HermitianForm::from_real_diagonal(&[4.0, 1.0, 1.0]).unwrap();
        let phi = eval_fs_potential(&model, &h).unwrap();
        let p = (0..model.len())
            .max_by(|&a, &b| model.grid().points[a][0].total_cmp(&model.grid().points[b][0]))
            .unwrap();
        let (x, ph) = (model.grid().points[p][0], model.grid().points[p][1]);
        let z = C64::from_polar(((1.0 - x) / (1.0 + x)).sqrt(), ph);
        let w = [C64::from(1.0), z * 2f64.sqrt(), z * z];
        let num = w[0].norm_sqr() / 4.0 + w[1].norm_sqr() + w[2].norm_sqr();
        let den: f64 = w.iter().map(|c| c.norm_sqr()).sum();
        assert!((phi.values[p] - (num / den).ln()).abs() < 1e-14);
    }

    #[test]
    fn scaling_identities() {
        let model = ManifoldModel::p1(2, 10).unwrap();
        let h = random_form(5, 0.4, 1);
        let a = 0.37;
        let p1 = eval_fs_potential(&model, &h).unwrap();
        let p2 = eval_fs_potential(&model, &h.scale_exp(a)).unwrap();
        assert!(p2.sup_distance(&p1.shifted(-a / 2.0)) < 1e-13);
        let g1 = hilb(&model, &p1).unwrap();
        let g2 = hilb(&model, &p1.shifted(0.3)).unwrap();
        assert!((g2.matrix() - g1.matrix() * C64::from((-0.6f64).exp())).norm() < 1e-13);
        let d1 = quantised_ding(&model, &h).unwrap();
        let d2 = quantised_ding(&model, &h.scale_exp(3.1)).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        let (_, r1) = moment_residual(&model, &h).unwrap();
        let (_, r2) = moment_residual(&model, &h.scale_exp(-2.0)).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn round_metric_is_balanced() {
        for m in 1..5u32 {
            let model = ManifoldModel::p1(m, 2 * m as usize + 2).unwrap();
            let n = model.basis_size();
            let g = hilb(&model, &Potential::constant(&model, 0.0)).unwrap();
            assert!((g.matrix() - CMat::identity(n, n)).norm() < 1e-12);
            assert!((g.matrix().trace().re - n as f64).abs() < 1e-12);
            let (_, r) = moment_residual(&model, &HermitianForm::identity(n)).unwrap();
            assert!(r < 1e-12);
            let rho = bergman_function(&model, &HermitianForm::identity(n)).unwrap();
            let mean = n as f64 / 2.0;
            assert!(rho.values.iter().all(|v| (v - mean).abs() < 1e-10));
        }
    }

    #[test]
    fn hilb_fs_two_routes_agree() {
        let model = ManifoldModel::p1(3, 16).unwrap();
        let h = random_form(7, 0.5, 2);
        let direct = hilb(&model, &eval_fs_potential(&model, &h).unwrap()).unwrap();
        let fast = hilb_fs(&model, &h).unwrap();
        assert!((direct.matrix() - fast.matrix()).norm() < 1e-12 * direct.frobenius_norm());
    }

    #[test]
    fn bergman_mean_is_trace() {
        let model = ManifoldModel::p1(2, 12).unwrap();
        let h = random_form(5, 0.5, 3);
        let fm = fs_moment(&model, &h).unwrap();
        let rho = bergman_from_moment(&model, &fm);
        let phi = eval_fs_potential(&model, &h).unwrap();
        let mu = volume_form(&model, &phi).unwrap();
        let mean = rho.values.iter().zip(&mu).map(|(r, m)| r * m).sum::<f64>() / sum(&mu);
        assert!((mean - 2.5).abs() < 1e-12);
        assert!(bergman_oscillation(&model, &rho, &fm) > 1e-3);
    }

    #[test]
    fn volume_is_cohomological() {
        let model = ManifoldModel::p1(3, 24).unwrap();
        assert!((model.volume() - 2.0).abs() < 1e-12);
        let h = random_form(7, 0.5, 4);
        let f = metric_field(&model, &h).unwrap();
        assert!((omega_volume(&model, &f) - 2.0).abs() < 1e-8);
        let p2 = ReflexivePolytope::projective_plane();
        // torus-invariant integrand, so a single angle suffices here
        let tm = ManifoldModel::toric(
            &p2,
            1,
            256,
            &ToricOptions {
                radius: None,
                angles: Some(1),
            },
        )
        .unwrap();
        assert!((tm.volume() - 9.0).abs() < 1e-8, "{}", tm.volume());
    }

    #[test]
    fn energy_of_constants() {
        let model = ManifoldModel::p1(2, 8).unwrap();
        let h = HermitianForm::identity(5).scale_exp(-2.0 * 0.8);
        assert!((functional_e(&model, &h).unwrap() - 0.8).abs() < 1e-14);
    }

    #[test]
    fn scalar_generator_derivatives() {
        let model = ManifoldModel::p1(2, 8).unwrap();
        let gen = GeodesicGenerator::from_diagonal(&[0.6; 5], false).unwrap();
        for t in [0.0, 1.0, 3.0] {
            let s = geodesic_sample(&model, &gen, t, true).unwrap();
            assert!((s.dl_dt - 0.6).abs() < 1e-14);
            assert!((s.de_dt.unwrap() - 0.6).abs() < 1e-13);
            assert!(s.ding_derivative().abs() < 1e-15);
        }
    }

    #[test]
    fn ding_derivative_matches_finite_difference() {
        let model = ManifoldModel::p1(2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gen = GeodesicGenerator::new(random_hermitian(5, 1.0, &mut rng), false).unwrap();
        let t = 0.4;
        let h = 1e-4;
        let d = |s: f64| quantised_ding(&model, &gen.at(s)).unwrap();
        let fd = (d(t + h) - d(t - h)) / (2.0 * h);
        assert!((fd - ding_derivative(&model, &gen, t).unwrap()).abs() < 1e-7);
        let s = geodesic_sample(&model, &gen, t, false).unwrap();
        assert!((s.quantised_ding() - d(t)).abs() < 1e-12);
    }
}
