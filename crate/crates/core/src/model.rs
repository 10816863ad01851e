//! Discrete models of `(X, −K_X)`: the projective line and toric surfaces.
//!
//! Section values are stored in the normalized frame `v(p) = conj(w(p)) / |w(p)|`
//! where `w(p)` are the holomorphic basis values in the chart trivialization,
//! so `v†v = 1` and `v† H⁻¹ v` is the FS density ratio against the reference.
//! Holomorphic first jets are `conj(∂_a w) / |w| = jet_scale_a(p) · diag(c_a) v(p)`
//! with a per-chart multiplier vector `c_a`.

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::polytope::ReflexivePolytope;
use crate::quadrature::{gauss_legendre, gauss_legendre_on, uniform_angles, QuadratureGrid};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ProjectiveLine,
    Toric2d,
}

/// Construction data reported alongside every result computed on a model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelMetadata {
    pub kind: ModelKind,
    pub m: u32,
    pub dim: usize,
    pub basis_size: usize,
    pub grid_axes: Vec<usize>,
    pub grid_points: usize,
    /// Factor by which the raw reference density was divided to reach unit mass.
    pub normalization: f64,
    /// Discrete `∫ ω₀ⁿ`.
    pub reference_volume: f64,
    /// Exact `∫ ω₀ⁿ` (`2` on the line, twice the polytope area on surfaces).
    pub exact_volume: f64,
    pub truncation_radius: Option<f64>,
    pub truncation_error_bound: Option<f64>,
    /// Polynomial degree integrated exactly along the polar axis, when known.
    pub polar_exactness_degree: Option<usize>,
    pub angular_exactness_frequency: usize,
}

#[derive(Debug, Clone)]
pub struct ManifoldModel {
    meta: ModelMetadata,
    grid: QuadratureGrid,
    /// `N × P`, column `p` is `v(p)`.
    values: CMat,
    /// `[chart][axis][basis index]` multipliers of the first jets.
    jet_multipliers: Vec<Vec<Vec<f64>>>,
    /// `[axis][point]` scalar factor of the first jets.
    jet_scale: Vec<Vec<C64>>,
    /// Chart volume element `dV_chart / d(quadrature measure)` per point.
    chart_jacobian: Vec<f64>,
    /// Quadrature weight times `dμ₀` density; sums to one.
    mu0: Vec<f64>,
    torus_weights: Option<Vec<Vec<i64>>>,
    exponents: Option<Vec<Vec<i64>>>,
}

pub(crate) fn binomial(n: u64, k: u64) -> f64 {
    let mut c = 1.0f64;
    for i in 0..k.min(n - k) {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Holomorphic sections of `O(degree)` on the line in the normalized frame,
/// evaluated on a sphere grid given in `(cos θ, ϕ)`.
pub(crate) struct LineSections {
    pub values: CMat,
    pub jet_multipliers: Vec<Vec<Vec<f64>>>,
    pub jet_scale: Vec<C64>,
    pub chart_jacobian: Vec<f64>,
    pub chart_id: Vec<u8>,
}

pub(crate) fn line_sections(degree: u32, points: &[Vec<f64>]) -> LineSections {
    let n = degree as usize + 1;
    let d = degree as u64;
    let root_binom: Vec<f64> = (0..=d).map(|k| binomial(d, k).sqrt()).collect();
    let mut values = CMat::zeros(n, points.len());
    let mut jet_scale = Vec::with_capacity(points.len());
    let mut chart_jacobian = Vec::with_capacity(points.len());
    let mut chart_id = Vec::with_capacity(points.len());
    for (p, pt) in points.iter().enumerate() {
        let (x, phi, r) = (pt[0], pt[1], pt[2]);
        // |z| = tan(θ/2) on the north chart, |ζ| = cot(θ/2) on the south chart
        let north = x >= 0.0;
        let denom = (1.0 + r * r).powf(0.5 * degree as f64);
        for k in 0..n {
            let (e, sign) = if north { (k, -1.0) } else { (n - 1 - k, 1.0) };
            let mag = root_binom[k] * r.powi(e as i32) / denom;
            values[(k, p)] = C64::from_polar(mag, sign * e as f64 * phi);
        }
        // conj of the coordinate: conj(z) = r e^{-iϕ}, conj(ζ) = r e^{iϕ}
        let conj_coord = if north {
            C64::from_polar(r, -phi)
        } else {
            C64::from_polar(r, phi)
        };
        jet_scale.push(C64::from(1.0) / conj_coord);
        chart_jacobian.push((1.0 + r * r).powi(2) / 4.0);
        chart_id.push(if north { 0 } else { 1 });
    }
    let north: Vec<f64> = (0..n).map(|k| k as f64).collect();
    let south: Vec<f64> = (0..n).map(|k| (n - 1 - k) as f64).collect();
    LineSections {
        values,
        jet_multipliers: vec![vec![north], vec![south]],
        jet_scale,
        chart_jacobian,
        chart_id,
    }
}

/// Sphere grid: Gauss–Legendre in `cos θ` times uniform `ϕ`, weights for the area element `d(cos θ) dϕ`.
///
/// Points are `[cos θ, ϕ, r]` with `r` the chart radius of the section evaluation.
pub(crate) fn sphere_grid(n_polar: usize, n_azimuth: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (xs, wx) = gauss_legendre(n_polar);
    let polar: Vec<(f64, f64, f64)> = xs
        .iter()
        .zip(&wx)
        .map(|(&x, &w)| {
            let r = if x >= 0.0 {
                ((1.0 - x) / (1.0 + x)).sqrt()
            } else {
                ((1.0 + x) / (1.0 - x)).sqrt()
            };
            (x, w, r)
        })
        .collect();
    product_with_angles(&polar, n_azimuth)
}

/// Composite Gauss–Legendre in `cos θ` on panels that halve towards both
/// poles, `panels_per_pole` of them per hemisphere, `per_panel` nodes each.
/// Every panel is exact to degree `2·per_panel − 1`, so the composite rule is too.
pub(crate) fn graded_sphere_grid(
    per_panel: usize,
    panels_per_pole: usize,
    n_azimuth: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (xs, wx) = gauss_legendre(per_panel);
    let mut polar = Vec::with_capacity(2 * (panels_per_pole + 1) * per_panel);
    // distance δ to the nearest pole, kept exact so r = √(δ / (2 − δ)) is accurate
    let mut bands: Vec<(f64, f64)> = (0..panels_per_pole)
        .map(|j| (0.5f64.powi(j as i32 + 1), 0.5f64.powi(j as i32)))
        .collect();
    bands.push((0.0, 0.5f64.powi(panels_per_pole as i32)));
    for south in [true, false] {
        for &(lo, hi) in &bands {
            for (&t, &w) in xs.iter().zip(&wx) {
                let delta = lo + 0.5 * (t + 1.0) * (hi - lo);
                let x = if south { -1.0 + delta } else { 1.0 - delta };
                polar.push((x, 0.5 * (hi - lo) * w, (delta / (2.0 - delta)).sqrt()));
            }
        }
    }
    polar.sort_by(|a, b| a.0.total_cmp(&b.0));
    product_with_angles(&polar, n_azimuth)
}

fn product_with_angles(polar: &[(f64, f64, f64)], n_azimuth: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (ps, wp) = uniform_angles(n_azimuth);
    let mut points = Vec::with_capacity(polar.len() * n_azimuth);
    let mut weights = Vec::with_capacity(polar.len() * n_azimuth);
    for &(x, a, r) in polar {
        for (p, b) in ps.iter().zip(&wp) {
            points.push(vec![x, *p, r]);
            weights.push(a * b);
        }
    }
    (points, weights)
}

const TRUNCATION_TARGET: f64 = 1e-10;
const TRUNCATION_LIMIT: f64 = 1e-8;

/// Options for toric surface models beyond the polytope and level.
#[derive(Debug, Clone, Default)]
pub struct ToricOptions {
    /// Truncation radius of the logarithmic box; chosen from the tail bound when absent.
    pub radius: Option<f64>,
    /// Uniform nodes per angle; defaults to one more than the largest exponent difference.
    pub angles: Option<usize>,
}

impl ManifoldModel {
    /// The line with `−mK = O(2m)`, using `resolution` nodes on both sphere axes.
    pub fn p1(m: u32, resolution: usize) -> Result<Self> {
        Self::p1_with_axes(m, resolution, resolution)
    }

    /// The line with separate polar and azimuthal node counts. Fine polar
    /// grids with few angles suit torus-invariant forms far along geodesics.
    pub fn p1_with_axes(m: u32, n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("level m must be positive".into()));
        }
        let required = 2 * m as usize + 2;
        for given in [n_polar, n_azimuth] {
            if given < required {
                return Err(Error::ResolutionTooLow { given, required });
            }
        }
        let (points, weights) = sphere_grid(n_polar, n_azimuth);
        Ok(Self::p1_from_grid(
            m,
            points,
            weights,
            vec![n_polar, n_azimuth],
            2 * n_polar - 1,
        ))
    }

    /// The line on a composite polar grid: panels in `cos θ` halving towards
    /// both poles, `per_panel` Gauss–Legendre nodes each. Resolves the shrinking
    /// scales of forms far along a geodesic with far fewer nodes than a
    /// uniform rule.
    pub fn p1_graded(
        m: u32,
        per_panel: usize,
        panels_per_pole: usize,
        n_azimuth: usize,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("level m must be positive".into()));
        }
        let required = 2 * m as usize + 2;
        for given in [per_panel, n_azimuth] {
            if given < required {
                return Err(Error::ResolutionTooLow { given, required });
            }
        }
        let (points, weights) = graded_sphere_grid(per_panel, panels_per_pole, n_azimuth);
        let n_polar = points.len() / n_azimuth;
        Ok(Self::p1_from_grid(
            m,
            points,
            weights,
            vec![n_polar, n_azimuth],
            2 * per_panel - 1,
        ))
    }

    fn p1_from_grid(
        m: u32,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        axes: Vec<usize>,
        exactness: usize,
    ) -> Self {
        let (n_polar, n_azimuth) = (axes[0], axes[1]);
        let sec = line_sections(2 * m, &points);
        let raw: f64 = weights.iter().sum();
        let mu0: Vec<f64> = weights.iter().map(|w| w / raw).collect();
        let n = 2 * m as usize + 1;
        let grid = QuadratureGrid {
            points,
            weights,
            chart_id: sec.chart_id,
            axis_sizes: vec![n_polar, n_azimuth],
        };
        let meta = ModelMetadata {
            kind: ModelKind::ProjectiveLine,
            m,
            dim: 1,
            basis_size: n,
            grid_axes: vec![n_polar, n_azimuth],
            grid_points: grid.len(),
            normalization: raw,
            reference_volume: 0.0,
            exact_volume: 2.0,
            truncation_radius: None,
            truncation_error_bound: None,
            polar_exactness_degree: Some(exactness),
            angular_exactness_frequency: n_azimuth - 1,
        };
        let mut model = Self {
            meta,
            grid,
            values: sec.values,
            jet_multipliers: sec.jet_multipliers,
            jet_scale: vec![sec.jet_scale],
            chart_jacobian: sec.chart_jacobian,
            mu0,
            torus_weights: Some((0..n as i64).map(|k| vec![k]).collect()),
            exponents: Some((0..n as i64).map(|k| vec![k - m as i64]).collect()),
        };
        model.meta.reference_volume = crate::bergman::reference_volume(&model);
        model
    }

    /// Toric surface of the reflexive polygon `P`, in logarithmic coordinates
    /// `ζ = ρ + iθ` on the open torus, with `resolution` Gauss–Legendre nodes per `ρ` axis.
    pub fn toric(
        polytope: &ReflexivePolytope,
        m: u32,
        resolution: usize,
        opts: &ToricOptions,
    ) -> Result<Self> {
        if polytope.rank() != 2 {
            return Err(Error::InvalidInput("toric models need a polygon".into()));
        }
        if m == 0 {
            return Err(Error::InvalidInput("level m must be positive".into()));
        }
        if resolution < 2 {
            return Err(Error::ResolutionTooLow {
                given: resolution,
                required: 2,
            });
        }
        let exps = polytope.lattice_points(m);
        let n = exps.len();
        let kappa = polytope.support_decay_rate();
        let width = (0..2)
            .map(|a| {
                let lo = exps.iter().map(|u| u[a]).min().unwrap();
                let hi = exps.iter().map(|u| u[a]).max().unwrap();
                (hi - lo) as usize
            })
            .max()
            .unwrap();
        let n_ang = opts.angles.unwrap_or(width + 1);
        if n_ang == 0 {
            return Err(Error::ResolutionTooLow {
                given: 0,
                required: 1,
            });
        }
        let mf = m as f64;
        let log_s = |rho: [f64; 2]| -> (f64, f64) {
            let a = exps
                .iter()
                .map(|u| u[0] as f64 * rho[0] + u[1] as f64 * rho[1])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = exps
                .iter()
                .map(|u| (2.0 * (u[0] as f64 * rho[0] + u[1] as f64 * rho[1] - a)).exp())
                .sum();
            (a, 2.0 * a + s.ln())
        };
        // Mass over the ρ-plane, used for the relative tail bound; a coarse
        // box integral is a lower bound, which keeps the estimate conservative.
        let tail = |r: f64, z: f64| {
            (2.0 * PI).powi(2)
                * 8.0
                * (-2.0 * kappa * r).exp()
                * (r / (2.0 * kappa) + 1.0 / (4.0 * kappa * kappa))
                / z
        };
        let box_mass = |r: f64, nodes: usize| {
            let (xs, ws) = gauss_legendre_on(nodes, -r, r);
            let mut s = 0.0;
            for (x, wx) in xs.iter().zip(&ws) {
                for (y, wy) in xs.iter().zip(&ws) {
                    s += wx * wy * (-log_s([*x, *y]).1 / mf).exp();
                }
            }
            s * (2.0 * PI).powi(2)
        };
        let z_est = box_mass(4.0, 64);
        let radius = match opts.radius {
            Some(r) if r > 0.0 => r,
            Some(r) => {
                return Err(Error::InvalidInput(format!(
                    "truncation radius {r} must be positive"
                )))
            }
            None => {
                let mut r = 1.0;
                while tail(r, z_est) >= TRUNCATION_TARGET {
                    r += 0.25;
                }
                r
            }
        };
        let bound = tail(radius, z_est);
        if bound > TRUNCATION_LIMIT {
            return Err(Error::TruncationTooLarge(bound));
        }

        let (rs, wr) = gauss_legendre_on(resolution, -radius, radius);
        let (ts, wt) = uniform_angles(n_ang);
        let total = resolution * resolution * n_ang * n_ang;
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut values = CMat::zeros(n, total);
        let mut density = Vec::with_capacity(total);
        let mut p = 0;
        for (r1, w1) in rs.iter().zip(&wr) {
            for (r2, w2) in rs.iter().zip(&wr) {
                let (a, ls) = log_s([*r1, *r2]);
                let half = 0.5 * (ls - 2.0 * a);
                let mags: Vec<f64> = exps
                    .iter()
                    .map(|u| (u[0] as f64 * r1 + u[1] as f64 * r2 - a - half).exp())
                    .collect();
                let dens = (-ls / mf).exp();
                for (t1, v1) in ts.iter().zip(&wt) {
                    for (t2, v2) in ts.iter().zip(&wt) {
                        for (k, u) in exps.iter().enumerate() {
                            values[(k, p)] =
                                C64::from_polar(mags[k], -(u[0] as f64 * t1 + u[1] as f64 * t2));
                        }
                        points.push(vec![*r1, *r2, *t1, *t2]);
                        weights.push(w1 * w2 * v1 * v2);
                        density.push(dens);
                        p += 1;
                    }
                }
            }
        }
        let raw: f64 = weights.iter().zip(&density).map(|(w, d)| w * d).sum();
        let mu0 = weights
            .iter()
            .zip(&density)
            .map(|(w, d)| w * d / raw)
            .collect();
        let corner: Vec<i64> = polytope.corner().iter().map(|c| c * m as i64).collect();
        let torus_weights = exps
            .iter()
            .map(|u| vec![u[0] - corner[0], u[1] - corner[1]])
            .collect();
        let grid = QuadratureGrid {
            points,
            weights,
            chart_id: vec![0; total],
            axis_sizes: vec![resolution, resolution, n_ang, n_ang],
        };
        let meta = ModelMetadata {
            kind: ModelKind::Toric2d,
            m,
            dim: 2,
            basis_size: n,
            grid_axes: grid.axis_sizes.clone(),
            grid_points: total,
            normalization: raw,
            reference_volume: 0.0,
            exact_volume: polytope.doubled_volume() as f64,
            truncation_radius: Some(radius),
            truncation_error_bound: Some(bound),
            polar_exactness_degree: None,
            angular_exactness_frequency: n_ang - 1,
        };
        let multipliers = vec![(0..2)
            .map(|a| exps.iter().map(|u| u[a] as f64).collect())
            .collect()];
        let mut model = Self {
            meta,
            grid,
            values,
            jet_multipliers: multipliers,
            jet_scale: vec![vec![C64::from(1.0); total]; 2],
            chart_jacobian: vec![1.0; total],
            mu0,
            torus_weights: Some(torus_weights),
            exponents: Some(exps),
        };
        model.meta.reference_volume = crate::bergman::reference_volume(&model);
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.meta.kind
    }

    pub fn m(&self) -> u32 {
        self.meta.m
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn basis_size(&self) -> usize {
        self.meta.basis_size
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.meta
    }

    /// Section values `v(p)` as the columns of an `N × P` matrix.
    pub fn section_values(&self) -> &CMat {
        &self.values
    }

    /// First holomorphic jet `∂_a` of the sections at point `p` in the normalized frame.
    pub fn section_jet(&self, p: usize, axis: usize) -> Vec<C64> {
        let c = &self.jet_multipliers[self.grid.chart_id[p] as usize][axis];
        let s = self.jet_scale[axis][p];
        (0..self.basis_size())
            .map(|k| self.values[(k, p)] * c[k] * s)
            .collect()
    }

    pub(crate) fn jet_multiplier(&self, p: usize, axis: usize) -> &[f64] {
        &self.jet_multipliers[self.grid.chart_id[p] as usize][axis]
    }

    pub(crate) fn jet_scale(&self, p: usize, axis: usize) -> C64 {
        self.jet_scale[axis][p]
    }

    pub(crate) fn chart_jacobian(&self, p: usize) -> f64 {
        self.chart_jacobian[p]
    }

    /// Point masses of `dμ₀`.
    pub fn reference_masses(&self) -> &[f64] {
        &self.mu0
    }

    /// Density of `dμ₀` with respect to the coordinate measure of each node.
    pub fn ref_volume(&self) -> Vec<f64> {
        self.mu0
            .iter()
            .zip(&self.grid.weights)
            .map(|(m, w)| m / w)
            .collect()
    }

    /// Torus weights `λ` of the basis elements, shifted to be nonnegative.
    pub fn torus_weights(&self) -> Option<&[Vec<i64>]> {
        self.torus_weights.as_deref()
    }

    /// Lattice exponents `u ∈ mP ∩ M` of the basis monomials.
    pub fn exponents(&self) -> Option<&[Vec<i64>]> {
        self.exponents.as_deref()
    }

    /// Discrete `∫ ω₀ⁿ`.
    pub fn volume(&self) -> f64 {
        self.meta.reference_volume
    }

    /// Stable tag identifying the grid that potentials live on.
    pub fn tag(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        eat(self.meta.kind as u64);
        eat(self.meta.m as u64);
        eat(self.len() as u64);
        for a in &self.meta.grid_axes {
            eat(*a as u64);
        }
        eat(self.meta.normalization.to_bits());
        eat(self.meta.polar_exactness_degree.unwrap_or(0) as u64);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_basics() {
        let m = ManifoldModel::p1(1, 4).unwrap();
        assert_eq!(m.basis_size(), 3);
        let m3 = ManifoldModel::p1(3, 8).unwrap();
        assert!((m3.reference_masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ManifoldModel::p1(3, 7),
            Err(Error::ResolutionTooLow { .. })
        ));
    }

    #[test]
    fn frame_is_normalized() {
        let m = ManifoldModel::p1(2, 6).unwrap();
        for p in 0..m.len() {
            let col = m.section_values().column(p);
            assert!((col.norm_squared() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn p1_gram_is_exact() {
        // ∫ v v† dμ₀ = I/N for the binomial basis on the round sphere
        for mm in 1..5u32 {
            let lo = 2 * mm as usize + 2;
            for model in [
                ManifoldModel::p1(mm, lo).unwrap(),
                ManifoldModel::p1_graded(mm, lo, 12, lo).unwrap(),
            ] {
                let v = model.section_values();
                let n = model.basis_size();
                let mut g = CMat::zeros(n, n);
                for p in 0..model.len() {
                    let c = v.column(p);
                    g += c * c.adjoint() * C64::from(model.reference_masses()[p]);
                }
                let err = (g * C64::from(n as f64) - CMat::identity(n, n)).norm();
                assert!(err < 1e-12, "m = {mm}: {err}");
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let model = ManifoldModel::p1(2, 6).unwrap();
        // recompute the holomorphic values w(z) = sqrt(C) z^k and differentiate directly
        for p in [0usize, 7, 20, 33] {
            let pt = &model.grid().points[p];
            let (x, phi) = (pt[0], pt[1]);
            let north = x >= 0.0;
            let r = if north {
                ((1.0 - x) / (1.0 + x)).sqrt()
            } else {
                ((1.0 + x) / (1.0 - x)).sqrt()
            };
            let z = if north {
                C64::from_polar(r, phi)
            } else {
                C64::from_polar(r, -phi)
            };
            let w = |z: C64| -> Vec<C64> {
                (0..5u64)
                    .map(|k| {
                        let e = if north { k } else { 4 - k };
                        C64::from(binomial(4, k).sqrt()) * z.powu(e as u32)
                    })
                    .collect()
            };
            let h = 1e-6;
            let wp = w(z + h);
            let wm = w(z - h);
            let norm = w(z).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let jet = model.section_jet(p, 0);
            for k in 0..5 {
                let fd = ((wp[k] - wm[k]) / (2.0 * h)).conj() / norm;
                assert!((fd - jet[k]).norm() < 1e-8, "p={p} k={k}");
            }
        }
    }

    #[test]
    fn toric_sizes_and_mass() {
        let p2 = ReflexivePolytope::projective_plane();
        let model = ManifoldModel::toric(&p2, 1, 48, &ToricOptions::default()).unwrap();
        assert_eq!(model.basis_size(), 10);
        assert!((model.reference_masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(model.metadata().truncation_error_bound.unwrap() < 1e-10);
        let q = ReflexivePolytope::p1_times_p1();
        let model = ManifoldModel::toric(&q, 1, 24, &ToricOptions::default()).unwrap();
        assert_eq!(model.basis_size(), 9);
        let err = ManifoldModel::toric(
            &p2,
            1,
            24,
            &ToricOptions {
                radius: Some(2.0),
                angles: None,
            },
        );
        assert!(matches!(err, Err(Error::TruncationTooLarge(_))));
    }
}
