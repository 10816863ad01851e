//! Torus-weighted (g-soliton) variants: weight blocks, `ḡₘ`, `ℰᵍₘ`, the
//! g-moment residual, block-diagonal solving and the `𝒟^{g,NA}ₘ` slope.

use crate::bergman::fs_moment;
use crate::error::{Error, Result};
use crate::linalg::{CMat, GeodesicGenerator, HermitianForm, C64};
use crate::model::ManifoldModel;
use crate::slope::{slope_l, SlopeSchedule};
use crate::solver::{solve_with_target, SolveOutcome, SolverConfig, Target};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Off-block Frobenius mass (relative) tolerated for torus-invariant forms.
pub const BLOCK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightBlock {
    pub weight: Vec<i64>,
    pub indices: Vec<usize>,
}

/// Decomposition of the section space into torus weight spaces `R_{m,λ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightDecomposition {
    pub weights: Vec<Vec<i64>>,
    pub blocks: Vec<WeightBlock>,
    pub block_of: Vec<usize>,
}

impl WeightDecomposition {
    pub fn from_weights(weights: Vec<Vec<i64>>) -> Self {
        let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (i, w) in weights.iter().enumerate() {
            groups.entry(w.clone()).or_default().push(i);
        }
        let blocks: Vec<WeightBlock> = groups
            .into_iter()
            .map(|(weight, indices)| WeightBlock { weight, indices })
            .collect();
        let mut block_of = vec![0; weights.len()];
        for (b, blk) in blocks.iter().enumerate() {
            for &i in &blk.indices {
                block_of[i] = b;
            }
        }
        Self {
            weights,
            blocks,
            block_of,
        }
    }

    /// Rank-zero torus: a single block holding every index.
    pub fn trivial(n: usize) -> Self {
        Self::from_weights(vec![Vec::new(); n])
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.indices.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// Weight decomposition of the model's torus action.
pub fn weight_decomposition(model: &ManifoldModel) -> Result<WeightDecomposition> {
    let w = model
        .torus_weights()
        .ok_or(Error::Missing("torus weights"))?;
    Ok(WeightDecomposition::from_weights(w.to_vec()))
}

/// A positive function `g` on the moment polytope, evaluated at `λ/m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GFunction {
    Constant {
        value: f64,
    },
    /// `c₀ + ⟨c, x⟩`.
    Affine {
        c0: f64,
        c: Vec<f64>,
    },
    /// `scale · exp(⟨rate, x − center⟩)`.
    Exponential {
        scale: f64,
        rate: Vec<f64>,
        center: Vec<f64>,
    },
    /// `base + curvature · |x − center|²`.
    Quadratic {
        base: f64,
        curvature: f64,
        center: Vec<f64>,
    },
    /// Piecewise linear interpolation of `(nodes, values)` on a line, constant beyond the ends.
    Tabulated {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GFunction {
    pub fn one() -> Self {
        GFunction::Constant { value: 1.0 }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let dim_ok = |v: &[f64]| {
            if v.len() == x.len() {
                Ok(())
            } else {
                Err(Error::ShapeMismatch {
                    expected: x.len(),
                    got: v.len(),
                })
            }
        };
        let value = match self {
            GFunction::Constant { value } => *value,
            GFunction::Affine { c0, c } => {
                dim_ok(c)?;
                c0 + dot(c, x)
            }
            GFunction::Exponential {
                scale,
                rate,
                center,
            } => {
                dim_ok(rate)?;
                dim_ok(center)?;
                let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                scale * dot(rate, &d).exp()
            }
            GFunction::Quadratic {
                base,
                curvature,
                center,
            } => {
                dim_ok(center)?;
                base + curvature
                    * x.iter()
                        .zip(center)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
            }
            GFunction::Tabulated { nodes, values } => {
                if x.len() != 1 {
                    return Err(Error::InvalidInput(
                        "tabulated g is defined on a line only".into(),
                    ));
                }
                if nodes.len() != values.len()
                    || nodes.is_empty()
                    || nodes.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::InvalidInput(
                        "tabulated g needs increasing nodes matching the values".into(),
                    ));
                }
                let t = x[0];
                match nodes.iter().position(|n| *n >= t) {
                    None => *values.last().unwrap(),
                    Some(0) => values[0],
                    Some(k) => {
                        let s = (t - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
                        values[k - 1] * (1.0 - s) + values[k] * s
                    }
                }
            }
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "g must be positive, got {value} at {x:?}"
            )));
        }
        Ok(value)
    }

    pub fn at_weight(&self, lambda: &[i64], m: u32) -> Result<f64> {
        let x: Vec<f64> = lambda.iter().map(|l| *l as f64 / m as f64).collect();
        if matches!(self, GFunction::Constant { .. }) {
            return self.eval(&[]);
        }
        self.eval(&x)
    }
}

/// `ḡₘ = (1/Nₘ) Σ_λ g(λ/m) N_{m,λ}`.
pub fn gbar(g: &GFunction, dec: &WeightDecomposition, m: u32) -> Result<f64> {
    let mut s = 0.0;
    for b in &dec.blocks {
        s += g.at_weight(&b.weight, m)? * b.indices.len() as f64;
    }
    Ok(s / dec.len() as f64)
}

/// Per-index moment targets `g(λ/m) / (Nₘ ḡₘ)`; they sum to one.
pub fn g_targets(g: &GFunction, dec: &WeightDecomposition, m: u32) -> Result<Vec<f64>> {
    let gb = gbar(g, dec, m)?;
    let n = dec.len() as f64;
    dec.weights
        .iter()
        .map(|w| Ok(g.at_weight(w, m)? / (n * gb)))
        .collect()
}

fn check_blocks(h: &HermitianForm, dec: &WeightDecomposition) -> Result<()> {
    if h.dim() != dec.len() {
        return Err(Error::ShapeMismatch {
            expected: dec.len(),
            got: h.dim(),
        });
    }
    let mass = h.off_block_mass(&dec.block_of);
    if mass > BLOCK_TOL {
        return Err(Error::NotBlockDiagonal(mass));
    }
    Ok(())
}

/// `−(1/m) Σ_blocks t_λ log det(H|_λ)` for per-index weights `t` constant on blocks.
pub(crate) fn weighted_energy(
    h: &HermitianForm,
    target: &[f64],
    block_of: &[usize],
    m: u32,
) -> Result<f64> {
    let mass = h.off_block_mass(block_of);
    if mass > BLOCK_TOL {
        return Err(Error::NotBlockDiagonal(mass));
    }
    let nb = block_of.iter().max().map_or(0, |b| b + 1);
    let mut total = 0.0;
    for b in 0..nb {
        let idx: Vec<usize> = (0..block_of.len()).filter(|&i| block_of[i] == b).collect();
        if idx.is_empty() {
            continue;
        }
        let ld = if let Some(s) = h.spectral().filter(|_| idx.len() == 1) {
            // diagonal entry of a spectral form: read it off without cancellation when possible
            let i = idx[0];
            let col = s.vectors.row(i);
            let hot = (0..s.log_eigs.len())
                .filter(|&k| col[k].norm_sqr() > 0.0)
                .collect::<Vec<_>>();
            if hot.len() == 1 {
                s.log_eigs[hot[0]] + col[hot[0]].norm_sqr().ln()
            } else {
                h.matrix()[(i, i)].re.ln()
            }
        } else {
            let sub = CMat::from_fn(idx.len(), idx.len(), |r, c| h.matrix()[(idx[r], idx[c])]);
            HermitianForm::new(sub)?.log_det()?
        };
        total += target[idx[0]] * ld;
    }
    Ok(-total / m as f64)
}

/// `ℰᵍₘ(H) = −(1/(m Nₘ ḡₘ)) Σ_λ g(λ/m) log det(H|_{R_{m,λ}})`.
pub fn functional_egm(
    h: &HermitianForm,
    g: &GFunction,
    dec: &WeightDecomposition,
    m: u32,
) -> Result<f64> {
    check_blocks(h, dec)?;
    let t = g_targets(g, dec, m)?;
    // block targets carry the 1/(Nₘ ḡₘ) factor and the block weight g(λ/m)
    weighted_energy(h, &t, &dec.block_of, m)
}

/// `𝒟ᵍₘ(H) = ℒ(FS(H)) − ℰᵍₘ(H)`.
pub fn quantised_g_ding(
    model: &ManifoldModel,
    h: &HermitianForm,
    g: &GFunction,
    dec: &WeightDecomposition,
) -> Result<f64> {
    let fm = fs_moment(model, h)?;
    Ok(-fm.log_mass - functional_egm(h, g, dec, model.m())?)
}

/// Whitened residual `Nₘ (M − diag(g(λ/m)/(Nₘ ḡₘ)))` and its Frobenius norm.
pub fn g_moment_residual(
    model: &ManifoldModel,
    h: &HermitianForm,
    g: &GFunction,
    dec: &WeightDecomposition,
) -> Result<(CMat, f64)> {
    check_blocks(h, dec)?;
    let t = g_targets(g, dec, model.m())?;
    let fm = fs_moment(model, h)?;
    let n = dec.len();
    let mut r = &fm.moment * C64::from(n as f64);
    for i in 0..n {
        r[(i, i)] -= C64::from(n as f64 * t[i]);
    }
    let norm = r.norm();
    Ok((r, norm))
}

/// Solves for a g-balanced form on the torus-invariant forms.
pub fn solve_g_balanced(
    model: &ManifoldModel,
    g: &GFunction,
    dec: &WeightDecomposition,
    h_init: &HermitianForm,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    check_blocks(h_init, dec)?;
    let target = Target::Weighted {
        target: g_targets(g, dec, model.m())?,
        block_of: dec.block_of.clone(),
    };
    solve_with_target(model, h_init, cfg, &target)
}

/// `(1/(mNₘḡₘ)) Σ_λ g(λ/m) tr((A + A*)|_λ)`.
pub fn g_trace_term(
    gen: &GeodesicGenerator,
    g: &GFunction,
    dec: &WeightDecomposition,
    m: u32,
) -> Result<f64> {
    let mass = gen.off_block_mass(&dec.block_of);
    if mass > BLOCK_TOL * gen.matrix().norm().max(1.0) {
        return Err(Error::NotBlockDiagonal(mass));
    }
    let t = g_targets(g, dec, m)?;
    Ok((0..dec.len())
        .map(|i| 2.0 * gen.matrix()[(i, i)].re * t[i])
        .sum::<f64>()
        / m as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct GSlopeReport {
    pub slope_l: f64,
    pub gap: f64,
    pub trace_term: f64,
    pub dgna: f64,
}

/// `𝒟^{g,NA}ₘ`: the asymptotic slope of `𝒟ᵍₘ` along a torus-invariant geodesic.
pub fn dgna_slope(
    model: &ManifoldModel,
    gen: &GeodesicGenerator,
    g: &GFunction,
    dec: &WeightDecomposition,
    schedule: &SlopeSchedule,
) -> Result<GSlopeReport> {
    let trace_term = g_trace_term(gen, g, dec, model.m())?;
    let (sl, gap) = slope_l(model, gen, schedule)?;
    Ok(GSlopeReport {
        slope_l: sl,
        gap,
        trace_term,
        dgna: sl - trace_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::{functional_em, moment_residual};
    use crate::model::ToricOptions;
    use crate::polytope::ReflexivePolytope;

    #[test]
    fn p1_weights() {
        let model = ManifoldModel::p1(1, 4).unwrap();
        let dec = weight_decomposition(&model).unwrap();
        assert_eq!(dec.blocks.len(), 3);
        assert_eq!(dec.multiplicities(), vec![1, 1, 1]);
        let g = GFunction::Affine {
            c0: 1.0,
            c: vec![0.25],
        };
        assert!((gbar(&g, &dec, 1).unwrap() - 1.25).abs() < 1e-15);
        let t = g_targets(&g, &dec, 1).unwrap();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(WeightDecomposition::trivial(4).blocks.len(), 1);
    }

    #[test]
    fn p1xp1_weights() {
        let q = ReflexivePolytope::p1_times_p1();
        let model = ManifoldModel::toric(
            &q,
            1,
            8,
            &ToricOptions {
                radius: Some(13.0),
                angles: None,
            },
        )
        .unwrap();
        let dec = weight_decomposition(&model).unwrap();
        let mut ws: Vec<Vec<i64>> = dec.blocks.iter().map(|b| b.weight.clone()).collect();
        ws.sort();
        let expect: Vec<Vec<i64>> = (0..3)
            .flat_map(|i| (0..3).map(move |j| vec![i, j]))
            .collect();
        assert_eq!(ws, expect);
    }

    #[test]
    fn constant_g_reduces() {
        let model = ManifoldModel::p1(2, 10).unwrap();
        let dec = weight_decomposition(&model).unwrap();
        let h = HermitianForm::from_real_diagonal(&[1.3, 0.7, 1.1, 0.9, 1.6]).unwrap();
        let one = GFunction::one();
        assert!(
            (functional_egm(&h, &one, &dec, 2).unwrap() - functional_em(&h, 2).unwrap()).abs()
                < 1e-15
        );
        let (r1, n1) = g_moment_residual(&model, &h, &one, &dec).unwrap();
        let (r0, n0) = moment_residual(&model, &h).unwrap();
        assert!((r1 - r0).norm() < 1e-15 && (n1 - n0).abs() < 1e-15);
        let scaled = h.scale_exp(0.4);
        let g = GFunction::Affine {
            c0: 1.0,
            c: vec![0.3],
        };
        let d = functional_egm(&scaled, &g, &dec, 2).unwrap()
            - functional_egm(&h, &g, &dec, 2).unwrap();
        assert!((d + 0.2).abs() < 1e-14);
    }

    #[test]
    fn non_block_rejected() {
        let dec = WeightDecomposition::from_weights((0..3).map(|k| vec![k]).collect());
        let mut m = CMat::identity(3, 3);
        m[(0, 1)] = C64::from(0.1);
        m[(1, 0)] = C64::from(0.1);
        let h = HermitianForm::new(m).unwrap();
        assert!(matches!(
            functional_egm(&h, &GFunction::one(), &dec, 1),
            Err(Error::NotBlockDiagonal(_))
        ));
    }
}
