//! Lattice counting for `Sₘ`, its weighted and coupled variants, toric log
//! discrepancies and the resulting `δₘ`-type ratios over torus-invariant
//! divisorial valuations. Everything except the weighted variant is exact.

use crate::error::{Error, Result};
use crate::polytope::{dot, LatticePolytope, ReflexivePolytope, ToricValuation};
use crate::soliton::GFunction;
use num_rational::Ratio;
use num_traits::Zero;
use serde::Serialize;
use std::collections::BTreeSet;

pub type Rational = Ratio<i128>;

/// Label attached to every minimum over a finite candidate set.
pub const UPPER_BOUND_LABEL: &str = "toric upper bound";

/// All points of `mP ∩ M`; `m = 0` gives the origin alone.
pub fn lattice_points(p: &LatticePolytope, m: u32) -> Vec<Vec<i64>> {
    p.lattice_points(m)
}

fn check_rank(p: &LatticePolytope, v: &ToricValuation) -> Result<()> {
    if v.vector().len() != p.rank() {
        return Err(Error::ShapeMismatch {
            expected: p.rank(),
            got: v.vector().len(),
        });
    }
    Ok(())
}

/// `ord_v(u) = ⟨u, v⟩ − m·min_{u′∈P} ⟨u′, v⟩`, nonnegative on `mP`.
pub fn order(p: &LatticePolytope, m: u32, u: &[i64], v: &ToricValuation) -> i64 {
    dot(u, v.vector()) - m as i64 * p.min_pairing(v.vector())
}

/// `Sₘ(v) = (1/(m Nₘ)) Σ_{u ∈ mP∩M} ord_v(u)`.
pub fn s_m(p: &LatticePolytope, m: u32, v: &ToricValuation) -> Result<Rational> {
    check_rank(p, v)?;
    if m == 0 {
        return Err(Error::InvalidInput("level m must be positive".into()));
    }
    let pts = p.lattice_points(m);
    let total: i128 = pts.iter().map(|u| order(p, m, u, v) as i128).sum();
    Ok(Rational::new(total, m as i128 * pts.len() as i128))
}

/// `Sₘ` through the filtration: `Σ_{j≥1} dim 𝓕^{≥j} / (m Nₘ)`, counting
/// the monomials of order at least `j` level by level.
pub fn s_m_filtration(p: &LatticePolytope, m: u32, v: &ToricValuation) -> Result<Rational> {
    check_rank(p, v)?;
    if m == 0 {
        return Err(Error::InvalidInput("level m must be positive".into()));
    }
    let pts = p.lattice_points(m);
    let ords: Vec<i64> = pts.iter().map(|u| order(p, m, u, v)).collect();
    let top = ords.iter().copied().max().unwrap_or(0);
    let total: i128 = (1..=top)
        .map(|j| ords.iter().filter(|&&o| o >= j).count() as i128)
        .sum();
    Ok(Rational::new(total, m as i128 * pts.len() as i128))
}

/// Two-dimensional cross product.
fn cross(a: &[i64], b: &[i64]) -> i128 {
    a[0] as i128 * b[1] as i128 - a[1] as i128 * b[0] as i128
}

/// A cone of the normal fan containing a valuation, with the coordinates
/// of the valuation in its ray generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanCone {
    pub rays: Vec<Vec<i64>>,
    #[serde(serialize_with = "ser_rationals")]
    pub coefficients: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogDiscrepancy {
    #[serde(serialize_with = "ser_rational")]
    pub value: Rational,
    pub cone: FanCone,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ser_rationals<S: serde::Serializer>(
    r: &[Rational],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(r.iter().map(|x| x.to_string()))
}

/// `A(v)`: the function on the normal fan that is linear on each cone and
/// equals one on every primitive ray generator, evaluated at `v`.
pub fn log_discrepancy(p: &ReflexivePolytope, v: &ToricValuation) -> Result<LogDiscrepancy> {
    check_rank(p, v)?;
    let rays = p.rays();
    let w = v.vector();
    if p.rank() == 1 {
        let ray = rays
            .iter()
            .find(|r| r[0].signum() == w[0].signum())
            .ok_or(Error::Missing("ray"))?;
        let c = Rational::new(w[0] as i128, ray[0] as i128);
        return Ok(LogDiscrepancy {
            value: c,
            cone: FanCone {
                rays: vec![ray.clone()],
                coefficients: vec![c],
            },
        });
    }
    let mut sorted = rays.clone();
    sorted.sort_by(|a, b| {
        (a[1] as f64)
            .atan2(a[0] as f64)
            .total_cmp(&(b[1] as f64).atan2(b[0] as f64))
    });
    let k = sorted.len();
    for i in 0..k {
        let (r, s) = (&sorted[i], &sorted[(i + 1) % k]);
        let det = cross(r, s);
        if det <= 0 {
            continue;
        }
        // Cramer's rule for w = a r + b s
        let a = Rational::new(cross(w, s), det);
        let b = Rational::new(cross(r, w), det);
        if a >= Rational::zero() && b >= Rational::zero() {
            return Ok(LogDiscrepancy {
                value: a + b,
                cone: FanCone {
                    rays: vec![r.clone(), s.clone()],
                    coefficients: vec![a, b],
                },
            });
        }
    }
    Err(Error::InvalidInput(format!(
        "valuation {v} lies in no cone of the normal fan"
    )))
}

/// `A(v) = −min_{u∈P} ⟨u, v⟩`, the support function form valid for reflexive `P`.
pub fn support_discrepancy(p: &ReflexivePolytope, v: &ToricValuation) -> Rational {
    Rational::from_integer(-p.min_pairing(v.vector()) as i128)
}

/// Ray generators followed by every other primitive vector of sup-norm at most `bound`.
pub fn default_candidates(p: &ReflexivePolytope, bound: i64) -> Vec<ToricValuation> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in p.rays() {
        if seen.insert(r.clone()) {
            out.push(ToricValuation::new(r).expect("ray generators are primitive"));
        }
    }
    let range = -bound..=bound;
    let vectors: Vec<Vec<i64>> = if p.rank() == 1 {
        range.map(|x| vec![x]).collect()
    } else {
        range
            .clone()
            .flat_map(|x| range.clone().map(move |y| vec![x, y]))
            .collect()
    };
    for v in vectors {
        if !seen.contains(&v) {
            if let Ok(t) = ToricValuation::new(v.clone()) {
                seen.insert(v);
                out.push(t);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaCandidate {
    pub v: ToricValuation,
    #[serde(serialize_with = "ser_rational")]
    pub a: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub s: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub ratio: Rational,
    pub cone: FanCone,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaResult {
    pub m: u32,
    #[serde(serialize_with = "ser_rational")]
    pub value: Rational,
    pub argmin: ToricValuation,
    pub label: &'static str,
    pub candidates: Vec<DeltaCandidate>,
}

impl DeltaResult {
    /// Rows `m,v,A,S_m,ratio`, one per candidate.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for c in &self.candidates {
            s.push_str(&format!("{},{},{},{},{}\n", self.m, c.v, c.a, c.s, c.ratio));
        }
        s
    }
}

pub const DELTA_CSV_HEADER: &str = "m,v,A,S_m,ratio\n";

/// `min A(v)/Sₘ(v)` over the candidates, an upper bound for `δₘ`.
pub fn delta_m_toric(
    p: &ReflexivePolytope,
    m: u32,
    candidates: &[ToricValuation],
) -> Result<DeltaResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate valuations".into()));
    }
    let rows = crate::par::map_points(candidates.len(), |i| -> Result<DeltaCandidate> {
        let v = &candidates[i];
        let ld = log_discrepancy(p, v)?;
        let s = s_m(p, m, v)?;
        if s.is_zero() {
            return Err(Error::InvalidInput(format!("S_m vanishes at {v}")));
        }
        Ok(DeltaCandidate {
            v: v.clone(),
            a: ld.value,
            s,
            ratio: ld.value / s,
            cone: ld.cone,
        })
    });
    let rows: Vec<DeltaCandidate> = rows.into_iter().collect::<Result<_>>()?;
    // first minimizer in candidate order
    let best = rows
        .iter()
        .fold(&rows[0], |b, r| if r.ratio < b.ratio { r } else { b });
    Ok(DeltaResult {
        m,
        value: best.ratio,
        argmin: best.v.clone(),
        label: UPPER_BOUND_LABEL,
        candidates: rows,
    })
}

/// `Sᵍₘ(v) = (1/(m Nₘ ḡₘ)) Σ_λ g(λ/m) Σ_a dim 𝓕^{≥a} R_{m,λ}`, with the
/// torus weight of a monomial `u` taken as `u − m·corner(P)` projected by the
/// rows of `torus` (all coordinates when absent).
pub fn s_m_weighted(
    p: &LatticePolytope,
    m: u32,
    v: &ToricValuation,
    g: &GFunction,
    torus: Option<&[Vec<i64>]>,
) -> Result<f64> {
    check_rank(p, v)?;
    if m == 0 {
        return Err(Error::InvalidInput("level m must be positive".into()));
    }
    let corner = p.corner();
    let mut fibers: std::collections::BTreeMap<Vec<i64>, (usize, i64)> = Default::default();
    for u in p.lattice_points(m) {
        let shifted: Vec<i64> = u
            .iter()
            .zip(&corner)
            .map(|(a, c)| a - m as i64 * c)
            .collect();
        let weight = match torus {
            Some(rows) => rows.iter().map(|r| dot(r, &shifted)).collect(),
            None => shifted,
        };
        let e = fibers.entry(weight).or_insert((0, 0));
        e.0 += 1;
        e.1 += order(p, m, &u, v);
    }
    let n: usize = fibers.values().map(|f| f.0).sum();
    let (mut num, mut gsum) = (0.0, 0.0);
    for (weight, (count, ords)) in &fibers {
        let gv = g.at_weight(weight, m)?;
        num += gv * *ords as f64;
        gsum += gv * *count as f64;
    }
    // ḡₘ Nₘ = Σ_λ g(λ/m) N_{m,λ}
    debug_assert_eq!(n, p.lattice_points(m).len());
    Ok(num / (m as f64 * gsum))
}

/// Fiber sizes `N_{m,λ}` of the torus weight decomposition used by [`s_m_weighted`].
pub fn weight_fibers(
    p: &LatticePolytope,
    m: u32,
    torus: Option<&[Vec<i64>]>,
) -> Vec<(Vec<i64>, usize)> {
    let corner = p.corner();
    let mut fibers: std::collections::BTreeMap<Vec<i64>, usize> = Default::default();
    for u in p.lattice_points(m) {
        let shifted: Vec<i64> = u
            .iter()
            .zip(&corner)
            .map(|(a, c)| a - m as i64 * c)
            .collect();
        let weight = match torus {
            Some(rows) => rows.iter().map(|r| dot(r, &shifted)).collect(),
            None => shifted,
        };
        *fibers.entry(weight).or_insert(0) += 1;
    }
    fibers.into_iter().collect()
}

/// `Sₘ(Lᵢ; v)` for each factor polytope `Pᵢ`.
pub fn s_m_coupled(
    factors: &[LatticePolytope],
    m: u32,
    v: &ToricValuation,
) -> Result<Vec<Rational>> {
    if factors.is_empty() {
        return Err(Error::InvalidInput("no factor polytopes".into()));
    }
    let rank = factors[0].rank();
    if let Some(bad) = factors.iter().find(|f| f.rank() != rank) {
        return Err(Error::ShapeMismatch {
            expected: rank,
            got: bad.rank(),
        });
    }
    factors.iter().map(|f| s_m(f, m, v)).collect()
}

/// `A(v) / Σᵢ Sₘ(Lᵢ; v)`, one candidate ratio of the coupled invariant.
pub fn coupled_ratio(
    p: &ReflexivePolytope,
    factors: &[LatticePolytope],
    m: u32,
    v: &ToricValuation,
) -> Result<Rational> {
    if factors.iter().any(|f| f.rank() != p.rank()) {
        return Err(Error::ShapeMismatch {
            expected: p.rank(),
            got: factors
                .iter()
                .map(|f| f.rank())
                .find(|r| *r != p.rank())
                .unwrap_or(0),
        });
    }
    let s: Rational = s_m_coupled(factors, m, v)?
        .into_iter()
        .fold(Rational::zero(), |a, b| a + b);
    if s.is_zero() {
        return Err(Error::InvalidInput(format!("coupled S_m vanishes at {v}")));
    }
    Ok(log_discrepancy(p, v)?.value / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(v: &[i64]) -> ToricValuation {
        ToricValuation::new(v.to_vec()).unwrap()
    }

    fn one() -> Rational {
        Rational::from_integer(1)
    }

    #[test]
    fn line_has_unit_s_and_delta() {
        let p = ReflexivePolytope::projective_line();
        for m in 1..=20 {
            assert_eq!(s_m(&p, m, &tv(&[1])).unwrap(), one());
            assert_eq!(s_m(&p, m, &tv(&[-1])).unwrap(), one());
            let d = delta_m_toric(&p, m, &default_candidates(&p, 3)).unwrap();
            assert_eq!(d.value, one());
            assert_eq!(d.label, UPPER_BOUND_LABEL);
        }
        assert_eq!(lattice_points(&p, 0), vec![vec![0]]);
        assert_eq!(lattice_points(&p, 2).len(), 5);
    }

    #[test]
    fn plane_values() {
        let p = ReflexivePolytope::projective_plane();
        assert_eq!(lattice_points(&p, 1).len(), 10);
        assert_eq!(s_m(&p, 1, &tv(&[1, 0])).unwrap(), one());
        let ld = log_discrepancy(&p, &tv(&[1, 1])).unwrap();
        assert_eq!(ld.value, Rational::from_integer(2));
        assert_eq!(ld.cone.rays.len(), 2);
        let rays: Vec<ToricValuation> = p.rays().into_iter().map(|r| tv(&r)).collect();
        assert_eq!(delta_m_toric(&p, 1, &rays).unwrap().value, one());
        assert!(matches!(
            ToricValuation::new(vec![2, 0]),
            Err(Error::NotPrimitive(_))
        ));
        assert!(ToricValuation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn filtration_and_support_oracles_agree() {
        for name in ["p1", "p2", "p1xp1", "bl1p2"] {
            let p = ReflexivePolytope::named(name).unwrap();
            for v in default_candidates(&p, 3) {
                assert_eq!(
                    log_discrepancy(&p, &v).unwrap().value,
                    support_discrepancy(&p, &v)
                );
                for m in 1..=4 {
                    assert_eq!(s_m(&p, m, &v).unwrap(), s_m_filtration(&p, m, &v).unwrap());
                }
            }
            for r in p.rays() {
                assert_eq!(log_discrepancy(&p, &tv(&r)).unwrap().value, one());
            }
        }
    }

    #[test]
    fn blowup_is_below_one() {
        let p = ReflexivePolytope::blowup_p2();
        let cands = default_candidates(&p, 3);
        for m in 1..=6 {
            let d = delta_m_toric(&p, m, &cands).unwrap();
            assert!(d.value < one(), "m = {m}: {}", d.value);
        }
    }

    #[test]
    fn weighted_reduces_and_matches_enumeration() {
        let p = ReflexivePolytope::projective_plane();
        let v = tv(&[1, 2]);
        let g1 = GFunction::one();
        for m in 1..=3 {
            let exact = s_m(&p, m, &v).unwrap();
            let w = s_m_weighted(&p, m, &v, &g1, None).unwrap();
            assert!((w - *exact.numer() as f64 / *exact.denom() as f64).abs() < 1e-14);
            let n: usize = weight_fibers(&p, m, None).iter().map(|f| f.1).sum();
            assert_eq!(n, lattice_points(&p, m).len());
        }
        // the line at m = 1: monomials u ∈ {−1, 0, 1}, weights and orders both u + 1
        let line = ReflexivePolytope::projective_line();
        let g = GFunction::Affine {
            c0: 1.0,
            c: vec![0.25],
        };
        let direct: f64 = (0..=2)
            .map(|k| (1.0 + 0.25 * k as f64) * k as f64)
            .sum::<f64>()
            / (0..=2).map(|k| 1.0 + 0.25 * k as f64).sum::<f64>();
        let got = s_m_weighted(&line, 1, &tv(&[1]), &g, None).unwrap();
        assert!((got - direct).abs() < 1e-14);
    }

    #[test]
    fn coupled_split_of_the_line() {
        let half = LatticePolytope::from_points(&[vec![0], vec![1]]).unwrap();
        let p = ReflexivePolytope::projective_line();
        for m in 1..=8 {
            let s = s_m_coupled(&[half.clone(), half.clone()], m, &tv(&[1])).unwrap();
            assert_eq!(s, vec![Rational::new(1, 2); 2]);
            assert_eq!(
                coupled_ratio(&p, &[half.clone(), half.clone()], m, &tv(&[1])).unwrap(),
                one()
            );
            assert_eq!(
                s_m_coupled(&[p.as_lattice().clone()], m, &tv(&[1])).unwrap(),
                vec![s_m(&p, m, &tv(&[1])).unwrap()]
            );
        }
        let square = ReflexivePolytope::p1_times_p1();
        assert!(s_m_coupled(&[half, square.as_lattice().clone()], 1, &tv(&[1])).is_err());
    }
}
