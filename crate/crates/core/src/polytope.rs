//! Integral lattice polytopes of rank 1 and 2 in the character lattice `M`.
//!
//! A polytope is stored by its vertices (counter-clockwise in rank 2) and its
//! facets `⟨u, n_F⟩ ≥ −c_F` with `n_F` the primitive inward normal.

use crate::error::{Error, Result};
use num_integer::Integer;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Facet {
    pub normal: Vec<i64>,
    pub constant: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LatticePolytope {
    rank: usize,
    vertices: Vec<Vec<i64>>,
    facets: Vec<Facet>,
}

fn cross(o: &[i64], a: &[i64], b: &[i64]) -> i64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

pub(crate) fn gcd_all(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, x| g.gcd(x))
}

pub(crate) fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LatticePolytope {
    /// Convex hull of the given integer points. Rank is taken from the point
    /// length (1 or 2); the hull must be full-dimensional.
    pub fn from_points(points: &[Vec<i64>]) -> Result<Self> {
        let rank = points
            .first()
            .map(Vec::len)
            .ok_or(Error::InvalidInput("empty vertex list".into()))?;
        if points.iter().any(|p| p.len() != rank) {
            return Err(Error::InvalidInput("vertices have mixed dimensions".into()));
        }
        match rank {
            1 => {
                let lo = points.iter().map(|p| p[0]).min().unwrap();
                let hi = points.iter().map(|p| p[0]).max().unwrap();
                if lo == hi {
                    return Err(Error::InvalidInput("degenerate segment".into()));
                }
                let facets = vec![
                    Facet {
                        normal: vec![1],
                        constant: -lo,
                    },
                    Facet {
                        normal: vec![-1],
                        constant: hi,
                    },
                ];
                Ok(Self {
                    rank,
                    vertices: vec![vec![lo], vec![hi]],
                    facets,
                })
            }
            2 => Self::hull_2d(points),
            r => Err(Error::InvalidInput(format!(
                "rank {r} polytopes are not supported"
            ))),
        }
    }

    fn hull_2d(points: &[Vec<i64>]) -> Result<Self> {
        let mut pts: Vec<Vec<i64>> = points.to_vec();
        pts.sort();
        pts.dedup();
        if pts.len() < 3 {
            return Err(Error::InvalidInput(
                "need at least three distinct vertices".into(),
            ));
        }
        let mut lower: Vec<Vec<i64>> = Vec::new();
        for p in &pts {
            while lower.len() >= 2
                && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0
            {
                lower.pop();
            }
            lower.push(p.clone());
        }
        let mut upper: Vec<Vec<i64>> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2
                && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0
            {
                upper.pop();
            }
            upper.push(p.clone());
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        let vertices = lower;
        if vertices.len() < 3 {
            return Err(Error::InvalidInput("vertices are collinear".into()));
        }
        let k = vertices.len();
        let facets = (0..k)
            .map(|i| {
                let a = &vertices[i];
                let b = &vertices[(i + 1) % k];
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                // inward normal of a counter-clockwise edge
                let g = dx.gcd(&dy);
                let normal = vec![-dy / g, dx / g];
                let constant = -dot(a, &normal);
                Facet { normal, constant }
            })
            .collect();
        Ok(Self {
            rank: 2,
            vertices,
            facets,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn vertices(&self) -> &[Vec<i64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn contains_scaled(&self, u: &[i64], m: i64) -> bool {
        self.facets
            .iter()
            .all(|f| dot(u, &f.normal) >= -m * f.constant)
    }

    /// Whether the origin lies strictly inside.
    pub fn origin_interior(&self) -> bool {
        self.facets.iter().all(|f| f.constant > 0)
    }

    pub fn is_reflexive(&self) -> bool {
        self.facets.iter().all(|f| f.constant == 1)
    }

    /// All points of `mP ∩ M`, sorted lexicographically.
    pub fn lattice_points(&self, m: u32) -> Vec<Vec<i64>> {
        let m = m as i64;
        let lo: Vec<i64> = (0..self.rank)
            .map(|a| m * self.vertices.iter().map(|v| v[a]).min().unwrap())
            .collect();
        let hi: Vec<i64> = (0..self.rank)
            .map(|a| m * self.vertices.iter().map(|v| v[a]).max().unwrap())
            .collect();
        let mut out = Vec::new();
        if self.rank == 1 {
            for x in lo[0]..=hi[0] {
                out.push(vec![x]);
            }
            return out;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                let u = vec![x, y];
                if self.contains_scaled(&u, m) {
                    out.push(u);
                }
            }
        }
        out
    }

    /// `min_{u ∈ P} ⟨u, v⟩`.
    pub fn min_pairing(&self, v: &[i64]) -> i64 {
        self.vertices.iter().map(|u| dot(u, v)).min().unwrap()
    }

    /// Twice the Euclidean area in rank 2, the length in rank 1.
    pub fn doubled_volume(&self) -> i64 {
        if self.rank == 1 {
            return 2 * (self.vertices[1][0] - self.vertices[0][0]);
        }
        let k = self.vertices.len();
        (0..k)
            .map(|i| cross(&[0, 0], &self.vertices[i], &self.vertices[(i + 1) % k]))
            .sum()
    }

    /// Coordinatewise minimum over the vertices.
    pub fn corner(&self) -> Vec<i64> {
        (0..self.rank)
            .map(|a| self.vertices.iter().map(|v| v[a]).min().unwrap())
            .collect()
    }

    /// Barycenter in floating point.
    pub fn barycenter(&self) -> Vec<f64> {
        if self.rank == 1 {
            return vec![0.5 * (self.vertices[0][0] + self.vertices[1][0]) as f64];
        }
        let k = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..k {
            let p = &self.vertices[i];
            let q = &self.vertices[(i + 1) % k];
            let c = (p[0] * q[1] - q[0] * p[1]) as f64;
            a2 += c;
            cx += (p[0] + q[0]) as f64 * c;
            cy += (p[1] + q[1]) as f64 * c;
        }
        vec![cx / (3.0 * a2), cy / (3.0 * a2)]
    }

    /// Minimum of the support function `h(ρ) = max_{u ∈ P} ⟨u, ρ⟩` over the
    /// boundary of the sup-norm unit square. It controls the exponential decay
    /// rate of the toric integrands.
    pub fn support_decay_rate(&self) -> f64 {
        let h = |p: [f64; 2]| {
            self.vertices
                .iter()
                .map(|u| u[0] as f64 * p[0] + u[1] as f64 * p[1])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let corners = [
            [1.0, -1.0],
            [1.0, 1.0],
            [-1.0, 1.0],
            [-1.0, -1.0],
            [1.0, -1.0],
        ];
        let mut best = f64::INFINITY;
        for e in 0..4 {
            let (a, b) = (corners[e], corners[e + 1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            best = best.min(h(a));
            for i in 0..self.vertices.len() {
                for j in i + 1..self.vertices.len() {
                    let w = [
                        (self.vertices[i][0] - self.vertices[j][0]) as f64,
                        (self.vertices[i][1] - self.vertices[j][1]) as f64,
                    ];
                    let den = w[0] * d[0] + w[1] * d[1];
                    if den != 0.0 {
                        let s = -(w[0] * a[0] + w[1] * a[1]) / den;
                        if (0.0..=1.0).contains(&s) {
                            best = best.min(h([a[0] + s * d[0], a[1] + s * d[1]]));
                        }
                    }
                }
            }
        }
        best
    }
}

/// A reflexive polytope: origin interior and every facet at height `−1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReflexivePolytope(LatticePolytope);

impl ReflexivePolytope {
    pub fn new(p: LatticePolytope) -> Result<Self> {
        if !p.origin_interior() {
            return Err(Error::NotReflexive(
                "origin is not an interior point".into(),
            ));
        }
        if let Some(f) = p.facets.iter().find(|f| f.constant != 1) {
            return Err(Error::NotReflexive(format!(
                "facet with normal {:?} sits at height {}",
                f.normal, -f.constant
            )));
        }
        Ok(Self(p))
    }

    pub fn from_vertices(v: &[Vec<i64>]) -> Result<Self> {
        Self::new(LatticePolytope::from_points(v)?)
    }

    pub fn projective_line() -> Self {
        Self::from_vertices(&[vec![-1], vec![1]]).unwrap()
    }

    pub fn projective_plane() -> Self {
        Self::from_vertices(&[vec![-1, -1], vec![2, -1], vec![-1, 2]]).unwrap()
    }

    pub fn p1_times_p1() -> Self {
        Self::from_vertices(&[vec![-1, -1], vec![1, -1], vec![1, 1], vec![-1, 1]]).unwrap()
    }

    /// Blow-up of the plane at one torus fixed point.
    pub fn blowup_p2() -> Self {
        Self::from_vertices(&[vec![-1, 0], vec![0, -1], vec![2, -1], vec![-1, 2]]).unwrap()
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "p1" => Ok(Self::projective_line()),
            "p2" => Ok(Self::projective_plane()),
            "p1xp1" => Ok(Self::p1_times_p1()),
            "bl1p2" => Ok(Self::blowup_p2()),
            other => Err(Error::InvalidInput(format!(
                "unknown polytope name {other:?}"
            ))),
        }
    }

    pub fn as_lattice(&self) -> &LatticePolytope {
        &self.0
    }

    /// Primitive ray generators of the normal fan, in facet order.
    pub fn rays(&self) -> Vec<Vec<i64>> {
        self.0.facets.iter().map(|f| f.normal.clone()).collect()
    }
}

impl std::ops::Deref for ReflexivePolytope {
    type Target = LatticePolytope;
    fn deref(&self) -> &LatticePolytope {
        &self.0
    }
}

/// A torus-invariant divisorial valuation, given by a primitive vector of `N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ToricValuation(Vec<i64>);

impl ToricValuation {
    pub fn new(v: Vec<i64>) -> Result<Self> {
        match gcd_all(&v) {
            0 => Err(Error::InvalidInput(
                "valuation vector must be nonzero".into(),
            )),
            1 => Ok(Self(v)),
            _ => Err(Error::NotPrimitive(v)),
        }
    }

    pub fn vector(&self) -> &[i64] {
        &self.0
    }
}

impl std::fmt::Display for ToricValuation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        write!(f, "({})", parts.join(" "))
    }
}
