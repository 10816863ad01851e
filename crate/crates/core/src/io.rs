//! File formats: hermitian forms and generators as JSON, potentials as CSV,
//! polytopes as plain vertex lists, model metadata as JSON.

use crate::bergman::Potential;
use crate::error::{Error, Result};
use crate::linalg::{CMat, GeodesicGenerator, HermitianForm, C64};
use crate::model::ManifoldModel;
use crate::polytope::LatticePolytope;
use serde::{Deserialize, Serialize};

/// A complex square matrix as `{"n": N, "entries": [[re, im], ...]}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        Self { n, entries }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        if self.entries.len() != self.n * self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n * self.n,
                got: self.entries.len(),
            });
        }
        Ok(CMat::from_fn(self.n, self.n, |i, j| {
            let [re, im] = self.entries[i * self.n + j];
            C64::new(re, im)
        }))
    }
}

pub fn form_to_json(h: &HermitianForm) -> String {
    serde_json::to_string_pretty(&MatrixJson::from_matrix(h.matrix())).expect("matrix serializes")
}

pub fn form_from_json(text: &str) -> Result<HermitianForm> {
    let m: MatrixJson = serde_json::from_str(text)?;
    HermitianForm::new(m.to_matrix()?)
}

pub fn potential_to_csv(phi: &Potential) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in phi.values.iter().enumerate() {
        s.push_str(&format!("{i},{v:e}\n"));
    }
    s
}

pub fn potential_from_csv(model: &ManifoldModel, text: &str) -> Result<Potential> {
    let mut values = vec![f64::NAN; model.len()];
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidInput(format!("line {}: expected index,value", k + 1)))?;
        let i: usize = i
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: bad index", k + 1)))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: bad value", k + 1)))?;
        *values.get_mut(i).ok_or(Error::ShapeMismatch {
            expected: model.len(),
            got: i + 1,
        })? = v;
    }
    Potential::from_values(model, values)
}

/// Generator input: either a full matrix, or eigenvalues with a unitary
/// whose columns are the eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitary: Option<MatrixJson>,
    #[serde(default)]
    pub integral: bool,
}

impl GeneratorJson {
    pub fn to_generator(&self) -> Result<GeodesicGenerator> {
        match (&self.matrix, &self.eigenvalues) {
            (Some(m), None) => GeodesicGenerator::new(m.to_matrix()?, self.integral),
            (None, Some(ev)) => match &self.unitary {
                Some(u) => GeodesicGenerator::from_eigen(ev, u.to_matrix()?, self.integral),
                None => GeodesicGenerator::from_diagonal(ev, self.integral),
            },
            _ => Err(Error::InvalidInput(
                "generator needs exactly one of \"matrix\" or \"eigenvalues\"".into(),
            )),
        }
    }
}

pub fn generator_from_json(text: &str) -> Result<GeodesicGenerator> {
    serde_json::from_str::<GeneratorJson>(text)?.to_generator()
}

pub fn generator_to_json(a: &GeodesicGenerator) -> String {
    let g = GeneratorJson {
        matrix: Some(MatrixJson::from_matrix(a.matrix())),
        eigenvalues: None,
        unitary: None,
        integral: a.integral_spectrum(),
    };
    serde_json::to_string_pretty(&g).expect("generator serializes")
}

pub fn metadata_json(model: &ManifoldModel) -> String {
    serde_json::to_string_pretty(model.metadata()).expect("metadata serializes")
}

/// Parses a vertex list: one vertex per line, integer coordinates separated
/// by whitespace or commas, `#` starting a comment.
pub fn parse_polytope(text: &str) -> Result<LatticePolytope> {
    let mut pts = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let coords = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<i64>().map_err(|_| {
                    Error::InvalidInput(format!("line {}: {s:?} is not an integer", k + 1))
                })
            })
            .collect::<Result<Vec<i64>>>()?;
        pts.push(coords);
    }
    if pts.is_empty() {
        return Err(Error::InvalidInput(
            "polytope file lists no vertices".into(),
        ));
    }
    LatticePolytope::from_points(&pts)
}
