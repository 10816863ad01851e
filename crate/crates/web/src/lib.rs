//! Browser bindings. Every export returns a JSON string so the page can
//! plot it without extra glue.

use bergman_balance::bergman::{
    bergman_function, bergman_geodesic, eval_fs_potential, geodesic_sample,
};
use bergman_balance::delta::{default_candidates, delta_m_toric};
use bergman_balance::io::parse_polytope;
use bergman_balance::polytope::ReflexivePolytope;
use bergman_balance::{GeodesicGenerator, ManifoldModel};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn line_generator(m: u32, eigenvalues: &[f64]) -> Result<GeodesicGenerator, JsValue> {
    let n = 2 * m as usize + 1;
    if eigenvalues.len() != n {
        return Err(js(format!(
            "level {m} needs {n} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    GeodesicGenerator::from_diagonal(eigenvalues, false).map_err(js)
}

/// Bergman function and FS potential of `H_t = exp(−2t·diag(eigenvalues))`
/// on the line, against `cos θ` (the forms are rotation invariant).
#[wasm_bindgen]
pub fn bergman_profile(
    m: u32,
    eigenvalues: &[f64],
    t: f64,
    resolution: usize,
) -> Result<String, JsValue> {
    let model = ManifoldModel::p1_with_axes(m, resolution, 2 * m as usize + 2).map_err(js)?;
    let h = bergman_geodesic(&line_generator(m, eigenvalues)?, t).map_err(js)?;
    let rho = bergman_function(&model, &h).map_err(js)?;
    let phi = eval_fs_potential(&model, &h).map_err(js)?;
    let grid = model.grid();
    // first azimuth slice: one node per polar position
    let stride = grid.axis_sizes[1];
    let idx: Vec<usize> = (0..grid.axis_sizes[0]).map(|i| i * stride).collect();
    let out = json!({
        "x": idx.iter().map(|&i| grid.points[i][0]).collect::<Vec<_>>(),
        "rho": idx.iter().map(|&i| rho.values[i]).collect::<Vec<_>>(),
        "phi": idx.iter().map(|&i| phi.values[i]).collect::<Vec<_>>(),
    });
    Ok(out.to_string())
}

/// `ℒ`, `ℰₘ`, `𝒟ₘ` and their `t`-derivatives along the geodesic of a diagonal
/// generator, at `steps + 1` equally spaced times in `[0, t_max]`.
#[wasm_bindgen]
pub fn slope_curve(
    m: u32,
    eigenvalues: &[f64],
    t_max: f64,
    steps: usize,
) -> Result<String, JsValue> {
    let model = ManifoldModel::p1_graded(m, (2 * m as usize + 2).max(8), 24, 2 * m as usize + 2)
        .map_err(js)?;
    let gen = line_generator(m, eigenvalues)?;
    let steps = steps.clamp(1, 400);
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = t_max * k as f64 / steps as f64;
        let s = geodesic_sample(&model, &gen, t, true).map_err(js)?;
        rows.push(json!({
            "t": t,
            "l": s.l,
            "em": s.em,
            "ding": s.quantised_ding(),
            "dl_dt": s.dl_dt,
            "de_dt": s.de_dt,
            "dding_dt": s.ding_derivative(),
        }));
    }
    let trace = gen.trace_sym() / (m as f64 * eigenvalues.len() as f64);
    Ok(json!({ "rows": rows, "trace_term": trace }).to_string())
}

/// `δₘ` upper bounds for `m = 1..=m_max`. `polytope` is a name (`p2`,
/// `p1xp1`, `bl1p2`, `p1`) or a vertex list, one vertex per line.
#[wasm_bindgen]
pub fn delta_table(polytope: &str, m_max: u32, bound: u32) -> Result<String, JsValue> {
    let p = match ReflexivePolytope::named(polytope.trim()) {
        Ok(p) => p,
        Err(_) => ReflexivePolytope::new(parse_polytope(polytope).map_err(js)?).map_err(js)?,
    };
    let candidates = default_candidates(&p, bound.clamp(1, 6) as i64);
    let mut rows = Vec::new();
    for m in 1..=m_max.clamp(1, 12) {
        let r = delta_m_toric(&p, m, &candidates).map_err(js)?;
        rows.push(json!({
            "m": m,
            "delta": r.value.to_string(),
            "value": *r.value.numer() as f64 / *r.value.denom() as f64,
            "argmin": r.argmin,
        }));
    }
    Ok(json!({ "vertices": p.vertices(), "rows": rows, "label": "toric upper bound" }).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: Result<String, JsValue>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn reference_profile_is_flat() {
        let v = parse(bergman_profile(2, &[0.0; 5], 0.0, 12));
        let rho: Vec<f64> = serde_json::from_value(v["rho"].clone()).unwrap();
        assert_eq!(rho.len(), 12);
        let spread = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - rho.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-10);
    }

    #[test]
    fn ding_derivative_grows_along_the_curve() {
        let v = parse(slope_curve(2, &[1.0, 0.0, 0.0, 0.0, 0.0], 4.0, 8));
        let d: Vec<f64> = v["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["dding_dt"].as_f64().unwrap())
            .collect();
        assert!(d.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn delta_table_for_the_plane() {
        let v = parse(delta_table("p2", 3, 2));
        assert!(v["rows"]
            .as_array()
            .unwrap()
            .iter()
            .all(|r| r["delta"] == "1"));
        let hex = parse(delta_table("1 0\n1 1\n0 1\n-1 0\n-1 -1\n0 -1\n", 2, 2));
        assert_eq!(hex["rows"][1]["delta"], "1");
    }
}
