//! Python bindings. Complexes and profiles cross the boundary as JSON
//! strings, in the same schemas the CLI writes.

use morse_pi1::flow::Landscape;
use morse_pi1::geometry::{Manifold, ScalarField};
use morse_pi1::mscomplex::{ExtractOptions, MorseComplexData, Provenance};
use morse_pi1::pi1::{presentation, Budget};
use morse_pi1::relpi1::{base_for, build_relative_complex, rel_classes, BaseSide, InterpolationProfile};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn manifold(name: &str) -> PyResult<Manifold> {
    match name {
        "torus" => Ok(Manifold::Torus),
        "sphere" => Ok(Manifold::Sphere),
        other => Err(PyValueError::new_err(format!("unknown manifold {other:?}, expected \"torus\" or \"sphere\""))),
    }
}

/// Extracts the Morse complex of `field` on `manifold` and returns it as
/// JSON.
#[pyfunction]
#[pyo3(signature = (manifold_name, field, seeds_per_axis = 8, scenario_hash = String::new()))]
fn analyze(py: Python<'_>, manifold_name: &str, field: &str, seeds_per_axis: usize, scenario_hash: String) -> PyResult<String> {
    let f = ScalarField::parse(manifold(manifold_name)?, field).map_err(err)?;
    py.detach(|| {
        let land = Landscape::analyze(f, seeds_per_axis).map_err(err)?;
        let d = MorseComplexData::extract(&land, &ExtractOptions::default(), Provenance::Numerical { scenario_hash }).map_err(err)?;
        Ok(d.to_json())
    })
}

/// `(rank, torsion)` of the abelianized fundamental group of a complex.
#[pyfunction]
fn abelianization(complex_json: &str) -> PyResult<(usize, Vec<i64>)> {
    let d = MorseComplexData::from_json(complex_json).map_err(err)?;
    let ab = presentation(&d).map_err(err)?.abelianization();
    Ok((ab.rank, ab.torsion))
}

/// Generator labels and relators (as strings) of the presentation.
#[pyfunction]
fn presentation_json(complex_json: &str) -> PyResult<String> {
    let d = MorseComplexData::from_json(complex_json).map_err(err)?;
    Ok(presentation(&d).map_err(err)?.to_json())
}

/// Labels of the relative classes of words up to `max_len` letters.
/// `base_json` is `{"kind": "formal", "side": "neg_inf"}` or
/// `{"kind": "slab", "slab": i}`.
#[pyfunction]
#[pyo3(signature = (profile_json, base_json, max_len, max_states = None))]
fn relative_classes(py: Python<'_>, profile_json: &str, base_json: &str, max_len: usize, max_states: Option<usize>) -> PyResult<Vec<String>> {
    let profile: InterpolationProfile = serde_json::from_str(profile_json).map_err(err)?;
    let side: BaseSide = serde_json::from_str(base_json).map_err(err)?;
    let budget = Budget { max_states: max_states.unwrap_or(Budget::default().max_states), ..Budget::default() };
    py.detach(|| {
        let rc = build_relative_complex(&profile).map_err(err)?;
        let base = base_for(&rc, side).map_err(err)?;
        let classes = rel_classes(&rc, base, max_len, budget).map_err(err)?;
        Ok(classes.classes.into_iter().map(|c| c.label).collect())
    })
}

#[pymodule]
fn morse_pi1_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(abelianization, m)?)?;
    m.add_function(wrap_pyfunction!(presentation_json, m)?)?;
    m.add_function(wrap_pyfunction!(relative_classes, m)?)?;
    Ok(())
}
