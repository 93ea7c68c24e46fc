//! Python bindings: flow systems, perturbed systems, tube families and
//! line configurations, plus the main experiment functions.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use hflab::gaussflow::{
    auto_grid, linspace, monotonicity_scan, q_exact_integer, q_quadrature, qprime_chainrule, qprime_formula,
    ScanMode,
};
use hflab::grid::GridSpec;
use hflab::joints::{find_joints, lattice_config, Line3, LineConfig};
use hflab::matcore::{self, ExponentVector, SymMatrix};
use hflab::perturbflow::{self, corollary_bound_check, epsilon_of, relation_ratio};
use hflab::tubes::{self, TubeFamily};

fn err(e: hflab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sym(rows: Vec<Vec<f64>>) -> PyResult<SymMatrix> {
    SymMatrix::new(&rows).map_err(err)
}

fn syms(ms: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<SymMatrix>> {
    ms.into_iter().map(sym).collect()
}

/// Superposition of sliding gaussians paired with exponents.
#[pyclass(name = "FlowSystem", frozen, skip_from_py_object)]
struct PyFlowSystem(hflab::FlowSystem);

#[pymethods]
impl PyFlowSystem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        hflab::FlowSystem::from_json_str(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json_string().map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.0.p().values().to_vec()
    }

    fn mass_product(&self) -> f64 {
        self.0.mass_product()
    }

    /// Closed form for integer exponents, quadrature otherwise.
    fn q(&self, t: f64) -> PyResult<f64> {
        if self.0.p().as_integers().is_some() {
            return q_exact_integer(&self.0, t).map_err(err);
        }
        let grid = auto_grid(&self.0, t, t).map_err(err)?;
        q_quadrature(&self.0, t, &grid).map_err(err)
    }

    fn q_exact(&self, t: f64) -> PyResult<f64> {
        q_exact_integer(&self.0, t).map_err(err)
    }

    fn q_quadrature(&self, t: f64) -> PyResult<f64> {
        let grid = auto_grid(&self.0, t, t).map_err(err)?;
        q_quadrature(&self.0, t, &grid).map_err(err)
    }

    /// `(formula, chain_rule)` values of `Q'(t)` on one grid.
    fn qprime(&self, t: f64) -> PyResult<(f64, f64)> {
        let grid = auto_grid(&self.0, t, t).map_err(err)?;
        Ok((
            qprime_formula(&self.0, t, &grid).map_err(err)?,
            qprime_chainrule(&self.0, t, &grid).map_err(err)?,
        ))
    }

    /// Rows `(t, Q)` and the pass flag of a monotonicity scan.
    #[pyo3(signature = (t_lo=0.0, t_hi=4.0, nodes=81))]
    fn scan(&self, t_lo: f64, t_hi: f64, nodes: usize) -> PyResult<(Vec<(f64, f64)>, bool)> {
        let mode = if self.0.p().as_integers().is_some() { ScanMode::Exact } else { ScanMode::Quadrature(None) };
        let r = monotonicity_scan(&self.0, &linspace(t_lo, t_hi, nodes), &mode, None).map_err(err)?;
        Ok((r.rows.iter().map(|row| (row.t, row.q)).collect(), r.pass))
    }

    fn check_ajab(&self) -> PyResult<bool> {
        let ms = self.0.constant_matrices().map_err(err)?;
        matcore::check_condition_ajab(&ms, self.0.p(), 1e-12).map_err(err)
    }
}

/// Flow system carrying the base matrices it perturbs.
#[pyclass(name = "PerturbedSystem", frozen, skip_from_py_object)]
struct PyPerturbedSystem(perturbflow::PerturbedSystem);

#[pymethods]
impl PyPerturbedSystem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        perturbflow::PerturbedSystem::from_json_str(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json_string().map_err(err)
    }

    fn epsilon(&self) -> PyResult<f64> {
        epsilon_of(&self.0).map_err(err)
    }

    fn gap_margin(&self) -> f64 {
        self.0.gap_margin()
    }

    fn relation_ratio(&self, t: f64) -> PyResult<f64> {
        relation_ratio(&self.0, t).map_err(err)
    }

    /// `(Q(1), bound, pass)` of the endpoint bound with the given slack multiplier.
    #[pyo3(signature = (slack_multiplier=10.0))]
    fn bound_check(&self, slack_multiplier: f64) -> PyResult<(f64, f64, bool)> {
        let r = corollary_bound_check(&self.0, slack_multiplier).map_err(err)?;
        Ok((r.q1, r.bound, r.pass))
    }
}

/// One family of congruent tubes.
#[pyclass(name = "TubeFamily", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTubeFamily(TubeFamily);

#[pymethods]
impl PyTubeFamily {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json_string().map_err(err)
    }
}

fn unwrap_families(fams: Vec<PyRef<'_, PyTubeFamily>>) -> Vec<TubeFamily> {
    fams.iter().map(|f| f.0.clone()).collect()
}

#[pyfunction]
fn tube_families_from_json(text: &str) -> PyResult<Vec<PyTubeFamily>> {
    Ok(tubes::families_from_json_str(text).map_err(err)?.into_iter().map(PyTubeFamily).collect())
}

#[pyfunction]
fn sharpness_family(n: usize, d: usize, delta: f64) -> PyResult<Vec<PyTubeFamily>> {
    Ok(tubes::sharpness_family(n, d, delta).map_err(err)?.into_iter().map(PyTubeFamily).collect())
}

#[pyfunction]
#[pyo3(signature = (d, delta, radius=0.1, seed=0))]
fn random_transversal_families(d: usize, delta: f64, radius: f64, seed: u64) -> PyResult<Vec<PyTubeFamily>> {
    Ok(tubes::random_transversal_families(d, delta, radius, seed)
        .map_err(err)?
        .into_iter()
        .map(PyTubeFamily)
        .collect())
}

#[pyfunction]
fn transversality_nu(families: Vec<PyRef<'_, PyTubeFamily>>) -> PyResult<f64> {
    Ok(tubes::transversality_nu(&unwrap_families(families)).map_err(err)?.nu)
}

/// `(lhs, rhs, ratio)` on a cubic grid of `points` nodes per axis.
#[pyfunction]
fn kakeya_ratio(
    families: Vec<PyRef<'_, PyTubeFamily>>,
    q: f64,
    center: Vec<f64>,
    half_width: f64,
    points: usize,
) -> PyResult<(f64, f64, f64)> {
    let grid = GridSpec::new(center, half_width, points).map_err(err)?;
    let r = tubes::kakeya_ratio(&unwrap_families(families), q, &grid).map_err(err)?;
    Ok((r.lhs, r.rhs, r.ratio))
}

/// Joints of a line configuration given as `(point, direction)` pairs:
/// rows `(x, y, z, theta)`.
#[pyfunction]
#[pyo3(signature = (lines, tol_meet=None, tol_coplanar=1e-12))]
fn joints(lines: Vec<([f64; 3], [f64; 3])>, tol_meet: Option<f64>, tol_coplanar: f64) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let cfg = LineConfig::new(lines.into_iter().map(|(p, d)| Line3::new(p, d)).collect::<Result<_, _>>().map_err(err)?);
    let tol = tol_meet.unwrap_or_else(|| cfg.default_tol_meet());
    let found = find_joints(&cfg, tol, tol_coplanar).map_err(err)?;
    Ok(found.iter().map(|j| (j.point[0], j.point[1], j.point[2], j.theta)).collect())
}

#[pyfunction]
fn lattice_lines(m: usize) -> PyResult<Vec<([f64; 3], [f64; 3])>> {
    Ok(lattice_config(m).map_err(err)?.lines.iter().map(|l| (*l.point(), *l.direction())).collect())
}

#[pyfunction]
fn lw_matrices(d: usize) -> PyResult<Vec<Vec<Vec<f64>>>> {
    Ok(matcore::lw_matrices(d).map_err(err)?.iter().map(|m| m.rows()).collect())
}

#[pyfunction]
#[pyo3(signature = (matrices, p, tol=1e-12))]
fn check_condition_ajab(matrices: Vec<Vec<Vec<f64>>>, p: Vec<f64>, tol: f64) -> PyResult<bool> {
    let p = ExponentVector::new(p).map_err(err)?;
    matcore::check_condition_ajab(&syms(matrices)?, &p, tol).map_err(err)
}

#[pyfunction]
fn gap_margin(base: Vec<Vec<Vec<f64>>>, p: Vec<f64>) -> PyResult<f64> {
    let p = ExponentVector::new(p).map_err(err)?;
    matcore::gap_margin(&syms(base)?, &p).map_err(err)
}

/// Whether every hypothesis of the rank `d - 1` endpoint lemma holds.
#[pyfunction]
#[pyo3(signature = (matrices, tol=1e-10))]
fn notmon_lemma_holds(matrices: Vec<Vec<Vec<f64>>>, tol: f64) -> PyResult<bool> {
    Ok(perturbflow::notmon_lemma_check(&syms(matrices)?, tol).map_err(err)?.all_hold)
}

/// `(Q(0), Q(1), violated)` for a serialized flow system.
#[pyfunction]
#[pyo3(signature = (system_json, threshold=1e-6))]
fn replay_witness(system_json: &str, threshold: f64) -> PyResult<(f64, f64, bool)> {
    perturbflow::replay_witness(system_json, threshold).map_err(err)
}

#[pymodule]
#[pyo3(name = "hflab")]
fn hflab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFlowSystem>()?;
    m.add_class::<PyPerturbedSystem>()?;
    m.add_class::<PyTubeFamily>()?;
    m.add_function(wrap_pyfunction!(tube_families_from_json, m)?)?;
    m.add_function(wrap_pyfunction!(sharpness_family, m)?)?;
    m.add_function(wrap_pyfunction!(random_transversal_families, m)?)?;
    m.add_function(wrap_pyfunction!(transversality_nu, m)?)?;
    m.add_function(wrap_pyfunction!(kakeya_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(joints, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_lines, m)?)?;
    m.add_function(wrap_pyfunction!(lw_matrices, m)?)?;
    m.add_function(wrap_pyfunction!(check_condition_ajab, m)?)?;
    m.add_function(wrap_pyfunction!(gap_margin, m)?)?;
    m.add_function(wrap_pyfunction!(notmon_lemma_holds, m)?)?;
    m.add_function(wrap_pyfunction!(replay_witness, m)?)?;
    Ok(())
}
