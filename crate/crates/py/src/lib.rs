//! Python bindings: potentials, partitions, reconstruction parameters, lattice fields,
//! energies, stresses and the experiment runners.

use std::collections::BTreeMap;
use std::path::PathBuf;

use grac::energy::{self, EnergyKind};
use grac::fields::{HomogeneousState, LatticeField};
use grac::harness::{self, ExperimentConfig, PotentialSpec};
use grac::lattice::{Dir, IndexBox, Site};
use grac::partition::{self, CornerCase, Geometry, RegionPartition};
use grac::potentials::{self, SitePotential};
use grac::reconstruction::{self, ReconstructionParams};
use grac::stress;
use grac::{Mat2, Vec2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: grac::Error) -> PyErr {
    match e {
        grac::Error::Config(_) | grac::Error::Parse(_) | grac::Error::InvalidParameter(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mat(f: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(f[0][0], f[0][1], f[1][0], f[1][1])
}

fn rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// A site potential `V(Dy(x))` on the six nearest-neighbour differences.
#[pyclass(name = "Potential", module = "grac")]
struct PyPotential {
    spec: PotentialSpec,
    inner: Box<dyn SitePotential>,
}

impl PyPotential {
    fn from_spec(spec: PotentialSpec) -> PyResult<Self> {
        let inner = spec.build().map_err(err)?;
        Ok(PyPotential { spec, inner })
    }
}

#[pymethods]
impl PyPotential {
    #[staticmethod]
    #[pyo3(signature = (kappa = [1.0; 6]))]
    fn quadratic(kappa: [f64; 6]) -> PyResult<Self> {
        Self::from_spec(PotentialSpec::Quadratic { kappa })
    }

    #[staticmethod]
    #[pyo3(signature = (depth = 1.0, alpha = 4.0, r0 = 1.0))]
    fn morse(depth: f64, alpha: f64, r0: f64) -> PyResult<Self> {
        Self::from_spec(PotentialSpec::Morse { depth, alpha, r0 })
    }

    #[staticmethod]
    #[pyo3(signature = (kappa = 1.0))]
    fn bond_angle(kappa: f64) -> PyResult<Self> {
        Self::from_spec(PotentialSpec::BondAngle { kappa })
    }

    #[staticmethod]
    #[pyo3(signature = (kappa = 0.3))]
    fn wide_angle(kappa: f64) -> PyResult<Self> {
        Self::from_spec(PotentialSpec::WideAngle { kappa })
    }

    /// Morse pair plus wide-angle term, the potential of the rate study.
    #[staticmethod]
    fn multibody() -> PyResult<Self> {
        Self::from_spec(PotentialSpec::multibody())
    }

    /// `self + other`.
    fn __add__(&self, other: &PyPotential) -> PyResult<Self> {
        Self::from_spec(PotentialSpec::Sum { parts: vec![self.spec.clone(), other.spec.clone()] })
    }

    fn name(&self) -> String {
        self.inner.name()
    }

    /// `V(Fa)`.
    fn homogeneous_energy(&self, f: [[f64; 2]; 2]) -> PyResult<f64> {
        self.inner.eval(&grac::lattice::deformed_vectors(&mat(f))).map_err(err)
    }

    /// `W(F) = V(Fa)/Ω0`.
    fn cb_density(&self, f: [[f64; 2]; 2]) -> PyResult<f64> {
        potentials::cb_density(&self.inner, &mat(f)).map_err(err)
    }

    /// `∂W(F)` as a nested list.
    fn cb_stress(&self, f: [[f64; 2]; 2]) -> PyResult<[[f64; 2]; 2]> {
        potentials::cb_stress(&self.inner, &mat(f)).map(|m| rows(&m)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Potential({})", self.inner.name())
    }
}

/// Atomistic / interface / continuum decomposition of a window `|n1|, |n2| <= window`.
#[pyclass(name = "Partition", module = "grac")]
struct PyPartition {
    inner: RegionPartition,
}

fn partition(geometry: &Geometry, window: i64) -> PyResult<PyPartition> {
    let inner = partition::build_partition(geometry, IndexBox::centered(window)).map_err(err)?;
    Ok(PyPartition { inner })
}

#[pymethods]
impl PyPartition {
    #[staticmethod]
    #[pyo3(signature = (window = 12))]
    fn flat(window: i64) -> PyResult<Self> {
        partition(&Geometry::flat(), window)
    }

    #[staticmethod]
    #[pyo3(signature = (radius, window = 12))]
    fn hexagon(radius: i64, window: i64) -> PyResult<Self> {
        partition(&Geometry::hexagon(radius), window)
    }

    /// A case of the corner catalog by name, e.g. `"concave"`.
    #[staticmethod]
    #[pyo3(signature = (case, window = 12))]
    fn corner(case: &str, window: i64) -> PyResult<Self> {
        let c = CornerCase::parse(case).ok_or_else(|| PyValueError::new_err(format!("unknown corner case {case:?}")))?;
        partition(&c.geometry(), window)
    }

    /// Sites `[(n1, n2), ...]` forming `A`.
    #[staticmethod]
    #[pyo3(signature = (sites, window = 12))]
    fn from_sites(sites: Vec<(i64, i64)>, window: i64) -> PyResult<Self> {
        partition(&Geometry::sites(sites.into_iter().map(|(a, b)| Site::new(a, b))), window)
    }

    #[staticmethod]
    fn corner_cases() -> Vec<&'static str> {
        CornerCase::ALL.iter().map(|c| c.name()).collect()
    }

    /// `"A"`, `"I"` or `"C"`.
    fn class_of(&self, n1: i64, n2: i64) -> String {
        self.inner.class(Site::new(n1, n2)).label().to_string()
    }

    fn interface(&self) -> Vec<(i64, i64)> {
        self.inner.interface().into_iter().map(|x| (x.n1, x.n2)).collect()
    }

    fn admissible(&self) -> bool {
        partition::check_admissible(&self.inner).passed()
    }

    fn is_planar(&self) -> bool {
        partition::is_planar(&self.inner)
    }

    fn window(&self) -> (i64, i64, i64, i64) {
        let w = self.inner.window();
        (w.n1_min, w.n1_max, w.n2_min, w.n2_max)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// Dimension of the force-consistent parameter space and the predicted count.
    fn constraint_audit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let spec = harness::ParameterConfig::default();
        let case = harness::Case { label: "python".into(), partition: self.inner.clone() };
        let a = harness::audit_case(&case, &spec).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("planar", a.planar)?;
        d.set_item("unknowns", a.unknowns)?;
        d.set_item("rank", a.rank)?;
        d.set_item("dimension", a.dimension)?;
        d.set_item("interior_dimension", a.interior_dimension)?;
        d.set_item("expected", a.expected)?;
        d.set_item("passed", a.passed())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Partition(window={}, interface_sites={})", self.inner.window(), self.inner.interface().len())
    }
}

/// Reconstruction coefficients `C_{x,j}` on the interface.
#[pyclass(name = "Parameters", module = "grac")]
struct PyParameters {
    inner: ReconstructionParams,
}

#[pymethods]
impl PyParameters {
    /// `1` into `A`, `2/3` into `C`, `default_free` on interface bonds unless given in `free`
    /// as `{(n1, n2, j): value}`.
    #[staticmethod]
    #[pyo3(signature = (partition, default_free = 0.8, free = None))]
    fn general(partition: &PyPartition, default_free: f64, free: Option<BTreeMap<(i64, i64, i64), f64>>) -> PyResult<Self> {
        let mut map = BTreeMap::new();
        for ((n1, n2, j), v) in free.unwrap_or_default() {
            if !(1..=6).contains(&j) {
                return Err(PyValueError::new_err(format!("direction {j} out of range 1..=6")));
            }
            map.insert(grac::lattice::Edge::new(Site::new(n1, n2), Dir::new(j)), v);
        }
        let inner = reconstruction::assign_general(&partition.inner, &map, default_free).map_err(err)?;
        Ok(PyParameters { inner })
    }

    /// Flat-interface parametrisation with constants `(c2, c3, c5, c6)` and in-line value `d`.
    #[staticmethod]
    fn flat(partition: &PyPartition, c: [f64; 4], d: f64) -> PyResult<Self> {
        let inner = reconstruction::assign_flat(&partition.inner, c, &BTreeMap::new(), d).map_err(err)?;
        Ok(PyParameters { inner })
    }

    /// `V^i = V`.
    #[staticmethod]
    fn qce(partition: &PyPartition) -> Self {
        PyParameters { inner: reconstruction::qce(&partition.inner) }
    }

    #[staticmethod]
    fn from_csv(partition: &PyPartition, text: &str) -> PyResult<Self> {
        let inner = ReconstructionParams::from_csv(&partition.inner, text).map_err(err)?;
        Ok(PyParameters { inner })
    }

    /// `C_{x,j}` at site `(n1, n2)`.
    fn value(&self, partition: &PyPartition, n1: i64, n2: i64, j: i64) -> PyResult<f64> {
        if !(1..=6).contains(&j) {
            return Err(PyValueError::new_err(format!("direction {j} out of range 1..=6")));
        }
        self.inner.reduced(&partition.inner, Site::new(n1, n2), Dir::new(j)).map_err(err)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// A displacement `u` on a window; the deformation is `y(x) = x + u(x)`.
#[pyclass(name = "Field", module = "grac")]
struct PyField {
    inner: LatticeField,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zeros(window: i64) -> Self {
        PyField { inner: LatticeField::zeros(IndexBox::centered(window)) }
    }

    /// Values `{(n1, n2): (u1, u2)}`; unlisted sites are zero.
    #[staticmethod]
    fn from_dict(window: i64, values: BTreeMap<(i64, i64), (f64, f64)>) -> PyResult<Self> {
        let inner = LatticeField::from_values(
            IndexBox::centered(window),
            values.into_iter().map(|((a, b), (u, v))| (Site::new(a, b), Vec2::new(u, v))),
        )
        .map_err(err)?;
        Ok(PyField { inner })
    }

    /// The smooth test field `u_R` of the rate study on its own window.
    #[staticmethod]
    #[pyo3(signature = (scale, epsilon = 0.05))]
    fn test_field(scale: f64, epsilon: f64) -> Self {
        PyField { inner: harness::test_field(scale, epsilon, harness::test_window(scale)) }
    }

    fn get(&self, n1: i64, n2: i64) -> (f64, f64) {
        let v = self.inner.get(Site::new(n1, n2));
        (v.x, v.y)
    }

    fn set(&mut self, n1: i64, n2: i64, u1: f64, u2: f64) -> PyResult<()> {
        self.inner.set(Site::new(n1, n2), Vec2::new(u1, u2)).map_err(err)
    }

    fn scaled(&self, s: f64) -> Self {
        PyField { inner: self.inner.scaled(s) }
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

fn kind<'a>(partition: Option<&'a PyPartition>, params: Option<&'a PyParameters>) -> PyResult<EnergyKind<'a>> {
    match (partition, params) {
        (None, None) => Ok(EnergyKind::Atomistic),
        (Some(p), Some(r)) => Ok(EnergyKind::coupled(&p.inner, &r.inner)),
        _ => Err(PyValueError::new_err("partition and params must be given together")),
    }
}

/// `E_a(y)`.
#[pyfunction]
fn energy_a(potential: &PyPotential, field: &PyField) -> PyResult<f64> {
    energy::energy_a(&potential.inner, &field.inner).map_err(err)
}

/// `E_c(y)` (element form, cross-checked against the site form).
#[pyfunction]
fn energy_c(potential: &PyPotential, field: &PyField) -> PyResult<f64> {
    energy::energy_c(&potential.inner, &field.inner).map_err(err)
}

/// `E_ac(y)`.
#[pyfunction]
fn energy_ac(potential: &PyPotential, params: &PyParameters, partition: &PyPartition, field: &PyField) -> PyResult<f64> {
    energy::energy_ac(&potential.inner, &params.inner, &partition.inner, &field.inner).map_err(err)
}

/// Forces `-∂E/∂y(x)` as `[(n1, n2, f1, f2), ...]`; atomistic unless `partition` and `params` are given.
#[pyfunction]
#[pyo3(signature = (potential, field, partition = None, params = None))]
fn forces(
    potential: &PyPotential,
    field: &PyField,
    partition: Option<&PyPartition>,
    params: Option<&PyParameters>,
) -> PyResult<Vec<(i64, i64, f64, f64)>> {
    let f = kind(partition, params)?.forces(&potential.inner, &field.inner).map_err(err)?;
    Ok(f.iter().map(|(x, v)| (x.n1, x.n2, v.x, v.y)).collect())
}

/// Ghost forces and energy consistency of `E_ac` at the homogeneous gradient `f`.
#[pyfunction]
fn patch_test<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    params: &PyParameters,
    partition: &PyPartition,
    f: [[f64; 2]; 2],
) -> PyResult<Bound<'py, PyDict>> {
    let s = energy::patch_test(&potential.inner, &params.inner, &partition.inner, mat(f)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("max_ghost_force", s.max_ghost_force)?;
    d.set_item("ghost_site", s.ghost_site.map(|x| (x.n1, x.n2)))?;
    d.set_item("ghost_threshold", s.ghost_threshold)?;
    d.set_item("energy_residual", s.energy_residual)?;
    d.set_item("passed", s.passed())?;
    Ok(d)
}

type StressRows = Vec<(i64, i64, String, f64, f64, f64, f64)>;

fn stress_rows(s: &stress::StressField) -> StressRows {
    s.iter()
        .map(|(t, m)| {
            let o = match t.orient {
                grac::lattice::Orientation::Up => "up",
                grac::lattice::Orientation::Down => "down",
            };
            (t.base.n1, t.base.n2, o.to_string(), m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
        })
        .collect()
}

/// Elementwise stress `[(n1, n2, orient, s11, s12, s21, s22), ...]`.
///
/// `variant` is one of `"a"`, `"c1"`, `"c2"`, `"c3"`, `"ac"` or `"ac_hat"`; the last two need
/// `partition` and `params`.
#[pyfunction]
#[pyo3(signature = (variant, potential, field, partition = None, params = None))]
fn stress_field(
    variant: &str,
    potential: &PyPotential,
    field: &PyField,
    partition: Option<&PyPartition>,
    params: Option<&PyParameters>,
) -> PyResult<StressRows> {
    let (v, y) = (&potential.inner, &field.inner);
    let need = || match (partition, params) {
        (Some(p), Some(r)) => Ok((&p.inner, &r.inner)),
        _ => Err(PyValueError::new_err(format!("stress {variant:?} needs partition and params"))),
    };
    let s = match variant {
        "a" => stress::sigma_a(v, y),
        "c1" => stress::sigma_c1(v, y),
        "c2" => stress::sigma_c2(v, y),
        "c3" => stress::sigma_c3(v, y),
        "ac" => {
            let (p, r) = need()?;
            stress::sigma_ac(v, r, p, y)
        }
        "ac_hat" => {
            let (p, r) = need()?;
            let psi = stress::psi_ac_coefficients(r, p).map_err(err)?;
            stress::sigma_ac_hat(v, r, p, &psi, y)
        }
        other => return Err(PyValueError::new_err(format!("unknown stress variant {other:?}"))),
    }
    .map_err(err)?;
    Ok(stress_rows(&s))
}

/// `max_x |Σ_T |T| (σ1 − σ2)(T)ᵀ∇φ_x|` for two stress variants of the same field.
#[pyfunction]
#[pyo3(signature = (first, second, potential, field, partition = None, params = None))]
fn divergence_of_difference(
    first: &str,
    second: &str,
    potential: &PyPotential,
    field: &PyField,
    partition: Option<&PyPartition>,
    params: Option<&PyParameters>,
) -> PyResult<f64> {
    let get = |variant: &str| -> PyResult<stress::StressField> {
        let rows = stress_field(variant, potential, field, partition, params)?;
        let bases = stress::stress_box(&field.inner);
        let mut s = stress::StressField::zeros(bases);
        for (n1, n2, o, a, b, c, d) in rows {
            let base = Site::new(n1, n2);
            let t = if o == "up" { grac::lattice::Triangle::up(base) } else { grac::lattice::Triangle::down(base) };
            s.set(t, Mat2::new(a, b, c, d)).map_err(err)?;
        }
        Ok(s)
    };
    Ok(stress::divergence_residual(&get(first)?.sub(&get(second)?)))
}

/// `Σ̂_ac(y_F)` on every element, which equals `∂W(F)` for a patch-test consistent method.
#[pyfunction]
fn homogeneous_modified_stress(
    potential: &PyPotential,
    params: &PyParameters,
    partition: &PyPartition,
    f: [[f64; 2]; 2],
) -> PyResult<StressRows> {
    let (p, r) = (&partition.inner, &params.inner);
    let psi = stress::psi_ac_coefficients(r, p).map_err(err)?;
    let y = HomogeneousState::new(mat(f), p.window());
    let s = stress::sigma_ac_hat(&potential.inner, r, p, &psi, &y).map_err(err)?;
    Ok(stress_rows(&s))
}

/// Consistency errors at one scale of the rate study, as a dict.
#[pyfunction]
#[pyo3(signature = (scale, epsilon = 0.05))]
fn convergence_row<'py>(py: Python<'py>, scale: u32, epsilon: f64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = harness::ConvergenceConfig { epsilon, ..Default::default() };
    let row = harness::convergence_row(&cfg, &harness::ParameterConfig::default(), scale, harness::test_window(scale as f64))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("R", row.scale)?;
    d.set_item("errI_max", row.err_i_max)?;
    d.set_item("errI_lp", row.err_i_lp)?;
    d.set_item("errC_max", row.err_c_max)?;
    d.set_item("errC_lp", row.err_c_lp)?;
    d.set_item("errC1_max", row.err_c1_max)?;
    d.set_item("dual2", row.dual2)?;
    Ok(d)
}

/// Runs a subcommand (`"patch-test"`, `"convergence"`, `"constraint-audit"`, `"export-geometry"`)
/// and returns `(passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (command, config = None, out = None))]
fn run(command: &str, config: Option<PathBuf>, out: Option<PathBuf>) -> PyResult<(bool, String)> {
    let (cfg, source) = match &config {
        Some(p) => (ExperimentConfig::load(p).map_err(err)?, p.display().to_string()),
        None => (ExperimentConfig::default(), "defaults".to_string()),
    };
    let out = out.as_deref();
    let report = match command {
        "patch-test" => harness::run_patch_test(&cfg, false, out, &source),
        "convergence" => harness::run_convergence(&cfg, out, &source).map(|s| s.report),
        "constraint-audit" => harness::run_constraint_audit(&cfg, out, &source),
        "export-geometry" => harness::run_export_geometry(&cfg, out, &source),
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    }
    .map_err(err)?;
    Ok((report.passed(), report.to_string()))
}

#[pymodule]
#[pyo3(name = "grac")]
fn grac_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyPartition>()?;
    m.add_class::<PyParameters>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(energy_a, m)?)?;
    m.add_function(wrap_pyfunction!(energy_c, m)?)?;
    m.add_function(wrap_pyfunction!(energy_ac, m)?)?;
    m.add_function(wrap_pyfunction!(forces, m)?)?;
    m.add_function(wrap_pyfunction!(patch_test, m)?)?;
    m.add_function(wrap_pyfunction!(stress_field, m)?)?;
    m.add_function(wrap_pyfunction!(divergence_of_difference, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneous_modified_stress, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_row, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("OMEGA0", grac::lattice::OMEGA0)?;
    Ok(())
}
