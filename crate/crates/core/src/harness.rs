//! Experiment configuration and the runners behind the `grac` command-line tool.
//!
//! Every runner returns a [`Report`] of PASS/FAIL checks and optionally writes CSV files
//! into an output directory.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{patch_test, random_gradient, EnergyKind, ENERGY_CONSISTENCY_TOL, GHOST_FORCE_TOL};
use crate::fields::{LatticeField, SUPPORT_MARGIN};
use crate::lattice::{IndexBox, Site};
use crate::partition::{build_partition, check_admissible, is_planar, CornerCase, Geometry, RegionPartition};
use crate::potentials::{
    make_bond_angle, make_morse_pair, make_quadratic, make_wide_angle, SitePotential, Sum,
};
use crate::reconstruction::{
    assemble_patch_constraints, assign_flat, assign_general, flat_parameter_count, interior_interface_bond_count, qce,
    solve_constraints, ReconstructionParams, FEASIBILITY_TOL,
};
use crate::stress::{consistency_report, psi_ac_coefficients};
use crate::{Error, Mat2, Result};

/// Allowed deviation of a fitted log-log slope from its predicted value.
pub const SLOPE_TOL: f64 = 0.2;
/// Allowed relative change of the dual norm when the window is doubled.
pub const DUAL_TRUNCATION_TOL: f64 = 0.01;
/// Minimum ghost force the QCE control must produce.
pub const QCE_GHOST_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_SCALES: [u32; 4] = [16, 32, 64, 128];

type DynPotential = Box<dyn SitePotential>;

/// A geometry of the atomistic region as written in the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometrySpec {
    /// `A = {x2 < 0}`.
    Flat,
    Hexagon {
        radius: i64,
        #[serde(default)]
        center: [i64; 2],
    },
    /// Sites inside or on a polygon with Cartesian vertices.
    Polygon { vertices: Vec<[f64; 2]> },
    /// A case of the corner catalog, by name.
    Corner { case: CornerCase },
    /// Any region expression understood by [`Geometry`].
    Custom { region: Geometry },
}

impl GeometrySpec {
    pub fn geometry(&self) -> Geometry {
        match self {
            GeometrySpec::Flat => Geometry::flat(),
            GeometrySpec::Hexagon { radius, center } => Geometry::Hexagon { radius: *radius, center: *center },
            GeometrySpec::Polygon { vertices } => Geometry::Polygon { vertices: vertices.clone() },
            GeometrySpec::Corner { case } => case.geometry(),
            GeometrySpec::Custom { region } => region.clone(),
        }
    }

    fn base_label(&self) -> String {
        match self {
            GeometrySpec::Flat => "flat".into(),
            GeometrySpec::Hexagon { radius, .. } => format!("hexagon-{radius}"),
            GeometrySpec::Polygon { .. } => "polygon".into(),
            GeometrySpec::Corner { case } => format!("corner-{}", case.name()),
            GeometrySpec::Custom { .. } => "custom".into(),
        }
    }

    /// Hexagon of radius 6 followed by every case of the corner catalog.
    pub fn catalog() -> Vec<GeometrySpec> {
        let mut out = vec![GeometrySpec::Hexagon { radius: 6, center: [0, 0] }];
        out.extend(CornerCase::ALL.into_iter().map(|case| GeometrySpec::Corner { case }));
        out
    }
}

/// A site potential as written in the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Quadratic {
        #[serde(default = "unit_kappa")]
        kappa: [f64; 6],
    },
    Morse {
        #[serde(default = "unit")]
        depth: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "unit")]
        r0: f64,
    },
    BondAngle {
        #[serde(default = "unit")]
        kappa: f64,
    },
    WideAngle {
        #[serde(default = "default_wide_kappa")]
        kappa: f64,
    },
    Sum { parts: Vec<PotentialSpec> },
}

fn unit() -> f64 {
    1.0
}

fn unit_kappa() -> [f64; 6] {
    [1.0; 6]
}

fn default_alpha() -> f64 {
    4.0
}

fn default_wide_kappa() -> f64 {
    0.3
}

impl PotentialSpec {
    pub fn build(&self) -> Result<DynPotential> {
        Ok(match self {
            PotentialSpec::Quadratic { kappa } => Box::new(make_quadratic(*kappa)?),
            PotentialSpec::Morse { depth, alpha, r0 } => Box::new(make_morse_pair(*depth, *alpha, *r0)?),
            PotentialSpec::BondAngle { kappa } => Box::new(make_bond_angle(*kappa)?),
            PotentialSpec::WideAngle { kappa } => Box::new(make_wide_angle(*kappa)?),
            PotentialSpec::Sum { parts } => {
                let mut it = parts.iter();
                let first = it.next().ok_or_else(|| Error::Config("empty potential sum".into()))?.build()?;
                it.try_fold(first, |acc, p| -> Result<DynPotential> { Ok(Box::new(Sum(acc, p.build()?))) })?
            }
        })
    }

    /// Quadratic, Morse pair and nearest-angle bond-angle potentials with default parameters.
    pub fn defaults() -> Vec<PotentialSpec> {
        vec![
            PotentialSpec::Quadratic { kappa: unit_kappa() },
            PotentialSpec::Morse { depth: 1.0, alpha: default_alpha(), r0: 1.0 },
            PotentialSpec::BondAngle { kappa: 1.0 },
        ]
    }

    /// Morse pair plus wide-angle three-body term.
    pub fn multibody() -> PotentialSpec {
        PotentialSpec::Sum {
            parts: vec![
                PotentialSpec::Morse { depth: 1.0, alpha: default_alpha(), r0: 1.0 },
                PotentialSpec::WideAngle { kappa: default_wide_kappa() },
            ],
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// One shared value per interface bond, `default-free` unless listed in `free`.
    #[default]
    General,
    /// Flat-interface parametrisation, planar geometries only.
    Flat,
    /// `V^i = V`, the quasicontinuum energy.
    Qce,
    /// Values read from `csv` (`n1,n2,j,value`).
    Csv,
}

/// A single free value on the interface bond `(n1, n2) → (n1, n2) + a_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeValue {
    pub n1: i64,
    pub n2: i64,
    pub j: i64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterConfig {
    pub policy: Policy,
    pub default_free: f64,
    pub free: Vec<FreeValue>,
    /// `(c2, c3, c5, c6)` of the flat parametrisation.
    pub flat_c: [f64; 4],
    /// In-line value of the flat parametrisation.
    pub flat_d: f64,
    pub csv: Option<PathBuf>,
}

impl Default for ParameterConfig {
    fn default() -> Self {
        ParameterConfig {
            policy: Policy::General,
            default_free: 0.8,
            free: Vec::new(),
            flat_c: [0.8, 0.7, 0.6, 0.9],
            flat_d: 0.75,
            csv: None,
        }
    }
}

impl ParameterConfig {
    pub fn build(&self, p: &RegionPartition) -> Result<ReconstructionParams> {
        match self.policy {
            Policy::General => assign_general(p, &self.free_map()?, self.default_free),
            Policy::Flat => assign_flat(p, self.flat_c, &self.free_map()?, self.flat_d),
            Policy::Qce => Ok(qce(p)),
            Policy::Csv => {
                let path = self.csv.as_ref().ok_or_else(|| Error::Config("policy csv needs parameters.csv".into()))?;
                ReconstructionParams::from_csv(p, &std::fs::read_to_string(path)?)
            }
        }
    }

    fn free_map(&self) -> Result<BTreeMap<crate::lattice::Edge, f64>> {
        self.free
            .iter()
            .map(|f| {
                if !(1..=6).contains(&f.j) {
                    return Err(Error::Config(format!("direction {} out of range 1..=6", f.j)));
                }
                Ok((crate::lattice::Edge::new(Site::new(f.n1, f.n2), crate::lattice::Dir::new(f.j)), f.value))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchTestConfig {
    pub samples: usize,
    /// Bound on `|F − I|` (Frobenius) for the random gradients.
    pub radius: f64,
    pub qce_gradient: [[f64; 2]; 2],
    pub qce_potential: PotentialSpec,
    pub qce_geometry: GeometrySpec,
}

impl Default for PatchTestConfig {
    fn default() -> Self {
        PatchTestConfig {
            samples: 20,
            radius: 0.2,
            qce_gradient: [[1.1, 0.0], [0.0, 1.0]],
            qce_potential: PotentialSpec::Quadratic { kappa: [1.0, 2.0, 3.0, 1.0, 2.0, 3.0] },
            qce_geometry: GeometrySpec::Hexagon { radius: 6, center: [0, 0] },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub scales: Vec<u32>,
    /// Amplitude `ε` of the test field.
    pub epsilon: f64,
    /// Exponent of the `ℓ^p` aggregates.
    pub p: f64,
    /// Hexagon radius of `A` as a fraction of `R`.
    pub hexagon_fraction: f64,
    pub potential: PotentialSpec,
    /// Recompute the smallest scale on a doubled window and compare the dual norms.
    pub check_truncation: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            scales: DEFAULT_SCALES.to_vec(),
            epsilon: 0.05,
            p: 2.0,
            hexagon_fraction: 0.25,
            potential: PotentialSpec::multibody(),
            check_truncation: true,
        }
    }
}

/// Everything a run reads; every key is optional and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Half-width of the index window around each catalog geometry.
    pub window_radius: i64,
    #[serde(rename = "geometry")]
    pub geometries: Vec<GeometrySpec>,
    #[serde(rename = "potential")]
    pub potentials: Vec<PotentialSpec>,
    pub parameters: ParameterConfig,
    pub patch_test: PatchTestConfig,
    pub convergence: ConvergenceConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            window_radius: 12,
            geometries: GeometrySpec::catalog(),
            potentials: PotentialSpec::defaults(),
            parameters: ParameterConfig::default(),
            patch_test: PatchTestConfig::default(),
            convergence: ConvergenceConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.window_radius < 2 * SUPPORT_MARGIN {
            return fail("window_radius is too small");
        }
        if self.geometries.is_empty() {
            return fail("no geometry given");
        }
        if self.potentials.is_empty() {
            return fail("no potential given");
        }
        if self.patch_test.samples == 0 || !(self.patch_test.radius > 0.0) {
            return fail("patch_test needs samples > 0 and radius > 0");
        }
        let c = &self.convergence;
        if c.scales.len() < 3 {
            return fail("convergence needs at least three scales");
        }
        if c.scales.iter().any(|&r| r < 8) {
            return fail("convergence scales must be at least 8");
        }
        if !(c.epsilon > 0.0) || !(c.p >= 1.0) || !(c.hexagon_fraction > 0.0 && c.hexagon_fraction < 0.5) {
            return fail("convergence needs epsilon > 0, p >= 1 and 0 < hexagon_fraction < 0.5");
        }
        for p in self.potentials.iter().chain([&c.potential, &self.patch_test.qce_potential]) {
            p.build()?;
        }
        Ok(())
    }

    /// Labelled geometries with their partitions, each checked for admissibility.
    pub fn cases(&self) -> Result<Vec<Case>> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for spec in &self.geometries {
            let base = spec.base_label();
            let n = seen.entry(base.clone()).or_default();
            *n += 1;
            let label = if *n == 1 { base } else { format!("{base}-{n}") };
            out.push(Case::new(label, spec, IndexBox::centered(self.window_radius))?);
        }
        Ok(out)
    }
}

/// A labelled admissible partition.
#[derive(Clone, Debug)]
pub struct Case {
    pub label: String,
    pub partition: RegionPartition,
}

impl Case {
    pub fn new(label: String, spec: &GeometrySpec, window: IndexBox) -> Result<Self> {
        let partition = build_partition(&spec.geometry(), window).map_err(|e| Error::Config(format!("{label}: {e}")))?;
        let report = check_admissible(&partition);
        if !report.passed() {
            return Err(Error::Config(format!("{label} is not admissible: {report}")));
        }
        Ok(Case { label, partition })
    }
}

/// One PASS/FAIL line.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// Where the configuration came from, cited on every line.
    pub source: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(source: &str) -> Self {
        Report { source: source.to_string(), ..Default::default() }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {} [config: {}]", c.name, c.detail, self.source)?;
        }
        Ok(())
    }
}

fn write_out(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn mat(m: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// Ghost forces and energy consistency at random homogeneous gradients, plus the QCE control.
///
/// With `force_qce` the interface parameters are replaced by the QCE values and the control is skipped.
pub fn run_patch_test(cfg: &ExperimentConfig, force_qce: bool, out: Option<&Path>, source: &str) -> Result<Report> {
    let mut report = Report::new(source);
    let mut params = cfg.parameters.clone();
    if force_qce {
        params.policy = Policy::Qce;
    }
    let pt = &cfg.patch_test;
    let mut csv = String::from("geometry,potential,sample,f11,f12,f21,f22,max_ghost_force,ghost_threshold,energy_residual,passed\n");
    for case in cfg.cases()? {
        let r = params.build(&case.partition)?;
        for spec in &cfg.potentials {
            let v = spec.build()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (mut worst_ghost, mut worst_ratio, mut worst_energy, mut failed) = (0.0f64, 0.0f64, 0.0f64, 0);
            for k in 0..pt.samples {
                let f = random_gradient(&mut rng, pt.radius);
                let s = patch_test(&v, &r, &case.partition, f)?;
                worst_ghost = worst_ghost.max(s.max_ghost_force);
                worst_ratio = worst_ratio.max(s.max_ghost_force / s.ghost_threshold);
                worst_energy = worst_energy.max(s.energy_residual);
                if !s.passed() {
                    failed += 1;
                }
                let _ = writeln!(
                    csv,
                    "{},{},{k},{},{},{},{},{},{},{},{}",
                    case.label,
                    v.name(),
                    f[(0, 0)],
                    f[(0, 1)],
                    f[(1, 0)],
                    f[(1, 1)],
                    s.max_ghost_force,
                    s.ghost_threshold,
                    s.energy_residual,
                    s.passed()
                );
            }
            report.check(
                format!("patch-test {} {}", case.label, v.name()),
                failed == 0,
                format!(
                    "{} samples |F-I|<={}, {failed} failed; max ghost force {worst_ghost:e} (at most {:.3} of the bound \
                     {GHOST_FORCE_TOL:e}*(1+max|dV|)); max energy residual {worst_energy:e} <= {ENERGY_CONSISTENCY_TOL:e}",
                    pt.samples, pt.radius, worst_ratio
                ),
            );
        }
    }
    write_out(out, "patch_test.csv", &csv)?;
    if !force_qce {
        let case = Case::new(pt.qce_geometry.base_label(), &pt.qce_geometry, IndexBox::centered(cfg.window_radius))?;
        let v = pt.qce_potential.build()?;
        let r = qce(&case.partition);
        let s = patch_test(&v, &r, &case.partition, mat(pt.qce_gradient))?;
        let forces = EnergyKind::coupled(&case.partition, &r)
            .forces(&v, &crate::fields::HomogeneousState::new(s.f, case.partition.window()))?;
        write_out(out, "qce_forces.csv", &forces.to_csv())?;
        let near = s.ghost_site.is_some_and(|x| case.partition.is_interface(x) || case.partition.interface_ext().contains(&x));
        report.check(
            format!("qce-control {} {}", case.label, v.name()),
            s.max_ghost_force > QCE_GHOST_THRESHOLD && near,
            format!(
                "max ghost force {:e} at {} must exceed {QCE_GHOST_THRESHOLD:e} near the interface",
                s.max_ghost_force,
                s.ghost_site.map_or("-".into(), |x| x.to_string())
            ),
        );
    }
    Ok(report)
}

/// Least-squares line through `(log R, log error)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub quantity: String,
    pub scales: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of the log errors from the line.
    pub residual: f64,
}

impl RateFit {
    pub fn fit(quantity: &str, scales: &[f64], errors: &[f64]) -> Result<RateFit> {
        if scales.len() != errors.len() || scales.len() < 3 {
            return Err(Error::Config(format!("{quantity}: a rate fit needs at least three scales")));
        }
        if scales.iter().chain(errors).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("{quantity}: scales and errors must be positive")));
        }
        let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
        Ok(RateFit { quantity: quantity.into(), scales: scales.to_vec(), errors: errors.to_vec(), slope, intercept, residual })
    }

    pub fn within(&self, expected: f64, tol: f64) -> bool {
        (self.slope - expected).abs() <= tol
    }
}

/// `η(r) = (1 − r²)⁴` on `r < 1`, zero outside; three times continuously differentiable.
pub fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - r * r).powi(4)
    }
}

/// `u_R(x) = ε R η(|x|/R) (sin(2π x1/R), cos(2π x2/R))` on a window covering its support.
pub fn test_field(scale: f64, epsilon: f64, window: IndexBox) -> LatticeField {
    let k = 2.0 * std::f64::consts::PI / scale;
    LatticeField::from_fn(window, |x| {
        let z = x.position();
        let a = epsilon * scale * bump(z.norm() / scale);
        crate::Vec2::new(a * (k * z.x).sin(), a * (k * z.y).cos())
    })
}

/// Smallest window holding the support of `u_R` with the field margin.
pub fn test_window(scale: f64) -> IndexBox {
    IndexBox::covering_disc(scale, SUPPORT_MARGIN + 1)
}

/// Consistency errors at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub scale: u32,
    pub err_i_max: f64,
    pub err_i_lp: f64,
    pub err_c_max: f64,
    pub err_c_lp: f64,
    pub err_c1_max: f64,
    pub err_c1_lp: f64,
    pub err_a_max: f64,
    pub dual2: Option<f64>,
    pub sites: usize,
}

/// Errors of the modified a/c stress for the test field at scale `R`, with `A` a hexagon of radius `fraction·R`.
pub fn convergence_row(cfg: &ConvergenceConfig, params: &ParameterConfig, scale: u32, window: IndexBox) -> Result<ConvergenceRow> {
    let radius = (cfg.hexagon_fraction * scale as f64).round().max(1.0) as i64;
    let spec = GeometrySpec::Hexagon { radius, center: [0, 0] };
    let case = Case::new(format!("hexagon-{radius}"), &spec, window)?;
    let v = cfg.potential.build()?;
    let r = params.build(&case.partition)?;
    let psi = psi_ac_coefficients(&r, &case.partition)?;
    let y = test_field(scale as f64, cfg.epsilon, window);
    let rep = consistency_report(&v, &r, &case.partition, &psi, &y, cfg.p)?;
    Ok(ConvergenceRow {
        scale,
        err_i_max: rep.err_i_max,
        err_i_lp: rep.err_i_lp,
        err_c_max: rep.err_c_max,
        err_c_lp: rep.err_c_lp,
        err_c1_max: rep.err_c1_max,
        err_c1_lp: rep.err_c1_lp,
        err_a_max: rep.err_a_max,
        dual2: rep.dual2,
        sites: window.len(),
    })
}

/// Rows, fits and checks of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub fits: Vec<RateFit>,
    pub report: Report,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

/// Rate study over the configured scales; slope checks `−2` on `T_C`, `−1` on `T_I` and `−1` for `Σ_c¹` on `T_C`.
pub fn run_convergence(cfg: &ExperimentConfig, out: Option<&Path>, source: &str) -> Result<ConvergenceStudy> {
    let conv = &cfg.convergence;
    let mut report = Report::new(source);
    let mut rows = Vec::new();
    for &scale in &conv.scales {
        rows.push(convergence_row(conv, &cfg.parameters, scale, test_window(scale as f64))?);
    }
    let mut csv = String::from("R,errI_max,errI_lp,errC_max,errC_lp,dual2\n");
    let mut csv1 = String::from("R,errC1_max,errC1_lp,errA_max\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.scale,
            row.err_i_max,
            row.err_i_lp,
            row.err_c_max,
            row.err_c_lp,
            fmt_opt(row.dual2)
        );
        let _ = writeln!(csv1, "{},{},{},{}", row.scale, row.err_c1_max, row.err_c1_lp, row.err_a_max);
    }
    let scales: Vec<f64> = rows.iter().map(|r| r.scale as f64).collect();
    let column = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let mut fits = vec![
        RateFit::fit("errC_max", &scales, &column(|r| r.err_c_max))?,
        RateFit::fit("errI_max", &scales, &column(|r| r.err_i_max))?,
        RateFit::fit("errC1_max", &scales, &column(|r| r.err_c1_max))?,
        RateFit::fit("errC_lp", &scales, &column(|r| r.err_c_lp))?,
        RateFit::fit("errI_lp", &scales, &column(|r| r.err_i_lp))?,
        RateFit::fit("errC1_lp", &scales, &column(|r| r.err_c1_lp))?,
    ];
    if rows.iter().all(|r| r.dual2.is_some_and(|d| d > 0.0)) {
        fits.push(RateFit::fit("dual2", &scales, &column(|r| r.dual2.unwrap_or(0.0)))?);
    }
    let mut rates = String::from("quantity,slope,intercept,residual\n");
    for f in &fits {
        let _ = writeln!(rates, "{},{},{},{}", f.quantity, f.slope, f.intercept, f.residual);
    }
    write_out(out, "convergence.csv", &csv)?;
    write_out(out, "convergence_c1.csv", &csv1)?;
    write_out(out, "rates.csv", &rates)?;
    let label = |s: &[u32]| s.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    for (name, expected) in [("errC_max", -2.0), ("errI_max", -1.0), ("errC1_max", -1.0)] {
        let f = fits.iter().find(|f| f.quantity == name).expect("fitted above");
        report.check(
            format!("convergence slope {name}"),
            f.within(expected, SLOPE_TOL),
            format!(
                "slope {:.3} (fit residual {:.2e}) vs {expected} +- {SLOPE_TOL} at R={}",
                f.slope,
                f.residual,
                label(&conv.scales)
            ),
        );
    }
    let err_a = rows.iter().fold(0.0f64, |m, r| m.max(r.err_a_max));
    report.check(
        "convergence atomistic locality",
        err_a <= 1e-12 * (1.0 + rows.iter().fold(0.0f64, |m, r| m.max(r.err_i_max))),
        format!("max error on T_A {err_a:e} <= 1e-12 relative"),
    );
    if conv.check_truncation && conv.p == 2.0 {
        let row = &rows[0];
        let wide = convergence_row(conv, &cfg.parameters, row.scale, test_window(row.scale as f64).grow(test_window(row.scale as f64).n1_max))?;
        let (a, b) = (row.dual2.unwrap_or(0.0), wide.dual2.unwrap_or(0.0));
        let change = (a - b).abs() / b.max(f64::MIN_POSITIVE);
        report.check(
            "convergence dual-norm truncation",
            change <= DUAL_TRUNCATION_TOL,
            format!("dual2 {a:e} vs {b:e} on the doubled window at R={}, relative change {change:.2e} <= {DUAL_TRUNCATION_TOL}", row.scale),
        );
    }
    for f in &fits {
        report.notes.push(format!("rate {}: slope {:.4}, residual {:.2e}", f.quantity, f.slope, f.residual));
    }
    Ok(ConvergenceStudy { rows, fits, report })
}

/// Dimension of the force-consistent parameter space against the predicted count.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub label: String,
    pub planar: bool,
    pub unknowns: usize,
    pub rows: usize,
    pub rank: usize,
    pub dimension: usize,
    /// Dimension restricted to interface sites at window depth at least one.
    pub interior_dimension: usize,
    pub expected: usize,
    /// Residual of the configured parameters in the constraint system.
    pub assigned_residual: f64,
}

impl AuditRow {
    pub fn passed(&self) -> bool {
        self.interior_dimension == self.expected && self.assigned_residual <= FEASIBILITY_TOL
    }
}

pub fn audit_case(case: &Case, params: &ParameterConfig) -> Result<AuditRow> {
    let p = &case.partition;
    let s = assemble_patch_constraints(p)?;
    let sol = solve_constraints(&s)?;
    let window = p.window();
    let interior_dimension = sol.restricted_dimension(&s, |x| window.depth(x) >= 1);
    let planar = is_planar(p);
    let expected = if planar { flat_parameter_count(p).unwrap_or(0) } else { interior_interface_bond_count(p) };
    let assigned = match params.build(p) {
        Ok(r) => s.residual(&s.vector_of(&r, p)?),
        Err(Error::NotPlanar) => s.residual(&s.vector_of(&assign_general(p, &BTreeMap::new(), params.default_free)?, p)?),
        Err(e) => return Err(e),
    };
    Ok(AuditRow {
        label: case.label.clone(),
        planar,
        unknowns: s.unknowns.len(),
        rows: s.rows.len(),
        rank: sol.rank,
        dimension: sol.dimension,
        interior_dimension,
        expected,
        assigned_residual: assigned,
    })
}

/// Constraint-space dimension against the flat (planar) or interface-bond (non-planar) count.
pub fn run_constraint_audit(cfg: &ExperimentConfig, out: Option<&Path>, source: &str) -> Result<Report> {
    let mut report = Report::new(source);
    let mut csv = String::from("geometry,planar,unknowns,rows,rank,dimension,interior_dimension,expected,assigned_residual,passed\n");
    for case in cfg.cases()? {
        let a = audit_case(&case, &cfg.parameters)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            a.label,
            a.planar,
            a.unknowns,
            a.rows,
            a.rank,
            a.dimension,
            a.interior_dimension,
            a.expected,
            a.assigned_residual,
            a.passed()
        );
        let rule = if a.planar { "4 + in-line bonds" } else { "interface-interface bonds" };
        report.check(
            format!("constraint-audit {}", a.label),
            a.passed(),
            format!(
                "dimension {} on depth>=1 interface sites vs {} = {} (full window {}, rank {}); configured parameters residual {:e} <= {FEASIBILITY_TOL:e}",
                a.interior_dimension, rule, a.expected, a.dimension, a.rank, a.assigned_residual
            ),
        );
    }
    write_out(out, "constraint_audit.csv", &csv)?;
    Ok(report)
}

/// Writes `partition_<label>.csv` and `params_<label>.csv` for every configured geometry.
pub fn run_export_geometry(cfg: &ExperimentConfig, out: Option<&Path>, source: &str) -> Result<Report> {
    let mut report = Report::new(source);
    for case in cfg.cases()? {
        let r = cfg.parameters.build(&case.partition)?;
        write_out(out, &format!("partition_{}.csv", case.label), &case.partition.to_csv())?;
        write_out(out, &format!("params_{}.csv", case.label), &r.to_csv())?;
        report.check(
            format!("export-geometry {}", case.label),
            true,
            format!(
                "admissible; {} interface sites, {} parameter rows",
                case.partition.interface().len(),
                r.interface_values().len() * 6
            ),
        );
    }
    Ok(report)
}
