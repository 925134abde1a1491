//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::time::Instant;

use grac::energy::{central_difference, patch_test, variation_pairing, EnergyKind};
use grac::fields::{HomogeneousState, LatticeField};
use grac::harness::{
    run_constraint_audit, run_convergence, run_patch_test, ExperimentConfig, GeometrySpec, PotentialSpec,
};
use grac::lattice::{deformed_vectors, Dir, Edge, IndexBox, Site, Triangle, OMEGA0};
use grac::partition::{build_partition, CornerCase, Geometry, RegionPartition, SiteClass};
use grac::potentials::{cb_stress, SitePotential};
use grac::reconstruction::{assign_flat, assign_general, qce, ReconstructionParams};
use grac::stress::{
    check_psi23, corrector_obstruction, divergence_residual, psi_ac_coefficients, sigma_a, sigma_ac, sigma_ac_hat,
    sigma_c1, sigma_c2, sigma_c3, stress_difference_coefficients,
};
use grac::{Mat2, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WINDOW: i64 = 12;
const FIELDS_PER_GEOMETRY: u64 = 10;

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!("{} criterion {n} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn catalog() -> Vec<(String, RegionPartition)> {
    GeometrySpec::catalog()
        .iter()
        .map(|s| {
            let label = format!("{s:?}");
            (label, build_partition(&s.geometry(), IndexBox::centered(WINDOW)).unwrap())
        })
        .collect()
}

fn params(p: &RegionPartition) -> ReconstructionParams {
    assign_general(p, &BTreeMap::new(), 0.8).unwrap()
}

fn multibody() -> Box<dyn SitePotential> {
    PotentialSpec::multibody().build().unwrap()
}

/// Random displacement on the sites within `radius` hops of the origin.
fn random_field(window: IndexBox, radius: i64, amp: f64, rng: &mut ChaCha8Rng) -> LatticeField {
    LatticeField::from_fn(window, |x| {
        if x.hops(Site::ORIGIN) <= radius {
            Vec2::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))
        } else {
            Vec2::zeros()
        }
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_1_patch_test() {
    let cfg = ExperimentConfig::default();
    let report = run_patch_test(&cfg, false, None, "acceptance").unwrap();
    let main: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with("patch-test")).collect();
    for c in &main {
        println!("  {} {}: {}", if c.passed { "ok" } else { "failed" }, c.name, c.detail);
    }
    let failed = main.iter().filter(|c| !c.passed).count();
    verdict(
        1,
        "patch test",
        failed == 0 && main.len() == 3 * cfg.geometries.len(),
        &format!(
            "{} geometry/potential pairs x {} random F, {failed} failing; ghost <= 1e-12*(1+max|dV|), energy <= 1e-13 relative",
            main.len(),
            cfg.patch_test.samples
        ),
    );
}

#[test]
fn criterion_2_qce_negative_control() {
    let p = build_partition(&Geometry::hexagon(6), IndexBox::centered(WINDOW)).unwrap();
    let v = PotentialSpec::Quadratic { kappa: [1.0, 2.0, 3.0, 1.0, 2.0, 3.0] }.build().unwrap();
    let f = Mat2::new(1.1, 0.0, 0.0, 1.0);
    let s = patch_test(&v, &qce(&p), &p, f).unwrap();
    let site = s.ghost_site.unwrap();
    let near = p.is_interface(site) || p.interface_ext().contains(&site);
    let general = patch_test(&v, &params(&p), &p, f).unwrap();
    verdict(
        2,
        "QCE ghost forces",
        s.max_ghost_force > 1e-3 && near && general.passed(),
        &format!(
            "QCE max ghost force {:.4e} at {site} (interface neighbourhood: {near}) > 1e-3; reconstructed energy gives {:.2e}",
            s.max_ghost_force, general.max_ghost_force
        ),
    );
}

#[test]
fn criterion_3_representation_identities() {
    let v = multibody();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, p) in catalog() {
        let r = params(&p);
        let psi = psi_ac_coefficients(&r, &p).unwrap();
        let w = p.window();
        for _ in 0..FIELDS_PER_GEOMETRY {
            let y = random_field(w, 8, 0.05, &mut rng);
            let u = random_field(w, 8, 1.0, &mut rng);
            let ea = variation_pairing(&EnergyKind::Atomistic.forces(&v, &y).unwrap(), &u);
            let ec = variation_pairing(&EnergyKind::Continuum.forces(&v, &y).unwrap(), &u);
            let eac = variation_pairing(&EnergyKind::coupled(&p, &r).forces(&v, &y).unwrap(), &u);
            let pairs = [
                (sigma_a(&v, &y).unwrap().pairing(&u).unwrap(), ea),
                (sigma_c1(&v, &y).unwrap().pairing(&u).unwrap(), ec),
                (sigma_c2(&v, &y).unwrap().pairing(&u).unwrap(), ec),
                (sigma_c3(&v, &y).unwrap().pairing(&u).unwrap(), ec),
                (sigma_ac(&v, &r, &p, &y).unwrap().pairing(&u).unwrap(), eac),
                (sigma_ac_hat(&v, &r, &p, &psi, &y).unwrap().pairing(&u).unwrap(), eac),
            ];
            for (a, b) in pairs {
                worst = worst.max(rel(a, b));
                count += 1;
            }
        }
    }
    verdict(
        3,
        "representation identities",
        worst <= 1e-12,
        &format!("{count} stress/variation pairings, worst relative difference {worst:.2e} <= 1e-12"),
    );
}

#[test]
fn criterion_4_divergence_free() {
    let v = multibody();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut c1, mut c3, mut hat, mut psi23, mut control) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for (_, p) in catalog() {
        let r = params(&p);
        let psi = psi_ac_coefficients(&r, &p).unwrap();
        for _ in 0..3 {
            let y = random_field(p.window(), 8, 0.05, &mut rng);
            let s2 = sigma_c2(&v, &y).unwrap();
            c1 = c1.max(divergence_residual(&sigma_c1(&v, &y).unwrap().sub(&s2)));
            c3 = c3.max(divergence_residual(&sigma_c3(&v, &y).unwrap().sub(&s2)));
            let sac = sigma_ac(&v, &r, &p, &y).unwrap();
            hat = hat.max(divergence_residual(&sigma_ac_hat(&v, &r, &p, &psi, &y).unwrap().sub(&sac)));
            psi23 = psi23.max(check_psi23(&v, &y).unwrap());
            control = control.min(divergence_residual(&sigma_a(&v, &y).unwrap().sub(&s2)));
        }
    }
    verdict(
        4,
        "divergence-free differences",
        c1 <= 1e-12 && c3 <= 1e-12 && hat <= 1e-12 && psi23 <= 1e-12 && control > 1e-6,
        &format!(
            "div(c1-c2) {c1:.2e}, div(c3-c2) {c3:.2e}, div(hat-ac) {hat:.2e}, |c3-c2-curl psi23| {psi23:.2e} (all <= 1e-12); \
             control div(a-c2) >= {control:.2e}"
        ),
    );
}

#[test]
fn criterion_5_modified_stress_locality() {
    let v = multibody();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut on_a, mut on_c, mut hom) = (0.0f64, 0.0f64, 0.0f64);
    for (_, p) in catalog() {
        let r = params(&p);
        let psi = psi_ac_coefficients(&r, &p).unwrap();
        let y = random_field(p.window(), 8, 0.05, &mut rng);
        let shat = sigma_ac_hat(&v, &r, &p, &psi, &y).unwrap();
        let sa = sigma_a(&v, &y).unwrap();
        let sc2 = sigma_c2(&v, &y).unwrap();
        for (t, m) in shat.iter() {
            match p.triangle_class(t) {
                SiteClass::Atomistic => on_a = on_a.max((m - sa.get(t).unwrap()).norm()),
                SiteClass::Continuum => on_c = on_c.max((m - sc2.get(t).unwrap()).norm()),
                SiteClass::Interface => {}
            }
        }
        for _ in 0..3 {
            let f = grac::energy::random_gradient(&mut rng, 0.2);
            let yf = HomogeneousState::new(f, p.window());
            let dw = cb_stress(&v, &f).unwrap();
            for (_, m) in sigma_ac_hat(&v, &r, &p, &psi, &yf).unwrap().iter() {
                hom = hom.max((m - dw).norm());
            }
        }
    }
    verdict(
        5,
        "modified stress locality",
        on_a <= 1e-12 && on_c <= 1e-12 && hom <= 1e-12,
        &format!("|hat-a| on T_A {on_a:.2e}, |hat-c2| on T_C {on_c:.2e}, |hat(y_F)-dW(F)| {hom:.2e} (all <= 1e-12)"),
    );
}

/// `Σ_ac − Σ_a` at `y_F` against `(1/Ω0) Σ_k V_{F,k} ⊗ L_k`.
fn homogeneous_difference_error(
    v: &dyn SitePotential,
    r: &ReconstructionParams,
    p: &RegionPartition,
    t: Triangle,
    l: [Vec2; 3],
) -> f64 {
    let f = Mat2::new(1.07, -0.04, 0.06, 0.97);
    let y = HomogeneousState::new(f, p.window());
    let dv = v.d1(&deformed_vectors(&f)).unwrap();
    let diff = sigma_ac(&v, r, p, &y).unwrap().get(t).unwrap() - sigma_a(&v, &y).unwrap().get(t).unwrap();
    let predicted: Mat2 = (0..3).map(|k| dv[k] * l[k].transpose()).sum::<Mat2>() / OMEGA0;
    (diff - predicted).norm()
}

#[test]
fn criterion_6_oracles() {
    let v = multibody();
    let v = v.as_ref();
    let third = 1.0 / 3.0;
    let two = 2.0 / 3.0;
    let [e1, e2, e3] = [1, 2, 3].map(|j| Dir::new(j).vector());

    let flat = build_partition(&Geometry::flat(), IndexBox::centered(WINDOW)).unwrap();
    let b = Site::ORIGIN;
    let a1 = Dir::new(1);
    let (d1, d2, c2, c3) = (0.61, 0.83, 0.74, 0.58);
    let mut d = BTreeMap::new();
    d.insert(Edge::new(b.step(a1.opposite()), a1), d1);
    d.insert(Edge::new(b, a1), d2);
    let r = assign_flat(&flat, [c2, c3, 0.7, 0.9], &d, 0.75).unwrap();
    let l = [e2 * (two - d2) + e3 * (d1 - two), e2 * (c2 - two) + e3 * (two - c2), e2 * (two - c3) + e3 * (c3 - two)];
    let mut flat_err = homogeneous_difference_error(v, &r, &flat, Triangle::down(b), l);
    let lambda = psi_ac_coefficients(&r, &flat).unwrap().get(Edge::new(b, Dir::new(3)));
    let want = [0.5 * (d1 - two), 0.5 * (two - c2), 0.5 * (c3 - two)];
    for k in 0..3 {
        flat_err = flat_err.max((lambda[k] - want[k]).abs());
    }

    let corner = build_partition(&CornerCase::Concave.geometry(), IndexBox::centered(WINDOW)).unwrap();
    let (a, bb) = (0.57, 0.81);
    let mut free = BTreeMap::new();
    free.insert(Edge::between(Site::new(0, 1), Site::new(-1, 1)).unwrap(), a);
    free.insert(Edge::between(Site::new(0, 1), Site::new(1, 0)).unwrap(), bb);
    let rc = assign_general(&corner, &free, two).unwrap();
    let z = Vec2::zeros();
    let table = [
        (Triangle::up(Site::new(-1, 1)), [e1 * (a - two), -e1 * third, e1 * third]),
        (Triangle::down(Site::new(0, 1)), [e3 * (a - two), z, z]),
        (Triangle::up(Site::new(0, 1)), [z, z, e1 * (bb - two)]),
        (Triangle::down(Site::new(1, 0)), [e3 * third, -e3 * third, e3 * (bb - two)]),
        (Triangle::up(Site::new(0, 0)), [-e3 * third + e2 * (1.0 - a), e3 * third, e3 * (bb - 1.0)]),
        (Triangle::down(Site::new(0, 0)), [e1 * (a - 1.0), e1 * third, -e1 * third + e2 * (1.0 - bb)]),
    ];
    let mut corner_err = 0.0f64;
    for (t, l) in table {
        corner_err = corner_err.max(homogeneous_difference_error(v, &rc, &corner, t, l));
        let computed = stress_difference_coefficients(&rc, &corner, t).unwrap();
        for k in 0..3 {
            corner_err = corner_err.max((computed[k] - l[k]).norm());
        }
    }
    let corner_solvable = psi_ac_coefficients(&rc, &corner).is_ok();
    let obstructions: Vec<_> = [&flat, &corner].iter().map(|p| corrector_obstruction(p).unwrap()).collect();
    let obstructed = obstructions.iter().all(|o| o.obstructed());
    verdict(
        6,
        "closed-form oracles",
        flat_err <= 1e-12 && corner_err <= 1e-12 && corner_solvable && obstructed,
        &format!(
            "flat corrector/stress error {flat_err:.2e}, corner stress differences error {corner_err:.2e} (<= 1e-12); \
             corner corrector solvable {corner_solvable}; zero-difference conditions rank {} < augmented rank {} (flat), {} < {} (corner)",
            obstructions[0].rank, obstructions[0].augmented_rank, obstructions[1].rank, obstructions[1].augmented_rank
        ),
    );
}

#[test]
fn criterion_7_rates() {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let study = run_convergence(&cfg, None, "acceptance").unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    print!("{}", study.report);
    let slope = |q: &str| study.fits.iter().find(|f| f.quantity == q).unwrap().slope;
    let ok = study.report.passed() && elapsed < 120.0;
    verdict(
        7,
        "consistency rates",
        ok,
        &format!(
            "R={:?}: errC slope {:.3} (-2 +- 0.2), errI slope {:.3} (-1 +- 0.2), Sigma_c1 slope {:.3} (-1 +- 0.2); {elapsed:.1} s < 120 s",
            cfg.convergence.scales,
            slope("errC_max"),
            slope("errI_max"),
            slope("errC1_max")
        ),
    );
}

#[test]
fn criterion_8_constraint_audit() {
    let cfg = ExperimentConfig::default();
    let report = run_constraint_audit(&cfg, None, "acceptance").unwrap();
    for c in &report.checks {
        println!("  {} {}: {}", if c.passed { "ok" } else { "failed" }, c.name, c.detail);
    }
    verdict(
        8,
        "constraint-space audit",
        report.passed() && report.checks.len() == cfg.geometries.len(),
        &format!("{} geometries, exact dimension match required", report.checks.len()),
    );
}

#[test]
fn criterion_9_first_variations() {
    let v = multibody();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, p) in catalog() {
        let r = params(&p);
        for _ in 0..2 {
            let y = random_field(p.window(), 8, 0.05, &mut rng);
            let u = random_field(p.window(), 8, 1.0, &mut rng);
            for kind in [EnergyKind::Atomistic, EnergyKind::Continuum, EnergyKind::coupled(&p, &r)] {
                let exact = variation_pairing(&kind.forces(&v, &y).unwrap(), &u);
                let fd = central_difference(&kind, &v, &y, &u, 1e-6).unwrap();
                worst = worst.max(rel(exact, fd));
                count += 1;
            }
        }
    }
    verdict(
        9,
        "first variations",
        worst <= 1e-6,
        &format!("{count} variations of E_a, E_c, E_ac against central differences (t = 1e-6): worst relative error {worst:.2e} <= 1e-6"),
    );
}
