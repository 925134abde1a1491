use grac::harness::{
    bump, test_field, test_window, ExperimentConfig, GeometrySpec, Policy, PotentialSpec, RateFit, DEFAULT_SCALES,
};
use grac::lattice::{IndexBox, Site};
use grac::partition::CornerCase;
use grac::Error;

#[test]
fn empty_config_gives_defaults() {
    let cfg = ExperimentConfig::from_toml("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.convergence.scales, DEFAULT_SCALES.to_vec());
    assert_eq!(cfg.patch_test.samples, 20);
    assert_eq!(cfg.geometries.len(), 1 + CornerCase::ALL.len());
}

#[test]
fn full_config_parses() {
    let text = r#"
seed = 11
window_radius = 14
output_dir = "results"

[[geometry]]
kind = "hexagon"
radius = 4
center = [1, -1]

[[geometry]]
kind = "corner"
case = "atomistic-tip"

[[geometry]]
kind = "polygon"
vertices = [[-3.0, -3.0], [3.0, -3.0], [0.0, 3.0]]

[[geometry]]
kind = "custom"
region = { kind = "half-plane", p = 1, q = 1, offset = 0 }

[[potential]]
kind = "sum"
parts = [{ kind = "morse", alpha = 3.0 }, { kind = "wide-angle", kappa = 0.5 }]

[parameters]
policy = "general"
default_free = 0.7
free = [{ n1 = 0, n2 = 5, j = 1, value = 0.9 }]

[patch_test]
samples = 5
radius = 0.1

[convergence]
scales = [16, 32, 48]
epsilon = 0.02
p = 1.5
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.geometries[1], GeometrySpec::Corner { case: CornerCase::AtomisticTip });
    assert_eq!(cfg.parameters.policy, Policy::General);
    assert_eq!(cfg.convergence.scales, vec![16, 32, 48]);
    let labels: Vec<String> = cfg.cases().unwrap().into_iter().map(|c| c.label).collect();
    assert_eq!(labels, ["hexagon-4", "corner-atomistic-tip", "polygon", "custom"]);
    assert!(cfg.potentials[0].build().unwrap().name().contains("wide-angle"));
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "sed = 1",
        "[parameters]\npolicy = \"general\"\ndefault = 0.7",
        "[[geometry]]\nkind = \"hexagon\"\nradius = 3\nradus = 4",
        "[[potential]]\nkind = \"morse\"\nbeta = 2.0",
        "[[geometry]]\nkind = \"corner\"\ncase = \"sharp\"",
    ] {
        assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
    }
}

#[test]
fn invalid_values_are_rejected() {
    for text in [
        "window_radius = 3",
        "[convergence]\nscales = [16, 32]",
        "[[potential]]\nkind = \"quadratic\"\nkappa = [1, 2, 3, 4, 5, 6]",
        "[[potential]]\nkind = \"sum\"\nparts = []",
        "[patch_test]\nsamples = 0",
    ] {
        assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
    }
}

#[test]
fn inadmissible_geometry_aborts_with_report() {
    // a sharp continuum wedge leaves its tip without a continuum neighbour
    let text = "[[geometry]]\nkind = \"custom\"\nregion = { kind = \"complement\", inner = { kind = \"intersection\", \
                parts = [{ kind = \"half-plane\", p = -1, q = 0, offset = 1 }, { kind = \"half-plane\", p = 0, q = -1, offset = 1 }] } }";
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let err = cfg.cases().unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("not admissible")), "{err}");
}

#[test]
fn rate_fit_recovers_power_laws() {
    let scales = [16.0, 32.0, 64.0, 128.0];
    let errors: Vec<f64> = scales.iter().map(|r: &f64| 3.0 * r.powf(-2.0)).collect();
    let fit = RateFit::fit("x", &scales, &errors).unwrap();
    assert!((fit.slope + 2.0).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(fit.residual < 1e-12);
    assert!(fit.within(-2.1, 0.2) && !fit.within(-1.0, 0.2));
    assert!(RateFit::fit("x", &scales[..2], &errors[..2]).is_err());
    assert!(RateFit::fit("x", &scales, &[1.0, 0.0, 1.0, 1.0]).is_err());
}

#[test]
fn test_field_is_compact_and_scales() {
    assert_eq!(bump(1.0), 0.0);
    assert_eq!(bump(0.0), 1.0);
    let r = 16.0;
    let w = test_window(r);
    let u = test_field(r, 0.05, w);
    u.validate().unwrap();
    for (x, v) in u.iter() {
        if x.position().norm() >= r {
            assert_eq!(v, grac::Vec2::zeros());
        }
    }
    // amplitude ε R at the centre in the second component
    assert!((u.get(Site::ORIGIN).y - 0.05 * r).abs() < 1e-12);
    let half = test_field(r, 0.025, w);
    assert!((half.get(Site::new(2, 3)) * 2.0 - u.get(Site::new(2, 3))).norm() < 1e-14);
    assert!(w.contains(Site::new(0, 18)) && IndexBox::centered(w.n1_max).shrink(3).contains(Site::new(0, 18)));
}

#[test]
fn potential_defaults_build() {
    for p in PotentialSpec::defaults().into_iter().chain([PotentialSpec::multibody()]) {
        let v = p.build().unwrap();
        assert!(v.point_symmetric(), "{}", v.name());
    }
}
