//! Closed forms and quadratures against values frozen from independent
//! arbitrary-precision evaluations (mpmath, 30 digits).

use coupletime_core::delay::{delay_bound_constant, sign_flip_probability};
use coupletime_core::maximal::{joint_density, total_mass, ShiftedJointLaw};
use coupletime_core::quadrature::{integrate, integrate_lower, integrate_upper, QuadOptions};
use coupletime_core::reflection::{m1_tail, mgf_closed_form, mgf_quadrature, q_alpha};
use coupletime_core::sim_kernel::{crossing_probability, first_passage_mgf};

/// `(alpha, gap, 1 + sinh(x) log tanh(x/2))` with `x = √(α/2)·gap`.
const MGF_TABLE: [(f64, f64, f64); 9] = [
    (0.25, 0.5, 0.568_437_992_710_528_84),
    (0.25, 1.0, 0.370_761_994_640_734_24),
    (0.25, 2.0, 0.170_911_292_858_495_23),
    (1.0, 0.5, 0.370_761_994_640_734_24),
    (1.0, 1.0, 0.170_911_292_858_495_23),
    (1.0, 2.0, 0.039_881_831_410_655_784),
    (4.0, 0.5, 0.170_911_292_858_495_23),
    (4.0, 1.0, 0.039_881_831_410_655_784),
    (4.0, 2.0, 0.002_330_622_554_499_583_6),
];

#[test]
fn closed_form_mgf_matches_high_precision_values() {
    for (alpha, gap, want) in MGF_TABLE {
        let got = mgf_closed_form(gap, alpha).unwrap();
        assert!(!got.underflow);
        assert!((got.value - want).abs() / want < 1e-13, "alpha {alpha} gap {gap}: {} vs {want}", got.value);
    }
}

#[test]
fn quadrature_agrees_with_closed_form() {
    for (alpha, gap, _) in MGF_TABLE {
        let closed = mgf_closed_form(gap, alpha).unwrap().value;
        let quad = mgf_quadrature(0.5 * gap, alpha).unwrap().value;
        assert!((closed - quad).abs() / closed < 1e-8, "alpha {alpha} gap {gap}: {closed} vs {quad}");
    }
}

#[test]
fn excursion_laws() {
    assert!((m1_tail(1.0f64, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let q = q_alpha(0.5f64, 0.5, 2.0).unwrap();
    assert!((q - 0.324_027_136_831_942_70).abs() < 1e-14);
}

#[test]
fn brownian_building_blocks() {
    assert!((first_passage_mgf(1.0f64, 0.5).unwrap() - 0.367_879_441_171_442_32).abs() < 1e-15);
    assert!((crossing_probability(0.5f64, 0.5, 0.0, 1.0) - 0.606_530_659_712_633_42).abs() < 1e-15);
}

#[test]
fn delay_constant() {
    let c = delay_bound_constant().unwrap();
    assert!((c - 105.557_290_274_313_06).abs() < 1e-9, "{c}");
    assert!((c - 105.557).abs() < 1e-3);
}

#[test]
fn sign_flip_formula() {
    let table = [
        (1.0, 0.2, 0.011_791_952_011_907_508),
        (0.5, 0.3, 0.056_567_041_128_660_574),
        (2.0, 0.4, 0.013_586_167_565_289_409),
        (0.1, 0.45, 0.403_710_672_456_949_05),
        (0.3, 0.2, 0.045_207_076_691_931_645),
    ];
    for (t, eps, want) in table {
        let got: f64 = sign_flip_probability(t, eps).unwrap();
        assert!((got - want).abs() < 1e-14 * want.max(1e-3), "t {t} eps {eps}: {got} vs {want}");
    }
}

fn tail_mass_above(law: &ShiftedJointLaw, s_low: f64) -> f64 {
    let opts = QuadOptions::new(1e-13, 1e-11);
    integrate_upper(
        |s: f64| {
            integrate_lower(|b: f64| joint_density(b, s, law), s, &opts)
                .unwrap()
                .value
        },
        s_low,
        &opts,
    )
    .unwrap()
    .value
}

#[test]
fn joint_density_normalization_and_marginal() {
    let law = ShiftedJointLaw::<f64>::new(0.0, 0.0, 1.0).unwrap();
    let (mass, err) = total_mass(&law).unwrap();
    assert!((mass - 1.0).abs() < 1e-6, "mass {mass} ± {err}");
    // Twice the standard normal upper tail at 1.
    let p = tail_mass_above(&law, 1.0);
    assert!((p - 0.317_310_507_862_914_10).abs() < 1e-6, "{p}");
    // A shifted law keeps unit mass (continuous part plus the line at s = s0).
    let law = ShiftedJointLaw::<f64>::new(0.3, 1.0, 2.0).unwrap();
    let (mass, _) = total_mass(&law).unwrap();
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
}

#[test]
fn gauss_kronrod_on_known_integrals() {
    let opts = QuadOptions::default();
    let q = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, &opts).unwrap();
    assert!((q.value - 2.0).abs() < 1e-13);
    let q = integrate_upper(|x: f64| (-x * x).exp(), 0.0, &opts).unwrap();
    assert!((q.value - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
}
