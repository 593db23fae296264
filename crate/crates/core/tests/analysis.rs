use feshrg::analysis::{
    analyticity_residual, decay_profile, decay_series_consistent, eigen_residual, oconnor_partial_sums, theta_constancy,
};
use feshrg::linalg;
use feshrg::num::{c, CVec, C64};

fn hydrogenic(a: f64, n: usize, box_len: f64) -> (CVec, Vec<f64>) {
    let h = box_len / (n + 1) as f64;
    let radii: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
    let psi = CVec::from_iterator(n, radii.iter().map(|r| c(r * (-a * r).exp(), 0.0)));
    (psi, radii)
}

#[test]
fn decay_rate_of_exact_exponential() {
    for a in [0.5, 1.0, 1.7] {
        let (psi, radii) = hydrogenic(a, 200, 20.0);
        let rep = decay_profile(&psi, &radii, &[0.5 * a, 0.9 * a, 1.2 * a]).unwrap();
        assert!((rep.a_fit - a).abs() < 0.02 * a, "a = {a}: fit {}", rep.a_fit);
        assert!(rep.ladder[0].finite && rep.ladder[1].finite);
        assert!(!rep.ladder[2].finite);
    }
}

#[test]
fn decay_needs_enough_points() {
    let (psi, radii) = hydrogenic(1.0, 6, 5.0);
    assert!(decay_profile(&psi, &radii, &[]).is_err());
}

#[test]
fn oconnor_series_radius() {
    let (psi, radii) = hydrogenic(1.0, 200, 20.0);
    let inside = oconnor_partial_sums(&psi, &radii, 0.5, 30).unwrap();
    assert!(inside.converging);
    assert!(inside.t_star > 0.5 && inside.t_star < 4.0, "t* {}", inside.t_star);
    assert!(inside.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    let outside = oconnor_partial_sums(&psi, &radii, 10.0, 30).unwrap();
    assert!(!outside.converging);
    assert!(decay_series_consistent(&psi, &radii, inside.t_star, 0.2).unwrap());
}

#[test]
fn analytic_circle_has_no_negative_modes() {
    let center = c(0.05, 0.0);
    let samples: Vec<C64> = (0..8)
        .map(|k| {
            let z = center + C64::from_polar(0.02, std::f64::consts::TAU * k as f64 / 8.0);
            c(1.0, 0.0) + z * z * 0.3 - z * z * z
        })
        .collect();
    assert!(analyticity_residual(&samples).unwrap() < 1e-14);
    let conj: Vec<C64> = samples.iter().map(|z| z.conj()).collect();
    assert!(analyticity_residual(&conj).unwrap() > 1e-6);
    assert!(analyticity_residual(&samples[..4]).is_err());
    assert_eq!(theta_constancy(&[c(1.0, 0.0), c(1.0, 1e-3)], c(1.0, 0.0)), 1e-3);
}

#[test]
fn eigen_residual_of_exact_pair() {
    let h = linalg::real_diag(&[0.0, 1.0]);
    let psi = CVec::from_vec(vec![c(0.0, 0.0), c(2.0, 0.0)]);
    assert_eq!(eigen_residual(&h, c(1.0, 0.0), &psi).unwrap(), 0.0);
    assert!((eigen_residual(&h, c(0.0, 0.0), &psi).unwrap() - 1.0).abs() < 1e-15);
    assert!(eigen_residual(&h, c(0.0, 0.0), &CVec::zeros(3)).is_err());
}
