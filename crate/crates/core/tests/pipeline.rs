use fockdpp::operator::{build_spectrum, load_spectral, save_spectral};
use fockdpp::sampler::{empirical_statistics, sample_many};
use fockdpp::statistic::{laplace_functional, mean_linear_statistic, variance_linear_statistic};
use fockdpp::{Atom, Complex64, DropletGrid, Ensemble, KernelField, Potential, SamplerConfig, ScalarField, TestFunction, Workspace};

#[test]
fn rotating_the_potential_rotates_the_statistics() {
    let v = Potential::anisotropic(0.3).unwrap();
    let alpha = 0.7;
    let vr = v.rotated(alpha);
    let a = build_spectrum(&v, 16.0, 1.0, 0.3, 1.4).unwrap();
    let b = build_spectrum(&vr, 16.0, 1.0, 0.3, 1.4).unwrap();
    assert_eq!(a.n_mu, b.n_mu);
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).abs() < 1e-10);
    }
    // f(e^{i alpha} z) for f = Re z + 0.5 Im z^2.
    let f = TestFunction::re_z().plus(&TestFunction::atom(0.5, Atom::ImZ2));
    let (c, s, c2, s2) = (alpha.cos(), alpha.sin(), (2.0 * alpha).cos(), (2.0 * alpha).sin());
    let f_rot = TestFunction::atom(c, Atom::ReZ)
        .plus(&TestFunction::atom(-s, Atom::ImZ))
        .plus(&TestFunction::atom(0.5 * s2, Atom::ReZ2))
        .plus(&TestFunction::atom(0.5 * c2, Atom::ImZ2));
    let z = Complex64::new(0.3, -0.4);
    assert!((f_rot.value(z) - f.value(z * Complex64::from_polar(1.0, alpha))).abs() < 1e-14);
    let ua = laplace_functional(&Workspace::new(&a).unwrap(), &f_rot).unwrap();
    let ub = laplace_functional(&Workspace::new(&b).unwrap(), &f).unwrap();
    assert!((ua - ub).abs() < 1e-9, "{ua} {ub}");
}

#[test]
fn cached_spectrum_gives_identical_statistics() {
    let v = Potential::anisotropic(0.5).unwrap();
    let sd = build_spectrum(&v, 12.0, 1.0, 0.4, 1.6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spectrum.bin");
    save_spectral(&sd, &path).unwrap();
    let back = load_spectral(&path, Some((&sd.potential, &sd.params, &sd.quadrature))).unwrap();
    let f = TestFunction::re_z().plus(&TestFunction::atom(0.4, Atom::GaussBump { center: [0.1, 0.2], width: 0.5 }));
    let (w1, w2) = (Workspace::new(&sd).unwrap(), Workspace::new(&back).unwrap());
    assert_eq!(laplace_functional(&w1, &f).unwrap().to_bits(), laplace_functional(&w2, &f).unwrap().to_bits());
    assert_eq!(variance_linear_statistic(&w1, &f).to_bits(), variance_linear_statistic(&w2, &f).to_bits());
}

#[test]
fn density_integrates_to_the_count_and_the_mean() {
    let ens = Ensemble::new(Potential::anisotropic(0.4).unwrap(), 1.0, 0.5, &DropletGrid::default()).unwrap();
    let sd = ens.spectrum(20.0).unwrap();
    let ws = Workspace::new(&sd).unwrap();
    let kf = KernelField::new(&sd);
    let total = ws.quad.integrate(&|z| kf.density(z));
    assert!((total - sd.n_mu as f64).abs() < 1e-8, "{total} {}", sd.n_mu);
    let f = TestFunction::atom(1.0, Atom::ReZ2).plus(&TestFunction::atom(0.3, Atom::ImZ));
    let by_density = ws.quad.integrate(&|z| kf.density(z) * f.value(z));
    assert!((by_density - mean_linear_statistic(&ws, &f)).abs() < 1e-8);
}

#[test]
fn sampled_ellipse_matches_exact_moments() {
    let sd = build_spectrum(&Potential::anisotropic(0.5).unwrap(), 8.0, 1.0, 0.5, 1.5 / 0.75f64.sqrt()).unwrap();
    let ws = Workspace::new(&sd).unwrap();
    let cfg = SamplerConfig::for_spectrum(&sd, 11, 2000).unwrap();
    let samples = sample_many(&sd, &cfg).unwrap();
    assert!(samples.iter().all(|s| s.points.len() == sd.n_mu));
    let f = TestFunction::atom(1.0, Atom::ReZ2);
    let st = empirical_statistics(&samples, &f).unwrap();
    let (m, v) = (mean_linear_statistic(&ws, &f), variance_linear_statistic(&ws, &f));
    assert!((st.mean.value - m).abs() <= 4.0 * st.mean.se, "{st:?} {m}");
    assert!((st.variance.value - v).abs() <= 4.0 * st.variance.se, "{st:?} {v}");
}
