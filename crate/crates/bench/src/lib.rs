//! Fixtures shared by the benchmarks.

use fockdpp::operator::build_spectrum;
use fockdpp::{DropletGrid, Ensemble, Potential, SpectralData};

/// The t = 0.5 ellipse at mu = 1, delta = 0.5.
pub fn ellipse() -> Ensemble {
    Ensemble::new(Potential::anisotropic(0.5).expect("valid anisotropy"), 1.0, 0.5, &DropletGrid::default()).expect("compact droplet")
}

pub fn ginibre_spectrum(n: f64) -> SpectralData {
    build_spectrum(&Potential::ginibre(), n, 1.0, 0.5, 1.5).expect("ginibre spectrum")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(ginibre_spectrum(8.0).n_mu, 8);
        assert!((ellipse().droplet.area_gamma - 1.0 / 0.75f64.sqrt()).abs() < 1e-8);
    }
}
