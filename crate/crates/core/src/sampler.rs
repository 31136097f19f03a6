//! Exact sampling of the projection process with kernel Pi_N (sequential HKPV scheme) and
//! Monte-Carlo estimates of linear statistics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::ScalarField;
use crate::operator::{KernelField, SpectralData};
use crate::potential::bounding_radius;

type C = Complex64;

/// Density level, relative to N, below which the region outside the proposal disk is dropped.
pub const PROPOSAL_CUTOFF: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub proposal_radius: f64,
    pub max_rejections: usize,
}

impl SamplerConfig {
    /// Proposal radius: the first circle beyond {V <= mu} on which, along with the next few,
    /// Pi_N(x, x) <= PROPOSAL_CUTOFF * N.
    pub fn for_spectrum(sd: &SpectralData, seed: u64, n_samples: usize) -> Result<Self> {
        let v = sd.potential.build()?;
        let kf = KernelField::new(sd);
        let n = sd.params.n;
        let circle_max = |r: f64| {
            (0..64)
                .map(|i| kf.density(C::from_polar(r, std::f64::consts::TAU * i as f64 / 64.0)))
                .fold(0.0, f64::max)
        };
        let mut r = bounding_radius(&v, sd.mu, 1e3)?;
        while !(1..=3).all(|m| circle_max(r * (1.0 + 0.05 * (m - 1) as f64)) <= PROPOSAL_CUTOFF * n) {
            r *= 1.01;
            if r > 1e3 {
                return Err(Error::DropletNotCompact { r_max: r });
            }
        }
        Ok(Self { seed, n_samples, proposal_radius: r, max_rejections: 1_000_000 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub points: Vec<C>,
    pub seed: u64,
    pub sample_index: u64,
}

/// Per-sample generator: the master seed with the sample index as stream.
pub fn sample_rng(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

/// One configuration of N(mu) points.
///
/// With e_1..e_j an orthonormal basis of span{u(x_1), .., u(x_j)} in C^{N(mu)}, the next point
/// has density ||u(x)||^2 - sum_i |<u(x), e_i>|^2 with respect to gamma, which is at most N.
pub fn sample_dpp(kf: &KernelField, cfg: &SamplerConfig, sample_index: u64) -> Result<PointConfiguration> {
    let rank = kf.rank();
    if rank == 0 {
        return Err(Error::InvalidParameter("no occupied states to sample".into()));
    }
    let n = kf.spectral.params.n;
    let r = cfg.proposal_radius;
    let mut rng = sample_rng(cfg.seed, sample_index);
    let mut frame: Vec<Vec<C>> = Vec::with_capacity(rank);
    let mut points = Vec::with_capacity(rank);
    let (mut basis, mut u) = (Vec::new(), Vec::new());
    for point in 0..rank {
        let mut accepted = None;
        for _ in 0..cfg.max_rejections {
            let rad = r * rng.random::<f64>().sqrt();
            let x = C::from_polar(rad, std::f64::consts::TAU * rng.random::<f64>());
            let ux = rng.random::<f64>();
            kf.eigenfunctions(x, &mut basis, &mut u);
            let mut dens: f64 = u.iter().map(|v| v.norm_sqr()).sum();
            for e in &frame {
                let c: C = u.iter().zip(e).map(|(a, b)| a * b.conj()).sum();
                dens -= c.norm_sqr();
            }
            if ux * n < dens {
                accepted = Some(x);
                break;
            }
        }
        let x = accepted.ok_or(Error::RejectionBudget { point, rate: 1.0 / cfg.max_rejections as f64 })?;
        // Gram-Schmidt u(x) against the frame, twice for stability.
        let mut w = u.clone();
        for _ in 0..2 {
            for e in &frame {
                let c: C = w.iter().zip(e).map(|(a, b)| a * b.conj()).sum();
                for (wi, ei) in w.iter_mut().zip(e) {
                    *wi -= c * ei;
                }
            }
        }
        let norm = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            w.iter_mut().for_each(|v| *v /= norm);
            frame.push(w);
        }
        points.push(x);
    }
    Ok(PointConfiguration { points, seed: cfg.seed, sample_index })
}

/// `cfg.n_samples` independent configurations, in sample-index order.
pub fn sample_many(sd: &SpectralData, cfg: &SamplerConfig) -> Result<Vec<PointConfiguration>> {
    let kf = KernelField::new(sd);
    (0..cfg.n_samples as u64).into_par_iter().map(|i| sample_dpp(&kf, cfg, i)).collect()
}

/// Point clouds as CSV rows (sample_id, re, im).
pub fn points_csv(samples: &[PointConfiguration]) -> String {
    let mut s = String::from("sample_id,re,im\n");
    for c in samples {
        for z in &c.points {
            s.push_str(&format!("{},{:.16e},{:.16e}\n", c.sample_index, z.re, z.im));
        }
    }
    s
}

/// Estimate with its batch-means standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStatistics {
    pub n_samples: usize,
    pub batches: usize,
    pub mean: Estimate,
    pub variance: Estimate,
    pub skewness: Estimate,
    pub kurtosis: Estimate,
    /// log E exp(+-(X - mean)): compares with Upsilon(+-f).
    pub log_mgf_plus: Estimate,
    pub log_mgf_minus: Estimate,
}

pub const BATCHES: usize = 20;

struct Moments {
    mean: f64,
    variance: f64,
    skewness: f64,
    kurtosis: f64,
    lmgf_plus: f64,
    lmgf_minus: f64,
}

fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c = |p: i32| x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let m2 = c(2);
    let variance = m2 * n / (n - 1.0);
    let (skewness, kurtosis) = if m2 > 0.0 { (c(3) / m2.powf(1.5), c(4) / (m2 * m2)) } else { (0.0, 0.0) };
    let lmgf = |s: f64| (x.iter().map(|v| (s * (v - mean)).exp()).sum::<f64>() / n).ln();
    Moments { mean, variance, skewness, kurtosis, lmgf_plus: lmgf(1.0), lmgf_minus: lmgf(-1.0) }
}

/// Moments of X(f) over the samples; standard errors from `BATCHES` contiguous batches.
pub fn empirical_statistics(samples: &[PointConfiguration], f: &dyn ScalarField) -> Result<EmpiricalStatistics> {
    if samples.len() < 2 * BATCHES {
        return Err(Error::InvalidParameter(format!("{} samples; need at least {}", samples.len(), 2 * BATCHES)));
    }
    let x: Vec<f64> = samples.iter().map(|c| c.points.iter().map(|z| f.value(*z)).sum()).collect();
    let all = moments(&x);
    let size = x.len() / BATCHES;
    let per: Vec<Moments> = (0..BATCHES).map(|b| moments(&x[b * size..(b + 1) * size])).collect();
    let est = |value: f64, pick: &dyn Fn(&Moments) -> f64| {
        let vals: Vec<f64> = per.iter().map(pick).collect();
        let m = vals.iter().sum::<f64>() / BATCHES as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
        Estimate { value, se: (var / BATCHES as f64).sqrt() }
    };
    Ok(EmpiricalStatistics {
        n_samples: x.len(),
        batches: BATCHES,
        mean: est(all.mean, &|m| m.mean),
        variance: est(all.variance, &|m| m.variance),
        skewness: est(all.skewness, &|m| m.skewness),
        kurtosis: est(all.kurtosis, &|m| m.kurtosis),
        log_mgf_plus: est(all.lmgf_plus, &|m| m.lmgf_plus),
        log_mgf_minus: est(all.lmgf_minus, &|m| m.lmgf_minus),
    })
}
