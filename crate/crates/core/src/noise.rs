//! Symmetric domain-label noise and the priors it induces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::synthgen::check_pi0;

/// Each domain label is kept with probability `1 − p` and otherwise replaced
/// by a uniform draw from the other `M − 1` domains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    p: f64,
    num_domains: usize,
}

impl NoiseModel {
    pub fn new(p: f64, num_domains: usize) -> Result<Self> {
        check_p(p)?;
        if num_domains < 2 {
            return Err(Error::InvalidConfig(format!(
                "noise needs at least two domains, got {num_domains}"
            )));
        }
        Ok(Self { p, num_domains })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=0.5).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidNoiseLevel(p))
    }
}

/// Returns a noisy copy of `data`.
///
/// One uniform draw `u_i` is taken per row and the row flips when `u_i < p`,
/// so for a fixed seed the flipped set grows monotonically with `p`. With
/// `M > 2` a second draw picks the replacement domain.
pub fn inject(data: &LabeledDataset, model: NoiseModel, seed: RngSeed) -> Result<LabeledDataset> {
    if model.num_domains != data.num_domains() {
        return Err(Error::ShapeMismatch(format!(
            "noise model has M = {} but the data has M = {}",
            model.num_domains,
            data.num_domains()
        )));
    }
    let m = model.num_domains;
    let mut rng = seed.rng();
    let noisy = data
        .d()
        .iter()
        .map(|&d| {
            let u: f64 = rng.random();
            if u >= model.p {
                return d;
            }
            if m == 2 {
                1 - d
            } else {
                let r = rng.random_range(0..m - 1);
                if r >= d {
                    r + 1
                } else {
                    r
                }
            }
        })
        .collect();
    data.with_domains(noisy)
}

/// Perceived minority prior `(1 − p)π₀ + p(1/2 − π₀)`.
pub fn noisy_minority_prior(pi0: f64, p: f64) -> Result<f64> {
    check_pi0(pi0)?;
    check_p(p)?;
    Ok((1.0 - p) * pi0 + p * (0.5 - pi0))
}

/// True minority prior left after downsampling on noisy domain labels:
/// `(1 − p)π₀ / (4π₀⁽ᵖ⁾) + pπ₀ / (4(1/2 − π₀⁽ᵖ⁾))`.
pub fn ds_effective_prior(pi0: f64, p: f64) -> Result<f64> {
    let noisy = noisy_minority_prior(pi0, p)?;
    if noisy <= 0.0 || noisy >= 0.5 {
        return Err(Error::InvalidPrior(format!(
            "perceived prior {noisy} leaves (0, 1/2)"
        )));
    }
    Ok((1.0 - p) * pi0 / (4.0 * noisy) + p * pi0 / (4.0 * (0.5 - noisy)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::Array2;

    fn balanced(n: usize, m: usize) -> LabeledDataset {
        let d: Vec<usize> = (0..n).map(|i| i % m).collect();
        LabeledDataset::new(Array2::zeros((n, 1)), vec![0; n], d, 1, m).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let data = balanced(1000, 2);
        let out = inject(
            &data,
            NoiseModel::new(0.0, 2).unwrap(),
            RngSeed::new(1, Stream::Noise),
        )
        .unwrap();
        assert_eq!(out.d(), data.d());
        assert_eq!(out.y(), data.y());
        assert_eq!(out.features(), data.features());
    }

    #[test]
    fn flip_rate_is_binomial() {
        let n = 100_000;
        let data = balanced(n, 2);
        let out = inject(
            &data,
            NoiseModel::new(0.2, 2).unwrap(),
            RngSeed::new(2, Stream::Noise),
        )
        .unwrap();
        let flipped = data.d().iter().zip(out.d()).filter(|(a, b)| a != b).count();
        let sd = (0.2 * 0.8 / n as f64).sqrt();
        assert!((flipped as f64 / n as f64 - 0.2).abs() < 3.0 * sd);
    }

    #[test]
    fn half_noise_gives_uniform_marginal() {
        let n = 100_000;
        // all samples in domain 0: after p = 1/2 the marginal is uniform
        let data =
            LabeledDataset::new(Array2::zeros((n, 1)), vec![0; n], vec![0; n], 1, 2).unwrap();
        let out = inject(
            &data,
            NoiseModel::new(0.5, 2).unwrap(),
            RngSeed::new(3, Stream::Noise),
        )
        .unwrap();
        let ones = out.d().iter().filter(|&&d| d == 1).count();
        let sd = (0.25 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn flips_are_nested_in_p() {
        let data = balanced(2000, 2);
        let s = RngSeed::new(4, Stream::Noise);
        let lo = inject(&data, NoiseModel::new(0.1, 2).unwrap(), s).unwrap();
        let hi = inject(&data, NoiseModel::new(0.3, 2).unwrap(), s).unwrap();
        for i in 0..data.n() {
            if lo.d()[i] != data.d()[i] {
                assert_ne!(hi.d()[i], data.d()[i]);
            }
        }
    }

    #[test]
    fn multi_domain_never_keeps_label_on_flip() {
        let data = balanced(3000, 3);
        let out = inject(
            &data,
            NoiseModel::new(0.5, 3).unwrap(),
            RngSeed::new(5, Stream::Noise),
        )
        .unwrap();
        assert!(out.d().iter().all(|&d| d < 3));
        let flipped = data.d().iter().zip(out.d()).filter(|(a, b)| a != b).count();
        assert!(flipped > 1300 && flipped < 1700);
    }

    #[test]
    fn invalid_levels() {
        assert_eq!(
            NoiseModel::new(0.6, 2).unwrap_err().code(),
            "invalid-noise-level"
        );
        assert_eq!(
            NoiseModel::new(-0.1, 2).unwrap_err().code(),
            "invalid-noise-level"
        );
        assert_eq!(
            noisy_minority_prior(0.3, 0.1).unwrap_err().code(),
            "invalid-prior"
        );
        assert_eq!(
            ds_effective_prior(0.1, 0.7).unwrap_err().code(),
            "invalid-noise-level"
        );
    }

    #[test]
    fn prior_endpoints() {
        for pi0 in [0.01, 0.02, 0.1, 0.25] {
            assert_eq!(noisy_minority_prior(pi0, 0.0).unwrap(), pi0);
            assert!((noisy_minority_prior(pi0, 0.5).unwrap() - 0.25).abs() < 1e-15);
            assert!((ds_effective_prior(pi0, 0.0).unwrap() - 0.25).abs() < 1e-15);
            assert!((ds_effective_prior(pi0, 0.5).unwrap() - pi0).abs() < 1e-15);
        }
        assert!((noisy_minority_prior(0.02, 0.2).unwrap() - 0.112).abs() < 1e-15);
    }

    #[test]
    fn ds_prior_worked_value() {
        // π₀⁽ᵖ⁾ = 0.066, so (0.9·0.02)/0.264 + (0.1·0.02)/(4·0.434)
        let expected = 0.018 / 0.264 + 0.002 / 1.736;
        assert!((ds_effective_prior(0.02, 0.1).unwrap() - expected).abs() < 1e-15);
    }
}
