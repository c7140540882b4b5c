//! Shared fixtures for the benchmarks.

use rad_core::synthgen::sample;
use rad_core::{LabeledDataset, MixtureSpec, RngSeed, Stream};

/// `n` samples of the two-dimensional example mixture.
pub fn spurious_2d_data(n: usize, pi0: f64, seed: u64) -> LabeledDataset {
    sample(
        &MixtureSpec::spurious_2d().with_pi0(pi0),
        n,
        RngSeed::new(seed, Stream::Data),
    )
    .expect("valid spec")
}

/// Mixture in `dim` dimensions with isotropic covariance and the class and
/// domain shifts on the first two axes.
pub fn wide_spec(dim: usize, pi0: f64) -> MixtureSpec {
    assert!(dim >= 2);
    let axis = |i: usize, v: f64| {
        let mut e = vec![0.0; dim];
        e[i] = v;
        e
    };
    MixtureSpec {
        delta_c: axis(1, 0.6),
        delta_d: axis(0, 0.8),
        sigma: (0..dim).map(|i| axis(i, 0.1)).collect(),
        pi0,
        mu_anchor: None,
    }
}

pub fn wide_data(n: usize, dim: usize, pi0: f64, seed: u64) -> LabeledDataset {
    sample(&wide_spec(dim, pi0), n, RngSeed::new(seed, Stream::Data)).expect("valid spec")
}
