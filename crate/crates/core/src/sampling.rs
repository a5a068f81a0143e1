//! Mixture sampling, latent truncation by rejection and the out-of-support
//! mass estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datasets::{sample_categorical, DisconnectedDataset};
use crate::error::{Error, Result};
use crate::networks::{EnsembleModel, ParamVector};
use crate::tensor::Tensor;

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

const CHUNK: usize = 4096;

fn latent_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, l: usize) -> Result<Tensor> {
    Tensor::matrix(
        n,
        l,
        (0..n * l)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn check_points(g: &ParamVector) -> Result<()> {
    if g.spec().output_dim() != 2 {
        return Err(Error::contract(format!(
            "generator emits {} coordinates, points are 2-D",
            g.spec().output_dim()
        )));
    }
    Ok(())
}

/// `n` draws of a single generator.
pub fn sample_generator(g: &ParamVector, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    check_points(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut left = n;
    while left > 0 {
        let m = left.min(CHUNK);
        let z = latent_batch(&mut rng, m, g.spec().input_dim())?;
        out.extend(g.forward(&z)?.to_points()?);
        left -= m;
    }
    Ok(out)
}

/// `n` draws from `Σ π_k P_{G_k}`: a member label `k ~ Cat(π)`, then
/// `G_k(z)` with `z ~ N(0, I)`. Returns points and labels.
pub fn sample_mixture(
    model: &EnsembleModel,
    n: usize,
    seed: u64,
) -> Result<(Vec<[f64; 2]>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = model.latent_dim();
    let mut labels = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n * l);
    for _ in 0..n {
        labels.push(sample_categorical(model.weights(), &mut rng));
        latents.extend((0..l).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    let mut points = vec![[0.0; 2]; n];
    for k in 0..model.k() {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        if idx.is_empty() {
            continue;
        }
        let g = model.generator(k)?;
        check_points(&g)?;
        let z = idx
            .iter()
            .flat_map(|&i| latents[i * l..(i + 1) * l].iter().copied())
            .collect();
        let out = g.forward(&Tensor::matrix(idx.len(), l, z)?)?.to_points()?;
        for (&i, p) in idx.iter().zip(out) {
            points[i] = p;
        }
    }
    Ok((points, labels))
}

/// `n` points drawn uniformly with replacement from the dataset.
pub fn resample_dataset(dataset: &DisconnectedDataset, n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = dataset.points();
    (0..n)
        .map(|_| pts[rng.random_range(0..pts.len())])
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSample {
    pub points: Vec<[f64; 2]>,
    pub latents: Vec<Vec<f64>>,
    /// Latent draws examined until the target was reached.
    pub draws: usize,
    pub acceptance_rate: f64,
}

/// Rejection sampler for the latent prior restricted to `G⁻¹` of the
/// `tol`-fattened support: accepts `z` iff `G(z)` lies within `tol` of it.
pub fn truncated_sample(
    g: &ParamVector,
    dataset: &DisconnectedDataset,
    n_target: usize,
    tol: f64,
    max_draws: usize,
    seed: u64,
) -> Result<TruncatedSample> {
    check_points(g)?;
    if !(tol > 0.0 && tol <= dataset.default_threshold()) {
        return Err(Error::contract(format!(
            "tolerance must lie in (0, d/4] = (0, {}], got {tol}",
            dataset.default_threshold()
        )));
    }
    let l = g.spec().input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_target);
    let mut latents = Vec::with_capacity(n_target);
    let mut draws = 0;
    while points.len() < n_target && draws < max_draws {
        let m = (max_draws - draws).min(CHUNK);
        let z = latent_batch(&mut rng, m, l)?;
        let x = g.forward(&z)?.to_points()?;
        for (i, p) in x.into_iter().enumerate() {
            draws += 1;
            if dataset.distance_to_support(p).0 <= tol {
                points.push(p);
                latents.push(z.row(i).to_vec());
                if points.len() == n_target {
                    break;
                }
            }
        }
    }
    if points.len() < n_target {
        return Err(Error::Shortfall {
            found: points.len(),
            target: n_target,
            draws,
            accepted: points,
        });
    }
    Ok(TruncatedSample {
        acceptance_rate: n_target as f64 / draws as f64,
        points,
        latents,
        draws,
    })
}

/// Fraction of samples farther than a threshold from the support, with a
/// 99% Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OosEstimate {
    pub mass: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl OosEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Wilson score interval for `successes / n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let spread = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - spread).max(0.0), (center + spread).min(1.0))
}

/// Minimum sample count for the out-of-support estimator.
pub const MIN_OOS_SAMPLES: usize = 1000;

pub fn out_of_support_mass(
    points: &[[f64; 2]],
    dataset: &DisconnectedDataset,
    tau: f64,
) -> Result<OosEstimate> {
    if !(tau > 0.0 && tau < dataset.separation() / 2.0) {
        return Err(Error::contract(format!(
            "threshold must lie in (0, d/2) = (0, {}), got {tau}",
            dataset.separation() / 2.0
        )));
    }
    if points.len() < MIN_OOS_SAMPLES {
        return Err(Error::contract(format!(
            "out-of-support mass needs at least {MIN_OOS_SAMPLES} samples, got {}",
            points.len()
        )));
    }
    let outside = points
        .iter()
        .filter(|&&p| dataset.distance_to_support(p).0 > tau)
        .count();
    let (lower, upper) = wilson_interval(outside, points.len(), Z99);
    Ok(OosEstimate {
        mass: outside as f64 / points.len() as f64,
        lower,
        upper,
        n: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use crate::networks::{MemberParams, Members, MlpSpec, OutputActivation, SharingMode};

    fn constant_generator(x: f64, y: f64) -> ParamVector {
        let spec = MlpSpec::new(vec![2, 2], Activation::Tanh, OutputActivation::None).unwrap();
        ParamVector::new(spec, vec![0.0, 0.0, 0.0, 0.0, x, y]).unwrap()
    }

    fn two_member(weights: Vec<f64>) -> EnsembleModel {
        let critic = ParamVector::zeros(
            MlpSpec::new(vec![2, 1], Activation::Tanh, OutputActivation::None).unwrap(),
        );
        let pairs = vec![
            MemberParams {
                generator: constant_generator(-3.0, 0.0),
                critic: critic.clone(),
            },
            MemberParams {
                generator: constant_generator(3.0, 0.0),
                critic,
            },
        ];
        EnsembleModel::new(SharingMode::Independent, weights, Members::Free(pairs)).unwrap()
    }

    #[test]
    fn degenerate_weights_pick_one_member() {
        let (pts, labels) = sample_mixture(&two_member(vec![1.0, 0.0]), 500, 1).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        assert!(pts.iter().all(|p| *p == [-3.0, 0.0]));
    }

    #[test]
    fn label_frequency_binomial() {
        let n = 10_000;
        let (_, labels) = sample_mixture(&two_member(vec![0.75, 0.25]), n, 2).unwrap();
        let f = labels.iter().filter(|&&l| l == 0).count() as f64 / n as f64;
        assert!((f - 0.75).abs() < 3.0 * (0.75f64 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn truncation_of_in_support_and_gap_generators() {
        let ds = DisconnectedDataset::two_blobs(100, 1).unwrap();
        let inside =
            truncated_sample(&constant_generator(-3.0, 0.0), &ds, 50, 1.0, 1000, 3).unwrap();
        assert_eq!(inside.acceptance_rate, 1.0);
        match truncated_sample(&constant_generator(0.0, 0.0), &ds, 50, 1.0, 1000, 3) {
            Err(Error::Shortfall {
                found: 0,
                draws: 1000,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(truncated_sample(&constant_generator(0.0, 0.0), &ds, 5, 1.5, 10, 3).is_err());
    }

    #[test]
    fn oos_mass_extremes() {
        let ds = DisconnectedDataset::two_blobs(2000, 1).unwrap();
        let resampled = resample_dataset(&ds, 5000, 2);
        let est = out_of_support_mass(&resampled, &ds, 1.0).unwrap();
        assert_eq!(est.mass, 0.0);
        assert_eq!(est.lower, 0.0);
        assert!(est.upper > 0.0 && est.upper < 2e-3);
        let gap = vec![[0.0, 0.0]; 1000];
        let est = out_of_support_mass(&gap, &ds, 1.0).unwrap();
        assert_eq!(est.mass, 1.0);
        assert!(est.lower > 0.99);
        assert!(out_of_support_mass(&gap, &ds, 2.0).is_err());
        assert!(out_of_support_mass(&gap[..10], &ds, 1.0).is_err());
    }

    #[test]
    fn wilson_reference_value() {
        // 10/100 at z = 1.96: (0.0552, 0.1744)
        let (lo, hi) = wilson_interval(10, 100, 1.959_963_984_540_054);
        assert!((lo - 0.05522).abs() < 1e-4, "{lo}");
        assert!((hi - 0.17437).abs() < 1e-4, "{hi}");
    }
}
