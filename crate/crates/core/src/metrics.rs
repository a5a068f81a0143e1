//! Sample-quality metrics: Fréchet distance between Gaussian fits, k-NN
//! precision and recall, latent inversion error, and the per-checkpoint
//! report that bundles them with the out-of-support mass.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::autodiff::Tape;
use crate::datasets::DisconnectedDataset;
use crate::error::{Error, Result};
use crate::networks::{EnsembleModel, ParamVector};
use crate::sampling::{out_of_support_mass, resample_dataset, sample_mixture, OosEstimate};
use crate::tensor::Tensor;

/// Ridge added to each covariance before the matrix square root.
pub const COV_RIDGE: f64 = 1e-8;

/// Mean and unbiased covariance of a 2-D cloud.
pub fn gaussian_fit(points: &[[f64; 2]]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    if points.len() < 3 {
        return Err(Error::contract(format!(
            "a Gaussian fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mut mu = [0.0; 2];
    for p in points {
        mu[0] += p[0];
        mu[1] += p[1];
    }
    mu[0] /= n;
    mu[1] /= n;
    let mut cov = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - mu[0], p[1] - mu[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    Ok((mu, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μ₁ − μ₂‖² + Tr(Σ₁ + Σ₂ − 2 (Σ₁ Σ₂)^{1/2})` for Gaussians of any
/// dimension, each covariance ridged by [`COV_RIDGE`].
pub fn frechet_from_moments(
    mu1: &[f64],
    s1: &DMatrix<f64>,
    mu2: &[f64],
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let p = mu1.len();
    if mu2.len() != p || s1.shape() != (p, p) || s2.shape() != (p, p) {
        return Err(Error::shape("frechet", "moment dimensions differ"));
    }
    let ridge = DMatrix::<f64>::identity(p, p) * COV_RIDGE;
    let a = s1 + &ridge;
    let b = s2 + &ridge;
    let a_half = psd_sqrt(&a);
    // Tr (A B)^{1/2} = Tr (A^{1/2} B A^{1/2})^{1/2}
    let inner = &a_half * &b * &a_half;
    let sym = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    let mean_term: f64 = mu1.iter().zip(mu2).map(|(x, y)| (x - y) * (x - y)).sum();
    let d = mean_term + a.trace() + b.trace() - 2.0 * tr_sqrt;
    if !d.is_finite() {
        return Err(Error::NonFinite("frechet"));
    }
    Ok(d.max(0.0))
}

/// Fréchet distance between Gaussian fits of two point clouds.
pub fn frechet_gaussian(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    let (m1, c1) = gaussian_fit(a)?;
    let (m2, c2) = gaussian_fit(b)?;
    let to_mat =
        |c: [[f64; 2]; 2]| DMatrix::from_row_slice(2, 2, &[c[0][0], c[0][1], c[1][0], c[1][1]]);
    frechet_from_moments(&m1, &to_mat(c1), &m2, &to_mat(c2))
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Indices sorted by first coordinate.
fn x_order(points: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    idx
}

/// Squared distance from each point to its `k`-th nearest other point.
pub fn knn_radii_sq(points: &[[f64; 2]], k: usize) -> Result<Vec<f64>> {
    if k == 0 || points.len() <= k {
        return Err(Error::contract(format!(
            "k-NN radii need more than k = {k} points, got {}",
            points.len()
        )));
    }
    let order = x_order(points);
    let mut rank = vec![0; points.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = points[i];
            // k smallest squared distances, ascending
            let mut best: Vec<f64> = Vec::with_capacity(k + 1);
            let push = |best: &mut Vec<f64>, d: f64| {
                if best.len() < k || d < best[k - 1] {
                    let pos = best.partition_point(|&b| b <= d);
                    best.insert(pos, d);
                    best.truncate(k);
                }
            };
            let r = rank[i];
            let (mut lo, mut hi) = (r as isize - 1, r + 1);
            loop {
                let bound = if best.len() == k {
                    best[k - 1]
                } else {
                    f64::INFINITY
                };
                let left = (lo >= 0).then(|| order[lo as usize]);
                let right = (hi < order.len()).then(|| order[hi]);
                let dl = left.map(|j| (p[0] - points[j][0]).powi(2));
                let dr = right.map(|j| (points[j][0] - p[0]).powi(2));
                let go_left = match (dl, dr) {
                    (None, None) => break,
                    (Some(a), Some(b)) => a <= b,
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                };
                let (j, dx2) = if go_left {
                    (left.unwrap(), dl.unwrap())
                } else {
                    (right.unwrap(), dr.unwrap())
                };
                if dx2 > bound {
                    break;
                }
                push(&mut best, sq_dist(p, points[j]));
                if go_left {
                    lo -= 1;
                } else {
                    hi += 1;
                }
            }
            best[k - 1]
        })
        .collect())
}

/// Fraction of `queries` lying within the k-NN ball of some reference
/// point.
fn coverage(reference: &[[f64; 2]], radii_sq: &[f64], queries: &[[f64; 2]]) -> f64 {
    let order = x_order(reference);
    let xs: Vec<f64> = order.iter().map(|&i| reference[i][0]).collect();
    let max_r2 = radii_sq.iter().copied().fold(0.0, f64::max);
    let max_r = max_r2.sqrt();
    let covered = queries
        .par_iter()
        .filter(|q| {
            let start = xs.partition_point(|&x| x < q[0] - max_r - 1e-12);
            for &j in &order[start..] {
                let dx = reference[j][0] - q[0];
                if dx > 0.0 && dx * dx > max_r2 {
                    break;
                }
                if sq_dist(**q, reference[j]) <= radii_sq[j] {
                    return true;
                }
            }
            false
        })
        .count();
    covered as f64 / queries.len() as f64
}

/// Improved k-NN precision (generated points covered by the real
/// manifold estimate) and recall (real points covered by the generated
/// one).
pub fn knn_precision_recall(
    real: &[[f64; 2]],
    generated: &[[f64; 2]],
    k: usize,
) -> Result<(f64, f64)> {
    let real_r = knn_radii_sq(real, k)?;
    let gen_r = knn_radii_sq(generated, k)?;
    Ok((
        coverage(real, &real_r, generated),
        coverage(generated, &gen_r, real),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionSettings {
    pub iters: usize,
    pub restarts: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        InversionSettings {
            iters: 1000,
            restarts: 5,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// Best `‖G(z) − x‖² / p` per target over `restarts` gradient-descent runs
/// from `z ~ N(0, I)`. Run `(t, r)` draws its start from its own stream, so
/// results for a prefix of restarts do not depend on the total.
pub fn inversion_errors(
    g: &ParamVector,
    targets: &[Vec<f64>],
    settings: &InversionSettings,
) -> Result<Vec<f64>> {
    if settings.iters == 0 || settings.restarts == 0 {
        return Err(Error::contract(
            "inversion needs at least one iteration and one restart",
        ));
    }
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let l = g.spec().input_dim();
    let p = g.spec().output_dim();
    if targets.iter().any(|t| t.len() != p) {
        return Err(Error::shape(
            "inversion",
            format!("targets must have {p} coordinates"),
        ));
    }
    let rows = targets.len() * settings.restarts;
    let mut z = Vec::with_capacity(rows * l);
    let mut x = Vec::with_capacity(rows * p);
    for (t, target) in targets.iter().enumerate() {
        for r in 0..settings.restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(((t as u64) << 32) | r as u64);
            z.extend((0..l).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            x.extend_from_slice(target);
        }
    }
    let x = Tensor::matrix(rows, p, x)?;
    let mut best = vec![f64::INFINITY; rows];
    let track = |sq: &[f64], best: &mut [f64]| {
        for (row, b) in best.iter_mut().enumerate() {
            let e: f64 = sq[row * p..(row + 1) * p].iter().sum::<f64>() / p as f64;
            if e < *b {
                *b = e;
            }
        }
    };
    for it in 0..=settings.iters {
        let mut tape = Tape::new();
        let net = g.bind(&mut tape, false);
        let zv = tape.leaf(Tensor::matrix(rows, l, z.clone())?);
        let target = tape.constant(x.clone());
        let out = net.forward(&mut tape, zv)?;
        let diff = tape.sub(out, target)?;
        let sq = tape.mul(diff, diff)?;
        track(tape.value(sq).data(), &mut best);
        if it == settings.iters {
            break;
        }
        let total = tape.sum(sq)?;
        let loss = tape.scale(total, 1.0 / p as f64)?;
        let grads = tape.backward(loss)?;
        let gz = grads.wrt(zv);
        for (zi, gi) in z.iter_mut().zip(gz.data()) {
            *zi -= settings.lr * gi;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inversion"));
        }
    }
    Ok(best
        .chunks_exact(settings.restarts)
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect())
}

/// Mean over targets of the best inversion error.
pub fn inversion_mse(
    g: &ParamVector,
    targets: &[Vec<f64>],
    settings: &InversionSettings,
) -> Result<f64> {
    let errs = inversion_errors(g, targets, settings)?;
    if errs.is_empty() {
        return Err(Error::contract("inversion needs at least one target"));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Ensemble inversion: each target takes its best member.
pub fn ensemble_inversion_mse(
    model: &EnsembleModel,
    targets: &[Vec<f64>],
    settings: &InversionSettings,
) -> Result<f64> {
    let mut best = vec![f64::INFINITY; targets.len()];
    for k in 0..model.k() {
        let errs = inversion_errors(&*model.generator(k)?, targets, settings)?;
        for (b, e) in best.iter_mut().zip(errs) {
            *b = b.min(e);
        }
    }
    if best.is_empty() {
        return Err(Error::contract("inversion needs at least one target"));
    }
    Ok(best.iter().sum::<f64>() / best.len() as f64)
}

/// Metrics for one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub frechet: f64,
    pub precision: f64,
    pub recall: f64,
    pub inversion_mse: f64,
    pub oos: OosEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    /// Generated samples compared against the dataset by Fréchet and k-NN.
    pub metric_samples: usize,
    /// Samples for the out-of-support estimate.
    pub oos_samples: usize,
    /// Out-of-support threshold; `None` means `d / 4`.
    pub threshold: Option<f64>,
    pub k: usize,
    pub inversion_targets: usize,
    pub inversion: InversionSettings,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            metric_samples: 2000,
            oos_samples: 10_000,
            threshold: None,
            k: 3,
            inversion_targets: 100,
            inversion: InversionSettings::default(),
            seed: 0,
        }
    }
}

/// First `n` training points as inversion targets.
fn inversion_targets(dataset: &DisconnectedDataset, n: usize) -> Vec<Vec<f64>> {
    dataset
        .points()
        .iter()
        .take(n)
        .map(|p| p.to_vec())
        .collect()
}

fn reference_points(dataset: &DisconnectedDataset, n: usize) -> &[[f64; 2]] {
    &dataset.points()[..n.min(dataset.len())]
}

/// Evaluates an ensemble (or single model) against its dataset.
pub fn evaluate_model(
    model: &EnsembleModel,
    dataset: &DisconnectedDataset,
    s: &EvalSettings,
) -> Result<MetricReport> {
    let tau = s.threshold.unwrap_or_else(|| dataset.default_threshold());
    let real = reference_points(dataset, s.metric_samples);
    let (generated, _) = sample_mixture(model, s.metric_samples, s.seed)?;
    let (oos_points, _) = sample_mixture(model, s.oos_samples, s.seed.wrapping_add(1))?;
    let (precision, recall) = knn_precision_recall(real, &generated, s.k)?;
    let mut inv = s.inversion;
    inv.seed = s.seed;
    Ok(MetricReport {
        frechet: frechet_gaussian(real, &generated)?,
        precision,
        recall,
        inversion_mse: ensemble_inversion_mse(
            model,
            &inversion_targets(dataset, s.inversion_targets),
            &inv,
        )?,
        oos: out_of_support_mass(&oos_points, dataset, tau)?,
    })
}

/// The dataset evaluated as its own model: the reference set compared
/// with itself, out-of-support mass from a bootstrap resample, and
/// inversion as the nearest-sample error.
pub fn evaluate_resampler(dataset: &DisconnectedDataset, s: &EvalSettings) -> Result<MetricReport> {
    let tau = s.threshold.unwrap_or_else(|| dataset.default_threshold());
    let real = reference_points(dataset, s.metric_samples);
    let (precision, recall) = knn_precision_recall(real, real, s.k)?;
    let targets = inversion_targets(dataset, s.inversion_targets);
    let nearest: f64 = targets
        .iter()
        .map(|t| {
            dataset
                .points()
                .iter()
                .map(|p| sq_dist([t[0], t[1]], *p) / 2.0)
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / targets.len().max(1) as f64;
    Ok(MetricReport {
        frechet: frechet_gaussian(real, real)?,
        precision,
        recall,
        inversion_mse: nearest,
        oos: out_of_support_mass(
            &resample_dataset(dataset, s.oos_samples, s.seed),
            dataset,
            tau,
        )?,
    })
}
