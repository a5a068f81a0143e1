//! Parameter-budget accounting.

use crate::error::Result;

use super::mlp::MlpSpec;

/// Largest hidden width `h` such that `k` members of shape
/// `single.with_hidden_width(h)` have strictly fewer parameters in total
/// than `single`. `None` when even `h = 1` does not fit.
pub fn equivalent_width(single: &MlpSpec, k: usize) -> Result<Option<usize>> {
    let budget = single.param_count();
    let mut best = None;
    let mut h = 1;
    loop {
        let member = single.with_hidden_width(h)?;
        if k * member.param_count() >= budget {
            return Ok(best);
        }
        best = Some(h);
        h += 1;
    }
}

/// Parameter count of the DCGAN generator used by the reference WGAN
/// implementation (transposed convolutions without bias, batch norm with
/// scale and shift, no extra layers).
///
/// ```
/// use ensgan_core::networks::{dcgan_critic_params, dcgan_generator_params};
///
/// assert_eq!(dcgan_generator_params(64, 100, 3, 64), 3_576_704);
/// assert_eq!(dcgan_generator_params(64, 100, 3, 15), 312_004);
/// assert_eq!(10 * dcgan_generator_params(64, 100, 3, 15), 3_120_040);
/// assert_eq!(dcgan_critic_params(64, 3, 64), 2_765_568);
/// assert_eq!(dcgan_critic_params(64, 3, 20), 272_880);
/// ```
pub fn dcgan_generator_params(
    image_size: usize,
    latent: usize,
    channels: usize,
    ngf: usize,
) -> usize {
    let mut width = ngf / 2;
    let mut size = 4;
    while size != image_size {
        width *= 2;
        size *= 2;
    }
    let kernel = 16;
    let mut total = latent * width * kernel + 2 * width;
    let mut size = 4;
    while size < image_size / 2 {
        total += width * (width / 2) * kernel + 2 * (width / 2);
        width /= 2;
        size *= 2;
    }
    total + width * channels * kernel
}

/// Parameter count of the matching DCGAN critic.
pub fn dcgan_critic_params(image_size: usize, channels: usize, ndf: usize) -> usize {
    let kernel = 16;
    let mut total = channels * ndf * kernel;
    let mut width = ndf;
    let mut size = image_size / 2;
    while size > 4 {
        total += width * 2 * width * kernel + 2 * (2 * width);
        width *= 2;
        size /= 2;
    }
    total + width * kernel
}
