//! Structural views of ensemble members: the conditional-GAN view (members
//! share everything except the first-layer bias) and the Gaussian-mixture
//! view (members share everything except the first generator layer).

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

use super::mlp::{MlpSpec, ParamVector};

fn bias_column(bias: &Tensor, k: usize, width: usize) -> Result<Vec<f64>> {
    let (rows, cols) = bias.dims2()?;
    if rows != width {
        return Err(Error::shape(
            "cgan_member",
            format!("bias matrix has {rows} rows, first layer has width {width}"),
        ));
    }
    if k >= cols {
        return Err(Error::contract(format!(
            "member {k} out of range for {cols} bias columns"
        )));
    }
    Ok((0..rows).map(|r| bias.data()[r * cols + k]).collect())
}

fn with_first_bias(shared: &ParamVector, bias: &Tensor, k: usize) -> Result<ParamVector> {
    let width = shared.spec().layer_dims(0).1;
    let column = bias_column(bias, k, width)?;
    let mut member = shared.clone();
    member.bias_mut(0).copy_from_slice(&column);
    Ok(member)
}

/// Member `k` of a cGAN-constrained ensemble: the shared networks with their
/// first-layer biases replaced by column `k` of `gen_bias` / `critic_bias`
/// (each of shape `width × K`).
pub fn cgan_member(
    shared_gen: &ParamVector,
    shared_critic: &ParamVector,
    gen_bias: &Tensor,
    critic_bias: &Tensor,
    k: usize,
) -> Result<(ParamVector, ParamVector)> {
    Ok((
        with_first_bias(shared_gen, gen_bias, k)?,
        with_first_bias(shared_critic, critic_bias, k)?,
    ))
}

/// The classical conditional network: input `[x; y]` with a one-hot `y`,
/// first-layer weight `[W; Bᵀ]` and no separate first-layer bias.
pub fn conditional_network(shared: &ParamVector, bias: &Tensor) -> Result<ParamVector> {
    let spec = shared.spec();
    let (n_in, width) = spec.layer_dims(0);
    let (rows, classes) = bias.dims2()?;
    if rows != width {
        return Err(Error::shape(
            "conditional_network",
            format!("bias matrix has {rows} rows, first layer has width {width}"),
        ));
    }
    let mut sizes = spec.layer_sizes().to_vec();
    sizes[0] = n_in + classes;
    let mut cond_spec = MlpSpec::new(sizes, spec.hidden(), spec.output())?;
    if spec.affine_input() {
        cond_spec = cond_spec.with_affine_input();
    }

    let mut values = Vec::with_capacity(cond_spec.param_count());
    values.extend_from_slice(shared.weight(0));
    values.extend_from_slice(bias.transpose()?.data());
    values.extend(std::iter::repeat_n(0.0, width));
    values.extend_from_slice(&shared.values()[spec.layer_offset(1)..]);
    ParamVector::new(cond_spec, values)
}

/// `[x, onehot(label)]` rows.
pub fn concat_one_hot(x: &Tensor, labels: &[usize], classes: usize) -> Result<Tensor> {
    let (m, w) = x.dims2()?;
    if labels.len() != m {
        return Err(Error::shape(
            "concat_one_hot",
            format!("{m} rows, {} labels", labels.len()),
        ));
    }
    let mut data = Vec::with_capacity(m * (w + classes));
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::contract(format!("label {label} ≥ {classes}")));
        }
        data.extend_from_slice(x.row(i));
        data.extend((0..classes).map(|c| if c == label { 1.0 } else { 0.0 }));
    }
    Tensor::matrix(m, w + classes, data)
}

/// `z ↦ W z + b` applied to each row of `z`.
pub fn affine_latent(w: &Tensor, b: &Tensor, z: &Tensor) -> Result<Tensor> {
    let (r, c) = w.dims2()?;
    if r != c || b.shape() != [r] {
        return Err(Error::shape(
            "affine_latent",
            format!("weight {:?}, bias {:?}", w.shape(), b.shape()),
        ));
    }
    tensor::add_bias(&tensor::matmul(z, &w.transpose()?)?, b)
}

/// Generator of member `k` in a GM-GAN-constrained ensemble: the affine map
/// `(W_k, b_k)` on the latent followed by the shared tail.
pub fn gmgan_member(tail: &ParamVector, w_k: &Tensor, b_k: &Tensor) -> Result<ParamVector> {
    let latent = tail.spec().input_dim();
    if w_k.shape() != [latent, latent] || b_k.shape() != [latent] {
        return Err(Error::shape(
            "gmgan_member",
            format!(
                "latent size {latent}, got W {:?} and b {:?}",
                w_k.shape(),
                b_k.shape()
            ),
        ));
    }
    let spec = tail.spec();
    let mut sizes = vec![latent];
    sizes.extend_from_slice(spec.layer_sizes());
    let member_spec = MlpSpec::new(sizes, spec.hidden(), spec.output())?.with_affine_input();
    let mut values = Vec::with_capacity(member_spec.param_count());
    values.extend_from_slice(w_k.transpose()?.data());
    values.extend_from_slice(b_k.data());
    values.extend_from_slice(tail.values());
    ParamVector::new(member_spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::OutputActivation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        use rand::Rng;
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_bias_matrix_leaves_shared_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = ParamVector::init(MlpSpec::default_generator(), &mut rng);
        g.bias_mut(0).fill(0.0);
        let d = ParamVector::init(MlpSpec::default_critic(OutputActivation::None), &mut rng);
        let mut d0 = d.clone();
        d0.bias_mut(0).fill(0.0);
        let bg = Tensor::zeros(vec![32, 3]).unwrap();
        let bd = Tensor::zeros(vec![32, 3]).unwrap();
        let (gk, dk) = cgan_member(&g, &d, &bg, &bd, 2).unwrap();
        assert_eq!(gk, g);
        assert_eq!(dk, d0);
        assert!(cgan_member(&g, &d, &bg, &bd, 3).is_err());
    }

    #[test]
    fn first_preactivation_is_wz_plus_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ParamVector::init(MlpSpec::default_generator(), &mut rng);
        let d = ParamVector::init(MlpSpec::default_critic(OutputActivation::None), &mut rng);
        let bg = rand_tensor(&mut rng, vec![32, 2]);
        let bd = rand_tensor(&mut rng, vec![32, 2]);
        let z = rand_tensor(&mut rng, vec![5, 2]);
        let (gk, _) = cgan_member(&g, &d, &bg, &bd, 1).unwrap();
        let w = Tensor::matrix(2, 32, g.weight(0).to_vec()).unwrap();
        let wz = tensor::matmul(&z, &w).unwrap();
        let col: Vec<f64> = (0..32).map(|r| bg.data()[r * 2 + 1]).collect();
        let expect = tensor::add_bias(&wz, &Tensor::vector(col).unwrap()).unwrap();
        let b = Tensor::vector(gk.bias(0).to_vec()).unwrap();
        assert_eq!(tensor::add_bias(&wz, &b).unwrap(), expect);
    }

    #[test]
    fn identity_latent_map_is_the_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tail = ParamVector::init(MlpSpec::default_generator(), &mut rng);
        let member = gmgan_member(
            &tail,
            &Tensor::identity(2).unwrap(),
            &Tensor::zeros(vec![2]).unwrap(),
        )
        .unwrap();
        let z = rand_tensor(&mut rng, vec![6, 2]);
        assert_eq!(member.forward(&z).unwrap(), tail.forward(&z).unwrap());
        assert!(gmgan_member(
            &tail,
            &Tensor::identity(3).unwrap(),
            &Tensor::zeros(vec![3]).unwrap()
        )
        .is_err());
    }

    #[test]
    fn gmgan_first_layer_matches_affine_latent() {
        let w = Tensor::matrix(2, 2, vec![2.0, 0.0, 1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![1.0, -1.0]).unwrap();
        let z = Tensor::matrix(1, 2, vec![0.5, 2.0]).unwrap();
        // W z + b = (2·0.5 + 1, 0.5 + 2 − 1)
        assert_eq!(affine_latent(&w, &b, &z).unwrap().data(), &[2.0, 1.5]);
    }
}
