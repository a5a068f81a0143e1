use ensgan_core::autodiff::{Activation, Tape};
use ensgan_core::networks::{
    affine_latent, cgan_member, concat_one_hot, conditional_network, equivalent_width,
    gmgan_member, EnsembleModel, MemberParams, Members, MlpSpec, OutputActivation, ParamVector,
    SharingMode,
};
use ensgan_core::tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn random_params(spec: MlpSpec, rng: &mut ChaCha8Rng) -> ParamVector {
    let n = spec.param_count();
    ParamVector::new(spec, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Plain nested-loop MLP over the flat layout `[W_0 (row-major n_in×n_out), b_0, W_1, b_1, ...]`.
fn oracle_forward(
    sizes: &[usize],
    values: &[f64],
    hidden: fn(f64) -> f64,
    z: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    z.iter()
        .map(|row| {
            let mut h = row.clone();
            let mut off = 0;
            for l in 0..sizes.len() - 1 {
                let (n_in, n_out) = (sizes[l], sizes[l + 1]);
                let w = &values[off..off + n_in * n_out];
                let b = &values[off + n_in * n_out..off + n_in * n_out + n_out];
                off += n_in * n_out + n_out;
                let mut next = vec![0.0; n_out];
                for j in 0..n_out {
                    let mut acc = b[j];
                    for i in 0..n_in {
                        acc += h[i] * w[i * n_out + j];
                    }
                    next[j] = if l + 2 < sizes.len() {
                        hidden(acc)
                    } else {
                        acc
                    };
                }
                h = next;
            }
            h
        })
        .collect()
}

#[test]
fn forward_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = MlpSpec::new(vec![2, 16, 2], Activation::Tanh, OutputActivation::None).unwrap();
    let g = ParamVector::init(spec, &mut rng);
    let z: Vec<Vec<f64>> = (0..8)
        .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    let out = g
        .forward(&Tensor::matrix(8, 2, z.concat()).unwrap())
        .unwrap();
    let expect = oracle_forward(&[2, 16, 2], g.values(), f64::tanh, &z);
    for (i, row) in expect.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((out.data()[i * 2 + j] - v).abs() < 1e-14);
        }
    }
}

#[test]
fn trivial_forward_cases() {
    let spec = MlpSpec::default_generator();
    let z = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.0, -3.0, 1.0]).unwrap();
    assert!(ParamVector::zeros(spec)
        .forward(&z)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));

    let linear = MlpSpec::new(vec![2, 2], Activation::Tanh, OutputActivation::None).unwrap();
    let id = ParamVector::new(linear, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!(id.forward(&z).unwrap(), z);

    let sig = ParamVector::zeros(MlpSpec::default_critic(OutputActivation::Sigmoid));
    assert!(sig.forward(&z).unwrap().data().iter().all(|&v| v == 0.5));
    let lin = ParamVector::zeros(MlpSpec::default_critic(OutputActivation::None));
    let out = lin.forward(&z).unwrap();
    assert_eq!(out.shape(), &[3, 1]);
    assert!(out.data().iter().all(|&v| v == 0.0));
    assert!(lin
        .forward(&Tensor::matrix(1, 3, vec![0.0; 3]).unwrap())
        .is_err());
}

#[test]
fn param_count_by_hand() {
    let s = MlpSpec::new(vec![2, 8, 2], Activation::Relu, OutputActivation::None).unwrap();
    assert_eq!(s.param_count(), 42);
    let single = MlpSpec::new(vec![5, 7], Activation::Relu, OutputActivation::None).unwrap();
    assert_eq!(single.param_count(), 5 * 7 + 7);
    assert!(MlpSpec::new(vec![3], Activation::Relu, OutputActivation::None).is_err());
}

#[test]
fn equivalent_width_fits_budget() {
    let g = MlpSpec::default_generator();
    let h = equivalent_width(&g, 2).unwrap().unwrap();
    let member = g.with_hidden_width(h).unwrap();
    let bigger = g.with_hidden_width(h + 1).unwrap();
    assert!(2 * member.param_count() < g.param_count());
    assert!(2 * bigger.param_count() >= g.param_count());
}

#[test]
fn critic_mean_output_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = MlpSpec::new(
        vec![2, 6, 5, 1],
        Activation::Tanh,
        OutputActivation::Sigmoid,
    )
    .unwrap();
    let d = random_params(spec.clone(), &mut rng);
    let x = random_matrix(&mut rng, 7, 2);
    let mean_out = |p: &ParamVector| {
        let out = p.forward(&x).unwrap();
        out.data().iter().sum::<f64>() / out.len() as f64
    };
    let mut tape = Tape::new();
    let bound = d.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let y = bound.forward(&mut tape, xv).unwrap();
    let m = tape.mean(y).unwrap();
    let grad = bound.gradient(&tape.backward(m).unwrap());
    let h = 1e-5;
    for i in 0..d.len() {
        let mut up = d.values().to_vec();
        let mut down = up.clone();
        up[i] += h;
        down[i] -= h;
        let numeric = (mean_out(&ParamVector::new(spec.clone(), up).unwrap())
            - mean_out(&ParamVector::new(spec.clone(), down).unwrap()))
            / (2.0 * h);
        let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        assert!(err < 1e-4, "param {i}: {} vs {numeric}", grad[i]);
    }
}

#[test]
fn cgan_member_equals_concatenated_input_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = 4;
    let g = random_params(
        MlpSpec::new(vec![3, 9, 7, 2], Activation::Tanh, OutputActivation::None).unwrap(),
        &mut rng,
    );
    let d = random_params(
        MlpSpec::new(
            vec![2, 8, 1],
            Activation::LeakyRelu(0.2),
            OutputActivation::Sigmoid,
        )
        .unwrap(),
        &mut rng,
    );
    let bg = random_matrix(&mut rng, 9, k);
    let bd = random_matrix(&mut rng, 8, k);
    let cond_g = conditional_network(&g, &bg).unwrap();
    let cond_d = conditional_network(&d, &bd).unwrap();
    let z = random_matrix(&mut rng, 16, 3);
    let x = random_matrix(&mut rng, 16, 2);
    for c in 0..k {
        let (gk, dk) = cgan_member(&g, &d, &bg, &bd, c).unwrap();
        let labels = vec![c; 16];
        let a = cond_g
            .forward(&concat_one_hot(&z, &labels, k).unwrap())
            .unwrap();
        let b = gk.forward(&z).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(u, v)| (u - v).abs() <= 1e-12));
        let a = cond_d
            .forward(&concat_one_hot(&x, &labels, k).unwrap())
            .unwrap();
        let b = dk.forward(&x).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(u, v)| (u - v).abs() <= 1e-12));

        // first pre-activation is W z + B_{·,k}
        let w = Tensor::matrix(3, 9, g.weight(0).to_vec()).unwrap();
        let pre = ensgan_core::tensor::matmul(&z, &w).unwrap();
        let column: Vec<f64> = (0..9).map(|r| bg.data()[r * k + c]).collect();
        let expect = ensgan_core::tensor::add_bias(&pre, &Tensor::vector(column).unwrap()).unwrap();
        let mut tape = Tape::new();
        let bound = gk.bind(&mut tape, false);
        let (wv, bv) = bound.layer(0);
        let zv = tape.constant(z.clone());
        let p = tape.matmul(zv, wv).unwrap();
        let p = tape.add_bias(p, bv).unwrap();
        assert_eq!(tape.value(p), &expect);
    }
    assert!(cgan_member(&g, &d, &bg, &bd, k).is_err());
}

#[test]
fn cgan_members_differ_only_in_first_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_params(MlpSpec::default_generator(), &mut rng);
    let d = random_params(MlpSpec::default_critic(OutputActivation::None), &mut rng);
    let bg = random_matrix(&mut rng, 32, 3);
    let bd = random_matrix(&mut rng, 32, 3);
    let model = EnsembleModel::new(
        SharingMode::Cgan,
        vec![0.5, 0.25, 0.25],
        Members::Cgan {
            shared: MemberParams {
                generator: g.clone(),
                critic: d.clone(),
            },
            gen_bias: bg,
            critic_bias: bd,
        },
    )
    .unwrap();
    let spec = g.spec();
    let bias = spec.layer_offset(0) + 2 * 32..spec.layer_offset(1);
    for j in 0..3 {
        for k in 0..3 {
            let (a, b) = (model.generator(j).unwrap(), model.generator(k).unwrap());
            for (i, (u, v)) in a.values().iter().zip(b.values()).enumerate() {
                if u != v {
                    assert!(bias.contains(&i), "coordinate {i} differs");
                }
            }
            let (a, b) = (model.critic(j).unwrap(), model.critic(k).unwrap());
            for (i, (u, v)) in a.values().iter().zip(b.values()).enumerate() {
                if u != v {
                    assert!(bias.contains(&i), "critic coordinate {i} differs");
                }
            }
        }
    }

    let zero = Tensor::zeros(vec![32, 3]).unwrap();
    let mut base = g.clone();
    base.bias_mut(0).fill(0.0);
    let (m, _) = cgan_member(&g, &d, &zero, &Tensor::zeros(vec![32, 3]).unwrap(), 1).unwrap();
    assert_eq!(m, base);
}

fn moment_check(w: &Tensor, b: &Tensor, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Tensor::matrix(
        n,
        2,
        (0..2 * n).map(|_| rng.sample(StandardNormal)).collect(),
    )
    .unwrap();
    let x = affine_latent(w, b, &z).unwrap().to_points().unwrap();
    let nf = n as f64;
    let mean = [0, 1].map(|j| x.iter().map(|p| p[j]).sum::<f64>() / nf);
    let wd = w.data();
    let sigma = [[0, 0], [0, 1], [1, 1]]
        .map(|[i, j]| wd[i * 2] * wd[j * 2] + wd[i * 2 + 1] * wd[j * 2 + 1]);
    let s = |i: usize, j: usize| sigma[i + j];
    for (j, m) in mean.iter().enumerate() {
        let se = (s(j, j) / nf).sqrt();
        assert!(
            (m - b.data()[j]).abs() < 3.0 * se,
            "mean {j}: {} vs {}",
            m,
            b.data()[j]
        );
    }
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let cov = x
            .iter()
            .map(|p| (p[i] - mean[i]) * (p[j] - mean[j]))
            .sum::<f64>()
            / (nf - 1.0);
        let se = ((s(i, i) * s(j, j) + s(i, j) * s(i, j)) / nf).sqrt();
        assert!(
            (cov - s(i, j)).abs() < 3.0 * se,
            "cov {i}{j}: {cov} vs {}",
            s(i, j)
        );
    }
}

#[test]
fn gmgan_latent_is_gaussian_with_affine_moments() {
    let w = Tensor::matrix(2, 2, vec![2.0, 0.0, 1.0, 1.0]).unwrap();
    let b = Tensor::vector(vec![1.0, -1.0]).unwrap();
    // W Wᵀ = [[4, 2], [2, 2]]
    let wd = w.data();
    assert_eq!(wd[0] * wd[2] + wd[1] * wd[3], 2.0);
    moment_check(&w, &b, 100_000, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    moment_check(
        &random_matrix(&mut rng, 2, 2),
        &Tensor::vector(vec![0.3, 2.0]).unwrap(),
        100_000,
        2,
    );
}

#[test]
fn gmgan_member_is_affine_map_then_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tail = random_params(MlpSpec::default_generator(), &mut rng);
    let w = random_matrix(&mut rng, 2, 2);
    let b = Tensor::vector(vec![0.5, -0.25]).unwrap();
    let z = random_matrix(&mut rng, 10, 2);
    let member = gmgan_member(&tail, &w, &b).unwrap();
    let direct = tail.forward(&affine_latent(&w, &b, &z).unwrap()).unwrap();
    let via = member.forward(&z).unwrap();
    assert!(direct
        .data()
        .iter()
        .zip(via.data())
        .all(|(u, v)| (u - v).abs() < 1e-12));

    let ident = gmgan_member(
        &tail,
        &Tensor::identity(2).unwrap(),
        &Tensor::zeros(vec![2]).unwrap(),
    )
    .unwrap();
    assert_eq!(ident.forward(&z).unwrap(), tail.forward(&z).unwrap());
    assert!(gmgan_member(&tail, &random_matrix(&mut rng, 3, 3), &b).is_err());
}

#[test]
fn tied_members_are_one_object() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = random_params(MlpSpec::default_generator(), &mut rng);
    let d = random_params(MlpSpec::default_critic(OutputActivation::None), &mut rng);
    let mut model = EnsembleModel::new(
        SharingMode::Tied,
        vec![0.5, 0.5],
        Members::Tied(MemberParams {
            generator: g,
            critic: d,
        }),
    )
    .unwrap();
    if let Members::Tied(p) = model.members_mut() {
        p.generator.values_mut()[0] = 42.0;
    }
    for k in 0..2 {
        assert_eq!(model.generator(k).unwrap().values()[0], 42.0);
    }
    assert_eq!(model.generator(0).unwrap(), model.generator(1).unwrap());
}

#[test]
fn generator_is_lipschitz_under_small_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_params(MlpSpec::default_generator(), &mut rng);
    // product of Frobenius norms bounds the Lipschitz constant of a tanh MLP
    let bound: f64 = (0..3)
        .map(|i| g.weight(i).iter().map(|w| w * w).sum::<f64>().sqrt())
        .product();
    let z = random_matrix(&mut rng, 1, 2);
    let base = g.forward(&z).unwrap();
    for scale in [1e-2, 1e-4, 1e-6, 1e-8] {
        let dz = [
            rng.random_range(-1.0..1.0) * scale,
            rng.random_range(-1.0..1.0) * scale,
        ];
        let moved = Tensor::matrix(1, 2, vec![z.data()[0] + dz[0], z.data()[1] + dz[1]]).unwrap();
        let out = g.forward(&moved).unwrap();
        let gap = (out.data()[0] - base.data()[0]).hypot(out.data()[1] - base.data()[1]);
        assert!(gap <= bound * dz[0].hypot(dz[1]) * (1.0 + 1e-9) + 1e-15);
    }
}

proptest! {
    #[test]
    fn flatten_round_trip(sizes in prop::collection::vec(1usize..6, 2..5), seed in 0u64..1000) {
        let spec = MlpSpec::new(sizes, Activation::Relu, OutputActivation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(spec.clone(), &mut rng);
        let back = ParamVector::from_layers(spec, &p.layers()).unwrap();
        prop_assert_eq!(back, p);
    }
}
