use ensgan_core::autodiff::Activation;
use ensgan_core::datasets::{ComponentSpec, DisconnectedDataset};
use ensgan_core::metrics::frechet_gaussian;
use ensgan_core::networks::{
    EnsembleModel, MemberParams, Members, MlpSpec, OutputActivation, ParamVector, SharingMode,
};
use ensgan_core::objectives::{evaluate, Batch, Player, ValueKind};
use ensgan_core::optim::{Direction, Optimizer, OptimizerKind};
use ensgan_core::sampling::{out_of_support_mass, sample_generator};
use ensgan_core::tensor::Tensor;
use ensgan_core::training::{
    member_rng, train_cgan, train_ensemble, train_hybrid, train_single, train_tied, Session,
    TrainConfig,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn small_gen() -> MlpSpec {
    MlpSpec::new(vec![2, 8, 2], Activation::Tanh, OutputActivation::None).unwrap()
}

fn small_critic() -> MlpSpec {
    MlpSpec::new(
        vec![2, 8, 1],
        Activation::LeakyRelu(0.2),
        OutputActivation::None,
    )
    .unwrap()
}

fn short(mode: SharingMode, epochs: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::wasserstein(mode, epochs, seed);
    cfg.batch_size = 16;
    cfg.eval_interval = 1;
    cfg
}

#[test]
fn zero_lambda_hybrid_reproduces_independent_trajectory() {
    let ds = DisconnectedDataset::ring_of_disks(3, 4.0, 1.0, 300, 2).unwrap();
    let ind = train_ensemble(
        &short(SharingMode::Independent, 10, 5),
        &small_gen(),
        &small_critic(),
        &ds,
    )
    .unwrap();
    let hyb = train_hybrid(
        &short(SharingMode::L1 { lambda: 0.0 }, 10, 5),
        &small_gen(),
        &small_critic(),
        &ds,
    )
    .unwrap();
    assert_eq!(ind.checkpoints.len(), 10);
    for (a, b) in ind.checkpoints.iter().zip(&hyb.checkpoints) {
        assert_eq!(a.epoch, b.epoch);
        assert_eq!(a.model.members(), b.model.members());
    }
    for (a, b) in ind.history.iter().zip(&hyb.history) {
        assert_eq!(a.loss_value.to_bits(), b.loss_value.to_bits());
    }
}

#[test]
fn members_do_not_depend_on_each_other() {
    let ds = DisconnectedDataset::ring_of_disks(3, 4.0, 1.0, 300, 2).unwrap();
    let cfg = short(SharingMode::Independent, 5, 9);
    let ens = train_ensemble(&cfg, &small_gen(), &small_critic(), &ds).unwrap();
    for k in (0..3).rev() {
        let alone = Session::single(&cfg, &small_gen(), &small_critic(), ds.class_points(k), k)
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(
            *alone.model.generator(0).unwrap(),
            *ens.model.generator(k).unwrap()
        );
        assert_eq!(
            *alone.model.critic(0).unwrap(),
            *ens.model.critic(k).unwrap()
        );
    }
}

#[test]
fn one_member_modes_reduce_to_single() {
    let ds = DisconnectedDataset::build(
        vec![ComponentSpec::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        }],
        vec![1.0],
        200,
        4,
    )
    .unwrap();
    let single = train_single(
        &short(SharingMode::Independent, 6, 3),
        &small_gen(),
        &small_critic(),
        &ds,
    )
    .unwrap();
    let ens = train_ensemble(
        &short(SharingMode::Independent, 6, 3),
        &small_gen(),
        &small_critic(),
        &ds,
    )
    .unwrap();
    let tied = train_tied(
        &short(SharingMode::Tied, 6, 3),
        &small_gen(),
        &small_critic(),
        &ds,
    )
    .unwrap();
    for other in [&ens, &tied] {
        assert_eq!(
            *other.model.generator(0).unwrap(),
            *single.model.generator(0).unwrap()
        );
        assert_eq!(
            *other.model.critic(0).unwrap(),
            *single.model.critic(0).unwrap()
        );
    }
}

fn latent(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..2 * n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Steps a tied pair and a single pair side by side. The single pair sees
/// the concatenation of the equal-size class batches, so its gradient is
/// `1/K` of the tied one.
#[test]
fn tied_gradient_is_k_times_pooled_single_gradient() {
    let ds = DisconnectedDataset::ring_of_disks(3, 4.0, 1.0, 600, 1).unwrap();
    let k = ds.k();
    let n = 20;
    let mut rng = member_rng(3, 0);
    let pair = MemberParams {
        generator: ParamVector::init(small_gen(), &mut rng),
        critic: ParamVector::init(small_critic(), &mut rng),
    };
    let mut tied = EnsembleModel::new(
        SharingMode::Tied,
        vec![1.0 / 3.0; 3],
        Members::Tied(pair.clone()),
    )
    .unwrap();
    let mut single = EnsembleModel::single(pair.generator, pair.critic);
    let kind = ValueKind::wasserstein();
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 1e-2);
    for step in 0..10 {
        let mut per_class = Vec::new();
        let mut pooled_real = Vec::new();
        let mut pooled_latent = Vec::new();
        for c in 0..k {
            let pts = ds.class_points(c);
            let real: Vec<f64> = (0..n)
                .flat_map(|_| pts[rng.random_range(0..pts.len())])
                .collect();
            let z = latent(&mut rng, n);
            pooled_real.extend_from_slice(&real);
            pooled_latent.extend_from_slice(&z);
            per_class.push(Batch {
                real: Tensor::matrix(n, 2, real).unwrap(),
                latent: Tensor::matrix(n, 2, z).unwrap(),
            });
        }
        let pooled = vec![Batch {
            real: Tensor::matrix(k * n, 2, pooled_real).unwrap(),
            latent: Tensor::matrix(k * n, 2, pooled_latent).unwrap(),
        }];
        for player in [Player::Critic, Player::Generator] {
            let t = evaluate(&tied, kind, &per_class, player).unwrap();
            let s = evaluate(&single, kind, &pooled, player).unwrap();
            for (a, b) in t.grads[0].iter().zip(&s.grads[0]) {
                assert!(
                    (a - k as f64 * b).abs() <= 1e-12,
                    "step {step}: {a} vs {}",
                    k as f64 * b
                );
            }
            let dir = if player == Player::Critic {
                Direction::Ascent
            } else {
                Direction::Descent
            };
            let mut params = match player {
                Player::Critic => tied.critic(0).unwrap().values().to_vec(),
                Player::Generator => tied.generator(0).unwrap().values().to_vec(),
            };
            opt.step(0, &mut params, &t.grads[0], dir).unwrap();
            let Members::Tied(p) = tied.members_mut() else {
                unreachable!()
            };
            let net = if player == Player::Critic {
                &mut p.critic
            } else {
                &mut p.generator
            };
            net.values_mut().copy_from_slice(&params);
            let Members::Free(sp) = single.members_mut() else {
                unreachable!()
            };
            let net = if player == Player::Critic {
                &mut sp[0].critic
            } else {
                &mut sp[0].generator
            };
            net.values_mut().copy_from_slice(&params);
        }
    }
}

#[test]
fn runs_are_bit_identical() {
    let ds = DisconnectedDataset::two_blobs(400, 3).unwrap();
    for mode in [
        SharingMode::L1 { lambda: 0.01 },
        SharingMode::Cgan,
        SharingMode::Gmgan,
        SharingMode::Independent,
    ] {
        let cfg = short(mode, 8, 21);
        let a = ensgan_core::training::train(&cfg, &small_gen(), &small_critic(), &ds).unwrap();
        let b = ensgan_core::training::train(&cfg, &small_gen(), &small_critic(), &ds).unwrap();
        assert_eq!(a.history, b.history);
        let (ta, tb) = (
            a.checkpoints.last().unwrap().to_text(),
            b.checkpoints.last().unwrap().to_text(),
        );
        assert_eq!(ta, tb);
    }
}

#[test]
fn critics_stay_inside_the_clip_box() {
    let ds = DisconnectedDataset::two_blobs(400, 3).unwrap();
    for mode in [
        SharingMode::Tied,
        SharingMode::Cgan,
        SharingMode::L1 { lambda: 1.0 },
    ] {
        let out =
            ensgan_core::training::train(&short(mode, 5, 2), &small_gen(), &small_critic(), &ds)
                .unwrap();
        for ck in &out.checkpoints {
            for k in 0..ds.k() {
                assert!(ck
                    .model
                    .critic(k)
                    .unwrap()
                    .values()
                    .iter()
                    .all(|v| v.abs() <= 0.01));
            }
        }
    }
}

#[test]
fn cgan_zero_bias_step_matches_tied_on_shared_params() {
    let ds = DisconnectedDataset::two_blobs(400, 3).unwrap();
    let mut rng = member_rng(5, 0);
    let mut g = ParamVector::init(small_gen(), &mut rng);
    let mut d = ParamVector::init(small_critic(), &mut rng);
    g.bias_mut(0).fill(0.0);
    d.bias_mut(0).fill(0.0);
    let cgan = EnsembleModel::new(
        SharingMode::Cgan,
        vec![0.5, 0.5],
        Members::Cgan {
            shared: MemberParams {
                generator: g.clone(),
                critic: d.clone(),
            },
            gen_bias: Tensor::zeros(vec![8, 2]).unwrap(),
            critic_bias: Tensor::zeros(vec![8, 2]).unwrap(),
        },
    )
    .unwrap();
    let tied = EnsembleModel::new(
        SharingMode::Tied,
        vec![0.5, 0.5],
        Members::Tied(MemberParams {
            generator: g,
            critic: d,
        }),
    )
    .unwrap();
    let batch = |c: usize, seed: u64| {
        let mut r = member_rng(seed, c);
        let pts = ds.class_points(c);
        Batch {
            real: Tensor::matrix(
                12,
                2,
                (0..12)
                    .flat_map(|_| pts[r.random_range(0..pts.len())])
                    .collect(),
            )
            .unwrap(),
            latent: Tensor::matrix(12, 2, latent(&mut r, 12)).unwrap(),
        }
    };
    let b = vec![batch(0, 1), batch(1, 1)];
    for player in [Player::Generator, Player::Critic] {
        let c = evaluate(&cgan, ValueKind::wasserstein(), &b, player).unwrap();
        let t = evaluate(&tied, ValueKind::wasserstein(), &b, player).unwrap();
        let first_bias = 2 * 8..3 * 8;
        for (i, (x, y)) in c.grads[0].iter().zip(&t.grads[0]).enumerate() {
            if !first_bias.contains(&i) {
                assert!((x - y).abs() < 1e-14, "{player:?} {i}");
            }
        }
        // bias column c only hears from batch c
        let moved = vec![b[0].clone(), batch(1, 2)];
        let m = evaluate(&cgan, ValueKind::wasserstein(), &moved, player).unwrap();
        for r in 0..8 {
            assert_eq!(c.grads[1][r * 2], m.grads[1][r * 2]);
        }
        assert!((0..8).any(|r| c.grads[1][r * 2 + 1] != m.grads[1][r * 2 + 1]));
        // first-bias gradient of the tied net is the column sum
        for r in 0..8 {
            let sum = c.grads[1][r * 2] + c.grads[1][r * 2 + 1];
            assert!((sum - t.grads[0][16 + r]).abs() < 1e-14);
        }
    }
}

#[test]
fn cgan_class_means_separate() {
    let ds = DisconnectedDataset::two_blobs(2000, 1).unwrap();
    let cfg = TrainConfig::wasserstein(SharingMode::Cgan, 1500, 1);
    let out = train_cgan(
        &cfg,
        &MlpSpec::default_generator(),
        &MlpSpec::default_critic(OutputActivation::None),
        &ds,
    )
    .unwrap();
    let mean_x = |k: usize| {
        let pts = sample_generator(&out.model.generator(k).unwrap(), 4000, 7).unwrap();
        pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64
    };
    let (m0, m1) = (mean_x(0), mean_x(1));
    assert!(m0 < -1.0 && m1 > 1.0, "class means {m0} {m1}");
}

#[test]
fn ensemble_members_stay_near_their_own_component() {
    let ds = DisconnectedDataset::two_blobs(2000, 7).unwrap();
    let cfg = TrainConfig::wasserstein(SharingMode::Independent, 2000, 7);
    let out = train_ensemble(
        &cfg,
        &MlpSpec::default_generator(),
        &MlpSpec::default_critic(OutputActivation::None),
        &ds,
    )
    .unwrap();
    for k in 0..2 {
        let own = DisconnectedDataset::build(
            vec![ds.components()[k], ds.components()[1 - k]],
            vec![1.0, 0.0],
            10,
            1,
        )
        .unwrap();
        let pts = sample_generator(&out.model.generator(k).unwrap(), 10_000, 3).unwrap();
        let off: usize = pts
            .iter()
            .filter(|p| own.components()[0].distance(**p) > 1.0)
            .count();
        assert!((off as f64) / 10_000.0 < 0.05, "member {k}: {off}");
        assert!(out_of_support_mass(&pts, &ds, 1.0).unwrap().mass < 0.05);
    }
}

#[test]
fn single_blob_is_fitted() {
    let ds = DisconnectedDataset::build(
        vec![ComponentSpec::Disk {
            center: [1.0, -0.5],
            radius: 1.0,
        }],
        vec![1.0],
        2000,
        4,
    )
    .unwrap();
    let cfg = TrainConfig::wasserstein(SharingMode::Independent, 500, 4);
    let out = train_single(
        &cfg,
        &MlpSpec::default_generator(),
        &MlpSpec::default_critic(OutputActivation::None),
        &ds,
    )
    .unwrap();
    let pts = sample_generator(&out.model.generator(0).unwrap(), 5000, 8).unwrap();
    let f = frechet_gaussian(&pts, ds.points()).unwrap();
    assert!(f < 0.05, "frechet {f}");
}

#[test]
fn history_and_checkpoint_schedule() {
    let ds = DisconnectedDataset::two_blobs(400, 3).unwrap();
    let mut cfg = short(SharingMode::L1 { lambda: 0.1 }, 7, 2);
    cfg.eval_interval = 3;
    let out = train_hybrid(&cfg, &small_gen(), &small_critic(), &ds).unwrap();
    let epochs: Vec<usize> = out.checkpoints.iter().map(|c| c.epoch).collect();
    assert_eq!(epochs, vec![3, 6, 7]);
    assert_eq!(out.history.len(), 3 * 2);
    for row in &out.history {
        let ck = out
            .checkpoints
            .iter()
            .find(|c| c.epoch == row.epoch)
            .unwrap();
        assert_eq!(row.coupling_value, ck.model.generator_coupling().unwrap());
    }
}
