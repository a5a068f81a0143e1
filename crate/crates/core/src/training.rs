//! Alternating min-max training for every sharing mode.
//!
//! One epoch is `n_critic` critic ascent steps followed by one generator
//! descent step. Member `k` draws its initialization and batches from
//! ChaCha stream `k` of the configured seed, so an independently trained
//! member and the same member inside a joint session see identical random
//! numbers.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::autodiff::clamp_params;
use crate::datasets::{mle_mixture_weights, DisconnectedDataset};
use crate::error::{Error, Result};
use crate::networks::{
    Checkpoint, EnsembleModel, MemberParams, Members, MlpSpec, ParamVector, SharingMode,
};
use crate::objectives::{evaluate, Batch, Player, ValueKind};
use crate::optim::{Direction, Optimizer, OptimizerKind};
use crate::tensor::Tensor;

/// Losses above this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: SharingMode,
    pub value: ValueKind,
    /// Generator updates.
    pub epochs: usize,
    pub batch_size: usize,
    pub n_critic: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Epochs between history rows and checkpoints; the last epoch is
    /// always recorded.
    pub eval_interval: usize,
}

impl TrainConfig {
    /// RMSProp(0.99), lr 5e-4, five critic steps, clip 0.01.
    pub fn wasserstein(mode: SharingMode, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            mode,
            value: ValueKind::wasserstein(),
            epochs,
            batch_size: 64,
            n_critic: 5,
            learning_rate: 5e-4,
            optimizer: OptimizerKind::RmsProp { decay: 0.99 },
            seed,
            eval_interval: epochs.clamp(1, 100),
        }
    }

    /// Plain SGD, lr 1e-3, one critic step.
    pub fn vanilla(mode: SharingMode, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            mode,
            value: ValueKind::Vanilla,
            epochs,
            batch_size: 64,
            n_critic: 1,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Sgd,
            seed,
            eval_interval: epochs.clamp(1, 100),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.n_critic == 0 || self.eval_interval == 0
        {
            return Err(Error::contract(
                "epochs, batch_size, n_critic and eval_interval must be at least 1",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::contract(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        self.value.validate()
    }

    pub fn lambda(&self) -> f64 {
        match self.mode {
            SharingMode::L1 { lambda } => lambda,
            _ => 0.0,
        }
    }
}

/// One `epoch,member,loss_value,coupling_value` record.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub member: usize,
    /// Member value `V_k` on the batch of that epoch's generator step.
    pub loss_value: f64,
    /// `Σ_{j<k} ‖θ_{G_j} − θ_{G_k}‖₁` after the epoch, unscaled by λ.
    pub coupling_value: f64,
}

pub fn write_history<W: Write>(rows: &[HistoryRow], mut w: W) -> Result<()> {
    writeln!(w, "epoch,member,loss_value,coupling_value")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.epoch, r.member, r.loss_value, r.coupling_value
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EnsembleModel,
    pub history: Vec<HistoryRow>,
    /// Snapshot at every evaluation epoch, the final epoch last.
    pub checkpoints: Vec<Checkpoint>,
}

/// Random stream `k` of `seed`.
pub fn member_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn init_pair(generator: &MlpSpec, critic: &MlpSpec, rng: &mut ChaCha8Rng) -> MemberParams {
    MemberParams {
        generator: ParamVector::init(generator.clone(), rng),
        critic: ParamVector::init(critic.clone(), rng),
    }
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect(),
    )
}

/// Class subsets of a dataset; fails on an empty class.
pub fn class_subsets(dataset: &DisconnectedDataset) -> Result<Vec<Vec<[f64; 2]>>> {
    (0..dataset.k())
        .map(|k| {
            let pts = dataset.class_points(k);
            if pts.is_empty() {
                Err(Error::EmptyClass(k))
            } else {
                Ok(pts)
            }
        })
        .collect()
}

/// Builds the initial model of `mode` with `k` members, drawing from the
/// per-member streams.
fn init_model(
    mode: SharingMode,
    generator: &MlpSpec,
    critic: &MlpSpec,
    weights: Vec<f64>,
    rngs: &mut [ChaCha8Rng],
) -> Result<EnsembleModel> {
    let k = weights.len();
    let members = match mode {
        SharingMode::Independent | SharingMode::L1 { .. } => Members::Free(
            rngs.iter_mut()
                .map(|r| init_pair(generator, critic, r))
                .collect(),
        ),
        SharingMode::Tied => Members::Tied(init_pair(generator, critic, &mut rngs[0])),
        SharingMode::Cgan => {
            let rng = &mut rngs[0];
            let mut shared = init_pair(generator, critic, rng);
            // first-layer biases are supplied per class
            shared.generator.bias_mut(0).fill(0.0);
            shared.critic.bias_mut(0).fill(0.0);
            let (g_in, g_w) = generator.layer_dims(0);
            let (d_in, d_w) = critic.layer_dims(0);
            let gen_bias = uniform_matrix(g_w, k, 1.0 / (g_in as f64).sqrt(), rng)?;
            let critic_bias = uniform_matrix(d_w, k, 1.0 / (d_in as f64).sqrt(), rng)?;
            Members::Cgan {
                shared,
                gen_bias,
                critic_bias,
            }
        }
        SharingMode::Gmgan => {
            let rng = &mut rngs[0];
            let p = init_pair(generator, critic, rng);
            let l = generator.input_dim();
            let latent_maps = (0..k)
                .map(|_| {
                    Ok((
                        Tensor::identity(l)?,
                        Tensor::vector((0..l).map(|_| rng.random_range(-1.0..=1.0)).collect())?,
                    ))
                })
                .collect::<Result<_>>()?;
            Members::Gmgan {
                tail: p.generator,
                critic: p.critic,
                latent_maps,
            }
        }
    };
    EnsembleModel::new(mode, weights, members)
}

/// Flat copies of the blocks `player` trains, in [`evaluate`] order.
fn read_blocks(members: &Members, player: Player) -> Vec<Vec<f64>> {
    let g = player == Player::Generator;
    let net = |p: &MemberParams| {
        if g {
            p.generator.values().to_vec()
        } else {
            p.critic.values().to_vec()
        }
    };
    match members {
        Members::Free(pairs) => pairs.iter().map(net).collect(),
        Members::Tied(p) => vec![net(p)],
        Members::Cgan {
            shared,
            gen_bias,
            critic_bias,
        } => {
            let bias = if g { gen_bias } else { critic_bias };
            vec![net(shared), bias.data().to_vec()]
        }
        Members::Gmgan {
            tail,
            critic,
            latent_maps,
        } => {
            if g {
                let mut out = vec![tail.values().to_vec()];
                for (w, b) in latent_maps {
                    out.push(w.data().to_vec());
                    out.push(b.data().to_vec());
                }
                out
            } else {
                vec![critic.values().to_vec()]
            }
        }
    }
}

fn write_blocks(members: &mut Members, player: Player, blocks: Vec<Vec<f64>>) -> Result<()> {
    let g = player == Player::Generator;
    let set_net = |pv: &mut ParamVector, vals: Vec<f64>| -> Result<()> {
        *pv = ParamVector::new(pv.spec().clone(), vals)?;
        Ok(())
    };
    let set_tensor = |t: &mut Tensor, vals: Vec<f64>| -> Result<()> {
        *t = Tensor::new(t.shape().to_vec(), vals)?;
        Ok(())
    };
    let mut it = blocks.into_iter();
    let mut next = || it.next().expect("block count matches storage");
    match members {
        Members::Free(pairs) => {
            for p in pairs {
                set_net(if g { &mut p.generator } else { &mut p.critic }, next())?;
            }
        }
        Members::Tied(p) => set_net(if g { &mut p.generator } else { &mut p.critic }, next())?,
        Members::Cgan {
            shared,
            gen_bias,
            critic_bias,
        } => {
            if g {
                set_net(&mut shared.generator, next())?;
                set_tensor(gen_bias, next())?;
            } else {
                set_net(&mut shared.critic, next())?;
                set_tensor(critic_bias, next())?;
            }
        }
        Members::Gmgan {
            tail,
            critic,
            latent_maps,
        } => {
            if g {
                set_net(tail, next())?;
                for (w, b) in latent_maps {
                    set_tensor(w, next())?;
                    set_tensor(b, next())?;
                }
            } else {
                set_net(critic, next())?;
            }
        }
    }
    Ok(())
}

/// A training run in progress.
pub struct Session {
    cfg: TrainConfig,
    model: EnsembleModel,
    data: Vec<Vec<[f64; 2]>>,
    rngs: Vec<ChaCha8Rng>,
    opt_g: Optimizer,
    opt_d: Optimizer,
    epoch: usize,
    history: Vec<HistoryRow>,
    checkpoints: Vec<Checkpoint>,
}

impl Session {
    /// One generator/critic pair trained on `points`, drawing from stream
    /// `stream`.
    pub fn single(
        cfg: &TrainConfig,
        generator: &MlpSpec,
        critic: &MlpSpec,
        points: Vec<[f64; 2]>,
        stream: usize,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyClass(stream));
        }
        let mut rngs = vec![member_rng(cfg.seed, stream)];
        let model = init_model(
            SharingMode::Independent,
            generator,
            critic,
            vec![1.0],
            &mut rngs,
        )?;
        Session::start(cfg, model, vec![points], rngs)
    }

    /// All `K` members of `cfg.mode` trained jointly; member `k` sees class
    /// `k` only and `π` is the label MLE.
    pub fn joint(
        cfg: &TrainConfig,
        generator: &MlpSpec,
        critic: &MlpSpec,
        dataset: &DisconnectedDataset,
    ) -> Result<Self> {
        let data = class_subsets(dataset)?;
        let weights = mle_mixture_weights(dataset.labels(), dataset.k())?;
        let mut rngs: Vec<ChaCha8Rng> = (0..dataset.k()).map(|k| member_rng(cfg.seed, k)).collect();
        let model = init_model(cfg.mode, generator, critic, weights, &mut rngs)?;
        Session::start(cfg, model, data, rngs)
    }

    fn start(
        cfg: &TrainConfig,
        model: EnsembleModel,
        data: Vec<Vec<[f64; 2]>>,
        rngs: Vec<ChaCha8Rng>,
    ) -> Result<Self> {
        cfg.validate()?;
        cfg.value.check_critic(model.critic_spec())?;
        if model.generator_spec().output_dim() != 2 {
            return Err(Error::contract("generators must emit 2-D points"));
        }
        Ok(Session {
            cfg: cfg.clone(),
            model,
            data,
            rngs,
            opt_g: Optimizer::new(cfg.optimizer, cfg.learning_rate),
            opt_d: Optimizer::new(cfg.optimizer, cfg.learning_rate),
            epoch: 0,
            history: Vec::new(),
            checkpoints: Vec::new(),
        })
    }

    pub fn model(&self) -> &EnsembleModel {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[HistoryRow] {
        &self.history
    }

    fn draw(&mut self) -> Result<Vec<Batch>> {
        let n = self.cfg.batch_size;
        let l = self.model.latent_dim();
        let mut out = Vec::with_capacity(self.data.len());
        for (pts, rng) in self.data.iter().zip(self.rngs.iter_mut()) {
            let mut real = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let p = pts[rng.random_range(0..pts.len())];
                real.extend_from_slice(&p);
            }
            let latent = (0..n * l)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            out.push(Batch {
                real: Tensor::matrix(n, 2, real)?,
                latent: Tensor::matrix(n, l, latent)?,
            });
        }
        Ok(out)
    }

    fn diverged(&self, loss: f64) -> Error {
        Error::Diverged {
            epoch: self.epoch,
            loss,
            last_good: self
                .checkpoints
                .last()
                .map(|c| Box::new((c.epoch, c.model.clone()))),
        }
    }

    /// Maps numeric failures to a divergence carrying the last checkpoint.
    fn guard<T>(&self, r: Result<T>) -> Result<T> {
        match r {
            Err(Error::NonFinite(_) | Error::Domain { .. }) => Err(self.diverged(f64::NAN)),
            other => other,
        }
    }

    fn update(&mut self, player: Player) -> Result<Vec<f64>> {
        let batches = self.draw()?;
        let ev = self.guard(evaluate(&self.model, self.cfg.value, &batches, player))?;
        for &v in ev.values.iter().chain([&ev.objective]) {
            if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
                return Err(self.diverged(v));
            }
        }
        let mut blocks = read_blocks(self.model.members(), player);
        let (opt, dir) = match player {
            Player::Critic => (&mut self.opt_d, Direction::Ascent),
            Player::Generator => (&mut self.opt_g, Direction::Descent),
        };
        for (i, (block, grad)) in blocks.iter_mut().zip(&ev.grads).enumerate() {
            opt.step(i, block, grad, dir)?;
        }
        if let (Player::Critic, ValueKind::Wasserstein { clip }) = (player, self.cfg.value) {
            for block in &mut blocks {
                clamp_params(block, clip)?;
            }
        }
        let written = write_blocks(self.model.members_mut(), player, blocks);
        self.guard(written)?;
        Ok(ev.values)
    }

    /// Runs one epoch.
    pub fn step(&mut self) -> Result<()> {
        self.epoch += 1;
        for _ in 0..self.cfg.n_critic {
            self.update(Player::Critic)?;
        }
        let values = self.update(Player::Generator)?;
        if self.epoch.is_multiple_of(self.cfg.eval_interval) || self.epoch == self.cfg.epochs {
            let coupling = self.model.generator_coupling()?;
            for (member, v) in values.into_iter().enumerate() {
                self.history.push(HistoryRow {
                    epoch: self.epoch,
                    member,
                    loss_value: v,
                    coupling_value: coupling,
                });
            }
            self.checkpoints.push(Checkpoint {
                model: self.model.clone(),
                seed: self.cfg.seed,
                epoch: self.epoch,
            });
        }
        Ok(())
    }

    /// Steps until `cfg.epochs` and returns the result.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while self.epoch < self.cfg.epochs {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            history: self.history,
            checkpoints: self.checkpoints,
        }
    }
}

fn require_mode(cfg: &TrainConfig, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "{what} needs a matching mode, got {}",
            cfg.mode
        )))
    }
}

/// One GAN on the whole dataset (stream 0).
pub fn train_single(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    Session::single(cfg, generator, critic, dataset.points().to_vec(), 0)?.run()
}

/// `K` members trained independently and in parallel, member `k` on class
/// `k` with stream `k`; `π` is the label MLE.
pub fn train_ensemble(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    require_mode(cfg, cfg.mode == SharingMode::Independent, "train_ensemble")?;
    let subsets = class_subsets(dataset)?;
    let weights = mle_mixture_weights(dataset.labels(), dataset.k())?;
    let runs = subsets
        .into_par_iter()
        .enumerate()
        .map(|(k, pts)| Session::single(cfg, generator, critic, pts, k)?.run())
        .collect::<Result<Vec<_>>>()?;

    let assemble = |models: Vec<EnsembleModel>| -> Result<EnsembleModel> {
        let pairs = models
            .into_iter()
            .map(|m| match m.into_members() {
                Members::Free(mut p) => Ok(p.remove(0)),
                _ => Err(Error::contract("member runs store free pairs")),
            })
            .collect::<Result<Vec<_>>>()?;
        EnsembleModel::new(
            SharingMode::Independent,
            weights.clone(),
            Members::Free(pairs),
        )
    };

    let n_ck = runs[0].checkpoints.len();
    let mut checkpoints = Vec::with_capacity(n_ck);
    let mut history = Vec::new();
    for i in 0..n_ck {
        let epoch = runs[0].checkpoints[i].epoch;
        let model = assemble(
            runs.iter()
                .map(|r| r.checkpoints[i].model.clone())
                .collect(),
        )?;
        let coupling = model.generator_coupling()?;
        for (member, run) in runs.iter().enumerate() {
            history.push(HistoryRow {
                epoch,
                member,
                loss_value: run.history[i].loss_value,
                coupling_value: coupling,
            });
        }
        checkpoints.push(Checkpoint {
            model,
            seed: cfg.seed,
            epoch,
        });
    }
    let model = assemble(runs.into_iter().map(|r| r.model).collect())?;
    Ok(TrainOutcome {
        model,
        history,
        checkpoints,
    })
}

/// Joint training under the ℓ1-coupled objective.
pub fn train_hybrid(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    require_mode(
        cfg,
        matches!(cfg.mode, SharingMode::L1 { .. }),
        "train_hybrid",
    )?;
    Session::joint(cfg, generator, critic, dataset)?.run()
}

/// One shared pair updated with the sum of per-class values.
pub fn train_tied(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    require_mode(cfg, cfg.mode == SharingMode::Tied, "train_tied")?;
    Session::joint(cfg, generator, critic, dataset)?.run()
}

/// Shared networks with per-class first-layer biases.
pub fn train_cgan(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    require_mode(cfg, cfg.mode == SharingMode::Cgan, "train_cgan")?;
    Session::joint(cfg, generator, critic, dataset)?.run()
}

/// Shared generator tail and critic with per-class latent affine maps.
pub fn train_gmgan(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    require_mode(cfg, cfg.mode == SharingMode::Gmgan, "train_gmgan")?;
    Session::joint(cfg, generator, critic, dataset)?.run()
}

/// Dispatches on `cfg.mode`.
pub fn train(
    cfg: &TrainConfig,
    generator: &MlpSpec,
    critic: &MlpSpec,
    dataset: &DisconnectedDataset,
) -> Result<TrainOutcome> {
    match cfg.mode {
        SharingMode::Independent => train_ensemble(cfg, generator, critic, dataset),
        SharingMode::L1 { .. } => train_hybrid(cfg, generator, critic, dataset),
        SharingMode::Tied => train_tied(cfg, generator, critic, dataset),
        SharingMode::Cgan => train_cgan(cfg, generator, critic, dataset),
        SharingMode::Gmgan => train_gmgan(cfg, generator, critic, dataset),
    }
}
