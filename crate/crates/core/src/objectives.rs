//! GAN value functions, the ensemble sum, the ℓ1 coupling penalty and the
//! joint objective evaluator used by every trainer.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::networks::{
    pairwise_l1, BoundMlp, EnsembleModel, Members, MlpSpec, OutputActivation, ParamVector,
    SharingMode,
};
use crate::tensor::Tensor;

/// Clip applied to sigmoid critic outputs before taking logs.
pub const LOG_EPS: f64 = 1e-7;

/// Default WGAN weight-clipping constant.
pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueKind {
    /// `E log D(x) + E log(1 − D(G(z)))` with a sigmoid critic head.
    Vanilla,
    /// `E D(x) − E D(G(z))` with a linear head and weight clipping.
    Wasserstein { clip: f64 },
}

impl ValueKind {
    pub fn wasserstein() -> Self {
        ValueKind::Wasserstein { clip: DEFAULT_CLIP }
    }

    pub fn validate(&self) -> Result<()> {
        if let ValueKind::Wasserstein { clip } = *self {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(Error::contract(format!(
                    "clip constant must be positive, got {clip}"
                )));
            }
        }
        Ok(())
    }

    /// Critic head this value function expects.
    pub fn critic_output(&self) -> OutputActivation {
        match self {
            ValueKind::Vanilla => OutputActivation::Sigmoid,
            ValueKind::Wasserstein { .. } => OutputActivation::None,
        }
    }

    pub fn check_critic(&self, spec: &MlpSpec) -> Result<()> {
        self.validate()?;
        if spec.output_dim() != 1 {
            return Err(Error::contract(format!(
                "critic must have one output, got {}",
                spec.output_dim()
            )));
        }
        if spec.output() != self.critic_output() {
            return Err(Error::contract(format!(
                "{self} value needs a `{}` critic head, got `{}`",
                self.critic_output(),
                spec.output()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Vanilla => write!(f, "vanilla"),
            ValueKind::Wasserstein { clip } => write!(f, "wasserstein({clip})"),
        }
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    /// `vanilla`, `wasserstein` or `wasserstein(C)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let kind = match s {
            "vanilla" => ValueKind::Vanilla,
            "wasserstein" => ValueKind::wasserstein(),
            _ => {
                let clip = s
                    .strip_prefix("wasserstein(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| Error::parse(format!("unknown value kind `{s}`")))?;
                ValueKind::Wasserstein { clip }
            }
        };
        kind.validate().map_err(|e| Error::parse(e.to_string()))?;
        Ok(kind)
    }
}

/// Which player's parameters receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    Critic,
    Generator,
}

/// Real samples and latent draws for one member.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub real: Tensor,
    pub latent: Tensor,
}

/// Builds `V` on the tape from critic outputs on real and generated data.
pub fn value_node(tape: &mut Tape, kind: ValueKind, d_real: Var, d_fake: Var) -> Result<Var> {
    match kind {
        ValueKind::Vanilla => {
            let r = tape.clamp(d_real, LOG_EPS, 1.0 - LOG_EPS)?;
            let r = tape.log(r)?;
            let r = tape.mean(r)?;
            let f = tape.clamp(d_fake, LOG_EPS, 1.0 - LOG_EPS)?;
            let f = tape.affine(f, -1.0, 1.0)?;
            let f = tape.log(f)?;
            let f = tape.mean(f)?;
            tape.add(r, f)
        }
        ValueKind::Wasserstein { .. } => {
            let r = tape.mean(d_real)?;
            let f = tape.mean(d_fake)?;
            tape.sub(r, f)
        }
    }
}

/// A generator on the tape, optionally preceded by a latent affine map.
struct GenOnTape {
    net: BoundMlp,
    latent_map: Option<(Var, Var)>,
}

impl GenOnTape {
    fn forward(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let h = match self.latent_map {
            Some((w_t, b)) => {
                let h = tape.matmul(z, w_t)?;
                tape.add_bias(h, b)?
            }
            None => z,
        };
        self.net.forward(tape, h)
    }
}

fn member_value(
    tape: &mut Tape,
    kind: ValueKind,
    gen: &GenOnTape,
    critic: &BoundMlp,
    batch: &Batch,
) -> Result<Var> {
    let real = tape.constant(batch.real.clone());
    let z = tape.constant(batch.latent.clone());
    let fake = gen.forward(tape, z)?;
    let d_real = critic.forward(tape, real)?;
    let d_fake = critic.forward(tape, fake)?;
    value_node(tape, kind, d_real, d_fake)
}

/// Value of one generator/critic pair on a batch.
pub fn pair_value(
    kind: ValueKind,
    generator: &ParamVector,
    critic: &ParamVector,
    batch: &Batch,
) -> Result<f64> {
    kind.check_critic(critic.spec())?;
    let mut tape = Tape::new();
    let g = GenOnTape {
        net: generator.bind(&mut tape, false),
        latent_map: None,
    };
    let d = critic.bind(&mut tape, false);
    let v = member_value(&mut tape, kind, &g, &d, batch)?;
    Ok(tape.value(v).item())
}

/// Cross-entropy value with a sigmoid critic.
pub fn gan_value(
    generator: &ParamVector,
    critic: &ParamVector,
    real: &Tensor,
    latent: &Tensor,
) -> Result<f64> {
    pair_value(
        ValueKind::Vanilla,
        generator,
        critic,
        &Batch {
            real: real.clone(),
            latent: latent.clone(),
        },
    )
}

/// Wasserstein value with a linear critic.
pub fn wgan_value(
    generator: &ParamVector,
    critic: &ParamVector,
    real: &Tensor,
    latent: &Tensor,
) -> Result<f64> {
    pair_value(
        ValueKind::wasserstein(),
        generator,
        critic,
        &Batch {
            real: real.clone(),
            latent: latent.clone(),
        },
    )
}

/// `λ Σ_{j<k} ‖θ_j − θ_k‖₁`.
pub fn l1_coupling(params: &[&ParamVector], lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::contract(format!(
            "λ must be finite and ≥ 0, got {lambda}"
        )));
    }
    if let Some(first) = params.first() {
        if params.iter().any(|p| p.spec() != first.spec()) {
            return Err(Error::contract(
                "coupled parameter vectors must share a spec",
            ));
        }
    }
    Ok(lambda * pairwise_l1(params.iter().map(|p| p.values())))
}

/// Objective value, per-member values and gradients for one player.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// `V(θ_{G_k}, θ_{D_k})` on batch `k`.
    pub values: Vec<f64>,
    /// Unscaled `Σ_{j<k} ‖·‖₁` over the player's member parameters (0 for
    /// storage without free members).
    pub coupling: f64,
    /// `Σ V + λ C_G` for the generator, `Σ V − λ C_D` for the critic.
    pub objective: f64,
    /// Gradient of `objective` per trainable block, in checkpoint storage
    /// order: free members in order; the tied pair; the shared network then
    /// the bias matrix (row-major `width × K`); the GM-GAN tail then
    /// `W_k`, `b_k` per member (critic: the shared critic only).
    pub grads: Vec<Vec<f64>>,
}

fn lambda_of(mode: SharingMode) -> f64 {
    match mode {
        SharingMode::L1 { lambda } => lambda,
        _ => 0.0,
    }
}

/// Evaluates the joint objective of `model` on per-member batches and
/// differentiates it with respect to `player`'s parameters. The other
/// player enters as constants.
pub fn evaluate(
    model: &EnsembleModel,
    kind: ValueKind,
    batches: &[Batch],
    player: Player,
) -> Result<Evaluation> {
    let k = model.k();
    if batches.len() != k {
        return Err(Error::contract(format!(
            "{} batches for {k} members",
            batches.len()
        )));
    }
    kind.check_critic(model.critic_spec())?;
    let train_g = player == Player::Generator;
    let train_d = player == Player::Critic;
    let mut tape = Tape::new();

    // (per-member generator, per-member critic, trainable groups)
    let (gens, critics, blocks): (Vec<GenOnTape>, Vec<BoundMlp>, Vec<Block>) = match model.members()
    {
        Members::Free(pairs) => {
            let mut gens = Vec::with_capacity(k);
            let mut critics = Vec::with_capacity(k);
            let mut blocks = Vec::with_capacity(k);
            for p in pairs {
                let g = p.generator.bind(&mut tape, train_g);
                let d = p.critic.bind(&mut tape, train_d);
                blocks.push(Block::Net(if train_g { g.clone() } else { d.clone() }));
                gens.push(GenOnTape {
                    net: g,
                    latent_map: None,
                });
                critics.push(d);
            }
            (gens, critics, blocks)
        }
        Members::Tied(p) => {
            let g = p.generator.bind(&mut tape, train_g);
            let d = p.critic.bind(&mut tape, train_d);
            let block = Block::Net(if train_g { g.clone() } else { d.clone() });
            let gens = (0..k)
                .map(|_| GenOnTape {
                    net: g.clone(),
                    latent_map: None,
                })
                .collect();
            (gens, vec![d; k], vec![block])
        }
        Members::Cgan {
            shared,
            gen_bias,
            critic_bias,
        } => {
            let g = shared.generator.bind(&mut tape, train_g);
            let d = shared.critic.bind(&mut tape, train_d);
            let columns = |tape: &mut Tape, bias: &Tensor, trainable: bool| -> Result<Vec<Var>> {
                let (rows, cols) = bias.dims2()?;
                (0..cols)
                    .map(|c| {
                        let col =
                            Tensor::vector((0..rows).map(|r| bias.data()[r * cols + c]).collect())?;
                        Ok(if trainable {
                            tape.leaf(col)
                        } else {
                            tape.constant(col)
                        })
                    })
                    .collect()
            };
            let g_cols = columns(&mut tape, gen_bias, train_g)?;
            let d_cols = columns(&mut tape, critic_bias, train_d)?;
            let mut gens = Vec::with_capacity(k);
            let mut critics = Vec::with_capacity(k);
            for c in 0..k {
                let mut gk = g.clone();
                gk.replace_bias(0, g_cols[c]);
                let mut dk = d.clone();
                dk.replace_bias(0, d_cols[c]);
                gens.push(GenOnTape {
                    net: gk,
                    latent_map: None,
                });
                critics.push(dk);
            }
            let blocks = if train_g {
                vec![Block::Net(g), Block::Columns(g_cols)]
            } else {
                vec![Block::Net(d), Block::Columns(d_cols)]
            };
            (gens, critics, blocks)
        }
        Members::Gmgan {
            tail,
            critic,
            latent_maps,
        } => {
            let g = tail.bind(&mut tape, train_g);
            let d = critic.bind(&mut tape, train_d);
            let mut blocks = vec![Block::Net(if train_g { g.clone() } else { d.clone() })];
            let mut gens = Vec::with_capacity(k);
            for (w, b) in latent_maps {
                let w_t = w.transpose()?;
                let (wv, bv) = if train_g {
                    (tape.leaf(w_t), tape.leaf(b.clone()))
                } else {
                    (tape.constant(w_t), tape.constant(b.clone()))
                };
                if train_g {
                    blocks.push(Block::TransposedWeight(wv));
                    blocks.push(Block::Plain(bv));
                }
                gens.push(GenOnTape {
                    net: g.clone(),
                    latent_map: Some((wv, bv)),
                });
            }
            (gens, vec![d; k], blocks)
        }
    };

    let mut value_vars = Vec::with_capacity(k);
    for c in 0..k {
        value_vars.push(member_value(
            &mut tape,
            kind,
            &gens[c],
            &critics[c],
            &batches[c],
        )?);
    }
    let mut total = value_vars[0];
    for &v in &value_vars[1..] {
        total = tape.add(total, v)?;
    }

    let mut coupling = 0.0;
    if let Members::Free(pairs) = model.members() {
        if let SharingMode::L1 { .. } = model.mode() {
            let nets: Vec<&BoundMlp> = blocks
                .iter()
                .map(|b| match b {
                    Block::Net(n) => n,
                    _ => unreachable!("free storage has only network blocks"),
                })
                .collect();
            if nets.len() > 1 {
                let c = coupling_node(&mut tape, &nets)?;
                coupling = tape.value(c).item();
                let sign = if train_g { 1.0 } else { -1.0 };
                let penalty = tape.scale(c, sign * lambda_of(model.mode()))?;
                total = tape.add(total, penalty)?;
            }
        } else {
            let params: Vec<&[f64]> = pairs
                .iter()
                .map(|p| {
                    if train_g {
                        p.generator.values()
                    } else {
                        p.critic.values()
                    }
                })
                .collect();
            coupling = pairwise_l1(params);
        }
    }

    let grads = tape.backward(total)?;
    let values = value_vars.iter().map(|&v| tape.value(v).item()).collect();
    let objective = tape.value(total).item();
    let block_grads = blocks
        .iter()
        .map(|b| b.gradient(&grads))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        values,
        coupling,
        objective,
        grads: block_grads,
    })
}

/// `Σ_{j<k} ‖θ_j − θ_k‖₁` on the tape, summed layer by layer.
fn coupling_node(tape: &mut Tape, nets: &[&BoundMlp]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for j in 0..nets.len() {
        for k in j + 1..nets.len() {
            for layer in 0..nets[j].spec().num_layers() {
                let (wj, bj) = nets[j].layer(layer);
                let (wk, bk) = nets[k].layer(layer);
                for (a, b) in [(wj, wk), (bj, bk)] {
                    let d = tape.l1_distance(a, b)?;
                    total = Some(match total {
                        Some(t) => tape.add(t, d)?,
                        None => d,
                    });
                }
            }
        }
    }
    total.ok_or_else(|| Error::contract("coupling needs at least two members"))
}

enum Block {
    Net(BoundMlp),
    /// Per-member bias columns gathered into a `width × K` matrix.
    Columns(Vec<Var>),
    /// A latent weight bound as `Wᵀ`; its gradient is reported for `W`.
    TransposedWeight(Var),
    Plain(Var),
}

impl Block {
    fn gradient(&self, grads: &crate::autodiff::Gradients) -> Result<Vec<f64>> {
        match self {
            Block::Net(n) => Ok(n.gradient(grads)),
            Block::Columns(cols) => {
                let per: Vec<Tensor> = cols.iter().map(|&c| grads.wrt(c)).collect();
                let rows = per[0].len();
                let k = per.len();
                let mut out = vec![0.0; rows * k];
                for (c, col) in per.iter().enumerate() {
                    for (r, v) in col.data().iter().enumerate() {
                        out[r * k + c] = *v;
                    }
                }
                Ok(out)
            }
            Block::TransposedWeight(w_t) => Ok(grads.wrt(*w_t).transpose()?.into_data()),
            Block::Plain(b) => Ok(grads.wrt(*b).into_data()),
        }
    }
}

/// Per-member values `V(θ_{G_k}, θ_{D_k})` on per-class batches.
pub fn ensemble_value(
    model: &EnsembleModel,
    kind: ValueKind,
    batches: &[Batch],
) -> Result<Vec<f64>> {
    if batches.len() != model.k() {
        return Err(Error::contract(format!(
            "{} batches for {} members",
            batches.len(),
            model.k()
        )));
    }
    (0..model.k())
        .map(|c| pair_value(kind, &*model.generator(c)?, &*model.critic(c)?, &batches[c]))
        .collect()
}

/// Signed hybrid objectives `(Σ V + λ C_G, Σ V − λ C_D)`.
pub fn hybrid_objective(
    model: &EnsembleModel,
    kind: ValueKind,
    batches: &[Batch],
) -> Result<(f64, f64)> {
    let SharingMode::L1 { lambda } = model.mode() else {
        return Err(Error::contract(format!(
            "hybrid objective needs l1 mode, got {}",
            model.mode()
        )));
    };
    let values = ensemble_value(model, kind, batches)?;
    let total: f64 = values.iter().sum();
    let Members::Free(pairs) = model.members() else {
        unreachable!("l1 mode always stores free members")
    };
    let gens: Vec<&ParamVector> = pairs.iter().map(|p| &p.generator).collect();
    let critics: Vec<&ParamVector> = pairs.iter().map(|p| &p.critic).collect();
    Ok((
        total + l1_coupling(&gens, lambda)?,
        total - l1_coupling(&critics, lambda)?,
    ))
}
