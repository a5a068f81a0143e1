//! Plain-text checkpoints.
//!
//! ```text
//! ensgan-checkpoint 1
//! generator 2,32,32,2;tanh;none
//! critic 2,32,32,1;leaky_relu(0.2);none
//! mode independent
//! k 2
//! seed 7
//! epoch 2000
//! weights 5.0000000000000000e-1 5.0000000000000000e-1
//! values 4870
//! <one value per line>
//! ```
//!
//! Values are written with 17 significant digits and follow the storage
//! order of [`Members`]: free pairs as `G_0, D_0, G_1, D_1, …`; tied as
//! `G, D`; cGAN as `G, D, B_G, B_D` (bias matrices row-major); GM-GAN as
//! `tail, D, W_0, b_0, W_1, b_1, …`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ensemble::{EnsembleModel, MemberParams, Members, SharingMode};
use super::mlp::{MlpSpec, ParamVector};

const MAGIC: &str = "ensgan-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: EnsembleModel,
    pub seed: u64,
    pub epoch: usize,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn flatten(members: &Members) -> Vec<f64> {
    let mut out = Vec::new();
    match members {
        Members::Free(pairs) => {
            for p in pairs {
                out.extend_from_slice(p.generator.values());
                out.extend_from_slice(p.critic.values());
            }
        }
        Members::Tied(p) => {
            out.extend_from_slice(p.generator.values());
            out.extend_from_slice(p.critic.values());
        }
        Members::Cgan {
            shared,
            gen_bias,
            critic_bias,
        } => {
            out.extend_from_slice(shared.generator.values());
            out.extend_from_slice(shared.critic.values());
            out.extend_from_slice(gen_bias.data());
            out.extend_from_slice(critic_bias.data());
        }
        Members::Gmgan {
            tail,
            critic,
            latent_maps,
        } => {
            out.extend_from_slice(tail.values());
            out.extend_from_slice(critic.values());
            for (w, b) in latent_maps {
                out.extend_from_slice(w.data());
                out.extend_from_slice(b.data());
            }
        }
    }
    out
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.model;
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "generator {}", m.generator_spec())?;
        writeln!(w, "critic {}", m.critic_spec())?;
        writeln!(w, "mode {}", m.mode())?;
        writeln!(w, "k {}", m.k())?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "epoch {}", self.epoch)?;
        let weights: Vec<String> = m.weights().iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "weights {}", weights.join(" "))?;
        let values = flatten(m.members());
        writeln!(w, "values {}", values.len())?;
        for v in values {
            writeln!(w, "{}", fmt_f64(v))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("checkpoint text is ASCII")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::parse(format!("checkpoint truncated before {what}")))?
                .map_err(Error::from)
        };
        if next("magic")?.trim() != MAGIC {
            return Err(Error::parse("not an ensgan checkpoint"));
        }
        fn field(line: String, key: &str) -> Result<String> {
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::parse(format!("expected `{key}` header, got `{line}`")))
        }
        fn num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::parse(format!("bad value `{v}` for `{key}`")))
        }
        let gen_spec: MlpSpec = field(next("generator")?, "generator")?.parse()?;
        let critic_spec: MlpSpec = field(next("critic")?, "critic")?.parse()?;
        let mode: SharingMode = field(next("mode")?, "mode")?.parse()?;
        let k: usize = num(&field(next("k")?, "k")?, "k")?;
        let seed: u64 = num(&field(next("seed")?, "seed")?, "seed")?;
        let epoch: usize = num(&field(next("epoch")?, "epoch")?, "epoch")?;
        let weights = field(next("weights")?, "weights")?
            .split_whitespace()
            .map(|v| num::<f64>(v, "weights"))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = num(&field(next("values")?, "values")?, "values")?;
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let line = next("value")?;
            values.push(num::<f64>(line.trim(), &format!("value {i}"))?);
        }
        if weights.len() != k {
            return Err(Error::parse(format!(
                "{} weights for k = {k}",
                weights.len()
            )));
        }

        let mut cursor = values.into_iter();
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let chunk: Vec<f64> = cursor.by_ref().take(n).collect();
            if chunk.len() != n {
                return Err(Error::parse("checkpoint has too few values for its header"));
            }
            Ok(chunk)
        };
        let pair = |take: &mut dyn FnMut(usize) -> Result<Vec<f64>>| -> Result<MemberParams> {
            Ok(MemberParams {
                generator: ParamVector::new(gen_spec.clone(), take(gen_spec.param_count())?)?,
                critic: ParamVector::new(critic_spec.clone(), take(critic_spec.param_count())?)?,
            })
        };
        let members = match mode {
            SharingMode::Independent | SharingMode::L1 { .. } => {
                Members::Free((0..k).map(|_| pair(&mut take)).collect::<Result<_>>()?)
            }
            SharingMode::Tied => Members::Tied(pair(&mut take)?),
            SharingMode::Cgan => {
                let shared = pair(&mut take)?;
                let gw = gen_spec.layer_dims(0).1;
                let dw = critic_spec.layer_dims(0).1;
                Members::Cgan {
                    shared,
                    gen_bias: Tensor::matrix(gw, k, take(gw * k)?)?,
                    critic_bias: Tensor::matrix(dw, k, take(dw * k)?)?,
                }
            }
            SharingMode::Gmgan => {
                let shared = pair(&mut take)?;
                let l = gen_spec.input_dim();
                let latent_maps = (0..k)
                    .map(|_| {
                        Ok((
                            Tensor::matrix(l, l, take(l * l)?)?,
                            Tensor::vector(take(l)?)?,
                        ))
                    })
                    .collect::<Result<_>>()?;
                Members::Gmgan {
                    tail: shared.generator,
                    critic: shared.critic,
                    latent_maps,
                }
            }
        };
        if cursor.next().is_some() {
            return Err(Error::parse(
                "checkpoint has more values than its header describes",
            ));
        }
        for line in lines {
            if !line?.trim().is_empty() {
                return Err(Error::parse("trailing content after checkpoint values"));
            }
        }
        Ok(Checkpoint {
            model: EnsembleModel::new(mode, weights, members)?,
            seed,
            epoch,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Checkpoint::read_from(std::io::BufReader::new(file))
    }
}
