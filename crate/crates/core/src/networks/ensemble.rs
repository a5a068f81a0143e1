use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::mlp::{MlpSpec, ParamVector};
use super::views::{cgan_member, gmgan_member};

/// How ensemble members share parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SharingMode {
    Independent,
    L1 { lambda: f64 },
    Tied,
    Cgan,
    Gmgan,
}

impl fmt::Display for SharingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SharingMode::Independent => write!(f, "independent"),
            SharingMode::L1 { lambda } => write!(f, "l1 {lambda:e}"),
            SharingMode::Tied => write!(f, "tied"),
            SharingMode::Cgan => write!(f, "cgan"),
            SharingMode::Gmgan => write!(f, "gmgan"),
        }
    }
}

impl FromStr for SharingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let mode = match parts.next() {
            Some("independent") => SharingMode::Independent,
            Some("tied") => SharingMode::Tied,
            Some("cgan") => SharingMode::Cgan,
            Some("gmgan") => SharingMode::Gmgan,
            Some("l1") => {
                let lambda: f64 = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(format!("`l1` needs a λ value: `{s}`")))?;
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::parse(format!(
                        "λ must be finite and ≥ 0, got {lambda}"
                    )));
                }
                SharingMode::L1 { lambda }
            }
            _ => return Err(Error::parse(format!("unknown sharing mode `{s}`"))),
        };
        if parts.next().is_some() {
            return Err(Error::parse(format!("trailing tokens in mode `{s}`")));
        }
        Ok(mode)
    }
}

/// A generator/critic pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberParams {
    pub generator: ParamVector,
    pub critic: ParamVector,
}

/// Parameter storage; its variant fixes which coordinates members share.
#[derive(Clone, Debug, PartialEq)]
pub enum Members {
    /// One free pair per member (independent and ℓ1-coupled modes).
    Free(Vec<MemberParams>),
    /// A single pair referenced by every member.
    Tied(MemberParams),
    /// Shared networks plus per-class first-layer biases, stored as
    /// `width × K` matrices whose column `k` belongs to member `k`.
    Cgan {
        shared: MemberParams,
        gen_bias: Tensor,
        critic_bias: Tensor,
    },
    /// Shared generator tail and critic plus one latent affine map per member.
    Gmgan {
        tail: ParamVector,
        critic: ParamVector,
        latent_maps: Vec<(Tensor, Tensor)>,
    },
}

/// `K` generator/critic pairs, mixture weights `π` and a sharing mode.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    mode: SharingMode,
    k: usize,
    weights: Vec<f64>,
    members: Members,
}

pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::contract("mixture weights are empty"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::contract(format!(
            "mixture weights must be ≥ 0: {weights:?}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "mixture weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl EnsembleModel {
    pub fn new(mode: SharingMode, weights: Vec<f64>, members: Members) -> Result<Self> {
        validate_weights(&weights)?;
        let k = weights.len();
        match (&mode, &members) {
            (SharingMode::Independent | SharingMode::L1 { .. }, Members::Free(m)) => {
                if m.len() != k {
                    return Err(Error::contract(format!(
                        "{} members for {k} weights",
                        m.len()
                    )));
                }
                for pair in &m[1..] {
                    if pair.generator.spec() != m[0].generator.spec()
                        || pair.critic.spec() != m[0].critic.spec()
                    {
                        return Err(Error::contract("ensemble members must share architectures"));
                    }
                }
            }
            (SharingMode::Tied, Members::Tied(_)) => {}
            (
                SharingMode::Cgan,
                Members::Cgan {
                    shared,
                    gen_bias,
                    critic_bias,
                },
            ) => {
                let gw = shared.generator.spec().layer_dims(0).1;
                let dw = shared.critic.spec().layer_dims(0).1;
                if gen_bias.shape() != [gw, k] || critic_bias.shape() != [dw, k] {
                    return Err(Error::shape(
                        "cgan ensemble",
                        format!(
                            "bias matrices {:?}/{:?}, expected [{gw}, {k}]/[{dw}, {k}]",
                            gen_bias.shape(),
                            critic_bias.shape()
                        ),
                    ));
                }
            }
            (
                SharingMode::Gmgan,
                Members::Gmgan {
                    tail, latent_maps, ..
                },
            ) => {
                if latent_maps.len() != k {
                    return Err(Error::contract(format!(
                        "{} latent maps for {k} weights",
                        latent_maps.len()
                    )));
                }
                for (w, b) in latent_maps {
                    gmgan_member(tail, w, b)?;
                }
            }
            _ => {
                return Err(Error::contract(format!(
                    "storage does not match sharing mode {mode}"
                )))
            }
        }
        Ok(EnsembleModel {
            mode,
            k,
            weights,
            members,
        })
    }

    /// A single GAN viewed as a one-member ensemble.
    pub fn single(generator: ParamVector, critic: ParamVector) -> Self {
        EnsembleModel {
            mode: SharingMode::Independent,
            k: 1,
            weights: vec![1.0],
            members: Members::Free(vec![MemberParams { generator, critic }]),
        }
    }

    pub fn mode(&self) -> SharingMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        validate_weights(&weights)?;
        if weights.len() != self.k {
            return Err(Error::contract(format!(
                "{} weights for {} members",
                weights.len(),
                self.k
            )));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn members(&self) -> &Members {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut Members {
        &mut self.members
    }

    pub fn into_members(self) -> Members {
        self.members
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.k {
            return Err(Error::contract(format!(
                "member {k} out of range for K = {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Generator of member `k`; borrowed when stored directly.
    pub fn generator(&self, k: usize) -> Result<Cow<'_, ParamVector>> {
        self.check_index(k)?;
        Ok(match &self.members {
            Members::Free(m) => Cow::Borrowed(&m[k].generator),
            Members::Tied(p) => Cow::Borrowed(&p.generator),
            Members::Cgan {
                shared,
                gen_bias,
                critic_bias,
            } => Cow::Owned(
                cgan_member(&shared.generator, &shared.critic, gen_bias, critic_bias, k)?.0,
            ),
            Members::Gmgan {
                tail, latent_maps, ..
            } => Cow::Owned(gmgan_member(tail, &latent_maps[k].0, &latent_maps[k].1)?),
        })
    }

    pub fn critic(&self, k: usize) -> Result<Cow<'_, ParamVector>> {
        self.check_index(k)?;
        Ok(match &self.members {
            Members::Free(m) => Cow::Borrowed(&m[k].critic),
            Members::Tied(p) => Cow::Borrowed(&p.critic),
            Members::Cgan {
                shared,
                gen_bias,
                critic_bias,
            } => Cow::Owned(
                cgan_member(&shared.generator, &shared.critic, gen_bias, critic_bias, k)?.1,
            ),
            Members::Gmgan { critic, .. } => Cow::Borrowed(critic),
        })
    }

    pub fn latent_dim(&self) -> usize {
        match &self.members {
            Members::Free(m) => m[0].generator.spec().input_dim(),
            Members::Tied(p) | Members::Cgan { shared: p, .. } => p.generator.spec().input_dim(),
            Members::Gmgan { tail, .. } => tail.spec().input_dim(),
        }
    }

    /// Spec of the stored (shared) generator.
    pub fn generator_spec(&self) -> &MlpSpec {
        match &self.members {
            Members::Free(m) => m[0].generator.spec(),
            Members::Tied(p) | Members::Cgan { shared: p, .. } => p.generator.spec(),
            Members::Gmgan { tail, .. } => tail.spec(),
        }
    }

    pub fn critic_spec(&self) -> &MlpSpec {
        match &self.members {
            Members::Free(m) => m[0].critic.spec(),
            Members::Tied(p) | Members::Cgan { shared: p, .. } => p.critic.spec(),
            Members::Gmgan { critic, .. } => critic.spec(),
        }
    }

    /// `Σ_{j<k} ‖θ_{G_j} − θ_{G_k}‖₁` over materialized member generators.
    pub fn generator_coupling(&self) -> Result<f64> {
        let gens = (0..self.k)
            .map(|k| self.generator(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_l1(gens.iter().map(|g| g.values())))
    }
}

/// `Σ_{j<k} ‖a_j − a_k‖₁` over unordered pairs.
pub fn pairwise_l1<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let vs: Vec<&[f64]> = vectors.into_iter().collect();
    let mut total = 0.0;
    for j in 0..vs.len() {
        for k in j + 1..vs.len() {
            total += vs[j]
                .iter()
                .zip(vs[k])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::OutputActivation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(seed: u64) -> MemberParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MemberParams {
            generator: ParamVector::init(MlpSpec::default_generator(), &mut rng),
            critic: ParamVector::init(MlpSpec::default_critic(OutputActivation::None), &mut rng),
        }
    }

    #[test]
    fn mode_text_round_trip() {
        for m in [
            SharingMode::Independent,
            SharingMode::L1 { lambda: 0.001 },
            SharingMode::Tied,
            SharingMode::Cgan,
            SharingMode::Gmgan,
        ] {
            assert_eq!(m.to_string().parse::<SharingMode>().unwrap(), m);
        }
        assert!("l1".parse::<SharingMode>().is_err());
        assert!("l1 -1".parse::<SharingMode>().is_err());
    }

    #[test]
    fn weights_are_validated() {
        let m = Members::Free(vec![pair(1), pair(2)]);
        assert!(EnsembleModel::new(SharingMode::Independent, vec![0.7, 0.7], m.clone()).is_err());
        assert!(EnsembleModel::new(SharingMode::Independent, vec![1.5, -0.5], m.clone()).is_err());
        assert!(EnsembleModel::new(SharingMode::Tied, vec![0.5, 0.5], m.clone()).is_err());
        assert!(EnsembleModel::new(SharingMode::Independent, vec![0.5, 0.5], m).is_ok());
    }

    #[test]
    fn tied_members_observe_one_object() {
        let mut model = EnsembleModel::new(
            SharingMode::Tied,
            vec![0.25, 0.25, 0.5],
            Members::Tied(pair(3)),
        )
        .unwrap();
        if let Members::Tied(p) = model.members_mut() {
            p.generator.values_mut()[0] = 42.0;
        }
        for k in 0..3 {
            assert!(matches!(model.generator(k).unwrap(), Cow::Borrowed(_)));
            assert_eq!(model.generator(k).unwrap().values()[0], 42.0);
        }
        assert_eq!(model.generator_coupling().unwrap(), 0.0);
    }

    #[test]
    fn cgan_members_differ_only_in_first_bias() {
        use rand::Rng;
        let shared = pair(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gb = Tensor::matrix(
            32,
            3,
            (0..96).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let db = Tensor::matrix(
            32,
            3,
            (0..96).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let model = EnsembleModel::new(
            SharingMode::Cgan,
            vec![0.2, 0.3, 0.5],
            Members::Cgan {
                shared,
                gen_bias: gb,
                critic_bias: db,
            },
        )
        .unwrap();
        let spec = model.generator_spec().clone();
        let bias0 = spec.layer_offset(0) + 2 * 32..spec.layer_offset(0) + 2 * 32 + 32;
        for j in 0..3 {
            for k in 0..3 {
                let (gj, gk) = (model.generator(j).unwrap(), model.generator(k).unwrap());
                for (i, (a, b)) in gj.values().iter().zip(gk.values()).enumerate() {
                    if !bias0.contains(&i) {
                        assert_eq!(a, b, "coordinate {i} differs outside first-layer bias");
                    }
                }
            }
        }
    }

    #[test]
    fn pairwise_l1_brute_force() {
        let vs = [vec![1.0], vec![2.0], vec![4.0]];
        assert_eq!(pairwise_l1(vs.iter().map(|v| v.as_slice())), 6.0);
    }
}
