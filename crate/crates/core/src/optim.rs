//! First-order optimizers over flat parameter blocks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    /// `v ← ρ v + (1 − ρ) g²`, `θ ← θ − lr · g / (√v + ε)`.
    RmsProp {
        decay: f64,
    },
}

pub const RMSPROP_EPS: f64 = 1e-8;

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Sgd => write!(f, "sgd"),
            OptimizerKind::RmsProp { decay } => write!(f, "rmsprop({decay})"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    /// `sgd`, `rmsprop` (decay 0.99) or `rmsprop(ρ)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let kind = match s {
            "sgd" => OptimizerKind::Sgd,
            "rmsprop" => OptimizerKind::RmsProp { decay: 0.99 },
            _ => {
                let decay = s
                    .strip_prefix("rmsprop(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|d| d.trim().parse().ok())
                    .ok_or_else(|| Error::parse(format!("unknown optimizer `{s}`")))?;
                OptimizerKind::RmsProp { decay }
            }
        };
        if let OptimizerKind::RmsProp { decay } = kind {
            if !(0.0..1.0).contains(&decay) {
                return Err(Error::parse(format!(
                    "rmsprop decay must lie in [0, 1), got {decay}"
                )));
            }
        }
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// Optimizer with independent state per parameter block.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    state: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            state: Vec::new(),
        }
    }

    pub fn step(
        &mut self,
        block: usize,
        params: &mut [f64],
        grad: &[f64],
        direction: Direction,
    ) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::shape(
                "optimizer step",
                format!(
                    "{} parameters, {} gradient entries",
                    params.len(),
                    grad.len()
                ),
            ));
        }
        let sign = match direction {
            Direction::Descent => 1.0,
            Direction::Ascent => -1.0,
        };
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * (sign * g);
                }
            }
            OptimizerKind::RmsProp { decay } => {
                if self.state.len() <= block {
                    self.state.resize(block + 1, Vec::new());
                }
                let v = &mut self.state[block];
                if v.is_empty() {
                    v.resize(params.len(), 0.0);
                }
                if v.len() != params.len() {
                    return Err(Error::contract(format!(
                        "block {block} changed size between steps"
                    )));
                }
                for ((p, g), vi) in params.iter_mut().zip(grad).zip(v.iter_mut()) {
                    let g = sign * g;
                    *vi = decay * *vi + (1.0 - decay) * g * g;
                    *p -= self.lr * g / (vi.sqrt() + RMSPROP_EPS);
                }
            }
        }
        Ok(())
    }
}
