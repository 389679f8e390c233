//! Multi-label dialog policies: a sigmoid-headed MLP plus a role marking it
//! as trainable or frozen.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dialogworld::{ActionSet, Agent, DialogContext, World};
use crate::error::{Error, Result};
use crate::nncore::{Checkpoint, Matrix, Mlp, MlpSpec, ParamSet};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Trainable,
    Frozen,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Trainable => "trainable",
            Role::Frozen => "frozen",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trainable" => Ok(Role::Trainable),
            "frozen" => Ok(Role::Frozen),
            other => Err(Error::Config(format!("unknown policy role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    net: Mlp,
    role: Role,
}

impl PolicyNet {
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        Ok(Self::from_mlp(Mlp::init(spec, rng)?, Role::Trainable))
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        Ok(Self::from_mlp(Mlp::zeros(spec)?, Role::Trainable))
    }

    pub fn from_mlp(net: Mlp, role: Role) -> Self {
        PolicyNet { net, role }
    }

    pub fn spec(&self) -> &MlpSpec {
        self.net.spec()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &ParamSet {
        self.net.params()
    }

    /// Mutable parameters; refused for frozen policies.
    pub fn params_mut(&mut self) -> Result<&mut ParamSet> {
        match self.role {
            Role::Trainable => Ok(self.net.params_mut()),
            Role::Frozen => Err(Error::Usage("frozen policy cannot be updated".into())),
        }
    }

    pub fn num_actions(&self) -> usize {
        self.spec().output_dim
    }

    pub fn probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.net.forward_one(state)
    }

    pub fn probs_batch(&self, states: ArrayView2<'_, f64>) -> Result<Matrix> {
        self.net.forward(states)
    }

    /// `{c : π(a_c|s) > 0.5}` and the full probability vector.
    pub fn predict_set(&self, state: &[f64]) -> Result<(ActionSet, Vec<f64>)> {
        let p = self.probs(state)?;
        Ok((ActionSet::from_probs(&p), p))
    }

    pub fn clone_frozen(&self) -> PolicyNet {
        PolicyNet {
            net: self.net.clone(),
            role: Role::Frozen,
        }
    }

    pub fn clone_trainable(&self) -> PolicyNet {
        PolicyNet {
            net: self.net.clone(),
            role: Role::Trainable,
        }
    }

    /// Errors unless the policy's dimensions fit `world`.
    pub fn check_world(&self, world: &World) -> Result<()> {
        if self.spec().input_dim != world.state_dim() {
            return Err(Error::Dimension {
                context: "policy input vs world state",
                expected: world.state_dim(),
                got: self.spec().input_dim,
            });
        }
        if self.num_actions() != world.num_actions() {
            return Err(Error::Dimension {
                context: "policy output vs world actions",
                expected: world.num_actions(),
                got: self.num_actions(),
            });
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, mut metadata: BTreeMap<String, String>) -> Checkpoint {
        metadata.insert("role".into(), self.role.to_string());
        Checkpoint::from_mlp(&self.net, metadata)
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let role = match ckpt.metadata.get("role") {
            Some(r) => r.parse()?,
            None => Role::Trainable,
        };
        Ok(Self::from_mlp(ckpt.into_mlp()?, role))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint(BTreeMap::new()).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// Stack equal-length state vectors into a `rows x dim` matrix.
pub fn stack_states<'a, I>(states: I, dim: usize) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut flat = Vec::new();
    let mut rows = 0;
    for s in states {
        if s.len() != dim {
            return Err(Error::Dimension {
                context: "state vector",
                expected: dim,
                got: s.len(),
            });
        }
        flat.extend_from_slice(s);
        rows += 1;
    }
    Array2::from_shape_vec((rows, dim), flat).map_err(|e| Error::Usage(e.to_string()))
}

impl Agent for PolicyNet {
    /// Panics on a dimension mismatch; call [`PolicyNet::check_world`] first.
    fn respond(&self, _world: &World, _ctx: &DialogContext, state: &[f64]) -> ActionSet {
        let p = self.probs(state).expect("policy dimensions checked against the world");
        ActionSet::from_probs(&p)
    }
}
