//! Policy checkpoints as canonical JSON.
//!
//! Object keys are sorted, floats are written with 17 significant digits and
//! weight matrices are nested row-major arrays, so a loaded checkpoint saves
//! back to the same bytes.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Layer, Mlp, MlpSpec, ScalarAdam};
use crate::sac::{SacAgent, SacHyperparams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Architecture {
    pub fn actor_spec(&self) -> MlpSpec {
        MlpSpec::new(self.obs_dim, &self.actor_hidden, 2 * self.action_dim)
    }

    pub fn critic_spec(&self) -> MlpSpec {
        MlpSpec::new(self.obs_dim + self.action_dim, &self.critic_hidden, 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Mlp,
    pub v: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerStates {
    pub actor: AdamState,
    pub critic1: AdamState,
    pub critic2: AdamState,
    pub temp: ScalarAdam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub embodiment: String,
    pub train_steps: u64,
    pub seed: u64,
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub log_entropy_temp: f64,
    pub optimizer: Option<OptimizerStates>,
}

// On-disk mirror of the types above. Serialized through `Value`, whose map
// keeps keys sorted.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamDoc {
    step: u64,
    m: Vec<LayerDoc>,
    v: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalarAdamDoc {
    step: u64,
    m: f64,
    v: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerDoc {
    actor: AdamDoc,
    critic1: AdamDoc,
    critic2: AdamDoc,
    temp: ScalarAdamDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    architecture: Architecture,
    embodiment: String,
    train_steps: u64,
    seed: u64,
    actor: Vec<LayerDoc>,
    critic1: Vec<LayerDoc>,
    critic2: Vec<LayerDoc>,
    target1: Vec<LayerDoc>,
    target2: Vec<LayerDoc>,
    log_entropy_temp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerDoc>,
}

fn net_doc(net: &Mlp) -> Vec<LayerDoc> {
    net.layers
        .iter()
        .map(|l| LayerDoc { weight: l.weight.chunks(l.in_dim).map(<[f64]>::to_vec).collect(), bias: l.bias.clone() })
        .collect()
}

fn net_from_doc(doc: Vec<LayerDoc>, spec: &MlpSpec, what: &str) -> Result<Mlp> {
    let dims: Vec<usize> = std::iter::once(spec.input_dim).chain(spec.hidden.iter().copied()).chain([spec.output_dim]).collect();
    if doc.len() + 1 != dims.len() {
        return Err(Error::Shape(format!("{what}: {} layers, architecture has {}", doc.len(), dims.len() - 1)));
    }
    let mut layers = Vec::with_capacity(doc.len());
    for (k, (l, pair)) in doc.into_iter().zip(dims.windows(2)).enumerate() {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        if l.weight.len() != out_dim || l.weight.iter().any(|row| row.len() != in_dim) || l.bias.len() != out_dim {
            return Err(Error::Shape(format!("{what} layer {k}: expected {out_dim}x{in_dim} weights")));
        }
        layers.push(Layer { in_dim, out_dim, weight: l.weight.concat(), bias: l.bias });
    }
    Ok(Mlp { layers })
}

fn adam_doc(s: &AdamState) -> AdamDoc {
    AdamDoc { step: s.step, m: net_doc(&s.m), v: net_doc(&s.v) }
}

fn adam_from_doc(d: AdamDoc, spec: &MlpSpec, what: &str) -> Result<AdamState> {
    Ok(AdamState { step: d.step, m: net_from_doc(d.m, spec, what)?, v: net_from_doc(d.v, spec, what)? })
}

/// Compact JSON with every float as `{:.16e}`.
struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        CompactFormatter.write_f32(writer, value)
    }
}

impl PolicyCheckpoint {
    pub fn from_agent(agent: &SacAgent, embodiment: &str, train_steps: u64, seed: u64, with_optimizer: bool) -> Self {
        let optimizer = with_optimizer.then(|| OptimizerStates {
            actor: AdamState { step: agent.actor_opt.step, m: agent.actor_opt.m.clone(), v: agent.actor_opt.v.clone() },
            critic1: AdamState { step: agent.q1_opt.step, m: agent.q1_opt.m.clone(), v: agent.q1_opt.v.clone() },
            critic2: AdamState { step: agent.q2_opt.step, m: agent.q2_opt.m.clone(), v: agent.q2_opt.v.clone() },
            temp: agent.temp_opt,
        });
        Self {
            format_version: FORMAT_VERSION,
            architecture: Architecture {
                obs_dim: agent.obs_dim,
                action_dim: agent.act_dim,
                actor_hidden: agent.hp.actor_hidden.clone(),
                critic_hidden: agent.hp.critic_hidden.clone(),
            },
            embodiment: embodiment.to_string(),
            train_steps,
            seed,
            actor: agent.actor.clone(),
            critic1: agent.q1.clone(),
            critic2: agent.q2.clone(),
            target1: agent.q1_target.clone(),
            target2: agent.q2_target.clone(),
            log_entropy_temp: agent.log_temp,
            optimizer,
        }
    }

    /// Rebuilds an agent. Optimizer moments are restored when stored and
    /// fresh otherwise; learning rates always come from `hp`.
    pub fn to_agent(&self, hp: &SacHyperparams) -> Result<SacAgent> {
        hp.validate()?;
        self.check_architecture(hp, self.architecture.obs_dim, self.architecture.action_dim)?;
        let adam = |s: &AdamState, lr: f64| Adam { config: AdamConfig::with_lr(lr), step: s.step, m: s.m.clone(), v: s.v.clone() };
        let (actor_opt, q1_opt, q2_opt, temp_opt) = match &self.optimizer {
            Some(o) => (
                adam(&o.actor, hp.lr_actor),
                adam(&o.critic1, hp.lr_critic),
                adam(&o.critic2, hp.lr_critic),
                ScalarAdam { config: AdamConfig::with_lr(hp.lr_temp), ..o.temp },
            ),
            None => (
                Adam::new(&self.actor, AdamConfig::with_lr(hp.lr_actor)),
                Adam::new(&self.critic1, AdamConfig::with_lr(hp.lr_critic)),
                Adam::new(&self.critic2, AdamConfig::with_lr(hp.lr_critic)),
                ScalarAdam::new(AdamConfig::with_lr(hp.lr_temp)),
            ),
        };
        Ok(SacAgent {
            obs_dim: self.architecture.obs_dim,
            act_dim: self.architecture.action_dim,
            hp: hp.clone(),
            actor: self.actor.clone(),
            q1: self.critic1.clone(),
            q2: self.critic2.clone(),
            q1_target: self.target1.clone(),
            q2_target: self.target2.clone(),
            log_temp: self.log_entropy_temp,
            actor_opt,
            q1_opt,
            q2_opt,
            temp_opt,
        })
    }

    /// Rejects a checkpoint whose networks differ from the configured ones.
    pub fn check_architecture(&self, hp: &SacHyperparams, obs_dim: usize, action_dim: usize) -> Result<()> {
        let want = Architecture {
            obs_dim,
            action_dim,
            actor_hidden: hp.actor_hidden.clone(),
            critic_hidden: hp.critic_hidden.clone(),
        };
        if self.architecture != want {
            return Err(Error::Shape(format!("checkpoint architecture {:?}, configured {want:?}", self.architecture)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let all_finite = [&self.actor, &self.critic1, &self.critic2, &self.target1, &self.target2]
            .iter()
            .all(|n| n.params().all(|p| p.is_finite()))
            && self.log_entropy_temp.is_finite();
        if !all_finite {
            return Err(Error::Validation("checkpoint contains non-finite values".into()));
        }
        let doc = CheckpointDoc {
            format_version: self.format_version,
            architecture: self.architecture.clone(),
            embodiment: self.embodiment.clone(),
            train_steps: self.train_steps,
            seed: self.seed,
            actor: net_doc(&self.actor),
            critic1: net_doc(&self.critic1),
            critic2: net_doc(&self.critic2),
            target1: net_doc(&self.target1),
            target2: net_doc(&self.target2),
            log_entropy_temp: self.log_entropy_temp,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerDoc {
                actor: adam_doc(&o.actor),
                critic1: adam_doc(&o.critic1),
                critic2: adam_doc(&o.critic2),
                temp: ScalarAdamDoc { step: o.temp.step, m: o.temp.m, v: o.temp.v },
            }),
        };
        let value = serde_json::to_value(&doc).map_err(|e| Error::Validation(e.to_string()))?;
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats);
        value.serialize(&mut ser).map_err(|e| Error::Validation(e.to_string()))?;
        out.push(b'\n');
        Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Corrupt("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Version { found: version.try_into().unwrap_or(u32::MAX), expected: FORMAT_VERSION });
        }
        let doc: CheckpointDoc = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        let arch = doc.architecture;
        let (a, c) = (arch.actor_spec(), arch.critic_spec());
        a.validate().and(c.validate()).map_err(|e| Error::Shape(e.to_string()))?;
        let optimizer = match doc.optimizer {
            None => None,
            Some(o) => Some(OptimizerStates {
                actor: adam_from_doc(o.actor, &a, "actor optimizer")?,
                critic1: adam_from_doc(o.critic1, &c, "critic1 optimizer")?,
                critic2: adam_from_doc(o.critic2, &c, "critic2 optimizer")?,
                temp: ScalarAdam { config: AdamConfig::default(), step: o.temp.step, m: o.temp.m, v: o.temp.v },
            }),
        };
        Ok(Self {
            format_version: doc.format_version,
            embodiment: doc.embodiment,
            train_steps: doc.train_steps,
            seed: doc.seed,
            actor: net_from_doc(doc.actor, &a, "actor")?,
            critic1: net_from_doc(doc.critic1, &c, "critic1")?,
            critic2: net_from_doc(doc.critic2, &c, "critic2")?,
            target1: net_from_doc(doc.target1, &c, "target1")?,
            target2: net_from_doc(doc.target2, &c, "target2")?,
            log_entropy_temp: doc.log_entropy_temp,
            optimizer,
            architecture: arch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Corrupt(e.to_string()))?;
        Self::from_json(text)
    }
}
