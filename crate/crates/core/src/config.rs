//! Flat `key = value` configuration covering every tunable of a run.
//!
//! Keys are dotted paths (`embodiment.B.tau`, `sac.batch_size`). Vectors are
//! comma separated. Layering is built-in defaults, then a config file, then
//! individual overrides, each replacing single keys.

use std::fmt::Write as _;
use std::path::Path;

use crate::control::SelectionMatrix;
use crate::error::{Error, Result};
use crate::sac::SacHyperparams;
use crate::sim::EmbodimentSpec;
use crate::task::TaskConfig;
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct Budgets {
    pub train_steps_a: u64,
    pub train_steps_b: u64,
    pub finetune_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub task: TaskConfig,
    pub embodiment_a: EmbodimentSpec,
    pub embodiment_b: EmbodimentSpec,
    pub sac: SacHyperparams,
    pub budgets: Budgets,
    /// Curve sampling period, agent steps.
    pub curve_every: u64,
    /// Episodes in the rolling curve window.
    pub curve_window: usize,
    pub finetune_warmup: u64,
    pub finetune_reset_critics: bool,
    pub eval_episodes: usize,
    pub eval_noise: bool,
    /// Store Adam moments in checkpoints.
    pub checkpoint_optimizer: bool,
    /// Prerequisite checkpoints; relative paths resolve against the output
    /// directory of the run that needs them.
    pub a_checkpoint: String,
    pub b_checkpoint: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            embodiment_a: EmbodimentSpec::a(),
            embodiment_b: EmbodimentSpec::b(),
            sac: SacHyperparams::default(),
            budgets: Budgets { train_steps_a: 150_000, train_steps_b: 400_000, finetune_steps: 30_000 },
            curve_every: 1000,
            curve_window: 20,
            finetune_warmup: 500,
            finetune_reset_critics: false,
            eval_episodes: 100,
            eval_noise: true,
            checkpoint_optimizer: true,
            a_checkpoint: "../scenario1/checkpoint.json".into(),
            b_checkpoint: "../scenario2/checkpoint.json".into(),
        }
    }
}

enum Field<'a> {
    F64(&'a mut f64),
    U64(&'a mut u64),
    Usize(&'a mut usize),
    Bool(&'a mut bool),
    Vec3(&'a mut Vec3),
    Sizes(&'a mut Vec<usize>),
    Text(&'a mut String),
    /// `auto` or a number.
    Auto(&'a mut Option<f64>),
    Selection(&'a mut SelectionMatrix),
}

fn embodiment_fields<'a>(p: &str, e: &'a mut EmbodimentSpec, out: &mut Vec<(String, Field<'a>)>) {
    let k = |s: &str| format!("embodiment.{p}.{s}");
    out.push((k("tau"), Field::F64(&mut e.tau)));
    out.push((k("zeta"), Field::F64(&mut e.zeta)));
    out.push((k("v_max"), Field::F64(&mut e.v_max)));
    out.push((k("workspace_lo"), Field::Vec3(&mut e.workspace_lo)));
    out.push((k("workspace_hi"), Field::Vec3(&mut e.workspace_hi)));
    out.push((k("force_noise_sigma"), Field::F64(&mut e.force_noise_sigma)));
    out.push((k("pos_noise_sigma"), Field::F64(&mut e.pos_noise_sigma)));
}

impl Config {
    fn fields(&mut self) -> Vec<(String, Field<'_>)> {
        let t = &mut self.task;
        let g = &mut t.geometry;
        let s = &mut self.sac;
        let mut v: Vec<(String, Field<'_>)> = vec![
            ("geometry.hole_center".into(), Field::Vec3(&mut g.hole_center)),
            ("geometry.hole_radius".into(), Field::F64(&mut g.hole_radius)),
            ("geometry.peg_radius".into(), Field::F64(&mut g.peg_radius)),
            ("geometry.surface_z".into(), Field::F64(&mut g.surface_z)),
            ("geometry.insert_depth".into(), Field::F64(&mut g.insert_depth)),
            ("geometry.contact_stiffness".into(), Field::F64(&mut g.contact_stiffness)),
            ("geometry.contact_damping".into(), Field::F64(&mut g.contact_damping)),
            ("geometry.collision_force_limit".into(), Field::F64(&mut g.collision_force_limit)),
            ("sim.max_steps".into(), Field::U64(&mut t.sim.max_steps)),
            ("sim.effective_mass".into(), Field::F64(&mut t.sim.effective_mass)),
            ("sim.noise".into(), Field::Bool(&mut t.sim.noise)),
            ("reward.alpha1".into(), Field::F64(&mut t.reward.alpha1)),
            ("reward.alpha2".into(), Field::F64(&mut t.reward.alpha2)),
            ("reward.success".into(), Field::F64(&mut t.reward.r_success)),
            ("reward.collision".into(), Field::F64(&mut t.reward.r_collision)),
            ("reward.timeout".into(), Field::F64(&mut t.reward.r_timeout)),
            ("action.target_half_width".into(), Field::Vec3(&mut t.bounds.target_half_width)),
            ("action.kp_x_min".into(), Field::F64(&mut t.bounds.kp_x_lo)),
            ("action.kp_x_max".into(), Field::F64(&mut t.bounds.kp_x_hi)),
            ("action.kp_f_min".into(), Field::F64(&mut t.bounds.kp_f_lo)),
            ("action.kp_f_max".into(), Field::F64(&mut t.bounds.kp_f_hi)),
            ("control.selection".into(), Field::Selection(&mut t.selection)),
            ("obs.pos_scale".into(), Field::F64(&mut t.obs_scale.pos)),
            ("obs.vel_scale".into(), Field::F64(&mut t.obs_scale.vel)),
            ("obs.force_scale".into(), Field::F64(&mut t.obs_scale.force)),
            ("start.height".into(), Field::F64(&mut t.start.height)),
            ("start.side".into(), Field::F64(&mut t.start.side)),
            ("start.exclude_radius".into(), Field::F64(&mut t.start.exclude_radius)),
        ];
        embodiment_fields("A", &mut self.embodiment_a, &mut v);
        embodiment_fields("B", &mut self.embodiment_b, &mut v);
        v.extend([
            ("sac.gamma".into(), Field::F64(&mut s.gamma)),
            ("sac.polyak_tau".into(), Field::F64(&mut s.polyak_tau)),
            ("sac.lr_actor".into(), Field::F64(&mut s.lr_actor)),
            ("sac.lr_critic".into(), Field::F64(&mut s.lr_critic)),
            ("sac.lr_temp".into(), Field::F64(&mut s.lr_temp)),
            ("sac.batch_size".into(), Field::Usize(&mut s.batch_size)),
            ("sac.buffer_capacity".into(), Field::Usize(&mut s.buffer_capacity)),
            ("sac.warmup_steps".into(), Field::U64(&mut s.warmup_steps)),
            ("sac.entropy_target".into(), Field::Auto(&mut s.entropy_target)),
            ("sac.updates_per_env_step".into(), Field::Usize(&mut s.updates_per_env_step)),
            ("sac.init_log_temp".into(), Field::F64(&mut s.init_log_temp)),
            ("sac.actor_hidden".into(), Field::Sizes(&mut s.actor_hidden)),
            ("sac.critic_hidden".into(), Field::Sizes(&mut s.critic_hidden)),
            ("train.steps_a".into(), Field::U64(&mut self.budgets.train_steps_a)),
            ("train.steps_b".into(), Field::U64(&mut self.budgets.train_steps_b)),
            ("train.curve_every".into(), Field::U64(&mut self.curve_every)),
            ("train.curve_window".into(), Field::Usize(&mut self.curve_window)),
            ("finetune.steps".into(), Field::U64(&mut self.budgets.finetune_steps)),
            ("finetune.warmup_steps".into(), Field::U64(&mut self.finetune_warmup)),
            ("finetune.reset_critics".into(), Field::Bool(&mut self.finetune_reset_critics)),
            ("eval.episodes".into(), Field::Usize(&mut self.eval_episodes)),
            ("eval.noise".into(), Field::Bool(&mut self.eval_noise)),
            ("checkpoint.optimizer".into(), Field::Bool(&mut self.checkpoint_optimizer)),
            ("scenario.a_checkpoint".into(), Field::Text(&mut self.a_checkpoint)),
            ("scenario.b_checkpoint".into(), Field::Text(&mut self.b_checkpoint)),
        ]);
        v
    }

    /// All keys, in file order.
    pub fn keys() -> Vec<String> {
        Config::default().fields().into_iter().map(|(k, _)| k).collect()
    }

    pub fn is_key(key: &str) -> bool {
        Config::default().fields().iter().any(|(k, _)| k == key)
    }

    /// Replaces one key. The value is parsed per the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {value:?}"));
        let mut fields = self.fields();
        let field = fields
            .iter_mut()
            .find(|(k, _)| k == key)
            .map(|(_, f)| f)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        let num = |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite());
        match field {
            Field::F64(x) => **x = num(value).ok_or_else(|| bad("a finite number"))?,
            Field::U64(x) => **x = value.parse().map_err(|_| bad("a non-negative integer"))?,
            Field::Usize(x) => **x = value.parse().map_err(|_| bad("a non-negative integer"))?,
            Field::Bool(x) => {
                **x = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(bad("true or false")),
                }
            }
            Field::Vec3(x) => {
                let parts: Option<Vec<f64>> = value.split(',').map(num).collect();
                match parts.as_deref() {
                    Some(&[a, b, c]) => **x = Vec3::new(a, b, c),
                    _ => return Err(bad("three comma-separated numbers")),
                }
            }
            Field::Sizes(x) => {
                let parts: Option<Vec<usize>> = value.split(',').map(|p| p.trim().parse().ok()).collect();
                **x = parts.filter(|p| !p.is_empty()).ok_or_else(|| bad("comma-separated layer sizes"))?;
            }
            Field::Text(x) => **x = value.to_string(),
            Field::Auto(x) => {
                **x = if value == "auto" { None } else { Some(num(value).ok_or_else(|| bad("auto or a number"))?) }
            }
            Field::Selection(x) => {
                let parts: Option<Vec<f64>> = value.split(',').map(num).collect();
                match parts.as_deref() {
                    Some(&[a, b, c]) => **x = SelectionMatrix::new([a, b, c]).map_err(|e| bad(&e.to_string()))?,
                    _ => return Err(bad("three comma-separated numbers")),
                }
            }
        }
        Ok(())
    }

    /// Current value of every key, rendered as it would be parsed back.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut copy = self.clone();
        let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(",");
        copy.fields()
            .into_iter()
            .map(|(k, f)| {
                let v = match f {
                    Field::F64(x) => x.to_string(),
                    Field::U64(x) => x.to_string(),
                    Field::Usize(x) => x.to_string(),
                    Field::Bool(x) => x.to_string(),
                    Field::Vec3(x) => join(&mut x.to_array().iter().map(f64::to_string)),
                    Field::Sizes(x) => join(&mut x.iter().map(usize::to_string)),
                    Field::Text(x) => x.clone(),
                    Field::Auto(x) => x.map_or_else(|| "auto".to_string(), |t| t.to_string()),
                    Field::Selection(x) => join(&mut x.diag().iter().map(f64::to_string)),
                };
                (k, v)
            })
            .collect()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries().into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn embodiment(&self, id: &str) -> Result<&EmbodimentSpec> {
        match id {
            "A" => Ok(&self.embodiment_a),
            "B" => Ok(&self.embodiment_b),
            other => Err(Error::Validation(format!("unknown embodiment {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.geometry.validate()?;
        self.task.reward.validate()?;
        self.task.bounds.validate()?;
        self.embodiment_a.validate()?;
        self.embodiment_b.validate()?;
        self.sac.validate()?;
        if self.embodiment_a.id != "A" || self.embodiment_b.id != "B" {
            return Err(Error::Validation("embodiment ids must be A and B".into()));
        }
        if self.eval_episodes == 0 || self.curve_window == 0 {
            return Err(Error::Validation("eval.episodes and train.curve_window must be positive".into()));
        }
        if self.task.sim.max_steps == 0 || self.task.sim.effective_mass <= 0.0 {
            return Err(Error::Validation("sim.max_steps and sim.effective_mass must be positive".into()));
        }
        let scales = [self.task.obs_scale.pos, self.task.obs_scale.vel, self.task.obs_scale.force];
        if scales.iter().any(|s| *s <= 0.0) {
            return Err(Error::Validation("observation scales must be positive".into()));
        }
        Ok(())
    }
}
