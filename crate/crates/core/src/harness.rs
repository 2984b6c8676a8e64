//! Scenario harness: scratch training, zero-shot evaluation and fine-tuning
//! across embodiments, evaluated on a fixed start grid.

use std::path::{Component, Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::action::ACTION_DIM;
use crate::checkpoint::PolicyCheckpoint;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::{EpisodeRecord, SummaryStats};
use crate::sac::SacAgent;
use crate::sim::{EmbodimentSpec, TerminalReason, OBS_DIM};
use crate::task::{Environment, PegTask, TaskConfig};
use crate::train::{train, CurvePoint, TrainOptions, TrainReport};
use crate::vec3::Vec3;

/// Independent 64-bit seed for `stream` under `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_CRITIC_RESET: u64 = 3;
const STREAM_EVAL: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub starts: Vec<Vec3>,
    pub seeds: Vec<u64>,
}

impl EvalGrid {
    /// The first `episodes` points of the smallest square grid holding them;
    /// 100 episodes give the full 10 × 10 grid.
    pub fn new(task: &TaskConfig, episodes: usize, base_seed: u64) -> Self {
        let side = (1..).find(|s| s * s >= episodes).unwrap_or(1);
        let mut starts = task.start.grid(task.geometry.hole_center, side);
        starts.truncate(episodes);
        let seeds = (0..episodes as u64).map(|i| derive_seed(base_seed, STREAM_EVAL + i)).collect();
        Self { starts, seeds }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Runs one deterministic-policy episode per grid entry.
pub fn evaluate(
    ckpt: &PolicyCheckpoint,
    config: &Config,
    embodiment: &EmbodimentSpec,
    grid: &EvalGrid,
    scenario_id: u32,
) -> Result<Vec<EpisodeRecord>> {
    ckpt.check_architecture(&config.sac, OBS_DIM, ACTION_DIM)?;
    let mut task_cfg = config.task.clone();
    task_cfg.sim.noise = config.eval_noise;
    let mut task = PegTask::new(task_cfg, embodiment.clone())?;
    let actor = &ckpt.actor;
    let mut records = Vec::with_capacity(grid.len());
    for (i, (&start, &seed)) in grid.starts.iter().zip(&grid.seeds).enumerate() {
        let mut obs = task.reset_at(start, seed)?;
        let mut total = 0.0;
        let mut steps = 0;
        let terminal = loop {
            let action = crate::sac::deterministic_action(actor, &obs)?;
            let out = task.step(&action)?;
            total += out.reward;
            steps += 1;
            obs = out.obs;
            if out.reason.is_terminal() {
                break out.reason;
            }
        };
        records.push(EpisodeRecord {
            episode_id: i as u64,
            scenario_id,
            seed,
            success: terminal == TerminalReason::Success,
            steps,
            terminal,
            cumulative_reward: total,
        });
    }
    Ok(records)
}

fn train_options(config: &Config, steps: u64, warmup: u64, seed: u64) -> TrainOptions {
    TrainOptions {
        total_steps: steps,
        warmup_steps: warmup,
        seed: derive_seed(seed, STREAM_TRAIN),
        curve_every: config.curve_every,
        window: config.curve_window,
    }
}

/// Trains a fresh agent on `embodiment` for `steps` agent steps.
pub fn train_scratch(
    config: &Config,
    embodiment: &EmbodimentSpec,
    steps: u64,
    seed: u64,
) -> Result<(PolicyCheckpoint, TrainReport)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT));
    let mut agent = SacAgent::new(OBS_DIM, ACTION_DIM, config.sac.clone(), &mut rng)?;
    let mut task = PegTask::new(config.task.clone(), embodiment.clone())?;
    let report = train(&mut agent, &mut task, &train_options(config, steps, config.sac.warmup_steps, seed))?;
    let ckpt = PolicyCheckpoint::from_agent(&agent, &embodiment.id, steps, seed, config.checkpoint_optimizer);
    Ok((ckpt, report))
}

/// Resumes training of `ckpt` on `target` with warm-started networks, a fresh
/// replay buffer and a fresh random warmup.
pub fn finetune(
    ckpt: &PolicyCheckpoint,
    config: &Config,
    target: &EmbodimentSpec,
    steps: u64,
    seed: u64,
) -> Result<(PolicyCheckpoint, TrainReport)> {
    config.validate()?;
    let mut agent = ckpt.to_agent(&config.sac)?;
    if config.finetune_reset_critics {
        agent.reset_critics(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_CRITIC_RESET)))?;
    }
    let mut task = PegTask::new(config.task.clone(), target.clone())?;
    let report = train(&mut agent, &mut task, &train_options(config, steps, config.finetune_warmup, seed))?;
    let out = PolicyCheckpoint::from_agent(&agent, &target.id, ckpt.train_steps + steps, seed, config.checkpoint_optimizer);
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Scratch,
    ZeroShot,
    Finetune,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Scratch => "scratch",
            Mode::ZeroShot => "zero_shot",
            Mode::Finetune => "finetune",
        }
    }
}

/// `(id, mode, policy source embodiment, evaluation embodiment)`.
pub const SCENARIO_TABLE: [(u32, Mode, &str, &str); 5] = [
    (1, Mode::Scratch, "A", "A"),
    (2, Mode::Scratch, "B", "B"),
    (3, Mode::ZeroShot, "A", "B"),
    (4, Mode::ZeroShot, "B", "A"),
    (5, Mode::Finetune, "A", "B"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub id: u32,
    pub mode: Mode,
    /// Embodiment trained on (scratch) or that produced the loaded checkpoint.
    pub source_embodiment: &'static str,
    pub eval_embodiment: &'static str,
    pub train_steps: u64,
    pub finetune_steps: u64,
}

impl ScenarioSpec {
    pub fn from_id(id: u32, config: &Config) -> Result<Self> {
        let &(id, mode, source, eval) = SCENARIO_TABLE
            .iter()
            .find(|row| row.0 == id)
            .ok_or_else(|| Error::Validation(format!("scenario id {id} not in 1..=5")))?;
        let train_steps = match (mode, source) {
            (Mode::Scratch, "A") => config.budgets.train_steps_a,
            (Mode::Scratch, _) => config.budgets.train_steps_b,
            _ => 0,
        };
        let finetune_steps = if mode == Mode::Finetune { config.budgets.finetune_steps } else { 0 };
        Ok(Self { id, mode, source_embodiment: source, eval_embodiment: eval, train_steps, finetune_steps })
    }

    /// Checkpoint this scenario loads, if any, resolved against `out_dir`.
    ///
    /// `..` is resolved lexically so the path is valid before `out_dir` exists.
    pub fn prerequisite(&self, config: &Config, out_dir: &Path) -> Option<PathBuf> {
        if self.mode == Mode::Scratch {
            return None;
        }
        let rel = if self.source_embodiment == "A" { &config.a_checkpoint } else { &config.b_checkpoint };
        let mut path = PathBuf::new();
        for part in out_dir.join(rel).components() {
            match part {
                Component::ParentDir if matches!(path.components().next_back(), Some(Component::Normal(_))) => {
                    path.pop();
                }
                Component::CurDir => {}
                other => path.push(other),
            }
        }
        Some(path)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub spec: ScenarioSpec,
    pub summary: SummaryStats,
    pub records: Vec<EpisodeRecord>,
    /// Training curve, for modes that train.
    pub curve: Option<Vec<CurvePoint>>,
    /// Trained checkpoint, for modes that train.
    pub checkpoint: Option<PolicyCheckpoint>,
}

/// Loads a prerequisite checkpoint; a missing file is a dependency error.
pub fn load_prerequisite(path: &Path) -> Result<PolicyCheckpoint> {
    if !path.is_file() {
        return Err(Error::Dependency(path.to_path_buf()));
    }
    PolicyCheckpoint::load(path)
}

pub fn run_scenario(spec: &ScenarioSpec, config: &Config, base_seed: u64, out_dir: &Path) -> Result<ScenarioOutcome> {
    config.validate()?;
    let source = config.embodiment(spec.source_embodiment)?;
    let eval_emb = config.embodiment(spec.eval_embodiment)?;
    let (ckpt, curve, trained) = match spec.mode {
        Mode::Scratch => {
            let (ck, rep) = train_scratch(config, source, spec.train_steps, base_seed)?;
            (ck, Some(rep.curve), true)
        }
        Mode::ZeroShot | Mode::Finetune => {
            let path = spec.prerequisite(config, out_dir).expect("non-scratch modes load a checkpoint");
            let loaded = load_prerequisite(&path)?;
            loaded.check_architecture(&config.sac, OBS_DIM, ACTION_DIM)?;
            if loaded.embodiment != spec.source_embodiment {
                return Err(Error::Validation(format!(
                    "{} holds a policy for embodiment {}, scenario {} needs {}",
                    path.display(),
                    loaded.embodiment,
                    spec.id,
                    spec.source_embodiment
                )));
            }
            if spec.mode == Mode::ZeroShot {
                (loaded, None, false)
            } else {
                let (ck, rep) = finetune(&loaded, config, eval_emb, spec.finetune_steps, base_seed)?;
                (ck, Some(rep.curve), true)
            }
        }
    };
    let grid = EvalGrid::new(&config.task, config.eval_episodes, base_seed);
    let records = evaluate(&ckpt, config, eval_emb, &grid, spec.id)?;
    Ok(ScenarioOutcome {
        spec: spec.clone(),
        summary: SummaryStats::from_records(&records)?,
        records,
        curve,
        checkpoint: trained.then_some(ckpt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_scenario_definitions() {
        let c = Config::default();
        let rows: Vec<_> = (1..=5)
            .map(|id| {
                let s = ScenarioSpec::from_id(id, &c).unwrap();
                (s.mode, s.source_embodiment, s.eval_embodiment)
            })
            .collect();
        assert_eq!(
            rows,
            vec![
                (Mode::Scratch, "A", "A"),
                (Mode::Scratch, "B", "B"),
                (Mode::ZeroShot, "A", "B"),
                (Mode::ZeroShot, "B", "A"),
                (Mode::Finetune, "A", "B"),
            ]
        );
        assert!(ScenarioSpec::from_id(0, &c).is_err());
        assert!(ScenarioSpec::from_id(6, &c).is_err());
        assert_eq!(ScenarioSpec::from_id(5, &c).unwrap().finetune_steps, c.budgets.finetune_steps);
    }

    #[test]
    fn prerequisite_resolves_parent_lexically() {
        let c = Config::default();
        let s3 = ScenarioSpec::from_id(3, &c).unwrap();
        assert_eq!(s3.prerequisite(&c, Path::new("runs/scenario3")).unwrap(), PathBuf::from("runs/scenario1/checkpoint.json"));
        let s4 = ScenarioSpec::from_id(4, &c).unwrap();
        assert_eq!(s4.prerequisite(&c, Path::new("/r/./s4")).unwrap(), PathBuf::from("/r/scenario2/checkpoint.json"));
        assert_eq!(s4.prerequisite(&c, Path::new("s4")).unwrap(), PathBuf::from("scenario2/checkpoint.json"));
        assert!(ScenarioSpec::from_id(1, &c).unwrap().prerequisite(&c, Path::new("x")).is_none());
    }

    #[test]
    fn grid_shape_and_seeds() {
        let c = Config::default();
        let g = EvalGrid::new(&c.task, 100, 42);
        assert_eq!(g.len(), 100);
        assert_eq!(g, EvalGrid::new(&c.task, 100, 42));
        assert_ne!(g.seeds, EvalGrid::new(&c.task, 100, 43).seeds);
        let mut s = g.seeds.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 100);
        for p in &g.starts {
            assert!(p.within(c.embodiment_a.workspace_lo, c.embodiment_a.workspace_hi));
            assert!(p.within(c.embodiment_b.workspace_lo, c.embodiment_b.workspace_hi));
        }
        assert_eq!(EvalGrid::new(&c.task, 7, 0).len(), 7);
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
