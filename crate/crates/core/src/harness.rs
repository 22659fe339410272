//! Task-by-task continual training and evaluation.
//!
//! One run draws all randomness from a single ChaCha generator seeded with
//! `MethodConfig::seed`, in this order: weight initialisation, then per task
//! the epoch shuffles and replay draws (interleaved per mini-batch), then the
//! post-task memory update.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{LabeledDataset, TaskStream};
use crate::error::{Error, Result};
use crate::losses::{maer_loss, Batch, ReplayTerms};
use crate::memory::{EpisodicMemory, MesMode, UpdateStats};
use crate::metrics::AccuracyMatrix;
use crate::nn::{argmax, MlpModel, TeacherSnapshot, DEFAULT_HIDDEN_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Manifold expansion sampling with CE + W2 replay.
    Maer,
    ErReservoir,
    ErRing,
    /// Ablation: reservoir memory with CE + W2 replay.
    CeWd,
    /// Ablation: reservoir memory with CE replay only.
    CeOnly,
    Finetune,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryPolicy {
    ManifoldExpansion,
    Reservoir,
    Ring,
    None,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Maer,
        Method::ErReservoir,
        Method::ErRing,
        Method::CeWd,
        Method::CeOnly,
        Method::Finetune,
        Method::Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Maer => "maer",
            Method::ErReservoir => "er_reservoir",
            Method::ErRing => "er_ring",
            Method::CeWd => "ce_wd",
            Method::CeOnly => "ce_only",
            Method::Finetune => "finetune",
            Method::Joint => "joint",
        }
    }

    pub fn memory_policy(self) -> MemoryPolicy {
        match self {
            Method::Maer => MemoryPolicy::ManifoldExpansion,
            Method::ErReservoir | Method::CeWd | Method::CeOnly => MemoryPolicy::Reservoir,
            Method::ErRing => MemoryPolicy::Ring,
            Method::Finetune | Method::Joint => MemoryPolicy::None,
        }
    }

    pub fn replay_terms(self) -> ReplayTerms {
        match self {
            Method::Maer | Method::CeWd => ReplayTerms::FULL,
            Method::ErReservoir | Method::ErRing | Method::CeOnly => ReplayTerms::CE_ONLY,
            Method::Finetune | Method::Joint => ReplayTerms::NONE,
        }
    }

    pub fn uses_memory(self) -> bool {
        self.memory_policy() != MemoryPolicy::None
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown method '{s}'; valid methods: {}", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub mem_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub replay_batch_size: usize,
    pub seed: u64,
    pub mes_mode: MesMode,
    pub hidden_width: usize,
    /// Restrict the arg-max at test time to the classes of the evaluated task.
    pub task_aware_eval: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            method: Method::Maer,
            mem_size: 100,
            epochs: 10,
            lr: 0.01,
            batch_size: 16,
            replay_batch_size: 16,
            seed: 0,
            mes_mode: MesMode::Exact,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            task_aware_eval: false,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.method.uses_memory() && self.mem_size == 0 {
            return Err(Error::Config(format!(
                "method {} needs a memory size of at least 1",
                self.method
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if self.hidden_width == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean loss terms over one epoch of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub task: usize,
    pub epoch: usize,
    pub ce_current: f64,
    /// `NaN` when no replay batch was drawn in this epoch.
    pub ce_replay: f64,
    pub distill: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub matrix: AccuracyMatrix,
    pub memory: EpisodicMemory,
    pub losses: Vec<LossRecord>,
    pub memory_updates: Vec<UpdateStats>,
    pub model: MlpModel,
}

#[derive(Default)]
struct Running {
    n: usize,
    ce: f64,
    total: f64,
    replay_n: usize,
    ce_replay: f64,
    distill_n: usize,
    distill: f64,
}

impl Running {
    fn record(&self, task: usize, epoch: usize) -> LossRecord {
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        LossRecord {
            task,
            epoch,
            ce_current: mean(self.ce, self.n),
            ce_replay: mean(self.ce_replay, self.replay_n),
            distill: mean(self.distill, self.distill_n),
            total: mean(self.total, self.n),
        }
    }
}

/// Trains on one task's data for `cfg.epochs` epochs of shuffled mini-batches,
/// replaying one memory batch per current batch when the buffer is non-empty.
pub fn train_task(
    model: &mut MlpModel,
    teacher: Option<&TeacherSnapshot>,
    task: &LabeledDataset,
    task_id: usize,
    memory: &EpisodicMemory,
    cfg: &MethodConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    let terms = cfg.method.replay_terms();
    let mut order: Vec<usize> = (0..task.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut run = Running::default();
        for chunk in order.chunks(cfg.batch_size) {
            let inputs = task.inputs().select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| task.labels()[i]).collect();
            let replay = if terms.any() {
                memory.sample_batch(cfg.replay_batch_size, rng)
            } else {
                None
            };
            let out = maer_loss(
                model,
                teacher,
                Batch {
                    inputs: &inputs,
                    labels: &labels,
                },
                replay.as_ref().map(|r| r.as_batch()),
                terms,
            )?;
            model.sgd_step(&out.grads, cfg.lr)?;
            run.n += 1;
            run.ce += out.ce_current;
            run.total += out.total;
            if let Some(v) = out.ce_replay {
                run.replay_n += 1;
                run.ce_replay += v;
            }
            if let Some(v) = out.distill {
                run.distill_n += 1;
                run.distill += v;
            }
        }
        records.push(run.record(task_id, epoch));
    }
    Ok(records)
}

/// Fraction of test samples whose arg-max logit equals the label.
/// Ties go to the lowest class index.
pub fn evaluate(model: &MlpModel, test: &LabeledDataset) -> Result<f64> {
    evaluate_restricted(model, test, None)
}

/// As [`evaluate`], optionally restricting the arg-max to `classes`.
pub fn evaluate_restricted(model: &MlpModel, test: &LabeledDataset, classes: Option<&[usize]>) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty test set".into()));
    }
    let logits = model.logits(test.inputs())?;
    let correct = (0..test.len())
        .filter(|&i| {
            let row = logits.row(i);
            let pred = match classes {
                Some(cs) if !cs.is_empty() => {
                    let sub: Vec<f64> = cs.iter().map(|&c| row[c]).collect();
                    cs[argmax(&sub)]
                }
                _ => argmax(row),
            };
            pred == test.labels()[i]
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

fn update_memory(
    memory: &mut EpisodicMemory,
    model: &MlpModel,
    data: &LabeledDataset,
    task_id: usize,
    tasks: usize,
    cfg: &MethodConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    match cfg.method.memory_policy() {
        MemoryPolicy::ManifoldExpansion => memory.mes_update(data, task_id, model, rng, cfg.mes_mode),
        MemoryPolicy::Reservoir => Ok(memory.reservoir_update(data, task_id, rng)),
        MemoryPolicy::Ring => memory.ring_update(data, task_id, cfg.mem_size / tasks),
        MemoryPolicy::None => Ok(UpdateStats::default()),
    }
}

/// Runs the whole stream under `cfg` and records the accuracy matrix.
///
/// For each task: snapshot the teacher (from the second task on), train,
/// update the memory with the task's training data using the post-training
/// feature extractor, then evaluate on every task seen so far. `Joint`
/// instead trains once on the union of all tasks and fills only the last row.
pub fn run_continual(stream: &TaskStream, cfg: &MethodConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let t = stream.len();
    if t == 0 {
        return Err(Error::Input("empty task stream".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::new(stream.input_width(), cfg.hidden_width, stream.num_classes(), &mut rng)?;
    let mut memory = EpisodicMemory::new(if cfg.method.uses_memory() { cfg.mem_size } else { 0 });
    let mut matrix = AccuracyMatrix::new(t);
    let mut losses = Vec::new();
    let mut memory_updates = Vec::new();
    let class_sets: Vec<Vec<usize>> = (0..t).map(|j| stream.task_classes(j)).collect();
    let eval = |model: &MlpModel, j: usize| {
        let classes = cfg.task_aware_eval.then(|| class_sets[j].as_slice());
        evaluate_restricted(model, &stream.tasks[j].test, classes)
    };

    if cfg.method == Method::Joint {
        let union = LabeledDataset::concat(stream.tasks.iter().map(|task| &task.train))?;
        losses = train_task(&mut model, None, &union, t - 1, &memory, cfg, &mut rng)?;
        for j in 0..t {
            matrix.record(t - 1, j, eval(&model, j)?)?;
        }
    } else {
        for (i, task) in stream.tasks.iter().enumerate() {
            let teacher = (i > 0).then(|| model.snapshot());
            losses.extend(train_task(
                &mut model,
                teacher.as_ref(),
                &task.train,
                i,
                &memory,
                cfg,
                &mut rng,
            )?);
            memory_updates.push(update_memory(&mut memory, &model, &task.train, i, t, cfg, &mut rng)?);
            for j in 0..=i {
                matrix.record(i, j, eval(&model, j)?)?;
            }
        }
    }
    Ok(RunOutput {
        matrix,
        memory,
        losses,
        memory_updates,
        model,
    })
}
