use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_dataset, Action, Dataset, Hyperparams, Transition};
use crate::gaps::GapFeatures;
use crate::neural::{soft_update, Adam, Architecture, DeepSetQNet, ModelFile, ModelKind, QTape};
use crate::{Error, Result};

pub const LOG_CSV_HEADER: &str = "step,loss,mean_abs_q";

const SAMPLER_SALT: u64 = 0x6d69_6e69_6261_7463;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub mean_abs_q: f64,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{}", self.step, self.loss, self.mean_abs_q)
    }
}

/// Online network, two targets, optimizer and minibatch sampler.
#[derive(Debug, Clone)]
pub struct Learner {
    pub kind: ModelKind,
    pub online: DeepSetQNet,
    pub targets: [DeepSetQNet; 2],
    pub opt: Adam,
    pub hp: Hyperparams,
    pub seed: u64,
    pub steps_done: u64,
    sampler: ChaCha8Rng,
    grads: Vec<f64>,
    tape: QTape,
}

pub fn architecture_for(kind: ModelKind) -> Architecture {
    match kind {
        ModelKind::Options => Architecture::options(),
        ModelKind::HighLevel => Architecture::high_level(),
    }
}

/// Fresh learner. The online net and both targets get independent seeded initializations.
pub fn init_learner(kind: ModelKind, hp: Hyperparams, seed: u64) -> Result<Learner> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = architecture_for(kind);
    let online = DeepSetQNet::new(arch.clone(), &mut rng)?;
    let targets = [
        DeepSetQNet::new(arch.clone(), &mut rng)?,
        DeepSetQNet::new(arch, &mut rng)?,
    ];
    let n = online.param_count();
    Ok(Learner {
        kind,
        opt: Adam::new(n, hp.learning_rate),
        online,
        targets,
        hp,
        seed,
        steps_done: 0,
        sampler: ChaCha8Rng::seed_from_u64(seed ^ SAMPLER_SALT),
        grads: vec![0.0; n],
        tape: QTape::default(),
    })
}

impl Learner {
    pub fn from_model(model: ModelFile, hp: Hyperparams) -> Result<Self> {
        let mut l = init_learner(model.kind, hp, model.seed)?;
        l.online = model.online;
        l.targets = model.targets;
        l.steps_done = model.training_steps;
        Ok(l)
    }

    pub fn to_model(&self) -> ModelFile {
        let mut m = ModelFile::new(
            self.kind,
            self.seed,
            self.online.clone(),
            self.targets.clone(),
        );
        m.training_steps = self.steps_done;
        m
    }

    /// One minibatch update; returns `(loss, mean |Q|)` before the update.
    pub fn step(&mut self, buffer: &[Transition]) -> Result<(f64, f64)> {
        train_step(buffer, self)
    }
}

fn gap_input(g: &GapFeatures) -> [f64; 5] {
    g.network_input()
}

/// Bootstrapped value of the next state: max over recorded candidates of the
/// smaller of the two target estimates.
fn next_value(t: &Transition, targets: &[DeepSetQNet; 2]) -> Result<f64> {
    let next = &t.next_state;
    match &t.action {
        Action::Gap { .. } => {
            let enc = [
                targets[0].encode(&next.dynamic),
                targets[1].encode(&next.dynamic),
            ];
            let mut best = f64::NEG_INFINITY;
            for g in &t.next_gap_candidates {
                let x = gap_input(g);
                let a = targets[0].head(&enc[0], &next.static_features, &x)?[0];
                let b = targets[1].head(&enc[1], &next.static_features, &x)?[0];
                best = best.max(a.min(b));
            }
            Ok(best)
        }
        Action::Manoeuvre(_) => {
            let a = targets[0].forward(&next.dynamic, &next.static_features, &[])?;
            let b = targets[1].forward(&next.dynamic, &next.static_features, &[])?;
            Ok(t.next_valid_actions
                .iter()
                .map(|m| a[m.index()].min(b[m.index()]))
                .fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// Regression targets `r + gamma * max_g min(Q'1, Q'2)`; terminal steps use `r`.
pub fn compute_targets(
    batch: &[&Transition],
    targets: &[DeepSetQNet; 2],
    gamma: f64,
    discount_by_duration: bool,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward);
            }
            let discount = if discount_by_duration {
                gamma.powf(t.duration)
            } else {
                gamma
            };
            Ok(t.reward + discount * next_value(t, targets)?)
        })
        .collect()
}

/// Samples a minibatch without replacement, takes one Adam step on the mean
/// squared error, then soft-updates both targets.
pub fn train_step(buffer: &[Transition], learner: &mut Learner) -> Result<(f64, f64)> {
    let b = learner.hp.batch_size;
    if buffer.len() < b {
        return Err(Error::BufferTooSmall {
            len: buffer.len(),
            batch: b,
        });
    }
    let picks = sample(&mut learner.sampler, buffer.len(), b);
    let batch: Vec<&Transition> = picks.iter().map(|i| &buffer[i]).collect();
    let ys = compute_targets(
        &batch,
        &learner.targets,
        learner.hp.gamma,
        learner.hp.discount_by_duration,
    )?;
    learner.grads.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut abs_q = 0.0;
    let outputs = learner.online.architecture().outputs;
    let mut grad_out = vec![0.0; outputs];
    for (t, y) in batch.iter().zip(&ys) {
        let (gap, slot) = match &t.action {
            Action::Gap { features, .. } => (gap_input(features).to_vec(), 0),
            Action::Manoeuvre(m) => (Vec::new(), m.index()),
        };
        let out = learner.online.forward_tape(
            &t.state.dynamic,
            &t.state.static_features,
            &gap,
            &mut learner.tape,
        )?;
        let q = out[slot];
        let err = q - y;
        loss += err * err;
        abs_q += q.abs();
        grad_out.iter_mut().for_each(|g| *g = 0.0);
        grad_out[slot] = 2.0 * err / b as f64;
        learner
            .online
            .backward(&learner.tape, &grad_out, &mut learner.grads);
    }
    learner.opt.apply(learner.online.params_mut(), &learner.grads)?;
    for target in learner.targets.iter_mut() {
        soft_update(target, &learner.online, learner.hp.tau)?;
    }
    learner.steps_done += 1;
    Ok((loss / b as f64, abs_q / b as f64))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub log: Vec<LogRow>,
}

/// Runs `hp.training_steps` updates; `on_progress` sees each log row and the learner.
pub fn train<F>(dataset: &Dataset, hp: &Hyperparams, seed: u64, mut on_progress: F) -> Result<TrainOutcome>
where
    F: FnMut(&Learner, &LogRow) -> Result<()>,
{
    let kind = dataset
        .kind()
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
    let mut learner = init_learner(kind, hp.clone(), seed)?;
    if hp.training_steps > 0 && dataset.len() < hp.batch_size {
        return Err(Error::BufferTooSmall {
            len: dataset.len(),
            batch: hp.batch_size,
        });
    }
    let mut log = Vec::new();
    for step in 1..=hp.training_steps {
        let (loss, mean_abs_q) = learner.step(&dataset.transitions)?;
        if step % hp.log_every.max(1) == 0 || step == hp.training_steps {
            let row = LogRow {
                step,
                loss,
                mean_abs_q,
            };
            on_progress(&learner, &row)?;
            log.push(row);
        }
    }
    Ok(TrainOutcome {
        model: learner.to_model(),
        log,
    })
}

/// File-level training: reads the dataset, writes the model, CSV log and periodic checkpoints.
pub fn train_files(
    dataset_path: &Path,
    model_path: &Path,
    log_path: &Path,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainOutcome> {
    let dataset = read_dataset(dataset_path)?;
    let ckpt = model_path.with_extension("ckpt.json");
    let every = hp.checkpoint_every;
    let outcome = train(&dataset, hp, seed, |learner, row| {
        if every > 0 && row.step % every == 0 {
            learner.to_model().save(&ckpt)?;
        }
        Ok(())
    })?;
    outcome.model.save(model_path)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(log_path)?);
    writeln!(f, "{LOG_CSV_HEADER}")?;
    for row in &outcome.log {
        writeln!(f, "{}", row.to_csv())?;
    }
    f.flush()?;
    Ok(outcome)
}
