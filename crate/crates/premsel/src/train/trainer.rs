//! The optimization loop and the evaluation pass.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{self, CheckpointError};
use crate::config::RunConfig;
use crate::encoder::TrainCtx;
use crate::graph::FileGraph;
use crate::model::{HoleSelection, ModelError, PremiseModel};
use crate::optim::{adamw_step, OptimError, OptimizerState};
use crate::tensor::{no_grad, Scalar, TensorError};

use super::loss::info_nce_loss;
use super::metrics::{self, StandardizedScores};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("the training corpus is empty")]
    EmptyCorpus,
    #[error("loss became non-finite at step {step} (file `{file}`); aborting")]
    NonFiniteLoss { step: u64, file: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Per-hole evaluation record: the full ranked candidate list, the positive
/// set, and the two ranking metrics (absent when the hole has no positives).
#[derive(Debug, Clone, serde::Serialize)]
pub struct HoleReport {
    pub file: String,
    pub hole: String,
    pub hole_index: u32,
    /// `(ordinal, score)` by descending score; ties break by ordinal.
    pub ranking: Vec<(u32, f64)>,
    pub positives: Vec<u32>,
    pub average_precision: Option<f64>,
    pub r_precision: Option<f64>,
}

/// Evaluation over a file set: per-hole details plus aggregates.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RankingReport {
    pub holes: Vec<HoleReport>,
    pub avep_mean: f64,
    pub r_prec_mean: f64,
    /// Holes entering the aggregates.
    pub scored_holes: usize,
    /// Holes with no causally legal positive label.
    pub skipped_no_positives: usize,
    /// Holes with no candidates at all (owner is the first entry).
    pub skipped_no_candidates: usize,
    /// Standardization over every legal pair score of the set; absent when
    /// the scores are degenerate.
    pub standardized: Option<StandardizedScores>,
}

impl RankingReport {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            avep: self.avep_mean,
            r_prec: self.r_prec_mean,
            scored_holes: self.scored_holes,
            skipped_holes: self.skipped_no_positives + self.skipped_no_candidates,
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EvalSummary {
    pub avep: f64,
    pub r_prec: f64,
    pub scored_holes: usize,
    pub skipped_holes: usize,
}

/// One line of the training log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: u64,
    pub mean_loss: f64,
    pub eval: Option<EvalSummary>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub steps: u64,
    pub best_epoch: Option<usize>,
    pub best_eval_avep: Option<f64>,
    pub checkpoints: Vec<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Scores every hole of every file and computes the ranking metrics.
pub fn evaluate<E: Scalar>(
    model: &PremiseModel<E>,
    files: &[&FileGraph],
) -> Result<RankingReport, TrainError> {
    no_grad(|| {
        let mut holes = Vec::new();
        let mut aveps = Vec::new();
        let mut rprecs = Vec::new();
        let mut skipped_no_positives = 0usize;
        let mut skipped_no_candidates = 0usize;
        let mut all_scores = Vec::new();
        let mut all_labels = Vec::new();

        for graph in files {
            let encoding = model.encode_file(graph, HoleSelection::All, None)?;
            skipped_no_candidates += graph
                .hole_entry_indices()
                .filter(|&i| graph.entries[i].ordinal == 0)
                .count();
            let scored = model.score_holes(graph, &encoding, graph.hole_entry_indices())?;
            for hole in scored {
                let entry = &graph.entries[hole.entry_index];
                let scores: Vec<f64> = hole.scores.data().iter().map(|v| v.as_f64()).collect();
                let order = metrics::rank_by_score(&scores);
                let positives: BTreeSet<usize> = hole.positives.iter().copied().collect();
                for (i, &s) in scores.iter().enumerate() {
                    all_scores.push(s);
                    all_labels.push(positives.contains(&i));
                }
                let (avep, rprec) = if positives.is_empty() {
                    skipped_no_positives += 1;
                    (None, None)
                } else {
                    let avep = metrics::average_precision(&order, &positives)
                        .expect("positives checked non-empty");
                    let rprec = metrics::r_precision(&order, &positives)
                        .expect("positives checked non-empty");
                    aveps.push(avep);
                    rprecs.push(rprec);
                    (Some(avep), Some(rprec))
                };
                holes.push(HoleReport {
                    file: graph.name.clone(),
                    hole: entry.name.clone(),
                    hole_index: entry.hole_index.expect("scored entries are holes"),
                    ranking: order.iter().map(|&i| (i as u32, scores[i])).collect(),
                    positives: entry.positives.clone(),
                    average_precision: avep,
                    r_precision: rprec,
                });
            }
        }

        let mean = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        Ok(RankingReport {
            avep_mean: mean(&aveps),
            r_prec_mean: mean(&rprecs),
            scored_holes: aveps.len(),
            skipped_no_positives,
            skipped_no_candidates,
            standardized: metrics::standardize_scores(&all_scores, &all_labels).ok(),
            holes,
        })
    })
}

/// Runs the training loop: shuffled files, sampled holes, one optimizer
/// step per file, an evaluation and a checkpoint per epoch.
pub fn train<E: Scalar>(
    model: &mut PremiseModel<E>,
    train_files: &[&FileGraph],
    eval_files: &[&FileGraph],
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    if train_files.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let schedule = cfg.lr_schedule();
    let snapshot = serde_json::to_string(cfg).expect("run config serializes");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut state = OptimizerState::new(cfg.optim.clone(), &model.param_tensors());

    let mut outcome = TrainOutcome {
        logs: Vec::new(),
        steps: 0,
        best_epoch: None,
        best_eval_avep: None,
        checkpoints: Vec::new(),
        best_checkpoint: None,
    };
    let files_per_epoch = train_files.len();
    let mut done = false;

    for epoch in 0..cfg.train.epochs {
        let mut order: Vec<usize> = (0..train_files.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for (pos, &fi) in order.iter().enumerate() {
            if cfg
                .train
                .max_steps
                .is_some_and(|max| outcome.steps >= max)
            {
                done = true;
                break;
            }
            let graph = train_files[fi];
            let hole_entries: Vec<usize> = graph.hole_entry_indices().collect();
            if hole_entries.is_empty() {
                continue;
            }
            let k = cfg.train.batch_holes.min(hole_entries.len());
            let picked = rand::seq::index::sample(&mut rng, hole_entries.len(), k);
            let chosen: BTreeSet<usize> = picked.iter().map(|i| hole_entries[i]).collect();

            let mut ctx = TrainCtx {
                rng: &mut rng,
                dropout: cfg.train.dropout,
            };
            let encoding =
                model.encode_file(graph, HoleSelection::Subset(&chosen), Some(&mut ctx))?;
            let scored = model.score_holes(graph, &encoding, chosen.iter().copied())?;
            let (loss, report) = info_nce_loss(&scored)?;
            if !report.total.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step: outcome.steps,
                    file: graph.name.clone(),
                });
            }
            let grads = loss.backward()?;
            let params = model.param_tensors();
            let grad_vecs: Vec<Vec<E>> =
                params.iter().map(|p| grads.get_or_zeros(p)).collect();
            drop(grads);
            drop(loss);
            let lr = schedule.at(epoch as f64 + pos as f64 / files_per_epoch as f64);
            let updated = adamw_step(&params, &grad_vecs, &mut state, lr)?;
            model.set_parameters(updated)?;

            outcome.steps += 1;
            epoch_loss += report.total;
            epoch_batches += 1;
        }

        let eval = if eval_files.is_empty() {
            None
        } else {
            Some(evaluate(model, eval_files)?.summary())
        };
        let log = EpochLog {
            epoch,
            steps: outcome.steps,
            mean_loss: if epoch_batches == 0 {
                f64::NAN
            } else {
                epoch_loss / epoch_batches as f64
            },
            eval,
        };
        on_epoch(&log);

        if let Some(dir) = &cfg.train.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let path = dir.join(format!("epoch_{epoch:04}.ckpt"));
            checkpoint::save(&path, &snapshot, &model.parameters())?;
            outcome.checkpoints.push(path.clone());

            let is_best = match (eval.map(|e| e.avep), outcome.best_eval_avep) {
                (Some(avep), Some(best)) => avep > best,
                (Some(avep), None) => avep.is_finite(),
                (None, _) => false,
            };
            if is_best {
                outcome.best_eval_avep = eval.map(|e| e.avep);
                outcome.best_epoch = Some(epoch);
                let best = dir.join("best.ckpt");
                std::fs::copy(&path, &best).map_err(|source| CheckpointError::Io {
                    path: best.display().to_string(),
                    source,
                })?;
                outcome.best_checkpoint = Some(best);
            }
        } else if let Some(e) = eval {
            if outcome
                .best_eval_avep
                .is_none_or(|best| e.avep > best)
            {
                outcome.best_eval_avep = Some(e.avep);
                outcome.best_epoch = Some(epoch);
            }
        }

        outcome.logs.push(log);
        if done {
            break;
        }
    }
    Ok(outcome)
}
