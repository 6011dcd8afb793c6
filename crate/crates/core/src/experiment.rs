//! Batch-size sweeps over a fixed split.

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSplit;
use crate::eval::{self, EvalError, FixedFunctionReport, MetricsReport};
use crate::trainer::{self, prepare_records, EpochRecord, TrainError, TrainingConfig};

pub const DEFAULT_BATCH_SIZES: &[usize] = &[1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub batch_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_f1: f64,
    pub test: MetricsReport,
    pub fixed_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub row: SweepRow,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("batch size {batch_size}: {source}")]
    Train {
        batch_size: usize,
        #[source]
        source: TrainError,
    },
    #[error("batch size {batch_size}: {source}")]
    Eval {
        batch_size: usize,
        #[source]
        source: EvalError,
    },
}

/// Trains once per batch size with everything else held fixed and scores
/// each best checkpoint on the test split.
pub fn batch_size_sweep(base: &TrainingConfig, split: &CorpusSplit, sizes: &[usize]) -> Result<Vec<SweepRun>, SweepError> {
    sizes
        .iter()
        .map(|&batch_size| {
            let cfg = TrainingConfig {
                batch_size,
                ..base.clone()
            };
            let train_err = |source| SweepError::Train { batch_size, source };
            let eval_err = |source| SweepError::Eval { batch_size, source };
            let out = trainer::train(&cfg, split).map_err(train_err)?;
            let test = prepare_records(out.model.tokenizer(), &split.test).map_err(train_err)?;
            let scored = trainer::evaluate_records(&out.model, &out.head, &test, cfg.threshold).map_err(train_err)?;
            let (report, _) = eval::compute_metrics(&scored).map_err(eval_err)?;
            let vulnerable: Vec<_> = split.test.iter().filter(|r| r.fixed_code.is_some()).cloned().collect();
            let fixed_accuracy = if vulnerable.is_empty() {
                None
            } else {
                let FixedFunctionReport { accuracy, .. } =
                    eval::evaluate_fixed_functions(&out.model, &out.head, &vulnerable, cfg.threshold).map_err(eval_err)?;
                Some(accuracy)
            };
            Ok(SweepRun {
                row: SweepRow {
                    batch_size,
                    epochs_run: out.history.len(),
                    best_epoch: out.best_epoch,
                    best_valid_f1: out.best_valid_f1,
                    test: report,
                    fixed_accuracy,
                },
                history: out.history,
            })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Plain-text summary, one row per batch size.
pub fn summary_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("batch_size\tepochs\tbest_epoch\tvalid_f1\ttest_f1\ttest_pr_auc\tfixed_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.4}\t{}\t{}\t{}\n",
            r.batch_size,
            r.epochs_run,
            r.best_epoch,
            r.best_valid_f1,
            cell(r.test.f1),
            cell(r.test.pr_auc),
            cell(r.fixed_accuracy)
        ));
    }
    out
}
