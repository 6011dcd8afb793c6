//! Fixtures shared by the benchmarks.

use contravul::encoder::EmbeddingVector;
use contravul::synthetic::{generate, SyntheticConfig};
use contravul::trainer::{prepare_records, PairingStrategy, PreparedRecord, TrainingConfig};
use contravul::{ClassifierHead, EncoderModel, FunctionRecord};

pub struct Fixture {
    pub config: TrainingConfig,
    pub model: EncoderModel,
    pub head: ClassifierHead,
    pub records: Vec<FunctionRecord>,
    pub prepared: Vec<PreparedRecord>,
}

impl Fixture {
    /// Model sized like the synthetic experiments, plus `n` records drawn
    /// from both classes.
    pub fn new(strategy: PairingStrategy, n: usize) -> Fixture {
        let config = TrainingConfig {
            strategy,
            vocab_size: 2048,
            d_embed: 64,
            d: 64,
            ..Default::default()
        };
        let model = EncoderModel::new(config.encoder(), 1).expect("valid encoder config");
        let head = ClassifierHead::new(config.d, 2);
        let all = generate(SyntheticConfig {
            pairs: n,
            clean: n,
            seed: 3,
        });
        // interleave vulnerable and clean so any prefix is mixed
        let records: Vec<FunctionRecord> =
            (0..n).map(|i| if i % 2 == 0 { all[i / 2].clone() } else { all[n + i / 2].clone() }).collect();
        let prepared = prepare_records(model.tokenizer(), &records).expect("synthetic records tokenize");
        Fixture {
            config,
            model,
            head,
            records,
            prepared,
        }
    }

    pub fn batch(&self) -> Vec<&PreparedRecord> {
        self.prepared.iter().collect()
    }
}

/// Deterministic pseudo-random scores in [0, 1) with every third item positive.
pub fn scored_list(n: usize) -> Vec<(f64, bool)> {
    (0..n).map(|i| (((i * 7919 + 13) % 1000) as f64 / 1000.0, i % 3 == 0)).collect()
}

/// `n` unit-free vectors of dimension `d` with a fixed pattern.
pub fn embeddings(n: usize, d: usize) -> Vec<EmbeddingVector> {
    (0..n)
        .map(|i| EmbeddingVector::new((0..d).map(|j| (((i * 31 + j * 17) % 101) as f64 - 50.0) / 50.0).collect()))
        .collect()
}
