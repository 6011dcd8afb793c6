//! Triplet construction for the three pairing strategies.
//!
//! A batch is first turned into a [`GroupPlan`] list that names encodings
//! by `(member, pass)`; the training loop encodes every distinct key once
//! and shares it between groups. [`build_pairs`] materialises the same plan
//! into embedding triplets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PairingStrategy, TrainError};
use crate::corpus::FunctionRecord;
use crate::encoder::{EmbeddingVector, EncoderModel};
use crate::seed;

/// Pass index used for the encoding of a record's fixed counterpart.
pub const FIXED_PASS: u8 = 2;

/// One encoding of one batch member. Passes 0 and 1 encode `code` under
/// different dropout masks; [`FIXED_PASS`] encodes `fixed_code`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EncodingKey {
    pub member: usize,
    pub pass: u8,
}

impl EncodingKey {
    pub fn new(member: usize, pass: u8) -> Self {
        Self { member, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    pub anchor: EncodingKey,
    pub positive: EncodingKey,
    pub negatives: Vec<EncodingKey>,
}

/// Anchor/positive/negatives embeddings for one margin term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletGroup {
    anchor: EmbeddingVector,
    positive: EmbeddingVector,
    negatives: Vec<EmbeddingVector>,
}

impl TripletGroup {
    pub fn new(
        anchor: EmbeddingVector,
        positive: EmbeddingVector,
        negatives: Vec<EmbeddingVector>,
    ) -> Result<Self, TrainError> {
        if negatives.is_empty() {
            return Err(TrainError::InvalidGroup("no negatives".into()));
        }
        let d = anchor.dim();
        if positive.dim() != d || negatives.iter().any(|n| n.dim() != d) {
            return Err(TrainError::InvalidGroup("embedding dimensions differ".into()));
        }
        Ok(Self {
            anchor,
            positive,
            negatives,
        })
    }

    pub fn anchor(&self) -> &EmbeddingVector {
        &self.anchor
    }

    pub fn positive(&self) -> &EmbeddingVector {
        &self.positive
    }

    pub fn negatives(&self) -> &[EmbeddingVector] {
        &self.negatives
    }
}

/// Plans the groups for a batch described by `has_fix[i]` (whether member
/// `i` is vulnerable with a known fix).
///
/// - SimCL: one group per member with a fix; positive is its second pass,
///   the single negative its fixed code.
/// - SimDFE: one group per member; negatives are both passes of every
///   other member.
/// - R-Drop: one group per member; negatives are the first pass of every
///   other member.
///
/// With `symmetric`, each group is also emitted with anchor and positive
/// swapped. A batch of one yields no SimDFE/R-Drop groups.
pub fn plan_pairs(
    has_fix: &[bool],
    strategy: PairingStrategy,
    symmetric: bool,
) -> Result<Vec<GroupPlan>, TrainError> {
    let n = has_fix.len();
    if n == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let key = EncodingKey::new;
    let mut plans = Vec::new();
    match strategy {
        PairingStrategy::SimCL => {
            for (i, _) in has_fix.iter().enumerate().filter(|(_, &f)| f) {
                plans.push(GroupPlan {
                    anchor: key(i, 0),
                    positive: key(i, 1),
                    negatives: vec![key(i, FIXED_PASS)],
                });
            }
            if plans.is_empty() {
                return Err(TrainError::NoEligibleAnchors);
            }
        }
        PairingStrategy::SimDFE | PairingStrategy::RDrop if n >= 2 => {
            let passes: &[u8] = if strategy == PairingStrategy::SimDFE { &[0, 1] } else { &[0] };
            for i in 0..n {
                let negatives = (0..n)
                    .filter(|&j| j != i)
                    .flat_map(|j| passes.iter().map(move |&p| key(j, p)))
                    .collect();
                plans.push(GroupPlan {
                    anchor: key(i, 0),
                    positive: key(i, 1),
                    negatives,
                });
            }
        }
        PairingStrategy::SimDFE | PairingStrategy::RDrop => {}
    }
    if symmetric {
        let swapped: Vec<GroupPlan> = plans
            .iter()
            .map(|g| GroupPlan {
                anchor: g.positive,
                positive: g.anchor,
                negatives: g.negatives.clone(),
            })
            .collect();
        plans.extend(swapped);
    }
    Ok(plans)
}

pub(crate) fn has_fix(record: &FunctionRecord) -> bool {
    record.label.is_vulnerable() && record.fixed_code.is_some()
}

/// Encodes a batch into triplet groups. Dropout seeds come from
/// `(seed, record id, pass)`, so the same inputs always give the same
/// groups.
pub fn build_pairs(
    batch: &[FunctionRecord],
    strategy: PairingStrategy,
    model: &EncoderModel,
    seed: u64,
) -> Result<Vec<TripletGroup>, TrainError> {
    build_pairs_with(batch, strategy, model, seed, false)
}

pub fn build_pairs_with(
    batch: &[FunctionRecord],
    strategy: PairingStrategy,
    model: &EncoderModel,
    seed: u64,
    symmetric: bool,
) -> Result<Vec<TripletGroup>, TrainError> {
    let flags: Vec<bool> = batch.iter().map(has_fix).collect();
    let plans = plan_pairs(&flags, strategy, symmetric)?;
    let mut cache: BTreeMap<EncodingKey, EmbeddingVector> = BTreeMap::new();
    let mut get = |k: EncodingKey| -> Result<EmbeddingVector, TrainError> {
        if let Some(e) = cache.get(&k) {
            return Ok(e.clone());
        }
        let record = &batch[k.member];
        let code = if k.pass == FIXED_PASS {
            record.fixed_code.as_deref().unwrap_or(&record.code)
        } else {
            &record.code
        };
        let seq = model.tokenize(code)?;
        let e = model.encode(&seq, Some(seed::dropout_seed(seed, &record.id, u64::from(k.pass))))?;
        cache.insert(k, e.clone());
        Ok(e)
    };
    plans
        .into_iter()
        .map(|p| {
            let negatives = p.negatives.iter().map(|&k| get(k)).collect::<Result<Vec<_>, _>>()?;
            TripletGroup::new(get(p.anchor)?, get(p.positive)?, negatives)
        })
        .collect()
}
