//! Triplet margin objective over cosine distances.
//!
//! `max(d(F, P) - d(F, N̄) + ε, 0)` with `d(a, b) = 1 - a·b`. With several
//! negatives, `d(F, N̄)` is either the mean of the per-negative distances
//! (default) or the distance to the normalised mean negative.

use serde::{Deserialize, Serialize};

use super::TripletGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeAggregation {
    #[default]
    MeanDistance,
    DistanceToMean,
}

/// Loss value plus gradients w.r.t. anchor, positive and each negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletTerms {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negatives: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Margin loss and its gradients for raw vectors. Inactive hinges produce
/// all-zero gradients.
pub fn triplet_terms(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    epsilon: f64,
    aggregation: NegativeAggregation,
) -> TripletTerms {
    let d = anchor.len();
    let k = negatives.len() as f64;
    let d_pos = 1.0 - dot(anchor, positive);
    let mut grad_anchor = vec![0.0; d];
    let mut grad_negatives = vec![vec![0.0; d]; negatives.len()];

    // d(F, N̄) together with the gradient of `-d(F, N̄)` w.r.t. F and each N.
    let d_neg = match aggregation {
        NegativeAggregation::MeanDistance => {
            let mean = negatives.iter().map(|n| 1.0 - dot(anchor, n)).sum::<f64>() / k;
            for (gn, n) in grad_negatives.iter_mut().zip(negatives) {
                for i in 0..d {
                    grad_anchor[i] += n[i] / k;
                    gn[i] = anchor[i] / k;
                }
            }
            mean
        }
        NegativeAggregation::DistanceToMean => {
            let mut m = vec![0.0; d];
            for n in negatives {
                m.iter_mut().zip(n.iter()).for_each(|(a, b)| *a += b / k);
            }
            let norm = dot(&m, &m).sqrt().max(1e-12);
            let u: Vec<f64> = m.iter().map(|v| v / norm).collect();
            let cos = dot(anchor, &u);
            // d cos / dF = u;  d cos / dm = (F - u cos) / |m|
            let grad_m: Vec<f64> = (0..d).map(|i| (anchor[i] - u[i] * cos) / norm).collect();
            grad_anchor.copy_from_slice(&u);
            for gn in grad_negatives.iter_mut() {
                gn.iter_mut().zip(&grad_m).for_each(|(g, gm)| *g = gm / k);
            }
            1.0 - cos
        }
    };

    let raw = d_pos - d_neg + epsilon;
    if raw <= 0.0 {
        return TripletTerms {
            loss: 0.0,
            grad_anchor: vec![0.0; d],
            grad_positive: vec![0.0; d],
            grad_negatives: vec![vec![0.0; d]; negatives.len()],
        };
    }
    // + d(F, P) contributes -P to F and -F to P
    grad_anchor.iter_mut().zip(positive).for_each(|(g, p)| *g -= p);
    TripletTerms {
        loss: raw,
        grad_anchor,
        grad_positive: anchor.iter().map(|a| -a).collect(),
        grad_negatives,
    }
}

/// Margin loss of one group with mean-of-distances aggregation.
pub fn contrastive_loss(group: &TripletGroup, epsilon: f64) -> f64 {
    contrastive_loss_with(group, epsilon, NegativeAggregation::MeanDistance)
}

pub fn contrastive_loss_with(group: &TripletGroup, epsilon: f64, aggregation: NegativeAggregation) -> f64 {
    let negatives: Vec<&[f64]> = group.negatives().iter().map(|n| n.as_slice()).collect();
    triplet_terms(
        group.anchor().as_slice(),
        group.positive().as_slice(),
        &negatives,
        epsilon,
        aggregation,
    )
    .loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EmbeddingVector;

    /// Unit vector in the plane at `1 - cos(angle) = distance` from (1, 0).
    fn at_distance(distance: f64) -> EmbeddingVector {
        let c = 1.0 - distance;
        EmbeddingVector::new(vec![c, (1.0 - c * c).max(0.0).sqrt()])
    }

    fn group(dp: f64, dns: &[f64]) -> TripletGroup {
        TripletGroup::new(
            EmbeddingVector::new(vec![1.0, 0.0]),
            at_distance(dp),
            dns.iter().map(|&d| at_distance(d)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn margin_met_exactly() {
        assert_eq!(contrastive_loss(&group(0.0, &[1.0]), 1.0), 0.0);
    }

    #[test]
    fn direct_substitution() {
        assert!((contrastive_loss(&group(0.5, &[0.2]), 1.0) - 1.3).abs() <= 1e-9);
    }

    #[test]
    fn averaged_negatives() {
        assert!((contrastive_loss(&group(0.1, &[0.8, 1.2]), 1.0) - 0.1).abs() <= 1e-9);
    }

    #[test]
    fn distance_to_mean_differs_from_mean_distance() {
        let g = group(0.1, &[0.2, 1.0]);
        let mean = contrastive_loss(&g, 1.0);
        let to_mean = contrastive_loss_with(&g, 1.0, NegativeAggregation::DistanceToMean);
        assert!((mean - 0.5).abs() < 1e-12);
        // mean negative (0.4, 0.8) normalises to (1, 2)/√5
        assert!((to_mean - (0.1 - (1.0 - 1.0 / 5f64.sqrt()) + 1.0)).abs() < 1e-12);
        assert!((to_mean - mean).abs() > 1e-3);
    }

    #[test]
    fn gradients_match_central_differences() {
        let a = [0.3, -0.5, 0.8];
        let p = [0.1, 0.4, -0.2];
        let n1 = [0.9, 0.1, 0.3];
        let n2 = [-0.2, 0.7, 0.5];
        for agg in [NegativeAggregation::MeanDistance, NegativeAggregation::DistanceToMean] {
            let t = triplet_terms(&a, &p, &[&n1, &n2], 1.0, agg);
            assert!(t.loss > 0.0);
            let loss_at = |v: [[f64; 3]; 4]| triplet_terms(&v[0], &v[1], &[&v[2], &v[3]], 1.0, agg).loss;
            let base = [a, p, n1, n2];
            let analytic = [&t.grad_anchor, &t.grad_positive, &t.grad_negatives[0], &t.grad_negatives[1]];
            for (which, grad) in analytic.iter().enumerate() {
                for i in 0..3 {
                    let h = 1e-6;
                    let mut plus = base;
                    plus[which][i] += h;
                    let mut minus = base;
                    minus[which][i] -= h;
                    let fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
                    assert!((fd - grad[i]).abs() < 1e-7, "{agg:?} vector {which} coord {i}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit3() -> impl Strategy<Value = EmbeddingVector> {
            prop::collection::vec(-1.0f64..1.0, 3)
                .prop_filter("non-zero", |x| x.iter().any(|v| v.abs() > 1e-3))
                .prop_map(|x| EmbeddingVector::normalized(x).unwrap())
        }

        proptest! {
            #[test]
            fn non_negative_and_zero_when_margin_met(
                a in unit3(), p in unit3(), ns in prop::collection::vec(unit3(), 1..6), eps in 0.01f64..2.0
            ) {
                let g = TripletGroup::new(a.clone(), p.clone(), ns.clone()).unwrap();
                let loss = contrastive_loss(&g, eps);
                prop_assert!(loss >= 0.0);
                let dp = 1.0 - a.dot(&p);
                let dn = ns.iter().map(|n| 1.0 - a.dot(n)).sum::<f64>() / ns.len() as f64;
                if dp + eps <= dn - 1e-12 {
                    prop_assert_eq!(loss, 0.0);
                }
            }

            #[test]
            fn invariant_under_negative_permutation(
                a in unit3(), p in unit3(), ns in prop::collection::vec(unit3(), 2..6), eps in 0.01f64..2.0
            ) {
                let g = TripletGroup::new(a.clone(), p.clone(), ns.clone()).unwrap();
                let mut rev = ns.clone();
                rev.reverse();
                let r = TripletGroup::new(a, p, rev).unwrap();
                prop_assert!((contrastive_loss(&g, eps) - contrastive_loss(&r, eps)).abs() < 1e-12);
            }
        }
    }
}
