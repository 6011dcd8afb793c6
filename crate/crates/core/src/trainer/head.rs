use rand::Rng;

use crate::corpus::Label;
use crate::encoder::EmbeddingVector;
use crate::seed;

/// Two-way linear classifier over embeddings. Class 0 is non-vulnerable,
/// class 1 vulnerable. Weights are `d × 2`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGradients {
    pub fn zeros_like(head: &ClassifierHead) -> Self {
        Self {
            weights: vec![0.0; head.weights.len()],
            bias: vec![0.0; 2],
        }
    }
}

impl ClassifierHead {
    pub fn new(dim: usize, init_seed: u64) -> Self {
        let bound = (6.0 / (dim + 2) as f64).sqrt();
        let mut rng = seed::rng(init_seed);
        Self {
            dim,
            weights: (0..dim * 2).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: vec![0.0; 2],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weights: vec![0.0; dim * 2],
            bias: vec![0.0; 2],
        }
    }

    pub fn from_parts(dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, String> {
        if weights.len() != dim * 2 || bias.len() != 2 {
            return Err(format!(
                "head shapes {}/{} do not match dimension {dim}",
                weights.len(),
                bias.len()
            ));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err("non-finite head parameter".into());
        }
        Ok(Self { dim, weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn parameters_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn parameters(&self) -> [&[f64]; 2] {
        [&self.weights, &self.bias]
    }

    pub fn logits(&self, embedding: &EmbeddingVector) -> [f64; 2] {
        let mut out = [self.bias[0], self.bias[1]];
        for (i, e) in embedding.as_slice().iter().enumerate() {
            out[0] += e * self.weights[2 * i];
            out[1] += e * self.weights[2 * i + 1];
        }
        out
    }

    /// Softmax probability of the vulnerable class.
    pub fn probability_vulnerable(&self, embedding: &EmbeddingVector) -> f64 {
        softmax(self.logits(embedding))[1]
    }

    /// Loss and its gradient w.r.t. the embedding; head gradients scaled by
    /// `weight` are added to `grads`.
    pub(crate) fn loss_and_backward(
        &self,
        embedding: &EmbeddingVector,
        label: Label,
        weight: f64,
        grads: &mut HeadGradients,
    ) -> (f64, Vec<f64>) {
        let logits = self.logits(embedding);
        let y = label.class_index();
        let loss = nll(logits, y);
        let p = softmax(logits);
        let g = [weight * (p[0] - if y == 0 { 1.0 } else { 0.0 }), weight * (p[1] - if y == 1 { 1.0 } else { 0.0 })];
        grads.bias[0] += g[0];
        grads.bias[1] += g[1];
        let mut grad_e = vec![0.0; self.dim];
        for (i, e) in embedding.as_slice().iter().enumerate() {
            grads.weights[2 * i] += e * g[0];
            grads.weights[2 * i + 1] += e * g[1];
            grad_e[i] = self.weights[2 * i] * g[0] + self.weights[2 * i + 1] * g[1];
        }
        (loss, grad_e)
    }
}

pub(crate) fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    [a / (a + b), b / (a + b)]
}

/// `-log softmax(logits)[class]`, computed via log-sum-exp.
pub(crate) fn nll(logits: [f64; 2], class: usize) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[class]
}

/// Two-way cross-entropy of the true label.
pub fn classification_loss(head: &ClassifierHead, embedding: &EmbeddingVector, label: Label) -> f64 {
    nll(head.logits(embedding), label.class_index())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head_with_logits(l0: f64, l1: f64) -> ClassifierHead {
        ClassifierHead::from_parts(1, vec![0.0, 0.0], vec![l0, l1]).unwrap()
    }

    fn e() -> EmbeddingVector {
        EmbeddingVector::new(vec![1.0])
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        let h = head_with_logits(0.0, 0.0);
        for label in [Label::Vulnerable, Label::NonVulnerable] {
            assert!((classification_loss(&h, &e(), label) - std::f64::consts::LN_2).abs() < 1e-15);
        }
        assert_eq!(ClassifierHead::zeros(3).probability_vulnerable(&EmbeddingVector::new(vec![0.2, 0.3, 0.9])), 0.5);
    }

    #[test]
    fn saturated_margin() {
        let h = head_with_logits(0.0, 10.0);
        assert!(classification_loss(&h, &e(), Label::Vulnerable) < 1e-4);
        let h = head_with_logits(500.0, -500.0);
        let l = classification_loss(&h, &e(), Label::Vulnerable);
        assert!(l.is_finite() && (l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn one_zero_logits() {
        // -log(e^1 / (e^1 + e^0)) = ln(1 + e^-1)
        let h = head_with_logits(1.0, 0.0);
        let l = classification_loss(&h, &e(), Label::NonVulnerable);
        assert!((l - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 0.3133).abs() < 5e-5);
    }

    #[test]
    fn from_parts_checks_shape() {
        assert!(ClassifierHead::from_parts(2, vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(ClassifierHead::from_parts(1, vec![f64::NAN, 0.0], vec![0.0; 2]).is_err());
    }
}
