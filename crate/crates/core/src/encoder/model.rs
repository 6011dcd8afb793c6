use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CodeEmbedder, EmbeddingVector, EncoderError, TokenSequence, Tokenizer};
use crate::seed;

/// Norms below this are treated as this value when normalising.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: u32,
    pub d_embed: usize,
    pub d: usize,
    pub dropout_rate: f64,
    pub max_sequence_length: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8192,
            d_embed: 128,
            d: 128,
            dropout_rate: 0.1,
            max_sequence_length: super::DEFAULT_MAX_SEQUENCE_LENGTH,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        Tokenizer::new(self.vocab_size, self.max_sequence_length)?;
        if self.d_embed == 0 || self.d == 0 {
            return Err(EncoderError::InvalidConfig("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(EncoderError::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Token table (`vocab_size × d_embed`), projector (`d_embed × d`) and bias
/// (`d`), all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    tokenizer: Tokenizer,
    pub(crate) token_table: Vec<f64>,
    pub(crate) projector: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

/// Gradient buffers with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub token_table: Vec<f64>,
    pub projector: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderGradients {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            token_table: vec![0.0; model.token_table.len()],
            projector: vec![0.0; model.projector.len()],
            bias: vec![0.0; model.bias.len()],
        }
    }

    pub fn parts(&self) -> [&[f64]; 3] {
        [&self.token_table, &self.projector, &self.bias]
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pooled: Vec<f64>,
    /// Inverted-dropout multipliers (`0` or `1/(1-p)`), absent at inference.
    pub mask: Option<Vec<f64>>,
    pub pre_activation: Vec<f64>,
    pub activation: Vec<f64>,
    pub norm: f64,
    pub output: EmbeddingVector,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_derivative(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl EncoderModel {
    /// Random initialisation: token rows uniform with unit variance,
    /// Xavier-uniform projector, zero bias.
    pub fn new(config: EncoderConfig, init_seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = seed::rng(init_seed);
        let table_bound = 3f64.sqrt();
        let token_table = (0..config.vocab_size as usize * config.d_embed)
            .map(|_| rng.gen_range(-table_bound..table_bound))
            .collect();
        let proj_bound = (6.0 / (config.d_embed + config.d) as f64).sqrt();
        let projector = (0..config.d_embed * config.d)
            .map(|_| rng.gen_range(-proj_bound..proj_bound))
            .collect();
        Self::from_parts(config, token_table, projector, vec![0.0; config.d])
    }

    pub fn from_parts(
        config: EncoderConfig,
        token_table: Vec<f64>,
        projector: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(EncoderError::InvalidConfig(format!("{name} has {got} values, expected {want}")))
            }
        };
        expect("token_table", token_table.len(), config.vocab_size as usize * config.d_embed)?;
        expect("projector", projector.len(), config.d_embed * config.d)?;
        expect("bias", bias.len(), config.d)?;
        if !token_table.iter().chain(&projector).chain(&bias).all(|v| v.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self {
            tokenizer: Tokenizer::new(config.vocab_size, config.max_sequence_length)?,
            config,
            token_table,
            projector,
            bias,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn token_table(&self) -> &[f64] {
        &self.token_table
    }

    pub fn projector(&self) -> &[f64] {
        &self.projector
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Parameter slices in the fixed order token table, projector, bias.
    pub fn parameters_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.token_table, &mut self.projector, &mut self.bias]
    }

    pub fn parameters(&self) -> [&[f64]; 3] {
        [&self.token_table, &self.projector, &self.bias]
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn tokenize(&self, code: &str) -> Result<TokenSequence, EncoderError> {
        self.tokenizer.tokenize(code)
    }

    fn check_sequence(&self, seq: &TokenSequence) -> Result<(), EncoderError> {
        if seq.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        if let Some(&id) = seq.tokens.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(EncoderError::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Mean of the token rows.
    pub fn pool(&self, seq: &TokenSequence) -> Result<Vec<f64>, EncoderError> {
        self.check_sequence(seq)?;
        let de = self.config.d_embed;
        let mut pooled = vec![0.0; de];
        for &id in &seq.tokens {
            let row = &self.token_table[id as usize * de..(id as usize + 1) * de];
            pooled.iter_mut().zip(row).for_each(|(p, r)| *p += r);
        }
        let inv = 1.0 / seq.len() as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);
        Ok(pooled)
    }

    /// Inverted-dropout multipliers for the pooled vector.
    pub fn dropout_mask(&self, dropout_seed: u64) -> Vec<f64> {
        let rate = self.config.dropout_rate;
        let keep = 1.0 / (1.0 - rate);
        let mut rng = seed::rng(dropout_seed);
        (0..self.config.d_embed)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect()
    }

    /// Pooled vector after the optional seeded dropout, i.e. the projector's
    /// input.
    pub fn dropped_pool(&self, seq: &TokenSequence, dropout_seed: Option<u64>) -> Result<Vec<f64>, EncoderError> {
        let mut pooled = self.pool(seq)?;
        if let Some(s) = dropout_seed {
            pooled.iter_mut().zip(self.dropout_mask(s)).for_each(|(p, m)| *p *= m);
        }
        Ok(pooled)
    }

    pub fn forward(&self, seq: &TokenSequence, dropout_seed: Option<u64>) -> Result<ForwardTrace, EncoderError> {
        let pooled = self.pool(seq)?;
        let mask = dropout_seed.map(|s| self.dropout_mask(s));
        let hidden: Vec<f64> = match &mask {
            Some(m) => pooled.iter().zip(m).map(|(p, m)| p * m).collect(),
            None => pooled.clone(),
        };
        let d = self.config.d;
        let mut pre = self.bias.clone();
        for (i, h) in hidden.iter().enumerate() {
            if *h == 0.0 {
                continue;
            }
            let row = &self.projector[i * d..(i + 1) * d];
            pre.iter_mut().zip(row).for_each(|(z, w)| *z += h * w);
        }
        let activation: Vec<f64> = pre.iter().map(|&z| gelu(z)).collect();
        let norm = activation.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = 1.0 / norm.max(NORM_FLOOR);
        let output = EmbeddingVector::new(activation.iter().map(|a| a * scale).collect());
        if !output.is_finite() {
            return Err(EncoderError::NonFinite);
        }
        Ok(ForwardTrace {
            pooled,
            mask,
            pre_activation: pre,
            activation,
            norm,
            output,
        })
    }

    /// Unit-norm embedding of a token sequence. With a seed, a dropout mask
    /// derived from it is applied to the pooled vector.
    pub fn encode(&self, seq: &TokenSequence, dropout_seed: Option<u64>) -> Result<EmbeddingVector, EncoderError> {
        Ok(self.forward(seq, dropout_seed)?.output)
    }

    /// Accumulates into `grads` the gradient of a scalar loss given
    /// `grad_output = dL/d(output)` for the pass recorded in `trace`.
    pub fn backward(
        &self,
        seq: &TokenSequence,
        trace: &ForwardTrace,
        grad_output: &[f64],
        grads: &mut EncoderGradients,
    ) {
        let (de, d) = (self.config.d_embed, self.config.d);
        let e = trace.output.as_slice();
        // through y = a / |a|
        let grad_act: Vec<f64> = if trace.norm > NORM_FLOOR {
            let proj: f64 = e.iter().zip(grad_output).map(|(a, b)| a * b).sum();
            grad_output
                .iter()
                .zip(e)
                .map(|(g, y)| (g - y * proj) / trace.norm)
                .collect()
        } else {
            grad_output.iter().map(|g| g / NORM_FLOOR).collect()
        };
        let grad_pre: Vec<f64> = grad_act
            .iter()
            .zip(&trace.pre_activation)
            .map(|(g, &z)| g * gelu_derivative(z))
            .collect();
        grads.bias.iter_mut().zip(&grad_pre).for_each(|(b, g)| *b += g);

        let mut grad_pooled = vec![0.0; de];
        for i in 0..de {
            let h = match &trace.mask {
                Some(m) => trace.pooled[i] * m[i],
                None => trace.pooled[i],
            };
            let row = &self.projector[i * d..(i + 1) * d];
            let grow = &mut grads.projector[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..d {
                grow[j] += h * grad_pre[j];
                acc += row[j] * grad_pre[j];
            }
            grad_pooled[i] = match &trace.mask {
                Some(m) => acc * m[i],
                None => acc,
            };
        }
        let inv = 1.0 / seq.len() as f64;
        for &id in &seq.tokens {
            let grow = &mut grads.token_table[id as usize * de..(id as usize + 1) * de];
            grow.iter_mut().zip(&grad_pooled).for_each(|(g, p)| *g += p * inv);
        }
    }
}

impl CodeEmbedder for EncoderModel {
    fn embed(&self, code: &str) -> Result<EmbeddingVector, EncoderError> {
        self.encode(&self.tokenize(code)?, None)
    }

    fn dim(&self) -> usize {
        self.config.d
    }
}
