//! The multi-source encoder-decoder.
//!
//! Every input character `c` of language `ℓ` is represented as
//! `W·E[c] + U·E_lang[ℓ]`, where `E` is one symbol table shared by all
//! languages (Latin included). A unidirectional GRU reads the concatenated
//! daughters; a second GRU, started from the last encoder state, generates
//! the Latin word while attending to the encoder states by dot product. The
//! attention context and decoder state go through a tanh MLP to produce the
//! logits over the vocabulary.

mod checkpoint;
mod forward;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Scalar, Tensor};
use crate::corpus::Language;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use forward::{AttentionStep, AttentionTrace, Decoded, EncoderOutput, ParamVars, StepOutput};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{what} id {id} out of range (bound {bound})")]
    IdOutOfRange { what: &'static str, id: usize, bound: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint tensor {name} has shape {found:?}, configuration implies {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub mlp_hidden: usize,
    pub lang_embed_dim: usize,
    pub max_decode_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 100,
            hidden_dim: 150,
            mlp_hidden: 200,
            lang_embed_dim: 100,
            max_decode_len: 30,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("lang_embed_dim", self.lang_embed_dim),
            ("max_decode_len", self.max_decode_len),
        ];
        match dims.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ModelError::Config(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }

    /// Width of the projected input representation fed to both GRUs.
    pub fn input_dim(&self) -> usize {
        self.embed_dim
    }

    /// Closed-form number of trainable scalars for a vocabulary of `vocab` ids.
    pub fn param_count(&self, vocab: usize) -> usize {
        let (e, l, d, h, m) = (
            self.embed_dim,
            self.lang_embed_dim,
            self.input_dim(),
            self.hidden_dim,
            self.mlp_hidden,
        );
        let gru = d * 3 * h + h * 3 * h + 2 * 3 * h;
        vocab * e + Language::COUNT * l + e * d + l * d + 2 * gru + 2 * h * m + m + m * vocab + vocab
    }
}

/// Every trainable tensor, in checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamId {
    Embed,
    LangEmbed,
    ProjSymbol,
    ProjLang,
    EncWih,
    EncWhh,
    EncBih,
    EncBhh,
    DecWih,
    DecWhh,
    DecBih,
    DecBhh,
    MlpW1,
    MlpB1,
    MlpW2,
    MlpB2,
}

impl ParamId {
    pub const ALL: [ParamId; 16] = [
        ParamId::Embed,
        ParamId::LangEmbed,
        ParamId::ProjSymbol,
        ParamId::ProjLang,
        ParamId::EncWih,
        ParamId::EncWhh,
        ParamId::EncBih,
        ParamId::EncBhh,
        ParamId::DecWih,
        ParamId::DecWhh,
        ParamId::DecBih,
        ParamId::DecBhh,
        ParamId::MlpW1,
        ParamId::MlpB1,
        ParamId::MlpW2,
        ParamId::MlpB2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::Embed => "embed",
            ParamId::LangEmbed => "lang_embed",
            ParamId::ProjSymbol => "proj_symbol",
            ParamId::ProjLang => "proj_lang",
            ParamId::EncWih => "enc_w_ih",
            ParamId::EncWhh => "enc_w_hh",
            ParamId::EncBih => "enc_b_ih",
            ParamId::EncBhh => "enc_b_hh",
            ParamId::DecWih => "dec_w_ih",
            ParamId::DecWhh => "dec_w_hh",
            ParamId::DecBih => "dec_b_ih",
            ParamId::DecBhh => "dec_b_hh",
            ParamId::MlpW1 => "mlp_w1",
            ParamId::MlpB1 => "mlp_b1",
            ParamId::MlpW2 => "mlp_w2",
            ParamId::MlpB2 => "mlp_b2",
        }
    }

    /// Shape implied by a configuration and vocabulary size. GRU gate blocks
    /// are stored side by side in r, z, n order.
    pub fn shape(self, c: &ModelConfig, vocab: usize) -> [usize; 2] {
        let (e, l, d, h, m) = (c.embed_dim, c.lang_embed_dim, c.input_dim(), c.hidden_dim, c.mlp_hidden);
        match self {
            ParamId::Embed => [vocab, e],
            ParamId::LangEmbed => [Language::COUNT, l],
            ParamId::ProjSymbol => [e, d],
            ParamId::ProjLang => [l, d],
            ParamId::EncWih | ParamId::DecWih => [d, 3 * h],
            ParamId::EncWhh | ParamId::DecWhh => [h, 3 * h],
            ParamId::EncBih | ParamId::EncBhh | ParamId::DecBih | ParamId::DecBhh => [1, 3 * h],
            ParamId::MlpW1 => [2 * h, m],
            ParamId::MlpB1 => [1, m],
            ParamId::MlpW2 => [m, vocab],
            ParamId::MlpB2 => [1, vocab],
        }
    }
}

/// Trainable state of the model together with the configuration and
/// vocabulary size that determine its shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    vocab_size: usize,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Seeded initialization: N(0, 1) embeddings, Glorot-uniform projections
    /// and MLP weights, GRU weights and biases uniform in ±1/√hidden, zero MLP
    /// biases.
    pub fn init(config: ModelConfig, vocab_size: usize) -> Result<ModelParams<T>, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let gru_bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| {
                let [r, c] = id.shape(&config, vocab_size);
                let mut sample: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match id {
                    ParamId::Embed | ParamId::LangEmbed => Box::new(|rng| normal.sample(rng)),
                    ParamId::ProjSymbol | ParamId::ProjLang | ParamId::MlpW1 | ParamId::MlpW2 => {
                        let bound = (6.0 / (r + c) as f64).sqrt();
                        let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                        Box::new(move |rng| u.sample(rng))
                    }
                    ParamId::MlpB1 | ParamId::MlpB2 => Box::new(|_| 0.0),
                    _ => Box::new(move |rng| rng.random_range(-gru_bound..=gru_bound)),
                };
                Tensor::from_fn(r, c, |_, _| T::lit(sample(&mut rng)))
            })
            .collect();
        Ok(ModelParams {
            config,
            vocab_size,
            tensors,
        })
    }

    /// Assembles parameters from tensors in [`ParamId::ALL`] order, checking
    /// every shape against the configuration.
    pub fn from_tensors(
        config: ModelConfig,
        vocab_size: usize,
        tensors: Vec<Tensor<T>>,
    ) -> Result<ModelParams<T>, ModelError> {
        config.validate()?;
        if tensors.len() != ParamId::ALL.len() {
            return Err(ModelError::Corrupt(format!(
                "expected {} tensors, found {}",
                ParamId::ALL.len(),
                tensors.len()
            )));
        }
        for (id, t) in ParamId::ALL.iter().zip(&tensors) {
            let expected = id.shape(&config, vocab_size).to_vec();
            if t.shape() != expected.as_slice() {
                return Err(ModelError::ShapeMismatch {
                    name: id.name().to_string(),
                    found: t.shape().to_vec(),
                    expected,
                });
            }
        }
        Ok(ModelParams {
            config,
            vocab_size,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id as usize]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id as usize]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            vocab_size: self.vocab_size,
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}
