use anyhow::{anyhow, bail, Context, Result};
use protolens::model::ModelConfig;
use protolens::train::TrainConfig;

/// Model and training settings read from a flat `key = value` file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub const KEYS: [&str; 11] = [
    "embed_dim",
    "hidden_dim",
    "mlp_hidden",
    "lang_embed_dim",
    "max_decode_len",
    "seed",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "grad_clip",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| anyhow!("config key {key}: cannot parse {value:?}"))
        }
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "embed_dim" => m.embed_dim = parse(key, value)?,
            "hidden_dim" => m.hidden_dim = parse(key, value)?,
            "mlp_hidden" => m.mlp_hidden = parse(key, value)?,
            "lang_embed_dim" => m.lang_embed_dim = parse(key, value)?,
            "max_decode_len" => m.max_decode_len = parse(key, value)?,
            "seed" => {
                m.seed = parse(key, value)?;
                t.seed = m.seed;
            }
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "grad_clip" => t.grad_clip = parse(key, value)?,
            other => bail!("unknown config key {other:?} (known: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("config line {}: expected key = value", i + 1))?;
            self.set(k.trim(), v.trim())
                .with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .with_context(|| format!("--set {assignment:?}: expected key=value"))?;
        self.set(k.trim(), v.trim())
    }

    /// Resolved values in key order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let (m, t) = (&self.model, &self.train);
        vec![
            ("embed_dim", m.embed_dim.to_string()),
            ("hidden_dim", m.hidden_dim.to_string()),
            ("mlp_hidden", m.mlp_hidden.to_string()),
            ("lang_embed_dim", m.lang_embed_dim.to_string()),
            ("max_decode_len", m.max_decode_len.to_string()),
            ("seed", m.seed.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
        ]
    }
}
