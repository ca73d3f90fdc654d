//! Post-hoc analyses of a trained model: hierarchical clustering of the
//! per-language symbol representations and summaries of which daughter
//! language the decoder attends to.

mod attention;
mod ward;

use thiserror::Error;

use crate::corpus::{Language, Symbol};
use crate::model::{Checkpoint, ModelError};

pub use attention::{attention_summary, language_frequencies, AttentionSummary, Normalize, SummaryRow};
pub use ward::{ward_brute_force, ward_clustering, Dendrogram, Merge, DENDROGRAM_FORMAT};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("clustering needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("points have different dimensions")]
    Ragged,
    #[error("{labels} labels for {points} points")]
    Labels { labels: usize, points: usize },
    #[error("dendrogram file: {0}")]
    Format(String),
    #[error("no symbols attested for {0}")]
    NoSymbols(Language),
    #[error("no attention traces")]
    NoTraces,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Representation of every symbol attested in `lang`, as the model feeds it
/// to the encoder (symbol and language embeddings projected and summed).
pub fn extract_embeddings(ckpt: &Checkpoint, lang: Language) -> Result<(Vec<Symbol>, Vec<Vec<f64>>), AnalysisError> {
    let symbols = ckpt.vocab.attested(lang);
    if symbols.is_empty() {
        return Err(AnalysisError::NoSymbols(lang));
    }
    let params = ckpt.params.cast::<f64>();
    let rows = symbols
        .iter()
        .map(|&s| {
            let id = ckpt.vocab.id(s).expect("attested symbols are in the vocabulary");
            Ok(params.embed_input(id, lang)?.into_data())
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok((symbols, rows))
}
