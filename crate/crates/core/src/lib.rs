//! Neural reconstruction of Latin proto-words from their Romance reflexes.
//!
//! The crate covers the whole pipeline: reading and encoding cognate sets,
//! a small reverse-mode autodiff engine, the multi-source encoder-decoder,
//! training, edit-distance evaluation, the sound-change test set, and the
//! clustering and attention analyses run on a trained model.

pub mod autodiff;
pub mod corpus;
pub mod model;
pub mod metrics;
pub mod rules;
pub mod analysis;
pub mod train;
