//! Text tokenization, truncation, and document embeddings.

mod classifier;
mod pvdbow;
mod tokens;

pub use classifier::{predict_text, text_representation, train_text_classifier, TextConfig, TextModel};
pub use pvdbow::{cosine, train_pvdbow, PvDbowConfig, PvDbowModel};
pub use tokens::{tokenize, truncate, Truncation};
