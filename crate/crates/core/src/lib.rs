//! Unsupervised quality scoring and filtering for dialogue utterance-pair corpora.
//!
//! A pair `(x, y)` is scored along two axes:
//!
//! * **connectivity** (`s_frame`): weighted nPMI of key phrase pairs shared by
//!   `x` and `y`, where the key phrase pairs come from a phrase table learned
//!   over word alignments of the corpus itself;
//! * **content relatedness** (`s_content`): cosine similarity of SIF sentence
//!   vectors.
//!
//! The two are rescaled by their corpus means and summed into `s_ours`, which
//! drives [`filter`]. The modules mirror the pipeline stages:
//! [`corpus`] → [`aligner`] → [`phrase_table`] → [`sentvec`] → [`scorer`] →
//! [`filter`] → [`evalkit`], orchestrated by [`pipeline`].

pub mod aligner;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod filter;
pub mod phrase_table;
pub mod pipeline;
pub mod scorer;
pub mod sentvec;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
