//! Structure-aware premise selection for dependently-typed proof holes.
//!
//! `premsel` ingests the JSON extracts of type-checked modules, turns every
//! type-level term into a binarized, reference-resolved token tree, encodes
//! whole files with a tree-biased linear-attention encoder, and ranks the
//! lemmas in scope by their relevance to each unfinished hole.
//!
//! The crate is organized as a pipeline:
//!
//! * [`ingest`] — parse and validate the extracted JSON term grammar.
//! * [`token`] — binarize type terms and resolve variable/lemma references.
//! * [`graph`] — per-file dependency-leveled graphs, filtering and caching.
//! * [`tensor`] / [`optim`] — a minimal dense-tensor engine with reverse-mode
//!   differentiation, AdamW and the learning-rate schedule.
//! * [`encoder`] — orthogonal tree positional encodings and Taylor-feature
//!   linear attention layers.
//! * [`model`] — static/variable/reference embeddings, level-by-level file
//!   encoding and hole–lemma scoring.
//! * [`train`] — the contrastive objective, the training loop, and the
//!   ranking metrics.
//!
//! A narrative guide lives under `book/`; its chapters are compiled as doc
//! tests through the [`guide`] module so the examples there can never drift
//! out of sync with the API.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod graph;
pub mod guide;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod selfcheck;
pub mod synth;
pub mod tensor;
pub mod token;
pub mod train;
