//! Stance classification for tree-structured social-media conversations.
//!
//! A conversation thread is a source post plus the tree of replies to it.
//! Every post carries one of four stances towards the rumour under
//! discussion: support, deny, query or comment. This crate provides the
//! classifiers and the evaluation machinery to label whole threads:
//!
//! * [`thread`] — thread parsing, validation, branch decomposition and
//!   novelty masks.
//! * [`features`] — local, contextual and bag-of-words feature extraction
//!   over a declarative group configuration.
//! * [`hawkes`] — a multivariate Hawkes-process sequence classifier with
//!   closed-form and gradient-based fitting, greedy decoding and an
//!   Ogata-thinning simulator.
//! * [`crf`] — linear-chain and tree-structured conditional random fields
//!   with exact inference and weighted maximum-likelihood training.
//! * [`lstm`] — a branch-level recurrent classifier trained with Adam on a
//!   masked cross-entropy loss.
//! * [`maxent`] — the non-sequential maximum-entropy baseline.
//! * [`eval`] — leave-one-event-out cross-validation, macro-F1, confusion
//!   matrices, McNemar tests and per-event/per-depth breakdowns.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all file and
//! terminal IO lives in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod crf;
pub mod eval;
pub mod features;
pub mod hawkes;
pub mod label;
pub mod lstm;
pub mod maxent;
pub mod numeric;
pub mod optim;
pub mod synth;
pub mod thread;

pub use label::StanceLabel;
pub use thread::{Branch, ConversationThread, Dataset, Tweet};
