//! One module per pipeline stage. Every subcommand resolves its flags and
//! config file into an effective configuration, echoes that configuration
//! into run metadata, and emits hash-named artifacts through
//! [`crate::artifacts::emit`].

mod data;
mod index;
mod lab;
mod run;

pub use data::{ingest, synth_ict, IngestArgs, SynthIctArgs};
pub use index::{index_dense, index_sparse, IndexDenseArgs, IndexSparseArgs};
pub use lab::{
    margins_by_length, min_k, recall_min_k, triples, MarginsArgs, MinKArgs, RecallArgs, TriplesArgs,
};
pub use run::{
    eval, retrieve, tune_hybrid, verify_bounds, EvalArgs, RetrieveArgs, TuneArgs, VerifyArgs,
};
