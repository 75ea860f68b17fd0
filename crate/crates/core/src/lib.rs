//! Core algorithms for studying conversational grounding in human-assistant logs.
//!
//! Everything in this crate is a pure function over in-memory values: the
//! grounding-act taxonomy, corpus filtering, prompt-based turn annotation
//! (behind the [`annotate::Completer`] trait), agreement and ranking metrics,
//! descriptive statistics, forecaster training-data construction, benchmark
//! curation and scoring, and the forecaster-gated prompt intervention.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, network access
//! and the command line live in the `groundkit` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod annotate;
pub mod bench;
pub mod dialogue;
pub mod filter;
pub mod forecast;
pub mod intervene;
pub mod metrics;
pub mod stats;

pub use dialogue::{
    category_of, validate_dialogue, AnnotatedTurn, Annotation, Dialogue, GroundingAct, GroundingCategory, LabelFailure,
    Source, Speaker, Timestamp, Turn,
};
pub use forecast::{ForecastDistribution, ForecastLabel};
