//! Training-free keyframe selection for long videos.
//!
//! The pipeline runs in two stages. Stage one tracks sparse corners through a
//! patch grid and turns per-patch retention drops into scene-change events
//! ([`tracker`]). Stage two reduces every frame to a compact signal vector and
//! an HSV histogram ([`signals`]), over which a parametric selector picks at
//! most `K` frames from a candidate set ([`selector`]). Selections are scored
//! against multi-annotator evidence sets with a latency-discounted objective
//! ([`metrics`]), and the selector parameters can be tuned by an island-model
//! evolutionary search ([`evolve`]).

pub mod evolve;
pub mod kernels;
pub mod media;
pub mod metrics;
pub mod parallel;
pub mod selector;
pub mod signals;
pub mod synth;
pub mod tracker;
