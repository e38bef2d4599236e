//! Data backbone for a cultural-heritage resilience explorer.
//!
//! The crate is split by subsystem:
//!
//! - [`geo`]: haversine distances and a uniform-grid spatial index for "nearby" lookups.
//! - [`reports`]: the guided hazard-report conversation and the in-memory report registry.
//! - [`smda`]: review ingestion, lexicon sentiment and per-PoI importance scoring.
//! - [`artworks`]: sentiment-conditioned prompts, image generators and the gallery.
//! - [`terra`]: heightmaps, terrain meshes and the flood/vegetation what-if kernel.
//! - [`gamify`]: interaction points and levels.
//!
//! Batch-shaped work (per-cell terrain kernels, per-review scoring, batched radius
//! queries) goes through [`par::Exec`], which uses rayon when the `parallel` feature
//! is enabled and runs sequentially otherwise.

pub mod artworks;
pub mod gamify;
pub mod geo;
pub mod par;
pub mod reports;
pub mod smda;
pub mod terra;

pub use geo::{haversine_distance, GeoError, GeoPoint, SpatialIndex};
pub use par::Exec;
