//! Spatial-interaction analysis for inter-city movement data.
//!
//! The crate turns geo-tagged check-ins into an undirected inter-city flow
//! network and then works on that network in several ways:
//!
//! - [`geo`]: city records and great-circle distances.
//! - [`ingest`]: fake check-in filtering, per-user trajectories, trips, flow tables.
//! - [`network`]: the interaction graph, its descriptive statistics, edge-weight
//!   distribution and a two-dataset flow comparison.
//! - [`gravity`]: gravity model with power-law distance decay, fitted by a
//!   grid over the decay exponent wrapped around particle swarm optimization.
//! - [`synth`]: Monte Carlo trip synthesis from a fitted model, displacement
//!   histograms, exponential fits, two-sample KS comparison, and the
//!   "same aggregate, different individuals" twin generators.
//! - [`community`]: weighted modularity, multilevel (Louvain) detection and
//!   multi-run consensus.
//! - [`spatialize`]: Voronoi tessellation, community polygon merging and
//!   GeoJSON export.
//! - [`cli`]: the `spatial-interaction` command-line driver.
//!
//! Runnable walkthroughs for each area live in this crate's `examples/`
//! directory (`cargo run --release --example <name>`).
// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops read
// closer to the formulas than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod community;
pub mod error;
pub mod fixture;
pub mod geo;
pub mod gravity;
pub mod ingest;
pub mod io;
pub mod network;
pub mod pso;
pub mod seed;
pub mod spatialize;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use geo::{City, CityId, DistanceMatrix, Location};
pub use ingest::{CheckInRecord, FlowTable, Trajectory};
pub use network::InteractionNetwork;
