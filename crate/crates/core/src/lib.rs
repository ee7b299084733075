//! Street-level fuel consumption for a city, built from taxi GPS speed
//! profiles, origin-destination demand and a fleet fuel-economy distribution.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`network`] loads, densifies and indexes the directed road graph.
//! 2. [`ingest`] turns raw taxi trips into cleaned, timestamped trajectories.
//! 3. [`matching`] assigns every trajectory to a sequence of network edges.
//! 4. [`profiles`] aggregates matched traversals into per-edge speed profiles
//!    and extracts the four StreetSmart features.
//! 5. [`fuel`] evaluates and calibrates the StreetSmart model per
//!    fuel-economy bin, plus the constant-speed DOE baseline.
//! 6. [`assignment`] loads OD demand with incremental traffic assignment.
//! 7. [`fuel_map`] combines per-car fuel with flows into per-meter rates.
//! 8. [`scenarios`] simulates discrete trips and trip-reduction policies.
//!
//! [`pipeline`] wires the stages together behind the `streetfuel` binary.
//! Runnable walkthroughs for each stage live in the crate's `examples/`.

pub mod assignment;
pub mod config;
pub mod error;
pub mod fuel;
pub mod fuel_map;
pub mod geo;
pub mod ingest;
pub mod io;
pub mod matching;
pub mod network;
pub mod pipeline;
pub mod profiles;
pub mod scenarios;
pub mod synthetic;

pub use error::{Error, Result};
pub use geo::LatLon;
