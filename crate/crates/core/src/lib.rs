//! Traffic-analysis laboratory for encrypted Bluetooth wearable traffic.
//!
//! The crate models what a passive eavesdropper sees of a Bluetooth link
//! (timestamps, directions, payload sizes, link-layer meta frames), turns
//! labeled captures into fixed-length feature vectors, fingerprints them with
//! a deterministic random forest, and measures how well padding, timing
//! regularization and dummy injection defend against that attack.
//!
//! Module map:
//!
//! * [`trace`]: packet/sample/dataset types, sequence filtering, payload entropy.
//! * [`ingest`]: trace and manifest CSV formats, dataset loading, balancing.
//! * [`features`]: the 32-value device vector and the 997-value action vector.
//! * [`forest`]: CART random forest, impurity importance, recursive feature elimination.
//! * [`eval`]: splits, stratified cross-validation, metrics, holdouts, packet loss.
//! * [`defenses`]: pad, delay-group and dummy injection with cost accounting.
//! * [`synth`]: seeded synthetic traces from parametric profiles and day plans.
//! * [`stream`]: long-capture segmentation, thresholded classification, interval scoring.

pub mod defenses;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod ingest;
pub mod rng;
pub mod stream;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{Dataset, Direction, Flavor, PacketRecord, TraceSample};
