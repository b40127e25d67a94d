//! Discrete-event simulation of a cluster of burstable cloud instances,
//! with credit-aware task placement, credit telemetry and billing.

pub mod billing;
pub mod cluster;
pub mod credits;
pub mod engine;
pub mod experiment;
pub mod ids;
pub mod scalar;
pub mod scenario;
pub mod scheduler;
pub mod telemetry;
pub mod workload;

pub use scalar::Scalar;

/// Double-precision token bucket used by the simulator.
pub type Bucket = credits::TokenBucket<f64>;
/// Single-precision token bucket, for callers that only need the formulas.
pub type BucketF32 = credits::TokenBucket<f32>;
