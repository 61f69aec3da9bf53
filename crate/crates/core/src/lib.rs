//! Privacy-preserving Berrut approximated coded computing (PBACC).
//!
//! Data is split into `K` parts, mixed with `T` random noise blocks through a
//! Berrut rational interpolant and evaluated at `N` worker nodes. Any subset of
//! worker results can be interpolated back to an approximation of the
//! function applied to the original data, while `c` colluding workers learn a
//! bounded number of bits per element.

pub mod codec;
pub mod error;
pub mod harness;
pub mod interpolation;
pub mod learners;
pub mod privacy;
pub mod protocols;
pub mod seed;
pub mod tensor;

pub use codec::{decode, encode, encode_padded, EncodedShare, Encoding, NoiseSpec, PointwiseFn};
pub use error::{Error, Result};
pub use interpolation::{make_nodes, CodingPlan, NodeFamily, NodeKind};
pub use privacy::{worst_case_leakage, LeakageReport, NoiseModel, PrivacyConfig, SearchStrategy};
pub use seed::SeedTree;
pub use tensor::Tensor;
