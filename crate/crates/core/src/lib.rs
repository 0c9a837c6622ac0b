//! Disk-backed index for collections of fixed-length data series.
//!
//! Series are summarized with PAA/SAX/iSAX words. Internal nodes split on an
//! adaptively chosen subset of segments, small sibling leaves are packed into
//! shared files under a bounded wildcard mask, and queries run approximate
//! (budgeted) or exact (lower-bound pruned) kNN under ED or DTW.

pub mod error;
pub mod eval;
pub mod index;
pub mod packing;
pub mod query;
pub mod split;
pub mod summarization;
pub mod updates;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

pub use error::{Error, Result};

/// Scalar type the summarization and distance kernels are generic over.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

/// Routing key of a child: the concatenated promoted bits of the chosen
/// segments, first chosen segment in the most significant position.
pub type Sid = u64;

pub type Series = summarization::DataSeries<f64>;
pub type Series32 = summarization::DataSeries<f32>;
pub type Paa = summarization::PaaVector<f64>;
pub type Paa32 = summarization::PaaVector<f32>;
pub type Envelope = summarization::QueryEnvelope<f64>;
