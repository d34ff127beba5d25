//! Locality of the Prüfer code under single-entry mutation.
//!
//! * [`tree`]: labeled trees and the edge distance `Δ`.
//! * [`codec`]: the Prüfer encoder and rear-to-front decoder.
//! * [`coupled`]: lockstep decoding of a mutated pair with the per-step
//!   case analysis and event instrumentation.
//! * [`exact`]: exhaustive distribution of `Δ` for small `n`.
//! * [`monte_carlo`]: deterministic parallel sampling for large `n`.

pub mod codec;
pub mod coupled;
pub mod exact;
pub mod monte_carlo;
pub mod stats;
pub mod tree;

pub use codec::{decode, decode_with, encode, h_map, CodecError, Decoder, HMap, PruferString};
pub use coupled::{
    decode_pair, CaseLabel, CoupledDecoder, CoupledError, CoupledState, DecodeTrace, Detail,
    EventFlags, MutationPair, PairOutcome, StepRecord, Thresholds, TraceOptions,
};
pub use exact::{
    count_event_e, enumerate_all, enumerate_all_with, enumerate_mu, enumerate_mu_with,
    EnumerationError, EnumerationOptions, ExactDistribution, ExactRow,
};
pub use monte_carlo::{
    curve_sweep, curve_sweep_with, estimate_delta_dist, estimate_marginal, estimate_marginal_with,
    sample_pair, DistEstimate, MuSpec, SimConfig, SimError, SimRow, SweepRow,
};
pub use tree::{tree_distance, Edge, EdgeSet, LabeledTree, NotATree, TreeError, Vertex};
