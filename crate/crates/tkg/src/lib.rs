//! Temporal knowledge graphs: quadruple storage with a chronological
//! adjacency index, tab-separated file formats, time splits, subsampling,
//! alignment noise and a synthetic bilingual generator.

pub mod align;
pub mod error;
pub mod graph;
pub mod interval;
pub mod io;
pub mod split;
pub mod synth;
pub mod vocab;

pub use align::{inject_alignment_noise, AlignmentPair, AlignmentSet, Provenance};
pub use error::{Result, TkgError};
pub use graph::{EntityId, History, Neighbor, Quadruple, RelationId, TemporalKG, TimeStep};
pub use interval::{expand_intervals, IntervalEvent};
pub use io::{load_alignments, load_quadruples, LoadOptions, SymbolMode};
pub use split::{split_by_time, subsample_events, SplitSpec, Splits};
pub use synth::{generate_synthetic_pair, SynthConfig, SyntheticPair};
pub use vocab::Vocab;
