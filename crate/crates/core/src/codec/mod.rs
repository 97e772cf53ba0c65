//! Schema-aware encoding of mixed continuous/discrete tables: mode-specific
//! normalization, one-hot categories, conditional vectors, and
//! training-by-sampling.

mod encode;
mod gmm;
mod ingest;
mod sampler;
mod schema;
mod table;

pub use encode::{decode, encode, EncodedMatrix};
pub use gmm::{fit_fixed, fit_modes, responsibilities, GmmConfig, MixtureFit, Mode, ModeSelection};
pub use ingest::{load_csv, read_csv, Layout, LoadOptions, Loaded, BACKBLAZE_TARGET};
pub use sampler::{log_frequency_weights, sample_condition, CondVector, ConditionSampler, MatchIndex};
pub use schema::{
    fit_schema, median, ColumnMeta, CondSlot, FitReport, Span, SpanRole, TableSchema, ALPHA_SCALE,
};
pub use table::{Column, ColumnKind, Table};
