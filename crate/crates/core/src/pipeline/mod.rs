//! Event-log ingestion, sessionization, featurization, and splitting.

pub mod event;
pub mod feature;
pub mod schema;
pub mod session;
pub mod split;

pub use event::{parse_events, EventType, ParseOutcome, RawEvent, RowError};
pub use feature::{featurize, featurize_matrix, FeatureMatrix};
pub use schema::{build_schema, FeatureLayout, FeatureMode, FeatureSchema, VocabCaps};
pub use session::{sessionize, truncate_at_purchase, Session};
pub use split::{
    class_weights, prepare_dataset, split_sessions_by_user, DatasetSplit, ExclusionReport,
    PrepareOptions, SessionSplit,
};
