//! Turning sessions into dense feature rows under a fitted schema.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use crate::pipeline::schema::{FeatureLayout, FeatureMode, FeatureSchema};
use crate::pipeline::session::Session;
use crate::tensor::Matrix;

/// Featurized sessions: row-major values plus the bookkeeping needed to map
/// rows back to sessions. In flat mode every session is one row; in sequence
/// mode a session owns a contiguous run of per-event rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub mode: FeatureMode,
    pub rows: Matrix,
    /// One label per session.
    pub labels: Vec<f64>,
    pub session_ids: Vec<String>,
    pub user_ids: Vec<String>,
    /// (first row, row count) per session; rows of a session are contiguous.
    pub session_ranges: Vec<(usize, usize)>,
    pub layout: FeatureLayout,
    pub schema_digest: String,
}

impl FeatureMatrix {
    pub fn n_sessions(&self) -> usize {
        self.labels.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.rows()
    }

    pub fn width(&self) -> usize {
        self.rows.cols()
    }

    /// Contiguous feature values of one session (seq_len x width, flattened).
    pub fn session_features(&self, i: usize) -> &[f64] {
        let (start, len) = self.session_ranges[i];
        let w = self.width();
        &self.rows.data()[start * w..(start + len) * w]
    }

    pub fn session_len(&self, i: usize) -> usize {
        self.session_ranges[i].1
    }

    pub fn positive_rate(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().sum::<f64>() / self.labels.len() as f64
    }
}

/// Writes a one-hot group: all zeros except the bucket.
fn one_hot(row: &mut [f64], start: usize, len: usize, bucket: usize) {
    debug_assert!(bucket < len);
    for v in &mut row[start..start + len] {
        *v = 0.0;
    }
    row[start + bucket] = 1.0;
}

/// Writes per-bucket occupancy fractions. The last nonzero bucket is set to
/// one minus the left-to-right partial sum before it, so summing the group
/// in column order yields exactly 1.0 (the final addition s + (1-s) rounds
/// to 1 for s in [0,1], and trailing buckets are exact zeros).
fn occupancy(row: &mut [f64], start: usize, counts: &[usize], total: usize) {
    debug_assert!(total > 0);
    let n = total as f64;
    let last_nonzero = counts
        .iter()
        .rposition(|&c| c > 0)
        .expect("occupancy group covers all events");
    let mut partial = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        let v = match b.cmp(&last_nonzero) {
            std::cmp::Ordering::Less => c as f64 / n,
            std::cmp::Ordering::Equal => 1.0 - partial,
            std::cmp::Ordering::Greater => 0.0,
        };
        row[start + b] = v;
        if b < last_nonzero {
            partial += v;
        }
    }
}

/// One row per event (sequence mode) or a single aggregate row (flat mode).
pub fn featurize(
    session: &Session,
    schema: &FeatureSchema,
    mode: FeatureMode,
) -> Result<Vec<Vec<f64>>> {
    if session.events.is_empty() {
        return Err(Error::Featurize(format!(
            "session {:?} has no events to featurize",
            session.session_id
        )));
    }
    let layout = layout_for(schema, mode);
    let width = layout.width;
    let cat_start = 3;
    let cat_width = schema.category_width();
    let brand_start = cat_start + cat_width;
    let brand_width = schema.brand_width();
    let numeric_start = brand_start + brand_width;

    match mode {
        FeatureMode::Sequence => {
            let t0 = session.events[0].event_time;
            let mut prev = t0;
            let mut rows = Vec::with_capacity(session.events.len());
            for event in &session.events {
                let mut row = vec![0.0; width];
                one_hot(&mut row, 0, 3, event.event_type.index());
                one_hot(
                    &mut row,
                    cat_start,
                    cat_width,
                    FeatureSchema::bucket(&schema.category_vocab, event.category_code.as_deref()),
                );
                one_hot(
                    &mut row,
                    brand_start,
                    brand_width,
                    FeatureSchema::bucket(&schema.brand_vocab, event.brand.as_deref()),
                );
                row[numeric_start] = schema.minmax_price(event.price);
                row[numeric_start + 1] = FeatureSchema::ratio_to_max(
                    (event.event_time - prev) as f64,
                    schema.max_gap_seconds,
                );
                row[numeric_start + 2] = FeatureSchema::ratio_to_max(
                    (event.event_time - t0) as f64,
                    schema.max_duration_seconds,
                );
                prev = event.event_time;
                rows.push(row);
            }
            Ok(rows)
        }
        FeatureMode::Flat => {
            let n = session.events.len();
            let mut row = vec![0.0; width];

            let mut type_counts = [0usize; 3];
            let mut cat_counts = vec![0usize; cat_width];
            let mut brand_counts = vec![0usize; brand_width];
            let mut distinct: HashSet<&str> = HashSet::new();
            let mut price_sum = 0.0;
            let mut price_lo = f64::INFINITY;
            let mut price_hi = f64::NEG_INFINITY;
            for event in &session.events {
                type_counts[event.event_type.index()] += 1;
                cat_counts[FeatureSchema::bucket(
                    &schema.category_vocab,
                    event.category_code.as_deref(),
                )] += 1;
                brand_counts[FeatureSchema::bucket(&schema.brand_vocab, event.brand.as_deref())] +=
                    1;
                distinct.insert(&event.product_id);
                let p = schema.minmax_price(event.price);
                price_sum += p;
                price_lo = price_lo.min(p);
                price_hi = price_hi.max(p);
            }

            occupancy(&mut row, 0, &type_counts, n);
            occupancy(&mut row, cat_start, &cat_counts, n);
            occupancy(&mut row, brand_start, &brand_counts, n);
            row[numeric_start] = price_sum / n as f64;
            row[numeric_start + 1] = price_hi;
            row[numeric_start + 2] = price_lo;
            row[numeric_start + 3] = FeatureSchema::ratio_to_max(
                session.duration_seconds(),
                schema.max_duration_seconds,
            );
            row[numeric_start + 4] = FeatureSchema::ratio_to_max(n as f64, schema.max_event_count);
            row[numeric_start + 5] = distinct.len() as f64 / n as f64;

            Ok(vec![row])
        }
    }
}

/// The layout for a requested mode under this schema's vocabularies. When the
/// requested mode matches the fitted one this is exactly `schema.layout()`.
pub fn layout_for(schema: &FeatureSchema, mode: FeatureMode) -> FeatureLayout {
    if mode == schema.mode {
        schema.layout()
    } else {
        let alt = FeatureSchema {
            mode,
            derived_features: match mode {
                FeatureMode::Flat => vec![
                    "price_mean".to_string(),
                    "price_max".to_string(),
                    "price_min".to_string(),
                    "duration".to_string(),
                    "event_count".to_string(),
                    "distinct_product_ratio".to_string(),
                ],
                FeatureMode::Sequence => vec![
                    "price".to_string(),
                    "time_since_prev".to_string(),
                    "cumulative_time".to_string(),
                ],
            },
            ..schema.clone()
        };
        alt.layout()
    }
}

/// Featurizes a batch of sessions into one matrix.
pub fn featurize_matrix(
    sessions: &[Session],
    schema: &FeatureSchema,
    mode: FeatureMode,
) -> Result<FeatureMatrix> {
    let layout = layout_for(schema, mode);
    let width = layout.width;
    let mut data: Vec<f64> = Vec::new();
    let mut labels = Vec::with_capacity(sessions.len());
    let mut session_ids = Vec::with_capacity(sessions.len());
    let mut user_ids = Vec::with_capacity(sessions.len());
    let mut ranges = Vec::with_capacity(sessions.len());
    let mut row_count = 0usize;

    for session in sessions {
        let rows = featurize(session, schema, mode)?;
        ranges.push((row_count, rows.len()));
        row_count += rows.len();
        for row in rows {
            debug_assert_eq!(row.len(), width);
            data.extend_from_slice(&row);
        }
        labels.push(f64::from(session.label));
        session_ids.push(session.session_id.clone());
        user_ids.push(session.user_id.clone());
    }

    Ok(FeatureMatrix {
        mode,
        rows: Matrix::from_vec(row_count, width, data)?,
        labels,
        session_ids,
        user_ids,
        session_ranges: ranges,
        layout,
        schema_digest: schema.digest(),
    })
}
