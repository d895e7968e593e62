//! Fitted feature schema: categorical vocabularies, min-max ranges, and the
//! resulting feature layout.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One state_size-wide row per session (a single time step).
    Flat,
    /// One row per event; a session is a sequence of rows.
    Sequence,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Flat => "flat",
            FeatureMode::Sequence => "sequence",
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(FeatureMode::Flat),
            "sequence" => Ok(FeatureMode::Sequence),
            other => Err(Error::Config(format!(
                "unknown feature mode {other:?}, expected flat or sequence"
            ))),
        }
    }
}

/// Top-K caps for the categorical vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabCaps {
    pub category_code: usize,
    pub brand: usize,
}

impl Default for VocabCaps {
    fn default() -> Self {
        Self {
            category_code: 500,
            brand: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    OneHot,
    Numeric,
}

/// One contiguous column span of the feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutGroup {
    pub name: String,
    pub kind: GroupKind,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub groups: Vec<LayoutGroup>,
    pub width: usize,
}

impl FeatureLayout {
    pub fn numeric_columns(&self) -> Vec<usize> {
        self.groups
            .iter()
            .filter(|g| g.kind == GroupKind::Numeric)
            .flat_map(|g| g.start..g.start + g.len)
            .collect()
    }

    pub fn one_hot_groups(&self) -> impl Iterator<Item = &LayoutGroup> {
        self.groups.iter().filter(|g| g.kind == GroupKind::OneHot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub mode: FeatureMode,
    /// Top-K category codes by training frequency; 'missing' and 'other'
    /// buckets are appended after these in the one-hot group.
    pub category_vocab: Vec<String>,
    pub brand_vocab: Vec<String>,
    pub price_min: f64,
    pub price_max: f64,
    /// Training maxima for the time/count features (natural minimum 0).
    pub max_gap_seconds: f64,
    pub max_duration_seconds: f64,
    pub max_event_count: f64,
    /// Names of the numeric features, in row order.
    pub derived_features: Vec<String>,
    pub state_size: usize,
}

pub const EVENT_TYPE_WIDTH: usize = 3;

impl FeatureSchema {
    pub fn category_width(&self) -> usize {
        self.category_vocab.len() + 2
    }

    pub fn brand_width(&self) -> usize {
        self.brand_vocab.len() + 2
    }

    /// Bucket index of a categorical value: vocabulary position, then
    /// 'missing', then 'other' for unseen values.
    pub fn bucket(vocab: &[String], value: Option<&str>) -> usize {
        match value {
            None => vocab.len(),
            Some(v) => vocab.iter().position(|x| x == v).unwrap_or(vocab.len() + 1),
        }
    }

    pub fn minmax_price(&self, price: f64) -> f64 {
        if self.price_max > self.price_min {
            ((price - self.price_min) / (self.price_max - self.price_min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Ratio against a training maximum with a zero origin, clamped to [0,1].
    pub fn ratio_to_max(value: f64, max: f64) -> f64 {
        if max > 0.0 {
            (value / max).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        let mut groups = Vec::new();
        let mut cursor = 0usize;
        let mut push = |name: &str, kind: GroupKind, len: usize, cursor: &mut usize| {
            groups.push(LayoutGroup {
                name: name.to_string(),
                kind,
                start: *cursor,
                len,
            });
            *cursor += len;
        };
        push(
            "event_type",
            GroupKind::OneHot,
            EVENT_TYPE_WIDTH,
            &mut cursor,
        );
        push(
            "category_code",
            GroupKind::OneHot,
            self.category_width(),
            &mut cursor,
        );
        push("brand", GroupKind::OneHot, self.brand_width(), &mut cursor);
        for name in &self.derived_features {
            push(name, GroupKind::Numeric, 1, &mut cursor);
        }
        FeatureLayout {
            groups,
            width: cursor,
        }
    }

    /// SHA-256 over the canonical JSON serialization; binds artifacts to the
    /// exact feature layout they were produced with.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn derived_feature_names(mode: FeatureMode) -> Vec<String> {
    let names: &[&str] = match mode {
        FeatureMode::Flat => &[
            "price_mean",
            "price_max",
            "price_min",
            "duration",
            "event_count",
            "distinct_product_ratio",
        ],
        FeatureMode::Sequence => &["price", "time_since_prev", "cumulative_time"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn top_k(counts: HashMap<String, u64>, k: usize) -> Vec<String> {
    let mut pairs: Vec<(String, u64)> = counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs.into_iter().take(k).map(|(v, _)| v).collect()
}

/// Fits vocabularies and min-max ranges on training sessions only.
pub fn build_schema(
    sessions: &[Session],
    caps: VocabCaps,
    mode: FeatureMode,
) -> Result<FeatureSchema> {
    if !sessions.iter().any(|s| !s.events.is_empty()) {
        return Err(Error::Fit(
            "schema fit requires at least one training session with events".to_string(),
        ));
    }

    let mut category_counts: HashMap<String, u64> = HashMap::new();
    let mut brand_counts: HashMap<String, u64> = HashMap::new();
    let mut price_min = f64::INFINITY;
    let mut price_max = f64::NEG_INFINITY;
    let mut max_gap = 0.0f64;
    let mut max_duration = 0.0f64;
    let mut max_events = 0.0f64;

    for session in sessions {
        if session.events.is_empty() {
            continue;
        }
        max_events = max_events.max(session.events.len() as f64);
        max_duration = max_duration.max(session.duration_seconds());
        let mut prev_time = None;
        for event in &session.events {
            if let Some(code) = &event.category_code {
                *category_counts.entry(code.clone()).or_insert(0) += 1;
            }
            if let Some(brand) = &event.brand {
                *brand_counts.entry(brand.clone()).or_insert(0) += 1;
            }
            price_min = price_min.min(event.price);
            price_max = price_max.max(event.price);
            if let Some(prev) = prev_time {
                max_gap = max_gap.max((event.event_time - prev) as f64);
            }
            prev_time = Some(event.event_time);
        }
    }

    let category_vocab = top_k(category_counts, caps.category_code);
    let brand_vocab = top_k(brand_counts, caps.brand);
    let derived_features = derived_feature_names(mode);
    let state_size = EVENT_TYPE_WIDTH
        + (category_vocab.len() + 2)
        + (brand_vocab.len() + 2)
        + derived_features.len();

    Ok(FeatureSchema {
        mode,
        category_vocab,
        brand_vocab,
        price_min,
        price_max,
        max_gap_seconds: max_gap,
        max_duration_seconds: max_duration,
        max_event_count: max_events,
        derived_features,
        state_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::event::{EventType, RawEvent};

    fn session(events: Vec<RawEvent>) -> Session {
        Session {
            session_id: events[0].user_session.clone(),
            user_id: events[0].user_id.clone(),
            label: 0,
            events,
        }
    }

    fn event(t: i64, brand: Option<&str>, code: Option<&str>, price: f64) -> RawEvent {
        RawEvent {
            event_time: t,
            event_type: EventType::View,
            product_id: "p".to_string(),
            category_id: "c".to_string(),
            category_code: code.map(String::from),
            brand: brand.map(String::from),
            price,
            user_id: "u".to_string(),
            user_session: "s".to_string(),
        }
    }

    #[test]
    fn two_brands_with_large_cap_give_width_four() {
        let sessions = vec![session(vec![
            event(0, Some("alpha"), None, 1.0),
            event(1, Some("beta"), None, 2.0),
            event(2, Some("alpha"), None, 3.0),
        ])];
        let schema = build_schema(
            &sessions,
            VocabCaps {
                category_code: 10,
                brand: 10,
            },
            FeatureMode::Flat,
        )
        .unwrap();
        assert_eq!(schema.brand_width(), 4);
        assert_eq!(schema.brand_vocab, vec!["alpha", "beta"]);
    }

    #[test]
    fn equal_prices_map_to_zero() {
        let sessions = vec![session(vec![
            event(0, None, None, 5.0),
            event(1, None, None, 5.0),
        ])];
        let schema = build_schema(&sessions, VocabCaps::default(), FeatureMode::Flat).unwrap();
        assert_eq!(schema.price_min, schema.price_max);
        assert_eq!(schema.minmax_price(5.0), 0.0);
    }

    #[test]
    fn state_size_matches_width_formula() {
        let sessions = vec![session(vec![
            event(0, Some("a"), Some("x.y"), 1.0),
            event(10, Some("b"), Some("x.z"), 2.0),
        ])];
        for (mode, derived) in [(FeatureMode::Flat, 6), (FeatureMode::Sequence, 3)] {
            let schema = build_schema(
                &sessions,
                VocabCaps {
                    category_code: 500,
                    brand: 500,
                },
                mode,
            )
            .unwrap();
            let expected = 3 + (2 + 2) + (2 + 2) + derived;
            assert_eq!(schema.state_size, expected);
            assert_eq!(schema.layout().width, expected);
        }
    }

    #[test]
    fn empty_training_set_is_a_fit_error() {
        assert!(matches!(
            build_schema(&[], VocabCaps::default(), FeatureMode::Flat),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn vocab_cap_keeps_most_frequent() {
        let sessions = vec![session(vec![
            event(0, Some("rare"), None, 1.0),
            event(1, Some("common"), None, 1.0),
            event(2, Some("common"), None, 1.0),
        ])];
        let schema = build_schema(
            &sessions,
            VocabCaps {
                category_code: 1,
                brand: 1,
            },
            FeatureMode::Flat,
        )
        .unwrap();
        assert_eq!(schema.brand_vocab, vec!["common"]);
        // Unseen and capped-out values fall into 'other'.
        assert_eq!(FeatureSchema::bucket(&schema.brand_vocab, Some("rare")), 2);
        assert_eq!(FeatureSchema::bucket(&schema.brand_vocab, None), 1);
    }

    #[test]
    fn digest_is_stable_and_layout_sensitive() {
        let sessions = vec![session(vec![
            event(0, Some("a"), None, 1.0),
            event(5, None, None, 2.0),
        ])];
        let a = build_schema(&sessions, VocabCaps::default(), FeatureMode::Flat).unwrap();
        let b = build_schema(&sessions, VocabCaps::default(), FeatureMode::Flat).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = build_schema(&sessions, VocabCaps::default(), FeatureMode::Sequence).unwrap();
        assert_ne!(a.digest(), c.digest());
    }
}
