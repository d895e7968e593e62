//! Raw event rows in the store's CSV schema.

use std::fmt;
use std::io::Read;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "event_time",
    "event_type",
    "product_id",
    "category_id",
    "category_code",
    "brand",
    "price",
    "user_id",
    "user_session",
];

pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventType {
    View,
    Cart,
    Purchase,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::View => "view",
            EventType::Cart => "cart",
            EventType::Purchase => "purchase",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "view" => Some(EventType::View),
            "cart" => Some(EventType::Cart),
            "purchase" => Some(EventType::Purchase),
            _ => None,
        }
    }

    pub const ALL: [EventType; 3] = [EventType::View, EventType::Cart, EventType::Purchase];

    /// Position inside the fixed event-type one-hot group.
    pub fn index(self) -> usize {
        match self {
            EventType::View => 0,
            EventType::Cart => 1,
            EventType::Purchase => 2,
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    /// Unix seconds, UTC.
    pub event_time: i64,
    pub event_type: EventType,
    pub product_id: String,
    pub category_id: String,
    pub category_code: Option<String>,
    pub brand: Option<String>,
    pub price: f64,
    pub user_id: String,
    pub user_session: String,
}

/// A row that could not be turned into a [`RawEvent`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    /// 1-based line in the input, counting the header.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub events: Vec<RawEvent>,
    pub errors: Vec<RowError>,
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let trimmed = s.strip_suffix(" UTC").unwrap_or(s);
    NaiveDateTime::parse_from_str(trimmed, TIME_FORMAT)
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(secs: i64) -> String {
    let dt = chrono::DateTime::from_timestamp(secs, 0).expect("timestamp in range");
    format!("{} UTC", dt.format(TIME_FORMAT))
}

/// Reads the event CSV. Malformed rows are reported with their line number
/// instead of being dropped silently; a bad or missing header is fatal.
pub fn parse_events<R: Read>(reader: R) -> Result<ParseOutcome> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read CSV header: {e}")))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != CSV_HEADER {
        return Err(Error::Schema(format!(
            "unexpected CSV header {:?}, expected {:?}",
            got, CSV_HEADER
        )));
    }

    let mut outcome = ParseOutcome::default();
    for record in csv_reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                outcome.errors.push(RowError {
                    line,
                    message: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_record(&record) {
            Ok(event) => outcome.events.push(event),
            Err(message) => outcome.errors.push(RowError { line, message }),
        }
    }
    Ok(outcome)
}

fn parse_record(record: &csv::StringRecord) -> std::result::Result<RawEvent, String> {
    if record.len() != CSV_HEADER.len() {
        return Err(format!(
            "expected {} fields, got {}",
            CSV_HEADER.len(),
            record.len()
        ));
    }
    let field = |i: usize| record.get(i).unwrap_or("");

    let event_time = parse_timestamp(field(0))
        .ok_or_else(|| format!("unparseable event_time {:?}", field(0)))?;
    let event_type =
        EventType::parse(field(1)).ok_or_else(|| format!("unknown event_type {:?}", field(1)))?;
    let price: f64 = field(6)
        .parse()
        .map_err(|_| format!("unparseable price {:?}", field(6)))?;
    if !price.is_finite() || price < 0.0 {
        return Err(format!(
            "price must be a finite non-negative number, got {price}"
        ));
    }
    let user_session = field(8).to_string();
    if user_session.is_empty() {
        return Err("empty user_session".to_string());
    }

    let optional = |s: &str| {
        if s.is_empty() {
            None
        } else {
            Some(s.to_string())
        }
    };

    Ok(RawEvent {
        event_time,
        event_type,
        product_id: field(2).to_string(),
        category_id: field(3).to_string(),
        category_code: optional(field(4)),
        brand: optional(field(5)),
        price,
        user_id: field(7).to_string(),
        user_session,
    })
}
