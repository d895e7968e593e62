//! Grouping events into labeled shopping sessions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::event::{EventType, RawEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    /// Sorted non-decreasing by event_time; ties keep input order.
    pub events: Vec<RawEvent>,
    /// 1 iff the original session contained at least one purchase.
    pub label: u8,
}

impl Session {
    pub fn first_event_time(&self) -> Option<i64> {
        self.events.first().map(|e| e.event_time)
    }

    pub fn duration_seconds(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => (b.event_time - a.event_time) as f64,
            _ => 0.0,
        }
    }
}

/// Groups events by `user_session`, time-sorts each group (stable, so ties
/// keep input order), labels by purchase presence, and emits sessions
/// ordered by first event time (input order breaks exact ties).
pub fn sessionize(events: Vec<RawEvent>) -> Result<Vec<Session>> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<RawEvent>> = Vec::new();
    for event in events {
        match index.get(&event.user_session) {
            Some(&i) => groups[i].push(event),
            None => {
                index.insert(event.user_session.clone(), groups.len());
                groups.push(vec![event]);
            }
        }
    }

    let mut sessions = Vec::with_capacity(groups.len());
    for (input_order, mut group) in groups.into_iter().enumerate() {
        let session_id = group[0].user_session.clone();
        let user_id = group[0].user_id.clone();
        if let Some(bad) = group.iter().find(|e| e.user_id != user_id) {
            return Err(Error::SessionIntegrity(format!(
                "session {:?} spans users {:?} and {:?}",
                session_id, user_id, bad.user_id
            )));
        }
        group.sort_by_key(|e| e.event_time);
        let label = u8::from(group.iter().any(|e| e.event_type == EventType::Purchase));
        sessions.push((
            input_order,
            Session {
                session_id,
                user_id,
                events: group,
                label,
            },
        ));
    }

    sessions.sort_by_key(|(order, s)| (s.first_event_time().unwrap_or(i64::MAX), *order));
    Ok(sessions.into_iter().map(|(_, s)| s).collect())
}

/// Drops everything from the first purchase event onward, keeping the label.
/// A purchase-first session yields an empty event list; callers exclude
/// those and report them.
pub fn truncate_at_purchase(session: Session) -> Session {
    if session.label == 0 {
        return session;
    }
    let cut = session
        .events
        .iter()
        .position(|e| e.event_type == EventType::Purchase)
        .unwrap_or(session.events.len());
    Session {
        events: session.events.into_iter().take(cut).collect(),
        ..session
    }
}
