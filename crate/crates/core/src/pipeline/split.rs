//! User-disjoint train/validation/test splitting and class weights.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::ClassWeights;
use crate::pipeline::feature::{featurize_matrix, FeatureMatrix};
use crate::pipeline::schema::{build_schema, FeatureMode, FeatureSchema, VocabCaps};
use crate::pipeline::session::{truncate_at_purchase, Session};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: FeatureMatrix,
    pub validation: FeatureMatrix,
    pub test: FeatureMatrix,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl DatasetSplit {
    pub fn schema_digest(&self) -> &str {
        &self.train.schema_digest
    }
}

/// Sessions grouped by assigned part, before featurization.
#[derive(Debug)]
pub struct SessionSplit {
    pub train: Vec<Session>,
    pub validation: Vec<Session>,
    pub test: Vec<Session>,
}

/// Sessions dropped because truncation left them with no events.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub excluded: Vec<ExcludedSession>,
    pub sessions_before: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcludedSession {
    pub session_id: String,
    pub user_id: String,
    pub label: u8,
}

fn validate_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(Error::Split(format!(
            "fractions must all be positive, got {fractions:?}"
        )));
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions must sum to 1, got {fractions:?}"
        )));
    }
    Ok(())
}

/// Shuffles users deterministically and assigns each user's whole session
/// block to one part by cumulative session-count quota, so no user crosses
/// a part boundary.
pub fn split_sessions_by_user(
    sessions: Vec<Session>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SessionSplit> {
    validate_fractions(fractions)?;

    // Distinct users in first-appearance order, then a seeded shuffle.
    let mut users: Vec<String> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for s in &sessions {
            if seen.insert(s.user_id.clone()) {
                users.push(s.user_id.clone());
            }
        }
    }
    if users.len() < 3 {
        return Err(Error::Split(format!(
            "need at least 3 users to split, got {}",
            users.len()
        )));
    }
    let mut rng = substream(seed, Stream::Split);
    users.shuffle(&mut rng);

    let mut session_count: std::collections::HashMap<&str, usize> =
        std::collections::HashMap::new();
    for s in &sessions {
        *session_count.entry(s.user_id.as_str()).or_insert(0) += 1;
    }
    let total = sessions.len() as f64;
    let cut1 = fractions.0 * total;
    let cut2 = (fractions.0 + fractions.1) * total;

    let mut assignment: std::collections::HashMap<&str, u8> = std::collections::HashMap::new();
    let mut cumulative = 0usize;
    for user in &users {
        let part = if (cumulative as f64) < cut1 {
            0
        } else if (cumulative as f64) < cut2 {
            1
        } else {
            2
        };
        assignment.insert(user.as_str(), part);
        cumulative += session_count.get(user.as_str()).copied().unwrap_or(0);
    }

    let mut split = SessionSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for s in sessions {
        match assignment.get(s.user_id.as_str()) {
            Some(0) => split.train.push(s),
            Some(1) => split.validation.push(s),
            _ => split.test.push(s),
        }
    }
    for (name, part) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        if part.is_empty() {
            return Err(Error::Split(format!(
                "quota assignment left the {name} part empty; provide more users or adjust fractions"
            )));
        }
    }
    Ok(split)
}

/// Inverse-frequency class weights: w_c = N / (2 * N_c).
pub fn class_weights(labels: &[f64]) -> Result<ClassWeights> {
    let n1 = labels.iter().filter(|&&y| y >= 0.5).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateLabels(format!(
            "both classes required, got {n0} negatives and {n1} positives"
        )));
    }
    let n = labels.len() as f64;
    Ok(ClassWeights {
        w0: n / (2.0 * n0 as f64),
        w1: n / (2.0 * n1 as f64),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareOptions {
    pub fractions: (f64, f64, f64),
    pub vocab_caps: VocabCaps,
    pub mode: FeatureMode,
    pub seed: u64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            fractions: (0.8, 0.1, 0.1),
            vocab_caps: VocabCaps::default(),
            mode: FeatureMode::Flat,
            seed: 0,
        }
    }
}

/// Full preparation: truncate at first purchase, exclude sessions that end
/// up empty, split by user, fit the schema on the training part only, and
/// featurize all three parts.
pub fn prepare_dataset(
    sessions: Vec<Session>,
    options: &PrepareOptions,
) -> Result<(DatasetSplit, FeatureSchema, ExclusionReport)> {
    let sessions_before = sessions.len();
    let mut report = ExclusionReport {
        excluded: Vec::new(),
        sessions_before,
    };
    let mut kept = Vec::with_capacity(sessions.len());
    for session in sessions {
        let truncated = truncate_at_purchase(session);
        if truncated.events.is_empty() {
            report.excluded.push(ExcludedSession {
                session_id: truncated.session_id,
                user_id: truncated.user_id,
                label: truncated.label,
            });
        } else {
            kept.push(truncated);
        }
    }

    let split = split_sessions_by_user(kept, options.fractions, options.seed)?;
    let schema = build_schema(&split.train, options.vocab_caps, options.mode)?;
    let train = featurize_matrix(&split.train, &schema, options.mode)?;
    let validation = featurize_matrix(&split.validation, &schema, options.mode)?;
    let test = featurize_matrix(&split.test, &schema, options.mode)?;

    Ok((
        DatasetSplit {
            train,
            validation,
            test,
            fractions: options.fractions,
            seed: options.seed,
        },
        schema,
        report,
    ))
}
