//! Synthetic event-log generator with a planted purchase-propensity model.
//!
//! Sessions are drawn from simple heavy-tailed distributions; the purchase
//! label is Bernoulli in a logistic propensity over session features, with
//! the intercept bisected so the realized positive rate lands on target.
//! Because the labels are coupled to fixed uniform draws, the bisection
//! controls the realized rate directly, not just its expectation.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::roc_auc;
use crate::pipeline::event::format_timestamp;
use crate::rng::{substream, Stream};
use crate::tensor::sigmoid;

/// 2019-10-01 00:00:00 UTC; session start times spread over ~6 months.
const BASE_TIMESTAMP: i64 = 1_569_888_000;
const TIME_SPAN_SECONDS: i64 = 182 * 24 * 3600;
const CART_PROBABILITY: f64 = 0.25;
const MISSING_CATEGORY_RATE: f64 = 0.10;
const MISSING_BRAND_RATE: f64 = 0.15;
const MEAN_GAP_SECONDS: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensityCoefficients {
    pub cart_count: f64,
    pub log_price: f64,
    pub duration_minutes: f64,
    pub distinct_products: f64,
    pub intercept: f64,
}

impl Default for PropensityCoefficients {
    fn default() -> Self {
        Self {
            cart_count: 0.75,
            log_price: 0.9,
            duration_minutes: 0.12,
            distinct_products: 0.35,
            intercept: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_users: usize,
    /// Poisson mean; every user gets at least one session.
    pub sessions_per_user: f64,
    /// Geometric mean; every session gets at least one event.
    pub events_per_session: f64,
    pub n_brands: usize,
    pub n_categories: usize,
    pub n_products: usize,
    /// Log-normal price parameters.
    pub price_log_mean: f64,
    pub price_log_sigma: f64,
    pub propensity: PropensityCoefficients,
    pub target_positive_rate: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            sessions_per_user: 3.0,
            events_per_session: 8.0,
            n_brands: 40,
            n_categories: 15,
            n_products: 400,
            price_log_mean: 3.5,
            price_log_sigma: 0.8,
            propensity: PropensityCoefficients::default(),
            target_positive_rate: 0.1662,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_users", self.n_users),
            ("n_brands", self.n_brands),
            ("n_categories", self.n_categories),
            ("n_products", self.n_products),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.sessions_per_user < 1.0 || self.events_per_session < 1.0 {
            return Err(Error::Config(
                "sessions_per_user and events_per_session must be >= 1".to_string(),
            ));
        }
        if !(0.0 < self.target_positive_rate && self.target_positive_rate < 1.0) {
            return Err(Error::Config(format!(
                "target_positive_rate must be in (0, 1), got {}",
                self.target_positive_rate
            )));
        }
        Ok(())
    }
}

/// Ground-truth sidecar entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub session_id: String,
    pub propensity: f64,
    pub label: u8,
}

#[derive(Debug)]
pub struct Generated {
    /// Event CSV in the exact ingestion schema.
    pub csv_bytes: Vec<u8>,
    pub truth: Vec<TruthEntry>,
    pub realized_rate: f64,
    pub n_sessions: usize,
}

struct DraftEvent {
    time: i64,
    event_type: &'static str,
    product: usize,
    price: f64,
}

struct DraftSession {
    session_id: String,
    user_id: String,
    events: Vec<DraftEvent>,
    linear: f64,
    uniform: f64,
}

/// Generates the event CSV and its ground-truth sidecar.
pub fn generate(config: &GeneratorConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = substream(config.seed, Stream::Generator);

    let poisson = Poisson::new(config.sessions_per_user)
        .map_err(|e| Error::Config(format!("bad sessions_per_user: {e}")))?;
    let geometric = Geometric::new(1.0 / config.events_per_session)
        .map_err(|e| Error::Config(format!("bad events_per_session: {e}")))?;
    let price_dist = LogNormal::new(config.price_log_mean, config.price_log_sigma)
        .map_err(|e| Error::Config(format!("bad price distribution: {e}")))?;
    let gap_dist = Exp::new(1.0 / MEAN_GAP_SECONDS).expect("positive rate");

    let mut sessions: Vec<DraftSession> = Vec::new();
    let mut session_counter = 0usize;
    for user in 0..config.n_users {
        let user_id = format!("u{user:06}");
        let n_sessions = (poisson.sample(&mut rng) as usize).max(1);
        for _ in 0..n_sessions {
            let session_id = format!("s{session_counter:08}");
            session_counter += 1;
            let n_events = 1 + geometric.sample(&mut rng) as usize;
            let start = BASE_TIMESTAMP + rng.gen_range(0..TIME_SPAN_SECONDS);

            let mut events = Vec::with_capacity(n_events);
            let mut time = start;
            let mut cart_count = 0usize;
            let mut log_price_sum = 0.0;
            let mut distinct: std::collections::HashSet<usize> = std::collections::HashSet::new();
            for i in 0..n_events {
                if i > 0 {
                    time += 1 + gap_dist.sample(&mut rng) as i64;
                }
                let is_cart = rng.gen_bool(CART_PROBABILITY);
                if is_cart {
                    cart_count += 1;
                }
                let product = rng.gen_range(0..config.n_products);
                distinct.insert(product);
                let price = (price_dist.sample(&mut rng) * 100.0).round() / 100.0;
                log_price_sum += (1.0 + price).ln();
                events.push(DraftEvent {
                    time,
                    event_type: if is_cart { "cart" } else { "view" },
                    product,
                    price,
                });
            }

            let duration_minutes = (time - start) as f64 / 60.0;
            let c = &config.propensity;
            let linear = c.intercept
                + c.cart_count * cart_count as f64
                + c.log_price * (log_price_sum / n_events as f64)
                + c.duration_minutes * duration_minutes
                + c.distinct_products * distinct.len() as f64;
            let uniform = rng.gen::<f64>();

            sessions.push(DraftSession {
                session_id,
                user_id: user_id.clone(),
                events,
                linear,
                uniform,
            });
        }
    }

    let shift = calibrate_intercept(&sessions, config.target_positive_rate)?;

    // Labels, purchase events, truth sidecar, CSV.
    let mut truth = Vec::with_capacity(sessions.len());
    let mut positives = 0usize;
    let mut csv_bytes = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut csv_bytes);
        writer.write_record(crate::pipeline::event::CSV_HEADER)?;
        for session in &mut sessions {
            let propensity = sigmoid(session.linear + shift);
            let label = u8::from(session.uniform < propensity);
            if label == 1 {
                positives += 1;
                let last = session.events.last().expect("session has events");
                let purchase = DraftEvent {
                    time: last.time + 1 + gap_dist.sample(&mut rng) as i64,
                    event_type: "purchase",
                    product: last.product,
                    price: last.price,
                };
                session.events.push(purchase);
            }
            for event in &session.events {
                // Brand and category are fixed functions of the product, with
                // deterministic missing ranges to exercise the imputation path.
                let brand_missing = (event.product % 100) as f64 / 100.0 < MISSING_BRAND_RATE;
                let code_missing =
                    ((event.product / 7) % 100) as f64 / 100.0 < MISSING_CATEGORY_RATE;
                let brand = if brand_missing {
                    String::new()
                } else {
                    format!("brand{:03}", event.product % config.n_brands)
                };
                let category = event.product % config.n_categories;
                let code = if code_missing {
                    String::new()
                } else {
                    format!("electronics.cat{category:03}")
                };
                writer.write_record([
                    format_timestamp(event.time).as_str(),
                    event.event_type,
                    &format!("p{:05}", event.product),
                    &format!("c{:04}", category),
                    &code,
                    &brand,
                    &format!("{:.2}", event.price),
                    &session.user_id,
                    &session.session_id,
                ])?;
            }
            truth.push(TruthEntry {
                session_id: session.session_id.clone(),
                propensity,
                label,
            });
        }
        writer.flush()?;
    }

    Ok(Generated {
        csv_bytes,
        truth,
        realized_rate: positives as f64 / sessions.len() as f64,
        n_sessions: sessions.len(),
    })
}

/// Bisects the intercept shift so the realized positive count (with the
/// per-session uniforms held fixed) lands within tolerance of the target.
fn calibrate_intercept(sessions: &[DraftSession], target: f64) -> Result<f64> {
    if sessions.is_empty() {
        return Err(Error::Config("generator produced no sessions".to_string()));
    }
    let n = sessions.len() as f64;
    let rate_at = |shift: f64| -> f64 {
        sessions
            .iter()
            .filter(|s| s.uniform < sigmoid(s.linear + shift))
            .count() as f64
            / n
    };

    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = if (rate_at(lo) - target).abs() <= (rate_at(hi) - target).abs() {
        lo
    } else {
        hi
    };
    let tolerance = (1.0 / n).max(0.005);
    let realized = rate_at(shift);
    if (realized - target).abs() > tolerance {
        return Err(Error::Calibration(format!(
            "cannot reach positive rate {target} (best {realized} after bounded bisection)"
        )));
    }
    Ok(shift)
}

/// AUC of the true propensities against the realized labels: the ceiling a
/// learned model can approach on this data.
pub fn bayes_auc(truth: &[TruthEntry]) -> Result<f64> {
    let probs: Vec<f64> = truth.iter().map(|t| t.propensity).collect();
    let labels: Vec<f64> = truth.iter().map(|t| f64::from(t.label)).collect();
    Ok(roc_auc(&probs, &labels)?.auc)
}
