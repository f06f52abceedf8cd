use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::CaseStudyError;
use crate::semantics::Table;
use crate::synthesis::Params;

/// The study constants shared by engine and oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyParams {
    pub product: String,
    pub rate_threshold: f64,
    pub risk_level: i64,
    pub campaign: String,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            product: "product1".into(),
            rate_threshold: 10.0,
            risk_level: 4,
            campaign: "retention_offer".into(),
        }
    }
}

impl StudyParams {
    pub fn from_params(p: &Params) -> Result<Self, CaseStudyError> {
        serde_json::from_value(serde_json::to_value(p).expect("map")).map_err(|e| CaseStudyError::Config(e.to_string()))
    }

    pub fn to_params(&self) -> Params {
        serde_json::from_value(serde_json::to_value(self).expect("struct")).expect("object")
    }
}

fn col(t: &Table, name: &str) -> Result<usize, CaseStudyError> {
    t.column(name).ok_or_else(|| CaseStudyError::Config(format!("table lacks column `{name}`")))
}

fn cell(t: &Table, row: usize, c: usize) -> &str {
    t.cell(row, c).unwrap_or("")
}

fn number<T: std::str::FromStr>(raw: &str, what: &str) -> Result<T, CaseStudyError> {
    raw.trim()
        .parse()
        .map_err(|_| CaseStudyError::Config(format!("bad {what} `{raw}`")))
}

/// Consumers with an active subscription to the product at or above the
/// rate threshold, at the risk level, and earning above their city median.
/// Straight row filtering over the raw tables.
pub fn oracle_target_set(
    consumers: &Table,
    subscriptions: &Table,
    medians: &Table,
    params: &StudyParams,
) -> Result<BTreeSet<String>, CaseStudyError> {
    let (m_city, m_value) = (col(medians, "city")?, col(medians, "median_income")?);
    let mut median: HashMap<&str, i64> = HashMap::new();
    for r in 0..medians.rows.len() {
        median.insert(cell(medians, r, m_city), number(cell(medians, r, m_value), "median")?);
    }
    let (c_id, c_city, c_income, c_risk) = (
        col(consumers, "id")?,
        col(consumers, "city")?,
        col(consumers, "household_income")?,
        col(consumers, "churn_risk")?,
    );
    let mut profile: HashMap<&str, (&str, i64, i64)> = HashMap::new();
    for r in 0..consumers.rows.len() {
        profile.insert(
            cell(consumers, r, c_id),
            (
                cell(consumers, r, c_city),
                number(cell(consumers, r, c_income), "income")?,
                number(cell(consumers, r, c_risk), "risk")?,
            ),
        );
    }
    let (s_consumer, s_product, s_rate, s_status) = (
        col(subscriptions, "consumer_id")?,
        col(subscriptions, "product_id")?,
        col(subscriptions, "monthly_rate")?,
        col(subscriptions, "status")?,
    );
    let mut out = BTreeSet::new();
    for r in 0..subscriptions.rows.len() {
        let rate: f64 = number(cell(subscriptions, r, s_rate), "rate")?;
        if cell(subscriptions, r, s_status) != "active"
            || cell(subscriptions, r, s_product) != params.product
            || rate < params.rate_threshold
        {
            continue;
        }
        let consumer = cell(subscriptions, r, s_consumer);
        let Some(&(city, income, risk)) = profile.get(consumer) else { continue };
        if risk != params.risk_level {
            continue;
        }
        let m = median
            .get(city)
            .ok_or_else(|| CaseStudyError::MissingMedian(city.to_string()))?;
        if income > *m {
            out.insert(consumer.to_string());
        }
    }
    Ok(out)
}
