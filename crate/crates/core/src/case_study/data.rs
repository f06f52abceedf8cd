use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CaseStudyError;
use crate::semantics::Table;

pub const DEFAULT_CITIES: [&str; 8] = [
    "ashford", "belmont", "carver", "dunmore", "elkton", "fairview", "granby", "hollis",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n_consumers: usize,
    pub n_products: usize,
    pub cities: Vec<String>,
    /// Monthly rate bounds in dollars, drawn in whole cents.
    pub rate_range: (f64, f64),
    /// Household income bounds in whole dollars.
    pub income_range: (i64, i64),
    pub risk_levels: (u8, u8),
    /// Chance of each of a consumer's two subscription slots being filled.
    pub subscription_rate: f64,
    pub active_rate: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 42,
            n_consumers: 1000,
            n_products: 3,
            cities: DEFAULT_CITIES.iter().map(|c| c.to_string()).collect(),
            rate_range: (5.0, 25.0),
            income_range: (30_000, 150_000),
            risk_levels: (1, 5),
            subscription_rate: 0.6,
            active_rate: 0.8,
        }
    }
}

impl DatasetConfig {
    pub fn with_seed(seed: u64, n_consumers: usize) -> Self {
        DatasetConfig {
            seed,
            n_consumers,
            ..DatasetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), CaseStudyError> {
        let bad = |m: &str| Err(CaseStudyError::Config(m.to_string()));
        if self.n_products == 0 {
            return bad("n_products must be positive");
        }
        if self.cities.is_empty() || self.cities.iter().any(|c| !crate::logic::is_atom_name(c)) {
            return bad("cities must be a non-empty list of lowercase identifiers");
        }
        if !(self.rate_range.0 >= 0.0 && self.rate_range.0 <= self.rate_range.1 && self.rate_range.1.is_finite()) {
            return bad("rate_range must be an ordered pair of non-negative numbers");
        }
        if self.income_range.0 < 0 || self.income_range.0 > self.income_range.1 {
            return bad("income_range must be an ordered pair of non-negative integers");
        }
        if self.risk_levels.0 > self.risk_levels.1 {
            return bad("risk_levels must be ordered");
        }
        for p in [self.subscription_rate, self.active_rate] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Generated tables plus the city median fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub consumers: Table,
    pub subscriptions: Table,
    pub products: Table,
    pub medians: Table,
}

fn table(columns: &[&str], rows: Vec<Vec<String>>) -> Table {
    Table {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
    }
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset, CaseStudyError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.income_range;
    let span = hi - lo;
    let medians: Vec<Vec<String>> = cfg
        .cities
        .iter()
        .map(|c| vec![c.clone(), rng.gen_range(lo + span / 4..=lo + 3 * span / 4).to_string()])
        .collect();
    let products = (1..=cfg.n_products)
        .map(|i| vec![format!("product{i}"), format!("Product {i}")])
        .collect();
    let width = cfg.n_consumers.max(1).to_string().len().max(4);
    let (rate_lo, rate_hi) = ((cfg.rate_range.0 * 100.0).round() as i64, (cfg.rate_range.1 * 100.0).round() as i64);
    let mut consumers = Vec::with_capacity(cfg.n_consumers);
    let mut subscriptions = Vec::new();
    for i in 1..=cfg.n_consumers {
        let id = format!("c{i:0width$}");
        let city = &cfg.cities[rng.gen_range(0..cfg.cities.len())];
        let income = rng.gen_range(lo..=hi);
        let risk = rng.gen_range(cfg.risk_levels.0..=cfg.risk_levels.1);
        consumers.push(vec![id.clone(), city.clone(), income.to_string(), risk.to_string()]);
        for _ in 0..2 {
            if !rng.gen_bool(cfg.subscription_rate) {
                continue;
            }
            let cents = rng.gen_range(rate_lo..=rate_hi);
            let status = if rng.gen_bool(cfg.active_rate) { "active" } else { "cancelled" };
            subscriptions.push(vec![
                format!("s{:0width$}", subscriptions.len() + 1),
                id.clone(),
                format!("product{}", rng.gen_range(1..=cfg.n_products)),
                format!("{}.{:02}", cents / 100, cents % 100),
                status.to_string(),
            ]);
        }
    }
    Ok(Dataset {
        consumers: table(&["id", "city", "household_income", "churn_risk"], consumers),
        subscriptions: table(&["id", "consumer_id", "product_id", "monthly_rate", "status"], subscriptions),
        products: table(&["id", "name"], products),
        medians: table(&["city", "median_income"], medians),
    })
}

pub fn medians_json(medians: &Table) -> String {
    let rows: Vec<BTreeMap<&str, serde_json::Value>> = medians
        .rows
        .iter()
        .map(|r| {
            let city = r[0].clone().unwrap_or_default();
            let income: i64 = r[1].as_deref().and_then(|m| m.parse().ok()).unwrap_or_default();
            BTreeMap::from([("city", city.into()), ("median_income", income.into())])
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("serializable") + "\n"
}

impl Dataset {
    /// Writes `data/<entity>.csv` and `fixtures/median_income.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), CaseStudyError> {
        let data = dir.join("data");
        let fixtures = dir.join("fixtures");
        std::fs::create_dir_all(&data)?;
        std::fs::create_dir_all(&fixtures)?;
        for (name, t) in [("consumer", &self.consumers), ("subscription", &self.subscriptions), ("product", &self.products)] {
            std::fs::write(data.join(format!("{name}.csv")), t.to_csv().map_err(|e| CaseStudyError::Config(e.to_string()))?)?;
        }
        std::fs::write(fixtures.join("median_income.json"), medians_json(&self.medians))?;
        Ok(())
    }
}
