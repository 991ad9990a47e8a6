//! Environmental and fiscal benefits of a policy against its subsidy cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Year = i64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostBenefitError {
    #[error("no cost-benefit input rows")]
    NoInputs,
    #[error("year {0} has no usable treated units")]
    EmptyYear(Year),
    #[error("price index has no entry for {0}")]
    MissingPriceIndex(Year),
    #[error("unit {unit}, year {year}: population is missing")]
    MissingPopulation { unit: String, year: Year },
    #[error("no average wage is observed for {0} or any earlier year")]
    MissingWage(Year),
    #[error("year {year}: rows disagree on the average wage ({first} vs {second})")]
    InconsistentWage { year: Year, first: f64, second: f64 },
    #[error("unit {unit}: exposure-specific ATTs need an adoption year")]
    MissingAdoptionYear { unit: String },
    #[error("time-average cost is zero")]
    ZeroCost,
    #[error("invalid constant: {0}")]
    InvalidConstant(String),
}

/// Policy-accounting constants. `exchange_rate` and `price_index` have no
/// defaults; everything else defaults to values for Brazilian municipalities
/// in base-year reais.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbConstants {
    /// Yearly urban-transport spending per person, base-year currency.
    #[serde(default = "defaults::per_capita_expense")]
    pub per_capita_expense: f64,
    /// Per tCO2e, in US dollars of `scc_year`.
    #[serde(default = "defaults::social_cost_of_carbon")]
    pub social_cost_of_carbon: f64,
    #[serde(default = "defaults::scc_year")]
    pub scc_year: Year,
    /// Local currency per US dollar in `scc_year`.
    pub exchange_rate: f64,
    pub price_index: PriceIndex,
    #[serde(default = "defaults::base_year")]
    pub base_year: Year,
    #[serde(default = "defaults::tax_payroll")]
    pub tax_payroll: f64,
    #[serde(default = "defaults::tax_income")]
    pub tax_income: f64,
    /// Monthly wages paid per year (twelve plus the thirteenth salary and
    /// the vacation bonus).
    #[serde(default = "defaults::wages_per_year")]
    pub wages_per_year: f64,
}

mod defaults {
    use super::Year;

    pub fn per_capita_expense() -> f64 {
        123.48
    }
    pub fn social_cost_of_carbon() -> f64 {
        76.0
    }
    pub fn scc_year() -> Year {
        2020
    }
    pub fn base_year() -> Year {
        2021
    }
    pub fn tax_payroll() -> f64 {
        0.20
    }
    pub fn tax_income() -> f64 {
        0.089
    }
    pub fn wages_per_year() -> f64 {
        13.33
    }
}

/// Year → price level. Serialized as a table with year keys.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct PriceIndex(pub BTreeMap<Year, f64>);

impl TryFrom<BTreeMap<String, f64>> for PriceIndex {
    type Error = String;

    fn try_from(raw: BTreeMap<String, f64>) -> Result<Self, String> {
        raw.into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<Year>()
                    .map(|y| (y, v))
                    .map_err(|_| format!("price index key {k:?} is not a year"))
            })
            .collect::<Result<_, _>>()
            .map(PriceIndex)
    }
}

impl From<PriceIndex> for BTreeMap<String, f64> {
    fn from(p: PriceIndex) -> Self {
        p.0.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl PriceIndex {
    pub fn get(&self, year: Year) -> Result<f64, CostBenefitError> {
        self.0
            .get(&year)
            .copied()
            .ok_or(CostBenefitError::MissingPriceIndex(year))
    }
}

impl CbConstants {
    /// Default constants with the two required inputs supplied.
    pub fn with_defaults(exchange_rate: f64, price_index: PriceIndex) -> Self {
        Self {
            per_capita_expense: defaults::per_capita_expense(),
            social_cost_of_carbon: defaults::social_cost_of_carbon(),
            scc_year: defaults::scc_year(),
            exchange_rate,
            price_index,
            base_year: defaults::base_year(),
            tax_payroll: defaults::tax_payroll(),
            tax_income: defaults::tax_income(),
            wages_per_year: defaults::wages_per_year(),
        }
    }

    pub fn tax_rate(&self) -> f64 {
        self.tax_payroll + self.tax_income
    }

    pub fn validate(&self) -> Result<(), CostBenefitError> {
        let named = [
            ("per_capita_expense", self.per_capita_expense),
            ("social_cost_of_carbon", self.social_cost_of_carbon),
            ("exchange_rate", self.exchange_rate),
            ("tax_payroll", self.tax_payroll),
            ("tax_income", self.tax_income),
            ("wages_per_year", self.wages_per_year),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(CostBenefitError::InvalidConstant(format!("{name} must be positive")));
            }
        }
        if let Some((y, _)) = self.price_index.0.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(CostBenefitError::InvalidConstant(format!(
                "price index for {y} must be positive"
            )));
        }
        self.price_index.get(self.base_year)?;
        self.price_index.get(self.scc_year)?;
        Ok(())
    }

    /// Scales every monetary constant by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            per_capita_expense: self.per_capita_expense * c,
            social_cost_of_carbon: self.social_cost_of_carbon * c,
            ..self.clone()
        }
    }
}

/// One treated unit in one post-adoption year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbRow {
    pub unit_id: String,
    pub year: Year,
    pub ln_emissions: f64,
    pub ln_jobs: f64,
    /// Nominal average monthly wage for the year; may be missing in early
    /// years, which are then backfilled.
    pub avg_wage: Option<f64>,
    pub population: Option<f64>,
    /// Needed only for exposure-specific ATTs.
    pub adoption_year: Option<Year>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CbInputs {
    pub rows: Vec<CbRow>,
}

/// ATTs applied to every treated unit-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttProfile {
    /// The same overall ATT for every unit-year.
    Uniform { emissions: f64, jobs: f64 },
    /// ATT by years since adoption (`year - adoption_year`); unit-years whose
    /// exposure has no entry are skipped.
    ByExposure {
        #[serde(with = "int_keys")]
        emissions: BTreeMap<i64, f64>,
        #[serde(with = "int_keys")]
        jobs: BTreeMap<i64, f64>,
    },
}

/// Integer-keyed maps as tables with string keys, which is all TOML and
/// JSON can express.
mod int_keys {
    use std::collections::BTreeMap;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<i64, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<i64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("exposure key {k:?} is not an integer")))
            })
            .collect()
    }
}

impl AttProfile {
    fn lookup(&self, row: &CbRow) -> Result<Option<(f64, f64)>, CostBenefitError> {
        match self {
            AttProfile::Uniform { emissions, jobs } => Ok(Some((*emissions, *jobs))),
            AttProfile::ByExposure { emissions, jobs } => {
                let adoption = row.adoption_year.ok_or_else(|| {
                    CostBenefitError::MissingAdoptionYear {
                        unit: row.unit_id.clone(),
                    }
                })?;
                let e = row.year - adoption;
                Ok(emissions.get(&e).copied().zip(jobs.get(&e).copied()))
            }
        }
    }
}

/// `(exp(log_value), exp(log_value - att))`.
pub fn counterfactual_level(log_value: f64, att: f64) -> (f64, f64) {
    (log_value.exp(), (log_value - att).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearDeltas {
    pub year: Year,
    pub n_treated: usize,
    /// Average emission reduction, positive when emissions fell.
    pub delta_emissions: f64,
    /// Average employment gain.
    pub delta_jobs: f64,
}

fn years(inputs: &CbInputs) -> Result<BTreeMap<Year, Vec<&CbRow>>, CostBenefitError> {
    if inputs.rows.is_empty() {
        return Err(CostBenefitError::NoInputs);
    }
    let mut by_year: BTreeMap<Year, Vec<&CbRow>> = BTreeMap::new();
    for r in &inputs.rows {
        by_year.entry(r.year).or_default().push(r);
    }
    Ok(by_year)
}

/// Per-year means over treated units of `-(E - E⁰)` and `J - J⁰`.
pub fn average_deltas(
    inputs: &CbInputs,
    atts: &AttProfile,
) -> Result<Vec<YearDeltas>, CostBenefitError> {
    years(inputs)?
        .into_iter()
        .map(|(year, rows)| {
            let (mut de, mut dj, mut n) = (0.0, 0.0, 0usize);
            for r in rows {
                let Some((att_e, att_j)) = atts.lookup(r)? else {
                    continue;
                };
                let (e, e0) = counterfactual_level(r.ln_emissions, att_e);
                let (j, j0) = counterfactual_level(r.ln_jobs, att_j);
                de -= e - e0;
                dj += j - j0;
                n += 1;
            }
            if n == 0 {
                return Err(CostBenefitError::EmptyYear(year));
            }
            Ok(YearDeltas {
                year,
                n_treated: n,
                delta_emissions: de / n as f64,
                delta_jobs: dj / n as f64,
            })
        })
        .collect()
}

/// `SC · ε · (P_base / P_scc_year) · ΔĒ`.
pub fn env_benefit(delta_emissions: f64, c: &CbConstants) -> Result<f64, CostBenefitError> {
    let ratio = c.price_index.get(c.base_year)? / c.price_index.get(c.scc_year)?;
    Ok(c.social_cost_of_carbon * c.exchange_rate * ratio * delta_emissions)
}

/// Returns `(ΔLI_t, B_fiscal_t)` with
/// `ΔLI_t = ΔJ̄_t · W̄_t · wages_per_year · P_base / P_t`.
pub fn fiscal_benefit(
    delta_jobs: f64,
    avg_wage: f64,
    c: &CbConstants,
    year: Year,
) -> Result<(f64, f64), CostBenefitError> {
    let deflator = c.price_index.get(c.base_year)? / c.price_index.get(year)?;
    let labor_income = delta_jobs * avg_wage * c.wages_per_year * deflator;
    Ok((labor_income, c.tax_rate() * labor_income))
}

/// Nominal W̄_t per input year. Years before the first observed wage take
/// that wage deflated by the price index.
pub fn wage_series(
    inputs: &CbInputs,
    c: &CbConstants,
) -> Result<BTreeMap<Year, f64>, CostBenefitError> {
    let mut observed: BTreeMap<Year, f64> = BTreeMap::new();
    for r in &inputs.rows {
        let Some(w) = r.avg_wage else { continue };
        match observed.get(&r.year) {
            Some(&prev) if (prev - w).abs() > 1e-9 * prev.abs().max(1.0) => {
                return Err(CostBenefitError::InconsistentWage {
                    year: r.year,
                    first: prev,
                    second: w,
                })
            }
            Some(_) => {}
            None => {
                observed.insert(r.year, w);
            }
        }
    }
    let mut out = BTreeMap::new();
    for year in years(inputs)?.into_keys() {
        let w = match observed.get(&year) {
            Some(w) => *w,
            None => match observed.iter().next() {
                Some((&first_year, &first)) if first_year > year => {
                    first * c.price_index.get(year)? / c.price_index.get(first_year)?
                }
                _ => return Err(CostBenefitError::MissingWage(year)),
            },
        };
        out.insert(year, w);
    }
    Ok(out)
}

/// `per_capita_expense × mean population` of the treated units each year.
pub fn cost_series(
    inputs: &CbInputs,
    c: &CbConstants,
) -> Result<BTreeMap<Year, f64>, CostBenefitError> {
    years(inputs)?
        .into_iter()
        .map(|(year, rows)| {
            let mut total = 0.0;
            for r in &rows {
                total += r.population.ok_or_else(|| CostBenefitError::MissingPopulation {
                    unit: r.unit_id.clone(),
                    year,
                })?;
            }
            Ok((year, c.per_capita_expense * total / rows.len() as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbYear {
    pub year: Year,
    pub n_treated: usize,
    pub avg_wage: f64,
    pub delta_emissions: f64,
    pub delta_jobs: f64,
    pub delta_labor_income: f64,
    pub env_benefit: f64,
    pub fiscal_benefit: f64,
    pub total_benefit: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakeven {
    pub avg_benefit: f64,
    pub avg_cost: f64,
    /// Largest proportional cost increase that keeps benefits ≥ costs.
    pub kappa: f64,
    pub cost_effective: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBenefitSeries {
    pub years: Vec<CbYear>,
}

/// `κ* = mean(B_total) / mean(cost) - 1`.
pub fn breakeven_demand_increase(series: &CostBenefitSeries) -> Result<Breakeven, CostBenefitError> {
    let k = series.years.len() as f64;
    let avg_benefit = series.years.iter().map(|y| y.total_benefit).sum::<f64>() / k;
    let avg_cost = series.years.iter().map(|y| y.cost).sum::<f64>() / k;
    if series.years.is_empty() || avg_cost == 0.0 {
        return Err(CostBenefitError::ZeroCost);
    }
    let kappa = avg_benefit / avg_cost - 1.0;
    Ok(Breakeven {
        avg_benefit,
        avg_cost,
        kappa,
        cost_effective: kappa >= 0.0,
    })
}

/// Full pipeline: deltas, benefits, costs per year.
pub fn cost_benefit(
    inputs: &CbInputs,
    atts: &AttProfile,
    c: &CbConstants,
) -> Result<CostBenefitSeries, CostBenefitError> {
    c.validate()?;
    let deltas = average_deltas(inputs, atts)?;
    let wages = wage_series(inputs, c)?;
    let costs = cost_series(inputs, c)?;
    let years = deltas
        .into_iter()
        .map(|d| {
            let w = wages[&d.year];
            let env = env_benefit(d.delta_emissions, c)?;
            let (li, fiscal) = fiscal_benefit(d.delta_jobs, w, c, d.year)?;
            Ok(CbYear {
                year: d.year,
                n_treated: d.n_treated,
                avg_wage: w,
                delta_emissions: d.delta_emissions,
                delta_jobs: d.delta_jobs,
                delta_labor_income: li,
                env_benefit: env,
                fiscal_benefit: fiscal,
                total_benefit: env + fiscal,
                cost: costs[&d.year],
            })
        })
        .collect::<Result<Vec<_>, CostBenefitError>>()?;
    Ok(CostBenefitSeries { years })
}
