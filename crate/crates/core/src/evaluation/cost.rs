//! Dollar cost of sampling.

use super::EvalError;
use serde::{Deserialize, Serialize, Serializer};

/// An amount of money held as whole picodollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash)]
pub struct Money(pub i128);

impl Money {
    pub const PER_DOLLAR: i128 = 1_000_000_000_000;

    pub fn from_dollars(d: f64) -> Self {
        Money((d * Self::PER_DOLLAR as f64).round() as i128)
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / Self::PER_DOLLAR as f64
    }

    /// Rounded to whole dollars, half away from zero.
    pub fn whole_dollars(self) -> i128 {
        let q = self.0.abs() + Self::PER_DOLLAR / 2;
        self.0.signum() * (q / Self::PER_DOLLAR)
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::format::ser_sig9(&self.dollars(), s)
    }
}

/// Token-level pricing of one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCost {
    pub tokens_in: f64,
    pub tokens_out: f64,
    /// Dollars per million input tokens.
    pub price_in_per_m: f64,
    /// Dollars per million output tokens.
    pub price_out_per_m: f64,
    #[serde(default)]
    pub grounded_fee_per_request: f64,
}

impl TokenCost {
    pub fn per_request(&self) -> f64 {
        self.tokens_in * self.price_in_per_m / 1e6
            + self.tokens_out * self.price_out_per_m / 1e6
            + self.grounded_fee_per_request
    }

    fn validate(&self, what: &str) -> Result<(), EvalError> {
        let vals = [
            self.tokens_in,
            self.tokens_out,
            self.price_in_per_m,
            self.price_out_per_m,
            self.grounded_fee_per_request,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EvalError::Config(format!(
                "{what} token breakdown has a negative or non-finite entry"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<TokenCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<TokenCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qe: Option<TokenCost>,
}

/// Per-request dollar cost of each pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSheet {
    pub search_per_request: f64,
    pub translation_per_request: f64,
    pub qe_per_request: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<CostBreakdown>,
}

impl CostSheet {
    pub fn new(search: f64, translation: f64, qe: f64) -> Self {
        Self {
            search_per_request: search,
            translation_per_request: translation,
            qe_per_request: qe,
            breakdown: None,
        }
    }

    /// Per-request costs that give the reference 20k-request row
    /// ($87 search, $2 translation, $15 QE).
    pub fn calibrated() -> Self {
        Self::new(87.0 / 20_000.0, 2.0 / 20_000.0, 15.0 / 20_000.0)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let parts = [
            ("search", self.search_per_request),
            ("translation", self.translation_per_request),
            ("qe", self.qe_per_request),
        ];
        for (what, v) in parts {
            if !v.is_finite() || v < 0.0 {
                return Err(EvalError::Config(format!(
                    "{what} cost must be a non-negative number, got {v}"
                )));
            }
        }
        if let Some(b) = &self.breakdown {
            let pairs = [
                ("search", &b.search, self.search_per_request),
                ("translation", &b.translation, self.translation_per_request),
                ("qe", &b.qe, self.qe_per_request),
            ];
            for (what, tc, figure) in pairs {
                let Some(tc) = tc else { continue };
                tc.validate(what)?;
                let derived = tc.per_request();
                if (derived - figure).abs() > 1e-9 {
                    return Err(EvalError::Config(format!(
                        "{what} cost {figure} disagrees with its token breakdown ({derived})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostEstimate {
    pub n_requests: u64,
    pub search: Money,
    pub translation: Money,
    pub qe: Money,
    pub total: Money,
}

impl CostEstimate {
    pub const CSV_HEADER: &'static str = "requests,search,translation,qe,total";

    /// One CSV row in whole dollars.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.n_requests,
            self.search.whole_dollars(),
            self.translation.whole_dollars(),
            self.qe.whole_dollars(),
            self.total.whole_dollars()
        )
    }
}

pub fn cost_estimate(n_requests: u64, sheet: &CostSheet) -> CostEstimate {
    let n = n_requests as i128;
    let search = Money(n * Money::from_dollars(sheet.search_per_request).0);
    let translation = Money(n * Money::from_dollars(sheet.translation_per_request).0);
    let qe = Money(n * Money::from_dollars(sheet.qe_per_request).0);
    CostEstimate {
        n_requests,
        search,
        translation,
        qe,
        total: search + translation + qe,
    }
}

/// Inputs to the per-sample cost of grounded search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchCostParams {
    pub tokens_in: f64,
    pub tokens_out: f64,
    pub price_in: f64,
    pub price_out: f64,
    pub grounded_fee: f64,
    pub queries_per_topic: f64,
    pub samples_per_topic: f64,
}

impl Default for SearchCostParams {
    fn default() -> Self {
        Self {
            tokens_in: 146.0,
            tokens_out: 94.0,
            price_in: 1.25,
            price_out: 10.0,
            grounded_fee: 0.035,
            queries_per_topic: 3.0,
            samples_per_topic: 25.0,
        }
    }
}

/// Search cost attributed to one sample: each topic issues a few grounded
/// queries whose cost is shared by the samples drawn from it.
pub fn derive_search_request_cost(p: &SearchCostParams) -> f64 {
    let per_query = p.tokens_in * p.price_in / 1e6 + p.tokens_out * p.price_out / 1e6 + p.grounded_fee;
    p.queries_per_topic * per_query / p.samples_per_topic
}
