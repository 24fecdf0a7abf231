//! Balancing-market products and bid handling.
//!
//! Three reserve products are modeled, differing in activation style,
//! ramp requirement, and how far ahead of delivery the bid must be in:
//!
//! * `SR` — automatically activated regulation following a real-time
//!   signal; bids close at 16:00 on the day before delivery.
//! * `TR` — manually activated reserve with a 15-minute ramp; bids close
//!   25 minutes before delivery.
//! * `RR` — manually activated replacement energy with a 30-minute ramp;
//!   bids close 55 minutes before delivery.
//!
//! All products trade 15-minute delivery periods with a 1 MW minimum bid,
//! offered in 100 kW increments (bids are floored toward zero).

use chrono::{Duration, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::controller::ControlTrace;
use crate::error::Result;
use crate::predict::{search_certified_power, BisectionConfig, ConfidenceSpec, PredictionResult};
use crate::rng::{derive_seed, lane};
use crate::scenario::TrialScenario;

/// Delivery-period length shared by all products, minutes.
pub const DELIVERY_PERIOD_MINUTES: u32 = 15;
/// Smallest allowed bid magnitude, kW.
pub const MIN_BID_KW: f64 = 1000.0;
/// Bid size granularity, kW.
pub const BID_INCREMENT_KW: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketProduct {
    #[serde(alias = "sr")]
    SR,
    #[serde(alias = "tr")]
    TR,
    #[serde(alias = "rr")]
    RR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Activation {
    Automatic,
    Manual,
}

impl MarketProduct {
    pub fn activation(&self) -> Activation {
        match self {
            MarketProduct::SR => Activation::Automatic,
            MarketProduct::TR | MarketProduct::RR => Activation::Manual,
        }
    }

    /// Time allowed to reach full response; 0 means real-time following.
    pub fn ramp_minutes(&self) -> u32 {
        match self {
            MarketProduct::SR => 0,
            MarketProduct::TR => 15,
            MarketProduct::RR => 30,
        }
    }

    /// Last instant a bid for `delivery_start` may be submitted.
    pub fn gate_closure(&self, delivery_start: NaiveDateTime) -> NaiveDateTime {
        match self {
            MarketProduct::SR => (delivery_start.date() - Duration::days(1))
                .and_time(NaiveTime::from_hms_opt(16, 0, 0).expect("16:00 is valid")),
            MarketProduct::TR => delivery_start - Duration::minutes(25),
            MarketProduct::RR => delivery_start - Duration::minutes(55),
        }
    }

    /// Minutes between gate closure and delivery start.
    pub fn lead_minutes(&self, delivery_start: NaiveDateTime) -> i64 {
        (delivery_start - self.gate_closure(delivery_start)).num_minutes()
    }
}

impl std::fmt::Display for MarketProduct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MarketProduct::SR => "SR",
            MarketProduct::TR => "TR",
            MarketProduct::RR => "RR",
        })
    }
}

/// Which way the fleet moves the system when it delivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BidDirection {
    /// Consumption drops: the fleet acts like extra generation.
    Upward,
    /// Consumption rises: the fleet absorbs surplus energy.
    Downward,
    /// Nothing to offer.
    None,
}

pub fn direction_for_power(power_kw: f64) -> BidDirection {
    if power_kw > 0.0 {
        BidDirection::Downward
    } else if power_kw < 0.0 {
        BidDirection::Upward
    } else {
        BidDirection::None
    }
}

/// Floors a raw power toward zero onto the bid granularity.
pub fn quantize_bid_kw(raw_kw: f64) -> f64 {
    (raw_kw / BID_INCREMENT_KW).trunc() * BID_INCREMENT_KW
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bid {
    pub product: MarketProduct,
    pub delivery_start: NaiveDateTime,
    /// Certified power before quantization, kW.
    pub raw_power_kw: f64,
    /// Power actually offered, kW.
    pub quantized_power_kw: f64,
    pub direction: BidDirection,
}

impl Bid {
    pub fn from_prediction(
        product: MarketProduct,
        delivery_start: NaiveDateTime,
        raw_power_kw: f64,
    ) -> Self {
        let quantized = quantize_bid_kw(raw_power_kw);
        Self {
            product,
            delivery_start,
            raw_power_kw,
            quantized_power_kw: quantized,
            direction: direction_for_power(quantized),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    ZeroPower,
    BelowMinimum {
        quantized_kw: f64,
        minimum_kw: f64,
    },
    LateSubmission {
        submitted_at: NaiveDateTime,
        gate_closure: NaiveDateTime,
    },
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::ZeroPower => write!(f, "quantized bid is zero; nothing to offer"),
            RejectReason::BelowMinimum {
                quantized_kw,
                minimum_kw,
            } => write!(
                f,
                "quantized bid magnitude {} kW is below the {} kW minimum",
                quantized_kw.abs(),
                minimum_kw
            ),
            RejectReason::LateSubmission {
                submitted_at,
                gate_closure,
            } => write!(f, "submitted at {submitted_at}, after gate closure {gate_closure}"),
        }
    }
}

impl Serialize for RejectReason {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidValidity {
    pub valid: bool,
    pub reasons: Vec<RejectReason>,
}

/// Checks size, direction, and timing. Submission exactly at gate closure
/// is on time.
pub fn validate_bid(bid: &Bid, submitted_at: NaiveDateTime) -> BidValidity {
    let mut reasons = Vec::new();
    if bid.quantized_power_kw == 0.0 {
        reasons.push(RejectReason::ZeroPower);
    } else if bid.quantized_power_kw.abs() < MIN_BID_KW {
        reasons.push(RejectReason::BelowMinimum {
            quantized_kw: bid.quantized_power_kw,
            minimum_kw: MIN_BID_KW,
        });
    }
    let gate_closure = bid.product.gate_closure(bid.delivery_start);
    if submitted_at > gate_closure {
        reasons.push(RejectReason::LateSubmission {
            submitted_at,
            gate_closure,
        });
    }
    BidValidity {
        valid: reasons.is_empty(),
        reasons,
    }
}

/// A complete market participation: certification, bid, and delivery.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub id: String,
    pub product: MarketProduct,
    pub delivery_start: NaiveDateTime,
    pub scenario: TrialScenario,
    pub confidence: ConfidenceSpec,
    pub bisection: BisectionConfig,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario_id: String,
    pub product: MarketProduct,
    pub delivery_start: NaiveDateTime,
    pub gate_closure: NaiveDateTime,
    pub prediction: PredictionResult,
    pub bid: Bid,
    pub validity: BidValidity,
    /// Fresh-fleet delivery simulation of the quantized bid; absent when
    /// the bid is invalid.
    pub delivery: Option<ControlTrace>,
}

/// Certifies the offer, forms and validates the bid, and (for valid bids)
/// simulates delivering the quantized power with a freshly sampled fleet.
///
/// `submitted_at` defaults to the gate closure itself. The delivery trial
/// seed comes from `lane::DELIVERY`, so it never reuses a certification
/// trial's randomness.
pub fn run_scenario(
    spec: &ScenarioSpec,
    master_seed: u64,
    submitted_at: Option<NaiveDateTime>,
) -> Result<ScenarioOutcome> {
    let prediction =
        search_certified_power(&spec.scenario, &spec.confidence, &spec.bisection, master_seed)?;
    let bid = Bid::from_prediction(spec.product, spec.delivery_start, prediction.power_kw);
    let gate_closure = spec.product.gate_closure(spec.delivery_start);
    let validity = validate_bid(&bid, submitted_at.unwrap_or(gate_closure));
    let delivery = if validity.valid {
        let delivery_seed = derive_seed(master_seed, lane::DELIVERY, 0);
        Some(spec.scenario.run_trial(bid.quantized_power_kw, delivery_seed, true)?)
    } else {
        None
    };
    Ok(ScenarioOutcome {
        scenario_id: spec.id.clone(),
        product: spec.product,
        delivery_start: spec.delivery_start,
        gate_closure,
        prediction,
        bid,
        validity,
        delivery,
    })
}
