//! Gas metering and dollar-cost model.
//!
//! Gas amounts for the contract operations come from a calibrated schedule:
//! fixed figures for deployment and registration, and a per-byte linear curve
//! for message payloads anchored in full. The curve is pinned at two measured
//! anchor points, (16 bytes, 52,132 gas) and (1,024 bytes, 382,119 gas), giving
//! a slope of 329,987 / 1,008 gas per byte. Sizes below the smallest anchor are
//! clamped to it; sizes above the largest extrapolate along the last segment.
//! Digest anchors (32-byte hashes and Merkle roots) cost a fixed 72,433 gas
//! regardless of how much data they commit to.
//!
//! Dollar values use integer nano-dollar arithmetic throughout so that reports
//! are exact and byte-stable: `usd = gas x gasPriceGwei x 1e-9 ETH x ethUsd`.
//! Two display roundings exist: `Exact` converts gas at full precision, and
//! `Published` substitutes the schedule's published per-operation prices where
//! the gas figure matches one (falling back to exact conversion otherwise).

use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::anchoring::StorageScheme;
use crate::ledger::{Block, TxStatus};

/// Gas consumed by contract deployment.
pub const DEFAULT_DEPLOY_GAS: u64 = 866_212;
/// Gas consumed by `registerGateway`.
pub const DEFAULT_REGISTER_GATEWAY_GAS: u64 = 43_702;
/// Gas consumed by `registerDevice`. Not separately calibrated; it writes the
/// same single-slot shape as `registerGateway`, so it reuses that figure.
pub const DEFAULT_REGISTER_DEVICE_GAS: u64 = 43_702;
/// Gas consumed by anchoring a 32-byte digest (hash or Merkle root).
pub const DEFAULT_DIGEST_ANCHOR_GAS: u64 = 72_433;
/// Gas charged to a transaction whose calldata cannot be decoded at all.
pub const INTRINSIC_GAS: u64 = 21_000;

/// Measured (payload size, gas) anchor points for full-payload messages.
pub const DEFAULT_MESSAGE_ANCHORS: [(u32, u64); 2] = [(16, 52_132), (1024, 382_119)];

#[derive(Debug, Error)]
pub enum EconomicsError {
    #[error("run has {pending} unresolved transactions; cost report requires a drained run")]
    IncompleteRun { pending: usize },
    #[error("gas schedule is invalid: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum Interpolation {
    #[default]
    LinearPerByte,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum GasRounding {
    #[default]
    HalfUp,
}

/// Calibrated gas figures for every metered operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GasSchedule {
    pub deploy_gas: u64,
    pub register_gateway_gas: u64,
    #[serde(default = "default_register_device_gas")]
    pub register_device_gas: u64,
    /// Sorted (payload size, gas) anchor points for full-payload messages.
    pub full_on_chain_anchors: Vec<(u32, u64)>,
    pub digest_anchor_gas: u64,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub rounding: GasRounding,
}

fn default_register_device_gas() -> u64 {
    DEFAULT_REGISTER_DEVICE_GAS
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            deploy_gas: DEFAULT_DEPLOY_GAS,
            register_gateway_gas: DEFAULT_REGISTER_GATEWAY_GAS,
            register_device_gas: DEFAULT_REGISTER_DEVICE_GAS,
            full_on_chain_anchors: DEFAULT_MESSAGE_ANCHORS.to_vec(),
            digest_anchor_gas: DEFAULT_DIGEST_ANCHOR_GAS,
            interpolation: Interpolation::LinearPerByte,
            rounding: GasRounding::HalfUp,
        }
    }
}

impl GasSchedule {
    pub fn load(path: &Path) -> Result<Self, EconomicsError> {
        let raw = std::fs::read_to_string(path)?;
        let schedule: GasSchedule = serde_json::from_str(&raw)?;
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<(), EconomicsError> {
        if self.full_on_chain_anchors.is_empty() {
            return Err(EconomicsError::BadSchedule(
                "at least one full-on-chain anchor point is required".into(),
            ));
        }
        let sorted = self
            .full_on_chain_anchors
            .windows(2)
            .all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1);
        if !sorted {
            return Err(EconomicsError::BadSchedule(
                "anchor points must be strictly increasing in size and non-decreasing in gas"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Integer division rounding half away from zero (inputs are non-negative).
fn round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Gas to anchor `payload_size` bytes under `scheme`.
///
/// Digest-based schemes commit a fixed 32-byte value on-chain, so their cost
/// does not depend on the payload size at all.
pub fn gas_for_payload(schedule: &GasSchedule, scheme: StorageScheme, payload_size: u32) -> u64 {
    match scheme {
        StorageScheme::DataHashing | StorageScheme::MerkleTree => schedule.digest_anchor_gas,
        StorageScheme::FullOnChain => message_gas(schedule, payload_size),
    }
}

/// Gas for a full-payload message of `size` bytes, interpolated on the anchor curve.
pub fn message_gas(schedule: &GasSchedule, size: u32) -> u64 {
    let anchors = &schedule.full_on_chain_anchors;
    let first = anchors[0];
    if size <= first.0 {
        // Clamped below the smallest anchor: small payloads cost the anchor figure.
        return first.1;
    }
    let last = anchors[anchors.len() - 1];
    let (a, b) = if size >= last.0 && anchors.len() >= 2 {
        // Extrapolate along the final segment.
        (anchors[anchors.len() - 2], last)
    } else if anchors.len() == 1 {
        return first.1;
    } else {
        let hi = anchors.partition_point(|(s, _)| *s < size);
        (anchors[hi - 1], anchors[hi])
    };
    let run = (b.0 - a.0) as u128;
    let rise = (b.1 - a.1) as u128;
    let dx = (size - a.0) as u128;
    a.1 + round_half_up(dx * rise, run) as u64
}

/// Smallest payload size at which a full-payload anchor costs more gas than a
/// digest anchor, if one exists below 4 KiB. Beyond this size, hashing wins.
pub fn full_on_chain_crossover(schedule: &GasSchedule) -> Option<u32> {
    (0..=4096).find(|&size| message_gas(schedule, size) > schedule.digest_anchor_gas)
}

/// Dollar amount held as integer nano-dollars (1e-9 USD).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Usd(pub u128);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub const fn from_nano(nano: u128) -> Self {
        Usd(nano)
    }

    /// Exact for whole milli-dollar amounts, e.g. the published price table.
    pub const fn from_milli(milli: u128) -> Self {
        Usd(milli * 1_000_000)
    }

    pub fn as_f64(&self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Rounds to whole milli-dollars (three decimal places), half up.
    pub fn to_milli_rounded(&self) -> u128 {
        round_half_up(self.0, 1_000_000)
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for Usd {
    /// Decimal dollars with trailing zeros trimmed, always keeping two places.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / 1_000_000_000;
        let frac = format!("{:09}", self.0 % 1_000_000_000);
        let trimmed = frac.trim_end_matches('0');
        let frac = if trimmed.len() < 2 {
            &frac[..2]
        } else {
            trimmed
        };
        write!(f, "{int}.{frac}")
    }
}

impl FromStr for Usd {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 {
            return Err(format!("more than nano-dollar precision: {s}"));
        }
        let int: u128 = int.parse().map_err(|e| format!("{e}"))?;
        let mut frac_nano = 0u128;
        if !frac.is_empty() {
            let padded = format!("{frac:0<9}");
            frac_nano = padded.parse().map_err(|e| format!("{e}"))?;
        }
        Ok(Usd(int * 1_000_000_000 + frac_nano))
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// How per-operation dollar figures are derived from gas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum UsdRounding {
    /// Full-precision conversion from gas.
    #[default]
    Exact,
    /// Substitute the published per-operation dollar price when the gas figure
    /// matches a published row; otherwise fall back to exact conversion.
    Published,
}

impl UsdRounding {
    pub fn as_str(&self) -> &'static str {
        match self {
            UsdRounding::Exact => "exact",
            UsdRounding::Published => "published",
        }
    }
}

/// Conversion context: gas price and exchange rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriceContext {
    pub gas_price_gwei: u64,
    /// ETH price in micro-dollars (1e-6 USD) per ETH.
    pub eth_usd_micro: u64,
    pub rounding: UsdRounding,
}

impl Default for PriceContext {
    fn default() -> Self {
        PriceContext {
            gas_price_gwei: 1,
            eth_usd_micro: 168_000_000,
            rounding: UsdRounding::Exact,
        }
    }
}

/// JSON form of [`PriceContext`]; `ethUsd` is decimal dollars per ETH.
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PriceContextFile {
    #[serde(default = "default_gas_price")]
    gas_price_gwei: u64,
    #[serde(default = "default_eth_usd")]
    eth_usd: f64,
    #[serde(default)]
    rounding: UsdRounding,
}

fn default_gas_price() -> u64 {
    1
}

fn default_eth_usd() -> f64 {
    168.0
}

impl Serialize for PriceContext {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PriceContextFile {
            gas_price_gwei: self.gas_price_gwei,
            eth_usd: self.eth_usd_micro as f64 / 1e6,
            rounding: self.rounding,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PriceContext {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = PriceContextFile::deserialize(deserializer)?;
        if !file.eth_usd.is_finite() || file.eth_usd < 0.0 {
            return Err(de::Error::custom("ethUsd must be a non-negative number"));
        }
        Ok(PriceContext {
            gas_price_gwei: file.gas_price_gwei,
            eth_usd_micro: (file.eth_usd * 1e6).round() as u64,
            rounding: file.rounding,
        })
    }
}

impl PriceContext {
    pub fn load(path: &Path) -> Result<Self, EconomicsError> {
        let raw = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn with_rounding(mut self, rounding: UsdRounding) -> Self {
        self.rounding = rounding;
        self
    }
}

/// Exact dollar cost of `gas` at the given price context, in nano-dollars.
///
/// `gas x gwei` is 1e-9 ETH and the rate is in 1e-6 USD per ETH, so the
/// product is in 1e-15 USD; dividing by 1e6 yields nano-dollars, exactly
/// when the product is a multiple of 1e6 and rounded half up otherwise.
pub fn usd_cost(gas: u64, prices: &PriceContext) -> Usd {
    let num = gas as u128 * prices.gas_price_gwei as u128 * prices.eth_usd_micro as u128;
    Usd(round_half_up(num, 1_000_000))
}

/// Published per-operation dollar prices, keyed by the gas figure they were
/// printed next to. Returns `None` for gas amounts with no published row.
pub fn published_usd_for_gas(gas: u64) -> Option<Usd> {
    match gas {
        DEFAULT_DEPLOY_GAS => Some(Usd::from_milli(145)),
        DEFAULT_REGISTER_GATEWAY_GAS => Some(Usd::from_milli(7)),
        52_132 => Some(Usd::from_milli(8)),
        382_119 => Some(Usd::from_milli(60)),
        DEFAULT_DIGEST_ANCHOR_GAS => Some(Usd::from_milli(12)),
        _ => None,
    }
}

/// Dollar price of one operation under the context's rounding mode.
pub fn op_usd(gas: u64, prices: &PriceContext) -> Usd {
    match prices.rounding {
        UsdRounding::Exact => usd_cost(gas, prices),
        UsdRounding::Published => {
            published_usd_for_gas(gas).unwrap_or_else(|| usd_cost(gas, prices))
        }
    }
}

/// Daily cost breakdown for one scenario run, interpreted as one operating day.
///
/// Data messages are the device-data records secured under the storage scheme
/// (`sendResponseFromDevice` transactions, or Merkle window anchors standing in
/// for the leaves they commit). Command transactions are the client-to-device
/// transport leg and are priced separately, as are one-time setup transactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub scheme: StorageScheme,
    pub rounding: UsdRounding,
    /// Device-data messages secured during the day.
    pub messages_per_day: u64,
    /// Merkle window anchor transactions (zero for the other schemes).
    pub window_anchors_per_day: u64,
    /// Gas spent on data-anchoring transactions.
    pub gas_per_day: u64,
    /// Dollar cost of the data-anchoring transactions.
    pub usd_per_day: Usd,
    /// Daily data cost divided by the messages it secured.
    pub per_message_usd: Usd,
    /// Gas spent on client command transactions (zero when commands bypass the chain).
    pub command_gas_per_day: u64,
    pub command_usd_per_day: Usd,
    /// One-time deployment and registration gas.
    pub setup_gas: u64,
    pub setup_usd: Usd,
    /// Gas consumed by reverted transactions, if any.
    pub reverted_gas: u64,
    /// Every unit of gas consumed in the run: setup + commands + data + reverted.
    pub total_gas: u64,
    pub notes: Vec<String>,
}

/// Aggregates a drained run's transactions into a [`CostReport`].
///
/// `leaves_appended` is the number of device-data records committed into
/// Merkle windows (ignored for the other schemes). `pending` must be zero:
/// a report over a run with unresolved transactions would undercount.
pub fn build_cost_report(
    blocks: &[Block],
    scheme: StorageScheme,
    leaves_appended: u64,
    pending: usize,
    prices: &PriceContext,
) -> Result<CostReport, EconomicsError> {
    if pending > 0 {
        return Err(EconomicsError::IncompleteRun { pending });
    }

    let mut setup_gas = 0u64;
    let mut command_gas = 0u64;
    let mut data_gas = 0u64;
    let mut reverted_gas = 0u64;
    let mut data_tx_count = 0u64;
    let mut command_usd = Usd::ZERO;
    let mut data_usd = Usd::ZERO;
    let mut setup_usd = Usd::ZERO;
    let mut saw_clamped_message_price = false;

    for block in blocks {
        for tx in &block.transactions {
            match tx.status {
                TxStatus::Reverted => {
                    reverted_gas += tx.gas_used;
                    continue;
                }
                TxStatus::Pending => {
                    return Err(EconomicsError::IncompleteRun { pending: 1 });
                }
                TxStatus::Included => {}
            }
            match tx.function.as_str() {
                crate::contract::FN_DEPLOY
                | crate::contract::FN_REGISTER_GATEWAY
                | crate::contract::FN_REGISTER_DEVICE => {
                    setup_gas += tx.gas_used;
                    setup_usd += op_usd(tx.gas_used, prices);
                }
                crate::contract::FN_SEND_MESSAGE_TO_DEVICE => {
                    command_gas += tx.gas_used;
                    command_usd += op_usd(tx.gas_used, prices);
                }
                crate::contract::FN_SEND_RESPONSE_FROM_DEVICE => {
                    data_gas += tx.gas_used;
                    data_tx_count += 1;
                    data_usd += op_usd(tx.gas_used, prices);
                    if tx.gas_used == 52_132 {
                        saw_clamped_message_price = true;
                    }
                }
                other => {
                    return Err(EconomicsError::BadSchedule(format!(
                        "unclassifiable function in run: {other}"
                    )));
                }
            }
        }
    }

    // Exact mode prices the day from total gas; published mode sums the
    // per-transaction published prices accumulated above.
    let usd_per_day = match prices.rounding {
        UsdRounding::Exact => usd_cost(data_gas, prices),
        UsdRounding::Published => data_usd,
    };
    let (messages_per_day, window_anchors_per_day) = match scheme {
        StorageScheme::MerkleTree => (leaves_appended, data_tx_count),
        _ => (data_tx_count, 0),
    };
    // Daily data cost spread over the secured messages. Under batching this
    // is what one message costs, not what one anchor costs.
    let per_message_usd = if messages_per_day == 0 {
        Usd::ZERO
    } else {
        Usd(round_half_up(usd_per_day.0, messages_per_day as u128))
    };

    let mut notes = Vec::new();
    if prices.rounding == UsdRounding::Published && saw_clamped_message_price {
        notes.push(
            "published per-message price $0.008 corresponds to an exact conversion of \
             $0.008758176 at 1 gwei and $168/ETH; the exact value rounds to $0.009 at \
             three decimals"
                .to_string(),
        );
    }

    Ok(CostReport {
        scheme,
        rounding: prices.rounding,
        messages_per_day,
        window_anchors_per_day,
        gas_per_day: data_gas,
        usd_per_day,
        per_message_usd,
        command_gas_per_day: command_gas,
        command_usd_per_day: command_usd,
        setup_gas,
        setup_usd,
        reverted_gas,
        total_gas: setup_gas + command_gas + data_gas + reverted_gas,
        notes,
    })
}
