//! Run configuration files: everything one auction needs, in one JSON
//! document. Unknown keys are rejected so typos fail loudly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use auction_core::group::GroupParams;
use auction_core::harness::AdversaryScript;
use auction_core::knapsack::PriceTable;
use auction_core::protocol::{role_rng, AuctionConfig, FixedSetup, Mode, PaymentRule, SeedSpec};
use auction_core::{Error, Result};

/// Group parameters inline, or a path to a file produced by `gen-params`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSource {
    Inline(GroupParams),
    File(String),
}

/// An explicit 1-based index per bidder, or `"random:<seed>"` to draw
/// them (ties and all) from a dedicated generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BidsSpec {
    List(Vec<usize>),
    Random(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mode: Mode,
    pub payment_rule: PaymentRule,
    pub params: ParamsSource,
    pub prices: Vec<u64>,
    pub bidder_count: usize,
    pub seeds: SeedSpec,
    pub bids: BidsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FixedSetup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryScript>,
}

pub struct ResolvedRun {
    pub config: AuctionConfig,
    pub bids: Vec<usize>,
    pub script: Option<AdversaryScript>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("{} is not a valid run config: {e}", path.display()))
        })
    }

    /// Resolve file references and bid specs into a runnable setup.
    /// `mode_override` comes from the command line.
    pub fn resolve(self, base_dir: &Path, mode_override: Option<Mode>) -> Result<ResolvedRun> {
        let params = match self.params {
            ParamsSource::Inline(params) => params,
            ParamsSource::File(rel) => {
                let path = base_dir.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::Config(format!("cannot read params {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::Config(format!("{} is not a params file: {e}", path.display()))
                })?
            }
        };
        let prices = PriceTable::new(self.prices)?;
        let k = prices.len();
        let config = AuctionConfig {
            mode: mode_override.unwrap_or(self.mode),
            payment_rule: self.payment_rule,
            params,
            prices,
            bidder_count: self.bidder_count,
            seeds: self.seeds,
            fixed: self.fixed,
        };
        config.validate()?;
        let bids = match self.bids {
            BidsSpec::List(list) => list,
            BidsSpec::Random(spec) => {
                let seed = spec.strip_prefix("random:").ok_or_else(|| {
                    Error::Config(format!(
                        "bids must be an index list or \"random:<seed>\", got {spec:?}"
                    ))
                })?;
                use rand::Rng;
                let mut rng = role_rng("bids", seed);
                (0..config.bidder_count)
                    .map(|_| rng.gen_range(1..=k))
                    .collect()
            }
        };
        Ok(ResolvedRun {
            config,
            bids,
            script: self.adversary,
        })
    }
}

/// The bundled worked example: toy group, eight prices, four bidders with
/// pinned codes, randomizers and share matrix, so every value in the run
/// can be checked by hand.
pub fn example_config() -> RunConfigFile {
    RunConfigFile {
        mode: Mode::Honest,
        payment_rule: PaymentRule::SecondPrice,
        params: ParamsSource::Inline(GroupParams::toy()),
        prices: vec![10, 20, 30, 40, 50, 60, 70, 80],
        bidder_count: 4,
        seeds: SeedSpec::uniform("example", 4),
        bids: BidsSpec::List(vec![3, 1, 4, 8]),
        fixed: Some(FixedSetup {
            codes: Some(
                ["3", "5", "10", "21", "40", "90", "180", "360"]
                    .map(String::from)
                    .to_vec(),
            ),
            randomizers: Some(["700", "100", "200", "502"].map(String::from).to_vec()),
            share_rows: Some(vec![
                ["100", "400", "200", "10"].map(String::from).to_vec(),
                ["10", "50", "40", "3"].map(String::from).to_vec(),
                ["150", "50", "19", "2"].map(String::from).to_vec(),
                ["30", "35", "35", "11"].map(String::from).to_vec(),
            ]),
        }),
        adversary: None,
    }
}
