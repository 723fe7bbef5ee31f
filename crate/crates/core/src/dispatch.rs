//! Single-bus, single-period economic dispatch with a merit-order
//! generator stack and storage bidding power bids or SoC bids.
//!
//! Supply is a stack of `(capacity, cost)` steps and demand is an
//! inelastic quantity plus elastic `(capacity, value)` steps (storage
//! charging). The clearing price is the lowest price at which supply
//! offered at or below it covers demand willing to pay above it; the
//! marginal quantity is then split so that supply equals demand.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::bids::{charge_threshold, discharge_threshold, PowerBid, SoCBidCurve};
use crate::error::{Error, Result};
use crate::model::StorageParams;

/// A generator's convex offer: capacity blocks at non-decreasing cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorOffer {
    pub name: String,
    /// `(capacity MW, marginal cost $/MWh)`.
    pub segments: Vec<(f64, f64)>,
}

impl GeneratorOffer {
    pub fn new(name: impl Into<String>, segments: Vec<(f64, f64)>) -> Result<Self> {
        let offer = Self { name: name.into(), segments };
        offer.validate()?;
        Ok(offer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidMarket(format!("generator `{}` has no segments", self.name)));
        }
        for &(cap, cost) in &self.segments {
            if !(cap > 0.0 && cap.is_finite()) || !cost.is_finite() {
                return Err(Error::InvalidMarket(format!("generator `{}`: bad segment ({cap}, {cost})", self.name)));
            }
        }
        if self.segments.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::InvalidMarket(format!("generator `{}`: costs must be non-decreasing", self.name)));
        }
        Ok(())
    }

    pub fn capacity(&self) -> f64 {
        self.segments.iter().map(|s| s.0).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StorageBid {
    Power(PowerBid),
    Soc(SoCBidCurve),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageParticipant {
    pub name: String,
    pub params: StorageParams,
    /// SoC before the period, MWh.
    pub soc: f64,
    pub bid: StorageBid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketInstance {
    pub offers: Vec<GeneratorOffer>,
    /// Inelastic demand, MW.
    pub demand: f64,
    pub storages: Vec<StorageParticipant>,
    /// Period length, hours.
    pub dt_hours: f64,
}

impl MarketInstance {
    pub fn new(offers: Vec<GeneratorOffer>, demand: f64) -> Self {
        Self { offers, demand, storages: Vec::new(), dt_hours: 1.0 }
    }

    pub fn with_storage(mut self, storage: StorageParticipant) -> Self {
        self.storages.push(storage);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorDispatch {
    pub name: String,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageDispatch {
    pub name: String,
    pub discharge_power: f64,
    pub charge_power: f64,
    pub soc_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearingResult {
    pub clearing_price: f64,
    pub generators: Vec<GeneratorDispatch>,
    pub storages: Vec<StorageDispatch>,
}

impl ClearingResult {
    pub fn total_supply(&self) -> f64 {
        self.generators.iter().map(|g| g.output).sum::<f64>() + self.storages.iter().map(|s| s.discharge_power).sum::<f64>()
    }

    pub fn total_charging(&self) -> f64 {
        self.storages.iter().map(|s| s.charge_power).sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum Owner {
    Generator(usize),
    Storage(usize),
}

#[derive(Debug, Clone, Copy)]
struct Step {
    owner: Owner,
    capacity: f64,
    price: f64,
}

/// Discharge steps from the current SoC downward and charge steps upward,
/// each direction capped at the power rating.
fn storage_steps(k: usize, s: &StorageParticipant, dt: f64, supply: &mut Vec<Step>, demand: &mut Vec<Step>) -> Result<()> {
    let p = &s.params;
    let owner = Owner::Storage(k);
    match &s.bid {
        StorageBid::Power(bid) => {
            if bid.discharge_bid < bid.charge_bid {
                return Err(Error::InvalidMarket(format!("storage `{}`: crossed power bids", s.name)));
            }
            let cap = p.discharge_limit(s.soc, dt);
            if cap > 0.0 {
                supply.push(Step { owner, capacity: cap, price: bid.discharge_bid.max(0.0) });
            }
            let cap = p.charge_limit(s.soc, dt);
            if cap > 0.0 {
                demand.push(Step { owner, capacity: cap, price: bid.charge_bid });
            }
        }
        StorageBid::Soc(curve) => {
            let values = curve.segment_values();
            let bounds = curve.boundaries();
            let lo = p.soc_min.max(curve.lower());
            let hi = p.soc_max.min(curve.upper());
            let (mut budget, mut e) = (p.power_rating, s.soc);
            let mut cheapest = f64::INFINITY;
            while budget > 0.0 && e > lo {
                let Some(j) = curve.segment_below(e) else { break };
                let floor = bounds[j].max(lo);
                let cap = ((e - floor) * p.efficiency / dt).min(budget);
                let price = discharge_threshold(values[j], p).max(0.0);
                cheapest = cheapest.min(price);
                supply.push(Step { owner, capacity: cap, price });
                budget -= cap;
                e = floor;
            }
            let (mut budget, mut e) = (p.power_rating, s.soc);
            while budget > 0.0 && e < hi {
                let Some(j) = curve.segment_above(e) else { break };
                let ceil = bounds[j + 1].min(hi);
                let cap = ((ceil - e) / (p.efficiency * dt)).min(budget);
                let price = charge_threshold(values[j], p);
                if price > cheapest {
                    return Err(Error::InvalidMarket(format!("storage `{}`: SoC bid crosses itself", s.name)));
                }
                demand.push(Step { owner, capacity: cap, price });
                budget -= cap;
                e = ceil;
            }
        }
    }
    Ok(())
}

fn validate(instance: &MarketInstance) -> Result<()> {
    if !(instance.demand >= 0.0 && instance.demand.is_finite()) {
        return Err(Error::InvalidMarket(format!("demand must be non-negative, got {}", instance.demand)));
    }
    if !(instance.dt_hours > 0.0 && instance.dt_hours.is_finite()) {
        return Err(Error::InvalidMarket(format!("period length must be positive, got {}", instance.dt_hours)));
    }
    for offer in &instance.offers {
        offer.validate()?;
    }
    for s in &instance.storages {
        s.params.validate()?;
        s.params.check_soc(s.soc)?;
    }
    Ok(())
}

/// Clear a market with any mix of power-bid and SoC-bid storage.
///
/// At the clearing price, steps strictly in the money are fully accepted
/// and the balance is taken from marginal steps in stack order:
/// generators before storage, then input order.
pub fn clear_market(instance: &MarketInstance) -> Result<ClearingResult> {
    validate(instance)?;
    let dt = instance.dt_hours;
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for (g, offer) in instance.offers.iter().enumerate() {
        supply.extend(offer.segments.iter().map(|&(capacity, price)| Step { owner: Owner::Generator(g), capacity, price }));
    }
    for (k, s) in instance.storages.iter().enumerate() {
        storage_steps(k, s, dt, &mut supply, &mut demand)?;
    }

    let supplied_at = |pi: f64| supply.iter().filter(|s| s.price <= pi).map(|s| s.capacity).sum::<f64>();
    let demanded_above = |pi: f64| instance.demand + demand.iter().filter(|d| d.price > pi).map(|d| d.capacity).sum::<f64>();
    let mut candidates: Vec<f64> = supply.iter().chain(&demand).map(|s| s.price).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let price = candidates
        .into_iter()
        .find(|&pi| supplied_at(pi) >= demanded_above(pi))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "demand {} MW exceeds total supply {} MW",
                instance.demand,
                supply.iter().map(|s| s.capacity).sum::<f64>()
            ))
        })?;

    let mut gen_out = vec![0.0; instance.offers.len()];
    let mut st_out = vec![(0.0, 0.0); instance.storages.len()];
    let mut add = |owner: Owner, q: f64, is_supply: bool| match owner {
        Owner::Generator(g) => gen_out[g] += q,
        Owner::Storage(k) if is_supply => st_out[k].0 += q,
        Owner::Storage(k) => st_out[k].1 += q,
    };

    let s_strict: f64 = supply.iter().filter(|s| s.price < price).map(|s| s.capacity).sum();
    let d_strict = demanded_above(price);
    for s in supply.iter().filter(|s| s.price < price) {
        add(s.owner, s.capacity, true);
    }
    for d in demand.iter().filter(|d| d.price > price) {
        add(d.owner, d.capacity, false);
    }
    if s_strict >= d_strict {
        let mut rest = s_strict - d_strict;
        for d in demand.iter().filter(|d| d.price == price) {
            let q = d.capacity.min(rest);
            add(d.owner, q, false);
            rest -= q;
        }
    } else {
        let mut rest = d_strict - s_strict;
        let marginal = supply.iter().filter(|s| s.price == price);
        let (gens, stores): (Vec<&Step>, Vec<&Step>) = marginal.partition(|s| matches!(s.owner, Owner::Generator(_)));
        for s in gens.into_iter().chain(stores) {
            let q = s.capacity.min(rest);
            add(s.owner, q, true);
            rest -= q;
        }
    }

    let generators = instance
        .offers
        .iter()
        .zip(gen_out)
        .map(|(o, output)| GeneratorDispatch { name: o.name.clone(), output })
        .collect();
    let storages = instance
        .storages
        .iter()
        .zip(st_out)
        .map(|(s, (p, b))| StorageDispatch {
            name: s.name.clone(),
            discharge_power: p,
            charge_power: b,
            soc_after: s.params.soc_after(s.soc, p, b, dt),
        })
        .collect();
    Ok(ClearingResult { clearing_price: price, generators, storages })
}

/// Clear a market whose storages all bid power bids.
pub fn clear_power_bid_ed(instance: &MarketInstance) -> Result<ClearingResult> {
    if let Some(s) = instance.storages.iter().find(|s| !matches!(s.bid, StorageBid::Power(_))) {
        return Err(Error::InvalidMarket(format!("storage `{}` does not bid a power bid", s.name)));
    }
    clear_market(instance)
}

/// Clear a market whose storages all bid SoC bids.
pub fn clear_soc_bid_ed(instance: &MarketInstance) -> Result<ClearingResult> {
    if let Some(s) = instance.storages.iter().find(|s| !matches!(s.bid, StorageBid::Soc(_))) {
        return Err(Error::InvalidMarket(format!("storage `{}` does not bid a SoC bid", s.name)));
    }
    clear_market(instance)
}

/// Parse a scenario file. One record per line, `#` starts a comment:
///
/// ```text
/// demand,105
/// dt_hours,1
/// generator,G1,100,15          # repeat the name to add segments
/// storage,S1,10,40,0.9,10,40,power,25,5
/// storage,S2,10,40,0.9,10,20,soc,30;20;5
/// ```
///
/// Storage fields are name, P, E, η, c, SoC, then either `power,<c^p>,<c^b>`
/// or `soc,<v1;v2;...>` for equal-width segments from empty to full.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<MarketInstance> {
    let mut demand = None;
    let mut dt_hours = 1.0;
    let mut offers: Vec<GeneratorOffer> = Vec::new();
    let mut storages = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let err = |msg: String| Error::Parse { source_name: source_name.to_string(), line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            let f = fields.get(i).ok_or_else(|| err(format!("missing field {}", i + 1)))?;
            f.parse::<f64>().map_err(|_| err(format!("`{f}` is not a number")))
        };
        let arity = |n: usize| -> Result<()> {
            if fields.len() == n {
                Ok(())
            } else {
                Err(err(format!("`{}` takes {} fields, got {}", fields[0], n, fields.len())))
            }
        };
        match fields[0] {
            "demand" => {
                arity(2)?;
                demand = Some(num(1)?);
            }
            "dt_hours" => {
                arity(2)?;
                dt_hours = num(1)?;
            }
            "generator" => {
                arity(4)?;
                let segment = (num(2)?, num(3)?);
                match offers.iter_mut().find(|o| o.name == fields[1]) {
                    Some(o) => o.segments.push(segment),
                    None => offers.push(GeneratorOffer { name: fields[1].to_string(), segments: vec![segment] }),
                }
            }
            "storage" => {
                let params = StorageParams::new(num(2)?, num(3)?, num(4)?, num(5)?);
                let soc = num(6)?;
                let bid = match fields.get(7).copied() {
                    Some("power") => {
                        arity(10)?;
                        StorageBid::Power(PowerBid { discharge_bid: num(8)?, charge_bid: num(9)? })
                    }
                    Some("soc") => {
                        arity(9)?;
                        let values = fields[8]
                            .split(';')
                            .map(|v| v.trim().parse::<f64>().map_err(|_| err(format!("`{v}` is not a number"))))
                            .collect::<Result<Vec<_>>>()?;
                        StorageBid::Soc(
                            SoCBidCurve::equal_width(params.soc_min, params.soc_max, values)
                                .map_err(|e| err(e.to_string()))?,
                        )
                    }
                    other => return Err(err(format!("bid kind must be `power` or `soc`, got {other:?}"))),
                };
                storages.push(StorageParticipant { name: fields[1].to_string(), params, soc, bid });
            }
            other => return Err(err(format!("unknown record `{other}`"))),
        }
    }
    let demand = demand.ok_or_else(|| Error::Parse {
        source_name: source_name.to_string(),
        line: 0,
        msg: "no `demand` record".into(),
    })?;
    let instance = MarketInstance { offers, demand, storages, dt_hours };
    validate(&instance)?;
    Ok(instance)
}

pub fn load_scenario(path: &Path) -> Result<MarketInstance> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

/// Plain-text dispatch table.
pub fn format_table(result: &ClearingResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "clearing_price {}", result.clearing_price);
    let _ = writeln!(out, "{:<12} {:>12} {:>12} {:>12}", "participant", "supply_mw", "charge_mw", "soc_after");
    for g in &result.generators {
        let _ = writeln!(out, "{:<12} {:>12.4} {:>12} {:>12}", g.name, g.output, "-", "-");
    }
    for s in &result.storages {
        let _ = writeln!(out, "{:<12} {:>12.4} {:>12.4} {:>12.4}", s.name, s.discharge_power, s.charge_power, s.soc_after);
    }
    out
}
