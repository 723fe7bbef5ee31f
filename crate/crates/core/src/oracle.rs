//! Perfect-foresight arbitrage optimum computed directly, without the
//! marginal-value recursion. Used to certify valuation and the
//! perfect-forecast SoC-bid simulation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SoCGrid, StorageParams};
use crate::series::PriceSeries;

/// Longest horizon [`enumerate_tiny`] accepts.
pub const MAX_ENUMERATION_HORIZON: usize = 4;
/// Largest uniform action grid [`enumerate_tiny`] accepts.
pub const MAX_ENUMERATION_ACTIONS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleStep {
    pub discharge_power: f64,
    pub charge_power: f64,
    /// SoC at the end of the period.
    pub soc: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Realized profit of `optimal_schedule`.
    pub optimal_profit: f64,
    pub optimal_schedule: Vec<OracleStep>,
}

/// Candidate `(discharge, charge)` pairs from SoC `e`: `action_points`
/// uniformly spaced net powers over `[-P, P]`, plus idle and the exact
/// moves that reach either SoC limit or full power. Idle comes first so
/// ties resolve to it. Discharge is excluded at negative prices.
fn candidate_actions(e: f64, price: f64, params: &StorageParams, dt: f64, action_points: usize, out: &mut Vec<(f64, f64)>) {
    out.clear();
    out.push((0.0, 0.0));
    let p_max = if price >= 0.0 { params.discharge_limit(e, dt) } else { 0.0 };
    let b_max = params.charge_limit(e, dt);
    if p_max > 0.0 {
        out.push((p_max, 0.0));
    }
    if b_max > 0.0 {
        out.push((0.0, b_max));
    }
    let rating = params.power_rating;
    for k in 0..action_points {
        let u = -rating + 2.0 * rating * k as f64 / (action_points - 1) as f64;
        if u > 0.0 && u < p_max {
            out.push((u, 0.0));
        } else if u < 0.0 && -u < b_max {
            out.push((0.0, -u));
        }
    }
}

fn reward(price: f64, p: f64, b: f64, params: &StorageParams, dt: f64) -> f64 {
    price * (p - b) * dt - params.discharge_cost * p * dt
}

fn interpolate(grid: &SoCGrid, values: &[f64], e: f64) -> f64 {
    interpolate_scaled(grid.soc_min(), 1.0 / grid.step(), values, e)
}

fn interpolate_scaled(soc_min: f64, inv_step: f64, values: &[f64], e: f64) -> f64 {
    let x = ((e - soc_min) * inv_step).clamp(0.0, (values.len() - 1) as f64);
    let i = (x as usize).min(values.len() - 2);
    let w = x - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Tabular dynamic program over the SoC grid with a discretized action set.
///
/// The backward pass stores the value-to-go at every grid point, linearly
/// interpolated between points; the forward pass starts from
/// `initial_soc`, takes the best candidate action at the exact SoC and
/// reports the realized schedule. Terminal value is zero.
pub fn grid_dp_oracle(
    prices: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    action_points: usize,
    initial_soc: f64,
) -> Result<OracleResult> {
    params.validate()?;
    params.check_soc(initial_soc)?;
    if action_points < 3 {
        return Err(Error::InvalidActionGrid(format!("need at least 3 action points, got {action_points}")));
    }
    if grid.soc_min() != params.soc_min || grid.soc_max() != params.soc_max {
        return Err(Error::InvalidGrid("grid range differs from the storage SoC range".into()));
    }
    let dt = prices.dt_hours();
    let n = grid.len();
    let horizon = prices.len();
    let mut value = vec![vec![0.0; n]; horizon + 1];
    let (lo, hi) = (params.soc_min, params.soc_max);
    let inv_step = 1.0 / grid.step();
    let mut actions = Vec::with_capacity(action_points + 3);
    // Backward pass: the uniform actions shift SoC by the same amount from
    // every grid point, so their rewards and shifts are computed once per
    // period; the SoC-limited boundary moves are added per point.
    let mut moves: Vec<(f64, f64)> = Vec::with_capacity(action_points);
    for t in (0..horizon).rev() {
        let price = prices.values()[t];
        moves.clear();
        for k in 0..action_points {
            let u = -params.power_rating + 2.0 * params.power_rating * k as f64 / (action_points - 1) as f64;
            if u > 0.0 && price >= 0.0 {
                moves.push((reward(price, u, 0.0, params, dt), -u * dt / params.efficiency));
            } else if u < 0.0 {
                moves.push((reward(price, 0.0, -u, params, dt), -u * params.efficiency * dt));
            }
        }
        let (head, tail) = value.split_at_mut(t + 1);
        let next = &tail[0];
        for (i, e) in grid.points().enumerate() {
            let mut best = next[i];
            let p_max = if price >= 0.0 { params.discharge_limit(e, dt) } else { 0.0 };
            let b_max = params.charge_limit(e, dt);
            for (p, b) in [(p_max, 0.0), (0.0, b_max)] {
                if p > 0.0 || b > 0.0 {
                    let v = reward(price, p, b, params, dt) + interpolate_scaled(lo, inv_step, next, params.soc_after(e, p, b, dt));
                    best = best.max(v);
                }
            }
            for &(r, shift) in &moves {
                let x = e + shift;
                if x > lo && x < hi {
                    best = best.max(r + interpolate_scaled(lo, inv_step, next, x));
                }
            }
            head[t][i] = best;
        }
    }

    let mut soc = initial_soc;
    let mut schedule = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for t in 0..horizon {
        let price = prices.values()[t];
        candidate_actions(soc, price, params, dt, action_points, &mut actions);
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for &(p, b) in &actions {
            let v = reward(price, p, b, params, dt) + interpolate(grid, &value[t + 1], params.soc_after(soc, p, b, dt));
            if v > best.0 {
                best = (v, p, b);
            }
        }
        let (_, p, b) = best;
        let profit = reward(price, p, b, params, dt);
        soc = params.soc_after(soc, p, b, dt);
        total += profit;
        schedule.push(OracleStep { discharge_power: p, charge_power: b, soc, profit });
    }
    Ok(OracleResult { optimal_profit: total, optimal_schedule: schedule })
}

/// Exhaustive search over every action sequence drawn from the same
/// candidate set as [`grid_dp_oracle`], with exact (continuous) SoC.
pub fn enumerate_tiny(prices: &PriceSeries, params: &StorageParams, action_grid: usize, initial_soc: f64) -> Result<f64> {
    params.validate()?;
    params.check_soc(initial_soc)?;
    if prices.len() > MAX_ENUMERATION_HORIZON {
        return Err(Error::HorizonTooLong { len: prices.len(), max: MAX_ENUMERATION_HORIZON });
    }
    if !(2..=MAX_ENUMERATION_ACTIONS).contains(&action_grid) {
        return Err(Error::InvalidActionGrid(format!(
            "action grid must be within 2..={MAX_ENUMERATION_ACTIONS}, got {action_grid}"
        )));
    }
    fn search(t: usize, soc: f64, prices: &[f64], params: &StorageParams, dt: f64, actions: usize) -> f64 {
        if t == prices.len() {
            return 0.0;
        }
        let mut cands = Vec::new();
        candidate_actions(soc, prices[t], params, dt, actions, &mut cands);
        cands
            .into_iter()
            .map(|(p, b)| {
                reward(prices[t], p, b, params, dt)
                    + search(t + 1, params.soc_after(soc, p, b, dt), prices, params, dt, actions)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    Ok(search(0, initial_soc, prices.values(), params, prices.dt_hours(), action_grid))
}
