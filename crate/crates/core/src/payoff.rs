//! Reward, price, transition, potential, and value formulas for both game
//! levels. Everything here is a pure function of immutable inputs.

use crate::error::PayoffError;
use crate::model::{propagate, ForecastChain, GameG1, GameG2, LeaderParams, PricingParams};
use crate::mpg::PurePublicPolicy;

/// Unit electricity price for integer total demand `d_total` at public state
/// `e_n` with `n` users: `alpha*d/(n*e+gamma1) + beta/(e+gamma2)`.
pub fn price(d_total: u32, e_n: f64, pricing: &PricingParams, n: usize) -> f64 {
    price_real(f64::from(d_total), e_n, pricing, n)
}

/// Price at a possibly fractional aggregate demand (used when averaging over
/// an estimated opponent-demand distribution).
pub fn price_real(d_total: f64, e_n: f64, pricing: &PricingParams, n: usize) -> f64 {
    pricing.alpha * d_total / (n as f64 * e_n + pricing.gamma1)
        + pricing.beta / (e_n + pricing.gamma2)
}

/// A full joint state: stage, error index, and every user's storage level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointState {
    pub stage: usize,
    pub error_index: usize,
    pub storages: Vec<u32>,
}

/// One (demand, consumption) pair per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionProfile {
    pub actions: Vec<(u32, u32)>,
}

impl ActionProfile {
    pub fn total_demand(&self) -> u32 {
        self.actions.iter().map(|&(d, _)| d).sum()
    }

    /// Checks the caps and storage constraint for every user at `state`.
    pub fn check_feasible(&self, state: &JointState, g1: &GameG1) -> Result<(), PayoffError> {
        for (user, (&(d, c), spec)) in self.actions.iter().zip(&g1.users).enumerate() {
            let b = state.storages[user];
            if !spec.action_feasible(b, d, c) {
                return Err(PayoffError::InfeasibleAction { user, d, c, storage: b });
            }
        }
        Ok(())
    }
}

/// Stage reward of user `i` in the full game: `U_i(c_i) - P(total, e) * d_i`.
pub fn stage_reward_r(
    i: usize,
    state: &JointState,
    profile: &ActionProfile,
    g1: &GameG1,
) -> Result<f64, PayoffError> {
    profile.check_feasible(state, g1)?;
    let e_n = g1.chain.public_state(state.stage, state.error_index);
    let (d, c) = profile.actions[i];
    let p = price(profile.total_demand(), e_n, &g1.pricing, g1.num_users());
    Ok(g1.users[i].utility_of(c) - p * f64::from(d))
}

/// Stage reward of user `i` in the reduced game: `theta_i*d_i - P(total, e)*d_i`.
pub fn stage_reward_g(i: usize, e_n: f64, demands: &[u32], g2: &GameG2) -> f64 {
    let total: u32 = demands.iter().sum();
    let p = price(total, e_n, &g2.pricing, g2.num_users());
    f64::from(demands[i]) * (g2.thetas[i] - p)
}

/// Stage-wise exact potential of the reduced game at public state `e_n`.
pub fn stage_potential(e_n: f64, demands: &[u32], g2: &GameG2) -> f64 {
    let n = g2.num_users();
    let a = g2.pricing.alpha / (n as f64 * e_n + g2.pricing.gamma1);
    let b = g2.pricing.beta / (e_n + g2.pricing.gamma2);
    let mut linear = 0.0;
    let mut squares = 0.0;
    for (i, &d) in demands.iter().enumerate() {
        let d = f64::from(d);
        linear += (g2.thetas[i] - b) * d;
        squares += d * d;
    }
    let mut cross = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            cross += f64::from(demands[i]) * f64::from(demands[j]);
        }
    }
    linear - a * squares - a * cross
}

/// Distribution over successor joint states: storages update deterministically
/// as `b + d - c`, the error index follows the chain row of the current stage.
pub fn step_state(
    state: &JointState,
    profile: &ActionProfile,
    g1: &GameG1,
) -> Result<Vec<(JointState, f64)>, PayoffError> {
    profile.check_feasible(state, g1)?;
    if state.stage + 1 >= g1.horizon() {
        return Err(PayoffError::NoSuccessorStage(state.stage));
    }
    let next_storages: Vec<u32> = state
        .storages
        .iter()
        .zip(&profile.actions)
        .map(|(&b, &(d, c))| b + d - c)
        .collect();
    let row = &g1.chain.transition[state.stage][state.error_index];
    Ok(row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(j, &p)| {
            (
                JointState {
                    stage: state.stage + 1,
                    error_index: j,
                    storages: next_storages.clone(),
                },
                p,
            )
        })
        .collect())
}

/// Exact expectation of per-stage column values along the error chain from a
/// fixed initial error index:
/// `col(0, j0) + p^1_2 . col(1, .) + p^1_2 Q^2_3 . col(2, .) + ...`.
pub struct ChainOperators<'a> {
    chain: &'a ForecastChain,
}

impl<'a> ChainOperators<'a> {
    pub fn new(chain: &'a ForecastChain) -> Self {
        ChainOperators { chain }
    }

    /// Accumulates `column(t, j)` weighted by the reach probabilities from
    /// `initial` at stage 0.
    pub fn accumulate(&self, initial: usize, mut column: impl FnMut(usize, usize) -> f64) -> f64 {
        let m = self.chain.num_errors();
        let mut acc = column(0, initial);
        let mut dist = vec![0.0; m];
        dist[initial] = 1.0;
        for (step, matrix) in self.chain.transition.iter().enumerate() {
            dist = propagate(&dist, matrix);
            for (j, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    acc += p * column(step + 1, j);
                }
            }
        }
        acc
    }
}

/// Aggregate demand per (stage, error) cell under a pure public profile.
pub fn aggregate_demand(policies: &[PurePublicPolicy], t: usize, m: usize) -> Vec<Vec<u32>> {
    demand_totals(policies, t, m)
}

pub(crate) fn demand_totals(policies: &[PurePublicPolicy], t: usize, m: usize) -> Vec<Vec<u32>> {
    let mut totals = vec![vec![0u32; m]; t];
    for policy in policies {
        for (stage, row) in policy.demand.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                totals[stage][j] += d;
            }
        }
    }
    totals
}

/// Demand-only stage reward of user `i` at a cell, given own demand and the
/// cell's aggregate demand.
pub(crate) fn g_cell(g2: &GameG2, i: usize, t: usize, j: usize, own: u32, total: u32) -> f64 {
    let e_n = g2.chain.public_state(t, j);
    let p = price(total, e_n, &g2.pricing, g2.num_users());
    f64::from(own) * (g2.thetas[i] - p)
}

/// Value of every user under a pure public profile, from initial error index
/// `initial`, computed by the exact vector recursion (never by simulation).
pub fn value_g2(policies: &[PurePublicPolicy], g2: &GameG2, initial: usize) -> Vec<f64> {
    (0..g2.num_users()).map(|i| value_g2_user(policies, g2, i, initial)).collect()
}

/// Value of one user under a pure public profile.
pub fn value_g2_user(policies: &[PurePublicPolicy], g2: &GameG2, i: usize, initial: usize) -> f64 {
    let totals = demand_totals(policies, g2.horizon(), g2.num_errors());
    let ops = ChainOperators::new(&g2.chain);
    ops.accumulate(initial, |t, j| {
        g_cell(g2, i, t, j, policies[i].demand[t][j], totals[t][j])
    })
}

/// Value of user `i` with their own policy replaced by `replacement`.
pub(crate) fn value_g2_user_with(
    policies: &[PurePublicPolicy],
    g2: &GameG2,
    i: usize,
    replacement: &PurePublicPolicy,
    initial: usize,
) -> f64 {
    let totals = demand_totals(policies, g2.horizon(), g2.num_errors());
    let ops = ChainOperators::new(&g2.chain);
    ops.accumulate(initial, |t, j| {
        let own = replacement.demand[t][j];
        let total = totals[t][j] - policies[i].demand[t][j] + own;
        g_cell(g2, i, t, j, own, total)
    })
}

/// Potential value of a pure public profile from initial error index
/// `initial`: the same recursion as [`value_g2`] with stage potentials in
/// place of stage rewards.
pub fn potential_value_g2(policies: &[PurePublicPolicy], g2: &GameG2, initial: usize) -> f64 {
    let t = g2.horizon();
    let m = g2.num_errors();
    let mut cell_demands = vec![vec![Vec::with_capacity(policies.len()); m]; t];
    for policy in policies {
        for stage in 0..t {
            for j in 0..m {
                cell_demands[stage][j].push(policy.demand[stage][j]);
            }
        }
    }
    let ops = ChainOperators::new(&g2.chain);
    ops.accumulate(initial, |stage, j| {
        stage_potential(g2.chain.public_state(stage, j), &cell_demands[stage][j], g2)
    })
}

/// Expected aggregator payoff under a demand policy profile, by exact
/// propagation of the per-stage error distribution (demand depends only on
/// the public state, so no storage bookkeeping is needed).
pub fn leader_payoff(policies: &[PurePublicPolicy], g1: &GameG1, leader: &LeaderParams) -> f64 {
    let t = g1.horizon();
    let m = g1.chain.num_errors();
    let totals = demand_totals(policies, t, m);
    let marginals = g1.chain.marginals();
    let n = g1.num_users();
    let mut payoff = 0.0;
    for stage in 0..t {
        for j in 0..m {
            let weight = marginals[stage][j];
            if weight == 0.0 {
                continue;
            }
            let e_n = g1.chain.public_state(stage, j);
            let total = totals[stage][j];
            let d = f64::from(total);
            let revenue = price(total, e_n, &g1.pricing, n) * d;
            let generation_cost = leader.unit_cost * (d - e_n);
            let gap = d - e_n - leader.target;
            let penalty = 0.5 * leader.penalty_weight * gap * gap;
            payoff += weight * (revenue - generation_cost - penalty);
        }
    }
    payoff
}
