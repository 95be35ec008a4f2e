//! Equilibrium computation for the reduced demand game: cell-wise accelerated
//! best responses, largest-improvement sweeps until no player can improve,
//! and the lift of the converged profile back to a private-state profile.

use rand::Rng;

use crate::model::{GameG1, GameG2, UserSpec};
use crate::par::par_collect;
use crate::payoff::{
    demand_totals, g_cell, potential_value_g2, value_g2_user, value_g2_user_with,
};

/// One user's pure public policy: a demand per (stage, error) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurePublicPolicy {
    /// demand[t][j] in 0..=dMax.
    pub demand: Vec<Vec<u32>>,
}

impl PurePublicPolicy {
    /// All-zero demand policy over `t` stages and `m` error states.
    pub fn zeros(t: usize, m: usize) -> Self {
        PurePublicPolicy { demand: vec![vec![0; m]; t] }
    }

    /// Uniformly random policy with demands in `0..=d_max`.
    pub fn random<R: Rng>(t: usize, m: usize, d_max: u32, rng: &mut R) -> Self {
        PurePublicPolicy {
            demand: (0..t).map(|_| (0..m).map(|_| rng.gen_range(0..=d_max)).collect()).collect(),
        }
    }

    /// Whether the table covers all `t` x `m` cells within the demand cap.
    pub fn covers(&self, t: usize, m: usize, d_max: u32) -> bool {
        self.demand.len() == t
            && self.demand.iter().all(|row| row.len() == m && row.iter().all(|&d| d <= d_max))
    }
}

/// One accepted (or final) step of the improvement sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FipStep {
    pub iteration: usize,
    /// User whose best response had the largest improvement this iteration.
    pub user: usize,
    /// That improvement, aggregated as the max over initial error states.
    pub delta: f64,
    /// Potential value weighted by the initial error distribution, after the
    /// update.
    pub potential: f64,
}

/// Output of [`fip_solve`].
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub policies: Vec<PurePublicPolicy>,
    /// Stage-1 value per user and initial error state.
    pub per_state_values: Vec<Vec<f64>>,
    /// Potential value per initial error state.
    pub potential_per_state: Vec<f64>,
    pub trace: Vec<FipStep>,
    pub converged: bool,
    pub iterations: usize,
}

/// Integer argmax of the concave cell payoff
/// `f(d) = (theta - beta/(e+g2) - a*opp) d - a d^2` over `0..=dMax`, found by
/// clipping the continuous vertex and comparing the two adjacent integers.
/// Ties break toward the smaller demand.
pub fn accelerated_best_response(i: usize, e_n: f64, opponent_sum: u32, g2: &GameG2) -> u32 {
    let n = g2.num_users() as f64;
    let a = g2.pricing.alpha / (n * e_n + g2.pricing.gamma1);
    let b = g2.pricing.beta / (e_n + g2.pricing.gamma2);
    let margin = g2.thetas[i] - b - a * f64::from(opponent_sum);
    let d_max = g2.demand_caps[i];
    let vertex = (margin / (2.0 * a)).clamp(0.0, f64::from(d_max));
    let lo = vertex.floor() as u32;
    let hi = vertex.ceil().min(f64::from(d_max)) as u32;
    if lo == hi {
        return lo;
    }
    let f = |d: u32| {
        let d = f64::from(d);
        margin * d - a * d * d
    };
    if f(lo) >= f(hi) {
        lo
    } else {
        hi
    }
}

/// Best response of user `i` against the other policies in `profile`, built
/// cell by cell; each cell is an independent subproblem, so the result
/// maximizes the user's value from every initial state simultaneously.
pub fn best_response_policy(i: usize, profile: &[PurePublicPolicy], g2: &GameG2) -> PurePublicPolicy {
    let t = g2.horizon();
    let m = g2.num_errors();
    let totals = demand_totals(profile, t, m);
    let mut demand = vec![vec![0u32; m]; t];
    for stage in 0..t {
        for j in 0..m {
            let opp = totals[stage][j] - profile[i].demand[stage][j];
            demand[stage][j] =
                accelerated_best_response(i, g2.chain.public_state(stage, j), opp, g2);
        }
    }
    PurePublicPolicy { demand }
}

/// Value gain of user `i` from switching to `best_response` while opponents
/// keep playing `current`, evaluated from one initial error state.
pub fn improvement_delta(
    i: usize,
    current: &[PurePublicPolicy],
    best_response: &PurePublicPolicy,
    g2: &GameG2,
    initial: usize,
) -> f64 {
    value_g2_user_with(current, g2, i, best_response, initial)
        - value_g2_user(current, g2, i, initial)
}

/// Reach probabilities from each initial error state:
/// `reach[j0][t][j] = P(e^t = j | e^0 = j0)`.
fn reach_probabilities(g2: &GameG2) -> Vec<Vec<Vec<f64>>> {
    let m = g2.num_errors();
    (0..m)
        .map(|j0| {
            let mut per_stage = Vec::with_capacity(g2.horizon());
            let mut dist = vec![0.0; m];
            dist[j0] = 1.0;
            per_stage.push(dist.clone());
            for matrix in &g2.chain.transition {
                dist = crate::model::propagate(&dist, matrix);
                per_stage.push(dist.clone());
            }
            per_stage
        })
        .collect()
}

/// Runs the largest-improvement best-response sweep on the reduced game until
/// no user can improve at any initial state, or `k_max` iterations elapse.
///
/// Per iteration every user's best response and improvement are computed
/// (improvement aggregated as the max over initial error states); only the
/// user with the largest aggregate improvement updates, ties going to the
/// lowest user index. The result is returned with `converged = false` when
/// the budget runs out.
pub fn fip_solve(g2: &GameG2, initial: Vec<PurePublicPolicy>, k_max: usize) -> EquilibriumResult {
    let t = g2.horizon();
    let m = g2.num_errors();
    let n = g2.num_users();
    assert_eq!(initial.len(), n, "one policy per user");
    for (i, policy) in initial.iter().enumerate() {
        assert!(policy.covers(t, m, g2.demand_caps[i]), "policy {i} does not cover the game");
    }
    assert!(k_max >= 1);

    let reach = reach_probabilities(g2);
    let mut policies = initial;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=k_max {
        iterations = k;
        let totals = demand_totals(&policies, t, m);
        let candidates: Vec<(PurePublicPolicy, f64)> = par_collect(n, |i| {
            let mut demand = vec![vec![0u32; m]; t];
            for stage in 0..t {
                for j in 0..m {
                    let opp = totals[stage][j] - policies[i].demand[stage][j];
                    demand[stage][j] =
                        accelerated_best_response(i, g2.chain.public_state(stage, j), opp, g2);
                }
            }
            let br = PurePublicPolicy { demand };
            // Max over initial states of the value gain, using the reach
            // weights so unchanged cells contribute exactly zero.
            let mut delta = 0.0f64;
            for weights in &reach {
                let mut gain = 0.0;
                for stage in 0..t {
                    for j in 0..m {
                        let old = policies[i].demand[stage][j];
                        let new = br.demand[stage][j];
                        if old == new {
                            continue;
                        }
                        let w = weights[stage][j];
                        if w == 0.0 {
                            continue;
                        }
                        let total_new = totals[stage][j] - old + new;
                        gain += w
                            * (g_cell(g2, i, stage, j, new, total_new)
                                - g_cell(g2, i, stage, j, old, totals[stage][j]));
                    }
                }
                delta = delta.max(gain);
            }
            (br, delta)
        });

        let mut best_user = 0;
        for (i, (_, delta)) in candidates.iter().enumerate() {
            if *delta > candidates[best_user].1 {
                best_user = i;
            }
        }
        let best_delta = candidates[best_user].1;
        if best_delta > 0.0 {
            policies[best_user] = candidates[best_user].0.clone();
            let potential = weighted_potential(&policies, g2);
            trace.push(FipStep { iteration: k, user: best_user, delta: best_delta, potential });
        } else {
            let potential = weighted_potential(&policies, g2);
            trace.push(FipStep { iteration: k, user: best_user, delta: 0.0, potential });
            converged = true;
            break;
        }
    }

    let per_state_values =
        (0..n).map(|i| (0..m).map(|j| value_g2_user(&policies, g2, i, j)).collect()).collect();
    let potential_per_state = (0..m).map(|j| potential_value_g2(&policies, g2, j)).collect();
    EquilibriumResult { policies, per_state_values, potential_per_state, trace, converged, iterations }
}

fn weighted_potential(policies: &[PurePublicPolicy], g2: &GameG2) -> f64 {
    g2.chain
        .initial_dist
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(j, &w)| w * potential_value_g2(policies, g2, j))
        .sum()
}

/// One user's private Markovian strategy: a distribution over the canonical
/// feasible (demand, consumption) list at every (stage, error, storage).
#[derive(Debug, Clone, PartialEq)]
pub struct UserPms {
    /// probs[t][j][b][k], aligned with `UserSpec::feasible_actions(b)`.
    pub probs: Vec<Vec<Vec<Vec<f64>>>>,
}

impl UserPms {
    /// Uniform strategy over the feasible actions at every private state.
    pub fn uniform(spec: &UserSpec, t: usize, m: usize) -> Self {
        let per_b: Vec<Vec<f64>> = (0..=spec.b_max)
            .map(|b| {
                let len = spec.feasible_actions(b).len();
                vec![1.0 / len as f64; len]
            })
            .collect();
        UserPms { probs: vec![vec![per_b; m]; t] }
    }

    /// Point-mass strategy given by an action selector; the selected action
    /// must be feasible at its storage level.
    pub fn pure(
        spec: &UserSpec,
        t: usize,
        m: usize,
        mut select: impl FnMut(usize, usize, u32) -> (u32, u32),
    ) -> Self {
        let probs = (0..t)
            .map(|stage| {
                (0..m)
                    .map(|j| {
                        (0..=spec.b_max)
                            .map(|b| {
                                let actions = spec.feasible_actions(b);
                                let chosen = select(stage, j, b);
                                let idx = actions
                                    .iter()
                                    .position(|&a| a == chosen)
                                    .unwrap_or_else(|| {
                                        panic!("action {chosen:?} infeasible at storage {b}")
                                    });
                                let mut row = vec![0.0; actions.len()];
                                row[idx] = 1.0;
                                row
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        UserPms { probs }
    }

    /// Samples an action index at a private state.
    pub fn sample_index<R: Rng>(&self, t: usize, j: usize, b: u32, rng: &mut R) -> usize {
        let row = &self.probs[t][j][b as usize];
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if draw < acc {
                return k;
            }
        }
        row.len() - 1
    }

    /// Max L1 distance to another strategy over all private states.
    pub fn l1_distance(&self, other: &UserPms) -> f64 {
        let mut worst = 0.0f64;
        for (ts, to) in self.probs.iter().zip(&other.probs) {
            for (js, jo) in ts.iter().zip(to) {
                for (bs, bo) in js.iter().zip(jo) {
                    let d: f64 = bs.iter().zip(bo).map(|(a, b)| (a - b).abs()).sum();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    pub(crate) fn is_normalized(&self, tol: f64) -> bool {
        self.probs.iter().flatten().flatten().all(|row| {
            row.iter().all(|&p| p >= -tol) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// A private Markovian strategy profile for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct PmsProfile {
    pub users: Vec<UserPms>,
}

impl PmsProfile {
    /// Uniform profile for a game.
    pub fn uniform(g1: &GameG1) -> Self {
        let t = g1.horizon();
        let m = g1.chain.num_errors();
        PmsProfile { users: g1.users.iter().map(|u| UserPms::uniform(u, t, m)).collect() }
    }

    /// Every distribution sums to one within `tol` and is nonnegative.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.users.iter().all(|u| u.is_normalized(tol))
    }
}

/// Lifts a reduced-game equilibrium to a pure private profile: demand stays
/// `d*(t, e)` and consumption is `min(d* + b, cMax)` (the cap never binds
/// under the validated cap invariant), so storage is spent every stage.
pub fn lift_to_pme(g2_equilibrium: &[PurePublicPolicy], g1: &GameG1) -> PmsProfile {
    let t = g1.horizon();
    let m = g1.chain.num_errors();
    let users = g1
        .users
        .iter()
        .zip(g2_equilibrium)
        .map(|(spec, policy)| {
            UserPms::pure(spec, t, m, |stage, j, b| {
                let d = policy.demand[stage][j];
                (d, (d + b).min(spec.c_max))
            })
        })
        .collect();
    PmsProfile { users }
}
