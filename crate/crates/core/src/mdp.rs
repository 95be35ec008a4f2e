//! Finite-horizon MDP backward induction, the learner's best-response MDP
//! over private states, and the full-information best response over joint
//! states used for exploitability measurement.

use crate::error::MdpError;
use crate::fp::AggregateEstimate;
use crate::model::GameG1;
use crate::mpg::PmsProfile;
use crate::par::par_collect;
use crate::payoff::price;

/// Default cap on joint states per stage for the full-information machinery.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

/// One sparse transition row: (next-state index, probability) pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// An explicit finite-horizon MDP with per-stage state sets.
///
/// `transition` has length `horizon - 1`; rewards at the final stage are
/// action-dependent and the terminal value is `max_a reward`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    pub horizon: usize,
    /// Number of states at each stage.
    pub states: Vec<usize>,
    /// reward[t][s][a].
    pub reward: Vec<Vec<Vec<f64>>>,
    /// transition[t][s][a]: sparse rows of (next state at stage t+1, prob).
    pub transition: Vec<Vec<Vec<SparseRow>>>,
}

impl FiniteMdp {
    /// Checks row-stochastic transitions (1e-9) and nonempty action sets.
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.horizon == 0 || self.states.len() != self.horizon {
            return Err(MdpError::Invalid("stage count mismatch".into()));
        }
        for (t, per_state) in self.reward.iter().enumerate() {
            if per_state.len() != self.states[t] {
                return Err(MdpError::Invalid(format!("stage {t}: state count mismatch")));
            }
            for (s, actions) in per_state.iter().enumerate() {
                if actions.is_empty() {
                    return Err(MdpError::Invalid(format!("stage {t}, state {s}: no actions")));
                }
            }
        }
        for (t, per_state) in self.transition.iter().enumerate() {
            for (s, per_action) in per_state.iter().enumerate() {
                for (a, row) in per_action.iter().enumerate() {
                    let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(MdpError::Invalid(format!(
                            "stage {t}, state {s}, action {a}: row sums to {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stage-indexed optimal values and a deterministic argmax policy.
#[derive(Debug, Clone)]
pub struct MdpSolution {
    pub value: Vec<Vec<f64>>,
    pub policy: Vec<Vec<usize>>,
}

/// Exact backward induction. Terminal values are `max_a reward(T, s, a)`;
/// earlier stages apply the Bellman maximization. Argmax ties go to the
/// lowest action index.
pub fn backward_induction(mdp: &FiniteMdp) -> MdpSolution {
    let t_last = mdp.horizon - 1;
    let mut value = vec![Vec::new(); mdp.horizon];
    let mut policy = vec![Vec::new(); mdp.horizon];
    for t in (0..mdp.horizon).rev() {
        let states = mdp.states[t];
        let mut v_t = vec![f64::NEG_INFINITY; states];
        let mut p_t = vec![0usize; states];
        for s in 0..states {
            for (a, &r) in mdp.reward[t][s].iter().enumerate() {
                let mut q = r;
                if t < t_last {
                    for &(next, prob) in &mdp.transition[t][s][a] {
                        q += prob * value[t + 1][next];
                    }
                }
                if q > v_t[s] {
                    v_t[s] = q;
                    p_t[s] = a;
                }
            }
        }
        value[t] = v_t;
        policy[t] = p_t;
    }
    MdpSolution { value, policy }
}

/// Evaluates a fixed deterministic policy on an MDP (no maximization).
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let t_last = mdp.horizon - 1;
    let mut value = vec![Vec::new(); mdp.horizon];
    for t in (0..mdp.horizon).rev() {
        let states = mdp.states[t];
        let mut v_t = vec![0.0; states];
        for s in 0..states {
            let a = policy[t][s];
            let mut q = mdp.reward[t][s][a];
            if t < t_last {
                for &(next, prob) in &mdp.transition[t][s][a] {
                    q += prob * value[t + 1][next];
                }
            }
            v_t[s] = q;
        }
        value[t] = v_t;
    }
    value
}

/// Builds the learner's best-response MDP for user `i`: states are the
/// private pairs (error index, own storage), actions the feasible
/// (demand, consumption) pairs, rewards use the price averaged over the
/// estimated aggregate opponent demand, and transitions combine the error
/// chain row with the deterministic storage update.
pub fn build_br_mdp(i: usize, estimate: &AggregateEstimate, g1: &GameG1) -> FiniteMdp {
    let spec = &g1.users[i];
    let t_len = g1.horizon();
    let m = g1.chain.num_errors();
    let levels = spec.b_max as usize + 1;
    let states = m * levels;
    let n = g1.num_users();
    let actions_by_b: Vec<Vec<(u32, u32)>> =
        (0..=spec.b_max).map(|b| spec.feasible_actions(b)).collect();

    let state_of = |j: usize, b: usize| j * levels + b;

    let mut reward = Vec::with_capacity(t_len);
    let mut transition = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len {
        let mut r_t = Vec::with_capacity(states);
        let mut q_t = Vec::with_capacity(states);
        for j in 0..m {
            let e_n = g1.chain.public_state(t, j);
            let weights = &estimate.probs[t][j];
            for b in 0..levels {
                let actions = &actions_by_b[b];
                let mut r_sa = Vec::with_capacity(actions.len());
                let mut q_sa = Vec::with_capacity(actions.len());
                for &(d, c) in actions {
                    // Estimate-expected price, summed over the aggregate
                    // opponent-demand support.
                    let mut expected_price = 0.0;
                    for (v, &w) in weights.iter().enumerate() {
                        if w > 0.0 {
                            expected_price += w * price(v as u32 + d, e_n, &g1.pricing, n);
                        }
                    }
                    r_sa.push(spec.utility_of(c) - expected_price * f64::from(d));
                    if t + 1 < t_len {
                        let b_next = (b as u32 + d - c) as usize;
                        let row = &g1.chain.transition[t][j];
                        let successors: SparseRow = row
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(j_next, &p)| (state_of(j_next, b_next), p))
                            .collect();
                        q_sa.push(successors);
                    }
                }
                r_t.push(r_sa);
                if t + 1 < t_len {
                    q_t.push(q_sa);
                }
            }
        }
        reward.push(r_t);
        if t + 1 < t_len {
            transition.push(q_t);
        }
    }
    FiniteMdp { horizon: t_len, states: vec![states; t_len], reward, transition }
}

/// Decodes a private-state index produced by [`build_br_mdp`].
pub fn private_state_of(index: usize, b_max: u32) -> (usize, u32) {
    let levels = b_max as usize + 1;
    (index / levels, (index % levels) as u32)
}

/// Joint-state layout for the full-information passes.
struct JointLayout {
    num_errors: usize,
    strides: Vec<usize>,
    storage_states: usize,
}

impl JointLayout {
    fn new(g1: &GameG1) -> Self {
        let mut strides = Vec::with_capacity(g1.num_users());
        let mut acc = 1usize;
        for user in &g1.users {
            strides.push(acc);
            acc *= user.b_max as usize + 1;
        }
        JointLayout { num_errors: g1.chain.num_errors(), strides, storage_states: acc }
    }

    fn states_per_stage(&self) -> usize {
        self.num_errors * self.storage_states
    }

    fn storage_of(&self, index: usize, user: usize, b_max: u32) -> u32 {
        ((index / self.strides[user]) % (b_max as usize + 1)) as u32
    }
}

/// One resolved opponent joint action: probability, aggregate demand, and the
/// storage part of the successor index contributed by the opponents.
#[derive(Clone, Copy)]
struct OpponentOutcome {
    prob: f64,
    demand: u32,
    storage_part: usize,
}

/// Per-user, per-storage feasible action lists.
type ActionLists = Vec<Vec<(u32, u32)>>;

/// (value[t][joint state], argmax action index[t][joint state]).
type JointBackwardResult = (Vec<Vec<f64>>, Vec<Vec<usize>>);

#[allow(clippy::too_many_arguments)]
fn opponent_outcomes(
    i: usize,
    profile: &PmsProfile,
    g1: &GameG1,
    layout: &JointLayout,
    t: usize,
    j: usize,
    storage_index: usize,
    actions_by_user: &[ActionLists],
) -> Vec<OpponentOutcome> {
    let mut outcomes = vec![OpponentOutcome { prob: 1.0, demand: 0, storage_part: 0 }];
    for (u, spec) in g1.users.iter().enumerate() {
        if u == i {
            continue;
        }
        let b = layout.storage_of(storage_index, u, spec.b_max);
        let probs = &profile.users[u].probs[t][j][b as usize];
        let actions = &actions_by_user[u][b as usize];
        let mut next = Vec::with_capacity(outcomes.len() * actions.len());
        for out in &outcomes {
            for (k, &(d, c)) in actions.iter().enumerate() {
                let p = probs[k];
                if p <= 0.0 {
                    continue;
                }
                let b_next = (b + d - c) as usize;
                next.push(OpponentOutcome {
                    prob: out.prob * p,
                    demand: out.demand + d,
                    storage_part: out.storage_part + b_next * layout.strides[u],
                });
            }
        }
        outcomes = next;
    }
    outcomes
}

fn check_cap(layout: &JointLayout, cap: usize) -> Result<(), MdpError> {
    let size = layout.states_per_stage();
    if size > cap {
        return Err(MdpError::StateSpaceTooLarge { size, cap });
    }
    Ok(())
}

/// Backward pass over joint states for user `i`. With `maximize` the user
/// best-responds; otherwise their own mixed strategy is folded in, giving the
/// profile value.
fn joint_backward(
    i: usize,
    profile: &PmsProfile,
    g1: &GameG1,
    cap: usize,
    maximize: bool,
) -> Result<JointBackwardResult, MdpError> {
    let layout = JointLayout::new(g1);
    check_cap(&layout, cap)?;
    let t_len = g1.horizon();
    let per_stage = layout.states_per_stage();
    let n = g1.num_users();
    let actions_by_user: Vec<ActionLists> = g1
        .users
        .iter()
        .map(|spec| (0..=spec.b_max).map(|b| spec.feasible_actions(b)).collect())
        .collect();

    let mut value: Vec<Vec<f64>> = vec![Vec::new(); t_len];
    let mut policy: Vec<Vec<usize>> = vec![Vec::new(); t_len];
    for t in (0..t_len).rev() {
        let next_value = if t + 1 < t_len { Some(&value[t + 1]) } else { None };
        let results: Vec<(f64, usize)> = par_collect(per_stage, |s| {
            let j = s / layout.storage_states;
            let storage_index = s % layout.storage_states;
            let e_n = g1.chain.public_state(t, j);
            let outcomes =
                opponent_outcomes(i, profile, g1, &layout, t, j, storage_index, &actions_by_user);
            let spec = &g1.users[i];
            let b_i = layout.storage_of(storage_index, i, spec.b_max);
            let own_actions = &actions_by_user[i][b_i as usize];
            let own_probs = &profile.users[i].probs[t][j][b_i as usize];
            let mut best_q = f64::NEG_INFINITY;
            let mut best_a = 0usize;
            let mut mixed_q = 0.0;
            for (a, &(d, c)) in own_actions.iter().enumerate() {
                if !maximize && own_probs[a] <= 0.0 {
                    continue;
                }
                let own_next = (b_i + d - c) as usize * layout.strides[i];
                let mut q = 0.0;
                for out in &outcomes {
                    let total = out.demand + d;
                    let reward = spec.utility_of(c) - price(total, e_n, &g1.pricing, n) * f64::from(d);
                    let mut term = reward;
                    if let Some(next) = next_value {
                        let storage_next = out.storage_part + own_next;
                        let row = &g1.chain.transition[t][j];
                        for (j_next, &p) in row.iter().enumerate() {
                            if p > 0.0 {
                                term += p * next[j_next * layout.storage_states + storage_next];
                            }
                        }
                    }
                    q += out.prob * term;
                }
                if maximize {
                    if q > best_q {
                        best_q = q;
                        best_a = a;
                    }
                } else {
                    mixed_q += own_probs[a] * q;
                }
            }
            if maximize {
                (best_q, best_a)
            } else {
                (mixed_q, 0)
            }
        });
        value[t] = results.iter().map(|&(v, _)| v).collect();
        policy[t] = results.iter().map(|&(_, a)| a).collect();
    }
    Ok((value, policy))
}

/// Exact best-response value of user `i` against the (possibly mixed) rest of
/// `profile`, by backward induction over the joint state space, together with
/// the argmax deviation policy (indices into the user's feasible action
/// lists, states laid out error-major).
pub fn full_info_best_response(
    i: usize,
    profile: &PmsProfile,
    g1: &GameG1,
    cap: usize,
) -> Result<(Vec<f64>, Vec<Vec<usize>>), MdpError> {
    let (value, policy) = joint_backward(i, profile, g1, cap, true)?;
    Ok((value[0].clone(), policy))
}

/// Value of user `i` when everyone, including `i`, follows `profile`; one
/// entry per joint initial state.
pub fn profile_value(
    i: usize,
    profile: &PmsProfile,
    g1: &GameG1,
    cap: usize,
) -> Result<Vec<f64>, MdpError> {
    let (value, _) = joint_backward(i, profile, g1, cap, false)?;
    Ok(value[0].clone())
}

/// Number of joint states per stage, for cap decisions.
pub fn joint_states_per_stage(g1: &GameG1) -> usize {
    JointLayout::new(g1).states_per_stage()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::AggregateEstimate;
    use crate::model::{build_reduced_game, ForecastChain, GameG1, PricingParams, UserSpec};
    use crate::mpg::{fip_solve, lift_to_pme, PurePublicPolicy};
    use crate::payoff::{stage_reward_r, ActionProfile, JointState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_hat_q() -> Vec<Vec<f64>> {
        vec![
            vec![5.0 / 11.0, 5.0 / 11.0, 1.0 / 11.0],
            vec![1.0 / 4.0, 7.0 / 16.0, 5.0 / 16.0],
            vec![2.0 / 9.0, 4.0 / 9.0, 1.0 / 3.0],
        ]
    }

    fn example2_g1() -> GameG1 {
        let chain = ForecastChain::broadcast(
            vec![5.0, 11.0, 8.0],
            vec![2.0, 0.0, -2.0],
            example_hat_q(),
            vec![1.0 / 3.0; 3],
        );
        let users = vec![
            UserSpec::linear(0.9, 4, 6, 2),
            UserSpec::linear(1.0, 4, 6, 2),
            UserSpec::linear(1.1, 4, 6, 2),
        ];
        GameG1::new(chain, users, PricingParams { alpha: 1.5, beta: 1.5, gamma1: 1.0, gamma2: 1.0 })
    }

    #[test]
    fn single_stage_value_is_max_reward() {
        let mdp = FiniteMdp {
            horizon: 1,
            states: vec![2],
            reward: vec![vec![vec![1.0, 3.0, 2.0], vec![-1.0, -2.0]]],
            transition: vec![],
        };
        mdp.validate().unwrap();
        let sol = backward_induction(&mdp);
        assert_eq!(sol.value[0], vec![3.0, -1.0]);
        assert_eq!(sol.policy[0], vec![1, 0]);
    }

    #[test]
    fn two_stage_hand_computed() {
        // Stage-2 values: s0 -> max(1, 0) = 1; s1 -> max(4, 5) = 5.
        // Stage-1, s0: a0 = 1 + 0.5*1 + 0.5*5 = 4; a1 = 0 + 1.0*5 = 5.
        // Stage-1, s1: a0 = 2 + 1.0*1 = 3; a1 = 1 + 0.25*1 + 0.75*5 = 5.
        let mdp = FiniteMdp {
            horizon: 2,
            states: vec![2, 2],
            reward: vec![
                vec![vec![1.0, 0.0], vec![2.0, 1.0]],
                vec![vec![1.0, 0.0], vec![4.0, 5.0]],
            ],
            transition: vec![vec![
                vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]],
                vec![vec![(0, 1.0)], vec![(0, 0.25), (1, 0.75)]],
            ]],
        };
        mdp.validate().unwrap();
        let sol = backward_induction(&mdp);
        assert_eq!(sol.value[1], vec![1.0, 5.0]);
        assert_eq!(sol.value[0], vec![5.0, 5.0]);
        assert_eq!(sol.policy[0], vec![1, 1]);
    }

    fn random_mdp(rng: &mut ChaCha8Rng, max_policies: u64) -> FiniteMdp {
        loop {
            let horizon = rng.gen_range(1..=4);
            let states: Vec<usize> = (0..horizon).map(|_| rng.gen_range(1..=6)).collect();
            let actions: Vec<Vec<usize>> = states
                .iter()
                .map(|&s| (0..s).map(|_| rng.gen_range(1..=4)).collect())
                .collect();
            let count: u64 = actions
                .iter()
                .flatten()
                .try_fold(1u64, |acc, &a| acc.checked_mul(a as u64))
                .unwrap_or(u64::MAX);
            if count > max_policies {
                continue;
            }
            let reward: Vec<Vec<Vec<f64>>> = (0..horizon)
                .map(|t| {
                    (0..states[t])
                        .map(|s| (0..actions[t][s]).map(|_| rng.gen_range(-5.0..5.0)).collect())
                        .collect()
                })
                .collect();
            let transition: Vec<Vec<Vec<SparseRow>>> = (0..horizon.saturating_sub(1))
                .map(|t| {
                    (0..states[t])
                        .map(|s| {
                            (0..actions[t][s])
                                .map(|_| {
                                    let weights: Vec<f64> =
                                        (0..states[t + 1]).map(|_| rng.gen_range(0.01..1.0)).collect();
                                    let sum: f64 = weights.iter().sum();
                                    weights
                                        .iter()
                                        .enumerate()
                                        .map(|(next, &w)| (next, w / sum))
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            return FiniteMdp { horizon, states, reward, transition };
        }
    }

    /// Exhaustive deterministic-policy enumeration oracle: per-initial-state
    /// maximum over every policy's evaluated value.
    fn enumeration_oracle(mdp: &FiniteMdp) -> Vec<f64> {
        let mut cells = Vec::new();
        for t in 0..mdp.horizon {
            for s in 0..mdp.states[t] {
                cells.push((t, s, mdp.reward[t][s].len()));
            }
        }
        let mut assignment = vec![0usize; cells.len()];
        let mut best = vec![f64::NEG_INFINITY; mdp.states[0]];
        loop {
            let mut policy: Vec<Vec<usize>> =
                mdp.states.iter().map(|&s| vec![0usize; s]).collect();
            for (idx, &(t, s, _)) in cells.iter().enumerate() {
                policy[t][s] = assignment[idx];
            }
            let value = evaluate_policy(mdp, &policy);
            for s in 0..mdp.states[0] {
                if value[0][s] > best[s] {
                    best[s] = value[0][s];
                }
            }
            // Odometer increment.
            let mut pos = 0;
            loop {
                if pos == cells.len() {
                    return best;
                }
                assignment[pos] += 1;
                if assignment[pos] < cells[pos].2 {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn backward_induction_matches_policy_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 20_000);
            mdp.validate().unwrap();
            let sol = backward_induction(&mdp);
            let oracle = enumeration_oracle(&mdp);
            for s in 0..mdp.states[0] {
                assert_eq!(sol.value[0][s], oracle[s], "state {s}");
            }
        }
    }

    #[test]
    fn bellman_consistency_of_stored_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let mdp = random_mdp(&mut rng, u64::MAX);
            let sol = backward_induction(&mdp);
            let replay = evaluate_policy(&mdp, &sol.policy);
            for s in 0..mdp.states[0] {
                assert_eq!(replay[0][s], sol.value[0][s]);
            }
        }
    }

    #[test]
    fn optimal_value_dominates_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let mdp = random_mdp(&mut rng, u64::MAX);
            let sol = backward_induction(&mdp);
            for _ in 0..20 {
                let policy: Vec<Vec<usize>> = (0..mdp.horizon)
                    .map(|t| {
                        (0..mdp.states[t])
                            .map(|s| rng.gen_range(0..mdp.reward[t][s].len()))
                            .collect()
                    })
                    .collect();
                let value = evaluate_policy(&mdp, &policy);
                for s in 0..mdp.states[0] {
                    assert!(value[0][s] <= sol.value[0][s] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn br_mdp_point_mass_estimate_matches_full_reward() {
        let g1 = example2_g1();
        // Opponents deterministically demand 2 each: aggregate 4.
        let mut est = AggregateEstimate::uniform(3, 3, 8);
        for t in 0..3 {
            for j in 0..3 {
                est.probs[t][j] = vec![0.0; 9];
                est.probs[t][j][4] = 1.0;
            }
        }
        let mdp = build_br_mdp(0, &est, &g1);
        mdp.validate().unwrap();
        // Reward at (t=0, e index 1, b=0), action (d=2, c=2) must equal the
        // full-game stage reward with everyone at d=2.
        let spec = &g1.users[0];
        let actions = spec.feasible_actions(0);
        let a = actions.iter().position(|&x| x == (2, 2)).unwrap();
        let state = spec.b_max as usize + 1; // (error index 1, storage 0)
        let joint = JointState { stage: 0, error_index: 1, storages: vec![0, 0, 0] };
        let profile = ActionProfile { actions: vec![(2, 2); 3] };
        let want = stage_reward_r(0, &joint, &profile, &g1).unwrap();
        assert!((mdp.reward[0][state][a] - want).abs() < 1e-12);
    }

    #[test]
    fn br_mdp_expected_price_two_point_estimate() {
        let g1 = example2_g1();
        let mut est = AggregateEstimate::uniform(3, 3, 8);
        for t in 0..3 {
            for j in 0..3 {
                est.probs[t][j] = vec![0.0; 9];
                est.probs[t][j][2] = 0.5;
                est.probs[t][j][4] = 0.5;
            }
        }
        let mdp = build_br_mdp(0, &est, &g1);
        // At e=5 (t=0, index 1), d=1: expected price must be 0.625, so the
        // reward at (d=1, c=1), b=0 is theta*1 - 0.625.
        let spec = &g1.users[0];
        let actions = spec.feasible_actions(0);
        let a = actions.iter().position(|&x| x == (1, 1)).unwrap();
        let state = spec.b_max as usize + 1; // (error index 1, storage 0)
        let want = 0.9 - 0.625;
        assert!((mdp.reward[0][state][a] - want).abs() < 1e-12);
    }

    #[test]
    fn br_mdp_storage_transition_is_deterministic() {
        let g1 = example2_g1();
        let est = AggregateEstimate::uniform(3, 3, 8);
        let mdp = build_br_mdp(0, &est, &g1);
        let spec = &g1.users[0];
        // b=1, action (d=2, c=3) -> b'=0; every successor storage must be 0.
        let actions = spec.feasible_actions(1);
        let a = actions.iter().position(|&x| x == (2, 3)).unwrap();
        let state = 1; // (error index 0, storage 1)
        for &(next, p) in &mdp.transition[0][state][a] {
            assert!(p > 0.0);
            let (_, b_next) = private_state_of(next, spec.b_max);
            assert_eq!(b_next, 0);
        }
        let total: f64 = mdp.transition[0][state][a].iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_user_full_info_equals_private_mdp() {
        let chain = ForecastChain::broadcast(
            vec![5.0, 8.0],
            vec![1.0, -1.0],
            vec![vec![0.3, 0.7], vec![0.6, 0.4]],
            vec![0.5, 0.5],
        );
        let g1 = GameG1::new(
            chain,
            vec![UserSpec::linear(1.2, 3, 4, 1)],
            PricingParams { alpha: 1.0, beta: 1.0, gamma1: 1.0, gamma2: 1.0 },
        );
        // With n=1 the estimate is a point mass at zero opponent demand.
        let mut est = AggregateEstimate::uniform(2, 2, 0);
        for t in 0..2 {
            for j in 0..2 {
                est.probs[t][j] = vec![1.0];
            }
        }
        let own = build_br_mdp(0, &est, &g1);
        let own_sol = backward_induction(&own);
        let profile = PmsProfile::uniform(&g1);
        let (br_values, _) = full_info_best_response(0, &profile, &g1, DEFAULT_STATE_CAP).unwrap();
        // Both index (error, storage) the same way when n = 1.
        for s in 0..br_values.len() {
            assert!((br_values[s] - own_sol.value[0][s]).abs() < 1e-12);
        }
    }

    #[test]
    fn br_value_at_exact_pme_equals_profile_value() {
        let g1 = example2_g1();
        let g2 = build_reduced_game(&g1).unwrap();
        let eq = fip_solve(&g2, (0..3).map(|_| PurePublicPolicy::zeros(3, 3)).collect(), 2000);
        assert!(eq.converged);
        let lifted = lift_to_pme(&eq.policies, &g1);
        for i in 0..3 {
            let (br, _) = full_info_best_response(i, &lifted, &g1, DEFAULT_STATE_CAP).unwrap();
            let own = profile_value(i, &lifted, &g1, DEFAULT_STATE_CAP).unwrap();
            for (b, o) in br.iter().zip(&own) {
                assert!((b - o).abs() < 1e-9, "user {i}: br {b} vs profile {o}");
            }
        }
    }

    #[test]
    fn lifted_values_equal_reduced_values_plus_storage_benefit() {
        // In the full game the lifted equilibrium is worth the reduced-game
        // value plus theta_i * b for the starting storage (consumption spends
        // storage at unchanged demand).
        let g1 = example2_g1();
        let g2 = build_reduced_game(&g1).unwrap();
        let eq = fip_solve(&g2, (0..3).map(|_| PurePublicPolicy::zeros(3, 3)).collect(), 2000);
        assert!(eq.converged);
        let lifted = lift_to_pme(&eq.policies, &g1);
        let levels = 3usize; // bMax = 2
        let storage_states = levels * levels * levels;
        for i in 0..3 {
            let values = profile_value(i, &lifted, &g1, DEFAULT_STATE_CAP).unwrap();
            let theta = g1.users[i].theta().unwrap();
            for j in 0..3 {
                let reduced = crate::payoff::value_g2_user(&eq.policies, &g2, i, j);
                for storage_index in 0..storage_states {
                    let b_i = (storage_index / levels.pow(i as u32)) % levels;
                    let got = values[j * storage_states + storage_index];
                    let want = reduced + theta * b_i as f64;
                    assert!(
                        (got - want).abs() < 1e-9,
                        "user {i}, error {j}, storages {storage_index}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn br_value_dominates_profile_value() {
        let g1 = example2_g1();
        let profile = PmsProfile::uniform(&g1);
        for i in 0..3 {
            let (br, _) = full_info_best_response(i, &profile, &g1, DEFAULT_STATE_CAP).unwrap();
            let own = profile_value(i, &profile, &g1, DEFAULT_STATE_CAP).unwrap();
            for (b, o) in br.iter().zip(&own) {
                assert!(*b >= *o - 1e-12);
            }
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let g1 = example2_g1();
        let profile = PmsProfile::uniform(&g1);
        let err = full_info_best_response(0, &profile, &g1, 10).unwrap_err();
        assert!(matches!(err, MdpError::StateSpaceTooLarge { .. }));
    }
}
