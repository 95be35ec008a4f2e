//! Decentralized fictitious-play learning over the full game: each user best
//! responds to an estimated aggregate opponent-demand strategy via its own
//! MDP, plays one episode, then mixes the played best response into its
//! policy and the observed aggregates into its estimate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::analysis::nashconv;
use crate::error::MdpError;
use crate::mdp::{backward_induction, build_br_mdp};
use crate::model::GameG1;
use crate::mpg::{PmsProfile, UserPms};
use crate::par::par_collect;
use crate::payoff::price;

/// One user's estimate of the others: a probability vector over the
/// aggregate opponent demand `0..=sum of opponents' dMax`, per (stage, error)
/// cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEstimate {
    /// probs[t][j][v].
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl AggregateEstimate {
    /// Uniform estimate over `0..=opp_max` at every cell.
    pub fn uniform(t: usize, m: usize, opp_max: u32) -> Self {
        let len = opp_max as usize + 1;
        AggregateEstimate { probs: vec![vec![vec![1.0 / len as f64; len]; m]; t] }
    }

    /// Every cell stays on the simplex within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.probs.iter().flatten().all(|row| {
            row.iter().all(|&p| p >= -tol) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// What one stage of a played episode recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub error_index: usize,
    /// (demand, consumption) per user.
    pub actions: Vec<(u32, u32)>,
    /// Aggregate demand of the others, per user.
    pub opponent_demand: Vec<u32>,
    /// Realized stage reward per user.
    pub rewards: Vec<f64>,
}

/// A full T-stage episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub stages: Vec<StageRecord>,
}

/// Plays one episode of the full game under `profile`, starting from the
/// configured initial storages and an initial error drawn from the chain's
/// initial distribution. Deterministic given the RNG state.
pub fn simulate_episode<R: Rng>(profile: &PmsProfile, g1: &GameG1, rng: &mut R) -> Trajectory {
    let t_len = g1.horizon();
    let n = g1.num_users();
    let mut storages = g1.initial_storage.clone();
    let mut j = sample_index(&g1.chain.initial_dist, rng);
    let mut stages = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let e_n = g1.chain.public_state(t, j);
        let mut actions = Vec::with_capacity(n);
        for (i, spec) in g1.users.iter().enumerate() {
            let b = storages[i];
            let k = profile.users[i].sample_index(t, j, b, rng);
            actions.push(spec.feasible_actions(b)[k]);
        }
        let total: u32 = actions.iter().map(|&(d, _)| d).sum();
        let p = price(total, e_n, &g1.pricing, n);
        let rewards: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(i, &(d, c))| g1.users[i].utility_of(c) - p * f64::from(d))
            .collect();
        let opponent_demand: Vec<u32> = actions.iter().map(|&(d, _)| total - d).collect();
        stages.push(StageRecord { stage: t, error_index: j, actions: actions.clone(), opponent_demand, rewards });
        for (b, &(d, c)) in storages.iter_mut().zip(&actions) {
            *b = *b + d - c;
        }
        if t + 1 < t_len {
            j = sample_index(&g1.chain.transition[t][j], rng);
        }
    }
    Trajectory { stages }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Full-table policy mix: `pi <- (1-step) pi + step br` at every private
/// state.
pub fn update_policy(current: &mut UserPms, best_response: &UserPms, step: f64) {
    for (ts, to) in current.probs.iter_mut().zip(&best_response.probs) {
        for (js, jo) in ts.iter_mut().zip(to) {
            for (bs, bo) in js.iter_mut().zip(jo) {
                for (p, &q) in bs.iter_mut().zip(bo) {
                    *p = (1.0 - step) * *p + step * q;
                }
            }
        }
    }
}

/// Moves the estimate toward the observed aggregate demand at exactly the
/// cells the trajectory visited; all other cells are untouched.
pub fn update_estimate(
    current: &mut AggregateEstimate,
    trajectory: &Trajectory,
    user: usize,
    step: f64,
) {
    for record in &trajectory.stages {
        let row = &mut current.probs[record.stage][record.error_index];
        let observed = record.opponent_demand[user] as usize;
        for (v, p) in row.iter_mut().enumerate() {
            let target = if v == observed { 1.0 } else { 0.0 };
            *p = (1.0 - step) * *p + step * target;
        }
    }
}

/// Step-size schedule for both the policy and estimate updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// The 1/k schedule: the update after episode k uses step 1/(k+1), which
    /// makes the policy the running average of the played best responses
    /// (with the initial policy as one extra term).
    Harmonic,
    /// A fixed step in (0, 1].
    Constant(f64),
}

impl Schedule {
    pub fn step_after(&self, episode: usize) -> f64 {
        match self {
            Schedule::Harmonic => 1.0 / (episode as f64 + 1.0),
            Schedule::Constant(c) => *c,
        }
    }
}

/// Knobs for [`fp_mdp_solve`].
#[derive(Debug, Clone, Copy)]
pub struct FpOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Exploitability is evaluated at iteration 0 and every `eval_every`
    /// iterations thereafter (each evaluation costs one joint-state backward
    /// induction per user).
    pub eval_every: usize,
    pub state_cap: usize,
    pub schedule: Schedule,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions {
            iterations: 1000,
            seed: 0,
            eval_every: 50,
            state_cap: crate::mdp::DEFAULT_STATE_CAP,
            schedule: Schedule::Harmonic,
        }
    }
}

/// One exploitability evaluation row of the learning trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FpTraceRow {
    pub iteration: usize,
    pub nashconv: f64,
    /// Per-user max L1 policy change of the update at this iteration.
    pub policy_change: Vec<f64>,
}

/// Runs decentralized fictitious play with per-iteration best-response MDPs.
///
/// Per iteration every user builds and solves its best-response MDP against
/// its current estimate, all users play one episode under the best-response
/// profile, and both the policies (full table) and the estimates (visited
/// cells only) are mixed with the scheduled step. No convergence is claimed;
/// the learner always runs exactly `iterations` episodes.
pub fn fp_mdp_solve(
    g1: &GameG1,
    opts: &FpOptions,
) -> Result<(PmsProfile, Vec<FpTraceRow>), MdpError> {
    assert!(opts.iterations >= 1);
    assert!(opts.eval_every >= 1);
    let t_len = g1.horizon();
    let m = g1.chain.num_errors();
    let n = g1.num_users();
    let total_dmax: u32 = g1.users.iter().map(|u| u.d_max).sum();

    let mut profile = PmsProfile::uniform(g1);
    let mut estimates: Vec<AggregateEstimate> = g1
        .users
        .iter()
        .map(|u| AggregateEstimate::uniform(t_len, m, total_dmax - u.d_max))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut trace = Vec::new();
    trace.push(FpTraceRow {
        iteration: 0,
        nashconv: nashconv(&profile, g1, opts.state_cap)?,
        policy_change: vec![0.0; n],
    });

    for k in 1..=opts.iterations {
        let best_responses: Vec<UserPms> = par_collect(n, |i| {
            let mdp = build_br_mdp(i, &estimates[i], g1);
            let sol = backward_induction(&mdp);
            let spec = &g1.users[i];
            let levels = spec.b_max as usize + 1;
            UserPms::pure(spec, t_len, m, |t, j, b| {
                let state = j * levels + b as usize;
                spec.feasible_actions(b)[sol.policy[t][state]]
            })
        });
        let br_profile = PmsProfile { users: best_responses };
        let episode = simulate_episode(&br_profile, g1, &mut rng);
        let step = opts.schedule.step_after(k);

        let evaluate = k % opts.eval_every == 0;
        let previous = if evaluate { Some(profile.clone()) } else { None };
        for i in 0..n {
            update_policy(&mut profile.users[i], &br_profile.users[i], step);
            update_estimate(&mut estimates[i], &episode, i, step);
        }
        if let Some(previous) = previous {
            let policy_change = (0..n)
                .map(|i| profile.users[i].l1_distance(&previous.users[i]))
                .collect();
            trace.push(FpTraceRow {
                iteration: k,
                nashconv: nashconv(&profile, g1, opts.state_cap)?,
                policy_change,
            });
        }
    }
    Ok((profile, trace))
}
