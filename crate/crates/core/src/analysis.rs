//! Verification instruments: exploitability (NashConv), the potential-game
//! identity check, and the brute-force storage-dominance audit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::MdpError;
use crate::mdp::{full_info_best_response, profile_value};
use crate::model::{GameG1, GameG2, UserSpec};
use crate::mpg::{PmsProfile, PurePublicPolicy, UserPms};
use crate::par::par_collect;
use crate::payoff::{potential_value_g2, price, value_g2_user};

/// Average best-response gain over all joint initial states and users; zero
/// certifies an equilibrium. Values inside [-1e-9, 0) are clamped to 0.
pub fn nashconv(profile: &PmsProfile, g1: &GameG1, cap: usize) -> Result<f64, MdpError> {
    let n = g1.num_users();
    let mut total = 0.0;
    let mut states = 0usize;
    for i in 0..n {
        let (br, _) = full_info_best_response(i, profile, g1, cap)?;
        let own = profile_value(i, profile, g1, cap)?;
        states = br.len();
        for (b, o) in br.iter().zip(&own) {
            total += b - o;
        }
    }
    let value = total / (states as f64 * n as f64);
    Ok(if (-1e-9..0.0).contains(&value) { 0.0 } else { value })
}

/// Draws random pure public profiles and unilateral deviations and returns
/// the largest observed gap between the value change and the potential
/// change, over all trials and initial error states.
pub fn verify_potential_property(g2: &GameG2, trials: usize, seed: u64) -> f64 {
    assert!(trials >= 1);
    let t = g2.horizon();
    let m = g2.num_errors();
    let n = g2.num_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(Vec<PurePublicPolicy>, usize, PurePublicPolicy)> = (0..trials)
        .map(|_| {
            let profile: Vec<PurePublicPolicy> = (0..n)
                .map(|i| PurePublicPolicy::random(t, m, g2.demand_caps[i], &mut rng))
                .collect();
            let user = rng.gen_range(0..n);
            let deviation = PurePublicPolicy::random(t, m, g2.demand_caps[user], &mut rng);
            (profile, user, deviation)
        })
        .collect();
    let gaps = par_collect(cases.len(), |idx| {
        let (profile, user, deviation) = &cases[idx];
        let mut deviated = profile.clone();
        deviated[*user] = deviation.clone();
        let mut worst = 0.0f64;
        for j in 0..m {
            let dv = value_g2_user(&deviated, g2, *user, j) - value_g2_user(profile, g2, *user, j);
            let dphi = potential_value_g2(&deviated, g2, j) - potential_value_g2(profile, g2, j);
            worst = worst.max((dv - dphi).abs());
        }
        worst
    });
    gaps.into_iter().fold(0.0, f64::max)
}

/// The family of non-storage strategies: at every stage the user demands one
/// of `demand_choices` (uniformly across states) and consumes exactly what it
/// demands.
#[derive(Debug, Clone, PartialEq)]
pub struct NonStorageFamily {
    pub demand_choices: Vec<u32>,
}

impl NonStorageFamily {
    /// All per-stage demand tuples, in lexicographic order.
    pub fn strategies(&self, horizon: usize) -> Vec<Vec<u32>> {
        if self.demand_choices.is_empty() {
            return Vec::new();
        }
        let mut out = vec![Vec::new()];
        for _ in 0..horizon {
            let mut next = Vec::with_capacity(out.len() * self.demand_choices.len());
            for prefix in &out {
                for &d in &self.demand_choices {
                    let mut s = prefix.clone();
                    s.push(d);
                    next.push(s);
                }
            }
            out = next;
        }
        out
    }
}

/// Expands one (demand, consumption) pair per stage into a pure private
/// strategy applied at every (error, storage) cell of that stage. The
/// consumption is clamped into the feasible band at storage levels where the
/// requested pair cannot be played as written.
pub fn uniform_stage_pms(spec: &UserSpec, t: usize, m: usize, actions: &[(u32, u32)]) -> UserPms {
    assert_eq!(actions.len(), t);
    UserPms::pure(spec, t, m, |stage, _, b| {
        let (d, c) = actions[stage];
        let lo = (b + d).saturating_sub(spec.b_max);
        let hi = (b + d).min(spec.c_max);
        (d, c.clamp(lo, hi))
    })
}

/// A concrete violation of strict dominance.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceCounterexample {
    pub user: usize,
    /// Per-stage demands of the undominated non-storage strategy.
    pub strategy: Vec<u32>,
    /// Per-opponent per-stage demands of the opposing profile.
    pub opponents: Vec<Vec<u32>>,
    pub initial_error: usize,
    /// storage value minus non-storage value (<= 0 here).
    pub gap: f64,
}

/// Outcome of [`check_storage_dominance`].
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub condition_c1_holds: bool,
    /// Non-storage strategies strictly beaten against every opponent profile
    /// and initial state, per the user with the fewest (symmetric instances
    /// give the same count for all).
    pub dominated_strategy_count: usize,
    pub counterexample: Option<DominanceCounterexample>,
}

/// Sufficient price condition for the canonical two-stage storage pattern
/// (buy 3 consume 2, then buy 1 consume 2): for every stage-1 state e1,
/// stage-2 state e2 and opponent aggregates,
/// `a(5+d1)/(n e1+g1) + b/(e1+g2) < slope < a(3+d2)/(n e2+g1) + b/(e2+g2)`
/// where `slope` is the marginal benefit of the first consumption unit.
fn condition_c1(g1: &GameG1, family: &NonStorageFamily) -> bool {
    let n = g1.num_users();
    let chain = &g1.chain;
    if chain.horizon() < 2 {
        return false;
    }
    let opponent_sums = opponent_aggregates(family, n);
    for spec in &g1.users {
        let slope = spec.utility_of(1) - spec.utility_of(0);
        for j1 in 0..chain.num_errors() {
            let e1 = chain.public_state(0, j1);
            for &d1 in &opponent_sums {
                let left = g1.pricing.alpha * f64::from(5 + d1)
                    / (n as f64 * e1 + g1.pricing.gamma1)
                    + g1.pricing.beta / (e1 + g1.pricing.gamma2);
                if !(left < slope) {
                    return false;
                }
            }
            for j2 in 0..chain.num_errors() {
                let e2 = chain.public_state(1, j2);
                for &d2 in &opponent_sums {
                    let right = g1.pricing.alpha * f64::from(3 + d2)
                        / (n as f64 * e2 + g1.pricing.gamma1)
                        + g1.pricing.beta / (e2 + g1.pricing.gamma2);
                    if !(slope < right) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// All achievable aggregate demands of n-1 opponents drawing from the family.
fn opponent_aggregates(family: &NonStorageFamily, n: usize) -> Vec<u32> {
    let mut sums = vec![0u32];
    for _ in 0..n.saturating_sub(1) {
        let mut next = Vec::new();
        for &s in &sums {
            for &d in &family.demand_choices {
                next.push(s + d);
            }
        }
        next.sort_unstable();
        next.dedup();
        sums = next;
    }
    sums
}

/// Checks that `storage_actions` (one (d, c) pair per stage, applied at every
/// state of that stage) strictly dominates every strategy in the non-storage
/// family, for each user, against every opponent profile drawn from the same
/// family, from every initial error state. Also evaluates the sufficient
/// price condition; the exhaustive comparison is the authoritative verdict.
pub fn check_storage_dominance(
    g1: &GameG1,
    storage_actions: &[(u32, u32)],
    family: &NonStorageFamily,
) -> DominanceReport {
    let t = g1.horizon();
    let m = g1.chain.num_errors();
    let n = g1.num_users();
    let condition_c1_holds = condition_c1(g1, family);
    let own_strategies = family.strategies(t);

    let mut dominated_per_user = vec![0usize; n];
    let mut counterexample = None;

    'users: for i in 0..n {
        let opponent_profiles = cartesian_profiles(&own_strategies, n - 1);
        for own in &own_strategies {
            let mut dominated_everywhere = true;
            for opponents in &opponent_profiles {
                let storage_profile = assemble_profile(g1, i, storage_actions, opponents, true);
                let plain_actions: Vec<(u32, u32)> = own.iter().map(|&d| (d, d)).collect();
                let plain_profile = assemble_profile(g1, i, &plain_actions, opponents, false);
                for j in 0..m {
                    let v_storage = pure_profile_value(i, &storage_profile, g1, j);
                    let v_plain = pure_profile_value(i, &plain_profile, g1, j);
                    let gap = v_storage - v_plain;
                    if gap <= 0.0 {
                        dominated_everywhere = false;
                        if counterexample.is_none() {
                            counterexample = Some(DominanceCounterexample {
                                user: i,
                                strategy: own.clone(),
                                opponents: opponents.clone(),
                                initial_error: j,
                                gap,
                            });
                        }
                    }
                }
            }
            if dominated_everywhere {
                dominated_per_user[i] += 1;
            }
        }
        if own_strategies.is_empty() {
            dominated_per_user[i] = 0;
        }
        if counterexample.is_some() {
            // One concrete violation settles the verdict.
            break 'users;
        }
    }

    DominanceReport {
        condition_c1_holds,
        dominated_strategy_count: dominated_per_user.iter().copied().min().unwrap_or(0),
        counterexample,
    }
}

fn cartesian_profiles(strategies: &[Vec<u32>], count: usize) -> Vec<Vec<Vec<u32>>> {
    let mut out = vec![Vec::new()];
    for _ in 0..count {
        let mut next = Vec::with_capacity(out.len() * strategies.len());
        for prefix in &out {
            for s in strategies {
                let mut p = prefix.clone();
                p.push(s.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Builds the pure profile where user `i` plays `own_actions` per stage (the
/// storage pattern or a c=d strategy) and the others play the given
/// non-storage demand tuples.
fn assemble_profile(
    g1: &GameG1,
    i: usize,
    own_actions: &[(u32, u32)],
    opponents: &[Vec<u32>],
    _own_is_storage: bool,
) -> PmsProfile {
    let t = g1.horizon();
    let m = g1.chain.num_errors();
    let mut users = Vec::with_capacity(g1.num_users());
    let mut opp_iter = opponents.iter();
    for (u, spec) in g1.users.iter().enumerate() {
        if u == i {
            users.push(uniform_stage_pms(spec, t, m, own_actions));
        } else {
            let demands = opp_iter.next().expect("one tuple per opponent");
            let actions: Vec<(u32, u32)> = demands.iter().map(|&d| (d, d)).collect();
            users.push(uniform_stage_pms(spec, t, m, &actions));
        }
    }
    PmsProfile { users }
}

/// Exact value of user `i` under a pure profile from (error `j`, the game's
/// configured initial storages): actions are deterministic, so only the error
/// path is integrated.
fn pure_profile_value(i: usize, profile: &PmsProfile, g1: &GameG1, j: usize) -> f64 {
    fn recurse(
        i: usize,
        profile: &PmsProfile,
        g1: &GameG1,
        t: usize,
        j: usize,
        storages: &[u32],
    ) -> f64 {
        let e_n = g1.chain.public_state(t, j);
        let mut actions = Vec::with_capacity(g1.num_users());
        for (u, spec) in g1.users.iter().enumerate() {
            let b = storages[u];
            let row = &profile.users[u].probs[t][j][b as usize];
            let k = row.iter().position(|&p| p == 1.0).expect("pure profile");
            actions.push(spec.feasible_actions(b)[k]);
        }
        let total: u32 = actions.iter().map(|&(d, _)| d).sum();
        let (d_i, c_i) = actions[i];
        let mut value =
            g1.users[i].utility_of(c_i) - price(total, e_n, &g1.pricing, g1.num_users()) * f64::from(d_i);
        if t + 1 < g1.horizon() {
            let next_storages: Vec<u32> =
                storages.iter().zip(&actions).map(|(&b, &(d, c))| b + d - c).collect();
            for (j_next, &p) in g1.chain.transition[t][j].iter().enumerate() {
                if p > 0.0 {
                    value += p * recurse(i, profile, g1, t + 1, j_next, &next_storages);
                }
            }
        }
        value
    }
    recurse(i, profile, g1, 0, j, &g1.initial_storage)
}
