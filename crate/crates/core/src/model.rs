//! Domain model for both game levels: the forecast-error chain, user
//! specifications, pricing/leader parameters, the full private-state game and
//! its demand-only reduction.

use crate::error::{ModelError, ValidationIssue};

/// Tolerance for probability-vector checks at load time.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Predicted renewable sequence plus a Markov chain on the forecast error.
///
/// The public state at stage `t` and error index `j` is
/// `predicted[t] + error_support[j]`. The order of `error_support` fixes the
/// row/column indexing of every transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastChain {
    /// Predicted output per stage, length T.
    pub predicted: Vec<f64>,
    /// Error support values, length m, all distinct.
    pub error_support: Vec<f64>,
    /// Per-step transition matrices, length T-1, each m x m row-stochastic.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Distribution of the stage-1 error index, length m.
    pub initial_dist: Vec<f64>,
}

impl ForecastChain {
    /// Builds a chain with one transition matrix broadcast to every step.
    pub fn broadcast(
        predicted: Vec<f64>,
        error_support: Vec<f64>,
        matrix: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
    ) -> Self {
        let steps = predicted.len().saturating_sub(1);
        ForecastChain {
            predicted,
            error_support,
            transition: vec![matrix; steps],
            initial_dist,
        }
    }

    /// Number of stages T.
    pub fn horizon(&self) -> usize {
        self.predicted.len()
    }

    /// Number of error states m.
    pub fn num_errors(&self) -> usize {
        self.error_support.len()
    }

    /// Public state value e at stage `t` (0-based) and error index `j`.
    pub fn public_state(&self, t: usize, j: usize) -> f64 {
        self.predicted[t] + self.error_support[j]
    }

    /// Per-stage marginal distributions of the error index:
    /// `out[0] = initial_dist`, `out[t+1] = out[t] * transition[t]`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon());
        out.push(self.initial_dist.clone());
        for step in &self.transition {
            let prev = out.last().expect("nonempty");
            out.push(propagate(prev, step));
        }
        out
    }

    pub(crate) fn collect_issues(&self, issues: &mut Vec<ValidationIssue>) {
        let t = self.horizon();
        let m = self.num_errors();
        if t == 0 {
            issues.push(ValidationIssue::Shape("predicted sequence is empty".into()));
        }
        if m == 0 {
            issues.push(ValidationIssue::Shape("error support is empty".into()));
        }
        for (a, &va) in self.error_support.iter().enumerate() {
            for &vb in self.error_support.iter().skip(a + 1) {
                if va == vb {
                    issues.push(ValidationIssue::Shape(format!(
                        "error support has a repeated value {va}"
                    )));
                }
            }
        }
        if self.transition.len() + 1 != t && t > 0 {
            issues.push(ValidationIssue::Shape(format!(
                "expected {} transition matrices, got {}",
                t - 1,
                self.transition.len()
            )));
            return;
        }
        for (stage, matrix) in self.transition.iter().enumerate() {
            if matrix.len() != m {
                issues.push(ValidationIssue::Shape(format!(
                    "transition matrix at stage {stage} has {} rows, expected {m}",
                    matrix.len()
                )));
                continue;
            }
            for (row, entries) in matrix.iter().enumerate() {
                if entries.len() != m {
                    issues.push(ValidationIssue::Shape(format!(
                        "transition row {row} at stage {stage} has {} entries, expected {m}",
                        entries.len()
                    )));
                    continue;
                }
                let sum: f64 = entries.iter().sum();
                let in_range = entries.iter().all(|p| (0.0..=1.0).contains(p));
                if !in_range || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    issues.push(ValidationIssue::RowNotStochastic { stage, row, sum });
                }
            }
        }
        if self.initial_dist.len() != m {
            issues.push(ValidationIssue::Shape(format!(
                "initialDist has {} entries, expected {m}",
                self.initial_dist.len()
            )));
        } else {
            let sum: f64 = self.initial_dist.iter().sum();
            let in_range = self.initial_dist.iter().all(|p| (0.0..=1.0).contains(p));
            if !in_range || (sum - 1.0).abs() > STOCHASTIC_TOL {
                issues.push(ValidationIssue::BadInitialDist { sum });
            }
        }
        for stage in 0..t {
            for j in 0..m {
                let value = self.public_state(stage, j);
                if value < 0.0 {
                    issues.push(ValidationIssue::NegativePublicState { stage, index: j, value });
                }
            }
        }
    }
}

/// Propagates a distribution one step: `out[k] = sum_j dist[j] * matrix[j][k]`.
pub(crate) fn propagate(dist: &[f64], matrix: &[Vec<f64>]) -> Vec<f64> {
    let m = dist.len();
    let mut out = vec![0.0; m];
    for (j, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for k in 0..m {
            out[k] += p * matrix[j][k];
        }
    }
    out
}

/// Price function coefficients: `P(d, e) = alpha*d/(n*e+gamma1) + beta/(e+gamma2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl PricingParams {
    pub(crate) fn collect_issues(&self, issues: &mut Vec<ValidationIssue>) {
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if !(value > 0.0) {
                issues.push(ValidationIssue::NonPositiveParam { name });
            }
        }
    }
}

/// Aggregator-side payoff parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderParams {
    /// Unit cost of controllable generation (C).
    pub unit_cost: f64,
    /// Penalty weight on deviations from the target (k).
    pub penalty_weight: f64,
    /// Target level of controllable electricity (r0).
    pub target: f64,
}

impl LeaderParams {
    pub(crate) fn collect_issues(&self, issues: &mut Vec<ValidationIssue>) {
        if !(self.unit_cost > 0.0) {
            issues.push(ValidationIssue::NonPositiveParam { name: "unitCost" });
        }
        if !(self.penalty_weight > 0.0) {
            issues.push(ValidationIssue::NonPositiveParam { name: "penaltyWeight" });
        }
    }
}

/// Consumption benefit of one user.
#[derive(Debug, Clone, PartialEq)]
pub enum Utility {
    /// Linear benefit theta * c.
    Linear(f64),
    /// Tabulated benefit indexed by consumption 0..=cMax.
    Table(Vec<f64>),
}

/// Action caps and consumption benefit of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSpec {
    pub utility: Utility,
    pub d_max: u32,
    pub c_max: u32,
    pub b_max: u32,
}

impl UserSpec {
    /// Convenience constructor for a linear-benefit user.
    pub fn linear(theta: f64, d_max: u32, c_max: u32, b_max: u32) -> Self {
        UserSpec { utility: Utility::Linear(theta), d_max, c_max, b_max }
    }

    /// Benefit of consuming `c` units.
    pub fn utility_of(&self, c: u32) -> f64 {
        match &self.utility {
            Utility::Linear(theta) => theta * f64::from(c),
            Utility::Table(table) => table[c as usize],
        }
    }

    /// Linear benefit coefficient, if this user has one.
    pub fn theta(&self) -> Option<f64> {
        match self.utility {
            Utility::Linear(theta) => Some(theta),
            Utility::Table(_) => None,
        }
    }

    /// Whether (d, c) satisfies the caps and the storage constraint
    /// `b + d - bMax <= c <= b + d` at storage level `b`.
    pub fn action_feasible(&self, b: u32, d: u32, c: u32) -> bool {
        d <= self.d_max
            && c <= self.c_max
            && c <= b + d
            && b + d <= c + self.b_max
    }

    /// Canonical list of feasible (demand, consumption) pairs at storage `b`,
    /// ordered by demand then consumption.
    pub fn feasible_actions(&self, b: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for d in 0..=self.d_max {
            let lo = (b + d).saturating_sub(self.b_max);
            let hi = (b + d).min(self.c_max);
            for c in lo..=hi {
                out.push((d, c));
            }
        }
        out
    }

    pub(crate) fn collect_issues(&self, user: usize, issues: &mut Vec<ValidationIssue>) {
        if self.c_max < self.b_max + self.d_max {
            issues.push(ValidationIssue::CapViolation { user });
        }
        match &self.utility {
            Utility::Linear(theta) => {
                if !(*theta > 0.0) {
                    issues.push(ValidationIssue::NonPositiveParam { name: "theta" });
                }
            }
            Utility::Table(table) => {
                let right_len = table.len() == self.c_max as usize + 1;
                let nondecreasing = table.windows(2).all(|w| w[1] >= w[0]);
                if !right_len || !nondecreasing {
                    issues.push(ValidationIssue::BadUtilityTable { user });
                }
            }
        }
    }
}

/// The full private-state game: chain, users, pricing, initial storages.
#[derive(Debug, Clone, PartialEq)]
pub struct GameG1 {
    pub chain: ForecastChain,
    pub users: Vec<UserSpec>,
    pub pricing: PricingParams,
    pub initial_storage: Vec<u32>,
}

impl GameG1 {
    /// Builds a game with all-zero initial storage.
    pub fn new(chain: ForecastChain, users: Vec<UserSpec>, pricing: PricingParams) -> Self {
        let n = users.len();
        GameG1 { chain, users, pricing, initial_storage: vec![0; n] }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn horizon(&self) -> usize {
        self.chain.horizon()
    }

    /// Checks every type invariant, reporting all violations at once.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut issues = Vec::new();
        self.chain.collect_issues(&mut issues);
        self.pricing.collect_issues(&mut issues);
        if self.users.is_empty() {
            issues.push(ValidationIssue::Shape("game needs at least one user".into()));
        }
        for (i, user) in self.users.iter().enumerate() {
            user.collect_issues(i, &mut issues);
        }
        if self.initial_storage.len() != self.users.len() {
            issues.push(ValidationIssue::Shape(format!(
                "initialStorage has {} entries for {} users",
                self.initial_storage.len(),
                self.users.len()
            )));
        } else {
            for (i, (&b, user)) in self.initial_storage.iter().zip(&self.users).enumerate() {
                if b > user.b_max {
                    issues.push(ValidationIssue::BadInitialStorage { user: i });
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(issues))
        }
    }
}

/// Validates a game description, returning it unchanged when sound.
pub fn validate_game(game: GameG1) -> Result<GameG1, ModelError> {
    game.validate()?;
    Ok(game)
}

/// The demand-only public-state reduction of a [`GameG1`]: states are the
/// error indices, actions are demands in `0..=dMax_i`, and payoffs keep only
/// the demand-dependent part of the stage reward.
#[derive(Debug, Clone, PartialEq)]
pub struct GameG2 {
    pub chain: ForecastChain,
    pub pricing: PricingParams,
    /// Linear benefit coefficient per user.
    pub thetas: Vec<f64>,
    /// Demand cap per user.
    pub demand_caps: Vec<u32>,
}

impl GameG2 {
    pub fn num_users(&self) -> usize {
        self.thetas.len()
    }

    pub fn horizon(&self) -> usize {
        self.chain.horizon()
    }

    pub fn num_errors(&self) -> usize {
        self.chain.num_errors()
    }

    /// Number of (stage, error) cells a public policy must cover.
    pub fn state_time_cells(&self) -> usize {
        self.horizon() * self.num_errors()
    }
}

/// Derives the reduced game from a validated [`GameG1`].
///
/// Every user must have a linear benefit; tabulated utilities have no
/// demand-only reduction.
pub fn build_reduced_game(g1: &GameG1) -> Result<GameG2, ModelError> {
    let mut thetas = Vec::with_capacity(g1.users.len());
    for (i, user) in g1.users.iter().enumerate() {
        match user.theta() {
            Some(theta) => thetas.push(theta),
            None => return Err(ModelError::UtilityNotLinear(i)),
        }
    }
    Ok(GameG2 {
        chain: g1.chain.clone(),
        pricing: g1.pricing,
        thetas,
        demand_caps: g1.users.iter().map(|u| u.d_max).collect(),
    })
}

/// Per-stage marginal distributions of the error chain.
pub fn chain_marginals(chain: &ForecastChain) -> Vec<Vec<f64>> {
    chain.marginals()
}
