//! Upper-level pricing optimization: exhaustive grid search over (alpha,
//! beta) with a fresh lower-level equilibrium solve per cell.

use crate::error::ModelError;
use crate::model::{build_reduced_game, GameG1, LeaderParams};
use crate::mpg::{fip_solve, PurePublicPolicy};
use crate::par::par_collect;
use crate::payoff::{aggregate_demand, leader_payoff};

/// The leader's finite pricing action sets; gamma1/gamma2 stay fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingGrid {
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub leader: LeaderParams,
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingCell {
    pub alpha: f64,
    pub beta: f64,
    pub payoff: f64,
    pub converged: bool,
    /// Equilibrium aggregate demand per (stage, error) cell.
    pub demand_totals: Vec<Vec<u32>>,
}

/// The argmax cell (ties go to the first cell in row-major order, alpha
/// outer, beta inner). Absent when no cell converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingWinner {
    pub alpha: f64,
    pub beta: f64,
    pub payoff: f64,
}

/// Full grid-search output.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub winner: Option<PricingWinner>,
    pub cells: Vec<PricingCell>,
}

impl PricingResult {
    /// Row of payoffs for a fixed alpha index, beta-ordered.
    pub fn row(&self, alpha_index: usize, beta_count: usize) -> &[PricingCell] {
        &self.cells[alpha_index * beta_count..(alpha_index + 1) * beta_count]
    }
}

/// Exhaustive search per the discrete pricing action sets: every cell
/// substitutes its (alpha, beta), rebuilds the reduced game, solves it by the
/// improvement sweep from the all-zero profile (a fixed initialization so the
/// comparison across cells is not confounded by equilibrium selection noise),
/// and evaluates the leader payoff. Unconverged cells are kept in the table
/// but excluded from the argmax.
pub fn grid_search_pricing(
    template: &GameG1,
    grid: &PricingGrid,
    k_max: usize,
) -> Result<PricingResult, ModelError> {
    let mut issues = Vec::new();
    grid.leader.collect_issues(&mut issues);
    if grid.alpha_values.iter().chain(&grid.beta_values).any(|&v| !(v > 0.0)) {
        issues.push(crate::error::ValidationIssue::NonPositiveParam { name: "grid values" });
    }
    let pairs: Vec<(f64, f64)> = grid
        .alpha_values
        .iter()
        .flat_map(|&a| grid.beta_values.iter().map(move |&b| (a, b)))
        .collect();
    if pairs.is_empty() {
        issues.push(crate::error::ValidationIssue::Shape("pricing grid must be nonempty".into()));
    }
    if !issues.is_empty() {
        return Err(ModelError::Invalid(issues));
    }
    // Template must be valid under every cell before any solving starts.
    let games: Vec<GameG1> = pairs
        .iter()
        .map(|&(alpha, beta)| {
            let mut g1 = template.clone();
            g1.pricing.alpha = alpha;
            g1.pricing.beta = beta;
            g1.pricing.gamma1 = grid.gamma1;
            g1.pricing.gamma2 = grid.gamma2;
            g1.validate().map(|_| g1)
        })
        .collect::<Result<_, _>>()?;

    let cells: Vec<PricingCell> = par_collect(games.len(), |idx| {
        let g1 = &games[idx];
        let g2 = build_reduced_game(g1).expect("validated linear template");
        let t = g2.horizon();
        let m = g2.num_errors();
        let initial: Vec<PurePublicPolicy> =
            (0..g2.num_users()).map(|_| PurePublicPolicy::zeros(t, m)).collect();
        let eq = fip_solve(&g2, initial, k_max);
        let payoff = leader_payoff(&eq.policies, g1, &grid.leader);
        PricingCell {
            alpha: pairs[idx].0,
            beta: pairs[idx].1,
            payoff,
            converged: eq.converged,
            demand_totals: aggregate_demand(&eq.policies, t, m),
        }
    });

    let mut winner: Option<PricingWinner> = None;
    for cell in &cells {
        if !cell.converged {
            continue;
        }
        let better = match winner {
            None => true,
            Some(w) => cell.payoff > w.payoff,
        };
        if better {
            winner = Some(PricingWinner { alpha: cell.alpha, beta: cell.beta, payoff: cell.payoff });
        }
    }
    Ok(PricingResult { winner, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForecastChain, PricingParams, UserSpec};
    use crate::payoff::price;

    fn one_stage_template() -> GameG1 {
        let chain = ForecastChain {
            predicted: vec![5.0],
            error_support: vec![0.0],
            transition: vec![],
            initial_dist: vec![1.0],
        };
        GameG1::new(
            chain,
            vec![UserSpec::linear(1.2, 3, 3, 0), UserSpec::linear(1.4, 3, 3, 0)],
            PricingParams { alpha: 1.0, beta: 1.0, gamma1: 1.0, gamma2: 1.0 },
        )
    }

    fn leader() -> LeaderParams {
        LeaderParams { unit_cost: 1.0, penalty_weight: 0.2, target: 0.0 }
    }

    #[test]
    fn single_cell_grid_returns_that_cell() {
        let grid = PricingGrid {
            alpha_values: vec![1.0],
            beta_values: vec![1.0],
            gamma1: 1.0,
            gamma2: 1.0,
            leader: leader(),
        };
        let result = grid_search_pricing(&one_stage_template(), &grid, 1000).unwrap();
        assert_eq!(result.cells.len(), 1);
        let w = result.winner.unwrap();
        assert_eq!((w.alpha, w.beta), (1.0, 1.0));
        assert_eq!(w.payoff, result.cells[0].payoff);
    }

    /// Pure Nash demands of the one-stage game by exhaustive search.
    fn one_stage_nash(g1: &GameG1) -> Vec<(u32, u32)> {
        let e = g1.chain.public_state(0, 0);
        let reward = |i: usize, d: &[u32; 2]| {
            g1.users[i].theta().unwrap() * f64::from(d[i])
                - price(d[0] + d[1], e, &g1.pricing, 2) * f64::from(d[i])
        };
        let mut out = Vec::new();
        for d0 in 0..=3u32 {
            for d1 in 0..=3u32 {
                let here = [d0, d1];
                let mut is_nash = true;
                for alt in 0..=3u32 {
                    if reward(0, &[alt, d1]) > reward(0, &here) + 1e-12 {
                        is_nash = false;
                    }
                    if reward(1, &[d0, alt]) > reward(1, &here) + 1e-12 {
                        is_nash = false;
                    }
                }
                if is_nash {
                    out.push((d0, d1));
                }
            }
        }
        out
    }

    #[test]
    fn two_cell_grid_argmax_matches_manual_comparison() {
        let template = one_stage_template();
        let grid = PricingGrid {
            alpha_values: vec![0.8, 1.6],
            beta_values: vec![1.0],
            gamma1: 1.0,
            gamma2: 1.0,
            leader: leader(),
        };
        let result = grid_search_pricing(&template, &grid, 1000).unwrap();
        assert_eq!(result.cells.len(), 2);
        // Each cell's equilibrium must be a Nash of its one-stage game, and
        // its payoff must equal the directly evaluated leader formula.
        for cell in &result.cells {
            let mut g1 = template.clone();
            g1.pricing.alpha = cell.alpha;
            g1.pricing.beta = cell.beta;
            let nash_set = one_stage_nash(&g1);
            let total = cell.demand_totals[0][0];
            assert!(
                nash_set.iter().any(|&(a, b)| a + b == total),
                "cell ({}, {}): total {total} not from any Nash {nash_set:?}",
                cell.alpha,
                cell.beta
            );
            let e = g1.chain.public_state(0, 0);
            let d = f64::from(total);
            let want = price(total, e, &g1.pricing, 2) * d
                - 1.0 * (d - e)
                - 0.5 * 0.2 * (d - e) * (d - e);
            assert!((cell.payoff - want).abs() < 1e-12);
        }
        let manual_best = result
            .cells
            .iter()
            .cloned()
            .reduce(|a, b| if b.payoff > a.payoff { b } else { a })
            .unwrap();
        let w = result.winner.unwrap();
        assert_eq!((w.alpha, w.beta), (manual_best.alpha, manual_best.beta));
    }

    #[test]
    fn table_shape_and_determinism() {
        let template = one_stage_template();
        let grid = PricingGrid {
            alpha_values: vec![0.8, 1.2, 1.6],
            beta_values: vec![0.9, 1.1],
            gamma1: 1.0,
            gamma2: 1.0,
            leader: leader(),
        };
        let a = grid_search_pricing(&template, &grid, 1000).unwrap();
        let b = grid_search_pricing(&template, &grid, 1000).unwrap();
        assert_eq!(a.cells.len(), 6);
        assert_eq!(a, b, "same config must reproduce the table bit-for-bit");
        // Winner equals the table max.
        let max = a.cells.iter().map(|c| c.payoff).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.winner.unwrap().payoff, max);
        // Row-major layout: first row has alpha = 0.8 in both cells.
        for cell in a.row(0, 2) {
            assert_eq!(cell.alpha, 0.8);
        }
    }
}
