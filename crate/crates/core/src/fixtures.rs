//! Bundled experiment fixtures: the four reference game configs, the
//! published per-user demand tables used for soft comparison, and the
//! synthetic generation panel. Everything needed to reproduce the reference
//! runs without external data.

use serde::Deserialize;

use crate::config::{load_config, LoadedConfig};
use crate::ingest::{records_from_csv, GenerationRecord};

/// 50-user, 7-stage game (real-data chain, theta roster, alpha=19, beta=20).
pub const EXAMPLE1_JSON: &str = include_str!("../fixtures/example1.json");
/// 3-user, 3-stage learning benchmark (theta 0.9/1.0/1.1, alpha=beta=1.5).
pub const EXAMPLE2_JSON: &str = include_str!("../fixtures/example2.json");
/// Example 1 plus the leader section and the 3x3 pricing grid.
pub const EXAMPLE3_JSON: &str = include_str!("../fixtures/example3.json");
/// 2-user, 2-stage storage-dominance setup with the piecewise utility.
pub const EXAMPLE4_JSON: &str = include_str!("../fixtures/example4.json");
/// Published equilibrium demand rows for the 50-user game.
pub const REFERENCE_DEMANDS_JSON: &str = include_str!("../fixtures/reference_demands.json");
/// Synthetic 6x7 generation panel whose ingestion reproduces the reference
/// transition matrix exactly.
pub const PANEL_CSV: &str = include_str!("../fixtures/panel.csv");

pub fn example1() -> LoadedConfig {
    load_config(EXAMPLE1_JSON).expect("bundled example1 config")
}

pub fn example2() -> LoadedConfig {
    load_config(EXAMPLE2_JSON).expect("bundled example2 config")
}

pub fn example3() -> LoadedConfig {
    load_config(EXAMPLE3_JSON).expect("bundled example3 config")
}

pub fn example4() -> LoadedConfig {
    load_config(EXAMPLE4_JSON).expect("bundled example4 config")
}

/// Published per-user equilibrium demands at two reference cells of the
/// 50-user game.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReferenceDemands {
    /// Demands at stage 1 (index 0), public state 70.
    pub demand_t1_e70: Vec<u32>,
    /// Demands at stage 3 (index 2), public state 90.
    pub demand_t3_e90: Vec<u32>,
}

pub fn reference_demands() -> ReferenceDemands {
    serde_json::from_str(REFERENCE_DEMANDS_JSON).expect("bundled reference demand tables")
}

/// The bundled panel as parsed records.
pub fn panel_records() -> Vec<GenerationRecord> {
    records_from_csv(PANEL_CSV).expect("bundled panel")
}

/// The reference transition matrix the panel must reproduce, in support
/// order (20, 0, -20).
pub fn reference_matrix() -> Vec<Vec<f64>> {
    vec![
        vec![5.0 / 11.0, 5.0 / 11.0, 1.0 / 11.0],
        vec![1.0 / 4.0, 7.0 / 16.0, 5.0 / 16.0],
        vec![2.0 / 9.0, 4.0 / 9.0, 1.0 / 3.0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_load_and_validate() {
        assert_eq!(example1().game.num_users(), 50);
        assert_eq!(example1().game.horizon(), 7);
        assert_eq!(example2().game.num_users(), 3);
        assert_eq!(example4().game.num_users(), 2);
        let e3 = example3();
        assert!(e3.leader.is_some());
        let grid = e3.grid.unwrap();
        assert_eq!(grid.alpha_values, vec![19.0, 20.0, 21.0]);
        assert_eq!(grid.beta_values, vec![19.0, 20.0, 21.0]);
    }

    #[test]
    fn reference_tables_have_fifty_entries() {
        let tables = reference_demands();
        assert_eq!(tables.demand_t1_e70.len(), 50);
        assert_eq!(tables.demand_t3_e90.len(), 50);
    }

    #[test]
    fn panel_has_complete_six_by_seven_grid() {
        let records = panel_records();
        assert_eq!(records.len(), 42);
    }

    #[test]
    fn example4_dominance_section_present() {
        let spec = example4().dominance.unwrap();
        assert_eq!(spec.storage, vec![(3, 2), (1, 2)]);
        assert_eq!(spec.demand_choices, vec![1, 2, 3]);
    }
}
