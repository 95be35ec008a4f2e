//! Turns a raw generation panel (months x days) into a forecast chain: scale,
//! monthly-average prediction, deviation snapping to a discrete support, and
//! empirical-frequency transition estimation.

use std::collections::BTreeMap;

use crate::error::IngestError;
use crate::model::ForecastChain;

/// One raw generation reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub month: usize,
    pub day: usize,
    pub value: f64,
}

/// What [`estimate_forecast_and_chain`] produced besides the chain itself.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub chain: ForecastChain,
    /// Snapped support index per (month, day), month-major.
    pub snapped: Vec<Vec<usize>>,
    /// Support rows that were never left and fell back to uniform.
    pub uniform_rows: Vec<usize>,
}

/// Parses `month,day,value` CSV text (header required).
pub fn records_from_csv(text: &str) -> Result<Vec<GenerationRecord>, IngestError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| IngestError::BadRecord("empty input".into()))?;
    let normalized: String = header.split(',').map(|c| c.trim()).collect::<Vec<_>>().join(",");
    if normalized != "month,day,value" {
        return Err(IngestError::BadRecord(format!("expected header month,day,value, got {header}")));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if fields.len() != 3 {
            return Err(IngestError::BadRecord(format!("line {}: expected 3 fields", lineno + 2)));
        }
        let month = fields[0]
            .parse()
            .map_err(|_| IngestError::BadRecord(format!("line {}: bad month", lineno + 2)))?;
        let day = fields[1]
            .parse()
            .map_err(|_| IngestError::BadRecord(format!("line {}: bad day", lineno + 2)))?;
        let value = fields[2]
            .parse()
            .map_err(|_| IngestError::BadRecord(format!("line {}: bad value", lineno + 2)))?;
        records.push(GenerationRecord { month, day, value });
    }
    Ok(records)
}

/// Snaps a deviation to the nearest support level; distance ties go to the
/// level with the smaller value. Returns the index into `support`.
pub fn snap_to_support(value: f64, support: &[f64]) -> usize {
    let mut best = 0usize;
    for (k, &level) in support.iter().enumerate() {
        let better = (value - level).abs() < (value - support[best]).abs()
            || ((value - level).abs() == (value - support[best]).abs() && level < support[best]);
        if better {
            best = k;
        }
    }
    best
}

/// Empirical-frequency transition matrix from snapped level sequences: the
/// (a, b) entry counts consecutive-day pairs (level a then level b) divided
/// by the pairs leaving level a (days 1..T-1). Rows with no outgoing pairs
/// become uniform and are reported.
pub fn transition_from_levels(levels: &[Vec<usize>], m: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut counts = vec![vec![0usize; m]; m];
    for row in levels {
        for pair in row.windows(2) {
            counts[pair[0]][pair[1]] += 1;
        }
    }
    let mut matrix = Vec::with_capacity(m);
    let mut uniform_rows = Vec::new();
    for (a, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            uniform_rows.push(a);
            matrix.push(vec![1.0 / m as f64; m]);
        } else {
            matrix.push(row.iter().map(|&c| c as f64 / total as f64).collect());
        }
    }
    (matrix, uniform_rows)
}

/// Full ingestion recipe: scale the panel, predict by monthly averages, snap
/// deviations to the support, estimate the transition matrix by empirical
/// frequency, and assemble a chain with that matrix broadcast to every stage
/// and a uniform initial distribution.
pub fn estimate_forecast_and_chain(
    records: &[GenerationRecord],
    scale: f64,
    support: &[f64],
) -> Result<IngestOutcome, IngestError> {
    if support.is_empty() {
        return Err(IngestError::EmptySupport);
    }
    for (a, &va) in support.iter().enumerate() {
        for &vb in support.iter().skip(a + 1) {
            if va == vb {
                return Err(IngestError::EmptySupport);
            }
        }
    }
    if records.is_empty() {
        return Err(IngestError::BadRecord("no records".into()));
    }

    let mut months: Vec<usize> = records.iter().map(|r| r.month).collect();
    months.sort_unstable();
    months.dedup();
    let mut days: Vec<usize> = records.iter().map(|r| r.day).collect();
    days.sort_unstable();
    days.dedup();

    let mut panel: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for record in records {
        if panel.insert((record.month, record.day), record.value * scale).is_some() {
            return Err(IngestError::DuplicateRecord { month: record.month, day: record.day });
        }
    }
    for &month in &months {
        for &day in &days {
            if !panel.contains_key(&(month, day)) {
                return Err(IngestError::IncompletePanel { month, day });
            }
        }
    }

    let horizon = days.len();
    let num_months = months.len() as f64;
    let predicted: Vec<f64> = days
        .iter()
        .map(|&day| months.iter().map(|&month| panel[&(month, day)]).sum::<f64>() / num_months)
        .collect();

    let snapped: Vec<Vec<usize>> = months
        .iter()
        .map(|&month| {
            days.iter()
                .enumerate()
                .map(|(j, &day)| snap_to_support(panel[&(month, day)] - predicted[j], support))
                .collect()
        })
        .collect();

    let m = support.len();
    let (matrix, uniform_rows) = transition_from_levels(&snapped, m);
    let chain = ForecastChain::broadcast(
        predicted,
        support.to_vec(),
        matrix,
        vec![1.0 / m as f64; m],
    );
    debug_assert_eq!(chain.horizon(), horizon);
    Ok(IngestOutcome { chain, snapped, uniform_rows })
}
