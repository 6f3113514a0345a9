use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

/// Values with their midranks (1-based) and the sizes of tied blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSample {
    pub values: Vec<f64>,
    pub ranks: Vec<f64>,
    /// Multiplicity of every tie block of size > 1, in ascending value order.
    pub tie_groups: Vec<usize>,
}

impl RankedSample {
    /// Σ (t³ − t) over tie blocks.
    pub fn tie_sum(&self) -> f64 {
        self.tie_groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum()
    }
}

/// Ranks `values`, giving tied values the mean of the positions they span.
pub fn midranks(values: &[f64]) -> Result<RankedSample, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(values)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    let mut tie_groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        if end - start > 1 {
            tie_groups.push(end - start);
        }
        start = end;
    }
    Ok(RankedSample {
        values: values.to_vec(),
        ranks,
        tie_groups,
    })
}
