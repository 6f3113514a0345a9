use serde::{Deserialize, Serialize};

use super::{midranks, special::chi_square_sf, Stars, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    /// Uncorrected statistic.
    pub h: f64,
    /// `h / C` with the tie correction `C = 1 - Σ(t³-t)/(N³-N)`.
    pub h_corrected: f64,
    pub df: usize,
    /// Chi-square upper tail at `h_corrected`.
    pub p: f64,
    pub stars: Stars,
    pub mean_ranks: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub n: usize,
}

/// Kruskal-Wallis k-sample test on pooled midranks.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<KwResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let pooled: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.as_ref().iter().copied())
        .collect();
    let ranked = midranks(&pooled)?;
    let n = pooled.len();
    let nf = n as f64;

    let correction = 1.0 - ranked.tie_sum() / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Err(StatsError::AllIdentical);
    }

    let mut offset = 0;
    let mut rank_term = 0.0;
    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut group_sizes = Vec::with_capacity(groups.len());
    for g in groups {
        let len = g.as_ref().len();
        let sum: f64 = ranked.ranks[offset..offset + len].iter().sum();
        rank_term += sum * sum / len as f64;
        mean_ranks.push(sum / len as f64);
        group_sizes.push(len);
        offset += len;
    }
    let h = (12.0 / (nf * (nf + 1.0)) * rank_term - 3.0 * (nf + 1.0)).max(0.0);
    let h_corrected = h / correction;
    let df = groups.len() - 1;
    let p = chi_square_sf(h_corrected, df)?;
    Ok(KwResult {
        h,
        h_corrected,
        df,
        p,
        stars: Stars::from_p(p),
        mean_ranks,
        group_sizes,
        n,
    })
}
