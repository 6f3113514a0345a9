use serde::{Deserialize, Serialize};

use super::{check_finite, midranks, special::student_t_sf, Stars, StatsError};

/// Largest sample size accepted for exact permutation p-values.
pub const EXACT_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Two-tailed Student t with n - 2 degrees of freedom.
    #[default]
    TApprox,
    /// Full enumeration of the permutations of `y` (n <= [`EXACT_MAX_N`]).
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub n: usize,
    /// Two-tailed.
    pub p: f64,
    pub stars: Stars,
    pub method: PValueMethod,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    spearman_with(x, y, PValueMethod::TApprox)
}

/// Product-moment correlation of midranks.
pub fn spearman_with(
    x: &[f64],
    y: &[f64],
    method: PValueMethod,
) -> Result<SpearmanResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, got: n });
    }
    check_finite(x)?;
    check_finite(y)?;
    let rx = midranks(x)?.ranks;
    let ry = midranks(y)?.ranks;
    let mean = (n as f64 + 1.0) / 2.0;
    let cx: Vec<f64> = rx.iter().map(|r| r - mean).collect();
    let cy: Vec<f64> = ry.iter().map(|r| r - mean).collect();
    let sxx: f64 = cx.iter().map(|v| v * v).sum();
    let syy: f64 = cy.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(StatsError::ConstantVariable("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ConstantVariable("y"));
    }
    let sxy: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);

    let p = match method {
        PValueMethod::TApprox => t_approx_p(rho, n)?,
        PValueMethod::Permutation => permutation_p(&cx, &cy, sxx * syy, rho)?,
    };
    Ok(SpearmanResult {
        rho,
        n,
        p,
        stars: Stars::from_p(p),
        method,
    })
}

fn t_approx_p(rho: f64, n: usize) -> Result<f64, StatsError> {
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    let t = rho * ((n as f64 - 2.0) / denom).sqrt();
    Ok((2.0 * student_t_sf(t.abs(), n - 2)?).min(1.0))
}

/// Share of the n! re-pairings whose |rho| reaches the observed |rho|.
fn permutation_p(cx: &[f64], cy: &[f64], norm: f64, rho: f64) -> Result<f64, StatsError> {
    let n = cx.len();
    if n > EXACT_MAX_N {
        return Err(StatsError::TooLargeForExact {
            n,
            max: EXACT_MAX_N,
        });
    }
    let threshold = rho.abs() * norm.sqrt() - 1e-9;
    let mut perm: Vec<f64> = cy.to_vec();
    let mut hits: u64 = 0;
    let mut total: u64 = 0;
    let mut visit = |p: &[f64]| {
        let s: f64 = cx.iter().zip(p).map(|(a, b)| a * b).sum();
        total += 1;
        if s.abs() >= threshold {
            hits += 1;
        }
    };
    // Heap's algorithm, iterative form
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_is_exactly_one() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3) + 10.0).collect();
        let r = spearman(&x, &y).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.p, 0.0);
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev).unwrap().rho, -1.0);
    }

    #[test]
    fn four_point_example() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r.rho - 0.6).abs() < 1e-12);
        assert!((r.p - 0.4).abs() < 1e-6);
        assert_eq!(r.stars, Stars::None);
    }

    #[test]
    fn exact_p_small_case() {
        // n = 4, rho = 0.6: |rho| >= 0.6 occurs for 10 of 24 orderings
        let r = spearman_with(
            &[1.0, 2.0, 3.0, 4.0],
            &[2.0, 1.0, 4.0, 3.0],
            PValueMethod::Permutation,
        )
        .unwrap();
        assert!((r.p - 10.0 / 24.0).abs() < 1e-12);
        assert_eq!(r.method, PValueMethod::Permutation);
    }

    #[test]
    fn exact_refuses_large_n() {
        let x: Vec<f64> = (0..11).map(f64::from).collect();
        assert!(matches!(
            spearman_with(&x, &x, PValueMethod::Permutation),
            Err(StatsError::TooLargeForExact { .. })
        ));
    }

    #[test]
    fn errors() {
        assert_eq!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch(2, 1))
        );
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFewObservations { .. })
        ));
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ConstantVariable("x"))
        );
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]),
            Err(StatsError::ConstantVariable("y"))
        );
    }
}
