//! Splitting a total error target between roundoff and approximations.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numerics::rounding::{div_down, mul_down, sub_down, sum_up};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Equal,
    /// Weights proportional to each call's propagation factor.
    Derivative,
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal" => Ok(Distribution::Equal),
            "derivative" => Ok(Distribution::Derivative),
            _ => Err(format!(
                "unknown distribution `{s}` (expected equal or derivative)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BudgetError {
    #[error("target {target:e} is not above the roundoff floor {minimum:e}")]
    BudgetExhausted { target: f64, minimum: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetBudget {
    pub name: String,
    pub weight: f64,
    /// Share of the output error (τᵢ).
    pub total: f64,
    /// Propagation factor (mᵢ).
    pub factor: f64,
    /// Local error allowed at the call (εᵢ).
    pub local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetAllocation {
    pub target: f64,
    pub roundoff: f64,
    pub approx: f64,
    pub targets: Vec<TargetBudget>,
}

impl BudgetAllocation {
    /// Builds the allocation for targets with the given names, propagation
    /// factors and caps used when a factor is zero.
    pub fn new(
        target: f64,
        roundoff: f64,
        strategy: Distribution,
        calls: &[(String, f64, f64)],
    ) -> Result<BudgetAllocation, BudgetError> {
        let (roundoff, approx) = split_total(target, roundoff)?;
        let factors: Vec<f64> = calls.iter().map(|c| c.1).collect();
        let shares = distribute(approx, &factors, strategy);
        let targets = calls
            .iter()
            .zip(shares)
            .map(|((name, m, cap), (w, t))| TargetBudget {
                name: name.clone(),
                weight: w,
                total: t,
                factor: *m,
                local: to_local(t, *m, *cap),
            })
            .collect();
        Ok(BudgetAllocation {
            target,
            roundoff,
            approx,
            targets,
        })
    }

    /// The same allocation with every local budget halved.
    pub fn halved(&self) -> BudgetAllocation {
        let mut out = self.clone();
        for t in &mut out.targets {
            t.total *= 0.5;
            t.local *= 0.5;
        }
        out
    }
}

/// (τ_fl, τ_approx) for a total target τ and the libm-mode roundoff bound.
pub fn split_total(target: f64, roundoff: f64) -> Result<(f64, f64), BudgetError> {
    if !(roundoff < target) {
        return Err(BudgetError::BudgetExhausted {
            target,
            minimum: roundoff,
        });
    }
    Ok((roundoff, sub_down(target, roundoff)))
}

/// (weight, τᵢ) per target. Shares are rounded down and the last one takes
/// the remainder, so they never sum above `approx`.
pub fn distribute(approx: f64, factors: &[f64], strategy: Distribution) -> Vec<(f64, f64)> {
    let n = factors.len();
    if n == 0 {
        return vec![];
    }
    let sum = sum_up(factors.iter().copied());
    let by_factor = strategy == Distribution::Derivative && sum > 0.0 && sum.is_finite();
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            if by_factor {
                (
                    factors[i] / sum,
                    div_down(mul_down(approx, factors[i]), sum),
                )
            } else {
                (1.0 / n as f64, div_down(approx, n as f64))
            }
        })
        .collect();
    let others = sum_up(out[..n - 1].iter().map(|s| s.1));
    let last = sub_down(approx, others).max(0.0);
    out[n - 1].1 = if by_factor && factors[n - 1] == 0.0 {
        0.0
    } else {
        last
    };
    out
}

/// εᵢ = τᵢ / mᵢ, or `cap` for a call that cannot affect the result.
pub fn to_local(total: f64, factor: f64, cap: f64) -> f64 {
    if factor > 0.0 {
        div_down(total, factor)
    } else {
        cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ulps_apart(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn split_examples() {
        let (fl, ap) = split_total(1e-13, 3.44e-15).unwrap();
        assert_eq!(fl, 3.44e-15);
        assert!(ulps_apart(ap, 9.656e-14) <= 1);
        assert!(matches!(
            split_total(1e-16, 3.44e-15),
            Err(BudgetError::BudgetExhausted { .. })
        ));
        assert_eq!(split_total(2.0 * 3.44e-15, 3.44e-15).unwrap().1, 3.44e-15);
        assert!(split_total(1e-15, 1e-15).is_err());
    }

    #[test]
    fn equal_distribution() {
        assert_eq!(
            distribute(9e-14, &[1.0, 1.0], Distribution::Equal),
            vec![(0.5, 4.5e-14), (0.5, 4.5e-14)]
        );
        assert_eq!(
            distribute(9e-14, &[3.0], Distribution::Equal),
            vec![(1.0, 9e-14)]
        );
    }

    #[test]
    fn derivative_distribution() {
        let d = distribute(6e-14, &[0.5, 2.5], Distribution::Derivative);
        assert!((d[0].0 - 1.0 / 6.0).abs() < 1e-16 && (d[1].0 - 5.0 / 6.0).abs() < 1e-16);
        assert!(ulps_apart(d[0].1, 1e-14) <= 1 && ulps_apart(d[1].1, 5e-14) <= 1);
        // Both calls end up with the same local budget τ_approx / Σm.
        let e0 = to_local(d[0].1, 0.5, 1.0);
        let e1 = to_local(d[1].1, 2.5, 1.0);
        assert!(ulps_apart(e0, 2e-14) <= 2 && ulps_apart(e1, 2e-14) <= 2);
    }

    #[test]
    fn all_zero_factors_fall_back_to_equal() {
        assert_eq!(
            distribute(1e-13, &[0.0, 0.0], Distribution::Derivative),
            distribute(1e-13, &[0.0, 0.0], Distribution::Equal)
        );
    }

    #[test]
    fn local_examples() {
        assert!(ulps_apart(to_local(5e-14, 2.5, 1.0), 2e-14) <= 1);
        assert_eq!(to_local(5e-14, 1.0, 1.0), 5e-14);
        assert_eq!(to_local(5e-14, 0.0, 2.0), 2.0);
    }

    #[test]
    fn allocation_records_everything() {
        let calls = vec![
            ("_tmp1".to_string(), 0.5, 2.0),
            ("_tmp2".to_string(), 2.5, 2.0),
        ];
        let a = BudgetAllocation::new(1e-13, 3.44e-15, Distribution::Equal, &calls).unwrap();
        assert_eq!(a.targets.len(), 2);
        assert!(a.targets.iter().map(|t| t.total).sum::<f64>() <= a.approx);
        assert_eq!(a.halved().targets[1].local, a.targets[1].local * 0.5);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shares_conserve_the_budget(
                approx in 1e-20f64..1.0,
                factors in proptest::collection::vec(0.0f64..100.0, 1..8),
                derivative in any::<bool>(),
            ) {
                let strategy = if derivative { Distribution::Derivative } else { Distribution::Equal };
                let d = distribute(approx, &factors, strategy);
                let mut exact = rug::Float::with_val(4096, 0);
                for s in &d {
                    exact += s.1;
                }
                prop_assert!(exact <= approx);
                let slack = approx - d.iter().map(|s| s.1).sum::<f64>();
                prop_assert!(slack <= approx * 1e-14 * factors.len() as f64);
                prop_assert!(d.iter().all(|s| s.1 >= 0.0));
                if !derivative {
                    prop_assert!(d.iter().all(|s| s.1 > 0.0));
                }
            }
        }
    }
}
