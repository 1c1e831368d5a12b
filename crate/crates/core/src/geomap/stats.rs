use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Verbal strength of a correlation coefficient by its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationStrength {
    Negligible,
    Weak,
    Moderate,
    Strong,
    Perfect,
}

impl CorrelationStrength {
    pub fn of(r: f64) -> Self {
        let a = r.abs();
        if a >= 1.0 {
            Self::Perfect
        } else if a > 0.7 {
            Self::Strong
        } else if a > 0.4 {
            Self::Moderate
        } else if a > 0.1 {
            Self::Weak
        } else {
            Self::Negligible
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub r: f64,
    pub n: usize,
    /// Two-sided p-value from the t approximation with n - 2 degrees of freedom.
    pub p: f64,
    pub strength: CorrelationStrength,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpearmanError {
    #[error("{0} x values but {1} y values")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 pairs, got {0}")]
    TooFew(usize),
    #[error("non-finite value")]
    NonFinite,
    #[error("correlation undefined: a ranked sequence has zero variance")]
    ZeroVariance,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman, SpearmanError> {
    if x.len() != y.len() {
        return Err(SpearmanError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(SpearmanError::TooFew(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SpearmanError::NonFinite);
    }
    let r = pearson(&average_ranks(x), &average_ranks(y)).ok_or(SpearmanError::ZeroVariance)?;
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Spearman {
        r,
        n,
        p,
        strength: CorrelationStrength::of(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 4.0, 8.0, 16.0, 32.0];
        let s = spearman(&x, &y).unwrap();
        assert_eq!((s.r, s.p, s.strength), (1.0, 0.0, CorrelationStrength::Perfect));
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev).unwrap().r, -1.0);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn errors_and_p_value() {
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(SpearmanError::ZeroVariance));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(SpearmanError::TooFew(2)));
        // r = 0.5 with n = 10: t = 0.5 * sqrt(8 / 0.75) = 1.633, p ~ 0.141
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y = [2.0, 0.0, 1.0, 5.0, 3.0, 9.0, 4.0, 6.0, 7.0, 8.0];
        let s = spearman(&x, &y).unwrap();
        assert!(s.p > 0.0 && s.p < 1.0);
        assert_eq!(CorrelationStrength::of(0.1836), CorrelationStrength::Weak);
    }
}
