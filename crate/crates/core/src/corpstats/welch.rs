use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for (name, s) in [("first", a), ("second", b)] {
        if s.len() < 2 {
            return Err(StatsError::Degenerate(format!("{name} sample has fewer than 2 values")));
        }
    }
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if va == 0.0 || vb == 0.0 {
        return Err(StatsError::Degenerate("sample with zero variance".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| StatsError::Degenerate(format!("student-t with df {df}: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult {
        t,
        df,
        p_two_sided: p,
    })
}

/// Per-seed values of one metric with their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welch: Option<WelchResult>,
}

impl RunAggregate {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::InsufficientData("no values to aggregate".into()));
        }
        let m = mean(&values);
        let std = (values.len() >= 2).then(|| sample_variance(&values).sqrt());
        Ok(Self {
            values,
            mean: m,
            std,
            welch: None,
        })
    }

    /// Attaches Welch's test of `self` against `other`.
    pub fn compare(&mut self, other: &RunAggregate) -> Result<WelchResult, StatsError> {
        let r = welch_t_test(&self.values, &other.values)?;
        self.welch = Some(r);
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p_two_sided - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_small_samples() {
        // a = [1,2,3]: mean 2, var 1; b = [1..5]: mean 3, var 2.5
        // se² = 1/3 + 2.5/5 = 5/6; t = -1/sqrt(5/6)
        // df = (5/6)² / ((1/3)²/2 + (1/2)²/4) = (25/36) / (1/18 + 1/16) = 50/8.5
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let t = -1.0 / (5.0f64 / 6.0).sqrt();
        let df = (25.0 / 36.0) / (1.0 / 18.0 + 1.0 / 16.0);
        assert!((r.t - t).abs() < 1e-12);
        assert!((r.df - df).abs() < 1e-12);
        assert!(r.p_two_sided > 0.2 && r.p_two_sided < 0.4, "{}", r.p_two_sided);
    }

    #[test]
    fn swap_flips_sign() {
        let a = [3.0, 4.5, 5.0, 6.1];
        let b = [1.0, 2.5, 2.0];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p_two_sided, ba.p_two_sided);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aggregate_of_constant_values() {
        let a = RunAggregate::new(vec![4.0; 9]).unwrap();
        assert_eq!(a.mean, 4.0);
        assert_eq!(a.std, Some(0.0));
        assert_eq!(RunAggregate::new(vec![1.0]).unwrap().std, None);
    }
}
