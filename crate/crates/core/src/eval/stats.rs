//! Significance tests: one-tailed Welch's t-test for run comparisons and a
//! one-sided exact binomial test.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::Result;
use crate::invalid;

/// One-tailed p-value for a t statistic: `P(T_df > t)`.
pub fn one_tailed_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    dist.sf(t)
}

/// Welch's t statistic with Welch-Satterthwaite degrees of freedom, and the
/// one-tailed p-value for `mean(a) > mean(b)`. When both samples are
/// constant and equal the test is uninformative and p is 0.5.
pub fn welch_t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<(f64, f64)> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(invalid!("both samples need at least 2 elements"));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64], m: f64| {
        s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (s.len() - 1) as f64
    };
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let (va, vb) = (var(sample_a, ma), var(sample_b, mb));

    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb {
            Ok((0.0, 0.5))
        } else if ma > mb {
            Ok((f64::INFINITY, 0.0))
        } else {
            Ok((f64::NEG_INFINITY, 1.0))
        };
    }

    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    Ok((t, one_tailed_p(t, df)))
}

/// Exact one-sided binomial test: `P(X >= successes)` for
/// `X ~ Binomial(trials, p0)`.
pub fn binomial_test_greater(successes: u64, trials: u64, p0: f64) -> Result<f64> {
    if trials == 0 || successes > trials {
        return Err(invalid!("need 0 <= successes <= trials with trials > 0"));
    }
    let dist = Binomial::new(p0, trials).map_err(|e| invalid!("bad binomial: {e}"))?;
    if successes == 0 {
        return Ok(1.0);
    }
    Ok(dist.sf(successes - 1))
}
