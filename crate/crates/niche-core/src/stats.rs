//! Goodness-of-fit statistics used by the sampler/density agreement checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of the chi-square statistic with `dof` degrees of
/// freedom.
pub fn chi_square_pvalue(chi2: f64, dof: f64) -> f64 {
    let dist = ChiSquared::new(dof).expect("dof must be positive");
    1.0 - dist.cdf(chi2)
}

/// Pearson chi-square statistic from observed counts and expected
/// probabilities (which need not sum exactly to one; they are renormalized).
pub fn chi_square_statistic(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let total_p: f64 = expected_probs.iter().sum();
    let mut chi2 = 0.0;
    let mut dof = -1.0f64;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = n as f64 * p / total_p;
        if e < 1e-12 {
            continue;
        }
        chi2 += (o as f64 - e) * (o as f64 - e) / e;
        dof += 1.0;
    }
    (chi2, dof.max(1.0))
}

/// Kolmogorov-Smirnov statistic of a sample against an analytic CDF.
/// Sorts a copy of the sample; fine at the 1e6 scale used here.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}
