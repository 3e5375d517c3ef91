//! Small summary-statistic helpers shared by the sampler, prediction and metrics code.

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// `log(sum(exp(xs)))`, stabilized by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Summary of a set of draws: mean, sd and an equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl DrawSummary {
    /// Summarizes `draws` in place (the slice is sorted).
    pub fn from_draws(draws: &mut [f64]) -> Self {
        let mean = mean(draws);
        let sd = sd(draws);
        draws.sort_by(f64::total_cmp);
        DrawSummary {
            mean,
            sd,
            lo95: quantile_sorted(draws, 0.025),
            hi95: quantile_sorted(draws, 0.975),
        }
    }
}
