//! Small statistics helpers: replication means and 95% confidence intervals.

/// Two-sided 97.5% quantiles of Student's t for df = 1..=30.
const T_975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

/// 97.5% t quantile for the given degrees of freedom (table through 30,
/// then interpolation on the classical 40/60/120/inf anchors).
pub fn t_quantile_975(df: usize) -> f64 {
    match df {
        0 => f64::INFINITY,
        1..=30 => T_975[df - 1],
        31..=40 => interp(df as f64, 30.0, T_975[29], 40.0, 2.021),
        41..=60 => interp(df as f64, 40.0, 2.021, 60.0, 2.000),
        61..=120 => interp(df as f64, 60.0, 2.000, 120.0, 1.980),
        _ => 1.96,
    }
}

fn interp(x: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Sample mean and 95% CI half-width of independent replications.
pub fn mean_and_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile_975(n - 1) * (var / n as f64).sqrt();
    (mean, half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_monotone_to_normal() {
        assert!((t_quantile_975(19) - 2.093).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for df in 1..200 {
            let q = t_quantile_975(df);
            assert!(q <= prev + 1e-12);
            assert!(q >= 1.96);
            prev = q;
        }
    }

    #[test]
    fn mean_ci_basics() {
        let (m, h) = mean_and_ci(&[2.0, 2.0, 2.0]);
        assert_eq!(m, 2.0);
        assert_eq!(h, 0.0);
        let (m, h) = mean_and_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!(h > 0.0);
    }
}
