use crate::error::{Error, Result};

/// Sample autocorrelations at lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::UndefinedDiagnostic(
            "series needs at least two values".into(),
        ));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>();
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(Error::UndefinedDiagnostic("series is constant".into()));
    }
    Ok((0..=max_lag.min(n - 1))
        .map(|k| {
            c[..n - k]
                .iter()
                .zip(&c[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / c0
        })
        .collect())
}

/// Integrated autocorrelation time `1 + 2 Σ ρ_k`, truncated by Geyer's initial
/// positive sequence rule (pairs `ρ_{2j} + ρ_{2j+1}` summed while positive).
pub fn inefficiency_factor(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 10 {
        return Err(Error::UndefinedDiagnostic(format!(
            "series has {n} values, at least 10 needed"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>();
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(Error::UndefinedDiagnostic("series is constant".into()));
    }
    let rho = |k: usize| {
        c[..n - k]
            .iter()
            .zip(&c[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / c0
    };
    let mut sum = -1.0; // pair j = 0 contributes ρ0 + ρ1 = 1 + ρ1
    let mut j = 0;
    while 2 * j + 1 < n {
        let pair = rho(2 * j) + rho(2 * j + 1);
        if pair <= 0.0 {
            break;
        }
        sum += 2.0 * pair;
        j += 1;
    }
    Ok(sum.max(0.0))
}

pub fn effective_sample_size(x: &[f64]) -> Result<f64> {
    let f = inefficiency_factor(x)?;
    Ok(x.len() as f64 / f.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::standard_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iid_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
        let f = inefficiency_factor(&x).unwrap();
        assert!((0.9..=1.1).contains(&f), "{f}");
    }

    #[test]
    fn ar1_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut v = 0.0;
        let x: Vec<f64> = (0..100_000)
            .map(|_| {
                v = 0.5 * v + standard_normal(&mut rng);
                v
            })
            .collect();
        let f = inefficiency_factor(&x).unwrap();
        assert!((f - 3.0).abs() < 0.3, "{f}");
    }

    #[test]
    fn constant_and_short_series_are_errors() {
        assert!(inefficiency_factor(&[1.0; 50]).is_err());
        assert!(inefficiency_factor(&[1.0, 2.0]).is_err());
    }
}
