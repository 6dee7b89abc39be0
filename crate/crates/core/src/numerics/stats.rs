use statrs::function::gamma::{gamma_lr, gamma_ur};

/// Chi-squared CDF, the regularized lower incomplete gamma `P(dof/2, x/2)`.
pub fn chi2_cdf(x: f64, dof: u32) -> f64 {
    assert!(dof > 0, "chi2_cdf: dof must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(f64::from(dof) / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Upper tail `1 - chi2_cdf(x, dof)`, computed without cancellation.
pub fn chi2_sf(x: f64, dof: u32) -> f64 {
    assert!(dof > 0, "chi2_sf: dof must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(f64::from(dof) / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Asymptotic Kolmogorov survival function `Q(t) = 2 sum (-1)^(k-1) exp(-2 k^2 t^2)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    assert!(!sample.is_empty(), "ks_one_sample: empty sample");
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "ks_two_sample: empty sample");
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Composite Simpson integration of the chi-squared density.
    fn chi2_cdf_quadrature(x: f64, dof: u32) -> f64 {
        let k = f64::from(dof) / 2.0;
        let norm = statrs::function::gamma::ln_gamma(k) + k * 2f64.ln();
        let pdf = |t: f64| {
            if t <= 0.0 {
                if dof == 2 { 0.5 } else { 0.0 }
            } else {
                ((k - 1.0) * t.ln() - t / 2.0 - norm).exp()
            }
        };
        let steps = 20_000;
        let h = x / steps as f64;
        let mut sum = pdf(0.0) + pdf(x);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * pdf(i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn chi2_cdf_examples() {
        assert_eq!(chi2_cdf(0.0, 3), 0.0);
        assert!((chi2_cdf(2.0 * 2f64.ln(), 2) - 0.5).abs() < 1e-14);
        let v = chi2_cdf(9.0, 9);
        assert!(v > 0.55 && v < 0.57, "{v}");
        assert!((v - chi2_cdf_quadrature(9.0, 9)).abs() < 1e-9);
        for &(x, dof) in &[(0.5, 2), (3.0, 4), (20.0, 15), (1.0, 30)] {
            assert!((chi2_cdf(x, dof) - chi2_cdf_quadrature(x, dof)).abs() < 1e-6, "{x} {dof}: {} {}", chi2_cdf(x, dof), chi2_cdf_quadrature(x, dof));
            assert!((chi2_cdf(x, dof) + chi2_sf(x, dof) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chi2_cdf_monotone() {
        let mut prev = 0.0;
        for i in 0..200 {
            let v = chi2_cdf(i as f64 * 0.25, 7);
            assert!(v >= prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn ks_detects_match_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let shifted: Vec<f64> = b.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        assert!(ks_two_sample(&a, &shifted).p_value < 1e-6);
        let sq: Vec<f64> = a.iter().map(|x| x * x).collect();
        assert!(ks_one_sample(&sq, |x| chi2_cdf(x, 1)).p_value > 0.01);
        assert!(ks_one_sample(&sq, |x| chi2_cdf(x, 2)).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Q(1.36) ~ 0.05 and Q(1.63) ~ 0.01 are the classic critical values.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
    }
}
