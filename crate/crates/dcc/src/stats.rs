//! Small statistical helpers shared by tests and experiment summaries:
//! log-gamma, regularized incomplete gamma, chi-square tail probabilities,
//! and a two-sample chi-square statistic over histogram bins.

/// Natural log of the gamma function (Lanczos approximation, g=7, n=9).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..500 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub(crate) fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom: P(X >= stat).
pub(crate) fn chi_square_tail(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, stat / 2.0).clamp(0.0, 1.0)
}

/// Two-sample chi-square over parallel histogram bins. Bins empty in both
/// samples are skipped. Returns (statistic, degrees of freedom).
pub(crate) fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize) {
    assert_eq!(a.len(), b.len());
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    assert!(na > 0.0 && nb > 0.0);
    let ka = (nb / na).sqrt();
    let kb = (na / nb).sqrt();
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&ca, &cb) in a.iter().zip(b) {
        if ca + cb == 0 {
            continue;
        }
        let diff = ka * ca as f64 - kb * cb as f64;
        stat += diff * diff / (ca + cb) as f64;
        bins += 1;
    }
    (stat, bins.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_known_values() {
        // Gamma(5) = 24, Gamma(0.5) = sqrt(pi).
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_tail_matches_tabulated() {
        // Classic table values: P(X >= 3.841 | dof=1) = 0.05,
        // P(X >= 18.307 | dof=10) = 0.05, P(X >= 2.706 | dof=1) = 0.10.
        assert!((chi_square_tail(3.841, 1) - 0.05).abs() < 5e-4);
        assert!((chi_square_tail(18.307, 10) - 0.05).abs() < 5e-4);
        assert!((chi_square_tail(2.706, 1) - 0.10).abs() < 5e-4);
        assert!((chi_square_tail(0.0, 4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_sample_identical_histograms_give_zero() {
        let h = [10u64, 20, 30, 5];
        let (stat, dof) = chi_square_two_sample(&h, &h);
        assert!(stat.abs() < 1e-12);
        assert_eq!(dof, 3);
    }
}
