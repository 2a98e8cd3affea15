//! Iteration-count regimes for degree-`D` monomial nonlinearities.
//!
//! With the normalized nonlinearity `z^D / sqrt((2D-1)!!)` the variance
//! sequence is identically 1, yet a single tree diagram — all interior
//! labels equal per generation, leaves paired freely — contributes
//! `exp(m D^(t-1) (t-9) log(mD) - log N * m D^(t-2))` up to constants. The
//! exponent turns positive once `t` passes `log N / (D log D)`, which is
//! where the Gaussian prediction stops being valid; predictions are safe up
//! to `log N / C_D` with `C_D = K1 * D * log(max(D, M))`.

use num_traits::Float;

/// Regime classification for a `(log N, D, t)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeVerdict {
    /// `t <= log N / C_D`: moment predictions hold.
    SeValid,
    /// `log N / (D log D) <= t <= log N / log D`: the rogue diagram
    /// dominates and predictions fail.
    SeFailure,
    /// Neither window; nothing is claimed.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub log_n: f64,
    pub degree: u32,
    pub moment_power: u32,
    pub t: u32,
    pub exponent_lower_bound: f64,
    pub threshold_t: f64,
    pub k1: f64,
    pub c_d: f64,
    pub verdict: RegimeVerdict,
    /// The absolute constant in the valid-regime error rate is only known to
    /// be below 1000; it is reported, never derived.
    pub b_constant: Option<f64>,
}

fn ln(x: f64) -> f64 {
    Float::ln(x)
}

fn exp(x: f64) -> f64 {
    Float::exp(x)
}

/// Lower bound on the log-contribution of the dominant diagram:
/// `m D^(t-1) (t-9) log(mD) - log N * m D^(t-2)`, evaluated in log space so
/// large `D^t` factors cannot overflow intermediate terms.
pub fn exponent_lower_bound(log_n: f64, degree: u32, t: u32, m: u32) -> f64 {
    assert!(degree >= 2 && degree % 2 == 0, "the construction needs even degree >= 2");
    assert!(t >= 1 && m >= 1 && log_n > 0.0);
    let ln_d = ln(degree as f64);
    let ln_m = ln(m as f64);
    let t_shift = t as f64 - 9.0;
    // first term: sign(t-9) * exp(ln m + (t-1) ln D + ln|t-9| + ln ln(mD))
    let ln_first = if t_shift == 0.0 {
        f64::NEG_INFINITY
    } else {
        ln_m + (t as f64 - 1.0) * ln_d + ln(Float::abs(t_shift)) + ln(ln((m * degree) as f64))
    };
    let sign_first = if t_shift >= 0.0 { 1.0 } else { -1.0 };
    // second term: exp(ln log N + ln m + (t-2) ln D)
    let ln_second = ln(log_n) + ln_m + (t as f64 - 2.0) * ln_d;

    let peak = Float::max(ln_first, ln_second);
    if peak == f64::NEG_INFINITY {
        return 0.0;
    }
    let scaled = sign_first * exp(ln_first - peak) - exp(ln_second - peak);
    if peak <= 700.0 {
        scaled * exp(peak)
    } else if scaled == 0.0 {
        0.0
    } else if scaled > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// The iteration count `log N / (D log D)` past which predictions fail.
pub fn failure_threshold(log_n: f64, degree: u32) -> f64 {
    assert!(degree >= 2 && log_n > 0.0);
    log_n / (degree as f64 * ln(degree as f64))
}

/// Classifies `(log N, D, t)` against the validity and failure windows.
///
/// `bound_m` is the uniform bound on variances and coefficients; `k1` must
/// exceed 20 for the validity constant `C_D = K1 D log(max(D, M))`.
pub fn regime_classify(
    log_n: f64,
    degree: u32,
    t: u32,
    m: u32,
    bound_m: f64,
    k1: f64,
) -> RegimeReport {
    assert!(k1 > 20.0, "k1 must exceed 20");
    assert!(degree >= 2);
    let c_d = k1 * degree as f64 * ln(Float::max(degree as f64, bound_m));
    let threshold_t = failure_threshold(log_n, degree);
    let upper = log_n / ln(degree as f64);
    let tf = t as f64;
    let verdict = if tf <= log_n / c_d {
        RegimeVerdict::SeValid
    } else if tf >= threshold_t && tf <= upper {
        RegimeVerdict::SeFailure
    } else {
        RegimeVerdict::Indeterminate
    };
    let exponent = if degree % 2 == 0 {
        exponent_lower_bound(log_n, degree, t, m)
    } else {
        f64::NAN
    };
    RegimeReport {
        log_n,
        degree,
        moment_power: m,
        t,
        exponent_lower_bound: exponent,
        threshold_t,
        k1,
        c_d,
        verdict,
        b_constant: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_values() {
        assert!((failure_threshold(20.0, 4) - 3.607).abs() < 1e-3);
        assert!((failure_threshold(20.0, 2) - 14.427).abs() < 1e-3);
        // At N = e^(D log D) the threshold normalizes to 1.
        let d = 6u32;
        let log_n = d as f64 * (d as f64).ln();
        assert!((failure_threshold(log_n, d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_sign_flips_with_t() {
        // log N = 20, D = 4, m = 2: negative well below the threshold,
        // positive well above.
        assert!(exponent_lower_bound(20.0, 4, 2, 2) < 0.0);
        assert!(exponent_lower_bound(20.0, 4, 12, 2) > 0.0);
    }

    #[test]
    fn exponent_grows_past_crossing() {
        for d in [2u32, 4, 8] {
            let mut prev = f64::NEG_INFINITY;
            let mut crossed = false;
            for t in 10..60 {
                let e = exponent_lower_bound(50.0, d, t, 2);
                if crossed {
                    assert!(e >= prev, "monotone growth after crossing");
                }
                if e > 0.0 {
                    crossed = true;
                }
                prev = e;
            }
            assert!(crossed);
        }
    }

    #[test]
    fn exponent_no_overflow_at_large_t() {
        let e = exponent_lower_bound(100.0, 8, 500, 2);
        assert!(e == f64::INFINITY);
        let e = exponent_lower_bound(1e9, 8, 3, 2);
        assert!(e < 0.0);
    }

    #[test]
    fn classify_windows() {
        let r = regime_classify(100.0, 3, 1, 2, 1.0, 21.0);
        assert_eq!(r.verdict, RegimeVerdict::SeValid);

        let r = regime_classify(20.0, 4, 5, 2, 1.0, 21.0);
        assert_eq!(r.verdict, RegimeVerdict::SeFailure);

        let r = regime_classify(20.0, 4, 20, 2, 1.0, 21.0);
        assert_eq!(r.verdict, RegimeVerdict::Indeterminate);
    }

    #[test]
    fn window_nonempty() {
        for d in [2u32, 3, 4, 8, 16] {
            for log_n in [5.0_f64, 20.0, 100.0] {
                assert!(failure_threshold(log_n, d) < log_n / (d as f64).ln());
            }
        }
    }
}
