//! Modified Bessel function of the second kind, real order.
//!
//! `bessel_k` follows the classic two-regime scheme: a Temme power series
//! for small argument and a Steed continued fraction for large argument,
//! both evaluated at the fractional order `mu` in [-1/2, 1/2] and lifted to
//! the requested order by the stable upward recurrence
//! `K_{v+1}(x) = (2v/x) K_v(x) + K_{v-1}(x)`.
//! Half-integer orders have a terminating closed form and get their own path.

use statrs::function::gamma::ln_gamma;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ZETA2: f64 = 1.644_934_066_848_226_4;
const ZETA3: f64 = 1.202_056_903_159_594_3;
const ZETA4: f64 = 1.082_323_233_711_138_2;
const ZETA5: f64 = 1.036_927_755_143_369_9;

/// Temme's gamma coefficients for |mu| <= 1/2:
/// gam1 = [1/Gamma(1-mu) - 1/Gamma(1+mu)] / (2 mu)  (limit EULER_GAMMA at 0),
/// gam2 = [1/Gamma(1-mu) + 1/Gamma(1+mu)] / 2,
/// plus 1/Gamma(1+mu) and 1/Gamma(1-mu) themselves.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    debug_assert!(mu.abs() <= 0.5 + 1e-12);
    // s = -[lnG(1+mu) + lnG(1-mu)]/2, h = [lnG(1+mu) - lnG(1-mu)]/2, so that
    // 1/G(1+mu) = e^{s-h}, 1/G(1-mu) = e^{s+h}.
    let (s, h) = if mu.abs() < 1e-3 {
        let m2 = mu * mu;
        let h = -mu * (EULER_GAMMA + m2 * (ZETA3 / 3.0 + m2 * ZETA5 / 5.0));
        let s = -m2 * (ZETA2 / 2.0 + m2 * ZETA4 / 4.0);
        (s, h)
    } else {
        let lp = ln_gamma(1.0 + mu);
        let lm = ln_gamma(1.0 - mu);
        (-(lp + lm) / 2.0, (lp - lm) / 2.0)
    };
    let es = s.exp();
    let sinhc = if h == 0.0 { 1.0 } else { h.sinh() / h };
    // h/mu -> -EULER_GAMMA as mu -> 0
    let h_over_mu = if mu == 0.0 { -EULER_GAMMA } else { h / mu };
    let gam1 = es * sinhc * h_over_mu;
    let gam2 = es * h.cosh();
    let gampl = (s - h).exp();
    let gammi = (s + h).exp();
    (gam1, gam2, gampl, gammi)
}

/// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, 0 < x <= 2 (Temme series).
fn k_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < 1e-15 { 1.0 } else { pimu / pimu.sin() };
    let d0 = -x2.ln();
    let e0 = mu * d0;
    let fact2 = if e0.abs() < 1e-15 { 1.0 } else { e0.sinh() / e0 };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e0.cosh() + gam2 * fact2 * d0);
    let mut sum = ff;
    let e = e0.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..=MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, x > 2 (Steed continued fraction).
fn k_continued_fraction(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let b0 = 2.0 * (1.0 + x);
    let mut d = 1.0 / b0;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut b = b0;
    for i in 2..=MAX_ITER {
        a -= 2.0 * (i as f64 - 1.0);
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (mu + x + 0.5 - h) / x;
    (k0, k1)
}

/// Modified Bessel function of the second kind K_nu(x), nu real, x > 0.
///
/// Returns NaN for x <= 0 (K diverges at 0) or non-finite inputs.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if !x.is_finite() || !nu.is_finite() || x <= 0.0 {
        return f64::NAN;
    }
    let nu = nu.abs(); // K_{-nu} = K_nu
    if let Some(m) = half_integer_order(nu) {
        return bessel_k_half_integer(m, x);
    }
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let (mut kmu, mut kmu1) = if x <= 2.0 {
        k_series(mu, x)
    } else {
        k_continued_fraction(mu, x)
    };
    let xi2 = 2.0 / x;
    for i in 1..=nl {
        let knew = (mu + i as f64) * xi2 * kmu1 + kmu;
        kmu = kmu1;
        kmu1 = knew;
    }
    kmu
}

/// Some(m) when nu = m + 1/2 for integer m >= 0.
pub(crate) fn half_integer_order(nu: f64) -> Option<usize> {
    let m = nu - 0.5;
    let r = m.round();
    if r >= 0.0 && (m - r).abs() < 1e-12 {
        Some(r as usize)
    } else {
        None
    }
}

/// K_{m+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_{k=0}^{m} (m+k)!/(k!(m-k)!) (2x)^{-k}
pub(crate) fn bessel_k_half_integer(m: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..m {
        // c_{k+1}/c_k = (m+k+1)(m-k)/(k+1)
        term *= (m + k + 1) as f64 * (m - k) as f64 / (k + 1) as f64;
        sum += term / (2.0 * x).powi(k as i32 + 1);
    }
    (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}
