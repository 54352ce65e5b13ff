//! Modified Bessel functions `K0`, `K1` of real positive argument and the
//! integer-order Bessel function `J_n`.
//!
//! `K0`/`K1` use the ascending series below `x = 2`, Steed's continued
//! fraction on `[2, 25)` and the Hankel asymptotic series beyond. Each branch
//! is accurate to about `1e-14` relative on its range.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 2.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;

/// Returns `(K0(x), K1(x))` for `x > 0`.
pub fn k0_k1(x: f64) -> (f64, f64) {
    assert!(x > 0.0, "K0/K1 need a positive argument, got {x}");
    if x < SERIES_LIMIT {
        series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        steed(x)
    } else {
        (asymptotic(0.0, x), asymptotic(1.0, x))
    }
}

pub fn k0(x: f64) -> f64 {
    k0_k1(x).0
}

pub fn k1(x: f64) -> f64 {
    k0_k1(x).1
}

fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let log_half = (0.5 * x).ln();
    // term_k = q^k / (k!)^2 ; term1_k = q^k / (k! (k+1)!)
    let mut term0 = 1.0;
    let mut term1 = 1.0;
    let mut harmonic = 0.0; // H_k
    let mut i0 = 0.0;
    let mut i1_sum = 0.0;
    let mut k0_sum = 0.0;
    let mut k1_sum = 0.0;
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term0 *= q / (kf * kf);
            term1 *= q / (kf * (kf + 1.0));
            harmonic += 1.0 / kf;
        }
        i0 += term0;
        i1_sum += term1;
        k0_sum += harmonic * term0;
        // psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
        k1_sum += (2.0 * harmonic + 1.0 / (kf + 1.0) - 2.0 * EULER_GAMMA) * term1;
        if term0 < 1e-18 * i0 && term1 < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    let k0 = -(log_half + EULER_GAMMA) * i0 + k0_sum;
    let k1 = 1.0 / x + log_half * i1 - 0.25 * x * k1_sum;
    (k0, k1)
}

/// Steed's continued fraction for `K_0`, `K_1` (order `mu = 0`).
fn steed(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-16;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

fn asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = term * (mu - odd * odd) / (kf * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    (PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}

/// `x K1(x)` with the removable singularity at 0 filled in.
pub fn x_k1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x > 700.0 {
        0.0
    } else {
        x * k1(x)
    }
}

/// Integer-order Bessel function of the first kind via Bessel's integral
/// `J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt`, evaluated with the
/// trapezoid rule (spectrally accurate on the periodic integrand).
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let m = (2.0 * (x.abs() + n as f64) + 40.0).ceil() as usize;
    let h = PI / m as f64;
    let nf = n as f64;
    let f = |t: f64| (nf * t - x * t.sin()).cos();
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for i in 1..m {
        sum += f(i as f64 * h);
    }
    sum * h / PI
}
