//! Thin wrappers over `libm` so the rest of the crate reads like ordinary float code.

pub use core::f64::consts::PI;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}
#[inline]
pub fn asin(x: f64) -> f64 {
    libm::asin(x)
}
#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

/// Upper incomplete gamma Γ(s, x) for s a positive multiple of ½, x > 0.
pub fn upper_gamma_half_integer(s: f64, x: f64) -> f64 {
    // Γ(½, x) = √π erfc(√x), Γ(1, x) = e^{-x}; climb with Γ(s+1,x) = sΓ(s,x) + x^s e^{-x}.
    let twice = libm::round(2.0 * s) as i64;
    debug_assert!(twice >= 1);
    let (mut a, mut value) = if twice % 2 == 1 {
        (0.5, sqrt(PI) * erfc(sqrt(x)))
    } else {
        (1.0, exp(-x))
    };
    while a + 0.5 < s {
        value = a * value + powf(x, a) * exp(-x);
        a += 1.0;
    }
    value
}

/// Γ(n/2 + 1) for positive integer n, from the factorial / double-factorial forms.
pub fn gamma_half_plus_one(n: usize) -> f64 {
    if n % 2 == 0 {
        (1..=n / 2).fold(1.0, |acc, k| acc * k as f64)
    } else {
        // Γ(m + ½) with m = (n+1)/2 equals √π (2m)! / (4^m m!).
        let mut value = sqrt(PI);
        let mut a = 0.5;
        while a < n as f64 / 2.0 + 1.0 - 1e-9 {
            value *= a;
            a += 1.0;
        }
        value
    }
}

/// Γ(n/2) for positive integer n.
pub fn gamma_half(n: usize) -> f64 {
    gamma_half_plus_one(n) / (0.5 * n as f64)
}
