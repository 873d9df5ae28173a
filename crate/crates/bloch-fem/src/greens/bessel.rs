//! Zeroth-order Bessel and Hankel functions of real positive argument.
//!
//! Three regimes: ascending series for small z, Miller backward recurrence
//! (with the Neumann series for Y0) in the middle, and the Hankel asymptotic
//! expansion for large z.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 5.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;

fn series(z: f64) -> (f64, f64) {
    let q = z * z / 4.0;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut j0 = 1.0;
    let mut tail = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        tail -= harmonic * term;
        if term.abs() < 1e-18 * j0.abs().max(1e-300) && k > 2 {
            break;
        }
    }
    let y0 = (2.0 / PI) * (((z / 2.0).ln() + EULER_GAMMA) * j0 + tail);
    (j0, y0)
}

fn miller(z: f64) -> (f64, f64) {
    let mut start = z.ceil() as usize + 50;
    start += start % 2;
    let mut next = 0.0; // J_{n+1}
    let mut cur = 1e-30; // J_n
    let mut norm = 0.0; // J0 + 2 Σ J_2k, without J0 yet
    let mut alt = 0.0; // Σ (-1)^k J_2k / k
    let mut n = start;
    while n > 0 {
        if n.is_multiple_of(2) {
            let k = n / 2;
            norm += 2.0 * cur;
            let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
            alt += sign * cur / k as f64;
        }
        let prev = 2.0 * n as f64 / z * cur - next;
        next = cur;
        cur = prev;
        n -= 1;
        if cur.abs() > 1e200 {
            next *= 1e-200;
            cur *= 1e-200;
            norm *= 1e-200;
            alt *= 1e-200;
        }
    }
    norm += cur;
    let j0 = cur / norm;
    let alt = alt / norm;
    let y0 = (2.0 / PI) * ((z / 2.0).ln() + EULER_GAMMA) * j0 - (4.0 / PI) * alt;
    (j0, y0)
}

fn asymptotic(z: f64) -> Complex64 {
    let mut sum = Complex64::new(1.0, 0.0);
    let mut a = 1.0;
    let mut ipow = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        a *= -(2.0 * kf - 1.0).powi(2) / (8.0 * kf * z);
        ipow *= Complex64::new(0.0, 1.0);
        let size = a.abs();
        if size >= last {
            break;
        }
        sum += ipow * a;
        if size < 1e-17 {
            break;
        }
        last = size;
    }
    (2.0 / (PI * z)).sqrt() * Complex64::from_polar(1.0, z - FRAC_PI_4) * sum
}

fn check(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("Bessel argument must be positive and finite, got {z}")))
    }
}

/// `H0^(1)(z) = J0(z) + i Y0(z)` for `z > 0`.
pub fn hankel_h0_1(z: f64) -> Result<Complex64> {
    check(z)?;
    Ok(hankel_unchecked(z))
}

#[inline]
pub(crate) fn hankel_unchecked(z: f64) -> Complex64 {
    if z <= SERIES_LIMIT {
        let (j, y) = series(z);
        Complex64::new(j, y)
    } else if z <= ASYMPTOTIC_LIMIT {
        let (j, y) = miller(z);
        Complex64::new(j, y)
    } else {
        asymptotic(z)
    }
}

pub fn bessel_j0(z: f64) -> Result<f64> {
    if z == 0.0 {
        return Ok(1.0);
    }
    hankel_h0_1(z.abs()).map(|h| h.re)
}

pub fn bessel_y0(z: f64) -> Result<f64> {
    hankel_h0_1(z).map(|h| h.im)
}

#[cfg(test)]
mod tests {
    use super::*;

    // (z, J0, Y0) from an arbitrary-precision evaluation
    const TABLE: &[(f64, f64, f64)] = &[
        (1e-8, 1.0, -11.800773877179532),
        (0.1, 0.99750156206604, -1.5342386513503667),
        (1.0, 0.7651976865579666, 0.08825696421567696),
        (4.99, -0.18086690251169546, -0.3070221018256458),
        (5.01, -0.17431543205674924, -0.30997933991664656),
        (10.0, -0.24593576445134834, 0.05567116728359939),
        (24.9, 0.08324596835301536, -0.1364991839967653),
        (25.1, 0.10827567149994938, -0.11676770763803707),
        (30.0, -0.08636798358104021, -0.11729573168666403),
        (50.0, 0.05581232766925182, -0.09806499547007708),
        (123.4, -0.07152553671926014, -0.006561139051984833),
    ];

    #[test]
    fn matches_reference_table() {
        for &(z, j, y) in TABLE {
            let h = hankel_h0_1(z).unwrap();
            let scale = (j * j + y * y).sqrt();
            assert!((h.re - j).abs() < 1e-12 * scale, "J0({z}) = {} want {j}", h.re);
            assert!((h.im - y).abs() < 1e-12 * scale, "Y0({z}) = {} want {y}", h.im);
        }
    }

    #[test]
    fn regimes_agree_at_the_seams() {
        for z in [SERIES_LIMIT, 7.0, 12.0, ASYMPTOTIC_LIMIT] {
            let (j1, y1) = miller(z);
            if z <= 12.0 {
                let (j2, y2) = series(z);
                assert!((j1 - j2).abs() < 1e-12 && (y1 - y2).abs() < 1e-12, "z={z}");
            }
            if z >= 12.0 {
                let h = asymptotic(z.max(20.0));
                let (j2, y2) = miller(z.max(20.0));
                assert!((h.re - j2).abs() < 1e-12 && (h.im - y2).abs() < 1e-12, "z={z}");
            }
            assert!(j1.is_finite() && y1.is_finite());
        }
    }

    #[test]
    fn domain() {
        assert!(hankel_h0_1(0.0).is_err());
        assert!(hankel_h0_1(-1.0).is_err());
        assert!(hankel_h0_1(f64::NAN).is_err());
        assert_eq!(bessel_j0(0.0).unwrap(), 1.0);
    }

    #[test]
    fn large_argument_modulus() {
        let z = 50.0;
        let h = hankel_h0_1(z).unwrap();
        let lead = (2.0 / (PI * z)).sqrt();
        assert!((h.norm() - lead).abs() < 0.01 * lead);
    }

    #[test]
    fn small_argument_log() {
        let z = 1e-8;
        let h = hankel_h0_1(z).unwrap();
        let lead = (2.0 / PI) * (z / 2.0).ln() + 2.0 * EULER_GAMMA / PI;
        assert!((h.im - lead).abs() < 1e-12);
    }
}
