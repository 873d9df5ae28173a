//! Brillouin-zone grid, discrete Bloch transform pairs and DtN symbols.
//!
//! Sign convention: the transform `Ju(α,x) = C_Λ Σ_j u(x + Λj) e^{-iαΛj}`
//! produces fields with `w(x + Λ) = e^{iαΛ} w(x)`, so `w̃ = e^{-iαx₁} w` is
//! Λ-periodic and the upward trace modes of block α are `e^{i(Λ*ℓ + α)x₁}`.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `C_Λ = sqrt(Λ / 2π)`.
pub fn bloch_constant(period: f64) -> f64 {
    (period / (2.0 * PI)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    pub copies: usize,
    pub period: f64,
    /// `alphas[j-1] = 2πj/(NΛ)`, j = 1..N.
    pub alphas: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(copies: usize, period: f64) -> Result<Self> {
        if copies < 1 || !(period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha grid needs N >= 1 and a positive period (N={copies}, period={period})"
            )));
        }
        let step = 2.0 * PI / (copies as f64 * period);
        Ok(AlphaGrid {
            copies,
            period,
            alphas: (1..=copies).map(|j| step * j as f64).collect(),
        })
    }

    pub fn dual_period(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / (self.copies as f64 * self.period)
    }

    /// `I_j = (α_j - spacing, α_j]` for 1-based j.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let a = self.alphas[j - 1];
        (a - self.spacing(), a)
    }
}

/// Square root with nonnegative imaginary part.
#[inline]
pub fn upward_sqrt(z: f64) -> Complex64 {
    if z >= 0.0 {
        Complex64::new(z.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-z).sqrt())
    }
}

fn is_cutoff(k: f64, xi: f64) -> bool {
    (k * k - xi * xi).abs() <= 1e-12 * k * k.max(1.0)
}

/// `i sqrt(k² - (Λ*ℓ - α)²)` with `Im sqrt ≥ 0`; exactly 0 at a cutoff.
pub fn dtn_symbol(k: f64, alpha: f64, l: i64, dual: f64) -> Complex64 {
    let xi = dual * l as f64 - alpha;
    if is_cutoff(k, xi) {
        warn!("Wood anomaly: k={k}, alpha={alpha}, mode {l} sits on the cutoff");
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, 1.0) * upward_sqrt(k * k - xi * xi)
}

/// DtN symbols for modes `e^{i(Λ*ℓ - α)x₁}`, `|ℓ| ≤ L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnSymbolTable {
    pub k: f64,
    pub alpha: f64,
    pub dual: f64,
    pub truncation: usize,
    pub symbols: Vec<Complex64>,
    /// Modes that sit on a cutoff.
    pub wood_anomalies: Vec<i64>,
}

impl DtnSymbolTable {
    pub fn new(k: f64, alpha: f64, truncation: usize, dual: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("wavenumber must be positive, got {k}")));
        }
        let l = truncation as i64;
        let mut wood = Vec::new();
        let symbols = (-l..=l)
            .map(|q| {
                if is_cutoff(k, dual * q as f64 - alpha) {
                    wood.push(q);
                }
                dtn_symbol(k, alpha, q, dual)
            })
            .collect();
        Ok(DtnSymbolTable {
            k,
            alpha,
            dual,
            truncation,
            symbols,
            wood_anomalies: wood,
        })
    }

    /// Table for Bloch block `α_j`, whose trace modes are `e^{i(Λ*ℓ + α_j)x₁}`.
    pub fn for_block(k: f64, alpha_j: f64, truncation: usize, dual: f64) -> Result<Self> {
        DtnSymbolTable::new(k, -alpha_j, truncation, dual)
    }

    pub fn symbol(&self, l: i64) -> Complex64 {
        self.symbols[(l + self.truncation as i64) as usize]
    }

    /// Wavenumber `Λ*ℓ - α` of mode ℓ.
    pub fn mode(&self, l: i64) -> f64 {
        self.dual * l as f64 - self.alpha
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, f64, Complex64)> + '_ {
        let l = self.truncation as i64;
        (-l..=l).map(move |q| (q, self.mode(q), self.symbol(q)))
    }

    /// Applies the periodic DtN `T̃` to a trace sampled at `x_start + sΛ/S`.
    ///
    /// The samples hold the periodic factor of a quasi-periodic trace, so
    /// mode `e^{iΛ*qx₁}` picks up `σ_q`. Modes beyond the truncation are dropped.
    pub fn apply_to_samples(&self, samples: &[Complex64], x_start: f64) -> Vec<Complex64> {
        let s = samples.len();
        let period = 2.0 * PI / self.dual;
        let dx = period / s as f64;
        let xs: Vec<f64> = (0..s).map(|i| x_start + i as f64 * dx).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); s];
        for (q, _, sigma) in self.modes() {
            if 2 * q.unsigned_abs() as usize >= s {
                continue;
            }
            let kq = self.dual * q as f64;
            let c: Complex64 = samples
                .iter()
                .zip(&xs)
                .map(|(u, &x)| u * Complex64::from_polar(1.0, -kq * x))
                .sum::<Complex64>()
                / s as f64;
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(&xs) {
                *o += sigma * c * Complex64::from_polar(1.0, kq * x);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochSample {
    pub value: Complex64,
    /// Estimated magnitude of the omitted lattice terms.
    pub tail_bound: f64,
    pub warning: Option<String>,
}

/// Truncated lattice sum `C_Λ Σ_{|j|≤Jmax} f(x₁ + Λj, x₂) e^{-iαΛj}`.
///
/// The tail is modelled as decaying like `|j|^{-3/2}` from the last terms,
/// giving a bound of about `2 Jmax` times the outermost magnitudes.
pub fn bloch_transform_samples<F>(
    f: F,
    alpha: f64,
    x: [f64; 2],
    jmax: usize,
    period: f64,
    tolerance: f64,
) -> BlochSample
where
    F: Fn(f64, f64) -> Complex64,
{
    let c = bloch_constant(period);
    let j = jmax as i64;
    let value: Complex64 = (-j..=j)
        .map(|s| f(x[0] + period * s as f64, x[1]) * Complex64::from_polar(1.0, -alpha * period * s as f64))
        .sum::<Complex64>()
        * c;
    let edge = f(x[0] + period * j as f64, x[1]).norm() + f(x[0] - period * j as f64, x[1]).norm();
    let tail_bound = c * edge * 2.0 * jmax.max(1) as f64;
    let scale = value.norm().max(f64::MIN_POSITIVE);
    let warning = (tail_bound > tolerance * scale && tail_bound > 0.0).then(|| {
        let msg = format!("lattice sum truncated at Jmax={jmax}: tail bound {tail_bound:.3e}");
        warn!("{msg}");
        msg
    });
    BlochSample {
        value,
        tail_bound,
        warning,
    }
}

/// Inverse of the discrete transform at one point of copy `m`.
///
/// `periodic[j-1]` is `w̃_j(x)`; returns
/// `(1/N) sqrt(2π/Λ) Σ_j e^{iα_j(x₁ + Λm)} e^{-iα_j x₁} w̃_j(x)`,
/// i.e. the quasi-periodic values `w_j = e^{iα_j x₁} w̃_j` recombined.
pub fn inverse_bloch(periodic: &[Complex64], grid: &AlphaGrid, m: i64, x1: f64) -> Result<Complex64> {
    if periodic.len() != grid.copies {
        return Err(Error::Shape(format!(
            "{} blocks for an alpha grid of size {}",
            periodic.len(),
            grid.copies
        )));
    }
    let scale = (2.0 * PI / grid.period).sqrt() / grid.copies as f64;
    let shift = grid.period * m as f64;
    let sum: Complex64 = periodic
        .iter()
        .zip(&grid.alphas)
        .map(|(w, &a)| w * Complex64::from_polar(1.0, a * (x1 + shift)))
        .sum();
    Ok(sum * scale)
}

/// Copies carried by an N-point discrete transform: `-⌊N/2⌋ ..= ⌈N/2⌉-1`.
pub fn copy_range(copies: usize) -> std::ops::RangeInclusive<i64> {
    let n = copies as i64;
    -(n / 2)..=(n - n / 2 - 1)
}

/// Discrete Bloch transform of a field known on the copies of [`copy_range`].
///
/// `fields[c][p]` is the value at point p (abscissa `x1[p]`) of copy
/// `copy_range().nth(c)`. Returns `w̃_j` at those points.
pub fn discrete_bloch(fields: &[Vec<Complex64>], grid: &AlphaGrid, x1: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    if fields.len() != grid.copies {
        return Err(Error::Shape(format!("{} copies for N={}", fields.len(), grid.copies)));
    }
    let c = bloch_constant(grid.period);
    Ok(grid
        .alphas
        .iter()
        .map(|&a| {
            (0..x1.len())
                .map(|p| {
                    let w: Complex64 = copy_range(grid.copies)
                        .zip(fields)
                        .map(|(m, f)| f[p] * Complex64::from_polar(1.0, -a * grid.period * m as f64))
                        .sum();
                    c * w * Complex64::from_polar(1.0, -a * x1[p])
                })
                .collect()
        })
        .collect())
}
