//! Half-space Green's function and the manufactured data built from it.
//!
//! `G(x, y) = (i/4)[H0(k|x - y|) - H0(k|x - y'|)]` with the image point
//! `y' = (y₁, -y₂)`, so G vanishes on `x₂ = 0`. Its partial Fourier transform
//! in x₁ is
//!
//! ```text
//! Ĝ(ξ; x₂) = e^{-iξy₁} (i / 2β) (e^{iβ|x₂ - y₂|} - e^{iβ(x₂ + y₂)}),  β = sqrt(k² - ξ²), Im β ≥ 0
//! ```
//!
//! and by Poisson summation the Bloch transform is the quasi-periodic series
//! `JG(α, x) = (C_Λ/Λ) Σ_q Ĝ(α + Λ*q; x₂) e^{i(α + Λ*q)x₁}`, which converges
//! exponentially away from the source height.

mod bessel;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use bessel::{bessel_j0, bessel_y0, hankel_h0_1};

use crate::error::{Error, Result};
use crate::medium::MediumModel;
use crate::spectral::{bloch_constant, upward_sqrt, AlphaGrid, DtnSymbolTable};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Below the structure; the field G itself is the exact solution.
    Volume,
    /// Above the structure; G is the incident field.
    Incident,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpaceSource {
    pub y: [f64; 2],
    pub k: f64,
    pub kind: SourceKind,
}

impl HalfSpaceSource {
    pub fn volume(y: [f64; 2], k: f64, h0: f64) -> Result<Self> {
        if !(y[1] > 0.0 && y[1] < h0) {
            return Err(Error::InvalidArgument(format!(
                "volume source needs 0 < y2 < h0, got y2={} h0={h0}",
                y[1]
            )));
        }
        Self::checked(y, k, SourceKind::Volume)
    }

    pub fn incident(y: [f64; 2], k: f64, height: f64) -> Result<Self> {
        if !(y[1] > height) {
            return Err(Error::InvalidArgument(format!(
                "incident source needs y2 > H, got y2={} H={height}",
                y[1]
            )));
        }
        Self::checked(y, k, SourceKind::Incident)
    }

    fn checked(y: [f64; 2], k: f64, kind: SourceKind) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("wavenumber must be positive, got {k}")));
        }
        Ok(HalfSpaceSource { y, k, kind })
    }

    pub fn image(&self) -> [f64; 2] {
        [self.y[0], -self.y[1]]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// `(i/4)[H0(k|x-y|) - H0(k|x-y'|)]`.
pub fn green_half_space(x: [f64; 2], src: &HalfSpaceSource) -> Result<Complex64> {
    let r = dist(x, src.y);
    let r_image = dist(x, src.image());
    if r == 0.0 || r_image == 0.0 {
        return Err(Error::Singularity(format!("x = {x:?} coincides with the source or its image")));
    }
    Ok(green_unchecked(src.k, r, r_image))
}

#[inline]
fn green_unchecked(k: f64, r: f64, r_image: f64) -> Complex64 {
    if r == r_image {
        return Complex64::new(0.0, 0.0);
    }
    0.25 * I * (bessel::hankel_unchecked(k * r) - bessel::hankel_unchecked(k * r_image))
}

/// `k² n(x) G(x, y)` with the true (unwindowed) index.
pub fn manufactured_volume_source(src: &HalfSpaceSource, medium: &MediumModel, x: [f64; 2]) -> Result<Complex64> {
    let n = medium.full_index(x[0], x[1]);
    if n == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(src.k * src.k * n * green_half_space(x, src)?)
}

/// `(e^{iβa} - e^{iβb}) i / (2β)`, stable as β → 0.
fn image_difference(beta: Complex64, a: f64, b: f64) -> Complex64 {
    if beta.norm() * a.max(b) < 1e-3 {
        // (i/2) Σ_{n≥1} (iβ)^{n-1} i (aⁿ - bⁿ)/n!
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        let (mut an, mut bn, mut fact) = (1.0, 1.0, 1.0);
        for n in 1..8 {
            an *= a;
            bn *= b;
            fact *= n as f64;
            sum += pow * I * ((an - bn) / fact);
            pow *= I * beta;
        }
        return 0.5 * I * sum;
    }
    I / (2.0 * beta) * ((I * beta * a).exp() - (I * beta * b).exp())
}

/// `Ĝ(ξ; x₂)`.
pub fn green_fourier(xi: f64, x2: f64, src: &HalfSpaceSource) -> Complex64 {
    let beta = upward_sqrt(src.k * src.k - xi * xi);
    let phase = Complex64::from_polar(1.0, -xi * src.y[0]);
    phase * image_difference(beta, (x2 - src.y[1]).abs(), x2 + src.y[1])
}

/// `∂Ĝ/∂x₂(ξ; x₂)`.
pub fn green_fourier_dx2(xi: f64, x2: f64, src: &HalfSpaceSource) -> Complex64 {
    let beta = upward_sqrt(src.k * src.k - xi * xi);
    let phase = Complex64::from_polar(1.0, -xi * src.y[0]);
    let a = (x2 - src.y[1]).abs();
    let sign = (x2 - src.y[1]).signum();
    phase * -0.5 * (sign * (I * beta * a).exp() - (I * beta * (x2 + src.y[1])).exp())
}

/// Mode range `|q| ≤ qmax` beyond which `e^{-|ξ|d}` drops under 1e-18.
fn mode_cutoff(k: f64, alpha: f64, dual: f64, decay_distance: f64) -> i64 {
    let d = decay_distance.max(1e-3);
    ((k + alpha.abs() + 41.5 / d) / dual).ceil() as i64 + 2
}

/// Bloch transform of G at `(α, x)` via the spectral series.
pub fn bloch_green(alpha: f64, x: [f64; 2], period: f64, src: &HalfSpaceSource) -> Complex64 {
    let dual = 2.0 * PI / period;
    let d = (x[1] - src.y[1]).abs();
    let qmax = mode_cutoff(src.k, alpha, dual, d);
    let c = bloch_constant(period) / period;
    let mut sum = Complex64::new(0.0, 0.0);
    for q in -qmax..=qmax {
        let xi = alpha + dual * q as f64;
        sum += green_fourier(xi, x[1], src) * Complex64::from_polar(1.0, xi * x[0]);
    }
    c * sum
}

/// Bloch transform of G for every α of a grid at once.
pub fn bloch_green_grid(grid: &AlphaGrid, x: [f64; 2], src: &HalfSpaceSource, out: &mut [Complex64]) {
    for (o, &a) in out.iter_mut().zip(&grid.alphas) {
        *o = bloch_green(a, x, grid.period, src);
    }
}

/// Bloch samples of G on a whole α-grid, Fourier data cached per x₂.
///
/// The modes of all blocks together are `ξ_p = 2πp/(NΛ)`; block j owns
/// `p ≡ j (mod N)`, so one pass over p fills every block. Structured meshes
/// only have a handful of distinct quadrature heights, which the cache exploits.
#[derive(Debug, Clone)]
pub struct GreenBlochSampler {
    src: HalfSpaceSource,
    grid: AlphaGrid,
    rows: std::collections::HashMap<u64, (i64, Vec<Complex64>)>,
}

impl GreenBlochSampler {
    pub fn new(src: HalfSpaceSource, grid: &AlphaGrid) -> Self {
        GreenBlochSampler {
            src,
            grid: grid.clone(),
            rows: Default::default(),
        }
    }

    fn row(&mut self, x2: f64) -> &(i64, Vec<Complex64>) {
        let (src, grid) = (&self.src, &self.grid);
        self.rows.entry(x2.to_bits()).or_insert_with(|| {
            let n = grid.copies as i64;
            let dual = grid.dual_period();
            let qmax = mode_cutoff(src.k, dual, dual, (x2 - src.y[1]).abs());
            let p_min = -(qmax + 1) * n;
            let c = bloch_constant(grid.period) / grid.period;
            let step = grid.spacing();
            let values = (p_min..=-p_min)
                .map(|p| c * green_fourier(step * p as f64, x2, src))
                .collect();
            (p_min, values)
        })
    }

    /// `out[j-1] = JG(α_j, x)`.
    pub fn sample(&mut self, x: [f64; 2], out: &mut [Complex64]) {
        let n = self.grid.copies;
        let step = self.grid.spacing();
        let (p_min, values) = self.row(x[1]);
        let p_min = *p_min;
        out.fill(Complex64::new(0.0, 0.0));
        let advance = Complex64::from_polar(1.0, step * x[0]);
        let mut phase = Complex64::new(1.0, 0.0);
        for (i, v) in values.iter().enumerate() {
            let p = p_min + i as i64;
            // reseed now and then to keep the recurrence exact to rounding
            if i % 128 == 0 {
                phase = Complex64::from_polar(1.0, step * p as f64 * x[0]);
            }
            out[(p - 1).rem_euclid(n as i64) as usize] += v * phase;
            phase *= advance;
        }
    }
}

/// Bloch samples of `n1 G` on the α-grid by a truncated lattice sum.
///
/// Terms are bucketed by `s mod N` so that every α costs one N-point sum.
/// Returns the estimated tail (size of the outermost terms times `2 Jmax`).
pub fn bloch_lattice_grid<F>(
    f: F,
    grid: &AlphaGrid,
    x: [f64; 2],
    jmax: usize,
    twiddle: &[Complex64],
    out: &mut [Complex64],
) -> f64
where
    F: Fn(f64, f64) -> Complex64,
{
    let n = grid.copies;
    let mut buckets = vec![Complex64::new(0.0, 0.0); n];
    let j = jmax as i64;
    let mut edge = 0.0;
    for s in -j..=j {
        let v = f(x[0] + grid.period * s as f64, x[1]);
        if s.abs() == j {
            edge += v.norm();
        }
        buckets[s.rem_euclid(n as i64) as usize] += v;
    }
    let c = bloch_constant(grid.period);
    for (jj, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (r, b) in buckets.iter().enumerate() {
            acc += b * twiddle[((jj + 1) * r) % n];
        }
        *o = c * acc;
    }
    c * edge * 2.0 * jmax.max(1) as f64
}

/// `e^{-2πi t/N}` for t in 0..N, the phases `e^{-iα_j Λ s}`.
pub fn lattice_twiddle(copies: usize) -> Vec<Complex64> {
    (0..copies)
        .map(|t| Complex64::from_polar(1.0, -2.0 * PI * t as f64 / copies as f64))
        .collect()
}

/// Per-α Fourier data of a trace in the periodic frame of block α:
/// `coeffs[q + L]` multiplies `e^{iΛ*q x₁}` in `e^{-iαx₁} f(x₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceModes {
    pub alpha: f64,
    pub truncation: usize,
    pub coeffs: Vec<Complex64>,
}

impl TraceModes {
    pub fn coeff(&self, q: i64) -> Complex64 {
        let l = self.truncation as i64;
        if q.abs() > l {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(q + l) as usize]
        }
    }
}

/// `f_q = ∂₂u_q - σ_q u_q` for trace modes of a field and of its normal derivative.
pub fn boundary_data_from_modes(
    values: &[Complex64],
    normal_derivs: &[Complex64],
    table: &DtnSymbolTable,
) -> Result<Vec<Complex64>> {
    if values.len() != table.symbols.len() || normal_derivs.len() != table.symbols.len() {
        return Err(Error::Shape("mode vectors must match the DtN table".into()));
    }
    Ok(values
        .iter()
        .zip(normal_derivs)
        .zip(&table.symbols)
        .map(|((u, du), s)| du - s * u)
        .collect())
}

/// Bloch data of `f = ∂₂G - T⁺G` on `x₂ = H` for every α of the grid.
///
/// The mode count per α is chosen from the decay `e^{-|ξ|(y₂ - H)}`, not from
/// the discretization's DtN truncation.
pub fn incident_boundary_data(src: &HalfSpaceSource, grid: &AlphaGrid, height: f64) -> Result<Vec<TraceModes>> {
    if src.kind != SourceKind::Incident {
        return Err(Error::InvalidArgument("boundary data needs an incident source".into()));
    }
    let dual = grid.dual_period();
    let c = bloch_constant(grid.period) / grid.period;
    grid.alphas
        .iter()
        .map(|&alpha| {
            let l = mode_cutoff(src.k, alpha, dual, src.y[1] - height) as usize;
            let table = DtnSymbolTable::for_block(src.k, alpha, l, dual)?;
            let xs: Vec<f64> = table.modes().map(|(_, xi, _)| xi).collect();
            let u: Vec<Complex64> = xs.iter().map(|&xi| c * green_fourier(xi, height, src)).collect();
            let du: Vec<Complex64> = xs.iter().map(|&xi| c * green_fourier_dx2(xi, height, src)).collect();
            let coeffs = boundary_data_from_modes(&u, &du, &table)?;
            Ok(TraceModes {
                alpha,
                truncation: l,
                coeffs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p_source(k: f64) -> HalfSpaceSource {
        HalfSpaceSource::volume([0.5, 0.4], k, 1.0).unwrap()
    }

    #[test]
    fn vanishes_on_ground_line() {
        let s = p_source(1.0);
        assert_eq!(green_half_space([2.0, 0.0], &s).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn reciprocity() {
        let k = 1.7;
        let x = [1.3, 2.2];
        let y = [0.5, 0.4];
        let a = green_half_space(x, &HalfSpaceSource::volume(y, k, 1.0).unwrap()).unwrap();
        let b = green_half_space(y, &HalfSpaceSource::volume(x, k, 3.0).unwrap()).unwrap();
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn singular_points_rejected() {
        let s = p_source(1.0);
        assert!(matches!(green_half_space([0.5, 0.4], &s), Err(Error::Singularity(_))));
        assert!(green_half_space([0.5, -0.4], &s).is_err());
    }

    #[test]
    fn source_kinds_validate_height() {
        assert!(HalfSpaceSource::volume([0.0, 1.5], 1.0, 1.0).is_err());
        assert!(HalfSpaceSource::incident([0.0, 2.5], 1.0, 3.0).is_err());
        assert!(HalfSpaceSource::incident([PI, 4.0], 1.0, 3.0).is_ok());
    }

    #[test]
    fn spectral_bloch_matches_slow_lattice_sum() {
        // average of two consecutive partial sums tames the oscillating tail
        let s = p_source(1.0);
        let period = 2.0 * PI;
        let x = [0.3, 1.7];
        for alpha in [0.25, 0.6] {
            let spec = bloch_green(alpha, x, period, &s);
            let sum = |jmax: i64| -> Complex64 {
                (-jmax..=jmax)
                    .map(|j| {
                        green_half_space([x[0] + period * j as f64, x[1]], &s).unwrap()
                            * Complex64::from_polar(1.0, -alpha * period * j as f64)
                    })
                    .sum::<Complex64>()
                    * bloch_constant(period)
            };
            let lattice = (sum(4000) + sum(4001)) * 0.5;
            assert!((spec - lattice).norm() < 1e-4 * spec.norm(), "alpha={alpha}: {spec} vs {lattice}");
        }
    }

    #[test]
    fn fourier_limit_at_cutoff() {
        let s = p_source(1.0);
        let at = green_fourier(1.0, 2.0, &s);
        // β ~ sqrt(2ε), so the approach is square-root slow
        let near = green_fourier(1.0 - 1e-12, 2.0, &s);
        assert!((at - near).norm() < 1e-5);
        let both_sides = green_fourier(1.0 + 1e-12, 2.0, &s);
        assert!((at - both_sides).norm() < 1e-5);
        assert!(at.is_finite());
    }

    #[test]
    fn outgoing_modes_give_no_data() {
        let table = DtnSymbolTable::for_block(1.0, 0.3, 4, 1.0).unwrap();
        let u: Vec<Complex64> = (0..9).map(|i| Complex64::new(0.1 * i as f64, 1.0)).collect();
        // upward: ∂₂u = iβ u = σ u
        let du: Vec<Complex64> = u.iter().zip(&table.symbols).map(|(a, s)| s * a).collect();
        let f = boundary_data_from_modes(&u, &du, &table).unwrap();
        assert!(f.iter().all(|v| v.norm() < 1e-15));
        // downward: ∂₂u = -iβ u, so f = -2iβ u
        let du: Vec<Complex64> = u.iter().zip(&table.symbols).map(|(a, s)| -s * a).collect();
        let f = boundary_data_from_modes(&u, &du, &table).unwrap();
        for ((v, a), s) in f.iter().zip(&u).zip(&table.symbols) {
            assert!((v + 2.0 * s * a).norm() < 1e-15);
        }
    }

    #[test]
    fn incident_data_closed_form() {
        let s = HalfSpaceSource::incident([PI, 4.0], 1.0, 3.0).unwrap();
        let grid = AlphaGrid::new(10, 2.0 * PI).unwrap();
        let data = incident_boundary_data(&s, &grid, 3.0).unwrap();
        assert_eq!(data.len(), 10);
        for d in &data {
            for q in -3..=3 {
                let xi = d.alpha + q as f64;
                let beta = upward_sqrt(1.0 - xi * xi);
                let want = Complex64::from_polar(1.0, -xi * PI) * (I * beta * 1.0).exp() / (2.0 * PI);
                assert!((d.coeff(q) - want).norm() < 1e-13, "alpha={} q={q}", d.alpha);
            }
            assert!(d.coeffs.iter().all(|c| c.is_finite()));
        }
    }

    #[test]
    fn helmholtz_residual_is_second_order() {
        let s = p_source(1.0);
        let x = [1.1, 2.3];
        let res = |h: f64| {
            let g = |dx: f64, dy: f64| green_half_space([x[0] + dx, x[1] + dy], &s).unwrap();
            let lap = (g(h, 0.0) + g(-h, 0.0) + g(0.0, h) + g(0.0, -h) - 4.0 * g(0.0, 0.0)) / (h * h);
            (lap + s.k * s.k * g(0.0, 0.0)).norm()
        };
        let (a, b) = (res(0.02), res(0.01));
        let order = (a / b).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn grid_sampler_matches_per_alpha_series() {
        let src = p_source(1.0);
        let grid = AlphaGrid::new(5, 2.0 * PI).unwrap();
        let mut sampler = GreenBlochSampler::new(src, &grid);
        let mut fast = vec![Complex64::new(0.0, 0.0); 5];
        let mut slow = fast.clone();
        for x in [[0.3, 1.0], [-2.9, 1.55], [3.1, 2.95], [0.3, 1.0]] {
            sampler.sample(x, &mut fast);
            bloch_green_grid(&grid, x, &src, &mut slow);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12 * b.norm().max(1e-3), "{a} vs {b}");
            }
        }
    }
}
