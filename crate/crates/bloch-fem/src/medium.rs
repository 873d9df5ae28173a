//! Refractive indices of the two layers, the windowed periodization of the
//! lower layer and its split into N Λ-periodic components.
//!
//! The windowed layer `n1_N` is NΛ-periodic. Its Fourier modes
//! `e^{2πimx₁/(NΛ)}` are grouped by `m mod N`: component `ℓ` collects the
//! modes `m = ℓ + Nj` and, after pulling out `e^{2πiℓx₁/(NΛ)}`, is Λ-periodic:
//!
//! ```text
//! n1_N(x) = Σ_{ℓ=1..N} e^{2πiℓx₁/(NΛ)} c_ℓ(x),   c_ℓ(x) = Σ_j n̂_{ℓ+Nj}(x₂) e^{2πijx₁/Λ}
//! ```

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::mesh::PeriodicCellMesh;

/// C¹ cutoff: 1 on `[0, a/2]`, a cubic on `(a/2, a)`, 0 from `a` on.
pub fn cutoff_xa(t: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff width must be positive, got {a}")));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("cutoff argument must be nonnegative, got {t}")));
    }
    Ok(cutoff(t, a))
}

#[inline]
pub(crate) fn cutoff(t: f64, a: f64) -> f64 {
    if t <= a / 2.0 {
        1.0
    } else if t < a {
        -4.0 * (a - t).powi(2) * (a - 4.0 * t) / a.powi(3)
    } else {
        0.0
    }
}

/// Reduces `x` into `(-p/2, p/2]`.
#[inline]
pub(crate) fn centered_mod(x: f64, p: f64) -> f64 {
    let r = x - p * (x / p).round();
    if r <= -p / 2.0 {
        r + p
    } else if r > p / 2.0 {
        r - p
    } else {
        r
    }
}

type Evaluator = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A real refractive-index perturbation periodic in x₁ and supported in a band of x₂.
#[derive(Clone)]
pub struct LayerIndex {
    evaluator: Evaluator,
    pub period: f64,
    pub support: (f64, f64),
    pub name: String,
    vanishes: bool,
}

impl fmt::Debug for LayerIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LayerIndex")
            .field("name", &self.name)
            .field("period", &self.period)
            .field("support", &self.support)
            .finish()
    }
}

impl LayerIndex {
    pub fn new(
        name: impl Into<String>,
        period: f64,
        support: (f64, f64),
        evaluator: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LayerIndex {
            evaluator: Arc::new(evaluator),
            period,
            support,
            name: name.into(),
            vanishes: false,
        }
    }

    pub fn zero(period: f64, support: (f64, f64)) -> Self {
        LayerIndex {
            vanishes: true,
            ..LayerIndex::new("zero", period, support, |_, _| 0.0)
        }
    }

    #[inline]
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        if self.vanishes || x2 <= self.support.0 || x2 >= self.support.1 {
            return 0.0;
        }
        (self.evaluator)(x1, x2)
    }

    pub fn is_zero(&self) -> bool {
        self.vanishes
    }
}

/// The built-in index pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexGroup {
    Group1,
    Group2,
    /// Both layers vanish; the problem is the homogeneous half space.
    Empty,
}

impl IndexGroup {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "group1" | "1" => Ok(IndexGroup::Group1),
            "group2" | "2" => Ok(IndexGroup::Group2),
            "empty" | "none" => Ok(IndexGroup::Empty),
            other => Err(Error::Config(format!("unknown index group '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IndexGroup::Group1 => "group1",
            IndexGroup::Group2 => "group2",
            IndexGroup::Empty => "empty",
        }
    }

    /// (lower layer, upper layer).
    pub fn layers(&self) -> (LayerIndex, LayerIndex) {
        let lower = (1.2, 1.8);
        let upper = (2.2, 2.8);
        match self {
            IndexGroup::Group1 => (
                LayerIndex::new("group1.lower", 2.0 * SQRT_2 * PI, lower, |x1, x2| {
                    0.1 * (x1 / SQRT_2).sin() * cutoff((x2 - 1.5).abs(), 0.3)
                }),
                LayerIndex::new("group1.upper", 2.0 * PI, upper, |x1, x2| {
                    0.25 * x1.sin() * cutoff((x2 - 2.5).abs(), 0.3)
                }),
            ),
            IndexGroup::Group2 => (
                LayerIndex::new("group2.lower", 15.0, lower, |x1, x2| {
                    let t = centered_mod(x1, 15.0);
                    -0.25 * cutoff(t.abs(), 4.0) * cutoff((x2 - 1.5).abs(), 0.3)
                }),
                LayerIndex::new("group2.upper", 2.0 * PI, upper, |x1, x2| {
                    let t = centered_mod(x1, 2.0 * PI);
                    0.25 * cutoff((t * t + (x2 - 2.5).powi(2)).sqrt(), 0.3)
                }),
            ),
            IndexGroup::Empty => (
                LayerIndex::zero(2.0 * PI, lower),
                LayerIndex::zero(2.0 * PI, upper),
            ),
        }
    }
}

/// `n1(x)·X(x₁)` on one supercell, extended NΛ-periodically.
#[derive(Debug, Clone)]
pub struct WindowedLayer {
    pub layer: LayerIndex,
    pub copies: usize,
    pub cell_period: f64,
}

impl WindowedLayer {
    pub fn half_width(&self) -> f64 {
        self.copies as f64 * self.cell_period / 2.0
    }

    #[inline]
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let a = self.half_width();
        let t = centered_mod(x1, 2.0 * a);
        let w = cutoff(t.abs(), a);
        if w == 0.0 {
            0.0
        } else {
            w * self.layer.eval(t, x2)
        }
    }
}

pub fn window_layer1(layer: &LayerIndex, copies: usize, cell_period: f64) -> Result<WindowedLayer> {
    if copies < 1 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    Ok(WindowedLayer {
        layer: layer.clone(),
        copies,
        cell_period,
    })
}

/// Sampling parameters for the Fourier analysis of the windowed layer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecompositionSettings {
    /// Total x₁ samples over one supercell.
    pub samples_x1: usize,
    pub samples_x2: usize,
    pub band: usize,
}

impl DecompositionSettings {
    pub fn default_for(copies: usize) -> Self {
        DecompositionSettings {
            samples_x1: 1000 * copies,
            samples_x2: 1000,
            band: 8 * copies,
        }
    }
}

/// Fourier coefficients `n̂_m(x₂)`, `|m| ≤ band`, on an x₂ grid with pchip
/// interpolation, plus the N-component view of them.
#[derive(Debug, Clone)]
pub struct QuasiPeriodicComponents {
    pub copies: usize,
    pub cell_period: f64,
    pub band: usize,
    /// x₂ range of the table; coefficients vanish outside it.
    pub x2_range: (f64, f64),
    coeffs: Vec<Pchip>,
    zero: bool,
}

pub fn fourier_decompose<F>(
    windowed: F,
    copies: usize,
    cell_period: f64,
    settings: DecompositionSettings,
    x2_range: (f64, f64),
) -> Result<QuasiPeriodicComponents>
where
    F: Fn(f64, f64) -> Complex64,
{
    let DecompositionSettings {
        samples_x1,
        samples_x2,
        band,
    } = settings;
    if copies < 1 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if band < copies {
        return Err(Error::InsufficientBand { band, n: copies });
    }
    if samples_x1 % copies != 0 || samples_x1 < 2 * band + 1 {
        return Err(Error::InvalidArgument(format!(
            "samples_x1={samples_x1} must be a multiple of N={copies} and exceed 2*band"
        )));
    }
    if samples_x2 < 2 || !(x2_range.1 > x2_range.0) {
        return Err(Error::InvalidArgument("need at least two x2 samples on a nonempty range".into()));
    }

    let width = copies as f64 * cell_period;
    let dx = width / samples_x1 as f64;
    let x_lo = -width / 2.0;
    let dy = (x2_range.1 - x2_range.0) / (samples_x2 - 1) as f64;
    let x2_grid: Vec<f64> = (0..samples_x2).map(|r| x2_range.0 + r as f64 * dy).collect();

    let fft = FftPlanner::new().plan_fft_forward(samples_x1);
    let mut line = vec![Complex64::new(0.0, 0.0); samples_x1];
    let n_modes = 2 * band + 1;
    let mut table = vec![vec![Complex64::new(0.0, 0.0); samples_x2]; n_modes];
    let mut any = false;
    let scale = 1.0 / samples_x1 as f64;
    for (r, &x2) in x2_grid.iter().enumerate() {
        let mut nonzero = false;
        for (s, v) in line.iter_mut().enumerate() {
            *v = windowed(x_lo + s as f64 * dx, x2);
            nonzero |= *v != Complex64::new(0.0, 0.0);
        }
        if !nonzero {
            continue;
        }
        any = true;
        fft.process(&mut line);
        for (idx, col) in table.iter_mut().enumerate() {
            let m = idx as i64 - band as i64;
            let k = m.rem_euclid(samples_x1 as i64) as usize;
            // shift from x_lo = -NΛ/2 gives (-1)^m
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            col[r] = line[k] * (sign * scale);
        }
    }

    let grid: std::sync::Arc<[f64]> = x2_grid.into();
    let coeffs = table
        .into_iter()
        .map(|col| Pchip::new(grid.clone(), col))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuasiPeriodicComponents {
        copies,
        cell_period,
        band,
        x2_range,
        coeffs,
        zero: !any,
    })
}

impl QuasiPeriodicComponents {
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// `n̂_m(x₂)`.
    pub fn coefficient(&self, m: i64, x2: f64) -> Complex64 {
        if m.unsigned_abs() as usize > self.band || !self.inside(x2) {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(m + self.band as i64) as usize].eval(x2)
    }

    fn inside(&self, x2: f64) -> bool {
        x2 >= self.x2_range.0 && x2 <= self.x2_range.1
    }

    /// All coefficients at x₂, indexed by `m + band`.
    pub fn coefficients_at(&self, x2: f64, out: &mut Vec<Complex64>) {
        out.clear();
        if self.zero || !self.inside(x2) {
            out.resize(2 * self.band + 1, Complex64::new(0.0, 0.0));
            return;
        }
        let (seg, t) = self.coeffs[0].locate(x2);
        out.extend(self.coeffs.iter().map(|c| c.eval_at(seg, t)));
    }

    /// Values of all components `c_1..c_N` at x; `out[ℓ-1] = c_ℓ(x)`.
    pub fn components_at(&self, x1: f64, x2: f64, out: &mut [Complex64]) {
        let n = self.copies;
        assert_eq!(out.len(), n);
        out.fill(Complex64::new(0.0, 0.0));
        if self.zero || !self.inside(x2) {
            return;
        }
        let mut coeffs = Vec::with_capacity(2 * self.band + 1);
        self.coefficients_at(x2, &mut coeffs);
        let band = self.band as i64;
        let ni = n as i64;
        // m = ℓ + Nj with ℓ in 1..=N; walk j from its minimum upward
        let j_min = (-band - 1).div_euclid(ni);
        let j_max = (band - 1).div_euclid(ni);
        let step = Complex64::from_polar(1.0, 2.0 * PI * x1 / self.cell_period);
        let mut phase = Complex64::from_polar(1.0, 2.0 * PI * j_min as f64 * x1 / self.cell_period);
        for j in j_min..=j_max {
            for l in 1..=ni {
                let m = l + ni * j;
                if m.abs() <= band {
                    out[(l - 1) as usize] += coeffs[(m + band) as usize] * phase;
                }
            }
            phase *= step;
        }
    }

    pub fn component(&self, l: usize, x1: f64, x2: f64) -> Complex64 {
        let mut out = vec![Complex64::new(0.0, 0.0); self.copies];
        self.components_at(x1, x2, &mut out);
        out[l - 1]
    }

    /// `Σ_ℓ e^{2πiℓx₁/(NΛ)} c_ℓ(x)`.
    pub fn recombine(&self, x1: f64, x2: f64) -> Complex64 {
        let mut out = vec![Complex64::new(0.0, 0.0); self.copies];
        self.components_at(x1, x2, &mut out);
        let w = self.copies as f64 * self.cell_period;
        out.iter()
            .enumerate()
            .map(|(i, c)| c * Complex64::from_polar(1.0, 2.0 * PI * (i + 1) as f64 * x1 / w))
            .sum()
    }

    /// The band-truncated Fourier series `Σ_{|m|≤band} n̂_m(x₂) e^{2πimx₁/(NΛ)}`.
    pub fn truncated_series(&self, x1: f64, x2: f64) -> Complex64 {
        let mut coeffs = Vec::new();
        self.coefficients_at(x2, &mut coeffs);
        let w = self.copies as f64 * self.cell_period;
        let band = self.band as i64;
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * Complex64::from_polar(1.0, 2.0 * PI * (i as i64 - band) as f64 * x1 / w))
            .sum()
    }

    /// Nodal samples `[ℓ-1][node]` of every component on a mesh.
    pub fn nodal(&self, mesh: &PeriodicCellMesh) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::new(0.0, 0.0); mesh.nodes.len()]; self.copies];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.copies];
        for (i, p) in mesh.nodes.iter().enumerate() {
            self.components_at(p[0], p[1], &mut buf);
            for (l, v) in buf.iter().enumerate() {
                out[l][i] = *v;
            }
        }
        out
    }
}

/// `ñ = 1 + n2` above `h1`, 1 below.
#[inline]
pub fn tilde_at(layer2: &LayerIndex, h1: f64, x1: f64, x2: f64) -> f64 {
    if x2 > h1 {
        1.0 + layer2.eval(x1, x2)
    } else {
        1.0
    }
}

pub fn tilde_index(layer2: &LayerIndex, h1: f64, mesh: &PeriodicCellMesh) -> Vec<f64> {
    mesh.nodes.iter().map(|p| tilde_at(layer2, h1, p[0], p[1])).collect()
}

/// Everything about the medium the Bloch solver needs for one N.
#[derive(Debug, Clone)]
pub struct MediumModel {
    pub layer1: LayerIndex,
    pub layer2: LayerIndex,
    pub k: f64,
    pub copies: usize,
    pub cell_period: f64,
    pub h1: f64,
    pub windowed: WindowedLayer,
    pub components: QuasiPeriodicComponents,
}

impl MediumModel {
    pub fn new(
        layer1: LayerIndex,
        layer2: LayerIndex,
        k: f64,
        copies: usize,
        cell_period: f64,
        h1: f64,
        settings: DecompositionSettings,
    ) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("wavenumber must be positive, got {k}")));
        }
        let windowed = window_layer1(&layer1, copies, cell_period)?;
        let w = windowed.clone();
        let components = fourier_decompose(
            move |x1, x2| Complex64::new(w.eval(x1, x2), 0.0),
            copies,
            cell_period,
            settings,
            layer1.support,
        )?;
        Ok(MediumModel {
            layer1,
            layer2,
            k,
            copies,
            cell_period,
            h1,
            windowed,
            components,
        })
    }

    pub fn window_half_width(&self) -> f64 {
        self.windowed.half_width()
    }

    pub fn tilde_at(&self, x1: f64, x2: f64) -> f64 {
        tilde_at(&self.layer2, self.h1, x1, x2)
    }

    pub fn tilde_nodal(&self, mesh: &PeriodicCellMesh) -> Vec<f64> {
        tilde_index(&self.layer2, self.h1, mesh)
    }

    /// The true (unwindowed) index `n1 + n2`.
    pub fn full_index(&self, x1: f64, x2: f64) -> f64 {
        self.layer1.eval(x1, x2) + self.layer2.eval(x1, x2)
    }
}
