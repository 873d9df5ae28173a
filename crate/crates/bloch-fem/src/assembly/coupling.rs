//! Matrix-free application of the block coupling `B`.
//!
//! Block j receives `Σ_i B(j,i) v_i`, where `B(j,i)` integrates the component
//! `c_m`, `m = (j - i) mod N` taken in `1..=N`, against the hats. In the
//! modulated frame the wrapped blocks (`i ≥ j`) carry `e^{iΛ*x₁}` in addition.
//! At a single quadrature point both cases are one circular convolution
//! over the block index with kernel `κ_m = e^{iα_m x₁} c_m(x)`, once the
//! modulated unknowns are twisted by `θ^j`, `θ = e^{iΛ*x₁/N}`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{node_phase, BasisKind, Quadrature, QUAD_BARY, ZERO};
use crate::error::{Error, Result};
use crate::mesh::PeriodicCellMesh;
use crate::sparse::CsrMatrix;
use crate::spectral::AlphaGrid;

/// One quadrature point inside the support of the lower layer.
#[derive(Debug, Clone)]
struct CouplingPoint {
    nodes: [usize; 3],
    /// Quadrature weight times the hat values.
    weighted_hats: [f64; 3],
    hats: [f64; 3],
    x1: f64,
}

#[derive(Clone)]
pub struct CouplingOperator {
    basis: BasisKind,
    grid: AlphaGrid,
    points: Vec<CouplingPoint>,
    /// `components[pt * N + (m - 1)] = c_m(x_pt)`.
    components: Vec<Complex64>,
    /// DFT over the block index of `κ_m`, stored at position `m mod N`.
    kernel_hat: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// `(node, dof)` lookup and left-column flags of the mesh.
    dof_map: Vec<Option<usize>>,
    left: Vec<bool>,
    n_dofs: usize,
    period: f64,
}

impl std::fmt::Debug for CouplingOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CouplingOperator")
            .field("basis", &self.basis)
            .field("copies", &self.grid.copies)
            .field("points", &self.points.len())
            .finish()
    }
}

impl CouplingOperator {
    /// `component_values(x, out)` fills `out[m-1] = c_m(x)`.
    pub fn new<F>(
        mesh: &PeriodicCellMesh,
        quad: &Quadrature,
        grid: &AlphaGrid,
        basis: BasisKind,
        mut component_values: F,
    ) -> Result<Self>
    where
        F: FnMut([f64; 2], &mut [Complex64]),
    {
        if (mesh.period - grid.period).abs() > 1e-12 * grid.period {
            return Err(Error::Shape("alpha grid and mesh have different periods".into()));
        }
        let n = grid.copies;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut points = Vec::new();
        let mut components = Vec::new();
        let mut kernel_hat = Vec::new();
        let mut buf = vec![ZERO; n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let w = quad.weight(t);
            for (q, bary) in QUAD_BARY.iter().enumerate() {
                let x = quad.points[3 * t + q];
                component_values(x, &mut buf);
                if buf.iter().all(|c| *c == ZERO) {
                    continue;
                }
                points.push(CouplingPoint {
                    nodes: *tri,
                    weighted_hats: bary.map(|b| w * b),
                    hats: *bary,
                    x1: x[0],
                });
                components.extend_from_slice(&buf);
                let start = kernel_hat.len();
                kernel_hat.resize(start + n, ZERO);
                for m in 1..=n {
                    let kappa = buf[m - 1] * Complex64::from_polar(1.0, grid.alphas[m - 1] * x[0]);
                    kernel_hat[start + m % n] = kappa;
                }
                fft.process(&mut kernel_hat[start..start + n]);
            }
        }
        Ok(CouplingOperator {
            basis,
            grid: grid.clone(),
            points,
            components,
            kernel_hat,
            fft,
            ifft,
            dof_map: mesh.dof_map.clone(),
            left: (0..mesh.nodes.len()).map(|v| mesh.is_left(v) && !mesh.is_bottom(v)).collect(),
            n_dofs: mesh.n_dofs,
            period: mesh.period,
        })
    }

    pub fn copies(&self) -> usize {
        self.grid.copies
    }

    pub fn support_points(&self) -> usize {
        self.points.len()
    }

    pub fn is_zero(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-block left-column phases `e^{-iα_jΛ}` (1 for the modulated basis).
    fn left_phases(&self) -> Vec<Complex64> {
        self.grid
            .alphas
            .iter()
            .map(|&a| match self.basis {
                BasisKind::Modulated => Complex64::new(1.0, 0.0),
                BasisKind::QuasiPeriodic => Complex64::from_polar(1.0, -a * self.period),
            })
            .collect()
    }

    /// `out_j += scale Σ_i B(j,i) x_i`.
    ///
    /// `bottom`, if given, holds per block the Dirichlet values on the bottom
    /// row (indexed by node id) that complete `x` to a node field.
    pub fn apply_add(
        &self,
        x: &[Vec<Complex64>],
        bottom: Option<&[Vec<Complex64>]>,
        scale: Complex64,
        out: &mut [Vec<Complex64>],
    ) -> Result<()> {
        let n = self.grid.copies;
        if x.len() != n || out.len() != n || x.iter().chain(out.iter()).any(|v| v.len() != self.n_dofs) {
            return Err(Error::Shape(format!(
                "coupling expects {n} blocks of {} dofs",
                self.n_dofs
            )));
        }
        let phases = self.left_phases();
        let dual = 2.0 * std::f64::consts::PI / self.period;
        let mut v = vec![ZERO; n];
        let mut theta_pows = vec![Complex64::new(1.0, 0.0); n + 1];
        for (pt, point) in self.points.iter().enumerate() {
            if self.basis == BasisKind::Modulated {
                let theta = Complex64::from_polar(1.0, dual * point.x1 / n as f64);
                for j in 1..=n {
                    theta_pows[j] = theta_pows[j - 1] * theta;
                }
            }
            // gather the field at the point, block j stored at j mod N
            for j in 1..=n {
                let mut acc = ZERO;
                for a in 0..3 {
                    let node = point.nodes[a];
                    let val = match self.dof_map[node] {
                        Some(d) if self.left[node] => x[j - 1][d] * phases[j - 1],
                        Some(d) => x[j - 1][d],
                        None => bottom.map_or(ZERO, |b| b[j - 1][node]),
                    };
                    acc += val * point.hats[a];
                }
                if self.basis == BasisKind::Modulated {
                    acc *= theta_pows[j];
                }
                v[j % n] = acc;
            }
            self.fft.process(&mut v);
            let kh = &self.kernel_hat[pt * n..(pt + 1) * n];
            for (vi, k) in v.iter_mut().zip(kh) {
                *vi *= k;
            }
            self.ifft.process(&mut v);
            let inv_n = 1.0 / n as f64;
            for j in 1..=n {
                let mut z = v[j % n] * inv_n * scale;
                if self.basis == BasisKind::Modulated {
                    z /= theta_pows[j];
                }
                for b in 0..3 {
                    let node = point.nodes[b];
                    if let Some(d) = self.dof_map[node] {
                        let ph = if self.left[node] { phases[j - 1].conj() } else { Complex64::new(1.0, 0.0) };
                        out[j - 1][d] += z * ph * point.weighted_hats[b];
                    }
                }
            }
        }
        Ok(())
    }

    /// Explicit `B(j,i)` for 1-based block indices.
    pub fn block(&self, j: usize, i: usize, mesh: &PeriodicCellMesh) -> Result<CsrMatrix> {
        let n = self.grid.copies;
        if j == 0 || i == 0 || j > n || i > n {
            return Err(Error::InvalidArgument(format!("block ({j},{i}) outside 1..={n}")));
        }
        let wrapped = i >= j;
        let m = if wrapped { j + n - i } else { j - i };
        let (aj, ai) = (self.grid.alphas[j - 1], self.grid.alphas[i - 1]);
        let dual = 2.0 * std::f64::consts::PI / self.period;
        let mut trip = Vec::with_capacity(9 * self.points.len());
        for (pt, point) in self.points.iter().enumerate() {
            let mut c = self.components[pt * n + m - 1];
            if c == ZERO {
                continue;
            }
            match self.basis {
                BasisKind::Modulated if wrapped => c *= Complex64::from_polar(1.0, dual * point.x1),
                BasisKind::Modulated => {}
                BasisKind::QuasiPeriodic => {
                    c *= Complex64::from_polar(1.0, self.grid.alphas[m - 1] * point.x1);
                }
            }
            for b in 0..3 {
                let Some(db) = self.dof_map[point.nodes[b]] else { continue };
                let pb = node_phase(mesh, self.basis, aj, point.nodes[b]).conj();
                for a in 0..3 {
                    let Some(da) = self.dof_map[point.nodes[a]] else { continue };
                    let pa = node_phase(mesh, self.basis, ai, point.nodes[a]);
                    trip.push((db, da, c * pb * pa * (point.weighted_hats[b] * point.hats[a])));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(self.n_dofs, self.n_dofs, trip))
    }
}
