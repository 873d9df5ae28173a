//! The coupled N-block system `A_j w_j - k² Σ_i B(j,i) w_i = G_j`.

use std::io::Write;

use num_complex::Complex64;

use super::{
    boundary_load, build_templates, node_phase, AssemblyCounts, BasisKind, CellTemplates, CouplingOperator,
    DtnModes, Quadrature, QUAD_BARY, ZERO,
};
use crate::error::{Error, Result};
use crate::greens::TraceModes;
use crate::medium::MediumModel;
use crate::mesh::PeriodicCellMesh;
use crate::sparse::CsrMatrix;
use crate::spectral::{AlphaGrid, DtnSymbolTable};

/// Bloch samples `Jg(α_j, x)` of a volume source at the quadrature points
/// where it does not vanish; `values[p * N + j - 1]` belongs to `points[p]`.
#[derive(Debug, Clone, Default)]
pub struct VolumeData {
    pub points: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl VolumeData {
    /// `sampler(x, out)` fills `out[j-1] = Jg(α_j, x)` and returns false where g vanishes.
    pub fn sample<F>(mesh: &PeriodicCellMesh, copies: usize, mut sampler: F) -> Self
    where
        F: FnMut([f64; 2], &mut [Complex64]) -> bool,
    {
        let quad = Quadrature::new(mesh);
        let mut data = VolumeData::default();
        let mut buf = vec![ZERO; copies];
        for (p, x) in quad.points.iter().enumerate() {
            buf.fill(ZERO);
            if sampler(*x, &mut buf) && buf.iter().any(|v| *v != ZERO) {
                data.points.push(p);
                data.values.extend_from_slice(&buf);
            }
        }
        data
    }
}

/// Bloch samples of the Dirichlet data on the bottom row: `values[j-1][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletData {
    pub values: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, Default)]
pub struct SourceTerms {
    pub volume: Option<VolumeData>,
    pub boundary: Option<Vec<TraceModes>>,
    pub dirichlet: Option<DirichletData>,
}

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub mesh: PeriodicCellMesh,
    pub grid: AlphaGrid,
    pub k: f64,
    pub basis: BasisKind,
    pub truncation: usize,
    pub templates: CellTemplates,
    /// `A_j`, one per α.
    pub a_blocks: Vec<CsrMatrix>,
    pub coupling: CouplingOperator,
    pub rhs: Vec<Vec<Complex64>>,
    /// Dirichlet values in the frame of the unknowns, `[j-1][node]`.
    pub lifting: Option<Vec<Vec<Complex64>>>,
    pub dtn_tables: Vec<DtnSymbolTable>,
    pub counts: AssemblyCounts,
}

pub fn build_block_system(
    mesh: &PeriodicCellMesh,
    medium: &MediumModel,
    grid: &AlphaGrid,
    basis: BasisKind,
    truncation: Option<usize>,
    sources: &SourceTerms,
) -> Result<BlockSystem> {
    let n = grid.copies;
    if medium.copies != n {
        return Err(Error::Shape(format!("medium split into {} components, grid has {n}", medium.copies)));
    }
    if (medium.cell_period - mesh.period).abs() > 1e-12 * mesh.period {
        return Err(Error::Shape("medium and mesh periods differ".into()));
    }
    let k = medium.k;
    let truncation = truncation.unwrap_or(mesh.nx / 2);
    if truncation > mesh.nx {
        return Err(Error::Shape(format!(
            "DtN truncation {truncation} exceeds the {} top-trace dofs",
            mesh.nx
        )));
    }
    let quad = Quadrature::new(mesh);
    let dual = grid.dual_period();
    let mut counts = AssemblyCounts::default();
    let comps = &medium.components;

    // ñ and the diagonal component c_N e^{iΛ*x₁} share one pass
    let templates = build_templates(
        mesh,
        &quad,
        |_, x| Complex64::new(medium.tilde_at(x[0], x[1]), 0.0),
        Some(|_: usize, x: [f64; 2]| {
            comps.component(n, x[0], x[1]) * Complex64::from_polar(1.0, dual * x[0])
        }),
        &mut counts,
    );
    let coupling = CouplingOperator::new(mesh, &quad, grid, basis, |x, out| comps.components_at(x[0], x[1], out))?;
    counts.mass += (n as u64 - 1) * mesh.n_dofs as u64;

    let mut dtn_tables = Vec::with_capacity(n);
    let mut a_blocks = Vec::with_capacity(n);
    for &alpha in &grid.alphas {
        let table = DtnSymbolTable::for_block(k, alpha, truncation, dual)?;
        a_blocks.push(templates.block_matrix(mesh, k, alpha, basis, &DtnModes::for_block(&table, basis)));
        dtn_tables.push(table);
    }

    let mut rhs = vec![vec![ZERO; mesh.n_dofs]; n];
    if let Some(vol) = &sources.volume {
        add_volume_load(mesh, &quad, grid, basis, vol, &mut rhs)?;
    }
    if let Some(modes) = &sources.boundary {
        if modes.len() != n {
            return Err(Error::Shape(format!("{} boundary data blocks for N={n}", modes.len())));
        }
        for (j, tm) in modes.iter().enumerate() {
            let l = tm.truncation as i64;
            let kappa: Vec<f64> = (-l..=l)
                .map(|q| match basis {
                    BasisKind::Modulated => dual * q as f64,
                    BasisKind::QuasiPeriodic => dual * q as f64 + grid.alphas[j],
                })
                .collect();
            let load = boundary_load(mesh, &kappa, &tm.coeffs);
            for (r, v) in rhs[j].iter_mut().zip(load) {
                *r += v;
            }
        }
    }
    let lifting = match &sources.dirichlet {
        Some(d) => {
            if d.values.len() != n || d.values.iter().any(|v| v.len() < mesh.nx + 1) {
                return Err(Error::Shape("Dirichlet data must hold N blocks over the bottom row".into()));
            }
            let framed: Vec<Vec<Complex64>> = d
                .values
                .iter()
                .zip(&grid.alphas)
                .map(|(vals, &alpha)| {
                    let mut full = vec![ZERO; mesh.nodes.len()];
                    for &node in &mesh.bottom_nodes {
                        full[node] = match basis {
                            BasisKind::Modulated => vals[node] * Complex64::from_polar(1.0, -alpha * mesh.nodes[node][0]),
                            BasisKind::QuasiPeriodic => vals[node],
                        };
                    }
                    full
                })
                .collect();
            for (j, &alpha) in grid.alphas.iter().enumerate() {
                let lp = templates.lifting_product(mesh, k, alpha, basis, &framed[j]);
                for (r, v) in rhs[j].iter_mut().zip(lp) {
                    *r -= v;
                }
            }
            let zeros = vec![vec![ZERO; mesh.n_dofs]; n];
            coupling.apply_add(&zeros, Some(&framed), Complex64::new(k * k, 0.0), &mut rhs)?;
            Some(framed)
        }
        None => None,
    };

    Ok(BlockSystem {
        mesh: mesh.clone(),
        grid: grid.clone(),
        k,
        basis,
        truncation,
        templates,
        a_blocks,
        coupling,
        rhs,
        lifting,
        dtn_tables,
        counts,
    })
}

/// `rhs_j[b] -= ∫ Jg_j conj(ψ_b)` with the frame factor of the basis.
fn add_volume_load(
    mesh: &PeriodicCellMesh,
    quad: &Quadrature,
    grid: &AlphaGrid,
    basis: BasisKind,
    vol: &VolumeData,
    rhs: &mut [Vec<Complex64>],
) -> Result<()> {
    let n = grid.copies;
    if vol.values.len() != vol.points.len() * n {
        return Err(Error::Shape("volume data does not hold N values per point".into()));
    }
    for (p, &qp) in vol.points.iter().enumerate() {
        let (t, q) = (qp / 3, qp % 3);
        let tri = mesh.triangles[t];
        let w = quad.weight(t);
        let x = quad.points[qp];
        for (j, &alpha) in grid.alphas.iter().enumerate() {
            let mut g = vol.values[p * n + j];
            if basis == BasisKind::Modulated {
                g *= Complex64::from_polar(1.0, -alpha * x[0]);
            }
            for b in 0..3 {
                if let Some(d) = mesh.dof_map[tri[b]] {
                    let ph = node_phase(mesh, basis, alpha, tri[b]).conj();
                    rhs[j][d] -= g * ph * (w * QUAD_BARY[q][b]);
                }
            }
        }
    }
    Ok(())
}

impl BlockSystem {
    pub fn copies(&self) -> usize {
        self.grid.copies
    }

    pub fn block_dofs(&self) -> usize {
        self.mesh.n_dofs
    }

    pub fn total_dofs(&self) -> usize {
        self.grid.copies * self.mesh.n_dofs
    }

    /// `y_j = A_j x_j - k² Σ_i B(j,i) x_i`.
    pub fn apply(&self, x: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let mut y: Vec<Vec<Complex64>> = self.a_blocks.iter().zip(x).map(|(a, xj)| a.mul(xj)).collect();
        if y.len() != self.copies() {
            return Err(Error::Shape(format!("{} blocks for N={}", x.len(), self.copies())));
        }
        self.coupling
            .apply_add(x, None, Complex64::new(-self.k * self.k, 0.0), &mut y)?;
        Ok(y)
    }

    /// Diagonal block `A_j - k² B(j,j)` (1-based j).
    pub fn diagonal_block(&self, j: usize) -> Result<CsrMatrix> {
        let alpha = self.grid.alphas[j - 1];
        let extra = self
            .templates
            .extra_matrix(&self.mesh, alpha, self.basis)
            .ok_or_else(|| Error::Shape("templates lack the diagonal coupling".into()))?;
        let a = &self.a_blocks[j - 1];
        let mut trip: Vec<_> = a.triplets().collect();
        let s = Complex64::new(-self.k * self.k, 0.0);
        trip.extend(extra.triplets().map(|(r, c, v)| (r, c, s * v)));
        Ok(CsrMatrix::from_triplets(a.nrows, a.ncols, trip))
    }

    /// Explicit coupling block `B(j,i)`.
    pub fn coupling_block(&self, j: usize, i: usize) -> Result<CsrMatrix> {
        self.coupling.block(j, i, &self.mesh)
    }

    /// `B_m^+` (unwrapped, `1 ≤ m < N`) in the modulated frame.
    pub fn b_plus(&self, m: usize) -> Result<CsrMatrix> {
        let n = self.copies();
        if self.basis != BasisKind::Modulated || m == 0 || m >= n {
            return Err(Error::InvalidArgument(format!("B+ needs the modulated basis and 1 <= m < N (m={m})")));
        }
        self.coupling_block(m + 1, 1)
    }

    /// `B_m^-` (wrapped, carries `e^{iΛ*x₁}`, `1 ≤ m ≤ N`) in the modulated frame.
    pub fn b_minus(&self, m: usize) -> Result<CsrMatrix> {
        let n = self.copies();
        if self.basis != BasisKind::Modulated || m == 0 || m > n {
            return Err(Error::InvalidArgument(format!("B- needs the modulated basis and 1 <= m <= N (m={m})")));
        }
        self.coupling_block(1, 1 + n - m)
    }

    /// The whole `NM × NM` matrix; block j occupies rows `(j-1)M..jM`.
    pub fn global_matrix(&self) -> Result<CsrMatrix> {
        let (n, m) = (self.copies(), self.block_dofs());
        let s = Complex64::new(-self.k * self.k, 0.0);
        let mut trip = Vec::new();
        for j in 1..=n {
            let off_j = (j - 1) * m;
            trip.extend(self.a_blocks[j - 1].triplets().map(|(r, c, v)| (r + off_j, c + off_j, v)));
            if self.coupling.is_zero() {
                continue;
            }
            for i in 1..=n {
                let off_i = (i - 1) * m;
                let b = self.coupling_block(j, i)?;
                trip.extend(b.triplets().map(|(r, c, v)| (r + off_j, c + off_i, s * v)));
            }
        }
        Ok(CsrMatrix::from_triplets(n * m, n * m, trip))
    }

    pub fn stacked_rhs(&self) -> Vec<Complex64> {
        self.rhs.concat()
    }

    /// `‖G - Ax‖ / ‖G‖`.
    pub fn relative_residual(&self, x: &[Vec<Complex64>]) -> Result<f64> {
        let y = self.apply(x)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (yj, gj) in y.iter().zip(&self.rhs) {
            for (a, b) in yj.iter().zip(gj) {
                num += (b - a).norm_sqr();
                den += b.norm_sqr();
            }
        }
        Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
    }

    /// Nodal values of block j (1-based) including the lifted bottom row, in the
    /// frame of the unknowns, with the left column filled by its alias.
    pub fn node_values(&self, j: usize, x: &[Complex64]) -> Vec<Complex64> {
        let alpha = self.grid.alphas[j - 1];
        let mut out = vec![ZERO; self.mesh.nodes.len()];
        for (node, d) in self.mesh.dof_map.iter().enumerate() {
            out[node] = match d {
                Some(d) => x[*d] * node_phase(&self.mesh, self.basis, alpha, node),
                None => self.lifting.as_ref().map_or(ZERO, |l| l[j - 1][node]),
            };
        }
        out
    }

    /// Quasi-periodic value `w_j(x)` at a node from frame values.
    pub fn quasi_periodic_value(&self, j: usize, node: usize, frame_value: Complex64) -> Complex64 {
        match self.basis {
            BasisKind::Modulated => frame_value * Complex64::from_polar(1.0, self.grid.alphas[j - 1] * self.mesh.nodes[node][0]),
            BasisKind::QuasiPeriodic => frame_value,
        }
    }

    /// Triplet dump of the global matrix followed by the stacked right-hand side.
    pub fn dump(&self, out: &mut impl Write) -> Result<()> {
        self.global_matrix()?.dump(out)?;
        writeln!(out, "# rhs {}", self.total_dofs())?;
        for (r, v) in self.stacked_rhs().iter().enumerate() {
            writeln!(out, "{r} {:.17e} {:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    /// Wood anomalies met by any block, as `(j, mode)`.
    pub fn wood_anomalies(&self) -> Vec<(usize, i64)> {
        self.dtn_tables
            .iter()
            .enumerate()
            .flat_map(|(j, t)| t.wood_anomalies.iter().map(move |&q| (j + 1, q)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::medium::{DecompositionSettings, IndexGroup};
    use crate::mesh::build_cell_mesh;

    fn system(basis: BasisKind, n: usize) -> BlockSystem {
        let period = 2.0 * PI;
        let mesh = build_cell_mesh(period, 1.0, 3.0, 0.5).unwrap();
        let (l1, l2) = IndexGroup::Group1.layers();
        let settings = DecompositionSettings {
            samples_x1: 64 * n,
            samples_x2: 40,
            band: 8 * n,
        };
        let medium = MediumModel::new(l1, l2, 1.0, n, period, 2.0, settings).unwrap();
        let grid = AlphaGrid::new(n, period).unwrap();
        build_block_system(&mesh, &medium, &grid, basis, None, &SourceTerms::default()).unwrap()
    }

    #[test]
    fn diagonal_block_matches_coupling_block() {
        for basis in [BasisKind::Modulated, BasisKind::QuasiPeriodic] {
            let sys = system(basis, 3);
            for j in 1..=3 {
                let d = sys.diagonal_block(j).unwrap();
                let b = sys.coupling_block(j, j).unwrap();
                let a = &sys.a_blocks[j - 1];
                let k2 = sys.k * sys.k;
                let err = d
                    .triplets()
                    .map(|(r, c, v)| (v - (a.get(r, c) - k2 * b.get(r, c))).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-13, "{basis:?} j={j}: {err}");
            }
        }
    }

    #[test]
    fn apply_matches_global_matrix() {
        let sys = system(BasisKind::Modulated, 2);
        let m = sys.block_dofs();
        let x: Vec<Vec<Complex64>> = (0..2)
            .map(|j| (0..m).map(|i| Complex64::new((i as f64 * 0.37 + j as f64).sin(), (i as f64 * 0.11).cos())).collect())
            .collect();
        let y = sys.apply(&x).unwrap();
        let g = sys.global_matrix().unwrap().mul(&x.concat());
        let err = y.concat().iter().zip(&g).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert!(sys.b_plus(1).is_ok() && sys.b_minus(2).is_ok() && sys.b_plus(2).is_err());
    }

    #[test]
    fn counts_follow_the_pass_structure() {
        let sys = system(BasisKind::Modulated, 3);
        let m = sys.block_dofs() as u64;
        assert_eq!(sys.counts.total(), (2 + 3) * m);
    }
}
