//! Linear solves of the block system, field reconstruction and trace errors.

use std::f64::consts::PI;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use log::{debug, warn};
use num_complex::Complex64;

use crate::assembly::{BasisKind, BlockSystem};
use crate::error::{Error, Result};
use crate::mesh::PeriodicCellMesh;
use crate::sparse::CsrMatrix;
use crate::spectral::AlphaGrid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Direct,
    Iterative,
    /// Direct while the assembled global matrix stays small, iterative otherwise.
    #[default]
    Auto,
}

impl SolverMethod {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "direct" => Ok(SolverMethod::Direct),
            "iterative" | "gmres" => Ok(SolverMethod::Iterative),
            "auto" => Ok(SolverMethod::Auto),
            other => Err(Error::Config(format!("unknown solver method '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverMethod::Direct => "direct",
            SolverMethod::Iterative => "iterative",
            SolverMethod::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub direct_tolerance: f64,
    pub iterative_tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
    /// Auto switches to GMRES above this many global nonzeros.
    pub auto_nnz_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolverMethod::Auto,
            direct_tolerance: 1e-10,
            iterative_tolerance: 1e-8,
            restart: 60,
            max_iterations: 3000,
            auto_nnz_limit: 3_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SolveReport {
    pub method: SolverMethod,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
    pub warnings: Vec<String>,
}

/// Solution of the block system: one vector of unknowns per α, in the
/// frame of the basis, plus what is needed to evaluate it.
#[derive(Debug, Clone)]
pub struct BlochField {
    pub blocks: Vec<Vec<Complex64>>,
    pub grid: AlphaGrid,
    pub basis: BasisKind,
    pub mesh: PeriodicCellMesh,
    /// Bottom-row values per block, `[j-1][node]`, in the frame of the basis.
    pub lifting: Option<Vec<Vec<Complex64>>>,
}

impl BlochField {
    pub fn new(system: &BlockSystem, blocks: Vec<Vec<Complex64>>) -> Result<Self> {
        if blocks.len() != system.copies() || blocks.iter().any(|b| b.len() != system.block_dofs()) {
            return Err(Error::Shape("block vectors do not match the system".into()));
        }
        if blocks.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::SolverFailure {
                message: "non-finite entries in the solution".into(),
                residual: f64::NAN,
            });
        }
        Ok(BlochField {
            blocks,
            grid: system.grid.clone(),
            basis: system.basis,
            mesh: system.mesh.clone(),
            lifting: system.lifting.clone(),
        })
    }

    /// Quasi-periodic values `w_j` at every node of the cell mesh (1-based j).
    pub fn quasi_periodic_nodal(&self, j: usize) -> Vec<Complex64> {
        let alpha = self.grid.alphas[j - 1];
        let mesh = &self.mesh;
        (0..mesh.nodes.len())
            .map(|node| {
                let frame = match mesh.dof_map[node] {
                    Some(d) => {
                        let v = self.blocks[j - 1][d];
                        if self.basis == BasisKind::QuasiPeriodic && mesh.is_left(node) {
                            v * Complex64::from_polar(1.0, -alpha * mesh.period)
                        } else {
                            v
                        }
                    }
                    None => self.lifting.as_ref().map_or(ZERO, |l| l[j - 1][node]),
                };
                match self.basis {
                    BasisKind::Modulated => frame * Complex64::from_polar(1.0, alpha * mesh.nodes[node][0]),
                    BasisKind::QuasiPeriodic => frame,
                }
            })
            .collect()
    }

    /// Physical field `u(x + Λm)` at every node of the cell mesh.
    pub fn copy_nodal(&self, m: i64) -> Vec<Complex64> {
        let n = self.grid.copies;
        let scale = (2.0 * PI / self.grid.period).sqrt() / n as f64;
        let mut out = vec![ZERO; self.mesh.nodes.len()];
        for j in 1..=n {
            let phase = Complex64::from_polar(scale, self.grid.alphas[j - 1] * self.grid.period * m as f64);
            for (o, w) in out.iter_mut().zip(self.quasi_periodic_nodal(j)) {
                *o += phase * w;
            }
        }
        out
    }

    /// x₁ of the top-row nodes, left column included, and the node ids.
    pub fn top_row(&self) -> (Vec<f64>, Vec<usize>) {
        let mesh = &self.mesh;
        let nodes: Vec<usize> = (0..=mesh.nx).map(|i| mesh.node_index(i, mesh.ny)).collect();
        (nodes.iter().map(|&v| mesh.nodes[v][0]).collect(), nodes)
    }
}

/// Nodal samples of `u` on the top boundary at arbitrary x₁.
///
/// Values are interpolated linearly in the frame of the basis (which is what
/// the finite element trace is), then modulated, and summed over α.
pub fn reconstruct_on_trace(field: &BlochField, x1: &[f64]) -> Vec<Complex64> {
    let mesh = &field.mesh;
    let n = field.grid.copies;
    let scale = (2.0 * PI / field.grid.period).sqrt() / n as f64;
    let (_, top_nodes) = field.top_row();
    let frames: Vec<Vec<Complex64>> = (1..=n)
        .map(|j| {
            let alpha = field.grid.alphas[j - 1];
            let qp = field.quasi_periodic_nodal(j);
            top_nodes
                .iter()
                .map(|&v| match field.basis {
                    BasisKind::Modulated => qp[v] * Complex64::from_polar(1.0, -alpha * mesh.nodes[v][0]),
                    BasisKind::QuasiPeriodic => qp[v],
                })
                .collect()
        })
        .collect();
    let dx = mesh.dx();
    x1.iter()
        .map(|&x| {
            let shift = ((x - mesh.x_start) / mesh.period).floor();
            let local = x - shift * mesh.period;
            let s = ((local - mesh.x_start) / dx).clamp(0.0, mesh.nx as f64);
            let seg = (s.floor() as usize).min(mesh.nx - 1);
            let t = s - seg as f64;
            let mut u = ZERO;
            for j in 1..=n {
                let alpha = field.grid.alphas[j - 1];
                let f = &frames[j - 1];
                let w = match field.basis {
                    BasisKind::Modulated => {
                        (f[seg] * (1.0 - t) + f[seg + 1] * t) * Complex64::from_polar(1.0, alpha * local)
                    }
                    BasisKind::QuasiPeriodic => f[seg] * (1.0 - t) + f[seg + 1] * t,
                };
                u += w * Complex64::from_polar(1.0, alpha * shift * mesh.period);
            }
            u * scale
        })
        .collect()
}

/// Trapezoid weights for sorted abscissae.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.len()];
    for i in 1..x.len() {
        let d = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += d;
        w[i] += d;
    }
    w
}

/// `‖u - u_ref‖ / ‖u_ref‖` in the weighted discrete L² norm.
pub fn relative_trace_error(u: &[Complex64], reference: &[Complex64], weights: &[f64]) -> Result<f64> {
    if u.len() != reference.len() || u.len() != weights.len() {
        return Err(Error::Shape("trace samples and weights differ in length".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((a, b), w) in u.iter().zip(reference).zip(weights) {
        num += w * (a - b).norm_sqr();
        den += w * b.norm_sqr();
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateReference);
    }
    Ok((num / den).sqrt())
}

/// Estimated nonzeros of the assembled global matrix.
pub fn global_nnz_estimate(system: &BlockSystem) -> usize {
    let n = system.copies();
    let diag: usize = system.a_blocks.iter().map(|a| a.nnz()).sum();
    // each support point touches a 3x3 stencil in every block pair
    diag + system.coupling.support_points() / 6 * 7 * n * n
}

pub fn solve(system: &BlockSystem, config: &SolverConfig) -> Result<(BlochField, SolveReport)> {
    let started = Instant::now();
    let method = match config.method {
        SolverMethod::Auto => {
            if global_nnz_estimate(system) <= config.auto_nnz_limit {
                SolverMethod::Direct
            } else {
                SolverMethod::Iterative
            }
        }
        m => m,
    };
    let mut warnings: Vec<String> = system
        .wood_anomalies()
        .into_iter()
        .map(|(j, q)| format!("Wood anomaly in block {j}, mode {q}"))
        .collect();
    let (blocks, iterations) = if system.rhs.iter().flatten().all(|v| *v == ZERO) {
        (vec![vec![ZERO; system.block_dofs()]; system.copies()], 0)
    } else {
        match method {
            SolverMethod::Direct => (solve_direct(system)?, 0),
            _ => solve_iterative(system, config, &mut warnings)?,
        }
    };
    let residual = system.relative_residual(&blocks)?;
    let tol = match method {
        SolverMethod::Direct => config.direct_tolerance,
        _ => config.iterative_tolerance,
    };
    // the GMRES estimate can drift slightly from the true residual
    let slack = if method == SolverMethod::Direct { 1.0 } else { 10.0 };
    if !(residual <= tol * slack) {
        return Err(Error::SolverFailure {
            message: format!("{} solve missed the tolerance {tol:.1e}", method.name()),
            residual,
        });
    }
    let field = BlochField::new(system, blocks)?;
    let report = SolveReport {
        method,
        iterations,
        residual,
        wall_time: started.elapsed().as_secs_f64(),
        warnings,
    };
    debug!("solve: {report:?}");
    Ok((field, report))
}

/// Sparse LU of one matrix.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, Complex64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        let lu = matrix.to_faer()?.sp_lu().map_err(|e| Error::SolverFailure {
            message: format!("sparse LU failed: {e:?}"),
            residual: f64::INFINITY,
        })?;
        Ok(SparseLu { lu, n: matrix.nrows })
    }

    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let mut b = Mat::<Complex64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = b[(i, 0)];
        }
    }
}

fn solve_direct(system: &BlockSystem) -> Result<Vec<Vec<Complex64>>> {
    let global = system.global_matrix()?;
    let lu = SparseLu::factor(&global)?;
    let mut x = system.stacked_rhs();
    lu.solve_in_place(&mut x);
    let m = system.block_dofs();
    Ok(x.chunks(m).map(|c| c.to_vec()).collect())
}

/// Block-Jacobi preconditioner: LU of every diagonal block `A_j - k² B(j,j)`.
pub struct BlockJacobi {
    factors: Vec<SparseLu>,
}

impl BlockJacobi {
    pub fn new(system: &BlockSystem) -> Result<Self> {
        let factors = (1..=system.copies())
            .map(|j| SparseLu::factor(&system.diagonal_block(j)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockJacobi { factors })
    }

    pub fn apply(&self, x: &mut [Vec<Complex64>]) {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        if threads <= 1 || x.len() < 2 {
            for (f, v) in self.factors.iter().zip(x.iter_mut()) {
                f.solve_in_place(v);
            }
            return;
        }
        let chunk = x.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (fs, vs) in self.factors.chunks(chunk).zip(x.chunks_mut(chunk)) {
                s.spawn(move || {
                    for (f, v) in fs.iter().zip(vs.iter_mut()) {
                        f.solve_in_place(v);
                    }
                });
            }
        });
    }
}

fn solve_iterative(
    system: &BlockSystem,
    config: &SolverConfig,
    warnings: &mut Vec<String>,
) -> Result<(Vec<Vec<Complex64>>, usize)> {
    let pre = BlockJacobi::new(system)?;
    let m = system.block_dofs();
    let split = |v: &[Complex64]| -> Vec<Vec<Complex64>> { v.chunks(m).map(|c| c.to_vec()).collect() };
    let mut op_err = None;
    let op = |v: &[Complex64]| -> Vec<Complex64> {
        let mut blocks = split(v);
        pre.apply(&mut blocks);
        match system.apply(&blocks) {
            Ok(y) => y.concat(),
            Err(e) => {
                op_err.get_or_insert(e.to_string());
                vec![ZERO; v.len()]
            }
        }
    };
    let b = system.stacked_rhs();
    let out = gmres(op, &b, config.iterative_tolerance, config.restart, config.max_iterations);
    let (y, iterations, residual, history) = out;
    if let Some(e) = op_err {
        return Err(Error::SolverFailure { message: e, residual });
    }
    if residual > config.iterative_tolerance {
        warn!("GMRES stopped at {residual:.3e} after {iterations} iterations");
        return Err(Error::NotConverged {
            iterations,
            residual,
            history,
        });
    }
    warnings.extend(
        (iterations > config.max_iterations / 2)
            .then(|| format!("GMRES needed {iterations} iterations")),
    );
    let mut x = split(&y);
    pre.apply(&mut x);
    Ok((x, iterations))
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES with zero initial guess for `op(y) = b`.
///
/// Returns `(y, iterations, relative residual, residual history)`; the
/// residual is recomputed explicitly at every restart.
pub fn gmres<F>(
    mut op: F,
    b: &[Complex64],
    tol: f64,
    restart: usize,
    max_iterations: usize,
) -> (Vec<Complex64>, usize, f64, Vec<f64>)
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![ZERO; n];
    let mut history = vec![1.0];
    if bnorm == 0.0 {
        return (x, 0, 0.0, history);
    }
    let restart = restart.max(1);
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;
    while iterations < max_iterations {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<Complex64>> = Vec::new();
        let mut cs: Vec<Complex64> = Vec::new();
        let mut sn: Vec<Complex64> = Vec::new();
        let mut g = vec![Complex64::new(beta, 0.0)];
        let mut steps = 0;
        for k in 0..restart {
            if iterations >= max_iterations {
                break;
            }
            let mut w = op(&basis[k]);
            iterations += 1;
            steps = k + 1;
            let mut h = vec![ZERO; k + 2];
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let dot: Complex64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    h[i] += dot;
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= dot * vi;
                    }
                }
            }
            let wn = norm(&w);
            h[k + 1] = Complex64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i] + sn[i].conj() * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = (h[k].norm_sqr() + h[k + 1].norm_sqr()).sqrt();
            let (c, s) = if denom == 0.0 {
                (Complex64::new(1.0, 0.0), ZERO)
            } else {
                (h[k] / denom, h[k + 1] / denom)
            };
            h[k] = c.conj() * h[k] + s.conj() * h[k + 1];
            h[k + 1] = ZERO;
            g.push(-s * g[k]);
            g[k] = c.conj() * g[k];
            cs.push(c);
            sn.push(s);
            hess.push(h);
            let est = g[k + 1].norm() / bnorm;
            history.push(est);
            if est <= tol * 0.5 || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution on the triangular factor
        let mut coef = vec![ZERO; steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for j in i + 1..steps {
                s -= hess[j][i] * coef[j];
            }
            coef[i] = s / hess[i][i];
        }
        for (c, v) in coef.iter().zip(&basis) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += c * vi;
            }
        }
        let ax = op(&x);
        r = b.iter().zip(&ax).map(|(a, b)| a - b).collect();
        rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= tol {
            break;
        }
    }
    (x, iterations, rel, history)
}
