//! Brute-force reference: the NΛ-periodic problem solved directly on the
//! N-fold tiled mesh, with the same index, data and trace modes as the
//! Bloch system.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::assembly::{
    boundary_load, build_block_system, build_templates, AssemblyCounts, BasisKind, DtnModes, Quadrature,
    SourceTerms, QUAD_BARY,
};
use crate::error::{Error, Result, StageExt};
use crate::experiment::Problem;
use crate::medium::MediumModel;
use crate::mesh::{tile_mesh, PeriodicCellMesh, SupercellMesh};
use crate::solver::{solve, BlochField, SolverConfig, SolverMethod, SparseLu};
use crate::sparse::CsrMatrix;
use crate::spectral::{AlphaGrid, DtnSymbolTable};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Solution of the supercell problem.
#[derive(Debug, Clone)]
pub struct SupercellSolution {
    pub supermesh: SupercellMesh,
    /// Values at every supercell node, bottom row included.
    pub nodal: Vec<Complex64>,
    pub counts: AssemblyCounts,
    pub residual: f64,
}

/// Copy index of a supercell triangle.
fn copy_of_triangle(sm: &SupercellMesh, t: usize) -> usize {
    (t / 2) % sm.mesh.nx / sm.cell_nx
}

/// Solves the NΛ-periodic problem with index `ñ + n_N` and the periodized data
/// obtained from the Bloch data by the exact inverse transform.
pub fn solve_supercell(
    medium: &MediumModel,
    cell: &PeriodicCellMesh,
    grid: &AlphaGrid,
    truncation: usize,
    sources: &SourceTerms,
) -> Result<SupercellSolution> {
    let n = grid.copies;
    let supermesh = tile_mesh(cell, n)?;
    let sm = &supermesh.mesh;
    let k = medium.k;
    let lambda = grid.period;
    let scale = (2.0 * PI / lambda).sqrt() / n as f64;
    // phases e^{iα_j Λ r} of copy r
    let copy_phase = |j: usize, r: usize| Complex64::from_polar(1.0, grid.alphas[j] * lambda * r as f64);

    let quad = Quadrature::new(sm);
    let mut counts = AssemblyCounts::default();
    let comps = &medium.components;
    let coefficient = |t: usize, x: [f64; 2]| {
        let r = copy_of_triangle(&supermesh, t);
        let xc = [x[0] - r as f64 * lambda, x[1]];
        let mut b = vec![ZERO; n];
        comps.components_at(xc[0], xc[1], &mut b);
        let n_n: Complex64 = b
            .iter()
            .enumerate()
            .map(|(l, c)| c * Complex64::from_polar(1.0, grid.alphas[l] * x[0]))
            .sum();
        Complex64::new(medium.tilde_at(xc[0], xc[1]), 0.0) + n_n
    };
    let templates = build_templates(sm, &quad, coefficient, None::<fn(usize, [f64; 2]) -> Complex64>, &mut counts);

    // every block's modes Λ*q + α_j form the supercell mode set
    let dual = grid.dual_period();
    let mut modes = DtnModes {
        kappa: Vec::new(),
        sigma: Vec::new(),
    };
    for &alpha in &grid.alphas {
        let table = DtnSymbolTable::for_block(k, alpha, truncation, dual)?;
        for (_, xi, s) in table.modes() {
            modes.kappa.push(xi);
            modes.sigma.push(s);
        }
    }
    let matrix = templates.block_matrix(sm, k, 0.0, BasisKind::QuasiPeriodic, &modes);

    let mut rhs = vec![ZERO; sm.n_dofs];
    if let Some(vol) = &sources.volume {
        // supercell triangle of (copy, cell triangle)
        let nx_s = sm.nx;
        for (p, &qp) in vol.points.iter().enumerate() {
            let (tc, q) = (qp / 3, qp % 3);
            let (row, rest) = (tc / 2 / cell.nx, tc % (2 * cell.nx));
            for r in 0..n {
                let ts = 2 * (row * nx_s + r * cell.nx) + rest;
                let g: Complex64 = (0..n).map(|j| vol.values[p * n + j] * copy_phase(j, r)).sum::<Complex64>() * scale;
                let tri = sm.triangles[ts];
                let w = quad.weight(ts);
                for b in 0..3 {
                    if let Some(d) = sm.dof_map[tri[b]] {
                        rhs[d] -= g * (w * QUAD_BARY[q][b]);
                    }
                }
            }
        }
    }
    if let Some(bd) = &sources.boundary {
        let (mut kappa, mut coeffs) = (Vec::new(), Vec::new());
        for (j, tm) in bd.iter().enumerate() {
            let l = tm.truncation as i64;
            for q in -l..=l {
                kappa.push(dual * q as f64 + grid.alphas[j]);
                coeffs.push(tm.coeff(q) * scale);
            }
        }
        for (r, v) in rhs.iter_mut().zip(boundary_load(sm, &kappa, &coeffs)) {
            *r += v;
        }
    }
    let mut bottom = vec![ZERO; sm.nodes.len()];
    if let Some(d) = &sources.dirichlet {
        for r in 0..n {
            for i in 0..=cell.nx {
                let node = r * cell.nx + i;
                bottom[node] = (0..n).map(|j| d.values[j][i] * copy_phase(j, r)).sum::<Complex64>() * scale;
            }
        }
        let lp = templates.lifting_product(sm, k, 0.0, BasisKind::QuasiPeriodic, &bottom);
        for (r, v) in rhs.iter_mut().zip(lp) {
            *r -= v;
        }
    }

    let (x, residual) = solve_single(&matrix, &rhs)?;
    let nodal = sm
        .dof_map
        .iter()
        .enumerate()
        .map(|(node, d)| d.map_or(bottom[node], |d| x[d]))
        .collect();
    Ok(SupercellSolution {
        supermesh,
        nodal,
        counts,
        residual,
    })
}

fn solve_single(matrix: &CsrMatrix, rhs: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let bn = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if bn == 0.0 {
        return Ok((vec![ZERO; rhs.len()], 0.0));
    }
    let lu = SparseLu::factor(matrix)?;
    let mut x = rhs.to_vec();
    lu.solve_in_place(&mut x);
    let ax = matrix.mul(&x);
    let res = ax.iter().zip(rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / bn;
    if !(res <= 1e-10) {
        return Err(Error::SolverFailure {
            message: "supercell LU residual too large".into(),
            residual: res,
        });
    }
    Ok((x, res))
}

/// Relative node-wise L² difference between the supercell field and the
/// inverse-Bloch reconstruction, over all N copies.
pub fn compare_with_bloch(field: &BlochField, supercell: &SupercellSolution) -> Result<f64> {
    let n = field.grid.copies;
    if supercell.supermesh.copies != n {
        return Err(Error::Shape("supercell and Bloch field disagree on N".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for r in 0..n {
        let bloch = field.copy_nodal(r as i64);
        for (c, &s) in supercell.supermesh.cell_offset_map[r].iter().enumerate() {
            let u = supercell.nodal[s];
            num += (bloch[c] - u).norm_sqr();
            den += u.norm_sqr();
        }
    }
    if !(den > 0.0) {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    #[serde(rename = "N")]
    pub copies: usize,
    pub h: f64,
    pub block_dofs: usize,
    pub difference: f64,
    pub bloch_counts: AssemblyCounts,
    pub supercell_counts: AssemblyCounts,
    /// `(2 + N) M`.
    pub bloch_formula: u64,
    /// `3 N M`.
    pub supercell_formula: u64,
    pub bloch_residual: f64,
    pub supercell_residual: f64,
}

impl OracleComparison {
    pub fn counts_match(&self) -> bool {
        self.bloch_counts.total() == self.bloch_formula && self.supercell_counts.total() == self.supercell_formula
    }
}

/// Bloch solve in the quasi-periodic basis against the supercell solve.
pub fn run_oracle_check(problem: &Problem) -> Result<OracleComparison> {
    let n = problem.grid.copies;
    let (terms, _) = problem.source_terms().stage("sources")?;
    let truncation = problem.config.dtn_truncation.resolve().unwrap_or(problem.mesh.nx / 2);
    let system = build_block_system(
        &problem.mesh,
        &problem.medium,
        &problem.grid,
        BasisKind::QuasiPeriodic,
        Some(truncation),
        &terms,
    )
    .stage("assembly")?;
    let config = SolverConfig {
        method: SolverMethod::Direct,
        ..problem.config.solver.clone()
    };
    let (field, report) = solve(&system, &config).stage("solver")?;
    let sc = solve_supercell(&problem.medium, &problem.mesh, &problem.grid, truncation, &terms).stage("supercell")?;
    let m = problem.mesh.n_dofs as u64;
    Ok(OracleComparison {
        copies: n,
        h: problem.config.h,
        block_dofs: problem.mesh.n_dofs,
        difference: compare_with_bloch(&field, &sc)?,
        bloch_counts: system.counts,
        supercell_counts: sc.counts,
        bloch_formula: (2 + n as u64) * m,
        supercell_formula: 3 * n as u64 * m,
        bloch_residual: report.residual,
        supercell_residual: sc.residual,
    })
}
