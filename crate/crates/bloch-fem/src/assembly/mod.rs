//! Finite element matrices of the coupled Bloch system.
//!
//! Everything α-independent is integrated once per mesh into node-level
//! templates (stiffness, first-order shift, plain mass, coefficient masses).
//! Each block matrix is then a cheap recombination of the templates, mapped
//! from nodes to dofs, plus a dense DtN block on the top trace.
//!
//! Two trial spaces are supported, see [`BasisKind`].

mod coupling;
mod system;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use coupling::CouplingOperator;
pub use system::{build_block_system, BlockSystem, DirichletData, SourceTerms, VolumeData};

use crate::error::{Error, Result};
use crate::mesh::PeriodicCellMesh;
use crate::sparse::CsrMatrix;
use crate::spectral::DtnSymbolTable;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// How the quasi-periodic unknowns of block α are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// Periodic P1 hats for `w̃ = e^{-iαx₁} w`; the α-dependence moves into
    /// the shifted gradient `∇ + iαe₁` and the coupling factor `e^{iΛ*x₁}`.
    #[default]
    Modulated,
    /// P1 hats of the quasi-periodic field itself; left-column nodes carry
    /// the phase `e^{-iαΛ}`. Discretely equivalent to P1 on the supercell.
    QuasiPeriodic,
}

impl BasisKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "modulated" => Ok(BasisKind::Modulated),
            "quasi-periodic" | "quasiperiodic" => Ok(BasisKind::QuasiPeriodic),
            other => Err(Error::Config(format!("unknown basis '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Modulated => "modulated",
            BasisKind::QuasiPeriodic => "quasi-periodic",
        }
    }
}

/// Barycentric coordinates of the three-point rule; weights are area/3.
pub const QUAD_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Quadrature points, weights and hat gradients of every triangle.
#[derive(Debug, Clone)]
pub struct Quadrature {
    /// `points[3t + q]`.
    pub points: Vec<[f64; 2]>,
    pub areas: Vec<f64>,
    pub grads: Vec<[[f64; 2]; 3]>,
}

impl Quadrature {
    pub fn new(mesh: &PeriodicCellMesh) -> Self {
        let nt = mesh.triangles.len();
        let mut points = Vec::with_capacity(3 * nt);
        let mut areas = Vec::with_capacity(nt);
        let mut grads = Vec::with_capacity(nt);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = tri.map(|v| mesh.nodes[v]);
            let area = mesh.signed_area(t);
            let mut g = [[0.0; 2]; 3];
            for a in 0..3 {
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                g[a] = [
                    (p[b][1] - p[c][1]) / (2.0 * area),
                    (p[c][0] - p[b][0]) / (2.0 * area),
                ];
            }
            for bary in &QUAD_BARY {
                let x = (0..3).map(|a| bary[a] * p[a][0]).sum();
                let y = (0..3).map(|a| bary[a] * p[a][1]).sum();
                points.push([x, y]);
            }
            areas.push(area);
            grads.push(g);
        }
        Quadrature { points, areas, grads }
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.areas[t] / 3.0
    }
}

/// Local work done while integrating templates, in dof-row evaluations.
///
/// A gradient pass costs 2 per row (two partial-derivative products) and a
/// zeroth-order coefficient pass costs 1 per row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AssemblyCounts {
    pub gradient: u64,
    pub mass: u64,
}

impl AssemblyCounts {
    pub fn total(&self) -> u64 {
        self.gradient + self.mass
    }

    pub(crate) fn gradient_pass(&mut self, rows: usize) {
        self.gradient += 2 * rows as u64;
    }

    pub(crate) fn mass_pass(&mut self, rows: usize) {
        self.mass += rows as u64;
    }
}

/// Phase of a node in block α: `e^{-iαΛ}` on the aliased left column for the
/// quasi-periodic basis, 1 otherwise.
#[inline]
pub(crate) fn node_phase(mesh: &PeriodicCellMesh, basis: BasisKind, alpha: f64, node: usize) -> Complex64 {
    if basis == BasisKind::QuasiPeriodic && mesh.is_left(node) && !mesh.is_bottom(node) {
        Complex64::from_polar(1.0, -alpha * mesh.period)
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// α-independent node-level integrals on one mesh.
#[derive(Debug, Clone)]
pub struct CellTemplates {
    /// (test node, trial node) of each stored pair.
    pub pairs: Vec<(usize, usize)>,
    pub stiffness: Vec<f64>,
    /// `∫ φ_a ∂₁φ_b - ∂₁φ_a φ_b` for test b, trial a.
    pub shift: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mass weighted by the zeroth-order coefficient (ñ in the Bloch path).
    pub coefficient_mass: Vec<Complex64>,
    /// Optional second coefficient integrated in the same pass.
    pub extra_mass: Option<Vec<Complex64>>,
    /// Dof-level pattern including the dense top-trace block; values are 0.
    pub pattern: CsrMatrix,
    /// Pattern position of each pair, `usize::MAX` when a node has no dof.
    positions: Vec<usize>,
    /// Pairs with a dof test node and a Dirichlet trial node.
    lifting: Vec<usize>,
    /// `top_positions[b * nx + a]`.
    top_positions: Vec<usize>,
}

pub fn build_templates<F, G>(
    mesh: &PeriodicCellMesh,
    quad: &Quadrature,
    coefficient: F,
    extra: Option<G>,
    counts: &mut AssemblyCounts,
) -> CellTemplates
where
    F: Fn(usize, [f64; 2]) -> Complex64,
    G: Fn(usize, [f64; 2]) -> Complex64,
{
    let nt = mesh.triangles.len();
    let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(9 * nt);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for b in 0..3 {
            for a in 0..3 {
                entries.push((tri[b], tri[a], 9 * t + 3 * b + a));
            }
        }
    }
    entries.sort_unstable();

    let mut local_k = vec![0.0; 9 * nt];
    let mut local_s = vec![0.0; 9 * nt];
    let mut local_m = vec![0.0; 9 * nt];
    let mut local_c = vec![ZERO; 9 * nt];
    let mut local_x = extra.as_ref().map(|_| vec![ZERO; 9 * nt]);

    for t in 0..nt {
        let area = quad.areas[t];
        let g = &quad.grads[t];
        for b in 0..3 {
            for a in 0..3 {
                let idx = 9 * t + 3 * b + a;
                local_k[idx] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                local_s[idx] = area / 3.0 * (g[b][0] - g[a][0]);
                local_m[idx] = area / 12.0 * if a == b { 2.0 } else { 1.0 };
            }
        }
    }
    counts.gradient_pass(mesh.n_dofs);

    for t in 0..nt {
        let w = quad.weight(t);
        for (q, bary) in QUAD_BARY.iter().enumerate() {
            let x = quad.points[3 * t + q];
            let c = coefficient(t, x);
            let e = extra.as_ref().map(|f| f(t, x));
            for b in 0..3 {
                for a in 0..3 {
                    let idx = 9 * t + 3 * b + a;
                    let phi = w * bary[a] * bary[b];
                    local_c[idx] += c * phi;
                    if let (Some(lx), Some(e)) = (local_x.as_mut(), e) {
                        lx[idx] += e * phi;
                    }
                }
            }
        }
    }
    counts.mass_pass(mesh.n_dofs);

    let mut pairs = Vec::new();
    let (mut stiffness, mut shift, mut mass, mut coefficient_mass) = (vec![], vec![], vec![], vec![]);
    let mut extra_mass = local_x.as_ref().map(|_| Vec::new());
    let mut i = 0;
    while i < entries.len() {
        let key = (entries[i].0, entries[i].1);
        let (mut k, mut s, mut m, mut c, mut x) = (0.0, 0.0, 0.0, ZERO, ZERO);
        while i < entries.len() && (entries[i].0, entries[i].1) == key {
            let idx = entries[i].2;
            k += local_k[idx];
            s += local_s[idx];
            m += local_m[idx];
            c += local_c[idx];
            if let Some(lx) = &local_x {
                x += lx[idx];
            }
            i += 1;
        }
        pairs.push(key);
        stiffness.push(k);
        shift.push(s);
        mass.push(m);
        coefficient_mass.push(c);
        if let Some(em) = extra_mass.as_mut() {
            em.push(x);
        }
    }

    // dof pattern: FEM adjacency plus the dense top block
    let mut trip = Vec::with_capacity(pairs.len() + mesh.nx * mesh.nx);
    for &(b, a) in &pairs {
        if let (Some(db), Some(da)) = (mesh.dof_map[b], mesh.dof_map[a]) {
            trip.push((db, da, ZERO));
        }
    }
    let top = mesh.top_dofs();
    for b in top.clone() {
        for a in top.clone() {
            trip.push((b, a, ZERO));
        }
    }
    let pattern = CsrMatrix::from_triplets(mesh.n_dofs, mesh.n_dofs, trip);
    let mut positions = vec![usize::MAX; pairs.len()];
    let mut lifting = Vec::new();
    for (e, &(b, a)) in pairs.iter().enumerate() {
        match (mesh.dof_map[b], mesh.dof_map[a]) {
            (Some(db), Some(da)) => positions[e] = pattern.position(db, da).unwrap(),
            (Some(_), None) => lifting.push(e),
            _ => {}
        }
    }
    let mut top_positions = Vec::with_capacity(mesh.nx * mesh.nx);
    for b in top.clone() {
        for a in top.clone() {
            top_positions.push(pattern.position(b, a).unwrap());
        }
    }

    CellTemplates {
        pairs,
        stiffness,
        shift,
        mass,
        coefficient_mass,
        extra_mass,
        pattern,
        positions,
        lifting,
        top_positions,
    }
}

impl CellTemplates {
    /// Node-level value of the volume form at pair e for block α.
    #[inline]
    fn volume_entry(&self, e: usize, k: f64, alpha: f64, basis: BasisKind) -> Complex64 {
        let mut v = Complex64::new(self.stiffness[e], 0.0) - k * k * self.coefficient_mass[e];
        if basis == BasisKind::Modulated {
            v += I * (alpha * self.shift[e]) + alpha * alpha * self.mass[e];
        }
        v
    }

    /// Volume part of `A` (no DtN).
    pub fn volume_matrix(&self, mesh: &PeriodicCellMesh, k: f64, alpha: f64, basis: BasisKind) -> CsrMatrix {
        let mut vals = vec![ZERO; self.pattern.nnz()];
        for (e, &(b, a)) in self.pairs.iter().enumerate() {
            let p = self.positions[e];
            if p == usize::MAX {
                continue;
            }
            let phase = node_phase(mesh, basis, alpha, b).conj() * node_phase(mesh, basis, alpha, a);
            vals[p] += phase * self.volume_entry(e, k, alpha, basis);
        }
        self.pattern.with_values(vals)
    }

    /// Full block matrix: volume form plus DtN.
    pub fn block_matrix(
        &self,
        mesh: &PeriodicCellMesh,
        k: f64,
        alpha: f64,
        basis: BasisKind,
        dtn: &DtnModes,
    ) -> CsrMatrix {
        let mut m = self.volume_matrix(mesh, k, alpha, basis);
        let dense = dtn_dense(mesh, dtn);
        for (p, v) in self.top_positions.iter().zip(dense) {
            m.values[*p] += v;
        }
        m
    }

    /// The extra-mass template mapped to dofs with the phases of block α.
    pub fn extra_matrix(&self, mesh: &PeriodicCellMesh, alpha: f64, basis: BasisKind) -> Option<CsrMatrix> {
        let em = self.extra_mass.as_ref()?;
        let mut trip = Vec::new();
        for (e, &(b, a)) in self.pairs.iter().enumerate() {
            if let (Some(db), Some(da)) = (mesh.dof_map[b], mesh.dof_map[a]) {
                if em[e] != ZERO {
                    let phase = node_phase(mesh, basis, alpha, b).conj() * node_phase(mesh, basis, alpha, a);
                    trip.push((db, da, phase * em[e]));
                }
            }
        }
        Some(CsrMatrix::from_triplets(mesh.n_dofs, mesh.n_dofs, trip))
    }

    /// `A_node d` restricted to dof rows, for Dirichlet values `d` given on
    /// the bottom row (indexed by node id).
    pub fn lifting_product(
        &self,
        mesh: &PeriodicCellMesh,
        k: f64,
        alpha: f64,
        basis: BasisKind,
        bottom: &[Complex64],
    ) -> Vec<Complex64> {
        let mut out = vec![ZERO; mesh.n_dofs];
        for &e in &self.lifting {
            let (b, a) = self.pairs[e];
            let db = mesh.dof_map[b].unwrap();
            out[db] += node_phase(mesh, basis, alpha, b).conj() * self.volume_entry(e, k, alpha, basis) * bottom[a];
        }
        out
    }
}

/// Trace modes entering the DtN block: for each mode the frame wavenumber κ
/// (what multiplies the basis in its Fourier expansion) and the symbol σ.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnModes {
    pub kappa: Vec<f64>,
    pub sigma: Vec<Complex64>,
}

impl DtnModes {
    /// Modes of Bloch block α: physical wavenumbers `Λ*q + α`.
    pub fn for_block(table: &DtnSymbolTable, basis: BasisKind) -> Self {
        let (kappa, sigma) = table
            .modes()
            .map(|(q, xi, s)| {
                let kappa = match basis {
                    BasisKind::Modulated => table.dual * q as f64,
                    BasisKind::QuasiPeriodic => xi,
                };
                (kappa, s)
            })
            .unzip();
        DtnModes { kappa, sigma }
    }
}

#[inline]
fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// Dense DtN block on the top dofs, row = test, column = trial:
/// `-(Δ²/P) Σ_p σ_p sinc⁴(κ_pΔ/2) e^{-iκ_pΔ(a-b)}`.
pub fn dtn_dense(mesh: &PeriodicCellMesh, modes: &DtnModes) -> Vec<Complex64> {
    let nx = mesh.nx;
    let dx = mesh.dx();
    let mut by_offset = vec![ZERO; 2 * nx - 1];
    for (&kappa, &sigma) in modes.kappa.iter().zip(&modes.sigma) {
        let s2 = sinc(kappa * dx / 2.0).powi(2);
        let w = sigma * (s2 * s2);
        if w == ZERO {
            continue;
        }
        let step = Complex64::from_polar(1.0, -kappa * dx);
        let mut ph = Complex64::from_polar(1.0, kappa * dx * (nx - 1) as f64);
        for v in by_offset.iter_mut() {
            *v += w * ph;
            ph *= step;
        }
    }
    let scale = -dx * dx / mesh.period;
    let mut out = vec![ZERO; nx * nx];
    for b in 0..nx {
        for a in 0..nx {
            out[b * nx + a] = scale * by_offset[a + nx - 1 - b];
        }
    }
    out
}

/// Right-hand side of boundary data `f = e^{iαx₁} Σ_q F_q e^{iΛ*qx₁}` against the top hats:
/// `Δ Σ_q F_q sinc²(κ_qΔ/2) e^{iκ_q x_b}`.
pub fn boundary_load(mesh: &PeriodicCellMesh, kappa: &[f64], coeffs: &[Complex64]) -> Vec<Complex64> {
    let dx = mesh.dx();
    let mut out = vec![ZERO; mesh.n_dofs];
    let top = mesh.top_dofs();
    for (&k, &f) in kappa.iter().zip(coeffs) {
        if f == ZERO {
            continue;
        }
        let w = f * (dx * sinc(k * dx / 2.0).powi(2));
        for (i, d) in top.clone().enumerate() {
            let x = mesh.nodes[mesh.top_nodes[i]][0];
            out[d] += w * Complex64::from_polar(1.0, k * x);
        }
    }
    out
}

/// `assemble_A` as a standalone operation: templates with coefficient ñ,
/// then the block matrix for one α.
pub fn assemble_a<F>(
    mesh: &PeriodicCellMesh,
    tilde: F,
    k: f64,
    alpha: f64,
    dtn: &DtnSymbolTable,
    basis: BasisKind,
) -> Result<CsrMatrix>
where
    F: Fn([f64; 2]) -> f64,
{
    if dtn.truncation > mesh.nx {
        return Err(Error::Shape(format!(
            "DtN truncation {} exceeds the {} top-trace dofs",
            dtn.truncation, mesh.nx
        )));
    }
    if (dtn.k - k).abs() > 1e-14 * k || (dtn.alpha + alpha).abs() > 1e-12 {
        return Err(Error::Shape("DtN table built for a different k or alpha".into()));
    }
    let quad = Quadrature::new(mesh);
    let mut counts = AssemblyCounts::default();
    let t = build_templates(
        mesh,
        &quad,
        |_, x| Complex64::new(tilde(x), 0.0),
        None::<fn(usize, [f64; 2]) -> Complex64>,
        &mut counts,
    );
    Ok(t.block_matrix(mesh, k, alpha, basis, &DtnModes::for_block(dtn, basis)))
}

/// Which coupling block to assemble in the explicit form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingSign {
    /// `∫ c φ_a φ_b`.
    Plus,
    /// `∫ c e^{iΛ*x₁} φ_a φ_b`, used when the trial index wraps.
    Minus,
}

/// Explicit `B^±` of a component given by its values at the quadrature points.
pub fn assemble_b_qp(mesh: &PeriodicCellMesh, quad: &Quadrature, values: &[Complex64], sign: CouplingSign) -> CsrMatrix {
    let dual = 2.0 * PI / mesh.period;
    let mut trip = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let w = quad.weight(t);
        let mut local = [[ZERO; 3]; 3];
        let mut any = false;
        for (q, bary) in QUAD_BARY.iter().enumerate() {
            let mut c = values[3 * t + q];
            if c == ZERO {
                continue;
            }
            any = true;
            if sign == CouplingSign::Minus {
                c *= Complex64::from_polar(1.0, dual * quad.points[3 * t + q][0]);
            }
            for b in 0..3 {
                for a in 0..3 {
                    local[b][a] += c * (w * bary[a] * bary[b]);
                }
            }
        }
        if !any {
            continue;
        }
        for b in 0..3 {
            for a in 0..3 {
                if let (Some(db), Some(da)) = (mesh.dof_map[tri[b]], mesh.dof_map[tri[a]]) {
                    trip.push((db, da, local[b][a]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_dofs, mesh.n_dofs, trip)
}

/// Explicit `B^±` from nodal samples, linearly interpolated to the quadrature points.
pub fn assemble_b(mesh: &PeriodicCellMesh, nodal: &[Complex64], sign: CouplingSign) -> CsrMatrix {
    let quad = Quadrature::new(mesh);
    let mut values = vec![ZERO; quad.points.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for (q, bary) in QUAD_BARY.iter().enumerate() {
            values[3 * t + q] = (0..3).map(|a| nodal[tri[a]] * bary[a]).sum();
        }
    }
    assemble_b_qp(mesh, &quad, &values, sign)
}
