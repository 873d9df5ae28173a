//! Structured triangulations of one periodic cell and of its N-fold tiling.
//!
//! Nodes live on an `(nx + 1) x (ny + 1)` grid stored row by row from the
//! bottom. The left column is geometrically present (triangles need its
//! coordinates) but carries no unknowns of its own: it is aliased to the
//! right column. The bottom row is Dirichlet and is excluded from the dof set.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};

/// Ratio between the largest triangle diameter and the requested `h`.
///
/// Every cell is at most `h` wide and `h` tall, so the diagonal is at most
/// `sqrt(2) h`.
pub const DIAMETER_CONSTANT: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCellMesh {
    /// Lateral period of the mesh (Λ for a cell, NΛ for a supercell).
    pub period: f64,
    /// Left end of the x₁ range; the mesh covers `(x_start, x_start + period]`.
    pub x_start: f64,
    pub h0: f64,
    pub height: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub bottom_nodes: Vec<usize>,
    /// Top-row nodes carrying dofs (left column excluded), ordered by x₁.
    pub top_nodes: Vec<usize>,
    /// Left-column node -> right-column partner.
    pub periodic_pairs: Vec<(usize, usize)>,
    pub dof_map: Vec<Option<usize>>,
    pub n_dofs: usize,
}

fn grid_count(length: f64, h: f64) -> usize {
    // guard against 2/0.04 = 50.000000000000004
    ((length / h) - 1e-9).ceil().max(1.0) as usize
}

pub fn build_cell_mesh(period: f64, h0: f64, height: f64, h: f64) -> Result<PeriodicCellMesh> {
    if !(period > 0.0) || !(h > 0.0) || !(height > h0) {
        return Err(Error::InvalidGeometry(format!(
            "need period > 0, h > 0 and H > h0 (period={period}, h={h}, h0={h0}, H={height})"
        )));
    }
    if h > (height - h0) / 2.0 + 1e-12 {
        return Err(Error::InvalidGeometry(format!(
            "h={h} exceeds half the layer thickness {}",
            (height - h0) / 2.0
        )));
    }
    let nx = grid_count(period, h);
    let ny = grid_count(height - h0, h);
    Ok(structured(period, -period / 2.0, h0, height, h, nx, ny))
}

fn structured(
    period: f64,
    x_start: f64,
    h0: f64,
    height: f64,
    h: f64,
    nx: usize,
    ny: usize,
) -> PeriodicCellMesh {
    let dx = period / nx as f64;
    let dy = (height - h0) / ny as f64;
    let stride = nx + 1;
    let mut nodes = Vec::with_capacity(stride * (ny + 1));
    for r in 0..=ny {
        let x2 = if r == ny { height } else { h0 + r as f64 * dy };
        for i in 0..=nx {
            let x1 = if i == nx { x_start + period } else { x_start + i as f64 * dx };
            nodes.push([x1, x2]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for r in 0..ny {
        for i in 0..nx {
            let v00 = r * stride + i;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut dof_map = vec![None; nodes.len()];
    for r in 1..=ny {
        for i in 1..=nx {
            dof_map[r * stride + i] = Some((r - 1) * nx + (i - 1));
        }
        dof_map[r * stride] = dof_map[r * stride + nx];
    }

    let periodic_pairs = (0..=ny).map(|r| (r * stride, r * stride + nx)).collect();

    PeriodicCellMesh {
        period,
        x_start,
        h0,
        height,
        h,
        nx,
        ny,
        bottom_nodes: (0..=nx).collect(),
        top_nodes: (1..=nx).map(|i| ny * stride + i).collect(),
        periodic_pairs,
        nodes,
        triangles,
        dof_map,
        n_dofs: nx * ny,
    }
}

impl PeriodicCellMesh {
    pub fn node_index(&self, i: usize, r: usize) -> usize {
        r * (self.nx + 1) + i
    }

    /// Column index of a node (0 is the aliased left column).
    pub fn column(&self, node: usize) -> usize {
        node % (self.nx + 1)
    }

    pub fn row(&self, node: usize) -> usize {
        node / (self.nx + 1)
    }

    pub fn is_left(&self, node: usize) -> bool {
        self.column(node) == 0
    }

    pub fn is_bottom(&self, node: usize) -> bool {
        self.row(node) == 0
    }

    pub fn dx(&self) -> f64 {
        self.period / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.height - self.h0) / self.ny as f64
    }

    /// Number of distinct nodes once the left column is merged.
    pub fn merged_node_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Dofs of the top trace in x₁ order; they are the last `nx` dofs.
    pub fn top_dofs(&self) -> std::ops::Range<usize> {
        self.n_dofs - self.nx..self.n_dofs
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let d = |p: usize, q: usize| {
            let (u, v) = (self.nodes[p], self.nodes[q]);
            ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt()
        };
        d(a, b).max(d(b, c)).max(d(a, c))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Expands dof values to every node; bottom nodes get `bottom` (or 0).
    pub fn expand<T: Copy + Default>(&self, dofs: &[T]) -> Vec<T> {
        self.dof_map
            .iter()
            .map(|d| d.map(|d| dofs[d]).unwrap_or_default())
            .collect()
    }

    /// Plain-text listing, one record per line:
    /// `node <index> <x1> <x2> <dof|->` then `tri <index> <a> <b> <c>`.
    pub fn dump(&self, out: &mut impl Write) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# cell mesh period={} x_start={} h0={} H={} h={} nx={} ny={} dofs={}",
            self.period, self.x_start, self.h0, self.height, self.h, self.nx, self.ny, self.n_dofs
        );
        for (i, p) in self.nodes.iter().enumerate() {
            let dof = self.dof_map[i].map_or("-".to_string(), |d| d.to_string());
            let _ = writeln!(s, "node {i} {:.17e} {:.17e} {dof}", p[0], p[1]);
        }
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(s, "tri {i} {} {} {}", t[0], t[1], t[2]);
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// N-fold x₁ tiling of a cell mesh.
///
/// Copy `m` (0-based) is the cell shifted by `mΛ`, so copy 0 is the cell
/// itself and the supercell covers `(-Λ/2, (N - 1/2)Λ]`. Any window of length
/// NΛ is equivalent for an NΛ-periodic problem.
#[derive(Debug, Clone)]
pub struct SupercellMesh {
    pub mesh: PeriodicCellMesh,
    pub copies: usize,
    pub cell_period: f64,
    pub cell_nx: usize,
    /// `cell_offset_map[m][c]` is the supercell node of cell node `c` in copy `m`.
    pub cell_offset_map: Vec<Vec<usize>>,
}

pub fn tile_mesh(cell: &PeriodicCellMesh, copies: usize) -> Result<SupercellMesh> {
    if copies < 1 {
        return Err(Error::InvalidArgument("tile count must be at least 1".into()));
    }
    let nx = cell.nx * copies;
    let mut mesh = structured(
        cell.period * copies as f64,
        cell.x_start,
        cell.h0,
        cell.height,
        cell.h,
        nx,
        cell.ny,
    );
    // reuse the cell coordinates so copies are exact translates
    let stride = nx + 1;
    let mut map = vec![vec![0usize; cell.nodes.len()]; copies];
    for (m, row) in map.iter_mut().enumerate() {
        let shift = m as f64 * cell.period;
        for (c, p) in cell.nodes.iter().enumerate() {
            let (i, r) = (cell.column(c), cell.row(c));
            let s = r * stride + m * cell.nx + i;
            row[c] = s;
            mesh.nodes[s] = [p[0] + shift, p[1]];
        }
    }
    Ok(SupercellMesh {
        mesh,
        copies,
        cell_period: cell.period,
        cell_nx: cell.nx,
        cell_offset_map: map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn standard_cell_counts() {
        let m = build_cell_mesh(2.0 * PI, 1.0, 3.0, 0.64).unwrap();
        assert_eq!((m.nx, m.ny), (10, 4));
        assert_eq!(m.merged_node_count(), 50);
        assert_eq!(m.top_nodes.len(), 10);
        assert_eq!(m.n_dofs, 40);
    }

    #[test]
    fn unit_cell() {
        let m = build_cell_mesh(1.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!((m.nx, m.ny), (2, 2));
        assert_eq!(m.triangles.len(), 8);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            build_cell_mesh(2.0 * PI, 1.0, 3.0, 0.0),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(build_cell_mesh(-1.0, 1.0, 3.0, 0.5).is_err());
        assert!(build_cell_mesh(1.0, 3.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn awkward_ratios_round_as_expected() {
        let m = build_cell_mesh(2.0 * PI, 1.0, 3.0, 0.04).unwrap();
        assert_eq!(m.ny, 50);
        assert_eq!(m.nx, 158);
    }

    #[test]
    fn positive_areas_and_total() {
        let m = build_cell_mesh(2.0 * PI, 1.0, 3.0, 0.32).unwrap();
        for t in 0..m.triangles.len() {
            assert!(m.signed_area(t) > 0.0);
            assert!(m.diameter(t) <= DIAMETER_CONSTANT * m.h * (1.0 + 1e-12));
        }
        let want = 2.0 * PI * 2.0;
        assert!((m.total_area() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn left_right_pairs_share_heights_and_dofs() {
        let m = build_cell_mesh(2.0 * PI, 1.0, 3.0, 0.64).unwrap();
        for &(l, r) in &m.periodic_pairs {
            assert_eq!(m.nodes[l][1], m.nodes[r][1]);
            assert!((m.nodes[r][0] - m.nodes[l][0] - m.period).abs() < 1e-14);
            assert_eq!(m.dof_map[l], m.dof_map[r]);
        }
        for &b in &m.bottom_nodes {
            assert_eq!(m.dof_map[b], None);
        }
    }

    #[test]
    fn tiling_counts_and_translation() {
        let cell = build_cell_mesh(1.0, 0.0, 1.0, 0.5).unwrap();
        let sc = tile_mesh(&cell, 3).unwrap();
        assert_eq!(sc.mesh.triangles.len(), 24);
        assert_eq!(sc.mesh.n_dofs, 3 * cell.n_dofs);
        for m in 0..3 {
            for (c, p) in cell.nodes.iter().enumerate() {
                let q = sc.mesh.nodes[sc.cell_offset_map[m][c]];
                assert_eq!(q, [p[0] + m as f64, p[1]]);
            }
        }
        assert!(tile_mesh(&cell, 0).is_err());
    }

    #[test]
    fn single_tile_is_the_cell() {
        let cell = build_cell_mesh(2.0 * PI, 1.0, 3.0, 0.64).unwrap();
        let sc = tile_mesh(&cell, 1).unwrap();
        assert_eq!(sc.mesh.nodes, cell.nodes);
        assert_eq!(sc.mesh.triangles, cell.triangles);
        assert_eq!(sc.mesh.dof_map, cell.dof_map);
    }

    #[test]
    fn dump_has_one_line_per_record() {
        let m = build_cell_mesh(1.0, 0.0, 1.0, 0.5).unwrap();
        let mut buf = Vec::new();
        m.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + m.nodes.len() + m.triangles.len());
    }
}
