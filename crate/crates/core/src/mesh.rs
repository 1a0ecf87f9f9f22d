//! Uniform quadrilateral meshes of the L-shaped domain
//! `(-1,1)^2 \ [0,1) x (-1,0]` and the boundary curve as a periodic 1D mesh.
//!
//! Degrees of freedom are numbered interior-first: indices `0..n_interior`
//! are interior nodes (row-major over the grid), indices
//! `n_interior..n_dofs` trace the boundary counterclockwise starting at the
//! corner `(-1,-1)`.
//!
//! Cell vertices are counterclockwise:
//! - 0: lower-left
//! - 1: lower-right
//! - 2: upper-right
//! - 3: upper-left

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Largest refinement level accepted by [`build_lshape_mesh`].
pub const MAX_LEVEL: u32 = 11;

const ABSENT: usize = usize::MAX;

/// True iff `(x, y)` lies in the open L-shaped domain.
pub fn point_in_domain(x: f64, y: f64) -> bool {
    let in_square = x > -1.0 && x < 1.0 && y > -1.0 && y < 1.0;
    in_square && !(x >= 0.0 && y <= 0.0)
}

/// Uniform mesh of the L-shape made of `3 * 4^n` squares of side `2^-n`.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    level: u32,
    nodes: Vec<[f64; 2]>,
    cells: Vec<[usize; 4]>,
    n_interior: usize,
    n_boundary: usize,
    /// Grid points per direction minus one (`2^(n+1)`).
    divisions: usize,
    /// `(divisions + 1)^2` lookup from grid point to node id.
    node_grid: Vec<usize>,
    /// `divisions^2` lookup from lower-left grid corner to cell id.
    cell_grid: Vec<usize>,
}

impl QuadMesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn n_dofs(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        dof >= self.n_interior
    }

    /// Side length of every cell, `2^-n`.
    pub fn cell_side(&self) -> f64 {
        2.0 / self.divisions as f64
    }

    /// Cell diameter `sqrt(2) * 2^-n`.
    pub fn mesh_size(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.cell_side()
    }

    /// Number of cell sides per direction of the bounding square.
    pub fn divisions(&self) -> usize {
        self.divisions
    }

    /// Node at grid position `(i, j)` (x index, y index), if it belongs to the mesh.
    pub fn node_at(&self, i: usize, j: usize) -> Option<usize> {
        let g = self.divisions + 1;
        if i >= g || j >= g {
            return None;
        }
        let id = self.node_grid[j * g + i];
        (id != ABSENT).then_some(id)
    }

    /// Cell whose lower-left corner is grid position `(i, j)`.
    pub fn cell_at(&self, i: usize, j: usize) -> Option<usize> {
        let d = self.divisions;
        if i >= d || j >= d {
            return None;
        }
        let id = self.cell_grid[j * d + i];
        (id != ABSENT).then_some(id)
    }

    /// Cell containing `(x, y)` and the local coordinates in `[0,1]^2`.
    ///
    /// Points on shared edges are attributed to the cell that owns them from
    /// the lower-left side when that cell exists.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 2])> {
        let side = self.cell_side();
        let fx = (x + 1.0) / side;
        let fy = (y + 1.0) / side;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.divisions as f64 && fy <= self.divisions as f64) {
            return None;
        }
        let last = self.divisions - 1;
        let candidates = |f: f64| {
            let base = (f.floor() as usize).min(last);
            // On a grid line the neighbour below is also a valid owner.
            if f == f.floor() && base > 0 && f as usize == base {
                [base, base - 1]
            } else {
                [base, base]
            }
        };
        for ci in candidates(fx) {
            for cj in candidates(fy) {
                if let Some(cell) = self.cell_at(ci, cj) {
                    let xi = (fx - ci as f64).clamp(0.0, 1.0);
                    let eta = (fy - cj as f64).clamp(0.0, 1.0);
                    return Some((cell, [xi, eta]));
                }
            }
        }
        None
    }

    /// Lower-left corner of `cell`.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        self.nodes[self.cells[cell][0]]
    }

    /// Evaluates the Q1 function with nodal values `coeffs` at `(x, y)`.
    pub fn evaluate(&self, coeffs: &[f64], x: f64, y: f64) -> Option<f64> {
        let (cell, [xi, eta]) = self.locate(x, y)?;
        let c = &self.cells[cell];
        let v = coeffs[c[0]] * (1.0 - xi) * (1.0 - eta)
            + coeffs[c[1]] * xi * (1.0 - eta)
            + coeffs[c[2]] * xi * eta
            + coeffs[c[3]] * (1.0 - xi) * eta;
        Some(v)
    }

    /// Writes `node_id,x,y,kind` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_id", "x", "y", "kind"])?;
        for (id, p) in self.nodes.iter().enumerate() {
            let kind = if self.is_boundary_dof(id) { "boundary" } else { "interior" };
            w.write_record([id.to_string(), p[0].to_string(), p[1].to_string(), kind.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the uniform L-shape mesh at refinement level `n >= 1`.
pub fn build_lshape_mesh(n: u32) -> Result<QuadMesh> {
    if n == 0 || n > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!("refinement level must be in 1..={MAX_LEVEL}, got {n}")));
    }
    let half = 1usize << n;
    let divisions = 2 * half;
    let g = divisions + 1;
    let side = 1.0 / half as f64;
    let removed_node = |i: usize, j: usize| i > half && j < half;
    let removed_cell = |i: usize, j: usize| i >= half && j < half;

    // Provisional numbering: row-major over the grid.
    let mut provisional = vec![ABSENT; g * g];
    let mut coords = Vec::new();
    for j in 0..g {
        for i in 0..g {
            if !removed_node(i, j) {
                provisional[j * g + i] = coords.len();
                coords.push([-1.0 + i as f64 * side, -1.0 + j as f64 * side]);
            }
        }
    }
    let mut cells = Vec::with_capacity(3 * half * half);
    let mut cell_grid = vec![ABSENT; divisions * divisions];
    for j in 0..divisions {
        for i in 0..divisions {
            if removed_cell(i, j) {
                continue;
            }
            cell_grid[j * divisions + i] = cells.len();
            cells.push([
                provisional[j * g + i],
                provisional[j * g + i + 1],
                provisional[(j + 1) * g + i + 1],
                provisional[(j + 1) * g + i],
            ]);
        }
    }

    let start = provisional[0];
    let cycle = boundary_cycle(&cells, start)?;
    let mut on_boundary = vec![false; coords.len()];
    for &v in &cycle {
        on_boundary[v] = true;
    }

    // Interior first (provisional order), then the boundary in cycle order.
    let mut renumber = vec![ABSENT; coords.len()];
    let mut next = 0;
    for (v, slot) in renumber.iter_mut().enumerate() {
        if !on_boundary[v] {
            *slot = next;
            next += 1;
        }
    }
    let n_interior = next;
    for &v in &cycle {
        renumber[v] = next;
        next += 1;
    }
    let mut nodes = vec![[0.0; 2]; coords.len()];
    for (v, p) in coords.iter().enumerate() {
        nodes[renumber[v]] = *p;
    }
    for c in &mut cells {
        for v in c.iter_mut() {
            *v = renumber[*v];
        }
    }
    let node_grid = provisional.iter().map(|&v| if v == ABSENT { ABSENT } else { renumber[v] }).collect();

    Ok(QuadMesh { level: n, nodes, cells, n_interior, n_boundary: cycle.len(), divisions, node_grid, cell_grid })
}

/// Walks the directed boundary edges of counterclockwise cells from `start`.
fn boundary_cycle(cells: &[[usize; 4]], start: usize) -> Result<Vec<usize>> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for c in cells {
        for k in 0..4 {
            *directed.entry((c[k], c[(k + 1) % 4])).or_default() += 1;
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut n_edges = 0;
    for (&(a, b), &count) in &directed {
        if count > 1 {
            return Err(Error::MalformedMesh(format!("edge ({a},{b}) is shared with equal orientation")));
        }
        if directed.contains_key(&(b, a)) {
            continue;
        }
        n_edges += 1;
        if next.insert(a, b).is_some() {
            return Err(Error::MalformedMesh(format!("node {a} has two outgoing boundary edges")));
        }
    }
    if !next.contains_key(&start) {
        return Err(Error::MalformedMesh(format!("start node {start} is not on the boundary")));
    }
    let mut cycle = vec![start];
    let mut current = next[&start];
    while current != start {
        if cycle.len() > n_edges {
            return Err(Error::MalformedMesh("boundary walk does not close".into()));
        }
        cycle.push(current);
        current =
            *next.get(&current).ok_or_else(|| Error::MalformedMesh(format!("boundary is open at node {current}")))?;
    }
    if cycle.len() != n_edges {
        return Err(Error::MalformedMesh(format!(
            "boundary has {n_edges} edges but the cycle through the start node has {}",
            cycle.len()
        )));
    }
    Ok(cycle)
}

/// The boundary curve as a closed periodic chain of P1 elements.
#[derive(Clone, Debug)]
pub struct BoundaryMesh {
    boundary_dofs: Vec<usize>,
    edge_lengths: Vec<f64>,
    global_to_boundary: HashMap<usize, usize>,
}

impl BoundaryMesh {
    /// Global dofs in cyclic order; edge `k` joins entries `k` and `k+1 mod len`.
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn len(&self) -> usize {
        self.boundary_dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary_dofs.is_empty()
    }

    pub fn global_to_boundary(&self, dof: usize) -> Option<usize> {
        self.global_to_boundary.get(&dof).copied()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    /// Same curve, with the cycle starting `shift` positions later.
    pub fn rotated(&self, shift: usize) -> Self {
        let n = self.len();
        let dofs: Vec<usize> = (0..n).map(|k| self.boundary_dofs[(k + shift) % n]).collect();
        let lengths = (0..n).map(|k| self.edge_lengths[(k + shift) % n]).collect();
        let map = dofs.iter().enumerate().map(|(k, &d)| (d, k)).collect();
        Self { boundary_dofs: dofs, edge_lengths: lengths, global_to_boundary: map }
    }
}

/// Traces the boundary of `mesh` counterclockwise from the corner `(-1,-1)`.
pub fn extract_boundary(mesh: &QuadMesh) -> Result<BoundaryMesh> {
    let start = mesh
        .nodes
        .iter()
        .position(|p| p[0] == -1.0 && p[1] == -1.0)
        .ok_or_else(|| Error::MalformedMesh("no node at (-1,-1)".into()))?;
    let cycle = boundary_cycle(&mesh.cells, start)?;
    if cycle.len() != mesh.n_boundary {
        return Err(Error::MalformedMesh(format!(
            "boundary cycle has {} nodes, mesh declares {}",
            cycle.len(),
            mesh.n_boundary
        )));
    }
    let n = cycle.len();
    let edge_lengths = (0..n)
        .map(|k| {
            let a = mesh.nodes[cycle[k]];
            let b = mesh.nodes[cycle[(k + 1) % n]];
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .collect();
    let global_to_boundary = cycle.iter().enumerate().map(|(k, &d)| (d, k)).collect();
    Ok(BoundaryMesh { boundary_dofs: cycle, edge_lengths, global_to_boundary })
}
