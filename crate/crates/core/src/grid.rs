//! Staggered voxel grids: active cells, the nodes/edges/faces they touch, and
//! the Γ0/Γ1 labelling of boundary faces.
//!
//! Lattice coordinates `p = [x, y, z]` index the lower corner of an entity.
//! An edge of axis `a` at `p` runs from node `p` to `p + e_a`; a face of
//! normal axis `a` at `p` spans the two tangential axes from node `p`; cell
//! `p` occupies `[p, p + 1]³`. Every species is numbered densely and
//! lexicographically by `(axis, z, y, x)`.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("cell counts must be positive, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("mask has {got} entries, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("active cells are not face-connected: {} components {}", .0.len(), describe_components(.0))]
    Disconnected(Vec<Component>),
    #[error("no partition rule covers boundary face at {center:?} (normal axis {axis}, outward {outward:+})")]
    UncoveredFace { center: [f64; 3], axis: usize, outward: i8 },
    #[error("partition leaves Γ1 empty; set allow_undamped for the undamped reference cavity")]
    EmptyGamma1,
    #[error("boundary faces have not been classified")]
    Unlabeled,
}

/// One face-connected component of a mask, reported in connectivity errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub size: usize,
    pub first_cell: [usize; 3],
}

fn describe_components(c: &[Component]) -> String {
    c.iter()
        .map(|c| format!("[{} cells from {:?}]", c.size, c.first_cell))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub cells: [usize; 3],
    pub spacing: f64,
    /// One flag per cell, x fastest. `None` activates every cell.
    pub mask: Option<Vec<bool>>,
}

impl GridSpec {
    pub fn full_box(n: [usize; 3], spacing: f64) -> Self {
        Self {
            cells: n,
            spacing,
            mask: None,
        }
    }

    /// Unit-length cube with `n` cells per side.
    pub fn unit_cube(n: usize) -> Self {
        Self::full_box([n, n, n], 1.0 / n as f64)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_active(&self, p: [usize; 3]) -> bool {
        match &self.mask {
            None => true,
            Some(m) => m[p[0] + self.cells[0] * (p[1] + self.cells[1] * p[2])],
        }
    }

    /// Mask from a byte array, one byte per cell (nonzero = active), x fastest.
    pub fn mask_from_bytes(&self, bytes: &[u8]) -> Result<Vec<bool>, GridError> {
        if bytes.len() != self.cell_count() {
            return Err(GridError::MaskLength {
                expected: self.cell_count(),
                got: bytes.len(),
            });
        }
        Ok(bytes.iter().map(|&b| b != 0).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryLabel {
    /// Perfect conductor.
    Gamma0,
    /// Impedance feedback.
    Gamma1,
}

/// One of the six planes of the bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxSide {
    pub axis: usize,
    /// `+1` for the upper plane, `-1` for the lower one.
    pub sign: i8,
}

impl BoxSide {
    pub const XMIN: BoxSide = BoxSide { axis: 0, sign: -1 };
    pub const XMAX: BoxSide = BoxSide { axis: 0, sign: 1 };
    pub const YMIN: BoxSide = BoxSide { axis: 1, sign: -1 };
    pub const YMAX: BoxSide = BoxSide { axis: 1, sign: 1 };
    pub const ZMIN: BoxSide = BoxSide { axis: 2, sign: -1 };
    pub const ZMAX: BoxSide = BoxSide { axis: 2, sign: 1 };

    /// Parses `"+x"`, `"-y"`, … .
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let (sign, rest) = match s.as_bytes().first()? {
            b'+' => (1, &s[1..]),
            b'-' => (-1, &s[1..]),
            _ => return None,
        };
        let axis = match rest {
            "x" | "X" => 0,
            "y" | "Y" => 1,
            "z" | "Z" => 2,
            _ => return None,
        };
        Some(BoxSide { axis, sign })
    }
}

impl fmt::Display for BoxSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sign > 0 { '+' } else { '-' };
        write!(f, "{s}{}", ['x', 'y', 'z'][self.axis])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FaceSelector {
    All,
    /// Boundary faces lying in one plane of the bounding box, facing outwards.
    Side(BoxSide),
    /// Boundary faces whose center lies in the closed box `[min, max]`.
    Region { min: [f64; 3], max: [f64; 3] },
}

/// Ordered selector list; the first matching rule labels a face, unmatched
/// faces fall back to `default`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionRule {
    pub rules: Vec<(FaceSelector, BoundaryLabel)>,
    pub default: Option<BoundaryLabel>,
    /// Accept Γ1 = ∅ (undamped reference cavity).
    pub allow_undamped: bool,
}

impl PartitionRule {
    pub fn gamma1_sides(sides: &[BoxSide]) -> Self {
        Self {
            rules: sides
                .iter()
                .map(|&s| (FaceSelector::Side(s), BoundaryLabel::Gamma1))
                .collect(),
            default: Some(BoundaryLabel::Gamma0),
            allow_undamped: false,
        }
    }

    pub fn all_gamma1() -> Self {
        Self {
            rules: vec![(FaceSelector::All, BoundaryLabel::Gamma1)],
            default: None,
            allow_undamped: false,
        }
    }

    /// Every boundary face is a perfect conductor.
    pub fn undamped() -> Self {
        Self {
            rules: vec![(FaceSelector::All, BoundaryLabel::Gamma0)],
            default: None,
            allow_undamped: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFace {
    pub face: usize,
    /// Normal axis.
    pub axis: usize,
    /// Outward direction along `axis`.
    pub outward: i8,
    /// The single active cell behind the face.
    pub cell: usize,
    pub label: BoundaryLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    dims: [usize; 3],
    spacing: f64,
    node_lookup: Vec<u32>,
    edge_lookup: [Vec<u32>; 3],
    face_lookup: [Vec<u32>; 3],
    cell_lookup: Vec<u32>,
    nodes: Vec<[usize; 3]>,
    edges: Vec<(usize, [usize; 3])>,
    faces: Vec<(usize, [usize; 3])>,
    cells: Vec<[usize; 3]>,
    node_cells: Vec<u8>,
    edge_cells: Vec<u8>,
    face_cells: Vec<u8>,
    boundary: Vec<BoundaryFace>,
    face_boundary: Vec<u32>,
    labeled: bool,
}

/// Builds the DOF tables for the active region of `spec`. Boundary faces are
/// provisionally labelled Γ0 until [`classify_boundary`] runs.
pub fn build_grid(spec: &GridSpec) -> Result<DofMap, GridError> {
    let [nx, ny, nz] = spec.cells;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(GridError::EmptyDims(spec.cells));
    }
    if !(spec.spacing > 0.0 && spec.spacing.is_finite()) {
        return Err(GridError::BadSpacing(spec.spacing));
    }
    if let Some(m) = &spec.mask {
        if m.len() != spec.cell_count() {
            return Err(GridError::MaskLength {
                expected: spec.cell_count(),
                got: m.len(),
            });
        }
    }
    let active = |x: isize, y: isize, z: isize| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && spec.is_active([x as usize, y as usize, z as usize])
    };

    let lattice = (nx + 1) * (ny + 1) * (nz + 1);
    let lin = |p: [usize; 3]| p[0] + (nx + 1) * (p[1] + (ny + 1) * p[2]);

    let mut cells = Vec::new();
    let mut cell_lookup = vec![NONE; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if spec.is_active([x, y, z]) {
                    cell_lookup[x + nx * (y + ny * z)] = cells.len() as u32;
                    cells.push([x, y, z]);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(GridError::EmptyMask);
    }
    check_connected(spec, &cells, &cell_lookup)?;

    let mut nodes = Vec::new();
    let mut node_cells = Vec::new();
    let mut node_lookup = vec![NONE; lattice];
    for z in 0..=nz {
        for y in 0..=ny {
            for x in 0..=nx {
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                let mut count = 0u8;
                for dz in [-1, 0] {
                    for dy in [-1, 0] {
                        for dx in [-1, 0] {
                            count += active(xi + dx, yi + dy, zi + dz) as u8;
                        }
                    }
                }
                if count > 0 {
                    node_lookup[lin([x, y, z])] = nodes.len() as u32;
                    nodes.push([x, y, z]);
                    node_cells.push(count);
                }
            }
        }
    }

    let mut edges = Vec::new();
    let mut edge_cells = Vec::new();
    let mut edge_lookup: [Vec<u32>; 3] = [vec![NONE; lattice], vec![NONE; lattice], vec![NONE; lattice]];
    for axis in 0..3 {
        let (t1, t2) = tangents(axis);
        for z in 0..=nz {
            for y in 0..=ny {
                for x in 0..=nx {
                    let p = [x, y, z];
                    if p[axis] == spec.cells[axis] {
                        continue;
                    }
                    let mut count = 0u8;
                    for d1 in [-1isize, 0] {
                        for d2 in [-1isize, 0] {
                            let mut q = [x as isize, y as isize, z as isize];
                            q[t1] += d1;
                            q[t2] += d2;
                            count += active(q[0], q[1], q[2]) as u8;
                        }
                    }
                    if count > 0 {
                        edge_lookup[axis][lin(p)] = edges.len() as u32;
                        edges.push((axis, p));
                        edge_cells.push(count);
                    }
                }
            }
        }
    }

    let mut faces = Vec::new();
    let mut face_cells = Vec::new();
    let mut face_lookup: [Vec<u32>; 3] = [vec![NONE; lattice], vec![NONE; lattice], vec![NONE; lattice]];
    let mut boundary = Vec::new();
    for axis in 0..3 {
        for z in 0..=nz {
            for y in 0..=ny {
                for x in 0..=nx {
                    let p = [x, y, z];
                    let (t1, t2) = tangents(axis);
                    if p[t1] == spec.cells[t1] || p[t2] == spec.cells[t2] {
                        continue;
                    }
                    let q = [x as isize, y as isize, z as isize];
                    let mut below = q;
                    below[axis] -= 1;
                    let upper = active(q[0], q[1], q[2]);
                    let lower = active(below[0], below[1], below[2]);
                    if !(upper || lower) {
                        continue;
                    }
                    let id = faces.len();
                    face_lookup[axis][lin(p)] = id as u32;
                    faces.push((axis, p));
                    face_cells.push(upper as u8 + lower as u8);
                    if upper != lower {
                        let (cell_p, outward) = if upper {
                            (p, -1)
                        } else {
                            let mut c = p;
                            c[axis] -= 1;
                            (c, 1)
                        };
                        let cell = cell_lookup[cell_p[0] + nx * (cell_p[1] + ny * cell_p[2])] as usize;
                        boundary.push(BoundaryFace {
                            face: id,
                            axis,
                            outward,
                            cell,
                            label: BoundaryLabel::Gamma0,
                        });
                    }
                }
            }
        }
    }
    let mut face_boundary = vec![NONE; faces.len()];
    for (i, b) in boundary.iter().enumerate() {
        face_boundary[b.face] = i as u32;
    }

    Ok(DofMap {
        dims: spec.cells,
        spacing: spec.spacing,
        node_lookup,
        edge_lookup,
        face_lookup,
        cell_lookup,
        nodes,
        edges,
        faces,
        cells,
        node_cells,
        edge_cells,
        face_cells,
        boundary,
        face_boundary,
        labeled: false,
    })
}

fn check_connected(spec: &GridSpec, cells: &[[usize; 3]], lookup: &[u32]) -> Result<(), GridError> {
    let [nx, ny, nz] = spec.cells;
    let mut comp = vec![usize::MAX; cells.len()];
    let mut components = Vec::new();
    for start in 0..cells.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = id;
        while let Some(c) = queue.pop_front() {
            size += 1;
            let p = cells[c];
            for axis in 0..3 {
                for d in [-1isize, 1] {
                    let q = p[axis] as isize + d;
                    if q < 0 || q as usize >= spec.cells[axis] {
                        continue;
                    }
                    let mut r = p;
                    r[axis] = q as usize;
                    let n = lookup[r[0] + nx * (r[1] + ny * r[2])];
                    if n != NONE && comp[n as usize] == usize::MAX {
                        comp[n as usize] = id;
                        queue.push_back(n as usize);
                    }
                }
            }
        }
        components.push(Component {
            size,
            first_cell: cells[start],
        });
    }
    let _ = nz;
    if components.len() > 1 {
        return Err(GridError::Disconnected(components));
    }
    Ok(())
}

/// Tangential axes of a face with normal `axis`, ordered so that
/// `t1 × t2 = e_axis`.
pub const fn tangents(axis: usize) -> (usize, usize) {
    ((axis + 1) % 3, (axis + 2) % 3)
}

/// Assigns Γ0/Γ1 labels to every boundary face of `dofmap`.
pub fn classify_boundary(dofmap: &DofMap, rule: &PartitionRule) -> Result<DofMap, GridError> {
    let mut out = dofmap.clone();
    let h = dofmap.spacing;
    for b in out.boundary.iter_mut() {
        let (axis, p) = dofmap.faces[b.face];
        let center = dofmap.face_center(b.face);
        let hit = rule.rules.iter().find(|(sel, _)| match sel {
            FaceSelector::All => true,
            FaceSelector::Side(side) => {
                let plane = if side.sign > 0 { dofmap.dims[axis] } else { 0 };
                side.axis == axis && side.sign == b.outward && p[axis] == plane
            }
            FaceSelector::Region { min, max } => (0..3).all(|i| {
                center[i] >= min[i] - 1e-9 * h && center[i] <= max[i] + 1e-9 * h
            }),
        });
        b.label = match (hit, rule.default) {
            (Some((_, label)), _) => *label,
            (None, Some(label)) => label,
            (None, None) => {
                return Err(GridError::UncoveredFace {
                    center,
                    axis,
                    outward: b.outward,
                })
            }
        };
    }
    if !rule.allow_undamped && out.boundary.iter().all(|b| b.label == BoundaryLabel::Gamma0) {
        return Err(GridError::EmptyGamma1);
    }
    out.labeled = true;
    Ok(out)
}

impl DofMap {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_labeled(&self) -> bool {
        self.labeled
    }

    fn lin(&self, p: [usize; 3]) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        (p[0] <= nx && p[1] <= ny && p[2] <= nz).then(|| p[0] + (nx + 1) * (p[1] + (ny + 1) * p[2]))
    }

    pub fn node_id(&self, p: [usize; 3]) -> Option<usize> {
        let i = self.lin(p)?;
        let v = self.node_lookup[i];
        (v != NONE).then_some(v as usize)
    }

    pub fn edge_id(&self, axis: usize, p: [usize; 3]) -> Option<usize> {
        let i = self.lin(p)?;
        let v = self.edge_lookup[axis][i];
        (v != NONE).then_some(v as usize)
    }

    pub fn face_id(&self, axis: usize, p: [usize; 3]) -> Option<usize> {
        let i = self.lin(p)?;
        let v = self.face_lookup[axis][i];
        (v != NONE).then_some(v as usize)
    }

    pub fn cell_id(&self, p: [usize; 3]) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        if p[0] >= nx || p[1] >= ny || p[2] >= nz {
            return None;
        }
        let v = self.cell_lookup[p[0] + nx * (p[1] + ny * p[2])];
        (v != NONE).then_some(v as usize)
    }

    pub fn node(&self, n: usize) -> [usize; 3] {
        self.nodes[n]
    }

    pub fn edge(&self, e: usize) -> (usize, [usize; 3]) {
        self.edges[e]
    }

    pub fn face(&self, f: usize) -> (usize, [usize; 3]) {
        self.faces[f]
    }

    pub fn cell(&self, c: usize) -> [usize; 3] {
        self.cells[c]
    }

    /// Number of active cells around a node (1..=8).
    pub fn node_cell_count(&self, n: usize) -> usize {
        self.node_cells[n] as usize
    }

    /// Number of active cells around an edge (1..=4).
    pub fn edge_cell_count(&self, e: usize) -> usize {
        self.edge_cells[e] as usize
    }

    /// Number of active cells sharing a face (1 or 2).
    pub fn face_cell_count(&self, f: usize) -> usize {
        self.face_cells[f] as usize
    }

    pub fn is_boundary_node(&self, n: usize) -> bool {
        self.node_cells[n] < 8
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_cells[e] < 4
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    /// Position of `f` in [`Self::boundary_faces`], if it is a boundary face.
    pub fn boundary_index(&self, f: usize) -> Option<usize> {
        let v = self.face_boundary[f];
        (v != NONE).then_some(v as usize)
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let g1 = self
            .boundary
            .iter()
            .filter(|b| b.label == BoundaryLabel::Gamma1)
            .count();
        (self.boundary.len() - g1, g1)
    }

    pub fn node_position(&self, n: usize) -> [f64; 3] {
        let p = self.nodes[n];
        p.map(|v| v as f64 * self.spacing)
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 3] {
        let (axis, p) = self.edges[e];
        let mut x = p.map(|v| v as f64 * self.spacing);
        x[axis] += 0.5 * self.spacing;
        x
    }

    pub fn face_center(&self, f: usize) -> [f64; 3] {
        let (axis, p) = self.faces[f];
        let (t1, t2) = tangents(axis);
        let mut x = p.map(|v| v as f64 * self.spacing);
        x[t1] += 0.5 * self.spacing;
        x[t2] += 0.5 * self.spacing;
        x
    }

    pub fn cell_center(&self, c: usize) -> [f64; 3] {
        self.cells[c].map(|v| (v as f64 + 0.5) * self.spacing)
    }

    /// The two endpoint nodes of an edge (tail, head).
    pub fn edge_nodes(&self, e: usize) -> (usize, usize) {
        let (axis, p) = self.edges[e];
        let mut q = p;
        q[axis] += 1;
        (
            self.node_id(p).expect("edge tail node"),
            self.node_id(q).expect("edge head node"),
        )
    }

    /// The four edges of a face with their circulation signs, counterclockwise
    /// about the face normal.
    pub fn face_edges(&self, f: usize) -> [(usize, f64); 4] {
        let (axis, p) = self.faces[f];
        let (t1, t2) = tangents(axis);
        let mut p1 = p;
        p1[t1] += 1;
        let mut p2 = p;
        p2[t2] += 1;
        let get = |a: usize, q: [usize; 3]| self.edge_id(a, q).expect("face edge");
        [
            (get(t1, p), 1.0),
            (get(t2, p1), 1.0),
            (get(t1, p2), -1.0),
            (get(t2, p), -1.0),
        ]
    }

    /// The six faces of a cell with outward signs, grouped per axis as
    /// `(lower, upper)`.
    pub fn cell_faces(&self, c: usize) -> [[usize; 2]; 3] {
        let p = self.cells[c];
        let mut out = [[0; 2]; 3];
        for (axis, slot) in out.iter_mut().enumerate() {
            let mut q = p;
            q[axis] += 1;
            *slot = [
                self.face_id(axis, p).expect("cell face"),
                self.face_id(axis, q).expect("cell face"),
            ];
        }
        out
    }

    /// The twelve edges of a cell, four per axis, indexed by the offsets
    /// `(d1, d2)` along the two tangential axes as `2 * d2 + d1`.
    pub fn cell_edges(&self, c: usize) -> [[usize; 4]; 3] {
        let p = self.cells[c];
        let mut out = [[0; 4]; 3];
        for (axis, slot) in out.iter_mut().enumerate() {
            let (t1, t2) = tangents(axis);
            for d2 in 0..2 {
                for d1 in 0..2 {
                    let mut q = p;
                    q[t1] += d1;
                    q[t2] += d2;
                    slot[2 * d2 + d1] = self.edge_id(axis, q).expect("cell edge");
                }
            }
        }
        out
    }

    /// Active cells around an edge.
    pub fn edge_adjacent_cells(&self, e: usize) -> Vec<usize> {
        let (axis, p) = self.edges[e];
        let (t1, t2) = tangents(axis);
        let mut out = Vec::with_capacity(4);
        for d2 in 0..2usize {
            for d1 in 0..2usize {
                if (d1 == 1 && p[t1] == 0) || (d2 == 1 && p[t2] == 0) {
                    continue;
                }
                let mut q = p;
                q[t1] -= d1;
                q[t2] -= d2;
                if let Some(c) = self.cell_id(q) {
                    out.push(c);
                }
            }
        }
        out
    }

    fn require_labels(&self) -> Result<(), GridError> {
        if self.labeled {
            Ok(())
        } else {
            Err(GridError::Unlabeled)
        }
    }

    /// Boundary faces carrying `label`, as indices into [`Self::boundary_faces`].
    pub fn boundary_with_label(&self, label: BoundaryLabel) -> Result<Vec<usize>, GridError> {
        self.require_labels()?;
        Ok((0..self.boundary.len())
            .filter(|&i| self.boundary[i].label == label)
            .collect())
    }

    /// Marks the edges lying in the closure of the selected boundary faces.
    pub fn edges_on_faces(&self, faces: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.edges.len()];
        for &b in faces {
            for (e, _) in self.face_edges(self.boundary[b].face) {
                mark[e] = true;
            }
        }
        mark
    }

    /// Marks the nodes lying in the closure of the selected boundary faces.
    pub fn nodes_on_faces(&self, faces: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.nodes.len()];
        for &b in faces {
            for (e, _) in self.face_edges(self.boundary[b].face) {
                let (a, c) = self.edge_nodes(e);
                mark[a] = true;
                mark[c] = true;
            }
        }
        mark
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_counts() {
        let d = build_grid(&GridSpec::full_box([1, 1, 1], 1.0)).unwrap();
        assert_eq!((d.n_nodes(), d.n_edges(), d.n_faces(), d.n_cells()), (8, 12, 6, 1));
        assert_eq!(d.boundary_faces().len(), 6);
    }

    #[test]
    fn two_cube_counts_match_formulas() {
        let n = 2;
        let d = build_grid(&GridSpec::unit_cube(n)).unwrap();
        assert_eq!(d.n_nodes(), (n + 1).pow(3));
        assert_eq!(d.n_edges(), 3 * n * (n + 1).pow(2));
        assert_eq!(d.n_faces(), 3 * n * n * (n + 1));
        assert_eq!(d.n_cells(), 8);
        assert_eq!((d.n_nodes(), d.n_edges(), d.n_faces()), (27, 54, 36));
    }

    #[test]
    fn slab_with_hole() {
        let mut mask = vec![true; 9];
        mask[4] = false;
        let spec = GridSpec::full_box([3, 3, 1], 1.0).with_mask(mask);
        let d = build_grid(&spec).unwrap();
        assert_eq!(d.n_cells(), 8);
        // 8 cells × 6 faces minus 2 × (8 shared faces)
        assert_eq!(d.boundary_faces().len(), 8 * 6 - 2 * 8);
    }

    #[test]
    fn rejects_disconnected_and_empty_masks() {
        let spec = GridSpec::full_box([3, 1, 1], 1.0).with_mask(vec![true, false, true]);
        match build_grid(&spec) {
            Err(GridError::Disconnected(c)) => {
                assert_eq!(c.len(), 2);
                assert_eq!(c[1].first_cell, [2, 0, 0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let spec = GridSpec::full_box([2, 1, 1], 1.0).with_mask(vec![false, false]);
        assert_eq!(build_grid(&spec), Err(GridError::EmptyMask));
    }

    #[test]
    fn classification_counts() {
        let d = build_grid(&GridSpec::unit_cube(4)).unwrap();
        let c = classify_boundary(&d, &PartitionRule::gamma1_sides(&[BoxSide::XMAX])).unwrap();
        assert_eq!(c.label_counts(), (96 - 16, 16));

        let d = build_grid(&GridSpec::unit_cube(2)).unwrap();
        let c = classify_boundary(&d, &PartitionRule::all_gamma1()).unwrap();
        assert_eq!(c.label_counts(), (0, 24));

        let c = classify_boundary(&d, &PartitionRule::undamped()).unwrap();
        assert_eq!(c.label_counts(), (24, 0));
        let mut strict = PartitionRule::undamped();
        strict.allow_undamped = false;
        assert_eq!(classify_boundary(&d, &strict), Err(GridError::EmptyGamma1));
    }

    #[test]
    fn uncovered_face_names_coordinates() {
        let d = build_grid(&GridSpec::unit_cube(2)).unwrap();
        let rule = PartitionRule {
            rules: vec![(FaceSelector::Side(BoxSide::XMAX), BoundaryLabel::Gamma1)],
            default: None,
            allow_undamped: false,
        };
        match classify_boundary(&d, &rule) {
            Err(GridError::UncoveredFace { center, .. }) => assert!(center.iter().all(|c| (0.0..=1.0).contains(c))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn side_parsing() {
        assert_eq!(BoxSide::parse("+x"), Some(BoxSide::XMAX));
        assert_eq!(BoxSide::parse("-z"), Some(BoxSide::ZMIN));
        assert_eq!(BoxSide::parse("x"), None);
        assert_eq!(BoxSide::XMIN.to_string(), "-x");
    }
}
