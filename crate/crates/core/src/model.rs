//! A labelled grid together with everything assembled on it.

use crate::error::Result;
use crate::grid::{build_grid, classify_boundary, DofMap, GridSpec, PartitionRule};
use crate::materials::{self, MaterialBounds, Materials};
use crate::operators::{build_complex, DiscreteComplex, MassMatrices, Restriction};

#[derive(Clone, Debug)]
pub struct Model {
    pub dofmap: DofMap,
    pub complex: DiscreteComplex,
    pub masses: MassMatrices,
    pub materials: Materials,
    pub bounds: MaterialBounds,
    /// DOFs left after the perfect-conductor elimination on Γ0.
    pub free: Restriction,
    /// Nodes with all eight surrounding cells active; the Gauss law for the
    /// electric flux is posed there.
    pub interior_nodes: Vec<usize>,
}

impl Model {
    pub fn new(spec: &GridSpec, rule: &PartitionRule, materials: Materials) -> Result<Self> {
        let dofmap = classify_boundary(&build_grid(spec)?, rule)?;
        Self::from_dofmap(dofmap, materials)
    }

    pub fn from_dofmap(dofmap: DofMap, materials: Materials) -> Result<Self> {
        let bounds = materials::validate(&materials, &dofmap)?;
        let complex = build_complex(&dofmap)?;
        let masses = MassMatrices::assemble(&dofmap, &materials.epsilon, &materials.mu);
        let free = Restriction::excluding(&dofmap, &complex.gamma0_faces);
        let interior_nodes = (0..dofmap.n_nodes()).filter(|&n| !dofmap.is_boundary_node(n)).collect();
        Ok(Self {
            dofmap,
            complex,
            masses,
            materials,
            bounds,
            free,
            interior_nodes,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.dofmap.spacing()
    }

    /// Gradient restricted to interior nodes (columns) over all edges.
    pub fn grad_interior(&self) -> crate::sparse::CsrMatrix {
        let rows: Vec<usize> = (0..self.dofmap.n_edges()).collect();
        self.complex.g.submatrix(&rows, &self.interior_nodes)
    }

    /// Nodal divergence `-Gᵀ d / h³` of an edge flux at the interior nodes.
    pub fn nodal_divergence(&self, d: &[f64]) -> Vec<f64> {
        let h3 = self.spacing().powi(3);
        self.grad_interior().transpose_mul_vec(d).iter().map(|v| -v / h3).collect()
    }
}
