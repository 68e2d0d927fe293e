//! Discrete spaces and boundary conditions.
//!
//! Displacements are continuous piecewise-linear vectors (dofs at vertices),
//! fluxes are lowest-order face elements (one normal dof per edge, oriented by
//! the global edge normal), pressures are piecewise constants (one dof per
//! triangle). Essential conditions (fixed displacement, impermeable edges) are
//! imposed by eliminating dofs; only homogeneous essential data is supported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::{ScalarLoad, VectorLoad};
use crate::mesh::{BoundaryTag, Mesh};

/// Displacement condition of one side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementBc {
    /// Homogeneous essential condition `u = 0`; vertex dofs are eliminated.
    Fixed,
    /// Natural condition with zero traction.
    TractionFree,
    /// Natural condition with the given traction data.
    Traction(VectorLoad),
}

/// Flow condition of one side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowBc {
    /// `q . n = 0`; edge dofs are eliminated.
    Impermeable,
    /// Prescribed boundary pressure, entering the Darcy right-hand side.
    Drained(ScalarLoad),
}

/// Conditions of one side of the rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideBc {
    pub displacement: DisplacementBc,
    pub flow: FlowBc,
}

/// Boundary conditions of the whole rectangle; every side carries exactly one
/// displacement and one flow condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcSpec {
    pub bottom: SideBc,
    pub right: SideBc,
    pub top: SideBc,
    pub left: SideBc,
}

impl BcSpec {
    /// Same conditions on all four sides.
    pub fn uniform(side: SideBc) -> Self {
        Self {
            bottom: side,
            right: side,
            top: side,
            left: side,
        }
    }

    /// Fixed and impermeable everywhere.
    pub fn clamped_sealed() -> Self {
        Self::uniform(SideBc {
            displacement: DisplacementBc::Fixed,
            flow: FlowBc::Impermeable,
        })
    }

    pub fn side(&self, tag: BoundaryTag) -> &SideBc {
        match tag {
            BoundaryTag::Bottom => &self.bottom,
            BoundaryTag::Right => &self.right,
            BoundaryTag::Top => &self.top,
            BoundaryTag::Left => &self.left,
        }
    }
}

/// Index maps from mesh entities to reduced (eliminated) dof numbers.
#[derive(Clone, Debug)]
pub struct DofMap {
    /// Retained displacement dofs; entry `2 * vertex + component`.
    pub u_map: Vec<Option<usize>>,
    /// Retained flux dofs, one per edge.
    pub q_map: Vec<Option<usize>>,
    pub n_u: usize,
    pub n_q: usize,
    /// Pressure dofs are never eliminated: one per triangle.
    pub n_p: usize,
    /// Non-fatal observations, e.g. a mechanics operator that is singular
    /// without the mass term.
    pub warnings: Vec<String>,
}

/// Build the reduced dof maps for the three fields.
///
/// # Errors
/// Fails on an empty mesh. A boundary without any fixed side only produces a
/// warning: the stage operator stays positive definite through the mass term.
pub fn build_spaces(mesh: &Mesh, bc: &BcSpec) -> Result<DofMap> {
    if mesh.n_triangles() == 0 {
        return Err(Error::InvalidDiscretization(
            "cannot build spaces on an empty mesh".into(),
        ));
    }

    let mut vertex_fixed = vec![false; mesh.n_vertices()];
    let mut any_fixed = false;
    let mut q_keep = vec![true; mesh.n_edges()];
    for (e, tag) in mesh.boundary.iter().enumerate() {
        let Some(tag) = tag else { continue };
        let side = bc.side(*tag);
        if side.displacement == DisplacementBc::Fixed {
            // Essential displacement wins at shared corner vertices.
            let [a, b] = mesh.edges[e];
            vertex_fixed[a] = true;
            vertex_fixed[b] = true;
            any_fixed = true;
        }
        if side.flow == FlowBc::Impermeable {
            q_keep[e] = false;
        }
    }

    let mut u_map = vec![None; 2 * mesh.n_vertices()];
    let mut n_u = 0;
    for v in 0..mesh.n_vertices() {
        if !vertex_fixed[v] {
            for comp in 0..2 {
                u_map[2 * v + comp] = Some(n_u);
                n_u += 1;
            }
        }
    }
    let mut q_map = vec![None; mesh.n_edges()];
    let mut n_q = 0;
    for e in 0..mesh.n_edges() {
        if q_keep[e] {
            q_map[e] = Some(n_q);
            n_q += 1;
        }
    }

    let mut warnings = Vec::new();
    if !any_fixed {
        warnings.push(
            "no fixed displacement side: singular mechanics operator compensated by mass term"
                .into(),
        );
    }

    Ok(DofMap {
        u_map,
        q_map,
        n_u,
        n_q,
        n_p: mesh.n_triangles(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loads::ScalarLoad;
    use crate::mesh::build_mesh;

    fn free_drained() -> SideBc {
        SideBc {
            displacement: DisplacementBc::TractionFree,
            flow: FlowBc::Drained(ScalarLoad::constant(0.0)),
        }
    }

    #[test]
    fn unit_square_clamped_sealed() {
        let mesh = build_mesh(1, 1, 1.0, 1.0).unwrap();
        let dofs = build_spaces(&mesh, &BcSpec::clamped_sealed()).unwrap();
        // All four vertices sit on fixed edges; only the diagonal flux survives.
        assert_eq!((dofs.n_u, dofs.n_q, dofs.n_p), (0, 1, 2));
        assert!(dofs.warnings.is_empty());
    }

    #[test]
    fn unit_square_free_drained() {
        let mesh = build_mesh(1, 1, 1.0, 1.0).unwrap();
        let dofs = build_spaces(&mesh, &BcSpec::uniform(free_drained())).unwrap();
        assert_eq!((dofs.n_u, dofs.n_q, dofs.n_p), (8, 5, 2));
        assert_eq!(dofs.warnings.len(), 1);
        assert!(dofs.warnings[0].contains("mass term"));
    }

    #[test]
    fn maps_are_contiguous() {
        let mesh = build_mesh(3, 2, 1.0, 1.0).unwrap();
        let mut bc = BcSpec::uniform(free_drained());
        bc.bottom.displacement = DisplacementBc::Fixed;
        bc.left.flow = FlowBc::Impermeable;
        let dofs = build_spaces(&mesh, &bc).unwrap();

        let u: Vec<usize> = dofs.u_map.iter().flatten().cloned().collect();
        assert_eq!(u, (0..dofs.n_u).collect::<Vec<_>>());
        let q: Vec<usize> = dofs.q_map.iter().flatten().cloned().collect();
        assert_eq!(q, (0..dofs.n_q).collect::<Vec<_>>());
        assert_eq!(dofs.n_p, mesh.n_triangles());

        // Bottom row vertices ((nx+1) of them) lose both components.
        assert_eq!(dofs.n_u, 2 * (mesh.n_vertices() - 4));
        // Left boundary edges (ny of them) lose their flux dof.
        assert_eq!(dofs.n_q, mesh.n_edges() - 2);
    }

    #[test]
    fn corner_vertex_elimination_wins() {
        // Fixed bottom + traction-free left: the corner vertex is eliminated.
        let mesh = build_mesh(2, 2, 1.0, 1.0).unwrap();
        let mut bc = BcSpec::uniform(free_drained());
        bc.bottom.displacement = DisplacementBc::Fixed;
        let dofs = build_spaces(&mesh, &bc).unwrap();
        // Vertex 0 is the bottom-left corner.
        assert_eq!(dofs.u_map[0], None);
        assert_eq!(dofs.u_map[1], None);
        assert!(dofs.warnings.is_empty());
    }
}
