//! Assembly of the discrete operators of the three-field stage problem and of
//! load vectors. All operators act on reduced dof vectors (essential dofs
//! eliminated) and are independent of the time step and the stage weights.

use nalgebra::{DVector, SMatrix, Vector2};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::dofmap::{DisplacementBc, DofMap, FlowBc};
use crate::error::{Error, Result};
use crate::loads::LoadSpec;
use crate::mesh::Mesh;
use crate::model::{alpha_c_inv_alpha, validate_material, MaterialField};
use crate::quadrature::{TriRule, MIDPOINT3};
use crate::BcSpec;

/// Strain-displacement matrix in scaled Voigt form (3 rows, 6 vertex dofs).
type BMatrix = SMatrix<f64, 3, 6>;

/// Sparse operators of the stage problem.
///
/// Notation: `u` displacement, `q` flux, `p` pressure coefficient vectors.
/// The pressure mass is diagonal because pressures are piecewise constant,
/// which is what licenses the element-wise pressure elimination.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    /// Density-weighted displacement mass.
    pub m_u: CsrMatrix<f64>,
    /// Elastic stiffness `<C eps(u), eps(v)>`.
    pub k_c: CsrMatrix<f64>,
    /// Coupling stiffness `<(alpha (x) alpha / c0) eps(u), eps(v)>`.
    pub k_aa: CsrMatrix<f64>,
    /// Inverse-permeability-weighted flux mass `<kappa^{-1} q, w>`.
    pub m_k: CsrMatrix<f64>,
    /// Element integrals of `alpha : eps(u)`; maps u-dofs to pressure dofs.
    pub a_a: CsrMatrix<f64>,
    /// Element integrals of `div q`; maps q-dofs to pressure dofs.
    pub d: CsrMatrix<f64>,
    /// Diagonal of the `c0`-weighted pressure mass.
    pub m_p: DVector<f64>,
    pub n_u: usize,
    pub n_q: usize,
    pub n_p: usize,
    /// `sup_e alpha : C^{-1} : alpha`, kept for contraction-rate reporting.
    pub x_sup: f64,
    /// `min_e c0`.
    pub c0_min: f64,
}

impl OperatorSet {
    /// A-priori contraction rate `x / (c0 + x)` of the coupling iteration.
    pub fn theory_rate(&self) -> f64 {
        if self.x_sup == 0.0 {
            0.0
        } else {
            self.x_sup / (self.c0_min + self.x_sup)
        }
    }
}

struct TriangleGeometry {
    coords: [[f64; 2]; 3],
    grads: [Vector2<f64>; 3],
    area: f64,
}

fn triangle_geometry(mesh: &Mesh, t: usize) -> TriangleGeometry {
    let tri = mesh.triangles[t];
    let coords = [
        mesh.vertices[tri[0]],
        mesh.vertices[tri[1]],
        mesh.vertices[tri[2]],
    ];
    let area = mesh.areas[t];
    let mut grads = [Vector2::zeros(); 3];
    for i in 0..3 {
        let a = coords[(i + 1) % 3];
        let b = coords[(i + 2) % 3];
        // Gradient of the barycentric function of vertex i: the opposite edge
        // vector rotated clockwise, scaled by 1 / (2 area).
        grads[i] = Vector2::new(a[1] - b[1], b[0] - a[0]) / (2.0 * area);
    }
    TriangleGeometry {
        coords,
        grads,
        area,
    }
}

fn b_matrix(geom: &TriangleGeometry) -> BMatrix {
    let mut b = BMatrix::zeros();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..3 {
        let g = geom.grads[i];
        b[(0, 2 * i)] = g.x;
        b[(1, 2 * i + 1)] = g.y;
        b[(2, 2 * i)] = s * g.y;
        b[(2, 2 * i + 1)] = s * g.x;
    }
    b
}

fn quad_point(geom: &TriangleGeometry, l: (f64, f64, f64)) -> Vector2<f64> {
    let c = geom.coords;
    Vector2::new(
        l.0 * c[0][0] + l.1 * c[1][0] + l.2 * c[2][0],
        l.0 * c[0][1] + l.1 * c[1][1] + l.2 * c[2][1],
    )
}

/// Face basis function of local edge `k` (opposite local vertex `k`),
/// normalized to unit normal component on its edge.
fn face_basis(geom: &TriangleGeometry, sign: f64, len: f64, k: usize, x: Vector2<f64>) -> Vector2<f64> {
    let p = Vector2::new(geom.coords[k][0], geom.coords[k][1]);
    (x - p) * (sign * len / (2.0 * geom.area))
}

/// Assemble all stage operators with the default (exact) quadrature.
pub fn assemble_operators(mesh: &Mesh, dofs: &DofMap, mat: &MaterialField) -> Result<OperatorSet> {
    assemble_operators_with_rule(mesh, dofs, mat, MIDPOINT3)
}

/// Assembly with an explicit quadrature rule; used to verify that the default
/// rule is exact for every integrand.
pub(crate) fn assemble_operators_with_rule(
    mesh: &Mesh,
    dofs: &DofMap,
    mat: &MaterialField,
    rule: TriRule,
) -> Result<OperatorSet> {
    let issues = validate_material(mat);
    if !issues.is_empty() {
        return Err(Error::InvalidMaterial(issues[0].to_string()));
    }
    if mat.n_elements() != mesh.n_triangles() {
        return Err(Error::DimensionMismatch(format!(
            "material has {} elements, mesh has {} triangles",
            mat.n_elements(),
            mesh.n_triangles()
        )));
    }

    let (n_u, n_q, n_p) = (dofs.n_u, dofs.n_q, dofs.n_p);
    let mut m_u = CooMatrix::new(n_u, n_u);
    let mut k_c = CooMatrix::new(n_u, n_u);
    let mut k_aa = CooMatrix::new(n_u, n_u);
    let mut m_k = CooMatrix::new(n_q, n_q);
    let mut a_a = CooMatrix::new(n_p, n_u);
    let mut d = CooMatrix::new(n_p, n_q);
    let mut m_p = DVector::zeros(n_p);
    let mut x_sup: f64 = 0.0;

    for t in 0..mesh.n_triangles() {
        let geom = triangle_geometry(mesh, t);
        let area = geom.area;
        let tri = mesh.triangles[t];
        let b = b_matrix(&geom);
        let cv = mat.elasticity[t].0;
        let alpha_v = mat.biot[t].voigt();
        let c0 = mat.c0[t];
        let rho = mat.rho[t];
        let kappa_inv = mat.permeability[t].inverse()?;
        x_sup = x_sup.max(alpha_c_inv_alpha(&mat.elasticity[t], &mat.biot[t])?);

        // Reduced dof indices of the 6 vertex dofs (None = eliminated).
        let u_idx: [Option<usize>; 6] = std::array::from_fn(|i| {
            let (v, comp) = (tri[i / 2], i % 2);
            dofs.u_map[2 * v + comp]
        });

        // Elastic and coupling stiffness (constant integrands).
        let k_loc = b.transpose() * cv * b * area;
        let a_row = (alpha_v.transpose() * b) * area; // 1 x 6
        let k_aa_loc = a_row.transpose() * a_row / (c0 * area);
        for i in 0..6 {
            let Some(gi) = u_idx[i] else { continue };
            for j in 0..6 {
                let Some(gj) = u_idx[j] else { continue };
                k_c.push(gi, gj, k_loc[(i, j)]);
                k_aa.push(gi, gj, k_aa_loc[(i, j)]);
            }
            a_a.push(t, gi, a_row[(0, i)]);
        }

        // Density-weighted vector mass via quadrature (quadratic integrand).
        let mut mass = SMatrix::<f64, 3, 3>::zeros();
        for &(l0, l1, l2, w) in rule {
            let lam = [l0, l1, l2];
            for i in 0..3 {
                for j in 0..3 {
                    mass[(i, j)] += w * lam[i] * lam[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let v = rho * area * mass[(i, j)];
                for comp in 0..2 {
                    let (Some(gi), Some(gj)) = (u_idx[2 * i + comp], u_idx[2 * j + comp]) else {
                        continue;
                    };
                    m_u.push(gi, gj, v);
                }
            }
        }

        // Flux mass and divergence rows.
        let te = mesh.triangle_edges[t];
        let lens: [f64; 3] = std::array::from_fn(|k| mesh.edge_length(te[k].edge));
        for k in 0..3 {
            let Some(gk) = dofs.q_map[te[k].edge] else {
                continue;
            };
            d.push(t, gk, te[k].sign * lens[k]);
            for l in 0..3 {
                let Some(gl) = dofs.q_map[te[l].edge] else {
                    continue;
                };
                let mut v = 0.0;
                for &(l0, l1, l2, w) in rule {
                    let x = quad_point(&geom, (l0, l1, l2));
                    let pk = face_basis(&geom, te[k].sign, lens[k], k, x);
                    let pl = face_basis(&geom, te[l].sign, lens[l], l, x);
                    v += w * area * (kappa_inv * pk).dot(&pl);
                }
                m_k.push(gk, gl, v);
            }
        }

        m_p[t] = c0 * area;
    }

    let c0_min = mat.c0.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(OperatorSet {
        m_u: CsrMatrix::from(&m_u),
        k_c: CsrMatrix::from(&k_c),
        k_aa: CsrMatrix::from(&k_aa),
        m_k: CsrMatrix::from(&m_k),
        a_a: CsrMatrix::from(&a_a),
        d: CsrMatrix::from(&d),
        m_p,
        n_u,
        n_q,
        n_p,
        x_sup,
        c0_min,
    })
}

/// Dual vectors `(f, h, g)` of the volume and surface data at time `t`.
///
/// `f` collects body force and traction work, `h` the mass source, and `g` the
/// Darcy forcing together with the natural drained-boundary term
/// `-int pbar (w . n)`.
pub fn assemble_loads(
    mesh: &Mesh,
    dofs: &DofMap,
    bc: &BcSpec,
    loads: &LoadSpec,
    t: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let mut f = DVector::zeros(dofs.n_u);
    let mut h = DVector::zeros(dofs.n_p);
    let mut g = DVector::zeros(dofs.n_q);

    if let Some(body) = &loads.body_force {
        let val = body.at(t);
        for (tri_i, tri) in mesh.triangles.iter().enumerate() {
            let w = mesh.areas[tri_i] / 3.0;
            for &v in tri {
                for (comp, &vc) in val.iter().enumerate() {
                    if let Some(gi) = dofs.u_map[2 * v + comp] {
                        f[gi] += w * vc;
                    }
                }
            }
        }
    }
    if let Some(source) = &loads.mass_source {
        let val = source.at(t);
        for tri_i in 0..mesh.n_triangles() {
            h[tri_i] += val * mesh.areas[tri_i];
        }
    }
    if let Some(darcy) = &loads.darcy_force {
        let val = Vector2::new(darcy.at(t)[0], darcy.at(t)[1]);
        for tri_i in 0..mesh.n_triangles() {
            let geom = triangle_geometry(mesh, tri_i);
            let cen = mesh.centroid(tri_i);
            for (k, te) in mesh.triangle_edges[tri_i].iter().enumerate() {
                let Some(gk) = dofs.q_map[te.edge] else { continue };
                // Exact integral of the face basis: sign * len * (centroid - P_opp) / 2.
                let p = geom.coords[k];
                let int =
                    Vector2::new(cen[0] - p[0], cen[1] - p[1]) * (te.sign * mesh.edge_length(te.edge) / 2.0);
                g[gk] += int.dot(&val);
            }
        }
    }

    for (e, tag) in mesh.boundary.iter().enumerate() {
        let Some(tag) = tag else { continue };
        let side = bc.side(*tag);
        if let DisplacementBc::Traction(tr) = &side.displacement {
            let val = tr.at(t);
            let w = mesh.edge_length(e) / 2.0;
            for &v in &mesh.edges[e] {
                for (comp, &vc) in val.iter().enumerate() {
                    if let Some(gi) = dofs.u_map[2 * v + comp] {
                        f[gi] += w * vc;
                    }
                }
            }
        }
        if let FlowBc::Drained(pbar) = &side.flow {
            if let Some(gq) = dofs.q_map[e] {
                g[gq] -= pbar.at(t) * mesh.boundary_sign[e] * mesh.edge_length(e);
            }
        }
    }

    (f, h, g)
}

/// Verify that element divergences of the face space match boundary integrals
/// of the reconstructed normal flux: for 20 random discrete fluxes, compare
/// `(D q)_T` against the quadrature of `q . n` over the triangle boundary and
/// return the largest absolute discrepancy.
pub fn divergence_check(mesh: &Mesh, dofs: &DofMap) -> f64 {
    let mut rng = StdRng::seed_from_u64(0x0d1f);
    let gauss = [
        0.5 - 0.5 / f64::sqrt(3.0),
        0.5 + 0.5 / f64::sqrt(3.0),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let q = DVector::from_fn(dofs.n_q, |_, _| rng.random_range(-1.0..1.0));
        for t in 0..mesh.n_triangles() {
            let geom = triangle_geometry(mesh, t);
            let te = mesh.triangle_edges[t];
            let lens: [f64; 3] = std::array::from_fn(|k| mesh.edge_length(te[k].edge));
            let coef: [f64; 3] =
                std::array::from_fn(|k| dofs.q_map[te[k].edge].map_or(0.0, |g| q[g]));
            // Element divergence from the assembled rows.
            let lhs: f64 = (0..3).map(|k| coef[k] * te[k].sign * lens[k]).sum();
            // Boundary integral of the reconstructed field.
            let field = |x: Vector2<f64>| -> Vector2<f64> {
                (0..3)
                    .map(|k| face_basis(&geom, te[k].sign, lens[k], k, x) * coef[k])
                    .sum()
            };
            let mut rhs = 0.0;
            for k in 0..3 {
                // Edge opposite vertex k runs between the other two vertices.
                let a = Vector2::new(
                    geom.coords[(k + 1) % 3][0],
                    geom.coords[(k + 1) % 3][1],
                );
                let b = Vector2::new(
                    geom.coords[(k + 2) % 3][0],
                    geom.coords[(k + 2) % 3][1],
                );
                let n_out = mesh.edge_normal(te[k].edge);
                let n_out = Vector2::new(n_out[0], n_out[1]) * te[k].sign;
                for s in gauss {
                    let x = a + (b - a) * s;
                    rhs += 0.5 * lens[k] * field(x).dot(&n_out);
                }
            }
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}
