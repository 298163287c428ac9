//! Element kernels and global assembly over the FCM quadrature points.
//!
//! Element matrices are computed in parallel chunks and scattered into the
//! global matrix sequentially in leaf order, so results do not depend on
//! the thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::Discretization;
use crate::geometry::Point;
use crate::linalg::CsrMatrix;
use crate::mesh::{BasisScratch, LeafBasis, MlhpMesh};
use crate::model::Tensor;

const CHUNK: usize = 64;

/// Shape function values and physical gradients of one leaf at a list of
/// points, stored point-major.
pub(crate) struct Tabulation {
    pub n: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new<'a>(mesh: &MlhpMesh, basis: &LeafBasis, points: impl Iterator<Item = &'a Point>) -> Self {
        let n = basis.len();
        let mut scratch = BasisScratch::default();
        let mut v = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut values = Vec::new();
        let mut grads = Vec::new();
        for x in points {
            mesh.eval_leaf(basis, x, &mut scratch, &mut v, &mut g);
            values.extend_from_slice(&v);
            grads.extend_from_slice(&g);
        }
        Self { n, values, grads }
    }

    pub fn npoints(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.values.len() / self.n
        }
    }

    pub fn value(&self, q: usize, coeffs: &[f64], dofs: &[usize]) -> f64 {
        let row = &self.values[q * self.n..(q + 1) * self.n];
        row.iter().zip(dofs).map(|(v, &d)| v * coeffs[d]).sum()
    }

    /// Displacement gradient ∂u_i/∂x_j from interleaved coefficients.
    pub fn displacement_gradient(&self, q: usize, u: &[f64], dofs: &[usize], dim: usize) -> Tensor {
        let mut out = Tensor::zeros();
        for (g, &d) in self.grads[q * self.n..(q + 1) * self.n].iter().zip(dofs) {
            for i in 0..dim {
                let c = u[d * dim + i];
                for j in 0..dim {
                    out[(i, j)] += c * g[j];
                }
            }
        }
        out
    }
}

pub(crate) fn tabulate_leaf(disc: &Discretization, pos: usize) -> Tabulation {
    let mesh = disc.mesh();
    Tabulation::new(mesh, &mesh.leaf_bases()[pos], disc.leaf_points(pos).iter().map(|q| &q.x))
}

/// Global vector unknowns of a leaf in element order (component-major).
pub(crate) fn vector_dofs(dofs: &[usize], dim: usize) -> Vec<usize> {
    (0..dim).flat_map(|c| dofs.iter().map(move |&d| d * dim + c)).collect()
}

/// Isotropic stiffness Σ_q c_q Bᵀ D B for one element.
pub(crate) fn elastic_element(tab: &Tabulation, coef: &[f64], dim: usize, lambda: f64, mu: f64) -> DMatrix<f64> {
    let n = tab.n;
    let npts = coef.len();
    let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(dim);
    let mut gc: Vec<DMatrix<f64>> = Vec::with_capacity(dim);
    for k in 0..dim {
        let gk = DMatrix::from_fn(n, npts, |a, q| tab.grads[q * n + a][k]);
        let gck = DMatrix::from_fn(n, npts, |a, q| tab.grads[q * n + a][k] * coef[q]);
        g.push(gk);
        gc.push(gck);
    }
    let mut a: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let m = &g[i] * gc[j].transpose();
            if i == j {
                a[i * dim + i] = 0.5 * (&m + m.transpose());
            } else {
                a[j * dim + i] = m.transpose();
                a[i * dim + j] = m;
            }
        }
    }
    let mut trace = DMatrix::zeros(n, n);
    for k in 0..dim {
        trace += &a[k * dim + k];
    }
    let mut ke = DMatrix::zeros(n * dim, n * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut block = lambda * &a[i * dim + j] + mu * &a[j * dim + i];
            if i == j {
                block += mu * &trace;
            }
            ke.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
    }
    ke
}

/// Σ_q (m_q N Nᵀ + d_q ∇N·∇Nᵀ) for one element.
pub(crate) fn scalar_element(tab: &Tabulation, mass: &[f64], diffusion: &[f64], dim: usize) -> DMatrix<f64> {
    let n = tab.n;
    let npts = mass.len();
    let v = DMatrix::from_fn(n, npts, |a, q| tab.values[q * n + a]);
    let vm = DMatrix::from_fn(n, npts, |a, q| tab.values[q * n + a] * mass[q]);
    let mut k = &v * vm.transpose();
    if diffusion.iter().any(|&d| d != 0.0) {
        for axis in 0..dim {
            let g = DMatrix::from_fn(n, npts, |a, q| tab.grads[q * n + a][axis]);
            let gd = DMatrix::from_fn(n, npts, |a, q| tab.grads[q * n + a][axis] * diffusion[q]);
            k += &g * gd.transpose();
        }
    }
    0.5 * (&k + k.transpose())
}

/// Assembles per-leaf dense blocks produced by `element` (which may skip a
/// leaf by returning `None`) into a matrix over `pattern`.
pub(crate) fn assemble<F>(disc: &Discretization, vector: bool, element: F) -> CsrMatrix
where
    F: Fn(usize) -> Option<(Vec<usize>, DMatrix<f64>)> + Sync,
{
    let pattern = if vector { disc.vector_pattern() } else { disc.scalar_pattern() };
    let mut out = CsrMatrix::zeros(pattern.clone());
    let nleaves = disc.mesh().leaves().len();
    let positions: Vec<usize> = (0..nleaves).collect();
    for chunk in positions.chunks(CHUNK * rayon::current_num_threads().max(1)) {
        let blocks: Vec<Option<(Vec<usize>, DMatrix<f64>)>> = chunk.par_iter().map(|&pos| element(pos)).collect();
        for (dofs, ke) in blocks.into_iter().flatten() {
            // ke is symmetric, so its column-major storage is also row-major
            out.add_dense(&dofs, ke.as_slice());
        }
    }
    out
}

/// Scalar matrix with per-point mass and diffusion coefficients (global
/// point order). `active` optionally restricts assembly to some leaves.
pub(crate) fn scalar_matrix(
    disc: &Discretization,
    mass: &[f64],
    diffusion: &[f64],
    active: Option<&[bool]>,
) -> CsrMatrix {
    let dim = disc.dim();
    assemble(disc, false, |pos| {
        if active.is_some_and(|a| !a[pos]) {
            return None;
        }
        let basis = &disc.mesh().leaf_bases()[pos];
        if basis.is_empty() {
            return None;
        }
        let range = disc.point_offset(pos)..disc.point_offset(pos + 1);
        let tab = tabulate_leaf(disc, pos);
        Some((basis.dofs.clone(), scalar_element(&tab, &mass[range.clone()], &diffusion[range], dim)))
    })
}

/// Elastic stiffness with per-point coefficient (weight · α · g).
pub(crate) fn elastic_matrix(
    disc: &Discretization,
    coef: &[f64],
    lambda: f64,
    mu: f64,
    active: Option<&[bool]>,
) -> CsrMatrix {
    let dim = disc.dim();
    assemble(disc, true, |pos| {
        if active.is_some_and(|a| !a[pos]) {
            return None;
        }
        let basis = &disc.mesh().leaf_bases()[pos];
        if basis.is_empty() {
            return None;
        }
        let range = disc.point_offset(pos)..disc.point_offset(pos + 1);
        let tab = tabulate_leaf(disc, pos);
        Some((vector_dofs(&basis.dofs, dim), elastic_element(&tab, &coef[range], dim, lambda, mu)))
    })
}

/// Σ_q f_q N_a(x_q) for per-point values `f` (already weighted).
pub(crate) fn scalar_load(disc: &Discretization, f: &[f64]) -> Vec<f64> {
    let nleaves = disc.mesh().leaves().len();
    let parts: Vec<Vec<f64>> = (0..nleaves)
        .into_par_iter()
        .map(|pos| {
            let tab = tabulate_leaf(disc, pos);
            let off = disc.point_offset(pos);
            let mut local = vec![0.0; tab.n];
            for q in 0..tab.npoints() {
                let fq = f[off + q];
                for (a, l) in local.iter_mut().enumerate() {
                    *l += fq * tab.values[q * tab.n + a];
                }
            }
            local
        })
        .collect();
    let mut out = vec![0.0; disc.mesh().ndof()];
    for (pos, local) in parts.into_iter().enumerate() {
        for (&d, v) in disc.mesh().leaf_bases()[pos].dofs.iter().zip(local) {
            out[d] += v;
        }
    }
    out
}

/// Applies `f` to every leaf in parallel and concatenates the per-point
/// results in global point order.
pub(crate) fn map_points<T: Send>(
    disc: &Discretization,
    f: impl Fn(usize, &Tabulation, &[usize]) -> Vec<T> + Sync,
) -> Vec<T> {
    let nleaves = disc.mesh().leaves().len();
    let parts: Vec<Vec<T>> = (0..nleaves)
        .into_par_iter()
        .map(|pos| {
            let tab = tabulate_leaf(disc, pos);
            f(pos, &tab, &disc.mesh().leaf_bases()[pos].dofs)
        })
        .collect();
    parts.into_iter().flatten().collect()
}

pub(crate) fn scalar_at_points(disc: &Discretization, coeffs: &[f64]) -> Vec<f64> {
    map_points(disc, |_, tab, dofs| (0..tab.npoints()).map(|q| tab.value(q, coeffs, dofs)).collect())
}

pub(crate) fn strains_at_points(disc: &Discretization, u: &[f64]) -> Vec<Tensor> {
    let dim = disc.dim();
    map_points(disc, |_, tab, dofs| {
        (0..tab.npoints())
            .map(|q| crate::model::strain(&tab.displacement_gradient(q, u, dofs, dim)))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    #[test]
    fn elastic_element_matches_pointwise_bdb() {
        // oracle: explicit Voigt B-matrix product on one point of a 3D cell
        let mesh = MlhpMesh::create_base_grid(Aabb::new([0.0; 3], [1.0, 2.0, 0.5]), [1, 1, 1], 2, 3).unwrap();
        let basis = &mesh.leaf_bases()[0];
        let x = [0.3, 1.1, 0.2];
        let tab = Tabulation::new(&mesh, basis, std::iter::once(&x));
        let (lambda, mu) = (1.7, 0.9);
        let ke = elastic_element(&tab, &[0.8], 3, lambda, mu);
        let n = tab.n;
        let mut d = DMatrix::<f64>::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = lambda;
            }
            d[(i, i)] += 2.0 * mu;
            d[(i + 3, i + 3)] = mu;
        }
        let mut b = DMatrix::<f64>::zeros(6, 3 * n);
        for a in 0..n {
            let g = tab.grads[a];
            for c in 0..3 {
                b[(c, c * n + a)] = g[c];
            }
            // engineering shear strains γ_xy, γ_yz, γ_xz
            b[(3, a)] = g[1];
            b[(3, n + a)] = g[0];
            b[(4, n + a)] = g[2];
            b[(4, 2 * n + a)] = g[1];
            b[(5, a)] = g[2];
            b[(5, 2 * n + a)] = g[0];
        }
        let oracle = 0.8 * b.transpose() * d * b;
        assert!((ke - oracle).abs().max() < 1e-12);
    }
}
