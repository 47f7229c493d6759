//! Foliation data on a chart grid: the unit normal field of the leaf
//! coordinate, tangent projectors, background shape operator, normal-flow
//! curvature and deformation tensors.

use rayon::prelude::*;

use crate::calculus::{covariant_along, deriv_component, MAX_DIM};
use crate::calculus::christoffel_at;
use crate::grid::{MatrixField, MetricField, OneFormField, ScalarField, VectorField};
use crate::Result;

/// Per-node leafwise (1,1)-tensors stored as full-chart matrices with the
/// tangent projector applied on both sides.
pub type LeafOperatorField = MatrixField;

/// Foliation by level sets of the last chart coordinate.
#[derive(Debug, Clone)]
pub struct Foliation {
    /// a-unit normal field, proportional to the raised differential of the
    /// leaf coordinate.
    pub normal: VectorField,
    /// N♭ = a(N, ·).
    pub normal_flat: OneFormField,
    /// Tangent projector P = Id − N ⊗ N♭ per node.
    pub projector: MatrixField,
    /// Index of the leaf coordinate.
    pub leaf_axis: usize,
}

impl Foliation {
    pub fn new(metric: &MetricField) -> Result<Self> {
        let grid = metric.grid.clone();
        let d = grid.dim();
        let axis = grid.leaf_axis();

        let mut normal = VectorField::zeros(&grid);
        normal
            .data
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(node, out)| {
                let mi = metric.inv_at(node);
                // Raised differential of the leaf coordinate.
                for (i, slot) in out.iter_mut().enumerate().take(d) {
                    *slot = mi[i * d + axis];
                }
                let norm = mi[axis * d + axis].sqrt();
                for slot in out.iter_mut().take(d) {
                    *slot /= norm;
                }
            });

        let mut normal_flat = OneFormField::from_fn(&grid, |_, out| out.fill(0.0));
        normal_flat
            .data
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(node, out)| {
                let n = &normal.data[node * d..(node + 1) * d];
                metric.lower_at(node, n, out);
            });

        let projector = MatrixField::tabulate(&grid, |node, out| {
            let n = &normal.data[node * d..(node + 1) * d];
            let nf = &normal_flat.data[node * d..(node + 1) * d];
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = if i == j { 1.0 } else { 0.0 };
                    out[i * d + j] -= n[i] * nf[j];
                }
            }
        });

        Ok(Self {
            normal,
            normal_flat,
            projector,
            leaf_axis: axis,
        })
    }

    /// Apply the tangent projector to a vector field.
    pub fn project_vector(&self, v: &VectorField) -> VectorField {
        self.projector.apply(v)
    }

    /// P M P at every node.
    pub fn restrict_operator(&self, m: &MatrixField) -> LeafOperatorField {
        let grid = m.grid.clone();
        let d = grid.dim();
        MatrixField::tabulate(&grid, |node, out| {
            let p = self.projector.at(node);
            let a = m.at(node);
            let mut tmp = [0.0; MAX_DIM * MAX_DIM];
            for i in 0..d {
                for j in 0..d {
                    tmp[i * d + j] = (0..d).map(|k| a[i * d + k] * p[k * d + j]).sum();
                }
            }
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = (0..d).map(|k| p[i * d + k] * tmp[k * d + j]).sum();
                }
            }
        })
    }
}

/// Background shape operator Ā(u) = −∇̄_u N, leaf-restricted.
pub fn shape_operator_bar(metric: &MetricField, fol: &Foliation) -> LeafOperatorField {
    let grid = metric.grid.clone();
    let d = grid.dim();
    let raw = MatrixField::tabulate(&grid, |node, out| {
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        christoffel_at(metric, node, &mut gamma);
        let n = fol.normal.at(node);
        for k in 0..d {
            for i in 0..d {
                let mut acc = deriv_component(&grid, &fol.normal.data, d, k, node, i);
                for l in 0..d {
                    acc += gamma[(k * d + i) * d + l] * n[l];
                }
                out[k * d + i] = -acc;
            }
        }
    });
    fol.restrict_operator(&raw)
}

/// Curvature vector of the N-flow: Z̄ = ∇̄_N N.
pub fn curvature_vector_bar(metric: &MetricField, fol: &Foliation) -> VectorField {
    covariant_along(&fol.normal, &fol.normal, metric)
}

/// Deformation tensor of a vector field u as a (1,1)-tensor:
/// Def̄_u = ½(∇̄u + (∇̄u)ᵗ), with the a-conjugate a⁻¹ (∇̄u)ᵀ a.
pub fn deformation_tensor(metric: &MetricField, u: &VectorField) -> MatrixField {
    let grid = metric.grid.clone();
    let d = grid.dim();
    let nabla = crate::calculus::covariant_matrix(u, metric);
    MatrixField::tabulate(&grid, |node, out| {
        let a = metric.at(node);
        let ai = metric.inv_at(node);
        let m = nabla.at(node);
        // conj = a⁻¹ mᵀ a
        let mut mta = [0.0; MAX_DIM * MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                mta[i * d + j] = (0..d).map(|k| m[k * d + i] * a[k * d + j]).sum();
            }
        }
        for i in 0..d {
            for j in 0..d {
                let conj: f64 = (0..d).map(|k| ai[i * d + k] * mta[k * d + j]).sum();
                out[i * d + j] = 0.5 * (m[i * d + j] + conj);
            }
        }
    })
}

/// Projected gradient ∇̄⊤f = P ∇̄f.
pub fn gradient_top(f: &ScalarField, metric: &MetricField, fol: &Foliation) -> VectorField {
    fol.project_vector(&crate::calculus::gradient(f, metric))
}
