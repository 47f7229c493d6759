//! Periodic uniform chart grids on the (m+1)-torus and the field types
//! sampled on them.
//!
//! All fields store node-major flat arrays; node `(i₁, …, i_D)` lives at
//! `Σ iₖ·strideₖ`. Construction is node-parallel and deterministic.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::CoreError;
use crate::Result;

/// Uniform periodic grid on `[0,1)^{m+1}` with equal resolution per axis.
#[derive(Debug)]
pub struct ChartGrid {
    dim: usize,
    resolution: usize,
    len: usize,
    strides: Vec<usize>,
    spacing: f64,
}

impl ChartGrid {
    pub fn new(dim: usize, resolution: usize) -> Result<Arc<Self>> {
        if !(3..=4).contains(&dim) {
            return Err(CoreError::Config(format!(
                "dimension m+1 = {dim} unsupported; expected 3 or 4"
            )));
        }
        if resolution < 8 {
            return Err(CoreError::Config(format!(
                "resolution {resolution} below the minimum of 8"
            )));
        }
        let len = resolution.pow(dim as u32);
        // Last axis fastest: stride[dim-1] = 1.
        let mut strides = vec![1usize; dim];
        for k in (0..dim - 1).rev() {
            strides[k] = strides[k + 1] * resolution;
        }
        Ok(Arc::new(Self {
            dim,
            resolution,
            len,
            strides,
            spacing: 1.0 / resolution as f64,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Leaf dimension m.
    pub fn m(&self) -> usize {
        self.dim - 1
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Index of the leaf coordinate (the foliation is by level sets of the
    /// last axis).
    pub fn leaf_axis(&self) -> usize {
        self.dim - 1
    }

    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.resolution
    }

    /// Coordinates of a node in `[0,1)^{dim}`.
    pub fn coords(&self, node: usize, out: &mut [f64]) {
        for axis in 0..self.dim {
            out[axis] = self.axis_index(node, axis) as f64 * self.spacing;
        }
    }

    pub fn coords_vec(&self, node: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        self.coords(node, &mut c);
        c
    }

    /// Periodic neighbor `offset` steps along `axis`.
    pub fn neighbor(&self, node: usize, axis: usize, offset: isize) -> usize {
        let res = self.resolution as isize;
        let i = self.axis_index(node, axis) as isize;
        let j = (i + offset).rem_euclid(res) as usize;
        node + j * self.strides[axis] - i as usize * self.strides[axis]
    }
}

fn par_tabulate<F>(len: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut data = vec![0.0; len * width];
    data.par_chunks_mut(width)
        .enumerate()
        .for_each(|(node, out)| f(node, out));
    data
}

/// Per-node scalar samples.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<ChartGrid>,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn from_fn<F>(grid: &Arc<ChartGrid>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let g = grid.clone();
        let data = par_tabulate(grid.len(), 1, |node, out| {
            let mut c = vec![0.0; g.dim()];
            g.coords(node, &mut c);
            out[0] = f(&c);
        });
        Self {
            grid: grid.clone(),
            data,
        }
    }

    pub fn constant(grid: &Arc<ChartGrid>, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: &Arc<ChartGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    /// Max - min, checking constancy of sampled fields.
    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }

    /// Advisory smoothness diagnostic: fraction of spectral energy in the
    /// top half of wavenumbers along one grid line through the origin.
    pub fn spectral_tail_ratio(&self, axis: usize) -> f64 {
        let res = self.grid.resolution();
        let line: Vec<f64> = (0..res)
            .map(|i| self.data[self.grid.neighbor(0, axis, i as isize)])
            .collect();
        let mean = line.iter().sum::<f64>() / res as f64;
        let mut total = 0.0;
        let mut tail = 0.0;
        for k in 1..=res / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in line.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / res as f64;
                re += (v - mean) * ang.cos();
                im += (v - mean) * ang.sin();
            }
            let p = re * re + im * im;
            total += p;
            if k > res / 4 {
                tail += p;
            }
        }
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }
}

/// Per-node vector samples in the chart basis.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Arc<ChartGrid>,
    pub data: Vec<f64>,
}

impl VectorField {
    pub fn from_fn<F>(grid: &Arc<ChartGrid>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let g = grid.clone();
        let dim = grid.dim();
        let data = par_tabulate(grid.len(), dim, |node, out| {
            let mut c = vec![0.0; g.dim()];
            g.coords(node, &mut c);
            f(&c, out);
        });
        Self {
            grid: grid.clone(),
            data,
        }
    }

    pub fn zeros(grid: &Arc<ChartGrid>) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![0.0; grid.len() * grid.dim()],
        }
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.data[node * d..(node + 1) * d]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }
}

/// Per-node covector samples in the chart basis.
#[derive(Debug, Clone)]
pub struct OneFormField {
    pub grid: Arc<ChartGrid>,
    pub data: Vec<f64>,
}

impl OneFormField {
    pub fn from_fn<F>(grid: &Arc<ChartGrid>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let v = VectorField::from_fn(grid, f);
        Self {
            grid: v.grid,
            data: v.data,
        }
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.data[node * d..(node + 1) * d]
    }
}

/// Per-node D×D matrices (row-major), used for full (1,1)-tensors and
/// leafwise operators.
#[derive(Debug, Clone)]
pub struct MatrixField {
    pub grid: Arc<ChartGrid>,
    pub data: Vec<f64>,
}

impl MatrixField {
    pub fn zeros(grid: &Arc<ChartGrid>) -> Self {
        let d = grid.dim();
        Self {
            grid: grid.clone(),
            data: vec![0.0; grid.len() * d * d],
        }
    }

    pub fn tabulate<F>(grid: &Arc<ChartGrid>, f: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let d = grid.dim();
        Self {
            grid: grid.clone(),
            data: par_tabulate(grid.len(), d * d, f),
        }
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let w = self.grid.dim() * self.grid.dim();
        &self.data[node * w..(node + 1) * w]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Max over nodes of the ∞-gap to another matrix field.
    pub fn max_gap(&self, other: &MatrixField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Per-node trace.
    pub fn trace_field(&self) -> ScalarField {
        let d = self.grid.dim();
        let data = (0..self.grid.len())
            .map(|node| {
                let m = self.at(node);
                (0..d).map(|i| m[i * d + i]).sum()
            })
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            data,
        }
    }

    /// Per-node matrix-vector application.
    pub fn apply(&self, v: &VectorField) -> VectorField {
        let d = self.grid.dim();
        let data = par_tabulate(self.grid.len(), d, |node, out| {
            let m = self.at(node);
            let x = v.at(node);
            for i in 0..d {
                out[i] = (0..d).map(|j| m[i * d + j] * x[j]).sum();
            }
        });
        VectorField {
            grid: self.grid.clone(),
            data,
        }
    }
}

/// Symmetric positive-definite metric samples with cached inverse and
/// √det per node.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: Arc<ChartGrid>,
    pub data: Vec<f64>,
    pub inv: Vec<f64>,
    pub sqrt_det: Vec<f64>,
}

impl MetricField {
    /// Sample `f(coords, out)` filling the row-major D×D matrix at each
    /// node; fails on any non-SPD sample.
    pub fn from_fn<F>(grid: &Arc<ChartGrid>, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let d = grid.dim();
        let g = grid.clone();
        let data = par_tabulate(grid.len(), d * d, |node, out| {
            let mut c = vec![0.0; g.dim()];
            g.coords(node, &mut c);
            f(&c, out);
        });
        Self::from_samples(grid, data)
    }

    pub fn from_samples(grid: &Arc<ChartGrid>, data: Vec<f64>) -> Result<Self> {
        let d = grid.dim();
        let n = grid.len();
        let mut inv = vec![0.0; n * d * d];
        let mut sqrt_det = vec![0.0; n];
        let failed: Vec<usize> = inv
            .par_chunks_mut(d * d)
            .zip(sqrt_det.par_chunks_mut(1))
            .enumerate()
            .filter_map(|(node, (inv_out, det_out))| {
                let m = DMatrix::from_row_slice(d, d, &data[node * d * d..(node + 1) * d * d]);
                match m.cholesky() {
                    Some(chol) => {
                        let l = chol.l();
                        let mut sd = 1.0;
                        for i in 0..d {
                            sd *= l[(i, i)];
                        }
                        det_out[0] = sd;
                        let mi = chol.inverse();
                        for i in 0..d {
                            for j in 0..d {
                                inv_out[i * d + j] = mi[(i, j)];
                            }
                        }
                        None
                    }
                    None => Some(node),
                }
            })
            .collect();
        if let Some(&node) = failed.first() {
            return Err(CoreError::SingularMetric(format!(
                "metric sample not positive definite at node {node}"
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            data,
            inv,
            sqrt_det,
        })
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let w = self.grid.dim() * self.grid.dim();
        &self.data[node * w..(node + 1) * w]
    }

    pub fn inv_at(&self, node: usize) -> &[f64] {
        let w = self.grid.dim() * self.grid.dim();
        &self.inv[node * w..(node + 1) * w]
    }

    pub fn sqrt_det_at(&self, node: usize) -> f64 {
        self.sqrt_det[node]
    }

    /// ⟨u, v⟩ at a node.
    pub fn inner_at(&self, node: usize, u: &[f64], v: &[f64]) -> f64 {
        let d = self.grid.dim();
        let m = self.at(node);
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += m[i * d + j] * u[i] * v[j];
            }
        }
        acc
    }

    /// Raise a covector at a node: `(a⁻¹ ω)ᵏ`.
    pub fn raise_at(&self, node: usize, omega: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        let mi = self.inv_at(node);
        for i in 0..d {
            out[i] = (0..d).map(|j| mi[i * d + j] * omega[j]).sum();
        }
    }

    /// Lower a vector at a node: `(a v)_i`.
    pub fn lower_at(&self, node: usize, v: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        let m = self.at(node);
        for i in 0..d {
            out[i] = (0..d).map(|j| m[i * d + j] * v[j]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_validation() {
        assert!(ChartGrid::new(2, 16).is_err());
        assert!(ChartGrid::new(5, 16).is_err());
        assert!(ChartGrid::new(3, 4).is_err());
        let g = ChartGrid::new(3, 8).unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(g.m(), 2);
        assert_relative_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn coords_roundtrip() {
        let g = ChartGrid::new(3, 8).unwrap();
        for node in [0usize, 1, 7, 8, 63, 511] {
            let c = g.coords_vec(node);
            let mut idx = 0;
            for axis in 0..3 {
                idx += ((c[axis] * 8.0).round() as usize) * g.strides[axis];
            }
            assert_eq!(idx, node);
        }
    }

    proptest! {
        #[test]
        fn neighbor_wraps_and_inverts(node in 0usize..4096, axis in 0usize..3, off in -9isize..9) {
            let g = ChartGrid::new(3, 16).unwrap();
            let fwd = g.neighbor(node, axis, off);
            prop_assert!(fwd < g.len());
            let back = g.neighbor(fwd, axis, -off);
            prop_assert_eq!(back, node);
            // Moving a full period is the identity.
            prop_assert_eq!(g.neighbor(node, axis, 16), node);
        }
    }

    #[test]
    fn metric_field_caches_sqrt_det() {
        let g = ChartGrid::new(3, 8).unwrap();
        let w = 0.1;
        let m = MetricField::from_fn(&g, |x, out| {
            let e = (2.0 * w * (2.0 * std::f64::consts::PI * x[2]).sin()).exp();
            out.copy_from_slice(&[e, 0.0, 0.0, 0.0, e, 0.0, 0.0, 0.0, 1.0]);
        })
        .unwrap();
        for node in [0usize, 5, 100, 511] {
            let x2 = g.coords_vec(node)[2];
            let e = (2.0 * w * (2.0 * std::f64::consts::PI * x2).sin()).exp();
            assert_relative_eq!(m.sqrt_det_at(node), e, max_relative = 1e-12);
            let mi = m.inv_at(node);
            assert_relative_eq!(mi[0], 1.0 / e, max_relative = 1e-12);
            assert_relative_eq!(mi[8], 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn non_spd_metric_rejected() {
        let g = ChartGrid::new(3, 8).unwrap();
        let r = MetricField::from_fn(&g, |_, out| {
            out.copy_from_slice(&[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        });
        assert!(matches!(r, Err(CoreError::SingularMetric(_))));
    }

    #[test]
    fn smooth_field_has_small_spectral_tail() {
        let g = ChartGrid::new(3, 32).unwrap();
        let f = ScalarField::from_fn(&g, |x| (2.0 * std::f64::consts::PI * x[2]).sin());
        assert!(f.spectral_tail_ratio(2) < 1e-10);
        let rough =
            ScalarField::from_fn(&g, |x| (2.0 * std::f64::consts::PI * 15.0 * x[2]).sin());
        assert!(rough.spectral_tail_ratio(2) > 0.5);
    }
}
