//! Fourth-order periodic finite differences, Christoffel symbols and
//! deterministic quadrature on chart grids.

use rayon::prelude::*;

use crate::grid::{ChartGrid, MatrixField, MetricField, ScalarField, VectorField};

/// Upper bound on the chart dimension, for stack scratch buffers.
pub const MAX_DIM: usize = 4;

/// Fourth-order centered first derivative from the four neighbor samples.
#[inline]
fn d4(fm2: f64, fm1: f64, fp1: f64, fp2: f64, h: f64) -> f64 {
    (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)
}

/// Derivative along `axis` of component `comp` of a `width`-striped node
/// array.
#[inline]
pub fn deriv_component(
    grid: &ChartGrid,
    data: &[f64],
    width: usize,
    comp: usize,
    node: usize,
    axis: usize,
) -> f64 {
    let m2 = grid.neighbor(node, axis, -2);
    let m1 = grid.neighbor(node, axis, -1);
    let p1 = grid.neighbor(node, axis, 1);
    let p2 = grid.neighbor(node, axis, 2);
    d4(
        data[m2 * width + comp],
        data[m1 * width + comp],
        data[p1 * width + comp],
        data[p2 * width + comp],
        grid.spacing(),
    )
}

/// ∂f/∂x_axis of a scalar field at a node.
#[inline]
pub fn scalar_derivative(f: &ScalarField, node: usize, axis: usize) -> f64 {
    deriv_component(&f.grid, &f.data, 1, 0, node, axis)
}

/// Deterministic pairwise summation; the reduction tree depends only on the
/// slice length, never on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// ∫ f dvol_a = Σ f √det(a) h^{m+1} (the periodic trapezoid rule is the
/// plain node sum).
pub fn integrate(f: &ScalarField, metric: &MetricField) -> f64 {
    let weights: Vec<f64> = f
        .data
        .par_iter()
        .zip(metric.sqrt_det.par_iter())
        .map(|(&v, &sd)| v * sd)
        .collect();
    let cell = metric.grid.spacing().powi(metric.grid.dim() as i32);
    pairwise_sum(&weights) * cell
}

/// ∫ |f| dvol_a, the reference scale for relative residuals.
pub fn integrate_abs(f: &ScalarField, metric: &MetricField) -> f64 {
    let weights: Vec<f64> = f
        .data
        .par_iter()
        .zip(metric.sqrt_det.par_iter())
        .map(|(&v, &sd)| v.abs() * sd)
        .collect();
    let cell = metric.grid.spacing().powi(metric.grid.dim() as i32);
    pairwise_sum(&weights) * cell
}

/// Metric-raised gradient (∇̄f)ᵏ = a^{kl} ∂_l f.
pub fn gradient(f: &ScalarField, metric: &MetricField) -> VectorField {
    let grid = f.grid.clone();
    let d = grid.dim();
    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, v)| {
            let mut df = [0.0; MAX_DIM];
            for (axis, slot) in df.iter_mut().enumerate().take(d) {
                *slot = scalar_derivative(f, node, axis);
            }
            let mi = metric.inv_at(node);
            for i in 0..d {
                v[i] = (0..d).map(|j| mi[i * d + j] * df[j]).sum();
            }
        });
    out
}

/// Directional derivative X(f) = Xᵏ ∂_k f of a scalar field.
pub fn directional_scalar(f: &ScalarField, x: &VectorField) -> ScalarField {
    let grid = f.grid.clone();
    let d = grid.dim();
    let mut out = ScalarField::zeros(&grid);
    out.data
        .par_iter_mut()
        .enumerate()
        .for_each(|(node, slot)| {
            let xv = x.at(node);
            let mut acc = 0.0;
            for axis in 0..d {
                acc += xv[axis] * scalar_derivative(f, node, axis);
            }
            *slot = acc;
        });
    out
}

/// div̄ X = (det a)^{-1/2} ∂_k (√det(a) Xᵏ); in this form the quadrature of
/// the divergence of any periodic field telescopes to round-off.
pub fn divergence(x: &VectorField, metric: &MetricField) -> ScalarField {
    let grid = x.grid.clone();
    let d = grid.dim();
    let flux: Vec<f64> = (0..grid.len() * d)
        .into_par_iter()
        .map(|i| x.data[i] * metric.sqrt_det[i / d])
        .collect();
    let mut out = ScalarField::zeros(&grid);
    out.data
        .par_iter_mut()
        .enumerate()
        .for_each(|(node, slot)| {
            let mut acc = 0.0;
            for axis in 0..d {
                acc += deriv_component(&grid, &flux, d, axis, node, axis);
            }
            *slot = acc / metric.sqrt_det_at(node);
        });
    out
}

/// Christoffel symbols Γᵏ_{ij} of the metric at one node, written to
/// `out[(k*D + i)*D + j]`; fourth-order differences of the metric samples.
pub fn christoffel_at(metric: &MetricField, node: usize, out: &mut [f64]) {
    let grid = &metric.grid;
    let d = grid.dim();
    // dmet[axis][l*d + j] = ∂_axis a_{lj}
    let mut dmet = [[0.0; MAX_DIM * MAX_DIM]; MAX_DIM];
    for (axis, slot) in dmet.iter_mut().enumerate().take(d) {
        for l in 0..d {
            for j in 0..=l {
                let v = deriv_component(grid, &metric.data, d * d, l * d + j, node, axis);
                slot[l * d + j] = v;
                slot[j * d + l] = v;
            }
        }
    }
    let mi = metric.inv_at(node);
    for k in 0..d {
        for i in 0..d {
            for j in 0..=i {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += mi[k * d + l]
                        * (dmet[i][l * d + j] + dmet[j][l * d + i] - dmet[l][i * d + j]);
                }
                let v = 0.5 * acc;
                out[(k * d + i) * d + j] = v;
                out[(k * d + j) * d + i] = v;
            }
        }
    }
}

/// Full covariant derivative of a vector field as a (1,1)-tensor field:
/// `M[k][i] = (∇̄u)ᵏ_i = ∂_i uᵏ + Γᵏ_{il} uˡ`, so that `M v = ∇̄_v u`.
pub fn covariant_matrix(u: &VectorField, metric: &MetricField) -> MatrixField {
    let grid = u.grid.clone();
    let d = grid.dim();
    MatrixField::tabulate(&grid, |node, out| {
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        christoffel_at(metric, node, &mut gamma);
        let uv = u.at(node);
        for k in 0..d {
            for i in 0..d {
                let mut acc = deriv_component(&grid, &u.data, d, k, node, i);
                for l in 0..d {
                    acc += gamma[(k * d + i) * d + l] * uv[l];
                }
                out[k * d + i] = acc;
            }
        }
    })
}

/// ∇̄_X u at every node.
pub fn covariant_along(x: &VectorField, u: &VectorField, metric: &MetricField) -> VectorField {
    let grid = u.grid.clone();
    let d = grid.dim();
    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, slot)| {
            let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
            christoffel_at(metric, node, &mut gamma);
            let xv = x.at(node);
            let uv = u.at(node);
            for k in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    let mut di = deriv_component(&grid, &u.data, d, k, node, i);
                    for l in 0..d {
                        di += gamma[(k * d + i) * d + l] * uv[l];
                    }
                    acc += xv[i] * di;
                }
                slot[k] = acc;
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn flat_metric(grid: &std::sync::Arc<ChartGrid>) -> MetricField {
        let d = grid.dim();
        MetricField::from_fn(grid, |_, out| {
            out.fill(0.0);
            for i in 0..d {
                out[i * d + i] = 1.0;
            }
        })
        .unwrap()
    }

    /// a = e^{2w(t)}(dx₁² + dx₂²) + dt², w = amp·sin(2πt).
    fn warped_metric(grid: &std::sync::Arc<ChartGrid>, amp: f64) -> MetricField {
        MetricField::from_fn(grid, |x, out| {
            let e = (2.0 * amp * (TAU * x[2]).sin()).exp();
            out.copy_from_slice(&[e, 0.0, 0.0, 0.0, e, 0.0, 0.0, 0.0, 1.0]);
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn pairwise_matches_sequential(xs in proptest::collection::vec(-1.0e3f64..1.0e3, 0..500)) {
            let naive: f64 = xs.iter().sum();
            let pw = pairwise_sum(&xs);
            prop_assert!((naive - pw).abs() <= 1e-9 * naive.abs().max(1.0));
        }
    }

    #[test]
    fn integrate_exactness() {
        let g = ChartGrid::new(3, 16).unwrap();
        let metric = flat_metric(&g);
        let one = ScalarField::constant(&g, 1.0);
        assert_eq!(integrate(&one, &metric), 1.0);

        let sin2 = ScalarField::from_fn(&g, |x| (TAU * x[2]).sin().powi(2));
        assert_relative_eq!(integrate(&sin2, &metric), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn integrate_periodic_exact_derivative() {
        // -w' e^{2w} = -(1/2)(e^{2w})': integral over the period vanishes to
        // spectral accuracy.
        let g = ChartGrid::new(3, 32).unwrap();
        let metric = flat_metric(&g);
        let amp = 0.1;
        let f = ScalarField::from_fn(&g, |x| {
            let w = amp * (TAU * x[2]).sin();
            let wp = amp * TAU * (TAU * x[2]).cos();
            -wp * (2.0 * w).exp()
        });
        assert!(integrate(&f, &metric).abs() <= 1e-12);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = ChartGrid::new(3, 8).unwrap();
        let metric = flat_metric(&g);
        let f = ScalarField::constant(&g, 3.25);
        let grad = gradient(&f, &metric);
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn divergence_analytic_on_warped_torus() {
        let g = ChartGrid::new(3, 32).unwrap();
        let amp = 0.1;
        let metric = warped_metric(&g, amp);
        // X = sin(2πx₁)∂₁ + cos(2πt)∂ₜ.
        let x = VectorField::from_fn(&g, |c, out| {
            out.copy_from_slice(&[(TAU * c[0]).sin(), 0.0, (TAU * c[2]).cos()]);
        });
        let div = divergence(&x, &metric);
        let mut worst = 0.0_f64;
        for node in (0..g.len()).step_by(97) {
            let c = g.coords_vec(node);
            let w = amp * (TAU * c[2]).sin();
            let wp = amp * TAU * (TAU * c[2]).cos();
            let expected = TAU * (TAU * c[0]).cos() + 2.0 * wp * (TAU * c[2]).cos()
                - TAU * (TAU * c[2]).sin();
            worst = worst.max((div.data[node] - expected).abs());
            let _ = w;
        }
        assert!(worst <= 5e-3, "divergence error {worst:.3e}");
    }

    #[test]
    fn divergence_theorem_on_closed_torus() {
        let g = ChartGrid::new(3, 16).unwrap();
        let metric = warped_metric(&g, 0.1);
        let x = VectorField::from_fn(&g, |c, out| {
            out.copy_from_slice(&[
                (TAU * c[0]).sin() * (TAU * c[2]).cos(),
                (TAU * c[1]).cos(),
                (TAU * c[2]).sin() + 0.3 * (TAU * c[0]).cos(),
            ]);
        });
        let div = divergence(&x, &metric);
        assert!(integrate(&div, &metric).abs() <= 1e-11);
    }

    #[test]
    fn christoffel_flat_is_zero() {
        let g = ChartGrid::new(3, 8).unwrap();
        let metric = flat_metric(&g);
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        for node in [0usize, 17, 300] {
            christoffel_at(&metric, node, &mut gamma);
            assert!(gamma.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn christoffel_warped_matches_analytic() {
        let g = ChartGrid::new(3, 32).unwrap();
        let amp = 0.1;
        let metric = warped_metric(&g, amp);
        let d = 3;
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        let mut worst = 0.0_f64;
        for node in (0..g.len()).step_by(61) {
            let t = g.coords_vec(node)[2];
            let w = amp * (TAU * t).sin();
            let wp = amp * TAU * (TAU * t).cos();
            christoffel_at(&metric, node, &mut gamma);
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let expected = if k == 2 && i < 2 && j < 2 && i == j {
                            -wp * (2.0 * w).exp()
                        } else if k < 2 && ((i == k && j == 2) || (i == 2 && j == k)) {
                            wp
                        } else {
                            0.0
                        };
                        worst = worst.max((gamma[(k * d + i) * d + j] - expected).abs());
                    }
                }
            }
        }
        assert!(worst <= 2e-4, "christoffel error {worst:.3e}");
    }

    #[test]
    fn christoffel_metric_compatibility() {
        // ∇̄a = 0: ∂_k a_ij − Γˡ_{ki} a_lj − Γˡ_{kj} a_il numerically small.
        let g = ChartGrid::new(3, 32).unwrap();
        let metric = warped_metric(&g, 0.1);
        let d = 3;
        let mut gamma = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        let mut worst = 0.0_f64;
        for node in (0..g.len()).step_by(173) {
            christoffel_at(&metric, node, &mut gamma);
            let a = metric.at(node);
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let mut v = deriv_component(&g, &metric.data, d * d, i * d + j, node, k);
                        for l in 0..d {
                            v -= gamma[(l * d + k) * d + i] * a[l * d + j]
                                + gamma[(l * d + k) * d + j] * a[i * d + l];
                        }
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        assert!(worst <= 2e-4, "compatibility defect {worst:.3e}");
    }

    #[test]
    fn covariant_matrix_applies_directionally() {
        let g = ChartGrid::new(3, 16).unwrap();
        let metric = warped_metric(&g, 0.1);
        let u = VectorField::from_fn(&g, |c, out| {
            out.copy_from_slice(&[(TAU * c[2]).cos(), 0.1, (TAU * c[0]).sin()]);
        });
        let x = VectorField::from_fn(&g, |c, out| {
            out.copy_from_slice(&[0.3, (TAU * c[2]).sin(), 1.0]);
        });
        let m = covariant_matrix(&u, &metric);
        let direct = covariant_along(&x, &u, &metric);
        let via_matrix = m.apply(&x);
        let mut worst = 0.0_f64;
        for i in 0..direct.data.len() {
            worst = worst.max((direct.data[i] - via_matrix.data[i]).abs());
        }
        assert!(worst <= 1e-12, "matrix application gap {worst:.3e}");
    }
}
