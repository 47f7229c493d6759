//! Leaf operators of the perturbed metric g: the shape operator and
//! normal-flow curvature, each computed two ways — by the closed per-node
//! formulae driven by the frame fields, and by a direct connection-based
//! oracle on the sampled g metric. Family-specific closed-form displays are
//! provided for cross-checking.
//!
//! Every derivative of a frame scalar is a numerical derivative of the
//! sampled field; nothing is chain-ruled through φ by hand. The closed-form
//! expressions are transcribed term by term and deliberately not simplified.

use rayon::prelude::*;

use crate::calculus::{covariant_along, directional_scalar, divergence, MAX_DIM};
use crate::foliation::{
    curvature_vector_bar, deformation_tensor, gradient_top, shape_operator_bar, LeafOperatorField,
};
use crate::frame_field::FrameField;
use crate::grid::{MatrixField, MetricField, ScalarField, VectorField};
use crate::scenario::Geometry;
use crate::{CoreError, Result};

/// Background leaf operators shared by every downstream formula.
pub struct LeafData {
    /// Ā, leaf-restricted.
    pub a_bar: LeafOperatorField,
    /// Z̄ = ∇̄_N N.
    pub z_bar: VectorField,
    /// Def̄_{β♯}, full (1,1)-tensor.
    pub def_beta: MatrixField,
    /// (Def̄_{β♯})⊤, leaf-restricted.
    pub def_beta_top: LeafOperatorField,
    /// div̄ β♯.
    pub div_beta: ScalarField,
    /// Ā(β^{♯⊤}).
    pub a_bar_bst: VectorField,
}

pub fn leaf_data(geom: &Geometry, ff: &FrameField) -> LeafData {
    let a_bar = shape_operator_bar(&geom.metric, &geom.foliation);
    let z_bar = curvature_vector_bar(&geom.metric, &geom.foliation);
    let def_beta = deformation_tensor(&geom.metric, &geom.beta_sharp);
    let def_beta_top = geom.foliation.restrict_operator(&def_beta);
    let div_beta = divergence(&geom.beta_sharp, &geom.metric);
    let a_bar_bst = a_bar.apply(&ff.beta_sharp_top);
    LeafData {
        a_bar,
        z_bar,
        def_beta,
        def_beta_top,
        div_beta,
        a_bar_bst,
    }
}

/// The vector U entering the shape-operator formula, assembled term by term:
/// ½n(γ₂)β^{♯⊤} + γ₂(∇̄_n β^{♯⊤})⊤ − ρ∇̄⊤γ₁
/// + ĉρ₁(1+β(n)γ₁)((ĉ−β(N)γ₁)Z̄ + γ₁Ā(β^{♯⊤}))
/// + (ρ₀−ρ₁γ₁)(β(N)∇̄⊤ĉ − (γ₁/2)∇̄⊤b² − b²∇̄⊤γ₁ + (ĉ−β(N)γ₁)(β(N)Z̄ − Ā(β^{♯⊤}))).
pub fn operator_u(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> VectorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let n_gamma2 = directional_scalar(&ff.gamma2, &ff.n);
    let nabla_n_bst_top = geom
        .foliation
        .project_vector(&covariant_along(&ff.n, &geom.beta_sharp, &geom.metric));
    let gt_gamma1 = gradient_top(&ff.gamma1, &geom.metric, &geom.foliation);
    let gt_c_hat = gradient_top(&ff.c_hat, &geom.metric, &geom.foliation);
    let gt_b_sq = gradient_top(&ff.b_sq, &geom.metric, &geom.foliation);

    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, u)| {
            let s = ff.s_star.data[node];
            let rho = ff.rho.data[node];
            let rho0 = ff.rho0.data[node];
            let rho1 = ff.rho1.data[node];
            let g1 = ff.gamma1.data[node];
            let g2 = ff.gamma2.data[node];
            let ch = ff.c_hat.data[node];
            let bn = ff.beta_n.data[node];
            let b_sq = ff.b_sq.data[node];
            let bst = ff.beta_sharp_top.at(node);
            let zb = ld.z_bar.at(node);
            let abst = ld.a_bar_bst.at(node);
            let k1 = ch * rho1 * (1.0 + s * g1);
            let k2 = rho0 - rho1 * g1;
            let cg = ch - bn * g1;
            for i in 0..d {
                u[i] = 0.5 * n_gamma2.data[node] * bst[i]
                    + g2 * nabla_n_bst_top.at(node)[i]
                    - rho * gt_gamma1.at(node)[i]
                    + k1 * (cg * zb[i] + g1 * abst[i])
                    + k2 * (bn * gt_c_hat.at(node)[i]
                        - 0.5 * g1 * gt_b_sq.at(node)[i]
                        - b_sq * gt_gamma1.at(node)[i]
                        + cg * (bn * zb[i] - abst[i]));
            }
        });
    out
}

/// Reduced form of U for constant b and β(N): the gradient terms drop.
pub fn operator_u_constant_case(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> VectorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let nabla_n_bst_top = geom
        .foliation
        .project_vector(&covariant_along(&ff.n, &ff.beta_sharp_top, &geom.metric));
    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, u)| {
            let s = ff.s_star.data[node];
            let rho0 = ff.rho0.data[node];
            let rho1 = ff.rho1.data[node];
            let g1 = ff.gamma1.data[node];
            let g2 = ff.gamma2.data[node];
            let ch = ff.c_hat.data[node];
            let bn = ff.beta_n.data[node];
            let zb = ld.z_bar.at(node);
            let abst = ld.a_bar_bst.at(node);
            let k1 = ch * rho1 * (1.0 + s * g1);
            let k2 = rho0 - rho1 * g1;
            let cg = ch - bn * g1;
            for i in 0..d {
                u[i] = g2 * nabla_n_bst_top.at(node)[i]
                    + k1 * (cg * zb[i] + g1 * abst[i])
                    + k2 * cg * (bn * zb[i] - abst[i]);
            }
        });
    out
}

/// The operator 𝒜 = −ρĉĀ − ργ₁(Def̄_{β♯})⊤ + ½n(ρ)·id⊤ + Sym(U ⊗ β⊤),
/// leafwise; `id⊤` is the leafwise identity (the tangent projector).
pub fn normal_gradient_op(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
    u: &VectorField,
) -> LeafOperatorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let n_rho = directional_scalar(&ff.rho, &ff.n);
    let raw = MatrixField::tabulate(&grid, |node, out| {
        let rho = ff.rho.data[node];
        let g1 = ff.gamma1.data[node];
        let ch = ff.c_hat.data[node];
        let bn = ff.beta_n.data[node];
        let abar = ld.a_bar.at(node);
        let def = ld.def_beta_top.at(node);
        let proj = geom.foliation.projector.at(node);
        let beta = geom.beta.at(node);
        let nflat = geom.foliation.normal_flat.at(node);
        let uv = u.at(node);
        let bst = ff.beta_sharp_top.at(node);
        let mut u_flat = [0.0; MAX_DIM];
        geom.metric.lower_at(node, uv, &mut u_flat[..d]);
        for i in 0..d {
            for j in 0..d {
                let beta_top_j = beta[j] - bn * nflat[j];
                out[i * d + j] = -rho * ch * abar[i * d + j] - rho * g1 * def[i * d + j]
                    + 0.5 * n_rho.data[node] * proj[i * d + j]
                    + 0.5 * (uv[i] * beta_top_j + bst[i] * u_flat[j]);
            }
        }
    });
    geom.foliation.restrict_operator(&raw)
}

/// Shape operator of the leaves for g from the closed formula:
/// ρ‖n‖_g A^g = −𝒜 − γ₃(β∘𝒜) ⊗ β^{♯⊤}.
pub fn shape_operator_g(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
    script_a: &LeafOperatorField,
) -> LeafOperatorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    MatrixField::tabulate(&grid, |node, out| {
        let rho = ff.rho.data[node];
        let norm = ff.norm_n_g.data[node];
        let g3 = ff.gamma3.data[node];
        let beta = geom.beta.at(node);
        let bst = ff.beta_sharp_top.at(node);
        let a = script_a.at(node);
        let scale = -1.0 / (rho * norm);
        // (β∘𝒜)_j = Σ_k β_k 𝒜ᵏ_j.
        let mut beta_a = [0.0; MAX_DIM];
        for j in 0..d {
            beta_a[j] = (0..d).map(|k| beta[k] * a[k * d + j]).sum();
        }
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = scale * (a[i * d + j] + g3 * bst[i] * beta_a[j]);
            }
        }
        let _ = ld;
    })
}

/// The sampled perturbed metric g = g_n and the g-unit normal ν = n/‖n‖_g.
pub struct PerturbedMetric {
    pub g: MetricField,
    pub nu: VectorField,
}

pub fn perturbed_metric(geom: &Geometry, ff: &FrameField) -> Result<PerturbedMetric> {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let len = grid.len();
    let mut samples = vec![0.0; len * d * d];
    samples
        .par_chunks_mut(d * d)
        .enumerate()
        .for_each(|(node, out)| {
            let rho = ff.rho.data[node];
            let rho0 = ff.rho0.data[node];
            let rho1 = ff.rho1.data[node];
            let s = ff.s_star.data[node];
            let a = geom.metric.at(node);
            let beta = geom.beta.at(node);
            let n = ff.n.at(node);
            let mut n_flat = [0.0; MAX_DIM];
            geom.metric.lower_at(node, n, &mut n_flat[..d]);
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = rho * a[i * d + j]
                        + rho0 * beta[i] * beta[j]
                        + rho1 * (beta[i] * n_flat[j] + beta[j] * n_flat[i])
                        - rho1 * s * n_flat[i] * n_flat[j];
                }
            }
        });
    let g = MetricField::from_samples(&grid, samples)?;
    let mut nu = VectorField::zeros(&grid);
    nu.data.par_chunks_mut(d).enumerate().for_each(|(node, out)| {
        let n = ff.n.at(node);
        let norm = ff.norm_n_g.data[node];
        for i in 0..d {
            out[i] = n[i] / norm;
        }
    });
    Ok(PerturbedMetric { g, nu })
}

/// Direct-route oracle A^g(u) = −∇_u ν: g-Christoffels by finite
/// differences on the sampled g, output projected g-orthogonally onto the
/// leaves, input restricted by the a-projector.
pub fn shape_operator_g_oracle(
    geom: &Geometry,
    ff: &FrameField,
    pm: &PerturbedMetric,
) -> LeafOperatorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let raw = crate::calculus::covariant_matrix(&pm.nu, &pm.g);
    MatrixField::tabulate(&grid, |node, out| {
        let m = raw.at(node);
        let proj = geom.foliation.projector.at(node);
        let nu = pm.nu.at(node);
        let mut nu_flat_g = [0.0; MAX_DIM];
        pm.g.lower_at(node, nu, &mut nu_flat_g[..d]);
        // P_g = Id − ν ⊗ (gν); g(ν, ν) = 1 by construction.
        let mut tmp = [0.0; MAX_DIM * MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                tmp[i * d + j] = -(0..d).map(|k| m[i * d + k] * proj[k * d + j]).sum::<f64>();
            }
        }
        for i in 0..d {
            for j in 0..d {
                let mut v = tmp[i * d + j];
                for k in 0..d {
                    v -= nu[i] * nu_flat_g[k] * tmp[k * d + j];
                }
                out[i * d + j] = v;
            }
        }
        let _ = ff;
    })
}

/// Direct-route oracle Z = ∇_ν ν on the sampled g.
pub fn curvature_vector_g_oracle(pm: &PerturbedMetric) -> VectorField {
    covariant_along(&pm.nu, &pm.nu, &pm.g)
}

/// The five scalar coefficient fields of the curvature-vector formula.
#[derive(Debug, Clone)]
pub struct CurvatureCoeffs {
    pub p1: ScalarField,
    pub p2: ScalarField,
    pub p3: ScalarField,
    pub p4: ScalarField,
    pub p5: ScalarField,
}

pub fn curvature_coeffs(ff: &FrameField) -> CurvatureCoeffs {
    let grid = ff.rho.grid.clone();
    let len = grid.len();
    let mut p = vec![[0.0_f64; 5]; len];
    p.par_iter_mut().enumerate().for_each(|(node, out)| {
        let s = ff.s_star.data[node];
        let rho = ff.rho.data[node];
        let rho0 = ff.rho0.data[node];
        let rho1 = ff.rho1.data[node];
        let g1 = ff.gamma1.data[node];
        let ch = ff.c_hat.data[node];
        let bn = ff.beta_n.data[node];
        let b2 = ff.b_sq.data[node];
        let b4 = b2 * b2;
        let ch2 = ch * ch;
        let ch3 = ch2 * ch;
        let ch4 = ch2 * ch2;

        out[0] = ch * ((4.0 * rho1 * g1 - rho0 + 3.0 * rho1 * s * g1 * g1) * b2 - rho
            + ch2 * rho1 * s)
            * bn
            - rho1 * (2.0 * s * g1 + 1.0) * ch2 * bn * bn
            - rho1 * (s * g1 + 1.0) * b2 * ch2
            + g1 * (rho0 - 2.0 * g1 * rho1 - g1 * g1 * rho1 * s) * b4
            + g1 * rho * b2;

        out[1] = (rho0 - 2.0 * rho1 * s * g1 * g1 - 3.0 * rho1 * g1) * ch * bn * bn
            + (g1 * (2.0 * g1 * rho1 + g1 * g1 * rho1 * s - rho0) * b2
                + rho1 * (2.0 + 3.0 * s * g1) * ch2
                - g1 * rho)
                * bn
            - ch3 * rho1 * s
            + (rho - g1 * rho1 * (s * g1 + 1.0) * b2) * ch;

        out[2] = g1 * (3.0 * g1 * rho1 + 2.0 * g1 * g1 * rho1 * s - rho0) * ch * bn * bn * bn
            + ((rho0 - 5.0 * rho1 * s * g1 * g1 - 5.0 * rho1 * g1) * ch2
                + g1 * g1 * rho
                + g1 * g1 * (rho0 - 2.0 * g1 * rho1 - g1 * g1 * rho1 * s) * b2)
                * bn
                * bn
            + (2.0 * rho1 * (1.0 + 2.0 * s * g1) * ch3
                + g1 * ch * ((3.0 * g1 * rho1 + 2.0 * g1 * g1 * rho1 * s - rho0) * b2
                    - 2.0 * rho))
                * bn
            - ch4 * rho1 * s
            + (rho - g1 * rho1 * (s * g1 + 1.0) * b2) * ch2;

        out[3] = g1 * (rho0 - 2.0 * g1 * g1 * rho1 * s - 3.0 * g1 * rho1) * ch * bn * bn
            + g1 * ch * ((rho0 - 2.0 * g1 * rho1 - g1 * g1 * rho1 * s) * b2 + rho)
            + ((4.0 * rho1 * g1 - rho0 + 3.0 * rho1 * s * g1 * g1) * ch2
                + g1 * g1 * (2.0 * g1 * rho1 + g1 * g1 * rho1 * s - rho0) * b2
                - g1 * g1 * rho)
                * bn
            - rho1 * (s * g1 + 1.0) * ch3;

        out[4] = ch3 * rho1 * s * g1 - g1 * rho1 * (2.0 * s * g1 + 1.0) * ch2 * bn
            + g1 * ch * (g1 * rho1 * (1.0 + g1 * s) * b2 - rho);
    });
    let field = |k: usize| ScalarField {
        grid: grid.clone(),
        data: p.iter().map(|row| row[k]).collect(),
    };
    CurvatureCoeffs {
        p1: field(0),
        p2: field(1),
        p3: field(2),
        p4: field(3),
        p5: field(4),
    }
}

/// 𝒵 = [p₁∇̄⊤(γ₁/‖n‖_g) + p₂∇̄⊤(ĉ/‖n‖_g)]‖n‖_g⁻¹
///   + [p₃Z̄ + p₄Ā(β^{♯⊤}) + p₅∇̄⊤β(N)]‖n‖_g⁻².
pub fn curvature_numerator(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> VectorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let coeffs = curvature_coeffs(ff);
    let ratio = |num: &ScalarField| ScalarField {
        grid: grid.clone(),
        data: num
            .data
            .iter()
            .zip(&ff.norm_n_g.data)
            .map(|(&a, &b)| a / b)
            .collect(),
    };
    let gt_g1_norm = gradient_top(&ratio(&ff.gamma1), &geom.metric, &geom.foliation);
    let gt_ch_norm = gradient_top(&ratio(&ff.c_hat), &geom.metric, &geom.foliation);
    let gt_beta_n = gradient_top(&ff.beta_n, &geom.metric, &geom.foliation);

    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, z)| {
            let norm = ff.norm_n_g.data[node];
            let inv1 = 1.0 / norm;
            let inv2 = inv1 * inv1;
            for i in 0..d {
                z[i] = (coeffs.p1.data[node] * gt_g1_norm.at(node)[i]
                    + coeffs.p2.data[node] * gt_ch_norm.at(node)[i])
                    * inv1
                    + (coeffs.p3.data[node] * ld.z_bar.at(node)[i]
                        + coeffs.p4.data[node] * ld.a_bar_bst.at(node)[i]
                        + coeffs.p5.data[node] * gt_beta_n.at(node)[i])
                        * inv2;
            }
        });
    out
}

/// ρZ = 𝒵 + γ₃β(𝒵)β^{♯⊤}.
pub fn curvature_vector_from_numerator(
    geom: &Geometry,
    ff: &FrameField,
    numerator: &VectorField,
) -> VectorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let beta_z = geom.beta_of(numerator);
    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, z)| {
            let rho = ff.rho.data[node];
            let g3 = ff.gamma3.data[node];
            let bst = ff.beta_sharp_top.at(node);
            let zn = numerator.at(node);
            for i in 0..d {
                z[i] = (zn[i] + g3 * beta_z.data[node] * bst[i]) / rho;
            }
        });
    out
}

/// Curvature vector by the general coefficient path.
pub fn curvature_vector_g(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> VectorField {
    let num = curvature_numerator(geom, ff, ld);
    curvature_vector_from_numerator(geom, ff, &num)
}

/// Reduced curvature numerator for β♯ tangent to the foliation and
/// constant b:
/// 𝒵 = {ĉ²[ρ − ĉ²ρ₁β(n) − γ₁ρ₁(β(n)γ₁+1)b²]Z̄
///     + ĉ[γ₁ρ − ρ₁(β(n)γ₁+1)ĉ² + γ₁(ρ₀ − 2γ₁ρ₁ − γ₁²ρ₁β(n))b²]Ā(β♯)}‖n‖_g⁻².
pub fn curvature_vector_g_tangent_reduced(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> VectorField {
    let grid = geom.grid.clone();
    let d = grid.dim();
    let a_bar_bs = ld.a_bar.apply(&geom.beta_sharp);
    let mut num = VectorField::zeros(&grid);
    num.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, z)| {
            let s = ff.s_star.data[node];
            let rho = ff.rho.data[node];
            let rho0 = ff.rho0.data[node];
            let rho1 = ff.rho1.data[node];
            let g1 = ff.gamma1.data[node];
            let ch = ff.c_hat.data[node];
            let b2 = ff.b_sq.data[node];
            let norm = ff.norm_n_g.data[node];
            let ch2 = ch * ch;
            let cz = ch2 * (rho - ch2 * rho1 * s - g1 * rho1 * (s * g1 + 1.0) * b2);
            let ca = ch
                * (g1 * rho - rho1 * (s * g1 + 1.0) * ch2
                    + g1 * (rho0 - 2.0 * g1 * rho1 - g1 * g1 * rho1 * s) * b2);
            let inv2 = 1.0 / (norm * norm);
            for i in 0..d {
                z[i] = (cz * ld.z_bar.at(node)[i] + ca * a_bar_bs.at(node)[i]) * inv2;
            }
        });
    curvature_vector_from_numerator(geom, ff, &num)
}

fn require_randers(geom: &Geometry) -> Result<()> {
    if !matches!(geom.family, crate::phi::PhiFamily::Randers) {
        return Err(CoreError::WrongFamily {
            expected: "randers",
            got: format!("{:?}", geom.family),
        });
    }
    Ok(())
}

fn require_kropina(geom: &Geometry) -> Result<()> {
    if !matches!(geom.family, crate::phi::PhiFamily::Kropina) {
        return Err(CoreError::WrongFamily {
            expected: "kropina",
            got: format!("{:?}", geom.family),
        });
    }
    Ok(())
}

/// The Randers constant c = ĉ − β(N), asserted per node against
/// √(1 − (b² − β(N)²)).
pub fn randers_c_field(ff: &FrameField) -> Result<ScalarField> {
    let grid = ff.c_hat.grid.clone();
    let mut data = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let c1 = ff.c_hat.data[node] - ff.beta_n.data[node];
        let q = ff.b_sq.data[node] - ff.beta_n.data[node].powi(2);
        let c2 = (1.0 - q).sqrt();
        if (c1 - c2).abs() > 1e-12 * c1.abs().max(1.0) {
            return Err(CoreError::FormMismatch {
                what: "randers c = ĉ − β(N) vs √(1 − b² + β(N)²)",
                gap: (c1 - c2).abs(),
            });
        }
        data.push(c1);
    }
    Ok(ScalarField { grid, data })
}

/// Randers closed-form display of the scaled shape operator cA^g, with its
/// own U = ĉ⁻¹(∇̄_n β^{♯⊤})⊤ − cZ̄.
pub fn randers_shape_display(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> Result<LeafOperatorField> {
    require_randers(geom)?;
    let grid = geom.grid.clone();
    let d = grid.dim();
    let c = randers_c_field(ff)?;

    // U of the display.
    let nabla_n_bst_top = geom
        .foliation
        .project_vector(&covariant_along(&ff.n, &ff.beta_sharp_top, &geom.metric));
    let mut u = VectorField::zeros(&grid);
    u.data.par_chunks_mut(d).enumerate().for_each(|(node, out)| {
        let ch = ff.c_hat.data[node];
        for i in 0..d {
            out[i] = nabla_n_bst_top.at(node)[i] / ch - c.data[node] * ld.z_bar.at(node)[i];
        }
    });

    // n(cĉ) on the sampled product field.
    let c_chat = ScalarField {
        grid: grid.clone(),
        data: c
            .data
            .iter()
            .zip(&ff.c_hat.data)
            .map(|(&a, &b)| a * b)
            .collect(),
    };
    let n_c_chat = directional_scalar(&c_chat, &ff.n);

    // (Def̄_{β♯} β^{♯⊤})⊤.
    let def_bst_top = geom
        .foliation
        .project_vector(&ld.def_beta.apply(&ff.beta_sharp_top));
    let beta_u = geom.beta_of(&u);
    let abst_bst = geom.inner_field(&ld.a_bar_bst, &ff.beta_sharp_top);

    let raw = MatrixField::tabulate(&grid, |node, out| {
        let ch = ff.c_hat.data[node];
        let cc = c.data[node];
        let bn = ff.beta_n.data[node];
        let abar = ld.a_bar.at(node);
        let def = ld.def_beta_top.at(node);
        let proj = geom.foliation.projector.at(node);
        let beta = geom.beta.at(node);
        let nflat = geom.foliation.normal_flat.at(node);
        let bst = ff.beta_sharp_top.at(node);
        let uv = u.at(node);
        let abst = ld.a_bar_bst.at(node);

        // Y = Ā(β^{♯⊤}) − ⟨Ā(β^{♯⊤}),β^{♯⊤}⟩β^{♯⊤} + 2ĉ⁻¹(Def̄_{β♯}β^{♯⊤})⊤
        //     + U + β(U)β^{♯⊤}.
        let mut y = [0.0; MAX_DIM];
        for (i, slot) in y.iter_mut().enumerate().take(d) {
            *slot = abst[i] - abst_bst.data[node] * bst[i]
                + 2.0 / ch * def_bst_top.at(node)[i]
                + uv[i]
                + beta_u.data[node] * bst[i];
        }
        let mut y_flat = [0.0; MAX_DIM];
        geom.metric.lower_at(node, &y[..d], &mut y_flat[..d]);

        let lead = -0.5 / (ch * ch * cc) * n_c_chat.data[node];
        for i in 0..d {
            for j in 0..d {
                let beta_top_j = beta[j] - bn * nflat[j];
                out[i * d + j] = abar[i * d + j]
                    + lead * proj[i * d + j]
                    + def[i * d + j] / ch
                    + 0.5 * (uv[i] - abst[i]) * beta_top_j
                    + 0.5 / (cc * cc) * bst[i] * y_flat[j];
            }
        }
    });
    Ok(geom.foliation.restrict_operator(&raw))
}

/// Randers closed-form curvature numerator: 𝒵 = Z̄ − ĉ⁻¹∇̄⊤ĉ.
pub fn randers_curvature_numerator_display(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> Result<VectorField> {
    require_randers(geom)?;
    let grid = geom.grid.clone();
    let d = grid.dim();
    let gt_ch = gradient_top(&ff.c_hat, &geom.metric, &geom.foliation);
    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, z)| {
            let ch = ff.c_hat.data[node];
            for i in 0..d {
                z[i] = ld.z_bar.at(node)[i] - gt_ch.at(node)[i] / ch;
            }
        });
    Ok(out)
}

/// Kropina closed-form curvature vector for constant b and β(N) = 0,
/// transcribed as printed.
pub fn kropina_z_display(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> Result<VectorField> {
    require_kropina(geom)?;
    let grid = geom.grid.clone();
    let d = grid.dim();
    let mut out = VectorField::zeros(&grid);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, z)| {
            let s = ff.s_star.data[node];
            let ch = ff.c_hat.data[node];
            let b2 = ff.b_sq.data[node];
            let gnn = ff.norm_n_g.data[node].powi(2);
            let ch2 = ch * ch;
            let s2 = s * s;
            let s6 = s2 * s2 * s2;
            let cz = ch2 * (b2 + 2.0 * (1.0 + 2.0 * ch2) * s2 - 2.0 * b2 * s6)
                / (s2 * s2 * gnn);
            let ca = ch
                * (4.0 * ch2 * s6 * s2 + 2.0 * b2 * s6 - (1.0 + 2.0 * ch2) * s2 - 2.0 * b2)
                / (s2 * s2 * s * gnn);
            for i in 0..d {
                z[i] = cz * ld.z_bar.at(node)[i] + ca * ld.a_bar_bst.at(node)[i];
            }
        });
    Ok(out)
}

/// Kropina closed-form trace of A^g for constant b and β(N):
/// tr A^g = β(n)ĉ tr Ā + (4ĉ²β(n)² − 2β(n)² − β(N)²)/(4β(n)²)·β(Z̄)
///        + β(N)/(4β(n)²)·⟨Ā(β^{♯⊤}), β^{♯⊤}⟩.
pub fn kropina_trace_display(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> Result<ScalarField> {
    require_kropina(geom)?;
    let grid = geom.grid.clone();
    let tr_abar = ld.a_bar.trace_field();
    let beta_z = geom.beta_of(&ld.z_bar);
    let abst_bst = geom.inner_field(&ld.a_bar_bst, &ff.beta_sharp_top);
    let data = (0..grid.len())
        .map(|node| {
            let s = ff.s_star.data[node];
            let ch = ff.c_hat.data[node];
            let bn = ff.beta_n.data[node];
            let s2 = s * s;
            s * ch * tr_abar.data[node]
                + (4.0 * ch * ch * s2 - 2.0 * s2 - bn * bn) / (4.0 * s2) * beta_z.data[node]
                + bn / (4.0 * s2) * abst_bst.data[node]
        })
        .collect();
    Ok(ScalarField { grid, data })
}

/// Convenience: the full formula-route pipeline (U, 𝒜, A^g, Z).
pub struct LeafOperators {
    pub u: VectorField,
    pub script_a: LeafOperatorField,
    pub shape_g: LeafOperatorField,
    pub curvature_g: VectorField,
}

pub fn leaf_operators(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> LeafOperators {
    let u = operator_u(geom, ff, ld);
    let script_a = normal_gradient_op(geom, ff, ld, &u);
    let shape_g = shape_operator_g(geom, ff, ld, &script_a);
    let curvature_g = curvature_vector_g(geom, ff, ld);
    LeafOperators {
        u,
        script_a,
        shape_g,
        curvature_g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Family, ScenarioConfig, ScenarioId};
    use approx::assert_relative_eq;

    fn setup(
        scenario: ScenarioId,
        family: Family,
        res: usize,
        eps: Option<f64>,
    ) -> (Geometry, FrameField, LeafData) {
        let mut c = ScenarioConfig::new(scenario, family).with_resolution(res);
        if let Some(e) = eps {
            c.epsilon = Some(e);
        }
        let geom = Geometry::build(&c).unwrap();
        let ff = FrameField::build(&geom).unwrap();
        let ld = leaf_data(&geom, &ff);
        (geom, ff, ld)
    }

    #[test]
    fn riemannian_collapse_is_exact() {
        let (geom, ff, ld) = setup(ScenarioId::S2, Family::Riemannian, 16, None);
        let ops = leaf_operators(&geom, &ff, &ld);
        assert!(ops.u.max_abs() <= 1e-12, "U should vanish");
        // 𝒜 = −Ā.
        let mut gap = 0.0_f64;
        for i in 0..ops.script_a.data.len() {
            gap = gap.max((ops.script_a.data[i] + ld.a_bar.data[i]).abs());
        }
        assert!(gap <= 1e-11, "script A vs -Abar gap {gap:.3e}");
        assert!(ops.shape_g.max_gap(&ld.a_bar) <= 1e-11);
        let mut zgap = 0.0_f64;
        for i in 0..ops.curvature_g.data.len() {
            zgap = zgap.max((ops.curvature_g.data[i] - ld.z_bar.data[i]).abs());
        }
        assert!(zgap <= 1e-11, "Z vs Zbar gap {zgap:.3e}");
    }

    #[test]
    fn flat_constant_scenario_everything_vanishes() {
        let (geom, ff, ld) = setup(ScenarioId::S1, Family::Randers, 8, None);
        let ops = leaf_operators(&geom, &ff, &ld);
        assert!(ops.u.max_abs() <= 1e-14);
        assert!(ops.shape_g.max_abs() <= 1e-14);
        assert!(ops.curvature_g.max_abs() <= 1e-14);
        let pm = perturbed_metric(&geom, &ff).unwrap();
        let ao = shape_operator_g_oracle(&geom, &ff, &pm);
        let zo = curvature_vector_g_oracle(&pm);
        assert!(ao.max_abs() <= 1e-12);
        assert!(zo.max_abs() <= 1e-12);
    }

    #[test]
    fn constant_case_u_agrees_with_general() {
        for family in [Family::Randers, Family::Kropina] {
            let (geom, ff, ld) = setup(ScenarioId::S2, family, 16, None);
            let u = operator_u(&geom, &ff, &ld);
            let u_const = operator_u_constant_case(&geom, &ff, &ld);
            let mut gap = 0.0_f64;
            for i in 0..u.data.len() {
                gap = gap.max((u.data[i] - u_const.data[i]).abs());
            }
            assert!(gap <= 1e-9, "constant-case U gap {gap:.3e}");
        }
    }

    #[test]
    fn riemannian_curvature_coeffs_collapse() {
        let (_, ff, _) = setup(ScenarioId::S2, Family::Riemannian, 8, None);
        let p = curvature_coeffs(&ff);
        for node in (0..ff.rho.grid.len()).step_by(19) {
            let bn = ff.beta_n.data[node];
            assert_relative_eq!(p.p1.data[node], -bn, epsilon = 1e-13);
            assert_relative_eq!(p.p2.data[node], 1.0, epsilon = 1e-13);
            assert_relative_eq!(p.p3.data[node], 1.0, epsilon = 1e-13);
            assert!(p.p4.data[node].abs() <= 1e-13);
            assert!(p.p5.data[node].abs() <= 1e-13);
        }
    }

    #[test]
    fn randers_constant_case_coeff_identities() {
        // p₃ = ‖n‖_g² and p₄ = 0 when b, β(N) are constant.
        let (_, ff, _) = setup(ScenarioId::S2, Family::Randers, 8, None);
        let p = curvature_coeffs(&ff);
        for node in (0..ff.rho.grid.len()).step_by(23) {
            let nn = ff.norm_n_g.data[node].powi(2);
            assert_relative_eq!(p.p3.data[node], nn, max_relative = 1e-11);
            assert!(p.p4.data[node].abs() <= 1e-12, "p4 = {}", p.p4.data[node]);
        }
    }

    #[test]
    fn kropina_tangent_coeff_identities() {
        // β(N) = 0: p₃ = 1/s² and p₄ = 0.
        let (_, ff, _) = setup(ScenarioId::S2, Family::Kropina, 8, Some(0.0));
        let p = curvature_coeffs(&ff);
        for node in (0..ff.rho.grid.len()).step_by(23) {
            let s = ff.s_star.data[node];
            assert_relative_eq!(p.p3.data[node], 1.0 / (s * s), max_relative = 1e-11);
            assert!(p.p4.data[node].abs() <= 1e-11, "p4 = {}", p.p4.data[node]);
        }
    }

    #[test]
    fn shape_operator_g_is_g_self_adjoint() {
        let (geom, ff, ld) = setup(ScenarioId::S4, Family::Randers, 16, None);
        let ops = leaf_operators(&geom, &ff, &ld);
        let pm = perturbed_metric(&geom, &ff).unwrap();
        let d = geom.grid.dim();
        let mut worst = 0.0_f64;
        for node in (0..geom.grid.len()).step_by(101) {
            let proj = geom.foliation.projector.at(node);
            let m = ops.shape_g.at(node);
            let raw_u = [0.37, -0.81, 0.44];
            let raw_v = [-0.15, 0.62, 0.93];
            let mut u = [0.0; 3];
            let mut v = [0.0; 3];
            for i in 0..d {
                u[i] = (0..d).map(|j| proj[i * d + j] * raw_u[j]).sum();
                v[i] = (0..d).map(|j| proj[i * d + j] * raw_v[j]).sum();
            }
            let mut au = [0.0; 3];
            let mut av = [0.0; 3];
            for i in 0..d {
                au[i] = (0..d).map(|j| m[i * d + j] * u[j]).sum();
                av[i] = (0..d).map(|j| m[i * d + j] * v[j]).sum();
            }
            let lhs = pm.g.inner_at(node, &au, &v);
            let rhs = pm.g.inner_at(node, &u, &av);
            worst = worst.max((lhs - rhs).abs());
        }
        assert!(worst <= 1e-3, "g-self-adjointness defect {worst:.3e}");
    }

    #[test]
    fn oracle_tracks_formula_on_curved_scenario() {
        // Coarse sanity; the convergence-order evidence lives in the
        // acceptance suite.
        let (geom, ff, ld) = setup(ScenarioId::S2, Family::Randers, 16, None);
        let ops = leaf_operators(&geom, &ff, &ld);
        let pm = perturbed_metric(&geom, &ff).unwrap();
        let ao = shape_operator_g_oracle(&geom, &ff, &pm);
        let zo = curvature_vector_g_oracle(&pm);
        let again = ops.shape_g.max_gap(&ao);
        assert!(again <= 5e-2, "A^g oracle gap {again:.3e} at res 16");
        let mut zgap = 0.0_f64;
        for i in 0..zo.data.len() {
            zgap = zgap.max((ops.curvature_g.data[i] - zo.data[i]).abs());
        }
        assert!(zgap <= 5e-2, "Z oracle gap {zgap:.3e} at res 16");
    }

    #[test]
    fn wrong_family_rejected() {
        let (geom, ff, ld) = setup(ScenarioId::S2, Family::Randers, 8, None);
        assert!(matches!(
            kropina_z_display(&geom, &ff, &ld),
            Err(CoreError::WrongFamily { .. })
        ));
        let (geom, ff, ld) = setup(ScenarioId::S2, Family::Kropina, 8, None);
        assert!(matches!(
            randers_shape_display(&geom, &ff, &ld),
            Err(CoreError::WrongFamily { .. })
        ));
    }
}
