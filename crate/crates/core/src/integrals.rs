//! Reeb-type integral-formula residuals.
//!
//! Each formula is assembled as a per-node integrand exactly as printed
//! (the post-divergence-theorem form; no divergence identities are
//! re-applied in code) and integrated with the deterministic quadrature.
//! Residuals are reported relative to the integral of |integrand| so a
//! near-zero verdict is scale-free.

use rayon::prelude::*;

use crate::calculus::{directional_scalar, gradient, integrate, integrate_abs};
use crate::error::CoreError;
use crate::frame_field::FrameField;
use crate::grid::{ScalarField, VectorField};
use crate::operators::LeafData;
use crate::scenario::Geometry;
use crate::Result;

/// Value and reference scale of one integral formula.
#[derive(Debug, Clone, Copy)]
pub struct FormulaResult {
    /// The integral that the formula asserts to vanish.
    pub value: f64,
    /// ∫ |integrand| dvol_a.
    pub scale: f64,
}

impl FormulaResult {
    pub fn relative(&self) -> f64 {
        self.value.abs() / self.scale.max(1e-300)
    }
}

fn formula(geom: &Geometry, integrand: ScalarField) -> FormulaResult {
    FormulaResult {
        value: integrate(&integrand, &geom.metric),
        scale: integrate_abs(&integrand, &geom.metric),
    }
}

/// ∫ tr(A^g) dvol_g = ∫ tr(A^g) σ_g(n) dvol_a.
pub fn reeb_residual_g(
    geom: &Geometry,
    ff: &FrameField,
    shape_g: &crate::foliation::LeafOperatorField,
) -> FormulaResult {
    let tr = shape_g.trace_field();
    let integrand = ScalarField {
        grid: geom.grid.clone(),
        data: tr
            .data
            .iter()
            .zip(&ff.sigma.data)
            .map(|(&t, &s)| t * s)
            .collect(),
    };
    formula(geom, integrand)
}

/// ∫ tr(Ā) dvol_a, the background Reeb integral.
pub fn reeb_residual_background(geom: &Geometry, ld: &LeafData) -> FormulaResult {
    formula(geom, ld.a_bar.trace_field())
}

/// The general integral formula, transcribed verbatim including the
/// divergence-absorbed term −β♯(σ_g(n)γ₁/‖n‖_g).
pub fn theorem1_general_residual(geom: &Geometry, ff: &FrameField, ld: &LeafData) -> FormulaResult {
    let grid = geom.grid.clone();
    let m = grid.m() as f64;

    let tr_abar = ld.a_bar.trace_field();
    let beta_z = geom.beta_of(&ld.z_bar);
    let n_beta_n = directional_scalar(&ff.beta_n, &geom.foliation.normal);
    let n_rho = directional_scalar(&ff.rho, &ff.n);
    let bst_gamma1 = directional_scalar(&ff.gamma1, &ff.beta_sharp_top);
    let q = ff.q_field();
    let rho_plus_q_gamma2 = ScalarField {
        grid: grid.clone(),
        data: (0..grid.len())
            .map(|i| ff.rho.data[i] + q.data[i] * ff.gamma2.data[i])
            .collect(),
    };
    let n_rho_q_gamma2 = directional_scalar(&rho_plus_q_gamma2, &ff.n);
    let grad_chat = gradient(&ff.c_hat, &geom.metric);
    let grad_bsq = gradient(&ff.b_sq, &geom.metric);
    let grad_gamma1 = gradient(&ff.gamma1, &geom.metric);
    let beta_sharp_q = directional_scalar(&q, &geom.beta_sharp);
    let beta_abst = geom.beta_of(&ld.a_bar_bst);
    // ⟨X, β^{♯⊤}⟩ pieces of the bracketed inner product.
    let sigma_g1_norm = ScalarField {
        grid: grid.clone(),
        data: (0..grid.len())
            .map(|i| ff.sigma.data[i] * ff.gamma1.data[i] / ff.norm_n_g.data[i])
            .collect(),
    };
    let div_term = directional_scalar(&sigma_g1_norm, &geom.beta_sharp);

    let d = grid.dim();
    let mut integrand = ScalarField::zeros(&grid);
    integrand
        .data
        .par_iter_mut()
        .enumerate()
        .for_each(|(node, out)| {
            let s = ff.s_star.data[node];
            let rho = ff.rho.data[node];
            let rho0 = ff.rho0.data[node];
            let rho1 = ff.rho1.data[node];
            let g1 = ff.gamma1.data[node];
            let g2 = ff.gamma2.data[node];
            let g3 = ff.gamma3.data[node];
            let ch = ff.c_hat.data[node];
            let bn = ff.beta_n.data[node];
            let qv = q.data[node];
            let sigma = ff.sigma.data[node];
            let norm = ff.norm_n_g.data[node];
            let one_q_g3 = 1.0 + qv * g3;
            let cg = ch - bn * g1;

            // ⟨β(N)∇̄ĉ + (ĉ−β(N)γ₁)(β(N)Z̄ − Ā(β^{♯⊤})) − (γ₁/2)∇̄b²
            //   − b²∇̄γ₁, β^{♯⊤}⟩
            let bst = ff.beta_sharp_top.at(node);
            let zb = ld.z_bar.at(node);
            let abst = ld.a_bar_bst.at(node);
            let mut combo = [0.0; crate::calculus::MAX_DIM];
            for (i, slot) in combo.iter_mut().enumerate().take(d) {
                *slot = bn * grad_chat.at(node)[i] + cg * (bn * zb[i] - abst[i])
                    - 0.5 * g1 * grad_bsq.at(node)[i]
                    - ff.b_sq.data[node] * grad_gamma1.at(node)[i];
            }
            let combo_bst = geom.metric.inner_at(node, &combo[..d], bst);

            // ⟨(ĉ−β(N)γ₁)Z̄ + γ₁Ā(β^{♯⊤}), β♯⟩ = β applied to the combination.
            let zcombo_beta = cg * beta_z.data[node] + g1 * beta_abst.data[node];

            let braced = rho * ch * tr_abar.data[node]
                + rho * g1 * (beta_z.data[node] - n_beta_n.data[node])
                - 0.5 * (m - 1.0) * n_rho.data[node]
                + one_q_g3
                    * (rho * bst_gamma1.data[node]
                        - 0.5 * n_rho_q_gamma2.data[node]
                        - (rho0 - rho1 * g1) * combo_bst
                        - ch * rho1 * (1.0 + s * g1) * zcombo_beta)
                - g2 * one_q_g3
                    * (0.5 * g1 * beta_sharp_q.data[node] + cg * beta_abst.data[node]);

            *out = sigma / (rho * norm) * braced - div_term.data[node];
        });
    formula(geom, integrand)
}

fn require_constant(ff: &FrameField) -> Result<()> {
    let b_spread = ff.b_sq.spread();
    if b_spread > 1e-10 {
        return Err(CoreError::NotConstantCase {
            field: "b^2",
            spread: b_spread,
        });
    }
    let bn_spread = ff.beta_n.spread();
    if bn_spread > 1e-10 {
        return Err(CoreError::NotConstantCase {
            field: "beta(N)",
            spread: bn_spread,
        });
    }
    Ok(())
}

/// The constant-case coefficients of
/// ∫ ⟨q₁Ā(β^{♯⊤}) + q₂Z̄, β♯⟩ dvol_a = 0.
#[derive(Debug, Clone, Copy)]
pub struct QConstants {
    pub q1: f64,
    pub q2: f64,
}

/// q₁, q₂ from the constant-case displays:
/// q₁ = −(1+(b²−β(N)²)γ₃)(ĉρ₁γ₁(1+β(n)γ₁) + γ₂(ĉ−β(N)γ₁)),
/// q₂ = γ₁ρ − ĉρ₁(1+(b²−β(N)²)γ₃)(1+β(n)γ₁)(ĉ−β(N)γ₁).
pub fn q_constants(ff: &FrameField) -> Result<QConstants> {
    require_constant(ff)?;
    let node = 0;
    let s = ff.s_star.data[node];
    let rho = ff.rho.data[node];
    let rho1 = ff.rho1.data[node];
    let g1 = ff.gamma1.data[node];
    let g2 = ff.gamma2.data[node];
    let g3 = ff.gamma3.data[node];
    let ch = ff.c_hat.data[node];
    let bn = ff.beta_n.data[node];
    let q = ff.b_sq.data[node] - bn * bn;
    let one_q_g3 = 1.0 + q * g3;
    Ok(QConstants {
        q1: -one_q_g3 * (ch * rho1 * g1 * (1.0 + s * g1) + g2 * (ch - bn * g1)),
        q2: g1 * rho - ch * rho1 * one_q_g3 * (1.0 + s * g1) * (ch - bn * g1),
    })
}

/// Constant-case residual ∫ ⟨q₁Ā(β^{♯⊤}) + q₂Z̄, β♯⟩ dvol_a.
pub fn theorem1_constant_residual(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> Result<(QConstants, FormulaResult)> {
    let qc = q_constants(ff)?;
    let grid = geom.grid.clone();
    let d = grid.dim();
    let integrand = ScalarField {
        grid: grid.clone(),
        data: (0..grid.len())
            .map(|node| {
                let abst = ld.a_bar_bst.at(node);
                let zb = ld.z_bar.at(node);
                let beta = geom.beta.at(node);
                (0..d)
                    .map(|i| beta[i] * (qc.q1 * abst[i] + qc.q2 * zb[i]))
                    .sum()
            })
            .collect(),
    };
    Ok((qc, formula(geom, integrand)))
}

/// Randers integral formula with varying b and β(N):
/// ∫ (cĉ)^{m/2} c⁻² β(N) { ½N(c²) + ⟨Ā(β^{♯⊤}), β♯⟩ + c β(Z̄) } dvol_a.
pub fn example3_randers_residual(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> Result<FormulaResult> {
    if !matches!(geom.family, crate::phi::PhiFamily::Randers) {
        return Err(CoreError::WrongFamily {
            expected: "randers",
            got: format!("{:?}", geom.family),
        });
    }
    let grid = geom.grid.clone();
    let m = grid.m() as f64;
    let c = crate::operators::randers_c_field(ff)?;
    let c_sq = ScalarField {
        grid: grid.clone(),
        data: c.data.iter().map(|&v| v * v).collect(),
    };
    let n_c_sq = directional_scalar(&c_sq, &geom.foliation.normal);
    let beta_z = geom.beta_of(&ld.z_bar);
    let beta_abst = geom.beta_of(&ld.a_bar_bst);
    let integrand = ScalarField {
        grid: grid.clone(),
        data: (0..grid.len())
            .map(|node| {
                let cc = c.data[node];
                let ch = ff.c_hat.data[node];
                (cc * ch).powf(0.5 * m) / (cc * cc)
                    * ff.beta_n.data[node]
                    * (0.5 * n_c_sq.data[node]
                        + beta_abst.data[node]
                        + cc * beta_z.data[node])
            })
            .collect(),
    };
    Ok(formula(geom, integrand))
}

/// Kropina constant-case integral formula:
/// ∫ ⟨β(N)Ā(β^{♯⊤}) + (2(2ĉ²−1)β(n)² − β(N)²)Z̄, β^{♯⊤}⟩ dvol_a.
pub fn example3_kropina_residual(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
) -> Result<FormulaResult> {
    if !matches!(geom.family, crate::phi::PhiFamily::Kropina) {
        return Err(CoreError::WrongFamily {
            expected: "kropina",
            got: format!("{:?}", geom.family),
        });
    }
    require_constant(ff)?;
    let grid = geom.grid.clone();
    let d = grid.dim();
    let integrand = ScalarField {
        grid: grid.clone(),
        data: (0..grid.len())
            .map(|node| {
                let s = ff.s_star.data[node];
                let ch = ff.c_hat.data[node];
                let bn = ff.beta_n.data[node];
                let k = 2.0 * (2.0 * ch * ch - 1.0) * s * s - bn * bn;
                let abst = ld.a_bar_bst.at(node);
                let zb = ld.z_bar.at(node);
                let bst = ff.beta_sharp_top.at(node);
                let mut combo = [0.0; crate::calculus::MAX_DIM];
                for (i, slot) in combo.iter_mut().enumerate().take(d) {
                    *slot = bn * abst[i] + k * zb[i];
                }
                geom.metric.inner_at(node, &combo[..d], bst)
            })
            .collect(),
    };
    Ok(formula(geom, integrand))
}

/// Eigenvalue-corollary data: with β♯ = ε′X + εN, Z̄ ≡ 0, constant b and
/// β(N), and X a unit eigenfield of Ā with eigenvalue λ, the constant-case
/// formula collapses to q₁ε′²∫λ dvol_a = 0.
pub struct EigenvalueCheck {
    /// ∫ λ dvol_a.
    pub lambda_integral: f64,
    /// ∫ |λ| dvol_a.
    pub lambda_scale: f64,
    /// q₁ ε′² ∫λ, to compare against the constant-case residual.
    pub predicted_residual: f64,
}

pub fn eigenvalue_corollary_check(
    geom: &Geometry,
    ff: &FrameField,
    ld: &LeafData,
    x_field: &VectorField,
    eps: f64,
    eps_prime: f64,
) -> Result<EigenvalueCheck> {
    let grid = geom.grid.clone();
    let d = grid.dim();

    let z_max = ld.z_bar.max_abs();
    if z_max > 1e-10 {
        return Err(CoreError::PreconditionFailed(format!(
            "normal flow is not geodesic: max |Z̄| = {z_max:.3e}"
        )));
    }
    let b0 = geom.family.b0();
    if !(eps > 0.0 && eps < b0) {
        return Err(CoreError::PreconditionFailed(format!(
            "ε = {eps} not in (0, b₀ = {b0})"
        )));
    }
    if !(eps_prime > 0.0 && eps_prime < (1.0 - eps * eps).sqrt()) {
        return Err(CoreError::PreconditionFailed(format!(
            "ε′ = {eps_prime} not in (0, √(1−ε²))"
        )));
    }

    // X must be α-unit and tangent, and β♯ must decompose as ε′X + εN.
    let ax = ld.a_bar.apply(x_field);
    let mut lambda = ScalarField::zeros(&grid);
    let mut eigen_defect = 0.0_f64;
    let mut unit_defect = 0.0_f64;
    let mut decomp_defect = 0.0_f64;
    for node in 0..grid.len() {
        let x = x_field.at(node);
        let n = geom.foliation.normal.at(node);
        unit_defect = unit_defect
            .max((geom.metric.inner_at(node, x, x) - 1.0).abs())
            .max(geom.metric.inner_at(node, x, n).abs());
        let l = geom.metric.inner_at(node, ax.at(node), x);
        lambda.data[node] = l;
        for i in 0..d {
            eigen_defect = eigen_defect.max((ax.at(node)[i] - l * x[i]).abs());
            decomp_defect = decomp_defect
                .max((geom.beta_sharp.at(node)[i] - eps_prime * x[i] - eps * n[i]).abs());
        }
    }
    if unit_defect > 1e-10 {
        return Err(CoreError::PreconditionFailed(format!(
            "X is not a unit tangent field: defect {unit_defect:.3e}"
        )));
    }
    if eigen_defect > 1e-8 {
        return Err(CoreError::PreconditionFailed(format!(
            "X is not an eigenfield of Ā: residual {eigen_defect:.3e}"
        )));
    }
    if decomp_defect > 1e-10 {
        return Err(CoreError::PreconditionFailed(format!(
            "β♯ ≠ ε′X + εN: defect {decomp_defect:.3e}"
        )));
    }

    let qc = q_constants(ff)?;
    if qc.q1.abs() <= 1e-14 {
        return Err(CoreError::PreconditionFailed(format!(
            "q₁ = {:.3e} vanishes",
            qc.q1
        )));
    }

    Ok(EigenvalueCheck {
        lambda_integral: integrate(&lambda, &geom.metric),
        lambda_scale: integrate_abs(&lambda, &geom.metric),
        predicted_residual: qc.q1 * eps_prime * eps_prime * integrate(&lambda, &geom.metric),
    })
}

/// Observed convergence order between residuals at two resolutions that
/// halve the spacing; `None` when both sit on the round-off floor.
pub fn observed_order(coarse: f64, fine: f64) -> Option<f64> {
    const FLOOR: f64 = 1e-11;
    if coarse.abs() <= FLOOR && fine.abs() <= FLOOR {
        return None;
    }
    if fine.abs() == 0.0 {
        return Some(f64::INFINITY);
    }
    Some((coarse.abs() / fine.abs()).log2())
}
