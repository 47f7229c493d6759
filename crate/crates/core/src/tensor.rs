//! Pointwise fundamental tensor of an (α,β)-norm, its Hessian oracle and the
//! volume ratio σ_g.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;
use crate::phi::PhiFamily;
use crate::Result;

/// Scalar-product data of one tangent space: a symmetric positive-definite
/// form `a`, a covector `β` and its α-norm `b`.
#[derive(Debug, Clone)]
pub struct AlphaBetaPoint {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    beta: DVector<f64>,
    b: f64,
    dim: usize,
}

impl AlphaBetaPoint {
    /// Validates symmetry, positive definiteness and consistency of the
    /// stored norm `b` with `a⁻¹(β, β)`.
    pub fn new(a: DMatrix<f64>, beta: DVector<f64>, b: f64) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim || beta.len() != dim {
            return Err(CoreError::Domain(format!(
                "inconsistent dimensions: a is {}x{}, beta has {}",
                a.nrows(),
                a.ncols(),
                beta.len()
            )));
        }
        if dim < 3 {
            return Err(CoreError::Domain(format!(
                "leaf dimension m = {} must be at least 2",
                dim as i64 - 1
            )));
        }
        let sym_gap = (&a - a.transpose()).amax();
        if sym_gap > 1e-12 * a.amax().max(1.0) {
            return Err(CoreError::SingularMetric(format!(
                "metric not symmetric, asymmetry {sym_gap:.3e}"
            )));
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| CoreError::SingularMetric("metric not positive definite".into()))?;
        let a_inv = chol.inverse();
        let b_sq = (&a_inv * &beta).dot(&beta);
        if b < 0.0 || (b * b - b_sq).abs() > 1e-12 * b_sq.max(1.0) {
            return Err(CoreError::Domain(format!(
                "stored b² = {:.17e} inconsistent with a⁻¹(β,β) = {b_sq:.17e}",
                b * b
            )));
        }
        Ok(Self {
            a,
            a_inv,
            beta,
            b,
            dim,
        })
    }

    /// Construct with `b` computed from `a` and `β`.
    pub fn from_parts(a: DMatrix<f64>, beta: DVector<f64>) -> Result<Self> {
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| CoreError::SingularMetric("metric not positive definite".into()))?;
        let b = (chol.inverse() * &beta).dot(&beta).max(0.0).sqrt();
        Self::new(a, beta, b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Leaf dimension `m = dim - 1`.
    pub fn m(&self) -> usize {
        self.dim - 1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn metric_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// β♯, the metric-raised covector.
    pub fn beta_sharp(&self) -> DVector<f64> {
        &self.a_inv * &self.beta
    }

    /// ⟨u, v⟩ in the background scalar product.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (&self.a * v).dot(u)
    }

    /// α(u) = √⟨u, u⟩.
    pub fn alpha(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// β(u).
    pub fn beta_of(&self, u: &DVector<f64>) -> f64 {
        self.beta.dot(u)
    }

    /// F(y) = α(y) φ(β(y)/α(y)).
    pub fn finsler_norm(&self, family: &PhiFamily, y: &DVector<f64>) -> Result<f64> {
        let alpha = self.alpha(y);
        if alpha <= 0.0 {
            return Err(CoreError::Domain("F evaluated at the origin".into()));
        }
        let (phi, _, _) = family.eval(self.beta_of(y) / alpha)?;
        Ok(alpha * phi)
    }
}

fn check_b0(point: &AlphaBetaPoint, family: &PhiFamily) -> Result<()> {
    if point.b() >= family.b0() {
        return Err(CoreError::Domain(format!(
            "b = {} not below b₀ = {} for {family:?}",
            point.b(),
            family.b0()
        )));
    }
    Ok(())
}

/// Closed-form fundamental tensor `g_y(u, v)` for an α-unit `y`:
/// ρ⟨u,v⟩ + ρ₀β(u)β(v) + ρ₁(β(u)⟨y,v⟩ + β(v)⟨y,u⟩) − ρ₁β(y)⟨y,u⟩⟨y,v⟩.
pub fn fundamental_tensor(
    point: &AlphaBetaPoint,
    family: &PhiFamily,
    y: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    check_b0(point, family)?;
    let unit_gap = (point.alpha(y) - 1.0).abs();
    if unit_gap > 1e-10 {
        return Err(CoreError::NotUnitVector(unit_gap));
    }
    let s = point.beta_of(y);
    let r = family.rho_coeffs(s)?;
    let bu = point.beta_of(u);
    let bv = point.beta_of(v);
    let yu = point.inner(y, u);
    let yv = point.inner(y, v);
    Ok(r.rho * point.inner(u, v) + r.rho0 * bu * bv + r.rho1 * (bu * yv + bv * yu)
        - r.rho1 * s * yu * yv)
}

/// Matrix of `g_y` in the chart basis, for determinant checks and for
/// sampling the perturbed metric as a field.
pub fn fundamental_tensor_matrix(
    point: &AlphaBetaPoint,
    family: &PhiFamily,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_b0(point, family)?;
    let unit_gap = (point.alpha(y) - 1.0).abs();
    if unit_gap > 1e-10 {
        return Err(CoreError::NotUnitVector(unit_gap));
    }
    let s = point.beta_of(y);
    let r = family.rho_coeffs(s)?;
    let y_flat = point.metric() * y;
    let beta = point.beta();
    let dim = point.dim();
    let mut g = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] = r.rho * point.metric()[(i, j)]
                + r.rho0 * beta[i] * beta[j]
                + r.rho1 * (beta[i] * y_flat[j] + beta[j] * y_flat[i])
                - r.rho1 * s * y_flat[i] * y_flat[j];
        }
    }
    Ok(g)
}

/// ½ F²(y + p·u + q·v), the function whose mixed second derivative at the
/// origin is the fundamental tensor.
fn half_f_squared(
    point: &AlphaBetaPoint,
    family: &PhiFamily,
    w: &DVector<f64>,
) -> Result<f64> {
    let f = point.finsler_norm(family, w)?;
    Ok(0.5 * f * f)
}

/// Independent Hessian oracle for the fundamental tensor: fourth-order
/// centered mixed difference of ½F² with truncation O(h⁴). The step is
/// scaled by α(y); if a stencil point leaves the domain of F the step is
/// shrunk once before failing.
pub fn hessian_tensor_oracle(
    point: &AlphaBetaPoint,
    family: &PhiFamily,
    y: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    check_b0(point, family)?;
    if !(h > 0.0) {
        return Err(CoreError::Domain(format!("step h = {h} must be positive")));
    }
    const OFFSETS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];
    const WEIGHTS: [f64; 4] = [1.0, -8.0, 8.0, -1.0];

    let mut step = h * point.alpha(y);
    for attempt in 0..2 {
        let denom = 12.0 * step;
        let mut acc = 0.0;
        let mut ok = true;
        'stencil: for (i, &p) in OFFSETS.iter().enumerate() {
            for (j, &q) in OFFSETS.iter().enumerate() {
                let w = y + u * (p * step) + v * (q * step);
                match half_f_squared(point, family, &w) {
                    Ok(val) => acc += WEIGHTS[i] * WEIGHTS[j] * val,
                    Err(_) => {
                        ok = false;
                        break 'stencil;
                    }
                }
            }
        }
        if ok {
            return Ok(acc / (denom * denom));
        }
        if attempt == 0 {
            step *= 0.25;
        } else {
            return Err(CoreError::Domain(
                "Hessian stencil leaves the norm's domain even after shrinking the step".into(),
            ));
        }
    }
    unreachable!()
}

/// The volume ratio σ_g(y) = det g_y / det a evaluated through both closed
/// forms. They must agree to 1e-10 relative; a mismatch signals a
/// transcription bug upstream.
#[derive(Debug, Clone, Copy)]
pub struct SigmaG {
    /// ρ^{m-1}(ρ² + ρ₀ρ₁s³ + ρ₁²s² + (ρ - ρ₀b²)ρ₁s + (ρρ₀ - ρ₁²)b²).
    pub rho_form: f64,
    /// φ^{m+2}(φ - sφ')^{m-1}[φ - sφ' + (b² - s²)φ''].
    pub phi_form: f64,
}

impl SigmaG {
    pub fn value(&self) -> f64 {
        self.rho_form
    }
}

/// Both closed forms of σ_g at `s = β(y)` for α-unit `y`.
pub fn sigma_g(point: &AlphaBetaPoint, family: &PhiFamily, s: f64) -> Result<SigmaG> {
    check_b0(point, family)?;
    let m = point.m();
    let b = point.b();
    let r = family.rho_coeffs(s)?;
    let (phi, dphi, ddphi) = family.eval(s)?;

    let rho_form = r.rho.powi(m as i32 - 1)
        * (r.rho * r.rho
            + r.rho0 * r.rho1 * s.powi(3)
            + r.rho1 * r.rho1 * s * s
            + (r.rho - r.rho0 * b * b) * r.rho1 * s
            + (r.rho * r.rho0 - r.rho1 * r.rho1) * b * b);
    let phi_form = phi.powi(m as i32 + 2)
        * (phi - s * dphi).powi(m as i32 - 1)
        * (phi - s * dphi + (b * b - s * s) * ddphi);

    let gap = (rho_form - phi_form).abs() / rho_form.abs().max(phi_form.abs()).max(1e-300);
    if gap > 1e-10 {
        return Err(CoreError::FormMismatch {
            what: "sigma_g",
            gap,
        });
    }
    if !(rho_form > 0.0) {
        return Err(CoreError::ConditionViolated {
            margin: "sigma_g positivity",
            value: rho_form,
            site: format!("s = {s}"),
        });
    }
    Ok(SigmaG { rho_form, phi_form })
}

/// Deterministic generator of admissible random inputs for the verification
/// sweeps. A tiny splitmix PRNG keeps the crate free of test-only
/// dependencies in its public surface.
pub mod sweep {
    use super::*;

    /// SplitMix64; adequate for sampling test geometries.
    #[derive(Debug, Clone)]
    pub struct TestRng(u64);

    impl TestRng {
        pub fn new(seed: u64) -> Self {
            TestRng(seed)
        }

        pub fn next_u64(&mut self) -> u64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        }

        /// Uniform in [0, 1).
        pub fn unit(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
        }

        /// Uniform in [lo, hi).
        pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
            lo + (hi - lo) * self.unit()
        }

        pub fn vector(&mut self, dim: usize, scale: f64) -> DVector<f64> {
            DVector::from_fn(dim, |_, _| self.range(-scale, scale))
        }
    }

    /// A random well-conditioned scalar product with a random β of norm `b`.
    pub fn random_point(rng: &mut TestRng, dim: usize, b: f64) -> AlphaBetaPoint {
        let mut a = DMatrix::identity(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let e = rng.range(-0.15, 0.15);
                a[(i, j)] += e;
                if i != j {
                    a[(j, i)] += e;
                }
            }
        }
        let dir = rng.vector(dim, 1.0);
        // Scale the covector so that its raised norm is exactly b.
        let a_inv = a.clone().try_inverse().expect("conditioned metric");
        let norm = (&a_inv * &dir).dot(&dir).sqrt();
        let beta = dir * (b / norm);
        AlphaBetaPoint::new(a, beta, b).expect("random point admissible")
    }

    /// An α-unit vector whose `s = β(y)` lies safely inside the family domain
    /// (bounded away from the edges so that difference stencils stay valid).
    pub fn random_unit_admissible(
        rng: &mut TestRng,
        point: &AlphaBetaPoint,
        family: &PhiFamily,
    ) -> DVector<f64> {
        loop {
            let mut y = rng.vector(point.dim(), 1.0);
            let n = point.alpha(&y);
            if n < 1e-3 {
                continue;
            }
            y /= n;
            let mut s = point.beta_of(&y);
            if matches!(
                family,
                PhiFamily::Kropina | PhiFamily::GeneralizedKropina { .. }
            ) && s < 0.0
            {
                y = -y;
                s = -s;
            }
            let b = point.b();
            let safe = match family {
                PhiFamily::Kropina | PhiFamily::GeneralizedKropina { .. } => s > 0.35 * b,
                PhiFamily::Randers => s > -0.9,
                _ => true,
            };
            if safe {
                return y;
            }
        }
    }
}
