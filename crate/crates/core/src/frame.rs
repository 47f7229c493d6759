//! The Finsler normal of a hyperplane.
//!
//! Given the background data `(a, β)` at a point, a hyperplane `W` with
//! α-unit normal `N`, and a profile family, the α-unit vector `n` that is
//! `g_n`-orthogonal to `W` on the positive side of `N` has the form
//! `n = ĉ N − γ₁ β♯`, where `s* = β(n)` solves a scalar fixed-point equation.
//! This module solves that equation, assembles the γ-quantities and checks
//! the admissibility margins, and provides a Newton-based oracle that finds
//! `n` from the fundamental tensor alone.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;
use crate::phi::{PhiFamily, RhoCoeffs};
use crate::tensor::{fundamental_tensor, sigma_g, AlphaBetaPoint};
use crate::Result;

/// Hyperplane data: the point, the α-unit background normal `N`, `β(N)` and
/// the tangential part of `β♯`.
#[derive(Debug, Clone)]
pub struct HyperplaneData {
    point: AlphaBetaPoint,
    normal: DVector<f64>,
    beta_n: f64,
    beta_sharp_top: DVector<f64>,
}

impl HyperplaneData {
    pub fn new(point: AlphaBetaPoint, normal: DVector<f64>) -> Result<Self> {
        let unit_gap = (point.alpha(&normal) - 1.0).abs();
        if unit_gap > 1e-10 {
            return Err(CoreError::NotUnitVector(unit_gap));
        }
        let beta_n = point.beta_of(&normal);
        let beta_sharp_top = point.beta_sharp() - &normal * beta_n;
        let q = point.b() * point.b() - beta_n * beta_n;
        if q < -1e-12 {
            return Err(CoreError::Domain(format!(
                "b² - β(N)² = {q:.3e} negative beyond round-off"
            )));
        }
        Ok(Self {
            point,
            normal,
            beta_n,
            beta_sharp_top,
        })
    }

    pub fn point(&self) -> &AlphaBetaPoint {
        &self.point
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn beta_n(&self) -> f64 {
        self.beta_n
    }

    pub fn beta_sharp_top(&self) -> &DVector<f64> {
        &self.beta_sharp_top
    }

    /// b² - β(N)², the squared α-norm of the tangential part of β♯.
    pub fn q(&self) -> f64 {
        (self.point.b() * self.point.b() - self.beta_n * self.beta_n).max(0.0)
    }

    /// An a-orthonormal basis of the hyperplane, built by projecting the
    /// coordinate vectors and orthonormalizing in fixed order.
    pub fn tangent_basis(&self) -> Vec<DVector<f64>> {
        let dim = self.point.dim();
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim - 1);
        for i in 0..dim {
            if basis.len() == dim - 1 {
                break;
            }
            let mut v = DVector::zeros(dim);
            v[i] = 1.0;
            v -= &self.normal * self.point.inner(&v, &self.normal);
            for w in &basis {
                v -= w * self.point.inner(&v, w);
            }
            let norm = self.point.alpha(&v);
            if norm > 1e-8 {
                basis.push(v / norm);
            }
        }
        basis
    }
}

/// Everything the normal solve produces at one point.
#[derive(Debug, Clone)]
pub struct PointwiseFrame {
    pub s_star: f64,
    pub rho_coeffs: RhoCoeffs,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub c_hat: f64,
    /// The α-unit Finsler normal n = ĉN − γ₁β♯.
    pub n: DVector<f64>,
    /// ‖n‖_g = φ(s*).
    pub norm_n_g: f64,
    /// σ_g(n) = det g_n / det a.
    pub sigma: f64,
    /// ρ² − (b² − β(N)²)(ρ₁ + ρ₀β(n))², nonnegative iff the discriminant
    /// condition holds.
    pub margin_discr: f64,
    /// |ρ + (b² − β(N)²)γ₂|, positive iff the transfer denominator is safe.
    pub margin_gamma3: f64,
    pub beta_n: f64,
    pub b: f64,
}

struct FixedPointEval {
    f: f64,
    df: f64,
}

/// γ₁ and the fixed-point function f(s) = ĉ(s)β(N) − γ₁(s)b² − s together
/// with its analytic derivative. Returns None where ρ ≤ 0 or the
/// discriminant condition fails so that bracketing can skip such s.
fn eval_fixed_point(family: &PhiFamily, b: f64, beta_n: f64, s: f64) -> Option<FixedPointEval> {
    let (phi, dphi, ddphi) = family.eval(s).ok()?;
    let denom = phi - s * dphi;
    if denom <= 0.0 || phi <= 0.0 {
        return None;
    }
    let gamma1 = dphi / denom;
    let q = b * b - beta_n * beta_n;
    let disc = 1.0 - gamma1 * gamma1 * q;
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let c_hat = gamma1 * beta_n + sqrt_disc;
    let f = c_hat * beta_n - gamma1 * b * b - s;
    // dγ₁/ds = φφ'' / (φ - sφ')².
    let dgamma1 = phi * ddphi / (denom * denom);
    let dc_hat = if sqrt_disc > 1e-14 {
        dgamma1 * beta_n - gamma1 * dgamma1 * q / sqrt_disc
    } else {
        f64::INFINITY
    };
    let df = dc_hat * beta_n - dgamma1 * b * b - 1.0;
    Some(FixedPointEval { f, df })
}

const SOLVE_TOL: f64 = 1e-14;
const SCAN_POINTS: usize = 512;

/// Solve s = ĉ(s)β(N) − γ₁(s)b² for s* = β(n) on the admissible part of
/// `s_domain ∩ [−b, b]`, taking the root on the positive side of `N`.
pub fn solve_beta_n(data: &HyperplaneData, family: &PhiFamily) -> Result<f64> {
    let point = data.point();
    let b = point.b();
    let beta_n = data.beta_n();
    if point.b() >= family.b0() {
        return Err(CoreError::Domain(format!(
            "b = {b} not below b₀ = {} for {family:?}",
            family.b0()
        )));
    }
    if matches!(family, PhiFamily::Riemannian) {
        return Ok(beta_n);
    }
    if b < 1e-14 {
        // β ≡ 0: n = N and s* = β(N) = 0 where the profile admits it.
        if family.contains(0.0) {
            return Ok(0.0);
        }
        return Err(CoreError::Domain(format!(
            "vanishing β is outside the cone of {family:?}"
        )));
    }

    let (dom_lo, dom_hi) = family.s_domain();
    let lo = dom_lo.max(-b);
    let hi = dom_hi.min(b);
    if !(hi > lo) {
        return Err(CoreError::NoRoot(format!(
            "empty admissible interval for b = {b}"
        )));
    }
    // Keep strictly inside open domain ends (e.g. s > 0 for Kropina) but
    // allow the closed endpoint s = b itself.
    let eps = 1e-12 * (hi - lo).max(1.0);
    let lo = if lo == dom_lo && lo.is_finite() && dom_lo > f64::NEG_INFINITY {
        lo + eps
    } else {
        lo
    };

    let mut prev: Option<(f64, f64)> = None;
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    let mut any_valid = false;
    let mut best_endpoint: Option<(f64, f64)> = None;
    for i in 0..=SCAN_POINTS {
        let s = lo + (hi - lo) * i as f64 / SCAN_POINTS as f64;
        let Some(ev) = eval_fixed_point(family, b, beta_n, s) else {
            prev = None;
            continue;
        };
        any_valid = true;
        if ev.f.abs() <= 1e-12 {
            best_endpoint = match best_endpoint {
                Some((_, f0)) if f0.abs() <= ev.f.abs() => best_endpoint,
                _ => Some((s, ev.f)),
            };
        }
        if let Some((s0, f0)) = prev {
            if f0 == 0.0 || f0.signum() != ev.f.signum() {
                bracket = Some((s0, f0, s, ev.f));
                break;
            }
        }
        prev = Some((s, ev.f));
    }

    let (mut a_s, mut a_f, mut b_s, mut b_f) = match bracket {
        Some(br) => br,
        None => {
            if let Some((s, _)) = best_endpoint {
                return Ok(s);
            }
            if !any_valid {
                return Err(CoreError::ConditionViolated {
                    margin: "discriminant",
                    value: -1.0,
                    site: format!("whole bracket [{lo}, {hi}]"),
                });
            }
            return Err(CoreError::NoRoot(format!(
                "no sign change of the fixed-point function on [{lo}, {hi}]"
            )));
        }
    };

    // Safeguarded Newton: fall back to bisection whenever the Newton step
    // leaves the bracket or the derivative is unusable.
    let mut s = 0.5 * (a_s + b_s);
    for _ in 0..200 {
        let ev = match eval_fixed_point(family, b, beta_n, s) {
            Some(ev) => ev,
            None => {
                s = 0.5 * (a_s + b_s);
                eval_fixed_point(family, b, beta_n, s).ok_or_else(|| {
                    CoreError::NoRoot("midpoint left the admissible set".into())
                })?
            }
        };
        if ev.f.abs() <= SOLVE_TOL {
            return Ok(s);
        }
        if ev.f.signum() == a_f.signum() {
            a_s = s;
            a_f = ev.f;
        } else {
            b_s = s;
            b_f = ev.f;
        }
        let newton = s - ev.f / ev.df;
        let (left, right) = if a_s < b_s { (a_s, b_s) } else { (b_s, a_s) };
        s = if ev.df.is_finite() && ev.df != 0.0 && newton > left && newton < right {
            newton
        } else {
            0.5 * (a_s + b_s)
        };
        if (b_s - a_s).abs() < f64::EPSILON * s.abs().max(1.0) {
            break;
        }
    }
    let _ = (a_f, b_f);
    let ev = eval_fixed_point(family, b, beta_n, s)
        .ok_or_else(|| CoreError::NoRoot("final iterate left the admissible set".into()))?;
    if ev.f.abs() <= 1e-12 {
        Ok(s)
    } else {
        Err(CoreError::NoConvergence(200, ev.f.abs()))
    }
}

/// Assemble the full frame at one point; all admissibility margins are
/// checked and the γ₂ dual forms are compared.
pub fn build_frame(data: &HyperplaneData, family: &PhiFamily) -> Result<PointwiseFrame> {
    let point = data.point();
    let b = point.b();
    let beta_n = data.beta_n();

    if matches!(family, PhiFamily::Riemannian) {
        // φ ≡ 1 collapses everything onto the background data.
        let sg = sigma_g(point, family, beta_n)?;
        return Ok(PointwiseFrame {
            s_star: beta_n,
            rho_coeffs: RhoCoeffs {
                rho: 1.0,
                rho0: 0.0,
                rho1: 0.0,
            },
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            c_hat: 1.0,
            n: data.normal().clone(),
            norm_n_g: 1.0,
            sigma: sg.value(),
            margin_discr: 1.0,
            margin_gamma3: 1.0,
            beta_n,
            b,
        });
    }

    let s = solve_beta_n(data, family)?;
    let (phi, dphi, ddphi) = family.eval(s)?;
    let r = family.rho_coeffs(s)?;
    if r.rho <= 0.0 {
        return Err(CoreError::ConditionViolated {
            margin: "rho positivity",
            value: r.rho,
            site: format!("s* = {s}"),
        });
    }
    let q = data.q();

    let gamma1 = (r.rho1 + r.rho0 * s) / r.rho;
    let gamma1_phi = dphi / (phi - s * dphi);
    let g1_gap = (gamma1 - gamma1_phi).abs() / gamma1.abs().max(1.0);
    if g1_gap > 1e-10 {
        return Err(CoreError::FormMismatch {
            what: "gamma1",
            gap: g1_gap,
        });
    }

    let margin_discr = r.rho * r.rho - q * (r.rho1 + r.rho0 * s).powi(2);
    let disc = 1.0 - gamma1 * gamma1 * q;
    if disc < -1e-14 {
        return Err(CoreError::ConditionViolated {
            margin: "discriminant",
            value: margin_discr,
            site: format!("s* = {s}"),
        });
    }
    let c_hat = gamma1 * beta_n + disc.max(0.0).sqrt();

    let residual = (c_hat * beta_n - gamma1 * b * b - s).abs();
    if residual > 1e-10 {
        return Err(CoreError::NoConvergence(0, residual));
    }

    let gamma2 = r.rho0 - gamma1 * r.rho1 * (s * gamma1 + 2.0);
    let gamma2_phi = phi * (phi * phi * ddphi - phi * dphi * dphi + s * dphi.powi(3))
        / (phi - s * dphi).powi(2);
    let g2_gap = (gamma2 - gamma2_phi).abs() / gamma2.abs().max(1.0);
    if g2_gap > 1e-10 {
        return Err(CoreError::FormMismatch {
            what: "gamma2",
            gap: g2_gap,
        });
    }

    let denom = r.rho + q * gamma2;
    let margin_gamma3 = denom.abs();
    if margin_gamma3 <= 1e-12 * r.rho {
        return Err(CoreError::ConditionViolated {
            margin: "gamma3 denominator",
            value: margin_gamma3,
            site: format!("s* = {s}"),
        });
    }
    let gamma3 = -gamma2 / denom;

    let n = data.normal() * c_hat - point.beta_sharp() * gamma1;
    let n_unit_gap = (point.inner(&n, &n) - 1.0).abs();
    if n_unit_gap > 1e-9 {
        return Err(CoreError::NotUnitVector(n_unit_gap));
    }
    if c_hat - gamma1 * beta_n <= 0.0 {
        return Err(CoreError::ConditionViolated {
            margin: "<n, N> positivity",
            value: c_hat - gamma1 * beta_n,
            site: format!("s* = {s}"),
        });
    }

    let sg = sigma_g(point, family, s)?;
    let frame = PointwiseFrame {
        s_star: s,
        rho_coeffs: r,
        gamma1,
        gamma2,
        gamma3,
        c_hat,
        n,
        norm_n_g: phi,
        sigma: sg.value(),
        margin_discr,
        margin_gamma3,
        beta_n,
        b,
    };

    // g_n(n, n) must reproduce φ² through the independent tensor route.
    let gnn = fundamental_tensor(point, family, &frame.n, &frame.n, &frame.n)?;
    let gap = (gnn - phi * phi).abs() / (phi * phi).max(1.0);
    if gap > 1e-10 {
        return Err(CoreError::FormMismatch {
            what: "g(n,n) vs phi^2",
            gap,
        });
    }
    Ok(frame)
}

/// g(u, v) = ρ⟨u, v⟩ + γ₂β(u)β(v) for u, v tangent to the hyperplane.
pub fn metric_on_hyperplane(
    data: &HyperplaneData,
    frame: &PointwiseFrame,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let point = data.point();
    for w in [u, v] {
        let t = point.inner(w, data.normal());
        if t.abs() > 1e-9 * point.alpha(w).max(1.0) {
            return Err(CoreError::NotTangential(t));
        }
    }
    Ok(frame.rho_coeffs.rho * point.inner(u, v)
        + frame.gamma2 * point.beta_of(u) * point.beta_of(v))
}

/// Invert g(u, ·) = ⟨U, ·⟩ along the hyperplane:
/// ρu = U + γ₃β(U)β^{♯⊤}.
pub fn sharp_transfer(
    data: &HyperplaneData,
    frame: &PointwiseFrame,
    u_form: &DVector<f64>,
) -> Result<DVector<f64>> {
    let point = data.point();
    let t = point.inner(u_form, data.normal());
    if t.abs() > 1e-9 * point.alpha(u_form).max(1.0) {
        return Err(CoreError::NotTangential(t));
    }
    if frame.margin_gamma3 <= 0.0 {
        return Err(CoreError::ConditionViolated {
            margin: "gamma3 denominator",
            value: frame.margin_gamma3,
            site: "sharp_transfer".into(),
        });
    }
    Ok((u_form + data.beta_sharp_top() * (frame.gamma3 * point.beta_of(u_form)))
        / frame.rho_coeffs.rho)
}

/// Independent check of the frame: solve
/// `{ g_y(y, vᵢ) = 0, ⟨y, y⟩ = 1, ⟨y, N⟩ > 0 }` by damped Newton from
/// `y₀ = N`, using the fundamental tensor only.
pub fn normal_oracle(data: &HyperplaneData, family: &PhiFamily) -> Result<DVector<f64>> {
    let point = data.point();
    let dim = point.dim();
    let basis = data.tangent_basis();

    let residual = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let alpha = point.alpha(y);
        if alpha < 1e-8 {
            return Err(CoreError::Domain("iterate collapsed to the origin".into()));
        }
        let y_hat = y / alpha;
        let mut r = DVector::zeros(dim);
        for (i, v) in basis.iter().enumerate() {
            r[i] = fundamental_tensor(point, family, &y_hat, &y_hat, v)?;
        }
        r[dim - 1] = point.inner(y, y) - 1.0;
        Ok(r)
    };

    let mut y = data.normal().clone();
    // Kropina-type cones exclude N itself when β(N) ≤ 0; nudge the seed
    // into the cone along β♯.
    if !family.contains(point.beta_of(&y)) {
        let bs = point.beta_sharp();
        let bnorm = point.alpha(&bs);
        if bnorm > 1e-14 {
            y += &bs * (0.5 / bnorm);
            y /= point.alpha(&y);
        }
    }
    let mut r = residual(&y)?;
    let mut rnorm = r.norm();
    let fd_step = 1e-7;

    let finish = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let mut n = y.clone();
        n /= point.alpha(&n);
        if point.inner(&n, data.normal()) <= 0.0 {
            return Err(CoreError::ConditionViolated {
                margin: "<n, N> positivity",
                value: point.inner(&n, data.normal()),
                site: "normal_oracle".into(),
            });
        }
        Ok(n)
    };

    for iter in 0..100 {
        if rnorm <= 1e-12 {
            return finish(&y);
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += fd_step;
            ym[j] -= fd_step;
            let rp = residual(&yp)?;
            let rm = residual(&ym)?;
            for i in 0..dim {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * fd_step);
            }
        }
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| CoreError::SingularMetric("singular Newton system".into()))?;
        // Damping factor 1/2 on residual increase.
        let mut lambda = 1.0;
        loop {
            let trial = &y + &delta * lambda;
            match residual(&trial) {
                Ok(rt) if rt.norm() < rnorm => {
                    y = trial;
                    r = rt;
                    rnorm = r.norm();
                    break;
                }
                _ => {
                    lambda *= 0.5;
                    if lambda < 1e-10 {
                        // Stalled by round-off; the iterate is converged for
                        // every downstream tolerance.
                        if rnorm <= 1e-9 {
                            return finish(&y);
                        }
                        return Err(CoreError::NoConvergence(iter, rnorm));
                    }
                }
            }
        }
    }
    Err(CoreError::NoConvergence(100, rnorm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sweep::{random_point, TestRng};
    use approx::assert_relative_eq;

    fn flat_data(beta: &[f64], normal_axis: usize) -> HyperplaneData {
        let dim = beta.len();
        let a = DMatrix::identity(dim, dim);
        let point = AlphaBetaPoint::from_parts(a, DVector::from_row_slice(beta)).unwrap();
        let mut n = DVector::zeros(dim);
        n[normal_axis] = 1.0;
        HyperplaneData::new(point, n).unwrap()
    }

    /// β with |β| = b and β(N) = beta_n on the flat background.
    fn flat_data_with(b: f64, beta_n: f64, dim: usize) -> HyperplaneData {
        let tang = (b * b - beta_n * beta_n).max(0.0).sqrt();
        let mut beta = vec![0.0; dim];
        beta[0] = tang;
        beta[dim - 1] = beta_n;
        flat_data(&beta, dim - 1)
    }

    #[test]
    fn riemannian_normal_is_background_normal() {
        let data = flat_data_with(0.4, 0.2, 3);
        let s = solve_beta_n(&data, &PhiFamily::Riemannian).unwrap();
        assert_relative_eq!(s, 0.2);
        let frame = build_frame(&data, &PhiFamily::Riemannian).unwrap();
        assert_relative_eq!((&frame.n - data.normal()).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(frame.c_hat, 1.0);
    }

    #[test]
    fn randers_closed_forms() {
        let data = flat_data_with(0.3, 0.1, 3);
        let fam = PhiFamily::Randers;
        let c = (1.0_f64 - 0.08).sqrt();
        let c_hat = c + 0.1;
        let s = solve_beta_n(&data, &fam).unwrap();
        assert_relative_eq!(s, c * c_hat - 1.0, epsilon = 1e-12);
        assert_relative_eq!(s, 0.0159166304662544, epsilon = 1e-12);

        let frame = build_frame(&data, &fam).unwrap();
        assert_relative_eq!(frame.gamma1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(frame.gamma2, -c * c_hat, epsilon = 1e-12);
        assert_relative_eq!(frame.gamma3, 1.0 / (c * c), epsilon = 1e-12);
        assert_relative_eq!(frame.norm_n_g, c * c_hat, epsilon = 1e-12);
        assert_relative_eq!(frame.c_hat, c_hat, epsilon = 1e-12);
        // σ_g(n) = (1 + β(n))^{m+2}
        assert_relative_eq!(frame.sigma, (1.0 + s).powi(4), max_relative = 1e-12);
    }

    #[test]
    fn kropina_closed_forms() {
        let data = flat_data_with(0.5, 0.3, 3);
        let fam = PhiFamily::Kropina;
        let s = solve_beta_n(&data, &fam).unwrap();
        let expected = (0.5_f64 * (0.5 + 0.3) / 2.0).sqrt();
        assert_relative_eq!(s, expected, epsilon = 1e-12);
        assert_relative_eq!(s, 0.4472135954999579, epsilon = 1e-12);

        let frame = build_frame(&data, &fam).unwrap();
        assert_relative_eq!(frame.gamma1, -1.0 / (2.0 * s), epsilon = 1e-12);
        assert!(frame.gamma2.abs() < 1e-12);
        assert!(frame.gamma3.abs() < 1e-12);
        assert_relative_eq!(frame.c_hat, 0.5590169943749474, epsilon = 1e-11);
        // Fixed-point residual.
        let res = frame.c_hat * 0.3 - frame.gamma1 * 0.25 - s;
        assert!(res.abs() <= 1e-12, "fixed-point residual {res:.3e}");
    }

    #[test]
    fn kropina_normal_component_cases() {
        // β(N) = b: the normal lies along β♯ and s* = b exactly.
        let data = flat_data_with(0.5, 0.5, 3);
        let s = solve_beta_n(&data, &PhiFamily::Kropina).unwrap();
        assert!((s - 0.5).abs() <= 1e-12, "s* = {s}");

        // β(N) = 0: positive branch s* = b/√2.
        let data = flat_data_with(0.5, 0.0, 3);
        let s = solve_beta_n(&data, &PhiFamily::Kropina).unwrap();
        assert_relative_eq!(s, 0.5 / 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn generalized_kropina_negative_normal_errors_when_outside_cone() {
        // With β(N) << 0 and l = 2 the admissible interval holds no root.
        let data = flat_data_with(0.4, -0.4, 3);
        let fam = PhiFamily::generalized_kropina(2.0).unwrap();
        assert!(matches!(
            solve_beta_n(&data, &fam),
            Err(CoreError::NoRoot(_)) | Err(CoreError::ConditionViolated { .. })
        ));
    }

    #[test]
    fn frame_invariants_random_sweep() {
        let mut rng = TestRng::new(314);
        let families = [
            PhiFamily::Randers,
            PhiFamily::Kropina,
            PhiFamily::generalized_kropina(2.0).unwrap(),
        ];
        let mut cases = 0;
        while cases < 60 {
            let family = &families[cases % families.len()];
            let b = rng.range(0.1, 0.45);
            let point = random_point(&mut rng, 3, b);
            let mut n = rng.vector(3, 1.0);
            let norm = point.alpha(&n);
            if norm < 1e-3 {
                continue;
            }
            n /= norm;
            if matches!(
                family,
                PhiFamily::Kropina | PhiFamily::GeneralizedKropina { .. }
            ) && point.beta_of(&n) < 0.05
            {
                continue;
            }
            let data = HyperplaneData::new(point.clone(), n).unwrap();
            let frame = match build_frame(&data, family) {
                Ok(f) => f,
                Err(CoreError::NoRoot(_)) => continue,
                Err(e) => panic!("unexpected failure for {family:?}: {e}"),
            };
            cases += 1;

            assert!((point.inner(&frame.n, &frame.n) - 1.0).abs() <= 1e-10);
            assert!(point.inner(&frame.n, data.normal()) > 0.0);
            for v in data.tangent_basis() {
                let g = fundamental_tensor(&point, family, &frame.n, &frame.n, &v).unwrap();
                assert!(g.abs() <= 1e-9, "g_n(n,v) = {g:.3e} for {family:?}");
            }
            let gnn = fundamental_tensor(&point, family, &frame.n, &frame.n, &frame.n).unwrap();
            assert_relative_eq!(gnn, frame.norm_n_g * frame.norm_n_g, max_relative = 1e-10);

            // γ₃(ρ + Qγ₂) = -γ₂ to 1e-12.
            let q = data.q();
            let lhs = frame.gamma3 * (frame.rho_coeffs.rho + q * frame.gamma2);
            assert_relative_eq!(lhs, -frame.gamma2, epsilon = 1e-12, max_relative = 1e-12);

            assert!(frame.margin_discr >= 0.0);
            assert!(frame.margin_gamma3 > 0.0);
        }
    }

    #[test]
    fn beta_parallel_to_normal_keeps_n_collinear() {
        // β = b·N♭ on a curved background.
        let mut rng = TestRng::new(77);
        for family in [PhiFamily::Randers, PhiFamily::Kropina] {
            let base = random_point(&mut rng, 3, 0.3);
            let mut n = rng.vector(3, 1.0);
            n /= base.alpha(&n);
            let b = 0.3;
            let beta = base.metric() * &n * b;
            let point = AlphaBetaPoint::new(base.metric().clone(), beta, b).unwrap();
            let data = HyperplaneData::new(point.clone(), n.clone()).unwrap();
            assert!(point.alpha(data.beta_sharp_top()) <= 1e-12);
            let frame = build_frame(&data, &family).unwrap();
            let off = &frame.n - &n * point.inner(&frame.n, &n);
            assert!(off.amax() <= 1e-10, "n not collinear with N: {off:?}");
        }
    }

    #[test]
    fn hyperplane_metric_matches_fundamental_tensor() {
        let mut rng = TestRng::new(15);
        for family in [PhiFamily::Randers, PhiFamily::Kropina, PhiFamily::Riemannian] {
            let point = random_point(&mut rng, 3, 0.35);
            let mut n = rng.vector(3, 1.0);
            n /= point.alpha(&n);
            if point.beta_of(&n) < 0.05 {
                continue;
            }
            let data = HyperplaneData::new(point.clone(), n).unwrap();
            let frame = build_frame(&data, &family).unwrap();
            let basis = data.tangent_basis();
            for u in &basis {
                for v in &basis {
                    let lemma = metric_on_hyperplane(&data, &frame, u, v).unwrap();
                    let direct =
                        fundamental_tensor(&point, &family, &frame.n, u, v).unwrap();
                    assert_relative_eq!(lemma, direct, epsilon = 1e-10, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn hyperplane_metric_rejects_non_tangent() {
        let data = flat_data_with(0.3, 0.1, 3);
        let frame = build_frame(&data, &PhiFamily::Randers).unwrap();
        let not_tangent = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        assert!(matches!(
            metric_on_hyperplane(&data, &frame, &not_tangent, &not_tangent),
            Err(CoreError::NotTangential(_))
        ));
    }

    #[test]
    fn sharp_transfer_inverts_hyperplane_metric() {
        let mut rng = TestRng::new(51);
        for family in [PhiFamily::Randers, PhiFamily::Kropina, PhiFamily::Riemannian] {
            let point = random_point(&mut rng, 3, 0.3);
            let mut n = rng.vector(3, 1.0);
            n /= point.alpha(&n);
            if point.beta_of(&n) < 0.05 {
                continue;
            }
            let data = HyperplaneData::new(point.clone(), n).unwrap();
            let frame = build_frame(&data, &family).unwrap();
            let basis = data.tangent_basis();

            // Random tangential U, twice.
            for _ in 0..2 {
                let mut u_cap = DVector::zeros(3);
                for v in &basis {
                    u_cap += v * rng.range(-1.0, 1.0);
                }
                let u = sharp_transfer(&data, &frame, &u_cap).unwrap();
                for v in &basis {
                    let lhs = metric_on_hyperplane(&data, &frame, &u, v).unwrap();
                    let rhs = point.inner(&u_cap, v);
                    assert_relative_eq!(lhs, rhs, epsilon = 1e-9, max_relative = 1e-9);
                }
                // Direct linear-solve oracle in the tangent basis.
                let m = basis.len();
                let mut gw = DMatrix::zeros(m, m);
                let mut rhs = DVector::zeros(m);
                for i in 0..m {
                    for j in 0..m {
                        gw[(i, j)] =
                            metric_on_hyperplane(&data, &frame, &basis[i], &basis[j]).unwrap();
                    }
                    rhs[i] = point.inner(&u_cap, &basis[i]);
                }
                let coeffs = gw.lu().solve(&rhs).unwrap();
                let mut u_oracle = DVector::zeros(3);
                for i in 0..m {
                    u_oracle += &basis[i] * coeffs[i];
                }
                assert!((u_oracle - &u).amax() <= 1e-9);
            }

            if matches!(family, PhiFamily::Kropina) {
                // γ₃ = 0 for Kropina: u = U/ρ.
                let u_cap = basis[0].clone();
                let u = sharp_transfer(&data, &frame, &u_cap).unwrap();
                assert!((&u * frame.rho_coeffs.rho - &u_cap).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn normal_oracle_agrees_with_lemma_form() {
        let mut rng = TestRng::new(2718);
        // Riemannian: oracle returns N itself.
        let data = flat_data_with(0.3, 0.1, 3);
        let n = normal_oracle(&data, &PhiFamily::Riemannian).unwrap();
        assert!((n - data.normal()).amax() <= 1e-10);

        // Randers, flat: n = ĉN − β♯.
        let fam = PhiFamily::Randers;
        let data = flat_data_with(0.3, 0.1, 3);
        let frame = build_frame(&data, &fam).unwrap();
        let n = normal_oracle(&data, &fam).unwrap();
        assert!((&n - &frame.n).amax() <= 1e-8);

        // Curved sweep across the families.
        let families = [
            PhiFamily::Randers,
            PhiFamily::Kropina,
            PhiFamily::generalized_kropina(2.0).unwrap(),
        ];
        let mut cases = 0;
        while cases < 18 {
            let family = &families[cases % families.len()];
            let b = rng.range(0.15, 0.4);
            let point = random_point(&mut rng, 3, b);
            let mut nvec = rng.vector(3, 1.0);
            nvec /= point.alpha(&nvec);
            if point.beta_of(&nvec) < 0.05 {
                continue;
            }
            let data = HyperplaneData::new(point, nvec).unwrap();
            let frame = match build_frame(&data, family) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let oracle = normal_oracle(&data, family).unwrap();
            assert!(
                (&oracle - &frame.n).amax() <= 1e-8,
                "oracle gap {:.3e} for {family:?}",
                (&oracle - &frame.n).amax()
            );
            cases += 1;
        }
    }
}
