//! Profile functions φ of (α,β)-norms and their ρ-coefficients.
//!
//! An (α,β)-norm is `F(y) = α(y) φ(s)` with `s = β(y)/α(y)`. Everything the
//! pointwise machinery needs from φ is the triple `(φ, φ', φ'')` on the
//! family's validity domain, plus the strong-convexity margin
//! `φ - s φ' + (b² - s²) φ''`.

use std::fmt;
use std::sync::Arc;

use crate::error::CoreError;
use crate::Result;

/// Analytic evaluator for a custom profile: `s ↦ (φ, φ', φ'')`.
pub type PhiEval = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

/// A one-dimensional profile function φ with derivatives and validity domain.
#[derive(Clone)]
pub enum PhiFamily {
    /// φ ≡ 1, the background Riemannian norm.
    Riemannian,
    /// φ(s) = 1 + s.
    Randers,
    /// φ(s) = 1/s, restricted to s > 0.
    Kropina,
    /// φ(s) = s^{-l}, l ≠ 0, restricted to s > 0.
    GeneralizedKropina { l: f64 },
    /// User-supplied analytic profile. Positivity of φ is checked at every
    /// evaluation; no automatic differentiation is performed.
    Custom {
        name: String,
        eval: PhiEval,
        b0: f64,
        s_min: f64,
        s_max: f64,
    },
}

impl fmt::Debug for PhiFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiFamily::Riemannian => write!(f, "riemannian"),
            PhiFamily::Randers => write!(f, "randers"),
            PhiFamily::Kropina => write!(f, "kropina"),
            PhiFamily::GeneralizedKropina { l } => write!(f, "generalized_kropina(l={l})"),
            PhiFamily::Custom { name, .. } => write!(f, "custom({name})"),
        }
    }
}

/// The three s-functions entering the fundamental tensor:
/// ρ = φ(φ - sφ'), ρ₀ = φφ'' + (φ')², ρ₁ = ρ' = -s(φφ'' + (φ')²) + φφ'.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoCoeffs {
    pub rho: f64,
    pub rho0: f64,
    pub rho1: f64,
}

/// Outcome of the strong-convexity check over a set of s-samples.
#[derive(Debug, Clone, Copy)]
pub struct MinkowskiCheck {
    /// True iff `φ - sφ' + (b² - s²)φ'' > 0` at every sample.
    pub holds: bool,
    /// Minimum of `φ - sφ' + (b² - s²)φ''` over the samples.
    pub margin: f64,
    /// Minimum of the weaker quantity `φ - sφ'` over the samples.
    pub weak_margin: f64,
}

impl PhiFamily {
    /// New generalized Kropina profile; `l = 0` would be the constant profile
    /// and is rejected.
    pub fn generalized_kropina(l: f64) -> Result<Self> {
        if l == 0.0 || !l.is_finite() {
            return Err(CoreError::Domain(format!(
                "generalized Kropina exponent must be finite and nonzero, got {l}"
            )));
        }
        Ok(PhiFamily::GeneralizedKropina { l })
    }

    /// Upper bound `b₀` on admissible `b = α(β)`.
    pub fn b0(&self) -> f64 {
        match self {
            PhiFamily::Randers => 1.0,
            PhiFamily::Custom { b0, .. } => *b0,
            _ => f64::INFINITY,
        }
    }

    /// Open interval of admissible s-arguments.
    pub fn s_domain(&self) -> (f64, f64) {
        match self {
            PhiFamily::Riemannian => (f64::NEG_INFINITY, f64::INFINITY),
            PhiFamily::Randers => (-1.0, f64::INFINITY),
            PhiFamily::Kropina | PhiFamily::GeneralizedKropina { .. } => (0.0, f64::INFINITY),
            PhiFamily::Custom { s_min, s_max, .. } => (*s_min, *s_max),
        }
    }

    /// True iff `s` lies strictly inside the validity domain.
    pub fn contains(&self, s: f64) -> bool {
        let (lo, hi) = self.s_domain();
        s > lo && s < hi
    }

    /// Evaluate `(φ, φ', φ'')` at `s`.
    pub fn eval(&self, s: f64) -> Result<(f64, f64, f64)> {
        if !self.contains(s) {
            let (lo, hi) = self.s_domain();
            return Err(CoreError::Domain(format!(
                "s = {s} outside domain ({lo}, {hi}) of {self:?}"
            )));
        }
        match self {
            PhiFamily::Riemannian => Ok((1.0, 0.0, 0.0)),
            PhiFamily::Randers => Ok((1.0 + s, 1.0, 0.0)),
            PhiFamily::Kropina => {
                let inv = 1.0 / s;
                Ok((inv, -inv * inv, 2.0 * inv * inv * inv))
            }
            PhiFamily::GeneralizedKropina { l } => {
                let phi = s.powf(-l);
                let dphi = -l * s.powf(-l - 1.0);
                let ddphi = l * (l + 1.0) * s.powf(-l - 2.0);
                Ok((phi, dphi, ddphi))
            }
            PhiFamily::Custom { name, eval, .. } => {
                let (phi, dphi, ddphi) = eval(s);
                if !(phi > 0.0) {
                    return Err(CoreError::Domain(format!(
                        "custom profile {name} not positive at s = {s}: φ = {phi}"
                    )));
                }
                Ok((phi, dphi, ddphi))
            }
        }
    }

    /// The ρ-coefficients at `s`.
    pub fn rho_coeffs(&self, s: f64) -> Result<RhoCoeffs> {
        let (phi, dphi, ddphi) = self.eval(s)?;
        let r0 = phi * ddphi + dphi * dphi;
        Ok(RhoCoeffs {
            rho: phi * (phi - s * dphi),
            rho0: r0,
            rho1: -s * r0 + phi * dphi,
        })
    }

    /// Strong-convexity margin `φ - sφ' + (b² - s²)φ''` at a single `(s, b)`.
    pub fn convexity_margin(&self, s: f64, b: f64) -> Result<f64> {
        let (phi, dphi, ddphi) = self.eval(s)?;
        Ok(phi - s * dphi + (b * b - s * s) * ddphi)
    }

    /// Check the norm condition over a sample set of s-values. Every sample
    /// must satisfy `|s| ≤ b < b₀` and lie inside the validity domain.
    pub fn check_minkowski_condition(&self, b: f64, s_samples: &[f64]) -> Result<MinkowskiCheck> {
        if !(b >= 0.0 && b < self.b0()) {
            return Err(CoreError::Domain(format!(
                "b = {b} not in [0, {}) for {self:?}",
                self.b0()
            )));
        }
        let mut margin = f64::INFINITY;
        let mut weak = f64::INFINITY;
        for &s in s_samples {
            if s.abs() > b + 1e-15 {
                return Err(CoreError::Domain(format!("sample s = {s} exceeds b = {b}")));
            }
            let (phi, dphi, ddphi) = self.eval(s)?;
            margin = margin.min(phi - s * dphi + (b * b - s * s) * ddphi);
            weak = weak.min(phi - s * dphi);
        }
        Ok(MinkowskiCheck {
            holds: margin > 0.0,
            margin,
            weak_margin: weak,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_eval_values() {
        assert_eq!(PhiFamily::Randers.eval(0.2).unwrap(), (1.2, 1.0, 0.0));
        let (p, dp, ddp) = PhiFamily::Kropina.eval(0.5).unwrap();
        assert_relative_eq!(p, 2.0);
        assert_relative_eq!(dp, -4.0);
        assert_relative_eq!(ddp, 16.0);
        assert_eq!(PhiFamily::Riemannian.eval(0.7).unwrap(), (1.0, 0.0, 0.0));
    }

    #[test]
    fn generalized_kropina_matches_kropina_at_l1() {
        let gk = PhiFamily::generalized_kropina(1.0).unwrap();
        for &s in &[0.2, 0.5, 1.3] {
            let a = gk.eval(s).unwrap();
            let b = PhiFamily::Kropina.eval(s).unwrap();
            assert_relative_eq!(a.0, b.0, max_relative = 1e-14);
            assert_relative_eq!(a.1, b.1, max_relative = 1e-14);
            assert_relative_eq!(a.2, b.2, max_relative = 1e-14);
        }
    }

    #[test]
    fn kropina_rejects_nonpositive_s() {
        assert!(PhiFamily::Kropina.eval(0.0).is_err());
        assert!(PhiFamily::Kropina.eval(-0.3).is_err());
        assert!(PhiFamily::generalized_kropina(2.0).unwrap().eval(-0.1).is_err());
    }

    #[test]
    fn generalized_kropina_rejects_zero_exponent() {
        assert!(PhiFamily::generalized_kropina(0.0).is_err());
    }

    #[test]
    fn rho_coeffs_frozen_values() {
        // Kropina at s = 0.5: ρ = 2/s², ρ₀ = 3/s⁴, ρ₁ = -4/s³.
        let r = PhiFamily::Kropina.rho_coeffs(0.5).unwrap();
        assert_relative_eq!(r.rho, 8.0, max_relative = 1e-14);
        assert_relative_eq!(r.rho0, 48.0, max_relative = 1e-14);
        assert_relative_eq!(r.rho1, -32.0, max_relative = 1e-14);

        let r = PhiFamily::Randers.rho_coeffs(0.2).unwrap();
        assert_relative_eq!(r.rho, 1.2, max_relative = 1e-14);
        assert_relative_eq!(r.rho0, 1.0);
        assert_relative_eq!(r.rho1, 1.0, max_relative = 1e-14);

        let r = PhiFamily::Riemannian.rho_coeffs(0.9).unwrap();
        assert_eq!((r.rho, r.rho0, r.rho1), (1.0, 0.0, 0.0));
    }

    #[test]
    fn rho1_is_derivative_of_rho() {
        let h = 1e-5;
        for family in [
            PhiFamily::Randers,
            PhiFamily::Kropina,
            PhiFamily::generalized_kropina(2.0).unwrap(),
        ] {
            for &s in &[0.3, 0.5, 0.8] {
                let r = family.rho_coeffs(s).unwrap();
                let fd = (family.rho_coeffs(s + h).unwrap().rho
                    - family.rho_coeffs(s - h).unwrap().rho)
                    / (2.0 * h);
                assert_relative_eq!(r.rho1, fd, epsilon = 1e-7, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn randers_condition_margin_is_one() {
        let samples: Vec<f64> = (0..=40).map(|i| -0.9 + 0.045 * i as f64).collect();
        let check = PhiFamily::Randers.check_minkowski_condition(0.9, &samples).unwrap();
        assert!(check.holds);
        assert_relative_eq!(check.margin, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn kropina_condition_holds_on_positive_cone() {
        let samples: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64 / 20.0).collect();
        let check = PhiFamily::Kropina.check_minkowski_condition(0.5, &samples).unwrap();
        assert!(check.holds);
        // φ - sφ' + (b² - s²)φ'' collapses to 2b²/s³ for φ = 1/s.
        for &s in &samples {
            let m = PhiFamily::Kropina.convexity_margin(s, 0.5).unwrap();
            assert_relative_eq!(m, 2.0 * 0.25 / (s * s * s), max_relative = 1e-12);
        }
    }

    #[test]
    fn riemannian_condition_trivially_holds() {
        let check = PhiFamily::Riemannian
            .check_minkowski_condition(3.0, &[-2.0, 0.0, 1.7])
            .unwrap();
        assert!(check.holds);
        assert_relative_eq!(check.margin, 1.0);
        assert_relative_eq!(check.weak_margin, 1.0);
    }

    #[test]
    fn out_of_range_sample_is_domain_error() {
        assert!(PhiFamily::Randers
            .check_minkowski_condition(0.5, &[0.7])
            .is_err());
    }

    #[test]
    fn custom_family_positivity_checked() {
        let fam = PhiFamily::Custom {
            name: "shifted".into(),
            eval: Arc::new(|s| (s - 0.5, 1.0, 0.0)),
            b0: 1.0,
            s_min: 0.0,
            s_max: 2.0,
        };
        assert!(fam.eval(1.0).is_ok());
        assert!(fam.eval(0.25).is_err());
    }
}
