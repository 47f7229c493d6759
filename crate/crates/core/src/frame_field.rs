//! The normal frame as per-node fields.
//!
//! Point-dependence of φ, a and β is handled uniformly: every frame scalar
//! (s*, ρ-coefficients, γ's, ĉ, ‖n‖_g, σ_g(n), b², β(N)) is sampled on the
//! grid, and all derivatives of these quantities downstream are numerical
//! derivatives of the sampled fields.

use rayon::prelude::*;

use crate::error::CoreError;
use crate::frame::build_frame;
use crate::grid::{ScalarField, VectorField};
use crate::phi::PhiFamily;
use crate::scenario::Geometry;
use crate::Result;

/// Frame data of the whole grid: one pointwise frame per node, scattered
/// into scalar and vector fields.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub s_star: ScalarField,
    pub rho: ScalarField,
    pub rho0: ScalarField,
    pub rho1: ScalarField,
    pub gamma1: ScalarField,
    pub gamma2: ScalarField,
    pub gamma3: ScalarField,
    pub c_hat: ScalarField,
    /// ‖n‖_g = φ(s*).
    pub norm_n_g: ScalarField,
    /// σ_g(n).
    pub sigma: ScalarField,
    pub b_sq: ScalarField,
    pub beta_n: ScalarField,
    /// The α-unit Finsler normal.
    pub n: VectorField,
    /// Tangential part of β♯.
    pub beta_sharp_top: VectorField,
    /// Grid minima of the admissibility margins.
    pub min_margin_discr: f64,
    pub min_margin_gamma3: f64,
    /// Advisory spectral-tail smoothness diagnostic of s* (max over axes).
    pub smoothness_advisory: f64,
}

const SCALARS: usize = 12;

impl FrameField {
    pub fn build(geom: &Geometry) -> Result<Self> {
        let grid = geom.grid.clone();
        let d = grid.dim();
        let len = grid.len();

        // Degenerate β → 0 everywhere: fall back to the φ ≡ 1 collapse to
        // avoid 0/0 in the γ expressions of cone-restricted families.
        let b_max = (0..len)
            .into_par_iter()
            .map(|node| {
                let mut bs = [0.0; crate::calculus::MAX_DIM];
                geom.metric.raise_at(node, geom.beta.at(node), &mut bs[..d]);
                let b = geom.beta.at(node);
                (0..d).map(|i| b[i] * bs[i]).sum::<f64>()
            })
            .reduce(|| 0.0, f64::max);
        let family = if b_max.sqrt() < 1e-14 {
            PhiFamily::Riemannian
        } else {
            geom.family.clone()
        };

        let width = SCALARS + 2 * d;
        let mut packed = vec![0.0_f64; len * width];
        packed
            .par_chunks_mut(width)
            .enumerate()
            .try_for_each(|(node, out)| -> Result<()> {
                let data = geom.hyperplane_at(node).map_err(|e| at_node(geom, node, e))?;
                let frame = build_frame(&data, &family).map_err(|e| at_node(geom, node, e))?;
                out[0] = frame.s_star;
                out[1] = frame.rho_coeffs.rho;
                out[2] = frame.rho_coeffs.rho0;
                out[3] = frame.rho_coeffs.rho1;
                out[4] = frame.gamma1;
                out[5] = frame.gamma2;
                out[6] = frame.gamma3;
                out[7] = frame.c_hat;
                out[8] = frame.norm_n_g;
                out[9] = frame.sigma;
                out[10] = frame.b * frame.b;
                out[11] = frame.beta_n;
                for i in 0..d {
                    out[SCALARS + i] = frame.n[i];
                    out[SCALARS + d + i] = data.beta_sharp_top()[i];
                }
                Ok(())
            })?;

        let scalar = |k: usize| -> ScalarField {
            ScalarField {
                grid: grid.clone(),
                data: (0..len).map(|node| packed[node * width + k]).collect(),
            }
        };
        let vector = |offset: usize| -> VectorField {
            VectorField {
                grid: grid.clone(),
                data: (0..len * d)
                    .map(|i| packed[(i / d) * width + offset + (i % d)])
                    .collect(),
            }
        };

        let s_star = scalar(0);
        let rho = scalar(1);
        let b_sq = scalar(10);
        let beta_n = scalar(11);

        // Margin minima need one more pass through the pointwise quantities.
        let (min_margin_discr, min_margin_gamma3) = (0..len)
            .into_par_iter()
            .map(|node| {
                let r = crate::phi::RhoCoeffs {
                    rho: packed[node * width + 1],
                    rho0: packed[node * width + 2],
                    rho1: packed[node * width + 3],
                };
                let s = packed[node * width];
                let q = (packed[node * width + 10] - packed[node * width + 11].powi(2)).max(0.0);
                let discr = r.rho * r.rho - q * (r.rho1 + r.rho0 * s).powi(2);
                let g2 = packed[node * width + 5];
                let g3_margin = (r.rho + q * g2).abs();
                (discr, g3_margin)
            })
            .reduce(
                || (f64::INFINITY, f64::INFINITY),
                |a, b| (a.0.min(b.0), a.1.min(b.1)),
            );

        let smoothness_advisory = (0..d)
            .map(|axis| s_star.spectral_tail_ratio(axis))
            .fold(0.0_f64, f64::max);

        Ok(Self {
            rho0: scalar(2),
            rho1: scalar(3),
            gamma1: scalar(4),
            gamma2: scalar(5),
            gamma3: scalar(6),
            c_hat: scalar(7),
            norm_n_g: scalar(8),
            sigma: scalar(9),
            n: vector(SCALARS),
            beta_sharp_top: vector(SCALARS + d),
            s_star,
            rho,
            b_sq,
            beta_n,
            min_margin_discr,
            min_margin_gamma3,
            smoothness_advisory,
        })
    }

    /// b² − β(N)² per node.
    pub fn q_field(&self) -> ScalarField {
        ScalarField {
            grid: self.b_sq.grid.clone(),
            data: self
                .b_sq
                .data
                .iter()
                .zip(&self.beta_n.data)
                .map(|(&b2, &bn)| b2 - bn * bn)
                .collect(),
        }
    }
}

fn at_node(geom: &Geometry, node: usize, e: CoreError) -> CoreError {
    match e {
        CoreError::ConditionViolated { margin, value, .. } => CoreError::ConditionViolated {
            margin,
            value,
            site: format!("node {node} at {:?}", geom.grid.coords_vec(node)),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Family, ScenarioConfig, ScenarioId};
    use approx::assert_relative_eq;

    fn build(scenario: ScenarioId, family: Family, res: usize) -> (Geometry, FrameField) {
        let c = ScenarioConfig::new(scenario, family).with_resolution(res);
        let geom = Geometry::build(&c).unwrap();
        let ff = FrameField::build(&geom).unwrap();
        (geom, ff)
    }

    #[test]
    fn riemannian_frame_field_collapses() {
        let (geom, ff) = build(ScenarioId::S4, Family::Riemannian, 8);
        for node in (0..geom.grid.len()).step_by(29) {
            assert_relative_eq!(ff.s_star.data[node], ff.beta_n.data[node], epsilon = 1e-14);
            assert_eq!(ff.gamma1.data[node], 0.0);
            assert_eq!(ff.gamma2.data[node], 0.0);
            assert_eq!(ff.gamma3.data[node], 0.0);
            assert_eq!(ff.c_hat.data[node], 1.0);
            assert_eq!(ff.sigma.data[node], 1.0);
            let nv = ff.n.at(node);
            let nn = geom.foliation.normal.at(node);
            for i in 0..3 {
                assert_relative_eq!(nv[i], nn[i], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn randers_constant_scenario_matches_closed_forms() {
        let (geom, ff) = build(ScenarioId::S1, Family::Randers, 8);
        let b_sq = 0.08;
        let beta_n = 0.2;
        let c = (1.0_f64 - (b_sq - beta_n * beta_n)).sqrt();
        let c_hat = c + beta_n;
        for node in (0..geom.grid.len()).step_by(13) {
            assert_relative_eq!(ff.s_star.data[node], c * c_hat - 1.0, epsilon = 1e-12);
            assert_relative_eq!(ff.gamma1.data[node], 1.0, epsilon = 1e-12);
            assert_relative_eq!(ff.gamma2.data[node], -c * c_hat, epsilon = 1e-12);
            assert_relative_eq!(ff.gamma3.data[node], 1.0 / (c * c), epsilon = 1e-12);
            assert_relative_eq!(ff.norm_n_g.data[node], c * c_hat, epsilon = 1e-12);
        }
        // Constant fields stay constant bit-for-bit.
        assert_eq!(ff.s_star.spread(), 0.0);
        assert_eq!(ff.sigma.spread(), 0.0);
    }

    #[test]
    fn kropina_tangent_beta_field() {
        // b = const, β(N) = 0 on the warped catalog scenario with ε = 0:
        // s* = b/√2 everywhere.
        let mut cfg = ScenarioConfig::new(ScenarioId::S2, Family::Kropina).with_resolution(8);
        cfg.epsilon = Some(0.0);
        let geom = Geometry::build(&cfg).unwrap();
        let ff = FrameField::build(&geom).unwrap();
        let b = 0.2;
        for node in (0..geom.grid.len()).step_by(17) {
            assert_relative_eq!(
                ff.s_star.data[node],
                b / 2.0_f64.sqrt(),
                epsilon = 1e-12
            );
            assert_relative_eq!(ff.beta_n.data[node], 0.0, epsilon = 1e-14);
        }
        assert!(ff.min_margin_discr >= 0.0);
        assert!(ff.min_margin_gamma3 > 0.0);
    }

    #[test]
    fn s4_fields_are_smooth_and_admissible() {
        for family in [Family::Randers, Family::Kropina] {
            let (_, ff) = build(ScenarioId::S4, family, 16);
            assert!(ff.min_margin_discr > 0.0);
            assert!(ff.min_margin_gamma3 > 0.0);
            assert!(
                ff.smoothness_advisory < 1e-6,
                "frame fields should be spectrally smooth, tail = {}",
                ff.smoothness_advisory
            );
        }
    }

    #[test]
    fn condition_violation_names_the_node() {
        // A custom profile engineered to fail the discriminant condition:
        // large |φ'| relative to φ - sφ'.
        let cfg = ScenarioConfig::new(ScenarioId::S1, Family::Randers).with_resolution(8);
        let mut geom = Geometry::build(&cfg).unwrap();
        geom.family = PhiFamily::Custom {
            name: "steep".into(),
            eval: std::sync::Arc::new(|s| (1.0 + 5.0 * s, 5.0, 0.0)),
            b0: 1.0,
            s_min: -0.19,
            s_max: 10.0,
        };
        match FrameField::build(&geom) {
            Err(
                CoreError::ConditionViolated { .. }
                | CoreError::NoRoot(_)
                | CoreError::NoConvergence(..),
            ) => {}
            other => panic!("expected admissibility failure, got {other:?}"),
        }
    }
}
