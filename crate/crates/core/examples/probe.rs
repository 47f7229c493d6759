//! Development probe: prints oracle gaps, closed-form display gaps and
//! residuals across scenarios and resolutions.

use abfol_core::integrals::*;
use abfol_core::operators::*;
use abfol_core::scenario::{Family, Geometry, ScenarioConfig, ScenarioId};
use abfol_core::FrameField;

fn main() {
    let cases = [
        (ScenarioId::S2, Family::Randers, None),
        (ScenarioId::S3, Family::Randers, None),
        (ScenarioId::S4, Family::Randers, None),
        (ScenarioId::S2, Family::Kropina, None),
        (ScenarioId::S2, Family::Kropina, Some(0.0)),
        (ScenarioId::S3, Family::Kropina, None),
        (ScenarioId::S4, Family::Kropina, None),
    ];
    for (scenario, family, eps) in cases {
        println!("=== {:?} {:?} eps={:?}", scenario, family, eps);
        for res in [16usize, 32, 64] {
            let mut c = ScenarioConfig::new(scenario, family.clone()).with_resolution(res);
            if let Some(e) = eps {
                c.epsilon = Some(e);
            }
            let geom = Geometry::build(&c).unwrap();
            let ff = FrameField::build(&geom).unwrap();
            let ld = leaf_data(&geom, &ff);
            let ops = leaf_operators(&geom, &ff, &ld);
            let pm = perturbed_metric(&geom, &ff).unwrap();
            let ao = shape_operator_g_oracle(&geom, &ff, &pm);
            let zo = curvature_vector_g_oracle(&pm);
            let ag_gap = ops.shape_g.max_gap(&ao);
            let z_gap = ops
                .curvature_g
                .data
                .iter()
                .zip(&zo.data)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            let t1 = theorem1_general_residual(&geom, &ff, &ld);
            print!(
                "res {res:3}: Ag_gap {ag_gap:9.3e}  Z_gap {z_gap:9.3e}  T1 {:10.3e} (rel {:9.3e})",
                t1.value,
                t1.relative()
            );
            if matches!(family, Family::Randers) {
                let disp = randers_shape_display(&geom, &ff, &ld).unwrap();
                let cf = randers_c_field(&ff).unwrap();
                let mut scaled = ops.shape_g.clone();
                for node in 0..geom.grid.len() {
                    for k in 0..9 {
                        scaled.data[node * 9 + k] *= cf.data[node];
                    }
                }
                let zn = curvature_numerator(&geom, &ff, &ld);
                let znd = randers_curvature_numerator_display(&geom, &ff, &ld).unwrap();
                let zn_gap = zn
                    .data
                    .iter()
                    .zip(&znd.data)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                print!(
                    "  cAg_disp {:9.3e}  Zn_disp {zn_gap:9.3e}",
                    disp.max_gap(&scaled)
                );
                let e3 = example3_randers_residual(&geom, &ff, &ld).unwrap();
                print!("  E3 {:10.3e} (rel {:9.3e})", e3.value, e3.relative());
            }
            if matches!(family, Family::Kropina) && c.is_constant_case() {
                let trd = kropina_trace_display(&geom, &ff, &ld).unwrap();
                let tr = ops.shape_g.trace_field();
                let tr_gap = trd
                    .data
                    .iter()
                    .zip(&tr.data)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                print!("  trAg_disp {tr_gap:9.3e}");
                if ff.beta_n.max_abs() <= 1e-10 {
                    let zd = kropina_z_display(&geom, &ff, &ld).unwrap();
                    let zd_gap = zd
                        .data
                        .iter()
                        .zip(&ops.curvature_g.data)
                        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                    print!("  Zdisp {zd_gap:9.3e}");
                }
            }
            if matches!(scenario, ScenarioId::S3) {
                let reduced = curvature_vector_g_tangent_reduced(&geom, &ff, &ld);
                let red_gap = reduced
                    .data
                    .iter()
                    .zip(&ops.curvature_g.data)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                print!("  Zred {red_gap:9.3e}");
            }
            println!();
        }
    }
}
