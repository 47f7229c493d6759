//! Run orchestration and machine-readable reports.
//!
//! A run builds the geometry and frame fields, evaluates every applicable
//! integral-formula residual together with the operator oracle gaps and
//! closed-form display gaps, and returns a schema-versioned report. All
//! floating-point output is printed with 17 significant digits; the report
//! payload is bit-deterministic for a fixed config regardless of thread
//! count (wall-clock timings are the one excluded section).

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use serde::Serialize;

use crate::frame_field::FrameField;
use crate::integrals::{
    eigenvalue_corollary_check, example3_kropina_residual, example3_randers_residual,
    observed_order, reeb_residual_g, theorem1_constant_residual, theorem1_general_residual,
    FormulaResult,
};
use crate::operators::{
    curvature_numerator, curvature_vector_g_oracle, curvature_vector_g_tangent_reduced, leaf_data,
    leaf_operators, kropina_trace_display, kropina_z_display, perturbed_metric,
    randers_curvature_numerator_display, randers_shape_display, shape_operator_g_oracle,
};
use crate::scenario::{Family, Geometry, ScenarioConfig, ScenarioId};
use crate::grid::VectorField;
use crate::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Residual of one integral formula at one resolution.
#[derive(Debug, Clone, Serialize)]
pub struct FormulaReport {
    pub name: String,
    pub value: f64,
    pub scale: f64,
    pub relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Max-norm gap between two routes to the same object.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub name: String,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionMargins {
    pub min_discriminant: f64,
    pub min_gamma3_denominator: f64,
}

/// Full report of one verification run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub resolution: usize,
    pub formulas: Vec<FormulaReport>,
    pub oracle_gaps: Vec<GapReport>,
    pub closed_form_gaps: Vec<GapReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_constants: Option<(f64, f64)>,
    pub condition_margins: ConditionMargins,
    pub smoothness_advisory: f64,
    pub all_within_tolerance: bool,
    /// Wall-clock seconds per stage; excluded from the determinism contract.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    /// The deterministic part of the report (timings stripped).
    pub fn deterministic_payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("timings");
        }
        v
    }

    pub fn to_json(&self) -> String {
        to_json_17(self)
    }
}

fn push_formula(
    out: &mut Vec<FormulaReport>,
    name: &str,
    r: FormulaResult,
    tolerance: f64,
) {
    // Absolute floor: an integrand that vanishes identically has no scale
    // to normalize against.
    let pass = r.relative() <= tolerance || r.value.abs() <= 1e-12;
    out.push(FormulaReport {
        name: name.into(),
        value: r.value,
        scale: r.scale,
        relative: r.relative(),
        tolerance,
        pass,
    });
}

/// Evaluate every formula, oracle and closed-form display applicable to the
/// configured scenario at its configured resolution.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    run_scenario_prevalidated(config)
}

/// As [`run_scenario`] but skipping the coarse pre-scan (used by the
/// convergence driver which validates once).
pub fn run_scenario_prevalidated(config: &ScenarioConfig) -> Result<RunReport> {
    let mut timings = BTreeMap::new();
    let tol = config.residual_tolerance();

    let t0 = Instant::now();
    let geom = Geometry::build(config)?;
    timings.insert("geometry".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let ff = FrameField::build(&geom)?;
    timings.insert("frame_field".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let ld = leaf_data(&geom, &ff);
    let ops = leaf_operators(&geom, &ff, &ld);
    timings.insert("operators".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let pm = perturbed_metric(&geom, &ff)?;
    let shape_oracle = shape_operator_g_oracle(&geom, &ff, &pm);
    let z_oracle = curvature_vector_g_oracle(&pm);
    timings.insert("oracles".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let mut formulas = Vec::new();
    push_formula(
        &mut formulas,
        "reeb_g",
        reeb_residual_g(&geom, &ff, &ops.shape_g),
        tol,
    );
    push_formula(
        &mut formulas,
        "theorem1_general",
        theorem1_general_residual(&geom, &ff, &ld),
        tol,
    );

    let mut q_constants = None;
    if config.is_constant_case() {
        let (qc, r) = theorem1_constant_residual(&geom, &ff, &ld)?;
        q_constants = Some((qc.q1, qc.q2));
        push_formula(&mut formulas, "theorem1_constant", r, tol);
    }
    if matches!(config.family, Family::Randers) {
        push_formula(
            &mut formulas,
            "example3_randers",
            example3_randers_residual(&geom, &ff, &ld)?,
            tol,
        );
    }
    if matches!(config.family, Family::Kropina) && config.is_constant_case() {
        push_formula(
            &mut formulas,
            "example3_kropina",
            example3_kropina_residual(&geom, &ff, &ld)?,
            tol,
        );
    }
    if matches!(config.scenario, ScenarioId::S2) && config.epsilon() > 0.0 {
        // β♯ = ε′X + εN with X the warped-frame eigenfield of Ā.
        let d = geom.grid.dim();
        let eps = config.epsilon();
        let eps_p = config.epsilon_prime();
        if eps_p > 0.0 {
            let mut x = VectorField::zeros(&geom.grid);
            for node in 0..geom.grid.len() {
                let bs = geom.beta_sharp.at(node);
                let n = geom.foliation.normal.at(node);
                for i in 0..d {
                    x.data[node * d + i] = (bs[i] - eps * n[i]) / eps_p;
                }
            }
            let check = eigenvalue_corollary_check(&geom, &ff, &ld, &x, eps, eps_p)?;
            formulas.push(FormulaReport {
                name: "eigenvalue_corollary".into(),
                value: check.lambda_integral,
                scale: check.lambda_scale,
                relative: check.lambda_integral.abs() / check.lambda_scale.max(1e-300),
                tolerance: tol,
                pass: check.lambda_integral.abs() / check.lambda_scale.max(1e-300) <= tol
                    || check.lambda_integral.abs() <= 1e-12,
            });
        }
    }

    let mut oracle_gaps = vec![
        GapReport {
            name: "shape_g_formula_vs_oracle".into(),
            max_abs: ops.shape_g.max_gap(&shape_oracle),
        },
        GapReport {
            name: "curvature_g_formula_vs_oracle".into(),
            max_abs: vector_gap(&ops.curvature_g, &z_oracle),
        },
    ];

    let mut closed_form_gaps = Vec::new();
    if matches!(config.family, Family::Randers) {
        let display = randers_shape_display(&geom, &ff, &ld)?;
        // The display produces cA^g.
        let c = crate::operators::randers_c_field(&ff)?;
        let scaled = scale_matrix(&ops.shape_g, &c);
        closed_form_gaps.push(GapReport {
            name: "randers_shape_display".into(),
            max_abs: display.max_gap(&scaled),
        });
        let zn_display = randers_curvature_numerator_display(&geom, &ff, &ld)?;
        let zn = curvature_numerator(&geom, &ff, &ld);
        closed_form_gaps.push(GapReport {
            name: "randers_curvature_numerator_display".into(),
            max_abs: vector_gap(&zn_display, &zn),
        });
    }
    if matches!(config.family, Family::Kropina) && config.is_constant_case() {
        let tr_display = kropina_trace_display(&geom, &ff, &ld)?;
        let tr = ops.shape_g.trace_field();
        let gap = tr_display
            .data
            .iter()
            .zip(&tr.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        closed_form_gaps.push(GapReport {
            name: "kropina_trace_display".into(),
            max_abs: gap,
        });
        if ff.beta_n.max_abs() <= 1e-10 {
            let z_display = kropina_z_display(&geom, &ff, &ld)?;
            closed_form_gaps.push(GapReport {
                name: "kropina_z_display".into(),
                max_abs: vector_gap(&z_display, &ops.curvature_g),
            });
        }
    }
    if matches!(config.scenario, ScenarioId::S3) {
        // Tangent-β reduction of the curvature formula.
        let reduced = curvature_vector_g_tangent_reduced(&geom, &ff, &ld);
        oracle_gaps.push(GapReport {
            name: "curvature_g_tangent_reduced_vs_general".into(),
            max_abs: vector_gap(&reduced, &ops.curvature_g),
        });
    }
    timings.insert("integrals".into(), t0.elapsed().as_secs_f64());

    let all_within_tolerance = formulas.iter().all(|f| f.pass);
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        resolution: config.resolution,
        formulas,
        oracle_gaps,
        closed_form_gaps,
        q_constants,
        condition_margins: ConditionMargins {
            min_discriminant: ff.min_margin_discr,
            min_gamma3_denominator: ff.min_margin_gamma3,
        },
        smoothness_advisory: ff.smoothness_advisory,
        all_within_tolerance,
        timings,
    })
}

fn vector_gap(a: &VectorField, b: &VectorField) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn scale_matrix(
    m: &crate::grid::MatrixField,
    s: &crate::grid::ScalarField,
) -> crate::grid::MatrixField {
    let d = m.grid.dim();
    let mut out = m.clone();
    for node in 0..m.grid.len() {
        for k in 0..d * d {
            out.data[node * d * d + k] *= s.data[node];
        }
    }
    out
}

/// One formula traced across resolutions.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub name: String,
    pub resolutions: Vec<usize>,
    pub values: Vec<f64>,
    pub relatives: Vec<f64>,
    /// Pairwise observed orders; `None` marks the round-off floor.
    pub orders: Vec<Option<f64>>,
    pub floor: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub config: ScenarioConfig,
    pub rows: Vec<ConvergenceRow>,
    pub reports: Vec<RunReport>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("formula,resolution,value,relative,order\n");
        for row in &self.rows {
            for (k, res) in row.resolutions.iter().enumerate() {
                let order = if k == 0 {
                    String::new()
                } else {
                    match row.orders[k - 1] {
                        Some(o) => format!("{:.16e}", o),
                        None => "floor".into(),
                    }
                };
                out.push_str(&format!(
                    "{},{},{:.16e},{:.16e},{}\n",
                    row.name, res, row.values[k], row.relatives[k], order
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        to_json_17(self)
    }
}

/// Run the scenario at each resolution and assemble residual and oracle-gap
/// decay tables with pairwise observed orders.
pub fn converge(config: &ScenarioConfig, resolutions: &[usize]) -> Result<ConvergenceTable> {
    if resolutions.len() < 2 {
        return Err(crate::CoreError::Config(
            "converge needs at least two resolutions".into(),
        ));
    }
    config.validate()?;
    let mut reports = Vec::new();
    for &res in resolutions {
        let mut c = config.clone();
        c.resolution = res;
        reports.push(run_scenario_prevalidated(&c)?);
    }

    let mut rows: Vec<ConvergenceRow> = Vec::new();
    // Formula residuals by name.
    let names: Vec<String> = reports[0].formulas.iter().map(|f| f.name.clone()).collect();
    for name in names {
        let mut values = Vec::new();
        let mut relatives = Vec::new();
        for r in &reports {
            if let Some(f) = r.formulas.iter().find(|f| f.name == name) {
                values.push(f.value);
                relatives.push(f.relative);
            }
        }
        rows.push(make_row(name, resolutions, values, relatives));
    }
    // Oracle gaps by name.
    let names: Vec<String> = reports[0]
        .oracle_gaps
        .iter()
        .map(|g| g.name.clone())
        .collect();
    for name in names {
        let mut values = Vec::new();
        for r in &reports {
            if let Some(g) = r.oracle_gaps.iter().find(|g| g.name == name) {
                values.push(g.max_abs);
            }
        }
        let rel = values.clone();
        rows.push(make_row(name, resolutions, values, rel));
    }

    Ok(ConvergenceTable {
        config: config.clone(),
        rows,
        reports,
    })
}

fn make_row(
    name: String,
    resolutions: &[usize],
    values: Vec<f64>,
    relatives: Vec<f64>,
) -> ConvergenceRow {
    let mut orders = Vec::new();
    for k in 1..values.len() {
        orders.push(observed_order(values[k - 1], values[k]));
    }
    let floor = values.iter().all(|v| v.abs() <= 1e-11);
    ConvergenceRow {
        name,
        resolutions: resolutions.to_vec(),
        values,
        relatives,
        orders,
        floor,
    }
}

/// serde_json pretty printing with every float written as 17 significant
/// digits in scientific notation.
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci17Formatter::new());
    value.serialize(&mut ser).expect("serialization succeeds");
    String::from_utf8(out).expect("json is utf-8")
}

struct Sci17Formatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl Sci17Formatter {
    fn new() -> Self {
        Self {
            inner: serde_json::ser::PrettyFormatter::new(),
        }
    }
}

impl serde_json::ser::Formatter for Sci17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if value.is_finite() {
            write!(writer, "{:.16e}", value)
        } else {
            write!(writer, "null")
        }
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::begin_array(&mut self.inner, writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::end_array(&mut self.inner, writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::begin_array_value(&mut self.inner, writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::end_array_value(&mut self.inner, writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::begin_object(&mut self.inner, writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::end_object(&mut self.inner, writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::begin_object_key(&mut self.inner, writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::begin_object_value(&mut self.inner, writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        serde_json::ser::Formatter::end_object_value(&mut self.inner, writer)
    }
}
