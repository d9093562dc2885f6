//! Subcommand implementations and the exit-code mapping.

use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use h1geo::curves::{
    self, congruence_motion, geodesic_closed_form, geodesic_flow, is_geodesic,
    is_horizontally_regular, reconstruct_curve, reparametrize_by_arclength, signature, CurveError,
    GeodesicParams, HamiltonianState, ParamCurve,
};
use h1geo::heisenberg::{H1Point, OrientedFrame};
use h1geo::io::{self, IoError};
use h1geo::surfaces::{
    self, check_integrability, check_pminimal, coefficients, gaussian_curvature_formula,
    gaussian_curvature_reference, induced_metric, p_variation, patch_total,
    reconstruct_from_invariants, reconstruct_surface, surface_invariants, Coframe, PathOrder,
    SurfaceCoefficients, SurfaceError, SurfacePatch,
};

use crate::{CommonOpts, DerivativeMode, Order, Orientation};

pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    fn input(message: impl Into<String>) -> Self {
        CmdError { code: 2, message: message.into() }
    }
}

impl From<IoError> for CmdError {
    fn from(e: IoError) -> Self {
        CmdError { code: 2, message: e.to_string() }
    }
}

impl From<CurveError> for CmdError {
    fn from(e: CurveError) -> Self {
        let code = match &e {
            CurveError::NotHorizontallyRegular { .. } => 3,
            CurveError::NotCongruent { .. } => 4,
            _ => 2,
        };
        CmdError { code, message: e.to_string() }
    }
}

impl From<SurfaceError> for CmdError {
    fn from(e: SurfaceError) -> Self {
        let code = match &e {
            SurfaceError::NotNormal { .. } | SurfaceError::Singular(..) => 3,
            SurfaceError::IntegrabilityViolation { .. } => 5,
            _ => 2,
        };
        CmdError { code, message: e.to_string() }
    }
}

fn orientation_sign(o: Orientation) -> f64 {
    match o {
        Orientation::Plus => 1.0,
        Orientation::Minus => -1.0,
    }
}

fn load_curve(path: &Path, common: &CommonOpts) -> Result<ParamCurve, CmdError> {
    let mut curve = io::read_curve(path)?;
    if common.derivatives == DerivativeMode::Fd {
        curve = curve.without_analytic_derivatives();
    }
    let report = is_horizontally_regular(&curve, common.eps_regular);
    if !report.regular {
        return Err(CmdError {
            code: 3,
            message: format!(
                "curve {} is not horizontally regular at sample {} (speed {:.3e})",
                path.display(),
                report.first_failure.unwrap(),
                report.min_speed
            ),
        });
    }
    Ok(curve)
}

fn load_frame(path: Option<&Path>) -> Result<OrientedFrame, CmdError> {
    match path {
        Some(p) => Ok(io::read_frame(p)?),
        None => Ok(OrientedFrame::standard()),
    }
}

pub fn curve_invariants(
    input: &Path,
    output: &Path,
    samples: Option<usize>,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let curve = load_curve(input, common)?;
    let n_out = samples.unwrap_or(curve.len());
    if n_out < 5 {
        return Err(CmdError::input("need at least 5 output samples"));
    }
    let sig = signature(&curve, n_out)?;
    io::write_signature_csv(output, &sig)?;
    Ok(())
}

pub fn curve_reconstruct(
    input: &Path,
    output: &Path,
    frame: Option<&Path>,
    report: Option<&Path>,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let sig = io::read_signature_csv(input)?;
    let initial = load_frame(frame)?;
    let curve = reconstruct_curve(&sig, &initial)?;
    io::write_curve(output, &curve)?;
    if let Some(report_path) = report {
        let tol = common.tol_or(1e-6, 1e-3);
        let sig_back = signature(&curve, sig.len())?;
        let residual = sig.linf_distance(&sig_back);
        let geodesic = is_geodesic(&curve, tol.max(1e-6))?;
        io::write_json(
            report_path,
            &json!({
                "signature_linf_residual": residual,
                "within_tol": residual <= tol,
                "is_geodesic": geodesic,
            }),
        )?;
    }
    Ok(())
}

pub fn congruence(
    inputs: &[std::path::PathBuf],
    output: &Path,
    samples: usize,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    if inputs.len() != 2 {
        return Err(CmdError::input("congruence needs exactly two --in files"));
    }
    if samples < 5 {
        return Err(CmdError::input("need at least 5 samples"));
    }
    let tol = common.tol_or(1e-6, 1e-3);
    let c1 = load_curve(&inputs[0], common)?;
    let c2 = load_curve(&inputs[1], common)?;
    let r1 = reparametrize_by_arclength(&c1, samples)?;
    let r2 = reparametrize_by_arclength(&c2, samples)?;

    let s1 = *r1.params().last().unwrap();
    let s2 = *r2.params().last().unwrap();
    if (s1 - s2).abs() > tol.max(1e-9) * s1.abs().max(1.0) {
        let value = json!({
            "congruent": false,
            "motion": null,
            "max_deviation": null,
            "reason": format!("horizontal arclength ranges differ: {s1} vs {s2}"),
        });
        io::write_json(output, &value)?;
        return Err(CmdError { code: 4, message: "NOT_CONGRUENT: arclength ranges differ".into() });
    }
    // relabel the second grid onto the first so the solver sees a common range
    let r2 = ParamCurve::new(
        r1.params().to_vec(),
        r2.points().to_vec(),
        r2.analytic_d1().map(|d| d.to_vec()),
        r2.analytic_d2().map(|d| d.to_vec()),
    )?;

    match congruence_motion(&r1, &r2, tol) {
        Ok((motion, max_deviation)) => {
            let p = motion.translation_part();
            let value = json!({
                "congruent": true,
                "motion": {"p": [p.x, p.y, p.z], "theta": motion.theta()},
                "max_deviation": max_deviation,
            });
            io::write_json(output, &value)?;
            Ok(())
        }
        Err(CurveError::NotCongruent { max_deviation }) => {
            let value = json!({
                "congruent": false,
                "motion": null,
                "max_deviation": max_deviation,
            });
            io::write_json(output, &value)?;
            Err(CmdError {
                code: 4,
                message: format!("NOT_CONGRUENT: max deviation {max_deviation:.6e}"),
            })
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Deserialize)]
struct ClosedFormJob {
    c3: f64,
    #[serde(default)]
    a1: f64,
    #[serde(default)]
    a2: f64,
    #[serde(default)]
    d: [f64; 3],
    #[serde(default)]
    c1: f64,
    #[serde(default)]
    c2: f64,
}

#[derive(Deserialize)]
struct HamiltonianJob {
    x: [f64; 3],
    xi: [f64; 3],
}

#[derive(Deserialize)]
struct GeodesicJob {
    #[serde(default)]
    closed_form: Option<ClosedFormJob>,
    #[serde(default)]
    hamiltonian: Option<HamiltonianJob>,
    #[serde(default)]
    t0: f64,
    t1: f64,
    n: usize,
}

pub fn geodesic(
    input: &Path,
    output: &Path,
    plot: Option<&Path>,
    report: Option<&Path>,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CmdError::input(format!("{}: {e}", input.display())))?;
    let job: GeodesicJob =
        serde_json::from_str(&text).map_err(|e| CmdError::input(e.to_string()))?;
    if job.n < 5 {
        return Err(CmdError::input("need at least 5 samples"));
    }
    if job.t1 <= job.t0 {
        return Err(CmdError::input("need t1 > t0"));
    }

    let (curve, flow_comparison) = match (&job.closed_form, &job.hamiltonian) {
        (Some(cf), None) => {
            let params = GeodesicParams {
                c3: cf.c3,
                a1: cf.a1,
                a2: cf.a2,
                d1: cf.d[0],
                d2: cf.d[1],
                d3: cf.d[2],
                c1: cf.c1,
                c2: cf.c2,
            };
            let curve = geodesic_closed_form(&params, job.t0, job.t1, job.n)?;
            // matched-data comparison against the Hamiltonian flow
            let comparison = if job.t0 == 0.0 {
                let init = params.initial_state()?;
                let flow = geodesic_flow(&init, job.t1, job.n - 1)?;
                let sup = curve
                    .points()
                    .iter()
                    .zip(flow.points())
                    .map(|(a, b)| a.dist(*b))
                    .fold(0.0_f64, f64::max);
                Some(sup)
            } else {
                None
            };
            (curve, comparison)
        }
        (None, Some(h)) => {
            if job.t0 != 0.0 {
                return Err(CmdError::input("hamiltonian jobs start at t0 = 0"));
            }
            let init = HamiltonianState {
                x: H1Point::new(h.x[0], h.x[1], h.x[2]),
                xi: h.xi,
            };
            (geodesic_flow(&init, job.t1, job.n - 1)?, None)
        }
        _ => {
            return Err(CmdError::input(
                "provide exactly one of \"closed_form\" or \"hamiltonian\"",
            ))
        }
    };

    io::write_curve(output, &curve)?;
    if let Some(plot_path) = plot {
        let mut out = String::from("t,x,y,z\n");
        for (i, p) in curve.points().iter().enumerate() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                curve.params()[i],
                p.x,
                p.y,
                p.z
            ));
        }
        std::fs::write(plot_path, out).map_err(|e| CmdError::input(e.to_string()))?;
    }
    if let Some(report_path) = report {
        let tol = common.tol_or(1e-6, 1e-3);
        let sig = signature(&curve, curve.len())?;
        let max_tau = sig.tau().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let kmax = sig.k().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let kmin = sig.k().iter().cloned().fold(f64::INFINITY, f64::min);
        let mut value = json!({
            "is_geodesic": is_geodesic(&curve, tol.max(1e-5))?,
            "max_abs_tau": max_tau,
            "k_spread": kmax - kmin,
            "k_mean": sig.k().iter().sum::<f64>() / sig.k().len() as f64,
        });
        if let Some(sup) = flow_comparison {
            value["closed_form_vs_flow_sup_distance"] = json!(sup);
        }
        io::write_json(report_path, &value)?;
    }
    Ok(())
}

fn load_patch(path: &Path, common: &CommonOpts) -> Result<SurfacePatch, CmdError> {
    let patch = io::read_patch(path)?;
    Ok(match common.derivatives {
        DerivativeMode::Analytic => patch,
        DerivativeMode::Fd => patch.without_partials(),
    })
}

/// Reverse the foliation orientation: the coefficients transform by the
/// sign law of the normal-coordinate change `u -> -u`.
fn apply_orientation(
    coeffs: SurfaceCoefficients,
    common: &CommonOpts,
) -> Result<SurfaceCoefficients, CmdError> {
    if common.orientation == Orientation::Plus {
        return Ok(coeffs);
    }
    let flip = surfaces::Reparametrization {
        sign: -1.0,
        g: &|_| 0.0,
        dg: &|_| 0.0,
        h: &|v| v,
        dh: &|_| 1.0,
    };
    Ok(surfaces::transform_coefficients(&coeffs, &flip)?)
}

pub fn surface_coefficients(
    input: &Path,
    output: &Path,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let patch = load_patch(input, common)?;
    let tol = common.tol_or(1e-6, 1e-3);
    let coeffs = apply_orientation(coefficients(&patch, tol)?, common)?;
    io::write_coefficients(output, &coeffs)?;
    Ok(())
}

pub fn surface_check(
    input: &Path,
    output: &Path,
    pminimal: bool,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let coeffs = io::read_coefficients(input)?;
    let tol = common.tol_or(1e-6, 1e-3);
    let integrability = check_integrability(&coeffs, tol)?;
    let mut value = json!({ "integrability": io::report_to_json(&integrability) });
    if pminimal {
        let pm = check_pminimal(&coeffs, tol)?;
        value["pminimal"] = io::report_to_json(&pm);
    }
    io::write_json(output, &value)?;
    if !integrability.pass {
        return Err(CmdError {
            code: 5,
            message: format!(
                "integrability violated: max residual {:.6e} at cell {:?}",
                integrability.max_residual, integrability.argmax_cell
            ),
        });
    }
    Ok(())
}

fn coefficients_from_any(path: &Path, common: &CommonOpts) -> Result<SurfaceCoefficients, CmdError> {
    // patch files carry "points"; coefficient files carry "a".."m" or CSV
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        return Ok(io::read_coefficients(path)?);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
    let peek: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CmdError::input(e.to_string()))?;
    if peek.get("points").is_some() {
        let patch = load_patch(path, common)?;
        let tol = common.tol_or(1e-6, 1e-3);
        Ok(coefficients(&patch, tol)?)
    } else {
        Ok(io::read_coefficients(path)?)
    }
}

pub fn surface_invariants_cmd(
    input: &Path,
    output: &Path,
    closed: bool,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    if closed {
        return Err(SurfaceError::ClosedSurfaceUnsupported.into());
    }
    let coeffs = apply_orientation(coefficients_from_any(input, common)?, common)?;
    let inv = surface_invariants(&coeffs)?;
    let k_reference = gaussian_curvature_reference(&induced_metric(&coeffs))?;
    let (max_disc, _) = inv
        .k_formula
        .values
        .zip_map(&k_reference, |a, b| a - b)
        .max_abs_interior();
    let total = patch_total(&inv.k_formula, &coeffs).ok();

    let value = json!({
        "u0": coeffs.u0,
        "du": coeffs.du(),
        "nu": coeffs.nu(),
        "v0": coeffs.v0,
        "dv": coeffs.dv(),
        "nv": coeffs.nv(),
        "alpha": inv.alpha.values.data(),
        "alpha_valid": inv.alpha.valid,
        "l": inv.l.data(),
        "k_formula": inv.k_formula.values.data(),
        "k_reference": k_reference.data(),
        "max_k_discrepancy_interior": max_disc,
        "euler_density_patch_total": total,
        "coframe": {
            "w1_du": inv.coframe.w1_du.data(),
            "w1_dv": inv.coframe.w1_dv.data(),
            "w2_du": inv.coframe.w2_du.data(),
            "w2_dv": inv.coframe.w2_dv.data(),
        },
    });
    io::write_json(output, &value)?;
    Ok(())
}

pub use surface_invariants_cmd as surface_invariants;

fn path_order(order: Order) -> PathOrder {
    match order {
        Order::U => PathOrder::UFirst,
        Order::V => PathOrder::VFirst,
    }
}

pub fn surface_reconstruct(
    input: &Path,
    output: &Path,
    frame: Option<&Path>,
    order: Order,
    report: Option<&Path>,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let coeffs = io::read_coefficients(input)?;
    let initial = load_frame(frame)?;
    let tol = common.tol_or(1e-6, 1e-3);
    let patch = reconstruct_surface(&coeffs, &initial, tol, path_order(order))?;
    io::write_patch(output, &patch)?;
    if let Some(report_path) = report {
        let back = coefficients(&patch, tol.max(1e-3))?;
        let residual = coeffs.max_abs_difference(&back);
        io::write_json(
            report_path,
            &json!({
                "coefficient_round_trip_residual": residual,
                "within_tol": residual <= tol.max(1e-3),
            }),
        )?;
    }
    Ok(())
}

pub fn surface_from_invariants(
    input: &Path,
    output: &Path,
    frame: Option<&Path>,
    order: Order,
    report: Option<&Path>,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let (coframe, alpha, l) = io::read_invariants(input)?;
    let initial = load_frame(frame)?;
    let patch = reconstruct_from_invariants(&coframe, &alpha, &l, &initial, path_order(order))?;
    io::write_patch(output, &patch)?;
    if let Some(report_path) = report {
        let tol = common.tol_or(1e-6, 1e-3).max(1e-3);
        let extracted = coefficients(&patch, tol)?;
        let alpha_out = p_variation(&extracted);
        let alpha_residual = alpha_out.values.zip_map(&alpha, |x, y| x - y).max_abs().0;
        let l_residual = extracted.l.zip_map(&l, |x, y| x - y).max_abs().0;
        let metric_out = induced_metric(&extracted);
        let metric_in = Coframe {
            w1_du: coframe.w1_du.clone(),
            w1_dv: coframe.w1_dv.clone(),
            w2_du: coframe.w2_du.clone(),
            w2_dv: coframe.w2_dv.clone(),
        }
        .metric();
        let metric_residual = metric_out.max_abs_difference(&metric_in);
        io::write_json(
            report_path,
            &json!({
                "alpha_residual": alpha_residual,
                "l_residual": l_residual,
                "metric_residual": metric_residual,
            }),
        )?;
    }
    Ok(())
}

pub fn surface_normalize(
    input: &Path,
    output: &Path,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let patch = load_patch(input, common)?;
    let normalized = surfaces::normalize_patch(&patch, orientation_sign(common.orientation))?;
    io::write_patch(output, &normalized)?;
    Ok(())
}
