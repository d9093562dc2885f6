//! File formats: JSON for structured geometry, CSV for plottable columns.
//!
//! Curve: `{"t":[...], "points":[[x,y,z],...], "d1":optional, "d2":optional}`.
//! Motion/frame: `{"p":[p1,p2,p3], "theta": radians}`.
//! Patch: `{"u0","du","nu","v0","dv","nv","points":[[x,y,z],...]}` row-major
//! with `u` fastest, plus optional `"partials"`. Coefficient and invariant
//! grids are flat arrays in the same order. Signature CSV has header
//! `s,k,tau`; numbers are printed with 17 significant digits so parsing them
//! back is bit-faithful.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveSignature, ParamCurve};
use crate::heisenberg::{H1Point, HeisenbergMotion, OrientedFrame};
use crate::numerics::GridField;
use crate::surfaces::{
    Coframe, EquationResidual, PatchPartials, ResidualReport, SurfaceCoefficients, SurfacePatch,
};
use nalgebra::Vector3;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad file format: {0}")]
    Format(String),
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// curves

#[derive(Serialize, Deserialize)]
struct CurveFile {
    t: Vec<f64>,
    points: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d1: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d2: Option<Vec<[f64; 3]>>,
}

pub fn read_curve(path: &Path) -> Result<ParamCurve, IoError> {
    let file: CurveFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let points = file.points.iter().map(|p| H1Point::new(p[0], p[1], p[2])).collect();
    let conv = |d: Option<Vec<[f64; 3]>>| {
        d.map(|v| v.iter().map(|x| Vector3::new(x[0], x[1], x[2])).collect())
    };
    ParamCurve::new(file.t, points, conv(file.d1), conv(file.d2))
        .map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_curve(path: &Path, curve: &ParamCurve) -> Result<(), IoError> {
    let file = CurveFile {
        t: curve.params().to_vec(),
        points: curve.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        d1: curve.analytic_d1().map(|d| d.iter().map(|v| [v.x, v.y, v.z]).collect()),
        d2: curve.analytic_d2().map(|d| d.iter().map(|v| [v.x, v.y, v.z]).collect()),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// motions and frames

#[derive(Serialize, Deserialize)]
struct MotionFile {
    p: [f64; 3],
    theta: f64,
}

pub fn read_motion(path: &Path) -> Result<HeisenbergMotion, IoError> {
    let file: MotionFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(HeisenbergMotion::new(H1Point::new(file.p[0], file.p[1], file.p[2]), file.theta))
}

pub fn write_motion(path: &Path, motion: &HeisenbergMotion) -> Result<(), IoError> {
    let p = motion.translation_part();
    let file = MotionFile { p: [p.x, p.y, p.z], theta: motion.theta() };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Frames share the motion format: the frame is the image of the standard
/// frame under the motion.
pub fn read_frame(path: &Path) -> Result<OrientedFrame, IoError> {
    Ok(OrientedFrame::from_motion(&read_motion(path)?))
}

// ---------------------------------------------------------------------------
// signatures (CSV)

pub fn write_signature_csv(path: &Path, sig: &CurveSignature) -> Result<(), IoError> {
    let mut out = String::from("s,k,tau\n");
    for i in 0..sig.len() {
        out.push_str(&fmt17(sig.s(i)));
        out.push(',');
        out.push_str(&fmt17(sig.k()[i]));
        out.push(',');
        out.push_str(&fmt17(sig.tau()[i]));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_signature_csv(path: &Path) -> Result<CurveSignature, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "s,k,tau" => {}
        other => {
            return Err(IoError::Format(format!(
                "expected header 's,k,tau', got {other:?}"
            )))
        }
    }
    let mut s = Vec::new();
    let mut k = Vec::new();
    let mut tau = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(IoError::Format(format!("line {}: expected 3 columns", lineno + 2)));
        }
        let parse = |c: &str| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| IoError::Format(format!("line {}: {e}", lineno + 2)))
        };
        s.push(parse(cols[0])?);
        k.push(parse(cols[1])?);
        tau.push(parse(cols[2])?);
    }
    CurveSignature::from_samples(&s, k, tau).map_err(|e| IoError::Format(e.to_string()))
}

// ---------------------------------------------------------------------------
// surface patches

#[derive(Serialize, Deserialize)]
struct PartialsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    fu: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fv: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fuu: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fuv: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize, Deserialize)]
struct PatchFile {
    u0: f64,
    du: f64,
    nu: usize,
    v0: f64,
    dv: f64,
    nv: usize,
    points: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partials: Option<PartialsFile>,
}

pub fn read_patch(path: &Path) -> Result<SurfacePatch, IoError> {
    let file: PatchFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let points = file.points.iter().map(|p| H1Point::new(p[0], p[1], p[2])).collect();
    let conv = |d: &Option<Vec<[f64; 3]>>| {
        d.as_ref()
            .map(|v| v.iter().map(|x| Vector3::new(x[0], x[1], x[2])).collect())
    };
    let partials = match &file.partials {
        Some(p) => PatchPartials {
            fu: conv(&p.fu),
            fv: conv(&p.fv),
            fuu: conv(&p.fuu),
            fuv: conv(&p.fuv),
        },
        None => PatchPartials::default(),
    };
    SurfacePatch::new(file.u0, file.du, file.nu, file.v0, file.dv, file.nv, points, partials)
        .map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_patch(path: &Path, patch: &SurfacePatch) -> Result<(), IoError> {
    let conv = |d: &Option<Vec<Vector3<f64>>>| {
        d.as_ref().map(|v| v.iter().map(|x| [x.x, x.y, x.z]).collect())
    };
    let partials = patch.partials();
    let has_partials = partials.fu.is_some()
        || partials.fv.is_some()
        || partials.fuu.is_some()
        || partials.fuv.is_some();
    let file = PatchFile {
        u0: patch.u0(),
        du: patch.du(),
        nu: patch.nu(),
        v0: patch.v0(),
        dv: patch.dv(),
        nv: patch.nv(),
        points: patch.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        partials: has_partials.then(|| PartialsFile {
            fu: conv(&partials.fu),
            fv: conv(&partials.fv),
            fuu: conv(&partials.fuu),
            fuv: conv(&partials.fuv),
        }),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// coefficient grids (JSON or CSV by extension)

#[derive(Serialize, Deserialize)]
struct CoefficientsFile {
    u0: f64,
    du: f64,
    nu: usize,
    v0: f64,
    dv: f64,
    nv: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    l: Vec<f64>,
    m: Vec<f64>,
}

fn grid_from_flat(
    nu: usize,
    nv: usize,
    du: f64,
    dv: f64,
    data: Vec<f64>,
) -> Result<GridField, IoError> {
    if data.len() != nu * nv {
        return Err(IoError::Format(format!(
            "grid length {} does not match {nu}x{nv}",
            data.len()
        )));
    }
    Ok(GridField::from_data(nu, nv, du, dv, data))
}

pub fn read_coefficients(path: &Path) -> Result<SurfaceCoefficients, IoError> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        return read_coefficients_csv(path);
    }
    let f: CoefficientsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(SurfaceCoefficients {
        u0: f.u0,
        v0: f.v0,
        a: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.a)?,
        b: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.b)?,
        c: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.c)?,
        l: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.l)?,
        m: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.m)?,
    })
}

pub fn write_coefficients(path: &Path, coeffs: &SurfaceCoefficients) -> Result<(), IoError> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        return write_coefficients_csv(path, coeffs);
    }
    let file = CoefficientsFile {
        u0: coeffs.u0,
        du: coeffs.du(),
        nu: coeffs.nu(),
        v0: coeffs.v0,
        dv: coeffs.dv(),
        nv: coeffs.nv(),
        a: coeffs.a.data().to_vec(),
        b: coeffs.b.data().to_vec(),
        c: coeffs.c.data().to_vec(),
        l: coeffs.l.data().to_vec(),
        m: coeffs.m.data().to_vec(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

fn write_coefficients_csv(path: &Path, coeffs: &SurfaceCoefficients) -> Result<(), IoError> {
    let mut out = String::from("u,v,a,b,c,l,m\n");
    for j in 0..coeffs.nv() {
        for i in 0..coeffs.nu() {
            let u = coeffs.u0 + i as f64 * coeffs.du();
            let v = coeffs.v0 + j as f64 * coeffs.dv();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt17(u),
                fmt17(v),
                fmt17(coeffs.a.get(i, j)),
                fmt17(coeffs.b.get(i, j)),
                fmt17(coeffs.c.get(i, j)),
                fmt17(coeffs.l.get(i, j)),
                fmt17(coeffs.m.get(i, j)),
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_coefficients_csv(path: &Path) -> Result<SurfaceCoefficients, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "u,v,a,b,c,l,m" => {}
        other => {
            return Err(IoError::Format(format!(
                "expected header 'u,v,a,b,c,l,m', got {other:?}"
            )))
        }
    }
    let mut rows: Vec<[f64; 7]> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(IoError::Format(format!("line {}: expected 7 columns", lineno + 2)));
        }
        let mut row = [0.0; 7];
        for (k, c) in cols.iter().enumerate() {
            row[k] = c
                .trim()
                .parse::<f64>()
                .map_err(|e| IoError::Format(format!("line {}: {e}", lineno + 2)))?;
        }
        rows.push(row);
    }
    // infer the grid: u fastest, v outer
    let u0 = rows.first().ok_or_else(|| IoError::Format("empty file".into()))?[0];
    let v0 = rows[0][1];
    let nu = rows.iter().take_while(|r| r[1] == v0).count();
    if nu < 2 || rows.len() % nu != 0 {
        return Err(IoError::Format("rows do not form a rectangular grid".into()));
    }
    let nv = rows.len() / nu;
    let du = rows[1][0] - u0;
    let dv = if nv > 1 { rows[nu][1] - v0 } else { 1.0 };
    let pick = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    Ok(SurfaceCoefficients {
        u0,
        v0,
        a: grid_from_flat(nu, nv, du, dv, pick(2))?,
        b: grid_from_flat(nu, nv, du, dv, pick(3))?,
        c: grid_from_flat(nu, nv, du, dv, pick(4))?,
        l: grid_from_flat(nu, nv, du, dv, pick(5))?,
        m: grid_from_flat(nu, nv, du, dv, pick(6))?,
    })
}

// ---------------------------------------------------------------------------
// invariant inputs (coframe + alpha + l)

#[derive(Serialize, Deserialize)]
struct CoframeFile {
    w1_du: Vec<f64>,
    w1_dv: Vec<f64>,
    w2_du: Vec<f64>,
    w2_dv: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InvariantsFile {
    u0: f64,
    du: f64,
    nu: usize,
    v0: f64,
    dv: f64,
    nv: usize,
    coframe: CoframeFile,
    alpha: Vec<f64>,
    l: Vec<f64>,
}

pub fn read_invariants(path: &Path) -> Result<(Coframe, GridField, GridField), IoError> {
    let f: InvariantsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let coframe = Coframe {
        w1_du: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.coframe.w1_du)?,
        w1_dv: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.coframe.w1_dv)?,
        w2_du: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.coframe.w2_du)?,
        w2_dv: grid_from_flat(f.nu, f.nv, f.du, f.dv, f.coframe.w2_dv)?,
    };
    let alpha = grid_from_flat(f.nu, f.nv, f.du, f.dv, f.alpha)?;
    let l = grid_from_flat(f.nu, f.nv, f.du, f.dv, f.l)?;
    Ok((coframe, alpha, l))
}

#[allow(clippy::too_many_arguments)]
pub fn write_invariants(
    path: &Path,
    u0: f64,
    v0: f64,
    coframe: &Coframe,
    alpha: &GridField,
    l: &GridField,
) -> Result<(), IoError> {
    let file = InvariantsFile {
        u0,
        du: alpha.du(),
        nu: alpha.nu(),
        v0,
        dv: alpha.dv(),
        nv: alpha.nv(),
        coframe: CoframeFile {
            w1_du: coframe.w1_du.data().to_vec(),
            w1_dv: coframe.w1_dv.data().to_vec(),
            w2_du: coframe.w2_du.data().to_vec(),
            w2_dv: coframe.w2_dv.data().to_vec(),
        },
        alpha: alpha.data().to_vec(),
        l: l.data().to_vec(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// scalar grids and residual reports

#[derive(Serialize, Deserialize)]
struct ScalarGridFile {
    u0: f64,
    du: f64,
    nu: usize,
    v0: f64,
    dv: f64,
    nv: usize,
    values: Vec<f64>,
}

pub fn write_scalar_grid(path: &Path, u0: f64, v0: f64, grid: &GridField) -> Result<(), IoError> {
    let file = ScalarGridFile {
        u0,
        du: grid.du(),
        nu: grid.nu(),
        v0,
        dv: grid.dv(),
        nv: grid.nv(),
        values: grid.data().to_vec(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

fn equation_json(e: &EquationResidual) -> serde_json::Value {
    serde_json::json!({
        "max_residual": e.max_residual,
        "argmax_cell": [e.argmax_cell.0, e.argmax_cell.1],
    })
}

/// Residual report as the JSON shape
/// `{"max_residual", "argmax_cell", "per_equation": {...}}`.
pub fn report_to_json(report: &ResidualReport) -> serde_json::Value {
    let per: serde_json::Map<String, serde_json::Value> = report
        .per_equation
        .iter()
        .map(|e| (e.name.to_string(), equation_json(e)))
        .collect();
    let mut value = serde_json::json!({
        "pass": report.pass,
        "tol": report.tol,
        "max_residual": report.max_residual,
        "argmax_cell": [report.argmax_cell.0, report.argmax_cell.1],
        "boundary_max_residual": report.boundary_max_residual,
        "per_equation": per,
    });
    if let Some(l) = report.info_max_l {
        value["max_abs_l"] = serde_json::json!(l);
    }
    value
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves;
    use tempfile_like::TempDir;

    /// Minimal scoped temp directory for round-trip tests.
    mod tempfile_like {
        use std::path::{Path, PathBuf};

        pub struct TempDir(PathBuf);

        impl TempDir {
            pub fn new(tag: &str) -> Self {
                let dir = std::env::temp_dir().join(format!(
                    "h1geo-io-{tag}-{}",
                    std::process::id()
                ));
                std::fs::create_dir_all(&dir).unwrap();
                TempDir(dir)
            }

            pub fn path(&self) -> &Path {
                &self.0
            }
        }

        impl Drop for TempDir {
            fn drop(&mut self) {
                let _ = std::fs::remove_dir_all(&self.0);
            }
        }
    }

    #[test]
    fn curve_round_trip() {
        let dir = TempDir::new("curve");
        let path = dir.path().join("curve.json");
        let curve = ParamCurve::from_fn(0.0, 1.0, 11, |t| {
            (
                H1Point::new(t.cos(), t.sin(), 0.1 * t),
                Vector3::new(-t.sin(), t.cos(), 0.1),
                Vector3::new(-t.cos(), -t.sin(), 0.0),
            )
        });
        write_curve(&path, &curve).unwrap();
        let back = read_curve(&path).unwrap();
        assert_eq!(curve.params(), back.params());
        for i in 0..curve.len() {
            assert_eq!(curve.point(i), back.point(i));
            assert_eq!(curve.d1_at(i), back.d1_at(i));
        }
    }

    #[test]
    fn signature_csv_round_trip_is_bit_faithful() {
        let dir = TempDir::new("sig");
        let path = dir.path().join("sig.csv");
        let curve = ParamCurve::from_fn(0.0, std::f64::consts::TAU, 201, |t| {
            let (s, c) = t.sin_cos();
            (
                H1Point::new(c, s, 0.0),
                Vector3::new(-s, c, 0.0),
                Vector3::new(-c, -s, 0.0),
            )
        });
        let sig = curves::signature(&curve, 101).unwrap();
        write_signature_csv(&path, &sig).unwrap();
        let back = read_signature_csv(&path).unwrap();
        assert_eq!(sig.len(), back.len());
        for i in 0..sig.len() {
            assert_eq!(sig.k()[i], back.k()[i], "k not bit-faithful at {i}");
            assert_eq!(sig.tau()[i], back.tau()[i], "tau not bit-faithful at {i}");
        }
    }

    #[test]
    fn motion_round_trip() {
        let dir = TempDir::new("motion");
        let path = dir.path().join("g.json");
        let g = HeisenbergMotion::new(H1Point::new(0.25, -1.5, 3.0), 0.75);
        write_motion(&path, &g).unwrap();
        let back = read_motion(&path).unwrap();
        assert!((g.matrix() - back.matrix()).norm() < 1e-15);
    }

    #[test]
    fn coefficients_json_and_csv_round_trip() {
        let dir = TempDir::new("coeffs");
        let coeffs = SurfaceCoefficients::from_fn(0.5, 0.1, 6, -0.2, 0.2, 5, |u, v| {
            (u * v, u + v, 1.0 + u, v, u)
        });
        for name in ["c.json", "c.csv"] {
            let path = dir.path().join(name);
            write_coefficients(&path, &coeffs).unwrap();
            let back = read_coefficients(&path).unwrap();
            assert_eq!(coeffs.nu(), back.nu());
            assert_eq!(coeffs.nv(), back.nv());
            assert!(coeffs.max_abs_difference(&back) == 0.0, "{name} not bit-faithful");
        }
    }

    #[test]
    fn patch_round_trip_with_partials() {
        let dir = TempDir::new("patch");
        let path = dir.path().join("p.json");
        let patch = SurfacePatch::from_fn_with_partials(0.0, 0.1, 5, 0.0, 0.1, 5, |u, v| {
            (
                H1Point::new(u, 0.0, v),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::zeros(),
                Vector3::zeros(),
            )
        });
        write_patch(&path, &patch).unwrap();
        let back = read_patch(&path).unwrap();
        assert_eq!(patch.points(), back.points());
        assert!(back.partials().fu.is_some());
    }

    #[test]
    fn malformed_signature_rejected() {
        let dir = TempDir::new("bad");
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "s,k\n0,1\n").unwrap();
        assert!(matches!(read_signature_csv(&path), Err(IoError::Format(_))));
    }
}
