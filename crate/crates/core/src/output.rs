//! Run artifacts: legacy VTK surfaces, CSV convergence logs and rounded JSON.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use nalgebra::Vector3;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::PolynomialSurface;
use crate::optimizer::{Evaluation, IterationObserver, IterationRecord};
use crate::solver::CellSolution;

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest text of `round12(x)`.
pub fn fmt12(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r:e}")
    }
}

/// Rounds every number in a JSON tree to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if !n.is_i64() && !n.is_u64() => serde_json::Number::from_f64(round12(x)).map_or(Value::Null, Value::Number),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Per-point data attached to a VTK surface.
#[derive(Clone, Debug)]
pub enum PointData {
    Scalars(String, Vec<f64>),
    Vectors(String, Vec<Vector3<f64>>),
}

/// Sampling positions `(element, u, v)`, `per_edge^2` per element.
pub fn sampling(surface: &PolynomialSurface, per_edge: usize) -> Vec<(usize, f64, f64)> {
    let h = 1.0 / (per_edge - 1) as f64;
    let mut out = Vec::with_capacity(surface.element_count() * per_edge * per_edge);
    for e in 0..surface.element_count() {
        for b in 0..per_edge {
            for a in 0..per_edge {
                out.push((e, a as f64 * h, b as f64 * h));
            }
        }
    }
    out
}

/// Traces `w_1, w_2, w_3` on the VTK sampling.
pub fn trace_data(surface: &PolynomialSurface, sol: &CellSolution, per_edge: usize) -> Vec<PointData> {
    let pts = sampling(surface, per_edge);
    (0..3)
        .map(|i| {
            PointData::Scalars(
                format!("w{}", i + 1),
                pts.iter().map(|&(e, u, v)| sol.trace_eval(e, u, v, i)).collect(),
            )
        })
        .collect()
}

/// A field given at the surface points, interpolated on the VTK sampling.
pub fn field_data(surface: &PolynomialSurface, name: &str, values: &[Vector3<f64>], per_edge: usize) -> PointData {
    let pts = sampling(surface, per_edge);
    PointData::Vectors(
        name.to_string(),
        pts.iter().map(|&(e, u, v)| surface.interpolate_field(e, u, v, values)).collect(),
    )
}

/// Legacy ASCII PolyData text with quads between neighboring samples.
pub fn render_vtk(surface: &PolynomialSurface, per_edge: usize, data: &[PointData]) -> Result<String> {
    if per_edge < 2 {
        return Err(Error::param("VTK sampling needs at least 2 points per edge"));
    }
    let pts = sampling(surface, per_edge);
    let np = pts.len();
    for d in data {
        let len = match d {
            PointData::Scalars(_, v) => v.len(),
            PointData::Vectors(_, v) => v.len(),
        };
        if len != np {
            return Err(Error::param(format!("point data has {len} entries for {np} points")));
        }
    }
    let mut s = String::new();
    let w = |s: &mut String, line: std::fmt::Arguments| {
        s.write_fmt(line).expect("write to string");
        s.push('\n');
    };
    w(&mut s, format_args!("# vtk DataFile Version 3.0"));
    w(&mut s, format_args!("cavity surface, {} elements", surface.element_count()));
    w(&mut s, format_args!("ASCII"));
    w(&mut s, format_args!("DATASET POLYDATA"));
    w(&mut s, format_args!("POINTS {np} double"));
    for &(e, u, v) in &pts {
        let x = surface.position(e, u, v);
        w(&mut s, format_args!("{} {} {}", fmt12(x[0]), fmt12(x[1]), fmt12(x[2])));
    }
    let m = per_edge - 1;
    let nc = surface.element_count() * m * m;
    w(&mut s, format_args!("POLYGONS {nc} {}", 5 * nc));
    let pe = per_edge * per_edge;
    for e in 0..surface.element_count() {
        for b in 0..m {
            for a in 0..m {
                let i = e * pe + a + per_edge * b;
                w(&mut s, format_args!("4 {} {} {} {}", i, i + 1, i + 1 + per_edge, i + per_edge));
            }
        }
    }
    if !data.is_empty() {
        w(&mut s, format_args!("POINT_DATA {np}"));
    }
    for d in data {
        match d {
            PointData::Scalars(name, v) => {
                w(&mut s, format_args!("SCALARS {name} double 1"));
                w(&mut s, format_args!("LOOKUP_TABLE default"));
                for x in v {
                    w(&mut s, format_args!("{}", fmt12(*x)));
                }
            }
            PointData::Vectors(name, v) => {
                w(&mut s, format_args!("VECTORS {name} double"));
                for x in v {
                    w(&mut s, format_args!("{} {} {}", fmt12(x[0]), fmt12(x[1]), fmt12(x[2])));
                }
            }
        }
    }
    Ok(s)
}

pub fn export_vtk(surface: &PolynomialSurface, per_edge: usize, data: &[PointData], path: &Path) -> Result<()> {
    let text = render_vtk(surface, per_edge, data)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const CONVERGENCE_HEADER: [&str; 13] = [
    "iter", "J", "a11", "a12", "a13", "a21", "a22", "a23", "a31", "a32", "a33", "grad_norm", "step",
];

/// CSV convergence log, one row per accepted iterate, flushed as it goes.
pub struct ConvergenceLog {
    writer: csv::Writer<File>,
}

impl ConvergenceLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = CONVERGENCE_HEADER.to_vec();
        header.push("wall_ms");
        writer.write_record(&header)?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(ConvergenceLog { writer })
    }

    pub fn append(&mut self, r: &IterationRecord) -> Result<()> {
        let mut row = vec![r.iteration.to_string(), fmt12(r.j)];
        row.extend(r.a.iter().flatten().map(|x| fmt12(*x)));
        row.push(fmt12(r.gradient_norm));
        row.push(fmt12(r.step));
        row.push(format!("{:.1}", r.wall_ms));
        self.writer.write_record(&row)?;
        self.writer.flush().map_err(|e| Error::io("convergence log", e))
    }
}

/// Reads a convergence log back as `(iteration, J)` pairs.
pub fn read_convergence(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let bad = || Error::Schema(format!("{}: malformed row", path.display()));
        let it = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let j = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        out.push((it, j));
    }
    Ok(out)
}

/// Observer writing the CSV log and one VTK file per iterate.
pub struct ArtifactWriter<'a> {
    pub log: Option<ConvergenceLog>,
    pub vtk_dir: Option<&'a Path>,
    pub per_edge: usize,
    pub reference: &'a PolynomialSurface,
}

impl IterationObserver for ArtifactWriter<'_> {
    fn on_iteration(&mut self, record: &IterationRecord, eval: &Evaluation) -> Result<()> {
        if let Some(log) = &mut self.log {
            log.append(record)?;
        }
        if let Some(dir) = self.vtk_dir {
            let disp: Vec<Vector3<f64>> = eval
                .surface
                .points()
                .iter()
                .zip(self.reference.points())
                .map(|(p, q)| p - q)
                .collect();
            let mut data = trace_data(&eval.surface, &eval.solution, self.per_edge);
            data.push(field_data(&eval.surface, "displacement", &disp, self.per_edge));
            let path = dir.join(format!("surface_{:03}.vtk", record.iteration));
            export_vtk(&eval.surface, self.per_edge, &data, &path)?;
        }
        Ok(())
    }
}
