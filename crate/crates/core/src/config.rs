//! JSON run configuration.

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::bem::QuadratureScheme;
use crate::deformation::BasisConfig;
use crate::error::{Error, Result};
use crate::geometry::{generate_primitive, GeometryFile, PatchMap, PolynomialSurface, Primitive, MAX_GEOMETRY_DEGREE};
use crate::homogenization::TargetTensor;
use crate::kernel::DEFAULT_FIT_SAMPLES;
use crate::optimizer::{LineSearchParams, OptimizationConfig};

/// Initial shape: a generated primitive or a geometry file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySource {
    Primitive(Primitive),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BemConfig {
    /// Refinement level `j`.
    pub level: u32,
    /// B-spline degree `d`.
    pub degree: usize,
    /// Geometry interpolation degree; `None` means `min(4, 2^j)`.
    pub geometry_degree: Option<usize>,
    pub quadrature: QuadratureScheme,
}

impl Default for BemConfig {
    fn default() -> Self {
        BemConfig {
            level: 3,
            degree: 2,
            geometry_degree: None,
            quadrature: QuadratureScheme::default(),
        }
    }
}

impl BemConfig {
    pub fn geometry_degree(&self) -> usize {
        self.geometry_degree
            .unwrap_or_else(|| MAX_GEOMETRY_DEGREE.min(4).min(1 << self.level))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub j_tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearchParams,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            j_tol: 1e-5,
            max_iter: 25,
            line_search: LineSearchParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    /// Degree `N` of the correction series.
    pub degree: usize,
    pub samples: usize,
    pub cache: PathBuf,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            degree: 12,
            samples: DEFAULT_FIT_SAMPLES,
            cache: PathBuf::from("kernel_n12.json"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub vtk: bool,
    /// Sampling points per element edge in the VTK files.
    pub vtk_samples: usize,
    /// Convergence log, relative to `directory`.
    pub csv: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            vtk: true,
            vtk_samples: 5,
            csv: PathBuf::from("convergence.csv"),
        }
    }
}

/// Complete description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySource,
    /// Target tensor `B`, row by row.
    pub target: [[f64; 3]; 3],
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub bem: BemConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses and validates; relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GeometrySource::File(p) = &mut self.geometry {
            join(p);
        }
        join(&mut self.kernel.cache);
        join(&mut self.output.directory);
    }

    pub fn validate(&self) -> Result<()> {
        self.target_tensor()?;
        let schema = |m: &str| Err(Error::Schema(m.to_string()));
        if self.basis.p == 0 || !(self.basis.length > 0.0) || !(self.basis.tol > 0.0) {
            return schema("basis needs p >= 1, length > 0 and tol > 0");
        }
        if self.bem.degree == 0 || self.bem.level > 6 || self.bem.geometry_degree == Some(0) {
            return schema("bem needs degree >= 1, level <= 6 and geometry_degree >= 1");
        }
        if !(self.optimizer.j_tol > 0.0) || self.optimizer.max_iter == 0 {
            return schema("optimizer needs j_tol > 0 and max_iter >= 1");
        }
        if self.kernel.degree < 2 || self.kernel.samples < 2 {
            return schema("kernel needs degree >= 2 and samples >= 2");
        }
        if self.output.vtk_samples < 2 {
            return schema("output.vtk_samples must be at least 2");
        }
        self.optimization_config().validate().map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn target_tensor(&self) -> Result<TargetTensor> {
        let b = Matrix3::from_fn(|i, j| self.target[i][j]);
        TargetTensor::new(b).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn optimization_config(&self) -> OptimizationConfig {
        let b = Matrix3::from_fn(|i, j| self.target[i][j]);
        OptimizationConfig {
            // validated separately; an asymmetric target falls back to its symmetric part here
            target: TargetTensor::new(b).unwrap_or_else(|_| {
                TargetTensor::new((b + b.transpose()) * 0.5).expect("symmetric part")
            }),
            j_tol: self.optimizer.j_tol,
            max_iter: self.optimizer.max_iter,
            line_search: self.optimizer.line_search,
            degree: self.bem.degree,
            quadrature: self.bem.quadrature.clone(),
        }
    }

    pub fn patch_maps(&self) -> Result<Vec<PatchMap>> {
        match &self.geometry {
            GeometrySource::Primitive(p) => generate_primitive(p),
            GeometrySource::File(path) => GeometryFile::read(path)?.to_maps(),
        }
    }

    /// Reference surface at the configured level and geometry degree.
    pub fn reference_surface(&self) -> Result<PolynomialSurface> {
        let p = self.bem.geometry_degree();
        PolynomialSurface::from_maps(&self.patch_maps()?, self.bem.level, (p, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: &str = r#"{
        "geometry": {"primitive": {"kind": "sphere", "radius": 0.3}},
        "target": [[0.9, 0, 0], [0, 0.9, 0], [0, 0, 0.9]],
        "bem": {"level": 2}
    }"#;

    #[test]
    fn minimal_config_gets_defaults_and_round_trips() {
        let c = RunConfig::from_json(SPHERE).unwrap();
        assert_eq!(c.basis.p, 16);
        assert_eq!(c.bem.degree, 2);
        assert_eq!(c.bem.geometry_degree(), 4);
        assert_eq!(c.optimizer.max_iter, 25);
        assert_eq!(c.kernel.degree, 12);
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let s = c.reference_surface().unwrap();
        assert_eq!(s.element_count(), 96);
    }

    #[test]
    fn schema_violations_are_rejected() {
        let asym = SPHERE.replace("[[0.9, 0, 0]", "[[0.9, 0.1, 0]");
        assert!(matches!(RunConfig::from_json(&asym), Err(Error::Schema(_))));
        let unknown = SPHERE.replace("\"bem\"", "\"bme\"");
        assert!(matches!(RunConfig::from_json(&unknown), Err(Error::Schema(_))));
        let bad = SPHERE.replace("\"level\": 2", "\"level\": 2, \"degree\": 0");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Schema(_))));
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Schema(_))));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, SPHERE).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.kernel.cache, dir.path().join("kernel_n12.json"));
        assert_eq!(c.output.directory, dir.path().join("out"));
    }
}
