use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KernelCoefficients;
use crate::error::{Error, Result};

pub const KERNEL_CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheFile {
    format: String,
    version: u32,
    coefficients: KernelCoefficients,
}

const FORMAT: &str = "periodic-laplace-kernel";

/// Writes the coefficients as JSON; floats round-trip bit-exactly.
pub fn write_coefficients(path: &Path, coeffs: &KernelCoefficients) -> Result<()> {
    let file = CacheFile {
        format: FORMAT.to_string(),
        version: KERNEL_CACHE_VERSION,
        coefficients: coeffs.clone(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_coefficients(path: &Path) -> Result<KernelCoefficients> {
    if !path.exists() {
        return Err(Error::MissingKernelCache(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CacheFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if file.format != FORMAT || file.version != KERNEL_CACHE_VERSION {
        return Err(Error::Schema(format!(
            "{}: unsupported kernel cache {} v{}",
            path.display(),
            file.format,
            file.version
        )));
    }
    let c = file.coefficients;
    if c.alpha.len() != (c.degree + 1) * (c.degree + 1) {
        return Err(Error::Schema(format!(
            "{}: expected {} coefficients, found {}",
            path.display(),
            (c.degree + 1) * (c.degree + 1),
            c.alpha.len()
        )));
    }
    Ok(c)
}
