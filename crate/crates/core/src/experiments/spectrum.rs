use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::geometry::NodeSet;
use crate::kernels::Kernel;
use crate::linalg::{conjugate_asymmetry, eigenvalues_with, DenseMatrix, EigenOptions};
use crate::operators::SurfaceOperators;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub surface: String,
    pub kernel: String,
    pub n: usize,
    pub epsilon: f64,
    /// `(re, im)` pairs, unordered.
    pub eigenvalues: Vec<[f64; 2]>,
    pub max_real: f64,
    pub max_abs: f64,
    pub conjugate_asymmetry: f64,
}

impl SpectrumReport {
    /// `max Re <= rel_tol * max |lambda|`.
    pub fn left_half_plane(&self, rel_tol: f64) -> bool {
        self.max_real <= rel_tol * self.max_abs
    }

    pub fn unstable_count(&self, rel_tol: f64) -> usize {
        self.eigenvalues.iter().filter(|e| e[0] > rel_tol * self.max_abs).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["re", "im"])?;
        for e in &self.eigenvalues {
            out.write_record([format!("{:.16e}", e[0]), format!("{:.16e}", e[1])])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn stability_scan(surface: &str, kernel: &Kernel, ns: &NodeSet) -> Result<SpectrumReport, ExperimentError> {
    stability_scan_with(surface, kernel, ns, EigenOptions::default())
}

/// Eigenvalues of `L`; positive real parts are reported, never treated as
/// failures.
pub fn stability_scan_with(
    surface: &str,
    kernel: &Kernel,
    ns: &NodeSet,
    opts: EigenOptions,
) -> Result<SpectrumReport, ExperimentError> {
    if ns.len() > opts.cap {
        return Err(ExperimentError::InvalidArgument(format!(
            "N = {} exceeds the eigenvalue cap {}",
            ns.len(),
            opts.cap
        )));
    }
    let mut ops = SurfaceOperators::build(kernel, ns)?;
    spectrum_report(surface, kernel, ops.laplacian(), opts)
}

/// Spectrum of an already assembled `L`.
pub fn spectrum_report(
    surface: &str,
    kernel: &Kernel,
    l: &DenseMatrix,
    opts: EigenOptions,
) -> Result<SpectrumReport, ExperimentError> {
    let eigs = eigenvalues_with(l, opts)?;
    let max_real = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let max_abs = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectrumReport {
        surface: surface.to_string(),
        kernel: kernel.spec(),
        n: l.rows(),
        epsilon: kernel.epsilon(),
        conjugate_asymmetry: conjugate_asymmetry(&eigs),
        eigenvalues: eigs.iter().map(|z| [z.re, z.im]).collect(),
        max_real,
        max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_nodes, UnitSphere};

    #[test]
    fn small_sphere_scan() {
        let ns = generate_nodes(&UnitSphere, 120, 2).unwrap();
        let r = stability_scan("sphere", &Kernel::imq(2.8).unwrap(), &ns).unwrap();
        assert_eq!(r.eigenvalues.len(), 120);
        assert!(r.conjugate_asymmetry < 1e-8 * r.max_abs);
        // the smallest eigenvalue in magnitude approximates Lap 1 = 0
        let min_abs = r.eigenvalues.iter().map(|e| e[0].hypot(e[1])).fold(f64::INFINITY, f64::min);
        assert!(min_abs < 0.1 * r.max_abs);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 121);
        let capped = EigenOptions { cap: 50, balance: true };
        assert!(stability_scan_with("sphere", &Kernel::imq(2.8).unwrap(), &ns, capped).is_err());
    }
}
