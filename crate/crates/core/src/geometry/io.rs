//! Node CSV: header `x,y,z,nx,ny,nz[,w]`, one node per line. Values are
//! written with 17 significant digits so they read back bit-for-bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::nodes::{mesh_stats, quadrature_weights, NodeSet};
use super::surface::Surface;
use super::vec3::{self, Vec3};
use super::GeometryError;

/// Loaded nodes must satisfy `|F| / |grad F| <= ON_SURFACE_TOL * diag`.
pub const ON_SURFACE_TOL: f64 = 1e-8;

pub fn save_nodes(ns: &NodeSet, path: &Path) -> Result<(), GeometryError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,z,nx,ny,nz,w")?;
    for ((p, n), wt) in ns.points.iter().zip(&ns.normals).zip(&ns.weights) {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p[0], p[1], p[2], n[0], n[1], n[2], wt
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a node file for surface `s`. Missing normals are recomputed from
/// `grad F`, missing weights from the Voronoi-mass rule.
pub fn load_nodes(path: &Path, s: &dyn Surface) -> Result<NodeSet, GeometryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| GeometryError::Parse { line: 0, message: e.to_string() })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| GeometryError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(GeometryError::Parse {
                line: 1,
                message: "header must name x,y,z".into(),
            })
        }
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let wcol = col("w");

    let diag = s.bbox().diagonal();
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| GeometryError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64, GeometryError> {
            let field = rec.get(i).unwrap_or("");
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| GeometryError::Parse {
                    line,
                    message: format!("bad number `{field}` in column {}", i + 1),
                })
        };
        let p: Vec3 = [num(ix)?, num(iy)?, num(iz)?];
        let r = s.residual_distance(p);
        if r > ON_SURFACE_TOL * diag {
            return Err(GeometryError::OffSurface { line, residual: r });
        }
        points.push(p);
        match normal_cols {
            Some([a, b, c]) => {
                let n = [num(a)?, num(b)?, num(c)?];
                if (vec3::norm(n) - 1.0).abs() > 1e-8 {
                    return Err(GeometryError::Parse {
                        line,
                        message: "normal is not unit length".into(),
                    });
                }
                normals.push(n);
            }
            None => normals.push(s.normal(p)?),
        }
        if let Some(i) = wcol {
            weights.push(num(i)?);
        }
    }
    if points.is_empty() {
        return Err(GeometryError::Parse { line: 1, message: "no nodes".into() });
    }
    if wcol.is_none() {
        weights = quadrature_weights(s, &points);
    }
    let stats = mesh_stats(s, &points, 10 * points.len(), 0);
    Ok(NodeSet {
        points,
        normals,
        weights,
        h: stats.h,
        q: stats.q,
        rho: stats.rho,
    })
}
