//! Minimal VTK XML unstructured-grid output for triangle meshes, plus a
//! small reader used to round-trip test the writer.

use crate::estimator::EstimatorReport;
use crate::mesh::Mesh;
use crate::solver::{Discretization, HhoSolution};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Cell-data fields written alongside the mesh.
const FIELDS: [&str; 5] = ["u_mean", "eta_res", "eta_sta", "eta_nor", "eta_tan"];

pub fn vtu_string(
    mesh: &Mesh,
    disc: &Discretization,
    solution: &HhoSolution,
    report: &EstimatorReport,
) -> String {
    let ncells = mesh.cells.len();
    // The first basis function is the constant mode, so the cell mean of
    // the discrete solution is coeff_0 * phi_0.
    let means: Vec<f64> = (0..ncells)
        .map(|c| {
            let ops = &disc.local[c];
            let phi0 = ops.basis.eval(ops.basis.verts[0])[0];
            solution.cell_coeffs[c][0] * phi0
        })
        .collect();
    let fields: Vec<(&str, Vec<f64>)> = FIELDS
        .iter()
        .copied()
        .zip([
            means,
            report.cells.iter().map(|e| e.eta_res).collect(),
            report.cells.iter().map(|e| e.eta_sta).collect(),
            report.cells.iter().map(|e| e.eta_nor).collect(),
            report.cells.iter().map(|e| e.eta_tan).collect(),
        ])
        .collect();
    vtu_string_fields(mesh, &fields)
}

/// Ascii VTK XML unstructured-grid text with arbitrary named per-cell
/// scalar fields; every field must have one value per cell.
pub fn vtu_string_fields(mesh: &Mesh, fields: &[(&str, Vec<f64>)]) -> String {
    let ncells = mesh.cells.len();
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n");
    s.push_str("  <UnstructuredGrid>\n");
    let _ = writeln!(
        s,
        "    <Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">",
        mesh.vertices.len(),
        ncells
    );
    s.push_str("      <Points>\n");
    s.push_str(
        "        <DataArray type=\"Float64\" Name=\"points\" NumberOfComponents=\"3\" format=\"ascii\">\n",
    );
    for v in &mesh.vertices {
        let _ = writeln!(s, "          {:.16e} {:.16e} 0", v.coords[0], v.coords[1]);
    }
    s.push_str("        </DataArray>\n      </Points>\n");
    s.push_str("      <Cells>\n");
    s.push_str(
        "        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n",
    );
    for c in &mesh.cells {
        let _ = writeln!(s, "          {} {} {}", c.vertices[0], c.vertices[1], c.vertices[2]);
    }
    s.push_str("        </DataArray>\n");
    s.push_str("        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
    for i in 1..=ncells {
        let _ = writeln!(s, "          {}", 3 * i);
    }
    s.push_str("        </DataArray>\n");
    s.push_str("        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
    for _ in 0..ncells {
        s.push_str("          5\n");
    }
    s.push_str("        </DataArray>\n      </Cells>\n");
    s.push_str("      <CellData>\n");
    for (name, values) in fields {
        let _ = writeln!(
            s,
            "        <DataArray type=\"Float64\" Name=\"{name}\" format=\"ascii\">"
        );
        for v in values {
            let _ = writeln!(s, "          {v:.16e}");
        }
        s.push_str("        </DataArray>\n");
    }
    s.push_str("      </CellData>\n");
    s.push_str("    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n");
    s
}

pub fn write_vtu(
    path: &Path,
    mesh: &Mesh,
    disc: &Discretization,
    solution: &HhoSolution,
    report: &EstimatorReport,
) -> Result<()> {
    std::fs::write(path, vtu_string(mesh, disc, solution, report))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes a mesh with arbitrary named per-cell scalar fields.
pub fn export_vtu(path: &Path, mesh: &Mesh, fields: &[(&str, Vec<f64>)]) -> Result<()> {
    for (name, values) in fields {
        if values.len() != mesh.cells.len() {
            return Err(Error::Structural(format!(
                "field {name} has {} values for {} cells",
                values.len(),
                mesh.cells.len()
            )));
        }
    }
    std::fs::write(path, vtu_string_fields(mesh, fields))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parsed VTU content: point/cell counts, connectivity, named cell fields.
#[derive(Debug, Clone)]
pub struct VtuContent {
    pub npoints: usize,
    pub ncells: usize,
    pub connectivity: Vec<usize>,
    pub cell_fields: Vec<(String, Vec<f64>)>,
}

/// Reads back the ascii VTU produced by `vtu_string`. Not a general VTK
/// parser; it only understands the writer's layout.
pub fn parse_vtu(text: &str) -> Result<VtuContent> {
    let attr = |hay: &str, name: &str| -> Option<String> {
        let pat = format!("{name}=\"");
        let start = hay.find(&pat)? + pat.len();
        let end = hay[start..].find('"')? + start;
        Some(hay[start..end].to_string())
    };
    let piece = text
        .find("<Piece")
        .ok_or_else(|| Error::Parse("no <Piece> element".into()))?;
    let piece_tag_end = text[piece..]
        .find('>')
        .ok_or_else(|| Error::Parse("unterminated <Piece>".into()))?
        + piece;
    let head = &text[piece..piece_tag_end];
    let npoints: usize = attr(head, "NumberOfPoints")
        .ok_or_else(|| Error::Parse("missing NumberOfPoints".into()))?
        .parse()
        .map_err(|_| Error::Parse("bad NumberOfPoints".into()))?;
    let ncells: usize = attr(head, "NumberOfCells")
        .ok_or_else(|| Error::Parse("missing NumberOfCells".into()))?
        .parse()
        .map_err(|_| Error::Parse("bad NumberOfCells".into()))?;

    let mut connectivity = Vec::new();
    let mut cell_fields = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("<DataArray") {
        let tag_end = rest[start..]
            .find('>')
            .ok_or_else(|| Error::Parse("unterminated <DataArray>".into()))?
            + start;
        let tag = &rest[start..tag_end];
        let name = attr(tag, "Name").unwrap_or_default();
        let body_end = rest[tag_end..]
            .find("</DataArray>")
            .ok_or_else(|| Error::Parse("missing </DataArray>".into()))?
            + tag_end;
        let body = &rest[tag_end + 1..body_end];
        match name.as_str() {
            "connectivity" => {
                connectivity = body
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse("bad connectivity entry".into()))?;
            }
            n if FIELDS.contains(&n) => {
                let values: Vec<f64> = body
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse(format!("bad value in field {n}")))?;
                cell_fields.push((name.clone(), values));
            }
            _ => {}
        }
        rest = &rest[body_end + 12..];
    }
    if connectivity.len() != 3 * ncells {
        return Err(Error::Parse(format!(
            "connectivity has {} entries for {} cells",
            connectivity.len(),
            ncells
        )));
    }
    Ok(VtuContent {
        npoints,
        ncells,
        connectivity,
        cell_fields,
    })
}
