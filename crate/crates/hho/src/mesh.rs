//! Conforming 2D triangular meshes: connectivity, structured generators
//! for the benchmark domains, and newest-vertex-bisection refinement.

use crate::{Error, Result};
use std::collections::{BTreeMap, HashMap};

/// Sentinel for "no cell" on the far side of a boundary face.
pub const NO_CELL: usize = usize::MAX;

/// Boundary condition kind attached to a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub coords: [f64; 2],
}

/// A mesh edge. Interior faces are shared by exactly two cells; the unit
/// normal of an interior face points from `cells[0]` to `cells[1]`
/// (lower to higher cell id), boundary normals point outward.
#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    pub normal: [f64; 2],
    pub length: f64,
    pub kind: FaceKind,
    pub cells: [usize; 2],
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells[1] == NO_CELL
    }
}

/// A triangle with counterclockwise vertices. `faces[i]` is the face on
/// the local edge `(vertices[i], vertices[i+1 mod 3])`, and
/// `face_outward[i]` records whether that face's normal already points
/// out of this cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub vertices: [usize; 3],
    pub faces: [usize; 3],
    pub face_outward: [bool; 3],
    pub diameter: f64,
    pub area: f64,
    pub region: usize,
    /// Local edge index bisected by newest-vertex refinement.
    pub refinement_edge: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub faces: Vec<Face>,
    pub cells: Vec<Cell>,
    /// Vertex stars: cells incident to each vertex.
    pub vertex_cells: Vec<Vec<usize>>,
}

/// Benchmark domains with structured initial meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The square (-1,1)^2, `n` subdivisions per side.
    Square,
    /// (-1,1)^2 minus the quadrant (0,1)x(-1,0), `n` subdivisions per unit.
    LShape,
    /// The square (-1,1)^2 with checkerboard region ids, `n` subdivisions
    /// per unit so that cell edges align with the axes.
    KelloggSquare,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds full incidence from raw triangles.
///
/// Boundary labels are keyed by unordered vertex pairs. Interior normals
/// point from the lower to the higher incident cell id.
pub fn build_connectivity(
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_labels: &BTreeMap<(usize, usize), FaceKind>,
    region_ids: Vec<usize>,
) -> Result<Mesh> {
    if region_ids.len() != triangles.len() {
        return Err(Error::Structural(format!(
            "{} region ids for {} triangles",
            region_ids.len(),
            triangles.len()
        )));
    }
    for v in &vertices {
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(Error::Geometry("non-finite vertex coordinates".into()));
        }
    }

    let mut cells = Vec::with_capacity(triangles.len());
    for (c, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if v >= vertices.len() {
                return Err(Error::Structural(format!(
                    "cell {c} references vertex {v} out of {}",
                    vertices.len()
                )));
            }
        }
        let [a, b, cc] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let signed2 = (b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]);
        if signed2 <= 0.0 {
            return Err(Error::Orientation(format!(
                "cell {c} is not counterclockwise (signed area {})",
                0.5 * signed2
            )));
        }
        let e = [dist(a, b), dist(b, cc), dist(cc, a)];
        cells.push(Cell {
            vertices: *tri,
            faces: [0; 3],
            face_outward: [false; 3],
            diameter: e[0].max(e[1]).max(e[2]),
            area: 0.5 * signed2,
            region: region_ids[c],
            refinement_edge: 0,
        });
    }

    // Deduplicate edges; record (cell, local edge) incidences in cell-id order.
    let mut edge_map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    for (c, cell) in cells.iter().enumerate() {
        for le in 0..3 {
            let key = edge_key(cell.vertices[le], cell.vertices[(le + 1) % 3]);
            edge_map.entry(key).or_default().push((c, le));
        }
    }
    for (key, inc) in &edge_map {
        if inc.len() > 2 {
            return Err(Error::Structural(format!(
                "edge {key:?} shared by {} cells",
                inc.len()
            )));
        }
    }

    // A hanging vertex sits strictly inside a single-incidence edge.
    let single_edges: Vec<(usize, usize)> = edge_map
        .iter()
        .filter(|(_, inc)| inc.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    for (v, vc) in vertices.iter().enumerate() {
        for &(a, b) in &single_edges {
            if v == a || v == b {
                continue;
            }
            let (pa, pb) = (vertices[a], vertices[b]);
            let len = dist(pa, pb);
            let da = dist(pa, *vc);
            let db = dist(pb, *vc);
            if (da + db - len).abs() < 1e-12 * len && da > 1e-12 * len && db > 1e-12 * len {
                return Err(Error::Structural(format!(
                    "hanging vertex {v} on edge ({a},{b})"
                )));
            }
        }
    }

    let mut keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
    keys.sort_unstable();
    let mut faces = Vec::with_capacity(keys.len());
    for key in keys {
        let inc = &edge_map[&key];
        let (va, vb) = key;
        let (pa, pb) = (vertices[va], vertices[vb]);
        let len = dist(pa, pb);
        if len == 0.0 {
            return Err(Error::Geometry(format!("zero-length edge ({va},{vb})")));
        }
        let mut n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        let (kind, cell_pair) = if inc.len() == 2 {
            let (c0, c1) = (inc[0].0, inc[1].0);
            // Orient from lower to higher cell id.
            let cen = cell_centroid(&vertices, &triangles[c1]);
            if (cen[0] - mid[0]) * n[0] + (cen[1] - mid[1]) * n[1] < 0.0 {
                n = [-n[0], -n[1]];
            }
            (FaceKind::Interior, [c0, c1])
        } else {
            let c0 = inc[0].0;
            let cen = cell_centroid(&vertices, &triangles[c0]);
            if (cen[0] - mid[0]) * n[0] + (cen[1] - mid[1]) * n[1] > 0.0 {
                n = [-n[0], -n[1]];
            }
            let kind = boundary_labels.get(&key).copied().ok_or_else(|| {
                Error::Labeling(format!("boundary edge ({va},{vb}) has no label"))
            })?;
            (kind, [c0, NO_CELL])
        };
        let fid = faces.len();
        for &(c, le) in inc {
            cells[c].faces[le] = fid;
            let cen = cell_centroid(&vertices, &triangles[c]);
            cells[c].face_outward[le] =
                (mid[0] - cen[0]) * n[0] + (mid[1] - cen[1]) * n[1] > 0.0;
        }
        faces.push(Face {
            vertices: [va, vb],
            normal: n,
            length: len,
            kind,
            cells: cell_pair,
        });
    }

    // Initial refinement edges: longest edge, ties by smallest opposite vertex id.
    for cell in cells.iter_mut() {
        let p = [
            vertices[cell.vertices[0]],
            vertices[cell.vertices[1]],
            vertices[cell.vertices[2]],
        ];
        let lens = [dist(p[0], p[1]), dist(p[1], p[2]), dist(p[2], p[0])];
        let mut best = 0;
        for le in 1..3 {
            let better = lens[le] > lens[best] + 1e-12 * cell.diameter;
            let tie = (lens[le] - lens[best]).abs() <= 1e-12 * cell.diameter
                && cell.vertices[(le + 2) % 3] < cell.vertices[(best + 2) % 3];
            if better || tie {
                best = le;
            }
        }
        cell.refinement_edge = best;
    }

    let mut vertex_cells = vec![Vec::new(); vertices.len()];
    for (c, cell) in cells.iter().enumerate() {
        for &v in &cell.vertices {
            vertex_cells[v].push(c);
        }
    }

    Ok(Mesh {
        vertices: vertices.into_iter().map(|coords| Vertex { coords }).collect(),
        faces,
        cells,
        vertex_cells,
    })
}

fn cell_centroid(vertices: &[[f64; 2]], tri: &[usize; 3]) -> [f64; 2] {
    let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

impl Mesh {
    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let v = &self.cells[c].vertices;
        [
            self.vertices[v[0]].coords,
            self.vertices[v[1]].coords,
            self.vertices[v[2]].coords,
        ]
    }

    pub fn centroid(&self, c: usize) -> [f64; 2] {
        let p = self.cell_coords(c);
        [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]
    }

    /// Outward unit normal of cell `c` on its local edge `le`.
    pub fn outward_normal(&self, c: usize, le: usize) -> [f64; 2] {
        let cell = &self.cells[c];
        let n = self.faces[cell.faces[le]].normal;
        if cell.face_outward[le] {
            n
        } else {
            [-n[0], -n[1]]
        }
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for c in 0..self.cells.len() {
            let p = self.cell_coords(c);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let d = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [d[0] - a[0], d[1] - a[1]];
                let dot = u[0] * v[0] + u[1] * v[1];
                let cr = u[0] * v[1] - u[1] * v[0];
                min = min.min(cr.atan2(dot).abs());
            }
        }
        min
    }

    pub fn interior_face_count(&self) -> usize {
        self.faces.iter().filter(|f| f.kind == FaceKind::Interior).count()
    }

    pub fn boundary_face_count(&self) -> usize {
        self.faces.len() - self.interior_face_count()
    }

    /// Local edge index of face `f` within cell `c`.
    pub fn local_edge(&self, c: usize, f: usize) -> Option<usize> {
        self.cells[c].faces.iter().position(|&x| x == f)
    }
}

/// Structured generator for the benchmark domains. All boundary edges are
/// labeled Dirichlet.
pub fn generate_structured_mesh(domain: Domain, n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::Parameter("subdivision count must be >= 1".into()));
    }
    // Square uses an n-by-n grid of the full side; the other domains use a
    // 2n-by-2n grid so that grid lines hit the coordinate axes.
    let m = match domain {
        Domain::Square => n,
        Domain::LShape | Domain::KelloggSquare => 2 * n,
    };
    let h = 2.0 / m as f64;
    let vid = |i: usize, j: usize| j * (m + 1) + i;
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            vertices.push([-1.0 + i as f64 * h, -1.0 + j as f64 * h]);
        }
    }
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for j in 0..m {
        for i in 0..m {
            let cx = -1.0 + (i as f64 + 0.5) * h;
            let cy = -1.0 + (j as f64 + 0.5) * h;
            if domain == Domain::LShape && cx > 0.0 && cy < 0.0 {
                continue;
            }
            let region = if domain == Domain::KelloggSquare {
                usize::from(cx * cy > 0.0)
            } else {
                0
            };
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            regions.push(region);
            regions.push(region);
        }
    }
    // Collect boundary edges: those appearing once.
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in &triangles {
        for le in 0..3 {
            *counts.entry(edge_key(tri[le], tri[(le + 1) % 3])).or_insert(0) += 1;
        }
    }
    let mut labels = BTreeMap::new();
    for (key, cnt) in counts {
        if cnt == 1 {
            labels.insert(key, FaceKind::Dirichlet);
        }
    }
    let mut used: Vec<usize> = triangles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    // Compact vertex ids for the L-shape (removed quadrant leaves unused vertices).
    let mut remap = vec![usize::MAX; vertices.len()];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    let vertices: Vec<[f64; 2]> = used.iter().map(|&v| vertices[v]).collect();
    let triangles: Vec<[usize; 3]> = triangles
        .iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();
    let labels: BTreeMap<(usize, usize), FaceKind> = labels
        .into_iter()
        .map(|((a, b), k)| (edge_key(remap[a], remap[b]), k))
        .collect();
    build_connectivity(vertices, triangles, &labels, regions)
}

/// Newest-vertex bisection with conformity closure. Marked cells are
/// bisected at least once; the result is conforming. Children inherit
/// region ids and boundary labels.
pub fn refine_nvb(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    for &c in marked {
        if c >= mesh.cells.len() {
            return Err(Error::Parameter(format!("marked cell {c} out of range")));
        }
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }

    let ref_edge_key = |cell: &Cell| {
        let le = cell.refinement_edge;
        edge_key(cell.vertices[le], cell.vertices[(le + 1) % 3])
    };

    let mut marked_edges: std::collections::HashSet<(usize, usize)> =
        marked.iter().map(|&c| ref_edge_key(&mesh.cells[c])).collect();

    // Closure: a cell with any marked edge must have its refinement edge marked.
    loop {
        let mut changed = false;
        for cell in &mesh.cells {
            let any = (0..3).any(|le| {
                marked_edges.contains(&edge_key(cell.vertices[le], cell.vertices[(le + 1) % 3]))
            });
            if any && marked_edges.insert(ref_edge_key(cell)) {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices: Vec<[f64; 2]> = mesh.vertices.iter().map(|v| v.coords).collect();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut keys: Vec<(usize, usize)> = marked_edges.iter().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let (a, b) = key;
        let (pa, pb) = (vertices[a], vertices[b]);
        midpoints.insert(key, vertices.len());
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
    }

    // Boundary labels, with marked boundary edges split at their midpoint.
    let mut labels = BTreeMap::new();
    for face in &mesh.faces {
        if face.kind == FaceKind::Interior {
            continue;
        }
        let key = edge_key(face.vertices[0], face.vertices[1]);
        if let Some(&m) = midpoints.get(&key) {
            labels.insert(edge_key(key.0, m), face.kind);
            labels.insert(edge_key(m, key.1), face.kind);
        } else {
            labels.insert(key, face.kind);
        }
    }

    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut ref_edges = Vec::new();
    // Recursive bisection: children put the new vertex last so their
    // refinement edge (the old flank edge) is local edge 0.
    fn emit(
        tri: [usize; 3],
        ref_edge: usize,
        region: usize,
        midpoints: &HashMap<(usize, usize), usize>,
        triangles: &mut Vec<[usize; 3]>,
        regions: &mut Vec<usize>,
        ref_edges: &mut Vec<usize>,
    ) {
        let a = tri[ref_edge];
        let b = tri[(ref_edge + 1) % 3];
        let c = tri[(ref_edge + 2) % 3];
        match midpoints.get(&edge_key(a, b)) {
            None => {
                triangles.push(tri);
                regions.push(region);
                ref_edges.push(ref_edge);
            }
            Some(&m) => {
                emit([c, a, m], 0, region, midpoints, triangles, regions, ref_edges);
                emit([b, c, m], 0, region, midpoints, triangles, regions, ref_edges);
            }
        }
    }
    for cell in &mesh.cells {
        emit(
            cell.vertices,
            cell.refinement_edge,
            cell.region,
            &midpoints,
            &mut triangles,
            &mut regions,
            &mut ref_edges,
        );
    }

    let mut refined = build_connectivity(vertices, triangles, &labels, regions)?;
    for (cell, le) in refined.cells.iter_mut().zip(ref_edges) {
        cell.refinement_edge = le;
    }
    Ok(refined)
}

/// Bisects every cell twice, quadrupling the cell count.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let all: Vec<usize> = (0..mesh.cells.len()).collect();
    let once = refine_nvb(mesh, &all)?;
    let all: Vec<usize> = (0..once.cells.len()).collect();
    refine_nvb(&once, &all)
}

/// Parses the ASCII mesh format:
/// line 1 `nv nc nb`; `nv` lines `x y`; `nc` lines `v0 v1 v2 region`;
/// `nb` lines `va vb label` with label `D` or `N`. `#` starts a comment.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .into_iter();
    let mut next = || {
        tokens
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))
    };
    let usize_of = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("expected integer, got `{s}`")))
    };
    let f64_of = |s: String| {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("expected number, got `{s}`")))
    };
    let nv = usize_of(next()?)?;
    let nc = usize_of(next()?)?;
    let nb = usize_of(next()?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = f64_of(next()?)?;
        let y = f64_of(next()?)?;
        vertices.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(nc);
    let mut regions = Vec::with_capacity(nc);
    for _ in 0..nc {
        let t = [usize_of(next()?)?, usize_of(next()?)?, usize_of(next()?)?];
        triangles.push(t);
        regions.push(usize_of(next()?)?);
    }
    let mut labels = BTreeMap::new();
    for _ in 0..nb {
        let a = usize_of(next()?)?;
        let b = usize_of(next()?)?;
        let lab = next()?;
        let kind = match lab.as_str() {
            "D" => FaceKind::Dirichlet,
            "N" => FaceKind::Neumann,
            other => return Err(Error::Parse(format!("unknown boundary label `{other}`"))),
        };
        labels.insert(edge_key(a, b), kind);
    }
    build_connectivity(vertices, triangles, &labels, regions)
}

pub fn read_mesh(path: &std::path::Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_mesh(&text)
}

/// Writes the ASCII mesh format accepted by [`parse_mesh`].
pub fn write_mesh(mesh: &Mesh, path: &std::path::Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let nb = mesh.boundary_face_count();
    let _ = writeln!(out, "{} {} {}", mesh.vertices.len(), mesh.cells.len(), nb);
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.17e} {:.17e}", v.coords[0], v.coords[1]);
    }
    for c in &mesh.cells {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            c.vertices[0], c.vertices[1], c.vertices[2], c.region
        );
    }
    for f in &mesh.faces {
        let lab = match f.kind {
            FaceKind::Interior => continue,
            FaceKind::Dirichlet => "D",
            FaceKind::Neumann => "N",
        };
        let _ = writeln!(out, "{} {} {}", f.vertices[0], f.vertices[1], lab);
    }
    std::fs::write(path, out).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}
