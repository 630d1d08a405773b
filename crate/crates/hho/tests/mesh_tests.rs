//! Mesh construction, structured generators, newest-vertex bisection, and
//! the text round-trip.

use hho::mesh::{
    build_connectivity, generate_structured_mesh, parse_mesh, read_mesh, refine_nvb,
    refine_uniform, write_mesh, Domain, FaceKind, Mesh,
};
use std::collections::BTreeMap;

fn all_dirichlet(edges: &[(usize, usize)]) -> BTreeMap<(usize, usize), FaceKind> {
    edges
        .iter()
        .map(|&(a, b)| ((a.min(b), a.max(b)), FaceKind::Dirichlet))
        .collect()
}

fn reference_triangle_mesh() -> Mesh {
    build_connectivity(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[0, 1, 2]],
        &all_dirichlet(&[(0, 1), (1, 2), (0, 2)]),
        vec![0],
    )
    .unwrap()
}

fn two_cell_square_mesh() -> Mesh {
    build_connectivity(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
        &all_dirichlet(&[(0, 1), (1, 2), (2, 3), (0, 3)]),
        vec![0, 0],
    )
    .unwrap()
}

/// No vertex may lie strictly inside another cell's edge.
fn assert_conforming(mesh: &Mesh) {
    for face in &mesh.faces {
        let a = mesh.vertices[face.vertices[0]].coords;
        let b = mesh.vertices[face.vertices[1]].coords;
        for (v, vert) in mesh.vertices.iter().enumerate() {
            if v == face.vertices[0] || v == face.vertices[1] {
                continue;
            }
            let p = vert.coords;
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
            let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
            let interior = dot > 1e-12 * len2 && dot < len2 * (1.0 - 1e-12);
            assert!(
                !(cross.abs() < 1e-12 * len2 && interior),
                "hanging vertex {v} on face ({}, {})",
                face.vertices[0],
                face.vertices[1]
            );
        }
    }
    // Every interior face has two incident cells, each listing the face.
    for (f, face) in mesh.faces.iter().enumerate() {
        let incident = mesh
            .cells
            .iter()
            .filter(|c| c.faces.contains(&f))
            .count();
        let expected = if face.is_boundary() { 1 } else { 2 };
        assert_eq!(incident, expected, "face {f} incidence");
    }
}

#[test]
fn single_reference_triangle() {
    let mesh = reference_triangle_mesh();
    assert_eq!(mesh.cells.len(), 1);
    assert_eq!(mesh.boundary_face_count(), 3);
    assert_eq!(mesh.interior_face_count(), 0);
}

#[test]
fn two_triangles_share_diagonal() {
    let mesh = two_cell_square_mesh();
    assert_eq!(mesh.interior_face_count(), 1);
    assert_eq!(mesh.boundary_face_count(), 4);
    let f = mesh
        .faces
        .iter()
        .find(|f| f.kind == FaceKind::Interior)
        .unwrap();
    assert!(!f.is_boundary());
    assert!(f.cells[0] != f.cells[1]);
}

#[test]
fn structured_square_counts() {
    // Euler hand count for a 4x4 grid of squares split in two: 25 vertices,
    // 32 cells; E = V + F - 1 with the outer face = 25 + 33 - 2 = 56 edges,
    // of which 16 lie on the boundary.
    let mesh = generate_structured_mesh(Domain::Square, 4).unwrap();
    assert_eq!(mesh.cells.len(), 32);
    assert_eq!(mesh.vertices.len(), 25);
    assert_eq!(mesh.interior_face_count(), 40);
    assert_eq!(mesh.boundary_face_count(), 16);
    assert!((mesh.total_area() - 4.0).abs() < 1e-12);
    let mesh8 = generate_structured_mesh(Domain::Square, 8).unwrap();
    assert_eq!(mesh8.cells.len(), 128);
}

#[test]
fn structured_lshape_counts() {
    let mesh = generate_structured_mesh(Domain::LShape, 2).unwrap();
    assert_eq!(mesh.cells.len(), 24);
    assert!((mesh.total_area() - 3.0).abs() < 1e-12);
    assert_conforming(&mesh);
}

#[test]
fn kellogg_regions_follow_checkerboard() {
    let mesh = generate_structured_mesh(Domain::KelloggSquare, 2).unwrap();
    for c in 0..mesh.cells.len() {
        let ctr = mesh.centroid(c);
        let expected = usize::from(ctr[0] * ctr[1] > 0.0);
        assert_eq!(mesh.cells[c].region, expected, "cell {c} at {ctr:?}");
    }
}

#[test]
fn nvb_mark_all_two_cell() {
    let mesh = two_cell_square_mesh();
    let refined = refine_nvb(&mesh, &[0, 1]).unwrap();
    assert_eq!(refined.cells.len(), 4);
    assert!((refined.total_area() - mesh.total_area()).abs() < 1e-12);
    assert_conforming(&refined);
}

#[test]
fn nvb_mark_one_two_cell() {
    let mesh = two_cell_square_mesh();
    let refined = refine_nvb(&mesh, &[0]).unwrap();
    assert!(refined.cells.len() >= 3);
    assert!((refined.total_area() - mesh.total_area()).abs() < 1e-12);
    assert_conforming(&refined);
}

#[test]
fn nvb_mark_nothing_is_identity() {
    let mesh = generate_structured_mesh(Domain::Square, 2).unwrap();
    let refined = refine_nvb(&mesh, &[]).unwrap();
    assert_eq!(refined.cells.len(), mesh.cells.len());
    assert_eq!(refined.vertices.len(), mesh.vertices.len());
    for (a, b) in refined.vertices.iter().zip(&mesh.vertices) {
        assert_eq!(a.coords, b.coords);
    }
}

#[test]
fn uniform_refinement_quadruples_and_preserves_area() {
    let mesh = generate_structured_mesh(Domain::Square, 4).unwrap();
    let refined = refine_uniform(&mesh).unwrap();
    assert_eq!(refined.cells.len(), 4 * mesh.cells.len());
    assert!((refined.total_area() - mesh.total_area()).abs() < 1e-12);
    assert_conforming(&refined);
}

#[test]
fn nvb_shape_regularity_and_conformity_over_repeated_refinement() {
    // Deterministic pseudo-random marking; NVB must stay conforming and
    // keep the minimum angle bounded away from zero.
    let mut mesh = generate_structured_mesh(Domain::LShape, 2).unwrap();
    let initial_angle = mesh.min_angle();
    let mut state = 0x9e3779b97f4a7c15u64;
    for _ in 0..6 {
        let mut marked = Vec::new();
        for c in 0..mesh.cells.len() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if state >> 62 == 0 {
                marked.push(c);
            }
        }
        if marked.is_empty() {
            marked.push(0);
        }
        let refined = refine_nvb(&mesh, &marked).unwrap();
        assert!(refined.cells.len() > mesh.cells.len());
        assert!((refined.total_area() - mesh.total_area()).abs() < 1e-12);
        mesh = refined;
    }
    assert_conforming(&mesh);
    // NVB generates at most a fixed number of similarity classes; half the
    // initial minimum angle is a safe floor.
    assert!(mesh.min_angle() > 0.4 * initial_angle);
}

#[test]
fn mesh_text_round_trip() {
    let mesh = generate_structured_mesh(Domain::KelloggSquare, 2).unwrap();
    let dir = std::env::temp_dir().join("hho_mesh_roundtrip");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("mesh.txt");
    write_mesh(&mesh, &path).unwrap();
    let back = read_mesh(&path).unwrap();
    assert_eq!(back.cells.len(), mesh.cells.len());
    assert_eq!(back.vertices.len(), mesh.vertices.len());
    assert_eq!(back.interior_face_count(), mesh.interior_face_count());
    for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
        assert!((a.coords[0] - b.coords[0]).abs() < 1e-15);
        assert!((a.coords[1] - b.coords[1]).abs() < 1e-15);
    }
    for (a, b) in back.cells.iter().zip(&mesh.cells) {
        assert_eq!(a.region, b.region);
    }
}

#[test]
fn parse_mesh_rejects_malformed_input() {
    assert!(parse_mesh("not a mesh").is_err());
    assert!(parse_mesh("").is_err());
}

#[test]
fn degenerate_triangle_rejected() {
    let r = build_connectivity(
        vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        vec![[0, 1, 2]],
        &all_dirichlet(&[(0, 1), (1, 2), (0, 2)]),
        vec![0],
    );
    assert!(r.is_err());
}
