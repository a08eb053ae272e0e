use std::fmt::Write as _;

use super::{MeshError, Point, SurfaceMesh};

/// Default soft-tissue density, kg/m³.
pub const DEFAULT_TISSUE_DENSITY: f64 = 1060.0;

/// Node/edge/tetrahedron network of a closed surface, with lumped masses.
///
/// The last node is the interior centroid; every surface face becomes a
/// tetrahedron fanned from it and every surface vertex gets a bracing edge
/// to it.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumetricLattice {
    pub nodes: Vec<Point>,
    /// `(i, j, rest_length)` with `i < j`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Node indices ordered so the rest signed volume is positive.
    pub tetrahedra: Vec<[usize; 4]>,
    pub node_masses: Vec<f64>,
    pub surface_faces: Vec<[usize; 3]>,
}

pub fn tet_signed_volume(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

pub fn build_lattice(mesh: &SurfaceMesh, density: f64) -> Result<VolumetricLattice, MeshError> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(MeshError::InvalidDensity(density));
    }
    if !mesh.is_closed() {
        return Err(MeshError::NotWatertight(mesh.open_edge_count().max(1)));
    }
    // Orient faces outward.
    let faces: Vec<[usize; 3]> = if mesh.signed_volume() < 0.0 {
        mesh.faces.iter().map(|f| [f[0], f[2], f[1]]).collect()
    } else {
        mesh.faces.clone()
    };
    let oriented = SurfaceMesh {
        vertices: mesh.vertices.clone(),
        faces,
    };
    let volume = oriented.signed_volume();
    let centroid = volume_centroid(&oriented, volume);

    let mut nodes = oriented.vertices.clone();
    let c = nodes.len();
    nodes.push(centroid);

    let mut tetrahedra = Vec::with_capacity(oriented.faces.len());
    let mut node_masses = vec![0.0; nodes.len()];
    for (index, f) in oriented.faces.iter().enumerate() {
        let tet = [c, f[0], f[1], f[2]];
        let v = tet_signed_volume(&nodes[tet[0]], &nodes[tet[1]], &nodes[tet[2]], &nodes[tet[3]]);
        if !(v > 0.0) {
            return Err(MeshError::NonPositiveVolume { index, volume: v });
        }
        for &n in &tet {
            node_masses[n] += density * v / 4.0;
        }
        tetrahedra.push(tet);
    }

    let mut edges: Vec<(usize, usize, f64)> = oriented
        .edges()
        .into_iter()
        .map(|(a, b)| (a, b, (nodes[a] - nodes[b]).norm()))
        .collect();
    for v in 0..c {
        edges.push((v, c, (nodes[v] - nodes[c]).norm()));
    }

    Ok(VolumetricLattice {
        nodes,
        edges,
        tetrahedra,
        node_masses,
        surface_faces: oriented.faces,
    })
}

fn volume_centroid(mesh: &SurfaceMesh, volume: f64) -> Point {
    let mut acc = Point::zeros();
    for f in &mesh.faces {
        let (a, b, c) = (mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        let v = a.dot(&b.cross(&c)) / 6.0;
        acc += (a + b + c) * (v / 4.0);
    }
    acc / volume
}

impl VolumetricLattice {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.node_masses.iter().sum()
    }

    pub fn rest_volume(&self) -> f64 {
        self.tetrahedra
            .iter()
            .map(|t| {
                tet_signed_volume(
                    &self.nodes[t[0]],
                    &self.nodes[t[1]],
                    &self.nodes[t[2]],
                    &self.nodes[t[3]],
                )
            })
            .sum()
    }

    /// True when every node is reachable through the edge graph.
    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b, _) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Plain-text dump for debugging.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# lattice nodes={} edges={} tets={}",
            self.nodes.len(),
            self.edges.len(),
            self.tetrahedra.len()
        );
        for (i, (p, m)) in self.nodes.iter().zip(&self.node_masses).enumerate() {
            let _ = writeln!(out, "node {i} {:?} {:?} {:?} mass {:?}", p.x, p.y, p.z, m);
        }
        for (a, b, l) in &self.edges {
            let _ = writeln!(out, "edge {a} {b} rest {l:?}");
        }
        for t in &self.tetrahedra {
            let _ = writeln!(out, "tet {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        out
    }
}
