//! Foot geometry: surface meshes, simplification and the volumetric lattice
//! used by the soft-body models.

mod decimate;
mod hausdorff;
mod lattice;
mod smooth;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use thiserror::Error;

pub use decimate::decimate;
pub use hausdorff::{closest_point_on_triangle, hausdorff_distance};
pub use lattice::{build_lattice, VolumetricLattice, DEFAULT_TISSUE_DENSITY};
pub use smooth::smooth_remesh;

pub type Point = Vector3<f64>;

/// Vertices closer than this are considered the same point.
pub const WELD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read mesh file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face index {index} out of range for {count} vertices")]
    IndexOutOfRange { line: usize, index: usize, count: usize },
    #[error("line {line}: degenerate face (repeated vertex)")]
    DegenerateFace { line: usize },
    #[error("decimation target {0} is below the minimum of 4 vertices")]
    InvalidTarget(usize),
    #[error("mesh is not watertight: {0} edges are not shared by exactly two faces")]
    NotWatertight(usize),
    #[error("tetrahedron {index} has non-positive rest volume {volume:e}")]
    NonPositiveVolume { index: usize, volume: f64 },
    #[error("density must be positive, got {0}")]
    InvalidDensity(f64),
}

/// Closed or open triangle surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    /// Builds a mesh after checking index ranges and degenerate faces.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (k, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        line: k + 1,
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace { line: k + 1 });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Number of edges not shared by exactly two faces.
    pub fn open_edge_count(&self) -> usize {
        let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        uses.values().filter(|&&n| n != 2).count()
    }

    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.open_edge_count() == 0
    }

    /// Signed enclosed volume (positive for outward-facing winding).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Vertex neighbour lists (1-ring), sorted.
    pub fn one_rings(&self) -> Vec<Vec<usize>> {
        let mut rings = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            rings[a].push(b);
            rings[b].push(a);
        }
        for r in &mut rings {
            r.sort_unstable();
        }
        rings
    }

    pub fn transformed(&self, f: impl FnMut(&Point) -> Point) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Mirror across the y = 0 plane, keeping outward winding.
    pub fn mirrored_y(&self) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| Point::new(v.x, -v.y, v.z)).collect(),
            faces: self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
        }
    }

    /// Writes the `v x y z` / `f i j k` text form with round-trip precision.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_obj_string()).map_err(|source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn load_mesh(path: &Path) -> Result<SurfaceMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_mesh(&text)
}

/// Parses the ASCII vertex/face list format. Faces with more than three
/// corners are fan-triangulated; coincident vertices are welded.
pub fn parse_mesh(text: &str) -> Result<SurfaceMesh, MeshError> {
    let mut raw_vertices = Vec::new();
    let mut raw_faces: Vec<(usize, Vec<usize>)> = Vec::new();

    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| MeshError::Parse {
                            line: line_no,
                            message: format!("invalid coordinate {t:?}"),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if coords.len() < 3 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        message: format!("vertex needs 3 coordinates, found {}", coords.len()),
                    });
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(MeshError::Parse {
                        line: line_no,
                        message: "non-finite coordinate".into(),
                    });
                }
                raw_vertices.push(Point::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(MeshError::Parse {
                                line: line_no,
                                message: format!("invalid face index {t:?}"),
                            }),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        message: format!("face needs at least 3 indices, found {}", idx.len()),
                    });
                }
                raw_faces.push((line_no, idx));
            }
            _ => {}
        }
    }

    for (line, idx) in &raw_faces {
        if let Some(&bad) = idx.iter().find(|&&i| i >= raw_vertices.len()) {
            return Err(MeshError::IndexOutOfRange {
                line: *line,
                index: bad + 1,
                count: raw_vertices.len(),
            });
        }
    }

    // Weld duplicates: O(n^2) is fine at foot-mesh sizes.
    let mut remap = vec![0usize; raw_vertices.len()];
    let mut vertices: Vec<Point> = Vec::with_capacity(raw_vertices.len());
    for (i, v) in raw_vertices.iter().enumerate() {
        match vertices.iter().position(|w| (w - v).norm() <= WELD_TOLERANCE) {
            Some(j) => remap[i] = j,
            None => {
                remap[i] = vertices.len();
                vertices.push(*v);
            }
        }
    }

    let mut faces = Vec::new();
    for (line, idx) in raw_faces {
        let idx: Vec<usize> = idx.into_iter().map(|i| remap[i]).collect();
        for k in 1..idx.len() - 1 {
            let tri = [idx[0], idx[k], idx[k + 1]];
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateFace { line });
            }
            faces.push(tri);
        }
    }

    Ok(SurfaceMesh { vertices, faces })
}

/// Icosahedron with unit circumradius, outward winding.
pub fn icosahedron() -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let vertices = raw.iter().map(|&(x, y, z)| Point::new(x, y, z).normalize()).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    SurfaceMesh { vertices, faces }
}

/// Loop-style midpoint subdivision of the icosahedron, projected to the unit
/// sphere. `levels = 1` gives the 42-vertex icosphere.
pub fn icosphere(levels: usize) -> SurfaceMesh {
    let mut mesh = icosahedron();
    for _ in 0..levels {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertices = mesh.vertices.clone();
        let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for f in &mesh.faces {
            let ab = mid(f[0], f[1], &mut vertices);
            let bc = mid(f[1], f[2], &mut vertices);
            let ca = mid(f[2], f[0], &mut vertices);
            faces.push([f[0], ab, ca]);
            faces.push([f[1], bc, ab]);
            faces.push([f[2], ca, bc]);
            faces.push([ab, bc, ca]);
        }
        mesh = SurfaceMesh { vertices, faces };
    }
    mesh
}

/// Closed superellipsoid with `rings` latitude bands and `segments`
/// longitudes; `(rings - 1) * segments + 2` vertices. Exponent 1 is an
/// ellipsoid, smaller values are boxier.
pub fn superellipsoid(center: Point, semi_axes: Point, exponent: f64, rings: usize, segments: usize) -> SurfaceMesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let pow = |c: f64| c.signum() * c.abs().powf(exponent);
    let mut vertices = vec![center + Point::new(0.0, 0.0, semi_axes.z)];
    for r in 1..rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64;
        for k in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            let (sp, cp) = (pow(phi.sin()), pow(phi.cos()));
            vertices.push(
                center
                    + Point::new(
                        semi_axes.x * sp * pow(theta.cos()),
                        semi_axes.y * sp * pow(theta.sin()),
                        semi_axes.z * cp,
                    ),
            );
        }
    }
    let bottom = vertices.len();
    vertices.push(center - Point::new(0.0, 0.0, semi_axes.z));
    let at = |r: usize, k: usize| 1 + (r - 1) * segments + k % segments;
    let mut faces = Vec::new();
    for k in 0..segments {
        faces.push([0, at(1, k), at(1, k + 1)]);
        faces.push([bottom, at(rings - 1, k + 1), at(rings - 1, k)]);
    }
    for r in 1..rings - 1 {
        for k in 0..segments {
            faces.push([at(r, k), at(r + 1, k), at(r + 1, k + 1)]);
            faces.push([at(r, k), at(r + 1, k + 1), at(r, k + 1)]);
        }
    }
    SurfaceMesh { vertices, faces }
}

/// Axis-aligned box surface with 8 corners and 12 outward triangles.
pub fn box_mesh(lo: Point, hi: Point) -> SurfaceMesh {
    let c = |x: usize, y: usize, z: usize| {
        Point::new(
            if x == 0 { lo.x } else { hi.x },
            if y == 0 { lo.y } else { hi.y },
            if z == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = vec![
        c(0, 0, 0),
        c(1, 0, 0),
        c(1, 1, 0),
        c(0, 1, 0),
        c(0, 0, 1),
        c(1, 0, 1),
        c(1, 1, 1),
        c(0, 1, 1),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    SurfaceMesh { vertices, faces }
}

/// Regular tetrahedron surface centred at the origin.
pub fn tetrahedron_mesh() -> SurfaceMesh {
    let s = 1.0 / 3f64.sqrt();
    let vertices = vec![
        Point::new(s, s, s),
        Point::new(s, -s, -s),
        Point::new(-s, s, -s),
        Point::new(-s, -s, s),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    SurfaceMesh { vertices, faces }
}
