use nalgebra::{Matrix4, Vector4};

use super::{closest_point_on_triangle, MeshError, Point, SurfaceMesh};

/// Relative width of the edge-length buckets inside which collapse order is
/// decided by collapse error instead of length.
const LENGTH_TIE_FRACTION: f64 = 1e-3;

/// Edge-collapse simplification down to at most `target_vertices` vertices.
///
/// Edges are collapsed shortest first. Edges whose lengths fall in the same
/// bucket (a thousandth of the mean input edge length) are ordered by
/// collapse error: distance of the removed region to the new local surface,
/// then how irregular the removed vertex's valence is, then accumulated
/// plane quadrics. Each collapse keeps whichever endpoint gives the lower error,
/// so surviving vertices always lie on the input surface. Collapses that would break the 2-manifold (link
/// condition) are skipped; collapses that flip a face normal are skipped
/// unless nothing else is available.
pub fn decimate(mesh: &SurfaceMesh, target_vertices: usize) -> Result<SurfaceMesh, MeshError> {
    if target_vertices < 4 {
        return Err(MeshError::InvalidTarget(target_vertices));
    }
    if mesh.vertex_count() <= target_vertices {
        return Ok(mesh.clone());
    }
    let mut state = Collapser::new(mesh);
    while state.alive_vertices > target_vertices {
        if !state.collapse_one(true) && !state.collapse_one(false) {
            break;
        }
    }
    Ok(state.into_mesh())
}

struct Collapser {
    pos: Vec<Point>,
    alive_v: Vec<bool>,
    faces: Vec<[usize; 3]>,
    alive_f: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    quadrics: Vec<Matrix4<f64>>,
    /// Original points merged into each surviving vertex.
    absorbed: Vec<Vec<Point>>,
    alive_vertices: usize,
    bucket: f64,
}

struct Candidate {
    bucket: u64,
    cost: (u64, usize, f64),
    keep: usize,
    gone: usize,
}

impl Collapser {
    fn new(mesh: &SurfaceMesh) -> Self {
        let n = mesh.vertex_count();
        let mut vertex_faces = vec![Vec::new(); n];
        let mut quadrics = vec![Matrix4::zeros(); n];
        for (k, f) in mesh.faces.iter().enumerate() {
            let q = plane_quadric(&mesh.vertices[f[0]], &mesh.vertices[f[1]], &mesh.vertices[f[2]]);
            for &i in f {
                vertex_faces[i].push(k);
                quadrics[i] += q;
            }
        }
        let edges = mesh.edges();
        let mean_len = edges
            .iter()
            .map(|&(a, b)| (mesh.vertices[a] - mesh.vertices[b]).norm())
            .sum::<f64>()
            / edges.len().max(1) as f64;
        Self {
            pos: mesh.vertices.clone(),
            alive_v: vec![true; n],
            faces: mesh.faces.clone(),
            alive_f: vec![true; mesh.faces.len()],
            vertex_faces,
            quadrics,
            absorbed: mesh.vertices.iter().map(|p| vec![*p]).collect(),
            alive_vertices: n,
            bucket: (mean_len * LENGTH_TIE_FRACTION).max(f64::MIN_POSITIVE),
        }
    }

    fn neighbours(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vertex_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn error_at(&self, p: &Point, a: usize, b: usize) -> f64 {
        let h = Vector4::new(p.x, p.y, p.z, 1.0);
        let q = self.quadrics[a] + self.quadrics[b];
        (h.transpose() * q * h)[(0, 0)].max(0.0)
    }

    /// Error of merging `gone` into `keep`: the largest distance from the
    /// points absorbed by `gone` to the fan of faces it leaves behind
    /// (bucketed), then the valence irregularity of `gone`, then the
    /// plane-quadric error. Irregular vertices are kept preferentially.
    fn collapse_error(&self, keep: usize, gone: usize) -> (u64, usize, f64) {
        let target = self.pos[keep];
        let mut worst: f64 = 0.0;
        let fan: Vec<[Point; 3]> = self.vertex_faces[gone]
            .iter()
            .map(|&f| self.faces[f])
            .filter(|tri| !tri.contains(&keep))
            .map(|tri| tri.map(|i| if i == gone { target } else { self.pos[i] }))
            .collect();
        for p in &self.absorbed[gone] {
            let d = fan
                .iter()
                .map(|t| (p - closest_point_on_triangle(p, &t[0], &t[1], &t[2])).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(if d.is_finite() { d } else { (p - target).norm() });
        }
        (
            (worst / self.bucket).round() as u64,
            self.irregularity(gone),
            self.error_at(&target, keep, gone),
        )
    }

    /// Distance of the valence of `v` from the regular valence 6.
    fn irregularity(&self, v: usize) -> usize {
        self.vertex_faces[v].len().abs_diff(6)
    }

    fn candidates(&self) -> Vec<Candidate> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .zip(&self.alive_f)
            .filter(|(_, &alive)| alive)
            .flat_map(|(f, _)| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut out: Vec<Candidate> = edges
            .into_iter()
            .map(|(a, b)| {
                let len = (self.pos[a] - self.pos[b]).norm();
                let into_a = self.collapse_error(a, b);
                let into_b = self.collapse_error(b, a);
                let (keep, gone, cost) = if into_a
                    .0
                    .cmp(&into_b.0)
                    .then(into_a.1.cmp(&into_b.1))
                    .then(into_a.2.total_cmp(&into_b.2))
                    .is_le()
                {
                    (a, b, into_a)
                } else {
                    (b, a, into_b)
                };
                Candidate {
                    bucket: (len / self.bucket).floor() as u64,
                    cost,
                    keep,
                    gone,
                }
            })
            .collect();
        out.sort_by(|x, y| {
            x.bucket
                .cmp(&y.bucket)
                .then(x.cost.0.cmp(&y.cost.0))
                .then(x.cost.1.cmp(&y.cost.1))
                .then(x.cost.2.total_cmp(&y.cost.2))
                .then(x.keep.cmp(&y.keep))
                .then(x.gone.cmp(&y.gone))
        });
        out
    }

    /// The two endpoints may share only the two vertices opposite the edge.
    fn link_ok(&self, keep: usize, gone: usize) -> bool {
        let nk = self.neighbours(keep);
        let ng = self.neighbours(gone);
        let shared = nk.iter().filter(|v| ng.binary_search(v).is_ok()).count();
        shared == 2 && self.alive_vertices > 4
    }

    fn flips(&self, keep: usize, gone: usize) -> bool {
        let target = self.pos[keep];
        for &f in &self.vertex_faces[gone] {
            let tri = self.faces[f];
            if tri.contains(&keep) {
                continue;
            }
            let p = tri.map(|i| self.pos[i]);
            let before = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let q = tri.map(|i| if i == gone { target } else { self.pos[i] });
            let after = (q[1] - q[0]).cross(&(q[2] - q[0]));
            if after.norm_squared() <= 1e-30 || before.dot(&after) <= 0.0 {
                return true;
            }
        }
        false
    }

    fn collapse_one(&mut self, guard_flips: bool) -> bool {
        for c in self.candidates() {
            if !self.link_ok(c.keep, c.gone) {
                continue;
            }
            if guard_flips && self.flips(c.keep, c.gone) {
                continue;
            }
            self.collapse(c.keep, c.gone);
            return true;
        }
        false
    }

    fn collapse(&mut self, keep: usize, gone: usize) {
        let incident = std::mem::take(&mut self.vertex_faces[gone]);
        for f in incident {
            if self.faces[f].contains(&keep) {
                self.alive_f[f] = false;
                for i in self.faces[f] {
                    self.vertex_faces[i].retain(|&g| g != f);
                }
            } else {
                for i in self.faces[f].iter_mut() {
                    if *i == gone {
                        *i = keep;
                    }
                }
                self.vertex_faces[keep].push(f);
            }
        }
        let q = self.quadrics[gone];
        self.quadrics[keep] += q;
        let moved = std::mem::take(&mut self.absorbed[gone]);
        self.absorbed[keep].extend(moved);
        self.alive_v[gone] = false;
        self.alive_vertices -= 1;
    }

    fn into_mesh(self) -> SurfaceMesh {
        let mut remap = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::with_capacity(self.alive_vertices);
        for (i, p) in self.pos.iter().enumerate() {
            if self.alive_v[i] {
                remap[i] = vertices.len();
                vertices.push(*p);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.alive_f)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| f.map(|i| remap[i]))
            .collect();
        SurfaceMesh { vertices, faces }
    }
}

fn plane_quadric(a: &Point, b: &Point, c: &Point) -> Matrix4<f64> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len <= 0.0 {
        return Matrix4::zeros();
    }
    let n = n / len;
    let plane = Vector4::new(n.x, n.y, n.z, -n.dot(a));
    plane * plane.transpose()
}
