use super::{Point, SurfaceMesh};

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

fn distance_to_surface(p: &Point, mesh: &SurfaceMesh) -> f64 {
    mesh.faces
        .iter()
        .map(|f| {
            let q = closest_point_on_triangle(p, &mesh.vertices[f[0]], &mesh.vertices[f[1]], &mesh.vertices[f[2]]);
            (p - q).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Barycentric sample points on every face (`density` subdivisions per edge).
fn surface_samples(mesh: &SurfaceMesh, density: usize) -> Vec<Point> {
    let n = density.max(1);
    let mut out = mesh.vertices.clone();
    for f in &mesh.faces {
        let (a, b, c) = (mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let u = i as f64 / n as f64;
                let v = j as f64 / n as f64;
                out.push(a + (b - a) * u + (c - a) * v);
            }
        }
    }
    out
}

fn directed(from: &SurfaceMesh, to: &SurfaceMesh, density: usize) -> f64 {
    surface_samples(from, density)
        .iter()
        .map(|p| distance_to_surface(p, to))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance estimated from barycentric surface samples.
pub fn hausdorff_distance(a: &SurfaceMesh, b: &SurfaceMesh, density: usize) -> f64 {
    directed(a, b, density).max(directed(b, a, density))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn closest_point_regions() {
        let a = Point::new(0.0, 0.0, 0.0);
        let b = Point::new(1.0, 0.0, 0.0);
        let c = Point::new(0.0, 1.0, 0.0);
        let q = closest_point_on_triangle(&Point::new(0.2, 0.2, 1.0), &a, &b, &c);
        assert!((q - Point::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let q = closest_point_on_triangle(&Point::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(q, a);
        let q = closest_point_on_triangle(&Point::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Point::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn identical_meshes_have_zero_distance() {
        let m = icosphere(1);
        assert!(hausdorff_distance(&m, &m, 2) < 1e-12);
    }
}
