use super::{Point, SurfaceMesh};

/// Laplacian smoothing: every pass moves each vertex toward the average of
/// its 1-ring by `step`. After each pass the mesh is rescaled about its
/// vertex centroid so the RMS centroid distance is unchanged, which keeps
/// the bounding box from collapsing while the surface is evened out.
pub fn smooth_remesh(mesh: &SurfaceMesh, iterations: usize, step: f64) -> SurfaceMesh {
    let step = step.clamp(0.0, 1.0);
    let mut out = mesh.clone();
    if step == 0.0 || iterations == 0 || mesh.vertices.is_empty() {
        return out;
    }
    let rings = mesh.one_rings();

    for _ in 0..iterations {
        let before_rms = rms_radius(&out.vertices);
        let moved: Vec<Point> = out
            .vertices
            .iter()
            .zip(&rings)
            .map(|(p, ring)| {
                if ring.is_empty() {
                    return *p;
                }
                let avg = ring.iter().map(|&j| out.vertices[j]).sum::<Point>() / ring.len() as f64;
                p + (avg - p) * step
            })
            .collect();
        out.vertices = moved;

        let after_rms = rms_radius(&out.vertices);
        if after_rms > 0.0 && before_rms > 0.0 {
            let c = centroid(&out.vertices);
            let s = before_rms / after_rms;
            for v in &mut out.vertices {
                *v = c + (*v - c) * s;
            }
        }
    }
    out
}

fn centroid(points: &[Point]) -> Point {
    points.iter().sum::<Point>() / points.len() as f64
}

fn rms_radius(points: &[Point]) -> f64 {
    let c = centroid(points);
    (points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / points.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosahedron, icosphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn radial_sd(m: &SurfaceMesh) -> f64 {
        let c = centroid(&m.vertices);
        let r: Vec<f64> = m.vertices.iter().map(|v| (v - c).norm()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt()
    }

    #[test]
    fn zero_iterations_is_identity() {
        let m = icosphere(1);
        assert_eq!(smooth_remesh(&m, 0, 0.5), m);
    }

    #[test]
    fn zero_step_is_identity() {
        let m = icosphere(2);
        assert_eq!(smooth_remesh(&m, 25, 0.0), m);
    }

    #[test]
    fn icosahedron_stays_equidistant() {
        let m = smooth_remesh(&icosahedron(), 7, 0.3);
        let c = centroid(&m.vertices);
        let r0 = (m.vertices[0] - c).norm();
        for v in &m.vertices {
            assert!(((v - c).norm() - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_sphere_gets_rounder_without_collapsing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sphere = icosphere(2);
        let noisy = sphere.transformed(|v| v * (1.0 + rng.gen_range(-0.1..0.1)));
        let smoothed = smooth_remesh(&noisy, 10, 0.5);
        assert_eq!(smoothed.vertex_count(), noisy.vertex_count());
        assert!(radial_sd(&smoothed) < radial_sd(&noisy));
        let shrink = 1.0 - smoothed.bbox_diagonal() / noisy.bbox_diagonal();
        assert!(shrink < 0.2, "bounding box shrank by {shrink}");
    }
}
