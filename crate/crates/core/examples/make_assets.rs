//! Regenerates the files under `assets/`: foot meshes, the synthetic GRF
//! band and the analysis fixtures.
//!
//! cargo run --release -p softgait-core --example make_assets -- assets

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use softgait_core::gaitlab::{synth_reference, SynthBand, GRID};
use softgait_core::mesh::{decimate, hausdorff_distance, superellipsoid, Point};

/// Boxy foot in the foot frame (ankle at the origin). The flat sole spans
/// the heel and toe rocker points of the synthetic gait.
const FOOT_CENTER: [f64; 3] = [0.07, 0.0, -0.045];
const FOOT_SEMI_AXES: [f64; 3] = [0.1, 0.05, 0.04];
const FOOT_EXPONENT: f64 = 0.15;
const FOOT_RINGS: usize = 10;
const FOOT_SEGMENTS: usize = 38;
const FOOT_VERTICES: usize = 15;

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
    println!("wrote {}", path.display());
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "assets".into()));

    let [cx, cy, cz] = FOOT_CENTER;
    let [ax, ay, az] = FOOT_SEMI_AXES;
    let full = superellipsoid(
        Point::new(cx, cy, cz),
        Point::new(ax, ay, az),
        FOOT_EXPONENT,
        FOOT_RINGS,
        FOOT_SEGMENTS,
    );
    let foot = decimate(&full, FOOT_VERTICES).unwrap();
    let h = hausdorff_distance(&full, &foot, 4) / full.bbox_diagonal();
    println!(
        "foot: {} -> {} vertices, hausdorff {:.3} of diagonal",
        full.vertex_count(),
        foot.vertex_count(),
        h
    );
    write(&root.join("meshes/foot_full.obj"), &full.to_obj_string());
    write(&root.join("meshes/foot_left.obj"), &foot.to_obj_string());
    write(&root.join("meshes/foot_right.obj"), &foot.mirrored_y().to_obj_string());

    let band = synth_reference(&SynthBand::default()).unwrap();
    write(&root.join("bands/synthetic_band.csv"), &band.to_csv_string());

    // Four left trials around the band mean and a single right trial.
    let scales = [0.96, 1.0, 1.04, 1.0];
    let shifts = [0.0, 15.0, -15.0, 0.0];
    let mut trials = String::from("gait_pct,left_1,left_2,left_3,left_4,right_1\n");
    for g in 0..GRID {
        let _ = write!(trials, "{g}");
        for (s, d) in scales.iter().zip(shifts) {
            let v = if band.mean[g] > 0.0 {
                (s * band.mean[g] + d).max(0.0)
            } else {
                0.0
            };
            let _ = write!(trials, ",{v}");
        }
        let _ = writeln!(trials, ",{}", band.mean[g]);
    }
    write(&root.join("fixtures/band_trials.csv"), &trials);

    for (name, values) in [
        ("em_values_e.csv", [0.67, 0.63, 0.61, 0.60]),
        ("em_values_sk.csv", [0.58, 0.56, 0.54, 0.55]),
    ] {
        let mut text = String::from("cycle,em\n");
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(text, "{},{v}", i + 1);
        }
        write(&root.join("fixtures").join(name), &text);
    }
}
