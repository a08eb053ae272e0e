//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails or overruns its time budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix4, Rotation3, RowVector4, SMatrix, Unit, Vector3};
use rand::{Rng, SeedableRng};
use serde_json::Value;
use softgait_core::gaitlab::{aggregate_em, em, format_fixed, lfm_fit, LfmFit, ReferenceBand, GRID};
use softgait_core::mesh::{
    box_mesh, build_lattice, decimate, icosphere, load_mesh, Point, SurfaceMesh, VolumetricLattice,
    DEFAULT_TISSUE_DENSITY,
};
use softgait_core::sim::step_soft_body;
use softgait_core::softbody::{
    calibrate, fem_elastic_forces, static_deflection, CalibrationSetup, FemMaterial, LoadCase, Material, SoftBody,
    SpringMaterial,
};

type Check = Result<String, String>;

/// Name, time budget in seconds, and check.
type Criterion = (&'static str, u64, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn scenario(name: &str) -> String {
    assets().join("scenarios").join(name).to_string_lossy().into_owned()
}

fn softgait(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softgait"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn document(out: &Output) -> Result<Value, String> {
    serde_json::from_slice(&out.stdout)
        .map_err(|e| format!("bad JSON ({e}); stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates a scenario into `dir` and returns (exit code, manifest).
fn simulate(name: &str, dt: Option<&str>, dir: &Path) -> Result<(Option<i32>, Value), String> {
    let scen = scenario(name);
    let mut args = vec!["simulate", "--scenario", &scen, "--out", s(dir)];
    if let Some(dt) = dt {
        args.extend(["--dt", dt]);
    }
    let out = softgait(&args);
    Ok((out.status.code(), document(&out)?))
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

// 1

fn em_oracle() -> Check {
    let mean: Vec<f64> = (0..GRID).map(|g| 100.0 + 50.0 * (g as f64 / 16.0).sin()).collect();
    let sd: Vec<f64> = (0..GRID).map(|g| 10.0 + 0.1 * g as f64).collect();
    let band = ReferenceBand {
        mean: mean.clone(),
        sd: sd.clone(),
        units: "N".into(),
    };
    let outside: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + 2.0 * s).collect();
    let half: Vec<f64> = (0..GRID).map(|g| if g < 51 { mean[g] } else { outside[g] }).collect();
    let count = |sim: &[f64]| (0..GRID).filter(|&g| (sim[g] - mean[g]).abs() <= sd[g]).count();
    ensure!(count(&half) == 51, "oracle count {}", count(&half));

    ensure!(em(&mean, &band) == 1.0, "mean curve {}", em(&mean, &band));
    ensure!(em(&outside, &band) == 0.0, "outside curve {}", em(&outside, &band));
    ensure!(em(&half, &band) == 51.0 / 101.0, "half-in {}", em(&half, &band));

    let e = aggregate_em(&[0.67, 0.63, 0.61, 0.60]);
    ensure!((e.mean - 0.6275).abs() < 1e-15, "E mean {}", e.mean);
    let e_text = format_fixed(e.mean, 3);
    let sk_text = format_fixed(aggregate_em(&[0.58, 0.56, 0.54, 0.55]).mean, 3);
    ensure!(e_text == "0.628" && sk_text == "0.558", "rendered {e_text} / {sk_text}");
    Ok(format!("EM 1, 0, 51/101 exact; E {e_text}, SK {sk_text}"))
}

// 2

/// Sum of squared residuals of `sim - (a1 ref + a0)`.
fn sse(sim: &[f64], reference: &[f64], a1: f64, a0: f64) -> f64 {
    sim.iter().zip(reference).map(|(y, x)| (y - a1 * x - a0).powi(2)).sum()
}

/// Exhaustive search on a grid, then again on a finer grid around the winner.
fn grid_search(sim: &[f64], reference: &[f64]) -> (f64, f64, f64) {
    let search = |c1: f64, c0: f64, half: f64, step: f64| {
        let n = (2.0 * half / step).round() as i64;
        let mut best = (f64::INFINITY, c1, c0);
        for i in 0..=n {
            let a1 = c1 - half + i as f64 * step;
            for j in 0..=n {
                let a0 = c0 - half + j as f64 * step;
                let e = sse(sim, reference, a1, a0);
                if e < best.0 {
                    best = (e, a1, a0);
                }
            }
        }
        best
    };
    let coarse = search(0.0, 0.0, 3.0, 0.01);
    let fine = search(coarse.1, coarse.2, 0.02, 1e-4);
    (fine.1, fine.2, 1e-4)
}

fn lfm_oracle() -> Check {
    let reference: Vec<f64> = (0..GRID)
        .map(|g| (g as f64 * 0.07).sin() + 0.3 * (g as f64 * 0.19).cos())
        .collect();
    let same = lfm_fit(&reference, &reference).map_err(|e| e.to_string())?;
    ensure!(
        same == LfmFit {
            a1: 1.0,
            a0: 0.0,
            r2: 1.0
        },
        "identical curves gave {same:?}"
    );

    let scaled: Vec<f64> = reference.iter().map(|x| 2.0 * x + 3.0).collect();
    let fit = lfm_fit(&scaled, &reference).map_err(|e| e.to_string())?;
    ensure!(
        (fit.a1 - 2.0).abs() < 1e-9 && (fit.a0 - 3.0).abs() < 1e-9 && (fit.r2 - 1.0).abs() < 1e-9,
        "affine curves gave {fit:?}"
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for fixture in 0..5 {
        let x: Vec<f64> = (0..GRID).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a1, a0) = (rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = x.iter().map(|x| a1 * x + a0 + rng.gen_range(-0.2..0.2)).collect();
        let fit = lfm_fit(&y, &x).map_err(|e| e.to_string())?;
        let (g1, g0, step) = grid_search(&y, &x);
        let gap = (fit.a1 - g1).abs().max((fit.a0 - g0).abs());
        ensure!(gap <= step, "fixture {fixture}: closed form {fit:?}, grid ({g1}, {g0})");
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let r2 = 1.0 - sse(&y, &x, fit.a1, fit.a0) / sst;
        ensure!((fit.r2 - r2).abs() < 1e-9, "fixture {fixture}: R² {} vs {r2}", fit.r2);
        worst = worst.max(gap);
    }
    Ok(format!(
        "(1,0,1) exact, (2,3,1) to 1e-9, grid gap {worst:.1e} on 5 fixtures"
    ))
}

// 3

fn sphere(material: Material) -> SoftBody {
    let mesh = icosphere(1).transformed(|p| p * 0.1);
    SoftBody::new(build_lattice(&mesh, 1000.0).unwrap(), material).unwrap()
}

fn spring(k: f64, c: f64) -> Material {
    Material::Spring(SpringMaterial::new(k, c).unwrap())
}

fn free_fall() -> Check {
    let mut worst: f64 = 0.0;
    for material in [
        spring(5000.0, 100.0),
        Material::Fem(FemMaterial::from_kpa(500.0, 0.3).unwrap()),
    ] {
        let mut body = sphere(material);
        for _ in 0..1000 {
            step_soft_body(&mut body, None, 9.81, 1e-3).map_err(|e| e.to_string())?;
        }
        for v in &body.velocities {
            worst = worst.max((v.z + 9.81).abs()).max(v.x.abs()).max(v.y.abs());
        }
    }
    ensure!(worst < 1e-9, "free fall velocity error {worst}");
    Ok(format!("free fall error {worst:.1e}"))
}

fn spring_period() -> Check {
    let lattice = VolumetricLattice {
        nodes: vec![Point::zeros(), Point::new(0.0, 0.0, -1.0)],
        edges: vec![(0, 1, 1.0)],
        tetrahedra: vec![],
        node_masses: vec![2.0, 2.0],
        surface_faces: vec![],
    };
    let (m, k) = (2.0, 300.0);
    let mut body = SoftBody::new(lattice, spring(k, 0.0)).map_err(|e| e.to_string())?;
    body.set_pinned(&[0]).map_err(|e| e.to_string())?;
    body.positions[1].z = -1.02;
    let dt = 1e-4;
    let mut crossings = Vec::new();
    let mut prev = -0.02;
    for step in 1..=30_000 {
        step_soft_body(&mut body, None, 0.0, dt).map_err(|e| e.to_string())?;
        let x = body.positions[1].z + 1.0;
        if prev < 0.0 && x >= 0.0 {
            crossings.push(dt * (step as f64 - 1.0 - prev / (x - prev)));
        }
        prev = x;
    }
    ensure!(crossings.len() >= 3, "only {} crossings", crossings.len());
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let exact = 2.0 * std::f64::consts::PI * (m / k).sqrt();
    let rel = (period - exact).abs() / exact;
    ensure!(rel < 0.01, "period {period} vs {exact}");
    Ok(format!("period error {:.2}%", 100.0 * rel))
}

fn energy_drift() -> Check {
    let mut body = sphere(spring(5000.0, 0.0));
    body.transform_state(|p| Point::new(p.x * 1.05, p.y, p.z * 0.97));
    let mut energy = Vec::new();
    for _ in 0..1000 {
        step_soft_body(&mut body, None, 0.0, 1e-3).map_err(|e| e.to_string())?;
        energy.push(body.total_energy(0.0).map_err(|e| e.to_string())?);
    }
    // symplectic Euler oscillates around a shadow energy; compare window means
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let drift = (mean(&energy[900..]) - mean(&energy[..100])).abs() / mean(&energy[..100]);
    ensure!(drift < 0.05, "energy drift {drift}");
    Ok(format!("drift {:.2}%", 100.0 * drift))
}

fn rotation_invariance() -> Check {
    let lattice = build_lattice(&box_mesh(Point::zeros(), Point::new(0.25, 0.1, 0.07)), 1000.0).unwrap();
    let material = Material::Fem(FemMaterial::from_kpa(57.0, 0.3).unwrap());
    let mut rotated = SoftBody::new(lattice.clone(), material).map_err(|e| e.to_string())?;
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.5)), 1.2);
    rotated.transform_state(|p| rot * p);
    let mut stretched = SoftBody::new(lattice, material).map_err(|e| e.to_string())?;
    stretched.transform_state(|p| Point::new(p.x * 1.01, p.y, p.z));
    let norm = |b: &SoftBody| -> Result<f64, String> {
        Ok(fem_elastic_forces(b)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|v| v.norm())
            .sum())
    };
    let (got, scale) = (norm(&rotated)?, norm(&stretched)?);
    ensure!(got <= 1e-6 * scale, "rigid rotation force {got} vs 1% stretch {scale}");
    Ok(format!("rotation force {:.1e} of stretch scale", got / scale))
}

/// Small-strain stiffness from shape-function gradients and the isotropic
/// elasticity matrix.
fn oracle_stiffness(lattice: &VolumetricLattice, e: f64, nu: f64) -> DMatrix<f64> {
    let n = lattice.node_count();
    let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = if i == j { c * (1.0 - nu) } else { c * nu };
        }
        d[(i + 3, i + 3)] = c * (1.0 - 2.0 * nu) / 2.0;
    }
    let mut k = DMatrix::zeros(3 * n, 3 * n);
    for tet in &lattice.tetrahedra {
        let mut a = Matrix4::zeros();
        for (r, &i) in tet.iter().enumerate() {
            let p = lattice.nodes[i];
            a.set_row(r, &RowVector4::new(1.0, p.x, p.y, p.z));
        }
        let vol = a.determinant().abs() / 6.0;
        let coef = a.try_inverse().unwrap();
        let mut b = SMatrix::<f64, 6, 12>::zeros();
        for r in 0..4 {
            let (gx, gy, gz) = (coef[(1, r)], coef[(2, r)], coef[(3, r)]);
            b[(0, 3 * r)] = gx;
            b[(1, 3 * r + 1)] = gy;
            b[(2, 3 * r + 2)] = gz;
            b[(3, 3 * r)] = gy;
            b[(3, 3 * r + 1)] = gx;
            b[(4, 3 * r + 1)] = gz;
            b[(4, 3 * r + 2)] = gy;
            b[(5, 3 * r)] = gz;
            b[(5, 3 * r + 2)] = gx;
        }
        let ke = b.transpose() * d * b * vol;
        for (p, &i) in tet.iter().enumerate() {
            for (q, &j) in tet.iter().enumerate() {
                for r in 0..3 {
                    for s in 0..3 {
                        k[(3 * i + r, 3 * j + s)] += ke[(3 * p + r, 3 * q + s)];
                    }
                }
            }
        }
    }
    k
}

fn uniaxial_stretch() -> Check {
    let lattice = build_lattice(&box_mesh(Point::zeros(), Point::repeat(1.0)), 1000.0).unwrap();
    let n = lattice.node_count();
    let (young, strain) = (57e3, 0.01);
    let k = oracle_stiffness(&lattice, young, 0.3);
    // z prescribed on both faces, plus enough x/y to remove rigid motion
    let mut prescribed = vec![None; 3 * n];
    for (i, p) in lattice.nodes.iter().enumerate() {
        if p.z == 0.0 {
            prescribed[3 * i + 2] = Some(0.0);
        } else if p.z == 1.0 {
            prescribed[3 * i + 2] = Some(strain);
        }
        if p.norm() == 0.0 {
            prescribed[3 * i] = Some(0.0);
            prescribed[3 * i + 1] = Some(0.0);
        }
        if *p == Point::new(1.0, 0.0, 0.0) {
            prescribed[3 * i + 1] = Some(0.0);
        }
    }
    let free: Vec<usize> = (0..3 * n).filter(|&d| prescribed[d].is_none()).collect();
    let fixed: Vec<usize> = (0..3 * n).filter(|&d| prescribed[d].is_some()).collect();
    let kff = DMatrix::from_fn(free.len(), free.len(), |r, c| k[(free[r], free[c])]);
    let kfp = DMatrix::from_fn(free.len(), fixed.len(), |r, c| k[(free[r], fixed[c])]);
    let up = DVector::from_iterator(fixed.len(), fixed.iter().map(|&d| prescribed[d].unwrap()));
    let uf = kff.lu().solve(&(-(kfp * &up))).ok_or("singular oracle")?;
    let mut u = DVector::zeros(3 * n);
    for (r, &d) in free.iter().enumerate() {
        u[d] = uf[r];
    }
    for (r, &d) in fixed.iter().enumerate() {
        u[d] = up[r];
    }
    let reaction = &k * &u;
    let top: Vec<usize> = (0..n).filter(|&i| lattice.nodes[i].z == 1.0).collect();
    let oracle: f64 = top.iter().map(|&i| reaction[3 * i + 2]).sum();
    let sigma = young * strain;
    ensure!(
        (oracle - sigma).abs() < 0.05 * sigma,
        "oracle pull {oracle} vs E·ε {sigma}"
    );

    let mut body =
        SoftBody::new(lattice, Material::Fem(FemMaterial::from_kpa(57.0, 0.3).unwrap())).map_err(|e| e.to_string())?;
    for i in 0..n {
        body.positions[i] += Point::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
    }
    let f = fem_elastic_forces(&body).map_err(|e| e.to_string())?;
    let pull = -top.iter().map(|&i| f[i].z).sum::<f64>();
    ensure!(
        (pull - sigma).abs() < 0.05 * sigma,
        "corotational pull {pull} vs E·ε {sigma}"
    );
    ensure!(
        (pull - oracle).abs() < 0.05 * oracle,
        "corotational pull {pull} vs oracle {oracle}"
    );
    Ok(format!("stress {pull:.1} Pa vs E·ε {sigma:.1} (oracle {oracle:.1})"))
}

fn physics() -> Check {
    let parts = [
        free_fall()?,
        spring_period()?,
        energy_drift()?,
        rotation_invariance()?,
        uniaxial_stretch()?,
    ];
    Ok(parts.join("; "))
}

// 4

fn calibration() -> Check {
    let mesh = load_mesh(&assets().join("meshes/foot_left.obj")).map_err(|e| e.to_string())?;
    let lattice = build_lattice(&mesh, DEFAULT_TISSUE_DENSITY).map_err(|e| e.to_string())?;
    let load = 100.0;
    let case = LoadCase::bands(&lattice, load, CalibrationSetup::default().band).map_err(|e| e.to_string())?;
    let mut ks = Vec::new();
    for kpa in [57.0, 110.0, 500.0] {
        let fem = FemMaterial::from_kpa(kpa, 0.3).map_err(|e| e.to_string())?;
        let cal = calibrate(&fem, &lattice, load).map_err(|e| e.to_string())?;
        let continuum = static_deflection(&SoftBody::new(lattice.clone(), Material::Fem(fem)).unwrap(), &case)
            .map_err(|e| e.to_string())?;
        let springs = static_deflection(
            &SoftBody::new(lattice.clone(), Material::Spring(cal.material)).unwrap(),
            &case,
        )
        .map_err(|e| e.to_string())?;
        let rel = (springs - continuum).abs() / continuum;
        ensure!(
            rel < 0.10,
            "{kpa} kPa: spring deflection {springs} vs continuum {continuum}"
        );
        ks.push(cal.material.stiffness);
    }
    ensure!(ks.windows(2).all(|w| w[0] < w[1]), "stiffness not increasing: {ks:?}");
    ensure!(
        (600.0..=6000.0).contains(&ks[0]),
        "57 kPa stiffness {} outside [600, 6000]",
        ks[0]
    );
    Ok(format!("k = {:.0} / {:.0} / {:.0} N/m", ks[0], ks[1], ks[2]))
}

// 5

fn stiffness_trend() -> Check {
    let dir = tempdir();
    let band = assets().join("bands/synthetic_band.csv");
    let mut rows = Vec::new();
    for (label, file) in [("A", "a.toml"), ("B", "b.toml"), ("E", "e.toml")] {
        let out = dir.path().join(label);
        let (code, manifest) = simulate(file, None, &out)?;
        ensure!(
            code == Some(0) && manifest["stable"] == true,
            "{label} run failed: {manifest}"
        );
        let events = std::fs::read_to_string(out.join("events.csv")).map_err(|e| e.to_string())?;
        let skeleton = events
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(2) == Some("skeleton"))
            .count();
        let grf = out.join("grf.csv");
        let analysis = softgait(&["analyze", "--grf", s(&grf), "--band", s(&band), "--preset", label]);
        ensure!(
            analysis.status.code() == Some(0),
            "{label} analysis exit {:?}",
            analysis.status.code()
        );
        let doc = document(&analysis)?;
        let cycles = doc["per_cycle"].as_array().map_or(0, |a| a.len());
        ensure!(cycles >= 4, "{label}: {cycles} cycles");
        ensure!(doc["offset_applied"] == true, "{label}: offset not applied");
        rows.push((label, skeleton, doc["mean"].as_f64().unwrap()));
    }
    let summary = rows
        .iter()
        .map(|(l, n, e)| format!("{l} events {n} EM {e:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure!(
        rows.windows(2).all(|w| w[0].1 >= w[1].1),
        "skeleton events increase: {summary}"
    );
    ensure!(rows.windows(2).all(|w| w[0].2 <= w[1].2), "EM decreases: {summary}");
    Ok(summary)
}

// 6

/// Step at which the continuum E run is expected to diverge.
const COARSE_DT: &str = "4e-3";

fn timestep_stability() -> Check {
    let dir = tempdir();
    let (code, fine) = simulate("e_fem.toml", Some("5e-4"), &dir.path().join("fine"))?;
    ensure!(
        code == Some(0) && fine["stable"] == true,
        "dt 5e-4 run: exit {code:?}, {fine}"
    );
    let coarse_dir = dir.path().join("coarse");
    let (code, coarse) = simulate("e_fem.toml", Some(COARSE_DT), &coarse_dir)?;
    ensure!(
        code == Some(2),
        "dt {COARSE_DT} run exit {code:?}, expected the physics-failure code"
    );
    ensure!(coarse["stable"] == false, "dt {COARSE_DT} run not flagged: {coarse}");
    ensure!(
        coarse_dir.join("grf.csv").exists(),
        "dt {COARSE_DT} run wrote no traces"
    );
    Ok(format!(
        "stable at 5e-4; dt {COARSE_DT} flagged at t = {} s ({})",
        coarse["failure_time"],
        coarse["failure"].as_str().unwrap_or("?")
    ))
}

// 7

fn joint_tracking() -> Check {
    let dir = tempdir();
    let (code, manifest) = simulate("e.toml", None, dir.path())?;
    ensure!(code == Some(0), "run failed: {manifest}");
    let d = |n: &str| dir.path().join(n);
    let out = softgait(&[
        "lfm",
        "--joints",
        s(&d("joints.csv")),
        "--reference",
        s(&d("reference.csv")),
        "--grf",
        s(&d("grf.csv")),
    ]);
    ensure!(out.status.code() == Some(0), "lfm exit {:?}", out.status.code());
    let doc = document(&out)?;
    ensure!(doc["cycles"] == 4, "cycles {}", doc["cycles"]);
    let mut worst_r2 = f64::INFINITY;
    let mut a1_range = (f64::INFINITY, f64::NEG_INFINITY);
    for j in doc["joints"].as_array().ok_or("no joints")? {
        let (r2, a1) = (j["r2"]["mean"].as_f64().unwrap(), j["a1"]["mean"].as_f64().unwrap());
        ensure!(
            r2 > 0.85 && (0.7..=1.3).contains(&a1),
            "{}: R² {r2}, a1 {a1}",
            j["joint"]
        );
        worst_r2 = worst_r2.min(r2);
        a1_range = (a1_range.0.min(a1), a1_range.1.max(a1));
    }
    Ok(format!(
        "min R² {worst_r2:.3}, a1 in [{:.3}, {:.3}]",
        a1_range.0, a1_range.1
    ))
}

// 8

/// Points on each face at barycentric steps of 1/`m`.
fn surface_samples(mesh: &SurfaceMesh, m: usize) -> Vec<Point> {
    let mut out = Vec::new();
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i]);
        for i in 0..=m {
            for j in 0..=m - i {
                let (u, v) = (i as f64 / m as f64, j as f64 / m as f64);
                out.push(a + u * (b - a) + v * (c - a));
            }
        }
    }
    out
}

/// Distance from `p` to the nearest of a dense set of surface samples.
fn brute_distance(p: &Point, samples: &[Point]) -> f64 {
    samples.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
}

fn brute_hausdorff(a: &SurfaceMesh, b: &SurfaceMesh) -> f64 {
    let (sa, sb) = (surface_samples(a, 6), surface_samples(b, 24));
    let (sa2, sb2) = (surface_samples(a, 24), surface_samples(b, 6));
    let ab = sa.iter().map(|p| brute_distance(p, &sb)).fold(0.0, f64::max);
    let ba = sb2.iter().map(|p| brute_distance(p, &sa2)).fold(0.0, f64::max);
    ab.max(ba)
}

fn mesh_pipeline() -> Check {
    let full = load_mesh(&assets().join("meshes/foot_full.obj")).map_err(|e| e.to_string())?;
    let small = decimate(&full, 15).map_err(|e| e.to_string())?;
    ensure!(small.vertex_count() == 15, "{} vertices", small.vertex_count());
    let h = brute_hausdorff(&full, &small) / full.bbox_diagonal();
    ensure!(h < 0.10, "Hausdorff {h:.3} of the diagonal");

    let cube = build_lattice(&box_mesh(Point::zeros(), Point::repeat(1.0)), 1000.0).map_err(|e| e.to_string())?;
    let mass_err = (cube.total_mass() - 1000.0).abs() / 1000.0;
    ensure!(mass_err < 0.01, "unit cube mass {}", cube.total_mass());
    Ok(format!(
        "{} -> 15 vertices, Hausdorff {:.1}% of diagonal, cube mass error {:.1e}",
        full.vertex_count(),
        100.0 * h,
        mass_err
    ))
}

// 9

fn determinism() -> Check {
    let dir = tempdir();
    let mut manifests = Vec::new();
    for run in ["first", "second"] {
        let (code, manifest) = simulate("e.toml", None, &dir.path().join(run))?;
        ensure!(code == Some(0), "{run} run failed: {manifest}");
        manifests.push(manifest);
    }
    let hash = |m: &Value, name: &str| -> Option<String> {
        m["outputs"].as_array()?.iter().find(|o| o["path"] == name)?["sha256"]
            .as_str()
            .map(String::from)
    };
    for name in ["grf.csv", "joints.csv"] {
        let (a, b) = (hash(&manifests[0], name), hash(&manifests[1], name));
        ensure!(a.is_some() && a == b, "{name} hashes differ: {a:?} vs {b:?}");
        let bytes = |run: &str| std::fs::read(dir.path().join(run).join(name)).unwrap();
        ensure!(bytes("first") == bytes("second"), "{name} bytes differ");
    }
    ensure!(
        manifests[0]["scenario_hash"] == manifests[1]["scenario_hash"],
        "scenario hashes differ"
    );
    Ok(format!("grf.csv {}", &hash(&manifests[0], "grf.csv").unwrap()[..16]))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("EM metric oracle", 1, em_oracle),
        ("LFM metric oracle", 5, lfm_oracle),
        ("physics unit checks", 30, physics),
        ("calibration consistency", 60, calibration),
        ("stiffness sweep trend", 300, stiffness_trend),
        ("timestep stability", 120, timestep_stability),
        ("joint tracking", 180, joint_tracking),
        ("mesh pipeline", 10, mesh_pipeline),
        ("determinism", 120, determinism),
    ];
    let mut failed = 0;
    for (n, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > Duration::from_secs(budget) => Err(format!("took {elapsed:.1?}, budget {budget} s")),
            other => other,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "criterion {} {status} {name} ({:.2} s): {detail}",
            n + 1,
            elapsed.as_secs_f64()
        );
        failed += result.is_err() as usize;
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
