//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::time::Instant;

use geoform::control::PredictionMode;
use geoform::dmd::{batch_fit, DmdState, SnapshotPair};
use geoform::formation::{build_leader, build_reference, FormationSpec, Side};
use geoform::geometry::{
    christoffel_at, christoffel_fd, shoot_geodesic, ChartPoint, Domain, GeodesicState, SurfaceSpec, TangentVector,
};
use geoform::harness::{compare_modes, default_seeds, run_scenario, simulate_to_dir, ScenarioConfig, SurfaceChoice, Track};
use geoform::linalg::Matrix;
use geoform::sensors::{CameraModel, RelativePose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: f64 = 0.001;
const C: [f64; 2] = [89.0, 89.0];

// Independent model of the default paraboloid, written out by hand.
fn grad(q: [f64; 2]) -> [f64; 2] {
    [2.0 * A * (q[0] - C[0]), 2.0 * A * (q[1] - C[1])]
}

fn metric(q: [f64; 2]) -> [[f64; 2]; 2] {
    let f = grad(q);
    [[1.0 + f[0] * f[0], f[0] * f[1]], [f[0] * f[1], 1.0 + f[1] * f[1]]]
}

fn g_inner(q: [f64; 2], u: [f64; 2], v: [f64; 2]) -> f64 {
    let g = metric(q);
    u[0] * (g[0][0] * v[0] + g[0][1] * v[1]) + u[1] * (g[1][0] * v[0] + g[1][1] * v[1])
}

fn accel(q: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    // Γᵏᵢⱼ vⁱvʲ = ∂ₖF (vᵀ H v) / (1 + |∇F|²), H = 2a I
    let f = grad(q);
    let quad = 2.0 * A * (v[0] * v[0] + v[1] * v[1]);
    let den = 1.0 + f[0] * f[0] + f[1] * f[1];
    [-f[0] * quad / den, -f[1] * quad / den]
}

fn rk4(q: [f64; 2], v: [f64; 2], h: f64) -> ([f64; 2], [f64; 2]) {
    let add = |a: [f64; 2], b: [f64; 2], k: f64| [a[0] + k * b[0], a[1] + k * b[1]];
    let k1q = v;
    let k1v = accel(q, v);
    let k2q = add(v, k1v, h / 2.0);
    let k2v = accel(add(q, k1q, h / 2.0), k2q);
    let k3q = add(v, k2v, h / 2.0);
    let k3v = accel(add(q, k2q, h / 2.0), k3q);
    let k4q = add(v, k3v, h);
    let k4v = accel(add(q, k3q, h), k4q);
    let q2 = [
        q[0] + h / 6.0 * (k1q[0] + 2.0 * k2q[0] + 2.0 * k3q[0] + k4q[0]),
        q[1] + h / 6.0 * (k1q[1] + 2.0 * k2q[1] + 2.0 * k3q[1] + k4q[1]),
    ];
    let v2 = [
        v[0] + h / 6.0 * (k1v[0] + 2.0 * k2v[0] + 2.0 * k3v[0] + k4v[0]),
        v[1] + h / 6.0 * (k1v[1] + 2.0 * k2v[1] + 2.0 * k3v[1] + k4v[1]),
    ];
    (q2, v2)
}

/// Arc length along the g-orthogonal geodesic from `q` (heading `v`) at which
/// `target` is reached, plus the chart miss distance.
fn remeasure(q: [f64; 2], v: [f64; 2], side: Side, target: [f64; 2]) -> (f64, f64) {
    // Orthogonal direction found by rotating in the chart and Gram–Schmidt in g.
    let sign = if side == Side::Left { 1.0 } else { -1.0 };
    let mut w = [-sign * v[1], sign * v[0]];
    let k = g_inner(q, w, v) / g_inner(q, v, v);
    w = [w[0] - k * v[0], w[1] - k * v[1]];
    let n = g_inner(q, w, w).sqrt();
    let (mut p, mut u) = (q, [w[0] / n, w[1] / n]);
    let h = 0.005;
    let mut s = 0.0;
    let mut best = (f64::INFINITY, 0.0, p, u);
    for _ in 0..10_000 {
        let d = ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2)).sqrt();
        if d < best.0 {
            best = (d, s, p, u);
        } else if d > best.0 + 1.0 {
            break;
        }
        (p, u) = rk4(p, u, h);
        s += h;
    }
    let (_, s0, p0, u0) = best;
    let r = [target[0] - p0[0], target[1] - p0[1]];
    let t = g_inner(p0, r, u0) / g_inner(p0, u0, u0);
    let foot = [p0[0] + t * u0[0], p0[1] + t * u0[1]];
    let miss = ((foot[0] - target[0]).powi(2) + (foot[1] - target[1]).powi(2)).sqrt();
    (s0 + t, miss)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn crit1() -> Outcome {
    let s = SurfaceSpec::<f64>::default_paraboloid();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = ChartPoint::new(rng.random_range(0.0..178.0), rng.random_range(0.0..178.0));
        let fd = christoffel_fd(&s, &p, 1e-5).unwrap();
        worst = worst.max(christoffel_at(&s, &p).max_abs_diff(&fd));
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome { pass: worst < 1e-6 && secs < 1.0, detail: format!("max |Γ − Γ_fd| = {worst:.2e}, {secs:.3} s") }
}

fn crit2() -> Outcome {
    let s = SurfaceSpec::<f64>::default_paraboloid();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut speed_drift, mut j_drift): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let q = [rng.random_range(40.0..138.0), rng.random_range(40.0..138.0)];
        let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let v0 = [ang.cos(), ang.sin()];
        let start = GeodesicState::new(ChartPoint::new(q[0], q[1]), TangentVector::new(v0[0], v0[1]));
        let end = shoot_geodesic(&s, &start, 100.0, 0.01).unwrap().state;
        let n0 = g_inner(q, v0, v0).sqrt();
        let u0 = [v0[0] / n0, v0[1] / n0];
        let (q1, u1) = (end.point.q, end.velocity.c);
        speed_drift = speed_drift.max((g_inner(q1, u1, u1) - 1.0).abs());
        // Rotational Killing field about the paraboloid axis.
        let kf = |q: [f64; 2]| [-(q[1] - C[1]), q[0] - C[0]];
        let (j0, j1) = (g_inner(q, kf(q), u0), g_inner(q1, kf(q1), u1));
        j_drift = j_drift.max((j1 - j0).abs());
    }
    Outcome {
        pass: speed_drift < 1e-8 && j_drift < 1e-7,
        detail: format!("max speed drift {speed_drift:.2e}, max J drift {j_drift:.2e}"),
    }
}

fn crit3() -> Outcome {
    let s = SurfaceSpec::<f64>::default_paraboloid();
    let mut worst_len: f64 = 0.0;
    let mut worst_miss: f64 = 0.0;
    for track in [Track::One, Track::Two] {
        let cfg = ScenarioConfig::for_track(track);
        let start = ChartPoint::new(cfg.leader_start[0], cfg.leader_start[1]);
        let heading = TangentVector::new(cfg.leader_heading[0], cfg.leader_heading[1]);
        let leader = build_leader(&s, start, heading, cfg.steps, 5.0, 0.01).unwrap();
        let reference = build_reference(&s, &leader, &cfg.formation, 0.01).unwrap();
        for (st, r) in leader.states.iter().zip(reference.follower(1).unwrap()) {
            let (len, miss) = remeasure(st.point.q, st.velocity.c, cfg.formation.side, r.q);
            worst_len = worst_len.max((len - 32.0).abs());
            worst_miss = worst_miss.max(miss);
        }
    }

    let flat = SurfaceSpec::<f64>::flat(5.0, Domain::new([0.0, 0.0], [178.0, 178.0])).unwrap();
    let mut worst_flat: f64 = 0.0;
    for (heading, side) in [([0.0, 1.0], Side::Right), ([3.0, 4.0], Side::Left), ([-1.0, 1.0], Side::Right)] {
        let leader = build_leader(&flat, ChartPoint::new(89.0, 40.0), TangentVector::new(heading[0], heading[1]), 10, 5.0, 0.01).unwrap();
        let spec = FormationSpec::new(32.0, side, 1).unwrap();
        let reference = build_reference(&flat, &leader, &spec, 0.01).unwrap();
        let n = (heading[0] * heading[0] + heading[1] * heading[1]).sqrt();
        let sgn = if side == Side::Left { 1.0 } else { -1.0 };
        let off = [-sgn * heading[1] / n * 32.0, sgn * heading[0] / n * 32.0];
        for (st, r) in leader.states.iter().zip(reference.follower(1).unwrap()) {
            let e = [st.point.q[0] + off[0] - r.q[0], st.point.q[1] + off[1] - r.q[1]];
            worst_flat = worst_flat.max(e[0].abs().max(e[1].abs()));
        }
    }
    Outcome {
        pass: worst_len <= 0.01 && worst_miss <= 0.01 && worst_flat < 1e-9,
        detail: format!(
            "max |len − 32| = {worst_len:.2e} cm (miss {worst_miss:.2e}), flat offset error {worst_flat:.2e}"
        ),
    }
}

fn cols(v: &[[f64; 2]]) -> Matrix<f64> {
    Matrix::from_columns(&v.iter().map(|c| c.to_vec()).collect::<Vec<_>>())
}

fn crit4() -> Outcome {
    let x = [[1.0, 1.0], [0.9, 1.1], [0.81, 1.21], [0.729, 1.331]];
    let t = batch_fit(&cols(&x[..3]), &cols(&x[1..]), 0.0).unwrap();
    let recover = (&t - &Matrix::diag(&[0.9, 1.1])).max_abs();

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let xs: Vec<[f64; 2]> = (0..204).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let ridge = 1e-6;
    let mut st = DmdState::init_online(&cols(&xs[..3]), &cols(&xs[1..4]), ridge).unwrap();
    let mut gap: f64 = 0.0;
    for k in 3..203 {
        st = st.update(&SnapshotPair::new(xs[k].to_vec(), xs[k + 1].to_vec())).unwrap();
        let batch = batch_fit(&cols(&xs[..=k]), &cols(&xs[1..=k + 1]), ridge).unwrap();
        gap = gap.max((&st.t - &batch).frobenius_norm());
    }
    let a = cols(&xs[..203]);
    let gram = &(&a * &a.transpose()) + &Matrix::identity(2).scale(ridge);
    let pg = (&(&st.p * &gram) - &Matrix::identity(2)).max_abs();
    Outcome {
        pass: recover < 1e-10 && gap < 1e-9 && pg < 1e-8 && st.count == 203,
        detail: format!("recovery {recover:.2e}, online/batch gap {gap:.2e} over 200 updates, |P·Gram − I| {pg:.2e}"),
    }
}

fn crit5() -> Outcome {
    let cam = CameraModel::default().noise_free();
    let at = |du: f64, dv: f64| cam.ideal_center_x(&RelativePose::new(du, dv, 0.0), 0.0);
    let (hi, lo) = (at(32.0, 3.0), at(32.0, -3.0));
    let anchors = hi == 160.0 && lo == 110.0;
    let pan_monotone = [29.0, 32.0, 35.0].iter().all(|&du| {
        (-100..100).map(|i| at(du, i as f64 * 0.1)).collect::<Vec<_>>().windows(2).all(|w| w[1] > w[0])
    });
    let side_monotone = (240..450)
        .map(|i| cam.ideal_side(i as f64 * 0.1))
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1] < w[0]);
    Outcome {
        pass: anchors && pan_monotone && side_monotone,
        detail: format!("center_x(32, ±3) = {hi} / {lo} px, pan monotone {pan_monotone}, side monotone {side_monotone}"),
    }
}

fn crit6() -> Outcome {
    let mut worst_err: f64 = 0.0;
    let mut worst_corr: f64 = 0.0;
    for track in [Track::One, Track::Two] {
        for mode in [PredictionMode::Dmd, PredictionMode::NonDmd] {
            let mut cfg = ScenarioConfig::for_track(track).noise_free().with_mode(mode);
            cfg.surface.kind = SurfaceChoice::Flat;
            let out = run_scenario(&cfg).unwrap();
            worst_corr = worst_corr.max(out.summary.post_collection_correction.abs());
            worst_err = worst_err.max(out.summary.max_formation_error);
        }
    }
    Outcome {
        pass: worst_corr == 0.0 && worst_err < 1e-6,
        detail: format!("post-collection correction {worst_corr}, max formation error {worst_err:.2e} cm"),
    }
}

fn crit7() -> Outcome {
    let t0 = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (track, steps) in [(Track::One, 15), (Track::Two, 20)] {
        let cfg = ScenarioConfig::for_track(track);
        let report = compare_modes(&cfg, &default_seeds(&cfg, 10)).unwrap();
        // Completion counted on the DMD runs.
        let clean = report.seeds.iter().filter(|s| s.dmd_lost_steps == 0).count();
        ok &= clean >= 9 && cfg.steps == steps;
        let pooled = report.pooled_ratio.map_or("undefined".to_string(), |r| format!("{r:.3}"));
        parts.push(format!(
            "track {}: DMD runs without a lost step {clean}/10, mean ratio {:.3} (pooled {pooled})",
            track.as_str(),
            report.mean_ratio
        ));
        if track == Track::Two {
            ok &= report.mean_ratio < 1.0;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    Outcome { pass: ok, detail: format!("{}, {secs:.1} s", parts.join("; ")) }
}

fn crit8() -> Outcome {
    let cfg = ScenarioConfig::for_track(Track::Two).with_seed(7);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        simulate_to_dir(&cfg, d.path()).unwrap();
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let same = ["steps.csv", "metrics.json"].iter().all(|f| read(&dirs[0], f) == read(&dirs[1], f));
    Outcome { pass: same, detail: format!("byte-identical outputs: {same}") }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("geometry oracle", crit1),
        ("geodesic conservation", crit2),
        ("formation constraint", crit3),
        ("DMD exactness", crit4),
        ("camera calibration anchors", crit5),
        ("noise-free closed loop", crit6),
        ("scenario reproduction", crit7),
        ("determinism", crit8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {} ({name}): {} - {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
