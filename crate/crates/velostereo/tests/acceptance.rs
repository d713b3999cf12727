//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velostereo::experiment::{Detections, Outcome, Runner, Trial};
use velostereo::sweep::median;
use velostereo_core::geometry::Matrix3;
use velostereo_core::lidar::{discontinuity_filter, LidarPipelineConfig};
use velostereo_core::registration::{icp_refine, translation_ls, IcpConfig};
use velostereo_core::sim::{CameraSpec, LidarSpec, NoiseModel, SETTING_IDS};
use velostereo_core::{LidarFrame, Point3, Pose6, ReferencePoints, RigidTransform, Vector3};

const FRAMES: usize = 30;
const NOISELESS_E_T: f64 = 0.01;
const NOISELESS_E_R: f64 = 0.01;
const SETTING_TIME_LIMIT: Duration = Duration::from_secs(60);
const NOMINAL_E_T: f64 = 0.05;
const NOMINAL_E_R: f64 = 0.03;
const NOMINAL_SEEDS: [u64; 3] = [0, 1, 2];
const CONVERGENCE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const NOISE_SLACK: f64 = 0.10;
const HIGH_NOISE: f64 = 3.0;
const HIGH_NOISE_SETTINGS: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];
const TRANSLATION_ORACLE_TOL: f64 = 1e-12;
const PROCRUSTES_ORACLE_TOL: f64 = 1e-6;
const ORACLE_SETS: usize = 1000;
const SUITE_TIME_LIMIT: Duration = Duration::from_secs(300);
const PROPERTY_BINARIES: [&str; 3] = ["props_math", "props_pipeline", "props"];

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn print(v: &Verdict) {
    println!(
        "[{}] criterion {}: {}: {}",
        if v.pass { "PASS" } else { "FAIL" },
        v.id,
        v.name,
        v.detail
    );
}

#[derive(Default)]
struct DiscontinuityAudit {
    frames: usize,
    points: usize,
    mismatches: usize,
}

/// Per-point discontinuity recomputed from the raw ring ranges.
fn brute_discontinuity(ranges: &[f64], i: usize) -> f64 {
    let prev = if i > 0 { ranges[i - 1] - ranges[i] } else { 0.0 };
    let next = if i + 1 < ranges.len() { ranges[i + 1] - ranges[i] } else { 0.0 };
    prev.max(next).max(0.0)
}

fn audit_frame(frame: &LidarFrame, delta: f64, audit: &mut DiscontinuityAudit) {
    audit.frames += 1;
    let filtered = discontinuity_filter(frame, delta);
    for (ring, kept) in frame.rings.iter().zip(&filtered.rings) {
        let ranges: Vec<f64> = ring.iter().map(|p| p.position.coords.norm()).collect();
        let mut expected = Vec::new();
        for (i, p) in ring.iter().enumerate() {
            audit.points += 1;
            let d = brute_discontinuity(&ranges, i);
            if d != p.discontinuity {
                audit.mismatches += 1;
            }
            if d >= delta {
                expected.push(p.position);
            }
        }
        let got: Vec<Point3> = kept.iter().map(|p| p.position).collect();
        if got != expected {
            audit.mismatches += 1;
        }
    }
}

type Key = (u8, usize, u64, u64);

/// Detections per (setting, layers, noise factor bits, seed), computed once.
struct Lab {
    runner: Runner,
    detections: HashMap<Key, Detections>,
    camera: CameraSpec,
}

impl Lab {
    fn detections(&mut self, setting: u8, layers: usize, factor: f64, seed: u64) -> &Detections {
        let key = (setting, layers, factor.to_bits(), seed);
        if !self.detections.contains_key(&key) {
            let trial = Trial {
                setting,
                lidar: LidarSpec::from_layers(layers).unwrap(),
                camera: self.camera,
                noise: NoiseModel::with_factor(factor),
                seed,
                frames: FRAMES,
            };
            let d = self.runner.detect(&trial).expect("scene builds");
            self.detections.insert(key, d);
        }
        &self.detections[&key]
    }

    fn outcome(&mut self, setting: u8, layers: usize, factor: f64, seed: u64, n: usize) -> Outcome {
        self.detections(setting, layers, factor, seed).calibrate_prefix(n)
    }
}

fn errors_or_inf(o: &Outcome) -> (f64, f64) {
    o.errors.map(|e| (e.e_t, e.e_r)).unwrap_or((f64::INFINITY, f64::INFINITY))
}

fn medians(v: &[(f64, f64)]) -> (f64, f64) {
    let t: Vec<f64> = v.iter().map(|e| e.0).collect();
    let r: Vec<f64> = v.iter().map(|e| e.1).collect();
    (median(&t).unwrap(), median(&r).unwrap())
}

fn noiseless(lab: &mut Lab) -> Verdict {
    let mut worst = (0.0f64, 0.0f64);
    let mut slowest = Duration::ZERO;
    let mut failures = Vec::new();
    for &s in &SETTING_IDS {
        let start = Instant::now();
        let (e_t, e_r) = errors_or_inf(&lab.outcome(s, 16, 0.0, 0, FRAMES));
        slowest = slowest.max(start.elapsed());
        worst = (worst.0.max(e_t), worst.1.max(e_r));
        if !(e_t <= NOISELESS_E_T && e_r <= NOISELESS_E_R) {
            failures.push(s);
        }
    }
    Verdict {
        id: 1,
        name: "noiseless end-to-end",
        pass: failures.is_empty() && slowest <= SETTING_TIME_LIMIT,
        detail: format!(
            "max e_t {:.2e} m (<= {NOISELESS_E_T}), max e_r {:.2e} rad (<= {NOISELESS_E_R}), slowest setting {:.1} s (<= {} s), failing settings {failures:?}",
            worst.0,
            worst.1,
            slowest.as_secs_f64(),
            SETTING_TIME_LIMIT.as_secs()
        ),
    }
}

/// Nominal-noise medians over every setting and seed, plus the worst
/// per-setting median.
fn nominal(lab: &mut Lab, layers: usize) -> (bool, String) {
    let mut all = Vec::new();
    let mut worst_setting = (0.0f64, 0.0f64);
    for &s in &SETTING_IDS {
        let per: Vec<(f64, f64)> = NOMINAL_SEEDS
            .iter()
            .map(|&seed| errors_or_inf(&lab.outcome(s, layers, 1.0, seed, FRAMES)))
            .collect();
        let m = medians(&per);
        worst_setting = (worst_setting.0.max(m.0), worst_setting.1.max(m.1));
        all.extend(per);
    }
    let (mt, mr) = medians(&all);
    let failed = all.iter().filter(|e| e.0.is_infinite()).count();
    (
        mt <= NOMINAL_E_T && mr <= NOMINAL_E_R,
        format!(
            "{layers} layers: median e_t {mt:.4} m (<= {NOMINAL_E_T}), median e_r {mr:.4} rad (<= {NOMINAL_E_R}), worst per-setting median {:.4} m / {:.4} rad, {failed}/{} runs failed",
            worst_setting.0,
            worst_setting.1,
            all.len()
        ),
    )
}

fn convergence(lab: &mut Lab) -> Verdict {
    let mut bad = Vec::new();
    let mut ratio = 0.0f64;
    for &s in &SETTING_IDS {
        let mut first = Vec::new();
        let mut last = Vec::new();
        for &seed in &CONVERGENCE_SEEDS {
            first.push(errors_or_inf(&lab.outcome(s, 16, 1.0, seed, 1)));
            last.push(errors_or_inf(&lab.outcome(s, 16, 1.0, seed, FRAMES)));
        }
        let (m1, m30) = (medians(&first), medians(&last));
        if !(m30.0 <= m1.0 && m30.1 <= m1.1) {
            bad.push(s);
        }
        if m1.0.is_finite() && m1.0 > 0.0 {
            ratio = ratio.max(m30.0 / m1.0);
        }
    }
    Verdict {
        id: 3,
        name: "convergence with cumulated frames",
        pass: bad.is_empty(),
        detail: format!(
            "median(N=30) <= median(N=1) per setting over {} seeds; largest e_t ratio {ratio:.3}; violating settings {bad:?}",
            CONVERGENCE_SEEDS.len()
        ),
    }
}

fn robustness(lab: &mut Lab) -> Verdict {
    let mut base = Vec::new();
    let mut high = Vec::new();
    let mut failed = Vec::new();
    for &s in &SETTING_IDS {
        for &seed in &NOMINAL_SEEDS {
            base.push(errors_or_inf(&lab.outcome(s, 16, 1.0, seed, FRAMES)));
            let o = lab.outcome(s, 16, HIGH_NOISE, seed, FRAMES);
            if o.result.is_err() && HIGH_NOISE_SETTINGS.contains(&s) {
                failed.push((s, seed));
            }
            high.push(errors_or_inf(&o));
        }
    }
    let (b, h) = (medians(&base), medians(&high));
    let trend = h.0 >= b.0 * (1.0 - NOISE_SLACK) && h.1 >= b.1 * (1.0 - NOISE_SLACK);
    Verdict {
        id: 4,
        name: "noise robustness trend",
        pass: trend && failed.is_empty(),
        detail: format!(
            "K=3 medians {:.4} m / {:.4} rad vs K=1 {:.4} m / {:.4} rad (slack {NOISE_SLACK}); K=3 failures on settings 1-7: {failed:?}",
            h.0, h.1, b.0, b.1
        ),
    }
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
    Pose6::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.1..3.1),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.1..3.1),
    )
    .to_transform()
}

/// Least-squares rigid fit from the SVD of the cross-covariance.
fn procrustes(src: &[Point3], dst: &[Point3]) -> RigidTransform {
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v) = (svd.u.unwrap(), svd.v_t.unwrap().transpose());
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    RigidTransform::new(r, cd - r * cs)
}

fn oracles(audit: &DiscontinuityAudit) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0006);
    let mut worst_t = 0.0f64;
    for _ in 0..ORACLE_SETS {
        let c: [Point3; 4] = std::array::from_fn(|_| random_point(&mut rng, 5.0));
        let l: [Point3; 4] = std::array::from_fn(|_| random_point(&mut rng, 5.0));
        let t = translation_ls(&ReferencePoints::from_array(c), &ReferencePoints::from_array(l));
        let mean = (0..4).fold(Vector3::zeros(), |a, i| a + (l[i] - c[i])) / 4.0;
        worst_t = worst_t.max((t - mean).amax());
    }
    let mut worst_r = 0.0f64;
    let mut icp_errors = 0;
    for _ in 0..ORACLE_SETS {
        let truth = random_transform(&mut rng);
        let src: Vec<Point3> = (0..4).map(|_| random_point(&mut rng, 1.0)).collect();
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p) + random_point(&mut rng, 0.01).coords).collect();
        let oracle = procrustes(&src, &dst);
        match icp_refine(&src, &dst, &IcpConfig::default()) {
            Ok(out) => {
                let dr = (out.transform.rotation - oracle.rotation).amax();
                let dt = (out.transform.translation - oracle.translation).amax();
                worst_r = worst_r.max(dr.max(dt));
            }
            Err(_) => icp_errors += 1,
        }
    }
    let a = worst_t <= TRANSLATION_ORACLE_TOL;
    let b = worst_r <= PROCRUSTES_ORACLE_TOL && icp_errors == 0;
    let c = audit.frames > 0 && audit.mismatches == 0;
    Verdict {
        id: 6,
        name: "oracle equivalences",
        pass: a && b && c,
        detail: format!(
            "(a) translation vs mean of differences max {worst_t:.1e} (<= {TRANSLATION_ORACLE_TOL:.0e}) over {ORACLE_SETS} sets; \
             (b) icp vs SVD Procrustes max {worst_r:.1e} (<= {PROCRUSTES_ORACLE_TOL:.0e}), {icp_errors} errors; \
             (c) discontinuity filter vs brute force: {} mismatches over {} points in {} frames",
            audit.mismatches, audit.points, audit.frames
        ),
    }
}

fn newest_binary(dir: &Path, name: &str) -> Option<PathBuf> {
    let prefix = format!("{name}-");
    std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let f = e.file_name().to_string_lossy().into_owned();
            f.starts_with(&prefix)
                && f[prefix.len()..].chars().all(|c| c.is_ascii_hexdigit())
                && e.path().is_file()
        })
        .max_by_key(|e| e.metadata().and_then(|m| m.modified()).ok())
        .map(|e| e.path())
}

fn properties(suite_start: Instant) -> Verdict {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let mut notes = Vec::new();
    let mut pass = true;
    for name in PROPERTY_BINARIES {
        let Some(bin) = newest_binary(&deps, name) else {
            pass = false;
            notes.push(format!("{name}: not built"));
            continue;
        };
        let out = Command::new(&bin).output().expect("property binary runs");
        let stdout = String::from_utf8_lossy(&out.stdout);
        let summary = stdout.lines().rev().find(|l| l.starts_with("test result:")).unwrap_or("no summary");
        let ok = out.status.success() && summary.starts_with("test result: ok");
        pass &= ok;
        let counts = summary.split(';').next().unwrap_or("").trim_start_matches("test result: ");
        notes.push(format!("{name}: {counts}"));
    }
    let elapsed = suite_start.elapsed();
    pass &= elapsed <= SUITE_TIME_LIMIT;
    Verdict {
        id: 7,
        name: "property suites",
        pass,
        detail: format!(
            "{}; acceptance run incl. property suites {:.0} s (<= {} s)",
            notes.join(", "),
            elapsed.as_secs_f64(),
            SUITE_TIME_LIMIT.as_secs()
        ),
    }
}

fn tree(dir: &Path, prefix: &str, out: &mut Vec<(String, Vec<u8>)>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = format!("{prefix}{}", p.file_name().unwrap().to_string_lossy());
        if p.is_dir() {
            tree(&p, &format!("{name}/"), out);
        } else {
            out.push((name, std::fs::read(&p).unwrap()));
        }
    }
}

fn cli_pipeline(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let bin = env!("CARGO_BIN_EXE_velostereo");
    let small = ["--width", "640", "--height", "480", "--focal", "500"];
    let data = root.join("data");
    let lidar_glob = format!("{}/lidar_*.txt", data.display());
    let camera_glob = format!("{}/camera_*.txt", data.display());
    let runs: Vec<Vec<String>> = vec![
        [
            &["simulate", "--setting", "6", "--frames", "5", "--noise-factor", "1", "--seed", "21", "--out"][..],
            &[data.to_str().unwrap()],
            &small,
        ]
        .concat()
        .iter()
        .map(|s| s.to_string())
        .collect(),
        ["calibrate", "--lidar-glob", &lidar_glob, "--camera-glob", &camera_glob, "--out", root.join("result").to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        [
            &["sweep", "--kind", "window", "--settings", "2,6", "--seeds", "4,5", "--windows", "1,3", "--out"][..],
            &[root.join("sweep/window.csv").to_str().unwrap()],
            &small,
        ]
        .concat()
        .iter()
        .map(|s| s.to_string())
        .collect(),
    ];
    for args in runs {
        let out = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    let mut files = Vec::new();
    tree(root, "", &mut files);
    files.sort();
    Ok(files)
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (pass, detail) = match (cli_pipeline(a.path()), cli_pipeline(b.path())) {
        (Ok(x), Ok(y)) => {
            let bytes: usize = x.iter().map(|f| f.1.len()).sum();
            (x == y, format!("{} files, {bytes} bytes compared, identical: {}", x.len(), x == y))
        }
        (Err(e), _) | (_, Err(e)) => (false, e),
    };
    Verdict {
        id: 8,
        name: "determinism of simulate + calibrate + sweep",
        pass,
        detail,
    }
}

fn main() {
    let suite_start = Instant::now();
    let audit = Rc::new(RefCell::new(DiscontinuityAudit::default()));
    let delta = LidarPipelineConfig::default().delta_discont;
    let sink = audit.clone();
    let runner = Runner::default().with_lidar_hook(move |frame| audit_frame(frame, delta, &mut sink.borrow_mut()));
    let mut lab = Lab {
        runner,
        detections: HashMap::new(),
        camera: CameraSpec::default(),
    };

    let mut verdicts = Vec::new();
    let mut record = |v: Verdict| {
        print(&v);
        verdicts.push(v);
    };

    record(noiseless(&mut lab));
    let (pass2, detail2) = nominal(&mut lab, 16);
    record(Verdict {
        id: 2,
        name: "nominal noise accuracy",
        pass: pass2,
        detail: detail2.clone(),
    });
    record(convergence(&mut lab));
    record(robustness(&mut lab));
    let (pass32, detail32) = nominal(&mut lab, 32);
    let (pass64, detail64) = nominal(&mut lab, 64);
    record(Verdict {
        id: 5,
        name: "device generality",
        pass: pass2 && pass32 && pass64,
        detail: format!("{detail2}; {detail32}; {detail64}"),
    });
    record(oracles(&audit.borrow()));
    record(properties(suite_start));
    record(determinism());

    let failed: Vec<u8> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s, {} stereo frames simulated",
        verdicts.len() - failed.len(),
        verdicts.len(),
        suite_start.elapsed().as_secs_f64(),
        lab.runner.camera_frames_simulated()
    );
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
