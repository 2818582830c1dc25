//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any criterion fails.
//!
//! Criteria 5–8 and 10 drive the `mom` binary end to end on the 5000-frame
//! `walk-2cam` scene, sharing one σ = 5 px dataset and one λ = 1 model.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mom_core::baseline::Baseline;
use mom_core::classical::{triangulate, ViewObservation};
use mom_core::evalkit::{
    acc_at, evaluate, position_errors, trajectory_errors, DistanceMode, ACC_THRESHOLDS,
};
use mom_core::geometry::{project, WorldPoint};
use mom_core::mom_net::{gradient_check, Architecture, DecoderMode, MomNet};
use mom_core::rng::{seeded, substream, Domain};
use mom_core::sampling::{
    build_training_pairs, mean_estimator, normality_stats, pair_count, sample_bbox_points,
    BoundingBox,
};
use mom_core::scene::{generate, SceneSpec};
use rand::Rng;

const BIN: &str = env!("CARGO_BIN_EXE_mom");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mom(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .current_dir(dir)
        .env_remove("MOM_OUTPUT_DIR")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "mom {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Rows of a CSV file as header → value maps.
fn read_table(path: &Path) -> Result<Vec<HashMap<String, String>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(header
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect())
        })
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or(f64::NAN)
}

/// Least-squares non-increasing fit (pool adjacent violators).
fn non_increasing_fit(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

fn criterion_1() -> Outcome {
    let spec = SceneSpec {
        keypoint_noise: 0.0,
        ..SceneSpec::walk_2cam()
    };
    let scene = generate(&spec).expect("scene");
    let started = Instant::now();
    let baseline = Baseline::from_dataset(&scene.dataset, Some(20)).expect("calibration");
    let marker_err = baseline
        .reprojection
        .iter()
        .map(|r| r.max())
        .fold(0.0, f64::max);
    // Agreement with the true cameras over every body point.
    let mut body_err: f64 = 0.0;
    for (cam, est) in scene.rig.iter().zip(&baseline.projections) {
        for w in scene.body_points.iter().flatten() {
            let a = project(est, *w).expect("projectable").pixel;
            let b = cam.project(*w).expect("projectable").pixel;
            body_err = body_err.max(a.distance(b));
        }
    }
    let mut tri_err: f64 = 0.0;
    for (rec, body) in scene.dataset.records.iter().zip(&scene.body_points) {
        for (i, w) in body.iter().enumerate() {
            let views: Vec<ViewObservation<'_>> = rec
                .cams
                .iter()
                .map(|c| ViewObservation {
                    camera: c.id,
                    pixel: c.kps[i],
                    projection: &baseline.projections[c.id],
                })
                .collect();
            tri_err = tri_err.max(triangulate(&views).expect("triangulation").distance(*w));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let points: usize = scene.body_points.iter().map(Vec::len).sum();
    outcome(
        marker_err < 1e-6 && body_err < 1e-6 && tri_err < 1e-5 && secs < 10.0,
        format!(
            "max reprojection {marker_err:.2e} px on markers, {body_err:.2e} px vs true P over {points} body points; \
             max triangulation error {tri_err:.2e} m; {secs:.2} s for {} frames",
            scene.dataset.records.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut counts = Vec::new();
    for n in 1..=4u32 {
        let subsets = 1u32 << n;
        let mut pairs = 0u128;
        for a in 1..subsets {
            for b in 1..subsets {
                pairs += u128::from(a != 0 && b != 0);
            }
        }
        let got = pair_count(n).expect("small n");
        ok &= got == pairs;
        counts.push(format!("n={n}: {got}/{pairs}"));
    }
    let twenty = pair_count(20).expect("n = 20");
    ok &= twenty == 1_099_509_530_625;
    outcome(ok, format!("{}; pair_count(20) = {twenty}", counts.join(", ")))
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let bbox = BoundingBox::new(100.0, 50.0, 180.0, 250.0).expect("bbox");
    let mut rng = seeded(2024);
    let all: Vec<usize> = (0..20).collect();
    let estimators: Vec<_> = (0..100_000)
        .map(|_| {
            let pts = sample_bbox_points(&bbox, 20, &mut rng).expect("samples");
            mean_estimator(&pts, &all).expect("estimator").mean
        })
        .collect();
    let stats = normality_stats(&estimators).expect("stats");
    let secs = started.elapsed().as_secs_f64();
    let center = bbox.center();
    let offsets = [stats.mean[0] - center.u, stats.mean[1] - center.v];
    let within: Vec<f64> = (0..2).map(|a| offsets[a].abs() / stats.standard_error(a)).collect();
    let pass = stats.skewness.iter().all(|s| s.abs() < 0.05)
        && stats.excess_kurtosis.iter().all(|k| k.abs() < 0.1)
        && within.iter().all(|z| *z < 3.0)
        && secs < 5.0;
    outcome(
        pass,
        format!(
            "skewness [{:.4}, {:.4}], excess kurtosis [{:.4}, {:.4}], grand mean offset [{:.2}, {:.2}] SE; {secs:.2} s",
            stats.skewness[0],
            stats.skewness[1],
            stats.excess_kurtosis[0],
            stats.excess_kurtosis[1],
            within[0],
            within[1]
        ),
    )
}

fn criterion_4() -> Outcome {
    let scene = generate(&SceneSpec {
        frames: 16,
        subjects: 2,
        ..SceneSpec::walk_2cam()
    })
    .expect("scene");
    let frames = scene.observation_sets_with_world();
    let arch = Architecture {
        local_hidden: vec![8, 8],
        global_hidden: vec![8],
    };
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in [11u64, 12, 13] {
        for mode in [DecoderMode::Linear, DecoderMode::Perspective] {
            let net = MomNet::init(
                2,
                &arch,
                scene.dataset.normalizer(),
                mode,
                &mut substream(seed, Domain::GradCheck, 0),
            )
            .expect("net");
            let pairs = build_training_pairs(&frames[..8], 2, 1, &mut substream(seed, Domain::GradCheck, 1))
                .expect("pairs");
            for lambda in [0.0, 1.0] {
                let report = gradient_check(&net, &pairs, lambda, 1e-5).expect("gradcheck");
                worst = worst.max(report.max_relative_error());
                cases += 1;
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {cases} cases (3 seeds × 2 decoder modes × λ ∈ {{0, 1}})"),
    )
}

struct Pipeline {
    criterion_5: Outcome,
    criterion_6: Outcome,
    criterion_7: Outcome,
    criterion_8: Outcome,
    criterion_10: Outcome,
}

fn pipeline(dir: &Path) -> Result<Pipeline, String> {
    let started = Instant::now();
    mom(dir, &["gen", "--scene", "walk-2cam", "--frames", "5000", "--seed", "42", "--noise", "5", "-o", "sigma5"])?;
    mom(dir, &["train", "--data", "sigma5", "--lambda", "1", "--seed", "42", "-o", "mom-l1"])?;
    mom(dir, &["baseline", "--data", "sigma5", "-o", "base5"])?;
    mom(dir, &[
        "eval", "--data", "sigma5", "--pred", "mom=mom-l1/predictions.csv",
        "--pred", "baseline=base5/predictions.csv", "-o", "eval5",
    ])?;
    mom(dir, &["gen", "--scene", "walk-2cam", "--frames", "5000", "--seed", "42", "--noise", "0", "-o", "sigma0"])?;
    mom(dir, &["baseline", "--data", "sigma0", "-o", "base0"])?;
    mom(dir, &["eval", "--data", "sigma0", "--pred", "baseline=base0/predictions.csv", "-o", "eval0"])?;
    let secs = started.elapsed().as_secs_f64();

    let table = read_table(&dir.join("eval5/metrics.csv"))?;
    let (m, b) = (&table[0], &table[1]);
    let floor = num(&read_table(&dir.join("eval0/metrics.csv"))?[0], "mean");
    let criterion_5 = outcome(
        num(m, "mean") < num(b, "mean")
            && num(m, "acc03") > num(b, "acc03")
            && floor < 1e-4
            && secs < 900.0,
        format!(
            "σ=5: MoM mean {:.4} m / Acc@0.3 {:.1}% vs baseline {:.4} m / {:.1}%; σ=0 baseline mean {floor:.2e} m; {secs:.0} s",
            num(m, "mean"),
            num(m, "acc03"),
            num(b, "mean"),
            num(b, "acc03")
        ),
    );

    mom(dir, &["train", "--data", "sigma5", "--lambda", "0", "--seed", "42", "-o", "mom-l0"])?;
    let curve = |name: &str| -> Result<Vec<f64>, String> {
        Ok(read_table(&dir.join(name).join("loss.csv"))?
            .iter()
            .map(|r| num(r, "test_loss"))
            .collect())
    };
    let (l1, l0) = (curve("mom-l1")?, curve("mom-l0")?);
    let argmin = |c: &[f64]| {
        c.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i + 1)
            .unwrap_or(0)
    };
    let (f1, f0) = (*l1.last().unwrap_or(&f64::NAN), *l0.last().unwrap_or(&f64::NAN));
    let (e1, e0) = (argmin(&l1), argmin(&l0));
    let criterion_6 = outcome(
        f1 <= f0 && e1 < e0,
        format!(
            "final test loss λ=1 {f1:.6} vs λ=0 {f0:.6}; minimum at epoch {e1} (λ=1) vs {e0} (λ=0)"
        ),
    );

    mom(dir, &[
        "sweep", "--kind", "camera-offset", "--grid", "0..19", "--ckpt", "mom-l1/model.ckpt",
        "--data", "sigma5", "-o", "sweep-offset",
    ])?;
    let rows = read_table(&dir.join("sweep-offset/sweep.csv"))?;
    let acc: Vec<f64> = rows.iter().map(|r| num(r, "acc03")).collect();
    let smooth = non_increasing_fit(&acc);
    let drop: Vec<f64> = smooth.iter().map(|a| (smooth[0] - a) / smooth[0]).collect();
    let within = drop[..=12].iter().all(|d| *d < 0.10);
    let beyond = drop[13..].iter().any(|d| *d >= 0.10);
    let criterion_7 = outcome(
        rows.len() == 20 && within && beyond,
        format!(
            "Acc@0.3 {:.1}% at 0 px, smoothed relative drop {:.1}% at 12 px, {:.1}% at 19 px (raw: {})",
            acc[0],
            100.0 * drop[12],
            100.0 * drop[19],
            acc.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(" ")
        ),
    );

    mom(dir, &[
        "sweep", "--kind", "keypoint-noise", "--grid", "0..19", "--ckpt", "mom-l1/model.ckpt",
        "--data", "sigma5", "-o", "sweep-noise",
    ])?;
    let rows = read_table(&dir.join("sweep-noise/sweep.csv"))?;
    let spread = |key: &str| {
        let v: Vec<f64> = rows.iter().map(|r| num(r, key)).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let (s4, s5) = (spread("acc04"), spread("acc05"));
    let criterion_8 = outcome(
        rows.len() == 20 && s4 < 5.0 && s5 < 5.0,
        format!("Acc@0.4 range {s4:.2} pp, Acc@0.5 range {s5:.2} pp over 0..19 px"),
    );

    mom(dir, &["gradcheck", "-o", "gc"])?;
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (cmd, src, files) in [
        ("gen", "sigma5", &["manifest.toml", "records.jsonl"][..]),
        ("train", "mom-l1", &["model.ckpt", "loss.csv", "predictions.csv"][..]),
        ("baseline", "base5", &["predictions.csv"][..]),
        ("eval", "eval5", &["metrics.csv"][..]),
        ("sweep", "sweep-offset", &["sweep.csv"][..]),
        ("gradcheck", "gc", &["gradcheck.csv"][..]),
    ] {
        let again = format!("{src}-rerun");
        mom(dir, &[cmd, "--config", &format!("{src}/config.resolved.toml"), "-o", &again])?;
        for f in files {
            compared += 1;
            let a = fs::read(dir.join(src).join(f)).map_err(|e| e.to_string())?;
            let b = fs::read(dir.join(&again).join(f)).map_err(|e| e.to_string())?;
            if a != b {
                mismatches.push(format!("{src}/{f}"));
            }
        }
    }
    let criterion_10 = outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{compared} artifacts from 6 subcommands bit-identical after re-running from snapshots")
        } else {
            format!("differ after re-run: {}", mismatches.join(", "))
        },
    );

    Ok(Pipeline {
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_10,
    })
}

/// Straightforward re-implementation used as the metric oracle.
fn brute_force(pred: &[WorldPoint], gt: &[WorldPoint], planar: bool) -> [f64; 10] {
    let n = pred.len();
    let diff = |i: usize| {
        let dz = if planar { 0.0 } else { pred[i].z - gt[i].z };
        (pred[i].x - gt[i].x, pred[i].y - gt[i].y, dz)
    };
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let (x, y, z) = diff(i);
            (x.powi(2) + y.powi(2) + z.powi(2)).sqrt()
        })
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let sq_mean = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let std = (sq_mean - mean * mean).max(0.0).sqrt();
    // Order statistic by counting: the value with exactly k smaller entries.
    let kth = |k: usize| {
        *d.iter()
            .find(|v| {
                let less = d.iter().filter(|w| w < v).count();
                let equal = d.iter().filter(|w| w == v).count();
                less <= k && k < less + equal
            })
            .unwrap()
    };
    let median = if n % 2 == 1 {
        kth(n / 2)
    } else {
        (kth(n / 2 - 1) + kth(n / 2)) / 2.0
    };
    let ate = sq_mean.sqrt();
    let mut rpe = 0.0;
    for t in 1..n {
        let (a, b) = (diff(t), diff(t - 1));
        rpe += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2);
    }
    let rpe = (rpe / (n - 1) as f64).sqrt();
    let acc = |tau: f64| 100.0 * d.iter().filter(|v| **v < tau).count() as f64 / n as f64;
    [mean, median, std, ate, rpe, acc(0.2), acc(0.3), acc(0.4), acc(0.5), n as f64]
}

fn criterion_9() -> Outcome {
    let mut rng = seeded(99);
    let gt: Vec<WorldPoint> = (0..1000)
        .map(|_| WorldPoint::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 0.85))
        .collect();
    let pred: Vec<WorldPoint> = gt
        .iter()
        .map(|g| {
            WorldPoint::new(
                g.x + rng.random_range(-0.4..0.4),
                g.y + rng.random_range(-0.4..0.4),
                g.z + rng.random_range(-0.2..0.2),
            )
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (mode, planar) in [(DistanceMode::ThreeD, false), (DistanceMode::Planar, true)] {
        let r = evaluate(&pred, &gt, mode).expect("metrics");
        let got = [
            r.mean, r.median, r.std, r.ate, r.rpe, r.acc[0], r.acc[1], r.acc[2], r.acc[3],
            r.count as f64,
        ];
        let want = brute_force(&pred, &gt, planar);
        for (a, b) in got.iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
    }

    // Hand-built: distances 0, 5, 0; displacement errors (0,3,4), (0,−3,−4).
    let g3 = [WorldPoint::new(0.0, 0.0, 0.0), WorldPoint::new(1.0, 0.0, 0.0), WorldPoint::new(2.0, 0.0, 0.0)];
    let p3 = [WorldPoint::new(0.0, 0.0, 0.0), WorldPoint::new(1.0, 3.0, 4.0), WorldPoint::new(2.0, 0.0, 0.0)];
    let (ate, rpe) = trajectory_errors(&p3, &g3, 1, DistanceMode::ThreeD).expect("3-frame");
    // Constant offset (3, 4, 0): every distance 5, ATE 5, RPE 0.
    let q3: Vec<WorldPoint> = g3.iter().map(|g| WorldPoint::new(g.x + 3.0, g.y + 4.0, g.z)).collect();
    let (ate_c, rpe_c) = trajectory_errors(&q3, &g3, 1, DistanceMode::Planar).expect("3-frame");
    let e = position_errors(&q3, &g3, DistanceMode::Planar).expect("errors");
    let hand = ate == (25.0f64 / 3.0).sqrt()
        && rpe == 5.0
        && rpe_c == 0.0
        && ate_c == 5.0
        && e.mean == 5.0
        && e.median == 5.0
        && e.std == 0.0
        && acc_at(&e.distances, ACC_THRESHOLDS[3]).expect("acc") == 0.0;
    outcome(
        worst <= 1e-12 && hand,
        format!(
            "max deviation from brute force {worst:.1e} over 1000 frames (3D and planar); 3-frame hand cases {}",
            if hand { "exact" } else { "MISMATCH" }
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, o: Outcome| {
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    record(1, "geometry/classical oracle", criterion_1());
    record(2, "combinatorics", criterion_2());
    record(3, "LLN/CLT suite", criterion_3());
    record(4, "gradient check", criterion_4());

    let tmp = tempfile::tempdir().expect("tempdir");
    match pipeline(tmp.path()) {
        Ok(p) => {
            record(5, "end-to-end ordering", p.criterion_5);
            record(6, "decoder ablation", p.criterion_6);
            record(7, "camera-offset robustness", p.criterion_7);
            record(8, "keypoint-noise robustness", p.criterion_8);
            record(9, "metric oracle", criterion_9());
            record(10, "determinism", p.criterion_10);
        }
        Err(e) => {
            for (id, name) in [
                (5, "end-to-end ordering"),
                (6, "decoder ablation"),
                (7, "camera-offset robustness"),
                (8, "keypoint-noise robustness"),
                (10, "determinism"),
            ] {
                record(id, name, outcome(false, format!("pipeline error: {e}")));
            }
            record(9, "metric oracle", criterion_9());
        }
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
