//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sti_core::bev::{build_samples, pixel_transform, read_dataset, write_dataset, BevConfig};
use sti_core::fixtures::{bench_scene, constant_velocity_scene, random_scene, worked_example, WorkedExample};
use sti_core::geometry::point_segment_distance;
use sti_core::planner::CandidateTrajectory;
use sti_core::reach::{sti_step, ActorMask, PreparedQuery, ReachConfig, Snapshot, StiReport};
use sti_core::realtime::{mc_sti, measurements_from_scene, NoiseModel};
use sti_core::scene::Scene;
use sti_core::sim::{generate_mutations, run_sweep, PolicyKind, SimConfig, SweepSummary};

const FUZZ_SCENES: u64 = 200;
const FUZZ_STEPS: i64 = 6;
const K: usize = 30;
const CERT_SLACK: f64 = 1e-9;
const COLLAPSE_SCENES: u64 = 20;
const MC_SAMPLES: usize = 16;
const KS_ALPHA: f64 = 0.05;
const THRESHOLD_TAU: f64 = 0.6;
const MIN_ACCIDENT_REDUCTION: f64 = 0.5;
const TRANSFORM_POINTS: usize = 100_000;
const ROUND_TRIP_SAMPLES: usize = 100;
const SWEEP_CLI_LIMIT: usize = 200;
const STEP_BUDGET_S: f64 = 2.0;
const BENCH_REPS: usize = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn fuzz_corpus() -> Vec<Scene> {
    (0..FUZZ_SCENES).map(|seed| random_scene(seed, FUZZ_STEPS)).collect()
}

fn monotonicity(corpus: &[Scene], cfg: &ReachConfig) -> Verdict {
    let (mut steps, mut checks, mut violations) = (0usize, 0usize, 0usize);
    let mut lanes = [0usize; 4];
    let mut actors = [0usize; 9];
    for (i, scene) in corpus.iter().enumerate() {
        lanes[scene.lane_map.lanes.len().min(3)] += 1;
        actors[scene.actors.len().min(8)] += 1;
        for e in &scene.ego {
            let snap = Snapshot::from_scene(scene, e.t, K).expect("fuzz scene snapshot");
            let step = sti_step(&snap, cfg);
            steps += 1;
            for w in &step.without {
                for g in 0..step.present.reachable.len() {
                    checks += 1;
                    let ok = (!step.present.reachable[g] || w.reachable[g]) && (!w.reachable[g] || step.empty.reachable[g]);
                    violations += !ok as usize;
                }
            }
            let r = &step.report;
            let bounded = (0.0..=1.0).contains(&r.scene_sti) && r.actors.values().all(|a| *a >= 0.0 && *a <= r.scene_sti);
            violations += !bounded as usize;
            // the STI values come from the shared conflict pass; spot-check it
            // against one independent reachability query per mask
            if i % 10 == 0 {
                let q = PreparedQuery::new(&snap, cfg);
                let direct = |m: ActorMask| q.reachable(&m).expect("mask").reachable;
                violations += (direct(ActorMask::AllPresent) != step.present.reachable) as usize;
                violations += (direct(ActorMask::AllRemoved) != step.empty.reachable) as usize;
                for w in &step.without {
                    violations += (direct(w.mask.clone()) != w.reachable) as usize;
                }
            }
        }
    }
    verdict(
        violations == 0,
        format!(
            "{} scenes, {steps} steps, {checks} per-goal subset checks, {violations} violations; \
             scenes by lane count {:?}, by actor count {:?}",
            corpus.len(),
            &lanes[1..],
            &actors[1..]
        ),
    )
}

fn worked_example_counts(cfg: &ReachConfig) -> Verdict {
    let scene = worked_example();
    let snap = Snapshot::from_scene(&scene, 0, WorkedExample::K).expect("worked example");
    let step = sti_step(&snap, cfg);
    let r = &step.report;
    let counts = (
        r.counts.present,
        r.counts.empty,
        r.counts.without.get("top").copied().unwrap_or(0),
        r.counts.without.get("bottom").copied().unwrap_or(0),
    );
    let top = r.actors.get("top").copied().unwrap_or(f64::NAN);
    let bottom = r.actors.get("bottom").copied().unwrap_or(f64::NAN);
    let pass = r.goals == 12
        && counts == (3, 12, 11, 4)
        && r.scene_sti == 0.75
        && top == 8.0 / 12.0
        && bottom == 1.0 / 12.0
        && top > bottom;
    verdict(
        pass,
        format!(
            "goals {}, counts (|R|, |R0|, |R/top|, |R/bottom|) = {counts:?}, scene STI {}, top {top:.6}, bottom {bottom:.6}",
            r.goals, r.scene_sti
        ),
    )
}

/// Worst limit or clearance excess of a certificate, recomputed from the
/// snapshot geometry without the planner's obstacle structures.
fn certificate_excess(traj: &CandidateTrajectory, snap: &Snapshot, mask: &ActorMask, cfg: &ReachConfig) -> f64 {
    let p = &cfg.planner;
    let mut worst = f64::NEG_INFINITY;
    let mut note = |excess: f64| worst = worst.max(excess);
    note(traj.horizon_steps() as f64 - snap.k as f64);
    let boundary = p.clearance_static + p.ego_radius;
    let dynamic = p.clearance_dynamic + p.ego_radius;
    let actors: Vec<_> = snap
        .obstacles
        .dynamic
        .iter()
        .filter(|d| match mask {
            ActorMask::AllPresent => true,
            ActorMask::AllRemoved => false,
            ActorMask::RemoveOne(id) => &d.id != id,
        })
        .collect();
    for (i, pose) in traj.poses.iter().enumerate() {
        note(traj.speeds[i] - p.max_speed);
        note(-traj.speeds[i]);
        note(traj.accels[i].abs() - p.max_accel);
        note(traj.curvatures[i].abs() - p.max_curvature);
        let pos = pose.position();
        for line in &snap.lane_map.boundaries {
            for seg in line.windows(2) {
                note(boundary - point_segment_distance(pos, seg[0], seg[1]));
            }
        }
        for a in &actors {
            let b = a.boxes[i.min(a.boxes.len() - 1)];
            let corners = b.corners();
            let inside = b.contains(pos);
            let edge = (0..4)
                .map(|c| point_segment_distance(pos, corners[c], corners[(c + 1) % 4]))
                .fold(f64::INFINITY, f64::min);
            let clearance = if inside { 0.0 } else { edge };
            note(dynamic - clearance);
        }
        if i > 0 {
            // chord speed can exceed neither the sampled speeds by more
            // than the acceleration limit allows within one step
            let chord = pos.dist(traj.poses[i - 1].position()) / traj.dt;
            note(chord - traj.speeds[i].max(traj.speeds[i - 1]) - 0.5 * p.max_accel * traj.dt);
        }
    }
    worst
}

fn soundness(corpus: &[Scene], cfg: &ReachConfig) -> Verdict {
    let (mut certs, mut violations, mut mismatches) = (0usize, 0usize, 0usize);
    let mut worst = f64::NEG_INFINITY;
    for scene in corpus {
        for e in &scene.ego {
            let snap = Snapshot::from_scene(scene, e.t, K).expect("fuzz scene snapshot");
            let q = PreparedQuery::new(&snap, cfg);
            let step = sti_step(&snap, cfg);
            let mut masks = vec![(ActorMask::AllPresent, &step.present), (ActorMask::AllRemoved, &step.empty)];
            masks.extend(step.without.iter().map(|w| (w.mask.clone(), w)));
            for (mask, expected) in masks {
                let found = q.certificates(&mask).expect("mask");
                for (g, cert) in found.iter().enumerate() {
                    mismatches += (cert.is_some() != expected.reachable[g]) as usize;
                    let Some(traj) = cert else { continue };
                    certs += 1;
                    let goal = &q.goals().cells[g];
                    let end = traj.poses.last().expect("non-empty").position();
                    let path = sti_core::planner::build_reference_path(&snap.lane_map.lanes[goal.lane_index])
                        .expect("lane path");
                    let excess = certificate_excess(traj, &snap, &mask, cfg);
                    worst = worst.max(excess);
                    if excess > CERT_SLACK || !goal.contains_on(&path, end) {
                        violations += 1;
                    }
                }
            }
        }
    }
    verdict(
        violations == 0 && mismatches == 0,
        format!(
            "{certs} certificates rechecked, {violations} violations (slack {CERT_SLACK:e}, worst excess {worst:.3e}), \
             {mismatches} goals where certificate existence disagrees with the reported set"
        ),
    )
}

fn single_actor_identity(corpus: &[Scene], cfg: &ReachConfig) -> Verdict {
    let (mut steps, mut bad) = (0usize, 0usize);
    for scene in corpus.iter().filter(|s| s.actors.len() == 1) {
        for e in &scene.ego {
            let r = sti_step(&Snapshot::from_scene(scene, e.t, K).expect("snapshot"), cfg).report;
            if let Some(a) = r.actors.values().next() {
                steps += 1;
                bad += (*a != r.scene_sti) as usize;
            }
        }
    }
    verdict(steps > 0 && bad == 0, format!("{steps} single-actor steps, {bad} with actor STI != scene STI"))
}

fn realtime_collapse(cfg: &ReachConfig) -> Verdict {
    let noise = NoiseModel::noiseless();
    let (mut checked, mut bad, mut nonzero) = (0usize, 0usize, 0usize);
    for seed in 0..COLLAPSE_SCENES {
        let scene = constant_velocity_scene(seed, 5);
        // velocity is observable from the second detection on
        for e in scene.ego.iter().filter(|e| e.t >= 1) {
            let oracle: StiReport = sti_step(&Snapshot::from_scene(&scene, e.t, K).expect("snapshot"), cfg).report;
            let meas = measurements_from_scene(&scene, e.t, &noise, seed);
            let d = mc_sti(&scene, &meas, e.t, K, MC_SAMPLES, cfg, &noise, seed).expect("mc_sti");
            checked += 1;
            nonzero += (oracle.scene_sti > 0.0) as usize;
            let actors_ok = oracle
                .actors
                .iter()
                .all(|(id, v)| d.actors.get(id).is_some_and(|s| s.mean == *v && s.std == 0.0));
            if d.scene.mean != oracle.scene_sti || d.scene.std != 0.0 || !actors_ok {
                bad += 1;
            }
        }
    }
    verdict(
        bad == 0,
        format!(
            "{COLLAPSE_SCENES} scenes, {checked} steps (t >= 1) at n = {MC_SAMPLES}, {nonzero} with nonzero STI, {bad} mismatches"
        ),
    )
}

fn sweep_statistics(s: &SweepSummary) -> Verdict {
    let ks = s.ks;
    let populated: Vec<_> = s.bins.iter().filter(|b| b.pairs > 0).collect();
    let top = s.bins.last();
    let max_p = populated.iter().filter_map(|b| b.probability).fold(f64::NEG_INFINITY, f64::max);
    let top_is_max = top.is_some_and(|b| b.pairs > 0 && b.probability == Some(max_p));
    let ks_ok = ks.is_some_and(|k| k.p < KS_ALPHA);
    let curve: Vec<String> = s.bins.iter().map(|b| b.probability.map_or("-".into(), |p| format!("{p:.3}"))).collect();
    verdict(
        ks_ok && top_is_max && s.failures == 0,
        format!(
            "no-op: {} runs, {} accidents, KS D = {:.4}, p = {:.3e} (alpha {KS_ALPHA}); P(accident | STI bin) = [{}]",
            s.runs,
            s.accidents,
            ks.map_or(f64::NAN, |k| k.d),
            ks.map_or(f64::NAN, |k| k.p),
            curve.join(", ")
        ),
    )
}

fn mitigation(noop: &SweepSummary, brake: &SweepSummary) -> Verdict {
    let reduction = if noop.accidents == 0 {
        0.0
    } else {
        1.0 - brake.accidents as f64 / noop.accidents as f64
    };
    verdict(
        noop.accidents > 0 && reduction >= MIN_ACCIDENT_REDUCTION && brake.failures == 0 && brake.runs == noop.runs,
        format!(
            "no-op {} accidents, threshold-brake (tau {THRESHOLD_TAU}) {} accidents over {} mutations, reduction {:.1}% (required {:.0}%)",
            noop.accidents,
            brake.accidents,
            brake.runs,
            100.0 * reduction,
            100.0 * MIN_ACCIDENT_REDUCTION
        ),
    )
}

fn bev_exactness(cfg: &ReachConfig) -> Verdict {
    let bev = BevConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (sx, sy) = (2.0 * bev.r_x / bev.h as f64, 2.0 * bev.r_y / bev.w as f64);
    let mut mismatches = 0;
    for _ in 0..TRANSFORM_POINTS {
        let x = rng.gen_range(-bev.r_x..bev.r_x);
        let y = rng.gen_range(-bev.r_y..bev.r_y);
        let expect = (((x + bev.r_x) / sx).floor() as usize, ((y + bev.r_y) / sy).floor() as usize);
        mismatches += (pixel_transform(x, y, &bev).ok() != Some(expect)) as usize;
    }
    let mut samples = Vec::new();
    let mut seed = 0;
    while samples.len() < ROUND_TRIP_SAMPLES {
        samples.extend(build_samples(&random_scene(seed, 10), K, &bev, cfg).expect("samples"));
        seed += 1;
    }
    samples.truncate(ROUND_TRIP_SAMPLES);
    let dir = tempfile::tempdir().expect("tempdir");
    let round_trip = write_dataset(&samples, &bev, dir.path()).expect("write") == samples.len()
        && read_dataset(dir.path()).is_ok_and(|(c, back)| c == bev && back == samples);
    let len = bev.label_len();
    verdict(
        mismatches == 0 && len == 132 && round_trip,
        format!(
            "{mismatches} transform mismatches over {TRANSFORM_POINTS} points, label length {len}, \
             {ROUND_TRIP_SAMPLES}-sample round trip {}",
            if round_trip { "identical" } else { "differs" }
        ),
    )
}

fn sti(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sti"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names
        .iter()
        .all(|n| std::fs::read(a.join(n)).ok().is_some_and(|x| std::fs::read(b.join(n)).ok() == Some(x)))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = |n: &str| dir.path().join(n).display().to_string();
    let run = || -> Result<Vec<String>, String> {
        let mut differ = Vec::new();
        sti(&["fixture", "cut-in", "--out", &d("cutin.json")])?;
        sti(&["fixture", "worked-example", "--out", &d("we.json")])?;
        for scene in ["cutin.json", "we.json"] {
            for mode in ["oracle", "realtime"] {
                let a = sti(&["--threads", "1", "analyze", "--scene", &d(scene), "--mode", mode, "--seed", "3"])?;
                let b = sti(&["--threads", "8", "analyze", "--scene", &d(scene), "--mode", mode, "--seed", "3"])?;
                if a != b || a.is_empty() {
                    differ.push(format!("analyze {scene} {mode}"));
                }
            }
        }
        let limit = SWEEP_CLI_LIMIT.to_string();
        for policy in ["noop", "threshold-brake"] {
            let mut outs = Vec::new();
            for threads in ["1", "8"] {
                let out = d(&format!("sweep-{policy}-{threads}"));
                outs.push(sti(&["--threads", threads, "sweep", "--policy", policy, "--limit", &limit, "--sweep-out", &out])?);
            }
            let (a, b) = (dir.path().join(format!("sweep-{policy}-1")), dir.path().join(format!("sweep-{policy}-8")));
            if outs[0] != outs[1] || !same_files(&a, &b, &["summary.json", "runs.jsonl"]) {
                differ.push(format!("sweep {policy}"));
            }
        }
        Ok(differ)
    };
    match run() {
        Ok(differ) => verdict(
            differ.is_empty(),
            format!(
                "analyze (oracle and realtime, 2 scenes) and sweep (2 policies, first {SWEEP_CLI_LIMIT} mutations) \
                 at --threads 1 vs 8: {}",
                if differ.is_empty() { "byte-identical".to_string() } else { format!("differ in {}", differ.join(", ")) }
            ),
        ),
        Err(e) => verdict(false, format!("command failed: {e}")),
    }
}

fn performance(cfg: &ReachConfig) -> Verdict {
    let mut cfg = cfg.clone();
    cfg.grid.d_max = 200.0;
    let scene = bench_scene();
    let mut times = Vec::new();
    let mut shape = (0, 0, 0);
    for _ in 0..BENCH_REPS {
        let start = Instant::now();
        let snap = Snapshot::from_scene(&scene, 0, K).expect("bench snapshot");
        let step = sti_step(&snap, &cfg);
        times.push(start.elapsed().as_secs_f64());
        shape = (step.report.goals, step.report.actors.len(), step.passes());
    }
    let worst = times.iter().copied().fold(0.0, f64::max);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    verdict(
        shape == (132, 10, 12) && worst <= STEP_BUDGET_S,
        format!(
            "{} goals, {} actors, {} passes; step time mean {:.2} ms, worst {:.2} ms over {BENCH_REPS} runs (budget {STEP_BUDGET_S} s)",
            shape.0,
            shape.1,
            shape.2,
            1e3 * mean,
            1e3 * worst
        ),
    )
}

fn main() {
    let cfg = ReachConfig::default();
    let corpus = fuzz_corpus();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict| {
        println!("{} criterion {n} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    report(1, "counterfactual monotonicity", monotonicity(&corpus, &cfg));
    report(2, "worked example", worked_example_counts(&cfg));
    report(3, "planner soundness", soundness(&corpus, &cfg));
    report(4, "single-actor identity", single_actor_identity(&corpus, &cfg));
    report(5, "realtime collapse", realtime_collapse(&cfg));

    let mutations = generate_mutations();
    let sim = SimConfig::default();
    let noop = run_sweep(&mutations, || PolicyKind::Noop.build(), &sim, &cfg).summary;
    let tau = THRESHOLD_TAU;
    let brake = run_sweep(&mutations, || PolicyKind::ThresholdBrake { tau }.build(), &sim, &cfg).summary;
    report(6, "mutation-sweep statistics", sweep_statistics(&noop));
    report(7, "mitigation efficacy", mitigation(&noop, &brake));

    report(8, "BEV exactness", bev_exactness(&cfg));
    report(9, "determinism across thread counts", determinism());
    report(10, "performance", performance(&cfg));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
