use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sti_core::bev::{build_samples, write_dataset};
use sti_core::config::Config;
use sti_core::fixtures::{bench_scene, worked_example};
use sti_core::grid::ThresholdRule;
use sti_core::reach::{reachable_set, sti_profile, sti_step, ActorMask, ReachConfig, Snapshot, StiReport};
use sti_core::realtime::{mc_sti, measurements_from_scene, Summary};
use sti_core::report::{cdf_csv, characterize, pooled};
use sti_core::scene::{load_scene, save_scene, Scene};
use sti_core::sim::{cut_in_scene, generate_mutations, run_sweep, CutInParams, PolicyKind};

#[derive(Parser)]
#[command(name = "sti", version, about = "Counterfactual safety threat indicators for driving scenes")]
struct Cli {
    /// JSON config with optional sections planner, grid, noise, bev, sim, reward
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// time budget in steps; overrides grid.k and sim.k
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// worker threads; defaults to all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    cell_length: Option<f64>,
    #[arg(long, global = true)]
    cell_width: Option<f64>,
    #[arg(long, global = true)]
    d_max: Option<f64>,
    #[arg(long, global = true, value_enum)]
    threshold_rule: Option<Rule>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Max,
    Min,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Realtime,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Noop,
    AlwaysEb,
    ThresholdBrake,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    CutIn,
    WorkedExample,
    Bench,
}

#[derive(Subcommand)]
enum Command {
    /// STI for every ego step of a scene, as JSON lines
    Analyze {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Oracle)]
        mode: Mode,
        /// trajectory samples per step in realtime mode
        #[arg(long, default_value_t = 16)]
        mc_samples: usize,
        /// JSON-lines output; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
        /// wide CSV table
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Actors sorted by STI, at one step or by peak over the scene
    Rank {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        t: Option<i64>,
    },
    /// Cut-in mutation sweep under a mitigation policy
    Sweep {
        #[arg(long, value_enum, default_value_t = Policy::Noop)]
        policy: Policy,
        #[arg(long, default_value_t = 0.6)]
        tau: f64,
        /// only the first N mutations
        #[arg(long)]
        limit: Option<usize>,
        /// directory for summary.json and runs.jsonl
        #[arg(long)]
        sweep_out: Option<PathBuf>,
    },
    /// BEV training samples for every ego step of a scene
    ExportDataset {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pooled nearest-rank percentiles of actor and scene STI
    Characterize {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// empirical CDF as CSV
        #[arg(long)]
        cdf: Option<PathBuf>,
    },
    /// Wall-clock cost of one reachability pass and one full STI step
    Bench {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        t: Option<i64>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
    /// Writes a built-in scene
    Fixture {
        #[arg(value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15.0)]
        dist_before: f64,
        #[arg(long, default_value_t = 11.0)]
        dist_during: f64,
        #[arg(long, default_value_t = 14.0)]
        lanechange_speed: f64,
    },
}

/// Exit 1 for usage and configuration problems, 2 for bad data.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Settings {
    cfg: Config,
    k: usize,
    seed: u64,
}

impl Settings {
    fn reach(&self) -> ReachConfig {
        self.cfg.reach()
    }
}

fn settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(usage)?,
        None => Config::default(),
    };
    if let Some(k) = cli.k {
        cfg.grid.k = k;
        cfg.sim.k = k;
    }
    if let Some(v) = cli.cell_length {
        cfg.grid.cell_length = v;
    }
    if let Some(v) = cli.cell_width {
        cfg.grid.cell_width = v;
    }
    if let Some(v) = cli.d_max {
        cfg.grid.d_max = v;
    }
    if let Some(r) = cli.threshold_rule {
        cfg.grid.threshold_rule = match r {
            Rule::Max => ThresholdRule::Max,
            Rule::Min => ThresholdRule::Min,
        };
    }
    cfg.validate().map_err(usage)?;
    Ok(Settings {
        k: cfg.grid.k,
        cfg,
        seed: cli.seed,
    })
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(usage)?;
    }
    let s = settings(&cli)?;
    match cli.command {
        Command::Analyze {
            scene,
            mode,
            mc_samples,
            out,
            csv,
        } => analyze(&s, &scene, mode, mc_samples, out.as_deref(), csv.as_deref()),
        Command::Rank { scene, t } => rank(&s, &scene, t),
        Command::Sweep {
            policy,
            tau,
            limit,
            sweep_out,
        } => sweep(&s, policy, tau, limit, sweep_out.as_deref()),
        Command::ExportDataset { scene, out } => export(&s, &scene, &out),
        Command::Characterize { reports, cdf } => characterize_cmd(&reports, cdf.as_deref()),
        Command::Bench {
            scene,
            t,
            repetitions,
        } => bench(&s, &scene, t, repetitions),
        Command::Fixture {
            kind,
            out,
            dist_before,
            dist_during,
            lanechange_speed,
        } => fixture(&s, kind, &out, dist_before, dist_during, lanechange_speed),
    }
}

fn open_out(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct RealtimeRecord {
    t: i64,
    n_samples: usize,
    single_sample: bool,
    degenerate_samples: usize,
    scene_sti_mean: f64,
    scene_sti_std: f64,
    actors: BTreeMap<String, Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<String>,
}

fn analyze(s: &Settings, path: &Path, mode: Mode, mc_samples: usize, out: Option<&Path>, csv: Option<&Path>) -> Outcome {
    let scene = load_scene(path)?;
    let reach = s.reach();
    let mut w = open_out(out)?;
    match mode {
        Mode::Oracle => {
            let reports = sti_profile(&scene, s.k, &reach);
            for r in &reports {
                writeln!(w, "{}", serde_json::to_string(r)?)?;
            }
            if let Some(p) = csv {
                write_text(p, &oracle_csv(&reports))?;
            }
        }
        Mode::Realtime => {
            if mc_samples == 0 {
                return Err(usage(anyhow!("--mc-samples must be at least 1")));
            }
            let noise = s.cfg.noise;
            let records: Vec<RealtimeRecord> = scene
                .ego
                .iter()
                .map(|e| {
                    let meas = measurements_from_scene(&scene, e.t, &noise, s.seed.wrapping_add(e.t as u64));
                    match mc_sti(&scene, &meas, e.t, s.k, mc_samples, &reach, &noise, s.seed) {
                        Ok(d) => RealtimeRecord {
                            t: e.t,
                            n_samples: d.n_samples,
                            single_sample: d.single_sample,
                            degenerate_samples: d.degenerate_samples,
                            scene_sti_mean: d.scene.mean,
                            scene_sti_std: d.scene.std,
                            actors: d.actors,
                            gap: None,
                        },
                        Err(err) => {
                            log::warn!("step {} skipped: {err}", e.t);
                            RealtimeRecord {
                                t: e.t,
                                n_samples: 0,
                                single_sample: false,
                                degenerate_samples: 0,
                                scene_sti_mean: 0.0,
                                scene_sti_std: 0.0,
                                actors: BTreeMap::new(),
                                gap: Some(err.to_string()),
                            }
                        }
                    }
                })
                .collect();
            for r in &records {
                writeln!(w, "{}", serde_json::to_string(r)?)?;
            }
            if let Some(p) = csv {
                write_text(p, &realtime_csv(&records))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn oracle_csv(reports: &[StiReport]) -> String {
    let ids: BTreeSet<&String> = reports.iter().flat_map(|r| r.actors.keys()).collect();
    let mut out = String::from("t,scene_sti,degenerate");
    for id in &ids {
        write!(out, ",{id}").unwrap();
    }
    out.push('\n');
    for r in reports {
        write!(out, "{},{},{}", r.t, r.scene_sti, r.degenerate).unwrap();
        for id in &ids {
            match r.actors.get(*id) {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn realtime_csv(records: &[RealtimeRecord]) -> String {
    let ids: BTreeSet<&String> = records.iter().flat_map(|r| r.actors.keys()).collect();
    let mut out = String::from("t,scene_sti_mean,scene_sti_std");
    for id in &ids {
        write!(out, ",{id}_mean,{id}_std").unwrap();
    }
    out.push('\n');
    for r in records {
        write!(out, "{},{},{}", r.t, r.scene_sti_mean, r.scene_sti_std).unwrap();
        for id in &ids {
            match r.actors.get(*id) {
                Some(v) => write!(out, ",{},{}", v.mean, v.std).unwrap(),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

fn rank(s: &Settings, path: &Path, t: Option<i64>) -> Outcome {
    let scene = load_scene(path)?;
    let reach = s.reach();
    // (actor, sti, step at which it was taken)
    let mut rows: Vec<(String, f64, i64)> = match t {
        Some(t) => {
            let snap = Snapshot::from_scene(&scene, t, s.k)?;
            let r = sti_step(&snap, &reach).report;
            r.actors.into_iter().map(|(id, v)| (id, v, t)).collect()
        }
        None => {
            let mut peak: BTreeMap<String, (f64, i64)> = BTreeMap::new();
            for r in sti_profile(&scene, s.k, &reach) {
                for (id, v) in r.actors {
                    let e = peak.entry(id).or_insert((v, r.t));
                    if v > e.0 {
                        *e = (v, r.t);
                    }
                }
            }
            peak.into_iter().map(|(id, (v, t))| (id, v, t)).collect()
        }
    };
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut w = open_out(None)?;
    writeln!(w, "rank\tactor\tsti\tt")?;
    for (i, (id, v, t)) in rows.iter().enumerate() {
        writeln!(w, "{}\t{id}\t{v:.6}\t{t}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(s: &Settings, policy: Policy, tau: f64, limit: Option<usize>, out: Option<&Path>) -> Outcome {
    let kind = match policy {
        Policy::Noop => PolicyKind::Noop,
        Policy::AlwaysEb => PolicyKind::AlwaysEb,
        Policy::ThresholdBrake => {
            if !(0.0..=1.0).contains(&tau) {
                return Err(usage(anyhow!("--tau must lie in [0, 1]")));
            }
            PolicyKind::ThresholdBrake { tau }
        }
    };
    let mut mutations = generate_mutations();
    if let Some(n) = limit {
        mutations.truncate(n);
    }
    let sim_cfg = s.cfg.sim_config();
    log::info!("simulating {} mutations", mutations.len());
    let result = run_sweep(&mutations, || kind.build(), &sim_cfg, &s.reach());
    let summary = &result.summary;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_text(&dir.join("summary.json"), &(serde_json::to_string_pretty(summary)? + "\n"))?;
        let mut w = open_out(Some(&dir.join("runs.jsonl")))?;
        for (i, r) in result.results.iter().enumerate() {
            match r {
                Ok(sim) => writeln!(w, "{}", serde_json::to_string(sim)?)?,
                Err(e) => writeln!(w, "{}", serde_json::json!({ "index": i, "error": e }))?,
            }
        }
        w.flush()?;
    }
    let ks = summary
        .ks
        .map(|k| format!("KS D={:.4} p={:.3e}", k.d, k.p))
        .unwrap_or_else(|| "KS n/a".into());
    println!(
        "policy={} runs={} failures={} accidents={} rate={:.4} {ks}",
        summary.policy, summary.runs, summary.failures, summary.accidents, summary.accident_rate
    );
    if summary.failures > 0 {
        return Err(Failure::Data(anyhow!("{} runs failed", summary.failures)));
    }
    Ok(())
}

fn export(s: &Settings, path: &Path, out: &Path) -> Outcome {
    let scene = load_scene(path)?;
    let samples = build_samples(&scene, s.k, &s.cfg.bev, &s.reach())?;
    let n = write_dataset(&samples, &s.cfg.bev, out)?;
    println!("wrote {n} samples to {}", out.display());
    Ok(())
}

fn read_reports(path: &Path) -> anyhow::Result<Vec<StiReport>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: not an oracle STI report", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn characterize_cmd(paths: &[PathBuf], cdf: Option<&Path>) -> Outcome {
    let mut reports = Vec::new();
    for p in paths {
        reports.extend(read_reports(p)?);
    }
    let table = characterize(&reports)?;
    println!("{}", serde_json::to_string_pretty(&table)?);
    if let Some(p) = cdf {
        write_text(p, &cdf_csv(&pooled(&reports)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    mean_s: f64,
    std_s: f64,
}

#[derive(Serialize)]
struct BenchReport {
    scene: String,
    t: i64,
    k: usize,
    goals: usize,
    actors: usize,
    passes: usize,
    repetitions: usize,
    /// std is 0 by construction when only one repetition ran
    single_repetition: bool,
    reachability_pass: Timing,
    sti_step: Timing,
    per_goal_per_pass_s: f64,
    scene_sti: f64,
    deterministic: bool,
}

fn bench(s: &Settings, path: &Path, t: Option<i64>, reps: usize) -> Outcome {
    if reps == 0 {
        return Err(usage(anyhow!("--repetitions must be at least 1")));
    }
    let scene = load_scene(path)?;
    let t = t.unwrap_or_else(|| scene.ego[0].t);
    let reach = s.reach();
    let mut single = Vec::with_capacity(reps);
    let mut full = Vec::with_capacity(reps);
    let mut reports: Vec<StiReport> = Vec::with_capacity(reps);
    let mut passes = 0;
    for _ in 0..reps {
        let start = Instant::now();
        reachable_set(&scene, t, s.k, &ActorMask::AllPresent, &reach)?;
        single.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        let snap = Snapshot::from_scene(&scene, t, s.k)?;
        let step = sti_step(&snap, &reach);
        full.push(start.elapsed().as_secs_f64());
        passes = step.passes();
        reports.push(step.report);
    }
    let deterministic = reports.windows(2).all(|w| w[0] == w[1]);
    let first = &reports[0];
    let sf = Summary::of(&full);
    let report = BenchReport {
        scene: path.display().to_string(),
        t,
        k: s.k,
        goals: first.goals,
        actors: first.actors.len(),
        passes,
        repetitions: reps,
        single_repetition: reps == 1,
        reachability_pass: {
            let m = Summary::of(&single);
            Timing {
                mean_s: m.mean,
                std_s: m.std,
            }
        },
        per_goal_per_pass_s: sf.mean / (first.goals.max(1) * passes) as f64,
        sti_step: Timing {
            mean_s: sf.mean,
            std_s: sf.std,
        },
        scene_sti: first.scene_sti,
        deterministic,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !deterministic {
        return Err(Failure::Data(anyhow!("repeated STI steps disagree")));
    }
    Ok(())
}

fn fixture(s: &Settings, kind: FixtureKind, out: &Path, before: f64, during: f64, speed: f64) -> Outcome {
    let scene: Scene = match kind {
        FixtureKind::CutIn => {
            let params = CutInParams::new(before, during, speed).map_err(usage)?;
            cut_in_scene(&params, &s.cfg.sim_config())?
        }
        FixtureKind::WorkedExample => worked_example(),
        FixtureKind::Bench => bench_scene(),
    };
    save_scene(&scene, out)?;
    Ok(())
}
