use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use contrast_bnb::contrast::{evaluate, Loss};
use contrast_bnb::event::{EventWindow, GridSpec};
use contrast_bnb::experiment::{
    desk_trial, trajectory_comparison, DeskConfig, TrajectoryConfig, TrialOutcome,
};
use contrast_bnb::io::{
    read_events_file, window_from_file, write_events_file, write_manifest, EventHeader,
    ManifestEntry, RigConfig,
};
use contrast_bnb::sim::{
    add_noise, curved_trajectory, gradient_ascent, grid_search, rms_eval, trial_sequence,
    AscentConfig, EventOptions, NoiseSpec, TrialSetup,
};
use contrast_bnb::solver::{solve, SolverConfig};
use contrast_bnb::warp::{AckermannWarp, MotionParams, SearchSpace};

use crate::manifest::{sibling, Record, RunManifest};
use crate::{
    BenchArgs, Cli, CliError, Command, EvalArgs, EventsArgs, GridArgs, LocalArgs, Range,
    ReplayArgs, RigArgs, SimulateArgs, SolveArgs, SolverArgs, SpaceArgs,
};

pub const THREADS_ENV: &str = "CONTRASTBNB_THREADS";

/// Thread cap from the environment, or `default` when unset.
pub fn thread_limit(default: usize) -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{s}'"))),
        Err(_) => Ok(default.max(1)),
    }
}

/// Seed used for the noise of window `k` (window 0 matches the benchmark trials).
fn noise_seed(seed: u64, k: usize) -> u64 {
    (seed ^ 0x0015E).wrapping_add(k as u64)
}

struct Run {
    record: Record,
    manifest_path: PathBuf,
    seed: Option<u64>,
    config: Record,
    outputs: Vec<PathBuf>,
}

pub fn execute(cli: &Cli, args: &[String]) -> Result<Record, CliError> {
    let started = Instant::now();
    let (command, run) = match &cli.command {
        Command::Simulate(a) => ("simulate", simulate(a)?),
        Command::Solve(a) => ("solve", cmd_solve(a)?),
        Command::Grid(a) => ("grid", cmd_grid(a)?),
        Command::Local(a) => ("local", cmd_local(a)?),
        Command::Eval(a) => ("eval", cmd_eval(a)?),
        Command::Bench(a) => ("bench", bench(a)?),
        Command::Replay(a) => return replay(a),
    };
    let mut timings = Record::default();
    timings.push("wall_s", started.elapsed().as_secs_f64());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        cwd: std::env::current_dir()?,
        args: args.to_vec(),
        seed: run.seed,
        config: run.config,
        results: run.record.clone(),
        timings,
        outputs: run.outputs,
    };
    let path = cli.manifest.clone().unwrap_or(run.manifest_path);
    manifest.write(&path)?;
    Ok(run.record)
}

fn load_rig(a: &RigArgs) -> Result<RigConfig, CliError> {
    match &a.config {
        Some(p) => RigConfig::load(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => Ok(RigConfig::default()),
    }
}

fn rig_record(cfg: &mut Record, rig: &RigConfig) {
    cfg.push("f", rig.f);
    cfg.push("u0", rig.u0);
    cfg.push("v0", rig.v0);
    cfg.push("s", rig.s);
    cfg.push("d", rig.d);
    cfg.push("width", rig.width);
    cfg.push("height", rig.height);
}

fn space_of(omega: Range, v: Range) -> Result<SearchSpace, CliError> {
    SearchSpace::new(omega.min, omega.max, v.min, v.max).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_window(a: &EventsArgs) -> Result<(EventWindow, EventHeader), CliError> {
    if let Some(dt) = a.dt {
        if !(dt > 0.0) {
            return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
        }
    }
    let (events, header) = read_events_file(&a.events)
        .map_err(|e| CliError::Failed(format!("{}: {e}", a.events.display())))?;
    let window = window_from_file(events, &header, a.dt)
        .map_err(|e| CliError::Failed(format!("{}: {e}", a.events.display())))?;
    Ok((window, header))
}

fn solver_config(a: &SolverArgs, threads: usize) -> Result<SolverConfig, CliError> {
    let cfg = SolverConfig {
        branching_limit: a.nb,
        width_eps_omega: a.eps_omega,
        width_eps_v: a.eps_v,
        termination_mode: a.mode,
        split_mode: a.split,
        bound_eq_tol: a.tol,
        threads,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn solver_record(cfg: &mut Record, s: &SolverConfig) {
    cfg.push("eps_omega", s.width_eps_omega);
    cfg.push("eps_v", s.width_eps_v);
    cfg.push("nb", s.branching_limit);
    cfg.push("mode", s.termination_mode);
    cfg.push("split", s.split_mode);
    cfg.push("tol", s.bound_eq_tol);
}

fn loss_record(cfg: &mut Record, loss: &Loss) {
    cfg.push("loss", loss.kind);
    cfg.push("delta", loss.delta);
}

fn gt_errors(record: &mut Record, header: &EventHeader, theta: MotionParams) {
    if let Some(gt) = header.gt {
        record.push("omega_err_degps", (theta.omega - gt.omega).to_degrees());
        record.push("v_err_mps", theta.v - gt.v);
    }
}

fn simulate(a: &SimulateArgs) -> Result<Run, CliError> {
    if a.events == 0 || a.windows == 0 || a.segments == 0 {
        return Err(CliError::Usage("--events, --windows and --segments must be at least 1".into()));
    }
    if !(a.dt > 0.0) || !(a.ne_ratio >= 0.0) || !(a.extent > 0.0) {
        return Err(CliError::Usage("--dt and --extent must be positive, --ne-ratio non-negative".into()));
    }
    let mut rig = load_rig(&a.rig)?;
    rig.d = a.depth;
    let warp = rig.warp()?;
    let setup = TrialSetup {
        n_segments: a.segments,
        n_events: a.events,
        extent: a.extent,
        dt: a.dt,
        truth: MotionParams::new(a.omega, a.v),
        opts: EventOptions {
            width: rig.width,
            height: rig.height,
            continuous_px: a.continuous_px,
        },
    };
    let truths = curved_trajectory(a.windows, a.omega, a.omega_amp, a.v);
    let (_, windows) =
        trial_sequence(&setup, &truths, &warp, a.seed).map_err(|e| CliError::Failed(e.to_string()))?;
    let sensor = rig.sensor();

    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    let mut total = 0;
    for (k, (w, gt)) in windows.iter().zip(&truths).enumerate() {
        let noisy = add_noise(w, &NoiseSpec { ne_ratio: a.ne_ratio, seed: noise_seed(a.seed, k) }, &sensor)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        total += noisy.len();
        let path = if a.windows == 1 {
            a.out.clone()
        } else {
            let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            a.out.with_file_name(format!("{stem}.w{k:03}.txt"))
        };
        let header = EventHeader {
            gt: Some(*gt),
            window: Some((noisy.t_ref(), noisy.duration())),
        };
        write_events_file(&path, noisy.events(), &header).map_err(|e| CliError::Failed(e.to_string()))?;
        entries.push(ManifestEntry {
            index: k,
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            t_ref: noisy.t_ref(),
            dt: noisy.duration(),
        });
        outputs.push(path);
    }
    if a.windows > 1 {
        std::fs::write(&a.out, write_manifest(&entries))?;
        outputs.push(a.out.clone());
    }
    let rig_path = sibling(&a.out, ".cfg");
    std::fs::write(&rig_path, rig.to_text())?;
    outputs.push(rig_path.clone());

    let mut record = Record::default();
    record.push("file", a.out.display());
    record.push("rig_file", rig_path.display());
    record.push("windows", a.windows);
    record.push("events_per_window", a.events);
    record.push("noise_per_window", (a.ne_ratio * a.events as f64).round() as usize);
    record.push("total_events", total);
    record.push("gt_omega", truths[0].omega);
    record.push("gt_v", truths[0].v);

    let mut config = Record::default();
    rig_record(&mut config, &rig);
    config.push("segments", a.segments);
    config.push("events", a.events);
    config.push("dt", a.dt);
    config.push("omega", a.omega);
    config.push("v", a.v);
    config.push("omega_amp", a.omega_amp);
    config.push("ne_ratio", a.ne_ratio);
    config.push("extent", a.extent);
    config.push("continuous_px", a.continuous_px);
    Ok(Run {
        record,
        manifest_path: sibling(&a.out, ".run"),
        seed: Some(a.seed),
        config,
        outputs,
    })
}

fn prepare(
    input: &EventsArgs,
    rig: &RigArgs,
    space: &SpaceArgs,
) -> Result<(EventWindow, EventHeader, RigConfig, AckermannWarp, SearchSpace, GridSpec), CliError> {
    let rig = load_rig(rig)?;
    let warp = rig.warp()?;
    let space = space_of(space.omega_range, space.v_range)?;
    let (window, header) = load_window(input)?;
    let spec = warp.padded_grid(&rig.sensor(), &space, window.duration())?;
    Ok((window, header, rig, warp, space, spec))
}

fn cmd_solve(a: &SolveArgs) -> Result<Run, CliError> {
    let loss = a.loss.loss()?;
    let cfg = solver_config(&a.solver, thread_limit(1)?)?;
    let (window, header, rig, warp, space, spec) = prepare(&a.input, &a.rig, &a.space)?;
    let r = solve(&window, &space, &loss, &cfg, &warp, &spec)?;

    let mut record = Record::default();
    record.push("omega_hat", r.theta_hat.omega);
    record.push("v_hat", r.theta_hat.v);
    record.push("loss", r.best_lower);
    record.push("lower", r.best_lower);
    record.push("upper", r.global_upper);
    record.push("branches", r.branches_explored);
    record.push("pruned", r.branches_pruned);
    record.push("iterations", r.iterations);
    record.push("terminated_by", r.terminated_by);
    gt_errors(&mut record, &header, r.theta_hat);
    record.push("wall_s", r.wall_time);

    let mut config = Record::default();
    rig_record(&mut config, &rig);
    loss_record(&mut config, &loss);
    config.push("omega_range", a.space.omega_range);
    config.push("v_range", a.space.v_range);
    solver_record(&mut config, &cfg);
    config.push("events", window.len());
    Ok(Run {
        record,
        manifest_path: sibling(&a.input.events, ".solve.run"),
        seed: None,
        config,
        outputs: vec![],
    })
}

fn cmd_grid(a: &GridArgs) -> Result<Run, CliError> {
    let loss = a.loss.loss()?;
    if !(a.step_omega > 0.0 && a.step_v > 0.0) {
        return Err(CliError::Usage("lattice steps must be positive".into()));
    }
    let (window, header, rig, warp, space, spec) = prepare(&a.input, &a.rig, &a.space)?;
    let started = Instant::now();
    let (theta, value) = grid_search(&window, &space, a.step_omega, a.step_v, &loss, &warp, &spec)
        .map_err(|e| CliError::Failed(e.to_string()))?;

    let mut record = Record::default();
    record.push("omega_hat", theta.omega);
    record.push("v_hat", theta.v);
    record.push("loss", value);
    gt_errors(&mut record, &header, theta);
    record.push("wall_s", started.elapsed().as_secs_f64());

    let mut config = Record::default();
    rig_record(&mut config, &rig);
    loss_record(&mut config, &loss);
    config.push("omega_range", a.space.omega_range);
    config.push("v_range", a.space.v_range);
    config.push("step_omega", a.step_omega);
    config.push("step_v", a.step_v);
    config.push("events", window.len());
    Ok(Run {
        record,
        manifest_path: sibling(&a.input.events, ".grid.run"),
        seed: None,
        config,
        outputs: vec![],
    })
}

fn cmd_local(a: &LocalArgs) -> Result<Run, CliError> {
    let loss = a.loss.loss()?;
    if !(a.sigma > 0.0 && a.init_step > 0.0) {
        return Err(CliError::Usage("--sigma and --init-step must be positive".into()));
    }
    let (window, header, rig, warp, _, spec) = prepare(&a.input, &a.rig, &a.space)?;
    let ascent = AscentConfig {
        initial_step: a.init_step,
        max_iters: a.max_iters,
        ..AscentConfig::default()
    };
    let started = Instant::now();
    let init = MotionParams::new(a.init_omega, a.init_v);
    let (theta, smoothed) = gradient_ascent(&window, init, &loss, a.sigma, &ascent, &warp, &spec)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let batch = evaluate(&warp.build_iwe(&window, theta, &spec), &loss, window.len() as u64);

    let mut record = Record::default();
    record.push("omega_hat", theta.omega);
    record.push("v_hat", theta.v);
    record.push("loss", batch);
    record.push("smoothed_loss", smoothed);
    gt_errors(&mut record, &header, theta);
    record.push("wall_s", started.elapsed().as_secs_f64());

    let mut config = Record::default();
    rig_record(&mut config, &rig);
    loss_record(&mut config, &loss);
    config.push("init_omega", a.init_omega);
    config.push("init_v", a.init_v);
    config.push("sigma", a.sigma);
    config.push("init_step", a.init_step);
    config.push("max_iters", a.max_iters);
    config.push("events", window.len());
    Ok(Run {
        record,
        manifest_path: sibling(&a.input.events, ".local.run"),
        seed: None,
        config,
        outputs: vec![],
    })
}

/// Reads `omega v` pairs, one per line; `#` comments, commas or spaces between values.
pub fn read_motion_list(path: &Path) -> Result<Vec<MotionParams>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Failed(format!("{}:{}: bad number", path.display(), i + 1)))?;
        match vals[..] {
            [w, v] => out.push(MotionParams::new(w, v)),
            _ => {
                return Err(CliError::Failed(format!(
                    "{}:{}: expected 'omega v'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn cmd_eval(a: &EvalArgs) -> Result<Run, CliError> {
    let est = read_motion_list(&a.estimates)?;
    let gt = read_motion_list(&a.truths)?;
    let (rms_w, rms_v) = rms_eval(&est, &gt).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut record = Record::default();
    record.push("windows", est.len());
    record.push("rms_omega_degps", rms_w);
    record.push("rms_v_mps", rms_v);
    Ok(Run {
        record,
        manifest_path: sibling(&a.estimates, ".eval.run"),
        seed: None,
        config: Record::default(),
        outputs: vec![],
    })
}

/// Runs `jobs` on up to `threads` workers, keeping results in job order.
fn parallel_map<T, R, F>(jobs: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if threads <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let per = jobs.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(per)
            .map(|chunk| s.spawn(|| chunk.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("bench worker panicked"))
            .collect()
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub const ROBUSTNESS_COLUMNS: &str =
    "seed,ne_ratio,omega_err_degps,v_err_mps,omega_hat,v_hat,loss,branches,terminated_by";
pub const TRAJECTORY_COLUMNS: &str = "method,init_omega,init_v,rms_omega_degps,rms_v_mps";

fn bench(a: &BenchArgs) -> Result<Run, CliError> {
    if a.trials == 0 || a.events == 0 || a.segments == 0 {
        return Err(CliError::Usage("--trials, --events and --segments must be at least 1".into()));
    }
    if a.ne_ratios.iter().any(|r| !(*r >= 0.0)) {
        return Err(CliError::Usage("noise ratios must be non-negative".into()));
    }
    let mut rig = load_rig(&a.rig)?;
    if a.rig.config.is_none() {
        rig.d = contrast_bnb::sim::DEFAULT_DEPTH;
    }
    let warp = rig.warp()?;
    let loss = Loss::new(a.loss, a.delta).map_err(|e| CliError::Usage(e.to_string()))?;
    let threads = thread_limit(std::thread::available_parallelism().map_or(1, |n| n.get()))?;
    let solver = solver_config(&a.solver, 1)?;
    let setup = TrialSetup {
        n_segments: a.segments,
        n_events: a.events,
        extent: contrast_bnb::sim::DEFAULT_EXTENT,
        dt: a.dt,
        truth: MotionParams::new(a.omega, a.v),
        opts: EventOptions::sensor(rig.width, rig.height),
    };

    let mut config = Record::default();
    rig_record(&mut config, &rig);
    loss_record(&mut config, &loss);
    solver_record(&mut config, &solver);
    config.push("trials", a.trials);
    config.push("events", a.events);
    config.push("segments", a.segments);
    config.push("omega", a.omega);
    config.push("v", a.v);
    config.push("dt", a.dt);

    let mut record = Record::default();
    let mut csv = String::new();
    if a.trajectory {
        let space = space_of(
            a.omega_range.unwrap_or(Range {
                min: a.omega - a.omega_amp.abs() - 0.1,
                max: a.omega + a.omega_amp.abs() + 0.1,
            }),
            a.v_range.unwrap_or(Range { min: a.v - 0.2, max: a.v + 0.2 }),
        )?;
        let cfg = TrajectoryConfig {
            setup,
            n_windows: a.windows,
            omega_mean: a.omega,
            omega_amp: a.omega_amp,
            space,
            loss,
            solver,
            sigma: a.sigma,
            ascent: AscentConfig::default(),
            inits: TrajectoryConfig::init_grid(&space, a.init_grid),
        };
        let out = trajectory_comparison(&cfg, &warp, a.seed)?;
        csv.push_str(TRAJECTORY_COLUMNS);
        csv.push('\n');
        let _ = writeln!(csv, "bnb,,,{},{}", out.bnb_rms.0, out.bnb_rms.1);
        for run in &out.local {
            let _ = writeln!(csv, "local,{},{},{},{}", run.init.omega, run.init.v, run.rms.0, run.rms.1);
        }
        record.push("rows", 1 + out.local.len());
        record.push("bnb_rms_omega_degps", out.bnb_rms.0);
        record.push("bnb_rms_v_mps", out.bnb_rms.1);
        let beaten = out.local.iter().filter(|r| r.rms.0 < out.bnb_rms.0).count();
        record.push("local_runs_beating_bnb_omega", beaten);
        config.push("windows", a.windows);
        config.push("omega_amp", a.omega_amp);
        config.push("init_grid", a.init_grid);
        config.push("sigma", a.sigma);
        config.push("omega_range", Range { min: space.omega_min, max: space.omega_max });
        config.push("v_range", Range { min: space.v_min, max: space.v_max });
    } else {
        let space = space_of(
            a.omega_range.unwrap_or(Range { min: 0.4, max: 0.6 }),
            a.v_range.unwrap_or(Range { min: 0.4, max: 0.6 }),
        )?;
        let cfg = DeskConfig {
            setup,
            space,
            loss,
            solver,
            grid_step: None,
        };
        let jobs: Vec<(f64, u64)> = a
            .ne_ratios
            .iter()
            .flat_map(|&r| (0..a.trials as u64).map(move |i| (r, i)))
            .collect();
        let results: Vec<Result<TrialOutcome, CliError>> = parallel_map(&jobs, threads, |&(r, i)| {
            desk_trial(&cfg, &warp, a.seed.wrapping_add(i), r).map_err(CliError::from)
        });
        csv.push_str(ROBUSTNESS_COLUMNS);
        csv.push('\n');
        let mut rows = Vec::with_capacity(results.len());
        for res in results {
            let t = res?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                t.seed,
                t.ne_ratio,
                t.omega_err().to_degrees(),
                t.v_err(),
                t.bnb.theta_hat.omega,
                t.bnb.theta_hat.v,
                t.bnb_loss,
                t.bnb.branches_explored,
                t.bnb.terminated_by
            );
            rows.push(t);
        }
        record.push("rows", rows.len());
        for &r in &a.ne_ratios {
            let (w, v): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|t| t.ne_ratio == r)
                .map(|t| (t.omega_err().to_degrees(), t.v_err()))
                .unzip();
            let abs_w: Vec<f64> = w.iter().map(|x| x.abs()).collect();
            let abs_v: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            record.push(format!("ne_{r}.mean_abs_omega_err_degps"), mean_sd(&abs_w).0);
            record.push(format!("ne_{r}.mean_abs_v_err_mps"), mean_sd(&abs_v).0);
            record.push(format!("ne_{r}.sd_omega_err_degps"), mean_sd(&w).1);
            record.push(format!("ne_{r}.sd_v_err_mps"), mean_sd(&v).1);
        }
        let ratios: Vec<String> = a.ne_ratios.iter().map(|r| r.to_string()).collect();
        config.push("ne_ratios", ratios.join(","));
        config.push("omega_range", Range { min: space.omega_min, max: space.omega_max });
        config.push("v_range", Range { min: space.v_min, max: space.v_max });
    }
    std::fs::write(&a.out, &csv)?;
    record.push("file", a.out.display());
    Ok(Run {
        record,
        manifest_path: sibling(&a.out, ".run"),
        seed: Some(a.seed),
        config,
        outputs: vec![a.out.clone()],
    })
}

fn replay(a: &ReplayArgs) -> Result<Record, CliError> {
    let text = std::fs::read_to_string(&a.from)
        .map_err(|e| CliError::Failed(format!("{}: {e}", a.from.display())))?;
    let m = RunManifest::parse(&text).map_err(CliError::Usage)?;
    if m.command == "replay" {
        return Err(CliError::Usage("cannot replay a replay".into()));
    }
    if m.cwd.is_dir() {
        std::env::set_current_dir(&m.cwd)?;
    }
    let before: Vec<Option<Vec<u8>>> = m.outputs.iter().map(|p| std::fs::read(p).ok()).collect();
    let argv: Vec<String> = std::iter::once("contrastbnb".to_string()).chain(m.args.iter().cloned()).collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let record = execute(&cli, &m.args)?;

    let results_match = record.stable() == m.results.stable();
    let mut differing = Vec::new();
    for (p, old) in m.outputs.iter().zip(&before) {
        if old.as_ref() != std::fs::read(p).ok().as_ref() {
            differing.push(p.display().to_string());
        }
    }
    if !results_match || !differing.is_empty() {
        return Err(CliError::Failed(format!(
            "replay of '{}' differs (results match: {results_match}; differing outputs: [{}])",
            m.command,
            differing.join(", ")
        )));
    }
    let mut out = Record::default();
    out.push("command", &m.command);
    out.push("results", "identical");
    out.push("outputs_checked", m.outputs.len());
    Ok(out)
}
