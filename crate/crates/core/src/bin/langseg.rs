use clap::{Parser, Subcommand, ValueEnum};
use langseg::adapt::{desk_datasets, run_ada, AcquisitionKind, LoopConfig};
use langseg::command::{parse_command, render_program};
use langseg::effort::{estimate, EffortModel, EffortTable};
use langseg::exec::{execute, ExecConfig, ExecEnv};
use langseg::io::{self, IoError};
use langseg::service::{self, AppState};
use langseg::synth::{generate_phantoms, Domain, DomainShift, PhantomSpec};
use langseg::Roi;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "langseg", version, about = "Language-driven segmentation refinement")]
struct Cli {
    /// Flat `key = value` file; explicit flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Treat execution warnings as errors (exit code 4).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shift {
    None,
    Intensity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Acq {
    Entropy,
    Random,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write seeded phantoms as PGM files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "none")]
        shift: Shift,
        /// Also write this many held-out images; the output then has train/ and test/.
        #[arg(long)]
        test: Option<usize>,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Compile a command to program text.
    Parse {
        command: String,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Run a command on one roi of a mask.
    Refine {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        roi: Roi,
        #[arg(long)]
        command: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eta_trace: Option<PathBuf>,
    },
    /// Run the active adaptation loop with simulated feedback.
    Loop {
        /// Source directory; omitted means the built-in seeded phantoms.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        roi_size: Option<usize>,
        #[arg(long, value_enum)]
        acq: Option<Acq>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        self_train: bool,
    },
    /// Compare polygon and spoken-feedback annotation time.
    Effort {
        #[arg(long, requires = "words", conflicts_with = "from_report")]
        vertices: Option<u64>,
        #[arg(long, requires = "vertices")]
        words: Option<u64>,
        #[arg(long)]
        from_report: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the refinement API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Format(String),
    Strict(String),
    Other(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_format_error() {
            Failure::Format(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<io::Config, Failure> {
    let Some(path) = path else {
        return Ok(io::Config::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    let cfg = io::parse_config(&text)?;
    cfg.check_keys()?;
    Ok(cfg)
}

fn read_pgm_file(path: &Path) -> Result<io::Pgm, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    io::read_pgm(&bytes).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Synth { out, n, seed, shift, test, size } => {
            let spec = PhantomSpec {
                width: size,
                height: size,
                count: n + test.unwrap_or(0),
                shift: match shift {
                    Shift::None => DomainShift::None,
                    Shift::Intensity => DomainShift::intensity(),
                },
                domain: match shift {
                    Shift::None => Domain::Source,
                    Shift::Intensity => Domain::TargetTrain,
                },
                seed,
                ..PhantomSpec::default()
            };
            let ds = generate_phantoms(&spec).map_err(Failure::Usage)?;
            match test {
                Some(_) => {
                    io::write_dataset(&out.join("train"), &ds.items[..n])?;
                    io::write_dataset(&out.join("test"), &ds.items[n..])?;
                }
                None => io::write_dataset(&out, &ds.items)?,
            }
            println!("wrote {} images to {}", ds.items.len(), out.display());
        }
        Cmd::Parse { command, emit } => {
            let program = parse_command(&command).map_err(|e| Failure::Format(e.to_string()))?;
            let text = render_program(&program);
            match emit {
                Some(path) => write_file(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Cmd::Refine { image, mask, roi, command, out, eta_trace } => {
            let mut exec = ExecConfig::default();
            config.apply_exec(&mut exec)?;
            let img = io::image_from_pgm(&read_pgm_file(&image)?);
            let m = io::mask_from_pgm(&read_pgm_file(&mask)?);
            if m.dims() != (img.width(), img.height()) {
                return Err(Failure::Format("mask and image sizes differ".into()));
            }
            roi.validate(img.width(), img.height()).map_err(|e| Failure::Usage(e.to_string()))?;
            let program = parse_command(&command).map_err(|e| Failure::Format(e.to_string()))?;
            let mut env = ExecEnv::new(img, m, roi, exec).map_err(other)?;
            let (refined, log) = execute(&program, &mut env).map_err(other)?;
            write_file(&out, &io::write_pgm(&io::mask_to_pgm(&refined)))?;
            if let Some(path) = eta_trace {
                // One `t,eta` block per refine step; t restarts at 1 for each.
                let mut csv = String::from("t,eta\n");
                for t in log.eta_traces() {
                    csv.extend(t.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
                }
                write_file(&path, csv.as_bytes())?;
            }
            print!("{}", render_program(&program));
            for s in &log.steps {
                if let Some(best) = s.best_iter {
                    println!("{} {}: best iteration {best}", s.op, s.direction.label());
                }
            }
            let warnings: Vec<&str> = log.warnings().collect();
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if cli.strict && !warnings.is_empty() {
                return Err(Failure::Strict(format!("{} warning(s)", warnings.len())));
            }
        }
        Cmd::Loop { source, target, budget, rounds, roi_size, acq, seed, report, self_train } => {
            let mut cfg = LoopConfig::default();
            config.apply_loop(&mut cfg)?;
            if let Some(v) = budget {
                cfg.plan.budget_percent = v;
            }
            if let Some(v) = rounds {
                cfg.plan.rounds = v;
            }
            if let Some(v) = roi_size {
                cfg.plan.roi_w = v;
                cfg.plan.roi_h = v;
            }
            if let Some(a) = acq {
                cfg.acquisition = match a {
                    Acq::Entropy => AcquisitionKind::Entropy,
                    Acq::Random => AcquisitionKind::Random,
                };
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.self_train |= self_train;
            cfg.plan.validate().map_err(Failure::Usage)?;
            let (default_source, default_target) = desk_datasets(20, 20, 10, cfg.seed);
            let source = match source {
                Some(dir) => io::read_dataset(&dir, Domain::Source)?,
                None => default_source,
            };
            let target = match target {
                Some(dir) => io::read_split_dataset(&dir)?,
                None => default_target,
            };
            let r = run_ada(&source, &target, &cfg).map_err(other)?;
            io::save_json(&report, &r)?;
            println!(
                "source-only Dice {:.4}, adapted Dice {:.4} ({:+.1} points) after {} rounds",
                r.source_only.mean_foreground,
                r.final_test.mean_foreground,
                r.improvement_points(),
                r.rounds.len()
            );
            let warnings = r.rounds.iter().flat_map(|x| &x.rois).map(|x| x.warnings.len()).sum::<usize>();
            if cli.strict && warnings > 0 {
                return Err(Failure::Strict(format!("{warnings} warning(s) in roi refinements")));
            }
        }
        Cmd::Effort { vertices, words, from_report, json } => {
            let (label, v, w) = match (vertices, words, from_report) {
                (Some(v), Some(w), None) => ("counts".to_string(), v, w),
                (None, None, Some(path)) => {
                    let r: langseg::adapt::LoopReport = io::load_json(&path)?;
                    (path.display().to_string(), r.total_vertices, r.total_words)
                }
                _ => return Err(Failure::Usage("give --vertices and --words, or --from-report".into())),
            };
            let report = estimate(v, w, &EffortModel::default()).map_err(other)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(other)?);
            } else {
                print!("{}", EffortTable(&[(label, report)]));
            }
        }
        Cmd::Serve { port, host, data } => {
            let mut cfg = LoopConfig::default();
            config.apply_loop(&mut cfg)?;
            let source = match data.as_ref().map(|d| d.join("source")).filter(|d| d.is_dir()) {
                Some(dir) => io::read_dataset(&dir, Domain::Source)?,
                None => desk_datasets(20, 0, 0, cfg.seed).0,
            };
            let model = langseg::adapt::train_source(&source, &cfg.source_train).map_err(other)?;
            let state = AppState::new(model, data);
            let rt = tokio::runtime::Runtime::new().map_err(other)?;
            rt.block_on(service::serve(state, (host, port).into())).map_err(other)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (2, m),
                Failure::Format(m) => (3, m),
                Failure::Strict(m) => (4, m),
                Failure::Other(m) => (1, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
