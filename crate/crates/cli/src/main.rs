//! `deadeye`: generate, render, simulate and analyze monocular-popout
//! experiments, highlight charts, and serve bundles to the browser runner.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use deadeye_core::chart::{compare_composite, render_chart_pair, series_from_csv, ChartSpec, ComparePair};
use deadeye_core::config::Config;
use deadeye_core::observer::{simulate_cohort, CohortOptions, Observer, ParamJitter};
use deadeye_core::render::{compose, render_crosshair, render_pair_with, ComposeMode, Raster, StereoPair};
use deadeye_core::scene::{Experiment, Eye};
use deadeye_core::schema::{load_json, save_json};
use deadeye_core::session::load_log_dir;
use deadeye_core::stats::{analyze, svg};
use deadeye_core::stimgen::{generate_plan_with, instantiate_trial, TrialPlan, CANONICAL_SEED};
use deadeye_server::store::Store;
use deadeye_server::{data_dir_from_env, AppState, ExperimentBundle};

#[derive(Parser)]
#[command(name = "deadeye", version, about = "Monocular popout stimuli, simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// TOML file with geometry, layout, timing, palette and crosshair settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<Config> {
        match &self.config {
            Some(p) => Ok(Config::load(p)?),
            None => Ok(Config::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a balanced trial plan.
    Gen {
        #[arg(long, default_value = "preattentive")]
        experiment: Experiment,
        #[arg(long, default_value_t = CANONICAL_SEED)]
        seed: u64,
        /// Block order as comma-separated set sizes (default ascending).
        #[arg(long, value_delimiter = ',')]
        block_order: Option<Vec<usize>>,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one composite image (or per-eye pair) per trial.
    Render {
        #[arg(long)]
        plan: PathBuf,
        /// anaglyph, side-by-side or per-eye.
        #[arg(long, default_value = "anaglyph")]
        mode: ComposeMode,
        /// Render only this block (0-based).
        #[arg(long)]
        block: Option<usize>,
        /// Also write the fixation cross as crosshair.png.
        #[arg(long)]
        crosshair: bool,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run simulated observers through a plan and write one log per subject.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        /// preattentive, serial, oracle, always-yes, or a TOML/JSON observer file.
        #[arg(long, default_value = "preattentive")]
        observer: String,
        #[arg(long, default_value_t = 21)]
        subjects: usize,
        #[arg(long, default_value_t = CANONICAL_SEED)]
        seed: u64,
        /// Between-subject SD added to probability parameters.
        #[arg(long, default_value_t = 0.0)]
        probability_sd: f64,
        /// Between-subject SD (ms) added to the serial observer's base time.
        #[arg(long, default_value_t = 0.0)]
        time_sd_ms: f64,
        /// Also write a CSV next to each log.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze a directory of session logs.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a plain-text report here (otherwise it goes to stdout).
        #[arg(long)]
        text: Option<PathBuf>,
        /// Directory for SVG plots.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Render a line chart from CSV with some series shown to one eye only.
    Chart {
        #[arg(long)]
        csv: PathBuf,
        /// Series to highlight (repeatable).
        #[arg(long)]
        highlight: Vec<String>,
        /// Eye that sees the highlighted series; the other eye does not.
        #[arg(long, default_value = "left")]
        eye: Eye,
        #[arg(long, default_value_t = 1)]
        stroke: u32,
        #[arg(long, default_value = "per-eye")]
        mode: ComposeMode,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Show two images to different eyes so their differences pop out.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "anaglyph")]
        mode: ComposeMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Package a plan for the browser runner.
    Bundle {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Also pre-render images into this directory.
        #[arg(long)]
        prerender: Option<PathBuf>,
        #[arg(long, default_value = "anaglyph")]
        mode: ComposeMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a bundle and collect session logs.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Log directory (default: $DEADEYE_DATA_DIR or ./deadeye-data).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Directory holding pre-rendered assets listed in the bundle.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_plan(path: &Path) -> Result<TrialPlan> {
    let plan: TrialPlan = load_json(path)?;
    plan.validate()
        .with_context(|| format!("{} is not a valid plan", path.display()))?;
    Ok(plan)
}

fn write_composite(pair: &StereoPair, mode: ComposeMode, dir: &Path, stem: &str) -> Result<usize> {
    let composite = compose(pair, mode);
    let files = composite.files(mode);
    for (suffix, raster) in &files {
        raster.write_png(&dir.join(format!("{stem}_{suffix}.png")))?;
    }
    Ok(files.len())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            experiment,
            seed,
            block_order,
            config,
            out,
        } => {
            let mut options = config.load()?.plan_options()?;
            options.block_order = block_order;
            let plan = generate_plan_with(experiment, seed, &options)?;
            save_json(&out, &plan)?;
            eprintln!("wrote {} trials to {}", plan.len(), out.display());
        }
        Command::Render {
            plan,
            mode,
            block,
            crosshair,
            config,
            out,
        } => {
            let cfg = config.load()?;
            let plan = load_plan(&plan)?;
            if let Some(b) = block {
                if b >= plan.blocks.len() {
                    bail!("plan has {} blocks; --block {b} is out of range", plan.blocks.len());
                }
            }
            create_dir(&out)?;
            let mut count = 0;
            for (i, (b, _)) in plan.trials().enumerate() {
                if block.is_some_and(|want| want != b) {
                    continue;
                }
                let stim = instantiate_trial(&plan, i)?;
                let pair = render_pair_with(&stim, &cfg.geometry, cfg.render)?;
                write_composite(&pair, mode, &out, &format!("{i:04}"))?;
                count += 1;
            }
            if crosshair {
                render_crosshair(&cfg.geometry, cfg.crosshair, plan.palette.background, plan.palette.crosshair)
                    .write_png(&out.join("crosshair.png"))?;
            }
            eprintln!("rendered {count} trials into {}", out.display());
        }
        Command::Simulate {
            plan,
            observer,
            subjects,
            seed,
            probability_sd,
            time_sd_ms,
            csv,
            config,
            out,
        } => {
            let cfg = config.load()?;
            let plan = load_plan(&plan)?;
            let observer = Observer::from_name_or_file(&observer)?;
            let options = CohortOptions {
                jitter: ParamJitter {
                    probability_sd,
                    time_sd_ms,
                },
                timing: cfg.timing,
                ..CohortOptions::default()
            };
            let logs = simulate_cohort(&observer, &plan, subjects, seed, &options)?;
            create_dir(&out)?;
            for log in &logs {
                let id = &log.participant().id;
                log.save(&out.join(format!("{id}.jsonl")))?;
                if csv {
                    let path = out.join(format!("{id}.csv"));
                    let f = std::fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    log.write_csv(f)?;
                }
            }
            eprintln!("wrote {} session logs to {}", logs.len(), out.display());
        }
        Command::Analyze {
            logs,
            out,
            text,
            svg: svg_dir,
        } => {
            let logs = load_log_dir(&logs)?;
            if logs.is_empty() {
                bail!("no .jsonl session logs found");
            }
            let report = analyze(&logs)?;
            std::fs::write(&out, report.to_json()?)
                .with_context(|| format!("writing {}", out.display()))?;
            let table = report.to_text();
            match text {
                Some(p) => std::fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
            if let Some(dir) = svg_dir {
                create_dir(&dir)?;
                for s in &report.sections {
                    let name = s.experiment.name();
                    let plots = [
                        (format!("{name}_accuracy.svg"), svg::bar_chart(&s.accuracy, &format!("{name}: accuracy"), 1.0, "")),
                        (
                            format!("{name}_rt.svg"),
                            svg::bar_chart(
                                &s.rt.all,
                                &format!("{name}: reaction time"),
                                s.rt.all.rows.iter().map(|r| r.mean + r.sd.unwrap_or(0.0)).fold(1.0, f64::max) * 1.1,
                                "ms",
                            ),
                        ),
                        (format!("{name}_matrix.svg"), svg::matrix_chart(&s.spatial, &format!("{name}: hit rate by position"))),
                    ];
                    for (file, body) in plots {
                        let p = dir.join(file);
                        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
                    }
                }
            }
        }
        Command::Chart {
            csv,
            highlight,
            eye,
            stroke,
            mode,
            config,
            out,
        } => {
            let cfg = config.load()?;
            let file = std::fs::File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let mut spec = ChartSpec::new(series_from_csv(file)?);
            spec.highlight = highlight.into_iter().collect::<BTreeSet<_>>();
            spec.hidden_eye = eye.other();
            spec.style.stroke_px = stroke;
            let pair = render_chart_pair(&spec, &cfg.geometry)?;
            create_dir(&out)?;
            let n = write_composite(&pair, mode, &out, "chart")?;
            eprintln!("wrote {n} image(s) to {}", out.display());
        }
        Command::Compare { a, b, mode, out } => {
            let pair = compare_composite(ComparePair::new(Raster::read_png(&a)?, Raster::read_png(&b)?)?);
            create_dir(&out)?;
            write_composite(&pair, mode, &out, "compare")?;
        }
        Command::Bundle {
            plan,
            config,
            prerender,
            mode,
            out,
        } => {
            let cfg = config.load()?;
            let mut bundle = ExperimentBundle::new(load_plan(&plan)?, &cfg)?;
            if let Some(dir) = &prerender {
                bundle.prerender(dir, mode, cfg.render)?;
            }
            bundle.validate(prerender.as_deref())?;
            save_json(&out, &bundle)?;
            eprintln!("wrote bundle with {} trials to {}", bundle.plan.len(), out.display());
        }
        Command::Serve {
            bundle,
            port,
            host,
            data_dir,
            assets,
        } => {
            let bundle = ExperimentBundle::load(&bundle)?;
            if let Some(dir) = &assets {
                bundle.validate(Some(dir))?;
            }
            let dir = data_dir.unwrap_or_else(data_dir_from_env);
            let store = Store::open(&dir)?;
            let addr = SocketAddr::new(host, port);
            eprintln!("serving on http://{addr}, logs in {}", dir.display());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(deadeye_server::serve(AppState::new(bundle, store, assets), addr))?;
        }
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
