use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use voltplace::placement::{Formulation, HeuristicMode, PlacementSolution, Strategy};
use voltplace_cli::config::{CaseFormat, LimitsConfig, StudyConfig};
use voltplace_cli::Pipeline;

#[derive(Parser)]
#[command(name = "voltplace", version, about = "Voltage-sensor placement under injection uncertainty")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Study configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    case: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, global = true)]
    loads_scale: Option<f64>,
    /// Comma-separated configuration names.
    #[arg(long, global = true, value_delimiter = ',')]
    configs: Vec<String>,
    #[arg(long, global = true)]
    vmin: Option<f64>,
    #[arg(long, global = true)]
    vmax: Option<f64>,
    #[arg(long, global = true, value_enum)]
    formulation: Option<FormulationArg>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Threshold values per bus and side.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    no_bvr: bool,
    #[arg(long, global = true)]
    mip_gap: Option<f64>,
    #[arg(long, global = true)]
    n_initial: Option<usize>,
    #[arg(long, global = true)]
    n_selection: Option<usize>,
    #[arg(long, global = true)]
    n_validate: Option<usize>,
    #[arg(long, global = true)]
    seed_initial: Option<u64>,
    #[arg(long, global = true)]
    seed_selection: Option<u64>,
    #[arg(long, global = true)]
    seed_validate: Option<u64>,
    #[arg(long, global = true)]
    agd_step: Option<f64>,
    #[arg(long, global = true)]
    agd_max_iter: Option<usize>,
    /// Output directory (default: $VOLTPLACE_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Matpower,
    Native,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    Milp,
    Bilinear,
    Kkt,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Decomposition,
    Monolithic,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    FirstConfig,
    AllConfigs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Resolve the case and write it in the native format.
    Import,
    /// Draw and solve the training and selection samples.
    Sample,
    /// Fit the conservative linear approximations.
    FitCla,
    /// Solve the placement problem.
    Place {
        /// Write the model only, do not solve.
        #[arg(long)]
        export_only: bool,
    },
    /// Refine the placed thresholds by approximate gradient descent.
    Agd,
    /// Monte Carlo validation of the placed and refined thresholds.
    Validate {
        /// Validate this solution file instead of running the pipeline.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Validate an end-of-branch placement.
        #[arg(long, value_enum, conflicts_with = "solution")]
        heuristic: Option<HeuristicArg>,
    },
    /// Run every formulation side by side.
    Compare,
    /// Write the model of the selected formulation.
    ExportModel {
        #[arg(long)]
        mps: bool,
    },
}

impl Common {
    fn resolve(&self) -> Result<StudyConfig> {
        let mut cfg = match &self.config {
            Some(p) => StudyConfig::from_file(p)?,
            None => StudyConfig::default(),
        };
        if let (Some(p), Some(case)) = (&self.config, &cfg.case) {
            if case.is_relative() {
                cfg.case = Some(p.parent().unwrap_or(p).join(case));
            }
        }
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        if self.case.is_some() {
            cfg.case = self.case.clone();
        }
        if let Some(f) = self.format {
            cfg.format = match f {
                FormatArg::Matpower => CaseFormat::Matpower,
                FormatArg::Native => CaseFormat::Native,
            };
        }
        set!(self.loads_scale, cfg.loads_scale);
        if !self.configs.is_empty() {
            cfg.configurations = self.configs.clone();
        }
        if self.vmin.is_some() || self.vmax.is_some() {
            let base = cfg.limits.unwrap_or(LimitsConfig { v_min: None, v_max: None });
            cfg.limits = Some(LimitsConfig {
                v_min: self.vmin.or(base.v_min),
                v_max: self.vmax.or(base.v_max),
            });
        }
        let p = &mut cfg.placement;
        if let Some(f) = self.formulation {
            p.formulation = match f {
                FormulationArg::Milp => Formulation::Milp,
                FormulationArg::Bilinear => Formulation::Bilinear,
                FormulationArg::Kkt => Formulation::Kkt,
            };
        }
        if let Some(s) = self.strategy {
            p.strategy = match s {
                StrategyArg::Decomposition => Strategy::Decomposition,
                StrategyArg::Monolithic => Strategy::Monolithic,
            };
        }
        set!(self.delta, p.delta);
        set!(self.epsilon, p.epsilon);
        set!(self.steps, p.steps);
        set!(self.mip_gap, p.mip_gap);
        if self.no_bvr {
            p.bvr = false;
        }
        let s = &mut cfg.sampling;
        set!(self.n_initial, s.n_initial);
        set!(self.n_selection, s.n_selection);
        set!(self.n_validate, s.n_validate);
        set!(self.seed_initial, s.seed_initial);
        set!(self.seed_selection, s.seed_selection);
        set!(self.seed_validate, s.seed_validate);
        set!(self.agd_step, cfg.agd.step);
        set!(self.agd_max_iter, cfg.agd.max_iter);
        if self.out.is_some() {
            cfg.output = self.out.clone();
        }
        Ok(cfg)
    }
}

fn print_solution(label: &str, sol: &PlacementSolution) {
    println!("{label}: sensors {:?}, objective {:.6}", sol.sensors, sol.objective);
    for t in &sol.thresholds {
        for s in &t.sensors {
            println!("  {} bus {}: [{:.4}, {:.4}]", t.config, s.bus, s.lower, s.upper);
        }
    }
}

fn run(cli: Cli, cfg: StudyConfig) -> Result<()> {
    let verbose = cli.common.verbose;
    let p = Pipeline::load(cfg).context("loading study")?;
    match cli.cmd {
        Cmd::Import => {
            let path = p.import().context("import")?;
            println!("wrote {}", path.display());
        }
        Cmd::Sample => {
            let sets = p.samples().context("sample")?;
            for (train, select) in &sets {
                println!(
                    "{}: {} training, {} selection samples",
                    train.config,
                    train.len(),
                    select.as_ref().map_or(0, |s| s.len())
                );
            }
        }
        Cmd::FitCla => {
            let sets = p.samples().context("sample")?;
            for b in p.bundles(&sets).context("fit-cla")? {
                println!("{}: {} CLA pairs in {:.1} s", b.config, b.pairs.len(), b.fit_seconds);
            }
        }
        Cmd::Place { export_only } => {
            let (inputs, _) = p.inputs().context("fit-cla")?;
            if export_only {
                let (path, stats) = p.export_model(&inputs, p.cfg.placement.formulation, false).context("export-model")?;
                println!("wrote {} ({} variables, {} constraints)", path.display(), stats.variables, stats.constraints);
                return Ok(());
            }
            let sol = p.place(&inputs).context("place")?;
            print_solution("placement", &sol);
            if verbose {
                if let Some(s) = &sol.solver {
                    eprintln!("{}", serde_json::to_string_pretty(s)?);
                }
            }
        }
        Cmd::Agd => {
            let (inputs, pools) = p.inputs().context("fit-cla")?;
            let sol = p.place(&inputs).context("place")?;
            let res = p.agd(&sol, &pools).context("agd")?;
            print_solution("refined", &res.solution);
            for r in &res.runs {
                println!(
                    "  {}: {} iterations, FP {} -> {}, stop {:?}",
                    r.config,
                    r.iterations,
                    r.initial_fp(),
                    r.final_state().fp,
                    r.stop
                );
            }
        }
        Cmd::Validate { solution, heuristic } => {
            let reports = if let Some(path) = solution {
                let art = Pipeline::read_artifact::<serde_json::Value>(&path)?;
                let sol: PlacementSolution = match art.data.get("solution") {
                    Some(v) => serde_json::from_value(v.clone())?,
                    None => serde_json::from_value(art.data)?,
                };
                vec![("validation", p.validate(&sol, "validation", "solution").context("validate")?)]
            } else if let Some(h) = heuristic {
                let (mode, stem) = match h {
                    HeuristicArg::FirstConfig => (HeuristicMode::FirstConfig, "validation_leaves_first"),
                    HeuristicArg::AllConfigs => (HeuristicMode::AllConfigs, "validation_leaves_all"),
                };
                let sol = p.heuristic(mode).context("heuristic")?;
                print_solution("heuristic", &sol);
                vec![(stem, p.validate(&sol, stem, "leaves").context("validate")?)]
            } else {
                let (inputs, pools) = p.inputs().context("fit-cla")?;
                let sol = p.place(&inputs).context("place")?;
                let res = p.agd(&sol, &pools).context("agd")?;
                vec![
                    ("validation_placement", p.validate(&sol, "validation_placement", "placement").context("validate")?),
                    ("validation", p.validate(&res.solution, "validation", "placement + AGD").context("validate")?),
                ]
            };
            for (stem, rep) in reports {
                println!("{stem}.json:");
                for c in &rep.configs {
                    println!(
                        "  {}: FP {} / {} feasible ({:.2}%), FN {} / {} violating ({:.2}%)",
                        c.config,
                        c.counts.n_fp,
                        c.counts.n_feasible,
                        100.0 * c.counts.fp_rate,
                        c.counts.n_fn,
                        c.counts.n_violating,
                        100.0 * c.counts.fn_rate
                    );
                }
            }
        }
        Cmd::Compare => {
            let (inputs, pools) = p.inputs().context("fit-cla")?;
            let cmp = p.compare(&inputs, &pools).context("compare")?;
            print!("{}", cmp.table);
        }
        Cmd::ExportModel { mps } => {
            let (inputs, _) = p.inputs().context("fit-cla")?;
            let (path, stats) = p.export_model(&inputs, p.cfg.placement.formulation, mps).context("export-model")?;
            println!(
                "wrote {} (b {}, r {}, {} variables, {} constraints, {} binaries)",
                path.display(),
                stats.b,
                stats.r,
                stats.variables,
                stats.constraints,
                stats.binaries
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match cli.common.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(cli, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
