use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riclab::zoo;
use riclab_cli::config::{Config, Number, Op, ScenarioConfig};
use riclab_cli::run::{exit_status, run_all, Settings, DEFAULT_SEED, DEFAULT_TOL};
use riclab_cli::{output, Failure};

#[derive(Parser)]
#[command(name = "riclab", version, about = "Curvature, focal, index, comparison and lifting checks on explicit charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Intermediate Ricci curvature sampling and the conjugate-radius bound.
    Curvature(OpArgs),
    /// Focal radius, principal curvatures and the trace condition of a patch.
    Focal(OpArgs),
    /// Geodesic index: endpoint counts or random endmanifold scenarios.
    Index(OpArgs),
    /// Riccati comparison along a geodesic.
    Compare(OpArgs),
    /// Distance bound between two submanifolds.
    Frankel(OpArgs),
    /// Lifts of curves and homotopies to the normal bundle.
    Lift(OpArgs),
    /// Every scenario of a config file.
    Run(RunArgs),
    /// List the registry, or describe one chart or patch.
    Zoo {
        name: Option<String>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "riclab-out")]
    out: PathBuf,
    /// Seed for scenarios that do not set their own.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration tolerance for scenarios that do not set their own.
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OpArgs {
    #[command(flatten)]
    common: Common,
    /// Chart name, for a single scenario without a config.
    #[arg(long)]
    chart: Option<String>,
    /// Patch name; frankel takes two.
    #[arg(long)]
    patch: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Geodesic length, as a number or expression such as `3*pi/2`.
    #[arg(long)]
    length: Option<String>,
    #[arg(long)]
    mode: Option<String>,
}

impl OpArgs {
    fn inline(&self, op: Op) -> Result<ScenarioConfig, Failure> {
        let mut sc = ScenarioConfig::new(op.name(), op);
        sc.chart = self.chart.clone();
        match self.patch.len() {
            0 => {}
            1 => sc.patch = Some(self.patch[0].clone()),
            _ => sc.patches = Some(self.patch.clone()),
        }
        sc.k = self.k;
        sc.length = self.length.clone().map(Number::Expr);
        sc.mode = self.mode.clone();
        if sc.chart.is_none() && sc.patch.is_none() && sc.patches.is_none() && sc.mode.is_none() {
            return Err(Failure::Config(format!(
                "`{}` needs --config or inline arguments such as --chart/--patch",
                op.name()
            )));
        }
        Ok(sc)
    }
}

fn settings(common: &Common, cfg: Option<&Config>) -> Result<Settings, Failure> {
    let tol = common.tol.or(cfg.and_then(|c| c.tol)).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Failure::Parameter(format!("tol = {tol} must be positive")));
    }
    Ok(Settings {
        seed: common.seed.or(cfg.and_then(|c| c.seed)).unwrap_or(DEFAULT_SEED),
        tol,
    })
}

fn execute(common: &Common, scenarios: Vec<ScenarioConfig>, cfg: Option<&Config>) -> Result<i32, Failure> {
    let st = settings(common, cfg)?;
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Failure::Parameter("--jobs must be at least 1".into()));
        }
        // a second initialization only happens in-process and is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let outcomes = run_all(&scenarios, &st);
    println!("{:<28} {:<22} {:<24} {:<24} result", "scenario", "check", "value", "reference");
    for o in &outcomes {
        for row in &o.checks {
            println!(
                "{:<28} {:<22} {:<24} {:<24} {}",
                row.scenario,
                row.check,
                truncate(&row.value, 24),
                truncate(&row.reference, 24),
                if row.pass { "pass" } else { "FAIL" }
            );
        }
        // reported quantities nobody checked
        for q in o.quantities.iter().filter(|q| !o.checks.iter().any(|c| c.check == q.name)) {
            println!("{:<28} {:<22} {:<24} {:<24} -", o.id, q.name, truncate(&q.value.display(), 24), "");
        }
    }
    for o in &outcomes {
        if let Some(f) = &o.failure {
            eprintln!("riclab: scenario `{}`: {f}", o.id);
        }
    }
    let files = output::write_all(&common.out, &outcomes, &st)?;
    println!("wrote {} to {}", files.join(", "), common.out.display());
    Ok(exit_status(&outcomes))
}

fn truncate(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(n - 1).collect();
        t.push('~');
        t
    }
}

fn run_op(op: Op, args: &OpArgs) -> Result<i32, Failure> {
    match &args.common.config {
        Some(path) => {
            let cfg = Config::load(path)?;
            let picked: Vec<ScenarioConfig> = cfg.scenarios.iter().filter(|s| s.op == op).cloned().collect();
            if picked.is_empty() {
                return Err(Failure::Config(format!("{} has no `{}` scenarios", path.display(), op.name())));
            }
            execute(&args.common, picked, Some(&cfg))
        }
        None => execute(&args.common, vec![args.inline(op)?], None),
    }
}

fn zoo_command(name: Option<&str>, as_json: bool) -> Result<i32, Failure> {
    match name {
        None => {
            let list = zoo::zoo_list();
            if as_json {
                println!("{}", serde_json::to_string_pretty(&list).expect("serializes"));
            } else {
                println!("charts:");
                for c in &list.charts {
                    println!("  {:<16} dim {}  {}", c.name, c.dim, c.description);
                }
                println!("patches:");
                for p in &list.patches {
                    println!("  {:<16} dim {} in {:<14} {}", p.name, p.dim, p.chart, p.description);
                }
            }
        }
        Some(name) => {
            let entry = zoo::entry(name)?;
            if as_json {
                println!("{}", serde_json::to_string_pretty(&entry).expect("serializes"));
            } else {
                let (desc, constants) = match &entry {
                    zoo::Entry::Chart(c) => {
                        println!("chart {} (dimension {})", c.name, c.dim);
                        (c.description, &c.constants)
                    }
                    zoo::Entry::Patch(p) => {
                        println!("patch {} (dimension {} in {})", p.name, p.dim, p.chart);
                        (p.description, &p.constants)
                    }
                };
                println!("  {desc}");
                for k in constants {
                    println!("  {:<22} = {:<12} = {:.12} ({})", k.quantity, k.expression, k.value, k.source);
                }
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Curvature(a) => run_op(Op::Curvature, a),
        Command::Focal(a) => run_op(Op::Focal, a),
        Command::Index(a) => run_op(Op::Index, a),
        Command::Compare(a) => run_op(Op::Compare, a),
        Command::Frankel(a) => run_op(Op::Frankel, a),
        Command::Lift(a) => run_op(Op::Lift, a),
        Command::Run(a) => match &a.common.config {
            Some(path) => Config::load(path).and_then(|cfg| execute(&a.common, cfg.scenarios.clone(), Some(&cfg))),
            None => Err(Failure::Config("`run` needs --config".into())),
        },
        Command::Zoo { name, json } => zoo_command(name.as_deref(), *json),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("riclab: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
