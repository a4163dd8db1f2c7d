use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwc_cli::{
    run_plan, Algo, CliError, CoverKind, ExperimentPlan, QuickestMode, Report, RunSpec, TopologySource, SEED_ENV,
};
use cwc_core::TopologySpec;

/// Rounds of cloud operations, measured and checked against their bounds.
#[derive(Parser, Debug)]
#[command(name = "cwc", version)]
struct Cli {
    /// Print JSON rows instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Either a topology file or a uniform wheel.
#[derive(Args, Debug)]
struct TopoArgs {
    /// JSON topology file.
    #[arg(long, conflicts_with_all = ["n", "bc", "bl"])]
    topology: Option<PathBuf>,
    /// Uniform wheel size.
    #[arg(long)]
    n: Option<usize>,
    /// Uniform cloud bandwidth.
    #[arg(long, default_value_t = 1)]
    bc: u64,
    /// Uniform ring bandwidth.
    #[arg(long, default_value_t = 4)]
    bl: u64,
}

#[derive(Args, Debug)]
struct Common {
    #[command(flatten)]
    topo: TopoArgs,
    /// Payload size in bits.
    #[arg(long, default_value_t = 64)]
    size: u64,
    /// Seed for inputs and random payloads; the seed variable overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CombineAlgo {
    Wheel,
    Modular,
    Generic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoverArg {
    All,
    Sparse,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Write,
    Read,
    Caw,
    Car,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Interval-based CloudWrite on a wheel.
    WheelWrite {
        #[command(flatten)]
        common: Common,
        /// Writing node; every node when omitted.
        #[arg(long)]
        node: Option<usize>,
    },
    /// Interval-based CloudRead on a wheel.
    WheelRead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        node: Option<usize>,
    },
    /// Combine every node's input into one cloud file.
    Combine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "wheel")]
        algo: CombineAlgo,
        /// xor, add, matmul2 or compose8.
        #[arg(long, default_value = "xor")]
        op: String,
        /// Pipelining grain in bits.
        #[arg(long)]
        grain: Option<usize>,
    },
    /// Cluster-based combining on a fat-links graph.
    FatCombine {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "xor")]
        op: String,
        #[arg(long)]
        kappa: Option<u32>,
        #[arg(long, value_enum, default_value = "sparse")]
        cover: CoverArg,
        /// Use optimal collective reads and writes per tree level.
        #[arg(long)]
        collective: bool,
    },
    /// Spread one cloud file to every node.
    Cloudcast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kappa: Option<u32>,
    },
    /// Optimal transfer schedules.
    Quickest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "write")]
        mode: ModeArg,
        #[arg(long)]
        node: Option<usize>,
        /// Also write the schedule of `--node` as JSON to this file.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Masked federated sum on a uniform wheel.
    Fedsum {
        #[arg(long)]
        n: usize,
        /// Vector length.
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1 << 16)]
        modulus: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        bc: u64,
        #[arg(long, default_value_t = 64)]
        bl: u64,
    },
    /// Run every line of a JSON plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Output prefix for `.csv` and `.json`; defaults to the plan's own,
        /// else standard output.
        #[arg(long)]
        out: Option<String>,
    },
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Invalid(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn topology(args: &TopoArgs) -> Result<TopologySource, CliError> {
    match (&args.topology, args.n) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let spec: TopologySpec =
                serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
            Ok(TopologySource::Spec(spec))
        }
        (None, Some(n)) => Ok(TopologySource::Spec(TopologySpec::uniform_wheel(n, args.bc, args.bl))),
        (None, None) => Err(CliError::Invalid("give --topology or --n".into())),
    }
}

fn spec(algo: Algo, common: &Common) -> Result<RunSpec, CliError> {
    Ok(RunSpec::new(algo, topology(&common.topo)?, common.size, common.seed))
}

fn single_run(cmd: Cmd) -> Result<RunSpec, CliError> {
    Ok(match cmd {
        Cmd::WheelWrite { common, node } => RunSpec { node, ..spec(Algo::WheelWrite, &common)? },
        Cmd::WheelRead { common, node } => RunSpec { node, ..spec(Algo::WheelRead, &common)? },
        Cmd::Combine { common, algo, op, grain } => {
            let algo = match algo {
                CombineAlgo::Wheel => Algo::CombineWheel,
                CombineAlgo::Modular => Algo::CombineModular,
                CombineAlgo::Generic => Algo::CombineGeneric,
            };
            RunSpec { op, grain, ..spec(algo, &common)? }
        }
        Cmd::FatCombine { common, op, kappa, cover, collective } => RunSpec {
            op,
            kappa,
            cover: match cover {
                CoverArg::All => CoverKind::All,
                CoverArg::Sparse => CoverKind::Sparse,
            },
            collective,
            ..spec(Algo::CombineFat, &common)?
        },
        Cmd::Cloudcast { common, kappa } => RunSpec { kappa, ..spec(Algo::Cloudcast, &common)? },
        Cmd::Quickest { common, mode, node, .. } => RunSpec {
            node,
            mode: match mode {
                ModeArg::Write => QuickestMode::Write,
                ModeArg::Read => QuickestMode::Read,
                ModeArg::Caw => QuickestMode::Caw,
                ModeArg::Car => QuickestMode::Car,
            },
            ..spec(Algo::Quickest, &common)?
        },
        Cmd::Fedsum { n, m, modulus, seed, bc, bl } => RunSpec {
            modulus: Some(modulus),
            m: Some(m),
            ..RunSpec::new(Algo::Fedsum, TopologySource::Spec(TopologySpec::uniform_wheel(n, bc, bl)), 0, seed)
        },
        Cmd::Sweep { .. } => unreachable!("handled separately"),
    })
}

fn print(report: &Report, json: bool) {
    if json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.to_csv());
    }
}

fn dump_schedule(run: &RunSpec, path: &PathBuf) -> Result<(), CliError> {
    let t = run.topology.build(run.seed, run.s)?;
    let i = run.node.unwrap_or(0);
    let fs = match run.mode {
        QuickestMode::Write => cwc_flow::quickest_write_schedule(&t, i, run.s)?,
        QuickestMode::Read => cwc_flow::quickest_read_schedule(&t, i, run.s)?,
        QuickestMode::Caw => cwc_flow::quickest_multi_schedule(&t, &vec![run.s; t.n()], cwc_flow::FlowMode::Write, None)?,
        QuickestMode::Car => cwc_flow::quickest_multi_schedule(&t, &vec![run.s; t.n()], cwc_flow::FlowMode::Read, None)?,
    };
    let text = serde_json::to_string_pretty(&fs.schedule).map_err(|e| CliError::Invalid(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let seed = seed_override()?;
    if let Cmd::Sweep { plan, out } = cli.cmd {
        let text = std::fs::read_to_string(&plan)?;
        let mut plan = ExperimentPlan::from_json(&text)?;
        if let Some(s) = seed {
            plan = plan.with_seed(s);
        }
        let report = run_plan(&plan);
        match out.or(plan.output.clone()) {
            Some(prefix) => {
                std::fs::write(format!("{prefix}.csv"), report.to_csv())?;
                std::fs::write(format!("{prefix}.json"), report.to_json())?;
            }
            None => print(&report, cli.json),
        }
        return Ok(report.exit_code());
    }
    let schedule = match &cli.cmd {
        Cmd::Quickest { schedule, .. } => schedule.clone(),
        _ => None,
    };
    let mut spec = single_run(cli.cmd)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let plan = ExperimentPlan { runs: vec![spec], ..ExperimentPlan::default() };
    let report = run_plan(&plan);
    print(&report, cli.json);
    if let Some(path) = schedule {
        dump_schedule(&plan.runs[0], &path)?;
    }
    Ok(if report.rows.iter().any(|r| r.error.is_some()) { 3 } else { report.exit_code() })
}

fn main() -> ExitCode {
    // Usage errors share the invalid-input code instead of clap's own 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
