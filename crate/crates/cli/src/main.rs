//! Benchmark CLI: generate instances, run any method, run the enumeration
//! oracle, and emit benchmark reports.

mod methods;
mod report;
mod settings;

use ccmp_core::gen::{
    self, or_instance, random_instance, write_instance, DurationGroup, OrSpec, RandomSetup,
    RandomSpec, XKind,
};
use ccmp_core::model::{validate_instance, CcmpInstance, Solution, SolveStatus};
use clap::{Args, Parser, Subcommand, ValueEnum};
use methods::{run_method, MethodId};
use report::{render_csv, render_table, ReportRow};
use settings::Settings;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ccmp", version, about = "Chance-constrained scenario program solver and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Generate(GenerateArgs),
    /// Check an instance file against the model invariants.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Solve one instance with one method.
    Solve(SolveArgs),
    /// Shortcut for `solve --method oracle`.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a method/epsilon grid and emit a benchmark report.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SetupArg {
    T1,
    T2,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum XKindArg {
    Binary,
    Integer,
    Mixed,
}

impl From<XKindArg> for XKind {
    fn from(v: XKindArg) -> Self {
        match v {
            XKindArg::Binary => XKind::Binary,
            XKindArg::Integer => XKind::GeneralInteger,
            XKindArg::Mixed => XKind::Mixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Wide,
    Narrow,
}

#[derive(Args, Clone)]
struct RandomDims {
    #[arg(long, value_enum, default_value = "t1")]
    setup: SetupArg,
    /// First-stage row count (custom setup).
    #[arg(long, default_value_t = 4)]
    i1: usize,
    /// Scenario row count (custom setup).
    #[arg(long, default_value_t = 8)]
    i2: usize,
    /// First-stage dimension (custom setup).
    #[arg(long, default_value_t = 6)]
    nx: usize,
    /// Recourse dimension (custom setup).
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, value_enum, default_value = "binary")]
    x_kind: XKindArg,
}

impl RandomDims {
    fn setup(&self) -> RandomSetup {
        match self.setup {
            SetupArg::T1 => RandomSetup::T1,
            SetupArg::T2 => RandomSetup::T2,
            SetupArg::Custom => RandomSetup::Custom {
                first_stage_rows: self.i1,
                scenario_rows: self.i2,
                x_dim: self.nx,
                recourse_dim: self.m,
            },
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Instance family.
    #[arg(long, value_enum, default_value = "random")]
    kind: FamilyArg,
    #[command(flatten)]
    dims: RandomDims,
    /// Scheduling family: surgeries, surgeons, rooms, duration group.
    #[arg(long, default_value_t = 8)]
    surgeries: usize,
    #[arg(long, default_value_t = 2)]
    surgeons: usize,
    #[arg(long, default_value_t = 2)]
    rooms: usize,
    #[arg(long, value_enum, default_value = "wide")]
    group: GroupArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Random,
    Or,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    method: String,
    /// Overrides the risk level stored in the instance.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the solution to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-iteration output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance files; generated when absent.
    #[arg(long, num_args = 0..)]
    instances: Vec<PathBuf>,
    #[command(flatten)]
    dims: RandomDims,
    /// Number of generated instances (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 5)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated methods.
    #[arg(long, required = true, value_delimiter = ',')]
    methods: Vec<String>,
    /// Comma-separated risk levels.
    #[arg(long, required = true, value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path (stdout table is always printed).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(4)
}

fn load_instance(path: &Path, epsilon: Option<f64>) -> Result<CcmpInstance, String> {
    let mut inst = gen::read_instance(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(e) = epsilon {
        if !(0.0..=1.0).contains(&e) {
            return Err(format!("epsilon {e} outside [0, 1]"));
        }
        inst.epsilon = e;
    }
    let violations = validate_instance(&inst);
    if let Some(v) = violations.first() {
        return Err(format!("{}: {v}", path.display()));
    }
    Ok(inst)
}

fn write_solution(path: &Path, status: SolveStatus, sol: Option<&Solution>) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(&format!("status {status}\n"));
    if let Some(s) = sol {
        out.push_str(&format!("objective {}\n", s.objective));
        out.push('x');
        for v in &s.x {
            out.push_str(&format!(" {v}"));
        }
        out.push_str("\ndropped");
        for &d in &s.dropped {
            out.push_str(if d { " 1" } else { " 0" });
        }
        out.push('\n');
        for (k, y) in &s.recourse {
            out.push_str(&format!("y {k}"));
            for v in y {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)
}

fn exit_for(status: SolveStatus) -> ExitCode {
    match status {
        SolveStatus::Optimal | SolveStatus::Feasible { .. } => ExitCode::SUCCESS,
        SolveStatus::Infeasible | SolveStatus::Unbounded => ExitCode::from(2),
        SolveStatus::TimeLimit { .. } | SolveStatus::IterLimit { .. } => ExitCode::from(3),
    }
}

fn cmd_generate(args: GenerateArgs) -> ExitCode {
    let inst = match args.kind {
        FamilyArg::Random => {
            let mut spec = RandomSpec::new(args.dims.setup(), args.dims.k, args.dims.x_kind.into(), args.seed);
            spec.epsilon = args.epsilon;
            random_instance(&spec)
        }
        FamilyArg::Or => {
            let group = match args.group {
                GroupArg::Wide => DurationGroup::Wide,
                GroupArg::Narrow => DurationGroup::Narrow,
            };
            let spec = OrSpec {
                n_surgeries: args.surgeries,
                n_surgeons: args.surgeons,
                n_rooms: args.rooms,
                scenarios: args.dims.k,
                group,
                seed: args.seed,
                epsilon: args.epsilon,
                ..OrSpec::default()
            };
            or_instance(&spec)
        }
    };
    match write_instance(&inst, &args.out) {
        Ok(()) => {
            println!(
                "wrote {} ({} x, {} scenarios, {} scenario rows)",
                args.out.display(),
                inst.num_x(),
                inst.num_scenarios(),
                inst.scenario_rows()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn cmd_validate(path: &Path) -> ExitCode {
    let inst = match gen::read_instance(path) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let violations = validate_instance(&inst);
    if violations.is_empty() {
        println!("{}: valid", path.display());
        ExitCode::SUCCESS
    } else {
        for v in &violations {
            eprintln!("{}: {v}", path.display());
        }
        ExitCode::from(4)
    }
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    let settings = match Settings::load(args.config.as_deref()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let method = match MethodId::parse(&args.method) {
        Some(m) => m,
        None => return fail(format!("unknown method '{}' (known: {})", args.method, MethodId::ALL.join(", "))),
    };
    let inst = match load_instance(&args.instance, args.epsilon) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let quiet = args.quiet;
    let mut printer = move |r: &ccmp_core::benders::IterationRecord| {
        if !quiet {
            println!(
                "iter {:3}  lb {:14.6}  ub {:14.6}  cuts +{}p/+{}r  master {:.2}s  sub {:.2}s  sel {:016x}",
                r.iteration, r.lb, r.ub, r.new_points, r.new_rays, r.master_seconds, r.sub_seconds, r.selection_hash
            );
        }
    };
    let outcome = match run_method(&inst, method, &settings, Some(&mut printer)) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let row = ReportRow::new(
        args.instance.display().to_string(),
        method,
        inst.epsilon,
        &outcome,
        settings.lb_floor,
    );
    println!("{}", report::CSV_HEADER);
    println!("{}", report::csv_row(&row));
    println!(
        "{}: {} objective {} (lb {}, ub {}, itr {}, {:.2}s)",
        method,
        row.status_str(),
        row.objective.map_or("-".into(), |v| format!("{v}")),
        row.lb,
        row.ub,
        row.iterations(),
        row.seconds
    );
    if let Some(path) = &args.out {
        if let Err(e) = write_solution(path, outcome.status, outcome.solution.as_ref()) {
            return fail(e);
        }
    }
    exit_for(outcome.status)
}

fn cmd_bench(args: BenchArgs) -> ExitCode {
    let settings = match Settings::load(args.config.as_deref()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if args.methods.is_empty() {
        return fail("at least one method required");
    }
    let mut methods = Vec::new();
    for m in &args.methods {
        match MethodId::parse(m) {
            Some(id) => methods.push(id),
            None => return fail(format!("unknown method '{m}'")),
        }
    }
    if args.epsilons.is_empty() {
        return fail("at least one epsilon required");
    }
    // Assemble the instance set.
    let mut instances: Vec<(String, CcmpInstance)> = Vec::new();
    if args.instances.is_empty() {
        for i in 0..args.count {
            let seed = args.seed + i as u64;
            let spec = RandomSpec::new(args.dims.setup(), args.dims.k, args.dims.x_kind.into(), seed);
            instances.push((format!("gen-{seed}"), random_instance(&spec)));
        }
    } else {
        for p in &args.instances {
            match load_instance(p, None) {
                Ok(inst) => instances.push((p.display().to_string(), inst)),
                Err(e) => return fail(e),
            }
        }
    }

    // One cell = (instance, method, epsilon); cells are independent and may
    // run concurrently up to --jobs.
    let mut cells: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..instances.len() {
        for m in 0..methods.len() {
            for e in 0..args.epsilons.len() {
                cells.push((i, m, e));
            }
        }
    }
    // Completed rows stream to the output file as they finish, so an
    // interrupted run leaves the partial results on disk; the file is
    // rewritten in deterministic order with footers at the end.
    let partial: Option<std::sync::Mutex<std::fs::File>> = match &args.out {
        Some(path) => match std::fs::File::create(path) {
            Ok(mut f) => {
                use std::io::Write as _;
                let _ = writeln!(f, "{}", report::CSV_HEADER);
                Some(std::sync::Mutex::new(f))
            }
            Err(e) => return fail(e),
        },
        None => None,
    };
    let next = std::sync::atomic::AtomicUsize::new(0);
    let rows = std::sync::Mutex::new(Vec::<(usize, ReportRow)>::new());
    let jobs = args.jobs.max(1);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= cells.len() {
                    break;
                }
                let (i, m, e) = cells[idx];
                let (name, inst) = &instances[i];
                let mut inst = inst.clone();
                inst.epsilon = args.epsilons[e];
                match run_method(&inst, methods[m], &settings, None) {
                    Ok(out) => {
                        let row =
                            ReportRow::new(name.clone(), methods[m], inst.epsilon, &out, settings.lb_floor);
                        if let Some(file) = &partial {
                            use std::io::Write as _;
                            let mut f = file.lock().unwrap();
                            let _ = writeln!(f, "{}", report::csv_row(&row));
                            let _ = f.flush();
                        }
                        rows.lock().unwrap().push((idx, row));
                    }
                    Err(err) => {
                        eprintln!("{name} {} eps={}: {err}", methods[m], inst.epsilon);
                    }
                }
            });
        }
    });
    drop(partial);
    let mut collected = rows.into_inner().unwrap();
    collected.sort_by_key(|(idx, _)| *idx);
    let rows: Vec<ReportRow> = collected.into_iter().map(|(_, r)| r).collect();

    let table = render_table(&rows);
    print!("{table}");
    let csv = render_csv(&rows);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &csv) {
                return fail(e);
            }
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Generate(args) => cmd_generate(args),
        Command::Validate { instance } => cmd_validate(&instance),
        Command::Solve(args) => cmd_solve(args),
        Command::Oracle { instance, epsilon, config } => cmd_solve(SolveArgs {
            instance,
            method: "oracle".into(),
            epsilon,
            config,
            out: None,
            quiet: true,
        }),
        Command::Bench(args) => cmd_bench(args),
    }
}
