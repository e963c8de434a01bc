//! Command-line front end. Subcommands orchestrate the library modules and
//! emit CSV/JSON reports with embedded run manifests.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 internal
//! inconsistency, 4 resource cap exceeded.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use qst::chernoff::chernoff_majorant;
use qst::levelcount::{mu_sandwich, optimize_level};
use qst::mesh::{iterate, GridRule, MeshConfig, MeshError};
use qst::report::{
    write_batch_csv, write_step_cdf_csv, write_trace_csv, RunManifest, SimSummary,
};
use qst::simulator::{run_batch, SimConfig, SimError, SimKind};
use qst::verify::{run_all, VerifyLevel};

#[derive(Parser)]
#[command(name = "qst", version, about = "Bounds for the Quickselect worst-case limit law")]
struct Cli {
    /// Cap on worker threads (default: QST_THREADS env var, else all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file supplying defaults for omitted flags (flags win)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the conservative CDF operator and print the mean upper bound
    MeshBound {
        #[arg(long = "A")]
        a: Option<f64>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Final step-CDF CSV destination
        #[arg(long)]
        out_path: Option<PathBuf>,
        /// Per-iteration mean-bound CSV destination
        #[arg(long)]
        trace_path: Option<PathBuf>,
    },
    /// Tabulate tail bounds over a range of thresholds
    TailTable {
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        t_step: Option<f64>,
        #[arg(long)]
        out_path: Option<PathBuf>,
    },
    /// Run a seeded Monte Carlo batch and print its summary
    Simulate {
        /// "tn" (worst-case cost / n) or "truncs" (truncated supremum)
        #[arg(long)]
        kind: Option<String>,
        /// Key count for kind tn
        #[arg(long)]
        n: Option<u64>,
        /// Truncation depth for kind truncs
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        replicates: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        prune_epsilon: Option<f64>,
        /// Sample CSV destination
        #[arg(long)]
        out_path: Option<PathBuf>,
    },
    /// Dump the level-count diagnostics for one (j, t)
    LevelBound {
        #[arg(long)]
        t: Option<f64>,
        /// Optional explicit level; the optimized level is always reported
        #[arg(long)]
        j: Option<u32>,
    },
    /// Run the cross-module invariant suites
    Verify {
        /// "quick" or "full"
        #[arg(long)]
        level: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Failure {
        let code = match e {
            MeshError::Domain(_) => 2,
            MeshError::InternalInconsistency(_) => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Failure {
        let code = match e {
            SimError::ResourceCap(_) => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<qst::report::ReportError> for Failure {
    fn from(e: qst::report::ReportError) -> Failure {
        Failure { code: 2, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure { code: 2, message: e.to_string() }
    }
}

/// Defaults read from the optional `--config` JSON file; explicit flags win.
struct FileConfig(serde_json::Map<String, Value>);

impl FileConfig {
    fn load(path: &Option<PathBuf>) -> Result<FileConfig, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig(serde_json::Map::new()));
        };
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("bad config file: {e}")))?;
        match value {
            Value::Object(map) => Ok(FileConfig(map)),
            _ => Err(Failure::usage("config file must hold a JSON object")),
        }
    }

    fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(Value::as_f64)
    }

    fn u64(&self, key: &str) -> Option<u64> {
        self.0.get(key).and_then(Value::as_u64)
    }

    fn usize(&self, key: &str) -> Option<usize> {
        self.u64(key).map(|v| v as usize)
    }

    fn string(&self, key: &str) -> Option<String> {
        self.0.get(key).and_then(Value::as_str).map(str::to_string)
    }
}

/// Formats with `digits` significant digits.
fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn writer_for(path: &PathBuf) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_mesh_bound(
    file: &FileConfig,
    a: Option<f64>,
    n: Option<usize>,
    m: Option<usize>,
    iterations: Option<usize>,
    out_path: Option<PathBuf>,
    trace_path: Option<PathBuf>,
) -> Result<(), Failure> {
    let config = MeshConfig {
        a: a.or(file.f64("A")).unwrap_or(10.0),
        n: n.or(file.usize("N")).unwrap_or(100),
        m: m.or(file.usize("M")).unwrap_or(100),
        iterations: iterations.or(file.usize("iterations")).unwrap_or(50),
        grid_rule: GridRule::Uniform,
    };
    config.validate()?;
    let trace = iterate(&config)?;
    let mut parameters = BTreeMap::new();
    parameters.insert("A".into(), config.a.to_string());
    parameters.insert("N".into(), config.n.to_string());
    parameters.insert("M".into(), config.m.to_string());
    parameters.insert("iterations".into(), config.iterations.to_string());
    let manifest = RunManifest::new("mesh-bound", parameters, None);
    if let Some(path) = &out_path {
        write_step_cdf_csv(&trace.final_cdf, &manifest, writer_for(path)?)?;
    }
    if let Some(path) = &trace_path {
        write_trace_csv(&trace, &manifest, writer_for(path)?)?;
    }
    let final_u = *trace.u_bounds.last().unwrap();
    println!("{}", format_sig(final_u, 6));
    Ok(())
}

fn cmd_tail_table(
    file: &FileConfig,
    t_min: Option<f64>,
    t_max: Option<f64>,
    t_step: Option<f64>,
    out_path: Option<PathBuf>,
) -> Result<(), Failure> {
    let t_min = t_min.or(file.f64("t_min")).unwrap_or(6.0);
    let t_max = t_max.or(file.f64("t_max")).unwrap_or(100.0);
    let t_step = t_step.or(file.f64("t_step")).unwrap_or(1.0);
    if t_min <= 2.0 || t_max < t_min || t_step <= 0.0 {
        return Err(Failure::usage("need 2 < t_min <= t_max and t_step > 0"));
    }
    let mut out = String::new();
    out.push_str("# rate_lower = -ln of the Chernoff tail majorant; rate_upper_numeric/asymptote\n");
    out.push_str("# bound -ln P(S > t) from above via the optimized level count; j_star is the\n");
    out.push_str("# optimizing level (level columns empty where no level is feasible).\n");
    out.push_str("t,rate_lower,rate_upper_numeric,rate_upper_asymptote,majorant,j_star\n");
    let steps = ((t_max - t_min) / t_step).round() as usize;
    for i in 0..=steps {
        let t = t_min + i as f64 * t_step;
        if t > t_max + 1e-9 {
            break;
        }
        let row = chernoff_majorant(t).map_err(|e| Failure::usage(e.to_string()))?;
        match optimize_level(t) {
            Ok(level) => {
                if row.rate_lower > level.rate_upper_numeric {
                    return Err(Failure {
                        code: 3,
                        message: format!(
                            "rate ordering violated at t={t}: lower {} > upper {}",
                            row.rate_lower, level.rate_upper_numeric
                        ),
                    });
                }
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    t,
                    row.rate_lower,
                    level.rate_upper_numeric,
                    level.rate_upper_asymptote,
                    row.majorant,
                    level.j_star
                ));
            }
            Err(_) => {
                out.push_str(&format!("{},{},,,{},\n", t, row.rate_lower, row.majorant));
            }
        }
    }
    let mut parameters = BTreeMap::new();
    parameters.insert("t_min".into(), t_min.to_string());
    parameters.insert("t_max".into(), t_max.to_string());
    parameters.insert("t_step".into(), t_step.to_string());
    let manifest = RunManifest::new("tail-table", parameters, None);
    out.push_str(&format!(
        "# manifest: {}\n",
        serde_json::to_string(&manifest).unwrap()
    ));
    match &out_path {
        Some(path) => writer_for(path)?.write_all(out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_simulate(
    file: &FileConfig,
    kind: Option<String>,
    n: Option<u64>,
    m: Option<u32>,
    replicates: Option<u64>,
    seed: Option<u64>,
    prune_epsilon: Option<f64>,
    out_path: Option<PathBuf>,
) -> Result<(), Failure> {
    let kind = kind
        .or(file.string("kind"))
        .ok_or_else(|| Failure::usage("--kind is required (tn or truncs)"))?;
    let replicates = replicates.or(file.u64("replicates")).unwrap_or(1000);
    let seed = seed.or(file.u64("seed")).unwrap_or(0);
    let sim_kind = match kind.as_str() {
        "tn" => SimKind::TnOverN {
            n: n.or(file.u64("n")).unwrap_or(1000),
        },
        "truncs" => SimKind::TruncatedS {
            m: m.or(file.u64("m").map(|v| v as u32)).unwrap_or(10),
            prune_epsilon: prune_epsilon.or(file.f64("prune_epsilon")).unwrap_or(0.0),
        },
        other => return Err(Failure::usage(format!("unknown kind: {other}"))),
    };
    let config = SimConfig { kind: sim_kind, replicates, seed };
    let batch = run_batch(&config)?;
    let mut parameters = BTreeMap::new();
    parameters.insert("kind".into(), kind.clone());
    match sim_kind {
        SimKind::TnOverN { n } => {
            parameters.insert("n".into(), n.to_string());
        }
        SimKind::TruncatedS { m, prune_epsilon } => {
            parameters.insert("m".into(), m.to_string());
            parameters.insert("prune_epsilon".into(), prune_epsilon.to_string());
        }
    }
    parameters.insert("replicates".into(), replicates.to_string());
    let manifest = RunManifest::new("simulate", parameters, Some(seed));
    if let Some(path) = &out_path {
        write_batch_csv(&batch, &manifest, writer_for(path)?)?;
    }
    let summary = SimSummary::from_batch(&batch);
    println!("{}", serde_json::to_string(&summary).unwrap());
    Ok(())
}

fn cmd_level_bound(file: &FileConfig, t: Option<f64>, j: Option<u32>) -> Result<(), Failure> {
    let t = t.or(file.f64("t")).unwrap_or(100.0);
    let bound = optimize_level(t).map_err(|e| Failure::usage(e.to_string()))?;
    let params = match j.or(file.u64("j").map(|v| v as u32)) {
        Some(j) => Some(mu_sandwich(j, t).map_err(|e| Failure::usage(e.to_string()))?),
        None => None,
    };
    let dump = serde_json::json!({ "params": params, "bound": bound });
    println!("{}", serde_json::to_string_pretty(&dump).unwrap());
    Ok(())
}

fn cmd_verify(file: &FileConfig, level: Option<String>, seed: Option<u64>) -> Result<(), Failure> {
    let level = match level.or(file.string("level")).as_deref().unwrap_or("quick") {
        "quick" => VerifyLevel::Quick,
        "full" => VerifyLevel::Full,
        other => return Err(Failure::usage(format!("unknown level: {other}"))),
    };
    let seed = seed.or(file.u64("seed")).unwrap_or(0);
    let results = run_all(level, seed);
    let mut all_passed = true;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({})", r.name, r.detail);
        all_passed &= r.passed;
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure { code: 1, message: "one or more invariant groups failed".into() })
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = cli.threads.or_else(|| {
        std::env::var("QST_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let file = FileConfig::load(&cli.config)?;
    match cli.command {
        Command::MeshBound { a, n, m, iterations, out_path, trace_path } => {
            cmd_mesh_bound(&file, a, n, m, iterations, out_path, trace_path)
        }
        Command::TailTable { t_min, t_max, t_step, out_path } => {
            cmd_tail_table(&file, t_min, t_max, t_step, out_path)
        }
        Command::Simulate { kind, n, m, replicates, seed, prune_epsilon, out_path } => {
            cmd_simulate(&file, kind, n, m, replicates, seed, prune_epsilon, out_path)
        }
        Command::LevelBound { t, j } => cmd_level_bound(&file, t, j),
        Command::Verify { level, seed } => cmd_verify(&file, level, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
