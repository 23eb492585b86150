use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use pgraph::builder::{grow, trace_to_records, BuilderConfig};
use pgraph::complex::{cartesian_product, product_energy_check};
use pgraph::dataset::{default_cache_dir, fetch_uci, generate, load_csv, standardize, CsvOptions, GeneratorSpec, Shape, UciDataset};
use pgraph::grammar::{Grammar, StructuralPolicy};
use pgraph::graph::ElasticGraph;
use pgraph::optimizer::SofteningStage;
use pgraph::report::{load_trace_csv, local_minima_json, render_svg, save_trace_csv, PlotSpec, Projection};
use pgraph::{DataSet, Error};

#[derive(Parser, Debug)]
#[command(name = "pgraph", version, about = "Elastic principal graphs and accuracy-complexity traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic 2-D dataset as CSV.
    Generate(GenerateArgs),
    /// Grow a principal graph and write its trace.
    Fit(FitArgs),
    /// Render the accuracy-complexity plot of a trace.
    Report(ReportArgs),
    /// Cartesian product of factor graphs.
    Product(ProductArgs),
    /// Download a UCI dataset into the cache.
    Fetch(FetchArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Key = value file mirroring these flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Shape,
    #[arg(long, default_value_t = 3)]
    branches: usize,
    #[arg(long, default_value_t = 300)]
    points: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    NodeCount,
    Branches,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "uci", required_unless_present = "uci")]
    data: Option<PathBuf>,
    /// Fit a cached UCI dataset instead of a file.
    #[arg(long)]
    uci: Option<UciDataset>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Z-score the columns first. Defaults to true for --uci and false otherwise.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    /// Comma-separated grammar sequence, applied cyclically.
    #[arg(long, default_value = "tree,tree,shrink")]
    grammar: String,
    #[arg(long, default_value_t = 50)]
    max_ops: usize,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Comma-separated mu multipliers; empty for a single unsoftened stage.
    #[arg(long, default_value = "100,10,1")]
    softening: String,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    candidate_iterations: usize,
    #[arg(long, value_enum, default_value = "node-count")]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1000)]
    sc_max: usize,
    #[arg(long, default_value_t = 0)]
    b_max: usize,
    /// Polyline FVE at which growth stops; 0 disables.
    #[arg(long, default_value_t = 0.999)]
    fve_stop: f64,
    /// Skip shrink steps that would raise the energy.
    #[arg(long)]
    no_shrink_increase: bool,
    /// Final graph JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory receiving the graph JSON of every step.
    #[arg(long)]
    graphs_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: PathBuf,
    /// SVG output.
    #[arg(long)]
    out: PathBuf,
    /// Local minima JSON; defaults to the SVG path with a .minima.json suffix.
    #[arg(long)]
    minima: Option<PathBuf>,
    #[arg(long)]
    log: bool,
    /// Highlight these steps.
    #[arg(long = "mark", value_delimiter = ',')]
    marks: Vec<usize>,
    /// Dataset and graph for the projection panel.
    #[arg(long, requires = "graph")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    graph: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProductArgs {
    /// Factor graph JSON, in order.
    #[arg(long = "factor", required = true)]
    factors: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FetchArgs {
    #[arg(long)]
    name: UciDataset,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Also write the numeric table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    standardize: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Barcode(_) => 1,
        Error::Singular(_) | Error::EnergyMismatch { .. } | Error::Precondition(_) => 3,
        _ => 2,
    }
}

/// Expands `--config FILE` into flags placed right after the subcommand. Keys
/// already given on the command line are skipped.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let (path, consumed) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => (args.get(pos + 1).cloned().ok_or("--config needs a file")?, 2),
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let given: BTreeSet<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key = value", n + 1))?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if given.contains(key.as_str()) {
            continue;
        }
        match value {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => extra.push(format!("--{key}={value}")),
        }
    }
    let mut out: Vec<String> = args[..pos].to_vec();
    out.extend(args[pos + consumed..].iter().cloned());
    // Right after the subcommand name.
    let at = out.iter().skip(1).position(|a| !a.starts_with('-')).map_or(out.len(), |i| i + 2);
    out.splice(at..at, extra);
    Ok(out)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> pgraph::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> pgraph::Result<()> {
    let spec = GeneratorSpec {
        branches: a.branches,
        ..GeneratorSpec::new(a.shape, a.points, a.noise, a.seed)
    };
    let data = generate(&spec)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write(&a.out, buf)?;
    info!("wrote {} points to {}", data.len(), a.out.display());
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> pgraph::Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad {what} {s:?}"))))
        .collect()
}

fn builder_config(a: &FitArgs) -> pgraph::Result<BuilderConfig> {
    let mut cfg = BuilderConfig {
        grammar_sequence: parse_list::<Grammar>(&a.grammar, "grammar")?,
        cc_max: a.max_ops,
        candidate_fit_iterations: a.candidate_iterations,
        allow_energy_increase_on_shrink: !a.no_shrink_increase,
        fve_stop: (a.fve_stop > 0.0).then_some(a.fve_stop),
        policy: match a.policy {
            PolicyArg::NodeCount => StructuralPolicy::node_count(a.sc_max),
            PolicyArg::Branches => StructuralPolicy {
                sc_max: a.sc_max,
                ..StructuralPolicy::branches(a.b_max)
            },
        },
        ..BuilderConfig::default()
    };
    cfg.fit.lambda = a.lambda;
    cfg.fit.mu = a.mu;
    cfg.fit.max_iterations = a.max_iterations;
    cfg.fit.convergence_tol = a.tol;
    cfg.fit.softening = parse_list::<f64>(&a.softening, "softening multiplier")?
        .into_iter()
        .map(|mu| SofteningStage { lambda: 1.0, mu })
        .collect();
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(a: &FitArgs) -> pgraph::Result<DataSet> {
    let (data, default_std) = match (&a.data, a.uci) {
        (Some(path), _) => (load_csv(path, &CsvOptions::default())?, false),
        (None, Some(name)) => {
            let dir = a.cache_dir.clone().unwrap_or_else(default_cache_dir);
            (fetch_uci(name, &dir)?, true)
        }
        (None, None) => return Err(Error::Config("either --data or --uci is required".into())),
    };
    if a.standardize.unwrap_or(default_std) {
        standardize(&data)
    } else {
        Ok(data)
    }
}

fn cmd_fit(a: FitArgs) -> pgraph::Result<()> {
    let cfg = builder_config(&a)?;
    let data = load_data(&a)?;
    let trace = grow(&data, &cfg)?;
    write(&a.out, trace.final_graph().to_json())?;
    if let Some(path) = &a.trace {
        save_trace_csv(&trace_to_records(&trace), path)?;
        let meta = json!({
            "points": data.len(),
            "dimension": data.dim(),
            "grammar": a.grammar,
            "historical_cc": trace.historical_cc,
            "denovo_cc": trace.denovo_cc,
            "candidate_fit_iterations": trace.candidate_fit_iterations,
            "lambda": cfg.fit.lambda,
            "mu": cfg.fit.mu,
        });
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        write(Path::new(&name), serde_json::to_string_pretty(&meta)?)?;
    }
    if let Some(dir) = &a.graphs_dir {
        fs::create_dir_all(dir)?;
        for r in &trace.records {
            write(&dir.join(format!("step_{:04}.json", r.step)), r.graph.to_json())?;
        }
    }
    let last = trace.records.last().expect("trace is never empty");
    println!(
        "{} steps, barcode {}, FVE {:.4}",
        trace.historical_cc, last.barcode, last.fve_polyline
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> pgraph::Result<()> {
    let rows = load_trace_csv(&a.trace)?;
    let mut spec = PlotSpec::from_rows(&rows)?.with_markers(a.marks.clone())?;
    spec.log_scale = a.log;
    if let (Some(data), Some(graph)) = (&a.data, &a.graph) {
        let data = load_csv(data, &CsvOptions::default())?;
        let graph = ElasticGraph::from_json(&fs::read_to_string(graph)?)?;
        spec.projection = Some(Projection::new(&data, &graph)?);
    }
    write(&a.out, render_svg(&spec)?)?;
    let minima = a.minima.clone().unwrap_or_else(|| a.out.with_extension("minima.json"));
    write(&minima, local_minima_json(&rows)?)?;
    Ok(())
}

fn cmd_product(a: ProductArgs) -> pgraph::Result<()> {
    let factors = a
        .factors
        .iter()
        .map(|p| ElasticGraph::from_json(&fs::read_to_string(p)?))
        .collect::<pgraph::Result<Vec<_>>>()?;
    let complex = cartesian_product(&factors)?;
    let energy = product_energy_check(&complex)?;
    write(&a.out, complex.product.to_json())?;
    println!(
        "{} vertices, {} edges, {} stars, elastic energy {energy:.6e}",
        complex.product.node_count(),
        complex.product.edges.len(),
        complex.product.stars.len()
    );
    Ok(())
}

fn cmd_fetch(a: FetchArgs) -> pgraph::Result<()> {
    let dir = a.cache_dir.unwrap_or_else(default_cache_dir);
    let mut data = fetch_uci(a.name, &dir)?;
    println!("{}: {} x {}", a.name.name(), data.len(), data.dim());
    if let Some(out) = a.out {
        if a.standardize {
            data = standardize(&data)?;
        }
        let mut buf = Vec::new();
        data.write_csv(&mut buf)?;
        write(&out, buf)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Report(a) => cmd_report(a),
        Command::Product(a) => cmd_product(a),
        Command::Fetch(a) => cmd_fetch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::EmptyDataset), 2);
        assert_eq!(exit_code(&Error::Data("x".into())), 2);
        assert_eq!(exit_code(&Error::Singular("x".into())), 3);
        assert_eq!(exit_code(&Error::EnergyMismatch { direct: 1.0, per_copy: 2.0 }), 3);
    }

    #[test]
    fn config_lines_become_flags_after_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("fit.cfg");
        fs::write(&cfg, "max_ops = 7\nno_shrink_increase = true\nlog = false\nlambda = 0.5\n").unwrap();
        let args = strings(&["pgraph", "fit", "--config", cfg.to_str().unwrap(), "--lambda", "0.2"]);
        let out = expand_config(args).unwrap();
        assert_eq!(out, strings(&["pgraph", "fit", "--max-ops=7", "--no-shrink-increase", "--lambda", "0.2"]));
    }

    #[test]
    fn malformed_config_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        fs::write(&cfg, "shape star\n").unwrap();
        assert!(expand_config(strings(&["pgraph", "generate", "--config", cfg.to_str().unwrap()])).is_err());
    }
}
