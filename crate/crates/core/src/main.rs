use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdkit::anm::{anm_decide, AnmConfig, DEFAULT_RIDGE, DEFAULT_THRESHOLD};
use cdkit::graph::{parse_edge_csv, serialize, Format, MixedGraph};
use cdkit::pipeline::{
    evaluate, generate_synthetic, run_pipeline, Mechanism, OrientationStage, PipelineConfig,
    SkeletonStage, SyntheticSpec, Threads,
};
use cdkit::{Dataset, Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "cdkit", version, about = "Causal discovery from observational data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Data file (CSV with a header row)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the main result (default: stdout)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Graph format: dot, graphml or edgecsv
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, or `auto`
    #[arg(long, global = true, env = "CDKIT_THREADS")]
    threads: Option<String>,
    /// Ground-truth graph as EDGE_CSV
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the undirected dependence graph only
    Skeleton {
        /// dependency_graph, deconvolution, glasso or iamb
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the full pipeline
    Discover {
        /// dependency_graph, deconvolution, glasso, iamb or none
        #[arg(long)]
        skeleton: Option<String>,
        /// pc, hill_climb, anm or none
        #[arg(long)]
        orientation: Option<String>,
        /// Also write the run report (JSON) here
        #[arg(long)]
        report: Option<PathBuf>,
        /// Do not restrict the orientation stage to the skeleton
        #[arg(long)]
        no_whitelist: bool,
    },
    /// Decide the direction between two columns
    Pairwise {
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long, default_value_t = DEFAULT_RIDGE)]
        ridge: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Sample a random DAG and data; data goes to --output, the DAG to --truth
    Simulate {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        degree: Option<f64>,
        /// linear_gaussian or nonlinear_anm
        #[arg(long)]
        mechanism: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Compare a predicted graph with --truth
    Eval {
        /// Predicted graph as EDGE_CSV
        #[arg(long)]
        pred: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn stage_from_method<T: serde::de::DeserializeOwned>(method: &str) -> Result<T> {
    toml::from_str(&format!("method = {:?}", method)).map_err(|_| Error::Config(format!("unknown method `{method}`")))
}

/// Config file (if any) with command-line overrides applied.
fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::from_toml(
            &fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        )?,
        None => PipelineConfig::default(),
    };
    if let Some(input) = &c.input {
        cfg.input = Some(input.clone());
        cfg.synthetic = None;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = &c.threads {
        cfg.threads = t.parse::<Threads>()?;
    }
    if let Some(f) = &c.format {
        cfg.output.format = f.parse::<Format>()?;
    }
    if let Some(o) = &c.output {
        cfg.output.path = Some(o.clone());
    }
    if let Some(t) = &c.truth {
        cfg.truth = Some(t.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Skeleton { method } => {
            let mut cfg = load_config(c)?;
            if let Some(m) = method {
                cfg.skeleton = stage_from_method(&m)?;
            }
            if cfg.skeleton == SkeletonStage::None {
                return Err(Error::Config("skeleton method cannot be `none` here".into()));
            }
            cfg.orientation = OrientationStage::None;
            let out = run_pipeline(&cfg)?;
            write_out(cfg.output.path.as_deref(), &serialize(&out.graph, cfg.output.format))
        }
        Command::Discover { skeleton, orientation, report, no_whitelist } => {
            let mut cfg = load_config(c)?;
            if let Some(m) = skeleton {
                cfg.skeleton = stage_from_method(&m)?;
            }
            if let Some(m) = orientation {
                cfg.orientation = stage_from_method(&m)?;
            }
            if no_whitelist {
                cfg.use_skeleton_as_whitelist = false;
            }
            let out = run_pipeline(&cfg)?;
            write_out(cfg.output.path.as_deref(), &serialize(&out.graph, cfg.output.format))?;
            if let Some(r) = report {
                fs::write(r, out.report.to_json())?;
            }
            Ok(())
        }
        Command::Pairwise { x, y, ridge, threshold } => {
            let path = c.input.as_ref().ok_or_else(|| Error::Config("pairwise needs --input".into()))?;
            let d = Dataset::load_csv(path)?;
            let (ix, iy) = match (x, y) {
                (Some(x), Some(y)) => (column(&d, &x)?, column(&d, &y)?),
                (None, None) if d.p() == 2 => (0, 1),
                _ => return Err(Error::Config("name both columns with --x and --y".into())),
            };
            let decision = anm_decide(d.column(ix), d.column(iy), &AnmConfig { ridge, threshold })?;
            let json = serde_json::to_string_pretty(&decision).expect("decision serializes");
            write_out(c.output.as_deref(), &(json + "\n"))
        }
        Command::Simulate { p, degree, mechanism, n, noise } => {
            let cfg = load_config(c)?;
            let base = cfg.synthetic.clone();
            let pick = |flag: Option<usize>, from: Option<usize>, name: &str| {
                flag.or(from).ok_or_else(|| Error::Config(format!("simulate needs --{name}")))
            };
            let mechanism = match mechanism {
                Some(m) => serde_json::from_str::<Mechanism>(&format!("{m:?}"))
                    .map_err(|_| Error::Config(format!("unknown mechanism `{m}`")))?,
                None => base.as_ref().map_or(Mechanism::LinearGaussian, |s| s.mechanism),
            };
            let spec = SyntheticSpec {
                p: pick(p, base.as_ref().map(|s| s.p), "p")?,
                n: pick(n, base.as_ref().map(|s| s.n), "n")?,
                expected_degree: degree.or(base.as_ref().map(|s| s.expected_degree)).unwrap_or(2.0),
                noise_sigma: noise.or(base.as_ref().map(|s| s.noise_sigma)).unwrap_or(1.0),
                mechanism,
                seed: cfg.seed,
            };
            let (d, truth) = generate_synthetic(&spec)?;
            write_out(c.output.as_deref(), &d.to_csv_string())?;
            if let Some(t) = &c.truth {
                fs::write(t, serialize(&truth, Format::Edgecsv))?;
            }
            Ok(())
        }
        Command::Eval { pred } => {
            let truth_path = c.truth.as_ref().ok_or_else(|| Error::Config("eval needs --truth".into()))?;
            let (pred, truth) = read_graph_pair(&pred, truth_path, c.input.as_deref())?;
            let m = evaluate(&pred, &truth)?;
            let json = serde_json::to_string_pretty(&m).expect("metrics serialize");
            write_out(c.output.as_deref(), &(json + "\n"))
        }
    }
}

fn column(d: &Dataset, name: &str) -> Result<usize> {
    d.index_of(name).ok_or_else(|| Error::Config(format!("no column named `{name}`")))
}

/// Parses both graphs over a shared node list: the data header when given,
/// otherwise the nodes of the truth followed by any new ones in the prediction.
fn read_graph_pair(pred: &Path, truth: &Path, data: Option<&Path>) -> Result<(MixedGraph, MixedGraph)> {
    let pt = fs::read_to_string(pred)?;
    let tt = fs::read_to_string(truth)?;
    let names: Vec<String> = match data {
        Some(d) => Dataset::load_csv(d)?.names().to_vec(),
        None => {
            let mut names = parse_edge_csv(&tt, None)?.names().to_vec();
            for n in parse_edge_csv(&pt, None)?.names() {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
            names
        }
    };
    Ok((parse_edge_csv(&pt, Some(&names))?, parse_edge_csv(&tt, Some(&names))?))
}
