//! `yoccoz`: puzzle trees, tableaux, classification and lemma audits from the
//! command line.
//!
//! Exit codes: 0 success, 1 a verified invariant was violated, 2 malformed
//! input or failed validation, 3 the raster could not resolve the request.

mod bundle;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use yoccoz_core::combinatorics::{accumulation_matrix, classify, decompose};
use yoccoz_core::report::{mask_export, to_json_lines, tree_export, violation_count};
use yoccoz_core::suite::{self, default_search};
use yoccoz_core::tableau::build_tableau;
use yoccoz_core::{
    build_tree_with, corpus, DecoratedTree, Error, MapSpec, PuzzleTree, Suite, SuiteConfig, TreeOptions,
};

use crate::bundle::RunConfig;

#[derive(Parser)]
#[command(name = "yoccoz", version, about = "Puzzle-piece combinatorics of polynomial maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the tree, relation, decomposition and classification and write a bundle.
    Analyze {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One PNG per depth: pieces coloured by index, critical pieces outlined.
    Render {
        #[command(flatten)]
        map: MapArgs,
        /// Depths to draw; defaults to every depth up to --depth.
        #[arg(long, value_delimiter = ',')]
        depths: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tableau of a bounded critical point.
    Tableau {
        #[command(flatten)]
        map: MapArgs,
        /// Critical index; every bounded critical point when omitted.
        #[arg(long)]
        critical: Option<usize>,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, value_enum, default_value_t = Format::Ascii)]
        format: Format,
    },
    /// Decomposition and four-way classification as JSON.
    Classify {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run an invariant suite on a map file or a bundle; JSON lines on stdout.
    Verify {
        /// Map file, built-in fixture (`@name`) or bundle directory.
        input: String,
        /// Suite name; every suite when omitted.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        keep_subresolution: bool,
        #[command(flatten)]
        run: RunArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two tree exports (files or bundle directories).
    Compare {
        first: PathBuf,
        second: PathBuf,
        /// Depth to check; the shallower extent when omitted.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Geometry-free tree JSON, or the run-length masks.
    Export {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        masks: bool,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MapArgs {
    /// Map file, or `@name` for a built-in fixture.
    map: String,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Grid side, overriding the map file.
    #[arg(long)]
    resolution: Option<usize>,
    /// Keep components below the cell minimum instead of stopping.
    #[arg(long)]
    keep_subresolution: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Orbit horizon; 4·depth when omitted.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Children search depth for the classification.
    #[arg(long)]
    search: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Json,
}

/// Failures carry their exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(
                Error::ResolutionExhausted { .. }
                | Error::AmbiguousCell { .. }
                | Error::ImageUnresolved(_)
                | Error::DepthExhausted { .. },
            ) => 3,
            _ => 2,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Analyze { map, run, out } => analyze(&map, &run, &out),
        Command::Render { map, depths, out } => render_cmd(&map, depths, &out),
        Command::Tableau { map, critical, width, format } => tableau(&map, critical, width, format),
        Command::Classify { map, run } => classify_cmd(&map, &run),
        Command::Verify { input, suite, depth, resolution, keep_subresolution, run, out } => {
            let map = MapArgs { map: input, depth, resolution, keep_subresolution };
            verify(&map, suite.as_deref(), &run, out.as_deref())
        }
        Command::Compare { first, second, depth } => compare_cmd(&first, &second, depth),
        Command::Export { map, masks, out } => export(&map, masks, out.as_deref()),
    }
}

pub(crate) fn load_spec(source: &str, resolution: Option<usize>) -> Result<MapSpec, Failure> {
    let spec = match source.strip_prefix('@') {
        Some(name) => corpus::fixture(name)?,
        None => {
            let text = fs::read_to_string(source).with_context(|| format!("reading {source}"))?;
            MapSpec::from_json(&text).with_context(|| format!("parsing {source}"))?
        }
    };
    Ok(match resolution {
        Some(r) => spec.with_resolution(r)?,
        None => spec,
    })
}

fn tree_options(keep: bool) -> TreeOptions {
    if keep {
        TreeOptions::keep()
    } else {
        TreeOptions::default()
    }
}

fn build(spec: &MapSpec, depth: usize, keep: bool) -> Result<PuzzleTree, Failure> {
    Ok(build_tree_with(spec.setup()?, depth, tree_options(keep))?)
}

fn run_config(map: &MapArgs, spec: &MapSpec, run: &RunArgs) -> RunConfig {
    RunConfig {
        depth: map.depth,
        resolution: spec.grid.resolution,
        horizon: run.horizon.unwrap_or(4 * map.depth.max(1)),
        seed: run.seed,
        search: run.search.unwrap_or_else(|| default_search(map.depth)),
        keep_subresolution: map.keep_subresolution,
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn analyze(map: &MapArgs, run: &RunArgs, out: &Path) -> CmdResult {
    let spec = load_spec(&map.map, map.resolution)?;
    let cfg = run_config(map, &spec, run);
    let tree = build(&spec, cfg.depth, cfg.keep_subresolution)?;
    let files = bundle::analyze(&spec, &tree, &cfg)?;
    bundle::write(out, &files)?;
    Ok(ExitCode::SUCCESS)
}

fn render_cmd(map: &MapArgs, depths: Vec<usize>, out: &Path) -> CmdResult {
    let spec = load_spec(&map.map, map.resolution)?;
    // Keep mode so that unresolved depths can be skipped rather than aborting.
    let tree = build(&spec, map.depth, true)?;
    let depths = if depths.is_empty() { (0..=map.depth).collect() } else { depths };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for n in depths {
        let resolved = tree.fully_resolved_depth().is_some_and(|r| n <= r);
        if n > tree.max_depth() || (!resolved && !map.keep_subresolution) {
            eprintln!("warning: depth {n} is beyond the resolved depth; skipped");
            continue;
        }
        let img = render::depth_image(&tree, n);
        let path = out.join(format!("depth_{n}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn tableau(map: &MapArgs, critical: Option<usize>, width: usize, format: Format) -> CmdResult {
    let spec = load_spec(&map.map, map.resolution)?;
    let tree = build(&spec, map.depth, map.keep_subresolution)?;
    let bounded = tree.setup().bounded_critical();
    let which = match critical {
        Some(c) if bounded.contains(&c) => vec![c],
        Some(c) => return Err(anyhow!(Error::InvalidArgument(format!("{c} is not a bounded critical index"))).into()),
        None => bounded,
    };
    let mut tables = Vec::new();
    for c in which {
        let origin = tree.setup().critical_points[c].location;
        tables.push((c, build_tableau(&tree, origin, map.depth, width)?));
    }
    match format {
        Format::Ascii => {
            for (c, t) in &tables {
                println!("critical {c} at {}", t.origin);
                print!("{}", t.render_ascii());
            }
        }
        Format::Json => {
            let v: Vec<_> = tables.iter().map(|(c, t)| serde_json::json!({"critical": c, "tableau": t})).collect();
            print!("{}", pretty(&v));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn classify_cmd(map: &MapArgs, run: &RunArgs) -> CmdResult {
    let spec = load_spec(&map.map, map.resolution)?;
    let cfg = run_config(map, &spec, run);
    let tree = build(&spec, cfg.depth, cfg.keep_subresolution)?;
    let rel = accumulation_matrix(&tree, cfg.depth, cfg.horizon)?;
    let decomposition = decompose(&rel)?;
    let classification = classify(&tree, &rel, &decomposition, cfg.search)?;
    print!("{}", pretty(&serde_json::json!({"decomposition": decomposition, "classification": classification})));
    Ok(ExitCode::SUCCESS)
}

fn verify(map: &MapArgs, suite_name: Option<&str>, run: &RunArgs, out: Option<&Path>) -> CmdResult {
    let suites = match suite_name {
        Some(s) => vec![s.parse::<Suite>()?],
        None => Suite::ALL.to_vec(),
    };
    let path = Path::new(&map.map);
    let (tree, cfg, mut lines) = if path.is_dir() {
        let (spec, cfg) = bundle::read_config(path)?;
        let tree = build(&spec, cfg.depth, cfg.keep_subresolution)?;
        let lines = bundle::integrity(path, &spec, &tree, &cfg)?;
        (tree, cfg, lines)
    } else {
        let spec = load_spec(&map.map, map.resolution)?;
        let cfg = run_config(map, &spec, run);
        (build(&spec, cfg.depth, cfg.keep_subresolution)?, cfg, Vec::new())
    };
    let mut suite_cfg = SuiteConfig::for_depth(cfg.depth, cfg.seed);
    suite_cfg.horizon = cfg.horizon;
    suite_cfg.search = cfg.search;
    for s in suites {
        lines.extend(suite::run(&tree, s, &suite_cfg)?);
    }
    write_or_print(out, &to_json_lines(&lines))?;
    let violations = violation_count(&lines);
    if violations > 0 {
        eprintln!("{violations} violation(s)");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_tree(path: &Path) -> Result<DecoratedTree, Failure> {
    let file = if path.is_dir() { path.join("tree.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let tree: DecoratedTree =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", file.display())))?;
    tree.check()?;
    Ok(tree)
}

fn compare_cmd(first: &Path, second: &Path, depth: Option<usize>) -> CmdResult {
    let (a, b) = (read_tree(first)?, read_tree(second)?);
    let depth = depth.unwrap_or(a.depth_extent.min(b.depth_extent));
    let verdict = yoccoz_core::compare(&a, &b, depth)?;
    print!("{}", pretty(&verdict));
    Ok(ExitCode::SUCCESS)
}

fn export(map: &MapArgs, masks: bool, out: Option<&Path>) -> CmdResult {
    let spec = load_spec(&map.map, map.resolution)?;
    let tree = build(&spec, map.depth, map.keep_subresolution)?;
    let text = if masks { pretty(&mask_export(&tree)) } else { pretty(&tree_export(&tree)?) };
    write_or_print(out, &text)?;
    Ok(ExitCode::SUCCESS)
}
