//! `registra`: validate recipes, inspect images, run batches, synthesize
//! test targets and probe registration from the command line.
//!
//! Exit codes: 0 PASS/success, 1 FAIL, 2 REJECT-NO-REGISTRATION,
//! 3 config/schema error, 4 IO error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use registra_core::flowchart::{canonical_json, validate};
use registra_core::inspection::{
    self, batch_run, csv_text, demo, inspect, load_image, Recipe, RecipeDoc, RecipeError, Verdict,
};
use registra_core::raster;
use registra_core::registration::{register, RegistrationError};
use registra_core::synth;
use registra_core::Transform;

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_REJECT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "registra", version, about = "Acquire-register-analyze visual inspection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a recipe's schema, graph and tolerances.
    Validate {
        #[arg(long)]
        recipe: PathBuf,
    },
    /// Inspect one image; the exit code mirrors the verdict.
    Inspect(InspectArgs),
    /// Inspect many images; exit 0 only if all pass.
    Batch(BatchArgs),
    /// Warp an image by a similarity, optionally adding noise.
    Synth(SynthArgs),
    /// Register one image against a recipe's source and print T.
    Register {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Write the demo scene, recipe and sample parts into a directory.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    recipe: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Write the canonical report JSON here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Target-frame annotation JSON.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// CSV row output; to stdout when no path is given.
    #[arg(long, num_args = 0..=1, default_missing_value = "-")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "inputs", required = true, args = ["dir", "list"])]
struct BatchArgs {
    #[arg(long)]
    recipe: PathBuf,
    /// Inspect every .png/.pgm file in this directory, in name order.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// File with one image path per line.
    #[arg(long)]
    list: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    ty: f64,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Gaussian noise sigma on the [0, 1] intensity scale.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<RecipeError> for Failure {
    fn from(e: RecipeError) -> Self {
        Failure { code: if e.is_io() { EXIT_IO } else { EXIT_CONFIG }, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) if p != Path::new("-") => write_file(p, text.as_bytes()),
        _ => {
            print!("{text}");
            std::io::stdout().flush().map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Reject => EXIT_REJECT,
    }
}

fn cmd_validate(path: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let doc = RecipeDoc::parse(&text)?;
    let diagnostics = validate(&doc.graph);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("{d}");
        }
        return Ok(EXIT_CONFIG);
    }
    doc.effective_tolerances()?;
    println!("ok");
    Ok(EXIT_PASS)
}

fn cmd_inspect(a: &InspectArgs) -> Result<u8, Failure> {
    let recipe = Recipe::load(&a.recipe)?;
    let target = load_image(&a.image)?;
    let name = a.image.to_string_lossy();
    let result = inspect(&recipe, &target, &name);
    let report = &result.report;
    info!("{}: {} in {:.1} ms", name, report.overall, report.timing.total_ms);
    if let Some(p) = &a.overlay {
        write_file(p, &result.overlay_png(&target))?;
    }
    if let Some(p) = &a.annotations {
        write_file(p, result.annotations_json().as_bytes())?;
    }
    let item = inspection::BatchItem::Done(Box::new(report.clone()));
    match (&a.csv, &a.report) {
        (Some(c), r) => {
            emit(Some(c), &csv_text(&recipe, std::slice::from_ref(&item)))?;
            if let Some(r) = r {
                emit(Some(r), &report.to_canonical_json())?;
            }
        }
        (None, r) => emit(r.as_deref(), &report.to_canonical_json())?,
    }
    if report.overall != Verdict::Pass {
        eprintln!("{}", report.overall);
        if let Some(e) = &report.registration.error {
            eprintln!("registration: {e}");
        }
        for m in &report.measurements {
            if m.verdict == Some(Verdict::Fail) {
                eprintln!("{}: {:?} outside {:?}", m.name, m.value, m.tolerance);
            }
        }
    }
    Ok(verdict_code(report.overall))
}

fn list_images(a: &BatchArgs) -> Result<Vec<PathBuf>, Failure> {
    if let Some(dir) = &a.dir {
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| io_failure(dir, e))? {
            let p = entry.map_err(|e| io_failure(dir, e))?.path();
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if matches!(ext.as_deref(), Some("png" | "pgm")) {
                paths.push(p);
            }
        }
        paths.sort();
        Ok(paths)
    } else {
        let list = a.list.as_ref().expect("clap enforces --dir or --list");
        let text = std::fs::read_to_string(list).map_err(|e| io_failure(list, e))?;
        let base = list.parent().unwrap_or(Path::new("."));
        Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| base.join(l)).collect())
    }
}

fn cmd_batch(a: &BatchArgs) -> Result<u8, Failure> {
    let recipe = Recipe::load(&a.recipe)?;
    let paths = list_images(a)?;
    let started = std::time::Instant::now();
    let result = batch_run(&recipe, &paths, a.jobs);
    info!("{} images in {:.1} ms", paths.len(), started.elapsed().as_secs_f64() * 1e3);
    if let Some(p) = &a.csv {
        emit(Some(p), &csv_text(&recipe, &result.items))?;
    }
    for item in &result.items {
        if let inspection::BatchItem::IoError { image, message } = item {
            eprintln!("{image}: {message}");
        }
    }
    let s = &result.stats;
    eprintln!("total {} pass {} fail {} reject {} io_error {}", s.total, s.pass, s.fail, s.reject, s.io_error);
    emit(None, &canonical_json(&serde_json::to_value(s).expect("stats serialize")))?;
    Ok(if s.pass == s.total { EXIT_PASS } else { EXIT_FAIL })
}

fn cmd_synth(a: &SynthArgs) -> Result<u8, Failure> {
    let src = load_image(&a.image)?;
    let t = Transform::from_similarity(a.tx, a.ty, a.theta, a.scale)
        .map_err(|e| Failure { code: EXIT_CONFIG, message: format!("transform: {e}") })?;
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(Failure { code: EXIT_CONFIG, message: "--noise must be a non-negative number".into() });
    }
    let out = synth::synth_target(&src, &t, a.noise, a.seed);
    raster::save(&out, &a.out).map_err(|e| io_failure(&a.out, e))?;
    Ok(EXIT_PASS)
}

fn cmd_register(recipe: &Path, image: &Path) -> Result<u8, Failure> {
    let recipe = Recipe::load(recipe)?;
    let target = load_image(image)?;
    let started = std::time::Instant::now();
    let result = register(&recipe.model, &target);
    info!("registration took {:.1} ms", started.elapsed().as_secs_f64() * 1e3);
    match result {
        Ok(r) => {
            let s = r.transform.decompose();
            let v = serde_json::json!({
                "score": r.score,
                "transform": {"tx": s.tx + 0.0, "ty": s.ty + 0.0, "theta_deg": s.theta_deg + 0.0, "scale": s.scale},
            });
            emit(None, &canonical_json(&v))?;
            Ok(EXIT_PASS)
        }
        Err(e @ RegistrationError::RegistrationFailed { .. }) => {
            eprintln!("{e}");
            Ok(EXIT_REJECT)
        }
        Err(e) => Err(Failure { code: EXIT_CONFIG, message: e.to_string() }),
    }
}

fn cmd_demo(out: &Path) -> Result<u8, Failure> {
    for p in demo::write_demo(out)? {
        println!("{}", p.display());
    }
    Ok(EXIT_PASS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGISTRA_LOG", "warn")).init();
    // clap's own usage-error code (2) would collide with REJECT
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS });
        }
    };
    let result = match &cli.command {
        Command::Validate { recipe } => cmd_validate(recipe),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Register { recipe, image } => cmd_register(recipe, image),
        Command::Demo { out } => cmd_demo(out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
