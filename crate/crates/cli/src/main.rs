use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weakconv::algebra::{compound_poisson, power_frac, power_int, stable_element, weak_convolve};
use weakconv::config::Tolerances;
use weakconv::error::{Error, Result};
use weakconv::kernels::{AbsMoment, Kernel};
use weakconv::levy::{self, levy_build, levy_extract, ExtractOptions, LevyTriple};
use weakconv::measures::{CharGrid, MixingMeasure};
use weakconv::montecarlo::sample_scale_mixture;
use weakconv::verify::{self, SUITES};

#[derive(Parser)]
#[command(name = "weakconv", version, about = "Weak generalized convolutions of radial mixing measures")]
struct Cli {
    /// Tolerance profile name (`paper`, `fast`) or a quadrature relative tolerance.
    #[arg(long, global = true, default_value = "paper")]
    tol: String,
    /// Grid size for materialized densities.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Characteristic exponent and basic facts about a kernel.
    KernelInfo {
        #[arg(long)]
        kernel: String,
    },
    /// Mixture characteristic function on `[0, tmax]` as CSV.
    Cf {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        tmax: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Weak convolution of two measures.
    Convolve {
        #[arg(long)]
        kernel: String,
        a: PathBuf,
        b: PathBuf,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Convolution power, integer or fractional.
    Power {
        #[arg(long)]
        kernel: String,
        measure: PathBuf,
        #[arg(long)]
        r: f64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Compound Poisson measure with the given rate.
    ExpPoisson {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        rate: f64,
        measure: PathBuf,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Canonical strictly `p`-stable element.
    StableElement {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        p: f64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Characteristic function of a Lévy triple as CSV.
    LevyEval {
        #[arg(long)]
        kernel: String,
        levy: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        tmax: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Also print both forms of the integrability integral.
        #[arg(short, long)]
        verbose: bool,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Mixing measure with the given Lévy triple.
    LevyBuild {
        #[arg(long)]
        kernel: String,
        levy: PathBuf,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Lévy triple of an infinitely divisible measure.
    LevyExtract {
        #[arg(long)]
        kernel: String,
        measure: PathBuf,
        #[arg(long, default_value_t = 20)]
        levels: u32,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Draws of `X S` with `X` from the kernel and `S` from the measure.
    Sample {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        measure: PathBuf,
        #[arg(short)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Run a reference suite.
    Verify {
        #[arg(long, value_parser = SUITES)]
        suite: String,
        /// Print the per-check JSON report.
        #[arg(long)]
        json: bool,
    },
}

fn tolerances(cli: &Cli) -> Result<Tolerances> {
    let mut tol = match Tolerances::profile(&cli.tol) {
        Some(t) => t,
        None => {
            let rel: f64 = cli.tol.parse().map_err(|_| {
                Error::InvalidInput(format!("--tol must be a profile name or a positive number, got {:?}", cli.tol))
            })?;
            if !(rel > 0.0 && rel < 1.0) {
                return Err(Error::InvalidInput(format!("--tol must lie in (0, 1), got {rel}")));
            }
            Tolerances { quad_rel: rel, ..Tolerances::paper() }
        }
    };
    if let Some(g) = cli.grid {
        if g < 16 {
            return Err(Error::InvalidInput(format!("--grid must be at least 16, got {g}")));
        }
        tol.grid_points = g;
    }
    Ok(tol)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn measure(path: &Path) -> Result<MixingMeasure> {
    MixingMeasure::from_json_str(&read(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_csv(out: Option<&Path>, grid: &CharGrid) -> Result<()> {
    let mut buf = Vec::new();
    grid.write_csv(&mut buf)?;
    emit(out, &String::from_utf8(buf).expect("ascii csv"))
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let tol = tolerances(cli)?;
    let kernel = |spec: &str| -> Result<Kernel> { Ok(spec.parse::<Kernel>()?.retuned(tol.clone())) };
    match &cli.cmd {
        Command::KernelInfo { kernel: spec } => {
            let k = kernel(spec)?;
            let kappa = k.kappa();
            let moment = match k.abs_moment(kappa)? {
                AbsMoment::Finite(v) => serde_json::json!(v),
                AbsMoment::Infinite => serde_json::json!("infinite"),
            };
            let cf: Vec<[f64; 2]> = [0.5, 1.0, 2.0].iter().map(|&t| [t, k.cf(t)]).collect();
            let info = serde_json::json!({
                "kernel": k.to_string(),
                "kappa": kappa,
                "abs_moment_at_kappa": moment,
                "cf": cf,
            });
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&info)?))?;
        }
        Command::Cf { kernel: spec, measure: m, tmax, points, o } => {
            let k = kernel(spec)?;
            emit_csv(o.as_deref(), &measure(m)?.char_grid(&k, *tmax, *points)?)?;
        }
        Command::Convolve { kernel: spec, a, b, o } => {
            let k = kernel(spec)?;
            emit(o.as_deref(), &weak_convolve(&k, &measure(a)?, &measure(b)?)?.to_json_string())?;
        }
        Command::Power { kernel: spec, measure: m, r, o } => {
            let k = kernel(spec)?;
            let m = measure(m)?;
            let out = if *r >= 0.0 && r.fract() == 0.0 && *r <= u64::MAX as f64 {
                power_int(&k, &m, *r as u64)?
            } else {
                power_frac(&k, &m, *r)?
            };
            emit(o.as_deref(), &out.to_json_string())?;
        }
        Command::ExpPoisson { kernel: spec, rate, measure: m, o } => {
            let k = kernel(spec)?;
            emit(o.as_deref(), &compound_poisson(&k, *rate, &measure(m)?)?.to_json_string())?;
        }
        Command::StableElement { kernel: spec, p, o } => {
            let k = kernel(spec)?;
            emit(o.as_deref(), &stable_element(&k, *p)?.to_json_string())?;
        }
        Command::LevyEval { kernel: spec, levy: path, tmax, points, verbose, o } => {
            let k = kernel(spec)?;
            let triple = LevyTriple::from_json_str(&read(path)?)?;
            if *points < 2 || !(*tmax > 0.0 && tmax.is_finite()) {
                return Err(Error::InvalidInput("need tmax > 0 and at least two points".into()));
            }
            if *verbose {
                let i = levy::levy_integrals(&k, &triple.nu)?;
                eprintln!("integrability: int G(1/s) nu(ds) = {:e}", i.value);
                eprintln!("integrability (literal form): int G(s) nu(ds) = {:e}", i.literal);
            }
            let ts: Vec<f64> = (0..*points).map(|i| tmax * i as f64 / (*points - 1) as f64).collect();
            let phi = levy::lk_cf_many(&k, &triple, &ts)?;
            emit_csv(o.as_deref(), &CharGrid::new(ts, phi)?)?;
        }
        Command::LevyBuild { kernel: spec, levy: path, o } => {
            let k = kernel(spec)?;
            let triple = LevyTriple::from_json_str(&read(path)?)?;
            emit(o.as_deref(), &levy_build(&k, &triple)?.to_json_string())?;
        }
        Command::LevyExtract { kernel: spec, measure: m, levels, o } => {
            let k = kernel(spec)?;
            if *levels < 2 {
                return Err(Error::InvalidInput(format!("--levels must be at least 2, got {levels}")));
            }
            let ex = levy_extract(&k, &measure(m)?, &ExtractOptions::with_levels(*levels))?;
            emit(o.as_deref(), &ex.triple.to_json_string())?;
        }
        Command::Sample { kernel: spec, measure: m, n, seed, o } => {
            let k = kernel(spec)?;
            let batch = sample_scale_mixture(&k, &measure(m)?, *n, *seed);
            let mut buf = Vec::new();
            batch.write_csv(&mut buf)?;
            emit(o.as_deref(), &String::from_utf8(buf).expect("ascii csv"))?;
            match o {
                Some(p) => fs::write(p.with_extension("meta.json"), batch.sidecar_json())?,
                None => eprintln!("{}", batch.sidecar_json()),
            }
        }
        Command::Verify { suite, json } => {
            let report = verify::run_suite(suite, &tol)?;
            if *json {
                emit(None, &format!("{}\n", report.checks_json()))?;
            } else {
                for c in &report.checks {
                    let tag = if c.pass { "pass" } else { "FAIL" };
                    println!("{tag}  {}  observed {:.3e}  bound {:.3e}", c.check_id, c.observed, c.bound);
                }
                for n in &report.notes {
                    println!("note: {n}");
                }
            }
            if !report.passed() {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var("WEAKCONV_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // Fails only if a pool already exists, which cannot happen this early.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: WEAKCONV_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
