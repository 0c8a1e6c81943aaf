//! `gft-lab`: scripted access to the mechanisms, exact formulas and experiments.
//!
//! stdout carries only JSON (or CSV with `--csv`); diagnostics go to stderr.
//! Exit codes: 0 success, 1 bad input or I/O, 2 a failed check.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use gft_lab_core::exactprob::{self, Formula};
use gft_lab_core::experiment::{self, Example, ExperimentConfig, Witness, CSV_HEADER};
use gft_lab_core::mechanisms::{check_dsic, check_ir, check_wbb, dsic_grid};
use gft_lab_core::money::{parse_rational, rational_string};
use gft_lab_core::{first_best, Error, Mechanism, Money, Profile, Rational};

#[derive(Parser)]
#[command(name = "gft-lab", version, about = "Double-auction mechanisms, augmentation experiments and exact event probabilities")]
struct Cli {
    /// Worker threads for Monte Carlo runs; 0 uses every core.
    #[arg(long, global = true, env = "GFT_LAB_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism on a profile.
    Mech {
        #[arg(long)]
        mechanism: Mechanism,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// First-best allocation of a profile.
    Fb {
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Evaluate a closed-form event probability.
    Prob {
        #[arg(long)]
        formula: Formula,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: usize,
        /// Regime parameter of `e1-lower`.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Monte Carlo run from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        csv: bool,
        /// Also compare the conditional gaps with the quantile benchmark.
        #[arg(long, conflicts_with = "csv")]
        conditional: bool,
        #[command(flatten)]
        witness: WitnessArgs,
    },
    /// One run per value of c.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Strictly ascending, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        c_values: Vec<usize>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        witness: WitnessArgs,
    },
    /// Exact values of a worked example: figure1, intro_eps, b5, appendix_e.
    Reproduce {
        id: String,
        /// Accepted for symmetry with mech/fb; worked examples are always exact.
        #[arg(long)]
        exact: bool,
        /// Override epsilon for intro_eps and b5.
        #[arg(long)]
        eps: Option<String>,
        /// Override the market size for b5.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Property checks.
    #[command(subcommand)]
    Verify(Verify),
}

#[derive(Subcommand)]
enum Verify {
    /// IR and WBB on a profile, plus DSIC on a bid grid, for every mechanism.
    Properties {
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Conditioning on avoided positions never lowers an occupancy tail.
    Conditioning {
        #[arg(long)]
        total: usize,
        #[arg(long)]
        c: usize,
    },
}

#[derive(Args)]
struct ProfileArgs {
    /// JSON file `{"buyers": [...], "sellers": [...]}`.
    #[arg(long, required_unless_present = "buyers", conflicts_with_all = ["buyers", "sellers"])]
    profile: Option<PathBuf>,
    /// Inline buyer values, comma separated.
    #[arg(long, requires = "sellers", value_delimiter = ',', allow_hyphen_values = true)]
    buyers: Option<Vec<String>>,
    #[arg(long, requires = "buyers", value_delimiter = ',', allow_hyphen_values = true)]
    sellers: Option<Vec<String>>,
    /// Exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct WitnessArgs {
    /// Where counterexample witnesses are written.
    #[arg(long, default_value = ".")]
    witness_dir: PathBuf,
}

/// A check that ran and failed; maps to exit code 2.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

enum Output {
    Json(Value),
    Text(String),
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

impl ProfileArgs {
    fn load_f64(&self) -> anyhow::Result<Profile<f64>> {
        match (&self.profile, &self.buyers, &self.sellers) {
            (Some(path), _, _) => Ok(Profile::from_json_str(&read(path)?)?),
            (None, Some(b), Some(s)) => {
                let conv = |vs: &[String]| -> anyhow::Result<Vec<f64>> { vs.iter().map(|v| Ok(parse_rational(v)?.to_f64_lossy())).collect() };
                Ok(Profile::new(conv(b)?, conv(s)?)?)
            }
            _ => Err(anyhow!("need --profile or both --buyers and --sellers")),
        }
    }

    fn load_exact(&self) -> anyhow::Result<Profile<Rational>> {
        match (&self.profile, &self.buyers, &self.sellers) {
            (Some(path), _, _) => Ok(Profile::from_json_str_exact(&read(path)?)?),
            (None, Some(b), Some(s)) => {
                let conv = |vs: &[String]| -> anyhow::Result<Vec<Rational>> { vs.iter().map(|v| Ok(parse_rational(v)?)).collect() };
                Ok(Profile::new(conv(b)?, conv(s)?)?)
            }
            _ => Err(anyhow!("need --profile or both --buyers and --sellers")),
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>, trials: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json_str(&read(path)?).with_context(|| format!("bad config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    Ok(cfg)
}

/// Writes the witness next to other artifacts and turns the error into a failed check.
fn surface_violation(err: Error, dir: &Path) -> anyhow::Error {
    let Error::ImplicationViolated { count, witness } = err else {
        return err.into();
    };
    match write_witness(&witness, dir) {
        Ok(path) => {
            eprintln!("witness written to {}", path.display());
            CheckFailed(format!("{count} implication violation(s), first: {}", witness.implication)).into()
        }
        Err(e) => e.context("implication violated but the witness could not be written"),
    }
}

fn write_witness(w: &Witness, dir: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(format!("witness-seed{}-trial{}.json", w.seed, w.trial));
    fs::write(&path, serde_json::to_string_pretty(w)?).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn mech(mechanism: Mechanism, profile: &ProfileArgs) -> anyhow::Result<Value> {
    Ok(if profile.exact {
        mechanism.run(&profile.load_exact()?).to_json()
    } else {
        mechanism.run(&profile.load_f64()?).to_json()
    })
}

fn fb(profile: &ProfileArgs) -> anyhow::Result<Value> {
    Ok(if profile.exact {
        first_best(&profile.load_exact()?).to_json()
    } else {
        first_best(&profile.load_f64()?).to_json()
    })
}

fn prob(formula: Formula, m: usize, n: usize, c: usize, alpha: f64) -> anyhow::Result<Value> {
    let v = exactprob::evaluate(formula, m, n, c, alpha)?;
    Ok(json!({
        "formula": formula,
        "m": m,
        "n": n,
        "c": c,
        "exact": v.exact.as_ref().map(rational_string),
        "decimal": v.decimal,
    }))
}

fn reproduce(id: &str, eps: Option<&str>, n: Option<usize>) -> anyhow::Result<Value> {
    let mut example: Example = id.parse()?;
    match &mut example {
        Example::IntroEps { eps: e } => {
            if let Some(s) = eps {
                *e = parse_rational(s)?;
            }
        }
        Example::B5 { n: size, eps: e } => {
            if let Some(s) = eps {
                *e = parse_rational(s)?;
            }
            if let Some(k) = n {
                *size = k;
            }
        }
        _ if eps.is_some() || n.is_some() => return Err(anyhow!("{id} takes no --eps or --n")),
        _ => {}
    }
    let r = experiment::reproduce(&example)?;
    for (name, ok) in &r.checks {
        eprintln!("{} {name}", if *ok { "ok  " } else { "FAIL" });
    }
    if !r.pass() {
        let failed: Vec<_> = r.checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
        // values still go to stdout so the mismatch can be inspected
        println!("{}", serde_json::to_string(&r.values)?);
        return Err(CheckFailed(format!("{id}: {}", failed.join("; "))).into());
    }
    Ok(serde_json::to_value(&r.values)?)
}

fn verify_properties(profile: &ProfileArgs) -> anyhow::Result<Value> {
    let p = profile.load_f64()?;
    let mut grid: Vec<f64> = (0..=6).map(|k| f64::from(k) * 0.5).collect();
    grid.extend(dsic_grid(&p));
    let mut report = serde_json::Map::new();
    let mut failures = Vec::new();
    for mech in [Mechanism::Str, Mechanism::Btr, Mechanism::Tr] {
        let o = mech.run(&p);
        let ir = check_ir(&o, &p);
        let wbb = check_wbb(&o);
        let dsic = check_dsic(mech, &p, &grid);
        if !ir.passed() || !wbb.passed() || dsic.is_err() {
            failures.push(mech.to_string());
        }
        report.insert(
            mech.to_string(),
            json!({
                "ir": ir.violations,
                "wbb": wbb.violations,
                "dsic": dsic.err(),
            }),
        );
    }
    let value = Value::Object(report);
    if !failures.is_empty() {
        println!("{value}");
        return Err(CheckFailed(format!("property check failed for {}", failures.join(", "))).into());
    }
    Ok(value)
}

fn verify_conditioning(total: usize, c: usize) -> anyhow::Result<Value> {
    if total > 20 || c > total {
        return Err(anyhow!("need c <= total <= 20, got total={total} c={c}"));
    }
    let report = exactprob::verify_conditioning_claim(total, c);
    let value = serde_json::to_value(&report)?;
    if !report.holds() {
        println!("{value}");
        return Err(CheckFailed("conditioning claim has a counterexample".into()).into());
    }
    Ok(value)
}

fn dispatch(cli: Cli) -> anyhow::Result<Output> {
    let workers = cli.workers;
    Ok(match cli.command {
        Command::Mech { mechanism, profile } => Output::Json(mech(mechanism, &profile)?),
        Command::Fb { profile } => Output::Json(fb(&profile)?),
        Command::Prob { formula, m, n, c, alpha } => Output::Json(prob(formula, m, n, c, alpha)?),
        Command::Run { config, trials, csv, conditional, witness } => {
            let cfg = load_config(&config, cli.seed, trials)?;
            if conditional {
                let report = experiment::conditional_gaps(&cfg, workers).map_err(|e| surface_violation(e, &witness.witness_dir))?;
                Output::Json(serde_json::to_value(&report)?)
            } else {
                let result = experiment::run(&cfg, workers).map_err(|e| surface_violation(e, &witness.witness_dir))?;
                if csv {
                    Output::Text(format!("{CSV_HEADER}\n{}\n", result.csv_row()))
                } else {
                    Output::Json(serde_json::to_value(&result)?)
                }
            }
        }
        Command::Sweep { config, c_values, trials, csv, witness } => {
            let cfg = load_config(&config, cli.seed, trials)?;
            let report = experiment::sweep_c(&cfg, &c_values, workers).map_err(|e| surface_violation(e, &witness.witness_dir))?;
            if csv {
                let mut out = format!("{CSV_HEADER}\n");
                for row in &report.rows {
                    out.push_str(&row.csv_row());
                    out.push('\n');
                }
                Output::Text(out)
            } else {
                Output::Json(serde_json::to_value(&report)?)
            }
        }
        Command::Reproduce { id, exact: _, eps, n } => Output::Json(reproduce(&id, eps.as_deref(), n)?),
        Command::Verify(Verify::Properties { profile }) => Output::Json(verify_properties(&profile)?),
        Command::Verify(Verify::Conditioning { total, c }) => Output::Json(verify_conditioning(total, c)?),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(Output::Json(v)) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Ok(Output::Text(t)) => {
            print!("{t}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<CheckFailed>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
