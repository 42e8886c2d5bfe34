//! `fiberpool`: run pool scenarios, sweep seeds and check the results
//! against their analytic values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use fiberpool::engine::{self, builtin, report, CheckResult, ScenarioConfig};
use fiberpool::payment::{mean_and_variance, Scheme};

#[derive(Parser)]
#[command(name = "fiberpool", version, about = "Simulate a decentralized mining pool with lagged proportional payouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write rewards.csv, summary.txt and scenario.toml.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario once per seed, in parallel, and aggregate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Seeds as an inclusive range `A-B`, a comma list, or both (`1-10,42`).
        #[arg(long, default_value = "1-100")]
        seeds: String,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Args)]
struct Common {
    /// Built-in scenario name or path to a TOML scenario file.
    #[arg(long)]
    scenario: String,
    /// Override the run length in periods.
    #[arg(long)]
    periods: Option<u64>,
    /// Evaluate the scenario's checks and exit nonzero if any fails.
    #[arg(long)]
    check: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// Exit status when a requested check fails.
const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status for unusable input.
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { common, seed } => run(&common, seed),
        Command::Sweep { common, seeds, threads } => sweep(&common, &seeds, threads),
        Command::ListScenarios => {
            for s in builtin::BUILTIN {
                println!("{:<16} {}", s.name, s.headline());
            }
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_scenario(scenario: &str, periods: Option<u64>) -> Result<ScenarioConfig, String> {
    let path = Path::new(scenario);
    let text = if path.is_file() {
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?
    } else if let Some(s) = builtin::find(scenario) {
        s.source.to_string()
    } else {
        let names: Vec<_> = builtin::BUILTIN.iter().map(|s| s.name).collect();
        return Err(format!("no scenario file or built-in named '{scenario}' (built-ins: {})", names.join(", ")));
    };
    let mut cfg = ScenarioConfig::from_toml_str(&text).map_err(|e| e.to_string())?;
    if let Some(p) = periods {
        cfg.periods = p;
        cfg.validate().map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

struct RunOutput {
    seed: u64,
    run_id: String,
    totals: Vec<f64>,
    checks: Vec<CheckResult>,
}

/// Runs `cfg`, evaluates checks if asked, and writes the run's files.
fn execute(cfg: &ScenarioConfig, check: bool, dir: &Path) -> Result<(RunOutput, String), String> {
    let stats = engine::run(cfg).map_err(|e| e.to_string())?;
    let checks = if check { engine::evaluate(cfg, &stats) } else { Vec::new() };
    let summary = report::summary(&stats, &checks);
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let write = |name: &str, body: &str| fs::write(dir.join(name), body).map_err(|e| format!("cannot write {name}: {e}"));
    write("rewards.csv", &report::rewards_csv(&stats))?;
    write("summary.txt", &summary)?;
    write("scenario.toml", &cfg.to_toml())?;
    let totals = (0..stats.miners.len()).map(|m| stats.total_reward(Scheme::FProportional, m).to_f64()).collect();
    Ok((RunOutput { seed: cfg.seed, run_id: report::run_id(&stats), totals, checks }, summary))
}

fn run(common: &Common, seed: Option<u64>) -> Result<bool, String> {
    let mut cfg = load_scenario(&common.scenario, common.periods)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (out, summary) = execute(&cfg, common.check, &common.out_dir)?;
    print!("{summary}");
    Ok(out.checks.iter().all(|c| c.passed))
}

fn parse_seeds(list: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed list entry '{part}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".to_string());
    }
    Ok(seeds)
}

fn sweep(common: &Common, seeds: &str, threads: Option<usize>) -> Result<bool, String> {
    let cfg = load_scenario(&common.scenario, common.periods)?;
    let seeds = parse_seeds(seeds)?;
    let workers = threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).clamp(1, seeds.len());

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutput, String>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let mut run_cfg = cfg.clone();
                run_cfg.seed = seed;
                let dir = common.out_dir.join("runs").join(format!("{}-s{seed}", cfg.name));
                let out = execute(&run_cfg, common.check, &dir).map(|(o, _)| o);
                results.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    let runs = results.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every seed ran")).collect::<Result<Vec<_>, _>>()?;

    let names: Vec<&str> = cfg.miners.iter().map(|m| m.name.as_str()).collect();
    let mut csv = String::from("run_id,seed,checks_passed,checks_failed");
    for n in &names {
        let _ = write!(csv, ",total_{n}");
    }
    csv.push('\n');
    for r in &runs {
        let passed = r.checks.iter().filter(|c| c.passed).count();
        let _ = write!(csv, "{},{},{passed},{}", r.run_id, r.seed, r.checks.len() - passed);
        for t in &r.totals {
            let _ = write!(csv, ",{t:.9}");
        }
        csv.push('\n');
    }

    let mut summary =
        format!("sweep {} over {} seeds on {workers} threads\n\nfproportional total reward per miner (mean, std)\n", cfg.name, runs.len());
    for (m, n) in names.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.totals[m]).collect();
        let (mean, var) = mean_and_variance(&xs);
        let _ = writeln!(summary, "  {n:<16} {mean:.6}  {:.6}", var.sqrt());
    }
    let mut all_passed = true;
    if common.check {
        let _ = writeln!(summary, "\nchecks passed per seed");
        for (k, kind) in cfg.checks.iter().enumerate() {
            let passed = runs.iter().filter(|r| r.checks[k].passed).count();
            all_passed &= passed == runs.len();
            let _ = writeln!(summary, "  {:<14} {passed}/{}", kind.label(), runs.len());
        }
    }
    fs::create_dir_all(&common.out_dir).map_err(|e| format!("cannot create {}: {e}", common.out_dir.display()))?;
    fs::write(common.out_dir.join("sweep.csv"), csv).map_err(|e| format!("cannot write sweep.csv: {e}"))?;
    fs::write(common.out_dir.join("sweep-summary.txt"), &summary).map_err(|e| format!("cannot write sweep-summary.txt: {e}"))?;
    print!("{summary}");
    Ok(all_passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }
}
