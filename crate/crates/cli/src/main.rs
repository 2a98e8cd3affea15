//! Command-line driver. Exit codes: 0 success, 1 verification or runtime
//! failure, 2 usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wickamp::formats::{
    self, parse_poly_file, parse_rational, parse_tree, rational_string, ConfigFile,
};
use wickamp::manifest::ManifestTimer;
use wickamp::sim;
use wickamp::verify::{self, Suite};
use wickamp_core::oracle::{exact_moment_rademacher, tree_sum_expectation, IterationForm};
use wickamp_core::poly::Polynomial;
use wickamp_core::rational::Rational;
use wickamp_core::se::{predicted_moment, se_sequence, tree_moment_sum};
use wickamp_core::spiked::{spiked_wick, SpikeConfig, SpikedCache};
use wickamp_core::trees::diagnostics;
use wickamp_core::wick::{se_functional, wick_count, WickCache};

/// Exact tree combinatorics, state evolution, and a seeded simulator for
/// iterative algorithms on random symmetric matrices.
#[derive(Parser)]
#[command(name = "wickamp", version, about)]
struct Cli {
    /// Worker threads (default: all cores). Env: WICKAMP_JOBS.
    #[arg(long, global = true, env = "WICKAMP_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a Monte Carlo experiment from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Report JSON (embeds the run manifest).
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV export of the moment table.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Seed override. Env: WICKAMP_SEED.
        #[arg(long, env = "WICKAMP_SEED")]
        seed: Option<u64>,
        /// Moment powers, comma separated.
        #[arg(long, default_value = "1,2,4")]
        moments: String,
        /// Average over every sign pattern instead of sampling
        /// (rademacher ensemble, n <= 4).
        #[arg(long)]
        exhaustive: bool,
    },
    /// Exact state-evolution variances (or the tree-sum identity).
    Se(SeArgs),
    /// Pairing counts of a tree file.
    Wick {
        #[command(subcommand)]
        sub: WickSub,
    },
    /// Structural diagnostics of a labeled tree file.
    Tree {
        #[command(subcommand)]
        sub: TreeSub,
    },
    /// Exact finite-N brute-force cross-checks.
    Oracle {
        #[command(subcommand)]
        sub: OracleSub,
    },
    /// Iteration-count regime classification.
    Regime {
        #[arg(long = "logN")]
        log_n: f64,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        t: u32,
        #[arg(long, default_value_t = 2)]
        m: u32,
        #[arg(long, default_value_t = 21.0)]
        k1: f64,
        #[arg(long, default_value_t = 1.0)]
        bound_m: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spiked (colored-tree) products.
    Spiked {
        #[command(subcommand)]
        sub: SpikedSub,
    },
    /// Run acceptance suites: algebra, identities, oracle, montecarlo, all.
    Verify {
        suite: String,
        /// Override the desk-scale Monte Carlo configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct SeArgs {
    #[command(subcommand)]
    sub: Option<SeSub>,
    /// JSON file with the nonlinearity list.
    #[arg(long)]
    poly_file: Option<PathBuf>,
    #[arg(long)]
    t: Option<usize>,
    /// Initialization scale tau_0 (the variance is its square).
    #[arg(long, default_value = "1")]
    tau0: String,
    /// Check the uniform bound against this value.
    #[arg(long)]
    bound_m: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SeSub {
    /// Expand a moment into trees and compare with the prediction.
    TreeSum {
        #[arg(long)]
        poly_file: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        two_m: u32,
        #[arg(long, default_value = "1")]
        tau0: String,
        /// Expansion budget. Env: WICKAMP_BUDGET.
        #[arg(long, default_value_t = 1_000_000, env = "WICKAMP_BUDGET")]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum WickSub {
    /// Print the exact pairing count.
    Count { file: PathBuf },
    /// Print the Gaussian-recursion value.
    Se { file: PathBuf },
    /// Compare both routes.
    Check {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TreeSub {
    /// Print excess, edge classes, and the bad-subtree summary.
    Check {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleSub {
    /// Exhaustive signed expectation vs the tree-sum expectation.
    CrossCheck {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        poly_file: PathBuf,
        /// Iteration form for the exhaustive side: "non-backtracking"
        /// (matches the expansion exactly) or "onsager".
        #[arg(long, default_value = "non-backtracking")]
        form: String,
        #[arg(long, default_value_t = 1_000_000, env = "WICKAMP_BUDGET")]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SpikedSub {
    /// Evaluate the spiked product of a colored tree file.
    Wick {
        file: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Spike direction: only "ones" is built in.
        #[arg(long, default_value = "ones")]
        vstar: String,
        #[arg(long)]
        n: usize,
        /// Root coordinate index.
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            eprintln!("warning: thread pool already initialized");
        }
    }
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Writes (or prints) a payload, wrapping files with the run manifest.
fn emit(
    command: &str,
    config_echo: serde_json::Value,
    payload: serde_json::Value,
    out: Option<&Path>,
) -> Result<()> {
    match out {
        Some(path) => {
            let manifest = ManifestTimer::start(command, config_echo).finish(0);
            let doc = serde_json::json!({ "manifest": manifest, "result": payload });
            std::fs::write(path, serde_json::to_string_pretty(&doc)?)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&payload)?),
    }
    Ok(())
}

fn load_polynomials(path: &Path) -> Result<Vec<Polynomial>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    parse_poly_file(&text)?
        .iter()
        .map(|spec| spec.to_polynomial().map_err(Into::into))
        .collect()
}

fn rational_arg(text: &str) -> Result<Rational> {
    parse_rational(text).map_err(|e| anyhow::anyhow!("{e}"))
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Simulate { config, out, csv, seed, moments, exhaustive } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("cannot read {}", config.display()))?;
            let mut file: ConfigFile = match serde_json::from_str(&text) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: malformed config {}: {e}", config.display());
                    return Ok(ExitCode::from(2));
                }
            };
            if let Some(s) = seed {
                file.seed = s;
            }
            let ms: Vec<u32> = moments
                .split(',')
                .map(|p| p.trim().parse::<u32>())
                .collect::<Result<_, _>>()
                .context("bad --moments list")?;
            let amp = file.to_amp_config()?;
            let report = if exhaustive {
                sim::exhaustive_rademacher(&amp, &ms)?
            } else {
                sim::monte_carlo(&amp, &ms)?
            };
            let echo = serde_json::to_value(&file)?;
            let manifest = ManifestTimer::start("simulate", echo.clone()).finish(0);
            let doc = serde_json::json!({
                "manifest": manifest,
                "config": echo,
                "report": report,
            });
            std::fs::write(&out, serde_json::to_string_pretty(&doc)?)
                .with_context(|| format!("cannot write {}", out.display()))?;
            if let Some(csv_path) = csv {
                std::fs::write(&csv_path, formats::report_csv(&report))
                    .with_context(|| format!("cannot write {}", csv_path.display()))?;
            }
            println!(
                "{} rows, all_pass = {}, report written to {}",
                report.rows.len(),
                report.all_pass,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Se(args) => match args.sub {
            Some(SeSub::TreeSum { poly_file, t, two_m, tau0, budget, out }) => {
                let f = load_polynomials(&poly_file)?;
                let tau0 = rational_arg(&tau0)?;
                let sum = tree_moment_sum(&f, t, two_m, &tau0, budget)?;
                let scaled: Vec<_> = f.iter().cloned().map(Into::into).collect();
                let st = se_sequence(&scaled, t, &tau0 * &tau0, None);
                let predicted = predicted_moment(st.last(), two_m);
                let payload = serde_json::json!({
                    "tree_sum": rational_string(&sum),
                    "predicted": rational_string(&predicted),
                    "equal": sum == predicted,
                });
                let echo = serde_json::json!({
                    "poly_file": poly_file, "t": t, "two_m": two_m,
                    "tau0": rational_string(&tau0), "budget": budget,
                });
                emit("se tree-sum", echo, payload, out.as_deref())?;
                Ok(ExitCode::SUCCESS)
            }
            None => {
                let poly_file = args
                    .poly_file
                    .ok_or_else(|| anyhow::anyhow!("--poly-file is required"))?;
                let t = args.t.ok_or_else(|| anyhow::anyhow!("--t is required"))?;
                let text = std::fs::read_to_string(&poly_file)
                    .with_context(|| format!("cannot read {}", poly_file.display()))?;
                let f: Vec<_> = parse_poly_file(&text)?
                    .iter()
                    .map(|s| s.to_scaled())
                    .collect::<Result<_, _>>()?;
                let tau0 = rational_arg(&args.tau0)?;
                let bound = args.bound_m.as_deref().map(rational_arg).transpose()?;
                let st = se_sequence(&f, t, &tau0 * &tau0, bound);
                let payload = serde_json::json!({
                    "tau2": st.tau2.iter().map(rational_string).collect::<Vec<_>>(),
                    "assumption_holds": st.assumption_holds,
                });
                let echo = serde_json::json!({
                    "poly_file": poly_file, "t": t, "tau0": rational_string(&tau0),
                });
                emit("se", echo, payload, args.out.as_deref())?;
                Ok(ExitCode::SUCCESS)
            }
        },

        Cmd::Wick { sub } => {
            let (file, mode, out) = match sub {
                WickSub::Count { file } => (file, "count", None),
                WickSub::Se { file } => (file, "se", None),
                WickSub::Check { file, out } => (file, "check", out),
            };
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("cannot read {}", file.display()))?;
            let parsed = parse_tree(&text)?;
            let mut cache = WickCache::new();
            match mode {
                "count" => println!("{}", wick_count(&parsed.tree, &mut cache)),
                "se" => println!("{}", rational_string(&se_functional(&parsed.tree, &mut cache))),
                _ => {
                    let count = wick_count(&parsed.tree, &mut cache);
                    let se = se_functional(&parsed.tree, &mut cache);
                    let equal =
                        Rational::from_integer(wickamp_core::Int::from(count.clone())) == se;
                    let payload = serde_json::json!({
                        "wick": count.to_string(),
                        "se_functional": rational_string(&se),
                        "equal": equal,
                    });
                    let echo = serde_json::json!({ "file": file });
                    emit("wick check", echo, payload, out.as_deref())?;
                    if !equal {
                        return Ok(ExitCode::from(1));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Tree { sub: TreeSub::Check { file, out } } => {
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("cannot read {}", file.display()))?;
            let parsed = parse_tree(&text)?;
            let lt = parsed.labeled()?;
            let d = diagnostics(&lt);
            let classes: Vec<serde_json::Value> = d
                .edge_classes
                .iter()
                .map(|(child, class)| {
                    serde_json::json!({
                        "parent_label": lt.labels()[lt.tree().parent(*child).unwrap()],
                        "child_label": lt.labels()[*child],
                        "class": format!("{class:?}"),
                    })
                })
                .collect();
            let payload = serde_json::json!({
                "excess": format!("{}/2", d.excess_x2),
                "excess_is_zero": d.excess_x2 == 0,
                "survives_expectation": wickamp_core::trees::survives_expectation(&lt),
                "edge_classes": classes,
                "root_label_repeats": d.root_label_repeats,
                "bad_vertices": d.bad_vertices.iter().copied().collect::<Vec<_>>(),
                "bad_subtree": {
                    "branch_vertices": d.bad_subtree.branch.iter().copied().collect::<Vec<_>>(),
                    "boundary_vertices": d.bad_subtree.boundary.iter().copied().collect::<Vec<_>>(),
                    "boundary_pairs": d.bad_subtree.boundary_pairs,
                },
            });
            let echo = serde_json::json!({ "file": file });
            emit("tree check", echo, payload, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Oracle {
            sub: OracleSub::CrossCheck { t, m, n, poly_file, form, budget, out },
        } => {
            let f = load_polynomials(&poly_file)?;
            let form = match form.as_str() {
                "non-backtracking" => IterationForm::NonBacktracking,
                "onsager" => IterationForm::Onsager,
                other => bail!("unknown iteration form `{other}`"),
            };
            let oracle = exact_moment_rademacher(&f, t, m, n, form)?;
            let tree_sum = tree_sum_expectation(&f, t, m, n, budget)?;
            let equal = oracle.value == tree_sum.value;
            let payload = serde_json::json!({
                "oracle": rational_string(&oracle.value),
                "tree_sum": rational_string(&tree_sum.value),
                "equal": equal,
                "sign_patterns": oracle.enumeration_size,
                "labelings": tree_sum.enumeration_size,
            });
            let echo = serde_json::json!({
                "t": t, "m": m, "n": n, "poly_file": poly_file, "form": format!("{form:?}"),
            });
            emit("oracle cross-check", echo, payload, out.as_deref())?;
            Ok(if equal { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Cmd::Regime { log_n, d, t, m, k1, bound_m, out } => {
            let report = wickamp_core::regime::regime_classify(log_n, d, t, m, bound_m, k1);
            let payload = serde_json::json!({
                "log_n": report.log_n,
                "degree": report.degree,
                "moment_power": report.moment_power,
                "t": report.t,
                "exponent_lower_bound": report.exponent_lower_bound,
                "threshold_t": report.threshold_t,
                "k1": report.k1,
                "c_d": report.c_d,
                "verdict": format!("{:?}", report.verdict),
                "b_constant": "unknown (bounded by 1000)",
            });
            let echo = serde_json::json!({
                "logN": log_n, "d": d, "t": t, "m": m, "k1": k1, "bound_m": bound_m,
            });
            emit("regime", echo, payload, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Spiked { sub: SpikedSub::Wick { file, lambda, vstar, n, root, out } } => {
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("cannot read {}", file.display()))?;
            let parsed = parse_tree(&text)?;
            let colored = parsed.colored()?;
            if vstar != "ones" {
                bail!("only --vstar ones is supported");
            }
            let cfg = SpikeConfig::ones(lambda, n);
            let value = spiked_wick(&colored, &cfg, root, &mut SpikedCache::new());
            let payload = serde_json::json!({ "spiked_wick": value });
            let echo = serde_json::json!({
                "file": file, "lambda": lambda, "vstar": vstar, "n": n, "root": root,
            });
            emit("spiked wick", echo, payload, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Verify { suite, config } => {
            let Some(suite) = Suite::parse(&suite) else {
                eprintln!(
                    "error: unknown suite `{suite}` (algebra, identities, oracle, montecarlo, all)"
                );
                return Ok(ExitCode::from(2));
            };
            let amp_config = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("cannot read {}", path.display()))?;
                    let file: ConfigFile = match serde_json::from_str(&text) {
                        Ok(f) => f,
                        Err(e) => {
                            eprintln!("error: malformed config {}: {e}", path.display());
                            return Ok(ExitCode::from(2));
                        }
                    };
                    Some(file.to_amp_config()?)
                }
                None => None,
            };
            let results = verify::run_suite(suite, amp_config.as_ref());
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!(
                "{} checks, {} passed, {} failed",
                results.len(),
                results.len() - failed,
                failed
            );
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
