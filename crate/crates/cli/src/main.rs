//! `fieldgate` — operator CLI for the policy-enforcement demo.
//!
//! Exit codes: 0 on success, 1 when a check fails (equivalence mismatches,
//! measurement errors), 2 for usage mistakes and IO problems.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use fieldgate_cli::bench::{self, BenchConfig, Transport};
use fieldgate_core::policy::{EnforceTrace, RequestContext};
use fieldgate_core::store::Database;
use fieldgate_demo::endpoint::{Endpoint, Params};
use fieldgate_demo::report::run_equivalence;
use fieldgate_demo::scenario::{builder_names, find_builder, user_context, Scenario, ScenarioBuilder, BUILDERS};
use fieldgate_demo::service::{self, AppState, ServeMode};

#[derive(Parser)]
#[command(
    name = "fieldgate",
    version,
    about = "Field-policy enforcement demo: explain decisions, seed data, serve, bench, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Http,
    Inproc,
}

impl From<TransportArg> for Transport {
    fn from(t: TransportArg) -> Transport {
        match t {
            TransportArg::Http => Transport::Http,
            TransportArg::Inproc => Transport::InProcess,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios
    Scenarios,
    /// Show every decision enforcement makes for one endpoint call
    Explain {
        #[arg(long)]
        scenario: String,
        /// API name of the endpoint (see `scenarios`)
        #[arg(long)]
        endpoint: String,
        /// Caller id; omit for an anonymous request
        #[arg(long)]
        user: Option<i64>,
        /// Route parameter as KEY=VALUE (defaults come from the fixture)
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Write a scenario's dataset snapshot to a file
    Seed {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a scenario over HTTP
    Serve {
        /// Scenario to serve
        #[arg(long, alias = "scenario")]
        fixture: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Load the dataset from a snapshot file instead of seeding
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, default_value_t = 8787)]
        port: u16,
        /// Wrap every response as {"data", "trace"} with the decisions made
        #[arg(long)]
        debug_trace: bool,
        /// Serve the inline-check implementations instead of the engine
        #[arg(long)]
        baseline: bool,
    },
    /// Measure enforced vs inline latency and throughput
    Bench {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Restrict to these APIs (repeatable); default is every endpoint
        #[arg(long = "endpoint")]
        endpoints: Vec<String>,
        /// Sequential latency measurements per endpoint and mode
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Concurrent workers for the throughput phase
        #[arg(long, default_value_t = 10)]
        concurrency: usize,
        /// Total requests in the throughput phase
        #[arg(long, default_value_t = 500)]
        requests: usize,
        /// Unmeasured requests before each latency series
        #[arg(long, default_value_t = 20)]
        warmup: usize,
        #[arg(long, value_enum, default_value_t = TransportArg::Http)]
        transport: TransportArg,
        /// Also write the report here (.csv gets the CSV rendering)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Diff enforced vs inline responses across endpoints and users
    Equivalence {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// How many seeded users to sample (anonymous is always included)
        #[arg(long, default_value_t = 50)]
        users: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn check_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Scenarios => {
            for builder in BUILDERS {
                println!("{:<16} {}", builder.name(), builder.summary());
            }
            Ok(())
        }
        Command::Explain {
            scenario,
            endpoint,
            user,
            params,
            format,
            scale,
        } => explain(&scenario, &endpoint, user, &params, format, scale),
        Command::Seed {
            scenario,
            scale,
            out,
        } => seed(&scenario, scale, &out),
        Command::Serve {
            fixture,
            scale,
            snapshot,
            port,
            debug_trace,
            baseline,
        } => serve(&fixture, scale, snapshot.as_deref(), port, debug_trace, baseline),
        Command::Bench {
            scenario,
            scale,
            endpoints,
            trials,
            concurrency,
            requests,
            warmup,
            transport,
            out,
            format,
        } => run_bench(
            &scenario,
            scale,
            endpoints,
            trials,
            concurrency,
            requests,
            warmup,
            transport.into(),
            out.as_deref(),
            format,
        ),
        Command::Equivalence {
            scenario,
            scale,
            users,
            format,
            out,
        } => equivalence(&scenario, scale, users, format, out.as_deref()),
    }
}

fn lookup_builder(name: &str) -> Result<&'static dyn ScenarioBuilder, Failure> {
    find_builder(name).ok_or_else(|| {
        usage(format!(
            "unknown scenario '{name}'; known: {}",
            builder_names().join(", ")
        ))
    })
}

fn scale_units(scale: f64) -> Result<u32, Failure> {
    if !scale.is_finite() || scale < 0.0 || scale > u32::MAX as f64 {
        return Err(usage(format!("--scale must be a non-negative number, got {scale}")));
    }
    Ok(scale.round() as u32)
}

fn build_scenario(name: &str, scale: f64) -> Result<Arc<Scenario>, Failure> {
    let builder = lookup_builder(name)?;
    let units = scale_units(scale)?;
    builder
        .build(units)
        .map(Arc::new)
        .map_err(|e| check_failure(format!("building scenario '{name}': {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| io_failure(format!("writing {}: {e}", path.display())))
}

// --- explain -------------------------------------------------------------------

fn explain(
    scenario_name: &str,
    endpoint_name: &str,
    user: Option<i64>,
    param_flags: &[String],
    format: Format,
    scale: f64,
) -> Result<(), Failure> {
    let scenario = build_scenario(scenario_name, scale)?;
    let endpoint = scenario.endpoint(endpoint_name).cloned().ok_or_else(|| {
        let known: Vec<String> = scenario
            .endpoints
            .iter()
            .map(|e| e.api().as_str().to_string())
            .collect();
        usage(format!(
            "unknown endpoint '{endpoint_name}' in scenario '{scenario_name}'; known: {}",
            known.join(", ")
        ))
    })?;

    let identity = user_context(&scenario.db, user)
        .map_err(|e| check_failure(format!("resolving user: {e}")))?;
    if user.is_some() && !identity.is_authenticated() {
        return Err(usage(format!(
            "unknown user id {} in scenario '{scenario_name}'",
            user.expect("checked is_some")
        )));
    }

    let mut params = endpoint
        .sample_params(&scenario.db)
        .into_iter()
        .next()
        .unwrap_or_default();
    for flag in param_flags {
        let (key, value) = flag
            .split_once('=')
            .ok_or_else(|| usage(format!("--param expects KEY=VALUE, got '{flag}'")))?;
        params.insert(key.to_string(), value.to_string());
    }

    let ctx = RequestContext::new(identity, endpoint.api());
    let plan = endpoint
        .plan(&params)
        .map_err(|e| usage(format!("planning request: {e}")))?;
    let mut traces: Vec<(&'static str, EnforceTrace)> = Vec::new();
    for (name, query) in plan {
        let (_, trace) = scenario
            .engine
            .enforce_traced(&query, &ctx)
            .map_err(|e| check_failure(format!("enforcing '{name}': {e}")))?;
        traces.push((name, trace));
    }

    match format {
        Format::Json => {
            let mut queries = serde_json::Map::new();
            for (name, trace) in &traces {
                queries.insert(
                    name.to_string(),
                    serde_json::to_value(trace).expect("trace serializes"),
                );
            }
            let doc = serde_json::json!({
                "scenario": scenario.name,
                "endpoint": endpoint.api().as_str(),
                "route": endpoint.route(),
                "queries": queries,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("doc serializes"));
        }
        Format::Table => {
            print!("{}", render_explain(&scenario, endpoint.as_ref(), user, &params, &traces));
        }
    }
    Ok(())
}

fn render_explain(
    scenario: &Scenario,
    endpoint: &dyn Endpoint,
    user: Option<i64>,
    params: &Params,
    traces: &[(&'static str, EnforceTrace)],
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "GET {} → api {} (scenario {})\n",
        endpoint.route(),
        endpoint.api().as_str(),
        scenario.name
    ));
    match user {
        Some(id) => out.push_str(&format!("caller: user {id} (authenticated)\n")),
        None => out.push_str("caller: anonymous\n"),
    }
    if params.is_empty() {
        out.push_str("params: (none)\n");
    } else {
        let rendered: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push_str(&format!("params: {}\n", rendered.join(", ")));
    }
    for (name, trace) in traces {
        out.push_str(&format!("\nquery \"{name}\"\n"));
        out.push_str(&format!("  fields: {}\n", trace.fields.join(", ")));
        out.push_str(&format!("  requested: {}\n", trace.sql_requested));
        out.push_str(&format!("  pre phase: {}\n", render_phase(&trace.pre)));
        out.push_str(&format!("  executed:  {}\n", trace.sql_executed));
        out.push_str(&format!("  rows fetched: {}\n", trace.rows_fetched));
        out.push_str(&format!("  post phase: {}\n", render_phase(&trace.post)));
        out.push_str(&format!("  rows returned: {}\n", trace.rows_returned));
    }
    out
}

fn render_phase(phase: &fieldgate_core::policy::PhaseTrace) -> String {
    if phase.policies.is_empty() {
        return match phase.selection {
            "default_deny" => "default_deny — no policy matches; query returns nothing".to_string(),
            "unmatched" => "unmatched — no policy matches; results pass through".to_string(),
            other => other.to_string(),
        };
    }
    let listed: Vec<String> = phase
        .policies
        .iter()
        .map(|p| format!("[{}] {}", p.index, p.name))
        .collect();
    format!("{} — {}", phase.selection, listed.join(", "))
}

// --- seed ------------------------------------------------------------------------

fn seed(scenario_name: &str, scale: f64, out: &Path) -> Result<(), Failure> {
    let builder = lookup_builder(scenario_name)?;
    let units = scale_units(scale)?;
    let db = builder
        .seed(units)
        .map_err(|e| check_failure(format!("seeding '{scenario_name}': {e}")))?;
    let file = File::create(out)
        .map_err(|e| io_failure(format!("creating {}: {e}", out.display())))?;
    let mut writer = BufWriter::new(file);
    db.write_snapshot(&mut writer)
        .and_then(|()| writer.flush())
        .map_err(|e| io_failure(format!("writing {}: {e}", out.display())))?;
    let rows: usize = db.catalog().tables().map(|t| db.row_count(&t.name)).sum();
    println!(
        "wrote {} snapshot to {} ({} tables, {} rows)",
        scenario_name,
        out.display(),
        db.catalog().len(),
        rows
    );
    Ok(())
}

// --- serve -----------------------------------------------------------------------

fn serve(
    fixture: &str,
    scale: f64,
    snapshot: Option<&Path>,
    port: u16,
    debug_trace: bool,
    baseline: bool,
) -> Result<(), Failure> {
    let builder = lookup_builder(fixture)?;
    let units = scale_units(scale)?;
    let db = match snapshot {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| io_failure(format!("opening snapshot {}: {e}", path.display())))?;
            Database::load(BufReader::new(file))
                .map_err(|e| io_failure(format!("loading snapshot {}: {e}", path.display())))?
        }
        None => builder
            .seed(units)
            .map_err(|e| check_failure(format!("seeding '{fixture}': {e}")))?,
    };
    let scenario = Arc::new(builder.wire(units, db));
    let state = Arc::new(AppState {
        scenario: scenario.clone(),
        mode: if baseline {
            ServeMode::Baseline
        } else {
            ServeMode::Enforced
        },
        trace: debug_trace,
    });

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| io_failure(format!("starting runtime: {e}")))?;
    runtime.block_on(async move {
        let addr: SocketAddr = ([127, 0, 0, 1], port).into();
        let (local, server) = service::spawn(state, addr)
            .await
            .map_err(|e| io_failure(format!("binding {addr}: {e}")))?;
        let mode = if baseline { "inline-check" } else { "enforced" };
        println!(
            "serving {} ({} endpoints, {} mode{}) on http://{local}",
            scenario.name,
            scenario.endpoints.len(),
            mode,
            if debug_trace { ", debug trace" } else { "" },
        );
        server
            .await
            .map_err(|e| check_failure(format!("server stopped: {e}")))
    })
}

// --- bench -----------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn run_bench(
    scenario_name: &str,
    scale: f64,
    endpoints: Vec<String>,
    trials: usize,
    concurrency: usize,
    requests: usize,
    warmup: usize,
    transport: Transport,
    out: Option<&Path>,
    format: Format,
) -> Result<(), Failure> {
    if trials == 0 || requests == 0 || concurrency == 0 {
        return Err(usage("--trials, --requests, and --concurrency must be at least 1"));
    }
    let scenario = build_scenario(scenario_name, scale)?;
    for name in &endpoints {
        if scenario.endpoint(name).is_none() {
            let known: Vec<String> = scenario
                .endpoints
                .iter()
                .map(|e| e.api().as_str().to_string())
                .collect();
            return Err(usage(format!(
                "unknown endpoint '{name}'; known: {}",
                known.join(", ")
            )));
        }
    }
    let config = BenchConfig {
        endpoints,
        trials,
        concurrency,
        requests,
        warmup,
        transport,
    };
    let report = bench::run(&scenario, &config)
        .map_err(|e| check_failure(format!("bench failed: {e:#}")))?;
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
        Format::Table => print!("{}", report.render_table()),
    }
    if let Some(path) = out {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let text = if is_csv {
            report.render_csv()
        } else {
            format!(
                "{}\n",
                serde_json::to_string_pretty(&report).expect("report serializes")
            )
        };
        write_text(path, &text)?;
    }
    Ok(())
}

// --- equivalence -------------------------------------------------------------------

fn equivalence(
    scenario_name: &str,
    scale: f64,
    users: usize,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let scenario = build_scenario(scenario_name, scale)?;
    let report = run_equivalence(&scenario, users);
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
        Format::Table => print!("{}", report.render_table()),
    }
    if let Some(path) = out {
        write_text(
            path,
            &format!(
                "{}\n",
                serde_json::to_string_pretty(&report).expect("report serializes")
            ),
        )?;
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(check_failure(format!(
            "{} mismatches across {} cases",
            report.mismatch_count, report.cases
        )))
    }
}
