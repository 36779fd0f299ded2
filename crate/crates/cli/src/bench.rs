//! Measures the cost of enforcement against the inline-check twins.
//!
//! Both serving modes replay the identical request sequence against the same
//! in-memory dataset; the report embeds a checksum of that dataset's snapshot
//! so runs can be compared apples to apples. Latency is measured with
//! sequential trials per endpoint, throughput with a fixed-size burst issued
//! by a pool of concurrent workers. The wide scenario additionally sweeps the
//! guard-policy width to show how policy work scales with column count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fieldgate_core::policy::{RequestContext, UserContext};
use fieldgate_core::store::Database;
use fieldgate_demo::endpoint::{wide_endpoint, Endpoint, Params};
use fieldgate_demo::policies;
use fieldgate_demo::scenario::{build_engine, user_context, EngineOptions, Scenario};
use fieldgate_demo::service::{spawn, AppState, ServeMode};

/// How requests reach the endpoints: over a local HTTP server, or by calling
/// the handler functions directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Http,
    InProcess,
}

impl Transport {
    pub fn as_str(self) -> &'static str {
        match self {
            Transport::Http => "http",
            Transport::InProcess => "inproc",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Restrict to these APIs; empty means every endpoint of the scenario.
    pub endpoints: Vec<String>,
    /// Latency measurements per endpoint; each trial times both modes
    /// back to back on the same request.
    pub trials: usize,
    /// Worker count for the throughput phase.
    pub concurrency: usize,
    /// Total requests issued in the throughput phase.
    pub requests: usize,
    /// Unmeasured requests before each latency series.
    pub warmup: usize,
    pub transport: Transport,
}

impl Default for BenchConfig {
    fn default() -> BenchConfig {
        BenchConfig {
            endpoints: Vec::new(),
            trials: 100,
            concurrency: 10,
            requests: 500,
            warmup: 20,
            transport: Transport::Http,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub median_us: f64,
    pub mean_us: f64,
    pub stddev_us: f64,
}

#[derive(Debug, Serialize)]
pub struct EndpointReport {
    pub api: String,
    pub route: String,
    pub enforced: Stats,
    pub baseline: Stats,
    /// (enforced - baseline) / baseline, on median latency.
    pub overhead: f64,
}

#[derive(Debug, Serialize)]
pub struct Throughput {
    pub enforced_rps: f64,
    pub baseline_rps: f64,
    /// (baseline - enforced) / baseline.
    pub degradation: f64,
}

#[derive(Debug, Serialize)]
pub struct WidePoint {
    pub columns: usize,
    /// Median time the engine spends on policy work per request.
    pub policy_us: f64,
    /// Median time the inline twin spends building the same checks.
    pub inline_us: f64,
    pub overhead_us: f64,
}

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub trials: usize,
    pub concurrency: usize,
    pub requests: usize,
    pub warmup: usize,
    pub transport: String,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub scenario: String,
    pub scale: u32,
    pub snapshot_checksum: String,
    pub config: ConfigEcho,
    pub endpoints: Vec<EndpointReport>,
    pub throughput: Throughput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wide_columns: Option<Vec<WidePoint>>,
}

/// Guard widths swept on the wide scenario.
pub const WIDE_SERIES_COLUMNS: &[usize] = &[1, 10, 25, 50, 100];

/// How many distinct callers the request mix rotates through.
const WORKLOAD_USERS: usize = 4;
/// Shuffle seed for the throughput request order (shared by both modes).
const ORDER_SEED: u64 = 0xB0_0B5;

/// One concrete request: an endpoint with bound parameters and a caller.
struct Job {
    endpoint: Arc<dyn Endpoint>,
    params: Params,
    path: String,
    user: Option<i64>,
}

pub fn run(scenario: &Arc<Scenario>, config: &BenchConfig) -> anyhow::Result<BenchReport> {
    if config.trials == 0 || config.requests == 0 || config.concurrency == 0 {
        bail!("trials, requests, and concurrency must all be at least 1");
    }
    let endpoints = select_endpoints(scenario, &config.endpoints)?;
    let per_endpoint: Vec<Vec<Job>> = endpoints
        .iter()
        .map(|ep| endpoint_jobs(scenario, ep))
        .collect();
    if per_endpoint.iter().any(|jobs| jobs.is_empty()) {
        bail!("an endpoint produced no sample requests");
    }

    let checksum = format!("{:016x}", fnv1a64(&scenario.db.snapshot_string()));
    let order = throughput_order(&per_endpoint, config.requests);

    let (latencies, throughput) = match config.transport {
        Transport::Http => http_bench(scenario, &per_endpoint, &order, config)?,
        Transport::InProcess => inproc_bench(scenario, &per_endpoint, &order, config)?,
    };

    let mut reports = Vec::new();
    for (ep, (enforced, baseline)) in endpoints.iter().zip(latencies) {
        let overhead = if baseline.median_us > 0.0 {
            (enforced.median_us - baseline.median_us) / baseline.median_us
        } else {
            0.0
        };
        reports.push(EndpointReport {
            api: ep.api().as_str().to_string(),
            route: ep.route().to_string(),
            enforced,
            baseline,
            overhead,
        });
    }

    let wide_columns = if scenario.db.catalog().table("Wide1").is_some() {
        Some(wide_series(&scenario.db, config.trials)?)
    } else {
        None
    };

    Ok(BenchReport {
        scenario: scenario.name.to_string(),
        scale: scenario.scale,
        snapshot_checksum: checksum,
        config: ConfigEcho {
            trials: config.trials,
            concurrency: config.concurrency,
            requests: config.requests,
            warmup: config.warmup,
            transport: config.transport.as_str().to_string(),
        },
        endpoints: reports,
        throughput,
        wide_columns,
    })
}

fn select_endpoints(
    scenario: &Scenario,
    filter: &[String],
) -> anyhow::Result<Vec<Arc<dyn Endpoint>>> {
    if filter.is_empty() {
        return Ok(scenario.endpoints.clone());
    }
    filter
        .iter()
        .map(|name| {
            scenario
                .endpoint(name)
                .cloned()
                .with_context(|| format!("unknown endpoint '{name}'"))
        })
        .collect()
}

fn endpoint_jobs(scenario: &Scenario, ep: &Arc<dyn Endpoint>) -> Vec<Job> {
    let users = scenario.sample_users(WORKLOAD_USERS);
    let mut jobs = Vec::new();
    for params in ep.sample_params(&scenario.db) {
        for user in &users {
            jobs.push(Job {
                endpoint: ep.clone(),
                params: params.clone(),
                path: fill_route(ep.route(), &params),
                user: *user,
            });
        }
    }
    jobs
}

/// The request order replayed by both throughput runs: endpoints interleaved,
/// then deterministically shuffled.
fn throughput_order(per_endpoint: &[Vec<Job>], requests: usize) -> Vec<(usize, usize)> {
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (e, jobs) in per_endpoint.iter().enumerate() {
        for j in 0..jobs.len() {
            pool.push((e, j));
        }
    }
    let mut order: Vec<(usize, usize)> = (0..requests).map(|i| pool[i % pool.len()]).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(ORDER_SEED));
    order
}

fn fill_route(route: &str, params: &Params) -> String {
    route
        .split('/')
        .map(|seg| {
            let key = seg.strip_prefix('{').and_then(|s| s.strip_suffix('}'));
            match key.and_then(|k| params.get(k)) {
                Some(value) => encode_segment(value),
                None => seg.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn encode_segment(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn stats(mut samples: Vec<f64>) -> Stats {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    };
    let mean = if n == 0 {
        0.0
    } else {
        samples.iter().sum::<f64>() / n as f64
    };
    let variance = if n == 0 {
        0.0
    } else {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64
    };
    Stats {
        median_us: median,
        mean_us: mean,
        stddev_us: variance.sqrt(),
    }
}

// --- HTTP transport ----------------------------------------------------------

type LatencyPairs = Vec<(Stats, Stats)>;

fn http_bench(
    scenario: &Arc<Scenario>,
    per_endpoint: &[Vec<Job>],
    order: &[(usize, usize)],
    config: &BenchConfig,
) -> anyhow::Result<(LatencyPairs, Throughput)> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let enforced = Arc::new(AppState {
            scenario: scenario.clone(),
            mode: ServeMode::Enforced,
            trace: false,
        });
        let baseline = Arc::new(AppState {
            scenario: scenario.clone(),
            mode: ServeMode::Baseline,
            trace: false,
        });
        let unbound = "127.0.0.1:0".parse().expect("literal addr");
        let (enforced_addr, _e) = spawn(enforced, unbound).await?;
        let (baseline_addr, _b) = spawn(baseline, unbound).await?;
        let client = reqwest::Client::builder()
            .no_proxy()
            .tcp_nodelay(true)
            .build()?;
        let enforced_base = format!("http://{enforced_addr}");
        let baseline_base = format!("http://{baseline_addr}");

        let mut latencies = Vec::new();
        for jobs in per_endpoint {
            latencies.push(
                http_latency_pair(&client, &enforced_base, &baseline_base, jobs, config).await?,
            );
        }

        let flat: Arc<Vec<HttpJob>> = Arc::new(
            order
                .iter()
                .map(|&(e, j)| {
                    let job = &per_endpoint[e][j];
                    HttpJob {
                        path: job.path.clone(),
                        user: job.user.map(|u| u.to_string()),
                    }
                })
                .collect(),
        );
        let baseline_rps =
            http_throughput(&client, &baseline_base, flat.clone(), config.concurrency).await?;
        let enforced_rps =
            http_throughput(&client, &enforced_base, flat, config.concurrency).await?;
        let throughput = Throughput {
            enforced_rps,
            baseline_rps,
            degradation: if baseline_rps > 0.0 {
                (baseline_rps - enforced_rps) / baseline_rps
            } else {
                0.0
            },
        };
        Ok((latencies, throughput))
    })
}

struct HttpJob {
    path: String,
    user: Option<String>,
}

async fn http_get(
    client: &reqwest::Client,
    base: &str,
    path: &str,
    user: Option<&str>,
) -> anyhow::Result<()> {
    let mut req = client.get(format!("{base}{path}"));
    if let Some(u) = user {
        req = req.header("x-user-id", u);
    }
    let resp = req.send().await?;
    let status = resp.status();
    let body = resp.bytes().await?;
    if !status.is_success() {
        bail!(
            "GET {path} failed with {status}: {}",
            String::from_utf8_lossy(&body)
        );
    }
    Ok(())
}

/// Each trial times the baseline and the enforced server back to back on the
/// same request, so slow machine phases inflate both series alike instead of
/// whichever mode happened to be measured during them.
async fn http_latency_pair(
    client: &reqwest::Client,
    enforced_base: &str,
    baseline_base: &str,
    jobs: &[Job],
    config: &BenchConfig,
) -> anyhow::Result<(Stats, Stats)> {
    for i in 0..config.warmup {
        let job = &jobs[i % jobs.len()];
        let user = job.user.map(|u| u.to_string());
        http_get(client, baseline_base, &job.path, user.as_deref()).await?;
        http_get(client, enforced_base, &job.path, user.as_deref()).await?;
    }
    let mut enforced = Vec::with_capacity(config.trials);
    let mut baseline = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let job = &jobs[i % jobs.len()];
        let user = job.user.map(|u| u.to_string());
        let started = Instant::now();
        http_get(client, baseline_base, &job.path, user.as_deref()).await?;
        baseline.push(started.elapsed().as_secs_f64() * 1e6);
        let started = Instant::now();
        http_get(client, enforced_base, &job.path, user.as_deref()).await?;
        enforced.push(started.elapsed().as_secs_f64() * 1e6);
    }
    Ok((stats(enforced), stats(baseline)))
}

async fn http_throughput(
    client: &reqwest::Client,
    base: &str,
    jobs: Arc<Vec<HttpJob>>,
    concurrency: usize,
) -> anyhow::Result<f64> {
    let cursor = Arc::new(AtomicUsize::new(0));
    let started = Instant::now();
    let mut workers = Vec::with_capacity(concurrency);
    for _ in 0..concurrency {
        let client = client.clone();
        let base = base.to_string();
        let jobs = jobs.clone();
        let cursor = cursor.clone();
        workers.push(tokio::spawn(async move {
            loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    return anyhow::Ok(());
                }
                let job = &jobs[i];
                http_get(&client, &base, &job.path, job.user.as_deref()).await?;
            }
        }));
    }
    for worker in workers {
        worker.await??;
    }
    let secs = started.elapsed().as_secs_f64();
    Ok(jobs.len() as f64 / secs)
}

// --- in-process transport -----------------------------------------------------

fn inproc_bench(
    scenario: &Arc<Scenario>,
    per_endpoint: &[Vec<Job>],
    order: &[(usize, usize)],
    config: &BenchConfig,
) -> anyhow::Result<(LatencyPairs, Throughput)> {
    let mut latencies = Vec::new();
    for jobs in per_endpoint {
        latencies.push(inproc_latency_pair(scenario, jobs, config)?);
    }
    let baseline_rps = inproc_throughput(scenario, per_endpoint, order, config, ServeMode::Baseline)?;
    let enforced_rps = inproc_throughput(scenario, per_endpoint, order, config, ServeMode::Enforced)?;
    Ok((
        latencies,
        Throughput {
            enforced_rps,
            baseline_rps,
            degradation: if baseline_rps > 0.0 {
                (baseline_rps - enforced_rps) / baseline_rps
            } else {
                0.0
            },
        },
    ))
}

/// The full serving path for one request, minus HTTP: resolve the caller,
/// then answer through the engine or the inline twin.
fn inproc_call(scenario: &Scenario, job: &Job, mode: ServeMode) -> anyhow::Result<()> {
    let user = user_context(&scenario.db, job.user)?;
    match mode {
        ServeMode::Enforced => {
            let ctx = RequestContext::new(user, job.endpoint.api());
            job.endpoint.enforced(&scenario.engine, &ctx, &job.params)?;
        }
        ServeMode::Baseline => {
            job.endpoint.baseline(&scenario.db, &user, &job.params)?;
        }
    }
    Ok(())
}

/// Trial-interleaved like [`http_latency_pair`], for the same reason.
fn inproc_latency_pair(
    scenario: &Scenario,
    jobs: &[Job],
    config: &BenchConfig,
) -> anyhow::Result<(Stats, Stats)> {
    for i in 0..config.warmup {
        inproc_call(scenario, &jobs[i % jobs.len()], ServeMode::Baseline)?;
        inproc_call(scenario, &jobs[i % jobs.len()], ServeMode::Enforced)?;
    }
    let mut enforced = Vec::with_capacity(config.trials);
    let mut baseline = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let job = &jobs[i % jobs.len()];
        let started = Instant::now();
        inproc_call(scenario, job, ServeMode::Baseline)?;
        baseline.push(started.elapsed().as_secs_f64() * 1e6);
        let started = Instant::now();
        inproc_call(scenario, job, ServeMode::Enforced)?;
        enforced.push(started.elapsed().as_secs_f64() * 1e6);
    }
    Ok((stats(enforced), stats(baseline)))
}

fn inproc_throughput(
    scenario: &Arc<Scenario>,
    per_endpoint: &[Vec<Job>],
    order: &[(usize, usize)],
    config: &BenchConfig,
    mode: ServeMode,
) -> anyhow::Result<f64> {
    let cursor = AtomicUsize::new(0);
    let started = Instant::now();
    std::thread::scope(|scope| -> anyhow::Result<()> {
        let mut handles = Vec::with_capacity(config.concurrency);
        for _ in 0..config.concurrency {
            handles.push(scope.spawn(|| -> anyhow::Result<()> {
                loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    if i >= order.len() {
                        return Ok(());
                    }
                    let (e, j) = order[i];
                    inproc_call(scenario, &per_endpoint[e][j], mode)?;
                }
            }));
        }
        for handle in handles {
            handle.join().expect("throughput worker panicked")?;
        }
        Ok(())
    })?;
    let secs = started.elapsed().as_secs_f64();
    Ok(order.len() as f64 / secs)
}

// --- policy-width sweep --------------------------------------------------------

/// For each guard width, compare the engine's per-request policy time with
/// the time the inline twin spends constructing the same condition chain.
/// Store execution is excluded on both sides, so the difference is the cost
/// of enforcement itself.
pub fn wide_series(db: &Arc<Database>, trials: usize) -> anyhow::Result<Vec<WidePoint>> {
    let trials = trials.max(10);
    let mut points = Vec::new();
    for &columns in WIDE_SERIES_COLUMNS {
        let specs = policies::wide_specs(columns);
        let engine = build_engine(db.clone(), &specs, EngineOptions::default());
        let ep = wide_endpoint(columns);
        let (_, query) = ep
            .plan(&Params::new())?
            .pop()
            .context("wide endpoint plans one query")?;
        let ctx = RequestContext::new(UserContext::anonymous(), ep.api());

        for _ in 0..10 {
            engine.enforce_metered(&query, &ctx)?;
        }
        // Interleave the two measurements so drifting machine speed lands on
        // both series equally rather than on whichever ran second.
        let mut policy_ns = Vec::with_capacity(trials);
        let mut inline_ns = Vec::with_capacity(trials);
        for _ in 0..trials {
            let (_, metrics) = engine.enforce_metered(&query, &ctx)?;
            policy_ns.push(metrics.policy_ns() as f64);

            let base = query.clone();
            let started = Instant::now();
            let guarded = std::hint::black_box(base.filter(policies::wide_conditions(columns)));
            inline_ns.push(started.elapsed().as_nanos() as f64);
            drop(guarded);
        }

        let policy_us = stats(policy_ns).median_us / 1e3;
        let inline_us = stats(inline_ns).median_us / 1e3;
        points.push(WidePoint {
            columns,
            policy_us,
            inline_us,
            overhead_us: policy_us - inline_us,
        });
    }
    Ok(points)
}

fn fnv1a64(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x1_0000_0001_b3);
    }
    hash
}

impl BenchReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "bench {} scale {} over {} — snapshot {}\n",
            self.scenario, self.scale, self.config.transport, self.snapshot_checksum
        ));
        out.push_str(&format!(
            "config: {} trials (warmup {}), throughput {} requests @ concurrency {}\n\n",
            self.config.trials, self.config.warmup, self.config.requests, self.config.concurrency
        ));
        out.push_str(&format!(
            "{:<20} {:<26} {:>26} {:>26} {:>9}\n",
            "endpoint", "route", "enforced med/mean±sd µs", "baseline med/mean±sd µs", "overhead"
        ));
        for ep in &self.endpoints {
            out.push_str(&format!(
                "{:<20} {:<26} {:>26} {:>26} {:>8.1}%\n",
                ep.api,
                ep.route,
                format!(
                    "{:.1} / {:.1} ± {:.1}",
                    ep.enforced.median_us, ep.enforced.mean_us, ep.enforced.stddev_us
                ),
                format!(
                    "{:.1} / {:.1} ± {:.1}",
                    ep.baseline.median_us, ep.baseline.mean_us, ep.baseline.stddev_us
                ),
                ep.overhead * 100.0,
            ));
        }
        out.push_str(&format!(
            "\nthroughput: enforced {:.1} req/s vs baseline {:.1} req/s (degradation {:.1}%)\n",
            self.throughput.enforced_rps,
            self.throughput.baseline_rps,
            self.throughput.degradation * 100.0,
        ));
        if let Some(points) = &self.wide_columns {
            out.push_str("\npolicy width sweep (µs of policy work per request):\n");
            out.push_str(&format!(
                "{:>8} {:>10} {:>10} {:>10}\n",
                "columns", "policy", "inline", "overhead"
            ));
            for p in points {
                out.push_str(&format!(
                    "{:>8} {:>10.2} {:>10.2} {:>10.2}\n",
                    p.columns, p.policy_us, p.inline_us, p.overhead_us
                ));
            }
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("api,route,enforced_median_us,enforced_mean_us,enforced_stddev_us,baseline_median_us,baseline_mean_us,baseline_stddev_us,overhead\n");
        for ep in &self.endpoints {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.6}\n",
                ep.api,
                ep.route,
                ep.enforced.median_us,
                ep.enforced.mean_us,
                ep.enforced.stddev_us,
                ep.baseline.median_us,
                ep.baseline.mean_us,
                ep.baseline.stddev_us,
                ep.overhead,
            ));
        }
        out.push_str(&format!(
            "# throughput enforced_rps={:.3} baseline_rps={:.3} degradation={:.6}\n",
            self.throughput.enforced_rps, self.throughput.baseline_rps, self.throughput.degradation
        ));
        if let Some(points) = &self.wide_columns {
            out.push_str("columns,policy_us,inline_us,overhead_us\n");
            for p in points {
                out.push_str(&format!(
                    "{},{:.3},{:.3},{:.3}\n",
                    p.columns, p.policy_us, p.inline_us, p.overhead_us
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_are_filled_and_encoded() {
        let mut params = Params::new();
        params.insert("loc".into(), "Auditorium A".into());
        assert_eq!(
            fill_route("/events/location/{loc}", &params),
            "/events/location/Auditorium%20A"
        );
        assert_eq!(fill_route("/ages", &params), "/ages");
    }

    #[test]
    fn stats_match_hand_computation() {
        let s = stats(vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.median_us, 2.5);
        assert_eq!(s.mean_us, 2.5);
        assert!((s.stddev_us - 1.118033988749895).abs() < 1e-12);
    }

    #[test]
    fn throughput_order_is_deterministic_and_complete() {
        let scenario = fieldgate_demo::scenario::find_builder("intranet-small")
            .unwrap()
            .build(1)
            .unwrap();
        let jobs: Vec<Vec<Job>> = scenario
            .endpoints
            .iter()
            .map(|ep| endpoint_jobs(&scenario, ep))
            .collect();
        let a = throughput_order(&jobs, 100);
        let b = throughput_order(&jobs, 100);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|&(e, j)| j < jobs[e].len()));
    }
}
