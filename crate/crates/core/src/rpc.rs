//! Loopback RPC harness: a minimal HTTP "edge server" plus a client-side
//! plan executor. Method kernels are pure functions of their input bytes, so
//! a method produces identical output wherever it runs; placement only
//! affects cost. Work is emulated by busy-spinning.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path as AxumPath, State};
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use crate::callgraph::{DualPlacementGraph, NodeKind, ObjectiveVector, Placement};
use crate::engine::{ExecutionTrace, RunReport};
use crate::pareto::PathSolution;
use crate::sim::{Workload, MARSHAL_CPU_PER_BYTE};
use crate::{Error, Result};

type Kernel = Arc<dyn Fn(&[u8]) -> Vec<u8> + Send + Sync>;

#[derive(Clone)]
struct MethodImpl {
    kernel: Kernel,
    work_ms: f64,
}

/// Named method implementations shared by the local executor and the server.
#[derive(Clone, Default)]
pub struct MethodRegistry {
    methods: HashMap<String, MethodImpl>,
}

impl MethodRegistry {
    pub fn new() -> Self {
        MethodRegistry::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        work_ms: f64,
        kernel: impl Fn(&[u8]) -> Vec<u8> + Send + Sync + 'static,
    ) {
        self.methods.insert(
            name.into(),
            MethodImpl {
                kernel: Arc::new(kernel),
                work_ms,
            },
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.methods.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.methods.keys().cloned().collect();
        v.sort();
        v
    }

    /// Default kernels for a benchmark analog: each method hash-chains its
    /// input, making the final output a deterministic function of the plan's
    /// method sequence but not of placement.
    pub fn from_workload(w: &Workload, input: f64) -> Self {
        let mut reg = MethodRegistry::new();
        for m in &w.graph.methods {
            let name = m.name.clone();
            let tag = name.clone();
            let work_ms = w.cost(m.id, input).work;
            reg.register(name, work_ms, move |bytes: &[u8]| {
                let mut hasher = Sha256::new();
                hasher.update(tag.as_bytes());
                hasher.update(bytes);
                hasher.finalize().to_vec()
            });
        }
        reg
    }

    fn get(&self, name: &str) -> Option<&MethodImpl> {
        self.methods.get(name)
    }
}

/// Where the "remote" copies run, and how much slower/farther the server is
/// pretending to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteEndpoint {
    pub host: String,
    pub port: u16,
    /// URL path prefix, empty or starting with '/'.
    pub base: String,
    /// Divisor applied to emulated work on the server: >1 means a faster server.
    pub artificial_slowdown: f64,
    /// Extra latency added by the server per call.
    pub artificial_delay_ms: f64,
}

impl Default for RemoteEndpoint {
    fn default() -> Self {
        RemoteEndpoint {
            host: "127.0.0.1".into(),
            port: 0,
            base: String::new(),
            artificial_slowdown: 10.0,
            artificial_delay_ms: 0.0,
        }
    }
}

impl RemoteEndpoint {
    pub fn url_base(&self) -> String {
        format!("http://{}:{}{}", self.host, self.port, self.base)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InvokeRequest {
    method: String,
    /// Base64-encoded argument bytes.
    args: String,
    run_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct InvokeResponse {
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    result: Option<String>,
    server_ms: f64,
}

struct ServerCtx {
    registry: MethodRegistry,
    slowdown: f64,
    delay_ms: f64,
}

fn busy_spin(ms: f64) {
    let deadline = Instant::now() + Duration::from_secs_f64(ms.max(0.0) / 1000.0);
    while Instant::now() < deadline {
        std::hint::spin_loop();
    }
}

async fn invoke_handler(
    State(ctx): State<Arc<ServerCtx>>,
    AxumPath(method): AxumPath<String>,
    Json(req): Json<InvokeRequest>,
) -> Json<InvokeResponse> {
    let started = Instant::now();
    if req.method != method {
        return Json(InvokeResponse {
            status: "error".into(),
            result: None,
            server_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
    }
    let Some(m) = ctx.registry.get(&method) else {
        return Json(InvokeResponse {
            status: "unknown-method".into(),
            result: None,
            server_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
    };
    let Ok(args) = BASE64.decode(req.args.as_bytes()) else {
        return Json(InvokeResponse {
            status: "error".into(),
            result: None,
            server_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
    };
    if ctx.delay_ms > 0.0 {
        tokio::time::sleep(Duration::from_secs_f64(ctx.delay_ms / 1000.0)).await;
    }
    let work_ms = m.work_ms / ctx.slowdown.max(1e-9);
    let kernel = m.kernel.clone();
    let out = tokio::task::spawn_blocking(move || {
        busy_spin(work_ms);
        kernel(&args)
    })
    .await;
    match out {
        Ok(bytes) => Json(InvokeResponse {
            status: "ok".into(),
            result: Some(BASE64.encode(&bytes)),
            server_ms: started.elapsed().as_secs_f64() * 1000.0,
        }),
        Err(e) => Json(InvokeResponse {
            status: "error".into(),
            result: Some(BASE64.encode(e.to_string().as_bytes())),
            server_ms: started.elapsed().as_secs_f64() * 1000.0,
        }),
    }
}

/// A running loopback server. Shuts down gracefully on drop or [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// The endpoint clients should use, with the actual bound port.
    pub fn endpoint(&self, template: &RemoteEndpoint) -> RemoteEndpoint {
        RemoteEndpoint {
            port: self.addr.port(),
            ..template.clone()
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts the invoke server on a background thread. Binding `endpoint.port`
/// 0 picks a free port; read it back from the handle.
pub fn serve(registry: MethodRegistry, endpoint: &RemoteEndpoint) -> Result<ServerHandle> {
    let ctx = Arc::new(ServerCtx {
        registry,
        slowdown: endpoint.artificial_slowdown,
        delay_ms: endpoint.artificial_delay_ms,
    });
    let app = Router::new()
        .route(
            &format!("{}/invoke/{{method}}", endpoint.base),
            post(invoke_handler),
        )
        .with_state(ctx);
    let bind = format!("{}:{}", endpoint.host, endpoint.port);

    let (addr_tx, addr_rx) = std::sync::mpsc::channel::<Result<SocketAddr>>();
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = match tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
        {
            Ok(rt) => rt,
            Err(e) => {
                let _ = addr_tx.send(Err(Error::Rpc(format!("runtime: {e}"))));
                return;
            }
        };
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(&bind).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = addr_tx.send(Err(Error::Rpc(format!("bind {bind}: {e}"))));
                    return;
                }
            };
            let addr = listener.local_addr().expect("bound listener has an address");
            let _ = addr_tx.send(Ok(addr));
            let serve = axum::serve(listener, app).with_graceful_shutdown(async move {
                let _ = shutdown_rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("server error: {e}");
            }
        });
    });
    let addr = addr_rx
        .recv()
        .map_err(|_| Error::Rpc("server thread died before binding".into()))??;
    Ok(ServerHandle {
        addr,
        shutdown: Some(shutdown_tx),
        thread: Some(thread),
    })
}

/// Invokes one method on the server. Returns the result bytes.
pub fn invoke_remote(
    client: &reqwest::blocking::Client,
    endpoint: &RemoteEndpoint,
    method: &str,
    args: &[u8],
    run_id: u64,
) -> Result<Vec<u8>> {
    let url = format!("{}/invoke/{}", endpoint.url_base(), method);
    let req = InvokeRequest {
        method: method.to_string(),
        args: BASE64.encode(args),
        run_id: run_id.to_string(),
    };
    let resp: InvokeResponse = client
        .post(&url)
        .json(&req)
        .send()
        .map_err(|e| Error::Rpc(format!("{url}: {e}")))?
        .json()
        .map_err(|e| Error::Rpc(format!("{url}: bad envelope: {e}")))?;
    match resp.status.as_str() {
        "ok" => {
            let b64 = resp
                .result
                .ok_or_else(|| Error::Rpc(format!("{method}: ok without result")))?;
            BASE64
                .decode(b64.as_bytes())
                .map_err(|e| Error::Rpc(format!("{method}: bad base64: {e}")))
        }
        "unknown-method" => Err(Error::Rpc(format!("unknown method {method}"))),
        other => Err(Error::Rpc(format!("{method}: server status {other}"))),
    }
}

/// The result of executing a plan over the RPC harness.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub trace: ExecutionTrace,
    /// Final chained output of the method sequence.
    pub output: Vec<u8>,
}

/// Executes a placement plan: Local tokens run in-process, Remote tokens go
/// through the server. Output bytes chain through the sequence. On a network
/// failure the remote call falls back to local execution and the trace is
/// flagged degraded.
pub fn run_plan(
    graph: &DualPlacementGraph,
    plan: &PathSolution,
    registry: &MethodRegistry,
    endpoint: &RemoteEndpoint,
    run_id: u64,
) -> Result<PlanOutcome> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| Error::Rpc(format!("client: {e}")))?;

    let mut payload: Vec<u8> = run_id.to_le_bytes().to_vec();
    let mut tokens = Vec::new();
    let mut edge_costs = Vec::new();
    let mut per_method = HashMap::new();
    let mut degraded = false;

    for &n in &plan.nodes {
        let dn = match graph.node(n) {
            NodeKind::Method(dn) => dn,
            NodeKind::Start | NodeKind::End => continue,
        };
        // The dual node label is "name@placement"; the registry keys on name.
        let label = graph.label(n);
        let name = label.split('@').next().unwrap_or(label);
        let m = registry
            .get(name)
            .ok_or_else(|| Error::Rpc(format!("method {name} not registered")))?;
        let started = Instant::now();
        let (out, cpu) = match dn.placement {
            Placement::Local => {
                busy_spin(m.work_ms);
                ((m.kernel)(&payload), m.work_ms)
            }
            Placement::Remote => {
                match invoke_remote(&client, endpoint, name, &payload, run_id) {
                    Ok(out) => {
                        let cpu = MARSHAL_CPU_PER_BYTE * (payload.len() + out.len()) as f64;
                        (out, cpu)
                    }
                    Err(Error::Rpc(msg)) if msg.contains("unknown method") => {
                        return Err(Error::Rpc(msg));
                    }
                    Err(e) => {
                        log::warn!("remote {name} failed ({e}); running locally");
                        degraded = true;
                        busy_spin(m.work_ms);
                        ((m.kernel)(&payload), m.work_ms)
                    }
                }
            }
        };
        let time = started.elapsed().as_secs_f64() * 1000.0;
        let cost = ObjectiveVector::new(time, cpu);
        tokens.push(
            graph
                .token(n)
                .ok_or_else(|| Error::Graph(format!("node {n} has no token")))?,
        );
        edge_costs.push(cost);
        per_method.insert(dn.method, cost);
        payload = out;
    }
    edge_costs.push(ObjectiveVector::ZERO);

    let total = edge_costs.iter().copied().sum();
    Ok(PlanOutcome {
        trace: ExecutionTrace {
            tokens,
            per_method_costs: per_method,
            edge_costs,
            total,
            degraded,
        },
        output: payload,
    })
}

/// Fraction of wall time spent deciding rather than executing.
pub fn measure_overhead(report: &RunReport) -> Result<f64> {
    if report.records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let decide: f64 = report.records.iter().map(|r| r.decision_ms).sum();
    let exec: f64 = report.records.iter().map(|r| r.time_ms).sum();
    let denom = decide + exec;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(decide / denom)
}
