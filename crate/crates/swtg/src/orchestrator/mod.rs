//! Control plane. All state changes go through one actor thread that owns
//! the lifecycle; statistics and results are read from shared state without
//! going through the actor.

pub mod lifecycle;
mod plan;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use swtg_core::analyzer::StatisticsSnapshot;
use swtg_core::impair::ImpairmentSpec;
use swtg_core::model::{
    EncapsulationStack, EthernetSpec, GenerationConfig, Ipv4Spec, L3Spec, PortConfig, UdpPorts,
};
use swtg_core::profiles::{ImixEntry, ImixProfile, ProfileResult, Rfc2544Config};
use swtg_core::{validate_config, DeviceProfile, MacAddr, Mode, PortId, StreamDescription, ValidatedConfig, ValidationError};

pub use lifecycle::{transition, Conflict, Event, State};

use crate::channel::inject_arp_request;
use crate::engine::GenHandle;
use crate::report::{Report, TestResult, REPORT_VERSION};
use crate::runtime::{LiveRuntime, RuntimeError};
use crate::timeseries::{TimeSeries, TimeSeriesPoint, SAMPLE_INTERVAL_NS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub name: String,
    pub config: GenerationConfig,
    /// Seconds.
    pub duration: f64,
    /// Replaces the channel impairment for this test only (loopback).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impairment: Option<ImpairmentSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestPlan {
    pub tests: Vec<TestSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Pending,
    Running,
    Done,
    Aborted,
    Failed,
}

impl PlanStatus {
    pub fn is_finished(&self) -> bool {
        !matches!(self, PlanStatus::Pending | PlanStatus::Running)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub id: u64,
    pub kind: String,
    pub status: PlanStatus,
    pub current_index: usize,
    pub total: usize,
    pub names: Vec<String>,
    pub results: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ImixParams {
    pub total_rate_l1: f64,
    pub duration: f64,
    pub entries: Option<Vec<ImixEntry>>,
    pub template: Option<StreamDescription>,
}

impl Default for ImixParams {
    fn default() -> Self {
        ImixParams {
            total_rate_l1: 50e6,
            duration: 10.0,
            entries: None,
            template: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Rfc2544Params {
    #[serde(flatten)]
    pub config: Rfc2544Config,
    pub template: Option<StreamDescription>,
}

/// Stream used when a profile request carries no template: port 0,
/// 02:00:00:00:00:01 → 02:00:00:00:00:02, 10.0.0.1 → 10.0.0.2.
pub fn default_stream() -> StreamDescription {
    StreamDescription {
        stream_id: 1,
        mode: Mode::Cbr,
        target_rate_l1: 1e6,
        frame_size: 64,
        eth: EthernetSpec {
            src_mac: MacAddr::new(2, 0, 0, 0, 0, 1),
            dst_mac: MacAddr::new(2, 0, 0, 0, 0, 2),
        },
        l3: L3Spec::Ipv4(Ipv4Spec {
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            src_random_mask: Ipv4Addr::UNSPECIFIED,
            dst_random_mask: Ipv4Addr::UNSPECIFIED,
            tos: 0,
        }),
        encap: EncapsulationStack::default(),
        udp: UdpPorts::default(),
        tx_ports: vec![PortId(0)],
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{err}")]
    Validation { err: ValidationError, path: String },
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Conflict(#[from] Conflict),
    #[error("no configuration has been set")]
    NoConfig,
    #[error("{message}")]
    NotFound { code: &'static str, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::Validation { .. } | ApiError::BadRequest(_) => 400,
            ApiError::Conflict(_) | ApiError::NoConfig => 409,
            ApiError::NotFound { .. } => 404,
            ApiError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Validation { err, .. } => err.code(),
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::Conflict(c) => c.code(),
            ApiError::NoConfig => "NoConfig",
            ApiError::NotFound { code, .. } => code,
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn body(&self) -> Value {
        let mut v = json!({"code": self.code(), "message": self.to_string()});
        if let ApiError::Validation { path, .. } = self {
            v["path"] = json!(path);
        }
        v
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::NotFound {
            code,
            message: message.into(),
        }
    }

    fn validation(err: ValidationError, cfg: &GenerationConfig, prefix: &str) -> Self {
        ApiError::Validation {
            path: format!("{prefix}{}", err.path(cfg)),
            err,
        }
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::UnknownPort(p) => ApiError::not_found("UnknownPort", format!("unknown port {p}")),
            RuntimeError::MissingArpMac(port) => ApiError::Validation {
                err: ValidationError::MissingArpMac { port },
                path: format!("ports[{port}].mac"),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct OrchestratorOptions {
    pub profile: DeviceProfile,
    /// Pause between the tests of a plan.
    pub quiesce: Duration,
    pub retention: usize,
}

impl Default for OrchestratorOptions {
    fn default() -> Self {
        OrchestratorOptions {
            profile: DeviceProfile::Gen2,
            quiesce: Duration::from_millis(500),
            retention: crate::timeseries::DEFAULT_RETENTION,
        }
    }
}

pub(crate) struct Shared {
    pub(crate) runtime: Arc<LiveRuntime>,
    pub(crate) opts: OrchestratorOptions,
    state: RwLock<State>,
    config: RwLock<Option<(ValidatedConfig, String)>>,
    pub(crate) plans: RwLock<BTreeMap<u64, PlanRecord>>,
    pub(crate) timeseries: Mutex<TimeSeries>,
    sampling: AtomicBool,
}

impl Shared {
    /// Fresh analyzer, with the time series re-anchored.
    pub(crate) fn reset_stats(&self) {
        let mut ts = self.timeseries.lock().unwrap();
        self.runtime.reset_analyzer();
        ts.rebaseline();
    }

    pub(crate) fn update_plan(&self, id: u64, f: impl FnOnce(&mut PlanRecord)) {
        if let Some(p) = self.plans.write().unwrap().get_mut(&id) {
            f(p);
        }
    }

    fn set_sampling(&self, on: bool) {
        self.sampling.store(on, Ordering::SeqCst);
    }
}

pub(crate) enum Job {
    Tests(Vec<(TestSpec, ValidatedConfig)>),
    Rfc2544(Rfc2544Config, StreamDescription),
}

type Reply<T> = Sender<Result<T, ApiError>>;

enum Msg {
    Configure(GenerationConfig, Reply<String>),
    Start(Reply<()>),
    Stop(Reply<Value>),
    RunPlan(String, Vec<String>, Job, Reply<u64>),
    PlanFinished(u64, PlanStatus, Option<String>),
    Abort(Reply<()>),
}

#[derive(Clone)]
pub struct Orchestrator {
    tx: Sender<Msg>,
    shared: Arc<Shared>,
}

impl Orchestrator {
    pub fn new(runtime: Arc<LiveRuntime>, opts: OrchestratorOptions) -> Self {
        let shared = Arc::new(Shared {
            runtime,
            timeseries: Mutex::new(TimeSeries::with_capacity(opts.retention)),
            opts,
            state: RwLock::new(State::Idle),
            config: RwLock::new(None),
            plans: RwLock::new(BTreeMap::new()),
            sampling: AtomicBool::new(false),
        });
        let (tx, rx) = mpsc::channel();
        {
            let shared = shared.clone();
            let tx = tx.clone();
            thread::Builder::new()
                .name("orchestrator".into())
                .spawn(move || Actor::new(shared, tx).run(rx))
                .expect("spawn orchestrator");
        }
        {
            let weak = Arc::downgrade(&shared);
            thread::Builder::new()
                .name("sampler".into())
                .spawn(move || sample(weak))
                .expect("spawn sampler");
        }
        Orchestrator { tx, shared }
    }

    fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Msg) -> Result<T, ApiError> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(make(reply))
            .map_err(|_| ApiError::Internal("orchestrator stopped".into()))?;
        rx.recv()
            .map_err(|_| ApiError::Internal("orchestrator stopped".into()))?
    }

    pub fn runtime(&self) -> &Arc<LiveRuntime> {
        &self.shared.runtime
    }

    pub fn profile(&self) -> DeviceProfile {
        self.shared.opts.profile
    }

    pub fn state(&self) -> State {
        *self.shared.state.read().unwrap()
    }

    /// Validates and stores the pending configuration; returns its
    /// normalized JSON.
    pub fn configure(&self, cfg: GenerationConfig) -> Result<String, ApiError> {
        self.call(|r| Msg::Configure(cfg, r))
    }

    pub fn config_json(&self) -> Option<String> {
        self.shared.config.read().unwrap().as_ref().map(|c| c.1.clone())
    }

    pub fn start(&self) -> Result<(), ApiError> {
        self.call(Msg::Start)
    }

    /// Stops the live run; returns the TX summary and final statistics.
    pub fn stop(&self) -> Result<Value, ApiError> {
        self.call(Msg::Stop)
    }

    pub fn run_plan(&self, plan: TestPlan) -> Result<u64, ApiError> {
        let tests = self.validate_plan(plan)?;
        let names = tests.iter().map(|t| t.0.name.clone()).collect();
        self.call(|r| Msg::RunPlan("plan".into(), names, Job::Tests(tests), r))
    }

    pub fn run_imix(&self, p: ImixParams) -> Result<u64, ApiError> {
        let profile = p.entries.map_or_else(ImixProfile::default, |entries| ImixProfile { entries });
        let template = p.template.unwrap_or_else(default_stream);
        let config = swtg_core::profiles::imix_streams(&profile, p.total_rate_l1, &template)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let tests = self.validate_plan(TestPlan {
            tests: vec![TestSpec {
                name: "imix".into(),
                config,
                duration: p.duration,
                impairment: None,
            }],
        })?;
        self.call(|r| Msg::RunPlan("imix".into(), vec!["imix".into()], Job::Tests(tests), r))
    }

    pub fn run_rfc2544(&self, p: Rfc2544Params) -> Result<u64, ApiError> {
        p.config
            .validate()
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let base = p.template.unwrap_or_else(default_stream);
        let names = p.config.frame_sizes.iter().map(|s| format!("{s}")).collect();
        self.call(|r| Msg::RunPlan("rfc2544".into(), names, Job::Rfc2544(p.config, base), r))
    }

    pub fn abort_plan(&self) -> Result<(), ApiError> {
        self.call(Msg::Abort)
    }

    fn validate_plan(&self, plan: TestPlan) -> Result<Vec<(TestSpec, ValidatedConfig)>, ApiError> {
        if plan.tests.is_empty() {
            return Err(ApiError::BadRequest("plan has no tests".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        plan.tests
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                if !(t.duration > 0.0) || !t.duration.is_finite() {
                    return Err(ApiError::BadRequest(format!("tests[{i}].duration must be positive")));
                }
                if t.name.is_empty() || !names.insert(t.name.clone()) {
                    return Err(ApiError::BadRequest(format!("tests[{i}].name must be unique and non-empty")));
                }
                if let Some(spec) = &t.impairment {
                    spec.validate()
                        .map_err(|e| ApiError::BadRequest(format!("tests[{i}].impairment: {e}")))?;
                }
                let v = validate_config(&t.config, self.profile())
                    .map_err(|e| ApiError::validation(e, &t.config, &format!("tests[{i}].config.")))?;
                Ok((t, v))
            })
            .collect()
    }

    pub fn plan(&self, id: u64) -> Option<PlanRecord> {
        self.shared.plans.read().unwrap().get(&id).cloned()
    }

    pub fn plans(&self) -> Vec<PlanRecord> {
        self.shared.plans.read().unwrap().values().cloned().collect()
    }

    /// Blocks until plan `id` finished or `timeout` elapsed.
    pub fn wait_plan(&self, id: u64, timeout: Duration) -> Option<PlanRecord> {
        let end = Instant::now() + timeout;
        loop {
            let p = self.plan(id)?;
            if p.status.is_finished() && self.state() != State::PlanRunning {
                return Some(p);
            }
            if Instant::now() >= end {
                return None;
            }
            thread::sleep(Duration::from_millis(20));
        }
    }

    /// Live statistics, or the final statistics of a named test. Without a
    /// plan id the newest plan containing the name wins.
    pub fn statistics(&self, test: Option<&str>, plan: Option<u64>) -> Result<StatisticsSnapshot, ApiError> {
        match test {
            None | Some("live") => Ok(self.shared.runtime.snapshot()),
            Some(name) => self
                .find_result(name, plan)
                .map(|r| r.statistics)
                .ok_or_else(|| ApiError::not_found("UnknownTest", format!("no result for test {name:?}"))),
        }
    }

    pub fn test_result(&self, name: &str, plan: Option<u64>) -> Option<TestResult> {
        self.find_result(name, plan)
    }

    fn find_result(&self, name: &str, plan: Option<u64>) -> Option<TestResult> {
        let plans = self.shared.plans.read().unwrap();
        plans
            .values()
            .rev()
            .filter(|p| plan.is_none_or(|id| p.id == id))
            .find_map(|p| p.results.iter().find(|r| r.name == name).cloned())
    }

    pub fn timeseries(&self) -> Vec<TimeSeriesPoint> {
        self.shared.timeseries.lock().unwrap().points()
    }

    pub fn report(&self, id: u64) -> Result<Report, ApiError> {
        let p = self
            .plan(id)
            .ok_or_else(|| ApiError::not_found("UnknownPlan", format!("no plan {id}")))?;
        if !p.status.is_finished() {
            return Err(Conflict::PlanRunning.into());
        }
        Ok(Report {
            version: REPORT_VERSION.into(),
            plan_id: id,
            kind: p.kind,
            tests: p.results,
            profile: p.profile,
        })
    }

    pub fn ports(&self) -> Vec<PortConfig> {
        self.shared.runtime.ports()
    }

    pub fn set_arp(&self, port: PortId, enabled: bool, mac: Option<MacAddr>) -> Result<PortConfig, ApiError> {
        Ok(self.shared.runtime.set_arp(port, enabled, mac)?)
    }

    pub fn inject_arp(&self, port: PortId, target_ip: Ipv4Addr, requester_mac: MacAddr, requester_ip: Ipv4Addr) -> Result<(), ApiError> {
        if !self.ports().iter().any(|p| p.port_id == port) {
            return Err(ApiError::not_found("UnknownPort", format!("unknown port {port}")));
        }
        inject_arp_request(self.shared.runtime.channel().as_ref(), port, target_ip, requester_mac, requester_ip);
        Ok(())
    }

    pub fn impairment(&self) -> Option<ImpairmentSpec> {
        self.shared.runtime.channel().impairment()
    }

    pub fn set_impairment(&self, spec: ImpairmentSpec) -> Result<(), ApiError> {
        spec.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
        self.shared
            .runtime
            .channel()
            .set_impairment(spec)
            .map_err(|e| ApiError::BadRequest(e.to_string()))
    }

    pub fn trigger_blackout(&self, duration_ns: u64) -> Result<(), ApiError> {
        self.shared
            .runtime
            .channel()
            .trigger_blackout(duration_ns)
            .map_err(|e| ApiError::BadRequest(e.to_string()))
    }
}

fn sample(shared: Weak<Shared>) {
    let interval = Duration::from_nanos(SAMPLE_INTERVAL_NS);
    let mut next = Instant::now() + interval;
    loop {
        crate::runtime::sleep_until(next);
        next += interval;
        let Some(shared) = shared.upgrade() else {
            return;
        };
        if shared.sampling.load(Ordering::SeqCst) {
            let mut ts = shared.timeseries.lock().unwrap();
            let snap = shared.runtime.snapshot();
            ts.record(&snap);
        }
    }
}

struct Actor {
    shared: Arc<Shared>,
    tx: Sender<Msg>,
    state: State,
    live: Option<GenHandle>,
    abort: Arc<AtomicBool>,
    next_id: u64,
}

impl Actor {
    fn new(shared: Arc<Shared>, tx: Sender<Msg>) -> Self {
        Actor {
            shared,
            tx,
            state: State::Idle,
            live: None,
            abort: Arc::new(AtomicBool::new(false)),
            next_id: 1,
        }
    }

    fn run(mut self, rx: Receiver<Msg>) {
        while let Ok(msg) = rx.recv() {
            match msg {
                Msg::Configure(cfg, r) => {
                    let _ = r.send(self.configure(cfg));
                }
                Msg::Start(r) => {
                    let _ = r.send(self.start());
                }
                Msg::Stop(r) => {
                    let _ = r.send(self.stop());
                }
                Msg::RunPlan(kind, names, job, r) => {
                    let _ = r.send(self.run_plan(kind, names, job));
                }
                Msg::PlanFinished(id, status, error) => {
                    if let Ok(s) = transition(self.state, Event::PlanFinished) {
                        self.shared.set_sampling(false);
                        self.set_state(s);
                    }
                    self.shared.update_plan(id, |p| {
                        p.status = status;
                        p.error = error;
                    });
                }
                Msg::Abort(r) => {
                    let res = transition(self.state, Event::AbortPlan).map(|_| {
                        self.abort.store(true, Ordering::SeqCst);
                    });
                    let _ = r.send(res.map_err(Into::into));
                }
            }
        }
        if let Some(mut h) = self.live.take() {
            let _ = h.stop();
        }
    }

    fn set_state(&mut self, s: State) {
        self.state = s;
        *self.shared.state.write().unwrap() = s;
    }

    fn configure(&mut self, cfg: GenerationConfig) -> Result<String, ApiError> {
        let v = validate_config(&cfg, self.shared.opts.profile).map_err(|e| ApiError::validation(e, &cfg, ""))?;
        let json = serde_json::to_string(&v).map_err(|e| ApiError::Internal(e.to_string()))?;
        *self.shared.config.write().unwrap() = Some((v, json.clone()));
        Ok(json)
    }

    fn start(&mut self) -> Result<(), ApiError> {
        let next = transition(self.state, Event::Start)?;
        let cfg = self
            .shared
            .config
            .read()
            .unwrap()
            .as_ref()
            .map(|c| c.0.clone())
            .ok_or(ApiError::NoConfig)?;
        let rt = &self.shared.runtime;
        rt.apply_port_configs(&cfg)?;
        self.shared.reset_stats();
        let handle = rt.start(&cfg).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.live = Some(handle);
        self.shared.set_sampling(true);
        self.set_state(next);
        Ok(())
    }

    fn stop(&mut self) -> Result<Value, ApiError> {
        let next = transition(self.state, Event::Stop)?;
        let mut handle = self.live.take().ok_or(Conflict::NotRunning)?;
        let rt = self.shared.runtime.clone();
        let tx = rt.stop(&mut handle).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.shared.set_sampling(false);
        self.set_state(next);
        Ok(json!({"tx": tx, "statistics": rt.snapshot()}))
    }

    fn run_plan(&mut self, kind: String, names: Vec<String>, job: Job) -> Result<u64, ApiError> {
        let next = transition(self.state, Event::RunPlan)?;
        let id = self.next_id;
        self.next_id += 1;
        self.shared.plans.write().unwrap().insert(
            id,
            PlanRecord {
                id,
                kind,
                status: PlanStatus::Pending,
                current_index: 0,
                total: names.len(),
                names,
                results: Vec::new(),
                profile: None,
                error: None,
            },
        );
        self.abort = Arc::new(AtomicBool::new(false));
        let exec = plan::Executor {
            shared: self.shared.clone(),
            id,
            abort: self.abort.clone(),
        };
        let tx = self.tx.clone();
        self.set_state(next);
        thread::Builder::new()
            .name(format!("plan-{id}"))
            .spawn(move || {
                let (status, error) = exec.run(job);
                let _ = tx.send(Msg::PlanFinished(id, status, error));
            })
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(id)
    }
}
