use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use swtg_core::profiles::{run_rfc2544, Rfc2544Config, RunnerError, Trial, TrialOutcome, TrialRunner};
use swtg_core::sim::SimRunner;
use swtg_core::{StreamDescription, ValidatedConfig};

use super::{Job, PlanStatus, Shared, TestSpec};
use crate::report::TestResult;
use crate::runtime::{sleep_until, LiveRunner};

const ABORT_POLL: Duration = Duration::from_millis(20);

pub(crate) struct Executor {
    pub(crate) shared: Arc<Shared>,
    pub(crate) id: u64,
    pub(crate) abort: Arc<AtomicBool>,
}

impl Executor {
    pub(crate) fn run(self, job: Job) -> (PlanStatus, Option<String>) {
        self.shared.update_plan(self.id, |p| p.status = PlanStatus::Running);
        self.shared.set_sampling(true);
        let res = match job {
            Job::Tests(tests) => self.run_tests(tests),
            Job::Rfc2544(cfg, base) => self.run_rfc2544(cfg, base),
        };
        match res {
            Ok(true) => (PlanStatus::Done, None),
            Ok(false) => (PlanStatus::Aborted, None),
            Err(e) => (PlanStatus::Failed, Some(e)),
        }
    }

    fn aborted(&self) -> bool {
        self.abort.load(Ordering::SeqCst)
    }

    /// Sleeps until `t`, returning early on abort.
    fn wait(&self, t: Instant) -> bool {
        while Instant::now() < t {
            if self.aborted() {
                return false;
            }
            sleep_until(t.min(Instant::now() + ABORT_POLL));
        }
        true
    }

    fn run_tests(&self, tests: Vec<(TestSpec, ValidatedConfig)>) -> Result<bool, String> {
        let rt = &self.shared.runtime;
        let n = tests.len();
        for (i, (spec, cfg)) in tests.into_iter().enumerate() {
            if self.aborted() {
                return Ok(false);
            }
            self.shared.update_plan(self.id, |p| p.current_index = i);
            let previous = rt.channel().impairment();
            if let Some(imp) = &spec.impairment {
                rt.channel().set_impairment(imp.clone()).map_err(|e| e.to_string())?;
            }
            rt.apply_port_configs(&cfg).map_err(|e| e.to_string())?;
            self.shared.reset_stats();

            let started_at_ms = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64);
            let t_start = rt.clock().now_ns();
            let mut handle = rt.start(&cfg).map_err(|e| e.to_string())?;
            let t0 = Instant::now();
            let completed = self.wait(t0 + Duration::from_secs_f64(spec.duration));
            let tx = rt.stop(&mut handle).map_err(|e| e.to_string())?;
            let statistics = rt.snapshot();
            let t_end = rt.clock().now_ns();

            if let (Some(_), Some(prev)) = (&spec.impairment, previous) {
                rt.channel().set_impairment(prev).map_err(|e| e.to_string())?;
            }
            let time_series = self
                .shared
                .timeseries
                .lock()
                .unwrap()
                .points()
                .into_iter()
                .filter(|p| p.t_ns > t_start && p.t_ns <= t_end)
                .collect();
            let result = TestResult {
                name: spec.name,
                config: cfg.into_inner(),
                impairment: spec.impairment,
                started_at_ms,
                duration_requested_s: spec.duration,
                duration_actual_s: tx.duration_ns as f64 / 1e9,
                statistics,
                tx,
                time_series,
            };
            self.shared.update_plan(self.id, |p| p.results.push(result));
            if !completed {
                return Ok(false);
            }
            if i + 1 < n && !self.wait(Instant::now() + self.shared.opts.quiesce) {
                return Ok(false);
            }
        }
        self.shared.update_plan(self.id, |p| p.current_index = n);
        Ok(true)
    }

    fn run_rfc2544(&self, cfg: Rfc2544Config, base: StreamDescription) -> Result<bool, String> {
        let rt = &self.shared.runtime;
        let sizes = cfg.frame_sizes.clone();
        let inner: Box<dyn TrialRunner> = match rt.channel().impairment() {
            // the virtual DUT runs in virtual time, independent of host load
            Some(spec) => Box::new(SimRunner::new(spec, rt.seed())),
            None => Box::new(LiveRunner {
                runtime: rt.clone(),
                profile: self.shared.opts.profile,
            }),
        };
        let mut runner = Progress {
            inner,
            exec: self,
            sizes,
        };
        let result = run_rfc2544(&cfg, &mut runner, &base).map_err(|e| e.to_string())?;
        let n = cfg.frame_sizes.len();
        self.shared.update_plan(self.id, |p| {
            p.profile = Some(result);
            p.current_index = n;
        });
        Ok(true)
    }
}

/// Reports which frame size is being measured and stops on abort.
struct Progress<'a> {
    inner: Box<dyn TrialRunner + 'a>,
    exec: &'a Executor,
    sizes: Vec<u32>,
}

impl TrialRunner for Progress<'_> {
    fn run_trial(&mut self, trial: &Trial) -> Result<TrialOutcome, RunnerError> {
        if self.exec.aborted() {
            return Err(RunnerError("aborted".into()));
        }
        if let Some(i) = self.sizes.iter().position(|s| *s == trial.stream.frame_size) {
            self.exec.shared.update_plan(self.exec.id, |p| p.current_index = i);
        }
        self.inner.run_trial(trial)
    }
}
