//! The orchestrator follows the pure lifecycle machine for any op sequence.

use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use swtg::channel::{Channel, LoopbackChannel};
use swtg::clock::{Clock, MonotonicClock};
use swtg::orchestrator::lifecycle::{transition, Event, State};
use swtg::orchestrator::{default_stream, Orchestrator, OrchestratorOptions, PlanStatus, TestPlan, TestSpec};
use swtg::runtime::LiveRuntime;
use swtg_core::impair::ImpairmentSpec;
use swtg_core::model::GenerationConfig;
use swtg_core::PortId;

#[derive(Clone, Copy, Debug)]
enum Op {
    Start,
    Stop,
    RunPlan,
    Abort,
    AbortAndWait,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Start),
        Just(Op::Stop),
        Just(Op::RunPlan),
        Just(Op::Abort),
        Just(Op::AbortAndWait),
    ]
}

fn config() -> GenerationConfig {
    GenerationConfig {
        streams: vec![default_stream()],
        port_configs: Vec::new(),
    }
}

fn orchestrator() -> Orchestrator {
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let ch: Arc<dyn Channel> = Arc::new(LoopbackChannel::open(ImpairmentSpec::default(), 0, clock.clone()).unwrap());
    let o = Orchestrator::new(
        LiveRuntime::new(ch, clock, &[PortId(0)], 0),
        OrchestratorOptions {
            quiesce: Duration::ZERO,
            ..Default::default()
        },
    );
    o.configure(config()).unwrap();
    o
}

fn code<T>(r: &Result<T, swtg::orchestrator::ApiError>) -> Option<&'static str> {
    r.as_ref().err().map(|e| e.code())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn orchestrator_matches_pure_machine(ops in prop::collection::vec(op(), 1..10)) {
        let o = orchestrator();
        let mut model = State::Idle;
        let mut plan = None;
        for op in ops {
            let event = match op {
                Op::Start => Event::Start,
                Op::Stop => Event::Stop,
                Op::RunPlan => Event::RunPlan,
                Op::Abort | Op::AbortAndWait => Event::AbortPlan,
            };
            let expected = transition(model, event);
            let got = match op {
                Op::Start => code(&o.start()),
                Op::Stop => code(&o.stop()),
                Op::RunPlan => {
                    let r = o.run_plan(TestPlan {
                        tests: vec![TestSpec { name: "t".into(), config: config(), duration: 60.0, impairment: None }],
                    });
                    if let Ok(id) = r {
                        plan = Some(id);
                    }
                    code(&r)
                }
                Op::Abort | Op::AbortAndWait => code(&o.abort_plan()),
            };
            prop_assert_eq!(got, expected.err().map(|c| c.code()), "{:?}", op);
            if let Ok(next) = expected {
                model = next;
            }
            if matches!(op, Op::AbortAndWait) && model == State::PlanRunning {
                let rec = o.wait_plan(plan.unwrap(), Duration::from_secs(5)).unwrap();
                prop_assert_eq!(rec.status, PlanStatus::Aborted);
                model = transition(model, Event::PlanFinished).unwrap();
            }
            prop_assert_eq!(o.state(), model);
        }
        if model == State::PlanRunning {
            o.abort_plan().unwrap();
            o.wait_plan(plan.unwrap(), Duration::from_secs(5)).unwrap();
        } else if model == State::Running {
            o.stop().unwrap();
        }
    }
}
