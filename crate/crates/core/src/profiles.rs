//! Predefined test profiles: IMIX stream sets and RFC 2544 procedures.
//!
//! The RFC 2544 drivers only talk to a [`TrialRunner`]; the runner decides
//! whether trials happen in virtual time or on a live channel.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analyzer::{Gap, SampleSummary};
use crate::impair::Blackout;
use crate::model::{
    GenerationConfig, Mode, StreamDescription, MAX_CBR_STREAMS, MAX_FRAME_SIZE, MIN_FRAME_SIZE,
};
use crate::pacing::cbr_period;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImixEntry {
    pub frame_size: u32,
    pub weight: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImixProfile {
    pub entries: Vec<ImixEntry>,
}

impl Default for ImixProfile {
    fn default() -> Self {
        ImixProfile {
            entries: [(64, 7), (594, 4), (1518, 1)]
                .into_iter()
                .map(|(frame_size, weight)| ImixEntry { frame_size, weight })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("IMIX profile has {0} entries, at most 7 CBR streams are possible")]
    TooManyEntries(usize),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("no passing rate found for {frame_size} byte frames")]
    NoPassingRate { frame_size: u32 },
    #[error("no reception gap observed")]
    NoGapObserved,
    #[error("trial failed: {0}")]
    Runner(#[from] RunnerError),
}

/// One CBR stream per entry with `rate_i ∝ weight_i * (size_i + 20)`, so
/// frame counts follow the weights and the L1 rates add up to `total_rate_l1`.
/// Addressing comes from `template`; stream ids are assigned from 1.
pub fn imix_streams(
    profile: &ImixProfile,
    total_rate_l1: f64,
    template: &StreamDescription,
) -> Result<GenerationConfig, ProfileError> {
    let n = profile.entries.len();
    if n > MAX_CBR_STREAMS {
        return Err(ProfileError::TooManyEntries(n));
    }
    if n == 0 {
        return Err(ProfileError::InvalidProfile("no entries".into()));
    }
    if !(total_rate_l1 > 0.0) || !total_rate_l1.is_finite() {
        return Err(ProfileError::InvalidProfile("total rate must be positive".into()));
    }
    for e in &profile.entries {
        if e.weight == 0 {
            return Err(ProfileError::InvalidProfile("weights must be positive".into()));
        }
        if !(MIN_FRAME_SIZE..=MAX_FRAME_SIZE).contains(&e.frame_size) {
            return Err(ProfileError::InvalidProfile(format!(
                "frame size {} out of range",
                e.frame_size
            )));
        }
    }
    let l1 = |e: &ImixEntry| f64::from(e.weight) * f64::from(e.frame_size + 20);
    let norm: f64 = profile.entries.iter().map(l1).sum();
    let streams = profile
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| StreamDescription {
            stream_id: i as u8 + 1,
            mode: Mode::Cbr,
            target_rate_l1: total_rate_l1 * l1(e) / norm,
            frame_size: e.frame_size,
            ..template.clone()
        })
        .collect();
    Ok(GenerationConfig {
        streams,
        port_configs: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rfc2544Config {
    pub frame_sizes: Vec<u32>,
    pub trial_duration_s: f64,
    /// Upper end of the offered L1 rate, bits/s.
    pub max_rate: f64,
    /// Search stops once the bracket is narrower than `resolution * max_rate`.
    pub resolution: f64,
    /// Largest loss fraction a passing trial may show.
    pub loss_tolerance: f64,
    /// Blackout of the reset test, relative to the trial start.
    pub reset_blackout: Blackout,
    pub reset_trial_duration_s: f64,
}

impl Default for Rfc2544Config {
    fn default() -> Self {
        Rfc2544Config {
            frame_sizes: vec![64, 128, 256, 512, 1024, 1280, 1518],
            trial_duration_s: 10.0,
            max_rate: 1e9,
            resolution: 0.01,
            loss_tolerance: 0.0,
            reset_blackout: Blackout {
                start_ns: 1_000_000_000,
                duration_ns: 2_000_000_000,
            },
            reset_trial_duration_s: 5.0,
        }
    }
}

impl Rfc2544Config {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |m: &str| Err(ProfileError::InvalidProfile(m.into()));
        if !(self.resolution > 0.0 && self.resolution < 0.5) {
            return bad("resolution must be in (0, 0.5)");
        }
        if !(self.trial_duration_s > 0.0) || !(self.reset_trial_duration_s > 0.0) {
            return bad("durations must be positive");
        }
        if !(self.max_rate > 0.0) || !self.max_rate.is_finite() {
            return bad("max_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.loss_tolerance) {
            return bad("loss_tolerance must be in [0, 1)");
        }
        if self.frame_sizes.is_empty() {
            return bad("no frame sizes");
        }
        Ok(())
    }

    fn trial_ns(&self) -> u64 {
        libm::round(self.trial_duration_s * 1e9) as u64
    }
}

/// Error reported by a runner, as text.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct RunnerError(pub String);

/// One fixed-rate single-stream run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub stream: StreamDescription,
    pub duration_ns: u64,
    /// Blackout relative to the trial start.
    pub blackout: Option<Blackout>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub tx_frames: u64,
    pub rx_frames: u64,
    /// Finalized loss.
    pub lost: u64,
    pub rtt: SampleSummary,
    pub iat: SampleSummary,
    pub max_gap: Option<Gap>,
}

impl TrialOutcome {
    pub fn loss_fraction(&self) -> f64 {
        if self.tx_frames == 0 {
            0.0
        } else {
            self.lost as f64 / self.tx_frames as f64
        }
    }
}

pub trait TrialRunner {
    fn run_trial(&mut self, trial: &Trial) -> Result<TrialOutcome, RunnerError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialPoint {
    pub offered_rate: f64,
    pub tx_frames: u64,
    pub lost: u64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    pub frame_size: u32,
    /// Highest rate with a passing trial, bits/s L1.
    pub throughput: f64,
    pub trials: Vec<TrialPoint>,
    /// A rate below a passing one failed, also on re-trial.
    pub non_monotonic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub offered_rate: f64,
    pub loss_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub frame_size: u32,
    pub throughput: Option<f64>,
    pub throughput_error: Option<String>,
    pub non_monotonic: bool,
    pub trials: Vec<TrialPoint>,
    pub latency: Option<SampleSummary>,
    pub loss_rate_curve: Vec<LossPoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub sizes: Vec<SizeResult>,
    pub reset_time_s: Option<f64>,
    pub reset_error: Option<String>,
}

fn trial_for(base: &StreamDescription, size: u32, rate: f64, duration_ns: u64) -> Trial {
    Trial {
        stream: StreamDescription {
            frame_size: size,
            target_rate_l1: rate,
            mode: Mode::Cbr,
            ..base.clone()
        },
        duration_ns,
        blackout: None,
    }
}

/// Binary search for the highest rate whose trial loss stays within the
/// tolerance. The first trial runs at `max_rate`.
pub fn rfc2544_throughput<R: TrialRunner + ?Sized>(
    cfg: &Rfc2544Config,
    runner: &mut R,
    base: &StreamDescription,
    frame_size: u32,
) -> Result<ThroughputResult, ProfileError> {
    cfg.validate()?;
    let mut result = ThroughputResult {
        frame_size,
        ..Default::default()
    };
    let mut run = |rate: f64, result: &mut ThroughputResult| -> Result<bool, ProfileError> {
        let out = runner.run_trial(&trial_for(base, frame_size, rate, cfg.trial_ns()))?;
        let passed = out.loss_fraction() <= cfg.loss_tolerance;
        result.trials.push(TrialPoint {
            offered_rate: rate,
            tx_frames: out.tx_frames,
            lost: out.lost,
            passed,
        });
        Ok(passed)
    };

    let width = cfg.resolution * cfg.max_rate;
    let mut best: Option<f64> = None;
    let (mut lo, mut hi) = (0.0, cfg.max_rate);
    if run(cfg.max_rate, &mut result)? {
        best = Some(cfg.max_rate);
        lo = cfg.max_rate;
    }
    while hi - lo > width {
        let mid = (lo + hi) / 2.0;
        let mut passed = run(mid, &mut result)?;
        if !passed && best.is_some_and(|b| mid < b) {
            // cannot happen while lo tracks the best pass, kept as a guard
            // for runners with state
            passed = run(mid, &mut result)?;
            if !passed {
                result.non_monotonic = true;
                break;
            }
        }
        if passed {
            lo = mid;
            best = Some(best.map_or(mid, |b: f64| b.max(mid)));
        } else {
            hi = mid;
        }
    }
    result.throughput = best.ok_or(ProfileError::NoPassingRate { frame_size })?;
    Ok(result)
}

/// RTT summary of one trial at `rate`.
pub fn rfc2544_latency<R: TrialRunner + ?Sized>(
    cfg: &Rfc2544Config,
    runner: &mut R,
    base: &StreamDescription,
    frame_size: u32,
    rate: f64,
) -> Result<SampleSummary, ProfileError> {
    let out = runner.run_trial(&trial_for(base, frame_size, rate, cfg.trial_ns()))?;
    Ok(out.rtt)
}

/// Steps the offered rate down from `max_rate` by 10 % of `max_rate` until
/// two consecutive points are loss-free, for at most 10 points.
pub fn rfc2544_frame_loss<R: TrialRunner + ?Sized>(
    cfg: &Rfc2544Config,
    runner: &mut R,
    base: &StreamDescription,
    frame_size: u32,
) -> Result<Vec<LossPoint>, ProfileError> {
    let mut curve: Vec<LossPoint> = Vec::new();
    for step in 0..10 {
        let rate = cfg.max_rate * (1.0 - 0.1 * f64::from(step));
        let out = runner.run_trial(&trial_for(base, frame_size, rate, cfg.trial_ns()))?;
        curve.push(LossPoint {
            offered_rate: rate,
            loss_fraction: out.loss_fraction(),
        });
        let n = curve.len();
        if n >= 2 && curve[n - 1].loss_fraction == 0.0 && curve[n - 2].loss_fraction == 0.0 {
            break;
        }
    }
    Ok(curve)
}

/// Minimum-size frames at `rate` with the configured blackout; the reset
/// time is the largest reception gap. A largest gap of at most two frame
/// periods counts as no gap.
pub fn rfc2544_reset<R: TrialRunner + ?Sized>(
    cfg: &Rfc2544Config,
    runner: &mut R,
    base: &StreamDescription,
    rate: f64,
    blackout: Option<Blackout>,
) -> Result<f64, ProfileError> {
    let mut trial = trial_for(
        base,
        MIN_FRAME_SIZE,
        rate,
        libm::round(cfg.reset_trial_duration_s * 1e9) as u64,
    );
    trial.blackout = blackout;
    let out = runner.run_trial(&trial)?;
    let period = cbr_period(MIN_FRAME_SIZE, rate).map_err(|_| ProfileError::NoGapObserved)?;
    match out.max_gap {
        Some(g) if g.len_ns() as f64 > 2.0 * period => Ok(g.len_ns() as f64 / 1e9),
        _ => Err(ProfileError::NoGapObserved),
    }
}

/// All four procedures for every configured size.
pub fn run_rfc2544<R: TrialRunner + ?Sized>(
    cfg: &Rfc2544Config,
    runner: &mut R,
    base: &StreamDescription,
) -> Result<ProfileResult, ProfileError> {
    cfg.validate()?;
    let mut result = ProfileResult::default();
    for &size in &cfg.frame_sizes {
        let mut sr = SizeResult {
            frame_size: size,
            ..Default::default()
        };
        match rfc2544_throughput(cfg, runner, base, size) {
            Ok(t) => {
                sr.throughput = Some(t.throughput);
                sr.non_monotonic = t.non_monotonic;
                sr.trials = t.trials;
                sr.latency = Some(rfc2544_latency(cfg, runner, base, size, t.throughput)?);
            }
            Err(ProfileError::NoPassingRate { .. }) => {
                sr.throughput_error = Some(String::from("NoPassingRate"));
            }
            Err(e) => return Err(e),
        }
        sr.loss_rate_curve = rfc2544_frame_loss(cfg, runner, base, size)?;
        result.sizes.push(sr);
    }
    let reset_rate = result
        .sizes
        .iter()
        .filter(|s| s.frame_size == MIN_FRAME_SIZE)
        .find_map(|s| s.throughput)
        .unwrap_or(cfg.max_rate);
    match rfc2544_reset(cfg, runner, base, reset_rate, Some(cfg.reset_blackout)) {
        Ok(t) => result.reset_time_s = Some(t),
        Err(ProfileError::NoGapObserved) => result.reset_error = Some(String::from("NoGapObserved")),
        Err(e) => return Err(e),
    }
    Ok(result)
}
