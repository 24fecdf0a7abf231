//! Monte-Carlo certification of fleet power offers.
//!
//! A scenario is treated as a black-box oracle: given an offered power and
//! a trial seed it reports whether a freshly sampled fleet could serve the
//! offer for the whole event. Running `N` independent trials and observing
//! zero failures bounds the true success probability from below; bisecting
//! on the offered power then finds the largest magnitude that still passes
//! the all-success test (or, mirrored, the smallest that always fails).
//!
//! Trials are evaluated in fixed chunks with a serial-prefix rule for
//! early stopping, so results are bit-identical regardless of how many
//! worker threads evaluate a chunk.

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, lane};

/// Number of trials dispatched to the thread pool at a time.
const CHUNK: usize = 64;
/// Absolute tolerance of the credible-interval width bisection.
const WIDTH_TOL: f64 = 1e-6;

/// A repeatable pass/fail experiment at a given offered power.
///
/// Implementations must be deterministic in `(power_kw, trial_seed)`;
/// all randomness comes from the seed.
pub trait TrialOracle {
    /// Whether a fleet sampled from `trial_seed` serves `power_kw` for the
    /// whole event without exhausting its headroom.
    fn supplies(&self, power_kw: f64, trial_seed: u64) -> bool;
}

/// Failure-probability bound `epsilon` at residual risk `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    /// Largest tolerated per-trial failure probability, in (0, 1).
    pub epsilon: f64,
    /// Residual risk that the bound is wrong, in (0, 1).
    pub delta: f64,
}

impl ConfidenceSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
        if !ok(self.epsilon) || !ok(self.delta) {
            return Err(Error::InvalidConfig(format!(
                "epsilon and delta must lie strictly between 0 and 1, got ({}, {})",
                self.epsilon, self.delta
            )));
        }
        Ok(())
    }

    /// Smallest batch size `N` such that an all-success batch certifies
    /// failure probability at most `epsilon` with residual risk `delta`:
    /// the least `N >= 0` with `(1 - epsilon)^(N + 1) <= delta`.
    ///
    /// `N = 0` is legitimate for weak demands: the empty batch certifies
    /// vacuously.
    pub fn required_trials(&self) -> Result<usize> {
        self.validate()?;
        let holds = |n: i64| (1.0 - self.epsilon).powi(n as i32 + 1) <= self.delta;
        // Log-space estimate, then walk to the exact integer boundary to
        // absorb rounding in ln/exp.
        let mut n = ((self.delta.ln() / (1.0 - self.epsilon).ln()).ceil() as i64 - 1).max(0);
        while !holds(n) {
            n += 1;
        }
        while n > 0 && holds(n - 1) {
            n -= 1;
        }
        Ok(n as usize)
    }
}

/// When a trial batch may stop before running every requested trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    /// Run all trials.
    None,
    /// Stop at the first failure (all-success checks).
    OnFailure,
    /// Stop at the first success (all-fail checks).
    OnSuccess,
}

/// Outcome of one batch of trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialBatch {
    pub successes: usize,
    /// Trials actually evaluated (serial-prefix count under early stop).
    pub trials_run: usize,
    pub requested: usize,
    pub early_stopped: bool,
}

impl TrialBatch {
    /// Every requested trial ran and succeeded (vacuously true if none
    /// were requested).
    pub fn all_success(&self) -> bool {
        !self.early_stopped && self.trials_run == self.requested && self.successes == self.requested
    }

    /// Every requested trial ran and failed (vacuously true if none were
    /// requested).
    pub fn all_fail(&self) -> bool {
        !self.early_stopped && self.trials_run == self.requested && self.successes == 0
    }
}

/// Runs up to `requested` trials of `oracle` at `power_kw`.
///
/// Trial `j` uses seed `derive_seed(batch_seed, lane::TRIAL, j)`. Chunks
/// of [`CHUNK`] trials are evaluated in parallel, but early stopping
/// honors serial order: the batch reports the trials up to and including
/// the first stopping trial, exactly as a sequential loop would.
pub fn run_trials<O: TrialOracle + Sync>(
    oracle: &O,
    power_kw: f64,
    batch_seed: u64,
    requested: usize,
    early_stop: EarlyStop,
) -> TrialBatch {
    let mut successes = 0usize;
    let mut trials_run = 0usize;
    let mut start = 0usize;
    while start < requested {
        let end = usize::min(start + CHUNK, requested);
        let outcomes: Vec<bool> = (start..end)
            .into_par_iter()
            .map(|j| oracle.supplies(power_kw, derive_seed(batch_seed, lane::TRIAL, j as u64)))
            .collect();
        let stop_at = match early_stop {
            EarlyStop::None => None,
            EarlyStop::OnFailure => outcomes.iter().position(|&ok| !ok),
            EarlyStop::OnSuccess => outcomes.iter().position(|&ok| ok),
        };
        match stop_at {
            Some(pos) => {
                // Outcomes before `pos` are all non-stopping by construction.
                successes += outcomes[..=pos].iter().filter(|&&ok| ok).count();
                return TrialBatch {
                    successes,
                    trials_run: start + pos + 1,
                    requested,
                    early_stopped: true,
                };
            }
            None => {
                successes += outcomes.iter().filter(|&&ok| ok).count();
                trials_run = end;
            }
        }
        start = end;
    }
    TrialBatch {
        successes,
        trials_run,
        requested,
        early_stopped: false,
    }
}

/// Maximum-a-posteriori success probability `successes / trials`.
///
/// Only defined for complete batches: an early-stopped count is biased.
pub fn posterior_map(batch: &TrialBatch) -> Result<f64> {
    if batch.early_stopped {
        return Err(Error::InvalidInput(
            "success-rate estimate requires a complete batch, not an early-stopped one".into(),
        ));
    }
    if batch.trials_run == 0 {
        return Err(Error::InvalidInput(
            "success-rate estimate requires at least one trial".into(),
        ));
    }
    Ok(batch.successes as f64 / batch.trials_run as f64)
}

fn posterior(successes: usize, trials: usize) -> Result<Beta> {
    Beta::new(successes as f64 + 1.0, (trials - successes) as f64 + 1.0)
        .map_err(|e| Error::InvalidInput(format!("posterior shape parameters invalid: {e}")))
}

/// Smallest symmetric credible interval around `successes / trials` with
/// posterior mass at least `1 - delta`, under a uniform prior.
///
/// The half-width is bisected to within `1e-6`; endpoints are clamped to
/// `[0, 1]`. Returns `(lower, upper)`.
pub fn credible_interval(successes: usize, trials: usize, delta: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidInput(
            "credible interval requires at least one trial".into(),
        ));
    }
    if successes > trials {
        return Err(Error::InvalidInput(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "delta must lie strictly between 0 and 1, got {delta}"
        )));
    }
    let p_hat = successes as f64 / trials as f64;
    let dist = posterior(successes, trials)?;
    let coverage = |w: f64| {
        dist.cdf(f64::min(p_hat + w, 1.0)) - dist.cdf(f64::max(p_hat - w, 0.0))
    };
    let target = 1.0 - delta;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > WIDTH_TOL {
        let mid = 0.5 * (lo + hi);
        if coverage(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((f64::max(p_hat - hi, 0.0), f64::min(p_hat + hi, 1.0)))
}

/// Closed-form lower credible bound when all `trials` succeeded:
/// `delta^(1 / (trials + 1))`.
pub fn all_success_lower_bound(trials: usize, delta: f64) -> f64 {
    delta.powf(1.0 / (trials as f64 + 1.0))
}

/// Closed-form upper credible bound when all `trials` failed.
pub fn all_fail_upper_bound(trials: usize, delta: f64) -> f64 {
    1.0 - all_success_lower_bound(trials, delta)
}

/// What the bisection certifies about the returned power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Certify the largest-magnitude power whose batches are all-success;
    /// the anchor `a_kw = 0` must itself pass.
    GuaranteedSupply,
    /// Certify the smallest-magnitude power whose batches are all-fail;
    /// the far endpoint `b_kw` must itself fail every trial.
    GuaranteedFailure,
}

/// Bracket and stopping width of a certified-power search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    /// Near endpoint; must be 0 kW so the anchor check is meaningful.
    pub a_kw: f64,
    /// Far endpoint, kW; sign selects the search direction.
    pub b_kw: f64,
    /// Stop once the bracket is narrower than this, kW.
    pub gamma_kw: f64,
    pub mode: SearchMode,
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_kw != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "search bracket must be anchored at 0 kW, got {}",
                self.a_kw
            )));
        }
        if !self.b_kw.is_finite() || self.b_kw == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "far endpoint must be a finite non-zero power, got {}",
                self.b_kw
            )));
        }
        if !(self.gamma_kw.is_finite() && self.gamma_kw > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "resolution gamma_kw must be positive, got {}",
                self.gamma_kw
            )));
        }
        Ok(())
    }
}

/// One bisection step, recorded before the bracket update.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub a_kw: f64,
    pub b_kw: f64,
    pub x_kw: f64,
    pub successes: usize,
    pub trials: usize,
}

/// Outcome of a certified-power search.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// The certified power, kW: last all-success point in
    /// [`SearchMode::GuaranteedSupply`], last all-fail point in
    /// [`SearchMode::GuaranteedFailure`].
    pub power_kw: f64,
    /// Midpoint of the final bracket, for reporting.
    pub final_midpoint_kw: f64,
    pub iterations: usize,
    /// Trials evaluated over the whole search, endpoint check included.
    pub trials_total: usize,
    /// Trials requested per batch.
    pub trials_per_batch: usize,
    pub mode: SearchMode,
    pub confidence: ConfidenceSpec,
    pub log: Vec<IterationRecord>,
}

/// Bisects offered power over `[a_kw, b_kw]` keeping one bracket end
/// certified, and returns that end once the bracket is narrower than
/// `gamma_kw`.
///
/// The certified end is first verified directly (batch at `a_kw` must be
/// all-success in supply mode; batch at `b_kw` all-fail in failure mode);
/// a failed verification aborts with [`Error::DegenerateScenario`].
/// Iteration `i` draws its batch seed from `lane::ITERATION` index `i`,
/// the verification batch from `lane::ENDPOINT`, so the whole search is a
/// pure function of `master_seed`.
pub fn search_certified_power<O: TrialOracle + Sync>(
    oracle: &O,
    confidence: &ConfidenceSpec,
    bisection: &BisectionConfig,
    master_seed: u64,
) -> Result<PredictionResult> {
    bisection.validate()?;
    let per_batch = confidence.required_trials()?;

    let endpoint_seed = derive_seed(master_seed, lane::ENDPOINT, 0);
    let mut trials_total;
    match bisection.mode {
        SearchMode::GuaranteedSupply => {
            let anchor = run_trials(
                oracle,
                bisection.a_kw,
                endpoint_seed,
                per_batch,
                EarlyStop::OnFailure,
            );
            trials_total = anchor.trials_run;
            if !anchor.all_success() {
                return Err(Error::DegenerateScenario(format!(
                    "zero-power anchor failed its certification batch \
                     ({} of {} trials succeeded)",
                    anchor.successes, anchor.trials_run
                )));
            }
        }
        SearchMode::GuaranteedFailure => {
            let far = run_trials(
                oracle,
                bisection.b_kw,
                endpoint_seed,
                per_batch,
                EarlyStop::OnSuccess,
            );
            trials_total = far.trials_run;
            if !far.all_fail() {
                return Err(Error::DegenerateScenario(format!(
                    "far endpoint {} kW still succeeds within {} trials; \
                     widen the bracket",
                    bisection.b_kw, far.trials_run
                )));
            }
        }
    }

    let mut a = bisection.a_kw;
    let mut b = bisection.b_kw;
    let mut log = Vec::new();
    let mut iteration = 0usize;
    while (a - b).abs() >= bisection.gamma_kw {
        let x = 0.5 * (a + b);
        let batch_seed = derive_seed(master_seed, lane::ITERATION, iteration as u64);
        let early = match bisection.mode {
            SearchMode::GuaranteedSupply => EarlyStop::OnFailure,
            SearchMode::GuaranteedFailure => EarlyStop::OnSuccess,
        };
        let batch = run_trials(oracle, x, batch_seed, per_batch, early);
        trials_total += batch.trials_run;
        log.push(IterationRecord {
            iteration,
            a_kw: a,
            b_kw: b,
            x_kw: x,
            successes: batch.successes,
            trials: batch.trials_run,
        });
        match bisection.mode {
            SearchMode::GuaranteedSupply => {
                if batch.all_success() {
                    a = x;
                } else {
                    b = x;
                }
            }
            SearchMode::GuaranteedFailure => {
                if batch.all_fail() {
                    b = x;
                } else {
                    a = x;
                }
            }
        }
        iteration += 1;
    }

    let power_kw = match bisection.mode {
        SearchMode::GuaranteedSupply => a,
        SearchMode::GuaranteedFailure => b,
    };
    Ok(PredictionResult {
        power_kw,
        final_midpoint_kw: 0.5 * (a + b),
        iterations: iteration,
        trials_total,
        trials_per_batch: per_batch,
        mode: bisection.mode,
        confidence: *confidence,
        log,
    })
}

/// One sampled point of a success-probability curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CurvePoint {
    pub power_kw: f64,
    pub successes: usize,
    pub trials: usize,
    /// Maximum-a-posteriori success probability.
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Estimates the success probability at each offered power with a full
/// trial batch and a `1 - delta` credible interval per point.
///
/// Point `j` draws its batch seed from `lane::CURVE_POINT` index `j`.
pub fn probability_curve<O: TrialOracle + Sync>(
    oracle: &O,
    powers_kw: &[f64],
    confidence: &ConfidenceSpec,
    master_seed: u64,
) -> Result<Vec<CurvePoint>> {
    if powers_kw.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "a probability curve needs at least two points, got {}",
            powers_kw.len()
        )));
    }
    let per_batch = confidence.required_trials()?;
    if per_batch == 0 {
        return Err(Error::InvalidConfig(
            "confidence spec demands zero trials; probability estimates need at least one".into(),
        ));
    }
    let mut points = Vec::with_capacity(powers_kw.len());
    for (j, &power_kw) in powers_kw.iter().enumerate() {
        let batch_seed = derive_seed(master_seed, lane::CURVE_POINT, j as u64);
        let batch = run_trials(oracle, power_kw, batch_seed, per_batch, EarlyStop::None);
        let p_hat = posterior_map(&batch)?;
        let (lower, upper) = credible_interval(batch.successes, batch.trials_run, confidence.delta)?;
        points.push(CurvePoint {
            power_kw,
            successes: batch.successes,
            trials: batch.trials_run,
            p_hat,
            lower,
            upper,
        });
    }
    Ok(points)
}
