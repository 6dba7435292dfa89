//! Monte Carlo estimation of the delivery probability `P(lambda)` and of
//! the probability that a random Byzantine placement is safe.
//!
//! Each trial places Byzantine nodes independently with rate `lambda`,
//! draws a correct source, checks safety, and then asks whether a random
//! correct non-source observer belongs to the reliable node set.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::analyzer::{check_safety_with, reliable_closure, SafetyScan};
use crate::protocol::{Information, Setting};
use crate::simulator::Scenario;
use crate::topology::{make_grid, make_torus, NodeId, Topology, TopologyError};

/// Draws allowed before a sample with fewer than two correct nodes is fatal.
pub const RESAMPLE_BUDGET: u32 = 1000;

pub const CSV_HEADER: [&str; 12] = [
    "topology",
    "N",
    "setting",
    "lambda",
    "trials",
    "p_deliver",
    "ci_low",
    "ci_high",
    "p_safe",
    "safe_ci_low",
    "safe_ci_high",
    "resampled",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("Byzantine rate {0} outside [0, 1)")]
    BadLambda(f64),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("confidence {0} outside (0, 1)")]
    BadConfidence(f64),
    #[error("{successes} successes out of {trials} trials is not a valid count")]
    BadCounts { successes: u64, trials: u64 },
    #[error("gave up after {0} draws with fewer than two correct nodes")]
    ResampleBudget(u32),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {reason}")]
    CsvField { row: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Grid,
    Torus,
}

impl TopologyKind {
    pub fn build(self, n: usize) -> Result<Topology, TopologyError> {
        match self {
            TopologyKind::Grid => make_grid(n),
            TopologyKind::Torus => make_torus(n),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Grid => "grid",
            TopologyKind::Torus => "torus",
        })
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(TopologyKind::Grid),
            "torus" => Ok(TopologyKind::Torus),
            other => Err(format!("unknown topology kind {other:?}")),
        }
    }
}

/// How trials whose placement is unsafe enter `p_deliver`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnsafePolicy {
    /// Unsafe trials are delivery failures.
    #[default]
    CountAsFailure,
    /// Unsafe trials are dropped from the delivery estimate.
    Exclude,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: TopologyKind,
    pub size: usize,
    pub setting: Setting,
    pub lambdas: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    pub confidence: f64,
    pub unsafe_policy: UnsafePolicy,
}

impl ExperimentConfig {
    pub fn new(kind: TopologyKind, size: usize, setting: Setting, lambdas: Vec<f64>, trials: u64, master_seed: u64) -> Self {
        ExperimentConfig {
            kind,
            size,
            setting,
            lambdas,
            trials,
            master_seed,
            confidence: 0.95,
            unsafe_policy: UnsafePolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if let Some(&bad) = self.lambdas.iter().find(|l| !(0.0..1.0).contains(*l)) {
            return Err(ExperimentError::BadLambda(bad));
        }
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(ExperimentError::BadConfidence(self.confidence));
        }
        Ok(())
    }
}

/// One line of sweep output.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub kind: TopologyKind,
    pub size: usize,
    /// Setting label such as `1-3-3`, or `unsecured` for the baseline.
    pub setting: String,
    pub lambda: f64,
    pub trials_used: u64,
    pub p_deliver: f64,
    pub p_deliver_ci: (f64, f64),
    pub p_safe: f64,
    pub p_safe_ci: (f64, f64),
    pub resampled: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
    Unsafe,
}

#[derive(Clone, Debug)]
pub struct SampledScenario {
    pub scenario: Scenario,
    /// Draws discarded for having fewer than two correct nodes.
    pub resamples: u32,
}

/// The value every sampled source broadcasts.
pub fn genuine_information() -> Information {
    Information::new("m")
}

/// SplitMix64 finalizer over the three inputs.
pub fn mix_seed(master: u64, a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(master) ^ a) ^ b.rotate_left(32))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.gen_range(0..items.len() as u64) as usize]
}

/// Each node is Byzantine with probability `lambda`; the source is uniform
/// over correct nodes.
pub fn sample_scenario(
    topology: &Arc<Topology>,
    lambda: f64,
    trial_seed: u64,
) -> Result<SampledScenario, ExperimentError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(ExperimentError::BadLambda(lambda));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    for resamples in 0..RESAMPLE_BUDGET {
        let mut byzantine = Vec::new();
        let mut correct = Vec::new();
        for node in topology.nodes() {
            if rng.gen::<f64>() < lambda {
                byzantine.push(node);
            } else {
                correct.push(node);
            }
        }
        if correct.len() < 2 {
            continue;
        }
        let source = pick(&mut rng, &correct);
        let scenario = Scenario::new(Arc::clone(topology), source, byzantine, genuine_information())
            .expect("sampled nodes are in range and the source is correct");
        return Ok(SampledScenario { scenario, resamples });
    }
    Err(ExperimentError::ResampleBudget(RESAMPLE_BUDGET))
}

/// Unsafe if any correct node is critical; otherwise success iff a uniformly
/// drawn correct non-source observer is in the reliable node set.
pub fn trial(scenario: &Scenario, setting: &Setting, observer_seed: u64) -> Outcome {
    if !check_safety_with(scenario, setting, SafetyScan::FirstViolation).safe {
        return Outcome::Unsafe;
    }
    let candidates: Vec<NodeId> = scenario
        .correct_nodes()
        .filter(|&n| n != scenario.source())
        .collect();
    if candidates.is_empty() {
        return Outcome::Success;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(observer_seed);
    let observer = pick(&mut rng, &candidates);
    if reliable_closure(scenario, setting, Some(observer)).contains(observer) {
        Outcome::Success
    } else {
        Outcome::Failure
    }
}

struct Tally {
    success: u64,
    unsafe_count: u64,
    resampled: u64,
}

/// Runs every trial of every rate. Trials run on the current rayon pool;
/// the result does not depend on how many threads it has.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    config.validate()?;
    let topology = Arc::new(config.kind.build(config.size)?);
    let mut rows = Vec::with_capacity(config.lambdas.len());
    for (li, &lambda) in config.lambdas.iter().enumerate() {
        let outcomes = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let trial_seed = mix_seed(config.master_seed, li as u64, t);
                let sampled = sample_scenario(&topology, lambda, trial_seed)?;
                let outcome = trial(&sampled.scenario, &config.setting, mix_seed(trial_seed, 1, 0));
                Ok((outcome, sampled.resamples))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        let tally = outcomes.iter().fold(
            Tally {
                success: 0,
                unsafe_count: 0,
                resampled: 0,
            },
            |mut acc, &(outcome, resamples)| {
                acc.success += u64::from(outcome == Outcome::Success);
                acc.unsafe_count += u64::from(outcome == Outcome::Unsafe);
                acc.resampled += u64::from(resamples);
                acc
            },
        );
        rows.push(summarize(config, lambda, &tally)?);
    }
    Ok(rows)
}

fn summarize(config: &ExperimentConfig, lambda: f64, tally: &Tally) -> Result<ResultRow, ExperimentError> {
    let safe = config.trials - tally.unsafe_count;
    let trials_used = match config.unsafe_policy {
        UnsafePolicy::CountAsFailure => config.trials,
        UnsafePolicy::Exclude => safe,
    };
    let (p_deliver, p_deliver_ci) = if trials_used == 0 {
        (0.0, (0.0, 1.0))
    } else {
        (
            tally.success as f64 / trials_used as f64,
            wilson_interval(tally.success, trials_used, config.confidence)?,
        )
    };
    Ok(ResultRow {
        kind: config.kind,
        size: config.size,
        setting: config.setting.label(),
        lambda,
        trials_used,
        p_deliver,
        p_deliver_ci,
        p_safe: safe as f64 / config.trials as f64,
        p_safe_ci: wilson_interval(safe, config.trials, config.confidence)?,
        resampled: tally.resampled,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64), ExperimentError> {
    if trials == 0 || successes > trials {
        return Err(ExperimentError::BadCounts { successes, trials });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(ExperimentError::BadConfidence(confidence));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let high = if successes == trials { 1.0 } else { (centre + half).clamp(p, 1.0) };
    Ok((low, high))
}

/// Probability that a flooding broadcast with immediate acceptance is
/// never fooled: no node at all may be Byzantine.
pub fn unsecured_baseline(lambda: f64, node_count: usize) -> f64 {
    (1.0 - lambda).powf(node_count as f64)
}

/// Analytic baseline rows for the config's rates; intervals collapse to
/// the point value and the trial count is 0.
pub fn baseline_rows(config: &ExperimentConfig) -> Vec<ResultRow> {
    let node_count = config.size * config.size;
    config
        .lambdas
        .iter()
        .map(|&lambda| {
            let p = unsecured_baseline(lambda, node_count);
            ResultRow {
                kind: config.kind,
                size: config.size,
                setting: "unsecured".to_owned(),
                lambda,
                trials_used: 0,
                p_deliver: p,
                p_deliver_ci: (p, p),
                p_safe: p,
                p_safe_ci: (p, p),
                resampled: 0,
            }
        })
        .collect()
}

/// `printf("%.6g")`: six significant digits, trailing zeros removed,
/// exponent form below 1e-4 or from 1e6 up.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

pub fn write_csv(rows: &[ResultRow]) -> Result<String, ExperimentError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record([
            row.kind.to_string(),
            row.size.to_string(),
            row.setting.clone(),
            format_sig6(row.lambda),
            row.trials_used.to_string(),
            format_sig6(row.p_deliver),
            format_sig6(row.p_deliver_ci.0),
            format_sig6(row.p_deliver_ci.1),
            format_sig6(row.p_safe),
            format_sig6(row.p_safe_ci.0),
            format_sig6(row.p_safe_ci.1),
            row.resampled.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_csv(text: &str) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ExperimentError::CsvField {
            row: 0,
            reason: "unexpected header".to_owned(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| ExperimentError::CsvField {
            row: i + 1,
            reason: format!("bad {what}"),
        };
        let float = |idx: usize| record[idx].parse::<f64>().map_err(|_| bad(CSV_HEADER[idx]));
        let int = |idx: usize| record[idx].parse::<u64>().map_err(|_| bad(CSV_HEADER[idx]));
        rows.push(ResultRow {
            kind: record[0].parse().map_err(|_| bad("topology"))?,
            size: int(1)? as usize,
            setting: record[2].to_owned(),
            lambda: float(3)?,
            trials_used: int(4)?,
            p_deliver: float(5)?,
            p_deliver_ci: (float(6)?, float(7)?),
            p_safe: float(8)?,
            p_safe_ci: (float(9)?, float(10)?),
            resampled: int(11)?,
        });
    }
    Ok(rows)
}
