//! Seeded episodes, repetition batches and regret statistics.
//!
//! Regret is pseudo-regret: the gap between the optimal expected reward and
//! the expected reward of the chosen action. Sampled rewards are logged too,
//! for running-average reward curves.

use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::catalog::{display_name, ItemId, KeyTermId};
use crate::environments::{Action, Environment};
use crate::error::{Error, Result};
use crate::policies::{Policy, PolicySnapshot, PolicySpec};

/// One logged round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// 1-based round index.
    pub round: u64,
    pub action: Action,
    pub reward: f64,
    pub expected: f64,
    pub regret_inc: f64,
    pub cum_regret: f64,
    /// The switching condition was evaluated and held.
    pub switching: bool,
    pub pending: bool,
    /// Not written to CSV.
    pub leading_keyterm: Option<KeyTermId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.rows.iter().map(|r| r.action)
    }

    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }
}

/// Per-episode totals kept by batches instead of full traces.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub final_regret: f64,
    pub total_reward: f64,
    pub switch_point: Option<u64>,
    pub item_pulls: Vec<u64>,
    pub keyterm_pulls: Vec<u64>,
}

/// Tracks the round of the most recent key-term action.
#[derive(Debug, Clone, Copy, Default)]
pub struct SwitchTracker {
    last_keyterm: u64,
    last_round: u64,
}

impl SwitchTracker {
    pub fn observe(&mut self, round: u64, action: Action) {
        if action.is_keyterm() {
            self.last_keyterm = round;
        }
        self.last_round = round;
    }

    /// See [`detect_switch_point`].
    pub fn switch_point(&self) -> Option<u64> {
        if self.last_round > 0 && self.last_keyterm == self.last_round {
            None
        } else {
            Some(self.last_keyterm)
        }
    }
}

/// The round after which no key-term is ever asked again: the round of the
/// last key-term action, 0 if there was none, and `None` if the trace ends
/// with a key-term.
pub fn detect_switch_point(trace: &EpisodeTrace) -> Option<u64> {
    let mut tracker = SwitchTracker::default();
    for row in &trace.rows {
        tracker.observe(row.round, row.action);
    }
    tracker.switch_point()
}

fn check_compatible<P: Policy + ?Sized>(env: &dyn Environment, policy: &P) -> Result<()> {
    match policy.catalog() {
        Some(c) if c != env.catalog() => Err(Error::input(format!(
            "policy {} was built for {} items and {} key-terms but the environment has {} and {}",
            policy.name(),
            c.num_items(),
            c.num_keyterms(),
            env.catalog().num_items(),
            env.catalog().num_keyterms()
        ))),
        _ => Ok(()),
    }
}

/// Plays `horizon` rounds of select, step, update, calling `observe` after
/// each update with the logged row and the updated policy.
pub fn run_episode_with<P>(
    env: &mut dyn Environment,
    policy: &mut P,
    horizon: u64,
    mut observe: impl FnMut(&TraceRow, &P),
) -> Result<EpisodeSummary>
where
    P: Policy + ?Sized,
{
    if horizon == 0 {
        return Err(Error::input("horizon must be at least 1"));
    }
    check_compatible(env, policy)?;
    let (optimal, _) = env.optimal();
    let mut summary = EpisodeSummary {
        final_regret: 0.0,
        total_reward: 0.0,
        switch_point: None,
        item_pulls: vec![0; env.catalog().num_items()],
        keyterm_pulls: vec![0; env.catalog().num_keyterms()],
    };
    let mut switch = SwitchTracker::default();
    let mut cum_regret = CompensatedSum::default();
    for round in 1..=horizon {
        let action = policy.select(env.contexts())?;
        let snapshot: PolicySnapshot = policy.snapshot();
        let expected = env.expected_reward(action)?;
        let reward = env.step(action, round)?;
        policy.update(action, env.contexts(), reward)?;

        let regret_inc = optimal - expected;
        cum_regret.add(regret_inc);
        summary.total_reward += reward;
        match action {
            Action::Item(a) => summary.item_pulls[a.index()] += 1,
            Action::KeyTerm(k) => summary.keyterm_pulls[k.index()] += 1,
        }
        switch.observe(round, action);
        let row = TraceRow {
            round,
            action,
            reward,
            expected,
            regret_inc,
            cum_regret: cum_regret.value(),
            switching: snapshot.switching == Some(true),
            pending: snapshot.pending,
            leading_keyterm: snapshot.leading_keyterm,
        };
        observe(&row, policy);
    }
    summary.final_regret = cum_regret.value();
    summary.switch_point = switch.switch_point();
    Ok(summary)
}

/// Neumaier summation; plain accumulation drifts past 1e-9 over ~50k rounds.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Runs one episode and keeps the full trace.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    horizon: u64,
) -> Result<EpisodeTrace> {
    let mut rows = Vec::with_capacity(horizon as usize);
    run_episode_with(env, policy, horizon, |row, _| rows.push(*row))?;
    Ok(EpisodeTrace { rows })
}

/// Normal critical value `z` with `P(|Z| ≤ z) = level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::input(format!("confidence level {level} not in (0, 1)")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Sample mean and `z·s/√n` with the `n − 1` sample standard deviation; the
/// half-width is 0 for a single sample.
pub fn mean_and_half_width(samples: &[f64], z: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::input("confidence interval of an empty sample"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, z * var.sqrt() / n.sqrt()))
}

/// Normal-approximation interval `mean ± z·s/√n`.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let (mean, half) = mean_and_half_width(samples, normal_critical_value(level)?)?;
    Ok((mean - half, mean + half))
}

/// Builds the environments of one repetition from its seed. Dataset
/// experiments return one environment per user.
pub type EnvBuilder<'a> = dyn Fn(u64) -> Result<Vec<Box<dyn Environment>>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub policy: String,
    pub horizon: u64,
    pub level: f64,
    /// Seed of each repetition, in repetition order.
    pub seeds: Vec<u64>,
    pub mean_cum_regret: Vec<f64>,
    pub ci_half_width: Vec<f64>,
    pub mean_avg_reward: Vec<f64>,
    /// Final cumulative regret of each repetition (averaged over its
    /// environments).
    pub final_regrets: Vec<f64>,
    /// Per-repetition, per-environment summaries.
    pub episodes: Vec<Vec<EpisodeSummary>>,
}

impl BatchResult {
    pub fn repetitions(&self) -> usize {
        self.seeds.len()
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean_cum_regret.last().expect("horizon >= 1")
    }

    pub fn final_half_width(&self) -> f64 {
        *self.ci_half_width.last().expect("horizon >= 1")
    }

    /// Rows for the batch CSV.
    pub fn rows(&self) -> Vec<BatchRow> {
        (0..self.mean_cum_regret.len())
            .map(|i| {
                let (m, h) = (self.mean_cum_regret[i], self.ci_half_width[i]);
                BatchRow {
                    round: i as u64 + 1,
                    mean_cum_regret: m,
                    ci_low: m - h,
                    ci_high: m + h,
                    mean_avg_reward: self.mean_avg_reward[i],
                }
            })
            .collect()
    }
}

struct Repetition {
    regret: Vec<f64>,
    avg_reward: Vec<f64>,
    episodes: Vec<EpisodeSummary>,
}

fn run_repetition(
    builder: &EnvBuilder<'_>,
    spec: &PolicySpec,
    horizon: u64,
    seed: u64,
) -> Result<Repetition> {
    let envs = builder(seed)?;
    if envs.is_empty() {
        return Err(Error::input("environment builder returned no environments"));
    }
    let len = horizon as usize;
    let mut regret = vec![0.0; len];
    let mut avg_reward = vec![0.0; len];
    let mut episodes = Vec::with_capacity(envs.len());
    for mut env in envs {
        let mut policy = spec.build(env.as_ref())?;
        let mut total = 0.0;
        let summary = run_episode_with(env.as_mut(), policy.as_mut(), horizon, |row, _| {
            let i = row.round as usize - 1;
            total += row.reward;
            regret[i] += row.cum_regret;
            avg_reward[i] += total / row.round as f64;
        })?;
        episodes.push(summary);
    }
    let n = episodes.len() as f64;
    if episodes.len() > 1 {
        regret.iter_mut().chain(avg_reward.iter_mut()).for_each(|v| *v /= n);
    }
    Ok(Repetition {
        regret,
        avg_reward,
        episodes,
    })
}

/// Runs `repetitions` independent repetitions; repetition `i` builds its
/// environments from seed `base_seed + i`. Repetitions run in parallel and
/// are merged in order, so the result does not depend on scheduling.
pub fn run_batch(
    builder: &EnvBuilder<'_>,
    spec: &PolicySpec,
    horizon: u64,
    repetitions: usize,
    base_seed: u64,
    level: f64,
) -> Result<BatchResult> {
    if repetitions == 0 {
        return Err(Error::input("repetitions must be at least 1"));
    }
    if horizon == 0 {
        return Err(Error::input("horizon must be at least 1"));
    }
    let z = normal_critical_value(level)?;
    let seeds: Vec<u64> = (0..repetitions as u64)
        .map(|i| base_seed.wrapping_add(i))
        .collect();
    let reps: Vec<Repetition> = seeds
        .par_iter()
        .map(|&seed| run_repetition(builder, spec, horizon, seed))
        .collect::<Result<_>>()?;

    let len = horizon as usize;
    let mut mean_cum_regret = Vec::with_capacity(len);
    let mut ci_half_width = Vec::with_capacity(len);
    let mut mean_avg_reward = Vec::with_capacity(len);
    let mut column = vec![0.0; reps.len()];
    for t in 0..len {
        for (c, r) in column.iter_mut().zip(&reps) {
            *c = r.regret[t];
        }
        let (m, h) = mean_and_half_width(&column, z)?;
        mean_cum_regret.push(m);
        ci_half_width.push(h);
        mean_avg_reward.push(reps.iter().map(|r| r.avg_reward[t]).sum::<f64>() / reps.len() as f64);
    }
    Ok(BatchResult {
        policy: spec.kind.as_str().to_string(),
        horizon,
        level,
        seeds,
        final_regrets: reps.iter().map(|r| r.regret[len - 1]).collect(),
        episodes: reps.into_iter().map(|r| r.episodes).collect(),
        mean_cum_regret,
        ci_half_width,
        mean_avg_reward,
    })
}

/// One line of a batch CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRow {
    pub round: u64,
    pub mean_cum_regret: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_avg_reward: f64,
}

const TRACE_HEADER: [&str; 9] = [
    "round",
    "action_type",
    "action_id",
    "reward",
    "expected_reward",
    "regret_inc",
    "cum_regret",
    "switching",
    "pending",
];

const BATCH_HEADER: [&str; 5] = ["round", "mean_cum_regret", "ci_low", "ci_high", "mean_avg_reward"];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_trace_csv(path: &Path, trace: &EpisodeTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(TRACE_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in &trace.rows {
        w.write_record([
            r.round.to_string(),
            r.action.kind_str().to_string(),
            r.action.id().to_string(),
            r.reward.to_string(),
            r.expected.to_string(),
            r.regret_inc.to_string(),
            r.cum_regret.to_string(),
            flag(r.switching).to_string(),
            flag(r.pending).to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_batch_csv(path: &Path, batch: &BatchResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(BATCH_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in batch.rows() {
        w.write_record([
            r.round.to_string(),
            r.mean_cum_regret.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.mean_avg_reward.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV with an exact header, handing each record and its 1-based
/// line number to `parse`.
fn read_records<T>(
    path: &Path,
    header: &[&str],
    mut parse: impl FnMut(&csv::StringRecord, &dyn Fn(usize) -> Result<f64>) -> Result<T>,
) -> Result<Vec<T>> {
    let file = display_name(path);
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let found = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::data(
            &file,
            1,
            format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::data(&file, line, e.to_string()))?;
        let field = |c: usize| -> Result<f64> {
            record[c].parse::<f64>().map_err(|_| {
                Error::data(&file, line, format!("bad {} value {:?}", header[c], &record[c]))
            })
        };
        out.push(parse(&record, &field).map_err(|e| match e {
            Error::Input(m) => Error::data(&file, line, m),
            other => other,
        })?);
    }
    Ok(out)
}

fn parse_round(s: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::input(format!("bad round {s:?}")))
}

pub fn read_trace_csv(path: &Path) -> Result<EpisodeTrace> {
    let rows = read_records(path, &TRACE_HEADER, |rec, field| {
        let id: u32 = rec[2]
            .parse()
            .map_err(|_| Error::input(format!("bad action_id {:?}", &rec[2])))?;
        let action = match &rec[1] {
            "item" => Action::Item(ItemId(id)),
            "keyterm" => Action::KeyTerm(KeyTermId(id)),
            other => return Err(Error::input(format!("bad action_type {other:?}"))),
        };
        let bit = |c: usize| match &rec[c] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::input(format!("bad {} flag {other:?}", TRACE_HEADER[c]))),
        };
        Ok(TraceRow {
            round: parse_round(&rec[0])?,
            action,
            reward: field(3)?,
            expected: field(4)?,
            regret_inc: field(5)?,
            cum_regret: field(6)?,
            switching: bit(7)?,
            pending: bit(8)?,
            leading_keyterm: None,
        })
    })?;
    Ok(EpisodeTrace { rows })
}

pub fn read_batch_csv(path: &Path) -> Result<Vec<BatchRow>> {
    read_records(path, &BATCH_HEADER, |rec, field| {
        Ok(BatchRow {
            round: parse_round(&rec[0])?,
            mean_cum_regret: field(1)?,
            ci_low: field(2)?,
            ci_high: field(3)?,
            mean_avg_reward: field(4)?,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::environments::{build_synthetic_stochastic, DiscountFactor, StochasticEnv};
    use crate::policies::{HierParams, HierUcb, OraclePolicy, PolicyKind};

    fn env(seed: u64) -> StochasticEnv {
        build_synthetic_stochastic(2, 2, DiscountFactor::new(0.5).unwrap(), seed).unwrap()
    }

    fn builder(seed: u64) -> Result<Vec<Box<dyn Environment>>> {
        Ok(vec![Box::new(env(seed))])
    }

    #[test]
    fn single_round_is_a_keyterm() {
        let mut e = env(1);
        let mut p = HierUcb::new(e.catalog().clone(), HierParams::default(), true);
        let trace = run_episode(&mut e, &mut p, 1).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(trace.rows[0].action.is_keyterm());
        assert!(trace.rows[0].pending);
        assert_eq!(detect_switch_point(&trace), None);
    }

    #[test]
    fn oracle_has_zero_regret() {
        let mut e = env(1);
        let mut p = OraclePolicy::new(e.optimal().1);
        let trace = run_episode(&mut e, &mut p, 50).unwrap();
        assert!(trace.rows.iter().all(|r| r.cum_regret == 0.0));
    }

    #[test]
    fn zero_horizon_and_mismatch_rejected() {
        let mut e = env(1);
        let mut p = HierUcb::new(Catalog::contiguous_blocks(3, 1).unwrap(), HierParams::default(), true);
        assert!(matches!(run_episode(&mut e, &mut p, 5), Err(Error::Input(_))));
        let mut p = HierUcb::new(e.catalog().clone(), HierParams::default(), true);
        assert!(run_episode(&mut e, &mut p, 0).is_err());
    }

    fn rows_of(actions: &[Action]) -> EpisodeTrace {
        EpisodeTrace {
            rows: actions
                .iter()
                .enumerate()
                .map(|(i, &action)| TraceRow {
                    round: i as u64 + 1,
                    action,
                    reward: 0.0,
                    expected: 0.0,
                    regret_inc: 0.0,
                    cum_regret: 0.0,
                    switching: false,
                    pending: false,
                    leading_keyterm: None,
                })
                .collect(),
        }
    }

    #[test]
    fn switch_points() {
        let k = Action::KeyTerm(KeyTermId(0));
        let i = Action::Item(ItemId(0));
        assert_eq!(detect_switch_point(&rows_of(&[k, i, k, i, i, i])), Some(3));
        assert_eq!(detect_switch_point(&rows_of(&[i, i, i])), Some(0));
        assert_eq!(detect_switch_point(&rows_of(&[i, k])), None);
    }

    #[test]
    fn interval_examples() {
        assert_eq!(confidence_interval(&[0.3, 0.3, 0.3], 0.95).unwrap(), (0.3, 0.3));
        let (lo, hi) = confidence_interval(&[0.0, 1.0], 0.95).unwrap();
        assert!((lo + 0.48).abs() < 0.005 && (hi - 1.48).abs() < 0.005);
        let (lo99, hi99) = confidence_interval(&[0.0, 1.0], 0.99).unwrap();
        assert!(lo99 < lo && hi99 > hi);
        assert!(confidence_interval(&[], 0.95).is_err());
        assert!((normal_critical_value(0.95).unwrap() - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn single_repetition_batch() {
        let spec = PolicySpec::new(PolicyKind::HierUcb, HierParams::default());
        let batch = run_batch(&builder, &spec, 40, 1, 7, 0.95).unwrap();
        let mut e = env(7);
        let mut p = spec.build(&e).unwrap();
        let trace = run_episode(&mut e, p.as_mut(), 40).unwrap();
        let curve: Vec<f64> = trace.rows.iter().map(|r| r.cum_regret).collect();
        assert_eq!(batch.mean_cum_regret, curve);
        assert!(batch.ci_half_width.iter().all(|&h| h == 0.0));
        assert_eq!(batch.seeds, vec![7]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = env(3);
        let mut p = HierUcb::new(e.catalog().clone(), HierParams::default(), true);
        let trace = run_episode(&mut e, &mut p, 30).unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &trace).unwrap();
        let mut expected = trace.clone();
        expected.rows.iter_mut().for_each(|r| r.leading_keyterm = None);
        assert_eq!(read_trace_csv(&path).unwrap(), expected);

        let spec = PolicySpec::new(PolicyKind::Ucb, HierParams::default());
        let batch = run_batch(&builder, &spec, 25, 3, 0, 0.95).unwrap();
        let path = dir.path().join("batch.csv");
        write_batch_csv(&path, &batch).unwrap();
        assert_eq!(read_batch_csv(&path).unwrap(), batch.rows());
    }

    #[test]
    fn bad_header_reports_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        std::fs::write(&path, "round,mean\n1,2\n").unwrap();
        let err = read_batch_csv(&path).unwrap_err();
        assert!(err.to_string().starts_with("b.csv line 1"), "{err}");
        std::fs::write(&path, "round,mean_cum_regret,ci_low,ci_high,mean_avg_reward\n1,x,0,0,0\n").unwrap();
        let err = read_batch_csv(&path).unwrap_err();
        assert!(err.to_string().starts_with("b.csv line 2"), "{err}");
    }
}
