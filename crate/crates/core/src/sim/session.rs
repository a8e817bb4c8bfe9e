use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Abstraction, ContextClass, LearnerPolicy, PolicyError, SimError};
use crate::chart::{Effect, Event, Outcome, Runner, StateId, Statechart, StepResult};

/// One engine step as seen by a trace reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    /// Active states before the step, root first.
    pub path: Vec<StateId>,
    pub event: Event,
    pub fired: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl TraceRecord {
    pub fn new(tick: u64, path: Vec<StateId>, event: &Event, result: &StepResult) -> TraceRecord {
        let recorded = result
            .fired
            .iter()
            .rev()
            .flat_map(|t| t.effects.iter().rev())
            .find_map(|e| match e {
                Effect::RecordOutcome(o) => Some(*o),
                _ => None,
            });
        TraceRecord {
            tick,
            path,
            event: event.clone(),
            fired: result.fired.iter().map(|t| t.id.clone()).collect(),
            outcome: recorded.or(event.outcome()),
            score: event.score(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Completed,
    StepBudgetExhausted,
    LivelockDetected,
}

/// Trailing line of a serialized trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub status: SessionStatus,
    pub steps: usize,
    /// Active states after the last step.
    pub final_path: Vec<StateId>,
    /// Leaf paths of the repeating segment, for livelocks. A single entry
    /// with no successor means the session got stuck.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cycle: Vec<Vec<StateId>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attempts: BTreeMap<StateId, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub records: Vec<TraceRecord>,
    pub summary: SessionSummary,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace has no summary line")]
    MissingSummary,
}

impl SessionTrace {
    pub fn status(&self) -> SessionStatus {
        self.summary.status
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// Line-delimited JSON: one record per step, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<SessionTrace, TraceError> {
        let lines: Vec<(usize, &str)> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
        let Some((&(last_no, last), body)) = lines.split_last() else {
            return Err(TraceError::MissingSummary);
        };
        let summary = serde_json::from_str(last).map_err(|source| TraceError::Parse {
            line: last_no + 1,
            source,
        })?;
        let records = body
            .iter()
            .map(|&(n, l)| serde_json::from_str(l).map_err(|source| TraceError::Parse { line: n + 1, source }))
            .collect::<Result<_, _>>()?;
        Ok(SessionTrace { records, summary })
    }
}

/// Everything that determines the session's future apart from absolute time.
#[derive(PartialEq, Eq, Hash)]
struct StateKey {
    active: BTreeSet<StateId>,
    timers: Vec<(StateId, u64)>,
    timed_out: BTreeSet<StateId>,
    ctx: ContextClass,
    pending: String,
    score_bits: u64,
}

fn state_key(chart: &Statechart, abs: &Abstraction, runner: &Runner, score: f64) -> StateKey {
    let timers = runner
        .config
        .active
        .iter()
        .filter(|s| !runner.config.timed_out.contains(*s))
        .filter_map(|s| {
            let d = chart.state(s)?.deadline?;
            let since = runner.ctx.now - runner.config.entered_at.get(s).copied().unwrap_or(0);
            Some((s.clone(), since.min(d)))
        })
        .collect();
    StateKey {
        active: runner.config.active.clone(),
        timers,
        timed_out: runner.config.timed_out.clone(),
        ctx: abs.classify(&runner.ctx),
        pending: serde_json::to_string(&runner.pending).expect("events serialize"),
        score_bits: score.to_bits(),
    }
}

/// Earliest tick at which a not-yet-fired deadline of an active state expires.
fn next_expiry(chart: &Statechart, runner: &Runner) -> Option<u64> {
    runner
        .config
        .active
        .iter()
        .filter(|s| !runner.config.timed_out.contains(*s))
        .filter_map(|s| Some(runner.config.entered_at.get(s).copied().unwrap_or(0) + chart.state(s)?.deadline?))
        .min()
}

/// Drives `chart` with `policy` until completion, budget exhaustion or a
/// provable livelock. One tick elapses per step; queued internal events
/// (exit notifications, timeouts) are handled before the policy is asked.
pub fn run_session(chart: &Statechart, policy: &LearnerPolicy, max_steps: usize) -> Result<SessionTrace, SimError> {
    if max_steps == 0 {
        return Err(SimError::ZeroBudget);
    }
    let abs = Abstraction::for_chart(chart);
    let mut runner = Runner::new(chart)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut seen: HashMap<StateKey, usize> = HashMap::new();
    let mut cycle = Vec::new();

    let status = loop {
        if runner.is_complete(chart) {
            break SessionStatus::Completed;
        }
        if records.len() >= max_steps {
            break SessionStatus::StepBudgetExhausted;
        }
        if let Some(score) = policy.stationary_score(chart, &runner) {
            let key = state_key(chart, &abs, &runner, score);
            if let Some(&first) = seen.get(&key) {
                cycle = records[first..].iter().map(|r| r.path.clone()).collect();
                break SessionStatus::LivelockDetected;
            }
            seen.insert(key, records.len());
        }

        let event = match runner.pending.pop_front() {
            Some(ev) => {
                if !runner.is_enabled(chart, &ev) {
                    continue;
                }
                ev
            }
            None => {
                let available = runner.available(chart);
                match policy.decide(chart, &runner, &available, &mut rng) {
                    Some(ev) => {
                        if !runner.is_enabled(chart, &ev) {
                            return Err(PolicyError::NotEnabled { event: ev, available }.into());
                        }
                        ev
                    }
                    None => match next_expiry(chart, &runner) {
                        Some(at) => {
                            while runner.ctx.now < at {
                                runner.tick(chart)?;
                            }
                            continue;
                        }
                        None => {
                            cycle = vec![runner.config.path(chart)];
                            break SessionStatus::LivelockDetected;
                        }
                    },
                }
            }
        };

        let path = runner.config.path(chart);
        let tick = runner.ctx.now;
        let result = runner.fire(chart, &event)?;
        records.push(TraceRecord::new(tick, path, &event, &result));
        runner.tick(chart)?;
    };

    Ok(SessionTrace {
        summary: SessionSummary {
            status,
            steps: records.len(),
            final_path: runner.config.path(chart),
            cycle,
            attempts: runner.ctx.attempt_count.clone(),
        },
        records,
    })
}
