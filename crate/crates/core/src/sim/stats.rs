use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_session, LearnerPolicy, SessionStatus, SimError};
use crate::chart::{StateId, Statechart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub learners: usize,
    pub completion_rate: f64,
    pub mean_steps: f64,
    pub median_steps: f64,
    /// Mean attempt count per state that some learner attempted.
    pub mean_attempts: BTreeMap<StateId, f64>,
    pub status_counts: BTreeMap<String, usize>,
}

impl StatsSummary {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize") + "\n"
    }
}

/// Runs one session per seed (in parallel) and aggregates the results.
pub fn population_stats(
    chart: &Statechart,
    template: &LearnerPolicy,
    seeds: &[u64],
    max_steps: usize,
) -> Result<StatsSummary, SimError> {
    if seeds.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    let traces = seeds
        .par_iter()
        .map(|&seed| run_session(chart, &template.with_seed(seed), max_steps))
        .collect::<Result<Vec<_>, _>>()?;

    let n = traces.len();
    let mut steps: Vec<usize> = traces.iter().map(|t| t.steps()).collect();
    steps.sort_unstable();
    let median_steps = if n % 2 == 1 {
        steps[n / 2] as f64
    } else {
        (steps[n / 2 - 1] + steps[n / 2]) as f64 / 2.0
    };
    let completed = traces.iter().filter(|t| t.status() == SessionStatus::Completed).count();

    let mut totals: BTreeMap<StateId, u64> = BTreeMap::new();
    let mut status_counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in &traces {
        for (s, &a) in &t.summary.attempts {
            *totals.entry(s.clone()).or_default() += u64::from(a);
        }
        let label = serde_json::to_value(t.status())
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        *status_counts.entry(label).or_default() += 1;
    }

    Ok(StatsSummary {
        learners: n,
        completion_rate: completed as f64 / n as f64,
        mean_steps: steps.iter().sum::<usize>() as f64 / n as f64,
        median_steps,
        mean_attempts: totals.into_iter().map(|(s, a)| (s, a as f64 / n as f64)).collect(),
        status_counts,
    })
}
