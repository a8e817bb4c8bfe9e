//! Learner simulation and state-space analysis.

mod explore;
mod policy;
mod session;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{score_representatives, EngineError, EvalContext, Guard, Outcome, StateId, Statechart};

pub use explore::{explore, ExploreError, ExploreOptions, ReachabilityReport, Witness, WitnessStep};
pub use policy::{LearnerPolicy, PolicyError, ScoreModel};
pub use session::{run_session, SessionStatus, SessionSummary, SessionTrace, TraceError, TraceRecord};
pub use stats::{population_stats, StatsSummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("max_steps must be positive")]
    ZeroBudget,
    #[error("population needs at least one seed")]
    EmptyPopulation,
}

/// Finite abstraction of [`EvalContext`]: attempt counts capped one above
/// the largest `AttemptCount` constant, scores reduced to the representative
/// with the same comparison results against every `LastScore` constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextClass {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attempts: BTreeMap<StateId, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    /// Index into [`Abstraction::representatives`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_class: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct Abstraction {
    reps: Vec<f64>,
    attempt_cap: u32,
}

impl Abstraction {
    pub fn for_chart(chart: &Statechart) -> Abstraction {
        let max_const = chart
            .transitions()
            .iter()
            .flat_map(|t| t.guard.atoms())
            .filter_map(|a| match a {
                Guard::AttemptCount(_, n) => Some(*n),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Abstraction {
            reps: score_representatives(chart),
            attempt_cap: max_const.saturating_add(1),
        }
    }

    pub fn representatives(&self) -> &[f64] {
        &self.reps
    }

    pub fn attempt_cap(&self) -> u32 {
        self.attempt_cap
    }

    /// Representative index of `score`. Points sit at even indices and the
    /// open interval after point `k` at `k + 1`.
    pub fn score_class(&self, score: f64) -> u32 {
        let mut k = 0;
        while k < self.reps.len() {
            let p = self.reps[k];
            if score == p {
                return k as u32;
            }
            if k + 2 < self.reps.len() && score < self.reps[k + 2] && score > p {
                return (k + 1) as u32;
            }
            k += 2;
        }
        // outside [0, 1]: cannot happen for validated events
        if score < 0.0 {
            0
        } else {
            (self.reps.len() - 1) as u32
        }
    }

    pub fn classify(&self, ctx: &EvalContext) -> ContextClass {
        ContextClass {
            attempts: ctx
                .attempt_count
                .iter()
                .filter(|(_, &n)| n > 0)
                .map(|(s, &n)| (s.clone(), n.min(self.attempt_cap)))
                .collect(),
            outcome: ctx.last_outcome,
            score_class: ctx.last_score.map(|s| self.score_class(s)),
        }
    }

    pub fn score_of(&self, class: &ContextClass) -> Option<f64> {
        class.score_class.map(|k| self.reps[k as usize])
    }

    /// A concrete context in `class`, with clock and sibling facts from `base`.
    pub fn concretize(&self, class: &ContextClass, base: &EvalContext) -> EvalContext {
        EvalContext {
            attempt_count: class.attempts.clone(),
            last_score: self.score_of(class),
            last_outcome: class.outcome,
            has_next: base.has_next.clone(),
            now: base.now,
        }
    }
}
