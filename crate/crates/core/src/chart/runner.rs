use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    advance_clock, enabled_transitions, initial_configuration, score_representatives, step, Configuration, Effect,
    EngineError, EvalContext, Event, Outcome, Statechart, StepResult,
};

/// Learner-facing event kinds (timeouts and exit notifications are internal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Enter,
    Next,
    Back,
    Submit,
    AssessmentResult,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Enter => "enter",
            EventKind::Next => "next",
            EventKind::Back => "back",
            EventKind::Submit => "submit",
            EventKind::AssessmentResult => "assessment_result",
        }
    }

    pub fn of(event: &Event) -> Option<EventKind> {
        Some(match event {
            Event::Enter => EventKind::Enter,
            Event::Next => EventKind::Next,
            Event::Back => EventKind::Back,
            Event::Submit { .. } => EventKind::Submit,
            Event::AssessmentResult { .. } => EventKind::AssessmentResult,
            Event::Timeout { .. } | Event::ExitReached { .. } => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mutable run state of one chart instance: configuration, guard context
/// and the queue of internally emitted events that must be processed before
/// any external one.
///
/// The chart is passed to each call rather than stored, so the state can be
/// cloned freely by explorers.
#[derive(Debug, Clone, PartialEq)]
pub struct Runner {
    pub config: Configuration,
    pub ctx: EvalContext,
    pub pending: VecDeque<Event>,
}

impl Runner {
    pub fn new(chart: &Statechart) -> Result<Runner, EngineError> {
        Ok(Runner {
            config: initial_configuration(chart)?,
            ctx: EvalContext::for_chart(chart),
            pending: VecDeque::new(),
        })
    }

    /// Steps the engine and applies the fired transitions' effects.
    pub fn fire(&mut self, chart: &Statechart, event: &Event) -> Result<StepResult, EngineError> {
        let result = step(chart, &self.config, event, &self.ctx)?;
        if !result.fired.is_empty() {
            apply_effects(&mut self.ctx, event, &result);
            self.config = result.config.clone();
            self.pending.extend(result.emitted.iter().cloned());
        }
        Ok(result)
    }

    /// Moves the clock forward one tick and queues any timeouts that fell due.
    pub fn tick(&mut self, chart: &Statechart) -> Result<(), EngineError> {
        let now = self.ctx.now + 1;
        let due = advance_clock(chart, &mut self.config, &self.ctx, now)?;
        self.ctx.now = now;
        self.pending.extend(due);
        Ok(())
    }

    pub fn is_complete(&self, chart: &Statechart) -> bool {
        chart.completion_states().into_iter().any(|s| self.config.is_active(s))
    }

    /// Whether `event` would fire at least one transition right now.
    pub fn is_enabled(&self, chart: &Statechart, event: &Event) -> bool {
        !enabled_transitions(chart, &self.config, event, &self.ctx).is_empty()
    }

    /// Learner event kinds that can fire for some payload.
    pub fn available(&self, chart: &Statechart) -> Vec<EventKind> {
        let mut out = Vec::new();
        for (kind, event) in [
            (EventKind::Enter, Event::Enter),
            (EventKind::Next, Event::Next),
            (EventKind::Back, Event::Back),
        ] {
            if self.is_enabled(chart, &event) {
                out.push(kind);
            }
        }
        let reps = score_representatives(chart);
        if reps.iter().any(|&s| self.is_enabled(chart, &Event::submit(s))) {
            out.push(EventKind::Submit);
        }
        let result_enabled = reps.iter().any(|&score| {
            [Outcome::Passed, Outcome::Failed]
                .into_iter()
                .any(|outcome| self.is_enabled(chart, &Event::AssessmentResult { outcome, score }))
        });
        if result_enabled {
            out.push(EventKind::AssessmentResult);
        }
        out
    }
}

/// Context bookkeeping for a step that fired: the event's score/outcome
/// become the latest ones, then each transition's effects run in order.
pub fn apply_effects(ctx: &mut EvalContext, event: &Event, result: &StepResult) {
    if let Some(score) = event.score() {
        ctx.last_score = Some(score);
    }
    if let Some(outcome) = event.outcome() {
        ctx.last_outcome = Some(outcome);
    }
    for t in &result.fired {
        for effect in &t.effects {
            match effect {
                Effect::RecordOutcome(o) => ctx.last_outcome = Some(*o),
                Effect::BeginAttempt(s) => {
                    *ctx.attempt_count.entry(s.clone()).or_insert(0) += 1;
                    ctx.last_outcome = None;
                    ctx.last_score = None;
                }
                Effect::ResetAttempts(s) => {
                    ctx.attempt_count.insert(s.clone(), 0);
                }
            }
        }
    }
}
