use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use crate::chart::{Event, EventKind, Outcome, Runner, Statechart};
use crate::content::DEFAULT_MASTERY_SCORE;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy chose '{event}' but only [{}] are enabled", available.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "))]
    NotEnabled { event: Event, available: Vec<EventKind> },
    #[error("bad policy spec '{spec}': {reason}")]
    BadSpec { spec: String, reason: String },
}

/// How a simulated learner scores submissions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreModel {
    Constant(f64),
    /// Passes with probability `p`, scoring `pass` or `fail`.
    Bernoulli {
        p: f64,
        pass: f64,
        fail: f64,
    },
    /// `start + gain * (attempt - 1)`, capped at `cap`. The attempt is the
    /// counter of the innermost active state that has one.
    Improving {
        start: f64,
        gain: f64,
        cap: f64,
    },
}

/// A scripted learner. Prefers submitting, then moving forward, then
/// entering; goes back only when nothing else is possible.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerPolicy {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub model: ScoreModel,
    pub seed: u64,
}

const PREFERENCE: [EventKind; 5] = [
    EventKind::Submit,
    EventKind::Next,
    EventKind::Enter,
    EventKind::AssessmentResult,
    EventKind::Back,
];

impl LearnerPolicy {
    pub fn new(name: impl Into<String>, model: ScoreModel, seed: u64) -> LearnerPolicy {
        let params = match model {
            ScoreModel::Constant(s) => [("score", s)].as_slice().to_owned(),
            ScoreModel::Bernoulli { p, pass, fail } => vec![("p", p), ("pass_score", pass), ("fail_score", fail)],
            ScoreModel::Improving { start, gain, cap } => vec![("start", start), ("gain", gain), ("cap", cap)],
        };
        LearnerPolicy {
            name: name.into(),
            params: params
                .into_iter()
                .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
                .collect(),
            model,
            seed,
        }
    }

    pub fn always_pass(seed: u64) -> LearnerPolicy {
        LearnerPolicy::new("always-pass", ScoreModel::Constant(1.0), seed)
    }

    pub fn always_fail(seed: u64) -> LearnerPolicy {
        LearnerPolicy::new("always-fail", ScoreModel::Constant(0.0), seed)
    }

    /// Parses `always-pass`, `always-fail`, `constant:S`, `bernoulli:P[:PASS:FAIL]`
    /// or `improving:START:GAIN:CAP`.
    pub fn parse(spec: &str, seed: u64) -> Result<LearnerPolicy, PolicyError> {
        let bad = |reason: &str| PolicyError::BadSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = spec.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let nums: Vec<f64> = parts
            .map(|p| f64::from_str(p.trim()).map_err(|_| bad(&format!("'{p}' is not a number"))))
            .collect::<Result<_, _>>()?;
        if let Some(x) = nums.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(bad(&format!("parameter {x} is outside [0, 1]")));
        }
        let model = match (head, nums.as_slice()) {
            ("always-pass", []) => return Ok(LearnerPolicy::always_pass(seed)),
            ("always-fail", []) => return Ok(LearnerPolicy::always_fail(seed)),
            ("constant", [s]) => ScoreModel::Constant(*s),
            ("bernoulli", [p]) => ScoreModel::Bernoulli {
                p: *p,
                pass: 1.0,
                fail: 0.0,
            },
            ("bernoulli", [p, pass, fail]) => ScoreModel::Bernoulli {
                p: *p,
                pass: *pass,
                fail: *fail,
            },
            ("improving", [start, gain, cap]) => ScoreModel::Improving {
                start: *start,
                gain: *gain,
                cap: *cap,
            },
            ("always-pass" | "always-fail" | "constant" | "bernoulli" | "improving", _) => {
                return Err(bad("wrong number of parameters"))
            }
            _ => return Err(bad("unknown policy")),
        };
        Ok(LearnerPolicy::new(head, model, seed))
    }

    pub fn with_seed(&self, seed: u64) -> LearnerPolicy {
        LearnerPolicy { seed, ..self.clone() }
    }

    /// Picks an event among `available`. Only `Submit` draws from `rng`.
    pub fn decide(
        &self,
        chart: &Statechart,
        runner: &Runner,
        available: &[EventKind],
        rng: &mut ChaCha8Rng,
    ) -> Option<Event> {
        let kind = PREFERENCE.into_iter().find(|k| available.contains(k))?;
        Some(match kind {
            EventKind::Enter => Event::Enter,
            EventKind::Next => Event::Next,
            EventKind::Back => Event::Back,
            EventKind::Submit => Event::submit(self.draw(chart, runner, rng)),
            EventKind::AssessmentResult => {
                let score = self.draw(chart, runner, rng);
                let outcome = if score >= DEFAULT_MASTERY_SCORE {
                    Outcome::Passed
                } else {
                    Outcome::Failed
                };
                Event::AssessmentResult { outcome, score }
            }
        })
    }

    fn draw(&self, chart: &Statechart, runner: &Runner, rng: &mut ChaCha8Rng) -> f64 {
        let s = match self.model {
            ScoreModel::Constant(s) => s,
            ScoreModel::Bernoulli { p, pass, fail } => {
                if rng.gen::<f64>() < p {
                    pass
                } else {
                    fail
                }
            }
            ScoreModel::Improving { start, gain, cap } => {
                let attempt = current_attempt(chart, runner).max(1);
                (start + gain * f64::from(attempt - 1)).min(cap)
            }
        };
        s.clamp(0.0, 1.0)
    }

    /// The score every future submission will get, when that no longer
    /// depends on chance or on further attempts. `None` means the policy
    /// may still behave differently, so a repeated state proves nothing.
    pub(crate) fn stationary_score(&self, chart: &Statechart, runner: &Runner) -> Option<f64> {
        match self.model {
            ScoreModel::Constant(s) => Some(s),
            ScoreModel::Bernoulli { p, pass, .. } if p >= 1.0 => Some(pass),
            ScoreModel::Bernoulli { p, fail, .. } if p <= 0.0 => Some(fail),
            ScoreModel::Bernoulli { pass, fail, .. } if pass == fail => Some(pass),
            ScoreModel::Bernoulli { .. } => None,
            ScoreModel::Improving { start, gain, cap } => {
                let attempt = current_attempt(chart, runner).max(1);
                let s = start + gain * f64::from(attempt - 1);
                (gain <= 0.0 || s >= cap).then(|| s.min(cap))
            }
        }
    }
}

fn current_attempt(chart: &Statechart, runner: &Runner) -> u32 {
    runner
        .config
        .path(chart)
        .iter()
        .rev()
        .map(|s| runner.ctx.attempts(s))
        .find(|&n| n > 0)
        .unwrap_or(0)
}

impl fmt::Display for LearnerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.model {
            ScoreModel::Constant(s) if self.name == "constant" => write!(f, "constant:{s}"),
            ScoreModel::Constant(_) => f.write_str(&self.name),
            ScoreModel::Bernoulli { p, pass, fail } => write!(f, "bernoulli:{p}:{pass}:{fail}"),
            ScoreModel::Improving { start, gain, cap } => write!(f, "improving:{start}:{gain}:{cap}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(
            LearnerPolicy::parse("always-pass", 3).unwrap().model,
            ScoreModel::Constant(1.0)
        );
        assert_eq!(
            LearnerPolicy::parse("always-fail", 3).unwrap().model,
            ScoreModel::Constant(0.0)
        );
        assert_eq!(
            LearnerPolicy::parse("bernoulli:0.25", 3).unwrap().model,
            ScoreModel::Bernoulli {
                p: 0.25,
                pass: 1.0,
                fail: 0.0
            }
        );
        assert_eq!(
            LearnerPolicy::parse("improving:0.2:0.3:0.9", 0).unwrap().model,
            ScoreModel::Improving {
                start: 0.2,
                gain: 0.3,
                cap: 0.9
            }
        );
        for bad in ["sometimes", "constant", "constant:2", "bernoulli:x", "bernoulli:0.5:1"] {
            assert!(LearnerPolicy::parse(bad, 0).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for spec in [
            "always-pass",
            "always-fail",
            "constant:0.7",
            "bernoulli:0.5:0.9:0.1",
            "improving:0.1:0.2:1",
        ] {
            let p = LearnerPolicy::parse(spec, 1).unwrap();
            assert_eq!(LearnerPolicy::parse(&p.to_string(), 1).unwrap(), p);
        }
    }
}
