//! Learning strategies as chart-to-chart transformations.
//!
//! A strategy rewrites a compiled chart using the [`CompilationMap`] to find
//! its anchors (entry choices, exit points, assessment states). Strategies
//! compose left to right: `compose([p, q])` applies `p` first.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chart::{check_chart, ChartViolation, Cmp, Effect, Guard, Statechart, Transition, Trigger};
use crate::compiler::{default_exit_rules, retry_rule_id, CompilationMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("strategy '{strategy}' is not applicable: {reason}")]
    Inapplicable { strategy: String, reason: String },
    #[error("invalid strategy: {0}")]
    Invalid(String),
    #[error("input chart is ill-formed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    IllFormedChart(Vec<ChartViolation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttemptLimitAction {
    /// Leave the item once the limit is reached.
    #[serde(rename = "skip")]
    Skip,
    /// Send the learner back to the item start with a fresh attempt budget.
    #[serde(rename = "remediate-to-item-start")]
    Remediate,
}

impl AttemptLimitAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AttemptLimitAction::Skip => "skip",
            AttemptLimitAction::Remediate => "remediate-to-item-start",
        }
    }
}

/// Built-in strategies. `Pipeline` is what [`compose`] produces.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Identity,
    /// Reinstates the default exit rules on every item.
    LinearLock,
    /// Uses one pass threshold for every assessment.
    MasteryThreshold(f64),
    /// Caps retries after failed assessments.
    MaxAttempts {
        limit: u32,
        action: AttemptLimitAction,
    },
    /// Lets a learner whose last outcome is a pass skip an item's content.
    SkipAhead,
    Pipeline(Vec<Strategy>),
}

/// Ordered list of strategies; empty means identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyPipeline(pub Vec<Strategy>);

/// One entry of a strategy config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Leniency {
    /// Inapplicable strategies are errors.
    #[default]
    Strict,
    /// Inapplicable strategies leave the chart unchanged and add a warning.
    Warn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub chart: Statechart,
    pub warnings: Vec<String>,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Identity => f.write_str("identity"),
            Strategy::LinearLock => f.write_str("linear-lock"),
            Strategy::MasteryThreshold(t) => write!(f, "mastery-threshold({t})"),
            Strategy::MaxAttempts { limit, action } => {
                write!(f, "max-attempts({limit}, {})", action.as_str())
            }
            Strategy::SkipAhead => f.write_str("skip-ahead"),
            Strategy::Pipeline(ps) => {
                f.write_str("[")?;
                for (k, p) in ps.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Identity => "identity",
            Strategy::LinearLock => "linear-lock",
            Strategy::MasteryThreshold(_) => "mastery-threshold",
            Strategy::MaxAttempts { .. } => "max-attempts",
            Strategy::SkipAhead => "skip-ahead",
            Strategy::Pipeline(_) => "pipeline",
        }
    }

    pub fn params(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        match self {
            Strategy::MasteryThreshold(t) => {
                m.insert("threshold".into(), serde_json::json!(t));
            }
            Strategy::MaxAttempts { limit, action } => {
                m.insert("limit".into(), Value::from(*limit));
                m.insert("action".into(), Value::from(action.as_str()));
            }
            Strategy::Pipeline(ps) => {
                m.insert(
                    "strategies".into(),
                    serde_json::to_value(ps.iter().map(Strategy::to_spec).collect::<Vec<_>>())
                        .expect("specs serialize"),
                );
            }
            _ => {}
        }
        m
    }

    pub fn to_spec(&self) -> StrategySpec {
        StrategySpec {
            name: self.name().into(),
            params: self.params(),
        }
    }

    pub fn from_spec(spec: &StrategySpec) -> Result<Strategy, StrategyError> {
        let allow = |keys: &[&str]| -> Result<(), StrategyError> {
            match spec.params.keys().find(|k| !keys.contains(&k.as_str())) {
                Some(k) => Err(StrategyError::Invalid(format!(
                    "'{}' does not take parameter '{k}'",
                    spec.name
                ))),
                None => Ok(()),
            }
        };
        let strategy = match spec.name.as_str() {
            "identity" => {
                allow(&[])?;
                Strategy::Identity
            }
            "linear-lock" => {
                allow(&[])?;
                Strategy::LinearLock
            }
            "skip-ahead" => {
                allow(&[])?;
                Strategy::SkipAhead
            }
            "mastery-threshold" => {
                allow(&["threshold"])?;
                let t =
                    spec.params.get("threshold").and_then(Value::as_f64).ok_or_else(|| {
                        StrategyError::Invalid("mastery-threshold needs a numeric 'threshold'".into())
                    })?;
                Strategy::MasteryThreshold(t)
            }
            "max-attempts" => {
                allow(&["limit", "action"])?;
                let limit = spec
                    .params
                    .get("limit")
                    .and_then(Value::as_u64)
                    .and_then(|n| u32::try_from(n).ok())
                    .ok_or_else(|| StrategyError::Invalid("max-attempts needs an integer 'limit'".into()))?;
                let action = match spec.params.get("action").map(|v| v.as_str()) {
                    None | Some(Some("skip")) => AttemptLimitAction::Skip,
                    Some(Some("remediate-to-item-start")) => AttemptLimitAction::Remediate,
                    Some(other) => {
                        return Err(StrategyError::Invalid(format!("unknown max-attempts action {other:?}")))
                    }
                };
                Strategy::MaxAttempts { limit, action }
            }
            "pipeline" => {
                allow(&["strategies"])?;
                let specs: Vec<StrategySpec> = spec
                    .params
                    .get("strategies")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(|e| StrategyError::Invalid(e.to_string()))?
                    .unwrap_or_default();
                Strategy::Pipeline(specs.iter().map(Strategy::from_spec).collect::<Result<_, _>>()?)
            }
            other => return Err(StrategyError::Invalid(format!("unknown strategy '{other}'"))),
        };
        strategy.validate()?;
        Ok(strategy)
    }

    /// Parameter range checks.
    pub fn validate(&self) -> Result<(), StrategyError> {
        match self {
            Strategy::MasteryThreshold(t) if !(0.0..=1.0).contains(t) => Err(StrategyError::Invalid(format!(
                "mastery threshold {t} is outside [0, 1]"
            ))),
            Strategy::MaxAttempts { limit: 0, .. } => {
                Err(StrategyError::Invalid("max-attempts limit must be at least 1".into()))
            }
            Strategy::Pipeline(ps) => ps.iter().try_for_each(Strategy::validate),
            _ => Ok(()),
        }
    }
}

impl StrategyPipeline {
    /// Parses a config document: a JSON array of `{name, params}` objects.
    pub fn from_json(text: &str) -> Result<StrategyPipeline, StrategyError> {
        let specs: Vec<StrategySpec> = serde_json::from_str(text).map_err(|e| StrategyError::Invalid(e.to_string()))?;
        Self::from_specs(&specs)
    }

    pub fn from_specs(specs: &[StrategySpec]) -> Result<StrategyPipeline, StrategyError> {
        specs
            .iter()
            .map(Strategy::from_spec)
            .collect::<Result<_, _>>()
            .map(StrategyPipeline)
    }

    pub fn to_specs(&self) -> Vec<StrategySpec> {
        self.0.iter().map(Strategy::to_spec).collect()
    }
}

/// A single strategy equivalent to running the pipeline left to right.
pub fn compose(pipeline: &StrategyPipeline) -> Strategy {
    Strategy::Pipeline(pipeline.0.clone())
}

/// Applies `strategy`, failing on inapplicable strategies.
pub fn apply(strategy: &Strategy, chart: &Statechart, map: &CompilationMap) -> Result<Statechart, StrategyError> {
    apply_with(strategy, chart, map, Leniency::Strict).map(|a| a.chart)
}

pub fn apply_with(
    strategy: &Strategy,
    chart: &Statechart,
    map: &CompilationMap,
    leniency: Leniency,
) -> Result<Applied, StrategyError> {
    strategy.validate()?;
    let violations = check_chart(chart);
    if !violations.is_empty() {
        return Err(StrategyError::IllFormedChart(violations));
    }
    let mut warnings = Vec::new();
    let chart = transform(strategy, chart, map, leniency, &mut warnings)?;
    debug_assert!(check_chart(&chart).is_empty(), "{strategy} broke the chart");
    Ok(Applied { chart, warnings })
}

fn transform(
    strategy: &Strategy,
    chart: &Statechart,
    map: &CompilationMap,
    leniency: Leniency,
    warnings: &mut Vec<String>,
) -> Result<Statechart, StrategyError> {
    let needs_assessments = matches!(strategy, Strategy::MasteryThreshold(_) | Strategy::MaxAttempts { .. });
    if needs_assessments && map.assessments.is_empty() {
        let err = StrategyError::Inapplicable {
            strategy: strategy.to_string(),
            reason: "the chart has no assessment states".into(),
        };
        return match leniency {
            Leniency::Strict => Err(err),
            Leniency::Warn => {
                warnings.push(err.to_string());
                Ok(chart.clone())
            }
        };
    }
    Ok(match strategy {
        Strategy::Identity => chart.clone(),
        Strategy::LinearLock => linear_lock(chart, map),
        Strategy::MasteryThreshold(t) => mastery_threshold(chart, map, *t),
        Strategy::MaxAttempts { limit, action } => max_attempts(chart, map, *limit, *action),
        Strategy::SkipAhead => skip_ahead(chart, map),
        Strategy::Pipeline(ps) => {
            let mut cur = chart.clone();
            for p in ps {
                cur = transform(p, &cur, map, leniency, warnings)?;
            }
            cur
        }
    })
}

fn skip_rule_id(item: &str) -> String {
    format!("{item}#skip")
}

fn attempt_limit_rule_id(item: &str) -> String {
    format!("{item}#attempt-limit")
}

fn linear_lock(chart: &Statechart, map: &CompilationMap) -> Statechart {
    let mut ts: Vec<Transition> = chart.transitions().to_vec();
    for item in &map.items {
        let (entry, exit, fin) = (&map.entry_of[item], &map.exit_of[item], &map.final_of[item]);
        let skip = skip_rule_id(item);
        let first_exit = ts.iter().position(|t| &t.source == exit);
        let mut kept = Vec::with_capacity(ts.len());
        let mut insert_at = None;
        for (k, t) in ts.into_iter().enumerate() {
            if Some(k) == first_exit {
                insert_at = Some(kept.len());
            }
            if &t.source == exit || t.id == skip {
                continue;
            }
            kept.push(t);
        }
        let at = insert_at.unwrap_or(kept.len());
        kept.splice(at..at, default_exit_rules(item, entry, exit, fin));
        ts = kept;
    }
    chart.with_transitions(ts)
}

fn mastery_threshold(chart: &Statechart, map: &CompilationMap, threshold: f64) -> Statechart {
    let sources: Vec<_> = map.assessments.iter().map(|u| &map.unit_state[u]).collect();
    let ts = chart
        .transitions()
        .iter()
        .map(|t| {
            if t.event == Trigger::Submit && sources.contains(&&t.source) {
                let mut t = t.clone();
                t.guard = t.guard.map_atoms(&mut |atom| match atom {
                    Guard::LastScore(cmp, _) => Guard::LastScore(*cmp, threshold),
                    other => other.clone(),
                });
                t
            } else {
                t.clone()
            }
        })
        .collect();
    chart.with_transitions(ts)
}

fn max_attempts(chart: &Statechart, map: &CompilationMap, limit: u32, action: AttemptLimitAction) -> Statechart {
    let mut ts: Vec<Transition> = chart.transitions().to_vec();
    for item in &map.items {
        let (entry, exit, fin) = (&map.entry_of[item], &map.exit_of[item], &map.final_of[item]);
        let node = &map.node_state[item];
        let limit_id = attempt_limit_rule_id(item);
        ts.retain(|t| t.id != limit_id);
        let retry_id = retry_rule_id(item);
        let Some(pos) = ts.iter().position(|t| t.id == retry_id) else {
            continue;
        };
        ts[pos].guard = Guard::and([Guard::Failed, Guard::AttemptCount(Cmp::Lt, limit)]);
        let limit_guard = Guard::and([Guard::Failed, Guard::AttemptCount(Cmp::Ge, limit)]);
        let rule = match action {
            AttemptLimitAction::Skip => {
                Transition::new(limit_id, exit.clone(), Trigger::Enter, fin.clone()).guarded(limit_guard)
            }
            AttemptLimitAction::Remediate => Transition::new(limit_id, exit.clone(), Trigger::Enter, entry.clone())
                .guarded(limit_guard)
                .with_effect(Effect::ResetAttempts(node.clone())),
        };
        ts.insert(pos, rule.with_priority(0));
    }
    chart.with_transitions(ts)
}

fn skip_ahead(chart: &Statechart, map: &CompilationMap) -> Statechart {
    let mut ts: Vec<Transition> = chart.transitions().to_vec();
    for item in &map.items {
        let (entry, exit) = (&map.entry_of[item], &map.exit_of[item]);
        let id = skip_rule_id(item);
        ts.retain(|t| t.id != id);
        let after = ts
            .iter()
            .rposition(|t| &t.source == entry)
            .map(|k| k + 1)
            .unwrap_or(ts.len());
        ts.insert(
            after,
            Transition::new(id, entry.clone(), Trigger::Next, exit.clone()).guarded(Guard::Passed),
        );
    }
    chart.with_transitions(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::content::{ActivityTree, Cluster, ContentUnit, Item, Level};

    fn tree(mastery: Option<f64>) -> ActivityTree {
        ActivityTree::new(Cluster::new(
            "C",
            Level::Curriculum,
            vec![
                Item::new(
                    "I1",
                    vec![
                        ContentUnit::asset("A1", "a"),
                        ContentUnit::assessment("Q1", "q", mastery, None),
                    ],
                )
                .into(),
                Item::new("I2", vec![ContentUnit::assessment("Q2", "q", Some(0.3), Some(5))]).into(),
            ],
        ))
    }

    fn plain_tree() -> ActivityTree {
        ActivityTree::new(Cluster::new(
            "C",
            Level::Curriculum,
            vec![Item::new("I1", vec![ContentUnit::asset("A1", "a")]).into()],
        ))
    }

    #[test]
    fn identity_and_linear_lock_leave_compiled_chart_alone() {
        let (chart, map) = compile(&tree(None)).unwrap();
        assert_eq!(apply(&Strategy::Identity, &chart, &map).unwrap(), chart);
        assert_eq!(apply(&Strategy::LinearLock, &chart, &map).unwrap(), chart);
    }

    #[test]
    fn mastery_threshold_matches_a_rebuild() {
        let t = tree(Some(0.6));
        let (chart, map) = compile(&t).unwrap();
        let rewritten = apply(&Strategy::MasteryThreshold(0.8), &chart, &map).unwrap();
        let rebuilt_tree = t.map_units(|u| {
            let mut u = u.clone();
            if u.is_assessment() {
                u.mastery_score = Some(0.8);
            }
            u
        });
        let (rebuilt, _) = compile(&rebuilt_tree).unwrap();
        assert_eq!(rewritten, rebuilt);
    }

    #[test]
    fn last_threshold_wins() {
        let (chart, map) = compile(&tree(None)).unwrap();
        let both = compose(&StrategyPipeline(vec![
            Strategy::MasteryThreshold(0.8),
            Strategy::MasteryThreshold(0.6),
        ]));
        assert_eq!(
            apply(&both, &chart, &map).unwrap(),
            apply(&Strategy::MasteryThreshold(0.6), &chart, &map).unwrap()
        );
    }

    #[test]
    fn max_attempts_rewrites_exit_rules() {
        let (chart, map) = compile(&tree(None)).unwrap();
        let s = Strategy::MaxAttempts {
            limit: 2,
            action: AttemptLimitAction::Skip,
        };
        let out = apply(&s, &chart, &map).unwrap();
        assert!(check_chart(&out).is_empty());
        let retry = out.transitions().iter().find(|t| t.id == "I1#retry").unwrap();
        assert_eq!(
            retry.guard,
            Guard::and([Guard::Failed, Guard::AttemptCount(Cmp::Lt, 2)])
        );
        let limit = out.transitions().iter().find(|t| t.id == "I1#attempt-limit").unwrap();
        assert_eq!(limit.priority, 0);
        assert_eq!(limit.target.as_str(), "I1#final");
        assert_eq!(
            limit.guard,
            Guard::and([Guard::Failed, Guard::AttemptCount(Cmp::Ge, 2)])
        );
        // reapplying replaces rather than stacks
        let again = apply(
            &Strategy::MaxAttempts {
                limit: 3,
                action: AttemptLimitAction::Remediate,
            },
            &out,
            &map,
        )
        .unwrap();
        let limits: Vec<_> = again
            .transitions()
            .iter()
            .filter(|t| t.id == "I1#attempt-limit")
            .collect();
        assert_eq!(limits.len(), 1);
        assert_eq!(limits[0].target.as_str(), "I1#entry");
        assert_eq!(limits[0].effects, vec![Effect::ResetAttempts("I1".into())]);
        // linear lock restores the compiled rules
        assert_eq!(apply(&Strategy::LinearLock, &again, &map).unwrap(), chart);
    }

    #[test]
    fn skip_ahead_adds_a_guarded_next() {
        let (chart, map) = compile(&tree(None)).unwrap();
        let out = apply(&Strategy::SkipAhead, &chart, &map).unwrap();
        let skip = out.transitions().iter().find(|t| t.id == "I2#skip").unwrap();
        assert_eq!(skip.source.as_str(), "I2#entry");
        assert_eq!(skip.target.as_str(), "I2#exit");
        assert_eq!(skip.event, Trigger::Next);
        assert_eq!(skip.guard, Guard::Passed);
        assert_eq!(out.transitions().len(), chart.transitions().len() + 2);
        assert_eq!(apply(&Strategy::SkipAhead, &out, &map).unwrap(), out);
        assert_eq!(apply(&Strategy::LinearLock, &out, &map).unwrap(), chart);
    }

    #[test]
    fn assessment_strategies_need_assessments() {
        let (chart, map) = compile(&plain_tree()).unwrap();
        let err = apply(&Strategy::MasteryThreshold(0.7), &chart, &map).unwrap_err();
        assert!(matches!(err, StrategyError::Inapplicable { .. }));
        let lenient = apply_with(&Strategy::MasteryThreshold(0.7), &chart, &map, Leniency::Warn).unwrap();
        assert_eq!(lenient.chart, chart);
        assert_eq!(lenient.warnings.len(), 1);
    }

    #[test]
    fn out_of_range_parameters_are_rejected() {
        let (chart, map) = compile(&tree(None)).unwrap();
        assert!(matches!(
            apply(&Strategy::MasteryThreshold(1.1), &chart, &map),
            Err(StrategyError::Invalid(_))
        ));
        let spec = StrategySpec {
            name: "max-attempts".into(),
            params: [("limit".to_string(), Value::from(0))].into(),
        };
        assert!(Strategy::from_spec(&spec).is_err());
    }

    #[test]
    fn config_documents() {
        let p = StrategyPipeline::from_json(
            r#"[{"name": "mastery-threshold", "params": {"threshold": 0.8}},
                {"name": "max-attempts", "params": {"limit": 2, "action": "skip"}},
                {"name": "skip-ahead"}]"#,
        )
        .unwrap();
        assert_eq!(
            p.0,
            vec![
                Strategy::MasteryThreshold(0.8),
                Strategy::MaxAttempts {
                    limit: 2,
                    action: AttemptLimitAction::Skip
                },
                Strategy::SkipAhead
            ]
        );
        let back = StrategyPipeline::from_specs(&p.to_specs()).unwrap();
        assert_eq!(back, p);
        assert!(StrategyPipeline::from_json(r#"[{"name": "teleport"}]"#).is_err());
        assert!(StrategyPipeline::from_json(r#"[{"name": "skip-ahead", "params": {"x": 1}}]"#).is_err());
        let nested = Strategy::from_spec(&compose(&p).to_spec()).unwrap();
        assert_eq!(nested, compose(&p));
    }
}
