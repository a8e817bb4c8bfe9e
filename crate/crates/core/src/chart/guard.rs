use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::{EvalContext, Outcome, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    pub fn as_str(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }

    pub fn parse(s: &str) -> Option<Cmp> {
        Some(match s {
            "<" => Cmp::Lt,
            "<=" => Cmp::Le,
            "=" => Cmp::Eq,
            ">=" => Cmp::Ge,
            ">" => Cmp::Gt,
            _ => return None,
        })
    }

    pub fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Gt => lhs > rhs,
        }
    }
}

/// Declarative transition guard over a closed set of atoms.
///
/// `HasNextSibling` and `AttemptCount` are evaluated for the guard's
/// subject, which the engine sets to the parent of the transition source.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Always,
    HasNextSibling,
    Passed,
    Failed,
    AttemptCount(Cmp, u32),
    LastScore(Cmp, f64),
    And(Vec<Guard>),
    Or(Vec<Guard>),
    Not(Box<Guard>),
}

/// What a guard can observe while a particular event is being processed.
#[derive(Debug, Clone, Copy)]
pub struct GuardEnv<'a> {
    pub ctx: &'a EvalContext,
    pub subject: Option<&'a StateId>,
    /// Score carried by the event under evaluation, shadowing `ctx.last_score`.
    pub score: Option<f64>,
    /// Outcome carried by the event under evaluation, shadowing `ctx.last_outcome`.
    pub outcome: Option<Outcome>,
}

impl Guard {
    pub fn and(guards: impl IntoIterator<Item = Guard>) -> Guard {
        Guard::And(guards.into_iter().collect())
    }

    pub fn or(guards: impl IntoIterator<Item = Guard>) -> Guard {
        Guard::Or(guards.into_iter().collect())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(g: Guard) -> Guard {
        Guard::Not(Box::new(g))
    }

    pub fn eval(&self, env: &GuardEnv<'_>) -> bool {
        match self {
            Guard::Always => true,
            Guard::HasNextSibling => env
                .subject
                .and_then(|s| env.ctx.has_next.get(s).copied())
                .unwrap_or(false),
            Guard::Passed => env.outcome.or(env.ctx.last_outcome) == Some(Outcome::Passed),
            Guard::Failed => env.outcome.or(env.ctx.last_outcome) == Some(Outcome::Failed),
            Guard::AttemptCount(cmp, n) => {
                let count = env
                    .subject
                    .and_then(|s| env.ctx.attempt_count.get(s).copied())
                    .unwrap_or(0);
                cmp.holds(count, *n)
            }
            Guard::LastScore(cmp, r) => match env.score.or(env.ctx.last_score) {
                Some(score) => cmp.holds(score, *r),
                None => false,
            },
            Guard::And(gs) => gs.iter().all(|g| g.eval(env)),
            Guard::Or(gs) => gs.iter().any(|g| g.eval(env)),
            Guard::Not(g) => !g.eval(env),
        }
    }

    /// Visits every atom in the tree, left to right.
    pub fn atoms(&self) -> Vec<&Guard> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Guard>) {
        match self {
            Guard::And(gs) | Guard::Or(gs) => gs.iter().for_each(|g| g.collect_atoms(out)),
            Guard::Not(g) => g.collect_atoms(out),
            atom => out.push(atom),
        }
    }

    /// Rebuilds the tree bottom-up, letting `f` replace any atom.
    pub fn map_atoms(&self, f: &mut impl FnMut(&Guard) -> Guard) -> Guard {
        match self {
            Guard::And(gs) => Guard::And(gs.iter().map(|g| g.map_atoms(f)).collect()),
            Guard::Or(gs) => Guard::Or(gs.iter().map(|g| g.map_atoms(f)).collect()),
            Guard::Not(g) => Guard::Not(Box::new(g.map_atoms(f))),
            atom => f(atom),
        }
    }

    fn op(&self) -> &'static str {
        match self {
            Guard::Always => "always",
            Guard::HasNextSibling => "has_next_sibling",
            Guard::Passed => "passed",
            Guard::Failed => "failed",
            Guard::AttemptCount(..) => "attempt_count",
            Guard::LastScore(..) => "last_score",
            Guard::And(_) => "and",
            Guard::Or(_) => "or",
            Guard::Not(_) => "not",
        }
    }

    pub fn to_value(&self) -> Value {
        let args: Vec<Value> = match self {
            Guard::Always | Guard::HasNextSibling | Guard::Passed | Guard::Failed => Vec::new(),
            Guard::AttemptCount(c, n) => vec![c.as_str().into(), (*n).into()],
            Guard::LastScore(c, r) => vec![c.as_str().into(), serde_json::json!(r)],
            Guard::And(gs) | Guard::Or(gs) => gs.iter().map(Guard::to_value).collect(),
            Guard::Not(g) => vec![g.to_value()],
        };
        let mut m = serde_json::Map::new();
        m.insert("op".into(), self.op().into());
        if !args.is_empty() || matches!(self, Guard::And(_) | Guard::Or(_)) {
            m.insert("args".into(), Value::Array(args));
        }
        Value::Object(m)
    }

    pub fn from_value(v: &Value) -> Result<Guard, String> {
        let m = v.as_object().ok_or("guard must be an object")?;
        if let Some(k) = m.keys().find(|k| *k != "op" && *k != "args") {
            return Err(format!("unknown guard field '{k}'"));
        }
        let op = m.get("op").and_then(Value::as_str).ok_or("guard needs a string 'op'")?;
        let empty = Vec::new();
        let args = match m.get("args") {
            None => &empty,
            Some(Value::Array(a)) => a,
            Some(_) => return Err("guard 'args' must be an array".into()),
        };
        let nullary = |g: Guard| {
            if args.is_empty() {
                Ok(g)
            } else {
                Err(format!("'{op}' takes no arguments"))
            }
        };
        let cmp_arg = || -> Result<Cmp, String> {
            args.first()
                .and_then(Value::as_str)
                .and_then(Cmp::parse)
                .ok_or_else(|| format!("'{op}' needs a comparison operator first"))
        };
        match op {
            "always" => nullary(Guard::Always),
            "has_next_sibling" => nullary(Guard::HasNextSibling),
            "passed" => nullary(Guard::Passed),
            "failed" => nullary(Guard::Failed),
            "attempt_count" => {
                let n = args
                    .get(1)
                    .and_then(Value::as_u64)
                    .and_then(|n| u32::try_from(n).ok())
                    .ok_or("attempt_count needs an integer bound")?;
                if args.len() != 2 {
                    return Err("attempt_count takes two arguments".into());
                }
                Ok(Guard::AttemptCount(cmp_arg()?, n))
            }
            "last_score" => {
                let r = args
                    .get(1)
                    .and_then(Value::as_f64)
                    .ok_or("last_score needs a numeric bound")?;
                if args.len() != 2 {
                    return Err("last_score takes two arguments".into());
                }
                Ok(Guard::LastScore(cmp_arg()?, r))
            }
            "and" | "or" => {
                let gs = args.iter().map(Guard::from_value).collect::<Result<Vec<_>, _>>()?;
                Ok(if op == "and" { Guard::And(gs) } else { Guard::Or(gs) })
            }
            "not" => match args.as_slice() {
                [g] => Ok(Guard::Not(Box::new(Guard::from_value(g)?))),
                _ => Err("'not' takes exactly one argument".into()),
            },
            other => Err(format!("unknown guard op '{other}'")),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, gs: &[Guard], sep: &str| -> fmt::Result {
            f.write_str("(")?;
            for (k, g) in gs.iter().enumerate() {
                if k > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{g}")?;
            }
            f.write_str(")")
        };
        match self {
            Guard::Always => f.write_str("true"),
            Guard::HasNextSibling => f.write_str("has_next"),
            Guard::Passed => f.write_str("passed"),
            Guard::Failed => f.write_str("failed"),
            Guard::AttemptCount(c, n) => write!(f, "attempts {} {n}", c.as_str()),
            Guard::LastScore(c, r) => write!(f, "score {} {r}", c.as_str()),
            Guard::And(gs) => join(f, gs, " && "),
            Guard::Or(gs) => join(f, gs, " || "),
            Guard::Not(g) => write!(f, "!{g}"),
        }
    }
}

impl Serialize for Guard {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Guard {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Guard::from_value(&v).map_err(D::Error::custom)
    }
}
