//! Live learner sessions over compiled courses, persisted as append-only
//! event logs and rebuilt by replay.
//!
//! Every engine step a session takes, including the routing steps the
//! service performs on the learner's behalf, is one `step` line in the
//! session's log. Replay re-fires those events in order, so the log alone
//! determines the session.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use seqchart_core::chart::{EngineError, Event, EventKind, Outcome, Runner, StateId, Statechart};
use seqchart_core::compiler::{compile, CompilationMap};
use seqchart_core::content::{parse_manifest, ActivityTree, NodeRef, UnitKind};
use seqchart_core::sim::TraceRecord;
use seqchart_core::strategy::{apply, StrategyError, StrategyPipeline, StrategySpec};

/// Upper bound on routing steps taken after one learner event.
const SETTLE_LIMIT: usize = 10_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown course '{0}'")]
    UnknownCourse(String),
    #[error("course '{id}' cannot be loaded: {reason}")]
    BadCourse { id: String, reason: String },
    #[error(transparent)]
    InvalidStrategy(#[from] StrategyError),
    #[error("session '{0}' not found")]
    SessionNotFound(String),
    #[error("session '{id}' is {status}")]
    SessionClosed { id: String, status: SessionStatus },
    #[error("event '{event}' is not enabled")]
    EventNotEnabled {
        event: ExternalKind,
        available: Vec<ExternalKind>,
    },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("storage error: {0}")]
    Storage(#[from] io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Completed,
    Abandoned,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SessionStatus::Active => "active",
            SessionStatus::Completed => "completed",
            SessionStatus::Abandoned => "abandoned",
        })
    }
}

/// Events a learner can send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExternalKind {
    Next,
    Back,
    Submit,
}

impl std::fmt::Display for ExternalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExternalKind::Next => "next",
            ExternalKind::Back => "back",
            ExternalKind::Submit => "submit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExternalEvent {
    Next,
    Back,
    Submit { score: f64 },
}

impl ExternalEvent {
    pub fn kind(&self) -> ExternalKind {
        match self {
            ExternalEvent::Next => ExternalKind::Next,
            ExternalEvent::Back => ExternalKind::Back,
            ExternalEvent::Submit { .. } => ExternalKind::Submit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitView {
    pub id: String,
    pub kind: UnitKind,
    pub payload_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mastery_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub course_id: String,
    pub status: SessionStatus,
    /// Active leaf state.
    pub state: StateId,
    /// Content unit the learner is on, if any.
    pub unit: Option<UnitView>,
    /// Tree ids of the active clusters and item, curriculum first.
    pub breadcrumbs: Vec<String>,
    pub available_events: Vec<ExternalKind>,
    /// Attempts at the current item.
    pub attempts: u32,
    pub last_outcome: Option<Outcome>,
    pub last_score: Option<f64>,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseSummary {
    pub id: String,
    pub items: usize,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub session_id: String,
    pub file: PathBuf,
    /// 1-based log line that could not be replayed.
    pub line: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub recovered: Vec<String>,
    pub quarantined: Vec<Quarantined>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogEntry {
    Created {
        session_id: String,
        course_id: String,
        #[serde(default)]
        strategy: Vec<StrategySpec>,
    },
    Step(TraceRecord),
    Abandoned,
}

struct Course {
    id: String,
    tree: ActivityTree,
    chart: Arc<Statechart>,
    map: CompilationMap,
}

struct Session {
    id: String,
    course: Arc<Course>,
    chart: Arc<Statechart>,
    runner: Runner,
    records: Vec<TraceRecord>,
    status: SessionStatus,
    log: Option<File>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn write_entry(log: &mut Option<File>, entry: &LogEntry) -> io::Result<()> {
    if let Some(f) = log {
        let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.flush()?;
    }
    Ok(())
}

impl Session {
    fn leaf(&self) -> StateId {
        self.runner
            .config
            .leaves(&self.chart)
            .into_iter()
            .next()
            .unwrap_or_else(|| self.chart.root().clone())
    }

    /// Fires `event`, ticks the clock and logs the step. Nothing changes
    /// unless the log write succeeds.
    fn apply(&mut self, event: Event) -> Result<(), ServiceError> {
        let mut next = self.runner.clone();
        let path = next.config.path(&self.chart);
        let tick = next.ctx.now;
        let result = next.fire(&self.chart, &event)?;
        next.tick(&self.chart)?;
        let record = TraceRecord::new(tick, path, &event, &result);
        write_entry(&mut self.log, &LogEntry::Step(record.clone()))?;
        self.runner = next;
        self.records.push(record);
        Ok(())
    }

    /// Takes the routing steps a learner never decides: queued
    /// notifications, entry choices and exit points. Rests on content, on
    /// the exit point of an item without units, or at completion.
    fn settle(&mut self) -> Result<(), ServiceError> {
        for _ in 0..SETTLE_LIMIT {
            if self.runner.is_complete(&self.chart) {
                self.status = SessionStatus::Completed;
                return Ok(());
            }
            let event = match self.runner.pending.pop_front() {
                Some(ev) => {
                    if !self.runner.is_enabled(&self.chart, &ev) {
                        continue;
                    }
                    ev
                }
                None => {
                    let leaf = self.leaf();
                    let map = &self.course.map;
                    let routing = if map.item_of_entry(leaf.as_str()).is_some() {
                        true
                    } else if let Some(item) = map.item_of_exit(leaf.as_str()) {
                        !matches!(self.course.tree.get(item), Some(NodeRef::Item(i)) if i.units.is_empty())
                    } else {
                        false
                    };
                    if !routing || !self.runner.is_enabled(&self.chart, &Event::Enter) {
                        return Ok(());
                    }
                    Event::Enter
                }
            };
            self.apply(event)?;
        }
        Ok(())
    }

    fn available(&self) -> Vec<ExternalKind> {
        if self.status != SessionStatus::Active {
            return Vec::new();
        }
        let mut out: Vec<ExternalKind> = self
            .runner
            .available(&self.chart)
            .into_iter()
            .filter_map(|k| match k {
                EventKind::Next | EventKind::Enter => Some(ExternalKind::Next),
                EventKind::Back => Some(ExternalKind::Back),
                EventKind::Submit => Some(ExternalKind::Submit),
                EventKind::AssessmentResult => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn translate(&self, ev: &ExternalEvent) -> Result<Event, ServiceError> {
        let not_enabled = || ServiceError::EventNotEnabled {
            event: ev.kind(),
            available: self.available(),
        };
        let candidates = match *ev {
            ExternalEvent::Next => vec![Event::Next, Event::Enter],
            ExternalEvent::Back => vec![Event::Back],
            ExternalEvent::Submit { score } => {
                if !(0.0..=1.0).contains(&score) {
                    return Err(ServiceError::InvalidEvent(format!("score {score} is outside [0, 1]")));
                }
                vec![Event::submit(score)]
            }
        };
        candidates
            .into_iter()
            .find(|e| self.runner.is_enabled(&self.chart, e))
            .ok_or_else(not_enabled)
    }

    fn view(&self) -> SessionView {
        let chart = &self.chart;
        let map = &self.course.map;
        let leaf = self.leaf();
        let path = self.runner.config.path(chart);
        let breadcrumbs: Vec<String> = path
            .iter()
            .filter_map(|s| map.node_of_state(s.as_str()).map(str::to_owned))
            .collect();
        let unit = map
            .unit_of_state(leaf.as_str())
            .and_then(|u| match self.course.tree.get(u) {
                Some(NodeRef::Unit(_, unit)) => Some(UnitView {
                    id: unit.id.clone(),
                    kind: unit.kind,
                    payload_ref: unit.payload_ref.clone(),
                    mastery_score: unit.is_assessment().then(|| unit.effective_mastery()),
                    time_limit: unit.time_limit,
                }),
                _ => None,
            });
        let attempts = path
            .iter()
            .rev()
            .find(|s| map.node_of_state(s.as_str()).is_some_and(|n| map.is_item(n)))
            .map(|s| self.runner.ctx.attempts(s))
            .unwrap_or(0);
        SessionView {
            session_id: self.id.clone(),
            course_id: self.course.id.clone(),
            status: self.status,
            state: leaf,
            unit,
            breadcrumbs,
            available_events: self.available(),
            attempts,
            last_outcome: self.runner.ctx.last_outcome,
            last_score: self.runner.ctx.last_score,
            tick: self.runner.ctx.now,
        }
    }
}

/// Hosts sessions for the courses found in a content directory
/// (`<course_id>.json` manifests).
pub struct SessionService {
    content_dir: PathBuf,
    log_dir: Option<PathBuf>,
    courses: RwLock<HashMap<String, Arc<Course>>>,
    charts: RwLock<HashMap<(String, String), Arc<Statechart>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn valid_course_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl SessionService {
    /// Opens the service. With a log directory, existing logs are replayed.
    pub fn open(
        content_dir: impl Into<PathBuf>,
        log_dir: Option<PathBuf>,
    ) -> Result<(Self, RecoveryReport), ServiceError> {
        let service = SessionService {
            content_dir: content_dir.into(),
            log_dir,
            courses: RwLock::default(),
            charts: RwLock::default(),
            sessions: RwLock::default(),
        };
        let report = match &service.log_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                service.recover()?
            }
            None => RecoveryReport::default(),
        };
        Ok((service, report))
    }

    pub fn courses(&self) -> Result<Vec<CourseSummary>, ServiceError> {
        let mut ids: Vec<String> = fs::read_dir(&self.content_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(str::to_owned))?
            })
            .filter(|id| valid_course_id(id))
            .collect();
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            // unreadable manifests are left out of the listing
            if let Ok(c) = self.course(&id) {
                out.push(CourseSummary {
                    id,
                    items: c.tree.items().len(),
                    units: c.tree.unit_count(),
                });
            }
        }
        Ok(out)
    }

    fn course(&self, id: &str) -> Result<Arc<Course>, ServiceError> {
        if let Some(c) = self.courses.read().unwrap_or_else(|p| p.into_inner()).get(id) {
            return Ok(c.clone());
        }
        if !valid_course_id(id) {
            return Err(ServiceError::UnknownCourse(id.to_string()));
        }
        let path = self.content_dir.join(format!("{id}.json"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ServiceError::UnknownCourse(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let bad = |reason: String| ServiceError::BadCourse {
            id: id.to_string(),
            reason,
        };
        let tree = parse_manifest(&text).map_err(|e| bad(e.to_string()))?;
        let (chart, map) = compile(&tree).map_err(|e| bad(e.to_string()))?;
        let course = Arc::new(Course {
            id: id.to_string(),
            tree,
            chart: Arc::new(chart),
            map,
        });
        let mut cache = self.courses.write().unwrap_or_else(|p| p.into_inner());
        Ok(cache.entry(id.to_string()).or_insert(course).clone())
    }

    fn chart_for(&self, course: &Course, strategy: &[StrategySpec]) -> Result<Arc<Statechart>, ServiceError> {
        if strategy.is_empty() {
            return Ok(course.chart.clone());
        }
        let key = (
            course.id.clone(),
            serde_json::to_string(strategy).map_err(io::Error::other)?,
        );
        if let Some(c) = self.charts.read().unwrap_or_else(|p| p.into_inner()).get(&key) {
            return Ok(c.clone());
        }
        let pipeline = StrategyPipeline::from_specs(strategy)?;
        let mut chart = (*course.chart).clone();
        for s in &pipeline.0 {
            chart = apply(s, &chart, &course.map)?;
        }
        let mut cache = self.charts.write().unwrap_or_else(|p| p.into_inner());
        Ok(cache.entry(key).or_insert_with(|| Arc::new(chart)).clone())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| d.join(format!("{session_id}.jsonl")))
    }

    pub fn create_session(&self, course_id: &str, strategy: Vec<StrategySpec>) -> Result<SessionView, ServiceError> {
        let course = self.course(course_id)?;
        let chart = self.chart_for(&course, &strategy)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut log = match self.log_path(&id) {
            Some(p) => Some(OpenOptions::new().create_new(true).append(true).open(p)?),
            None => None,
        };
        write_entry(
            &mut log,
            &LogEntry::Created {
                session_id: id.clone(),
                course_id: course_id.to_string(),
                strategy,
            },
        )?;
        let mut session = Session {
            id: id.clone(),
            runner: Runner::new(&chart)?,
            course,
            chart,
            records: Vec::new(),
            status: SessionStatus::Active,
            log,
        };
        session.settle()?;
        let view = session.view();
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let s = self.session(id)?;
        let view = lock(&s).view();
        Ok(view)
    }

    pub fn post_event(&self, id: &str, event: ExternalEvent) -> Result<SessionView, ServiceError> {
        let s = self.session(id)?;
        let mut s = lock(&s);
        if s.status != SessionStatus::Active {
            return Err(ServiceError::SessionClosed {
                id: id.to_string(),
                status: s.status,
            });
        }
        let event = s.translate(&event)?;
        s.apply(event)?;
        s.settle()?;
        Ok(s.view())
    }

    pub fn abandon(&self, id: &str) -> Result<SessionView, ServiceError> {
        let s = self.session(id)?;
        let mut s = lock(&s);
        if s.status == SessionStatus::Active {
            write_entry(&mut s.log, &LogEntry::Abandoned)?;
            s.status = SessionStatus::Abandoned;
        }
        Ok(s.view())
    }

    /// The session's steps as line-delimited JSON.
    pub fn trace(&self, id: &str) -> Result<String, ServiceError> {
        let s = self.session(id)?;
        let s = lock(&s);
        let mut out = String::new();
        for r in &s.records {
            out.push_str(&serde_json::to_string(r).map_err(io::Error::other)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Current run state, for consistency checks.
    pub fn runner(&self, id: &str) -> Result<Runner, ServiceError> {
        let s = self.session(id)?;
        let r = lock(&s).runner.clone();
        Ok(r)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Replays every `*.jsonl` log in the log directory. Logs that cannot
    /// be replayed move to `quarantine/`; the rest become live sessions.
    pub fn recover(&self) -> Result<RecoveryReport, ServiceError> {
        let mut report = RecoveryReport::default();
        let Some(dir) = &self.log_dir else {
            return Ok(report);
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for path in files {
            let fallback_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            match self.replay(&path) {
                Ok(session) => {
                    report.recovered.push(session.id.clone());
                    self.sessions
                        .write()
                        .unwrap_or_else(|p| p.into_inner())
                        .insert(session.id.clone(), Arc::new(Mutex::new(session)));
                }
                Err((line, reason)) => {
                    let qdir = dir.join("quarantine");
                    fs::create_dir_all(&qdir)?;
                    let dest = qdir.join(path.file_name().unwrap_or_default());
                    fs::rename(&path, &dest)?;
                    report.quarantined.push(Quarantined {
                        session_id: fallback_id,
                        file: dest,
                        line,
                        reason,
                    });
                }
            }
        }
        Ok(report)
    }

    fn replay(&self, path: &Path) -> Result<Session, (Option<usize>, String)> {
        let text = fs::read_to_string(path).map_err(|e| (None, e.to_string()))?;
        let complete_len = text.rfind('\n').map(|k| k + 1).unwrap_or(0);
        let (body, tail) = text.split_at(complete_len);
        let mut entries: Vec<(usize, LogEntry)> = Vec::new();
        for (k, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(line).map_err(|e| (Some(k + 1), format!("unreadable entry: {e}")))?;
            entries.push((k + 1, entry));
        }
        // a partial last line is what a crash mid-write leaves behind
        let tail_line = body.lines().count() + 1;
        if !tail.trim().is_empty() {
            match serde_json::from_str::<LogEntry>(tail) {
                Ok(entry) => entries.push((tail_line, entry)),
                Err(_) => {
                    let f = OpenOptions::new()
                        .write(true)
                        .open(path)
                        .map_err(|e| (None, e.to_string()))?;
                    f.set_len(complete_len as u64).map_err(|e| (None, e.to_string()))?;
                }
            }
        }

        let mut it = entries.into_iter();
        let (session_id, course_id, strategy) = match it.next() {
            Some((
                _,
                LogEntry::Created {
                    session_id,
                    course_id,
                    strategy,
                },
            )) => (session_id, course_id, strategy),
            _ => return Err((Some(1), "log does not start with a created entry".into())),
        };
        let course = self.course(&course_id).map_err(|e| (Some(1), e.to_string()))?;
        let chart = self
            .chart_for(&course, &strategy)
            .map_err(|e| (Some(1), e.to_string()))?;
        let mut runner = Runner::new(&chart).map_err(|e| (Some(1), e.to_string()))?;
        let mut records = Vec::new();
        let mut status = SessionStatus::Active;
        for (line, entry) in it {
            match entry {
                LogEntry::Created { .. } => return Err((Some(line), "second created entry".into())),
                LogEntry::Abandoned => status = SessionStatus::Abandoned,
                LogEntry::Step(record) => {
                    if status != SessionStatus::Active {
                        return Err((Some(line), format!("step after the session was {status}")));
                    }
                    if runner.pending.front() == Some(&record.event) {
                        runner.pending.pop_front();
                    }
                    if !runner.is_enabled(&chart, &record.event) {
                        return Err((Some(line), format!("event '{}' is not enabled here", record.event)));
                    }
                    let path = runner.config.path(&chart);
                    let tick = runner.ctx.now;
                    let result = runner
                        .fire(&chart, &record.event)
                        .map_err(|e| (Some(line), e.to_string()))?;
                    let replayed = TraceRecord::new(tick, path, &record.event, &result);
                    if replayed != record {
                        return Err((Some(line), "replayed step differs from the logged one".into()));
                    }
                    runner.tick(&chart).map_err(|e| (Some(line), e.to_string()))?;
                    records.push(record);
                    if runner.is_complete(&chart) {
                        status = SessionStatus::Completed;
                    }
                }
            }
        }
        let log = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| (None, e.to_string()))?;
        let mut session = Session {
            id: session_id,
            course,
            chart,
            runner,
            records,
            status,
            log: Some(log),
        };
        if session.status == SessionStatus::Active {
            session.settle().map_err(|e| (None, e.to_string()))?;
        }
        Ok(session)
    }
}
