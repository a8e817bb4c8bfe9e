//! Reference implementations used to cross-check the library.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use seqchart_core::chart::{Event, Runner, StateId, StateKind, Statechart};
use seqchart_core::content::{ActivityTree, Node};

/// Scores that land on both sides of every mastery threshold in the tree.
pub fn probe_scores(tree: &ActivityTree) -> Vec<f64> {
    let mut out = vec![0.0, 1.0];
    for item in tree.items() {
        for u in &item.units {
            if u.is_assessment() {
                let m = u.effective_mastery();
                out.push(m);
                out.push((m - 0.05).max(0.0));
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

#[derive(PartialEq, Eq, Hash)]
struct Key {
    active: BTreeSet<StateId>,
    attempts: BTreeMap<StateId, u32>,
    score_bits: Option<u64>,
    outcome: String,
    pending: String,
    timed_out: BTreeSet<StateId>,
    ages: Vec<u64>,
}

fn key(chart: &Statechart, r: &Runner) -> Key {
    Key {
        active: r.config.active.clone(),
        attempts: r
            .ctx
            .attempt_count
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(s, &n)| (s.clone(), n))
            .collect(),
        score_bits: r.ctx.last_score.map(f64::to_bits),
        outcome: format!("{:?}", r.ctx.last_outcome),
        pending: format!("{:?}", r.pending),
        timed_out: r.config.timed_out.clone(),
        ages: r
            .config
            .active
            .iter()
            .filter(|s| chart.state(*s).and_then(|n| n.deadline).is_some())
            .map(|s| r.ctx.now - r.config.entered_at[s])
            .collect(),
    }
}

/// Every leaf that some sequence of at most `depth` actions reaches. An
/// action is one learner event (or the next queued internal event) followed
/// by a clock tick, or a bare tick while some deadline is running. Context
/// values stay concrete; states whose futures coincide are merged.
pub fn brute_force_leaves(chart: &Statechart, scores: &[f64], depth: usize) -> BTreeSet<StateId> {
    let start = Runner::new(chart).expect("well-formed chart");
    let mut leaves: BTreeSet<StateId> = BTreeSet::new();
    let mut seen: HashSet<Key> = HashSet::new();
    let mut layer: VecDeque<Runner> = VecDeque::from([start]);
    for d in 0..=depth {
        let mut next = VecDeque::new();
        for r in layer.drain(..) {
            if !seen.insert(key(chart, &r)) {
                continue;
            }
            leaves.extend(r.config.active.iter().filter(|s| chart.is_leaf(*s)).cloned());
            if d == depth {
                continue;
            }
            let mut events: Vec<Option<Event>> = Vec::new();
            if let Some(ev) = r.pending.front() {
                events.push(Some(ev.clone()));
            } else {
                events.extend([Event::Enter, Event::Next, Event::Back].map(Some));
                events.extend(scores.iter().map(|&s| Some(Event::submit(s))));
                let clock_running = r
                    .config
                    .active
                    .iter()
                    .any(|s| chart.state(s).and_then(|n| n.deadline).is_some() && !r.config.timed_out.contains(s));
                if clock_running {
                    events.push(None);
                }
            }
            for ev in events {
                let mut succ = r.clone();
                if let Some(ev) = ev {
                    if succ.pending.front() == Some(&ev) {
                        succ.pending.pop_front();
                    }
                    let fired = !succ.fire(chart, &ev).expect("engine step").fired.is_empty();
                    if !fired && r.pending.is_empty() {
                        continue;
                    }
                }
                succ.tick(chart).expect("clock");
                next.push_back(succ);
            }
        }
        layer = next;
    }
    leaves
}

/// Independent statement of the single-configuration property for AND-free
/// charts: the active set is one chain from the root down to one leaf.
pub fn is_single_path(chart: &Statechart, active: &BTreeSet<StateId>) -> Result<(), String> {
    if !active.contains(chart.root()) {
        return Err("root inactive".into());
    }
    let mut cur = chart.root().clone();
    let mut chain = 1;
    loop {
        let node = chart.state(&cur).ok_or("unknown state")?;
        match node.kind {
            StateKind::Atomic | StateKind::Final => break,
            _ => {
                let on: Vec<&StateId> = node.children.iter().filter(|c| active.contains(*c)).collect();
                if on.len() != 1 {
                    return Err(format!("'{cur}' has {} active children", on.len()));
                }
                cur = on[0].clone();
                chain += 1;
            }
        }
    }
    if chain != active.len() {
        return Err(format!("{} active states but a chain of {chain}", active.len()));
    }
    Ok(())
}

/// Step count of an always-pass run, derived from the tree: each item costs
/// its entry choice, one step per unit and its exit point; each non-root
/// node costs one notification to its parent when it finishes.
pub fn expected_always_pass_steps(tree: &ActivityTree) -> u64 {
    fn walk(n: &Node) -> u64 {
        match n {
            Node::Item(i) => 2 + i.units.len() as u64 + 1,
            Node::Cluster(c) => 1 + c.children.iter().map(walk).sum::<u64>(),
        }
    }
    tree.root().children.iter().map(walk).sum()
}
