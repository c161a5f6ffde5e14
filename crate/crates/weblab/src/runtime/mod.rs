//! The communication model: events, configurations, processing steps,
//! placeholder resolution, runs and strategies.
//!
//! A processing step delivers one waiting event to one process, applies the
//! process relation under explicit branch choices, replaces placeholders by
//! fresh nonces (in placeholder index order) and prepends the outputs to
//! the pool. Trigger events are an always-enabled synthetic supply per
//! address rather than a literal infinite pool.

pub mod choice;
pub mod explore;
pub mod run;
pub mod schedule;

pub use choice::{ChoiceCtx, ChoiceMode, RelationError};

use crate::term::{resolve_process_vars, Nonce, Term};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Index of a process in the compiled scenario's process table.
pub type ProcId = usize;

/// An addressed message in flight: `⟨receiver, sender, message⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub to: Term,
    pub from: Term,
    pub msg: Term,
}

impl Event {
    pub fn new(to: Term, from: Term, msg: Term) -> Event {
        Event { to, from, msg }
    }

    pub fn term(&self) -> Term {
        Term::seq(vec![self.to.clone(), self.from.clone(), self.msg.clone()])
    }

    pub fn from_term(t: &Term) -> Option<Event> {
        match t.as_seq() {
            Some([to, from, msg]) => Some(Event {
                to: to.clone(),
                from: from.clone(),
                msg: msg.clone(),
            }),
            _ => None,
        }
    }
}

/// Global snapshot: process states, the pool of waiting events, and the
/// position in the fresh-nonce sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub states: Vec<Term>,
    pub pool: Vec<Event>,
    pub next_nonce: u64,
}

impl Configuration {
    /// Canonical rendering with nonces renamed by first occurrence; equal
    /// strings mean equal configurations modulo nonce naming.
    pub fn canonical_key(&self) -> String {
        let all = Term::seq(
            self.states
                .iter()
                .cloned()
                .chain(self.pool.iter().map(Event::term))
                .collect(),
        );
        crate::term::canonicalize_nonces(&all).to_string()
    }
}

/// What a relation application produced: output events (possibly holding
/// `ν_i` placeholders) and the successor state. `state == None` is the
/// bare `stop`: no output already covered by `out`, no state change.
#[derive(Debug, Clone, Default)]
pub struct StepEffect {
    pub out: Vec<Event>,
    pub state: Option<Term>,
}

impl StepEffect {
    pub fn stop() -> StepEffect {
        StepEffect::default()
    }

    pub fn state(state: Term) -> StepEffect {
        StepEffect {
            out: vec![],
            state: Some(state),
        }
    }

    pub fn send(out: Vec<Event>, state: Term) -> StepEffect {
        StepEffect {
            out,
            state: Some(state),
        }
    }
}

/// A DY process relation: input event and state to outputs and new state,
/// with all nondeterminism routed through the [`ChoiceCtx`].
pub trait Relation {
    fn relate(
        &self,
        ev: &Event,
        state: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError>;
}

/// One serialized processing step of a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StepRecord {
    pub step: usize,
    pub process: String,
    pub event_in: String,
    pub events_out: Vec<String>,
    /// Resolved placeholders, `ν_i → n_k`.
    pub placeholders: Vec<(usize, u64)>,
    /// Branch labels taken, in choice order.
    pub branches: Vec<(String, String)>,
    /// Internal call markers (function name, rendered argument terms).
    pub markers: Vec<(String, Vec<String>)>,
}

/// Apply one processing step: run `relation` for process `pid` on `ev`,
/// resolve placeholders against the configuration's nonce supply, and
/// rewrite the pool. `pool_index` is `Some(i)` when `ev` came from the
/// pool and must be consumed, `None` for synthetic trigger events.
pub fn apply_step(
    config: &Configuration,
    pid: ProcId,
    process_name: &str,
    relation: &dyn Relation,
    ev: &Event,
    pool_index: Option<usize>,
    ctx: &mut ChoiceCtx,
    step_index: usize,
) -> Result<(Configuration, StepRecord), RelationError> {
    let effect = relation.relate(ev, &config.states[pid], ctx)?;

    // Fresh nonces for every placeholder in outputs and new state, in
    // placeholder index order.
    let mut vars: Vec<usize> = Vec::new();
    for e in &effect.out {
        vars.extend(e.term().process_vars());
    }
    if let Some(s) = &effect.state {
        vars.extend(s.process_vars());
    }
    vars.sort_unstable();
    vars.dedup();

    let mut subst = BTreeMap::new();
    let mut placeholders = Vec::new();
    let mut next = config.next_nonce;
    for v in vars {
        subst.insert(v, Term::Nonce(Nonce(next)));
        placeholders.push((v, next));
        next += 1;
    }

    let resolve = |t: &Term| resolve_process_vars(t, &subst);
    let out: Vec<Event> = effect
        .out
        .iter()
        .map(|e| Event::new(resolve(&e.to), resolve(&e.from), resolve(&e.msg)))
        .collect();
    let new_state = effect
        .state
        .as_ref()
        .map(|s| resolve(s))
        .unwrap_or_else(|| config.states[pid].clone());

    let mut states = config.states.clone();
    states[pid] = new_state;

    // E' = E_out · (E \ e_in)
    let mut pool: Vec<Event> = out.clone();
    for (i, e) in config.pool.iter().enumerate() {
        if pool_index != Some(i) {
            pool.push(e.clone());
        }
    }

    let record = StepRecord {
        step: step_index,
        process: process_name.to_string(),
        event_in: ev.term().to_string(),
        events_out: out.iter().map(|e| e.term().to_string()).collect(),
        placeholders,
        branches: ctx.taken_branches(),
        markers: ctx
            .take_markers()
            .into_iter()
            .map(|(name, args)| {
                (
                    name,
                    args.iter().map(|t| resolve(t).to_string()).collect(),
                )
            })
            .collect(),
    };

    Ok((
        Configuration {
            states,
            pool,
            next_nonce: next,
        },
        record,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Var;

    struct Echo;

    impl Relation for Echo {
        fn relate(
            &self,
            ev: &Event,
            state: &Term,
            _ctx: &mut ChoiceCtx,
        ) -> Result<StepEffect, RelationError> {
            // replies with a fresh nonce, remembers the last message
            let out = Event::new(
                ev.from.clone(),
                ev.to.clone(),
                Term::seq(vec![ev.msg.clone(), Term::Var(Var::Process(1))]),
            );
            Ok(StepEffect::send(
                vec![out],
                Term::seq(vec![state.clone(), ev.msg.clone(), Term::Var(Var::Process(1))]),
            ))
        }
    }

    #[test]
    fn step_resolves_placeholders_and_rewrites_pool() {
        let a = Term::addr("a");
        let b = Term::addr("b");
        let config = Configuration {
            states: vec![Term::empty()],
            pool: vec![
                Event::new(a.clone(), b.clone(), Term::str("one")),
                Event::new(a.clone(), b.clone(), Term::str("two")),
            ],
            next_nonce: 10,
        };
        let mut ctx = ChoiceCtx::free();
        let (next, record) = apply_step(
            &config,
            0,
            "echo",
            &Echo,
            &config.pool[0].clone(),
            Some(0),
            &mut ctx,
            0,
        )
        .unwrap();

        // output prepended, consumed event removed, order preserved
        assert_eq!(next.pool.len(), 2);
        assert_eq!(next.pool[1].msg, Term::str("two"));
        assert_eq!(next.next_nonce, 11);
        assert_eq!(record.placeholders, vec![(1, 10)]);
        // same nonce appears in state and output
        assert!(next.states[0].contains_nonce(Nonce(10)));
        assert!(next.pool[0].msg.contains_nonce(Nonce(10)));
        // frame rule holds trivially with one process
        assert_eq!(record.step, 0);
    }
}
