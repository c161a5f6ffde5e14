//! Explicit nondeterminism: every choice point inside a process relation is
//! named and resolved by the active strategy — a scripted assignment, a
//! seeded RNG, or the exhaustive enumerator's trail.

use crate::term::Term;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("no choice scripted for branch point '{point}'; valid labels: {valid:?}")]
    MissingChoice { point: String, valid: Vec<String> },
    #[error("invalid label '{label}' for branch point '{point}'; valid labels: {valid:?}")]
    InvalidChoice {
        point: String,
        label: String,
        valid: Vec<String>,
    },
    #[error("branch point '{point}' has no options")]
    EmptyChoice { point: String },
    #[error("attacker action failed: {0}")]
    Attacker(String),
    #[error("unknown script '{0}'")]
    UnknownScript(String),
}

/// Enumeration trail for exhaustive exploration: one `(chosen, total)` pair
/// per choice point hit during a single relation execution.
#[derive(Debug, Clone, Default)]
pub struct Trail {
    pub picks: Vec<(usize, usize)>,
}

impl Trail {
    /// Advance to the next combination, depth-first. Returns false when the
    /// whole choice tree has been enumerated.
    pub fn advance(&mut self) -> bool {
        while let Some((chosen, total)) = self.picks.pop() {
            if chosen + 1 < total {
                self.picks.push((chosen + 1, total));
                return true;
            }
        }
        false
    }
}

pub enum ChoiceMode<'a> {
    /// Branch labels assigned by a schedule, consumed in order of appearance.
    Scripted(&'a [(String, String)]),
    /// Uniform picks from a seeded RNG.
    Random(&'a mut ChaCha8Rng),
    /// Replaying / extending an enumeration trail.
    Enumerate(&'a mut Trail),
    /// Always take option 0; used where a relation is known deterministic.
    First,
}

pub struct ChoiceCtx<'a> {
    mode: ChoiceMode<'a>,
    position: usize,
    taken: Vec<(String, String)>,
    markers: Vec<(String, Vec<Term>)>,
    /// Scripted attacker actions for this step, if any.
    pub attacker_actions: Option<Vec<super::schedule::AttackerAction>>,
    /// Replay mode: exact events the attacker emitted in the recorded step.
    pub attacker_replay: Option<Vec<super::Event>>,
}

impl<'a> ChoiceCtx<'a> {
    pub fn new(mode: ChoiceMode<'a>) -> ChoiceCtx<'a> {
        ChoiceCtx {
            mode,
            position: 0,
            taken: Vec::new(),
            markers: Vec::new(),
            attacker_actions: None,
            attacker_replay: None,
        }
    }

    /// A context that always takes the first option.
    pub fn free() -> ChoiceCtx<'static> {
        ChoiceCtx::new(ChoiceMode::First)
    }

    pub fn scripted(choices: &'a [(String, String)]) -> ChoiceCtx<'a> {
        ChoiceCtx::new(ChoiceMode::Scripted(choices))
    }

    /// Resolve a named choice point over `labels`. Returns the selected
    /// index.
    pub fn choose(&mut self, point: &str, labels: &[String]) -> Result<usize, RelationError> {
        if labels.is_empty() {
            return Err(RelationError::EmptyChoice {
                point: point.to_string(),
            });
        }
        let picked = match &mut self.mode {
            ChoiceMode::Scripted(choices) => {
                // consume the next scripted entry for this point name
                let upcoming = choices
                    .iter()
                    .skip(self.position)
                    .find(|(name, _)| name == point);
                match upcoming {
                    Some((_, label)) => {
                        let idx = labels.iter().position(|l| l == label).ok_or_else(|| {
                            RelationError::InvalidChoice {
                                point: point.to_string(),
                                label: label.clone(),
                                valid: labels.to_vec(),
                            }
                        })?;
                        self.position += 1;
                        idx
                    }
                    None if labels.len() == 1 => 0,
                    None => {
                        return Err(RelationError::MissingChoice {
                            point: point.to_string(),
                            valid: labels.to_vec(),
                        })
                    }
                }
            }
            ChoiceMode::Random(rng) => rng.gen_range(0..labels.len()),
            ChoiceMode::Enumerate(trail) => {
                let pos = self.position;
                self.position += 1;
                if pos < trail.picks.len() {
                    trail.picks[pos].0.min(labels.len() - 1)
                } else {
                    trail.picks.push((0, labels.len()));
                    0
                }
            }
            ChoiceMode::First => 0,
        };
        self.taken.push((point.to_string(), labels[picked].clone()));
        Ok(picked)
    }

    /// Choose among terms, labeled by their canonical rendering.
    pub fn choose_term(&mut self, point: &str, options: &[Term]) -> Result<Term, RelationError> {
        let labels: Vec<String> = options.iter().map(|t| t.to_string()).collect();
        let i = self.choose(point, &labels)?;
        Ok(options[i].clone())
    }

    pub fn choose_bool(&mut self, point: &str) -> Result<bool, RelationError> {
        let i = self.choose(point, &["#t".to_string(), "#f".to_string()])?;
        Ok(i == 0)
    }

    /// Record an internal call marker for the trace.
    pub fn marker(&mut self, name: &str, args: Vec<Term>) {
        self.markers.push((name.to_string(), args));
    }

    pub fn taken_branches(&self) -> Vec<(String, String)> {
        self.taken.clone()
    }

    pub fn take_markers(&mut self) -> Vec<(String, Vec<Term>)> {
        std::mem::take(&mut self.markers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn scripted_choices_consume_in_order() {
        let script = vec![
            ("switch".to_string(), "urlbar".to_string()),
            ("newwindow".to_string(), "#f".to_string()),
        ];
        let mut ctx = ChoiceCtx::scripted(&script);
        let i = ctx
            .choose("switch", &labels(&["script", "urlbar", "reload"]))
            .unwrap();
        assert_eq!(i, 1);
        assert!(!ctx.choose_bool("newwindow").unwrap());
        // singleton choice points do not need scripting
        assert_eq!(ctx.choose("only", &labels(&["x"])).unwrap(), 0);
        // a genuinely open point without a script entry is an error
        let err = ctx.choose("open", &labels(&["a", "b"])).unwrap_err();
        assert!(matches!(err, RelationError::MissingChoice { .. }));
    }

    #[test]
    fn invalid_label_reports_valid_set() {
        let script = vec![("p".to_string(), "zzz".to_string())];
        let mut ctx = ChoiceCtx::scripted(&script);
        match ctx.choose("p", &labels(&["a", "b"])) {
            Err(RelationError::InvalidChoice { valid, .. }) => {
                assert_eq!(valid, labels(&["a", "b"]))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trail_enumerates_depth_first() {
        // two choice points with 2 and 3 options: 6 combinations
        let mut trail = Trail::default();
        let mut seen = Vec::new();
        loop {
            let mut ctx = ChoiceCtx::new(ChoiceMode::Enumerate(&mut trail));
            let a = ctx.choose("a", &labels(&["0", "1"])).unwrap();
            let b = ctx.choose("b", &labels(&["0", "1", "2"])).unwrap();
            seen.push((a, b));
            if !trail.advance() {
                break;
            }
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], (0, 0));
        assert!(seen.contains(&(1, 2)));
    }
}
