//! Bounded Dolev-Yao derivability.
//!
//! `m ∈ d_V(M)` holds when `m` can be assembled from the knowledge set `M`
//! by decomposition (projections, decryption with derivable keys, message
//! extraction from signatures) and composition (sequences and any public
//! function symbol applied to derivable arguments). Constants are public;
//! nonces are derivable only when learnt.
//!
//! Composition recursion is capped by a configurable depth. Exhausting the
//! cap yields [`Derivability::Unknown`], never a silent `false`.

use crate::term::{dict, normalize, Func, Term, Var};

pub const DEFAULT_DEPTH: usize = 6;

/// Environment variable overriding the default composition depth.
pub const DEPTH_ENV_VAR: &str = "WEBLAB_DERIVE_DEPTH";

pub fn default_depth() -> usize {
    std::env::var(DEPTH_ENV_VAR)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_DEPTH)
}

/// A composition recipe: evaluating it against the analyzed knowledge
/// reproduces the derived term, which makes attacker actions auditable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipe {
    /// Reference to an element of the analyzed knowledge.
    Known(usize),
    /// A public constant used verbatim.
    Const(Term),
    /// A placeholder from the allowed set `V`.
    Placeholder(Var),
    Seq(Vec<Recipe>),
    App(Func, Vec<Recipe>),
}

impl Recipe {
    /// Rebuild the term this recipe denotes.
    pub fn apply(&self, knowledge: &[Term]) -> Term {
        match self {
            Recipe::Known(i) => knowledge[*i].clone(),
            Recipe::Const(t) => t.clone(),
            Recipe::Placeholder(v) => Term::Var(*v),
            Recipe::Seq(rs) => Term::seq(rs.iter().map(|r| r.apply(knowledge)).collect()),
            Recipe::App(f, rs) => Term::app(
                *f,
                rs.iter().map(|r| r.apply(knowledge)).collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Derivability {
    Derivable(Recipe),
    NotDerivable,
    /// The composition bound was exhausted before a decision was reached.
    Unknown { depth: usize },
}

impl Derivability {
    pub fn is_derivable(&self) -> bool {
        matches!(self, Derivability::Derivable(_))
    }
}

/// The knowledge set saturated under decomposition. Each element carries
/// the recipe that produced it from the original knowledge.
#[derive(Debug, Clone)]
pub struct Analyzed {
    terms: Vec<Term>,
    recipes: Vec<Recipe>,
    depth: usize,
}

impl Analyzed {
    /// Saturate `knowledge` under projections, decryption and signature
    /// payload extraction. Key-derivability subqueries use `depth`.
    pub fn new(knowledge: &[Term], depth: usize) -> Analyzed {
        let mut a = Analyzed {
            terms: Vec::new(),
            recipes: Vec::new(),
            depth,
        };
        for t in knowledge {
            let i = a.terms.len();
            a.insert(normalize(t), Recipe::Known(i));
        }
        // The original indices must stay stable for recipe references, so
        // decomposition products are appended after all roots.
        let mut changed = true;
        while changed {
            changed = false;
            let snapshot = a.terms.len();
            for i in 0..snapshot {
                let t = a.terms[i].clone();
                let r = a.recipes[i].clone();
                match &t {
                    Term::Seq(items) => {
                        for (j, item) in items.iter().enumerate() {
                            if !a.contains(item) {
                                a.insert(
                                    item.clone(),
                                    Recipe::App(Func::Proj(j + 1), vec![r.clone()]),
                                );
                                changed = true;
                            }
                        }
                    }
                    Term::App(Func::EncA, args) => {
                        if let Term::App(Func::Pub, keys) = &args[1] {
                            if !a.contains(&args[0]) {
                                if let Derivability::Derivable(kr) =
                                    a.derive_bounded(&keys[0], &[], a.depth)
                                {
                                    a.insert(
                                        args[0].clone(),
                                        Recipe::App(Func::DecA, vec![r.clone(), kr]),
                                    );
                                    changed = true;
                                }
                            }
                        }
                    }
                    Term::App(Func::EncS, args) => {
                        if !a.contains(&args[0]) {
                            if let Derivability::Derivable(kr) =
                                a.derive_bounded(&args[1], &[], a.depth)
                            {
                                a.insert(
                                    args[0].clone(),
                                    Recipe::App(Func::DecS, vec![r.clone(), kr]),
                                );
                                changed = true;
                            }
                        }
                    }
                    Term::App(Func::Sig, args) => {
                        if !a.contains(&args[0]) {
                            a.insert(args[0].clone(), Recipe::App(Func::ExtractMsg, vec![r.clone()]));
                            changed = true;
                        }
                    }
                    _ => {}
                }
            }
        }
        a
    }

    fn insert(&mut self, t: Term, r: Recipe) {
        if !self.contains(&t) {
            self.terms.push(t);
            self.recipes.push(r);
        }
    }

    fn contains(&self, t: &Term) -> bool {
        self.terms.iter().any(|x| x == t)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    fn position(&self, t: &Term) -> Option<usize> {
        self.terms.iter().position(|x| x == t)
    }

    /// Composition search for a normalized target.
    fn derive_bounded(&self, target: &Term, placeholders: &[Var], depth: usize) -> Derivability {
        if let Some(i) = self.position(target) {
            return Derivability::Derivable(self.recipes[i].clone());
        }
        if depth == 0 {
            // Could still be composable; the caller's bound is exhausted.
            return match target {
                Term::Nonce(_) => Derivability::NotDerivable,
                _ => Derivability::Unknown { depth: 0 },
            };
        }
        match target {
            Term::Str(_) | Term::Addr(_) | Term::True | Term::Bot | Term::Undef => {
                Derivability::Derivable(Recipe::Const(target.clone()))
            }
            Term::Var(v) if placeholders.contains(v) => {
                Derivability::Derivable(Recipe::Placeholder(*v))
            }
            Term::Var(_) => Derivability::NotDerivable,
            Term::Nonce(_) => Derivability::NotDerivable,
            Term::Seq(items) => {
                let mut parts = Vec::with_capacity(items.len());
                let mut unknown = false;
                for item in items.iter() {
                    match self.derive_bounded(item, placeholders, depth - 1) {
                        Derivability::Derivable(r) => parts.push(r),
                        Derivability::NotDerivable => return Derivability::NotDerivable,
                        Derivability::Unknown { .. } => unknown = true,
                    }
                }
                if unknown {
                    Derivability::Unknown { depth }
                } else {
                    Derivability::Derivable(Recipe::Seq(parts))
                }
            }
            Term::App(f, args) => {
                let mut parts = Vec::with_capacity(args.len());
                let mut unknown = false;
                for arg in args.iter() {
                    match self.derive_bounded(arg, placeholders, depth - 1) {
                        Derivability::Derivable(r) => parts.push(r),
                        Derivability::NotDerivable => return Derivability::NotDerivable,
                        Derivability::Unknown { .. } => unknown = true,
                    }
                }
                if unknown {
                    Derivability::Unknown { depth }
                } else {
                    Derivability::Derivable(Recipe::App(*f, parts))
                }
            }
        }
    }

    /// Decide `target ∈ d_V(knowledge)` up to the analysis' depth bound.
    pub fn derive(&self, target: &Term, placeholders: &[Var]) -> Derivability {
        self.derive_bounded(&normalize(target), placeholders, self.depth)
    }

    /// Search the analyzed knowledge for a dictionary value stored under a
    /// string key, anywhere inside any known term. Used by scripted
    /// attacker actions to pick up codes, tokens and cookies they have seen.
    pub fn find_dict_values(&self, key: &str) -> Vec<Term> {
        let key = Term::str(key);
        let mut out: Vec<Term> = Vec::new();
        for t in &self.terms {
            collect_dict_values(t, &key, &mut out);
        }
        out
    }
}

fn collect_dict_values(t: &Term, key: &Term, out: &mut Vec<Term>) {
    if let Some(items) = t.as_seq() {
        if let [k, v] = items {
            if k == key && !out.contains(v) {
                out.push(v.clone());
            }
        }
        for item in items {
            collect_dict_values(item, key, out);
        }
    } else if let Term::App(_, args) = t {
        for a in args.iter() {
            collect_dict_values(a, key, out);
        }
    }
}

/// One-shot derivability query.
pub fn derivable(knowledge: &[Term], target: &Term, placeholders: &[Var], depth: usize) -> Derivability {
    Analyzed::new(knowledge, depth).derive(target, placeholders)
}

/// Convenience: is `target` in the attacker closure of `knowledge`?
pub fn is_derivable(knowledge: &[Term], target: &Term, depth: usize) -> bool {
    derivable(knowledge, target, &[], depth).is_derivable()
}

/// Everything a dictionary-shaped subterm can tell us; handy in tests.
pub fn knows_dict_value(knowledge: &[Term], key: &str, value: &Term, depth: usize) -> bool {
    let analyzed = Analyzed::new(knowledge, depth);
    analyzed
        .find_dict_values(key)
        .iter()
        .any(|v| v == value)
        || analyzed.derive(value, &[]).is_derivable()
}

// Keep dict import used (attacker templates live elsewhere).
#[allow(unused_imports)]
use dict as _dict_ops;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Nonce;

    fn n(i: u64) -> Term {
        Term::Nonce(Nonce(i))
    }

    #[test]
    fn paper_example() {
        // a ∈ d({enc_a(⟨a,b,c⟩, pub(k)), k})
        let a = Term::str("a");
        let abc = Term::seq(vec![a.clone(), Term::str("b"), Term::str("c")]);
        let knowledge = vec![Term::enc_a(abc, Term::pubkey(n(1))), n(1)];
        // the target here is a string constant and trivially composable, so
        // check the nonce variant too
        let secret = Term::seq(vec![n(7), n(8)]);
        let knowledge2 = vec![Term::enc_a(secret, Term::pubkey(n(1))), n(1)];
        let d = derivable(&knowledge, &a, &[], DEFAULT_DEPTH);
        assert!(d.is_derivable());
        let d2 = derivable(&knowledge2, &n(7), &[], DEFAULT_DEPTH);
        match d2 {
            Derivability::Derivable(r) => {
                let analyzed = Analyzed::new(&knowledge2, DEFAULT_DEPTH);
                assert_eq!(normalize(&r.apply(analyzed.terms())), n(7));
            }
            other => panic!("expected derivable, got {other:?}"),
        }
    }

    #[test]
    fn private_key_stays_private() {
        let knowledge = vec![Term::pubkey(n(1))];
        assert_eq!(
            derivable(&knowledge, &n(1), &[], DEFAULT_DEPTH),
            Derivability::NotDerivable
        );
    }

    #[test]
    fn pairing_closure() {
        let knowledge = vec![n(1), n(2)];
        let target = Term::seq(vec![n(1), Term::seq(vec![n(2), n(1)])]);
        assert!(derivable(&knowledge, &target, &[], DEFAULT_DEPTH).is_derivable());
    }

    #[test]
    fn cannot_sign_without_key() {
        let knowledge = vec![Term::pubkey(n(1)), Term::str("m")];
        let target = Term::sig(Term::str("m"), n(1));
        assert_eq!(
            derivable(&knowledge, &target, &[], DEFAULT_DEPTH),
            Derivability::NotDerivable
        );
    }

    #[test]
    fn signature_payload_leaks() {
        let knowledge = vec![Term::sig(n(5), n(1))];
        assert!(derivable(&knowledge, &n(5), &[], DEFAULT_DEPTH).is_derivable());
    }

    #[test]
    fn symmetric_decryption_requires_key() {
        let body = Term::seq(vec![n(3), n(4)]);
        let knowledge = vec![Term::enc_s(body, n(2))];
        assert_eq!(
            derivable(&knowledge, &n(3), &[], DEFAULT_DEPTH),
            Derivability::NotDerivable
        );
        let knowledge2 = vec![knowledge[0].clone(), n(2)];
        assert!(derivable(&knowledge2, &n(3), &[], DEFAULT_DEPTH).is_derivable());
    }

    #[test]
    fn placeholders_are_derivable_when_allowed() {
        let v = Var::Process(1);
        assert!(derivable(&[], &Term::Var(v), &[v], DEFAULT_DEPTH).is_derivable());
        assert_eq!(
            derivable(&[], &Term::Var(v), &[], DEFAULT_DEPTH),
            Derivability::NotDerivable
        );
    }

    #[test]
    fn monotone_in_knowledge() {
        let target = Term::seq(vec![n(1), Term::str("x")]);
        let small = vec![n(1)];
        let large = vec![n(1), n(9), Term::str("zzz")];
        assert!(derivable(&small, &target, &[], DEFAULT_DEPTH).is_derivable());
        assert!(derivable(&large, &target, &[], DEFAULT_DEPTH).is_derivable());
    }

    #[test]
    fn deep_target_reports_unknown() {
        // Nesting deeper than the bound: the verdict must be Unknown, not a
        // silent false (the sequence constructor consumes one level each).
        let mut target = n(1);
        for _ in 0..10 {
            target = Term::seq(vec![target]);
        }
        match derivable(&[n(1)], &target, &[], 3) {
            Derivability::Unknown { .. } => {}
            other => panic!("expected unknown, got {other:?}"),
        }
        assert!(derivable(&[n(1)], &target, &[], 20).is_derivable());
    }

    #[test]
    fn dict_value_search() {
        let msg = Term::seq(vec![
            Term::str("HTTPReq"),
            dict::from_pairs(vec![(Term::str("code"), n(42))]),
        ]);
        let analyzed = Analyzed::new(&[msg], DEFAULT_DEPTH);
        assert_eq!(analyzed.find_dict_values("code"), vec![n(42)]);
    }
}
