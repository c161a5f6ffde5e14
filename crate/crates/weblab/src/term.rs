//! The term algebra all messages and process states live in.
//!
//! Terms are built from string/address constants, the truth constants,
//! nonces, placeholders, finite sequences and a fixed set of cryptographic
//! function symbols. The equational theory (asymmetric and symmetric
//! decryption, signature checking and message extraction, projections)
//! is applied by [`normalize`]; equality of normal forms decides the
//! congruence `≡` used everywhere else.

use std::fmt;
use std::sync::Arc;

/// Function symbols with fixed arity. `Proj` carries its 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    /// `pub(k)` — public key for private key `k`, arity 1.
    Pub,
    /// `enc_a(m, pub(k))` — asymmetric encryption, arity 2.
    EncA,
    /// `dec_a(c, k)` — asymmetric decryption, arity 2.
    DecA,
    /// `enc_s(m, k)` — symmetric encryption, arity 2.
    EncS,
    /// `dec_s(c, k)` — symmetric decryption, arity 2.
    DecS,
    /// `sig(m, k)` — signature, arity 2.
    Sig,
    /// `checksig(s, pub(k))` — signature verification, arity 2.
    CheckSig,
    /// `extractmsg(s)` — payload of a signature, arity 1.
    ExtractMsg,
    /// `proj_i(t)` — i-th component of a sequence, arity 1.
    Proj(usize),
}

impl Func {
    pub fn arity(self) -> usize {
        match self {
            Func::Pub | Func::ExtractMsg | Func::Proj(_) => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> String {
        match self {
            Func::Pub => "pub".into(),
            Func::EncA => "enc_a".into(),
            Func::DecA => "dec_a".into(),
            Func::EncS => "enc_s".into(),
            Func::DecS => "dec_s".into(),
            Func::Sig => "sig".into(),
            Func::CheckSig => "checksig".into(),
            Func::ExtractMsg => "extractmsg".into(),
            Func::Proj(i) => format!("proj{i}"),
        }
    }
}

/// Variables: process placeholders `ν_i`, script placeholders `λ_i`, and
/// the pattern wildcard `*`. Ground terms contain none of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Process(usize),
    Script(usize),
    Wildcard,
}

/// A nonce, identified by a globally unique tag. Nonces print as `n<tag>`
/// in creation order, which keeps traces diffable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// ASCII string constant.
    Str(Arc<str>),
    /// Network address constant (named, e.g. `@rp`).
    Addr(Arc<str>),
    /// ⊤
    True,
    /// ⊥
    Bot,
    /// ♦ — the result of an ill-indexed projection.
    Undef,
    Nonce(Nonce),
    Var(Var),
    /// Finite sequence `⟨t1, …, tn⟩`.
    Seq(Arc<Vec<Term>>),
    /// Function application with arity-correct arguments.
    App(Func, Arc<Vec<Term>>),
}

impl Term {
    pub fn str(s: &str) -> Term {
        Term::Str(Arc::from(s))
    }

    pub fn addr(s: &str) -> Term {
        Term::Addr(Arc::from(s))
    }

    pub fn seq(items: Vec<Term>) -> Term {
        Term::Seq(Arc::new(items))
    }

    pub fn empty() -> Term {
        Term::seq(vec![])
    }

    pub fn app(f: Func, args: Vec<Term>) -> Term {
        debug_assert_eq!(f.arity(), args.len(), "arity mismatch for {}", f.name());
        Term::App(f, Arc::new(args))
    }

    pub fn pubkey(k: Term) -> Term {
        Term::app(Func::Pub, vec![k])
    }

    pub fn enc_a(m: Term, k: Term) -> Term {
        Term::app(Func::EncA, vec![m, k])
    }

    pub fn dec_a(c: Term, k: Term) -> Term {
        Term::app(Func::DecA, vec![c, k])
    }

    pub fn enc_s(m: Term, k: Term) -> Term {
        Term::app(Func::EncS, vec![m, k])
    }

    pub fn dec_s(c: Term, k: Term) -> Term {
        Term::app(Func::DecS, vec![c, k])
    }

    pub fn sig(m: Term, k: Term) -> Term {
        Term::app(Func::Sig, vec![m, k])
    }

    pub fn checksig(s: Term, pk: Term) -> Term {
        Term::app(Func::CheckSig, vec![s, pk])
    }

    pub fn extractmsg(s: Term) -> Term {
        Term::app(Func::ExtractMsg, vec![s])
    }

    pub fn proj(i: usize, t: Term) -> Term {
        Term::app(Func::Proj(i), vec![t])
    }

    pub fn wildcard() -> Term {
        Term::Var(Var::Wildcard)
    }

    pub fn proc_var(i: usize) -> Term {
        Term::Var(Var::Process(i))
    }

    pub fn script_var(i: usize) -> Term {
        Term::Var(Var::Script(i))
    }

    pub fn as_seq(&self) -> Option<&[Term]> {
        match self {
            Term::Seq(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Term::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_empty_seq(&self) -> bool {
        matches!(self, Term::Seq(items) if items.is_empty())
    }

    pub fn is_nonce(&self) -> bool {
        matches!(self, Term::Nonce(_))
    }

    /// True iff the term contains no variables (Def. of ground terms).
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Seq(items) | Term::App(_, items) => items.iter().all(Term::is_ground),
            _ => true,
        }
    }

    /// Node count; used by test oracles and size caps.
    pub fn size(&self) -> usize {
        match self {
            Term::Seq(items) | Term::App(_, items) => {
                1 + items.iter().map(Term::size).sum::<usize>()
            }
            _ => 1,
        }
    }

    /// All process placeholders occurring in the term, in index order.
    pub fn process_vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Term::Var(Var::Process(i)) => out.push(*i),
            Term::Seq(items) | Term::App(_, items) => {
                for t in items.iter() {
                    t.collect_vars(out);
                }
            }
            _ => {}
        }
    }

    pub fn contains_nonce(&self, n: Nonce) -> bool {
        match self {
            Term::Nonce(m) => *m == n,
            Term::Seq(items) | Term::App(_, items) => {
                items.iter().any(|t| t.contains_nonce(n))
            }
            _ => false,
        }
    }
}

/// Reduce a term to its unique normal form under the equational theory.
///
/// Children are normalized first; a single root reduction then yields a
/// term whose result is itself already normal, so no further passes are
/// needed. Idempotence and agreement with a positionwise rewriting oracle
/// are checked in tests.
pub fn normalize(t: &Term) -> Term {
    match t {
        Term::Seq(items) => Term::seq(items.iter().map(normalize).collect()),
        Term::App(f, args) => {
            let args: Vec<Term> = args.iter().map(normalize).collect();
            reduce_root(*f, args)
        }
        other => other.clone(),
    }
}

fn reduce_root(f: Func, args: Vec<Term>) -> Term {
    match f {
        Func::DecA => {
            if let Term::App(Func::EncA, inner) = &args[0] {
                if let Term::App(Func::Pub, keys) = &inner[1] {
                    if keys[0] == args[1] {
                        return inner[0].clone();
                    }
                }
            }
        }
        Func::DecS => {
            if let Term::App(Func::EncS, inner) = &args[0] {
                if inner[1] == args[1] {
                    return inner[0].clone();
                }
            }
        }
        Func::CheckSig => {
            if let (Term::App(Func::Sig, signed), Term::App(Func::Pub, keys)) =
                (&args[0], &args[1])
            {
                if signed[1] == keys[0] {
                    return Term::True;
                }
            }
        }
        Func::ExtractMsg => {
            if let Term::App(Func::Sig, signed) = &args[0] {
                return signed[0].clone();
            }
        }
        Func::Proj(i) => {
            if let Term::Seq(items) = &args[0] {
                return if i >= 1 && i <= items.len() {
                    items[i - 1].clone()
                } else {
                    Term::Undef
                };
            }
        }
        _ => {}
    }
    Term::App(f, Arc::new(args))
}

/// Congruence `≡`: equality of normal forms.
pub fn equiv(a: &Term, b: &Term) -> bool {
    if a == b {
        return true;
    }
    normalize(a) == normalize(b)
}

/// `t ∼ pattern`: true iff `t` is obtainable from `pattern` by replacing
/// each wildcard occurrence independently. Both sides are normalized first.
pub fn matches(t: &Term, pattern: &Term) -> bool {
    matches_norm(&normalize(t), &normalize(pattern))
}

fn matches_norm(t: &Term, pattern: &Term) -> bool {
    match pattern {
        Term::Var(Var::Wildcard) => true,
        Term::Seq(ps) => match t {
            Term::Seq(ts) => {
                ts.len() == ps.len() && ts.iter().zip(ps.iter()).all(|(a, b)| matches_norm(a, b))
            }
            _ => false,
        },
        Term::App(pf, ps) => match t {
            Term::App(tf, ts) => {
                tf == pf && ts.iter().zip(ps.iter()).all(|(a, b)| matches_norm(a, b))
            }
            _ => false,
        },
        _ => t == pattern,
    }
}

/// `t | pattern`: remove the immediate subterms of `t` that do not match.
/// Non-sequence terms are returned unchanged.
pub fn filter_seq(t: &Term, pattern: &Term) -> Term {
    match t {
        Term::Seq(items) => Term::seq(
            items
                .iter()
                .filter(|item| matches(item, pattern))
                .cloned()
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Simultaneous replacement of variables by terms.
pub fn substitute(t: &Term, bind: &dyn Fn(Var) -> Option<Term>) -> Term {
    match t {
        Term::Var(v) => bind(*v).unwrap_or_else(|| t.clone()),
        Term::Seq(items) => Term::seq(items.iter().map(|x| substitute(x, bind)).collect()),
        Term::App(f, args) => Term::App(
            *f,
            Arc::new(args.iter().map(|x| substitute(x, bind)).collect()),
        ),
        other => other.clone(),
    }
}

/// Replace process placeholders `ν_i` according to `map` (index → term).
pub fn resolve_process_vars(t: &Term, map: &std::collections::BTreeMap<usize, Term>) -> Term {
    substitute(t, &|v| match v {
        Var::Process(i) => map.get(&i).cloned(),
        _ => None,
    })
}

/// Replace script placeholders `λ_i` by process placeholders `ν_(base+i-1)`.
pub fn script_vars_to_process(t: &Term, base: usize) -> Term {
    substitute(t, &|v| match v {
        Var::Script(i) => Some(Term::proc_var(base + i - 1)),
        _ => None,
    })
}

// ---------------------------------------------------------------------------
// Subterm paths
// ---------------------------------------------------------------------------

/// A sequence of 1-based indices applied left to right, selecting a subterm
/// of nested sequences. Out-of-range application yields ♦, mirroring the
/// projection rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SubtermPath(pub Vec<usize>);

impl SubtermPath {
    pub fn new(ixs: &[usize]) -> Self {
        SubtermPath(ixs.to_vec())
    }

    pub fn push(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        SubtermPath(v)
    }

    /// `t.p` — repeated projection.
    pub fn get(&self, t: &Term) -> Term {
        let mut cur = t.clone();
        for &i in &self.0 {
            cur = match cur.as_seq() {
                Some(items) if i >= 1 && i <= items.len() => items[i - 1].clone(),
                _ => return Term::Undef,
            };
        }
        cur
    }

    /// Replace the subterm at this path, rebuilding along the spine.
    /// Out-of-range paths leave the term unchanged.
    pub fn set(&self, t: &Term, value: Term) -> Term {
        fn go(t: &Term, path: &[usize], value: Term) -> Term {
            match path.split_first() {
                None => value,
                Some((&i, rest)) => match t.as_seq() {
                    Some(items) if i >= 1 && i <= items.len() => {
                        let mut new_items = items.to_vec();
                        new_items[i - 1] = go(&items[i - 1], rest, value);
                        Term::seq(new_items)
                    }
                    _ => t.clone(),
                },
            }
        }
        go(t, &self.0, value)
    }

    /// Mutate the subterm at this path with `f`.
    pub fn update(&self, t: &Term, f: impl FnOnce(&Term) -> Term) -> Term {
        let cur = self.get(t);
        self.set(t, f(&cur))
    }
}

// ---------------------------------------------------------------------------
// Dictionaries
// ---------------------------------------------------------------------------

/// Dictionary operations over terms of the form `⟨⟨k1,v1⟩, …, ⟨kn,vn⟩⟩`.
///
/// Lookup of an absent key yields `⟨⟩`; on duplicate keys the first
/// occurrence wins, which keeps simulation deterministic.
pub mod dict {
    use super::Term;

    pub fn entry(k: Term, v: Term) -> Term {
        Term::seq(vec![k, v])
    }

    pub fn from_pairs(pairs: Vec<(Term, Term)>) -> Term {
        Term::seq(pairs.into_iter().map(|(k, v)| entry(k, v)).collect())
    }

    fn entries(d: &Term) -> &[Term] {
        d.as_seq().unwrap_or(&[])
    }

    pub fn contains(d: &Term, k: &Term) -> bool {
        entries(d).iter().any(|e| match e.as_seq() {
            Some([key, _]) => key == k,
            _ => false,
        })
    }

    /// `d[k]`, or `⟨⟩` when the key is absent.
    pub fn get(d: &Term, k: &Term) -> Term {
        for e in entries(d) {
            if let Some([key, v]) = e.as_seq() {
                if key == k {
                    return v.clone();
                }
            }
        }
        Term::empty()
    }

    /// All values stored under `k`, in order. Only the exhaustive explorer
    /// cares about more than the first one.
    pub fn get_all(d: &Term, k: &Term) -> Vec<Term> {
        entries(d)
            .iter()
            .filter_map(|e| match e.as_seq() {
                Some([key, v]) if key == k => Some(v.clone()),
                _ => None,
            })
            .collect()
    }

    /// `d[k] := v`: replace the value of the first element with key `k`,
    /// or append a new element.
    pub fn set(d: &Term, k: Term, v: Term) -> Term {
        let mut items = entries(d).to_vec();
        for e in items.iter_mut() {
            if let Some([key, _]) = e.as_seq() {
                if *key == k {
                    *e = entry(k, v);
                    return Term::seq(items);
                }
            }
        }
        items.push(entry(k, v));
        Term::seq(items)
    }

    /// `d - k`: remove the first element with key `k`.
    pub fn remove(d: &Term, k: &Term) -> Term {
        let mut items = entries(d).to_vec();
        if let Some(pos) = items.iter().position(|e| match e.as_seq() {
            Some([key, _]) => key == k,
            _ => false,
        }) {
            items.remove(pos);
        }
        Term::seq(items)
    }

    /// Convenience for string keys.
    pub fn get_str(d: &Term, k: &str) -> Term {
        get(d, &Term::str(k))
    }

    pub fn set_str(d: &Term, k: &str, v: Term) -> Term {
        set(d, Term::str(k), v)
    }

    pub fn contains_str(d: &Term, k: &str) -> bool {
        contains(d, &Term::str(k))
    }

    /// Sequence concatenation, the paper's `∪` on dictionaries.
    pub fn union(a: &Term, b: &Term) -> Term {
        let mut items = entries(a).to_vec();
        items.extend(entries(b).iter().cloned());
        Term::seq(items)
    }
}

// ---------------------------------------------------------------------------
// Canonical textual serialization
// ---------------------------------------------------------------------------

impl fmt::Display for Term {
    /// Canonical, round-trippable rendering:
    /// strings quoted, `#t`/`#f`/`#u` for ⊤/⊥/♦, `n<k>` nonces, `@name`
    /// addresses, `?v<i>`/`?l<i>`/`*` variables, `[ … ]` sequences and
    /// `(sym …)` applications.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Str(s) => {
                write!(f, "\"")?;
                for c in s.chars() {
                    match c {
                        '"' => write!(f, "\\\"")?,
                        '\\' => write!(f, "\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                write!(f, "\"")
            }
            Term::Addr(a) => write!(f, "@{a}"),
            Term::True => write!(f, "#t"),
            Term::Bot => write!(f, "#f"),
            Term::Undef => write!(f, "#u"),
            Term::Nonce(Nonce(k)) => write!(f, "n{k}"),
            Term::Var(Var::Process(i)) => write!(f, "?v{i}"),
            Term::Var(Var::Script(i)) => write!(f, "?l{i}"),
            Term::Var(Var::Wildcard) => write!(f, "*"),
            Term::Seq(items) => {
                write!(f, "[")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, "]")
            }
            Term::App(func, args) => {
                write!(f, "({}", func.name())?;
                for t in args.iter() {
                    write!(f, " {t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of input")]
    Eof,
    #[error("unexpected character {0:?} at byte {1}")]
    Unexpected(char, usize),
    #[error("unknown function symbol {0:?}")]
    UnknownSymbol(String),
    #[error("arity mismatch for {0}")]
    Arity(String),
    #[error("trailing input at byte {0}")]
    Trailing(usize),
}

/// Parse the canonical textual form produced by `Display`.
pub fn parse_term(input: &str) -> Result<Term, ParseError> {
    let mut p = Parser {
        chars: input.char_indices().peekable(),
        input,
    };
    p.skip_ws();
    let t = p.term()?;
    p.skip_ws();
    if let Some(&(i, _)) = p.chars.peek() {
        return Err(ParseError::Trailing(i));
    }
    Ok(t)
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    #[allow(dead_code)]
    input: &'a str,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(&(_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let &(pos, c) = self.chars.peek().ok_or(ParseError::Eof)?;
        match c {
            '"' => self.string(),
            '@' => {
                self.chars.next();
                Ok(Term::Addr(Arc::from(self.symbol()?)))
            }
            '#' => {
                self.chars.next();
                let (p2, c2) = self.chars.next().ok_or(ParseError::Eof)?;
                match c2 {
                    't' => Ok(Term::True),
                    'f' => Ok(Term::Bot),
                    'u' => Ok(Term::Undef),
                    other => Err(ParseError::Unexpected(other, p2)),
                }
            }
            'n' => {
                self.chars.next();
                Ok(Term::Nonce(Nonce(self.number()? as u64)))
            }
            '?' => {
                self.chars.next();
                let (p2, kind) = self.chars.next().ok_or(ParseError::Eof)?;
                let i = self.number()?;
                match kind {
                    'v' => Ok(Term::proc_var(i)),
                    'l' => Ok(Term::script_var(i)),
                    other => Err(ParseError::Unexpected(other, p2)),
                }
            }
            '*' => {
                self.chars.next();
                Ok(Term::wildcard())
            }
            '[' => {
                self.chars.next();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if matches!(self.chars.peek(), Some(&(_, ']'))) {
                        self.chars.next();
                        return Ok(Term::seq(items));
                    }
                    items.push(self.term()?);
                }
            }
            '(' => {
                self.chars.next();
                self.skip_ws();
                let sym = self.symbol()?;
                let func = match sym.as_str() {
                    "pub" => Func::Pub,
                    "enc_a" => Func::EncA,
                    "dec_a" => Func::DecA,
                    "enc_s" => Func::EncS,
                    "dec_s" => Func::DecS,
                    "sig" => Func::Sig,
                    "checksig" => Func::CheckSig,
                    "extractmsg" => Func::ExtractMsg,
                    s if s.starts_with("proj") => {
                        let i: usize = s[4..]
                            .parse()
                            .map_err(|_| ParseError::UnknownSymbol(s.into()))?;
                        Func::Proj(i)
                    }
                    s => return Err(ParseError::UnknownSymbol(s.into())),
                };
                let mut args = Vec::new();
                loop {
                    self.skip_ws();
                    if matches!(self.chars.peek(), Some(&(_, ')'))) {
                        self.chars.next();
                        break;
                    }
                    args.push(self.term()?);
                }
                if args.len() != func.arity() {
                    return Err(ParseError::Arity(func.name()));
                }
                Ok(Term::App(func, Arc::new(args)))
            }
            other => Err(ParseError::Unexpected(other, pos)),
        }
    }

    fn string(&mut self) -> Result<Term, ParseError> {
        self.chars.next(); // opening quote
        let mut out = String::new();
        loop {
            let (_, c) = self.chars.next().ok_or(ParseError::Eof)?;
            match c {
                '"' => return Ok(Term::str(&out)),
                '\\' => {
                    let (_, esc) = self.chars.next().ok_or(ParseError::Eof)?;
                    out.push(esc);
                }
                c => out.push(c),
            }
        }
    }

    fn symbol(&mut self) -> Result<String, ParseError> {
        let mut out = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' || c == ':' {
                out.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        if out.is_empty() {
            Err(ParseError::Eof)
        } else {
            Ok(out)
        }
    }

    fn number(&mut self) -> Result<usize, ParseError> {
        let mut out = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_ascii_digit() {
                out.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        out.parse().map_err(|_| ParseError::Eof)
    }
}

/// Rename nonces by first occurrence in the canonical rendering. Used to
/// compare terms and traces modulo nonce naming.
pub fn canonicalize_nonces(t: &Term) -> Term {
    let mut map = std::collections::HashMap::new();
    fn go(t: &Term, map: &mut std::collections::HashMap<Nonce, u64>) -> Term {
        match t {
            Term::Nonce(n) => {
                let next = map.len() as u64;
                Term::Nonce(Nonce(*map.entry(*n).or_insert(next)))
            }
            Term::Seq(items) => Term::seq(items.iter().map(|x| go(x, map)).collect()),
            Term::App(f, args) => {
                Term::App(*f, Arc::new(args.iter().map(|x| go(x, map)).collect()))
            }
            other => other.clone(),
        }
    }
    go(t, &mut map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Term {
        Term::Nonce(Nonce(1))
    }

    #[test]
    fn decrypt_asymmetric() {
        let abc = Term::seq(vec![Term::str("a"), Term::str("b"), Term::str("c")]);
        let c = Term::enc_a(abc.clone(), Term::pubkey(k()));
        assert_eq!(normalize(&Term::dec_a(c, k())), abc);
    }

    #[test]
    fn congruence_example() {
        // proj_1(dec_a(enc_a(⟨"a","b"⟩, pub(k)), k)) ≡ "a"
        let ab = Term::seq(vec![Term::str("a"), Term::str("b")]);
        let t = Term::proj(1, Term::dec_a(Term::enc_a(ab, Term::pubkey(k())), k()));
        assert_eq!(normalize(&t), Term::str("a"));
    }

    #[test]
    fn out_of_range_projection() {
        let abc = Term::seq(vec![Term::str("a"), Term::str("b"), Term::str("c")]);
        assert_eq!(normalize(&Term::proj(4, abc)), Term::Undef);
    }

    #[test]
    fn signature_rules() {
        let m = Term::str("m");
        let s = Term::sig(m.clone(), k());
        assert_eq!(normalize(&Term::checksig(s.clone(), Term::pubkey(k()))), Term::True);
        assert_eq!(normalize(&Term::extractmsg(s.clone())), m);
        let wrong = Term::Nonce(Nonce(2));
        let bad = Term::checksig(s, Term::pubkey(wrong));
        assert!(matches!(normalize(&bad), Term::App(Func::CheckSig, _)));
    }

    #[test]
    fn wrong_key_stays_stuck() {
        let c = Term::enc_a(Term::str("x"), Term::pubkey(k()));
        let stuck = Term::dec_a(c, Term::Nonce(Nonce(9)));
        assert!(matches!(normalize(&stuck), Term::App(Func::DecA, _)));
    }

    #[test]
    fn pattern_matching_paper_example() {
        let p = Term::seq(vec![Term::True, Term::wildcard()]);
        assert!(matches(&Term::seq(vec![Term::True, Term::str("42")]), &p));
        assert!(!matches(&Term::seq(vec![Term::Bot, Term::str("42")]), &p));

        let t = Term::seq(vec![
            Term::seq(vec![Term::Bot, Term::True]),
            Term::seq(vec![Term::True, Term::str("23")]),
            Term::seq(vec![Term::str("a"), Term::str("b")]),
            Term::seq(vec![Term::True, Term::Bot]),
        ]);
        let expected = Term::seq(vec![
            Term::seq(vec![Term::True, Term::str("23")]),
            Term::seq(vec![Term::True, Term::Bot]),
        ]);
        assert_eq!(filter_seq(&t, &p), expected);
    }

    #[test]
    fn ground_pattern_is_equality() {
        let t = Term::seq(vec![Term::str("a"), Term::enc_s(Term::str("b"), k())]);
        assert!(matches(&t, &t));
    }

    #[test]
    fn dict_ops() {
        let d = dict::from_pairs(vec![
            (Term::str("a"), Term::str("1")),
            (Term::str("b"), Term::str("2")),
        ]);
        assert_eq!(dict::get_str(&d, "b"), Term::str("2"));
        assert_eq!(dict::get_str(&d, "x"), Term::empty());
        assert_eq!(dict::get(&Term::empty(), &Term::str("x")), Term::empty());
        let removed = dict::remove(&d, &Term::str("a"));
        assert_eq!(
            removed,
            dict::from_pairs(vec![(Term::str("b"), Term::str("2"))])
        );
    }

    #[test]
    fn substitution() {
        let t = Term::enc_a(Term::proc_var(1), Term::pubkey(k()));
        let n = Term::Nonce(Nonce(7));
        let mut map = std::collections::BTreeMap::new();
        map.insert(1, n.clone());
        assert_eq!(
            resolve_process_vars(&t, &map),
            Term::enc_a(n, Term::pubkey(k()))
        );

        let t2 = Term::seq(vec![
            Term::script_var(1),
            Term::script_var(2),
            Term::script_var(1),
        ]);
        let conv = script_vars_to_process(&t2, 10);
        assert_eq!(
            conv,
            Term::seq(vec![
                Term::proc_var(10),
                Term::proc_var(11),
                Term::proc_var(10)
            ])
        );

        let id = resolve_process_vars(&t, &std::collections::BTreeMap::new());
        assert_eq!(id, t);
    }

    #[test]
    fn subterm_paths() {
        // τ = ⟨a,b,⟨c,d,⟨e,f⟩⟩⟩, τ.3.1 = c and τ.3.3.1 = e
        let tau = Term::seq(vec![
            Term::str("a"),
            Term::str("b"),
            Term::seq(vec![
                Term::str("c"),
                Term::str("d"),
                Term::seq(vec![Term::str("e"), Term::str("f")]),
            ]),
        ]);
        assert_eq!(SubtermPath::new(&[3, 1]).get(&tau), Term::str("c"));
        assert_eq!(SubtermPath::new(&[3, 3, 1]).get(&tau), Term::str("e"));
        assert_eq!(SubtermPath::new(&[5]).get(&tau), Term::Undef);

        let updated = SubtermPath::new(&[3, 1]).set(&tau, Term::str("z"));
        assert_eq!(SubtermPath::new(&[3, 1]).get(&updated), Term::str("z"));
        assert_eq!(SubtermPath::new(&[1]).get(&updated), Term::str("a"));
    }

    #[test]
    fn serialization_round_trip() {
        let t = Term::seq(vec![
            Term::str("he\"llo\\"),
            Term::addr("rp1"),
            Term::True,
            Term::Bot,
            Term::Undef,
            Term::Nonce(Nonce(12)),
            Term::proc_var(3),
            Term::script_var(2),
            Term::wildcard(),
            Term::enc_a(Term::str("m"), Term::pubkey(Term::Nonce(Nonce(1)))),
            Term::proj(4, Term::seq(vec![])),
        ]);
        let text = t.to_string();
        assert_eq!(parse_term(&text).unwrap(), t);
    }

    #[test]
    fn nonce_canonicalization() {
        let a = Term::seq(vec![Term::Nonce(Nonce(5)), Term::Nonce(Nonce(9)), Term::Nonce(Nonce(5))]);
        let b = Term::seq(vec![Term::Nonce(Nonce(2)), Term::Nonce(Nonce(0)), Term::Nonce(Nonce(2))]);
        assert_eq!(canonicalize_nonces(&a), canonicalize_nonces(&b));
    }
}
