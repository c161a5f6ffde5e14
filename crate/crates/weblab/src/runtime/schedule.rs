//! Scripted strategies: a schedule is a list of directives, each delivering
//! one event to one process with pinned branch choices. Attacker steps carry
//! declarative actions whose materialized messages are validated against
//! Dolev-Yao derivability before they are emitted.

use serde::{Deserialize, Serialize};

/// One scheduled processing step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    /// Deliver the pool event at `pool_index` to the named process.
    Deliver {
        process: String,
        #[serde(default)]
        pool_index: usize,
        #[serde(default)]
        choices: Vec<(String, String)>,
        #[serde(default)]
        attacker: Vec<AttackerAction>,
    },
    /// Deliver a synthetic trigger event to the named process.
    Trigger {
        process: String,
        #[serde(default)]
        choices: Vec<(String, String)>,
        #[serde(default)]
        attacker: Vec<AttackerAction>,
    },
}

impl Directive {
    pub fn process(&self) -> &str {
        match self {
            Directive::Deliver { process, .. } | Directive::Trigger { process, .. } => process,
        }
    }

    pub fn choices(&self) -> &[(String, String)] {
        match self {
            Directive::Deliver { choices, .. } | Directive::Trigger { choices, .. } => choices,
        }
    }

    pub fn attacker_actions(&self) -> &[AttackerAction] {
        match self {
            Directive::Deliver { attacker, .. } | Directive::Trigger { attacker, .. } => attacker,
        }
    }

    pub fn pool_index(&self) -> Option<usize> {
        match self {
            Directive::Deliver { pool_index, .. } => Some(*pool_index),
            Directive::Trigger { .. } => None,
        }
    }

    pub fn deliver(process: &str, choices: Vec<(&str, &str)>) -> Directive {
        Directive::Deliver {
            process: process.to_string(),
            pool_index: 0,
            choices: own(choices),
            attacker: vec![],
        }
    }

    pub fn deliver_at(process: &str, pool_index: usize, choices: Vec<(&str, &str)>) -> Directive {
        Directive::Deliver {
            process: process.to_string(),
            pool_index,
            choices: own(choices),
            attacker: vec![],
        }
    }

    pub fn deliver_attacker(process: &str, actions: Vec<AttackerAction>) -> Directive {
        Directive::Deliver {
            process: process.to_string(),
            pool_index: 0,
            choices: vec![],
            attacker: actions,
        }
    }

    pub fn trigger(process: &str, choices: Vec<(&str, &str)>) -> Directive {
        Directive::Trigger {
            process: process.to_string(),
            choices: own(choices),
            attacker: vec![],
        }
    }

    pub fn trigger_attacker(process: &str, actions: Vec<AttackerAction>) -> Directive {
        Directive::Trigger {
            process: process.to_string(),
            choices: vec![],
            attacker: actions,
        }
    }
}

fn own(choices: Vec<(&str, &str)>) -> Vec<(String, String)> {
    choices
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// A declarative attacker move. Holes in the templates are filled from the
/// attacker's analyzed knowledge; the materialized messages must then be
/// derivable, which keeps every scripted attack honest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AttackerAction {
    /// Decrypt the HTTPS request delivered in this step (addressed to one
    /// of the attacker's own domains) and answer it.
    HttpsRespond {
        status: u16,
        #[serde(default)]
        headers: Vec<(String, Tpl)>,
        body: Tpl,
    },
    /// Act as a client: send an encrypted HTTPS request to an honest server.
    HttpsRequest {
        domain: String,
        method: String,
        path: Tpl,
        #[serde(default)]
        parameters: Vec<(String, Tpl)>,
        #[serde(default)]
        headers: Vec<(String, Tpl)>,
        body: Tpl,
    },
    /// Answer the DNS request delivered in this step. `result` names the
    /// process whose address the domain should resolve to; by default the
    /// honest owner of the requested domain.
    DnsRespond {
        #[serde(default)]
        result: Option<String>,
    },
    /// Send an arbitrary term to a process (e.g. the client id during
    /// registration, or a corruption message).
    Raw { to: String, msg: Tpl },
    /// Re-emit the message delivered in this step, verbatim, to a process.
    Forward { to: String },
}

/// Term template used inside attacker actions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Tpl {
    /// Canonical term text, parsed at materialization.
    Term { text: String },
    Str { value: String },
    /// `⟨⟩`
    Empty,
    Seq { items: Vec<Tpl> },
    Dict { pairs: Vec<(String, Tpl)> },
    Url {
        protocol: String,
        host: String,
        path: String,
        #[serde(default)]
        parameters: Vec<(String, Tpl)>,
        #[serde(default)]
        fragment: Option<Box<Tpl>>,
    },
    /// A value found in the attacker's analyzed knowledge under the given
    /// dictionary key (`idx` disambiguates multiple finds, newest last).
    Know { key: String, #[serde(default)] idx: usize },
    /// Fields of the HTTPS request being answered by `HttpsRespond`.
    ReqNonce,
    ReqParam { name: String },
    ReqBodyVal { name: String },
    ReqBody,
    /// Fresh placeholder `ν_i`; equal indices denote the same fresh nonce
    /// within one step.
    Fresh { index: usize },
    /// An identity `name@domain` as the pair `⟨name, domain⟩`.
    Identity { id: String },
    /// The password of an identity. Only usable when actually derivable
    /// from the attacker's knowledge (validated at materialization).
    SecretOf { id: String },
}

impl Tpl {
    pub fn s(v: &str) -> Tpl {
        Tpl::Str { value: v.into() }
    }

    pub fn know(key: &str) -> Tpl {
        Tpl::Know {
            key: key.into(),
            idx: 0,
        }
    }

    pub fn dict(pairs: Vec<(&str, Tpl)>) -> Tpl {
        Tpl::Dict {
            pairs: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}
