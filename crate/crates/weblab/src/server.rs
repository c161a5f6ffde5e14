//! Infrastructure processes: the generic HTTPS server base every web server
//! builds on, the flat DNS server, and the attacker process.

use crate::derive::{Analyzed, Derivability};
use crate::http::{
    self, as_dns_request, as_dns_response, https_decrypt_request, HttpRequest, HttpResponse,
};
use crate::runtime::schedule::{AttackerAction, Tpl};
use crate::runtime::{ChoiceCtx, Event, Relation, RelationError, StepEffect};
use crate::scenario::ScenarioTables;
use crate::term::{dict, Term, Var};
use std::sync::Arc;

/// Field indices (1-based) of the common prefix of every server state:
/// `⟨DNSaddress, pendingDNS, pendingRequests, corrupt, keyMapping, tlskeys, …⟩`
pub mod base {
    pub const DNS_ADDRESS: usize = 1;
    pub const PENDING_DNS: usize = 2;
    pub const PENDING_REQUESTS: usize = 3;
    pub const CORRUPT: usize = 4;
    pub const KEY_MAPPING: usize = 5;
    pub const TLS_KEYS: usize = 6;
}

pub fn field(state: &Term, i: usize) -> Term {
    state
        .as_seq()
        .and_then(|v| v.get(i - 1).cloned())
        .unwrap_or(Term::Undef)
}

pub fn with_field(state: &Term, i: usize, value: Term) -> Term {
    let mut items = state.as_seq().expect("server state is a sequence").to_vec();
    items[i - 1] = value;
    Term::seq(items)
}

/// Placeholders reserved for the generic layer, disjoint from the ones the
/// concrete servers use.
pub const NU_SIMPLE_SEND: usize = 90;
pub const NU_SERVER_SYMKEY: usize = 91;

/// Queue an HTTPS request for sending: store `⟨reference, message⟩` under a
/// fresh pending-DNS key and emit the DNS resolution request.
pub fn https_simple_send(
    reference: Term,
    message: &HttpRequest,
    state: &Term,
    own_addr: &Term,
    ctx: &mut ChoiceCtx,
) -> StepEffect {
    let key = Term::proc_var(NU_SIMPLE_SEND);
    let pending = dict::set(
        &field(state, base::PENDING_DNS),
        key.clone(),
        Term::seq(vec![reference, message.term()]),
    );
    let state = with_field(state, base::PENDING_DNS, pending);
    ctx.marker(
        "send_request",
        vec![message.nonce(), message.host(), message.path(), message.method()],
    );
    let dns = http::dns_request(message.host(), key);
    StepEffect::send(
        vec![Event::new(
            field(&state, base::DNS_ADDRESS),
            own_addr.clone(),
            dns,
        )],
        state,
    )
}

/// Hook points a concrete HTTPS server supplies; all default to `stop`.
pub trait ServerHooks {
    fn process_https_request(
        &self,
        _req: &HttpRequest,
        _key: &Term,
        _a: &Term,
        _f: &Term,
        _state: Term,
        _ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        Ok(StepEffect::stop())
    }

    #[allow(clippy::too_many_arguments)]
    fn process_https_response(
        &self,
        _resp: &HttpResponse,
        _reference: &Term,
        _request: &HttpRequest,
        _key: &Term,
        _a: &Term,
        _f: &Term,
        _state: Term,
        _ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        Ok(StepEffect::stop())
    }

    fn trigger(&self, _state: Term, _ctx: &mut ChoiceCtx) -> Result<StepEffect, RelationError> {
        Ok(StepEffect::stop())
    }

    fn process_other(
        &self,
        _msg: &Term,
        _a: &Term,
        _f: &Term,
        _state: Term,
        _ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        Ok(StepEffect::stop())
    }
}

/// Main relation of a generic HTTPS server: corruption handling, TLS
/// decryption against the server's own keys, DNS-response driven request
/// sending, response matching against pending requests, trigger dispatch,
/// and fallthrough to `process_other`.
pub struct HttpsServer<H: ServerHooks> {
    pub hooks: H,
    pub tables: Arc<ScenarioTables>,
}

impl<H: ServerHooks> Relation for HttpsServer<H> {
    fn relate(
        &self,
        ev: &Event,
        state: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        let (a, f, m) = (&ev.to, &ev.from, &ev.msg);

        // Corruption: collect the event and behave like the attacker.
        let corrupt = field(state, base::CORRUPT);
        if corrupt != Term::Bot || *m == Term::str(http::MSG_CORRUPT) {
            let s2 = with_field(
                state,
                base::CORRUPT,
                Term::seq(vec![ev.term(), corrupt]),
            );
            let out = attacker_outputs(&[s2.clone()], ev, a, &self.tables, ctx)?;
            return Ok(StepEffect::send(out, s2));
        }

        // Encrypted HTTPS request for one of our domains.
        let tlskeys = field(state, base::TLS_KEYS);
        for entry in tlskeys.as_seq().unwrap_or(&[]) {
            if let Some([domain, priv_key]) = entry.as_seq() {
                if let Some((req, key)) = https_decrypt_request(m, priv_key) {
                    if req.host() != *domain {
                        return Ok(StepEffect::stop());
                    }
                    return self
                        .hooks
                        .process_https_request(&req, &key, a, f, state.clone(), ctx);
                }
            }
        }

        // DNS response: emit the queued request, now encrypted.
        if let Some(dns) = as_dns_response(m) {
            let pending = field(state, base::PENDING_DNS);
            if !dict::contains(&pending, &dns.nonce)
                || !matches!(dns.address, Term::Addr(_))
            {
                return Ok(StepEffect::stop());
            }
            let entry = dict::get(&pending, &dns.nonce);
            let (reference, request) = match entry.as_seq() {
                Some([r, q]) => (r.clone(), HttpRequest(q.clone())),
                _ => return Ok(StepEffect::stop()),
            };
            if dns.domain != request.host() {
                return Ok(StepEffect::stop());
            }
            let sym = Term::proc_var(NU_SERVER_SYMKEY);
            let mut pending_reqs = field(state, base::PENDING_REQUESTS)
                .as_seq()
                .unwrap_or(&[])
                .to_vec();
            pending_reqs.push(Term::seq(vec![
                reference,
                request.term(),
                sym.clone(),
                dns.address.clone(),
            ]));
            let key_mapping = field(state, base::KEY_MAPPING);
            let pubkey = dict::get(&key_mapping, &request.host());
            let message = http::https_encrypt_request(&request, sym, pubkey);
            let mut s2 = with_field(state, base::PENDING_REQUESTS, Term::seq(pending_reqs));
            s2 = with_field(&s2, base::PENDING_DNS, dict::remove(&pending, &dns.nonce));
            return Ok(StepEffect::send(
                vec![Event::new(dns.address, a.clone(), message)],
                s2,
            ));
        }

        // Encrypted HTTPS response to one of our pending requests.
        let pending_reqs = field(state, base::PENDING_REQUESTS);
        for (i, entry) in pending_reqs.as_seq().unwrap_or(&[]).iter().enumerate() {
            if let Some([reference, request, key, _peer]) = entry.as_seq() {
                if let Some(resp) = http::https_decrypt_response(m, key) {
                    let request = HttpRequest(request.clone());
                    if resp.nonce() != request.nonce() {
                        return Ok(StepEffect::stop());
                    }
                    let mut remaining = pending_reqs.as_seq().unwrap().to_vec();
                    remaining.remove(i);
                    let s2 = with_field(state, base::PENDING_REQUESTS, Term::seq(remaining));
                    return self.hooks.process_https_response(
                        &resp, reference, &request, key, a, f, s2, ctx,
                    );
                }
            }
        }

        if *m == Term::str(http::MSG_TRIGGER) {
            return self.hooks.trigger(state.clone(), ctx);
        }

        self.hooks.process_other(m, a, f, state.clone(), ctx)
    }
}

// ---------------------------------------------------------------------------
// DNS server
// ---------------------------------------------------------------------------

/// Flat DNS: the state is the resolution table `⟨⟨domain, address⟩, …⟩` and
/// never changes. Requests for unknown domains are ignored.
pub struct DnsServer;

impl Relation for DnsServer {
    fn relate(
        &self,
        ev: &Event,
        state: &Term,
        _ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        if let Some(req) = as_dns_request(&ev.msg) {
            for entry in state.as_seq().unwrap_or(&[]) {
                if let Some([domain, addr]) = entry.as_seq() {
                    if *domain == req.domain {
                        let resp = http::dns_response(req.domain, addr.clone(), req.nonce);
                        return Ok(StepEffect::send(
                            vec![Event::new(ev.from.clone(), ev.to.clone(), resp)],
                            state.clone(),
                        ));
                    }
                }
            }
        }
        Ok(StepEffect::stop())
    }
}

// ---------------------------------------------------------------------------
// Attacker process
// ---------------------------------------------------------------------------

/// The atomic attacker: records every received event and emits events whose
/// messages are derivable from what it knows. Which events to emit is
/// strategy-driven; the derivation witness of every scripted output is
/// logged so that attack traces stay auditable.
pub struct Attacker {
    pub name: String,
    pub tables: Arc<ScenarioTables>,
}

impl Relation for Attacker {
    fn relate(
        &self,
        ev: &Event,
        state: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        let knowledge = vec![ev.term(), state.clone()];
        let (out, extras) = attacker_outputs_with_extras(&knowledge, ev, &ev.to, &self.tables, ctx)?;
        let out_term = Term::seq(out.iter().map(Event::term).collect());
        let new_state = Term::seq(vec![ev.term(), out_term, Term::seq(extras), state.clone()]);
        Ok(StepEffect::send(out, new_state))
    }
}

/// Resolve scripted attacker actions (or replayed events) into concrete
/// output events, validating that every message is Dolev-Yao derivable from
/// `knowledge`. Shared by the attacker process and corrupted processes.
pub fn attacker_outputs(
    knowledge: &[Term],
    delivered: &Event,
    own_addr: &Term,
    tables: &ScenarioTables,
    ctx: &mut ChoiceCtx,
) -> Result<Vec<Event>, RelationError> {
    attacker_outputs_with_extras(knowledge, delivered, own_addr, tables, ctx).map(|(o, _)| o)
}

fn attacker_outputs_with_extras(
    knowledge: &[Term],
    delivered: &Event,
    own_addr: &Term,
    tables: &ScenarioTables,
    ctx: &mut ChoiceCtx,
) -> Result<(Vec<Event>, Vec<Term>), RelationError> {
    let actions = ctx.attacker_actions.take();
    let replay = ctx.attacker_replay.take();
    let analyzed = Analyzed::new(knowledge, crate::derive::default_depth());

    let mut out = Vec::new();
    let mut extras = Vec::new();

    if let Some(events) = replay {
        for e in events {
            validate_derivable(&analyzed, &e.msg)?;
            // Keep note-to-self plaintext of requests we replay so later
            // responses stay decryptable.
            if let Some(inner) = replay_plaintext(&analyzed, &e.msg) {
                extras.push(inner);
            }
            out.push(e);
        }
        return Ok((out, extras));
    }

    let Some(actions) = actions else {
        return Ok((out, extras));
    };

    for action in actions {
        let m = Materializer {
            analyzed: &analyzed,
            tables,
            delivered,
        };
        match action {
            AttackerAction::DnsRespond { result } => {
                let req = as_dns_request(&delivered.msg).ok_or_else(|| {
                    RelationError::Attacker("dns_respond: delivered event is not a DNS request".into())
                })?;
                let addr = match result {
                    Some(p) => tables.addr(&p).ok_or_else(|| {
                        RelationError::Attacker(format!("unknown process '{p}'"))
                    })?,
                    None => {
                        let domain = req.domain.as_str().unwrap_or_default().to_string();
                        let owner = tables.owner_of_domain.get(&domain).ok_or_else(|| {
                            RelationError::Attacker(format!("no owner for domain '{domain}'"))
                        })?;
                        tables.addr(owner).unwrap()
                    }
                };
                let resp = http::dns_response(req.domain, addr, req.nonce);
                validate_derivable(&analyzed, &resp)?;
                out.push(Event::new(delivered.from.clone(), own_addr.clone(), resp));
            }
            AttackerAction::HttpsRespond { status, headers, body } => {
                let (req, key) = m.decrypt_current()?;
                let mut hdrs = Term::empty();
                for (name, tpl) in &headers {
                    hdrs = dict::set_str(&hdrs, name, m.tpl(tpl)?);
                }
                let resp = HttpResponse::new(req.nonce(), status, hdrs, m.tpl(&body)?);
                let msg = http::https_encrypt_response(&resp, key);
                validate_derivable(&analyzed, &msg)?;
                out.push(Event::new(delivered.from.clone(), delivered.to.clone(), msg));
            }
            AttackerAction::HttpsRequest {
                domain,
                method,
                path,
                parameters,
                headers,
                body,
            } => {
                let mut params = Term::empty();
                for (name, tpl) in &parameters {
                    params = dict::set_str(&params, name, m.tpl(tpl)?);
                }
                let mut hdrs = Term::empty();
                for (name, tpl) in &headers {
                    hdrs = dict::set_str(&hdrs, name, m.tpl(tpl)?);
                }
                let req = HttpRequest::new(
                    Term::proc_var(98),
                    &method,
                    Term::str(&domain),
                    m.tpl(&path)?,
                    params,
                    hdrs,
                    m.tpl(&body)?,
                );
                let sym = Term::proc_var(99);
                let pubkey = tables.tls_pub.get(&domain).cloned().ok_or_else(|| {
                    RelationError::Attacker(format!("no TLS key for domain '{domain}'"))
                })?;
                let owner = tables.owner_of_domain.get(&domain).cloned().ok_or_else(|| {
                    RelationError::Attacker(format!("no owner for domain '{domain}'"))
                })?;
                let msg = http::https_encrypt_request(&req, sym.clone(), pubkey);
                validate_derivable(&analyzed, &msg)?;
                out.push(Event::new(tables.addr(&owner).unwrap(), own_addr.clone(), msg));
                // Remember the plaintext so the response can be decrypted.
                extras.push(Term::seq(vec![req.term(), sym]));
            }
            AttackerAction::Raw { to, msg } => {
                let term = m.tpl(&msg)?;
                validate_derivable(&analyzed, &term)?;
                let addr = tables
                    .addr(&to)
                    .ok_or_else(|| RelationError::Attacker(format!("unknown process '{to}'")))?;
                out.push(Event::new(addr, own_addr.clone(), term));
            }
            AttackerAction::Forward { to } => {
                let addr = tables
                    .addr(&to)
                    .ok_or_else(|| RelationError::Attacker(format!("unknown process '{to}'")))?;
                out.push(Event::new(addr, own_addr.clone(), delivered.msg.clone()));
            }
        }
    }
    Ok((out, extras))
}

fn replay_plaintext(analyzed: &Analyzed, msg: &Term) -> Option<Term> {
    // For replayed encrypted requests the inner pair is derivable from the
    // recorded knowledge; re-derive it so the state keeps the plaintext.
    if let Term::App(crate::term::Func::EncA, args) = msg {
        if analyzed.derive(&args[0], &[]).is_derivable() {
            return Some(args[0].clone());
        }
    }
    None
}

fn validate_derivable(analyzed: &Analyzed, msg: &Term) -> Result<(), RelationError> {
    // Fresh placeholders are always available to the attacker.
    let placeholders: Vec<Var> = msg
        .process_vars()
        .into_iter()
        .map(Var::Process)
        .collect();
    match analyzed.derive(msg, &placeholders) {
        Derivability::Derivable(_) => Ok(()),
        Derivability::NotDerivable => Err(RelationError::Attacker(format!(
            "output message is not derivable from attacker knowledge: {msg}"
        ))),
        Derivability::Unknown { .. } => Err(RelationError::Attacker(format!(
            "derivability of output message unknown at current depth: {msg}"
        ))),
    }
}

struct Materializer<'a> {
    analyzed: &'a Analyzed,
    tables: &'a ScenarioTables,
    delivered: &'a Event,
}

impl<'a> Materializer<'a> {
    fn decrypt_current(&self) -> Result<(HttpRequest, Term), RelationError> {
        for (_domain, priv_key) in self.tables.attacker_tls_priv() {
            if let Some(pair) = https_decrypt_request(&self.delivered.msg, &priv_key) {
                return Ok(pair);
            }
        }
        Err(RelationError::Attacker(
            "https_respond: delivered event is not an HTTPS request for an attacker domain".into(),
        ))
    }

    fn tpl(&self, t: &Tpl) -> Result<Term, RelationError> {
        let err = |m: String| RelationError::Attacker(m);
        Ok(match t {
            Tpl::Term { text } => crate::term::parse_term(text)
                .map_err(|e| err(format!("bad term template: {e}")))?,
            Tpl::Str { value } => Term::str(value),
            Tpl::Empty => Term::empty(),
            Tpl::Seq { items } => Term::seq(
                items
                    .iter()
                    .map(|x| self.tpl(x))
                    .collect::<Result<_, _>>()?,
            ),
            Tpl::Dict { pairs } => {
                let mut d = Term::empty();
                for (k, v) in pairs {
                    d = dict::set_str(&d, k, self.tpl(v)?);
                }
                d
            }
            Tpl::Url {
                protocol,
                host,
                path,
                parameters,
                fragment,
            } => {
                let mut params = Term::empty();
                for (k, v) in parameters {
                    params = dict::set_str(&params, k, self.tpl(v)?);
                }
                let fragment = match fragment {
                    Some(f) => self.tpl(f)?,
                    None => Term::empty(),
                };
                http::Url::new(protocol, host, path, params, fragment).term()
            }
            Tpl::Know { key, idx } => {
                let found = self.analyzed.find_dict_values(key);
                found.get(*idx).cloned().ok_or_else(|| {
                    err(format!(
                        "nothing known under dictionary key '{key}' (index {idx}, {} found)",
                        found.len()
                    ))
                })?
            }
            Tpl::ReqNonce => self.decrypt_current()?.0.nonce(),
            Tpl::ReqParam { name } => self.decrypt_current()?.0.param(name),
            Tpl::ReqBodyVal { name } => dict::get_str(&self.decrypt_current()?.0.body(), name),
            Tpl::ReqBody => self.decrypt_current()?.0.body(),
            Tpl::Fresh { index } => Term::proc_var(*index),
            Tpl::Identity { id } => self
                .tables
                .identity_term(id)
                .ok_or_else(|| err(format!("unknown identity '{id}'")))?,
            Tpl::SecretOf { id } => self
                .tables
                .secret_of_label(id)
                .ok_or_else(|| err(format!("unknown identity '{id}'")))?,
        })
    }
}
