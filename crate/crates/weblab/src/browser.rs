//! The web browser atomic DY process: windows/documents tree, cookies, web
//! storage, script execution, navigation, redirects, and corruption.

use crate::http::{
    self, as_dns_response, Cookie, HttpRequest, HttpResponse, Url, H_COOKIE, H_LOCATION,
    H_ORIGIN, H_REFERER, H_REFERRER_POLICY, H_SET_COOKIE, H_STS, M_CONNECT, M_GET, M_HEAD,
    M_POST, M_TRACE, M_TRACK, MSG_CLOSECORRUPT, MSG_CORRUPT, MSG_FULLCORRUPT, MSG_TRIGGER,
    PROTO_HTTPS, RP_NOREFERRER, RP_ORIGIN,
};
use crate::runtime::{ChoiceCtx, Event, Relation, RelationError, StepEffect};
use crate::scenario::ScenarioTables;
use crate::scripts::ScriptInput;
use crate::server::attacker_outputs;
use crate::term::{dict, matches, Func, SubtermPath, Term};
use std::sync::Arc;

/// Field indices (1-based) of the browser state term:
/// `⟨windows, ids, secrets, cookies, localStorage, sessionStorage,
///   keyMapping, sts, DNSaddress, pendingDNS, pendingRequests, isCorrupted⟩`
pub mod state {
    pub const WINDOWS: usize = 1;
    pub const IDS: usize = 2;
    pub const SECRETS: usize = 3;
    pub const COOKIES: usize = 4;
    pub const LOCAL_STORAGE: usize = 5;
    pub const SESSION_STORAGE: usize = 6;
    pub const KEY_MAPPING: usize = 7;
    pub const STS: usize = 8;
    pub const DNS_ADDRESS: usize = 9;
    pub const PENDING_DNS: usize = 10;
    pub const PENDING_REQUESTS: usize = 11;
    pub const IS_CORRUPTED: usize = 12;
}

/// Window fields: `⟨nonce, documents, opener⟩`.
pub mod window {
    pub const NONCE: usize = 1;
    pub const DOCUMENTS: usize = 2;
    pub const OPENER: usize = 3;
}

/// Document fields:
/// `⟨nonce, location, headers, referrer, script, scriptstate, scriptinputs,
///   subwindows, active⟩`; a limited document is `⟨nonce, subwindows⟩`.
pub mod doc {
    pub const NONCE: usize = 1;
    pub const LOCATION: usize = 2;
    pub const HEADERS: usize = 3;
    pub const REFERRER: usize = 4;
    pub const SCRIPT: usize = 5;
    pub const SCRIPTSTATE: usize = 6;
    pub const SCRIPTINPUTS: usize = 7;
    pub const SUBWINDOWS: usize = 8;
    pub const ACTIVE: usize = 9;
}

// Command tags scripts can output.
pub const C_HREF: &str = "HREF";
pub const C_IFRAME: &str = "IFRAME";
pub const C_FORM: &str = "FORM";
pub const C_SETSCRIPT: &str = "SETSCRIPT";
pub const C_SETSCRIPTSTATE: &str = "SETSCRIPTSTATE";
pub const C_XMLHTTPREQUEST: &str = "XMLHTTPREQUEST";
pub const C_BACK: &str = "BACK";
pub const C_FORWARD: &str = "FORWARD";
pub const C_CLOSE: &str = "CLOSE";
pub const C_POSTMESSAGE: &str = "POSTMESSAGE";
pub const W_BLANK: &str = "_BLANK";

fn get(s: &Term, i: usize) -> Term {
    s.as_seq()
        .and_then(|v| v.get(i - 1).cloned())
        .unwrap_or(Term::Undef)
}

fn set(s: &Term, i: usize, v: Term) -> Term {
    let mut items = s.as_seq().expect("browser state is a sequence").to_vec();
    items[i - 1] = v;
    Term::seq(items)
}

fn is_full_doc(d: &Term) -> bool {
    d.as_seq().map(|v| v.len()) == Some(9)
}

fn doc_origin(d: &Term) -> Term {
    Url(get(d, doc::LOCATION)).origin()
}

/// Pointers to every window reachable through active documents, starting at
/// the top-level window list.
pub fn subwindows(s: &Term) -> Vec<SubtermPath> {
    let mut out = Vec::new();
    let windows = get(s, state::WINDOWS);
    for (i, _) in windows.as_seq().unwrap_or(&[]).iter().enumerate() {
        collect_windows(s, SubtermPath::new(&[state::WINDOWS, i + 1]), &mut out, false);
    }
    out
}

/// Like [`subwindows`] but also descending through inactive documents.
pub fn subwindows_all(s: &Term) -> Vec<SubtermPath> {
    let mut out = Vec::new();
    let windows = get(s, state::WINDOWS);
    for (i, _) in windows.as_seq().unwrap_or(&[]).iter().enumerate() {
        collect_windows(s, SubtermPath::new(&[state::WINDOWS, i + 1]), &mut out, true);
    }
    out
}

fn collect_windows(s: &Term, wp: SubtermPath, out: &mut Vec<SubtermPath>, include_inactive: bool) {
    let w = wp.get(s);
    if w.as_seq().map(|v| v.len()) != Some(3) {
        return;
    }
    out.push(wp.clone());
    let documents = get(&w, window::DOCUMENTS);
    for (j, d) in documents.as_seq().unwrap_or(&[]).iter().enumerate() {
        if !is_full_doc(d) {
            continue;
        }
        if !include_inactive && get(d, doc::ACTIVE) != Term::True {
            continue;
        }
        let subs = get(d, doc::SUBWINDOWS);
        for (k, _) in subs.as_seq().unwrap_or(&[]).iter().enumerate() {
            collect_windows(
                s,
                wp.push(window::DOCUMENTS).push(j + 1).push(doc::SUBWINDOWS).push(k + 1),
                out,
                include_inactive,
            );
        }
    }
}

/// Pointer to the active document of the window at `wp`, if any.
pub fn active_doc_path(s: &Term, wp: &SubtermPath) -> Option<SubtermPath> {
    let w = wp.get(s);
    let documents = get(&w, window::DOCUMENTS);
    for (j, d) in documents.as_seq().unwrap_or(&[]).iter().enumerate() {
        if is_full_doc(d) && get(d, doc::ACTIVE) == Term::True {
            return Some(wp.push(window::DOCUMENTS).push(j + 1));
        }
    }
    None
}

fn window_nonce(s: &Term, wp: &SubtermPath) -> Term {
    get(&wp.get(s), window::NONCE)
}

/// Direct child relation: `w ◁ w'` iff `w` is a subwindow of the active
/// document of `w'`.
fn child_of(s: &Term, w: &SubtermPath, parent: &SubtermPath) -> bool {
    if let Some(dp) = active_doc_path(s, parent) {
        let subs = get(&dp.get(s), doc::SUBWINDOWS);
        let wt = w.get(s);
        return subs.as_seq().unwrap_or(&[]).iter().any(|x| *x == wt);
    }
    false
}

fn descendant_of(s: &Term, w: &SubtermPath, anc: &SubtermPath) -> bool {
    // w ◁* anc through active documents; path prefixes capture exactly this.
    w.0.len() > anc.0.len() && w.0[..anc.0.len()] == anc.0[..]
}

fn is_top_level(wp: &SubtermPath) -> bool {
    wp.0.len() == 2
}

/// The windows the active document of `wp` is allowed to navigate.
pub fn navigable_windows(s: &Term, wp: &SubtermPath) -> Vec<SubtermPath> {
    let all = subwindows(s);
    let own_origin = active_doc_path(s, wp).map(|dp| doc_origin(&dp.get(s)));
    let mut allowed: Vec<SubtermPath> = Vec::new();
    let mut changed = true;
    while changed {
        changed = false;
        for cand in &all {
            if allowed.contains(cand) {
                continue;
            }
            let same_origin = match (&own_origin, active_doc_path(s, cand)) {
                (Some(o), Some(dp)) => doc_origin(&dp.get(s)) == *o,
                _ => false,
            };
            let top_level_parent = is_top_level(cand) && child_of(s, wp, cand);
            let nested_under_same_origin = !is_top_level(cand)
                && all.iter().any(|p| {
                    descendant_of(s, cand, p)
                        && match (&own_origin, active_doc_path(s, p)) {
                            (Some(o), Some(dp)) => doc_origin(&dp.get(s)) == *o,
                            _ => false,
                        }
                });
            let opener_navigable = is_top_level(cand) && {
                let opener = get(&cand.get(s), window::OPENER);
                opener != Term::Bot
                    && allowed
                        .iter()
                        .any(|p| window_nonce(s, p) == opener)
            };
            if same_origin || top_level_parent || nested_under_same_origin || opener_navigable {
                allowed.push(cand.clone());
                changed = true;
            }
        }
    }
    allowed
}

/// The view of the window tree a script in document `d` gets: inactive
/// documents dropped, non-same-origin documents limited, headers blanked.
pub fn clean_tree(s: &Term, origin: &Term) -> Term {
    let windows = get(s, state::WINDOWS);
    Term::seq(
        windows
            .as_seq()
            .unwrap_or(&[])
            .iter()
            .map(|w| clean_window(w, origin))
            .collect(),
    )
}

fn clean_window(w: &Term, origin: &Term) -> Term {
    let documents = get(w, window::DOCUMENTS);
    let cleaned: Vec<Term> = documents
        .as_seq()
        .unwrap_or(&[])
        .iter()
        .filter(|d| is_full_doc(d) && get(d, doc::ACTIVE) == Term::True)
        .map(|d| clean_doc(d, origin))
        .collect();
    Term::seq(vec![
        get(w, window::NONCE),
        Term::seq(cleaned),
        get(w, window::OPENER),
    ])
}

fn clean_doc(d: &Term, origin: &Term) -> Term {
    let subs = get(d, doc::SUBWINDOWS);
    let cleaned_subs = Term::seq(
        subs.as_seq()
            .unwrap_or(&[])
            .iter()
            .map(|w| clean_window(w, origin))
            .collect(),
    );
    if doc_origin(d) == *origin {
        Term::seq(vec![
            get(d, doc::NONCE),
            get(d, doc::LOCATION),
            Term::empty(), // headers blanked
            get(d, doc::REFERRER),
            get(d, doc::SCRIPT),
            get(d, doc::SCRIPTSTATE),
            get(d, doc::SCRIPTINPUTS),
            cleaned_subs,
            get(d, doc::ACTIVE),
        ])
    } else {
        Term::seq(vec![get(d, doc::NONCE), cleaned_subs])
    }
}

/// RFC6265-style merge of script-set cookies into the stored ones:
/// httpOnly cookies cannot be created or overwritten by scripts.
pub fn cookie_merge(old: &Term, new: &Term) -> Term {
    let mut incoming: Vec<Cookie> = Vec::new();
    for c in new.as_seq().unwrap_or(&[]) {
        if let Some(c) = Cookie::from_term(c) {
            if c.http_only() {
                continue;
            }
            incoming.retain(|prev| prev.name() != c.name());
            incoming.push(c);
        }
    }
    let mut merged: Vec<Term> = Vec::new();
    let mut used: Vec<Term> = Vec::new();
    for c in old.as_seq().unwrap_or(&[]) {
        let old_cookie = match Cookie::from_term(c) {
            Some(c) => c,
            None => continue,
        };
        match incoming.iter().find(|n| n.name() == old_cookie.name()) {
            Some(newer) if !old_cookie.http_only() => {
                merged.push(newer.term());
                used.push(newer.name());
            }
            Some(newer) => {
                merged.push(old_cookie.term());
                used.push(newer.name());
            }
            None => merged.push(old_cookie.term()),
        }
    }
    for n in incoming {
        if !used.contains(&n.name()) {
            merged.push(n.term());
        }
    }
    Term::seq(merged)
}

/// Replace any stored cookie with the same name, then append.
pub fn add_cookie(old: &Term, c: &Cookie) -> Term {
    let mut items: Vec<Term> = old
        .as_seq()
        .unwrap_or(&[])
        .iter()
        .filter(|x| Cookie::from_term(x).map(|x| x.name()) != Some(c.name()))
        .cloned()
        .collect();
    items.push(c.term());
    Term::seq(items)
}

/// The web browser relation (main algorithm plus its helper functions).
pub struct Browser {
    pub name: String,
    pub tables: Arc<ScenarioTables>,
}

struct Outputs(Vec<Event>);

impl Browser {
    fn http_send(
        &self,
        reference: Term,
        message: HttpRequest,
        url: Url,
        origin: Term,
        referrer: Term,
        referrer_policy: Term,
        s: Term,
        a: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        let mut url = url;
        let sts = get(&s, state::STS);
        if sts
            .as_seq()
            .unwrap_or(&[])
            .iter()
            .any(|d| *d == message.host())
        {
            url = url.with_protocol(PROTO_HTTPS);
        }
        let stored = dict::get(&get(&s, state::COOKIES), &message.host());
        let mut pairs = Vec::new();
        for c in stored.as_seq().unwrap_or(&[]) {
            if let Some(c) = Cookie::from_term(c) {
                if !c.secure() || url.is_https() {
                    pairs.push(dict::entry(c.name(), c.value()));
                }
            }
        }
        let mut message = message.set_header(H_COOKIE, Term::seq(pairs));
        if origin != Term::Bot {
            message = message.set_header(H_ORIGIN, origin);
        }
        let mut referrer = referrer;
        if referrer_policy == Term::str(RP_NOREFERRER) {
            referrer = Term::Bot;
        }
        if referrer != Term::Bot {
            if referrer_policy == Term::str(RP_ORIGIN) {
                if let Some(r) = Url::from_term(&referrer) {
                    referrer = Term::seq(vec![
                        Term::str(http::T_URL),
                        r.protocol(),
                        r.host(),
                        Term::str("/"),
                        Term::empty(),
                        Term::Bot,
                    ]);
                }
            }
            if let Some(r) = Url::from_term(&referrer) {
                referrer = r.with_fragment(Term::Bot).term();
            }
            message = message.set_header(H_REFERER, referrer);
        }
        ctx.marker(
            "send_request",
            vec![message.nonce(), message.host(), message.path(), message.method()],
        );
        let key = Term::proc_var(8);
        let pending = dict::set(
            &get(&s, state::PENDING_DNS),
            key.clone(),
            Term::seq(vec![reference, message.term(), url.term()]),
        );
        let s = set(&s, state::PENDING_DNS, pending);
        let dns = http::dns_request(message.host(), key);
        Ok(StepEffect::send(
            vec![Event::new(get(&s, state::DNS_ADDRESS), a.clone(), dns)],
            s,
        ))
    }

    fn cancel_nav(&self, nonce: &Term, s: Term) -> Term {
        let pending: Vec<Term> = get(&s, state::PENDING_REQUESTS)
            .as_seq()
            .unwrap_or(&[])
            .iter()
            .filter(|e| e.as_seq().and_then(|v| v.first()) != Some(nonce))
            .cloned()
            .collect();
        let s = set(&s, state::PENDING_REQUESTS, Term::seq(pending));
        let dns: Vec<Term> = get(&s, state::PENDING_DNS)
            .as_seq()
            .unwrap_or(&[])
            .iter()
            .filter(|e| {
                // entries are ⟨key, ⟨reference, message, url⟩⟩
                match e.as_seq() {
                    Some([_, v]) => v.as_seq().and_then(|v| v.first()) != Some(nonce),
                    _ => true,
                }
            })
            .cloned()
            .collect();
        set(&s, state::PENDING_DNS, Term::seq(dns))
    }

    fn nav_back(&self, wp: &SubtermPath, s: Term) -> Term {
        let w = wp.get(&s);
        let documents = get(&w, window::DOCUMENTS);
        let docs = documents.as_seq().unwrap_or(&[]);
        for j in 1..docs.len() {
            if is_full_doc(&docs[j]) && get(&docs[j], doc::ACTIVE) == Term::True {
                let dp = wp.push(window::DOCUMENTS);
                let s = dp.push(j + 1).push(doc::ACTIVE).set(&s, Term::Bot);
                let s = dp.push(j).push(doc::ACTIVE).set(&s, Term::True);
                return self.cancel_nav(&window_nonce(&s, wp), s);
            }
        }
        s
    }

    fn nav_forward(&self, wp: &SubtermPath, s: Term) -> Term {
        let w = wp.get(&s);
        let documents = get(&w, window::DOCUMENTS);
        let docs = documents.as_seq().unwrap_or(&[]);
        for j in 0..docs.len().saturating_sub(1) {
            if is_full_doc(&docs[j]) && get(&docs[j], doc::ACTIVE) == Term::True {
                let dp = wp.push(window::DOCUMENTS);
                let s = dp.push(j + 1).push(doc::ACTIVE).set(&s, Term::Bot);
                let s = dp.push(j + 2).push(doc::ACTIVE).set(&s, Term::True);
                return self.cancel_nav(&window_nonce(&s, wp), s);
            }
        }
        s
    }

    /// Determine the window a script may navigate; `_BLANK` opens a fresh
    /// window (placeholder ν_9).
    fn get_navigable_window(
        &self,
        wp: &SubtermPath,
        window: &Term,
        noreferrer: bool,
        s: Term,
    ) -> (Term, SubtermPath) {
        if *window == Term::str(W_BLANK) {
            let opener = if noreferrer {
                Term::Bot
            } else {
                window_nonce(&s, wp)
            };
            let w = Term::seq(vec![Term::proc_var(9), Term::empty(), opener]);
            let windows = get(&s, state::WINDOWS);
            let mut items = windows.as_seq().unwrap_or(&[]).to_vec();
            items.push(w);
            let n = items.len();
            let s = set(&s, state::WINDOWS, Term::seq(items));
            return (s, SubtermPath::new(&[state::WINDOWS, n]));
        }
        for cand in navigable_windows(&s, wp) {
            if window_nonce(&s, &cand) == *window {
                return (s, cand);
            }
        }
        (s, wp.clone())
    }

    fn get_window(&self, wp: &SubtermPath, window: &Term, s: &Term) -> SubtermPath {
        for cand in subwindows(s) {
            if window_nonce(s, &cand) == *window {
                let same = match (active_doc_path(s, &cand), active_doc_path(s, wp)) {
                    (Some(a), Some(b)) => doc_origin(&a.get(s)) == doc_origin(&b.get(s)),
                    _ => false,
                };
                if same {
                    return cand;
                }
            }
        }
        wp.clone()
    }

    fn run_script(
        &self,
        wp: &SubtermPath,
        dp: &SubtermPath,
        s: Term,
        a: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        let d = dp.get(&s);
        let origin = doc_origin(&d);
        let origin_host = get(&d, doc::LOCATION);
        let origin_host = Url(origin_host).host();

        let tree = clean_tree(&s, &origin);
        let mut cookie_pairs = Vec::new();
        for c in dict::get(&get(&s, state::COOKIES), &origin_host)
            .as_seq()
            .unwrap_or(&[])
        {
            if let Some(c) = Cookie::from_term(c) {
                let proto_ok = !c.secure() || origin.as_seq().map(|o| o[1].clone()) == Some(Term::str(PROTO_HTTPS));
                if !c.http_only() && proto_ok {
                    cookie_pairs.push(dict::entry(c.name(), c.value()));
                }
            }
        }
        let tlw_nonce = window_nonce(&s, &SubtermPath::new(&wp.0[..2]));
        let session_key = Term::seq(vec![origin.clone(), tlw_nonce.clone()]);
        let session_storage = dict::get(&get(&s, state::SESSION_STORAGE), &session_key);
        let local_storage = dict::get(&get(&s, state::LOCAL_STORAGE), &origin);
        let secrets = dict::get(&get(&s, state::SECRETS), &origin);

        let script_name = get(&d, doc::SCRIPT);
        let input = ScriptInput {
            tree,
            doc_nonce: get(&d, doc::NONCE),
            scriptstate: get(&d, doc::SCRIPTSTATE),
            scriptinputs: get(&d, doc::SCRIPTINPUTS),
            cookies: Term::seq(cookie_pairs),
            local_storage: local_storage.clone(),
            session_storage: session_storage.clone(),
            ids: get(&s, state::IDS),
            secrets,
        };
        let script = self.tables.script_for(&script_name)?;
        ctx.marker("script_executed", vec![script_name.clone(), origin.clone()]);
        let out = script.run(&input, &self.tables, ctx)?;
        // λ placeholders become ν_10, ν_11, …
        let conv = |t: &Term| crate::term::script_vars_to_process(t, 10);
        let new_scriptstate = conv(&out.state);
        let cookies_out = conv(&out.cookies);
        let local_out = conv(&out.local_storage);
        let session_out = conv(&out.session_storage);
        let command = conv(&out.command);

        let merged = cookie_merge(
            &dict::get(&get(&s, state::COOKIES), &origin_host),
            &cookies_out,
        );
        let mut s = set(
            &s,
            state::COOKIES,
            dict::set(&get(&s, state::COOKIES), origin_host.clone(), merged),
        );
        s = set(
            &s,
            state::LOCAL_STORAGE,
            dict::set(&get(&s, state::LOCAL_STORAGE), origin.clone(), local_out),
        );
        s = set(
            &s,
            state::SESSION_STORAGE,
            dict::set(&get(&s, state::SESSION_STORAGE), session_key, session_out),
        );
        s = dp.push(doc::SCRIPTSTATE).set(&s, new_scriptstate);

        let parts = command.as_seq().unwrap_or(&[]).to_vec();
        let tag = parts.first().cloned().unwrap_or(Term::Undef);

        if tag == Term::str(C_HREF) && parts.len() == 4 {
            let url = Url::from_term(&parts[1]).ok_or_else(|| bad_cmd("HREF"))?;
            let noreferrer = parts[3] == Term::True;
            let (s, wp2) = self.get_navigable_window(wp, &parts[2], noreferrer, s);
            let req = HttpRequest::new(
                Term::proc_var(4),
                M_GET,
                url.host(),
                url.path(),
                url.parameters(),
                Term::empty(),
                Term::empty(),
            );
            let policy = if noreferrer {
                Term::str(RP_NOREFERRER)
            } else {
                dict::get_str(&get(&dp.get(&s), doc::HEADERS), H_REFERRER_POLICY)
            };
            let referrer = get(&dp.get(&s), doc::LOCATION);
            ctx.marker("script_command", vec![Term::str(C_HREF), url.term()]);
            let nonce = window_nonce(&s, &wp2);
            let s = self.cancel_nav(&nonce, s);
            return self.http_send(nonce, req, url, Term::Bot, referrer, policy, s, a, ctx);
        }
        if tag == Term::str(C_IFRAME) && parts.len() == 3 {
            let url = Url::from_term(&parts[1]).ok_or_else(|| bad_cmd("IFRAME"))?;
            let wp2 = self.get_window(wp, &parts[2], &s);
            let req = HttpRequest::new(
                Term::proc_var(4),
                M_GET,
                url.host(),
                url.path(),
                url.parameters(),
                Term::empty(),
                Term::empty(),
            );
            let referrer = active_doc_path(&s, &wp2)
                .map(|p| get(&p.get(&s), doc::LOCATION))
                .unwrap_or(Term::Bot);
            let policy = dict::get_str(&get(&dp.get(&s), doc::HEADERS), H_REFERRER_POLICY);
            let sub = Term::seq(vec![Term::proc_var(5), Term::empty(), Term::Bot]);
            let adp = active_doc_path(&s, &wp2).ok_or_else(|| bad_cmd("IFRAME"))?;
            let subs_path = adp.push(doc::SUBWINDOWS);
            let mut subs = subs_path.get(&s).as_seq().unwrap_or(&[]).to_vec();
            subs.push(sub);
            let s = subs_path.set(&s, Term::seq(subs));
            ctx.marker("script_command", vec![Term::str(C_IFRAME), url.term()]);
            return self.http_send(
                Term::proc_var(5),
                req,
                url,
                Term::Bot,
                referrer,
                policy,
                s,
                a,
                ctx,
            );
        }
        if tag == Term::str(C_FORM) && parts.len() == 5 {
            let url = Url::from_term(&parts[1]).ok_or_else(|| bad_cmd("FORM"))?;
            let method = parts[2].clone();
            let data = parts[3].clone();
            if method != Term::str(M_GET) && method != Term::str(M_POST) {
                return Ok(StepEffect::stop());
            }
            let (s, wp2) = self.get_navigable_window(wp, &parts[4], false, s);
            let (body, parameters, origin_hdr) = if method == Term::str(M_GET) {
                (Term::empty(), data, Term::Bot)
            } else {
                (data, url.parameters(), origin.clone())
            };
            let req = HttpRequest::new(
                Term::proc_var(4),
                method.as_str().unwrap_or(M_POST),
                url.host(),
                url.path(),
                parameters,
                Term::empty(),
                body,
            );
            let referrer = get(&dp.get(&s), doc::LOCATION);
            let policy = dict::get_str(&get(&dp.get(&s), doc::HEADERS), H_REFERRER_POLICY);
            ctx.marker(
                "form_submit",
                vec![script_name.clone(), url.term(), Term::proc_var(4)],
            );
            let nonce = window_nonce(&s, &wp2);
            let s = self.cancel_nav(&nonce, s);
            return self.http_send(nonce, req, url, origin_hdr, referrer, policy, s, a, ctx);
        }
        if tag == Term::str(C_SETSCRIPT) && parts.len() == 3 {
            let wp2 = self.get_window(wp, &parts[1], &s);
            if let Some(adp) = active_doc_path(&s, &wp2) {
                let s = adp.push(doc::SCRIPT).set(&s, parts[2].clone());
                return Ok(StepEffect::state(s));
            }
            return Ok(StepEffect::state(s));
        }
        if tag == Term::str(C_SETSCRIPTSTATE) && parts.len() == 3 {
            let wp2 = self.get_window(wp, &parts[1], &s);
            if let Some(adp) = active_doc_path(&s, &wp2) {
                let s = adp.push(doc::SCRIPTSTATE).set(&s, parts[2].clone());
                return Ok(StepEffect::state(s));
            }
            return Ok(StepEffect::state(s));
        }
        if tag == Term::str(C_XMLHTTPREQUEST) && parts.len() == 5 {
            let url = Url::from_term(&parts[1]).ok_or_else(|| bad_cmd("XHR"))?;
            let method = parts[2].clone();
            let mut data = parts[3].clone();
            let xhr_reference = parts[4].clone();
            if [M_CONNECT, M_TRACE, M_TRACK]
                .iter()
                .any(|m| method == Term::str(m))
            {
                return Ok(StepEffect::stop());
            }
            let d = dp.get(&s);
            if url.host() != Url(get(&d, doc::LOCATION)).host()
                || url.protocol() != Url(get(&d, doc::LOCATION)).protocol()
            {
                return Ok(StepEffect::stop());
            }
            let origin_hdr;
            if method == Term::str(M_GET) || method == Term::str(M_HEAD) {
                data = Term::empty();
                origin_hdr = Term::Bot;
            } else {
                origin_hdr = origin.clone();
            }
            let req = HttpRequest::new(
                Term::proc_var(4),
                method.as_str().unwrap_or(M_GET),
                url.host(),
                url.path(),
                url.parameters(),
                Term::empty(),
                data,
            );
            let referrer = get(&d, doc::LOCATION);
            let policy = dict::get_str(&get(&d, doc::HEADERS), H_REFERRER_POLICY);
            let reference = Term::seq(vec![get(&d, doc::NONCE), xhr_reference]);
            ctx.marker("script_command", vec![Term::str(C_XMLHTTPREQUEST), url.term()]);
            return self.http_send(reference, req, url, origin_hdr, referrer, policy, s, a, ctx);
        }
        if tag == Term::str(C_BACK) && parts.len() == 2 {
            let (s, wp2) = self.get_navigable_window(wp, &parts[1], false, s);
            let s = self.nav_back(&wp2, s);
            return Ok(StepEffect::state(s));
        }
        if tag == Term::str(C_FORWARD) && parts.len() == 2 {
            let (s, wp2) = self.get_navigable_window(wp, &parts[1], false, s);
            let s = self.nav_forward(&wp2, s);
            return Ok(StepEffect::state(s));
        }
        if tag == Term::str(C_CLOSE) && parts.len() == 2 {
            let (s, wp2) = self.get_navigable_window(wp, &parts[1], false, s);
            // remove the window from the sequence containing it
            let parent = SubtermPath::new(&wp2.0[..wp2.0.len() - 1]);
            let idx = *wp2.0.last().unwrap();
            let seq = parent.get(&s);
            let mut items = seq.as_seq().unwrap_or(&[]).to_vec();
            if idx >= 1 && idx <= items.len() {
                items.remove(idx - 1);
            }
            let s = parent.set(&s, Term::seq(items));
            return Ok(StepEffect::state(s));
        }
        if tag == Term::str(C_POSTMESSAGE) && parts.len() == 4 {
            let target_nonce = parts[1].clone();
            let message = parts[2].clone();
            let target_origin = parts[3].clone();
            for cand in subwindows(&s) {
                if window_nonce(&s, &cand) == target_nonce {
                    let documents = get(&cand.get(&s), window::DOCUMENTS);
                    for (j, dterm) in documents.as_seq().unwrap_or(&[]).iter().enumerate() {
                        if is_full_doc(dterm) && get(dterm, doc::ACTIVE) == Term::True {
                            let origin_ok = target_origin == Term::Bot
                                || doc_origin(dterm) == target_origin;
                            if origin_ok {
                                let entry = Term::seq(vec![
                                    Term::str(C_POSTMESSAGE),
                                    window_nonce(&s, wp),
                                    origin.clone(),
                                    message.clone(),
                                ]);
                                let sip = cand
                                    .push(window::DOCUMENTS)
                                    .push(j + 1)
                                    .push(doc::SCRIPTINPUTS);
                                let mut inputs =
                                    sip.get(&s).as_seq().unwrap_or(&[]).to_vec();
                                inputs.push(entry);
                                let s = sip.set(&s, Term::seq(inputs));
                                return Ok(StepEffect::state(s));
                            }
                        }
                    }
                    break;
                }
            }
            return Ok(StepEffect::state(s));
        }
        Ok(StepEffect::stop())
    }

    fn process_response(
        &self,
        response: &HttpResponse,
        reference: &Term,
        request: &HttpRequest,
        request_url: &Url,
        s: Term,
        a: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        let mut s = s;
        // Store cookies first.
        if response.has_header(H_SET_COOKIE) {
            for c in response.header(H_SET_COOKIE).as_seq().unwrap_or(&[]) {
                if let Some(c) = Cookie::from_term(c) {
                    let stored = dict::get(&get(&s, state::COOKIES), &request.host());
                    let updated = add_cookie(&stored, &c);
                    s = set(
                        &s,
                        state::COOKIES,
                        dict::set(&get(&s, state::COOKIES), request.host(), updated),
                    );
                }
            }
        }
        if response.has_header(H_STS) && request_url.is_https() {
            let mut sts = get(&s, state::STS).as_seq().unwrap_or(&[]).to_vec();
            sts.push(request.host());
            s = set(&s, state::STS, Term::seq(sts));
        }
        let referrer = if request.has_header(H_REFERER) {
            request.header(H_REFERER)
        } else {
            Term::Bot
        };
        let status = response.status();
        if response.has_header(H_LOCATION) && matches!(status, Some(303) | Some(307)) {
            if let Some(mut url) = Url::from_term(&response.header(H_LOCATION)) {
                if url.fragment() == Term::Bot {
                    url = url.with_fragment(request_url.fragment());
                }
                let mut method = request.method();
                let mut body = request.body();
                let origin = if request.has_header(H_ORIGIN) {
                    Term::seq(vec![
                        request.header(H_ORIGIN),
                        http::origin(request.host(), url.protocol()),
                    ])
                } else {
                    Term::Bot
                };
                if status == Some(303)
                    && method != Term::str(M_GET)
                    && method != Term::str(M_HEAD)
                {
                    method = Term::str(M_GET);
                    body = Term::empty();
                }
                let is_window = subwindows(&s)
                    .iter()
                    .any(|wp| window_nonce(&s, wp) == *reference);
                if is_window {
                    let req = HttpRequest::new(
                        Term::proc_var(6),
                        method.as_str().unwrap_or(M_GET),
                        url.host(),
                        url.path(),
                        url.parameters(),
                        Term::empty(),
                        body,
                    );
                    let policy = response.header(H_REFERRER_POLICY);
                    ctx.marker("redirect", vec![
                        response.field_status_for_trace(),
                        url.term(),
                        req.body(),
                    ]);
                    return self.http_send(
                        reference.clone(),
                        req,
                        url,
                        origin,
                        referrer,
                        policy,
                        s,
                        a,
                        ctx,
                    );
                }
            }
        }
        // Normal response into a window …
        if let Some(wp) = subwindows(&s)
            .into_iter()
            .find(|wp| window_nonce(&s, wp) == *reference)
        {
            let body = response.body();
            if !matches(&body, &Term::seq(vec![Term::wildcard(), Term::wildcard()])) {
                return Ok(StepEffect::state(s));
            }
            let parts = body.as_seq().unwrap();
            let document = Term::seq(vec![
                Term::proc_var(7),
                request_url.term(),
                response.headers(),
                request.header(H_REFERER),
                parts[0].clone(),
                parts[1].clone(),
                Term::empty(),
                Term::empty(),
                Term::True,
            ]);
            let docs_path = wp.push(window::DOCUMENTS);
            let docs = docs_path.get(&s);
            let items = docs.as_seq().unwrap_or(&[]).to_vec();
            let new_docs = if items.is_empty() {
                vec![document]
            } else {
                let mut out = Vec::new();
                for (i, d) in items.iter().enumerate() {
                    if is_full_doc(d) && get(d, doc::ACTIVE) == Term::True {
                        let mut deactivated = d.clone();
                        deactivated = SubtermPath::new(&[doc::ACTIVE])
                            .set(&deactivated, Term::Bot);
                        out.push(deactivated);
                        let _ = i;
                        break;
                    } else {
                        out.push(d.clone());
                    }
                }
                out.push(document);
                out
            };
            let s = docs_path.set(&s, Term::seq(new_docs));
            return Ok(StepEffect::state(s));
        }
        // … or an XHR response delivered to a document's script inputs.
        let doc_ref = Term::proj(1, reference.clone());
        let doc_ref = crate::term::normalize(&doc_ref);
        for wp in subwindows(&s) {
            if let Some(adp) = active_doc_path(&s, &wp) {
                if get(&adp.get(&s), doc::NONCE) == doc_ref {
                    let headers = dict::remove(&response.headers(), &Term::str(H_SET_COOKIE));
                    let entry = Term::seq(vec![
                        Term::str(C_XMLHTTPREQUEST),
                        headers,
                        response.body(),
                        crate::term::normalize(&Term::proj(2, reference.clone())),
                    ]);
                    let sip = adp.push(doc::SCRIPTINPUTS);
                    let mut inputs = sip.get(&s).as_seq().unwrap_or(&[]).to_vec();
                    inputs.push(entry);
                    let s = sip.set(&s, Term::seq(inputs));
                    return Ok(StepEffect::state(s));
                }
            }
        }
        Ok(StepEffect::state(s))
    }
}

fn bad_cmd(name: &str) -> RelationError {
    RelationError::Attacker(format!("malformed script command {name}"))
}

impl HttpResponse {
    fn field_status_for_trace(&self) -> Term {
        self.0.as_seq().map(|v| v[2].clone()).unwrap_or(Term::Undef)
    }
}

impl Relation for Browser {
    fn relate(
        &self,
        ev: &Event,
        st: &Term,
        ctx: &mut ChoiceCtx,
    ) -> Result<StepEffect, RelationError> {
        let (a, m) = (&ev.to, &ev.msg);
        let s = st.clone();

        if get(&s, state::IS_CORRUPTED) != Term::Bot {
            // Collect incoming messages, then emit derivable events.
            let collected = Term::seq(vec![m.clone(), get(&s, state::PENDING_REQUESTS)]);
            let s2 = set(&s, state::PENDING_REQUESTS, collected);
            let out = attacker_outputs(&[s2.clone()], ev, a, &self.tables, ctx)?;
            return Ok(StepEffect::send(out, s2));
        }

        if *m == Term::str(MSG_TRIGGER) {
            let switch = ["script", "urlbar", "reload", "forward", "back"]
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>();
            let pick = ctx.choose("switch", &switch)?;
            let switch = &switch[pick];

            let windows: Vec<SubtermPath> = subwindows(&s)
                .into_iter()
                .filter(|wp| !get(&wp.get(&s), window::DOCUMENTS).is_empty_seq())
                .collect();
            let top_level: Vec<SubtermPath> = windows
                .iter()
                .filter(|wp| is_top_level(wp))
                .cloned()
                .collect();

            match switch.as_str() {
                "script" => {
                    if windows.is_empty() {
                        return Ok(StepEffect::stop());
                    }
                    let labels: Vec<String> = windows
                        .iter()
                        .map(|wp| window_nonce(&s, wp).to_string())
                        .collect();
                    let i = ctx.choose("window", &labels)?;
                    let wp = windows[i].clone();
                    let dp = match active_doc_path(&s, &wp) {
                        Some(dp) => dp,
                        None => return Ok(StepEffect::stop()),
                    };
                    self.run_script(&wp, &dp, s, a, ctx)
                }
                "urlbar" => {
                    let new_window = ctx.choose_bool("newwindow")?;
                    let (s, window_nonce_term) = if new_window || top_level.is_empty() {
                        let w = Term::seq(vec![Term::proc_var(1), Term::empty(), Term::Bot]);
                        let mut items =
                            get(&s, state::WINDOWS).as_seq().unwrap_or(&[]).to_vec();
                        items.push(w);
                        (
                            set(&s, state::WINDOWS, Term::seq(items)),
                            Term::proc_var(1),
                        )
                    } else {
                        let labels: Vec<String> = top_level
                            .iter()
                            .map(|wp| window_nonce(&s, wp).to_string())
                            .collect();
                        let i = ctx.choose("tlw", &labels)?;
                        let n = window_nonce(&s, &top_level[i]);
                        (s, n)
                    };
                    let urls = self.tables.universes.urlbar_urls.clone();
                    let url_term = ctx.choose_term("url", &urls)?;
                    let url = Url::from_term(&url_term)
                        .ok_or_else(|| bad_cmd("urlbar url"))?;
                    let req = HttpRequest::new(
                        Term::proc_var(2),
                        M_GET,
                        url.host(),
                        url.path(),
                        url.parameters(),
                        Term::empty(),
                        Term::empty(),
                    );
                    self.http_send(
                        window_nonce_term,
                        req,
                        url,
                        Term::Bot,
                        Term::Bot,
                        Term::Bot,
                        s,
                        a,
                        ctx,
                    )
                }
                "reload" => {
                    if windows.is_empty() {
                        return Ok(StepEffect::stop());
                    }
                    let labels: Vec<String> = windows
                        .iter()
                        .map(|wp| window_nonce(&s, wp).to_string())
                        .collect();
                    let i = ctx.choose("window", &labels)?;
                    let wp = windows[i].clone();
                    let dp = match active_doc_path(&s, &wp) {
                        Some(dp) => dp,
                        None => return Ok(StepEffect::stop()),
                    };
                    let url = Url(get(&dp.get(&s), doc::LOCATION));
                    let req = HttpRequest::new(
                        Term::proc_var(2),
                        M_GET,
                        url.host(),
                        url.path(),
                        url.parameters(),
                        Term::empty(),
                        Term::empty(),
                    );
                    let referrer = get(&dp.get(&s), doc::REFERRER);
                    let nonce = window_nonce(&s, &wp);
                    let s = self.cancel_nav(&nonce, s);
                    self.http_send(nonce, req, url, Term::Bot, referrer, Term::Bot, s, a, ctx)
                }
                "forward" => {
                    if windows.is_empty() {
                        return Ok(StepEffect::stop());
                    }
                    let labels: Vec<String> = windows
                        .iter()
                        .map(|wp| window_nonce(&s, wp).to_string())
                        .collect();
                    let i = ctx.choose("window", &labels)?;
                    Ok(StepEffect::state(self.nav_forward(&windows[i].clone(), s)))
                }
                "back" => {
                    if windows.is_empty() {
                        return Ok(StepEffect::stop());
                    }
                    let labels: Vec<String> = windows
                        .iter()
                        .map(|wp| window_nonce(&s, wp).to_string())
                        .collect();
                    let i = ctx.choose("window", &labels)?;
                    Ok(StepEffect::state(self.nav_back(&windows[i].clone(), s)))
                }
                _ => unreachable!(),
            }
        } else if *m == Term::str(MSG_FULLCORRUPT) {
            Ok(StepEffect::state(set(
                &s,
                state::IS_CORRUPTED,
                Term::str(MSG_FULLCORRUPT),
            )))
        } else if *m == Term::str(MSG_CLOSECORRUPT) {
            // Close the browser: session data wiped, persistent cookies kept.
            let mut s2 = set(&s, state::SECRETS, Term::empty());
            s2 = set(&s2, state::WINDOWS, Term::empty());
            s2 = set(&s2, state::PENDING_DNS, Term::empty());
            s2 = set(&s2, state::PENDING_REQUESTS, Term::empty());
            s2 = set(&s2, state::SESSION_STORAGE, Term::empty());
            let kept: Vec<Term> = get(&s, state::COOKIES)
                .as_seq()
                .unwrap_or(&[])
                .iter()
                .map(|entry| match entry.as_seq() {
                    Some([host, cookies]) => {
                        let remaining: Vec<Term> = cookies
                            .as_seq()
                            .unwrap_or(&[])
                            .iter()
                            .filter(|c| {
                                Cookie::from_term(c).map(|c| !c.session()).unwrap_or(false)
                            })
                            .cloned()
                            .collect();
                        dict::entry(host.clone(), Term::seq(remaining))
                    }
                    _ => entry.clone(),
                })
                .collect();
            s2 = set(&s2, state::COOKIES, Term::seq(kept));
            s2 = set(&s2, state::IS_CORRUPTED, Term::str(MSG_CLOSECORRUPT));
            Ok(StepEffect::state(s2))
        } else if *m == Term::str(MSG_CORRUPT) {
            // Browsers only react to FULLCORRUPT/CLOSECORRUPT.
            Ok(StepEffect::stop())
        } else {
            // Encrypted HTTP response?
            let pending = get(&s, state::PENDING_REQUESTS);
            for (i, entry) in pending.as_seq().unwrap_or(&[]).iter().enumerate() {
                if let Some([reference, request, url, key, _peer]) = entry.as_seq() {
                    if *key != Term::Bot {
                        if let Some(resp) = http::https_decrypt_response(m, key) {
                            let request = HttpRequest(request.clone());
                            if resp.nonce() != request.nonce() {
                                return Ok(StepEffect::stop());
                            }
                            let url = Url(url.clone());
                            let mut items = pending.as_seq().unwrap().to_vec();
                            items.remove(i);
                            let s2 = set(&s, state::PENDING_REQUESTS, Term::seq(items));
                            return self.process_response(
                                &resp, reference, &request, &url, s2, a, ctx,
                            );
                        }
                    }
                }
            }
            // Plain HTTP response?
            if let Some(resp) = HttpResponse::from_term(m) {
                for (i, entry) in pending.as_seq().unwrap_or(&[]).iter().enumerate() {
                    if let Some([reference, request, url, key, _peer]) = entry.as_seq() {
                        let request = HttpRequest(request.clone());
                        if *key == Term::Bot && resp.nonce() == request.nonce() {
                            let url = Url(url.clone());
                            let mut items = pending.as_seq().unwrap().to_vec();
                            items.remove(i);
                            let s2 = set(&s, state::PENDING_REQUESTS, Term::seq(items));
                            return self.process_response(
                                &resp, reference, &request, &url, s2, a, ctx,
                            );
                        }
                    }
                }
            }
            // DNS response?
            if let Some(dns) = as_dns_response(m) {
                let pending_dns = get(&s, state::PENDING_DNS);
                if !dict::contains(&pending_dns, &dns.nonce)
                    || !matches!(dns.address, Term::Addr(_))
                {
                    return Ok(StepEffect::stop());
                }
                let entry = dict::get(&pending_dns, &dns.nonce);
                let (reference, message, url) = match entry.as_seq() {
                    Some([r, msg, u]) => (r.clone(), HttpRequest(msg.clone()), Url(u.clone())),
                    _ => return Ok(StepEffect::stop()),
                };
                if dns.domain != message.host() {
                    return Ok(StepEffect::stop());
                }
                let mut items = get(&s, state::PENDING_REQUESTS)
                    .as_seq()
                    .unwrap_or(&[])
                    .to_vec();
                let outgoing;
                if url.is_https() {
                    let sym = Term::proc_var(3);
                    items.push(Term::seq(vec![
                        reference,
                        message.term(),
                        url.term(),
                        sym.clone(),
                        dns.address.clone(),
                    ]));
                    let pubkey =
                        dict::get(&get(&s, state::KEY_MAPPING), &message.host());
                    outgoing = http::https_encrypt_request(&message, sym, pubkey);
                } else {
                    items.push(Term::seq(vec![
                        reference,
                        message.term(),
                        url.term(),
                        Term::Bot,
                        dns.address.clone(),
                    ]));
                    outgoing = message.term();
                }
                let mut s2 = set(&s, state::PENDING_REQUESTS, Term::seq(items));
                s2 = set(
                    &s2,
                    state::PENDING_DNS,
                    dict::remove(&pending_dns, &dns.nonce),
                );
                return Ok(StepEffect::send(
                    vec![Event::new(dns.address, a.clone(), outgoing)],
                    s2,
                ));
            }
            Ok(StepEffect::stop())
        }
    }
}

#[allow(unused_imports)]
use crate::term::Func as _FuncUnused;
