//! Script relations: the attacker script plus the three honest scripts used
//! by relying parties and identity providers.

use crate::browser::{C_FORM, C_HREF};
use crate::http::{Url, M_POST, PROTO_HTTPS};
use crate::runtime::{ChoiceCtx, RelationError};
use crate::scenario::ScenarioTables;
use crate::term::{dict, Term};

pub const SCRIPT_ATTACKER: &str = "att_script";
pub const SCRIPT_RP_INDEX: &str = "script_rp_index";
pub const SCRIPT_RP_GET_FRAGMENT: &str = "script_get_fragment";
pub const SCRIPT_IDP_FORM: &str = "script_idp_form";

/// What the browser hands to a script: the cleaned window tree, its own
/// document reference, persisted script state, inputs,, cookies (httpOnly
/// excluded), both storages, identities and secrets for the origin.
#[derive(Debug, Clone)]
pub struct ScriptInput {
    pub tree: Term,
    pub doc_nonce: Term,
    pub scriptstate: Term,
    pub scriptinputs: Term,
    pub cookies: Term,
    pub local_storage: Term,
    pub session_storage: Term,
    pub ids: Term,
    pub secrets: Term,
}

impl ScriptInput {
    pub fn term(&self) -> Term {
        Term::seq(vec![
            self.tree.clone(),
            self.doc_nonce.clone(),
            self.scriptstate.clone(),
            self.scriptinputs.clone(),
            self.cookies.clone(),
            self.local_storage.clone(),
            self.session_storage.clone(),
            self.ids.clone(),
            self.secrets.clone(),
        ])
    }
}

/// Script output `⟨scriptstate', cookies', localStorage', sessionStorage',
/// command⟩`; fresh values appear as λ placeholders.
#[derive(Debug, Clone)]
pub struct ScriptOutput {
    pub state: Term,
    pub cookies: Term,
    pub local_storage: Term,
    pub session_storage: Term,
    pub command: Term,
}

impl ScriptOutput {
    /// Echo all stores unchanged and issue `command`.
    fn command(input: &ScriptInput, command: Term) -> ScriptOutput {
        ScriptOutput {
            state: input.scriptstate.clone(),
            cookies: input.cookies.clone(),
            local_storage: input.local_storage.clone(),
            session_storage: input.session_storage.clone(),
            command,
        }
    }
}

pub trait Script: Send + Sync {
    fn run(
        &self,
        input: &ScriptInput,
        tables: &ScenarioTables,
        ctx: &mut ChoiceCtx,
    ) -> Result<ScriptOutput, RelationError>;
}

/// Find the URL of the document identified by `doc_nonce` in the cleaned
/// tree; ♦ when it is not visible.
pub fn get_url(tree: &Term, doc_nonce: &Term) -> Term {
    fn search_windows(windows: &Term, doc_nonce: &Term) -> Option<Term> {
        for w in windows.as_seq().unwrap_or(&[]) {
            let docs = w.as_seq().and_then(|v| v.get(1).cloned())?;
            for d in docs.as_seq().unwrap_or(&[]) {
                if let Some(items) = d.as_seq() {
                    if items.len() == 9 && items[0] == *doc_nonce {
                        return Some(items[1].clone());
                    }
                    let subs = if items.len() == 9 { &items[7] } else { &items[1] };
                    if let Some(found) = search_windows(subs, doc_nonce) {
                        return Some(found);
                    }
                }
            }
        }
        None
    }
    search_windows(tree, doc_nonce).unwrap_or(Term::Undef)
}

/// Index page of a relying party: either start a login by posting a chosen
/// identity to `/startLogin`, or follow some link.
pub struct ScriptRpIndex;

impl Script for ScriptRpIndex {
    fn run(
        &self,
        input: &ScriptInput,
        tables: &ScenarioTables,
        ctx: &mut ChoiceCtx,
    ) -> Result<ScriptOutput, RelationError> {
        let branch = ctx.choose(
            "rp_index_branch",
            &["auth".to_string(), "link".to_string()],
        )?;
        if branch == 0 {
            let url = get_url(&input.tree, &input.doc_nonce);
            let host = Url::from_term(&url)
                .map(|u| u.host())
                .unwrap_or(Term::Undef);
            let ids = input.ids.as_seq().unwrap_or(&[]).to_vec();
            let id = ctx.choose_term("rp_index_id", &ids)?;
            let target = Term::seq(vec![
                Term::str(crate::http::T_URL),
                Term::str(PROTO_HTTPS),
                host,
                Term::str("/startLogin"),
                Term::empty(),
                Term::empty(),
            ]);
            let command = Term::seq(vec![
                Term::str(C_FORM),
                target,
                Term::str(M_POST),
                id,
                Term::Bot,
            ]);
            ctx.marker("rp_index_start_login", vec![]);
            Ok(ScriptOutput::command(input, command))
        } else {
            let urls = &tables.universes.link_urls;
            let url = ctx.choose_term("link_url", urls)?;
            let command = Term::seq(vec![Term::str(C_HREF), url, Term::Bot, Term::Bot]);
            Ok(ScriptOutput::command(input, command))
        }
    }
}

/// Fragment-forwarding script served at the RP redirection endpoint: posts
/// the URL fragment, together with the `iss` parameter, back to the RP.
///
/// When the deployment is careless about referrer policy the page may also
/// contain outbound links; that variant adds a `link` branch.
pub struct ScriptRpGetFragment;

impl Script for ScriptRpGetFragment {
    fn run(
        &self,
        input: &ScriptInput,
        tables: &ScenarioTables,
        ctx: &mut ChoiceCtx,
    ) -> Result<ScriptOutput, RelationError> {
        if tables.mitigations.careless_referrer() && !tables.universes.link_urls.is_empty() {
            let branch = ctx.choose(
                "get_fragment_branch",
                &["submit".to_string(), "link".to_string()],
            )?;
            if branch == 1 {
                let url = ctx.choose_term("link_url", &tables.universes.link_urls)?;
                let command = Term::seq(vec![Term::str(C_HREF), url, Term::Bot, Term::Bot]);
                return Ok(ScriptOutput::command(input, command));
            }
        }
        let url = get_url(&input.tree, &input.doc_nonce);
        let u = Url::from_term(&url).unwrap_or_else(|| Url::https("nohost", "/"));
        let iss = dict::get_str(&u.parameters(), "iss");
        let target = Term::seq(vec![
            Term::str(crate::http::T_URL),
            Term::str(PROTO_HTTPS),
            u.host(),
            Term::str("/redirect_ep"),
            dict::from_pairs(vec![(Term::str("iss"), iss)]),
            Term::empty(),
        ]);
        let command = Term::seq(vec![
            Term::str(C_FORM),
            target,
            Term::str(M_POST),
            u.fragment(),
            Term::Bot,
        ]);
        Ok(ScriptOutput::command(input, command))
    }
}

/// Login form of an identity provider: selects one of the user's identities
/// and matching secrets and posts them, with the forwarded request data, to
/// `/auth2` on its own origin.
///
/// The careless-referrer variant adds a `link` branch, modeling external
/// links on the login page.
pub struct ScriptIdpForm;

impl Script for ScriptIdpForm {
    fn run(
        &self,
        input: &ScriptInput,
        tables: &ScenarioTables,
        ctx: &mut ChoiceCtx,
    ) -> Result<ScriptOutput, RelationError> {
        if tables.mitigations.careless_referrer() && !tables.universes.link_urls.is_empty() {
            let branch = ctx.choose(
                "idp_form_branch",
                &["submit".to_string(), "link".to_string()],
            )?;
            if branch == 1 {
                let url = ctx.choose_term("link_url", &tables.universes.link_urls)?;
                let command = Term::seq(vec![Term::str(C_HREF), url, Term::Bot, Term::Bot]);
                return Ok(ScriptOutput::command(input, command));
            }
        }
        let url = get_url(&input.tree, &input.doc_nonce);
        let u = Url::from_term(&url).unwrap_or_else(|| Url::https("nohost", "/"));
        let target = Term::seq(vec![
            Term::str(crate::http::T_URL),
            Term::str(PROTO_HTTPS),
            u.host(),
            Term::str("/auth2"),
            Term::empty(),
            Term::empty(),
        ]);
        let ids = input.ids.as_seq().unwrap_or(&[]).to_vec();
        if ids.is_empty() {
            return Ok(ScriptOutput::command(input, Term::Undef));
        }
        let identity = ctx.choose_term("idp_form_identity", &ids)?;
        let secrets = input.secrets.as_seq().unwrap_or(&[]).to_vec();
        if secrets.is_empty() {
            return Ok(ScriptOutput::command(input, Term::Undef));
        }
        let secret = ctx.choose_term("idp_form_secret", &secrets)?;
        let mut form_data = input.scriptstate.clone();
        form_data = dict::set_str(&form_data, "identity", identity.clone());
        form_data = dict::set_str(&form_data, "password", secret);
        ctx.marker(
            "idp_form_auth",
            vec![identity, input.scriptstate.clone()],
        );
        let command = Term::seq(vec![
            Term::str(C_FORM),
            target,
            Term::str(M_POST),
            form_data,
            Term::Bot,
        ]);
        Ok(ScriptOutput::command(input, command))
    }
}

/// The attacker script outputs whatever the strategy picks from the
/// derivable closure of its input. In scripted runs the choices are
/// supplied as branch labels carrying canonical term text; everything is
/// validated against derivability.
pub struct AttackerScript;

impl Script for AttackerScript {
    fn run(
        &self,
        input: &ScriptInput,
        _tables: &ScenarioTables,
        ctx: &mut ChoiceCtx,
    ) -> Result<ScriptOutput, RelationError> {
        // The scripted command arrives as canonical term text under the
        // branch point "attacker_script_command"; default echoes inputs and
        // does nothing.
        let labels = vec!["noop".to_string()];
        let _ = ctx.choose("attacker_script_command", &labels)?;
        Ok(ScriptOutput::command(input, Term::Undef))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_url_finds_nested_documents() {
        let doc_nonce = Term::Nonce(crate::term::Nonce(77));
        let url = Url::https("rp.example", "/").term();
        let inner_doc = Term::seq(vec![
            doc_nonce.clone(),
            url.clone(),
            Term::empty(),
            Term::Bot,
            Term::str("s"),
            Term::empty(),
            Term::empty(),
            Term::empty(),
            Term::True,
        ]);
        let window = Term::seq(vec![
            Term::Nonce(crate::term::Nonce(1)),
            Term::seq(vec![inner_doc]),
            Term::Bot,
        ]);
        let tree = Term::seq(vec![window]);
        assert_eq!(get_url(&tree, &doc_nonce), url);
        assert_eq!(
            get_url(&tree, &Term::Nonce(crate::term::Nonce(99))),
            Term::Undef
        );
    }
}
