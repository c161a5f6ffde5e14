//! Message and data formats: URLs, origins, cookies, HTTP(S) requests and
//! responses, and DNS messages, all as structured views over [`Term`]s.
//!
//! The underlying term shapes are fixed tagged sequences; header names,
//! endpoint paths and dictionary keys are spelled exactly as the model
//! expects and serialized bit-exact in traces.

use crate::term::{dict, normalize, Func, Nonce, Term};

// Tag strings for the fixed term shapes.
pub const T_URL: &str = "URL";
pub const T_HTTP_REQ: &str = "HTTPReq";
pub const T_HTTP_RESP: &str = "HTTPResp";
pub const T_DNS_RESOLVE: &str = "DNSResolve";
pub const T_DNS_RESOLVED: &str = "DNSResolved";

pub const PROTO_HTTP: &str = "P";
pub const PROTO_HTTPS: &str = "S";

pub const M_GET: &str = "GET";
pub const M_POST: &str = "POST";
pub const M_HEAD: &str = "HEAD";
pub const M_PUT: &str = "PUT";
pub const M_DELETE: &str = "DELETE";
pub const M_OPTIONS: &str = "OPTIONS";
pub const M_CONNECT: &str = "CONNECT";
pub const M_TRACE: &str = "TRACE";
pub const M_TRACK: &str = "TRACK";

pub const H_ORIGIN: &str = "Origin";
pub const H_SET_COOKIE: &str = "Set-Cookie";
pub const H_COOKIE: &str = "Cookie";
pub const H_LOCATION: &str = "Location";
pub const H_REFERER: &str = "Referer";
pub const H_STS: &str = "Strict-Transport-Security";
pub const H_AUTHORIZATION: &str = "Authorization";
pub const H_REFERRER_POLICY: &str = "ReferrerPolicy";

pub const RP_NOREFERRER: &str = "noreferrer";
pub const RP_ORIGIN: &str = "origin";

pub const MSG_TRIGGER: &str = "TRIGGER";
pub const MSG_CORRUPT: &str = "CORRUPT";
pub const MSG_FULLCORRUPT: &str = "FULLCORRUPT";
pub const MSG_CLOSECORRUPT: &str = "CLOSECORRUPT";

fn s(x: &str) -> Term {
    Term::str(x)
}

// ---------------------------------------------------------------------------
// URLs and origins
// ---------------------------------------------------------------------------

/// `⟨URL, protocol, host, path, parameters, fragment⟩`; an omitted fragment
/// is ⊥.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Url(pub Term);

impl Url {
    pub fn new(protocol: &str, host: &str, path: &str, parameters: Term, fragment: Term) -> Url {
        Url(Term::seq(vec![
            s(T_URL),
            s(protocol),
            s(host),
            s(path),
            parameters,
            fragment,
        ]))
    }

    pub fn https(host: &str, path: &str) -> Url {
        Url::new(PROTO_HTTPS, host, path, Term::empty(), Term::empty())
    }

    pub fn from_term(t: &Term) -> Option<Url> {
        let items = t.as_seq()?;
        if items.len() == 6 && items[0] == s(T_URL) {
            Some(Url(t.clone()))
        } else {
            None
        }
    }

    pub fn term(&self) -> Term {
        self.0.clone()
    }

    fn field(&self, i: usize) -> Term {
        self.0.as_seq().map(|v| v[i].clone()).unwrap_or(Term::Undef)
    }

    fn with_field(&self, i: usize, value: Term) -> Url {
        let mut items = self.0.as_seq().unwrap().to_vec();
        items[i] = value;
        Url(Term::seq(items))
    }

    pub fn protocol(&self) -> Term {
        self.field(1)
    }

    pub fn is_https(&self) -> bool {
        self.protocol() == s(PROTO_HTTPS)
    }

    pub fn host(&self) -> Term {
        self.field(2)
    }

    pub fn path(&self) -> Term {
        self.field(3)
    }

    pub fn parameters(&self) -> Term {
        self.field(4)
    }

    pub fn fragment(&self) -> Term {
        self.field(5)
    }

    pub fn with_protocol(&self, p: &str) -> Url {
        self.with_field(1, s(p))
    }

    pub fn with_parameters(&self, params: Term) -> Url {
        self.with_field(4, params)
    }

    pub fn with_path(&self, path: Term) -> Url {
        self.with_field(3, path)
    }

    pub fn with_fragment(&self, fragment: Term) -> Url {
        self.with_field(5, fragment)
    }

    /// The origin `⟨host, protocol⟩` this URL belongs to.
    pub fn origin(&self) -> Term {
        origin(self.host(), self.protocol())
    }
}

pub fn origin(host: Term, protocol: Term) -> Term {
    Term::seq(vec![host, protocol])
}

pub fn https_origin(host: &str) -> Term {
    origin(s(host), s(PROTO_HTTPS))
}

// ---------------------------------------------------------------------------
// Cookies
// ---------------------------------------------------------------------------

/// Full cookie `⟨name, ⟨value, secure, session, httpOnly⟩⟩` as stored in
/// browser state and carried in Set-Cookie headers. Request Cookie headers
/// carry only `⟨name, value⟩` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cookie(pub Term);

impl Cookie {
    pub fn new(name: Term, value: Term, secure: bool, session: bool, http_only: bool) -> Cookie {
        let flag = |b: bool| if b { Term::True } else { Term::Bot };
        Cookie(Term::seq(vec![
            name,
            Term::seq(vec![value, flag(secure), flag(session), flag(http_only)]),
        ]))
    }

    pub fn from_term(t: &Term) -> Option<Cookie> {
        let items = t.as_seq()?;
        if items.len() == 2 && items[1].as_seq().map(|c| c.len()) == Some(4) {
            Some(Cookie(t.clone()))
        } else {
            None
        }
    }

    pub fn term(&self) -> Term {
        self.0.clone()
    }

    pub fn name(&self) -> Term {
        self.0.as_seq().unwrap()[0].clone()
    }

    fn content(&self, i: usize) -> Term {
        self.0.as_seq().unwrap()[1].as_seq().unwrap()[i].clone()
    }

    pub fn value(&self) -> Term {
        self.content(0)
    }

    pub fn secure(&self) -> bool {
        self.content(1) == Term::True
    }

    pub fn session(&self) -> bool {
        self.content(2) == Term::True
    }

    pub fn http_only(&self) -> bool {
        self.content(3) == Term::True
    }
}

// ---------------------------------------------------------------------------
// HTTP requests and responses
// ---------------------------------------------------------------------------

/// `⟨HTTPReq, nonce, method, host, path, parameters, headers, body⟩`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest(pub Term);

impl HttpRequest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nonce: Term,
        method: &str,
        host: Term,
        path: Term,
        parameters: Term,
        headers: Term,
        body: Term,
    ) -> HttpRequest {
        HttpRequest(Term::seq(vec![
            s(T_HTTP_REQ),
            nonce,
            s(method),
            host,
            path,
            parameters,
            headers,
            body,
        ]))
    }

    pub fn from_term(t: &Term) -> Option<HttpRequest> {
        let items = t.as_seq()?;
        if items.len() == 8 && items[0] == s(T_HTTP_REQ) {
            Some(HttpRequest(t.clone()))
        } else {
            None
        }
    }

    pub fn term(&self) -> Term {
        self.0.clone()
    }

    fn field(&self, i: usize) -> Term {
        self.0.as_seq().unwrap()[i].clone()
    }

    fn with_field(&self, i: usize, v: Term) -> HttpRequest {
        let mut items = self.0.as_seq().unwrap().to_vec();
        items[i] = v;
        HttpRequest(Term::seq(items))
    }

    pub fn nonce(&self) -> Term {
        self.field(1)
    }

    pub fn method(&self) -> Term {
        self.field(2)
    }

    pub fn host(&self) -> Term {
        self.field(3)
    }

    pub fn path(&self) -> Term {
        self.field(4)
    }

    pub fn parameters(&self) -> Term {
        self.field(5)
    }

    pub fn headers(&self) -> Term {
        self.field(6)
    }

    pub fn body(&self) -> Term {
        self.field(7)
    }

    pub fn header(&self, name: &str) -> Term {
        dict::get_str(&self.headers(), name)
    }

    pub fn has_header(&self, name: &str) -> bool {
        dict::contains_str(&self.headers(), name)
    }

    pub fn set_header(&self, name: &str, value: Term) -> HttpRequest {
        self.with_field(6, dict::set_str(&self.headers(), name, value))
    }

    pub fn with_method(&self, m: Term) -> HttpRequest {
        self.with_field(2, m)
    }

    pub fn with_body(&self, b: Term) -> HttpRequest {
        self.with_field(7, b)
    }

    pub fn param(&self, name: &str) -> Term {
        dict::get_str(&self.parameters(), name)
    }
}

/// `⟨HTTPResp, nonce, status, headers, body⟩`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse(pub Term);

impl HttpResponse {
    pub fn new(nonce: Term, status: u16, headers: Term, body: Term) -> HttpResponse {
        HttpResponse(Term::seq(vec![
            s(T_HTTP_RESP),
            nonce,
            s(&status.to_string()),
            headers,
            body,
        ]))
    }

    pub fn from_term(t: &Term) -> Option<HttpResponse> {
        let items = t.as_seq()?;
        if items.len() == 5 && items[0] == s(T_HTTP_RESP) {
            Some(HttpResponse(t.clone()))
        } else {
            None
        }
    }

    pub fn term(&self) -> Term {
        self.0.clone()
    }

    fn field(&self, i: usize) -> Term {
        self.0.as_seq().unwrap()[i].clone()
    }

    pub fn nonce(&self) -> Term {
        self.field(1)
    }

    /// Status codes live in the term space as decimal strings; unknown
    /// codes pass through untouched.
    pub fn status(&self) -> Option<u16> {
        self.field(2).as_str().and_then(|x| x.parse().ok())
    }

    pub fn headers(&self) -> Term {
        self.field(3)
    }

    pub fn body(&self) -> Term {
        self.field(4)
    }

    pub fn header(&self, name: &str) -> Term {
        dict::get_str(&self.headers(), name)
    }

    pub fn has_header(&self, name: &str) -> bool {
        dict::contains_str(&self.headers(), name)
    }
}

/// A response corresponds to a request iff both carry the same nonce.
pub fn corresponds(resp: &HttpResponse, req: &HttpRequest) -> bool {
    crate::term::equiv(&resp.nonce(), &req.nonce())
}

// ---------------------------------------------------------------------------
// Encrypted HTTP messages
// ---------------------------------------------------------------------------

/// `enc_a(⟨request, sym_key⟩, server_pubkey)`
pub fn https_encrypt_request(req: &HttpRequest, sym_key: Term, server_pubkey: Term) -> Term {
    Term::enc_a(Term::seq(vec![req.term(), sym_key]), server_pubkey)
}

/// Decrypt an encrypted request with a private key; yields the inner
/// `(request, sym_key)` pair when the ciphertext matches the key.
pub fn https_decrypt_request(ciphertext: &Term, privkey: &Term) -> Option<(HttpRequest, Term)> {
    let dec = normalize(&Term::dec_a(ciphertext.clone(), privkey.clone()));
    if let Term::App(Func::DecA, _) = dec {
        return None;
    }
    let items = dec.as_seq()?;
    if items.len() != 2 {
        return None;
    }
    let req = HttpRequest::from_term(&items[0])?;
    Some((req, items[1].clone()))
}

/// `enc_s(response, sym_key)`
pub fn https_encrypt_response(resp: &HttpResponse, sym_key: Term) -> Term {
    Term::enc_s(resp.term(), sym_key)
}

pub fn https_decrypt_response(ciphertext: &Term, sym_key: &Term) -> Option<HttpResponse> {
    let dec = normalize(&Term::dec_s(ciphertext.clone(), sym_key.clone()));
    HttpResponse::from_term(&dec)
}

// ---------------------------------------------------------------------------
// DNS messages
// ---------------------------------------------------------------------------

pub fn dns_request(domain: Term, nonce: Term) -> Term {
    Term::seq(vec![s(T_DNS_RESOLVE), domain, nonce])
}

pub fn dns_response(domain: Term, address: Term, nonce: Term) -> Term {
    Term::seq(vec![s(T_DNS_RESOLVED), domain, address, nonce])
}

pub struct DnsRequestView {
    pub domain: Term,
    pub nonce: Term,
}

pub fn as_dns_request(t: &Term) -> Option<DnsRequestView> {
    let items = t.as_seq()?;
    if items.len() == 3 && items[0] == s(T_DNS_RESOLVE) {
        Some(DnsRequestView {
            domain: items[1].clone(),
            nonce: items[2].clone(),
        })
    } else {
        None
    }
}

pub struct DnsResponseView {
    pub domain: Term,
    pub address: Term,
    pub nonce: Term,
}

pub fn as_dns_response(t: &Term) -> Option<DnsResponseView> {
    let items = t.as_seq()?;
    if items.len() == 4 && items[0] == s(T_DNS_RESOLVED) {
        Some(DnsResponseView {
            domain: items[1].clone(),
            address: items[2].clone(),
            nonce: items[3].clone(),
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Nonce;

    fn n(i: u64) -> Term {
        Term::Nonce(Nonce(i))
    }

    #[test]
    fn https_round_trip() {
        let req = HttpRequest::new(
            n(1),
            M_POST,
            s("example.com"),
            s("/show"),
            dict::from_pairs(vec![(s("index"), s("1"))]),
            dict::from_pairs(vec![(s(H_ORIGIN), https_origin("example.com"))]),
            Term::seq(vec![s("foo"), s("bar")]),
        );
        let server_key = n(100);
        let sym = n(2);
        let enc = https_encrypt_request(&req, sym.clone(), Term::pubkey(server_key.clone()));
        let (got, got_sym) = https_decrypt_request(&enc, &server_key).unwrap();
        assert_eq!(got, req);
        assert_eq!(got_sym, sym);
        // wrong key: no well-formed request comes out
        assert!(https_decrypt_request(&enc, &n(999)).is_none());

        let resp = HttpResponse::new(n(1), 200, Term::empty(), s("ok"));
        let enc_resp = https_encrypt_response(&resp, sym.clone());
        let got_resp = https_decrypt_response(&enc_resp, &sym).unwrap();
        assert_eq!(got_resp, resp);
        assert!(corresponds(&got_resp, &req));
    }

    #[test]
    fn correspondence_is_nonce_equality() {
        let req = HttpRequest::new(n(1), M_GET, s("a"), s("/"), Term::empty(), Term::empty(), Term::empty());
        let ok = HttpResponse::new(n(1), 200, Term::empty(), Term::empty());
        let bad = HttpResponse::new(n(2), 200, Term::empty(), Term::empty());
        assert!(corresponds(&ok, &req));
        assert!(!corresponds(&bad, &req));
    }

    #[test]
    fn url_fields_and_updates() {
        let u = Url::new(
            PROTO_HTTP,
            "a",
            "/p",
            dict::from_pairs(vec![(s("q"), s("1"))]),
            s("frag"),
        );
        assert!(!u.is_https());
        assert_eq!(u.host(), s("a"));
        let upgraded = u.with_protocol(PROTO_HTTPS);
        assert!(upgraded.is_https());
        assert_eq!(upgraded.origin(), https_origin("a"));
        assert_eq!(u.fragment(), s("frag"));
        let nofrag = u.with_fragment(Term::Bot);
        assert_eq!(nofrag.fragment(), Term::Bot);
    }

    #[test]
    fn cookie_flags() {
        let c = Cookie::new(s("SID"), n(2), false, false, true);
        assert!(c.http_only());
        assert!(!c.secure());
        assert_eq!(c.value(), n(2));
        assert_eq!(Cookie::from_term(&c.term()).unwrap().name(), s("SID"));
    }

    #[test]
    fn dns_shapes() {
        let req = dns_request(s("example.com"), n(5));
        let v = as_dns_request(&req).unwrap();
        assert_eq!(v.domain, s("example.com"));
        let resp = dns_response(s("example.com"), Term::addr("srv"), n(5));
        let w = as_dns_response(&resp).unwrap();
        assert_eq!(w.nonce, n(5));
        assert!(as_dns_request(&resp).is_none());
    }
}
