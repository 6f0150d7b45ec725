//! Abstract TLS 1.2 (RSA and DH key exchange) and TLS 1.3 handshakes.
//!
//! A handshake is the smallest message pattern that yields per-session write
//! keys: client hello, server hello with certificate, then key transport or a
//! Diffie-Hellman exchange. Secrets feed a tagged-hash key schedule.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::bundle::{InjectionKind, Var};
use crate::network::{NetError, Network};
use crate::term::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TlsVariant {
    Tls12Rsa,
    Tls12Dh,
    Tls13,
}

impl TlsVariant {
    pub const ALL: [TlsVariant; 3] = [TlsVariant::Tls12Rsa, TlsVariant::Tls12Dh, TlsVariant::Tls13];

    pub fn is_dh(self) -> bool {
        self != TlsVariant::Tls12Rsa
    }
}

impl fmt::Display for TlsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TlsVariant::Tls12Rsa => "TLS1.2-RSA",
            TlsVariant::Tls12Dh => "TLS1.2-DH",
            TlsVariant::Tls13 => "TLS1.3",
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TlsError {
    #[error("certificate rejected: {0}")]
    CertificateRejected(String),
    #[error("{0} sessions have no exporter")]
    UnsupportedVariant(TlsVariant),
    #[error("unexpected handshake message {0}")]
    UnexpectedMessage(Term),
    #[error(transparent)]
    Network(#[from] NetError),
}

/// A CA-signed binding of `subject` to `PublicKey(subject)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Certificate {
    pub subject: String,
    pub issuer: String,
}

impl Certificate {
    pub fn issue(subject: impl Into<String>, ca: impl Into<String>) -> Certificate {
        Certificate {
            subject: subject.into(),
            issuer: ca.into(),
        }
    }

    pub fn key(&self) -> Term {
        Term::pubk(self.subject.clone())
    }

    pub fn to_term(&self) -> Term {
        Term::sig(
            self.issuer.clone(),
            Term::tuple(vec![Term::name(self.subject.clone()), self.key()]),
        )
    }

    /// Parses a certificate term. The signature is checked structurally: the
    /// key inside must belong to the named subject.
    pub fn from_term(t: &Term) -> Option<Certificate> {
        let Term::Sig { signer, payload } = t else {
            return None;
        };
        match payload.as_ref() {
            Term::Tuple(parts) => match parts.as_slice() {
                [Term::Name(subject), Term::PublicKey(owner)] if subject == owner => {
                    Some(Certificate::issue(subject.clone(), signer.clone()))
                }
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SessionSecret {
    Rsa {
        pms: Term,
    },
    /// `x` is the client's exponent, `y` the server's.
    Dh {
        x: Term,
        y: Term,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Client,
    Server,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TlsSession {
    pub variant: TlsVariant,
    pub side: Side,
    pub cr: Term,
    pub sr: Term,
    pub secret: SessionSecret,
    pub ms: Term,
    pub cwk: Term,
    pub swk: Term,
    pub server_cert: Certificate,
    pub peer_believed: String,
}

impl TlsSession {
    /// The key this side encrypts with.
    pub fn send_key(&self) -> &Term {
        match self.side {
            Side::Client => &self.cwk,
            Side::Server => &self.swk,
        }
    }

    /// The key this side expects incoming records under.
    pub fn recv_key(&self) -> &Term {
        match self.side {
            Side::Client => &self.swk,
            Side::Server => &self.cwk,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "variant": self.variant,
            "side": self.side,
            "cr": self.cr.to_string(),
            "sr": self.sr.to_string(),
            "ms": self.ms.to_string(),
            "cwk": self.cwk.to_string(),
            "swk": self.swk.to_string(),
            "server_cert": self.server_cert.to_term().to_string(),
            "peer_believed": self.peer_believed,
        });
        match &self.secret {
            SessionSecret::Rsa { pms } => v["pms"] = pms.to_string().into(),
            SessionSecret::Dh { x, y } => {
                v["x"] = x.to_string().into();
                v["y"] = y.to_string().into();
            }
        }
        v
    }
}

fn exp_id(t: &Term) -> &str {
    match t {
        Term::DhExponent(id) => id,
        other => panic!("expected a DH exponent, got {other}"),
    }
}

/// Master secret and write keys for the given secret material and randoms.
pub fn derive_keys(secret: &SessionSecret, cr: &Term, sr: &Term) -> (Term, Term, Term) {
    let shared = match secret {
        SessionSecret::Rsa { pms } => pms.clone(),
        SessionSecret::Dh { x, y } => Term::dh_shared(exp_id(x), exp_id(y)),
    };
    let ms = Term::hash(vec![Term::tag("ms"), shared, cr.clone(), sr.clone()]);
    let cwk = Term::symkey(Term::hash(vec![Term::tag("cwk"), ms.clone()]));
    let swk = Term::symkey(Term::hash(vec![Term::tag("swk"), ms.clone()]));
    (ms, cwk, swk)
}

pub fn exporter(session: &TlsSession, label: &Term, context: &Term) -> Result<Term, TlsError> {
    if session.variant != TlsVariant::Tls13 {
        return Err(TlsError::UnsupportedVariant(session.variant));
    }
    Ok(Term::hash(vec![
        session.ms.clone(),
        label.clone(),
        session.cr.clone(),
        session.sr.clone(),
        context.clone(),
    ]))
}

/// The client side of a handshake. `strand` is `None` when the adversary
/// plays this endpoint with its own credentials.
#[derive(Clone, Debug)]
pub struct ClientEndpoint {
    pub strand: Option<usize>,
    pub name: String,
    pub intended_peer: String,
    pub trusted_ca: String,
    /// Prefix for this endpoint's fresh atoms.
    pub fresh: String,
}

#[derive(Clone, Debug)]
pub struct ServerEndpoint {
    pub strand: Option<usize>,
    pub name: String,
    pub cert: Certificate,
    pub fresh: String,
}

fn fresh(prefix: &str, label: &str) -> String {
    format!("{prefix}.{label}")
}

/// Moves one handshake message from `from` to `to` through the network.
fn transmit(
    net: &mut Network,
    from: Option<usize>,
    to: Option<usize>,
    msg: &Term,
) -> Result<(), NetError> {
    if let Some(s) = from {
        net.send(s, msg.clone())?;
    }
    if let Some(r) = to {
        net.deliver(r, msg.clone())?;
    }
    Ok(())
}

fn bind(net: &mut Network, strand: Option<usize>, var: Var, value: &Term) {
    if let Some(s) = strand {
        net.bind(s, var, value.clone());
    }
}

fn own_fresh(net: &mut Network, strand: Option<usize>, atom: &Term) -> Result<(), NetError> {
    if strand.is_none() {
        net.inject(atom.clone(), InjectionKind::AdversaryFresh, None)?;
    }
    Ok(())
}

fn check_certificate(client: &ClientEndpoint, cert_term: &Term) -> Result<Certificate, TlsError> {
    let cert = Certificate::from_term(cert_term).ok_or_else(|| {
        TlsError::CertificateRejected(format!("malformed certificate {cert_term}"))
    })?;
    if client.strand.is_none() {
        return Ok(cert);
    }
    if cert.issuer != client.trusted_ca {
        return Err(TlsError::CertificateRejected(format!(
            "issuer {} is not the trusted CA {}",
            cert.issuer, client.trusted_ca
        )));
    }
    if cert.subject != client.intended_peer {
        return Err(TlsError::CertificateRejected(format!(
            "subject {} is not the intended peer {}",
            cert.subject, client.intended_peer
        )));
    }
    Ok(cert)
}

/// Runs a full handshake between `client` and `server` over `net`, recording
/// every message and the session variables each honest endpoint binds.
/// Returns the client's and the server's session records.
pub fn handshake(
    net: &mut Network,
    client: &ClientEndpoint,
    server: &ServerEndpoint,
    variant: TlsVariant,
) -> Result<(TlsSession, TlsSession), TlsError> {
    let (c, s) = (client.strand, server.strand);
    let cr = Term::nonce(fresh(&client.fresh, "cr"));
    let sr = Term::nonce(fresh(&server.fresh, "sr"));
    let hello = |t: &str| Term::tag(t);
    let cert_term = server.cert.to_term();
    let peer_name = Term::name(client.intended_peer.clone());

    own_fresh(net, c, &cr)?;
    let secret = match variant {
        TlsVariant::Tls12Rsa => {
            let pms = Term::pms(fresh(&client.fresh, "pms"));
            own_fresh(net, c, &pms)?;
            own_fresh(net, s, &sr)?;

            let m1 = Term::tuple(vec![hello("client_hello"), cr.clone(), peer_name]);
            bind(net, c, Var::Cr, &cr);
            transmit(net, c, s, &m1)?;
            bind(net, s, Var::Cr, &cr);

            let m2 = Term::tuple(vec![hello("server_hello"), sr.clone(), cert_term.clone()]);
            bind(net, s, Var::Sr, &sr);
            bind(net, s, Var::Server, &Term::name(server.name.clone()));
            bind(net, s, Var::Ca, &Term::name(server.cert.issuer.clone()));
            transmit(net, s, c, &m2)?;
            let cert = check_certificate(client, &cert_term)?;
            bind(net, c, Var::Sr, &sr);
            bind(net, c, Var::Server, &Term::name(cert.subject.clone()));
            bind(net, c, Var::Ca, &Term::name(cert.issuer.clone()));

            let m3 = Term::tuple(vec![
                hello("client_key_exchange"),
                Term::aenc(cert.subject.clone(), pms.clone()),
            ]);
            bind(net, c, Var::Pms, &pms);
            transmit(net, c, s, &m3)?;
            bind(net, s, Var::Pms, &pms);
            SessionSecret::Rsa { pms }
        }
        TlsVariant::Tls12Dh => {
            let x = Term::dh_exp(fresh(&client.fresh, "x"));
            let y = Term::dh_exp(fresh(&server.fresh, "y"));
            own_fresh(net, c, &x)?;
            own_fresh(net, s, &sr)?;
            own_fresh(net, s, &y)?;
            let (gx, gy) = (Term::dh_pub(exp_id(&x)), Term::dh_pub(exp_id(&y)));

            let m1 = Term::tuple(vec![hello("client_hello"), cr.clone(), peer_name]);
            bind(net, c, Var::Cr, &cr);
            transmit(net, c, s, &m1)?;
            bind(net, s, Var::Cr, &cr);

            let params = Term::sig(
                server.name.clone(),
                Term::tuple(vec![cr.clone(), sr.clone(), gy.clone()]),
            );
            let m2 = Term::tuple(vec![
                hello("server_hello"),
                sr.clone(),
                cert_term.clone(),
                gy.clone(),
                params.clone(),
            ]);
            bind(net, s, Var::Sr, &sr);
            bind(net, s, Var::Server, &Term::name(server.name.clone()));
            bind(net, s, Var::Ca, &Term::name(server.cert.issuer.clone()));
            bind(net, s, Var::Y, &y);
            transmit(net, s, c, &m2)?;
            let cert = check_certificate(client, &cert_term)?;
            if c.is_some() {
                match &params {
                    Term::Sig { signer, .. } if *signer == cert.subject => {}
                    _ => return Err(TlsError::UnexpectedMessage(m2)),
                }
            }
            bind(net, c, Var::Sr, &sr);
            bind(net, c, Var::Server, &Term::name(cert.subject.clone()));
            bind(net, c, Var::Ca, &Term::name(cert.issuer.clone()));
            bind(net, c, Var::Y, &y);

            let m3 = Term::tuple(vec![hello("client_key_exchange"), gx]);
            bind(net, c, Var::X, &x);
            transmit(net, c, s, &m3)?;
            bind(net, s, Var::X, &x);
            SessionSecret::Dh { x, y }
        }
        TlsVariant::Tls13 => {
            let x = Term::dh_exp(fresh(&client.fresh, "x"));
            let y = Term::dh_exp(fresh(&server.fresh, "y"));
            own_fresh(net, c, &x)?;
            own_fresh(net, s, &sr)?;
            own_fresh(net, s, &y)?;
            let (gx, gy) = (Term::dh_pub(exp_id(&x)), Term::dh_pub(exp_id(&y)));

            let m1 = Term::tuple(vec![
                hello("client_hello"),
                cr.clone(),
                peer_name,
                gx.clone(),
            ]);
            bind(net, c, Var::Cr, &cr);
            bind(net, c, Var::X, &x);
            transmit(net, c, s, &m1)?;
            bind(net, s, Var::Cr, &cr);
            bind(net, s, Var::X, &x);

            let verify = Term::sig(
                server.name.clone(),
                Term::hash(vec![
                    hello("certificate_verify"),
                    cr.clone(),
                    sr.clone(),
                    gx,
                    gy.clone(),
                ]),
            );
            let m2 = Term::tuple(vec![
                hello("server_hello"),
                sr.clone(),
                gy,
                cert_term.clone(),
                verify.clone(),
            ]);
            bind(net, s, Var::Sr, &sr);
            bind(net, s, Var::Server, &Term::name(server.name.clone()));
            bind(net, s, Var::Ca, &Term::name(server.cert.issuer.clone()));
            bind(net, s, Var::Y, &y);
            transmit(net, s, c, &m2)?;
            let cert = check_certificate(client, &cert_term)?;
            if c.is_some() {
                match &verify {
                    Term::Sig { signer, .. } if *signer == cert.subject => {}
                    _ => return Err(TlsError::UnexpectedMessage(m2)),
                }
            }
            bind(net, c, Var::Sr, &sr);
            bind(net, c, Var::Server, &Term::name(cert.subject.clone()));
            bind(net, c, Var::Ca, &Term::name(cert.issuer.clone()));
            bind(net, c, Var::Y, &y);
            SessionSecret::Dh { x, y }
        }
    };

    let (ms, cwk, swk) = derive_keys(&secret, &cr, &sr);
    let session = |side, peer_believed: &str| TlsSession {
        variant,
        side,
        cr: cr.clone(),
        sr: sr.clone(),
        secret: secret.clone(),
        ms: ms.clone(),
        cwk: cwk.clone(),
        swk: swk.clone(),
        server_cert: server.cert.clone(),
        peer_believed: peer_believed.to_owned(),
    };
    let client_session = session(Side::Client, &server.cert.subject);
    let server_session = session(Side::Server, &client.name);
    if let Some(cs) = c {
        net.set_session(cs, client_session.clone());
    }
    if let Some(ss) = s {
        net.set_session(ss, server_session.clone());
    }
    if let (Some(cs), Some(ss)) = (c, s) {
        net.link_peers(cs, ss);
    }
    Ok((client_session, server_session))
}
