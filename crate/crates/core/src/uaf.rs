//! Baseline password login and UAF registration/authentication roles.
//!
//! Roles are step machines over an established [`TlsSession`]: `start` emits
//! whatever the role sends unprompted, `receive` consumes one record and
//! emits the reply. The authenticator is embedded in the client roles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::bundle::{Role, Var};
use crate::model::BindingMethod;
use crate::term::Term;
use crate::tls::{exporter, TlsSession, TlsVariant};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerificationPolicy {
    /// Recompute the binding from the server's own session.
    #[default]
    Strict,
    /// Accept any well-formed binding value.
    Lenient,
}

impl fmt::Display for VerificationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerificationPolicy::Strict => "strict",
            VerificationPolicy::Lenient => "lenient",
        })
    }
}

impl FromStr for VerificationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(VerificationPolicy::Strict),
            "lenient" => Ok(VerificationPolicy::Lenient),
            other => Err(format!(
                "unknown policy '{other}' (expected strict or lenient)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Baseline,
    Registration,
    Authentication,
}

impl Protocol {
    pub fn client_role(self) -> Role {
        match self {
            Protocol::Baseline => Role::BaselineClient,
            Protocol::Registration => Role::ClientReg,
            Protocol::Authentication => Role::ClientAuth,
        }
    }

    pub fn server_role(self) -> Role {
        self.client_role().complement()
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Baseline => "baseline",
            Protocol::Registration => "registration",
            Protocol::Authentication => "authentication",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Protocol::Baseline),
            "registration" | "reg" => Ok(Protocol::Registration),
            "authentication" | "auth" => Ok(Protocol::Authentication),
            other => Err(format!(
                "unknown protocol '{other}' (expected baseline, registration or authentication)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq, Hash, Serialize)]
pub enum VerifyError {
    #[error("SignatureInvalid")]
    SignatureInvalid,
    #[error("ChallengeMismatch")]
    ChallengeMismatch,
    #[error("BindingMismatch")]
    BindingMismatch,
    #[error("Malformed")]
    Malformed,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum UafError {
    #[error("{binding:?} binding is not defined over {variant}")]
    IllegalBindingForVariant {
        binding: BindingMethod,
        variant: TlsVariant,
    },
    #[error("AuthFailed")]
    AuthFailed,
    #[error("record {0} is not encrypted under this session's key")]
    Undecryptable(Term),
    #[error("unexpected payload {0}")]
    UnexpectedPayload(Term),
    #[error("appid {appid} is not a facet of {peer}")]
    AppidRejected { appid: Term, peer: String },
    #[error("{0}")]
    Rejected(#[from] VerifyError),
    #[error("role is not waiting for a message")]
    NotAwaiting,
}

/// The channel-binding value (`tlsData`) for `challenge` on `session`.
/// `binding_key` owns the client's long-lived binding key pair.
pub fn make_tls_data(
    binding: BindingMethod,
    challenge: &Term,
    session: &TlsSession,
    binding_key: &str,
) -> Result<Term, UafError> {
    if !binding.legal_for(session.variant) {
        return Err(UafError::IllegalBindingForVariant {
            binding,
            variant: session.variant,
        });
    }
    let self_signed = || Term::sig(binding_key, Term::pubk(binding_key));
    Ok(match binding {
        BindingMethod::Unbound => Term::tag("unbound"),
        BindingMethod::ChannelId => Term::hash(vec![
            Term::tag("uaf_channel_id"),
            challenge.clone(),
            Term::pubk(binding_key),
            self_signed(),
        ]),
        BindingMethod::TokenBinding => Term::hash(vec![
            Term::tag("uaf_token_binding"),
            challenge.clone(),
            Term::tuple(vec![Term::pubk(binding_key), self_signed()]),
        ]),
        BindingMethod::ServerEndpoint => Term::hash(vec![
            Term::tag("uaf_server_endpoint"),
            challenge.clone(),
            Term::hash(vec![session.server_cert.to_term()]),
        ]),
        BindingMethod::ServerCert => Term::hash(vec![
            Term::tag("uaf_server_cert"),
            challenge.clone(),
            session.server_cert.to_term(),
        ]),
        BindingMethod::Exporter => {
            exporter(session, &Term::tag("uaf"), challenge).map_err(|_| {
                UafError::IllegalBindingForVariant {
                    binding,
                    variant: session.variant,
                }
            })?
        }
    })
}

fn self_signed_key(pk: &Term, sig: &Term) -> bool {
    match (pk, sig) {
        (Term::PublicKey(owner), Term::Sig { signer, payload }) => {
            owner == signer && payload.as_ref() == pk
        }
        _ => false,
    }
}

/// Shape check for bindings built from the client's own key, for some key.
fn client_binding_shape(binding: BindingMethod, challenge: &Term, td: &Term) -> bool {
    let Term::Hash(parts) = td else {
        return false;
    };
    match (binding, parts.as_slice()) {
        (BindingMethod::ChannelId, [Term::Tag(tag), ch, pk, sig]) => {
            tag == "uaf_channel_id" && ch == challenge && self_signed_key(pk, sig)
        }
        (BindingMethod::TokenBinding, [Term::Tag(tag), ch, Term::Tuple(tb)]) => {
            tag == "uaf_token_binding"
                && ch == challenge
                && matches!(tb.as_slice(), [pk, sig] if self_signed_key(pk, sig))
        }
        _ => false,
    }
}

/// What a relying-party server needs to judge an assertion.
#[derive(Clone, Debug)]
pub struct AssertionContext<'a> {
    pub protocol: Protocol,
    pub binding: BindingMethod,
    pub session: &'a TlsSession,
    pub appid: &'a Term,
    pub challenge: &'a Term,
    pub trusted_aaids: &'a BTreeMap<Term, String>,
    pub registered_keys: &'a BTreeSet<String>,
    pub binding_key: &'a str,
}

/// Checks a decrypted assertion payload: signature, then the challenge
/// inside fc, then the channel binding according to `policy`. Returns the
/// owner of the authenticator key the assertion vouches for.
pub fn verify_assertion(
    ctx: &AssertionContext<'_>,
    received: &Term,
    policy: VerificationPolicy,
) -> Result<String, VerifyError> {
    let Term::Tuple(parts) = received else {
        return Err(VerifyError::Malformed);
    };
    let (fc, authk) = match (ctx.protocol, parts.as_slice()) {
        (Protocol::Registration, [_h, aaid, kpub, fc, s]) => {
            let Term::PublicKey(authk) = kpub else {
                return Err(VerifyError::Malformed);
            };
            let Term::Sig { signer, payload } = s else {
                return Err(VerifyError::SignatureInvalid);
            };
            let expected = Term::tuple(vec![aaid.clone(), fc.clone(), kpub.clone()]);
            if ctx.trusted_aaids.get(aaid) != Some(signer) || **payload != expected {
                return Err(VerifyError::SignatureInvalid);
            }
            (fc, authk.clone())
        }
        (Protocol::Authentication, [fc, n, s]) => {
            let Term::Sig { signer, payload } = s else {
                return Err(VerifyError::SignatureInvalid);
            };
            let expected = Term::tuple(vec![fc.clone(), n.clone()]);
            if !ctx.registered_keys.contains(signer) || **payload != expected {
                return Err(VerifyError::SignatureInvalid);
            }
            (fc, signer.clone())
        }
        _ => return Err(VerifyError::Malformed),
    };

    let Term::Hash(fc_parts) = fc else {
        return Err(VerifyError::Malformed);
    };
    let [appid, challenge, td] = fc_parts.as_slice() else {
        return Err(VerifyError::Malformed);
    };
    if appid != ctx.appid || challenge != ctx.challenge {
        return Err(VerifyError::ChallengeMismatch);
    }

    let ok = match policy {
        VerificationPolicy::Lenient => matches!(td, Term::Hash(_)) || *td == Term::tag("unbound"),
        VerificationPolicy::Strict if ctx.binding.is_client_side() => {
            client_binding_shape(ctx.binding, ctx.challenge, td)
        }
        VerificationPolicy::Strict => {
            make_tls_data(ctx.binding, ctx.challenge, ctx.session, ctx.binding_key)
                .is_ok_and(|expected| *td == expected)
        }
    };
    if ok {
        Ok(authk)
    } else {
        Err(VerifyError::BindingMismatch)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientConfig {
    pub binding: BindingMethod,
    pub username: Term,
    pub password: Term,
    pub accepted_appids: Vec<Term>,
    pub binding_key: String,
    pub aaid: Term,
    pub attestation_key: String,
    /// Authenticator key used for authentication.
    pub auth_key: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerConfig {
    pub binding: BindingMethod,
    pub policy: VerificationPolicy,
    pub appid: Term,
    /// Account the registration is for.
    pub username: Term,
    pub passwords: BTreeMap<Term, Term>,
    pub trusted_aaids: BTreeMap<Term, String>,
    pub registered_keys: BTreeSet<String>,
    pub binding_key: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Config {
    Client(ClientConfig),
    Server(ServerConfig),
}

/// Sort of one component of an expected payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Name,
    Nonce,
    Hash,
    PublicKey,
    Sig,
    Const(Term),
}

impl Slot {
    pub fn admits(&self, t: &Term) -> bool {
        match self {
            Slot::Name => matches!(t, Term::Name(_)),
            Slot::Nonce => matches!(t, Term::Nonce(_)),
            Slot::Hash => matches!(t, Term::Hash(_)),
            Slot::PublicKey => matches!(t, Term::PublicKey(_)),
            Slot::Sig => matches!(t, Term::Sig { .. }),
            Slot::Const(c) => c == t,
        }
    }
}

/// The record a waiting role will look at: `SymEnc(key, payload)` with the
/// payload a tuple of `slots` (or the single slot itself).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expectation {
    pub key: Term,
    pub slots: Vec<Slot>,
}

impl Expectation {
    pub fn payload(&self, parts: Vec<Term>) -> Term {
        if parts.len() == 1 {
            parts.into_iter().next().expect("one part")
        } else {
            Term::tuple(parts)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub recv_bindings: Vec<(Var, Term)>,
    pub send: Option<Term>,
    pub send_bindings: Vec<(Var, Term)>,
    /// Private keys created by this step that never leave the role.
    pub secrets: Vec<Term>,
    pub complete: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Phase {
    Ready,
    Awaiting,
    Done,
    Halted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleMachine {
    role: Role,
    protocol: Protocol,
    session: TlsSession,
    fresh: String,
    config: Config,
    phase: Phase,
    challenge: Option<Term>,
}

impl RoleMachine {
    pub fn client(protocol: Protocol, session: TlsSession, fresh: &str, cfg: ClientConfig) -> Self {
        RoleMachine {
            role: protocol.client_role(),
            protocol,
            session,
            fresh: fresh.to_owned(),
            config: Config::Client(cfg),
            phase: Phase::Ready,
            challenge: None,
        }
    }

    pub fn server(protocol: Protocol, session: TlsSession, fresh: &str, cfg: ServerConfig) -> Self {
        RoleMachine {
            role: protocol.server_role(),
            protocol,
            session,
            fresh: fresh.to_owned(),
            config: Config::Server(cfg),
            phase: Phase::Ready,
            challenge: None,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn session(&self) -> &TlsSession {
        &self.session
    }

    pub fn is_awaiting(&self) -> bool {
        self.phase == Phase::Awaiting
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    fn atom(&self, label: &str) -> String {
        format!("{}.{label}", self.fresh)
    }

    fn seal(&self, payload: Term) -> Term {
        Term::senc(self.session.send_key().clone(), payload)
    }

    /// Messages the role sends before it waits for anything.
    pub fn start(&mut self) -> Output {
        if self.phase != Phase::Ready {
            return Output::default();
        }
        self.phase = Phase::Awaiting;
        match (&self.config, self.protocol) {
            (Config::Client(c), Protocol::Baseline) => {
                let payload = Term::tuple(vec![c.username.clone(), c.password.clone()]);
                Output {
                    send: Some(self.seal(payload)),
                    send_bindings: vec![
                        (Var::Username, c.username.clone()),
                        (Var::Pw, c.password.clone()),
                    ],
                    ..Output::default()
                }
            }
            (Config::Server(s), Protocol::Registration | Protocol::Authentication) => {
                let ch = Term::nonce(self.atom("challenge"));
                self.challenge = Some(ch.clone());
                let (payload, mut bindings) = if self.protocol == Protocol::Registration {
                    (
                        Term::tuple(vec![s.username.clone(), s.appid.clone(), ch.clone()]),
                        vec![(Var::Username, s.username.clone())],
                    )
                } else {
                    (Term::tuple(vec![s.appid.clone(), ch.clone()]), Vec::new())
                };
                bindings.push((Var::Appid, s.appid.clone()));
                bindings.push((Var::Challenge, ch));
                Output {
                    send: Some(self.seal(payload)),
                    send_bindings: bindings,
                    ..Output::default()
                }
            }
            _ => Output::default(),
        }
    }

    pub fn expectation(&self) -> Option<Expectation> {
        if self.phase != Phase::Awaiting {
            return None;
        }
        let slots = match self.role {
            Role::BaselineClient => vec![Slot::Const(Term::tag("auth OK"))],
            Role::BaselineServer => vec![Slot::Name, Slot::Nonce],
            Role::ClientReg => vec![Slot::Name, Slot::Name, Slot::Nonce],
            Role::ClientAuth => vec![Slot::Name, Slot::Nonce],
            Role::ServerReg => vec![
                Slot::Hash,
                Slot::Name,
                Slot::PublicKey,
                Slot::Hash,
                Slot::Sig,
            ],
            Role::ServerAuth => vec![Slot::Hash, Slot::Nonce, Slot::Sig],
        };
        Some(Expectation {
            key: self.session.recv_key().clone(),
            slots,
        })
    }

    /// Consumes one record. Any error halts the role.
    pub fn receive(&mut self, msg: &Term) -> Result<Output, UafError> {
        if self.phase != Phase::Awaiting {
            return Err(UafError::NotAwaiting);
        }
        let result = self.receive_inner(msg);
        self.phase = if result.is_ok() {
            Phase::Done
        } else {
            Phase::Halted
        };
        result
    }

    fn receive_inner(&mut self, msg: &Term) -> Result<Output, UafError> {
        let payload = match msg {
            Term::SymEnc { key, payload } if key.as_ref() == self.session.recv_key() => {
                payload.as_ref()
            }
            _ => return Err(UafError::Undecryptable(msg.clone())),
        };
        let malformed = || UafError::UnexpectedPayload(payload.clone());
        match &self.config {
            Config::Client(c) => self.client_receive(c, payload).ok_or_else(malformed)?,
            Config::Server(s) => self.server_receive(s, payload).ok_or_else(malformed)?,
        }
    }

    fn client_receive(&self, c: &ClientConfig, payload: &Term) -> Option<Result<Output, UafError>> {
        if self.role == Role::BaselineClient {
            return (*payload == Term::tag("auth OK")).then(|| {
                Ok(Output {
                    complete: true,
                    ..Output::default()
                })
            });
        }
        let Term::Tuple(parts) = payload else {
            return None;
        };
        let (username, appid, ch) = match (self.role, parts.as_slice()) {
            (Role::ClientReg, [u @ Term::Name(_), a @ Term::Name(_), ch @ Term::Nonce(_)]) => {
                (Some(u), a, ch)
            }
            (Role::ClientAuth, [a @ Term::Name(_), ch @ Term::Nonce(_)]) => (None, a, ch),
            _ => return None,
        };
        Some(self.client_reply(c, username, appid, ch))
    }

    fn client_reply(
        &self,
        c: &ClientConfig,
        username: Option<&Term>,
        appid: &Term,
        ch: &Term,
    ) -> Result<Output, UafError> {
        if !c.accepted_appids.contains(appid) {
            return Err(UafError::AppidRejected {
                appid: appid.clone(),
                peer: self.session.peer_believed.clone(),
            });
        }
        let td = make_tls_data(c.binding, ch, &self.session, &c.binding_key)?;
        let fc = Term::hash(vec![appid.clone(), ch.clone(), td]);
        let mut out = Output {
            recv_bindings: vec![(Var::Appid, appid.clone()), (Var::Challenge, ch.clone())],
            send_bindings: vec![(Var::Fc, fc.clone())],
            complete: true,
            ..Output::default()
        };
        let payload = if let Some(username) = username {
            out.recv_bindings.push((Var::Username, username.clone()));
            let authk = self.atom("authk");
            let kpub = Term::pubk(authk.clone());
            let h = Term::hash(vec![Term::privk(authk.clone()), username.clone()]);
            let s = Term::sig(
                c.attestation_key.clone(),
                Term::tuple(vec![c.aaid.clone(), fc.clone(), kpub.clone()]),
            );
            out.secrets.push(Term::privk(authk));
            out.send_bindings.push((Var::Authk, kpub.clone()));
            Term::tuple(vec![h, c.aaid.clone(), kpub, fc, s])
        } else {
            let n = Term::nonce(self.atom("n"));
            let s = Term::sig(c.auth_key.clone(), Term::tuple(vec![fc.clone(), n.clone()]));
            out.send_bindings
                .push((Var::Authk, Term::pubk(c.auth_key.clone())));
            Term::tuple(vec![fc, n, s])
        };
        out.send = Some(self.seal(payload));
        Ok(out)
    }

    fn server_receive(&self, s: &ServerConfig, payload: &Term) -> Option<Result<Output, UafError>> {
        if self.role == Role::BaselineServer {
            let Term::Tuple(parts) = payload else {
                return None;
            };
            let [u @ Term::Name(_), pw @ Term::Nonce(_)] = parts.as_slice() else {
                return None;
            };
            if s.passwords.get(u) != Some(pw) {
                return Some(Err(UafError::AuthFailed));
            }
            return Some(Ok(Output {
                recv_bindings: vec![(Var::Username, u.clone()), (Var::Pw, pw.clone())],
                send: Some(self.seal(Term::tag("auth OK"))),
                complete: true,
                ..Output::default()
            }));
        }
        let challenge = self.challenge.as_ref()?;
        let ctx = AssertionContext {
            protocol: self.protocol,
            binding: s.binding,
            session: &self.session,
            appid: &s.appid,
            challenge,
            trusted_aaids: &s.trusted_aaids,
            registered_keys: &s.registered_keys,
            binding_key: &s.binding_key,
        };
        Some(
            verify_assertion(&ctx, payload, s.policy)
                .map(|authk| Output {
                    recv_bindings: vec![(Var::Authk, Term::pubk(authk))],
                    complete: true,
                    ..Output::default()
                })
                .map_err(UafError::from),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tls::{derive_keys, Certificate, SessionSecret, Side};

    fn session(variant: TlsVariant, side: Side, cert: &str, tag: &str) -> TlsSession {
        let secret = match variant {
            TlsVariant::Tls12Rsa => SessionSecret::Rsa {
                pms: Term::pms(format!("{tag}.pms")),
            },
            _ => SessionSecret::Dh {
                x: Term::dh_exp(format!("{tag}.x")),
                y: Term::dh_exp(format!("{tag}.y")),
            },
        };
        let cr = Term::nonce(format!("{tag}.cr"));
        let sr = Term::nonce(format!("{tag}.sr"));
        let (ms, cwk, swk) = derive_keys(&secret, &cr, &sr);
        TlsSession {
            variant,
            side,
            cr,
            sr,
            secret,
            ms,
            cwk,
            swk,
            server_cert: Certificate::issue(cert, "ca"),
            peer_believed: cert.into(),
        }
    }

    fn client_cfg(binding: BindingMethod) -> ClientConfig {
        ClientConfig {
            binding,
            username: Term::name("alice"),
            password: Term::nonce("pw.alice"),
            accepted_appids: vec![Term::name("server")],
            binding_key: "client".into(),
            aaid: Term::name("aaid-1"),
            attestation_key: "aaid-1.attest".into(),
            auth_key: "reg.authk".into(),
        }
    }

    fn server_cfg(binding: BindingMethod, policy: VerificationPolicy) -> ServerConfig {
        ServerConfig {
            binding,
            policy,
            appid: Term::name("server"),
            username: Term::name("alice"),
            passwords: BTreeMap::from([(Term::name("alice"), Term::nonce("pw.alice"))]),
            trusted_aaids: BTreeMap::from([(Term::name("aaid-1"), "aaid-1.attest".to_owned())]),
            registered_keys: BTreeSet::from(["reg.authk".to_owned()]),
            binding_key: "client".into(),
        }
    }

    /// Runs the two application messages between machines on `cs` and `ss`.
    fn exchange(
        protocol: Protocol,
        binding: BindingMethod,
        policy: VerificationPolicy,
        cs: TlsSession,
        ss: TlsSession,
    ) -> Result<Output, UafError> {
        let mut client = RoleMachine::client(protocol, cs, "c1", client_cfg(binding));
        let mut server = RoleMachine::server(protocol, ss, "s1", server_cfg(binding, policy));
        let challenge = server.start().send.unwrap();
        client.start();
        // Re-encrypt under the client's own key so mismatched sessions still
        // reach the binding check.
        let Term::SymEnc { payload, .. } = challenge else {
            unreachable!()
        };
        let msg = Term::senc(client.session().swk.clone(), *payload);
        let reply = client.receive(&msg)?.send.unwrap();
        let Term::SymEnc { payload, .. } = reply else {
            unreachable!()
        };
        server.receive(&Term::senc(server.session().cwk.clone(), *payload))
    }

    #[test]
    fn honest_exchange_is_accepted_for_every_legal_binding() {
        for variant in TlsVariant::ALL {
            for binding in BindingMethod::ALL {
                if !binding.legal_for(variant) {
                    continue;
                }
                for protocol in [Protocol::Registration, Protocol::Authentication] {
                    let cs = session(variant, Side::Client, "server", "t");
                    let ss = session(variant, Side::Server, "server", "t");
                    let out = exchange(protocol, binding, VerificationPolicy::Strict, cs, ss);
                    assert!(out.is_ok(), "{binding:?} {variant} {protocol}: {out:?}");
                }
            }
        }
    }

    #[test]
    fn endpoint_binding_on_adversary_session_is_rejected() {
        let cs = session(TlsVariant::Tls12Dh, Side::Client, "mallory", "cm");
        let ss = session(TlsVariant::Tls12Dh, Side::Server, "server", "ms");
        for binding in [BindingMethod::ServerEndpoint, BindingMethod::ServerCert] {
            let err = exchange(
                Protocol::Registration,
                binding,
                VerificationPolicy::Strict,
                cs.clone(),
                ss.clone(),
            )
            .unwrap_err();
            assert_eq!(err, UafError::Rejected(VerifyError::BindingMismatch));
            assert!(exchange(
                Protocol::Registration,
                binding,
                VerificationPolicy::Lenient,
                cs.clone(),
                ss.clone()
            )
            .is_ok());
        }
    }

    #[test]
    fn client_side_bindings_cannot_tell_sessions_apart() {
        let cs = session(TlsVariant::Tls12Dh, Side::Client, "mallory", "cm");
        let ss = session(TlsVariant::Tls12Dh, Side::Server, "server", "ms");
        for binding in [BindingMethod::TokenBinding, BindingMethod::ChannelId] {
            let out = exchange(
                Protocol::Authentication,
                binding,
                VerificationPolicy::Strict,
                cs.clone(),
                ss.clone(),
            );
            assert!(out.is_ok());
        }
    }

    #[test]
    fn verify_assertion_checks_in_order() {
        let ss = session(TlsVariant::Tls13, Side::Server, "server", "t");
        let aaids = BTreeMap::from([(Term::name("aaid-1"), "aaid-1.attest".to_owned())]);
        let keys = BTreeSet::from(["reg.authk".to_owned()]);
        let appid = Term::name("server");
        let ch = Term::nonce("s1.challenge");
        let ctx = AssertionContext {
            protocol: Protocol::Authentication,
            binding: BindingMethod::Exporter,
            session: &ss,
            appid: &appid,
            challenge: &ch,
            trusted_aaids: &aaids,
            registered_keys: &keys,
            binding_key: "client",
        };
        let td = make_tls_data(BindingMethod::Exporter, &ch, &ss, "client").unwrap();
        let assertion = |signer: &str, fc: Term| {
            let n = Term::nonce("n");
            Term::tuple(vec![
                fc.clone(),
                n.clone(),
                Term::sig(signer, Term::tuple(vec![fc, n])),
            ])
        };
        let good = Term::hash(vec![appid.clone(), ch.clone(), td.clone()]);
        let strict = VerificationPolicy::Strict;
        assert_eq!(
            verify_assertion(&ctx, &assertion("reg.authk", good.clone()), strict),
            Ok("reg.authk".into())
        );
        assert_eq!(
            verify_assertion(&ctx, &assertion("mallory", good), strict),
            Err(VerifyError::SignatureInvalid)
        );
        let stale = Term::hash(vec![appid.clone(), Term::nonce("old"), td]);
        assert_eq!(
            verify_assertion(&ctx, &assertion("reg.authk", stale), strict),
            Err(VerifyError::ChallengeMismatch)
        );
        let other = Term::hash(vec![
            appid.clone(),
            ch.clone(),
            Term::hash(vec![Term::nonce("elsewhere")]),
        ]);
        assert_eq!(
            verify_assertion(&ctx, &assertion("reg.authk", other.clone()), strict),
            Err(VerifyError::BindingMismatch)
        );
        assert!(verify_assertion(
            &ctx,
            &assertion("reg.authk", other),
            VerificationPolicy::Lenient
        )
        .is_ok());
    }

    #[test]
    fn exporter_over_tls12_is_illegal() {
        let s = session(TlsVariant::Tls12Dh, Side::Client, "server", "t");
        assert!(matches!(
            make_tls_data(BindingMethod::Exporter, &Term::nonce("c"), &s, "client"),
            Err(UafError::IllegalBindingForVariant { .. })
        ));
    }

    #[test]
    fn baseline_checks_the_password() {
        let cs = session(TlsVariant::Tls12Rsa, Side::Client, "server", "t");
        let ss = session(TlsVariant::Tls12Rsa, Side::Server, "server", "t");
        let mut server = RoleMachine::server(
            Protocol::Baseline,
            ss.clone(),
            "s1",
            server_cfg(BindingMethod::Unbound, VerificationPolicy::Strict),
        );
        assert_eq!(server.start(), Output::default());
        let wrong = Term::senc(
            cs.cwk.clone(),
            Term::tuple(vec![Term::name("alice"), Term::nonce("guess")]),
        );
        assert_eq!(server.clone().receive(&wrong), Err(UafError::AuthFailed));
        let mut client = RoleMachine::client(
            Protocol::Baseline,
            cs,
            "c1",
            client_cfg(BindingMethod::Unbound),
        );
        let creds = client.start().send.unwrap();
        let out = server.receive(&creds).unwrap();
        assert!(client.receive(&out.send.unwrap()).unwrap().complete);
    }
}
