//! A single protocol execution: honest role strands, the adversary's own
//! endpoints, and the network between them.

use thiserror::Error;

use crate::bundle::{Bundle, InjectionKind, Owner, StrandStatus};
use crate::knowledge::{KnowledgeBase, OriginationAssumption};
use crate::model::ModelId;
use crate::network::{NetError, Network};
use crate::term::Term;
use crate::tls::{
    handshake, ClientEndpoint, ServerEndpoint, SessionSecret, TlsError, TlsSession, TlsVariant,
};
use crate::uaf::{
    ClientConfig, Expectation, Output, Protocol, RoleMachine, ServerConfig, UafError,
    VerificationPolicy,
};
use crate::world::World;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tls(#[from] TlsError),
    #[error("{protocol} does not run in {model}")]
    ProtocolMismatch { model: ModelId, protocol: Protocol },
    #[error("strand {0} is not waiting for a message")]
    NotAwaiting(usize),
    #[error("premaster secrets exist only in TLS1.2-RSA sessions")]
    NoPremasterSecret,
}

/// Who the client opens its TLS channel to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClientPeer {
    /// The adversary's own server, which the client knowingly visits.
    Adversary,
    /// A fresh honest server strand. With `leak_pms` the client's premaster
    /// secret is handed to the adversary.
    Honest { leak_pms: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Delivery {
    Accepted,
    Rejected(UafError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpenedClient {
    pub client: usize,
    pub server: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Execution {
    model: ModelId,
    protocol: Protocol,
    policy: VerificationPolicy,
    world: World,
    net: Network,
    machines: Vec<Option<RoleMachine>>,
    servers: usize,
    clients: usize,
    adversary_sessions: usize,
}

impl Execution {
    pub fn new(
        model: ModelId,
        protocol: Protocol,
        policy: VerificationPolicy,
    ) -> Result<Execution, ExecError> {
        Execution::with_world(World::default(), model, protocol, policy)
    }

    pub fn with_world(
        world: World,
        model: ModelId,
        protocol: Protocol,
        policy: VerificationPolicy,
    ) -> Result<Execution, ExecError> {
        if model.is_baseline() != (protocol == Protocol::Baseline) {
            return Err(ExecError::ProtocolMismatch { model, protocol });
        }
        let net = Network::new(world.initial_knowledge(), world.assumptions())?;
        Ok(Execution {
            model,
            protocol,
            policy,
            world,
            net,
            machines: Vec::new(),
            servers: 0,
            clients: 0,
            adversary_sessions: 0,
        })
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn policy(&self) -> VerificationPolicy {
        self.policy
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn bundle(&self) -> &Bundle {
        self.net.bundle()
    }

    pub fn into_bundle(self) -> Bundle {
        self.net.into_bundle()
    }

    pub fn kb(&self) -> &KnowledgeBase {
        self.net.kb()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn session(&self, strand: usize) -> Option<&TlsSession> {
        self.net.bundle().strands.get(strand)?.session.as_ref()
    }

    pub fn strand_index(&self, id: &str) -> Option<usize> {
        self.net.bundle().strand_index(id)
    }

    pub fn server_count(&self) -> usize {
        self.servers
    }

    pub fn client_count(&self) -> usize {
        self.clients
    }

    pub fn compromised_count(&self) -> usize {
        self.net
            .bundle()
            .injected
            .iter()
            .filter(|i| i.kind == InjectionKind::Compromised)
            .count()
    }

    fn variant(&self) -> TlsVariant {
        self.model.tls()
    }

    fn client_config(&self, peer: &str) -> ClientConfig {
        let w = &self.world;
        ClientConfig {
            binding: self.model.binding(),
            username: Term::name(w.user.clone()),
            password: w.password(&w.user),
            accepted_appids: w.facets(peer),
            binding_key: w.binding_key.clone(),
            aaid: Term::name(w.aaid.clone()),
            attestation_key: w.attestation_key.clone(),
            auth_key: w.registered_key.clone(),
        }
    }

    fn server_config(&self, client_is_adversary: bool) -> ServerConfig {
        let w = &self.world;
        let account = if client_is_adversary {
            &w.adversary_user
        } else {
            &w.user
        };
        ServerConfig {
            binding: self.model.binding(),
            policy: self.policy,
            appid: Term::name(w.server.clone()),
            username: Term::name(account.clone()),
            passwords: w.password_records(),
            trusted_aaids: w.trusted_aaids(),
            registered_keys: w.registered_keys(),
            binding_key: w.binding_key.clone(),
        }
    }

    fn new_strand(&mut self, server: bool) -> (usize, String) {
        let (id, role) = if server {
            self.servers += 1;
            (format!("s{}", self.servers), self.protocol.server_role())
        } else {
            self.clients += 1;
            (format!("c{}", self.clients), self.protocol.client_role())
        };
        let full = role.full_height(self.variant());
        let idx = self.net.add_strand(&id, role, Owner::Honest, full);
        self.machines.push(None);
        (idx, id)
    }

    fn adversary_prefix(&mut self) -> String {
        self.adversary_sessions += 1;
        format!("m{}", self.adversary_sessions)
    }

    fn halt(&mut self, strand: usize, reason: String) {
        self.net.set_status(strand, StrandStatus::Halted(reason));
    }

    /// Applies a role step to the bundle: bindings, secrets and the reply.
    fn apply(&mut self, strand: usize, out: Output) -> Result<(), ExecError> {
        for (v, t) in out.recv_bindings {
            self.net.bind(strand, v, t);
        }
        for secret in out.secrets {
            self.net.assume(
                OriginationAssumption::non_originating(secret).expect("private keys are key-like"),
            )?;
        }
        if let Some(msg) = out.send {
            self.net.send(strand, msg)?;
        }
        for (v, t) in out.send_bindings {
            self.net.bind(strand, v, t);
        }
        if out.complete {
            self.net.set_status(strand, StrandStatus::Complete);
        }
        Ok(())
    }

    fn start_machine(&mut self, strand: usize, mut machine: RoleMachine) -> Result<(), ExecError> {
        let out = machine.start();
        self.machines[strand] = Some(machine);
        self.apply(strand, out)
    }

    /// An honest server accepts a TLS connection from the adversary, who
    /// logs in with its own account.
    pub fn open_server(&mut self) -> Result<usize, ExecError> {
        let (s, id) = self.new_strand(true);
        let fresh = self.adversary_prefix();
        let client = ClientEndpoint {
            strand: None,
            name: self.world.adversary.clone(),
            intended_peer: self.world.server.clone(),
            trusted_ca: self.world.ca.clone(),
            fresh,
        };
        let server = ServerEndpoint {
            strand: Some(s),
            name: self.world.server.clone(),
            cert: self.world.certificate(&self.world.server),
            fresh: id.clone(),
        };
        let variant = self.variant();
        let (_, session) = handshake(&mut self.net, &client, &server, variant)?;
        let machine = RoleMachine::server(self.protocol, session, &id, self.server_config(true));
        self.start_machine(s, machine)?;
        Ok(s)
    }

    /// An honest client opens a TLS channel and starts its role.
    pub fn open_client(&mut self, peer: ClientPeer) -> Result<OpenedClient, ExecError> {
        if matches!(peer, ClientPeer::Honest { leak_pms: true })
            && self.variant() != TlsVariant::Tls12Rsa
        {
            return Err(ExecError::NoPremasterSecret);
        }
        let peer_name = match peer {
            ClientPeer::Adversary => self.world.adversary.clone(),
            ClientPeer::Honest { .. } => self.world.server.clone(),
        };
        let (c, cid) = self.new_strand(false);
        let client = ClientEndpoint {
            strand: Some(c),
            name: self.world.client.clone(),
            intended_peer: peer_name.clone(),
            trusted_ca: self.world.ca.clone(),
            fresh: cid.clone(),
        };
        let (server, sid) = match peer {
            ClientPeer::Adversary => {
                let fresh = self.adversary_prefix();
                let ep = ServerEndpoint {
                    strand: None,
                    name: peer_name.clone(),
                    cert: self.world.certificate(&peer_name),
                    fresh,
                };
                (ep, None)
            }
            ClientPeer::Honest { .. } => {
                let (s, sid) = self.new_strand(true);
                let ep = ServerEndpoint {
                    strand: Some(s),
                    name: peer_name.clone(),
                    cert: self.world.certificate(&peer_name),
                    fresh: sid.clone(),
                };
                (ep, Some((s, sid)))
            }
        };
        let variant = self.variant();
        let (client_session, server_session) =
            match handshake(&mut self.net, &client, &server, variant) {
                Ok(pair) => pair,
                Err(e) => {
                    self.halt(c, e.to_string());
                    return Err(e.into());
                }
            };
        if let (ClientPeer::Honest { leak_pms: true }, SessionSecret::Rsa { pms }) =
            (peer, &client_session.secret)
        {
            self.net
                .inject(pms.clone(), InjectionKind::Compromised, Some(c))?;
        }
        let machine = RoleMachine::client(
            self.protocol,
            client_session,
            &cid,
            self.client_config(&peer_name),
        );
        self.start_machine(c, machine)?;
        if let Some((s, sid)) = &sid {
            let machine = RoleMachine::server(
                self.protocol,
                server_session,
                sid,
                self.server_config(false),
            );
            self.start_machine(*s, machine)?;
        }
        Ok(OpenedClient {
            client: c,
            server: sid.map(|(s, _)| s),
        })
    }

    pub fn is_awaiting(&self, strand: usize) -> bool {
        self.machines
            .get(strand)
            .and_then(Option::as_ref)
            .is_some_and(|m| m.is_awaiting())
    }

    pub fn awaiting(&self) -> Vec<usize> {
        (0..self.machines.len())
            .filter(|&s| self.is_awaiting(s))
            .collect()
    }

    pub fn expectation(&self, strand: usize) -> Option<Expectation> {
        self.machines.get(strand)?.as_ref()?.expectation()
    }

    /// Whether the strand would accept `msg`, without delivering it.
    pub fn would_accept(&self, strand: usize, msg: &Term) -> bool {
        match self.machines.get(strand).and_then(Option::as_ref) {
            Some(m) if m.is_awaiting() => m.clone().receive(msg).is_ok(),
            _ => false,
        }
    }

    /// The adversary delivers `msg` to an awaiting strand.
    pub fn deliver(&mut self, strand: usize, msg: Term) -> Result<Delivery, ExecError> {
        let mut machine = match self.machines.get_mut(strand).and_then(Option::take) {
            Some(m) if m.is_awaiting() => m,
            Some(m) => {
                self.machines[strand] = Some(m);
                return Err(ExecError::NotAwaiting(strand));
            }
            None => return Err(ExecError::NotAwaiting(strand)),
        };
        if let Err(e) = self.net.deliver(strand, msg.clone()) {
            self.machines[strand] = Some(machine);
            return Err(e.into());
        }
        let result = machine.receive(&msg);
        self.machines[strand] = Some(machine);
        match result {
            Ok(out) => {
                self.apply(strand, out)?;
                Ok(Delivery::Accepted)
            }
            Err(e) => {
                self.halt(strand, e.to_string());
                Ok(Delivery::Rejected(e))
            }
        }
    }

    /// Forwards every pending honest message to its TLS peer until nothing
    /// changes. Used for runs without adversary interference.
    pub fn relay_honest(&mut self) -> Result<(), ExecError> {
        loop {
            let mut progressed = false;
            for s in self.awaiting() {
                let Some(peer) = self.net.bundle().strands[s].tls_peer else {
                    continue;
                };
                let Some(msg) = self.net.last_sent(peer).cloned() else {
                    continue;
                };
                if self.would_accept(s, &msg) {
                    self.deliver(s, msg)?;
                    progressed = true;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    /// Secrecy invariants that must hold after every step: no
    /// non-originating atom is derivable, and honest-to-honest sessions keep
    /// their write keys unless their premaster secret was compromised.
    pub fn secrecy_violations(&self) -> Vec<String> {
        let bundle = self.net.bundle();
        let mut out: Vec<String> = bundle
            .non_originating
            .iter()
            .filter(|t| self.net.derivable(t))
            .map(|t| format!("non-originating {t} is derivable"))
            .collect();
        for st in &bundle.strands {
            let (Some(session), Some(_)) = (&st.session, st.tls_peer) else {
                continue;
            };
            if !st.role.is_client() {
                continue;
            }
            if let SessionSecret::Rsa { pms } = &session.secret {
                if bundle.is_compromised(pms) {
                    continue;
                }
            }
            for key in [&session.cwk, &session.swk] {
                if self.net.derivable(key) {
                    out.push(format!(
                        "write key {key} of honest session {} is derivable",
                        st.id
                    ));
                }
            }
        }
        out
    }
}

/// A faithful run between the honest client and the honest server.
pub fn run_honest(
    model: ModelId,
    protocol: Protocol,
    policy: VerificationPolicy,
) -> Result<Bundle, ExecError> {
    let mut exec = Execution::new(model, protocol, policy)?;
    exec.open_client(ClientPeer::Honest { leak_pms: false })?;
    exec.relay_honest()?;
    Ok(exec.into_bundle())
}

pub fn run_baseline() -> Result<Bundle, ExecError> {
    run_honest(
        ModelId::BASELINE,
        Protocol::Baseline,
        VerificationPolicy::Strict,
    )
}

pub fn run_registration(model: ModelId, policy: VerificationPolicy) -> Result<Bundle, ExecError> {
    run_honest(model, Protocol::Registration, policy)
}

pub fn run_authentication(model: ModelId, policy: VerificationPolicy) -> Result<Bundle, ExecError> {
    run_honest(model, Protocol::Authentication, policy)
}
