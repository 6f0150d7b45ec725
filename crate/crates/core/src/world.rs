//! Principals, credentials and the adversary's starting knowledge.

use std::collections::{BTreeMap, BTreeSet};

use crate::knowledge::OriginationAssumption;
use crate::term::Term;
use crate::tls::Certificate;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct World {
    pub client: String,
    pub server: String,
    /// The adversary's identity. It owns a CA-signed certificate and runs a
    /// legitimate relying-party server.
    pub adversary: String,
    pub ca: String,
    /// The honest user's account at the honest server.
    pub user: String,
    /// The adversary's own account at the honest server.
    pub adversary_user: String,
    pub aaid: String,
    pub attestation_key: String,
    /// Authenticator key of the honest user's earlier registration.
    pub registered_key: String,
    /// Owner of the long-lived key the client uses for client-side bindings.
    pub binding_key: String,
}

impl Default for World {
    fn default() -> Self {
        World {
            client: "client".into(),
            server: "server".into(),
            adversary: "mallory".into(),
            ca: "ca".into(),
            user: "alice".into(),
            adversary_user: "mallory-user".into(),
            aaid: "aaid-1".into(),
            attestation_key: "aaid-1.attest".into(),
            registered_key: "reg.authk".into(),
            binding_key: "client".into(),
        }
    }
}

impl World {
    pub fn certificate(&self, subject: &str) -> Certificate {
        Certificate::issue(subject, self.ca.clone())
    }

    pub fn password(&self, user: &str) -> Term {
        Term::nonce(format!("pw.{user}"))
    }

    /// Password records held by the honest server.
    pub fn password_records(&self) -> BTreeMap<Term, Term> {
        [&self.user, &self.adversary_user]
            .into_iter()
            .map(|u| (Term::name(u.clone()), self.password(u)))
            .collect()
    }

    /// Application ids a client accepts from `peer`. The adversary's server
    /// lists the honest server's appid among its facets.
    pub fn facets(&self, peer: &str) -> Vec<Term> {
        if peer == self.adversary {
            vec![Term::name(peer), Term::name(self.server.clone())]
        } else {
            vec![Term::name(peer)]
        }
    }

    pub fn trusted_aaids(&self) -> BTreeMap<Term, String> {
        BTreeMap::from([(Term::name(self.aaid.clone()), self.attestation_key.clone())])
    }

    pub fn registered_keys(&self) -> BTreeSet<String> {
        BTreeSet::from([self.registered_key.clone()])
    }

    pub fn is_honest(&self, principal: &str) -> bool {
        principal != self.adversary
    }

    /// Public names a message may mention.
    pub fn names(&self) -> Vec<Term> {
        [
            &self.client,
            &self.server,
            &self.adversary,
            &self.ca,
            &self.user,
            &self.adversary_user,
            &self.aaid,
        ]
        .into_iter()
        .map(|n| Term::name(n.clone()))
        .collect()
    }

    pub fn initial_knowledge(&self) -> Vec<Term> {
        let mut kb: Vec<Term> = [
            &self.client,
            &self.server,
            &self.adversary,
            &self.ca,
            &self.attestation_key,
            &self.registered_key,
        ]
        .into_iter()
        .map(|p| Term::pubk(p.clone()))
        .collect();
        kb.push(Term::privk(self.adversary.clone()));
        kb.push(self.certificate(&self.server).to_term());
        kb.push(self.certificate(&self.adversary).to_term());
        kb.push(self.password(&self.adversary_user));
        kb
    }

    pub fn assumptions(&self) -> Vec<OriginationAssumption> {
        [
            &self.ca,
            &self.server,
            &self.client,
            &self.attestation_key,
            &self.registered_key,
        ]
        .into_iter()
        .map(|p| {
            OriginationAssumption::non_originating(Term::privk(p.clone()))
                .expect("private keys are key-like")
        })
        .collect()
    }
}
