//! The thirteen analysed models and their selector strings.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::tls::TlsVariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BindingMethod {
    Unbound,
    TokenBinding,
    ChannelId,
    ServerEndpoint,
    ServerCert,
    Exporter,
}

impl BindingMethod {
    pub const ALL: [BindingMethod; 6] = [
        BindingMethod::Unbound,
        BindingMethod::TokenBinding,
        BindingMethod::ChannelId,
        BindingMethod::ServerEndpoint,
        BindingMethod::ServerCert,
        BindingMethod::Exporter,
    ];

    /// Exporter needs TLS 1.3; the endpoint-style bindings need TLS 1.2.
    /// An unbound challenge is possible over any variant.
    pub fn legal_for(self, tls: TlsVariant) -> bool {
        match self {
            BindingMethod::Unbound => true,
            BindingMethod::Exporter => tls == TlsVariant::Tls13,
            _ => tls != TlsVariant::Tls13,
        }
    }

    /// Bindings the client derives from its own key material; a server can
    /// check their shape but not tie them to a session.
    pub fn is_client_side(self) -> bool {
        matches!(self, BindingMethod::TokenBinding | BindingMethod::ChannelId)
    }

    pub fn slug(self) -> &'static str {
        match self {
            BindingMethod::Unbound => "nobinding",
            BindingMethod::TokenBinding => "tokenbinding",
            BindingMethod::ChannelId => "channelid",
            BindingMethod::ServerEndpoint => "endpoint",
            BindingMethod::ServerCert => "servercert",
            BindingMethod::Exporter => "exporter",
        }
    }

    fn display(self) -> &'static str {
        match self {
            BindingMethod::Unbound => "NoBinding",
            BindingMethod::TokenBinding => "TokenBinding",
            BindingMethod::ChannelId => "ChannelId",
            BindingMethod::ServerEndpoint => "Endpoint",
            BindingMethod::ServerCert => "ServerCert",
            BindingMethod::Exporter => "Exporter",
        }
    }

    pub fn from_slug(s: &str) -> Option<BindingMethod> {
        BindingMethod::ALL.into_iter().find(|b| b.slug() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelId {
    binding: BindingMethod,
    tls: TlsVariant,
    baseline: bool,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("no analysed model uses {binding:?} over {tls:?}")]
    NotAModel {
        binding: BindingMethod,
        tls: TlsVariant,
    },
    #[error("unknown model '{given}'; valid models: {}", valid.join(", "))]
    UnknownSelector { given: String, valid: Vec<String> },
}

impl ModelId {
    /// The password-over-TLS 1.2 baseline without UAF.
    pub const BASELINE: ModelId = ModelId {
        binding: BindingMethod::Unbound,
        tls: TlsVariant::Tls12Rsa,
        baseline: true,
    };

    pub fn uaf(binding: BindingMethod, tls: TlsVariant) -> Result<ModelId, ModelError> {
        if binding.legal_for(tls) {
            Ok(ModelId {
                binding,
                tls,
                baseline: false,
            })
        } else {
            Err(ModelError::NotAModel { binding, tls })
        }
    }

    /// All rows of the results matrix, in table order.
    pub fn all() -> Vec<ModelId> {
        let mut out = vec![ModelId::BASELINE];
        for tls in [TlsVariant::Tls12Rsa, TlsVariant::Tls12Dh] {
            for b in [
                BindingMethod::Unbound,
                BindingMethod::TokenBinding,
                BindingMethod::ChannelId,
                BindingMethod::ServerEndpoint,
                BindingMethod::ServerCert,
            ] {
                out.push(ModelId::uaf(b, tls).expect("legal TLS 1.2 binding"));
            }
        }
        out.push(ModelId::uaf(BindingMethod::Unbound, TlsVariant::Tls13).expect("legal"));
        out.push(ModelId::uaf(BindingMethod::Exporter, TlsVariant::Tls13).expect("legal"));
        out
    }

    pub fn binding(&self) -> BindingMethod {
        self.binding
    }

    pub fn tls(&self) -> TlsVariant {
        self.tls
    }

    pub fn is_baseline(&self) -> bool {
        self.baseline
    }

    pub fn selector(&self) -> String {
        if self.baseline {
            return "baseline-nouaf".to_owned();
        }
        let tls = match self.tls {
            TlsVariant::Tls12Rsa => "tls12-rsa",
            TlsVariant::Tls12Dh => "tls12-dh",
            TlsVariant::Tls13 => "tls13",
        };
        format!("uaf-{}-{tls}", self.binding.slug())
    }

    pub fn valid_selectors() -> Vec<String> {
        ModelId::all().iter().map(ModelId::selector).collect()
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.baseline {
            return f.write_str("Baseline-NoUAF");
        }
        let tls = match self.tls {
            TlsVariant::Tls12Rsa => "TLS1.2-RSA",
            TlsVariant::Tls12Dh => "TLS1.2-DH",
            TlsVariant::Tls13 => "TLS1.3",
        };
        write!(f, "UAF-{}-{tls}", self.binding.display())
    }
}

impl FromStr for ModelId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<ModelId, ModelError> {
        let wanted = s.trim().to_ascii_lowercase();
        ModelId::all()
            .into_iter()
            .find(|m| m.selector() == wanted || m.to_string().to_ascii_lowercase() == wanted)
            .ok_or_else(|| ModelError::UnknownSelector {
                given: s.to_owned(),
                valid: ModelId::valid_selectors(),
            })
    }
}

impl Serialize for ModelId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
