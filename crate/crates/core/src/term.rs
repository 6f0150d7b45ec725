//! Symbolic message algebra.
//!
//! Terms are a free algebra with a single equation: the Diffie-Hellman shared
//! secret is commutative, which [`Term::dh_shared`] and [`canonicalize`]
//! realise by storing the two exponent ids in sorted order.

use std::fmt;

/// A symbolic protocol message.
///
/// Key-like positions that must hold a specific key sort (the recipient of an
/// asymmetric encryption, the signer of a signature) store the owner id
/// directly, so an ill-sorted term cannot be built.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// Principal identifier. Always public.
    Name(String),
    /// Protocol string constant. Always public.
    Tag(String),
    Nonce(String),
    PremasterSecret(String),
    /// Private Diffie-Hellman exponent.
    DhExponent(String),
    /// `g^x` for the exponent with the given id.
    DhPublic(String),
    /// `g^xy`; the two exponent ids are kept sorted.
    DhShared(String, String),
    PublicKey(String),
    PrivateKey(String),
    /// Symmetric key identified by the term it was derived from.
    SymKey(Box<Term>),
    /// Ordered concatenation of at least two terms.
    Tuple(Vec<Term>),
    /// One-way, collision-free hash over an ordered argument list.
    Hash(Vec<Term>),
    SymEnc {
        key: Box<Term>,
        payload: Box<Term>,
    },
    /// Encryption under `PublicKey(recipient)`.
    AsymEnc {
        recipient: String,
        payload: Box<Term>,
    },
    /// Signature by `PrivateKey(signer)`. The payload is recoverable.
    Sig {
        signer: String,
        payload: Box<Term>,
    },
}

impl Term {
    pub fn name(id: impl Into<String>) -> Term {
        Term::Name(id.into())
    }

    pub fn tag(literal: impl Into<String>) -> Term {
        Term::Tag(literal.into())
    }

    pub fn nonce(id: impl Into<String>) -> Term {
        Term::Nonce(id.into())
    }

    pub fn pms(id: impl Into<String>) -> Term {
        Term::PremasterSecret(id.into())
    }

    pub fn dh_exp(id: impl Into<String>) -> Term {
        Term::DhExponent(id.into())
    }

    pub fn dh_pub(exp: impl Into<String>) -> Term {
        Term::DhPublic(exp.into())
    }

    pub fn dh_shared(a: impl Into<String>, b: impl Into<String>) -> Term {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Term::DhShared(a, b)
        } else {
            Term::DhShared(b, a)
        }
    }

    pub fn pubk(owner: impl Into<String>) -> Term {
        Term::PublicKey(owner.into())
    }

    pub fn privk(owner: impl Into<String>) -> Term {
        Term::PrivateKey(owner.into())
    }

    pub fn symkey(derivation: Term) -> Term {
        Term::SymKey(Box::new(derivation))
    }

    /// Panics if fewer than two parts are given.
    pub fn tuple(parts: Vec<Term>) -> Term {
        assert!(parts.len() >= 2, "tuple needs at least two parts");
        Term::Tuple(parts)
    }

    /// Panics on an empty argument list.
    pub fn hash(parts: Vec<Term>) -> Term {
        assert!(!parts.is_empty(), "hash needs at least one argument");
        Term::Hash(parts)
    }

    pub fn senc(key: Term, payload: Term) -> Term {
        Term::SymEnc {
            key: Box::new(key),
            payload: Box::new(payload),
        }
    }

    pub fn aenc(recipient: impl Into<String>, payload: Term) -> Term {
        Term::AsymEnc {
            recipient: recipient.into(),
            payload: Box::new(payload),
        }
    }

    pub fn sig(signer: impl Into<String>, payload: Term) -> Term {
        Term::Sig {
            signer: signer.into(),
            payload: Box::new(payload),
        }
    }

    /// Atoms have no proper subterms that the algebra can expose.
    pub fn is_atom(&self) -> bool {
        matches!(
            self,
            Term::Name(_)
                | Term::Tag(_)
                | Term::Nonce(_)
                | Term::PremasterSecret(_)
                | Term::DhExponent(_)
                | Term::DhShared(..)
                | Term::PublicKey(_)
                | Term::PrivateKey(_)
        )
    }

    /// Names and tags form the public vocabulary.
    pub fn is_public_constant(&self) -> bool {
        matches!(self, Term::Name(_) | Term::Tag(_))
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::DhPublic(_) | Term::DhShared(..) => 2,
            Term::SymKey(t) => 1 + t.depth(),
            Term::Tuple(parts) | Term::Hash(parts) => {
                1 + parts.iter().map(Term::depth).max().unwrap_or(0)
            }
            Term::SymEnc { key, payload } => 1 + key.depth().max(payload.depth()),
            Term::AsymEnc { payload, .. } | Term::Sig { payload, .. } => 1 + payload.depth().max(1),
            _ => 1,
        }
    }

    /// Immediate structural children, including the implicit key atoms of
    /// `AsymEnc`, `Sig` and the exponent atoms of the DH forms.
    pub fn children(&self) -> Vec<Term> {
        match self {
            Term::DhPublic(e) => vec![Term::dh_exp(e.clone())],
            Term::DhShared(a, b) => vec![Term::dh_exp(a.clone()), Term::dh_exp(b.clone())],
            Term::SymKey(t) => vec![(**t).clone()],
            Term::Tuple(parts) | Term::Hash(parts) => parts.clone(),
            Term::SymEnc { key, payload } => vec![(**key).clone(), (**payload).clone()],
            Term::AsymEnc { recipient, payload } => {
                vec![Term::pubk(recipient.clone()), (**payload).clone()]
            }
            Term::Sig { signer, payload } => {
                vec![Term::privk(signer.clone()), (**payload).clone()]
            }
            _ => Vec::new(),
        }
    }

    /// Every subterm, including `self`, in pre-order.
    pub fn subterms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            stack.extend(t.children());
            out.push(t);
        }
        out
    }

    /// True if `needle` occurs anywhere inside `self`.
    pub fn contains(&self, needle: &Term) -> bool {
        if self == needle {
            return true;
        }
        match self {
            Term::SymKey(t) => t.contains(needle),
            Term::Tuple(parts) | Term::Hash(parts) => parts.iter().any(|p| p.contains(needle)),
            Term::SymEnc { key, payload } => key.contains(needle) || payload.contains(needle),
            Term::AsymEnc { recipient, payload } => {
                matches!(needle, Term::PublicKey(o) if o == recipient) || payload.contains(needle)
            }
            Term::Sig { signer, payload } => {
                matches!(needle, Term::PrivateKey(o) if o == signer) || payload.contains(needle)
            }
            Term::DhPublic(e) => matches!(needle, Term::DhExponent(x) if x == e),
            Term::DhShared(a, b) => matches!(needle, Term::DhExponent(x) if x == a || x == b),
            _ => false,
        }
    }
}

/// Structural normal form. The only rewrite is ordering the exponents of
/// `DhShared`; everything else is rebuilt unchanged.
pub fn canonicalize(t: &Term) -> Term {
    match t {
        Term::DhShared(a, b) => Term::dh_shared(a.clone(), b.clone()),
        Term::SymKey(inner) => Term::SymKey(Box::new(canonicalize(inner))),
        Term::Tuple(parts) => Term::Tuple(parts.iter().map(canonicalize).collect()),
        Term::Hash(parts) => Term::Hash(parts.iter().map(canonicalize).collect()),
        Term::SymEnc { key, payload } => Term::senc(canonicalize(key), canonicalize(payload)),
        Term::AsymEnc { recipient, payload } => {
            Term::aenc(recipient.clone(), canonicalize(payload))
        }
        Term::Sig { signer, payload } => Term::sig(signer.clone(), canonicalize(payload)),
        other => other.clone(),
    }
}

fn write_str(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

fn write_list(f: &mut fmt::Formatter<'_>, head: &str, parts: &[Term]) -> fmt::Result {
    write!(f, "({head}")?;
    for p in parts {
        write!(f, " {p}")?;
    }
    f.write_str(")")
}

/// Canonical s-expression text. [`crate::syntax::parse_term`] inverts it.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atom = |f: &mut fmt::Formatter<'_>, head: &str, id: &str| {
            write!(f, "({head} ")?;
            write_str(f, id)?;
            f.write_str(")")
        };
        match self {
            Term::Name(id) => atom(f, "name", id),
            Term::Tag(id) => atom(f, "tag", id),
            Term::Nonce(id) => atom(f, "nonce", id),
            Term::PremasterSecret(id) => atom(f, "pms", id),
            Term::DhExponent(id) => atom(f, "dh-exp", id),
            Term::PublicKey(id) => atom(f, "pubk", id),
            Term::PrivateKey(id) => atom(f, "privk", id),
            Term::DhPublic(e) => write!(f, "(dh-pub {})", Term::dh_exp(e.clone())),
            Term::DhShared(a, b) => write!(
                f,
                "(dh-shared {} {})",
                Term::dh_exp(a.clone()),
                Term::dh_exp(b.clone())
            ),
            Term::SymKey(t) => write!(f, "(symk {t})"),
            Term::Tuple(parts) => write_list(f, "tuple", parts),
            Term::Hash(parts) => write_list(f, "hash", parts),
            Term::SymEnc { key, payload } => write!(f, "(senc {key} {payload})"),
            Term::AsymEnc { recipient, payload } => {
                write!(f, "(aenc {} {payload})", Term::pubk(recipient.clone()))
            }
            Term::Sig { signer, payload } => {
                write!(f, "(sig {} {payload})", Term::privk(signer.clone()))
            }
        }
    }
}

impl serde::Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Term, D::Error> {
        let text = String::deserialize(d)?;
        crate::syntax::parse_term(&text).map_err(serde::de::Error::custom)
    }
}
