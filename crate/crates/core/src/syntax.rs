//! S-expression reader and the canonical term syntax.
//!
//! ```text
//! (hash (tag "uaf_server_endpoint") (nonce "ch1") (hash (sig (privk "ca") ...)))
//! (senc <key> <payload>)   (aenc (pubk "s") <payload>)   (sig (privk "s") <payload>)
//! (dh-pub (dh-exp "x"))    (dh-shared (dh-exp "x") (dh-exp "y"))
//! ```
//!
//! `;` starts a comment that runs to the end of the line.

use std::fmt;

use thiserror::Error;

use crate::term::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{pos}: {message}")]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
}

impl ParseError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExprKind {
    Symbol(String),
    Str(String),
    List(Vec<SExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SExpr {
    pub kind: SExprKind,
    pub pos: Pos,
}

impl SExpr {
    pub fn as_symbol(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            _ => None,
        }
    }

    /// Head symbol and arguments of a non-empty list whose first item is a symbol.
    pub fn head(&self) -> Option<(&str, &[SExpr])> {
        let items = self.as_list()?;
        let (first, rest) = items.split_first()?;
        Some((first.as_symbol()?, rest))
    }

    /// A symbol or a string, whichever appears.
    pub fn as_ident(&self) -> Option<&str> {
        self.as_symbol().or_else(|| self.as_str())
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            chars: src.chars().peekable(),
            pos: Pos { line: 1, column: 1 },
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<SExpr>, ParseError> {
        self.skip_trivia();
        let start = self.pos;
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return Err(ParseError::new(start, "unclosed '('")),
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => {
                            // read() only returns None at end of input
                            if let Some(e) = self.read()? {
                                items.push(e);
                            }
                        }
                    }
                }
                Ok(Some(SExpr {
                    kind: SExprKind::List(items),
                    pos: start,
                }))
            }
            ')' => Err(ParseError::new(start, "unexpected ')'")),
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(ParseError::new(start, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some(c @ ('"' | '\\')) => s.push(c),
                            _ => return Err(ParseError::new(self.pos, "bad escape in string")),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Ok(Some(SExpr {
                    kind: SExprKind::Str(s),
                    pos: start,
                }))
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Some(SExpr {
                    kind: SExprKind::Symbol(s),
                    pos: start,
                }))
            }
        }
    }
}

/// Reads every top-level s-expression in `src`.
pub fn read_sexprs(src: &str) -> Result<Vec<SExpr>, ParseError> {
    let mut reader = Reader::new(src);
    let mut out = Vec::new();
    while let Some(e) = reader.read()? {
        out.push(e);
    }
    Ok(out)
}

/// Hook for heads outside the term vocabulary. Returning `None` lets the
/// converter report the head as unknown.
pub type Extension<'a> = dyn FnMut(&str, &[SExpr], Pos) -> Option<Result<Term, ParseError>> + 'a;

fn expect_arity(head: &str, args: &[SExpr], n: usize, pos: Pos) -> Result<(), ParseError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(ParseError::new(
            pos,
            format!("'{head}' takes {n} argument(s), got {}", args.len()),
        ))
    }
}

fn string_arg(head: &str, arg: &SExpr) -> Result<String, ParseError> {
    arg.as_str()
        .map(str::to_owned)
        .ok_or_else(|| ParseError::new(arg.pos, format!("'{head}' expects a quoted string")))
}

/// Exponent id from `(dh-exp "x")` or a bare string.
fn exponent_arg(head: &str, arg: &SExpr, ext: &mut Extension<'_>) -> Result<String, ParseError> {
    if let Some(s) = arg.as_str() {
        return Ok(s.to_owned());
    }
    match sexpr_to_term_with(arg, ext)? {
        Term::DhExponent(id) => Ok(id),
        other => Err(ParseError::new(
            arg.pos,
            format!("'{head}' expects a dh-exp, got {other}"),
        )),
    }
}

fn key_owner(
    head: &str,
    arg: &SExpr,
    public: bool,
    ext: &mut Extension<'_>,
) -> Result<String, ParseError> {
    match (sexpr_to_term_with(arg, ext)?, public) {
        (Term::PublicKey(o), true) | (Term::PrivateKey(o), false) => Ok(o),
        (other, _) => Err(ParseError::new(
            arg.pos,
            format!(
                "'{head}' expects a {} key, got {other}",
                if public { "public" } else { "private" }
            ),
        )),
    }
}

pub fn sexpr_to_term(e: &SExpr) -> Result<Term, ParseError> {
    sexpr_to_term_with(e, &mut |_, _, _| None)
}

/// Converts an s-expression to a term, consulting `ext` for unknown heads.
pub fn sexpr_to_term_with(e: &SExpr, ext: &mut Extension<'_>) -> Result<Term, ParseError> {
    let Some((head, args)) = e.head() else {
        return Err(ParseError::new(e.pos, "expected a term like (head ...)"));
    };
    let pos = e.pos;
    let atom = |args: &[SExpr]| -> Result<String, ParseError> {
        expect_arity(head, args, 1, pos)?;
        string_arg(head, &args[0])
    };
    let sub = |ext: &mut Extension<'_>, args: &[SExpr]| -> Result<Vec<Term>, ParseError> {
        args.iter().map(|a| sexpr_to_term_with(a, ext)).collect()
    };
    Ok(match head {
        "name" => Term::Name(atom(args)?),
        "tag" => Term::Tag(atom(args)?),
        "nonce" => Term::Nonce(atom(args)?),
        "pms" => Term::PremasterSecret(atom(args)?),
        "dh-exp" => Term::DhExponent(atom(args)?),
        "pubk" => Term::PublicKey(atom(args)?),
        "privk" => Term::PrivateKey(atom(args)?),
        "dh-pub" => {
            expect_arity(head, args, 1, pos)?;
            Term::DhPublic(exponent_arg(head, &args[0], ext)?)
        }
        "dh-shared" => {
            expect_arity(head, args, 2, pos)?;
            let a = exponent_arg(head, &args[0], ext)?;
            let b = exponent_arg(head, &args[1], ext)?;
            Term::dh_shared(a, b)
        }
        "symk" => {
            expect_arity(head, args, 1, pos)?;
            Term::symkey(sexpr_to_term_with(&args[0], ext)?)
        }
        "tuple" => {
            if args.len() < 2 {
                return Err(ParseError::new(pos, "'tuple' needs at least two parts"));
            }
            Term::Tuple(sub(ext, args)?)
        }
        "hash" => {
            if args.is_empty() {
                return Err(ParseError::new(pos, "'hash' needs at least one argument"));
            }
            Term::Hash(sub(ext, args)?)
        }
        "senc" => {
            expect_arity(head, args, 2, pos)?;
            let mut parts = sub(ext, args)?;
            let payload = parts.pop().expect("arity checked");
            let key = parts.pop().expect("arity checked");
            Term::senc(key, payload)
        }
        "aenc" => {
            expect_arity(head, args, 2, pos)?;
            let owner = key_owner(head, &args[0], true, ext)?;
            Term::aenc(owner, sexpr_to_term_with(&args[1], ext)?)
        }
        "sig" => {
            expect_arity(head, args, 2, pos)?;
            let owner = key_owner(head, &args[0], false, ext)?;
            Term::sig(owner, sexpr_to_term_with(&args[1], ext)?)
        }
        _ => match ext(head, args, pos) {
            Some(r) => r?,
            None => return Err(ParseError::new(pos, format!("unknown term head '{head}'"))),
        },
    })
}

/// Parses exactly one term.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let exprs = read_sexprs(src)?;
    match exprs.as_slice() {
        [one] => sexpr_to_term(one),
        [] => Err(ParseError::new(Pos { line: 1, column: 1 }, "empty input")),
        [_, second, ..] => Err(ParseError::new(second.pos, "trailing input after term")),
    }
}

/// Parses a whitespace-separated sequence of terms.
pub fn parse_terms(src: &str) -> Result<Vec<Term>, ParseError> {
    read_sexprs(src)?.iter().map(sexpr_to_term).collect()
}

impl std::str::FromStr for Term {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Term, ParseError> {
        parse_term(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_terms() {
        let t = parse_term(r#"(hash (tag "uaf_server_endpoint") (nonce "ch1") (pubk "client"))"#)
            .unwrap();
        assert_eq!(
            t,
            Term::hash(vec![
                Term::tag("uaf_server_endpoint"),
                Term::nonce("ch1"),
                Term::pubk("client")
            ])
        );
    }

    #[test]
    fn dh_forms_accept_bare_strings_and_canonicalize() {
        let a = parse_term(r#"(dh-shared (dh-exp "y") (dh-exp "x"))"#).unwrap();
        let b = parse_term(r#"(dh-shared "x" "y")"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, Term::dh_shared("x", "y"));
    }

    #[test]
    fn unknown_head_reports_position() {
        let err = parse_term("(hash\n  (blob \"x\"))").unwrap_err();
        assert_eq!(err.pos, Pos { line: 2, column: 3 });
        assert!(err.message.contains("unknown term head 'blob'"));
    }

    #[test]
    fn key_sorts_are_checked() {
        let err = parse_term(r#"(aenc (privk "s") (nonce "m"))"#).unwrap_err();
        assert!(err.message.contains("public key"));
        let err = parse_term(r#"(sig (pubk "s") (nonce "m"))"#).unwrap_err();
        assert!(err.message.contains("private key"));
    }

    #[test]
    fn structural_errors() {
        assert!(parse_term("(tuple (nonce \"a\"))").is_err());
        assert!(parse_term("(hash)").is_err());
        assert!(parse_term("(nonce \"a\"").is_err());
        assert!(parse_term("(nonce a)").is_err());
        assert!(parse_term("").is_err());
        assert!(parse_term("(nonce \"a\") (nonce \"b\")").is_err());
    }

    #[test]
    fn comments_and_escapes() {
        let ts = parse_terms("; kb\n(tag \"say \\\"hi\\\"\") ; trailing\n(name \"s\")").unwrap();
        assert_eq!(ts, vec![Term::tag("say \"hi\""), Term::name("s")]);
        assert_eq!(parse_term(&ts[0].to_string()).unwrap(), ts[0]);
    }

    #[test]
    fn extension_hook_resolves_custom_heads() {
        let e = &read_sexprs("(senc (key c1 swk) (tag \"x\"))").unwrap()[0];
        let t = sexpr_to_term_with(e, &mut |head, _, _| {
            (head == "key").then(|| Ok(Term::nonce("k")))
        })
        .unwrap();
        assert_eq!(t, Term::senc(Term::nonce("k"), Term::tag("x")));
    }
}
