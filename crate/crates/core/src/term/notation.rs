//! Textual term notation and its symbol-table sidecar.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! seq    := item (',' item)*            comma lists nest left-associatively
//! item   := (IDENT '@')? core           optional binding label, engine use
//! core   := '(' seq ')' | enc | IDENT
//! enc    := '{' seq '}' FUNC ('(' IDENT ')')?
//! FUNC   := sk | pk | hmac | h
//! IDENT  := [A-Za-z_][A-Za-z0-9_]*
//! ```
//!
//! Identifiers stand for leaf terms and are resolved through a symbol table.
//! The sidecar format is one `identifier = kind args...` entry per line,
//! with `#` comments and double quotes around arguments containing spaces.

use super::{
    pair_seq, FuncName, KeyEncoding, KeyMaterial, NameKind, Nonce, Term, TermError, UserData,
};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chrono::{DateTime, Utc};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NotationError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("identifier `{0}` is not bound in the symbol table")]
    UnboundIdentifier(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("no identifier for leaf value {0}")]
    UnnamedLeaf(String),
    #[error("symbol table entries must be leaf terms, `{0}` is not")]
    NotALeaf(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

fn syntax(position: usize, message: impl Into<String>) -> NotationError {
    NotationError::Syntax {
        position,
        message: message.into(),
    }
}

/// Parsed notation tree with identifiers still unresolved. The protocol
/// engine uses this directly as a message template; [`parse_term`] resolves
/// it against a symbol table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Ast {
    Ident(String),
    Labeled { label: String, inner: Box<Ast> },
    Seq(Vec<Ast>),
    Enc {
        payload: Box<Ast>,
        func: FuncName,
        key: Option<String>,
    },
}

pub(crate) fn parse_ast(input: &str) -> Result<Ast, NotationError> {
    let mut parser = Parser {
        input: input.as_bytes(),
        pos: 0,
    };
    let ast = parser.parse_seq()?;
    parser.skip_ws();
    if parser.pos != parser.input.len() {
        return Err(syntax(parser.pos, "unexpected trailing input"));
    }
    Ok(ast)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.input.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8) -> Result<(), NotationError> {
        match self.peek() {
            Some(b) if b == byte => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(syntax(self.pos, format!("expected `{}`", byte as char))),
        }
    }

    fn parse_seq(&mut self) -> Result<Ast, NotationError> {
        let mut items = vec![self.parse_item()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            items.push(self.parse_item()?);
        }
        if items.len() == 1 {
            Ok(items.pop().unwrap())
        } else {
            Ok(Ast::Seq(items))
        }
    }

    fn parse_item(&mut self) -> Result<Ast, NotationError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_seq()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(b'{') => self.parse_enc(),
            Some(b) if is_ident_start(b) => {
                let ident = self.parse_ident()?;
                if self.input.get(self.pos) == Some(&b'@') {
                    self.pos += 1;
                    let inner = self.parse_item()?;
                    Ok(Ast::Labeled {
                        label: ident,
                        inner: Box::new(inner),
                    })
                } else {
                    Ok(Ast::Ident(ident))
                }
            }
            Some(b) => Err(syntax(self.pos, format!("unexpected `{}`", b as char))),
            None => Err(syntax(self.pos, "unexpected end of input")),
        }
    }

    fn parse_enc(&mut self) -> Result<Ast, NotationError> {
        self.expect(b'{')?;
        let payload = self.parse_seq()?;
        self.expect(b'}')?;
        let func_pos = {
            self.skip_ws();
            self.pos
        };
        let func_name = self.parse_ident()?;
        let func = FuncName::from_str(&func_name)
            .ok_or_else(|| syntax(func_pos, format!("unknown function `{func_name}`")))?;
        let key = if self.peek() == Some(b'(') {
            self.pos += 1;
            let ident = self.parse_ident()?;
            self.expect(b')')?;
            Some(ident)
        } else {
            None
        };
        match (func, &key) {
            (FuncName::H, Some(_)) => return Err(TermError::UnexpectedKeyArg.into()),
            (FuncName::H, None) => {}
            (f, None) => return Err(TermError::MissingKeyArg(f).into()),
            _ => {}
        }
        Ok(Ast::Enc {
            payload: Box::new(payload),
            func,
            key,
        })
    }

    fn parse_ident(&mut self) -> Result<String, NotationError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.input.len() || !is_ident_start(self.input[self.pos]) {
            return Err(syntax(self.pos, "expected identifier"));
        }
        self.pos += 1;
        while self.pos < self.input.len() && is_ident_continue(self.input[self.pos]) {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.input[start..self.pos]).into_owned())
    }
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Ordered identifier-to-leaf bindings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolTable {
    entries: Vec<(String, Term)>,
}

impl SymbolTable {
    pub fn new() -> Self {
        SymbolTable::default()
    }

    pub fn insert(&mut self, ident: impl Into<String>, leaf: Term) -> Result<(), NotationError> {
        let ident = ident.into();
        if !leaf.is_leaf() {
            return Err(NotationError::NotALeaf(ident));
        }
        if self.get(&ident).is_some() {
            return Err(NotationError::DuplicateSymbol(ident));
        }
        self.entries.push((ident, leaf));
        Ok(())
    }

    pub fn get(&self, ident: &str) -> Option<&Term> {
        self.entries
            .iter()
            .find(|(name, _)| name == ident)
            .map(|(_, term)| term)
    }

    /// Reverse lookup by value equality.
    pub fn ident_for(&self, leaf: &Term) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, term)| term == leaf)
            .map(|(name, _)| name.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Term)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses the concrete notation against a symbol table. Comma sequences
/// come back as left-nested pairs; binding labels are allowed and ignored.
pub fn parse_term(input: &str, table: &SymbolTable) -> Result<Term, NotationError> {
    let ast = parse_ast(input)?;
    resolve(&ast, table)
}

fn resolve(ast: &Ast, table: &SymbolTable) -> Result<Term, NotationError> {
    match ast {
        Ast::Ident(ident) => table
            .get(ident)
            .cloned()
            .ok_or_else(|| NotationError::UnboundIdentifier(ident.clone())),
        Ast::Labeled { inner, .. } => resolve(inner, table),
        Ast::Seq(items) => {
            let terms = items
                .iter()
                .map(|item| resolve(item, table))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(pair_seq(terms).expect("sequences have at least one item"))
        }
        Ast::Enc { payload, func, key } => {
            let payload = resolve(payload, table)?;
            let key_arg = match key {
                Some(ident) => Some(
                    table
                        .get(ident)
                        .cloned()
                        .ok_or_else(|| NotationError::UnboundIdentifier(ident.clone()))?,
                ),
                None => None,
            };
            Ok(super::encrypt_term(payload, *func, key_arg)?)
        }
    }
}

/// Prints a term in canonical notation: comma lists without spaces, the
/// left pair spine flattened, right-nested pairs parenthesized. Exact
/// inverse of [`parse_term`] over the same table.
pub fn print_term(term: &Term, table: &SymbolTable) -> Result<String, NotationError> {
    let mut out = String::new();
    write_seq(term, table, &mut out)?;
    Ok(out)
}

fn write_seq(term: &Term, table: &SymbolTable, out: &mut String) -> Result<(), NotationError> {
    // Flatten only the left pair spine; a pair in right position is a
    // genuinely right-nested group and prints parenthesized.
    let mut spine = Vec::new();
    let mut cursor = term;
    while let Term::Pair(l, r) = cursor {
        spine.push(r.as_ref());
        cursor = l;
    }
    spine.push(cursor);
    for (i, component) in spine.iter().rev().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_item(component, table, out)?;
    }
    Ok(())
}

fn write_item(term: &Term, table: &SymbolTable, out: &mut String) -> Result<(), NotationError> {
    match term {
        Term::Pair(_, _) => {
            // only reachable for right-nested pairs
            out.push('(');
            write_seq(term, table, out)?;
            out.push(')');
            Ok(())
        }
        Term::Enc {
            payload,
            func,
            key_arg,
        } => {
            out.push('{');
            write_seq(payload, table, out)?;
            out.push('}');
            out.push_str(func.as_str());
            if let Some(key) = key_arg {
                let ident = match table.ident_for(key) {
                    Some(ident) => ident,
                    None => match key.as_ref() {
                        Term::Key(material) => material.label.as_str(),
                        _ => return Err(NotationError::UnnamedLeaf(format!("{key:?}"))),
                    },
                };
                out.push('(');
                out.push_str(ident);
                out.push(')');
            }
            Ok(())
        }
        leaf => {
            let ident = table
                .ident_for(leaf)
                .ok_or_else(|| NotationError::UnnamedLeaf(format!("{leaf:?}")))?;
            out.push_str(ident);
            Ok(())
        }
    }
}

/// Parses the sidecar symbol-table format.
pub fn parse_symbol_table(input: &str) -> Result<SymbolTable, NotationError> {
    let mut table = SymbolTable::new();
    for (lineno, raw) in input.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (ident, rest) = line.split_once('=').ok_or_else(|| {
            syntax(lineno + 1, format!("expected `ident = kind ...`, got `{line}`"))
        })?;
        let ident = ident.trim();
        let term = parse_leaf_spec(ident, rest.trim())
            .map_err(|e| rewrap_line_error(e, lineno + 1))?;
        table.insert(ident, term)?;
    }
    Ok(table)
}

fn rewrap_line_error(err: NotationError, line: usize) -> NotationError {
    match err {
        NotationError::Syntax { message, .. } => syntax(line, message),
        other => other,
    }
}

fn strip_comment(line: &str) -> &str {
    // `#` starts a comment unless inside quotes
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses `kind args...` into a leaf term. Used by both the sidecar format
/// and the protocol fixture symbol sections.
pub(crate) fn parse_leaf_spec(ident: &str, spec: &str) -> Result<Term, NotationError> {
    let args = split_args(spec)?;
    if args.is_empty() {
        return Err(syntax(0, "missing kind"));
    }
    let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let kind = args[0];
    let rest = &args[1..];
    let wrong_arity = |expected: &str| {
        syntax(
            0,
            format!("`{kind}` expects {expected}, got {} args", rest.len()),
        )
    };
    let term = match kind {
        "plain-name" => match rest {
            [] => Term::plain_name(ident),
            [value] => Term::plain_name(*value),
            _ => return Err(wrong_arity("at most one value")),
        },
        "user-domain" => match rest {
            [user, domain] => Term::Name(NameKind::UserDomain {
                user: (*user).to_string(),
                domain: (*domain).to_string(),
            }),
            _ => return Err(wrong_arity("user and domain")),
        },
        "ipv4" => match rest {
            [addr] => Term::Name(NameKind::IpV4 {
                address: (*addr).to_string(),
            }),
            _ => return Err(wrong_arity("an address")),
        },
        "ipv6" => match rest {
            [addr] => Term::Name(NameKind::IpV6 {
                address: (*addr).to_string(),
            }),
            _ => return Err(wrong_arity("an address")),
        },
        "domain" => match rest {
            [domain] => Term::Name(NameKind::Domain {
                domain: (*domain).to_string(),
            }),
            _ => return Err(wrong_arity("a domain")),
        },
        "dn" => match rest {
            [org, ou, cn, country] => {
                Term::Name(NameKind::distinguished(*org, *ou, *cn, *country)?)
            }
            _ => return Err(wrong_arity("organization, unit, common name, country")),
        },
        "nonce" => match rest {
            ["hex", value] | [value] if !value.is_empty() => {
                let bytes = hex::decode(value)
                    .map_err(|e| syntax(0, format!("bad nonce hex: {e}")))?;
                Term::Nonce(Nonce::random(bytes)?)
            }
            _ => return Err(wrong_arity("hex octets")),
        },
        "timestamp" => match rest {
            [value] => {
                let instant = DateTime::parse_from_rfc3339(value)
                    .map_err(|e| syntax(0, format!("bad timestamp: {e}")))?
                    .with_timezone(&Utc);
                Term::Nonce(Nonce::timestamp(instant))
            }
            _ => return Err(wrong_arity("an ISO-8601 instant")),
        },
        "key" => match rest {
            ["hex", value] => {
                let bytes = hex::decode(value)
                    .map_err(|e| syntax(0, format!("bad key hex: {e}")))?;
                Term::Key(KeyMaterial::new(bytes, KeyEncoding::HexBinary, ident)?)
            }
            ["b64", value] => {
                let bytes = BASE64
                    .decode(value)
                    .map_err(|e| syntax(0, format!("bad key base64: {e}")))?;
                Term::Key(KeyMaterial::new(bytes, KeyEncoding::Base64Binary, ident)?)
            }
            _ => return Err(wrong_arity("`hex HEX` or `b64 B64`")),
        },
        "data" => match rest {
            ["hex", value, media] => {
                let bytes = hex::decode(value)
                    .map_err(|e| syntax(0, format!("bad data hex: {e}")))?;
                Term::Data(UserData::new(bytes, *media)?)
            }
            ["empty", media] => Term::Data(UserData::empty(*media)),
            [text, media] => Term::Data(UserData::text(*text, *media)?),
            _ => return Err(wrong_arity("`hex HEX media`, `empty media` or `text media`")),
        },
        other => return Err(syntax(0, format!("unknown kind `{other}`"))),
    };
    Ok(term)
}

fn split_args(input: &str) -> Result<Vec<String>, NotationError> {
    let mut args = Vec::new();
    let mut chars = input.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut arg = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(esc @ ('"' | '\\')) => arg.push(esc),
                        _ => return Err(syntax(0, "bad escape in quoted argument")),
                    },
                    Some(other) => arg.push(other),
                    None => return Err(syntax(0, "unterminated quoted argument")),
                }
            }
            args.push(arg);
        } else {
            let mut arg = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                arg.push(c);
                chars.next();
            }
            args.push(arg);
        }
    }
    Ok(args)
}
