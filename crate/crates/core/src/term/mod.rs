//! Algebraic message terms.
//!
//! Protocol messages are finite trees over six leaf and node forms: names,
//! nonces, keys, user data, pairs and encryptions. Pairing is binary and
//! the comma notation desugars left-associatively, so `A,B,C` is
//! `Pair(Pair(A,B),C)`. Encryption nodes are symbolic: no cryptography
//! happens here.

mod notation;

pub use notation::{
    parse_symbol_table, parse_term, print_term, NotationError, SymbolTable,
};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use thiserror::Error;

/// Minimum number of octets in a random nonce.
pub const MIN_NONCE_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("encryption with {0} requires a key argument")]
    MissingKeyArg(FuncName),
    #[error("hash terms take no key argument")]
    UnexpectedKeyArg,
    #[error("random nonce must carry at least {MIN_NONCE_LEN} octets, got {0}")]
    NonceTooShort(usize),
    #[error("key material must be non-empty")]
    EmptyKey,
    #[error("user data content is empty but not flagged as an empty payload")]
    EmptyData,
    #[error("distinguished name field `{0}` is empty")]
    EmptyNameField(&'static str),
    #[error("key argument must be a key term or a name, got {0}")]
    BadKeyArg(&'static str),
}

/// The six disjoint participant-name subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameKind {
    Distinguished {
        organization: String,
        organizational_unit: String,
        common_name: String,
        country: String,
    },
    UserDomain {
        user: String,
        domain: String,
    },
    IpV4 {
        address: String,
    },
    IpV6 {
        address: String,
    },
    Domain {
        domain: String,
    },
    Plain {
        name: String,
    },
}

impl NameKind {
    pub fn distinguished(
        organization: impl Into<String>,
        organizational_unit: impl Into<String>,
        common_name: impl Into<String>,
        country: impl Into<String>,
    ) -> Result<Self, TermError> {
        let name = NameKind::Distinguished {
            organization: organization.into(),
            organizational_unit: organizational_unit.into(),
            common_name: common_name.into(),
            country: country.into(),
        };
        name.validate()?;
        Ok(name)
    }

    pub fn validate(&self) -> Result<(), TermError> {
        if let NameKind::Distinguished {
            organization,
            organizational_unit,
            common_name,
            country,
        } = self
        {
            for (field, value) in [
                ("organization", organization),
                ("organizational_unit", organizational_unit),
                ("common_name", common_name),
                ("country", country),
            ] {
                if value.is_empty() {
                    return Err(TermError::EmptyNameField(field));
                }
            }
        }
        Ok(())
    }
}

/// Fresh values: random octets or a millisecond-precision UTC timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Nonce {
    Random { bytes: Vec<u8> },
    Timestamp { instant: DateTime<Utc> },
}

impl Nonce {
    pub fn random(bytes: Vec<u8>) -> Result<Self, TermError> {
        if bytes.len() < MIN_NONCE_LEN {
            return Err(TermError::NonceTooShort(bytes.len()));
        }
        Ok(Nonce::Random { bytes })
    }

    /// Timestamps are truncated to millisecond precision so the XML form
    /// captures the value exactly.
    pub fn timestamp(instant: DateTime<Utc>) -> Self {
        let millis = instant.timestamp_millis();
        Nonce::Timestamp {
            instant: Utc.timestamp_millis_opt(millis).unwrap(),
        }
    }

    pub fn timestamp_now() -> Self {
        Nonce::timestamp(Utc::now())
    }

    pub fn validate(&self) -> Result<(), TermError> {
        match self {
            Nonce::Random { bytes } if bytes.len() < MIN_NONCE_LEN => {
                Err(TermError::NonceTooShort(bytes.len()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_iso8601(instant: &DateTime<Utc>) -> String {
        instant.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyEncoding {
    Base64Binary,
    HexBinary,
}

impl KeyEncoding {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeyEncoding::Base64Binary => "base64Binary",
            KeyEncoding::HexBinary => "hexBinary",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "base64Binary" => Some(KeyEncoding::Base64Binary),
            "hexBinary" => Some(KeyEncoding::HexBinary),
            _ => None,
        }
    }
}

/// Key bytes plus the encoding used when they travel inside a KeyToken.
/// The label is the protocol-local identifier (`Kab`, `PKa`, ...); it never
/// travels on the wire and is excluded from equality.
#[derive(Debug, Clone, Eq)]
pub struct KeyMaterial {
    pub bytes: Vec<u8>,
    pub encoding_hint: KeyEncoding,
    pub label: String,
}

impl PartialEq for KeyMaterial {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes && self.encoding_hint == other.encoding_hint
    }
}

impl KeyMaterial {
    pub fn new(
        bytes: Vec<u8>,
        encoding_hint: KeyEncoding,
        label: impl Into<String>,
    ) -> Result<Self, TermError> {
        if bytes.is_empty() {
            return Err(TermError::EmptyKey);
        }
        Ok(KeyMaterial {
            bytes,
            encoding_hint,
            label: label.into(),
        })
    }

    pub fn validate(&self) -> Result<(), TermError> {
        if self.bytes.is_empty() {
            return Err(TermError::EmptyKey);
        }
        Ok(())
    }
}

/// User-defined payload. Content may be empty only when constructed through
/// [`UserData::empty`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserData {
    content: Vec<u8>,
    media_label: String,
}

impl UserData {
    pub fn new(content: Vec<u8>, media_label: impl Into<String>) -> Result<Self, TermError> {
        if content.is_empty() {
            return Err(TermError::EmptyData);
        }
        Ok(UserData {
            content,
            media_label: media_label.into(),
        })
    }

    /// Explicitly empty payload.
    pub fn empty(media_label: impl Into<String>) -> Self {
        UserData {
            content: Vec::new(),
            media_label: media_label.into(),
        }
    }

    pub fn text(content: impl Into<String>, media_label: impl Into<String>) -> Result<Self, TermError> {
        UserData::new(content.into().into_bytes(), media_label)
    }

    pub fn content(&self) -> &[u8] {
        &self.content
    }

    pub fn media_label(&self) -> &str {
        &self.media_label
    }
}

/// The four encryption-function classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FuncName {
    Sk,
    Pk,
    H,
    Hmac,
}

impl FuncName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FuncName::Sk => "sk",
            FuncName::Pk => "pk",
            FuncName::H => "h",
            FuncName::Hmac => "hmac",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "sk" => Some(FuncName::Sk),
            "pk" => Some(FuncName::Pk),
            "h" => Some(FuncName::H),
            "hmac" => Some(FuncName::Hmac),
            _ => None,
        }
    }

    /// Whether this function takes a key argument.
    pub fn takes_key(&self) -> bool {
        !matches!(self, FuncName::H)
    }
}

impl std::fmt::Display for FuncName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Name(NameKind),
    Nonce(Nonce),
    Key(KeyMaterial),
    Data(UserData),
    Pair(Box<Term>, Box<Term>),
    Enc {
        payload: Box<Term>,
        func: FuncName,
        key_arg: Option<Box<Term>>,
    },
}

/// Returns a pair node; no normalization is performed.
pub fn pair(left: Term, right: Term) -> Term {
    Term::Pair(Box::new(left), Box::new(right))
}

/// Left-nests a component sequence: `[a,b,c]` becomes `Pair(Pair(a,b),c)`.
pub fn pair_seq(items: Vec<Term>) -> Option<Term> {
    let mut iter = items.into_iter();
    let first = iter.next()?;
    Some(iter.fold(first, pair))
}

/// Returns a symbolic encryption node. `key_arg` must be present exactly
/// when `func` takes a key, and must be a key term or a name.
pub fn encrypt_term(
    payload: Term,
    func: FuncName,
    key_arg: Option<Term>,
) -> Result<Term, TermError> {
    match (&func, &key_arg) {
        (FuncName::H, Some(_)) => return Err(TermError::UnexpectedKeyArg),
        (FuncName::H, None) => {}
        (f, None) => return Err(TermError::MissingKeyArg(*f)),
        (_, Some(k)) => match k {
            Term::Key(_) | Term::Name(_) => {}
            Term::Nonce(_) => return Err(TermError::BadKeyArg("nonce")),
            Term::Data(_) => return Err(TermError::BadKeyArg("data")),
            Term::Pair(_, _) => return Err(TermError::BadKeyArg("pair")),
            Term::Enc { .. } => return Err(TermError::BadKeyArg("encryption")),
        },
    }
    Ok(Term::Enc {
        payload: Box::new(payload),
        func,
        key_arg: key_arg.map(Box::new),
    })
}

/// Structural equality. `PartialEq` already compares in this way; the free
/// function mirrors the operation vocabulary used elsewhere.
pub fn term_equal(a: &Term, b: &Term) -> bool {
    a == b
}

/// Node count of the term tree.
pub fn term_size(t: &Term) -> usize {
    match t {
        Term::Name(_) | Term::Nonce(_) | Term::Key(_) | Term::Data(_) => 1,
        Term::Pair(l, r) => 1 + term_size(l) + term_size(r),
        Term::Enc {
            payload, key_arg, ..
        } => 1 + term_size(payload) + key_arg.as_deref().map_or(0, term_size),
    }
}

/// Height of the term tree; a leaf has depth 1.
pub fn term_depth(t: &Term) -> usize {
    match t {
        Term::Name(_) | Term::Nonce(_) | Term::Key(_) | Term::Data(_) => 1,
        Term::Pair(l, r) => 1 + term_depth(l).max(term_depth(r)),
        Term::Enc {
            payload, key_arg, ..
        } => 1 + term_depth(payload).max(key_arg.as_deref().map_or(0, term_depth)),
    }
}

impl Term {
    pub fn name(kind: NameKind) -> Term {
        Term::Name(kind)
    }

    pub fn plain_name(name: impl Into<String>) -> Term {
        Term::Name(NameKind::Plain { name: name.into() })
    }

    pub fn is_leaf(&self) -> bool {
        matches!(
            self,
            Term::Name(_) | Term::Nonce(_) | Term::Key(_) | Term::Data(_)
        )
    }

    /// Recursively checks every construction invariant.
    pub fn validate(&self) -> Result<(), TermError> {
        match self {
            Term::Name(n) => n.validate(),
            Term::Nonce(n) => n.validate(),
            Term::Key(k) => k.validate(),
            Term::Data(_) => Ok(()),
            Term::Pair(l, r) => {
                l.validate()?;
                r.validate()
            }
            Term::Enc {
                payload,
                func,
                key_arg,
            } => {
                match (func, key_arg) {
                    (FuncName::H, Some(_)) => return Err(TermError::UnexpectedKeyArg),
                    (FuncName::H, None) => {}
                    (f, None) => return Err(TermError::MissingKeyArg(*f)),
                    (_, Some(k)) => {
                        if !matches!(k.as_ref(), Term::Key(_) | Term::Name(_)) {
                            return Err(TermError::BadKeyArg("non-key"));
                        }
                        k.validate()?;
                    }
                }
                payload.validate()
            }
        }
    }

    /// In-order left-to-right sequence of top-level components: the left
    /// spine of pairs, flattened.
    pub fn components(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        fn walk<'t>(t: &'t Term, out: &mut Vec<&'t Term>) {
            match t {
                Term::Pair(l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(n: &str) -> Term {
        Term::plain_name(n)
    }

    fn key(label: &str) -> Term {
        Term::Key(KeyMaterial::new(vec![1; 16], KeyEncoding::HexBinary, label).unwrap())
    }

    fn nonce() -> Term {
        Term::Nonce(Nonce::random(vec![7; 12]).unwrap())
    }

    #[test]
    fn pair_builds_left_nested_sequences() {
        let t = pair(pair(name("A"), name("B")), nonce());
        match &t {
            Term::Pair(l, _) => assert!(matches!(l.as_ref(), Term::Pair(_, _))),
            _ => panic!("expected pair"),
        }
        assert_eq!(t.components().len(), 3);
    }

    #[test]
    fn pair_of_equal_terms_keeps_both_children() {
        let t = pair(name("A"), name("A"));
        match t {
            Term::Pair(l, r) => assert_eq!(l, r),
            _ => panic!("expected pair"),
        }
    }

    #[test]
    fn encrypt_requires_key_for_sk_pk_hmac() {
        for f in [FuncName::Sk, FuncName::Pk, FuncName::Hmac] {
            assert_eq!(
                encrypt_term(name("A"), f, None),
                Err(TermError::MissingKeyArg(f))
            );
        }
        assert!(encrypt_term(name("A"), FuncName::Sk, Some(key("K"))).is_ok());
    }

    #[test]
    fn hash_takes_no_key() {
        assert_eq!(
            encrypt_term(name("A"), FuncName::H, Some(key("K"))),
            Err(TermError::UnexpectedKeyArg)
        );
        assert!(encrypt_term(name("A"), FuncName::H, None).is_ok());
    }

    #[test]
    fn key_arg_must_be_key_or_name() {
        assert!(encrypt_term(name("A"), FuncName::Sk, Some(nonce())).is_err());
        assert!(encrypt_term(name("A"), FuncName::Sk, Some(name("B"))).is_ok());
    }

    #[test]
    fn equality_is_structural_and_ordered() {
        let a = name("A");
        let b = name("B");
        assert!(term_equal(&a, &a.clone()));
        assert_ne!(pair(a.clone(), b.clone()), pair(b, a));
        // pairing is not associative
        let (x, y, z) = (name("x"), name("y"), name("z"));
        assert_ne!(
            pair(pair(x.clone(), y.clone()), z.clone()),
            pair(x, pair(y, z))
        );
    }

    #[test]
    fn random_nonces_compare_octet_wise() {
        let n1 = Term::Nonce(Nonce::random(vec![1; 8]).unwrap());
        let n2 = Term::Nonce(Nonce::random(vec![2; 8]).unwrap());
        assert!(!term_equal(&n1, &n2));
    }

    #[test]
    fn nonce_entropy_floor() {
        assert_eq!(
            Nonce::random(vec![0; 7]).unwrap_err(),
            TermError::NonceTooShort(7)
        );
        assert!(Nonce::random(vec![0; 8]).is_ok());
    }

    #[test]
    fn sizes_count_nodes() {
        assert_eq!(term_size(&name("A")), 1);
        assert_eq!(term_size(&pair(name("A"), name("B"))), 3);
        // {A,B}sk(Kab): enc + pair + two names + key argument
        let t = encrypt_term(
            pair(name("A"), name("B")),
            FuncName::Sk,
            Some(key("Kab")),
        )
        .unwrap();
        assert_eq!(term_size(&t), 5);
    }

    #[test]
    fn size_is_monotone_under_pairing() {
        let a = pair(name("A"), nonce());
        let b = key("K");
        assert_eq!(
            term_size(&pair(a.clone(), b.clone())),
            term_size(&a) + term_size(&b) + 1
        );
    }

    #[test]
    fn empty_data_needs_explicit_flag() {
        assert_eq!(
            UserData::new(Vec::new(), "text/plain").unwrap_err(),
            TermError::EmptyData
        );
        assert!(UserData::empty("text/plain").content().is_empty());
    }

    #[test]
    fn timestamps_truncate_to_millis() {
        let now = Utc::now();
        if let Nonce::Timestamp { instant } = Nonce::timestamp(now) {
            assert_eq!(instant.timestamp_subsec_nanos() % 1_000_000, 0);
            assert_eq!(instant.timestamp_millis(), now.timestamp_millis());
        } else {
            panic!("expected timestamp");
        }
    }
}
