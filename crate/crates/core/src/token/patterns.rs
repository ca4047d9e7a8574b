//! The schema validation patterns, reproduced byte-identically from the
//! shipped XSDs, plus an optional strict mode with RFC-grade parsing.
//!
//! The patterns are applied with full-string anchoring (XML Schema `pattern`
//! facets anchor implicitly), so a substring match is not acceptance. Their
//! known laxities are reproduced on purpose: the IPv4 pattern accepts any
//! run of one to three digits per octet, the IPv6 pattern has no `::`
//! compression, and the user-domain pattern accepts nearly any dotted word
//! sequence.

use regex::Regex;
use std::sync::OnceLock;

/// Name kinds that carry a validation pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    UserDomain,
    IpV4,
    IpV6,
    Domain,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] = [
        PatternKind::UserDomain,
        PatternKind::IpV4,
        PatternKind::IpV6,
        PatternKind::Domain,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PatternKind::UserDomain => "user-domain",
            PatternKind::IpV4 => "ipv4",
            PatternKind::IpV6 => "ipv6",
            PatternKind::Domain => "domain",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "user-domain" => Some(PatternKind::UserDomain),
            "ipv4" => Some(PatternKind::IpV4),
            "ipv6" => Some(PatternKind::IpV6),
            "domain" => Some(PatternKind::Domain),
            _ => None,
        }
    }
}

/// One schema pattern as it appears in the XSD.
#[derive(Debug, Clone, Copy)]
pub struct ValidationPattern {
    pub kind: PatternKind,
    pub pattern: &'static str,
}

pub const PATTERNS: [ValidationPattern; 4] = [
    ValidationPattern {
        kind: PatternKind::UserDomain,
        pattern: r"(\w+\.|\w+)+",
    },
    ValidationPattern {
        kind: PatternKind::IpV4,
        pattern: r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}",
    },
    ValidationPattern {
        kind: PatternKind::IpV6,
        pattern: r"([0-9a-fA-F]{1,4}:){7}[0-9a-fA-F]{1,4}",
    },
    ValidationPattern {
        kind: PatternKind::Domain,
        pattern: r"(\w+\.\w+)+",
    },
];

pub fn pattern_for(kind: PatternKind) -> &'static ValidationPattern {
    PATTERNS.iter().find(|p| p.kind == kind).unwrap()
}

fn compiled(kind: PatternKind) -> &'static Regex {
    static CACHE: OnceLock<Vec<(PatternKind, Regex)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        PATTERNS
            .iter()
            .map(|p| {
                let anchored = format!("^(?:{})$", p.pattern);
                (p.kind, Regex::new(&anchored).expect("patterns compile"))
            })
            .collect()
    });
    &cache.iter().find(|(k, _)| *k == kind).unwrap().1
}

/// Validation behaviour: the schema patterns as written, or RFC-grade rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ValidationMode {
    #[default]
    PaperFaithful,
    Strict,
}

/// Full-string validation of a name value for the given kind.
pub fn validate_name(kind: PatternKind, value: &str) -> bool {
    validate_name_mode(kind, value, ValidationMode::PaperFaithful)
}

pub fn validate_name_mode(kind: PatternKind, value: &str, mode: ValidationMode) -> bool {
    match mode {
        ValidationMode::PaperFaithful => compiled(kind).is_match(value),
        ValidationMode::Strict => strict_validate(kind, value),
    }
}

fn strict_validate(kind: PatternKind, value: &str) -> bool {
    match kind {
        PatternKind::IpV4 => value.parse::<std::net::Ipv4Addr>().is_ok(),
        PatternKind::IpV6 => value.parse::<std::net::Ipv6Addr>().is_ok(),
        PatternKind::Domain => strict_domain(value),
        // user@host.domain or user.host.domain
        PatternKind::UserDomain => match value.split_once(['@', '.']) {
            Some((user, domain)) => {
                !user.is_empty()
                    && user
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-'))
                    && strict_domain(domain)
            }
            None => false,
        },
    }
}

fn strict_domain(value: &str) -> bool {
    if value.len() > 253 || !value.contains('.') {
        return false;
    }
    value.split('.').all(|label| {
        !label.is_empty()
            && label.len() <= 63
            && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
            && !label.starts_with('-')
            && !label.ends_with('-')
    })
}
