//! SOAP envelopes: security tokens in the header, user data in the body.
//!
//! A message term flattens to an ordered component list. Name, nonce and
//! key leaves become tokens in the `wsse:Security` header block; data
//! leaves become body payloads; encryption nodes become blocks in whichever
//! section their (placement-homogeneous) payload belongs to. A small
//! `ComponentOrder` header element records the original interleaving so
//! parsing restores component order exactly, modulo pair left-renesting.
//!
//! Block forms follow what each function class actually provides:
//!
//! * `sk` and `pk`-encryption blocks carry ciphertext over the canonical
//!   XML of the inner token sequence.
//! * `pk` with a signing key, `h` and `hmac` provide integrity, not
//!   confidentiality: their blocks carry the inner sequence in clear plus
//!   a signature, digest or tag over its canonical bytes.
//!
//! Whether a `pk` node encrypts or signs is decided by the resolution
//! context: a label owning the private half signs, a public-only label
//! encrypts to that peer.

use crate::crypto::{CryptoError, CryptoProvider, KeyPair};
use crate::term::{
    pair_seq, FuncName, KeyEncoding, KeyMaterial, NameKind, Term, TermError, UserData,
};
use crate::token::{decode_token, encode_token, ns, TokenElement, TokenError};
use crate::xml::{parse_element, Element, XmlError};
use std::collections::HashMap;
use thiserror::Error;
use uuid::Uuid;
use zeroize::Zeroizing;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("no key material for label `{0}`")]
    UnresolvedKey(String),
    #[error("encrypted payload mixes user data with tokens")]
    MixedPlacement,
    #[error("decryption failed: {0}")]
    DecryptFailure(String),
    #[error("manifest mismatch: expected [{expected}], got [{got}]")]
    ManifestMismatch { expected: String, got: String },
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("signature verification failed")]
    SignatureInvalid,
    #[error("digest mismatch on hashed block")]
    DigestMismatch,
    #[error("tag mismatch on keyed-hash block")]
    MacInvalid,
    #[error("unsupported key reference `{0}`")]
    BadKeyReference(String),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error(transparent)]
    Term(#[from] TermError),
}

/// Asymmetric identity: public half always, private half when owned.
#[derive(Debug, Clone)]
pub struct AsymEntry {
    pub public_der: Vec<u8>,
    pub private_der: Option<Zeroizing<Vec<u8>>>,
}

/// Label-indexed key material for building and parsing envelopes.
#[derive(Debug, Clone, Default)]
pub struct KeyStore {
    sym: HashMap<String, KeyMaterial>,
    asym: HashMap<String, AsymEntry>,
    dh: HashMap<String, KeyPair>,
}

impl KeyStore {
    pub fn new() -> Self {
        KeyStore::default()
    }

    pub fn insert_sym(&mut self, key: KeyMaterial) {
        self.sym.insert(key.label.clone(), key);
    }

    pub fn insert_asym_pair(&mut self, label: impl Into<String>, pair: &KeyPair) {
        self.asym.insert(
            label.into(),
            AsymEntry {
                public_der: pair.public_part.clone(),
                private_der: Some(pair.private_part.clone()),
            },
        );
    }

    pub fn insert_asym_public(&mut self, label: impl Into<String>, public_der: Vec<u8>) {
        self.asym.insert(
            label.into(),
            AsymEntry {
                public_der,
                private_der: None,
            },
        );
    }

    pub fn insert_dh_pair(&mut self, label: impl Into<String>, pair: KeyPair) {
        self.dh.insert(label.into(), pair);
    }

    pub fn sym(&self, label: &str) -> Option<&KeyMaterial> {
        self.sym.get(label)
    }

    pub fn asym(&self, label: &str) -> Option<&AsymEntry> {
        self.asym.get(label)
    }

    pub fn dh(&self, label: &str) -> Option<&KeyPair> {
        self.dh.get(label)
    }

    pub fn sym_labels(&self) -> impl Iterator<Item = &str> {
        self.sym.keys().map(|s| s.as_str())
    }
}

/// Key resolution plus the crypto provider: everything envelope building
/// and parsing needs besides the term itself.
#[derive(Debug, Clone, Default)]
pub struct SecurityContext {
    pub provider: CryptoProvider,
    pub keys: KeyStore,
}

impl SecurityContext {
    pub fn new(provider: CryptoProvider) -> Self {
        SecurityContext {
            provider,
            keys: KeyStore::new(),
        }
    }
}

/// How a block uses its function class on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    /// `sk` or `pk` encryption: content travels as ciphertext.
    Cipher,
    /// `pk` with a signing key: content in clear plus a signature.
    Signature,
    /// `h`: content in clear plus a digest.
    Digest,
    /// `hmac`: content in clear plus a keyed tag.
    Tag,
}

/// One protected block: an encryption, signature, digest or tag over an
/// inner component sequence. `proof` holds the ciphertext for cipher
/// blocks and the signature/digest/tag otherwise.
#[derive(Debug, Clone)]
pub struct EncryptedBlock {
    pub func: FuncName,
    pub mode: BlockMode,
    pub algorithm_id: String,
    pub key_ref: String,
    pub key_ref_is_name: bool,
    pub inner_manifest: Vec<String>,
    pub proof: Vec<u8>,
    /// Inner items, available without keys on clear-carry modes.
    pub clear_items: Option<Vec<EnvItem>>,
    /// Wire element, kept verbatim so unreadable blocks can be re-sent.
    pub raw: Element,
    /// True for blocks that live in the body (data payloads).
    pub in_body: bool,
}

/// One envelope component: a token, a data payload or a protected block.
#[derive(Debug, Clone)]
pub enum EnvItem {
    Token(TokenElement),
    Data(UserData),
    Block(EncryptedBlock),
}

/// A SOAP message: ordered security-header items, ordered body parts and
/// the interleaving that produced them.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub message_id: String,
    pub header_tokens: Vec<EnvItem>,
    pub body_parts: Vec<EnvItem>,
    /// Top-level component order: `t` for a header item, `d` for a body part.
    pub order: String,
}

const WIRE_ENC_BLOCK: &str = "EncryptedBlock";
const WIRE_SIGNED_BLOCK: &str = "SignedBlock";
const WIRE_HASHED_BLOCK: &str = "HashedBlock";
const WIRE_MAC_BLOCK: &str = "MacBlock";
const WIRE_PAYLOAD: &str = "Payload";
const WIRE_ENC_PAYLOAD: &str = "EncryptedPayload";
const WIRE_SIGNED_PAYLOAD: &str = "SignedPayload";
const WIRE_HASHED_PAYLOAD: &str = "HashedPayload";
const WIRE_MAC_PAYLOAD: &str = "MacPayload";

fn is_block_name(name: &str) -> bool {
    matches!(
        name,
        WIRE_ENC_BLOCK
            | WIRE_SIGNED_BLOCK
            | WIRE_HASHED_BLOCK
            | WIRE_MAC_BLOCK
            | WIRE_ENC_PAYLOAD
            | WIRE_SIGNED_PAYLOAD
            | WIRE_HASHED_PAYLOAD
            | WIRE_MAC_PAYLOAD
    )
}

/// Component passed to the low-level builder: a term or a pre-built block
/// element spliced verbatim (opaque forwarding).
#[derive(Debug, Clone)]
pub enum BuildComponent {
    Term(Term),
    RawBlock(Element),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placement {
    Header,
    Body,
}

fn placement_of(term: &Term) -> Result<Placement, EnvelopeError> {
    fn class(term: &Term, found: &mut Option<Placement>) -> Result<(), EnvelopeError> {
        match term {
            Term::Data(_) => assign(found, Placement::Body),
            Term::Name(_) | Term::Nonce(_) | Term::Key(_) => assign(found, Placement::Header),
            Term::Pair(l, r) => {
                class(l, found)?;
                class(r, found)
            }
            Term::Enc { payload, .. } => class(payload, found),
        }
    }
    fn assign(found: &mut Option<Placement>, p: Placement) -> Result<(), EnvelopeError> {
        match found {
            None => {
                *found = Some(p);
                Ok(())
            }
            Some(existing) if *existing == p => Ok(()),
            Some(_) => Err(EnvelopeError::MixedPlacement),
        }
    }
    let mut found = None;
    class(term, &mut found)?;
    Ok(found.expect("terms have at least one leaf"))
}

fn key_ref_of(key_arg: &Term) -> Result<(String, bool), EnvelopeError> {
    match key_arg {
        Term::Key(material) => Ok((material.label.clone(), false)),
        Term::Name(NameKind::Plain { name }) => Ok((name.clone(), true)),
        Term::Name(other) => Err(EnvelopeError::BadKeyReference(format!(
            "only plain names may reference keys, got {other:?}"
        ))),
        other => Err(EnvelopeError::BadKeyReference(format!("{other:?}"))),
    }
}

/// Builds the envelope for a term: flatten, place, tokenize, protect.
pub fn build_envelope(term: &Term, ctx: &SecurityContext) -> Result<Envelope, EnvelopeError> {
    let components = term
        .components()
        .into_iter()
        .map(|t| BuildComponent::Term(t.clone()))
        .collect();
    build_envelope_from_components(components, ctx)
}

/// Low-level builder used by the protocol engine; opaque blocks received
/// from other roles splice in verbatim.
pub fn build_envelope_from_components(
    components: Vec<BuildComponent>,
    ctx: &SecurityContext,
) -> Result<Envelope, EnvelopeError> {
    let mut header = Vec::new();
    let mut body = Vec::new();
    let mut order = String::new();
    for component in components {
        match component {
            BuildComponent::RawBlock(el) => {
                let block = parse_block(&el, false)?;
                order.push(if block.in_body { 'd' } else { 't' });
                if block.in_body {
                    body.push(EnvItem::Block(block));
                } else {
                    header.push(EnvItem::Block(block));
                }
            }
            BuildComponent::Term(term) => match &term {
                Term::Data(data) => {
                    order.push('d');
                    body.push(EnvItem::Data(data.clone()));
                }
                Term::Name(_) | Term::Nonce(_) | Term::Key(_) => {
                    order.push('t');
                    header.push(EnvItem::Token(encode_token(&term)?));
                }
                Term::Enc { .. } => {
                    let block = build_block(&term, ctx)?;
                    order.push(if block.in_body { 'd' } else { 't' });
                    if block.in_body {
                        body.push(EnvItem::Block(block));
                    } else {
                        header.push(EnvItem::Block(block));
                    }
                }
                Term::Pair(_, _) => unreachable!("components are flattened"),
            },
        }
    }
    Ok(Envelope {
        message_id: Uuid::new_v4().to_string(),
        header_tokens: header,
        body_parts: body,
        order,
    })
}

fn build_inner_items(
    payload: &Term,
    ctx: &SecurityContext,
    in_body: bool,
) -> Result<(Vec<Element>, Vec<String>), EnvelopeError> {
    let mut elements = Vec::new();
    let mut manifest = Vec::new();
    for component in payload.components() {
        match component {
            Term::Data(data) => {
                let el = data_element(data);
                manifest.push(el.name.clone());
                elements.push(el);
            }
            Term::Name(_) | Term::Nonce(_) | Term::Key(_) => {
                let token = encode_token(component)?;
                let el = token.element();
                manifest.push(el.name.clone());
                elements.push(el);
            }
            Term::Enc { .. } => {
                let block = build_block(component, ctx)?;
                debug_assert_eq!(block.in_body, in_body, "placement is homogeneous");
                manifest.push(block.raw.name.clone());
                elements.push(block.raw.clone());
            }
            Term::Pair(_, _) => unreachable!("components are flattened"),
        }
    }
    Ok((elements, manifest))
}

fn content_bytes(elements: &[Element], in_body: bool) -> Vec<u8> {
    let wrapper = if in_body { "Payloads" } else { "Tokens" };
    let mut el = Element::new(wrapper);
    for child in elements {
        el = el.child(child.clone());
    }
    el.to_canonical_bytes()
}

fn build_block(term: &Term, ctx: &SecurityContext) -> Result<EncryptedBlock, EnvelopeError> {
    let Term::Enc {
        payload,
        func,
        key_arg,
    } = term
    else {
        unreachable!("callers pass encryption nodes");
    };
    let in_body = placement_of(payload)? == Placement::Body;
    let (inner_elements, manifest) = build_inner_items(payload, ctx, in_body)?;
    let plaintext = content_bytes(&inner_elements, in_body);

    let (mode, algorithm_id, key_ref, key_ref_is_name, proof) = match func {
        FuncName::Sk => {
            let (label, is_name) = key_ref_of(key_arg.as_deref().expect("validated"))?;
            let key = ctx
                .keys
                .sym(&label)
                .ok_or_else(|| EnvelopeError::UnresolvedKey(label.clone()))?;
            let ct = ctx.provider.sk_encrypt(key, &plaintext)?;
            (
                BlockMode::Cipher,
                ctx.provider.suite().sk_algorithm.clone(),
                label,
                is_name,
                ct,
            )
        }
        FuncName::Pk => {
            let (label, is_name) = key_ref_of(key_arg.as_deref().expect("validated"))?;
            let entry = ctx
                .keys
                .asym(&label)
                .ok_or_else(|| EnvelopeError::UnresolvedKey(label.clone()))?;
            match &entry.private_der {
                Some(private) => {
                    let sig = ctx.provider.sign(private, &plaintext)?;
                    (
                        BlockMode::Signature,
                        ctx.provider.suite().signature_algorithm.clone(),
                        label,
                        is_name,
                        sig,
                    )
                }
                None => {
                    let ct = ctx.provider.pk_encrypt(&entry.public_der, &plaintext)?;
                    (
                        BlockMode::Cipher,
                        ctx.provider.suite().pk_algorithm.clone(),
                        label,
                        is_name,
                        ct,
                    )
                }
            }
        }
        FuncName::H => {
            let digest = ctx.provider.hash(&plaintext);
            (
                BlockMode::Digest,
                ctx.provider.suite().hash_algorithm.clone(),
                String::new(),
                false,
                digest,
            )
        }
        FuncName::Hmac => {
            let (label, is_name) = key_ref_of(key_arg.as_deref().expect("validated"))?;
            let key = ctx
                .keys
                .sym(&label)
                .ok_or_else(|| EnvelopeError::UnresolvedKey(label.clone()))?;
            let tag = ctx.provider.hmac_tag(&key.bytes, &plaintext);
            (
                BlockMode::Tag,
                ctx.provider.suite().hmac_algorithm.clone(),
                label,
                is_name,
                tag,
            )
        }
    };

    let raw = block_element(
        *func,
        mode,
        &algorithm_id,
        &key_ref,
        key_ref_is_name,
        &manifest,
        &proof,
        &inner_elements,
        in_body,
    );
    let clear_items = if mode == BlockMode::Cipher {
        None
    } else {
        Some(parse_inner_items(&inner_elements)?)
    };
    Ok(EncryptedBlock {
        func: *func,
        mode,
        algorithm_id,
        key_ref,
        key_ref_is_name,
        inner_manifest: manifest,
        proof,
        clear_items,
        raw,
        in_body,
    })
}

fn data_element(data: &UserData) -> Element {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;
    Element::with_text(WIRE_PAYLOAD, BASE64.encode(data.content()))
        .attr("MediaLabel", data.media_label())
}

fn decode_data_element(el: &Element) -> Result<UserData, EnvelopeError> {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;
    let media = el
        .get_attr("MediaLabel")
        .ok_or_else(|| EnvelopeError::MalformedEnvelope("Payload without MediaLabel".into()))?
        .to_string();
    let content = BASE64
        .decode(el.text())
        .map_err(|e| EnvelopeError::MalformedEnvelope(format!("bad payload base64: {e}")))?;
    if content.is_empty() {
        Ok(UserData::empty(media))
    } else {
        Ok(UserData::new(content, media)?)
    }
}

#[allow(clippy::too_many_arguments)]
fn block_element(
    func: FuncName,
    mode: BlockMode,
    algorithm_id: &str,
    key_ref: &str,
    key_ref_is_name: bool,
    manifest: &[String],
    proof: &[u8],
    inner_elements: &[Element],
    in_body: bool,
) -> Element {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;
    let name = match (mode, in_body) {
        (BlockMode::Cipher, false) => WIRE_ENC_BLOCK,
        (BlockMode::Signature, false) => WIRE_SIGNED_BLOCK,
        (BlockMode::Digest, false) => WIRE_HASHED_BLOCK,
        (BlockMode::Tag, false) => WIRE_MAC_BLOCK,
        (BlockMode::Cipher, true) => WIRE_ENC_PAYLOAD,
        (BlockMode::Signature, true) => WIRE_SIGNED_PAYLOAD,
        (BlockMode::Digest, true) => WIRE_HASHED_PAYLOAD,
        (BlockMode::Tag, true) => WIRE_MAC_PAYLOAD,
    };
    let mut el = Element::new(name)
        .attr("Func", func.as_str())
        .attr("Algorithm", algorithm_id)
        .attr("Manifest", manifest.join(" "));
    if !key_ref.is_empty() {
        el = el.attr("KeyRef", key_ref);
        if key_ref_is_name {
            el = el.attr("KeyRefKind", "name");
        }
    }
    match mode {
        BlockMode::Cipher => {
            el.children
                .push(crate::xml::Node::Text(BASE64.encode(proof)));
            el
        }
        BlockMode::Signature | BlockMode::Digest | BlockMode::Tag => {
            let wrapper = if in_body { "Payloads" } else { "Tokens" };
            let mut content = Element::new(wrapper);
            for child in inner_elements {
                content = content.child(child.clone());
            }
            let proof_name = match mode {
                BlockMode::Signature => "Signature",
                BlockMode::Digest => "Digest",
                _ => "Tag",
            };
            el.child(Element::new("Content").child(content))
                .child(Element::with_text(proof_name, BASE64.encode(proof)))
        }
    }
}

fn parse_inner_items(elements: &[Element]) -> Result<Vec<EnvItem>, EnvelopeError> {
    elements.iter().map(parse_item).collect()
}

fn parse_item(el: &Element) -> Result<EnvItem, EnvelopeError> {
    if is_block_name(&el.name) {
        return Ok(EnvItem::Block(parse_block(el, false)?));
    }
    if el.name == WIRE_PAYLOAD {
        return Ok(EnvItem::Data(decode_data_element(el)?));
    }
    let term = decode_token(el)?;
    Ok(EnvItem::Token(TokenElement {
        schema_id: crate::token::SchemaId::for_term(&term)?,
        xml: String::from_utf8(el.to_canonical_bytes()).expect("utf-8"),
        source_term: term,
    }))
}

fn parse_block(el: &Element, _strict: bool) -> Result<EncryptedBlock, EnvelopeError> {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;
    let (mode, in_body) = match el.name.as_str() {
        WIRE_ENC_BLOCK => (BlockMode::Cipher, false),
        WIRE_SIGNED_BLOCK => (BlockMode::Signature, false),
        WIRE_HASHED_BLOCK => (BlockMode::Digest, false),
        WIRE_MAC_BLOCK => (BlockMode::Tag, false),
        WIRE_ENC_PAYLOAD => (BlockMode::Cipher, true),
        WIRE_SIGNED_PAYLOAD => (BlockMode::Signature, true),
        WIRE_HASHED_PAYLOAD => (BlockMode::Digest, true),
        WIRE_MAC_PAYLOAD => (BlockMode::Tag, true),
        other => {
            return Err(EnvelopeError::MalformedEnvelope(format!(
                "unknown block element `{other}`"
            )))
        }
    };
    let func = el
        .get_attr("Func")
        .and_then(FuncName::from_str)
        .ok_or_else(|| EnvelopeError::MalformedEnvelope("block without Func".into()))?;
    let algorithm_id = el
        .get_attr("Algorithm")
        .ok_or_else(|| EnvelopeError::MalformedEnvelope("block without Algorithm".into()))?
        .to_string();
    let manifest: Vec<String> = el
        .get_attr("Manifest")
        .unwrap_or_default()
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let key_ref = el.get_attr("KeyRef").unwrap_or_default().to_string();
    let key_ref_is_name = el.get_attr("KeyRefKind") == Some("name");

    let (proof, clear_items) = match mode {
        BlockMode::Cipher => {
            let ct = BASE64
                .decode(el.text())
                .map_err(|e| EnvelopeError::MalformedEnvelope(format!("bad block base64: {e}")))?;
            if ct.is_empty() {
                return Err(EnvelopeError::MalformedEnvelope(
                    "cipher block without ciphertext".into(),
                ));
            }
            (ct, None)
        }
        _ => {
            let content = el
                .first_element("Content")
                .ok_or_else(|| EnvelopeError::MalformedEnvelope("block without Content".into()))?;
            let wrapper_name = if in_body { "Payloads" } else { "Tokens" };
            let wrapper = content.first_element(wrapper_name).ok_or_else(|| {
                EnvelopeError::MalformedEnvelope(format!("Content without {wrapper_name}"))
            })?;
            let proof_name = match mode {
                BlockMode::Signature => "Signature",
                BlockMode::Digest => "Digest",
                _ => "Tag",
            };
            let proof = BASE64
                .decode(
                    el.first_element(proof_name)
                        .ok_or_else(|| {
                            EnvelopeError::MalformedEnvelope(format!("block without {proof_name}"))
                        })?
                        .text(),
                )
                .map_err(|e| EnvelopeError::MalformedEnvelope(format!("bad proof base64: {e}")))?;
            let inner: Vec<Element> = wrapper.elements().cloned().collect();
            check_manifest(&manifest, &inner)?;
            (proof, Some(parse_inner_items(&inner)?))
        }
    };
    Ok(EncryptedBlock {
        func,
        mode,
        algorithm_id,
        key_ref,
        key_ref_is_name,
        inner_manifest: manifest,
        proof,
        clear_items,
        raw: el.clone(),
        in_body,
    })
}

fn check_manifest(manifest: &[String], inner: &[Element]) -> Result<(), EnvelopeError> {
    let got: Vec<String> = inner.iter().map(|e| e.name.clone()).collect();
    if manifest != got.as_slice() {
        return Err(EnvelopeError::ManifestMismatch {
            expected: manifest.join(" "),
            got: got.join(" "),
        });
    }
    Ok(())
}

impl EncryptedBlock {
    /// Recovers and verifies the inner items. For cipher blocks this
    /// decrypts; for clear-carry blocks it checks the signature, digest or
    /// tag over the canonical content bytes.
    pub fn open(&self, ctx: &SecurityContext) -> Result<Vec<EnvItem>, EnvelopeError> {
        match self.mode {
            BlockMode::Cipher => {
                let plaintext = match self.func {
                    FuncName::Sk => {
                        let key = ctx
                            .keys
                            .sym(&self.key_ref)
                            .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone()))?;
                        ctx.provider
                            .sk_decrypt(key, &self.proof)
                            .map_err(|e| EnvelopeError::DecryptFailure(e.to_string()))?
                    }
                    FuncName::Pk => {
                        let entry = ctx
                            .keys
                            .asym(&self.key_ref)
                            .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone()))?;
                        let private = entry
                            .private_der
                            .as_ref()
                            .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone()))?;
                        ctx.provider
                            .pk_decrypt(private, &self.proof)
                            .map_err(|e| EnvelopeError::DecryptFailure(e.to_string()))?
                    }
                    _ => {
                        return Err(EnvelopeError::MalformedEnvelope(
                            "cipher block with non-cipher func".into(),
                        ))
                    }
                };
                let wrapper = parse_element(&plaintext)
                    .map_err(|e| EnvelopeError::DecryptFailure(e.to_string()))?;
                let expected = if self.in_body { "Payloads" } else { "Tokens" };
                if wrapper.name != expected {
                    return Err(EnvelopeError::DecryptFailure(format!(
                        "plaintext wrapper is `{}`",
                        wrapper.name
                    )));
                }
                let inner: Vec<Element> = wrapper.elements().cloned().collect();
                check_manifest(&self.inner_manifest, &inner)?;
                parse_inner_items(&inner)
            }
            BlockMode::Signature => {
                let bytes = self.content_bytes_for_proof()?;
                let entry = ctx
                    .keys
                    .asym(&self.key_ref)
                    .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone()))?;
                if !ctx.provider.verify(&entry.public_der, &bytes, &self.proof) {
                    return Err(EnvelopeError::SignatureInvalid);
                }
                Ok(self.clear_items.clone().expect("carry mode has items"))
            }
            BlockMode::Digest => {
                let bytes = self.content_bytes_for_proof()?;
                if ctx.provider.hash(&bytes) != self.proof {
                    return Err(EnvelopeError::DigestMismatch);
                }
                Ok(self.clear_items.clone().expect("carry mode has items"))
            }
            BlockMode::Tag => {
                let bytes = self.content_bytes_for_proof()?;
                let key = ctx
                    .keys
                    .sym(&self.key_ref)
                    .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone()))?;
                if !ctx.provider.hmac_verify(&key.bytes, &bytes, &self.proof) {
                    return Err(EnvelopeError::MacInvalid);
                }
                Ok(self.clear_items.clone().expect("carry mode has items"))
            }
        }
    }

    /// Whether the context has what `open` needs.
    pub fn openable(&self, ctx: &SecurityContext) -> bool {
        match (self.mode, self.func) {
            (BlockMode::Cipher, FuncName::Sk) | (BlockMode::Tag, _) => {
                ctx.keys.sym(&self.key_ref).is_some()
            }
            (BlockMode::Cipher, FuncName::Pk) => ctx
                .keys
                .asym(&self.key_ref)
                .is_some_and(|e| e.private_der.is_some()),
            (BlockMode::Signature, _) => ctx.keys.asym(&self.key_ref).is_some(),
            (BlockMode::Digest, _) => true,
            _ => false,
        }
    }

    fn content_bytes_for_proof(&self) -> Result<Vec<u8>, EnvelopeError> {
        let wrapper_name = if self.in_body { "Payloads" } else { "Tokens" };
        let content = self
            .raw
            .first_element("Content")
            .and_then(|c| c.first_element(wrapper_name))
            .ok_or_else(|| EnvelopeError::MalformedEnvelope("carry block without content".into()))?;
        Ok(content.to_canonical_bytes())
    }

    /// Reconstructs the encryption term, opening recursively.
    pub fn to_term(&self, ctx: &SecurityContext) -> Result<Term, EnvelopeError> {
        let items = self.open(ctx)?;
        let mut terms = Vec::new();
        for item in &items {
            terms.push(item_to_term(item, ctx)?);
        }
        let payload = pair_seq(terms)
            .ok_or_else(|| EnvelopeError::MalformedEnvelope("empty block payload".into()))?;
        let key_arg = match self.func {
            FuncName::H => None,
            _ => Some(self.reconstruct_key_arg(ctx)?),
        };
        Ok(crate::term::encrypt_term(payload, self.func, key_arg)?)
    }

    fn reconstruct_key_arg(&self, ctx: &SecurityContext) -> Result<Term, EnvelopeError> {
        if self.key_ref_is_name {
            return Ok(Term::plain_name(&self.key_ref));
        }
        match self.func {
            FuncName::Sk | FuncName::Hmac => ctx
                .keys
                .sym(&self.key_ref)
                .cloned()
                .map(Term::Key)
                .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone())),
            FuncName::Pk => {
                let entry = ctx
                    .keys
                    .asym(&self.key_ref)
                    .ok_or_else(|| EnvelopeError::UnresolvedKey(self.key_ref.clone()))?;
                Ok(Term::Key(
                    KeyMaterial::new(
                        entry.public_der.clone(),
                        KeyEncoding::Base64Binary,
                        self.key_ref.clone(),
                    )
                    .expect("public keys are non-empty"),
                ))
            }
            FuncName::H => unreachable!("hash blocks have no key"),
        }
    }
}

fn item_to_term(item: &EnvItem, ctx: &SecurityContext) -> Result<Term, EnvelopeError> {
    match item {
        EnvItem::Token(token) => Ok(token.source_term.clone()),
        EnvItem::Data(data) => Ok(Term::Data(data.clone())),
        EnvItem::Block(block) => block.to_term(ctx),
    }
}

impl Envelope {
    /// Canonical serialization: XML declaration plus the envelope element.
    /// Deterministic for a given envelope value.
    pub fn to_xml(&self) -> Vec<u8> {
        let mut security = Element::new("wsse:Security");
        // encrypted body parts announce their key in the header
        for item in &self.body_parts {
            if let EnvItem::Block(block) = item {
                if !block.key_ref.is_empty() {
                    security = security.child(
                        Element::new("KeyReference")
                            .attr("KeyRef", &block.key_ref)
                            .attr("Algorithm", &block.algorithm_id)
                            .attr("Func", block.func.as_str()),
                    );
                }
            }
        }
        for item in &self.header_tokens {
            security = security.child(item_element(item));
        }
        let header = Element::new("env:Header")
            .child(Element::with_text("MessageId", &self.message_id))
            .child(Element::with_text("ComponentOrder", &self.order))
            .child(security);
        let mut body = Element::new("env:Body");
        for item in &self.body_parts {
            body = body.child(item_element(item));
        }
        let root = Element::new("env:Envelope")
            .attr("xmlns", ns::EXT)
            .attr("xmlns:env", ns::SOAP_ENV)
            .attr("xmlns:wsse", ns::WSSE)
            .attr("xmlns:wsu", ns::WSU)
            .child(header)
            .child(body);
        let mut out = b"<?xml version=\"1.0\" encoding=\"utf-8\"?>".to_vec();
        out.extend_from_slice(&root.to_canonical_bytes());
        out
    }

    /// Octet length of the canonical serialization.
    pub fn size(&self) -> usize {
        self.to_xml().len()
    }

    /// Parses a SOAP envelope document into its structured form without
    /// touching any key material.
    pub fn from_xml(bytes: &[u8]) -> Result<Envelope, EnvelopeError> {
        let root = parse_element(bytes)?;
        if root.name != "env:Envelope" {
            return Err(EnvelopeError::MalformedEnvelope(format!(
                "root is `{}`, expected env:Envelope",
                root.name
            )));
        }
        let header = root
            .first_element("env:Header")
            .ok_or_else(|| EnvelopeError::MalformedEnvelope("missing env:Header".into()))?;
        let body = root
            .first_element("env:Body")
            .ok_or_else(|| EnvelopeError::MalformedEnvelope("missing env:Body".into()))?;
        let message_id = header
            .first_element("MessageId")
            .map(|el| el.text())
            .unwrap_or_default();
        let order = header
            .first_element("ComponentOrder")
            .map(|el| el.text())
            .unwrap_or_default();
        let security = header.first_element("wsse:Security").ok_or_else(|| {
            EnvelopeError::MalformedEnvelope("missing wsse:Security header block".into())
        })?;
        let mut header_tokens = Vec::new();
        for el in security.elements() {
            if el.name == "KeyReference" {
                continue; // regenerated from body parts on serialization
            }
            header_tokens.push(parse_item(el)?);
        }
        let mut body_parts = Vec::new();
        for el in body.elements() {
            body_parts.push(parse_item(el)?);
        }
        let expected_t = order.chars().filter(|&c| c == 't').count();
        let expected_d = order.chars().filter(|&c| c == 'd').count();
        if !order.is_empty()
            && (expected_t != header_tokens.len() || expected_d != body_parts.len())
        {
            return Err(EnvelopeError::MalformedEnvelope(
                "component order disagrees with section contents".into(),
            ));
        }
        if order.is_empty() && (!header_tokens.is_empty() || !body_parts.is_empty()) {
            return Err(EnvelopeError::MalformedEnvelope(
                "missing ComponentOrder".into(),
            ));
        }
        Ok(Envelope {
            message_id,
            header_tokens,
            body_parts,
            order,
        })
    }

    /// Top-level components in original message order.
    pub fn components(&self) -> Vec<&EnvItem> {
        let mut header = self.header_tokens.iter();
        let mut body = self.body_parts.iter();
        let mut out = Vec::new();
        for c in self.order.chars() {
            match c {
                't' => out.extend(header.next()),
                'd' => out.extend(body.next()),
                _ => {}
            }
        }
        out
    }
}

fn item_element(item: &EnvItem) -> Element {
    match item {
        EnvItem::Token(token) => token.element(),
        EnvItem::Data(data) => data_element(data),
        EnvItem::Block(block) => block.raw.clone(),
    }
}

/// Full inverse of [`build_envelope`]: decrypts and verifies every block
/// and reconstructs the term, left-renesting pair structure.
pub fn parse_envelope(bytes: &[u8], ctx: &SecurityContext) -> Result<Term, EnvelopeError> {
    let envelope = Envelope::from_xml(bytes)?;
    envelope_to_term(&envelope, ctx)
}

/// Term reconstruction from an already-parsed envelope.
pub fn envelope_to_term(envelope: &Envelope, ctx: &SecurityContext) -> Result<Term, EnvelopeError> {
    let components = envelope.components();
    if components.is_empty() {
        return Err(EnvelopeError::MalformedEnvelope("empty message".into()));
    }
    let mut terms = Vec::new();
    for item in components {
        terms.push(item_to_term(item, ctx)?);
    }
    Ok(pair_seq(terms).expect("non-empty"))
}

/// Octet length of the canonical serialization for a term under a context.
pub fn envelope_size(term: &Term, ctx: &SecurityContext) -> Result<usize, EnvelopeError> {
    Ok(build_envelope(term, ctx)?.size())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{encrypt_term, pair, Nonce};

    fn ctx_with_keys() -> SecurityContext {
        let mut ctx = SecurityContext::default();
        let kab = KeyMaterial::new(vec![0x11; 16], KeyEncoding::Base64Binary, "Kab").unwrap();
        ctx.keys.insert_sym(kab);
        ctx
    }

    fn term_key(ctx: &SecurityContext, label: &str) -> Term {
        Term::Key(ctx.keys.sym(label).unwrap().clone())
    }

    #[test]
    fn placement_rule_tokens_header_data_body() {
        let ctx = ctx_with_keys();
        let term = pair(
            Term::plain_name("A"),
            Term::Nonce(Nonce::random(vec![5; 12]).unwrap()),
        );
        let envelope = build_envelope(&term, &ctx).unwrap();
        assert_eq!(envelope.header_tokens.len(), 2);
        assert!(envelope.body_parts.is_empty());
        assert_eq!(envelope.order, "tt");
    }

    #[test]
    fn encrypted_data_goes_to_body() {
        let ctx = ctx_with_keys();
        let m = Term::Data(UserData::text("hello", "text/plain").unwrap());
        let term = encrypt_term(m, FuncName::Sk, Some(term_key(&ctx, "Kab"))).unwrap();
        let envelope = build_envelope(&term, &ctx).unwrap();
        assert!(envelope.header_tokens.is_empty());
        assert_eq!(envelope.body_parts.len(), 1);
        match &envelope.body_parts[0] {
            EnvItem::Block(b) => {
                assert!(b.in_body);
                assert_eq!(b.mode, BlockMode::Cipher);
                assert_eq!(b.key_ref, "Kab");
            }
            other => panic!("unexpected {other:?}"),
        }
        // the header carries only the key reference for the body part
        let xml = envelope.to_xml();
        let text = String::from_utf8_lossy(&xml);
        assert!(text.contains("<KeyReference Algorithm=\"aes-128-gcm\" Func=\"sk\" KeyRef=\"Kab\"/>"));
        // and the full roundtrip restores the term
        assert_eq!(parse_envelope(&xml, &ctx).unwrap(), term);
    }

    #[test]
    fn mixed_enc_payload_is_rejected() {
        let ctx = ctx_with_keys();
        let mixed = pair(
            Term::plain_name("A"),
            Term::Data(UserData::text("x", "text/plain").unwrap()),
        );
        let term = encrypt_term(mixed, FuncName::Sk, Some(term_key(&ctx, "Kab"))).unwrap();
        assert!(matches!(
            build_envelope(&term, &ctx),
            Err(EnvelopeError::MixedPlacement)
        ));
    }

    #[test]
    fn unresolved_key_is_reported() {
        let ctx = SecurityContext::default();
        let key = Term::Key(
            KeyMaterial::new(vec![1; 16], KeyEncoding::Base64Binary, "missing").unwrap(),
        );
        let term = encrypt_term(Term::plain_name("A"), FuncName::Sk, Some(key)).unwrap();
        assert!(matches!(
            build_envelope(&term, &ctx),
            Err(EnvelopeError::UnresolvedKey(label)) if label == "missing"
        ));
    }

    #[test]
    fn paper_example_roundtrips() {
        // {{A,Na}h}pk(PKa), A, Na
        let mut ctx = ctx_with_keys();
        let pair_rsa = ctx.provider.pk_generate().unwrap();
        ctx.keys.insert_asym_pair("PKa", &pair_rsa);
        let a = Term::plain_name("A");
        let na = Term::Nonce(Nonce::random(vec![9; 12]).unwrap());
        let hashed = encrypt_term(pair(a.clone(), na.clone()), FuncName::H, None).unwrap();
        let pka = Term::Key(
            KeyMaterial::new(pair_rsa.public_part.clone(), KeyEncoding::Base64Binary, "PKa")
                .unwrap(),
        );
        let signed = encrypt_term(hashed, FuncName::Pk, Some(pka)).unwrap();
        let term = pair(pair(signed, a), na);
        let xml = build_envelope(&term, &ctx).unwrap().to_xml();
        let back = parse_envelope(&xml, &ctx).unwrap();
        assert_eq!(back, term);
    }

    #[test]
    fn tampering_any_cipher_octet_is_detected() {
        let ctx = ctx_with_keys();
        let m = Term::Data(UserData::text("confidential payload", "text/plain").unwrap());
        let term = encrypt_term(m, FuncName::Sk, Some(term_key(&ctx, "Kab"))).unwrap();
        let xml = build_envelope(&term, &ctx).unwrap().to_xml();
        let envelope = Envelope::from_xml(&xml).unwrap();
        let EnvItem::Block(block) = &envelope.body_parts[0] else {
            panic!("expected block");
        };
        for i in 0..block.proof.len() {
            let mut tampered = block.clone();
            tampered.proof[i] ^= 0x40;
            assert!(tampered.open(&ctx).is_err(), "octet {i} undetected");
        }
    }

    #[test]
    fn missing_security_header_is_malformed() {
        let xml = b"<?xml version=\"1.0\" encoding=\"utf-8\"?><env:Envelope><env:Header>\
            <MessageId>x</MessageId><ComponentOrder>t</ComponentOrder></env:Header>\
            <env:Body/></env:Envelope>";
        assert!(matches!(
            Envelope::from_xml(xml),
            Err(EnvelopeError::MalformedEnvelope(_))
        ));
    }

    #[test]
    fn serialization_is_deterministic_and_size_matches() {
        let ctx = ctx_with_keys();
        let term = pair(
            Term::plain_name("A"),
            Term::Data(UserData::text("payload", "text/plain").unwrap()),
        );
        let envelope = build_envelope(&term, &ctx).unwrap();
        let first = envelope.to_xml();
        let second = envelope.to_xml();
        assert_eq!(first, second);
        assert_eq!(envelope.size(), first.len());
        assert_eq!(envelope.order, "td");
    }

    #[test]
    fn size_grows_with_payload() {
        let ctx = ctx_with_keys();
        let small = Term::Data(UserData::new(vec![7; 64], "bin").unwrap());
        let large = Term::Data(UserData::new(vec![7; 128], "bin").unwrap());
        assert!(envelope_size(&large, &ctx).unwrap() > envelope_size(&small, &ctx).unwrap());
    }

    #[test]
    fn interleaved_order_is_restored() {
        let ctx = ctx_with_keys();
        // data, token, data: order must come back as written
        let term = pair(
            pair(
                Term::Data(UserData::text("first", "text/plain").unwrap()),
                Term::plain_name("A"),
            ),
            Term::Data(UserData::text("second", "text/plain").unwrap()),
        );
        let xml = build_envelope(&term, &ctx).unwrap().to_xml();
        assert_eq!(parse_envelope(&xml, &ctx).unwrap(), term);
    }

    #[test]
    fn hmac_block_carries_and_verifies() {
        let ctx = ctx_with_keys();
        let term = encrypt_term(
            pair(Term::plain_name("A"), Term::plain_name("B")),
            FuncName::Hmac,
            Some(term_key(&ctx, "Kab")),
        )
        .unwrap();
        let xml = build_envelope(&term, &ctx).unwrap().to_xml();
        assert_eq!(parse_envelope(&xml, &ctx).unwrap(), term);

        // flipping a tag octet must be caught
        let envelope = Envelope::from_xml(&xml).unwrap();
        let EnvItem::Block(block) = &envelope.header_tokens[0] else {
            panic!("expected block");
        };
        let mut bad = block.clone();
        bad.proof[0] ^= 1;
        assert!(matches!(bad.open(&ctx), Err(EnvelopeError::MacInvalid)));
    }
}
