//! Concrete cryptography behind the four function classes, plus digital
//! signatures and Diffie-Hellman agreement.
//!
//! Default suite: AES-128-GCM for `sk`, RSA-2048 with OAEP for `pk` and PSS
//! for signatures, SHA-256 for `h`, HMAC-SHA-256 for `hmac`, and the
//! 2048-bit MODP group for key agreement. All algorithms resolve through a
//! small registry so a suite can swap members; nothing here is custom
//! cryptography.
//!
//! `pk` over payloads beyond the OAEP limit uses a hybrid envelope (fresh
//! symmetric key, itself OAEP-encrypted) unless hybrid mode is disabled.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Aes256Gcm, Nonce as GcmNonce};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use num_bigint::BigUint;
use rand::rngs::OsRng;
use rand::RngCore;
use rsa::pkcs1::{
    DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey,
};
use rsa::pss::{Signature, SigningKey, VerifyingKey};
use rsa::signature::{RandomizedSigner, SignatureEncoding, Verifier};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::term::{KeyEncoding, KeyMaterial};

type HmacSha256 = Hmac<Sha256>;

/// GCM nonce length in octets.
const GCM_NONCE_LEN: usize = 12;
/// GCM tag length in octets.
const GCM_TAG_LEN: usize = 16;
/// Private exponent length for MODP Diffie-Hellman.
const DH_PRIVATE_LEN: usize = 48;
/// Info string for the shared-secret key derivation step.
const DH_KDF_INFO: &[u8] = b"wssec-dh-derive-v1";

/// 2048-bit MODP group, generator 2 (RFC 3526 group 14).
pub const MODP_2048_PRIME_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
     020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437\
     4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
     EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05\
     98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
     9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
     E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718\
     3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unknown algorithm id `{0}`")]
    UnknownAlgorithm(String),
    #[error("bad key length: expected {expected} octets, got {got}")]
    BadKeyLength { expected: usize, got: usize },
    #[error("authentication failure: ciphertext rejected")]
    AuthFailure,
    #[error("decryption failure")]
    DecryptFailure,
    #[error("plaintext of {got} octets exceeds the {max}-octet limit (hybrid mode disabled)")]
    PlaintextTooLong { max: usize, got: usize },
    #[error("peer public value is degenerate or out of range")]
    InvalidPeerKey,
    #[error("bad key document: {0}")]
    KeyFormat(String),
    #[error("bad signature encoding: {0}")]
    SignatureFormat(String),
    #[error("key generation failed: {0}")]
    KeyGen(String),
}

/// The algorithm ids a suite may name.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AlgorithmSuite {
    pub sk_algorithm: String,
    pub pk_algorithm: String,
    pub hash_algorithm: String,
    pub hmac_algorithm: String,
    pub signature_algorithm: String,
    pub dh_group: String,
}

impl Default for AlgorithmSuite {
    fn default() -> Self {
        AlgorithmSuite {
            sk_algorithm: "aes-128-gcm".into(),
            pk_algorithm: "rsa-2048-oaep-sha256".into(),
            hash_algorithm: "sha-256".into(),
            hmac_algorithm: "hmac-sha-256".into(),
            signature_algorithm: "rsa-2048-pss-sha256".into(),
            dh_group: "modp-2048".into(),
        }
    }
}

impl AlgorithmSuite {
    /// Named presets accepted on the command line.
    pub fn named(name: &str) -> Result<Self, CryptoError> {
        match name {
            "default" => Ok(AlgorithmSuite::default()),
            "aes256" => Ok(AlgorithmSuite {
                sk_algorithm: "aes-256-gcm".into(),
                ..AlgorithmSuite::default()
            }),
            other => Err(CryptoError::UnknownAlgorithm(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SkAlgorithm {
    Aes128Gcm,
    Aes256Gcm,
}

impl SkAlgorithm {
    fn resolve(id: &str) -> Result<Self, CryptoError> {
        match id {
            "aes-128-gcm" => Ok(SkAlgorithm::Aes128Gcm),
            "aes-256-gcm" => Ok(SkAlgorithm::Aes256Gcm),
            other => Err(CryptoError::UnknownAlgorithm(other.into())),
        }
    }

    fn key_len(&self) -> usize {
        match self {
            SkAlgorithm::Aes128Gcm => 16,
            SkAlgorithm::Aes256Gcm => 32,
        }
    }
}

/// An asymmetric or Diffie-Hellman key pair. The private part zeroizes on
/// drop.
#[derive(Clone)]
pub struct KeyPair {
    pub public_part: Vec<u8>,
    pub private_part: Zeroizing<Vec<u8>>,
    pub algorithm: String,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("algorithm", &self.algorithm)
            .field("public_part", &hex::encode(&self.public_part))
            .field("private_part", &"<redacted>")
            .finish()
    }
}

/// Stateless executor for one algorithm suite.
#[derive(Debug, Clone)]
pub struct CryptoProvider {
    suite: AlgorithmSuite,
    sk: SkAlgorithm,
    hybrid_pk: bool,
    dh_prime: BigUint,
    dh_generator: BigUint,
}

impl Default for CryptoProvider {
    fn default() -> Self {
        CryptoProvider::new(AlgorithmSuite::default()).expect("default suite resolves")
    }
}

impl CryptoProvider {
    pub fn new(suite: AlgorithmSuite) -> Result<Self, CryptoError> {
        let sk = SkAlgorithm::resolve(&suite.sk_algorithm)?;
        if suite.pk_algorithm != "rsa-2048-oaep-sha256" {
            return Err(CryptoError::UnknownAlgorithm(suite.pk_algorithm.clone()));
        }
        if suite.hash_algorithm != "sha-256" {
            return Err(CryptoError::UnknownAlgorithm(suite.hash_algorithm.clone()));
        }
        if suite.hmac_algorithm != "hmac-sha-256" {
            return Err(CryptoError::UnknownAlgorithm(suite.hmac_algorithm.clone()));
        }
        if suite.signature_algorithm != "rsa-2048-pss-sha256" {
            return Err(CryptoError::UnknownAlgorithm(
                suite.signature_algorithm.clone(),
            ));
        }
        if suite.dh_group != "modp-2048" {
            return Err(CryptoError::UnknownAlgorithm(suite.dh_group.clone()));
        }
        let prime_hex: String = MODP_2048_PRIME_HEX
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect();
        Ok(CryptoProvider {
            suite,
            sk,
            hybrid_pk: true,
            dh_prime: BigUint::parse_bytes(prime_hex.as_bytes(), 16).expect("valid prime hex"),
            dh_generator: BigUint::from(2u8),
        })
    }

    pub fn suite(&self) -> &AlgorithmSuite {
        &self.suite
    }

    /// Disables the hybrid envelope for long `pk` plaintexts.
    pub fn with_hybrid_pk(mut self, enabled: bool) -> Self {
        self.hybrid_pk = enabled;
        self
    }

    pub fn sk_key_len(&self) -> usize {
        self.sk.key_len()
    }

    /// Fresh symmetric key for the suite's `sk` algorithm.
    pub fn generate_sk_key(&self, label: impl Into<String>) -> KeyMaterial {
        let mut bytes = vec![0u8; self.sk.key_len()];
        OsRng.fill_bytes(&mut bytes);
        KeyMaterial::new(bytes, KeyEncoding::Base64Binary, label).expect("non-empty key")
    }

    /// Fresh random octets from the system generator.
    pub fn generate_nonce_bytes(&self, len: usize) -> Vec<u8> {
        let mut bytes = vec![0u8; len];
        OsRng.fill_bytes(&mut bytes);
        bytes
    }

    fn check_sk_key(&self, key: &KeyMaterial) -> Result<(), CryptoError> {
        if key.bytes.len() != self.sk.key_len() {
            return Err(CryptoError::BadKeyLength {
                expected: self.sk.key_len(),
                got: key.bytes.len(),
            });
        }
        Ok(())
    }

    /// Authenticated encryption; output is `nonce || ciphertext || tag`.
    pub fn sk_encrypt(&self, key: &KeyMaterial, plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.check_sk_key(key)?;
        let mut nonce = [0u8; GCM_NONCE_LEN];
        OsRng.fill_bytes(&mut nonce);
        let mut out = nonce.to_vec();
        out.extend_from_slice(&self.seal(&key.bytes, &nonce, b"", plaintext)?);
        Ok(out)
    }

    pub fn sk_decrypt(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.check_sk_key(key)?;
        if ciphertext.len() < GCM_NONCE_LEN + GCM_TAG_LEN {
            return Err(CryptoError::AuthFailure);
        }
        let (nonce, body) = ciphertext.split_at(GCM_NONCE_LEN);
        self.open(&key.bytes, nonce, b"", body)
    }

    /// Low-level sealed box with a caller-provided nonce; the surface the
    /// known-answer vectors exercise.
    pub fn seal(
        &self,
        key_bytes: &[u8],
        nonce: &[u8],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        if key_bytes.len() != self.sk.key_len() {
            return Err(CryptoError::BadKeyLength {
                expected: self.sk.key_len(),
                got: key_bytes.len(),
            });
        }
        let payload = Payload {
            msg: plaintext,
            aad,
        };
        let nonce = GcmNonce::from_slice(nonce);
        let out = match self.sk {
            SkAlgorithm::Aes128Gcm => Aes128Gcm::new_from_slice(key_bytes)
                .expect("length checked")
                .encrypt(nonce, payload),
            SkAlgorithm::Aes256Gcm => Aes256Gcm::new_from_slice(key_bytes)
                .expect("length checked")
                .encrypt(nonce, payload),
        };
        out.map_err(|_| CryptoError::AuthFailure)
    }

    pub fn open(
        &self,
        key_bytes: &[u8],
        nonce: &[u8],
        aad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        if key_bytes.len() != self.sk.key_len() {
            return Err(CryptoError::BadKeyLength {
                expected: self.sk.key_len(),
                got: key_bytes.len(),
            });
        }
        let payload = Payload {
            msg: ciphertext,
            aad,
        };
        let nonce = GcmNonce::from_slice(nonce);
        let out = match self.sk {
            SkAlgorithm::Aes128Gcm => Aes128Gcm::new_from_slice(key_bytes)
                .expect("length checked")
                .decrypt(nonce, payload),
            SkAlgorithm::Aes256Gcm => Aes256Gcm::new_from_slice(key_bytes)
                .expect("length checked")
                .decrypt(nonce, payload),
        };
        out.map_err(|_| CryptoError::AuthFailure)
    }

    /// Fresh RSA key pair (PKCS#1 DER on both halves).
    pub fn pk_generate(&self) -> Result<KeyPair, CryptoError> {
        let mut rng = OsRng;
        let private = RsaPrivateKey::new(&mut rng, 2048)
            .map_err(|e| CryptoError::KeyGen(e.to_string()))?;
        let public = RsaPublicKey::from(&private);
        Ok(KeyPair {
            public_part: public
                .to_pkcs1_der()
                .map_err(|e| CryptoError::KeyFormat(e.to_string()))?
                .as_bytes()
                .to_vec(),
            private_part: Zeroizing::new(
                private
                    .to_pkcs1_der()
                    .map_err(|e| CryptoError::KeyFormat(e.to_string()))?
                    .as_bytes()
                    .to_vec(),
            ),
            algorithm: self.suite.pk_algorithm.clone(),
        })
    }

    fn parse_public(&self, der: &[u8]) -> Result<RsaPublicKey, CryptoError> {
        RsaPublicKey::from_pkcs1_der(der).map_err(|e| CryptoError::KeyFormat(e.to_string()))
    }

    fn parse_private(&self, der: &[u8]) -> Result<RsaPrivateKey, CryptoError> {
        RsaPrivateKey::from_pkcs1_der(der).map_err(|e| CryptoError::KeyFormat(e.to_string()))
    }

    fn oaep_limit(&self, public: &RsaPublicKey) -> usize {
        use rsa::traits::PublicKeyParts;
        public.size() - 2 * Sha256::output_size() - 2
    }

    /// OAEP encryption; payloads beyond the modulus limit switch to a
    /// hybrid envelope when enabled. Output is tagged with a mode octet.
    pub fn pk_encrypt(&self, public_der: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let public = self.parse_public(public_der)?;
        let limit = self.oaep_limit(&public);
        let mut rng = OsRng;
        if plaintext.len() <= limit {
            let ct = public
                .encrypt(&mut rng, Oaep::new::<Sha256>(), plaintext)
                .map_err(|_| CryptoError::DecryptFailure)?;
            let mut out = vec![0x01];
            out.extend_from_slice(&ct);
            return Ok(out);
        }
        if !self.hybrid_pk {
            return Err(CryptoError::PlaintextTooLong {
                max: limit,
                got: plaintext.len(),
            });
        }
        let session = self.generate_sk_key("hybrid");
        let wrapped = public
            .encrypt(&mut rng, Oaep::new::<Sha256>(), &session.bytes)
            .map_err(|_| CryptoError::DecryptFailure)?;
        let sealed = self.sk_encrypt(&session, plaintext)?;
        let mut out = vec![0x02];
        out.extend_from_slice(&u16::try_from(wrapped.len()).unwrap().to_be_bytes());
        out.extend_from_slice(&wrapped);
        out.extend_from_slice(&sealed);
        Ok(out)
    }

    pub fn pk_decrypt(&self, private_der: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let private = self.parse_private(private_der)?;
        match ciphertext.split_first() {
            Some((0x01, ct)) => private
                .decrypt(Oaep::new::<Sha256>(), ct)
                .map_err(|_| CryptoError::DecryptFailure),
            Some((0x02, rest)) => {
                if rest.len() < 2 {
                    return Err(CryptoError::DecryptFailure);
                }
                let (len_bytes, rest) = rest.split_at(2);
                let wrapped_len = u16::from_be_bytes([len_bytes[0], len_bytes[1]]) as usize;
                if rest.len() < wrapped_len {
                    return Err(CryptoError::DecryptFailure);
                }
                let (wrapped, sealed) = rest.split_at(wrapped_len);
                let key_bytes = private
                    .decrypt(Oaep::new::<Sha256>(), wrapped)
                    .map_err(|_| CryptoError::DecryptFailure)?;
                let session = KeyMaterial::new(key_bytes, KeyEncoding::Base64Binary, "hybrid")
                    .map_err(|_| CryptoError::DecryptFailure)?;
                self.sk_decrypt(&session, sealed)
                    .map_err(|_| CryptoError::DecryptFailure)
            }
            _ => Err(CryptoError::DecryptFailure),
        }
    }

    pub fn hash(&self, data: &[u8]) -> Vec<u8> {
        Sha256::digest(data).to_vec()
    }

    pub fn hmac_tag(&self, key: &[u8], data: &[u8]) -> Vec<u8> {
        let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
        mac.update(data);
        mac.finalize().into_bytes().to_vec()
    }

    pub fn hmac_verify(&self, key: &[u8], data: &[u8], tag: &[u8]) -> bool {
        let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
        mac.update(data);
        mac.verify_slice(tag).is_ok()
    }

    /// RSA-PSS signature over the data.
    pub fn sign(&self, private_der: &[u8], data: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let private = self.parse_private(private_der)?;
        let key = SigningKey::<Sha256>::new(private);
        let mut rng = OsRng;
        Ok(key.sign_with_rng(&mut rng, data).to_vec())
    }

    pub fn verify(&self, public_der: &[u8], data: &[u8], signature: &[u8]) -> bool {
        let Ok(public) = self.parse_public(public_der) else {
            return false;
        };
        let Ok(sig) = Signature::try_from(signature) else {
            return false;
        };
        VerifyingKey::<Sha256>::new(public).verify(data, &sig).is_ok()
    }

    /// Fresh ephemeral pair in the suite's MODP group. The public part is
    /// the fixed-width big-endian group element.
    pub fn dh_generate(&self) -> Result<KeyPair, CryptoError> {
        let mut exponent = Zeroizing::new(vec![0u8; DH_PRIVATE_LEN]);
        loop {
            OsRng.fill_bytes(&mut exponent);
            if exponent.iter().any(|&b| b != 0) {
                break;
            }
        }
        let x = BigUint::from_bytes_be(&exponent);
        let public = self.dh_generator.modpow(&x, &self.dh_prime);
        Ok(KeyPair {
            public_part: to_fixed_width(&public, 256),
            private_part: exponent,
            algorithm: self.suite.dh_group.clone(),
        })
    }

    /// Shared-secret agreement, passed through HKDF-SHA256 down to the
    /// suite's symmetric key length.
    pub fn dh_shared(
        &self,
        private_exponent: &[u8],
        peer_public: &[u8],
        label: impl Into<String>,
    ) -> Result<KeyMaterial, CryptoError> {
        let peer = BigUint::from_bytes_be(peer_public);
        let two = BigUint::from(2u8);
        // reject identity and other degenerate elements
        if peer < two || peer > (&self.dh_prime - &two) {
            return Err(CryptoError::InvalidPeerKey);
        }
        let x = BigUint::from_bytes_be(private_exponent);
        let shared = peer.modpow(&x, &self.dh_prime);
        let secret = Zeroizing::new(to_fixed_width(&shared, 256));
        let hk = Hkdf::<Sha256>::new(None, &secret);
        let mut okm = vec![0u8; self.sk.key_len()];
        hk.expand(DH_KDF_INFO, &mut okm).expect("okm within bounds");
        Ok(KeyMaterial::new(okm, KeyEncoding::Base64Binary, label).expect("non-empty key"))
    }
}

fn to_fixed_width(value: &BigUint, width: usize) -> Vec<u8> {
    let bytes = value.to_bytes_be();
    let mut out = vec![0u8; width.saturating_sub(bytes.len())];
    out.extend_from_slice(&bytes);
    out
}
