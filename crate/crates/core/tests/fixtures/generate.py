#!/usr/bin/env python3
"""Regenerates the checked-in oracle fixtures in this directory.

Everything here is computed with implementations that are independent of the
Rust crate: Python's `re` module for the schema pattern tables, `hashlib` /
`hmac` for digest vectors, `python-cryptography` for the AES-GCM vectors and
plain modular exponentiation for the Diffie-Hellman vectors.

Run from this directory: python3 generate.py
"""

import hashlib
import hmac as hmac_mod
import re

# ---------------------------------------------------------------------------
# Schema pattern fidelity tables
# ---------------------------------------------------------------------------

PATTERNS = {
    "user-domain": r"(\w+\.|\w+)+",
    "ipv4": r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}",
    "ipv6": r"([0-9a-fA-F]{1,4}:){7}[0-9a-fA-F]{1,4}",
    "domain": r"(\w+\.\w+)+",
}

CASES = {
    "user-domain": [
        "alice", "alice.host", "alice.host.domain", "a.b.c.d", "host_domain",
        "user_1.domain", "x", "123.456", "_", "ab.cd.ef", "ALICE.Example",
        "trailing.", "x.y.z.", "realm.local", "tgs.realm.local",
        "host_domain!", "", ".", ".a", "a..b", "user@host", "a b", "a-b",
        "ho st", "a!b", "alice@host.domain",
    ],
    "ipv4": [
        "10.0.0.1", "0.0.0.0", "192.168.1.100", "1.2.3.4", "255.255.255.255",
        "999.999.999.999", "01.02.003.004", "1.2.3.400", "10.0.0.256",
        "127.0.0.1", "8.8.8.8",
        "1.2.3", "1.2.3.4.5", "1234.1.1.1", "1.2.3.a", " 1.2.3.4",
        "1.2.3.4 ", "1,2,3,4", "", "...", "1..2.3", "-1.2.3.4", "a.b.c.d",
    ],
    "ipv6": [
        "2001:0db8:85a3:0000:0000:8a2e:0370:7334", "0:0:0:0:0:0:0:0",
        "fe80:1:2:3:4:5:6:7", "FFFF:ffff:AAAA:bbbb:1:22:333:4444",
        "1:2:3:4:5:6:7:8", "a:b:c:d:e:f:0:1", "2001:db8:85a3:0:0:8a2e:370:7334",
        "2001:db8::1", "::1", "1:2:3:4:5:6:7", "1:2:3:4:5:6:7:8:9",
        "12345:2:3:4:5:6:7:8", "g:2:3:4:5:6:7:8", "1:2:3:4:5:6:7:8:",
        ":1:2:3:4:5:6:7:8", "2001:db8:85a3:0:0:8a2e:370:7334 ", "", ":::",
        "1.2.3.4", "01:02:03:04:05:06:07:0g",
    ],
    "domain": [
        "example.com", "a.b", "a.bc.d", "ab.cd", "x1.y2", "_._", "a.b.c.d",
        "a_b.c_d", "1.2", "as.realm", "tgs.realm", "srv.realm",
        "a", "service.example.com", "a.b.c", "example.", ".com", "example",
        "ex-ample.com", "a.b ", "", "a-b.c", "a.", "alice@host",
    ],
}


def write_fidelity():
    lines = []
    for kind, cases in CASES.items():
        rx = re.compile(PATTERNS[kind])
        for case in cases:
            verdict = "accept" if rx.fullmatch(case) else "reject"
            lines.append(f"{kind}\t{case}\t{verdict}")
    with open("pattern_fidelity.tsv", "w") as fh:
        fh.write("# kind<TAB>input<TAB>accept|reject (re.fullmatch oracle)\n")
        fh.write("\n".join(lines) + "\n")
    counts = {}
    for line in lines:
        kind = line.split("\t")[0]
        counts[kind] = counts.get(kind, 0) + 1
    print("pattern cases:", counts)


# ---------------------------------------------------------------------------
# Hash / HMAC vectors
# ---------------------------------------------------------------------------

def write_sha256():
    cases = [b"", b"abc", b"The quick brown fox jumps over the lazy dog"]
    with open("sha256_vectors.txt", "w") as fh:
        fh.write("# msg_hex digest_hex (hashlib oracle)\n")
        for msg in cases:
            fh.write(f"{msg.hex() or '-'} {hashlib.sha256(msg).hexdigest()}\n")
    print("sha256 vectors:", len(cases))


def write_hmac():
    # RFC 4231 style inputs, tags recomputed with Python's hmac module.
    cases = [
        (bytes([0x0B] * 20), b"Hi There"),
        (b"Jefe", b"what do ya want for nothing?"),
        (bytes([0xAA] * 20), bytes([0xDD] * 50)),
        (bytes(range(1, 26)), bytes([0xCD] * 50)),
    ]
    with open("hmac_sha256_vectors.txt", "w") as fh:
        fh.write("# key_hex msg_hex tag_hex (python hmac oracle)\n")
        for key, msg in cases:
            tag = hmac_mod.new(key, msg, hashlib.sha256).hexdigest()
            fh.write(f"{key.hex()} {msg.hex()} {tag}\n")
    print("hmac vectors:", len(cases))


# ---------------------------------------------------------------------------
# AES-128-GCM vectors
# ---------------------------------------------------------------------------

def write_aes_gcm():
    from cryptography.hazmat.primitives.ciphers.aead import AESGCM

    cases = [
        # The two classic all-zero vectors plus deterministic payload cases.
        (bytes(16), bytes(12), b"", b""),
        (bytes(16), bytes(12), bytes(16), b""),
        (hashlib.sha256(b"wssec-gcm-key-1").digest()[:16],
         hashlib.sha256(b"wssec-gcm-nonce-1").digest()[:12],
         b"attack at dawn", b""),
        (hashlib.sha256(b"wssec-gcm-key-2").digest()[:16],
         hashlib.sha256(b"wssec-gcm-nonce-2").digest()[:12],
         bytes(hashlib.sha256(b"payload" + i.to_bytes(2, "big")).digest()[0] for i in range(1024)),
         b"header"),
    ]
    with open("aes128gcm_vectors.txt", "w") as fh:
        fh.write("# key_hex nonce_hex aad_hex pt_hex ct_and_tag_hex (python-cryptography oracle)\n")
        for key, nonce, pt, aad in cases:
            ct = AESGCM(key).encrypt(nonce, pt, aad if aad else None)
            fh.write(f"{key.hex()} {nonce.hex()} {aad.hex() or '-'} {pt.hex() or '-'} {ct.hex()}\n")
    print("aes-gcm vectors:", len(cases))


# ---------------------------------------------------------------------------
# Diffie-Hellman over the 2048-bit MODP group (RFC 3526 group 14)
# ---------------------------------------------------------------------------

MODP_2048_HEX = (
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF"
)


def hkdf_sha256(ikm: bytes, info: bytes, length: int) -> bytes:
    # RFC 5869 with an empty salt, written out longhand.
    prk = hmac_mod.new(bytes(32), ikm, hashlib.sha256).digest()
    okm = b""
    block = b""
    counter = 1
    while len(okm) < length:
        block = hmac_mod.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        okm += block
        counter += 1
    return okm[:length]


def write_dh():
    p = int(MODP_2048_HEX, 16)
    g = 2
    assert p.bit_length() == 2048
    try:
        from sympy import isprime
        assert isprime(p) and isprime((p - 1) // 2), "group 14 prime check failed"
        print("modp-2048 safe-prime check: ok")
    except ImportError:
        print("sympy missing, skipped primality check")

    a = int.from_bytes(hashlib.sha384(b"wssec-dh-test-a").digest(), "big")
    b = int.from_bytes(hashlib.sha384(b"wssec-dh-test-b").digest(), "big")
    pub_a = pow(g, a, p)
    pub_b = pow(g, b, p)
    shared = pow(pub_b, a, p)
    assert shared == pow(pub_a, b, p)
    secret = shared.to_bytes(256, "big")
    derived16 = hkdf_sha256(secret, b"wssec-dh-derive-v1", 16)
    derived32 = hkdf_sha256(secret, b"wssec-dh-derive-v1", 32)
    with open("dh_modp2048_vectors.txt", "w") as fh:
        fh.write("# field value_hex (pow() + RFC5869 oracle, empty salt, info=wssec-dh-derive-v1)\n")
        fh.write(f"priv_a {a:x}\n")
        fh.write(f"priv_b {b:x}\n")
        fh.write(f"pub_a {pub_a:0512x}\n")
        fh.write(f"pub_b {pub_b:0512x}\n")
        fh.write(f"shared {secret.hex()}\n")
        fh.write(f"derived16 {derived16.hex()}\n")
        fh.write(f"derived32 {derived32.hex()}\n")
    print("dh vectors written")


if __name__ == "__main__":
    write_fidelity()
    write_sha256()
    write_hmac()
    write_aes_gcm()
    write_dh()
