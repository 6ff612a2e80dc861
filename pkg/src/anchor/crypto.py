"""Symmetric primitives used across the package.

Everything is built on SHA-256 and HMAC-SHA-256; there is no public-key
cryptography anywhere in anchor.
"""
import hashlib
import hmac

from .errors import BadMac

DIGEST_SIZE = 32

# domain separation for sealed blobs
_BLOB_ENC = b"\x41"
_BLOB_MAC = b"\x42"
BLOB_NONCE_SIZE = 16
BLOB_OVERHEAD = BLOB_NONCE_SIZE + DIGEST_SIZE


def H(*parts: bytes) -> bytes:
    return hashlib.sha256(b"".join(parts)).digest()


def mac(key: bytes, *parts: bytes) -> bytes:
    return hmac.digest(key, b"".join(parts), "sha256")


def ct_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


def expand(seed: bytes, n: int) -> bytes:
    """Counter-mode expansion: H(seed || 0) || H(seed || 1) || ... truncated to n."""
    blocks = []
    for i in range((n + DIGEST_SIZE - 1) // DIGEST_SIZE):
        blocks.append(hashlib.sha256(seed + i.to_bytes(4, "big")).digest())
    return b"".join(blocks)[:n]


def xor(data: bytes, pad: bytes) -> bytes:
    if not data:
        return b""
    return (int.from_bytes(data, "big") ^ int.from_bytes(pad[: len(data)], "big")).to_bytes(len(data), "big")


def seal_blob(key: bytes, plaintext: bytes, nonce: bytes, ad: bytes = b"") -> bytes:
    """Encrypt-then-MAC ``plaintext`` under ``key``.

    The blob is ``nonce || ciphertext || tag``. ``ad`` is authenticated but not
    carried; the opener must supply the same bytes.
    """
    if len(nonce) != BLOB_NONCE_SIZE:
        raise ValueError("blob nonce must be 16 bytes")
    stream = expand(mac(key, _BLOB_ENC, nonce), len(plaintext))
    ct = xor(plaintext, stream)
    tag = mac(mac(key, _BLOB_MAC), nonce, len(ad).to_bytes(4, "big"), ad, ct)
    return nonce + ct + tag


def open_blob(key: bytes, blob: bytes, ad: bytes = b"") -> bytes:
    if len(blob) < BLOB_OVERHEAD:
        raise BadMac("sealed blob too short")
    nonce, ct, tag = blob[:BLOB_NONCE_SIZE], blob[BLOB_NONCE_SIZE:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    expected = mac(mac(key, _BLOB_MAC), nonce, len(ad).to_bytes(4, "big"), ad, ct)
    if not ct_equal(tag, expected):
        raise BadMac("sealed blob failed authentication")
    return xor(ct, expand(mac(key, _BLOB_ENC, nonce), len(ct)))


def decrypt_blob_unverified(key: bytes, blob: bytes) -> bytes:
    """Strip the keystream without checking the tag (adversary-side helper)."""
    nonce, ct = blob[:BLOB_NONCE_SIZE], blob[BLOB_NONCE_SIZE:-DIGEST_SIZE]
    return xor(ct, expand(mac(key, _BLOB_ENC, nonce), len(ct)))
