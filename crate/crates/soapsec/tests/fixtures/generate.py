#!/usr/bin/env python3
"""Regenerates the checked-in key material and crypto reference vectors.

Everything under tests/fixtures and tests/golden/rsa_sha1_vector.txt comes
from this script (OpenSSL via the `cryptography` package), so the Rust
implementation is always checked against an independent producer.
"""

import base64
import datetime
import hashlib
import os

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.x509.oid import NameOID

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "..", "golden")

NOT_BEFORE = datetime.datetime(2024, 1, 1, tzinfo=datetime.timezone.utc)
NOT_AFTER = datetime.datetime(2124, 1, 1, tzinfo=datetime.timezone.utc)


def make_identity(common_name: str, serial: int):
    key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(serial)
        .not_valid_before(NOT_BEFORE)
        .not_valid_after(NOT_AFTER)
        .sign(key, hashes.SHA256())
    )
    key_pem = key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )
    cert_pem = cert.public_bytes(serialization.Encoding.PEM)
    with open(os.path.join(HERE, f"{common_name}.key.pem"), "wb") as f:
        f.write(key_pem)
    with open(os.path.join(HERE, f"{common_name}.cert.pem"), "wb") as f:
        f.write(cert_pem)
    return key


def rsa_sha1_vector(key):
    message = b"soapsec rsa-sha1 reference message, do not change\n"
    signature = key.sign(message, padding.PKCS1v15(), hashes.SHA1())
    with open(os.path.join(GOLDEN, "rsa_sha1_vector.txt"), "w") as f:
        f.write("# RSA-SHA1 (RSASSA-PKCS1-v1_5) over the message, client.key.pem\n")
        f.write(f"message_b64={base64.b64encode(message).decode()}\n")
        f.write(f"signature_b64={base64.b64encode(signature).decode()}\n")


def password_digest_vectors():
    """base64(SHA-1(concat)) vectors for both concatenation orders."""
    cases = [
        ("secret", bytes(range(16)), "2012-12-12T12:35:45Z"),
        ("opensesame", bytes([0xAB] * 16), "2020-06-01T00:00:00Z"),
        ("pa:ss#word", bytes(range(240, 256)), "1999-12-31T23:59:59Z"),
    ]
    lines = ["# password|nonce_hex|created|digest_paper|digest_oasis"]
    for password, nonce, created in cases:
        p, c = password.encode(), created.encode()
        paper = base64.b64encode(hashlib.sha1(p + nonce + c).digest()).decode()
        oasis = base64.b64encode(hashlib.sha1(nonce + c + p).digest()).decode()
        lines.append(f"{password}|{nonce.hex()}|{created}|{paper}|{oasis}")
    with open(os.path.join(GOLDEN, "password_digest_vectors.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def sha1_check():
    assert base64.b64encode(hashlib.sha1(b"").digest()) == b"2jmj7l5rSw0yVb/vlWAYkK/YBwk="
    assert base64.b64encode(hashlib.sha1(b"abc").digest()) == b"qZk+NkcGgWq6PiVxeFDCbJzQ2J0="


def main():
    sha1_check()
    client = make_identity("client", 1001)
    make_identity("server", 1002)
    make_identity("outsider", 1003)
    rsa_sha1_vector(client)
    password_digest_vectors()
    with open(os.path.join(HERE, "users.txt"), "w") as f:
        f.write("# username:password\n")
        f.write("alice:correct horse battery staple\n")
        f.write("bob:hunter2\n")
        f.write("service:service-reply-secret\n")
    print("fixtures written")


if __name__ == "__main__":
    main()
