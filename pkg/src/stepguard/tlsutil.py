"""Local certificate authority for interception.

The proxy terminates TLS for intercepted hosts using leaf certificates minted
on the fly from a CA the workload is told to trust.  Keys are elliptic-curve
(P-256) for cheap issuance; leaves carry the host as a DNS or IP SAN so
standard client-side verification succeeds.  ``LeafStore`` caches one server
SSL context per host and owns the temp files the ssl module insists on.
"""

from __future__ import annotations

import datetime
import ipaddress
import ssl
import tempfile
import threading
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID


def _name(common_name: str) -> x509.Name:
    return x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])


def _validity() -> tuple[datetime.datetime, datetime.datetime]:
    now = datetime.datetime.now(datetime.timezone.utc)
    return now - datetime.timedelta(days=1), now + datetime.timedelta(days=3650)


def generate_ca(common_name: str = "Stepguard Interception CA") -> tuple[bytes, bytes]:
    """Create a self-signed CA; returns (cert_pem, key_pem)."""
    key = ec.generate_private_key(ec.SECP256R1())
    not_before, not_after = _validity()
    cert = (
        x509.CertificateBuilder()
        .subject_name(_name(common_name))
        .issuer_name(_name(common_name))
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=True, key_cert_sign=True, crl_sign=True,
                content_commitment=False, key_encipherment=False,
                data_encipherment=False, key_agreement=False,
                encipher_only=False, decipher_only=False,
            ),
            critical=True,
        )
        .sign(key, hashes.SHA256())
    )
    return (
        cert.public_bytes(serialization.Encoding.PEM),
        key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ),
    )


def issue_leaf(ca_cert_pem: bytes, ca_key_pem: bytes, host: str) -> tuple[bytes, bytes]:
    """Mint a server certificate for ``host`` signed by the given CA."""
    ca_cert = x509.load_pem_x509_certificate(ca_cert_pem)
    ca_key = serialization.load_pem_private_key(ca_key_pem, password=None)
    key = ec.generate_private_key(ec.SECP256R1())
    try:
        san: x509.GeneralName = x509.IPAddress(ipaddress.ip_address(host))
    except ValueError:
        san = x509.DNSName(host)
    not_before, not_after = _validity()
    cert = (
        x509.CertificateBuilder()
        .subject_name(_name(host))
        .issuer_name(ca_cert.subject)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .add_extension(x509.SubjectAlternativeName([san]), critical=False)
        .add_extension(
            x509.ExtendedKeyUsage([ExtendedKeyUsageOID.SERVER_AUTH]), critical=False
        )
        .sign(ca_key, hashes.SHA256())
    )
    return (
        cert.public_bytes(serialization.Encoding.PEM),
        key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ),
    )


def write_ca(directory: str | Path, *, common_name: str = "Stepguard Interception CA") -> tuple[Path, Path]:
    """Generate a CA and write cert/key PEMs; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cert_pem, key_pem = generate_ca(common_name)
    cert_path = directory / "ca-cert.pem"
    key_path = directory / "ca-key.pem"
    cert_path.write_bytes(cert_pem)
    key_path.write_bytes(key_pem)
    key_path.chmod(0o600)
    return cert_path, key_path


class LeafStore:
    """Per-host server contexts backed by a CA, issued lazily and cached."""

    def __init__(self, ca_cert_pem: bytes, ca_key_pem: bytes) -> None:
        self._ca_cert_pem = ca_cert_pem
        self._ca_key_pem = ca_key_pem
        self._lock = threading.Lock()
        self._contexts: dict[str, ssl.SSLContext] = {}
        self._tmpdir = tempfile.TemporaryDirectory(prefix="stepguard-leaf-")

    @classmethod
    def from_files(cls, cert_path: str | Path, key_path: str | Path) -> "LeafStore":
        return cls(Path(cert_path).read_bytes(), Path(key_path).read_bytes())

    def context_for(self, host: str) -> ssl.SSLContext:
        host = host.lower()
        with self._lock:
            context = self._contexts.get(host)
            if context is not None:
                return context
            cert_pem, key_pem = issue_leaf(self._ca_cert_pem, self._ca_key_pem, host)
            base = Path(self._tmpdir.name) / host.replace(":", "_")
            cert_file = base.with_suffix(".crt")
            key_file = base.with_suffix(".key")
            cert_file.write_bytes(cert_pem)
            key_file.write_bytes(key_pem)
            context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            context.load_cert_chain(str(cert_file), str(key_file))
            self._contexts[host] = context
            return context

    def close(self) -> None:
        self._tmpdir.cleanup()
