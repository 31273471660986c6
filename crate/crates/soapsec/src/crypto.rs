//! Crypto primitives: SHA-1 digests, RSA-SHA1 signatures, the AES-256-CBC +
//! RSA-OAEP body encryption used by the sign-and-encrypt policy, and PEM key
//! and certificate handling.
//!
//! SHA-1 and RSA-SHA1 are deliberately retained even though they are
//! deprecated for new designs; the toolkit reproduces a fixed wire format
//! that pins these algorithms. See the README warning before reusing any of
//! this for other purposes.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, SystemTime};

use aes::cipher::block_padding::Pkcs7;
use aes::cipher::{BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use rand::{CryptoRng, RngCore};
use rsa::pkcs1v15::Pkcs1v15Sign;
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding};
use rsa::traits::PublicKeyParts;
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha1::{Digest, Sha1};
use x509_cert::builder::{Builder, CertificateBuilder, Profile};
use x509_cert::der::{Decode, DecodePem, Encode, EncodePem};
use x509_cert::name::Name;
use x509_cert::serial_number::SerialNumber;
use x509_cert::spki::SubjectPublicKeyInfoOwned;
use x509_cert::time::Validity;

pub const RSA_KEY_BITS: usize = 2048;
const AES_KEY_LEN: usize = 32;
const AES_IV_LEN: usize = 16;

type Aes256CbcEnc = cbc::Encryptor<aes::Aes256>;
type Aes256CbcDec = cbc::Decryptor<aes::Aes256>;

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("pem parse error: {0}")]
    PemParse(String),
    #[error("certificate does not match the private key")]
    KeyCertMismatch,
    #[error("certificate not currently valid: {0}")]
    CertificateExpired(String),
    #[error("key unusable: {0}")]
    KeyUnusable(String),
    #[error("decryption failed")]
    DecryptionFailed,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parsed X.509 certificate with the fields the toolkit needs, plus the
/// exact DER it came from. Trust decisions compare the DER bytes.
#[derive(Clone)]
pub struct Certificate {
    der: Vec<u8>,
    subject_name: String,
    public_key: RsaPublicKey,
    not_before: SystemTime,
    not_after: SystemTime,
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Certificate")
            .field("subject_name", &self.subject_name)
            .finish_non_exhaustive()
    }
}

impl PartialEq for Certificate {
    fn eq(&self, other: &Self) -> bool {
        self.der == other.der
    }
}

impl Eq for Certificate {}

impl Certificate {
    pub fn from_der(der: &[u8]) -> Result<Self, CryptoError> {
        let cert = x509_cert::Certificate::from_der(der)
            .map_err(|e| CryptoError::PemParse(format!("bad certificate der: {e}")))?;
        Self::from_parsed(cert, der.to_vec())
    }

    pub fn from_pem(pem: &[u8]) -> Result<Self, CryptoError> {
        let cert = x509_cert::Certificate::from_pem(pem)
            .map_err(|e| CryptoError::PemParse(format!("bad certificate pem: {e}")))?;
        let der = cert
            .to_der()
            .map_err(|e| CryptoError::PemParse(format!("re-encode failed: {e}")))?;
        Self::from_parsed(cert, der)
    }

    fn from_parsed(cert: x509_cert::Certificate, der: Vec<u8>) -> Result<Self, CryptoError> {
        let tbs = &cert.tbs_certificate;
        let spki_der = tbs
            .subject_public_key_info
            .to_der()
            .map_err(|e| CryptoError::PemParse(format!("bad spki: {e}")))?;
        let public_key = RsaPublicKey::from_public_key_der(&spki_der)
            .map_err(|e| CryptoError::PemParse(format!("not an rsa public key: {e}")))?;
        let subject_name = common_name(&tbs.subject).unwrap_or_else(|| tbs.subject.to_string());
        Ok(Self {
            der,
            subject_name,
            public_key,
            not_before: tbs.validity.not_before.to_system_time(),
            not_after: tbs.validity.not_after.to_system_time(),
        })
    }

    pub fn der(&self) -> &[u8] {
        &self.der
    }

    /// Subject common name, falling back to the full RFC 4514 subject.
    pub fn subject_name(&self) -> &str {
        &self.subject_name
    }

    pub fn public_key(&self) -> &RsaPublicKey {
        &self.public_key
    }

    pub fn valid_at(&self, at: SystemTime) -> bool {
        self.not_before <= at && at <= self.not_after
    }
}

fn common_name(name: &Name) -> Option<String> {
    const CN: x509_cert::der::oid::ObjectIdentifier =
        x509_cert::der::oid::ObjectIdentifier::new_unwrap("2.5.4.3");
    for rdn in name.0.iter() {
        for atv in rdn.0.iter() {
            if atv.oid == CN {
                if let Ok(value) = atv.value.decode_as::<String>() {
                    return Some(value);
                }
            }
        }
    }
    None
}

/// Private key plus the matching certificate.
#[derive(Clone)]
pub struct KeyPair {
    private_key: RsaPrivateKey,
    certificate: Certificate,
}

impl KeyPair {
    pub fn new(private_key: RsaPrivateKey, certificate: Certificate) -> Result<Self, CryptoError> {
        let derived = RsaPublicKey::from(&private_key);
        if derived.n() != certificate.public_key.n() || derived.e() != certificate.public_key.e() {
            return Err(CryptoError::KeyCertMismatch);
        }
        Ok(Self { private_key, certificate })
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn subject_name(&self) -> &str {
        self.certificate.subject_name()
    }

    pub fn private_key(&self) -> &RsaPrivateKey {
        &self.private_key
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("subject_name", &self.subject_name())
            .finish_non_exhaustive()
    }
}

/// Loads a PKCS#8 private key PEM and a certificate PEM, rejecting pairs
/// that do not match and certificates not valid right now.
pub fn load_keypair(private_key_pem: &[u8], certificate_pem: &[u8]) -> Result<KeyPair, CryptoError> {
    let key_text = std::str::from_utf8(private_key_pem)
        .map_err(|_| CryptoError::PemParse("private key pem is not utf-8".into()))?;
    let private_key = RsaPrivateKey::from_pkcs8_pem(key_text)
        .map_err(|e| CryptoError::PemParse(format!("bad private key pem: {e}")))?;
    let certificate = Certificate::from_pem(certificate_pem)?;
    if !certificate.valid_at(SystemTime::now()) {
        return Err(CryptoError::CertificateExpired(
            certificate.subject_name().to_string(),
        ));
    }
    KeyPair::new(private_key, certificate)
}

pub fn load_keypair_files(
    private_key_path: &Path,
    certificate_path: &Path,
) -> Result<KeyPair, CryptoError> {
    load_keypair(&fs::read(private_key_path)?, &fs::read(certificate_path)?)
}

/// Directly trusted peer certificates, keyed by subject name.
#[derive(Debug, Default, Clone)]
pub struct TrustStore {
    by_subject: HashMap<String, Certificate>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, cert: Certificate) -> Result<(), CryptoError> {
        let subject = cert.subject_name().to_string();
        if self.by_subject.contains_key(&subject) {
            return Err(CryptoError::PemParse(format!(
                "duplicate trusted subject {subject:?}"
            )));
        }
        self.by_subject.insert(subject, cert);
        Ok(())
    }

    /// Loads every `*.pem` certificate in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, CryptoError> {
        let mut store = Self::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.sort();
        for path in paths {
            if path.extension().is_some_and(|e| e == "pem") {
                store.add(Certificate::from_pem(&fs::read(&path)?)?)?;
            }
        }
        Ok(store)
    }

    /// True only for the exact certificate that was stored (DER equality).
    pub fn contains(&self, cert: &Certificate) -> bool {
        self.by_subject
            .get(cert.subject_name())
            .is_some_and(|stored| stored == cert)
    }

    pub fn is_empty(&self) -> bool {
        self.by_subject.is_empty()
    }
}

pub fn sha1_digest(data: &[u8]) -> [u8; 20] {
    Sha1::digest(data).into()
}

/// RSASSA-PKCS1-v1_5 over SHA-1(data). Deterministic for a given key.
pub fn rsa_sha1_sign(data: &[u8], key: &KeyPair) -> Result<Vec<u8>, CryptoError> {
    let digest = sha1_digest(data);
    key.private_key
        .sign(Pkcs1v15Sign::new::<Sha1>(), &digest)
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))
}

/// True iff `signature` is a valid RSA-SHA1 signature over `data` under the
/// certificate's public key. Never fails: bad inputs are just `false`.
pub fn rsa_sha1_verify(data: &[u8], signature: &[u8], cert: &Certificate) -> bool {
    let digest = sha1_digest(data);
    cert.public_key
        .verify(Pkcs1v15Sign::new::<Sha1>(), &digest, signature)
        .is_ok()
}

/// Body ciphertext plus the key material the recipient needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedPayload {
    /// RSA-OAEP (SHA-1) encryption of the fresh AES-256 content key.
    pub encrypted_key: Vec<u8>,
    pub iv: Vec<u8>,
    /// AES-256-CBC, PKCS#7 padded.
    pub ciphertext: Vec<u8>,
}

/// Encrypts with a fresh content key and IV per call.
pub fn encrypt_body(
    plaintext: &[u8],
    recipient_cert: &Certificate,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<EncryptedPayload, CryptoError> {
    assert!(!plaintext.is_empty(), "plaintext must be non-empty");
    let mut content_key = [0u8; AES_KEY_LEN];
    rng.fill_bytes(&mut content_key);
    let mut iv = [0u8; AES_IV_LEN];
    rng.fill_bytes(&mut iv);

    let ciphertext = Aes256CbcEnc::new(&content_key.into(), &iv.into())
        .encrypt_padded_vec_mut::<Pkcs7>(plaintext);
    let encrypted_key = recipient_cert
        .public_key
        .encrypt(rng, Oaep::new::<Sha1>(), &content_key)
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    Ok(EncryptedPayload { encrypted_key, iv: iv.to_vec(), ciphertext })
}

/// Inverse of [`encrypt_body`] for the matching private key. Wrong keys,
/// corrupted ciphertext and bad padding all come back as
/// [`CryptoError::DecryptionFailed`].
pub fn decrypt_body(payload: &EncryptedPayload, key: &KeyPair) -> Result<Vec<u8>, CryptoError> {
    let content_key = key
        .private_key
        .decrypt(Oaep::new::<Sha1>(), &payload.encrypted_key)
        .map_err(|_| CryptoError::DecryptionFailed)?;
    if content_key.len() != AES_KEY_LEN || payload.iv.len() != AES_IV_LEN {
        return Err(CryptoError::DecryptionFailed);
    }
    let key_arr: [u8; AES_KEY_LEN] = content_key.as_slice().try_into().unwrap();
    let iv_arr: [u8; AES_IV_LEN] = payload.iv.as_slice().try_into().unwrap();
    Aes256CbcDec::new(&key_arr.into(), &iv_arr.into())
        .decrypt_padded_vec_mut::<Pkcs7>(&payload.ciphertext)
        .map_err(|_| CryptoError::DecryptionFailed)
}

/// Generates a fresh 2048-bit key pair with a self-signed certificate for
/// `subject`, valid for 365 days from now.
pub fn generate_self_signed(
    subject: &str,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<KeyPair, CryptoError> {
    let private_key = RsaPrivateKey::new(rng, RSA_KEY_BITS)
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    let signer = rsa::pkcs1v15::SigningKey::<Sha1>::new(private_key.clone());

    let name = Name::from_str(&format!("CN={subject}"))
        .map_err(|e| CryptoError::KeyUnusable(format!("bad subject {subject:?}: {e}")))?;
    let mut serial = [0u8; 16];
    rng.fill_bytes(&mut serial);
    serial[0] &= 0x7f; // keep the DER integer positive
    let spki_der = RsaPublicKey::from(&private_key)
        .to_public_key_der()
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    let spki = SubjectPublicKeyInfoOwned::from_der(spki_der.as_bytes())
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    let validity = Validity::from_now(Duration::from_secs(365 * 24 * 3600))
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    let builder = CertificateBuilder::new(
        Profile::Leaf {
            issuer: name.clone(),
            enable_key_agreement: false,
            enable_key_encipherment: true,
        },
        SerialNumber::new(&serial).map_err(|e| CryptoError::KeyUnusable(e.to_string()))?,
        validity,
        name,
        spki,
        &signer,
    )
    .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    let cert = builder
        .build::<rsa::pkcs1v15::Signature>()
        .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    let der = cert.to_der().map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
    KeyPair::new(private_key, Certificate::from_der(&der)?)
}

/// Writes `<subject>.key.pem` / `<subject>.cert.pem` pairs for each subject
/// and returns the paths written.
pub fn keygen(
    out_dir: &Path,
    subjects: &[String],
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Vec<PathBuf>, CryptoError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for subject in subjects {
        let pair = generate_self_signed(subject, rng)?;
        let key_pem = pair
            .private_key
            .to_pkcs8_pem(LineEnding::LF)
            .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;
        let cert = x509_cert::Certificate::from_der(pair.certificate.der())
            .expect("roundtrips: just encoded");
        let cert_pem = cert
            .to_pem(LineEnding::LF)
            .map_err(|e| CryptoError::KeyUnusable(e.to_string()))?;

        let key_path = out_dir.join(format!("{subject}.key.pem"));
        let cert_path = out_dir.join(format!("{subject}.cert.pem"));
        fs::File::create(&key_path)?.write_all(key_pem.as_bytes())?;
        fs::File::create(&cert_path)?.write_all(cert_pem.as_bytes())?;
        written.push(key_path);
        written.push(cert_path);
    }
    Ok(written)
}

/// Length-constant byte comparison: the full XOR fold always runs, with no
/// early exit on the first differing byte.
pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b.iter()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
