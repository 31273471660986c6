//! WS-Security credential elements: `UsernameToken` with a hashed password,
//! `BinarySecurityToken` carrying an X.509 certificate, and `Timestamp`,
//! plus the server-side pieces for validating them (user store, nonce
//! replay cache).

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use base64::prelude::*;
use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use rand::{CryptoRng, RngCore};
use sha1::{Digest, Sha1};

use crate::crypto::{constant_time_eq, Certificate};
use crate::ns;
use crate::xml::{XmlElement, XmlName};

pub const NONCE_LEN: usize = 16;
/// Timestamp lifetime: expires − created.
pub const DEFAULT_TIMESTAMP_LIFETIME_S: i64 = 300;
/// Accepted clock difference when checking `Created` fields.
pub const DEFAULT_CLOCK_SKEW_S: i64 = 300;
/// Nonce cache retention; at least twice the skew so a replayed nonce can
/// never outlive its freshness check.
pub const DEFAULT_NONCE_WINDOW_S: i64 = 600;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// `YYYY-MM-DDThh:mm:ssZ`, second precision.
pub fn format_timestamp(at: DateTime<Utc>) -> String {
    at.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|naive| naive.and_utc())
}

/// Concatenation order of the password-digest preimage.
///
/// `Paper` is password ‖ nonce ‖ created; `Oasis` is the standard
/// nonce ‖ created ‖ password. Both peers must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DigestOrder {
    #[default]
    Paper,
    Oasis,
}

impl DigestOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(Self::Paper),
            "oasis" => Some(Self::Oasis),
            _ => None,
        }
    }
}

/// base64(SHA-1(preimage)) where the preimage uses the raw nonce bytes (not
/// their base64 form) in the configured order.
pub fn password_digest(password: &str, nonce: &[u8], created: &str, order: DigestOrder) -> String {
    let mut hasher = Sha1::new();
    match order {
        DigestOrder::Paper => {
            hasher.update(password.as_bytes());
            hasher.update(nonce);
            hasher.update(created.as_bytes());
        }
        DigestOrder::Oasis => {
            hasher.update(nonce);
            hasher.update(created.as_bytes());
            hasher.update(password.as_bytes());
        }
    }
    BASE64_STANDARD.encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsernameToken {
    pub username: String,
    /// base64 digest as transmitted.
    pub password_digest: String,
    pub nonce: [u8; NONCE_LEN],
    /// Creation time exactly as transmitted (it is part of the digest
    /// preimage, so the string form is kept).
    pub created: String,
}

pub fn make_username_token(
    username: &str,
    password: &str,
    now: DateTime<Utc>,
    order: DigestOrder,
    rng: &mut (impl RngCore + CryptoRng),
) -> UsernameToken {
    assert!(!username.is_empty() && !password.is_empty());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let created = format_timestamp(now);
    let password_digest = password_digest(password, &nonce, &created, order);
    UsernameToken { username: username.to_string(), password_digest, nonce, created }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TokenReject {
    #[error("UnknownUser")]
    UnknownUser,
    #[error("BadDigest")]
    BadDigest,
    #[error("StaleCreated")]
    StaleCreated,
    #[error("ReplayedNonce")]
    ReplayedNonce,
}

/// Full validation pipeline: user lookup, digest recomputation
/// (length-constant comparison), freshness within `skew`, then the atomic
/// nonce check-and-insert. The nonce enters the cache only on acceptance.
pub fn validate_username_token(
    token: &UsernameToken,
    store: &UserStore,
    cache: &NonceCache,
    now: DateTime<Utc>,
    skew: Duration,
    order: DigestOrder,
) -> Result<(), TokenReject> {
    let password = store.password(&token.username).ok_or(TokenReject::UnknownUser)?;
    let expected = password_digest(password, &token.nonce, &token.created, order);
    if !constant_time_eq(expected.as_bytes(), token.password_digest.as_bytes()) {
        return Err(TokenReject::BadDigest);
    }
    let created = parse_timestamp(&token.created).ok_or(TokenReject::StaleCreated)?;
    if (now - created).abs() > skew {
        return Err(TokenReject::StaleCreated);
    }
    if !cache.check_and_insert(&token.nonce, now) {
        return Err(TokenReject::ReplayedNonce);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySecurityToken {
    /// `wsu:Id`, the signature's KeyInfo reference target.
    pub id: String,
    /// DER-encoded X.509 certificate.
    pub certificate_der: Vec<u8>,
}

impl BinarySecurityToken {
    pub const VALUE_TYPE: &'static str = "wsse:X509v3";
    pub const ENCODING_TYPE: &'static str = "wsse:Base64Binary";

    pub fn new(id: impl Into<String>, certificate: &Certificate) -> Self {
        Self { id: id.into(), certificate_der: certificate.der().to_vec() }
    }

    pub fn certificate(&self) -> Result<Certificate, TokenParseError> {
        Certificate::from_der(&self.certificate_der)
            .map_err(|e| TokenParseError(format!("token certificate: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timestamp {
    pub created: DateTime<Utc>,
    pub expires: DateTime<Utc>,
}

impl Timestamp {
    pub fn new(now: DateTime<Utc>, lifetime: Duration) -> Self {
        Self { created: now, expires: now + lifetime }
    }

    /// `now` within `[created − skew, expires + skew]`.
    pub fn fresh_at(&self, now: DateTime<Utc>, skew: Duration) -> bool {
        self.created - skew <= now && now <= self.expires + skew
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("token parse error: {0}")]
pub struct TokenParseError(pub String);

fn wsse(local: &str) -> XmlName {
    XmlName::new(ns::WSSE, "wsse", local)
}

fn wsu(local: &str) -> XmlName {
    XmlName::new(ns::WSU, "wsu", local)
}

impl UsernameToken {
    /// Children in the fixed order Username, Password, Nonce, Created.
    pub fn to_xml(&self) -> XmlElement {
        XmlElement::new(wsse("UsernameToken"))
            .with_child(XmlElement::new(wsse("Username")).with_text(&self.username))
            .with_child(
                XmlElement::new(wsse("Password"))
                    .with_attr(XmlName::local("Type"), "PasswordDigest")
                    .with_text(&self.password_digest),
            )
            .with_child(
                XmlElement::new(wsse("Nonce")).with_text(BASE64_STANDARD.encode(self.nonce)),
            )
            .with_child(XmlElement::new(wsse("Created")).with_text(&self.created))
    }

    pub fn from_xml(elem: &XmlElement) -> Result<Self, TokenParseError> {
        if !elem.name.matches(ns::WSSE, "UsernameToken") {
            return Err(TokenParseError(format!("expected UsernameToken, got {}", elem.name)));
        }
        let children = element_children(elem, "UsernameToken")?;
        let [username, password, nonce, created] = exactly::<4>(&children, "UsernameToken")?;
        expect_name(username, "Username")?;
        expect_name(password, "Password")?;
        expect_name(nonce, "Nonce")?;
        expect_name(created, "Created")?;
        if password.attr("", "Type") != Some("PasswordDigest") {
            return Err(TokenParseError("Password Type must be PasswordDigest".into()));
        }
        let nonce_bytes = decode_b64(&nonce.text())?;
        let nonce: [u8; NONCE_LEN] = nonce_bytes
            .try_into()
            .map_err(|_| TokenParseError("nonce must be 16 bytes".into()))?;
        let created = created.text();
        if parse_timestamp(&created).is_none() {
            return Err(TokenParseError(format!("bad Created timestamp {created:?}")));
        }
        Ok(Self {
            username: username.text(),
            password_digest: password.text(),
            nonce,
            created,
        })
    }
}

impl BinarySecurityToken {
    pub fn to_xml(&self) -> XmlElement {
        XmlElement::new(wsse("BinarySecurityToken"))
            .with_attr(XmlName::local("ValueType"), Self::VALUE_TYPE)
            .with_attr(XmlName::local("EncodingType"), Self::ENCODING_TYPE)
            .with_attr(wsu("Id"), &self.id)
            .with_text(BASE64_STANDARD.encode(&self.certificate_der))
    }

    pub fn from_xml(elem: &XmlElement) -> Result<Self, TokenParseError> {
        if !elem.name.matches(ns::WSSE, "BinarySecurityToken") {
            return Err(TokenParseError(format!(
                "expected BinarySecurityToken, got {}",
                elem.name
            )));
        }
        if elem.attr("", "ValueType") != Some(Self::VALUE_TYPE) {
            return Err(TokenParseError("unsupported ValueType".into()));
        }
        if elem.attr("", "EncodingType") != Some(Self::ENCODING_TYPE) {
            return Err(TokenParseError("unsupported EncodingType".into()));
        }
        let id = elem
            .attr(ns::WSU, "Id")
            .ok_or_else(|| TokenParseError("BinarySecurityToken missing wsu:Id".into()))?;
        if id.is_empty() {
            return Err(TokenParseError("BinarySecurityToken wsu:Id is empty".into()));
        }
        if elem.child_elements().next().is_some() {
            return Err(TokenParseError("BinarySecurityToken must hold only text".into()));
        }
        let der = decode_b64(&elem.text())?;
        let token = Self { id: id.to_string(), certificate_der: der };
        token.certificate()?; // must decode to a certificate
        Ok(token)
    }
}

impl Timestamp {
    pub fn to_xml(&self) -> XmlElement {
        XmlElement::new(wsu("Timestamp"))
            .with_child(
                XmlElement::new(wsu("Created")).with_text(format_timestamp(self.created)),
            )
            .with_child(
                XmlElement::new(wsu("Expires")).with_text(format_timestamp(self.expires)),
            )
    }

    pub fn from_xml(elem: &XmlElement) -> Result<Self, TokenParseError> {
        if !elem.name.matches(ns::WSU, "Timestamp") {
            return Err(TokenParseError(format!("expected Timestamp, got {}", elem.name)));
        }
        let children = element_children(elem, "Timestamp")?;
        let [created, expires] = exactly::<2>(&children, "Timestamp")?;
        expect_name(created, "Created")?;
        expect_name(expires, "Expires")?;
        let created = parse_timestamp(&created.text())
            .ok_or_else(|| TokenParseError("bad Created".into()))?;
        let expires = parse_timestamp(&expires.text())
            .ok_or_else(|| TokenParseError("bad Expires".into()))?;
        if created >= expires {
            return Err(TokenParseError("Created must precede Expires".into()));
        }
        Ok(Self { created, expires })
    }
}

fn element_children<'a>(
    elem: &'a XmlElement,
    what: &str,
) -> Result<Vec<&'a XmlElement>, TokenParseError> {
    if !elem.has_only_element_content() {
        return Err(TokenParseError(format!("{what} has stray text content")));
    }
    Ok(elem.child_elements().collect())
}

fn exactly<'a, const N: usize>(
    children: &[&'a XmlElement],
    what: &str,
) -> Result<[&'a XmlElement; N], TokenParseError> {
    <[&XmlElement; N]>::try_from(children.to_vec())
        .map_err(|_| TokenParseError(format!("{what} must have exactly {N} children")))
}

fn expect_name(elem: &XmlElement, local: &str) -> Result<(), TokenParseError> {
    let ok = (elem.name.matches(ns::WSSE, local) || elem.name.matches(ns::WSU, local))
        && elem.child_elements().next().is_none();
    if ok {
        Ok(())
    } else {
        Err(TokenParseError(format!("expected <{local}> element, got {}", elem.name)))
    }
}

fn decode_b64(text: &str) -> Result<Vec<u8>, TokenParseError> {
    let compact: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    BASE64_STANDARD
        .decode(compact)
        .map_err(|e| TokenParseError(format!("bad base64: {e}")))
}

/// Seen nonces with their insertion times. `check_and_insert` is the atomic
/// check used during validation; entries older than the window are purged
/// opportunistically.
#[derive(Debug)]
pub struct NonceCache {
    window: Duration,
    entries: Mutex<HashMap<Vec<u8>, DateTime<Utc>>>,
}

impl Default for NonceCache {
    fn default() -> Self {
        Self::new(Duration::seconds(DEFAULT_NONCE_WINDOW_S))
    }
}

impl NonceCache {
    pub fn new(window: Duration) -> Self {
        Self { window, entries: Mutex::new(HashMap::new()) }
    }

    /// Returns false (and leaves the cache unchanged) if the nonce is
    /// already present; otherwise records it and returns true.
    pub fn check_and_insert(&self, nonce: &[u8], now: DateTime<Utc>) -> bool {
        let mut entries = self.entries.lock().unwrap();
        entries.retain(|_, inserted| now - *inserted <= self.window);
        if entries.contains_key(nonce) {
            return false;
        }
        entries.insert(nonce.to_vec(), now);
        true
    }

    pub fn contains(&self, nonce: &[u8]) -> bool {
        self.entries.lock().unwrap().contains_key(nonce)
    }

    pub fn purge(&self, now: DateTime<Utc>) {
        self.entries
            .lock()
            .unwrap()
            .retain(|_, inserted| now - *inserted <= self.window);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("user store error: {0}")]
pub struct UserStoreError(String);

/// username → clear-text password. Digest recomputation needs the clear
/// password, so this scheme cannot work against hashed storage; treat the
/// file accordingly.
#[derive(Debug, Default, Clone)]
pub struct UserStore {
    users: HashMap<String, String>,
}

impl UserStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, username: &str, password: &str) -> Result<(), UserStoreError> {
        if username.is_empty() {
            return Err(UserStoreError("empty username".into()));
        }
        if self.users.contains_key(username) {
            return Err(UserStoreError(format!("duplicate username {username:?}")));
        }
        self.users.insert(username.to_string(), password.to_string());
        Ok(())
    }

    /// `username:password` per line; `#` comments and blank lines allowed.
    /// The first colon splits, so passwords may contain colons.
    pub fn from_text(text: &str) -> Result<Self, UserStoreError> {
        let mut store = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (user, pass) = line
                .split_once(':')
                .ok_or_else(|| UserStoreError(format!("line {}: missing ':'", lineno + 1)))?;
            store.insert(user, pass)?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, UserStoreError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UserStoreError(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn password(&self, username: &str) -> Option<&str> {
        self.users.get(username).map(String::as_str)
    }

    pub fn usernames(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }
}
