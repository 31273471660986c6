#![forbid(unsafe_code)]

//! Message-level security for SOAP over plain HTTP: authentication and
//! integrity without transport confidentiality.
//!
//! The crate provides the pieces end to end: an XML model with a fixed
//! canonical form ([`xml`]), the crypto primitives ([`crypto`]), WS-Security
//! style credentials ([`tokens`]), envelope assembly and verification under
//! four security policies ([`envelope`]), a signed non-encrypted session
//! handshake ([`session`]), and an HTTP service, client and load harness
//! ([`service`], [`client`], [`bench`]).
//!
//! Start with the `examples/` directory; each file is a runnable tour of one
//! capability.

pub mod crypto;
pub mod ns;
pub mod tokens;
pub mod xml;

pub use crypto::{Certificate, CryptoError, KeyPair, TrustStore};
pub use xml::{XmlDocument, XmlElement, XmlError, XmlName, XmlNode};
