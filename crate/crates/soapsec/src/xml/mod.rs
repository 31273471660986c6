//! Minimal XML document model used as the substrate for message security.
//!
//! The model is an ordered element tree with namespaces, attributes and text.
//! Comments, processing instructions, DTDs and CDATA are outside the supported
//! subset and are rejected at parse time, which keeps the canonical form (see
//! [`c14n`]) unambiguous.
//!
//! All types are plain immutable values once built; operations are pure.

mod c14n;
mod parser;

pub use c14n::canonicalize;
pub use parser::parse;

use std::fmt;

/// Implicit binding for the reserved `xml` prefix.
pub const XML_NAMESPACE: &str = "http://www.w3.org/XML/1998/namespace";

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum XmlError {
    #[error("malformed xml at byte {position}: {reason}")]
    Malformed { position: usize, reason: String },
    #[error("unsupported construct at byte {position}: {construct}")]
    Unsupported { position: usize, construct: String },
}

/// Expanded name: resolved namespace URI plus the lexical prefix it was
/// written with. Equality and ordering ignore the prefix.
#[derive(Debug, Clone)]
pub struct XmlName {
    pub namespace_uri: String,
    pub local_name: String,
    pub prefix: String,
}

impl XmlName {
    /// Name with no namespace and no prefix.
    pub fn local(local_name: &str) -> Self {
        Self::new("", "", local_name)
    }

    /// Panics if `local_name` is not an NCName or `prefix` is set without a
    /// namespace; those are programming errors, not input errors.
    pub fn new(namespace_uri: &str, prefix: &str, local_name: &str) -> Self {
        assert!(is_ncname(local_name), "invalid local name {local_name:?}");
        assert!(prefix.is_empty() || is_ncname(prefix), "invalid prefix {prefix:?}");
        assert!(
            prefix.is_empty() || !namespace_uri.is_empty(),
            "prefix {prefix:?} requires a namespace uri"
        );
        Self {
            namespace_uri: namespace_uri.to_string(),
            local_name: local_name.to_string(),
            prefix: prefix.to_string(),
        }
    }

    /// The name as written in a tag: `prefix:local` or bare `local`.
    pub fn qualified(&self) -> String {
        if self.prefix.is_empty() {
            self.local_name.clone()
        } else {
            format!("{}:{}", self.prefix, self.local_name)
        }
    }

    pub fn matches(&self, namespace_uri: &str, local_name: &str) -> bool {
        self.namespace_uri == namespace_uri && self.local_name == local_name
    }
}

impl PartialEq for XmlName {
    fn eq(&self, other: &Self) -> bool {
        self.namespace_uri == other.namespace_uri && self.local_name == other.local_name
    }
}

impl Eq for XmlName {}

impl fmt::Display for XmlName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.qualified())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlNode {
    Element(XmlElement),
    Text(String),
}

/// One element: name, attributes and namespace declarations in document
/// order, and child nodes.
///
/// Equality is structural: prefixes, attribute order and namespace
/// declaration placement are ignored; resolved names, attribute values and
/// child order matter.
#[derive(Debug, Clone)]
pub struct XmlElement {
    pub name: XmlName,
    pub attributes: Vec<(XmlName, String)>,
    /// `(prefix, uri)` pairs; empty prefix is the default namespace.
    pub namespace_declarations: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

impl XmlElement {
    pub fn new(name: XmlName) -> Self {
        Self {
            name,
            attributes: Vec::new(),
            namespace_declarations: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_attr(mut self, name: XmlName, value: impl Into<String>) -> Self {
        self.set_attr(name, value);
        self
    }

    pub fn with_decl(mut self, prefix: &str, uri: &str) -> Self {
        self.namespace_declarations.push((prefix.to_string(), uri.to_string()));
        self
    }

    pub fn with_child(mut self, child: XmlElement) -> Self {
        self.children.push(XmlNode::Element(child));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.children.push(XmlNode::Text(text.into()));
        self
    }

    pub fn set_attr(&mut self, name: XmlName, value: impl Into<String>) {
        debug_assert!(
            !self.attributes.iter().any(|(n, _)| *n == name),
            "duplicate attribute {name}"
        );
        self.attributes.push((name, value.into()));
    }

    pub fn push_child(&mut self, child: XmlElement) {
        self.children.push(XmlNode::Element(child));
    }

    pub fn attr(&self, namespace_uri: &str, local_name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n.matches(namespace_uri, local_name))
            .map(|(_, v)| v.as_str())
    }

    /// Direct text content, concatenated.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for child in &self.children {
            if let XmlNode::Text(t) = child {
                out.push_str(t);
            }
        }
        out
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &XmlElement> {
        self.children.iter().filter_map(|c| match c {
            XmlNode::Element(e) => Some(e),
            XmlNode::Text(_) => None,
        })
    }

    pub fn find_child(&self, namespace_uri: &str, local_name: &str) -> Option<&XmlElement> {
        self.child_elements().find(|e| e.name.matches(namespace_uri, local_name))
    }

    /// True if every child is whitespace-only text or an element. Token and
    /// header parsers use this to tolerate indentation but nothing else.
    pub fn has_only_element_content(&self) -> bool {
        self.children.iter().all(|c| match c {
            XmlNode::Element(_) => true,
            XmlNode::Text(t) => t.chars().all(|ch| ch.is_ascii_whitespace()),
        })
    }
}

impl PartialEq for XmlElement {
    fn eq(&self, other: &Self) -> bool {
        if self.name != other.name || self.children != other.children {
            return false;
        }
        if self.attributes.len() != other.attributes.len() {
            return false;
        }
        let mut a: Vec<_> = self.attributes.iter().collect();
        let mut b: Vec<_> = other.attributes.iter().collect();
        let key = |(n, v): &&(XmlName, String)| {
            (n.namespace_uri.clone(), n.local_name.clone(), v.clone())
        };
        a.sort_by_key(key);
        b.sort_by_key(key);
        a == b
    }
}

impl Eq for XmlElement {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlDocument {
    pub root: XmlElement,
}

/// Serializes with attributes and namespace declarations in stored order.
/// Empty elements use the `<x/>` form; the canonical path in [`c14n`] never
/// does. Output always parses back to a structurally equal tree provided
/// every prefix in the tree is declared.
pub fn serialize(doc: &XmlDocument) -> Vec<u8> {
    let mut out = String::new();
    write_element(&mut out, &doc.root);
    out.into_bytes()
}

/// Same as [`serialize`] but for a detached element.
pub fn serialize_element(elem: &XmlElement) -> Vec<u8> {
    let mut out = String::new();
    write_element(&mut out, elem);
    out.into_bytes()
}

fn write_element(out: &mut String, elem: &XmlElement) {
    out.push('<');
    out.push_str(&elem.name.qualified());
    for (prefix, uri) in &elem.namespace_declarations {
        out.push(' ');
        if prefix.is_empty() {
            out.push_str("xmlns=\"");
        } else {
            out.push_str("xmlns:");
            out.push_str(prefix);
            out.push_str("=\"");
        }
        escape_attr_value(out, uri);
        out.push('"');
    }
    for (name, value) in &elem.attributes {
        out.push(' ');
        out.push_str(&name.qualified());
        out.push_str("=\"");
        escape_attr_value(out, value);
        out.push('"');
    }
    if elem.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for child in &elem.children {
        match child {
            XmlNode::Element(e) => write_element(out, e),
            XmlNode::Text(t) => escape_text(out, t),
        }
    }
    out.push_str("</");
    out.push_str(&elem.name.qualified());
    out.push('>');
}

pub(crate) fn escape_text(out: &mut String, text: &str) {
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#xD;"),
            other => out.push(other),
        }
    }
}

pub(crate) fn escape_attr_value(out: &mut String, value: &str) {
    for ch in value.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#x9;"),
            '\n' => out.push_str("&#xA;"),
            '\r' => out.push_str("&#xD;"),
            other => out.push(other),
        }
    }
}

pub(crate) fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        None => return false,
        Some(c) if c.is_ascii_alphabetic() || c == '_' || !c.is_ascii() => {}
        Some(_) => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') || !c.is_ascii())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(root: XmlElement) -> XmlDocument {
        XmlDocument { root }
    }

    #[test]
    fn empty_element_serializes_compact() {
        let d = doc(XmlElement::new(XmlName::local("a")));
        assert_eq!(serialize(&d), b"<a/>");
    }

    #[test]
    fn password_attribute_shape() {
        let d = doc(
            XmlElement::new(XmlName::local("Password"))
                .with_attr(XmlName::local("Type"), "PasswordDigest")
                .with_text("fmdsf7sM0="),
        );
        assert_eq!(
            serialize(&d),
            b"<Password Type=\"PasswordDigest\">fmdsf7sM0=</Password>"
        );
    }

    #[test]
    fn structural_equality_ignores_attr_order_and_prefix() {
        let a = XmlElement::new(XmlName::new("urn:x", "p", "e"))
            .with_attr(XmlName::local("a"), "1")
            .with_attr(XmlName::local("b"), "2");
        let b = XmlElement::new(XmlName::new("urn:x", "q", "e"))
            .with_decl("q", "urn:x")
            .with_attr(XmlName::local("b"), "2")
            .with_attr(XmlName::local("a"), "1");
        assert_eq!(a, b);
    }

    #[test]
    fn structural_equality_respects_text_and_child_order() {
        let a = XmlElement::new(XmlName::local("e")).with_text("1").with_text("2");
        let b = XmlElement::new(XmlName::local("e")).with_text("2").with_text("1");
        assert_ne!(a, b);
    }

    #[test]
    fn ncname_rules() {
        assert!(is_ncname("Nr"));
        assert!(is_ncname("_x-1.y"));
        assert!(!is_ncname(""));
        assert!(!is_ncname("1a"));
        assert!(!is_ncname("a:b"));
        assert!(!is_ncname("a b"));
    }
}
