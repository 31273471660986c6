//! Canonical byte form of an element subtree, the substrate digests and
//! signatures are computed over.
//!
//! This is a fixed project-defined form, applied identically by signer and
//! verifier; it is not Canonical XML 1.0 or Exclusive C14N. Rules:
//!
//! 1. UTF-8 output.
//! 2. Attributes sorted by (namespace URI, local name), code-point order.
//! 3. Namespace declarations are re-derived from the resolved names: a
//!    binding is emitted on the element where its prefix is first visibly
//!    used (element name, or a prefixed attribute), sorted by prefix and
//!    placed before attributes. Declarations that are never visibly used
//!    are dropped; a binding already rendered by an ancestor (or assumed
//!    via `inherited_namespaces`) is not repeated unless rebound.
//! 4. Empty elements are rendered as `<x></x>`, never `<x/>`.
//! 5. Text escapes `&` `<` `>` and CR; attribute values additionally
//!    escape `"`, TAB and LF.
//! 6. Text is otherwise byte-preserved: no whitespace or line-ending
//!    normalization.

use std::collections::BTreeMap;

use super::{escape_attr_value, escape_text, XmlElement, XmlError, XmlNode, XML_NAMESPACE};

/// Canonical bytes of `elem` and its subtree.
///
/// `inherited_namespaces` lists `(prefix, uri)` bindings the surrounding
/// context is assumed to have rendered already. Signature digests always use
/// an empty list so the canonical form is self-contained.
pub fn canonicalize(
    elem: &XmlElement,
    inherited_namespaces: &[(String, String)],
) -> Result<Vec<u8>, XmlError> {
    let mut rendered: BTreeMap<String, String> = BTreeMap::new();
    rendered.insert(String::new(), String::new());
    rendered.insert("xml".to_string(), XML_NAMESPACE.to_string());
    for (prefix, uri) in inherited_namespaces {
        rendered.insert(prefix.clone(), uri.clone());
    }
    let mut out = String::new();
    write_canonical(&mut out, elem, &rendered)?;
    Ok(out.into_bytes())
}

fn write_canonical(
    out: &mut String,
    elem: &XmlElement,
    rendered: &BTreeMap<String, String>,
) -> Result<(), XmlError> {
    // Bindings this element visibly uses: its own name plus prefixed attributes.
    let mut needed: BTreeMap<&str, &str> = BTreeMap::new();
    needed.insert(elem.name.prefix.as_str(), elem.name.namespace_uri.as_str());
    for (name, _) in &elem.attributes {
        if name.prefix.is_empty() {
            continue;
        }
        if let Some(existing) = needed.get(name.prefix.as_str()) {
            if *existing != name.namespace_uri {
                return Err(XmlError::Unsupported {
                    position: 0,
                    construct: format!(
                        "conflicting bindings for prefix {:?} on one element",
                        name.prefix
                    ),
                });
            }
        } else {
            needed.insert(name.prefix.as_str(), name.namespace_uri.as_str());
        }
    }

    let mut scope = rendered.clone();
    let mut declarations: Vec<(&str, &str)> = Vec::new();
    for (prefix, uri) in &needed {
        if *prefix == "xml" {
            if *uri != XML_NAMESPACE {
                return Err(XmlError::Unsupported {
                    position: 0,
                    construct: "the xml prefix bound to a foreign uri".into(),
                });
            }
            continue;
        }
        if !prefix.is_empty() && uri.is_empty() {
            return Err(XmlError::Unsupported {
                position: 0,
                construct: format!("prefix {prefix:?} without a namespace uri"),
            });
        }
        if scope.get(*prefix).map(String::as_str) != Some(*uri) {
            declarations.push((prefix, uri));
            scope.insert(prefix.to_string(), uri.to_string());
        }
    }

    out.push('<');
    out.push_str(&elem.name.qualified());
    for (prefix, uri) in declarations {
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
    let mut attrs: Vec<&(super::XmlName, String)> = elem.attributes.iter().collect();
    attrs.sort_by(|(a, _), (b, _)| {
        (a.namespace_uri.as_str(), a.local_name.as_str())
            .cmp(&(b.namespace_uri.as_str(), b.local_name.as_str()))
    });
    for (name, value) in attrs {
        out.push(' ');
        out.push_str(&name.qualified());
        out.push_str("=\"");
        escape_attr_value(out, value);
        out.push('"');
    }
    out.push('>');
    for child in &elem.children {
        match child {
            XmlNode::Element(e) => write_canonical(out, e, &scope)?,
            XmlNode::Text(t) => escape_text(out, t),
        }
    }
    out.push_str("</");
    out.push_str(&elem.name.qualified());
    out.push('>');
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{parse, XmlName};
    use super::*;

    fn c14n(input: &str) -> String {
        let doc = parse(input.as_bytes()).unwrap();
        String::from_utf8(canonicalize(&doc.root, &[]).unwrap()).unwrap()
    }

    #[test]
    fn attributes_sorted_and_empty_form_expanded() {
        assert_eq!(c14n(r#"<a z="1" b="2"/>"#), r#"<a b="2" z="1"></a>"#);
    }

    #[test]
    fn text_escaping() {
        assert_eq!(c14n("<a>x&lt;y</a>"), "<a>x&lt;y</a>");
        assert_eq!(c14n("<a>x&gt;y></a>"), "<a>x&gt;y&gt;</a>");
    }

    #[test]
    fn unused_declarations_dropped() {
        assert_eq!(
            c14n(r#"<r xmlns:p="urn:p"><p:c/></r>"#),
            r#"<r><p:c xmlns:p="urn:p"></p:c></r>"#
        );
    }

    #[test]
    fn inherited_namespaces_not_reemitted() {
        let doc = parse(br#"<p:a xmlns:p="urn:p"/>"#).unwrap();
        let inherited = vec![("p".to_string(), "urn:p".to_string())];
        assert_eq!(canonicalize(&doc.root, &inherited).unwrap(), b"<p:a></p:a>");
        // ...unless the subtree rebinds the prefix.
        let other = vec![("p".to_string(), "urn:other".to_string())];
        assert_eq!(
            canonicalize(&doc.root, &other).unwrap(),
            br#"<p:a xmlns:p="urn:p"></p:a>"#
        );
    }

    #[test]
    fn idempotent_through_reparse() {
        let first = c14n(r#"<s:a xmlns:s="urn:s" c="2" b="1"><x/>text</s:a>"#);
        let doc = parse(first.as_bytes()).unwrap();
        let second = String::from_utf8(canonicalize(&doc.root, &[]).unwrap()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn conflicting_prefix_bindings_rejected() {
        let elem = XmlElement::new(XmlName::new("urn:1", "p", "e"))
            .with_attr(XmlName::new("urn:2", "p", "k"), "v");
        assert!(matches!(
            canonicalize(&elem, &[]),
            Err(XmlError::Unsupported { .. })
        ));
    }
}
