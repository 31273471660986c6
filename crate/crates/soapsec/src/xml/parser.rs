//! Strict parser for the supported XML subset.
//!
//! Accepted: one root element, namespaces, attributes (single or double
//! quoted), character data with the five predefined entities and numeric
//! character references, an optional leading XML declaration and UTF-8 BOM.
//!
//! Rejected: comments, CDATA, DTDs and processing instructions
//! ([`XmlError::Unsupported`]); everything else ill-formed is
//! [`XmlError::Malformed`] with a byte position. No attribute-value or
//! line-ending normalization is applied: bytes are preserved as written.

use super::{is_ncname, XmlDocument, XmlElement, XmlError, XmlName, XmlNode, XML_NAMESPACE};

const MAX_DEPTH: usize = 256;

pub fn parse(bytes: &[u8]) -> Result<XmlDocument, XmlError> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            return Err(XmlError::Malformed {
                position: e.valid_up_to(),
                reason: "invalid utf-8".into(),
            })
        }
    };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut parser = Parser { text, pos: 0 };
    parser.skip_xml_declaration()?;
    parser.skip_whitespace();
    if parser.rest().starts_with("<!--") {
        return parser.unsupported("comment");
    }
    if parser.rest().starts_with("<!") {
        return parser.unsupported("DTD");
    }
    if parser.rest().starts_with("<?") {
        return parser.unsupported("processing instruction");
    }
    if !parser.peek_is('<') {
        return parser.malformed("expected root element");
    }
    let scope = vec![("xml".to_string(), XML_NAMESPACE.to_string())];
    let root = parser.element(&scope, 0)?;
    parser.skip_whitespace();
    if !parser.rest().is_empty() {
        return parser.malformed("content after root element");
    }
    Ok(XmlDocument { root })
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek_is(&self, ch: char) -> bool {
        self.rest().starts_with(ch)
    }

    fn bump(&mut self, n: usize) {
        self.pos += n;
    }

    fn malformed<T>(&self, reason: impl Into<String>) -> Result<T, XmlError> {
        Err(XmlError::Malformed { position: self.pos, reason: reason.into() })
    }

    fn unsupported<T>(&self, construct: &str) -> Result<T, XmlError> {
        Err(XmlError::Unsupported { position: self.pos, construct: construct.into() })
    }

    fn skip_whitespace(&mut self) {
        let trimmed = self.rest().trim_start_matches([' ', '\t', '\r', '\n']);
        self.pos = self.text.len() - trimmed.len();
    }

    fn skip_xml_declaration(&mut self) -> Result<(), XmlError> {
        if self.rest().starts_with("<?xml") {
            match self.rest().find("?>") {
                Some(end) => self.bump(end + 2),
                None => return self.malformed("unterminated xml declaration"),
            }
        }
        Ok(())
    }

    fn ncname(&mut self) -> Result<&'a str, XmlError> {
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|(_, c)| {
                !(c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') || !c.is_ascii())
            })
            .map_or(rest.len(), |(i, _)| i);
        let name = &rest[..len];
        if !is_ncname(name) {
            return self.malformed(format!("invalid name {name:?}"));
        }
        self.bump(len);
        Ok(name)
    }

    /// `prefix:local` or `local`; no resolution yet.
    fn qname(&mut self) -> Result<(&'a str, &'a str), XmlError> {
        let first = self.ncname()?;
        if self.peek_is(':') {
            self.bump(1);
            let second = self.ncname()?;
            if self.peek_is(':') {
                return self.malformed("more than one colon in name");
            }
            Ok((first, second))
        } else {
            Ok(("", first))
        }
    }

    fn element(&mut self, scope: &[(String, String)], depth: usize) -> Result<XmlElement, XmlError> {
        if depth >= MAX_DEPTH {
            return self.malformed("element nesting too deep");
        }
        let start = self.pos;
        self.expect('<')?;
        let (prefix, local) = self.qname()?;

        let mut raw_attrs: Vec<(&str, &str, String, usize)> = Vec::new();
        let mut declarations: Vec<(String, String)> = Vec::new();
        let self_closing;
        loop {
            let had_space = {
                let before = self.pos;
                self.skip_whitespace();
                self.pos != before
            };
            if self.rest().starts_with("/>") {
                self.bump(2);
                self_closing = true;
                break;
            }
            if self.peek_is('>') {
                self.bump(1);
                self_closing = false;
                break;
            }
            if !had_space {
                return self.malformed("expected whitespace before attribute");
            }
            let attr_pos = self.pos;
            let (aprefix, alocal) = self.qname()?;
            self.expect('=')?;
            let value = self.attribute_value()?;
            if aprefix.is_empty() && alocal == "xmlns" {
                declarations.push((String::new(), value));
            } else if aprefix == "xmlns" {
                if alocal == "xml" && value != XML_NAMESPACE {
                    return self.malformed("the xml prefix cannot be rebound");
                }
                if alocal == "xmlns" {
                    return self.malformed("the xmlns prefix cannot be declared");
                }
                if value.is_empty() {
                    return self.malformed("cannot undeclare a prefix");
                }
                declarations.push((alocal.to_string(), value));
            } else {
                raw_attrs.push((aprefix, alocal, value, attr_pos));
            }
        }

        let mut local_scope: Vec<(String, String)> = scope.to_vec();
        local_scope.extend(declarations.iter().cloned());
        let lookup = |prefix: &str| -> Option<&str> {
            local_scope
                .iter()
                .rev()
                .find(|(p, _)| p == prefix)
                .map(|(_, u)| u.as_str())
        };

        let namespace_uri = match prefix {
            "" => lookup("").unwrap_or(""),
            p => match lookup(p) {
                Some(u) => u,
                None => {
                    return Err(XmlError::Malformed {
                        position: start,
                        reason: format!("unbound prefix {p:?}"),
                    })
                }
            },
        };
        let name = XmlName {
            namespace_uri: namespace_uri.to_string(),
            local_name: local.to_string(),
            prefix: prefix.to_string(),
        };

        let mut attributes: Vec<(XmlName, String)> = Vec::new();
        for (aprefix, alocal, value, attr_pos) in raw_attrs {
            let ns = if aprefix.is_empty() {
                "" // unprefixed attributes are in no namespace
            } else {
                match lookup(aprefix) {
                    Some(u) => u,
                    None => {
                        return Err(XmlError::Malformed {
                            position: attr_pos,
                            reason: format!("unbound prefix {aprefix:?}"),
                        })
                    }
                }
            };
            if attributes.iter().any(|(n, _)| n.matches(ns, alocal)) {
                return Err(XmlError::Malformed {
                    position: attr_pos,
                    reason: format!("duplicate attribute {alocal:?}"),
                });
            }
            let aname = XmlName {
                namespace_uri: ns.to_string(),
                local_name: alocal.to_string(),
                prefix: aprefix.to_string(),
            };
            attributes.push((aname, value));
        }

        let mut element = XmlElement {
            name,
            attributes,
            namespace_declarations: declarations,
            children: Vec::new(),
        };
        if self_closing {
            return Ok(element);
        }

        loop {
            if self.rest().is_empty() {
                return self.malformed(format!("unclosed element <{}>", element.name.qualified()));
            }
            if self.rest().starts_with("</") {
                self.bump(2);
                let (eprefix, elocal) = self.qname()?;
                if eprefix != element.name.prefix || elocal != element.name.local_name {
                    return self.malformed(format!(
                        "mismatched end tag: expected </{}>, found </{}{}{}>",
                        element.name.qualified(),
                        eprefix,
                        if eprefix.is_empty() { "" } else { ":" },
                        elocal
                    ));
                }
                self.skip_whitespace();
                self.expect('>')?;
                return Ok(element);
            }
            if self.rest().starts_with("<!--") {
                return self.unsupported("comment");
            }
            if self.rest().starts_with("<![CDATA[") {
                return self.unsupported("CDATA section");
            }
            if self.rest().starts_with("<!") {
                return self.unsupported("DTD");
            }
            if self.rest().starts_with("<?") {
                return self.unsupported("processing instruction");
            }
            if self.peek_is('<') {
                let child = self.element(&local_scope, depth + 1)?;
                element.children.push(XmlNode::Element(child));
            } else {
                let text = self.character_data()?;
                element.children.push(XmlNode::Text(text));
            }
        }
    }

    fn expect(&mut self, ch: char) -> Result<(), XmlError> {
        if self.peek_is(ch) {
            self.bump(ch.len_utf8());
            Ok(())
        } else {
            self.malformed(format!("expected {ch:?}"))
        }
    }

    fn attribute_value(&mut self) -> Result<String, XmlError> {
        let quote = match self.rest().chars().next() {
            Some(q @ ('"' | '\'')) => q,
            _ => return self.malformed("expected quoted attribute value"),
        };
        self.bump(1);
        let mut value = String::new();
        loop {
            let ch = match self.rest().chars().next() {
                Some(c) => c,
                None => return self.malformed("unterminated attribute value"),
            };
            match ch {
                c if c == quote => {
                    self.bump(1);
                    return Ok(value);
                }
                '<' => return self.malformed("'<' in attribute value"),
                '&' => value.push(self.reference()?),
                c => {
                    self.check_char(c)?;
                    value.push(c);
                    self.bump(c.len_utf8());
                }
            }
        }
    }

    /// Character data up to the next `<`.
    fn character_data(&mut self) -> Result<String, XmlError> {
        let mut text = String::new();
        loop {
            let ch = match self.rest().chars().next() {
                Some(c) => c,
                None => return Ok(text),
            };
            match ch {
                '<' => return Ok(text),
                '&' => text.push(self.reference()?),
                c => {
                    self.check_char(c)?;
                    text.push(c);
                    self.bump(c.len_utf8());
                }
            }
        }
    }

    fn check_char(&self, c: char) -> Result<(), XmlError> {
        if c < ' ' && !matches!(c, '\t' | '\n' | '\r') {
            return self.malformed(format!("control character U+{:04X}", c as u32));
        }
        Ok(())
    }

    /// `&name;` or `&#...;`, positioned on the `&`.
    fn reference(&mut self) -> Result<char, XmlError> {
        let rest = self.rest();
        let end = match rest.find(';') {
            Some(i) if i <= 12 => i,
            _ => return self.malformed("unterminated entity reference"),
        };
        let body = &rest[1..end];
        let ch = match body {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            _ => {
                let code = if let Some(hex) = body.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = body.strip_prefix('#') {
                    dec.parse::<u32>().ok()
                } else {
                    return self.malformed(format!("unknown entity &{body};"));
                };
                match code.and_then(char::from_u32) {
                    Some(c) if c == '\t' || c == '\n' || c == '\r' || c >= ' ' => c,
                    _ => return self.malformed(format!("invalid character reference &{body};")),
                }
            }
        };
        self.bump(end + 1);
        Ok(ch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let doc = parse(b"<a/>").unwrap();
        assert_eq!(doc.root.name.local_name, "a");
        assert!(doc.root.children.is_empty());
    }

    #[test]
    fn counter_element() {
        let doc = parse(b"<Nr>1</Nr>").unwrap();
        assert_eq!(doc.root.name.local_name, "Nr");
        assert_eq!(doc.root.text(), "1");
    }

    #[test]
    fn mismatched_tag_is_malformed() {
        let err = parse(b"<a><b/><a>").unwrap_err();
        assert!(matches!(err, XmlError::Malformed { .. }), "{err}");
    }

    #[test]
    fn namespace_resolution() {
        let doc = parse(br#"<p:a xmlns:p="urn:x" xmlns="urn:d"><b p:k="1"/></p:a>"#).unwrap();
        assert_eq!(doc.root.name.namespace_uri, "urn:x");
        let b = doc.root.child_elements().next().unwrap();
        assert_eq!(b.name.namespace_uri, "urn:d");
        assert_eq!(b.attr("urn:x", "k"), Some("1"));
        assert_eq!(b.attributes[0].1, "1");
    }

    #[test]
    fn unbound_prefix_rejected() {
        assert!(matches!(parse(b"<q:a/>"), Err(XmlError::Malformed { .. })));
        assert!(matches!(parse(b"<a q:k='1'/>"), Err(XmlError::Malformed { .. })));
    }

    #[test]
    fn duplicate_attribute_rejected() {
        let err = parse(br#"<a xmlns:p="urn:x" xmlns:q="urn:x" p:k="1" q:k="2"/>"#).unwrap_err();
        assert!(err.to_string().contains("duplicate attribute"));
    }

    #[test]
    fn unsupported_constructs() {
        for (input, what) in [
            (&b"<a><!-- hi --></a>"[..], "comment"),
            (b"<a><![CDATA[x]]></a>", "CDATA"),
            (b"<!DOCTYPE a><a/>", "DTD"),
            (b"<a><?pi data?></a>", "processing instruction"),
        ] {
            match parse(input) {
                Err(XmlError::Unsupported { construct, .. }) => {
                    assert!(construct.contains(what), "{construct} vs {what}")
                }
                other => panic!("expected Unsupported for {what}, got {other:?}"),
            }
        }
    }

    #[test]
    fn xml_declaration_and_bom_accepted() {
        let doc = parse("\u{feff}<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<a/>".as_bytes());
        assert!(doc.is_ok());
    }

    #[test]
    fn entities_and_char_refs() {
        let doc = parse(b"<a>&amp;&lt;&gt;&quot;&apos;&#65;&#x42;</a>").unwrap();
        assert_eq!(doc.root.text(), "&<>\"'AB");
    }

    #[test]
    fn invalid_references_rejected() {
        assert!(parse(b"<a>&nbsp;</a>").is_err());
        assert!(parse(b"<a>&#x0;</a>").is_err());
        assert!(parse(b"<a>&#xD800;</a>").is_err());
        assert!(parse(b"<a>&unterminated</a>").is_err());
    }

    #[test]
    fn content_after_root_rejected() {
        assert!(parse(b"<a/><b/>").is_err());
        assert!(parse(b"<a/>junk").is_err());
        assert!(parse(b"<a/>  \n").is_ok());
    }

    #[test]
    fn depth_limit() {
        let mut bomb = String::new();
        for _ in 0..300 {
            bomb.push_str("<a>");
        }
        let err = parse(bomb.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("too deep"));
    }

    #[test]
    fn control_characters_rejected() {
        assert!(parse(b"<a>\x01</a>").is_err());
        assert!(parse(b"<a k=\"\x02\"/>").is_err());
        assert!(parse(b"<a>\t\r\n ok</a>").is_ok());
    }
}
