//! CorefUD `Entity` bracket notation.
//!
//! A mention opens with `(eid-etype-head-other` (fields per the
//! `# global.Entity` header, trailing empty fields omitted), closes with
//! `eid)`, and a single-node mention combines both: `(eid-etype-head)`.
//! Several brackets on one node are concatenated without a separator.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityField {
    Eid,
    Etype,
    Head,
    Other,
}

impl EntityField {
    fn parse(name: &str) -> Option<EntityField> {
        match name {
            "eid" => Some(EntityField::Eid),
            "etype" => Some(EntityField::Etype),
            "head" => Some(EntityField::Head),
            "other" => Some(EntityField::Other),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            EntityField::Eid => "eid",
            EntityField::Etype => "etype",
            EntityField::Head => "head",
            EntityField::Other => "other",
        }
    }
}

/// Field layout of opening brackets, from the `# global.Entity` comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityHeader {
    pub fields: Vec<EntityField>,
}

impl Default for EntityHeader {
    fn default() -> Self {
        EntityHeader {
            fields: vec![EntityField::Eid, EntityField::Etype, EntityField::Head, EntityField::Other],
        }
    }
}

impl EntityHeader {
    /// Minimal layout used for predicted corpora: just `eid-head`.
    pub fn minimal() -> Self {
        EntityHeader { fields: vec![EntityField::Eid, EntityField::Head] }
    }

    /// Parses the value part of `# global.Entity = eid-etype-head-other`.
    /// Unknown field names are rejected; `eid` must come first.
    pub fn parse(value: &str) -> Result<Self, String> {
        let mut fields = Vec::new();
        for name in value.trim().split('-') {
            match EntityField::parse(name) {
                Some(f) if !fields.contains(&f) => fields.push(f),
                Some(f) => return Err(format!("duplicate entity field `{}`", f.name())),
                None => return Err(format!("unsupported entity field `{name}`")),
            }
        }
        if fields.first() != Some(&EntityField::Eid) {
            return Err("entity header must start with `eid`".into());
        }
        Ok(EntityHeader { fields })
    }

    pub fn render(&self) -> String {
        self.fields.iter().map(|f| f.name()).collect::<Vec<_>>().join("-")
    }

    pub fn has(&self, field: EntityField) -> bool {
        self.fields.contains(&field)
    }
}

/// Parsed opening-bracket fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpenFields {
    pub eid: String,
    pub etype: Option<String>,
    /// 1-based index of the head node within the mention span.
    pub head: Option<usize>,
    pub other: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BracketEvent {
    Open(OpenFields),
    Close(String),
    /// Single-node mention: open and close on the same node.
    OpenClose(OpenFields),
}

/// Scans one `Entity` attribute value into bracket events.
pub fn scan_brackets(value: &str, header: &EntityHeader) -> Result<Vec<BracketEvent>, String> {
    let bytes = value.as_bytes();
    let mut events = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'(' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j] != b'(' && bytes[j] != b')' {
                j += 1;
            }
            let fields = parse_open_fields(&value[start..j], header)?;
            if j < bytes.len() && bytes[j] == b')' {
                events.push(BracketEvent::OpenClose(fields));
                i = j + 1;
            } else {
                events.push(BracketEvent::Open(fields));
                i = j;
            }
        } else {
            let start = i;
            let mut j = start;
            while j < bytes.len() && bytes[j] != b')' {
                if bytes[j] == b'(' {
                    return Err(format!("expected `)` before `(` in `{value}`"));
                }
                j += 1;
            }
            if j == bytes.len() {
                return Err(format!("unterminated closing bracket in `{value}`"));
            }
            if j == start {
                return Err(format!("empty closing bracket in `{value}`"));
            }
            events.push(BracketEvent::Close(value[start..j].to_string()));
            i = j + 1;
        }
    }
    Ok(events)
}

fn parse_open_fields(content: &str, header: &EntityHeader) -> Result<OpenFields, String> {
    if content.is_empty() {
        return Err("empty opening bracket".into());
    }
    let parts: Vec<&str> = content.splitn(header.fields.len(), '-').collect();
    let mut out = OpenFields::default();
    for (field, part) in header.fields.iter().zip(parts.iter()) {
        match field {
            EntityField::Eid => out.eid = part.to_string(),
            EntityField::Etype => out.etype = Some(part.to_string()),
            EntityField::Head => {
                out.head = Some(part.parse::<usize>().map_err(|_| {
                    format!("bad head index `{part}` in entity bracket `{content}`")
                })?);
            }
            EntityField::Other => out.other = Some(part.to_string()),
        }
    }
    if out.eid.is_empty() {
        return Err(format!("missing eid in entity bracket `{content}`"));
    }
    Ok(out)
}

/// Renders the opening-bracket field string (without the parenthesis),
/// trimming trailing absent fields.
pub fn render_open_fields(fields: &OpenFields, header: &EntityHeader) -> String {
    let mut parts: Vec<Option<String>> = Vec::new();
    for field in &header.fields {
        parts.push(match field {
            EntityField::Eid => Some(fields.eid.clone()),
            EntityField::Etype => fields.etype.clone(),
            EntityField::Head => fields.head.map(|h| h.to_string()),
            EntityField::Other => fields.other.clone(),
        });
    }
    while matches!(parts.last(), Some(None)) {
        parts.pop();
    }
    parts
        .into_iter()
        .map(|p| p.unwrap_or_default())
        .collect::<Vec<_>>()
        .join("-")
}

/// True for discontinuous-mention part ids like `e5[1/2]`, which this model
/// does not represent.
pub fn is_discontinuous_eid(eid: &str) -> bool {
    eid.contains('[')
}

/// Orders entity ids naturally: an alphabetic prefix compared as text, a
/// numeric suffix compared as a number (`e9` < `e10`).
pub fn eid_sort_key(eid: &str) -> (String, u64, String) {
    let trailing_digits = eid.chars().rev().take_while(|c| c.is_ascii_digit()).count();
    let split = eid.len() - trailing_digits;
    let (prefix, digits) = eid.split_at(split);
    let num = digits.parse::<u64>().unwrap_or(0);
    (prefix.to_string(), num, digits.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> EntityHeader {
        EntityHeader::default()
    }

    #[test]
    fn header_parsing() {
        let h = EntityHeader::parse("eid-etype-head-other").unwrap();
        assert_eq!(h, EntityHeader::default());
        let h = EntityHeader::parse("eid-head").unwrap();
        assert_eq!(h.fields, vec![EntityField::Eid, EntityField::Head]);
        assert!(EntityHeader::parse("etype-eid").is_err());
        assert!(EntityHeader::parse("eid-bogus").is_err());
    }

    #[test]
    fn scans_open_close_and_single() {
        let events = scan_brackets("(e1-person-2(e2-person-1)e1)", &header()).unwrap();
        assert_eq!(events.len(), 3);
        match &events[0] {
            BracketEvent::Open(f) => {
                assert_eq!(f.eid, "e1");
                assert_eq!(f.etype.as_deref(), Some("person"));
                assert_eq!(f.head, Some(2));
                assert_eq!(f.other, None);
            }
            other => panic!("unexpected {other:?}"),
        }
        match &events[1] {
            BracketEvent::OpenClose(f) => assert_eq!(f.eid, "e2"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(events[2], BracketEvent::Close("e1".into()));
    }

    #[test]
    fn truncated_fields_roundtrip() {
        let events = scan_brackets("(e7-person-1", &header()).unwrap();
        let BracketEvent::Open(f) = &events[0] else { panic!() };
        assert_eq!(f.other, None);
        assert_eq!(render_open_fields(f, &header()), "e7-person-1");
    }

    #[test]
    fn other_field_takes_rest() {
        let events = scan_brackets("(e7-person-1-gstype:gen,extra-bits", &header()).unwrap();
        let BracketEvent::Open(f) = &events[0] else { panic!() };
        assert_eq!(f.other.as_deref(), Some("gstype:gen,extra-bits"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(scan_brackets("(e1-person-1(e2", &EntityHeader::minimal()).is_err());
        assert!(scan_brackets("e1", &header()).is_err());
        assert!(scan_brackets("(", &header()).is_err());
    }

    #[test]
    fn natural_eid_order() {
        let mut ids = vec!["e10", "e9", "e2"];
        ids.sort_by_key(|e| eid_sort_key(e));
        assert_eq!(ids, vec!["e2", "e9", "e10"]);
    }
}
