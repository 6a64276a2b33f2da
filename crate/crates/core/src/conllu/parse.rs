//! CoNLL-U parsing.

use super::entity::{is_discontinuous_eid, scan_brackets, BracketEvent, EntityHeader, OpenFields};
use super::{
    ConlluError, Corpus, Document, Entity, Mention, MiscItem, MwtLine, Node, NodeId, Sentence,
};

/// Non-fatal issues found while parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseWarning {
    /// Mention had no head field; defaulted to the first span element.
    MissingMentionHead { entity_id: String },
    /// Mention head index pointed outside the span; defaulted to the first
    /// span element.
    BadMentionHead { entity_id: String, head: usize, span_len: usize },
    /// Discontinuous-mention part (`eid[i/n]`) dropped.
    DiscontinuousMentionDropped { entity_id: String },
}

#[derive(Debug)]
pub struct Parsed {
    pub corpus: Corpus,
    pub warnings: Vec<ParseWarning>,
}

struct OpenMention {
    start: usize,
    fields: OpenFields,
}

#[derive(Default)]
struct DocBuilder {
    doc_id: Option<String>,
    started: bool,
    sentences: Vec<Sentence>,
    node_offset: usize,
    /// Open brackets in opening order; closes match the most recent open
    /// with the same eid.
    open: Vec<OpenMention>,
    /// Closes with no matching open, kept for error reporting.
    stray_closes: Vec<String>,
    mentions: Vec<Mention>,
}

impl DocBuilder {
    fn finish(mut self, _warnings: &mut [ParseWarning]) -> Result<Document, ConlluError> {
        if !self.open.is_empty() || !self.stray_closes.is_empty() {
            let mut ids: Vec<String> = self.open.iter().map(|o| o.fields.eid.clone()).collect();
            ids.extend(self.stray_closes.iter().cloned());
            ids.dedup();
            return Err(ConlluError::UnmatchedEntity {
                doc: self.doc_id.unwrap_or_else(|| "<unnamed>".into()),
                entity_ids: ids,
            });
        }
        self.mentions.sort_by_key(|m| (m.start(), std::cmp::Reverse(m.end())));
        let mut entities: Vec<Entity> = Vec::new();
        for mention in self.mentions {
            match entities.iter_mut().find(|e| e.id == mention.entity_id) {
                Some(entity) => entity.mentions.push(mention),
                None => {
                    entities.push(Entity { id: mention.entity_id.clone(), mentions: vec![mention] })
                }
            }
        }
        Ok(Document { doc_id: self.doc_id, sentences: self.sentences, entities })
    }

    fn push_sentence(
        &mut self,
        sent: Sentence,
        entity_values: Vec<(usize, String, usize)>,
        header: &EntityHeader,
        warnings: &mut Vec<ParseWarning>,
    ) -> Result<(), ConlluError> {
        for (node_idx, raw, line_no) in entity_values {
            let events = scan_brackets(&raw, header)
                .map_err(|msg| ConlluError::Parse { line: line_no, msg })?;
            let pos = self.node_offset + node_idx;
            for event in events {
                self.apply_event(event, pos, warnings);
            }
        }
        self.node_offset += sent.nodes.len();
        self.sentences.push(sent);
        Ok(())
    }

    fn apply_event(&mut self, event: BracketEvent, pos: usize, warnings: &mut Vec<ParseWarning>) {
        match event {
            BracketEvent::Open(fields) => self.open.push(OpenMention { start: pos, fields }),
            BracketEvent::Close(eid) => {
                if is_discontinuous_eid(&eid) {
                    return;
                }
                match self.open.iter().rposition(|o| o.fields.eid == eid) {
                    Some(idx) => {
                        let open = self.open.remove(idx);
                        self.finish_mention(open, pos, warnings);
                    }
                    None => self.stray_closes.push(eid),
                }
            }
            BracketEvent::OpenClose(fields) => {
                let open = OpenMention { start: pos, fields };
                self.finish_mention(open, pos, warnings);
            }
        }
    }

    fn finish_mention(&mut self, open: OpenMention, end: usize, warnings: &mut Vec<ParseWarning>) {
        if is_discontinuous_eid(&open.fields.eid) {
            warnings
                .push(ParseWarning::DiscontinuousMentionDropped { entity_id: open.fields.eid });
            return;
        }
        let span: Vec<usize> = (open.start..=end).collect();
        let head = match open.fields.head {
            Some(h) if h >= 1 && h <= span.len() => span[h - 1],
            Some(h) => {
                warnings.push(ParseWarning::BadMentionHead {
                    entity_id: open.fields.eid.clone(),
                    head: h,
                    span_len: span.len(),
                });
                span[0]
            }
            None => {
                warnings
                    .push(ParseWarning::MissingMentionHead { entity_id: open.fields.eid.clone() });
                span[0]
            }
        };
        self.mentions.push(Mention {
            span,
            head,
            entity_id: open.fields.eid,
            etype: open.fields.etype,
            other: open.fields.other,
        });
    }
}

#[derive(Default)]
struct SentenceBuilder {
    sent: Sentence,
    /// `(node index, raw Entity value, line number)`.
    entity_values: Vec<(usize, String, usize)>,
}

impl SentenceBuilder {
    fn is_empty(&self) -> bool {
        self.sent.comments.is_empty() && self.sent.nodes.is_empty() && self.sent.mwts.is_empty()
    }
}

/// Parses a CoNLL-U document stream.
///
/// Mentions and entities are reconstructed from `Entity` items in the MISC
/// column; every other field is preserved verbatim. Sentences before any
/// `# newdoc` line form an implicit first document.
pub fn parse_conllu(text: &str) -> Result<Parsed, ConlluError> {
    let mut warnings = Vec::new();
    let mut documents = Vec::new();
    let mut entity_header: Option<EntityHeader> = None;

    let mut doc = DocBuilder::default();
    let mut sb = SentenceBuilder::default();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            if !sb.is_empty() {
                let header = entity_header.clone().unwrap_or_default();
                let SentenceBuilder { sent, entity_values } = std::mem::take(&mut sb);
                doc.push_sentence(sent, entity_values, &header, &mut warnings)?;
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let trimmed = comment.trim();
            if let Some(value) = trimmed.strip_prefix("global.Entity") {
                let value = value.trim_start().strip_prefix('=').unwrap_or(value).trim();
                let header = EntityHeader::parse(value)
                    .map_err(|msg| ConlluError::Parse { line: line_no, msg })?;
                entity_header = Some(header);
            }
            if trimmed == "newdoc" || trimmed.starts_with("newdoc ") || trimmed.starts_with("newdoc\t")
            {
                if !sb.sent.nodes.is_empty() || !sb.sent.mwts.is_empty() {
                    return Err(ConlluError::Parse {
                        line: line_no,
                        msg: "`# newdoc` must appear before a sentence's node lines".into(),
                    });
                }
                if doc.started {
                    documents.push(doc.finish(&mut warnings)?);
                    doc = DocBuilder::default();
                }
                doc.started = true;
                doc.doc_id = trimmed
                    .split_once('=')
                    .map(|(_, v)| v.trim().to_string())
                    .filter(|v| !v.is_empty());
            }
            sb.sent.comments.push(line.to_string());
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::Parse {
                line: line_no,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        doc.started = true;
        let id_col = cols[0];
        if let Some((a, b)) = id_col.split_once('-') {
            let start = parse_u32(a, line_no, "multiword token start")?;
            let end = parse_u32(b, line_no, "multiword token end")?;
            sb.sent
                .mwts
                .push(MwtLine { start, end, cols: cols.iter().map(|c| c.to_string()).collect() });
            continue;
        }
        let id = if let Some((major, minor)) = id_col.split_once('.') {
            NodeId::Empty(
                parse_u32(major, line_no, "empty node major id")?,
                parse_u32(minor, line_no, "empty node minor id")?,
            )
        } else {
            NodeId::Word(parse_u32(id_col, line_no, "word id")?)
        };
        let head = match cols[6] {
            "_" => None,
            h => Some(parse_u32(h, line_no, "head")?),
        };
        let (misc, entity_value) = parse_misc(cols[9]);
        if let Some(value) = entity_value {
            sb.entity_values.push((sb.sent.nodes.len(), value, line_no));
        }
        sb.sent.nodes.push(Node {
            id,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc,
        });
    }

    if !sb.is_empty() {
        let header = entity_header.clone().unwrap_or_default();
        let SentenceBuilder { sent, entity_values } = std::mem::take(&mut sb);
        doc.push_sentence(sent, entity_values, &header, &mut warnings)?;
    }
    if doc.started {
        documents.push(doc.finish(&mut warnings)?);
    }

    Ok(Parsed {
        corpus: Corpus { documents, entity_header: entity_header.unwrap_or_default() },
        warnings,
    })
}

fn parse_u32(text: &str, line: usize, what: &str) -> Result<u32, ConlluError> {
    text.parse::<u32>()
        .map_err(|_| ConlluError::Parse { line, msg: format!("bad {what} `{text}`") })
}

fn parse_misc(col: &str) -> (Vec<MiscItem>, Option<String>) {
    if col == "_" {
        return (Vec::new(), None);
    }
    let mut entity_value = None;
    let items = col
        .split('|')
        .map(|item| match item.strip_prefix("Entity=") {
            Some(value) => {
                entity_value = Some(value.to_string());
                MiscItem::EntitySlot
            }
            None => MiscItem::Opaque(item.to_string()),
        })
        .collect();
    (items, entity_value)
}
