//! CoNLL-U serialization.

use std::collections::HashMap;

use super::entity::{eid_sort_key, render_open_fields, OpenFields};
use super::{ConlluError, Corpus, Document, MiscItem, NodePos};

/// Serializes a corpus back to CoNLL-U text.
///
/// Entity brackets are regenerated deterministically: at each position the
/// opening brackets come first, ordered by span end descending (ties by
/// entity id, naturally ordered), single-node mentions rendered inline as
/// `(...)`; closing brackets follow in last-opened-first order. Every
/// sentence is terminated by a blank line, so a non-empty corpus ends with
/// `\n\n`; an empty corpus serializes to the empty string.
pub fn serialize_conllu(corpus: &Corpus) -> Result<String, ConlluError> {
    let mut out = String::new();
    for doc in &corpus.documents {
        let brackets = document_brackets(corpus, doc)?;
        let mut pos = 0;
        for sent in &doc.sentences {
            for comment in &sent.comments {
                out.push_str(comment);
                out.push('\n');
            }
            let mut mwt_iter = sent.mwts.iter().peekable();
            for node in &sent.nodes {
                if let super::NodeId::Word(w) = node.id {
                    while let Some(mwt) = mwt_iter.peek() {
                        if mwt.start == w {
                            out.push_str(&mwt.cols.join("\t"));
                            out.push('\n');
                            mwt_iter.next();
                        } else {
                            break;
                        }
                    }
                }
                let entity_value = brackets.get(&pos).map(String::as_str);
                push_node_line(&mut out, node, entity_value);
                pos += 1;
            }
            // Multiword ranges anchored past the last word still get written.
            for mwt in mwt_iter {
                out.push_str(&mwt.cols.join("\t"));
                out.push('\n');
            }
            out.push('\n');
        }
    }
    Ok(out)
}

fn push_node_line(out: &mut String, node: &super::Node, entity_value: Option<&str>) {
    let mut misc_parts: Vec<String> = Vec::new();
    let mut entity_written = false;
    for item in &node.misc {
        match item {
            MiscItem::EntitySlot => {
                if let Some(value) = entity_value {
                    misc_parts.push(format!("Entity={value}"));
                }
                entity_written = true;
            }
            MiscItem::Opaque(text) => misc_parts.push(text.clone()),
        }
    }
    if !entity_written {
        if let Some(value) = entity_value {
            misc_parts.insert(0, format!("Entity={value}"));
        }
    }
    let misc = if misc_parts.is_empty() { "_".to_string() } else { misc_parts.join("|") };
    let head = node.head.map_or_else(|| "_".to_string(), |h| h.to_string());
    out.push_str(&format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        node.id,
        node.form,
        node.lemma,
        node.upos,
        node.xpos,
        node.feats,
        head,
        node.deprel,
        node.deps,
        misc
    ));
}

struct MentionRef<'a> {
    mention: &'a super::Mention,
    /// Global opening sequence (position-major, then open order); closes are
    /// emitted in reverse of this.
    open_seq: usize,
}

fn document_brackets(
    corpus: &Corpus,
    doc: &Document,
) -> Result<HashMap<NodePos, String>, ConlluError> {
    let node_count = doc.node_count();
    let mut mentions: Vec<&super::Mention> = doc.all_mentions().collect();
    for m in &mentions {
        check_mention(doc, m, node_count)?;
    }
    // Opening order: position ascending, span end descending, eid natural.
    mentions.sort_by(|a, b| {
        a.start()
            .cmp(&b.start())
            .then(b.end().cmp(&a.end()))
            .then_with(|| eid_sort_key(&a.entity_id).cmp(&eid_sort_key(&b.entity_id)))
    });
    let refs: Vec<MentionRef> = mentions
        .into_iter()
        .enumerate()
        .map(|(i, mention)| MentionRef { mention, open_seq: i })
        .collect();

    let mut opens: HashMap<NodePos, Vec<&MentionRef>> = HashMap::new();
    let mut closes: HashMap<NodePos, Vec<&MentionRef>> = HashMap::new();
    for r in &refs {
        if r.mention.start() == r.mention.end() {
            opens.entry(r.mention.start()).or_default().push(r);
        } else {
            opens.entry(r.mention.start()).or_default().push(r);
            closes.entry(r.mention.end()).or_default().push(r);
        }
    }

    let mut result = HashMap::new();
    for pos in 0..node_count {
        let mut value = String::new();
        if let Some(list) = opens.get(&pos) {
            for r in list {
                let fields = OpenFields {
                    eid: r.mention.entity_id.clone(),
                    etype: r.mention.etype.clone(),
                    head: corpus
                        .entity_header
                        .has(super::EntityField::Head)
                        .then(|| r.mention.head_index()),
                    other: r.mention.other.clone(),
                };
                value.push('(');
                value.push_str(&render_open_fields(&fields, &corpus.entity_header));
                if r.mention.start() == r.mention.end() {
                    value.push(')');
                }
            }
        }
        if let Some(list) = closes.get(&pos) {
            let mut list: Vec<&&MentionRef> = list.iter().collect();
            list.sort_by(|a, b| b.open_seq.cmp(&a.open_seq));
            for r in list {
                value.push_str(&r.mention.entity_id);
                value.push(')');
            }
        }
        if !value.is_empty() {
            result.insert(pos, value);
        }
    }
    Ok(result)
}

fn check_mention(
    doc: &Document,
    mention: &super::Mention,
    node_count: usize,
) -> Result<(), ConlluError> {
    if mention.span.is_empty() || mention.end() >= node_count {
        return Err(ConlluError::MentionOutOfRange {
            entity_id: mention.entity_id.clone(),
            pos: mention.span.last().copied().unwrap_or(0),
        });
    }
    for w in mention.span.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(ConlluError::DiscontiguousMention {
                entity_id: mention.entity_id.clone(),
            });
        }
    }
    let (start_sent, _) = doc.locate(mention.start()).expect("checked range");
    let (end_sent, _) = doc.locate(mention.end()).expect("checked range");
    if start_sent != end_sent {
        return Err(ConlluError::CrossSentenceMention { entity_id: mention.entity_id.clone() });
    }
    Ok(())
}
