//! Format fidelity and validation behaviour of the CoNLL-U layer.

use zeroref::conllu::{
    parse_conllu, serialize_conllu, validate, ConlluError, Mention, MiscItem, Node, NodeId,
};

const SAMPLE: &str = include_str!("data/corefud_sample.conllu");

/// Extracts the columns the reader promises to preserve byte-for-byte.
fn key_columns(text: &str) -> Vec<(String, String, String, String, String)> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            assert_eq!(cols.len(), 10, "bad fixture line: {l}");
            (
                cols[0].to_string(),
                cols[1].to_string(),
                cols[6].to_string(),
                cols[7].to_string(),
                cols[9].to_string(),
            )
        })
        .collect()
}

#[test]
fn sample_roundtrip_preserves_key_columns() {
    let parsed = parse_conllu(SAMPLE).expect("sample parses");
    assert!(parsed.warnings.is_empty(), "unexpected warnings: {:?}", parsed.warnings);
    let out = serialize_conllu(&parsed.corpus).expect("sample serializes");
    assert_eq!(key_columns(SAMPLE), key_columns(&out));
    // The sample uses the canonical bracket layout, so the whole file
    // round-trips bytewise.
    assert_eq!(SAMPLE, out);
}

#[test]
fn parse_serialize_parse_is_parse() {
    let first = parse_conllu(SAMPLE).unwrap();
    let text = serialize_conllu(&first.corpus).unwrap();
    let second = parse_conllu(&text).unwrap();
    assert_eq!(first.corpus, second.corpus);
}

#[test]
fn sample_structure() {
    let corpus = parse_conllu(SAMPLE).unwrap().corpus;
    assert_eq!(corpus.documents.len(), 2);
    let doc = &corpus.documents[0];
    assert_eq!(doc.doc_id.as_deref(), Some("sample-doc-1"));
    assert_eq!(doc.sentences.len(), 2);
    // Empty nodes parsed with decimal ids and head/deprel columns.
    let empty = &doc.sentences[0].nodes[4];
    assert_eq!(empty.id, NodeId::Empty(4, 1));
    assert_eq!(empty.head, Some(5));
    assert_eq!(empty.deprel, "nsubj");
    // e1 has three mentions (one zero mention per sentence plus the name).
    let e1 = doc.entities.iter().find(|e| e.id == "e1").unwrap();
    assert_eq!(e1.mentions.len(), 3);
    // The nested place mentions survive with etype and other fields.
    let e3 = doc.entities.iter().find(|e| e.id == "e3").unwrap();
    assert_eq!(e3.mentions[0].span.len(), 2);
    assert_eq!(e3.mentions[0].other.as_deref(), Some("gstype:spec"));
    assert_eq!(e3.mentions[0].head_index(), 2);
    assert!(validate(&corpus).is_empty());
}

#[test]
fn no_entity_keys_means_no_entities() {
    let text = "1\tHello\t_\t_\t_\t_\t0\troot\t_\t_\n\n1\tWorld\t_\t_\t_\t_\t0\troot\t_\t_\n\n";
    let corpus = parse_conllu(text).unwrap().corpus;
    assert_eq!(corpus.documents.len(), 1);
    assert_eq!(corpus.documents[0].sentences.len(), 2);
    assert!(corpus.documents[0].entities.is_empty());
}

#[test]
fn decimal_id_classifies_as_empty_node() {
    let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n3.1\t_\t_\t_\t_\t_\t1\tnsubj\t_\t_\n";
    let corpus = parse_conllu(text).unwrap().corpus;
    let node = &corpus.documents[0].sentences[0].nodes[1];
    assert_eq!(node.id, NodeId::Empty(3, 1));
    // 3.1 follows a nonexistent word; the validator flags it.
    let violations = validate(&corpus);
    assert_eq!(violations.len(), 1, "{violations:?}");
    assert!(violations[0].message.contains("3.1"));
}

#[test]
fn wrong_column_count_reports_line_number() {
    let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n1\tb\tonly-three\n";
    match parse_conllu(text) {
        Err(ConlluError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn unmatched_bracket_is_reported_with_entity_id() {
    let text = "# global.Entity = eid-etype-head-other\n\
                1\ta\t_\t_\t_\t_\t0\troot\t_\tEntity=(e9-person-1\n\n";
    match parse_conllu(text) {
        Err(ConlluError::UnmatchedEntity { entity_ids, .. }) => {
            assert_eq!(entity_ids, vec!["e9".to_string()])
        }
        other => panic!("expected unmatched entity error, got {other:?}"),
    }
}

#[test]
fn empty_corpus_serializes_to_empty_string() {
    let corpus = parse_conllu("").unwrap().corpus;
    assert!(corpus.documents.is_empty());
    assert_eq!(serialize_conllu(&corpus).unwrap(), "");
}

#[test]
fn whole_sentence_mention_brackets() {
    // A single mention covering a whole 3-word sentence opens on token 1 and
    // closes on token 3.
    let mut corpus = parse_conllu(
        "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t1\tx\t_\t_\n3\tc\t_\t_\t_\t_\t1\tx\t_\t_\n\n",
    )
    .unwrap()
    .corpus;
    corpus.entity_header = zeroref::conllu::EntityHeader::minimal();
    corpus.documents[0].entities.push(zeroref::conllu::Entity {
        id: "e1".into(),
        mentions: vec![Mention::new(vec![0, 1, 2], 0, "e1")],
    });
    let out = serialize_conllu(&corpus).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].ends_with("Entity=(e1-1"), "{}", lines[0]);
    assert!(lines[1].ends_with("\t_"), "{}", lines[1]);
    assert!(lines[2].ends_with("Entity=e1)"), "{}", lines[2]);
}

#[test]
fn cross_sentence_mention_is_a_serialization_error() {
    let mut corpus =
        parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n\n1\tb\t_\t_\t_\t_\t0\troot\t_\t_\n\n")
            .unwrap()
            .corpus;
    corpus.documents[0].entities.push(zeroref::conllu::Entity {
        id: "e1".into(),
        mentions: vec![Mention::new(vec![0, 1], 0, "e1")],
    });
    match serialize_conllu(&corpus) {
        Err(ConlluError::CrossSentenceMention { entity_id }) => assert_eq!(entity_id, "e1"),
        other => panic!("expected cross-sentence error, got {other:?}"),
    }
}

#[test]
fn head_outside_span_is_a_violation() {
    let mut corpus = parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t1\tx\t_\t_\n\n")
        .unwrap()
        .corpus;
    corpus.documents[0].entities.push(zeroref::conllu::Entity {
        id: "e1".into(),
        mentions: vec![Mention::new(vec![0], 1, "e1")],
    });
    let violations = validate(&corpus);
    assert_eq!(violations.len(), 1);
    assert!(violations[0].message.contains("e1"));
    assert!(violations[0].message.contains("head position"));
}

#[test]
fn strip_helpers_remove_annotations() {
    let mut corpus = parse_conllu(SAMPLE).unwrap().corpus;
    corpus.strip_entities();
    corpus.strip_empty_nodes();
    assert!(corpus.documents.iter().all(|d| d.entities.is_empty()));
    assert!(corpus
        .documents
        .iter()
        .flat_map(|d| d.sentences.iter())
        .flat_map(|s| s.nodes.iter())
        .all(|n| !n.id.is_empty_node() && !n.misc.contains(&MiscItem::EntitySlot)));
    assert!(validate(&corpus).is_empty());
}

#[test]
fn predicted_empty_nodes_insert_canonically() {
    let mut corpus = parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t1\tx\t_\t_\n\n")
        .unwrap()
        .corpus;
    let sent = &mut corpus.documents[0].sentences[0];
    let minor = sent.next_empty_minor(1);
    let mut node = Node::bare(NodeId::Empty(1, minor), "_");
    node.head = Some(1);
    node.deprel = "nsubj".into();
    sent.insert_node(node);
    assert!(validate(&corpus).is_empty());
    let out = serialize_conllu(&corpus).unwrap();
    assert!(out.contains("\n1.1\t_"), "{out}");
}
