//! Tag codec for possibly overlapping mention spans.
//!
//! Each token carries one tag made of stack actions: `opens` pushes (a
//! mention starts here) followed by `closes` pops (the most recently opened
//! still-open mentions end here). Programs of this shape represent exactly
//! the span sets in which any two spans are nested or disjoint; partially
//! overlapping ("crossing") pairs are rejected or canonicalized.
//!
//! Tags render as `O` (no action), `P`/`Q` for a single push/pop, and
//! counted forms like `P2Q1` (two pushes, one pop). The full grammar is
//! `O | P<k>? Q<k>?` with the count omitted when it is one.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inclusive token-index span.
pub type Span = (usize, usize);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("spans {a:?} and {b:?} cross (partially overlap without nesting)")]
    Crossing { a: Span, b: Span },
    #[error("span {span:?} is out of range for length {len}")]
    OutOfRange { span: Span, len: usize },
    #[error("cannot parse tag `{0}`")]
    BadTag(String),
}

/// A multiset of spans in canonical order: start ascending, end descending
/// (outer before inner), duplicates kept and flagged.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpanSet {
    spans: Vec<Span>,
}

impl SpanSet {
    pub fn new(mut spans: Vec<Span>) -> Self {
        spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        SpanSet { spans }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn has_duplicates(&self) -> bool {
        self.spans.windows(2).any(|w| w[0] == w[1])
    }

    /// First crossing pair in canonical order, if any.
    pub fn find_crossing(&self) -> Option<(Span, Span)> {
        for (i, &a) in self.spans.iter().enumerate() {
            for &b in &self.spans[i + 1..] {
                if b.0 > a.1 {
                    break;
                }
                // b starts inside a (or at the same token); crossing iff it
                // sticks out past a's end.
                if b.0 > a.0 && b.1 > a.1 {
                    return Some((a, b));
                }
            }
        }
        None
    }
}

impl FromIterator<Span> for SpanSet {
    fn from_iter<T: IntoIterator<Item = Span>>(iter: T) -> Self {
        SpanSet::new(iter.into_iter().collect())
    }
}

/// Per-token stack actions: `opens` pushes, then `closes` pops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Tag {
    pub opens: u8,
    pub closes: u8,
}

impl Tag {
    pub const O: Tag = Tag { opens: 0, closes: 0 };
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Tag::O {
            return write!(f, "O");
        }
        match self.opens {
            0 => {}
            1 => write!(f, "P")?,
            n => write!(f, "P{n}")?,
        }
        match self.closes {
            0 => {}
            1 => write!(f, "Q")?,
            n => write!(f, "Q{n}")?,
        }
        Ok(())
    }
}

impl FromStr for Tag {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let bad = || CodecError::BadTag(s.to_string());
        let mut rest = s;
        let mut tag = Tag::default();
        if let Some(tail) = rest.strip_prefix('P') {
            let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
            tag.opens = if digits.is_empty() { 1 } else { digits.parse().map_err(|_| bad())? };
            rest = &tail[digits.len()..];
        }
        if let Some(tail) = rest.strip_prefix('Q') {
            let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
            tag.closes = if digits.is_empty() { 1 } else { digits.parse().map_err(|_| bad())? };
            rest = &tail[digits.len()..];
        }
        if !rest.is_empty() || tag == Tag::O {
            return Err(bad());
        }
        Ok(tag)
    }
}

/// One tag per token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagSequence(pub Vec<Tag>);

impl TagSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
    }
}

/// How encode treats crossing span pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overlap {
    /// Reject with [`CodecError::Crossing`].
    #[default]
    Strict,
    /// Keep the earlier-starting span of each crossing pair, drop the other.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub tags: TagSequence,
    /// Spans dropped by lenient canonicalization.
    pub dropped: Vec<Span>,
}

/// Encodes a span set as one tag per token.
///
/// At each token, mentions starting there open longest-first and mentions
/// ending there close innermost-first, which makes the encoding unique and
/// independent of the input iteration order.
pub fn encode(spans: &SpanSet, len: usize, overlap: Overlap) -> Result<Encoded, CodecError> {
    for &span in spans.spans() {
        if span.0 > span.1 || span.1 >= len {
            return Err(CodecError::OutOfRange { span, len });
        }
    }
    let (kept, dropped) = match overlap {
        Overlap::Strict => {
            if let Some((a, b)) = spans.find_crossing() {
                return Err(CodecError::Crossing { a, b });
            }
            (spans.spans().to_vec(), Vec::new())
        }
        Overlap::Lenient => {
            let mut kept: Vec<Span> = Vec::new();
            let mut dropped = Vec::new();
            for &b in spans.spans() {
                let crosses = kept.iter().any(|&a| b.0 > a.0 && b.0 <= a.1 && b.1 > a.1);
                if crosses {
                    dropped.push(b);
                } else {
                    kept.push(b);
                }
            }
            (kept, dropped)
        }
    };

    let mut tags = vec![Tag::O; len];
    // Canonical order already has outer-before-inner at equal starts, so a
    // plain scan pushes longest-first.
    let mut stack: Vec<Span> = Vec::new();
    let mut by_start: HashMap<usize, Vec<Span>> = HashMap::new();
    for &s in &kept {
        by_start.entry(s.0).or_default().push(s);
    }
    for t in 0..len {
        if let Some(starting) = by_start.get(&t) {
            for &s in starting {
                stack.push(s);
                tags[t].opens += 1;
            }
        }
        while let Some(&top) = stack.last() {
            if top.1 == t {
                stack.pop();
                tags[t].closes += 1;
            } else {
                break;
            }
        }
    }
    debug_assert!(stack.is_empty(), "non-crossing invariant guarantees an empty stack");
    Ok(Encoded { tags: TagSequence(tags), dropped })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub spans: SpanSet,
    /// Number of deterministic repairs applied (ignored pops on an empty
    /// stack, opens force-closed at the last token).
    pub repairs: usize,
}

/// Decodes tags back to spans. Total over arbitrary input: a pop with an
/// empty stack is ignored and unclosed opens are closed at the last token,
/// each counted as one repair.
pub fn decode(tags: &TagSequence) -> Decoded {
    let mut spans = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut repairs = 0;
    for (t, tag) in tags.0.iter().enumerate() {
        for _ in 0..tag.opens {
            stack.push(t);
        }
        for _ in 0..tag.closes {
            match stack.pop() {
                Some(start) => spans.push((start, t)),
                None => repairs += 1,
            }
        }
    }
    if !tags.0.is_empty() {
        let last = tags.0.len() - 1;
        while let Some(start) = stack.pop() {
            spans.push((start, last));
            repairs += 1;
        }
    }
    Decoded { spans: SpanSet::new(spans), repairs }
}

/// Deterministic, duplicate-free tag vocabulary. Index 0 is `O`; tags
/// enumerate `opens` in `0..=max_opens_per_token` (outer loop) and `closes`
/// in `0..=max_depth` (inner loop).
pub fn tag_vocabulary(max_depth: u8, max_opens_per_token: u8) -> Vec<Tag> {
    assert!(max_depth >= 1, "max_depth must be at least 1");
    let mut tags = Vec::new();
    for opens in 0..=max_opens_per_token {
        for closes in 0..=max_depth {
            tags.push(Tag { opens, closes });
        }
    }
    tags
}

/// Tag vocabulary with index lookup, as used by the mention-detection head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagVocab {
    pub max_depth: u8,
    pub max_opens: u8,
    pub tags: Vec<Tag>,
}

impl TagVocab {
    pub fn new(max_depth: u8, max_opens: u8) -> Self {
        TagVocab { max_depth, max_opens, tags: tag_vocabulary(max_depth, max_opens) }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: Tag) -> Option<usize> {
        self.tags.iter().position(|&t| t == tag)
    }

    /// Index of the tag, clamping counts into the vocabulary range. Returns
    /// whether clamping was needed.
    pub fn index_clamped(&self, tag: Tag) -> (usize, bool) {
        let clamped =
            Tag { opens: tag.opens.min(self.max_opens), closes: tag.closes.min(self.max_depth) };
        (self.index_of(clamped).expect("clamped tag is enumerated"), clamped != tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Random non-crossing span set: length <= 40, <= 10 spans, nesting
    /// depth <= 4, at most 3 spans sharing a start token.
    pub(crate) fn random_noncrossing(rng: &mut impl Rng) -> (SpanSet, usize) {
        let len = rng.random_range(1..=40usize);
        let target = rng.random_range(0..=10usize);
        let mut accepted: Vec<Span> = Vec::new();
        'outer: for _ in 0..target * 8 {
            if accepted.len() >= target {
                break;
            }
            let a = rng.random_range(0..len);
            let b = rng.random_range(a..len.min(a + 12));
            let cand = (a, b);
            let mut same_start = 0;
            for &s in &accepted {
                let crossing = (cand.0 > s.0 && cand.0 <= s.1 && cand.1 > s.1)
                    || (s.0 > cand.0 && s.0 <= cand.1 && s.1 > cand.1);
                if crossing {
                    continue 'outer;
                }
                if s.0 == cand.0 {
                    same_start += 1;
                }
            }
            if same_start >= 3 {
                continue;
            }
            // Depth cap: count spans strictly containing the candidate.
            let depth = accepted.iter().filter(|s| s.0 <= cand.0 && cand.1 <= s.1).count();
            if depth >= 4 {
                continue;
            }
            accepted.push(cand);
        }
        (SpanSet::new(accepted), len)
    }

    #[test]
    fn empty_set_encodes_to_all_o() {
        let enc = encode(&SpanSet::default(), 5, Overlap::Strict).unwrap();
        assert_eq!(enc.tags.0, vec![Tag::O; 5]);
        assert_eq!(enc.tags.render(), "O O O O O");
    }

    #[test]
    fn single_span_pushes_and_pops() {
        let set = SpanSet::new(vec![(1, 3)]);
        let enc = encode(&set, 5, Overlap::Strict).unwrap();
        assert_eq!(
            enc.tags.0,
            vec![
                Tag::O,
                Tag { opens: 1, closes: 0 },
                Tag::O,
                Tag { opens: 0, closes: 1 },
                Tag::O
            ]
        );
        assert_eq!(enc.tags.render(), "O P O Q O");
    }

    #[test]
    fn all_o_decodes_to_empty() {
        let decoded = decode(&TagSequence(vec![Tag::O; 4]));
        assert!(decoded.spans.is_empty());
        assert_eq!(decoded.repairs, 0);
    }

    #[test]
    fn pop_on_empty_stack_is_one_repair() {
        let decoded = decode(&TagSequence(vec![Tag { opens: 0, closes: 1 }, Tag::O]));
        assert!(decoded.spans.is_empty());
        assert_eq!(decoded.repairs, 1);
    }

    #[test]
    fn unclosed_open_closes_at_last_token() {
        let decoded = decode(&TagSequence(vec![Tag { opens: 1, closes: 0 }, Tag::O, Tag::O]));
        assert_eq!(decoded.spans.spans(), &[(0, 2)]);
        assert_eq!(decoded.repairs, 1);
    }

    #[test]
    fn crossing_pair_rejected_in_strict_mode() {
        let set = SpanSet::new(vec![(0, 2), (1, 4)]);
        match encode(&set, 5, Overlap::Strict) {
            Err(CodecError::Crossing { a, b }) => {
                assert_eq!((a, b), ((0, 2), (1, 4)));
            }
            other => panic!("expected crossing error, got {other:?}"),
        }
    }

    #[test]
    fn lenient_mode_drops_later_start() {
        let set = SpanSet::new(vec![(0, 2), (1, 4)]);
        let enc = encode(&set, 5, Overlap::Lenient).unwrap();
        assert_eq!(enc.dropped, vec![(1, 4)]);
        assert_eq!(decode(&enc.tags).spans.spans(), &[(0, 2)]);
    }

    #[test]
    fn abutting_spans_cross() {
        // (1,3) and (3,5) share token 3 without nesting.
        let set = SpanSet::new(vec![(1, 3), (3, 5)]);
        assert!(set.find_crossing().is_some());
    }

    #[test]
    fn single_token_and_adjacent_spans() {
        let set = SpanSet::new(vec![(2, 2), (0, 1)]);
        let enc = encode(&set, 3, Overlap::Strict).unwrap();
        assert_eq!(enc.tags.render(), "P Q PQ");
        assert_eq!(decode(&enc.tags).spans, set);
    }

    #[test]
    fn out_of_range_span_rejected() {
        let set = SpanSet::new(vec![(0, 5)]);
        assert!(matches!(
            encode(&set, 5, Overlap::Strict),
            Err(CodecError::OutOfRange { .. })
        ));
    }

    #[test]
    fn roundtrip_random_suite() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..2000 {
            let (set, len) = random_noncrossing(&mut rng);
            let enc = encode(&set, len, Overlap::Strict).unwrap();
            let dec = decode(&enc.tags);
            assert_eq!(dec.spans, set);
            assert_eq!(dec.repairs, 0);
        }
    }

    #[test]
    fn vocabulary_depth_one() {
        let tags = tag_vocabulary(1, 1);
        assert_eq!(tags[0], Tag::O);
        assert!(tags.contains(&Tag { opens: 1, closes: 0 }));
        assert!(tags.contains(&Tag { opens: 0, closes: 1 }));
        assert!(tags.contains(&Tag { opens: 1, closes: 1 }));
        // Deterministic across calls.
        assert_eq!(tags, tag_vocabulary(1, 1));
    }

    #[test]
    fn encode_is_iteration_order_independent() {
        let a = SpanSet::new(vec![(0, 4), (1, 2), (3, 3)]);
        let b = SpanSet::new(vec![(3, 3), (0, 4), (1, 2)]);
        let ta = encode(&a, 6, Overlap::Strict).unwrap();
        let tb = encode(&b, 6, Overlap::Strict).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn tag_display_parse_roundtrip() {
        for tag in tag_vocabulary(4, 3) {
            let text = tag.to_string();
            assert_eq!(text.parse::<Tag>().unwrap(), tag, "tag {text}");
        }
        assert_eq!("P2Q1".parse::<Tag>().unwrap(), Tag { opens: 2, closes: 1 });
        assert!("".parse::<Tag>().is_err());
        assert!("P0Q0".parse::<Tag>().is_err());
        assert!("XYZ".parse::<Tag>().is_err());
    }
}
