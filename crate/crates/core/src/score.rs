//! Coreference evaluation: mention alignment under head/partial/exact
//! matching, the MUC, B-cubed, and entity-CEAF metrics, and the CoNLL
//! average (the mean of the three F1 scores), reported in percent.
//!
//! Gold and predicted corpora may disagree on empty nodes, so node identity
//! is resolved structurally: surface words match by position, empty nodes
//! by their (dependency head, relation, word-order) triple.

use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::conllu::{Corpus, Document, NodeId};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("documents without a counterpart: {ids:?}")]
    UnpairedDocuments { ids: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    Head,
    Partial,
    Exact,
}

impl MatchMode {
    pub fn name(&self) -> &'static str {
        match self {
            MatchMode::Head => "head",
            MatchMode::Partial => "partial",
            MatchMode::Exact => "exact",
        }
    }
}

/// Shared node identity between two corpora over the same text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum NodeKey {
    Surface { sent: usize, word: u32 },
    Empty { sent: usize, head: u32, deprel: String, order: u32, occurrence: usize },
}

#[derive(Debug, Clone)]
struct ScoredMention {
    span: Vec<NodeKey>,
    head: NodeKey,
    /// Document position of the span start, for deterministic tie-breaks.
    anchor: usize,
}

/// Entities as index lists into a mention table.
struct DocSide {
    mentions: Vec<ScoredMention>,
    entities: Vec<Vec<usize>>,
    duplicates_dropped: usize,
}

fn node_keys(doc: &Document) -> Vec<NodeKey> {
    let mut keys = Vec::with_capacity(doc.node_count());
    for (si, sent) in doc.sentences.iter().enumerate() {
        let mut seen: HashMap<(u32, String, u32), usize> = HashMap::new();
        for node in &sent.nodes {
            match node.id {
                NodeId::Word(w) => keys.push(NodeKey::Surface { sent: si, word: w }),
                NodeId::Empty(major, _) => {
                    let head = node.head.unwrap_or(0);
                    let triple = (head, node.deprel.clone(), major);
                    let occurrence = *seen
                        .entry(triple.clone())
                        .and_modify(|c| *c += 1)
                        .or_insert(0);
                    keys.push(NodeKey::Empty {
                        sent: si,
                        head: triple.0,
                        deprel: triple.1,
                        order: triple.2,
                        occurrence,
                    });
                }
            }
        }
    }
    keys
}

fn build_side(doc: &Document, with_singletons: bool) -> DocSide {
    let keys = node_keys(doc);
    let mut mentions = Vec::new();
    let mut entities = Vec::new();
    let mut seen: HashSet<(Vec<NodeKey>, NodeKey)> = HashSet::new();
    let mut duplicates_dropped = 0;
    for entity in &doc.entities {
        if !with_singletons && entity.mentions.len() <= 1 {
            continue;
        }
        let mut ids = Vec::new();
        for m in &entity.mentions {
            let span: Vec<NodeKey> = m.span.iter().map(|&p| keys[p].clone()).collect();
            let head = keys[m.head].clone();
            if !seen.insert((span.clone(), head.clone())) {
                duplicates_dropped += 1;
                continue;
            }
            ids.push(mentions.len());
            mentions.push(ScoredMention { span, head, anchor: m.start() });
        }
        if !ids.is_empty() {
            entities.push(ids);
        }
    }
    DocSide { mentions, entities, duplicates_dropped }
}

fn compatible(gold: &ScoredMention, pred: &ScoredMention, mode: MatchMode) -> bool {
    match mode {
        MatchMode::Head => gold.head == pred.head,
        MatchMode::Exact => gold.span == pred.span,
        MatchMode::Partial => {
            let gold_set: HashSet<&NodeKey> = gold.span.iter().collect();
            pred.span.iter().all(|k| gold_set.contains(k)) && pred.span.contains(&gold.head)
        }
    }
}

/// Maximum one-to-one matching between gold and predicted mentions under
/// the mode's compatibility predicate; both sides are visited in span-start
/// order, so ties resolve toward earlier spans.
pub(crate) fn align_side(gold: &DocSide, pred: &DocSide, mode: MatchMode) -> Vec<Option<usize>> {
    let mut gold_order: Vec<usize> = (0..gold.mentions.len()).collect();
    gold_order.sort_by_key(|&i| (gold.mentions[i].anchor, i));
    let mut pred_order: Vec<usize> = (0..pred.mentions.len()).collect();
    pred_order.sort_by_key(|&j| (pred.mentions[j].anchor, j));

    let adjacency: Vec<Vec<usize>> = gold_order
        .iter()
        .map(|&i| {
            pred_order
                .iter()
                .copied()
                .filter(|&j| compatible(&gold.mentions[i], &pred.mentions[j], mode))
                .collect()
        })
        .collect();

    // Kuhn's augmenting-path matching.
    let mut match_pred: Vec<Option<usize>> = vec![None; pred.mentions.len()];
    fn augment(
        row: usize,
        adjacency: &[Vec<usize>],
        match_pred: &mut [Option<usize>],
        row_of_pred: &mut HashMap<usize, usize>,
        visited: &mut HashSet<usize>,
    ) -> bool {
        for &j in &adjacency[row] {
            if visited.contains(&j) {
                continue;
            }
            visited.insert(j);
            let free = match match_pred[j] {
                None => true,
                Some(_) => {
                    let r = row_of_pred[&j];
                    augment(r, adjacency, match_pred, row_of_pred, visited)
                }
            };
            if free {
                match_pred[j] = Some(row);
                row_of_pred.insert(j, row);
                return true;
            }
        }
        false
    }
    let mut row_of_pred: HashMap<usize, usize> = HashMap::new();
    for row in 0..adjacency.len() {
        let mut visited = HashSet::new();
        augment(row, &adjacency, &mut match_pred, &mut row_of_pred, &mut visited);
    }

    // Back to original indices: for each gold mention, its matched pred.
    let mut out = vec![None; gold.mentions.len()];
    for (j, m) in match_pred.iter().enumerate() {
        if let Some(row) = m {
            out[gold_order[*row]] = Some(pred_order[j]);
        }
    }
    out
}

/// Per-document counts accumulated into corpus-level (micro) scores.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricCounts {
    pub muc_r_num: f64,
    pub muc_r_den: f64,
    pub muc_p_num: f64,
    pub muc_p_den: f64,
    pub b3_r_sum: f64,
    pub b3_r_den: f64,
    pub b3_p_sum: f64,
    pub b3_p_den: f64,
    pub ceaf_phi: f64,
    pub ceaf_gold: f64,
    pub ceaf_pred: f64,
    pub duplicates_dropped: usize,
}

impl MetricCounts {
    fn add(&mut self, other: &MetricCounts) {
        self.muc_r_num += other.muc_r_num;
        self.muc_r_den += other.muc_r_den;
        self.muc_p_num += other.muc_p_num;
        self.muc_p_den += other.muc_p_den;
        self.b3_r_sum += other.b3_r_sum;
        self.b3_r_den += other.b3_r_den;
        self.b3_p_sum += other.b3_p_sum;
        self.b3_p_den += other.b3_p_den;
        self.ceaf_phi += other.ceaf_phi;
        self.ceaf_gold += other.ceaf_gold;
        self.ceaf_pred += other.ceaf_pred;
        self.duplicates_dropped += other.duplicates_dropped;
    }
}

/// Scores one document pair. Matched mentions share an id in a common
/// mention space; unmatched mentions keep unique ids on their own side.
pub fn score_document(
    gold: &Document,
    pred: &Document,
    mode: MatchMode,
    with_singletons: bool,
) -> MetricCounts {
    let gold_side = build_side(gold, with_singletons);
    let pred_side = build_side(pred, with_singletons);
    let mapping = align_side(&gold_side, &pred_side, mode);

    // Shared ids: gold mention i -> i; pred mention j -> matched gold id or
    // a fresh id past the gold range.
    let mut pred_id: Vec<usize> = (0..pred_side.mentions.len())
        .map(|j| gold_side.mentions.len() + j)
        .collect();
    for (i, m) in mapping.iter().enumerate() {
        if let Some(j) = m {
            pred_id[*j] = i;
        }
    }
    let gold_entities: Vec<Vec<usize>> = gold_side.entities.clone();
    let pred_entities: Vec<Vec<usize>> =
        pred_side.entities.iter().map(|e| e.iter().map(|&j| pred_id[j]).collect()).collect();

    let mut counts = metric_counts(&gold_entities, &pred_entities);
    counts.duplicates_dropped = gold_side.duplicates_dropped + pred_side.duplicates_dropped;
    counts
}

/// MUC, B-cubed, and CEAF counts over entities in a shared mention-id
/// space.
pub fn metric_counts(gold: &[Vec<usize>], pred: &[Vec<usize>]) -> MetricCounts {
    let mut counts = MetricCounts::default();

    let entity_of = |entities: &[Vec<usize>]| -> HashMap<usize, usize> {
        let mut map = HashMap::new();
        for (ei, e) in entities.iter().enumerate() {
            for &m in e {
                map.insert(m, ei);
            }
        }
        map
    };
    let gold_of = entity_of(gold);
    let pred_of = entity_of(pred);

    // MUC: recall numerator sums |g| - p(g), where p(g) counts the
    // partitions of g induced by the predicted entities, unmatched mentions
    // forming singleton parts.
    let muc_partitions = |entity: &[usize], other_of: &HashMap<usize, usize>| -> usize {
        let mut parts: HashSet<usize> = HashSet::new();
        let mut unmatched = 0;
        for &m in entity {
            match other_of.get(&m) {
                Some(&e) => {
                    parts.insert(e);
                }
                None => unmatched += 1,
            }
        }
        parts.len() + unmatched
    };
    for g in gold {
        counts.muc_r_num += (g.len() - muc_partitions(g, &pred_of)) as f64;
        counts.muc_r_den += (g.len() - 1) as f64;
    }
    for p in pred {
        counts.muc_p_num += (p.len() - muc_partitions(p, &gold_of)) as f64;
        counts.muc_p_den += (p.len() - 1) as f64;
    }

    // B-cubed: per-mention overlap ratios.
    let overlap = |a: &[usize], b: &[usize]| -> usize {
        let set: HashSet<usize> = a.iter().copied().collect();
        b.iter().filter(|m| set.contains(m)).count()
    };
    for g in gold {
        for &m in g {
            if let Some(&pe) = pred_of.get(&m) {
                counts.b3_r_sum += overlap(g, &pred[pe]) as f64 / g.len() as f64;
            }
            counts.b3_r_den += 1.0;
        }
    }
    for p in pred {
        for &m in p {
            if let Some(&ge) = gold_of.get(&m) {
                counts.b3_p_sum += overlap(p, &gold[ge]) as f64 / p.len() as f64;
            }
            counts.b3_p_den += 1.0;
        }
    }

    // Entity CEAF with phi4 similarity, via an optimal assignment.
    if !gold.is_empty() && !pred.is_empty() {
        let mut weights = Array2::zeros((gold.len(), pred.len()));
        for (i, g) in gold.iter().enumerate() {
            for (j, p) in pred.iter().enumerate() {
                weights[(i, j)] = 2.0 * overlap(g, p) as f64 / (g.len() + p.len()) as f64;
            }
        }
        counts.ceaf_phi = max_assignment(&weights).0;
    }
    counts.ceaf_gold = gold.len() as f64;
    counts.ceaf_pred = pred.len() as f64;

    counts
}

/// Maximum-total-weight one-to-one assignment (Kuhn-Munkres with
/// potentials, O(n^3)). Returns the total weight and, per row, the chosen
/// column.
pub fn max_assignment(weights: &Array2<f64>) -> (f64, Vec<Option<usize>>) {
    let (rows, cols) = weights.dim();
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    if rows > cols {
        // The algorithm wants rows <= cols; transpose and invert.
        let (total, by_col) = max_assignment(&weights.t().to_owned());
        let mut by_row = vec![None; rows];
        for (c, r) in by_col.iter().enumerate() {
            if let Some(r) = r {
                by_row[*r] = Some(c);
            }
        }
        return (total, by_row);
    }

    let n = rows;
    let m = cols;
    // Minimize negated weights; pads are implicit via Option handling.
    let cost = |i: usize, j: usize| -weights[(i, j)];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut assignment = vec![0usize; m + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        assignment[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assignment[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[assignment[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assignment[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assignment[j0] = assignment[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut by_row = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=m {
        let i = assignment[j];
        if i != 0 {
            by_row[i - 1] = Some(j - 1);
            total += weights[(i - 1, j - 1)];
        }
    }
    (total, by_row)
}

/// Precision/recall/F1 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricScore {
    fn from_fractions(p_num: f64, p_den: f64, r_num: f64, r_den: f64) -> Self {
        if p_den == 0.0 && r_den == 0.0 {
            // Vacuously perfect: nothing to predict and nothing predicted.
            return MetricScore { precision: 100.0, recall: 100.0, f1: 100.0 };
        }
        let p = if p_den > 0.0 { p_num / p_den } else { 0.0 };
        let r = if r_den > 0.0 { r_num / r_den } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        MetricScore { precision: 100.0 * p, recall: 100.0 * r, f1: 100.0 * f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusScore {
    pub muc: MetricScore,
    pub b3: MetricScore,
    pub ceaf_e: MetricScore,
    /// Arithmetic mean of the three F1 scores.
    pub conll: f64,
}

impl CorpusScore {
    pub fn from_counts(c: &MetricCounts) -> Self {
        let muc = MetricScore::from_fractions(c.muc_p_num, c.muc_p_den, c.muc_r_num, c.muc_r_den);
        let b3 = MetricScore::from_fractions(c.b3_p_sum, c.b3_p_den, c.b3_r_sum, c.b3_r_den);
        let ceaf_e = MetricScore::from_fractions(c.ceaf_phi, c.ceaf_pred, c.ceaf_phi, c.ceaf_gold);
        let conll = (muc.f1 + b3.f1 + ceaf_e.f1) / 3.0;
        CorpusScore { muc, b3, ceaf_e, conll }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub mode: String,
    pub with_singletons: bool,
    pub corpora: Vec<(String, CorpusScore)>,
    /// Unweighted macro-average over corpora.
    pub average: CorpusScore,
}

/// Scores one gold/predicted corpus pair; documents are paired by doc id
/// (falling back to their position for unnamed documents).
pub fn score_corpus(
    gold: &Corpus,
    pred: &Corpus,
    mode: MatchMode,
    with_singletons: bool,
) -> Result<CorpusScore, ScoreError> {
    let key = |doc: &Document, idx: usize| {
        doc.doc_id.clone().unwrap_or_else(|| format!("#{idx}"))
    };
    let gold_map: BTreeMap<String, &Document> =
        gold.documents.iter().enumerate().map(|(i, d)| (key(d, i), d)).collect();
    let pred_map: BTreeMap<String, &Document> =
        pred.documents.iter().enumerate().map(|(i, d)| (key(d, i), d)).collect();
    let unpaired: Vec<String> = gold_map
        .keys()
        .filter(|k| !pred_map.contains_key(*k))
        .chain(pred_map.keys().filter(|k| !gold_map.contains_key(*k)))
        .cloned()
        .collect();
    if !unpaired.is_empty() {
        return Err(ScoreError::UnpairedDocuments { ids: unpaired });
    }

    let mut counts = MetricCounts::default();
    for (id, gd) in &gold_map {
        let pd = pred_map[id];
        counts.add(&score_document(gd, pd, mode, with_singletons));
    }
    Ok(CorpusScore::from_counts(&counts))
}

/// Scores several named corpus pairs and macro-averages them.
pub fn score_corpora(
    pairs: &[(String, &Corpus, &Corpus)],
    mode: MatchMode,
    with_singletons: bool,
) -> Result<ScoreReport, ScoreError> {
    let mut corpora = Vec::new();
    for (name, gold, pred) in pairs {
        corpora.push((name.clone(), score_corpus(gold, pred, mode, with_singletons)?));
    }
    let n = corpora.len().max(1) as f64;
    let mut avg = CorpusScore {
        muc: MetricScore { precision: 0.0, recall: 0.0, f1: 0.0 },
        b3: MetricScore { precision: 0.0, recall: 0.0, f1: 0.0 },
        ceaf_e: MetricScore { precision: 0.0, recall: 0.0, f1: 0.0 },
        conll: 0.0,
    };
    for (_, s) in &corpora {
        for (acc, part) in [
            (&mut avg.muc, &s.muc),
            (&mut avg.b3, &s.b3),
            (&mut avg.ceaf_e, &s.ceaf_e),
        ] {
            acc.precision += part.precision / n;
            acc.recall += part.recall / n;
            acc.f1 += part.f1 / n;
        }
        avg.conll += s.conll / n;
    }
    Ok(ScoreReport {
        mode: mode.name().to_string(),
        with_singletons,
        corpora,
        average: avg,
    })
}

/// Renders the human-readable score table (two decimals, percent).
pub fn format_report(report: &ScoreReport) -> String {
    let mut out = String::new();
    let singletons = if report.with_singletons { "with" } else { "without" };
    out.push_str(&format!(
        "match mode: {}, {} singletons\n",
        report.mode, singletons
    ));
    out.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "corpus", "muc-p", "muc-r", "muc-f", "b3-p", "b3-r", "b3-f", "ceaf-p", "ceaf-r", "ceaf-f", "conll"
    ));
    let mut push_row = |name: &str, s: &CorpusScore| {
        out.push_str(&format!(
            "{:<16} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            name,
            s.muc.precision,
            s.muc.recall,
            s.muc.f1,
            s.b3.precision,
            s.b3.recall,
            s.b3.f1,
            s.ceaf_e.precision,
            s.ceaf_e.recall,
            s.ceaf_e.f1,
            s.conll
        ));
    };
    for (name, s) in &report.corpora {
        push_row(name, s);
    }
    push_row("avg", &report.average);
    out
}
