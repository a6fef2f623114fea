use super::vocab::CharVocab;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Best-path labels: per-frame argmax, repeats collapsed, blanks dropped.
pub fn greedy_path(logits: &[f64], n_classes: usize, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in logits.chunks(n_classes) {
        let k = argmax(row);
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Greedy CTC decode of `frames × 30` logits into text; sos and eos are
/// stripped.
pub fn ctc_greedy_decode(logits: &[f64]) -> String {
    greedy_path(logits, CharVocab::SIZE, CharVocab::BLANK)
        .into_iter()
        .filter_map(CharVocab::symbol)
        .collect()
}
