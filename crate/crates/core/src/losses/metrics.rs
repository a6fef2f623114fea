use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Alignment operations between a reference and a hypothesis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Unit-cost edit alignment of two sequences.
///
/// Among minimum-distance alignments the one with the most substitutions is
/// chosen, so the counts are unique and swapping the arguments swaps
/// deletions with insertions.
pub fn edit_counts_seq<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    // (distance, indel count), compared lexicographically
    let mut d = vec![(0usize, 0usize); (n + 1) * w];
    for i in 0..=n {
        d[i * w] = (i, i);
    }
    for j in 0..=m {
        d[j] = (j, j);
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = (reference[i - 1] != hypothesis[j - 1]) as usize;
            let diag = d[(i - 1) * w + j - 1];
            let up = d[(i - 1) * w + j];
            let left = d[i * w + j - 1];
            d[i * w + j] = (diag.0 + sub, diag.1).min((up.0 + 1, up.1 + 1)).min((left.0 + 1, left.1 + 1));
        }
    }
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let sub = (reference[i - 1] != hypothesis[j - 1]) as usize;
            let diag = d[(i - 1) * w + j - 1];
            if (diag.0 + sub, diag.1) == here {
                counts.substitutions += sub;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 {
            let up = d[(i - 1) * w + j];
            if (up.0 + 1, up.1 + 1) == here {
                counts.deletions += 1;
                i -= 1;
                continue;
            }
        }
        counts.insertions += 1;
        j -= 1;
    }
    counts
}

/// Character-level edit counts.
pub fn edit_counts(reference: &str, hypothesis: &str) -> EditCounts {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    edit_counts_seq(&r, &h)
}

fn words(s: &str) -> Vec<&str> {
    s.split(' ').filter(|w| !w.is_empty()).collect()
}

/// Character error rate `(S + D + I) / |ref|`; may exceed 1.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(domain!("character error rate is undefined for an empty reference"));
    }
    Ok(edit_counts(reference, hypothesis).distance() as f64 / n as f64)
}

/// Word error rate over space-delimited words.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r = words(reference);
    if r.is_empty() {
        return Err(domain!("word error rate is undefined for an empty reference"));
    }
    Ok(edit_counts_seq(&r, &words(hypothesis)).distance() as f64 / r.len() as f64)
}

/// Fraction of predicted class indices equal to their targets.
pub fn speaker_accuracy(predictions: &[usize], targets: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(domain!(
            "speaker accuracy needs equal non-empty inputs, got {} and {}",
            predictions.len(),
            targets.len()
        ));
    }
    let hits = predictions.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// How per-utterance error rates are pooled across a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-utterance rates.
    #[default]
    Macro,
    /// Total edits over total reference characters.
    Micro,
}

/// Corpus-level CER summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CerSummary {
    pub mean: f64,
    /// Population standard deviation of per-utterance CER.
    pub std: f64,
    pub n_scored: usize,
    pub n_skipped: usize,
}

/// Score `(reference, hypothesis)` pairs, skipping empty references.
pub fn corpus_cer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>, averaging: Averaging) -> Result<CerSummary> {
    let mut rates = Vec::new();
    let (mut edits, mut chars, mut skipped) = (0usize, 0usize, 0usize);
    for (r, h) in pairs {
        let n = r.chars().count();
        if n == 0 {
            log::warn!("skipping utterance with empty reference");
            skipped += 1;
            continue;
        }
        let d = edit_counts(r, h).distance();
        rates.push(d as f64 / n as f64);
        edits += d;
        chars += n;
    }
    if rates.is_empty() {
        return Err(domain!("no scorable utterances"));
    }
    let k = rates.len() as f64;
    let macro_mean = rates.iter().sum::<f64>() / k;
    let std = (rates.iter().map(|r| (r - macro_mean).powi(2)).sum::<f64>() / k).sqrt();
    let mean = match averaging {
        Averaging::Macro => macro_mean,
        Averaging::Micro => edits as f64 / chars as f64,
    };
    Ok(CerSummary {
        mean,
        std,
        n_scored: rates.len(),
        n_skipped: skipped,
    })
}
