//! Connectionist temporal classification loss with its exact gradient,
//! computed by the forward-backward recursions over the blank-extended
//! label in log space.

use crate::error::{domain, Error, Result};

/// Loss and gradient with respect to the logits (`frames × classes`).
#[derive(Debug, Clone)]
pub struct CtcOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Row-wise log-softmax of a `rows × cols` matrix.
pub fn log_softmax_rows(logits: &[f64], cols: usize) -> Vec<f64> {
    logits
        .chunks(cols)
        .flat_map(|row| {
            let z = log_sum_exp(row);
            row.iter().map(move |v| v - z)
        })
        .collect()
}

/// Minimum number of frames that can emit `label`: one per symbol plus a
/// blank between each pair of equal neighbours.
pub fn min_frames(label: &[usize]) -> usize {
    label.len() + label.windows(2).filter(|w| w[0] == w[1]).count()
}

/// CTC negative log-likelihood of `label` under per-frame `logits`.
///
/// `logits` is row-major `frames × n_classes`; `blank` must not appear in
/// `label`. Fails with [`Error::Infeasible`] when the label needs more
/// frames than are available.
pub fn ctc_loss(logits: &[f64], n_classes: usize, label: &[usize], blank: usize) -> Result<CtcOutput> {
    if n_classes == 0 || !logits.len().is_multiple_of(n_classes) || blank >= n_classes {
        return Err(domain!("logits of length {} do not split into {n_classes} classes", logits.len()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(domain!("non-finite logits"));
    }
    if let Some(&bad) = label.iter().find(|&&l| l >= n_classes || l == blank) {
        return Err(domain!("label symbol {bad} is the blank or out of range"));
    }
    let frames = logits.len() / n_classes;
    let needed = min_frames(label);
    if frames == 0 || frames < needed {
        return Err(Error::Infeasible { needed: needed.max(1), frames });
    }

    let lp = log_softmax_rows(logits, n_classes);
    let emit = |t: usize, k: usize| lp[t * n_classes + k];

    // blank-extended label: b l1 b l2 ... lL b
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(label.iter().flat_map(|&l| [l, blank]))
        .collect();
    let s_len = ext.len();
    let skip_ok = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; frames * s_len];
    alpha[0] = emit(0, ext[0]);
    if s_len > 1 {
        alpha[1] = emit(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = lse2(acc, prev[s - 1]);
            }
            if skip_ok(s) {
                acc = lse2(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = if acc == neg { neg } else { acc + emit(t, ext[s]) };
        }
    }
    let last = (frames - 1) * s_len;
    let log_p = if s_len > 1 {
        lse2(alpha[last + s_len - 1], alpha[last + s_len - 2])
    } else {
        alpha[last]
    };
    if !log_p.is_finite() {
        return Err(domain!("CTC likelihood underflowed"));
    }

    // beta excludes the emission at t
    let mut beta = vec![neg; frames * s_len];
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let next = (t + 1) * s_len;
            let mut acc = beta[next + s] + emit(t + 1, ext[s]);
            if s + 1 < s_len {
                acc = lse2(acc, beta[next + s + 1] + emit(t + 1, ext[s + 1]));
            }
            if s + 2 < s_len && skip_ok(s + 2) {
                acc = lse2(acc, beta[next + s + 2] + emit(t + 1, ext[s + 2]));
            }
            beta[t * s_len + s] = acc;
        }
    }

    let mut grad: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    for t in 0..frames {
        for s in 0..s_len {
            let occ = alpha[t * s_len + s] + beta[t * s_len + s] - log_p;
            if occ > neg {
                grad[t * n_classes + ext[s]] -= occ.exp();
            }
        }
    }
    Ok(CtcOutput {
        loss: (-log_p).max(0.0),
        grad,
    })
}
