//! ROUGE overlap scores on token sequences from the dataset tokenizer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    /// LCS(reference, hypothesis) / len(reference). The default verifier.
    #[default]
    LRecall,
    LF1,
    OneF1,
}

/// ROUGE-L recall of `hypothesis` against `reference`.
pub fn rouge_l(reference: &[String], hypothesis: &[String]) -> Result<f64> {
    rouge(reference, hypothesis, RougeVariant::LRecall)
}

pub fn rouge(reference: &[String], hypothesis: &[String], variant: RougeVariant) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::config("ROUGE reference must be non-empty"));
    }
    Ok(match variant {
        RougeVariant::LRecall => lcs_len(reference, hypothesis) as f64 / reference.len() as f64,
        RougeVariant::LF1 => {
            if hypothesis.is_empty() {
                return Ok(0.0);
            }
            let lcs = lcs_len(reference, hypothesis) as f64;
            f1(lcs / hypothesis.len() as f64, lcs / reference.len() as f64)
        }
        RougeVariant::OneF1 => {
            if hypothesis.is_empty() {
                return Ok(0.0);
            }
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for t in reference {
                *counts.entry(t.as_str()).or_default() += 1;
            }
            let mut overlap = 0usize;
            for t in hypothesis {
                if let Some(c) = counts.get_mut(t.as_str()) {
                    if *c > 0 {
                        *c -= 1;
                        overlap += 1;
                    }
                }
            }
            f1(overlap as f64 / hypothesis.len() as f64, overlap as f64 / reference.len() as f64)
        }
    })
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            curr[j + 1] = if ai == bj { prev[j] + 1 } else { prev[j + 1].max(curr[j]) };
        }
        core::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}
