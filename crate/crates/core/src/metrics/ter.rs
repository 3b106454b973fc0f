use std::collections::HashMap;
use std::hash::Hash;

use super::{config_hash, MetricScore, Scale};
use crate::text::TokenSequence;

/// Edit counts behind a TER score.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TerEdits {
    pub shifts: usize,
    /// Levenshtein distance between the shifted hypothesis and the reference.
    pub edit_distance: usize,
}

impl TerEdits {
    pub fn total(&self) -> usize {
        self.shifts + self.edit_distance
    }
}

/// Uniform-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    levenshtein_with(a, b, &mut prev, &mut cur)
}

fn levenshtein_with<T: PartialEq>(a: &[T], b: &[T], prev: &mut Vec<usize>, cur: &mut Vec<usize>) -> usize {
    prev.clear();
    prev.extend(0..=b.len());
    cur.clear();
    cur.resize(b.len() + 1, 0);
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(prev, cur);
    }
    prev[b.len()]
}

/// Moves `seq[start..start + len]` so that it begins at index `dest` of the
/// result. `dest` ranges over `0..=seq.len() - len`.
pub fn shift_block<T: Clone>(seq: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(seq.len());
    shift_into(seq, start, len, dest, &mut out);
    out
}

fn shift_into<T: Clone>(seq: &[T], start: usize, len: usize, dest: usize, out: &mut Vec<T>) {
    out.clear();
    let block = &seq[start..start + len];
    let rest = seq[..start].iter().chain(&seq[start + len..]);
    let mut placed = false;
    for (i, x) in rest.enumerate() {
        if i == dest {
            out.extend_from_slice(block);
            placed = true;
        }
        out.push(x.clone());
    }
    if !placed {
        out.extend_from_slice(block);
    }
}

/// Smallest Levenshtein distance any rearrangement of `a` can reach.
fn multiset_floor<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let mut counts: HashMap<&T, isize> = HashMap::new();
    for x in a {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut common = 0;
    for y in b {
        if let Some(c) = counts.get_mut(y) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    a.len().max(b.len()) - common
}

/// Greedy block-shift search followed by Levenshtein.
///
/// Each round applies the shift with the lowest resulting edit distance,
/// provided it is lower than the current one. Ties prefer the longer
/// block, then the leftmost origin, then the leftmost destination.
pub fn ter_edits<T: Eq + Hash + Clone>(hyp: &[T], reference: &[T]) -> TerEdits {
    let mut prev = Vec::new();
    let mut cur_row = Vec::new();
    let mut current = hyp.to_vec();
    let mut dist = levenshtein_with(&current, reference, &mut prev, &mut cur_row);
    let floor = multiset_floor(hyp, reference);
    let n = current.len();
    let mut shifts = 0;
    let mut scratch = Vec::with_capacity(n);

    while dist > floor {
        // (distance, len, start, dest)
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for len in (1..n).rev() {
            for start in 0..=n - len {
                for dest in 0..=n - len {
                    if dest == start {
                        continue;
                    }
                    shift_into(&current, start, len, dest, &mut scratch);
                    let d = levenshtein_with(&scratch, reference, &mut prev, &mut cur_row);
                    if d < dist && best.is_none_or(|(bd, ..)| d < bd) {
                        best = Some((d, len, start, dest));
                    }
                }
            }
        }
        match best {
            Some((d, len, start, dest)) => {
                current = shift_block(&current, start, len, dest);
                dist = d;
                shifts += 1;
            }
            None => break,
        }
    }
    TerEdits {
        shifts,
        edit_distance: dist,
    }
}

/// Translation edit rate: (shifts + edits) / |ref|.
///
/// An empty reference divides by 1 instead and carries a warning.
pub fn ter(hyp: &TokenSequence, reference: &TokenSequence) -> MetricScore {
    let hash = config_hash("ter:greedy-shift");
    let edits = ter_edits(hyp.tokens(), reference.tokens()).total() as f64;
    if reference.is_empty() {
        let s = MetricScore::new("ter", edits, Scale::NonNegative, hash);
        return if hyp.is_empty() { s } else { s.warn("empty reference") };
    }
    MetricScore::new("ter", edits / reference.len() as f64, Scale::NonNegative, hash)
}
