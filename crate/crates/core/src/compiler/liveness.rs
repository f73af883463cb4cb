//! Identifier liveness and score-based remapping.

use std::collections::BTreeSet;

use super::{Origin, Schedule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessInfo {
    /// Last step reading each value; `None` if never read.
    pub last_use: Vec<Option<usize>>,
    /// Values whose last read happens at each step.
    pub dies_at: Vec<Vec<usize>>,
    /// Values that must survive the program (outputs).
    pub pinned: Vec<bool>,
}

impl LivenessInfo {
    /// Whether value `v` is read at any step after `s`.
    pub fn live_after(&self, v: usize, s: usize) -> bool {
        self.pinned[v] || self.last_use[v].is_some_and(|l| l > s)
    }
}

pub fn liveness(s: &Schedule) -> LivenessInfo {
    let mut last_use = vec![None; s.values.len()];
    let mut dies_at = vec![Vec::new(); s.steps.len()];
    for (i, st) in s.steps.iter().enumerate() {
        for &v in &st.inputs {
            last_use[v] = Some(i);
        }
    }
    for (v, l) in last_use.iter().enumerate() {
        if let Some(l) = l {
            dies_at[*l].push(v);
        }
    }
    let mut pinned = vec![false; s.values.len()];
    for &o in &s.outputs {
        pinned[o] = true;
    }
    LivenessInfo { last_use, dies_at, pinned }
}

/// Identifier (message-memory slot) of every value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub slot_of: Vec<usize>,
    pub slots_used: usize,
}

impl Allocation {
    pub fn distinct_ids(&self) -> usize {
        self.slot_of.iter().collect::<BTreeSet<_>>().len()
    }
}

/// Assigns identifiers. Without `optimize` every value gets its own.
///
/// With `optimize`, each output takes the free identifier with the highest
/// score. Free identifiers are those whose value was last read before the
/// current step, plus the previous version of the output's own variable if
/// this step is its last read (an in-place update; every node writes its
/// result only after reading all inputs). The score is the step at which the
/// identifier became free; ties go to the lowest slot address. Elements of
/// external arrays are never reused so that indexed addressing stays valid.
pub fn optimize_memory(s: &Schedule, optimize: bool) -> Allocation {
    let live = liveness(s);
    let n = s.values.len();
    let mut slot_of = vec![usize::MAX; n];
    let mut next = 0usize;
    // Externals first, in declaration order; arrays contiguous.
    for (v, val) in s.values.iter().enumerate() {
        if matches!(val.origin, Origin::External | Origin::ExternalElem { .. }) {
            slot_of[v] = next;
            next += 1;
        }
    }
    if !optimize {
        for (v, val) in s.values.iter().enumerate() {
            if matches!(val.origin, Origin::Computed { .. }) {
                slot_of[v] = next;
                next += 1;
            }
        }
        return Allocation { slot_of, slots_used: next };
    }
    // (score, slot) of identifiers available for reuse.
    let mut free: BTreeSet<(usize, usize)> = BTreeSet::new();
    let reusable = |v: usize| !live.pinned[v] && !matches!(s.values[v].origin, Origin::ExternalElem { .. });
    // Never-read externals are free from the start.
    for (v, val) in s.values.iter().enumerate() {
        if matches!(val.origin, Origin::External) && live.last_use[v].is_none() && reusable(v) {
            free.insert((0, slot_of[v]));
        }
    }
    for (i, st) in s.steps.iter().enumerate() {
        let out = st.output;
        let in_place = st
            .inputs
            .iter()
            .copied()
            .find(|&v| s.values[v].name == s.values[out].name && live.last_use[v] == Some(i) && reusable(v));
        let mut candidates: Vec<(usize, usize)> = free.iter().copied().collect();
        if let Some(v) = in_place {
            candidates.push((i + 1, slot_of[v]));
        }
        // Highest score, then lowest slot.
        let best = candidates.into_iter().max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let slot = match best {
            Some(c) => {
                free.remove(&c);
                c.1
            }
            None => {
                next += 1;
                next - 1
            }
        };
        slot_of[out] = slot;
        for &v in &live.dies_at[i] {
            if Some(v) == in_place || !reusable(v) {
                continue;
            }
            // Several inputs may share a value; free its slot once.
            if !free.iter().any(|&(_, sl)| sl == slot_of[v]) && slot_of[v] != slot {
                free.insert((i + 1, slot_of[v]));
            }
        }
        if live.last_use[out].is_none() && reusable(out) {
            free.insert((i + 1, slot));
        }
    }
    Allocation { slot_of, slots_used: next }
}
