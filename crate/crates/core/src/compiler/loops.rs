//! Detection of repeated step sections for the `loop` instruction.

use super::emit::LStep;

/// `count` repetitions of the `period` steps starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopInfo {
    pub start: usize,
    pub period: usize,
    pub count: usize,
}

impl LoopInfo {
    pub fn end(&self) -> usize {
        self.start + self.period * self.count
    }

    /// Steps removed by folding.
    pub fn saved(&self) -> usize {
        self.period * (self.count - 1)
    }
}

/// Whether `later` equals `first` with every array reference advanced by `k`.
fn matches_shifted(first: &LStep, later: &LStep, k: usize) -> bool {
    first.shifted(k).as_ref() == Some(later)
}

/// Finds the folding that removes the most steps. Ties prefer the earliest
/// start, then the shortest period.
pub fn find_loop(steps: &[LStep]) -> Option<LoopInfo> {
    let n = steps.len();
    let mut best: Option<LoopInfo> = None;
    for start in 0..n {
        for period in 1..=(n - start) / 2 {
            let mut count = 1;
            'grow: while start + (count + 1) * period <= n {
                for j in 0..period {
                    if !matches_shifted(&steps[start + j], &steps[start + count * period + j], count) {
                        break 'grow;
                    }
                }
                count += 1;
            }
            if count < 2 {
                continue;
            }
            let cand = LoopInfo { start, period, count };
            if best.is_none_or(|b| cand.saved() > b.saved()) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Unfolds the output of [`fold`] back into the straight-line step list.
pub fn expand(folded: &[LStep], info: Option<LoopInfo>) -> Vec<LStep> {
    let Some(l) = info else {
        return folded.to_vec();
    };
    let mut out = folded[..l.start].to_vec();
    let body = &folded[l.start..l.start + l.period];
    for k in 0..l.count {
        out.extend(body.iter().map(|s| s.shifted(k).expect("body steps shift")));
    }
    out.extend_from_slice(&folded[l.start + l.period..]);
    out
}

/// Steps as emitted: prefix, one body, suffix.
pub fn fold(steps: &[LStep], info: Option<LoopInfo>) -> Vec<LStep> {
    match info {
        None => steps.to_vec(),
        Some(l) => {
            let mut out = steps[..l.start + l.period].to_vec();
            out.extend_from_slice(&steps[l.end()..]);
            out
        }
    }
}
