use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Conditioning signal for one position: an action id from a finite
/// vocabulary `1..=V`, or the null condition used for unconditional
/// prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "u32", into = "u32")]
pub enum Condition {
    Null,
    Action(u32),
}

impl Condition {
    /// Table index: 0 for null, `id` otherwise.
    pub fn index(self) -> usize {
        match self {
            Condition::Null => 0,
            Condition::Action(id) => id as usize,
        }
    }

    pub fn is_null(self) -> bool {
        matches!(self, Condition::Null)
    }
}

impl From<u32> for Condition {
    fn from(id: u32) -> Self {
        if id == 0 {
            Condition::Null
        } else {
            Condition::Action(id)
        }
    }
}

impl From<Condition> for u32 {
    fn from(c: Condition) -> u32 {
        c.index() as u32
    }
}

/// Discrete states over `{0..K-1, MASK}` with segment boundaries and a
/// condition per position. MASK is encoded as `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    states: Vec<usize>,
    num_tokens: usize,
    /// Cumulative segment offsets: `[0, l1, l1+l2, ..., len]`.
    boundaries: Vec<usize>,
    conditions: Vec<Condition>,
}

impl TokenSequence {
    /// Builds a sequence from concatenated segments.
    pub fn new(
        states: Vec<usize>,
        num_tokens: usize,
        segments: &[(Condition, usize)],
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(param("sequence needs at least one segment"));
        }
        let mut boundaries = vec![0];
        let mut conditions = Vec::with_capacity(states.len());
        for &(cond, len) in segments {
            if len == 0 {
                return Err(param("segment length must be >= 1"));
            }
            boundaries.push(boundaries.last().unwrap() + len);
            conditions.extend(std::iter::repeat_n(cond, len));
        }
        if *boundaries.last().unwrap() != states.len() {
            return Err(param(format!(
                "segments cover {} positions but sequence has {}",
                boundaries.last().unwrap(),
                states.len()
            )));
        }
        if let Some(&bad) = states.iter().find(|&&s| s > num_tokens) {
            return Err(param(format!("state {bad} outside 0..={num_tokens}")));
        }
        Ok(Self {
            states,
            num_tokens,
            boundaries,
            conditions,
        })
    }

    /// Single-segment sequence.
    pub fn single(states: Vec<usize>, num_tokens: usize, cond: Condition) -> Result<Self> {
        let len = states.len();
        Self::new(states, num_tokens, &[(cond, len)])
    }

    /// All-MASK sequence laid out per `segments`.
    pub fn masked(num_tokens: usize, segments: &[(Condition, usize)]) -> Result<Self> {
        let len = segments.iter().map(|s| s.1).sum();
        Self::new(vec![num_tokens; len], num_tokens, segments)
    }

    /// Concatenates sequences, keeping each one's segments.
    pub fn concat(parts: &[TokenSequence]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| param("nothing to concatenate"))?;
        let mut states = Vec::new();
        let mut segs = Vec::new();
        for p in parts {
            if p.num_tokens != first.num_tokens {
                return Err(param(
                    "cannot concatenate sequences over different vocabularies",
                ));
            }
            states.extend_from_slice(&p.states);
            segs.extend(p.segments());
        }
        Self::new(states, first.num_tokens, &segs)
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [usize] {
        &mut self.states
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Interior boundaries (segment starts after the first).
    pub fn interior_boundaries(&self) -> &[usize] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn mask(&self) -> usize {
        self.num_tokens
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn segment_range(&self, i: usize) -> Range<usize> {
        self.boundaries[i]..self.boundaries[i + 1]
    }

    /// `(condition, length)` per segment.
    pub fn segments(&self) -> Vec<(Condition, usize)> {
        (0..self.num_segments())
            .map(|i| {
                let r = self.segment_range(i);
                (self.conditions[r.start], r.len())
            })
            .collect()
    }

    /// Copy of segment `i` as its own single-segment sequence.
    pub fn segment(&self, i: usize) -> TokenSequence {
        let r = self.segment_range(i);
        TokenSequence {
            states: self.states[r.clone()].to_vec(),
            num_tokens: self.num_tokens,
            boundaries: vec![0, r.len()],
            conditions: self.conditions[r].to_vec(),
        }
    }

    /// Offset of every position relative to its segment start.
    pub fn segment_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.num_segments() {
            out.extend(0..self.segment_range(i).len());
        }
        out
    }

    pub fn mask_count(&self) -> usize {
        self.states
            .iter()
            .filter(|&&s| s == self.num_tokens)
            .count()
    }

    pub fn has_mask(&self) -> bool {
        self.mask_count() > 0
    }

    pub(crate) fn ensure_no_mask(&self, what: &str) -> Result<()> {
        match self.states.iter().position(|&s| s == self.num_tokens) {
            Some(p) => Err(Error::InvalidState(format!("{what}: MASK at position {p}"))),
            None => Ok(()),
        }
    }

    /// Replaces every condition with `cond`.
    pub fn with_condition(mut self, cond: Condition) -> Self {
        self.conditions.iter_mut().for_each(|c| *c = cond);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_partition_sequence() {
        let segs = [(Condition::Action(1), 3), (Condition::Action(2), 2)];
        let seq = TokenSequence::masked(4, &segs).unwrap();
        assert_eq!(seq.boundaries(), &[0, 3, 5]);
        assert_eq!(seq.interior_boundaries(), &[3]);
        assert_eq!(seq.segment_offsets(), vec![0, 1, 2, 0, 1]);
        assert_eq!(seq.mask_count(), 5);
        assert_eq!(seq.segments(), segs.to_vec());
    }

    #[test]
    fn rejects_bad_layout() {
        assert!(TokenSequence::new(vec![0, 1], 2, &[(Condition::Null, 3)]).is_err());
        assert!(TokenSequence::new(vec![0, 5], 2, &[(Condition::Null, 2)]).is_err());
        assert!(TokenSequence::new(vec![], 2, &[(Condition::Null, 0)]).is_err());
    }

    #[test]
    fn concat_round_trips_segments() {
        let a = TokenSequence::single(vec![0, 1], 3, Condition::Action(1)).unwrap();
        let b = TokenSequence::single(vec![2], 3, Condition::Action(2)).unwrap();
        let ab = TokenSequence::concat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.segment(0), a);
        assert_eq!(ab.segment(1), b);
    }

    #[test]
    fn condition_ids() {
        assert_eq!(Condition::from(0), Condition::Null);
        assert_eq!(u32::from(Condition::Action(3)), 3);
    }
}
