//! Token vocabulary: codebook geometry, distance ranks, quantization and a
//! linear-interpolation decoder from tokens back to frames.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param, Error, Result};
use crate::rng;
use crate::tokens::TokenSequence;

/// Frames produced per token by the decoder.
pub const UPSAMPLE: usize = 4;

const CODEBOOK_HEADER: &str = "motiondiff-codebook v1";

/// `K` entries of `D`-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Array2<f64>,
    seed: u64,
}

impl Codebook {
    pub fn from_entries(entries: Array2<f64>, seed: u64) -> Result<Self> {
        let (k, d) = entries.dim();
        if k < 2 || d < 1 {
            return Err(param(format!(
                "codebook needs K >= 2 and D >= 1, got K={k} D={d}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(param("codebook entries must be finite"));
        }
        let mut seen = HashSet::with_capacity(k);
        for row in entries.rows() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            if !seen.insert(key) {
                return Err(param("codebook entries must be pairwise distinct"));
            }
        }
        Ok(Self { entries, seed })
    }

    /// Clustered random codebook: `clusters` centers, entries scattered around
    /// them, duplicates perturbed until all entries are distinct.
    pub fn synthetic(k: usize, d: usize, clusters: usize, seed: u64) -> Result<Self> {
        if k < 2 || d < 1 {
            return Err(param(format!(
                "codebook needs K >= 2 and D >= 1, got K={k} D={d}"
            )));
        }
        if clusters < 1 || clusters > k {
            return Err(param(format!(
                "clusters must be in 1..={k}, got {clusters}"
            )));
        }
        let mut rng = rng::root(seed);
        let center_dist = Normal::new(0.0, 4.0).unwrap();
        let spread = Normal::new(0.0, 0.5).unwrap();
        let centers = Array2::from_shape_simple_fn((clusters, d), || center_dist.sample(&mut rng));
        let mut entries = Array2::zeros((k, d));
        for i in 0..k {
            let c = i % clusters;
            for j in 0..d {
                entries[[i, j]] = centers[[c, j]] + spread.sample(&mut rng);
            }
        }
        let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(k);
        for i in 0..k {
            loop {
                let key: Vec<u64> = entries.row(i).iter().map(|v: &f64| v.to_bits()).collect();
                if seen.insert(key) {
                    break;
                }
                for j in 0..d {
                    entries[[i, j]] += rng.random_range(-1e-6..1e-6);
                }
            }
        }
        Self::from_entries(entries, seed)
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.entries.row(i)
    }

    fn sq_dist(&self, i: usize, v: &[f64]) -> f64 {
        self.entries
            .row(i)
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Distance-rank matrix. `rank(i, j)` is the 1-based position of entry `i`
    /// when all entries are sorted by L2 distance to entry `j`, ties broken by
    /// ascending index.
    pub fn distance_ranks(&self) -> RankMatrix {
        let k = self.len();
        let mut ranks = vec![0u32; k * k];
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(k);
        for j in 0..k {
            let anchor = self.entries.row(j).to_vec();
            order.clear();
            order.extend((0..k).map(|i| (self.sq_dist(i, &anchor), i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (r, &(_, i)) in order.iter().enumerate() {
                ranks[i * k + j] = r as u32 + 1;
            }
        }
        RankMatrix { k, ranks }
    }

    /// Nearest entry by L2 distance; ties go to the lower index.
    pub fn quantize(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim() {
            return Err(param(format!(
                "vector has dimension {}, codebook has {}",
                v.len(),
                self.dim()
            )));
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.len() {
            let d = self.sq_dist(i, v);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(best)
    }

    /// Decodes tokens to frames at `UPSAMPLE` frames per token. Each token's
    /// frames interpolate linearly from its entry toward the next token's
    /// entry; the last token is held.
    pub fn decode(&self, tokens: &TokenSequence, fps: f64) -> Result<MotionTrajectory> {
        tokens.ensure_no_mask("decode")?;
        if tokens.num_tokens() != self.len() {
            return Err(param(format!(
                "tokens over K={} but codebook has K={}",
                tokens.num_tokens(),
                self.len()
            )));
        }
        self.decode_states(tokens.states(), fps)
    }

    pub fn decode_states(&self, states: &[usize], fps: f64) -> Result<MotionTrajectory> {
        if states.is_empty() {
            return Err(param("cannot decode an empty token sequence"));
        }
        if let Some(&bad) = states.iter().find(|&&s| s >= self.len()) {
            return Err(Error::InvalidState(format!(
                "token {bad} is not a codebook entry"
            )));
        }
        let d = self.dim();
        let mut frames = Array2::zeros((states.len() * UPSAMPLE, d));
        for (n, &tok) in states.iter().enumerate() {
            let next = states.get(n + 1).copied().unwrap_or(tok);
            let a = self.entries.row(tok);
            let b = self.entries.row(next);
            for f in 0..UPSAMPLE {
                let w = f as f64 / UPSAMPLE as f64;
                let mut row = frames.row_mut(n * UPSAMPLE + f);
                for c in 0..d {
                    row[c] = a[c] + w * (b[c] - a[c]);
                }
            }
        }
        let joint_dim = if d.is_multiple_of(3) { 3 } else { 1 };
        MotionTrajectory::new(frames, fps, joint_dim)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{CODEBOOK_HEADER} K={} D={} seed={}\n",
            self.len(),
            self.dim(),
            self.seed
        );
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty codebook file".into()))?;
        let rest = header
            .strip_prefix(CODEBOOK_HEADER)
            .ok_or_else(|| Error::Format(format!("bad codebook header: {header}")))?;
        let fields = parse_header_fields(rest)?;
        let k = header_usize(&fields, "K")?;
        let d = header_usize(&fields, "D")?;
        let seed = header_usize(&fields, "seed")? as u64;
        let mut data = Vec::with_capacity(k * d);
        for (n, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let row = parse_row(line)?;
            if row.len() != d {
                return Err(Error::Format(format!(
                    "codebook row {n} has {} values, expected {d}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        if data.len() != k * d {
            return Err(Error::Format(format!("expected {k} codebook rows")));
        }
        Self::from_entries(Array2::from_shape_vec((k, d), data).unwrap(), seed)
    }
}

pub(crate) fn parse_header_fields(rest: &str) -> Result<Vec<(String, String)>> {
    rest.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Format(format!("bad header field: {kv}")))
        })
        .collect()
}

pub(crate) fn header_usize(fields: &[(String, String)], key: &str) -> Result<usize> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::Format(format!("header missing {key}")))?
        .1
        .parse()
        .map_err(|_| Error::Format(format!("header field {key} is not an integer")))
}

pub(crate) fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number: {t}")))
        })
        .collect()
}

/// `ranks[i][j]`: rank of entry `i` around entry `j` (1 = itself).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    k: usize,
    ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    #[inline]
    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.ranks[i * self.k + j] as usize
    }

    pub fn column(&self, j: usize) -> Vec<usize> {
        (0..self.k).map(|i| self.rank(i, j)).collect()
    }
}

/// Decoded frames (`L x D_out`) sampled at `fps`, grouped into joints of
/// `joint_dim` components.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrajectory {
    frames: Array2<f64>,
    fps: f64,
    joint_dim: usize,
}

impl MotionTrajectory {
    pub fn new(frames: Array2<f64>, fps: f64, joint_dim: usize) -> Result<Self> {
        let (l, d) = frames.dim();
        if l < 2 {
            return Err(param("trajectory needs at least 2 frames"));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(param(format!("fps must be positive, got {fps}")));
        }
        if joint_dim == 0 || d % joint_dim != 0 {
            return Err(param(format!(
                "frame width {d} not divisible into joints of {joint_dim}"
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(param("trajectory values must be finite"));
        }
        Ok(Self {
            frames,
            fps,
            joint_dim,
        })
    }

    pub fn with_joint_dim(self, joint_dim: usize) -> Result<Self> {
        Self::new(self.frames, self.fps, joint_dim)
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn joint_dim(&self) -> usize {
        self.joint_dim
    }

    pub fn num_joints(&self) -> usize {
        self.frames.ncols() / self.joint_dim
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Mean over frames, one value per component.
    pub fn mean_pooled(&self) -> Vec<f64> {
        self.frames
            .mean_axis(ndarray::Axis(0))
            .expect("trajectory has frames")
            .to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::Condition;
    use ndarray::array;
    use proptest::prelude::*;

    fn line_codebook(points: &[f64]) -> Codebook {
        let e = Array2::from_shape_vec((points.len(), 1), points.to_vec()).unwrap();
        Codebook::from_entries(e, 0).unwrap()
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = Codebook::synthetic(8, 3, 2, 7).unwrap();
        let b = Codebook::synthetic(8, 3, 2, 7).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.len(), 8);
        let c = Codebook::synthetic(2, 1, 1, 0).unwrap();
        assert_ne!(c.entry(0)[0], c.entry(1)[0]);
    }

    #[test]
    fn synthetic_rejects_bad_dims() {
        assert!(Codebook::synthetic(1, 3, 1, 0).is_err());
        assert!(Codebook::synthetic(4, 0, 1, 0).is_err());
        assert!(Codebook::synthetic(4, 2, 5, 0).is_err());
        assert!(Codebook::synthetic(4, 2, 0, 0).is_err());
    }

    #[test]
    fn ranks_on_a_line() {
        let cb = line_codebook(&[0.0, 1.0, 3.0]);
        let r = cb.distance_ranks();
        assert_eq!(r.column(0), vec![1, 2, 3]);
        // around 1.0: self, then 0.0 (d=1), then 3.0 (d=2)
        assert_eq!(r.column(1), vec![2, 1, 3]);
        assert!((0..3).all(|j| r.rank(j, j) == 1));
    }

    #[test]
    fn rank_ties_prefer_lower_index() {
        let cb = line_codebook(&[-1.0, 1.0, 0.0]);
        let r = cb.distance_ranks();
        assert_eq!(r.column(2), vec![2, 3, 1]);
    }

    #[test]
    fn quantize_ties_and_exact_hits() {
        let cb = line_codebook(&[-1.0, 1.0, 5.0, 7.0]);
        assert_eq!(cb.quantize(&[5.0]).unwrap(), 2);
        assert_eq!(cb.quantize(&[0.0]).unwrap(), 0);
        assert_eq!(cb.quantize(&[6.0]).unwrap(), 2);
        assert!(cb.quantize(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn quantize_matches_linear_scan() {
        let cb = Codebook::synthetic(64, 4, 8, 3).unwrap();
        let mut rng = rng::root(11);
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-8.0..8.0)).collect();
            let brute = (0..64)
                .map(|i| {
                    let d: f64 = (0..4)
                        .map(|c| (cb.entry(i)[c] - v[c]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    (d, i)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap()
                .1;
            assert_eq!(cb.quantize(&v).unwrap(), brute);
        }
    }

    #[test]
    fn decode_interpolates() {
        let cb = line_codebook(&[0.0, 1.0]);
        let one = TokenSequence::single(vec![1], 2, Condition::Null).unwrap();
        let t = cb.decode(&one, 20.0).unwrap();
        assert_eq!(t.frames().column(0).to_vec(), vec![1.0; 4]);

        let same = TokenSequence::single(vec![1, 1], 2, Condition::Null).unwrap();
        assert_eq!(
            cb.decode(&same, 20.0).unwrap().frames().column(0).to_vec(),
            vec![1.0; 8]
        );

        let pair = TokenSequence::single(vec![0, 1], 2, Condition::Null).unwrap();
        let f = cb.decode(&pair, 20.0).unwrap();
        assert_eq!(
            f.frames().column(0).to_vec(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn decode_rejects_mask() {
        let cb = line_codebook(&[0.0, 1.0]);
        let seq = TokenSequence::single(vec![0, 2], 2, Condition::Null).unwrap();
        assert!(matches!(cb.decode(&seq, 20.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let cb = Codebook::synthetic(16, 5, 3, 42).unwrap();
        let back = Codebook::from_text(&cb.to_text()).unwrap();
        assert_eq!(back, cb);
        assert!(Codebook::from_text("nonsense").is_err());
    }

    #[test]
    fn trajectory_validation() {
        assert!(MotionTrajectory::new(array![[0.0]], 20.0, 1).is_err());
        assert!(MotionTrajectory::new(array![[0.0], [1.0]], 0.0, 1).is_err());
        assert!(MotionTrajectory::new(array![[0.0, 1.0], [1.0, 1.0]], 20.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn rank_columns_are_permutations(seed in 0u64..1000, k in 2usize..24, d in 1usize..6) {
            let clusters = 1 + (seed as usize % k);
            let cb = Codebook::synthetic(k, d, clusters, seed).unwrap();
            let r = cb.distance_ranks();
            for j in 0..k {
                let mut col = r.column(j);
                prop_assert_eq!(col[j], 1);
                col.sort_unstable();
                prop_assert_eq!(col, (1..=k).collect::<Vec<_>>());
            }
        }

        #[test]
        fn ranks_translation_invariant(seed in 0u64..500, shift in -50i32..50) {
            let cb = Codebook::synthetic(12, 3, 3, seed).unwrap();
            let moved = Codebook::from_entries(cb.entries() + shift as f64, seed).unwrap();
            prop_assert_eq!(cb.distance_ranks(), moved.distance_ranks());
        }

        #[test]
        fn decode_then_quantize_round_trips(seed in 0u64..500) {
            let cb = Codebook::synthetic(10, 3, 2, seed).unwrap();
            for i in 0..10 {
                let seq = TokenSequence::single(vec![i], 10, Condition::Null).unwrap();
                let traj = cb.decode(&seq, 20.0).unwrap();
                let frame = traj.frames().row(0).to_vec();
                prop_assert_eq!(cb.quantize(&frame).unwrap(), i);
            }
        }
    }
}
