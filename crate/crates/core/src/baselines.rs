//! Comparison dispatchers: hashed random, balanced partition tree and LSH.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dispatch::Router;
use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::persist::{Decoder, Encoder, Tag};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_words(seed: u64, words: impl Iterator<Item = u64>) -> u64 {
    words.fold(mix64(seed), |h, w| mix64(h ^ w))
}

/// Uniform routing by a seeded hash of the coordinate bits, so a point always
/// lands in the same cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomDispatcher {
    pub k: usize,
    pub seed: u64,
}

pub fn random_dispatcher(k: usize, rng: &mut impl Rng) -> Result<RandomDispatcher> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    Ok(RandomDispatcher { k, seed: rng.gen() })
}

impl RandomDispatcher {
    pub fn id(&self, x: &[f64]) -> usize {
        // Fold -0.0 onto 0.0 so equal points hash equally.
        let h = hash_words(self.seed, x.iter().map(|v| (v + 0.0).to_bits()));
        (h % self.k as u64) as usize
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let k = d.usize()?;
        let seed = d.u64()?;
        if k == 0 {
            return Err(Error::Format("k must be positive".into()));
        }
        Ok(Self { k, seed })
    }
}

impl Router for RandomDispatcher {
    fn k(&self) -> usize {
        self.k
    }

    fn route(&self, x: &[f64]) -> Vec<usize> {
        vec![self.id(x)]
    }

    fn encode(&self) -> Encoder {
        let mut e = Encoder::with_header(Tag::Random);
        e.usize(self.k);
        e.u64(self.seed);
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BptNode {
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(usize),
}

/// Balanced partition tree with `k` leaves numbered left to right; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct BptDispatcher {
    pub k: usize,
    pub dim: usize,
    pub nodes: Vec<BptNode>,
}

/// Splits each node at the lower median along a uniformly random coordinate
/// until there are `k` leaves; the left side keeps `⌈m/2⌉` of `m` points.
pub fn bpt_dispatcher(s: &PointSet, k: usize, rng: &mut impl Rng) -> Result<BptDispatcher> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::invalid(format!("k = {k} must be a power of two")));
    }
    if k > s.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} fitting points",
            s.len()
        )));
    }
    let levels = k.trailing_zeros() as usize;
    let mut nodes = vec![BptNode::Leaf(0)];
    let mut next_leaf = 0;
    let mut stack = vec![(0usize, 0usize, (0..s.len()).collect::<Vec<usize>>())];
    while let Some((slot, depth, idx)) = stack.pop() {
        if depth == levels {
            nodes[slot] = BptNode::Leaf(next_leaf);
            next_leaf += 1;
            continue;
        }
        let dim = rng.gen_range(0..s.dim());
        let mut vals: Vec<(f64, usize)> = idx.iter().map(|&i| (s.row(i)[dim], i)).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let m = (vals.len() - 1) / 2;
        let threshold = 0.5 * (vals[m].0 + vals[m + 1].0);
        let left = nodes.len();
        nodes.push(BptNode::Leaf(0));
        let right = nodes.len();
        nodes.push(BptNode::Leaf(0));
        nodes[slot] = BptNode::Split {
            dim,
            threshold,
            left,
            right,
        };
        stack.push((
            right,
            depth + 1,
            vals[m + 1..].iter().map(|&(_, i)| i).collect(),
        ));
        stack.push((
            left,
            depth + 1,
            vals[..=m].iter().map(|&(_, i)| i).collect(),
        ));
    }
    Ok(BptDispatcher {
        k,
        dim: s.dim(),
        nodes,
    })
}

impl BptDispatcher {
    pub fn id(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                BptNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => at = if x[*dim] <= *threshold { *left } else { *right },
                BptNode::Leaf(c) => return *c,
            }
        }
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let k = d.usize()?;
        let dim = d.usize()?;
        let count = d.usize()?;
        let mut nodes = Vec::new();
        for at in 0..count {
            nodes.push(match d.u8()? {
                0 => {
                    let (sd, threshold, left, right) =
                        (d.usize()?, d.f64()?, d.usize()?, d.usize()?);
                    if sd >= dim || left <= at || right <= at || left >= count || right >= count {
                        return Err(Error::Format(format!("malformed tree node {at}")));
                    }
                    BptNode::Split {
                        dim: sd,
                        threshold,
                        left,
                        right,
                    }
                }
                1 => {
                    let c = d.usize()?;
                    if c >= k {
                        return Err(Error::Format(format!("leaf id {c} out of range")));
                    }
                    BptNode::Leaf(c)
                }
                b => return Err(Error::Format(format!("unknown tree node kind {b}"))),
            });
        }
        if nodes.is_empty() {
            return Err(Error::Format("empty partition tree".into()));
        }
        Ok(Self { k, dim, nodes })
    }
}

impl Router for BptDispatcher {
    fn k(&self) -> usize {
        self.k
    }

    fn route(&self, x: &[f64]) -> Vec<usize> {
        vec![self.id(x)]
    }

    fn encode(&self) -> Encoder {
        let mut e = Encoder::with_header(Tag::PartitionTree);
        e.usize(self.k);
        e.usize(self.dim);
        e.usize(self.nodes.len());
        for node in &self.nodes {
            match node {
                BptNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    e.u8(0);
                    e.usize(*dim);
                    e.f64(*threshold);
                    e.usize(*left);
                    e.usize(*right);
                }
                BptNode::Leaf(c) => {
                    e.u8(1);
                    e.usize(*c);
                }
            }
        }
        e
    }
}

pub const LSH_PROJECTIONS: usize = 10;
const LSH_BISECTION_STEPS: usize = 40;

/// Concatenated binned projections `⌊(u_t·x − o_t)/w⌋`, hashed and reduced mod `k`.
///
/// `o_t` is the smallest projection of the fitting sample on `u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LshDispatcher {
    pub k: usize,
    pub w: f64,
    pub seed: u64,
    pub dirs: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

/// Fits directions and offsets, then bisects `w` over `[10⁻⁶·D, D]` for the
/// smallest scale giving at most `2k` nonempty bins on `s`, where `D` is the
/// diagonal of the bounding box of `s`.
pub fn lsh_dispatcher(s: &PointSet, k: usize, rng: &mut impl Rng) -> Result<LshDispatcher> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if s.is_empty() {
        return Err(Error::invalid("cannot fit LSH on an empty sample"));
    }
    let dirs: Vec<Vec<f64>> = (0..LSH_PROJECTIONS)
        .map(|_| {
            let v: Vec<f64> = (0..s.dim())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = v
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let proj: Vec<Vec<f64>> = dirs
        .iter()
        .map(|u| {
            s.rows()
                .map(|x| u.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let offsets: Vec<f64> = proj
        .iter()
        .map(|p| p.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let diag = (0..s.dim())
        .map(|j| {
            let (lo, hi) = s
                .rows()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x[j]), hi.max(x[j]))
                });
            (hi - lo) * (hi - lo)
        })
        .sum::<f64>()
        .sqrt();
    let mut rule = LshDispatcher {
        k,
        w: 1.0,
        seed: rng.gen(),
        dirs,
        offsets,
    };
    if diag == 0.0 {
        log::warn!("all fitting points coincide; LSH routes everything to one bucket");
        return Ok(rule);
    }
    let bins = |w: f64| -> usize {
        (0..s.len())
            .map(|i| {
                proj.iter()
                    .zip(&rule.offsets)
                    .map(|(p, o)| ((p[i] - o) / w).floor() as i64)
                    .collect::<Vec<_>>()
            })
            .collect::<HashSet<_>>()
            .len()
    };
    let target = 2 * k;
    let (mut lo, mut hi) = (1e-6 * diag, diag);
    if bins(lo) <= target {
        hi = lo;
    } else {
        if bins(hi) > target {
            log::warn!("LSH calibration: even w = D gives more than {target} bins");
        }
        for _ in 0..LSH_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if bins(mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    rule.w = hi;
    Ok(rule)
}

impl LshDispatcher {
    pub fn bin(&self, x: &[f64]) -> Vec<i64> {
        self.dirs
            .iter()
            .zip(&self.offsets)
            .map(|(u, o)| {
                ((u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - o) / self.w).floor() as i64
            })
            .collect()
    }

    pub fn id(&self, x: &[f64]) -> usize {
        let h = hash_words(self.seed, self.bin(x).into_iter().map(|b| b as u64));
        (h % self.k as u64) as usize
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let k = d.usize()?;
        let w = d.f64()?;
        let seed = d.u64()?;
        let count = d.usize()?;
        if count > LSH_PROJECTIONS {
            return Err(Error::Format(format!("{count} projections")));
        }
        let dirs = (0..count).map(|_| d.f64s()).collect::<Result<Vec<_>>>()?;
        let offsets = d.f64s()?;
        if k == 0 || !(w > 0.0) || offsets.len() != count {
            return Err(Error::Format("malformed LSH rule".into()));
        }
        Ok(Self {
            k,
            w,
            seed,
            dirs,
            offsets,
        })
    }
}

impl Router for LshDispatcher {
    fn k(&self) -> usize {
        self.k
    }

    fn route(&self, x: &[f64]) -> Vec<usize> {
        vec![self.id(x)]
    }

    fn encode(&self) -> Encoder {
        let mut e = Encoder::with_header(Tag::Lsh);
        e.usize(self.k);
        e.f64(self.w);
        e.u64(self.seed);
        e.usize(self.dirs.len());
        for u in &self.dirs {
            e.f64s(u);
        }
        e.f64s(&self.offsets);
        e
    }
}
