//! Merging small sibling leaves into shared packs.
//!
//! A pack's mask keeps the sid bits all members agree on and demotes the
//! rest to `*`. Packs never exceed the leaf capacity and never demote more
//! than `⌊ρλ⌋` bits, so the pack region stays close to its members'.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::summarization::ISaxWord;
use crate::Sid;

/// Per-bit `{0, 1, *}` pattern over sids of a fixed width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackMask {
    width: usize,
    /// Set bits are fixed; clear bits are demoted.
    fixed: u64,
    value: u64,
}

impl PackMask {
    pub fn from_sid(sid: Sid, width: usize) -> Self {
        let all = low_bits(width);
        Self {
            width,
            fixed: all,
            value: sid & all,
        }
    }

    pub fn from_parts(width: usize, fixed: u64, value: u64) -> Self {
        let all = low_bits(width);
        Self {
            width,
            fixed: fixed & all,
            value: value & fixed & all,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fixed(&self) -> u64 {
        self.fixed
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn stars(&self) -> usize {
        self.width - self.fixed.count_ones() as usize
    }

    pub fn covers(&self, sid: Sid) -> bool {
        (sid ^ self.value) & self.fixed == 0
    }

    /// Number of fixed bits `sid` disagrees with.
    pub fn demotions_for(&self, sid: Sid) -> usize {
        ((sid ^ self.value) & self.fixed).count_ones() as usize
    }

    pub fn merged(&self, sid: Sid) -> Self {
        let fixed = self.fixed & !(sid ^ self.value);
        Self {
            width: self.width,
            fixed,
            value: self.value & fixed,
        }
    }

    /// Whether bit `i` of the chosen-segment list (0 = most significant)
    /// is fixed, and its value.
    pub fn bit(&self, i: usize) -> Option<u8> {
        let shift = self.width - 1 - i;
        ((self.fixed >> shift) & 1 == 1).then_some(((self.value >> shift) & 1) as u8)
    }
}

impl fmt::Display for PackMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width {
            match self.bit(i) {
                Some(b) => write!(f, "{b}")?,
                None => f.write_str("*")?,
            }
        }
        Ok(())
    }
}

fn low_bits(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Sibling leaves sharing one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafPack {
    width: usize,
    members: Vec<Sid>,
    mask: Option<PackMask>,
    size: u64,
}

impl LeafPack {
    pub fn empty(width: usize) -> Self {
        Self {
            width,
            members: Vec::new(),
            mask: None,
            size: 0,
        }
    }

    pub fn with_member(width: usize, sid: Sid, size: u64) -> Self {
        let mut pack = Self::empty(width);
        pack.insert(sid, size);
        pack
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn members(&self) -> &[Sid] {
        &self.members
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Mask of the pack; an empty pack has no fixed pattern yet.
    pub fn mask(&self) -> Option<PackMask> {
        self.mask
    }

    pub fn stars(&self) -> usize {
        self.mask.map_or(0, |m| m.stars())
    }

    pub fn insert(&mut self, sid: Sid, size: u64) {
        self.mask = Some(match self.mask {
            None => PackMask::from_sid(sid, self.width),
            Some(m) => m.merged(sid),
        });
        self.members.push(sid);
        self.size += size;
    }

    pub fn remove(&mut self, sid: Sid, size: u64) -> bool {
        let Some(pos) = self.members.iter().position(|&s| s == sid) else {
            return false;
        };
        self.members.remove(pos);
        self.size = self.size.saturating_sub(size);
        self.mask = self.members.iter().fold(None, |mask, &s| {
            Some(match mask {
                None => PackMask::from_sid(s, self.width),
                Some(m) => m.merged(s),
            })
        });
        true
    }
}

/// Added demotion bits if `sid` (with `size` series) joins `pack`, or
/// `None` when the pack would overflow `th` or exceed `max_stars`.
pub fn demotion_cost(pack: &LeafPack, sid: Sid, size: u64, max_stars: usize, th: u64) -> Option<usize> {
    if pack.size + size > th {
        return None;
    }
    let Some(mask) = pack.mask else {
        return Some(0);
    };
    let cost = mask.demotions_for(sid);
    (mask.stars() + cost <= max_stars).then_some(cost)
}

/// Largest number of demoted bits a pack under a `lambda`-bit split may have.
pub fn max_demotions(lambda: usize, rho: f64) -> usize {
    ((rho * lambda as f64) + 1e-9).floor().max(0.0) as usize
}

/// Assign every child smaller than `r·th` to a pack.
///
/// `children` lists `(sid, size)` of the parent's unsplit children. Small
/// children are shuffled with `rng`, then stably ordered by size
/// descending; the first `⌊sum/th⌋` seed their own packs. Each remaining
/// child joins the qualified pack of least added demotion, strictly less
/// than `lambda`, else opens a new pack.
pub fn pack_nodes<R: Rng + ?Sized>(
    children: &[(Sid, u64)],
    lambda: usize,
    r: f64,
    rho: f64,
    th: u64,
    rng: &mut R,
) -> Vec<LeafPack> {
    let limit = r * th as f64;
    let mut small: Vec<(Sid, u64)> = children
        .iter()
        .copied()
        .filter(|&(_, c)| (c as f64) < limit)
        .collect();
    if small.is_empty() {
        return Vec::new();
    }
    small.shuffle(rng);
    small.sort_by(|a, b| b.1.cmp(&a.1));
    let sum: u64 = small.iter().map(|&(_, c)| c).sum();
    let seeds = ((sum / th) as usize).min(small.len());
    let max_stars = max_demotions(lambda, rho);

    let mut packs: Vec<LeafPack> = small[..seeds]
        .iter()
        .map(|&(sid, c)| LeafPack::with_member(lambda, sid, c))
        .collect();
    if packs.is_empty() {
        packs.push(LeafPack::empty(lambda));
    }
    for &(sid, size) in &small[seeds..] {
        let mut best: Option<usize> = None;
        let mut best_cost = lambda;
        for (i, pack) in packs.iter().enumerate() {
            if let Some(cost) = demotion_cost(pack, sid, size, max_stars, th) {
                if cost < best_cost {
                    best = Some(i);
                    best_cost = cost;
                }
            }
        }
        match best {
            Some(i) => packs[i].insert(sid, size),
            None => packs.push(LeafPack::with_member(lambda, sid, size)),
        }
    }
    packs.retain(|p| !p.is_empty());
    packs
}

/// Parent word refined by the pack's fixed bits on the chosen segments.
pub fn pack_isax(mask: &PackMask, parent: &ISaxWord, csl: &[usize]) -> ISaxWord {
    let mut word = parent.clone();
    for (i, &seg) in csl.iter().enumerate() {
        if let Some(bit) = mask.bit(i) {
            word.set_symbol(seg, parent.symbol(seg).extended(bit));
        }
    }
    word
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::child_word;
    use crate::summarization::{lower_bound_ed, Breakpoints};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn demotion_examples() {
        let pack = LeafPack::with_member(4, 0b0010, 1);
        assert_eq!(demotion_cost(&pack, 0b0100, 1, 4, 10), Some(2));
        let mut p = pack.clone();
        p.insert(0b0100, 1);
        assert_eq!(p.mask().unwrap().to_string(), "0**0");

        assert_eq!(demotion_cost(&pack, 0b0101, 1, 4, 10), Some(3));
        let mut p = pack.clone();
        p.insert(0b0101, 1);
        assert_eq!(p.mask().unwrap().to_string(), "0***");

        assert_eq!(demotion_cost(&p, 0b0110, 1, 4, 10), Some(0));
    }

    #[test]
    fn demotion_rejections() {
        let pack = LeafPack::with_member(4, 0b0010, 6);
        assert_eq!(demotion_cost(&pack, 0b0101, 1, 2, 10), None);
        assert_eq!(demotion_cost(&pack, 0b0010, 5, 4, 10), None);
        assert_eq!(demotion_cost(&LeafPack::empty(4), 0b1111, 3, 0, 10), Some(0));
    }

    #[test]
    fn all_fit_in_one_pack() {
        let children = [(0b00, 2), (0b01, 3), (0b10, 1), (0b11, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let packs = pack_nodes(&children, 2, 1.0, 1.0, 100, &mut rng);
        assert_eq!(packs.len(), 1);
        assert_eq!(packs[0].size(), 8);
        assert_eq!(packs[0].mask().unwrap().to_string(), "**");
    }

    #[test]
    fn complementary_sids_are_separated() {
        let children = [(0b0000, 5), (0b1111, 5)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let packs = pack_nodes(&children, 4, 1.0, 0.5, 100, &mut rng);
        assert_eq!(packs.len(), 2);
    }

    #[test]
    fn large_children_are_left_alone() {
        let children = [(0, 50), (1, 100), (2, 10)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let packs = pack_nodes(&children, 2, 1.0, 0.5, 100, &mut rng);
        let packed: Vec<Sid> = packs.iter().flat_map(|p| p.members().to_vec()).collect();
        assert!(!packed.contains(&1));
        assert_eq!(packed.len(), 2);
    }

    #[test]
    fn pack_isax_extremes() {
        let parent = ISaxWord::wildcard(4);
        let csl = [0, 2, 3];
        let full = PackMask::from_sid(0b101, 3);
        assert_eq!(pack_isax(&full, &parent, &csl), child_word(&parent, &csl, 0b101));
        let none = PackMask::from_parts(3, 0, 0);
        assert_eq!(pack_isax(&none, &parent, &csl), parent);
        let partial = PackMask::from_parts(3, 0b100, 0b100);
        assert_eq!(pack_isax(&partial, &parent, &csl).to_string(), "[1,*,*,*]");
    }

    #[test]
    fn removal_recomputes_mask() {
        let mut p = LeafPack::with_member(4, 0b0010, 3);
        p.insert(0b0101, 2);
        assert!(p.remove(0b0101, 2));
        assert_eq!(p.mask().unwrap().to_string(), "0010");
        assert_eq!(p.size(), 3);
        assert!(!p.remove(0b1111, 1));
    }

    /// Straight re-statement of the greedy assignment used as a reference.
    fn reference_packing(order: &[(Sid, u64)], lambda: usize, rho: f64, th: u64) -> Vec<Vec<Sid>> {
        let sum: u64 = order.iter().map(|c| c.1).sum();
        let seeds = (sum / th) as usize;
        let max_stars = (rho * lambda as f64 + 1e-9).floor() as usize;
        // (members, fixed bit list, values, size)
        let mut packs: Vec<(Vec<Sid>, Vec<Option<u8>>, u64)> = Vec::new();
        let bits = |sid: Sid| -> Vec<Option<u8>> {
            (0..lambda).map(|i| Some(((sid >> (lambda - 1 - i)) & 1) as u8)).collect()
        };
        for &(sid, c) in &order[..seeds.min(order.len())] {
            packs.push((vec![sid], bits(sid), c));
        }
        if packs.is_empty() {
            packs.push((vec![], vec![None; lambda], 0));
        }
        for &(sid, c) in &order[seeds.min(order.len())..] {
            let b = bits(sid);
            let mut best = None;
            let mut best_cost = lambda;
            for (i, (members, mask, size)) in packs.iter().enumerate() {
                if size + c > th {
                    continue;
                }
                let (cost, stars) = if members.is_empty() {
                    (0, 0)
                } else {
                    let cost = mask.iter().zip(&b).filter(|(m, x)| m.is_some() && m != x).count();
                    let stars = mask.iter().filter(|m| m.is_none()).count();
                    (cost, stars)
                };
                if stars + cost > max_stars {
                    continue;
                }
                if cost < best_cost {
                    best = Some(i);
                    best_cost = cost;
                }
            }
            match best {
                Some(i) => {
                    let p = &mut packs[i];
                    if p.0.is_empty() {
                        p.1 = b;
                    } else {
                        for (m, x) in p.1.iter_mut().zip(&b) {
                            if *m != *x {
                                *m = None;
                            }
                        }
                    }
                    p.0.push(sid);
                    p.2 += c;
                }
                None => packs.push((vec![sid], b, c)),
            }
        }
        packs.into_iter().filter(|p| !p.0.is_empty()).map(|p| p.0).collect()
    }

    fn children_strategy() -> impl Strategy<Value = (usize, Vec<(Sid, u64)>)> {
        (1usize..=6).prop_flat_map(|lambda| {
            let sids = proptest::sample::subsequence((0..(1u64 << lambda)).collect::<Vec<_>>(), 1..=(1usize << lambda));
            (Just(lambda), sids, proptest::collection::vec(1u64..60, 64))
                .prop_map(|(l, sids, sizes)| (l, sids.into_iter().zip(sizes).collect()))
        })
    }

    proptest! {
        #[test]
        fn packing_invariants((lambda, children) in children_strategy(), rho in 0.0f64..=1.0, seed in 0u64..1000) {
            let th = 100;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let packs = pack_nodes(&children, lambda, 1.0, rho, th, &mut rng);
            let max_stars = max_demotions(lambda, rho);
            let mut seen = HashSet::new();
            for p in &packs {
                prop_assert!(p.size() <= th);
                prop_assert!(p.stars() <= max_stars);
                let mask = p.mask().unwrap();
                for &sid in p.members() {
                    prop_assert!(mask.covers(sid));
                    prop_assert!(seen.insert(sid));
                }
            }
            let small: HashSet<Sid> = children.iter().filter(|c| c.1 < th).map(|c| c.0).collect();
            prop_assert_eq!(seen, small);

            // same order, independent greedy restatement
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<(Sid, u64)> = children.iter().copied().filter(|c| c.1 < th).collect();
            order.shuffle(&mut rng);
            order.sort_by(|a, b| b.1.cmp(&a.1));
            let reference = reference_packing(&order, lambda, rho, th);
            let got: Vec<Vec<Sid>> = packs.iter().map(|p| p.members().to_vec()).collect();
            prop_assert_eq!(got, reference);
        }

        #[test]
        fn pack_region_is_coarser_than_members(
            (lambda, children) in children_strategy(),
            q in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let bp = Breakpoints::standard(8).unwrap();
            let parent = ISaxWord::wildcard(6);
            let csl: Vec<usize> = (0..lambda).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for p in pack_nodes(&children, lambda, 1.0, 0.5, 100, &mut rng) {
                let word = pack_isax(&p.mask().unwrap(), &parent, &csl);
                let pack_lb: f64 = lower_bound_ed(&word, &q, 60, bp).unwrap();
                for &sid in p.members() {
                    let member = child_word(&parent, &csl, sid);
                    prop_assert!(word.contains(&member));
                    let lb: f64 = lower_bound_ed(&member, &q, 60, bp).unwrap();
                    prop_assert!(pack_lb <= lb + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let children: Vec<(Sid, u64)> = (0..32).map(|s| (s, 7 + s % 5)).collect();
        let a = pack_nodes(&children, 5, 1.0, 0.5, 40, &mut ChaCha8Rng::seed_from_u64(9));
        let b = pack_nodes(&children, 5, 1.0, 0.5, 40, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
