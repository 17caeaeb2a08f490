use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMask {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
}

/// Independent per-group masks over a group's `n` patch slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub n: usize,
    pub groups: Vec<GroupMask>,
}

pub fn masked_count(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).round() as usize
}

pub fn sample_mask(groups: usize, n: usize, ratio: f64, rng: &mut Rng) -> Result<MaskPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("mask ratio {ratio} outside (0, 1)")));
    }
    let masked = masked_count(n, ratio);
    if masked == 0 || masked == n {
        return Err(Error::DegenerateMask { ratio, n, masked });
    }
    let groups = (0..groups)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let mut m = order[..masked].to_vec();
            let mut v = order[masked..].to_vec();
            m.sort_unstable();
            v.sort_unstable();
            GroupMask { visible: v, masked: m }
        })
        .collect();
    Ok(MaskPlan { n, groups })
}

impl MaskPlan {
    pub fn total(&self) -> usize {
        self.n * self.groups.len()
    }

    pub fn n_visible(&self) -> usize {
        self.groups.iter().map(|g| g.visible.len()).sum()
    }

    pub fn n_masked(&self) -> usize {
        self.groups.iter().map(|g| g.masked.len()).sum()
    }

    /// Visible slots as indices into the group-major token sequence.
    pub fn visible_global(&self) -> Vec<usize> {
        self.global(|g| &g.visible)
    }

    pub fn masked_global(&self) -> Vec<usize> {
        self.global(|g| &g.masked)
    }

    fn global(&self, pick: impl Fn(&GroupMask) -> &Vec<usize>) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, m)| pick(m).iter().map(move |&i| g * self.n + i))
            .collect()
    }

    /// For each global slot, its row in `[visible ++ masked]`.
    pub fn restore_order(&self) -> Vec<usize> {
        let mut out = vec![0; self.total()];
        for (row, slot) in self.visible_global().into_iter().chain(self.masked_global()).enumerate() {
            out[slot] = row;
        }
        out
    }

    /// Per-token flag, true where the slot is masked.
    pub fn is_masked(&self) -> Vec<bool> {
        let mut out = vec![false; self.total()];
        for slot in self.masked_global() {
            out[slot] = true;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_at;

    fn is_partition(plan: &MaskPlan) -> bool {
        plan.groups.iter().all(|g| {
            let mut all: Vec<usize> = g.visible.iter().chain(&g.masked).copied().collect();
            all.sort_unstable();
            all == (0..plan.n).collect::<Vec<_>>()
                && g.visible.windows(2).all(|w| w[0] < w[1])
                && g.masked.windows(2).all(|w| w[0] < w[1])
        })
    }

    #[test]
    fn rgb_counts() {
        let plan = sample_mask(1, 196, 0.75, &mut stream_at(0, 4)).unwrap();
        assert_eq!(plan.groups[0].masked.len(), 147);
        assert_eq!(plan.groups[0].visible.len(), 49);
    }

    #[test]
    fn grouped_counts_and_independence() {
        let mut identical = 0;
        for seed in 0..100 {
            let plan = sample_mask(3, 144, 0.75, &mut stream_at(seed, 4)).unwrap();
            assert!(plan.groups.iter().all(|g| g.masked.len() == 108));
            if plan.groups[0] == plan.groups[1] || plan.groups[1] == plan.groups[2] {
                identical += 1;
            }
        }
        assert_eq!(identical, 0);
    }

    #[test]
    fn deterministic() {
        let a = sample_mask(3, 64, 0.75, &mut stream_at(9, 4)).unwrap();
        let b = sample_mask(3, 64, 0.75, &mut stream_at(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_invariant() {
        for seed in 0..1000 {
            let mut rng = stream_at(seed, 4);
            let n = 4 + (seed as usize % 60);
            let plan = sample_mask(1 + seed as usize % 3, n, 0.75, &mut rng).unwrap();
            assert!(is_partition(&plan));
            assert_eq!(plan.n_visible() + plan.n_masked(), plan.total());
        }
    }

    #[test]
    fn degenerate_ratios() {
        let mut rng = stream_at(0, 4);
        assert!(matches!(sample_mask(1, 4, 0.1, &mut rng), Err(Error::DegenerateMask { .. })));
        assert!(matches!(sample_mask(1, 4, 0.9, &mut rng), Err(Error::DegenerateMask { .. })));
        assert!(sample_mask(1, 4, 1.0, &mut rng).is_err());
    }

    #[test]
    fn restore_order_inverts_gather() {
        let plan = sample_mask(2, 16, 0.75, &mut stream_at(1, 4)).unwrap();
        let gathered: Vec<usize> = plan.visible_global().into_iter().chain(plan.masked_global()).collect();
        let restored: Vec<usize> = plan.restore_order().iter().map(|&r| gathered[r]).collect();
        assert_eq!(restored, (0..32).collect::<Vec<_>>());
    }
}
