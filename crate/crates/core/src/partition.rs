//! Exact-audience partition of the requested tiles and message construction.
//!
//! Every requested tile belongs to exactly one group: the set of users that
//! request it. Each group is then split by quality level into messages.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TileId;

/// Set of 0-based user indices (at most 64 users).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct UserSet(u64);

impl UserSet {
    pub const MAX_USERS: usize = 64;

    pub fn empty() -> Self {
        UserSet(0)
    }

    pub fn singleton(user: usize) -> Self {
        assert!(user < Self::MAX_USERS, "user index {user} exceeds {}", Self::MAX_USERS);
        UserSet(1 << user)
    }

    pub fn from_users<I: IntoIterator<Item = usize>>(users: I) -> Self {
        users.into_iter().fold(UserSet::empty(), |acc, u| acc.with(u))
    }

    pub fn with(self, user: usize) -> Self {
        UserSet(self.0 | UserSet::singleton(user).0)
    }

    pub fn contains(&self, user: usize) -> bool {
        user < Self::MAX_USERS && self.0 & (1 << user) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn bits(&self) -> u64 {
        self.0
    }

    /// Members in increasing order.
    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        let bits = self.0;
        (0..Self::MAX_USERS).filter(move |u| bits & (1 << u) != 0)
    }
}

/// Lexicographic order on the sorted member lists, so `{0} < {0,1} < {0,2} < {1}`.
impl Ord for UserSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.users().cmp(other.users())
    }
}

impl PartialOrd for UserSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.users().map(|u| (u + 1).to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// The groups `P_S` keyed by their user set `S`; only non-empty groups are kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TilePartition {
    pub groups: BTreeMap<UserSet, BTreeSet<TileId>>,
    pub num_users: usize,
}

impl TilePartition {
    /// The index set: user sets with a non-empty group, in canonical order.
    pub fn index_set(&self) -> Vec<UserSet> {
        self.groups.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn tile_count(&self) -> usize {
        self.groups.values().map(BTreeSet::len).sum()
    }

    /// User sets containing `user`.
    pub fn sets_of(&self, user: usize) -> impl Iterator<Item = UserSet> + '_ {
        self.groups.keys().copied().filter(move |s| s.contains(user))
    }
}

/// Per-tile encoding rates `D_1 < ... < D_L` in bits/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityLadder {
    pub rates_bps: Vec<f64>,
}

impl QualityLadder {
    pub fn new(rates_bps: Vec<f64>) -> Result<Self> {
        let ladder = QualityLadder { rates_bps };
        ladder.validate()?;
        Ok(ladder)
    }

    /// `levels` rates growing by `ratio` from `base_bps`.
    pub fn geometric(base_bps: f64, ratio: f64, levels: usize) -> Result<Self> {
        QualityLadder::new((0..levels).map(|l| base_bps * ratio.powi(l as i32)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates_bps.is_empty() {
            return Err(Error::InvalidConfig("quality ladder is empty".into()));
        }
        if self.rates_bps.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidConfig("encoding rates must be positive".into()));
        }
        if self.rates_bps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("encoding rates must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.rates_bps.len()
    }

    /// Rate of the 1-based quality `level`.
    pub fn rate(&self, level: usize) -> Result<f64> {
        if level == 0 || level > self.levels() {
            return Err(Error::QualityOutOfRange { level, levels: self.levels() });
        }
        Ok(self.rates_bps[level - 1])
    }
}

/// The quality-`level` representation of the tiles in `P_subset`, sent once to `audience`.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub subset: UserSet,
    pub level: usize,
    pub audience: UserSet,
    pub tile_count: usize,
    pub demand_bps: f64,
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})->{}", self.subset, self.level, self.audience)
    }
}

/// Groups every requested tile by the exact set of users requesting it.
pub fn build_partition(tile_sets: &[BTreeSet<TileId>]) -> TilePartition {
    assert!(tile_sets.len() <= UserSet::MAX_USERS, "at most {} users", UserSet::MAX_USERS);
    let mut owners: BTreeMap<TileId, UserSet> = BTreeMap::new();
    for (k, set) in tile_sets.iter().enumerate() {
        for &tile in set {
            let entry = owners.entry(tile).or_default();
            *entry = entry.with(k);
        }
    }
    let mut groups: BTreeMap<UserSet, BTreeSet<TileId>> = BTreeMap::new();
    for (tile, owners) in owners {
        groups.entry(owners).or_default().insert(tile);
    }
    TilePartition { groups, num_users: tile_sets.len() }
}

fn check_qualities(qualities: &[usize], ladder: &QualityLadder) -> Result<()> {
    for &q in qualities {
        ladder.rate(q)?;
    }
    Ok(())
}

/// One message per user set and per distinct quality requested inside it.
///
/// `qualities[k]` is the 1-based level of user `k`. Messages come out sorted by
/// `(subset, level)`; that order is the message id used for tie-breaking.
pub fn build_messages(part: &TilePartition, qualities: &[usize], ladder: &QualityLadder) -> Result<Vec<Message>> {
    check_qualities(qualities, ladder)?;
    if qualities.len() < part.num_users {
        return Err(Error::InvalidConfig(format!(
            "{} quality levels for {} users",
            qualities.len(),
            part.num_users
        )));
    }
    let mut out = Vec::new();
    for (&subset, tiles) in &part.groups {
        let levels: BTreeSet<usize> = subset.users().map(|k| qualities[k]).collect();
        for level in levels {
            let audience = UserSet::from_users(subset.users().filter(|&k| qualities[k] == level));
            out.push(Message {
                subset,
                level,
                audience,
                tile_count: tiles.len(),
                demand_bps: tiles.len() as f64 * ladder.rate(level)?,
            });
        }
    }
    Ok(out)
}

/// Unicast front-end: one message per user carrying all of its tiles.
pub fn unicast_messages(
    tile_sets: &[BTreeSet<TileId>],
    qualities: &[usize],
    ladder: &QualityLadder,
) -> Result<Vec<Message>> {
    check_qualities(qualities, ladder)?;
    let mut out = Vec::new();
    for (k, tiles) in tile_sets.iter().enumerate() {
        if tiles.is_empty() {
            continue;
        }
        let level = *qualities.get(k).ok_or_else(|| Error::InvalidConfig(format!("no quality for user {}", k + 1)))?;
        out.push(Message {
            subset: UserSet::singleton(k),
            level,
            audience: UserSet::singleton(k),
            tile_count: tiles.len(),
            demand_bps: tiles.len() as f64 * ladder.rate(level)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiles(list: &[(u32, u32)]) -> BTreeSet<TileId> {
        list.iter().map(|&(c, r)| TileId::new(c, r)).collect()
    }

    fn set(users: &[usize]) -> UserSet {
        UserSet::from_users(users.iter().map(|u| u - 1))
    }

    pub(crate) fn three_viewer_tile_sets() -> Vec<BTreeSet<TileId>> {
        vec![
            tiles(&[(2, 1), (3, 1), (4, 1), (5, 1), (2, 2), (3, 2), (4, 2), (5, 2), (2, 3), (3, 3), (4, 3), (5, 3)]),
            tiles(&[(2, 2), (3, 2), (4, 2), (5, 2), (2, 3), (3, 3), (4, 3), (5, 3), (2, 4), (3, 4), (4, 4), (5, 4)]),
            tiles(&[(4, 2), (5, 2), (6, 2), (7, 2), (4, 3), (5, 3), (6, 3), (7, 3), (4, 4), (5, 4), (6, 4), (7, 4)]),
        ]
    }

    fn ladder() -> QualityLadder {
        QualityLadder::new(vec![1000.0, 2500.0, 4000.0]).unwrap()
    }

    #[test]
    fn user_set_order_is_lexicographic() {
        let mut v = vec![set(&[2]), set(&[1, 3]), set(&[1]), set(&[1, 2, 3]), set(&[1, 2])];
        v.sort();
        assert_eq!(v, vec![set(&[1]), set(&[1, 2]), set(&[1, 2, 3]), set(&[1, 3]), set(&[2])]);
        assert_eq!(set(&[1, 2]).to_string(), "{1,2}");
    }

    #[test]
    fn single_user_partition() {
        let g = three_viewer_tile_sets();
        let part = build_partition(&g[..1]);
        assert_eq!(part.groups.len(), 1);
        assert_eq!(part.groups[&set(&[1])], g[0]);
    }

    #[test]
    fn disjoint_sets_give_singletons_only() {
        let g = vec![tiles(&[(1, 1), (2, 1)]), tiles(&[(3, 1)]), tiles(&[(4, 4)])];
        let part = build_partition(&g);
        assert!(part.groups.keys().all(|s| s.len() == 1));
        assert_eq!(part.groups.len(), 3);
    }

    #[test]
    fn empty_requests_give_empty_partition() {
        let part = build_partition(&[BTreeSet::new(), BTreeSet::new()]);
        assert!(part.is_empty());
        assert!(build_messages(&part, &[1, 1], &ladder()).unwrap().is_empty());
    }

    #[test]
    fn messages_for_overlapping_pair() {
        let part = build_partition(&three_viewer_tile_sets());
        let msgs = build_messages(&part, &[1, 1, 2], &ladder()).unwrap();
        let for_23: Vec<_> = msgs.iter().filter(|m| m.subset == set(&[2, 3])).collect();
        assert_eq!(for_23.len(), 2);
        assert_eq!((for_23[0].level, for_23[0].audience), (1, set(&[2])));
        assert_eq!((for_23[1].level, for_23[1].audience), (2, set(&[3])));
        assert_eq!(for_23[0].demand_bps, 2.0 * 1000.0);
        assert_eq!(for_23[1].demand_bps, 2.0 * 2500.0);
    }

    #[test]
    fn full_overlap_same_quality_is_one_message() {
        let g = vec![tiles(&[(1, 1), (2, 1), (3, 2)]); 4];
        let part = build_partition(&g);
        let msgs = build_messages(&part, &[2, 2, 2, 2], &ladder()).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].audience, set(&[1, 2, 3, 4]));
        assert_eq!(msgs[0].demand_bps, 3.0 * 2500.0);
    }

    #[test]
    fn quality_out_of_range() {
        let part = build_partition(&three_viewer_tile_sets());
        assert!(matches!(
            build_messages(&part, &[1, 4, 1], &ladder()),
            Err(Error::QualityOutOfRange { level: 4, levels: 3 })
        ));
        assert!(build_messages(&part, &[0, 1, 1], &ladder()).is_err());
    }

    #[test]
    fn unicast_demands() {
        let g = three_viewer_tile_sets();
        let msgs = unicast_messages(&g, &[1, 1, 2], &ladder()).unwrap();
        let demands: Vec<f64> = msgs.iter().map(|m| m.demand_bps).collect();
        assert_eq!(demands, vec![12.0 * 1000.0, 12.0 * 1000.0, 12.0 * 2500.0]);

        let single = unicast_messages(&g[..1], &[3], &ladder()).unwrap();
        let via_partition = build_messages(&build_partition(&g[..1]), &[3], &ladder()).unwrap();
        assert_eq!(single, via_partition);

        let with_empty = unicast_messages(&[g[0].clone(), BTreeSet::new()], &[1, 1], &ladder()).unwrap();
        assert_eq!(with_empty.len(), 1);
    }

    fn random_tile_sets() -> impl Strategy<Value = (Vec<BTreeSet<TileId>>, Vec<usize>)> {
        (1usize..6).prop_flat_map(|k| {
            (
                prop::collection::vec(prop::collection::btree_set((1u32..7, 1u32..4), 0..12), k),
                prop::collection::vec(1usize..4, k),
            )
                .prop_map(|(sets, q)| {
                    (sets.into_iter().map(|s| s.into_iter().map(|(c, r)| TileId::new(c, r)).collect()).collect(), q)
                })
        })
    }

    proptest! {
        #[test]
        fn partition_matches_membership_definition((g, q) in random_tile_sets()) {
            let part = build_partition(&g);
            let union: BTreeSet<TileId> = g.iter().flatten().copied().collect();
            prop_assert_eq!(part.tile_count(), union.len());
            let mut seen = BTreeSet::new();
            for (s, group) in &part.groups {
                prop_assert!(!group.is_empty());
                for t in group {
                    prop_assert!(seen.insert(*t), "tile {} in two groups", t);
                    for (k, gk) in g.iter().enumerate() {
                        prop_assert_eq!(gk.contains(t), s.contains(k));
                    }
                }
            }

            // every user receives each of its tiles exactly once at its own quality
            let msgs = build_messages(&part, &q, &ladder()).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let mut received = 0usize;
                for m in msgs.iter().filter(|m| m.audience.contains(k)) {
                    prop_assert_eq!(m.level, q[k]);
                    received += m.tile_count;
                }
                prop_assert_eq!(received, gk.len());
            }

            let multicast: f64 = msgs.iter().map(|m| m.demand_bps).sum();
            let unicast: f64 = unicast_messages(&g, &q, &ladder()).unwrap().iter().map(|m| m.demand_bps).sum();
            prop_assert!(multicast <= unicast + 1e-9);
            let shared = part.groups.iter().any(|(s, _)| {
                let levels: BTreeSet<usize> = s.users().map(|k| q[k]).collect();
                levels.len() < s.len()
            });
            prop_assert_eq!(multicast < unicast - 1e-9, shared);
        }
    }
}
