//! Repost cascade reconstruction and structure metrics.
//!
//! The platform exposes repost events but not who-reposted-from-whom, so
//! edges are inferred from timing and the follow graph: a reposter attaches
//! to the user they follow who most recently shared the content before them,
//! falling back to the root post. Depth, breadth, and structural virality
//! (mean pairwise node distance, the Wiener index over pairs) are maintained
//! incrementally so a full time-resolved trajectory costs O(depth) per event
//! instead of a BFS per grid step.

pub mod oracle;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{EngagementSeries, MetricKind, PostId};
use crate::time::{TimestampMs, GRID_STEP_MS};
use crate::{Error, Result};

pub type UserId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepostEvent {
    pub root_post: PostId,
    pub reposter: UserId,
    pub at: TimestampMs,
}

/// Directed follow relationships. `follows(u)` lists the accounts whose
/// content reaches `u`; `followers(v)` is the reverse adjacency.
#[derive(Debug, Clone, Default)]
pub struct FollowEdgeSet {
    follows: HashMap<UserId, Vec<UserId>>,
    followers: HashMap<UserId, Vec<UserId>>,
}

impl FollowEdgeSet {
    pub fn from_edges(edges: impl IntoIterator<Item = (UserId, UserId)>) -> Self {
        let mut set = FollowEdgeSet::default();
        for (follower, followee) in edges {
            set.follows.entry(follower).or_default().push(followee);
            set.followers.entry(followee).or_default().push(follower);
        }
        for list in set.follows.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        for list in set.followers.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        set
    }

    pub fn follows(&self, user: UserId) -> &[UserId] {
        self.follows.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn followers(&self, user: UserId) -> &[UserId] {
        self.followers.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_count(&self) -> usize {
        self.follows.values().map(Vec::len).sum()
    }

    pub fn out_degrees(&self) -> impl Iterator<Item = (UserId, usize)> + '_ {
        self.follows.iter().map(|(u, v)| (*u, v.len()))
    }

    /// Every (follower, followee) pair, sorted, for deterministic export.
    pub fn edges(&self) -> Vec<(UserId, UserId)> {
        let mut out: Vec<(UserId, UserId)> = self
            .follows
            .iter()
            .flat_map(|(f, tos)| tos.iter().map(move |t| (*f, *t)))
            .collect();
        out.sort_unstable();
        out
    }
}

/// A diffusion tree rooted at the original post (node 0). Repost nodes carry
/// the reposting user and time. Distances are exact integers throughout, so
/// the running Wiener sum is exact.
#[derive(Debug, Clone)]
pub struct CascadeTree {
    users: Vec<Option<UserId>>,
    at: Vec<TimestampMs>,
    parent: Vec<u32>,
    depth: Vec<u32>,
    /// subtree node count, including the node itself
    cnt: Vec<u64>,
    /// sum of distances from the node to everything in its subtree
    down: Vec<u64>,
    by_user: HashMap<UserId, u32>,
    level_counts: Vec<u64>,
    wiener: u64,
    max_depth: u32,
    max_breadth: u64,
}

impl CascadeTree {
    pub fn new(root_created_at: TimestampMs) -> Self {
        CascadeTree {
            users: vec![None],
            at: vec![root_created_at],
            parent: vec![0],
            depth: vec![0],
            cnt: vec![1],
            down: vec![0],
            by_user: HashMap::new(),
            level_counts: vec![1],
            wiener: 0,
            max_depth: 0,
            max_breadth: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a tree always has its root
    }

    pub fn repost_count(&self) -> usize {
        self.users.len() - 1
    }

    pub fn parent_of(&self, node: u32) -> u32 {
        self.parent[node as usize]
    }

    pub fn depth_of(&self, node: u32) -> u32 {
        self.depth[node as usize]
    }

    pub fn node_of_user(&self, user: UserId) -> Option<u32> {
        self.by_user.get(&user).copied()
    }

    /// Reposting user at a node; None for the root.
    pub fn user_of(&self, node: u32) -> Option<UserId> {
        self.users[node as usize]
    }

    /// Deepest repost node; 0 when nothing has been reposted.
    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Largest number of repost nodes at any single depth level; 0 when
    /// nothing has been reposted.
    pub fn max_breadth(&self) -> u64 {
        self.max_breadth
    }

    /// Mean distance over unordered node pairs. Undefined below 2 nodes.
    pub fn structural_virality(&self) -> Option<f64> {
        let n = self.users.len() as u64;
        if n < 2 {
            return None;
        }
        Some(self.wiener as f64 / (n * (n - 1) / 2) as f64)
    }

    pub fn wiener_sum(&self) -> u64 {
        self.wiener
    }

    /// Sum of distances from `node` to every current node, via one walk to
    /// the root using the subtree aggregates.
    fn distance_sum(&self, node: u32) -> u64 {
        let mut s = self.down[node as usize];
        let mut x = node as usize;
        let mut hops = 0u64;
        while x != 0 {
            let p = self.parent[x] as usize;
            hops += 1;
            // nodes in subtree(p) but not subtree(x): distance via p
            s += self.down[p] - self.down[x] - self.cnt[x];
            s += hops * (self.cnt[p] - self.cnt[x]);
            x = p;
        }
        s
    }

    /// Chooses the parent for a repost at time `t` by user `u`: the followed
    /// user who most recently shared strictly before `t`. Timestamp ties go
    /// to the smaller user id; no candidate means the root.
    fn attribute_parent(&self, user: UserId, t: TimestampMs, graph: &FollowEdgeSet) -> u32 {
        let mut best: Option<(TimestampMs, UserId, u32)> = None;
        for &followee in graph.follows(user) {
            if let Some(&idx) = self.by_user.get(&followee) {
                let at = self.at[idx as usize];
                if at < t {
                    let better = match best {
                        None => true,
                        Some((bat, buser, _)) => at > bat || (at == bat && followee < buser),
                    };
                    if better {
                        best = Some((at, followee, idx));
                    }
                }
            }
        }
        best.map(|(_, _, idx)| idx).unwrap_or(0)
    }

    /// Inserts a repost, returning its node id, or `None` if this user
    /// already reposted (the earliest repost wins; later ones are ignored).
    pub fn insert_repost(
        &mut self,
        user: UserId,
        at: TimestampMs,
        graph: &FollowEdgeSet,
    ) -> Option<u32> {
        if self.by_user.contains_key(&user) {
            return None;
        }
        let parent = self.attribute_parent(user, at, graph);
        let n_before = self.users.len() as u64;
        self.wiener += self.distance_sum(parent) + n_before;

        let idx = self.users.len() as u32;
        let d = self.depth[parent as usize] + 1;
        self.users.push(Some(user));
        self.at.push(at);
        self.parent.push(parent);
        self.depth.push(d);
        self.cnt.push(1);
        self.down.push(0);
        self.by_user.insert(user, idx);

        if self.level_counts.len() <= d as usize {
            self.level_counts.resize(d as usize + 1, 0);
        }
        self.level_counts[d as usize] += 1;
        self.max_breadth = self.max_breadth.max(self.level_counts[d as usize]);
        self.max_depth = self.max_depth.max(d);

        let mut x = idx as usize;
        let mut hops = 0u64;
        while x != 0 {
            let p = self.parent[x] as usize;
            hops += 1;
            self.cnt[p] += 1;
            self.down[p] += hops;
            x = p;
        }
        Some(idx)
    }

    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    pub fn node_times(&self) -> &[TimestampMs] {
        &self.at
    }
}

/// Sorts, validates, and deduplicates one post's repost events: ascending by
/// (time, user), events before post creation rejected, repeat reposts by the
/// same user keep the earliest.
pub fn prepare_events(
    events: &[RepostEvent],
    created_at: TimestampMs,
) -> Result<Vec<RepostEvent>> {
    let mut evs: Vec<RepostEvent> = events.to_vec();
    for e in &evs {
        if e.at < created_at {
            return Err(Error::DataQuality(format!(
                "repost of {:?} by user {} precedes post creation",
                e.root_post, e.reposter
            )));
        }
    }
    evs.sort_by(|a, b| (a.at, a.reposter).cmp(&(b.at, b.reposter)));
    let mut seen = std::collections::HashSet::new();
    evs.retain(|e| seen.insert(e.reposter));
    Ok(evs)
}

/// Builds the complete cascade tree for one post.
pub fn build_cascade_tree(
    created_at: TimestampMs,
    events: &[RepostEvent],
    graph: &FollowEdgeSet,
) -> Result<CascadeTree> {
    let evs = prepare_events(events, created_at)?;
    let mut tree = CascadeTree::new(created_at);
    for e in &evs {
        tree.insert_repost(e.reposter, e.at, graph);
    }
    Ok(tree)
}

/// Time-resolved cascade metrics on the grid, steps `0..=horizon_steps` of
/// post age. Depth and breadth start at step 0; structural virality enters at
/// the first step where the cascade has 2 nodes.
pub fn cascade_metric_series(
    created_at: TimestampMs,
    events: &[RepostEvent],
    graph: &FollowEdgeSet,
    horizon_steps: i64,
) -> Result<std::collections::BTreeMap<MetricKind, EngagementSeries>> {
    let evs = prepare_events(events, created_at)?;
    let mut tree = CascadeTree::new(created_at);
    let mut next_event = 0usize;

    let mut depth_vals = Vec::with_capacity(horizon_steps as usize + 1);
    let mut breadth_vals = Vec::with_capacity(horizon_steps as usize + 1);
    let mut sv_start: Option<i64> = None;
    let mut sv_vals = Vec::new();

    for step in 0..=horizon_steps {
        let cutoff = created_at.0 + step * GRID_STEP_MS;
        while next_event < evs.len() && evs[next_event].at.0 <= cutoff {
            tree.insert_repost(evs[next_event].reposter, evs[next_event].at, graph);
            next_event += 1;
        }
        depth_vals.push(tree.max_depth() as f64);
        breadth_vals.push(tree.max_breadth() as f64);
        if let Some(sv) = tree.structural_virality() {
            if sv_start.is_none() {
                sv_start = Some(step);
            }
            sv_vals.push(sv);
        }
    }

    let mut out = std::collections::BTreeMap::new();
    out.insert(
        MetricKind::CascadeMaxDepth,
        EngagementSeries {
            metric: MetricKind::CascadeMaxDepth,
            start_step: 0,
            values: depth_vals,
            availability: None,
        },
    );
    out.insert(
        MetricKind::CascadeMaxBreadth,
        EngagementSeries {
            metric: MetricKind::CascadeMaxBreadth,
            start_step: 0,
            values: breadth_vals,
            availability: None,
        },
    );
    if let Some(start) = sv_start {
        out.insert(
            MetricKind::StructuralVirality,
            EngagementSeries {
                metric: MetricKind::StructuralVirality,
                start_step: start,
                values: sv_vals,
                availability: None,
            },
        );
    }
    Ok(out)
}

/// Cumulative deduplicated repost count at each grid step, derived from the
/// event log rather than sampled observations.
pub fn repost_count_series(
    created_at: TimestampMs,
    events: &[RepostEvent],
    horizon_steps: i64,
) -> Result<EngagementSeries> {
    let evs = prepare_events(events, created_at)?;
    let values = (0..=horizon_steps)
        .map(|step| {
            let cutoff = created_at.0 + step * GRID_STEP_MS;
            evs.partition_point(|e| e.at.0 <= cutoff) as f64
        })
        .collect();
    Ok(EngagementSeries {
        metric: MetricKind::Reposts,
        start_step: 0,
        values,
        availability: None,
    })
}

#[cfg(test)]
mod tests {
    use super::oracle::wiener_oracle;
    use super::*;

    fn graph(edges: &[(UserId, UserId)]) -> FollowEdgeSet {
        FollowEdgeSet::from_edges(edges.iter().copied())
    }

    fn ev(user: UserId, at_ms: i64) -> RepostEvent {
        RepostEvent {
            root_post: "p".into(),
            reposter: user,
            at: TimestampMs(at_ms),
        }
    }

    #[test]
    fn root_only_tree_metrics() {
        let t = CascadeTree::new(TimestampMs(0));
        assert_eq!(t.max_depth(), 0);
        assert_eq!(t.max_breadth(), 0);
        assert_eq!(t.structural_virality(), None);
        assert_eq!(t.repost_count(), 0);
    }

    #[test]
    fn parent_is_most_recent_followed_sharer() {
        // u3 follows u1 and u2; u1 shares at 10, u2 at 20, u3 at 30
        let g = graph(&[(3, 1), (3, 2)]);
        let t = build_cascade_tree(
            TimestampMs(0),
            &[ev(1, 10), ev(2, 20), ev(3, 30)],
            &g,
        )
        .unwrap();
        // nodes: 0 root, 1=u1, 2=u2, 3=u3
        assert_eq!(t.parents(), &[0, 0, 0, 2]);
        assert_eq!(t.depth_of(3), 2);
        assert_eq!(t.max_depth(), 2);
        assert_eq!(t.max_breadth(), 2); // u1 and u2 at level 1
    }

    #[test]
    fn no_followed_sharer_attaches_to_root() {
        let g = graph(&[(2, 9)]); // u2 follows someone who never shared
        let t = build_cascade_tree(TimestampMs(0), &[ev(1, 10), ev(2, 20)], &g).unwrap();
        assert_eq!(t.parents(), &[0, 0, 0]);
    }

    #[test]
    fn simultaneous_candidates_tie_break_on_user_id() {
        let g = graph(&[(5, 7), (5, 2)]);
        let t = build_cascade_tree(
            TimestampMs(0),
            &[ev(7, 10), ev(2, 10), ev(5, 20)],
            &g,
        )
        .unwrap();
        // u2 and u7 both shared at t=10; u5 attaches under u2 (smaller id)
        let n5 = t.node_of_user(5).unwrap();
        let parent_user = t.users[t.parent_of(n5) as usize];
        assert_eq!(parent_user, Some(2));
    }

    #[test]
    fn sharer_at_same_instant_is_not_a_candidate() {
        let g = graph(&[(2, 1)]);
        let t = build_cascade_tree(TimestampMs(0), &[ev(1, 10), ev(2, 10)], &g).unwrap();
        // u1 shared at the same ms as u2's repost: not strictly prior -> root
        assert_eq!(t.parents(), &[0, 0, 0]);
    }

    #[test]
    fn repeat_reposts_keep_earliest() {
        let g = graph(&[]);
        let t = build_cascade_tree(
            TimestampMs(0),
            &[ev(1, 10), ev(1, 50), ev(2, 60)],
            &g,
        )
        .unwrap();
        assert_eq!(t.repost_count(), 2);
        assert_eq!(t.at[t.node_of_user(1).unwrap() as usize], TimestampMs(10));
    }

    #[test]
    fn event_order_permutation_is_irrelevant() {
        let g = graph(&[(2, 1), (3, 2), (4, 1), (5, 4)]);
        let evs = vec![ev(1, 10), ev(2, 20), ev(3, 30), ev(4, 25), ev(5, 40)];
        let a = build_cascade_tree(TimestampMs(0), &evs, &g).unwrap();
        let mut rev = evs.clone();
        rev.reverse();
        let b = build_cascade_tree(TimestampMs(0), &rev, &g).unwrap();
        assert_eq!(a.parents(), b.parents());
        assert_eq!(a.wiener_sum(), b.wiener_sum());
    }

    #[test]
    fn star_and_path_closed_forms() {
        let g = graph(&[]);
        for k in 1..40u64 {
            let evs: Vec<RepostEvent> = (0..k).map(|i| ev(i + 1, 10 + i as i64)).collect();
            let t = build_cascade_tree(TimestampMs(0), &evs, &g).unwrap();
            let sv = t.structural_virality().unwrap();
            let expect = 2.0 * k as f64 / (k as f64 + 1.0);
            assert!((sv - expect).abs() < 1e-12, "star k={k}: {sv} vs {expect}");
            assert_eq!(t.max_depth(), 1);
            assert_eq!(t.max_breadth(), k);
        }
        // chain: each user follows only the previous sharer
        for n in 2..40u64 {
            let edges: Vec<(UserId, UserId)> = (2..n).map(|i| (i, i - 1)).collect();
            let g = graph(&edges);
            let evs: Vec<RepostEvent> = (1..n).map(|i| ev(i, 10 * i as i64)).collect();
            let t = build_cascade_tree(TimestampMs(0), &evs, &g).unwrap();
            let sv = t.structural_virality().unwrap();
            let expect = (n as f64 + 1.0) / 3.0;
            assert!((sv - expect).abs() < 1e-12, "path n={n}: {sv} vs {expect}");
            assert_eq!(t.max_depth(), n as u32 - 1);
            assert_eq!(t.max_breadth(), 1);
        }
    }

    #[test]
    fn incremental_wiener_matches_bfs_oracle_on_random_trees() {
        // deterministic pseudo-random stream
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..60 {
            let n = 2 + (next() % 120) as u64;
            // random follow graph over n users
            let mut edges = Vec::new();
            for u in 1..=n {
                let deg = next() % 5;
                for _ in 0..deg {
                    let v = 1 + next() % n;
                    if v != u {
                        edges.push((u, v));
                    }
                }
            }
            let g = graph(&edges);
            let mut evs = Vec::new();
            let mut t_ms = 0i64;
            for u in 1..=n {
                t_ms += (next() % 3) as i64; // allow timestamp collisions
                evs.push(ev(u, 1 + t_ms));
            }
            let tree = build_cascade_tree(TimestampMs(0), &evs, &g).unwrap();
            let inc = tree.structural_virality().unwrap();
            let orc = wiener_oracle(&tree).unwrap();
            assert!(
                (inc - orc).abs() < 1e-9,
                "trial {trial}: incremental {inc} vs oracle {orc}"
            );
        }
    }

    #[test]
    fn metric_series_trajectory() {
        // chain of 3 reposts at 10, 40, 70 minutes
        let g = graph(&[(2, 1), (3, 2)]);
        let min = 60_000i64;
        let evs = vec![ev(1, 10 * min), ev(2, 40 * min), ev(3, 70 * min)];
        let series = cascade_metric_series(TimestampMs(0), &evs, &g, 6).unwrap();
        let depth = &series[&MetricKind::CascadeMaxDepth];
        assert_eq!(depth.start_step, 0);
        // steps at 0,15,30,45,60,75,90 min -> depths 0,1,1,2,2,3,3
        assert_eq!(depth.values, vec![0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let sv = &series[&MetricKind::StructuralVirality];
        // virality defined from the 15-min step onward (2 nodes)
        assert_eq!(sv.start_step, 1);
        assert_eq!(sv.values[0], 1.0);
        // at 45 min: path of 3 nodes -> (3+1)/3
        assert!((sv.values[2] - 4.0 / 3.0).abs() < 1e-12);
        let breadth = &series[&MetricKind::CascadeMaxBreadth];
        assert_eq!(breadth.values[6], 1.0);
    }

    #[test]
    fn rejects_repost_before_creation() {
        let g = graph(&[]);
        assert!(build_cascade_tree(TimestampMs(100), &[ev(1, 50)], &g).is_err());
    }
}
