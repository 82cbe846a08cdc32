//! Reference structural-virality computation: breadth-first search from
//! every node over the explicit adjacency. Quadratic, used to validate the
//! incremental aggregates.

use std::collections::VecDeque;

use crate::cascade::CascadeTree;

/// Mean pairwise distance via all-pairs BFS; `None` below 2 nodes.
pub fn wiener_oracle(tree: &CascadeTree) -> Option<f64> {
    let n = tree.len();
    if n < 2 {
        return None;
    }
    let parents = tree.parents();
    let mut adj = vec![Vec::new(); n];
    for (child, &p) in parents.iter().enumerate().skip(1) {
        adj[child].push(p as usize);
        adj[p as usize].push(child);
    }
    let mut total: u128 = 0;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for start in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[start] = 0;
        queue.clear();
        queue.push_back(start);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if dist[y] == u32::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        total += dist.iter().map(|&d| d as u128).sum::<u128>();
    }
    // each unordered pair counted twice, so the ordered total is even
    let pairs = (n as u128) * (n as u128 - 1) / 2;
    Some((total / 2) as f64 / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_cascade_tree, FollowEdgeSet, RepostEvent};
    use crate::time::TimestampMs;

    #[test]
    fn oracle_on_known_small_trees() {
        let g = FollowEdgeSet::from_edges([(2u64, 1u64), (3, 2)]);
        let evs: Vec<RepostEvent> = (1..=3)
            .map(|u| RepostEvent {
                root_post: "p".into(),
                reposter: u,
                at: TimestampMs(10 * u as i64),
            })
            .collect();
        // path of 4 nodes: mean distance (4+1)/3
        let t = build_cascade_tree(TimestampMs(0), &evs, &g).unwrap();
        let sv = wiener_oracle(&t).unwrap();
        assert!((sv - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_undefined_below_two_nodes() {
        let t = crate::cascade::CascadeTree::new(TimestampMs(0));
        assert_eq!(wiener_oracle(&t), None);
    }
}
