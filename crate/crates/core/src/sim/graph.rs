//! Synthetic follow graph with heavy-tailed out-degrees and preferential
//! attachment: who a user follows is weighted by a per-user attractiveness
//! drawn from the same power-law family, so a few accounts accumulate large
//! follower counts — the regime where cascades actually branch.

use serde::{Deserialize, Serialize};

use super::rng::{purpose, Stream};
use crate::cascade::{FollowEdgeSet, UserId};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub users: u64,
    /// Power-law exponent of the out-degree density (tail index + 1).
    pub degree_exponent: f64,
    pub min_out_degree: u64,
    pub max_out_degree: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            users: 10_000,
            degree_exponent: 2.5,
            min_out_degree: 3,
            max_out_degree: 500,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users < 2 {
            return Err(Error::InvalidConfig("graph needs at least 2 users".into()));
        }
        if !(self.degree_exponent > 1.0) {
            return Err(Error::InvalidConfig(
                "degree exponent must exceed 1".into(),
            ));
        }
        if self.min_out_degree == 0 || self.min_out_degree > self.max_out_degree {
            return Err(Error::InvalidConfig(
                "out-degree bounds must satisfy 1 <= min <= max".into(),
            ));
        }
        // leave room to pick distinct targets without stalling the sampler
        if self.max_out_degree >= self.users / 2 {
            return Err(Error::InvalidConfig(
                "max out-degree must be below half the user count".into(),
            ));
        }
        Ok(())
    }
}

/// The shared environment posts diffuse through.
pub struct World {
    pub graph: FollowEdgeSet,
    pub attractiveness: Vec<f64>,
    /// Prefix sums of attractiveness for weighted user selection.
    cumulative: Vec<f64>,
}

impl World {
    pub fn build(seed: u64, cfg: &GraphConfig) -> Result<World> {
        cfg.validate()?;
        let n = cfg.users;

        let mut attractiveness = Vec::with_capacity(n as usize);
        let mut cumulative = Vec::with_capacity(n as usize);
        let mut total = 0.0;
        for u in 0..n {
            let a = Stream::keyed(&[seed, purpose::ATTRACT, u]).pareto(1.5, 1.0);
            attractiveness.push(a);
            total += a;
            cumulative.push(total);
        }

        let mut edges: Vec<(UserId, UserId)> = Vec::new();
        for u in 0..n {
            let mut s = Stream::keyed(&[seed, purpose::DEGREE, u]);
            // tail index (exponent - 1) on the degree survival function
            let raw = s.pareto(cfg.degree_exponent - 1.0, cfg.min_out_degree as f64);
            let degree = (raw.floor() as u64).min(cfg.max_out_degree);

            let mut picks = std::collections::HashSet::with_capacity(degree as usize);
            let mut t = Stream::keyed(&[seed, purpose::TARGET, u]);
            while (picks.len() as u64) < degree {
                let v = pick_weighted(&cumulative, t.next_f64());
                if v != u && picks.insert(v) {
                    edges.push((u, v));
                }
            }
        }
        edges.sort_unstable();

        Ok(World {
            graph: FollowEdgeSet::from_edges(edges),
            attractiveness,
            cumulative,
        })
    }

    /// Wraps an explicit graph, e.g. a hand-built topology for tests.
    pub fn with_graph(graph: FollowEdgeSet, attractiveness: Vec<f64>) -> World {
        let mut cumulative = Vec::with_capacity(attractiveness.len());
        let mut total = 0.0;
        for &a in &attractiveness {
            total += a;
            cumulative.push(total);
        }
        World {
            graph,
            attractiveness,
            cumulative,
        }
    }

    pub fn users(&self) -> u64 {
        self.attractiveness.len() as u64
    }

    /// User chosen with probability proportional to attractiveness.
    pub fn pick_user(&self, s: &mut Stream) -> UserId {
        pick_weighted(&self.cumulative, s.next_f64())
    }
}

fn pick_weighted(cumulative: &[f64], u: f64) -> UserId {
    let target = u * cumulative[cumulative.len() - 1];
    let idx = cumulative.partition_point(|&c| c <= target);
    idx.min(cumulative.len() - 1) as UserId
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_graph() {
        let cfg = GraphConfig {
            users: 300,
            max_out_degree: 100,
            ..GraphConfig::default()
        };
        let a = World::build(11, &cfg).unwrap();
        let b = World::build(11, &cfg).unwrap();
        assert_eq!(a.graph.edge_count(), b.graph.edge_count());
        for u in 0..300 {
            assert_eq!(a.graph.follows(u), b.graph.follows(u));
        }
        let c = World::build(12, &cfg).unwrap();
        assert!((0..300).any(|u| a.graph.follows(u) != c.graph.follows(u)));
    }

    #[test]
    fn degrees_respect_bounds_and_distinctness() {
        let cfg = GraphConfig {
            users: 500,
            min_out_degree: 2,
            max_out_degree: 40,
            ..GraphConfig::default()
        };
        let w = World::build(5, &cfg).unwrap();
        for u in 0..500 {
            let follows = w.graph.follows(u);
            assert!(follows.len() >= 2 && follows.len() <= 40);
            assert!(!follows.contains(&u));
            let mut dedup = follows.to_vec();
            dedup.dedup();
            assert_eq!(dedup.len(), follows.len(), "duplicate follow edge");
        }
    }

    #[test]
    fn huge_exponent_degenerates_to_constant_degree() {
        let cfg = GraphConfig {
            users: 200,
            degree_exponent: 1e9,
            min_out_degree: 4,
            max_out_degree: 50,
            ..GraphConfig::default()
        };
        let w = World::build(3, &cfg).unwrap();
        for u in 0..200 {
            assert_eq!(w.graph.follows(u).len(), 4);
        }
    }

    #[test]
    fn tail_exponent_recovered_by_mle() {
        let cfg = GraphConfig {
            users: 10_000,
            degree_exponent: 2.5,
            min_out_degree: 3,
            max_out_degree: 4_000,
            ..GraphConfig::default()
        };
        let w = World::build(31, &cfg).unwrap();
        let degrees: Vec<f64> = (0..cfg.users)
            .map(|u| w.graph.follows(u).len() as f64)
            .collect();
        // discrete power-law MLE with the standard half-step offset
        let x_min = cfg.min_out_degree as f64;
        let log_sum: f64 = degrees.iter().map(|&d| (d / (x_min - 0.5)).ln()).sum();
        let alpha_hat = 1.0 + degrees.len() as f64 / log_sum;
        assert!(
            (alpha_hat - 2.5).abs() < 0.3,
            "tail exponent estimate {alpha_hat}"
        );
    }

    #[test]
    fn weighted_pick_favors_attractive_users() {
        let cfg = GraphConfig {
            users: 1_000,
            max_out_degree: 200,
            ..GraphConfig::default()
        };
        let w = World::build(17, &cfg).unwrap();
        let top = (0..1_000u64)
            .max_by(|&a, &b| {
                w.attractiveness[a as usize].total_cmp(&w.attractiveness[b as usize])
            })
            .unwrap();
        let mut s = Stream::keyed(&[99, 1]);
        let n = 20_000;
        let hits = (0..n).filter(|_| w.pick_user(&mut s) == top).count();
        let expected = w.attractiveness[top as usize]
            / w.attractiveness.iter().sum::<f64>();
        let share = hits as f64 / n as f64;
        assert!(
            (share - expected).abs() < 0.02,
            "share {share} vs expected {expected}"
        );
    }

    #[test]
    fn config_validation() {
        assert!(World::build(1, &GraphConfig { users: 1, ..Default::default() }).is_err());
        assert!(World::build(
            1,
            &GraphConfig {
                degree_exponent: 1.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(World::build(
            1,
            &GraphConfig {
                users: 100,
                max_out_degree: 60,
                ..Default::default()
            }
        )
        .is_err());
    }
}
