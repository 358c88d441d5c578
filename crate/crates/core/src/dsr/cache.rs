//! Path cache. Every stored path starts at the owning node; inserting a
//! path also makes each of its prefixes available for the nodes it visits.

use std::collections::BTreeMap;

use crate::engine::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct CachedRoute {
    pub path: Vec<NodeId>,
    pub learned: SimTime,
}

impl CachedRoute {
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct RouteCache {
    owner: NodeId,
    by_dst: BTreeMap<NodeId, Vec<CachedRoute>>,
}

pub fn is_loop_free(path: &[NodeId]) -> bool {
    // Routes are short; quadratic scan beats hashing here.
    path.iter()
        .enumerate()
        .all(|(i, n)| !path[i + 1..].contains(n))
}

impl RouteCache {
    pub fn new(owner: NodeId) -> Self {
        RouteCache {
            owner,
            by_dst: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    /// Insert `path` (which must start at the owner) and all its prefixes.
    /// Returns false and stores nothing when the path is unusable.
    pub fn insert(&mut self, path: &[NodeId], now: SimTime) -> bool {
        if path.len() < 2 || path[0] != self.owner || !is_loop_free(path) {
            return false;
        }
        for k in 1..path.len() {
            let prefix = &path[..=k];
            let entries = self.by_dst.entry(path[k]).or_default();
            match entries.iter_mut().find(|r| r.path == prefix) {
                Some(existing) => existing.learned = now,
                None => entries.push(CachedRoute {
                    path: prefix.to_vec(),
                    learned: now,
                }),
            }
        }
        true
    }

    /// Fewest-hop path to `dst`; ties go to the most recently learned.
    pub fn lookup(&self, dst: NodeId) -> Option<&CachedRoute> {
        self.by_dst.get(&dst)?.iter().reduce(|best, r| {
            if r.hops() < best.hops() || (r.hops() == best.hops() && r.learned > best.learned) {
                r
            } else {
                best
            }
        })
    }

    pub fn contains(&self, dst: NodeId) -> bool {
        self.by_dst.get(&dst).is_some_and(|v| !v.is_empty())
    }

    /// Drop every path that uses the link `a -> b` or `b -> a`.
    pub fn remove_link(&mut self, a: NodeId, b: NodeId) -> usize {
        let mut removed = 0;
        self.by_dst.retain(|_, entries| {
            let before = entries.len();
            entries.retain(|r| !uses_link(&r.path, a, b));
            removed += before - entries.len();
            !entries.is_empty()
        });
        removed
    }

    pub fn len(&self) -> usize {
        self.by_dst.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_dst.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CachedRoute> {
        self.by_dst.values().flatten()
    }
}

pub fn uses_link(path: &[NodeId], a: NodeId, b: NodeId) -> bool {
    path.windows(2)
        .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn prefixes_become_routes() {
        let mut c = RouteCache::new(NodeId(0));
        assert!(c.insert(&ids(&[0, 1, 2]), SimTime::ZERO));
        assert_eq!(c.lookup(NodeId(1)).unwrap().path, ids(&[0, 1]));
        assert_eq!(c.lookup(NodeId(2)).unwrap().hops(), 2);
        assert!(c.lookup(NodeId(9)).is_none());
    }

    #[test]
    fn fewest_hops_then_most_recent() {
        let mut c = RouteCache::new(NodeId(0));
        c.insert(&ids(&[0, 1, 2, 3]), SimTime::from_secs(1));
        c.insert(&ids(&[0, 4, 3]), SimTime::from_secs(2));
        c.insert(&ids(&[0, 5, 3]), SimTime::from_secs(3));
        assert_eq!(c.lookup(NodeId(3)).unwrap().path, ids(&[0, 5, 3]));
        c.insert(&ids(&[0, 4, 3]), SimTime::from_secs(4));
        assert_eq!(c.lookup(NodeId(3)).unwrap().path, ids(&[0, 4, 3]));
    }

    #[test]
    fn rejects_loops_and_foreign_paths() {
        let mut c = RouteCache::new(NodeId(0));
        assert!(!c.insert(&ids(&[0, 1, 0, 2]), SimTime::ZERO));
        assert!(!c.insert(&ids(&[1, 2]), SimTime::ZERO));
        assert!(!c.insert(&ids(&[0]), SimTime::ZERO));
        assert!(c.is_empty());
    }

    #[test]
    fn purge_removes_every_path_over_the_link() {
        let mut c = RouteCache::new(NodeId(0));
        c.insert(&ids(&[0, 1, 2, 3]), SimTime::ZERO);
        c.insert(&ids(&[0, 4, 3]), SimTime::ZERO);
        c.remove_link(NodeId(2), NodeId(1));
        assert_eq!(c.lookup(NodeId(3)).unwrap().path, ids(&[0, 4, 3]));
        assert_eq!(c.lookup(NodeId(1)).unwrap().path, ids(&[0, 1]));
        assert!(c.lookup(NodeId(2)).is_none());
    }

    proptest! {
        #[test]
        fn cached_paths_stay_loop_free_and_purged(
            paths in prop::collection::vec(prop::collection::vec(1u32..8, 1..6), 1..12),
            a in 0u32..8, b in 0u32..8,
        ) {
            let mut c = RouteCache::new(NodeId(0));
            for p in &paths {
                let mut full = vec![NodeId(0)];
                full.extend(p.iter().map(|&i| NodeId(i)));
                c.insert(&full, SimTime::ZERO);
            }
            for r in c.iter() {
                prop_assert!(is_loop_free(&r.path));
                prop_assert_eq!(r.path[0], NodeId(0));
            }
            c.remove_link(NodeId(a), NodeId(b));
            for dst in 0..8 {
                if let Some(r) = c.lookup(NodeId(dst)) {
                    prop_assert!(!uses_link(&r.path, NodeId(a), NodeId(b)));
                }
            }
        }
    }
}
