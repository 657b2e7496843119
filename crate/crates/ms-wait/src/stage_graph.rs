//! Progressive multi-stage model topology.
//!
//! A stage graph is a rooted tree: one root, every other stage has exactly
//! one parent, every stage reachable from the root. Stages with no children
//! are terminal. Graphs violating these properties are rejected at
//! construction, never repaired.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Opaque stage identifier. No ordering semantics are attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StageId(pub u32);

impl Serialize for StageId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.0)
    }
}

// Accepts plain integers and numeric strings, so stage ids work as JSON map
// keys (which always arrive as strings).
impl<'de> Deserialize<'de> for StageId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = StageId;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a nonnegative stage id")
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<StageId, E> {
                u32::try_from(v)
                    .map(StageId)
                    .map_err(|_| E::custom("stage id out of range"))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<StageId, E> {
                u32::try_from(v)
                    .map(StageId)
                    .map_err(|_| E::custom("stage id out of range"))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<StageId, E> {
                v.parse::<u32>()
                    .map(StageId)
                    .map_err(|_| E::custom(format!("bad stage id '{v}'")))
            }
        }
        d.deserialize_any(V)
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for StageId {
    fn from(v: u32) -> Self {
        StageId(v)
    }
}

/// Validated progressive tree of stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageGraph {
    stages: Vec<StageId>,
    parent: BTreeMap<StageId, Option<StageId>>,
    children: BTreeMap<StageId, Vec<StageId>>,
    root: StageId,
}

/// Serialized form: `{ "stages": [...], "edges": [[parent, child], ...] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageGraphSpec {
    pub stages: Vec<StageId>,
    pub edges: Vec<(StageId, StageId)>,
}

impl StageGraph {
    /// Build and validate a graph from a stage list and parent->child edges.
    pub fn build(stages: &[StageId], edges: &[(StageId, StageId)]) -> Result<Self> {
        let mut parent: BTreeMap<StageId, Option<StageId>> = BTreeMap::new();
        for &s in stages {
            if parent.insert(s, None).is_some() {
                return Err(Error::DuplicateStage(s));
            }
        }
        let mut children: BTreeMap<StageId, Vec<StageId>> =
            stages.iter().map(|&s| (s, Vec::new())).collect();
        for &(from, to) in edges {
            if !parent.contains_key(&from) {
                return Err(Error::UnknownStage(from));
            }
            if !parent.contains_key(&to) {
                return Err(Error::UnknownStage(to));
            }
            match parent.get_mut(&to).unwrap() {
                Some(_) => return Err(Error::MultipleParents(to)),
                slot => *slot = Some(from),
            }
            children.get_mut(&from).unwrap().push(to);
        }

        let mut roots = parent.iter().filter(|(_, p)| p.is_none()).map(|(&s, _)| s);
        let root = match (roots.next(), roots.next()) {
            (Some(r), None) => r,
            (Some(a), Some(b)) => return Err(Error::MultipleRoots(a, b)),
            // Every stage has a parent: with >=1 stage this means a cycle.
            (None, _) => return Err(Error::CycleDetected),
        };

        // Walk down from the root; anything unreached is either in a cycle
        // among non-root stages or disconnected. Tree edges cannot cycle
        // through the root (the root has no parent), so unreached stages with
        // a parent chain leading back into themselves are cycles.
        let mut reached: BTreeMap<StageId, bool> = stages.iter().map(|&s| (s, false)).collect();
        let mut stack = vec![root];
        while let Some(s) = stack.pop() {
            if std::mem::replace(reached.get_mut(&s).unwrap(), true) {
                continue;
            }
            stack.extend(children[&s].iter().copied());
        }
        for (&s, &ok) in &reached {
            if !ok {
                // Distinguish a genuine cycle from a dangling stage.
                let mut cur = s;
                let mut hops = 0;
                while let Some(p) = parent[&cur] {
                    if p == s || hops > stages.len() {
                        return Err(Error::CycleDetected);
                    }
                    cur = p;
                    hops += 1;
                }
                return Err(Error::UnreachableStage(s));
            }
        }

        Ok(StageGraph {
            stages: stages.to_vec(),
            parent,
            children,
            root,
        })
    }

    pub fn from_spec(spec: &StageGraphSpec) -> Result<Self> {
        Self::build(&spec.stages, &spec.edges)
    }

    /// Inverse of `build`: the defining stage list and edge set.
    pub fn to_spec(&self) -> StageGraphSpec {
        let mut edges = Vec::new();
        for &s in &self.stages {
            for &c in &self.children[&s] {
                edges.push((s, c));
            }
        }
        StageGraphSpec {
            stages: self.stages.clone(),
            edges,
        }
    }

    pub fn root(&self) -> StageId {
        self.root
    }

    pub fn stages(&self) -> &[StageId] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn contains(&self, j: StageId) -> bool {
        self.parent.contains_key(&j)
    }

    fn check(&self, j: StageId) -> Result<()> {
        if self.contains(j) {
            Ok(())
        } else {
            Err(Error::UnknownStage(j))
        }
    }

    /// Children of `j`, in edge insertion order.
    pub fn successors(&self, j: StageId) -> Result<&[StageId]> {
        self.check(j)?;
        Ok(&self.children[&j])
    }

    pub fn predecessor(&self, j: StageId) -> Result<Option<StageId>> {
        self.check(j)?;
        Ok(self.parent[&j])
    }

    pub fn is_terminal(&self, j: StageId) -> Result<bool> {
        self.check(j)?;
        Ok(self.children[&j].is_empty())
    }

    pub fn is_edge(&self, from: StageId, to: StageId) -> bool {
        self.children.get(&from).is_some_and(|c| c.contains(&to))
    }

    /// The unique chain `from -> ... -> to` (inclusive), which exists iff
    /// `from` is an ancestor of `to` or equal to it.
    pub fn unique_path(&self, from: StageId, to: StageId) -> Result<Vec<StageId>> {
        self.check(from)?;
        self.check(to)?;
        let mut rev = vec![to];
        let mut cur = to;
        while cur != from {
            match self.parent[&cur] {
                Some(p) => {
                    rev.push(p);
                    cur = p;
                }
                None => return Err(Error::NoPath { from, to }),
            }
        }
        rev.reverse();
        Ok(rev)
    }

    /// Consecutive edges of `unique_path(from, to)`.
    pub fn path_edges(&self, from: StageId, to: StageId) -> Result<Vec<(StageId, StageId)>> {
        let path = self.unique_path(from, to)?;
        Ok(path.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// Non-root stages in id order; these index the Aalen covariate columns.
    pub fn non_root_stages(&self) -> Vec<StageId> {
        let mut v: Vec<StageId> = self
            .stages
            .iter()
            .copied()
            .filter(|&s| s != self.root)
            .collect();
        v.sort();
        v
    }

    /// The six-stage example graph: 0 -> {1, 2}, 1 -> {3, 4}, 3 -> 5.
    pub fn six_stage_example() -> Self {
        let stages: Vec<StageId> = (0..6).map(StageId).collect();
        let edges = [(0, 1), (0, 2), (1, 3), (1, 4), (3, 5)]
            .map(|(a, b)| (StageId(a), StageId(b)));
        Self::build(&stages, &edges).expect("static graph is valid")
    }
}
