//! Immutable grouped undirected network.
//!
//! Nodes are dense indices `0..N`, each labelled with a group `0..w`.
//! Adjacency is kept per node and per target group as a sorted list, so a
//! degree query restricted to a node subset costs one membership probe per
//! neighbour in that group.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type GroupId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedNetwork {
    group_of: Vec<GroupId>,
    members: Vec<Vec<NodeId>>,
    // adj[node][group] -> sorted neighbours of `node` lying in `group`
    adj: Vec<Vec<Vec<NodeId>>>,
    edges: Vec<(NodeId, NodeId)>,
    group_names: Vec<String>,
    node_labels: Option<Vec<String>>,
}

impl GroupedNetwork {
    /// Build a network from node labels and an edge list.
    ///
    /// Edges are stored once as `(min, max)`; repeated pairs collapse.
    /// Self-loops and out-of-range ids are rejected.
    pub fn new(
        num_groups: usize,
        group_of: Vec<GroupId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        if num_groups == 0 {
            return Err(Error::Input("a network needs at least one group".into()));
        }
        let n = group_of.len();
        let mut members = vec![Vec::new(); num_groups];
        for (node, &g) in group_of.iter().enumerate() {
            if g >= num_groups {
                return Err(Error::UnknownGroup(g));
            }
            members[g].push(node);
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n {
                return Err(Error::UnknownNode(a));
            }
            if b >= n {
                return Err(Error::UnknownNode(b));
            }
            if a == b {
                return Err(Error::Input(format!("self-loop on node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adj = vec![vec![Vec::new(); num_groups]; n];
        for &(a, b) in &set {
            adj[a][group_of[b]].push(b);
            adj[b][group_of[a]].push(a);
        }
        for lists in &mut adj {
            for l in lists.iter_mut() {
                l.sort_unstable();
            }
        }
        Ok(Self {
            group_of,
            members,
            adj,
            edges: set.into_iter().collect(),
            group_names: (1..=num_groups).map(|g| g.to_string()).collect(),
            node_labels: None,
        })
    }

    /// Attach display names for groups (defaults are `"1"`, `"2"`, ...).
    pub fn with_group_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_groups() {
            return Err(Error::Input(format!(
                "{} group names given for {} groups",
                names.len(),
                self.num_groups()
            )));
        }
        self.group_names = names;
        Ok(self)
    }

    /// Attach external node ids (side table; internal ids stay dense).
    pub fn with_node_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::Input(format!(
                "{} node labels given for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.group_of.len()
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(a, b)` pairs with `a < b`, sorted.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn group_of(&self, node: NodeId) -> Result<GroupId> {
        self.group_of
            .get(node)
            .copied()
            .ok_or(Error::UnknownNode(node))
    }

    pub fn group_labels(&self) -> &[GroupId] {
        &self.group_of
    }

    /// Sorted members of group `g`.
    pub fn group_members(&self, g: GroupId) -> Result<&[NodeId]> {
        self.members
            .get(g)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownGroup(g))
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    /// External id of a node, falling back to its dense index.
    pub fn node_label(&self, node: NodeId) -> String {
        match &self.node_labels {
            Some(l) => l[node].clone(),
            None => node.to_string(),
        }
    }

    /// Sorted neighbours of `node` inside group `s`.
    pub fn neighbors_in(&self, node: NodeId, s: GroupId) -> Result<&[NodeId]> {
        let lists = self.adj.get(node).ok_or(Error::UnknownNode(node))?;
        lists
            .get(s)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownGroup(s))
    }

    /// Number of neighbours of `i` in group `s` that lie inside `within`.
    ///
    /// With [`Within::All`] this is the population degree; restricted to a
    /// sample (or subsample) it is the observed degree at that level.
    pub fn degree_between(&self, i: NodeId, s: GroupId, within: Within<'_>) -> Result<usize> {
        let nbrs = self.neighbors_in(i, s)?;
        Ok(match within {
            Within::All => nbrs.len(),
            Within::Subset(view) => nbrs.iter().filter(|&&j| view.contains(j)).count(),
        })
    }

    /// Whether `i` has at least one neighbour of group `s` inside `within`.
    pub fn linkage_indicator(&self, i: NodeId, s: GroupId, within: Within<'_>) -> Result<bool> {
        let nbrs = self.neighbors_in(i, s)?;
        Ok(match within {
            Within::All => !nbrs.is_empty(),
            Within::Subset(view) => nbrs.iter().any(|&j| view.contains(j)),
        })
    }

    /// Maximum population degree from group `r` into group `s`.
    pub fn max_degree_between(&self, r: GroupId, s: GroupId) -> Result<usize> {
        let mut best = 0;
        for &i in self.group_members(r)? {
            best = best.max(self.neighbors_in(i, s)?.len());
        }
        Ok(best)
    }
}

/// Restriction applied to degree and linkage queries.
#[derive(Debug, Clone, Copy)]
pub enum Within<'a> {
    All,
    Subset(&'a NodeSubsetView),
}

/// Per-group sorted node lists plus an O(1) membership table.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSubsetView {
    groups: Vec<Vec<NodeId>>,
    member: Vec<bool>,
}

impl NodeSubsetView {
    /// Validate and index the given per-group node lists against `net`.
    pub fn new(net: &GroupedNetwork, mut groups: Vec<Vec<NodeId>>) -> Result<Self> {
        if groups.len() != net.num_groups() {
            return Err(Error::Input(format!(
                "subset has {} groups, network has {}",
                groups.len(),
                net.num_groups()
            )));
        }
        let mut member = vec![false; net.num_nodes()];
        for (g, list) in groups.iter_mut().enumerate() {
            list.sort_unstable();
            for &node in list.iter() {
                if net.group_of(node)? != g {
                    return Err(Error::Input(format!(
                        "node {node} listed under group {g} but labelled {}",
                        net.group_of(node)?
                    )));
                }
                if member[node] {
                    return Err(Error::Input(format!("node {node} listed twice")));
                }
                member[node] = true;
            }
        }
        Ok(Self { groups, member })
    }

    /// The view containing every node of `net`.
    pub fn full(net: &GroupedNetwork) -> Self {
        Self {
            groups: net.members.clone(),
            member: vec![true; net.num_nodes()],
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.member.get(node).copied().unwrap_or(false)
    }

    pub fn group(&self, g: GroupId) -> &[NodeId] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<NodeId>] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn is_subset_of(&self, other: &NodeSubsetView) -> bool {
        self.groups
            .iter()
            .flatten()
            .all(|&node| other.contains(node))
    }
}
