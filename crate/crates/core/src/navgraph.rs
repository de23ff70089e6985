//! Navigation trees.
//!
//! One tree per session, rooted at a synthetic browser-start node. Every
//! page view is a node weighted by its visible time. A load that replaces a
//! page in the same tab hangs below that page; the first load of a tab that
//! was opened from another tab via a link hangs below the opener's current
//! page; anything else attaches to the root.
//!
//! Branching factor is the mean out-degree over internal nodes (nodes with
//! at least one child, root included).

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::event::{LoadCause, SessionId, TabId, WindowId};
use crate::session::SessionModel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NavError {
    #[error("unknown format {0:?} (expected dot or edge-list)")]
    UnknownFormat(String),
    #[error("bad edge list line {line}: {reason}")]
    BadEdgeList { line: usize, reason: String },
    #[error("not a tree: {0}")]
    NotATree(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    SameTab,
    NewTab,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::SameTab => "same_tab",
            EdgeKind::NewTab => "new_tab",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavNode {
    pub dwell_ms: i64,
    pub label: String,
    /// `(parent, edge)`; `None` only for the root.
    pub parent: Option<(usize, EdgeKind)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavTree {
    pub session_id: SessionId,
    /// Node 0 is the root.
    pub nodes: Vec<NavNode>,
}

pub const ROOT_LABEL: &str = "start";

impl NavTree {
    pub fn root_only(session_id: SessionId) -> Self {
        NavTree { session_id, nodes: vec![NavNode { dwell_ms: 0, label: ROOT_LABEL.into(), parent: None }] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeKind)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(c, n)| n.parent.map(|(p, k)| (p, c, k)))
    }

    pub fn children(&self) -> Vec<Vec<(usize, EdgeKind)>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (p, c, k) in self.edges() {
            out[p].push((c, k));
        }
        out
    }

    /// Checks single root, single parent and reachability from the root.
    pub fn validate(&self) -> Result<(), NavError> {
        if self.nodes.first().is_none_or(|r| r.parent.is_some()) {
            return Err(NavError::NotATree("node 0 must be the parentless root".into()));
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            match n.parent {
                None => return Err(NavError::NotATree(format!("node {i} has no parent"))),
                Some((p, _)) if p >= self.nodes.len() || p == i => {
                    return Err(NavError::NotATree(format!("node {i} has invalid parent {p}")))
                }
                _ => {}
            }
        }
        let seen = self.bfs_depths().iter().filter(|d| d.is_some()).count();
        if seen != self.nodes.len() {
            return Err(NavError::NotATree(format!("{} nodes unreachable from root", self.nodes.len() - seen)));
        }
        Ok(())
    }

    fn bfs_depths(&self) -> Vec<Option<usize>> {
        let children = self.children();
        let mut depth = vec![None; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        depth[0] = Some(0);
        while let Some(n) = queue.pop_front() {
            for &(c, _) in &children[n] {
                if depth[c].is_none() {
                    depth[c] = depth[n].map(|d| d + 1);
                    queue.push_back(c);
                }
            }
        }
        depth
    }

    /// Out-degree sum and number of nodes with at least one child.
    pub fn internal_degree(&self) -> (usize, usize) {
        let children = self.children();
        let internal = children.iter().filter(|c| !c.is_empty()).count();
        (self.nodes.len() - 1, internal)
    }

    pub fn branching_factor(&self) -> f64 {
        match self.internal_degree() {
            (_, 0) => 0.0,
            (edges, internal) => edges as f64 / internal as f64,
        }
    }

    /// Sum of root distances over non-root nodes, following parent links.
    pub fn depth_sum(&self) -> usize {
        let mut memo: Vec<Option<usize>> = vec![None; self.nodes.len()];
        memo[0] = Some(0);
        let mut total = 0;
        for i in 1..self.nodes.len() {
            let mut chain = Vec::new();
            let mut cur = i;
            while memo[cur].is_none() {
                chain.push(cur);
                cur = self.nodes[cur].parent.expect("non-root has parent").0;
            }
            let mut d = memo[cur].unwrap();
            for &n in chain.iter().rev() {
                d += 1;
                memo[n] = Some(d);
            }
            total += memo[i].unwrap();
        }
        total
    }

    /// Mean root distance over non-root nodes.
    pub fn avg_root_distance(&self) -> f64 {
        if self.nodes.len() <= 1 {
            return 0.0;
        }
        self.depth_sum() as f64 / (self.nodes.len() - 1) as f64
    }

    /// Same quantity by breadth-first layering.
    pub fn avg_root_distance_bfs(&self) -> f64 {
        if self.nodes.len() <= 1 {
            return 0.0;
        }
        let depths = self.bfs_depths();
        let mut layers: Vec<usize> = Vec::new();
        for d in depths.iter().flatten() {
            if layers.len() <= *d {
                layers.resize(d + 1, 0);
            }
            layers[*d] += 1;
        }
        let sum: usize = layers.iter().enumerate().map(|(d, n)| d * n).sum();
        sum as f64 / (self.nodes.len() - 1) as f64
    }

    pub fn total_dwell(&self) -> i64 {
        self.nodes.iter().map(|n| n.dwell_ms).sum()
    }

    fn canonical(&self, node: usize, children: &[Vec<(usize, EdgeKind)>]) -> String {
        let mut parts: Vec<String> =
            children[node].iter().map(|&(c, k)| format!("{}{}", k.as_str(), self.canonical(c, children))).collect();
        parts.sort();
        let n = &self.nodes[node];
        format!("({}:{}[{}])", n.dwell_ms, n.label, parts.join(","))
    }

    /// Rooted isomorphism respecting dwell, label and edge kind.
    pub fn isomorphic(&self, other: &NavTree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.canonical(0, &self.children()) == other.canonical(0, &other.children())
    }
}

fn node_label(p: &crate::session::PageView) -> String {
    p.url.plain_domain().unwrap_or_else(|| p.url.h_domain.chars().take(12).collect())
}

pub fn build_navtree(session: &SessionModel) -> NavTree {
    let mut tree = NavTree::root_only(session.session_id);
    let openers: HashMap<(WindowId, TabId), Option<TabId>> =
        session.windows.iter().flat_map(|w| w.tabs.iter().map(move |t| ((w.window_id, t.tab_id), t.opener))).collect();
    let mut current: HashMap<(WindowId, TabId), usize> = HashMap::new();
    for p in session.page_views() {
        let key = (p.window_id, p.tab_id);
        let parent = match current.get(&key) {
            Some(&prev) => (prev, EdgeKind::SameTab),
            None => {
                let spawner = openers
                    .get(&key)
                    .copied()
                    .flatten()
                    .filter(|_| p.cause == LoadCause::Link)
                    .and_then(|o| current.get(&(p.window_id, o)).copied());
                (spawner.unwrap_or(0), EdgeKind::NewTab)
            }
        };
        tree.nodes.push(NavNode { dwell_ms: p.visible_time.measure(), label: node_label(p), parent: Some(parent) });
        current.insert(key, tree.nodes.len() - 1);
    }
    tree
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavFormat {
    Dot,
    EdgeList,
}

impl FromStr for NavFormat {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(NavFormat::Dot),
            "edge-list" | "edges" => Ok(NavFormat::EdgeList),
            other => Err(NavError::UnknownFormat(other.to_string())),
        }
    }
}

/// Deterministic serialization.
///
/// Edge list:
/// ```text
/// # navtree session=<sid> nodes=<n>
/// node <id> <dwell_ms> <label>
/// edge <parent> <child> <same_tab|new_tab>
/// ```
pub fn export_navtree(tree: &NavTree, format: NavFormat) -> Vec<u8> {
    let mut out = String::new();
    match format {
        NavFormat::Dot => {
            writeln!(out, "digraph \"session-{}\" {{", tree.session_id).unwrap();
            for (i, n) in tree.nodes.iter().enumerate() {
                writeln!(out, "  n{i} [label=\"{}\", dwell_ms={}];", n.label.replace('"', "\\\""), n.dwell_ms).unwrap();
            }
            for (p, c, k) in tree.edges() {
                writeln!(out, "  n{p} -> n{c} [kind=\"{}\"];", k.as_str()).unwrap();
            }
            out.push_str("}\n");
        }
        NavFormat::EdgeList => {
            writeln!(out, "# navtree session={} nodes={}", tree.session_id, tree.nodes.len()).unwrap();
            for (i, n) in tree.nodes.iter().enumerate() {
                writeln!(out, "node {i} {} {}", n.dwell_ms, n.label).unwrap();
            }
            for (p, c, k) in tree.edges() {
                writeln!(out, "edge {p} {c} {}", k.as_str()).unwrap();
            }
        }
    }
    out.into_bytes()
}

pub fn import_edge_list(bytes: &[u8]) -> Result<NavTree, NavError> {
    let text = String::from_utf8_lossy(bytes);
    let bad = |line: usize, reason: &str| NavError::BadEdgeList { line, reason: reason.to_string() };
    let mut session_id = 0;
    let mut nodes: Vec<Option<NavNode>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        if let Some(rest) = line.strip_prefix("# navtree ") {
            for kv in rest.split_whitespace() {
                if let Some(v) = kv.strip_prefix("session=") {
                    session_id = v.parse().map_err(|_| bad(ln, "bad session id"))?;
                }
            }
            continue;
        }
        let mut f = line.split_whitespace();
        match f.next() {
            None => continue,
            Some("node") => {
                let id: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad node id"))?;
                let dwell: i64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad dwell"))?;
                let label = f.collect::<Vec<_>>().join(" ");
                if nodes.len() <= id {
                    nodes.resize(id + 1, None);
                }
                nodes[id] = Some(NavNode { dwell_ms: dwell, label, parent: None });
            }
            Some("edge") => {
                let p: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad parent"))?;
                let c: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad child"))?;
                let kind = match f.next() {
                    Some("same_tab") => EdgeKind::SameTab,
                    Some("new_tab") => EdgeKind::NewTab,
                    _ => return Err(bad(ln, "bad edge kind")),
                };
                let child = nodes.get_mut(c).and_then(Option::as_mut).ok_or_else(|| bad(ln, "edge to unknown node"))?;
                if child.parent.is_some() {
                    return Err(bad(ln, "node has two parents"));
                }
                child.parent = Some((p, kind));
            }
            Some(_) => return Err(bad(ln, "unknown record")),
        }
    }
    let nodes: Vec<NavNode> = nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.ok_or_else(|| NavError::NotATree(format!("missing node {i}"))))
        .collect::<Result<_, _>>()?;
    let tree = NavTree { session_id, nodes };
    tree.validate()?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(parents: &[(usize, EdgeKind)]) -> NavTree {
        let mut t = NavTree::root_only(1);
        for (i, &p) in parents.iter().enumerate() {
            t.nodes.push(NavNode { dwell_ms: i as i64 * 10, label: format!("p{i}"), parent: Some(p) });
        }
        t
    }

    #[test]
    fn chain_metrics() {
        let t = tree(&[(0, EdgeKind::NewTab), (1, EdgeKind::SameTab), (2, EdgeKind::SameTab)]);
        t.validate().unwrap();
        assert_eq!(t.branching_factor(), 1.0);
        assert_eq!(t.avg_root_distance(), 2.0);
        assert_eq!(t.avg_root_distance_bfs(), 2.0);
        let dot = String::from_utf8(export_navtree(&t, NavFormat::Dot)).unwrap();
        assert_eq!(dot.matches("->").count(), 3);
        assert!(dot.contains("dwell_ms=20"));
    }

    #[test]
    fn fan_out_of_five() {
        let mut parents = vec![(0, EdgeKind::NewTab)];
        parents.extend(std::iter::repeat_n((1, EdgeKind::NewTab), 5));
        let t = tree(&parents);
        assert_eq!(t.avg_root_distance(), 11.0 / 6.0);
        assert_eq!(t.avg_root_distance_bfs(), 11.0 / 6.0);
        assert_eq!(t.children()[1].len(), 5);
        assert_eq!(t.branching_factor(), 3.0);
    }

    #[test]
    fn root_only() {
        let t = NavTree::root_only(4);
        assert_eq!((t.branching_factor(), t.avg_root_distance()), (0.0, 0.0));
        let bytes = export_navtree(&t, NavFormat::EdgeList);
        assert_eq!(String::from_utf8_lossy(&bytes), "# navtree session=4 nodes=1\nnode 0 0 start\n");
        assert_eq!(import_edge_list(&bytes).unwrap(), t);
        let dot = String::from_utf8(export_navtree(&t, NavFormat::Dot)).unwrap();
        assert_eq!(dot.matches("[label").count(), 1);
    }

    #[test]
    fn unknown_format() {
        assert_eq!("svg".parse::<NavFormat>(), Err(NavError::UnknownFormat("svg".into())));
    }

    #[test]
    fn rejects_cycles_and_double_parents() {
        let mut t = tree(&[(2, EdgeKind::SameTab), (1, EdgeKind::SameTab)]);
        assert!(t.validate().is_err());
        t.nodes[1].parent = Some((0, EdgeKind::NewTab));
        t.validate().unwrap();
        let text = b"node 0 0 start\nnode 1 0 a\nedge 0 1 new_tab\nedge 0 1 new_tab\n";
        assert!(matches!(import_edge_list(text), Err(NavError::BadEdgeList { line: 4, .. })));
    }

    #[test]
    fn isomorphism_ignores_child_order() {
        let a = tree(&[(0, EdgeKind::NewTab), (0, EdgeKind::NewTab)]);
        let mut b = a.clone();
        b.nodes.swap(1, 2);
        assert!(a.isomorphic(&b));
        b.nodes[1].dwell_ms += 1;
        assert!(!a.isomorphic(&b));
    }
}
