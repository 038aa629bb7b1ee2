use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::LabelSet;
use crate::window::Query;

/// Snapshot of one exploration state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Labels that produced this node from its parent; empty at the root.
    pub labels: LabelSet,
    pub weight: Vec<f64>,
    pub weight_history: Vec<Vec<f64>>,
    pub query: Query,
    /// Digest of the retrieval result computed when the node was created.
    pub result_digest: String,
}

/// Branching undo/redo history. Node ids are creation order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationTree {
    nodes: Vec<TreeNode>,
    cursor: usize,
}

impl ExplorationTree {
    pub fn new(mut root: TreeNode) -> Self {
        root.id = 0;
        root.parent = None;
        root.children.clear();
        Self { nodes: vec![root], cursor: 0 }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current(&self) -> &TreeNode {
        &self.nodes[self.cursor]
    }

    pub fn get(&self, id: usize) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn set_cursor(&mut self, id: usize) -> Result<()> {
        self.get(id)?;
        self.cursor = id;
        Ok(())
    }

    /// Appends `node` under the cursor and moves the cursor to it.
    pub fn push_child(&mut self, mut node: TreeNode) -> usize {
        let id = self.nodes.len();
        node.id = id;
        node.parent = Some(self.cursor);
        node.children.clear();
        self.nodes[self.cursor].children.push(id);
        self.nodes.push(node);
        self.cursor = id;
        id
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: usize) -> Result<Vec<usize>> {
        let mut path = vec![id];
        let mut node = self.get(id)?;
        while let Some(p) = node.parent {
            path.push(p);
            node = self.get(p)?;
        }
        path.reverse();
        Ok(path)
    }

    pub fn depth(&self, id: usize) -> Result<usize> {
        Ok(self.path(id)?.len() - 1)
    }

    /// Structural checks for deserialized trees.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Document(format!("invalid exploration tree: {m}")));
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() {
            return bad("missing root");
        }
        if self.cursor >= self.nodes.len() {
            return bad("cursor out of range");
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad("node ids out of order");
            }
            if i > 0 {
                match n.parent {
                    Some(p) if p < i && self.nodes[p].children.contains(&i) => {}
                    _ => return bad("broken parent link"),
                }
            }
            if n.children.iter().any(|&c| c >= self.nodes.len() || self.nodes[c].parent != Some(i)) {
                return bad("broken child link");
            }
        }
        Ok(())
    }
}
