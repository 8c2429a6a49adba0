use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    /// Passed on to the next hop.
    Intermediate,
    /// Energy at or below the threshold; dropped for good.
    Discarded,
    /// Surviving node of the final hop; contributes one feature dimension.
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub hop: usize,
    pub parent: Option<NodeId>,
    /// Position of this node among the outputs of its parent's transform.
    pub channel: usize,
    /// Product of the within-transform energy fractions along the path from the root.
    pub energy: f64,
    pub status: NodeStatus,
}

/// Energy-annotated spectral tree. Node 0 is the root (hop 0, energy 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTree {
    nodes: Vec<TreeNode>,
}

impl Default for FeatureTree {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureTree {
    pub fn new() -> Self {
        Self {
            nodes: vec![TreeNode {
                id: 0,
                hop: 0,
                parent: None,
                channel: 0,
                energy: 1.0,
                status: NodeStatus::Intermediate,
            }],
        }
    }

    /// Rebuilds a tree from stored nodes, checking ids and parent links.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.first().is_none_or(|r| r.parent.is_some() || r.hop != 0) {
            return Err(Error::InvalidInput("tree must start with a root node".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidInput(format!("node {i} has id {}", n.id)));
            }
            if let Some(p) = n.parent {
                if p >= i || nodes[p].hop + 1 != n.hop {
                    return Err(Error::InvalidInput(format!("node {i} has an invalid parent {p}")));
                }
            } else if i != 0 {
                return Err(Error::InvalidInput(format!("node {i} has no parent")));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.hop).max().unwrap_or(0)
    }

    /// Intermediate nodes of the deepest hop, in id order: the channels fed to the next hop.
    pub fn frontier(&self) -> Vec<NodeId> {
        let depth = self.depth();
        self.nodes
            .iter()
            .filter(|n| n.hop == depth && n.status == NodeStatus::Intermediate)
            .map(|n| n.id)
            .collect()
    }

    pub fn outputs(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Output)
            .map(|n| n.id)
            .collect()
    }

    pub fn output_dim(&self) -> usize {
        self.nodes.iter().filter(|n| n.status == NodeStatus::Output).count()
    }

    pub fn children(&self, parent: NodeId) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.parent == Some(parent))
    }

    /// Adds one hop: each `(parent, fractions)` entry spawns one child per
    /// fraction. Children with energy above `threshold` become intermediate
    /// (or output when `is_final`); the rest are discarded. Returns the new ids.
    pub fn grow(&mut self, transforms: &[(NodeId, &[f64])], threshold: f64, is_final: bool) -> Result<Vec<NodeId>> {
        if !(threshold >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "energy threshold must be non-negative, got {threshold}"
            )));
        }
        let mut added = Vec::new();
        for &(parent, fractions) in transforms {
            let p = self
                .nodes
                .get(parent)
                .ok_or_else(|| Error::InvalidInput(format!("unknown parent node {parent}")))?
                .clone();
            if p.status != NodeStatus::Intermediate {
                return Err(Error::InvalidInput(format!("node {parent} is not intermediate")));
            }
            for (channel, &f) in fractions.iter().enumerate() {
                if !(f >= 0.0) || !f.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "negative or non-finite energy fraction {f}"
                    )));
                }
                let energy = p.energy * f;
                let status = match (energy > threshold, is_final) {
                    (false, _) => NodeStatus::Discarded,
                    (true, false) => NodeStatus::Intermediate,
                    (true, true) => NodeStatus::Output,
                };
                let id = self.nodes.len();
                self.nodes.push(TreeNode {
                    id,
                    hop: p.hop + 1,
                    parent: Some(parent),
                    channel,
                    energy,
                    status,
                });
                added.push(id);
            }
        }
        Ok(added)
    }
}

/// Grows the tree by one hop below its current frontier. `transform_energies[i]`
/// holds the energy fractions of the transform fitted on frontier node `i`.
pub fn propagate_energy(
    tree: &FeatureTree,
    transform_energies: &[Vec<f64>],
    threshold: f64,
    is_final: bool,
) -> Result<FeatureTree> {
    let frontier = tree.frontier();
    if frontier.len() != transform_energies.len() {
        return Err(Error::DimensionMismatch {
            expected: frontier.len(),
            got: transform_energies.len(),
        });
    }
    let transforms: Vec<(NodeId, &[f64])> = frontier
        .iter()
        .zip(transform_energies)
        .map(|(&id, e)| (id, e.as_slice()))
        .collect();
    let mut out = tree.clone();
    out.grow(&transforms, threshold, is_final)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_statuses() {
        let t = propagate_energy(&FeatureTree::new(), &[vec![0.6, 0.4]], 0.5, false).unwrap();
        let e: Vec<f64> = t.nodes()[1..].iter().map(|n| n.energy).collect();
        assert_eq!(e, vec![0.6, 0.4]);
        assert_eq!(t.node(1).status, NodeStatus::Intermediate);
        assert_eq!(t.node(2).status, NodeStatus::Discarded);
        assert_eq!(t.frontier(), vec![1]);

        let t2 = propagate_energy(&t, &[vec![0.5, 0.5]], 0.5, true).unwrap();
        assert!((t2.node(3).energy - 0.3).abs() < 1e-15);
        assert_eq!(t2.node(3).status, NodeStatus::Discarded);
        assert_eq!(t2.output_dim(), 0);
    }

    #[test]
    fn zero_threshold_keeps_everything_positive() {
        let t = propagate_energy(&FeatureTree::new(), &[vec![0.7, 0.2, 0.1]], 0.0, false).unwrap();
        assert!(t.nodes()[1..].iter().all(|n| n.status == NodeStatus::Intermediate));
        let t = propagate_energy(&t, &[vec![1.0], vec![0.5, 0.5], vec![0.9, 0.1]], 0.0, true).unwrap();
        assert_eq!(t.output_dim(), 5);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn rejects_bad_energies() {
        assert!(propagate_energy(&FeatureTree::new(), &[vec![-0.1, 1.1]], 0.1, false).is_err());
        assert!(propagate_energy(&FeatureTree::new(), &[vec![1.0], vec![1.0]], 0.1, false).is_err());
        assert!(propagate_energy(&FeatureTree::new(), &[vec![1.0]], -1.0, false).is_err());
    }

    #[test]
    fn from_nodes_validates() {
        let t = propagate_energy(&FeatureTree::new(), &[vec![0.6, 0.4]], 0.5, false).unwrap();
        assert_eq!(FeatureTree::from_nodes(t.nodes().to_vec()).unwrap(), t);
        let mut bad = t.nodes().to_vec();
        bad[2].parent = Some(2);
        assert!(FeatureTree::from_nodes(bad).is_err());
        assert!(FeatureTree::from_nodes(vec![]).is_err());
    }
}
