use std::collections::VecDeque;

use afe_autograd::{Scalar, Tensor, TreeLink};

use super::Joint;
use crate::error::{AfeError, Result};

/// Rooted bone tree over `J` joints.
///
/// Bone `k` runs from `bones[k].0` (parent, `q`) to `bones[k].1` (child, `r`);
/// its incidence column has `-1` at the parent and `+1` at the child, so
/// `B = X C` yields child-minus-parent vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    joint_count: usize,
    root: usize,
    bones: Vec<(usize, usize)>,
    /// bone indices, parents before children
    order: Vec<usize>,
}

impl Topology {
    /// Validates that `bones` (parent, child) form a spanning tree rooted at
    /// `root`.
    pub fn new(joint_count: usize, root: usize, bones: Vec<(usize, usize)>) -> Result<Self> {
        if joint_count == 0 || root >= joint_count {
            return Err(AfeError::Topology(format!(
                "root {root} invalid for {joint_count} joints"
            )));
        }
        if bones.len() != joint_count - 1 {
            return Err(AfeError::Topology(format!(
                "{} bones cannot span {joint_count} joints",
                bones.len()
            )));
        }
        let mut parent_of = vec![None; joint_count];
        for (k, &(p, c)) in bones.iter().enumerate() {
            if p >= joint_count || c >= joint_count || p == c {
                return Err(AfeError::Topology(format!("bone {k} ({p}->{c}) is invalid")));
            }
            if c == root {
                return Err(AfeError::Topology(format!("bone {k} points into the root")));
            }
            if parent_of[c].replace(k).is_some() {
                return Err(AfeError::Topology(format!("joint {c} has two parents")));
            }
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); joint_count];
        for (k, &(p, _)) in bones.iter().enumerate() {
            children[p].push(k);
        }
        let mut order = Vec::with_capacity(bones.len());
        let mut queue = VecDeque::from([root]);
        while let Some(j) = queue.pop_front() {
            for &k in &children[j] {
                order.push(k);
                queue.push_back(bones[k].1);
            }
        }
        if order.len() != bones.len() {
            return Err(AfeError::Topology(format!(
                "bones are disconnected: only {} of {} reachable from root {root}",
                order.len(),
                bones.len()
            )));
        }
        Ok(Self {
            joint_count,
            root,
            bones,
            order,
        })
    }

    /// Orients an undirected edge list away from `root`. Bone `k` keeps the
    /// position of edge `k`.
    pub fn from_edges(joint_count: usize, root: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); joint_count];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= joint_count || b >= joint_count {
                return Err(AfeError::Topology(format!("edge {k} ({a},{b}) out of range")));
            }
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        let mut bones = vec![(usize::MAX, usize::MAX); edges.len()];
        let mut seen = vec![false; joint_count];
        if root < joint_count {
            seen[root] = true;
        }
        let mut queue = VecDeque::from([root]);
        while let Some(j) = queue.pop_front() {
            for &(n, k) in adj.get(j).map(Vec::as_slice).unwrap_or(&[]) {
                if !seen[n] {
                    seen[n] = true;
                    bones[k] = (j, n);
                    queue.push_back(n);
                }
            }
        }
        if bones.iter().any(|&(p, _)| p == usize::MAX) {
            return Err(AfeError::Topology("edges do not form a tree reachable from the root".into()));
        }
        Self::new(joint_count, root, bones)
    }

    /// Builds a topology from a parent list where the root has `None`.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<Self> {
        let roots: Vec<usize> = (0..parents.len()).filter(|&j| parents[j].is_none()).collect();
        if roots.len() != 1 {
            return Err(AfeError::Topology(format!("expected one root, found {}", roots.len())));
        }
        let bones = parents
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
            .collect();
        Self::new(parents.len(), roots[0], bones)
    }

    /// The 25-joint Kinect v2 layout, rooted at the spine middle (index 1).
    pub fn ntu25() -> Self {
        // 1-based (child, parent) pairs of the Kinect v2 skeleton
        const PAIRS: [(usize, usize); 24] = [
            (1, 2),
            (2, 21),
            (3, 21),
            (4, 3),
            (5, 21),
            (6, 5),
            (7, 6),
            (8, 7),
            (9, 21),
            (10, 9),
            (11, 10),
            (12, 11),
            (13, 1),
            (14, 13),
            (15, 14),
            (16, 15),
            (17, 1),
            (18, 17),
            (19, 18),
            (20, 19),
            (22, 23),
            (23, 8),
            (24, 25),
            (25, 12),
        ];
        let edges: Vec<(usize, usize)> = PAIRS.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
        let oriented = Self::from_edges(25, 1, &edges).expect("static NTU topology");
        // canonical bone order (by child index), as produced by from_parents
        Self::from_parents(&oriented.parents()).expect("static NTU topology")
    }

    /// The 15-joint humanoid used by the synthetic generator, rooted at the
    /// pelvis. See [`crate::skeleton::synth_generate`] for the joint names.
    pub fn humanoid15() -> Self {
        let parents = [
            None,
            Some(0),
            Some(1),
            Some(1),
            Some(3),
            Some(4),
            Some(1),
            Some(6),
            Some(7),
            Some(0),
            Some(9),
            Some(10),
            Some(0),
            Some(12),
            Some(13),
        ];
        Self::from_parents(&parents).expect("static humanoid topology")
    }

    /// Default topology for a joint count, when one is known.
    pub fn for_joint_count(joints: usize) -> Option<Self> {
        match joints {
            25 => Some(Self::ntu25()),
            15 => Some(Self::humanoid15()),
            _ => None,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn bone_count(&self) -> usize {
        self.bones.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut p = vec![None; self.joint_count];
        for &(q, r) in &self.bones {
            p[r] = Some(q);
        }
        p
    }

    /// Bone traversal in topological order, for tree prefix sums.
    pub fn links(&self) -> Vec<TreeLink> {
        self.order
            .iter()
            .map(|&k| TreeLink {
                edge: k,
                parent: self.bones[k].0,
                child: self.bones[k].1,
            })
            .collect()
    }

    /// The `J x b` incidence matrix `C`.
    pub fn build_incidence<T: Scalar>(&self) -> Tensor<T> {
        let b = self.bones.len();
        let mut c = Tensor::zeros(&[self.joint_count, b]);
        for (k, &(q, r)) in self.bones.iter().enumerate() {
            c.set(&[r, k], T::one());
            c.set(&[q, k], -T::one());
        }
        c
    }

    /// Bone vectors of one frame (`X C`, one vector per bone).
    pub fn bone_vectors(&self, joints: &[Joint]) -> Vec<Joint> {
        self.bones
            .iter()
            .map(|&(q, r)| {
                let (p, c) = (joints[q], joints[r]);
                [c[0] - p[0], c[1] - p[1], c[2] - p[2]]
            })
            .collect()
    }
}

/// Inverse of [`Topology::bone_vectors`]: the root is pinned at `root_pos`
/// and every other joint is its parent plus its bone, walking the tree from
/// the root.
pub fn reconstruct_joints(bones: &[Joint], topology: &Topology, root_pos: Joint) -> Vec<Joint> {
    assert_eq!(bones.len(), topology.bone_count(), "bone count mismatch");
    let mut joints = vec![[0.0f32; 3]; topology.joint_count()];
    joints[topology.root()] = root_pos;
    for &k in &topology.order {
        let (q, r) = topology.bones[k];
        for d in 0..3 {
            joints[r][d] = joints[q][d] + bones[k][d];
        }
    }
    joints
}
