//! Binary computation trees over an ordered list of leaves.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub children: Option<(usize, usize)>,
    /// Leaf index, for leaves.
    pub leaf: Option<usize>,
    pub height: u32,
    /// Group (leaf index) whose members compute this node: its own index for
    /// a leaf, and 0, 1, ... in breadth-first order for internal nodes.
    pub piece: usize,
}

/// Binary computation tree over `m` ordered leaves: a complete tree on the
/// next power of two with the surplus rightmost leaves removed and
/// single-child parents folded away.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HighTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl HighTree {
    pub fn build(m: usize) -> Self {
        assert!(m >= 1);
        let mut nodes = Vec::new();
        let width = m.next_power_of_two();
        let root = Self::grow(&mut nodes, 0, width, m).expect("m >= 1");
        // Internal nodes take pieces 0, 1, ... in breadth-first order.
        let mut queue = std::collections::VecDeque::from([root]);
        let mut next = 0;
        while let Some(y) = queue.pop_front() {
            if let Some((l, r)) = nodes[y].children {
                nodes[y].piece = next;
                next += 1;
                queue.push_back(l);
                queue.push_back(r);
            }
        }
        HighTree { nodes, root }
    }

    fn grow(nodes: &mut Vec<TreeNode>, lo: usize, hi: usize, m: usize) -> Option<usize> {
        if lo >= m {
            return None;
        }
        if hi - lo == 1 {
            nodes.push(TreeNode {
                children: None,
                leaf: Some(lo),
                height: 0,
                piece: lo,
            });
            return Some(nodes.len() - 1);
        }
        let mid = (lo + hi) / 2;
        let l = Self::grow(nodes, lo, mid, m)?;
        let Some(r) = Self::grow(nodes, mid, hi, m) else {
            return Some(l);
        };
        let height = 1 + nodes[l].height.max(nodes[r].height);
        nodes.push(TreeNode {
            children: Some((l, r)),
            leaf: None,
            height,
            piece: usize::MAX,
        });
        Some(nodes.len() - 1)
    }

    pub fn height(&self) -> u32 {
        self.nodes[self.root].height
    }

    /// Leaf indices from left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(self.root, &mut out);
        out
    }

    fn collect(&self, y: usize, out: &mut Vec<usize>) {
        match (self.nodes[y].children, self.nodes[y].leaf) {
            (Some((l, r)), _) => {
                self.collect(l, out);
                self.collect(r, out);
            }
            (None, Some(p)) => out.push(p),
            (None, None) => {}
        }
    }

    /// Nodes with children before parents.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, false)];
        while let Some((y, expanded)) = stack.pop() {
            match self.nodes[y].children {
                Some((l, r)) if !expanded => {
                    stack.push((y, true));
                    stack.push((r, false));
                    stack.push((l, false));
                }
                _ => out.push(y),
            }
        }
        out
    }
}
