//! CMOS T-tree over memristor partitions.
//!
//! Every null child of a classic T-tree is replaced by a link to a partition
//! ("gap"). In-order, gaps and nodes alternate: gap 0, node 0, gap 1, ...
//! and every key of a gap lies strictly between its neighbouring nodes.

use crate::crossbar::ExecStats;

use super::{HybridIndex, IndexError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Link {
    Node(usize),
    Part(usize),
}

#[derive(Clone, Debug)]
struct TNode {
    /// Sorted (key, ref) pairs.
    keys: Vec<(u64, u64)>,
    left: Link,
    right: Link,
    height: u32,
}

#[derive(Clone, Debug)]
pub(crate) struct TTree {
    t: usize,
    nodes: Vec<Option<TNode>>,
    free: Vec<usize>,
    root: Link,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Route {
    /// The key falls in the range of an upper node.
    Node { node: usize, found: Option<u64> },
    Gap(usize),
}

impl Route {
    pub(crate) fn gap(self) -> Option<usize> {
        match self {
            Route::Gap(p) => Some(p),
            Route::Node { .. } => None,
        }
    }
}

impl TTree {
    /// Perfectly balanced tree from in-order contents; `gaps` has one more
    /// element than `node_keys`.
    pub(crate) fn perfect(t: usize, node_keys: Vec<Vec<(u64, u64)>>, gaps: Vec<usize>) -> Self {
        assert_eq!(gaps.len(), node_keys.len() + 1);
        let mut tree = TTree { t, nodes: Vec::new(), free: Vec::new(), root: Link::Part(gaps[0]) };
        let mut keys: Vec<Option<Vec<(u64, u64)>>> = node_keys.into_iter().map(Some).collect();
        tree.root = tree.build(&gaps, &mut keys, 0, gaps.len() - 1);
        tree
    }

    fn build(&mut self, gaps: &[usize], keys: &mut [Option<Vec<(u64, u64)>>], a: usize, b: usize) -> Link {
        if a == b {
            return Link::Part(gaps[a]);
        }
        let m = (a + b) / 2;
        let left = self.build(gaps, keys, a, m);
        let right = self.build(gaps, keys, m + 1, b);
        let k = keys[m].take().expect("each node built once");
        let id = self.alloc(TNode { keys: k, left, right, height: 0 });
        self.fix_height(id);
        Link::Node(id)
    }

    fn alloc(&mut self, n: TNode) -> usize {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(n);
                id
            }
            None => {
                self.nodes.push(Some(n));
                self.nodes.len() - 1
            }
        }
    }

    fn node(&self, id: usize) -> &TNode {
        self.nodes[id].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: usize) -> &mut TNode {
        self.nodes[id].as_mut().expect("live node")
    }

    fn height(&self, l: Link) -> u32 {
        match l {
            Link::Part(_) => 0,
            Link::Node(id) => self.node(id).height,
        }
    }

    fn fix_height(&mut self, id: usize) {
        let h = 1 + self.height(self.node(id).left).max(self.height(self.node(id).right));
        self.node_mut(id).height = h;
    }

    fn balance_factor(&self, id: usize) -> i64 {
        self.height(self.node(id).left) as i64 - self.height(self.node(id).right) as i64
    }

    fn rotate_right(&mut self, id: usize) -> Link {
        let Link::Node(l) = self.node(id).left else { unreachable!("rotation needs a node child") };
        let lr = self.node(l).right;
        self.node_mut(id).left = lr;
        self.node_mut(l).right = Link::Node(id);
        self.fix_height(id);
        self.fix_height(l);
        Link::Node(l)
    }

    fn rotate_left(&mut self, id: usize) -> Link {
        let Link::Node(r) = self.node(id).right else { unreachable!("rotation needs a node child") };
        let rl = self.node(r).left;
        self.node_mut(id).right = rl;
        self.node_mut(r).left = Link::Node(id);
        self.fix_height(id);
        self.fix_height(r);
        Link::Node(r)
    }

    fn rebalance(&mut self, id: usize) -> Link {
        self.fix_height(id);
        let bf = self.balance_factor(id);
        if bf > 1 {
            if let Link::Node(l) = self.node(id).left {
                if self.balance_factor(l) < 0 {
                    let nl = self.rotate_left(l);
                    self.node_mut(id).left = nl;
                }
            }
            return self.rotate_right(id);
        }
        if bf < -1 {
            if let Link::Node(r) = self.node(id).right {
                if self.balance_factor(r) > 0 {
                    let nr = self.rotate_right(r);
                    self.node_mut(id).right = nr;
                }
            }
            return self.rotate_left(id);
        }
        Link::Node(id)
    }

    pub(crate) fn route(&self, key: u64) -> Route {
        let mut at = self.root;
        loop {
            match at {
                Link::Part(p) => return Route::Gap(p),
                Link::Node(id) => {
                    let n = self.node(id);
                    if key < n.keys[0].0 {
                        at = n.left;
                    } else if key > n.keys[n.keys.len() - 1].0 {
                        at = n.right;
                    } else {
                        let found = n.keys.binary_search_by_key(&key, |e| e.0).ok().map(|i| n.keys[i].1);
                        return Route::Node { node: id, found };
                    }
                }
            }
        }
    }

    pub(crate) fn record_count(&self) -> usize {
        self.nodes.iter().flatten().map(|n| n.keys.len()).sum()
    }

    /// Partition ids in key order.
    pub(crate) fn gaps(&self) -> Vec<usize> {
        self.gap_bounds().into_iter().map(|g| g.0).collect()
    }

    /// Each gap with the exclusive key bounds set by its neighbouring nodes.
    pub(crate) fn gap_bounds(&self) -> Vec<(usize, Option<u64>, Option<u64>)> {
        let mut out = Vec::new();
        self.bounds_rec(self.root, None, None, &mut out);
        out
    }

    fn bounds_rec(&self, l: Link, lo: Option<u64>, hi: Option<u64>, out: &mut Vec<(usize, Option<u64>, Option<u64>)>) {
        match l {
            Link::Part(p) => out.push((p, lo, hi)),
            Link::Node(id) => {
                let n = self.node(id);
                self.bounds_rec(n.left, lo, Some(n.keys[0].0), out);
                self.bounds_rec(n.right, Some(n.keys[n.keys.len() - 1].0), hi, out);
            }
        }
    }

    /// Collect node records in `[lo, hi]` into `out` and the gaps that may
    /// hold keys of the range, in order, into `gaps`.
    pub(crate) fn walk(&self, lo: u64, hi: u64, out: &mut Vec<(u64, u64)>, gaps: &mut Vec<usize>) {
        self.walk_rec(self.root, lo, hi, out, gaps);
    }

    fn walk_rec(&self, l: Link, lo: u64, hi: u64, out: &mut Vec<(u64, u64)>, gaps: &mut Vec<usize>) {
        match l {
            Link::Part(p) => gaps.push(p),
            Link::Node(id) => {
                let n = self.node(id);
                let (min, max) = (n.keys[0].0, n.keys[n.keys.len() - 1].0);
                if lo < min {
                    self.walk_rec(n.left, lo, hi, out, gaps);
                }
                out.extend(n.keys.iter().copied().filter(|e| e.0 >= lo && e.0 <= hi));
                if hi > max {
                    self.walk_rec(n.right, lo, hi, out, gaps);
                }
            }
        }
    }

    pub(crate) fn insert(&mut self, ix: &mut HybridIndex, key: u64, r: u64, st: &mut ExecStats) -> Result<(), IndexError> {
        let root = self.root;
        self.root = self.ins(ix, root, key, r, st)?;
        Ok(())
    }

    fn ins(&mut self, ix: &mut HybridIndex, at: Link, key: u64, r: u64, st: &mut ExecStats) -> Result<Link, IndexError> {
        let id = match at {
            Link::Part(p) => {
                if ix.part_insert(p, key, r, st)? {
                    return Ok(at);
                }
                let (mid, right) = ix.split_part(p, st)?;
                let id = self.alloc(TNode { keys: mid, left: at, right: Link::Part(right), height: 1 });
                return self.ins(ix, Link::Node(id), key, r, st);
            }
            Link::Node(id) => id,
        };
        let n = self.node(id);
        let (min, max) = (n.keys[0].0, n.keys[n.keys.len() - 1].0);
        if key < min {
            let l = n.left;
            let nl = self.ins(ix, l, key, r, st)?;
            self.node_mut(id).left = nl;
        } else if key > max {
            let rt = n.right;
            let nr = self.ins(ix, rt, key, r, st)?;
            self.node_mut(id).right = nr;
        } else {
            let pos = match n.keys.binary_search_by_key(&key, |e| e.0) {
                Ok(_) => return Err(IndexError::Duplicate(key)),
                Err(pos) => pos,
            };
            let t = self.t;
            let node = self.node_mut(id);
            node.keys.insert(pos, (key, r));
            if node.keys.len() > t {
                let (k, v) = node.keys.remove(0);
                let l = node.left;
                let nl = self.ins(ix, l, k, v, st)?;
                self.node_mut(id).left = nl;
            }
        }
        Ok(self.rebalance(id))
    }

    pub(crate) fn delete(&mut self, ix: &mut HybridIndex, key: u64, st: &mut ExecStats) -> Result<u64, IndexError> {
        let root = self.root;
        let (l, r) = self.del(ix, root, key, st)?;
        self.root = l;
        Ok(r)
    }

    fn del(&mut self, ix: &mut HybridIndex, at: Link, key: u64, st: &mut ExecStats) -> Result<(Link, u64), IndexError> {
        let id = match at {
            Link::Part(p) => return Ok((at, ix.part_remove(p, key, st)?)),
            Link::Node(id) => id,
        };
        let n = self.node(id);
        let (min, max) = (n.keys[0].0, n.keys[n.keys.len() - 1].0);
        let out;
        if key < min {
            let (nl, r) = self.del(ix, n.left, key, st)?;
            self.node_mut(id).left = nl;
            out = r;
        } else if key > max {
            let (nr, r) = self.del(ix, n.right, key, st)?;
            self.node_mut(id).right = nr;
            out = r;
        } else {
            let pos = n.keys.binary_search_by_key(&key, |e| e.0).map_err(|_| IndexError::Missing(key))?;
            out = self.node_mut(id).keys.remove(pos).1;
            let pred = self.edge_gap(self.node(id).left, true);
            let succ = self.edge_gap(self.node(id).right, false);
            if let Some(e) = ix.part_take_extreme(pred, true, st)? {
                self.node_mut(id).keys.insert(0, e);
            } else if let Some(e) = ix.part_take_extreme(succ, false, st)? {
                self.node_mut(id).keys.push(e);
            }
            if self.node(id).keys.is_empty() {
                return Ok((self.unlink(ix, id), out));
            }
        }
        Ok((self.rebalance(id), out))
    }

    /// Outermost gap of a subtree.
    fn edge_gap(&self, mut at: Link, rightmost: bool) -> usize {
        loop {
            match at {
                Link::Part(p) => return p,
                Link::Node(id) => at = if rightmost { self.node(id).right } else { self.node(id).left },
            }
        }
    }

    /// Remove an empty node whose adjacent gaps are both empty.
    fn unlink(&mut self, ix: &mut HybridIndex, id: usize) -> Link {
        let TNode { left, right, .. } = self.node(id).clone();
        match (left, right) {
            (Link::Part(pl), _) => {
                ix.free_part(pl);
                self.release(id);
                right
            }
            (_, Link::Part(pr)) => {
                ix.free_part(pr);
                self.release(id);
                left
            }
            (Link::Node(_), Link::Node(_)) => {
                let (nl, keys) = self.remove_max_node(ix, left);
                let node = self.node_mut(id);
                node.left = nl;
                node.keys = keys;
                self.rebalance(id)
            }
        }
    }

    /// Detach the rightmost node of a subtree, freeing its (empty) right gap.
    fn remove_max_node(&mut self, ix: &mut HybridIndex, at: Link) -> (Link, Vec<(u64, u64)>) {
        let Link::Node(id) = at else { unreachable!("called on a node") };
        match self.node(id).right {
            Link::Part(pr) => {
                ix.free_part(pr);
                let n = self.release(id);
                (n.left, n.keys)
            }
            r => {
                let (nr, keys) = self.remove_max_node(ix, r);
                self.node_mut(id).right = nr;
                (self.rebalance(id), keys)
            }
        }
    }

    fn release(&mut self, id: usize) -> TNode {
        self.free.push(id);
        self.nodes[id].take().expect("live node")
    }

    /// AVL shape, node occupancy and key order. Returns the record count.
    pub(crate) fn check(&self) -> Result<usize, String> {
        let mut prev: Option<u64> = None;
        let mut count = 0;
        self.check_rec(self.root, &mut prev, &mut count)?;
        Ok(count)
    }

    fn check_rec(&self, at: Link, prev: &mut Option<u64>, count: &mut usize) -> Result<u32, String> {
        let Link::Node(id) = at else { return Ok(0) };
        let n = self.node(id);
        if n.keys.is_empty() || n.keys.len() > self.t {
            return Err(format!("T-node {id} holds {} keys", n.keys.len()));
        }
        let hl = self.check_rec(n.left, prev, count)?;
        for &(k, _) in &n.keys {
            if prev.is_some_and(|p| p >= k) {
                return Err(format!("T-node {id}: key {k} out of order"));
            }
            *prev = Some(k);
        }
        *count += n.keys.len();
        let hr = self.check_rec(n.right, prev, count)?;
        if hl.abs_diff(hr) > 1 {
            return Err(format!("T-node {id} unbalanced ({hl} vs {hr})"));
        }
        if n.height != 1 + hl.max(hr) {
            return Err(format!("T-node {id} height stale"));
        }
        Ok(n.height)
    }
}
