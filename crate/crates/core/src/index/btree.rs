//! Order-B B+-tree whose nodes live in small crossbar arrays.
//!
//! Internal nodes keep separators sorted so a single compare reveals the
//! child: the stored-<=-key flags form a prefix. Leaves are unsorted; inserts
//! append and deletes swap the last row into the hole.

use std::collections::HashSet;

use crate::cam::{CamMode, CamPartition, Entry, EntryMatch};
use crate::crossbar::ExecStats;

use super::{IndexError, Pool};

#[derive(Clone, Debug)]
struct BNode {
    part: CamPartition,
    leaf: bool,
    /// Record refs, row-aligned with the stored keys (leaves only).
    refs: Vec<u64>,
    children: Vec<usize>,
    next: Option<usize>,
    prev: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct BTree {
    nodes: Vec<Option<BNode>>,
    free: Vec<usize>,
    root: usize,
    b: usize,
    key_bits: u32,
    /// Nodes shallower than this are searched one at a time; the subtree
    /// rooted at this depth has all of its leaves searched together.
    cam_depth: usize,
    len: usize,
    pub(crate) pool: Pool,
}

/// Snapshot of node contents, used to migrate a tree between pools.
pub(crate) type TreeImage = Vec<(usize, Vec<u64>)>;

impl BTree {
    pub(crate) fn new(b: usize, key_bits: u32, cam_depth: usize, pool: Pool) -> Self {
        let mut t = BTree {
            nodes: Vec::new(),
            free: Vec::new(),
            root: 0,
            b,
            key_bits,
            cam_depth,
            len: 0,
            pool,
        };
        t.root = t.alloc(true);
        t
    }

    /// Bulk load sorted records with every node filled to about `fill`.
    pub(crate) fn bulk_load(
        b: usize,
        key_bits: u32,
        cam_depth: usize,
        pool: Pool,
        records: &[(u64, u64)],
        fill: f64,
        st: &mut ExecStats,
    ) -> Result<Self, IndexError> {
        let mut t = BTree::new(b, key_bits, cam_depth, pool);
        if records.is_empty() {
            return Ok(t);
        }
        let root_leaf = t.root;
        t.free_node(root_leaf);
        let target = ((b as f64 * fill).round() as usize).clamp(t.min_fill().max(1), b);
        let mut level: Vec<(usize, u64)> = Vec::new();
        let chunks = even_chunks(records.len(), target, t.min_fill(), b);
        let mut at = 0;
        let mut prev: Option<usize> = None;
        for size in chunks {
            let id = t.alloc(true);
            let slice = &records[at..at + size];
            at += size;
            let keys: Vec<u64> = slice.iter().map(|r| r.0).collect();
            t.write_rows(id, 0, &keys, st)?;
            t.node_mut(id).refs = slice.iter().map(|r| r.1).collect();
            t.node_mut(id).prev = prev;
            if let Some(p) = prev {
                t.node_mut(p).next = Some(id);
            }
            prev = Some(id);
            level.push((id, keys[0]));
        }
        while level.len() > 1 {
            let chunks = even_chunks(level.len(), target, t.min_fill(), b);
            let mut up = Vec::new();
            let mut at = 0;
            for size in chunks {
                let group = &level[at..at + size];
                at += size;
                let id = t.alloc(false);
                let seps: Vec<u64> = group[1..].iter().map(|g| g.1).collect();
                t.write_rows(id, 0, &seps, st)?;
                t.node_mut(id).children = group.iter().map(|g| g.0).collect();
                up.push((id, group[0].1));
            }
            level = up;
        }
        t.root = level[0].0;
        t.len = records.len();
        Ok(t)
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    fn min_fill(&self) -> usize {
        self.b.div_ceil(2)
    }

    fn node(&self, id: usize) -> &BNode {
        self.nodes[id].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: usize) -> &mut BNode {
        self.nodes[id].as_mut().expect("live node")
    }

    fn alloc(&mut self, leaf: bool) -> usize {
        let part = CamPartition::new(CamMode::Tcam, self.key_bits, self.b).expect("key width checked by config");
        let node = BNode {
            part,
            leaf,
            refs: Vec::new(),
            children: Vec::new(),
            next: None,
            prev: None,
        };
        let id = match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        };
        let template = self.node(id).part.clone();
        self.pool.ensure(id, &template);
        id
    }

    fn free_node(&mut self, id: usize) {
        self.nodes[id] = None;
        self.free.push(id);
    }

    /// Entries stored in node `id`.
    fn size(&self, id: usize) -> usize {
        self.node(id).part.len
    }

    fn write_rows(&mut self, id: usize, from: usize, keys: &[u64], st: &mut ExecStats) -> Result<(), IndexError> {
        let mut part = self.node(id).part.clone();
        part.truncate(from);
        let array = &mut self.pool.arrays[id];
        for (i, &k) in keys.iter().enumerate().skip(from) {
            *st += part.write_entry(array, i, &Entry::exact(k))?;
        }
        part.truncate(keys.len());
        self.node_mut(id).part = part;
        Ok(())
    }

    fn write_row(&mut self, id: usize, row: usize, key: u64, st: &mut ExecStats) -> Result<(), IndexError> {
        let mut part = self.node(id).part.clone();
        *st += part.write_entry(&mut self.pool.arrays[id], row, &Entry::exact(key))?;
        self.node_mut(id).part = part;
        Ok(())
    }

    fn read_keys(&mut self, id: usize, st: &mut ExecStats) -> Result<Vec<u64>, IndexError> {
        let part = self.node(id).part.clone();
        let array = &mut self.pool.arrays[id];
        let mut out = Vec::with_capacity(part.len);
        for i in 0..part.len {
            let (e, d) = part.read_entry(array, i)?;
            *st += d;
            out.push(e.value);
        }
        Ok(out)
    }

    fn search(&mut self, id: usize, key: u64, st: &mut ExecStats) -> Result<Vec<EntryMatch>, IndexError> {
        let part = self.node(id).part.clone();
        if part.len == 0 {
            return Ok(Vec::new());
        }
        let (m, d) = part.search(&mut self.pool.arrays[id], key)?;
        *st += d;
        Ok(m)
    }

    /// Child slot for `key` in internal node `id`: the number of separators
    /// not above the key.
    fn child_slot(&mut self, id: usize, key: u64, st: &mut ExecStats) -> Result<usize, IndexError> {
        let m = self.search(id, key, st)?;
        Ok(m.iter().filter(|m| !matches!(m, EntryMatch::Greater)).count())
    }

    /// Root-to-leaf path as (internal node, slot) pairs, and the leaf.
    fn descend(&mut self, key: u64, st: &mut ExecStats) -> Result<(Vec<(usize, usize)>, usize), IndexError> {
        let mut path = Vec::new();
        let mut id = self.root;
        while !self.node(id).leaf {
            let slot = self.child_slot(id, key, st)?;
            path.push((id, slot));
            id = self.node(id).children[slot];
        }
        Ok((path, id))
    }

    /// Root of the CAM-searched unit that covers `key`.
    fn descend_unit(&mut self, key: u64, st: &mut ExecStats) -> Result<usize, IndexError> {
        let mut id = self.root;
        let mut depth = 0;
        while !self.node(id).leaf && depth < self.cam_depth {
            let slot = self.child_slot(id, key, st)?;
            id = self.node(id).children[slot];
            depth += 1;
        }
        Ok(id)
    }

    fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = self.node(n);
            if node.leaf {
                out.push(n);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        out
    }

    fn find_row(&mut self, leaf: usize, key: u64, st: &mut ExecStats) -> Result<Option<usize>, IndexError> {
        Ok(self.search(leaf, key, st)?.iter().position(|m| m.is_equal()))
    }

    pub(crate) fn get(&mut self, key: u64, st: &mut ExecStats) -> Result<Option<u64>, IndexError> {
        if self.len == 0 {
            return Ok(None);
        }
        let unit = self.descend_unit(key, st)?;
        let mut hits = Vec::new();
        let mut lanes = ExecStats::default();
        for leaf in self.leaves_under(unit) {
            let mut s = ExecStats::default();
            if let Some(row) = self.find_row(leaf, key, &mut s)? {
                hits.push((leaf, row));
            }
            lanes = parallel(lanes, s);
        }
        *st += lanes;
        match hits.first() {
            Some(&(leaf, row)) => {
                st.external_reads += 1;
                st.elapsed_ns += self.pool.arrays[leaf].timing().t_access_ns;
                Ok(Some(self.node(leaf).refs[row]))
            }
            None => Ok(None),
        }
    }

    pub(crate) fn insert(&mut self, key: u64, r: u64, st: &mut ExecStats) -> Result<(), IndexError> {
        let (path, leaf) = self.descend(key, st)?;
        if self.size(leaf) > 0 && self.find_row(leaf, key, st)?.is_some() {
            return Err(IndexError::Duplicate(key));
        }
        self.len += 1;
        if self.size(leaf) < self.b {
            let mut part = self.node(leaf).part.clone();
            *st += part.write_entry(&mut self.pool.arrays[leaf], part.len, &Entry::exact(key))?;
            let node = self.node_mut(leaf);
            node.part = part;
            node.refs.push(r);
            return Ok(());
        }
        let mut entries: Vec<(u64, u64)> = self.read_keys(leaf, st)?.into_iter().zip(self.node(leaf).refs.clone()).collect();
        entries.push((key, r));
        entries.sort_unstable();
        let mid = entries.len() / 2;
        let right = self.alloc(true);
        let (lk, rk): (Vec<u64>, Vec<u64>) = (
            entries[..mid].iter().map(|e| e.0).collect(),
            entries[mid..].iter().map(|e| e.0).collect(),
        );
        self.write_rows(leaf, 0, &lk, st)?;
        self.write_rows(right, 0, &rk, st)?;
        let old_next = self.node(leaf).next;
        {
            let n = self.node_mut(leaf);
            n.refs = entries[..mid].iter().map(|e| e.1).collect();
            n.next = Some(right);
        }
        {
            let n = self.node_mut(right);
            n.refs = entries[mid..].iter().map(|e| e.1).collect();
            n.prev = Some(leaf);
            n.next = old_next;
        }
        if let Some(nx) = old_next {
            self.node_mut(nx).prev = Some(right);
        }
        self.insert_up(path, leaf, rk[0], right, st)
    }

    fn insert_up(&mut self, mut path: Vec<(usize, usize)>, left: usize, sep: u64, right: usize, st: &mut ExecStats) -> Result<(), IndexError> {
        let Some((parent, slot)) = path.pop() else {
            let root = self.alloc(false);
            self.write_rows(root, 0, &[sep], st)?;
            self.node_mut(root).children = vec![left, right];
            self.root = root;
            return Ok(());
        };
        let mut seps = self.read_keys(parent, st)?;
        seps.insert(slot, sep);
        let mut children = self.node(parent).children.clone();
        children.insert(slot + 1, right);
        if children.len() <= self.b {
            self.write_rows(parent, slot, &seps, st)?;
            self.node_mut(parent).children = children;
            return Ok(());
        }
        let mid = seps.len() / 2;
        let up = seps[mid];
        let sib = self.alloc(false);
        self.write_rows(parent, slot.min(mid), &seps[..mid], st)?;
        self.write_rows(sib, 0, &seps[mid + 1..], st)?;
        self.node_mut(sib).children = children.split_off(mid + 1);
        self.node_mut(parent).children = children;
        self.insert_up(path, parent, up, sib, st)
    }

    /// Remove `row` of a leaf by moving the last row into it.
    fn swap_remove(&mut self, leaf: usize, row: usize, st: &mut ExecStats) -> Result<(), IndexError> {
        let mut part = self.node(leaf).part.clone();
        let last = part.len - 1;
        let array = &mut self.pool.arrays[leaf];
        if row != last {
            let (e, d) = part.read_entry(array, last)?;
            *st += d;
            *st += part.write_entry(array, row, &e)?;
        }
        part.truncate(last);
        let n = self.node_mut(leaf);
        n.part = part;
        n.refs.swap_remove(row);
        Ok(())
    }

    fn append_leaf(&mut self, leaf: usize, key: u64, r: u64, st: &mut ExecStats) -> Result<(), IndexError> {
        let mut part = self.node(leaf).part.clone();
        *st += part.write_entry(&mut self.pool.arrays[leaf], part.len, &Entry::exact(key))?;
        let n = self.node_mut(leaf);
        n.part = part;
        n.refs.push(r);
        Ok(())
    }

    pub(crate) fn remove(&mut self, key: u64, st: &mut ExecStats) -> Result<u64, IndexError> {
        if self.len == 0 {
            return Err(IndexError::Missing(key));
        }
        let (path, leaf) = self.descend(key, st)?;
        let Some(row) = self.find_row(leaf, key, st)? else {
            return Err(IndexError::Missing(key));
        };
        let r = self.node(leaf).refs[row];
        self.swap_remove(leaf, row, st)?;
        self.len -= 1;
        self.rebalance(path, leaf, st)?;
        Ok(r)
    }

    fn fanout(&self, id: usize) -> usize {
        let n = self.node(id);
        if n.leaf {
            n.part.len
        } else {
            n.children.len()
        }
    }

    fn rebalance(&mut self, mut path: Vec<(usize, usize)>, id: usize, st: &mut ExecStats) -> Result<(), IndexError> {
        let Some((parent, slot)) = path.pop() else {
            let n = self.node(id);
            if !n.leaf && n.children.len() == 1 {
                self.root = n.children[0];
                self.free_node(id);
            }
            return Ok(());
        };
        if self.fanout(id) >= self.min_fill() {
            return Ok(());
        }
        let siblings = self.node(parent).children.clone();
        let left = slot.checked_sub(1).map(|i| siblings[i]);
        let right = siblings.get(slot + 1).copied();
        let mut seps = self.read_keys(parent, st)?;
        let leaf = self.node(id).leaf;
        if let Some(rs) = right.filter(|&s| self.fanout(s) > self.min_fill()) {
            if leaf {
                let keys = self.read_keys(rs, st)?;
                let (row, &k) = keys.iter().enumerate().min_by_key(|e| e.1).expect("non-empty sibling");
                let r = self.node(rs).refs[row];
                self.swap_remove(rs, row, st)?;
                self.append_leaf(id, k, r, st)?;
                let new_min = keys.iter().copied().filter(|&x| x != k).min().expect("sibling above minimum");
                seps[slot] = new_min;
            } else {
                let rkeys = self.read_keys(rs, st)?;
                let mut mine = self.read_keys(id, st)?;
                mine.push(seps[slot]);
                seps[slot] = rkeys[0];
                let moved = self.node_mut(rs).children.remove(0);
                self.node_mut(id).children.push(moved);
                let at = mine.len() - 1;
                self.write_rows(id, at, &mine, st)?;
                self.write_rows(rs, 0, &rkeys[1..], st)?;
            }
            self.write_row(parent, slot, seps[slot], st)?;
            return Ok(());
        }
        if let Some(ls) = left.filter(|&s| self.fanout(s) > self.min_fill()) {
            if leaf {
                let keys = self.read_keys(ls, st)?;
                let (row, &k) = keys.iter().enumerate().max_by_key(|e| e.1).expect("non-empty sibling");
                let r = self.node(ls).refs[row];
                self.swap_remove(ls, row, st)?;
                self.append_leaf(id, k, r, st)?;
                seps[slot - 1] = k;
            } else {
                let mut lkeys = self.read_keys(ls, st)?;
                let mine = self.read_keys(id, st)?;
                let mut merged = vec![seps[slot - 1]];
                merged.extend(mine);
                seps[slot - 1] = lkeys.pop().expect("non-empty sibling");
                let moved = self.node_mut(ls).children.pop().expect("non-empty sibling");
                self.node_mut(id).children.insert(0, moved);
                self.write_rows(id, 0, &merged, st)?;
                self.write_rows(ls, lkeys.len(), &lkeys, st)?;
            }
            self.write_row(parent, slot - 1, seps[slot - 1], st)?;
            return Ok(());
        }
        // Merge with a sibling; the right node of the pair disappears.
        let (a, b_, sep_at) = match right {
            Some(rs) => (id, rs, slot),
            None => (left.expect("non-root node has a sibling"), id, slot - 1),
        };
        if leaf {
            let keys = self.read_keys(b_, st)?;
            let refs = self.node(b_).refs.clone();
            for (k, r) in keys.into_iter().zip(refs) {
                self.append_leaf(a, k, r, st)?;
            }
            let nx = self.node(b_).next;
            self.node_mut(a).next = nx;
            if let Some(nx) = nx {
                self.node_mut(nx).prev = Some(a);
            }
        } else {
            let mut akeys = self.read_keys(a, st)?;
            let from = akeys.len();
            akeys.push(seps[sep_at]);
            akeys.extend(self.read_keys(b_, st)?);
            self.write_rows(a, from, &akeys, st)?;
            let moved = std::mem::take(&mut self.node_mut(b_).children);
            self.node_mut(a).children.extend(moved);
        }
        self.free_node(b_);
        seps.remove(sep_at);
        self.node_mut(parent).children.remove(sep_at + 1);
        self.write_rows(parent, sep_at, &seps, st)?;
        self.rebalance(path, parent, st)
    }

    fn edge_leaf(&self, rightmost: bool) -> usize {
        let mut id = self.root;
        while !self.node(id).leaf {
            let c = &self.node(id).children;
            id = if rightmost { *c.last().unwrap() } else { c[0] };
        }
        id
    }

    /// Remove and return the largest (or smallest) record.
    pub(crate) fn take_extreme(&mut self, max: bool, st: &mut ExecStats) -> Result<Option<(u64, u64)>, IndexError> {
        if self.len == 0 {
            return Ok(None);
        }
        let leaf = self.edge_leaf(max);
        let keys = self.read_keys(leaf, st)?;
        let k = if max { keys.iter().max() } else { keys.iter().min() };
        let k = *k.expect("non-empty tree has a non-empty edge leaf");
        let r = self.remove(k, st)?;
        Ok(Some((k, r)))
    }

    pub(crate) fn read_all(&mut self, st: &mut ExecStats) -> Result<Vec<(u64, u64)>, IndexError> {
        let mut out = Vec::with_capacity(self.len);
        let mut leaf = Some(self.edge_leaf(false));
        while let Some(id) = leaf {
            let keys = self.read_keys(id, st)?;
            out.extend(keys.into_iter().zip(self.node(id).refs.iter().copied()));
            leaf = self.node(id).next;
        }
        Ok(out)
    }

    /// Records in `[lo, hi]`. Compare programs run only in the units that hold
    /// a bound flagged in `lo_bound` / `hi_bound`; every other leaf in range is
    /// read out.
    pub(crate) fn range(&mut self, lo: u64, hi: u64, lo_bound: bool, hi_bound: bool, st: &mut ExecStats) -> Result<Vec<(u64, u64)>, IndexError> {
        if self.len == 0 {
            return Ok(Vec::new());
        }
        let unit_lo: HashSet<usize> = if lo_bound {
            let u = self.descend_unit(lo, st)?;
            self.leaves_under(u).into_iter().collect()
        } else {
            HashSet::new()
        };
        let unit_hi: HashSet<usize> = if hi_bound {
            let u = self.descend_unit(hi, st)?;
            self.leaves_under(u).into_iter().collect()
        } else {
            HashSet::new()
        };
        let mut out = Vec::new();
        let mut reached = !lo_bound;
        let mut seen_hi = false;
        let mut leaf = Some(self.edge_leaf(false));
        let mut lanes = ExecStats::default();
        while let Some(id) = leaf {
            leaf = self.node(id).next;
            let in_lo = unit_lo.contains(&id);
            let in_hi = unit_hi.contains(&id);
            if !reached {
                if !in_lo {
                    continue;
                }
                reached = true;
            }
            if seen_hi && !in_hi {
                break;
            }
            seen_hi |= in_hi;
            if !(in_lo || in_hi) {
                let keys = self.read_keys(id, st)?;
                out.extend(keys.into_iter().zip(self.node(id).refs.iter().copied()));
                continue;
            }
            let mut s = ExecStats::default();
            let ok_lo = if in_lo { Some(self.search(id, lo, &mut s)?) } else { None };
            let ok_hi = if in_hi { Some(self.search(id, hi, &mut s)?) } else { None };
            let n = self.size(id);
            for row in 0..n {
                let a = ok_lo.as_ref().map_or(true, |m| m[row] != EntryMatch::Less);
                let b = ok_hi.as_ref().map_or(true, |m| m[row] != EntryMatch::Greater);
                if a && b {
                    let part = self.node(id).part.clone();
                    let (e, d) = part.read_entry(&mut self.pool.arrays[id], row)?;
                    s += d;
                    out.push((e.value, self.node(id).refs[row]));
                }
            }
            lanes = parallel(lanes, s);
        }
        *st += lanes;
        Ok(out)
    }

    pub(crate) fn export(&mut self, st: &mut ExecStats) -> Result<TreeImage, IndexError> {
        let ids: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].is_some()).collect();
        let mut img = Vec::with_capacity(ids.len());
        for id in ids {
            img.push((id, self.read_keys(id, st)?));
        }
        Ok(img)
    }

    pub(crate) fn import(&mut self, img: &TreeImage, st: &mut ExecStats) -> Result<(), IndexError> {
        for (id, keys) in img {
            let template = self.node(*id).part.clone();
            self.pool.ensure(*id, &template);
            self.write_rows(*id, 0, keys, st)?;
        }
        Ok(())
    }

    /// Structural checks: occupancy, separator order, leaf chain, key order.
    pub(crate) fn check(&mut self) -> Result<(), String> {
        let mut st = ExecStats::default();
        let mut depth = None;
        let mut count = 0;
        let mut stack = vec![(self.root, 0usize, None::<u64>, None::<u64>)];
        while let Some((id, d, lo, hi)) = stack.pop() {
            let keys = self.read_keys(id, &mut st).map_err(|e| e.to_string())?;
            let node = self.node(id).clone();
            let is_root = id == self.root;
            for &k in &keys {
                if lo.is_some_and(|l| k < l) || hi.is_some_and(|h| k >= h) {
                    return Err(format!("node {id}: key {k} outside [{lo:?}, {hi:?})"));
                }
            }
            if node.leaf {
                if node.refs.len() != keys.len() {
                    return Err(format!("leaf {id}: refs out of step"));
                }
                if !is_root && (keys.len() < self.min_fill() || keys.len() > self.b) {
                    return Err(format!("leaf {id}: {} entries", keys.len()));
                }
                if *depth.get_or_insert(d) != d {
                    return Err(format!("leaf {id} at depth {d}"));
                }
                count += keys.len();
            } else {
                let c = node.children.len();
                if c != keys.len() + 1 || c > self.b || (!is_root && c < self.min_fill()) || (is_root && c < 2) {
                    return Err(format!("internal {id}: {c} children, {} separators", keys.len()));
                }
                if keys.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(format!("internal {id}: separators not sorted"));
                }
                for (i, &ch) in node.children.iter().enumerate() {
                    let l = if i == 0 { lo } else { Some(keys[i - 1]) };
                    let h = if i == c - 1 { hi } else { Some(keys[i]) };
                    stack.push((ch, d + 1, l, h));
                }
            }
        }
        if count != self.len {
            return Err(format!("tree holds {count} records, expected {}", self.len));
        }
        let chained = self.read_all(&mut st).map_err(|e| e.to_string())?;
        if chained.len() != self.len {
            return Err("leaf chain broken".into());
        }
        Ok(())
    }
}

/// Chunk sizes splitting `n` items evenly, near `target` per chunk and within
/// `[min, max]` where possible.
fn even_chunks(n: usize, target: usize, min: usize, max: usize) -> Vec<usize> {
    let lo = n.div_ceil(max).max(1);
    let hi = (n / min.max(1)).max(lo);
    let k = ((n as f64 / target as f64).round() as usize).clamp(lo, hi);
    let (q, r) = (n / k, n % k);
    (0..k).map(|i| q + usize::from(i < r)).collect()
}

/// Merge stats of units searched at the same time: events add, time overlaps.
pub(crate) fn parallel(a: ExecStats, b: ExecStats) -> ExecStats {
    let mut s = a;
    s += b;
    s.step_count = a.step_count.max(b.step_count);
    s.elapsed_ns = a.elapsed_ns.max(b.elapsed_ns);
    s.external_reads = a.external_reads.max(b.external_reads);
    s.external_writes = a.external_writes.max(b.external_writes);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_within_bounds() {
        for n in 1..500 {
            let c = even_chunks(n, 6, 4, 8);
            assert_eq!(c.iter().sum::<usize>(), n);
            if n >= 4 {
                assert!(c.iter().all(|&x| (4..=8).contains(&x)), "{n}: {c:?}");
            }
        }
    }
}
