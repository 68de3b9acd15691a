//! k-nearest-neighbor retrieval over feature vectors with a k-d tree.
//!
//! The tree uses median splits on the dimension of widest spread with leaves
//! of at most [`LEAF_SIZE`] points. Exact search is branch-and-bound;
//! approximate search is best-bin-first with a budget on inspected leaves.
//! Equal distances are ordered by lower id in every mode.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::{Error, Result};

pub const LEAF_SIZE: usize = 16;

/// Dictionary entry index.
pub type EntryId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborHit {
    pub id: EntryId,
    /// Euclidean distance in feature space.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exact,
    /// Best-bin-first search that inspects at most `check_budget` leaves.
    Approximate {
        check_budget: usize,
    },
}

impl SearchMode {
    /// Approximate search with the default budget of `64 * m` leaves.
    pub fn approximate_for(m: usize) -> Self {
        SearchMode::Approximate { check_budget: 64 * m }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    /// Ids in tree order.
    ids: Vec<EntryId>,
    /// Flattened vectors in tree order.
    points: Vec<f64>,
    nodes: Vec<Node>,
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Candidate ordered by (squared distance, id); the heap top is the worst kept.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    id: EntryId,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

struct KBest {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl KBest {
    fn new(k: usize) -> Self {
        KBest {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(worst) = self.heap.peek() {
            if c < *worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    /// Squared radius beyond which nothing can enter the set.
    fn bound(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.dist2)
        }
    }

    fn into_hits(self) -> Vec<NeighborHit> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| NeighborHit {
                id: c.id,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }
}

/// Min-heap item for best-bin-first traversal.
struct Pending {
    bound: f64,
    node: usize,
}
impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.node.cmp(&self.node))
    }
}

fn validate_vectors(vectors: &[(EntryId, Vec<f64>)]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot index an empty vector set".into()))?;
    let dim = first.1.len();
    if dim == 0 {
        return Err(Error::InvalidInput("zero-dimensional vectors".into()));
    }
    let mut seen = HashSet::with_capacity(vectors.len());
    for (id, v) in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite vector for id {id}")));
        }
        if !seen.insert(*id) {
            return Err(Error::InvalidInput(format!("duplicate id {id}")));
        }
    }
    Ok(dim)
}

fn check_query(dim: usize, len: usize, query: &[f64], m: usize) -> Result<()> {
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: query.len(),
        });
    }
    if m == 0 || m > len {
        return Err(Error::InvalidInput(format!("neighbor count {m} outside 1..={len}")));
    }
    Ok(())
}

impl NeighborIndex {
    /// Builds the tree. Deterministic for a given input order.
    pub fn build(vectors: Vec<(EntryId, Vec<f64>)>) -> Result<Self> {
        let dim = validate_vectors(&vectors)?;
        let mut order: Vec<usize> = (0..vectors.len()).collect();
        let mut nodes = Vec::new();
        build_node(&vectors, dim, &mut order, 0, &mut nodes);
        let mut ids = Vec::with_capacity(vectors.len());
        let mut points = Vec::with_capacity(vectors.len() * dim);
        for &i in &order {
            ids.push(vectors[i].0);
            points.extend_from_slice(&vectors[i].1);
        }
        Ok(NeighborIndex {
            dim,
            ids,
            points,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Stored `(id, vector)` pairs in tree order.
    pub fn entries(&self) -> impl Iterator<Item = (EntryId, &[f64])> {
        self.ids.iter().copied().zip(self.points.chunks_exact(self.dim))
    }

    fn point(&self, slot: usize) -> &[f64] {
        &self.points[slot * self.dim..(slot + 1) * self.dim]
    }

    /// The `m` nearest entries to `query`, ascending by distance then id.
    pub fn knn(&self, query: &[f64], m: usize, mode: SearchMode) -> Result<Vec<NeighborHit>> {
        check_query(self.dim, self.len(), query, m)?;
        let mut best = KBest::new(m);
        match mode {
            SearchMode::Exact => self.search_exact(0, query, &mut best),
            SearchMode::Approximate { check_budget } => self.search_bbf(query, check_budget.max(1), &mut best),
        }
        Ok(best.into_hits())
    }

    fn scan_leaf(&self, start: usize, end: usize, query: &[f64], best: &mut KBest) {
        for slot in start..end {
            best.offer(Candidate {
                dist2: squared_distance(self.point(slot), query),
                id: self.ids[slot],
            });
        }
    }

    fn search_exact(&self, node: usize, query: &[f64], best: &mut KBest) {
        match self.nodes[node] {
            Node::Leaf { start, end } => self.scan_leaf(start, end, query, best),
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_exact(near, query, best);
                // ties at the bound are still visited so that lower ids win
                if diff * diff <= best.bound() {
                    self.search_exact(far, query, best);
                }
            }
        }
    }

    fn search_bbf(&self, query: &[f64], budget: usize, best: &mut KBest) {
        let mut queue = BinaryHeap::new();
        queue.push(Pending { bound: 0.0, node: 0 });
        let mut leaves = 0usize;
        while let Some(Pending { bound, node }) = queue.pop() {
            if leaves >= budget || bound > best.bound() {
                break;
            }
            let mut current = node;
            loop {
                match self.nodes[current] {
                    Node::Leaf { start, end } => {
                        self.scan_leaf(start, end, query, best);
                        leaves += 1;
                        break;
                    }
                    Node::Split {
                        dim,
                        value,
                        left,
                        right,
                    } => {
                        let diff = query[dim] - value;
                        let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                        queue.push(Pending {
                            bound: bound.max(diff * diff),
                            node: far,
                        });
                        current = near;
                    }
                }
            }
        }
    }
}

fn build_node(
    vectors: &[(EntryId, Vec<f64>)],
    dim: usize,
    order: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let here = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return here;
    }
    let mut split_dim = 0;
    let mut widest = f64::NEG_INFINITY;
    for d in 0..dim {
        let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let x = vectors[i].1[d];
            (lo.min(x), hi.max(x))
        });
        if hi - lo > widest {
            widest = hi - lo;
            split_dim = d;
        }
    }
    order.sort_by(|&a, &b| {
        vectors[a].1[split_dim]
            .total_cmp(&vectors[b].1[split_dim])
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let value = vectors[order[mid]].1[split_dim];
    nodes.push(Node::Leaf { start: 0, end: 0 }); // placeholder
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(vectors, dim, lo, offset, nodes);
    let right = build_node(vectors, dim, hi, offset + mid, nodes);
    nodes[here] = Node::Split {
        dim: split_dim,
        value,
        left,
        right,
    };
    here
}

/// Linear-scan k nearest neighbors; the reference the tree is checked against.
pub fn brute_force_knn(vectors: &[(EntryId, Vec<f64>)], query: &[f64], m: usize) -> Result<Vec<NeighborHit>> {
    let dim = validate_vectors(vectors)?;
    check_query(dim, vectors.len(), query, m)?;
    let mut all: Vec<Candidate> = vectors
        .iter()
        .map(|(id, v)| Candidate {
            dist2: squared_distance(v, query),
            id: *id,
        })
        .collect();
    all.sort();
    Ok(all
        .into_iter()
        .take(m)
        .map(|c| NeighborHit {
            id: c.id,
            distance: c.dist2.sqrt(),
        })
        .collect())
}
