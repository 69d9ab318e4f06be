//! Explicit cover tree over a Euclidean point set.
//!
//! Scales are dyadic: a node introduced at scale `i` covers its children within
//! `σ·2^{-i}`, and all points present at scale `i` are more than `σ·2^{-i}` apart.
//! Scale 0 holds only the root and `σ` is the largest root-to-point distance at
//! build time. A point is stored once; its implicit self-parent chain runs from
//! its introduction scale down to the finest scale.
//!
//! Besides the node-level `maxdist`, every child edge records the largest
//! distance from the parent to any point in that child's subtree. Suffix maxima
//! over those edges give the exact `maxdist` of the implicit node `(q, i)`, i.e.
//! over descendants introduced below scale `i`. Search refines with that value.

mod io;
mod verify;

pub use verify::Violation;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::ArrayView2;
use num_complex::Complex64;

use crate::linalg::{as_real, dist};
use crate::{Error, Result};

pub type NodeId = usize;

/// Relative slack added to the pruning bound so that rounding in the triangle
/// inequality never discards the branch holding the true nearest neighbour.
const PRUNE_SLACK: f64 = 1e-12;

/// Row-major real point storage. Complex inputs are stored as interleaved
/// `(re, im)` pairs, i.e. as `2L` reals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("point dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::dim(dim, data.len() % dim));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let dim = first.len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(Error::dim(dim, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// Rows of a complex matrix, each embedded as `2L` reals.
    pub fn from_complex(rows: ArrayView2<Complex64>) -> Result<Self> {
        let (d, l) = rows.dim();
        if d == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut data = Vec::with_capacity(2 * d * l);
        for row in rows.rows() {
            for z in row {
                data.push(z.re);
                data.push(z.im);
            }
        }
        Self::new(2 * l, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn push(&mut self, p: &[f64]) -> usize {
        self.data.extend_from_slice(p);
        self.len() - 1
    }
}

/// Exhaustive nearest neighbour over a point set, lowest index on ties.
pub fn brute_force_nn(points: &PointSet, query: &[f64]) -> Result<AnnsResult> {
    if query.len() != points.dim() {
        return Err(Error::dim(points.dim(), query.len()));
    }
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut best = (f64::INFINITY, 0usize);
    for j in 0..points.len() {
        let d = dist(query, points.point(j));
        if d < best.0 {
            best = (d, j);
        }
    }
    Ok(AnnsResult {
        index: best.1,
        distance: best.0,
        cost: points.len() as u64,
        warm_distance: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub point: usize,
    pub scale: i32,
    pub parent: Option<NodeId>,
    /// Sorted by `(scale, point)`.
    pub children: Vec<NodeId>,
    /// Max distance from this node to any descendant.
    pub maxdist: f64,
    /// Zero-distance copies of this node's point.
    pub duplicates: Vec<usize>,
    child_md: Vec<f64>,
    suffix_md: Vec<f64>,
}

impl Node {
    fn new(point: usize, scale: i32, parent: Option<NodeId>) -> Self {
        Self {
            point,
            scale,
            parent,
            children: Vec::new(),
            maxdist: 0.0,
            duplicates: Vec::new(),
            child_md: Vec::new(),
            suffix_md: Vec::new(),
        }
    }

    fn refresh_suffix(&mut self) {
        self.suffix_md.resize(self.child_md.len(), 0.0);
        let mut run = 0.0f64;
        for k in (0..self.child_md.len()).rev() {
            run = run.max(self.child_md[k]);
            self.suffix_md[k] = run;
        }
        self.maxdist = self.suffix_md.first().copied().unwrap_or(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnsResult {
    pub index: usize,
    pub distance: f64,
    /// Distance evaluations performed by this query.
    pub cost: u64,
    /// Distance from the query to the warm start, when one was given.
    pub warm_distance: Option<f64>,
}

#[derive(Debug)]
pub struct CoverTree {
    points: PointSet,
    nodes: Vec<Node>,
    /// Node owning each point id (the twin for duplicates).
    owner: Vec<NodeId>,
    sigma: f64,
    i_max: i32,
    distance_count: AtomicU64,
}

impl Clone for CoverTree {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            nodes: self.nodes.clone(),
            owner: self.owner.clone(),
            sigma: self.sigma,
            i_max: self.i_max,
            distance_count: AtomicU64::new(self.distance_count()),
        }
    }
}

#[inline]
fn better(d: f64, id: usize, best_d: f64, best_id: usize) -> bool {
    d < best_d || (d == best_d && id < best_id)
}

impl CoverTree {
    /// Batch construction by repeated insertion in input order. The first point
    /// is the root and `σ` is its largest distance to any other point.
    pub fn build(points: PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = points.len();
        let root = points.point(0);
        let sigma = (1..n)
            .map(|j| dist(root, points.point(j)))
            .fold(0.0f64, f64::max);
        let mut tree = Self {
            nodes: vec![Node::new(0, 0, None)],
            owner: vec![0],
            sigma,
            i_max: 0,
            distance_count: AtomicU64::new(n.saturating_sub(1) as u64),
            points,
        };
        for j in 1..n {
            tree.place(j);
        }
        Ok(tree)
    }

    pub fn from_complex(rows: ArrayView2<Complex64>) -> Result<Self> {
        Self::build(PointSet::from_complex(rows)?)
    }

    /// Online insertion. Returns the new point id.
    pub fn insert(&mut self, point: &[f64]) -> Result<usize> {
        if point.len() != self.points.dim() {
            return Err(Error::dim(self.points.dim(), point.len()));
        }
        let id = self.points.push(point);
        self.place(id);
        Ok(id)
    }

    pub fn insert_complex(&mut self, point: &[Complex64]) -> Result<usize> {
        self.insert(as_real(point))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn i_max(&self) -> i32 {
        self.i_max
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point_dim(&self) -> usize {
        self.points.dim()
    }

    /// Total pairwise distance evaluations (construction, insertion and search).
    pub fn distance_count(&self) -> u64 {
        self.distance_count.load(Ordering::Relaxed)
    }

    /// Covering radius `σ·2^{-i}` of scale `i`.
    #[inline]
    pub fn radius(&self, scale: i32) -> f64 {
        self.sigma * 2f64.powi(-scale)
    }

    /// Number of explicitly stored nodes (excluding duplicates).
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn duplicate_count(&self) -> usize {
        self.nodes.iter().map(|n| n.duplicates.len()).sum()
    }

    #[inline]
    fn d(&self, node: NodeId, p: &[f64]) -> f64 {
        dist(self.points.point(self.nodes[node].point), p)
    }

    /// Range of `children` whose scale equals `scale`.
    fn children_at(&self, node: NodeId, scale: i32) -> &[NodeId] {
        let ch = &self.nodes[node].children;
        let lo = ch.partition_point(|&c| self.nodes[c].scale < scale);
        let hi = ch.partition_point(|&c| self.nodes[c].scale <= scale);
        &ch[lo..hi]
    }

    /// `maxdist` of the implicit node `(node, scale)`: max over descendants
    /// introduced at scales strictly finer than `scale`. `None` if there are none.
    pub fn maxdist_below(&self, node: NodeId, scale: i32) -> Option<f64> {
        let n = &self.nodes[node];
        let idx = n.children.partition_point(|&c| self.nodes[c].scale <= scale);
        n.suffix_md.get(idx).copied()
    }

    fn count(&self, k: u64) {
        self.distance_count.fetch_add(k, Ordering::Relaxed);
    }

    /// Attach point `id` (already stored) to the tree.
    fn place(&mut self, id: usize) {
        let p = self.points.point(id).to_vec();
        let d_root = self.d(0, &p);
        let mut evals = 1u64;
        if d_root == 0.0 {
            self.attach_duplicate(0, id);
            self.count(evals);
            return;
        }
        if self.sigma == 0.0 {
            // only the root (and its copies) so far
            self.sigma = d_root;
        } else if d_root > self.sigma {
            self.grow(d_root);
        }

        // cover sets per scale, with cached distances
        let mut cover: Vec<Vec<(NodeId, f64)>> = vec![vec![(0, d_root)]];
        let mut cache: HashMap<NodeId, f64> = HashMap::from([(0, d_root)]);
        let mut level = 0i32;
        loop {
            let r = self.radius(level);
            let mut q: Vec<(NodeId, f64)> = Vec::new();
            for &(node, d) in &cover[level as usize] {
                q.push((node, d));
                for &c in self.children_at(node, level + 1) {
                    let dc = self.d(c, &p);
                    evals += 1;
                    if dc == 0.0 {
                        self.attach_duplicate(c, id);
                        self.count(evals);
                        return;
                    }
                    cache.insert(c, dc);
                    q.push((c, dc));
                }
            }
            let min_d = q.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            if min_d > r {
                break;
            }
            cover.push(q.into_iter().filter(|x| x.1 <= r).collect());
            level += 1;
        }

        // the call at `level` failed; the first coarser level with a node
        // within its radius becomes the parent
        for j in (0..level).rev() {
            let r = self.radius(j);
            let parent = cover[j as usize]
                .iter()
                .filter(|x| x.1 <= r)
                .min_by(|a, b| {
                    a.1.total_cmp(&b.1)
                        .then(self.nodes[a.0].point.cmp(&self.nodes[b.0].point))
                })
                .copied();
            if let Some((parent, d_parent)) = parent {
                evals += self.attach_child(parent, id, j + 1, d_parent, &p, &cache);
                self.count(evals);
                return;
            }
        }
        unreachable!("root is always within σ of an inserted point");
    }

    fn attach_duplicate(&mut self, twin: NodeId, id: usize) {
        self.nodes[twin].duplicates.push(id);
        self.set_owner(id, twin);
    }

    fn set_owner(&mut self, id: usize, node: NodeId) {
        if self.owner.len() <= id {
            self.owner.resize(id + 1, usize::MAX);
        }
        self.owner[id] = node;
    }

    /// Returns the number of extra distance evaluations spent updating ancestors.
    fn attach_child(
        &mut self,
        parent: NodeId,
        id: usize,
        scale: i32,
        d_parent: f64,
        p: &[f64],
        cache: &HashMap<NodeId, f64>,
    ) -> u64 {
        let node_id = self.nodes.len();
        self.nodes.push(Node::new(id, scale, Some(parent)));
        self.set_owner(id, node_id);
        self.i_max = self.i_max.max(scale);

        let pos = {
            let ch = &self.nodes[parent].children;
            ch.partition_point(|&c| (self.nodes[c].scale, self.nodes[c].point) < (scale, id))
        };
        let pn = &mut self.nodes[parent];
        pn.children.insert(pos, node_id);
        pn.child_md.insert(pos, d_parent);
        pn.refresh_suffix();

        // propagate the new descendant distance up the ancestor chain
        let mut extra = 0;
        let mut child = parent;
        while let Some(anc) = self.nodes[child].parent {
            let d = match cache.get(&anc) {
                Some(&d) => d,
                None => {
                    extra += 1;
                    self.d(anc, p)
                }
            };
            let k = self.nodes[anc]
                .children
                .iter()
                .position(|&c| c == child)
                .expect("child listed under its parent");
            let a = &mut self.nodes[anc];
            if d > a.child_md[k] {
                a.child_md[k] = d;
                a.refresh_suffix();
            }
            child = anc;
        }
        extra
    }

    /// Rescale the root's coverage so that a point at distance `d` is covered:
    /// σ doubles `k` times and every non-root scale shifts by `k`.
    fn grow(&mut self, d: f64) {
        let mut k = 0;
        while self.sigma * 2f64.powi(k) < d {
            k += 1;
        }
        self.sigma *= 2f64.powi(k);
        for node in self.nodes.iter_mut().skip(1) {
            node.scale += k;
        }
        if self.nodes.len() > 1 {
            self.i_max += k;
        }
    }

    /// Branch-and-bound `(1+ε)` approximate nearest neighbour search.
    ///
    /// With `warm_start` the running best starts at that point, so the result is
    /// never farther than the warm start. `epsilon == 0` descends to the finest
    /// scale and returns an exact nearest neighbour (lowest id among ties).
    pub fn ann_search(
        &self,
        query: &[f64],
        epsilon: f64,
        warm_start: Option<usize>,
    ) -> Result<AnnsResult> {
        if query.len() != self.points.dim() {
            return Err(Error::dim(self.points.dim(), query.len()));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be finite and ≥ 0, got {epsilon}")));
        }
        let root_point = self.nodes[0].point;
        let d_root = self.d(0, query);
        let mut cost = 1u64;

        let mut best = (d_root, root_point);
        let mut warm_distance = None;
        if let Some(w) = warm_start {
            if w >= self.points.len() {
                return Err(Error::IndexOutOfRange { index: w, len: self.points.len() });
            }
            let dw = if w == root_point {
                d_root
            } else {
                cost += 1;
                dist(query, self.points.point(w))
            };
            warm_distance = Some(dw);
            best = (dw, w);
            if better(d_root, root_point, best.0, best.1) {
                best = (d_root, root_point);
            }
        }

        let mut cands: Vec<(NodeId, f64)> = vec![(0, d_root)];
        let mut next: Vec<(NodeId, f64)> = Vec::new();
        let mut i = 0i32;
        while i < self.i_max && !cands.is_empty() {
            if epsilon > 0.0 && 2.0 * self.radius(i) * (1.0 + 1.0 / epsilon) <= best.0 {
                break;
            }
            let s = i + 1;
            next.clear();
            for &(node, d) in &cands {
                next.push((node, d));
                for &c in self.children_at(node, s) {
                    let dc = self.d(c, query);
                    cost += 1;
                    next.push((c, dc));
                }
            }
            for &(node, d) in &next {
                let id = self.nodes[node].point;
                if better(d, id, best.0, best.1) {
                    best = (d, id);
                }
            }
            let bound = best.0;
            cands.clear();
            cands.extend(next.iter().copied().filter(|&(node, d)| {
                self.maxdist_below(node, s)
                    .is_some_and(|md| d <= (bound + md) * (1.0 + PRUNE_SLACK))
            }));
            i += 1;
        }
        self.count(cost);
        Ok(AnnsResult {
            index: best.1,
            distance: best.0,
            cost,
            warm_distance,
        })
    }

    pub fn ann_search_complex(
        &self,
        query: &[Complex64],
        epsilon: f64,
        warm_start: Option<usize>,
    ) -> Result<AnnsResult> {
        self.ann_search(as_real(query), epsilon, warm_start)
    }

    /// Exact nearest neighbour (`ε = 0`).
    pub fn nearest(&self, query: &[f64]) -> Result<AnnsResult> {
        self.ann_search(query, 0.0, None)
    }

    /// Structural check of nesting, covering, separation and maxdist.
    /// Empty iff the tree is valid.
    pub fn verify_invariants(&self) -> Vec<Violation> {
        verify::verify(self)
    }
}

/// `max ‖p−q‖ / min_{p≠q} ‖p−q‖` by exhaustive pairwise comparison.
pub fn aspect_ratio(points: &PointSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = points.len();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for a in 0..n {
        for b in a + 1..n {
            let d = dist(points.point(a), points.point(b));
            if d > 0.0 {
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
    }
    if hi == 0.0 {
        return Err(Error::DegenerateAspectRatio);
    }
    Ok(hi / lo)
}
