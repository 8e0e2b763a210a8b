//! Minimal spanning trees, invasion percolation, cluster labelling and tree
//! paths.
//!
//! Every algorithm here runs on any [`EdgeGraph`] with a strict total order
//! on edges given as `u128` keys. The upper 64 bits of a key are always the
//! bit pattern of the label value that decides acceptance (the larger
//! endpoint label on the triangular lattice, the bond label on the square
//! lattice), so keys of positive floats sort exactly like the labels.

use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::ensemble::{ConfigView, LabelField};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, LatticeKind, Rect};

/// Union-find with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Merges the classes of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (ra, rb) = if self.rank[ra as usize] < self.rank[rb as usize] { (rb, ra) } else { (ra, rb) };
        self.parent[rb as usize] = ra;
        if self.rank[ra as usize] == self.rank[rb as usize] {
            self.rank[ra as usize] += 1;
        }
        true
    }
}

/// Undirected multigraph interface used by the tree algorithms.
pub trait EdgeGraph {
    fn vertex_count(&self) -> usize;
    fn edge_count(&self) -> usize;
    fn endpoints(&self, e: u32) -> [u32; 2];
    /// Calls `f(neighbour, edge)` for every edge at `v`.
    fn for_each_incident(&self, v: u32, f: impl FnMut(u32, u32));
}

impl EdgeGraph for Geometry {
    fn vertex_count(&self) -> usize {
        self.site_count()
    }
    fn edge_count(&self) -> usize {
        Geometry::edge_count(self)
    }
    fn endpoints(&self, e: u32) -> [u32; 2] {
        self.edge(e)
    }
    #[inline]
    fn for_each_incident(&self, v: u32, mut f: impl FnMut(u32, u32)) {
        for (t, e) in self.incident(v) {
            f(t, e);
        }
    }
}

/// Explicit small graph, for oracle checks and router graphs.
#[derive(Debug, Clone, Default)]
pub struct SmallGraph {
    n: usize,
    edges: Vec<[u32; 2]>,
    adj: Vec<Vec<(u32, u32)>>,
}

impl SmallGraph {
    pub fn new(n: usize, edges: Vec<[u32; 2]>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (e, &[a, b]) in edges.iter().enumerate() {
            adj[a as usize].push((b, e as u32));
            if a != b {
                adj[b as usize].push((a, e as u32));
            }
        }
        Self { n, edges, adj }
    }

    /// Subgraph of `geometry` induced by `sites`; vertex `i` is `sites[i]`
    /// and the returned vector maps each new edge to its lattice edge.
    pub fn induced(geometry: &Geometry, sites: &[u32]) -> (Self, Vec<u32>) {
        let mut local = std::collections::HashMap::new();
        for (i, &s) in sites.iter().enumerate() {
            local.insert(s, i as u32);
        }
        let mut edges = Vec::new();
        let mut origin = Vec::new();
        for (e, &[a, b]) in geometry.edges().iter().enumerate() {
            if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
                edges.push([la, lb]);
                origin.push(e as u32);
            }
        }
        (Self::new(sites.len(), edges), origin)
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }
}

impl EdgeGraph for SmallGraph {
    fn vertex_count(&self) -> usize {
        self.n
    }
    fn edge_count(&self) -> usize {
        self.edges.len()
    }
    fn endpoints(&self, e: u32) -> [u32; 2] {
        self.edges[e as usize]
    }
    fn for_each_incident(&self, v: u32, mut f: impl FnMut(u32, u32)) {
        for &(t, e) in &self.adj[v as usize] {
            f(t, e);
        }
    }
}

/// Rule turning vertex labels into an edge order on the triangular lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgeOrder {
    /// `(max, min)` of the endpoint labels, compared lexicographically.
    #[default]
    Lexicographic,
    /// Larger endpoint label only, ties broken by edge id.
    MaxOnly,
}

/// Sort keys of all lattice edges.
pub fn edge_keys(geometry: &Geometry, labels: &LabelField, order: EdgeOrder) -> Vec<u128> {
    let v = labels.values();
    match geometry.kind() {
        LatticeKind::TriangularSite => geometry
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &[a, b])| {
                let (x, y) = (v[a as usize], v[b as usize]);
                let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
                let tail = match order {
                    EdgeOrder::Lexicographic => lo.to_bits(),
                    EdgeOrder::MaxOnly => e as u64,
                };
                (u128::from(hi.to_bits()) << 64) | u128::from(tail)
            })
            .collect(),
        LatticeKind::SquareBond => {
            v.iter().enumerate().map(|(e, x)| (u128::from(x.to_bits()) << 64) | e as u128).collect()
        }
    }
}

/// Label value stored in the upper half of a key.
#[inline]
pub fn key_label(key: u128) -> f64 {
    f64::from_bits((key >> 64) as u64)
}

/// Acyclic edge set with rooted parent pointers for path queries.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    n: usize,
    /// Edge ids in acceptance order.
    pub edges: Vec<u32>,
    /// Label value of each edge when it was accepted.
    pub edge_labels: Vec<f64>,
    /// Set when the input graph was disconnected and the result is a forest.
    pub forest_warning: bool,
    pub components: usize,
    adj_off: Vec<u32>,
    adj: Vec<(u32, u32)>,
    parent: Vec<u32>,
    parent_edge: Vec<u32>,
    depth: Vec<u32>,
    comp: Vec<u32>,
}

const NIL: u32 = u32::MAX;

impl SpanningTree {
    /// Builds the rooted structure from an acyclic set of edges of `g`.
    pub fn from_edges<G: EdgeGraph>(g: &G, edges: Vec<u32>, edge_labels: Vec<f64>) -> Self {
        let n = g.vertex_count();
        let mut deg = vec![0u32; n + 1];
        for &e in &edges {
            let [a, b] = g.endpoints(e);
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut adj_off = vec![0u32; n + 1];
        for v in 0..n {
            adj_off[v + 1] = adj_off[v] + deg[v];
        }
        let mut fill = adj_off.clone();
        let mut adj = vec![(0u32, 0u32); 2 * edges.len()];
        for &e in &edges {
            let [a, b] = g.endpoints(e);
            adj[fill[a as usize] as usize] = (b, e);
            fill[a as usize] += 1;
            adj[fill[b as usize] as usize] = (a, e);
            fill[b as usize] += 1;
        }
        let mut parent = vec![NIL; n];
        let mut parent_edge = vec![NIL; n];
        let mut depth = vec![0u32; n];
        let mut comp = vec![NIL; n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for root in 0..n {
            if comp[root] != NIL {
                continue;
            }
            comp[root] = components as u32;
            queue.push_back(root as u32);
            while let Some(v) = queue.pop_front() {
                let (lo, hi) = (adj_off[v as usize] as usize, adj_off[v as usize + 1] as usize);
                for &(t, e) in &adj[lo..hi] {
                    if comp[t as usize] == NIL {
                        comp[t as usize] = components as u32;
                        parent[t as usize] = v;
                        parent_edge[t as usize] = e;
                        depth[t as usize] = depth[v as usize] + 1;
                        queue.push_back(t);
                    }
                }
            }
            components += 1;
        }
        assert_eq!(edges.len() + components, n, "edge set is not acyclic");
        Self {
            n,
            edges,
            edge_labels,
            forest_warning: false,
            components,
            adj_off,
            adj,
            parent,
            parent_edge,
            depth,
            comp,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Tree neighbours of `v` with the connecting edge ids.
    pub fn tree_neighbors(&self, v: u32) -> &[(u32, u32)] {
        &self.adj[self.adj_off[v as usize] as usize..self.adj_off[v as usize + 1] as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        (self.adj_off[v as usize + 1] - self.adj_off[v as usize]) as usize
    }

    pub fn component(&self, v: u32) -> u32 {
        self.comp[v as usize]
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        let p = self.parent[v as usize];
        (p != NIL).then_some(p)
    }

    pub fn depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    /// Sorted copy of the edge ids.
    pub fn edge_set(&self) -> Vec<u32> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    /// Unique vertex sequence from `x` to `y`.
    pub fn path_sites(&self, x: u32, y: u32) -> Result<Vec<u32>> {
        if x as usize >= self.n || y as usize >= self.n {
            return Err(Error::Usage(format!("vertex out of range 0..{}", self.n)));
        }
        if self.comp[x as usize] != self.comp[y as usize] {
            return Err(Error::Usage(format!("{x} and {y} lie in different tree components")));
        }
        let (mut a, mut b) = (x, y);
        let mut left = vec![a];
        let mut right = vec![b];
        while self.depth[a as usize] > self.depth[b as usize] {
            a = self.parent[a as usize];
            left.push(a);
        }
        while self.depth[b as usize] > self.depth[a as usize] {
            b = self.parent[b as usize];
            right.push(b);
        }
        while a != b {
            a = self.parent[a as usize];
            b = self.parent[b as usize];
            left.push(a);
            right.push(b);
        }
        right.pop();
        left.extend(right.into_iter().rev());
        Ok(left)
    }

    /// Edge ids along the path from `x` to `y`.
    pub fn path_edges(&self, x: u32, y: u32) -> Result<Vec<u32>> {
        let sites = self.path_sites(x, y)?;
        Ok(sites
            .windows(2)
            .map(|w| {
                if self.parent[w[0] as usize] == w[1] {
                    self.parent_edge[w[0] as usize]
                } else {
                    self.parent_edge[w[1] as usize]
                }
            })
            .collect())
    }
}

/// Kruskal on `g` with strict keys; returns accepted edges in order.
pub fn kruskal<G: EdgeGraph>(g: &G, keys: &[u128]) -> Vec<u32> {
    let mut order: Vec<(u128, u32)> = keys.iter().enumerate().map(|(e, &k)| (k, e as u32)).collect();
    order.sort_unstable();
    debug_assert!(order.windows(2).all(|w| w[0].0 < w[1].0), "edge keys must be distinct");
    let mut uf = UnionFind::new(g.vertex_count());
    let target = g.vertex_count().saturating_sub(1);
    let mut out = Vec::with_capacity(target);
    for (_, e) in order {
        let [a, b] = g.endpoints(e);
        if uf.union(a, b) {
            out.push(e);
            if out.len() == target {
                break;
            }
        }
    }
    out
}

/// Minimal spanning tree (forest) of `g` under `keys`.
pub fn msf<G: EdgeGraph>(g: &G, keys: &[u128]) -> SpanningTree {
    let edges = kruskal(g, keys);
    let labels = edges.iter().map(|&e| key_label(keys[e as usize])).collect();
    let mut t = SpanningTree::from_edges(g, edges, labels);
    t.forest_warning = t.components > 1;
    t
}

/// Minimal spanning tree of the lattice under the lexicographic rule.
pub fn mst_kruskal(geometry: &Geometry, labels: &LabelField) -> SpanningTree {
    mst_kruskal_with(geometry, labels, EdgeOrder::Lexicographic)
}

pub fn mst_kruskal_with(geometry: &Geometry, labels: &LabelField, order: EdgeOrder) -> SpanningTree {
    msf(geometry, &edge_keys(geometry, labels, order))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    FullSpanning,
    /// Stop on reaching the boundary of a box domain.
    Boundary,
    Target(u32),
}

/// Invasion tree with the labels of its edges in invasion order.
#[derive(Debug, Clone)]
pub struct Invasion {
    pub tree: SpanningTree,
    pub trace: Vec<f64>,
    /// Sites in the order they were invaded, starting with the seed site.
    pub order: Vec<u32>,
}

/// Greedy growth from `start` on `g`, always adding the frontier edge with
/// the smallest key. `at_boundary` decides the boundary stop rule.
pub fn invade_graph<G: EdgeGraph>(
    g: &G,
    keys: &[u128],
    start: u32,
    stop: StopRule,
    at_boundary: impl Fn(u32) -> bool,
) -> Result<Invasion> {
    let n = g.vertex_count();
    if start as usize >= n {
        return Err(Error::Usage(format!("start {start} out of range 0..{n}")));
    }
    if let StopRule::Target(t) = stop {
        if t as usize >= n {
            return Err(Error::Usage(format!("target {t} out of range 0..{n}")));
        }
    }
    let done = |v: u32| match stop {
        StopRule::FullSpanning => false,
        StopRule::Boundary => at_boundary(v),
        StopRule::Target(t) => v == t,
    };
    let mut inside = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut edges = Vec::new();
    let mut trace = Vec::new();
    let mut order = vec![start];
    inside[start as usize] = true;
    let mut finished = done(start);
    g.for_each_incident(start, |_, e| heap.push(Reverse((keys[e as usize], e))));
    while !finished {
        let Some(Reverse((k, e))) = heap.pop() else { break };
        let [a, b] = g.endpoints(e);
        let v = match (inside[a as usize], inside[b as usize]) {
            (true, false) => b,
            (false, true) => a,
            _ => continue,
        };
        inside[v as usize] = true;
        edges.push(e);
        trace.push(key_label(k));
        order.push(v);
        finished = done(v);
        g.for_each_incident(v, |t, f| {
            if !inside[t as usize] {
                heap.push(Reverse((keys[f as usize], f)));
            }
        });
    }
    match stop {
        StopRule::Target(t) if !finished => {
            return Err(Error::Unreachable(format!("target {t} is not connected to {start}")))
        }
        StopRule::Boundary if !finished => {
            return Err(Error::Unreachable(format!("no boundary site is connected to {start}")))
        }
        _ => {}
    }
    let tree = SpanningTree::from_edges(g, edges, trace.clone());
    Ok(Invasion { tree, trace, order })
}

/// Invasion percolation on the lattice from `start` under the lexicographic rule.
pub fn invade(geometry: &Geometry, labels: &LabelField, start: u32, stop: StopRule) -> Result<Invasion> {
    invade_with(geometry, labels, start, stop, EdgeOrder::Lexicographic)
}

pub fn invade_with(
    geometry: &Geometry,
    labels: &LabelField,
    start: u32,
    stop: StopRule,
    order: EdgeOrder,
) -> Result<Invasion> {
    if stop == StopRule::Boundary && geometry.is_torus() {
        return Err(Error::Usage("the boundary stop rule needs a box domain".into()));
    }
    let keys = edge_keys(geometry, labels, order);
    invade_graph(geometry, &keys, start, stop, |v| geometry.is_boundary(v))
}

/// Metric used to compare points of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MetricTag {
    /// Flat metric on a torus of the given side, minimal image.
    TorusFlat(f64),
    Plane,
    /// Chordal distance after stereographic projection to the sphere.
    CompactifiedPlane,
}

impl MetricTag {
    pub fn for_geometry(geometry: &Geometry) -> Self {
        if geometry.is_torus() {
            MetricTag::TorusFlat(2.0 * geometry.half_side())
        } else {
            MetricTag::Plane
        }
    }

    #[inline]
    pub fn distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        match *self {
            MetricTag::TorusFlat(w) => {
                let mut dx = q[0] - p[0];
                let mut dy = q[1] - p[1];
                dx -= w * (dx / w).round();
                dy -= w * (dy / w).round();
                dx.hypot(dy)
            }
            MetricTag::Plane => (q[0] - p[0]).hypot(q[1] - p[1]),
            MetricTag::CompactifiedPlane => {
                let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                let np = 1.0 + p[0] * p[0] + p[1] * p[1];
                let nq = 1.0 + q[0] * q[0] + q[1] * q[1];
                2.0 * d / (np * nq).sqrt()
            }
        }
    }

    pub fn same_kind(&self, other: &Self) -> bool {
        match (self, other) {
            (MetricTag::TorusFlat(a), MetricTag::TorusFlat(b)) => a == b,
            (MetricTag::Plane, MetricTag::Plane) => true,
            (MetricTag::CompactifiedPlane, MetricTag::CompactifiedPlane) => true,
            _ => false,
        }
    }
}

/// Ordered points of a path. On the torus consecutive points are stored
/// unwrapped, so each segment is the short lattice step it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolylinePath {
    pub points: Vec<[f64; 2]>,
    pub metric: MetricTag,
}

impl PolylinePath {
    pub fn new(points: Vec<[f64; 2]>, metric: MetricTag) -> Self {
        Self { points, metric }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Unwrapped embedding of a lattice site sequence starting at the first site.
pub fn unwrap_sites(geometry: &Geometry, sites: &[u32]) -> Vec<[f64; 2]> {
    let eta = geometry.eta();
    let mut pts = Vec::with_capacity(sites.len());
    if let Some(&first) = sites.first() {
        let mut p = geometry.position(first);
        pts.push(p);
        for w in sites.windows(2) {
            let (dx, dy) = geometry.displacement(w[0], w[1]);
            p = [p[0] + dx as f64 * eta, p[1] + dy as f64 * eta];
            pts.push(p);
        }
    }
    pts
}

/// Tree path between two sites as a polyline in the embedding.
pub fn tree_path(geometry: &Geometry, tree: &SpanningTree, x: u32, y: u32) -> Result<PolylinePath> {
    let sites = tree.path_sites(x, y)?;
    Ok(PolylinePath::new(unwrap_sites(geometry, &sites), MetricTag::for_geometry(geometry)))
}

/// Null cluster id for sites outside every cluster.
pub const NO_CLUSTER: u32 = u32::MAX;

/// Open clusters at threshold `p`.
#[derive(Debug, Clone)]
pub struct ClusterLabeling {
    pub p: f64,
    pub cluster: Vec<u32>,
    pub sizes: Vec<u32>,
    /// L-infinity diameter in embedding units; `2M` for clusters wrapping the torus.
    pub diameters: Vec<f64>,
    /// Bounding box of the unwrapped cluster, in embedding units.
    pub bboxes: Vec<Rect>,
    pub wraps: Vec<bool>,
}

impl ClusterLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn of(&self, site: u32) -> Option<u32> {
        let c = self.cluster[site as usize];
        (c != NO_CLUSTER).then_some(c)
    }
}

/// Labels the clusters of `config` by breadth-first search, tracking
/// unwrapped coordinates to detect clusters that wrap around the torus.
pub fn clusters_at(geometry: &Geometry, config: &ConfigView) -> ClusterLabeling {
    clusters_masked(geometry, config, |_| true)
}

/// Cluster labelling restricted to sites accepted by `keep`.
pub fn clusters_masked(geometry: &Geometry, config: &ConfigView, keep: impl Fn(u32) -> bool) -> ClusterLabeling {
    let n = geometry.site_count();
    let eta = geometry.eta();
    let full = 2.0 * geometry.half_side();
    let mut cluster = vec![NO_CLUSTER; n];
    let mut ux = vec![0i64; n];
    let mut uy = vec![0i64; n];
    let mut sizes = Vec::new();
    let mut diameters = Vec::new();
    let mut bboxes = Vec::new();
    let mut wraps = Vec::new();
    let mut queue = Vec::new();
    for s in 0..n as u32 {
        if cluster[s as usize] != NO_CLUSTER || !config.site_open(s) || !keep(s) {
            continue;
        }
        let id = sizes.len() as u32;
        let (sx, sy) = geometry.coords(s);
        ux[s as usize] = i64::from(sx);
        uy[s as usize] = i64::from(sy);
        cluster[s as usize] = id;
        queue.clear();
        queue.push(s);
        let (mut x0, mut x1, mut y0, mut y1) = (ux[s as usize], ux[s as usize], uy[s as usize], uy[s as usize]);
        let mut wrapped = false;
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            let (vx, vy) = (ux[v as usize], uy[v as usize]);
            for (t, e) in geometry.incident(v) {
                if !config.site_open(t) || !keep(t) || !config.edge_open(e, v, t) {
                    continue;
                }
                let (dx, dy) = geometry.displacement(v, t);
                let (tx, ty) = (vx + dx, vy + dy);
                if cluster[t as usize] == NO_CLUSTER {
                    cluster[t as usize] = id;
                    ux[t as usize] = tx;
                    uy[t as usize] = ty;
                    x0 = x0.min(tx);
                    x1 = x1.max(tx);
                    y0 = y0.min(ty);
                    y1 = y1.max(ty);
                    queue.push(t);
                } else if ux[t as usize] != tx || uy[t as usize] != ty {
                    wrapped = true;
                }
            }
        }
        let extent = (x1 - x0).max(y1 - y0) as f64 * eta;
        sizes.push(queue.len() as u32);
        diameters.push(if wrapped { full } else { extent.min(full) });
        let m = geometry.half_side();
        bboxes.push(Rect {
            x0: x0 as f64 * eta - m,
            y0: y0 as f64 * eta - m,
            x1: x1 as f64 * eta - m,
            y1: y1 as f64 * eta - m,
        });
        wraps.push(wrapped);
    }
    ClusterLabeling { p: config.p, cluster, sizes, diameters, bboxes, wraps }
}

/// Whether every site on the tree path from `x` to `y` lies in the common
/// cluster of `x` and `y`, given a precomputed labelling.
pub fn path_in_cluster_with(tree: &SpanningTree, clusters: &ClusterLabeling, x: u32, y: u32) -> Result<bool> {
    let (cx, cy) = (clusters.of(x), clusters.of(y));
    match (cx, cy) {
        (Some(a), Some(b)) if a == b => {
            let path = tree.path_sites(x, y)?;
            Ok(path.iter().all(|&s| clusters.cluster[s as usize] == a))
        }
        _ => Err(Error::Usage(format!("{x} and {y} are not in a common open cluster"))),
    }
}

/// Whether the tree path from `x` to `y` stays inside their `p`-cluster.
pub fn path_in_cluster_check(
    geometry: &Geometry,
    tree: &SpanningTree,
    labels: &LabelField,
    p: f64,
    x: u32,
    y: u32,
) -> Result<bool> {
    let config = crate::ensemble::config_at(labels, p)?;
    geometry.check_site(x)?;
    geometry.check_site(y)?;
    let clusters = clusters_at(geometry, &config);
    path_in_cluster_with(tree, &clusters, x, y)
}
