//! Distances between paths and between trees immersed in the domain.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{unwrap_sites, MetricTag, PolylinePath, SpanningTree};
use crate::geometry::Geometry;
use crate::pivnet::{closest_router, edge_sites, CutoffForest, CutoffTree, EnhancedNetwork};

/// Discrete Fréchet distance between two polylines.
pub fn frechet(p1: &PolylinePath, p2: &PolylinePath) -> Result<f64> {
    if !p1.metric.same_kind(&p2.metric) {
        return Err(Error::Usage(format!("metric mismatch: {:?} vs {:?}", p1.metric, p2.metric)));
    }
    if p1.is_empty() || p2.is_empty() {
        return Err(Error::Usage("Fréchet distance of an empty path".into()));
    }
    Ok(frechet_points(&p1.points, &p2.points, p1.metric))
}

fn frechet_points(a: &[[f64; 2]], b: &[[f64; 2]], metric: MetricTag) -> f64 {
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            let d = metric.distance(pa, pb);
            let reach = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]),
            };
            cur[j] = d.max(reach);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]], metric: MetricTag) -> f64 {
    let directed = |x: &[[f64; 2]], y: &[[f64; 2]]| {
        x.iter()
            .map(|&p| y.iter().map(|&q| metric.distance(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    directed(a, b).max(directed(b, a))
}

/// Edge of a reference shape, labelled by the set of leaves it separates
/// from leaf 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEdge {
    pub split: u64,
    pub path: PolylinePath,
}

/// Tree indexed by a reference shape with one polyline per shape edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmersedTree {
    pub leaves: Vec<[f64; 2]>,
    /// Edges sorted by split.
    pub edges: Vec<ShapeEdge>,
    pub metric: MetricTag,
}

impl ImmersedTree {
    /// Tree collapsed to a single point.
    pub fn point(leaf_count: usize, p: [f64; 2], metric: MetricTag) -> Self {
        Self { leaves: vec![p; leaf_count], edges: Vec::new(), metric }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn shape(&self) -> Vec<u64> {
        self.edges.iter().map(|e| e.split).collect()
    }

    /// All points of the image.
    pub fn image(&self) -> Vec<[f64; 2]> {
        let mut pts = self.leaves.clone();
        for e in &self.edges {
            pts.extend_from_slice(&e.path.points);
        }
        pts
    }
}

/// Lower and upper bounds on the distance between two immersed trees of the
/// same shape: Hausdorff distance of the images and the largest Fréchet
/// distance between corresponding edges.
pub fn tree_dist(t1: &ImmersedTree, t2: &ImmersedTree) -> Result<(f64, f64)> {
    if t1.leaf_count() != t2.leaf_count() || t1.shape() != t2.shape() {
        return Err(Error::Usage("trees have different reference shapes".into()));
    }
    if !t1.metric.same_kind(&t2.metric) {
        return Err(Error::Usage("trees use different metrics".into()));
    }
    let metric = t1.metric;
    let mut upper = t1
        .leaves
        .iter()
        .zip(&t2.leaves)
        .map(|(&a, &b)| metric.distance(a, b))
        .fold(0.0, f64::max);
    for (a, b) in t1.edges.iter().zip(&t2.edges) {
        upper = upper.max(frechet_points(&a.path.points, &b.path.points, metric));
    }
    let lower = hausdorff(&t1.image(), &t2.image(), metric).min(upper);
    Ok((lower, upper))
}

/// Read access to a tree for extraction of immersed subtrees.
pub trait TreeView {
    fn metric(&self) -> MetricTag;
    /// Nearest tree vertex, or `None` for a degenerate tree.
    fn snap(&self, p: [f64; 2]) -> Option<u32>;
    fn position(&self, v: u32) -> [f64; 2];
    /// Vertex sequence of the tree path from `a` to `b`.
    fn vertex_path(&self, a: u32, b: u32) -> Result<Vec<u32>>;
    /// Polyline of the tree edge from `a` to the adjacent vertex `b`,
    /// starting at the position of `a` and unwrapped along the way.
    fn segment(&self, a: u32, b: u32) -> Result<Vec<[f64; 2]>>;
    /// Position of a degenerate tree.
    fn degenerate_point(&self) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Lattice spanning tree viewed as an immersed tree.
pub struct SpanningView<'a> {
    pub geometry: &'a Geometry,
    pub tree: &'a SpanningTree,
}

impl TreeView for SpanningView<'_> {
    fn metric(&self) -> MetricTag {
        MetricTag::for_geometry(self.geometry)
    }
    fn snap(&self, p: [f64; 2]) -> Option<u32> {
        Some(self.geometry.nearest_site(p))
    }
    fn position(&self, v: u32) -> [f64; 2] {
        self.geometry.position(v)
    }
    fn vertex_path(&self, a: u32, b: u32) -> Result<Vec<u32>> {
        self.tree.path_sites(a, b)
    }
    fn segment(&self, a: u32, b: u32) -> Result<Vec<[f64; 2]>> {
        Ok(unwrap_sites(self.geometry, &[a, b]))
    }
}

/// Giant cut-off tree viewed as an immersed tree on its routers.
pub struct CutoffView<'a> {
    pub geometry: &'a Geometry,
    pub network: &'a EnhancedNetwork,
    pub forest: &'a CutoffForest,
    pub tree: &'a CutoffTree,
    edge_of: HashMap<(u32, u32), u32>,
}

impl<'a> CutoffView<'a> {
    pub fn new(geometry: &'a Geometry, network: &'a EnhancedNetwork, forest: &'a CutoffForest, tree: &'a CutoffTree) -> Self {
        let mut edge_of = HashMap::new();
        for &e in &tree.edges {
            let ed = &forest.edges[e as usize];
            edge_of.insert((ed.a, ed.b), e);
            edge_of.insert((ed.b, ed.a), e);
        }
        Self { geometry, network, forest, tree, edge_of }
    }
}

impl TreeView for CutoffView<'_> {
    fn metric(&self) -> MetricTag {
        MetricTag::for_geometry(self.geometry)
    }
    fn snap(&self, p: [f64; 2]) -> Option<u32> {
        if self.tree.degenerate {
            return None;
        }
        closest_router(self.geometry, self.network, p, self.tree.routers.iter().copied())
    }
    fn position(&self, v: u32) -> [f64; 2] {
        self.network.router_positions[v as usize]
    }
    fn vertex_path(&self, a: u32, b: u32) -> Result<Vec<u32>> {
        self.forest.tree.path_sites(a, b)
    }
    fn segment(&self, a: u32, b: u32) -> Result<Vec<[f64; 2]>> {
        let e = *self
            .edge_of
            .get(&(a, b))
            .ok_or_else(|| Error::Usage(format!("routers {a} and {b} are not adjacent in the cut-off tree")))?;
        let edge = &self.forest.edges[e as usize];
        let mut sites = edge_sites(self.geometry, self.network, edge)?;
        if edge.a != a {
            sites.reverse();
        }
        Ok(unwrap_sites(self.geometry, &sites))
    }
    fn degenerate_point(&self) -> [f64; 2] {
        self.tree.point
    }
}

/// Immersed subtree spanned by the snapped leaves `pts`.
pub fn immersed_subtree(view: &impl TreeView, pts: &[[f64; 2]]) -> Result<ImmersedTree> {
    let metric = view.metric();
    if pts.is_empty() {
        return Err(Error::Usage("a tree needs at least one leaf".into()));
    }
    if pts.len() > 64 {
        return Err(Error::Usage("at most 64 leaves are supported".into()));
    }
    let snapped: Option<Vec<u32>> = pts.iter().map(|&p| view.snap(p)).collect();
    let Some(leaf_v) = snapped else {
        return Ok(ImmersedTree::point(pts.len(), view.degenerate_point(), metric));
    };
    // Steiner subtree as the union of the paths from the first leaf.
    let root = leaf_v[0];
    let mut parent: HashMap<u32, u32> = HashMap::new();
    parent.insert(root, root);
    for &v in &leaf_v[1..] {
        let path = view.vertex_path(root, v)?;
        for w in path.windows(2) {
            parent.entry(w[1]).or_insert(w[0]);
        }
    }
    let mut children: HashMap<u32, Vec<u32>> = HashMap::new();
    for (&v, &p) in &parent {
        if v != root {
            children.entry(p).or_default().push(v);
        }
    }
    for c in children.values_mut() {
        c.sort_unstable();
    }
    let mut leaf_mask: HashMap<u32, u64> = HashMap::new();
    for (i, &v) in leaf_v.iter().enumerate() {
        *leaf_mask.entry(v).or_default() |= 1 << i;
    }
    // Unwrapped positions along the tree, from the root.
    let mut pos: HashMap<u32, [f64; 2]> = HashMap::new();
    let mut seg: HashMap<u32, Vec<[f64; 2]>> = HashMap::new();
    pos.insert(root, view.position(root));
    let mut order = vec![root];
    let mut k = 0;
    while k < order.len() {
        let v = order[k];
        k += 1;
        let base = pos[&v];
        if let Some(cs) = children.get(&v) {
            for &c in cs {
                let raw = view.segment(v, c)?;
                let (ox, oy) = (base[0] - raw[0][0], base[1] - raw[0][1]);
                let pts: Vec<[f64; 2]> = raw.iter().map(|p| [p[0] + ox, p[1] + oy]).collect();
                pos.insert(c, *pts.last().expect("segments are non-empty"));
                seg.insert(c, pts);
                order.push(c);
            }
        }
    }
    // Leaf sets of subtrees, children before parents.
    let mut below: HashMap<u32, u64> = HashMap::new();
    for &v in order.iter().rev() {
        let mut m = leaf_mask.get(&v).copied().unwrap_or(0);
        if let Some(cs) = children.get(&v) {
            for c in cs {
                m |= below[c];
            }
        }
        below.insert(v, m);
    }
    let is_key = |v: u32| {
        v == root || leaf_mask.contains_key(&v) || children.get(&v).map_or(0, |c| c.len()) != 1
    };
    let mut edges = Vec::new();
    for &v in &order {
        if v == root || !is_key(v) {
            continue;
        }
        // walk up to the nearest key ancestor, collecting the chain
        let mut chain = vec![v];
        let mut u = parent[&v];
        while !is_key(u) {
            chain.push(u);
            u = parent[&u];
        }
        let mut points = vec![pos[&u]];
        for &c in chain.iter().rev() {
            points.extend_from_slice(&seg[&c][1..]);
        }
        points.dedup();
        edges.push(ShapeEdge { split: below[&v], path: PolylinePath::new(points, metric) });
    }
    edges.sort_by_key(|e| e.split);
    let leaves = leaf_v.iter().map(|v| pos[v]).collect();
    Ok(ImmersedTree { leaves, edges, metric })
}

/// Immersed trees extracted at a fixed list of leaf tuples, together with
/// every sub-tuple of at least two leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSample {
    pub ell_max: usize,
    pub tuples: Vec<Vec<[f64; 2]>>,
    /// Trees by leaf count, keyed by `(tuple index, leaf subset)`.
    pub trees: BTreeMap<usize, BTreeMap<(usize, u64), ImmersedTree>>,
    /// Snapped leaf positions of all tuples.
    pub leaf_points: Vec<[f64; 2]>,
}

pub fn extract_sample(view: &impl TreeView, leaf_tuples: &[Vec<[f64; 2]>], ell_max: usize) -> Result<ForestSample> {
    if ell_max < 2 {
        return Err(Error::Usage("ell_max must be at least 2".into()));
    }
    let mut trees: BTreeMap<usize, BTreeMap<(usize, u64), ImmersedTree>> = BTreeMap::new();
    let mut leaf_points = Vec::new();
    for (ti, tuple) in leaf_tuples.iter().enumerate() {
        if tuple.len() > ell_max || tuple.len() > 16 {
            return Err(Error::Usage(format!("tuple {ti} has {} leaves, above ell_max = {ell_max}", tuple.len())));
        }
        let full = immersed_subtree(view, tuple)?;
        leaf_points.extend_from_slice(&full.leaves);
        for mask in 1u64..(1 << tuple.len()) {
            if mask.count_ones() < 2 {
                continue;
            }
            let sub: Vec<[f64; 2]> = (0..tuple.len()).filter(|&i| mask >> i & 1 == 1).map(|i| tuple[i]).collect();
            let t = if mask == (1 << tuple.len()) - 1 { full.clone() } else { immersed_subtree(view, &sub)? };
            trees.entry(sub.len()).or_default().insert((ti, mask), t);
        }
    }
    Ok(ForestSample { ell_max, tuples: leaf_tuples.to_vec(), trees, leaf_points })
}

/// Truncated d_Ω between two samples taken at the same leaf tuples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaDistance {
    pub upper: f64,
    pub lower: f64,
    /// Matched pairs skipped because their reference shapes differ.
    pub shape_mismatches: usize,
}

pub fn d_omega_truncated(f1: &ForestSample, f2: &ForestSample) -> Result<OmegaDistance> {
    if f1.ell_max != f2.ell_max || f1.tuples != f2.tuples {
        return Err(Error::Usage("samples were not taken at the same leaf tuples".into()));
    }
    let metric = f1
        .trees
        .values()
        .chain(f2.trees.values())
        .flat_map(|m| m.values())
        .map(|t| t.metric)
        .next()
        .unwrap_or(MetricTag::Plane);
    let h1 = hausdorff(&f1.leaf_points, &f2.leaf_points, metric) / 2.0;
    let (mut upper, mut lower) = (h1, h1);
    let mut shape_mismatches = 0;
    for ell in 2..=f1.ell_max {
        let (Some(a), Some(b)) = (f1.trees.get(&ell), f2.trees.get(&ell)) else { continue };
        let (mut up, mut lo) = (0.0f64, 0.0f64);
        for (key, t1) in a {
            let t2 = b.get(key).ok_or_else(|| Error::Usage("samples hold different tuple sets".into()))?;
            match tree_dist(t1, t2) {
                Ok((l, u)) => {
                    up = up.max(u);
                    lo = lo.max(l);
                }
                Err(_) => shape_mismatches += 1,
            }
        }
        let w = 0.5f64.powi(ell as i32);
        upper += w * up;
        lower += w * lo;
    }
    Ok(OmegaDistance { upper, lower, shape_mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::sample_labels;
    use crate::forest::{mst_kruskal, tree_path};
    use crate::geometry::{DomainKind, LatticeKind, LatticeSpec};
    use proptest::prelude::*;

    fn plane(points: Vec<[f64; 2]>) -> PolylinePath {
        PolylinePath::new(points, MetricTag::Plane)
    }

    /// Minimax over all monotone couplings, enumerated recursively.
    fn brute_frechet(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        fn go(i: usize, j: usize, a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
            let d = MetricTag::Plane.distance(a[i], b[j]);
            if i + 1 == a.len() && j + 1 == b.len() {
                return d;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(go(i + 1, j, a, b));
            }
            if j + 1 < b.len() {
                best = best.min(go(i, j + 1, a, b));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(i + 1, j + 1, a, b));
            }
            d.max(best)
        }
        go(0, 0, a, b)
    }

    #[test]
    fn frechet_examples() {
        let seg = plane(vec![[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(frechet(&seg, &seg).unwrap(), 0.0);
        let shifted = plane(vec![[0.0, 0.3], [1.0, 0.3]]);
        assert!((frechet(&seg, &shifted).unwrap() - 0.3).abs() < 1e-15);
        let t = PolylinePath::new(vec![[0.0, 0.0]], MetricTag::TorusFlat(2.0));
        assert!(frechet(&seg, &t).is_err());
    }

    #[test]
    fn torus_metric_wraps() {
        let m = MetricTag::TorusFlat(2.0);
        assert!((m.distance([-0.95, 0.0], [0.95, 0.0]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn compactified_metric_is_comparable_on_the_unit_square() {
        let c = MetricTag::CompactifiedPlane;
        let grid: Vec<[f64; 2]> = (0..9).flat_map(|i| (0..9).map(move |j| [-1.0 + 0.25 * i as f64, -1.0 + 0.25 * j as f64])).collect();
        for &p in &grid {
            for &q in &grid {
                let e = MetricTag::Plane.distance(p, q);
                let d = c.distance(p, q);
                assert!(d >= 2.0 / 3.0 * e - 1e-12 && d <= 2.0 * e + 1e-12);
            }
        }
    }

    fn pts(v: &[f64]) -> Vec<[f64; 2]> {
        v.chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    proptest! {
        #[test]
        fn dp_equals_coupling_enumeration(a in prop::collection::vec(-1.0f64..1.0, 2..=16), b in prop::collection::vec(-1.0f64..1.0, 2..=16)) {
            let (a, b) = (pts(&a[..a.len() / 2 * 2]), pts(&b[..b.len() / 2 * 2]));
            let dp = frechet(&plane(a.clone()), &plane(b.clone())).unwrap();
            prop_assert_eq!(dp, brute_frechet(&a, &b));
        }

        #[test]
        fn frechet_is_a_pseudometric(a in prop::collection::vec(-1.0f64..1.0, 2..=12), b in prop::collection::vec(-1.0f64..1.0, 2..=12), c in prop::collection::vec(-1.0f64..1.0, 2..=12)) {
            let (a, b, c) = (plane(pts(&a[..a.len() / 2 * 2])), plane(pts(&b[..b.len() / 2 * 2])), plane(pts(&c[..c.len() / 2 * 2])));
            let ab = frechet(&a, &b).unwrap();
            prop_assert_eq!(ab, frechet(&b, &a).unwrap());
            prop_assert!(frechet(&a, &c).unwrap() <= ab + frechet(&b, &c).unwrap() + 1e-9);
        }
    }

    fn path_tree() -> (Geometry, SpanningTree) {
        let g = Geometry::new(LatticeSpec::new(LatticeKind::TriangularSite, 4, 1.0, DomainKind::Box)).unwrap();
        // a comb: the row y = 4 plus vertical teeth
        let mut edges = Vec::new();
        for x in 0..7 {
            edges.push(g.edge_between(g.site_at(x, 4).unwrap(), g.site_at(x + 1, 4).unwrap()).unwrap());
        }
        for x in 0..8 {
            for y in (0..4).chain(4..7) {
                edges.push(g.edge_between(g.site_at(x, y).unwrap(), g.site_at(x, y + 1).unwrap()).unwrap());
            }
        }
        let t = SpanningTree::from_edges(&g, edges.clone(), vec![0.0; edges.len()]);
        (g, t)
    }

    #[test]
    fn two_leaf_tree_is_the_tree_path() {
        let (g, t) = path_tree();
        let view = SpanningView { geometry: &g, tree: &t };
        let (x, y) = (g.site_at(1, 0).unwrap(), g.site_at(6, 7).unwrap());
        let it = immersed_subtree(&view, &[g.position(x), g.position(y)]).unwrap();
        assert_eq!(it.edges.len(), 1);
        assert_eq!(it.edges[0].path, tree_path(&g, &t, x, y).unwrap());
        let (lo, up) = tree_dist(&it, &it).unwrap();
        assert_eq!((lo, up), (0.0, 0.0));
    }

    #[test]
    fn collinear_leaves_keep_a_degree_two_leaf() {
        let (g, t) = path_tree();
        let view = SpanningView { geometry: &g, tree: &t };
        let p: Vec<[f64; 2]> = [0, 3, 6].iter().map(|&x| g.position(g.site_at(x, 4).unwrap())).collect();
        let it = immersed_subtree(&view, &p).unwrap();
        assert_eq!(it.edges.len(), 2);
        let star: Vec<[f64; 2]> = [(0, 4), (6, 4), (3, 0)].iter().map(|&(x, y)| g.position(g.site_at(x, y).unwrap())).collect();
        assert_eq!(immersed_subtree(&view, &star).unwrap().edges.len(), 3);
    }

    #[test]
    fn steiner_tree_is_the_union_of_pairwise_paths() {
        let g = Geometry::new(LatticeSpec::new(LatticeKind::TriangularSite, 8, 1.0, DomainKind::Torus)).unwrap();
        let t = mst_kruskal(&g, &sample_labels(&g, 8));
        let view = SpanningView { geometry: &g, tree: &t };
        let leaves = [3u32, 100, 200, 250];
        let p: Vec<[f64; 2]> = leaves.iter().map(|&s| g.position(s)).collect();
        let it = immersed_subtree(&view, &p).unwrap();
        let mut union = std::collections::BTreeSet::new();
        for &a in &leaves {
            for &b in &leaves {
                union.extend(t.path_sites(a, b).unwrap());
            }
        }
        let edge_points: usize = it.edges.iter().map(|e| e.path.len() - 1).sum();
        assert_eq!(edge_points + 1, union.len());
    }

    #[test]
    fn distances_between_samples() {
        let g = Geometry::new(LatticeSpec::new(LatticeKind::TriangularSite, 8, 1.0, DomainKind::Torus)).unwrap();
        let t1 = mst_kruskal(&g, &sample_labels(&g, 1));
        let t2 = mst_kruskal(&g, &sample_labels(&g, 2));
        let tuples = vec![vec![[0.1, 0.2], [-0.5, 0.6]], vec![[0.3, -0.4], [0.8, 0.8], [-0.7, -0.2]]];
        let s1 = extract_sample(&SpanningView { geometry: &g, tree: &t1 }, &tuples, 3).unwrap();
        let s2 = extract_sample(&SpanningView { geometry: &g, tree: &t2 }, &tuples, 3).unwrap();
        assert_eq!(d_omega_truncated(&s1, &s1).unwrap().upper, 0.0);
        let ab = d_omega_truncated(&s1, &s2).unwrap();
        let ba = d_omega_truncated(&s2, &s1).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.lower <= ab.upper);
        assert_eq!(s1.trees[&2].len(), 1 + 3);
        assert_eq!(s1.trees[&3].len(), 1);
        let other = extract_sample(&SpanningView { geometry: &g, tree: &t1 }, &tuples[..1], 3).unwrap();
        assert!(d_omega_truncated(&s1, &other).is_err());
    }

    #[test]
    fn single_two_leaf_contribution() {
        let (g, t) = path_tree();
        let view = SpanningView { geometry: &g, tree: &t };
        let tuples = vec![vec![g.position(g.site_at(0, 4).unwrap()), g.position(g.site_at(7, 4).unwrap())]];
        let a = extract_sample(&view, &tuples, 2).unwrap();
        let mut b = a.clone();
        let tree = b.trees.get_mut(&2).unwrap().values_mut().next().unwrap();
        for p in tree.edges[0].path.points.iter_mut() {
            p[1] += 0.1;
        }
        let d = d_omega_truncated(&a, &b).unwrap();
        assert!((d.upper - 0.25 * 0.1).abs() < 1e-12);
    }
}
