//! Pivotal sites, switch events, router networks and cut-off trees.
//!
//! A site is ε-important when four alternating arms join its six neighbours
//! to the boundary of the `3ε`-box concentric with the tile of `εZ²` that
//! contains it. Clusters of the configuration with the important sites
//! removed are represented by routers (their lowest, then leftmost site),
//! and the cut-off forest is the minimal spanning forest of the router
//! multigraph whose edges are labelled `λ` (open pivotals) or by switch
//! times (closed pivotals opening inside the window).

use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::cmp::Reverse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arms::Patch;
use crate::ensemble::{lambda_to_p, p_to_lambda, Calibration, ConfigView, LabelField, Window};
use crate::error::{Error, Result};
use crate::forest::{clusters_masked, unwrap_sites, MetricTag, PolylinePath, SmallGraph, SpanningTree, UnionFind, NO_CLUSTER};
use crate::geometry::{Geometry, LatticeKind, NONE, TRI_OFFSETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Colour {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportantSite {
    pub site: u32,
    pub epsilon: f64,
    pub colour: Colour,
    /// Index of the `εZ²` tile containing the site.
    pub tile: (i64, i64),
}

/// Lattice window `[x0, x1) x [y0, y1)` in unwrapped site coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SiteBox {
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
}

struct TileGrid {
    half: i64,
    e: f64,
}

impl TileGrid {
    fn new(geometry: &Geometry, epsilon: f64) -> Self {
        Self { half: i64::from(geometry.side()) / 2, e: epsilon / geometry.eta() }
    }

    fn tile(&self, x: u32, y: u32) -> (i64, i64) {
        let t = |c: u32| ((i64::from(c) - self.half) as f64 / self.e).floor() as i64;
        (t(x), t(y))
    }

    /// Sites whose positions lie in the `3ε`-box around tile `t`.
    fn outer_box(&self, t: (i64, i64), geometry: &Geometry) -> SiteBox {
        let lo = |i: i64| (self.half as f64 + (i - 1) as f64 * self.e).ceil() as i64;
        let hi = |i: i64| (self.half as f64 + (i + 2) as f64 * self.e).ceil() as i64;
        let mut b = SiteBox { x0: lo(t.0), x1: hi(t.0), y0: lo(t.1), y1: hi(t.1) };
        if !geometry.is_torus() {
            let l = i64::from(geometry.side());
            b = SiteBox { x0: b.x0.max(0), x1: b.x1.min(l), y0: b.y0.max(0), y1: b.y1.min(l) };
        }
        b
    }
}

fn site_of(geometry: &Geometry, x: i64, y: i64) -> Option<u32> {
    if geometry.is_torus() {
        let l = i64::from(geometry.side());
        geometry.site_at(x.rem_euclid(l), y.rem_euclid(l))
    } else {
        geometry.site_at(x, y)
    }
}

/// Fills `patch` (one cell of padding) with the labels of `b`; cells outside
/// the domain stay outside the region.
fn load_box(patch: &mut Patch, geometry: &Geometry, labels: &[f64], b: SiteBox) {
    let w = patch.w;
    patch.labels.iter_mut().for_each(|l| *l = 2.0);
    patch.region.iter_mut().for_each(|r| *r = false);
    patch.outer.iter_mut().for_each(|o| *o = false);
    patch.inner.clear();
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            if let Some(s) = site_of(geometry, x, y) {
                let i = (y - b.y0 + 1) as usize * w + (x - b.x0 + 1) as usize;
                patch.labels[i] = labels[s as usize];
                patch.region[i] = true;
            }
        }
    }
    for y in 1..patch.h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            if patch.region[i] {
                patch.outer[i] = TRI_OFFSETS.iter().any(|&(dx, dy)| {
                    !patch.region[((y as i64 + dy) as usize) * w + (x as i64 + dx) as usize]
                });
            }
        }
    }
}

/// Alternating four-arm test from the neighbours of patch cell `c` to the
/// outer boundary of the loaded region.
fn four_arms_at(patch: &mut Patch, c: usize, q: f64) -> bool {
    let w = patch.w as isize;
    patch.region[c] = false;
    patch.inner.clear();
    for &(dx, dy) in &TRI_OFFSETS {
        let i = (c as isize + dy as isize * w + dx as isize) as usize;
        if patch.region[i] {
            patch.inner.push(i as u32);
        }
    }
    let hit = patch.alternating(4, q);
    patch.region[c] = true;
    hit
}

/// Necessary condition: the six neighbours change colour at least four
/// times around the site.
fn colour_changes(geometry: &Geometry, labels: &[f64], q: f64, site: u32) -> usize {
    let nb = geometry.slots(site);
    if nb.contains(&NONE) {
        return 0;
    }
    (0..6).filter(|&i| (labels[nb[i] as usize] <= q) != (labels[nb[(i + 1) % 6] as usize] <= q)).count()
}

/// Returns whether four alternating arms reach L-infinity distance `r` from
/// `site`, for every `r` in the dyadic cascade below `limit`.
fn passes_cascade(geometry: &Geometry, labels: &[f64], q: f64, site: u32, limit: i64, balls: &mut [Patch]) -> bool {
    let (sx, sy) = geometry.coords(site);
    let (sx, sy) = (i64::from(sx), i64::from(sy));
    for (k, patch) in balls.iter_mut().enumerate() {
        let r = 2i64 << k;
        if r > limit {
            break;
        }
        let b = SiteBox { x0: sx - r, x1: sx + r + 1, y0: sy - r, y1: sy + r + 1 };
        load_box(patch, geometry, labels, b);
        let c = (r + 1) as usize * patch.w + (r + 1) as usize;
        if !four_arms_at(patch, c, q) {
            return false;
        }
    }
    true
}

/// All ε-important sites of `config`, sorted by site id.
pub fn find_important(geometry: &Geometry, config: &ConfigView, epsilon: f64) -> Result<Vec<ImportantSite>> {
    if geometry.kind() != LatticeKind::TriangularSite {
        return Err(Error::Usage("important sites are defined for the triangular lattice".into()));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) || 3.0 * epsilon > 2.0 * geometry.half_side() + 1e-12 {
        return Err(Error::Usage(format!("scale {epsilon} needs 0 < 3ε <= {}", 2.0 * geometry.half_side())));
    }
    let labels = config.labels.values();
    let q = config.p;
    let grid = TileGrid::new(geometry, epsilon);
    let max_ball = {
        let mut k = 0;
        while (2i64 << (k + 1)) as f64 <= grid.e {
            k += 1;
        }
        k + 1
    };
    let mut candidates: Vec<((i64, i64), u32)> = (0..geometry.site_count() as u32)
        .into_par_iter()
        .map_init(
            || (0..max_ball).map(|k| Patch::new(2 * (2 << k) + 3, 2 * (2 << k) + 3)).collect::<Vec<_>>(),
            |balls, s| {
                if colour_changes(geometry, labels, q, s) < 4 {
                    return None;
                }
                let (x, y) = geometry.coords(s);
                let t = grid.tile(x, y);
                let b = grid.outer_box(t, geometry);
                let (x, y) = (i64::from(x), i64::from(y));
                let (x, y) = if geometry.is_torus() {
                    let l = i64::from(geometry.side());
                    (x + l * ((b.x0 - x + l - 1).div_euclid(l)).max(0), y + l * ((b.y0 - y + l - 1).div_euclid(l)).max(0))
                } else {
                    (x, y)
                };
                let limit = (x - b.x0).min(b.x1 - 1 - x).min(y - b.y0).min(b.y1 - 1 - y);
                passes_cascade(geometry, labels, q, s, limit, balls).then_some((t, s))
            },
        )
        .flatten()
        .collect();
    candidates.sort_unstable();
    let mut groups: Vec<&[((i64, i64), u32)]> = Vec::new();
    let mut start = 0;
    for i in 1..=candidates.len() {
        if i == candidates.len() || candidates[i].0 != candidates[start].0 {
            groups.push(&candidates[start..i]);
            start = i;
        }
    }
    let mut out: Vec<ImportantSite> = groups
        .par_iter()
        .flat_map_iter(|group| {
            let t = group[0].0;
            let b = grid.outer_box(t, geometry);
            let (w, h) = ((b.x1 - b.x0 + 2) as usize, (b.y1 - b.y0 + 2) as usize);
            let mut patch = Patch::new(w, h);
            load_box(&mut patch, geometry, labels, b);
            let l = i64::from(geometry.side());
            let mut found = Vec::new();
            for &(_, s) in group.iter() {
                let (x, y) = geometry.coords(s);
                let (mut x, mut y) = (i64::from(x), i64::from(y));
                if geometry.is_torus() {
                    while x < b.x0 {
                        x += l;
                    }
                    while y < b.y0 {
                        y += l;
                    }
                }
                let c = (y - b.y0 + 1) as usize * w + (x - b.x0 + 1) as usize;
                if four_arms_at(&mut patch, c, q) {
                    let colour = if labels[s as usize] <= q { Colour::Open } else { Colour::Closed };
                    found.push(ImportantSite { site: s, epsilon, colour, tile: t });
                }
            }
            found
        })
        .collect();
    out.sort_unstable_by_key(|i| i.site);
    Ok(out)
}

/// A closed important site opening inside the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub site: u32,
    /// Time `λ''` at which the site opens.
    pub t: f64,
    pub label: f64,
    /// Position in the time-ordered event list.
    pub index: u32,
}

/// Closed important sites whose labels lie in `(p(λ), p(λ')]`, in time order.
pub fn switches(labels: &LabelField, important: &[ImportantSite], window: Window, cal: &Calibration) -> Vec<SwitchEvent> {
    let p_lo = lambda_to_p(window.lambda_lo, cal);
    let p_hi = lambda_to_p(window.lambda_hi, cal);
    let mut ev: Vec<SwitchEvent> = important
        .iter()
        .filter(|i| i.colour == Colour::Closed)
        .filter_map(|i| {
            let label = labels.get(i.site);
            (label > p_lo && label <= p_hi).then(|| SwitchEvent {
                site: i.site,
                t: p_to_lambda(label, cal).expect("window labels lie strictly inside (0, 1)"),
                label,
                index: 0,
            })
        })
        .collect();
    ev.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.site.cmp(&b.site)));
    for (k, e) in ev.iter_mut().enumerate() {
        e.index = k as u32;
    }
    ev
}

/// Bipartite pivotal/router structure of a configuration.
#[derive(Debug, Clone)]
pub struct EnhancedNetwork {
    pub pivotals: Vec<u32>,
    pub colours: Vec<Colour>,
    /// Router sites in increasing order.
    pub routers: Vec<u32>,
    pub router_positions: Vec<[f64; 2]>,
    /// `(pivotal index, router index)` pairs, sorted.
    pub edges: Vec<(u32, u32)>,
    /// Group of each pivotal: adjacent open pivotals share a group, closed
    /// pivotals are alone.
    pub groups: Vec<u32>,
    pub group_members: Vec<Vec<u32>>,
    cluster: Vec<u32>,
    cluster_router: Vec<u32>,
    pivotal_index: HashMap<u32, u32>,
    pivotal_routers: Vec<Vec<u32>>,
}

impl EnhancedNetwork {
    pub fn pivotal_index(&self, site: u32) -> Option<u32> {
        self.pivotal_index.get(&site).copied()
    }

    /// Cluster id of `site` in the configuration with the pivotals removed.
    pub fn cluster_of(&self, site: u32) -> Option<u32> {
        let c = self.cluster[site as usize];
        (c != NO_CLUSTER).then_some(c)
    }

    /// Router index of the cluster containing `site`.
    pub fn router_of(&self, site: u32) -> Option<u32> {
        self.cluster_of(site).map(|c| self.cluster_router[c as usize]).filter(|&r| r != NONE)
    }

    /// Routers adjacent to pivotal `i`.
    pub fn routers_of(&self, i: u32) -> &[u32] {
        &self.pivotal_routers[i as usize]
    }

    /// Routers joined when pivotal `i` is open: those of its own group, plus
    /// those of open groups next to it when `i` is closed.
    pub fn joined_routers(&self, geometry: &Geometry, i: u32) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        let g = self.groups[i as usize];
        for &m in &self.group_members[g as usize] {
            out.extend_from_slice(self.routers_of(m));
        }
        if self.colours[i as usize] == Colour::Closed {
            for &t in geometry.slots(self.pivotals[i as usize]) {
                if let Some(j) = (t != NONE).then(|| self.pivotal_index(t)).flatten() {
                    if self.colours[j as usize] == Colour::Open {
                        for &m in &self.group_members[self.groups[j as usize] as usize] {
                            out.extend_from_slice(self.routers_of(m));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Sites through which the connection made by pivotal `i` passes.
    fn via_sites(&self, geometry: &Geometry, i: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.group_members[self.groups[i as usize] as usize].iter().map(|&m| self.pivotals[m as usize]).collect();
        if self.colours[i as usize] == Colour::Closed {
            for &t in geometry.slots(self.pivotals[i as usize]) {
                if let Some(j) = (t != NONE).then(|| self.pivotal_index(t)).flatten() {
                    if self.colours[j as usize] == Colour::Open {
                        out.extend(self.group_members[self.groups[j as usize] as usize].iter().map(|&m| self.pivotals[m as usize]));
                    }
                }
            }
        }
        out
    }
}

/// Builds the router network of `config` for the pivotal set `important`.
pub fn build_network(geometry: &Geometry, config: &ConfigView, important: &[ImportantSite]) -> Result<EnhancedNetwork> {
    if geometry.kind() != LatticeKind::TriangularSite {
        return Err(Error::Usage("router networks are built on the triangular lattice".into()));
    }
    let n = geometry.site_count();
    let mut in_x = vec![false; n];
    let mut pivotal_index = HashMap::new();
    let mut pivotals = Vec::with_capacity(important.len());
    let mut colours = Vec::with_capacity(important.len());
    let mut sorted: Vec<&ImportantSite> = important.iter().collect();
    sorted.sort_by_key(|i| i.site);
    for imp in sorted {
        geometry.check_site(imp.site)?;
        if in_x[imp.site as usize] {
            continue;
        }
        in_x[imp.site as usize] = true;
        pivotal_index.insert(imp.site, pivotals.len() as u32);
        pivotals.push(imp.site);
        colours.push(if config.site_open(imp.site) { Colour::Open } else { Colour::Closed });
    }
    let lab = clusters_masked(geometry, config, |s| !in_x[s as usize]);
    let mut first = vec![NONE; lab.count()];
    for s in 0..n as u32 {
        if let Some(c) = lab.of(s) {
            if first[c as usize] == NONE {
                first[c as usize] = s;
            }
        }
    }
    let mut touched: Vec<Vec<u32>> = Vec::with_capacity(pivotals.len());
    let mut used = vec![false; lab.count()];
    for &x in &pivotals {
        let mut cs: Vec<u32> = geometry.slots(x).iter().filter(|&&t| t != NONE).filter_map(|&t| lab.of(t)).collect();
        cs.sort_unstable();
        cs.dedup();
        for &c in &cs {
            used[c as usize] = true;
        }
        touched.push(cs);
    }
    let mut cluster_router = vec![NONE; lab.count()];
    let mut order: Vec<u32> = (0..lab.count() as u32).filter(|&c| used[c as usize]).collect();
    order.sort_unstable_by_key(|&c| first[c as usize]);
    let mut routers = Vec::with_capacity(order.len());
    for (k, &c) in order.iter().enumerate() {
        cluster_router[c as usize] = k as u32;
        routers.push(first[c as usize]);
    }
    let mut edges = Vec::new();
    let mut pivotal_routers = Vec::with_capacity(pivotals.len());
    for (i, cs) in touched.iter().enumerate() {
        let mut rs: Vec<u32> = cs.iter().map(|&c| cluster_router[c as usize]).collect();
        rs.sort_unstable();
        for &r in &rs {
            edges.push((i as u32, r));
        }
        pivotal_routers.push(rs);
    }
    let mut uf = UnionFind::new(pivotals.len());
    for (i, &x) in pivotals.iter().enumerate() {
        if colours[i] != Colour::Open {
            continue;
        }
        for &t in geometry.slots(x) {
            if let Some(&j) = (t != NONE).then(|| pivotal_index.get(&t)).flatten() {
                if colours[j as usize] == Colour::Open {
                    uf.union(i as u32, j);
                }
            }
        }
    }
    let mut group_of_root = HashMap::new();
    let mut groups = Vec::with_capacity(pivotals.len());
    let mut group_members: Vec<Vec<u32>> = Vec::new();
    for i in 0..pivotals.len() as u32 {
        let root = uf.find(i);
        let g = *group_of_root.entry(root).or_insert_with(|| {
            group_members.push(Vec::new());
            group_members.len() as u32 - 1
        });
        group_members[g as usize].push(i);
        groups.push(g);
    }
    let router_positions = routers.iter().map(|&s| geometry.position(s)).collect();
    Ok(EnhancedNetwork {
        pivotals,
        colours,
        routers,
        router_positions,
        edges,
        groups,
        group_members,
        cluster: lab.cluster,
        cluster_router,
        pivotal_index,
        pivotal_routers,
    })
}

/// How a cut-off edge connects its routers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Via {
    /// Through an open pivotal group, labelled `λ`.
    Open { pivotal: u32 },
    /// Through a closed pivotal that opens at the switch time.
    Switch { event: u32, pivotal: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffEdge {
    pub a: u32,
    pub b: u32,
    pub label: f64,
    pub via: Via,
}

/// Minimal spanning forest of the labelled router multigraph.
#[derive(Debug, Clone)]
pub struct CutoffForest {
    pub lambda: f64,
    pub router_count: usize,
    /// Every candidate edge in acceptance order, loops excluded.
    pub multigraph: Vec<CutoffEdge>,
    /// Accepted edges in acceptance order.
    pub edges: Vec<CutoffEdge>,
    pub tree: SpanningTree,
}

impl CutoffForest {
    pub fn component_count(&self) -> usize {
        self.tree.components
    }
}

/// Builds the cut-off forest from the network and the switch events of a
/// window starting at `lambda`.
pub fn cutoff_forest(network: &EnhancedNetwork, geometry: &Geometry, events: &[SwitchEvent], lambda: f64) -> Result<CutoffForest> {
    let nr = network.routers.len();
    let mut cand: Vec<CutoffEdge> = Vec::new();
    let mut group_keys: Vec<(u32, u32)> = network
        .group_members
        .iter()
        .enumerate()
        .filter(|(_, m)| network.colours[m[0] as usize] == Colour::Open)
        .map(|(g, m)| (network.pivotals[m[0] as usize], g as u32))
        .collect();
    group_keys.sort_unstable();
    for &(_, g) in &group_keys {
        let head = network.group_members[g as usize][0];
        let rs = network.joined_routers(geometry, head);
        for (i, &a) in rs.iter().enumerate() {
            for &b in &rs[i + 1..] {
                cand.push(CutoffEdge { a, b, label: lambda, via: Via::Open { pivotal: head } });
            }
        }
    }
    for (k, ev) in events.iter().enumerate() {
        if k > 0 && events[k - 1].t.total_cmp(&ev.t).then(events[k - 1].site.cmp(&ev.site)).is_gt() {
            return Err(Error::Integrity("switch events are not sorted by time".into()));
        }
        let Some(i) = network.pivotal_index(ev.site) else {
            return Err(Error::Integrity(format!("switch site {} is not a pivotal of the network", ev.site)));
        };
        if network.colours[i as usize] != Colour::Closed {
            return Err(Error::Integrity(format!("switch site {} is open at lambda", ev.site)));
        }
        if !(ev.t > lambda) {
            return Err(Error::Integrity(format!("switch time {} is not after lambda = {lambda}", ev.t)));
        }
        let rs = network.joined_routers(geometry, i);
        if let Some((&a, rest)) = rs.split_first() {
            for &b in rest {
                cand.push(CutoffEdge { a, b, label: ev.t, via: Via::Switch { event: k as u32, pivotal: i } });
            }
        }
    }
    let mut uf = UnionFind::new(nr);
    let mut edges = Vec::new();
    for e in &cand {
        if uf.union(e.a, e.b) {
            edges.push(e.clone());
        }
    }
    let g = SmallGraph::new(nr, edges.iter().map(|e| [e.a, e.b]).collect());
    let tree = SpanningTree::from_edges(&g, (0..edges.len() as u32).collect(), edges.iter().map(|e| e.label).collect());
    Ok(CutoffForest { lambda, router_count: nr, multigraph: cand, edges, tree })
}

/// Giant component of a cut-off forest, or a degenerate single point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffTree {
    pub degenerate: bool,
    /// Domain centre for degenerate trees.
    pub point: [f64; 2],
    pub component: Option<u32>,
    /// Router indices of the component.
    pub routers: Vec<u32>,
    /// Indices into `CutoffForest::edges`.
    pub edges: Vec<u32>,
}

impl CutoffTree {
    pub fn degenerate_at(point: [f64; 2]) -> Self {
        Self { degenerate: true, point, component: None, routers: Vec::new(), edges: Vec::new() }
    }
}

/// Sites representing the image of each forest component: its routers and
/// the pivotals its edges pass through.
fn component_points(forest: &CutoffForest, network: &EnhancedNetwork) -> Vec<Vec<u32>> {
    let mut pts = vec![Vec::new(); forest.component_count()];
    for (r, &s) in network.routers.iter().enumerate() {
        pts[forest.tree.component(r as u32) as usize].push(s);
    }
    for e in &forest.edges {
        let i = match e.via {
            Via::Open { pivotal } | Via::Switch { pivotal, .. } => pivotal,
        };
        pts[forest.tree.component(e.a) as usize].push(network.pivotals[i as usize]);
    }
    pts
}

/// L-infinity extent of a set of sites, unwrapped around its first site.
fn extent(geometry: &Geometry, sites: &[u32]) -> f64 {
    let Some(&s0) = sites.first() else { return 0.0 };
    let (mut x0, mut x1, mut y0, mut y1) = (0i64, 0i64, 0i64, 0i64);
    for &s in sites {
        let (dx, dy) = geometry.displacement(s0, s);
        x0 = x0.min(dx);
        x1 = x1.max(dx);
        y0 = y0.min(dy);
        y1 = y1.max(dy);
    }
    ((x1 - x0).max(y1 - y0) as f64 * geometry.eta()).min(2.0 * geometry.half_side())
}

/// Largest L-infinity lattice distance from any site to `sources`.
fn cover_radius(geometry: &Geometry, sources: &[u32]) -> u32 {
    let l = i64::from(geometry.side());
    let mut dist = vec![u32::MAX; geometry.site_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s as usize] == u32::MAX {
            dist[s as usize] = 0;
            queue.push_back(s);
        }
    }
    let mut far = 0;
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize];
        far = far.max(d);
        let (x, y) = geometry.coords(v);
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                let t = if geometry.is_torus() {
                    geometry.site_at(nx.rem_euclid(l), ny.rem_euclid(l))
                } else {
                    geometry.site_at(nx, ny)
                };
                if let Some(t) = t {
                    if dist[t as usize] == u32::MAX {
                        dist[t as usize] = d + 1;
                        queue.push_back(t);
                    }
                }
            }
        }
    }
    if dist.contains(&u32::MAX) {
        return u32::MAX;
    }
    far
}

/// The component that comes within `s` of every point while every other
/// component has diameter at most `s`; degenerate when none is unique.
pub fn giant(forest: &CutoffForest, network: &EnhancedNetwork, geometry: &Geometry, s: f64) -> Result<CutoffTree> {
    if !(s > 0.0) {
        return Err(Error::Usage(format!("scale s = {s} must be positive")));
    }
    let centre = [0.0, 0.0];
    let pts = component_points(forest, network);
    let Some(big) = (0..pts.len()).max_by_key(|&c| (pts[c].len(), std::cmp::Reverse(c))) else {
        return Ok(CutoffTree::degenerate_at(centre));
    };
    let reach = cover_radius(geometry, &pts[big]);
    if reach == u32::MAX || reach as f64 * geometry.eta() > s + 1e-12 {
        return Ok(CutoffTree::degenerate_at(centre));
    }
    if (0..pts.len()).any(|c| c != big && extent(geometry, &pts[c]) > s + 1e-12) {
        return Ok(CutoffTree::degenerate_at(centre));
    }
    let routers: Vec<u32> = (0..forest.router_count as u32).filter(|&r| forest.tree.component(r) == big as u32).collect();
    let edges: Vec<u32> = (0..forest.edges.len() as u32)
        .filter(|&e| forest.tree.component(forest.edges[e as usize].a) == big as u32)
        .collect();
    Ok(CutoffTree { degenerate: false, point: centre, component: Some(big as u32), routers, edges })
}

/// Lattice path realising cut-off edge `e`, from router `a` to router `b`,
/// inside the two clusters and the pivotal sites the edge passes through.
pub fn edge_sites(geometry: &Geometry, network: &EnhancedNetwork, edge: &CutoffEdge) -> Result<Vec<u32>> {
    let (ra, rb) = (network.routers[edge.a as usize], network.routers[edge.b as usize]);
    let (ca, cb) = (network.cluster[ra as usize], network.cluster[rb as usize]);
    let i = match edge.via {
        Via::Open { pivotal } | Via::Switch { pivotal, .. } => pivotal,
    };
    let via: HashSet<u32> = network.via_sites(geometry, i).into_iter().collect();
    let allowed = |s: u32| {
        let c = network.cluster[s as usize];
        (c != NO_CLUSTER && (c == ca || c == cb)) || via.contains(&s)
    };
    let mut prev: HashMap<u32, u32> = HashMap::new();
    prev.insert(ra, ra);
    let mut queue = VecDeque::from([ra]);
    while let Some(v) = queue.pop_front() {
        if v == rb {
            break;
        }
        for &t in geometry.slots(v) {
            if t != NONE && allowed(t) && !prev.contains_key(&t) {
                prev.insert(t, v);
                queue.push_back(t);
            }
        }
    }
    if !prev.contains_key(&rb) {
        return Err(Error::Integrity(format!("no lattice path realises the edge between routers {ra} and {rb}")));
    }
    let mut path = vec![rb];
    let mut v = rb;
    while v != ra {
        v = prev[&v];
        path.push(v);
    }
    path.reverse();
    Ok(path)
}

/// Lattice path between routers `a` and `b` of a cut-off tree together with
/// the forest edges it uses.
pub fn cutoff_path(geometry: &Geometry, network: &EnhancedNetwork, forest: &CutoffForest, a: u32, b: u32) -> Result<(Vec<u32>, Vec<u32>)> {
    let verts = forest.tree.path_sites(a, b)?;
    let eids = forest.tree.path_edges(a, b)?;
    let mut sites = vec![network.routers[a as usize]];
    for (k, &e) in eids.iter().enumerate() {
        let edge = &forest.edges[e as usize];
        let mut seg = edge_sites(geometry, network, edge)?;
        if edge.a != verts[k] {
            seg.reverse();
        }
        sites.extend_from_slice(&seg[1..]);
    }
    Ok((sites, eids))
}

/// Polyline of the cut-off tree path between routers `a` and `b`.
pub fn cutoff_polyline(geometry: &Geometry, network: &EnhancedNetwork, forest: &CutoffForest, a: u32, b: u32) -> Result<PolylinePath> {
    let (sites, _) = cutoff_path(geometry, network, forest, a, b)?;
    Ok(PolylinePath::new(unwrap_sites(geometry, &sites), MetricTag::for_geometry(geometry)))
}

/// Sites of the closed pivotals whose switch edges lie on the path between
/// routers `a` and `b`.
pub fn switch_sites_on_path(network: &EnhancedNetwork, forest: &CutoffForest, a: u32, b: u32) -> Result<Vec<u32>> {
    let mut out: Vec<u32> = forest
        .tree
        .path_edges(a, b)?
        .into_iter()
        .filter_map(|e| match forest.edges[e as usize].via {
            Via::Switch { pivotal, .. } => Some(network.pivotals[pivotal as usize]),
            Via::Open { .. } => None,
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Router closest to `p`, ties broken by the lowest then leftmost site.
pub fn closest_router(geometry: &Geometry, network: &EnhancedNetwork, p: [f64; 2], among: impl Iterator<Item = u32>) -> Option<u32> {
    among.min_by(|&a, &b| {
        let da = geometry.point_distance(network.router_positions[a as usize], p);
        let db = geometry.point_distance(network.router_positions[b as usize], p);
        da.total_cmp(&db).then(network.routers[a as usize].cmp(&network.routers[b as usize]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InvasionTarget {
    /// Routers within `s` of the boundary of `[-M, M]²`.
    BoundaryBand,
    /// The router closest to the point.
    Site([f64; 2]),
    /// Routers within `s` of the point.
    Band([f64; 2]),
}

/// Result of invasion on the router multigraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffInvasion {
    pub tree: CutoffTree,
    pub origin: Option<u32>,
    /// Indices into `CutoffForest::multigraph`, in invasion order.
    pub invaded: Vec<u32>,
    pub trace: Vec<f64>,
    /// Number of invaded edges when stopping right after the edge that first
    /// reached a target, even inside a simultaneous batch.
    pub first_target_len: Option<usize>,
    pub reached: bool,
}

#[inline]
fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Invasion from the router closest to `origin` until a target router is
/// reached. Frontier edges labelled exactly `λ` are invaded together and the
/// run stops after completing the batch in which a target is met.
pub fn cutoff_invasion(
    geometry: &Geometry,
    network: &EnhancedNetwork,
    forest: &CutoffForest,
    giant: &CutoffTree,
    origin: [f64; 2],
    target: InvasionTarget,
    s: f64,
) -> Result<CutoffInvasion> {
    if !(s > 0.0) {
        return Err(Error::Usage(format!("scale s = {s} must be positive")));
    }
    let degenerate = CutoffInvasion {
        tree: CutoffTree::degenerate_at(giant.point),
        origin: None,
        invaded: Vec::new(),
        trace: Vec::new(),
        first_target_len: None,
        reached: false,
    };
    if giant.degenerate || network.routers.is_empty() {
        return Ok(degenerate);
    }
    let nr = network.routers.len() as u32;
    let Some(o) = closest_router(geometry, network, origin, 0..nr) else { return Ok(degenerate) };
    let m = geometry.half_side();
    let pos = &network.router_positions;
    let is_target: Vec<bool> = match target {
        InvasionTarget::BoundaryBand => pos.iter().map(|p| m - p[0].abs().max(p[1].abs()) <= s).collect(),
        InvasionTarget::Band(x) => pos.iter().map(|p| geometry.point_distance(*p, x) <= s).collect(),
        InvasionTarget::Site(x) => {
            let t = closest_router(geometry, network, x, 0..nr);
            (0..nr).map(|r| Some(r) == t).collect()
        }
    };
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); nr as usize];
    for (k, e) in forest.multigraph.iter().enumerate() {
        adj[e.a as usize].push(k as u32);
        adj[e.b as usize].push(k as u32);
    }
    let mut inside = vec![false; nr as usize];
    let mut heap = BinaryHeap::new();
    let push_all = |v: u32, heap: &mut BinaryHeap<Reverse<(u64, u32)>>, inside: &[bool]| {
        for &k in &adj[v as usize] {
            let e = &forest.multigraph[k as usize];
            let other = if e.a == v { e.b } else { e.a };
            if !inside[other as usize] {
                heap.push(Reverse((ordered(e.label), k)));
            }
        }
    };
    inside[o as usize] = true;
    let mut routers = vec![o];
    let mut invaded = Vec::new();
    let mut trace = Vec::new();
    let mut first_target_len = is_target[o as usize].then_some(0);
    let mut reached = is_target[o as usize];
    push_all(o, &mut heap, &inside);
    let lam = ordered(forest.lambda);
    while !reached {
        let Some(&Reverse((top, _))) = heap.peek() else { break };
        let mut batch = Vec::new();
        if top == lam {
            while let Some(&Reverse((k, e))) = heap.peek() {
                if k != lam {
                    break;
                }
                heap.pop();
                batch.push(e);
            }
        } else if let Some(Reverse((_, e))) = heap.pop() {
            batch.push(e);
        }
        let mut added = Vec::new();
        for e in batch {
            let edge = &forest.multigraph[e as usize];
            let v = match (inside[edge.a as usize], inside[edge.b as usize]) {
                (true, false) => edge.b,
                (false, true) => edge.a,
                _ => continue,
            };
            inside[v as usize] = true;
            invaded.push(e);
            trace.push(edge.label);
            routers.push(v);
            added.push(v);
            if is_target[v as usize] && first_target_len.is_none() {
                first_target_len = Some(invaded.len());
            }
        }
        reached = first_target_len.is_some();
        for v in added {
            push_all(v, &mut heap, &inside);
        }
    }
    routers.sort_unstable();
    let tree = CutoffTree {
        degenerate: false,
        point: pos[o as usize],
        component: Some(forest.tree.component(o)),
        routers,
        edges: Vec::new(),
    };
    Ok(CutoffInvasion { tree, origin: Some(o), invaded, trace, first_target_len, reached })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{config_at, sample_labels};
    use crate::geometry::{DomainKind, LatticeSpec};

    fn torus(n: u32, m: f64) -> Geometry {
        Geometry::new(LatticeSpec::new(LatticeKind::TriangularSite, n, m, DomainKind::Torus)).unwrap()
    }

    fn field(g: &Geometry, f: impl Fn(i64, i64) -> f64) -> LabelField {
        let l = i64::from(g.side());
        let v: Vec<f64> = (0..g.site_count() as u32)
            .map(|s| {
                let (x, y) = g.coords(s);
                f(i64::from(x) - l / 2, i64::from(y) - l / 2)
            })
            .collect();
        let mut distinct = v.clone();
        for (i, x) in distinct.iter_mut().enumerate() {
            *x += i as f64 * 1e-9;
        }
        LabelField::from_values(*g.spec(), 0, distinct).unwrap()
    }

    /// Brute-force alternating four-arm test on a small patch: four arms
    /// of alternating colour starting at distinct neighbours of the centre,
    /// found by exhaustive search for pairwise disjoint simple paths.
    fn brute_four_arms(w: usize, open: &[bool], centre: usize) -> bool {
        let nb = |v: usize| -> Vec<usize> {
            let (x, y) = ((v % w) as i64, (v / w) as i64);
            TRI_OFFSETS
                .iter()
                .filter_map(|&(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    (nx >= 0 && ny >= 0 && nx < w as i64 && ny < w as i64).then(|| (ny as usize) * w + nx as usize)
                })
                .collect()
        };
        let outer = |v: usize| {
            let (x, y) = (v % w, v / w);
            x == 0 || y == 0 || x == w - 1 || y == w - 1
        };
        let starts: Vec<usize> = {
            let (cx, cy) = ((centre % w) as i64, (centre / w) as i64);
            TRI_OFFSETS.iter().map(|&(dx, dy)| ((cy + dy) as usize) * w + (cx + dx) as usize).collect()
        };
        fn search(
            v: usize,
            colour: bool,
            used: &mut Vec<bool>,
            open: &[bool],
            nb: &dyn Fn(usize) -> Vec<usize>,
            outer: &dyn Fn(usize) -> bool,
            rest: &mut dyn FnMut(&mut Vec<bool>) -> bool,
        ) -> bool {
            if outer(v) {
                return rest(used);
            }
            for t in nb(v) {
                if !used[t] && open[t] == colour {
                    used[t] = true;
                    if search(t, colour, used, open, nb, outer, rest) {
                        used[t] = false;
                        return true;
                    }
                    used[t] = false;
                }
            }
            false
        }
        fn arms(
            k: usize,
            chosen: &[usize],
            used: &mut Vec<bool>,
            open: &[bool],
            nb: &dyn Fn(usize) -> Vec<usize>,
            outer: &dyn Fn(usize) -> bool,
        ) -> bool {
            if k == chosen.len() {
                return true;
            }
            let s = chosen[k];
            if used[s] {
                return false;
            }
            used[s] = true;
            let colour = open[s];
            let ok = search(s, colour, used, open, nb, outer, &mut |u: &mut Vec<bool>| arms(k + 1, chosen, u, open, nb, outer));
            used[s] = false;
            ok
        }
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    for d in c + 1..6 {
                        let chosen = [starts[a], starts[b], starts[c], starts[d]];
                        let cols: Vec<bool> = chosen.iter().map(|&s| open[s]).collect();
                        if cols[0] == cols[1] || cols[1] == cols[2] || cols[2] == cols[3] || cols[3] == cols[0] {
                            continue;
                        }
                        let mut used = vec![false; w * w];
                        used[centre] = true;
                        if arms(0, &chosen, &mut used, open, &nb, &outer) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    #[test]
    fn detector_agrees_with_path_enumeration_on_small_patches() {
        use rand_chacha::rand_core::{RngCore, SeedableRng};
        let w = 7;
        let centre = 3 * w + 3;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut patch = Patch::new(w + 2, w + 2);
        let mut agree_true = 0;
        for _ in 0..3000 {
            let open: Vec<bool> = (0..w * w).map(|_| rng.next_u32() & 1 == 1).collect();
            for y in 0..w {
                for x in 0..w {
                    let i = (y + 1) * (w + 2) + x + 1;
                    patch.labels[i] = if open[y * w + x] { 0.25 } else { 0.75 };
                    patch.region[i] = true;
                    patch.outer[i] = x == 0 || y == 0 || x == w - 1 || y == w - 1;
                }
            }
            let c = 4 * (w + 2) + 4;
            let fast = four_arms_at(&mut patch, c, 0.5);
            let slow = brute_four_arms(w, &open, centre);
            assert_eq!(fast, slow);
            agree_true += usize::from(fast);
        }
        assert!(agree_true > 50);
    }

    #[test]
    fn uniform_configuration_has_no_pivotals() {
        let g = torus(16, 1.0);
        let f = field(&g, |_, _| 0.1);
        assert!(find_important(&g, &config_at(&f, 0.5).unwrap(), 0.25).unwrap().is_empty());
    }

    #[test]
    fn quadrant_centre_is_important() {
        let g = torus(16, 1.0);
        let f = field(&g, |x, y| if (x > 0 && y >= 0) || (x <= 0 && y < 0) { 0.2 } else { 0.8 });
        let imp = find_important(&g, &config_at(&f, 0.5).unwrap(), 0.25).unwrap();
        let centre = g.site_at(16, 16).unwrap();
        assert!(imp.iter().any(|i| i.site == centre));
        assert!(find_important(&g, &config_at(&f, 0.5).unwrap(), 1.0).is_err());
    }

    fn brute_important(g: &Geometry, f: &LabelField, q: f64, eps: f64) -> Vec<u32> {
        let grid = TileGrid::new(g, eps);
        let mut out = Vec::new();
        for s in 0..g.site_count() as u32 {
            let (x, y) = g.coords(s);
            let t = grid.tile(x, y);
            let b = grid.outer_box(t, g);
            let (w, h) = ((b.x1 - b.x0 + 2) as usize, (b.y1 - b.y0 + 2) as usize);
            let mut p = Patch::new(w, h);
            load_box(&mut p, g, f.values(), b);
            let l = i64::from(g.side());
            let (mut x, mut y) = (i64::from(x), i64::from(y));
            while x < b.x0 {
                x += l;
            }
            while y < b.y0 {
                y += l;
            }
            if four_arms_at(&mut p, (y - b.y0 + 1) as usize * w + (x - b.x0 + 1) as usize, q) {
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn prefilter_does_not_change_the_answer() {
        let g = torus(32, 1.0);
        for seed in 0..3 {
            let f = sample_labels(&g, seed);
            for eps in [0.25, 0.3] {
                let fast: Vec<u32> = find_important(&g, &config_at(&f, 0.5).unwrap(), eps).unwrap().iter().map(|i| i.site).collect();
                assert_eq!(fast, brute_important(&g, &f, 0.5, eps));
            }
        }
    }

    #[test]
    fn switch_events_follow_the_window() {
        let g = torus(32, 1.0);
        let f = sample_labels(&g, 4);
        let cal = Calibration::fixed(0.05).unwrap();
        let w = Window::new(-2.0, 2.0).unwrap();
        let c = config_at(&f, lambda_to_p(w.lambda_lo, &cal)).unwrap();
        let imp = find_important(&g, &c, 0.25).unwrap();
        let ev = switches(&f, &imp, w, &cal);
        let (lo, hi) = (lambda_to_p(-2.0, &cal), lambda_to_p(2.0, &cal));
        let brute = imp.iter().filter(|i| !c.site_open(i.site) && f.get(i.site) > lo && f.get(i.site) <= hi).count();
        assert_eq!(ev.len(), brute);
        assert!(ev.windows(2).all(|p| p[0].t <= p[1].t));
        for e in &ev {
            assert!(e.t > -2.0 && e.t <= 2.0 + 1e-12);
            assert!((lambda_to_p(e.t, &cal) - e.label).abs() < 1e-12);
        }
    }

    #[test]
    fn single_closed_pivotal_joins_two_clusters() {
        let g = torus(8, 1.0);
        // open vertical strips at x = -2 and x = 2 with a closed site between
        // them at the origin bridged by open horizontal stubs
        let f = field(&g, |x, y| {
            if x == -2 || x == 2 || (y == 0 && (x == -1 || x == 1)) {
                0.2
            } else {
                0.8
            }
        });
        let c = config_at(&f, 0.5).unwrap();
        let origin = g.site_at(8, 8).unwrap();
        let imp = vec![ImportantSite { site: origin, epsilon: 0.25, colour: Colour::Closed, tile: (0, 0) }];
        let net = build_network(&g, &c, &imp).unwrap();
        assert_eq!(net.routers.len(), 2);
        assert_eq!(net.edges.len(), 2);
        let empty = build_network(&g, &c, &[]).unwrap();
        assert!(empty.routers.is_empty() && empty.edges.is_empty());
    }

    #[test]
    fn incidence_matches_recomputation() {
        let g = torus(16, 1.0);
        for seed in 0..4 {
            let f = sample_labels(&g, seed);
            let c = config_at(&f, 0.5).unwrap();
            let imp = find_important(&g, &c, 0.25).unwrap();
            let net = build_network(&g, &c, &imp).unwrap();
            let xs: HashSet<u32> = imp.iter().map(|i| i.site).collect();
            let mut brute = Vec::new();
            for (i, imp) in imp.iter().enumerate() {
                let mut rs = Vec::new();
                for t in g.neighbors(imp.site).unwrap() {
                    if xs.contains(&t) || !c.site_open(t) {
                        continue;
                    }
                    let mut seen = HashSet::from([t]);
                    let mut stack = vec![t];
                    while let Some(v) = stack.pop() {
                        for u in g.neighbors(v).unwrap() {
                            if !xs.contains(&u) && c.site_open(u) && seen.insert(u) {
                                stack.push(u);
                            }
                        }
                    }
                    rs.push(*seen.iter().min().unwrap());
                }
                rs.sort_unstable();
                rs.dedup();
                for r in rs {
                    brute.push((i as u32, r));
                }
            }
            let got: Vec<(u32, u32)> = net.edges.iter().map(|&(i, r)| (i, net.routers[r as usize])).collect();
            assert_eq!(got, brute);
        }
    }

    fn line_network(g: &Geometry) -> (LabelField, EnhancedNetwork, Vec<ImportantSite>) {
        // three open blobs on the row y = 0 separated by closed sites at x = -2, 2
        let f = field(g, |x, y| if y == 0 && x.abs() <= 5 && x.abs() != 2 { 0.2 } else { 0.8 });
        let c = config_at(&f, 0.5).unwrap();
        let imp: Vec<ImportantSite> = [-2i64, 2]
            .iter()
            .map(|&x| ImportantSite { site: g.site_at(8 + x, 8).unwrap(), epsilon: 0.25, colour: Colour::Closed, tile: (0, 0) })
            .collect();
        let net = build_network(g, &c, &imp).unwrap();
        (f, net, imp)
    }

    #[test]
    fn cycle_rule_keeps_the_earlier_switch() {
        let g = torus(8, 1.0);
        // two open columns joined by two separate closed sites
        let f = field(&g, |x, y| if x.abs() == 1 && y.abs() <= 3 { 0.2 } else { 0.8 });
        let c = config_at(&f, 0.5).unwrap();
        let imp: Vec<ImportantSite> = [0i64, 2]
            .iter()
            .map(|&y| ImportantSite { site: g.site_at(8, 8 + y).unwrap(), epsilon: 0.25, colour: Colour::Closed, tile: (0, 0) })
            .collect();
        let net = build_network(&g, &c, &imp).unwrap();
        assert_eq!(net.routers.len(), 2);
        let ev = vec![
            SwitchEvent { site: imp[0].site, t: 1.0, label: 0.6, index: 0 },
            SwitchEvent { site: imp[1].site, t: 4.0, label: 0.7, index: 1 },
        ];
        let forest = cutoff_forest(&net, &g, &ev, -1.0).unwrap();
        assert_eq!(forest.multigraph.len(), 2);
        assert_eq!(forest.edges.len(), 1);
        assert_eq!(forest.edges[0].label, 1.0);
        let none = cutoff_forest(&net, &g, &[], -1.0).unwrap();
        assert!(none.edges.is_empty());
        let bogus = vec![SwitchEvent { site: 0, t: 1.0, label: 0.6, index: 0 }];
        assert!(matches!(cutoff_forest(&net, &g, &bogus, -1.0), Err(Error::Integrity(_))));
    }

    #[test]
    fn cutoff_paths_are_lattice_paths() {
        let g = torus(8, 1.0);
        let (_, net, imp) = line_network(&g);
        assert_eq!(net.routers.len(), 3);
        let ev = vec![
            SwitchEvent { site: imp[0].site, t: 1.0, label: 0.6, index: 0 },
            SwitchEvent { site: imp[1].site, t: 4.0, label: 0.7, index: 1 },
        ];
        let forest = cutoff_forest(&net, &g, &ev, -1.0).unwrap();
        assert_eq!(forest.edges.len(), 2);
        let path = cutoff_path(&g, &net, &forest, 0, 2).unwrap().0;
        assert_eq!((path[0], *path.last().unwrap()), (net.routers[0], net.routers[2]));
        for w in path.windows(2) {
            assert!(g.edge_between(w[0], w[1]).is_some());
        }
        assert_eq!(switch_sites_on_path(&net, &forest, 0, 2).unwrap(), vec![imp[0].site, imp[1].site]);
    }

    /// Minimum spanning forest by exhaustive enumeration, returned as the
    /// sorted label sequence.
    fn brute_forest_labels(n: usize, edges: &[CutoffEdge]) -> Vec<f64> {
        let mut best: Option<Vec<f64>> = None;
        let full = {
            let mut uf = UnionFind::new(n);
            edges.iter().filter(|e| uf.union(e.a, e.b)).count()
        };
        for mask in 0u32..(1 << edges.len()) {
            if mask.count_ones() as usize != full {
                continue;
            }
            let mut uf = UnionFind::new(n);
            let mut ok = true;
            let mut labels = Vec::new();
            for (k, e) in edges.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    ok &= uf.union(e.a, e.b);
                    labels.push(e.label);
                }
            }
            if ok {
                labels.sort_by(f64::total_cmp);
                if best.as_ref().is_none_or(|b| labels < *b) {
                    best = Some(labels);
                }
            }
        }
        best.unwrap_or_default()
    }

    #[test]
    fn forest_matches_exhaustive_minimum() {
        let g = torus(4, 1.0);
        let cal = Calibration::fixed(0.2).unwrap();
        let w = Window::new(-1.5, 1.5).unwrap();
        let mut checked = 0;
        for seed in 0..400 {
            let f = sample_labels(&g, seed);
            let c = config_at(&f, lambda_to_p(w.lambda_lo, &cal)).unwrap();
            let imp = find_important(&g, &c, 0.5).unwrap();
            let net = build_network(&g, &c, &imp).unwrap();
            let ev = switches(&f, &imp, w, &cal);
            let forest = cutoff_forest(&net, &g, &ev, w.lambda_lo).unwrap();
            if forest.multigraph.len() > 18 || forest.multigraph.is_empty() {
                continue;
            }
            let mut got: Vec<f64> = forest.edges.iter().map(|e| e.label).collect();
            got.sort_by(f64::total_cmp);
            assert_eq!(got, brute_forest_labels(net.routers.len(), &forest.multigraph));
            checked += 1;
        }
        assert!(checked >= 30, "only {checked} small instances");
    }

    #[test]
    fn giant_selection() {
        let g = torus(8, 1.0);
        let (_, net, imp) = line_network(&g);
        let ev = vec![
            SwitchEvent { site: imp[0].site, t: 1.0, label: 0.6, index: 0 },
            SwitchEvent { site: imp[1].site, t: 4.0, label: 0.7, index: 1 },
        ];
        let forest = cutoff_forest(&net, &g, &ev, -1.0).unwrap();
        // a horizontal segment cannot come close to the top of the torus
        assert!(giant(&forest, &net, &g, 0.25).unwrap().degenerate);
        let tree = giant(&forest, &net, &g, 1.0).unwrap();
        assert!(!tree.degenerate);
        assert_eq!(tree.routers.len(), 3);
        let empty = cutoff_forest(&build_network(&g, &config_at(&sample_labels(&g, 0), 0.5).unwrap(), &[]).unwrap(), &g, &[], 0.0).unwrap();
        let net0 = build_network(&g, &config_at(&sample_labels(&g, 0), 0.5).unwrap(), &[]).unwrap();
        assert!(giant(&empty, &net0, &g, 0.5).unwrap().degenerate);
    }

    #[test]
    fn invasion_rules() {
        let g = torus(8, 1.0);
        let (_, net, imp) = line_network(&g);
        let ev = vec![SwitchEvent { site: imp[0].site, t: 1.0, label: 0.6, index: 0 }];
        let forest = cutoff_forest(&net, &g, &ev, -1.0).unwrap();
        let tree = giant(&forest, &net, &g, 2.0).unwrap();
        let left = net.router_positions[0];
        let own = cutoff_invasion(&g, &net, &forest, &tree, left, InvasionTarget::Site(left), 0.1).unwrap();
        assert!(own.invaded.is_empty() && own.reached);
        let far = [0.9, 0.9];
        let none = cutoff_invasion(&g, &net, &forest, &tree, left, InvasionTarget::Band(far), 0.01).unwrap();
        assert!(!none.reached);
        let deg = cutoff_invasion(&g, &net, &forest, &CutoffTree::degenerate_at([0.0, 0.0]), left, InvasionTarget::BoundaryBand, 0.1).unwrap();
        assert!(deg.tree.degenerate);
    }

    #[test]
    fn simultaneous_lambda_batch() {
        let g = torus(8, 1.0);
        // an open pivotal at the origin touching three clusters
        let f = field(&g, |x, y| {
            let arm = (y == 0 && (1..=3).contains(&x)) || (x == -y && (1..=3).contains(&y)) || (x == 0 && (-3..=-1).contains(&y));
            if arm || (x == 0 && y == 0) {
                0.2
            } else {
                0.8
            }
        });
        let c = config_at(&f, 0.5).unwrap();
        let imp = vec![ImportantSite { site: g.site_at(8, 8).unwrap(), epsilon: 0.25, colour: Colour::Open, tile: (0, 0) }];
        let net = build_network(&g, &c, &imp).unwrap();
        assert_eq!(net.routers.len(), 3);
        let forest = cutoff_forest(&net, &g, &[], 0.0).unwrap();
        assert_eq!(forest.multigraph.len(), 3);
        assert_eq!(forest.edges.len(), 2);
        let tree = giant(&forest, &net, &g, 2.0).unwrap();
        let o = net.router_positions[0];
        let inv = cutoff_invasion(&g, &net, &forest, &tree, o, InvasionTarget::Site(net.router_positions[1]), 0.1).unwrap();
        assert!(inv.reached);
        assert_eq!(inv.invaded.len(), 2);
        assert_eq!(inv.first_target_len, Some(1));
        assert_eq!(inv.trace, vec![0.0, 0.0]);
    }
}
