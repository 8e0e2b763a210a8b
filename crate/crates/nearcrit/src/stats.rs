//! Estimators and statistics over sampled trees and clusters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::arms::{Annulus, Palette};
use crate::ensemble::{config_at, labels_for_range, lambda_to_p, replica_seed, Calibration, ConfigView, LabelField, Window, P_C};
use crate::error::{Error, Result};
use crate::forest::{clusters_at, tree_path, SpanningTree, UnionFind};
use crate::geometry::{Geometry, NONE};
use crate::pivnet::{build_network, closest_router, cutoff_forest, cutoff_polyline, find_important, giant, switch_sites_on_path, switches};
use crate::treespace::{d_omega_truncated, extract_sample, frechet, CutoffView, OmegaDistance, SpanningView};

/// Two-sided 95% Clopper-Pearson interval for `hits` successes in `n` trials.
pub fn clopper_pearson(hits: u64, n: u64) -> (f64, f64) {
    clopper_pearson_level(hits, n, 0.05)
}

/// Clopper-Pearson interval with total tail mass `alpha`.
pub fn clopper_pearson_level(hits: u64, n: u64, alpha: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, nf) = (hits as f64, n as f64);
    let lo = if hits == 0 { 0.0 } else { Beta::new(k, nf - k + 1.0).map(|b| b.inverse_cdf(alpha / 2.0)).unwrap_or(0.0) };
    let hi = if hits >= n { 1.0 } else { Beta::new(k + 1.0, nf - k).map(|b| b.inverse_cdf(1.0 - alpha / 2.0)).unwrap_or(1.0) };
    (lo, hi)
}

/// Least-squares line through `(x, y)` with the standard error of the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub points: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<Fit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return Err(Error::Fit(format!("need at least two points, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite coordinate".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-300 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(Fit { slope, intercept, stderr, points: n })
}

/// Arm event between concentric box boundaries centred in the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub palette: String,
    /// Inner and outer L-infinity radii in embedding units; an inner radius
    /// of 0 starts the arms at the neighbours of the centre site.
    pub radii: Vec<(f64, f64)>,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPoint {
    pub r: f64,
    pub big_r: f64,
    pub hits: u64,
    pub samples: u64,
    pub frequency: f64,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub palette: String,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub points: Vec<ArmPoint>,
}

/// Intermediate thresholds used for near-critical mixed palettes.
pub fn window_grid(p_lo: f64, p_hi: f64, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n).map(|i| p_lo + (p_hi - p_lo) * i as f64 / (n - 1).max(1) as f64).collect();
    if p_lo < P_C && P_C < p_hi {
        g.push(P_C);
    }
    g.sort_by(|a, b| (a - P_C).abs().total_cmp(&(b - P_C).abs()));
    g.dedup();
    g
}

const WINDOW_GRID: usize = 9;

struct ArmPlan {
    palette: Palette,
    pairs: Vec<(usize, usize)>,
    radius: usize,
    p_lo: f64,
    p_hi: f64,
    grid: Vec<f64>,
}

fn plan(spec: &ArmSpec, geometry: &Geometry, cal: &Calibration) -> Result<ArmPlan> {
    let palette = Palette::parse(&spec.palette)?;
    if spec.lambda_lo > spec.lambda_hi {
        return Err(Error::Usage("window needs lambda <= lambda'".into()));
    }
    let eta = geometry.eta();
    let mut pairs = Vec::with_capacity(spec.radii.len());
    for &(r, big_r) in &spec.radii {
        if !(r >= 0.0 && big_r >= r && big_r <= geometry.half_side() + 1e-12) {
            return Err(Error::Usage(format!("radii ({r}, {big_r}) must satisfy 0 <= r <= R <= M")));
        }
        pairs.push(((r / eta).round() as usize, (big_r / eta).round() as usize));
    }
    let radius = pairs.iter().map(|p| p.1).max().unwrap_or(1).max(1);
    let p_lo = lambda_to_p(spec.lambda_lo, cal);
    let p_hi = lambda_to_p(spec.lambda_hi, cal);
    if !(p_lo > 0.0 && p_hi < 1.0) {
        return Err(Error::Usage("window does not map into (0, 1)".into()));
    }
    Ok(ArmPlan { palette, pairs, radius, p_lo, p_hi, grid: window_grid(p_lo, p_hi, WINDOW_GRID) })
}

impl ArmPlan {
    /// Event indicator for each radius pair on the loaded window.
    fn events(&self, ann: &mut Annulus, near_critical: bool, out: &mut [u64]) {
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            if a >= b {
                out[k] += 1;
                continue;
            }
            ann.set_radii(a, b);
            let hit = if near_critical {
                ann.event_window(self.palette, self.p_lo, self.p_hi, &self.grid)
            } else {
                ann.event_static(self.palette, self.p_lo)
            };
            out[k] += u64::from(hit);
        }
    }
}

fn points(spec: &ArmSpec, hits: &[u64]) -> Vec<ArmPoint> {
    spec.radii
        .iter()
        .zip(hits)
        .map(|(&(r, big_r), &h)| ArmPoint {
            r,
            big_r,
            hits: h,
            samples: spec.samples,
            frequency: if spec.samples == 0 { 0.0 } else { h as f64 / spec.samples as f64 },
            interval: clopper_pearson(h, spec.samples),
        })
        .collect()
}

/// Monte Carlo frequency of the arm event for each radius pair. Replica `i`
/// draws fresh labels from the seed derived from `(seed, i)`.
pub fn arm_probability(spec: &ArmSpec, geometry: &Geometry, cal: &Calibration, seed: u64) -> Result<ArmEstimate> {
    let plan = plan(spec, geometry, cal)?;
    let near = spec.lambda_lo < spec.lambda_hi;
    let template = Annulus::new(geometry, 0, plan.radius)?;
    let k = plan.pairs.len();
    let hits = (0..spec.samples)
        .into_par_iter()
        .fold(
            || (template.clone(), vec![0u64; k]),
            |(mut ann, mut acc), i| {
                ann.load(replica_seed(seed, i));
                plan.events(&mut ann, near, &mut acc);
                (ann, acc)
            },
        )
        .map(|(_, acc)| acc)
        .reduce(|| vec![0u64; k], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    Ok(ArmEstimate { palette: spec.palette.clone(), lambda_lo: spec.lambda_lo, lambda_hi: spec.lambda_hi, points: points(spec, &hits) })
}

/// Exponent `β` in `P ~ (R/r)^{-β}` fitted over outer radii of at least
/// `4η`, measuring radii from the centre site when `r = 0`.
pub fn arm_exponent(est: &ArmEstimate, eta: f64) -> Result<Fit> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &est.points {
        if p.big_r < 4.0 * eta - 1e-12 || p.hits == 0 || p.big_r <= p.r {
            continue;
        }
        let inner = if p.r > 0.0 { p.r } else { eta };
        xs.push((p.big_r / inner).ln());
        ys.push(-p.frequency.ln());
    }
    linear_fit(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub r: f64,
    pub big_r: f64,
    pub near_hits: u64,
    pub critical_hits: u64,
    pub samples: u64,
    /// `None` when the critical event was never observed.
    pub ratio: Option<f64>,
    pub interval: Option<(f64, f64)>,
}

/// Near-critical over critical frequency at each radius pair, both measured
/// on the same labels.
pub fn stability_ratio(spec: &ArmSpec, geometry: &Geometry, cal: &Calibration, seed: u64) -> Result<Vec<RatioPoint>> {
    let plan = plan(spec, geometry, cal)?;
    let near = spec.lambda_lo < spec.lambda_hi;
    let critical = ArmPlan { p_lo: P_C, p_hi: P_C, grid: vec![P_C], palette: plan.palette, pairs: plan.pairs.clone(), radius: plan.radius };
    let template = Annulus::new(geometry, 0, plan.radius)?;
    let k = plan.pairs.len();
    let (nc, c) = (0..spec.samples)
        .into_par_iter()
        .fold(
            || (template.clone(), vec![0u64; k], vec![0u64; k]),
            |(mut ann, mut a, mut b), i| {
                ann.load(replica_seed(seed, i));
                plan.events(&mut ann, near, &mut a);
                critical.events(&mut ann, false, &mut b);
                (ann, a, b)
            },
        )
        .map(|(_, a, b)| (a, b))
        .reduce(
            || (vec![0u64; k], vec![0u64; k]),
            |x, y| {
                (x.0.iter().zip(&y.0).map(|(p, q)| p + q).collect(), x.1.iter().zip(&y.1).map(|(p, q)| p + q).collect())
            },
        );
    Ok(spec
        .radii
        .iter()
        .enumerate()
        .map(|(i, &(r, big_r))| {
            let (h_nc, h_c) = (nc[i], c[i]);
            let (ratio, interval) = if !near {
                (Some(1.0), Some((1.0, 1.0)))
            } else if h_c == 0 {
                (None, None)
            } else {
                let (lo_n, hi_n) = clopper_pearson(h_nc, spec.samples);
                let (lo_c, hi_c) = clopper_pearson(h_c, spec.samples);
                let hi = if lo_c > 0.0 { hi_n / lo_c } else { f64::INFINITY };
                (Some(h_nc as f64 / h_c as f64), Some((lo_n / hi_c, hi)))
            };
            RatioPoint { r, big_r, near_hits: h_nc, critical_hits: h_c, samples: spec.samples, ratio, interval }
        })
        .collect())
}

/// Clusters of diameter at least `rho` against the volume bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub rho: f64,
    pub zeta: f64,
    pub threshold: f64,
    /// `(sites or r-squares, diameter, ratio)` per qualifying cluster.
    pub clusters: Vec<(u64, f64, f64)>,
    pub min_ratio: Option<f64>,
    pub pass_fraction: Option<f64>,
}

/// Exponent `91/48` of the volume law.
pub const VOLUME_EXPONENT: f64 = 91.0 / 48.0;

pub fn cluster_volume_law(geometry: &Geometry, config: &ConfigView, rho: f64, zeta: f64, r: Option<f64>) -> Result<VolumeReport> {
    if !(zeta > 0.0 && zeta < VOLUME_EXPONENT) {
        return Err(Error::Usage(format!("zeta = {zeta} must lie in (0, 91/48)")));
    }
    if !(rho > 0.0 && rho <= 2.0 * geometry.half_side()) {
        return Err(Error::Usage(format!("rho = {rho} must lie in (0, 2M]")));
    }
    let eta = geometry.eta();
    let unit = match r {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(Error::Usage(format!("r = {r} must be positive"))),
        None => eta,
    };
    let threshold = (rho / unit).powf(VOLUME_EXPONENT - zeta);
    let lab = clusters_at(geometry, config);
    let qualifying: Vec<usize> = (0..lab.count()).filter(|&c| lab.diameters[c] >= rho - 1e-12).collect();
    let mut volume = vec![0u64; lab.count()];
    match r {
        None => {
            for &c in &qualifying {
                volume[c] = u64::from(lab.sizes[c]);
            }
        }
        Some(r) => {
            let m = geometry.half_side();
            let mut seen = std::collections::HashSet::new();
            for s in 0..geometry.site_count() as u32 {
                if let Some(c) = lab.of(s) {
                    if lab.diameters[c as usize] >= rho - 1e-12 {
                        let p = geometry.position(s);
                        let cell = (((p[0] + m) / r).floor() as i64, ((p[1] + m) / r).floor() as i64);
                        if seen.insert((c, cell)) {
                            volume[c as usize] += 1;
                        }
                    }
                }
            }
        }
    }
    let clusters: Vec<(u64, f64, f64)> = qualifying.iter().map(|&c| (volume[c], lab.diameters[c], volume[c] as f64 / threshold)).collect();
    let min_ratio = clusters.iter().map(|c| c.2).min_by(f64::total_cmp);
    let pass_fraction = (!clusters.is_empty()).then(|| clusters.iter().filter(|c| c.2 >= 1.0).count() as f64 / clusters.len() as f64);
    Ok(VolumeReport { rho, zeta, threshold, clusters, min_ratio, pass_fraction })
}

/// Inclusive bounding box in unwrapped site coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct IBox {
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
}

impl IBox {
    const EMPTY: IBox = IBox { x0: i64::MAX, x1: i64::MIN, y0: i64::MAX, y1: i64::MIN };

    fn point(x: i64, y: i64) -> Self {
        IBox { x0: x, x1: x, y0: y, y1: y }
    }

    fn join(self, o: IBox) -> Self {
        IBox { x0: self.x0.min(o.x0), x1: self.x1.max(o.x1), y0: self.y0.min(o.y0), y1: self.y1.max(o.y1) }
    }
}

/// Whether `[a0, a1]` fits in some translate `[b0 + kL, b1 + kL]`.
fn fits(a0: i64, a1: i64, b0: i64, b1: i64, l: Option<i64>) -> bool {
    match l {
        None => a0 >= b0 && a1 <= b1,
        Some(l) => (a1 - b1).div_euclid(l) + i64::from((a1 - b1).rem_euclid(l) != 0) <= (a0 - b0).div_euclid(l),
    }
}

/// Bounding boxes of every branch of a spanning tree, for either direction
/// of every tree edge, in coordinates unwrapped along the tree.
#[derive(Debug, Clone)]
pub struct BranchIndex {
    down: Vec<IBox>,
    up: Vec<IBox>,
    parent: Vec<u32>,
    pre: Vec<u32>,
    size: Vec<u32>,
    root: Vec<u32>,
}

impl BranchIndex {
    pub fn new(geometry: &Geometry, tree: &SpanningTree) -> Self {
        let n = tree.vertex_count();
        let mut ux = vec![0i64; n];
        let mut uy = vec![0i64; n];
        let mut parent = vec![NONE; n];
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        for root in 0..n as u32 {
            if placed[root as usize] {
                continue;
            }
            let (x, y) = geometry.coords(root);
            ux[root as usize] = i64::from(x);
            uy[root as usize] = i64::from(y);
            placed[root as usize] = true;
            let start = order.len();
            order.push(root);
            let mut k = start;
            while k < order.len() {
                let v = order[k];
                k += 1;
                for &(t, _) in tree.tree_neighbors(v) {
                    if !placed[t as usize] {
                        placed[t as usize] = true;
                        parent[t as usize] = v;
                        let (dx, dy) = geometry.displacement(v, t);
                        ux[t as usize] = ux[v as usize] + dx;
                        uy[t as usize] = uy[v as usize] + dy;
                        order.push(t);
                    }
                }
            }
        }
        let mut down: Vec<IBox> = (0..n).map(|v| IBox::point(ux[v], uy[v])).collect();
        let mut size = vec![1u32; n];
        for &v in order.iter().rev() {
            let p = parent[v as usize];
            if p != NONE {
                down[p as usize] = down[p as usize].join(down[v as usize]);
                size[p as usize] += size[v as usize];
            }
        }
        let mut pre = vec![0u32; n];
        let mut root = vec![0u32; n];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for r in 0..n as u32 {
            if parent[r as usize] != NONE {
                continue;
            }
            stack.push(r);
            while let Some(v) = stack.pop() {
                pre[v as usize] = next;
                root[v as usize] = r;
                next += 1;
                stack.extend(tree.tree_neighbors(v).iter().map(|&(t, _)| t).filter(|&t| parent[t as usize] == v));
            }
        }
        let mut up = vec![IBox::EMPTY; n];
        let mut kids: Vec<u32> = Vec::new();
        for &v in &order {
            kids.clear();
            kids.extend(tree.tree_neighbors(v).iter().map(|&(t, _)| t).filter(|&t| parent[t as usize] == v));
            let own = {
                let base = IBox::point(ux[v as usize], uy[v as usize]);
                if parent[v as usize] != NONE {
                    base.join(up[v as usize])
                } else {
                    base
                }
            };
            let mut prefix = own;
            let mut pre = Vec::with_capacity(kids.len());
            for &c in &kids {
                pre.push(prefix);
                prefix = prefix.join(down[c as usize]);
            }
            let mut suffix = IBox::EMPTY;
            for (i, &c) in kids.iter().enumerate().rev() {
                up[c as usize] = pre[i].join(suffix);
                suffix = suffix.join(down[c as usize]);
            }
        }
        Self { down, up, parent, pre, size, root }
    }

    /// Number of entries of the sorted preorder list `marks` that lie in the
    /// branch containing `b` after removing edge `a-b`.
    fn marks_in_branch(&self, a: u32, b: u32, marks: &[u32]) -> usize {
        let count = |v: u32| {
            let lo = self.pre[v as usize];
            let hi = lo + self.size[v as usize];
            marks.partition_point(|&m| m < hi) - marks.partition_point(|&m| m < lo)
        };
        if self.parent[b as usize] == a {
            count(b)
        } else {
            count(self.root[a as usize]) - count(a)
        }
    }

    /// Bounding box of the branch containing `b` after removing edge `a-b`.
    fn branch(&self, a: u32, b: u32) -> IBox {
        if self.parent[b as usize] == a {
            self.down[b as usize]
        } else {
            self.up[a as usize]
        }
    }
}

/// Annulus degree and degree type of one box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxDegree {
    /// Grid cell of the box.
    pub cell: (i64, i64),
    pub degree: u32,
    /// Sizes of the connectivity groups of the crossings, largest first.
    pub groups: Vec<u32>,
}

impl BoxDegree {
    pub fn is_pinching(&self) -> bool {
        self.groups.iter().filter(|&&g| g >= 2).count() >= 2
    }

    pub fn is_figure_six(&self) -> bool {
        self.groups == [2, 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCensus {
    pub r: f64,
    pub rho: f64,
    pub boxes: Vec<BoxDegree>,
    /// Boxes with degree at least `d`, for `d = 2, ..., 6`.
    pub at_least: [u64; 5],
    pub pinching: u64,
    pub figure_six: u64,
}

impl DegreeCensus {
    pub fn trunk_count(&self) -> u64 {
        self.at_least[0]
    }
}

struct CensusScratch {
    stamp: Vec<u32>,
    current: u32,
    stack: Vec<(u32, u32)>,
}

/// Degree of the box with lower-left corner `(bx, by)` and side `rs`, with
/// the outer box extending `m` sites beyond it on every side.
#[allow(clippy::too_many_arguments)]
fn box_degree(
    geometry: &Geometry,
    tree: &SpanningTree,
    index: &BranchIndex,
    cell: (i64, i64),
    bx: i64,
    by: i64,
    rs: i64,
    m: i64,
    scratch: &mut CensusScratch,
) -> BoxDegree {
    let l = i64::from(geometry.side());
    let torus = geometry.is_torus().then_some(l);
    let rel = |c: u32, o: i64| if torus.is_some() { (i64::from(c) - o).rem_euclid(l) } else { i64::from(c) - o };
    let q_side = rs + 2 * m;
    let in_q = |s: u32| {
        let (x, y) = geometry.coords(s);
        let (dx, dy) = (rel(x, bx - m), rel(y, by - m));
        (0..q_side).contains(&dx) && (0..q_side).contains(&dy)
    };
    let inside_q = |b: IBox| fits(b.x0, b.x1, bx - m, bx - m + q_side - 1, torus) && fits(b.y0, b.y1, by - m, by - m + q_side - 1, torus);

    let mut b_sites = Vec::with_capacity((rs * rs) as usize);
    for dy in 0..rs {
        for dx in 0..rs {
            let (x, y) = (bx + dx, by + dy);
            let s = if torus.is_some() { geometry.site_at(x.rem_euclid(l), y.rem_euclid(l)) } else { geometry.site_at(x, y) };
            if let Some(s) = s {
                b_sites.push(s);
            }
        }
    }
    let local: std::collections::HashMap<u32, u32> = b_sites.iter().enumerate().map(|(i, &s)| (s, i as u32)).collect();
    let mut marks: Vec<u32> = b_sites.iter().map(|&s| index.pre[s as usize]).collect();
    marks.sort_unstable();
    let mut uf = UnionFind::new(b_sites.len());
    for (i, &s) in b_sites.iter().enumerate() {
        for &(t, _) in tree.tree_neighbors(s) {
            if let Some(&j) = local.get(&t) {
                uf.union(i as u32, j);
            }
        }
    }
    if scratch.current == u32::MAX {
        scratch.stamp.iter_mut().for_each(|s| *s = 0);
        scratch.current = 0;
    }
    scratch.current += 1;
    let stamp = scratch.current;
    // escaping components, each represented by one B site
    let mut crossings: Vec<u32> = Vec::new();
    for (i, &u) in b_sites.iter().enumerate() {
        for &(w, _) in tree.tree_neighbors(u) {
            if local.contains_key(&w) || scratch.stamp[w as usize] == stamp {
                continue;
            }
            if !in_q(w) {
                crossings.push(i as u32);
                continue;
            }
            if index.marks_in_branch(u, w, &marks) == 0 {
                if !inside_q(index.branch(u, w)) {
                    crossings.push(i as u32);
                }
                continue;
            }
            let mut escapes = false;
            scratch.stamp[w as usize] = stamp;
            scratch.stack.clear();
            scratch.stack.push((w, u));
            while let Some((v, from)) = scratch.stack.pop() {
                for &(c, _) in tree.tree_neighbors(v) {
                    if c == from {
                        continue;
                    }
                    if let Some(&j) = local.get(&c) {
                        uf.union(i as u32, j);
                        continue;
                    }
                    if scratch.stamp[c as usize] == stamp {
                        continue;
                    }
                    if !in_q(c) {
                        escapes = true;
                        continue;
                    }
                    if index.marks_in_branch(v, c, &marks) == 0 {
                        escapes |= !inside_q(index.branch(v, c));
                        continue;
                    }
                    scratch.stamp[c as usize] = stamp;
                    scratch.stack.push((c, v));
                }
            }
            if escapes {
                crossings.push(i as u32);
            }
        }
    }
    let mut by_group: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
    for &i in &crossings {
        *by_group.entry(uf.find(i)).or_default() += 1;
    }
    let mut groups: Vec<u32> = by_group.into_values().collect();
    groups.sort_unstable_by(|a, b| b.cmp(a));
    BoxDegree { cell, degree: crossings.len() as u32, groups }
}

/// Annulus degrees of the boxes of the grid `rZ²` shifted by `offset`
/// sites, using precomputed branch boxes.
pub fn census_with(geometry: &Geometry, tree: &SpanningTree, index: &BranchIndex, r: f64, rho: f64, offset: (i64, i64)) -> Result<DegreeCensus> {
    let eta = geometry.eta();
    if !(r > 0.0 && rho > 0.0 && r <= rho / 4.0 + 1e-12 && rho <= geometry.half_side() + 1e-12) {
        return Err(Error::Usage(format!("scales need 0 < r <= rho/4 and rho <= M, got r = {r}, rho = {rho}")));
    }
    let rs = (r / eta).round() as i64;
    let rho_s = (rho / eta).round() as i64;
    if rs < 1 || ((r / eta) - rs as f64).abs() > 1e-9 {
        return Err(Error::Usage(format!("r = {r} is not a whole number of lattice steps")));
    }
    let m = rho_s - rs / 2;
    let l = i64::from(geometry.side());
    let first = offset.0.rem_euclid(rs) - if geometry.is_torus() { 0 } else { rs };
    let firsty = offset.1.rem_euclid(rs) - if geometry.is_torus() { 0 } else { rs };
    let xs: Vec<i64> = (0..).map(|k| first + k * rs).take_while(|&x| x < l).filter(|&x| x + rs > 0).collect();
    let ys: Vec<i64> = (0..).map(|k| firsty + k * rs).take_while(|&y| y < l).filter(|&y| y + rs > 0).collect();
    let cells: Vec<(i64, i64, i64, i64)> = ys
        .iter()
        .enumerate()
        .flat_map(|(j, &y)| xs.iter().enumerate().map(move |(i, &x)| (i as i64, j as i64, x, y)))
        .collect();
    let boxes: Vec<BoxDegree> = cells
        .par_iter()
        .map_init(
            || CensusScratch { stamp: vec![0; geometry.site_count()], current: 0, stack: Vec::new() },
            |scratch, &(i, j, x, y)| box_degree(geometry, tree, index, (i, j), x, y, rs, m, scratch),
        )
        .collect();
    let mut at_least = [0u64; 5];
    for b in &boxes {
        for (k, slot) in at_least.iter_mut().enumerate() {
            if b.degree as usize >= k + 2 {
                *slot += 1;
            }
        }
    }
    let pinching = boxes.iter().filter(|b| b.is_pinching()).count() as u64;
    let figure_six = boxes.iter().filter(|b| b.is_figure_six()).count() as u64;
    Ok(DegreeCensus { r, rho, boxes, at_least, pinching, figure_six })
}

/// Annulus degree of every box of the grid `rZ²` between the box and the
/// concentric box of radius `rho`.
pub fn degree_census(geometry: &Geometry, tree: &SpanningTree, r: f64, rho: f64) -> Result<DegreeCensus> {
    let index = BranchIndex::new(geometry, tree);
    census_with(geometry, tree, &index, r, rho, (0, 0))
}

/// Cells of the boxes with annulus degree at least 2.
pub fn trunk_boxes(geometry: &Geometry, tree: &SpanningTree, rho: f64, r: f64) -> Result<Vec<(i64, i64)>> {
    Ok(degree_census(geometry, tree, r, rho)?.boxes.into_iter().filter(|b| b.degree >= 2).map(|b| b.cell).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountCurve {
    pub rho: f64,
    /// `(r, number of trunk boxes)`.
    pub counts: Vec<(f64, f64)>,
}

/// Slope of `log N(r)` against `log(1/r)`.
pub fn minkowski_fit(curve: &BoxCountCurve) -> Result<Fit> {
    if curve.counts.len() < 3 {
        return Err(Error::Fit(format!("need at least three scales, got {}", curve.counts.len())));
    }
    if curve.counts.iter().any(|&(r, n)| !(r > 0.0) || !(n > 0.0)) {
        return Err(Error::Fit("scales and counts must be positive".into()));
    }
    let xs: Vec<f64> = curve.counts.iter().map(|&(r, _)| -r.ln()).collect();
    let ys: Vec<f64> = curve.counts.iter().map(|&(_, n)| n.ln()).collect();
    linear_fit(&xs, &ys)
}

/// `n` uniform point pairs in `[-M, M]²` drawn from the stream of `seed`.
pub fn sample_point_pairs(geometry: &Geometry, seed: u64, n: usize) -> Vec<([f64; 2], [f64; 2])> {
    let m = geometry.half_side();
    let mut u = vec![0.0; 4 * n];
    labels_for_range(seed, 0, &mut u);
    u.chunks_exact(4).map(|c| ([(2.0 * c[0] - 1.0) * m, (2.0 * c[1] - 1.0) * m], [(2.0 * c[2] - 1.0) * m, (2.0 * c[3] - 1.0) * m])).collect()
}

/// `count` tuples of `size` uniform points in `[-M, M]²` from the stream of `seed`.
pub fn sample_tuples(geometry: &Geometry, seed: u64, count: usize, size: usize) -> Vec<Vec<[f64; 2]>> {
    let m = geometry.half_side();
    let mut u = vec![0.0; 2 * count * size];
    labels_for_range(seed, 0, &mut u);
    u.chunks_exact(2 * size.max(1)).map(|c| c.chunks_exact(2).map(|p| [(2.0 * p[0] - 1.0) * m, (2.0 * p[1] - 1.0) * m]).collect()).collect()
}

/// Spanning-tree paths compared with cut-off tree paths between the same
/// pairs of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffComparison {
    pub epsilon: f64,
    pub important: usize,
    pub switch_events: usize,
    pub routers: usize,
    pub giant: bool,
    pub giant_routers: usize,
    /// Fréchet distance between the two paths of each pair; against the
    /// single point of a degenerate tree when there is no giant.
    pub distances: Vec<f64>,
    /// Whether the spanning-tree path and the cut-off path between the two
    /// matched routers use the same switch sites; empty without a giant.
    pub switch_agreement: Vec<bool>,
    /// Truncated tree-space distance at the requested leaf tuples.
    pub omega: Option<OmegaDistance>,
}

impl CutoffComparison {
    pub fn mean_distance(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len().max(1) as f64
    }

    pub fn agreement_fraction(&self) -> Option<f64> {
        (!self.switch_agreement.is_empty())
            .then(|| self.switch_agreement.iter().filter(|&&a| a).count() as f64 / self.switch_agreement.len() as f64)
    }
}

/// Builds the cut-off tree at scale `epsilon` for `window` and compares it
/// with `tree` along the paths joining each pair of `points`, and in tree
/// space at `tuples` when any are given.
#[allow(clippy::too_many_arguments)]
pub fn compare_cutoff(
    geometry: &Geometry,
    labels: &LabelField,
    tree: &SpanningTree,
    epsilon: f64,
    window: Window,
    cal: &Calibration,
    s: f64,
    points: &[([f64; 2], [f64; 2])],
    tuples: &[Vec<[f64; 2]>],
    ell_max: usize,
) -> Result<CutoffComparison> {
    let config = config_at(labels, lambda_to_p(window.lambda_lo, cal))?;
    let important = find_important(geometry, &config, epsilon)?;
    let network = build_network(geometry, &config, &important)?;
    let events = switches(labels, &important, window, cal);
    let forest = cutoff_forest(&network, geometry, &events, window.lambda_lo)?;
    let gt = giant(&forest, &network, geometry, s)?;
    let event_sites: std::collections::HashSet<u32> = events.iter().map(|e| e.site).collect();
    let mut distances = Vec::with_capacity(points.len());
    let mut switch_agreement = Vec::new();
    for &(p, q) in points {
        let (x, y) = (geometry.nearest_site(p), geometry.nearest_site(q));
        let path = tree_path(geometry, tree, x, y)?;
        if gt.degenerate {
            let point = crate::forest::PolylinePath::new(vec![gt.point], path.metric);
            distances.push(frechet(&path, &point)?);
            continue;
        }
        let a = closest_router(geometry, &network, p, gt.routers.iter().copied()).expect("giant has routers");
        let b = closest_router(geometry, &network, q, gt.routers.iter().copied()).expect("giant has routers");
        distances.push(frechet(&path, &cutoff_polyline(geometry, &network, &forest, a, b)?)?);
        let (ra, rb) = (network.routers[a as usize], network.routers[b as usize]);
        let mut used: Vec<u32> = tree.path_sites(ra, rb)?.into_iter().filter(|v| event_sites.contains(v)).collect();
        used.sort_unstable();
        switch_agreement.push(used == switch_sites_on_path(&network, &forest, a, b)?);
    }
    let omega = if tuples.is_empty() {
        None
    } else {
        let a = extract_sample(&SpanningView { geometry, tree }, tuples, ell_max)?;
        let b = extract_sample(&CutoffView::new(geometry, &network, &forest, &gt), tuples, ell_max)?;
        Some(d_omega_truncated(&a, &b)?)
    };
    Ok(CutoffComparison {
        omega,
        epsilon,
        important: important.len(),
        switch_events: events.len(),
        routers: network.routers.len(),
        giant: !gt.degenerate,
        giant_routers: gt.routers.len(),
        distances,
        switch_agreement,
    })
}
