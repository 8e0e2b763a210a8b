//! Arm events on local patches of the triangular lattice.
//!
//! A [`Patch`] is a rectangular window of labels with a region mask, an
//! inner boundary and an outer boundary. Arms are paths inside the region
//! joining the two boundaries. On the triangular lattice the crossing
//! clusters of the two colours alternate around an annulus, so `2j`
//! alternating arms exist iff there are at least `j` open and `j` closed
//! crossing clusters. Monochromatic arm counts are vertex-disjoint path
//! counts and are computed by augmenting paths.

use crate::ensemble::{labels_for_range, LabelField};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, LatticeKind, TRI_OFFSETS};

/// Local window with a one-cell padding so neighbour lookups never leave it.
#[derive(Debug, Clone)]
pub struct Patch {
    pub w: usize,
    pub h: usize,
    pub labels: Vec<f64>,
    pub region: Vec<bool>,
    pub outer: Vec<bool>,
    pub inner: Vec<u32>,
    offs: [isize; 6],
    seen: Vec<u32>,
    stamp: u32,
    queue: Vec<u32>,
    parent: Vec<u32>,
    node_used: Vec<bool>,
    arc_flow: Vec<bool>,
}

impl Patch {
    pub fn new(w: usize, h: usize) -> Self {
        let n = w * h;
        let mut offs = [0isize; 6];
        for (o, &(dx, dy)) in offs.iter_mut().zip(TRI_OFFSETS.iter()) {
            *o = dy as isize * w as isize + dx as isize;
        }
        Self {
            w,
            h,
            labels: vec![2.0; n],
            region: vec![false; n],
            outer: vec![false; n],
            inner: Vec::new(),
            offs,
            seen: vec![0; n],
            stamp: 0,
            queue: Vec::new(),
            parent: Vec::new(),
            node_used: Vec::new(),
            arc_flow: Vec::new(),
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.w + x
    }

    fn next_stamp(&mut self) -> u32 {
        if self.stamp == u32::MAX {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.stamp = 0;
        }
        self.stamp += 1;
        self.stamp
    }

    /// Numbers of open and closed crossing clusters at threshold `q`,
    /// stopping early once both reach `need`.
    pub fn crossing_counts(&mut self, q: f64, need: usize) -> (usize, usize) {
        let stamp = self.next_stamp();
        let (mut open, mut closed) = (0usize, 0usize);
        for k in 0..self.inner.len() {
            let s = self.inner[k] as usize;
            if !self.region[s] || self.seen[s] == stamp {
                continue;
            }
            let colour = self.labels[s] <= q;
            self.seen[s] = stamp;
            self.queue.clear();
            self.queue.push(s as u32);
            let mut crosses = false;
            let mut head = 0;
            while head < self.queue.len() {
                let v = self.queue[head] as usize;
                head += 1;
                crosses |= self.outer[v];
                for &o in &self.offs {
                    let u = (v as isize + o) as usize;
                    if self.region[u] && self.seen[u] != stamp && (self.labels[u] <= q) == colour {
                        self.seen[u] = stamp;
                        self.queue.push(u as u32);
                    }
                }
            }
            if crosses {
                if colour {
                    open += 1;
                } else {
                    closed += 1;
                }
                if open >= need && closed >= need {
                    break;
                }
            }
        }
        (open, closed)
    }

    /// Whether `k` alternating arms (k even) or one arm of each colour
    /// (k = 2) exist at threshold `q`.
    pub fn alternating(&mut self, k: usize, q: f64) -> bool {
        let j = k.div_ceil(2).max(1);
        let (o, c) = self.crossing_counts(q, j);
        o >= j && c >= j
    }

    /// Maximum number (capped at `k`) of vertex-disjoint arms whose sites all
    /// satisfy `label <= q` (`open`) or `label > q` (closed).
    pub fn disjoint_arms(&mut self, q: f64, open: bool, k: usize) -> usize {
        let n = self.w * self.h;
        let ok = |l: f64| (l <= q) == open;
        // state 2v = v_in, 2v + 1 = v_out; arc_flow[v*6 + d] = unit flowing v_out -> (v+off[d])_in
        self.node_used.clear();
        self.node_used.resize(n, false);
        self.arc_flow.clear();
        self.arc_flow.resize(n * 6, false);
        let mut src_used = vec![false; n];
        let mut sink_used = vec![false; n];
        let mut found = 0;
        const SRC: u32 = u32::MAX - 1;
        while found < k {
            self.parent.clear();
            self.parent.resize(2 * n, u32::MAX);
            let mut seen2 = vec![false; 2 * n];
            self.queue.clear();
            for &s in &self.inner {
                let s = s as usize;
                if self.region[s] && ok(self.labels[s]) && !src_used[s] && !seen2[2 * s] {
                    seen2[2 * s] = true;
                    self.parent[2 * s] = SRC;
                    self.queue.push((2 * s) as u32);
                }
            }
            let mut end = None;
            let mut head = 0;
            while head < self.queue.len() && end.is_none() {
                let st = self.queue[head] as usize;
                head += 1;
                let v = st / 2;
                let is_out = st % 2 == 1;
                let push = |t: usize, from: usize, seen2: &mut Vec<bool>, q: &mut Vec<u32>, par: &mut Vec<u32>| {
                    if !seen2[t] {
                        seen2[t] = true;
                        par[t] = from as u32;
                        q.push(t as u32);
                    }
                };
                if !is_out {
                    if !self.node_used[v] {
                        push(2 * v + 1, st, &mut seen2, &mut self.queue, &mut self.parent);
                    }
                    // cancel flow arriving at v_in from a neighbour
                    for d in 0..6 {
                        let u = (v as isize - self.offs[d]) as usize;
                        if u < n && self.arc_flow[u * 6 + d] {
                            push(2 * u + 1, st, &mut seen2, &mut self.queue, &mut self.parent);
                        }
                    }
                } else {
                    if self.outer[v] && !sink_used[v] {
                        end = Some(v);
                        break;
                    }
                    if self.node_used[v] {
                        push(2 * v, st, &mut seen2, &mut self.queue, &mut self.parent);
                    }
                    for d in 0..6 {
                        let u = (v as isize + self.offs[d]) as usize;
                        if self.region[u] && ok(self.labels[u]) && !self.arc_flow[v * 6 + d] {
                            push(2 * u, st, &mut seen2, &mut self.queue, &mut self.parent);
                        }
                    }
                }
            }
            let Some(last) = end else { break };
            sink_used[last] = true;
            let mut st = 2 * last + 1;
            loop {
                let p = self.parent[st];
                if p == SRC {
                    src_used[st / 2] = true;
                    break;
                }
                let p = p as usize;
                let (pv, pout) = (p / 2, p % 2 == 1);
                let (sv, sout) = (st / 2, st % 2 == 1);
                if pv == sv {
                    // internal arc: in -> out uses the node, out -> in releases it
                    self.node_used[sv] = !pout && sout;
                } else if pout && !sout {
                    let d = (0..6).find(|&d| (pv as isize + self.offs[d]) as usize == sv).unwrap();
                    self.arc_flow[pv * 6 + d] = true;
                } else {
                    let d = (0..6).find(|&d| (sv as isize + self.offs[d]) as usize == pv).unwrap();
                    self.arc_flow[sv * 6 + d] = false;
                }
                st = p;
            }
            found += 1;
        }
        found
    }
}

/// Concentric square annulus around a centre site, in sites: the region is
/// `a < d <= b_out` for the L-infinity offset `d`, the inner boundary is the
/// six neighbours of the centre when `a = 0` and the ring `d = a + 1`
/// otherwise, and the outer boundary is the ring `d = b_out`.
#[derive(Debug, Clone)]
pub struct Annulus {
    pub patch: Patch,
    dist: Vec<u32>,
    radius: usize,
    center: (i64, i64),
    side: i64,
    torus: bool,
    current: Option<(usize, usize)>,
}

impl Annulus {
    /// Window of radius `radius` around the centre of the domain.
    pub fn new(geometry: &Geometry, a: usize, radius: usize) -> Result<Self> {
        if geometry.kind() != LatticeKind::TriangularSite {
            return Err(Error::Usage("arm events are implemented for the triangular lattice".into()));
        }
        let l = geometry.side() as usize;
        let fits = if geometry.is_torus() { 2 * radius <= l } else { radius < l / 2 };
        if radius == 0 || !fits {
            return Err(Error::Usage(format!("arm radius of {radius} sites does not fit the domain")));
        }
        if a >= radius {
            return Err(Error::Usage("inner radius must be below the outer radius".into()));
        }
        let w = 2 * radius + 3;
        let mut dist = vec![u32::MAX; w * w];
        for y in 1..w - 1 {
            for x in 1..w - 1 {
                let d = (x as i64 - radius as i64 - 1).unsigned_abs().max((y as i64 - radius as i64 - 1).unsigned_abs());
                dist[y * w + x] = d as u32;
            }
        }
        let half = (l / 2) as i64;
        let mut ann = Self {
            patch: Patch::new(w, w),
            dist,
            radius,
            center: (half, half),
            side: l as i64,
            torus: geometry.is_torus(),
            current: None,
        };
        ann.set_radii(a, radius);
        Ok(ann)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Site id at window offset `(dx, dy)` from the centre.
    fn site(&self, dx: i64, dy: i64) -> usize {
        let (x, y) = (self.center.0 + dx, self.center.1 + dy);
        let (x, y) = if self.torus { (x.rem_euclid(self.side), y.rem_euclid(self.side)) } else { (x, y) };
        (y * self.side + x) as usize
    }

    /// Draws fresh labels for the window from the counter-based stream of `seed`.
    pub fn load(&mut self, seed: u64) {
        let r = self.radius as i64;
        let w = self.patch.w;
        let span = (2 * r + 1) as usize;
        let mut buf = vec![0.0; span];
        for dy in -r..=r {
            let first = self.site(-r, dy);
            let row_start = first - first % self.side as usize;
            let x0 = first - row_start;
            let head = span.min(self.side as usize - x0);
            labels_for_range(seed, first as u64, &mut buf[..head]);
            if head < span {
                labels_for_range(seed, row_start as u64, &mut buf[head..]);
            }
            let base = (dy + r + 1) as usize * w + 1;
            self.patch.labels[base..base + span].copy_from_slice(&buf);
        }
    }

    /// Copies the window out of an existing label field.
    pub fn load_from(&mut self, labels: &LabelField) {
        let r = self.radius as i64;
        let w = self.patch.w;
        for dy in -r..=r {
            for dx in -r..=r {
                let i = (dy + r + 1) as usize * w + (dx + r + 1) as usize;
                self.patch.labels[i] = labels.values()[self.site(dx, dy)];
            }
        }
    }

    /// Selects the annulus `a < d <= b_out`.
    pub fn set_radii(&mut self, a: usize, b_out: usize) {
        assert!(a < b_out && b_out <= self.radius, "invalid annulus ({a}, {b_out})");
        if self.current == Some((a, b_out)) {
            return;
        }
        self.current = Some((a, b_out));
        let p = &mut self.patch;
        p.inner.clear();
        let w = p.w;
        let c = (self.radius + 1) * w + self.radius + 1;
        for (i, &d) in self.dist.iter().enumerate() {
            let d = d as usize;
            p.region[i] = d > a && d <= b_out;
            p.outer[i] = d == b_out;
            if a > 0 && d == a + 1 {
                p.inner.push(i as u32);
            }
        }
        if a == 0 {
            for &(dx, dy) in &TRI_OFFSETS {
                p.inner.push((c as isize + dy as isize * w as isize + dx as isize) as u32);
            }
        }
    }
}

/// Arm colour sequence in counter-clockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// `k` arms alternating open and closed (`k = 1` is a single open arm).
    Alternating(usize),
    /// `k` disjoint arms of one colour.
    Mono { open: bool, k: usize },
}

impl Palette {
    /// Parses a cyclic colour word over `{O, C}`.
    pub fn parse(word: &str) -> Result<Self> {
        let cs: Vec<char> = word.chars().filter(|c| !c.is_whitespace() && *c != ',').collect();
        if cs.is_empty() || cs.iter().any(|c| !matches!(c, 'O' | 'C')) {
            return Err(Error::Usage(format!("palette {word:?} must be a word over O and C")));
        }
        let k = cs.len();
        if cs.iter().all(|&c| c == cs[0]) {
            return Ok(Palette::Mono { open: cs[0] == 'O', k });
        }
        let alternates = k.is_multiple_of(2) && (0..k).all(|i| cs[i] != cs[(i + 1) % k]);
        if alternates {
            Ok(Palette::Alternating(k))
        } else {
            Err(Error::Usage(format!("palette {word:?} is neither monochromatic nor alternating")))
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            Palette::Alternating(k) => k,
            Palette::Mono { k, .. } => k,
        }
    }
}

impl Annulus {
    /// Static event at threshold `q` for the selected annulus.
    pub fn event_static(&mut self, palette: Palette, q: f64) -> bool {
        match palette {
            Palette::Alternating(k) => self.patch.alternating(k, q),
            Palette::Mono { open, k: 1 } => {
                let (o, c) = self.patch.crossing_counts(q, usize::MAX);
                if open {
                    o >= 1
                } else {
                    c >= 1
                }
            }
            Palette::Mono { open, k } => self.patch.disjoint_arms(q, open, k) >= k,
        }
    }

    /// Near-critical event with primal arms at `label <= p_hi` and dual arms
    /// at `label > p_lo`. Mixed palettes are tested on every threshold of
    /// `grid`, each of which is a configuration sandwiched between the two.
    pub fn event_window(&mut self, palette: Palette, p_lo: f64, p_hi: f64, grid: &[f64]) -> bool {
        match palette {
            Palette::Mono { open: true, .. } => self.event_static(palette, p_hi),
            Palette::Mono { open: false, .. } => self.event_static(palette, p_lo),
            Palette::Alternating(_) => grid.iter().any(|&q| self.event_static(palette, q)),
        }
    }

    /// Four alternating arms across the full window at threshold `q`.
    pub fn alternating_static(&mut self, k: usize, q: f64) -> bool {
        self.patch.alternating(k, q)
    }
}
