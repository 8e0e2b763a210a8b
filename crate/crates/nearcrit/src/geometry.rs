//! Lattices at mesh `eta = 1/N` on a torus or a box of side `2M`, and the
//! nested dyadic box coverings used to localise pivotal events.
//!
//! Sites are stored row-major on an `L x L` grid with `L = 2MN`. The
//! triangular lattice is the square grid with the anti-diagonal added, so a
//! site `(x, y)` sits at `(x*eta - M, y*eta - M)` and every neighbour is at
//! lattice (L-infinity) distance exactly `eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for a missing neighbour slot on a box domain.
pub const NONE: u32 = u32::MAX;

/// Counter-clockwise neighbour offsets of the triangular lattice:
/// E, N, NW, W, S, SE.
pub const TRI_OFFSETS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
/// Counter-clockwise neighbour offsets of the square lattice: E, N, W, S.
pub const SQ_OFFSETS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatticeKind {
    /// Site percolation on the triangular lattice; labels live on sites.
    TriangularSite,
    /// Bond percolation on the square lattice; labels live on edges.
    SquareBond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainKind {
    Torus,
    Box,
}

/// Lattice kind, mesh and domain. `n` is the inverse mesh and `m` the
/// half-side of the domain in embedding units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    pub n: u32,
    pub m: f64,
    pub domain: DomainKind,
}

impl LatticeSpec {
    pub fn new(kind: LatticeKind, n: u32, m: f64, domain: DomainKind) -> Self {
        Self { kind, n, m, domain }
    }

    pub fn eta(&self) -> f64 {
        1.0 / f64::from(self.n)
    }

    /// Number of sites along one side, `2MN`, after validation.
    pub fn side(&self) -> Result<u32> {
        if self.n < 2 {
            return Err(Error::Config(format!("mesh denominator N = {} must be at least 2", self.n)));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::Config(format!("half-side M = {} must be positive", self.m)));
        }
        let mn = self.m * f64::from(self.n);
        let rounded = mn.round();
        if (mn - rounded).abs() > 1e-9 * mn.max(1.0) || rounded < 1.0 {
            return Err(Error::Config(format!(
                "half-side M = {} is not a positive multiple of eta = 1/{}",
                self.m, self.n
            )));
        }
        let side = 2.0 * rounded;
        if side > f64::from(u16::MAX) {
            return Err(Error::Config(format!("domain of {side} sites per side is too large")));
        }
        let side = side as u32;
        if self.domain == DomainKind::Torus && side < 4 {
            return Err(Error::Config(format!(
                "a torus needs at least 4 sites per side, got {side}"
            )));
        }
        Ok(side)
    }
}

/// Immutable lattice with an explicit neighbour table in cyclic order.
#[derive(Debug, Clone)]
pub struct Geometry {
    spec: LatticeSpec,
    side: u32,
    degree: usize,
    nbr: Vec<u32>,
    nbr_edge: Vec<u32>,
    edges: Vec<[u32; 2]>,
}

/// Builds the lattice described by `spec`.
pub fn build_geometry(spec: LatticeSpec) -> Result<Geometry> {
    Geometry::new(spec)
}

impl Geometry {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        let side = spec.side()?;
        let offsets: &[(i64, i64)] = match spec.kind {
            LatticeKind::TriangularSite => &TRI_OFFSETS,
            LatticeKind::SquareBond => &SQ_OFFSETS,
        };
        let degree = offsets.len();
        // The first half of the offsets are the "forward" directions that own an edge.
        let forward = degree / 2;
        let n = (side as usize) * (side as usize);
        let mut nbr = vec![NONE; n * degree];
        let mut nbr_edge = vec![NONE; n * degree];
        let mut edges = Vec::with_capacity(n * forward);
        let l = i64::from(side);
        let torus = spec.domain == DomainKind::Torus;
        let locate = |x: i64, y: i64| -> Option<u32> {
            if torus {
                Some((y.rem_euclid(l) * l + x.rem_euclid(l)) as u32)
            } else if (0..l).contains(&x) && (0..l).contains(&y) {
                Some((y * l + x) as u32)
            } else {
                None
            }
        };
        for s in 0..n {
            let (x, y) = ((s as i64) % l, (s as i64) / l);
            for (d, &(dx, dy)) in offsets.iter().enumerate() {
                if let Some(t) = locate(x + dx, y + dy) {
                    nbr[s * degree + d] = t;
                    if d < forward {
                        let e = edges.len() as u32;
                        edges.push([s as u32, t]);
                        nbr_edge[s * degree + d] = e;
                        nbr_edge[t as usize * degree + d + forward] = e;
                    }
                }
            }
        }
        Ok(Self { spec, side, degree, nbr, nbr_edge, edges })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn kind(&self) -> LatticeKind {
        self.spec.kind
    }

    pub fn is_torus(&self) -> bool {
        self.spec.domain == DomainKind::Torus
    }

    pub fn eta(&self) -> f64 {
        self.spec.eta()
    }

    /// Half-side `M` of the domain.
    pub fn half_side(&self) -> f64 {
        self.spec.m
    }

    /// Sites per side, `L = 2MN`.
    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn site_count(&self) -> usize {
        (self.side as usize) * (self.side as usize)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of label carriers: sites on the triangular lattice, edges on the square lattice.
    pub fn carrier_count(&self) -> usize {
        match self.spec.kind {
            LatticeKind::TriangularSite => self.site_count(),
            LatticeKind::SquareBond => self.edge_count(),
        }
    }

    /// Neighbour slots per site (6 or 4).
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn offsets(&self) -> &'static [(i64, i64)] {
        match self.spec.kind {
            LatticeKind::TriangularSite => &TRI_OFFSETS,
            LatticeKind::SquareBond => &SQ_OFFSETS,
        }
    }

    /// Neighbour slots of `site` in counter-clockwise order; missing
    /// neighbours on a box are [`NONE`].
    #[inline]
    pub fn slots(&self, site: u32) -> &[u32] {
        let b = site as usize * self.degree;
        &self.nbr[b..b + self.degree]
    }

    /// Edge ids matching [`Geometry::slots`].
    #[inline]
    pub fn edge_slots(&self, site: u32) -> &[u32] {
        let b = site as usize * self.degree;
        &self.nbr_edge[b..b + self.degree]
    }

    /// Present neighbours of `site` in counter-clockwise order, starting east.
    pub fn neighbors(&self, site: u32) -> Result<Vec<u32>> {
        self.check_site(site)?;
        Ok(self.slots(site).iter().copied().filter(|&t| t != NONE).collect())
    }

    /// `(neighbour, edge id)` pairs of `site`.
    #[inline]
    pub fn incident(&self, site: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.slots(site)
            .iter()
            .zip(self.edge_slots(site))
            .filter(|(&t, _)| t != NONE)
            .map(|(&t, &e)| (t, e))
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: u32) -> [u32; 2] {
        self.edges[e as usize]
    }

    /// Edge joining `a` and `b`, if they are adjacent.
    pub fn edge_between(&self, a: u32, b: u32) -> Option<u32> {
        self.incident(a).find(|&(t, _)| t == b).map(|(_, e)| e)
    }

    pub fn check_site(&self, site: u32) -> Result<()> {
        if (site as usize) < self.site_count() {
            Ok(())
        } else {
            Err(Error::Usage(format!("site {site} out of range 0..{}", self.site_count())))
        }
    }

    #[inline]
    pub fn coords(&self, site: u32) -> (u32, u32) {
        (site % self.side, site / self.side)
    }

    /// Site at integer coordinates, wrapping on the torus.
    pub fn site_at(&self, x: i64, y: i64) -> Option<u32> {
        let l = i64::from(self.side);
        if self.is_torus() {
            Some((y.rem_euclid(l) * l + x.rem_euclid(l)) as u32)
        } else if (0..l).contains(&x) && (0..l).contains(&y) {
            Some((y * l + x) as u32)
        } else {
            None
        }
    }

    /// Embedding position in `[-M, M)^2`.
    #[inline]
    pub fn position(&self, site: u32) -> [f64; 2] {
        let (x, y) = self.coords(site);
        let eta = self.eta();
        [f64::from(x) * eta - self.spec.m, f64::from(y) * eta - self.spec.m]
    }

    /// Integer displacement from `a` to `b`, using the minimal image on the torus.
    #[inline]
    pub fn displacement(&self, a: u32, b: u32) -> (i64, i64) {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        let mut dx = i64::from(bx) - i64::from(ax);
        let mut dy = i64::from(by) - i64::from(ay);
        if self.is_torus() {
            let l = i64::from(self.side);
            dx = wrap_delta(dx, l);
            dy = wrap_delta(dy, l);
        }
        (dx, dy)
    }

    /// L-infinity lattice distance in sites between two sites.
    pub fn lattice_distance(&self, a: u32, b: u32) -> u64 {
        let (dx, dy) = self.displacement(a, b);
        dx.unsigned_abs().max(dy.unsigned_abs())
    }

    /// Flat distance between two embedding points, minimal image on the torus.
    pub fn point_distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let mut dx = q[0] - p[0];
        let mut dy = q[1] - p[1];
        if self.is_torus() {
            let w = 2.0 * self.spec.m;
            dx -= w * (dx / w).round();
            dy -= w * (dy / w).round();
        }
        dx.hypot(dy)
    }

    /// True for box sites missing at least one neighbour.
    pub fn is_boundary(&self, site: u32) -> bool {
        !self.is_torus() && self.slots(site).contains(&NONE)
    }

    /// Site nearest to an embedding point (rounding, wrapping on the torus,
    /// clamping on a box).
    pub fn nearest_site(&self, p: [f64; 2]) -> u32 {
        let n = f64::from(self.spec.n);
        let l = i64::from(self.side);
        let fx = ((p[0] + self.spec.m) * n).round() as i64;
        let fy = ((p[1] + self.spec.m) * n).round() as i64;
        if self.is_torus() {
            (fy.rem_euclid(l) * l + fx.rem_euclid(l)) as u32
        } else {
            (fy.clamp(0, l - 1) * l + fx.clamp(0, l - 1)) as u32
        }
    }
}

/// Reduces a coordinate difference to its minimal representative modulo `l`.
#[inline]
pub fn wrap_delta(d: i64, l: i64) -> i64 {
    let r = d.rem_euclid(l);
    if r > l / 2 {
        r - l
    } else {
        r
    }
}

/// Axis-aligned square `[x0, x1) x [y0, y1)` in embedding units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn center(&self) -> [f64; 2] {
        [(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0]
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        self.x0 <= o.x0 && self.y0 <= o.y0 && o.x1 <= self.x1 && o.y1 <= self.y1
    }

    /// Distance from an interior point to the boundary.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.x0).min(self.x1 - p[0]).min(p[1] - self.y0).min(self.y1 - p[1])
    }
}

/// Checks that `r` is a power of two and returns `k` with `r = 2^-k`.
pub fn dyadic_exponent(r: f64) -> Result<i32> {
    if !(r.is_finite() && r > 0.0) || r.to_bits() & ((1u64 << 52) - 1) != 0 {
        return Err(Error::Usage(format!("scale {r} is not a power of two")));
    }
    Ok(-(r.log2().round() as i32))
}

/// Covering of the domain by `r`-squares: each site lies in a cell of the
/// grid `(r/2)Z^2` and is assigned the `r`-square centred on that cell,
/// whose corners sit on `(r/2)Z^2 - (r/4, r/4)`.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    pub r: f64,
    cells: Vec<(i64, i64)>,
}

/// Dyadic covering of the geometry at scale `r`.
pub fn box_cover(geometry: &Geometry, r: f64) -> Result<BoxGrid> {
    let k = dyadic_exponent(r)?;
    if r > 2.0 * geometry.half_side() {
        return Err(Error::Usage(format!(
            "scale {r} exceeds the domain side {}",
            2.0 * geometry.half_side()
        )));
    }
    let n = i64::from(geometry.spec().n);
    let half = i64::from(geometry.side()) / 2;
    // cell index = floor(c * eta / (r/2)) = floor(c * 2^(k+1) / N)
    let cell = |c: i64| -> i64 {
        let e = k + 1;
        if e >= 0 {
            (c << e).div_euclid(n)
        } else {
            c.div_euclid(n << (-e))
        }
    };
    let cells = (0..geometry.site_count() as u32)
        .map(|s| {
            let (x, y) = geometry.coords(s);
            (cell(i64::from(x) - half), cell(i64::from(y) - half))
        })
        .collect();
    Ok(BoxGrid { r, cells })
}

impl BoxGrid {
    /// Index of the `r/2`-cell containing `site`.
    pub fn cell(&self, site: u32) -> (i64, i64) {
        self.cells[site as usize]
    }

    fn square_of_cell(&self, (i, j): (i64, i64)) -> Rect {
        let h = self.r / 2.0;
        let x0 = i as f64 * h - self.r / 4.0;
        let y0 = j as f64 * h - self.r / 4.0;
        Rect { x0, y0, x1: x0 + self.r, y1: y0 + self.r }
    }

    /// The `r`-square assigned to `site`.
    pub fn square(&self, site: u32) -> Rect {
        self.square_of_cell(self.cell(site))
    }

    /// All distinct `r`-squares, one per occupied `r/2`-cell, in cell order.
    pub fn squares(&self) -> Vec<Rect> {
        let mut c = self.cells.clone();
        c.sort_unstable_by_key(|&(i, j)| (j, i));
        c.dedup();
        c.into_iter().map(|ij| self.square_of_cell(ij)).collect()
    }
}
