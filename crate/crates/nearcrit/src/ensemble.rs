//! The label field and the monotone coupling of all percolation
//! configurations, together with the near-critical reparametrisation
//! `lambda <-> p` and the calibration of the window width `r(eta)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::arms;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, LatticeKind, LatticeSpec};

/// Critical threshold for both supported lattices.
pub const P_C: f64 = 0.5;

const CHUNK: usize = 1 << 14;

/// Converts 64 random bits into a float strictly inside `(0, 1)`.
#[inline]
fn unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with the labels of carriers `first..first + out.len()` for
/// `seed`. The stream is counter based: carrier `i` always reads word pair
/// `2i` of the ChaCha stream, so any sub-range reproduces the full field.
pub fn labels_for_range(seed: u64, first: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(u128::from(first) * 2);
    for v in out.iter_mut() {
        *v = unit(rng.next_u64());
    }
}

/// Seed of replica `index` derived from a master seed.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

/// One Unif(0,1) label per carrier, all distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    pub spec: LatticeSpec,
    pub seed: u64,
    values: Vec<f64>,
}

/// Samples the label field of `geometry` for `seed`.
pub fn sample_labels(geometry: &Geometry, seed: u64) -> LabelField {
    let n = geometry.carrier_count();
    let mut values = vec![0.0; n];
    values.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        labels_for_range(seed, (c * CHUNK) as u64, chunk);
    });
    make_distinct(&mut values);
    LabelField { spec: *geometry.spec(), seed, values }
}

/// Nudges repeated labels upward by one ulp, later carriers first in line.
fn make_distinct(values: &mut [f64]) -> usize {
    let mut order: Vec<(u64, u32)> =
        values.iter().enumerate().map(|(i, v)| (v.to_bits(), i as u32)).collect();
    order.par_sort_unstable();
    if order.windows(2).all(|w| w[0].0 != w[1].0) {
        return 0;
    }
    let mut nudged = 0;
    let mut prev = order[0].0;
    for &(bits, i) in &order[1..] {
        if bits <= prev {
            prev += 1;
            values[i as usize] = f64::from_bits(prev);
            assert!(values[i as usize] < 1.0, "label nudged out of (0,1)");
            nudged += 1;
        } else {
            prev = bits;
        }
    }
    nudged
}

impl LabelField {
    /// Wraps explicit labels; they must lie in `(0,1)` and be pairwise distinct.
    pub fn from_values(spec: LatticeSpec, seed: u64, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Integrity(format!("label {v} outside (0,1)")));
        }
        let mut bits: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        bits.sort_unstable();
        if bits.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Integrity("labels are not pairwise distinct".into()));
        }
        Ok(Self { spec, seed, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, carrier: u32) -> f64 {
        self.values[carrier as usize]
    }

    /// Applies a strictly increasing map to every label.
    pub fn map_monotone(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { spec: self.spec, seed: self.seed, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Edge label of the triangular lattice: the larger and the smaller endpoint
/// label, compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeLexLabel {
    pub hi: f64,
    pub lo: f64,
}

impl EdgeLexLabel {
    pub fn new(a: f64, b: f64) -> Self {
        if a >= b {
            Self { hi: a, lo: b }
        } else {
            Self { hi: b, lo: a }
        }
    }
}

impl PartialOrd for EdgeLexLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.hi.total_cmp(&other.hi).then(self.lo.total_cmp(&other.lo)))
    }
}

/// Lexicographic label of the edge `(x, y)` on the triangular lattice.
pub fn edge_lex_label(geometry: &Geometry, labels: &LabelField, edge: (u32, u32)) -> Result<EdgeLexLabel> {
    if geometry.kind() != LatticeKind::TriangularSite {
        return Err(Error::Usage("square-bond edges carry their own labels".into()));
    }
    geometry.check_site(edge.0)?;
    geometry.check_site(edge.1)?;
    if geometry.edge_between(edge.0, edge.1).is_none() {
        return Err(Error::Usage(format!("sites {} and {} are not adjacent", edge.0, edge.1)));
    }
    Ok(EdgeLexLabel::new(labels.get(edge.0), labels.get(edge.1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationMode {
    Theoretical,
    Measured,
}

/// Width `r(eta)` of the near-critical window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mode: CalibrationMode,
    pub r_eta: f64,
    /// Estimated alternating four-arm probability to distance 1 (measured mode).
    pub alpha4: Option<f64>,
    pub samples: u64,
    pub hits: u64,
    /// Exact 95% binomial interval for `alpha4`.
    pub alpha4_interval: Option<(f64, f64)>,
}

impl Calibration {
    /// `r(eta) = eta^{3/4}`.
    pub fn theoretical(eta: f64) -> Self {
        Self {
            mode: CalibrationMode::Theoretical,
            r_eta: eta.powf(0.75),
            alpha4: None,
            samples: 0,
            hits: 0,
            alpha4_interval: None,
        }
    }

    /// Calibration with an explicit width, used for synthetic checks.
    pub fn fixed(r_eta: f64) -> Result<Self> {
        if !(r_eta.is_finite() && r_eta > 0.0) {
            return Err(Error::Config(format!("r(eta) = {r_eta} must be positive")));
        }
        Ok(Self { r_eta, ..Self::theoretical(1.0) })
    }
}

/// Estimates `alpha4(eta, 1)` by Monte Carlo at `p = 1/2` and sets
/// `r(eta) = eta^2 / alpha4`.
pub fn calibrate_r(geometry: &Geometry, samples: u64, seed: u64) -> Result<Calibration> {
    if 2.0 * geometry.half_side() < 2.0 {
        return Err(Error::Usage("measured calibration needs a domain of side at least 2".into()));
    }
    if geometry.kind() != LatticeKind::TriangularSite {
        return Err(Error::Usage("arm events are implemented for the triangular lattice".into()));
    }
    let template = arms::Annulus::new(geometry, 0, geometry.spec().n as usize)?;
    let hits: u64 = (0..samples)
        .into_par_iter()
        .map_init(
            || template.clone(),
            |ann, i| {
                ann.load(replica_seed(seed, i));
                u64::from(ann.alternating_static(4, P_C))
            },
        )
        .sum();
    if hits == 0 {
        return Err(Error::Calibration(format!(
            "no four-arm events in {samples} samples; increase the sample count"
        )));
    }
    let alpha = hits as f64 / samples as f64;
    let eta = geometry.eta();
    Ok(Calibration {
        mode: CalibrationMode::Measured,
        r_eta: eta * eta / alpha,
        alpha4: Some(alpha),
        samples,
        hits,
        alpha4_interval: Some(crate::stats::clopper_pearson(hits, samples)),
    })
}

/// `p(lambda) = 1/2 + (1 - exp(-lambda r))` for `lambda >= 0`, mirrored for
/// negative `lambda`, clamped to `[0, 1]`.
pub fn lambda_to_p(lambda: f64, cal: &Calibration) -> f64 {
    let x = lambda * cal.r_eta;
    let p = if x >= 0.0 { P_C - (-x).exp_m1() } else { P_C + x.exp_m1() };
    p.clamp(0.0, 1.0)
}

/// Inverse of [`lambda_to_p`] on `(0, 1)`.
pub fn p_to_lambda(p: f64, cal: &Calibration) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Infinite(p));
    }
    let x = if p >= P_C { -(-(p - P_C)).ln_1p() } else { (-(P_C - p)).ln_1p() };
    Ok(x / cal.r_eta)
}

/// Near-critical window `(lambda, lambda')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

impl Window {
    pub fn new(lambda_lo: f64, lambda_hi: f64) -> Result<Self> {
        if !(lambda_lo < lambda_hi) {
            return Err(Error::Config(format!("window needs lambda < lambda', got ({lambda_lo}, {lambda_hi})")));
        }
        Ok(Self { lambda_lo, lambda_hi })
    }
}

/// Read-only threshold view of a label field.
#[derive(Debug, Clone, Copy)]
pub struct ConfigView<'a> {
    pub labels: &'a LabelField,
    pub p: f64,
}

/// Configuration at threshold `p`: a carrier is open iff its label is at most `p`.
pub fn config_at(labels: &LabelField, p: f64) -> Result<ConfigView<'_>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Usage(format!("threshold {p} outside [0,1]")));
    }
    Ok(ConfigView { labels, p })
}

impl<'a> ConfigView<'a> {
    #[inline]
    pub fn carrier_open(&self, c: u32) -> bool {
        self.labels.get(c) <= self.p
    }

    /// Whether `site` takes part in the configuration: open on the
    /// triangular lattice, always present for bond percolation.
    #[inline]
    pub fn site_open(&self, site: u32) -> bool {
        match self.labels.spec.kind {
            LatticeKind::TriangularSite => self.carrier_open(site),
            LatticeKind::SquareBond => true,
        }
    }

    /// Open edge between adjacent sites `a` and `b` with edge id `e`.
    #[inline]
    pub fn edge_open(&self, e: u32, a: u32, b: u32) -> bool {
        match self.labels.spec.kind {
            LatticeKind::TriangularSite => self.carrier_open(a) && self.carrier_open(b),
            LatticeKind::SquareBond => self.carrier_open(e),
        }
    }

    pub fn open_count(&self) -> usize {
        self.labels.values.iter().filter(|&&v| v <= self.p).count()
    }
}
