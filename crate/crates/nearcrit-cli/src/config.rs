//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Lists are comma separated.
//! Every key is optional except where an experiment needs it; unknown keys
//! are rejected so that typos never silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nearcrit::geometry::{dyadic_exponent, DomainKind, LatticeKind, LatticeSpec};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Mst,
    Invade,
    Cutoff,
    CutoffInvade,
    Compare,
    Arms,
    Census,
    Dimension,
    Volume,
    Calibrate,
    Render,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Mst,
        Experiment::Invade,
        Experiment::Cutoff,
        Experiment::CutoffInvade,
        Experiment::Compare,
        Experiment::Arms,
        Experiment::Census,
        Experiment::Dimension,
        Experiment::Volume,
        Experiment::Calibrate,
        Experiment::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Mst => "mst",
            Experiment::Invade => "invade",
            Experiment::Cutoff => "cutoff",
            Experiment::CutoffInvade => "cutoff-invade",
            Experiment::Compare => "compare",
            Experiment::Arms => "arms",
            Experiment::Census => "census",
            Experiment::Dimension => "dimension",
            Experiment::Volume => "volume",
            Experiment::Calibrate => "calibrate",
            Experiment::Render => "render",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationChoice {
    Theoretical,
    Measured { samples: u64 },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopChoice {
    Full,
    Boundary,
    Target(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetChoice {
    BoundaryBand,
    Site([f64; 2]),
    Band([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderChoice {
    Mst,
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub lattice: LatticeSpec,
    pub seed: u64,
    pub replicas: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub calibration: CalibrationChoice,
    pub epsilon: Vec<f64>,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub rho: f64,
    pub r: Vec<f64>,
    pub zeta: f64,
    pub s: f64,
    pub start: Option<u32>,
    pub stop: StopChoice,
    pub target: TargetChoice,
    pub origin: [f64; 2],
    pub pairs: usize,
    pub tuples: usize,
    pub ell_max: usize,
    pub palette: String,
    pub radii: Vec<(f64, f64)>,
    pub render: RenderChoice,
    pub highlight: Option<([f64; 2], [f64; 2])>,
    pub save_snapshot: bool,
    #[serde(skip)]
    pub snapshot: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `experiment` on a 64-site-per-unit torus of half-side 1.
    pub fn defaults(experiment: Experiment) -> Self {
        Self {
            experiment,
            lattice: LatticeSpec::new(LatticeKind::TriangularSite, 64, 1.0, DomainKind::Torus),
            seed: 0,
            replicas: 1,
            out: PathBuf::from("out"),
            calibration: CalibrationChoice::Theoretical,
            epsilon: vec![0.2, 0.1, 0.05],
            lambda_lo: -2.0,
            lambda_hi: 2.0,
            rho: 0.25,
            r: vec![0.0625, 0.03125, 0.015625],
            zeta: 0.1,
            s: 0.5,
            start: None,
            stop: StopChoice::Full,
            target: TargetChoice::BoundaryBand,
            origin: [0.0, 0.0],
            pairs: 20,
            tuples: 4,
            ell_max: 3,
            palette: "OCOC".into(),
            radii: Vec::new(),
            render: RenderChoice::Mst,
            highlight: None,
            save_snapshot: false,
            snapshot: None,
        }
    }

    /// Parses the configuration text for `experiment`.
    pub fn parse(text: &str, experiment: Experiment) -> CliResult<Self> {
        let mut cfg = Self::defaults(experiment);
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno + 1).is_some() {
                return Err(CliError::Config(format!("line {}: key {key:?} given twice", lineno + 1)));
            }
            cfg.set(key, value).map_err(|e| CliError::Config(format!("line {}: {key}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "experiment" => {
                let e = Experiment::parse(v).map_err(|e| e.to_string())?;
                if e != self.experiment {
                    return Err(format!("file is for {}, command asked for {}", e.name(), self.experiment.name()));
                }
            }
            "lattice" => {
                self.lattice.kind = match v {
                    "triangular" => LatticeKind::TriangularSite,
                    "square" => LatticeKind::SquareBond,
                    _ => return Err(format!("expected triangular or square, got {v:?}")),
                }
            }
            "domain" => {
                self.lattice.domain = match v {
                    "torus" => DomainKind::Torus,
                    "box" => DomainKind::Box,
                    _ => return Err(format!("expected torus or box, got {v:?}")),
                }
            }
            "n" => self.lattice.n = num(v)?,
            "m" => self.lattice.m = num(v)?,
            "seed" => self.seed = num(v)?,
            "replicas" => self.replicas = num(v)?,
            "out" => self.out = PathBuf::from(v),
            "calibration" => {
                self.calibration = match v.split_once(':') {
                    None if v == "theoretical" => CalibrationChoice::Theoretical,
                    Some(("measured", n)) => CalibrationChoice::Measured { samples: num(n)? },
                    Some(("fixed", r)) => CalibrationChoice::Fixed(num(r)?),
                    _ => return Err(format!("expected theoretical, measured:<samples> or fixed:<r>, got {v:?}")),
                }
            }
            "epsilon" => self.epsilon = list(v)?,
            "lambda" => self.lambda_lo = num(v)?,
            "lambda_prime" => self.lambda_hi = num(v)?,
            "rho" => self.rho = num(v)?,
            "r" => self.r = list(v)?,
            "zeta" => self.zeta = num(v)?,
            "s" => self.s = num(v)?,
            "start" => self.start = Some(num(v)?),
            "stop" => {
                self.stop = match v.split_once(':') {
                    None if v == "full" => StopChoice::Full,
                    None if v == "boundary" => StopChoice::Boundary,
                    Some(("target", t)) => StopChoice::Target(num(t)?),
                    _ => return Err(format!("expected full, boundary or target:<site>, got {v:?}")),
                }
            }
            "target" => {
                self.target = match v.split_once(':') {
                    None if v == "boundary" => TargetChoice::BoundaryBand,
                    Some(("site", p)) => TargetChoice::Site(point(p)?),
                    Some(("band", p)) => TargetChoice::Band(point(p)?),
                    _ => return Err(format!("expected boundary, site:<x>/<y> or band:<x>/<y>, got {v:?}")),
                }
            }
            "origin" => self.origin = point(v)?,
            "pairs" => self.pairs = num(v)?,
            "tuples" => self.tuples = num(v)?,
            "ell_max" => self.ell_max = num(v)?,
            "palette" => self.palette = v.to_string(),
            "radii" => {
                self.radii = v
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| {
                        let (a, b) = t.split_once(':').ok_or_else(|| format!("expected r:R, got {t:?}"))?;
                        Ok((num(a)?, num(b)?))
                    })
                    .collect::<Result<_, String>>()?
            }
            "render" => {
                self.render = match v {
                    "mst" => RenderChoice::Mst,
                    "cutoff" => RenderChoice::Cutoff,
                    _ => return Err(format!("expected mst or cutoff, got {v:?}")),
                }
            }
            "highlight" => {
                let (a, b) = v.split_once(',').ok_or("expected <x>/<y>,<x>/<y>")?;
                self.highlight = Some((point(a)?, point(b)?));
            }
            "save_snapshot" => self.save_snapshot = num(v)?,
            "snapshot" => self.snapshot = Some(PathBuf::from(v)),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.lattice.side().map_err(|e| CliError::Config(e.to_string()))?;
        if self.replicas < 1 {
            return bad("replicas must be at least 1".into());
        }
        let half = self.lattice.m;
        let needs_scales = matches!(self.experiment, Experiment::Census | Experiment::Dimension | Experiment::Volume);
        if needs_scales {
            if dyadic_exponent(self.rho).is_err() || self.rho > 2.0 * half {
                return bad(format!("rho = {} must be dyadic and inside the domain", self.rho));
            }
            for &r in &self.r {
                if dyadic_exponent(r).is_err() || r > self.rho {
                    return bad(format!("r = {r} must be dyadic and at most rho"));
                }
            }
        }
        if matches!(self.experiment, Experiment::Census | Experiment::Dimension) && self.r.is_empty() {
            return bad("r must list at least one scale".into());
        }
        if matches!(self.experiment, Experiment::Cutoff | Experiment::CutoffInvade | Experiment::Compare) {
            if self.epsilon.is_empty() || self.epsilon.iter().any(|&e| !(e > 0.0 && 3.0 * e <= 2.0 * half)) {
                return bad("every epsilon must satisfy 0 < 3 epsilon <= 2M".into());
            }
            if !(self.lambda_lo < self.lambda_hi) {
                return bad("lambda must be below lambda_prime".into());
            }
            if !(self.s > 0.0) {
                return bad("s must be positive".into());
            }
        }
        if self.experiment == Experiment::Arms {
            if self.radii.is_empty() {
                return bad("arms needs radii".into());
            }
            if self.lambda_lo > self.lambda_hi {
                return bad("lambda must not exceed lambda_prime".into());
            }
            for &(r, big_r) in &self.radii {
                if !(0.0 <= r && r <= big_r && big_r <= half) {
                    return bad(format!("radii {r}:{big_r} must satisfy 0 <= r <= R <= M"));
                }
            }
        }
        if self.experiment == Experiment::Compare && !(2..=16).contains(&self.ell_max) {
            return bad("ell_max must lie in 2..=16".into());
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(num).collect()
}

fn point(v: &str) -> Result<[f64; 2], String> {
    let (x, y) = v.split_once('/').ok_or_else(|| format!("expected <x>/<y>, got {v:?}"))?;
    Ok([num(x)?, num(y)?])
}
