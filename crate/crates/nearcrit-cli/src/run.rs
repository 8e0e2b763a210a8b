//! Experiment orchestration and reporting.
//!
//! Every experiment maps `(config, replica index)` to a block of CSV rows
//! plus a small JSON record; replicas run on the rayon pool and are merged
//! in index order, so the artifacts do not depend on scheduling.

use std::path::{Path, PathBuf};

use nearcrit::ensemble::{calibrate_r, config_at, lambda_to_p, replica_seed, sample_labels, Calibration, LabelField, Window, P_C};
use nearcrit::forest::{invade, mst_kruskal, StopRule};
use nearcrit::geometry::Geometry;
use nearcrit::pivnet::{build_network, cutoff_forest, cutoff_invasion, find_important, giant, switches, InvasionTarget};
use nearcrit::stats::{
    arm_exponent, arm_probability, census_with, cluster_volume_law, compare_cutoff, minkowski_fit, sample_point_pairs,
    sample_tuples, stability_ratio, ArmSpec, BoxCountCurve, BranchIndex,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CalibrationChoice, Experiment, RenderChoice, RunConfig, StopChoice, TargetChoice};
use crate::error::{CliError, CliResult};
use crate::snapshot::{load_snapshot, save_snapshot};
use crate::svg::{render_cutoff, render_spanning};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Everything a run writes, before it touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: String,
    pub summary: Value,
    pub svg: Option<String>,
    pub complete: bool,
}

/// Column names of `results.csv` for each experiment.
pub fn csv_header(e: Experiment) -> &'static [&'static str] {
    match e {
        Experiment::Mst => &["replica", "seed", "sites", "tree_edges", "components", "label_sum", "max_label", "leaves"],
        Experiment::Invade => &["replica", "seed", "start", "stop", "invaded_edges", "max_label", "matches_kruskal"],
        Experiment::Cutoff => &[
            "replica",
            "seed",
            "epsilon",
            "important",
            "switch_events",
            "routers",
            "forest_edges",
            "components",
            "giant",
            "giant_routers",
            "giant_edges",
        ],
        Experiment::CutoffInvade => &["replica", "seed", "epsilon", "giant", "origin", "invaded_edges", "first_target_len", "reached"],
        Experiment::Compare => &[
            "replica",
            "seed",
            "epsilon",
            "giant",
            "pairs",
            "mean_distance",
            "switch_pairs",
            "switch_agreement",
            "d_omega_upper",
            "d_omega_lower",
            "shape_mismatches",
        ],
        Experiment::Arms => &["r", "big_r", "samples", "hits", "frequency", "ci_lo", "ci_hi", "critical_hits", "ratio", "ratio_lo", "ratio_hi"],
        Experiment::Census => &["replica", "seed", "r", "rho", "boxes", "deg_ge2", "deg_ge3", "deg_ge4", "deg_ge5", "deg_ge6", "pinching", "figure_six"],
        Experiment::Dimension => &["replica", "seed", "r", "rho", "trunk_boxes"],
        Experiment::Volume => &["replica", "seed", "cluster", "volume", "diameter", "ratio", "pass"],
        Experiment::Calibrate => &["mode", "r_eta", "alpha4", "samples", "hits", "alpha4_lo", "alpha4_hi"],
        Experiment::Render => &["replica", "seed", "tree", "elements"],
    }
}

type Row = Vec<String>;

fn cell<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Replica {
    rows: Vec<Row>,
    record: Value,
}

struct Context<'a> {
    cfg: &'a RunConfig,
    geometry: Geometry,
    calibration: Calibration,
    preset: Option<LabelField>,
}

impl Context<'_> {
    fn labels(&self, i: u64) -> LabelField {
        match &self.preset {
            Some(f) => f.clone(),
            None => sample_labels(&self.geometry, self.seed(i)),
        }
    }

    fn seed(&self, i: u64) -> u64 {
        match &self.preset {
            Some(f) => f.seed,
            None => replica_seed(self.cfg.seed, i),
        }
    }

    fn window(&self) -> CliResult<Window> {
        Ok(Window::new(self.cfg.lambda_lo, self.cfg.lambda_hi)?)
    }
}

fn resolve_calibration(cfg: &RunConfig, geometry: &Geometry) -> CliResult<Calibration> {
    Ok(match cfg.calibration {
        CalibrationChoice::Theoretical => Calibration::theoretical(geometry.eta()),
        CalibrationChoice::Fixed(r) => Calibration::fixed(r)?,
        CalibrationChoice::Measured { samples } => calibrate_r(geometry, samples, replica_seed(cfg.seed, u64::MAX))?,
    })
}

fn target(t: TargetChoice) -> InvasionTarget {
    match t {
        TargetChoice::BoundaryBand => InvasionTarget::BoundaryBand,
        TargetChoice::Site(p) => InvasionTarget::Site(p),
        TargetChoice::Band(p) => InvasionTarget::Band(p),
    }
}

fn replica(ctx: &Context, i: u64) -> CliResult<Replica> {
    let cfg = ctx.cfg;
    let g = &ctx.geometry;
    let seed = ctx.seed(i);
    let labels = ctx.labels(i);
    let mut rows = Vec::new();
    let record = match cfg.experiment {
        Experiment::Mst => {
            let t = mst_kruskal(g, &labels);
            let sum: f64 = t.edge_labels.iter().sum();
            let max = t.edge_labels.iter().copied().fold(0.0, f64::max);
            let leaves = (0..g.site_count() as u32).filter(|&v| t.degree(v) == 1).count();
            rows.push(vec![cell(i), cell(seed), cell(g.site_count()), cell(t.edges.len()), cell(t.components), cell(sum), cell(max), cell(leaves)]);
            json!({ "tree_edges": t.edges.len(), "label_sum": sum })
        }
        Experiment::Invade => {
            let start = cfg.start.unwrap_or_else(|| g.nearest_site([0.0, 0.0]));
            let stop = match cfg.stop {
                StopChoice::Full => StopRule::FullSpanning,
                StopChoice::Boundary => StopRule::Boundary,
                StopChoice::Target(t) => StopRule::Target(t),
            };
            let inv = invade(g, &labels, start, stop)?;
            let max = inv.trace.iter().copied().fold(0.0, f64::max);
            let matches = (stop == StopRule::FullSpanning).then(|| inv.tree.edge_set() == mst_kruskal(g, &labels).edge_set());
            let stop_name = match cfg.stop {
                StopChoice::Full => "full".to_string(),
                StopChoice::Boundary => "boundary".to_string(),
                StopChoice::Target(t) => format!("target:{t}"),
            };
            rows.push(vec![cell(i), cell(seed), cell(start), stop_name, cell(inv.trace.len()), cell(max), opt(matches)]);
            json!({ "invaded_edges": inv.trace.len(), "matches_kruskal": matches })
        }
        Experiment::Cutoff | Experiment::CutoffInvade => {
            let window = ctx.window()?;
            let config = config_at(&labels, lambda_to_p(window.lambda_lo, &ctx.calibration))?;
            let mut per = Vec::new();
            for &eps in &cfg.epsilon {
                let important = find_important(g, &config, eps)?;
                let network = build_network(g, &config, &important)?;
                let events = switches(&labels, &important, window, &ctx.calibration);
                let forest = cutoff_forest(&network, g, &events, window.lambda_lo)?;
                let gt = giant(&forest, &network, g, cfg.s)?;
                if cfg.experiment == Experiment::Cutoff {
                    rows.push(vec![
                        cell(i),
                        cell(seed),
                        cell(eps),
                        cell(important.len()),
                        cell(events.len()),
                        cell(network.routers.len()),
                        cell(forest.edges.len()),
                        cell(forest.component_count()),
                        cell(!gt.degenerate),
                        cell(gt.routers.len()),
                        cell(gt.edges.len()),
                    ]);
                    per.push(json!({ "epsilon": eps, "giant": !gt.degenerate, "routers": network.routers.len() }));
                } else {
                    let inv = cutoff_invasion(g, &network, &forest, &gt, cfg.origin, target(cfg.target), cfg.s)?;
                    rows.push(vec![
                        cell(i),
                        cell(seed),
                        cell(eps),
                        cell(!gt.degenerate),
                        opt(inv.origin),
                        cell(inv.invaded.len()),
                        opt(inv.first_target_len),
                        cell(inv.reached),
                    ]);
                    per.push(json!({ "epsilon": eps, "giant": !gt.degenerate, "reached": inv.reached }));
                }
            }
            Value::Array(per)
        }
        Experiment::Compare => {
            let window = ctx.window()?;
            let tree = mst_kruskal(g, &labels);
            let points = sample_point_pairs(g, replica_seed(seed, 1), cfg.pairs);
            let tuples = sample_tuples(g, replica_seed(seed, 2), cfg.tuples, cfg.ell_max);
            let mut per = Vec::new();
            for &eps in &cfg.epsilon {
                let c = compare_cutoff(g, &labels, &tree, eps, window, &ctx.calibration, cfg.s, &points, &tuples, cfg.ell_max)?;
                rows.push(vec![
                    cell(i),
                    cell(seed),
                    cell(eps),
                    cell(c.giant),
                    cell(c.distances.len()),
                    cell(c.mean_distance()),
                    cell(c.switch_agreement.len()),
                    opt(c.agreement_fraction()),
                    opt(c.omega.map(|o| o.upper)),
                    opt(c.omega.map(|o| o.lower)),
                    opt(c.omega.map(|o| o.shape_mismatches)),
                ]);
                let agree = c.switch_agreement.iter().filter(|&&a| a).count();
                per.push(json!({
                    "epsilon": eps,
                    "giant": c.giant,
                    "mean_distance": c.mean_distance(),
                    "switch_pairs": c.switch_agreement.len(),
                    "switch_agree": agree,
                }));
            }
            Value::Array(per)
        }
        Experiment::Census | Experiment::Dimension => {
            let tree = mst_kruskal(g, &labels);
            let index = BranchIndex::new(g, &tree);
            let mut per = Vec::new();
            for &r in &cfg.r {
                let c = census_with(g, &tree, &index, r, cfg.rho, (0, 0))?;
                if cfg.experiment == Experiment::Census {
                    let mut row = vec![cell(i), cell(seed), cell(r), cell(cfg.rho), cell(c.boxes.len())];
                    row.extend(c.at_least.iter().map(|&n| cell(n)));
                    row.extend([cell(c.pinching), cell(c.figure_six)]);
                    rows.push(row);
                    per.push(json!({ "r": r, "at_least": c.at_least, "pinching": c.pinching, "figure_six": c.figure_six }));
                } else {
                    rows.push(vec![cell(i), cell(seed), cell(r), cell(cfg.rho), cell(c.trunk_count())]);
                    per.push(json!({ "r": r, "trunk_boxes": c.trunk_count() }));
                }
            }
            Value::Array(per)
        }
        Experiment::Volume => {
            let config = config_at(&labels, P_C)?;
            let rep = cluster_volume_law(g, &config, cfg.rho, cfg.zeta, None)?;
            for (k, &(v, d, ratio)) in rep.clusters.iter().enumerate() {
                rows.push(vec![cell(i), cell(seed), cell(k), cell(v), cell(d), cell(ratio), cell(ratio >= 1.0)]);
            }
            let passed = rep.clusters.iter().filter(|c| c.2 >= 1.0).count();
            json!({ "clusters": rep.clusters.len(), "passed": passed, "min_ratio": rep.min_ratio })
        }
        Experiment::Render => {
            let (name, svg) = render_replica(ctx, &labels)?;
            let elements = crate::svg::count_elements(&svg, "line") + crate::svg::count_elements(&svg, "polyline");
            rows.push(vec![cell(i), cell(seed), name.to_string(), cell(elements)]);
            json!({ "svg": svg })
        }
        Experiment::Arms | Experiment::Calibrate => unreachable!("aggregate experiments have no replica loop"),
    };
    Ok(Replica { rows, record })
}

fn render_replica(ctx: &Context, labels: &LabelField) -> CliResult<(&'static str, String)> {
    let cfg = ctx.cfg;
    let g = &ctx.geometry;
    Ok(match cfg.render {
        RenderChoice::Mst => {
            let tree = mst_kruskal(g, labels);
            let path = match cfg.highlight {
                Some((a, b)) => Some(tree.path_sites(g.nearest_site(a), g.nearest_site(b))?),
                None => None,
            };
            ("mst", render_spanning(g, &tree, path.as_deref()))
        }
        RenderChoice::Cutoff => {
            let window = ctx.window()?;
            let eps = *cfg.epsilon.last().ok_or_else(|| CliError::Config("render = cutoff needs epsilon".into()))?;
            let config = config_at(labels, lambda_to_p(window.lambda_lo, &ctx.calibration))?;
            let important = find_important(g, &config, eps)?;
            let network = build_network(g, &config, &important)?;
            let events = switches(labels, &important, window, &ctx.calibration);
            let forest = cutoff_forest(&network, g, &events, window.lambda_lo)?;
            let gt = giant(&forest, &network, g, cfg.s)?;
            ("cutoff", render_cutoff(g, &network, &forest, &gt)?)
        }
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(cfg: &RunConfig, records: &[(u64, Value)]) -> Value {
    let get = |v: &Value, k: &str| v.get(k).and_then(Value::as_f64);
    match cfg.experiment {
        Experiment::Compare => {
            let per_eps: Vec<Value> = cfg
                .epsilon
                .iter()
                .enumerate()
                .map(|(k, &eps)| {
                    let rs: Vec<&Value> = records.iter().map(|(_, r)| &r[k]).collect();
                    let d: Vec<f64> = rs.iter().filter_map(|r| get(r, "mean_distance")).collect();
                    let pairs: f64 = rs.iter().filter_map(|r| get(r, "switch_pairs")).sum();
                    let agree: f64 = rs.iter().filter_map(|r| get(r, "switch_agree")).sum();
                    let giants = rs.iter().filter(|r| r["giant"].as_bool() == Some(true)).count();
                    json!({
                        "epsilon": eps,
                        "mean_path_distance": mean(&d),
                        "giant_replicas": giants,
                        "switch_pairs": pairs,
                        "switch_agreement": (pairs > 0.0).then(|| agree / pairs),
                    })
                })
                .collect();
            let means: Vec<f64> = per_eps.iter().filter_map(|v| get(v, "mean_path_distance")).collect();
            let non_increasing = means.len() == cfg.epsilon.len() && means.windows(2).all(|w| w[1] <= w[0]);
            json!({ "per_epsilon": per_eps, "distance_non_increasing": non_increasing })
        }
        Experiment::Dimension => {
            let slopes: Vec<f64> = records
                .iter()
                .filter_map(|(_, r)| {
                    let counts = r.as_array()?.iter().map(|x| Some((get(x, "r")?, get(x, "trunk_boxes")?))).collect::<Option<Vec<_>>>()?;
                    minkowski_fit(&BoxCountCurve { rho: cfg.rho, counts }).ok().map(|f| f.slope)
                })
                .collect();
            let mean_counts: Vec<(f64, f64)> = cfg
                .r
                .iter()
                .enumerate()
                .map(|(k, &r)| (r, mean(&records.iter().filter_map(|(_, v)| get(&v[k], "trunk_boxes")).collect::<Vec<_>>()).unwrap_or(0.0)))
                .collect();
            let fit = minkowski_fit(&BoxCountCurve { rho: cfg.rho, counts: mean_counts.clone() }).ok();
            json!({
                "replica_slopes": slopes,
                "mean_replica_slope": mean(&slopes),
                "mean_counts": mean_counts,
                "slope_of_mean_counts": fit.map(|f| f.slope),
                "slope_stderr": fit.map(|f| f.stderr),
            })
        }
        Experiment::Census => {
            let per_r: Vec<Value> = cfg
                .r
                .iter()
                .enumerate()
                .map(|(k, &r)| {
                    let pinch: Vec<f64> = records.iter().filter_map(|(_, v)| get(&v[k], "pinching")).collect();
                    let zero5 = records.iter().filter(|(_, v)| v[k]["at_least"][3].as_u64() == Some(0)).count();
                    json!({ "r": r, "mean_pinching": mean(&pinch), "replicas_without_degree_5": zero5 })
                })
                .collect();
            json!({ "per_r": per_r })
        }
        Experiment::Volume => {
            let total: f64 = records.iter().filter_map(|(_, r)| get(r, "clusters")).sum();
            let passed: f64 = records.iter().filter_map(|(_, r)| get(r, "passed")).sum();
            let ok = records.iter().filter(|(_, r)| get(r, "clusters") == get(r, "passed")).count();
            json!({
                "qualifying_clusters": total,
                "pass_fraction": (total > 0.0).then(|| passed / total),
                "replicas_all_pass": ok,
            })
        }
        Experiment::Mst => {
            let sums: Vec<f64> = records.iter().filter_map(|(_, r)| get(r, "label_sum")).collect();
            json!({ "mean_label_sum": mean(&sums) })
        }
        Experiment::Invade => {
            let m = records.iter().filter(|(_, r)| r["matches_kruskal"].as_bool() == Some(true)).count();
            json!({ "matches_kruskal": m })
        }
        Experiment::Cutoff | Experiment::CutoffInvade => {
            let per_eps: Vec<Value> = cfg
                .epsilon
                .iter()
                .enumerate()
                .map(|(k, &eps)| {
                    let giants = records.iter().filter(|(_, r)| r[k]["giant"].as_bool() == Some(true)).count();
                    json!({ "epsilon": eps, "giant_replicas": giants })
                })
                .collect();
            json!({ "per_epsilon": per_eps })
        }
        Experiment::Render | Experiment::Arms | Experiment::Calibrate => Value::Null,
    }
}

fn arms(ctx: &Context) -> CliResult<(Vec<Row>, Value)> {
    let cfg = ctx.cfg;
    let spec = ArmSpec {
        palette: cfg.palette.clone(),
        radii: cfg.radii.clone(),
        lambda_lo: cfg.lambda_lo,
        lambda_hi: cfg.lambda_hi,
        samples: cfg.replicas,
    };
    let est = arm_probability(&spec, &ctx.geometry, &ctx.calibration, cfg.seed)?;
    let ratios = if cfg.lambda_lo < cfg.lambda_hi { Some(stability_ratio(&spec, &ctx.geometry, &ctx.calibration, cfg.seed)?) } else { None };
    let mut rows = Vec::new();
    for (k, p) in est.points.iter().enumerate() {
        let rp = ratios.as_ref().map(|r| &r[k]);
        rows.push(vec![
            cell(p.r),
            cell(p.big_r),
            cell(p.samples),
            cell(p.hits),
            cell(p.frequency),
            cell(p.interval.0),
            cell(p.interval.1),
            opt(rp.map(|r| r.critical_hits)),
            opt(rp.and_then(|r| r.ratio)),
            opt(rp.and_then(|r| r.interval).map(|i| i.0)),
            opt(rp.and_then(|r| r.interval).map(|i| i.1)),
        ]);
    }
    let fit = arm_exponent(&est, ctx.geometry.eta()).ok();
    let finite: Vec<f64> = ratios.iter().flatten().filter_map(|r| r.ratio).collect();
    let spread = (!finite.is_empty() && ratios.iter().flatten().all(|r| r.ratio.is_some()))
        .then(|| finite.iter().copied().fold(f64::MIN, f64::max) / finite.iter().copied().fold(f64::MAX, f64::min));
    Ok((
        rows,
        json!({
            "exponent": fit.map(|f| f.slope),
            "exponent_stderr": fit.map(|f| f.stderr),
            "ratio_max_over_min": spread,
            "unbounded_ratios": ratios.iter().flatten().filter(|r| r.ratio.is_none()).count(),
        }),
    ))
}

fn to_csv(header: &[&str], rows: &[Row]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Computes all artifacts of a run without writing anything.
pub fn execute(cfg: &RunConfig) -> CliResult<Artifacts> {
    cfg.validate()?;
    let geometry = Geometry::new(cfg.lattice)?;
    let calibration = resolve_calibration(cfg, &geometry)?;
    let preset = match &cfg.snapshot {
        Some(p) => {
            let f = load_snapshot(p)?;
            if f.spec != cfg.lattice {
                return Err(CliError::Config("snapshot lattice differs from the configured lattice".into()));
            }
            if cfg.replicas != 1 {
                return Err(CliError::Config("a snapshot run has exactly one replica".into()));
            }
            Some(f)
        }
        None => None,
    };
    let ctx = Context { cfg, geometry, calibration, preset };
    let header = csv_header(cfg.experiment);
    let mut summary = json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "calibration": { "r_eta": ctx.calibration.r_eta, "mode": format!("{:?}", ctx.calibration.mode) },
    });
    let (rows, aggregates, complete, failures, svg) = match cfg.experiment {
        Experiment::Arms => {
            let (rows, agg) = arms(&ctx)?;
            (rows, agg, true, Vec::new(), None)
        }
        Experiment::Calibrate => {
            let c = &ctx.calibration;
            let row = vec![
                format!("{:?}", c.mode),
                cell(c.r_eta),
                opt(c.alpha4),
                cell(c.samples),
                cell(c.hits),
                opt(c.alpha4_interval.map(|i| i.0)),
                opt(c.alpha4_interval.map(|i| i.1)),
            ];
            (vec![row], json!({ "r_eta": c.r_eta, "alpha4": c.alpha4, "alpha4_interval": c.alpha4_interval }), true, Vec::new(), None)
        }
        _ => {
            let results: Vec<(u64, CliResult<Replica>)> = (0..cfg.replicas).into_par_iter().map(|i| (i, replica(&ctx, i))).collect();
            let mut rows = Vec::new();
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let mut svg = None;
            for (i, r) in results {
                match r {
                    Ok(mut rep) => {
                        rows.extend(rep.rows);
                        if cfg.experiment == Experiment::Render {
                            if svg.is_none() {
                                svg = rep.record["svg"].as_str().map(str::to_string);
                            }
                            rep.record = Value::Null;
                        }
                        records.push((i, rep.record));
                    }
                    Err(e) => failures.push(json!({ "replica": i, "kind": e.kind(), "error": e.to_string() })),
                }
            }
            let agg = aggregate(cfg, &records);
            (rows, agg, failures.is_empty(), failures, svg)
        }
    };
    summary["replicas"] = json!(cfg.replicas);
    summary["complete"] = json!(complete);
    summary["failures"] = Value::Array(failures);
    summary["aggregates"] = aggregates;
    Ok(Artifacts { csv: to_csv(header, &rows), summary, svg, complete })
}

/// Files written by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub complete: bool,
}

/// Runs the experiment and writes `results.csv`, `summary.json`, the
/// `run.json` sidecar with the wall-clock timestamp, and `tree.svg` or a
/// label snapshot when requested.
pub fn run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let art = execute(cfg)?;
    let dir = &cfg.out;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), &art.csv)?;
    let mut summary = serde_json::to_string_pretty(&art.summary).expect("json values serialise");
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    if let Some(svg) = &art.svg {
        std::fs::write(dir.join("tree.svg"), svg)?;
    }
    if cfg.save_snapshot {
        let geometry = Geometry::new(cfg.lattice)?;
        let labels = match &cfg.snapshot {
            Some(p) => load_snapshot(p)?,
            None => sample_labels(&geometry, replica_seed(cfg.seed, 0)),
        };
        save_snapshot(&labels, &dir.join("replica-0.ncpt"))?;
    }
    write_sidecar(dir)?;
    Ok(RunOutcome { dir: dir.clone(), complete: art.complete })
}

fn write_sidecar(dir: &Path) -> CliResult<()> {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let body = json!({ "finished_unix_seconds": secs, "version": env!("CARGO_PKG_VERSION") });
    std::fs::write(dir.join("run.json"), format!("{body}\n"))?;
    Ok(())
}
