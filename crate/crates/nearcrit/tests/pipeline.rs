use nearcrit::ensemble::{config_at, lambda_to_p, replica_seed, sample_labels, Calibration, Window, P_C};
use nearcrit::forest::{clusters_at, invade, mst_kruskal, StopRule};
use nearcrit::geometry::{DomainKind, Geometry, LatticeKind, LatticeSpec};
use nearcrit::pivnet::{build_network, cutoff_forest, cutoff_invasion, find_important, giant, switches, InvasionTarget};
use nearcrit::stats::{compare_cutoff, degree_census, sample_point_pairs, sample_tuples};

fn torus(n: u32, m: f64) -> Geometry {
    Geometry::new(LatticeSpec::new(LatticeKind::TriangularSite, n, m, DomainKind::Torus)).unwrap()
}

#[test]
fn spanning_trees_on_every_lattice_kind() {
    for kind in [LatticeKind::TriangularSite, LatticeKind::SquareBond] {
        for domain in [DomainKind::Torus, DomainKind::Box] {
            let g = Geometry::new(LatticeSpec::new(kind, 16, 1.0, domain)).unwrap();
            let labels = sample_labels(&g, 3);
            let t = mst_kruskal(&g, &labels);
            assert_eq!(t.edges.len(), g.site_count() - 1);
            assert_eq!(t.components, 1);
            assert!(!t.forest_warning);
            let inv = invade(&g, &labels, 0, StopRule::FullSpanning).unwrap();
            let (mut a, mut b) = (inv.tree.edge_set(), t.edge_set());
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn mst_labels_bound_the_open_cluster_structure() {
    let g = torus(32, 1.0);
    let labels = sample_labels(&g, 12);
    let tree = mst_kruskal(&g, &labels);
    for p in [0.3, P_C, 0.7] {
        let clusters = clusters_at(&g, &config_at(&labels, p).unwrap());
        let open_sites = (0..g.site_count() as u32).filter(|&s| clusters.of(s).is_some()).count();
        let internal = tree.edge_labels.iter().filter(|&&l| l <= p).count();
        assert_eq!(internal + clusters.count(), open_sites, "p = {p}");
    }
}

#[test]
fn cutoff_stack_is_consistent() {
    let g = torus(128, 0.5);
    let cal = Calibration::theoretical(g.eta());
    let window = Window::new(-2.0, 2.0).unwrap();
    let labels = sample_labels(&g, replica_seed(4, 0));
    let config = config_at(&labels, lambda_to_p(window.lambda_lo, &cal)).unwrap();
    let important = find_important(&g, &config, 0.125).unwrap();
    let network = build_network(&g, &config, &important).unwrap();
    let events = switches(&labels, &important, window, &cal);
    assert!(events.len() <= important.len());
    let forest = cutoff_forest(&network, &g, &events, window.lambda_lo).unwrap();
    assert!(forest.edges.len() < network.routers.len().max(1));
    let gt = giant(&forest, &network, &g, 0.5).unwrap();
    if !gt.degenerate {
        assert_eq!(gt.edges.len() + 1, gt.routers.len());
    }
    let inv = cutoff_invasion(&g, &network, &forest, &gt, [0.0, 0.0], InvasionTarget::BoundaryBand, 0.5).unwrap();
    assert_eq!(inv.reached, inv.first_target_len.is_some());
    assert_eq!(inv.invaded.len(), inv.trace.len());
}

#[test]
fn comparison_is_reproducible() {
    let g = torus(128, 0.5);
    let cal = Calibration::theoretical(g.eta());
    let window = Window::new(-2.0, 2.0).unwrap();
    let labels = sample_labels(&g, 77);
    let tree = mst_kruskal(&g, &labels);
    let pts = sample_point_pairs(&g, 1, 8);
    let tuples = sample_tuples(&g, 2, 2, 3);
    let a = compare_cutoff(&g, &labels, &tree, 0.125, window, &cal, 0.5, &pts, &tuples, 3).unwrap();
    let b = compare_cutoff(&g, &labels, &tree, 0.125, window, &cal, 0.5, &pts, &tuples, 3).unwrap();
    assert_eq!(a.distances.len(), pts.len());
    assert!(a.distances.iter().all(|d| d.is_finite() && *d >= 0.0));
    assert_eq!(a.distances, b.distances);
    assert_eq!(a.switch_agreement, b.switch_agreement);
}

#[test]
fn census_counts_are_nested() {
    let g = torus(128, 0.5);
    let tree = mst_kruskal(&g, &sample_labels(&g, 5));
    let c = degree_census(&g, &tree, 0.0625, 0.25).unwrap();
    assert!(c.at_least.windows(2).all(|w| w[1] <= w[0]));
    assert!(c.figure_six <= c.boxes.len() as u64);
    assert!(c.boxes.iter().all(|b| b.groups.iter().sum::<u32>() == b.degree));
}
