use std::path::Path;

use num_complex::Complex64;

use tpms_cpia::constraints::{t_matrix, SurfaceKind};
use tpms_cpia::sampler_io::{
    default_bonnet, diamond_second_patch, export_grid_mesh, export_mesh, load_grid, sample_grid_at,
    sample_patch, save_grid, weierstrass_point, DataGrid, IntegrationPath, PatchSpec,
};
use tpms_cpia::weierstrass::{branch_radius, default_domain, Domain};
use tpms_cpia::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn zero_length_path_gives_the_origin() {
    let p = weierstrass_point(c(0.0, 0.0), 0.0, IntegrationPath::Straight).unwrap();
    assert_eq!(p, [0.0, 0.0, 0.0]);
}

#[test]
fn integrated_points_match_high_precision_quadrature() {
    // 30-digit adaptive quadrature along the same straight path
    let tau = c(0.2, 0.1);
    let cases = [
        (0.0, [0.19882334665434428, -0.10422756607386721, 0.029726745378966761]),
        (
            std::f64::consts::FRAC_PI_2,
            [-0.096900878816108352, -0.20010144570704347, -0.040098138750269983],
        ),
        (0.66347, [0.096968119451440017, -0.20535008791809578, -0.0012741037654770905]),
    ];
    for (angle, want) in cases {
        let got = weierstrass_point(tau, angle, IntegrationPath::Straight).unwrap();
        for k in 0..3 {
            assert!(
                (got[k] - want[k]).abs() < 1e-10,
                "angle {angle} component {k}: {} vs {}",
                got[k],
                want[k]
            );
        }
    }
}

#[test]
fn integration_is_path_independent() {
    for tau in [c(0.25, -0.2), c(-0.1, 0.28), c(0.3, 0.3)] {
        let straight = weierstrass_point(tau, 0.3, IntegrationPath::Straight).unwrap();
        let axes = weierstrass_point(tau, 0.3, IntegrationPath::Axes).unwrap();
        for k in 0..3 {
            assert!(
                (straight[k] - axes[k]).abs() < 1e-7,
                "tau {tau} component {k}: {} vs {}",
                straight[k],
                axes[k]
            );
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    let spec = PatchSpec {
        surface: SurfaceKind::SchwarzP,
        domain: default_domain(),
        bonnet_angle: default_bonnet(SurfaceKind::SchwarzP),
        samples: (5, 4),
    };
    let a = sample_patch(&spec).unwrap();
    let b = sample_patch(&spec).unwrap();
    assert_eq!(a.dims(), (6, 5));
    assert_eq!(a, b);
    for (p, q) in a.points().iter().zip(b.points().iter()) {
        for k in 0..4 {
            assert_eq!(p[k].to_bits(), q[k].to_bits());
        }
    }
}

#[test]
fn patch_spec_validation() {
    let mut spec = PatchSpec {
        surface: SurfaceKind::Gyroid,
        domain: default_domain(),
        bonnet_angle: 0.0,
        samples: (1, 4),
    };
    assert!(matches!(sample_patch(&spec), Err(Error::InvalidDimensions { .. })));
    spec.samples = (4, 4);
    spec.domain = Domain::square(0.52).unwrap();
    assert!(matches!(sample_patch(&spec), Err(Error::DomainContainsBranchPoint { .. })));
    // clear of the branch points themselves, but reaching past their radius
    spec.domain = Domain::new(0.4, 0.5, 0.4, 0.5).unwrap();
    assert!(matches!(sample_patch(&spec), Err(Error::DomainContainsBranchPoint { .. })));
    assert!(branch_radius() < 0.52);
}

#[test]
fn grid_sites_must_be_unit_interval() {
    let us = [0.0, 0.5, 1.2];
    let vs = [0.0, 0.5, 1.0];
    assert!(matches!(
        sample_grid_at(&default_domain(), 0.0, &us, &vs),
        Err(Error::ParamOutOfRange { .. })
    ));
    assert!(matches!(
        sample_grid_at(&default_domain(), 0.0, &[0.5], &vs),
        Err(Error::InvalidDimensions { .. })
    ));
}

#[test]
fn csv_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PatchSpec {
        surface: SurfaceKind::Diamond,
        domain: default_domain(),
        bonnet_angle: 0.0,
        samples: (3, 5),
    };
    let grid = sample_patch(&spec).unwrap();
    let first = dir.path().join("grid.csv");
    let second = dir.path().join("again.csv");
    save_grid(&grid, &first).unwrap();
    let loaded = load_grid(&first).unwrap();
    assert_eq!(loaded.dims(), grid.dims());
    save_grid(&loaded, &second).unwrap();
    let a = std::fs::read(&first).unwrap();
    let b = std::fs::read(&second).unwrap();
    assert_eq!(a, b);
    for (p, q) in grid.points().iter().zip(loaded.points().iter()) {
        for k in 0..4 {
            assert_eq!(p[k].to_bits(), q[k].to_bits(), "coordinate drift through CSV");
        }
    }
}

#[test]
fn loader_reports_missing_cells_and_bad_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.csv");

    let mut body = String::from("i,j,x,y,z\n");
    for i in 0..3 {
        for j in 0..3 {
            if (i, j) != (1, 1) {
                body.push_str(&format!("{i},{j},0.0,0.0,0.0\n"));
            }
        }
    }
    std::fs::write(&path, &body).unwrap();
    assert!(matches!(load_grid(&path), Err(Error::MissingSample { i: 1, j: 1 })));

    std::fs::write(&path, "i,j,x,y,z\n0,0,0.0,oops,0.0\n").unwrap();
    match load_grid(&path) {
        Err(Error::ParseError { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }

    std::fs::write(&path, "a,b,c\n").unwrap();
    assert!(matches!(load_grid(&path), Err(Error::ParseError { line: 1, .. })));

    std::fs::write(&path, "i,j,x,y,z\n0,0,1.0,2.0\n").unwrap();
    assert!(matches!(load_grid(&path), Err(Error::ParseError { line: 2, .. })));

    assert!(matches!(load_grid(Path::new("/nonexistent/grid.csv")), Err(Error::Io(_))));
}

#[test]
fn mesh_export_triangulates_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("patch.obj");

    let points = vec![
        [0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0, 1.0],
        [1.0, 1.0, 0.5, 1.0],
    ];
    let params = vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
    let grid = DataGrid::new(2, 2, points, params).unwrap();
    export_grid_mesh(&grid, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let vs: Vec<&str> = text.lines().filter(|l| l.starts_with("v ")).collect();
    let fs: Vec<&str> = text.lines().filter(|l| l.starts_with("f ")).collect();
    assert_eq!(vs.len(), 4);
    assert_eq!(fs, vec!["f 1 3 2", "f 2 3 4"]);

    let spec = PatchSpec {
        surface: SurfaceKind::Gyroid,
        domain: default_domain(),
        bonnet_angle: default_bonnet(SurfaceKind::Gyroid),
        samples: (4, 6),
    };
    let grid = sample_patch(&spec).unwrap();
    export_grid_mesh(&grid, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let v_count = text.lines().filter(|l| l.starts_with("v ")).count();
    let f_count = text.lines().filter(|l| l.starts_with("f ")).count();
    assert_eq!(v_count, 5 * 7);
    assert_eq!(f_count, 2 * 4 * 6);
}

#[test]
fn mesh_export_rejects_degenerate_grids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.obj");
    let m = nalgebra::DMatrix::from_fn(3, 4, |_, c| if c == 3 { 1.0 } else { 0.0 });
    assert!(matches!(
        export_mesh(&m, (3, 1), &path),
        Err(Error::InvalidDimensions { .. })
    ));
    let ok = nalgebra::DMatrix::from_fn(4, 4, |_, c| if c == 3 { 1.0 } else { 0.0 });
    assert!(matches!(
        export_mesh(&ok, (2, 3), &path),
        Err(Error::InvalidDimensions { .. })
    ));
    assert!(matches!(
        export_mesh(&ok, (2, 2), Path::new("/nonexistent/dir/mesh.obj")),
        Err(Error::Io(_))
    ));
}

#[test]
fn rotation_defaults_per_family() {
    assert_eq!(default_bonnet(SurfaceKind::Diamond), 0.0);
    assert_eq!(default_bonnet(SurfaceKind::SchwarzP), std::f64::consts::FRAC_PI_2);
    assert!((default_bonnet(SurfaceKind::Gyroid) - 0.66347).abs() < 1e-12);
}

#[test]
fn second_patch_is_the_transformed_first_patch() {
    let spec = PatchSpec {
        surface: SurfaceKind::Diamond,
        domain: default_domain(),
        bonnet_angle: 0.0,
        samples: (3, 3),
    };
    let first = sample_patch(&spec).unwrap();
    let second = diamond_second_patch(&first).unwrap();
    assert_eq!(second.dims(), first.dims());
    assert_eq!(second.params(), first.params());
    let t = t_matrix(SurfaceKind::Diamond, 1).unwrap();
    for (p, q) in first.points().iter().zip(second.points().iter()) {
        let want = t.act_on_point([p[0], p[1], p[2]]);
        for k in 0..3 {
            assert!((q[k] - want[k]).abs() < 1e-15);
        }
        assert_eq!(q[3], 1.0);
    }
}

#[test]
fn grid_constructor_validates_shape_and_finiteness() {
    let pts = vec![[0.0, 0.0, 0.0, 1.0]; 5];
    let prm = vec![(0.0, 0.0); 5];
    assert!(matches!(DataGrid::new(2, 3, pts, prm), Err(Error::InvalidDimensions { .. })));
    let bad = vec![[f64::NAN, 0.0, 0.0, 1.0]];
    assert!(matches!(
        DataGrid::new(1, 1, bad, vec![(0.0, 0.0)]),
        Err(Error::InvalidDimensions { .. })
    ));
}
