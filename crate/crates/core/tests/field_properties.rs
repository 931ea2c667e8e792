use homcarl_core::*;

fn spec(n: usize, depth: usize, assignment: Assignment) -> CoefficientSpec {
    CoefficientSpec {
        n,
        x_extent: 1.0,
        depth,
        schedule: EpsilonSchedule::new(ScheduleMode::Constant, 3.0, 1.0),
        assignment,
        a_inf: AInfinity::Matrix {
            matrix: SymMat::identity(n + 1).to_full(),
        },
        lower: 0.25,
        upper: 1.0,
    }
}

#[test]
fn assembled_field_is_elliptic_and_deterministic() {
    let mut lib = CorrectorLibrary::new();
    for (label, seed) in [("a", 1), ("b", 2)] {
        let t = PeriodicTemplate::random_checkerboard(label, 2, 3, 0.25, 1.0, seed).unwrap();
        lib.insert(label.into(), solve_cell(&t, 24).unwrap());
    }
    let s = spec(
        1,
        2,
        Assignment::Alternating {
            even: "a".into(),
            odd: "b".into(),
        },
    );
    let g = make_grid(GridSpec::strip(1, 1.0, 2.0, 128, 256)).unwrap();
    let a = assemble_a(&s, &g, &lib).unwrap();
    assert!(a
        .values()
        .iter()
        .all(|m| m.min_eigenvalue() >= 0.25 - 1e-12));
    assert_eq!(a.values(), assemble_a(&s, &g, &lib).unwrap().values());
    let abar = assemble_abar(&s, &g, &lib).unwrap();
    assert!(abar
        .values()
        .iter()
        .all(|m| m.min_eigenvalue() >= 0.25 - 1e-12));
}

#[test]
fn three_dimensional_layout_partitions_slabs() {
    let layout = whitney_decompose(2, 1.0, 3).unwrap();
    for g in 1..=3 {
        let k = -g;
        let vol: f64 = layout
            .generation(k)
            .iter()
            .map(|b| b.region().volume())
            .sum();
        assert_eq!(vol, (k as f64).exp2());
    }
    let t = PeriodicTemplate::identity("id", 3);
    let mut lib = CorrectorLibrary::new();
    lib.insert("id".into(), solve_cell(&t, 4).unwrap());
    let s = spec(
        2,
        1,
        Assignment::Single {
            template: "id".into(),
        },
    );
    let g = make_grid(GridSpec::strip(2, 1.0, 2.0, 32, 64)).unwrap();
    let a = assemble_a(&s, &g, &lib).unwrap();
    assert!(a.values().iter().all(|m| *m == SymMat::identity(3)));
}
