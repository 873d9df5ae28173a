use bloch_fem::assembly::{assemble_a, build_block_system, BasisKind, SourceTerms};
use bloch_fem::config::{ReferenceConfig, RunConfig};
use bloch_fem::experiment::{example_config, run_convergence, run_example, solve_config, Problem};
use bloch_fem::medium::{IndexGroup, LayerIndex, MediumModel};
use bloch_fem::oracle::run_oracle_check;
use bloch_fem::solver::{solve, SolverConfig, SolverMethod, SparseLu};
use bloch_fem::spectral::DtnSymbolTable;
use bloch_fem::Error;
use num_complex::Complex64;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn small(id: u8, n: usize, h: f64) -> Problem {
    Problem::new(&example_config(id, n, h, &RunConfig::default()).unwrap()).unwrap()
}

/// Lower layer removed; the upper layer of group 1 stays.
fn without_lower_layer(p: &mut Problem) {
    let (lower, upper) = IndexGroup::Group1.layers();
    let cfg = &p.config;
    p.medium = MediumModel::new(
        LayerIndex::zero(lower.period, lower.support),
        upper,
        cfg.k,
        cfg.copies,
        cfg.period,
        cfg.h1,
        cfg.decomposition(),
    )
    .unwrap();
}

#[test]
fn blocks_decouple_without_the_lower_layer() {
    let mut p = small(1, 3, 0.8);
    without_lower_layer(&mut p);
    let (system, _) = p.build_system().unwrap();
    assert!(system.coupling.is_zero());
    let (field, _) = solve(&system, &SolverConfig::default()).unwrap();
    let dual = p.grid.dual_period();
    for (j, &alpha) in p.grid.alphas.iter().enumerate() {
        let table = DtnSymbolTable::for_block(p.config.k, alpha, system.truncation, dual).unwrap();
        let a = assemble_a(
            &p.mesh,
            |x| p.medium.tilde_at(x[0], x[1]),
            p.config.k,
            alpha,
            &table,
            BasisKind::Modulated,
        )
        .unwrap();
        let mut x = system.rhs[j].clone();
        SparseLu::factor(&a).unwrap().solve_in_place(&mut x);
        assert!(diff(&field.blocks[j], &x) <= 1e-10 * norm(&x), "block {j}");
    }
}

#[test]
fn zero_data_gives_zero_field() {
    let p = small(3, 2, 0.8);
    let system = build_block_system(
        &p.mesh,
        &p.medium,
        &p.grid,
        BasisKind::Modulated,
        None,
        &SourceTerms::default(),
    )
    .unwrap();
    let (field, report) = solve(&system, &SolverConfig::default()).unwrap();
    assert!(field.blocks.iter().all(|b| b.iter().all(|z| *z == Complex64::new(0.0, 0.0))));
    assert_eq!(report.residual, 0.0);
}

#[test]
fn system_is_linear() {
    let p = small(1, 3, 0.8);
    let (system, _) = p.build_system().unwrap();
    let m = system.block_dofs();
    let x: Vec<Vec<Complex64>> = (0..3)
        .map(|j| (0..m).map(|i| Complex64::new((i * 7 + j) as f64 % 5.0, (i + 3 * j) as f64 % 3.0)).collect())
        .collect();
    let y: Vec<Vec<Complex64>> = (0..3)
        .map(|j| (0..m).map(|i| Complex64::new(((i + j) % 4) as f64, -(((i * j) % 6) as f64))).collect())
        .collect();
    let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
    let comb: Vec<Vec<Complex64>> = x
        .iter()
        .zip(&y)
        .map(|(u, v)| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect())
        .collect();
    let (ax, ay, ac) = (system.apply(&x).unwrap(), system.apply(&y).unwrap(), system.apply(&comb).unwrap());
    for j in 0..3 {
        let want: Vec<Complex64> = ax[j].iter().zip(&ay[j]).map(|(p, q)| a * p + b * q).collect();
        assert!(diff(&ac[j], &want) <= 1e-12 * norm(&want));
    }
}

#[test]
fn direct_and_iterative_agree() {
    for id in [1u8, 3] {
        let p = small(id, 1, 1.0);
        let (system, _) = p.build_system().unwrap();
        let direct = SolverConfig {
            method: SolverMethod::Direct,
            ..SolverConfig::default()
        };
        let iterative = SolverConfig {
            method: SolverMethod::Iterative,
            iterative_tolerance: 1e-12,
            ..SolverConfig::default()
        };
        let (a, _) = solve(&system, &direct).unwrap();
        let (b, rb) = solve(&system, &iterative).unwrap();
        assert!(rb.iterations > 0);
        let (num, den): (f64, f64) = a
            .blocks
            .iter()
            .zip(&b.blocks)
            .map(|(u, v)| (diff(u, v).powi(2), norm(u).powi(2)))
            .fold((0.0, 0.0), |s, t| (s.0 + t.0, s.1 + t.1));
        assert!((num / den).sqrt() <= 1e-8, "example {id}: {}", (num / den).sqrt());
    }
}

#[test]
fn oracle_with_zero_index() {
    let mut base = RunConfig::default();
    base.index_group = "empty".into();
    let mut cfg = example_config(1, 2, 0.8, &base).unwrap();
    cfg.index_group = "empty".into();
    let cmp = run_oracle_check(&Problem::new(&cfg).unwrap()).unwrap();
    assert!(cmp.difference <= 1e-10, "{}", cmp.difference);
    assert!(cmp.counts_match());
}

#[test]
fn oracle_counts_and_agreement_small() {
    for id in [1u8, 3, 5] {
        let cmp = run_oracle_check(&small(id, 3, 0.8)).unwrap();
        assert!(cmp.difference <= 1e-8, "example {id}: {}", cmp.difference);
        assert!(cmp.counts_match());
        assert_eq!(cmp.bloch_formula, 5 * cmp.block_dofs as u64);
        assert_eq!(cmp.supercell_formula, 9 * cmp.block_dofs as u64);
    }
}

#[test]
fn homogeneous_single_copy_is_a_finite_row() {
    let mut base = RunConfig::default();
    base.index_group = "empty".into();
    let mut cfg = example_config(1, 1, 0.64, &base).unwrap();
    cfg.index_group = "empty".into();
    let out = solve_config(&cfg).unwrap();
    assert!(out.report.residual < 1e-10);
    let row = run_example(1, 1, 0.64, &RunConfig::default(), None).unwrap();
    assert!(row.relative_error.is_finite() && row.relative_error >= 0.0);
}

#[test]
fn incident_example_with_explicit_reference() {
    let base = RunConfig {
        reference: Some(ReferenceConfig { copies: 4, h: 0.4 }),
        ..RunConfig::default()
    };
    let row = run_example(5, 2, 0.8, &base, None).unwrap();
    assert!(row.relative_error > 0.0 && row.relative_error < 1.0, "{row:?}");
}

#[test]
fn sweeps_need_three_values_on_an_axis() {
    let err = run_convergence(1, &[2], &[0.8], &RunConfig::default()).unwrap_err();
    assert!(matches!(err.root(), Error::InsufficientPoints { .. }));
    let err = run_convergence(1, &[2, 4], &[0.8], &RunConfig::default()).unwrap_err();
    assert!(matches!(err.root(), Error::InsufficientPoints { .. }));
}

#[test]
fn sweep_rows_are_ordered_and_unique() {
    let t = run_convergence(1, &[3, 1, 2], &[1.0], &RunConfig::default()).unwrap();
    let keys: Vec<(usize, f64)> = t.rows.iter().map(|r| (r.copies, r.h)).collect();
    assert_eq!(keys, vec![(1, 1.0), (2, 1.0), (3, 1.0)]);
    assert!(t.rate_n.is_some() && t.rate_h.is_none());
}

#[test]
fn direct_solves_are_bit_reproducible() {
    let cfg = example_config(3, 2, 0.8, &RunConfig::default()).unwrap();
    let a = solve_config(&cfg).unwrap();
    let b = solve_config(&cfg).unwrap();
    assert_eq!(a.field.blocks, b.field.blocks);
}
