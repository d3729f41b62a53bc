//! Randomized checks of the structural invariants across modules.

use femq::assembly::{assemble_gram, assemble_stiffness, BilinearForm};
use femq::budget::{measure_sobolev, reconstruction_error, split_budget, SignedErrors, SobolevData};
use femq::lower_bounds::{bump_f0, hybrid_experiment, BlackBoxPair};
use femq::mesh::{build_interval_mesh, build_square_triangulation, BasisSpec, Mesh};
use femq::poly::{Polynomial, Polynomial2};
use femq::problem::ProblemSpec;
use femq::quantum::{build_r_state, grover_rudolph_prepare, input_error_propagation, Statevector, TreeWeights};
use femq::resources::{pipeline_exponents, Exponent, Pipeline};
use femq::solver::{conjugate_gradient_with, CgConfig};
use femq::sparse::{dense_condition_number, dense_solve, dense_symmetric_eigenvalues, CsrMatrix};
use proptest::prelude::{prop, prop_assert, prop_assert_eq, prop_assume, proptest, Just, ProptestConfig, Strategy};

fn mesh(d: usize, n: usize) -> Mesh {
    if d == 1 {
        build_interval_mesh(n).unwrap()
    } else {
        build_square_triangulation(n).unwrap()
    }
}

/// `(d, n, k)` with k = 1 in 2D.
fn discretisation() -> impl Strategy<Value = (usize, usize, usize)> {
    prop::bool::ANY.prop_flat_map(|two_d| {
        if two_d {
            (Just(2usize), 1usize..7, Just(1usize)).boxed()
        } else {
            (Just(1usize), 1usize..24, 1usize..=3).boxed()
        }
    })
}

fn form() -> impl Strategy<Value = BilinearForm> {
    (0.1f64..5.0, 0.0f64..5.0).prop_map(|(a, c)| BilinearForm::new(a, c).unwrap())
}

fn quadratic_form(m: &CsrMatrix, v: &[f64]) -> f64 {
    v.iter().zip(m.matvec(v)).map(|(a, b)| a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nodal_shapes_sum_to_one((d, n, k) in discretisation(), x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let m = mesh(d, n);
        let spec = BasisSpec::new(&m, k).unwrap();
        let point: Vec<f64> = if d == 1 { vec![x] } else { vec![x, y] };
        let total: f64 = (0..spec.node_count()).map(|node| spec.eval_node_shape(&m, node, &point).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn supports_are_small((d, n, k) in discretisation()) {
        let m = mesh(d, n);
        let spec = BasisSpec::new(&m, k).unwrap();
        let cap = if d == 1 { k + 1 } else { 6 };
        prop_assert!(spec.support_map.iter().all(|s| !s.is_empty() && s.len() <= cap));
    }

    #[test]
    fn refinement_halves_h(n in 1usize..5000) {
        prop_assert_eq!(build_interval_mesh(2 * n).unwrap().h, build_interval_mesh(n).unwrap().h / 2.0);
    }

    #[test]
    fn stiffness_is_symmetric_psd_and_matches_the_energy(
        (d, n, k) in discretisation(),
        form in form(),
        coeffs in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let m = mesh(d, n);
        let spec = BasisSpec::new(&m, k).unwrap();
        let a = assemble_stiffness(&m, &spec, &form).unwrap();
        prop_assert!(a.is_symmetric(0.0));
        if a.n() > 0 {
            let smallest = dense_symmetric_eigenvalues(&a).into_iter().fold(f64::INFINITY, f64::min);
            prop_assert!(smallest >= -1e-12);
        }
        // v^T M v = diffusion |v|_1^2 + reaction ||v||^2, computed elementwise without the assembler.
        let v = &coeffs[..a.n()];
        let energy = form.diffusion * measure_sobolev(&m, &spec, v, 1).unwrap().powi(2)
            + form.reaction * measure_sobolev(&m, &spec, v, 0).unwrap().powi(2);
        let q = quadratic_form(&a, v);
        prop_assert!((q - energy).abs() <= 1e-10 * energy.max(1.0), "{q} vs {energy}");
    }

    #[test]
    fn gram_norm_bounded_by_sparsity((d, n, k) in discretisation(), coeffs in prop::collection::vec(-1.0f64..1.0, 200)) {
        let m = mesh(d, n);
        let spec = BasisSpec::new(&m, k).unwrap();
        let w = assemble_gram(&m, &spec).unwrap();
        prop_assume!(w.n() > 0);
        let norm = dense_symmetric_eigenvalues(&w).into_iter().fold(0.0, f64::max);
        prop_assert!(norm <= w.max_row_nnz() as f64 * w.max_abs() * (1.0 + 1e-12));
        let v = &coeffs[..w.n()];
        let l2 = measure_sobolev(&m, &spec, v, 0).unwrap();
        prop_assert!((quadratic_form(&w, v) - l2 * l2).abs() <= 1e-12 * (l2 * l2).max(1.0));
    }

    #[test]
    fn cg_energy_error_never_increases(n in 2usize..80, form in form(), rhs in prop::collection::vec(-1.0f64..1.0, 80)) {
        let m = mesh(1, n);
        let spec = BasisSpec::new(&m, 1).unwrap();
        let a = assemble_stiffness(&m, &spec, &form).unwrap();
        let b = &rhs[..a.n()];
        prop_assume!(b.iter().any(|v| *v != 0.0));
        let exact = dense_solve(&a, b).unwrap();
        let config = CgConfig { record_iterates: true, ..CgConfig::new(1e-12) };
        let report = conjugate_gradient_with(&a, b, None, &config).unwrap();
        let errors: Vec<f64> = report
            .iterates
            .iter()
            .map(|x| {
                let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
                quadratic_form(&a, &e).max(0.0).sqrt()
            })
            .collect();
        let scale = quadratic_form(&a, &exact).sqrt();
        for pair in errors.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * scale, "{errors:?}");
        }
        let again = conjugate_gradient_with(&a, b, None, &config).unwrap();
        prop_assert_eq!(again.iterates, report.iterates);
    }

    #[test]
    fn exact_weight_oracles_prepare_the_state(values in prop::collection::vec(-2.0f64..2.0, 1..=1024)) {
        prop_assume!(values.iter().any(|v| v.abs() > 1e-6));
        let oracle = TreeWeights::from_vector(&values).unwrap();
        let n_qubits = femq::quantum::qubits_for(values.len());
        let prepared = grover_rudolph_prepare(&oracle, n_qubits).unwrap();
        let target = Statevector::from_vector(&values).unwrap();
        prop_assert!(prepared.fidelity(&target).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn rescaling_identity_holds(
        n in 2usize..30,
        k in 1usize..=3,
        f in prop::collection::vec(-2.0f64..2.0, 1..4),
        r in prop::collection::vec(-2.0f64..2.0, 1..4),
    ) {
        let spec = ProblemSpec::poisson_1d(k, Polynomial::new(f), Polynomial::new(r.clone()), 0.01);
        let disc = spec.discretize(n).unwrap();
        let u = dense_solve(&disc.matrix, &disc.rhs).unwrap();
        let u_norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(u_norm > 1e-8);
        let Ok((r_state, alpha)) = build_r_state(&disc.mesh, &disc.spec, &Polynomial::new(r.clone())) else {
            return Ok(());
        };
        let overlap: f64 = u.iter().zip(r_state.active_amplitudes()).map(|(a, b)| a / u_norm * b).sum();
        let direct = disc.functional(&u, &Polynomial::new(r)).unwrap();
        prop_assert!((alpha * u_norm * overlap - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn input_error_stays_within_twice_eps_kappa(
        n in 2usize..24,
        form in form(),
        size in -6.0f64..-1.0,
        dir in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let m = mesh(1, n);
        let spec = BasisSpec::new(&m, 1).unwrap();
        let a = assemble_stiffness(&m, &spec, &form).unwrap();
        let (b, _) = build_r_state(&m, &spec, &Polynomial::constant(1.0)).unwrap();
        let dir = &dir[..a.n()];
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(len > 1e-3);
        let e: Vec<f64> = dir.iter().map(|v| v / len * 10f64.powf(size)).collect();
        let kappa = dense_condition_number(&a).unwrap();
        let p = input_error_propagation(&a, &b, &e, kappa).unwrap();
        prop_assert!(p.distance <= p.bound, "{p:?}");
    }

    #[test]
    fn budget_split_closes(
        eps_frac in 0.001f64..1.0,
        seminorms in prop::collection::vec(0.01f64..10.0, 3),
        alpha in 0.01f64..10.0,
        u_tilde in 0.01f64..10.0,
        r_norm in 0.01f64..10.0,
        signs in prop::collection::vec(-1.0f64..=1.0, 4),
        u_dot_r_frac in -1.0f64..=1.0,
    ) {
        let sobolev = SobolevData::new(seminorms).unwrap();
        let eps = eps_frac * sobolev.l2_norm;
        let b = split_budget(eps, &sobolev, alpha, u_tilde, r_norm).unwrap();
        prop_assert!(b.eps_d > 0.0 && b.eps_n > 0.0 && b.eps_l > 0.0 && b.eps_out > 0.0);
        // Any admissible signed errors reconstruct R within eps ||r||.
        let errors = SignedErrors {
            discretisation: signs[0] * r_norm * b.eps_d,
            norm: signs[1] * b.eps_n,
            solver: signs[2] * b.eps_l,
            measurement: signs[3] * b.eps_out,
        };
        let u_dot_r = u_dot_r_frac * sobolev.l2_norm * r_norm;
        let err = reconstruction_error(errors, u_dot_r, u_tilde, alpha);
        prop_assert!(err.abs() <= eps * r_norm * (1.0 + 1e-12), "{err} > {}", eps * r_norm);
    }

    #[test]
    fn hybrid_bound_and_norm_identity(
        n_qubits in 1usize..6,
        uses in 1usize..10,
        separation in 0.001f64..0.5,
        seed in 0u64..1000,
    ) {
        let pair = BlackBoxPair::random(n_qubits.max(2), separation, uses, seed).unwrap();
        let out = hybrid_experiment(&pair, 20, seed).unwrap();
        prop_assert!((out.completion_gap - out.separation).abs() <= 1e-12);
        prop_assert!(out.operator_gap <= std::f64::consts::SQRT_2 * out.separation * (1.0 + 1e-12));
        prop_assert!(out.exact_probability <= out.bound + 1e-12);
        for u in &pair.interleaving {
            let defect = (u.transpose() * u - nalgebra::DMatrix::identity(u.nrows(), u.ncols())).abs().max();
            prop_assert!(defect <= 1e-12);
        }
    }

    #[test]
    fn bump_vanishes_outside_its_cell(n in 1usize..200, x in 0.0f64..=1.0) {
        let v = bump_f0(n, x);
        if x <= 0.0 || x >= 1.0 / n as f64 {
            prop_assert_eq!(v, 0.0);
        } else {
            prop_assert!(v > 0.0 && v <= (n as f64).sqrt() * (-1.0f64).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn problem_spec_round_trips(
        k in 1usize..=3,
        f in prop::collection::vec(-5.0f64..5.0, 1..5),
        r in prop::collection::vec(-5.0f64..5.0, 1..5),
        eps in 1e-6f64..1.0,
        seed in 0u64..u64::MAX,
        two_d in prop::bool::ANY,
    ) {
        let mut spec = if two_d {
            ProblemSpec::poisson_2d(Polynomial2::new(vec![f]), Polynomial2::new(vec![r]), eps)
        } else {
            ProblemSpec::poisson_1d(k, Polynomial::new(f), Polynomial::new(r), eps)
        };
        spec.seed = seed;
        let text = spec.to_json();
        let back = ProblemSpec::from_json(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.to_json(), text);
    }
}

#[test]
fn exponent_table_monotonicity_and_closed_forms() {
    for d in 1..=4usize {
        for k in 1..=3usize {
            let (di, k1) = (d as i64, k as i64 + 1);
            assert_eq!(pipeline_exponents(Pipeline::Classical, d, k), vec![Exponent::new(di + 1, k1)]);
            assert_eq!(pipeline_exponents(Pipeline::ClassicalPrecond, d, k), vec![Exponent::new(di, k1)]);
            assert_eq!(
                pipeline_exponents(Pipeline::Quantum, d, k),
                vec![Exponent::new(k1 + 4, k1), Exponent::new(k1 + 2, k1)]
            );
            assert_eq!(pipeline_exponents(Pipeline::QuantumPrecond, d, k), vec![Exponent::integer(1)]);
            if k > 1 {
                assert!(pipeline_exponents(Pipeline::Classical, d, k) <= pipeline_exponents(Pipeline::Classical, d, k - 1));
            }
            if d > 1 {
                assert!(pipeline_exponents(Pipeline::Classical, d, k) >= pipeline_exponents(Pipeline::Classical, d - 1, k));
            }
        }
    }
}
