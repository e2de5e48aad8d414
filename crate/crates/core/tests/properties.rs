mod common;

use proptest::prelude::*;
use sdpopf::casefile::{build_admittance, parse_case, CaseFormat};
use sdpopf::certify::{dimension_bound, lemma1_condition};
use sdpopf::hermitian::{frobenius_inner, HermitianMatrix, C64};
use sdpopf::relaxation::{build_sdp, injection, injection_matrices, BuildOptions, Constraint, ConstraintKind, RowLabel, SdpProblem};
use sdpopf::solver::{solve, SolveStatus, SolverConfig};

fn hermitian(n: usize) -> impl Strategy<Value = HermitianMatrix> {
    prop::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| HermitianMatrix::from_vec(n, &v).unwrap())
}

fn sized_hermitian() -> impl Strategy<Value = HermitianMatrix> {
    (1usize..7).prop_flat_map(hermitian)
}

fn pair() -> impl Strategy<Value = (HermitianMatrix, HermitianMatrix)> {
    (1usize..7).prop_flat_map(|n| (hermitian(n), hermitian(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vec_round_trip(a in sized_hermitian()) {
        let back = HermitianMatrix::from_vec(a.order(), &a.vec()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn scaled_vec_is_isometric((a, b) in pair()) {
        let dot: f64 = a.vec_scaled().iter().zip(b.vec_scaled()).map(|(x, y)| x * y).sum();
        let inner = frobenius_inner(&a, &b).unwrap();
        prop_assert!((dot - inner).abs() <= 1e-12 * (1.0 + a.frobenius_norm() * b.frobenius_norm()));
    }

    #[test]
    fn eig_reconstructs(a in sized_hermitian()) {
        let e = a.eig().unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((&e.reconstruct() - &a).frobenius_norm() <= 1e-10 * (1.0 + a.frobenius_norm()));
    }

    #[test]
    fn rank_of_gram_product(n in 2usize..6, r in 1usize..4, seed in prop::collection::vec(-1.0..1.0f64, 72)) {
        let r = r.min(n);
        let mut x = HermitianMatrix::zeros(n);
        for k in 0..r {
            let v: Vec<C64> = (0..n).map(|i| C64::new(seed[(k * n + i) % 72], seed[(k * n + i + 37) % 72])).collect();
            x.axpy(1.0, &HermitianMatrix::outer(&v));
        }
        let rank = x.numerical_rank(1e-9).unwrap();
        prop_assert!(rank <= r);
    }

    #[test]
    fn lemma1_is_counting(n in 1usize..200, m in 0usize..400, a in 0usize..400) {
        prop_assert_eq!(lemma1_condition(n, m, a), m + a >= 2 * n);
        prop_assert!(dimension_bound(n, m.min(n * n), 0, n));
    }

    /// `min C • X` over the unit-trace spectraplex equals `λ_min(C)`.
    #[test]
    fn spectraplex_minimum(c in (1usize..5).prop_flat_map(hermitian)) {
        let n = c.order();
        let row = Constraint {
            matrix: HermitianMatrix::identity(n),
            rhs: 1.0,
            kind: ConstraintKind::Equality,
            label: RowLabel::custom(),
        };
        let lmin = *c.eig().unwrap().values.last().unwrap();
        let sol = solve(&SdpProblem::new(c, vec![row]), &SolverConfig::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!((sol.primal_obj - lmin).abs() <= 1e-6 * (1.0 + lmin.abs()));
        prop_assert!(sol.primal_obj >= sol.dual_obj - 1e-6 * (1.0 + lmin.abs()));
    }

    /// For a rank-one `X = v v*` the relaxation's injection reproduces
    /// `v_i conj((Y v)_i)`.
    #[test]
    fn injection_matches_network(re in prop::collection::vec(0.9..1.1f64, 3), th in prop::collection::vec(-0.3..0.3f64, 3)) {
        let case = common::load("case3mesh.json");
        let y = build_admittance(&case).unwrap();
        let v: Vec<C64> = re.iter().zip(&th).map(|(m, t)| C64::from_polar(*m, *t)).collect();
        let x = HermitianMatrix::outer(&v);
        for i in 0..3 {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..3 {
                s += v[i] * (y[(i, j)] * v[j]).conj();
            }
            let got = injection(&injection_matrices(&y, i).unwrap(), &x);
            prop_assert!((got - s).norm() < 1e-12);
        }
    }
}

#[test]
fn builder_counts_on_corpus() {
    for (name, case) in common::corpus() {
        let p = build_sdp(&case, BuildOptions::default()).unwrap();
        let lower = 2 * (case.n() - case.n_g()) + case.n_v();
        assert!(p.m() >= lower, "{name}: m {} < {lower}", p.m());
        assert!(p.constraints[..p.m()].iter().all(|c| c.kind == ConstraintKind::Equality));
        let over = build_sdp(&case, BuildOptions { oversatisfaction: true, ..BuildOptions::default() }).unwrap();
        assert_eq!(over.m() + over.ell(), p.m() + p.ell(), "{name}");
    }
}

#[test]
fn matpower_and_json_agree() {
    let m = common::load("ieee14.m");
    let json = parse_case(&sdpopf::casefile::to_json(&m), CaseFormat::Json).unwrap();
    assert_eq!(json.n(), 14);
    assert_eq!(json.generators.len(), m.generators.len());
    let (ya, yb) = (build_admittance(&m).unwrap(), build_admittance(&json).unwrap());
    assert!((ya - yb).norm() < 1e-12);
    for i in 0..14 {
        assert!((m.demand(i) - json.demand(i)).norm() < 1e-12);
        assert_eq!(m.is_generator_bus(i), json.is_generator_bus(i));
    }
}
