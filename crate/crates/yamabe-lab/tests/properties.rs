use proptest::prelude::*;

use yamabe_lab::barriers::{case_negative, validate_barrier};
use yamabe_lab::geometry::{FactorSpec, FlatFrame, GeometrySpec, PotentialTerm, RadialGeometry};
use yamabe_lab::linalg::{bisection_smallest_eig, smallest_eig_generalized, solve_banded, solve_dense, BandedSystem, DenseMatrix};
use yamabe_lab::operators::{assemble, box_system, check_maximum_principle, quadratic_form};
use yamabe_lab::spectral::{first_eigen, yamabe_quotient};

fn tridiagonal() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0..1.0f64, n - 1),
            prop::collection::vec(2.5..4.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n - 1),
            prop::collection::vec(-1.0..1.0f64, n),
        )
    })
}

fn symmetric_pencil() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..=12)
        .prop_flat_map(|n| (prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), n), prop::collection::vec(0.2..3.0f64, n)))
}

fn random_geometry(coeffs: Vec<f64>, pot: f64, nodes: usize) -> RadialGeometry {
    GeometrySpec {
        n: 3,
        r0: 1.0,
        r1: 2.0,
        num_nodes: nodes,
        factor: FactorSpec::Fourier(coeffs),
        frame: FlatFrame { potential: vec![PotentialTerm::Const(pot)], h_inner: Some(0.7), h_outer: Some(0.4) },
    }
    .build()
    .unwrap()
}

/// −a v^{1−p} Δ_δ(v u) + (frame potential) v^{2−p} u + (c₀ − R_g) u, coded from the
/// conformal law rather than from the assembled form.
fn strong_by_covariance(g: &RadialGeometry, c0: &[f64], u: &[f64]) -> Vec<f64> {
    let h = g.step;
    let (a, p) = (g.dim.a, g.dim.p);
    let k = (g.dim.n - 1) as f64;
    let w: Vec<f64> = g.v.iter().zip(u).map(|(v, x)| v * x).collect();
    let mut out = vec![0.0; u.len()];
    for i in 1..u.len() - 1 {
        let lap = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (h * h) + k / g.nodes[i] * (w[i + 1] - w[i - 1]) / (2.0 * h);
        let vi = g.v[i];
        out[i] = vi.powf(1.0 - p) * (-a * lap + g.frame_potential[i] * w[i]) + (c0[i] - g.scalar[i]) * u[i];
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn banded_and_dense_solves_agree((sub, diag, sup, rhs) in tridiagonal()) {
        let sys = BandedSystem::new(sub, diag, sup).unwrap();
        let xb = solve_banded(&sys, &rhs).unwrap();
        let xd = solve_dense(&sys.to_dense(), &rhs).unwrap();
        for (b, d) in xb.iter().zip(&xd) {
            prop_assert!((b - d).abs() <= 1e-10);
        }
    }

    #[test]
    fn eigenvalue_matches_determinant_bisection((entries, mass) in symmetric_pencil()) {
        let n = mass.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (entries[i][j] + entries[j][i])).collect()).collect();
        let k = DenseMatrix::from_rows(&rows).unwrap();
        let (eta, phi) = smallest_eig_generalized(&k, &mass).unwrap();
        let oracle = bisection_smallest_eig(&k, &mass).unwrap();
        prop_assert!((eta - oracle).abs() <= 1e-8 * k.inf_norm().max(1.0), "{} vs {}", eta, oracle);
        let norm: f64 = phi.iter().zip(&mass).map(|(x, m)| m * x * x).sum();
        prop_assert!((norm - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn robin_eigenvector_is_positive(coeffs in prop::collection::vec(-0.4..0.4f64, 3), pot in -6.0..6.0f64) {
        let g = random_geometry(coeffs, pot, 61);
        let (_, phi) = first_eigen(&g).unwrap();
        prop_assert!(phi.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn quotient_is_scale_invariant(
        coeffs in prop::collection::vec(-0.3..0.3f64, 3),
        field in prop::collection::vec(0.1..2.0f64, 41),
        s in 0.01..100.0f64,
        tau in -1.0..0.0f64,
    ) {
        let g = random_geometry(coeffs, 0.5, 41);
        let q = yamabe_quotient(&g, tau, &field).unwrap();
        let scaled: Vec<f64> = field.iter().map(|x| s * x).collect();
        let qs = yamabe_quotient(&g, tau, &scaled).unwrap();
        prop_assert!((q - qs).abs() <= 1e-10 * q.abs().max(1.0));
    }

    #[test]
    fn maximum_principle_holds_on_solves(
        coeffs in prop::collection::vec(-0.3..0.3f64, 3),
        c0 in prop::collection::vec(0.0..3.0f64, 31),
        f in prop::collection::vec(0.0..1.0f64, 31),
        g0 in 0.0..1.0f64,
        g1 in 0.0..1.0f64,
    ) {
        let g = random_geometry(coeffs, 0.0, 31);
        let sys = assemble(&g, &c0, (0.5, 0.5)).unwrap();
        let w = sys.solve(&f, (g0, g1)).unwrap();
        let check = check_maximum_principle(&sys, &w);
        prop_assert!(check.applicable && check.holds, "{:?}", check);
        prop_assert!(w.iter().all(|&x| x >= -1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn form_and_strong_rows_agree_by_parts(amps in prop::collection::vec(-1.0..1.0f64, 4), coeffs in prop::collection::vec(-0.3..0.3f64, 3)) {
        // u vanishes on [1, 1.1] and [1.9, 2]; the mismatch must shrink like h²
        let field = |r: f64| {
            let t = (r - 1.1) / 0.8;
            if !(0.0..=1.0).contains(&t) {
                return 0.0;
            }
            let bump = (t * (1.0 - t)).powi(3);
            bump * amps.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * t).cos()).sum::<f64>()
        };
        let mut defects = Vec::new();
        for nodes in [401usize, 801] {
            let g = random_geometry(coeffs.clone(), -0.5, nodes);
            let sys = box_system(&g, 0.3).unwrap();
            let u: Vec<f64> = g.nodes.iter().map(|&r| field(r)).collect();
            let form = quadratic_form(&sys, &u);
            let strong = strong_by_covariance(&g, &sys.c0, &u);
            let by_parts: f64 = (0..nodes).map(|i| g.vol_weights[i] * u[i] * strong[i]).sum();
            defects.push((form - by_parts).abs() / form.abs().max(1e-12));
        }
        prop_assert!(defects[0] <= 1e-3, "{:?}", defects);
        prop_assert!(defects[1] <= defects[0] / 3.0 || defects[1] <= 1e-12, "{:?}", defects);
    }

    #[test]
    fn validator_rejects_perturbed_constants(zeta_up in 1.05..4.0f64, k_down in 0.2..0.95f64) {
        let g = GeometrySpec {
            n: 3,
            r0: 1.0,
            r1: 2.0,
            num_nodes: 201,
            factor: FactorSpec::Flat,
            frame: FlatFrame { potential: FlatFrame::parse_potential("gauss:-20,0.2,1.5").unwrap(), h_inner: Some(1.0), h_outer: Some(0.5) },
        }
        .build()
        .unwrap();
        let pair = case_negative(&g, None).unwrap();
        prop_assert!(validate_barrier(&g, &pair).is_ok());
        let mut bad = pair.clone();
        bad.zeta *= zeta_up;
        prop_assert!(validate_barrier(&g, &bad).is_err());
        let mut bad = pair.clone();
        bad.u_plus.iter_mut().for_each(|x| *x *= k_down);
        prop_assert!(validate_barrier(&g, &bad).is_err());
    }
}
