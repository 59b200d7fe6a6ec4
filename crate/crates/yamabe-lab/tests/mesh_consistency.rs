use yamabe_lab::geometry::{FactorSpec, FlatFrame, GeometrySpec};
use yamabe_lab::solver::solve_negative;

fn negative(nodes: usize) -> GeometrySpec {
    GeometrySpec {
        n: 3,
        r0: 1.0,
        r1: 2.0,
        num_nodes: nodes,
        factor: FactorSpec::Flat,
        frame: FlatFrame { potential: FlatFrame::parse_potential("gauss:-20,0.2,1.5").unwrap(), h_inner: Some(1.0), h_outer: Some(0.5) },
    }
}

#[test]
fn negative_solutions_refine_at_second_order() {
    let levels = [251usize, 501, 1001, 2001];
    let sols: Vec<(Vec<f64>, f64)> = levels
        .iter()
        .map(|&n| {
            let g = negative(n).build().unwrap();
            let (pair, _, rep) = solve_negative(&g, Some(-1.2), 1e-10, 20000).unwrap();
            assert!(rep.converged);
            (rep.solution, pair.zeta)
        })
        .collect();
    let gaps: Vec<f64> = sols.windows(2).map(|w| (0..w[0].0.len()).fold(0.0f64, |m, i| m.max((w[0].0[i] - w[1].0[2 * i]).abs()))).collect();
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 1.0, "ratio {ratio}, gaps {gaps:?}");
    }
}
