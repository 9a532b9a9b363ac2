use approx::assert_relative_eq;
use fve2l::conservation::SolutionField;
use fve2l::mesh::{DualTopology, Mesh};
use fve2l::poly::Poly2;
use fve2l::quadrature::{rule_on_triangle, triangle_rule};
use fve2l::refelem::{classify, dual_region, eval_test, eval_trial, node_coordinates, BasisSet, Region, SchemeOrder};
use fve2l::solver::condition_number;
use fve2l::sparse::CsrMatrix;
use fve2l::stability::{table_parameters, theta_min, trial_to_test_matrix};
use fve2l::verify::{interpolate, polynomial_problem, solve_problem};
use proptest::prelude::*;

fn order_strategy() -> impl Strategy<Value = SchemeOrder> {
    prop::sample::select(SchemeOrder::ALL.to_vec())
}

/// Point strictly inside the reference triangle.
fn reference_point() -> impl Strategy<Value = [f64; 2]> {
    (0.001f64..0.999, 0.001f64..0.999).prop_map(|(s, t)| {
        let (s, t) = if s + t < 1.0 { (s, t) } else { (1.0 - s, 1.0 - t) };
        [0.998 * s, 0.998 * t]
    })
}

/// Perturbs interior vertices of a structured mesh by up to `jitter` cell widths.
fn jittered_mesh(n: usize, jitter: f64, seed: &[f64]) -> Mesh {
    let base = Mesh::build_structured(n, [0.0, 1.0, 0.0, 1.0]).unwrap();
    let h = 1.0 / n as f64;
    let mut vertices = base.vertices.clone();
    for (i, v) in vertices.iter_mut().enumerate() {
        if base.markers[i] == 0 {
            v[0] += jitter * h * seed[(2 * i) % seed.len()];
            v[1] += jitter * h * seed[(2 * i + 1) % seed.len()];
        }
    }
    Mesh::new(vertices, base.triangles.clone(), base.markers.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trial_basis_partition_of_unity(order in order_strategy(), p in reference_point()) {
        let (values, gradients) = eval_trial(order, p).unwrap();
        prop_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let gx: f64 = gradients.iter().map(|g| g[0]).sum();
        let gy: f64 = gradients.iter().map(|g| g[1]).sum();
        prop_assert!(gx.abs() < 1e-10 && gy.abs() < 1e-10);
    }

    #[test]
    fn trial_basis_reproduces_linear_functions(order in order_strategy(), p in reference_point()) {
        let nodes = node_coordinates(order).nodes;
        let (values, _) = eval_trial(order, p).unwrap();
        let x: f64 = values.iter().zip(&nodes).map(|(v, q)| v * q[0]).sum();
        let y: f64 = values.iter().zip(&nodes).map(|(v, q)| v * q[1]).sum();
        prop_assert!((x - p[0]).abs() < 1e-12 && (y - p[1]).abs() < 1e-12);
    }

    #[test]
    fn first_layer_test_partition_of_unity(order in order_strategy(), p in reference_point()) {
        let region = classify(p);
        let total: f64 = BasisSet::get(order).test_on_region(region, p).iter().map(|t| t.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-13);
        let values = eval_test(order, p).unwrap();
        prop_assert_eq!(values.len(), order.local_dofs());
    }

    #[test]
    fn shared_test_functions_continuous(order in order_strategy(), t in 0.0f64..1.0) {
        let basis = BasisSet::get(order);
        let regions = [Region::Q1, Region::Q2, Region::Q3];
        for (i, &r) in regions.iter().enumerate() {
            for &s in &regions[i + 1..] {
                let here = dual_region(r).interior_segments();
                let there = dual_region(s).interior_segments();
                let shared = here.iter().find(|(a, b)| there.iter().any(|(c, d)| (a == d && b == c) || (a == c && b == d)));
                let Some(&(a, b)) = shared else { continue };
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                let left = basis.test_on_region(r, p);
                let right = basis.test_on_region(s, p);
                for (j, v, _) in &left {
                    if let Some((_, w, _)) = right.iter().find(|q| q.0 == *j) {
                        prop_assert!((v - w).abs() < 1e-13, "node {} between {:?} and {:?}", j, r, s);
                    }
                }
            }
        }
    }

    #[test]
    fn trial_to_test_row_sums(order in order_strategy(), raw in prop::collection::vec(-3.0f64..3.0, 17)) {
        let (a0, b0, _) = table_parameters(order);
        let a = raw[..a0.len()].to_vec();
        let b = raw[a0.len()..a0.len() + b0.len()].to_vec();
        let m = trial_to_test_matrix(order, &a, &b).unwrap().matrix;
        for r in 0..m.nrows() {
            let want = if r < 3 * order.k() { 1.0 } else { 0.0 };
            prop_assert!((m.row(r).sum() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_min_is_an_angle(r1 in 0.05f64..4.0, r2 in 0.05f64..4.0) {
        if let Ok(t) = theta_min(r1, r2) {
            prop_assert!((0.0..=180.0).contains(&t));
            // Law of cosines with sides 1, sqrt(r1), sqrt(r2).
            let c = t.to_radians().cos();
            prop_assert!((r2 - (1.0 + r1 - 2.0 * r1.sqrt() * c)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_doubling_agrees_on_polynomials(
        a in (-2.0f64..2.0, -2.0f64..2.0),
        b in (-2.0f64..2.0, -2.0f64..2.0),
        c in (-2.0f64..2.0, -2.0f64..2.0),
        degree in 1usize..12,
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let (a, b, c) = ([a.0, a.1], [b.0, b.1], [c.0, c.1]);
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
        prop_assume!(area > 1e-2);
        // Degree-`degree` integrand: both rules are exact on it.
        let f = |p: [f64; 2]| {
            let l = coeffs[0] + coeffs[1] * p[0] + coeffs[2] * p[1];
            l.powi(degree as i32 - 1) * (coeffs[3] + p[0] - p[1])
        };
        let coarse = rule_on_triangle(a, b, c, degree).unwrap().integrate(f);
        let fine = rule_on_triangle(a, b, c, 2 * degree).unwrap().integrate(f);
        let scale = rule_on_triangle(a, b, c, 2 * degree).unwrap().integrate(|p| f(p).abs());
        prop_assert!((coarse - fine).abs() <= 1e-12 * scale.max(area));
    }

    #[test]
    fn quadrature_exact_on_monomials(i in 0usize..7, j in 0usize..7) {
        prop_assume!(i + j <= 12);
        let rule = triangle_rule(12).unwrap();
        let got = rule.integrate(|p| p[0].powi(i as i32) * p[1].powi(j as i32));
        // int x^i y^j over the reference triangle = i! j! / (i + j + 2)!
        let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
        let want = fact(i) * fact(j) / fact(i + j + 2);
        prop_assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn condition_number_scale_invariant(
        entries in prop::collection::vec(-0.3f64..0.3, 25),
        scale in 1e-3f64..1e3,
    ) {
        let n = 5;
        let mut triplets = Vec::new();
        for r in 0..n {
            triplets.push((r, r, 3.0));
            for c in 0..n {
                if r != c {
                    triplets.push((r, c, entries[r * n + c]));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &triplets);
        let k1 = condition_number(&a).unwrap().kappa;
        let k2 = condition_number(&a.scaled(scale)).unwrap().kappa;
        prop_assert!((k1 - k2).abs() <= 1e-8 * k1);
        prop_assert!(k1 >= 1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_layers_tile_the_domain(n in 1usize..6, jitter in 0.0f64..0.25, seed in prop::collection::vec(-1.0f64..1.0, 16)) {
        let mesh = jittered_mesh(n, jitter, &seed);
        let topo = DualTopology::new(&mesh);
        let mut first = 0.0;
        for pieces in &topo.first_layer {
            for &(t, region) in pieces {
                first += fve2l::refelem::polygon_area(&DualTopology::region_polygon(&mesh, t, region));
            }
        }
        let second: f64 = (0..mesh.num_triangles()).map(|t| mesh.area(t)).sum();
        prop_assert!((first - 1.0).abs() < 1e-12);
        prop_assert!((second - 1.0).abs() < 1e-12);
        prop_assert_eq!(topo.num_second_layer, mesh.num_triangles());
    }

    #[test]
    fn polynomial_exactness_on_distorted_meshes(
        order in order_strategy(),
        jitter in 0.0f64..0.2,
        seed in prop::collection::vec(-1.0f64..1.0, 16),
        coeffs in prop::collection::vec(-1.0f64..1.0, 15),
    ) {
        let k = order.k();
        let mut terms = Vec::new();
        let mut idx = 0;
        for a in 0..=k {
            for b in 0..=k - a {
                terms.push((coeffs[idx], a, b));
                idx += 1;
            }
        }
        let problem = polynomial_problem(Poly2::from_terms(&terms), [[1.5, 0.25], [0.25, 1.0]]);
        let mesh = jittered_mesh(3, jitter, &seed);
        let sol = solve_problem(&mesh, order, &problem, 1e-12).unwrap();
        let exact = interpolate(&sol.system, &problem).unwrap();
        for (u, v) in sol.coefficients.iter().zip(&exact) {
            prop_assert!((u - v).abs() < 1e-10);
        }
        let report = SolutionField::new(&mesh, order, &sol.system.dofs, &sol.coefficients, &problem).unwrap().report();
        for e in report.elements() {
            prop_assert!(e.flux[0].abs() < 1e-10 && e.equation[0].abs() < 1e-10);
        }
        // Global sums are the ordered sums of the locals.
        let sum: f64 = report.second_layer.iter().map(|e| e.flux[0]).sum();
        prop_assert_eq!(sum, report.second_global.flux[0]);
    }

    #[test]
    fn layer_two_divergence_identity(
        order in order_strategy(),
        jitter in 0.0f64..0.2,
        seed in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let problem = fve2l::verify::example1();
        let base = jittered_mesh(4, jitter, &seed);
        let vertices = base.vertices.iter().map(|p| [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0]).collect();
        let mesh = Mesh::new(vertices, base.triangles.clone(), base.markers.clone()).unwrap();
        let sol = solve_problem(&mesh, order, &problem, 1e-12).unwrap();
        let report = SolutionField::new(&mesh, order, &sol.system.dofs, &sol.coefficients, &problem).unwrap().report();
        for e in &report.second_layer {
            prop_assert!((e.flux[0] - e.equation[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn theta_min_equilateral() {
    assert_relative_eq!(theta_min(1.0, 1.0).unwrap(), 60.0, epsilon = 1e-12);
}

#[test]
fn layer_sums_differ_by_edge_jumps() {
    use fve2l::assembly::Problem;
    let cases: Vec<(Box<dyn Problem>, [f64; 4])> = vec![
        (Box::new(fve2l::verify::example1()), fve2l::verify::EXAMPLE1_DOMAIN),
        (Box::new(fve2l::verify::example2()), fve2l::verify::EXAMPLE2_DOMAIN),
    ];
    for (problem, domain) in &cases {
        for order in SchemeOrder::ALL {
            let mesh = Mesh::build_structured(4, *domain).unwrap();
            let sol = solve_problem(&mesh, order, problem.as_ref(), 1e-12).unwrap();
            // Degree 16 makes the forcing quadrature error of the exponential data negligible.
            let field =
                SolutionField::with_degree(&mesh, order, &sol.system.dofs, &sol.coefficients, problem.as_ref(), 16).unwrap();
            let report = field.report();
            let jump = field.interior_edge_jump_sum();
            for c in 0..problem.components() {
                let lhs = report.first_global.flux[c];
                let rhs = report.second_global.flux[c] + jump[c];
                assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "k={} c={c}: {lhs} vs {rhs}", order.k());
                assert!((report.first_global.equation[c] - report.second_global.equation[c]).abs() < 1e-11);
            }
        }
    }
}
