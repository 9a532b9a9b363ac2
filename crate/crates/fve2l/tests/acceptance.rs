//! Acceptance criteria 1 to 8; prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use fve2l::assembly::{assemble, Problem};
use fve2l::conservation::{ConservationReport, ElementResidual, SolutionField};
use fve2l::mesh::Mesh;
use fve2l::poly::Poly2;
use fve2l::refelem::{dual_region, node_coordinates, BasisSet, Region, SchemeOrder};
use fve2l::solver::{condition_estimate, DEFAULT_TOLERANCE};
use fve2l::stability::{
    apply_constraints, dependent_parameters, gamma_curve_unchecked, bound_on_curve, min_eigenvalue, reference_matrices,
    table_parameters, theta_min, trial_to_test_matrix, Reading, StabilityModel, DEFAULT_SEGMENTS,
};
use fve2l::verify::{
    condition_study, convergence_study, example1, example2, interpolate, kappa_slope, polynomial_problem,
    solve_problem, Scheme, EXAMPLE1_DOMAIN, EXAMPLE2_DOMAIN,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

type Outcome = (bool, Vec<String>);
type Criterion = (&'static str, fn() -> Outcome);

fn fields(order: SchemeOrder, n: usize, domain: [f64; 4], problem: &dyn Problem) -> (ConservationReport, Vec<bool>, [f64; 2]) {
    let mesh = Mesh::build_structured(n, domain).expect("mesh");
    let sol = solve_problem(&mesh, order, problem, DEFAULT_TOLERANCE).expect("solve");
    let field = SolutionField::new(&mesh, order, &sol.system.dofs, &sol.coefficients, problem).expect("field");
    (field.report(), sol.system.dofs.on_boundary.clone(), field.interior_edge_jump_sum())
}

fn examples() -> Vec<(&'static str, [f64; 4], Box<dyn Problem>)> {
    vec![
        ("example1", EXAMPLE1_DOMAIN, Box::new(example1()) as Box<dyn Problem>),
        ("example2", EXAMPLE2_DOMAIN, Box::new(example2())),
    ]
}

fn convergence(name: &str, problem: &dyn Problem, domain: [f64; 4]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for order in SchemeOrder::ALL {
        let k = order.k() as f64;
        match convergence_study(problem, domain, order, &[4, 8, 16, 32], DEFAULT_TOLERANCE) {
            Ok(t) => {
                let pass = (t.l2_order - (k + 1.0)).abs() <= 0.15 && (t.h1_order - k).abs() <= 0.15;
                ok &= pass;
                notes.push(format!("{name} k={k}: L2 order {:.3}, H1 order {:.3}", t.l2_order, t.h1_order));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name} k={k}: {e}"));
            }
        }
    }
    (ok, notes)
}

fn criterion1() -> Outcome {
    convergence("example1", &example1(), EXAMPLE1_DOMAIN)
}

fn criterion2() -> Outcome {
    convergence("example2", &example2(), EXAMPLE2_DOMAIN)
}

fn max_component(items: &[ElementResidual]) -> (f64, f64) {
    ConservationReport::max_abs(items)
}

fn criterion3() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, domain, problem) in examples() {
        for order in SchemeOrder::ALL {
            let (report, _, _) = fields(order, 8, domain, problem.as_ref());
            let (flux, equa) = max_component(&report.second_layer);
            ok &= flux <= 1e-8 && equa <= 1e-8;
            notes.push(format!("{name} k={}: layer II max |flux| {flux:.2e}, max |equa| {equa:.2e}", order.k()));
        }
    }
    (ok, notes)
}

fn criterion4() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, domain, problem) in examples() {
        for order in SchemeOrder::ALL {
            let (report, on_boundary, _) = fields(order, 8, domain, problem.as_ref());
            let equa = report.first_global.equation[0].abs().max(report.first_global.equation[1].abs());
            ok &= equa <= 1e-8;
            let mut line = format!("{name} k={}: layer I global |equa| {equa:.2e}", order.k());
            if order == SchemeOrder::Cubic {
                let interior: Vec<ElementResidual> =
                    report.first_layer.iter().filter(|e| !on_boundary[e.id]).copied().collect();
                let (flux, _) = max_component(&interior);
                ok &= flux <= 1e-8;
                line.push_str(&format!(", interior layer I max |flux| {flux:.2e}"));
            }
            notes.push(line);
        }
    }
    let problem = example1();
    let g8 = fields(SchemeOrder::Quadratic, 8, EXAMPLE1_DOMAIN, &problem).0.first_global.flux[0].abs();
    let g16 = fields(SchemeOrder::Quadratic, 16, EXAMPLE1_DOMAIN, &problem).0.first_global.flux[0].abs();
    ok &= (0.03..=3.0).contains(&g8) && g16 < g8;
    notes.push(format!("example1 k=2: layer I global |flux| {g8:.4} at n=8, {g16:.4} at n=16"));
    (ok, notes)
}

fn criterion5() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for order in SchemeOrder::ALL {
        let (a, b, published) = table_parameters(order);
        let reference = reference_matrices(order);
        let map = trial_to_test_matrix(order, &a, &b).expect("parameter counts");
        let model = StabilityModel::new(&reference, &map, Reading::Mapped);
        let lmin = min_eigenvalue(&model.h_matrix(1.0, 1.0));
        let bn = gamma_curve_unchecked(&model, DEFAULT_SEGMENTS).map(|c| bound_on_curve(&c));
        let bn_ok = matches!(bn, Ok(v) if (v - published).abs() <= 0.5);
        let psd_ok = lmin >= -1e-8;

        let (mut ca, mut cb) = (a.clone(), b.clone());
        apply_constraints(order, &mut ca, &mut cb);
        let (dep_a, dep_b) = dependent_parameters(order);
        let dev = dep_a
            .iter()
            .map(|&i| (ca[i] - a[i]).abs())
            .chain(dep_b.iter().map(|&i| (cb[i] - b[i]).abs()))
            .fold(0.0f64, f64::max);
        let constraint_ok = dev <= 1e-3;
        ok &= bn_ok && psd_ok && constraint_ok;
        let bn_text = match bn {
            Ok(v) => format!("{v:.2}"),
            Err(e) => format!("unavailable ({e})"),
        };
        notes.push(format!(
            "k={}: B_N {bn_text} deg (published {published}), lambda_min H(1,1) {lmin:.4}, dependent-entry deviation {dev:.1e}",
            order.k()
        ));
    }
    (ok, notes)
}

fn criterion6() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for order in SchemeOrder::ALL {
        let rows = match condition_study(order, &[4, 8, 16, 32]) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("k={}: {e}", order.k()));
                ok = false;
                continue;
            }
        };
        let fve = kappa_slope(&rows, Scheme::Fve2l);
        let fem = kappa_slope(&rows, Scheme::Fem);
        let in_band = |s: Option<f64>| matches!(s, Some(v) if (v - 2.0).abs() <= 0.3);
        let larger = rows.iter().filter(|r| r.scheme == Scheme::Fve2l).all(|f| {
            rows.iter()
                .find(|g| g.scheme == Scheme::Fem && g.n == f.n)
                .is_some_and(|g| f.kappa >= g.kappa)
        });
        ok &= in_band(fve) && in_band(fem) && larger;
        let fmt = |s: Option<f64>| s.map_or("undefined (indefinite symmetric part)".to_string(), |v| format!("{v:.3}"));
        let lmin = rows
            .iter()
            .filter(|r| r.scheme == Scheme::Fve2l)
            .map(|r| r.lambda_min_sym)
            .fold(f64::INFINITY, f64::min);
        notes.push(format!(
            "k={}: FVE-2L slope {}, FEM slope {}, FVE-2L kappa >= FEM kappa: {larger}, FVE-2L min lambda_min(sym) {lmin:.3}",
            order.k(),
            fmt(fve),
            fmt(fem)
        ));
    }
    (ok, notes)
}

/// Degree-k polynomial with all monomials present.
fn manufactured(order: SchemeOrder) -> Poly2 {
    let k = order.k();
    let mut terms = Vec::new();
    for a in 0..=k {
        for b in 0..=k - a {
            terms.push((0.3 + 0.1 * a as f64 - 0.2 * b as f64 + 0.05 * (a * b) as f64, a, b));
        }
    }
    Poly2::from_terms(&terms)
}

fn criterion7() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let diffusion = [[2.0, 0.5], [0.5, 1.0]];
    for order in SchemeOrder::ALL {
        let problem = polynomial_problem(manufactured(order), diffusion);
        let mesh = Mesh::build_structured(4, [0.0, 1.0, 0.0, 1.0]).expect("mesh");
        let sol = solve_problem(&mesh, order, &problem, DEFAULT_TOLERANCE).expect("solve");
        let exact = interpolate(&sol.system, &problem).expect("interpolate");
        let dof_err = sol.coefficients.iter().zip(&exact).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let field = SolutionField::new(&mesh, order, &sol.system.dofs, &sol.coefficients, &problem).expect("field");
        let report = field.report();
        let (f1, e1) = max_component(&report.first_layer);
        let (f2, e2) = max_component(&report.second_layer);
        let worst = f1.max(e1).max(f2).max(e2);
        ok &= dof_err <= 1e-10 && worst <= 1e-10;
        notes.push(format!("k={}: max DOF error {dof_err:.2e}, max conservation residual {worst:.2e}", order.k()));
    }
    (ok, notes)
}

fn criterion8() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    // Partition of unity, Kronecker property and midline continuity of the test basis.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pu = 0.0f64;
    let mut kron = 0.0f64;
    let mut cont = 0.0f64;
    for order in SchemeOrder::ALL {
        let basis = BasisSet::get(order);
        let nodes = node_coordinates(order);
        for (ri, region) in [Region::Q1, Region::Q2, Region::Q3].into_iter().enumerate() {
            let verts = dual_region(region).vertices;
            for _ in 0..50 {
                // Random convex combination of the region's vertices lies inside it.
                let w: Vec<f64> = (0..verts.len()).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                let p = [
                    verts.iter().zip(&w).map(|(v, w)| v[0] * w).sum::<f64>() / s,
                    verts.iter().zip(&w).map(|(v, w)| v[1] * w).sum::<f64>() / s,
                ];
                let total: f64 = basis.test_on_region(region, p).iter().map(|t| t.1).sum();
                pu = pu.max((total - 1.0).abs());
            }
            for other in [Region::Q1, Region::Q2, Region::Q3].into_iter().skip(ri + 1) {
                let here = dual_region(region).interior_segments();
                let there = dual_region(other).interior_segments();
                let shared = here.iter().find(|(a, b)| {
                    there.iter().any(|(c, d)| (a == c && b == d) || (a == d && b == c))
                });
                let Some(&(a, b)) = shared else { continue };
                for (i, pi) in basis.test_polys(region) {
                    let Some((_, qi)) = basis.test_polys(other).into_iter().find(|(j, _)| *j == i) else {
                        continue;
                    };
                    for s in 0..20 {
                        let t = s as f64 / 19.0;
                        let (x, y) = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
                        cont = cont.max((pi.eval(x, y) - qi.eval(x, y)).abs());
                    }
                }
            }
        }
        for (gi, region) in [Region::Q1, Region::Q2, Region::Q3, Region::Q4].into_iter().enumerate() {
            for (j, poly) in basis.test_polys(region) {
                for &s in &nodes.groups[gi] {
                    let p = nodes.nodes[s];
                    let want = if j == s { 1.0 } else { 0.0 };
                    kron = kron.max((poly.eval(p[0], p[1]) - want).abs());
                }
            }
        }
    }
    let basis_ok = pu <= 1e-13 && kron <= 1e-13 && cont <= 1e-13;
    ok &= basis_ok;
    notes.push(format!(
        "test basis: partition of unity {pu:.1e}, Kronecker {kron:.1e}, midline continuity {cont:.1e}"
    ));

    // Row sums of M_k under random parameters.
    let mut row_dev = 0.0f64;
    for order in SchemeOrder::ALL {
        let (a0, b0, _) = table_parameters(order);
        for _ in 0..100 {
            let a: Vec<f64> = a0.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = b0.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = trial_to_test_matrix(order, &a, &b).expect("counts").matrix;
            let first = 3 * order.k();
            for r in 0..m.nrows() {
                let want = if r < first { 1.0 } else { 0.0 };
                row_dev = row_dev.max((m.row(r).sum() - want).abs());
            }
        }
    }
    ok &= row_dev <= 1e-12;
    notes.push(format!("M_k row sums over 100 random draws per order: max deviation {row_dev:.1e}"));

    let theta = theta_min(1.0, 1.0).map(|t| (t - 60.0).abs()).unwrap_or(f64::INFINITY);
    ok &= theta <= 1e-12;
    notes.push(format!("theta_min(1,1) deviation from 60 deg: {theta:.1e}"));

    // On a layer-II element u_h is one polynomial, so flux and equation residuals coincide.
    let mut div = 0.0f64;
    for (_, domain, problem) in examples() {
        for order in SchemeOrder::ALL {
            let (report, _, _) = fields(order, 8, domain, problem.as_ref());
            for e in &report.second_layer {
                for c in 0..2 {
                    div = div.max((e.flux[c] - e.equation[c]).abs());
                }
            }
        }
    }
    ok &= div <= 1e-12;
    notes.push(format!("layer II divergence identity: max |flux - equa| {div:.1e}"));

    for order in SchemeOrder::ALL {
        let mesh = Mesh::build_structured(8, EXAMPLE1_DOMAIN).expect("mesh");
        let system = assemble(&mesh, order, &example1()).expect("assemble");
        let reduced = system.matrix.submatrix(&system.interior_rows());
        let lmin = condition_estimate(&reduced).map(|r| r.lambda_min_sym).unwrap_or(f64::NAN);
        ok &= lmin > 0.0;
        notes.push(format!("k={}: lambda_min of the reduced symmetric part at n=8: {lmin:.4}", order.k()));
    }
    (ok, notes)
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("convergence orders, Example 1", criterion1),
        ("convergence orders, Example 2", criterion2),
        ("layer II conservation", criterion3),
        ("layer I behavior", criterion4),
        ("stability bounds at tabulated parameters", criterion5),
        ("condition number growth", criterion6),
        ("polynomial exactness", criterion7),
        ("property suites", criterion8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, notes) = run();
        for note in &notes {
            println!("    {note}");
        }
        println!(
            "criterion {} [{}] {name} ({:.1}s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
