//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::time::{Duration, Instant};

use meridian_fem::assembly::{assemble, multiplier_mass, sigma_gram, AssemblyOptions, MaterialParams};
use meridian_fem::geometry::{build_unit_square_mesh, AffineMap, Diagonal, Point};
use meridian_fem::harness::{convergence_study, manufactured_case, CaseId, ErrorReport, StudyOptions};
use meridian_fem::poly::{monomial_count, Poly};
use meridian_fem::projection::{
    c_identity_residual, interpolate_stress, moment_matrix_from_rstar, projection_residuals, PolyStress,
};
use meridian_fem::quadrature::{exact_weighted_monomial, integrate_weighted, triangle_gauss_rule};
use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const N_LIST: [usize; 5] = [4, 6, 8, 10, 12];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn study(case: CaseId, k: u8) -> (ErrorReport, Duration) {
    let params = MaterialParams::default();
    let start = Instant::now();
    let report = convergence_study(&manufactured_case(case, &params), k, &N_LIST, &StudyOptions::default())
        .unwrap_or_else(|e| panic!("study {case:?} k={k} failed: {e}"));
    (report, start.elapsed())
}

/// Checks every consecutive rate against `[lo, hi]`; returns the offenders.
fn rate_violations(label: &str, report: &ErrorReport, lo: f64, hi: f64) -> Vec<String> {
    let names = ["sigma", "u", "asym"];
    let mut bad = Vec::new();
    for (i, r) in report.rates().iter().enumerate() {
        for (c, name) in names.iter().enumerate() {
            if !(lo..=hi).contains(&r[c]) {
                bad.push(format!(
                    "{label} {name} {}->{}: {:.3}",
                    report.rows[i].n,
                    report.rows[i + 1].n,
                    r[c]
                ));
            }
        }
    }
    bad
}

fn rates_outcome(runs: &[(&str, &ErrorReport)], lo: f64, hi: f64, elapsed: Duration, budget: Duration) -> Outcome {
    let mut bad: Vec<String> = runs.iter().flat_map(|(l, r)| rate_violations(l, r, lo, hi)).collect();
    if elapsed > budget {
        bad.push(format!("runtime {:.1}s over {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()));
    }
    if bad.is_empty() {
        outcome(true, format!("all rates in [{lo}, {hi}], {:.2}s", elapsed.as_secs_f64()))
    } else {
        outcome(false, bad.join("; "))
    }
}

/// Expected errors at n = 8, (sigma, u, asym) per case and degree.
const REFERENCE_N8: [(CaseId, u8, [f64; 3]); 6] = [
    (CaseId::Exp1, 1, [6.308e-1, 1.410e-2, 8.636e-2]),
    (CaseId::Exp1, 2, [1.730e-2, 2.238e-3, 3.647e-3]),
    (CaseId::Exp2, 1, [1.596e0, 4.111e-2, 2.811e-1]),
    (CaseId::Exp2, 2, [1.119e-1, 7.036e-3, 1.556e-2]),
    (CaseId::Exp1, 3, [1.465e-3, 1.816e-4, 1.733e-4]),
    (CaseId::Exp2, 3, [7.046e-3, 6.085e-4, 9.937e-4]),
];

fn magnitude_outcome(reports: &[(CaseId, u8, &ErrorReport)]) -> Outcome {
    let mut bad = Vec::new();
    let mut worst = 1.0f64;
    for (case, k, reference) in REFERENCE_N8 {
        let report = reports
            .iter()
            .find(|(c, kk, _)| *c == case && *kk == k)
            .map(|(_, _, r)| *r)
            .expect("report present");
        let row = report.rows.iter().find(|r| r.n == 8).expect("n = 8 row");
        let got = [row.errors.sigma, row.errors.u, row.errors.asym];
        for (c, name) in ["sigma", "u", "asym"].iter().enumerate() {
            let ratio = (got[c] / reference[c]).max(reference[c] / got[c]);
            worst = worst.max(ratio);
            if ratio > 3.0 {
                bad.push(format!("{case:?} k={k} {name}: {:.3e} vs {:.3e} (x{ratio:.2})", got[c], reference[c]));
            }
        }
    }
    if bad.is_empty() {
        outcome(true, format!("worst ratio {worst:.2}"))
    } else {
        outcome(false, bad.join("; "))
    }
}

fn determinant_outcome() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut samples = vec![(0.0, 0.0)];
    samples.extend((0..100).map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))));
    let mut positive = true;
    for (r1, r2) in samples {
        let m = moment_matrix_from_rstar(r1, r2);
        positive &= m.determinant > 0.0;
        worst = worst.max((m.determinant / m.closed_form_determinant - 1.0).abs());
    }
    let origin = moment_matrix_from_rstar(0.0, 0.0);
    let origin_ok = (origin.determinant - 781.25).abs() <= 1e-10 * 781.25;
    let pass = positive && worst <= 1e-10 && origin_ok;
    outcome(
        pass,
        format!(
            "max relative mismatch {worst:.2e}; det at origin {:.6} (closed form {:.6}, expected 781.25)",
            origin.determinant, origin.closed_form_determinant
        ),
    )
}

fn random_poly(rng: &mut StdRng, degree: usize) -> Poly {
    let n = monomial_count(degree);
    Poly::from_coeffs(degree, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_off_axis_triangle(rng: &mut StdRng) -> AffineMap {
    loop {
        let pts: [Point; 3] =
            std::array::from_fn(|_| Point::new(rng.random_range(0.05..2.0), rng.random_range(-1.0..1.0)));
        let (a, b, c) = (pts[0], pts[1], pts[2]);
        let area = (b - a).perp(&(c - a));
        if area.abs() < 0.05 {
            continue;
        }
        let ordered = if area > 0.0 { [a, b, c] } else { [a, c, b] };
        // Rotate so the first vertex has the smallest r.
        let first = (0..3)
            .min_by(|&i, &j| ordered[i].x.partial_cmp(&ordered[j].x).unwrap())
            .unwrap();
        let rotated = [ordered[first], ordered[(first + 1) % 3], ordered[(first + 2) % 3]];
        if let Ok(map) = AffineMap::from_points(rotated) {
            return map;
        }
    }
}

fn c_identity_outcome() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let triangles: Vec<AffineMap> = (0..50).map(|_| random_off_axis_triangle(&mut rng)).collect();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let degree = rng.random_range(0..=2);
        let tau = PolyStress {
            tensor: std::array::from_fn(|_| random_poly(&mut rng, degree)),
            hoop: random_poly(&mut rng, degree),
        };
        let p_degree = rng.random_range(0..=2);
        let p = random_poly(&mut rng, p_degree);
        for map in &triangles {
            let res = c_identity_residual(map, &tau, &p).expect("identity residual");
            worst = worst.max(res);
        }
    }
    outcome(worst <= 1e-10, format!("max residual {worst:.2e} over 2500 pairs"))
}

/// Smallest generalised eigenvalue of (A, G), both symmetric with G positive definite.
fn min_generalised_eigenvalue(a: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let l = g.clone().cholesky().expect("positive definite Gram").l();
    let linv = l.clone().try_inverse().expect("invertible factor");
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.min()
}

fn coercivity_outcome() -> Outcome {
    let params = MaterialParams::default();
    let opts = AssemblyOptions::default();
    let mesh = build_unit_square_mesh(4, Diagonal::NorthEast).expect("mesh");
    let mut rng = StdRng::seed_from_u64(8);
    let mut worst = f64::INFINITY;
    let mut spectral = f64::INFINITY;
    for k in 1..=3u8 {
        let system = assemble(&mesh, k, &params, &|_| Vector2::zeros(), &opts).expect("assembly");
        let (stress, _) = system.split_free();
        let a = system.dense_block(&stress, &stress);
        let g = sigma_gram(&mesh, k, &opts).expect("gram");
        for _ in 0..100 {
            let v = DVector::from_iterator(stress.len(), (0..stress.len()).map(|_| rng.random_range(-1.0..1.0)));
            let ratio = (v.transpose() * &a * &v)[(0, 0)] / (v.transpose() * &g * &v)[(0, 0)];
            worst = worst.min(ratio);
        }
        spectral = spectral.min(min_generalised_eigenvalue(&a, &g));
    }
    outcome(
        worst >= 0.24,
        format!("min a(v,v)/|v|^2 over 300 samples {worst:.4}; smallest eigenvalue bound {spectral:.4}"),
    )
}

fn weighted_integral_outcome() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let rule = triangle_gauss_rule(8).expect("rule");
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (r1, r2) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        for s in 0..=6u32 {
            for t in 0..=(6 - s) {
                for include_one in [true, false] {
                    let one = if include_one { 1.0 } else { 0.0 };
                    let quad =
                        rule.integrate(|x, y| x.powi(s as i32) * y.powi(t as i32) * (r1 * x + r2 * y + one));
                    let exact = exact_weighted_monomial(s, t, r1, r2, include_one);
                    worst = worst.max((quad - exact).abs() / exact.abs());
                }
            }
        }
    }
    // The nine listed integrals, r0 > 0 case.
    let listed: [(u32, u32, f64, [f64; 3]); 9] = [
        (0, 1, 1.0 / 24.0, [1.0, 2.0, 4.0]),
        (1, 0, 1.0 / 24.0, [2.0, 1.0, 4.0]),
        (0, 2, 2.0 / 120.0, [1.0, 3.0, 5.0]),
        (1, 1, 1.0 / 120.0, [2.0, 2.0, 5.0]),
        (2, 0, 2.0 / 120.0, [3.0, 1.0, 5.0]),
        (0, 3, 6.0 / 720.0, [1.0, 4.0, 6.0]),
        (1, 2, 2.0 / 720.0, [2.0, 3.0, 6.0]),
        (2, 1, 2.0 / 720.0, [3.0, 2.0, 6.0]),
        (3, 0, 6.0 / 720.0, [4.0, 1.0, 6.0]),
    ];
    let mut listed_worst = 0.0f64;
    for _ in 0..20 {
        let (r1, r2) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        for (s, t, scale, [a, b, c]) in listed {
            let printed = scale * (a * r1 + b * r2 + c);
            let quad = rule.integrate(|x, y| x.powi(s as i32) * y.powi(t as i32) * (r1 * x + r2 * y + 1.0));
            listed_worst = listed_worst.max((quad - printed).abs() / printed);
            listed_worst = listed_worst.max((exact_weighted_monomial(s, t, r1, r2, true) - printed).abs() / printed);
        }
    }
    // Physical triangle: ∫ ξ^s η^t r dT = r0 det I(ξ^s η^t).
    let map = AffineMap::from_points([Point::new(0.5, 0.0), Point::new(1.5, 0.2), Point::new(0.9, 1.1)]).unwrap();
    let inv = map.jacobian.try_inverse().unwrap();
    let phys = integrate_weighted(&map, &rule, |x| {
        let l = inv * (x - map.offset);
        l.x * l.x * l.y
    })
    .unwrap();
    let closed = map.r0() * map.det * exact_weighted_monomial(2, 1, map.r_star.0, map.r_star.1, true);
    worst = worst.max((phys - closed).abs() / closed);
    outcome(
        worst <= 1e-12 && listed_worst <= 1e-12,
        format!("closed-form mismatch {worst:.2e}; listed integrals {listed_worst:.2e}"),
    )
}

fn random_field(rng: &mut StdRng) -> (impl Fn(Point) -> Matrix2<f64>, impl Fn(Point) -> f64) {
    let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let b: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.5..3.0));
    let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
    let (h0, h1) = (rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0));
    let tensor = move |x: Point| {
        let e = |i: usize| a[i] * (b[i] * x.x + c[i] * x.y).sin() + (0.3 * x.x * x.y * c[i]).exp();
        Matrix2::new(e(0), e(1), e(2), e(3))
    };
    let hoop = move |x: Point| h0 * (h1 * x.x - x.y).cos() + x.x * x.y;
    (tensor, hoop)
}

fn projection_outcome() -> Outcome {
    let mut rng = StdRng::seed_from_u64(10);
    let mesh = build_unit_square_mesh(4, Diagonal::NorthEast).expect("mesh");
    let maps: Vec<AffineMap> = (0..mesh.num_triangles())
        .map(|t| meridian_fem::geometry::canonical_affine(t, &mesh).unwrap())
        .collect();
    let mut worst = 0.0f64;
    let mut worst_condition = 0.0f64;
    for k in 1..=2u8 {
        for f in 0..20 {
            let (tensor, hoop) = random_field(&mut rng);
            // Every mesh triangle, axis-touching ones included, plus a random off-axis one.
            let extra = random_off_axis_triangle(&mut rng);
            for map in maps.iter().chain(std::iter::once(&extra)).skip(f % 2) {
                let res = interpolate_stress(k, map, &tensor, &hoop).expect("interpolation");
                worst_condition = worst_condition.max(res.condition);
                let d = projection_residuals(&res, &tensor, &hoop).expect("residuals");
                worst = worst.max(d.max());
            }
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max orthogonality defect {worst:.2e}; largest local condition number {worst_condition:.2e}"),
    )
}

fn manufactured_outcome() -> Outcome {
    let params = MaterialParams::default();
    let mut rng = StdRng::seed_from_u64(11);
    let pts: Vec<Point> = (0..100)
        .map(|_| Point::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
        .collect();
    let mut constitutive = 0.0f64;
    let mut divergence = 0.0f64;
    let mut strain = 0.0f64;
    for id in [CaseId::Exp1, CaseId::Exp2] {
        let case = manufactured_case(id, &params);
        for &x in &pts {
            constitutive = constitutive.max(case.constitutive_residual(x));
            let fd = case.fd_divergence(x, 1e-3);
            divergence = divergence.max((fd - case.body_force(x)).amax());
            let exact = case.strain(x);
            let approx = case.fd_strain(x, 1e-3);
            for i in 0..4 {
                strain = strain.max((exact[i] - approx[i]).abs());
            }
        }
    }
    outcome(
        constitutive <= 1e-10 && divergence <= 1e-6 && strain <= 1e-6,
        format!("constitutive {constitutive:.2e}; divergence fd {divergence:.2e}; strain fd {strain:.2e}"),
    )
}

/// sqrt of the smallest eigenvalue of M⁻¹ B G⁻¹ Bᵀ with Σ and weighted L² norms.
fn coupling_constant(n: usize) -> f64 {
    let params = MaterialParams::default();
    let opts = AssemblyOptions::default();
    let mesh = build_unit_square_mesh(n, Diagonal::NorthEast).expect("mesh");
    let system = assemble(&mesh, 1, &params, &|_| Vector2::zeros(), &opts).expect("assembly");
    let (stress, mult) = system.split_free();
    let b = system.dense_block(&mult, &stress);
    let g = sigma_gram(&mesh, 1, &opts).expect("gram");
    let m = multiplier_mass(&system, &opts).expect("mass");
    let ginv_bt = g.cholesky().expect("gram factor").solve(&b.transpose());
    let schur = &b * ginv_bt;
    min_generalised_eigenvalue(&schur, &m).max(0.0).sqrt()
}

fn inf_sup_outcome() -> Outcome {
    let betas: Vec<f64> = [2usize, 4, 8].iter().map(|&n| coupling_constant(n)).collect();
    let drop = 1.0 - betas[2] / betas[0];
    outcome(
        drop < 0.5 && betas.iter().all(|b| *b > 0.0),
        format!("beta n=2,4,8: {:.4}, {:.4}, {:.4}; drop {:.1}%", betas[0], betas[1], betas[2], 100.0 * drop),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    let (e1k1, t11) = study(CaseId::Exp1, 1);
    results.push((
        1,
        "rates k=1 experiment 1",
        rates_outcome(&[("exp1 k=1", &e1k1)], 0.85, 1.2, t11, Duration::from_secs(10)),
    ));
    let (e1k2, t12) = study(CaseId::Exp1, 2);
    results.push((
        2,
        "rates k=2 experiment 1",
        rates_outcome(&[("exp1 k=2", &e1k2)], 1.8, 2.2, t12, Duration::from_secs(30)),
    ));
    let (e2k1, t21) = study(CaseId::Exp2, 1);
    let (e2k2, t22) = study(CaseId::Exp2, 2);
    let o1 = rates_outcome(&[("exp2 k=1", &e2k1)], 0.85, 1.2, t21 + t22, Duration::from_secs(60));
    let o2 = rates_outcome(&[("exp2 k=2", &e2k2)], 1.8, 2.2, t21 + t22, Duration::from_secs(60));
    results.push((
        3,
        "rates k=1,2 experiment 2",
        outcome(o1.pass && o2.pass, format!("{} | {}", o1.detail, o2.detail)),
    ));
    let (e1k3, t13) = study(CaseId::Exp1, 3);
    let (e2k3, t23) = study(CaseId::Exp2, 3);
    results.push((
        4,
        "rates k=3 both experiments",
        rates_outcome(
            &[("exp1 k=3", &e1k3), ("exp2 k=3", &e2k3)],
            2.7,
            3.3,
            t13 + t23,
            Duration::from_secs(180),
        ),
    ));
    results.push((
        5,
        "error magnitudes at n=8",
        magnitude_outcome(&[
            (CaseId::Exp1, 1, &e1k1),
            (CaseId::Exp1, 2, &e1k2),
            (CaseId::Exp2, 1, &e2k1),
            (CaseId::Exp2, 2, &e2k2),
            (CaseId::Exp1, 3, &e1k3),
            (CaseId::Exp2, 3, &e2k3),
        ]),
    ));
    results.push((6, "moment matrix determinant", determinant_outcome()));
    results.push((7, "rotation coupling identity", c_identity_outcome()));
    results.push((8, "coercivity", coercivity_outcome()));
    results.push((9, "weighted monomial integrals", weighted_integral_outcome()));
    results.push((10, "interpolation orthogonality", projection_outcome()));
    results.push((11, "manufactured fields", manufactured_outcome()));
    results.push((12, "coupling non-degeneracy", inf_sup_outcome()));

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag} {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
