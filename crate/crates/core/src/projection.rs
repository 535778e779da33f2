//! Local interpolation of the stress pair onto BDM_k rows and P_k hoop values,
//! the interior-moment matrix of the quadratic element, and a quadrature check
//! of the integration-by-parts identity behind the rotation coupling.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix6, Vector2};

use crate::error::{FemError, Result};
use crate::geometry::{AffineMap, Point, LOCAL_EDGES};
use crate::poly::{monomial_exponents, Poly, PolyVec};
use crate::quadrature::{
    edge_gauss_rule, exact_weighted_monomial, triangle_gauss_rule, EdgeRule, QuadratureRule,
};
use crate::spaces::{
    piola, reference_basis, reference_edge_normal, reference_edge_point, ElementBasis,
    REFERENCE_VERTICES,
};

/// Edge points and triangle exactness used to build the interpolant.
const BUILD_EDGE_POINTS: usize = 12;
const BUILD_EXACTNESS: u32 = 16;
/// Independent, finer rules used when re-checking the defining conditions.
const CHECK_EDGE_POINTS: usize = 24;
const CHECK_EXACTNESS: u32 = 20;

/// Relative singular-value floor below which the local system counts as singular.
const RANK_TOLERANCE: f64 = 1e-13;

/// Upper Gauss point on (0, 1) for two points.
fn gauss_upper() -> f64 {
    0.5 + 3f64.sqrt() / 6.0
}

/// Element interpolant of a stress pair.
#[derive(Debug, Clone)]
pub struct InterpolationResult {
    pub degree: usize,
    pub map: AffineMap,
    pub basis: ElementBasis,
    /// Coefficients in the reference-oriented element basis, `[row1 | row2]`.
    pub stress_coeffs: Vec<f64>,
    /// Coefficients of the P_k reference monomials.
    pub hoop_coeffs: Vec<f64>,
    /// 2-norm condition number of the local stress system.
    pub condition: f64,
    pub axis_edges: [bool; 3],
}

impl InterpolationResult {
    /// Interpolated stress at a reference point; row i holds stress row i.
    pub fn stress_at(&self, xi: f64, eta: f64) -> Matrix2<f64> {
        let nb = self.basis.dim();
        let mut out = Matrix2::zeros();
        for (i, (f, d)) in self
            .basis
            .bdm_functions
            .iter()
            .zip(&self.basis.bdm_divergences)
            .enumerate()
        {
            let v = f.eval(xi, eta);
            let (pv, _) = piola(&self.map, Vector2::new(v[0], v[1]), d.eval(xi, eta));
            for row in 0..2 {
                let c = self.stress_coeffs[row * nb + i];
                out[(row, 0)] += c * pv.x;
                out[(row, 1)] += c * pv.y;
            }
        }
        out
    }

    pub fn hoop_at(&self, xi: f64, eta: f64) -> f64 {
        self.basis
            .pk_functions
            .iter()
            .zip(&self.hoop_coeffs)
            .map(|(f, c)| c * f.eval(xi, eta))
            .sum()
    }
}

fn reference_vertex(i: usize) -> Point {
    Point::new(REFERENCE_VERTICES[i][0], REFERENCE_VERTICES[i][1])
}

/// Physical endpoints of local edge `l`.
fn edge_endpoints(map: &AffineMap, l: usize) -> (Point, Point) {
    let (a, b) = LOCAL_EDGES[l];
    let pa = reference_vertex(a);
    let pb = reference_vertex(b);
    (map.apply(pa.x, pa.y), map.apply(pb.x, pb.y))
}

fn axis_edges(map: &AffineMap) -> [bool; 3] {
    let mut out = [false; 3];
    for (l, flag) in out.iter_mut().enumerate() {
        let (a, b) = edge_endpoints(map, l);
        *flag = a.x == 0.0 && b.x == 0.0;
    }
    out
}

/// Physical tensor tests `E11, E12, E21, E22, x^⊥⊗e1, x^⊥⊗e2`.
fn interior_tests(x: Point) -> [Matrix2<f64>; 6] {
    let (r, z) = (x.x, x.y);
    [
        Matrix2::new(1.0, 0.0, 0.0, 0.0),
        Matrix2::new(0.0, 1.0, 0.0, 0.0),
        Matrix2::new(0.0, 0.0, 1.0, 0.0),
        Matrix2::new(0.0, 0.0, 0.0, 1.0),
        Matrix2::new(z, 0.0, -r, 0.0),
        Matrix2::new(0.0, z, 0.0, -r),
    ]
}

fn edge_test(j: usize, t: f64) -> f64 {
    (2.0 * t - 1.0).powi(j as i32)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// Interpolates `(stress, hoop)` on one triangle.
///
/// Stress rows match normal moments against P_k on every edge and, for k = 2,
/// the moments against constant tensors and `x^⊥ ⊗ e_i`, all weighted by r.
/// Edges lying on the axis have their degrees of freedom set to zero. The hoop
/// component is the unweighted L² projection onto P_k.
pub fn interpolate_stress(
    k: u8,
    map: &AffineMap,
    stress: &dyn Fn(Point) -> Matrix2<f64>,
    hoop: &dyn Fn(Point) -> f64,
) -> Result<InterpolationResult> {
    if !(1..=2).contains(&k) {
        return Err(FemError::UnsupportedDegree(k));
    }
    let basis = reference_basis(k)?;
    let deg = k as usize;
    let nb = basis.dim();
    let n = 2 * nb;
    let per_row = 3 * (deg + 1);
    let edge_rule = edge_gauss_rule(BUILD_EDGE_POINTS)?;
    let tri_rule = triangle_gauss_rule(BUILD_EXACTNESS)?;
    let on_axis = axis_edges(map);

    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);

    for l in 0..3 {
        let (a, b) = edge_endpoints(map, l);
        let d = b - a;
        let normal = Vector2::new(d.y, -d.x);
        let ref_normal = reference_edge_normal(l);
        for j in 0..=deg {
            for row in 0..2 {
                let eq = row * per_row + l * (deg + 1) + j;
                if on_axis[l] {
                    mat[(eq, row * nb + basis.edge_dof(l, j))] = 1.0;
                    continue;
                }
                for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                    let rp = reference_edge_point(l, t);
                    let x = a + d * t;
                    let weight = w * edge_test(j, t) * x.x;
                    for (i, f) in basis.bdm_functions.iter().enumerate() {
                        let v = f.eval(rp[0], rp[1]);
                        mat[(eq, row * nb + i)] += weight * (v[0] * ref_normal[0] + v[1] * ref_normal[1]);
                    }
                    let s = stress(x);
                    rhs[eq] += weight * (s[(row, 0)] * normal.x + s[(row, 1)] * normal.y);
                }
            }
        }
    }

    if deg == 2 {
        let base = 2 * per_row;
        for (p, &w) in tri_rule.points.iter().zip(&tri_rule.weights) {
            let x = map.apply(p[0], p[1]);
            let weight = w * map.det * x.x;
            let tests = interior_tests(x);
            let s = stress(x);
            let values: Vec<Vector2<f64>> = basis
                .bdm_functions
                .iter()
                .map(|f| {
                    let v = f.eval(p[0], p[1]);
                    piola(map, Vector2::new(v[0], v[1]), 0.0).0
                })
                .collect();
            for (m, psi) in tests.iter().enumerate() {
                for (i, v) in values.iter().enumerate() {
                    for row in 0..2 {
                        let prow = Vector2::new(psi[(row, 0)], psi[(row, 1)]);
                        mat[(base + m, row * nb + i)] += weight * v.dot(&prow);
                    }
                }
                rhs[base + m] += weight * s.component_mul(psi).sum();
            }
        }
    }

    let condition = condition_number(&mat);
    if !condition.is_finite() || condition * RANK_TOLERANCE > 1.0 {
        return Err(FemError::SingularInterpolation { condition });
    }
    let coeffs = mat
        .lu()
        .solve(&rhs)
        .ok_or(FemError::SingularInterpolation { condition })?;
    if !coeffs.iter().all(|c| c.is_finite()) {
        return Err(FemError::NonFiniteSolution);
    }

    let hoop_coeffs = l2_projection(map, &basis.pk_functions, &tri_rule, hoop)?;

    Ok(InterpolationResult {
        degree: deg,
        map: *map,
        basis,
        stress_coeffs: coeffs.iter().cloned().collect(),
        hoop_coeffs,
        condition,
        axis_edges: on_axis,
    })
}

/// Unweighted L² projection onto the span of reference polynomials.
fn l2_projection(
    map: &AffineMap,
    space: &[Poly],
    rule: &QuadratureRule,
    f: &dyn Fn(Point) -> f64,
) -> Result<Vec<f64>> {
    let m = space.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let vals: Vec<f64> = space.iter().map(|q| q.eval(p[0], p[1])).collect();
        let fx = f(map.apply(p[0], p[1]));
        for i in 0..m {
            rhs[i] += w * map.det * fx * vals[i];
            for j in 0..m {
                gram[(i, j)] += w * map.det * vals[i] * vals[j];
            }
        }
    }
    let chol = gram
        .cholesky()
        .ok_or(FemError::SingularInterpolation { condition: f64::INFINITY })?;
    Ok(chol.solve(&rhs).iter().cloned().collect())
}

/// Largest defect in each group of orthogonality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResiduals {
    /// `∫ (τ − Πτ) : (∇u + x^⊥ ⊗ ∇q) r` over the triangle.
    pub interior: f64,
    /// `∫ ((τ − Πτ) n) · (u + x^⊥ q) r ds` over each edge.
    pub edge: f64,
    /// `∫ (τ_θθ − πτ_θθ) s` for `s ∈ z P_{k−1} ∪ P_{k−1}`.
    pub hoop: f64,
}

impl ProjectionResiduals {
    pub fn max(&self) -> f64 {
        self.interior.max(self.edge).max(self.hoop)
    }
}

/// P_{k−1} reference monomials with values and physical gradients.
fn lower_tests(map: &AffineMap, deg: usize, xi: f64, eta: f64) -> Vec<(f64, Vector2<f64>)> {
    let jinv_t = map
        .jacobian
        .try_inverse()
        .map(|m| m.transpose())
        .unwrap_or_else(Matrix2::zeros);
    monomial_exponents(deg - 1)
        .into_iter()
        .map(|(a, b)| {
            let m = Poly::monomial(a, b, 1.0);
            let g = Vector2::new(m.dx().eval(xi, eta), m.dy().eval(xi, eta));
            (m.eval(xi, eta), jinv_t * g)
        })
        .collect()
}

/// Re-evaluates the defining conditions of an interpolant with finer rules.
pub fn projection_residuals(
    result: &InterpolationResult,
    stress: &dyn Fn(Point) -> Matrix2<f64>,
    hoop: &dyn Fn(Point) -> f64,
) -> Result<ProjectionResiduals> {
    let map = &result.map;
    let deg = result.degree;
    let rule = triangle_gauss_rule(CHECK_EXACTNESS)?;
    let edge_rule = edge_gauss_rule(CHECK_EDGE_POINTS)?;
    let ntest = monomial_exponents(deg - 1).len();

    // Interior: 2 ntest displacement tests and ntest rotation tests.
    let mut interior = vec![0.0; 3 * ntest];
    let mut hoop_res = vec![0.0; 2 * ntest];
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let x = map.apply(p[0], p[1]);
        let dmeas = w * map.det;
        let diff = stress(x) - result.stress_at(p[0], p[1]);
        let hdiff = hoop(x) - result.hoop_at(p[0], p[1]);
        let perp = Vector2::new(x.y, -x.x);
        for (m, (val, grad)) in lower_tests(map, deg, p[0], p[1]).into_iter().enumerate() {
            for c in 0..2 {
                // ∇(m e_c) has row c equal to ∇m.
                let row = Vector2::new(diff[(c, 0)], diff[(c, 1)]);
                interior[c * ntest + m] += dmeas * x.x * row.dot(&grad);
            }
            let rot = perp * grad.transpose();
            interior[2 * ntest + m] += dmeas * x.x * diff.component_mul(&rot).sum();
            hoop_res[m] += dmeas * hdiff * x.y * val;
            hoop_res[ntest + m] += dmeas * hdiff * val;
        }
    }

    let mut edge = 0.0f64;
    for l in 0..3 {
        let (a, b) = edge_endpoints(map, l);
        let d = b - a;
        let normal = Vector2::new(d.y, -d.x);
        let mut acc = vec![0.0; 3 * ntest];
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let rp = reference_edge_point(l, t);
            let x = a + d * t;
            let flux = (stress(x) - result.stress_at(rp[0], rp[1])) * normal;
            let perp = Vector2::new(x.y, -x.x);
            for (m, (val, _)) in lower_tests(map, deg, rp[0], rp[1]).into_iter().enumerate() {
                acc[m] += w * x.x * flux.x * val;
                acc[ntest + m] += w * x.x * flux.y * val;
                acc[2 * ntest + m] += w * x.x * flux.dot(&perp) * val;
            }
        }
        edge = acc.iter().fold(edge, |e, v| e.max(v.abs()));
    }

    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |e, x| e.max(x.abs()));
    Ok(ProjectionResiduals {
        interior: max_abs(&interior),
        edge,
        hoop: max_abs(&hoop_res),
    })
}

/// Interior-moment matrix of the quadratic element with its determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMatrix {
    pub matrix: Matrix6<f64>,
    pub determinant: f64,
    pub closed_form_determinant: f64,
}

/// Closed form of det M_T in terms of `(r1*, r2*)`.
pub fn moment_determinant_closed_form(r1: f64, r2: f64) -> f64 {
    (r1 + r2 + 3.0)
        * (2.0 * r1 + r2 + 5.0)
        * (r1 + 2.0 * r2 + 5.0)
        * (2.0 * r1 + 2.0 * r2 + 5.0)
        * (r1 * r1 + 4.0 * r1 * r2 + r2 * r2 + 10.0 * r1 + 10.0 * r2 + 15.0)
        / 36.0
}

/// The three boundary-free quadratic BDM functions, normalised.
pub fn bdm2_interior_functions() -> [PolyVec; 3] {
    let g2 = gauss_upper();
    let g1 = 1.0 - g2;
    let [a, b, c] = interior_trials();
    let s = 1.0 / (g2 - g1);
    [
        PolyVec(a.0.scale(2f64.sqrt() * s), a.1.scale(2f64.sqrt() * s)),
        PolyVec(b.0.scale(s), b.1.scale(s)),
        PolyVec(c.0.scale(s), c.1.scale(s)),
    ]
}

/// Interior bubbles without their normalising constants.
fn interior_trials() -> [PolyVec; 3] {
    let g2 = gauss_upper();
    let (x, y, one) = (Poly::x(), Poly::y(), Poly::constant(1.0));
    let bary = &(&one - &x) - &y;
    [
        PolyVec(&bary * &x.scale(g2), &bary * &y.scale(g2 - 1.0)),
        PolyVec(
            &x * &(&(&x.scale(g2) + &y) - &one.scale(g2)),
            &x * &y.scale(g2 - 1.0),
        ),
        PolyVec(
            &y * &x.scale(g2 - 1.0),
            &y * &(&(&x + &y.scale(g2)) - &one.scale(g2)),
        ),
    ]
}

/// ∫ f (r1 ξ + r2 η + 1) over the reference triangle, in closed form.
fn weighted_integral(f: &Poly, r1: f64, r2: f64) -> f64 {
    monomial_exponents(f.degree())
        .into_iter()
        .map(|(a, b)| f.coeff(a, b) * exact_weighted_monomial(a as u32, b as u32, r1, r2, true))
        .sum()
}

/// Builds M_T for given `(r1*, r2*)`.
///
/// Columns are the three bubbles placed in stress row 1, then in row 2. Rows
/// are the tests E11, E12, E21, E22, `(η, −ξ)⊗e1`, `(η, −ξ)⊗e2`, scaled by
/// 120 for the constant tests and 360 for the rotational ones.
pub fn moment_matrix_from_rstar(r1: f64, r2: f64) -> MomentMatrix {
    let trials = interior_trials();
    let zero = Poly::zero(0);
    let (x, y) = (Poly::x(), Poly::y());
    let mut m = Matrix6::zeros();
    for j in 0..6 {
        let phi = &trials[j % 3];
        let (row1, row2) = if j < 3 {
            ((&phi.0, &phi.1), (&zero, &zero))
        } else {
            ((&zero, &zero), (&phi.0, &phi.1))
        };
        let tests = [
            row1.0.clone(),
            row1.1.clone(),
            row2.0.clone(),
            row2.1.clone(),
            &(row1.0 * &y) - &(row2.0 * &x),
            &(row1.1 * &y) - &(row2.1 * &x),
        ];
        for (i, f) in tests.iter().enumerate() {
            let scale = if i < 4 { 120.0 } else { 360.0 };
            m[(i, j)] = scale * weighted_integral(f, r1, r2);
        }
    }
    MomentMatrix {
        matrix: m,
        determinant: m.determinant(),
        closed_form_determinant: moment_determinant_closed_form(r1, r2),
    }
}

/// M_T of a triangle whose canonical first vertex is off the axis.
pub fn moment_matrix(map: &AffineMap) -> Result<MomentMatrix> {
    if map.r0() <= 0.0 {
        return Err(FemError::TriangleTouchesAxis);
    }
    Ok(moment_matrix_from_rstar(map.r_star.0, map.r_star.1))
}

/// Polynomial stress pair in physical coordinates `(r, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyStress {
    /// Entries τ11, τ12, τ21, τ22.
    pub tensor: [Poly; 4],
    pub hoop: Poly,
}

fn edge_points_for(degree: usize) -> usize {
    degree / 2 + 2
}

/// `|LHS − RHS|` of the identity
/// `c((τ, τ_θθ), p) = ∮ (τn)·x^⊥ p r ds − ∫ τ : (x^⊥ ⊗ ∇p) r − ∫ τ_θθ z p`
/// on one triangle, both sides by quadrature.
pub fn c_identity_residual(map: &AffineMap, tau: &PolyStress, p: &Poly) -> Result<f64> {
    let [t11, t12, t21, t22] = &tau.tensor;
    let th = &tau.hoop;
    let (r, z) = (Poly::x(), Poly::y());

    // r · div_axi of each row, polynomial by construction.
    let rdiv1 = &(&r * &(&t11.dx() + &t12.dy())) + &(t11 - th);
    let rdiv2 = &(&r * &(&t21.dx() + &t22.dy())) + t21;
    let lhs_poly = &(&(&(t12 - t21) * &r) + &(&(&rdiv1 * &z) - &(&rdiv2 * &r))) * p;

    let (px, pz) = (p.dx(), p.dy());
    // τ : (x^⊥ ⊗ ∇p) = z (τ11 ∂r p + τ12 ∂z p) − r (τ21 ∂r p + τ22 ∂z p).
    let contraction = &(&z * &(&(t11 * &px) + &(t12 * &pz))) - &(&r * &(&(t21 * &px) + &(t22 * &pz)));
    let area_poly = (&(&contraction * &r) + &(&(th * &z) * p)).scale(-1.0);

    let tri_degree = lhs_poly.degree().max(area_poly.degree());
    if tri_degree as u32 > crate::quadrature::MAX_TRIANGLE_EXACTNESS {
        return Err(FemError::UnsupportedExactness(tri_degree as u32));
    }
    let rule = triangle_gauss_rule(tri_degree as u32)?;
    let integrate = |f: &Poly| {
        rule.integrate(|xi, eta| {
            let x = map.apply(xi, eta);
            f.eval(x.x, x.y)
        }) * map.det
    };
    let lhs = integrate(&lhs_poly);
    let area = integrate(&area_poly);

    // Boundary term, with (τn)·x^⊥ = z (τ11 n1 + τ12 n2) − r (τ21 n1 + τ22 n2).
    let boundary_degree = tau.tensor.iter().map(Poly::degree).max().unwrap_or(0) + p.degree() + 2;
    let edge_rule: EdgeRule = edge_gauss_rule(edge_points_for(boundary_degree))?;
    let mut boundary = 0.0;
    for l in 0..3 {
        let (a, b) = edge_endpoints(map, l);
        let d = b - a;
        let n = Vector2::new(d.y, -d.x);
        boundary += edge_rule.integrate(|t| {
            let x = a + d * t;
            let (rr, zz) = (x.x, x.y);
            let flux1 = t11.eval(rr, zz) * n.x + t12.eval(rr, zz) * n.y;
            let flux2 = t21.eval(rr, zz) * n.x + t22.eval(rr, zz) * n.y;
            (zz * flux1 - rr * flux2) * p.eval(rr, zz) * rr
        });
    }
    let rhs = boundary + area;
    let out = (lhs - rhs).abs();
    if !out.is_finite() {
        return Err(FemError::NonFiniteIntegrand);
    }
    Ok(out)
}
