//! Manufactured solutions, error norms and mesh-refinement studies.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::assembly::{assemble, solve, AssemblyOptions, MaterialParams, SolutionFields};
use crate::error::{FemError, Result};
use crate::geometry::{build_unit_square_mesh, Diagonal, Point};
use crate::quadrature::{triangle_gauss_rule, MAX_TRIANGLE_EXACTNESS};
use crate::spaces::DofLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    /// Polynomial displacement 4r³(1−r)z(1−z)(1, −1).
    Exp1,
    /// Displacement r³ sin(πr) cos(π(z − 1/2))(1, −1).
    Exp2,
}

impl CaseId {
    pub fn from_number(n: u8) -> Result<CaseId> {
        match n {
            1 => Ok(CaseId::Exp1),
            2 => Ok(CaseId::Exp2),
            other => Err(FemError::InvalidConfig(format!("unknown experiment {other}"))),
        }
    }
}

/// Radial profile G and its derivatives, with Q = G/r and P = G'/r.
#[derive(Debug, Clone, Copy)]
struct Radial {
    g: f64,
    g1: f64,
    g2: f64,
    q: f64,
    q1: f64,
    p: f64,
}

/// Axial profile H and its derivatives.
#[derive(Debug, Clone, Copy)]
struct Axial {
    h: f64,
    h1: f64,
    h2: f64,
}

fn radial(id: CaseId, r: f64) -> Radial {
    match id {
        CaseId::Exp1 => Radial {
            g: 4.0 * r.powi(3) - 4.0 * r.powi(4),
            g1: 12.0 * r * r - 16.0 * r.powi(3),
            g2: 24.0 * r - 48.0 * r * r,
            q: 4.0 * r * r - 4.0 * r.powi(3),
            q1: 8.0 * r - 12.0 * r * r,
            p: 12.0 * r - 16.0 * r * r,
        },
        CaseId::Exp2 => {
            let (s, c) = (PI * r).sin_cos();
            Radial {
                g: r.powi(3) * s,
                g1: 3.0 * r * r * s + PI * r.powi(3) * c,
                g2: 6.0 * r * s + 6.0 * PI * r * r * c - PI * PI * r.powi(3) * s,
                q: r * r * s,
                q1: 2.0 * r * s + PI * r * r * c,
                p: 3.0 * r * s + PI * r * r * c,
            }
        }
    }
}

fn axial(id: CaseId, z: f64) -> Axial {
    match id {
        CaseId::Exp1 => Axial {
            h: z - z * z,
            h1: 1.0 - 2.0 * z,
            h2: -2.0,
        },
        CaseId::Exp2 => {
            let (s, c) = (PI * z).sin_cos();
            Axial {
                h: s,
                h1: PI * c,
                h2: -PI * PI * s,
            }
        }
    }
}

/// Exact fields of a manufactured solution with u = G(r) H(z) (1, −1).
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    pub id: CaseId,
    pub params: MaterialParams,
    /// Use the expanded polynomial closed forms (only valid for μ = 1/2, λ = 1).
    expanded: bool,
}

/// Both experiments at the given Lamé constants.
pub fn manufactured_case(id: CaseId, params: &MaterialParams) -> ManufacturedCase {
    let expanded = id == CaseId::Exp1 && params.mu == 0.5 && params.lambda == 1.0;
    ManufacturedCase {
        id,
        params: *params,
        expanded,
    }
}

/// Stress pair (σ, σ_θθ) of the first experiment at μ = 1/2, λ = 1.
fn exp1_expanded_stress(x: Point) -> (Matrix2<f64>, f64) {
    let (r, z) = (x.x, x.y);
    let r2 = r * r;
    let s11 = 4.0 * r2 * (-2.0 * r2 * z + r2 + 9.0 * r * z * z - 7.0 * r * z - r - 7.0 * z * z + 7.0 * z);
    let s12 = 2.0 * r2 * (2.0 * r2 * z - r2 - 4.0 * r * z * z + 2.0 * r * z + r + 3.0 * z * z - 3.0 * z);
    let s22 = 4.0 * r2 * (-4.0 * r2 * z + 2.0 * r2 + 5.0 * r * z * z - r * z - 2.0 * r - 4.0 * z * z + 4.0 * z);
    let stt = 4.0 * r2 * (-2.0 * r2 * z + r2 + 6.0 * r * z * z - 4.0 * r * z - r - 5.0 * z * z + 5.0 * z);
    (Matrix2::new(s11, s12, s12, s22), stt)
}

fn exp1_expanded_force(x: Point) -> Vector2<f64> {
    let (r, z) = (x.x, x.y);
    let f1 = 2.0
        * r
        * (2.0 * r.powi(3) - 24.0 * r * r * z + 10.0 * r * r + 60.0 * r * z * z - 42.0 * r * z - 9.0 * r
            - 32.0 * z * z
            + 32.0 * z);
    let f2 = -2.0
        * r
        * (8.0 * r.powi(3) + r * r * (7.0 - 30.0 * z) + 4.0 * r * (4.0 * z * z + 2.0 * z - 3.0) - 9.0 * (z - 1.0) * z);
    Vector2::new(f1, f2)
}

impl ManufacturedCase {
    pub fn name(&self) -> &'static str {
        match self.id {
            CaseId::Exp1 => "exp1",
            CaseId::Exp2 => "exp2",
        }
    }

    pub fn displacement(&self, x: Point) -> Vector2<f64> {
        let u = radial(self.id, x.x).g * axial(self.id, x.y).h;
        Vector2::new(u, -u)
    }

    /// Strain (ε_rr, ε_rz, ε_zz, ε_θθ) from exact derivatives of u.
    pub fn strain(&self, x: Point) -> [f64; 4] {
        let g = radial(self.id, x.x);
        let h = axial(self.id, x.y);
        [g.g1 * h.h, 0.5 * (g.g * h.h1 - g.g1 * h.h), -g.g * h.h1, g.q * h.h]
    }

    /// Stress derived from the isotropic law.
    fn derived_stress(&self, x: Point) -> (Matrix2<f64>, f64) {
        let [err, erz, ezz, ett] = self.strain(x);
        let (mu, lam) = (self.params.mu, self.params.lambda);
        let tr = err + ezz + ett;
        let srz = 2.0 * mu * erz;
        (
            Matrix2::new(2.0 * mu * err + lam * tr, srz, srz, 2.0 * mu * ezz + lam * tr),
            2.0 * mu * ett + lam * tr,
        )
    }

    fn derived_force(&self, x: Point) -> Vector2<f64> {
        let (mu, lam) = (self.params.mu, self.params.lambda);
        let g = radial(self.id, x.x);
        let h = axial(self.id, x.y);
        let dtr_r = g.g2 * h.h - g.g1 * h.h1 + g.q1 * h.h;
        let dtr_z = g.g1 * h.h1 - g.g * h.h2 + g.q * h.h1;
        let f1 = 2.0 * mu * g.g2 * h.h + lam * dtr_r + mu * (g.g * h.h2 - g.g1 * h.h1) + 2.0 * mu * g.q1 * h.h;
        let f2 = mu * (g.g1 * h.h1 - g.g2 * h.h) - 2.0 * mu * g.g * h.h2
            + lam * dtr_z
            + mu * (g.q * h.h1 - g.p * h.h);
        Vector2::new(f1, f2)
    }

    /// (σ, σ_θθ)
    pub fn stress(&self, x: Point) -> (Matrix2<f64>, f64) {
        if self.expanded {
            exp1_expanded_stress(x)
        } else {
            self.derived_stress(x)
        }
    }

    /// f = ∇_axi·(σ, σ_θθ)
    pub fn body_force(&self, x: Point) -> Vector2<f64> {
        if self.expanded {
            exp1_expanded_force(x)
        } else {
            self.derived_force(x)
        }
    }

    /// Rotation multiplier ½(∂_z u_r − ∂_r u_z).
    pub fn rotation(&self, x: Point) -> f64 {
        let g = radial(self.id, x.x);
        let h = axial(self.id, x.y);
        0.5 * (g.g * h.h1 + g.g1 * h.h)
    }

    /// Largest entry of 𝒜(σ, σ_θθ) − ε(u) at `x`.
    pub fn constitutive_residual(&self, x: Point) -> f64 {
        let (s, stt) = self.stress(x);
        let mu = self.params.mu;
        let c = self.params.trace_factor();
        let tr = s[(0, 0)] + s[(1, 1)] + stt;
        let a = |v: f64, diag: bool| (v - if diag { c * tr } else { 0.0 }) / (2.0 * mu);
        let eps = self.strain(x);
        let comp = [a(s[(0, 0)], true), a(s[(0, 1)], false), a(s[(1, 1)], true), a(stt, true)];
        let asym = (s[(0, 1)] - s[(1, 0)]).abs();
        comp.iter().zip(&eps).map(|(a, e)| (a - e).abs()).fold(asym, f64::max)
    }

    /// Fourth-order central-difference ∇_axi·(σ, σ_θθ).
    pub fn fd_divergence(&self, x: Point, h: f64) -> Vector2<f64> {
        let d = |f: &dyn Fn(Point) -> f64, e: Vector2<f64>| {
            (-f(x + e * 2.0 * h) + 8.0 * f(x + e * h) - 8.0 * f(x - e * h) + f(x - e * 2.0 * h)) / (12.0 * h)
        };
        let er = Vector2::new(1.0, 0.0);
        let ez = Vector2::new(0.0, 1.0);
        let (s, stt) = self.stress(x);
        let s11 = |p: Point| self.stress(p).0[(0, 0)];
        let s12 = |p: Point| self.stress(p).0[(0, 1)];
        let s21 = |p: Point| self.stress(p).0[(1, 0)];
        let s22 = |p: Point| self.stress(p).0[(1, 1)];
        Vector2::new(
            d(&s11, er) + d(&s12, ez) + (s[(0, 0)] - stt) / x.x,
            d(&s21, er) + d(&s22, ez) + s[(1, 0)] / x.x,
        )
    }

    /// Fourth-order central-difference strain of u, numbered as in [`Self::strain`].
    pub fn fd_strain(&self, x: Point, h: f64) -> [f64; 4] {
        let d = |f: &dyn Fn(Point) -> f64, e: Vector2<f64>| {
            (-f(x + e * 2.0 * h) + 8.0 * f(x + e * h) - 8.0 * f(x - e * h) + f(x - e * 2.0 * h)) / (12.0 * h)
        };
        let er = Vector2::new(1.0, 0.0);
        let ez = Vector2::new(0.0, 1.0);
        let ur = |p: Point| self.displacement(p).x;
        let uz = |p: Point| self.displacement(p).y;
        [
            d(&ur, er),
            0.5 * (d(&ur, ez) + d(&uz, er)),
            d(&uz, ez),
            self.displacement(x).x / x.x,
        ]
    }
}

/// The three measured error norms on one mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub sigma: f64,
    pub u: f64,
    pub asym: f64,
}

/// Error exactness: 2k + 6 plus the bump.
pub fn error_exactness(k: usize, quad_bump: u32) -> u32 {
    (2 * k as u32 + 6 + quad_bump).min(MAX_TRIANGLE_EXACTNESS)
}

/// Σ-norm stress error, recovered-displacement error and skew-part norm.
pub fn compute_errors(
    solution: &SolutionFields,
    case: &ManufacturedCase,
    layout: &DofLayout,
    quad_bump: u32,
) -> Result<ErrorNorms> {
    let rule = triangle_gauss_rule(error_exactness(layout.degree, quad_bump))?;
    let table = layout.basis.tabulate(&rule);
    let c = &solution.coeffs;
    if c.len() != layout.total() {
        return Err(FemError::CoefficientLength {
            got: c.len(),
            expected: layout.total(),
        });
    }
    let per_element: Vec<[f64; 3]> = (0..layout.num_triangles)
        .into_par_iter()
        .map(|t| {
            let map = &layout.maps[t];
            let smap = &layout.stress_maps[t];
            let mut acc = [0.0; 3];
            for q in 0..table.len() {
                let [xi, eta] = table.points[q];
                let x = map.apply(xi, eta);
                let r = x.x;
                let mut sh = Matrix2::<f64>::zeros();
                let mut cdiv = Vector2::<f64>::zeros();
                for (i, (v, d)) in table.bdm_at(q).iter().zip(table.div_at(q)).enumerate() {
                    let pv = map.jacobian * Vector2::new(v[0], v[1]) / map.det;
                    let pd = d / map.det;
                    let (idx, sign) = smap[i];
                    for row in 0..2 {
                        let coef = sign * c[layout.offsets[row] + idx];
                        sh[(row, 0)] += coef * pv.x;
                        sh[(row, 1)] += coef * pv.y;
                        cdiv[row] += coef * pd;
                    }
                }
                let hoop: f64 = table
                    .pk_at(q)
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * c[layout.hoop_dof(t, i)])
                    .sum();
                let mut w = Vector2::<f64>::zeros();
                let mut p = 0.0;
                for (i, v) in table.pkm1_at(q).iter().enumerate() {
                    w.x += v * c[layout.w_dof(t, 0, i)];
                    w.y += v * c[layout.w_dof(t, 1, i)];
                    p += v * c[layout.p_dof(t, i)];
                }
                let div_h = Vector2::new(cdiv.x + (sh[(0, 0)] - hoop) / r, cdiv.y + sh[(1, 0)] / r);
                let (s, stt) = case.stress(x);
                let f = case.body_force(x);
                let uh = Vector2::new(w.x + x.y * p, w.y - r * p);
                let u = case.displacement(x);
                let wr = table.weights[q] * map.det * r;
                acc[0] += wr * ((f - div_h).norm_squared() + (s - sh).norm_squared() + (stt - hoop).powi(2));
                acc[1] += wr * (u - uh).norm_squared();
                acc[2] += wr * 0.5 * (sh[(0, 1)] - sh[(1, 0)]).powi(2);
            }
            acc
        })
        .collect();
    let mut sums = [0.0; 3];
    for a in per_element {
        for i in 0..3 {
            sums[i] += a[i];
        }
    }
    let norms = ErrorNorms {
        sigma: sums[0].sqrt(),
        u: sums[1].sqrt(),
        asym: sums[2].sqrt(),
    };
    if !(norms.sigma.is_finite() && norms.u.is_finite() && norms.asym.is_finite()) {
        return Err(FemError::NonFiniteNorm);
    }
    Ok(norms)
}

/// One mesh of a refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub h: f64,
    pub errors: ErrorNorms,
}

/// Observed rate between two meshes: ln(e₀/e₁) / ln(h₀/h₁).
pub fn rate(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// Per-mesh errors of a refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// Rates (sigma, u, asym) between consecutive rows.
    pub fn rates(&self) -> Vec<[f64; 3]> {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                [
                    rate(a.errors.sigma, b.errors.sigma, a.h, b.h),
                    rate(a.errors.u, b.errors.u, a.h, b.h),
                    rate(a.errors.asym, b.errors.asym, a.h, b.h),
                ]
            })
            .collect()
    }
}

/// A study that stopped early; `partial` holds the meshes that succeeded.
#[derive(Debug, thiserror::Error)]
#[error("study failed at n = {n}: {source}")]
pub struct StudyError {
    pub n: usize,
    pub partial: ErrorReport,
    #[source]
    pub source: FemError,
}

/// Mesh layout and quadrature settings of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StudyOptions {
    pub diagonal: Diagonal,
    pub quad_bump: u32,
}

/// Solves on one n×n mesh and measures the errors.
pub fn run_single(case: &ManufacturedCase, k: u8, n: usize, options: &StudyOptions) -> Result<ErrorRow> {
    let mesh = build_unit_square_mesh(n, options.diagonal)?;
    let force = |x: Point| case.body_force(x);
    let system = assemble(
        &mesh,
        k,
        &case.params,
        &force,
        &AssemblyOptions {
            quad_bump: options.quad_bump,
        },
    )?;
    let solution = solve(&system)?;
    let errors = compute_errors(&solution, case, &system.layout, options.quad_bump)?;
    Ok(ErrorRow {
        n,
        h: 1.0 / n as f64,
        errors,
    })
}

/// Refinement study over the strictly increasing sizes in `n_list`.
pub fn convergence_study(
    case: &ManufacturedCase,
    k: u8,
    n_list: &[usize],
    options: &StudyOptions,
) -> std::result::Result<ErrorReport, StudyError> {
    if let Some(w) = n_list.windows(2).find(|w| w[1] <= w[0]) {
        return Err(StudyError {
            n: w[1],
            partial: ErrorReport { rows: Vec::new() },
            source: FemError::InvalidConfig("mesh sizes must be strictly increasing".into()),
        });
    }
    let results: Vec<Result<ErrorRow>> = n_list.par_iter().map(|&n| run_single(case, k, n, options)).collect();
    let mut rows = Vec::with_capacity(results.len());
    for (res, &n) in results.into_iter().zip(n_list) {
        match res {
            Ok(row) => rows.push(row),
            Err(source) => {
                return Err(StudyError {
                    n,
                    partial: ErrorReport { rows },
                    source,
                })
            }
        }
    }
    Ok(ErrorReport { rows })
}
