//! Element matrices, global assembly and direct solution of the saddle-point system.
//!
//! Unknown ordering is `(σ row 1, σ row 2, σ_θθ | w | p)`. Element integrals are
//! written in terms of `r ∇_axi·(τ, τ_θθ)`, which is polynomial on every element;
//! only the grad-div term keeps a pointwise `1/r`.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::error::{FemError, FieldBlock, Result};
use crate::geometry::{AffineMap, Mesh, Point};
use crate::quadrature::triangle_gauss_rule;
use crate::spaces::{build_dof_layout, BasisTable, DofLayout};

/// Spatial dimension in the trace term of the isotropic compliance.
pub const COMPLIANCE_TRACE_DIM: f64 = 3.0;

/// Lamé parameters and the grad-div weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            mu: 0.5,
            lambda: 1.0,
            gamma: 1.0,
        }
    }
}

impl MaterialParams {
    pub fn new(mu: f64, lambda: f64, gamma: f64) -> Result<MaterialParams> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(FemError::InvalidConfig(format!("mu must be positive, got {mu}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FemError::InvalidConfig(format!("lambda must be non-negative, got {lambda}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(FemError::InvalidConfig(format!("gamma must be non-negative, got {gamma}")));
        }
        Ok(MaterialParams { mu, lambda, gamma })
    }

    /// λ / (2μ + 3λ)
    pub fn trace_factor(&self) -> f64 {
        self.lambda / (2.0 * self.mu + COMPLIANCE_TRACE_DIM * self.lambda)
    }
}

/// Quadrature settings for assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssemblyOptions {
    /// Added to the default exactness 2k + 4.
    pub quad_bump: u32,
}

impl AssemblyOptions {
    pub fn exactness(&self, k: usize) -> u32 {
        (2 * k as u32 + 4 + self.quad_bump).min(crate::quadrature::MAX_TRIANGLE_EXACTNESS)
    }
}

/// Stress-side test function values at one quadrature point.
struct StressShape {
    /// τ11, τ12, τ21, τ22
    tau: [f64; 4],
    hoop: f64,
    /// r ∇_axi·(τ, τ_θθ)
    rdiv: [f64; 2],
}

/// Element matrices: `a` on the stress pair, `b` and `c` as (test × stress).
#[derive(Debug, Clone)]
pub struct ElementBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Element right-hand sides.
#[derive(Debug, Clone)]
pub struct ElementRhs {
    pub stress: DVector<f64>,
    pub w: DVector<f64>,
    pub p: DVector<f64>,
}

/// Local stress unknowns are [row 1 | row 2 | σ_θθ] in unsigned reference orientation.
fn stress_shapes(map: &AffineMap, table: &BasisTable, q: usize, r: f64) -> Vec<StressShape> {
    let nb = table.nb;
    let mut out = Vec::with_capacity(2 * nb + table.npk);
    let vals = table.bdm_at(q);
    let divs = table.div_at(q);
    for row in 0..2 {
        for i in 0..nb {
            let v = map.jacobian * Vector2::new(vals[i][0], vals[i][1]) / map.det;
            let d = divs[i] / map.det;
            let mut tau = [0.0; 4];
            tau[2 * row] = v.x;
            tau[2 * row + 1] = v.y;
            let mut rdiv = [0.0; 2];
            rdiv[row] = r * d + v.x;
            out.push(StressShape { tau, hoop: 0.0, rdiv });
        }
    }
    for &psi in table.pk_at(q) {
        out.push(StressShape {
            tau: [0.0; 4],
            hoop: psi,
            rdiv: [-psi, 0.0],
        });
    }
    out
}

/// Local a, b and c blocks on one element.
pub fn element_blocks(map: &AffineMap, table: &BasisTable, params: &MaterialParams) -> Result<ElementBlocks> {
    let ns = 2 * table.nb + table.npk;
    let nv = table.npkm1;
    let mut a = DMatrix::<f64>::zeros(ns, ns);
    let mut b = DMatrix::<f64>::zeros(2 * nv, ns);
    let mut c = DMatrix::<f64>::zeros(nv, ns);
    let inv2mu = 0.5 / params.mu;
    let tf = params.trace_factor();
    for q in 0..table.len() {
        let [xi, eta] = table.points[q];
        let x = map.apply(xi, eta);
        let r = x.x;
        if r.is_nan() || r <= 0.0 {
            return Err(FemError::NonFiniteIntegrand);
        }
        let da = table.weights[q] * map.det;
        let shapes = stress_shapes(map, table, q, r);
        for (i, si) in shapes.iter().enumerate() {
            let tri = si.tau[0] + si.tau[3] + si.hoop;
            for (j, sj) in shapes.iter().enumerate().skip(i) {
                let trj = sj.tau[0] + sj.tau[3] + sj.hoop;
                let contraction: f64 =
                    si.tau.iter().zip(&sj.tau).map(|(u, v)| u * v).sum::<f64>() + si.hoop * sj.hoop;
                let compliance = inv2mu * (contraction - tf * tri * trj) * r;
                let graddiv = params.gamma * (si.rdiv[0] * sj.rdiv[0] + si.rdiv[1] * sj.rdiv[1]) / r;
                a[(i, j)] += da * (compliance + graddiv);
            }
        }
        let scal = table.pkm1_at(q);
        for (m, &s) in scal.iter().enumerate() {
            for (j, sj) in shapes.iter().enumerate() {
                b[(m, j)] += da * sj.rdiv[0] * s;
                b[(nv + m, j)] += da * sj.rdiv[1] * s;
                let skew = (sj.tau[1] - sj.tau[2]) * r;
                let wedge = sj.rdiv[0] * x.y - sj.rdiv[1] * r;
                c[(m, j)] += da * (skew + wedge) * s;
            }
        }
    }
    for i in 0..ns {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(FemError::NonFiniteIntegrand);
    }
    Ok(ElementBlocks { a, b, c })
}

/// Local right-hand sides for body force `f`.
pub fn element_rhs(
    map: &AffineMap,
    table: &BasisTable,
    params: &MaterialParams,
    f: &dyn Fn(Point) -> Vector2<f64>,
) -> Result<ElementRhs> {
    let ns = 2 * table.nb + table.npk;
    let nv = table.npkm1;
    let mut rs = DVector::<f64>::zeros(ns);
    let mut rw = DVector::<f64>::zeros(2 * nv);
    let mut rp = DVector::<f64>::zeros(nv);
    for q in 0..table.len() {
        let [xi, eta] = table.points[q];
        let x = map.apply(xi, eta);
        let r = x.x;
        let fv = f(x);
        if !fv.iter().all(|v| v.is_finite()) {
            return Err(FemError::NonFiniteIntegrand);
        }
        let da = table.weights[q] * map.det;
        for (j, sj) in stress_shapes(map, table, q, r).iter().enumerate() {
            rs[j] += da * params.gamma * (fv.x * sj.rdiv[0] + fv.y * sj.rdiv[1]);
        }
        let wedge = fv.x * x.y - fv.y * r;
        for (m, &s) in table.pkm1_at(q).iter().enumerate() {
            rw[m] += da * fv.x * s * r;
            rw[nv + m] += da * fv.y * s * r;
            rp[m] += da * wedge * s * r;
        }
    }
    Ok(ElementRhs {
        stress: rs,
        w: rw,
        p: rp,
    })
}

/// Assembled system over free unknowns, with merged coordinate entries.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub layout: DofLayout,
    /// Column-major sorted `(row, col, value)` entries, duplicates merged.
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl SaddleSystem {
    pub fn dim(&self) -> usize {
        self.layout.num_free
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.abs()))
    }

    /// max |M − Mᵀ| over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let map: std::collections::HashMap<(usize, usize), f64> =
            self.entries.iter().map(|&(i, j, v)| ((i, j), v)).collect();
        self.entries
            .iter()
            .map(|&(i, j, v)| (v - map.get(&(j, i)).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    /// Block that owns free unknown `i`.
    pub fn block_of_free(&self, i: usize) -> FieldBlock {
        let g = self
            .layout
            .free_index
            .iter()
            .position(|f| *f == Some(i))
            .unwrap_or(0);
        block_of(&self.layout, g)
    }

    /// Coordinate text dump, one `i j value` line per entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for &(i, j, v) in &self.entries {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        out
    }

    /// Dense copy of the rows in `rows` and columns in `cols` (free indices).
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut rpos = vec![usize::MAX; self.dim()];
        let mut cpos = vec![usize::MAX; self.dim()];
        for (k, &r) in rows.iter().enumerate() {
            rpos[r] = k;
        }
        for (k, &c) in cols.iter().enumerate() {
            cpos[c] = k;
        }
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for &(i, j, v) in &self.entries {
            if rpos[i] != usize::MAX && cpos[j] != usize::MAX {
                m[(rpos[i], cpos[j])] += v;
            }
        }
        m
    }

    /// Free indices of the stress pair, and of the (w, p) multipliers.
    pub fn split_free(&self) -> (Vec<usize>, Vec<usize>) {
        let cut = self.layout.offsets[3];
        let mut stress = Vec::new();
        let mut mult = Vec::new();
        for (g, f) in self.layout.free_index.iter().enumerate() {
            if let Some(i) = f {
                if g < cut {
                    stress.push(*i);
                } else {
                    mult.push(*i);
                }
            }
        }
        (stress, mult)
    }
}

/// Block of a global unknown.
pub fn block_of(layout: &DofLayout, g: usize) -> FieldBlock {
    let o = &layout.offsets;
    if g < o[1] {
        FieldBlock::StressRow1
    } else if g < o[2] {
        FieldBlock::StressRow2
    } else if g < o[3] {
        FieldBlock::HoopStress
    } else if g < o[4] {
        FieldBlock::Displacement
    } else {
        FieldBlock::Rotation
    }
}

struct ElementContribution {
    blocks: ElementBlocks,
    rhs: ElementRhs,
}

/// Element loop: blocks computed in parallel, scattered in element order.
pub fn assemble(
    mesh: &Mesh,
    k: u8,
    params: &MaterialParams,
    force: &(dyn Fn(Point) -> Vector2<f64> + Sync),
    options: &AssemblyOptions,
) -> Result<SaddleSystem> {
    if mesh.num_triangles() == 0 {
        return Err(FemError::InvalidMeshSize(0));
    }
    let layout = build_dof_layout(mesh, k)?;
    let rule = triangle_gauss_rule(options.exactness(layout.degree))?;
    let table = layout.basis.tabulate(&rule);
    let contribs: Vec<Result<ElementContribution>> = (0..layout.num_triangles)
        .into_par_iter()
        .map(|t| {
            let map = &layout.maps[t];
            Ok(ElementContribution {
                blocks: element_blocks(map, &table, params)?,
                rhs: element_rhs(map, &table, params, force)?,
            })
        })
        .collect();

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; layout.num_free];
    for (t, contrib) in contribs.into_iter().enumerate() {
        let ElementContribution { blocks, rhs: erhs } = contrib?;
        let dofs = layout.element_dofs(t);
        let ns = blocks.a.nrows();
        let (sdofs, rest) = dofs.split_at(ns);
        let (wdofs, pdofs) = rest.split_at(blocks.b.nrows());
        let free = |g: usize| layout.free_index[g];
        for (i, &(gi, si)) in sdofs.iter().enumerate() {
            let Some(fi) = free(gi) else { continue };
            rhs[fi] += si * erhs.stress[i];
            for (j, &(gj, sj)) in sdofs.iter().enumerate() {
                if let Some(fj) = free(gj) {
                    let v = si * sj * blocks.a[(i, j)];
                    if v != 0.0 {
                        triplets.push((fi, fj, v));
                    }
                }
            }
            for (rows, block) in [(wdofs, &blocks.b), (pdofs, &blocks.c)] {
                for (m, &(gm, _)) in rows.iter().enumerate() {
                    let fm = free(gm).expect("multiplier unknowns are never constrained");
                    let v = si * block[(m, i)];
                    if v != 0.0 {
                        triplets.push((fm, fi, v));
                        triplets.push((fi, fm, v));
                    }
                }
            }
        }
        for (rows, vals) in [(wdofs, &erhs.w), (pdofs, &erhs.p)] {
            for (m, &(gm, _)) in rows.iter().enumerate() {
                let fm = free(gm).expect("multiplier unknowns are never constrained");
                rhs[fm] += vals[m];
            }
        }
    }
    triplets.sort_by_key(|t| (t.1, t.0));
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len() / 2);
    for (i, j, v) in triplets {
        match entries.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => entries.push((i, j, v)),
        }
    }
    Ok(SaddleSystem { layout, entries, rhs })
}

/// Gram matrix of the Σ inner product `∫ r (τ:σ + τ_θθ σ_θθ + ∇_axi·τ ∇_axi·σ)`
/// on the free stress unknowns, ordered as `split_free().0`.
///
/// With μ = 1/2, λ = 0 and γ = 1 the stabilised form reduces to exactly this
/// inner product, so the ordinary assembly is reused.
pub fn sigma_gram(mesh: &Mesh, k: u8, options: &AssemblyOptions) -> Result<DMatrix<f64>> {
    let unit = MaterialParams::new(0.5, 0.0, 1.0)?;
    let system = assemble(mesh, k, &unit, &|_| Vector2::zeros(), options)?;
    let (stress, _) = system.split_free();
    Ok(system.dense_block(&stress, &stress))
}

/// Weighted L² mass `∫ r (v·w + q p)` of the multipliers, ordered as `split_free().1`.
pub fn multiplier_mass(system: &SaddleSystem, options: &AssemblyOptions) -> Result<DMatrix<f64>> {
    let layout = &system.layout;
    let (_, mult) = system.split_free();
    let mut position = vec![usize::MAX; layout.num_free];
    for (pos, &f) in mult.iter().enumerate() {
        position[f] = pos;
    }
    let rule = triangle_gauss_rule(options.exactness(layout.degree))?;
    let table = layout.basis.tabulate(&rule);
    let nv = table.npkm1;
    let mut mass = DMatrix::<f64>::zeros(mult.len(), mult.len());
    for t in 0..layout.num_triangles {
        let map = &layout.maps[t];
        let mut local = DMatrix::<f64>::zeros(nv, nv);
        for q in 0..table.len() {
            let [xi, eta] = table.points[q];
            let wr = table.weights[q] * map.det * map.r_at(xi, eta);
            let v = table.pkm1_at(q);
            for i in 0..nv {
                for j in 0..nv {
                    local[(i, j)] += wr * v[i] * v[j];
                }
            }
        }
        let blocks = [
            (0..nv).map(|i| layout.w_dof(t, 0, i)).collect::<Vec<_>>(),
            (0..nv).map(|i| layout.w_dof(t, 1, i)).collect(),
            (0..nv).map(|i| layout.p_dof(t, i)).collect(),
        ];
        for dofs in &blocks {
            for (i, &gi) in dofs.iter().enumerate() {
                for (j, &gj) in dofs.iter().enumerate() {
                    let (Some(fi), Some(fj)) = (layout.free_index[gi], layout.free_index[gj]) else {
                        continue;
                    };
                    mass[(position[fi], position[fj])] += local[(i, j)];
                }
            }
        }
    }
    Ok(mass)
}

/// Discrete solution with constrained unknowns restored as zeros.
#[derive(Debug, Clone)]
pub struct SolutionFields {
    pub coeffs: Vec<f64>,
    pub offsets: [usize; 6],
    /// ‖Mx − b‖ / ‖b‖ of the free system.
    pub residual: f64,
}

impl SolutionFields {
    pub fn stress_row(&self, row: usize) -> &[f64] {
        &self.coeffs[self.offsets[row]..self.offsets[row + 1]]
    }

    pub fn hoop(&self) -> &[f64] {
        &self.coeffs[self.offsets[2]..self.offsets[3]]
    }

    pub fn w(&self) -> &[f64] {
        &self.coeffs[self.offsets[3]..self.offsets[4]]
    }

    pub fn p(&self) -> &[f64] {
        &self.coeffs[self.offsets[4]..self.offsets[5]]
    }
}

pub const SOLVER_TOLERANCE: f64 = 1e-9;

/// Sparse LU solve of the free system for an arbitrary right-hand side.
pub fn solve_free(system: &SaddleSystem, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = system.dim();
    let trips: Vec<Triplet<usize, usize, f64>> = system
        .entries
        .iter()
        .map(|&(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| FemError::InvalidConfig(format!("sparse matrix construction failed: {e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => FemError::SingularMatrix {
            block: system.block_of_free(index.min(n.saturating_sub(1))),
            index,
        },
        other => FemError::InvalidConfig(format!("sparse factorisation failed: {other:?}")),
    })?;
    let mut x = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    lu.solve_in_place(x.as_mut());
    let sol: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if let Some(bad) = sol.iter().position(|v| !v.is_finite()) {
        return Err(FemError::SingularMatrix {
            block: system.block_of_free(bad),
            index: bad,
        });
    }
    let ax = system.matvec(&sol);
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rnorm = ax.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let residual = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
    if residual > SOLVER_TOLERANCE {
        return Err(FemError::ResidualTooLarge {
            residual,
            tolerance: SOLVER_TOLERANCE,
        });
    }
    Ok((sol, residual))
}

/// Solves the assembled system and expands to all unknowns.
pub fn solve(system: &SaddleSystem) -> Result<SolutionFields> {
    let (sol, residual) = solve_free(system, &system.rhs)?;
    Ok(SolutionFields {
        coeffs: system.layout.expand(&sol),
        offsets: system.layout.offsets,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_square_mesh, Diagonal};
    use crate::quadrature::exact_weighted_monomial;
    use crate::spaces::{interpolate_fields, FieldSource};
    use nalgebra::Matrix2;

    fn off_axis_triangle() -> AffineMap {
        AffineMap::from_points([Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(1.0, 1.0)]).unwrap()
    }

    /// Weighted forms evaluated directly from field closures on one triangle.
    struct Pair<'a> {
        tau: &'a dyn Fn(Point) -> Matrix2<f64>,
        hoop: &'a dyn Fn(Point) -> f64,
    }

    fn a_form(map: &AffineMap, params: &MaterialParams, s: &Pair, t: &Pair) -> f64 {
        let rule = triangle_gauss_rule(10).unwrap();
        crate::quadrature::integrate_weighted(map, &rule, |x| {
            let (a, b) = ((s.tau)(x), (t.tau)(x));
            let (ha, hb) = ((s.hoop)(x), (t.hoop)(x));
            let tra = a.trace() + ha;
            let trb = b.trace() + hb;
            (a.component_mul(&b).sum() + ha * hb - params.trace_factor() * tra * trb) / (2.0 * params.mu)
        })
        .unwrap()
    }

    #[test]
    fn compliance_example() {
        let map = off_axis_triangle();
        let params = MaterialParams {
            gamma: 0.0,
            ..Default::default()
        };
        let id = Pair {
            tau: &|_| Matrix2::identity(),
            hoop: &|_| 1.0,
        };
        assert!((a_form(&map, &params, &id, &id) - 0.5).abs() < 1e-14);
        assert!((params.trace_factor() - 0.25).abs() < 1e-15);
    }

    /// Coefficients of a field in the element basis of one triangle.
    fn local_coeffs(map: &AffineMap, k: u8, src: &FieldSource) -> (Vec<f64>, crate::spaces::ElementBasis) {
        let mesh = Mesh::from_triangles(
            vec![map.offset, map.apply(1.0, 0.0), map.apply(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let layout = build_dof_layout(&mesh, k).unwrap();
        let full = interpolate_fields(&mesh, &layout, src).unwrap();
        let mut local = Vec::new();
        for row in 0..2 {
            for &(i, s) in &layout.stress_maps[0] {
                local.push(s * full[layout.offsets[row] + i]);
            }
        }
        local.extend_from_slice(&full[layout.offsets[2]..layout.offsets[3]]);
        local.extend_from_slice(&full[layout.offsets[3]..layout.offsets[5]]);
        (local, layout.basis)
    }

    #[test]
    fn block_examples_on_reference_fields() {
        let map = off_axis_triangle();
        let params = MaterialParams {
            gamma: 0.0,
            ..Default::default()
        };
        let rule = triangle_gauss_rule(8).unwrap();
        let src_id = FieldSource {
            stress: &|_| Matrix2::identity(),
            hoop: &|_| 1.0,
            w: &|_| Vector2::new(1.0, 0.0),
            p: &|_| 1.0,
        };
        let (c, basis) = local_coeffs(&map, 1, &src_id);
        let table = basis.tabulate(&rule);
        let blocks = element_blocks(&map, &table, &params).unwrap();
        let ns = blocks.a.nrows();
        let s = DVector::from_column_slice(&c[..ns]);
        assert!((s.dot(&(&blocks.a * &s)) - 0.5).abs() < 1e-12);

        // τ = 0, τ_θθ = r, v = (1, 0): b = −∫ r
        let src_b = FieldSource {
            stress: &|_| Matrix2::zeros(),
            hoop: &|x| x.x,
            w: &|_| Vector2::new(1.0, 0.0),
            p: &|_| 0.0,
        };
        let (c, _) = local_coeffs(&map, 1, &src_b);
        let s = DVector::from_column_slice(&c[..ns]);
        let v = DVector::from_column_slice(&c[ns..ns + blocks.b.nrows()]);
        assert!((v.dot(&(&blocks.b * &s)) + 2.0 / 3.0).abs() < 1e-12);

        // τ12 = 1, q = 1: c = ∫ r
        let src_c = FieldSource {
            stress: &|_| Matrix2::new(0.0, 1.0, 0.0, 0.0),
            hoop: &|_| 0.0,
            w: &|_| Vector2::zeros(),
            p: &|_| 1.0,
        };
        let (c, _) = local_coeffs(&map, 1, &src_c);
        let s = DVector::from_column_slice(&c[..ns]);
        let q = DVector::from_column_slice(&c[ns + blocks.b.nrows()..]);
        assert!((q.dot(&(&blocks.c * &s)) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rhs_examples() {
        let map = off_axis_triangle();
        let params = MaterialParams::default();
        let rule = triangle_gauss_rule(8).unwrap();
        let basis = crate::spaces::reference_basis(1).unwrap();
        let table = basis.tabulate(&rule);
        let zero = element_rhs(&map, &table, &params, &|_| Vector2::zeros()).unwrap();
        assert!(zero.stress.iter().chain(zero.w.iter()).chain(zero.p.iter()).all(|v| *v == 0.0));

        // the first P0 function is the constant 1
        let up = element_rhs(&map, &table, &params, &|_| Vector2::new(0.0, 1.0)).unwrap();
        // ∫ r² over T: r = 1 + ξ, det 1
        let r2 = exact_weighted_monomial(0, 0, 1.0, 0.0, true) + exact_weighted_monomial(1, 0, 1.0, 0.0, true);
        assert!((up.p[0] + r2).abs() < 1e-13);
        let right = element_rhs(&map, &table, &params, &|_| Vector2::new(1.0, 0.0)).unwrap();
        assert!((right.w[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn smallest_system_dimension_and_symmetry() {
        let mesh = build_unit_square_mesh(1, Diagonal::NorthEast).unwrap();
        let sys = assemble(&mesh, 1, &MaterialParams::default(), &|_| Vector2::new(1.0, 0.5), &Default::default())
            .unwrap();
        assert_eq!(sys.dim(), 28);
        assert!(sys.symmetry_defect() <= 1e-12 * sys.max_abs());
    }

    #[test]
    fn zero_force_gives_zero_solution() {
        let mesh = build_unit_square_mesh(2, Diagonal::NorthEast).unwrap();
        let sys = assemble(&mesh, 1, &MaterialParams::default(), &|_| Vector2::zeros(), &Default::default()).unwrap();
        let sol = solve(&sys).unwrap();
        assert!(sol.coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn block_pattern_has_zero_multiplier_blocks() {
        let mesh = build_unit_square_mesh(2, Diagonal::NorthWest).unwrap();
        let sys = assemble(&mesh, 2, &MaterialParams::default(), &|_| Vector2::new(1.0, 1.0), &Default::default())
            .unwrap();
        let (_, mult) = sys.split_free();
        let first_mult = mult[0];
        for &(i, j, _) in &sys.entries {
            assert!(i < first_mult || j < first_mult);
        }
    }

    #[test]
    fn linear_scaling_of_solution() {
        let mesh = build_unit_square_mesh(3, Diagonal::NorthEast).unwrap();
        let f = |x: Point| Vector2::new(x.x * (1.0 - x.y), x.y.sin());
        let s1 = solve(&assemble(&mesh, 2, &MaterialParams::default(), &f, &Default::default()).unwrap()).unwrap();
        let g = |x: Point| f(x) * 3.5;
        let s2 = solve(&assemble(&mesh, 2, &MaterialParams::default(), &g, &Default::default()).unwrap()).unwrap();
        let num: f64 = s1.coeffs.iter().zip(&s2.coeffs).map(|(a, b)| (3.5 * a - b).powi(2)).sum();
        let den: f64 = s2.coeffs.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn coordinate_dump_has_one_line_per_entry() {
        let mesh = build_unit_square_mesh(1, Diagonal::NorthEast).unwrap();
        let sys = assemble(&mesh, 1, &MaterialParams::default(), &|_| Vector2::new(1.0, 0.0), &Default::default())
            .unwrap();
        assert_eq!(sys.to_coordinate_text().lines().count(), sys.entries.len());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MaterialParams::new(0.0, 1.0, 1.0).is_err());
        assert!(MaterialParams::new(0.5, -1.0, 1.0).is_err());
        assert!(MaterialParams::new(0.5, 1.0, -0.1).is_err());
        assert!(MaterialParams::new(0.5, 1.0, 1.0).is_ok());
    }

    #[test]
    fn gram_and_mass_are_positive() {
        let mesh = build_unit_square_mesh(2, Diagonal::NorthEast).unwrap();
        let opts = AssemblyOptions::default();
        let gram = sigma_gram(&mesh, 1, &opts).unwrap();
        assert!((&gram - gram.transpose()).amax() < 1e-13);
        assert!(gram.clone().cholesky().is_some());

        let system = assemble(&mesh, 1, &MaterialParams::default(), &|_| Vector2::zeros(), &opts).unwrap();
        let mass = multiplier_mass(&system, &opts).unwrap();
        // Unit p (and zero w) everywhere: ∫ r over the unit square.
        let (_, mult) = system.split_free();
        let ones = DVector::from_iterator(
            mult.len(),
            mult.iter().map(|&f| {
                if system.block_of_free(f) == FieldBlock::Rotation {
                    1.0
                } else {
                    0.0
                }
            }),
        );
        assert!(((ones.transpose() * &mass * &ones)[(0, 0)] - 0.5).abs() < 1e-13);
    }
}
