//! Reference BDM_k and P_k bases, the Piola map, and global DOF numbering.
//!
//! Each stress row lives in BDM_k. Edge degrees of freedom are scaled normal
//! values `(φ·n)|e|` at the k+1 Gauss points of each edge; interior degrees of
//! freedom are reference moments against (P_{k−2})² and the first-kind
//! Nédélec completion `(η, −ξ) ξ^a η^b`, a + b = k − 2.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{FemError, Result};
use crate::geometry::{canonical_affine, AffineMap, BoundaryTag, Mesh, Point, LOCAL_EDGES};
use crate::poly::{monomial_count, monomial_exponents, Poly, PolyVec};
use crate::quadrature::{edge_gauss_rule, reference_monomial_integral, QuadratureRule};

/// Vertices of the reference triangle.
pub const REFERENCE_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Scaled outward normal `n̂ |ê|` of reference edge `l`.
pub fn reference_edge_normal(l: usize) -> [f64; 2] {
    let (a, b) = LOCAL_EDGES[l];
    let d = [
        REFERENCE_VERTICES[b][0] - REFERENCE_VERTICES[a][0],
        REFERENCE_VERTICES[b][1] - REFERENCE_VERTICES[a][1],
    ];
    [d[1], -d[0]]
}

/// Point at parameter `t` along reference edge `l`.
pub fn reference_edge_point(l: usize, t: f64) -> [f64; 2] {
    let (a, b) = LOCAL_EDGES[l];
    let (pa, pb) = (REFERENCE_VERTICES[a], REFERENCE_VERTICES[b]);
    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
}

/// Interior functionals are scaled by the inverse integral of the cubic bubble
/// ξη(1−ξ−η), which keeps interior basis coefficients of moderate size.
const INTERIOR_SCALE: f64 = 120.0;

/// Vector moments closing the BDM_k degree-of-freedom system.
fn interior_moments(k: usize) -> Vec<PolyVec> {
    if k < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (a, b) in monomial_exponents(k - 2) {
        out.push(PolyVec(Poly::monomial(a, b, 1.0), Poly::zero(0)));
    }
    for (a, b) in monomial_exponents(k - 2) {
        out.push(PolyVec(Poly::zero(0), Poly::monomial(a, b, 1.0)));
    }
    for (a, b) in monomial_exponents(k - 2) {
        if a + b == k - 2 {
            out.push(PolyVec(Poly::monomial(a, b + 1, 1.0), Poly::monomial(a + 1, b, -1.0)));
        }
    }
    out
}

/// Exact ∫ p over the reference triangle.
pub fn reference_integral(p: &Poly) -> f64 {
    monomial_exponents(p.degree())
        .into_iter()
        .map(|(a, b)| p.coeff(a, b) * reference_monomial_integral(a as u32, b as u32))
        .sum()
}

/// Reference BDM_k basis and discontinuous scalar bases.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub degree: usize,
    /// Edge functions first (edge `l`, point `j` at index `l(k+1)+j`), then interior.
    pub bdm_functions: Vec<PolyVec>,
    pub bdm_divergences: Vec<Poly>,
    /// Monomials ξ^a η^b of degree ≤ k.
    pub pk_functions: Vec<Poly>,
    /// Monomials of degree ≤ k − 1.
    pub pkm1_functions: Vec<Poly>,
    /// Gauss points on (0,1) used by the edge functionals.
    pub edge_points: Vec<f64>,
}

impl ElementBasis {
    pub fn dim(&self) -> usize {
        self.bdm_functions.len()
    }

    pub fn edge_dofs_per_edge(&self) -> usize {
        self.degree + 1
    }

    pub fn interior_dofs(&self) -> usize {
        self.dim() - 3 * (self.degree + 1)
    }

    /// Index of the basis function for edge `l`, point `j`.
    pub fn edge_dof(&self, l: usize, j: usize) -> usize {
        l * (self.degree + 1) + j
    }

    /// Applies every degree-of-freedom functional to a reference vector polynomial.
    pub fn functionals(&self, v: &PolyVec) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for l in 0..3 {
            let n = reference_edge_normal(l);
            for &t in &self.edge_points {
                let p = reference_edge_point(l, t);
                let val = v.eval(p[0], p[1]);
                out.push(val[0] * n[0] + val[1] * n[1]);
            }
        }
        for m in interior_moments(self.degree) {
            let moment = reference_integral(&(&(&v.0 * &m.0) + &(&v.1 * &m.1)));
            out.push(INTERIOR_SCALE * moment);
        }
        out
    }

    /// Values of all basis functions at the points of a reference rule.
    pub fn tabulate(&self, rule: &QuadratureRule) -> BasisTable {
        let nq = rule.len();
        let mut bdm = Vec::with_capacity(nq * self.dim());
        let mut div = Vec::with_capacity(nq * self.dim());
        let mut pk = Vec::with_capacity(nq * self.pk_functions.len());
        let mut pkm1 = Vec::with_capacity(nq * self.pkm1_functions.len());
        for p in &rule.points {
            for (f, d) in self.bdm_functions.iter().zip(&self.bdm_divergences) {
                bdm.push(f.eval(p[0], p[1]));
                div.push(d.eval(p[0], p[1]));
            }
            pk.extend(self.pk_functions.iter().map(|f| f.eval(p[0], p[1])));
            pkm1.extend(self.pkm1_functions.iter().map(|f| f.eval(p[0], p[1])));
        }
        BasisTable {
            points: rule.points.clone(),
            weights: rule.weights.clone(),
            nb: self.dim(),
            npk: self.pk_functions.len(),
            npkm1: self.pkm1_functions.len(),
            bdm,
            div,
            pk,
            pkm1,
        }
    }
}

/// Basis values at the points of one reference rule, indexed `[q * n + i]`.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub nb: usize,
    pub npk: usize,
    pub npkm1: usize,
    pub bdm: Vec<[f64; 2]>,
    pub div: Vec<f64>,
    pub pk: Vec<f64>,
    pub pkm1: Vec<f64>,
}

impl BasisTable {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bdm_at(&self, q: usize) -> &[[f64; 2]] {
        &self.bdm[q * self.nb..(q + 1) * self.nb]
    }

    pub fn div_at(&self, q: usize) -> &[f64] {
        &self.div[q * self.nb..(q + 1) * self.nb]
    }

    pub fn pk_at(&self, q: usize) -> &[f64] {
        &self.pk[q * self.npk..(q + 1) * self.npk]
    }

    pub fn pkm1_at(&self, q: usize) -> &[f64] {
        &self.pkm1[q * self.npkm1..(q + 1) * self.npkm1]
    }
}

fn scalar_monomials(degree: usize) -> Vec<Poly> {
    monomial_exponents(degree)
        .into_iter()
        .map(|(a, b)| Poly::monomial(a, b, 1.0))
        .collect()
}

/// Builds the reference basis by inverting the degree-of-freedom matrix.
pub fn reference_basis(k: u8) -> Result<ElementBasis> {
    if !(1..=3).contains(&k) {
        return Err(FemError::UnsupportedDegree(k));
    }
    let deg = k as usize;
    let edge_points = edge_gauss_rule(deg + 1)?.points;
    let mut raw = Vec::new();
    for (a, b) in monomial_exponents(deg) {
        raw.push(PolyVec(Poly::monomial(a, b, 1.0), Poly::zero(deg)));
    }
    for (a, b) in monomial_exponents(deg) {
        raw.push(PolyVec(Poly::zero(deg), Poly::monomial(a, b, 1.0)));
    }
    let nb = raw.len();
    let skeleton = ElementBasis {
        degree: deg,
        bdm_functions: Vec::new(),
        bdm_divergences: Vec::new(),
        pk_functions: Vec::new(),
        pkm1_functions: Vec::new(),
        edge_points: edge_points.clone(),
    };
    let mut dof = DMatrix::<f64>::zeros(nb, nb);
    for (j, f) in raw.iter().enumerate() {
        for (i, v) in skeleton.functionals(f).into_iter().enumerate() {
            dof[(i, j)] = v;
        }
    }
    if dof.nrows() != nb {
        return Err(FemError::SingularDofSystem(k));
    }
    let mut inv = dof.clone().try_inverse().ok_or(FemError::SingularDofSystem(k))?;
    // One step of iterative refinement.
    let resid = DMatrix::<f64>::identity(nb, nb) - &dof * &inv;
    inv += &inv * resid;
    let mut functions = Vec::with_capacity(nb);
    for i in 0..nb {
        let mut c0 = Poly::zero(deg);
        let mut c1 = Poly::zero(deg);
        for (j, f) in raw.iter().enumerate() {
            let c = inv[(j, i)];
            c0 = &c0 + &f.0.scale(c);
            c1 = &c1 + &f.1.scale(c);
        }
        functions.push(PolyVec(c0, c1));
    }
    let divergences = functions.iter().map(PolyVec::div).collect();
    let basis = ElementBasis {
        degree: deg,
        bdm_functions: functions,
        bdm_divergences: divergences,
        pk_functions: scalar_monomials(deg),
        pkm1_functions: scalar_monomials(deg - 1),
        edge_points,
    };
    // Guard against an ill-conditioned inversion.
    for (i, f) in basis.bdm_functions.iter().enumerate() {
        for (j, v) in basis.functionals(f).into_iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            if (v - expect).abs() > 1e-9 {
                return Err(FemError::SingularDofSystem(k));
            }
        }
    }
    Ok(basis)
}

/// Contravariant Piola transform of a reference value and divergence.
pub fn piola(map: &AffineMap, ref_value: Vector2<f64>, ref_div: f64) -> (Vector2<f64>, f64) {
    (map.jacobian * ref_value / map.det, ref_div / map.det)
}

/// Global numbering for the five solution blocks.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub degree: usize,
    pub basis: ElementBasis,
    pub maps: Vec<AffineMap>,
    pub num_edges: usize,
    pub num_triangles: usize,
    /// Unknowns per stress row.
    pub row_size: usize,
    pub hoop_per_element: usize,
    pub vector_per_element: usize,
    /// Offsets of stress row 1, row 2, σ_θθ, w, p, and the total.
    pub offsets: [usize; 6],
    /// Per element, `(index within a stress row, sign)` for each local BDM function.
    pub stress_maps: Vec<Vec<(usize, f64)>>,
    pub constrained: Vec<bool>,
    /// Free-unknown index of each global unknown; `None` when constrained.
    pub free_index: Vec<Option<usize>>,
    pub num_free: usize,
}

impl DofLayout {
    pub fn total(&self) -> usize {
        self.offsets[5]
    }

    pub fn row_offset(&self, row: usize) -> usize {
        self.offsets[row]
    }

    pub fn hoop_dof(&self, t: usize, i: usize) -> usize {
        self.offsets[2] + t * self.hoop_per_element + i
    }

    pub fn w_dof(&self, t: usize, comp: usize, i: usize) -> usize {
        self.offsets[3] + (t * 2 + comp) * self.vector_per_element + i
    }

    pub fn p_dof(&self, t: usize, i: usize) -> usize {
        self.offsets[4] + t * self.vector_per_element + i
    }

    pub fn edge_dof(&self, row: usize, edge: usize, j: usize) -> usize {
        self.offsets[row] + edge * (self.degree + 1) + j
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        (0..self.total()).filter(|&i| self.constrained[i]).collect()
    }

    /// Local unknowns of element `t` in the order
    /// [row 1 | row 2 | σ_θθ | w_r | w_z | p], with orientation signs.
    pub fn element_dofs(&self, t: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for row in 0..2 {
            out.extend(self.stress_maps[t].iter().map(|&(i, s)| (self.offsets[row] + i, s)));
        }
        out.extend((0..self.hoop_per_element).map(|i| (self.hoop_dof(t, i), 1.0)));
        for comp in 0..2 {
            out.extend((0..self.vector_per_element).map(|i| (self.w_dof(t, comp, i), 1.0)));
        }
        out.extend((0..self.vector_per_element).map(|i| (self.p_dof(t, i), 1.0)));
        out
    }

    /// Expands a free-unknown vector to all unknowns, with zeros at constrained ones.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        self.free_index
            .iter()
            .map(|fi| fi.map_or(0.0, |i| free[i]))
            .collect()
    }

    /// Restricts a full vector to its free unknowns.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_free];
        for (g, fi) in self.free_index.iter().enumerate() {
            if let Some(i) = fi {
                out[*i] = full[g];
            }
        }
        out
    }
}

/// Numbers all unknowns of degree `k` on `mesh` and marks axis-edge DOFs.
pub fn build_dof_layout(mesh: &Mesh, k: u8) -> Result<DofLayout> {
    let basis = reference_basis(k)?;
    let deg = basis.degree;
    let ne = mesh.num_edges();
    let nt = mesh.num_triangles();
    let per_edge = deg + 1;
    let nint = basis.interior_dofs();
    let row_size = per_edge * ne + nint * nt;
    let hoop = monomial_count(deg);
    let vec_dim = monomial_count(deg - 1);
    let mut offsets = [0usize; 6];
    offsets[1] = row_size;
    offsets[2] = 2 * row_size;
    offsets[3] = offsets[2] + hoop * nt;
    offsets[4] = offsets[3] + 2 * vec_dim * nt;
    offsets[5] = offsets[4] + vec_dim * nt;

    let mut maps = Vec::with_capacity(nt);
    let mut stress_maps = Vec::with_capacity(nt);
    for t in 0..nt {
        maps.push(canonical_affine(t, mesh)?);
        let tri = mesh.triangles[t];
        let mut local = Vec::with_capacity(basis.dim());
        for (l, &(a, _)) in LOCAL_EDGES.iter().enumerate() {
            let e = mesh.triangle_edges[t][l];
            let same = mesh.edges[e].vertices[0] == tri[a];
            for j in 0..per_edge {
                if same {
                    local.push((e * per_edge + j, 1.0));
                } else {
                    local.push((e * per_edge + (deg - j), -1.0));
                }
            }
        }
        for i in 0..nint {
            local.push((per_edge * ne + t * nint + i, 1.0));
        }
        stress_maps.push(local);
    }

    let total = offsets[5];
    let mut constrained = vec![false; total];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.tag == BoundaryTag::Axis {
            for row in 0..2 {
                for j in 0..per_edge {
                    constrained[offsets[row] + e * per_edge + j] = true;
                }
            }
        }
    }
    let mut free_index = vec![None; total];
    let mut num_free = 0;
    for (g, c) in constrained.iter().enumerate() {
        if !c {
            free_index[g] = Some(num_free);
            num_free += 1;
        }
    }
    Ok(DofLayout {
        degree: deg,
        basis,
        maps,
        num_edges: ne,
        num_triangles: nt,
        row_size,
        hoop_per_element: hoop,
        vector_per_element: vec_dim,
        offsets,
        stress_maps,
        constrained,
        free_index,
        num_free,
    })
}

/// Point values of a discrete solution on one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValues {
    /// Row i holds stress row i.
    pub stress: Matrix2<f64>,
    pub hoop: f64,
    pub div_axi: Vector2<f64>,
    pub w: Vector2<f64>,
    pub p: f64,
}

/// Stress rows and Cartesian row divergences of element `t` at a reference point.
pub(crate) fn eval_stress_parts(
    layout: &DofLayout,
    coeffs: &[f64],
    t: usize,
    xi: f64,
    eta: f64,
) -> (Matrix2<f64>, Vector2<f64>) {
    let map = &layout.maps[t];
    let mut stress = Matrix2::zeros();
    let mut cdiv = Vector2::zeros();
    for (i, (f, d)) in layout
        .basis
        .bdm_functions
        .iter()
        .zip(&layout.basis.bdm_divergences)
        .enumerate()
    {
        let v = f.eval(xi, eta);
        let (pv, pd) = piola(map, Vector2::new(v[0], v[1]), d.eval(xi, eta));
        let (idx, sign) = layout.stress_maps[t][i];
        for row in 0..2 {
            let c = sign * coeffs[layout.offsets[row] + idx];
            stress[(row, 0)] += c * pv.x;
            stress[(row, 1)] += c * pv.y;
            cdiv[row] += c * pd;
        }
    }
    (stress, cdiv)
}

/// Evaluates every field of a full coefficient vector at a reference point of element `tri`.
pub fn eval_discrete_field(
    layout: &DofLayout,
    coeffs: &[f64],
    tri: usize,
    ref_point: [f64; 2],
) -> Result<FieldValues> {
    if coeffs.len() != layout.total() {
        return Err(FemError::CoefficientLength {
            got: coeffs.len(),
            expected: layout.total(),
        });
    }
    let [xi, eta] = ref_point;
    if xi < -1e-14 || eta < -1e-14 || xi + eta > 1.0 + 1e-14 {
        return Err(FemError::PointOutsideTriangle(xi, eta));
    }
    let (stress, cdiv) = eval_stress_parts(layout, coeffs, tri, xi, eta);
    let b = &layout.basis;
    let hoop: f64 = b
        .pk_functions
        .iter()
        .enumerate()
        .map(|(i, f)| coeffs[layout.hoop_dof(tri, i)] * f.eval(xi, eta))
        .sum();
    let mut w = Vector2::zeros();
    let mut p = 0.0;
    for (i, f) in b.pkm1_functions.iter().enumerate() {
        let v = f.eval(xi, eta);
        w.x += coeffs[layout.w_dof(tri, 0, i)] * v;
        w.y += coeffs[layout.w_dof(tri, 1, i)] * v;
        p += coeffs[layout.p_dof(tri, i)] * v;
    }
    let r = layout.maps[tri].r_at(xi, eta);
    let n1 = stress[(0, 0)] - hoop;
    let n2 = stress[(1, 0)];
    let extra = |num: f64| if num == 0.0 { 0.0 } else { num / r };
    let div_axi = Vector2::new(cdiv.x + extra(n1), cdiv.y + extra(n2));
    if !div_axi.iter().all(|v| v.is_finite()) {
        return Err(FemError::NonFiniteIntegrand);
    }
    Ok(FieldValues {
        stress,
        hoop,
        div_axi,
        w,
        p,
    })
}

/// Exact fields used to build a canonical interpolant.
pub struct FieldSource<'a> {
    pub stress: &'a dyn Fn(Point) -> Matrix2<f64>,
    pub hoop: &'a dyn Fn(Point) -> f64,
    pub w: &'a dyn Fn(Point) -> Vector2<f64>,
    pub p: &'a dyn Fn(Point) -> f64,
}

/// Canonical interpolant: BDM degrees of freedom for the stress rows, local L²
/// projections for the scalar blocks. Axis-edge DOFs are left at zero.
pub fn interpolate_fields(mesh: &Mesh, layout: &DofLayout, src: &FieldSource<'_>) -> Result<Vec<f64>> {
    let deg = layout.degree;
    let mut out = vec![0.0; layout.total()];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.tag == BoundaryTag::Axis {
            continue;
        }
        let a = mesh.vertices[edge.vertices[0]];
        let b = mesh.vertices[edge.vertices[1]];
        let d = b - a;
        let n = Vector2::new(d.y, -d.x);
        for (j, &t) in layout.basis.edge_points.iter().enumerate() {
            let s = (src.stress)(a + d * t);
            for row in 0..2 {
                out[layout.edge_dof(row, e, j)] = s[(row, 0)] * n.x + s[(row, 1)] * n.y;
            }
        }
    }
    let rule = crate::quadrature::triangle_gauss_rule((2 * deg + 8).min(20) as u32)?;
    let moments = interior_moments(deg);
    let nedge = 3 * (deg + 1);
    for t in 0..layout.num_triangles {
        let map = &layout.maps[t];
        let jinv = map.jacobian.try_inverse().ok_or(FemError::DegenerateTriangle(t))?;
        for (m, mom) in moments.iter().enumerate() {
            for row in 0..2 {
                let val = rule.integrate(|xi, eta| {
                    let s = (src.stress)(map.apply(xi, eta));
                    let phys = Vector2::new(s[(row, 0)], s[(row, 1)]);
                    let pulled = jinv * phys * map.det;
                    let mv = mom.eval(xi, eta);
                    pulled.x * mv[0] + pulled.y * mv[1]
                });
                let (idx, _) = layout.stress_maps[t][nedge + m];
                out[layout.offsets[row] + idx] = INTERIOR_SCALE * val;
            }
        }
        let project = |basis: &[Poly], f: &dyn Fn(Point) -> f64| -> Result<Vec<f64>> {
            let nb = basis.len();
            let mut mass = DMatrix::<f64>::zeros(nb, nb);
            let mut rhs = nalgebra::DVector::<f64>::zeros(nb);
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                let vals: Vec<f64> = basis.iter().map(|p| p.eval(q[0], q[1])).collect();
                let fv = f(map.apply(q[0], q[1]));
                for i in 0..nb {
                    rhs[i] += w * vals[i] * fv;
                    for j in 0..nb {
                        mass[(i, j)] += w * vals[i] * vals[j];
                    }
                }
            }
            let sol = mass.lu().solve(&rhs).ok_or(FemError::SingularLocalSystem(t))?;
            Ok(sol.iter().copied().collect())
        };
        let hoop = project(&layout.basis.pk_functions, src.hoop)?;
        for (i, v) in hoop.into_iter().enumerate() {
            out[layout.hoop_dof(t, i)] = v;
        }
        for comp in 0..2 {
            let wc = project(&layout.basis.pkm1_functions, &|x| (src.w)(x)[comp])?;
            for (i, v) in wc.into_iter().enumerate() {
                out[layout.w_dof(t, comp, i)] = v;
            }
        }
        let pc = project(&layout.basis.pkm1_functions, src.p)?;
        for (i, v) in pc.into_iter().enumerate() {
            out[layout.p_dof(t, i)] = v;
        }
    }
    Ok(out)
}
