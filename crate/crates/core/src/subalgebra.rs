//! Inclusions of finite-dimensional C*-algebras: ranges of conditional
//! expectations, centers, minimal central projections, block factorizations
//! and the conditional expectations built from them.

use nalgebra::DVector;

use crate::matrixalg::{
    self, c, canonical_basis, hermitian_eigen, identity, joint_eigenbasis, kron, max_abs,
    null_space, orthonormalize_columns, CMatrix, Tolerance, C64, ONE, ZERO,
};
use crate::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_CUT: f64 = 1e-9;

/// Default seed for the random combinations used to split degenerate spaces.
pub const DEFAULT_SEED: u64 = 0x5eed;

pub fn vec_rowmajor(a: &CMatrix) -> DVector<C64> {
    let (r, cc) = a.shape();
    DVector::from_fn(r * cc, |k, _| a[(k / cc, k % cc)])
}

pub fn unvec_rowmajor(v: &[C64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// Completely positive map in Kraus form, Heisenberg picture:
/// `a ↦ Σ_k K_k† a K_k`, each `K_k` of shape `din × dout`.
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    din: usize,
    dout: usize,
    kraus: Vec<CMatrix>,
    /// Sites of the input algebra (empty when unlabelled).
    pub input_support: Vec<usize>,
    /// Sites of the output algebra (empty when unlabelled).
    pub output_support: Vec<usize>,
}

impl CPMap {
    pub fn from_kraus(din: usize, dout: usize, kraus: Vec<CMatrix>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::Malformed("empty Kraus list".into()));
        }
        for k in &kraus {
            if k.shape() != (din, dout) {
                return Err(Error::Malformed(format!(
                    "Kraus operator of shape {:?}, expected {:?}",
                    k.shape(),
                    (din, dout)
                )));
            }
        }
        Ok(CPMap { din, dout, kraus, input_support: Vec::new(), output_support: Vec::new() })
    }

    pub fn with_supports(mut self, input: Vec<usize>, output: Vec<usize>) -> Self {
        self.input_support = input;
        self.output_support = output;
        self
    }

    pub fn identity(d: usize) -> Self {
        CPMap { din: d, dout: d, kraus: vec![identity(d)], input_support: Vec::new(), output_support: Vec::new() }
    }

    /// Conjugation `a ↦ u† a u`.
    pub fn conjugation(u: &CMatrix) -> Self {
        let d = u.nrows();
        CPMap { din: d, dout: d, kraus: vec![u.clone()], input_support: Vec::new(), output_support: Vec::new() }
    }

    /// Pinching `a ↦ Σ p a p` by an orthogonal family of projections.
    pub fn pinching(projections: &[CMatrix]) -> Result<Self> {
        let d = projections.first().map(|p| p.nrows()).unwrap_or(0);
        CPMap::from_kraus(d, d, projections.to_vec())
    }

    pub fn din(&self) -> usize {
        self.din
    }

    pub fn dout(&self) -> usize {
        self.dout
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Input dimension not accounted for by the output, `din / dout`.
    pub fn environment_dim(&self) -> usize {
        self.din / self.dout
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dout, self.dout);
        for k in &self.kraus {
            out += k.adjoint() * a * k;
        }
        out
    }

    /// Pre-dual (Schrödinger picture): `ρ ↦ Σ K ρ K†`.
    pub fn apply_dual(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.din, self.din);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// Matrix of the map on row-major vectorizations, `dout² × din²`.
    pub fn superoperator(&self) -> CMatrix {
        let (di, dout) = (self.din, self.dout);
        let mut s = CMatrix::zeros(dout * dout, di * di);
        for k in &self.kraus {
            for p in 0..dout {
                for q in 0..dout {
                    for i in 0..di {
                        let a = k[(i, p)].conj();
                        if a == ZERO {
                            continue;
                        }
                        for j in 0..di {
                            s[(p * dout + q, i * di + j)] += a * k[(j, q)];
                        }
                    }
                }
            }
        }
        s
    }

    /// Choi matrix `Σ_ij e_ij ⊗ Φ(e_ij)`, indexed `[(i,p),(j,q)]`.
    pub fn choi(&self) -> CMatrix {
        let s = self.superoperator();
        let (di, dout) = (self.din, self.dout);
        CMatrix::from_fn(di * dout, di * dout, |r, cc| {
            let (i, p) = (r / dout, r % dout);
            let (j, q) = (cc / dout, cc % dout);
            s[(p * dout + q, i * di + j)]
        })
    }

    pub fn from_superoperator(s: &CMatrix, din: usize, dout: usize, tol: &Tolerance) -> Result<Self> {
        let choi = CMatrix::from_fn(din * dout, din * dout, |r, cc| {
            let (i, p) = (r / dout, r % dout);
            let (j, q) = (cc / dout, cc % dout);
            s[(p * dout + q, i * din + j)]
        });
        Self::from_choi(&choi, din, dout, tol)
    }

    pub fn from_choi(choi: &CMatrix, din: usize, dout: usize, tol: &Tolerance) -> Result<Self> {
        let dev = matrixalg::hermiticity_deviation(choi);
        let scale = max_abs(choi).max(1.0);
        if dev > tol.bound(scale) {
            return Err(Error::NotCompletelyPositive(-dev));
        }
        let (vals, vecs) = hermitian_eigen(choi);
        let top = vals.last().cloned().unwrap_or(0.0).max(0.0);
        if vals[0] < -tol.bound(top) {
            return Err(Error::NotCompletelyPositive(vals[0]));
        }
        let mut kraus = Vec::new();
        for (k, &l) in vals.iter().enumerate() {
            if l <= RANK_CUT * top {
                continue;
            }
            let w = vecs.column(k) * c(l.sqrt(), 0.0);
            kraus.push(CMatrix::from_fn(din, dout, |i, p| w[i * dout + p].conj()));
        }
        if kraus.is_empty() {
            kraus.push(CMatrix::zeros(din, dout));
        }
        CPMap::from_kraus(din, dout, kraus)
    }

    /// Heisenberg composition `self ∘ inner`.
    pub fn compose(&self, inner: &CPMap) -> Result<CPMap> {
        if inner.dout != self.din {
            return Err(Error::Malformed(format!(
                "cannot compose: inner output {} vs outer input {}",
                inner.dout, self.din
            )));
        }
        let mut kraus = Vec::with_capacity(self.kraus.len() * inner.kraus.len());
        for ko in &inner.kraus {
            for ks in &self.kraus {
                kraus.push(ko * ks);
            }
        }
        let mut out = CPMap::from_kraus(inner.din, self.dout, kraus)?;
        out.input_support = inner.input_support.clone();
        out.output_support = self.output_support.clone();
        Ok(out)
    }

    /// Tensor product: inputs ordered (self, other), outputs likewise.
    pub fn tensor(&self, other: &CPMap) -> CPMap {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(kron(a, b));
            }
        }
        CPMap {
            din: self.din * other.din,
            dout: self.dout * other.dout,
            kraus,
            input_support: Vec::new(),
            output_support: Vec::new(),
        }
    }

    /// The map `a ↦ Φ(a) ⊗ 1_env`, landing back in the input algebra.
    pub fn extend_output(&self) -> CPMap {
        let env = self.environment_dim();
        let mut kraus = Vec::with_capacity(self.kraus.len() * env);
        for k in &self.kraus {
            for s in 0..env {
                let mut sel = CMatrix::zeros(self.dout, self.dout * env);
                for i in 0..self.dout {
                    sel[(i, i * env + s)] = ONE;
                }
                kraus.push(k * sel);
            }
        }
        CPMap { din: self.din, dout: self.din, kraus, input_support: Vec::new(), output_support: Vec::new() }
    }

    /// The closure `a ↦ Φ(a ⊗ 1_env)` on the output algebra.
    pub fn closure(&self) -> CPMap {
        let env = self.environment_dim();
        let mut kraus = Vec::with_capacity(self.kraus.len() * env);
        for k in &self.kraus {
            for j in 0..env {
                let mut sel = CMatrix::zeros(self.dout, self.din);
                for i in 0..self.dout {
                    sel[(i, i * env + j)] = ONE;
                }
                kraus.push(sel * k);
            }
        }
        CPMap { din: self.dout, dout: self.dout, kraus, input_support: Vec::new(), output_support: Vec::new() }
    }

    /// Rewrites the Kraus list in minimal (Choi-eigenvector) form.
    pub fn minimal_kraus(&self, tol: &Tolerance) -> Result<CPMap> {
        let mut out = CPMap::from_choi(&self.choi(), self.din, self.dout, tol)?;
        out.input_support = self.input_support.clone();
        out.output_support = self.output_support.clone();
        Ok(out)
    }

    pub fn unital_deviation(&self) -> f64 {
        max_abs(&(self.apply(&identity(self.din)) - identity(self.dout)))
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.choi()).0.first().cloned().unwrap_or(0.0)
    }
}

/// Hilbert–Schmidt orthonormal basis of a unital *-subalgebra of `M_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubalgebraBasis {
    dim: usize,
    elems: Vec<CMatrix>,
}

impl SubalgebraBasis {
    /// Orthonormalizes a spanning family and verifies it is a unital
    /// *-algebra.
    pub fn new(dim: usize, spanning: &[CMatrix]) -> Result<Self> {
        let alg = Self::span(dim, spanning);
        let res = alg.closure_residual();
        if res > 1e-8 {
            return Err(Error::NotClosed(res));
        }
        Ok(alg)
    }

    fn span(dim: usize, spanning: &[CMatrix]) -> Self {
        if spanning.is_empty() {
            return SubalgebraBasis { dim, elems: Vec::new() };
        }
        let cols: Vec<DVector<C64>> = spanning.iter().map(vec_rowmajor).collect();
        let q = orthonormalize_columns(&CMatrix::from_columns(&cols), RANK_CUT.sqrt());
        let elems = q
            .column_iter()
            .map(|col| unvec_rowmajor(col.as_slice(), dim, dim))
            .collect();
        SubalgebraBasis { dim, elems }
    }

    pub fn full(dim: usize) -> Self {
        let elems = (0..dim * dim).map(|k| matrixalg::matrix_unit(dim, k / dim, k % dim)).collect();
        SubalgebraBasis { dim, elems }
    }

    pub fn scalars(dim: usize) -> Self {
        SubalgebraBasis { dim, elems: vec![identity(dim) * c(1.0 / (dim as f64).sqrt(), 0.0)] }
    }

    pub fn diagonal(dim: usize) -> Self {
        SubalgebraBasis {
            dim,
            elems: (0..dim).map(|k| matrixalg::matrix_unit(dim, k, k)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elems
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, a: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for b in &self.elems {
            let coef = (b.adjoint() * a).trace();
            out += b * coef;
        }
        out
    }

    pub fn residual(&self, a: &CMatrix) -> f64 {
        max_abs(&(a - self.project(a)))
    }

    pub fn contains(&self, a: &CMatrix, tol: &Tolerance) -> bool {
        tol.accepts(self.residual(a), max_abs(a))
    }

    /// Worst failure of unit, adjoint and product closure.
    pub fn closure_residual(&self) -> f64 {
        let mut worst = self.residual(&identity(self.dim));
        for a in &self.elems {
            worst = worst.max(self.residual(&a.adjoint()));
            for b in &self.elems {
                worst = worst.max(self.residual(&(a * b)));
            }
        }
        worst
    }

    /// A Hermitian basis of the same span.
    pub fn hermitian_basis(&self) -> Vec<CMatrix> {
        let mut herm = Vec::with_capacity(2 * self.elems.len());
        for b in &self.elems {
            herm.push((b + b.adjoint()) * c(0.5, 0.0));
            herm.push((b - b.adjoint()) * c(0.0, -0.5));
        }
        let cols: Vec<DVector<C64>> = herm.iter().map(vec_rowmajor).collect();
        let q = orthonormalize_columns(&CMatrix::from_columns(&cols), RANK_CUT.sqrt());
        // re-Hermitize: Gram–Schmidt over real combinations of Hermitian
        // matrices keeps them Hermitian up to rounding
        q.column_iter()
            .map(|col| matrixalg::hermitian_part(&unvec_rowmajor(col.as_slice(), self.dim, self.dim)))
            .collect()
    }
}

/// Range of an idempotent unital map `M_d → M_d`, as the eigenvalue-1
/// eigenspace of its superoperator.
pub fn fixed_point_algebra(e: &CPMap, tol: &Tolerance) -> Result<SubalgebraBasis> {
    if e.din() != e.dout() {
        return Err(Error::Malformed("fixed points need an endomorphism".into()));
    }
    let d = e.din();
    let unital = e.unital_deviation();
    if !tol.accepts(unital, 1.0) {
        return Err(Error::NotUnital(unital));
    }
    let s = e.superoperator();
    let idem = max_abs(&(&s * &s - &s));
    if !tol.accepts(idem, max_abs(&s)) {
        return Err(Error::NotIdempotent(idem));
    }
    let shifted = &s - identity(d * d);
    let null = null_space(&shifted, RANK_CUT);
    let elems: Vec<CMatrix> =
        null.column_iter().map(|col| unvec_rowmajor(col.as_slice(), d, d)).collect();
    SubalgebraBasis::new(d, &elems)
}

/// Center: solves `[z, b_k] = 0` for `z` in the algebra.
pub fn center(alg: &SubalgebraBasis) -> Result<SubalgebraBasis> {
    let d = alg.dim();
    let r = alg.len();
    let d2 = d * d;
    let mut sys = CMatrix::zeros(r * d2, r);
    for (j, bj) in alg.elements().iter().enumerate() {
        for (k, bk) in alg.elements().iter().enumerate() {
            let comm = matrixalg::commutator(bj, bk);
            for (t, z) in vec_rowmajor(&comm).iter().enumerate() {
                sys[(k * d2 + t, j)] = *z;
            }
        }
    }
    let null = null_space(&sys, RANK_CUT);
    let zs: Vec<CMatrix> = null
        .column_iter()
        .map(|coef| {
            alg.elements().iter().zip(coef.iter()).fold(CMatrix::zeros(d, d), |acc, (b, w)| acc + b * *w)
        })
        .collect();
    SubalgebraBasis::new(d, &zs)
}

fn rank_of(p: &CMatrix) -> usize {
    p.trace().re.round().max(0.0) as usize
}

/// Sort key: rank ascending, then the diagonal in descending lexicographic
/// order (so the projection reaching the earliest basis vector comes first).
fn projection_order(a: &CMatrix, b: &CMatrix) -> std::cmp::Ordering {
    rank_of(a).cmp(&rank_of(b)).then_with(|| {
        for k in 0..a.nrows() {
            let x = (a[(k, k)].re * 1e8).round();
            let y = (b[(k, k)].re * 1e8).round();
            if x != y {
                return y.total_cmp(&x);
            }
        }
        std::cmp::Ordering::Equal
    })
}

pub fn minimal_central_projections(alg: &SubalgebraBasis, seed: u64) -> Result<Vec<CMatrix>> {
    let d = alg.dim();
    let cen = center(alg)?;
    let herm = cen.hermitian_basis();
    let jb = joint_eigenbasis(&herm, d, seed)?;
    if jb.clusters.len() != cen.len() {
        return Err(Error::NotAFactor(format!(
            "center of dimension {} split into {} joint eigenspaces",
            cen.len(),
            jb.clusters.len()
        )));
    }
    let mut projs: Vec<CMatrix> = (0..jb.clusters.len()).map(|k| jb.projection(k)).collect();
    let mut worst: f64 = 0.0;
    for p in &projs {
        for b in alg.elements() {
            worst = worst.max(max_abs(&matrixalg::commutator(p, b)));
        }
    }
    if worst > 1e-8 {
        return Err(Error::NotClosed(worst));
    }
    projs.sort_by(projection_order);
    Ok(projs)
}

/// One block `p 𝒜 p ≅ N ⊗ N̄` of a subalgebra: `iso` is a `d × nm`
/// isometry with `iso† b iso = β ⊗ 1_m` for every algebra element `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub projection: CMatrix,
    pub iso: CMatrix,
    pub n: usize,
    pub m: usize,
}

impl Block {
    /// `iso (x ⊗ 1_m) iso†`
    pub fn lift_slow(&self, x: &CMatrix) -> CMatrix {
        &self.iso * kron(x, &identity(self.m)) * self.iso.adjoint()
    }

    /// `iso (1_n ⊗ y) iso†`
    pub fn lift_fast(&self, y: &CMatrix) -> CMatrix {
        &self.iso * kron(&identity(self.n), y) * self.iso.adjoint()
    }

    /// `Tr_m(iso† a iso)`
    pub fn slow_part(&self, a: &CMatrix) -> CMatrix {
        let x = self.iso.adjoint() * a * &self.iso;
        matrixalg::partial_trace_legs(&x, &[self.n, self.m], &[0])
    }

    /// `Tr_n(iso† a iso)`
    pub fn fast_part(&self, a: &CMatrix) -> CMatrix {
        let x = self.iso.adjoint() * a * &self.iso;
        matrixalg::partial_trace_legs(&x, &[self.n, self.m], &[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructure {
    pub dim: usize,
    pub blocks: Vec<Block>,
}

impl BlockStructure {
    pub fn projections(&self) -> Vec<CMatrix> {
        self.blocks.iter().map(|b| b.projection.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Largest deviation of the block data from its defining identities.
    pub fn reconstruction_residual(&self, alg: &SubalgebraBasis) -> f64 {
        let mut sum = CMatrix::zeros(self.dim, self.dim);
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            sum += &b.projection;
            worst = worst.max(max_abs(&(&b.iso * b.iso.adjoint() - &b.projection)));
            worst = worst.max(max_abs(&(b.iso.adjoint() * &b.iso - identity(b.n * b.m))));
            for a in alg.elements() {
                let x = b.iso.adjoint() * a * &b.iso;
                let beta = matrixalg::partial_trace_legs(&x, &[b.n, b.m], &[0]) * c(1.0 / b.m as f64, 0.0);
                worst = worst.max(max_abs(&(x - kron(&beta, &identity(b.m)))));
            }
        }
        worst.max(max_abs(&(sum - identity(self.dim))))
    }
}

/// Factor decomposition of the block of `alg` under the central projection
/// `p`: refines `p` to a minimal projection `E` of the algebra, builds matrix
/// units from `alg·E` and assembles the isometry column by column.
pub fn factorize_block(alg: &SubalgebraBasis, p: &CMatrix) -> Result<Block> {
    let d = alg.dim();
    let r = rank_of(p);
    let (vals, vecs) = hermitian_eigen(p);
    let mut q = vecs.columns(d - r, r).into_owned();
    if vals[..d - r].iter().any(|v| v.abs() > 1e-8) || vals[d - r..].iter().any(|v| (v - 1.0).abs() > 1e-8) {
        return Err(Error::NotAFactor("block projection is not a projection".into()));
    }
    q = canonical_basis(&q);
    let herm = alg.hermitian_basis();
    loop {
        let mut changed = false;
        for b in &herm {
            let red = q.adjoint() * b * &q;
            let k = red.ncols();
            let mean = red.trace() / c(k as f64, 0.0);
            let scale = max_abs(b).max(1e-300);
            if max_abs(&(&red - identity(k) * mean)) <= 1e-9 * scale {
                continue;
            }
            let (v, w) = hermitian_eigen(&red);
            let clusters = matrixalg::cluster_sorted(&v, matrixalg::DEGENERACY_REL);
            let first = clusters[0].clone();
            q = canonical_basis(&(&q * w.columns_range(first)));
            changed = true;
        }
        if !changed {
            break;
        }
    }
    let m = q.ncols();
    if m == 0 || r % m != 0 {
        return Err(Error::NotAFactor(format!("minimal projection of rank {m} in block of rank {r}")));
    }
    let n = r / m;

    // slow directions: the orbit 𝒜·q_0 in canonical (lexicographic) form,
    // so that e.g. a full matrix algebra gets the identity isometry
    let q0 = q.column(0).into_owned();
    let orbit = CMatrix::from_columns(&alg.elements().iter().map(|b| b * &q0).collect::<Vec<_>>());
    let slow = canonical_basis(&matrixalg::orthonormalize_columns(&orbit, 1e-8));
    if slow.ncols() != n {
        return Err(Error::NotAFactor(format!(
            "expected {n} slow directions in a block of rank {r} with multiplicity {m}, found {}",
            slow.ncols()
        )));
    }
    let mut iso = CMatrix::zeros(d, n * m);
    for i in 0..n {
        // matrix unit sending q_0 to slow_i, as an element of the algebra
        let u = alg.project(&(slow.column(i) * q0.adjoint())) * c(m as f64, 0.0);
        let cols = &u * &q;
        for k in 0..m {
            iso.set_column(i * m + k, &cols.column(k));
        }
    }
    let block = Block { projection: p.clone(), iso, n, m };
    let mut worst = max_abs(&(&block.iso * block.iso.adjoint() - p));
    worst = worst.max(max_abs(&(block.iso.adjoint() * &block.iso - identity(n * m))));
    for a in alg.elements() {
        let x = block.iso.adjoint() * a * &block.iso;
        let beta = block.slow_part(a) * c(1.0 / m as f64, 0.0);
        worst = worst.max(max_abs(&(x - kron(&beta, &identity(m)))));
    }
    if worst > 1e-8 {
        return Err(Error::NotAFactor(format!("factorization residual {worst:.3e}")));
    }
    Ok(block)
}

pub fn block_structure(alg: &SubalgebraBasis, seed: u64) -> Result<BlockStructure> {
    let projs = minimal_central_projections(alg, seed)?;
    let blocks = projs.iter().map(|p| factorize_block(alg, p)).collect::<Result<Vec<_>>>()?;
    Ok(BlockStructure { dim: alg.dim(), blocks })
}

/// The trace-preserving map `⊕_ω (id ⊗ Tr)` onto the subalgebra:
/// `a ↦ Σ_ω iso (Tr_m(iso† a iso) ⊗ 1_m) iso†`.
pub fn trace_preserving_ce(blocks: &BlockStructure) -> Result<CPMap> {
    let d = blocks.dim;
    let mut kraus = Vec::new();
    for b in &blocks.blocks {
        for k in 0..b.m {
            for l in 0..b.m {
                let unit = kron(&identity(b.n), &matrixalg::matrix_unit(b.m, l, k));
                kraus.push(&b.iso * unit * b.iso.adjoint());
            }
        }
    }
    CPMap::from_kraus(d, d, kraus)
}

/// Density of the restriction to the subalgebra, normalized by the ambient
/// trace: `Σ_ω iso (Tr_m(iso† T iso)/m ⊗ 1_m) iso†`.
pub fn compress_density(t: &CMatrix, blocks: &BlockStructure) -> CMatrix {
    let mut out = CMatrix::zeros(blocks.dim, blocks.dim);
    for b in &blocks.blocks {
        out += b.lift_slow(&(b.slow_part(t) * c(1.0 / b.m as f64, 0.0)));
    }
    out
}

/// Recovers the block states of a Umegaki conditional expectation
/// `e: M_{d·s} → M_d` whose range has the given block structure:
/// `e(a) = Σ_ω iso (id ⊗ φ_ω)((iso ⊗ 1)† a (iso ⊗ 1)) ⊗ 1_m) iso†`,
/// `φ_ω` a state on `N̄_ω ⊗ M_s`.
pub fn umegaki_block_states(e: &CPMap, blocks: &BlockStructure, tol: &Tolerance) -> Result<Vec<CMatrix>> {
    let d = e.dout();
    let s = e.environment_dim();
    if blocks.dim != d || s * d != e.din() {
        return Err(Error::Malformed("block structure does not match the map".into()));
    }
    let mut states = Vec::with_capacity(blocks.len());
    for b in &blocks.blocks {
        let y = b.lift_slow(&(matrixalg::matrix_unit(b.n, 0, 0) * c(1.0 / b.m as f64, 0.0)));
        let sigma = e.apply_dual(&y);
        let w = leading_slice(b, s);
        let phi = w.adjoint() * sigma * &w;
        states.push(phi);
    }
    let residual = umegaki_residual(e, blocks, &states);
    if !tol.accepts(residual, 1.0) {
        return Err(Error::NotUmegaki(residual));
    }
    for phi in &states {
        let tr = phi.trace();
        let min = matrixalg::min_eigenvalue(phi);
        if (tr - ONE).norm() > tol.bound(1.0) || min < -tol.bound(1.0) {
            return Err(Error::NotUmegaki((tr - ONE).norm().max(-min)));
        }
    }
    Ok(states)
}

/// `(iso ⊗ 1_s)(|0⟩ ⊗ 1_{m·s})`, a `d·s × m·s` isometry.
fn leading_slice(b: &Block, s: usize) -> CMatrix {
    let d = b.iso.nrows();
    let mut w = CMatrix::zeros(d * s, b.m * s);
    for k in 0..b.m {
        for t in 0..s {
            for row in 0..d {
                w[(row * s + t, k * s + t)] = b.iso[(row, k)];
            }
        }
    }
    w
}

/// Applies the map reassembled from block states.
pub fn umegaki_apply(blocks: &BlockStructure, states: &[CMatrix], s: usize, a: &CMatrix) -> CMatrix {
    let d = blocks.dim;
    let mut out = CMatrix::zeros(d, d);
    for (b, phi) in blocks.blocks.iter().zip(states) {
        let v = kron(&b.iso, &identity(s));
        let x = v.adjoint() * a * &v;
        let inner = b.m * s;
        let beta = CMatrix::from_fn(b.n, b.n, |i, j| {
            let blk = x.view((i * inner, j * inner), (inner, inner));
            (phi * blk).trace()
        });
        out += b.lift_slow(&beta);
    }
    out
}

fn umegaki_residual(e: &CPMap, blocks: &BlockStructure, states: &[CMatrix]) -> f64 {
    let din = e.din();
    let s = e.environment_dim();
    let mut worst: f64 = 0.0;
    for i in 0..din {
        for j in 0..din {
            let a = matrixalg::matrix_unit(din, i, j);
            worst = worst.max(max_abs(&(e.apply(&a) - umegaki_apply(blocks, states, s, &a))));
        }
    }
    worst
}

/// Deviations of a map `e: M_{d·s} → M_d` from the conditional-expectation
/// axioms, its range embedded as `b ⊗ 1_s`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxiomReport {
    pub unital: f64,
    pub idempotent: f64,
    pub module: f64,
    pub choi_min_eigenvalue: f64,
}

impl AxiomReport {
    pub fn max_violation(&self) -> f64 {
        self.unital.max(self.idempotent).max(self.module).max((-self.choi_min_eigenvalue).max(0.0))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

/// Axiom check through superoperator identities: `S∘(S ⊗ 1) = S` and
/// `S L_{b⊗1} = L_b S`, `S R_{b⊗1} = R_b S` for `b` in the range.
pub fn ce_axioms(e: &CPMap, tol: &Tolerance) -> Result<AxiomReport> {
    let range = fixed_point_algebra(&e.closure(), tol)?;
    Ok(ce_axioms_with_range(e, &range))
}

pub fn ce_axioms_with_range(e: &CPMap, range: &SubalgebraBasis) -> AxiomReport {
    let s = e.environment_dim();
    let sop = e.superoperator();
    let twice = e.compose(&e.extend_output()).expect("dimensions agree").superoperator();
    let idempotent = max_abs(&(twice - &sop));
    let mut module: f64 = 0.0;
    for b in range.elements() {
        let bi = kron(b, &identity(s));
        let left_in = kron(&bi, &identity(e.din()));
        let right_in = kron(&identity(e.din()), &bi.transpose());
        let left_out = kron(b, &identity(e.dout()));
        let right_out = kron(&identity(e.dout()), &b.transpose());
        module = module.max(max_abs(&(&sop * left_in - left_out * &sop)));
        module = module.max(max_abs(&(&sop * right_in - right_out * &sop)));
    }
    AxiomReport {
        unital: e.unital_deviation(),
        idempotent,
        module,
        choi_min_eigenvalue: e.choi_min_eigenvalue(),
    }
}
