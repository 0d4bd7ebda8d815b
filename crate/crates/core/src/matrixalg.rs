//! Dense complex operator arithmetic over labelled tensor factors.
//!
//! Basis convention: an operator on several sites is a Kronecker product in
//! the global vertex enumeration order, the earlier vertex being the slower
//! index. All tensor-leg bookkeeping goes through [`leg_map`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("operator supports overlap at site {0}")]
    OverlappingSupports(usize),
    #[error("site {0} is not contained in the target support")]
    SupportNotContained(usize),
    #[error("support must be strictly increasing, got {0:?}")]
    UnsortedSupport(Vec<usize>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("state is not faithful: smallest eigenvalue {min:.3e} is below the floor {floor:.3e}")]
    NotFaithful { min: f64, floor: f64 },
    #[error("family of operators cannot be jointly diagonalised (residual {0:.3e})")]
    NotCommuting(f64),
    #[error("not a state: {0}")]
    NotAState(String),
}

/// Mixed absolute/relative tolerance: a deviation passes when it is below
/// `max(abs, rel * scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-10, rel: 1e-9 }
    }
}

impl Tolerance {
    pub fn bound(&self, scale: f64) -> f64 {
        self.abs.max(self.rel * scale)
    }

    pub fn accepts(&self, deviation: f64, scale: f64) -> bool {
        deviation <= self.bound(scale)
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Complex product through four real GEMMs; much faster than the generic
/// complex kernel for the dense volumes.
pub fn cmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| c(re[(i, j)], im[(i, j)]))
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut s = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all<'a>(mats: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    mats.into_iter()
        .fold(CMatrix::from_element(1, 1, ONE), |acc, m| acc.kronecker(m))
}

pub fn matrix_unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v, 0.0);
    }
    m
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.trace()
}

/// Spectral norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Index map for a permutation of tensor legs: new leg `k` is old leg
/// `perm[k]`. Entry `f` of the result is the old flat index of new flat
/// index `f` (row-major, first leg slowest).
pub fn leg_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    assert_eq!(dims.len(), perm.len());
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut old_strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        old_strides[k] = old_strides[k + 1] * dims[k + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..total {
        out.push(digits.iter().zip(&strides).map(|(d, s)| d * s).sum());
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < new_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    out
}

pub fn permute_legs(m: &CMatrix, dims: &[usize], perm: &[usize]) -> CMatrix {
    let map = leg_map(dims, perm);
    let d = map.len();
    CMatrix::from_fn(d, d, |i, j| m[(map[i], map[j])])
}

/// Permutes only the row space (e.g. for isometries and Kraus operators).
pub fn permute_rows(m: &CMatrix, dims: &[usize], perm: &[usize]) -> CMatrix {
    let map = leg_map(dims, perm);
    CMatrix::from_fn(map.len(), m.ncols(), |i, j| m[(map[i], j)])
}

/// Traces out every leg not listed in `keep`; the kept legs stay in the
/// order given.
pub fn partial_trace_legs(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let perm: Vec<usize> = keep.iter().chain(&traced).cloned().collect();
    let p = permute_legs(m, dims, &perm);
    let dk: usize = keep.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();
    CMatrix::from_fn(dk, dk, |i, j| (0..dt).map(|t| p[(i * dt + t, j * dt + t)]).sum())
}

/// Eigen-decomposition of the Hermitian part, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let d = m.nrows();
    if d == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0.first().cloned().unwrap_or(0.0)
}

/// Applies a real function to a Hermitian matrix through its spectrum.
pub fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let fv: Vec<f64> = vals.iter().map(|&v| f(v)).collect();
    &vecs * diag_real(&fv) * vecs.adjoint()
}

fn check_hermitian(m: &CMatrix, tol: &Tolerance) -> Result<(), AlgebraError> {
    let dev = hermiticity_deviation(m);
    if !tol.accepts(dev, max_abs(m)) {
        return Err(AlgebraError::NotHermitian(dev));
    }
    Ok(())
}

/// Relative eigenvalue floor below which a density counts as non-faithful.
pub const FAITHFUL_FLOOR: f64 = 1e-12;

pub fn matrix_log(m: &CMatrix, tol: &Tolerance) -> Result<CMatrix, AlgebraError> {
    check_hermitian(m, tol)?;
    let (vals, vecs) = hermitian_eigen(m);
    let max = vals.iter().cloned().fold(0.0, f64::max);
    let floor = FAITHFUL_FLOOR * max;
    let min = vals.first().cloned().unwrap_or(0.0);
    if min <= floor {
        return Err(AlgebraError::NotFaithful { min, floor });
    }
    let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    Ok(&vecs * diag_real(&logs) * vecs.adjoint())
}

pub fn matrix_exp(m: &CMatrix, tol: &Tolerance) -> Result<CMatrix, AlgebraError> {
    check_hermitian(m, tol)?;
    Ok(hermitian_fn(m, f64::exp))
}

/// Singular values below this count as zero regardless of scale.
pub const NULL_ABS_FLOOR: f64 = 1e-11;

/// Orthonormal basis of the right null space: singular values below
/// `rel_cut * σ_max` (or [`NULL_ABS_FLOOR`]) count as zero.
pub fn null_space(m: &CMatrix, rel_cut: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    if m.iter().all(|z| *z == ZERO) {
        return identity(cols);
    }
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    // absolute floor: inputs here are built from normalized operators
    let cut = (rel_cut * smax).max(NULL_ABS_FLOOR);
    let keep: Vec<usize> = (0..vt.nrows())
        .filter(|&k| svd.singular_values[k] <= cut)
        .collect();
    let mut out = CMatrix::zeros(cols, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        for i in 0..cols {
            out[(i, j)] = vt[(k, i)].conj();
        }
    }
    out
}

/// Modified Gram–Schmidt; drops columns whose residual norm falls below
/// `cut` times their original norm.
pub fn orthonormalize_columns(m: &CMatrix, cut: f64) -> CMatrix {
    let mut kept: Vec<nalgebra::DVector<C64>> = Vec::new();
    let largest = m.column_iter().map(|col| col.norm()).fold(0.0, f64::max);
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        let n0 = v.norm();
        if n0 <= 1e-12 * largest || n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &kept {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let n = v.norm();
        if n > cut * n0 {
            kept.push(v / c(n, 0.0));
        }
    }
    if kept.is_empty() {
        return CMatrix::zeros(m.nrows(), 0);
    }
    CMatrix::from_columns(&kept)
}

/// Multiplies a vector by a phase so its first significant entry is real
/// and positive.
pub fn fix_phase(v: &mut nalgebra::DVector<C64>) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * scale).cloned() {
        let phase = z.conj() / z.norm();
        *v *= phase;
    }
}

/// Canonical orthonormal basis of the span of the orthonormal columns `q`:
/// computational basis vectors are projected into the subspace in order and
/// Gram–Schmidt'ed.
pub fn canonical_basis(q: &CMatrix) -> CMatrix {
    let (d, k) = q.shape();
    if k == 0 {
        return q.clone();
    }
    let proj = q * q.adjoint();
    let mut kept: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(k);
    for i in 0..d {
        if kept.len() == k {
            break;
        }
        let mut v = proj.column(i).into_owned();
        for _ in 0..2 {
            for w in &kept {
                let p = w.dotc(&v);
                v -= w * p;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            let mut v = v / c(n, 0.0);
            fix_phase(&mut v);
            kept.push(v);
        }
    }
    if kept.len() < k {
        // numerically pathological subspace: keep the original columns
        return q.clone();
    }
    CMatrix::from_columns(&kept)
}

/// Groups ascending eigenvalues into clusters of numerically equal values.
pub fn cluster_sorted(values: &[f64], rel: f64) -> Vec<std::ops::Range<usize>> {
    let scale = values.iter().map(|v| v.abs()).fold(1e-300, f64::max);
    let gap = (rel * scale).max(1e-12);
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > gap {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Joint eigenbasis of a family of commuting Hermitian matrices.
#[derive(Debug, Clone)]
pub struct JointEigenbasis {
    /// Unitary whose columns are the joint eigenvectors.
    pub vectors: CMatrix,
    /// Column ranges of the joint eigenspaces.
    pub clusters: Vec<std::ops::Range<usize>>,
}

impl JointEigenbasis {
    pub fn projection(&self, k: usize) -> CMatrix {
        let cols = self.vectors.columns_range(self.clusters[k].clone());
        &cols * cols.adjoint()
    }
}

/// Relative spread under which eigenvalues are treated as degenerate.
pub const DEGENERACY_REL: f64 = 1e-8;

/// Absolute spread (relative to `max(1, ‖m‖)`) below which a member of a
/// commuting family is treated as a multiple of the identity.
pub const SCALAR_FLOOR: f64 = 1e-12;

/// Simultaneous eigenbasis: diagonalises a seeded random positive combination
/// of the family, sorts eigenvalues ascending, resolves degenerate subspaces
/// canonically, then verifies. When an accidental degeneracy of the
/// combination merges distinct joint eigenspaces, falls back to refining by
/// each member in turn.
pub fn joint_eigenbasis(
    mats: &[CMatrix],
    dim: usize,
    seed: u64,
) -> Result<JointEigenbasis, AlgebraError> {
    if mats.is_empty() {
        return Ok(JointEigenbasis { vectors: identity(dim), clusters: vec![0..dim] });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut combo = CMatrix::zeros(dim, dim);
    for m in mats {
        // numerically scalar members carry no spectral information; their
        // rounding noise must not be rescaled into a splitting
        let n = max_abs(m);
        if !numerically_scalar(m) {
            let w: f64 = rng.random_range(0.5..1.5);
            combo += hermitian_part(m) * c(w / n, 0.0);
        }
    }
    let (vals, vecs) = hermitian_eigen(&combo);
    let clusters = cluster_sorted(&vals, DEGENERACY_REL);
    let vectors = canonicalize_clusters(&vecs, &clusters);
    let candidate = JointEigenbasis { vectors, clusters };
    if joint_residual(mats, &candidate) <= 1e-8 {
        return Ok(candidate);
    }

    // sequential refinement
    let mut spaces: Vec<CMatrix> = vec![identity(dim)];
    for m in mats.iter().filter(|m| !numerically_scalar(m)) {
        let h = hermitian_part(m);
        let mut next = Vec::new();
        for q in spaces {
            let reduced = q.adjoint() * &h * &q;
            let (v, w) = hermitian_eigen(&reduced);
            let rotated = &q * w;
            for r in cluster_sorted(&v, DEGENERACY_REL) {
                next.push(rotated.columns_range(r).into_owned());
            }
        }
        spaces = next;
    }
    let mut cols = Vec::new();
    let mut clusters = Vec::new();
    for q in &spaces {
        let start = cols.len();
        let canon = canonical_basis(q);
        cols.extend(canon.column_iter().map(|c| c.into_owned()));
        clusters.push(start..cols.len());
    }
    let refined = JointEigenbasis { vectors: CMatrix::from_columns(&cols), clusters };
    let res = joint_residual(mats, &refined);
    if res > 1e-8 {
        return Err(AlgebraError::NotCommuting(res));
    }
    Ok(refined)
}

fn numerically_scalar(m: &CMatrix) -> bool {
    let d = m.nrows().max(1);
    let spread = max_abs(&(m - identity(d) * (trace(m) / c(d as f64, 0.0))));
    spread <= SCALAR_FLOOR * max_abs(m).max(1.0)
}

fn canonicalize_clusters(vecs: &CMatrix, clusters: &[std::ops::Range<usize>]) -> CMatrix {
    let mut out = vecs.clone();
    for r in clusters {
        let q = vecs.columns_range(r.clone()).into_owned();
        let canon = canonical_basis(&q);
        out.columns_range_mut(r.clone()).copy_from(&canon);
    }
    out
}

/// Largest relative off-diagonal mass of the family in the candidate basis,
/// counting everything outside scalar blocks on the clusters.
fn joint_residual(mats: &[CMatrix], basis: &JointEigenbasis) -> f64 {
    let u = &basis.vectors;
    let mut worst: f64 = 0.0;
    for m in mats.iter().filter(|m| !numerically_scalar(m)) {
        let scale = max_abs(m).max(1e-300);
        let t = u.adjoint() * m * u;
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                if i != j {
                    worst = worst.max(t[(i, j)].norm() / scale);
                }
            }
        }
        for r in &basis.clusters {
            let first = t[(r.start, r.start)];
            for k in r.clone() {
                worst = worst.max((t[(k, k)] - first).norm() / scale);
            }
        }
    }
    worst
}

/// Site dimensions `d_x`, indexed by global vertex index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSpec {
    dims: Vec<usize>,
}

impl SiteSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self, AlgebraError> {
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(AlgebraError::DimensionMismatch { expected: 1, got: k });
        }
        Ok(SiteSpec { dims })
    }

    pub fn uniform(d: usize, sites: usize) -> Self {
        SiteSpec { dims: vec![d; sites] }
    }

    pub fn dim(&self, site: usize) -> usize {
        self.dims[site]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dims_of(&self, sites: &[usize]) -> Vec<usize> {
        sites.iter().map(|&s| self.dims[s]).collect()
    }

    pub fn total_dim(&self, sites: &[usize]) -> usize {
        sites.iter().map(|&s| self.dims[s]).product()
    }
}

/// Dense operator on an ordered set of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    sites: Vec<usize>,
    dims: Vec<usize>,
    mat: CMatrix,
}

impl Operator {
    pub fn new(sites: Vec<usize>, dims: Vec<usize>, mat: CMatrix) -> Result<Self, AlgebraError> {
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AlgebraError::UnsortedSupport(sites));
        }
        let d: usize = dims.iter().product();
        if dims.len() != sites.len() || mat.nrows() != d || mat.ncols() != d {
            return Err(AlgebraError::DimensionMismatch { expected: d, got: mat.nrows() });
        }
        Ok(Operator { sites, dims, mat })
    }

    pub fn on_site(site: usize, mat: CMatrix) -> Self {
        let d = mat.nrows();
        Operator { sites: vec![site], dims: vec![d], mat }
    }

    pub fn identity(sites: Vec<usize>, spec: &SiteSpec) -> Self {
        let dims = spec.dims_of(&sites);
        let d = dims.iter().product();
        Operator { sites, dims, mat: identity(d) }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Tensor product with the legs re-sorted into global order.
    pub fn tensor(&self, other: &Operator) -> Result<Operator, AlgebraError> {
        if let Some(s) = self.sites.iter().find(|s| other.sites.contains(s)) {
            return Err(AlgebraError::OverlappingSupports(*s));
        }
        let sites: Vec<usize> = self.sites.iter().chain(&other.sites).cloned().collect();
        let dims: Vec<usize> = self.dims.iter().chain(&other.dims).cloned().collect();
        let mut perm: Vec<usize> = (0..sites.len()).collect();
        perm.sort_by_key(|&k| sites[k]);
        let mat = permute_legs(&kron(&self.mat, &other.mat), &dims, &perm);
        Ok(Operator {
            sites: perm.iter().map(|&k| sites[k]).collect(),
            dims: perm.iter().map(|&k| dims[k]).collect(),
            mat,
        })
    }

    /// `a ⊗ 1` on the complement of the support inside `target`.
    pub fn embed(&self, target: &[usize], spec: &SiteSpec) -> Result<Operator, AlgebraError> {
        if let Some(s) = self.sites.iter().find(|s| !target.contains(s)) {
            return Err(AlgebraError::SupportNotContained(*s));
        }
        let rest: Vec<usize> = target.iter().filter(|s| !self.sites.contains(s)).cloned().collect();
        if rest.is_empty() {
            return Ok(self.clone());
        }
        self.tensor(&Operator::identity(rest, spec))
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Operator, AlgebraError> {
        if let Some(s) = keep.iter().find(|s| !self.sites.contains(s)) {
            return Err(AlgebraError::SupportNotContained(*s));
        }
        let legs: Vec<usize> = (0..self.sites.len()).filter(|&k| keep.contains(&self.sites[k])).collect();
        let mat = partial_trace_legs(&self.mat, &self.dims, &legs);
        Ok(Operator {
            sites: legs.iter().map(|&k| self.sites[k]).collect(),
            dims: legs.iter().map(|&k| self.dims[k]).collect(),
            mat,
        })
    }

    /// For a full matrix algebra the canonical trace is the matrix trace.
    pub fn canonical_trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Operator {
        Operator { sites: self.sites.clone(), dims: self.dims.clone(), mat: self.mat.adjoint() }
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator, AlgebraError> {
        self.check_same_support(other)?;
        Ok(Operator { sites: self.sites.clone(), dims: self.dims.clone(), mat: &self.mat * &other.mat })
    }

    pub fn add(&self, other: &Operator) -> Result<Operator, AlgebraError> {
        self.check_same_support(other)?;
        Ok(Operator { sites: self.sites.clone(), dims: self.dims.clone(), mat: &self.mat + &other.mat })
    }

    fn check_same_support(&self, other: &Operator) -> Result<(), AlgebraError> {
        if self.sites != other.sites {
            let s = other.sites.iter().find(|s| !self.sites.contains(s)).or(self.sites.first());
            return Err(AlgebraError::SupportNotContained(s.cloned().unwrap_or(0)));
        }
        Ok(())
    }

    pub fn log(&self, tol: &Tolerance) -> Result<Operator, AlgebraError> {
        Ok(Operator { sites: self.sites.clone(), dims: self.dims.clone(), mat: matrix_log(&self.mat, tol)? })
    }

    pub fn exp(&self, tol: &Tolerance) -> Result<Operator, AlgebraError> {
        Ok(Operator { sites: self.sites.clone(), dims: self.dims.clone(), mat: matrix_exp(&self.mat, tol)? })
    }
}

/// A density matrix: positive semidefinite with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDensity {
    op: Operator,
    faithful: bool,
}

impl StateDensity {
    pub fn new(op: Operator, tol: &Tolerance) -> Result<Self, AlgebraError> {
        let m = op.matrix();
        check_hermitian(m, tol)?;
        let tr = m.trace();
        if (tr - ONE).norm() > tol.bound(1.0) {
            return Err(AlgebraError::NotAState(format!("trace {tr}")));
        }
        let (vals, _) = hermitian_eigen(m);
        let min = vals.first().cloned().unwrap_or(0.0);
        let max = vals.last().cloned().unwrap_or(0.0);
        if min < -tol.bound(max) {
            return Err(AlgebraError::NotAState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(StateDensity { op, faithful: min > FAITHFUL_FLOOR * max })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    pub fn expect(&self, a: &CMatrix) -> C64 {
        (self.op.matrix() * a).trace()
    }
}

/// Seeded random matrices for fixtures and tests.
pub mod random {
    use super::*;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn ginibre(d: usize, r: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(d, r, |_, _| {
            c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        })
    }

    /// Ginibre matrix scaled to unit Frobenius norm (so operator norm ≤ 1).
    pub fn observable(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = ginibre(d, d, rng);
        let f = g.norm();
        g * c(1.0 / f, 0.0)
    }

    pub fn hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        hermitian_part(&ginibre(d, d, rng))
    }

    pub fn unitary(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        orthonormalize_columns(&ginibre(d, d, rng), 1e-12)
    }

    /// Faithful density with smallest eigenvalue at least `floor / d`.
    pub fn density(d: usize, floor: f64, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = ginibre(d, d, rng);
        let mut m = &g * g.adjoint();
        let t = m.trace().re;
        m /= c(t, 0.0);
        m * c(1.0 - floor, 0.0) + identity(d) * c(floor / d as f64, 0.0)
    }

    pub fn probability_vector(d: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|r| (1.0 - floor) * r / s + floor / d as f64).collect()
    }
}
