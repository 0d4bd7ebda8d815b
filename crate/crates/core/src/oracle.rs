//! Slow, direct reference computations used to cross-check the structured
//! pipeline. Nothing here reuses the block machinery.

use crate::diagonal::DiagonalCE;
use crate::matrixalg::{c, identity, kron, matrix_unit, max_abs, min_eigenvalue, null_space, trace_product, random, CMatrix, C64, ZERO};
use crate::qms::QmsSpec;
use crate::subalgebra::CPMap;
use crate::{Error, Result};

/// Largest volume dimension for which the density is rebuilt entry by entry.
pub const DENSITY_CAP: usize = 256;

/// Largest input dimension for exhaustive axiom checks.
pub const AXIOM_CAP: usize = 64;

/// `φ(⊗_x a_x)` by nested application of the transition expectations:
/// `V_y = ℰ^y(a_y ⊗ 1)` on `Λ_n`, `V_x = ℰ^x(a_x ⊗ ⊗_{y∈S(x)} V_y)` below,
/// `φ = Tr(ρ_0 V_{x0})`. `obs[x]` is the factor on site `x`.
pub fn oracle_state_eval(spec: &QmsSpec, n: usize, obs: &[CMatrix]) -> Result<C64> {
    let tree = spec.tree();
    if n > tree.depth() {
        return Err(Error::Volume { n, depth: tree.depth() });
    }
    if obs.len() != tree.ball_len(n) {
        return Err(Error::Malformed(format!("{} factors for a volume of {} sites", obs.len(), tree.ball_len(n))));
    }
    fn value(spec: &QmsSpec, n: usize, x: usize, obs: &[CMatrix]) -> CMatrix {
        let tree = spec.tree();
        let e = spec.transition(x);
        if tree.is_leaf(x) {
            return obs[x].clone();
        }
        if tree.level_of(x) == n {
            return e.apply(&kron(&obs[x], &identity(e.environment_dim())));
        }
        let mut arg = obs[x].clone();
        for &y in tree.children(x) {
            arg = kron(&arg, &value(spec, n, y, obs));
        }
        e.apply(&arg)
    }
    Ok((spec.root_state() * value(spec, n, 0, obs)).trace())
}

/// The density of `φ` on `Λ_[0,n]`, one matrix unit at a time:
/// `T_{ji} = φ(|i⟩⟨j|)`.
pub fn oracle_density(spec: &QmsSpec, n: usize) -> Result<CMatrix> {
    let ball = spec.ball(n);
    let dims = spec.sites().dims_of(&ball);
    let d: usize = dims.iter().product();
    if d > DENSITY_CAP {
        return Err(Error::DimensionCap { dim: d, cap: DENSITY_CAP });
    }
    let digits = |mut k: usize| {
        let mut out = vec![0; dims.len()];
        for s in (0..dims.len()).rev() {
            out[s] = k % dims[s];
            k /= dims[s];
        }
        out
    };
    let mut t = CMatrix::zeros(d, d);
    for i in 0..d {
        let di = digits(i);
        for j in 0..d {
            let dj = digits(j);
            let obs: Vec<CMatrix> = (0..dims.len()).map(|s| matrix_unit(dims[s], di[s], dj[s])).collect();
            t[(j, i)] = oracle_state_eval(spec, n, &obs)?;
        }
    }
    Ok(t)
}

/// `μ_p = Tr(T Q_p)` with every projection formed explicitly.
pub fn oracle_measure(t: &CMatrix, dce: &DiagonalCE) -> Vec<f64> {
    (0..dce.points.len()).map(|p| trace_product(t, &dce.projection(p)).re).collect()
}

/// `𝔈(a) = Σ_p Q_p Tr(Q_p a) / Tr Q_p` with explicit projections.
pub fn oracle_diagonal_apply(dce: &DiagonalCE, a: &CMatrix) -> CMatrix {
    let d = dce.dim();
    let mut out = CMatrix::zeros(d, d);
    for p in 0..dce.points.len() {
        let q = dce.projection(p);
        let w = trace_product(&q, a) / q.trace();
        out += q * w;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleAxioms {
    pub unital: f64,
    pub idempotent: f64,
    pub module: f64,
    pub choi_min_eigenvalue: f64,
}

impl OracleAxioms {
    pub fn max_violation(&self) -> f64 {
        self.unital.max(self.idempotent).max(self.module).max((-self.choi_min_eigenvalue).max(0.0))
    }
}

/// Conditional-expectation axioms of `e: M_{d·s} → M_d` on every matrix
/// unit. The range is spanned by the images `e(E_ij ⊗ 1)`; idempotence is
/// `e(b ⊗ 1) = b` on those, the module property is checked one-sided on
/// both sides for every range element and matrix unit.
pub fn oracle_ce_axioms(e: &CPMap) -> Result<OracleAxioms> {
    let (din, d) = (e.din(), e.dout());
    if din > AXIOM_CAP {
        return Err(Error::DimensionCap { dim: din, cap: AXIOM_CAP });
    }
    let s = din / d;
    let one_s = identity(s);
    let unital = max_abs(&(e.apply(&identity(din)) - identity(d)));
    let mut range = Vec::with_capacity(d * d);
    let mut idempotent: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let b = e.apply(&kron(&matrix_unit(d, i, j), &one_s));
            idempotent = idempotent.max(max_abs(&(e.apply(&kron(&b, &one_s)) - &b)));
            range.push(b);
        }
    }
    let mut module: f64 = 0.0;
    for b in &range {
        let bl = kron(b, &one_s);
        for i in 0..din {
            for j in 0..din {
                let a = matrix_unit(din, i, j);
                let ea = e.apply(&a);
                module = module.max(max_abs(&(e.apply(&(&bl * &a)) - b * &ea)));
                module = module.max(max_abs(&(e.apply(&(&a * &bl)) - &ea * b)));
            }
        }
    }
    let mut choi = CMatrix::zeros(din * d, din * d);
    for i in 0..din {
        for j in 0..din {
            let img = e.apply(&matrix_unit(din, i, j));
            choi.view_mut((i * d, j * d), (d, d)).copy_from(&img);
        }
    }
    Ok(OracleAxioms { unital, idempotent, module, choi_min_eigenvalue: min_eigenvalue(&choi) })
}

/// A minimal central projection with the shape of its block.
#[derive(Debug, Clone)]
pub struct OracleBlock {
    pub projection: CMatrix,
    pub n: usize,
    pub m: usize,
}

/// Linear span of a family as orthonormal columns of vectorized matrices.
fn span(elems: &[CMatrix]) -> CMatrix {
    let d2 = elems[0].len();
    let stacked = CMatrix::from_fn(d2, elems.len(), |r, k| elems[k].as_slice()[r]);
    crate::matrixalg::orthonormalize_columns(&stacked, 1e-9)
}

/// Minimal central projections of the algebra generated by `spanning`
/// (assumed closed), by brute force: the commutant from the full linear
/// system `[X, b] = 0` over `M_d`, the center as its intersection with the
/// algebra, then the spectral projections of a seeded random Hermitian
/// central element. Shapes come from `Tr P = n·m` and `dim P𝒜P = n²`.
pub fn oracle_central_projections(spanning: &[CMatrix], seed: u64) -> Result<Vec<OracleBlock>> {
    let d = spanning[0].nrows();
    let d2 = d * d;
    let alg = span(spanning);
    // column-major vec: vec(bX − Xb) = (1⊗b − bᵀ⊗1) vec(X)
    let mut sys = CMatrix::zeros(d2 * alg.ncols(), d2);
    for k in 0..alg.ncols() {
        let b = CMatrix::from_column_slice(d, d, alg.column(k).as_slice());
        let block = kron(&identity(d), &b) - kron(&b.transpose(), &identity(d));
        sys.view_mut((k * d2, 0), (d2, d2)).copy_from(&block);
    }
    let commutant = null_space(&sys, 1e-9);
    // X = A·α = C·γ  ⇔  [A | −C] (α, γ) = 0
    let mut joint = CMatrix::zeros(d2, alg.ncols() + commutant.ncols());
    joint.columns_mut(0, alg.ncols()).copy_from(&alg);
    joint.columns_mut(alg.ncols(), commutant.ncols()).copy_from(&(-&commutant));
    let coeffs = null_space(&joint, 1e-9);
    let centre: Vec<CMatrix> = coeffs
        .column_iter()
        .map(|col| {
            let v = &alg * col.rows(0, alg.ncols());
            CMatrix::from_column_slice(d, d, v.as_slice())
        })
        .collect();
    let mut rng = random::rng(seed);
    let mut z = CMatrix::zeros(d, d);
    for m in &centre {
        let h = (m + m.adjoint()) * c(0.5, 0.0);
        let w: f64 = rand::Rng::random_range(&mut rng, 0.5..1.5);
        z += h * c(w, 0.0);
        let k = (m - m.adjoint()) * c(0.0, -0.5);
        let w: f64 = rand::Rng::random_range(&mut rng, 0.5..1.5);
        z += k * c(w, 0.0);
    }
    let eig = nalgebra::SymmetricEigen::new(z.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &k in &order {
        match groups.last_mut() {
            Some(g) if (eig.eigenvalues[k] - eig.eigenvalues[*g.last().unwrap()]).abs() <= 1e-7 * scale => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    if groups.len() != centre.len() {
        return Err(Error::NotAFactor(format!("center of dimension {} gave {} eigenspaces", centre.len(), groups.len())));
    }
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mut p = CMatrix::zeros(d, d);
        for k in g {
            let v = eig.eigenvectors.column(k);
            p += &v * v.adjoint();
        }
        let compressed: Vec<CMatrix> = (0..alg.ncols())
            .map(|k| {
                let b = CMatrix::from_column_slice(d, d, alg.column(k).as_slice());
                &p * b * &p
            })
            .filter(|m| max_abs(m) > 1e-10)
            .collect();
        let dim_pap = if compressed.is_empty() { 0 } else { span(&compressed).ncols() };
        let n = (dim_pap as f64).sqrt().round() as usize;
        let rank = p.trace().re.round() as usize;
        if n == 0 || n * n != dim_pap || rank % n != 0 {
            return Err(Error::NotAFactor(format!("block of rank {rank} with dim P𝒜P = {dim_pap}")));
        }
        out.push(OracleBlock { projection: p, n, m: rank / n });
    }
    Ok(out)
}

/// `U (⊕_i M_{n_i} ⊗ 1_{m_i}) U†` with a seeded random unitary: returns a
/// spanning family and the true minimal central projections.
pub fn random_block_algebra(shape: &[(usize, usize)], seed: u64) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let d: usize = shape.iter().map(|(n, m)| n * m).sum();
    let mut rng = random::rng(seed);
    let u = random::unitary(d, &mut rng);
    let mut elems = Vec::new();
    let mut projs = Vec::new();
    let mut off = 0;
    for &(n, m) in shape {
        let mut p = CMatrix::zeros(d, d);
        for i in 0..n {
            for j in 0..n {
                let blk = kron(&matrix_unit(n, i, j), &identity(m));
                let mut full = CMatrix::from_element(d, d, ZERO);
                full.view_mut((off, off), (n * m, n * m)).copy_from(&blk);
                if i == j {
                    p += &full;
                }
                elems.push(&u * full * u.adjoint());
            }
        }
        projs.push(&u * p * u.adjoint());
        off += n * m;
    }
    (elems, projs)
}

/// Pairs every projection in `a` with the closest one in `b` and returns
/// the worst distance; `inf` when the counts differ.
pub fn match_projections(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for p in a {
        let (k, dist) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, q)| (k, max_abs(&(p - q))))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("counts agree");
        used[k] = true;
        worst = worst.max(dist);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::qms::finite_volume_state;
    use crate::subalgebra::{block_structure, SubalgebraBasis};
    use crate::tree::TreeGraph;

    #[test]
    fn oracle_density_matches_sequential_construction() {
        let kernel = models::make_classical_kernel_model(
            &TreeGraph::cayley(2, 2),
            &[vec![0.9, 0.1], vec![0.4, 0.6]],
            &[0.5, 0.5],
        )
        .unwrap();
        let ent = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        let product = models::make_product_model(&TreeGraph::cayley(2, 2), &models::default_product_params()).unwrap();
        for (spec, n) in [(&kernel, 2), (&ent, 1), (&ent, 0), (&product, 1)] {
            let a = oracle_density(spec, n).unwrap();
            let b = finite_volume_state(spec, n).unwrap();
            assert!(max_abs(&(a - b)) < 1e-12);
        }
        assert!(oracle_density(&product, 2).is_ok());
        let deep = models::make_product_model(&TreeGraph::cayley(3, 2), &models::default_product_params()).unwrap();
        assert!(matches!(oracle_density(&deep, 2), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn brute_force_center_finds_planted_blocks() {
        for (i, shape) in [vec![(1, 1), (1, 2)], vec![(2, 1), (1, 1)], vec![(1, 3), (1, 1), (1, 2)], vec![(2, 2)]]
            .iter()
            .enumerate()
        {
            let (elems, truth) = random_block_algebra(shape, 40 + i as u64);
            let blocks = oracle_central_projections(&elems, 1).unwrap();
            let found: Vec<CMatrix> = blocks.iter().map(|b| b.projection.clone()).collect();
            assert!(match_projections(&found, &truth) < 1e-9);
            let mut shapes: Vec<(usize, usize)> = blocks.iter().map(|b| (b.n, b.m)).collect();
            let mut want = shape.clone();
            shapes.sort();
            want.sort();
            assert_eq!(shapes, want);
            let alg = SubalgebraBasis::new(elems[0].nrows(), &elems).unwrap();
            let bs = block_structure(&alg, 1).unwrap();
            assert!(match_projections(&bs.projections(), &truth) < 1e-9);
        }
    }

    #[test]
    fn exhaustive_axioms_separate_ce_from_channel() {
        let p = crate::matrixalg::diag_real(&[1.0, 0.0, 0.0]);
        let q = crate::matrixalg::diag_real(&[0.0, 1.0, 1.0]);
        let e = CPMap::pinching(&[p, q]).unwrap();
        assert!(oracle_ce_axioms(&e).unwrap().max_violation() < 1e-12);
        let mut rng = random::rng(5);
        let u = random::unitary(3, &mut rng);
        let ch = CPMap::conjugation(&u);
        let ax = oracle_ce_axioms(&ch).unwrap();
        assert!(ax.idempotent > 1e-3);
    }
}
