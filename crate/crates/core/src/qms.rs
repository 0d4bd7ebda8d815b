//! Quantum Markov states generated by localized transition expectations.
//!
//! Each vertex `x` carries a unital CP map `ℰ^x` from the algebra of
//! `{x} ∪ S(x)` (legs in enumeration order: `x` first, then its successors)
//! to the algebra of `x`. Leaves carry the identity.

use crate::check::CheckReport;
use crate::matrixalg::{
    self, identity, kron, max_abs, permute_legs, permute_rows, CMatrix, Operator, SiteSpec,
    StateDensity, Tolerance,
};
use crate::subalgebra::CPMap;
use crate::tree::TreeGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QmsSpec {
    tree: TreeGraph,
    sites: SiteSpec,
    root_state: CMatrix,
    transitions: Vec<CPMap>,
}

impl QmsSpec {
    /// `transitions[x]` may be `None` only for leaves.
    pub fn new(
        tree: TreeGraph,
        sites: SiteSpec,
        root_state: CMatrix,
        transitions: Vec<Option<CPMap>>,
        tol: &Tolerance,
    ) -> Result<Self> {
        if sites.dims().len() != tree.len() || transitions.len() != tree.len() {
            return Err(Error::InvalidModel(format!(
                "tree has {} vertices but {} site dimensions and {} transition slots",
                tree.len(),
                sites.dims().len(),
                transitions.len()
            )));
        }
        let d0 = sites.dim(0);
        let rho = Operator::new(vec![0], vec![d0], root_state.clone())?;
        StateDensity::new(rho, tol)?;
        let mut maps = Vec::with_capacity(tree.len());
        for (x, t) in transitions.into_iter().enumerate() {
            let children = tree.children(x).to_vec();
            let mut support = vec![x];
            support.extend(&children);
            let din = sites.total_dim(&support);
            let dout = sites.dim(x);
            let map = match t {
                Some(m) => m,
                None if children.is_empty() => CPMap::identity(dout),
                None => return Err(Error::MissingTransition(tree.vertex(x).clone())),
            };
            if map.din() != din || map.dout() != dout {
                return Err(Error::InvalidModel(format!(
                    "transition at {} maps M_{} to M_{}, expected M_{din} to M_{dout}",
                    tree.vertex(x),
                    map.din(),
                    map.dout()
                )));
            }
            let unital = map.unital_deviation();
            if !tol.accepts(unital, 1.0) {
                return Err(Error::InvalidModel(format!(
                    "transition at {} is not unital (deviation {unital:.3e})",
                    tree.vertex(x)
                )));
            }
            maps.push(map.with_supports(support, vec![x]));
        }
        Ok(QmsSpec { tree, sites, root_state, transitions: maps })
    }

    pub fn tree(&self) -> &TreeGraph {
        &self.tree
    }

    pub fn sites(&self) -> &SiteSpec {
        &self.sites
    }

    pub fn root_state(&self) -> &CMatrix {
        &self.root_state
    }

    pub fn transition(&self, x: usize) -> &CPMap {
        &self.transitions[x]
    }

    /// Replaces one transition expectation without re-validating it; used to
    /// build negative controls.
    pub fn with_transition(&self, x: usize, map: CPMap) -> QmsSpec {
        let mut out = self.clone();
        let support = out.transitions[x].input_support.clone();
        out.transitions[x] = map.with_supports(support, vec![x]);
        out
    }

    /// Sites of `Λ_[0,n]`.
    pub fn ball(&self, n: usize) -> Vec<usize> {
        (0..self.tree.ball_len(n)).collect()
    }

    pub fn volume_dim(&self, n: usize) -> usize {
        self.sites.total_dim(&self.ball(n))
    }

    fn check_volume(&self, n: usize) -> Result<()> {
        if n > self.tree.depth() {
            return Err(Error::Volume { n, depth: self.tree.depth() });
        }
        Ok(())
    }
}

/// `ℰ_{Λ_[n,n+1]} = ⊗_{x∈Λ_n} ℰ^x` from `A_{Λ_n ∪ Λ_{n+1}}` (global order)
/// to `A_{Λ_n}`.
pub fn level_expectation(spec: &QmsSpec, n: usize) -> Result<CPMap> {
    let tree = spec.tree();
    if n >= tree.depth() {
        return Err(Error::Volume { n: n + 1, depth: tree.depth() });
    }
    let level: Vec<usize> = tree.level_indices(n)?.collect();
    let mut map: Option<CPMap> = None;
    let mut legs: Vec<usize> = Vec::new();
    for &x in &level {
        let e = spec.transition(x);
        legs.extend(&e.input_support);
        map = Some(match map {
            None => e.clone(),
            Some(m) => m.tensor(e),
        });
    }
    let map = map.expect("levels are non-empty");
    let dims = spec.sites().dims_of(&legs);
    let mut perm: Vec<usize> = (0..legs.len()).collect();
    perm.sort_by_key(|&k| legs[k]);
    let kraus = map.kraus().iter().map(|k| permute_rows(k, &dims, &perm)).collect();
    let mut sorted = legs.clone();
    sorted.sort();
    Ok(CPMap::from_kraus(map.din(), map.dout(), kraus)?.with_supports(sorted, level))
}

/// Density of `φ` restricted to `Λ_[0,n]`, the last level closed with the
/// identity: pre-duals of the transition expectations are applied
/// downwards from the root state.
pub fn finite_volume_state(spec: &QmsSpec, n: usize) -> Result<CMatrix> {
    spec.check_volume(n)?;
    let tree = spec.tree();
    let mut order = vec![0usize];
    let mut rho = spec.root_state().clone();
    for x in 0..tree.ball_len(n) {
        if tree.level_of(x) < n {
            let e = spec.transition(x);
            let children = tree.children(x).to_vec();
            rho = apply_dual_at(spec, &rho, &mut order, x, e.kraus(), &children);
        } else if !tree.is_leaf(x) {
            let f = spec.transition(x).closure();
            rho = apply_dual_at(spec, &rho, &mut order, x, f.kraus(), &[]);
        }
    }
    let dims = spec.sites().dims_of(&order);
    let mut perm: Vec<usize> = (0..order.len()).collect();
    perm.sort_by_key(|&k| order[k]);
    Ok(permute_legs(&rho, &dims, &perm))
}

/// Applies `ρ ↦ Σ K ρ K†` on the leg of site `x`, inserting `new` sites
/// right after it.
fn apply_dual_at(
    spec: &QmsSpec,
    rho: &CMatrix,
    order: &mut Vec<usize>,
    x: usize,
    kraus: &[CMatrix],
    new: &[usize],
) -> CMatrix {
    let pos = order.iter().position(|&s| s == x).expect("site is present");
    let dims = spec.sites().dims_of(order);
    let mut perm = vec![pos];
    perm.extend((0..order.len()).filter(|&k| k != pos));
    let front = permute_legs(rho, &dims, &perm);
    let rest: usize = dims.iter().enumerate().filter(|&(k, _)| k != pos).map(|(_, d)| d).product();
    let id = identity(rest);
    let mut out = None::<CMatrix>;
    for k in kraus {
        let big = kron(k, &id);
        let term = &big * &front * big.adjoint();
        out = Some(match out {
            None => term,
            Some(acc) => acc + term,
        });
    }
    let reordered: Vec<usize> = perm.iter().map(|&k| order[k]).collect();
    let mut next = vec![x];
    next.extend(new);
    next.extend(&reordered[1..]);
    *order = next;
    out.expect("Kraus lists are non-empty")
}

/// Definition of a Markov state at finite volume: for every `j < n`, the
/// state at volume `j` composed with `id ⊗ ℰ_{Λ_[j,j+1]}` equals the state
/// at volume `j+1`. Also records the restriction consistency of the
/// finite-volume densities.
pub fn check_markov_state(spec: &QmsSpec, n: usize, tol: f64) -> Result<CheckReport> {
    spec.check_volume(n)?;
    let mut report = CheckReport::new("markov_state", tol);
    let mut prev = finite_volume_state(spec, 0)?;
    for j in 0..n {
        let next = finite_volume_state(spec, j + 1)?;
        let level = level_expectation(spec, j)?;
        let outer: usize = spec.sites().total_dim(&spec.ball(j)) / level.dout();
        let id = identity(outer);
        let mut pushed = CMatrix::zeros(next.nrows(), next.ncols());
        for k in level.kraus() {
            let big = kron(&id, k);
            pushed += &big * &prev * big.adjoint();
        }
        report.record(format!("j={j}"), max_abs(&(pushed - &next)));
        let inner = spec.ball(j).len();
        let dims = spec.sites().dims_of(&spec.ball(j + 1));
        let keep: Vec<usize> = (0..inner).collect();
        let restricted = matrixalg::partial_trace_legs(&next, &dims, &keep);
        report.record(format!("restriction j={j}"), max_abs(&(restricted - &prev)));
        prev = next;
    }
    Ok(report)
}

/// Projection onto the fixed points of a unital CP map: the eigenprojection
/// for eigenvalue 1 when it is well conditioned, the Cesàro mean otherwise.
pub fn ergodic_average(e: &CPMap, tol: &Tolerance, max_iter: usize) -> Result<CPMap> {
    if e.din() != e.dout() {
        return Err(Error::Malformed("ergodic average needs an endomorphism".into()));
    }
    let d2 = e.din() * e.din();
    let s = e.superoperator();
    let shifted = &s - identity(d2);
    let right = matrixalg::null_space(&shifted, 1e-9);
    let left = matrixalg::null_space(&shifted.adjoint(), 1e-9).adjoint();
    let check = |p: &CMatrix| {
        max_abs(&(p * p - p)).max(max_abs(&(p * &s - p))).max(max_abs(&(&s * p - p)))
    };
    if right.ncols() == left.nrows() && right.ncols() > 0 {
        if let Some(inv) = (&left * &right).try_inverse() {
            let p = &right * inv * &left;
            if check(&p) <= tol.bound(1.0) {
                return CPMap::from_superoperator(&p, e.din(), e.din(), tol);
            }
        }
    }
    let mut power = identity(d2);
    let mut sum = CMatrix::zeros(d2, d2);
    for h in 1..=max_iter {
        sum += &power;
        power = &s * power;
        if h % 64 == 0 || h == max_iter {
            let avg = &sum * matrixalg::c(1.0 / h as f64, 0.0);
            if check(&avg) <= tol.bound(1.0) {
                return CPMap::from_superoperator(&avg, e.din(), e.din(), tol);
            }
        }
    }
    Err(Error::NoConvergence(max_iter))
}

/// Plain Cesàro mean `(1/m) Σ_{h<m} e^h` as a superoperator.
pub fn cesaro_mean(e: &CPMap, m: usize) -> CMatrix {
    let d2 = e.din() * e.din();
    let s = e.superoperator();
    let mut power = identity(d2);
    let mut sum = CMatrix::zeros(d2, d2);
    for _ in 0..m {
        sum += &power;
        power = &s * power;
    }
    sum * matrixalg::c(1.0 / m as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixalg::{c, diag_real, random};
    use crate::models;
    use crate::subalgebra::fixed_point_algebra;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn leaves_give_identity_level_map() {
        let tree = crate::build_tree(&[0], 0).unwrap();
        let spec = QmsSpec::new(tree, SiteSpec::uniform(2, 1), diag_real(&[0.5, 0.5]), vec![None], &tol()).unwrap();
        assert!(level_expectation(&spec, 0).is_err());
        assert!(max_abs(&(finite_volume_state(&spec, 0).unwrap() - diag_real(&[0.5, 0.5]))) < 1e-15);
        assert!(finite_volume_state(&spec, 1).is_err());
    }

    #[test]
    fn missing_transition_is_reported() {
        let tree = crate::build_tree(&[1, 0], 1).unwrap();
        let err = QmsSpec::new(tree, SiteSpec::uniform(2, 2), diag_real(&[0.5, 0.5]), vec![None, None], &tol());
        assert!(matches!(err, Err(Error::MissingTransition(_))));
    }

    #[test]
    fn product_model_level_map_and_state() {
        let tree = TreeGraph::cayley(2, 2);
        let spec = models::make_product_model(&tree, &models::default_product_params()).unwrap();
        let p = models::default_product_params();
        let lvl = level_expectation(&spec, 0).unwrap();
        let mut rng = random::rng(3);
        let a = random::ginibre(2, 2, &mut rng);
        let b1 = random::ginibre(2, 2, &mut rng);
        let b2 = random::ginibre(2, 2, &mut rng);
        let out = lvl.apply(&kron(&kron(&a, &b1), &b2));
        let expect = &a * ((&p.site_state * &b1).trace() * (&p.site_state * &b2).trace());
        assert!(max_abs(&(out - expect)) < 1e-12);
        let t = finite_volume_state(&spec, 2).unwrap();
        let mut prod = p.root_state.clone();
        for _ in 1..7 {
            prod = kron(&prod, &p.site_state);
        }
        assert!(max_abs(&(t - prod)) < 1e-14);
        let rep = check_markov_state(&spec, 2, 1e-12).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn kernel_model_configuration_weights() {
        let tree = TreeGraph::cayley(2, 1);
        let kernel = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
        let initial = vec![0.6, 0.4];
        let spec = models::make_classical_kernel_model(&tree, &kernel, &initial).unwrap();
        let t = finite_volume_state(&spec, 1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let idx = i * 4 + j * 2 + k;
                    let expect = initial[i] * kernel[i][j] * kernel[i][k];
                    assert!((t[(idx, idx)].re - expect).abs() < 1e-14);
                }
            }
        }
        assert!(max_abs(&(&t - CMatrix::from_diagonal(&t.diagonal()))) < 1e-15);
        assert!(check_markov_state(&spec, 1, 1e-9).unwrap().passed);
    }

    #[test]
    fn perturbed_transition_fails_at_first_level() {
        let tree = TreeGraph::cayley(2, 2);
        let spec = models::make_product_model(&tree, &models::default_product_params()).unwrap();
        let rot = random::unitary(2, &mut random::rng(11));
        let bad = CPMap::conjugation(&rot).compose(spec.transition(0)).unwrap();
        let bad_spec = spec.with_transition(0, bad);
        let rep = check_markov_state(&bad_spec, 2, 1e-9).unwrap();
        assert!(!rep.passed);
        assert!(rep.failures().any(|(l, _)| l == "j=0"));
    }

    #[test]
    fn ergodic_average_of_idempotent_and_identity() {
        let pinch = CPMap::pinching(&[diag_real(&[1.0, 0.0]), diag_real(&[0.0, 1.0])]).unwrap();
        let avg = ergodic_average(&pinch, &tol(), 1000).unwrap();
        assert!(max_abs(&(avg.superoperator() - pinch.superoperator())) < 1e-10);
        let id = CPMap::identity(3);
        let avg = ergodic_average(&id, &tol(), 10).unwrap();
        assert!(max_abs(&(avg.superoperator() - identity(9))) < 1e-10);
    }

    #[test]
    fn ergodic_average_of_irrational_rotation_is_pinching() {
        let theta = 2.0_f64.sqrt();
        let mut u = identity(2);
        u[(1, 1)] = c(theta.cos(), theta.sin());
        let e = CPMap::conjugation(&u);
        let avg = ergodic_average(&e, &tol(), 1000).unwrap();
        let pinch = CPMap::pinching(&[diag_real(&[1.0, 0.0]), diag_real(&[0.0, 1.0])]).unwrap();
        assert!(max_abs(&(avg.superoperator() - pinch.superoperator())) < 1e-10);
        // Cesàro oracle: error decays like 1/m
        let ces = cesaro_mean(&e, 10_000);
        assert!(max_abs(&(ces - pinch.superoperator())) < 1e-3);
        let s = avg.superoperator();
        let es = e.superoperator();
        assert!(max_abs(&(&s * &es - &s)) < 1e-10 && max_abs(&(&es * &s - &s)) < 1e-10);
        assert_eq!(fixed_point_algebra(&avg, &tol()).unwrap().len(), 2);
    }
}
