//! Shipped model families: product states, classical Markov kernels, the
//! entangled block fixture, and explicit Kraus data.

use crate::matrixalg::{c, identity, kron, max_abs, matrix_unit, CMatrix, SiteSpec, Tolerance};
use crate::qms::QmsSpec;
use crate::subalgebra::CPMap;
use crate::tree::{TreeGraph, VertexId};
use crate::{build_tree, Error, Result};

/// Row sums of a kernel must hit 1 within this bound.
pub const KERNEL_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductParams {
    pub root_state: CMatrix,
    /// Single-site state `ω_y` used at every non-root vertex.
    pub site_state: CMatrix,
}

pub fn default_product_params() -> ProductParams {
    let root = CMatrix::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.3, 0.0)]);
    let site = CMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.15), c(0.0, -0.15), c(0.4, 0.0)]);
    ProductParams { root_state: root, site_state: site }
}

fn check_state(name: &str, m: &CMatrix) -> Result<()> {
    let tol = Tolerance::default();
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidModel(format!("{name} must be a non-empty square matrix")));
    }
    if max_abs(&(m - m.adjoint())) > tol.bound(max_abs(m)) {
        return Err(Error::InvalidModel(format!("{name} is not Hermitian")));
    }
    if (m.trace().re - 1.0).abs() > tol.bound(1.0) || m.trace().im.abs() > tol.bound(1.0) {
        return Err(Error::InvalidModel(format!("{name} does not have unit trace")));
    }
    let min = crate::matrixalg::min_eigenvalue(m);
    if min < -tol.bound(1.0) {
        return Err(Error::InvalidModel(format!("{name} has negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// `ℰ^x(a ⊗ b) = a · ∏_y ω(b_y)`.
pub fn make_product_model(tree: &TreeGraph, params: &ProductParams) -> Result<QmsSpec> {
    check_state("root_state", &params.root_state)?;
    check_state("site_state", &params.site_state)?;
    let d = params.site_state.nrows();
    if params.root_state.nrows() != d {
        return Err(Error::InvalidModel("root and site states have different dimensions".into()));
    }
    let sqrt_w = crate::matrixalg::hermitian_fn(&params.site_state, |v| v.max(0.0).sqrt());
    let mut transitions = Vec::with_capacity(tree.len());
    for x in 0..tree.len() {
        let k = tree.children(x).len();
        if k == 0 {
            transitions.push(None);
            continue;
        }
        // Kraus 1_x ⊗ (⊗_y √ω |s_y⟩), one per multi-index s
        let env = d.pow(k as u32);
        let mut kraus = Vec::with_capacity(env);
        for s in 0..env {
            let mut col = CMatrix::from_element(1, 1, c(1.0, 0.0));
            let mut rest = s;
            let mut digits = vec![0; k];
            for slot in (0..k).rev() {
                digits[slot] = rest % d;
                rest /= d;
            }
            for &sd in &digits {
                col = kron(&col, &sqrt_w.columns(sd, 1).into_owned());
            }
            kraus.push(kron(&identity(d), &col));
        }
        transitions.push(Some(CPMap::from_kraus(d * env, d, kraus)?));
    }
    QmsSpec::new(tree.clone(), SiteSpec::uniform(d, tree.len()), params.root_state.clone(), transitions, &Tolerance::default())
}

/// `ℰ^x(a ⊗ b) = Σ_i e_ii a e_ii · ∏_y Σ_j Π(i,j) b_y[j,j]`.
pub fn make_classical_kernel_model(tree: &TreeGraph, kernel: &[Vec<f64>], initial: &[f64]) -> Result<QmsSpec> {
    let d = kernel.len();
    if d == 0 || initial.len() != d {
        return Err(Error::InvalidModel(format!(
            "kernel has {d} rows but the initial distribution has {} entries",
            initial.len()
        )));
    }
    for (i, row) in kernel.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidModel(format!("kernel row {i} has {} entries, expected {d}", row.len())));
        }
        if let Some(j) = row.iter().position(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidModel(format!("kernel entry ({i},{j}) is negative")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > KERNEL_ROW_TOL {
            return Err(Error::InvalidModel(format!("kernel row {i} sums to {s}, expected 1")));
        }
    }
    if initial.iter().any(|&p| !(p >= 0.0)) || (initial.iter().sum::<f64>() - 1.0).abs() > KERNEL_ROW_TOL {
        return Err(Error::InvalidModel("initial distribution must be non-negative and sum to 1".into()));
    }
    let mut transitions = Vec::with_capacity(tree.len());
    for x in 0..tree.len() {
        let k = tree.children(x).len();
        if k == 0 {
            transitions.push(None);
            continue;
        }
        let env = d.pow(k as u32);
        let mut kraus = Vec::new();
        for i in 0..d {
            for s in 0..env {
                let mut weight = 1.0;
                let mut rest = s;
                for _ in 0..k {
                    weight *= kernel[i][rest % d];
                    rest /= d;
                }
                if weight == 0.0 {
                    continue;
                }
                let mut kr = CMatrix::zeros(d * env, d);
                kr[(i * env + s, i)] = c(weight.sqrt(), 0.0);
                kraus.push(kr);
            }
        }
        transitions.push(Some(CPMap::from_kraus(d * env, d, kraus)?));
    }
    let root = crate::matrixalg::diag_real(initial);
    QmsSpec::new(tree.clone(), SiteSpec::uniform(d, tree.len()), root, transitions, &Tolerance::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntangledParams {
    /// State `ψ` on `N̄ ⊗ A_child` (4 × 4, legs `N̄` then child).
    pub psi: CMatrix,
    /// Root state on `N ⊗ N̄` (4 × 4).
    pub root_state: CMatrix,
}

/// Mixture of the four Bell states with the given weights, in the order
/// `Φ+, Φ−, Ψ+, Ψ−`.
pub fn bell_diagonal(weights: [f64; 4]) -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = [[h, 0.0, 0.0, h], [h, 0.0, 0.0, -h], [0.0, h, h, 0.0], [0.0, h, -h, 0.0]];
    let mut out = CMatrix::zeros(4, 4);
    for (w, v) in weights.iter().zip(bell.iter()) {
        let col = CMatrix::from_fn(4, 1, |i, _| c(v[i], 0.0));
        out += &col * col.adjoint() * c(*w, 0.0);
    }
    out
}

pub fn default_entangled_params() -> EntangledParams {
    let mut root = crate::matrixalg::diag_real(&[0.4, 0.3, 0.2, 0.1]);
    root[(0, 1)] = c(0.05, 0.02);
    root[(1, 0)] = c(0.05, -0.02);
    root[(2, 3)] = c(0.0, 0.03);
    root[(3, 2)] = c(0.0, -0.03);
    EntangledParams { psi: bell_diagonal([0.7, 0.15, 0.1, 0.05]), root_state: root }
}

/// Root of dimension 4 read as `N ⊗ N̄` with one qubit child:
/// `ℰ(u ⊗ v̄ ⊗ b) = ψ(v̄ ⊗ b) · (u ⊗ 1)`.
pub fn make_entangled_fixture(params: &EntangledParams) -> Result<QmsSpec> {
    check_state("psi", &params.psi)?;
    check_state("root_state", &params.root_state)?;
    if params.psi.nrows() != 4 || params.root_state.nrows() != 4 {
        return Err(Error::InvalidModel("entangled fixture needs 4 × 4 psi and root state".into()));
    }
    let tree = build_tree(&[1], 1)?;
    let sqrt_psi = crate::matrixalg::hermitian_fn(&params.psi, |v| v.max(0.0).sqrt());
    let mut kraus = Vec::with_capacity(8);
    for s in 0..4 {
        for t in 0..2 {
            let m = &sqrt_psi * matrix_unit(4, s, 0).columns(0, 1) * matrix_unit(2, t, 0).columns(0, 1).adjoint();
            kraus.push(kron(&identity(2), &m));
        }
    }
    let e = CPMap::from_kraus(8, 4, kraus)?;
    QmsSpec::new(tree, SiteSpec::new(vec![4, 2])?, params.root_state.clone(), vec![Some(e), None], &Tolerance::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitParams {
    pub root_state: CMatrix,
    /// Kraus operators (`din × dout`, Heisenberg `a ↦ Σ K† a K`) per vertex.
    pub transitions: Vec<(VertexId, Vec<CMatrix>)>,
}

pub fn make_explicit_model(tree: &TreeGraph, sites: SiteSpec, params: &ExplicitParams) -> Result<QmsSpec> {
    check_state("root_state", &params.root_state)?;
    let mut slots: Vec<Option<CPMap>> = vec![None; tree.len()];
    for (v, kraus) in &params.transitions {
        let x = tree
            .index_of(v)
            .ok_or_else(|| Error::InvalidModel(format!("transition given for unknown vertex {v}")))?;
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidModel(format!("empty Kraus list at {v}")))?;
        slots[x] = Some(CPMap::from_kraus(first.nrows(), first.ncols(), kraus.clone())?);
    }
    QmsSpec::new(tree.clone(), sites, params.root_state.clone(), slots, &Tolerance::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subalgebra::{block_structure, ce_axioms, fixed_point_algebra, umegaki_block_states};

    #[test]
    fn kernel_rows_are_validated() {
        let tree = TreeGraph::cayley(2, 1);
        let bad = make_classical_kernel_model(&tree, &[vec![0.5, 0.4], vec![0.5, 0.5]], &[0.5, 0.5]);
        assert!(matches!(bad, Err(Error::InvalidModel(msg)) if msg.contains("row 0")));
        let neg = make_classical_kernel_model(&tree, &[vec![1.1, -0.1], vec![0.5, 0.5]], &[0.5, 0.5]);
        assert!(neg.is_err());
        let det = make_classical_kernel_model(&tree, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.5, 0.5]);
        assert!(det.is_ok());
    }

    #[test]
    fn transitions_are_conditional_expectations() {
        let tol = Tolerance::default();
        let tree = TreeGraph::cayley(2, 1);
        let specs = [
            make_product_model(&tree, &default_product_params()).unwrap(),
            make_classical_kernel_model(&tree, &[vec![0.8, 0.2], vec![0.3, 0.7]], &[0.6, 0.4]).unwrap(),
            make_entangled_fixture(&default_entangled_params()).unwrap(),
        ];
        for spec in &specs {
            let rep = ce_axioms(spec.transition(0), &tol).unwrap();
            assert!(rep.passes(1e-9), "{rep:?}");
        }
    }

    #[test]
    fn pure_entangled_psi_gives_multiplicity_block() {
        let tol = Tolerance::default();
        let params = EntangledParams { psi: bell_diagonal([1.0, 0.0, 0.0, 0.0]), ..default_entangled_params() };
        let spec = make_entangled_fixture(&params).unwrap();
        let e = spec.transition(0);
        let range = fixed_point_algebra(&e.closure(), &tol).unwrap();
        let blocks = block_structure(&range, 1).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!((blocks.blocks[0].n, blocks.blocks[0].m), (2, 2));
        let states = umegaki_block_states(e, &blocks, &tol).unwrap();
        assert_eq!(states[0].nrows(), 4);
        assert!((states[0].trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_kernel_state_is_uniform() {
        let tree = TreeGraph::cayley(2, 2);
        let spec = make_classical_kernel_model(&tree, &[vec![0.5, 0.5], vec![0.5, 0.5]], &[0.5, 0.5]).unwrap();
        let t = crate::qms::finite_volume_state(&spec, 2).unwrap();
        assert!(max_abs(&(t - identity(128) * c(1.0 / 128.0, 0.0))) < 1e-15);
    }

    #[test]
    fn explicit_matches_product() {
        let tree = TreeGraph::cayley(1, 1);
        let p = default_product_params();
        let spec = make_product_model(&tree, &p).unwrap();
        let explicit = ExplicitParams {
            root_state: p.root_state.clone(),
            transitions: vec![(VertexId::root(), spec.transition(0).kraus().to_vec())],
        };
        let spec2 = make_explicit_model(&tree, SiteSpec::uniform(2, 2), &explicit).unwrap();
        assert_eq!(spec2.transition(0).kraus(), spec.transition(0).kraus());
        let bad = ExplicitParams { transitions: vec![(VertexId(vec![9]), vec![identity(2)])], ..explicit };
        assert!(make_explicit_model(&tree, SiteSpec::uniform(2, 2), &bad).is_err());
    }
}
