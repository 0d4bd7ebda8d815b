//! Potentials `h = −log T` of finite-volume states and their split into
//! commuting root, family and boundary terms.
//!
//! Gauge: the root component `h^{x0}_ω` and every boundary component `ĥ^y_ω`
//! are traceless (when a volume has no family, the boundary scalar goes to
//! the root component); the removed scalars are carried by the family
//! components.

use crate::analysis::{assemble_columns, assemble_operator, mixed_digits, Leg, QmsAnalysis, VolumeStructure};
use crate::check::CheckReport;
use crate::matrixalg::{c, commutator, identity, matrix_exp, matrix_log, max_abs, op_norm, CMatrix, Operator, Tolerance};
use crate::qms::{finite_volume_state, QmsSpec};
use crate::subalgebra::Block;
use crate::Result;

pub fn potential_of(t: &Operator, tol: &Tolerance) -> Result<Operator> {
    let log = t.log(tol)?;
    Ok(Operator::new(log.sites().to_vec(), log.dims().to_vec(), -log.into_matrix())?)
}

#[derive(Debug, Clone)]
pub struct PotentialDecomposition {
    pub n: usize,
    /// `H_{x0}` on the root.
    pub root: Operator,
    /// `H_{{x}∪S(x)}` for the interior vertices, in vertex order.
    pub families: Vec<Operator>,
    /// `Ĥ_y` for `y ∈ Λ_n`.
    pub boundary: Vec<Operator>,
    /// `h^{x0}_ω` on `N_ω`.
    pub root_components: Vec<CMatrix>,
    /// Family components on `N̄_x ⊗ N_{S(x)}`, indexed like the family
    /// factors of the volume structure.
    pub family_components: Vec<Vec<CMatrix>>,
    /// `ĥ^y_ω` on `N̄_ω`.
    pub boundary_components: Vec<Vec<CMatrix>>,
    pub k_root: Operator,
    pub k_boundary: Vec<Operator>,
}

fn traceless(h: &CMatrix) -> (CMatrix, f64) {
    let d = h.nrows();
    let s = h.trace().re / d as f64;
    (h - identity(d) * c(s, 0.0), s)
}

fn neg_log(m: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    Ok(-matrix_log(m, tol)?)
}

/// `−Σ_ω ln Tr(e^{−h_ω}) P_ω`
fn scalar_block_term(blocks: &[Block], comps: &[CMatrix], tol: &Tolerance) -> Result<CMatrix> {
    let d = blocks[0].projection.nrows();
    let mut out = CMatrix::zeros(d, d);
    for (b, h) in blocks.iter().zip(comps) {
        let z = matrix_exp(&-h, tol)?.trace().re;
        out += &b.projection * c(-z.ln(), 0.0);
    }
    Ok(out)
}

pub fn decompose_potential(
    spec: &QmsSpec,
    analysis: &QmsAnalysis,
    vol: &VolumeStructure,
    tol: &Tolerance,
) -> Result<PotentialDecomposition> {
    let tree = spec.tree();
    let sites = spec.sites();

    let mut root_components = Vec::new();
    let mut root_scalars = Vec::new();
    for r in &vol.root_factors {
        let h = neg_log(r, tol)?;
        if vol.n == 0 {
            root_components.push(h);
            root_scalars.push(0.0);
        } else {
            let (h0, s) = traceless(&h);
            root_components.push(h0);
            root_scalars.push(s);
        }
    }

    let mut boundary_components = Vec::new();
    let mut boundary_scalars = Vec::new();
    for per_block in &vol.boundary_factors {
        let mut comps = Vec::new();
        let mut scalars = Vec::new();
        for b in per_block {
            let (h0, s) = traceless(&neg_log(b, tol)?);
            comps.push(h0);
            scalars.push(s);
        }
        boundary_components.push(comps);
        boundary_scalars.push(scalars);
    }
    if vol.n == 0 {
        for (w, h) in root_components.iter_mut().enumerate() {
            let d = h.nrows();
            *h += identity(d) * c(boundary_scalars[0][w], 0.0);
        }
    }

    let mut family_components = Vec::new();
    for fam in &vol.families {
        let mut comps = Vec::new();
        for (idx, m) in fam.densities.iter().enumerate() {
            let digits = mixed_digits(&fam.radix, idx);
            let mut shift = 0.0;
            if fam.x == 0 {
                shift += root_scalars[digits[0]];
            }
            for (k, &y) in fam.children.iter().enumerate() {
                if let Some(pos) = vol.boundary.iter().position(|&b| b == y) {
                    shift += boundary_scalars[pos][digits[k + 1]];
                }
            }
            let h = neg_log(m, tol)?;
            let d = h.nrows();
            comps.push(h + identity(d) * c(shift, 0.0));
        }
        family_components.push(comps);
    }

    let root_blocks = &analysis.vertices[0].blocks.blocks;
    let mut root = CMatrix::zeros(sites.dim(0), sites.dim(0));
    for (b, h) in root_blocks.iter().zip(&root_components) {
        root += assemble_operator(&[b], &[(vec![Leg::Slow(0)], h.clone())]);
    }
    let root = Operator::on_site(0, root);
    let k_root = Operator::on_site(0, scalar_block_term(root_blocks, &root_components, tol)?);

    let mut families = Vec::new();
    for (fam, comps) in vol.families.iter().zip(&family_components) {
        let mut support = vec![fam.x];
        support.extend(&fam.children);
        let d = sites.total_dim(&support);
        let mut op = CMatrix::zeros(d, d);
        for (idx, h) in comps.iter().enumerate() {
            let digits = mixed_digits(&fam.radix, idx);
            let blocks: Vec<&Block> = support.iter().zip(&digits).map(|(&x, &w)| analysis.block(x, w)).collect();
            let mut legs = vec![Leg::Fast(0)];
            legs.extend((1..support.len()).map(Leg::Slow));
            op += assemble_operator(&blocks, &[(legs, h.clone())]);
        }
        debug_assert!(support.windows(2).all(|w| w[0] < w[1]));
        families.push(Operator::new(support.clone(), sites.dims_of(&support), op)?);
    }

    let mut boundary = Vec::new();
    let mut k_boundary = Vec::new();
    for (&y, comps) in vol.boundary.iter().zip(&boundary_components) {
        let blocks = &analysis.vertices[y].blocks.blocks;
        let mut op = CMatrix::zeros(sites.dim(y), sites.dim(y));
        for (b, h) in blocks.iter().zip(comps) {
            op += assemble_operator(&[b], &[(vec![Leg::Fast(0)], h.clone())]);
        }
        boundary.push(Operator::on_site(y, op));
        k_boundary.push(Operator::on_site(y, scalar_block_term(blocks, comps, tol)?));
    }
    debug_assert!(vol.interior.iter().all(|&x| tree.level_of(x) < vol.n));

    Ok(PotentialDecomposition {
        n: vol.n,
        root,
        families,
        boundary,
        root_components,
        family_components,
        boundary_components,
        k_root,
        k_boundary,
    })
}

impl PotentialDecomposition {
    /// All terms with labels, in the order root, families, boundary.
    pub fn terms(&self, spec: &QmsSpec) -> Vec<(String, &Operator)> {
        let tree = spec.tree();
        let mut out = vec![(format!("H{}", tree.vertex(0)), &self.root)];
        for f in &self.families {
            out.push((format!("H{}+S", tree.vertex(f.sites()[0])), f));
        }
        for b in &self.boundary {
            out.push((format!("Ĥ{}", tree.vertex(b.sites()[0])), b));
        }
        out
    }

    /// `H_{x0} + Σ H_{{x}∪S(x)} + Σ Ĥ_y` on the whole volume.
    pub fn total(&self, spec: &QmsSpec) -> Result<CMatrix> {
        let ball = spec.ball(self.n);
        let mut out: Option<CMatrix> = None;
        for (_, t) in self.terms(spec) {
            let m = t.embed(&ball, spec.sites())?.into_matrix();
            out = Some(match out {
                None => m,
                Some(acc) => acc + m,
            });
        }
        Ok(out.expect("the root term is always present"))
    }

    /// `K_{x0} + Σ H_{{x}∪S(x)} + Σ K̂_y` on the whole volume.
    pub fn restricted_total(&self, spec: &QmsSpec) -> Result<CMatrix> {
        let ball = spec.ball(self.n);
        let mut out = self.k_root.embed(&ball, spec.sites())?.into_matrix();
        for t in self.families.iter().chain(&self.k_boundary) {
            out += t.embed(&ball, spec.sites())?.into_matrix();
        }
        Ok(out)
    }
}

/// Relative reconstruction residual `‖h − Σ terms‖ / ‖h‖` against the dense
/// potential, plus the Gibbs identity `e^{−Σ terms} = T`.
pub fn check_reconstruction(spec: &QmsSpec, d: &PotentialDecomposition, tol: f64, mtol: &Tolerance) -> Result<CheckReport> {
    let t = finite_volume_state(spec, d.n)?;
    let h = neg_log(&t, mtol)?;
    let sum = d.total(spec)?;
    let mut report = CheckReport::new("reconstruction", tol);
    let scale = op_norm(&h).max(1e-300);
    report.record("potential", op_norm(&(&h - &sum)) / scale);
    let gibbs = matrix_exp(&-sum, mtol)?;
    report.record("gibbs", max_abs(&(gibbs - t)));
    Ok(report)
}

/// Pairwise commutators of all terms, normalized by `‖A‖‖B‖`.
pub fn check_commutation(spec: &QmsSpec, d: &PotentialDecomposition, tol: f64) -> Result<CheckReport> {
    let ball = spec.ball(d.n);
    let terms: Vec<(String, CMatrix)> = d
        .terms(spec)
        .into_iter()
        .map(|(l, t)| Ok((l, t.embed(&ball, spec.sites())?.into_matrix())))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = terms.iter().map(|(_, m)| op_norm(m)).collect();
    let mut report = CheckReport::new("commutation", tol);
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            let scale = norms[i] * norms[j];
            let dev = if scale > 1e-300 { op_norm(&commutator(&terms[i].1, &terms[j].1)) / scale } else { 0.0 };
            report.record(format!("[{}, {}]", terms[i].0, terms[j].0), dev);
        }
    }
    Ok(report)
}

/// Potential of the restriction of the state to the block algebra in which
/// the root `N` legs and the boundary `N̄` legs are traced out, computed by
/// the trace-preserving expectation applied to the dense density.
pub fn restricted_potential(spec: &QmsSpec, analysis: &QmsAnalysis, vol: &VolumeStructure, tol: &Tolerance) -> Result<CMatrix> {
    let t = finite_volume_state(spec, vol.n)?;
    let mut traced = vec![Leg::Slow(0)];
    traced.extend(vol.boundary.iter().map(|&y| Leg::Fast(y)));
    let mut compressed = CMatrix::zeros(t.nrows(), t.ncols());
    for idx in 0..vol.configuration_count() {
        let omega = vol.configuration(idx);
        let blocks = vol.blocks(analysis, &omega);
        let kept: Vec<Leg> =
            (0..blocks.len()).flat_map(|k| [Leg::Slow(k), Leg::Fast(k)]).filter(|l| !traced.contains(l)).collect();
        let dim = |legs: &[Leg]| -> usize {
            legs.iter()
                .map(|l| match *l {
                    Leg::Slow(k) => blocks[k].n,
                    Leg::Fast(k) => blocks[k].m,
                })
                .product()
        };
        let (n, m) = (dim(&kept), dim(&traced));
        let iso = assemble_columns(&blocks, &[(kept.clone(), identity(n)), (traced.clone(), identity(m))]);
        let block = Block { projection: &iso * iso.adjoint(), iso, n, m };
        compressed += block.lift_slow(&block.slow_part(&t));
    }
    neg_log(&compressed, tol)
}

pub fn check_restricted_potential(
    spec: &QmsSpec,
    analysis: &QmsAnalysis,
    vol: &VolumeStructure,
    d: &PotentialDecomposition,
    tol: f64,
    mtol: &Tolerance,
) -> Result<CheckReport> {
    let h = restricted_potential(spec, analysis, vol, mtol)?;
    let k = d.restricted_total(spec)?;
    let mut report = CheckReport::new("restricted_potential", tol);
    report.record("potential", op_norm(&(&h - &k)) / op_norm(&h).max(1.0));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze, volume_structure};
    use crate::matrixalg::{diag_real, kron, random};
    use crate::models;
    use crate::tree::TreeGraph;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn setup(spec: &QmsSpec, n: usize) -> (QmsAnalysis, VolumeStructure, PotentialDecomposition) {
        let an = analyze(spec, n, &tol(), 3).unwrap();
        let vol = volume_structure(spec, &an, n).unwrap();
        let d = decompose_potential(spec, &an, &vol, &tol()).unwrap();
        (an, vol, d)
    }

    #[test]
    fn potential_of_maximally_mixed_and_nonfaithful() {
        let t = Operator::on_site(0, identity(3) * c(1.0 / 3.0, 0.0));
        let h = potential_of(&t, &tol()).unwrap();
        assert!(max_abs(&(h.matrix() - identity(3) * c(3.0_f64.ln(), 0.0))) < 1e-14);
        let bad = Operator::on_site(0, diag_real(&[0.5, 0.5, 0.0, 0.0]));
        assert!(potential_of(&bad, &tol()).is_err());
        let rho = random::density(5, 0.1, &mut random::rng(1));
        let h = potential_of(&Operator::on_site(0, rho.clone()), &tol()).unwrap();
        assert!(max_abs(&(matrix_exp(&-h.matrix(), &tol()).unwrap() - rho)) < 1e-10);
    }

    #[test]
    fn product_terms_are_single_site() {
        let spec = models::make_product_model(&TreeGraph::cayley(2, 2), &models::default_product_params()).unwrap();
        let (an, vol, d) = setup(&spec, 2);
        assert!(check_reconstruction(&spec, &d, 1e-8, &tol()).unwrap().passed);
        let comm = check_commutation(&spec, &d, 1e-9).unwrap();
        assert!(comm.max_deviation < 1e-12, "{comm:?}");
        assert!(check_restricted_potential(&spec, &an, &vol, &d, 1e-8, &tol()).unwrap().passed);
        // no interaction: the root family component splits as A ⊗ 1 + 1 ⊗ B
        let h = &d.family_components[0][0];
        let a = crate::matrixalg::partial_trace_legs(h, &[2, 2], &[0]) * c(0.5, 0.0);
        let b = crate::matrixalg::partial_trace_legs(h, &[2, 2], &[1]) * c(0.5, 0.0);
        let split = kron(&a, &identity(2)) + kron(&identity(2), &b) - identity(4) * (h.trace() * c(0.25, 0.0));
        assert!(max_abs(&(h - split)) < 1e-12);
    }

    #[test]
    fn kernel_terms_are_diagonal() {
        let spec = models::make_classical_kernel_model(
            &TreeGraph::cayley(2, 2),
            &[vec![0.8, 0.2], vec![0.3, 0.7]],
            &[0.6, 0.4],
        )
        .unwrap();
        for n in 0..=2 {
            let (an, vol, d) = setup(&spec, n);
            let total = d.total(&spec).unwrap();
            assert!(max_abs(&(&total - CMatrix::from_diagonal(&total.diagonal()))) < 1e-12);
            let rec = check_reconstruction(&spec, &d, 1e-10, &tol()).unwrap();
            assert!(rec.passed, "{rec:?}");
            assert!(check_commutation(&spec, &d, 1e-12).unwrap().passed);
            assert!(check_restricted_potential(&spec, &an, &vol, &d, 1e-9, &tol()).unwrap().passed);
        }
    }

    #[test]
    fn entangled_middle_term_is_nontrivial() {
        let spec = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        for n in 0..=1 {
            let (an, vol, d) = setup(&spec, n);
            assert!(check_reconstruction(&spec, &d, 1e-8, &tol()).unwrap().passed);
            assert!(check_commutation(&spec, &d, 1e-9).unwrap().passed);
            assert!(check_restricted_potential(&spec, &an, &vol, &d, 1e-8, &tol()).unwrap().passed);
        }
        let (_, _, d) = setup(&spec, 1);
        // the family component couples N̄ of the root with the child
        let h = &d.family_components[0][0];
        assert_eq!(h.nrows(), 4);
        let (hh, _) = traceless(h);
        assert!(max_abs(&hh) > 0.1);
    }

    #[test]
    fn gauge_and_k_terms() {
        let spec = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        let (_, vol, d) = setup(&spec, 1);
        for h in &d.root_components {
            assert!(h.trace().norm() < 1e-12);
        }
        for comps in &d.boundary_components {
            for h in comps {
                assert!(h.trace().norm() < 1e-12);
            }
        }
        // e^{−K_x0} on the block equals Tr e^{−h^{x0}_ω}
        let z = matrix_exp(&-d.root_components[0].clone(), &tol()).unwrap().trace().re;
        let k = d.k_root.matrix();
        assert!((k.trace().re / 4.0 + z.ln()).abs() < 1e-12);
        assert_eq!(vol.root_factors.len(), 1);
    }

    #[test]
    fn perturbed_decomposition_fails_commutation() {
        let spec = models::make_classical_kernel_model(
            &TreeGraph::cayley(2, 2),
            &[vec![0.8, 0.2], vec![0.3, 0.7]],
            &[0.6, 0.4],
        )
        .unwrap();
        let (_, _, mut d) = setup(&spec, 1);
        let noise = random::hermitian(2, &mut random::rng(5));
        d.root = Operator::on_site(0, d.root.matrix() + noise);
        assert!(!check_commutation(&spec, &d, 1e-9).unwrap().passed);
    }
}
