//! Pinchings onto the block algebras `𝒩`, the diagonal algebra built from
//! joint eigenbases of the potential components, and the conditional
//! expectation `𝔈 = 𝔼 ∘ E` onto it.

use std::ops::Range;

use crate::analysis::{assemble_columns, Leg, QmsAnalysis, VolumeStructure};
use crate::check::CheckReport;
use crate::matrixalg::{c, cmul, identity, partial_trace_legs, joint_eigenbasis, kron_all, max_abs, random, CMatrix, JointEigenbasis, Operator};
use crate::measure::SpectrumPoint;
use crate::potential::PotentialDecomposition;
use crate::qms::{finite_volume_state, QmsSpec};
use crate::subalgebra::{BlockStructure, CPMap};
use crate::{Error, Result};

/// `E^x(a) = Σ_ω P_ω a P_ω`.
pub fn pinching(blocks: &BlockStructure) -> Result<CPMap> {
    CPMap::pinching(&blocks.projections())
}

/// `E_{Λ_[0,n]} = ⊗_x E^x` on a volume, with the block projections of
/// every site embedded once.
#[derive(Debug, Clone)]
pub struct VolumePinching {
    /// Embedded projections per site with more than one block.
    sites: Vec<Vec<CMatrix>>,
}

impl VolumePinching {
    pub fn new(spec: &QmsSpec, analysis: &QmsAnalysis, n: usize) -> Result<Self> {
        let ball = spec.ball(n);
        let mut sites = Vec::new();
        for &x in &ball {
            let projs = analysis.vertices[x].blocks.projections();
            if projs.len() > 1 {
                let embedded = projs
                    .into_iter()
                    .map(|p| Ok(Operator::on_site(x, p).embed(&ball, spec.sites())?.into_matrix()))
                    .collect::<Result<Vec<_>>>()?;
                sites.push(embedded);
            }
        }
        Ok(VolumePinching { sites })
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        let mut out = a.clone();
        for projs in &self.sites {
            let mut next = CMatrix::zeros(out.nrows(), out.ncols());
            for p in projs {
                next += cmul(&cmul(p, &out), p);
            }
            out = next;
        }
        out
    }
}

/// `E_{Λ_[0,n]}(a)`, one site at a time.
pub fn volume_pinch(spec: &QmsSpec, analysis: &QmsAnalysis, n: usize, a: &CMatrix) -> Result<CMatrix> {
    Ok(VolumePinching::new(spec, analysis, n)?.apply(a))
}

/// Pinching on the input legs `{x} ∪ S(x)` of `ℰ^x`.
fn family_pinching(analysis: &QmsAnalysis, x: usize) -> Result<CPMap> {
    let mut map = pinching(&analysis.vertices[x].blocks)?;
    for &y in &analysis.vertices[x].children {
        map = map.tensor(&pinching(&analysis.vertices[y].blocks)?);
    }
    Ok(map)
}

/// Both parts of the pinching proposition on `Λ_[0,n]`: per vertex
/// `ℰ^x ∘ (E^x ⊗ E^{S(x)}) = E^x ∘ ℰ^x = ℰ^x` as superoperators, and
/// `T = E(T)` for the volume density.
pub fn check_prop_phi_e(spec: &QmsSpec, analysis: &QmsAnalysis, n: usize, tol: f64) -> Result<CheckReport> {
    let tree = spec.tree();
    let mut report = CheckReport::new("prop_phiE", tol);
    for x in spec.ball(n) {
        if tree.level_of(x) >= n || tree.is_leaf(x) {
            continue;
        }
        let e = spec.transition(x);
        let s = e.superoperator();
        let inner = e.compose(&family_pinching(analysis, x)?)?;
        report.record(format!("ℰ∘E {}", tree.vertex(x)), max_abs(&(inner.superoperator() - &s)));
        let outer = pinching(&analysis.vertices[x].blocks)?.compose(e)?;
        report.record(format!("E∘ℰ {}", tree.vertex(x)), max_abs(&(outer.superoperator() - &s)));
    }
    let t = finite_volume_state(spec, n)?;
    report.record("φ = φ∘E", max_abs(&(volume_pinch(spec, analysis, n, &t)? - &t)));
    Ok(report)
}

/// Eigenline data of the diagonal algebra on one volume: rank-one lines for
/// the root and family factors, spectral projections of the boundary
/// components.
#[derive(Debug, Clone)]
pub struct DiagonalBasis {
    pub n: usize,
    /// Per root block, a basis of `N_ω` diagonalizing `h^{x0}_ω`.
    pub root: Vec<JointEigenbasis>,
    /// Per family and label tuple, a basis of `N̄_x ⊗ N_{S(x)}`
    /// diagonalizing the family component.
    pub families: Vec<Vec<JointEigenbasis>>,
    /// Per boundary vertex and block, the spectral decomposition of `ĥ^y_ω`.
    pub boundary: Vec<Vec<JointEigenbasis>>,
}

/// Joint eigenbases, eigenvalues of the potential components ascending
/// (densest line first), degenerate spaces resolved lexicographically.
pub fn build_diagonal(d: &PotentialDecomposition, seed: u64) -> Result<DiagonalBasis> {
    let basis = |h: &CMatrix| joint_eigenbasis(std::slice::from_ref(h), h.nrows(), seed);
    Ok(DiagonalBasis {
        n: d.n,
        root: d.root_components.iter().map(basis).collect::<std::result::Result<_, _>>()?,
        families: d
            .family_components
            .iter()
            .map(|comps| comps.iter().map(basis).collect::<std::result::Result<_, _>>())
            .collect::<std::result::Result<_, _>>()?,
        boundary: d
            .boundary_components
            .iter()
            .map(|comps| comps.iter().map(basis).collect::<std::result::Result<_, _>>())
            .collect::<std::result::Result<_, _>>()?,
    })
}

impl DiagonalBasis {
    /// Largest off-diagonal or within-cluster spread of the components in
    /// their chosen bases (relative to the component norm).
    pub fn residual(&self, d: &PotentialDecomposition) -> f64 {
        let res = |h: &CMatrix, jb: &JointEigenbasis| -> f64 {
            let t = jb.vectors.adjoint() * h * &jb.vectors;
            let scale = max_abs(h).max(1.0);
            let mut worst: f64 = 0.0;
            for i in 0..t.nrows() {
                for j in 0..t.ncols() {
                    if i != j {
                        worst = worst.max(t[(i, j)].norm() / scale);
                    }
                }
            }
            worst
        };
        let mut worst: f64 = 0.0;
        for (h, jb) in d.root_components.iter().zip(&self.root) {
            worst = worst.max(res(h, jb));
        }
        for (hs, jbs) in d.family_components.iter().zip(&self.families) {
            for (h, jb) in hs.iter().zip(jbs) {
                worst = worst.max(res(h, jb));
            }
        }
        for (hs, jbs) in d.boundary_components.iter().zip(&self.boundary) {
            for (h, jb) in hs.iter().zip(jbs) {
                worst = worst.max(res(h, jb));
            }
        }
        worst
    }
}

/// `𝔈 = 𝔼 ∘ E`: conjugate into the frame, average the diagonal over each
/// point's column group, conjugate back.
#[derive(Debug, Clone)]
pub struct DiagonalCE {
    pub n: usize,
    /// Unitary whose column groups span the minimal projections of the
    /// diagonal algebra.
    pub frame: CMatrix,
    pub points: Vec<SpectrumPoint>,
    pub groups: Vec<Range<usize>>,
}

pub fn diagonal_ce(analysis: &QmsAnalysis, vol: &VolumeStructure, basis: &DiagonalBasis) -> Result<DiagonalCE> {
    let mut cols: Vec<CMatrix> = Vec::new();
    let mut points = Vec::new();
    let mut groups = Vec::new();
    let mut start = 0;
    for idx in 0..vol.configuration_count() {
        let omega = vol.configuration(idx);
        let blocks = vol.blocks(analysis, &omega);
        let root = &basis.root[omega[0]];
        let fam_bases: Vec<&JointEigenbasis> = vol
            .families
            .iter()
            .enumerate()
            .map(|(f, fam)| {
                let mut digits = vec![omega[fam.x]];
                digits.extend(fam.children.iter().map(|&y| omega[y]));
                &basis.families[f][crate::analysis::mixed_index(&fam.radix, &digits)]
            })
            .collect();
        let bnd_bases: Vec<&JointEigenbasis> =
            vol.boundary.iter().enumerate().map(|(k, &y)| &basis.boundary[k][omega[y]]).collect();
        // line radix: root lines, family lines, boundary clusters
        let mut radix = vec![root.vectors.ncols()];
        radix.extend(fam_bases.iter().map(|b| b.vectors.ncols()));
        radix.extend(bnd_bases.iter().map(|b| b.clusters.len()));
        let total: usize = radix.iter().product();
        for li in 0..total {
            let lines = crate::analysis::mixed_digits(&radix, li);
            let mut factors = vec![(vec![Leg::Slow(0)], root.vectors.columns(lines[0], 1).into_owned())];
            for (f, fam) in vol.families.iter().enumerate() {
                let mut legs = vec![Leg::Fast(fam.x)];
                legs.extend(fam.children.iter().map(|&y| Leg::Slow(y)));
                factors.push((legs, fam_bases[f].vectors.columns(lines[1 + f], 1).into_owned()));
            }
            let nf = vol.families.len();
            for (k, &y) in vol.boundary.iter().enumerate() {
                let cl = bnd_bases[k].clusters[lines[1 + nf + k]].clone();
                factors.push((vec![Leg::Fast(y)], bnd_bases[k].vectors.columns_range(cl).into_owned()));
            }
            let block = assemble_columns(&blocks, &factors);
            let r = block.ncols();
            cols.push(block);
            groups.push(start..start + r);
            start += r;
            points.push(SpectrumPoint {
                blocks: omega.clone(),
                root_line: lines[0],
                family_lines: lines[1..1 + nf].to_vec(),
                boundary_lines: lines[1 + nf..].to_vec(),
            });
        }
    }
    let dim = cols[0].nrows();
    if start != dim {
        return Err(Error::Malformed(format!("diagonal frame has {start} columns in dimension {dim}")));
    }
    let mut frame = CMatrix::zeros(dim, dim);
    for (g, m) in groups.iter().zip(&cols) {
        frame.columns_range_mut(g.clone()).copy_from(m);
    }
    Ok(DiagonalCE { n: vol.n, frame, points, groups })
}

impl DiagonalCE {
    pub fn dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn rank(&self, p: usize) -> usize {
        self.groups[p].len()
    }

    pub fn projection(&self, p: usize) -> CMatrix {
        let w = self.frame.columns_range(self.groups[p].clone());
        &w * w.adjoint()
    }

    /// Normalized traces `Tr(Q_p a) / r_p` over all points.
    pub fn averages(&self, a: &CMatrix) -> Vec<crate::C64> {
        // diagonal of W† a W, column by column
        let aw = cmul(a, &self.frame);
        self.groups
            .iter()
            .map(|g| {
                let s: crate::C64 = g.clone().map(|k| self.frame.column(k).dotc(&aw.column(k))).sum();
                s / c(g.len() as f64, 0.0)
            })
            .collect()
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        let avg = self.averages(a);
        let mut scaled = self.frame.clone();
        for (g, v) in self.groups.iter().zip(&avg) {
            for k in g.clone() {
                let col = scaled.column(k) * *v;
                scaled.set_column(k, &col);
            }
        }
        cmul(&scaled, &self.frame.adjoint())
    }

    /// Kraus form `|w_c⟩⟨w_c'| / √r` over pairs inside each group; only for
    /// small volumes.
    pub fn as_cpmap(&self, cap: usize) -> Result<CPMap> {
        let d = self.dim();
        if d > cap {
            return Err(Error::DimensionCap { dim: d, cap });
        }
        let mut kraus = Vec::new();
        for g in &self.groups {
            let r = g.len() as f64;
            for a in g.clone() {
                for b in g.clone() {
                    let k = self.frame.column(a) * self.frame.column(b).adjoint() * c(1.0 / r.sqrt(), 0.0);
                    kraus.push(k);
                }
            }
        }
        CPMap::from_kraus(d, d, kraus)
    }

    /// Unitarity of the frame.
    pub fn frame_residual(&self) -> f64 {
        max_abs(&(self.frame.adjoint() * &self.frame - identity(self.dim())))
    }

    /// Sampled conditional-expectation axioms: unitality, idempotence,
    /// module property over random range elements, positivity on `a†a`,
    /// and commutativity of the range.
    pub fn check_axioms(&self, samples: usize, seed: u64, tol: f64) -> CheckReport {
        let d = self.dim();
        let mut rng = random::rng(seed);
        let mut report = CheckReport::new("diagonal_ce_axioms", tol);
        report.record("frame", self.frame_residual());
        report.record("unital", max_abs(&(self.apply(&identity(d)) - identity(d))));
        let mut idem: f64 = 0.0;
        let mut module: f64 = 0.0;
        let mut positive: f64 = 0.0;
        let mut abelian: f64 = 0.0;
        for _ in 0..samples {
            let a = random::observable(d, &mut rng);
            let ea = self.apply(&a);
            idem = idem.max(max_abs(&(self.apply(&ea) - &ea)));
            let b1 = self.apply(&random::ginibre(d, d, &mut rng));
            let b2 = self.apply(&random::ginibre(d, d, &mut rng));
            module = module.max(max_abs(&(self.apply(&(&b1 * &a * &b2)) - &b1 * &ea * &b2)));
            abelian = abelian.max(max_abs(&(&b1 * &b2 - &b2 * &b1)));
            positive = positive.max(-crate::matrixalg::min_eigenvalue(&self.apply(&(a.adjoint() * &a))));
        }
        report.record("idempotent", idem);
        report.record("module", module);
        report.record("positive", positive.max(0.0));
        report.record("abelian", abelian);
        report
    }
}


/// `φ = φ_μ ∘ 𝔈`: the largest entry of `T − Σ_p μ_p Q_p / r_p` (this is the
/// maximum over all matrix units) and the deviation on `samples` seeded
/// random observables of unit norm.
pub fn check_diagonalizability(
    t: &CMatrix,
    dce: &DiagonalCE,
    masses: &[f64],
    samples: usize,
    seed: u64,
    tol: f64,
) -> CheckReport {
    let mut report = CheckReport::new("diagonalizability", tol);
    let mut diag = nalgebra::DVector::<crate::C64>::zeros(dce.dim());
    for (g, &mu) in dce.groups.iter().zip(masses) {
        for k in g.clone() {
            diag[k] = c(mu / g.len() as f64, 0.0);
        }
    }
    let td = &dce.frame * CMatrix::from_diagonal(&diag) * dce.frame.adjoint();
    report.record("matrix units", max_abs(&(t - td)));
    let mut rng = random::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = random::observable(dce.dim(), &mut rng);
        let direct = crate::matrixalg::trace_product(t, &a);
        let ea = dce.apply(&a);
        let via: crate::C64 = dce.averages(&ea).iter().zip(masses).map(|(v, &mu)| v * mu).sum();
        worst = worst.max((direct - via).norm());
    }
    report.record(format!("{samples} random observables"), worst);
    report
}

/// Coarse volumes up to this dimension are checked on every matrix unit;
/// larger ones on seeded random observables.
pub const DIRECT_COMPAT_DIM: usize = 16;

/// Volume compatibility `E_n(a ⊗ 1) = E_{n−1}(a) ⊗ 1` and
/// `𝔈_n(a ⊗ 1) = 𝔈_{n−1}(a) ⊗ 1`.
///
/// For `𝔈` the identity is checked in its equivalent structural form on
/// the full algebra: every fine minimal projection `Q_p` lies under exactly
/// one `Q'_q ⊗ 1`, and `Tr_new(Q_p) / r_p = Q'_q / r'_q`. Both maps are
/// also evaluated directly, on all matrix units for small coarse volumes
/// and on `samples` random observables otherwise.
pub fn check_compatibility(
    spec: &QmsSpec,
    analysis: &QmsAnalysis,
    coarse: &DiagonalCE,
    fine: &DiagonalCE,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckReport> {
    let (m, n) = (coarse.n, fine.n);
    if n != m + 1 {
        return Err(Error::Malformed(format!("compatibility needs consecutive volumes, got {m} and {n}")));
    }
    let ds = coarse.dim();
    let d = fine.dim();
    let pad = d / ds;
    let id = identity(pad);
    let mut report = CheckReport::new("compatibility", tol);

    let mut group_of = vec![0; ds];
    for (q, g) in coarse.groups.iter().enumerate() {
        for k in g.clone() {
            group_of[k] = q;
        }
    }
    // column k·pad + t of W' ⊗ 1 lies in the group of column k
    let x = fine.frame.adjoint() * crate::matrixalg::kron(&coarse.frame, &id);
    let mut range_dev: f64 = 0.0;
    let mut weight_dev: f64 = 0.0;
    for g in &fine.groups {
        let r = g.len() as f64;
        let mut mass = vec![0.0; coarse.groups.len()];
        for i in g.clone() {
            for col in 0..d {
                mass[group_of[col / pad]] += x[(i, col)].norm_sqr();
            }
        }
        let q = (0..mass.len()).max_by(|&a, &b| mass[a].total_cmp(&mass[b])).expect("coarse points exist");
        for (k, &w) in mass.iter().enumerate() {
            let target = if k == q { r } else { 0.0 };
            range_dev = range_dev.max((w - target).abs() / r);
        }
        let w = fine.frame.columns_range(g.clone());
        let kp = partial_trace_legs(&(&w * w.adjoint()), &[ds, pad], &[0]);
        let want = coarse.projection(q) * c(1.0 / coarse.rank(q) as f64, 0.0);
        weight_dev = weight_dev.max(max_abs(&(kp * c(1.0 / r, 0.0) - want)));
    }
    report.record(format!("𝔈 n={m}→{n} range"), range_dev);
    report.record(format!("𝔈 n={m}→{n} weights"), weight_dev);

    let e_small = VolumePinching::new(spec, analysis, m)?;
    let e_big = VolumePinching::new(spec, analysis, n)?;
    let observables: Vec<CMatrix> = if ds <= DIRECT_COMPAT_DIM {
        (0..ds * ds).map(|k| crate::matrixalg::matrix_unit(ds, k / ds, k % ds)).collect()
    } else {
        let mut rng = random::rng(seed);
        (0..samples).map(|_| random::observable(ds, &mut rng)).collect()
    };
    let mut e_dev: f64 = 0.0;
    let mut ee_dev: f64 = 0.0;
    for a in &observables {
        let lifted = kron_all([a, &id]);
        e_dev = e_dev.max(max_abs(&(e_big.apply(&lifted) - kron_all([&e_small.apply(a), &id]))));
        ee_dev = ee_dev.max(max_abs(&(fine.apply(&lifted) - kron_all([&coarse.apply(a), &id]))));
    }
    let how = if ds <= DIRECT_COMPAT_DIM { "matrix units".to_string() } else { format!("{samples} samples") };
    report.record(format!("E n={m}→{n} ({how})"), e_dev);
    report.record(format!("𝔈 n={m}→{n} ({how})"), ee_dev);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze, volume_structure};
    use crate::matrixalg::{diag_real, Tolerance};
    use crate::models;
    use crate::potential::decompose_potential;
    use crate::subalgebra::{fixed_point_algebra, SubalgebraBasis};
    use crate::tree::TreeGraph;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn pipeline(spec: &QmsSpec, n: usize) -> (QmsAnalysis, VolumeStructure, DiagonalBasis, DiagonalCE) {
        let an = analyze(spec, n, &tol(), 9).unwrap();
        let vol = volume_structure(spec, &an, n).unwrap();
        let d = decompose_potential(spec, &an, &vol, &tol()).unwrap();
        let basis = build_diagonal(&d, 9).unwrap();
        assert!(basis.residual(&d) < 1e-9);
        let dce = diagonal_ce(&an, &vol, &basis).unwrap();
        (an, vol, basis, dce)
    }

    #[test]
    fn pinching_examples() {
        let one = BlockStructure { dim: 3, blocks: vec![] };
        let _ = one;
        let single = crate::subalgebra::block_structure(&SubalgebraBasis::scalars(3), 1).unwrap();
        let e = pinching(&single).unwrap();
        assert!(max_abs(&(e.superoperator() - identity(9))) < 1e-12);
        let two = crate::subalgebra::block_structure(&SubalgebraBasis::diagonal(2), 1).unwrap();
        let e = pinching(&two).unwrap();
        assert_eq!(fixed_point_algebra(&e, &tol()).unwrap().len(), 2);
        let p = diag_real(&[1.0, 1.0, 0.0, 0.0]);
        let q = diag_real(&[0.0, 0.0, 1.0, 1.0]);
        let e = CPMap::pinching(&[p, q]).unwrap();
        assert!(e.choi_min_eigenvalue() > -1e-12);
        assert_eq!(fixed_point_algebra(&e, &tol()).unwrap().len(), 8);
    }

    #[test]
    fn prop_phi_e_on_models() {
        let kernel = models::make_classical_kernel_model(
            &TreeGraph::cayley(2, 2),
            &[vec![0.8, 0.2], vec![0.3, 0.7]],
            &[0.6, 0.4],
        )
        .unwrap();
        let ent = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        for (spec, n) in [(&kernel, 2), (&ent, 1)] {
            let an = analyze(spec, n, &tol(), 9).unwrap();
            let rep = check_prop_phi_e(spec, &an, n, 1e-9).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn frame_is_unitary_and_state_is_diagonal() {
        let product = models::make_product_model(&TreeGraph::cayley(2, 2), &models::default_product_params()).unwrap();
        let ent = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        for (spec, n) in [(&product, 2), (&ent, 1), (&ent, 0)] {
            let (_, _, _, dce) = pipeline(spec, n);
            assert!(dce.frame_residual() < 1e-10);
            let t = finite_volume_state(spec, n).unwrap();
            let masses: Vec<f64> = dce.averages(&t).iter().zip(&dce.groups).map(|(v, g)| v.re * g.len() as f64).collect();
            let rep = check_diagonalizability(&t, &dce, &masses, 10, 1, 1e-9);
            assert!(rep.passed, "{rep:?}");
            assert!(dce.check_axioms(5, 2, 1e-9).passed);
        }
    }

    #[test]
    fn product_diagonal_is_computational_for_diagonal_states() {
        let params = models::ProductParams { root_state: diag_real(&[0.7, 0.3]), site_state: diag_real(&[0.6, 0.4]) };
        let spec = models::make_product_model(&TreeGraph::cayley(2, 1), &params).unwrap();
        let (_, _, _, dce) = pipeline(&spec, 1);
        for p in 0..dce.points.len() {
            let q = dce.projection(p);
            assert!(max_abs(&(&q - CMatrix::from_diagonal(&q.diagonal()))) < 1e-12);
        }
    }

    #[test]
    fn compatibility_across_volumes() {
        let kernel = models::make_classical_kernel_model(
            &TreeGraph::cayley(2, 2),
            &[vec![0.8, 0.2], vec![0.3, 0.7]],
            &[0.6, 0.4],
        )
        .unwrap();
        let ent = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        for (spec, n) in [(&kernel, 2), (&ent, 1)] {
            let (an, _, _, fine) = pipeline(spec, n);
            let (_, _, _, coarse) = pipeline(spec, n - 1);
            let rep = check_compatibility(spec, &an, &coarse, &fine, 10, 3, 1e-9).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn small_volume_cpmap_passes_axioms() {
        let ent = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        let (_, _, _, dce) = pipeline(&ent, 1);
        let e = dce.as_cpmap(64).unwrap();
        let rep = crate::subalgebra::ce_axioms(&e, &tol()).unwrap();
        assert!(rep.passes(1e-9), "{rep:?}");
        assert!(dce.as_cpmap(4).is_err());
    }
}
