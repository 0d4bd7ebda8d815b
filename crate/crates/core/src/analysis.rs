//! Block analysis of the transition expectations and the resulting block
//! form of the finite-volume densities.
//!
//! Every vertex `x` gets the range `ℛ_x` of `a ↦ ℰ^x(a ⊗ 1)`, its blocks
//! `P_ω ≅ N_ω ⊗ N̄_ω` and the block states `Φ_ω` on `N̄_ω ⊗ A_{S(x)}`. On a
//! volume `Λ_[0,n]` the density then splits, for every assignment of block
//! labels, into a root factor on `N_{x0}`, one family factor per interior
//! vertex on `N̄_x ⊗ N_{S(x)}`, and one boundary factor per `y ∈ Λ_n` on
//! `N̄_y`.

use crate::matrixalg::{identity, kron, kron_all, partial_trace_legs, permute_legs, permute_rows, CMatrix, Tolerance};
use crate::qms::QmsSpec;
use crate::subalgebra::{block_structure, fixed_point_algebra, umegaki_block_states, Block, BlockStructure, SubalgebraBasis};
use crate::Result;

#[derive(Debug, Clone)]
pub struct VertexAnalysis {
    pub vertex: usize,
    pub children: Vec<usize>,
    pub range: SubalgebraBasis,
    pub blocks: BlockStructure,
    /// `Φ_ω` on `N̄_ω ⊗ A_{S(x)}`, one per block.
    pub block_states: Vec<CMatrix>,
}

#[derive(Debug, Clone)]
pub struct QmsAnalysis {
    pub vertices: Vec<VertexAnalysis>,
}

impl QmsAnalysis {
    pub fn block(&self, x: usize, omega: usize) -> &Block {
        &self.vertices[x].blocks.blocks[omega]
    }

    pub fn block_count(&self, x: usize) -> usize {
        self.vertices[x].blocks.len()
    }
}

pub fn analyze_vertex(spec: &QmsSpec, x: usize, tol: &Tolerance, seed: u64) -> Result<VertexAnalysis> {
    let e = spec.transition(x);
    let range = fixed_point_algebra(&e.closure(), tol)?;
    let blocks = block_structure(&range, seed)?;
    let block_states = umegaki_block_states(e, &blocks, tol)?;
    Ok(VertexAnalysis { vertex: x, children: spec.tree().children(x).to_vec(), range, blocks, block_states })
}

/// Analyses every vertex of `Λ_[0,n]`.
pub fn analyze(spec: &QmsSpec, n: usize, tol: &Tolerance, seed: u64) -> Result<QmsAnalysis> {
    let vertices = spec.ball(n).into_iter().map(|x| analyze_vertex(spec, x, tol, seed)).collect::<Result<_>>()?;
    Ok(QmsAnalysis { vertices })
}

/// A tensor leg of `⊗_k (N_k ⊗ N̄_k)` over an ordered list of sites; the
/// index is the position in that list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Leg {
    Slow(usize),
    Fast(usize),
}

fn leg_dim(blocks: &[&Block], leg: Leg) -> usize {
    match leg {
        Leg::Slow(k) => blocks[k].n,
        Leg::Fast(k) => blocks[k].m,
    }
}

fn site_major(k: usize) -> impl Iterator<Item = Leg> {
    (0..k).flat_map(|i| [Leg::Slow(i), Leg::Fast(i)])
}

/// Completes the factor list with identities on uncovered legs, returns the
/// legs in factor order, their dims and the permutation to site-major order.
fn factor_layout(blocks: &[&Block], factors: &[(Vec<Leg>, CMatrix)]) -> (Vec<Leg>, Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<Leg> = factors.iter().flat_map(|(l, _)| l.iter().cloned()).collect();
    let missing: Vec<Leg> = site_major(blocks.len()).filter(|l| !order.contains(l)).collect();
    order.extend(&missing);
    debug_assert_eq!(order.len(), 2 * blocks.len());
    let dims: Vec<usize> = order.iter().map(|&l| leg_dim(blocks, l)).collect();
    let perm: Vec<usize> =
        site_major(blocks.len()).map(|l| order.iter().position(|&o| o == l).expect("every leg is listed")).collect();
    let missing_dims = missing.iter().map(|&l| leg_dim(blocks, l)).collect();
    (order, dims, perm, missing_dims)
}

/// `V (X_1 ⊗ … ⊗ 1) V†` with `V = ⊗_k iso_k`, the factors placed on the
/// listed legs and identities elsewhere.
pub fn assemble_operator(blocks: &[&Block], factors: &[(Vec<Leg>, CMatrix)]) -> CMatrix {
    let (_, dims, perm, missing) = factor_layout(blocks, factors);
    let ids: Vec<CMatrix> = missing.iter().map(|&d| identity(d)).collect();
    let x = kron_all(factors.iter().map(|(_, m)| m).chain(&ids));
    let x = permute_legs(&x, &dims, &perm);
    let v = kron_all(blocks.iter().map(|b| &b.iso));
    &v * x * v.adjoint()
}

/// Same placement for column sets: returns `V · (C_1 ⊗ … ⊗ 1)` with rows in
/// site order; columns follow the factor order.
pub fn assemble_columns(blocks: &[&Block], factors: &[(Vec<Leg>, CMatrix)]) -> CMatrix {
    let (_, dims, perm, missing) = factor_layout(blocks, factors);
    let ids: Vec<CMatrix> = missing.iter().map(|&d| identity(d)).collect();
    let x = kron_all(factors.iter().map(|(_, m)| m).chain(&ids));
    let x = permute_rows(&x, &dims, &perm);
    kron_all(blocks.iter().map(|b| &b.iso)) * x
}

/// Mixed-radix index, first digit slowest.
pub fn mixed_index(radix: &[usize], digits: &[usize]) -> usize {
    digits.iter().zip(radix).fold(0, |acc, (d, r)| acc * r + d)
}

pub fn mixed_digits(radix: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; radix.len()];
    for k in (0..radix.len()).rev() {
        out[k] = index % radix[k];
        index /= radix[k];
    }
    out
}

/// Family factors of one interior vertex, indexed by `(ω_x, ω_{S(x)})` in
/// mixed radix.
#[derive(Debug, Clone)]
pub struct FamilyFactors {
    pub x: usize,
    pub children: Vec<usize>,
    pub radix: Vec<usize>,
    /// Density on `N̄_x ⊗ N_{y_1} ⊗ …` per label tuple.
    pub densities: Vec<CMatrix>,
}

impl FamilyFactors {
    pub fn density(&self, omega_x: usize, omega_children: &[usize]) -> &CMatrix {
        let mut digits = vec![omega_x];
        digits.extend(omega_children);
        &self.densities[mixed_index(&self.radix, &digits)]
    }
}

#[derive(Debug, Clone)]
pub struct VolumeStructure {
    pub n: usize,
    /// Sites of `Λ_[0,n]`, equal to `0..len`.
    pub sites: Vec<usize>,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    /// `|Ω_x|` per site.
    pub radix: Vec<usize>,
    /// `R_ω = Tr_{N̄}(ρ_0)` on `N_ω`, per root block.
    pub root_factors: Vec<CMatrix>,
    pub families: Vec<FamilyFactors>,
    /// `B_ω = Tr_{S(y)} Φ^y_ω` on `N̄_ω`, per boundary vertex and block.
    pub boundary_factors: Vec<Vec<CMatrix>>,
}

pub fn volume_structure(spec: &QmsSpec, analysis: &QmsAnalysis, n: usize) -> Result<VolumeStructure> {
    let tree = spec.tree();
    if n > tree.depth() {
        return Err(crate::Error::Volume { n, depth: tree.depth() });
    }
    let sites = spec.ball(n);
    let radix: Vec<usize> = sites.iter().map(|&x| analysis.block_count(x)).collect();
    let root_factors = analysis.vertices[0].blocks.blocks.iter().map(|b| b.slow_part(spec.root_state())).collect();
    let interior: Vec<usize> = sites.iter().cloned().filter(|&x| tree.level_of(x) < n).collect();
    let boundary: Vec<usize> = sites.iter().cloned().filter(|&x| tree.level_of(x) == n).collect();

    let mut families = Vec::with_capacity(interior.len());
    for &x in &interior {
        let children = tree.children(x).to_vec();
        let mut fam_radix = vec![radix[x]];
        fam_radix.extend(children.iter().map(|&y| radix[y]));
        let total: usize = fam_radix.iter().product();
        let mut densities = Vec::with_capacity(total);
        for idx in 0..total {
            let digits = mixed_digits(&fam_radix, idx);
            let bx = analysis.block(x, digits[0]);
            let phi = &analysis.vertices[x].block_states[digits[0]];
            let child_blocks: Vec<&Block> =
                children.iter().zip(&digits[1..]).map(|(&y, &w)| analysis.block(y, w)).collect();
            let w = kron(&identity(bx.m), &kron_all(child_blocks.iter().map(|b| &b.iso)));
            let reduced = w.adjoint() * phi * &w;
            let mut dims = vec![bx.m];
            let mut keep = vec![0];
            for b in &child_blocks {
                keep.push(dims.len());
                dims.push(b.n);
                dims.push(b.m);
            }
            densities.push(partial_trace_legs(&reduced, &dims, &keep));
        }
        families.push(FamilyFactors { x, children, radix: fam_radix, densities });
    }

    let mut boundary_factors = Vec::with_capacity(boundary.len());
    for &y in &boundary {
        let va = &analysis.vertices[y];
        let s = spec.transition(y).environment_dim();
        let per_block = va
            .blocks
            .blocks
            .iter()
            .zip(&va.block_states)
            .map(|(b, phi)| partial_trace_legs(phi, &[b.m, s], &[0]))
            .collect();
        boundary_factors.push(per_block);
    }
    Ok(VolumeStructure { n, sites, interior, boundary, radix, root_factors, families, boundary_factors })
}

impl VolumeStructure {
    pub fn configuration_count(&self) -> usize {
        self.radix.iter().product()
    }

    /// Block labels of configuration `index`, lexicographic with the root
    /// slowest.
    pub fn configuration(&self, index: usize) -> Vec<usize> {
        mixed_digits(&self.radix, index)
    }

    pub fn blocks<'a>(&self, analysis: &'a QmsAnalysis, omega: &[usize]) -> Vec<&'a Block> {
        self.sites.iter().map(|&x| analysis.block(x, omega[x])).collect()
    }

    pub fn family_density(&self, f: usize, omega: &[usize]) -> &CMatrix {
        let fam = &self.families[f];
        let kids: Vec<usize> = fam.children.iter().map(|&y| omega[y]).collect();
        fam.density(omega[fam.x], &kids)
    }

    /// Factor list of one block, in the canonical factor order: root,
    /// families in vertex order, boundary in vertex order.
    pub fn factors(&self, omega: &[usize]) -> Vec<(Vec<Leg>, CMatrix)> {
        let mut out = vec![(vec![Leg::Slow(0)], self.root_factors[omega[0]].clone())];
        for (f, fam) in self.families.iter().enumerate() {
            let mut legs = vec![Leg::Fast(fam.x)];
            legs.extend(fam.children.iter().map(|&y| Leg::Slow(y)));
            out.push((legs, self.family_density(f, omega).clone()));
        }
        for (k, &y) in self.boundary.iter().enumerate() {
            out.push((vec![Leg::Fast(y)], self.boundary_factors[k][omega[y]].clone()));
        }
        out
    }

    pub fn block_density(&self, analysis: &QmsAnalysis, omega: &[usize]) -> CMatrix {
        assemble_operator(&self.blocks(analysis, omega), &self.factors(omega))
    }

    /// The density reassembled from its block factors.
    pub fn structured_density(&self, analysis: &QmsAnalysis) -> CMatrix {
        let mut out: Option<CMatrix> = None;
        for idx in 0..self.configuration_count() {
            let omega = self.configuration(idx);
            let b = self.block_density(analysis, &omega);
            out = Some(match out {
                None => b,
                Some(acc) => acc + b,
            });
        }
        out.expect("at least one configuration")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixalg::max_abs;
    use crate::models;
    use crate::qms::finite_volume_state;
    use crate::tree::TreeGraph;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn check_structure(spec: &QmsSpec, n: usize) {
        let an = analyze(spec, n, &tol(), 7).unwrap();
        let vol = volume_structure(spec, &an, n).unwrap();
        let t = finite_volume_state(spec, n).unwrap();
        let s = vol.structured_density(&an);
        assert!(max_abs(&(&t - &s)) < 1e-12, "n={n}: {:.3e}", max_abs(&(&t - &s)));
    }

    #[test]
    fn block_form_matches_density() {
        let product = models::make_product_model(&TreeGraph::cayley(2, 2), &models::default_product_params()).unwrap();
        let kernel = models::make_classical_kernel_model(
            &TreeGraph::cayley(2, 2),
            &[vec![0.8, 0.2], vec![0.3, 0.7]],
            &[0.6, 0.4],
        )
        .unwrap();
        let ent = models::make_entangled_fixture(&models::default_entangled_params()).unwrap();
        for n in 0..=2 {
            check_structure(&product, n);
            check_structure(&kernel, n);
        }
        check_structure(&ent, 0);
        check_structure(&ent, 1);
    }

    #[test]
    fn kernel_family_factors_are_kernel_products() {
        let kernel = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
        // depth 2 so that the children are not leaves
        let spec = models::make_classical_kernel_model(&TreeGraph::cayley(2, 2), &kernel, &[0.6, 0.4]).unwrap();
        let an = analyze(&spec, 1, &tol(), 7).unwrap();
        let vol = volume_structure(&spec, &an, 1).unwrap();
        // blocks are the computational projections; find their labels
        let label = |x: usize, i: usize| {
            (0..2).find(|&w| an.block(x, w).projection[(i, i)].re > 0.5).unwrap()
        };
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let m = vol.families[0].density(label(0, i), &[label(1, j), label(2, k)]);
                    assert!((m[(0, 0)].re - kernel[i][j] * kernel[i][k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mixed_radix_round_trip() {
        let radix = [2, 3, 1, 4];
        for i in 0..24 {
            assert_eq!(mixed_index(&radix, &mixed_digits(&radix, i)), i);
        }
    }
}
