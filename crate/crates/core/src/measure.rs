//! The classical measure `μ` on the spectrum of the diagonal algebra and its
//! Markov structure along the levels of the tree.

use std::collections::BTreeMap;

use crate::analysis::{mixed_index, VolumeStructure};
use crate::check::CheckReport;
use crate::diagonal::{DiagonalBasis, DiagonalCE};
use crate::matrixalg::CMatrix;
use crate::{Error, Result};

/// A minimal projection of the diagonal algebra: block labels per site,
/// the root eigenline, one eigenline per family and one spectral cluster per
/// boundary vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpectrumPoint {
    pub blocks: Vec<usize>,
    pub root_line: usize,
    pub family_lines: Vec<usize>,
    pub boundary_lines: Vec<usize>,
}

/// Weights below this are treated as impossible pasts when conditioning.
pub const CONDITIONING_FLOOR: f64 = 1e-12;

type Key = Vec<usize>;

#[derive(Debug, Clone)]
pub struct MarkovMeasure {
    /// Level keys per point: level 0 is `(ω_{x0}, root line)`, level `k`
    /// the block labels of `Λ_k` and the family lines of `Λ_{k−1}`; the
    /// boundary clusters are appended to the last level.
    pub levels: Vec<Vec<Key>>,
    /// `Tr(T Q_p)`.
    pub direct: Vec<f64>,
    /// Per point and level, the factor contributed by that level; their
    /// product is the factorized mass. `None` for measures given only by
    /// their weights.
    pub level_factors: Option<Vec<Vec<f64>>>,
}

fn quad(v: nalgebra::DVectorView<'_, crate::C64>, m: &CMatrix) -> f64 {
    (v.adjoint() * m * v)[(0, 0)].re
}

/// Builds `μ` for one volume from the factor data, with direct masses from
/// the density `t`.
pub fn markov_measure(
    spec: &crate::qms::QmsSpec,
    vol: &VolumeStructure,
    basis: &DiagonalBasis,
    dce: &DiagonalCE,
    t: &CMatrix,
) -> Result<MarkovMeasure> {
    let tree = spec.tree();
    let n = vol.n;
    let direct: Vec<f64> = dce.averages(t).iter().zip(&dce.groups).map(|(v, g)| v.re * g.len() as f64).collect();
    let mut levels = Vec::with_capacity(dce.points.len());
    let mut factors = Vec::with_capacity(dce.points.len());
    for p in &dce.points {
        let omega = &p.blocks;
        let mut keys: Vec<Key> = vec![vec![omega[0], p.root_line]];
        let mut fac = vec![quad(basis.root[omega[0]].vectors.column(p.root_line), &vol.root_factors[omega[0]])];
        for k in 1..=n {
            let mut key: Key = vol.sites.iter().filter(|&&x| tree.level_of(x) == k).map(|&x| omega[x]).collect();
            let mut f = 1.0;
            for (fi, fam) in vol.families.iter().enumerate() {
                if tree.level_of(fam.x) + 1 != k {
                    continue;
                }
                key.push(p.family_lines[fi]);
                let mut digits = vec![omega[fam.x]];
                digits.extend(fam.children.iter().map(|&y| omega[y]));
                let idx = mixed_index(&fam.radix, &digits);
                let v = basis.families[fi][idx].vectors.column(p.family_lines[fi]);
                f *= quad(v, &fam.densities[idx]);
            }
            keys.push(key);
            fac.push(f);
        }
        for (k, &y) in vol.boundary.iter().enumerate() {
            let jb = &basis.boundary[k][omega[y]];
            let cl = jb.clusters[p.boundary_lines[k]].clone();
            let cols = jb.vectors.columns_range(cl);
            let w = (cols.adjoint() * &vol.boundary_factors[k][omega[y]] * cols).trace().re;
            keys[n].push(p.boundary_lines[k]);
            fac[n] *= w;
        }
        levels.push(keys);
        factors.push(fac);
    }
    Ok(MarkovMeasure { levels, direct, level_factors: Some(factors) })
}

impl MarkovMeasure {
    /// A measure given only by its level keys and weights.
    pub fn from_points(levels: Vec<Vec<Key>>, weights: Vec<f64>) -> Result<Self> {
        if levels.len() != weights.len() || levels.is_empty() {
            return Err(Error::Malformed("one weight per point is required".into()));
        }
        let depth = levels[0].len();
        if levels.iter().any(|l| l.len() != depth) {
            return Err(Error::Malformed("points have different numbers of levels".into()));
        }
        if let Some(&w) = weights.iter().find(|&&w| w < -CONDITIONING_FLOOR) {
            return Err(Error::NegativeMass(w));
        }
        Ok(MarkovMeasure { levels, direct: weights, level_factors: None })
    }

    pub fn len(&self) -> usize {
        self.direct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direct.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.levels.first().map_or(0, |l| l.len())
    }

    pub fn factorized(&self) -> Option<Vec<f64>> {
        self.level_factors.as_ref().map(|fs| fs.iter().map(|f| f.iter().product()).collect())
    }

    /// `μ` of the set of points selected by `pred`.
    pub fn prob(&self, pred: impl Fn(&[Key]) -> bool) -> f64 {
        self.levels.iter().zip(&self.direct).filter(|(l, _)| pred(l)).map(|(_, w)| w).sum()
    }

    /// Every factor and direct mass non-negative, masses summing to one and
    /// the factorized masses equal to `Tr(T Q_p)`.
    pub fn check_factorization(&self, tol: f64) -> CheckReport {
        let mut report = CheckReport::new("measure_factorization", tol);
        let total: f64 = self.direct.iter().sum();
        report.record("normalization", (total - 1.0).abs());
        let neg = self.direct.iter().fold(0.0f64, |m, &w| m.max(-w));
        report.record("non-negative", neg);
        if let Some(fac) = self.factorized() {
            let dev = fac.iter().zip(&self.direct).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            report.record("factorized vs Tr(T Q)", dev);
        }
        report
    }

    /// `μ(L_k | L_0 … L_{k−1}) = μ(L_k | L_{k−1})` for every past of
    /// positive weight, and, when the level factors are known, both equal to
    /// the factor the point assigns to level `k`.
    pub fn check_markov_property(&self, tol: f64) -> CheckReport {
        let mut report = CheckReport::new("markov_property", tol);
        for k in 1..self.depth() {
            let mut past: BTreeMap<&[Key], f64> = BTreeMap::new();
            let mut past_next: BTreeMap<&[Key], f64> = BTreeMap::new();
            let mut prev: BTreeMap<&Key, f64> = BTreeMap::new();
            let mut prev_next: BTreeMap<(&Key, &Key), f64> = BTreeMap::new();
            for (l, &w) in self.levels.iter().zip(&self.direct) {
                *past.entry(&l[..k]).or_default() += w;
                *past_next.entry(&l[..=k]).or_default() += w;
                *prev.entry(&l[k - 1]).or_default() += w;
                *prev_next.entry((&l[k - 1], &l[k])).or_default() += w;
            }
            let mut markov: f64 = 0.0;
            let mut factor: f64 = 0.0;
            for (i, l) in self.levels.iter().enumerate() {
                let p_past = past[&l[..k]];
                if p_past <= CONDITIONING_FLOOR {
                    continue;
                }
                let full = past_next[&l[..=k]] / p_past;
                let short = prev_next[&(&l[k - 1], &l[k])] / prev[&l[k - 1]];
                markov = markov.max((full - short).abs());
                if let Some(fs) = &self.level_factors {
                    factor = factor.max((full - fs[i][k]).abs());
                }
            }
            report.record(format!("level {k}"), markov);
            if self.level_factors.is_some() {
                report.record(format!("transition level {k}"), factor);
            }
        }
        if self.depth() <= 1 {
            report.record("single level", 0.0);
        }
        report
    }
}
