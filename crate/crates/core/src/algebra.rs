//! Commutative unital finite-dimensional C*-algebras.
//!
//! The working model is C(X) for a finite labeled spectrum X: an element is
//! one complex value per point, multiplication is pointwise and the C*-norm
//! is the max modulus.  Algebras may also arrive *presented* as a family of
//! commuting normal matrices; [`joint_diagonalize`] extracts their joint
//! spectrum and realizes the Gel'fand transform numerically.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::linalg::{self, CMatrix};
use crate::Result;

#[derive(Debug, PartialEq, Eq)]
struct AlgebraInner {
    labels: Vec<String>,
}

/// A commutative unital C*-algebra presented as functions on a finite
/// labeled spectrum.  Cloning is cheap; equality compares spectra.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Algebra(Arc<AlgebraInner>);

impl Algebra {
    /// Build the diagonal-model algebra on the given spectrum labels.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyLabels);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Algebra(Arc::new(AlgebraInner { labels })))
    }

    /// Spectrum with labels `p0, p1, …`.
    pub fn with_dim(n: usize) -> Result<Self> {
        Algebra::new((0..n).map(|i| format!("p{i}")))
    }

    pub fn dim(&self) -> usize {
        self.0.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.0.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.0.labels[i]
    }

    pub fn element(&self, values: Vec<Complex64>) -> Result<AlgebraElement> {
        if values.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", self.dim()),
                found: format!("{}", values.len()),
            });
        }
        Ok(AlgebraElement { parent: self.clone(), values })
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement { parent: self.clone(), values: vec![Complex64::ZERO; self.dim()] }
    }

    pub fn one(&self) -> AlgebraElement {
        AlgebraElement { parent: self.clone(), values: vec![Complex64::ONE; self.dim()] }
    }

    /// Coordinate idempotent e_i.
    pub fn idempotent(&self, i: usize) -> Result<AlgebraElement> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange { index: i, len: self.dim() });
        }
        let mut e = self.zero();
        e.values[i] = Complex64::ONE;
        Ok(e)
    }

    /// One character per spectrum point, in label order.
    pub fn characters(&self) -> Vec<Character> {
        (0..self.dim()).map(|point| Character { parent: self.clone(), point }).collect()
    }

    pub(crate) fn mismatch(&self, other: &Algebra) -> Error {
        Error::AlgebraMismatch {
            expected: format!("{:?}", self.labels()),
            found: format!("{:?}", other.labels()),
        }
    }
}

/// An element of a diagonal-model algebra: one complex value per point.
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    parent: Algebra,
    values: Vec<Complex64>,
}

impl AlgebraElement {
    pub fn parent(&self) -> &Algebra {
        &self.parent
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, point: usize) -> Complex64 {
        self.values[point]
    }

    fn check_parent(&self, other: &AlgebraElement) -> Result<()> {
        if self.parent != other.parent {
            return Err(Error::ParentMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(AlgebraElement { parent: self.parent.clone(), values })
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(AlgebraElement { parent: self.parent.clone(), values })
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(AlgebraElement { parent: self.parent.clone(), values })
    }

    pub fn scale(&self, s: Complex64) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            values: self.values.iter().map(|a| a * s).collect(),
        }
    }

    /// Pointwise conjugate.
    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            values: self.values.iter().map(|a| a.conj()).collect(),
        }
    }

    /// C*-norm: max modulus over the spectrum.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Positive within `tol`: every value has |Im| ≤ tol and Re ≥ −tol.
    pub fn is_positive(&self, tol: f64) -> bool {
        self.values.iter().all(|a| a.im.abs() <= tol && a.re >= -tol)
    }

    /// Distance to the unit, used by the α-normalization checks.
    pub fn distance_to_one(&self) -> f64 {
        self.values.iter().map(|a| (a - Complex64::ONE).norm()).fold(0.0, f64::max)
    }
}

/// An involutive ideal of a diagonal algebra.  Members are exactly the
/// elements vanishing on the `kept` points; the quotient algebra has
/// spectrum `kept`.
#[derive(Debug, Clone)]
pub struct Ideal {
    parent: Algebra,
    kept: Vec<usize>,
}

/// Ideal of all elements vanishing on `kept`.
pub fn ideal_from_points(parent: &Algebra, kept: impl IntoIterator<Item = usize>) -> Result<Ideal> {
    let mut kept: Vec<usize> = kept.into_iter().collect();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&p| p >= parent.dim()) {
        return Err(Error::IndexOutOfRange { index: bad, len: parent.dim() });
    }
    Ok(Ideal { parent: parent.clone(), kept })
}

impl Ideal {
    pub fn parent(&self) -> &Algebra {
        &self.parent
    }

    /// Points the members must vanish on (the quotient's spectrum).
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// Points where members may be nonzero.
    pub fn vanishing(&self) -> Vec<usize> {
        (0..self.parent.dim()).filter(|p| !self.kept.contains(p)).collect()
    }

    pub fn contains(&self, a: &AlgebraElement, tol: f64) -> Result<bool> {
        if *a.parent() != self.parent {
            return Err(Error::ParentMismatch);
        }
        Ok(self.kept.iter().all(|&p| a.value(p).norm() <= tol))
    }

    /// Proper iff the quotient is nonzero, i.e. some point is kept.
    pub fn is_proper(&self) -> bool {
        !self.kept.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.kept.len() == self.parent.dim()
    }
}

/// Quotient by a proper ideal: functions on the kept points, with the
/// restriction map as the canonical projection.
pub fn quotient_algebra(a: &Algebra, ideal: &Ideal) -> Result<(Algebra, AlgebraMap)> {
    if *ideal.parent() != *a {
        return Err(Error::ParentMismatch);
    }
    if !ideal.is_proper() {
        return Err(Error::ImproperIdeal);
    }
    let labels: Vec<String> = ideal.kept().iter().map(|&p| a.label(p).to_string()).collect();
    let quotient = Algebra::new(labels)?;
    let projection = AlgebraMap::new(a.clone(), quotient.clone(), ideal.kept().to_vec())?;
    Ok((quotient, projection))
}

/// A unital multiplicative *-preserving character of a diagonal algebra:
/// evaluation at a spectrum point.
#[derive(Debug, Clone)]
pub struct Character {
    parent: Algebra,
    point: usize,
}

impl Character {
    pub fn parent(&self) -> &Algebra {
        &self.parent
    }

    pub fn point(&self) -> usize {
        self.point
    }

    pub fn eval(&self, a: &AlgebraElement) -> Result<Complex64> {
        if *a.parent() != self.parent {
            return Err(Error::ParentMismatch);
        }
        Ok(a.value(self.point))
    }
}

/// A unital *-homomorphism between diagonal algebras in pullback form:
/// `apply(a)(q) = a(point_map(q))`.  Unital, multiplicative and
/// *-preserving by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraMap {
    source: Algebra,
    target: Algebra,
    point_map: Vec<usize>,
}

impl AlgebraMap {
    pub fn new(source: Algebra, target: Algebra, point_map: Vec<usize>) -> Result<Self> {
        if point_map.len() != target.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("point map of length {}", target.dim()),
                found: format!("{}", point_map.len()),
            });
        }
        if let Some(&bad) = point_map.iter().find(|&&p| p >= source.dim()) {
            return Err(Error::IndexOutOfRange { index: bad, len: source.dim() });
        }
        Ok(AlgebraMap { source, target, point_map })
    }

    pub fn identity(a: &Algebra) -> Self {
        AlgebraMap {
            source: a.clone(),
            target: a.clone(),
            point_map: (0..a.dim()).collect(),
        }
    }

    /// Map induced by a spectrum bijection `perm: Sp(source) → Sp(target)`
    /// (the pushforward of a permutation of points).
    pub fn from_point_bijection(source: &Algebra, target: &Algebra, perm: &[usize]) -> Result<Self> {
        if perm.len() != source.dim() || source.dim() != target.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("bijection of length {}", source.dim()),
                found: format!("{}", perm.len()),
            });
        }
        let mut point_map = vec![usize::MAX; target.dim()];
        for (p, &q) in perm.iter().enumerate() {
            if q >= target.dim() || point_map[q] != usize::MAX {
                return Err(Error::NotInvertible);
            }
            point_map[q] = p;
        }
        AlgebraMap::new(source.clone(), target.clone(), point_map)
    }

    pub fn source(&self) -> &Algebra {
        &self.source
    }

    pub fn target(&self) -> &Algebra {
        &self.target
    }

    pub fn point_map(&self) -> &[usize] {
        &self.point_map
    }

    pub fn apply(&self, a: &AlgebraElement) -> Result<AlgebraElement> {
        if *a.parent() != self.source {
            return Err(Error::ParentMismatch);
        }
        let values = self.point_map.iter().map(|&p| a.value(p)).collect();
        self.target.element(values)
    }

    /// Bijective iff the point map is a bijection.
    pub fn is_isomorphism(&self) -> bool {
        if self.source.dim() != self.target.dim() {
            return false;
        }
        let mut seen = vec![false; self.source.dim()];
        for &p in &self.point_map {
            if seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    pub fn inverse(&self) -> Result<AlgebraMap> {
        if !self.is_isomorphism() {
            return Err(Error::NotInvertible);
        }
        let mut inv = vec![0usize; self.source.dim()];
        for (q, &p) in self.point_map.iter().enumerate() {
            inv[p] = q;
        }
        AlgebraMap::new(self.target.clone(), self.source.clone(), inv)
    }

    /// Composition `other ∘ self` (first `self: A→B`, then `other: B→C`).
    pub fn then(&self, other: &AlgebraMap) -> Result<AlgebraMap> {
        if self.target != other.source {
            return Err(self.target.mismatch(&other.source));
        }
        let point_map = other.point_map.iter().map(|&q| self.point_map[q]).collect();
        AlgebraMap::new(self.source.clone(), other.target.clone(), point_map)
    }

    /// The spectrum bijection `Sp(source) → Sp(target)` induced by an
    /// isomorphism (inverse of the pullback point map).
    pub fn spectrum_bijection(&self) -> Result<Vec<usize>> {
        if !self.is_isomorphism() {
            return Err(Error::NotInvertible);
        }
        let mut bij = vec![0usize; self.source.dim()];
        for (q, &p) in self.point_map.iter().enumerate() {
            bij[p] = q;
        }
        Ok(bij)
    }
}

/// True iff the map is a *-isomorphism.  In the diagonal model the unital,
/// multiplicative and *-preserving axioms hold by representation, so only
/// bijectivity of the point map is at stake.
pub fn check_isomorphism(phi: &AlgebraMap, _tol: f64) -> bool {
    phi.is_isomorphism()
}

/// Joint spectral data for a family of commuting normal matrices: a unitary
/// basis grouping the joint eigenspaces, the joint-eigenvalue tuple of each
/// character, and the eigenspace multiplicities.  Characters are ordered
/// lexicographically by (Re, Im) of their eigenvalue tuples.
#[derive(Debug, Clone)]
pub struct GelfandData {
    generators: Vec<CMatrix>,
    characters: Vec<Vec<Complex64>>,
    basis: CMatrix,
    multiplicity: Vec<usize>,
    tol: f64,
}

impl GelfandData {
    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    /// Joint-eigenvalue tuple per character.
    pub fn character_tuples(&self) -> &[Vec<Complex64>] {
        &self.characters
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn num_characters(&self) -> usize {
        self.characters.len()
    }

    /// The diagonal algebra on the joint spectrum, labels `chi0, chi1, …`.
    pub fn algebra(&self) -> Algebra {
        Algebra::new((0..self.num_characters()).map(|k| format!("chi{k}")))
            .expect("spectrum labels are distinct")
    }

    fn block_start(&self, k: usize) -> usize {
        self.multiplicity[..k].iter().sum()
    }

    /// Basis columns spanning the k-th joint eigenspace.
    pub fn eigenspace_basis(&self, k: usize) -> CMatrix {
        let start = self.block_start(k);
        let d = self.multiplicity[k];
        let mut q = CMatrix::zeros(self.ambient_dim(), d);
        for j in 0..d {
            q.set_column(j, &self.basis.column(start + j));
        }
        q
    }

    /// Orthogonal projection onto the k-th joint eigenspace; this is the
    /// matrix realization of the k-th minimal idempotent.
    pub fn joint_projection(&self, k: usize) -> CMatrix {
        let q = self.eigenspace_basis(k);
        &q * q.adjoint()
    }

    /// Gel'fand transform of a matrix in the generated algebra: its scalar
    /// on each joint eigenspace.  Fails if the matrix has off-block mass.
    pub fn gelfand_transform(&self, element: &CMatrix) -> Result<AlgebraElement> {
        let d = self.ambient_dim();
        if element.nrows() != d || element.ncols() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d}x{d} matrix"),
                found: format!("{}x{}", element.nrows(), element.ncols()),
            });
        }
        let mut values = Vec::with_capacity(self.num_characters());
        for k in 0..self.num_characters() {
            let q = self.eigenspace_basis(k);
            let compressed = q.adjoint() * element * &q;
            values.push(compressed.trace() / Complex64::from(self.multiplicity[k] as f64));
        }
        let reconstructed = self.inverse_transform_values(&values);
        let residual = (element - reconstructed).norm();
        let scale = element.norm().max(1.0);
        if residual > 10.0 * self.tol * scale {
            return Err(Error::OutsideAlgebra { residual });
        }
        self.algebra().element(values)
    }

    fn inverse_transform_values(&self, values: &[Complex64]) -> CMatrix {
        let d = self.ambient_dim();
        let mut diag = CMatrix::zeros(d, d);
        let mut col = 0usize;
        for (k, &m) in self.multiplicity.iter().enumerate() {
            for _ in 0..m {
                diag[(col, col)] = values[k];
                col += 1;
            }
        }
        &self.basis * diag * self.basis.adjoint()
    }

    /// Matrix realization of an algebra element: Σ value · joint projection.
    pub fn inverse_transform(&self, a: &AlgebraElement) -> Result<CMatrix> {
        if *a.parent() != self.algebra() {
            return Err(Error::ParentMismatch);
        }
        Ok(self.inverse_transform_values(a.values()))
    }

    /// Max relative Frobenius error when rebuilding each generator from the
    /// basis and blockwise scalars.
    pub fn reconstruction_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, g) in self.generators.iter().enumerate() {
            let values: Vec<Complex64> = self.characters.iter().map(|t| t[j]).collect();
            let rebuilt = self.inverse_transform_values(&values);
            worst = worst.max((g - rebuilt).norm() / g.norm().max(1.0));
        }
        worst
    }

    /// Identify, for each matrix in `family`, the unique character where its
    /// transform is ≈ 1 while being ≈ 0 elsewhere.  Used to match abstract
    /// spectra against a distinguished idempotent family.
    pub fn identify_points(&self, family: &[CMatrix]) -> Result<Vec<usize>> {
        let mut mapping = Vec::with_capacity(family.len());
        for (i, m) in family.iter().enumerate() {
            let values = self.gelfand_transform(m)?;
            let mut hit = None;
            for (k, v) in values.values().iter().enumerate() {
                if (v - Complex64::ONE).norm() <= 1e-6 {
                    if hit.is_some() {
                        return Err(Error::AmbiguousSpectrum(format!(
                            "idempotent {i} indicates several characters"
                        )));
                    }
                    hit = Some(k);
                } else if v.norm() > 1e-6 {
                    return Err(Error::AmbiguousSpectrum(format!(
                        "matrix {i} is not a minimal idempotent of the joint spectrum"
                    )));
                }
            }
            mapping.push(hit.ok_or_else(|| {
                Error::AmbiguousSpectrum(format!("idempotent {i} vanishes on the whole spectrum"))
            })?);
        }
        Ok(mapping)
    }
}

fn frob(m: &CMatrix) -> f64 {
    m.norm()
}

/// Simultaneously block-diagonalize a family of commuting normal matrices.
///
/// The generators are split into Hermitian and anti-Hermitian parts, a
/// seeded random real combination is diagonalized first, and near-degenerate
/// eigenspaces are refined by recursive splitting with each Hermitian
/// component.  Joint-eigenvalue tuples closer than the tolerance are merged;
/// a merged block on which some generator fails to act as a scalar is
/// reported as an ill-conditioned separation.
pub fn joint_diagonalize(generators: &[CMatrix], tol: f64) -> Result<GelfandData> {
    if generators.is_empty() {
        return Err(Error::Invalid("at least one generator is required".into()));
    }
    let d = generators[0].nrows();
    if d == 0 {
        return Err(Error::Invalid("generators must be nonempty matrices".into()));
    }
    for (i, g) in generators.iter().enumerate() {
        if g.nrows() != d || g.ncols() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d}x{d} matrix"),
                found: format!("{}x{} (generator {i})", g.nrows(), g.ncols()),
            });
        }
    }

    let scale = generators.iter().map(frob).fold(1.0f64, f64::max);
    let eff = tol * scale;

    for (i, g) in generators.iter().enumerate() {
        let residual = frob(&(g * g.adjoint() - g.adjoint() * g));
        if residual > tol * frob(g).powi(2).max(1.0) {
            return Err(Error::NonNormalGenerator { index: i, residual });
        }
    }
    for i in 0..generators.len() {
        for j in (i + 1)..generators.len() {
            let commutator = &generators[i] * &generators[j] - &generators[j] * &generators[i];
            let residual = frob(&commutator);
            if residual > tol * (frob(&generators[i]) * frob(&generators[j])).max(1.0) {
                return Err(Error::NonCommutingGenerators { i, j, residual });
            }
        }
    }

    // Commuting Hermitian components; Fuglede gives commutation of the parts.
    let mut components: Vec<CMatrix> = Vec::with_capacity(2 * generators.len());
    let half_i = Complex64::new(0.0, -0.5);
    for g in generators {
        components.push((g + g.adjoint()).scale(0.5));
        components.push((g - g.adjoint()) * half_i);
    }

    let gap = (10.0 * eff).max(1e3 * f64::EPSILON * scale);

    let mut rng = ChaCha8Rng::seed_from_u64(0x1b87_3c55);
    let mut combo = CMatrix::zeros(d, d);
    for comp in &components {
        let weight: f64 = rng.random::<f64>() * 2.0 - 1.0;
        combo += comp.scale(weight / frob(comp).max(1.0));
    }

    let mut blocks: Vec<CMatrix> = vec![linalg::eye(d)];
    blocks = split_blocks(blocks, &combo, gap);
    for comp in &components {
        blocks = split_blocks(blocks, comp, gap);
    }

    // Joint tuples per block against the original generators.
    let mut tuples: Vec<Vec<Complex64>> = Vec::with_capacity(blocks.len());
    for q in &blocks {
        let m = q.ncols() as f64;
        let tuple = generators
            .iter()
            .map(|g| (q.adjoint() * g * q).trace() / Complex64::from(m))
            .collect();
        tuples.push(tuple);
    }

    // Merge blocks whose tuples collide within the tolerance (union-find).
    let merge_tol = eff.max(gap);
    let n_blocks = blocks.len();
    let mut parent: Vec<usize> = (0..n_blocks).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n_blocks {
        for j in (i + 1)..n_blocks {
            let dist = tuples[i]
                .iter()
                .zip(&tuples[j])
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            if dist <= merge_tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![usize::MAX; n_blocks];
    for i in 0..n_blocks {
        let root = find(&mut parent, i);
        if group_of[root] == usize::MAX {
            group_of[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of[root]].push(i);
    }

    struct CharBlock {
        basis: CMatrix,
        tuple: Vec<Complex64>,
    }

    let mut chars: Vec<CharBlock> = Vec::with_capacity(groups.len());
    for group in &groups {
        let dim: usize = group.iter().map(|&i| blocks[i].ncols()).sum();
        let mut basis = CMatrix::zeros(d, dim);
        let mut col = 0usize;
        for &i in group {
            for j in 0..blocks[i].ncols() {
                basis.set_column(col, &blocks[i].column(j));
                col += 1;
            }
        }
        let m = Complex64::from(dim as f64);
        let tuple: Vec<Complex64> = generators
            .iter()
            .map(|g| (basis.adjoint() * g * &basis).trace() / m)
            .collect();
        // Every generator must act as a scalar on the merged eigenspace.
        for (j, g) in generators.iter().enumerate() {
            let compressed = basis.adjoint() * g * &basis;
            let dev = frob(&(compressed - CMatrix::identity(dim, dim) * tuple[j]));
            if dev > (dim as f64) * 100.0 * merge_tol {
                return Err(Error::AmbiguousSpectrum(format!(
                    "joint-eigenvalue tuples within tolerance could not be merged \
                     consistently (generator {j}, block deviation {dev:.3e})"
                )));
            }
        }
        chars.push(CharBlock { basis, tuple });
    }

    // Canonical order: lexicographic by (Re, Im) per generator.
    chars.sort_by(|a, b| {
        for (x, y) in a.tuple.iter().zip(&b.tuple) {
            match x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });

    let mut basis = CMatrix::zeros(d, d);
    let mut multiplicity = Vec::with_capacity(chars.len());
    let mut characters = Vec::with_capacity(chars.len());
    let mut col = 0usize;
    for cb in &chars {
        for j in 0..cb.basis.ncols() {
            basis.set_column(col, &cb.basis.column(j));
            col += 1;
        }
        multiplicity.push(cb.basis.ncols());
        characters.push(cb.tuple.clone());
    }

    Ok(GelfandData { generators: generators.to_vec(), characters, basis, multiplicity, tol })
}

/// Split each block by the eigenvalue clusters of a Hermitian matrix
/// compressed to it.  Eigenvalues within `gap` of their neighbor stay in
/// the same cluster.
fn split_blocks(blocks: Vec<CMatrix>, hermitian: &CMatrix, gap: f64) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(blocks.len());
    for q in blocks {
        let dim = q.ncols();
        if dim <= 1 {
            out.push(q);
            continue;
        }
        let compressed = linalg::hermitize(&(q.adjoint() * hermitian * &q));
        let (vals, vecs) = linalg::eigh(&compressed);
        let rotated = &q * vecs;
        let mut start = 0usize;
        for i in 0..dim {
            let boundary = i + 1 == dim || (vals[i + 1] - vals[i]) > gap;
            if boundary {
                let width = i + 1 - start;
                let mut sub = CMatrix::zeros(q.nrows(), width);
                for j in 0..width {
                    sub.set_column(j, &rotated.column(start + j));
                }
                out.push(sub);
                start = i + 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cre, eye, gaussian_matrix, random_unitary};
    use crate::DEFAULT_TOL;

    fn diag(values: &[Complex64]) -> CMatrix {
        let n = values.len();
        CMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { Complex64::ZERO })
    }

    #[test]
    fn make_algebra_one_point() {
        let a = Algebra::new(["p"]).unwrap();
        assert_eq!(a.dim(), 1);
    }

    #[test]
    fn make_algebra_three_characters() {
        let a = Algebra::new(["a", "b", "c"]).unwrap();
        let chars = a.characters();
        assert_eq!(chars.len(), 3);
        for (k, chi) in chars.iter().enumerate() {
            for j in 0..3 {
                let e = a.idempotent(j).unwrap();
                let expected = if j == k { Complex64::ONE } else { Complex64::ZERO };
                assert_eq!(chi.eval(&e).unwrap(), expected);
            }
        }
    }

    #[test]
    fn make_algebra_rejects_duplicates() {
        assert!(matches!(Algebra::new(["a", "a"]), Err(Error::DuplicateLabel(_))));
        assert!(matches!(Algebra::new(Vec::<String>::new()), Err(Error::EmptyLabels)));
    }

    #[test]
    fn element_arithmetic() {
        let a = Algebra::new(["x", "y"]).unwrap();
        let u = a.element(vec![cre(1.0), Complex64::new(0.0, 1.0)]).unwrap();
        let v = a.element(vec![cre(1.0), Complex64::new(0.0, -1.0)]).unwrap();
        let prod = u.mul(&v).unwrap();
        assert_eq!(prod.values(), &[Complex64::ONE, Complex64::ONE]);

        let w = a.element(vec![cre(3.0), Complex64::new(0.0, -4.0)]).unwrap();
        assert_eq!(w.norm(), 4.0);

        let neg = a.element(vec![cre(2.0), cre(-1.0)]).unwrap();
        assert!(!neg.is_positive(DEFAULT_TOL));
        assert!(a.one().is_positive(DEFAULT_TOL));

        let b = Algebra::new(["z"]).unwrap();
        assert!(matches!(u.mul(&b.one()), Err(Error::ParentMismatch)));
    }

    #[test]
    fn ideal_membership_brute_force() {
        let a = Algebra::new(["a", "b", "c"]).unwrap();

        let zero_ideal = ideal_from_points(&a, 0..3).unwrap();
        assert!(zero_ideal.is_zero());

        let improper = ideal_from_points(&a, []).unwrap();
        assert!(!improper.is_proper());

        // kept = {0,2}: the ideal is the span of the coordinate-1 idempotent.
        let ideal = ideal_from_points(&a, [0, 2]).unwrap();
        for j in 0..3 {
            let e = a.idempotent(j).unwrap();
            let member = ideal.contains(&e, 1e-12).unwrap();
            assert_eq!(member, j == 1, "idempotent {j}");
        }
        assert!(matches!(
            ideal_from_points(&a, [7]),
            Err(Error::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn quotient_by_zero_ideal_is_identity() {
        let a = Algebra::new(["a", "b", "c"]).unwrap();
        let zero = ideal_from_points(&a, 0..3).unwrap();
        let (q, proj) = quotient_algebra(&a, &zero).unwrap();
        assert_eq!(q, a);
        assert_eq!(proj.point_map(), &[0, 1, 2]);
    }

    #[test]
    fn quotient_drops_vanishing_coordinate() {
        let a = Algebra::new(["a", "b", "c"]).unwrap();
        let ideal = ideal_from_points(&a, [0, 2]).unwrap();
        let (q, proj) = quotient_algebra(&a, &ideal).unwrap();
        assert_eq!(q.dim(), 2);
        assert_eq!(q.labels(), &["a".to_string(), "c".to_string()]);

        // Unital *-homomorphism on the basis.
        let one = proj.apply(&a.one()).unwrap();
        assert_eq!(one.values(), q.one().values());
        for j in 0..3 {
            let e = a.idempotent(j).unwrap();
            let pe = proj.apply(&e).unwrap();
            let pe2 = pe.mul(&pe).unwrap();
            assert_eq!(pe.values(), pe2.values());
            let star = proj.apply(&e.adjoint()).unwrap();
            assert_eq!(star.values(), pe.adjoint().values());
        }

        // Kernel equals the ideal, both directions, over the basis.
        for j in 0..3 {
            let e = a.idempotent(j).unwrap();
            let in_kernel = proj.apply(&e).unwrap().norm() <= 1e-12;
            assert_eq!(in_kernel, ideal.contains(&e, 1e-12).unwrap());
        }

        let improper = ideal_from_points(&a, []).unwrap();
        assert!(matches!(quotient_algebra(&a, &improper), Err(Error::ImproperIdeal)));
    }

    #[test]
    fn quotient_projection_multiplicative_on_random_pairs() {
        use rand::SeedableRng;
        let a = Algebra::new(["a", "b", "c", "d"]).unwrap();
        let ideal = ideal_from_points(&a, [1, 3]).unwrap();
        let (_, proj) = quotient_algebra(&a, &ideal).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let x = a.element((0..4).map(|_| linalg::gaussian_c64(&mut rng)).collect()).unwrap();
            let y = a.element((0..4).map(|_| linalg::gaussian_c64(&mut rng)).collect()).unwrap();
            let lhs = proj.apply(&x.mul(&y).unwrap()).unwrap();
            let rhs = proj.apply(&x).unwrap().mul(&proj.apply(&y).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn check_isomorphism_examples() {
        let a = Algebra::new(["a", "b"]).unwrap();
        assert!(check_isomorphism(&AlgebraMap::identity(&a), DEFAULT_TOL));
        let constant = AlgebraMap::new(a.clone(), a.clone(), vec![0, 0]).unwrap();
        assert!(!check_isomorphism(&constant, DEFAULT_TOL));
    }

    #[test]
    fn pushforward_of_permutation_is_isomorphism() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = Algebra::with_dim(6).unwrap();
        let b = Algebra::new((0..6).map(|i| format!("q{i}"))).unwrap();
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..6).collect();
            perm.shuffle(&mut rng);
            let phi = AlgebraMap::from_point_bijection(&a, &b, &perm).unwrap();
            assert!(check_isomorphism(&phi, DEFAULT_TOL));
            assert_eq!(phi.spectrum_bijection().unwrap(), perm);
            let inv = phi.inverse().unwrap();
            let round = phi.then(&inv).unwrap();
            assert_eq!(round, AlgebraMap::identity(&a));
        }
    }

    #[test]
    fn joint_diagonalize_identity() {
        let g = joint_diagonalize(&[eye(4)], DEFAULT_TOL).unwrap();
        assert_eq!(g.num_characters(), 1);
        assert_eq!(g.multiplicity(), &[4]);
    }

    #[test]
    fn joint_diagonalize_already_diagonal() {
        let m = diag(&[cre(1.0), cre(2.0), cre(3.0)]);
        let g = joint_diagonalize(&[m], DEFAULT_TOL).unwrap();
        assert_eq!(g.num_characters(), 3);
        let tuples: Vec<f64> = g.character_tuples().iter().map(|t| t[0].re).collect();
        assert!((tuples[0] - 1.0).abs() < 1e-12);
        assert!((tuples[1] - 2.0).abs() < 1e-12);
        assert!((tuples[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn joint_diagonalize_recovers_constructed_pair() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let u = random_unitary(&mut rng, 3);
        let d1 = diag(&[cre(1.0), cre(1.0), cre(2.0)]);
        let d2 = diag(&[cre(5.0), cre(6.0), cre(6.0)]);
        let g1 = &u * d1 * u.adjoint();
        let g2 = &u * d2 * u.adjoint();
        let g = joint_diagonalize(&[g1, g2], DEFAULT_TOL).unwrap();
        assert_eq!(g.num_characters(), 3);
        let tuples: Vec<(f64, f64)> =
            g.character_tuples().iter().map(|t| (t[0].re, t[1].re)).collect();
        let expected = [(1.0, 5.0), (1.0, 6.0), (2.0, 6.0)];
        for (got, want) in tuples.iter().zip(expected.iter()) {
            assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9);
        }
        assert!(g.reconstruction_residual() < 10.0 * DEFAULT_TOL);
    }

    #[test]
    fn joint_diagonalize_is_deterministic() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let u = random_unitary(&mut rng, 5);
        let d1 = diag(&[cre(1.0), cre(1.0), cre(2.0), cre(3.0), cre(3.0)]);
        let d2 = diag(&[cre(0.0), cre(1.0), cre(1.0), cre(4.0), cre(5.0)]);
        let g1 = &u * d1 * u.adjoint();
        let g2 = &u * d2 * u.adjoint();
        let a = joint_diagonalize(&[g1.clone(), g2.clone()], DEFAULT_TOL).unwrap();
        let b = joint_diagonalize(&[g1, g2], DEFAULT_TOL).unwrap();
        assert_eq!(a.character_tuples(), b.character_tuples());
        assert_eq!(a.basis(), b.basis());
    }

    #[test]
    fn joint_diagonalize_rejects_bad_input() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = gaussian_matrix(&mut rng, 3, 3);
        assert!(matches!(
            joint_diagonalize(&[g], DEFAULT_TOL),
            Err(Error::NonNormalGenerator { .. })
        ));

        let h1 = diag(&[cre(1.0), cre(2.0), cre(3.0)]);
        let mut h2 = CMatrix::zeros(3, 3);
        h2[(0, 1)] = cre(1.0);
        h2[(1, 0)] = cre(1.0);
        assert!(matches!(
            joint_diagonalize(&[h1, h2], DEFAULT_TOL),
            Err(Error::NonCommutingGenerators { .. })
        ));
    }

    #[test]
    fn gelfand_transform_examples() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let u = random_unitary(&mut rng, 4);
        let d1 = diag(&[cre(1.0), cre(2.0), cre(2.0), cre(4.0)]);
        let g1 = &u * &d1 * u.adjoint();
        let g = joint_diagonalize(std::slice::from_ref(&g1), DEFAULT_TOL).unwrap();

        let one = g.gelfand_transform(&eye(4)).unwrap();
        assert!(one.sub(&g.algebra().one()).unwrap().norm() < 1e-12);

        let gen_hat = g.gelfand_transform(&g1).unwrap();
        let expected: Vec<Complex64> = g.character_tuples().iter().map(|t| t[0]).collect();
        let expected = g.algebra().element(expected).unwrap();
        assert!(gen_hat.sub(&expected).unwrap().norm() < 1e-9);

        // Multiplicativity: transform of the square is the pointwise square.
        let sq = g.gelfand_transform(&(&g1 * &g1)).unwrap();
        assert!(sq.sub(&gen_hat.mul(&gen_hat).unwrap()).unwrap().norm() < 1e-8);

        // A matrix outside the algebra is rejected.
        let outside = gaussian_matrix(&mut rng, 4, 4);
        assert!(matches!(
            g.gelfand_transform(&outside),
            Err(Error::OutsideAlgebra { .. })
        ));
    }

    #[test]
    fn characters_of_presented_algebra_match_single_matrix_oracle() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let u = random_unitary(&mut rng, 5);
        let d1 = diag(&[cre(1.0), cre(1.0), cre(2.0), cre(5.0), cre(5.0)]);
        let d2 = diag(&[cre(3.0), cre(4.0), cre(4.0), cre(4.0), cre(7.0)]);
        let g1 = &u * &d1 * u.adjoint();
        let g2 = &u * &d2 * u.adjoint();
        let g = joint_diagonalize(&[g1.clone(), g2.clone()], DEFAULT_TOL).unwrap();

        // Independent oracle: eigendecompose one random real combination of
        // the (Hermitian) generators and compare eigenvalue multisets with
        // the combination evaluated on the recovered characters.
        let (c1, c2) = (0.618, -1.414);
        let combo = g1.scale(c1) + g2.scale(c2);
        let (mut oracle_vals, _) = linalg::eigh(&combo);
        let mut recovered: Vec<f64> = Vec::new();
        for (k, tuple) in g.character_tuples().iter().enumerate() {
            let v = c1 * tuple[0].re + c2 * tuple[1].re;
            for _ in 0..g.multiplicity()[k] {
                recovered.push(v);
            }
        }
        recovered.sort_by(f64::total_cmp);
        oracle_vals.sort_by(f64::total_cmp);
        for (a, b) in recovered.iter().zip(oracle_vals.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn basis_is_unitary_and_block_scalars_match() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let u = random_unitary(&mut rng, 6);
        let d1 = diag(&[cre(1.0), cre(1.0), cre(1.0), cre(2.0), cre(2.0), cre(9.0)]);
        let g1 = &u * &d1 * u.adjoint();
        let g = joint_diagonalize(&[g1], DEFAULT_TOL).unwrap();
        let b = g.basis();
        assert!((b.adjoint() * b - eye(6)).norm() < 1e-12);
        assert_eq!(g.multiplicity(), &[3, 2, 1]);
    }
}
