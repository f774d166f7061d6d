//! One-sided Hilbert C*-modules over a diagonal algebra, in fibered form:
//! one finite-dimensional Hilbert space per spectrum point, each carrying a
//! positive-definite Hermitian metric.
//!
//! Over a diagonal base algebra every module-linear operator acts blockwise
//! per point, so operators are stored as one square matrix per fiber and
//! adjointability is a structural fact rather than a side condition.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::algebra::{Algebra, AlgebraElement, AlgebraMap, Ideal};
use crate::error::Error;
use crate::linalg::{self, CMatrix, CVector};
use crate::Result;

#[derive(Debug, PartialEq)]
struct ModuleInner {
    base: Algebra,
    dims: Vec<usize>,
    metrics: Vec<CMatrix>,
}

/// A right Hilbert C*-module over a diagonal algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedModule(Arc<ModuleInner>);

impl FiberedModule {
    /// Validated module; `metrics = None` means identity metric per fiber.
    pub fn new(
        base: Algebra,
        dims: Vec<usize>,
        metrics: Option<Vec<CMatrix>>,
        tol: f64,
    ) -> Result<Self> {
        if dims.len() != base.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} fiber dimensions", base.dim()),
                found: format!("{}", dims.len()),
            });
        }
        let metrics = match metrics {
            None => dims.iter().map(|&d| linalg::eye(d)).collect(),
            Some(metrics) => {
                if metrics.len() != dims.len() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{} metrics", dims.len()),
                        found: format!("{}", metrics.len()),
                    });
                }
                for (p, (g, &d)) in metrics.iter().zip(&dims).enumerate() {
                    validate_metric(g, d, tol, &format!("point {p}"))?;
                }
                metrics
            }
        };
        Ok(FiberedModule(Arc::new(ModuleInner { base, dims, metrics })))
    }

    /// Module with identity metrics.
    pub fn standard(base: Algebra, dims: Vec<usize>) -> Result<Self> {
        FiberedModule::new(base, dims, None, crate::DEFAULT_TOL)
    }

    /// The base algebra viewed as a module over itself.
    pub fn algebra_as_module(base: &Algebra) -> Self {
        FiberedModule::standard(base.clone(), vec![1; base.dim()]).expect("valid dims")
    }

    pub fn base(&self) -> &Algebra {
        &self.0.base
    }

    pub fn fiber_dims(&self) -> &[usize] {
        &self.0.dims
    }

    pub fn fiber_dim(&self, p: usize) -> usize {
        self.0.dims[p]
    }

    pub fn metric(&self, p: usize) -> &CMatrix {
        &self.0.metrics[p]
    }

    pub fn zero(&self) -> ModuleElement {
        ModuleElement {
            parent: self.clone(),
            vecs: self.0.dims.iter().map(|&d| CVector::zeros(d)).collect(),
        }
    }

    pub fn element(&self, vecs: Vec<CVector>) -> Result<ModuleElement> {
        if vecs.len() != self.0.dims.len()
            || vecs.iter().zip(&self.0.dims).any(|(v, &d)| v.len() != d)
        {
            return Err(Error::ShapeMismatch {
                expected: format!("fiber dims {:?}", self.0.dims),
                found: format!("{:?}", vecs.iter().map(|v| v.len()).collect::<Vec<_>>()),
            });
        }
        Ok(ModuleElement { parent: self.clone(), vecs })
    }

    /// Standard basis vector `k` of the fiber over `p`, zero elsewhere.
    pub fn basis_element(&self, p: usize, k: usize) -> Result<ModuleElement> {
        if p >= self.0.dims.len() {
            return Err(Error::IndexOutOfRange { index: p, len: self.0.dims.len() });
        }
        if k >= self.0.dims[p] {
            return Err(Error::IndexOutOfRange { index: k, len: self.0.dims[p] });
        }
        let mut x = self.zero();
        x.vecs[p][k] = Complex64::ONE;
        Ok(x)
    }

    /// First basis direction of the fiber over `p`, scaled so its metric
    /// pairing with itself is exactly 1.
    pub fn metric_unit_vector(&self, p: usize) -> Result<ModuleElement> {
        let mut x = self.basis_element(p, 0)?;
        let g = self.metric(p)[(0, 0)].re;
        x.vecs[p][0] = Complex64::from(1.0 / g.sqrt());
        Ok(x)
    }

    pub fn random_element<R: Rng>(&self, rng: &mut R) -> ModuleElement {
        ModuleElement {
            parent: self.clone(),
            vecs: self.0.dims.iter().map(|&d| linalg::gaussian_vector(rng, d)).collect(),
        }
    }

    /// Identity operator.
    pub fn identity_operator(&self) -> ModuleOperator {
        ModuleOperator {
            parent: self.clone(),
            blocks: self.0.dims.iter().map(|&d| linalg::eye(d)).collect(),
        }
    }

    pub fn operator(&self, blocks: Vec<CMatrix>) -> Result<ModuleOperator> {
        if blocks.len() != self.0.dims.len()
            || blocks.iter().zip(&self.0.dims).any(|(b, &d)| b.nrows() != d || b.ncols() != d)
        {
            return Err(Error::ShapeMismatch {
                expected: format!("square blocks of dims {:?}", self.0.dims),
                found: "mismatched operator blocks".into(),
            });
        }
        Ok(ModuleOperator { parent: self.clone(), blocks })
    }

    pub fn random_operator<R: Rng>(&self, rng: &mut R) -> ModuleOperator {
        ModuleOperator {
            parent: self.clone(),
            blocks: self.0.dims.iter().map(|&d| linalg::gaussian_matrix(rng, d, d)).collect(),
        }
    }
}

pub(crate) fn validate_metric(g: &CMatrix, dim: usize, tol: f64, context: &str) -> Result<()> {
    if g.nrows() != dim || g.ncols() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("{dim}x{dim} metric at {context}"),
            found: format!("{}x{}", g.nrows(), g.ncols()),
        });
    }
    if dim == 0 {
        return Ok(());
    }
    let scale = g.norm().max(1.0);
    let herm = linalg::hermitian_residual(g);
    if herm > tol * scale {
        return Err(Error::MetricNotHermitian { context: context.into(), residual: herm });
    }
    let (vals, _) = linalg::eigh(g);
    let smallest = vals.first().copied().unwrap_or(0.0);
    if smallest <= tol * scale {
        return Err(Error::MetricNotPositive { context: context.into(), eigenvalue: smallest });
    }
    Ok(())
}

/// An element of a fibered module: one complex vector per spectrum point.
#[derive(Debug, Clone)]
pub struct ModuleElement {
    parent: FiberedModule,
    vecs: Vec<CVector>,
}

impl ModuleElement {
    pub fn parent(&self) -> &FiberedModule {
        &self.parent
    }

    pub fn fiber(&self, p: usize) -> &CVector {
        &self.vecs[p]
    }

    pub fn fiber_mut(&mut self, p: usize) -> &mut CVector {
        &mut self.vecs[p]
    }

    fn check_parent(&self, other: &ModuleElement) -> Result<()> {
        if self.parent != other.parent {
            return Err(Error::ParentMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &ModuleElement) -> Result<ModuleElement> {
        self.check_parent(other)?;
        let vecs = self.vecs.iter().zip(&other.vecs).map(|(a, b)| a + b).collect();
        Ok(ModuleElement { parent: self.parent.clone(), vecs })
    }

    pub fn sub(&self, other: &ModuleElement) -> Result<ModuleElement> {
        self.check_parent(other)?;
        let vecs = self.vecs.iter().zip(&other.vecs).map(|(a, b)| a - b).collect();
        Ok(ModuleElement { parent: self.parent.clone(), vecs })
    }

    pub fn scale(&self, s: Complex64) -> ModuleElement {
        ModuleElement {
            parent: self.parent.clone(),
            vecs: self.vecs.iter().map(|v| v.map(|x| x * s)).collect(),
        }
    }

    /// Right action `x · b` of the base algebra.
    pub fn act(&self, b: &AlgebraElement) -> Result<ModuleElement> {
        if b.parent() != self.parent.base() {
            return Err(Error::ParentMismatch);
        }
        let vecs = self
            .vecs
            .iter()
            .enumerate()
            .map(|(p, v)| v.map(|x| x * b.value(p)))
            .collect();
        Ok(ModuleElement { parent: self.parent.clone(), vecs })
    }
}

/// Algebra-valued inner product: conjugate-linear in the first slot,
/// base-linear in the second; value at p is `x_p* · G_p · y_p`.
pub fn inner_product(x: &ModuleElement, y: &ModuleElement) -> Result<AlgebraElement> {
    x.check_parent(y)?;
    let m = x.parent();
    let values = (0..m.base().dim())
        .map(|p| (x.fiber(p).adjoint() * m.metric(p) * y.fiber(p))[(0, 0)])
        .collect();
    m.base().element(values)
}

/// Module norm `√‖⟨x,x⟩‖`.
pub fn module_norm(x: &ModuleElement) -> f64 {
    let m = x.parent();
    let mut worst: f64 = 0.0;
    for p in 0..m.base().dim() {
        let v = (x.fiber(p).adjoint() * m.metric(p) * x.fiber(p))[(0, 0)].re;
        worst = worst.max(v);
    }
    worst.max(0.0).sqrt()
}

/// Outcome of the fullness test: the span of inner products is the whole
/// base algebra iff every fiber is nonzero.  When full, the witness is a
/// finite family `(w_j, z_j)` with `Σ ⟨w_j, z_j⟩ = 1`.
#[derive(Debug, Clone)]
pub struct FullnessWitness {
    pub full: bool,
    pub pairs: Vec<(ModuleElement, ModuleElement)>,
    pub empty_points: Vec<usize>,
}

pub fn is_full(m: &FiberedModule) -> FullnessWitness {
    let empty_points: Vec<usize> =
        (0..m.base().dim()).filter(|&p| m.fiber_dim(p) == 0).collect();
    if !empty_points.is_empty() {
        return FullnessWitness { full: false, pairs: Vec::new(), empty_points };
    }
    let pairs = (0..m.base().dim())
        .map(|p| {
            let v = m.metric_unit_vector(p).expect("nonempty fiber");
            (v.clone(), v)
        })
        .collect();
    FullnessWitness { full: true, pairs, empty_points }
}

/// A module map in blockwise form; every such operator is adjointable with
/// metric adjoint `G_p⁻¹ · T_p* · G_p` per fiber.
#[derive(Debug, Clone)]
pub struct ModuleOperator {
    parent: FiberedModule,
    blocks: Vec<CMatrix>,
}

impl ModuleOperator {
    pub fn parent(&self) -> &FiberedModule {
        &self.parent
    }

    pub fn block(&self, p: usize) -> &CMatrix {
        &self.blocks[p]
    }

    pub fn apply(&self, x: &ModuleElement) -> Result<ModuleElement> {
        if self.parent != *x.parent() {
            return Err(Error::ParentMismatch);
        }
        let vecs = self.blocks.iter().zip(&x.vecs).map(|(b, v)| b * v).collect();
        Ok(ModuleElement { parent: self.parent.clone(), vecs })
    }

    pub fn add(&self, other: &ModuleOperator) -> Result<ModuleOperator> {
        if self.parent != other.parent {
            return Err(Error::ParentMismatch);
        }
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Ok(ModuleOperator { parent: self.parent.clone(), blocks })
    }

    pub fn sub(&self, other: &ModuleOperator) -> Result<ModuleOperator> {
        if self.parent != other.parent {
            return Err(Error::ParentMismatch);
        }
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect();
        Ok(ModuleOperator { parent: self.parent.clone(), blocks })
    }

    pub fn compose(&self, other: &ModuleOperator) -> Result<ModuleOperator> {
        if self.parent != other.parent {
            return Err(Error::ParentMismatch);
        }
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect();
        Ok(ModuleOperator { parent: self.parent.clone(), blocks })
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }
}

/// Metric adjoint of a blockwise operator.
pub fn endomorphism_adjoint(t: &ModuleOperator) -> ModuleOperator {
    let m = t.parent();
    let blocks = (0..m.base().dim())
        .map(|p| {
            let d = m.fiber_dim(p);
            if d == 0 {
                return CMatrix::zeros(0, 0);
            }
            let g = m.metric(p);
            let ginv = g.clone().try_inverse().expect("metric is positive definite");
            ginv * t.block(p).adjoint() * g
        })
        .collect();
    ModuleOperator { parent: m.clone(), blocks }
}

/// Rank-one style operator `θ_{x,y}: z ↦ x·⟨y,z⟩`, blockwise
/// `x_p · (y_p* · G_p)`; its adjoint is `θ_{y,x}`.
pub fn theta(x: &ModuleElement, y: &ModuleElement) -> Result<ModuleOperator> {
    x.check_parent(y)?;
    let m = x.parent();
    let blocks = (0..m.base().dim())
        .map(|p| x.fiber(p) * (y.fiber(p).adjoint() * m.metric(p)))
        .collect();
    Ok(ModuleOperator { parent: m.clone(), blocks })
}

/// Dimension of the span of all θ operators; at finite dimension this is
/// all of End(M), i.e. Σ_p dim(p)².
pub fn finite_rank_span_dim(m: &FiberedModule) -> usize {
    m.fiber_dims().iter().map(|&d| d * d).sum()
}

/// Quotient module over the quotient algebra: fibers restricted to the
/// kept points, metrics inherited.  Fullness is preserved.
pub fn quotient_module(m: &FiberedModule, ideal: &Ideal) -> Result<FiberedModule> {
    if ideal.parent() != m.base() {
        return Err(Error::ParentMismatch);
    }
    if !ideal.is_proper() {
        return Err(Error::ImproperIdeal);
    }
    let (quotient, _) = crate::algebra::quotient_algebra(m.base(), ideal)?;
    let dims = ideal.kept().iter().map(|&p| m.fiber_dim(p)).collect();
    let metrics = ideal.kept().iter().map(|&p| m.metric(p).clone()).collect();
    FiberedModule::new(quotient, dims, Some(metrics), crate::DEFAULT_TOL)
}

/// Image of an element in the quotient module.
pub fn quotient_element(x: &ModuleElement, ideal: &Ideal, target: &FiberedModule) -> Result<ModuleElement> {
    let vecs = ideal.kept().iter().map(|&p| x.fiber(p).clone()).collect();
    target.element(vecs)
}

/// Right twist of a module over B by an isomorphism `alpha: A → B`: the
/// fibers are relabeled along the spectrum bijection and the inner product
/// is pulled back through `alpha⁻¹`.
pub fn twist_right(m: &FiberedModule, alpha: &AlgebraMap) -> Result<FiberedModule> {
    if alpha.target() != m.base() {
        return Err(alpha.target().mismatch(m.base()));
    }
    if !alpha.is_isomorphism() {
        return Err(Error::NotInvertible);
    }
    let bij = alpha.spectrum_bijection()?; // Sp(A) → Sp(B)
    let a = alpha.source().clone();
    let dims = (0..a.dim()).map(|p| m.fiber_dim(bij[p])).collect();
    let metrics = (0..a.dim()).map(|p| m.metric(bij[p]).clone()).collect();
    FiberedModule::new(a, dims, Some(metrics), crate::DEFAULT_TOL)
}

/// Transport of an element along [`twist_right`].
pub fn twist_element(x: &ModuleElement, alpha: &AlgebraMap, target: &FiberedModule) -> Result<ModuleElement> {
    let bij = alpha.spectrum_bijection()?;
    let vecs = (0..target.base().dim()).map(|p| x.fiber(bij[p]).clone()).collect();
    target.element(vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cre;
    use crate::DEFAULT_TOL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c2() -> Algebra {
        Algebra::new(["x", "y"]).unwrap()
    }

    fn c3() -> Algebra {
        Algebra::new(["x", "y", "z"]).unwrap()
    }

    #[test]
    fn make_module_examples() {
        let m = FiberedModule::standard(c2(), vec![1, 1]).unwrap();
        assert_eq!(m.fiber_dims(), &[1, 1]);

        let partial = FiberedModule::standard(c3(), vec![2, 0, 1]).unwrap();
        assert!(!is_full(&partial).full);

        let mut bad = linalg::eye(1);
        bad[(0, 0)] = cre(-1.0);
        let err = FiberedModule::new(c2(), vec![1, 1], Some(vec![bad, linalg::eye(1)]), DEFAULT_TOL);
        assert!(matches!(err, Err(Error::MetricNotPositive { .. })));
    }

    #[test]
    fn inner_product_of_unit_vector_is_idempotent() {
        let m = FiberedModule::standard(c3(), vec![2, 1, 1]).unwrap();
        let x = m.basis_element(1, 0).unwrap();
        let ip = inner_product(&x, &x).unwrap();
        let e1 = c3().idempotent(1).unwrap();
        assert!(ip.sub(&e1).unwrap().norm() < 1e-14);
    }

    #[test]
    fn inner_product_symmetry_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let metrics = vec![
            {
                let g = linalg::gaussian_matrix(&mut rng, 2, 2);
                &g * g.adjoint() + linalg::eye(2).scale(0.5)
            },
            linalg::eye(1),
        ];
        let m = FiberedModule::new(c2(), vec![2, 1], Some(metrics), DEFAULT_TOL).unwrap();
        for _ in 0..20 {
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let b = m.base().element(vec![
                linalg::gaussian_c64(&mut rng),
                linalg::gaussian_c64(&mut rng),
            ]).unwrap();

            let sym = inner_product(&x, &y).unwrap().adjoint();
            let rev = inner_product(&y, &x).unwrap();
            assert!(sym.sub(&rev).unwrap().norm() < 1e-12);

            let lhs = inner_product(&x, &y.act(&b).unwrap()).unwrap();
            let rhs = inner_product(&x, &y).unwrap().mul(&b).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn module_norm_examples() {
        let m = FiberedModule::standard(c2(), vec![1, 2]).unwrap();
        assert_eq!(module_norm(&m.zero()), 0.0);
        let x = m.basis_element(0, 0).unwrap();
        assert!((module_norm(&x) - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let y = m.random_element(&mut rng);
            let doubled = y.scale(cre(2.0));
            assert!((module_norm(&doubled) - 2.0 * module_norm(&y)).abs() < 1e-10);
        }
    }

    #[test]
    fn fullness_witness_sums_to_one() {
        let m = FiberedModule::standard(c3(), vec![1, 1, 1]).unwrap();
        let w = is_full(&m);
        assert!(w.full);
        assert_eq!(w.pairs.len(), 3);
        let mut sum = m.base().zero();
        for (a, b) in &w.pairs {
            sum = sum.add(&inner_product(a, b).unwrap()).unwrap();
        }
        assert!(sum.sub(&m.base().one()).unwrap().norm() < 1e-12);

        let partial = FiberedModule::standard(c2(), vec![1, 0]).unwrap();
        let w = is_full(&partial);
        assert!(!w.full);
        assert_eq!(w.empty_points, vec![1]);
    }

    #[test]
    fn theta_acts_as_advertised() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g0 = {
            let g = linalg::gaussian_matrix(&mut rng, 2, 2);
            &g * g.adjoint() + linalg::eye(2)
        };
        let m = FiberedModule::new(c2(), vec![2, 1], Some(vec![g0, linalg::eye(1)]), DEFAULT_TOL)
            .unwrap();
        for _ in 0..10 {
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let z = m.random_element(&mut rng);
            let t = theta(&x, &y).unwrap();
            let lhs = t.apply(&z).unwrap();
            let rhs = x.act(&inner_product(&y, &z).unwrap()).unwrap();
            assert!(module_norm(&lhs.sub(&rhs).unwrap()) < 1e-10);

            // adj(θ_{x,y}) = θ_{y,x}
            let adj = endomorphism_adjoint(&t);
            let tyx = theta(&y, &x).unwrap();
            let diff = adj.sub(&tyx).unwrap();
            assert!(diff.norm() < 1e-10);
        }
        let zero_theta = theta(&m.zero(), &m.random_element(&mut rng)).unwrap();
        assert!(zero_theta.norm() < 1e-14);
    }

    #[test]
    fn adjoint_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g0 = {
            let g = linalg::gaussian_matrix(&mut rng, 2, 2);
            &g * g.adjoint() + linalg::eye(2)
        };
        let m = FiberedModule::new(c2(), vec![2, 2], Some(vec![g0, linalg::eye(2)]), DEFAULT_TOL)
            .unwrap();

        let id = m.identity_operator();
        let diff = endomorphism_adjoint(&id).sub(&id).unwrap();
        assert!(diff.norm() < 1e-12);

        for _ in 0..10 {
            let t = m.random_operator(&mut rng);
            let s = endomorphism_adjoint(&t);
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let lhs = inner_product(&s.apply(&x).unwrap(), &y).unwrap();
            let rhs = inner_product(&x, &t.apply(&y).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-10);

            // Involution.
            let back = endomorphism_adjoint(&s);
            assert!(back.sub(&t).unwrap().norm() < 1e-10);

            // With identity metric the adjoint at point 1 is the conjugate transpose.
            assert!((s.block(1) - t.block(1).adjoint()).norm() < 1e-12);
        }
    }

    /// Brute-force oracle: dimension of span{θ_{e_i, e_j}} over all basis pairs.
    fn theta_span_dim_oracle(m: &FiberedModule) -> usize {
        let mut family: Vec<CMatrix> = Vec::new();
        let total: usize = m.fiber_dims().iter().map(|&d| d * d).sum::<usize>().max(1);
        for p in 0..m.base().dim() {
            for i in 0..m.fiber_dim(p) {
                for j in 0..m.fiber_dim(p) {
                    let x = m.basis_element(p, i).unwrap();
                    let y = m.basis_element(p, j).unwrap();
                    let t = theta(&x, &y).unwrap();
                    // Flatten the blocks into one matrix for rank counting.
                    let mut flat = CMatrix::zeros(total, 1);
                    let mut offset = 0;
                    for q in 0..m.base().dim() {
                        let b = t.block(q);
                        for r in 0..b.nrows() {
                            for c in 0..b.ncols() {
                                flat[(offset, 0)] = b[(r, c)];
                                offset += 1;
                            }
                        }
                    }
                    family.push(flat);
                }
            }
        }
        linalg::span_rank(&family, 1e-10)
    }

    #[test]
    fn finite_rank_span_dims() {
        let m = FiberedModule::standard(c2(), vec![1, 1]).unwrap();
        assert_eq!(finite_rank_span_dim(&m), 2);
        assert_eq!(theta_span_dim_oracle(&m), 2);

        let m = FiberedModule::standard(c2(), vec![2, 1]).unwrap();
        assert_eq!(finite_rank_span_dim(&m), 5);
        assert_eq!(theta_span_dim_oracle(&m), 5);

        let m = FiberedModule::standard(c2(), vec![0, 3]).unwrap();
        assert_eq!(finite_rank_span_dim(&m), 9);
        assert_eq!(theta_span_dim_oracle(&m), 9);
    }

    #[test]
    fn quotient_module_examples() {
        let m = FiberedModule::standard(c3(), vec![1, 1, 1]).unwrap();

        let zero_ideal = crate::algebra::ideal_from_points(m.base(), 0..3).unwrap();
        let same = quotient_module(&m, &zero_ideal).unwrap();
        assert_eq!(same.fiber_dims(), m.fiber_dims());

        let ideal = crate::algebra::ideal_from_points(m.base(), [0, 2]).unwrap();
        let q = quotient_module(&m, &ideal).unwrap();
        assert_eq!(q.fiber_dims(), &[1, 1]);
        assert_eq!(q.base().dim(), 2);
        assert!(is_full(&q).full);

        // Inner products agree under restriction.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, proj) = crate::algebra::quotient_algebra(m.base(), &ideal).unwrap();
        for _ in 0..10 {
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let qx = quotient_element(&x, &ideal, &q).unwrap();
            let qy = quotient_element(&y, &ideal, &q).unwrap();
            let lhs = inner_product(&qx, &qy).unwrap();
            let rhs = proj.apply(&inner_product(&x, &y).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn twist_right_examples() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = c3();
        let m = FiberedModule::standard(b.clone(), vec![2, 1, 3]).unwrap();

        let id = AlgebraMap::identity(&b);
        let same = twist_right(&m, &id).unwrap();
        assert_eq!(same.fiber_dims(), m.fiber_dims());

        // Twisting by alpha then beta equals twisting by the composite.
        let a1 = Algebra::new(["u", "v", "w"]).unwrap();
        let a2 = Algebra::new(["r", "s", "t"]).unwrap();
        for _ in 0..5 {
            let mut p1: Vec<usize> = (0..3).collect();
            p1.shuffle(&mut rng);
            let mut p2: Vec<usize> = (0..3).collect();
            p2.shuffle(&mut rng);
            let alpha = AlgebraMap::from_point_bijection(&a1, &b, &p1).unwrap();
            let beta = AlgebraMap::from_point_bijection(&a2, &a1, &p2).unwrap();
            let step = twist_right(&twist_right(&m, &alpha).unwrap(), &beta).unwrap();
            let composite = twist_right(&m, &beta.then(&alpha).unwrap()).unwrap();
            assert_eq!(step, composite);
        }

        // ⟨x,y⟩_A = α⁻¹(⟨x,y⟩_B) on random pairs.
        let mut perm: Vec<usize> = (0..3).collect();
        perm.shuffle(&mut rng);
        let alpha = AlgebraMap::from_point_bijection(&a1, &b, &perm).unwrap();
        let twisted = twist_right(&m, &alpha).unwrap();
        let alpha_inv = alpha.inverse().unwrap();
        for _ in 0..10 {
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let tx = twist_element(&x, &alpha, &twisted).unwrap();
            let ty = twist_element(&y, &alpha, &twisted).unwrap();
            let lhs = inner_product(&tx, &ty).unwrap();
            let rhs = alpha_inv.apply(&inner_product(&x, &y).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-12);
        }

        // Round trip returns the original module.
        let back = twist_right(&twisted, &alpha_inv).unwrap();
        assert_eq!(back, m);

        let collapse = AlgebraMap::new(a1.clone(), b.clone(), vec![0, 0, 1]).unwrap();
        assert!(matches!(twist_right(&m, &collapse), Err(Error::NotInvertible)));
    }

    #[test]
    fn cauchy_schwarz_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g0 = {
            let g = linalg::gaussian_matrix(&mut rng, 3, 3);
            &g * g.adjoint() + linalg::eye(3).scale(0.1)
        };
        let m = FiberedModule::new(c2(), vec![3, 2], Some(vec![g0, linalg::eye(2)]), DEFAULT_TOL)
            .unwrap();
        for _ in 0..50 {
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let ip = inner_product(&x, &y).unwrap().norm();
            assert!(ip <= module_norm(&x) * module_norm(&y) + 1e-9);
        }
    }

    #[test]
    fn theta_composition_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = FiberedModule::standard(c3(), vec![2, 1, 2]).unwrap();
        for _ in 0..10 {
            let x = m.random_element(&mut rng);
            let y = m.random_element(&mut rng);
            let u = m.random_element(&mut rng);
            let v = m.random_element(&mut rng);
            let lhs = theta(&x, &y).unwrap().compose(&theta(&u, &v).unwrap()).unwrap();
            let xu = x.act(&inner_product(&y, &u).unwrap()).unwrap();
            let rhs = theta(&xu, &v).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-9);
        }
    }

    #[test]
    fn morphism_transfer_across_twist() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = c3();
        let a = Algebra::new(["u", "v", "w"]).unwrap();
        let g0 = {
            let g = linalg::gaussian_matrix(&mut rng, 2, 2);
            &g * g.adjoint() + linalg::eye(2).scale(0.3)
        };
        let m = FiberedModule::new(
            b.clone(),
            vec![2, 1, 1],
            Some(vec![g0, linalg::eye(1), linalg::eye(1)]),
            DEFAULT_TOL,
        )
        .unwrap();

        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..3).collect();
            perm.shuffle(&mut rng);
            let alpha = AlgebraMap::from_point_bijection(&a, &b, &perm).unwrap();
            let twisted = twist_right(&m, &alpha).unwrap();
            let alpha_inv = alpha.inverse().unwrap();
            let bij = alpha.spectrum_bijection().unwrap();

            let t = m.random_operator(&mut rng);
            let s = endomorphism_adjoint(&t);
            // Transport the operator blockwise along the twist.
            let t2 = twisted
                .operator((0..3).map(|p| t.block(bij[p]).clone()).collect())
                .unwrap();
            let s2 = twisted
                .operator((0..3).map(|p| s.block(bij[p]).clone()).collect())
                .unwrap();

            for _ in 0..5 {
                let x = m.random_element(&mut rng);
                let y = m.random_element(&mut rng);
                // Certificate on the original module.
                let r1 = inner_product(&s.apply(&x).unwrap(), &y)
                    .unwrap()
                    .sub(&inner_product(&x, &t.apply(&y).unwrap()).unwrap())
                    .unwrap()
                    .norm();
                // The same adjoint blocks certify adjointability after the twist.
                let tx = twist_element(&x, &alpha, &twisted).unwrap();
                let ty = twist_element(&y, &alpha, &twisted).unwrap();
                let r2 = inner_product(&s2.apply(&tx).unwrap(), &ty)
                    .unwrap()
                    .sub(&inner_product(&tx, &t2.apply(&ty).unwrap()).unwrap())
                    .unwrap()
                    .norm();
                assert!(r1 < 1e-10 && r2 < 1e-10);
                // And the twisted inner products are the pullbacks.
                let pulled = alpha_inv
                    .apply(&inner_product(&s.apply(&x).unwrap(), &y).unwrap())
                    .unwrap();
                let direct = inner_product(&s2.apply(&tx).unwrap(), &ty).unwrap();
                assert!(pulled.sub(&direct).unwrap().norm() < 1e-10);
            }
        }
    }
}
