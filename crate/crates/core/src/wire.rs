//! JSON representations.
//!
//! Complex scalars are `[re, im]`; matrices are row-major nested arrays.
//! Algebras are either `{"type": "diagonal", "labels": [...]}` or
//! `{"type": "presented", "dim": D, "generators": [...], "tol": t}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{joint_diagonalize, Algebra, GelfandData};
use crate::bimodule::{FiberSpec, FiberedBimodule, PresentedBimodule};
use crate::category::CStarCategory;
use crate::error::Error;
use crate::linalg::{CMatrix, CVector};
use crate::module::{FiberedModule, ModuleElement};
use crate::spectral::ReconstructionReport;
use crate::Result;

pub type WireComplex = [f64; 2];
pub type WireMatrix = Vec<Vec<WireComplex>>;
pub type WireVector = Vec<WireComplex>;

pub fn complex_to_wire(z: Complex64) -> WireComplex {
    [z.re, z.im]
}

pub fn complex_from_wire(w: WireComplex) -> Complex64 {
    Complex64::new(w[0], w[1])
}

pub fn matrix_to_wire(m: &CMatrix) -> WireMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| complex_to_wire(m[(i, j)])).collect())
        .collect()
}

pub fn matrix_from_wire(w: &WireMatrix) -> Result<CMatrix> {
    let rows = w.len();
    let cols = w.first().map(|r| r.len()).unwrap_or(0);
    if w.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid("matrix rows have unequal lengths".into()));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| complex_from_wire(w[i][j])))
}

pub fn vector_to_wire(v: &CVector) -> WireVector {
    v.iter().map(|&z| complex_to_wire(z)).collect()
}

pub fn vector_from_wire(w: &WireVector) -> CVector {
    CVector::from_fn(w.len(), |i, _| complex_from_wire(w[i]))
}

/// Wire form of an algebra: diagonal model or presented by generators.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AlgebraWire {
    Diagonal { labels: Vec<String> },
    Presented { dim: usize, generators: Vec<WireMatrix>, tol: f64 },
}

impl AlgebraWire {
    pub fn from_algebra(a: &Algebra) -> Self {
        AlgebraWire::Diagonal { labels: a.labels().to_vec() }
    }

    /// Realize as a diagonal algebra; presented algebras are jointly
    /// diagonalized and their Gel'fand data returned alongside.
    pub fn realize(&self) -> Result<(Algebra, Option<GelfandData>)> {
        match self {
            AlgebraWire::Diagonal { labels } => Ok((Algebra::new(labels.clone())?, None)),
            AlgebraWire::Presented { dim, generators, tol } => {
                let gens: Vec<CMatrix> =
                    generators.iter().map(matrix_from_wire).collect::<Result<_>>()?;
                for g in &gens {
                    if g.nrows() != *dim || g.ncols() != *dim {
                        return Err(Error::ShapeMismatch {
                            expected: format!("{dim}x{dim} generators"),
                            found: format!("{}x{}", g.nrows(), g.ncols()),
                        });
                    }
                }
                let gelf = joint_diagonalize(&gens, *tol)?;
                Ok((gelf.algebra(), Some(gelf)))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModuleFiberWire {
    pub point: usize,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<WireMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberedModuleWire {
    pub base: AlgebraWire,
    pub fibers: Vec<ModuleFiberWire>,
}

impl FiberedModuleWire {
    pub fn from_module(m: &FiberedModule) -> Self {
        let fibers = (0..m.base().dim())
            .filter(|&p| m.fiber_dim(p) > 0)
            .map(|p| ModuleFiberWire {
                point: p,
                dim: m.fiber_dim(p),
                metric: Some(matrix_to_wire(m.metric(p))),
            })
            .collect();
        FiberedModuleWire { base: AlgebraWire::from_algebra(m.base()), fibers }
    }

    pub fn realize(&self, tol: f64) -> Result<FiberedModule> {
        let (base, _) = self.base.realize()?;
        let mut dims = vec![0usize; base.dim()];
        let mut metrics: Vec<CMatrix> = (0..base.dim()).map(|_| CMatrix::zeros(0, 0)).collect();
        for f in &self.fibers {
            if f.point >= base.dim() {
                return Err(Error::IndexOutOfRange { index: f.point, len: base.dim() });
            }
            dims[f.point] = f.dim;
            metrics[f.point] = match &f.metric {
                Some(w) => matrix_from_wire(w)?,
                None => crate::linalg::eye(f.dim),
            };
        }
        FiberedModule::new(base, dims, Some(metrics), tol)
    }
}

/// Wire form of a module element: a list with one vector per supported
/// point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleElementWire {
    pub entries: Vec<ModuleElementEntryWire>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModuleElementEntryWire {
    pub point: usize,
    pub vec: WireVector,
}

impl ModuleElementWire {
    pub fn from_element(x: &ModuleElement) -> Self {
        let m = x.parent();
        let entries = (0..m.base().dim())
            .filter(|&p| m.fiber_dim(p) > 0)
            .map(|p| ModuleElementEntryWire { point: p, vec: vector_to_wire(x.fiber(p)) })
            .collect();
        ModuleElementWire { entries }
    }

    pub fn realize(&self, m: &FiberedModule) -> Result<ModuleElement> {
        let mut x = m.zero();
        for e in &self.entries {
            if e.point >= m.base().dim() {
                return Err(Error::IndexOutOfRange { index: e.point, len: m.base().dim() });
            }
            *x.fiber_mut(e.point) = vector_from_wire(&e.vec);
        }
        // Re-validate shapes through the element constructor.
        let vecs = (0..m.base().dim()).map(|p| x.fiber(p).clone()).collect();
        m.element(vecs)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BimoduleFiberWire {
    pub a: usize,
    pub b: usize,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<WireMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberedBimoduleWire {
    pub left: AlgebraWire,
    pub right: AlgebraWire,
    pub fibers: Vec<BimoduleFiberWire>,
}

impl FiberedBimoduleWire {
    pub fn from_bimodule(m: &FiberedBimodule) -> Self {
        let mut fibers = Vec::new();
        for a in 0..m.left().dim() {
            for b in 0..m.right().dim() {
                if m.dim(a, b) > 0 {
                    fibers.push(BimoduleFiberWire {
                        a,
                        b,
                        dim: m.dim(a, b),
                        metric: Some(matrix_to_wire(m.metric(a, b))),
                    });
                }
            }
        }
        FiberedBimoduleWire {
            left: AlgebraWire::from_algebra(m.left()),
            right: AlgebraWire::from_algebra(m.right()),
            fibers,
        }
    }

    pub fn realize(&self, tol: f64) -> Result<FiberedBimodule> {
        let (left, _) = self.left.realize()?;
        let (right, _) = self.right.realize()?;
        let fibers = self
            .fibers
            .iter()
            .map(|f| {
                let metric = f.metric.as_ref().map(matrix_from_wire).transpose()?;
                Ok(FiberSpec { a: f.a, b: f.b, dim: f.dim, metric })
            })
            .collect::<Result<Vec<_>>>()?;
        FiberedBimodule::new(left, right, fibers, tol)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresentedBimoduleWire {
    pub dim: usize,
    pub left_idem: Vec<WireMatrix>,
    pub right_idem: Vec<WireMatrix>,
    pub right_gram: Vec<WireMatrix>,
    pub left_gram: Vec<WireMatrix>,
    /// Optional spectrum labels; defaults are `a0, a1, …` and `b0, b1, …`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right_labels: Option<Vec<String>>,
}

impl PresentedBimoduleWire {
    pub fn from_presented(p: &PresentedBimodule) -> Self {
        PresentedBimoduleWire {
            dim: p.ambient_dim(),
            left_idem: p.left_idem().iter().map(matrix_to_wire).collect(),
            right_idem: p.right_idem().iter().map(matrix_to_wire).collect(),
            right_gram: p.right_gram().iter().map(matrix_to_wire).collect(),
            left_gram: p.left_gram().iter().map(matrix_to_wire).collect(),
            left_labels: Some(p.left().labels().to_vec()),
            right_labels: Some(p.right().labels().to_vec()),
        }
    }

    pub fn realize(&self) -> Result<PresentedBimodule> {
        let left = match &self.left_labels {
            Some(labels) => Algebra::new(labels.clone())?,
            None => Algebra::new((0..self.left_idem.len()).map(|i| format!("a{i}")))?,
        };
        let right = match &self.right_labels {
            Some(labels) => Algebra::new(labels.clone())?,
            None => Algebra::new((0..self.right_idem.len()).map(|i| format!("b{i}")))?,
        };
        let conv = |ms: &[WireMatrix]| -> Result<Vec<CMatrix>> {
            ms.iter().map(matrix_from_wire).collect()
        };
        PresentedBimodule::new(
            left,
            right,
            conv(&self.left_idem)?,
            conv(&self.right_idem)?,
            conv(&self.left_gram)?,
            conv(&self.right_gram)?,
        )
    }
}

/// Any bimodule input: fibered or presented, distinguished by its fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BimoduleWire {
    Fibered(FiberedBimoduleWire),
    Presented(PresentedBimoduleWire),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryObjectWire {
    pub label: String,
    pub projection: WireMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryWire {
    pub ambient_dim: usize,
    pub objects: Vec<CategoryObjectWire>,
    pub tol: f64,
    /// Optional direct-sum partition of the ambient coordinates; omitted
    /// means the full matrix algebra.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summands: Option<Vec<usize>>,
}

impl CategoryWire {
    pub fn from_category(c: &CStarCategory) -> Self {
        CategoryWire {
            ambient_dim: c.ambient_dim(),
            objects: (0..c.num_objects())
                .map(|a| CategoryObjectWire {
                    label: c.label(a).to_string(),
                    projection: matrix_to_wire(c.projection(a)),
                })
                .collect(),
            tol: c.tol(),
            summands: if c.summands().iter().all(|&s| s == 0) {
                None
            } else {
                Some(c.summands().to_vec())
            },
        }
    }

    pub fn realize(&self) -> Result<CStarCategory> {
        let labels = self.objects.iter().map(|o| o.label.clone()).collect();
        let projections = self
            .objects
            .iter()
            .map(|o| matrix_from_wire(&o.projection))
            .collect::<Result<Vec<_>>>()?;
        let summands = self.summands.clone().unwrap_or_else(|| vec![0; self.ambient_dim]);
        if projections.iter().any(|p| p.nrows() != self.ambient_dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0} projections", self.ambient_dim),
                found: "mismatched projection shapes".into(),
            });
        }
        CStarCategory::new(labels, projections, summands, self.tol)
    }
}

/// Wire form of the spectral-reconstruction report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReportWire {
    pub imprimitivity: bool,
    pub bijection: Vec<usize>,
    pub metrics: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iso_residual: Option<f64>,
    pub pass: bool,
}

impl ReconstructionReportWire {
    pub fn from_report(r: &ReconstructionReport) -> Self {
        ReconstructionReportWire {
            imprimitivity: r.imprimitivity,
            bijection: r.bijection.clone(),
            metrics: r.metrics.clone(),
            phi_residual: if r.phi_residual.is_finite() { Some(r.phi_residual) } else { None },
            iso_residual: if r.iso_residual.is_finite() { Some(r.iso_residual) } else { None },
            pass: r.pass,
        }
    }
}
