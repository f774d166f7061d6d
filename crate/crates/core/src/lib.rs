//! Finite-dimensional Hilbert C*-(bi)modules over commutative unital
//! C*-algebras.
//!
//! Everything lives over algebras of complex functions on a finite labeled
//! spectrum, so all module theory reduces to exact linear algebra on small
//! complex matrices.  The crate provides:
//!
//! - [`algebra`]: diagonal-model commutative C*-algebras, ideals, quotients,
//!   characters, and a Gel'fand transform realized by joint diagonalization
//!   of commuting normal matrices;
//! - [`module`]: one-sided Hilbert C*-modules in fibered form, with
//!   algebra-valued inner products, adjointable operators, quotients and
//!   twists;
//! - [`bimodule`]: Hilbert C*-bimodules, imprimitivity certification, the
//!   canonical isomorphism between the base algebras, Rieffel tensor
//!   products and duals, symmetrization, quotients, and decomposition of
//!   opaquely presented bimodules;
//! - [`spectral`]: extraction of the spectrum bijection and Hermitian line
//!   bundle of an imprimitivity bimodule, the associated section bimodule,
//!   and the certified reconstruction isomorphism;
//! - [`category`]: concrete C*-categories carved out of a matrix algebra by
//!   projection families, with fullness and commutativity checks, the
//!   canonical isomorphism family and its cocycle identities, point
//!   functors, Picard data, and linking algebras;
//! - [`gen`]: seeded random instance generators;
//! - [`wire`]: JSON representations for every type above.
//!
//! All values are immutable after construction and every operation is a
//! pure function of its inputs and explicit seeds, so everything is safe to
//! call concurrently.

pub mod algebra;
pub mod bimodule;
pub mod category;
pub mod error;
pub mod gen;
pub mod linalg;
pub mod module;
pub mod report;
pub mod spectral;
pub mod wire;

pub use algebra::{Algebra, AlgebraElement, AlgebraMap, Character, GelfandData, Ideal};
pub use bimodule::{
    AmbientDecomposition, BimoduleElement, BimoduleIso, FiberedBimodule, ImprimitivityCertificate,
    PhiCertificate, PresentedBimodule,
};
pub use category::{CStarCategory, PhiFamily, PicardRelation, PointFunctor, StarFunctor};
pub use error::Error;
pub use module::{FiberedModule, ModuleElement, ModuleOperator};
pub use report::{Check, Report};
pub use spectral::{ReconstructionReport, SectionBimodule, SpectralData};

/// Default relative tolerance used when callers do not supply one.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
