//! Spectral decomposition of imprimitivity bimodules.
//!
//! An imprimitivity bimodule over two diagonal algebras determines a
//! bijection between the spectra (the Gel'fand pullback of the inverse
//! canonical isomorphism, equal to the fiber-support graph) and a Hermitian
//! line bundle over the graph of that bijection: one positive metric scalar
//! per graph point.  The bimodule of sections of that bundle, with the left
//! algebra acting through the first leg and the right algebra through the
//! second, is certified isomorphic to the original bimodule.
//!
//! Line bundles over a finite discrete base are trivializable; the content
//! carried here is the isomorphism data itself, including the U(1) frame
//! gauge.  The documented canonical gauge makes every frame positive real.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{Algebra, AlgebraMap};
use crate::bimodule::{
    self, canonical_phi_seeded, decompose_presented, imprimitivity_certificate, BimoduleIso,
    FiberedBimodule, PresentedBimodule,
};
use crate::error::Error;
use crate::linalg::CMatrix;
use crate::report::Report;
use crate::Result;

/// Frame gauge for the extracted line bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameGauge {
    /// Every frame coordinate is positive real (the canonical choice).
    PositiveReal,
    /// Seeded random U(1) phase per graph point; used to exercise gauge
    /// independence.
    RandomPhase(u64),
}

/// The spectral invariant of an imprimitivity bimodule: the spectrum
/// bijection, plus one metric scalar and one metric-unit frame per point
/// of its graph.  Graph points are indexed by the left spectrum.
#[derive(Debug, Clone)]
pub struct SpectralData {
    left: Algebra,
    right: Algebra,
    bijection: Vec<usize>,
    metrics: Vec<f64>,
    frames: Vec<Complex64>,
}

impl SpectralData {
    pub fn left(&self) -> &Algebra {
        &self.left
    }

    pub fn right(&self) -> &Algebra {
        &self.right
    }

    /// The homeomorphism-of-spectra realization: left point → right point.
    pub fn bijection(&self) -> &[usize] {
        &self.bijection
    }

    /// Metric scalar of the line fiber over graph point j.
    pub fn metrics(&self) -> &[f64] {
        &self.metrics
    }

    /// Frame coordinate per graph point; `|frame|² · g = 1` exactly.
    pub fn frames(&self) -> &[Complex64] {
        &self.frames
    }

    pub fn graph_len(&self) -> usize {
        self.bijection.len()
    }

    /// First leg of the graph: graph point → left spectrum point.
    pub fn leg_a(&self, j: usize) -> usize {
        j
    }

    /// Second leg of the graph: graph point → right spectrum point.
    pub fn leg_b(&self, j: usize) -> usize {
        self.bijection[j]
    }

    /// The commutative-diagram identities of the construction, with the
    /// spectrum of the auxiliary graph algebra identified with the graph
    /// index set: π_A ∘ S equals the pullback of the first-leg isomorphism
    /// and π_B ∘ S the pullback of the second.  Pure index combinatorics,
    /// asserted exactly.
    pub fn leg_identities_hold(&self) -> bool {
        (0..self.graph_len()).all(|j| self.leg_a(j) == j && self.leg_b(j) == self.bijection[j])
    }
}

/// Bijection extracted from the canonical isomorphism the formula way: the
/// image of each coordinate idempotent under the partition-of-unity formula
/// must be a coordinate idempotent on the other side.
fn phi_pullback_bijection(m: &FiberedBimodule, tol: f64) -> Result<Vec<usize>> {
    let family = bimodule::partition_of_unity(m, bimodule::Side::Right)?;
    let mut bij = vec![usize::MAX; m.left().dim()];
    for p in 0..m.left().dim() {
        let e = m.left().idempotent(p)?;
        let image = bimodule::phi_from_family(m, &family, &e)?;
        let mut hit = None;
        for (q, v) in image.values().iter().enumerate() {
            if (v - Complex64::ONE).norm() <= 1e-6_f64.max(tol) {
                if hit.is_some() {
                    return Err(Error::NotImprimitivity {
                        reason: format!("idempotent at {p} maps onto several coordinates"),
                    });
                }
                hit = Some(q);
            } else if v.norm() > 1e-6_f64.max(tol) {
                return Err(Error::NotImprimitivity {
                    reason: format!("canonical isomorphism does not permute coordinates at {p}"),
                });
            }
        }
        bij[p] = hit.ok_or_else(|| Error::NotImprimitivity {
            reason: format!("canonical isomorphism kills the idempotent at {p}"),
        })?;
    }
    Ok(bij)
}

/// Extract the spectral data of an imprimitivity bimodule in the canonical
/// positive-real gauge.
pub fn spectral_data(m: &FiberedBimodule, tol: f64) -> Result<SpectralData> {
    spectral_data_with_gauge(m, tol, FrameGauge::PositiveReal)
}

/// Extract the spectral data with an explicit frame gauge.
pub fn spectral_data_with_gauge(
    m: &FiberedBimodule,
    tol: f64,
    gauge: FrameGauge,
) -> Result<SpectralData> {
    let cert = imprimitivity_certificate(m, tol);
    if !cert.holds() {
        return Err(Error::NotImprimitivity { reason: cert.failure_reason() });
    }
    let support = cert.bijection.expect("graph certificate");

    // Independent route: the pullback of the inverse canonical isomorphism,
    // evaluated from the defining formula.  Both must agree.
    let from_phi = phi_pullback_bijection(m, tol)?;
    if from_phi != support {
        return Err(Error::NotImprimitivity {
            reason: "support graph and canonical-isomorphism pullback disagree".into(),
        });
    }

    let metrics: Vec<f64> = (0..m.left().dim())
        .map(|p| m.metric(p, support[p])[(0, 0)].re)
        .collect();

    let frames: Vec<Complex64> = match gauge {
        FrameGauge::PositiveReal => metrics.iter().map(|&g| Complex64::from(1.0 / g.sqrt())).collect(),
        FrameGauge::RandomPhase(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            metrics
                .iter()
                .map(|&g| {
                    let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                    Complex64::from_polar(1.0 / g.sqrt(), theta)
                })
                .collect()
        }
    };

    Ok(SpectralData {
        left: m.left().clone(),
        right: m.right().clone(),
        bijection: support,
        metrics,
        frames,
    })
}

/// Spectral data of a presented bimodule, via decomposition to fibered form.
pub fn spectral_data_presented(p: &PresentedBimodule, tol: f64) -> Result<SpectralData> {
    let (fibered, _) = decompose_presented(p, tol)?;
    spectral_data(&fibered, tol)
}

/// The bimodule of sections of the spectral line bundle, with the twisted
/// actions `(f·σ)(x, y) = f(x)·σ(x, y)` and `(σ·g)(x, y) = σ(x, y)·g(y)`:
/// fibers of dimension one exactly on the graph, metrics from the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionBimodule(FiberedBimodule);

impl SectionBimodule {
    pub fn as_bimodule(&self) -> &FiberedBimodule {
        &self.0
    }

    pub fn into_bimodule(self) -> FiberedBimodule {
        self.0
    }
}

/// Build the section bimodule of spectral data.
pub fn section_bimodule(s: &SpectralData) -> SectionBimodule {
    let bimodule = FiberedBimodule::from_bijection(
        s.left.clone(),
        s.right.clone(),
        &s.bijection,
        Some(&s.metrics),
    )
    .expect("spectral data carries a valid bijection");
    debug_assert!(bimodule::is_imprimitivity(&bimodule, crate::DEFAULT_TOL));
    SectionBimodule(bimodule)
}

/// The reconstruction isomorphism Φ from an imprimitivity bimodule onto the
/// section bimodule of its spectral data: each fiber vector goes to its
/// section coefficient against the chosen frame, re-expressed in the bundle
/// basis.  In the positive-real gauge this is the coordinate identity; any
/// other gauge contributes one unit phase per graph point.
pub fn reconstruction_iso(m: &FiberedBimodule, tol: f64) -> Result<BimoduleIso> {
    reconstruction_iso_with_gauge(m, tol, FrameGauge::PositiveReal)
}

pub fn reconstruction_iso_with_gauge(
    m: &FiberedBimodule,
    tol: f64,
    gauge: FrameGauge,
) -> Result<BimoduleIso> {
    let s = spectral_data_with_gauge(m, tol, gauge)?;
    let target = section_bimodule(&s).into_bimodule();
    let mut unitaries = vec![vec![CMatrix::zeros(0, 0); m.right().dim()]; m.left().dim()];
    for (p, &q) in s.bijection.iter().enumerate() {
        let phase = s.frames[p] / s.frames[p].norm();
        unitaries[p][q] = CMatrix::from_element(1, 1, phase.conj());
    }
    Ok(BimoduleIso {
        source: m.clone(),
        target,
        left_map: AlgebraMap::identity(m.left()),
        right_map: AlgebraMap::identity(m.right()),
        unitaries,
    })
}

/// Consolidated report of the whole reconstruction pipeline.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub imprimitivity: bool,
    pub bijection: Vec<usize>,
    pub metrics: Vec<f64>,
    pub phi_residual: f64,
    pub iso_residual: f64,
    pub pass: bool,
    pub checks: Report,
}

/// Run the full pipeline on a fibered bimodule: imprimitivity certificate,
/// canonical isomorphism certificate, spectral data, reconstruction
/// isomorphism residuals, and the exact round trip of the bijection.
pub fn verify_reconstruction(
    m: &FiberedBimodule,
    tol: f64,
    samples: usize,
    seed: u64,
) -> ReconstructionReport {
    let mut checks = Report::new();
    let cert = imprimitivity_certificate(m, tol);
    checks.flag("imprimitivity", cert.holds());
    checks.flag("characterizations_agree", cert.agree);
    if !cert.holds() {
        checks.push(crate::report::Check {
            name: format!("failure: {}", cert.failure_reason()),
            residual: cert.identity_residual,
            pass: false,
        });
        return ReconstructionReport {
            imprimitivity: false,
            bijection: Vec::new(),
            metrics: Vec::new(),
            phi_residual: f64::NAN,
            iso_residual: f64::NAN,
            pass: false,
            checks,
        };
    }

    let phi_residual = match canonical_phi_seeded(m, tol, seed, samples) {
        Ok(phi_cert) => {
            let r = phi_cert.residuals.max();
            checks.residual("phi_certificate", r, tol);
            r
        }
        Err(e) => {
            checks.flag(format!("phi_certificate ({e})"), false);
            f64::NAN
        }
    };

    let s = spectral_data(m, tol).expect("imprimitivity already certified");
    checks.flag("leg_identities", s.leg_identities_hold());

    let iso = reconstruction_iso(m, tol).expect("imprimitivity already certified");
    let iso_residual = iso.residual(samples, seed ^ 0x9e37).unwrap_or(f64::NAN);
    checks.residual("reconstruction_iso", iso_residual, 10.0 * tol * (1.0 + m.max_metric_norm()));

    // Round trip: the section bimodule reproduces the bijection exactly and
    // is certified isomorphic to the original.
    let section = section_bimodule(&s);
    let s2 = spectral_data(section.as_bimodule(), tol).expect("section bimodule is imprimitivity");
    checks.flag("round_trip_bijection_exact", s2.bijection() == s.bijection());
    match bimodule::bimodule_isomorphic(m, section.as_bimodule(), tol) {
        Ok(Some(round_iso)) => {
            let r = round_iso.residual(samples.min(20), seed ^ 0x51).unwrap_or(f64::NAN);
            checks.residual("round_trip_isomorphism", r, 10.0 * tol * (1.0 + m.max_metric_norm()));
        }
        _ => checks.flag("round_trip_isomorphism", false),
    }

    let pass = checks.pass;
    ReconstructionReport {
        imprimitivity: true,
        bijection: s.bijection().to_vec(),
        metrics: s.metrics().to_vec(),
        phi_residual,
        iso_residual,
        pass,
        checks,
    }
}

/// Pipeline for a presented bimodule: decompose, then verify; the
/// decomposition round trip is folded into the report.
pub fn verify_reconstruction_presented(
    p: &PresentedBimodule,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<ReconstructionReport> {
    let (fibered, decomposition) = decompose_presented(p, tol)?;
    let mut report = verify_reconstruction(&fibered, tol, samples, seed);
    let rt = decomposition.round_trip_residual(samples.min(20), seed ^ 0x77);
    let scale = 1.0 + p.left_gram().iter().map(|g| g.norm()).fold(0.0, f64::max);
    report.checks.residual("decomposition_round_trip", rt, 100.0 * tol * scale);
    report.pass = report.checks.pass;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimodule::FiberSpec;
    use crate::linalg;
    use crate::DEFAULT_TOL;
    use rand::seq::SliceRandom;

    fn c2() -> Algebra {
        Algebra::new(["x", "y"]).unwrap()
    }

    fn c3() -> Algebra {
        Algebra::new(["x", "y", "z"]).unwrap()
    }

    fn random_imprimitivity(n: usize, seed: u64) -> FiberedBimodule {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let metrics: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0).exp2()).collect();
        FiberedBimodule::from_bijection(
            Algebra::with_dim(n).unwrap(),
            Algebra::new((0..n).map(|i| format!("q{i}"))).unwrap(),
            &perm,
            Some(&metrics),
        )
        .unwrap()
    }

    #[test]
    fn identity_bimodule_spectral_data() {
        let g = [2.0, 1.0, 0.5];
        let m = FiberedBimodule::from_bijection(c3(), c3(), &[0, 1, 2], Some(&g)).unwrap();
        let s = spectral_data(&m, DEFAULT_TOL).unwrap();
        assert_eq!(s.bijection(), &[0, 1, 2]);
        assert_eq!(s.metrics(), &g);
        for (j, f) in s.frames().iter().enumerate() {
            assert!(f.im == 0.0 && f.re > 0.0);
            assert!((f.norm_sqr() * g[j] - 1.0).abs() < 1e-12);
        }
        assert!(s.leg_identities_hold());
    }

    #[test]
    fn swap_bimodule_spectral_data() {
        let m = FiberedBimodule::from_bijection(c2(), c2(), &[1, 0], None).unwrap();
        let s = spectral_data(&m, DEFAULT_TOL).unwrap();
        assert_eq!(s.bijection(), &[1, 0]);
    }

    #[test]
    fn non_imprimitivity_is_rejected_with_witness() {
        let fat = FiberedBimodule::from_dims(c2(), c2(), vec![vec![2, 0], vec![0, 1]]).unwrap();
        match spectral_data(&fat, DEFAULT_TOL) {
            Err(Error::NotImprimitivity { reason }) => {
                assert!(reason.contains("fiber (0,0)"), "{reason}");
            }
            other => panic!("expected NotImprimitivity, got {other:?}"),
        }
    }

    #[test]
    fn section_bimodule_examples() {
        // Identity bijection with unit metrics is the algebra over itself.
        let m = FiberedBimodule::algebra_over_itself(&c3());
        let s = spectral_data(&m, DEFAULT_TOL).unwrap();
        let section = section_bimodule(&s);
        assert_eq!(*section.as_bimodule(), m);

        // Transposition gives the swap bimodule, and the canonical
        // isomorphism of the section bimodule is the pushforward along R.
        let swap = FiberedBimodule::from_bijection(c2(), c2(), &[1, 0], None).unwrap();
        let s = spectral_data(&swap, DEFAULT_TOL).unwrap();
        let section = section_bimodule(&s);
        assert_eq!(*section.as_bimodule(), swap);
        let phi = bimodule::canonical_phi(section.as_bimodule(), DEFAULT_TOL).unwrap().phi;
        assert_eq!(phi.spectrum_bijection().unwrap(), s.bijection());
    }

    #[test]
    fn reconstruction_iso_examples() {
        // Identity up to frame gauge on the algebra over itself.
        let m = FiberedBimodule::algebra_over_itself(&c3());
        let iso = reconstruction_iso(&m, DEFAULT_TOL).unwrap();
        for p in 0..3 {
            assert!((iso.unitaries[p][p][(0, 0)] - Complex64::ONE).norm() < 1e-14);
        }
        assert!(iso.residual(20, 1).unwrap() < 1e-12);

        // Random instance over five points.
        let m = random_imprimitivity(5, 99);
        let iso = reconstruction_iso(&m, DEFAULT_TOL).unwrap();
        assert!(iso.residual(50, 2).unwrap() <= 1e-9);

        // Round trip reproduces the bijection exactly.
        let s = spectral_data(&m, DEFAULT_TOL).unwrap();
        let section = section_bimodule(&s);
        let s2 = spectral_data(section.as_bimodule(), DEFAULT_TOL).unwrap();
        assert_eq!(s.bijection(), s2.bijection());
    }

    #[test]
    fn verify_reconstruction_passes_and_fails() {
        let m = random_imprimitivity(6, 4);
        let report = verify_reconstruction(&m, DEFAULT_TOL, 30, 11);
        assert!(report.pass, "{:?}", report.checks.checks);
        assert!(report.iso_residual <= 1e-9);

        let fat = FiberedBimodule::new(
            c2(),
            c2(),
            vec![
                FiberSpec { a: 0, b: 0, dim: 2, metric: None },
                FiberSpec { a: 1, b: 1, dim: 1, metric: None },
            ],
            DEFAULT_TOL,
        )
        .unwrap();
        let report = verify_reconstruction(&fat, DEFAULT_TOL, 10, 11);
        assert!(!report.pass);
        assert!(!report.imprimitivity);
        assert!(report.checks.checks.iter().any(|c| c.name.contains("fiber (0,0)")));
    }

    #[test]
    fn verify_reconstruction_presented_end_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = random_imprimitivity(4, 12);
        let basis = linalg::random_well_conditioned(&mut rng, m.total_dim(), 30.0);
        let p = bimodule::present(&m, &basis).unwrap();
        let report = verify_reconstruction_presented(&p, DEFAULT_TOL, 20, 3).unwrap();
        assert!(report.pass, "{:?}", report.checks.checks);
        let s = spectral_data(&m, DEFAULT_TOL).unwrap();
        assert_eq!(report.bijection, s.bijection());
    }

    #[test]
    fn gauge_independence() {
        let m = random_imprimitivity(5, 21);
        let s1 = spectral_data_with_gauge(&m, DEFAULT_TOL, FrameGauge::RandomPhase(7)).unwrap();
        let s2 = spectral_data_with_gauge(&m, DEFAULT_TOL, FrameGauge::RandomPhase(8)).unwrap();
        assert_eq!(s1.bijection(), s2.bijection());
        assert_eq!(section_bimodule(&s1), section_bimodule(&s2));
        // Frames are metric-normalized in every gauge, and the isos certify.
        for (f, &g) in s1.frames().iter().zip(s1.metrics()) {
            assert!((f.norm_sqr() * g - 1.0).abs() < 1e-12);
        }
        let iso1 = reconstruction_iso_with_gauge(&m, DEFAULT_TOL, FrameGauge::RandomPhase(7)).unwrap();
        let iso2 = reconstruction_iso_with_gauge(&m, DEFAULT_TOL, FrameGauge::RandomPhase(8)).unwrap();
        assert!(iso1.residual(20, 5).unwrap() < 1e-10);
        assert!(iso2.residual(20, 5).unwrap() < 1e-10);
    }

    #[test]
    fn composition_and_dual_consistency() {
        let a = Algebra::with_dim(4).unwrap();
        let b = Algebra::new((0..4).map(|i| format!("q{i}"))).unwrap();
        let c = Algebra::new((0..4).map(|i| format!("r{i}"))).unwrap();
        let m = FiberedBimodule::from_bijection(a, b.clone(), &[2, 0, 3, 1], Some(&[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let n = FiberedBimodule::from_bijection(b, c, &[1, 3, 0, 2], Some(&[0.5, 1.5, 2.5, 3.5]))
            .unwrap();

        let sm = spectral_data(&m, DEFAULT_TOL).unwrap();
        let sn = spectral_data(&n, DEFAULT_TOL).unwrap();
        let t = bimodule::rieffel_tensor(&m, &n).unwrap();
        let st = spectral_data(&t, DEFAULT_TOL).unwrap();
        let composed: Vec<usize> = (0..4).map(|p| sn.bijection()[sm.bijection()[p]]).collect();
        assert_eq!(st.bijection(), composed.as_slice());

        let sd = spectral_data(&bimodule::rieffel_dual(&m), DEFAULT_TOL).unwrap();
        let mut inverse = vec![0usize; 4];
        for (p, &q) in sm.bijection().iter().enumerate() {
            inverse[q] = p;
        }
        assert_eq!(sd.bijection(), inverse.as_slice());
    }
}
