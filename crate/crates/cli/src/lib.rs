//! Command-line front end: load instances from JSON, generate seeded random
//! instances, run validations and reconstructions, and emit deterministic
//! text or JSON reports.
//!
//! Exit status contract: 0 when every check passes, 1 when a check fails,
//! 2 on malformed or unreadable input.  Reports are byte-identical across
//! runs for identical inputs and flags, except for the wall-time field.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cstarmod::bimodule::{self, FiberedBimodule, PresentedBimodule};
use cstarmod::wire::{
    BimoduleWire, CategoryWire, FiberedBimoduleWire, PresentedBimoduleWire,
    ReconstructionReportWire,
};
use cstarmod::{category, gen, spectral, Check, Report};

#[derive(Debug, Parser)]
#[command(name = "cstarmod", version, about = "Hilbert C*-bimodule toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Numerical tolerance for every check.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,

    /// Seed for all randomized sampling and generation.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Number of random samples per sampled check.
    #[arg(long, global = true, default_value_t = 50)]
    pub samples: usize,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Output path; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the bimodule axioms of a fibered or presented instance.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the imprimitivity certificate.
    Imprimitivity {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Compute the canonical isomorphism with its full certificate.
    Phi {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Decompose a presented bimodule into fibered canonical form.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Full spectral reconstruction pipeline.
    Reconstruct {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Rieffel tensor product of two composable bimodules (pass --in twice).
    Tensor {
        #[arg(long = "in")]
        inputs: Vec<PathBuf>,
    },
    /// Rieffel dual of a bimodule.
    Dual {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Quotient by an ideal; input is {"bimodule": ..., "kept": [...]}.
    Quotient {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Validate a C*-category: projections, fullness, commutativity.
    #[command(name = "category-check")]
    CategoryCheck {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Canonical isomorphism family and cocycle identities of a category.
    Cocycle {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Picard relation of a full commutative category.
    Picard {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Linking category of an imprimitivity bimodule.
    Linking {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Generate seeded random instances.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Random imprimitivity bimodule.
    Imprimitivity {
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 10.0)]
        spread: f64,
        /// Wrap as a presented bimodule via a random change of basis.
        #[arg(long)]
        present: bool,
    },
    /// Random full commutative category.
    Category {
        #[arg(long)]
        objects: usize,
        #[arg(long)]
        spectrum: usize,
    },
}

/// Errors that map to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for InputError {}

/// The report document emitted by every checking command.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDoc {
    pub command: String,
    pub digest: String,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
    pub pass: bool,
    pub wall_ms: u64,
}

impl ReportDoc {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                serde_json::to_string_pretty(self).expect("report serializes") + "\n"
            }
            Format::Text => {
                let mut s = String::new();
                let _ = writeln!(s, "command: {}", self.command);
                let _ = writeln!(s, "digest:  {}", self.digest);
                for c in &self.checks {
                    let mark = if c.pass { "pass" } else { "FAIL" };
                    let _ = writeln!(s, "  [{mark}] {:<44} residual {:.3e}", c.name, c.residual);
                }
                if let Some(extra) = &self.extra {
                    let _ = writeln!(s, "extra:   {extra}");
                }
                let _ = writeln!(
                    s,
                    "result:  {} ({} ms)",
                    if self.pass { "PASS" } else { "FAIL" },
                    self.wall_ms
                );
                s
            }
        }
    }
}

/// Result of executing a command: a report or a generated instance.
pub enum Outcome {
    Report(ReportDoc),
    Instance(serde_json::Value),
}

impl Outcome {
    pub fn render(&self, format: Format) -> String {
        match self {
            Outcome::Report(doc) => doc.render(format),
            Outcome::Instance(v) => {
                serde_json::to_string_pretty(v).expect("instance serializes") + "\n"
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Report(doc) => {
                if doc.pass {
                    0
                } else {
                    1
                }
            }
            Outcome::Instance(_) => 0,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    let bytes = std::fs::read(path)
        .map_err(|e| InputError(format!("failed to read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        InputError(format!(
            "invalid JSON in {} at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Canonical content digest of a wire value: hash of its serialized form.
fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("wire serializes").as_bytes())
}

enum AnyBimodule {
    Fibered(FiberedBimodule),
    Presented(PresentedBimodule),
}

fn load_bimodule(path: &Path, tol: f64) -> Result<(AnyBimodule, String), InputError> {
    let wire: BimoduleWire = read_json(path)?;
    let digest = digest_of(&wire);
    let realized = match wire {
        BimoduleWire::Fibered(w) => AnyBimodule::Fibered(
            w.realize(tol)
                .map_err(|e| InputError(format!("{}: {e}", path.display())))?,
        ),
        BimoduleWire::Presented(w) => AnyBimodule::Presented(
            w.realize()
                .map_err(|e| InputError(format!("{}: {e}", path.display())))?,
        ),
    };
    Ok((realized, digest))
}

/// Decompose-if-presented: checking commands that need fibered form route
/// presented inputs through the decomposition, recording its residual.
fn to_fibered(
    any: &AnyBimodule,
    tol: f64,
    report: &mut Report,
) -> Result<FiberedBimodule, String> {
    match any {
        AnyBimodule::Fibered(m) => Ok(m.clone()),
        AnyBimodule::Presented(p) => match bimodule::decompose_presented(p, tol) {
            Ok((fibered, dec)) => {
                let scale =
                    1.0 + p.right_gram().iter().map(|g| g.norm()).fold(0.0, f64::max);
                report.residual(
                    "decomposition_round_trip",
                    dec.round_trip_residual(20, 0x10),
                    100.0 * tol * scale,
                );
                Ok(fibered)
            }
            Err(e) => Err(format!("decomposition failed: {e}")),
        },
    }
}

fn finish(
    command: &str,
    digest: String,
    report: Report,
    extra: Option<serde_json::Value>,
    start: Instant,
) -> ReportDoc {
    ReportDoc {
        command: command.to_string(),
        digest,
        pass: report.pass,
        checks: report.checks,
        extra,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

fn check_config(cli: &Cli) -> Result<(), InputError> {
    if !cli.tol.is_finite() || cli.tol <= 0.0 {
        return Err(InputError("tolerance must be positive".into()));
    }
    if cli.samples == 0 {
        return Err(InputError("samples must be at least 1".into()));
    }
    Ok(())
}

/// Execute a parsed command line.  `Err` maps to exit status 2.
pub fn execute(cli: &Cli) -> Result<Outcome, InputError> {
    check_config(cli)?;
    let start = Instant::now();
    let (tol, seed, samples) = (cli.tol, cli.seed, cli.samples);

    let doc = match &cli.command {
        Command::Validate { input } => {
            let (any, digest) = load_bimodule(input, tol)?;
            let report = match &any {
                AnyBimodule::Fibered(m) => {
                    bimodule::validate_bimodule_axioms(m, tol, samples, seed)
                }
                AnyBimodule::Presented(p) => {
                    bimodule::validate_presented_axioms(p, tol, samples, seed)
                }
            };
            finish("validate", digest, report, None, start)
        }

        Command::Imprimitivity { input } => {
            let (any, digest) = load_bimodule(input, tol)?;
            let mut report = Report::new();
            match to_fibered(&any, tol, &mut report) {
                Ok(m) => {
                    let cert = bimodule::imprimitivity_certificate(&m, tol);
                    report.flag("support_is_bijection_graph", cert.graph_ok);
                    report.flag("full_left", cert.full_left);
                    report.flag("full_right", cert.full_right);
                    report.residual(
                        "identity_on_basis_triples",
                        cert.identity_residual,
                        tol * (1.0 + m.max_metric_norm()).powi(2),
                    );
                    report.flag("characterizations_agree", cert.agree);
                    let extra = cert.bijection.map(|b| serde_json::json!({ "bijection": b }));
                    finish("imprimitivity", digest, report, extra, start)
                }
                Err(msg) => {
                    report.flag(msg, false);
                    finish("imprimitivity", digest, report, None, start)
                }
            }
        }

        Command::Phi { input } => {
            let (any, digest) = load_bimodule(input, tol)?;
            let mut report = Report::new();
            match to_fibered(&any, tol, &mut report).and_then(|m| {
                bimodule::canonical_phi_seeded(&m, tol, seed, samples).map_err(|e| e.to_string())
            }) {
                Ok(cert) => {
                    let r = &cert.residuals;
                    report.residual("well_defined", r.well_defined, tol);
                    report.residual("functional_equation", r.functional_eq, tol);
                    report.residual("intertwining", r.intertwine, tol);
                    report.residual("alpha_normalization", r.alpha_dev, tol);
                    report.residual("beta_normalization", r.beta_dev, tol);
                    report.residual("alpha_x_beta", r.axb, tol);
                    report.residual("psi_inverts_phi", r.inverse, tol);
                    let extra = serde_json::json!({
                        "spectrum_bijection": cert.phi.spectrum_bijection().ok(),
                        "point_map": cert.phi.point_map(),
                    });
                    finish("phi", digest, report, Some(extra), start)
                }
                Err(msg) => {
                    report.flag(msg, false);
                    finish("phi", digest, report, None, start)
                }
            }
        }

        Command::Decompose { input } => {
            let wire: PresentedBimoduleWire = read_json(input)?;
            let digest = digest_of(&wire);
            let presented = wire
                .realize()
                .map_err(|e| InputError(format!("{}: {e}", input.display())))?;
            let mut report = Report::new();
            let extra = match bimodule::decompose_presented(&presented, tol) {
                Ok((fibered, dec)) => {
                    let scale = 1.0
                        + presented
                            .right_gram()
                            .iter()
                            .map(|g| g.norm())
                            .fold(0.0, f64::max);
                    report.residual(
                        "round_trip",
                        dec.round_trip_residual(samples.min(20), seed),
                        100.0 * tol * scale,
                    );
                    report.merge(
                        "axioms",
                        bimodule::validate_presented_axioms(&presented, tol, samples, seed),
                    );
                    Some(serde_json::json!({
                        "result": FiberedBimoduleWire::from_bimodule(&fibered)
                    }))
                }
                Err(e) => {
                    report.flag(format!("decomposition failed: {e}"), false);
                    None
                }
            };
            finish("decompose", digest, report, extra, start)
        }

        Command::Reconstruct { input } => {
            let (any, digest) = load_bimodule(input, tol)?;
            let (report_core, extra) = match &any {
                AnyBimodule::Fibered(m) => {
                    let r = spectral::verify_reconstruction(m, tol, samples, seed);
                    let wire = ReconstructionReportWire::from_report(&r);
                    (r.checks, serde_json::to_value(wire).ok())
                }
                AnyBimodule::Presented(p) => {
                    match spectral::verify_reconstruction_presented(p, tol, samples, seed) {
                        Ok(r) => {
                            let wire = ReconstructionReportWire::from_report(&r);
                            (r.checks, serde_json::to_value(wire).ok())
                        }
                        Err(e) => {
                            let mut rep = Report::new();
                            rep.flag(format!("pipeline failed: {e}"), false);
                            (rep, None)
                        }
                    }
                }
            };
            finish("reconstruct", digest, report_core, extra, start)
        }

        Command::Tensor { inputs } => {
            if inputs.len() != 2 {
                return Err(InputError(
                    "tensor needs exactly two --in arguments (first factor, then second)".into(),
                ));
            }
            let (any1, d1) = load_bimodule(&inputs[0], tol)?;
            let (any2, d2) = load_bimodule(&inputs[1], tol)?;
            let digest = sha256_hex(format!("{d1}:{d2}").as_bytes());
            let mut report = Report::new();
            let m = to_fibered(&any1, tol, &mut report);
            let n = to_fibered(&any2, tol, &mut report);
            let extra = match (m, n) {
                (Ok(m), Ok(n)) => match bimodule::rieffel_tensor(&m, &n) {
                    Ok(t) => {
                        use rand::SeedableRng;
                        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                        let mut worst: f64 = 0.0;
                        for _ in 0..samples.min(50) {
                            let x1 = m.random_element(&mut rng);
                            let x2 = m.random_element(&mut rng);
                            let y1 = n.random_element(&mut rng);
                            let y2 = n.random_element(&mut rng);
                            let u = bimodule::simple_tensor(&t, &m, &n, &x1, &y1)
                                .expect("shapes match");
                            let v = bimodule::simple_tensor(&t, &m, &n, &x2, &y2)
                                .expect("shapes match");
                            let lhs = bimodule::right_inner(&u, &v).expect("parents");
                            let inner_x = bimodule::right_inner(&x1, &x2).expect("parents");
                            let rhs = bimodule::right_inner(
                                &y1,
                                &y2.act_left(&inner_x).expect("parents"),
                            )
                            .expect("parents");
                            worst = worst.max(lhs.sub(&rhs).expect("parents").norm());
                        }
                        let scale = (1.0 + m.max_metric_norm()) * (1.0 + n.max_metric_norm());
                        report.residual("tensor_inner_product_formula", worst, 10.0 * tol * scale);
                        Some(serde_json::json!({
                            "result": FiberedBimoduleWire::from_bimodule(&t)
                        }))
                    }
                    Err(e) => {
                        report.flag(format!("tensor failed: {e}"), false);
                        None
                    }
                },
                _ => None,
            };
            finish("tensor", digest, report, extra, start)
        }

        Command::Dual { input } => {
            let (any, digest) = load_bimodule(input, tol)?;
            let mut report = Report::new();
            let extra = match to_fibered(&any, tol, &mut report) {
                Ok(m) => {
                    let dual = bimodule::rieffel_dual(&m);
                    report.flag("double_dual_is_identity", bimodule::rieffel_dual(&dual) == m);
                    let cert = bimodule::imprimitivity_certificate(&m, tol);
                    if let Some(bij) = cert.bijection {
                        let dual_cert = bimodule::imprimitivity_certificate(&dual, tol);
                        let mut inverse = vec![0usize; bij.len()];
                        for (p, &q) in bij.iter().enumerate() {
                            inverse[q] = p;
                        }
                        report.flag(
                            "dual_bijection_is_inverse",
                            dual_cert.bijection.as_deref() == Some(inverse.as_slice()),
                        );
                    }
                    Some(serde_json::json!({
                        "result": FiberedBimoduleWire::from_bimodule(&dual)
                    }))
                }
                Err(msg) => {
                    report.flag(msg, false);
                    None
                }
            };
            finish("dual", digest, report, extra, start)
        }

        Command::Quotient { input } => {
            #[derive(Deserialize, Serialize)]
            struct QuotientInput {
                bimodule: BimoduleWire,
                kept: Vec<usize>,
            }
            let spec: QuotientInput = read_json(input)?;
            let digest = digest_of(&spec);
            let mut report = Report::new();
            let any = match &spec.bimodule {
                BimoduleWire::Fibered(w) => w
                    .realize(tol)
                    .map(AnyBimodule::Fibered)
                    .map_err(|e| InputError(format!("{}: {e}", input.display())))?,
                BimoduleWire::Presented(w) => w
                    .realize()
                    .map(AnyBimodule::Presented)
                    .map_err(|e| InputError(format!("{}: {e}", input.display())))?,
            };
            let extra = match to_fibered(&any, tol, &mut report).and_then(|m| {
                let ideal = cstarmod::algebra::ideal_from_points(m.left(), spec.kept.clone())
                    .map_err(|e| e.to_string())?;
                bimodule::quotient_bimodule(&m, &ideal).map_err(|e| e.to_string())
            }) {
                Ok(q) => {
                    report.flag(
                        "quotient_is_imprimitivity",
                        bimodule::is_imprimitivity(&q, tol),
                    );
                    Some(serde_json::json!({
                        "result": FiberedBimoduleWire::from_bimodule(&q)
                    }))
                }
                Err(msg) => {
                    report.flag(msg, false);
                    None
                }
            };
            finish("quotient", digest, report, extra, start)
        }

        Command::CategoryCheck { input } => {
            let wire: CategoryWire = read_json(input)?;
            let digest = digest_of(&wire);
            let mut report = Report::new();
            let extra = match wire.realize() {
                Ok(cat) => {
                    let fullness = category::check_full(&cat, tol);
                    report.flag("full", fullness.full);
                    report.flag("fullness_lemma_consistent", fullness.consistent);
                    let (_, comm_res) = category::check_commutative(&cat, tol);
                    report.residual("commutative", comm_res, tol * cat.ambient_dim() as f64);
                    report.residual(
                        "cstar_identity",
                        cat.cstar_identity_residual(samples.min(20), seed),
                        1e3 * tol,
                    );
                    Some(serde_json::json!({
                        "full": fullness.full,
                        "witness": fullness.witness,
                    }))
                }
                Err(e) => {
                    report.flag(format!("invalid category: {e}"), false);
                    None
                }
            };
            finish("category-check", digest, report, extra, start)
        }

        Command::Cocycle { input } => {
            let wire: CategoryWire = read_json(input)?;
            let digest = digest_of(&wire);
            let mut report = Report::new();
            match wire
                .realize()
                .map_err(|e| e.to_string())
                .and_then(|cat| category::canonical_phi_family(&cat, tol).map_err(|e| e.to_string()))
            {
                Ok(family) => {
                    report.merge("family", family.report.clone());
                    finish("cocycle", digest, report, None, start)
                }
                Err(msg) => {
                    report.flag(msg, false);
                    finish("cocycle", digest, report, None, start)
                }
            }
        }

        Command::Picard { input } => {
            let wire: CategoryWire = read_json(input)?;
            let digest = digest_of(&wire);
            let mut report = Report::new();
            let extra = match wire.realize().map_err(|e| e.to_string()).and_then(|cat| {
                let family =
                    category::canonical_phi_family(&cat, tol).map_err(|e| e.to_string())?;
                let pic =
                    category::picard_relation(&cat, &family, tol).map_err(|e| e.to_string())?;
                Ok((cat, pic))
            }) {
                Ok((cat, pic)) => {
                    report.merge("laws", pic.verify(cat.num_objects()));
                    let classes: Vec<serde_json::Value> = pic
                        .classes
                        .iter()
                        .map(|((a, b), bij)| {
                            serde_json::json!({
                                "from": cat.label(*a),
                                "to": cat.label(*b),
                                "bijection": bij,
                            })
                        })
                        .collect();
                    Some(serde_json::json!({ "classes": classes }))
                }
                Err(msg) => {
                    report.flag(msg, false);
                    None
                }
            };
            finish("picard", digest, report, extra, start)
        }

        Command::Linking { input } => {
            let (any, digest) = load_bimodule(input, tol)?;
            let mut report = Report::new();
            let extra = match to_fibered(&any, tol, &mut report).and_then(|m| {
                category::verify_linking(&m, tol)
                    .map(|r| (m, r))
                    .map_err(|e| e.to_string())
            }) {
                Ok((m, linking)) => {
                    report.merge("linking", linking);
                    Some(serde_json::json!({ "ambient_dim": 2 * m.left().dim() }))
                }
                Err(msg) => {
                    report.flag(msg, false);
                    None
                }
            };
            finish("linking", digest, report, extra, start)
        }

        Command::Gen { what } => {
            let value = match what {
                GenCommand::Imprimitivity { points, spread, present } => {
                    let m = gen::random_imprimitivity(*points, *spread, seed)
                        .map_err(|e| InputError(e.to_string()))?;
                    if *present {
                        let p = gen::present_randomly(&m, seed ^ 0x70de)
                            .map_err(|e| InputError(e.to_string()))?;
                        serde_json::to_value(PresentedBimoduleWire::from_presented(&p))
                            .expect("wire serializes")
                    } else {
                        serde_json::to_value(FiberedBimoduleWire::from_bimodule(&m))
                            .expect("wire serializes")
                    }
                }
                GenCommand::Category { objects, spectrum } => {
                    let c = gen::random_category(*objects, *spectrum, seed)
                        .map_err(|e| InputError(e.to_string()))?;
                    serde_json::to_value(CategoryWire::from_category(&c)).expect("wire serializes")
                }
            };
            return Ok(Outcome::Instance(value));
        }
    };

    Ok(Outcome::Report(doc))
}

/// Write the rendered outcome to the configured destination.
pub fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), InputError> {
    let rendered = outcome.render(cli.format);
    match &cli.out {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| InputError(format!("failed to write {}: {e}", path.display()))),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
