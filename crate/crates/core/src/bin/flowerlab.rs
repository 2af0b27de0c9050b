use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use flowerlab::domains::{sample_u, USampling};
use flowerlab::fatou::{fatou_beta, sample_chart_points, FatouChart};
use flowerlab::harness::export::{
    write_beta_table, write_invariants, write_labels, write_report, write_trace,
};
use flowerlab::harness::{
    conjugacy_suite, covering, invariant_suite, verify_flower_1d, verify_theorem_a,
    verify_theorem_b, ExperimentConfig, FlowerPetals,
};
use flowerlab::invariants::{psi_basis, PsiOptions};
use flowerlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "flowerlab",
    version,
    about = "Parabolic petals, invariants and Fatou coordinates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional flower checks and the traced orbit.
    Flower1d(Common),
    /// Calibrates forward and backward petals.
    Calibrate(Common),
    /// Invariant-function checks and a table of evaluations.
    Invariants(Common),
    /// Fatou-coordinate conjugacy checks and a table of β values.
    Fatou(Common),
    /// Classifies a quasi-random sample of the punctured polydisc.
    Classify(Common),
    /// Verifies the attracting case (petals cover a punctured neighbourhood).
    #[command(name = "thmA")]
    ThmA(Common),
    /// Verifies the escaping case.
    #[command(name = "thmB")]
    ThmB(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(&c.config)?;
    Ok(match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn report<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let path = out.join(name);
    write_report(&path, value)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn calibrate(cfg: &ExperimentConfig) -> Result<FlowerPetals> {
    let (g, _) = cfg.germ.build()?;
    FlowerPetals::calibrate(&g, &cfg.calibration)
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    d: u64,
    m_mat: &'a [Vec<i64>],
    n_mat: &'a [Vec<i64>],
    forward: &'a flowerlab::domains::PetalSpec,
    backward: &'a flowerlab::domains::PetalSpec,
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Flower1d(c) => {
            let cfg = load(&c)?;
            let r = verify_flower_1d(&cfg)?;
            write_trace(&c.out.join("trace.csv"), &r.trace)?;
            report(&c.out, "flower1d.json", &r)?;
            Ok(r.passed())
        }
        Command::Calibrate(c) => {
            let cfg = load(&c)?;
            let p = calibrate(&cfg)?;
            let r = CalibrationReport {
                d: p.lat.d,
                m_mat: &p.lat.m_mat,
                n_mat: &p.lat.n_mat,
                forward: &p.forward_spec,
                backward: &p.backward_spec,
            };
            report(&c.out, "calibration.json", &r)?;
            Ok(true)
        }
        Command::Invariants(c) => {
            let cfg = load(&c)?;
            let p = calibrate(&cfg)?;
            let (g, lat, spec) = (&p.germ, &p.lat, &p.forward_spec);
            let stats = invariant_suite(
                g,
                lat,
                spec,
                cfg.samples.invariants,
                cfg.samples.pairs,
                cfg.tolerances.psi,
                cfg.seed,
            )?;
            let mut rows = Vec::new();
            for ell in 0..lat.d as usize {
                let pts = sample_u(
                    lat,
                    spec,
                    ell,
                    cfg.samples.invariants,
                    cfg.seed ^ 0x1F,
                    USampling::default(),
                );
                let evals: Vec<_> = pts
                    .par_iter()
                    .map(|x| {
                        psi_basis(
                            x,
                            ell,
                            g,
                            lat,
                            spec,
                            cfg.tolerances.psi,
                            PsiOptions::default(),
                        )
                    })
                    .collect();
                for (x, e) in pts.iter().zip(evals) {
                    rows.extend(e?.into_iter().map(|v| (x.clone(), v)));
                }
            }
            write_invariants(&c.out.join("invariants.csv"), g.n(), &rows)?;
            report(&c.out, "invariants.json", &stats)?;
            Ok(stats.passed())
        }
        Command::Fatou(c) => {
            let cfg = load(&c)?;
            let p = calibrate(&cfg)?;
            let (g, lat, spec) = (&p.germ, &p.lat, &p.forward_spec);
            let stats = conjugacy_suite(
                g,
                lat,
                spec,
                cfg.samples.fatou,
                cfg.tolerances.conjugacy,
                cfg.fatou,
                &flowerlab::harness::theorems::RAY_MODULI,
                cfg.seed,
            )?;
            let model = flowerlab::domains::dynamics_is_model(g);
            let pts = sample_chart_points(g, lat, spec, 0, cfg.samples.fatou, cfg.seed ^ 0x2F)?;
            let rows: Vec<_> = pts
                .par_iter()
                .filter_map(|pt| {
                    let (chart, slice) =
                        FatouChart::for_germ(g, lat, spec, 0, pt.w.clone(), model, cfg.fatou)
                            .ok()?;
                    let b = fatou_beta(pt.z, &chart, &slice).ok()?;
                    Some((pt.clone(), b.value, b.error))
                })
                .collect();
            write_beta_table(&c.out.join("beta.csv"), lat.n() - 1, &rows)?;
            report(&c.out, "fatou.json", &stats)?;
            Ok(stats.passed(1e-2))
        }
        Command::Classify(c) => {
            let cfg = load(&c)?;
            let p = calibrate(&cfg)?;
            let budgets = p.default_budgets(cfg.budgets.forward, cfg.budgets.backward);
            let radius = cfg.covering.radius.unwrap_or(p.forward_spec.delta_prime);
            let (stats, labels) = covering(
                &p,
                &budgets,
                radius,
                cfg.covering.band,
                cfg.samples.covering,
                cfg.seed,
            );
            write_labels(&c.out.join("labels.csv"), p.germ.n(), &labels)?;
            report(&c.out, "classify.json", &stats)?;
            Ok(stats.covered_fraction >= 0.999)
        }
        Command::ThmA(c) => {
            let cfg = load(&c)?;
            let r = verify_theorem_a(&cfg)?;
            report(&c.out, "theorem_a.json", &r)?;
            Ok(r.passed)
        }
        Command::ThmB(c) => {
            let cfg = load(&c)?;
            let r = verify_theorem_b(&cfg)?;
            report(&c.out, "theorem_b.json", &r)?;
            Ok(r.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed; see the report");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::CalibrationFailed {
                witness: Some(w), ..
            } = &e
            {
                eprintln!("witness: {w:?}");
            }
            ExitCode::from(2)
        }
    }
}
