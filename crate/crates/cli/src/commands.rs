use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{f17, Sink};
use crate::{Cli, Command};
use acclab::calculus_orders::{compose, CalcError, Calculus, CalculusOrders};
use acclab::corner_blowup::{build_space, lift_monomial, sc_triple_projection, tabulated_faces, BlowupError, Monomial, SpaceKind, TripleProjection};
use acclab::golden::{verify_all, GoldenData, GoldenError};
use acclab::heat::{theorem2_probe, HeatError, Regime};
use acclab::model_geometry::GeometryError;
use acclab::phg_index::Dims;
use acclab::spectral::{assemble_spectrum, spectral_flow, SpectralError};
use serde::Serialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("cannot start {0} worker threads: {1}")]
    Jobs(usize, String),
    #[error("--tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("no subcommand given (try --help)")]
    NoCommand,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("golden tables: {0}")]
    Golden(#[from] GoldenError),
    #[error("blowup: {0}")]
    Blowup(#[from] BlowupError),
    #[error("composition: {0}")]
    Calc(#[from] CalcError),
    #[error("spectral solver: {0}")]
    Spectral(#[from] SpectralError),
    #[error("heat probe: {0}")]
    Heat(#[from] HeatError),
    #[error("model: {0}")]
    Geometry(#[from] GeometryError),
}

type Result<T> = std::result::Result<T, CliError>;

/// `Ok(false)` means the command ran but a check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Jobs(j, e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = cli.tolerance {
        if !(t > 0.0) {
            return Err(CliError::Tolerance(t));
        }
        cfg.solver.tolerance = t;
    }
    let sink = Sink::new(cli.out.clone().or_else(|| cfg.output_dir.clone()))?;
    let mut ok = true;
    if cli.verify_tables {
        ok &= verify_tables(&sink)?;
    }
    let Some(cmd) = &cli.command else {
        return if cli.verify_tables { Ok(ok) } else { Err(CliError::NoCommand) };
    };
    ok &= match cmd {
        Command::Faces { kind, json } => faces(&sink, kind, *json)?,
        Command::Lift { map, monomial } => lift(map, monomial)?,
        Command::Compose { calculus, a, b, n, json } => compose_cmd(&sink, calculus, a, b, *n, *json)?,
        Command::Spectrum => spectrum(&sink, &cfg)?,
        Command::Flow => flow(&sink, &cfg)?,
        Command::Heat { regime } => heat(&sink, &cfg, regime.as_deref())?,
        Command::VerifyTables => {
            if cli.verify_tables {
                ok
            } else {
                verify_tables(&sink)?
            }
        }
    };
    Ok(ok)
}

fn verify_tables(sink: &Sink) -> Result<bool> {
    let data = GoldenData::from_env()?;
    let reports = verify_all(&data)?;
    for r in &reports {
        let status = if r.ok() { "ok" } else { "FAIL" };
        println!("{status:<5}{:<22}{} checks", r.table, r.checked);
        for m in &r.mismatches {
            println!("     {m}");
        }
    }
    sink.json("verify_tables.json", &reports)?;
    Ok(reports.iter().all(|r| r.ok()))
}

fn faces(sink: &Sink, kind: &str, json: bool) -> Result<bool> {
    let kind: SpaceKind = kind.parse()?;
    let space = build_space(kind);
    let names = tabulated_faces(&space, kind);
    let table = space.to_json_table();
    if json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        println!("{:<12}{:<18}{:<10}codim", "face", "origin", "");
        for name in &names {
            let f = space.face(name);
            let origin = f.map(|f| format!("{:?}", f.origin)).unwrap_or_default();
            let rec = if f.is_some_and(|f| f.reconstructed) { "(rec.)" } else { "" };
            let codim = space.centers.get(name).map(|c| c.codim.to_string()).unwrap_or_else(|| "-".into());
            println!("{name:<12}{origin:<18}{rec:<10}{codim}");
        }
        for c in &space.corners {
            println!("corner {:<10}{}", c.name, c.in_faces.join(" ∩ "));
        }
    }
    sink.json(&format!("faces_{kind}.json"), &table)?;
    let data = GoldenData::from_env()?;
    let Some(golden) = data.face_table(kind) else {
        eprintln!("no golden table for {kind}");
        return Ok(true);
    };
    let (mut want, mut got) = (golden.faces.clone(), names);
    let mut want_c = golden.corners.clone();
    let mut got_c: Vec<String> = space.corners.iter().map(|c| c.name.clone()).collect();
    if !golden.ordered {
        want.sort();
        got.sort();
        want_c.sort();
        got_c.sort();
    }
    let mut ok = true;
    if want != got {
        eprintln!("face mismatch\n  golden:   {}\n  computed: {}", want.join(", "), got.join(", "));
        ok = false;
    }
    if want_c != got_c {
        eprintln!("corner mismatch\n  golden:   {}\n  computed: {}", want_c.join(", "), got_c.join(", "));
        ok = false;
    }
    Ok(ok)
}

fn lift(map: &str, monomial: &str) -> Result<bool> {
    let p: TripleProjection = map.parse()?;
    let m = Monomial::parse(monomial)?;
    let triple = build_space(SpaceKind::ScTripleHeat);
    let spec = sc_triple_projection(&triple, p);
    let lifted = lift_monomial(&spec, &m)?;
    println!("{lifted}");
    let data = GoldenData::from_env()?;
    if let Some(row) = data.lift_row(p.map_name(), &m) {
        let want = Monomial::parse(&row.lift)?;
        if want != lifted {
            eprintln!("golden mismatch for ({})* {}: expected {want}", p.map_name(), row.function);
            return Ok(false);
        }
        eprintln!("golden: match");
    }
    Ok(true)
}

fn read_orders(path: &Path) -> Result<CalculusOrders> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input { path: path.display().to_string(), message: e.to_string() })?;
    let o: CalculusOrders = serde_json::from_str(&text)
        .map_err(|e| CliError::Input { path: path.display().to_string(), message: e.to_string() })?;
    o.check_invariants()?;
    Ok(o)
}

fn compose_cmd(sink: &Sink, calculus: &str, a: &Path, b: &Path, n: i64, json: bool) -> Result<bool> {
    let calc: Calculus = calculus.parse()?;
    let (oa, ob) = (read_orders(a)?, read_orders(b)?);
    for (o, p) in [(&oa, a), (&ob, b)] {
        if o.calculus != calc {
            return Err(CliError::Input {
                path: p.display().to_string(),
                message: format!("expected a {calc} element, got {}", o.calculus),
            });
        }
    }
    let d = Dims::new(n);
    let c = compose(&oa, &ob, &d)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&c)?);
    } else {
        print!("{}", c.table(&d));
    }
    sink.json("compose.json", &c)?;
    Ok(true)
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    config: &'a ExperimentConfig,
    tail_bound: Vec<(f64, f64)>,
    rows: usize,
}

fn spectrum(sink: &Sink, cfg: &ExperimentConfig) -> Result<bool> {
    let fam = cfg.family()?;
    let counts = vec![cfg.solver.levels; fam.cross_section.modes.len()];
    let opts = cfg.solver_options();
    let mut rows = Vec::new();
    let mut tails = Vec::new();
    for &eps in &cfg.schedule {
        let res = assemble_spectrum(&fam, eps, &counts, &opts, false)?;
        tails.push((eps, res.tail_bound));
        for e in &res.entries {
            rows.push(vec![f17(eps), f17(e.mu), e.multiplicity.to_string(), e.k.to_string(), f17(e.lambda), f17(e.err_est)]);
        }
    }
    sink.csv("spectrum.csv", &["eps", "mode_mu", "mode_mult", "k", "lambda", "err_est"], &rows)?;
    sink.json("spectrum.json", &SpectrumSummary { config: cfg, tail_bound: tails, rows: rows.len() })?;
    Ok(true)
}

fn flow(sink: &Sink, cfg: &ExperimentConfig) -> Result<bool> {
    let fam = cfg.family()?;
    let fl = spectral_flow(&fam, &cfg.schedule, &cfg.flow_options())?;
    let mut rows = Vec::new();
    for c in &fl.curves {
        for (i, eps) in fl.schedule.iter().enumerate() {
            rows.push(vec![
                c.l.to_string(),
                c.k.to_string(),
                c.multiplicity.to_string(),
                f17(*eps),
                f17(c.values[i]),
                f17(c.err_est[i]),
                f17(c.limit),
                f17(c.extrapolation_err),
                c.rate.map(f17).unwrap_or_default(),
            ]);
        }
    }
    let header = ["l", "k", "mult", "eps", "lambda", "err_est", "limit", "limit_err", "rate"];
    let clusters: Vec<Vec<String>> = fl
        .clusters
        .iter()
        .map(|c| {
            vec![
                f17(c.center),
                c.multiplicity.to_string(),
                f17(c.window),
                c.matched_reference.map(f17).unwrap_or_default(),
                c.reference_multiplicity.to_string(),
                f17(c.gap),
            ]
        })
        .collect();
    let verdict = fl.verdict();
    if sink.dir().is_some() {
        sink.csv("flow.csv", &header, &rows)?;
        sink.csv(
            "clusters.csv",
            &["center", "multiplicity", "window", "reference", "reference_multiplicity", "gap"],
            &clusters,
        )?;
        sink.json("flow.json", &serde_json::json!({ "config": cfg, "verdict": verdict, "flow": fl }))?;
    } else {
        sink.csv("clusters.csv", &["center", "multiplicity", "window", "reference", "reference_multiplicity", "gap"], &clusters)?;
    }
    println!("verdict: {verdict}");
    Ok(fl.both_inclusions && fl.multiplicities_match)
}

fn heat(sink: &Sink, cfg: &ExperimentConfig, regime: Option<&str>) -> Result<bool> {
    let regime: Regime = match regime {
        Some(r) => r.parse()?,
        None => cfg.probe.regime,
    };
    let fam = cfg.heat_family()?;
    let spec = cfg.probe_spec(regime);
    let table = theorem2_probe(&fam, regime, &spec)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                regime.to_string(),
                f17(r.eps),
                f17(r.t_or_tau),
                f17(r.x),
                f17(r.xprime),
                f17(r.value_model),
                f17(r.value_eps),
                f17(r.abs_err),
            ]
        })
        .collect();
    sink.csv(
        "heat.csv",
        &["regime", "eps", "t_or_tau", "x", "xprime", "value_model", "value_eps", "abs_err"],
        &rows,
    )?;
    sink.json("heat.json", &serde_json::json!({ "config": cfg, "spec": spec, "table": table }))?;
    if sink.dir().is_some() {
        println!("{:<10}decay", "eps");
        for (e, d) in spec.schedule.iter().zip(&table.decay) {
            println!("{:<10}{}", e, f17(*d));
        }
    }
    eprintln!(
        "strictly decreasing: {}, final relative error: {}",
        table.strictly_decreasing,
        f17(table.final_relative)
    );
    Ok(true)
}
