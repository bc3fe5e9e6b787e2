use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use phasediff::fock::{probe_cutoff, CutoffPolicy, ProbeSpec};
use phasediff::homodyne::{
    noise_threshold, sample_and_estimate, variance_map, HomodyneSetup, MonteCarloConfig,
};
use phasediff::qfi::{qfi_of_probe, QfiOptions};
use phasediff::sweep::{fit_gamma, optimize_beta, qfi_surface, SweepOptions, SweepRecord};

use crate::config::{Common, CrbMcSection, FitSection, HomodyneSection, QfiSection, SweepSection, VarianceMapSection};
use crate::table::{Cell, Table};
use crate::CliError;

struct Progress {
    label: &'static str,
    total: usize,
    done: AtomicUsize,
}

impl Progress {
    fn new(label: &'static str, total: usize) -> Self {
        eprintln!("[{label}] {total} work items");
        Self { label, total, done: AtomicUsize::new(0) }
    }

    fn tick(&self) {
        let done = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!("[{}] {done}/{}", self.label, self.total);
    }
}

fn policy(common: &Common) -> CutoffPolicy {
    CutoffPolicy {
        epsilon_tail: common.tail_tol.expect("resolved"),
        hard_limit: common.cutoff_limit.expect("resolved"),
    }
}

fn spec(n: f64, beta: f64, delta: f64, common: &Common) -> phasediff::Result<ProbeSpec> {
    ProbeSpec::new(n, beta, delta)?.with_tail_tolerance(common.tail_tol.expect("resolved"))
}

fn error_cell<T>(r: &phasediff::Result<T>) -> Cell {
    match r {
        Ok(_) => Cell::Empty,
        Err(e) => Cell::text(e.to_string()),
    }
}

fn triples(n: &[f64], beta: &[f64], delta: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(n.len() * beta.len() * delta.len());
    for &a in n {
        for &b in beta {
            for &d in delta {
                out.push((a, b, d));
            }
        }
    }
    out
}

pub fn qfi(sec: &QfiSection, common: &Common) -> Result<Table, CliError> {
    let opts = QfiOptions {
        cutoff_limit: common.cutoff_limit.expect("resolved"),
        verify_cutoff: sec.verify_cutoff.expect("resolved"),
        ..QfiOptions::default()
    };
    let points = triples(sec.n.as_ref().unwrap(), sec.beta.as_ref().unwrap(), sec.delta.as_ref().unwrap());
    let progress = Progress::new("qfi", points.len());
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|&(n, beta, delta)| {
            let result = spec(n, beta, delta, common).and_then(|s| qfi_of_probe(&s, &opts));
            progress.tick();
            let err = error_cell(&result);
            match result {
                Ok(q) => vec![
                    n.into(),
                    beta.into(),
                    delta.into(),
                    q.h.into(),
                    q.n_terms_used.into(),
                    q.degeneracy_skipped.into(),
                    q.cutoff.into(),
                    q.tail_mass.into(),
                    Cell::opt(q.cutoff_change),
                    err,
                ],
                Err(_) => {
                    let mut row = vec![n.into(), beta.into(), delta.into()];
                    row.extend(std::iter::repeat_n(Cell::Empty, 6));
                    row.push(err);
                    row
                }
            }
        })
        .collect();
    let mut table = Table::new(vec![
        "N",
        "beta",
        "Delta",
        "H",
        "n_terms_used",
        "degeneracy_skipped",
        "cutoff",
        "tail_mass",
        "cutoff_change",
        "error",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

pub const SWEEP_COLUMNS: [&str; 16] = [
    "N",
    "Delta",
    "beta_opt",
    "H_opt",
    "xi",
    "gamma",
    "F_homodyne",
    "cutoff",
    "tail_mass",
    "k",
    "H_rescaled",
    "beta_opt_rescaled",
    "H_scaling_deviation",
    "beta_scaling_deviation",
    "phi0_homodyne",
    "error",
];

pub fn sweep(sec: &SweepSection, common: &Common) -> Result<Table, CliError> {
    let opts = SweepOptions {
        beta_tol: sec.beta_tol.expect("resolved"),
        epsilon_tail: common.tail_tol.expect("resolved"),
        qfi: QfiOptions {
            cutoff_limit: common.cutoff_limit.expect("resolved"),
            verify_cutoff: sec.verify_cutoff.expect("resolved"),
            ..QfiOptions::default()
        },
    };
    let ns = sec.n.as_ref().unwrap();
    let deltas = sec.delta.as_ref().unwrap();
    eprintln!("[sweep] {} grid points", ns.len() * deltas.len());
    let records = qfi_surface(ns, deltas, &opts)?;
    let progress = Progress::new("sweep", records.len());
    let pol = policy(common);
    let rows: Vec<Vec<Cell>> = records
        .into_par_iter()
        .map(|mut rec| {
            let mut phi0 = Cell::Empty;
            if sec.homodyne == Some(true) && rec.is_ok() {
                let best = spec(rec.n_mean, rec.beta_opt, rec.delta, common)
                    .and_then(|s| HomodyneSetup::for_probe(&s, &pol)?.max_fisher(0.0));
                match best {
                    Ok(f) => {
                        rec.f_homodyne = Some(f.f);
                        phi0 = f.phi0.into();
                    }
                    Err(e) => rec.error = Some(e.to_string()),
                }
            }
            let mut scaling = vec![Cell::Empty; 5];
            if let (Some(k), true) = (sec.scaling_k, rec.is_ok()) {
                scaling[0] = k.into();
                match optimize_beta(rec.n_mean / k, k * rec.delta, &opts) {
                    Ok(partner) => {
                        scaling[1] = partner.h().into();
                        scaling[2] = partner.beta.into();
                        scaling[3] = ((rec.h_opt - k * k * partner.h()).abs() / rec.h_opt).into();
                        scaling[4] = (rec.beta_opt - partner.beta).abs().into();
                    }
                    Err(e) => rec.error = Some(format!("rescaled point: {e}")),
                }
            }
            progress.tick();
            let ok = rec.beta_opt.is_finite();
            let mut row = vec![
                rec.n_mean.into(),
                rec.delta.into(),
                if ok { rec.beta_opt.into() } else { Cell::Empty },
                if ok { rec.h_opt.into() } else { Cell::Empty },
                rec.xi.into(),
                if ok { rec.gamma.into() } else { Cell::Empty },
                Cell::opt(rec.f_homodyne),
                if ok { rec.cutoff.into() } else { Cell::Empty },
                if ok { rec.tail_mass.into() } else { Cell::Empty },
            ];
            row.extend(scaling);
            row.push(phi0);
            row.push(rec.error.map_or(Cell::Empty, Cell::Text));
            row
        })
        .collect();
    let mut table = Table::new(SWEEP_COLUMNS.to_vec());
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

pub fn homodyne(sec: &HomodyneSection, common: &Common) -> Result<Table, CliError> {
    let pol = policy(common);
    let qopts = QfiOptions { cutoff_limit: pol.hard_limit, ..QfiOptions::default() };
    let mut points = Vec::new();
    for (n, b, d) in triples(sec.n.as_ref().unwrap(), sec.beta.as_ref().unwrap(), sec.delta.as_ref().unwrap()) {
        for &t in sec.theta.as_ref().unwrap() {
            points.push((n, b, d, t));
        }
    }
    let progress = Progress::new("homodyne", points.len());
    let per_point: Vec<Vec<Vec<Cell>>> = points
        .par_iter()
        .map(|&(n, beta, delta, theta)| {
            let prepared = spec(n, beta, delta, common)
                .and_then(|s| Ok((HomodyneSetup::for_probe(&s, &pol)?, qfi_of_probe(&s, &qopts)?.h)));
            let rows = match prepared {
                Err(e) => {
                    let mut row = vec![n.into(), beta.into(), delta.into(), theta.into()];
                    row.extend(std::iter::repeat_n(Cell::Empty, 6));
                    row.push(Cell::text(e.to_string()));
                    vec![row]
                }
                Ok((setup, h)) => {
                    let results: Vec<phasediff::Result<(f64, f64)>> = match &sec.phi0 {
                        Some(list) => list.iter().map(|&p| setup.fisher(p, theta).map(|f| (p, f))).collect(),
                        None => vec![setup.max_fisher(theta).map(|r| (r.phi0, r.f))],
                    };
                    results
                        .into_iter()
                        .map(|r| {
                            let err = error_cell(&r);
                            let (phi0, f) = r.map_or((Cell::Empty, Cell::Empty), |(p, f)| (p.into(), f.into()));
                            let ratio = match &f {
                                Cell::Float(f) if h > 0.0 => Cell::Float(f / h),
                                _ => Cell::Empty,
                            };
                            vec![
                                n.into(),
                                beta.into(),
                                delta.into(),
                                theta.into(),
                                phi0,
                                f,
                                h.into(),
                                ratio,
                                setup.cutoff().into(),
                                setup.tail_mass().into(),
                                err,
                            ]
                        })
                        .collect()
                }
            };
            progress.tick();
            rows
        })
        .collect();
    let mut table = Table::new(vec![
        "N", "beta", "Delta", "theta", "phi0", "F", "H", "F_over_H", "cutoff", "tail_mass", "error",
    ]);
    per_point.into_iter().flatten().for_each(|r| table.push(r));
    Ok(table)
}

pub fn variance_map_cmd(sec: &VarianceMapSection, common: &Common) -> Result<Table, CliError> {
    let pol = policy(common);
    let betas = sec.beta.as_ref().unwrap();
    let n_theta = sec.n_theta.unwrap();
    let thetas: Vec<f64> = (0..n_theta).map(|j| j as f64 * PI / n_theta as f64).collect();
    let mut table = Table::new(vec![
        "record",
        "N",
        "Delta",
        "beta",
        "theta",
        "variance",
        "argmin",
        "delta_star",
        "bracket_lo",
        "bracket_hi",
        "cutoff",
        "tail_mass",
        "error",
    ]);
    let maps: Vec<(f64, f64)> = sec
        .n
        .as_ref()
        .unwrap()
        .iter()
        .flat_map(|&n| sec.delta.as_ref().unwrap().iter().map(move |&d| (n, d)))
        .collect();
    let thresholds = sec.threshold_n.as_ref().unwrap();
    let progress = Progress::new("variance-map", maps.len() + thresholds.len());

    let map_rows: Vec<Vec<Vec<Cell>>> = maps
        .par_iter()
        .map(|&(n, delta)| {
            let result = variance_map(n, delta, betas, &thetas, &pol);
            progress.tick();
            match result {
                Err(e) => vec![vec![
                    Cell::text("map"),
                    n.into(),
                    delta.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::text(e.to_string()),
                ]],
                Ok(map) => {
                    let mut rows = Vec::with_capacity(betas.len() * thetas.len());
                    for (i, &b) in map.betas.iter().enumerate() {
                        for (j, &t) in map.thetas.iter().enumerate() {
                            rows.push(vec![
                                Cell::text("map"),
                                n.into(),
                                delta.into(),
                                b.into(),
                                t.into(),
                                map.values[i][j].into(),
                                Cell::Int(u64::from(map.argmin == (i, j))),
                                Cell::Empty,
                                Cell::Empty,
                                Cell::Empty,
                                map.cutoffs[i].into(),
                                map.tail_masses[i].into(),
                                Cell::Empty,
                            ]);
                        }
                    }
                    rows
                }
            }
        })
        .collect();
    map_rows.into_iter().flatten().for_each(|r| table.push(r));

    let interval = sec.threshold_interval.as_ref().unwrap();
    let tol = sec.threshold_tol.unwrap();
    let threshold_rows: Vec<Vec<Cell>> = thresholds
        .par_iter()
        .map(|&n| {
            let cutoff = [0.0, 1.0]
                .iter()
                .map(|&b| {
                    let p = phasediff::fock::params_from_energy(n, b)?;
                    let c = probe_cutoff(&p, pol.epsilon_tail, pol.hard_limit)?;
                    let tail = phasediff::fock::build_probe(&p, c, pol.epsilon_tail)?.tail_mass();
                    Ok((c, tail))
                })
                .collect::<phasediff::Result<Vec<_>>>()
                .map(|v| v.into_iter().fold((0, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1))));
            let result = noise_threshold(n, (interval[0], interval[1]), tol, &pol);
            progress.tick();
            let (c, tail) = cutoff.map_or((Cell::Empty, Cell::Empty), |(c, t)| (c.into(), t.into()));
            let mut row = vec![Cell::text("threshold"), n.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty];
            match result {
                Ok(t) => {
                    row.extend([t.delta_star.into(), t.lo.into(), t.hi.into(), c, tail, Cell::Empty]);
                }
                Err(e) => {
                    row.extend([Cell::Empty, Cell::Empty, Cell::Empty, c, tail, Cell::text(e.to_string())]);
                }
            }
            row
        })
        .collect();
    threshold_rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn read_records(path: &Path) -> Result<Vec<SweepRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let (columns, rows): (Vec<String>, Vec<Vec<String>>) = if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let columns = doc["columns"]
            .as_array()
            .ok_or_else(|| bad("missing columns".into()))?
            .iter()
            .map(|c| c.as_str().unwrap_or_default().to_string())
            .collect();
        let rows = doc["rows"]
            .as_array()
            .ok_or_else(|| bad("missing rows".into()))?
            .iter()
            .map(|r| {
                r.as_array()
                    .map(|cells| {
                        cells
                            .iter()
                            .map(|c| match c {
                                serde_json::Value::Null => String::new(),
                                serde_json::Value::String(s) => s.clone(),
                                other => other.to_string(),
                            })
                            .collect()
                    })
                    .unwrap_or_default()
            })
            .collect();
        (columns, rows)
    } else {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let columns = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        (columns, rows)
    };
    let col = |name: &str| {
        columns.iter().position(|c| c == name).ok_or_else(|| bad(format!("missing column {name}")))
    };
    let idx = [col("N")?, col("Delta")?, col("beta_opt")?, col("H_opt")?, col("xi")?, col("gamma")?];
    let (cutoff, tail, error) = (col("cutoff")?, col("tail_mass")?, col("error")?);
    let num = |s: &str| -> f64 { if s.is_empty() { f64::NAN } else { s.parse().unwrap_or(f64::NAN) } };
    Ok(rows
        .iter()
        .map(|r| SweepRecord {
            n_mean: num(&r[idx[0]]),
            delta: num(&r[idx[1]]),
            beta_opt: num(&r[idx[2]]),
            h_opt: num(&r[idx[3]]),
            xi: num(&r[idx[4]]),
            gamma: num(&r[idx[5]]),
            f_homodyne: None,
            cutoff: r[cutoff].parse().unwrap_or(0),
            tail_mass: num(&r[tail]),
            error: if r[error].is_empty() { None } else { Some(r[error].clone()) },
        })
        .collect())
}

pub fn fit(sec: &FitSection) -> Result<Table, CliError> {
    let records = read_records(sec.input.as_ref().expect("validated"))?;
    eprintln!("[fit] {} records", records.len());
    let fit = fit_gamma(&records)?;
    let used = records.iter().filter(|r| r.is_ok() && r.gamma > 0.0 && r.xi > 0.0);
    let cutoff = used.clone().map(|r| r.cutoff).max().unwrap_or(0);
    let tail = used.map(|r| r.tail_mass).fold(0.0, f64::max);
    let mut table = Table::new(vec!["a", "b", "c", "residual_rms", "n_records", "cutoff", "tail_mass", "error"]);
    table.push(vec![
        fit.a.into(),
        fit.b.into(),
        fit.c.into(),
        fit.residual_rms.into(),
        fit.n_records.into(),
        cutoff.into(),
        tail.into(),
        Cell::Empty,
    ]);
    Ok(table)
}

pub fn crb_mc(sec: &CrbMcSection, common: &Common) -> Result<Table, CliError> {
    let pol = policy(common);
    let (n, beta, delta, theta) = (sec.n.unwrap(), sec.beta.unwrap(), sec.delta.unwrap(), sec.theta.unwrap());
    let probe = spec(n, beta, delta, common)?;
    let phi_true = match sec.phi_true {
        Some(p) => p,
        None => HomodyneSetup::for_probe(&probe, &pol)?.max_fisher(theta)?.phi0,
    };
    let config = MonteCarloConfig {
        samples: sec.samples.unwrap(),
        batches: sec.batches.unwrap(),
        seed: common.seed.expect("resolved"),
    };
    eprintln!("[crb-mc] {} batches of {} outcomes", config.batches, config.samples);
    let r = sample_and_estimate(&probe, phi_true, theta, &config, &pol)?;
    let mut table = Table::new(vec![
        "record",
        "batch",
        "N",
        "beta",
        "Delta",
        "theta",
        "phi_true",
        "phi_hat",
        "variance",
        "variance_se",
        "crb",
        "F",
        "variance_over_crb",
        "cutoff",
        "tail_mass",
        "error",
    ]);
    let head = |record: &str, batch: Cell| -> Vec<Cell> {
        vec![Cell::text(record), batch, n.into(), beta.into(), delta.into(), theta.into(), phi_true.into()]
    };
    for (b, est) in r.estimates.iter().enumerate() {
        let mut row = head("batch", b.into());
        row.extend([(*est).into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
        row.extend([r.cutoff.into(), r.tail_mass.into(), Cell::Empty]);
        table.push(row);
    }
    let mut row = head("summary", Cell::Empty);
    row.extend([
        r.mean.into(),
        r.variance.into(),
        r.variance_se.into(),
        r.crb.into(),
        r.fisher.into(),
        (r.variance / r.crb).into(),
    ]);
    row.extend([r.cutoff.into(), r.tail_mass.into(), Cell::Empty]);
    table.push(row);
    Ok(table)
}
