use std::fs;
use std::path::{Path, PathBuf};

use qclt_core::counterexample::{
    bounded_sup_estimate, build_truncated_example, divergent_series_estimate, DivergentSeries, ExampleParams,
    InvariantReport, SupEstimate, TruncatedExample,
};
use qclt_core::diagnostics::{
    coboundary_check, combine, conjecture_series, mixing_clt_condition, negligibility_probe, projective_series,
    strong_condition_series, ui_probe, ConditionId, ConditionReport, NegligibilitySpec, Verdict,
};
use qclt_core::export::{ensemble_aggregate, write_ensemble_csv, write_json, write_report_csv};
use qclt_core::kernel::{check_ergodic, ErgodicityReport, KernelFile, MarkovKernel, TransitionTable};
use qclt_core::operator::Observable;
use qclt_core::rng::seed_path;
use qclt_core::simulator::{annealed_ensemble, quenched_ensemble, with_threads, EnsembleSpec, EnsembleSummary};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{exit, CliError};
use crate::manifest::RunManifest;
use crate::{Cli, CounterexampleArgs, DiagnoseArgs, KernelArgs};

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Largest level count accepted by `counterexample` (`N_K = 4096`).
pub const MAX_LEVELS: usize = 6;

const DEFAULT_OUT: &str = "qclt-out";

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, config: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.output_dir().map(Path::to_path_buf)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_json(value, &mut buf)?;
        self.write(name, &buf)
    }

    fn finish(mut self, mut manifest: RunManifest) -> Result<i32, CliError> {
        let code = manifest.exit_code;
        manifest.outputs = std::mem::take(&mut self.written);
        self.json("manifest.json", &manifest)?;
        Ok(code)
    }
}

fn in_pool<T: Send>(threads: Option<usize>, op: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(t) => Ok(with_threads(t, op)?),
        None => Ok(op()),
    }
}

#[derive(Debug, Serialize)]
pub struct KernelInspection {
    pub states: Vec<String>,
    pub ergodicity: ErgodicityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reversible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detailed_balance_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn inspect(kernel: &MarkovKernel) -> KernelInspection {
    let rev = kernel.check_reversible();
    KernelInspection {
        states: kernel.states().to_vec(),
        ergodicity: kernel.check_ergodic(),
        stationary: Some(kernel.stationary().to_vec()),
        reversible: Some(rev.reversible),
        detailed_balance_violation: Some(rev.max_violation),
        error: None,
    }
}

/// Report for rows that form a stochastic table but not an ergodic kernel.
fn inspect_failure(states: Vec<String>, rows: Vec<Vec<f64>>, err: &qclt_core::Error) -> Option<KernelInspection> {
    let table = TransitionTable::new(rows).ok()?;
    Some(KernelInspection {
        states,
        ergodicity: check_ergodic(&table),
        stationary: None,
        reversible: None,
        detailed_balance_violation: None,
        error: Some(err.to_string()),
    })
}

pub fn kernel(cli: &Cli, args: &KernelArgs) -> Result<i32, CliError> {
    let (built, rows, labels, config) = if let Some(path) = &args.file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: KernelFile =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let labels = file.states.iter().map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string)).collect();
        let rows = file.rows.clone();
        (MarkovKernel::from_file(file), Some(rows), labels, None)
    } else {
        let config = load_config(cli)?;
        let rows = config.kernel.rows.clone();
        let labels = config.kernel.states.clone().unwrap_or_default();
        let built = config.build_kernel().map_err(|e| match e {
            CliError::Kernel(inner) => inner,
            other => qclt_core::Error::InvalidArgument(other.to_string()),
        });
        (built, rows, labels, Some(config))
    };
    let (report, result) = match built {
        Ok(k) => (inspect(&k), Ok(exit::SUCCESS)),
        Err(e) => {
            let n = rows.as_ref().map_or(0, Vec::len);
            let labels = if labels.len() == n { labels } else { (0..n).map(|i| i.to_string()).collect() };
            let report = rows.and_then(|r| inspect_failure(labels, r, &e));
            match report {
                Some(r) => (r, Err(CliError::Kernel(e))),
                None => return Err(CliError::Kernel(e)),
            }
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    say!("{text}");
    if cli.out.is_some() || config.as_ref().and_then(|c| c.output_dir()).is_some() {
        let mut out = Output::create(out_dir(cli, config.as_ref()))?;
        out.json("kernel.json", &report)?;
    }
    result
}

#[derive(Debug, Serialize)]
struct EnsembleRecord {
    kind: &'static str,
    start: Option<usize>,
    n: usize,
    count: usize,
    master_seed: u64,
    csv: String,
    json: String,
}

fn write_ensemble(out: &mut Output, name: &str, summary: &EnsembleSummary) -> Result<(String, String), CliError> {
    let mut csv = Vec::new();
    write_ensemble_csv(summary, &mut csv)?;
    let csv_name = format!("{name}.csv");
    let json_name = format!("{name}.json");
    out.write(&csv_name, &csv)?;
    out.json(&json_name, &ensemble_aggregate(summary))?;
    Ok((csv_name, json_name))
}

pub fn simulate(cli: &Cli) -> Result<i32, CliError> {
    let config = load_config(cli)?;
    let sim = config.simulate.clone().ok_or_else(|| CliError::Config("missing [simulate] section".into()))?;
    let kernel = config.build_kernel()?;
    let f = config.build_observable(&kernel)?;
    let starts = sim.starts.clone().unwrap_or_else(|| (0..kernel.len()).collect());
    if let Some(&bad) = starts.iter().find(|&&x| x >= kernel.len()) {
        return Err(CliError::Config(format!("start state {bad} out of range")));
    }
    let mut manifest = RunManifest::new("simulate", config.digest(), config.seed, cli.threads);
    let mut out = Output::create(out_dir(cli, Some(&config)))?;
    let mut records = Vec::new();
    let mut cell = 0u64;
    if sim.quenched {
        for &x in &starts {
            for &n in &sim.n_grid {
                let master = seed_path(config.seed, cell);
                cell += 1;
                let spec = EnsembleSpec::new(n, sim.count, master).with_grid(sim.grid.clone());
                let summary = manifest.time(&format!("quenched x={x} n={n}"), || {
                    in_pool(cli.threads, || quenched_ensemble(&kernel, &f, x, &spec))
                })??;
                let (csv, json) = write_ensemble(&mut out, &format!("quenched_x{x}_n{n}"), &summary)?;
                records.push(EnsembleRecord { kind: "quenched", start: Some(x), n, count: sim.count, master_seed: master, csv, json });
            }
        }
    }
    if sim.annealed {
        for &n in &sim.n_grid {
            let master = seed_path(config.seed, cell);
            cell += 1;
            let spec = EnsembleSpec::new(n, sim.count, master).with_grid(sim.grid.clone());
            let summary = manifest
                .time(&format!("annealed n={n}"), || in_pool(cli.threads, || annealed_ensemble(&kernel, &f, &spec)))??;
            let (csv, json) = write_ensemble(&mut out, &format!("annealed_n{n}"), &summary)?;
            records.push(EnsembleRecord { kind: "annealed", start: None, n, count: sim.count, master_seed: master, csv, json });
        }
    }
    out.json("ensembles.json", &records)?;
    for r in &records {
        let start = r.start.map_or_else(|| "pi".to_string(), |x| x.to_string());
        say!("{} start={start} n={} count={} -> {}", r.kind, r.n, r.count, r.csv);
    }
    out.finish(manifest)
}

fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn run_condition(
    config: &ExperimentConfig,
    kernel: &MarkovKernel,
    f: &Observable,
    id: ConditionId,
) -> Result<Vec<ConditionReport>, CliError> {
    let d = config.diagnose.as_ref().expect("validated");
    let reports = match id {
        ConditionId::NeglClt | ConditionId::NeglFclt => {
            if d.start >= kernel.len() {
                return Err(CliError::Config(format!("diagnose.start {} out of range", d.start)));
            }
            let mut reports = Vec::new();
            for &eps in &d.eps {
                let spec = NegligibilitySpec {
                    m_grid: d.m_grid.clone(),
                    n_grid: d.n_grid.clone(),
                    eps,
                    count: d.count,
                    master_seed: config.seed,
                };
                let (clt, fclt) = negligibility_probe(kernel, f, d.start, &spec)?;
                reports.push(if id == ConditionId::NeglClt { clt } else { fclt });
            }
            reports
        }
        ConditionId::UiFmgf => vec![ui_probe(kernel, f, &d.m_grid, &d.levels)?],
        ConditionId::Strong => vec![strong_condition_series(kernel, f, &d.m_grid, d.j_max)?],
        ConditionId::Coboundary | ConditionId::LqGf => {
            let (cob, lq) = coboundary_check(kernel, f, d.p, conjugate(d.p), &d.m_grid)?;
            vec![if id == ConditionId::Coboundary { cob } else { lq }]
        }
        ConditionId::Projective => vec![projective_series(kernel, f, d.j_max)?],
        ConditionId::ConjDr | ConditionId::ConjKv => {
            let (dr, kv) = conjecture_series(kernel, f, d.j_max)?;
            vec![if id == ConditionId::ConjDr { dr } else { kv }]
        }
        ConditionId::MixingRio => vec![mixing_clt_condition(kernel, f, d.k_max)?],
    };
    Ok(reports)
}

pub fn diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<i32, CliError> {
    let config = load_config(cli)?;
    let ids = config.condition_ids()?;
    let kernel = config.build_kernel()?;
    let f = config.build_observable(&kernel)?;
    let mut manifest = RunManifest::new("diagnose", config.digest(), config.seed, cli.threads);
    let mut out = Output::create(out_dir(cli, Some(&config)))?;
    let mut all = Vec::new();
    for id in ids {
        let reports =
            manifest.time(id.as_str(), || in_pool(cli.threads, || run_condition(&config, &kernel, &f, id)))??;
        let verdict = combine(reports.iter().map(|r| r.verdict));
        manifest.verdicts.insert(id.as_str().to_string(), verdict.to_string());
        for (i, r) in reports.iter().enumerate() {
            let name = if reports.len() == 1 { format!("{id}.json") } else { format!("{id}_eps{i}.json") };
            out.json(&name, r)?;
            for note in &r.notes {
                say!("{id}: note: {note}");
            }
        }
        say!("{id}: {verdict}");
        all.extend(reports);
    }
    out.json("reports.json", &all)?;
    let mut csv = Vec::new();
    write_report_csv(&all, &mut csv)?;
    out.write("reports.csv", &csv)?;
    let overall = combine(all.iter().map(|r| r.verdict));
    say!("overall: {overall}");
    manifest.exit_code = match overall {
        Verdict::Satisfied => exit::SUCCESS,
        Verdict::Violated => exit::VIOLATED,
        Verdict::Inconclusive if args.allow_inconclusive => exit::SUCCESS,
        Verdict::Inconclusive => exit::INCONCLUSIVE,
    };
    out.finish(manifest)
}

#[derive(Debug, Serialize)]
pub struct CounterexampleReport {
    pub example: TruncatedExample,
    pub invariants: InvariantReport,
    pub divergent_series: DivergentSeries,
    /// Running totals of the per-level contributions.
    pub cumulative_by_level: Vec<f64>,
    pub bounded_sup: SupEstimate,
    pub notes: Vec<String>,
}

pub fn counterexample(cli: &Cli, args: &CounterexampleArgs) -> Result<i32, CliError> {
    if !(1..=MAX_LEVELS).contains(&args.levels) {
        return Err(CliError::Config(format!("K = {} outside 1..={MAX_LEVELS}", args.levels)));
    }
    if args.count == 0 {
        return Err(CliError::Config("count must be positive".into()));
    }
    let config = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let seed = cli
        .seed
        .or(config.as_ref().map(|c| c.seed))
        .ok_or_else(|| CliError::Config("a seed is required (--seed or config)".into()))?;
    let digest = {
        let canonical = serde_json::json!({ "command": "counterexample", "k": args.levels, "count": args.count, "seed": seed });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    };
    let mut manifest = RunManifest::new("counterexample", digest, seed, cli.threads);
    let example = build_truncated_example(ExampleParams { rademacher_seed: seed, ..ExampleParams::defaults(args.levels) })?;
    let invariants = manifest.time("invariants", || example.check_invariants());
    let divergent = manifest.time("divergent series", || divergent_series_estimate(&example, example.horizon()))?;
    let sup = manifest
        .time("bounded sup", || in_pool(cli.threads, || bounded_sup_estimate(&example, args.count, seed)))??;
    let cumulative_by_level = divergent
        .per_level
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let report = CounterexampleReport {
        example,
        invariants,
        divergent_series: divergent,
        cumulative_by_level,
        bounded_sup: sup,
        notes: vec![
            "the rotation angle is rational, so the truncated system is not ergodic; \
             values concern the finite sums and expectations only"
                .into(),
        ],
    };
    say!(
        "K={} divergent series {:.6} (lower bound {:.6}); sup estimate {:.6} ± {:.6} (bound {:.6})",
        args.levels,
        report.divergent_series.value,
        report.divergent_series.lower_bound,
        report.bounded_sup.mc_estimate,
        report.bounded_sup.std_error,
        report.bounded_sup.upper_bound
    );
    let mut out = Output::create(out_dir(cli, config.as_ref()))?;
    out.json("counterexample.json", &report)?;
    out.finish(manifest)
}
