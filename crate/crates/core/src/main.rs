use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kpa_core::changepoint::{detect, ChangepointReport};
use kpa_core::config::{resolve_seed, RunConfig, SEED_ENV};
use kpa_core::degree::{degree_table, group_slopes};
use kpa_core::estimation::{
    estimate_history, estimate_snapshot, features_from_log, summarize_edge_list, EstimateReport, SnapshotSummary,
};
use kpa_core::graph::GraphState;
use kpa_core::io::{self, canonical_json, fmt_num, render_table};
use kpa_core::model::GroupLabel;
use kpa_core::probability::power_law_exponent;
use kpa_core::selftest::run_selftest;
use kpa_core::simulator::{run_trials, simulate, TrialReport};
use kpa_core::{KpaError, Result};

#[derive(Parser)]
#[command(name = "kpa", version, about = "K-group preferential attachment simulator and estimators")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the canonical JSON report instead of the table.
    #[arg(long, global = true)]
    json: bool,
    /// Also write the canonical JSON report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write its event log.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Also write edges.txt and labels.txt.
        #[arg(long)]
        graph: bool,
    },
    /// History estimates from an event log.
    Estimate {
        /// Run directory or events.csv.
        log: PathBuf,
        #[arg(long)]
        ci_level: Option<f64>,
    },
    /// Homophily estimate from a labeled edge list.
    Snapshot {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Single change point in theta from an event log.
    Changepoint {
        log: PathBuf,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
        /// Write every evaluated (tau, split_loglik) pair as CSV.
        #[arg(long, value_name = "FILE")]
        emit_curve: Option<PathBuf>,
    },
    /// Per-group degree distribution of a simulated run or a labeled edge list.
    Degdist {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, requires = "labels")]
        edges: Option<PathBuf>,
        #[arg(long, requires = "edges")]
        labels: Option<PathBuf>,
        /// Write the histogram as CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Batch of independent seeded simulations with aggregate accuracy.
    Trials {
        #[command(flatten)]
        run: RunArgs,
        /// Run change point detection on every trial.
        #[arg(long)]
        detect: bool,
    },
    /// Fast internal consistency checks.
    Selftest,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat TOML file with run settings; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long = "T", visible_alias = "horizon")]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["collapsed", "mechanistic"])]
    mode: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<u64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    forbid_self_loops: bool,
    #[arg(long = "B", visible_alias = "trials")]
    trials: Option<usize>,
    #[arg(long)]
    ci_level: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    /// Merged configuration and resolved seed.
    fn resolve(&self) -> Result<(RunConfig, u64)> {
        let file = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            theta: self.theta,
            p: self.p.clone(),
            q: self.q,
            n0: self.n0,
            horizon: self.horizon,
            seed: None,
            mode: self.mode.clone(),
            gamma: self.gamma,
            alpha: self.alpha,
            tau: self.tau,
            theta2: self.theta2,
            forbid_self_loops: self.forbid_self_loops.then_some(true),
            trials: self.trials,
            ci_level: self.ci_level,
            c0: self.c0,
            stride: self.stride,
            out: self.out.clone(),
        };
        let env = std::env::var(SEED_ENV).ok();
        let seed = resolve_seed(self.seed, env.as_deref(), file.seed)?;
        Ok((file.overlay(flags), seed))
    }
}

/// What a subcommand hands back for printing.
struct Output {
    json: String,
    table: String,
    ok: bool,
}

impl Output {
    fn new<T: Serialize>(report: &T, table: String) -> Result<Self> {
        Ok(Output { json: canonical_json(report)?, table, ok: true })
    }
}

fn exit_status(e: &KpaError) -> u8 {
    match e {
        KpaError::Io(_) | KpaError::Json(_) => 3,
        KpaError::Singular(_) | KpaError::Estimation(_) | KpaError::Internal(_) => 4,
        _ => 2,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error[E_CONFIG]: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        // fails only if a pool exists already, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = run(&cli).and_then(|out| {
        if let Some(path) = &cli.report {
            fs::write(path, format!("{}\n", out.json))?;
        }
        Ok(out)
    });
    match result {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                print!("{}", out.table);
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e.to_string()));
            ExitCode::from(exit_status(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Simulate { run, graph } => cmd_simulate(run, *graph),
        Command::Estimate { log, ci_level } => cmd_estimate(log, ci_level.unwrap_or(0.95)),
        Command::Snapshot { edges, labels } => cmd_snapshot(edges, labels),
        Command::Changepoint { log, c0, stride, emit_curve } => {
            cmd_changepoint(log, *c0, *stride, emit_curve.as_deref())
        }
        Command::Degdist { run, edges, labels, csv } => {
            cmd_degdist(run, edges.as_deref().zip(labels.as_deref()), csv.as_deref())
        }
        Command::Trials { run, detect } => cmd_trials(run, *detect, cli.jobs),
        Command::Selftest => {
            let report = run_selftest();
            let rows = report
                .checks
                .iter()
                .map(|c| vec![c.name.clone(), if c.passed { "pass" } else { "FAIL" }.into(), c.detail.clone()])
                .collect::<Vec<_>>();
            let mut out = Output::new(&report, render_table(&["check", "result", "detail"], &rows))?;
            out.ok = report.passed;
            Ok(out)
        }
    }
}

fn cmd_simulate(args: &RunArgs, graph: bool) -> Result<Output> {
    let (cfg, seed) = args.resolve()?;
    let params = cfg.model_params()?;
    let sim = cfg.sim_config(seed)?;
    let out_dir = cfg.out.clone().ok_or_else(|| KpaError::Config("missing required setting out".into()))?;
    let (state, log) = simulate(&params, &sim)?;
    io::write_event_log(&out_dir, &log, Some(&sim))?;
    let summary = state.summary();
    fs::write(out_dir.join(io::STATE_FILE), canonical_json(&summary)? + "\n")?;
    if graph {
        write_graph(&out_dir, &state)?;
    }
    let mut rows = vec![
        vec!["T".into(), summary.t.to_string()],
        vec!["nodes".into(), summary.nodes.to_string()],
        vec!["edges".into(), summary.edges.to_string()],
        vec!["same-group edges".into(), summary.same_group_edges.to_string()],
    ];
    for (k, d) in summary.group_degree_totals.iter().enumerate() {
        rows.push(vec![format!("D^{}", k + 1), d.to_string()]);
    }
    Output::new(&summary, render_table(&["quantity", "value"], &rows))
}

/// Node `i` is written as `i`; phantom stubs of the initial nodes are not edges.
fn write_graph(dir: &Path, state: &GraphState) -> Result<()> {
    let mut edges = String::with_capacity(state.edges().len() * 12);
    for (w, u) in state.edges() {
        edges.push_str(&format!("{w} {u}\n"));
    }
    fs::write(dir.join("edges.txt"), edges)?;
    let mut labels = String::new();
    for (i, g) in state.groups().iter().enumerate() {
        labels.push_str(&format!("{i} {g}\n"));
    }
    fs::write(dir.join("labels.txt"), labels)?;
    Ok(())
}

fn estimate_table(r: &EstimateReport) -> String {
    let mut rows = Vec::new();
    let ci = r.ci.as_ref();
    let se = r.se.as_ref();
    let cells = |name: String, est: f64, se: Option<f64>, iv: Option<kpa_core::estimation::Interval>| {
        vec![
            name,
            fmt_num(est),
            se.map_or("-".into(), fmt_num),
            iv.map_or("-".into(), |i| fmt_num(i.lower)),
            iv.map_or("-".into(), |i| fmt_num(i.upper)),
        ]
    };
    rows.push(cells("theta".into(), r.theta_hat, se.map(|s| s.theta), ci.map(|c| c.theta)));
    for (k, &p) in r.p_hat.iter().enumerate() {
        rows.push(cells(format!("p_{}", k + 1), p, se.map(|s| s.p[k]), ci.map(|c| c.p[k])));
    }
    rows.push(cells("q".into(), r.q_hat, se.map(|s| s.q), ci.map(|c| c.q)));
    let mut out = render_table(&["parameter", "estimate", "se", "ci_lower", "ci_upper"], &rows);
    out.push_str(&format!("sample size: {}\n", r.sample_size));
    if !r.flags.is_empty() {
        let flags: Vec<String> = r.flags.iter().map(|f| serde_json::to_value(f).map(|v| v.to_string())).collect::<std::result::Result<_, _>>().unwrap_or_default();
        out.push_str(&format!("flags: {}\n", flags.join(" ").replace('"', "")));
    }
    for w in &r.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

fn cmd_estimate(path: &Path, ci_level: f64) -> Result<Output> {
    let log = io::read_event_log(path)?;
    let report = estimate_history(&log, ci_level)?;
    Output::new(&report, estimate_table(&report))
}

#[derive(Serialize)]
struct SnapshotOutput<'a> {
    summary: &'a SnapshotSummary,
    cross_edges_incident: Vec<u64>,
    group_names: Option<&'a [String]>,
    estimate: &'a EstimateReport,
}

fn cmd_snapshot(edges: &Path, labels: &Path) -> Result<Output> {
    let edge_list = io::parse_edge_list(&fs::read_to_string(edges)?)?;
    let labels = io::parse_labels(&fs::read_to_string(labels)?)?;
    let summary = summarize_edge_list(
        edge_list.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        &labels.labels,
        labels.num_groups,
    )?;
    let estimate = estimate_snapshot(&summary)?;
    let incident = summary.cross_edges_incident();
    let name = |k: usize| match &labels.group_names {
        Some(names) => names[k].clone(),
        None => (k + 1).to_string(),
    };
    let mut rows: Vec<Vec<String>> = (0..summary.num_groups())
        .map(|k| {
            vec![
                name(k),
                summary.nodes_per_group[k].to_string(),
                summary.degree_totals[k].to_string(),
                summary.same_edges[k].to_string(),
                incident[k].to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        summary.nodes.to_string(),
        summary.degree_totals.iter().sum::<u64>().to_string(),
        summary.same_edges.iter().sum::<u64>().to_string(),
        summary.cross_edges.iter().sum::<u64>().to_string(),
    ]);
    let mut table = render_table(&["group", "nodes", "degree", "same_edges", "cross_edges"], &rows);
    table.push('\n');
    table.push_str(&estimate_table(&estimate));
    let report = SnapshotOutput {
        summary: &summary,
        cross_edges_incident: incident,
        group_names: labels.group_names.as_deref(),
        estimate: &estimate,
    };
    Output::new(&report, table)
}

fn cmd_changepoint(path: &Path, c0: Option<f64>, stride: Option<usize>, curve: Option<&Path>) -> Result<Output> {
    let log = io::read_event_log(path)?;
    let features = features_from_log(&log)?;
    let mut opts = RunConfig { c0, stride, ..Default::default() }.detect_options();
    opts.keep_curve = curve.is_some();
    let mut report: ChangepointReport = detect(&features, &opts)?;
    if let (Some(path), Some(points)) = (curve, report.split_loglik_curve.take()) {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(["tau", "split_loglik"]).map_err(csv_io)?;
        for (tau, ll) in points {
            w.write_record([tau.to_string(), format!("{ll:.10e}")]).map_err(csv_io)?;
        }
        w.flush()?;
    }
    let rows = vec![
        vec!["tau_hat".into(), report.tau_hat.to_string()],
        vec!["theta1_hat".into(), fmt_num(report.theta1_hat)],
        vec!["theta2_hat".into(), fmt_num(report.theta2_hat)],
        vec!["max_split_loglik".into(), fmt_num(report.max_split_loglik)],
        vec!["T".into(), report.horizon.to_string()],
        vec!["search".into(), format!("[{}, {}] stride {}", report.t0, report.horizon - report.t0, report.stride)],
    ];
    Output::new(&report, render_table(&["quantity", "value"], &rows))
}

fn csv_io(e: csv::Error) -> KpaError {
    KpaError::Io(std::io::Error::other(e.to_string()))
}

#[derive(Serialize)]
struct DegdistOutput {
    source: String,
    exponent: Option<f64>,
    slopes: Vec<kpa_core::degree::SlopeFit>,
    rows: Vec<kpa_core::degree::DegreeRow>,
}

fn cmd_degdist(args: &RunArgs, graph: Option<(&Path, &Path)>, csv_path: Option<&Path>) -> Result<Output> {
    let (state, params, source) = match graph {
        Some((edges, labels)) => (load_graph(edges, labels)?, None, format!("{}", edges.display())),
        None => {
            let (cfg, seed) = args.resolve()?;
            let params = cfg.model_params()?;
            let (state, _) = simulate(&params, &cfg.sim_config(seed)?)?;
            (state, Some(params), format!("simulated, seed {seed}"))
        }
    };
    let rows = degree_table(&state, params.as_ref());
    let slopes = group_slopes(&state);
    let exponent = params.as_ref().map(|p| power_law_exponent(p.q)).transpose()?;
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(["group", "degree", "count", "per_step", "expected"]).map_err(csv_io)?;
        for r in &rows {
            let expected = r.expected.map_or(String::new(), |e| format!("{e:.10e}"));
            w.write_record([r.group.to_string(), r.degree.to_string(), r.count.to_string(), format!("{:.10e}", r.per_step), expected])
                .map_err(csv_io)?;
        }
        w.flush()?;
    }
    let table_rows: Vec<Vec<String>> = slopes
        .iter()
        .map(|s| {
            vec![
                s.group.to_string(),
                format!("[{}, {}]", s.d_min, s.d_max),
                s.slope.map_or("-".into(), fmt_num),
                exponent.map_or("-".into(), |e| fmt_num(-e)),
            ]
        })
        .collect();
    let table = render_table(&["group", "degree_range", "loglog_slope", "limit_slope"], &table_rows);
    Output::new(&DegdistOutput { source, exponent, slopes, rows }, table)
}

/// Degree state of a labeled edge list. Node ids are arbitrary strings.
fn load_graph(edges: &Path, labels: &Path) -> Result<GraphState> {
    let edge_list = io::parse_edge_list(&fs::read_to_string(edges)?)?;
    let labels = io::parse_labels(&fs::read_to_string(labels)?)?;
    let mut names: Vec<&String> = labels.labels.keys().collect();
    names.sort();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut degrees = vec![0u64; names.len()];
    for (a, b) in &edge_list {
        for n in [a, b] {
            let i = *index.get(n.as_str()).ok_or_else(|| KpaError::Unlabeled(n.clone()))?;
            degrees[i] += 1;
        }
    }
    let groups: Vec<GroupLabel> = names.iter().map(|n| labels.labels[*n]).collect();
    GraphState::from_degrees(&degrees, &groups, labels.num_groups)
}

fn cmd_trials(args: &RunArgs, detect: bool, jobs: Option<usize>) -> Result<Output> {
    let (cfg, seed) = args.resolve()?;
    let mut trial_cfg = cfg.trial_config(seed, detect)?;
    trial_cfg.jobs = jobs;
    let report: TrialReport = run_trials(&trial_cfg)?;
    let a = &report.aggregate;
    let mut rows = Vec::new();
    let acc = |name: String, x: &kpa_core::simulator::trials::Accuracy| {
        vec![name, fmt_num(x.target), fmt_num(x.mean), fmt_num(x.bias), fmt_num(x.mae), fmt_num(x.mse)]
    };
    for (k, x) in a.degree_share.iter().enumerate() {
        rows.push(acc(format!("D^{}/2T", k + 1), x));
    }
    if let Some(x) = &a.same_group_rate {
        rows.push(acc("S_T/T".into(), x));
    }
    if let Some(h) = &a.theta_history {
        rows.push(acc("theta_hat".into(), &h.accuracy));
    }
    if let Some(x) = &a.theta_snapshot {
        rows.push(acc("theta_tilde".into(), x));
    }
    if let Some(c) = &a.changepoint {
        rows.push(acc("theta1_hat".into(), &c.theta1));
        rows.push(acc("theta2_hat".into(), &c.theta2));
    }
    let mut table = render_table(&["quantity", "target", "mean", "bias", "mae", "mse"], &rows);
    table.push_str(&format!("trials: {}  T: {}  master seed: {}\n", a.trials, a.horizon, seed));
    if let Some(h) = &a.theta_history {
        table.push_str(&format!(
            "ci coverage: {}  studentized variance: {}\n",
            fmt_num(h.coverage),
            fmt_num(h.studentized_variance)
        ));
    }
    if let Some(g) = a.history_snapshot_gap {
        table.push_str(&format!("mean |theta_hat - theta_tilde|: {}\n", fmt_num(g)));
    }
    if let Some(s) = a.deviation_scale {
        table.push_str(&format!("deviation scale: {}\n", fmt_num(s)));
    }
    if let Some(c) = &a.changepoint {
        table.push_str(&format!(
            "tau: true {}  mean {}  relative mae {}  relative mse {}\n",
            c.tau_true,
            fmt_num(c.tau_mean),
            fmt_num(c.relative_mae),
            fmt_num(c.relative_mse)
        ));
    }
    Output::new(&report, table)
}
