//! The four subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use fel_core::io::{load_curves, save_curves, series_to_curves, CurveTable};
use fel_core::kernel_smoothing::Window;
use fel_core::report::{coverage_table_csv, coverage_toml, to_toml, write_csv};
use fel_core::simulation::{
    replication_rng, run_coverage_study, run_coverage_study_with_threads, simulate_partially_linear, simulation_grid,
    CoverageReport, SimConfig,
};
use fel_core::{
    Error, FunctionalDataset, IntervalMethod, PlmConfig, PlmInference, PointwiseInference, Result, Smoother,
    SmootherConfig,
};

use crate::settings::{
    fitted_values, load_scenarios, parse_alpha, parse_bandwidth, parse_kernel, parse_list, parse_methods, parse_search,
    parse_semimetric, read_series,
};
use crate::{CoverageArgs, DataArgs, FitArgs, IntervalArgs, ModelArgs, OutputArgs, SimulateArgs};

pub enum Status {
    Clean,
    Skipped(usize),
    Failed(usize),
}

fn status(skipped: usize, failed: usize, output: &OutputArgs) -> Status {
    if failed > 0 {
        Status::Failed(failed)
    } else if skipped > 0 && !output.allow_skips {
        Status::Skipped(skipped)
    } else {
        Status::Clean
    }
}

fn is_skip(e: &Error) -> bool {
    matches!(e, Error::EmptyNeighborhood { .. } | Error::InsufficientSupport { .. })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn table_path(out: &Path, suffix: Option<usize>) -> PathBuf {
    match suffix {
        None => out.with_extension("csv"),
        Some(k) => {
            let stem = out
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.with_file_name(format!("{stem}-{k}.csv"))
        }
    }
}

#[derive(Serialize)]
struct Source {
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    series: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    n_train: usize,
    n_query: usize,
}

struct Prepared {
    train: FunctionalDataset,
    queries: CurveTable,
    source: Source,
}

fn split(table: &CurveTable, train: usize, test: Option<usize>) -> Result<(CurveTable, CurveTable)> {
    let n = table.len();
    if train == 0 || train >= n {
        return Err(Error::InvalidConfig(format!(
            "training size {train} leaves no query rows among {n}"
        )));
    }
    let end = test.map_or(n, |t| (train + t).min(n));
    let tr: Vec<usize> = (0..train).collect();
    let te: Vec<usize> = (train..end).collect();
    Ok((table.subset(&tr), table.subset(&te)))
}

fn prepare(args: &DataArgs) -> Result<Prepared> {
    let show = |p: &Path| p.display().to_string();
    if let Some(series_path) = &args.series {
        let series = read_series(series_path)?;
        let ds = series_to_curves(&series, args.window, args.horizon, args.stride)?;
        let table = CurveTable::from_dataset(&ds);
        let test = args.test_size.unwrap_or(1);
        if test == 0 || test >= table.len() {
            return Err(Error::InvalidConfig(format!(
                "{test} query windows out of {} leaves no training data",
                table.len()
            )));
        }
        let (train, queries) = split(&table, table.len() - test, Some(test))?;
        let train = train.dataset()?;
        return Ok(Prepared {
            source: Source {
                data: None,
                query: None,
                series: Some(show(series_path)),
                window: Some(args.window),
                horizon: Some(args.horizon),
                stride: Some(args.stride),
                n_train: train.len(),
                n_query: queries.len(),
            },
            train,
            queries,
        });
    }
    let data_path = args
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("one of --data or --series is required".into()))?;
    let table = load_curves(data_path)?;
    let (train, queries) = match &args.query {
        Some(q) => (table.dataset()?, load_curves(q)?),
        None => {
            let (tr, te) = split(&table, args.train_size, args.test_size)?;
            (tr.dataset()?, te)
        }
    };
    Ok(Prepared {
        source: Source {
            data: Some(show(data_path)),
            query: args.query.as_deref().map(show),
            series: None,
            window: None,
            horizon: None,
            stride: None,
            n_train: train.len(),
            n_query: queries.len(),
        },
        train,
        queries,
    })
}

fn smoother_config(m: &ModelArgs) -> Result<SmootherConfig> {
    let cfg = SmootherConfig::new(
        parse_kernel(&m.kernel)?,
        parse_semimetric(&m.semimetric)?,
        parse_bandwidth(&m.bandwidth)?,
    )
    .with_fitted_values(fitted_values(m.loo_fits));
    cfg.validate()?;
    Ok(cfg)
}

enum Model<'a> {
    Plain(PointwiseInference<'a>),
    Plm(PlmInference<'a>),
}

impl<'a> Model<'a> {
    fn fit(train: &'a FunctionalDataset, m: &ModelArgs) -> Result<Self> {
        let cfg = smoother_config(m)?;
        if m.plm {
            if train.linear_covariates().is_none() {
                return Err(Error::MissingColumn("z1".into()));
            }
            return Ok(Model::Plm(PlmInference::new(train, &PlmConfig::new(cfg))?));
        }
        let smoother = Smoother::fit(train, &cfg)?;
        Ok(Model::Plain(PointwiseInference::new(
            smoother,
            train.responses().to_vec(),
        )?))
    }

    fn engine(&self) -> &PointwiseInference<'a> {
        match self {
            Model::Plain(e) => e,
            Model::Plm(p) => p.engine(),
        }
    }

    fn beta_hat(&self) -> Option<Vec<f64>> {
        match self {
            Model::Plain(_) => None,
            Model::Plm(p) => Some(p.fit().beta_hat.clone()),
        }
    }

    /// `zᵀβ̂` for query row `i`, when the model and the queries have
    /// covariates.
    fn linear_part(&self, queries: &CurveTable, i: usize) -> Result<Option<f64>> {
        match (self, &queries.covariates) {
            (Model::Plm(p), Some(z)) => {
                let row: Vec<f64> = z.row(i).iter().copied().collect();
                p.linear_part(&row).map(Some)
            }
            _ => Ok(None),
        }
    }
}

#[derive(Serialize)]
struct ModelConfig {
    semimetric: String,
    kernel: String,
    bandwidth_rule: String,
    window: Window,
    fitted_values: String,
    plm: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma2_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    methods: Vec<IntervalMethod>,
}

impl ModelConfig {
    fn new(m: &ModelArgs, model: &Model<'_>) -> Self {
        let engine = model.engine();
        Self {
            semimetric: m.semimetric.clone(),
            kernel: m.kernel.clone(),
            bandwidth_rule: m.bandwidth.clone(),
            window: engine.smoother().window(),
            fitted_values: if m.loo_fits { "leave_one_out" } else { "self_inclusive" }.into(),
            plm: m.plm,
            beta_hat: model.beta_hat(),
            sigma2_hat: engine.residual_variance().ok().map(|v| v.sigma2),
            alpha: None,
            methods: Vec::new(),
        }
    }
}

#[derive(Serialize, Default)]
struct QueryRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    linear_part: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    skipped: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    failed: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    intervals: BTreeMap<String, [f64; 2]>,
    /// Intervals for `zᵀβ + r(x)`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    shifted: BTreeMap<String, [f64; 2]>,
}

#[derive(Serialize, Default, Clone, Copy)]
struct MethodBlock {
    n_intervals: usize,
    n_skipped: usize,
    n_failed: usize,
    avg_length: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'static str,
    source: &'a Source,
    config: &'a ModelConfig,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    methods: BTreeMap<String, MethodBlock>,
    queries: &'a [QueryRecord],
}

fn observed(queries: &CurveTable, i: usize) -> Option<f64> {
    queries.responses.as_ref().map(|y| y[i])
}

fn emit(
    output: &OutputArgs,
    report: &RunReport<'_>,
    header: Vec<String>,
    mut rows: Vec<(f64, Vec<String>)>,
) -> Result<()> {
    let Some(out) = &output.out else {
        return Ok(());
    };
    write_file(out, &to_toml(report)?)?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<Vec<String>> = rows.into_iter().map(|(_, r)| r).collect();
    let path = table_path(out, None);
    let file = std::fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(file, &header, &rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn fit(args: &FitArgs) -> Result<Status> {
    let prep = prepare(&args.data)?;
    let model = Model::fit(&prep.train, &args.model)?;
    let engine = model.engine();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = 0;
    println!("id\testimate");
    for (i, x0) in prep.queries.curves.iter().enumerate() {
        let id = prep.queries.ids[i].clone();
        let mut rec = QueryRecord {
            id: id.clone(),
            observed: observed(&prep.queries, i),
            linear_part: model.linear_part(&prep.queries, i)?,
            ..Default::default()
        };
        match engine.query(x0) {
            Ok(q) => {
                let est = q.estimate + rec.linear_part.unwrap_or(0.0);
                println!("{id}\t{est}");
                rec.estimate = Some(est);
                rows.push((est, vec![id, est.to_string(), opt(rec.observed)]));
            }
            Err(e) if is_skip(&e) => {
                println!("{id}\tskipped: {e}");
                rec.skipped.insert("estimate".into(), e.to_string());
                skipped += 1;
                rows.push((f64::INFINITY, vec![id, String::new(), opt(rec.observed)]));
            }
            Err(e) => return Err(e),
        }
        records.push(rec);
    }
    let config = ModelConfig::new(&args.model, &model);
    let report = RunReport {
        command: "fit",
        source: &prep.source,
        config: &config,
        methods: BTreeMap::new(),
        queries: &records,
    };
    let header = ["id", "estimate", "observed"].map(String::from).to_vec();
    emit(&args.output, &report, header, rows)?;
    Ok(status(skipped, 0, &args.output))
}

pub fn interval(args: &IntervalArgs) -> Result<Status> {
    let alpha = parse_alpha(args.alpha)?;
    let methods = parse_methods(&args.methods)?;
    let prep = prepare(&args.data)?;
    let model = Model::fit(&prep.train, &args.model)?;
    let engine = model.engine();

    let mut blocks: BTreeMap<String, MethodBlock> = methods
        .iter()
        .map(|m| (m.name().to_string(), MethodBlock::default()))
        .collect();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let (mut skipped, mut failed) = (0, 0);
    println!("id\tmethod\testimate\tlo\thi");
    for (i, x0) in prep.queries.curves.iter().enumerate() {
        let id = prep.queries.ids[i].clone();
        let shift = model.linear_part(&prep.queries, i)?;
        let mut rec = QueryRecord {
            id: id.clone(),
            observed: observed(&prep.queries, i),
            linear_part: shift,
            ..Default::default()
        };
        let results = match engine.intervals(x0, &methods, alpha) {
            Ok(r) => {
                rec.estimate = engine.query(x0).ok().map(|q| q.estimate);
                r
            }
            Err(e) if is_skip(&e) => methods.iter().map(|_| Err(e.clone())).collect(),
            Err(e) => return Err(e),
        };
        let mut row = vec![id.clone(), String::new(), opt(rec.observed)];
        for (m, r) in methods.iter().zip(results) {
            let name = m.name().to_string();
            let block = blocks.get_mut(&name).expect("block per method");
            match r {
                Ok(iv) => {
                    println!("{id}\t{name}\t{}\t{}\t{}", iv.estimate, iv.lo, iv.hi);
                    block.n_intervals += 1;
                    block.avg_length += iv.length();
                    rec.intervals.insert(name.clone(), [iv.lo, iv.hi]);
                    let (lo, hi) = match shift {
                        Some(s) => {
                            rec.shifted.insert(name, [iv.lo + s, iv.hi + s]);
                            (iv.lo + s, iv.hi + s)
                        }
                        None => (iv.lo, iv.hi),
                    };
                    row.push(lo.to_string());
                    row.push(hi.to_string());
                }
                Err(e) => {
                    println!("{id}\t{name}\tskipped: {e}");
                    if is_skip(&e) {
                        block.n_skipped += 1;
                        skipped += 1;
                        rec.skipped.insert(name, e.to_string());
                    } else {
                        block.n_failed += 1;
                        failed += 1;
                        rec.failed.insert(name, e.to_string());
                    }
                    row.extend([String::new(), String::new()]);
                }
            }
        }
        let est = rec.estimate.map(|e| e + shift.unwrap_or(0.0));
        row[1] = opt(est);
        rows.push((est.unwrap_or(f64::INFINITY), row));
        records.push(rec);
    }
    for b in blocks.values_mut() {
        if b.n_intervals > 0 {
            b.avg_length /= b.n_intervals as f64;
        }
    }
    let mut config = ModelConfig::new(&args.model, &model);
    config.alpha = Some(alpha);
    config.methods = methods.clone();
    let report = RunReport {
        command: "interval",
        source: &prep.source,
        config: &config,
        methods: blocks,
        queries: &records,
    };
    let mut header = ["id", "estimate", "observed"].map(String::from).to_vec();
    for m in &methods {
        header.push(format!("{m}_lo"));
        header.push(format!("{m}_hi"));
    }
    emit(&args.output, &report, header, rows)?;
    Ok(status(skipped, failed, &args.output))
}

pub fn simulate(args: &SimulateArgs) -> Result<Status> {
    if args.n == 0 || args.sigma2.is_nan() || args.sigma2 <= 0.0 {
        return Err(Error::InvalidConfig("need n >= 1 and sigma2 > 0".into()));
    }
    let beta = match &args.beta {
        Some(b) => parse_list(b)?,
        None => Vec::new(),
    };
    let grid = simulation_grid(args.grid_points)?;
    let mut rng = replication_rng(args.seed, 0);
    let sim = simulate_partially_linear(&grid, args.n, args.sigma2, &beta, &mut rng)?;
    save_curves(&CurveTable::from_dataset(&sim.dataset), &args.out)?;
    println!(
        "wrote {} curves on {} grid points to {}",
        args.n,
        args.grid_points,
        args.out.display()
    );
    Ok(Status::Clean)
}

fn threads(arg: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = arg {
        return Ok(Some(t));
    }
    match std::env::var("FEL_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .map(Some)
            .ok_or_else(|| Error::InvalidConfig(format!("FEL_THREADS={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn print_summary(r: &CoverageReport) {
    println!(
        "scenario n={} sigma2={} reps={} test={} bandwidth={}",
        r.scenario.n, r.scenario.sigma2, r.scenario.n_reps, r.scenario.n_test, r.scenario.bandwidth_rule
    );
    println!("method\tcoverage\tavg_length\tn_intervals\tn_skipped\tn_failed");
    for m in &r.methods {
        println!(
            "{}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            m.method, m.coverage, m.avg_length, m.n_intervals, m.n_skipped, m.n_failed
        );
    }
}

pub fn coverage(args: &CoverageArgs) -> Result<Status> {
    let base = SimConfig {
        n: args.n,
        sigma2: args.sigma2,
        n_reps: args.reps,
        n_test: args.test,
        grid_points: args.grid_points,
        seed: args.seed,
        alpha: parse_alpha(args.alpha)?,
        methods: parse_methods(&args.methods)?,
        bandwidth_search: parse_search(&args.bandwidth)?,
        fitted_values: fitted_values(args.loo_fits),
        ..SimConfig::default()
    };
    let configs = match &args.config {
        Some(path) => load_scenarios(path, &base)?,
        None => {
            base.validate()?;
            vec![base]
        }
    };
    let workers = threads(args.threads)?;
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let r = match workers {
            Some(t) => run_coverage_study_with_threads(cfg, t)?,
            None => run_coverage_study(cfg)?,
        };
        print_summary(&r);
        reports.push(r);
    }
    if let Some(out) = &args.output.out {
        write_file(out, &coverage_toml(&reports)?)?;
        let multi = reports.len() > 1;
        for (k, r) in reports.iter().enumerate() {
            write_file(&table_path(out, multi.then_some(k + 1)), &coverage_table_csv(r)?)?;
        }
    }
    let skipped = reports.iter().map(|r| r.total_skipped()).sum();
    let failed = reports.iter().flat_map(|r| r.methods.iter()).map(|m| m.n_failed).sum();
    Ok(status(skipped, failed, &args.output))
}
