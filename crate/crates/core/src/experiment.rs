//! Experiment grids: configuration, execution and result files.
//!
//! A grid runs every `(method, mem_size, seed)` cell. Methods without a
//! memory run once per seed and are recorded with `mem_size = 0`. Output
//! files in the grid's directory:
//!
//! - `results.csv`: one row per run
//! - `aggregate.csv`: mean and sample standard deviation over seeds
//! - `config.echo`: the fully resolved configuration, `key = value`
//! - `matrix_<run>.csv`, `losses_<run>.csv`, `memory_<run>.csv` per run
//!
//! Configuration files are flat `key = value` lines with `#` comments. Keys
//! are the command-line flag names without the leading dashes; a key of the
//! form `<method>.<key>` overrides a setting for one method only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::datasets::{
    load_mnist_dir, mnist_paths, permuted_stream, rotated_stream, split_stream, synthetic_gaussian_stream, PerTask,
    SyntheticConfig, TaskStream,
};
use crate::error::{Error, Result};
use crate::harness::{run_continual, Method, MethodConfig, RunOutput};
use crate::memory::MesMode;
use crate::metrics::{acc_metric, bwt_metric, gem_bwt};

/// Mixed into the run seed so the stream generator and the training
/// generator never share a key.
pub const STREAM_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    PermutedMnist,
    RotatedMnist,
    SplitMnist,
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::PermutedMnist => "pmnist",
            DatasetKind::RotatedMnist => "rmnist",
            DatasetKind::SplitMnist => "split-mnist",
            DatasetKind::Synthetic => "synthetic",
        }
    }

    pub fn needs_mnist(self) -> bool {
        self != DatasetKind::Synthetic
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pmnist" => Ok(DatasetKind::PermutedMnist),
            "rmnist" => Ok(DatasetKind::RotatedMnist),
            "split-mnist" => Ok(DatasetKind::SplitMnist),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(Error::Config(format!(
                "unknown dataset '{other}'; valid: pmnist, rmnist, split-mnist, synthetic"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub dataset: DatasetKind,
    pub mnist_dir: Option<PathBuf>,
    pub tasks: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    pub synthetic: SyntheticConfig,
    pub methods: Vec<Method>,
    pub mem_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Settings shared by every run; `method`, `mem_size` and `seed` are
    /// filled in per cell.
    pub base: MethodConfig,
    pub overrides: BTreeMap<Method, Vec<(String, String)>>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            dataset: DatasetKind::PermutedMnist,
            mnist_dir: None,
            tasks: 5,
            train_per_task: 2000,
            test_per_task: 1000,
            synthetic: SyntheticConfig::default(),
            methods: vec![Method::Maer],
            mem_sizes: vec![100],
            seeds: vec![0],
            base: MethodConfig::default(),
            overrides: BTreeMap::new(),
            out_dir: PathBuf::from("results"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for {key}"))),
    }
}

/// `exact`, `fast`, or `fast:<refresh>`.
pub fn parse_mes_mode(value: &str) -> Result<MesMode> {
    match value.trim() {
        "exact" => Ok(MesMode::Exact),
        "fast" => Ok(MesMode::fast()),
        v => match v.strip_prefix("fast:") {
            Some(r) => Ok(MesMode::Fast {
                refresh: parse("mes-mode", r)?,
            }),
            None => Err(Error::Config(format!("invalid mes-mode '{v}'; use exact, fast or fast:<R>"))),
        },
    }
}

fn mes_mode_name(m: MesMode) -> String {
    match m {
        MesMode::Exact => "exact".into(),
        MesMode::Fast { refresh } => format!("fast:{refresh}"),
    }
}

/// Applies a run-level setting to a method config. Returns `false` for keys
/// that are not run-level.
fn apply_run_key(cfg: &mut MethodConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "epochs" => cfg.epochs = parse(key, value)?,
        "lr" => cfg.lr = parse(key, value)?,
        "batch-size" => cfg.batch_size = parse(key, value)?,
        "replay-batch-size" => cfg.replay_batch_size = parse(key, value)?,
        "mes-mode" => cfg.mes_mode = parse_mes_mode(value)?,
        "hidden-width" => cfg.hidden_width = parse(key, value)?,
        "task-aware-eval" => cfg.task_aware_eval = parse_bool(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parses `key = value` text; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentGrid {
    /// Applies settings in order; later pairs win.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (key, value) in pairs {
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some((method, sub)) = key.split_once('.') {
            let method: Method = method.parse()?;
            let mut probe = self.base.clone();
            if !apply_run_key(&mut probe, sub, value)? {
                return Err(Error::Config(format!("'{sub}' cannot be overridden per method")));
            }
            self.overrides
                .entry(method)
                .or_default()
                .push((sub.to_string(), value.to_string()));
            return Ok(());
        }
        if apply_run_key(&mut self.base, key, value)? {
            return Ok(());
        }
        match key {
            "dataset" => self.dataset = value.parse()?,
            "mnist-dir" => self.mnist_dir = Some(PathBuf::from(value.trim())),
            "tasks" => self.tasks = parse(key, value)?,
            "train-per-task" => self.train_per_task = parse(key, value)?,
            "test-per-task" => self.test_per_task = parse(key, value)?,
            "method" | "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "mem-size" | "mem-sizes" => self.mem_sizes = parse_list(key, value)?,
            "seeds" | "seed" => self.seeds = parse_list(key, value)?,
            "out" => self.out_dir = PathBuf::from(value.trim()),
            "synthetic-dim" => self.synthetic.dim = parse(key, value)?,
            "synthetic-classes-per-task" => self.synthetic.classes_per_task = parse(key, value)?,
            "synthetic-noise" => self.synthetic.noise = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.methods.iter().any(|m| m.uses_memory()) && self.mem_sizes.is_empty() {
            return Err(Error::Config("replay methods need at least one memory size".into()));
        }
        if self.tasks < 2 {
            return Err(Error::Config(format!("need at least 2 tasks, got {}", self.tasks)));
        }
        if self.dataset.needs_mnist() {
            let dir = self
                .mnist_dir
                .as_deref()
                .ok_or_else(|| Error::Config(format!("dataset {} needs --mnist-dir", self.dataset.name())))?;
            mnist_paths(dir)?;
        }
        for m in &self.methods {
            self.run_config(*m, self.mem_sizes.first().copied().unwrap_or(0), 0)?
                .validate()?;
        }
        Ok(())
    }

    /// The resolved settings as `key = value` lines, sorted by key.
    pub fn echo(&self) -> String {
        let list = |v: Vec<String>| v.join(",");
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        map.insert("dataset".into(), self.dataset.name().into());
        if let Some(d) = &self.mnist_dir {
            map.insert("mnist-dir".into(), d.display().to_string());
        }
        map.insert("tasks".into(), self.tasks.to_string());
        map.insert("train-per-task".into(), self.train_per_task.to_string());
        map.insert("test-per-task".into(), self.test_per_task.to_string());
        map.insert("method".into(), list(self.methods.iter().map(|m| m.name().to_string()).collect()));
        map.insert("mem-size".into(), list(self.mem_sizes.iter().map(|m| m.to_string()).collect()));
        map.insert("seeds".into(), list(self.seeds.iter().map(|m| m.to_string()).collect()));
        map.insert("epochs".into(), self.base.epochs.to_string());
        map.insert("lr".into(), format!("{:?}", self.base.lr));
        map.insert("batch-size".into(), self.base.batch_size.to_string());
        map.insert("replay-batch-size".into(), self.base.replay_batch_size.to_string());
        map.insert("mes-mode".into(), mes_mode_name(self.base.mes_mode));
        map.insert("hidden-width".into(), self.base.hidden_width.to_string());
        map.insert("task-aware-eval".into(), self.base.task_aware_eval.to_string());
        if self.dataset == DatasetKind::Synthetic {
            map.insert("synthetic-dim".into(), self.synthetic.dim.to_string());
            map.insert("synthetic-classes-per-task".into(), self.synthetic.classes_per_task.to_string());
            map.insert("synthetic-noise".into(), format!("{:?}", self.synthetic.noise));
        }
        for (m, pairs) in &self.overrides {
            for (k, v) in pairs {
                map.insert(format!("{}.{k}", m.name()), v.clone());
            }
        }
        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn run_config(&self, method: Method, mem_size: usize, seed: u64) -> Result<MethodConfig> {
        let mut cfg = self.base.clone();
        cfg.method = method;
        cfg.mem_size = mem_size;
        cfg.seed = seed;
        if let Some(pairs) = self.overrides.get(&method) {
            for (k, v) in pairs {
                apply_run_key(&mut cfg, k, v)?;
            }
        }
        Ok(cfg)
    }

    /// Builds the task stream for one seed.
    pub fn build_stream(&self, seed: u64, mnist: Option<&MnistPair>) -> Result<TaskStream> {
        let stream_seed = seed ^ STREAM_SEED_SALT;
        let per_task = PerTask::new(self.train_per_task, self.test_per_task);
        match self.dataset {
            DatasetKind::Synthetic => {
                let mut cfg = self.synthetic;
                cfg.tasks = self.tasks;
                cfg.train_per_task = self.train_per_task;
                cfg.test_per_task = self.test_per_task;
                synthetic_gaussian_stream(&cfg, stream_seed)
            }
            kind => {
                let (train, test) = mnist.ok_or_else(|| Error::Config("MNIST data not loaded".into()))?;
                match kind {
                    DatasetKind::PermutedMnist => permuted_stream(train, test, self.tasks, per_task, stream_seed),
                    DatasetKind::RotatedMnist => {
                        Ok(rotated_stream(train, test, self.tasks, per_task, stream_seed)?.0)
                    }
                    _ => split_stream(train, test, self.tasks),
                }
            }
        }
    }

    /// `(method, mem_size)` pairs in execution order.
    pub fn cells(&self) -> Vec<(Method, usize)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m.uses_memory() {
                out.extend(self.mem_sizes.iter().map(|&k| (m, k)));
            } else {
                out.push((m, 0));
            }
        }
        out
    }
}

pub type MnistPair = (crate::datasets::LabeledDataset, crate::datasets::LabeledDataset);

/// One finished grid cell.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub mem_size: usize,
    pub seed: u64,
    pub acc: f64,
    /// `None` when the matrix lacks the lower triangle (joint training).
    pub bwt: Option<f64>,
    pub gem_bwt: Option<f64>,
    pub final_accs: Vec<f64>,
    pub wall_time_s: f64,
    pub output: RunOutput,
}

impl RunRecord {
    pub fn run_id(&self) -> String {
        run_id(self.method, self.mem_size, self.seed)
    }
}

pub fn run_id(method: Method, mem_size: usize, seed: u64) -> String {
    format!("{}_m{}_s{}", method.name(), mem_size, seed)
}

/// Plain decimal with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return "nan".into();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let digits = |v: f64| (5 - v.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{:.*}", digits(x), x);
    // rounding may carry into a new leading digit (0.9999996 -> 1.000000)
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && digits(rounded) != digits(x) {
        format!("{:.*}", digits(rounded), x)
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_atomic(path: &Path, body: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs one cell on a prepared stream.
pub fn run_cell(grid: &ExperimentGrid, stream: &TaskStream, method: Method, mem_size: usize, seed: u64) -> Result<RunRecord> {
    let cfg = grid.run_config(method, mem_size, seed)?;
    let start = Instant::now();
    let output = run_continual(stream, &cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        method,
        mem_size,
        seed,
        acc: acc_metric(&output.matrix)?,
        bwt: bwt_metric(&output.matrix).ok(),
        gem_bwt: gem_bwt(&output.matrix).ok(),
        final_accs: output.matrix.final_row()?,
        wall_time_s,
        output,
    })
}

fn results_header(tasks: usize) -> String {
    let mut h = String::from("method,mem_size,seed,acc,bwt,gem_bwt");
    for j in 0..tasks {
        let _ = write!(h, ",final_acc_{j}");
    }
    h.push_str(",wall_time_s\n");
    h
}

fn results_row(r: &RunRecord) -> String {
    let mut line = format!(
        "{},{},{},{},{},{}",
        r.method.name(),
        r.mem_size,
        r.seed,
        format_sig6(r.acc),
        opt(r.bwt),
        opt(r.gem_bwt)
    );
    for a in &r.final_accs {
        line.push(',');
        line.push_str(&format_sig6(*a));
    }
    let _ = writeln!(line, ",{}", format_sig6(r.wall_time_s));
    line
}

fn losses_csv(out: &RunOutput) -> String {
    let mut s = String::from("task,epoch,ce_current,ce_replay,distill,total\n");
    for l in &out.losses {
        let f = |v: f64| if v.is_nan() { String::new() } else { format_sig6(v) };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            l.task,
            l.epoch,
            f(l.ce_current),
            f(l.ce_replay),
            f(l.distill),
            f(l.total)
        );
    }
    s
}

pub const AGGREGATE_HEADER: &str =
    "method,mem_size,runs,acc_mean,acc_std,bwt_mean,bwt_std,gem_bwt_mean,gem_bwt_std\n";

fn aggregate_csv(records: &[RunRecord]) -> String {
    let mut groups: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.name().to_string(), r.mem_size)).or_default().push(r);
    }
    let mut s = String::from(AGGREGATE_HEADER);
    for ((method, mem), runs) in groups {
        let accs: Vec<f64> = runs.iter().map(|r| r.acc).collect();
        let (am, asd) = mean_std(&accs);
        let pair = |vals: Option<Vec<f64>>| match vals {
            Some(v) => {
                let (m, sd) = mean_std(&v);
                (format_sig6(m), format_sig6(sd))
            }
            None => (String::new(), String::new()),
        };
        let (bm, bsd) = pair(runs.iter().map(|r| r.bwt).collect());
        let (gm, gsd) = pair(runs.iter().map(|r| r.gem_bwt).collect());
        let _ = writeln!(
            s,
            "{method},{mem},{},{},{},{bm},{bsd},{gm},{gsd}",
            runs.len(),
            format_sig6(am),
            format_sig6(asd)
        );
    }
    s
}

/// Executes the whole grid and writes every output file.
///
/// Missing dataset files or bad settings fail before any training starts.
pub fn run_grid(grid: &ExperimentGrid) -> Result<Vec<RunRecord>> {
    grid.validate()?;
    let mnist = match (grid.dataset.needs_mnist(), &grid.mnist_dir) {
        (true, Some(dir)) => Some(load_mnist_dir(dir)?),
        _ => None,
    };
    let out = &grid.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join("config.echo"), &grid.echo())?;

    let mut records = Vec::new();
    for &seed in &grid.seeds {
        let stream = grid.build_stream(seed, mnist.as_ref())?;
        for (method, mem_size) in grid.cells() {
            let rec = run_cell(grid, &stream, method, mem_size, seed)?;
            let id = rec.run_id();
            write_atomic(&out.join(format!("matrix_{id}.csv")), &rec.output.matrix.to_csv())?;
            write_atomic(&out.join(format!("losses_{id}.csv")), &losses_csv(&rec.output))?;
            if method.uses_memory() {
                rec.output.memory.dump_csv(out.join(format!("memory_{id}.csv")))?;
            }
            records.push(rec);
        }
    }

    let mut results = results_header(grid.tasks);
    records.iter().for_each(|r| results.push_str(&results_row(r)));
    write_atomic(&out.join("results.csv"), &results)?;
    write_atomic(&out.join("aggregate.csv"), &aggregate_csv(&records))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub mem_size: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
}

pub fn read_aggregate(results_dir: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    let dir = results_dir.as_ref();
    let path = dir.join("aggregate.csv");
    if !path.is_file() {
        return Err(Error::NoResults(dir.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(AggregateRow {
            method: field(0).to_string(),
            mem_size: parse("mem_size", field(1))?,
            acc_mean: parse("acc_mean", field(3))?,
            acc_std: parse("acc_std", field(4))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::NoResults(dir.to_path_buf()));
    }
    Ok(rows)
}

/// Methods × memory sizes table of `mean ± std` ACC in percent.
///
/// Rows are sorted by method name, columns by memory size (`-` for methods
/// without memory); the best mean in each column carries a `*`.
pub fn summarize(results_dir: impl AsRef<Path>) -> Result<String> {
    let rows = read_aggregate(results_dir)?;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.mem_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();

    let best: BTreeMap<usize, f64> = sizes
        .iter()
        .map(|&k| {
            let b = rows
                .iter()
                .filter(|r| r.mem_size == k)
                .map(|r| r.acc_mean)
                .fold(f64::NEG_INFINITY, f64::max);
            (k, b)
        })
        .collect();

    let mut table: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["method".to_string()];
    header.extend(sizes.iter().map(|&k| if k == 0 { "-".to_string() } else { k.to_string() }));
    table.push(header);
    for m in &methods {
        let mut line = vec![m.to_string()];
        for &k in &sizes {
            let cell = rows
                .iter()
                .find(|r| r.method == *m && r.mem_size == k)
                .map(|r| {
                    let star = if r.acc_mean == best[&k] { "*" } else { "" };
                    format!("{:.2} ± {:.2}{star}", 100.0 * r.acc_mean, 100.0 * r.acc_std)
                })
                .unwrap_or_default();
            line.push(cell);
        }
        table.push(line);
    }

    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
        }
    }
    Ok(out)
}
