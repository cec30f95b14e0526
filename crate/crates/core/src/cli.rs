//! The `polarq` command line.
//!
//! Every command writes `<out>/<command>.csv`, `<out>/<command>.json` and
//! `<out>/<command>.manifest.json`. Worker count comes from `--threads`,
//! else `POLARQ_THREADS`, else all cores; results do not depend on it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{self, SweepConfig, SweepPoint, TABLE_REFERENCE_DB};
use crate::channel::TestChannel;
use crate::error::{Error, Result};
use crate::io::{self, Cell, Format, Persist, RunManifest, Table};
use crate::lattice::{default_eta, flatness_factor, DEFAULT_FLATNESS, DEFAULT_LEVELS};
use crate::nested::{self, NestedConfig, NestedSpec, Scheme, GP_POWER_BACKOFF};
use crate::polar::{Allocation, CodeSpec, ConstructionConfig, FrozenChoice, Thresholds};
use crate::quantizer::{self, EncodeRule, Quantizer};

#[derive(Debug, Parser, Serialize)]
#[command(name = "polarq", version, about = "Polar lattice quantization and nested lattice coding")]
pub struct Cli {
    /// Directory for result files and manifests.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; overrides POLARQ_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
    /// Arguments as given, minus the program name and `--threads`.
    #[arg(skip)]
    #[serde(skip)]
    pub argv: Vec<String>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Build a quantizer code and save it.
    Construct(ConstructArgs),
    /// Encode Gaussian blocks with a saved or freshly built code.
    Quantize(QuantizeArgs),
    /// Rate-distortion sweep over distortion targets or rates and block lengths.
    RdSweep(SweepArgs),
    /// Wyner-Ziv simulation.
    WzSim(WzArgs),
    /// Gelfand-Pinsker simulation.
    GpSim(GpArgs),
    /// Flatness factor, and optionally the source density distance of a test channel.
    Flatness(FlatnessArgs),
    /// Optimal scalar quantizers.
    LloydMax(LloydArgs),
    /// Exhaustive small-block check of one level channel.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum AllocationKind {
    Thresholds,
    PerLevel,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum RuleKind {
    Standard,
    SampleAll,
    MapInformation,
}

impl From<RuleKind> for EncodeRule {
    fn from(r: RuleKind) -> Self {
        match r {
            RuleKind::Standard => EncodeRule::Standard,
            RuleKind::SampleAll => EncodeRule::SampleAll,
            RuleKind::MapInformation => EncodeRule::MapInformation,
        }
    }
}

/// Code construction settings shared by the quantizer commands.
#[derive(Clone, Debug, Args, Serialize)]
pub struct CodeArgs {
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    pub levels: usize,
    #[arg(long, default_value_t = DEFAULT_FLATNESS)]
    pub flatness: f64,
    /// Monte Carlo trials for the Bhattacharyya estimates.
    #[arg(long, default_value_t = 2000)]
    pub construction_trials: usize,
    #[arg(long, default_value_t = 1)]
    pub construction_seed: u64,
    #[arg(long, value_enum, default_value = "thresholds")]
    pub allocation: AllocationKind,
    /// Rate backoff per level for `per-level` allocation.
    #[arg(long, default_value_t = 0.02)]
    pub backoff: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub shaping_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    pub frozen_threshold: f64,
    /// Set frozen bits to zero instead of shared random values.
    #[arg(long)]
    pub zero_frozen: bool,
    #[arg(long, default_value_t = 1)]
    pub frozen_seed: u64,
    /// Construct on this many equiprobable observation bins.
    #[arg(long)]
    pub bins: Option<usize>,
}

impl CodeArgs {
    fn config(&self, n: usize) -> ConstructionConfig {
        ConstructionConfig {
            n,
            trials: self.construction_trials,
            seed: self.construction_seed,
            allocation: match self.allocation {
                AllocationKind::Thresholds => Allocation::Thresholds,
                AllocationKind::PerLevel => Allocation::PerLevel { backoff: self.backoff },
            },
            frozen: if self.zero_frozen { FrozenChoice::Zero } else { FrozenChoice::Random { seed: self.frozen_seed } },
            bins: self.bins,
            thresholds: Thresholds { shaping: self.shaping_threshold, frozen: self.frozen_threshold },
        }
    }
}

/// One design point.
#[derive(Clone, Debug, Args, Serialize)]
pub struct PointArgs {
    #[arg(long, default_value_t = 3.0)]
    pub sigma_s: f64,
    /// Target distortion.
    #[arg(long, conflicts_with = "rate")]
    pub delta: Option<f64>,
    /// Design rate in bits; sets the target distortion to `sigma_s^2 / 4^rate`.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
}

impl PointArgs {
    fn delta(&self) -> Result<f64> {
        match (self.delta, self.rate) {
            (Some(d), _) => Ok(d),
            (None, Some(r)) => Ok(design_delta(self.sigma_s, r)),
            (None, None) => Err(Error::Domain("--delta or --rate is required".into())),
        }
    }
}

/// Target distortion of a design rate.
pub fn design_delta(sigma_s: f64, rate: f64) -> f64 {
    sigma_s * sigma_s / 4f64.powf(rate)
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ConstructArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub code: CodeArgs,
    /// Spec file; defaults to `<out>/spec.json`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct QuantizeArgs {
    /// Saved spec; without it a code is built from the design flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub code: CodeArgs,
    /// Source blocks.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "standard")]
    pub rule: RuleKind,
    /// Write the bitstream of the first block here.
    #[arg(long)]
    pub bitstream: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 3.0)]
    pub sigma_s: f64,
    /// Distortion targets: `start:stop:count` or a comma list.
    #[arg(long, conflicts_with = "rate")]
    pub delta: Option<String>,
    /// Design rates as a comma list; also writes a rate table.
    #[arg(long)]
    pub rate: Option<String>,
    /// Block lengths as a comma list.
    #[arg(long, default_value = "1024")]
    pub n: String,
    /// Source blocks per point.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "standard")]
    pub rule: RuleKind,
    #[command(flatten)]
    pub code: CodeArgs,
}

/// Nested construction settings.
#[derive(Clone, Debug, Args, Serialize)]
pub struct NestedArgs {
    #[arg(long, default_value_t = 4096)]
    pub n: usize,
    /// Simulated blocks.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo trials for the Bhattacharyya estimates; defaults to the scheme preset.
    #[arg(long)]
    pub construction_trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub construction_seed: u64,
    #[arg(long)]
    pub shaping_threshold: Option<f64>,
    #[arg(long)]
    pub frozen_threshold: Option<f64>,
    /// Error budget of the channel-code information set.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Write the nested spec here.
    #[arg(long)]
    pub save_spec: Option<PathBuf>,
}

impl NestedArgs {
    fn apply(&self, mut cfg: NestedConfig) -> NestedConfig {
        cfg.seed = self.construction_seed;
        if let Some(t) = self.construction_trials {
            cfg.trials = t;
        }
        if let Some(v) = self.shaping_threshold {
            cfg.quantization.shaping = v;
        }
        if let Some(v) = self.frozen_threshold {
            cfg.quantization.frozen = v;
        }
        if let Some(v) = self.budget {
            cfg.channel.budget = v;
        }
        cfg
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct WzArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma_y2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_z2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[command(flatten)]
    pub nested: NestedArgs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GpArgs {
    /// Power limit.
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_z2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_i2: f64,
    /// Power the code is designed for; defaults to a fixed fraction of the limit.
    #[arg(long)]
    pub design_power: Option<f64>,
    #[command(flatten)]
    pub nested: NestedArgs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct FlatnessArgs {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// With `--delta`, also measure the source density distance of this test channel.
    #[arg(long, requires = "delta")]
    pub sigma_s: Option<f64>,
    #[arg(long, requires = "sigma_s")]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    pub levels: usize,
    #[arg(long, default_value_t = DEFAULT_FLATNESS)]
    pub flatness: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct LloydArgs {
    /// Rates in bits as a comma list.
    #[arg(long, default_value = "1,2,3")]
    pub rate: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_s: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 3.0)]
    pub sigma_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Lower-level residue of each position as a comma list; zeros by default.
    #[arg(long)]
    pub cosets: Option<String>,
    /// Rate target for the index sets.
    #[arg(long, default_value_t = 0.5)]
    pub rate_target: f64,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    pub levels: usize,
    #[arg(long, default_value_t = DEFAULT_FLATNESS)]
    pub flatness: f64,
    /// Write the oracle tables as a versioned golden file.
    #[arg(long)]
    pub golden: Option<PathBuf>,
}

impl Persist for baselines::OracleTables {
    const SCHEMA: &'static str = "polarq/oracle-tables/1";
}

/// Parses `start:stop:count` (inclusive, evenly spaced) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Domain(format!("cannot parse {what:?} in grid {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(t));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (a, b) = (num(parts[0])?, num(parts[1])?);
            let k: usize = parts[2].trim().parse().map_err(|_| bad(parts[2]))?;
            match k {
                0 => Err(bad(parts[2])),
                1 => Ok(vec![a]),
                _ => Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()),
            }
        }
        _ => Err(bad(s)),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Domain(format!("cannot parse {t:?} in list {s:?}"))))
        .collect()
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let mut cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    cli.argv = replay_args(&args);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("polarq: {e}");
            e.exit_code()
        }
    }
}

fn replay_args(args: &[std::ffi::OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--threads" {
            it.next();
        } else if !a.starts_with("--threads=") {
            out.push(a);
        }
    }
    out
}

/// Re-runs the command recorded in a manifest, optionally into another output directory.
pub fn replay(manifest: &Path, out: Option<&Path>) -> Result<i32> {
    let m = RunManifest::load(manifest)?;
    if m.argv.is_empty() {
        return Err(Error::Domain(format!("{} records no command line", manifest.display())));
    }
    let mut args = vec!["polarq".to_string()];
    let mut it = m.argv.into_iter();
    while let Some(a) = it.next() {
        if out.is_some() && a == "--out" {
            it.next();
        } else if !(out.is_some() && a.starts_with("--out=")) {
            args.push(a);
        }
    }
    if let Some(o) = out {
        args.push("--out".into());
        args.push(o.display().to_string());
    }
    Ok(main_with(args))
}

fn threads(cli: &Cli) -> Result<Option<usize>> {
    if let Some(t) = cli.threads {
        return Ok(Some(t));
    }
    match std::env::var("POLARQ_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Domain(format!("POLARQ_THREADS={v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads(cli)? {
        if t == 0 {
            return Err(Error::Domain("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::Precondition(e.to_string()))?;
    std::fs::create_dir_all(&cli.out)?;
    let out = Output::new(cli)?;
    pool.install(|| dispatch(cli, out))
}

/// Writes the tables of one command and its manifest.
struct Output {
    dir: PathBuf,
    name: &'static str,
    manifest: RunManifest,
    start: Instant,
}

impl Output {
    fn new(cli: &Cli) -> Result<Self> {
        let (name, seed) = match &cli.command {
            Command::Construct(a) => ("construct", a.code.construction_seed),
            Command::Quantize(a) => ("quantize", a.seed),
            Command::RdSweep(a) => ("rd-sweep", a.seed),
            Command::WzSim(a) => ("wz-sim", a.nested.seed),
            Command::GpSim(a) => ("gp-sim", a.nested.seed),
            Command::Flatness(_) => ("flatness", 0),
            Command::LloydMax(_) => ("lloyd-max", 0),
            Command::OracleCheck(_) => ("oracle-check", 0),
        };
        let mut config = serde_json::to_value(&cli.command)?;
        if let serde_json::Value::Object(m) = &mut config {
            m.insert("out".into(), serde_json::to_value(&cli.out)?);
        }
        let mut manifest = RunManifest::new(name, config, seed);
        manifest.argv = cli.argv.clone();
        Ok(Self { dir: cli.out.clone(), name, manifest, start: Instant::now() })
    }

    fn manifest_name(&self) -> String {
        format!("{}.manifest.json", self.name)
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.name))
    }

    fn table(&mut self, suffix: &str, table: &Table) -> Result<()> {
        let m = self.manifest_name();
        for (fmt, ext) in [(Format::Csv, "csv"), (Format::Json, "json")] {
            let p = self.path(&format!("{suffix}.{ext}"));
            io::write_results(table, fmt, &p, &m)?;
            self.manifest.results.push(p);
        }
        Ok(())
    }

    fn extra(&mut self, path: &Path) {
        self.manifest.results.push(path.to_path_buf());
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        self.manifest.save(self.dir.join(self.manifest_name()))
    }
}

fn dispatch(cli: &Cli, mut out: Output) -> Result<()> {
    match &cli.command {
        Command::Construct(a) => construct_cmd(a, &mut out)?,
        Command::Quantize(a) => quantize_cmd(a, &mut out)?,
        Command::RdSweep(a) => sweep_cmd(a, &mut out)?,
        Command::WzSim(a) => wz_cmd(a, &mut out)?,
        Command::GpSim(a) => gp_cmd(a, &mut out)?,
        Command::Flatness(a) => flatness_cmd(a, &mut out)?,
        Command::LloydMax(a) => lloyd_cmd(a, &mut out)?,
        Command::OracleCheck(a) => oracle_cmd(a, &mut out)?,
    }
    out.finish()
}

fn build_code(point: &PointArgs, code: &CodeArgs) -> Result<CodeSpec> {
    let ch = baselines::design_channel(point.sigma_s, point.delta()?, code.levels, code.flatness)?;
    baselines::design_quantizer(&ch, &code.config(point.n))
}

fn level_table(spec: &CodeSpec) -> Result<Table> {
    let mut t = Table::new(&["level", "info", "frozen", "shaping", "level_rate", "level_information"]);
    for (l, s) in spec.levels.iter().enumerate() {
        let mi = spec.construction.level_information.get(l).copied().unwrap_or(f64::NAN);
        t.push(vec![l.into(), s.info.len().into(), s.frozen.len().into(), s.shaping.len().into(), (s.info.len() as f64 / spec.n as f64).into(), mi.into()])?;
    }
    Ok(t)
}

fn construct_cmd(a: &ConstructArgs, out: &mut Output) -> Result<()> {
    let spec = build_code(&a.point, &a.code)?;
    let path = a.spec.clone().unwrap_or_else(|| out.dir.join("spec.json"));
    io::save_spec(&spec, &path)?;
    out.extra(&path);
    out.table("", &level_table(&spec)?)?;
    println!("rate {:.6} bits, spec {}", spec.rate(), path.display());
    Ok(())
}

const RESULT_COLUMNS: [&str; 10] =
    ["delta_target", "rate", "distortion", "snr_db", "ci95", "n", "seed", "distortion_std_err", "rd_bound_db", "gap_db"];

fn result_row(delta: f64, p: &SweepPoint) -> Vec<Cell> {
    let r = &p.result;
    vec![
        delta.into(),
        r.rate.into(),
        r.distortion.into(),
        r.snr_db.into(),
        r.ci95_db.into(),
        r.n.into(),
        r.seed.into(),
        r.distortion_std_err.into(),
        p.rd_bound_db.into(),
        p.gap_db.into(),
    ]
}

fn quantize_cmd(a: &QuantizeArgs, out: &mut Output) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => io::load_spec::<CodeSpec>(p)?,
        None => build_code(&a.point, &a.code)?,
    };
    let sigma_s = spec.params.sigma_s;
    let q = Quantizer::new(spec)?;
    let blocks = q.run_blocks(a.trials, a.seed, a.rule.into())?;
    let result = quantizer::measure(&blocks, sigma_s, a.seed)?;
    if let Some(p) = &a.bitstream {
        std::fs::write(p, quantizer::write_bitstream(&q.spec, &blocks[0].info_bits)?)?;
        out.extra(p);
    }
    let rd = baselines::rd_bound_snr(result.rate)?;
    let point = SweepPoint { delta: q.spec.params.delta, gap_db: rd - result.snr_db, rd_bound_db: rd, result };
    let mut t = Table::new(&RESULT_COLUMNS);
    t.push(result_row(point.delta, &point))?;
    out.table("", &t)?;
    println!("rate {:.6} bits, distortion {:.6}, snr {:.4} dB", point.result.rate, point.result.distortion, point.result.snr_db);
    Ok(())
}

fn sweep_cmd(a: &SweepArgs, out: &mut Output) -> Result<()> {
    let rates: Option<Vec<f64>> = a.rate.as_deref().map(parse_list).transpose()?;
    let deltas = match (&a.delta, &rates) {
        (Some(d), _) => parse_grid(d)?,
        (None, Some(r)) => r.iter().map(|&r| design_delta(a.sigma_s, r)).collect(),
        (None, None) => return Err(Error::Domain("--delta or --rate is required".into())),
    };
    let cfg = SweepConfig {
        sigma_s: a.sigma_s,
        deltas,
        ns: parse_list(&a.n)?,
        blocks: a.trials,
        seed: a.seed,
        levels: a.code.levels,
        flatness: a.code.flatness,
        construction: a.code.config(0),
        rule: a.rule.into(),
    };
    let points = baselines::run_sweep(&cfg)?;
    let mut t = Table::new(&RESULT_COLUMNS);
    for p in &points {
        t.push(result_row(p.delta, p))?;
        println!("n {:>6} delta {:.4}: rate {:.4}, snr {:.3} dB, gap {:.3} dB", p.result.n, p.delta, p.result.rate, p.result.snr_db, p.gap_db);
    }
    out.table("", &t)?;
    if let Some(rates) = rates {
        let mut table = Table::new(&["n", "rate", "polar_snr_db", "polar_rate", "lloyd_max_db", "rd_bound_db", "reference_db", "tcq_reference_db"]);
        for &n in &cfg.ns {
            let polar: Vec<(u32, quantizer::ExperimentResult)> = rates
                .iter()
                .zip(points.iter().filter(|p| p.result.n == n))
                .filter(|(r, _)| r.fract() == 0.0 && **r >= 1.0)
                .map(|(r, p)| (*r as u32, p.result.clone()))
                .collect();
            for row in baselines::table_rows(a.sigma_s, &polar)? {
                let tcq = TABLE_REFERENCE_DB.iter().find(|r| r.0 == row.rate).map(|r| r.2).unwrap_or(f64::NAN);
                table.push(vec![
                    n.into(),
                    row.rate.into(),
                    row.polar_snr_db.into(),
                    row.polar_rate.into(),
                    row.lloyd_max_db.into(),
                    row.rd_bound_db.into(),
                    row.reference_db.into(),
                    tcq.into(),
                ])?;
            }
        }
        out.table(".table", &table)?;
    }
    Ok(())
}

fn save_nested(spec: &NestedSpec, path: &Option<PathBuf>, out: &mut Output) -> Result<()> {
    if let Some(p) = path {
        io::save_spec(spec, p)?;
        out.extra(p);
    }
    Ok(())
}

fn wz_cmd(a: &WzArgs, out: &mut Output) -> Result<()> {
    let p = nested::wz_params(a.sigma_y2, a.sigma_z2, a.delta)?;
    let cfg = a.nested.apply(NestedConfig::wyner_ziv(a.nested.n));
    let spec = nested::build_nested(Scheme::WynerZiv(p), &cfg)?;
    spec.check_nesting()?;
    save_nested(&spec, &a.nested.save_spec, out)?;
    let r = nested::simulate_wz(&spec, a.nested.trials, a.nested.seed)?;
    let mut t = Table::new(&[
        "n", "blocks", "seed", "rate", "rate_bound", "distortion", "distortion_std_err", "distortion_clean", "target", "block_errors",
        "block_error_rate",
    ]);
    t.push(vec![
        r.n.into(),
        r.blocks.into(),
        r.seed.into(),
        r.rate.into(),
        r.rate_bound.into(),
        r.distortion.into(),
        r.distortion_std_err.into(),
        r.distortion_clean.into(),
        r.target.into(),
        r.block_errors.into(),
        r.block_error_rate.into(),
    ])?;
    out.table("", &t)?;
    println!("rate {:.4} bits (bound {:.4}), distortion {:.4}, block errors {}/{}", r.rate, r.rate_bound, r.distortion, r.block_errors, r.blocks);
    Ok(())
}

fn gp_cmd(a: &GpArgs, out: &mut Output) -> Result<()> {
    let design = a.design_power.unwrap_or(GP_POWER_BACKOFF * a.power);
    let p = nested::gp_params(design, a.sigma_z2, a.sigma_i2)?;
    let cfg = a.nested.apply(NestedConfig::gelfand_pinsker(a.nested.n));
    let spec = nested::build_nested(Scheme::GelfandPinsker(p), &cfg)?;
    save_nested(&spec, &a.nested.save_spec, out)?;
    let r = nested::simulate_gp(&spec, a.nested.trials, a.nested.seed)?;
    let capacity = nested::gp_params(a.power, a.sigma_z2, a.sigma_i2)?.capacity;
    let mut t = Table::new(&[
        "n", "blocks", "seed", "message_rate", "capacity", "helper_rate", "power", "power_std_err", "power_limit", "design_power",
        "block_errors", "block_error_rate", "unaided_errors", "unaided_error_rate",
    ]);
    t.push(vec![
        r.n.into(),
        r.blocks.into(),
        r.seed.into(),
        r.message_rate.into(),
        capacity.into(),
        r.helper_rate.into(),
        r.power.into(),
        r.power_std_err.into(),
        a.power.into(),
        design.into(),
        r.block_errors.into(),
        r.block_error_rate.into(),
        r.unaided_errors.into(),
        r.unaided_error_rate.into(),
    ])?;
    out.table("", &t)?;
    println!(
        "message rate {:.4} bits (capacity {:.4}), power {:.4} of {:.4}, block errors {}/{}",
        r.message_rate, capacity, r.power, a.power, r.block_errors, r.blocks
    );
    Ok(())
}

fn flatness_cmd(a: &FlatnessArgs, out: &mut Output) -> Result<()> {
    let mut t = Table::new(&["eta", "sigma", "flatness", "sigma_s", "delta", "distance", "distance_bound"]);
    if let Some(eta) = a.eta {
        let eps = flatness_factor(eta, a.sigma);
        println!("{eps:.4e}");
        t.push(vec![eta.into(), a.sigma.into(), eps.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into()])?;
    }
    if let (Some(s), Some(d)) = (a.sigma_s, a.delta) {
        let ch: TestChannel = baselines::design_channel(s, d, a.levels, a.flatness)?;
        let eta = default_eta(ch.params.sigma_tilde, ch.params.sigma_r, a.levels, a.flatness);
        let (dist, bound) = ch.variational_distance_bound()?;
        let eps = flatness_factor(eta, ch.params.sigma_tilde);
        println!("eta {eta:.6}, flatness {eps:.4e}, distance {dist:.4e}, bound {bound:.4e}");
        t.push(vec![eta.into(), ch.params.sigma_tilde.into(), eps.into(), s.into(), d.into(), dist.into(), bound.into()])?;
    }
    if t.rows.is_empty() {
        return Err(Error::Domain("give --eta, or --sigma-s with --delta".into()));
    }
    out.table("", &t)
}

fn lloyd_cmd(a: &LloydArgs, out: &mut Output) -> Result<()> {
    let mut t = Table::new(&["rate", "sigma_s", "mse", "snr_db", "iterations", "rd_bound_db"]);
    for r in parse_list::<u32>(&a.rate)? {
        let q = baselines::lloyd_max(r, a.sigma_s)?;
        let rd = baselines::rd_bound_snr(r as f64)?;
        println!("rate {r}: snr {:.4} dB, bound {:.4} dB", q.snr_db, rd);
        t.push(vec![r.into(), a.sigma_s.into(), q.mse.into(), q.snr_db.into(), q.iterations.into(), rd.into()])?;
    }
    out.table("", &t)
}

fn oracle_cmd(a: &OracleArgs, out: &mut Output) -> Result<()> {
    let ch = baselines::design_channel(a.sigma_s, a.delta, a.levels, a.flatness)?;
    let binned = ch.binned(ch.equiprobable_binning(a.bins)?);
    let cosets: Vec<u32> = match &a.cosets {
        Some(s) => parse_list(s)?,
        None => vec![0; a.n],
    };
    if cosets.len() != a.n {
        return Err(Error::Domain(format!("--cosets has {} entries, --n is {}", cosets.len(), a.n)));
    }
    let tables = baselines::small_n_oracle(&ch, &binned, a.level, &cosets, None, a.rate_target)?;
    let sc_gap = baselines::oracle_sc_agreement(&ch, &binned, a.level, &cosets)?;
    if let Some(p) = &a.golden {
        io::save_spec(&tables, p)?;
        out.extra(p);
    }
    let roles = tables.sets.roles();
    let mut t = Table::new(&["index", "role", "z_prior", "z_post", "h_prior", "h_post"]);
    for i in 0..tables.n {
        let role = format!("{:?}", roles[i]).to_lowercase();
        t.push(vec![i.into(), role.as_str().into(), tables.z_prior[i].into(), tables.z_post[i].into(), tables.h_prior[i].into(), tables.h_post[i].into()])?;
    }
    out.table(".indices", &t)?;
    let mut s = Table::new(&["n", "bins", "level", "variation", "bound", "bound_entropy", "sc_max_gap"]);
    s.push(vec![tables.n.into(), tables.bins.into(), tables.level.into(), tables.variation.into(), tables.bound.into(), tables.bound_entropy.into(), sc_gap.into()])?;
    out.table("", &s)?;
    println!("variation {:.6e}, bound {:.6e}, sc gap {:.3e}", tables.variation, tables.bound, sc_gap);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1,2.5").unwrap(), vec![1.0, 2.5]);
        let g = parse_grid("0.1:2.5:9").unwrap();
        assert_eq!(g.len(), 9);
        assert!((g[8] - 2.5).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
        assert!(parse_grid("a:b").is_err());
        assert!(parse_grid("1:2:0").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with(["polarq", "lloyd-max", "--bogus"]), 2);
        assert_eq!(main_with(["polarq"]), 2);
    }

    #[test]
    fn design_delta_matches_rate() {
        assert!((design_delta(3.0, 1.0) - 2.25).abs() < 1e-15);
    }
}
