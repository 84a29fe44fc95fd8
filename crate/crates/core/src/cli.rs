//! Command-line front end: config ingestion, dispatch and report output.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agmon::{self, AgmonRatioReport, EigenOptions, IdentityRow, IntervalPotential};
use crate::domains::{self, Domain, GradNormReport, RadialVerdict};
use crate::error::{ConfineError, Result};
use crate::hardy::{self, TestFunctionFamily};
use crate::iterlog::{self, LogCoordinate};
use crate::potentials::{self, IntegrableProfile, PotentialFamily};
use crate::sigma::{self, SeriesClass, SeriesOptions, SigmaFamily};
use crate::sturm::ode::StepControl;
use crate::sturm::{self, ClassifyOptions, Endpoint, Integrability, QuadratureGrid};

#[derive(Debug, Parser)]
#[command(name = "confine", version, about = "Boundary confinement checks for Schrödinger operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps and sampling.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Limit point / limit circle verdict at one endpoint.
    Classify,
    /// Locate the verdict threshold along a one-parameter family.
    Sweep,
    /// Condition (Σ) report for weight functions G.
    Sigma,
    /// ψ/φ/V tables and residuals for the counterexample family.
    Counterexample,
    /// Hardy quotient tables.
    Hardy,
    /// Eigenpairs, decay exponents, form identity and annulus ratios.
    Agmon,
    /// Distance-function checks and radial reductions.
    Geometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub s_min: f64,
    pub s_max: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub sigma_band: f64,
    pub ladder_band: f64,
    pub ladder_tight: f64,
    pub ode: f64,
    pub residual: f64,
    pub wronskian_drift: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sigma_band: 0.02,
            ladder_band: 0.05,
            ladder_tight: 0.01,
            ode: 1e-10,
            residual: 1e-5,
            wronskian_drift: 1e-6,
            identity: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepFamily {
    /// `c / t²`, parameter `c`.
    Power,
    /// `(3/4 - ... - c Π 1/L_k) / t²`, parameter `c`.
    LogHierarchy { p: u32 },
    /// `V_{p,α}`, parameter `α`.
    Counterexample { p: u32 },
}

impl SweepFamily {
    pub fn member(&self, x: f64) -> PotentialFamily {
        match *self {
            SweepFamily::Power => PotentialFamily::power(x),
            SweepFamily::LogHierarchy { p } => PotentialFamily::log_hierarchy(p, x),
            SweepFamily::Counterexample { p } => PotentialFamily::counterexample(p, x),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub range: (f64, f64),
    pub tol: f64,
    pub coarse: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { family: SweepFamily::Power, range: (0.5, 1.0), tol: 5e-3, coarse: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaConfig {
    pub families: Vec<SigmaFamily>,
    pub d_omega: f64,
    /// `ρ_0 = d_0 / k` for each entry.
    pub rho0_divisors: Vec<f64>,
    pub n_terms: usize,
    pub sigma1_points: usize,
    pub brusentsev_points: usize,
    pub brusentsev_s_max: f64,
    pub brusentsev_tol: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            families: SigmaFamily::suite().into_iter().map(|(f, _)| f).collect(),
            d_omega: 0.5,
            rho0_divisors: vec![2.0, 8.0],
            n_terms: 2048,
            sigma1_points: 1000,
            brusentsev_points: 200,
            brusentsev_s_max: 1e6,
            brusentsev_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub p: Vec<u32>,
    pub alpha: Vec<f64>,
    /// Every `stride`-th node of the table grid is written.
    pub stride: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { p: vec![1, 2, 3], alpha: vec![-0.6, -0.4], stride: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardyConfig {
    pub families: Vec<TestFunctionFamily>,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub depths: Vec<u32>,
    pub epsilons: Vec<f64>,
}

impl Default for HardyConfig {
    fn default() -> Self {
        HardyConfig {
            families: vec![
                TestFunctionFamily::SinePad { k: 1 },
                TestFunctionFamily::SinePad { k: 3 },
                TestFunctionFamily::BumpProduct { m: 1.0 },
                TestFunctionFamily::BumpProduct { m: 2.0 },
                TestFunctionFamily::PowerBoundary { epsilon: 0.2 },
                TestFunctionFamily::PowerBoundary { epsilon: 0.05 },
            ],
            a: 0.0,
            d: vec![2.0],
            depths: vec![1, 2, 3, 4],
            epsilons: vec![0.2, 0.1, 0.05, 0.02, 0.01],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgmonConfig {
    pub potential: IntervalPotential,
    pub rho: f64,
    pub index: usize,
    pub nodes_per_side: usize,
    pub weights: Vec<SigmaFamily>,
    pub d_omega: f64,
    /// Defaults to `min(d_0 / 2, 1/8)` per weight.
    pub rho0: Option<f64>,
    pub n_max: usize,
    pub identity_nodes: usize,
}

impl Default for AgmonConfig {
    fn default() -> Self {
        AgmonConfig {
            potential: IntervalPotential::symmetric(PotentialFamily::power(0.75)),
            rho: 1e-4,
            index: 0,
            nodes_per_side: 400,
            weights: vec![SigmaFamily::LogT, SigmaFamily::Hierarchy { p: 2, f: IntegrableProfile::Zero }],
            d_omega: 0.5,
            rho0: None,
            n_max: 6,
            identity_nodes: 8001,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialConfig {
    pub radius: f64,
    pub coefficients: Vec<f64>,
    pub dims: Vec<u32>,
}

impl Default for RadialConfig {
    fn default() -> Self {
        RadialConfig { radius: 1.0, coefficients: vec![0.75, 0.5], dims: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub domains: Vec<Domain>,
    pub samples: usize,
    pub dim: usize,
    pub radial: Option<RadialConfig>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            domains: vec![Domain::Interval, Domain::Disk(1.0), Domain::Annulus(1.0, 2.0), Domain::Ellipse(2.0, 1.0)],
            samples: 1000,
            dim: 2,
            radial: Some(RadialConfig::default()),
        }
    }
}

/// Everything a run needs. Sections irrelevant to the chosen subcommand are
/// ignored but still validated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<Command>,
    pub potential: PotentialFamily,
    pub endpoint: Endpoint,
    pub energies: Vec<f64>,
    pub grid: Option<GridConfig>,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
    pub seed: u64,
    pub sweep: SweepConfig,
    pub sigma: SigmaConfig,
    pub counterexample: CounterexampleConfig,
    pub hardy: HardyConfig,
    pub agmon: AgmonConfig,
    pub geometry: GeometryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: None,
            potential: PotentialFamily::power(1.0),
            endpoint: Endpoint::Left,
            energies: vec![0.0],
            grid: None,
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
            seed: 0,
            sweep: SweepConfig::default(),
            sigma: SigmaConfig::default(),
            counterexample: CounterexampleConfig::default(),
            hardy: HardyConfig::default(),
            agmon: AgmonConfig::default(),
            geometry: GeometryConfig::default(),
        }
    }
}

fn config_err(pointer: &str, message: impl Into<String>) -> ConfineError {
    ConfineError::Config { pointer: pointer.to_string(), message: message.into() }
}

fn positive(pointer: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(pointer, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses JSON, reporting the failing location as a JSON pointer.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = path_to_pointer(&e.path().to_string());
            config_err(&pointer, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfineError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("sigma_band", t.sigma_band),
            ("ladder_band", t.ladder_band),
            ("ladder_tight", t.ladder_tight),
            ("ode", t.ode),
            ("residual", t.residual),
            ("wronskian_drift", t.wronskian_drift),
            ("identity", t.identity),
        ] {
            positive(&format!("/tolerances/{name}"), v)?;
        }
        if t.ladder_tight >= t.ladder_band {
            return Err(config_err("/tolerances/ladder_tight", "must be below ladder_band"));
        }
        self.potential.validate().map_err(|e| config_err("/potential", e.to_string()))?;
        if let Some(g) = &self.grid {
            if !(g.s_min > 0.0 && g.s_min < g.s_max) {
                return Err(config_err("/grid/s_min", "need 0 < s_min < s_max"));
            }
            if g.nodes < sturm::MIN_NODES {
                return Err(config_err("/grid/nodes", format!("need at least {}", sturm::MIN_NODES)));
            }
        }
        for (i, e) in self.energies.iter().enumerate() {
            if !e.is_finite() {
                return Err(config_err(&format!("/energies/{i}"), "must be finite"));
            }
        }
        let sw = &self.sweep;
        if !(sw.range.0 < sw.range.1) {
            return Err(config_err("/sweep/range", "need lo < hi"));
        }
        positive("/sweep/tol", sw.tol)?;
        if sw.coarse < 2 {
            return Err(config_err("/sweep/coarse", "need at least 2 coarse points"));
        }
        let sg = &self.sigma;
        positive("/sigma/d_omega", sg.d_omega)?;
        for (i, k) in sg.rho0_divisors.iter().enumerate() {
            if !(*k >= 2.0) {
                return Err(config_err(&format!("/sigma/rho0_divisors/{i}"), "rho0 = d0/k needs k >= 2"));
            }
        }
        if sg.n_terms < 64 {
            return Err(config_err("/sigma/n_terms", "need at least 64 terms"));
        }
        positive("/sigma/brusentsev_tol", sg.brusentsev_tol)?;
        for (i, p) in self.counterexample.p.iter().enumerate() {
            if !(1..=iterlog::MAX_LEVEL).contains(p) {
                return Err(config_err(&format!("/counterexample/p/{i}"), format!("p must be in 1..={}", iterlog::MAX_LEVEL)));
            }
        }
        if self.counterexample.stride == 0 {
            return Err(config_err("/counterexample/stride", "must be at least 1"));
        }
        let h = &self.hardy;
        for (i, f) in h.families.iter().enumerate() {
            f.validate().map_err(|e| config_err(&format!("/hardy/families/{i}"), e.to_string()))?;
        }
        for (i, d) in h.d.iter().enumerate() {
            if !(*d >= 0.5) {
                return Err(config_err(&format!("/hardy/D/{i}"), "D must be at least the largest distance 1/2"));
            }
        }
        for (i, d) in h.depths.iter().enumerate() {
            if *d > 4 {
                return Err(config_err(&format!("/hardy/depths/{i}"), "depth is capped at 4"));
            }
        }
        if h.epsilons.windows(2).any(|w| !(w[1] < w[0])) || h.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(config_err("/hardy/epsilons", "must be positive and strictly decreasing"));
        }
        let a = &self.agmon;
        if !(a.rho > 0.0 && a.rho < 0.5) {
            return Err(config_err("/agmon/rho", "need 0 < rho < 1/2"));
        }
        positive("/agmon/d_omega", a.d_omega)?;
        if let Some(r) = a.rho0 {
            positive("/agmon/rho0", r)?;
        }
        if a.identity_nodes < sturm::MIN_NODES {
            return Err(config_err("/agmon/identity_nodes", format!("need at least {}", sturm::MIN_NODES)));
        }
        let g = &self.geometry;
        for (i, d) in g.domains.iter().enumerate() {
            d.validate().map_err(|e| config_err(&format!("/geometry/domains/{i}"), e.to_string()))?;
        }
        if g.samples < 100 {
            return Err(config_err("/geometry/samples", "need at least 100"));
        }
        if let Some(r) = &g.radial {
            positive("/geometry/radial/radius", r.radius)?;
            if r.dims.contains(&0) {
                return Err(config_err("/geometry/radial/dims", "dimensions start at 1"));
            }
        }
        Ok(())
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        let t = &self.tolerances;
        let mut o = ClassifyOptions {
            sigma_band: t.sigma_band,
            ladder_band: t.ladder_band,
            ladder_tight: t.ladder_tight,
            ..ClassifyOptions::default()
        };
        o.step.tol = t.ode;
        if let Some(g) = &self.grid {
            o.s_max = g.s_max;
        }
        o
    }
}

/// `serde_path_to_error` paths (`a.b[2].c`) as JSON pointers (`/a/b/2/c`).
fn path_to_pointer(path: &str) -> String {
    if path == "." {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let mut rest = seg;
        while let Some(open) = rest.find('[') {
            let head = &rest[..open];
            if !head.is_empty() {
                out.push('/');
                out.push_str(head);
            }
            let close = rest[open..].find(']').map(|c| c + open).unwrap_or(rest.len() - 1);
            out.push('/');
            out.push_str(&rest[open + 1..close]);
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            out.push('/');
            out.push_str(&rest.replace('~', "~0").replace('/', "~1"));
        }
    }
    out
}

/// One report cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits, enough to reproduce every `f64` bit for bit.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// A finished subcommand: the full JSON document, its primary table, and
/// any verified inequalities that failed.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub violations: Vec<String>,
}

struct Sig17<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with every float at 17 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Renders `report` in `format`.
pub fn emit_report(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            if report.json.is_null() {
                return Err(ConfineError::pre("empty report"));
            }
            to_json_string(&report.json)
        }
        Format::Csv => {
            if report.rows.is_empty() {
                return Err(ConfineError::pre("empty report"));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&report.header).map_err(csv_err)?;
            for row in &report.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| ConfineError::pre(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv of UTF-8 cells"))
        }
    }
}

fn csv_err(e: csv::Error) -> ConfineError {
    ConfineError::pre(format!("csv: {e}"))
}

fn json<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn verdict_label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn run_classify(cfg: &RunConfig) -> Result<Report> {
    let c = sturm::classify_endpoint_with(&cfg.potential, cfg.endpoint, &cfg.energies, &cfg.classify_options())?;
    let row = vec![
        Cell::from(verdict_label(&c.endpoint)),
        verdict_label(&c.verdict).into(),
        c.sigma.dominant.into(),
        c.sigma.recessive.into(),
        c.confidence.into(),
        c.level.into(),
        c.margin.into(),
        c.score.into(),
    ];
    Ok(Report {
        json: json(&c)?,
        header: vec!["endpoint", "verdict", "sigma_dominant", "sigma_recessive", "confidence", "level", "margin", "score"],
        rows: vec![row],
        violations: vec![],
    })
}

fn run_sweep(cfg: &RunConfig) -> Result<Report> {
    let sw = &cfg.sweep;
    let fam = sw.family.clone();
    let r = sturm::threshold_sweep(move |x| fam.member(x), sw.range, sw.tol, sw.coarse, &cfg.energies, &cfg.classify_options())?;
    let mut rows: Vec<Vec<Cell>> = r
        .points
        .iter()
        .map(|p| {
            vec![
                p.param.into(),
                verdict_label(&p.verdict).into(),
                p.sigma_dominant.into(),
                p.sigma_recessive.into(),
                p.confidence.into(),
            ]
        })
        .collect();
    if let Some(t) = r.threshold {
        rows.push(vec![t.into(), "threshold".into(), Cell::Empty, Cell::Empty, Cell::Empty]);
    }
    Ok(Report {
        json: json(&serde_json::json!({ "family": sw.family, "range": sw.range, "result": r }))?,
        header: vec!["param", "verdict", "sigma_dominant", "sigma_recessive", "confidence"],
        rows,
        violations: vec![],
    })
}

#[derive(Serialize)]
struct SigmaEntry {
    family: String,
    d0: f64,
    verdict: SeriesClass,
    series: Vec<sigma::SeriesVerdict>,
    sigma1: sigma::Sigma1Report,
    brusentsev: sigma::BrusentsevReport,
}

fn run_sigma(cfg: &RunConfig) -> Result<Report> {
    let sc = &cfg.sigma;
    let opts = SeriesOptions::default();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for fam in &sc.families {
        let g = fam.build(sc.d_omega)?;
        let sd = g.d0().s();
        let rhos: Vec<LogCoordinate> =
            sc.rho0_divisors.iter().map(|k| LogCoordinate::new(sd + k.ln())).collect::<Result<_>>()?;
        let (verdict, series) = sigma::series_verdict_multi(&g, &rhos, sc.n_terms, &opts)?;
        let sigma1 = sigma::check_sigma1(&g, sc.sigma1_points)?;
        let brus = sigma::brusentsev_sup(&g, &sigma::default_probe(&g, sc.brusentsev_points, sc.brusentsev_s_max), sc.brusentsev_tol)?;
        if !sigma1.holds {
            violations.push(format!("{}: condition (Σ.1) fails at {} probes", fam.label(), sigma1.violations.len()));
        }
        for v in &series {
            rows.push(vec![
                Cell::from(fam.label()),
                v.rho0.into(),
                verdict_label(&v.verdict).into(),
                v.beta.get(1).copied().map(Cell::from).unwrap_or(Cell::Empty),
                v.beta.get(2).copied().map(Cell::from).unwrap_or(Cell::Empty),
                v.residual.into(),
                sigma1.holds.into(),
                brus.satisfied.into(),
                brus.growth_exponent.into(),
            ]);
        }
        entries.push(SigmaEntry { family: fam.label(), d0: g.d0_value(), verdict, series, sigma1, brusentsev: brus });
    }
    Ok(Report {
        json: json(&entries)?,
        header: vec!["family", "rho0", "verdict", "beta_1", "beta_2", "residual", "sigma1", "brusentsev_satisfied", "gamma"],
        rows,
        violations,
    })
}

#[derive(Serialize)]
struct CounterexampleEntry {
    p: u32,
    alpha: f64,
    max_residual: f64,
    wronskian: f64,
    wronskian_drift: f64,
    tail_fraction: f64,
    l2: Integrability,
    table: Vec<(f64, f64, f64, f64, f64)>,
}

fn run_counterexample(cfg: &RunConfig) -> Result<Report> {
    let cc = &cfg.counterexample;
    let tol = &cfg.tolerances;
    let step = StepControl { tol: tol.ode, ..StepControl::default() };
    let opts = cfg.classify_options();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for &p in &cc.p {
        let lo_dom = iterlog::min_s(p)?;
        let (s_lo, s_hi, nodes) = match &cfg.grid {
            Some(g) => (g.s_min.max(lo_dom), g.s_max, g.nodes),
            None => (5.0f64.max(lo_dom), 40.0, 2001),
        };
        let table_grid = QuadratureGrid::uniform(Endpoint::Left, s_lo, s_hi, nodes)?;
        let deep = QuadratureGrid::graded(Endpoint::Left, s_lo, s_lo + 20.0, 0.05, opts.s_max, 1.002)?;
        for &alpha in &cc.alpha {
            let residual = potentials::counterexample_residual(p, alpha, &table_grid, &step)?;
            let table_pair = potentials::second_solution(p, alpha, &table_grid)?;
            let pair = potentials::second_solution(p, alpha, &deep)?;
            let w = sturm::wronskian(&pair.psi, &pair.phi)?;
            let (a, b) = (s_lo.ln(), opts.s_max.ln());
            let window = (a + 0.45 * (b - a)).exp().max(iterlog::min_s(3)?);
            let l2 = sturm::l2_decision(&pair.psi, window, &opts)?.integrability;
            let max_residual = residual.iter().cloned().fold(0.0, f64::max);
            if max_residual > tol.residual {
                violations.push(format!("p={p} alpha={alpha}: residual {max_residual:e} above {:e}", tol.residual));
            }
            if (w.value - 1.0).abs() > tol.wronskian_drift || w.drift > tol.wronskian_drift {
                violations.push(format!("p={p} alpha={alpha}: wronskian {} drift {:e}", w.value, w.drift));
            }
            let expect = if alpha < -0.5 { Integrability::Integrable } else { Integrability::NotIntegrable };
            if l2 != expect && l2 != Integrability::Undecided {
                violations.push(format!("p={p} alpha={alpha}: L2 verdict {l2:?}, expected {expect:?}"));
            }
            let v = PotentialFamily::counterexample(p, alpha);
            let mut table = Vec::new();
            for (i, &s) in table_grid.s().iter().enumerate().step_by(cc.stride) {
                let x = LogCoordinate::new(s)?;
                let wv = v.coefficient(x)?;
                let row = (s, table_pair.psi.ln_abs(i), table_pair.phi.ln_abs(i), wv, residual[i]);
                rows.push(vec![
                    Cell::from(p),
                    alpha.into(),
                    row.0.into(),
                    row.1.into(),
                    row.2.into(),
                    row.3.into(),
                    row.4.into(),
                ]);
                table.push(row);
            }
            entries.push(CounterexampleEntry {
                p,
                alpha,
                max_residual,
                wronskian: w.value,
                wronskian_drift: w.drift,
                tail_fraction: table_pair.tail_fraction,
                l2,
                table,
            });
        }
    }
    Ok(Report {
        json: json(&entries)?,
        header: vec!["p", "alpha", "s", "ln_psi", "ln_phi", "w", "residual"],
        rows,
        violations,
    })
}

#[derive(Serialize)]
struct HardyRow {
    family: String,
    param: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "D")]
    d: Option<f64>,
    depth: u32,
    quotient: f64,
    unresolved: bool,
}

fn run_hardy(cfg: &RunConfig) -> Result<Report> {
    let hc = &cfg.hardy;
    let grid = match &cfg.grid {
        Some(g) => QuadratureGrid::uniform(Endpoint::Left, std::f64::consts::LN_2, g.s_max, g.nodes)?,
        None => hardy::default_grid(),
    };
    let mut out = Vec::new();
    let mut violations = Vec::new();
    let mut families = hc.families.clone();
    for e in &hc.epsilons {
        let f = TestFunctionFamily::PowerBoundary { epsilon: *e };
        if !families.contains(&f) {
            families.push(f);
        }
    }
    for f in &families {
        let r = hardy::hardy_quotient(f, hc.a, &grid)?;
        if hc.a >= 0.0 && r.quotient < 1.0 {
            violations.push(format!("{}: Hardy quotient {} below 1", f.label(), r.quotient));
        }
        out.push(HardyRow { family: f.label(), param: f.param(), a: hc.a, d: None, depth: 0, quotient: r.quotient, unresolved: r.unresolved });
        for &big_d in &hc.d {
            let mut prev = r.quotient;
            for &depth in &hc.depths {
                let q = hardy::improved_quotient(f, big_d, depth, &grid)?;
                // "sufficiently large" D: checked from twice the diameter on
                if big_d >= 2.0 && q.quotient < 1.0 {
                    violations.push(format!("{}: improved quotient {} below 1 at D={big_d}, depth={depth}", f.label(), q.quotient));
                }
                if q.quotient > prev * (1.0 + 1e-12) {
                    violations.push(format!("{}: improved quotient increased at depth {depth}", f.label()));
                }
                prev = q.quotient;
                out.push(HardyRow {
                    family: f.label(),
                    param: f.param(),
                    a: hc.a,
                    d: Some(big_d),
                    depth,
                    quotient: q.quotient,
                    unresolved: q.unresolved,
                });
            }
        }
    }
    let probe = hardy::sharpness_probe(&hc.epsilons, hc.a, &grid)?;
    if probe.windows(2).any(|w| w[1].quotient > w[0].quotient) {
        violations.push("sharpness probe is not monotone in epsilon".into());
    }
    let rows = out
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.family.clone()),
                r.param.into(),
                r.a.into(),
                r.d.map(Cell::from).unwrap_or(Cell::Empty),
                r.depth.into(),
                r.quotient.into(),
            ]
        })
        .collect();
    Ok(Report {
        json: json(&serde_json::json!({ "quotients": out, "sharpness": probe }))?,
        header: vec!["family", "param", "A", "D", "depth", "quotient"],
        rows,
        violations,
    })
}

#[derive(Serialize)]
struct AgmonOut {
    energy: f64,
    node_count: usize,
    decay_left: f64,
    decay_right: Option<f64>,
    ratios: Vec<(String, AgmonRatioReport)>,
    identity: Vec<IdentityRow>,
}

fn run_agmon(cfg: &RunConfig) -> Result<Report> {
    let ac = &cfg.agmon;
    let opts = EigenOptions {
        nodes_per_side: ac.nodes_per_side,
        step: StepControl { tol: cfg.tolerances.ode, h_max: 0.01, ..StepControl::default() },
        ..EigenOptions::default()
    };
    let pair = agmon::ground_state(&ac.potential, ac.rho, ac.rho, ac.index, &opts)?;
    let decay_left = agmon::decay_fit(&pair, Endpoint::Left)?.exponent;
    let decay_right = agmon::decay_fit(&pair, Endpoint::Right).ok().map(|d| d.exponent);
    let mut violations = Vec::new();
    if pair.node_count != ac.index {
        violations.push(format!("eigenfunction has {} nodes, expected {}", pair.node_count, ac.index));
    }
    let mut ratios = Vec::new();
    let mut rows = Vec::new();
    for w in &ac.weights {
        let g = w.build(ac.d_omega)?;
        let rho0 = ac.rho0.unwrap_or((0.5 * g.d0_value()).min(0.125));
        let r = agmon::agmon_ratio(&pair, &g, rho0, ac.n_max)?;
        if !r.sup_ratio.is_finite() {
            violations.push(format!("{}: sup ratio not finite", w.label()));
        }
        for row in &r.rows {
            rows.push(vec![Cell::from(w.label()), row.n.into(), row.rho_n.into(), row.lhs.into(), row.rhs.into(), row.ratio.into()]);
        }
        ratios.push((w.label(), r));
    }
    let identity = agmon::identity_matrix(ac.identity_nodes)?;
    for r in &identity {
        if !(r.rel_error <= cfg.tolerances.identity) {
            violations.push(format!("{} on {:?}: identity error {:e}", r.solution, r.support, r.rel_error));
        }
    }
    let out = AgmonOut { energy: pair.energy, node_count: pair.node_count, decay_left, decay_right, ratios, identity };
    Ok(Report { json: json(&out)?, header: vec!["weight", "n", "rho_n", "lhs", "rhs", "ratio"], rows, violations })
}

#[derive(Serialize)]
struct GeometryOut {
    checks: Vec<(f64, GradNormReport)>,
    radial: Vec<(f64, RadialVerdict)>,
}

fn run_geometry(cfg: &RunConfig) -> Result<Report> {
    let gc = &cfg.geometry;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for dom in &gc.domains {
        let r = domains::grad_norm_check(dom, gc.samples, gc.dim, cfg.seed)?;
        if !r.passed {
            violations.push(format!("{dom:?}: {} gradient violators", r.violators.len()));
        }
        rows.push(vec![
            Cell::from(dom.label()),
            dom.reach().into(),
            r.samples.into(),
            r.checked.into(),
            r.max_deviation.into(),
            r.passed.into(),
        ]);
        checks.push((dom.reach(), r));
    }
    let mut radial = Vec::new();
    if let Some(rc) = &gc.radial {
        let opts = cfg.classify_options();
        for &c in &rc.coefficients {
            for &n in &rc.dims {
                radial.push((c, domains::radial_esa(&Domain::Disk(rc.radius), PotentialFamily::power(c), n, &opts)?));
            }
        }
    }
    Ok(Report {
        json: json(&GeometryOut { checks, radial })?,
        header: vec!["domain", "reach", "samples", "checked", "max_deviation", "passed"],
        rows,
        violations,
    })
}

/// Runs the configured subcommand.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Report> {
    match cmd {
        Command::Classify => run_classify(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Sigma => run_sigma(cfg),
        Command::Counterexample => run_counterexample(cfg),
        Command::Hardy => run_hardy(cfg),
        Command::Agmon => run_agmon(cfg),
        Command::Geometry => run_geometry(cfg),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(sub) = cfg.subcommand {
        if sub != cli.command {
            return Err(config_err("/subcommand", format!("config is for {sub:?}, command line asked for {:?}", cli.command)));
        }
    }
    cfg.subcommand = Some(cli.command);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.clone());
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| ConfineError::Io { path: p.display().to_string(), source }),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|source| ConfineError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfineError::pre("--threads must be at least 1"));
        }
        // a second global init in the same process is harmless to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve(cli)?;
    if cli.dry_run {
        write_out(None, &to_json_string(&cfg)?)?;
        return Ok(true);
    }
    let report = run(cli.command, &cfg)?;
    let text = emit_report(&report, cfg.output.format)?;
    write_out(cfg.output.path.as_deref(), &text)?;
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    Ok(report.violations.is_empty())
}

/// Parses `args` and runs; exit 0 on success, 1 when a checked inequality
/// fails, 2 on usage, configuration or domain errors.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointer_paths() {
        assert_eq!(path_to_pointer("potential.c"), "/potential/c");
        assert_eq!(path_to_pointer("hardy.families[2].k"), "/hardy/families/2/k");
        assert_eq!(path_to_pointer("."), "");
    }

    #[test]
    fn schema_error_names_pointer() {
        let err = RunConfig::from_json(r#"{"hardy": {"families": [{"kind": "sine_pad", "k": "x"}]}}"#).unwrap_err();
        match err {
            ConfineError::Config { pointer, .. } => assert!(pointer.starts_with("/hardy/families/0"), "{pointer}"),
            e => panic!("unexpected {e}"),
        }
        let err = RunConfig::from_json(r#"{"tolerances": {"residual": -1}}"#).unwrap_err();
        assert!(matches!(err, ConfineError::Config { pointer, .. } if pointer == "/tolerances/residual"));
    }

    #[test]
    fn floats_round_trip_bitwise() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 6.02214076e23, 5e-324] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = to_json_string(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(to_json_string(&back).unwrap(), text);
    }

    #[test]
    fn empty_report_is_an_error() {
        let r = Report { json: Value::Null, header: vec!["a"], rows: vec![], violations: vec![] };
        assert!(emit_report(&r, Format::Csv).is_err());
        assert!(emit_report(&r, Format::Json).is_err());
    }
}
