//! Configuration, experiment orchestration and report emission for the
//! `polykin` binary.
//!
//! Exit status: 0 when every check passed, 1 when a check failed, 2 on a
//! configuration, I/O or module error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{BoundSetRef, EnvelopeKind, Externals, MomentSnapshot};
use crate::dsmc::{self, check_envelopes, EnvelopeReport, InitialDensity, RunSettings};
use crate::error::{Error, Result};
use crate::experiments::{
    catalog_densities, frozen_bounds, omega_bounds, verify_frozen_catalog, verify_omega_catalog, CatalogSettings,
    Inequality, InequalityCheck, OmegaOrders,
};
use crate::externals::{fit_externals, ExternalFit, FitSettings};
use crate::kernels::{AngularModel, Channel, KernelModel, KernelSpec, MixtureSpec, RrWeight};
use crate::kinematics::MomentFamily;
use crate::povzner::{
    default_grid, frozen_holdout, frozen_table, is_non_increasing, poly_holdout, poly_table, HoldoutReport,
    PovznerConstants, PovznerSettings,
};
use crate::quadrature::{density_catalog, TestDensity, Verdict};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    VerifyWeakform,
    Povzner,
    Constants,
    FullSuite,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Simulate => "simulate",
            Mode::VerifyWeakform => "verify-weakform",
            Mode::Povzner => "povzner",
            Mode::Constants => "constants",
            Mode::FullSuite => "full-suite",
        };
        f.write_str(s)
    }
}

/// Command line of the `polykin` binary.
#[derive(Debug, Clone, Parser)]
#[command(name = "polykin", version, about = "Polyatomic Boltzmann DSMC solver and moment-bound verifier")]
pub struct Cli {
    /// Experiment to run.
    pub mode: Mode,
    /// TOML configuration file.
    #[arg(long, required_unless_present = "print_defaults")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "POLYKIN_THREADS")]
    pub threads: Option<usize>,
    /// Output directory for trace and report files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Print the default configuration and exit.
    #[arg(long)]
    pub print_defaults: bool,
}

/// Physical model of both collision channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub omega: f64,
    pub mass: f64,
    pub alpha: f64,
    /// Rate exponent of the polyatomic channel.
    pub zeta: f64,
    /// Rate exponent of the frozen channel.
    pub zeta_f: f64,
    /// Frozen-channel sandwich constants.
    pub c_lower: f64,
    pub c_upper: f64,
    pub norm_b: f64,
    /// Optional `[cos_theta, value]` nodes of a piecewise-linear angular
    /// density; isotropic when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angular: Option<Vec<[f64; 2]>>,
    pub kernel_model: KernelModel,
    pub rr_lower: RrWeight,
    pub rr_upper: RrWeight,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            omega: 0.5,
            mass: 1.0,
            alpha: 0.0,
            zeta: 1.0,
            zeta_f: 1.0,
            c_lower: 1.0,
            c_upper: 1.0,
            norm_b: 1.0,
            angular: None,
            kernel_model: KernelModel::Upper,
            rr_lower: RrWeight::Constant { value: 1.0 },
            rr_upper: RrWeight::Constant { value: 1.0 },
        }
    }
}

impl ModelConfig {
    pub fn angular_model(&self) -> Result<AngularModel> {
        match &self.angular {
            None => AngularModel::isotropic(self.norm_b),
            Some(nodes) => AngularModel::tabulated(nodes.iter().map(|n| (n[0], n[1])).collect(), self.norm_b),
        }
    }

    pub fn mixture(&self) -> Result<MixtureSpec> {
        self.mixture_with_omega(self.omega)
    }

    pub fn mixture_with_omega(&self, omega: f64) -> Result<MixtureSpec> {
        let angular = self.angular_model()?;
        let frozen = KernelSpec::frozen(self.zeta_f, self.mass)?
            .with_angular(angular.clone())?
            .with_sandwich(self.c_lower, self.c_upper)?
            .with_model(self.kernel_model)?;
        let poly = KernelSpec::polyatomic(self.zeta, self.alpha, self.mass)?
            .with_angular(angular)?
            .with_rr(self.rr_lower, self.rr_upper)?
            .with_model(self.kernel_model)?;
        MixtureSpec::new(omega, frozen, poly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentRequest {
    pub family: MomentFamily,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Moments recorded in every trace in addition to the snapshot columns.
    pub moments: Vec<MomentRequest>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        let r = |family, k| MomentRequest { family, k };
        Self {
            moments: vec![
                r(MomentFamily::Velocity, 4.0),
                r(MomentFamily::Velocity, 6.0),
                r(MomentFamily::Total, 4.0),
                r(MomentFamily::Internal, 4.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PovznerConfig {
    pub grid: Vec<f64>,
    pub frozen_pairs: usize,
    pub poly_pairs: usize,
    pub polar_nodes: usize,
    pub frozen_azimuth_nodes: usize,
    pub poly_azimuth_nodes: usize,
    pub rr_nodes: usize,
    pub frozen_holdout_pairs: usize,
    /// Zero skips the polyatomic hold-out check.
    pub poly_holdout_pairs: usize,
    /// Orders at which `C_k < ||b||` is asserted.
    pub check_orders: Vec<f64>,
    /// `[k, C_k]` rows replacing the sampled frozen table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen_override: Option<Vec<[f64; 2]>>,
    /// `[k, C_k]` rows replacing the sampled polyatomic table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poly_override: Option<Vec<[f64; 2]>>,
}

impl Default for PovznerConfig {
    fn default() -> Self {
        let f = PovznerSettings::frozen_default();
        let p = PovznerSettings::poly_default();
        Self {
            grid: default_grid(),
            frozen_pairs: f.n_pairs,
            poly_pairs: p.n_pairs,
            polar_nodes: f.polar_nodes,
            frozen_azimuth_nodes: f.azimuth_nodes,
            poly_azimuth_nodes: p.azimuth_nodes,
            rr_nodes: f.rr_nodes,
            frozen_holdout_pairs: 10_000,
            poly_holdout_pairs: 200,
            check_orders: vec![3.0, 4.0, 6.0, 10.0],
            frozen_override: None,
            poly_override: None,
        }
    }
}

impl PovznerConfig {
    /// Settings for one channel with `extra` orders merged into the grid.
    fn settings(&self, channel: Channel, extra: &[f64]) -> PovznerSettings {
        let mut grid = self.grid.clone();
        grid.extend(extra.iter().copied().filter(|&k| k > 2.0));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let (n_pairs, azimuth_nodes) = match channel {
            Channel::Frozen => (self.frozen_pairs, self.frozen_azimuth_nodes),
            Channel::Polyatomic => (self.poly_pairs, self.poly_azimuth_nodes),
        };
        PovznerSettings { grid, n_pairs, polar_nodes: self.polar_nodes, azimuth_nodes, rr_nodes: self.rr_nodes }
    }
}

/// External polyatomic constants: the literal string `"fit"` or a list of
/// `{ k, a_bar, b_bar, d_bar }` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExternalsConfig {
    Keyword(String),
    Given(Vec<Externals>),
}

impl Default for ExternalsConfig {
    fn default() -> Self {
        ExternalsConfig::Keyword("fit".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// Orders of the frozen constant tables and frozen envelope checks.
    pub frozen_orders: Vec<f64>,
    pub externals: ExternalsConfig,
    pub fit: FitSettings,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { frozen_orders: vec![4.0, 6.0], externals: ExternalsConfig::default(), fit: FitSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Relative slack of the envelope checks.
    pub slack: f64,
    /// Envelope checks ignore recorded times at or before this (absolute) time.
    pub t_burn: f64,
    /// Tolerance of the frozen-run internal-moment conservation check.
    pub conservation_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { slack: 0.05, t_burn: 0.0, conservation_tol: 1e-12 }
    }
}

fn default_initial() -> InitialDensity {
    InitialDensity::Bimodal {
        first: TestDensity { rho: 0.5, drift: [1.5, 0.0, 0.0], temperature: 0.5, theta: 1.0, alpha_i: 0.0 },
        second: TestDensity { rho: 0.5, drift: [-1.5, 0.0, 0.0], temperature: 0.5, theta: 1.0, alpha_i: 0.0 },
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_initial")]
    pub initial: InitialDensity,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub povzner: PovznerConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub verify: CatalogSettings,
    #[serde(default)]
    pub checks: CheckConfig,
}

fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: default_seed(),
            model: ModelConfig::default(),
            initial: default_initial(),
            run: RunSettings::default(),
            output: OutputConfig::default(),
            povzner: PovznerConfig::default(),
            bounds: BoundsConfig::default(),
            verify: CatalogSettings::default(),
            checks: CheckConfig::default(),
        }
    }
}

/// Default configuration as TOML.
pub fn print_defaults(mode: Mode) -> String {
    let cfg = RunConfig { mode: Some(mode), ..RunConfig::default() };
    let body = toml::to_string_pretty(&cfg).expect("default config serializes");
    format!(
        "# polykin defaults. Every key is optional.\n\
         # run.t_final is in mean collision times of the initial state; run.dt in absolute time.\n\
         # bounds.externals is \"fit\" or a list of {{ k, a_bar, b_bar, d_bar }} tables.\n\n{body}"
    )
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the deepest existing component of `path` in the document.
fn locate(text: &str, path: &[&str]) -> Option<usize> {
    let doc = toml::de::DeTable::parse(text).ok()?;
    let mut table = doc.get_ref();
    let mut line = None;
    for (depth, name) in path.iter().enumerate() {
        let (key, value) = table.iter().find(|(k, _)| k.get_ref() == name)?;
        line = Some(line_of(text, key.span().start));
        if depth + 1 < path.len() {
            match value.get_ref() {
                toml::de::DeValue::Table(t) => table = t,
                _ => return line,
            }
        }
    }
    line
}

struct Invalid {
    path: Vec<&'static str>,
    message: String,
}

fn invalid(path: &[&'static str], message: impl Into<String>) -> Invalid {
    Invalid { path: path.to_vec(), message: message.into() }
}

fn check_range(path: &[&'static str], x: f64, ok: bool, range: &str) -> std::result::Result<(), Invalid> {
    if ok && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("{} = {x} is out of range, expected {range}", path.join("."))))
    }
}

fn check_orders(path: &[&'static str], ks: &[f64]) -> std::result::Result<(), Invalid> {
    if ks.iter().any(|&k| !(k > 2.0) || !k.is_finite()) {
        return Err(invalid(path, format!("{} must contain orders k > 2", path.join("."))));
    }
    Ok(())
}

impl RunConfig {
    fn check(&self) -> std::result::Result<(), Invalid> {
        let m = &self.model;
        check_range(&["model", "omega"], m.omega, (0.0..=1.0).contains(&m.omega), "[0, 1]")?;
        check_range(&["model", "mass"], m.mass, m.mass > 0.0, "> 0")?;
        check_range(&["model", "alpha"], m.alpha, m.alpha > -1.0, "> -1")?;
        check_range(&["model", "zeta"], m.zeta, m.zeta > 0.0 && m.zeta <= 2.0, "(0, 2] on the polyatomic channel")?;
        check_range(&["model", "zeta_f"], m.zeta_f, (0.0..=2.0).contains(&m.zeta_f), "[0, 2]")?;
        check_range(&["model", "c_lower"], m.c_lower, m.c_lower > 0.0, "> 0")?;
        check_range(&["model", "c_upper"], m.c_upper, m.c_upper >= m.c_lower, ">= model.c_lower")?;
        check_range(&["model", "norm_b"], m.norm_b, m.norm_b > 0.0, "> 0")?;
        m.angular_model().map_err(|e| invalid(&["model", "angular"], e.to_string()))?;
        m.mixture().map_err(|e| invalid(&["model"], e.to_string()))?;

        self.initial.validate().map_err(|e| invalid(&["initial"], e.to_string()))?;

        let r = &self.run;
        if r.n_particles < 2 {
            return Err(invalid(&["run", "n_particles"], "run.n_particles must be >= 2"));
        }
        check_range(&["run", "t_final"], r.t_final, r.t_final >= 0.0, ">= 0")?;
        if let Some(dt) = r.dt {
            check_range(&["run", "dt"], dt, dt > 0.0, "> 0")?;
        }
        if r.n_records == 0 {
            return Err(invalid(&["run", "n_records"], "run.n_records must be >= 1"));
        }
        for req in &self.output.moments {
            check_range(&["output", "moments"], req.k, req.k >= 0.0, ">= 0")?;
        }

        let p = &self.povzner;
        check_orders(&["povzner", "grid"], &p.grid)?;
        if p.grid.is_empty() || !p.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid(&["povzner", "grid"], "povzner.grid must be non-empty and strictly increasing"));
        }
        for (name, n) in [
            ("frozen_pairs", p.frozen_pairs),
            ("poly_pairs", p.poly_pairs),
            ("polar_nodes", p.polar_nodes),
            ("frozen_azimuth_nodes", p.frozen_azimuth_nodes),
            ("poly_azimuth_nodes", p.poly_azimuth_nodes),
            ("rr_nodes", p.rr_nodes),
            ("frozen_holdout_pairs", p.frozen_holdout_pairs),
        ] {
            if n == 0 {
                return Err(invalid(&["povzner", name], format!("povzner.{name} must be >= 1")));
            }
        }
        check_orders(&["povzner", "check_orders"], &p.check_orders)?;

        check_orders(&["bounds", "frozen_orders"], &self.bounds.frozen_orders)?;
        match &self.bounds.externals {
            ExternalsConfig::Keyword(s) if s == "fit" => {}
            ExternalsConfig::Keyword(s) => {
                return Err(invalid(&["bounds", "externals"], format!("bounds.externals must be \"fit\" or a list, got {s:?}")))
            }
            ExternalsConfig::Given(list) => {
                for e in list {
                    if !(e.k > 2.0 && e.a_bar > 0.0 && e.b_bar >= 0.0 && e.d_bar >= 0.0) {
                        return Err(invalid(
                            &["bounds", "externals"],
                            format!("externals at k = {} need k > 2, a_bar > 0, b_bar >= 0, d_bar >= 0", e.k),
                        ));
                    }
                }
            }
        }
        let fit = &self.bounds.fit;
        if fit.scales.len() < 2 || fit.scales.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid(&["bounds", "fit", "scales"], "bounds.fit.scales needs >= 2 positive entries"));
        }
        check_range(&["bounds", "fit", "theta_ratio"], fit.theta_ratio, fit.theta_ratio > 0.0, "> 0")?;
        if fit.n_samples < crate::quadrature::DEFAULT_BATCHES {
            return Err(invalid(&["bounds", "fit", "n_samples"], "bounds.fit.n_samples must be >= 32"));
        }
        check_range(&["bounds", "fit", "n_sigma"], fit.n_sigma, fit.n_sigma >= 0.0, ">= 0")?;

        let v = &self.verify;
        check_orders(&["verify", "orders"], &v.orders)?;
        for &z in &v.zetas {
            check_range(&["verify", "zetas"], z, z > 0.0 && z <= 2.0, "(0, 2]")?;
        }
        for &w in &v.omegas {
            check_range(&["verify", "omegas"], w, (0.0..=1.0).contains(&w), "[0, 1]")?;
        }
        if v.n_samples < crate::quadrature::DEFAULT_BATCHES {
            return Err(invalid(&["verify", "n_samples"], "verify.n_samples must be >= 32"));
        }
        check_range(&["verify", "n_sigma"], v.n_sigma, v.n_sigma >= 0.0, ">= 0")?;

        let c = &self.checks;
        check_range(&["checks", "slack"], c.slack, c.slack >= 0.0, ">= 0")?;
        check_range(&["checks", "t_burn"], c.t_burn, c.t_burn >= 0.0, ">= 0")?;
        check_range(&["checks", "conservation_tol"], c.conservation_tol, c.conservation_tol >= 0.0, ">= 0")?;
        Ok(())
    }

    /// Validates against the source text so errors carry a line number.
    pub fn validate_in(&self, text: &str) -> Result<()> {
        self.check().map_err(|e| match locate(text, &e.path) {
            Some(line) => Error::ConfigAt { line, message: e.message },
            None => Error::Config(e.message),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_in("")
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => Error::ConfigAt { line: line_of(text, span.start), message: e.message().to_string() },
        None => Error::Config(e.message().to_string()),
    })?;
    cfg.validate_in(text)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Provenance label carried by every floating-point number in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Formula,
    Estimated,
    Fitted,
    Simulated,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Formula => "formula",
            Provenance::Estimated => "estimated",
            Provenance::Fitted => "fitted",
            Provenance::Simulated => "simulated",
        }
    }
}

fn wrap(value: Value, prov: Provenance, overrides: &[(&str, Provenance)]) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => json!({ "value": n, "provenance": prov.label() }),
        Value::Array(items) => Value::Array(items.into_iter().map(|v| wrap(v, prov, overrides)).collect()),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| {
                    let p = overrides.iter().find(|(name, _)| *name == k).map(|o| o.1).unwrap_or(prov);
                    let v = wrap(v, p, overrides);
                    (k, v)
                })
                .collect(),
        ),
        other => other,
    }
}

/// Serializes `x` with every float replaced by `{ value, provenance }`.
/// Keys listed in `overrides` switch the label for their subtree.
pub fn tagged<T: Serialize>(x: &T, prov: Provenance, overrides: &[(&str, Provenance)]) -> Value {
    wrap(serde_json::to_value(x).expect("report values serialize"), prov, overrides)
}

/// One pass/fail line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Result of one orchestrated mode, before anything is written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub checks: Vec<Check>,
    /// `(file name, contents)` of every trace to write.
    pub traces: Vec<(String, String)>,
    pub error: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            2
        } else if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Report without the timestamp, serialized; two runs of the same
/// configuration and seed produce identical canonical forms.
pub fn canonical_report(report: &Value) -> String {
    let mut r = report.clone();
    if let Some(map) = r.as_object_mut() {
        map.remove("timestamp");
    }
    serde_json::to_string_pretty(&r).expect("report serializes")
}

fn sub_seed(seed: u64, purpose: u64) -> u64 {
    stream(seed, &[tag::FIT, purpose]).random()
}

struct Suite<'a> {
    cfg: &'a RunConfig,
    mode: Mode,
    seed: u64,
    report: serde_json::Map<String, Value>,
    checks: Vec<Check>,
    traces: Vec<(String, String)>,
}

struct PovznerStage {
    frozen: PovznerConstants,
    poly: Option<PovznerConstants>,
}

impl<'a> Suite<'a> {
    fn frozen_table(&mut self, extra: &[f64], holdout: bool) -> Result<PovznerConstants> {
        let p = &self.cfg.povzner;
        let angular = self.cfg.model.angular_model()?;
        let settings = p.settings(Channel::Frozen, extra);
        let table = match &p.frozen_override {
            Some(rows) => PovznerConstants::from_values(
                Channel::Frozen,
                rows.iter().map(|r| r[0]).collect(),
                rows.iter().map(|r| r[1]).collect(),
                angular.l1_norm(),
            )?,
            None => frozen_table(&angular, &settings, self.seed)?,
        };
        let prov = if table.overridden { Provenance::Formula } else { Provenance::Estimated };
        self.report.insert("povzner_frozen".into(), tagged(&table, prov, &[]));

        let nb = table.norm_b;
        let mut below = Vec::new();
        for &k in &p.check_orders {
            let c = table.constant_at(k)?;
            below.push(format!("C_{k} = {c:.6}"));
            if !(c < nb) {
                self.checks.push(Check::new(format!("povzner.frozen_below_norm.k{k}"), false, format!("C_{k} = {c} >= ||b|| = {nb}")));
            }
        }
        self.checks.push(Check::new(
            "povzner.frozen_below_norm",
            p.check_orders.iter().all(|&k| table.constant_at(k).map(|c| c < nb).unwrap_or(false)),
            below.join(", "),
        ));
        self.checks.push(Check::new(
            "povzner.frozen_non_increasing",
            is_non_increasing(&table.c_k, 0.0),
            format!("{} orders", table.ks.len()),
        ));
        if holdout && !table.overridden {
            let rep = frozen_holdout(&angular, &table, &settings, p.frozen_holdout_pairs, self.seed)?;
            self.holdout_check("povzner.frozen_holdout", &rep);
            self.report.insert("povzner_frozen_holdout".into(), tagged(&rep, Provenance::Estimated, &[]));
        }
        Ok(table)
    }

    fn holdout_check(&mut self, name: &str, rep: &HoldoutReport) {
        self.checks.push(Check::new(
            name,
            rep.passed,
            format!("worst ratio / C_k = {:.6} at k = {} over {} pairs", rep.worst_excess, rep.worst_k, rep.n_pairs),
        ));
    }

    fn poly_table(&mut self, holdout: bool) -> Result<PovznerConstants> {
        let p = &self.cfg.povzner;
        let mixture = self.cfg.model.mixture()?;
        let spec = mixture.poly();
        let settings = p.settings(Channel::Polyatomic, &[]);
        let table = match &p.poly_override {
            Some(rows) => PovznerConstants::from_values(
                Channel::Polyatomic,
                rows.iter().map(|r| r[0]).collect(),
                rows.iter().map(|r| r[1]).collect(),
                spec.norm_b(),
            )?
            .with_k_star(spec)
            .or_else(|e| match e {
                Error::KStarBeyondGrid { .. } => Ok(PovznerConstants {
                    lb_integral: Some(crate::povzner::lb_integral(spec)),
                    ..PovznerConstants::from_values(
                        Channel::Polyatomic,
                        rows.iter().map(|r| r[0]).collect(),
                        rows.iter().map(|r| r[1]).collect(),
                        spec.norm_b(),
                    )?
                }),
                other => Err(other),
            })?,
            None => poly_table(spec, &settings, self.seed)?,
        };
        let prov = if table.overridden { Provenance::Formula } else { Provenance::Estimated };
        self.report.insert("povzner_poly".into(), tagged(&table, prov, &[("lb_integral", Provenance::Formula)]));
        self.checks.push(Check::new(
            "povzner.poly_non_increasing",
            is_non_increasing(&table.c_k, 0.0),
            format!("{} orders", table.ks.len()),
        ));
        self.checks.push(Check::new(
            "povzner.k_star_found",
            table.k_star.is_some(),
            match table.k_star {
                Some(k) => format!("k* = {k}"),
                None => format!(
                    "k* beyond grid: C_k never below {:.6e} (last C_k = {:.6e})",
                    table.lb_integral.unwrap_or(f64::NAN),
                    table.c_k.last().copied().unwrap_or(f64::NAN)
                ),
            },
        ));
        if holdout && !table.overridden && p.poly_holdout_pairs > 0 {
            let rep = poly_holdout(spec, &table, &settings, p.poly_holdout_pairs, self.seed)?;
            self.holdout_check("povzner.poly_holdout", &rep);
            self.report.insert("povzner_poly_holdout".into(), tagged(&rep, Provenance::Estimated, &[]));
        }
        Ok(table)
    }

    fn povzner(&mut self, extra: &[f64], with_poly: bool, holdout: bool) -> Result<PovznerStage> {
        let frozen = self.frozen_table(extra, holdout)?;
        let poly = if with_poly { Some(self.poly_table(holdout)?) } else { None };
        Ok(PovznerStage { frozen, poly })
    }

    /// Externals at `ks`, fitted or taken from the configuration.
    fn externals(&mut self, ks: &[f64], k_star: f64) -> Result<Vec<ExternalFit>> {
        let mixture = self.cfg.model.mixture()?;
        let fits = match &self.cfg.bounds.externals {
            ExternalsConfig::Given(list) => {
                let mut out = Vec::new();
                for &k in ks {
                    let e = list
                        .iter()
                        .find(|e| e.k == k)
                        .ok_or_else(|| Error::Config(format!("bounds.externals has no entry for k = {k}")))?;
                    out.push(ExternalFit { k, a_bar: Some(e.a_bar), b_bar: Some(e.b_bar), d_bar: e.d_bar, points: Vec::new() });
                }
                self.report.insert("externals".into(), tagged(&out, Provenance::Formula, &[]));
                out
            }
            ExternalsConfig::Keyword(_) => {
                let fits = fit_externals(mixture.poly(), ks, k_star, &self.cfg.bounds.fit, sub_seed(self.seed, 1))?;
                self.report.insert(
                    "externals".into(),
                    tagged(&fits, Provenance::Fitted, &[("points", Provenance::Estimated)]),
                );
                fits
            }
        };
        Ok(fits)
    }

    fn record_verdicts(&mut self, name: &str, checks: &[InequalityCheck], which: Inequality) {
        let sel: Vec<&InequalityCheck> = checks.iter().filter(|c| c.inequality == which).collect();
        let count = |v: Verdict| sel.iter().filter(|c| c.verdict == v).count();
        let (pass, inc, fail) = (count(Verdict::Pass), count(Verdict::Inconclusive), count(Verdict::Fail));
        self.checks.push(Check::new(
            name,
            fail == 0 && !sel.is_empty(),
            format!("{pass} pass, {inc} inconclusive, {fail} fail"),
        ));
    }

    fn weakform(&mut self, stage: &PovznerStage, k_star: Option<f64>) -> Result<()> {
        let v = &self.cfg.verify;
        let mixture = self.cfg.model.mixture()?;
        let catalog = density_catalog();
        let frozen = verify_frozen_catalog(mixture.frozen(), &stage.frozen, &catalog, v, self.seed)?;
        self.record_verdicts("weakform.v_moment", &frozen, Inequality::VMoment);
        self.record_verdicts("weakform.vi_moment", &frozen, Inequality::ViMoment);
        let mut all = frozen;
        match k_star {
            Some(k_star) => {
                let fits = self.externals(&v.orders, k_star)?;
                let omega = verify_omega_catalog(&mixture, &fits, &catalog_densities(&catalog), v, self.seed)?;
                self.record_verdicts("weakform.omega_small_k", &omega, Inequality::OmegaSmallK);
                all.extend(omega);
            }
            None => self.checks.push(Check::new("weakform.omega_small_k", false, "skipped: no k* on the grid")),
        }
        self.report.insert(
            "weakform".into(),
            tagged(&all, Provenance::Estimated, &[("rhs", Provenance::Formula), ("k", Provenance::Formula), ("zeta", Provenance::Formula), ("omega", Provenance::Formula)]),
        );
        Ok(())
    }

    fn requested(&self, extra: &[(MomentFamily, f64)]) -> Vec<(MomentFamily, f64)> {
        let mut out: Vec<(MomentFamily, f64)> = self.cfg.output.moments.iter().map(|r| (r.family, r.k)).collect();
        for &e in extra {
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }

    fn simulation_summary(out: &dsmc::RunOutput) -> Value {
        let s = &out.final_state;
        let counters = |c| {
            let x = s.counters(c);
            json!({ "attempted": x.attempted, "accepted": x.accepted })
        };
        let mut v = tagged(
            &json!({
                "mean_collision_time": out.mean_collision_time,
                "final_time": s.time(),
                "dt": s.dt(),
                "e_max": s.e_max(),
                "initial": out.trace.snapshots.first(),
                "final": out.trace.snapshots.last(),
            }),
            Provenance::Simulated,
            &[],
        );
        let map = v.as_object_mut().expect("object");
        map.insert("steps".into(), json!(s.step_index()));
        map.insert("n_particles".into(), json!(s.ensemble().len()));
        map.insert("records".into(), json!(out.trace.len()));
        map.insert("frozen_collisions".into(), counters(Channel::Frozen));
        map.insert("polyatomic_collisions".into(), counters(Channel::Polyatomic));
        v
    }

    fn envelope(&mut self, name: String, rep: EnvelopeReport) {
        self.checks.push(Check::new(
            name,
            rep.passed,
            format!("worst m_k / envelope = {:.6} over {} times (slack {})", rep.worst_ratio, rep.points.len(), rep.slack),
        ));
        let entry = tagged(&rep, Provenance::Simulated, &[("envelope", Provenance::Formula), ("margin", Provenance::Formula), ("slack", Provenance::Formula), ("t_burn", Provenance::Formula), ("k", Provenance::Formula)]);
        self.report
            .entry("envelopes")
            .or_insert_with(|| Value::Array(Vec::new()))
            .as_array_mut()
            .expect("array")
            .push(entry);
    }

    /// `omega = 0` companion run with internal-moment conservation and the
    /// frozen envelopes.
    fn frozen_run(&mut self, table: &PovznerConstants, trace_name: &str) -> Result<()> {
        let cfg = self.cfg;
        let mixture = cfg.model.mixture_with_omega(0.0)?;
        let orders = &cfg.bounds.frozen_orders;
        let mut extra: Vec<(MomentFamily, f64)> = orders.iter().map(|&k| (MomentFamily::Velocity, k)).collect();
        extra.extend([2.0, 4.0, 6.0].iter().map(|&k| (MomentFamily::Internal, k)));
        let requested = self.requested(&extra);
        let out = dsmc::run(&cfg.initial, &mixture, &cfg.run, &requested, self.seed)?;
        self.traces.push((trace_name.into(), out.trace.to_csv()));

        let mut worst: f64 = 0.0;
        for k in [2.0, 4.0, 6.0] {
            let s = out.trace.series(MomentFamily::Internal, k).expect("requested");
            worst = s.iter().map(|x| (x - s[0]).abs() / s[0]).fold(worst, f64::max);
        }
        self.checks.push(Check::new(
            "simulation.frozen_internal_moments_constant",
            worst <= cfg.checks.conservation_tol,
            format!("max relative change of m_k^I (k = 2, 4, 6) = {worst:.3e}"),
        ));

        let mut bound_sets = Vec::new();
        if mixture.frozen().zeta() > 0.0 {
            let snap = out.trace.snapshots[0].frozen_invariant();
            for &k in orders {
                let set = frozen_bounds(mixture.frozen(), table, &snap, &snap, k)?;
                let series = out.trace.series(MomentFamily::Velocity, k).expect("requested");
                for kind in [EnvelopeKind::PropFrozen, EnvelopeKind::GenFrozen] {
                    let rep = check_envelopes(
                        &out.trace.times,
                        &series,
                        MomentFamily::Velocity,
                        k,
                        BoundSetRef::Frozen(&set),
                        kind,
                        cfg.checks.slack,
                        cfg.checks.t_burn,
                    )?;
                    self.envelope(format!("envelope.{}.k{k}", kind.label()), rep);
                }
                bound_sets.push(set);
            }
        } else {
            self.checks.push(Check::new("envelope.frozen", true, "skipped: frozen envelopes need zeta_f > 0"));
        }
        self.report.insert(
            "frozen_run".into(),
            json!({
                "simulation": Self::simulation_summary(&out),
                "trace": trace_name,
                "bounds": tagged(&bound_sets, Provenance::Formula, &[("c_k", Provenance::Estimated)]),
            }),
        );
        Ok(())
    }

    /// Mixed run with the small- and large-order envelopes.
    fn omega_run(&mut self, k_star: f64, trace_name: &str) -> Result<()> {
        let cfg = self.cfg;
        let mixture = cfg.model.mixture()?;
        let orders = OmegaOrders::from_k_star(k_star);
        let requested = self.requested(&[(MomentFamily::Total, orders.k_small), (MomentFamily::Total, orders.k_large)]);
        let fits = self.externals(&orders.fit_orders(), k_star)?;
        let out = dsmc::run(&cfg.initial, &mixture, &cfg.run, &requested, self.seed)?;
        self.traces.push((trace_name.into(), out.trace.to_csv()));
        let m2 = out.trace.snapshots[0].m2;
        let mut sets = Vec::new();
        for (k, kinds) in [
            (orders.k_small, [EnvelopeKind::GenOmegaSmallK, EnvelopeKind::PropOmegaSmallK]),
            (orders.k_large, [EnvelopeKind::GenOmegaLargeK, EnvelopeKind::PropOmegaLargeK]),
        ] {
            let set = omega_bounds(m2, &mixture, &fits, k_star, k)?;
            let series = out.trace.series(MomentFamily::Total, k).expect("requested");
            for kind in kinds {
                let rep = check_envelopes(
                    &out.trace.times,
                    &series,
                    MomentFamily::Total,
                    k,
                    BoundSetRef::Omega(&set),
                    kind,
                    cfg.checks.slack,
                    cfg.checks.t_burn,
                )?;
                self.envelope(format!("envelope.{}.k{k}", kind.label()), rep);
            }
            sets.push(set);
        }
        self.report.insert(
            "omega_run".into(),
            json!({
                "simulation": Self::simulation_summary(&out),
                "trace": trace_name,
                "orders": tagged(&orders, Provenance::Formula, &[("k_star", Provenance::Estimated)]),
                "bounds": tagged(&sets, Provenance::Formula, &[]),
            }),
        );
        Ok(())
    }

    fn simulate(&mut self) -> Result<()> {
        let mixture = self.cfg.model.mixture()?;
        let requested = self.requested(&[]);
        let out = dsmc::run(&self.cfg.initial, &mixture, &self.cfg.run, &requested, self.seed)?;
        self.traces.push(("trace.csv".into(), out.trace.to_csv()));
        self.report.insert("simulation".into(), Self::simulation_summary(&out));
        Ok(())
    }

    fn constants(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mixture = cfg.model.mixture()?;
        let m = mixture.mass();
        let stage = self.povzner(&cfg.bounds.frozen_orders, cfg.model.omega > 0.0, false)?;
        let snap = initial_snapshot(&cfg.initial, mixture.frozen().zeta().max(f64::MIN_POSITIVE), m)?;
        self.report.insert("snapshot".into(), tagged(&snap, Provenance::Formula, &[]));
        let mut frozen = Vec::new();
        for &k in &cfg.bounds.frozen_orders {
            frozen.push(frozen_bounds(mixture.frozen(), &stage.frozen, &snap, &snap, k)?);
        }
        self.report.insert("frozen_bounds".into(), tagged(&frozen, Provenance::Formula, &[("c_k", Provenance::Estimated)]));
        if let Some(poly) = &stage.poly {
            if let Some(k_star) = poly.k_star {
                let orders = OmegaOrders::from_k_star(k_star);
                let fits = self.externals(&orders.fit_orders(), k_star)?;
                let mut sets = Vec::new();
                for k in [orders.k_small, orders.k_large] {
                    sets.push(omega_bounds(snap.m2, &mixture, &fits, k_star, k)?);
                }
                self.report.insert("omega_bounds".into(), tagged(&sets, Provenance::Formula, &[]));
            }
        }
        Ok(())
    }

    fn run_mode(&mut self) -> Result<()> {
        let omega = self.cfg.model.omega;
        match self.mode {
            Mode::Simulate => self.simulate(),
            Mode::Povzner => self.povzner(&self.cfg.bounds.frozen_orders.clone(), true, true).map(|_| ()),
            Mode::Constants => self.constants(),
            Mode::VerifyWeakform => {
                let stage = self.povzner(&self.cfg.verify.orders.clone(), true, false)?;
                let k_star = stage.poly.as_ref().and_then(|p| p.k_star);
                self.weakform(&stage, k_star)
            }
            Mode::FullSuite => {
                let mut extra = self.cfg.verify.orders.clone();
                extra.extend(&self.cfg.bounds.frozen_orders);
                let stage = self.povzner(&extra, true, true)?;
                let k_star = stage.poly.as_ref().and_then(|p| p.k_star);
                self.weakform(&stage, k_star)?;
                self.frozen_run(&stage.frozen, "trace_frozen.csv")?;
                match k_star {
                    Some(k) if omega > 0.0 => self.omega_run(k, "trace.csv"),
                    Some(_) => {
                        self.checks.push(Check::new("envelope.omega", true, "skipped: model.omega = 0"));
                        Ok(())
                    }
                    None => {
                        self.checks.push(Check::new("envelope.omega", false, "skipped: no k* on the grid"));
                        Ok(())
                    }
                }
            }
        }
    }
}

/// Analytic snapshot of the initial density (moments add over components).
pub fn initial_snapshot(initial: &InitialDensity, zeta: f64, mass: f64) -> Result<MomentSnapshot> {
    match initial {
        InitialDensity::Single { density } => density.snapshot(zeta, mass),
        InitialDensity::Bimodal { first, second } => {
            let (a, b) = (first.snapshot(zeta, mass)?, second.snapshot(zeta, mass)?);
            MomentSnapshot::new(a.m0 + b.m0, a.m2 + b.m2, a.m2_v + b.m2_v, a.m2_i + b.m2_i, a.mz_v + b.mz_v, a.mz_i + b.mz_i)
        }
    }
}

/// Runs `mode` and assembles the report. Module errors are captured in the
/// outcome (status `incomplete`) rather than returned.
pub fn orchestrate(cfg: &RunConfig, mode: Mode, threads: usize) -> Outcome {
    let mut suite = Suite {
        cfg,
        mode,
        seed: cfg.seed,
        report: serde_json::Map::new(),
        checks: Vec::new(),
        traces: Vec::new(),
    };
    let result = suite.run_mode();
    let error = result.err().map(|e| e.to_string());
    let Suite { mut report, checks, traces, .. } = suite;
    let passed = error.is_none() && checks.iter().all(|c| c.passed);
    let mut head = serde_json::Map::new();
    head.insert("software".into(), json!({ "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") }));
    head.insert("mode".into(), json!(mode.to_string()));
    head.insert("status".into(), json!(if error.is_none() { "complete" } else { "incomplete" }));
    head.insert("error".into(), json!(error));
    head.insert("passed".into(), json!(passed));
    head.insert("seed".into(), json!(cfg.seed));
    head.insert("threads".into(), json!(threads));
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    head.insert("timestamp".into(), json!({ "unix_seconds": stamp }));
    head.insert("config".into(), json!(toml::to_string(cfg).unwrap_or_default()));
    head.insert("checks".into(), serde_json::to_value(&checks).expect("checks serialize"));
    head.append(&mut report);
    Outcome { report: Value::Object(head), checks, traces, error }
}

/// Writes all outputs into `dir`: every file is staged under a temporary
/// name first, so either all outputs appear or none do.
pub fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, String)> = outcome.traces.clone();
    let report = serde_json::to_string_pretty(&outcome.report)? + "\n";
    files.push(("report.json".into(), report));
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, contents) in &files {
        let fin = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, contents) {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(Error::io(&tmp, e));
        }
        staged.push((tmp, fin));
    }
    let mut done = Vec::new();
    for (tmp, fin) in &staged {
        if let Err(e) = fs::rename(tmp, fin) {
            cleanup(&staged);
            for d in &done {
                let _ = fs::remove_file(d);
            }
            return Err(Error::io(fin, e));
        }
        done.push(fin.clone());
    }
    Ok(done)
}

/// Checks (and creates if needed) the output directory before any work.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotADirectory, "output path is not a directory")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".polykin-write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Entry point of the binary; returns the process exit status.
pub fn execute(cli: &Cli) -> i32 {
    if cli.print_defaults {
        print!("{}", print_defaults(cli.mode));
        return 0;
    }
    let path = cli.config.as_ref().expect("clap enforces --config");
    let mut cfg = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("polykin: {}: {e}", path.display());
            return 2;
        }
    };
    if let Some(m) = cfg.mode {
        if m != cli.mode {
            eprintln!("polykin: config mode {m} does not match command-line mode {}", cli.mode);
            return 2;
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Err(e) = prepare_out_dir(&cli.out) {
        eprintln!("polykin: {e}");
        return 2;
    }
    let threads = match cli.threads {
        Some(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("thread pool already initialized: {e}");
            }
            rayon::current_num_threads()
        }
        None => rayon::current_num_threads(),
    };
    log::info!("running {} with seed {} on {threads} threads", cli.mode, cfg.seed);
    let outcome = orchestrate(&cfg, cli.mode, threads);
    for c in &outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(e) = &outcome.error {
        eprintln!("polykin: {} incomplete: {e}", cli.mode);
    }
    match write_outputs(&cli.out, &outcome) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("polykin: {e}");
            return 2;
        }
    }
    outcome.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config("mode = \"simulate\"\n").unwrap();
        assert_eq!(cfg.mode, Some(Mode::Simulate));
        assert_eq!(RunConfig { mode: None, ..cfg }, RunConfig::default());
    }

    #[test]
    fn out_of_range_omega_names_key_and_line() {
        let err = parse_config("seed = 3\n\n[model]\nzeta = 1.0\nomega = 1.5\n").unwrap_err();
        match err {
            Error::ConfigAt { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("model.omega") && message.contains("[0, 1]"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse_config("[run]\nn_particles = 10\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigAt { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn frozen_rate_exponent_zero_is_accepted() {
        let cfg = parse_config("[model]\nzeta_f = 0.0\n").unwrap();
        assert_eq!(cfg.model.zeta_f, 0.0);
        assert!(parse_config("[model]\nzeta = 0.0\n").is_err());
    }

    #[test]
    fn printed_defaults_parse_back() {
        let text = print_defaults(Mode::FullSuite);
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg, RunConfig { mode: Some(Mode::FullSuite), ..RunConfig::default() });
    }

    #[test]
    fn externals_keyword_must_be_fit() {
        assert!(parse_config("[bounds]\nexternals = \"guess\"\n").is_err());
        let cfg = parse_config("[[bounds.externals]]\nk = 4.0\na_bar = 1.0\nb_bar = 2.0\nd_bar = 0.5\n").unwrap();
        assert!(matches!(cfg.bounds.externals, ExternalsConfig::Given(ref v) if v.len() == 1));
    }

    #[test]
    fn every_float_carries_provenance() {
        let v = tagged(&json!({ "a": 1.5, "n": 3, "rhs": [2.0], "s": "x" }), Provenance::Estimated, &[("rhs", Provenance::Formula)]);
        assert_eq!(v["a"], json!({ "value": 1.5, "provenance": "estimated" }));
        assert_eq!(v["n"], json!(3));
        assert_eq!(v["rhs"][0]["provenance"], json!("formula"));
    }

    #[test]
    fn canonical_form_drops_timestamp() {
        let a = json!({ "x": 1, "timestamp": { "unix_seconds": 1 } });
        let b = json!({ "x": 1, "timestamp": { "unix_seconds": 2 } });
        assert_eq!(canonical_report(&a), canonical_report(&b));
    }

    #[test]
    fn bimodal_snapshot_adds_components() {
        let init = default_initial();
        let s = initial_snapshot(&init, 1.0, 1.0).unwrap();
        assert!((s.m0 - 1.0).abs() < 1e-15);
        let ens = init.sample_ensemble(100_000, 1.0, 4).unwrap();
        let e = MomentSnapshot::from_ensemble(&ens, 1.0).unwrap();
        assert!((e.m2_v - s.m2_v).abs() / s.m2_v < 0.02);
    }
}
