//! Summary-statistic input, report rows and atomic output.
//!
//! Input is a headered TSV with columns
//! `snp_id  p_value  beta_hat  se  alpha  p_convention  effect_scale`
//! and an optional trailing `follow_up`. Column order is free; `se`,
//! `p_value` (when `se` is set), `alpha`, `p_convention`, `effect_scale` and
//! `follow_up` may be empty, in which case run-level defaults apply. Lines
//! starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::{self, CorrectionSettings, Corrections};
use crate::error::{Error, Result};
use crate::estimators::{EstimateRecord, Method};
use crate::normal::{self, TestContext};
use crate::simulation::{ScenarioRun, SummaryTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PConvention {
    #[default]
    OneSided,
    TwoSided,
}

impl FromStr for PConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_sided" => Ok(Self::OneSided),
            "two_sided" => Ok(Self::TwoSided),
            _ => Err(Error::Config(format!("unknown p convention '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectScale {
    #[default]
    LogOr,
    Coefficient,
}

impl FromStr for EffectScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_or" => Ok(Self::LogOr),
            "coefficient" => Ok(Self::Coefficient),
            _ => Err(Error::Config(format!("unknown effect scale '{s}'"))),
        }
    }
}

impl EffectScale {
    /// The one place where internal effects become reported values.
    pub fn display(self, effect: f64) -> f64 {
        match self {
            Self::LogOr => effect.exp(),
            Self::Coefficient => effect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub snp_id: String,
    pub p_value: Option<f64>,
    pub beta_hat: f64,
    pub se: Option<f64>,
    pub alpha: f64,
    pub p_convention: PConvention,
    pub effect_scale: EffectScale,
    pub follow_up: Option<String>,
}

impl SummaryRecord {
    /// `-1` when the reported effect points away from the risk direction.
    pub fn orientation(&self) -> f64 {
        if self.beta_hat < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_value.is_none() && self.se.is_none() {
            return Err(Error::Config(format!("record {}: need p_value or se", self.snp_id)));
        }
        if !self.beta_hat.is_finite() || self.beta_hat == 0.0 {
            return Err(Error::Config(format!("record {}: beta_hat must be finite and nonzero", self.snp_id)));
        }
        if let Some(p) = self.p_value {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("record {}: p_value {p} outside (0, 1)", self.snp_id)));
            }
        }
        if let Some(se) = self.se {
            if !(se > 0.0 && se.is_finite()) {
                return Err(Error::Config(format!("record {}: se {se} must be positive", self.snp_id)));
            }
        }
        Ok(())
    }

    /// Test statistic implied by the p-value under this record's convention.
    pub fn t_from_p(&self, p: f64) -> Result<f64> {
        match self.p_convention {
            PConvention::OneSided => normal::isf(p),
            PConvention::TwoSided => normal::isf(0.5 * p),
        }
    }

    /// `(p_value, beta_hat)` implied by a context built from this record.
    pub fn reemit(&self, ctx: &TestContext) -> (f64, f64) {
        let p = match self.p_convention {
            PConvention::OneSided => normal::sf(ctx.t_obs),
            PConvention::TwoSided => 2.0 * normal::sf(ctx.t_obs),
        };
        (p, self.orientation() * ctx.naive_effect())
    }
}

/// Turns a record into a significant test context on the risk-oriented scale.
pub fn ingest(record: &SummaryRecord) -> Result<TestContext> {
    record.validate()?;
    let beta = record.beta_hat.abs();
    let t_obs = match record.se {
        Some(se) => beta / se,
        None => record.t_from_p(record.p_value.expect("validated"))?,
    };
    let c = normal::critical_value(record.alpha)?;
    if !(t_obs > c) {
        return Err(Error::RecordNotSignificant { snp_id: record.snp_id.clone(), t_obs, c });
    }
    let se = record.se.unwrap_or(beta / t_obs);
    TestContext::new(t_obs, record.alpha, se)
}

/// Run-level defaults for empty cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputDefaults {
    pub alpha: Option<f64>,
    pub p_convention: PConvention,
    pub effect_scale: EffectScale,
}

impl Default for InputDefaults {
    fn default() -> Self {
        Self { alpha: None, p_convention: PConvention::OneSided, effect_scale: EffectScale::LogOr }
    }
}

/// A parsed data line, or the reason it was rejected.
#[derive(Debug)]
pub struct ParsedLine {
    pub line: usize,
    pub record: Result<SummaryRecord>,
}

const REQUIRED_COLUMNS: [&str; 3] = ["snp_id", "p_value", "beta_hat"];

fn parse_number(field: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse { line, message: format!("{name}: cannot parse '{field}'") })
}

/// Parses TSV text. Structural problems with the header are fatal; problems
/// with a data line are reported for that line only.
pub fn parse_tsv(text: &str, defaults: &InputDefaults) -> Result<Vec<ParsedLine>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));

    let Some((header_line, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    for req in REQUIRED_COLUMNS {
        if !names.contains(&req) {
            return Err(Error::Parse { line: header_line, message: format!("missing column '{req}'") });
        }
    }
    let col = |name: &str| names.iter().position(|n| *n == name);
    let (i_id, i_p, i_beta) = (col("snp_id").unwrap(), col("p_value").unwrap(), col("beta_hat").unwrap());
    let (i_se, i_alpha, i_conv, i_scale, i_follow) =
        (col("se"), col("alpha"), col("p_convention"), col("effect_scale"), col("follow_up"));

    Ok(lines
        .map(|(line, text)| {
            let fields: Vec<&str> = text.split('\t').map(str::trim).collect();
            let get = |i: Option<usize>| i.and_then(|i| fields.get(i).copied()).unwrap_or("");
            let record = (|| -> Result<SummaryRecord> {
                if fields.len() > names.len() {
                    return Err(Error::Parse { line, message: format!("{} fields, header has {}", fields.len(), names.len()) });
                }
                let snp_id = get(Some(i_id));
                if snp_id.is_empty() {
                    return Err(Error::Parse { line, message: "empty snp_id".into() });
                }
                let beta_hat = parse_number(get(Some(i_beta)), "beta_hat", line)?
                    .ok_or_else(|| Error::Parse { line, message: "beta_hat is required".into() })?;
                let alpha = parse_number(get(i_alpha), "alpha", line)?
                    .or(defaults.alpha)
                    .ok_or_else(|| Error::Parse { line, message: "no alpha in file or on the command line".into() })?;
                let p_convention = match get(i_conv) {
                    "" => defaults.p_convention,
                    s => s.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
                };
                let effect_scale = match get(i_scale) {
                    "" => defaults.effect_scale,
                    s => s.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
                };
                let follow_up = Some(get(i_follow)).filter(|s| !s.is_empty()).map(str::to_owned);
                let record = SummaryRecord {
                    snp_id: snp_id.to_owned(),
                    p_value: parse_number(get(Some(i_p)), "p_value", line)?,
                    beta_hat,
                    se: parse_number(get(i_se), "se", line)?,
                    alpha,
                    p_convention,
                    effect_scale,
                    follow_up,
                };
                record.validate().map_err(|e| Error::Parse { line, message: e.to_string() })?;
                Ok(record)
            })();
            ParsedLine { line, record }
        })
        .collect())
}

/// Point and interval on the reporting scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEstimate {
    pub label: String,
    pub point: f64,
    pub low: Option<f64>,
    pub high: Option<f64>,
}

impl ReportEstimate {
    fn new(label: &str, rec: &EstimateRecord, scale: EffectScale) -> Self {
        Self {
            label: label.to_owned(),
            point: scale.display(rec.point),
            low: rec.low().map(|x| scale.display(x)),
            high: rec.high().map(|x| scale.display(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub snp_id: String,
    pub effect_scale: EffectScale,
    pub t_obs: f64,
    pub se: f64,
    pub c: f64,
    pub naive: f64,
    pub mle: ReportEstimate,
    pub b_l: ReportEstimate,
    pub b_h: ReportEstimate,
    pub b_bma: f64,
    pub r_hat: f64,
    pub posterior_w1: f64,
    pub extra: Vec<ReportEstimate>,
    pub follow_up: Option<String>,
}

/// Column label for an additional prior.
pub fn prior_label(method: Method, a: f64, b: f64) -> String {
    match method {
        Method::BayesCustom => format!("B({a},{b})"),
        m => m.tag().to_owned(),
    }
}

impl ReportRow {
    pub fn new(record: &SummaryRecord, ctx: &TestContext, fit: &Corrections, settings: &CorrectionSettings) -> Self {
        let scale = record.effect_scale;
        let extra = fit
            .extra
            .iter()
            .zip(&settings.extra_priors)
            .map(|(f, (m, p))| ReportEstimate::new(&prior_label(*m, p.a, p.b), &f.estimate, scale))
            .collect();
        Self {
            snp_id: record.snp_id.clone(),
            effect_scale: scale,
            t_obs: ctx.t_obs,
            se: ctx.se,
            c: ctx.c,
            naive: scale.display(fit.naive.point),
            mle: ReportEstimate::new("MLE", &fit.mle, scale),
            b_l: ReportEstimate::new("B.L", &fit.bayes_low.estimate, scale),
            b_h: ReportEstimate::new("B.H", &fit.bayes_high.estimate, scale),
            b_bma: scale.display(fit.bma.point),
            r_hat: fit.bridge.r_hat,
            posterior_w1: fit.posterior_w1,
            extra,
            follow_up: record.follow_up.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub snp_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub seed: u64,
    pub settings: CorrectionSettings,
}

impl RunMetadata {
    pub fn new(seed: u64, settings: &CorrectionSettings) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").to_owned(), seed, settings: settings.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: RunMetadata,
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<SkippedRecord>,
}

/// Seed of record `index` under a master seed.
pub fn record_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(index as u64)
}

/// Corrects every parsed record. Rows keep input order; failing records are
/// collected in `skipped`.
pub fn correct_records(parsed: Vec<ParsedLine>, settings: &CorrectionSettings, seed: u64) -> Report {
    let outcomes: Vec<std::result::Result<ReportRow, SkippedRecord>> = parsed
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            let line = p.line;
            let record = p.record.map_err(|e| SkippedRecord { line, snp_id: None, reason: e.to_string() })?;
            let skip = |e: Error| SkippedRecord { line, snp_id: Some(record.snp_id.clone()), reason: e.to_string() };
            let ctx = ingest(&record).map_err(skip)?;
            let fit = correction::correct(&ctx, settings, record_seed(seed, i)).map_err(skip)?;
            Ok(ReportRow::new(&record, &ctx, &fit, settings))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(s) => skipped.push(s),
        }
    }
    Report { metadata: RunMetadata::new(seed, settings), rows, skipped }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// TSV with columns
/// `snp_id scale t_obs se c N MLE MLE_low MLE_high B.L B.L_low B.L_high
/// B.H B.H_low B.H_high B.BMA r_hat w1`, then `<label> <label>_low
/// <label>_high` per extra prior, then `follow_up`. Effects are odds ratios
/// when the row's scale is `log_or`.
pub fn report_tsv(report: &Report, extra_labels: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# wincurse {} seed={}", report.metadata.version, report.metadata.seed);
    let mut header: Vec<String> = [
        "snp_id", "scale", "t_obs", "se", "c", "N", "MLE", "MLE_low", "MLE_high", "B.L", "B.L_low", "B.L_high", "B.H",
        "B.H_low", "B.H_high", "B.BMA", "r_hat", "w1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for l in extra_labels {
        header.extend([l.clone(), format!("{l}_low"), format!("{l}_high")]);
    }
    header.push("follow_up".into());
    out.push_str(&header.join("\t"));
    out.push('\n');
    for r in &report.rows {
        let scale = match r.effect_scale {
            EffectScale::LogOr => "OR",
            EffectScale::Coefficient => "coef",
        };
        let mut f: Vec<String> = vec![
            r.snp_id.clone(),
            scale.into(),
            format!("{:.6}", r.t_obs),
            format!("{:.6e}", r.se),
            format!("{:.6}", r.c),
            format!("{:.6}", r.naive),
        ];
        for e in [&r.mle, &r.b_l, &r.b_h] {
            f.extend([format!("{:.6}", e.point), fmt_opt(e.low), fmt_opt(e.high)]);
        }
        f.extend([format!("{:.6}", r.b_bma), format!("{:.6e}", r.r_hat), format!("{:.6}", r.posterior_w1)]);
        for e in &r.extra {
            f.extend([format!("{:.6}", e.point), fmt_opt(e.low), fmt_opt(e.high)]);
        }
        f.push(r.follow_up.clone().unwrap_or_default());
        out.push_str(&f.join("\t"));
        out.push('\n');
    }
    out
}

pub fn report_json(report: &Report) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

/// Writes `contents` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Simulation settings read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// True effect for power-indexed cells; `log 1.1` when absent.
    pub mu: Option<f64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Power-indexed cells. Ignored when `n` is set.
    #[serde(default = "default_powers")]
    pub powers: Vec<f64>,
    /// Fixed sample size; cells are then indexed by `mus` and `alphas`.
    pub n: Option<u64>,
    #[serde(default)]
    pub mus: Vec<f64>,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default)]
    pub chain: ChainSection,
    /// Draws per model used by the bridge, capped at the retained draws; 0
    /// means every retained draw.
    #[serde(default = "default_bridge_draws")]
    pub bridge_draws: usize,
    /// Also fit the bimodal and uniform priors.
    #[serde(default = "default_true")]
    pub all_priors: bool,
    #[serde(default)]
    pub dump_replicates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
    pub spike_update: crate::sampler::SpikeUpdate,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = crate::sampler::ChainConfig::default();
        Self { iterations: c.iterations, burn_in: c.burn_in, proposal_sd: c.proposal_sd, spike_update: c.spike_update }
    }
}

fn default_replicates() -> usize {
    crate::simulation::DEFAULT_REPLICATES
}
fn default_sigma() -> f64 {
    crate::simulation::STUDY_SIGMA
}
fn default_alphas() -> Vec<f64> {
    crate::simulation::STUDY_ALPHAS.to_vec()
}
fn default_powers() -> Vec<f64> {
    crate::simulation::STUDY_POWERS.to_vec()
}
fn default_u_max() -> f64 {
    crate::sampler::DEFAULT_U_MAX
}
fn default_bridge_draws() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}

impl SimulateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn settings(&self) -> Result<CorrectionSettings> {
        let chain = crate::sampler::ChainConfig {
            iterations: self.chain.iterations,
            burn_in: self.chain.burn_in,
            proposal_sd: self.chain.proposal_sd,
            spike_update: self.chain.spike_update,
            ..Default::default()
        };
        chain.validate()?;
        crate::sampler::SpikeSlabPrior::skeptical(self.u_max).validate()?;
        let mut s = if self.all_priors {
            CorrectionSettings::study(chain, self.u_max)
        } else {
            CorrectionSettings { chain, u_max: self.u_max, ..Default::default() }
        };
        s.bridge.draws_per_model = (self.bridge_draws > 0).then(|| self.bridge_draws.min(chain.retained()));
        Ok(s)
    }

    /// Every cell, validated before anything runs.
    pub fn scenarios(&self) -> Result<Vec<crate::simulation::Scenario>> {
        use crate::simulation::{study_mu, Scenario};
        if self.alphas.is_empty() {
            return Err(Error::Config("no alpha levels".into()));
        }
        let cells: Vec<Scenario> = match self.n {
            Some(n) => {
                if self.mus.is_empty() {
                    return Err(Error::Config("a fixed n needs a list of mus".into()));
                }
                let mut v = Vec::new();
                for &mu in &self.mus {
                    for &a in &self.alphas {
                        v.push(Scenario::with_n(mu, self.sigma, a, n, self.replicates)?);
                    }
                }
                v
            }
            None => {
                if self.powers.is_empty() {
                    return Err(Error::Config("no power levels".into()));
                }
                let mu = self.mu.unwrap_or_else(study_mu);
                let mut v = Vec::new();
                for &a in &self.alphas {
                    for &p in &self.powers {
                        v.push(Scenario::from_power(mu, self.sigma, a, p, self.replicates)?);
                    }
                }
                v
            }
        };
        self.settings()?;
        Ok(cells)
    }
}

/// Long-format table: one line per (cell, method).
pub fn summary_tsv(tables: &[SummaryTable], seed: u64, version: &str) -> String {
    let mut out = format!("# wincurse {version} seed={seed}\n");
    out.push_str("alpha\tpower\tn\tmu\tsigma\tc\tmethod\tmean\tbias\tvariance\trmse\n");
    for t in tables {
        let s = &t.scenario;
        for r in &t.rows {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{}\t{:.6}\t{}\t{:.6}\t{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
                s.alpha, s.power, s.n, s.mu_true, s.sigma, t.c, r.method, r.mean, r.bias, r.variance, r.rmse
            );
        }
    }
    out
}

/// Per-replicate estimates, one line per (cell, replicate).
pub fn replicate_tsv(runs: &[ScenarioRun]) -> String {
    let mut out = String::new();
    let Some(first) = runs.first() else {
        return out;
    };
    let methods: Vec<String> = first.table.rows.iter().map(|r| r.method.to_string()).collect();
    let _ = writeln!(out, "alpha\tpower\tn\treplicate\tseed\tt_obs\tr_hat\t{}", methods.join("\t"));
    for run in runs {
        let s = &run.table.scenario;
        for r in &run.replicates {
            let est: Vec<String> = r.estimates.iter().map(|(_, v)| format!("{v:.6e}")).collect();
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{}\t{}\t{}\t{:.6}\t{:.6e}\t{}",
                s.alpha, s.power, s.n, r.index, r.seed, r.t_obs, r.r_hat, est.join("\t")
            );
        }
    }
    out
}

/// Sample sizes for each (alpha, power) pair.
pub fn sample_size_tsv(mu: f64, sigma: f64, alphas: &[f64], powers: &[f64]) -> Result<String> {
    let table = crate::simulation::sample_size_table(mu, sigma, alphas, powers)?;
    let mut out = String::from("alpha");
    for p in powers {
        let _ = write!(out, "\t{p}");
    }
    out.push('\n');
    for (a, row) in alphas.iter().zip(table) {
        let _ = write!(out, "{a}");
        for n in row {
            let _ = write!(out, "\t{n}");
        }
        out.push('\n');
    }
    Ok(out)
}
