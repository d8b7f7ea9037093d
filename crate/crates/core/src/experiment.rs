//! Figure experiments: parameter sweeps over the equilibrium solvers, emitted
//! as CSV tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::UpdateForm;
use crate::equilibrium::{
    batch_welfare, batch_welfare_optimum, mvp_equilibrium, mvp_expected_reward, mvp_principal_utility, mvp_welfare,
    EquilibriumResult, LatencyFamily,
};
use crate::error::{input, Error, Result};
use crate::info_model::{InformationModel, ScoreSequence};
use crate::montecarlo::{simulate, Acquisition, Mechanism, ReportPolicy, SimConfig, StrategyProfile};
use crate::mvp::TimeValue;
use crate::pm_baseline::{pm_batch_equilibrium, pm_batch_welfare, pm_race_equilibrium, AccessFunction};
use crate::scoring::ScoringRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Batch race against the centralized optimum, linear and exponential access.
    FigOriginal,
    /// Expected score after `k` reports and the marginal gain of each report.
    FigLate,
    /// Equilibrium effort against ease `lambda`.
    FigEas,
    /// Equilibrium effort against signal noise `beta`.
    FigNoise,
    /// Equilibrium effort against the value of the first report.
    FigSubst,
    /// Welfare and principal utility over an `(n, lambda)` grid.
    FigWelfareHeatmap,
    /// User-supplied score sequence or model over a `lambda` grid.
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::FigOriginal,
        Experiment::FigLate,
        Experiment::FigEas,
        Experiment::FigNoise,
        Experiment::FigSubst,
        Experiment::FigWelfareHeatmap,
        Experiment::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FigOriginal => "fig_original",
            Experiment::FigLate => "fig_late",
            Experiment::FigEas => "fig_eas",
            Experiment::FigNoise => "fig_noise",
            Experiment::FigSubst => "fig_subst",
            Experiment::FigWelfareHeatmap => "fig_welfare_heatmap",
            Experiment::Custom => "custom",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown experiment {s:?}")))
    }
}

/// Overrides of the per-experiment defaults. Unset fields keep the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    /// Rate of the batch access function.
    pub access_lambda: Option<f64>,
    pub eta: Option<f64>,
    pub n: Option<usize>,
    pub ns: Option<Vec<usize>>,
    /// Scoring-rule scale.
    pub scale: Option<f64>,
    pub v: Option<Vec<f64>>,
    pub v1s: Option<Vec<f64>>,
    pub v2: Option<f64>,
    pub k_max: Option<usize>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self { experiment, parameters: Parameters::default(), output_path: None }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Input(format!("bad experiment config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| Error::Input(format!("bad experiment config: {e}")))
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// A result table with numeric cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Input(format!("cannot write {}: {e}", self.name));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|x| format_number(*x))).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Input(format!("cannot write {}: {e}", self.name)))
    }
}

/// Rounds to 9 significant digits and prints the shortest string that reads
/// back as the rounded value, in exponent form for very small or large magnitudes.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("valid float");
    if rounded == 0.0 {
        return "0".into();
    }
    if rounded.abs() < 1e-5 || rounded.abs() >= 1e16 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub experiment: Experiment,
    pub tables: Vec<Table>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `<name>.csv` for every table plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, config: &ExperimentConfig, wall_time_seconds: f64) -> Result<Vec<PathBuf>> {
        let io = |e: std::io::Error| Error::Input(format!("cannot write to {}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();
        for table in &self.tables {
            let path = dir.join(format!("{}.csv", table.name));
            let file = fs::File::create(&path).map_err(io)?;
            table.write_csv(std::io::BufWriter::new(file))?;
            written.push(path);
        }
        let manifest = serde_json::json!({
            "experiment": self.experiment.name(),
            "config": config,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_seconds": wall_time_seconds,
            "files": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        });
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable") + "\n").map_err(io)?;
        written.push(path);
        Ok(written)
    }
}

fn at_point<T>(table: &str, label: &str, x: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("{table} at {label} = {x}: {m}")),
        Error::Input(m) => Error::Input(format!("{table} at {label} = {x}: {m}")),
        other => other,
    })
}

fn grid_map<T, U, F>(grid: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    grid.par_iter().map(f).collect()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `(lambda, effort)` points of the ease sweep.
fn default_ease_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (10..=40).map(|i| i as f64 / 20.0).collect();
    g.extend((21..=30).map(|i| i as f64 / 10.0));
    g.extend((7..=30).map(|i| i as f64 / 2.0));
    g
}

fn default_noise_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..20).map(|i| i as f64 / 200.0).collect();
    g.extend((5..=19).map(|i| i as f64 / 50.0));
    g
}

fn label(x: f64) -> String {
    format_number(x)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.parameters;
    let tables = match config.experiment {
        Experiment::FigOriginal => fig_original(p)?,
        Experiment::FigLate => fig_late(p)?,
        Experiment::FigEas => fig_eas(p)?,
        Experiment::FigNoise => fig_noise(p)?,
        Experiment::FigSubst => fig_subst(p)?,
        Experiment::FigWelfareHeatmap => fig_welfare_heatmap(p)?,
        Experiment::Custom => custom(p)?,
    };
    Ok(ExperimentOutput { experiment: config.experiment, tables })
}

fn fig_original(p: &Parameters) -> Result<Vec<Table>> {
    let lam = p.access_lambda.unwrap_or(3.0);
    let ns = p.ns.clone().unwrap_or_else(|| (2..=20).collect());
    let mut tables = Vec::new();
    for (kind, access) in [("linear", AccessFunction::linear(lam)?), ("exponential", AccessFunction::exponential(lam)?)] {
        let name = format!("fig_original_{kind}");
        let mut table = Table::new(
            &name,
            &["n", "opt_effort", "opt_residual", "opt_welfare", "opt_total_cost", "pm_effort", "pm_residual", "pm_corner", "pm_welfare", "pm_total_cost"],
        );
        table.rows = grid_map(&ns, |&n| {
            at_point(&name, "n", n as f64, (|| {
                let v = ScoreSequence::saturating(n, 1.0)?;
                let opt = batch_welfare_optimum(&access, &v, n)?;
                let pm = pm_batch_equilibrium(&access, n)?;
                let nf = n as f64;
                Ok(vec![
                    nf,
                    opt.effort,
                    opt.kkt_residual(),
                    batch_welfare(&access, &v, n, opt.effort)?,
                    nf * opt.effort,
                    pm.effort,
                    pm.kkt_residual(),
                    flag(pm.corner),
                    pm_batch_welfare(&access, n, pm.effort)?,
                    nf * pm.effort,
                ])
            })())
        })?;
        tables.push(table);
    }
    Ok(tables)
}

fn fig_late(p: &Parameters) -> Result<Vec<Table>> {
    let k_max = p.k_max.unwrap_or(10);
    let model = InformationModel::binary_noisy(p.alpha.unwrap_or(0.02), p.beta.unwrap_or(0.2), k_max)?;
    let rule = ScoringRule::quadratic().with_scale(p.scale.unwrap_or(1.0))?;
    let scores = model.expected_scores(&rule, k_max)?;
    let mut score = Table::new("fig_late_score", &["k", "score"]);
    score.rows = scores.iter().enumerate().map(|(k, s)| vec![k as f64, *s]).collect();
    let mut reward = Table::new("fig_late_reward", &["k", "reward"]);
    reward.rows = scores.windows(2).enumerate().map(|(k, w)| vec![(k + 1) as f64, w[1] - w[0]]).collect();
    Ok(vec![score, reward])
}

fn sequence(values: &[f64], n: usize) -> Result<ScoreSequence> {
    let v = ScoreSequence::new(values.to_vec())?;
    v.require_agents(n)?;
    Ok(v)
}

fn fig_eas(p: &Parameters) -> Result<Vec<Table>> {
    let n = p.n.unwrap_or(2);
    let v = sequence(p.v.as_deref().unwrap_or(&[0.0, 2.0, 3.0]), n)?;
    let h = TimeValue::exponential(p.eta.unwrap_or(1.0))?;
    let lambdas = p.lambdas.clone().unwrap_or_else(default_ease_grid);
    let pm = pm_race_equilibrium(&v, n)?;
    let mut table = Table::new("fig_eas", &["lambda", "mvp_effort", "mvp_residual", "mvp_corner", "pm_effort", "pm_residual"]);
    table.rows = grid_map(&lambdas, |&lam| {
        at_point("fig_eas", "lambda", lam, (|| {
            let eq = mvp_equilibrium(&LatencyFamily::new(lam)?, &h, &v, n)?;
            Ok(vec![lam, eq.effort, eq.kkt_residual(), flag(eq.corner), pm.effort, pm.kkt_residual()])
        })())
    })?;
    Ok(vec![table])
}

fn effort_columns(prefix: &str, lambdas: &[f64]) -> Vec<String> {
    lambdas
        .iter()
        .flat_map(|l| {
            let l = label(*l);
            [format!("{prefix}_lambda_{l}_effort"), format!("{prefix}_lambda_{l}_residual")]
        })
        .collect()
}

fn mvp_efforts(h: &TimeValue, v: &ScoreSequence, n: usize, lambdas: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * lambdas.len());
    for &lam in lambdas {
        let eq: EquilibriumResult = mvp_equilibrium(&LatencyFamily::new(lam)?, h, v, n)?;
        out.extend([eq.effort, eq.kkt_residual()]);
    }
    Ok(out)
}

fn fig_noise(p: &Parameters) -> Result<Vec<Table>> {
    let n = p.n.unwrap_or(2);
    let alpha = p.alpha.unwrap_or(0.1);
    // Scale 20 reproduces the reference effort curves.
    let rule = ScoringRule::quadratic().with_scale(p.scale.unwrap_or(20.0))?;
    let h = TimeValue::exponential(p.eta.unwrap_or(1.0))?;
    let betas = p.betas.clone().unwrap_or_else(default_noise_grid);
    let lambdas = p.lambdas.clone().unwrap_or_else(|| vec![0.5, 1.0, 3.0, 12.0]);
    let mut columns: Vec<String> = vec!["beta".into()];
    columns.extend((1..=n).map(|k| format!("v{k}")));
    columns.extend(["pm_effort".into(), "pm_residual".into()]);
    columns.extend(effort_columns("mvp", &lambdas));
    let rows = grid_map(&betas, |&beta| {
        at_point("fig_noise", "beta", beta, (|| {
            let v = InformationModel::binary_noisy(alpha, beta, n)?.v_sequence(&rule, n)?;
            let pm = pm_race_equilibrium(&v, n)?;
            let mut row = vec![beta];
            row.extend(&v.values()[1..=n]);
            row.extend([pm.effort, pm.kkt_residual()]);
            row.extend(mvp_efforts(&h, &v, n, &lambdas)?);
            Ok(row)
        })())
    })?;
    Ok(vec![Table { name: "fig_noise".into(), columns, rows }])
}

fn fig_subst(p: &Parameters) -> Result<Vec<Table>> {
    let v2 = p.v2.unwrap_or(2.0);
    let v1s = p.v1s.clone().unwrap_or_else(|| (0..=25).map(|i| 1.0 + i as f64 / 25.0).collect());
    let lambdas = p.lambdas.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
    let h = TimeValue::exponential(p.eta.unwrap_or(1.0))?;
    let mut columns: Vec<String> = vec!["v1".into(), "pm_effort".into(), "pm_residual".into()];
    columns.extend(effort_columns("mvp", &lambdas));
    let rows = grid_map(&v1s, |&v1| {
        at_point("fig_subst", "v1", v1, (|| {
            let v = ScoreSequence::new(vec![0.0, v1, v2])?;
            let pm = pm_race_equilibrium(&v, 2)?;
            let mut row = vec![v1, pm.effort, pm.kkt_residual()];
            row.extend(mvp_efforts(&h, &v, 2, &lambdas)?);
            Ok(row)
        })())
    })?;
    Ok(vec![Table { name: "fig_subst".into(), columns, rows }])
}

fn fig_welfare_heatmap(p: &Parameters) -> Result<Vec<Table>> {
    let ns = p.ns.clone().unwrap_or_else(|| (2..=11).collect());
    let lambdas = p.lambdas.clone().unwrap_or_else(|| (1..=10).map(f64::from).collect());
    let h = TimeValue::exponential(p.eta.unwrap_or(1.0))?;
    let grid: Vec<(usize, f64)> = ns.iter().flat_map(|&n| lambdas.iter().map(move |&l| (n, l))).collect();
    let mut table = Table::new(
        "fig_welfare_heatmap",
        &["n", "lambda", "mvp_effort", "mvp_residual", "mvp_welfare", "mvp_principal_utility", "pm_effort", "pm_residual", "pm_welfare"],
    );
    table.rows = grid_map(&grid, |&(n, lam)| {
        at_point("fig_welfare_heatmap", &format!("n = {n}, lambda"), lam, (|| {
            let v = match &p.v {
                Some(v) => sequence(v, n)?,
                None => ScoreSequence::saturating(n, 1.0)?,
            };
            let lat = LatencyFamily::new(lam)?;
            let eq = mvp_equilibrium(&lat, &h, &v, n)?;
            let pm = pm_race_equilibrium(&v, n)?;
            Ok(vec![
                n as f64,
                lam,
                eq.effort,
                eq.kkt_residual(),
                mvp_welfare(&lat, &h, &v, n, eq.effort)?,
                mvp_principal_utility(&lat, &h, &v, n, eq.effort)?,
                pm.effort,
                pm.kkt_residual(),
                mvp_welfare(&lat, &h, &v, n, pm.effort)?,
            ])
        })())
    })?;
    Ok(vec![table])
}

fn custom(p: &Parameters) -> Result<Vec<Table>> {
    let n = p.n.unwrap_or(2);
    let h = TimeValue::exponential(p.eta.unwrap_or(1.0))?;
    let rule = ScoringRule::quadratic().with_scale(p.scale.unwrap_or(1.0))?;
    let model = match (p.alpha, p.beta) {
        (Some(a), Some(b)) => Some(InformationModel::binary_noisy(a, b, n)?),
        (None, None) => None,
        _ => return input("custom experiment needs both alpha and beta, or neither"),
    };
    let v = match (&p.v, &model) {
        (Some(v), None) => sequence(v, n)?,
        (None, Some(m)) => m.v_sequence(&rule, n)?,
        (Some(_), Some(_)) => return input("custom experiment takes either v or a noise model, not both"),
        (None, None) => return input("custom experiment needs v or alpha and beta"),
    };
    let lambdas = p.lambdas.clone().unwrap_or_else(|| vec![1.0]);
    let pm = pm_race_equilibrium(&v, n)?;
    let mut table = Table::new(
        "custom",
        &["lambda", "mvp_effort", "mvp_residual", "mvp_welfare", "mvp_principal_utility", "mvp_expected_reward", "pm_effort", "pm_residual", "pm_welfare"],
    );
    let solved = grid_map(&lambdas, |&lam| {
        at_point("custom", "lambda", lam, (|| {
            let lat = LatencyFamily::new(lam)?;
            let eq = mvp_equilibrium(&lat, &h, &v, n)?;
            let row = vec![
                lam,
                eq.effort,
                eq.kkt_residual(),
                mvp_welfare(&lat, &h, &v, n, eq.effort)?,
                mvp_principal_utility(&lat, &h, &v, n, eq.effort)?,
                mvp_expected_reward(&lat, &h, &v, n, eq.effort, eq.effort)?,
                pm.effort,
                pm.kkt_residual(),
                mvp_welfare(&lat, &h, &v, n, pm.effort)?,
            ];
            Ok((lam, eq.effort, row))
        })())
    })?;
    table.rows = solved.iter().map(|(_, _, r)| r.clone()).collect();
    let mut tables = vec![table];

    if let (Some(trials), Some(model)) = (p.trials, model) {
        let mut sim = Table::new("custom_simulation", &["lambda", "effort", "analytic_reward", "simulated_reward", "simulated_reward_se"]);
        for (lam, effort, row) in &solved {
            let config = SimConfig {
                model: model.clone(),
                mechanism: Mechanism::Mvp,
                acquisition: Acquisition::Latency(LatencyFamily::new(*lam)?),
                time_value: Some(h.clone()),
                rule,
                update_form: UpdateForm::Likelihood,
                profile: StrategyProfile::symmetric(n, *effort, ReportPolicy::Truthful),
                trials,
                seed: p.seed.unwrap_or(0),
                parallel: true,
            };
            let stats = at_point("custom_simulation", "lambda", *lam, simulate(&config))?;
            sim.rows.push(vec![*lam, *effort, row[5], stats.reward_mean[0], stats.reward_se[0]]);
        }
        tables.push(sim);
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(e: Experiment) -> ExperimentOutput {
        run_experiment(&ExperimentConfig::new(e)).unwrap()
    }

    fn row_at(table: &Table, key: &str, x: f64) -> Vec<f64> {
        let j = table.columns.iter().position(|c| c == key).unwrap();
        table.rows.iter().find(|r| (r[j] - x).abs() < 1e-12).unwrap().clone()
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(2.0), "2");
        assert_eq!(format_number(0.2907730123456), "0.290773012");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(0.015000000000000001), "0.015");
        assert_eq!(format_number(1.23456789012e-7), "1.23456789e-7");
        assert_eq!(format_number(2.220446049250313e-16), "2.22044605e-16");
        assert_eq!(format_number(0.0001), "0.0001");
    }

    #[test]
    fn ease_sweep_contains_reference_points() {
        let out = run(Experiment::FigEas);
        let t = out.table("fig_eas").unwrap();
        let r = row_at(t, "lambda", 1.0);
        assert!((r[1] - 0.290773).abs() < 1e-6);
        assert!(t.column("pm_effort").unwrap().iter().all(|c| *c == 0.25));
        let r = row_at(t, "lambda", 0.5);
        assert_eq!(r[1], 0.0);
        assert!(t.column("mvp_residual").unwrap().iter().all(|r| *r <= 1e-8));
    }

    #[test]
    fn late_report_tables() {
        let out = run(Experiment::FigLate);
        let score = out.table("fig_late_score").unwrap().column("score").unwrap();
        for (s, want) in score.iter().zip([0.9608, 0.962456, 0.96656]) {
            assert!((s - want).abs() < 1e-6);
        }
        let reward = out.table("fig_late_reward").unwrap();
        let col = reward.column("reward").unwrap();
        let best = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(reward.rows[best][0], 3.0);
    }

    #[test]
    fn substitution_sweep_endpoints() {
        let out = run(Experiment::FigSubst);
        let t = out.table("fig_subst").unwrap();
        let j = t.columns.iter().position(|c| c == "mvp_lambda_1_effort").unwrap();
        assert_eq!(row_at(t, "v1", 1.0)[j], 0.0);
        assert!((row_at(t, "v1", 2.0)[j] - 0.207107).abs() < 1e-6);
        for r in &t.rows {
            assert!((r[1] - (r[0] - 1.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_sweep_starts_at_reference_values() {
        let out = run(Experiment::FigNoise);
        let t = out.table("fig_noise").unwrap();
        let r = row_at(t, "beta", 0.0);
        let col = |name: &str| t.columns.iter().position(|c| c == name).unwrap();
        assert!((r[col("pm_effort")] - 0.9).abs() < 1e-9);
        assert!((r[col("mvp_lambda_1_effort")] - 0.448683).abs() < 1e-6);
        assert!((r[col("mvp_lambda_0.5_effort")] - 0.341641).abs() < 1e-6);
        for name in t.columns.iter().filter(|c| c.ends_with("residual")) {
            assert!(t.column(name).unwrap().iter().all(|r| *r <= 1e-8), "{name}");
        }
    }

    #[test]
    fn original_race_tables() {
        let out = run(Experiment::FigOriginal);
        let lin = out.table("fig_original_linear").unwrap();
        let r = row_at(lin, "n", 2.0);
        assert!((r[1] - 2.0 / 9.0).abs() < 1e-12);
        assert!((r[3] - 4.0 / 9.0).abs() < 1e-12);
        for r in lin.rows.iter().filter(|r| r[0] >= 3.0) {
            assert!(r[8].abs() < 1e-10);
        }
        let exp = out.table("fig_original_exponential").unwrap();
        let costs = exp.column("pm_total_cost").unwrap();
        assert!(costs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn csv_is_reproducible() {
        let config = ExperimentConfig::new(Experiment::FigSubst);
        let render = || {
            let out = run_experiment(&config).unwrap();
            let mut buf = Vec::new();
            out.tables[0].write_csv(&mut buf).unwrap();
            buf
        };
        let a = render();
        assert_eq!(a, render());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("v1,pm_effort,pm_residual,mvp_lambda_1_effort"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn config_parsing() {
        let toml = "experiment = \"fig_noise\"\noutput_path = \"out\"\n[parameters]\nscale = 20.0\nlambdas = [1.0]\n";
        let c = ExperimentConfig::parse(toml).unwrap();
        assert_eq!(c.experiment, Experiment::FigNoise);
        assert_eq!(c.parameters.lambdas, Some(vec![1.0]));
        let json = r#"{"experiment": "custom", "parameters": {"v": [0, 1, 1.5]}}"#;
        assert_eq!(ExperimentConfig::parse(json).unwrap().experiment, Experiment::Custom);
        assert!(ExperimentConfig::parse("experiment = \"fig_nine\"").is_err());
        assert!(ExperimentConfig::parse("experiment = \"fig_eas\"\n[parameters]\nlamda = [1.0]").is_err());
        assert!("fig_nine".parse::<Experiment>().is_err());
    }

    #[test]
    fn custom_requires_values() {
        assert!(run_experiment(&ExperimentConfig::new(Experiment::Custom)).is_err());
        let mut config = ExperimentConfig::new(Experiment::Custom);
        config.parameters.alpha = Some(0.1);
        config.parameters.beta = Some(0.1);
        config.parameters.scale = Some(20.0);
        config.parameters.lambdas = Some(vec![3.0]);
        config.parameters.trials = Some(20_000);
        let out = run_experiment(&config).unwrap();
        let sim = out.table("custom_simulation").unwrap();
        let r = &sim.rows[0];
        assert!((r[2] - r[3]).abs() < 4.0 * r[4]);
    }
}
