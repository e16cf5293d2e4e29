//! Monte Carlo study: replicate generation, fitting every variant, and the
//! mean / SE / RMSE / coverage summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{confidence_interval, fit_alternating, ConfidenceLevel, FitOptions};
use crate::model::{CensoringMode, Estimator, ModelVariant};
use crate::numeric::CompensatedSum;
use crate::simulation::{generate, replicate_seed, DgpConfig, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Data-generating process; `dgp.seed` is the master seed and
    /// `dgp.n_raw` is ignored in favor of `n_raw`.
    pub dgp: DgpConfig,
    pub variants: Vec<ModelVariant>,
    pub replicates: usize,
    pub n_raw: Vec<usize>,
    pub levels: Vec<ConfidenceLevel>,
    pub workers: usize,
    pub fit: FitOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            variants: ModelVariant::ALL.to_vec(),
            replicates: 1000,
            n_raw: vec![10_000, 3000],
            levels: ConfidenceLevel::ALL.to_vec(),
            workers: 1,
            fit: FitOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.n_raw.is_empty() {
            return Err(Error::InvalidArgument("n_raw list is empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        self.fit.validate()?;
        for &n in &self.n_raw {
            DgpConfig { n_raw: n, ..self.dgp.clone() }.validate()?;
        }
        Ok(())
    }

    /// Names of the `2p` parameters, θ_t block first.
    pub fn parameter_names(&self) -> Vec<String> {
        let p = self.dgp.dimension();
        (1..=p)
            .map(|k| format!("theta_t{k}"))
            .chain((1..=p).map(|k| format!("theta_c{k}")))
            .collect()
    }

    fn truth(&self) -> Vec<f64> {
        self.dgp
            .theta_t_true
            .as_slice()
            .iter()
            .chain(self.dgp.theta_c_true.as_slice())
            .copied()
            .collect()
    }
}

/// One variant's fit on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub variant: ModelVariant,
    /// `(θ_t, θ_c)` estimates; absent if the fit failed.
    pub estimates: Option<Vec<f64>>,
    pub standard_errors: Option<Vec<f64>>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub dataset_size: usize,
    pub labeled: usize,
    pub fits: Vec<ReplicateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCoverage {
    pub level: ConfidenceLevel,
    /// Fraction of intervals containing the truth; absent when no
    /// replicate produced standard errors.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub truth: f64,
    pub mean: Option<f64>,
    pub mean_se: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Vec<LevelCoverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: ModelVariant,
    pub parameters: Vec<ParameterSummary>,
    /// Coverage averaged over all parameters, per level.
    pub average_coverage: Vec<LevelCoverage>,
    /// Replicates with a fit (included in mean and RMSE).
    pub fitted: usize,
    /// Replicates whose fit returned an error (excluded everywhere).
    pub failed: usize,
    /// Fitted replicates that hit the outer iteration cap (still included).
    pub nonconverged: usize,
    /// Fitted replicates without standard errors (excluded from SE and
    /// coverage).
    pub without_se: usize,
}

/// PUSA-to-conventional RMSE ratio for one parameter block, under the three
/// ways of combining the components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRatio {
    pub censoring: CensoringMode,
    pub block: String,
    pub ratio_of_norms: Option<f64>,
    pub mean_of_ratios: Option<f64>,
    pub ratio_of_sums: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_raw: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub rng: String,
    pub parameter_names: Vec<String>,
    pub mean_dataset_size: f64,
    pub mean_labeled: f64,
    pub variants: Vec<VariantSummary>,
    pub rmse_ratios: Vec<RmseRatio>,
    pub outcomes: Vec<ReplicateOutcome>,
}

fn run_replicate(config: &ExperimentConfig, n_raw: usize, replicate: usize) -> ReplicateOutcome {
    let seed = replicate_seed(config.dgp.seed, n_raw, replicate);
    let dgp = DgpConfig {
        n_raw,
        seed,
        c_observed_for_labeled: true,
        ..config.dgp.clone()
    };
    let sim = match generate(&dgp) {
        Ok(sim) => sim,
        Err(e) => {
            let fits = config
                .variants
                .iter()
                .map(|&variant| failed_fit(variant, &e))
                .collect();
            return ReplicateOutcome { replicate, seed, dataset_size: 0, labeled: 0, fits };
        }
    };
    let observed = sim.dataset;
    let unobserved = observed.without_labeled_censoring();
    let fits = config
        .variants
        .iter()
        .map(|&variant| {
            let data = match variant.censoring {
                CensoringMode::CObserved => &observed,
                CensoringMode::CUnobserved => &unobserved,
            };
            match fit_alternating(data, variant, &config.fit) {
                Ok(fit) => ReplicateFit {
                    variant,
                    estimates: Some(fit.estimates()),
                    standard_errors: fit.standard_errors(),
                    converged: fit.converged,
                    outer_iterations: fit.outer_iterations,
                    error: None,
                },
                Err(e) => failed_fit(variant, &e),
            }
        })
        .collect();
    ReplicateOutcome {
        replicate,
        seed,
        dataset_size: observed.len(),
        labeled: observed.labeled_count(),
        fits,
    }
}

fn failed_fit(variant: ModelVariant, e: &Error) -> ReplicateFit {
    ReplicateFit {
        variant,
        estimates: None,
        standard_errors: None,
        converged: false,
        outer_iterations: 0,
        error: Some(e.to_string()),
    }
}

/// Runs every replicate for every sample size and summarizes. Replicate
/// seeds depend only on the master seed, the sample size and the replicate
/// index, and aggregation runs in index order, so the result does not
/// depend on `workers`.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    config
        .n_raw
        .iter()
        .map(|&n_raw| {
            let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
                (0..config.replicates)
                    .into_par_iter()
                    .map(|r| run_replicate(config, n_raw, r))
                    .collect()
            });
            Ok(summarize(config, n_raw, outcomes))
        })
        .collect()
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = CompensatedSum::new();
    let mut n = 0usize;
    for v in values {
        sum.add(v);
        n += 1;
    }
    (n > 0).then(|| sum.value() / n as f64)
}

/// Aggregates replicate outcomes, in the order given.
pub fn summarize(config: &ExperimentConfig, n_raw: usize, outcomes: Vec<ReplicateOutcome>) -> ExperimentReport {
    let names = config.parameter_names();
    let truth = config.truth();
    let variants: Vec<VariantSummary> = config
        .variants
        .iter()
        .enumerate()
        .map(|(vi, &variant)| {
            let fits: Vec<&ReplicateFit> = outcomes.iter().map(|o| &o.fits[vi]).collect();
            let fitted: Vec<&ReplicateFit> = fits.iter().copied().filter(|f| f.estimates.is_some()).collect();
            let with_se: Vec<&ReplicateFit> = fitted.iter().copied().filter(|f| f.standard_errors.is_some()).collect();
            let parameters: Vec<ParameterSummary> = names
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let est: Vec<f64> = fitted.iter().map(|f| f.estimates.as_ref().expect("fitted")[k]).collect();
                    let coverage = config
                        .levels
                        .iter()
                        .map(|&level| {
                            let intervals: Vec<(f64, f64)> = with_se
                                .iter()
                                .filter_map(|f| {
                                    let se = f.standard_errors.as_ref().expect("with se")[k];
                                    confidence_interval(f.estimates.as_ref().expect("fitted")[k], se, level).ok()
                                })
                                .collect();
                            LevelCoverage {
                                level,
                                coverage: coverage_rate(&intervals, truth[k]).ok(),
                            }
                        })
                        .collect();
                    ParameterSummary {
                        parameter: name.clone(),
                        truth: truth[k],
                        mean: mean(est.iter().copied()),
                        mean_se: mean(with_se.iter().map(|f| f.standard_errors.as_ref().expect("with se")[k])),
                        rmse: rmse(&est, truth[k]).ok(),
                        coverage,
                    }
                })
                .collect();
            let average_coverage = config
                .levels
                .iter()
                .enumerate()
                .map(|(li, &level)| {
                    let per: Option<Vec<f64>> = parameters.iter().map(|p| p.coverage[li].coverage).collect();
                    LevelCoverage {
                        level,
                        coverage: per.and_then(mean),
                    }
                })
                .collect();
            VariantSummary {
                variant,
                average_coverage,
                fitted: fitted.len(),
                failed: fits.len() - fitted.len(),
                nonconverged: fitted.iter().filter(|f| !f.converged).count(),
                without_se: fitted.len() - with_se.len(),
                parameters,
            }
        })
        .collect();
    let rmse_ratios = rmse_ratios(&variants, config.dgp.dimension());
    ExperimentReport {
        n_raw,
        replicates: outcomes.len(),
        master_seed: config.dgp.seed,
        rng: RNG_ALGORITHM.to_string(),
        parameter_names: names,
        mean_dataset_size: mean(outcomes.iter().map(|o| o.dataset_size as f64)).unwrap_or(0.0),
        mean_labeled: mean(outcomes.iter().map(|o| o.labeled as f64)).unwrap_or(0.0),
        variants,
        rmse_ratios,
        outcomes,
    }
}

fn rmse_ratios(variants: &[VariantSummary], p: usize) -> Vec<RmseRatio> {
    let mut out = Vec::new();
    for censoring in [CensoringMode::CObserved, CensoringMode::CUnobserved] {
        let find = |estimator| {
            variants
                .iter()
                .find(|v| v.variant == ModelVariant::new(estimator, censoring))
        };
        let (Some(pusa), Some(conv)) = (find(Estimator::Pusa), find(Estimator::Conventional)) else {
            continue;
        };
        for (block, range) in [("theta_t", 0..p), ("theta_c", p..2 * p)] {
            let get = |v: &VariantSummary| -> Option<Vec<f64>> {
                v.parameters[range.clone()].iter().map(|s| s.rmse).collect()
            };
            let (a, b) = (get(pusa), get(conv));
            let (ratio_of_norms, mean_of_ratios, ratio_of_sums) = match (a, b) {
                (Some(a), Some(b)) => (
                    rmse_ratio(&a, &b).ok(),
                    mean_of_ratios(&a, &b),
                    ratio_of_sums(&a, &b),
                ),
                _ => (None, None, None),
            };
            out.push(RmseRatio {
                censoring,
                block: block.to_string(),
                ratio_of_norms,
                mean_of_ratios,
                ratio_of_sums,
            });
        }
    }
    out
}

/// `sqrt(mean((est − truth)²))`.
pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    mean(estimates.iter().map(|e| (e - truth) * (e - truth)))
        .map(f64::sqrt)
        .ok_or_else(|| Error::InvalidArgument("rmse of an empty list".into()))
}

/// Fraction of closed intervals `[lo, hi]` containing `truth`.
pub fn coverage_rate(intervals: &[(f64, f64)], truth: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::InvalidArgument("coverage of an empty list".into()));
    }
    let hits = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    Ok(hits as f64 / intervals.len() as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Block RMSE ratio `‖pusa‖ / ‖conventional‖` (Euclidean norms).
pub fn rmse_ratio(pusa: &[f64], conventional: &[f64]) -> Result<f64> {
    if pusa.len() != conventional.len() {
        return Err(Error::DimensionMismatch {
            expected: conventional.len(),
            actual: pusa.len(),
        });
    }
    let denom = norm(conventional);
    if !(denom > 0.0) {
        return Err(Error::NonPositive {
            name: "conventional rmse",
            value: denom,
        });
    }
    Ok(norm(pusa) / denom)
}

fn mean_of_ratios(pusa: &[f64], conventional: &[f64]) -> Option<f64> {
    if conventional.iter().any(|c| !(*c > 0.0)) {
        return None;
    }
    mean(pusa.iter().zip(conventional).map(|(a, b)| a / b))
}

fn ratio_of_sums(pusa: &[f64], conventional: &[f64]) -> Option<f64> {
    let denom: f64 = conventional.iter().sum();
    (denom > 0.0).then(|| pusa.iter().sum::<f64>() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub const ALL: [Self; 3] = [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json];
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

/// Writes the report files into `dir` and returns their paths:
/// `summary.csv`, `rmse_ratio.csv`, `estimates.csv` (one row per replicate,
/// variant and parameter), `table.md` and `report.json`.
pub fn emit_report(reports: &[ExperimentReport], levels: &[ConfidenceLevel], dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Csv => {
                let path = dir.join("summary.csv");
                fs::write(&path, summary_csv(reports, levels)?)?;
                written.push(path);
                let path = dir.join("rmse_ratio.csv");
                fs::write(&path, ratio_csv(reports)?)?;
                written.push(path);
                let path = dir.join("estimates.csv");
                fs::write(&path, estimates_csv(reports)?)?;
                written.push(path);
            }
            ReportFormat::Markdown => {
                let path = dir.join("table.md");
                fs::write(&path, markdown(reports, levels))?;
                written.push(path);
            }
            ReportFormat::Json => {
                let path = dir.join("report.json");
                fs::write(&path, serde_json::to_string_pretty(reports)? + "\n")?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn summary_csv(reports: &[ExperimentReport], levels: &[ConfidenceLevel]) -> Result<String> {
    let mut header: Vec<String> = ["n_raw", "variant", "parameter", "truth", "mean", "mean_se", "rmse"]
        .map(String::from)
        .to_vec();
    header.extend(levels.iter().map(|l| format!("coverage_{}", l.label())));
    header.extend(["fitted", "failed", "nonconverged", "without_se"].map(String::from));
    let mut rows = vec![header];
    for r in reports {
        for v in &r.variants {
            for p in &v.parameters {
                let mut row = vec![
                    r.n_raw.to_string(),
                    v.variant.name().to_string(),
                    p.parameter.clone(),
                    p.truth.to_string(),
                    opt(p.mean),
                    opt(p.mean_se),
                    opt(p.rmse),
                ];
                row.extend(p.coverage.iter().map(|c| opt(c.coverage)));
                row.extend([v.fitted, v.failed, v.nonconverged, v.without_se].map(|n| n.to_string()));
                rows.push(row);
            }
        }
    }
    csv_string(rows)
}

fn ratio_csv(reports: &[ExperimentReport]) -> Result<String> {
    let mut rows = vec![["n_raw", "censoring", "block", "ratio_of_norms", "mean_of_ratios", "ratio_of_sums"]
        .map(String::from)
        .to_vec()];
    for r in reports {
        for q in &r.rmse_ratios {
            rows.push(vec![
                r.n_raw.to_string(),
                censoring_name(q.censoring).to_string(),
                q.block.clone(),
                opt(q.ratio_of_norms),
                opt(q.mean_of_ratios),
                opt(q.ratio_of_sums),
            ]);
        }
    }
    csv_string(rows)
}

fn estimates_csv(reports: &[ExperimentReport]) -> Result<String> {
    let mut rows = vec![["n_raw", "replicate", "seed", "variant", "parameter", "estimate", "se", "converged", "error"]
        .map(String::from)
        .to_vec()];
    for r in reports {
        for o in &r.outcomes {
            for f in &o.fits {
                for (k, name) in r.parameter_names.iter().enumerate() {
                    rows.push(vec![
                        r.n_raw.to_string(),
                        o.replicate.to_string(),
                        o.seed.to_string(),
                        f.variant.name().to_string(),
                        name.clone(),
                        opt(f.estimates.as_ref().map(|e| e[k])),
                        opt(f.standard_errors.as_ref().map(|s| s[k])),
                        u8::from(f.converged).to_string(),
                        f.error.clone().unwrap_or_default(),
                    ]);
                }
            }
        }
    }
    csv_string(rows)
}

fn censoring_name(c: CensoringMode) -> &'static str {
    match c {
        CensoringMode::CObserved => "c_observed",
        CensoringMode::CUnobserved => "c_unobserved",
    }
}

fn markdown(reports: &[ExperimentReport], levels: &[ConfidenceLevel]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(
            s,
            "## n_raw = {} ({} replicates, mean n = {:.3}, mean labeled = {:.3})\n",
            r.n_raw, r.replicates, r.mean_dataset_size, r.mean_labeled
        );
        let _ = writeln!(s, "### Estimates\n");
        let mut header = "| Parameter | True |".to_string();
        let mut rule = "|---|---|".to_string();
        for v in &r.variants {
            let _ = write!(header, " {0} mean | {0} SE | {0} RMSE |", v.variant.name());
            rule.push_str("---|---|---|");
        }
        let _ = writeln!(s, "{header}\n{rule}");
        for (k, name) in r.parameter_names.iter().enumerate() {
            let truth = r.variants.first().map_or(f64::NAN, |v| v.parameters[k].truth);
            let mut line = format!("| {name} | {truth} |");
            for v in &r.variants {
                let p = &v.parameters[k];
                let _ = write!(line, " {} | {} | {} |", fixed(p.mean, 3), fixed(p.mean_se, 3), fixed(p.rmse, 3));
            }
            let _ = writeln!(s, "{line}");
        }
        if !r.rmse_ratios.is_empty() {
            let _ = writeln!(s, "\nRMSE ratio (PUSA / conventional):\n");
            let _ = writeln!(s, "| Censoring | Block | ratio of norms | mean of ratios | ratio of sums |\n|---|---|---|---|---|");
            for q in &r.rmse_ratios {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    censoring_name(q.censoring),
                    q.block,
                    fixed(q.ratio_of_norms, 3),
                    fixed(q.mean_of_ratios, 3),
                    fixed(q.ratio_of_sums, 3)
                );
            }
        }
        for (li, level) in levels.iter().enumerate() {
            let _ = writeln!(s, "\n### {}% coverage\n", level.label());
            let mut header = "| Parameter |".to_string();
            let mut rule = "|---|".to_string();
            for v in &r.variants {
                let _ = write!(header, " {} |", v.variant.name());
                rule.push_str("---|");
            }
            let _ = writeln!(s, "{header}\n{rule}");
            for (k, name) in r.parameter_names.iter().enumerate() {
                let mut line = format!("| {name} |");
                for v in &r.variants {
                    let _ = write!(line, " {} |", fixed(v.parameters[k].coverage[li].coverage, 3));
                }
                let _ = writeln!(s, "{line}");
            }
            let mut line = "| Average |".to_string();
            for v in &r.variants {
                let _ = write!(line, " {} |", fixed(v.average_coverage[li].coverage, 3));
            }
            let _ = writeln!(s, "{line}");
        }
        let _ = writeln!(s, "\n### Fit status\n\n| Variant | fitted | failed | non-converged | without SE |\n|---|---|---|---|---|");
        for v in &r.variants {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                v.variant.name(),
                v.fitted,
                v.failed,
                v.nonconverged,
                v.without_se
            );
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 1.0], 2.0).unwrap(), 1.0);
        assert!((rmse(&[2.1, 1.9, 2.2], 2.0).unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], 1.0).is_err());
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_rate(&[(1.0, 3.0)], 2.0).unwrap(), 1.0);
        assert_eq!(coverage_rate(&[(3.0, 4.0), (0.0, 1.0)], 2.0).unwrap(), 0.0);
        assert_eq!(coverage_rate(&[(2.0, 2.0)], 2.0).unwrap(), 1.0);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(rmse_ratio(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(rmse_ratio(&[0.0, 0.0], &[0.3, 0.4]).unwrap(), 0.0);
        assert!(rmse_ratio(&[0.1, 0.1], &[0.0, 0.0]).is_err());
        assert_eq!(mean_of_ratios(&[1.0, 1.0], &[2.0, 4.0]), Some(0.375));
        assert_eq!(ratio_of_sums(&[1.0, 1.0], &[2.0, 4.0]), Some(1.0 / 3.0));
    }

    fn tiny(replicates: usize, variants: Vec<ModelVariant>) -> ExperimentConfig {
        ExperimentConfig {
            dgp: DgpConfig { seed: 17, ..Default::default() },
            variants,
            replicates,
            n_raw: vec![400],
            workers: 2,
            ..Default::default()
        }
    }

    #[test]
    fn single_replicate_report_equals_fit() {
        let cfg = tiny(1, vec![ModelVariant::PUSA_C_OBSERVED]);
        let report = &run_monte_carlo(&cfg).unwrap()[0];
        let fit = &report.outcomes[0].fits[0];
        let est = fit.estimates.as_ref().unwrap();
        let summary = &report.variants[0];
        for (k, p) in summary.parameters.iter().enumerate() {
            assert_eq!(p.mean, Some(est[k]));
            assert!((p.rmse.unwrap() - (est[k] - p.truth).abs()).abs() < 1e-15);
            assert_eq!(p.mean_se, fit.standard_errors.as_ref().map(|s| s[k]));
        }
    }

    #[test]
    fn aggregation_ignores_replicate_order() {
        let cfg = tiny(6, ModelVariant::ALL.to_vec());
        let report = run_monte_carlo(&cfg).unwrap().remove(0);
        let mut reversed = report.outcomes.clone();
        reversed.reverse();
        let other = summarize(&cfg, 400, reversed);
        for (a, b) in report.variants.iter().zip(&other.variants) {
            for (p, q) in a.parameters.iter().zip(&b.parameters) {
                assert!((p.mean.unwrap() - q.mean.unwrap()).abs() < 1e-12);
                assert!((p.rmse.unwrap() - q.rmse.unwrap()).abs() < 1e-12);
                assert_eq!(p.coverage, q.coverage);
            }
        }
    }

    #[test]
    fn empty_variant_list_gives_headers_only() {
        let cfg = tiny(1, vec![]);
        let reports = run_monte_carlo(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&reports, &cfg.levels, dir.path(), &ReportFormat::ALL).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1);
        let estimates = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
        assert_eq!(estimates.lines().count(), 1);
    }

    #[test]
    fn single_replicate_rows() {
        let cfg = tiny(1, vec![ModelVariant::PUSA_C_OBSERVED, ModelVariant::CONVENTIONAL_C_OBSERVED]);
        let reports = run_monte_carlo(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&reports, &cfg.levels, dir.path(), &ReportFormat::ALL).unwrap();
        let estimates = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
        assert_eq!(estimates.lines().count(), 1 + 2 * 4);
        let table = fs::read_to_string(dir.path().join("table.md")).unwrap();
        assert!(table.contains("| theta_t1 | 2 |"));
        assert!(table.contains("### 95% coverage"));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mut cfg = tiny(5, ModelVariant::ALL.to_vec());
        cfg.workers = 1;
        let serial = run_monte_carlo(&cfg).unwrap();
        cfg.workers = 3;
        assert_eq!(serial, run_monte_carlo(&cfg).unwrap());
    }
}
