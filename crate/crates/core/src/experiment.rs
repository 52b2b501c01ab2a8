//! End-to-end experiment runs: preprocessing, cross-validation per subject
//! and method, significance and MESD, and the `results.csv` /
//! `summary.json` / `config_resolved.json` outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{MeanEstimator, RgcConfig, SvmCPolicy};
use crate::covariance::EegSegment;
use crate::dataset::{list_subjects, read_recording};
use crate::error::{invalid, Error, Result};
use crate::evaluation::mesd::{COMFORT_GAIN, MAX_STATES, MIN_STATES, STABILITY_MASS};
use crate::evaluation::{mesd, significance_threshold, ten_fold_cv, AccuracyCurve, CurvePoint, CvOptions, Method};
use crate::sigproc::{design_butterworth_bandpass, downsample, filter_forward, segment_and_normalize, Recording};
use crate::spd::KarcherOptions;
use crate::synth::{generate_subject, SynthSpec};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config_resolved.json";
pub const CSV_HEADER: &str = "subject,method,window_len_s,accuracy,n_decisions,significance_threshold,mesd_s";

/// Decision-window lengths evaluated by default, in seconds.
pub const DEFAULT_WINDOWS: [f64; 8] = [60.0, 30.0, 20.0, 10.0, 5.0, 2.0, 1.0, 0.53125];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory in the `subject_<id>.json` + `.f32` format.
    pub dataset: Option<PathBuf>,
    /// Synthetic data spec, used when no dataset is given.
    pub synth: Option<SynthSpec>,
    pub methods: Vec<Method>,
    pub windows: Vec<f64>,
    pub seed: u64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: usize,
    pub target_fs: f64,
    pub segment_len_s: f64,
    pub svm_c: SvmCPolicy,
    pub mean_estimator: MeanEstimator,
    pub csp_filters: usize,
    pub alpha: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth: None,
            methods: vec![Method::Rgc, Method::Csp],
            windows: DEFAULT_WINDOWS.to_vec(),
            seed: 0,
            band_low_hz: 12.0,
            band_high_hz: 30.0,
            filter_order: 8,
            target_fs: 64.0,
            segment_len_s: 60.0,
            svm_c: SvmCPolicy::Fixed(1.0),
            mean_estimator: MeanEstimator::LogEuclidean,
            csp_filters: 6,
            alpha: 0.05,
            out: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return invalid("at least one method is required");
        }
        if self.windows.is_empty() {
            return invalid("at least one window length is required");
        }
        if let Some(w) = self.windows.iter().find(|&&w| !(w > 0.0 && w <= self.segment_len_s)) {
            return invalid(format!(
                "window length {w} s must be positive and at most the segment length {} s",
                self.segment_len_s
            ));
        }
        if self.dataset.is_some() && self.synth.is_some() {
            return invalid("give either a dataset or a synthetic spec, not both");
        }
        if self.dataset.is_none() && self.synth.is_none() {
            return invalid("no data source: set a dataset directory or a synthetic spec");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        Ok(())
    }

    fn cv_options(&self, subject: &str, index: usize) -> CvOptions {
        CvOptions {
            seed: self.seed.wrapping_add(index as u64),
            rgc: RgcConfig {
                svm_c: self.svm_c,
                mean: self.mean_estimator,
                karcher: KarcherOptions::default(),
            },
            csp_filters: self.csp_filters,
            subject: subject.to_string(),
        }
    }
}

/// Bandpass, decimate, then cut into normalized segments.
pub fn preprocess(rec: &Recording, config: &ExperimentConfig) -> Result<Vec<EegSegment>> {
    let filter = design_butterworth_bandpass(config.filter_order, config.band_low_hz, config.band_high_hz, rec.fs)?;
    let filtered = filter_forward(&filter, rec)?;
    let decimated = downsample(&filtered, config.target_fs)?;
    segment_and_normalize(&decimated, config.segment_len_s)
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub subject: String,
    pub method: Method,
    pub window_len_s: f64,
    pub accuracy: f64,
    pub n_decisions: usize,
    pub significance_threshold: Option<f64>,
    pub mesd_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub subject: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SubjectResult {
    pub subject: String,
    pub curves: Vec<AccuracyCurve>,
}

/// Cross-validates every method on one subject's segments.
pub fn evaluate_subject(
    subject: &str,
    index: usize,
    segments: &[EegSegment],
    config: &ExperimentConfig,
) -> Result<SubjectResult> {
    let opts = config.cv_options(subject, index);
    let curves = config
        .methods
        .iter()
        .map(|&m| ten_fold_cv(segments, &config.windows, m, &opts).map(|o| o.curve))
        .collect::<Result<_>>()?;
    Ok(SubjectResult {
        subject: subject.to_string(),
        curves,
    })
}

/// Result rows for one curve: significance per window, MESD per curve.
pub fn curve_records(curve: &AccuracyCurve, alpha: f64) -> Result<Vec<ResultRecord>> {
    let mesd_s = match mesd(curve) {
        Ok(r) => Some(r.mesd_s),
        Err(Error::NoStableDesign) => None,
        Err(e) => return Err(e),
    };
    curve
        .points
        .iter()
        .map(|p| {
            Ok(ResultRecord {
                subject: curve.subject.clone(),
                method: curve.method,
                window_len_s: p.window_s,
                accuracy: p.accuracy,
                n_decisions: p.n_decisions,
                significance_threshold: significance_threshold(p.n_decisions as u64, alpha)?.accuracy(),
                mesd_s,
            })
        })
        .collect()
}

enum Source {
    Dataset(PathBuf, Vec<String>),
    Synth(SynthSpec),
}

impl Source {
    fn subjects(&self) -> Vec<String> {
        match self {
            Source::Dataset(_, ids) => ids.clone(),
            Source::Synth(spec) => (0..spec.n_subjects).map(|i| format!("synth{i:02}")).collect(),
        }
    }

    fn load(&self, index: usize) -> Result<Recording> {
        match self {
            Source::Dataset(dir, ids) => read_recording(dir, &ids[index]),
            Source::Synth(spec) => generate_subject(spec, index),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub summary: Summary,
    pub failures: Vec<Failure>,
}

/// Runs every subject, writes the three output files into `config.out`.
/// Subject failures are collected, not fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let source = match (&config.dataset, &config.synth) {
        (Some(dir), _) => {
            let ids = list_subjects(dir)?;
            if ids.is_empty() {
                return Err(Error::Format(format!("{}: no subjects found", dir.display())));
            }
            Source::Dataset(dir.clone(), ids)
        }
        (None, Some(spec)) => Source::Synth(spec.clone()),
        (None, None) => unreachable!("validated"),
    };
    let subjects = source.subjects();
    let outcomes: Vec<Result<Vec<ResultRecord>>> = (0..subjects.len())
        .into_par_iter()
        .map(|i| {
            let rec = source.load(i)?;
            let segments = preprocess(&rec, config)?;
            let result = evaluate_subject(&subjects[i], i, &segments, config)?;
            let mut rows = Vec::new();
            for curve in &result.curves {
                rows.extend(curve_records(curve, config.alpha)?);
            }
            Ok(rows)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (subject, outcome) in subjects.iter().zip(outcomes) {
        match outcome {
            Ok(rows) => records.extend(rows),
            Err(e) => {
                log::error!("subject {subject} failed: {e}");
                failures.push(Failure {
                    subject: subject.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let summary = summarize(&records, config.alpha, &failures);
    write_outputs(&config.out, config, &records, &summary)?;
    Ok(ExperimentOutput {
        records,
        summary,
        failures,
    })
}

pub fn write_outputs(out: &Path, config: &ExperimentConfig, records: &[ResultRecord], summary: &Summary) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(RESULTS_FILE), records_to_csv(records))?;
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(summary)? + "\n")?;
    fs::write(out.join(CONFIG_FILE), serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

/// Rounds to the 6 decimals used in every output file.
pub fn round6(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted float parses")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn records_to_csv(records: &[ResultRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{},{:.6},{:.6},{},{},{}",
            r.subject,
            r.method,
            r.window_len_s,
            r.accuracy,
            r.n_decisions,
            fmt_opt(r.significance_threshold),
            fmt_opt(r.mesd_s)
        )
        .expect("writing to a String cannot fail");
    }
    s
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field == "NA" || field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("line {line}: bad number '{field}'")))
}

/// Parses `results.csv`. The columns `subject,method,window_len_s,accuracy`
/// are required; the others may be absent or `NA`.
pub fn records_from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return Err(Error::Format("empty CSV".into()));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| cols.iter().position(|c| *c == name);
    let (Some(subject), Some(method), Some(window), Some(accuracy)) =
        (col("subject"), col("method"), col("window_len_s"), col("accuracy"))
    else {
        return Err(Error::Format(
            "CSV needs subject, method, window_len_s and accuracy columns".into(),
        ));
    };
    let (n_dec, sig, mesd_col) = (col("n_decisions"), col("significance_threshold"), col("mesd_s"));
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(Error::Format(format!(
                "line {lineno}: expected {} fields, got {}",
                cols.len(),
                f.len()
            )));
        }
        let num = |idx: usize| -> Result<f64> {
            f[idx]
                .parse()
                .map_err(|_| Error::Format(format!("line {lineno}: bad number '{}'", f[idx])))
        };
        out.push(ResultRecord {
            subject: f[subject].to_string(),
            method: f[method]
                .parse()
                .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?,
            window_len_s: num(window)?,
            accuracy: num(accuracy)?,
            n_decisions: match n_dec {
                Some(k) => f[k]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad count '{}'", f[k])))?,
                None => 0,
            },
            significance_threshold: sig.map(|k| parse_opt(f[k], lineno)).transpose()?.flatten(),
            mesd_s: mesd_col.map(|k| parse_opt(f[k], lineno)).transpose()?.flatten(),
        });
    }
    Ok(out)
}

/// Regroups result rows into one accuracy curve per (subject, method), in
/// order of first appearance.
pub fn curves_from_records(records: &[ResultRecord]) -> Vec<AccuracyCurve> {
    let mut curves: Vec<AccuracyCurve> = Vec::new();
    for r in records {
        let point = CurvePoint {
            window_s: r.window_len_s,
            accuracy: r.accuracy,
            n_decisions: r.n_decisions,
            n_correct: (r.accuracy * r.n_decisions as f64).round() as usize,
        };
        match curves
            .iter_mut()
            .find(|c| c.subject == r.subject && c.method == r.method)
        {
            Some(c) => c.points.push(point),
            None => curves.push(AccuracyCurve {
                subject: r.subject.clone(),
                method: r.method,
                points: vec![point],
            }),
        }
    }
    for c in &mut curves {
        c.points.sort_by(|a, b| b.window_s.total_cmp(&a.window_s));
    }
    curves
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantiles of 6-decimal values, rounded to 6 decimals.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|&x| round6(x)).collect();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        round6(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
    };
    Some(Quartiles {
        n: v.len(),
        median: q(0.5),
        q25: q(0.25),
        q75: q(0.75),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_len_s: f64,
    pub accuracy: Quartiles,
    pub subjects_above_significance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub windows: Vec<WindowSummary>,
    /// Quartiles of per-subject MESD over subjects with a stable design.
    pub mesd_s: Option<Quartiles>,
    pub subjects_without_stable_design: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mesd_model: String,
    pub alpha: f64,
    pub n_subjects: usize,
    pub methods: Vec<MethodSummary>,
    pub failures: Vec<Failure>,
}

pub fn mesd_model_description() -> String {
    format!(
        "MESD (simplified): birth-death gain controller, comfort gain {COMFORT_GAIN}, \
         stability mass {STABILITY_MASS}, states {MIN_STATES}..={MAX_STATES}"
    )
}

/// Cross-subject medians and quartiles per method and window length.
pub fn summarize(records: &[ResultRecord], alpha: f64, failures: &[Failure]) -> Summary {
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut subjects: Vec<&str> = records.iter().map(|r| r.subject.as_str()).collect();
    subjects.sort();
    subjects.dedup();

    let methods = methods
        .into_iter()
        .map(|m| {
            let rows: Vec<&ResultRecord> = records.iter().filter(|r| r.method == m).collect();
            let mut windows: Vec<f64> = rows.iter().map(|r| round6(r.window_len_s)).collect();
            windows.sort_by(|a, b| b.total_cmp(a));
            windows.dedup();
            let windows = windows
                .into_iter()
                .map(|w| {
                    let at: Vec<&&ResultRecord> = rows.iter().filter(|r| round6(r.window_len_s) == w).collect();
                    let acc: Vec<f64> = at.iter().map(|r| r.accuracy).collect();
                    WindowSummary {
                        window_len_s: w,
                        accuracy: quartiles(&acc).expect("at least one row per window"),
                        subjects_above_significance: at
                            .iter()
                            .filter(|r| r.significance_threshold.is_some_and(|t| round6(r.accuracy) > round6(t)))
                            .count(),
                    }
                })
                .collect();
            let mut per_subject: Vec<(&str, Option<f64>)> =
                rows.iter().map(|r| (r.subject.as_str(), r.mesd_s)).collect();
            per_subject.sort_by(|a, b| a.0.cmp(b.0));
            per_subject.dedup_by(|a, b| a.0 == b.0);
            let mesd_values: Vec<f64> = per_subject.iter().filter_map(|(_, v)| *v).collect();
            MethodSummary {
                method: m,
                windows,
                mesd_s: quartiles(&mesd_values),
                subjects_without_stable_design: per_subject.iter().filter(|(_, v)| v.is_none()).count(),
            }
        })
        .collect();

    Summary {
        mesd_model: mesd_model_description(),
        alpha,
        n_subjects: subjects.len(),
        methods,
        failures: failures.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(subject: &str, method: Method, w: f64, acc: f64, mesd: Option<f64>) -> ResultRecord {
        ResultRecord {
            subject: subject.into(),
            method,
            window_len_s: w,
            accuracy: acc,
            n_decisions: 36,
            significance_threshold: Some(0.666667),
            mesd_s: mesd,
        }
    }

    #[test]
    fn csv_round_trip_at_six_decimals() {
        let rows = vec![
            rec("a", Method::Rgc, 0.53125, 0.123456789, Some(2.5)),
            rec("b", Method::Csp, 60.0, 1.0, None),
        ];
        let text = records_to_csv(&rows);
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.contains("a,RGC,0.531250,0.123457,36,0.666667,2.500000"));
        assert!(text.contains("b,CSP,60.000000,1.000000,36,0.666667,NA"));
        let back = records_from_csv(&text).unwrap();
        assert_eq!(back[0].accuracy, 0.123457);
        assert_eq!(back[1].mesd_s, None);
        assert_eq!(records_to_csv(&back), text);
    }

    #[test]
    fn quartiles_interpolate() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.median, q.q25, q.q75), (2.5, 1.75, 3.25));
        assert!(quartiles(&[]).is_none());
    }

    #[test]
    fn summary_counts_subjects_once() {
        let rows = vec![
            rec("a", Method::Rgc, 60.0, 0.9, Some(2.0)),
            rec("a", Method::Rgc, 1.0, 0.6, Some(2.0)),
            rec("b", Method::Rgc, 60.0, 0.7, None),
            rec("b", Method::Rgc, 1.0, 0.5, None),
        ];
        let s = summarize(&rows, 0.05, &[]);
        assert_eq!(s.n_subjects, 2);
        let m = &s.methods[0];
        assert_eq!(m.windows.len(), 2);
        assert_eq!(m.windows[0].window_len_s, 60.0);
        assert_eq!(m.windows[0].accuracy.median, 0.8);
        assert_eq!(m.windows[0].subjects_above_significance, 2);
        assert_eq!(m.mesd_s.unwrap().n, 1);
        assert_eq!(m.subjects_without_stable_design, 1);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig {
            synth: Some(SynthSpec::default()),
            ..ExperimentConfig::default()
        };
        c.validate().unwrap();
        c.windows.push(61.0);
        assert!(c.validate().is_err());
        let c = ExperimentConfig::default();
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            synth: Some(SynthSpec::default()),
            methods: vec![],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_uses_field_names() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 5, "methods": ["RGC"], "windows": [60, 1], "svm_c": "grid"}"#).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.methods, vec![Method::Rgc]);
        assert_eq!(c.svm_c, SvmCPolicy::GridSearch);
        assert_eq!(c.segment_len_s, 60.0);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede": 5}"#).is_err());
    }
}
