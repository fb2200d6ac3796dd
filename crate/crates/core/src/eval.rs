//! Objective metrics, per-utterance reports and the metric-versus-steps
//! sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::Serialize;

use crate::dsp::{read_wav, stft, write_wav, StftConfig, WavFormat, Waveform};
use crate::error::{Error, Result};

/// Reported SI-SDR when the residual vanishes.
pub const SI_SDR_CAP_DB: f64 = 100.0;
/// Environment variable naming an external PESQ executable. It is invoked
/// as `<exe> <reference.wav> <estimate.wav>` and must print one number.
pub const PESQ_ENV: &str = "BCDM_PESQ_CMD";
/// Version tag written into every report CSV.
pub const REPORT_SCHEMA: &str = "bcdm-report-v1";
/// Version tag of the sweep CSV.
pub const SWEEP_SCHEMA: &str = "bcdm-sweep-v1";

fn check_lengths(estimate: &Waveform, reference: &Waveform) -> Result<()> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Empty("reference signal".into()));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at
/// [`SI_SDR_CAP_DB`].
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let r = &reference.samples;
    let e = &estimate.samples;
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::Silent("reference signal".into()));
    }
    let alpha = e.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let residual: f64 = e.iter().zip(r).map(|(a, b)| (a - alpha * b).powi(2)).sum();
    if residual <= target * 10f64.powf(-SI_SDR_CAP_DB / 10.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Magnitude floor of the log-spectral distance.
pub const LSD_FLOOR: f64 = 1e-8;

/// Root mean square over frames and bins of `20·log10(|S_est| / |S_ref|)`
/// on uncompressed STFT magnitudes floored at [`LSD_FLOOR`].
pub fn log_spectral_distance(estimate: &Waveform, reference: &Waveform, cfg: &StftConfig) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let lin = cfg.linear();
    let a = stft(estimate, &lin)?;
    let b = stft(reference, &lin)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (20.0 * (x.norm().max(LSD_FLOOR) / y.norm().max(LSD_FLOOR)).log10()).powi(2))
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Runs an external metric tool on a reference/estimate pair.
pub fn external_metric(exe: &str, reference: &Waveform, estimate: &Waveform, scratch: &Path) -> Result<f64> {
    std::fs::create_dir_all(scratch).map_err(|e| Error::io(scratch, e))?;
    let ref_path = scratch.join("reference.wav");
    let est_path = scratch.join("estimate.wav");
    write_wav(&ref_path, reference, WavFormat::Float32)?;
    write_wav(&est_path, estimate, WavFormat::Float32)?;
    let out = Command::new(exe)
        .arg(&ref_path)
        .arg(&est_path)
        .output()
        .map_err(|e| Error::io(exe, e))?;
    if !out.status.success() {
        return Err(Error::Config(format!(
            "{exe} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    text.split_whitespace()
        .last()
        .and_then(|w| w.parse::<f64>().ok())
        .ok_or_else(|| Error::Config(format!("{exe} printed no number: {}", text.trim())))
}

/// The external PESQ tool, if configured.
pub fn pesq_tool() -> Option<String> {
    std::env::var(PESQ_ENV).ok().filter(|s| !s.trim().is_empty())
}

/// Metric values of one estimate against its reference. Adds `pesq` when
/// an external tool is configured.
pub fn score_utterance(
    estimate: &Waveform,
    reference: &Waveform,
    cfg: &StftConfig,
    scratch: Option<&Path>,
) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert("si_sdr".to_string(), si_sdr(estimate, reference)?);
    m.insert("lsd".to_string(), log_spectral_distance(estimate, reference, cfg)?);
    if let (Some(exe), Some(dir)) = (pesq_tool(), scratch) {
        m.insert("pesq".to_string(), external_metric(&exe, reference, estimate, dir)?);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub utterance_id: String,
    /// SNR centre of the subset the row belongs to, if any.
    pub snr_center: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub count: usize,
}

impl Summary {
    /// Population statistics; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(Self { mean, std, median: median(values), count: values.len() })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-utterance rows plus run metadata.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub metadata: BTreeMap<String, String>,
}

fn center_key(c: Option<f64>) -> String {
    c.map_or_else(|| "all".to_string(), |c| format!("{c}"))
}

impl EvalReport {
    /// Metric names present in any row, sorted.
    pub fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.rows.iter().flat_map(|r| r.metrics.keys().cloned()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// Summary per (subset, metric), recomputed from the rows.
    pub fn aggregate(&self) -> BTreeMap<(String, String), Summary> {
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for row in &self.rows {
            for (name, &v) in &row.metrics {
                groups.entry((center_key(row.snr_center), name.clone())).or_default().push(v);
            }
        }
        groups
            .into_iter()
            .filter_map(|(k, v)| Summary::of(&v).map(|s| (k, s)))
            .collect()
    }

    /// Writes `<stem>.csv` (one row per utterance), `<stem>_summary.csv` and
    /// `<stem>.json` (metadata and aggregates). Returns the written paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names = self.metric_names();
        let rows_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&rows_path)?;
        let mut header = vec!["schema".to_string(), "utterance_id".into(), "snr_center".into()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![REPORT_SCHEMA.to_string(), row.utterance_id.clone(), center_key(row.snr_center)];
            rec.extend(names.iter().map(|n| row.metrics.get(n).map_or_else(String::new, |v| format!("{v:.6}"))));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&rows_path, e))?;

        let agg = self.aggregate();
        let sum_path = dir.join(format!("{stem}_summary.csv"));
        let mut w = csv::Writer::from_path(&sum_path)?;
        w.write_record(["schema", "snr_center", "metric", "mean", "std", "median", "count"])?;
        for ((center, metric), s) in &agg {
            w.write_record([
                REPORT_SCHEMA.to_string(),
                center.clone(),
                metric.clone(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.std),
                format!("{:.6}", s.median),
                s.count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&sum_path, e))?;

        let json_path = dir.join(format!("{stem}.json"));
        let summary: Vec<_> = agg
            .iter()
            .map(|((c, m), s)| serde_json::json!({"snr_center": c, "metric": m, "summary": s}))
            .collect();
        let doc = serde_json::json!({"metadata": self.metadata, "aggregate": summary});
        std::fs::write(&json_path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&json_path, e))?;
        Ok(vec![rows_path, sum_path, json_path])
    }
}

fn wav_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            wav_files(root, &p, out)?;
        } else if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            let rel = p.strip_prefix(root).unwrap_or(&p).with_extension("");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

/// Scores every `*.wav` under `estimates` against the file at the same
/// relative path under `references`. Rows are ordered by path; utterances
/// are scored in parallel. A missing reference is an error.
pub fn evaluate_dirs(
    estimates: &Path,
    references: &Path,
    cfg: &StftConfig,
    snr_center: Option<f64>,
    scratch: Option<&Path>,
) -> Result<EvalReport> {
    let mut ids = Vec::new();
    wav_files(estimates, estimates, &mut ids)?;
    if ids.is_empty() {
        return Err(Error::Empty(format!("no WAV files under {}", estimates.display())));
    }
    let rows = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let est = read_wav(estimates.join(format!("{id}.wav")))?;
            let reference = read_wav(references.join(format!("{id}.wav")))?;
            let scratch = scratch.map(|d| d.join(format!("utt{i}")));
            Ok(ReportRow {
                utterance_id: id.clone(),
                snr_center,
                metrics: score_utterance(&est, &reference, cfg, scratch.as_deref())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metadata = BTreeMap::new();
    metadata.insert("estimates".into(), estimates.display().to_string());
    metadata.insert("references".into(), references.display().to_string());
    Ok(EvalReport { rows, metadata })
}

/// The step counts swept by default.
pub const DEFAULT_SWEEP_STEPS: [usize; 8] = [2, 5, 10, 20, 30, 40, 60, 80];

/// One line of a metric-versus-steps sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub n_steps: usize,
    pub score_calls: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub count: usize,
    /// Utterances whose enhancement failed and were left out.
    pub failures: usize,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "schema", "model", "n_steps", "score_calls", "metric", "mean", "std", "median", "count", "failures",
    ])?;
    for r in rows {
        w.write_record([
            SWEEP_SCHEMA.to_string(),
            r.model.clone(),
            r.n_steps.to_string(),
            r.score_calls.to_string(),
            r.metric.clone(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.std),
            format!("{:.6}", r.median),
            r.count.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Line plot of the mean of `metric` against the step count, one line per
/// model, written as SVG.
pub fn plot_sweep_svg(path: &Path, rows: &[SweepRow], metric: &str) -> Result<()> {
    use plotters::prelude::*;

    let rows: Vec<&SweepRow> = rows.iter().filter(|r| r.metric == metric && r.count > 0).collect();
    if rows.is_empty() {
        return Err(Error::Empty(format!("no sweep rows for metric {metric}")));
    }
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.dedup();
    models.sort();
    models.dedup();
    let x_max = rows.iter().map(|r| r.n_steps).max().unwrap_or(1) as f64;
    let (mut lo, mut hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.mean), b.max(r.mean)));
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.1 * (hi - lo);
    let plot_err = |e: &dyn std::fmt::Display| Error::Config(format!("plot: {e}"));

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{metric} vs reverse steps"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0f64..x_max * 1.05, (lo - pad)..(hi + pad))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("reverse steps N")
        .y_desc(metric)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (i, model) in models.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.model == *model)
            .map(|r| (r.n_steps as f64, r.mean))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(model.to_string())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(|e| plot_err(&e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
