use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConfigError, Curve, ExperimentConfig, HarnessError, Method, RunRow};

pub const CSV_HEADER: &str = "sweep_value,method,mean_aoi,ci_half,seed_count,runtime_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub method: String,
    pub mean_aoi: f64,
    pub ci_half: f64,
    pub seed_count: usize,
    /// Left empty in emitted files; wall-clock times go to `timings.jsonl`.
    pub runtime_s: Option<f64>,
}

fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

fn first_seen<T: PartialEq + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Means and 95% half-widths over seeds for every (sweep value, method).
/// Analytic rows also produce an `analytic-normalized` series.
pub fn aggregate(rows: &[RunRow]) -> Vec<ResultRow> {
    let values = first_seen(rows.iter().map(|r| r.sweep_value.to_bits()));
    let methods = first_seen(rows.iter().map(|r| r.method));
    let mut out = Vec::new();
    for &bits in &values {
        let value = f64::from_bits(bits);
        for &method in &methods {
            let here: Vec<&RunRow> = rows
                .iter()
                .filter(|r| r.sweep_value.to_bits() == bits && r.method == method)
                .collect();
            let ok: Vec<f64> = here.iter().filter_map(|r| r.mean_aoi).collect();
            if ok.is_empty() {
                continue;
            }
            let (mean, ci) = mean_ci(&ok);
            out.push(ResultRow {
                sweep_value: value,
                method: method.name().to_string(),
                mean_aoi: mean,
                ci_half: ci,
                seed_count: ok.len(),
                runtime_s: None,
            });
            let norm: Vec<f64> = here.iter().filter_map(|r| r.normalized_aoi).collect();
            if method == Method::Analytic && !norm.is_empty() {
                let (mean, ci) = mean_ci(&norm);
                out.push(ResultRow {
                    sweep_value: value,
                    method: "analytic-normalized".to_string(),
                    mean_aoi: mean,
                    ci_half: ci,
                    seed_count: norm.len(),
                    runtime_s: None,
                });
            }
        }
    }
    out
}

/// Adjacent pairs of sweep values that break the expected direction.
pub fn trend_violations(rows: &[ResultRow], method: &str, direction: i8) -> Vec<(f64, f64)> {
    let series: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method).collect();
    series
        .windows(2)
        .filter(|w| {
            let (a, b) = (w[0].mean_aoi, w[1].mean_aoi);
            if direction >= 0 { b < a } else { b > a }
        })
        .map(|w| (w[0].sweep_value, w[1].sweep_value))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub sweep_value: f64,
    pub dueling_mean: f64,
    pub plain_mean: f64,
    /// Seeds where both variants finished.
    pub pairs: usize,
    /// Pairs where the dueling variant's age is not larger.
    pub dueling_not_worse: usize,
}

pub fn ordering_checks(rows: &[RunRow]) -> Vec<OrderingCheck> {
    let mut by_value: BTreeMap<u64, Vec<&RunRow>> = BTreeMap::new();
    let order = first_seen(rows.iter().map(|r| r.sweep_value.to_bits()));
    for r in rows {
        by_value.entry(r.sweep_value.to_bits()).or_default().push(r);
    }
    let mut out = Vec::new();
    for bits in order {
        let here = &by_value[&bits];
        let lookup = |m: Method| -> BTreeMap<u64, f64> {
            here.iter()
                .filter(|r| r.method == m)
                .filter_map(|r| Some((r.seed?, r.mean_aoi?)))
                .collect()
        };
        let duel = lookup(Method::Dueling);
        let plain = lookup(Method::Plain);
        let paired: Vec<(f64, f64)> = duel
            .iter()
            .filter_map(|(s, d)| plain.get(s).map(|p| (*d, *p)))
            .collect();
        if paired.is_empty() {
            continue;
        }
        let n = paired.len() as f64;
        out.push(OrderingCheck {
            sweep_value: f64::from_bits(bits),
            dueling_mean: paired.iter().map(|p| p.0).sum::<f64>() / n,
            plain_mean: paired.iter().map(|p| p.1).sum::<f64>() / n,
            pairs: paired.len(),
            dueling_not_worse: paired.iter().filter(|(d, p)| d <= p).count(),
        });
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_result_csv(path: &Path, comments: &[String], rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    for c in comments {
        writeln!(buf, "# {c}").expect("write to memory");
    }
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        let csv_err = |source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
        for r in rows {
            w.write_record([
                r.sweep_value.to_string(),
                r.method.clone(),
                r.mean_aoi.to_string(),
                r.ci_half.to_string(),
                r.seed_count.to_string(),
                r.runtime_s.map(|t| t.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io_err(path))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| HarnessError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

pub(super) fn write_timings(dir: &Path, timings: &[super::Timing]) -> Result<(), HarnessError> {
    write_jsonl(&dir.join("timings.jsonl"), timings)
}

fn header_comments(cfg: &ExperimentConfig) -> Vec<String> {
    let s = &cfg.system;
    vec![
        format!("experiment: {}", cfg.name),
        format!("spec_hash: {}", cfg.spec_hash()),
        format!(
            "traffic unit: packet size = traffic x {} bits; per-device arrival rate {}",
            s.bits_per_traffic_unit, s.arrival_rate
        ),
        "mean_aoi: seconds; analytic = per-source closed-form age, analytic-normalized = analytic / T, \
         learned and random = per-slot mean age over evaluation episodes"
            .to_string(),
        "runtime_s: intentionally empty for reproducible files; see timings.jsonl".to_string(),
    ]
}

fn convergence_rows(curves: &[Curve]) -> Vec<ResultRow> {
    let groups = first_seen(curves.iter().map(|c| (c.method, c.sweep_value.to_bits())));
    let mut out = Vec::new();
    for (method, bits) in groups {
        let members: Vec<&Curve> = curves
            .iter()
            .filter(|c| c.method == method && c.sweep_value.to_bits() == bits)
            .collect();
        let len = members.iter().map(|c| c.episode_aoi.len()).min().unwrap_or(0);
        let label = format!("{}@{}", method.name(), f64::from_bits(bits));
        for e in 0..len {
            let vals: Vec<f64> = members.iter().map(|c| c.episode_aoi[e]).collect();
            let (mean, ci) = mean_ci(&vals);
            out.push(ResultRow {
                sweep_value: (e + 1) as f64,
                method: label.clone(),
                mean_aoi: mean,
                ci_half: ci,
                seed_count: vals.len(),
                runtime_s: None,
            });
        }
    }
    out
}

/// Writes the normalized config, raw rows, figure CSVs and `summary.txt`
/// into `dir`, returning the summary text.
pub fn emit_report(
    cfg: &ExperimentConfig,
    rows: &[RunRow],
    curves: &[Curve],
    dir: &Path,
) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::NoRows);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(io_err(dir))?;
    write_jsonl(&dir.join("rows.jsonl"), rows)?;
    write_jsonl(&dir.join("curves.jsonl"), curves)?;

    let results = aggregate(rows);
    let comments = header_comments(cfg);
    let figure = match &cfg.sweep {
        Some(s) => s.parameter.figure_file(),
        None => "base.csv",
    };
    write_result_csv(&dir.join(figure), &comments, &results)?;
    if !curves.is_empty() {
        let mut c = comments.clone();
        c.push("sweep_value: training episode; method: variant@sweep value".to_string());
        write_result_csv(&dir.join("fig4_convergence.csv"), &c, &convergence_rows(curves))?;
    }

    let mut s = String::new();
    writeln!(s, "experiment {} (config hash {})", cfg.name, cfg.spec_hash()).unwrap();
    if let Ok(warnings) = cfg.validate() {
        for w in warnings {
            writeln!(s, "warning: {w}").unwrap();
        }
    }
    let failures: Vec<&RunRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    writeln!(s, "rows: {} ({} failed)", rows.len(), failures.len()).unwrap();
    for f in &failures {
        writeln!(
            s,
            "  failed: {}={} {} seed {:?}: {}",
            f.parameter,
            f.sweep_value,
            f.method,
            f.seed,
            f.error.as_deref().unwrap_or_default()
        )
        .unwrap();
    }
    if let Some(sweep) = &cfg.sweep {
        let dir_word = if sweep.parameter.expected_trend() >= 0 { "nondecreasing" } else { "nonincreasing" };
        if results.iter().any(|r| r.method == "analytic") {
            let v = trend_violations(&results, "analytic", sweep.parameter.expected_trend());
            writeln!(
                s,
                "analytic trend in {} ({}): {} violations",
                sweep.parameter.name(),
                dir_word,
                v.len()
            )
            .unwrap();
            for (a, b) in v {
                writeln!(s, "  violation between {a} and {b}").unwrap();
            }
        }
    }
    for o in ordering_checks(rows) {
        writeln!(
            s,
            "dueling vs plain at {}: mean {:.6} vs {:.6}, dueling not worse on {} of {} seed pairs",
            o.sweep_value, o.dueling_mean, o.plain_mean, o.dueling_not_worse, o.pairs
        )
        .unwrap();
    }
    fs::write(dir.join("summary.txt"), &s).map_err(io_err(dir))?;
    Ok(s)
}

/// Reads back `config.toml`, `rows.jsonl` and `curves.jsonl` from a sweep directory.
pub fn load_run_dir(dir: &Path) -> Result<(ExperimentConfig, Vec<RunRow>, Vec<Curve>), HarnessError> {
    let cfg_path = dir.join("config.toml");
    let text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
    let cfg = ExperimentConfig::from_toml(&text, &cfg_path)
        .map_err(|e: ConfigError| HarnessError::Config(e))?
        .config;
    let rows = read_jsonl(&dir.join("rows.jsonl"))?;
    let curves_path = dir.join("curves.jsonl");
    let curves = if curves_path.exists() {
        read_jsonl(&curves_path)?
    } else {
        Vec::new()
    };
    Ok((cfg, rows, curves))
}
