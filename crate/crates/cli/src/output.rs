use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tfha_core::sensitivity::SensitivityResult;
use tfha_core::spectral::SpectralSolution;
use tfha_core::transient::TransientSolution;

use crate::config::Format;

pub const SCHEMA: &str = "tfha/1";

#[derive(Serialize)]
struct Record<'a> {
    device: &'a str,
    param: &'a str,
    k_used: usize,
    /// `null` until two refinement levels were compared.
    est_rel_error: Option<f64>,
    spectrum: Vec<[f64; 2]>,
    time_series: &'a [f64],
}

#[derive(Serialize)]
struct SensitivityFile<'a> {
    schema: &'static str,
    analysis: &'static str,
    qoi: &'a str,
    period: f64,
    converged: bool,
    records: Vec<Record<'a>>,
}

#[derive(Serialize)]
struct Series<'a> {
    name: &'a str,
    samples: &'a [f64],
}

#[derive(Serialize)]
struct WaveformFile<'a> {
    schema: &'static str,
    analysis: &'static str,
    period: f64,
    periods_run: usize,
    period_mismatch: f64,
    t: &'a [f64],
    unknowns: Vec<Series<'a>>,
}

#[derive(Serialize)]
struct Phasors<'a> {
    name: &'a str,
    spectrum: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct SpectrumFile<'a> {
    schema: &'static str,
    analysis: &'static str,
    period: f64,
    harmonics: usize,
    freq_hz: Vec<f64>,
    unknowns: Vec<Phasors<'a>>,
}

fn pairs(v: &[tfha_core::Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_file(path: &Path, bytes: &[u8]) -> io::Result<()> {
    fs::write(path, bytes).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

pub fn sensitivity_file_name(qoi: &str, result: &SensitivityResult, fmt: Format) -> String {
    format!("tfha_{qoi}_{}.{}", result.parameter, ext(fmt))
}

fn ext(fmt: Format) -> &'static str {
    match fmt {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

/// One file per parameter and format. Returns the written paths.
pub fn emit_sensitivities(
    dir: &Path,
    formats: &[Format],
    qoi: &str,
    period: f64,
    converged: bool,
    results: &[SensitivityResult],
) -> io::Result<Vec<PathBuf>> {
    if results.is_empty() {
        eprintln!("warning: no sensitivity results, nothing written");
        return Ok(vec![]);
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in results {
        for &fmt in formats {
            let path = dir.join(sensitivity_file_name(qoi, r, fmt));
            let bytes = match fmt {
                Format::Json => json_bytes(&SensitivityFile {
                    schema: SCHEMA,
                    analysis: "tfha",
                    qoi,
                    period,
                    converged,
                    records: vec![Record {
                        device: &r.parameter.device_name,
                        param: &r.parameter.param_name,
                        k_used: r.k_used,
                        est_rel_error: finite(r.est_rel_error),
                        spectrum: pairs(&r.spectrum),
                        time_series: &r.time_series,
                    }],
                }),
                Format::Csv => sensitivity_csv(period, r),
            };
            write_file(&path, &bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Time series and spectrum side by side; spectrum cells stay empty past `k_used`.
fn sensitivity_csv(period: f64, r: &SensitivityResult) -> Vec<u8> {
    let mut w = Vec::new();
    writeln!(w, "# device={},param={},k_used={},est_rel_error={:e}", r.parameter.device_name, r.parameter.param_name, r.k_used, r.est_rel_error).unwrap();
    writeln!(w, "n,t,dudp,k,freq_hz,dudp_re,dudp_im").unwrap();
    let n = r.time_series.len();
    for i in 0..n.max(r.spectrum.len()) {
        match r.time_series.get(i) {
            Some(v) => write!(w, "{i},{:e},{v:e}", i as f64 * period / n as f64).unwrap(),
            None => write!(w, ",,").unwrap(),
        }
        match r.spectrum.get(i) {
            Some(c) => writeln!(w, ",{i},{:e},{:e},{:e}", i as f64 / period, c.re, c.im).unwrap(),
            None => writeln!(w, ",,,,").unwrap(),
        }
    }
    w
}

pub fn emit_waveform(dir: &Path, formats: &[Format], s: &TransientSolution) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &fmt in formats {
        let path = dir.join(format!("transient_waveform.{}", ext(fmt)));
        let bytes = match fmt {
            Format::Csv => {
                let mut w = Vec::new();
                s.write_csv(&mut w)?;
                w
            }
            Format::Json => json_bytes(&WaveformFile {
                schema: SCHEMA,
                analysis: "transient",
                period: s.period,
                periods_run: s.periods_run,
                period_mismatch: s.period_mismatch,
                t: &s.t_grid,
                unknowns: s
                    .unknown_names
                    .iter()
                    .zip(&s.x_samples)
                    .map(|(name, samples)| Series { name, samples })
                    .collect(),
            }),
        };
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

pub fn emit_spectrum(
    dir: &Path,
    formats: &[Format],
    names: &[String],
    spec: &SpectralSolution,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &fmt in formats {
        let path = dir.join(format!("hb_spectrum.{}", ext(fmt)));
        let bytes = match fmt {
            Format::Csv => {
                let mut w = Vec::new();
                spec.write_csv(names, &mut w)?;
                w
            }
            Format::Json => json_bytes(&SpectrumFile {
                schema: SCHEMA,
                analysis: "hb",
                period: spec.ladder.period(),
                harmonics: spec.ladder.len() - 1,
                freq_hz: (0..spec.ladder.len()).map(|k| spec.ladder.freq_hz(k)).collect(),
                unknowns: names
                    .iter()
                    .zip(&spec.phasors)
                    .map(|(name, x)| Phasors { name, spectrum: pairs(x) })
                    .collect(),
            }),
        };
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
