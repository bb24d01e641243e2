use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use tfha_core::sensitivity::TfhaConfig;
use tfha_core::transient::TransientConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Transient,
    Hb,
    Tfha,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "tfha", version, about = "Periodic steady state and harmonic adjoint sensitivities")]
pub struct Args {
    pub analysis: Analysis,
    pub netlist: PathBuf,
    /// Quantity of interest, `v(node)`, `v(a,b)` or `i(device)`.
    #[arg(long)]
    pub qoi: Option<String>,
    /// Comma-separated `device.param` list, or `all`.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub samples_per_period: Option<usize>,
    #[arg(long)]
    pub err_tol: Option<f64>,
    #[arg(long)]
    pub k_start: Option<usize>,
    /// Harmonic count of the `hb` spectrum.
    #[arg(long)]
    pub harmonics: Option<usize>,
    #[arg(long)]
    pub max_periods: Option<usize>,
    #[arg(long)]
    pub steady_tol: Option<f64>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    /// Flat `key = value` file; flags win over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub analysis: Analysis,
    pub netlist_path: PathBuf,
    pub qoi: Option<String>,
    pub params: Option<String>,
    pub tfha: TfhaConfig,
    pub harmonics: usize,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

pub const KEYS: &[&str] = &[
    "qoi",
    "params",
    "samples_per_period",
    "err_tol",
    "k_start",
    "harmonics",
    "max_periods",
    "steady_tol",
    "newton_tol",
    "out",
    "format",
];

/// Parses the flat config format: one `key = value` per line, `#` comments.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("config line {}: unknown key '{}'", i + 1, k.trim()));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, String> {
    map.get(key)
        .map(|v| v.parse().map_err(|_| format!("config key {key}: cannot parse '{v}'")))
        .transpose()
}

fn formats(v: &str) -> Result<Vec<Format>, String> {
    v.split(',')
        .map(|s| Format::from_str(s.trim(), true).map_err(|_| format!("unknown format '{}'", s.trim())))
        .collect()
}

impl RunConfig {
    pub fn resolve(args: Args) -> Result<Self, String> {
        let file = match &args.config {
            Some(p) => parse_config_text(&read(p)?)?,
            None => BTreeMap::new(),
        };
        let mut tfha = TfhaConfig::default();
        let t: &mut TransientConfig = &mut tfha.transient;
        t.samples_per_period = args.samples_per_period.or(num(&file, "samples_per_period")?).unwrap_or(t.samples_per_period);
        t.max_periods = args.max_periods.or(num(&file, "max_periods")?).unwrap_or(t.max_periods);
        t.steady_tol = args.steady_tol.or(num(&file, "steady_tol")?).unwrap_or(t.steady_tol);
        t.newton_tol = args.newton_tol.or(num(&file, "newton_tol")?).unwrap_or(t.newton_tol);
        tfha.err_tol = args.err_tol.or(num(&file, "err_tol")?).unwrap_or(tfha.err_tol);
        tfha.k_start = args.k_start.or(num(&file, "k_start")?).unwrap_or(tfha.k_start);
        tfha.validate().map_err(|e| e.to_string())?;
        let harmonics = args.harmonics.or(num(&file, "harmonics")?).unwrap_or(32);
        if harmonics == 0 {
            return Err("harmonics must be at least 1".into());
        }
        let mut formats = match (args.format, file.get("format")) {
            (Some(f), _) => f,
            (None, Some(v)) => formats(v)?,
            (None, None) => vec![Format::Json],
        };
        formats.sort();
        formats.dedup();
        let cfg = Self {
            analysis: args.analysis,
            netlist_path: args.netlist,
            qoi: args.qoi.or_else(|| file.get("qoi").cloned()),
            params: args.params.or_else(|| file.get("params").cloned()),
            tfha,
            harmonics,
            output_dir: args.out.or_else(|| file.get("out").map(PathBuf::from)).unwrap_or_else(|| ".".into()),
            formats,
        };
        if cfg.analysis == Analysis::Tfha {
            if cfg.qoi.is_none() {
                return Err("tfha needs --qoi".into());
            }
            if cfg.params.is_none() {
                return Err("tfha needs --params".into());
            }
        }
        Ok(cfg)
    }
}

pub fn read(p: &Path) -> Result<String, String> {
    std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Args {
        Args::try_parse_from(std::iter::once("tfha").chain(v.iter().copied())).unwrap()
    }

    #[test]
    fn config_text() {
        let m = parse_config_text("# sweep\nerr_tol = 1e-4\nk-start=4  # low\n\n").unwrap();
        assert_eq!(m["err_tol"], "1e-4");
        assert_eq!(m["k_start"], "4");
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("err_tol").is_err());
    }

    #[test]
    fn tfha_requires_qoi_and_params() {
        assert!(RunConfig::resolve(args(&["tfha", "x.cir", "--params", "all"])).is_err());
        assert!(RunConfig::resolve(args(&["tfha", "x.cir", "--qoi", "v(out)"])).is_err());
        assert!(RunConfig::resolve(args(&["tfha", "x.cir", "--qoi", "v(out)", "--params", "all"])).is_ok());
    }

    #[test]
    fn formats_are_sorted_and_unique() {
        let c = RunConfig::resolve(args(&["hb", "x.cir", "--format", "json,csv,json"])).unwrap();
        assert_eq!(c.formats, [Format::Csv, Format::Json]);
    }

    #[test]
    fn invalid_knobs_are_rejected() {
        assert!(RunConfig::resolve(args(&["transient", "x.cir", "--samples-per-period", "100"])).is_err());
        assert!(RunConfig::resolve(args(&["tfha", "x.cir", "--qoi", "v(a)", "--params", "all", "--err-tol", "0"])).is_err());
    }
}
