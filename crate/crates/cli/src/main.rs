mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tfha_core::netlist::{list_parameters, parse_netlist, validate_circuit, Circuit, ParameterRef};
use tfha_core::sensitivity::{tfha_run, TfhaOutcome};
use tfha_core::spectral::{fft_period, max_harmonic};
use tfha_core::transient::run_to_steady_state;
use tfha_core::Error;

use config::{Analysis, Args, RunConfig};

enum Failure {
    /// Bad input: netlist, config or arguments.
    User(String),
    /// The solver gave up; whatever could be written was written.
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Solver(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Syntax { .. }
            | Error::UnknownDeviceKind { .. }
            | Error::DuplicateName { .. }
            | Error::InvalidCircuit(_)
            | Error::UnknownParameter(_)
            | Error::UnknownTarget(_)
            | Error::InvalidConfig(_)
            | Error::HarmonicOverflow { .. } => Failure::User(e.to_string()),
            Error::NoSteadyState { ref mismatch_history, .. } => {
                let tail: Vec<String> = mismatch_history.iter().rev().take(5).rev().map(|m| format!("{m:.3e}")).collect();
                Failure::Solver(format!("{e}; last mismatches [{}]", tail.join(", ")))
            }
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::User(e.to_string())
    }
}

fn load(path: &std::path::Path) -> Result<Circuit, Failure> {
    let text = config::read(path).map_err(Failure::User)?;
    parse_netlist(&text).map_err(|e| Failure::User(format!("{}: {e}", path.display())))
}

fn checked(path: &std::path::Path) -> Result<Circuit, Failure> {
    let c = load(path)?;
    let diags = validate_circuit(&c);
    if diags.is_empty() {
        return Ok(c);
    }
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    Err(Failure::User(format!("{} diagnostics", diags.len())))
}

fn select_params(c: &Circuit, spec: &str) -> Result<Vec<ParameterRef>, Failure> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(list_parameters(c));
    }
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| c.parameter(s).map_err(Failure::from))
        .collect()
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn emit_tfha(cfg: &RunConfig, qoi: &str, out: &TfhaOutcome, converged: bool) -> Result<(), Failure> {
    for r in &out.results {
        println!("{}: k_used = {}, est_rel_error = {:.3e}", r.parameter, r.k_used, r.est_rel_error);
    }
    let paths = output::emit_sensitivities(&cfg.output_dir, &cfg.formats, qoi, out.steady.period, converged, &out.results)?;
    report(&paths);
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<(), Failure> {
    match cfg.analysis {
        Analysis::Validate => {
            let c = load(&cfg.netlist_path)?;
            let diags = validate_circuit(&c);
            for d in &diags {
                println!("{}: {d}", cfg.netlist_path.display());
            }
            println!("{} diagnostics", diags.len());
            if diags.is_empty() {
                Ok(())
            } else {
                Err(Failure::User(format!("{} failed validation", cfg.netlist_path.display())))
            }
        }
        Analysis::Transient => {
            let c = checked(&cfg.netlist_path)?;
            let s = run_to_steady_state(&c, &cfg.tfha.transient)?;
            println!("steady state after {} periods, mismatch {:.3e}", s.periods_run, s.period_mismatch);
            report(&output::emit_waveform(&cfg.output_dir, &cfg.formats, &s)?);
            Ok(())
        }
        Analysis::Hb => {
            let c = checked(&cfg.netlist_path)?;
            let s = run_to_steady_state(&c, &cfg.tfha.transient)?;
            let k = cfg.harmonics.min(max_harmonic(s.samples()));
            let spec = fft_period(&s, k)?;
            println!("{} harmonics of {:.6e} Hz", k, spec.ladder.freq_hz(1));
            report(&output::emit_spectrum(&cfg.output_dir, &cfg.formats, &s.unknown_names, &spec)?);
            Ok(())
        }
        Analysis::Tfha => {
            let c = checked(&cfg.netlist_path)?;
            let qoi = cfg.qoi.as_deref().unwrap_or_default();
            let params = select_params(&c, cfg.params.as_deref().unwrap_or_default())?;
            if params.is_empty() {
                eprintln!("warning: no parameters selected, nothing written");
                return Ok(());
            }
            match tfha_run(&c, qoi, &params, &cfg.tfha) {
                Ok(out) => emit_tfha(cfg, qoi, &out, true),
                Err(Error::NotConverged { k, max_estimate, outcome }) => {
                    emit_tfha(cfg, qoi, &outcome, false)?;
                    Err(Failure::Solver(format!(
                        "harmonic refinement stopped at K = {k} with max estimate {max_estimate:.3e}; partial results written"
                    )))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("TFHA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::User(format!("TFHA_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::User(e.to_string()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = init_threads()
        .and_then(|_| RunConfig::resolve(args).map_err(Failure::User))
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::User(m) | Failure::Solver(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
