#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use tfha_core::netlist::{parse_netlist, Circuit};

pub const FIXTURES: [&str; 5] = ["divider", "rc_filter", "rlc", "rectifier", "boost"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.cir"))
}

pub fn fixture(name: &str) -> Circuit {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    parse_netlist(&text).expect("fixture parses")
}

/// QoI probed in each fixture.
pub fn probe(name: &str) -> &'static str {
    match name {
        "boost" => "v(drain)",
        _ => "v(out)",
    }
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn rel_l2_c(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
