use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{Circuit, Element, Waveform, GROUND};

/// One violated rule. Carries the device (or node) it concerns.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    DuplicateName(String),
    /// Node with no device path to ground.
    FloatingNode(String),
    NonPositiveParameter {
        device: String,
        param: String,
        value: f64,
    },
    InvalidParameter {
        device: String,
        param: String,
        value: f64,
        rule: &'static str,
    },
    InvalidWaveform {
        device: String,
        message: String,
    },
    /// Source or switch period does not divide the fundamental period.
    IncommensuratePeriod {
        device: String,
        period: f64,
        fundamental: f64,
    },
    NonPositivePeriod(f64),
    /// Voltage source or inductor with both terminals on one node.
    ShortedTerminals(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateName(n) => write!(f, "{n}: duplicate device name"),
            Self::FloatingNode(n) => write!(f, "node {n}: no path to ground"),
            Self::NonPositiveParameter {
                device,
                param,
                value,
            } => write!(f, "{device}: {param} = {value:e} must be > 0"),
            Self::InvalidParameter {
                device,
                param,
                value,
                rule,
            } => write!(f, "{device}: {param} = {value:e} violates {rule}"),
            Self::InvalidWaveform { device, message } => write!(f, "{device}: {message}"),
            Self::IncommensuratePeriod {
                device,
                period,
                fundamental,
            } => write!(
                f,
                "{device}: period {period:e} s does not divide the fundamental period {fundamental:e} s"
            ),
            Self::NonPositivePeriod(t) => write!(f, "fundamental period {t:e} must be > 0"),
            Self::ShortedTerminals(d) => write!(f, "{d}: both terminals on the same node"),
        }
    }
}

/// Checks every circuit and device invariant. An empty list means the
/// circuit is ready for assembly.
pub fn validate_circuit(c: &Circuit) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for d in c.devices() {
        if !seen.insert(d.name.to_ascii_uppercase()) {
            out.push(Diagnostic::DuplicateName(d.name.clone()));
        }
    }

    let t = c.fundamental_period();
    let period_ok = t.is_finite() && t > 0.0;
    if !period_ok {
        out.push(Diagnostic::NonPositivePeriod(t));
    }

    for d in c.devices() {
        let name = &d.name;
        let positive = |out: &mut Vec<Diagnostic>, param: &str, value: f64| {
            if !(value.is_finite() && value > 0.0) {
                out.push(Diagnostic::NonPositiveParameter {
                    device: name.clone(),
                    param: param.into(),
                    value,
                });
            }
        };
        let mut periodic = None;
        match &d.element {
            Element::Resistor { resistance: v }
            | Element::Capacitor { capacitance: v }
            | Element::Inductor { inductance: v } => positive(&mut out, "value", *v),
            Element::Diode(p) => {
                positive(&mut out, "is", p.is);
                if !(p.n.is_finite() && p.n >= 1.0) {
                    out.push(Diagnostic::InvalidParameter {
                        device: name.clone(),
                        param: "n".into(),
                        value: p.n,
                        rule: "n >= 1",
                    });
                }
                positive(&mut out, "vt", p.vt);
            }
            Element::Switch { ron, roff, control } => {
                positive(&mut out, "ron", *ron);
                positive(&mut out, "roff", *roff);
                if !(0.0..=1.0).contains(&control.duty) {
                    out.push(Diagnostic::InvalidParameter {
                        device: name.clone(),
                        param: "duty".into(),
                        value: control.duty,
                        rule: "0 <= duty <= 1",
                    });
                }
                if let Some(m) = ramp_problem(
                    control.rise,
                    control.fall,
                    control.duty * control.period,
                    control.period,
                ) {
                    out.push(Diagnostic::InvalidWaveform {
                        device: name.clone(),
                        message: m,
                    });
                } else {
                    periodic = Some(exact_rational(control.period));
                }
            }
            Element::VoltageSource { waveform } | Element::CurrentSource { waveform } => {
                match waveform_problem(waveform) {
                    Some(m) => out.push(Diagnostic::InvalidWaveform {
                        device: name.clone(),
                        message: m,
                    }),
                    None => periodic = exact_period(waveform),
                }
            }
        }
        if matches!(
            d.element,
            Element::VoltageSource { .. } | Element::Inductor { .. }
        ) && d.terminals[0] == d.terminals[1]
        {
            out.push(Diagnostic::ShortedTerminals(name.clone()));
        }
        if let (Some(p), true) = (periodic, period_ok) {
            if !divides(&p, t) {
                out.push(Diagnostic::IncommensuratePeriod {
                    device: name.clone(),
                    period: rational_to_f64(&p),
                    fundamental: t,
                });
            }
        }
    }

    out.extend(
        floating_nodes(c)
            .into_iter()
            .map(Diagnostic::FloatingNode),
    );
    out
}

fn waveform_problem(w: &Waveform) -> Option<String> {
    match *w {
        Waveform::Dc(v) => (!v.is_finite()).then(|| "non-finite DC value".into()),
        Waveform::Sin {
            offset,
            amplitude,
            frequency,
            phase,
        } => {
            if !(frequency.is_finite() && frequency > 0.0) {
                Some(format!("SIN frequency {frequency:e} must be > 0"))
            } else if ![offset, amplitude, phase].iter().all(|v| v.is_finite()) {
                Some("non-finite SIN argument".into())
            } else {
                None
            }
        }
        Waveform::Pulse {
            v1,
            v2,
            delay,
            rise,
            fall,
            width,
            period,
        } => {
            if ![v1, v2, delay].iter().all(|v| v.is_finite()) {
                Some("non-finite PULSE argument".into())
            } else {
                ramp_problem(rise, fall, width, period)
            }
        }
    }
}

fn ramp_problem(rise: f64, fall: f64, width: f64, period: f64) -> Option<String> {
    if !(period.is_finite() && period > 0.0) {
        return Some(format!("period {period:e} must be > 0"));
    }
    if ![rise, fall, width].iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Some("rise, fall and width must be finite and >= 0".into());
    }
    if rise + width + fall > period {
        return Some("rise + width + fall exceeds the period".into());
    }
    None
}

fn floating_nodes(c: &Circuit) -> Vec<String> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for d in c.devices() {
        let [a, b] = &d.terminals;
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut reached = HashSet::from([GROUND]);
    let mut queue = VecDeque::from([GROUND]);
    while let Some(n) = queue.pop_front() {
        for &m in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            if reached.insert(m) {
                queue.push_back(m);
            }
        }
    }
    c.nodes()
        .iter()
        .filter(|n| !reached.contains(n.as_str()))
        .cloned()
        .collect()
}

/// True when `t / p` is a positive integer.
fn divides(p: &BigRational, t: f64) -> bool {
    let q = exact_rational(t) / p;
    q.is_integer() && !q.is_zero()
}

/// Exact period of a waveform; SIN uses the reciprocal of its exact frequency.
pub(crate) fn exact_period(w: &Waveform) -> Option<BigRational> {
    match *w {
        Waveform::Dc(_) => None,
        Waveform::Sin { frequency, .. } => Some(exact_rational(frequency).recip()),
        Waveform::Pulse { period, .. } => Some(exact_rational(period)),
    }
}

/// The decimal value printed by `{:e}` as an exact rational. This is the
/// shortest representation that round-trips, so `1e-5` maps to 1/100000
/// rather than to the binary expansion of the double.
pub(crate) fn exact_rational(v: f64) -> BigRational {
    let s = format!("{v:e}");
    let (mantissa, exp) = s.split_once('e').expect("{:e} always has an exponent");
    let mut exp: i64 = exp.parse().expect("integer exponent");
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits = match mantissa.split_once('.') {
        Some((int, frac)) => {
            exp -= frac.len() as i64;
            format!("{int}{frac}")
        }
        None => mantissa.to_string(),
    };
    let mut num: BigInt = digits.parse().expect("decimal digits");
    if neg {
        num = -num;
    }
    let ten = BigInt::from(10u8);
    let scale = num_traits::pow(ten, exp.unsigned_abs() as usize);
    if exp >= 0 {
        BigRational::from_integer(num * scale)
    } else {
        BigRational::new(num, scale)
    }
}

/// Least common multiple of two positive rationals.
pub(crate) fn rational_lcm(a: &BigRational, b: &BigRational) -> BigRational {
    let num = a.numer().lcm(b.numer());
    let den = a.denom().gcd(b.denom());
    if den.is_zero() {
        return BigRational::one();
    }
    BigRational::new(num, den)
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
