use std::collections::HashSet;

use super::validate::{exact_period, exact_rational, rational_lcm, rational_to_f64};
use super::{Circuit, Device, DeviceKind, DiodeParams, Element, Pwm, Waveform};
use crate::error::{Error, Result};

/// Parses a netlist. The first line is the title; `*` starts a comment
/// line; `.end` stops parsing. When no `.period` card is present the
/// fundamental period is the least common multiple of all source and switch
/// periods.
pub fn parse_netlist(text: &str) -> Result<Circuit> {
    let mut lines = text.lines().enumerate();
    let title = lines.next().map(|(_, l)| l.trim().to_string()).unwrap_or_default();

    let mut devices: Vec<Device> = Vec::new();
    let mut seen = HashSet::new();
    let mut period: Option<f64> = None;
    let mut last_line = 1;

    for (idx, raw) in lines {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        if line.starts_with('.') {
            let tokens = tokenize(line);
            match tokens[0].to_ascii_lowercase().as_str() {
                ".end" if tokens.len() == 1 => break,
                ".period" if tokens.len() == 2 => {
                    period = Some(number(&tokens[1], line_no)?);
                }
                _ => return Err(syntax(line_no, format!("unsupported control card '{line}'"))),
            }
            continue;
        }
        let letter = line.chars().next().unwrap();
        let kind = DeviceKind::from_letter(letter)
            .ok_or(Error::UnknownDeviceKind { line: line_no, letter })?;
        let device = parse_device(kind, &tokenize(line), line_no)?;
        if !seen.insert(device.name.to_ascii_uppercase()) {
            return Err(Error::DuplicateName {
                line: line_no,
                name: device.name,
            });
        }
        devices.push(device);
    }

    let period = match period {
        Some(p) => p,
        None => infer_period(&devices).ok_or_else(|| {
            syntax(
                last_line,
                "no .period card and no periodic source to infer the fundamental period".into(),
            )
        })?,
    };
    Ok(Circuit::new(title, devices, period))
}

fn infer_period(devices: &[Device]) -> Option<f64> {
    let mut acc = None;
    for d in devices {
        let (p, r) = match &d.element {
            Element::VoltageSource { waveform } | Element::CurrentSource { waveform } => {
                match waveform.period() {
                    Some(p) => (p, exact_period(waveform)?),
                    None => continue,
                }
            }
            Element::Switch { control, .. } => (control.period, exact_rational(control.period)),
            _ => continue,
        };
        if !(p.is_finite() && p > 0.0) {
            return None;
        }
        acc = Some(match acc {
            None => r,
            Some(a) => rational_lcm(&a, &r),
        });
    }
    acc.map(|r| rational_to_f64(&r))
}

/// Splits a card into tokens; parentheses become their own tokens, commas
/// and `=` are separators (`=` is kept as a token).
fn tokenize(line: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(line.len() + 8);
    for ch in line.chars() {
        match ch {
            '(' | ')' | '=' => {
                spaced.push(' ');
                spaced.push(ch);
                spaced.push(' ');
            }
            ',' => spaced.push(' '),
            _ => spaced.push(ch),
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

fn syntax(line: usize, message: String) -> Error {
    Error::Syntax { line, message }
}

fn number(tok: &str, line: usize) -> Result<f64> {
    parse_value(tok).ok_or_else(|| syntax(line, format!("invalid number '{tok}'")))
}

fn parse_device(kind: DeviceKind, tokens: &[String], line: usize) -> Result<Device> {
    if tokens.len() < 3 {
        return Err(syntax(line, format!("{} card needs a name and two nodes", kind.letter())));
    }
    let name = tokens[0].clone();
    let terminals = [tokens[1].clone(), tokens[2].clone()];
    for t in &terminals {
        if matches!(t.as_str(), "(" | ")" | "=") {
            return Err(syntax(line, format!("invalid node name '{t}'")));
        }
    }
    let rest = &tokens[3..];
    let element = match kind {
        DeviceKind::Resistor | DeviceKind::Capacitor | DeviceKind::Inductor => {
            let [v] = rest else {
                return Err(syntax(line, format!("{} card takes exactly one value", kind.letter())));
            };
            let value = number(v, line)?;
            match kind {
                DeviceKind::Resistor => Element::Resistor { resistance: value },
                DeviceKind::Capacitor => Element::Capacitor { capacitance: value },
                _ => Element::Inductor { inductance: value },
            }
        }
        DeviceKind::VoltageSource => Element::VoltageSource {
            waveform: parse_waveform(rest, line)?,
        },
        DeviceKind::CurrentSource => Element::CurrentSource {
            waveform: parse_waveform(rest, line)?,
        },
        DeviceKind::Diode => {
            let mut d = DiodeParams::default();
            for (key, value) in key_values(rest, line)? {
                match key.as_str() {
                    "is" => d.is = value,
                    "n" => d.n = value,
                    "vt" => d.vt = value,
                    _ => return Err(syntax(line, format!("unknown diode parameter '{key}'"))),
                }
            }
            Element::Diode(d)
        }
        DeviceKind::Switch => {
            let (args, tail) = call(rest, "pwm", line)?;
            if !(4..=5).contains(&args.len()) {
                return Err(syntax(line, "PWM takes (duty period rise fall [delay])".into()));
            }
            let control = Pwm {
                duty: args[0],
                period: args[1],
                rise: args[2],
                fall: args[3],
                delay: args.get(4).copied().unwrap_or(0.0),
            };
            let (mut ron, mut roff) = (1e-3, 1e6);
            for (key, value) in key_values(tail, line)? {
                match key.as_str() {
                    "ron" => ron = value,
                    "roff" => roff = value,
                    _ => return Err(syntax(line, format!("unknown switch parameter '{key}'"))),
                }
            }
            Element::Switch { ron, roff, control }
        }
    };
    Ok(Device {
        name,
        terminals,
        element,
    })
}

fn parse_waveform(rest: &[String], line: usize) -> Result<Waveform> {
    let Some(first) = rest.first() else {
        return Err(syntax(line, "source needs a value or waveform".into()));
    };
    match first.to_ascii_lowercase().as_str() {
        "dc" => match rest {
            [_, v] => Ok(Waveform::Dc(number(v, line)?)),
            _ => Err(syntax(line, "DC takes exactly one value".into())),
        },
        "sin" => {
            let (a, tail) = call(rest, "sin", line)?;
            if !tail.is_empty() || !(3..=4).contains(&a.len()) {
                return Err(syntax(line, "SIN takes (offset amplitude frequency [phase])".into()));
            }
            Ok(Waveform::Sin {
                offset: a[0],
                amplitude: a[1],
                frequency: a[2],
                phase: a.get(3).copied().unwrap_or(0.0),
            })
        }
        "pulse" => {
            let (a, tail) = call(rest, "pulse", line)?;
            if !tail.is_empty() || a.len() != 7 {
                return Err(syntax(
                    line,
                    "PULSE takes (v1 v2 delay rise fall width period)".into(),
                ));
            }
            Ok(Waveform::Pulse {
                v1: a[0],
                v2: a[1],
                delay: a[2],
                rise: a[3],
                fall: a[4],
                width: a[5],
                period: a[6],
            })
        }
        _ => match rest {
            [v] => Ok(Waveform::Dc(number(v, line)?)),
            _ => Err(syntax(line, format!("unrecognized source specification '{first}'"))),
        },
    }
}

/// Parses `NAME ( a b c ... )` and returns the numbers plus the remaining tokens.
fn call<'a>(tokens: &'a [String], name: &str, line: usize) -> Result<(Vec<f64>, &'a [String])> {
    let ok = tokens.len() >= 3 && tokens[0].eq_ignore_ascii_case(name) && tokens[1] == "(";
    if !ok {
        return Err(syntax(line, format!("expected {}( ... )", name.to_uppercase())));
    }
    let close = tokens
        .iter()
        .position(|t| t == ")")
        .ok_or_else(|| syntax(line, "missing ')'".into()))?;
    let args = tokens[2..close]
        .iter()
        .map(|t| number(t, line))
        .collect::<Result<Vec<_>>>()?;
    Ok((args, &tokens[close + 1..]))
}

fn key_values(tokens: &[String], line: usize) -> Result<Vec<(String, f64)>> {
    if tokens.len() % 3 != 0 {
        return Err(syntax(line, "expected KEY=VALUE pairs".into()));
    }
    tokens
        .chunks(3)
        .map(|c| {
            if c[1] != "=" {
                return Err(syntax(line, format!("expected '=' after '{}'", c[0])));
            }
            Ok((c[0].to_ascii_lowercase(), number(&c[2], line)?))
        })
        .collect()
}

/// Parses a number with an optional scale suffix (`t g meg k m u n p f`,
/// case-insensitive). The result is the nearest double to the exact
/// decimal value.
pub fn parse_value(tok: &str) -> Option<f64> {
    let s = tok.to_ascii_lowercase();
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut n_digits = i - digits_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        n_digits += i - frac_start;
    }
    if n_digits == 0 {
        return None;
    }
    let mantissa = &s[..i];
    let mut exponent: i32 = 0;
    if i < b.len() && b[i] == b'e' {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_digits = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j == exp_digits {
            return None;
        }
        exponent = s[i + 1..j].parse().ok()?;
        i = j;
    }
    let scale = match &s[i..] {
        "" => 0,
        "t" => 12,
        "g" => 9,
        "meg" => 6,
        "k" => 3,
        "m" => -3,
        "u" => -6,
        "n" => -9,
        "p" => -12,
        "f" => -15,
        _ => return None,
    };
    format!("{mantissa}e{}", exponent + scale).parse().ok()
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

/// Serializes a circuit so that `parse_netlist(&format_netlist(c)) == c`.
pub fn format_netlist(c: &Circuit) -> String {
    let mut out = String::new();
    out.push_str(c.title());
    out.push('\n');
    for d in c.devices() {
        let [a, b] = &d.terminals;
        let body = match &d.element {
            Element::Resistor { resistance: v }
            | Element::Capacitor { capacitance: v }
            | Element::Inductor { inductance: v } => fmt_num(*v),
            Element::VoltageSource { waveform } | Element::CurrentSource { waveform } => {
                format_waveform(waveform)
            }
            Element::Diode(p) => format!(
                "IS={} N={} VT={}",
                fmt_num(p.is),
                fmt_num(p.n),
                fmt_num(p.vt)
            ),
            Element::Switch { ron, roff, control } => format!(
                "PWM({} {} {} {} {}) RON={} ROFF={}",
                fmt_num(control.duty),
                fmt_num(control.period),
                fmt_num(control.rise),
                fmt_num(control.fall),
                fmt_num(control.delay),
                fmt_num(*ron),
                fmt_num(*roff)
            ),
        };
        out.push_str(&format!("{} {a} {b} {body}\n", d.name));
    }
    out.push_str(&format!(".period {}\n.end\n", fmt_num(c.fundamental_period())));
    out
}

fn format_waveform(w: &Waveform) -> String {
    match *w {
        Waveform::Dc(v) => format!("DC {}", fmt_num(v)),
        Waveform::Sin {
            offset,
            amplitude,
            frequency,
            phase,
        } => format!(
            "SIN({} {} {} {})",
            fmt_num(offset),
            fmt_num(amplitude),
            fmt_num(frequency),
            fmt_num(phase)
        ),
        Waveform::Pulse {
            v1,
            v2,
            delay,
            rise,
            fall,
            width,
            period,
        } => {
            let args: Vec<String> = [v1, v2, delay, rise, fall, width, period]
                .iter()
                .map(|v| fmt_num(*v))
                .collect();
            format!("PULSE({})", args.join(" "))
        }
    }
}
