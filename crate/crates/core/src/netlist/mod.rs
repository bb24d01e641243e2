//! Circuit description: devices, waveforms, design parameters, and the
//! SPICE-subset netlist format (see `docs/netlist-grammar.md`).

mod parse;
mod validate;
mod waveform;

pub use parse::{format_netlist, parse_netlist, parse_value};
pub use validate::{validate_circuit, Diagnostic};
pub use waveform::{Pwm, Waveform};

use std::fmt;

use crate::error::{Error, Result};

pub const GROUND: &str = "0";

/// Default diode saturation current in A.
pub const DEFAULT_IS: f64 = 1e-14;
/// Default thermal voltage in V (300 K).
pub const DEFAULT_VT: f64 = 0.02585;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    Resistor,
    Capacitor,
    Inductor,
    VoltageSource,
    CurrentSource,
    Diode,
    Switch,
}

impl DeviceKind {
    pub fn from_letter(letter: char) -> Option<Self> {
        Some(match letter.to_ascii_uppercase() {
            'R' => Self::Resistor,
            'C' => Self::Capacitor,
            'L' => Self::Inductor,
            'V' => Self::VoltageSource,
            'I' => Self::CurrentSource,
            'D' => Self::Diode,
            'S' => Self::Switch,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        match self {
            Self::Resistor => 'R',
            Self::Capacitor => 'C',
            Self::Inductor => 'L',
            Self::VoltageSource => 'V',
            Self::CurrentSource => 'I',
            Self::Diode => 'D',
            Self::Switch => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeParams {
    /// Saturation current, A.
    pub is: f64,
    /// Emission coefficient.
    pub n: f64,
    /// Thermal voltage, V.
    pub vt: f64,
}

impl Default for DiodeParams {
    fn default() -> Self {
        Self {
            is: DEFAULT_IS,
            n: 1.0,
            vt: DEFAULT_VT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Resistor { resistance: f64 },
    Capacitor { capacitance: f64 },
    Inductor { inductance: f64 },
    VoltageSource { waveform: Waveform },
    CurrentSource { waveform: Waveform },
    Diode(DiodeParams),
    Switch { ron: f64, roff: f64, control: Pwm },
}

/// A named two-terminal device. `terminals[0]` is the positive terminal
/// (anode for diodes).
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub name: String,
    pub terminals: [String; 2],
    pub element: Element,
}

impl Device {
    pub fn kind(&self) -> DeviceKind {
        match self.element {
            Element::Resistor { .. } => DeviceKind::Resistor,
            Element::Capacitor { .. } => DeviceKind::Capacitor,
            Element::Inductor { .. } => DeviceKind::Inductor,
            Element::VoltageSource { .. } => DeviceKind::VoltageSource,
            Element::CurrentSource { .. } => DeviceKind::CurrentSource,
            Element::Diode(_) => DeviceKind::Diode,
            Element::Switch { .. } => DeviceKind::Switch,
        }
    }

    /// All scalar parameters as `(name, value)`, names lower-case.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match &self.element {
            Element::Resistor { resistance } => vec![("value", *resistance)],
            Element::Capacitor { capacitance } => vec![("value", *capacitance)],
            Element::Inductor { inductance } => vec![("value", *inductance)],
            Element::VoltageSource { waveform } | Element::CurrentSource { waveform } => {
                waveform.params()
            }
            Element::Diode(d) => vec![("is", d.is), ("n", d.n), ("vt", d.vt)],
            Element::Switch { ron, roff, control } => {
                let mut p = vec![("ron", *ron), ("roff", *roff)];
                p.extend(control.params());
                p
            }
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        let name = name.to_ascii_lowercase();
        self.params().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    /// Name of the design parameter this device exposes, if any.
    pub fn design_param(&self) -> Option<&'static str> {
        match self.element {
            Element::Resistor { .. } | Element::Capacitor { .. } | Element::Inductor { .. } => {
                Some("value")
            }
            Element::Switch { .. } => Some("ron"),
            _ => None,
        }
    }

    fn set_param(&mut self, name: &str, value: f64) -> bool {
        let name = name.to_ascii_lowercase();
        match (&mut self.element, name.as_str()) {
            (Element::Resistor { resistance: v }, "value")
            | (Element::Capacitor { capacitance: v }, "value")
            | (Element::Inductor { inductance: v }, "value")
            | (Element::Switch { ron: v, .. }, "ron")
            | (Element::Switch { roff: v, .. }, "roff")
            | (Element::Diode(DiodeParams { is: v, .. }), "is")
            | (Element::Diode(DiodeParams { n: v, .. }), "n")
            | (Element::Diode(DiodeParams { vt: v, .. }), "vt") => {
                *v = value;
                true
            }
            (Element::VoltageSource { waveform }, _) | (Element::CurrentSource { waveform }, _) => {
                waveform.set_param(&name, value)
            }
            (Element::Switch { control, .. }, _) => control.set_param(&name, value),
            _ => false,
        }
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(self.element, Element::Diode(_) | Element::Switch { .. })
    }
}

/// A parsed circuit. Node `"0"` is ground and always `nodes()[0]`; the other
/// nodes follow in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    title: String,
    nodes: Vec<String>,
    devices: Vec<Device>,
    fundamental_period: f64,
}

impl Circuit {
    pub fn new(title: impl Into<String>, devices: Vec<Device>, fundamental_period: f64) -> Self {
        let mut nodes = vec![GROUND.to_string()];
        for d in &devices {
            for t in &d.terminals {
                if !nodes.contains(t) {
                    nodes.push(t.clone());
                }
            }
        }
        Self {
            title: title.into(),
            nodes,
            devices,
            fundamental_period,
        }
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    /// Period `T` of the periodic excitation in seconds.
    pub fn fundamental_period(&self) -> f64 {
        self.fundamental_period
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.name.eq_ignore_ascii_case(name))
    }

    pub fn has_nonlinear(&self) -> bool {
        self.devices.iter().any(Device::is_nonlinear)
    }

    /// Resolves a `"device.param"` reference.
    pub fn parameter(&self, spec: &str) -> Result<ParameterRef> {
        let (dev, param) = spec
            .split_once('.')
            .ok_or_else(|| Error::UnknownParameter(spec.to_string()))?;
        let device = self
            .device(dev)
            .ok_or_else(|| Error::UnknownParameter(spec.to_string()))?;
        let value = device
            .param(param)
            .ok_or_else(|| Error::UnknownParameter(spec.to_string()))?;
        Ok(ParameterRef {
            device_name: device.name.clone(),
            param_name: param.to_ascii_lowercase(),
            nominal_value: value,
        })
    }

    /// Copy of the circuit with one parameter replaced.
    pub fn with_parameter(&self, p: &ParameterRef, value: f64) -> Result<Circuit> {
        let mut out = self.clone();
        let device = out
            .devices
            .iter_mut()
            .find(|d| d.name.eq_ignore_ascii_case(&p.device_name))
            .ok_or_else(|| Error::UnknownParameter(p.to_string()))?;
        if !device.set_param(&p.param_name, value) {
            return Err(Error::UnknownParameter(p.to_string()));
        }
        Ok(out)
    }

    pub fn to_netlist(&self) -> String {
        format_netlist(self)
    }
}

/// A scalar design parameter of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterRef {
    pub device_name: String,
    pub param_name: String,
    pub nominal_value: f64,
}

impl fmt::Display for ParameterRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.device_name, self.param_name)
    }
}

/// Design parameters in file order: the value of every R, C, L and the
/// on-resistance of every switch.
pub fn list_parameters(c: &Circuit) -> Vec<ParameterRef> {
    c.devices()
        .iter()
        .filter_map(|d| {
            let name = d.design_param()?;
            Some(ParameterRef {
                device_name: d.name.clone(),
                param_name: name.to_string(),
                nominal_value: d.param(name)?,
            })
        })
        .collect()
}
