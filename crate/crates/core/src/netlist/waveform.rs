use std::f64::consts::PI;

/// Independent-source waveform. PULSE is extended periodically in both
/// directions so that every waveform is exactly periodic from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Dc(f64),
    /// `offset + amplitude * sin(2π f t + phase)`, phase in degrees.
    Sin {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    Pulse {
        v1: f64,
        v2: f64,
        delay: f64,
        rise: f64,
        fall: f64,
        width: f64,
        period: f64,
    },
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc(v) => v,
            Waveform::Sin {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (2.0 * PI * frequency * t + phase.to_radians()).sin(),
            Waveform::Pulse {
                v1,
                v2,
                delay,
                rise,
                fall,
                width,
                period,
            } => v1 + (v2 - v1) * trapezoid((t - delay).rem_euclid(period), rise, width, fall),
        }
    }

    /// Repetition period, `None` for DC.
    pub fn period(&self) -> Option<f64> {
        match *self {
            Waveform::Dc(_) => None,
            Waveform::Sin { frequency, .. } => Some(1.0 / frequency),
            Waveform::Pulse { period, .. } => Some(period),
        }
    }

    pub(crate) fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Waveform::Dc(v) => vec![("dc", v)],
            Waveform::Sin {
                offset,
                amplitude,
                frequency,
                phase,
            } => vec![
                ("offset", offset),
                ("amplitude", amplitude),
                ("frequency", frequency),
                ("phase", phase),
            ],
            Waveform::Pulse {
                v1,
                v2,
                delay,
                rise,
                fall,
                width,
                period,
            } => vec![
                ("v1", v1),
                ("v2", v2),
                ("delay", delay),
                ("rise", rise),
                ("fall", fall),
                ("width", width),
                ("period", period),
            ],
        }
    }

    pub(crate) fn set_param(&mut self, name: &str, value: f64) -> bool {
        let slot = match (self, name) {
            (Waveform::Dc(v), "dc") => v,
            (Waveform::Sin { offset, .. }, "offset") => offset,
            (Waveform::Sin { amplitude, .. }, "amplitude") => amplitude,
            (Waveform::Sin { frequency, .. }, "frequency") => frequency,
            (Waveform::Sin { phase, .. }, "phase") => phase,
            (Waveform::Pulse { v1, .. }, "v1") => v1,
            (Waveform::Pulse { v2, .. }, "v2") => v2,
            (Waveform::Pulse { delay, .. }, "delay") => delay,
            (Waveform::Pulse { rise, .. }, "rise") => rise,
            (Waveform::Pulse { fall, .. }, "fall") => fall,
            (Waveform::Pulse { width, .. }, "width") => width,
            (Waveform::Pulse { period, .. }, "period") => period,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Switch control: 0 = off, 1 = on, with linear rise/fall ramps. The on
/// plateau lasts `duty * period` and starts after the rise ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pwm {
    pub duty: f64,
    pub period: f64,
    pub rise: f64,
    pub fall: f64,
    pub delay: f64,
}

impl Pwm {
    /// Time average of `control` over one period.
    pub fn mean(&self) -> f64 {
        (0.5 * self.rise + self.duty * self.period + 0.5 * self.fall) / self.period
    }

    pub fn control(&self, t: f64) -> f64 {
        trapezoid(
            (t - self.delay).rem_euclid(self.period),
            self.rise,
            self.duty * self.period,
            self.fall,
        )
    }

    pub(crate) fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("duty", self.duty),
            ("period", self.period),
            ("rise", self.rise),
            ("fall", self.fall),
            ("delay", self.delay),
        ]
    }

    pub(crate) fn set_param(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "duty" => &mut self.duty,
            "period" => &mut self.period,
            "rise" => &mut self.rise,
            "fall" => &mut self.fall,
            "delay" => &mut self.delay,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Unit trapezoid on `[0, rise + width + fall]`, zero afterwards.
fn trapezoid(tau: f64, rise: f64, width: f64, fall: f64) -> f64 {
    if tau < rise {
        tau / rise
    } else if tau < rise + width {
        1.0
    } else if tau < rise + width + fall {
        1.0 - (tau - rise - width) / fall
    } else {
        0.0
    }
}
