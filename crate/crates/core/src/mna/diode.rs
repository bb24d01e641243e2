use crate::netlist::DiodeParams;

/// Junction voltage beyond which the exponential is continued linearly.
pub fn critical_voltage(p: &DiodeParams) -> f64 {
    let nvt = p.n * p.vt;
    nvt * (nvt / (p.is * std::f64::consts::SQRT_2)).ln()
}

/// Diode current and its derivative at junction voltage `v`. Above the
/// critical voltage the curve is extended by its tangent, so both values
/// stay continuous.
pub fn diode_current(p: &DiodeParams, v: f64) -> (f64, f64) {
    let nvt = p.n * p.vt;
    let vc = critical_voltage(p);
    if v <= vc {
        let e = (v / nvt).exp();
        (p.is * (e - 1.0), p.is / nvt * e)
    } else {
        let e = (vc / nvt).exp();
        let g = p.is / nvt * e;
        (p.is * (e - 1.0) + g * (v - vc), g)
    }
}
