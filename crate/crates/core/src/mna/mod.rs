//! Modified nodal analysis: the residual
//! `F(t, x) = A_C x' + A_G(t) x - i_nl(x) - i_s(t)`, its Jacobian pieces,
//! and the derivatives of `A_C`, `A_G` with respect to design parameters.
//!
//! Unknowns are the non-ground node voltages in circuit node order, followed
//! by one branch current per voltage source and inductor in device order.

mod diode;

pub use diode::{critical_voltage, diode_current};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::netlist::{Circuit, Device, DiodeParams, Element, ParameterRef, Pwm, Waveform};

#[derive(Debug, Clone)]
enum SourceTarget {
    /// Voltage source: value goes into its branch equation.
    Branch(usize),
    /// Current source from `pos` through the source to `neg`.
    Current {
        pos: Option<usize>,
        neg: Option<usize>,
    },
}

#[derive(Debug, Clone)]
struct SourceStamp {
    waveform: Waveform,
    target: SourceTarget,
}

#[derive(Debug, Clone)]
struct DiodeStamp {
    anode: Option<usize>,
    cathode: Option<usize>,
    params: DiodeParams,
}

/// A PWM-controlled switch, stamped as the conductance
/// `g(t) = 1/roff + s(t) (1/ron - 1/roff)` between two nodes.
#[derive(Debug, Clone)]
pub struct SwitchStamp {
    pub name: String,
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub ron: f64,
    pub roff: f64,
    pub control: Pwm,
}

impl SwitchStamp {
    pub fn conductance(&self, t: f64) -> f64 {
        let (gon, goff) = (1.0 / self.ron, 1.0 / self.roff);
        goff + self.control.control(t) * (gon - goff)
    }

    /// The `±1` conductance pattern.
    pub fn pattern(&self, dim: usize) -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(dim, dim, &two_terminal(self.a, self.b, 1.0))
    }
}

/// MNA matrices of a circuit. `a_g` holds the time-invariant conductance and
/// incidence entries; switch conductances are added per instant by
/// [`MnaStructure::a_g_at`].
#[derive(Debug, Clone)]
pub struct MnaStructure {
    pub n_nodes: usize,
    pub n_branches: usize,
    pub dim: usize,
    pub a_g: SparseMatrix<f64>,
    pub a_c: SparseMatrix<f64>,
    names: Vec<String>,
    node_map: HashMap<String, usize>,
    branch_map: HashMap<String, usize>,
    sources: Vec<SourceStamp>,
    diodes: Vec<DiodeStamp>,
    switches: Vec<SwitchStamp>,
}

/// Nonlinear device currents and their Jacobian `g_nl = d i_nl / dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearEval {
    pub i_nl: Vec<f64>,
    pub g_nl: SparseMatrix<f64>,
}

fn two_terminal(a: Option<usize>, b: Option<usize>, v: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(4);
    if let Some(a) = a {
        t.push((a, a, v));
    }
    if let Some(b) = b {
        t.push((b, b, v));
    }
    if let (Some(a), Some(b)) = (a, b) {
        t.push((a, b, -v));
        t.push((b, a, -v));
    }
    t
}

/// Incidence entries of a branch current `br` flowing from `p` to `n`:
/// KCL columns and the branch-equation row.
fn incidence(p: Option<usize>, n: Option<usize>, br: usize) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(4);
    if let Some(p) = p {
        t.push((p, br, 1.0));
        t.push((br, p, 1.0));
    }
    if let Some(n) = n {
        t.push((n, br, -1.0));
        t.push((br, n, -1.0));
    }
    t
}

struct Stamp {
    g: Vec<(usize, usize, f64)>,
    c: Vec<(usize, usize, f64)>,
}

impl MnaStructure {
    fn layout(c: &Circuit) -> (HashMap<String, usize>, HashMap<String, usize>, Vec<String>) {
        let mut names = Vec::new();
        let mut node_map = HashMap::new();
        for n in &c.nodes()[1..] {
            node_map.insert(n.clone(), names.len());
            names.push(format!("v({n})"));
        }
        let mut branch_map = HashMap::new();
        for d in c.devices() {
            if matches!(
                d.element,
                Element::VoltageSource { .. } | Element::Inductor { .. }
            ) {
                branch_map.insert(d.name.to_ascii_uppercase(), names.len());
                names.push(format!("i({})", d.name));
            }
        }
        (node_map, branch_map, names)
    }

    fn node(&self, name: &str) -> Option<usize> {
        self.node_map.get(name).copied()
    }

    fn stamp(&self, d: &Device) -> Stamp {
        let a = self.node(&d.terminals[0]);
        let b = self.node(&d.terminals[1]);
        let branch = self.branch_map.get(&d.name.to_ascii_uppercase()).copied();
        let (mut g, mut c) = (Vec::new(), Vec::new());
        match &d.element {
            Element::Resistor { resistance } => g = two_terminal(a, b, 1.0 / resistance),
            Element::Capacitor { capacitance } => c = two_terminal(a, b, *capacitance),
            Element::Inductor { inductance } => {
                let br = branch.expect("inductor has a branch");
                g = incidence(a, b, br);
                c.push((br, br, -inductance));
            }
            Element::VoltageSource { .. } => g = incidence(a, b, branch.expect("source branch")),
            Element::CurrentSource { .. } | Element::Diode(_) | Element::Switch { .. } => {}
        }
        Stamp { g, c }
    }

    pub fn unknown_names(&self) -> &[String] {
        &self.names
    }

    /// Index of a non-ground node voltage.
    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.node(node)
    }

    /// Index of the branch current of a voltage source or inductor.
    pub fn branch_index(&self, device: &str) -> Option<usize> {
        self.branch_map.get(&device.to_ascii_uppercase()).copied()
    }

    pub fn switches(&self) -> &[SwitchStamp] {
        &self.switches
    }

    pub fn has_diodes(&self) -> bool {
        !self.diodes.is_empty()
    }

    /// True when neither diodes nor switches are present, so the Newton
    /// matrix is constant.
    pub fn is_linear_time_invariant(&self) -> bool {
        self.diodes.is_empty() && self.switches.is_empty()
    }

    /// `A_G(t)`: the static part plus the switch conductances at `t`.
    pub fn a_g_at(&self, t: f64) -> SparseMatrix<f64> {
        let mut trip = self.a_g.triplets();
        for s in &self.switches {
            trip.extend(two_terminal(s.a, s.b, s.conductance(t)));
        }
        SparseMatrix::from_triplets(self.dim, self.dim, &trip)
    }

    /// Adds `scale * A_G(t)` into a dense row-major matrix.
    pub fn add_a_g_dense(&self, t: f64, scale: f64, dense: &mut [f64]) {
        let n = self.dim;
        for (r, c, v) in self.a_g.iter() {
            dense[r * n + c] += scale * v;
        }
        for s in &self.switches {
            for (r, c, v) in two_terminal(s.a, s.b, s.conductance(t)) {
                dense[r * n + c] += scale * v;
            }
        }
    }

    /// Independent-source vector `i_s(t)`.
    pub fn sources_at(&self, t: f64) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for src in &self.sources {
            let v = src.waveform.eval(t);
            match src.target {
                SourceTarget::Branch(br) => s[br] += v,
                SourceTarget::Current { pos, neg } => {
                    if let Some(p) = pos {
                        s[p] -= v;
                    }
                    if let Some(n) = neg {
                        s[n] += v;
                    }
                }
            }
        }
        s
    }

    fn check_finite(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "state has length {}, expected {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(())
    }

    /// Calls `f(anode, cathode, i_d, g_d)` for every diode at state `x`.
    fn for_each_diode(&self, x: &[f64], mut f: impl FnMut(Option<usize>, Option<usize>, f64, f64)) {
        for d in &self.diodes {
            let v = d.anode.map_or(0.0, |i| x[i]) - d.cathode.map_or(0.0, |i| x[i]);
            let (i, g) = diode_current(&d.params, v);
            f(d.anode, d.cathode, i, g);
        }
    }

    /// `i_nl(x)` and `g_nl(x)`. A diode conducting `i_d` from anode to
    /// cathode removes `i_d` from the anode row and adds it to the cathode row.
    pub fn eval_nonlinear(&self, x: &[f64]) -> Result<NonlinearEval> {
        self.check_finite(x)?;
        let mut i_nl = vec![0.0; self.dim];
        let mut trip = Vec::new();
        self.for_each_diode(x, |a, k, i, g| {
            if let Some(a) = a {
                i_nl[a] -= i;
            }
            if let Some(k) = k {
                i_nl[k] += i;
            }
            trip.extend(two_terminal(a, k, -g));
        });
        Ok(NonlinearEval {
            i_nl,
            g_nl: SparseMatrix::from_triplets(self.dim, self.dim, &trip),
        })
    }

    /// Dense variant used in time stepping: adds `-i_nl` to `residual` and
    /// `-g_nl` (that is `+g_d` on the diagonal) to the row-major `jac`.
    pub fn add_nonlinear_dense(&self, x: &[f64], residual: &mut [f64], jac: Option<&mut [f64]>) {
        let n = self.dim;
        let mut jac = jac;
        self.for_each_diode(x, |a, k, i, g| {
            if let Some(a) = a {
                residual[a] += i;
            }
            if let Some(k) = k {
                residual[k] -= i;
            }
            if let Some(j) = jac.as_deref_mut() {
                for (r, c, v) in two_terminal(a, k, g) {
                    j[r * n + c] += v;
                }
            }
        });
    }

    /// `F(t, x)` without the `A_C x'` term: `A_G(t) x - i_nl(x) - i_s(t)`.
    pub fn static_residual(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut r = self.a_g.mul_vec(x);
        for s in &self.switches {
            for (i, j, v) in two_terminal(s.a, s.b, s.conductance(t)) {
                r[i] += v * x[j];
            }
        }
        self.add_nonlinear_dense(x, &mut r, None);
        for (ri, si) in r.iter_mut().zip(self.sources_at(t)) {
            *ri -= si;
        }
        r
    }
}

/// Assembles the MNA structure of a (validated) circuit.
pub fn assemble_static(c: &Circuit) -> MnaStructure {
    let (node_map, branch_map, names) = MnaStructure::layout(c);
    let n_nodes = node_map.len();
    let dim = names.len();
    let mut mna = MnaStructure {
        n_nodes,
        n_branches: dim - n_nodes,
        dim,
        a_g: SparseMatrix::zeros(dim, dim),
        a_c: SparseMatrix::zeros(dim, dim),
        names,
        node_map,
        branch_map,
        sources: Vec::new(),
        diodes: Vec::new(),
        switches: Vec::new(),
    };
    let (mut g, mut cap) = (Vec::new(), Vec::new());
    for d in c.devices() {
        let s = mna.stamp(d);
        g.extend(s.g);
        cap.extend(s.c);
        let a = mna.node(&d.terminals[0]);
        let b = mna.node(&d.terminals[1]);
        match &d.element {
            Element::VoltageSource { waveform } => mna.sources.push(SourceStamp {
                waveform: waveform.clone(),
                target: SourceTarget::Branch(mna.branch_index(&d.name).unwrap()),
            }),
            Element::CurrentSource { waveform } => mna.sources.push(SourceStamp {
                waveform: waveform.clone(),
                target: SourceTarget::Current { pos: a, neg: b },
            }),
            Element::Diode(params) => mna.diodes.push(DiodeStamp {
                anode: a,
                cathode: b,
                params: *params,
            }),
            Element::Switch { ron, roff, control } => mna.switches.push(SwitchStamp {
                name: d.name.clone(),
                a,
                b,
                ron: *ron,
                roff: *roff,
                control: *control,
            }),
            _ => {}
        }
    }
    mna.a_g = SparseMatrix::from_triplets(dim, dim, &g);
    mna.a_c = SparseMatrix::from_triplets(dim, dim, &cap);
    mna
}

/// `A_G` and `A_C` contributions of one device, sized like the full system.
pub fn device_matrices(
    mna: &MnaStructure,
    d: &Device,
) -> (SparseMatrix<f64>, SparseMatrix<f64>) {
    let s = mna.stamp(d);
    (
        SparseMatrix::from_triplets(mna.dim, mna.dim, &s.g),
        SparseMatrix::from_triplets(mna.dim, mna.dim, &s.c),
    )
}

/// Independent sources at time `t`.
pub fn eval_sources(mna: &MnaStructure, t: f64) -> Vec<f64> {
    mna.sources_at(t)
}

pub fn eval_nonlinear(mna: &MnaStructure, x: &[f64]) -> Result<NonlinearEval> {
    mna.eval_nonlinear(x)
}

/// Time-varying part of a switch-resistance derivative:
/// `dA_G/dp (t) = modulation(t) * pattern`.
#[derive(Debug, Clone)]
pub struct SwitchDerivative {
    pub pattern: SparseMatrix<f64>,
    control: Pwm,
    resistance: f64,
    on_state: bool,
}

impl SwitchDerivative {
    pub fn modulation(&self, t: f64) -> f64 {
        let s = self.control.control(t);
        let weight = if self.on_state { s } else { 1.0 - s };
        -weight / (self.resistance * self.resistance)
    }
}

/// Derivatives of `A_C` and `A_G` with respect to one parameter.
#[derive(Debug, Clone)]
pub struct ParamStamps {
    pub d_a_c: SparseMatrix<f64>,
    pub d_a_g: SparseMatrix<f64>,
    pub switch: Option<SwitchDerivative>,
}

impl ParamStamps {
    /// `dA_G/dp` at time `t`, including any switch modulation.
    pub fn d_a_g_at(&self, t: f64) -> SparseMatrix<f64> {
        match &self.switch {
            None => self.d_a_g.clone(),
            Some(s) => self.d_a_g.add_scaled(1.0, &s.pattern, s.modulation(t)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d_a_c.is_zero() && self.d_a_g.is_zero() && self.switch.is_none()
    }
}

/// Analytic `dA_C/dp`, `dA_G/dp` for the value of an R, C or L, or the
/// on/off resistance of a switch.
pub fn param_stamps(mna: &MnaStructure, c: &Circuit, p: &ParameterRef) -> Result<ParamStamps> {
    let unknown = || Error::UnknownParameter(p.to_string());
    let d = c.device(&p.device_name).ok_or_else(unknown)?;
    let dim = mna.dim;
    let a = mna.node(&d.terminals[0]);
    let b = mna.node(&d.terminals[1]);
    let empty = || SparseMatrix::zeros(dim, dim);
    let mut out = ParamStamps {
        d_a_c: empty(),
        d_a_g: empty(),
        switch: None,
    };
    match (&d.element, p.param_name.as_str()) {
        (Element::Resistor { resistance }, "value") => {
            out.d_a_g = SparseMatrix::from_triplets(
                dim,
                dim,
                &two_terminal(a, b, -1.0 / (resistance * resistance)),
            );
        }
        (Element::Capacitor { .. }, "value") => {
            out.d_a_c = SparseMatrix::from_triplets(dim, dim, &two_terminal(a, b, 1.0));
        }
        (Element::Inductor { .. }, "value") => {
            let br = mna.branch_index(&d.name).ok_or_else(unknown)?;
            out.d_a_c = SparseMatrix::from_triplets(dim, dim, &[(br, br, -1.0)]);
        }
        (Element::Switch { ron, roff, control }, name @ ("ron" | "roff")) => {
            let on_state = name == "ron";
            out.switch = Some(SwitchDerivative {
                pattern: SparseMatrix::from_triplets(dim, dim, &two_terminal(a, b, 1.0)),
                control: *control,
                resistance: if on_state { *ron } else { *roff },
                on_state,
            });
        }
        _ => return Err(unknown()),
    }
    Ok(out)
}
