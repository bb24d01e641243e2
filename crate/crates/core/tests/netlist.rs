mod common;

use proptest::prelude::*;

use common::{fixture, FIXTURES};
use tfha_core::netlist::*;
use tfha_core::Error;

fn grammar_files() -> Vec<std::path::PathBuf> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/grammar");
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

#[test]
fn every_grammar_fixture_is_valid() {
    let files = grammar_files();
    assert!(files.len() >= 4);
    for f in files {
        let c = parse_netlist(&std::fs::read_to_string(&f).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert_eq!(validate_circuit(&c), vec![], "{}", f.display());
    }
}

#[test]
fn circuit_fixtures_are_valid() {
    for name in FIXTURES {
        assert_eq!(validate_circuit(&fixture(name)), vec![], "{name}");
    }
}

#[test]
fn suffixes_in_passives_fixture() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/grammar/passives.cir"),
    )
    .unwrap();
    let c = parse_netlist(&text).unwrap();
    let v = |d: &str| c.device(d).unwrap().param("value").unwrap();
    assert_eq!(v("R2"), 2.2e6);
    assert_eq!(v("C1"), 1e-5);
    assert_eq!(v("C3"), 1e-10);
    assert_eq!(v("C4"), 1e-15);
    assert_eq!(v("R4"), 1e9);
    assert_eq!(v("R5"), 1e12);
    assert_eq!(c.fundamental_period(), 1e-3);
}

#[test]
fn cards_after_end_are_ignored() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/grammar/trailing.cir"),
    )
    .unwrap();
    let c = parse_netlist(&text).unwrap();
    assert_eq!(c.devices().len(), 2);
    assert_eq!(c.device("R1").unwrap().param("value"), Some(1e3));
}

#[test]
fn rectifier_parameters() {
    let names: Vec<String> = list_parameters(&fixture("rectifier"))
        .iter()
        .map(ToString::to_string)
        .collect();
    assert_eq!(names, ["R1.value", "C1.value"]);
}

#[test]
fn boost_parameters_cover_parasitics() {
    let names: Vec<String> = list_parameters(&fixture("boost"))
        .iter()
        .map(ToString::to_string)
        .collect();
    for d in ["L1", "R1", "R2", "R3", "R4", "L2", "L3", "L4", "C1"] {
        assert!(names.contains(&format!("{d}.value")), "{d}");
    }
    assert!(names.contains(&"S1.ron".to_string()));
    assert_eq!(names.len(), 10);
}

#[test]
fn source_only_circuit_has_no_parameters() {
    let c = parse_netlist("t\nV1 a 0 DC 1\n.period 1\n.end\n").unwrap();
    assert!(list_parameters(&c).is_empty());
}

#[test]
fn diode_with_zero_saturation_current() {
    let c = parse_netlist("t\nV1 a 0 DC 1\nD1 a b IS=0\nR1 b 0 1k\n.period 1\n").unwrap();
    let d = validate_circuit(&c);
    assert!(matches!(d.as_slice(), [Diagnostic::NonPositiveParameter { device, .. }] if device == "D1"));
}

#[test]
fn floating_node_is_reported() {
    let c = parse_netlist("t\nV1 a 0 DC 1\nR1 a 0 1k\nR2 5 6 1k\n.period 1\n").unwrap();
    let d = validate_circuit(&c);
    assert!(d.contains(&Diagnostic::FloatingNode("5".into())));
    assert!(d.contains(&Diagnostic::FloatingNode("6".into())));
}

#[test]
fn unsupported_card_is_rejected() {
    let e = parse_netlist("t\nV1 a 0 DC 1\nQ1 a b c model\n").unwrap_err();
    assert!(matches!(e, Error::UnknownDeviceKind { .. }), "{e:?}");
}

// ---- round trip ----

fn value() -> impl Strategy<Value = f64> {
    (-12.0f64..9.0).prop_map(|e| 10f64.powf(e))
}

fn node() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["0", "a", "b", "n1", "out"]).prop_map(String::from)
}

fn waveform() -> impl Strategy<Value = Waveform> {
    prop_oneof![
        (-10.0f64..10.0).prop_map(Waveform::Dc),
        (-1.0f64..1.0, 0.1f64..10.0, prop::sample::select(vec![1.0, 2.0, 4.0]), -180.0f64..180.0)
            .prop_map(|(offset, amplitude, m, phase)| Waveform::Sin {
                offset,
                amplitude,
                frequency: 1e3 * m,
                phase,
            }),
        (-1.0f64..1.0, 1.0f64..5.0, 0.0f64..0.25, 0.0f64..0.25, 0.0f64..0.25).prop_map(
            |(v1, v2, delay, rise, fall)| Waveform::Pulse {
                v1,
                v2,
                delay: delay * 1e-3,
                rise: rise * 1e-3,
                fall: fall * 1e-3,
                width: 0.25e-3,
                period: 1e-3,
            }
        ),
    ]
}

fn element() -> impl Strategy<Value = Element> {
    prop_oneof![
        value().prop_map(|resistance| Element::Resistor { resistance }),
        value().prop_map(|capacitance| Element::Capacitor { capacitance }),
        value().prop_map(|inductance| Element::Inductor { inductance }),
        waveform().prop_map(|waveform| Element::VoltageSource { waveform }),
        waveform().prop_map(|waveform| Element::CurrentSource { waveform }),
        (value(), 1.0f64..3.0).prop_map(|(is, n)| Element::Diode(DiodeParams { is, n, vt: 0.02585 })),
        (value(), value(), 0.0f64..1.0).prop_map(|(ron, roff, duty)| Element::Switch {
            ron,
            roff,
            control: Pwm {
                duty,
                period: 1e-3,
                rise: 1e-5,
                fall: 2e-5,
                delay: 0.0,
            },
        }),
    ]
}

fn letter(e: &Element) -> char {
    match e {
        Element::Resistor { .. } => 'R',
        Element::Capacitor { .. } => 'C',
        Element::Inductor { .. } => 'L',
        Element::VoltageSource { .. } => 'V',
        Element::CurrentSource { .. } => 'I',
        Element::Diode(_) => 'D',
        Element::Switch { .. } => 'S',
    }
}

fn circuit() -> impl Strategy<Value = Circuit> {
    prop::collection::vec((element(), node(), node()), 1..8).prop_map(|items| {
        let devices = items
            .into_iter()
            .enumerate()
            .map(|(i, (element, a, b))| Device {
                name: format!("{}{}", letter(&element), i + 1),
                terminals: [a, b],
                element,
            })
            .collect();
        Circuit::new("generated", devices, 1e-3)
    })
}

proptest! {
    #[test]
    fn netlist_round_trip(c in circuit()) {
        let text = c.to_netlist();
        let back = parse_netlist(&text).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn suffix_scaling(m in 1u32..1000, s in prop::sample::select(vec![("k", 3), ("meg", 6), ("g", 9), ("t", 12), ("m", -3), ("u", -6), ("n", -9), ("p", -12), ("f", -15)])) {
        let v = parse_value(&format!("{m}{}", s.0)).unwrap();
        let expect: f64 = format!("{m}e{}", s.1).parse().unwrap();
        prop_assert_eq!(v, expect);
    }
}
