//! Runs every checked-in fuzz seed through its parser. Seeds whose name
//! starts with `bad`, `missing`, `conflict`, `ambiguous`, `inconsistent` or
//! `short` must be rejected somewhere along the path; the rest must load.

use std::path::PathBuf;

use stagdid::costbenefit::{cost_benefit, AttProfile, CbConstants, PriceIndex};
use stagdid::io::{
    parse_constants, parse_dgp, parse_selection_rules, read_cb_inputs, read_mca_csv,
    read_panel_csv,
};
use stagdid::panel::validate_panel;
use stagdid::synth::generate_panel;

const REJECT: [&str; 6] = ["bad", "missing", "conflict", "ambiguous", "inconsistent", "short"];

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check(target: &str, accept: impl Fn(&[u8]) -> bool) {
    for (name, bytes) in seeds(target) {
        let expect_ok = !REJECT.iter().any(|p| name.starts_with(p));
        assert_eq!(accept(&bytes), expect_ok, "{target}/{name}");
    }
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn panel_csv_seeds() {
    check("panel_csv", |b| {
        read_panel_csv(b)
            .ok()
            .is_some_and(|r| validate_panel(&r).is_ok())
    });
}

#[test]
fn mca_csv_seeds() {
    check("mca_csv", |b| read_mca_csv(b).is_ok());
}

#[test]
fn cb_inputs_csv_seeds() {
    let prices = PriceIndex((2015..=2022).map(|y| (y, 100.0)).collect());
    let c = CbConstants::with_defaults(5.0, prices);
    let att = AttProfile::Uniform {
        emissions: -0.04,
        jobs: 0.03,
    };
    check("cb_inputs_csv", |b| {
        read_cb_inputs(b)
            .ok()
            .is_some_and(|i| cost_benefit(&i, &att, &c).is_ok())
    });
}

#[test]
fn constants_toml_seeds() {
    // the bundled profile leaves the two required constants out on purpose
    for (name, bytes) in seeds("constants_toml") {
        let parsed = parse_constants(text(&bytes)).map(|c| c.validate());
        match name.as_str() {
            "complete.toml" => assert_eq!(parsed, Ok(Ok(()))),
            _ => assert!(parsed.is_err(), "{name}"),
        }
    }
}

#[test]
fn dgp_toml_seeds() {
    check("dgp_toml", |b| {
        parse_dgp(text(b))
            .ok()
            .is_some_and(|s| s.validate().is_ok() && generate_panel(&s).is_ok())
    });
}

#[test]
fn selection_toml_seeds() {
    check("selection_toml", |b| parse_selection_rules(text(b)).is_ok());
}
