use qsdn_web::{deliver, scenario, Knobs};

fn knobs() -> Knobs {
    Knobs { scheme: 1, depolarizing: 0.0, loss: 0.0, fec: false, seed: 1 }
}

#[test]
fn clean_delivery_reports_every_symbol() {
    let d = deliver("hi", knobs()).unwrap();
    assert_eq!(d.delivered.as_deref(), Some("hi"));
    assert_eq!(d.symbols.len(), 8);
    assert_eq!(d.symbol_errors, 0);
    assert!(d.report.contains("status=delivered"));
    assert!(!d.trace.is_empty() && d.event_count > 0);
    // 'h' = 0x68 = 01 10 10 00
    let ops: Vec<&str> = d.symbols[..4].iter().map(|s| s.op.as_str()).collect();
    assert_eq!(ops, ["X", "Z", "Z", "I"]);
}

#[test]
fn noise_shows_up_as_symbol_errors_and_fec_helps() {
    let noisy = Knobs { depolarizing: 0.15, seed: 4, ..knobs() };
    let text = "the quick brown fox jumps over the lazy dog";
    let plain = deliver(text, noisy).unwrap();
    let coded = deliver(text, Knobs { fec: true, ..noisy }).unwrap();
    assert!(plain.symbol_errors > 0);
    assert!(coded.symbol_errors < plain.symbol_errors);
}

#[test]
fn bad_knobs_are_errors() {
    assert!(deliver("x", Knobs { depolarizing: 1.5, ..knobs() }).is_err());
    assert!(deliver("x", Knobs { scheme: 7, ..knobs() }).is_err());
}

#[test]
fn scenarios_run_and_errors_surface() {
    let run = scenario(&qsdn_web::bundled_topology(), &qsdn_web::bundled_scenario(), None).unwrap();
    assert!(run.passed, "{}", run.report);
    let e = scenario("nodes = 3", &qsdn_web::bundled_scenario(), None).unwrap_err();
    assert!(e.starts_with("topology:"), "{e}");
    let json = qsdn_web::run_scenario("not toml [", "", -1.0);
    assert!(json.starts_with("{\"error\""), "{json}");
}
