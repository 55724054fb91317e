use csform_wasm::{default_gains, scenario_names, weight_curves, Demo};

#[test]
fn lists_every_scenario() {
    let names = scenario_names();
    assert_eq!(names.lines().count(), 5);
    assert!(names.lines().any(|n| n == "bird"));
    for name in names.lines() {
        let g = default_gains(name).unwrap();
        Demo::new(name, g[0], g[1], g[2], g[3]).unwrap();
    }
    assert_eq!(default_gains("degenerate-square").unwrap(), vec![60.0, 50.0, 1.1, 0.5]);
}

#[test]
fn bird_advances_and_dissipates() {
    let mut demo = Demo::new("bird", 1.0, 50.0, 1.1, 0.5).unwrap();
    assert_eq!((demo.n(), demo.dim()), (10, 2));
    let e0 = demo.energy();
    for _ in 0..5 {
        demo.advance(0.2).unwrap();
    }
    assert!((demo.time() - 1.0).abs() < 1e-12);
    assert!(demo.energy() < e0);
    assert!(demo.steps() > 0);
    assert_eq!(demo.status(), "running");
    assert_eq!(demo.positions().len(), 20);
    assert_eq!(demo.targets().len(), 20);
}

#[test]
fn weak_singularity_stops_on_collision() {
    let mut demo = Demo::new("line-crossover", 10.0, 50.0, 0.5, 0.5).unwrap();
    for _ in 0..20 {
        demo.advance(0.1).unwrap();
    }
    assert_eq!(demo.status(), "collision");
    let t = demo.time();
    demo.advance(0.1).unwrap();
    assert_eq!(demo.time(), t);
}

#[test]
fn certificate_reflects_gains() {
    let demo = Demo::new("degenerate-square", 60.0, 50.0, 1.1, 0.5).unwrap();
    let text = demo.certificate().unwrap();
    assert!(text.contains("d_M"));
    let capped = Demo::new("bird", 1.0, 50.0, 1.1, 2.0).unwrap();
    assert!(capped.certificate().unwrap().contains("capacity condition"));
}

#[test]
fn bad_input_is_reported() {
    assert!(Demo::new("comet", 1.0, 1.0, 1.0, 0.5).is_err());
    assert!(Demo::new("bird", 1.0, 1.0, -1.0, 0.5).is_err());
    assert!(weight_curves(1.0, 0.5, 0.0, 10).is_err());
}

#[test]
fn curves_have_expected_shape() {
    let rows = weight_curves(1.5, 0.5, 2.0, 8).unwrap();
    assert_eq!(rows.len(), 40);
    for row in rows.chunks(5) {
        let [r, psi, smooth, phi, big_phi] = row.try_into().unwrap();
        assert!((psi - r.powf(-1.5)).abs() < 1e-12);
        assert!(smooth < 1.0 && smooth > 0.0);
        assert!((phi - (1.0 + r * r).powf(-0.5)).abs() < 1e-12);
        assert!(big_phi > 0.0);
    }
    assert_eq!(rows[35], 2.0);
}
