use bookstore_harness::paper_reference;

#[test]
fn bundled_values() {
    let r = paper_reference();
    let expect = [
        ("orders", "response_ms", "vm", 780.0),
        ("orders", "response_ms", "container", 625.0),
        ("ui", "response_ms", "vm", 376.0),
        ("ui", "response_ms", "container", 140.0),
        ("books", "response_ms", "vm", 327.0),
        ("books", "response_ms", "container", 417.0),
        ("orders", "idle_cpu_percent_low", "vm", 1.4),
        ("orders", "idle_cpu_percent_high", "vm", 2.1),
        ("orders", "idle_cpu_percent_low", "container", 0.004),
        ("orders", "idle_cpu_percent_high", "container", 0.006),
        ("orders", "load_cpu_peak_percent", "vm", 60.0),
        ("orders", "load_cpu_peak_percent", "container", 20.0),
        ("limits", "cpu_cores", "all", 2.0),
        ("limits", "memory_gb", "all", 2.0),
    ];
    for (s, m, e, v) in expect {
        assert_eq!(r.lookup(s, m, e).unwrap(), v, "{s}/{m}/{e}");
    }
    assert_eq!(r.rows.len(), expect.len());
    assert!(r.lookup("orders", "response_ms", "mainframe").is_err());
}
