mod common;

use tscond::config::parse_config_str;
use tscond::eval::comparison_table;

#[test]
#[ignore = "slow; prints the protocol table on the surrogate"]
fn surrogate_protocol() {
    let overrides: Vec<String> = std::env::var("TSCOND_OVERRIDES")
        .map(|v| v.split_whitespace().map(String::from).collect())
        .unwrap_or_default();
    let cfg = parse_config_str(None, &overrides).unwrap();
    let ts = common::load_etth2().unwrap_or_else(|| common::ett_like(17420, 2));
    let p = common::run_protocol(&ts, &cfg);
    eprintln!("{}", comparison_table(&[p.random, p.mtt, p.condtsf, p.full]));
    eprintln!(
        "label error final: mtt {:.4} condtsf {:.4}",
        p.mtt_log.last().unwrap().label_error,
        p.condtsf_log.last().unwrap().label_error
    );
    let pe: Vec<String> = p
        .mtt_log
        .records
        .iter()
        .filter_map(|r| r.param_error)
        .step_by(20)
        .map(|v| format!("{v:.3}"))
        .collect();
    eprintln!("mtt param error trace: {}", pe.join(" "));
}
