use llmopt_cli::config::ProblemConfig;
use llmopt_cli::{parse_config, CliError, FileConfig};
use llmopt_core::selection::SelectorMode;

#[test]
fn override_parses_numbers_and_strings() {
    let c = parse_config(
        "",
        &[
            "engine.p_exp=0.25".into(),
            "engine.selector=pareto_only".into(),
            "problem.kind = \"synthetic\"".into(),
        ],
    )
    .unwrap();
    assert_eq!(c.config.engine.p_exp, 0.25);
    assert_eq!(c.config.engine.selector, SelectorMode::ParetoOnly);
    assert!(matches!(c.config.problem, ProblemConfig::Synthetic(_)));
}

#[test]
fn empty_file_is_a_valid_default() {
    let c = parse_config("", &[]).unwrap();
    assert_eq!(c.config, FileConfig::default());
}

#[test]
fn overrides_are_recorded_ahead_of_the_snapshot() {
    let c = parse_config("[engine]\nbudget = 50\n", &["engine.seed=3".into()]).unwrap();
    let snap = c.snapshot();
    assert!(snap.starts_with("# override: engine.seed=3\n"), "{snap}");
    let again = parse_config(&snap, &[]).unwrap();
    assert_eq!(again.config, c.config);
}

#[test]
fn malformed_override_is_a_validation_error() {
    for bad in ["engine.p_exp", "=3", "engine..seed=1"] {
        let err = parse_config("", &[bad.into()]).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)), "{bad}: {err}");
    }
}

#[test]
fn out_of_range_fields_name_the_field() {
    for (ov, field) in [
        ("engine.p_exp=1.5", "p_exp"),
        ("engine.k_offspring=0", "k_offspring"),
        ("engine.population_size=0", "population_size"),
        ("backend.malformed_rate=2.0", "malformed_rate"),
    ] {
        let err = parse_config("", &[ov.into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains(field), "{ov}: {err}");
    }
}
