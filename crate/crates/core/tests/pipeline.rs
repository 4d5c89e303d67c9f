use ginnlp::data::{generate, split, SamplingSpec};
use ginnlp::trainer::select_best;
use ginnlp::{
    classify_lp, equals_exact, fit, parse_equation, Dataset, EquationCandidate, TrainConfig,
};
use proptest::prelude::*;

#[test]
fn csv_round_trip_then_recover() {
    let gt = parse_equation("x1*x2^-1", 2).unwrap();
    let data = generate(&gt, &SamplingSpec::uniform(2, 3000, 21)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ratio.csv");
    data.save_csv(&path).unwrap();
    let loaded = Dataset::load_csv(&path, "y").unwrap();
    assert_eq!(loaded.len(), data.len());
    assert_eq!(loaded.targets(), data.targets());

    let (train, _) = split(&loaded, 0.75, 1).unwrap();
    let report = fit(&train, &TrainConfig::default()).unwrap();
    assert!(
        equals_exact(&report.best.equation, &gt, 1e-3),
        "{}",
        report.best.equation
    );
    assert!(report.lp_verdict.is_lp);
    assert!(report.error.is_none());
}

#[test]
fn candidates_respect_trainer_invariants() {
    let gt = parse_equation("x1^2 + 2*x2", 2).unwrap();
    let data = generate(&gt, &SamplingSpec::uniform(2, 1500, 5)).unwrap();
    let config = TrainConfig {
        epochs_per_stage: 120,
        ..TrainConfig::default()
    };
    let report = fit(&data, &config).unwrap();
    for c in &report.all_candidates {
        assert!(c.growth_trace.len() <= config.max_blocks);
        assert!(c.blocks_used >= 1 && c.blocks_used <= c.growth_trace.len());
        assert!(c.symbolic_error >= c.mse);
        assert_eq!(c.symbolic_error == c.mse, c.complexity.total == 0);
        let t = &c.growth_trace;
        if t.len() >= 2 && t.len() < config.max_blocks {
            assert!(t[t.len() - 1] > t[t.len() - 2] * config.early_stop_ratio);
        }
    }
    let again = fit(&data, &config).unwrap();
    assert_eq!(again.best.equation, report.best.equation);
    assert_eq!(classify_lp(&report.best.equation, 1e-3), report.lp_verdict);
}

fn pool() -> Vec<&'static str> {
    vec![
        "x1",
        "x1*x2",
        "3*x1 + 2*x2",
        "x1^2*x2^-1",
        "0.5*x1^2*x2 - x2",
        "x1 + x2 + 1",
    ]
}

proptest! {
    #[test]
    fn alpha_scaling_keeps_lower_complexity(
        a in 0usize..6, b in 0usize..6, mse in 0.0..10.0f64, alpha in 1e-9..1.0f64, scale in 1e-3..1e3f64,
    ) {
        let eqs = pool();
        let pick = |alpha: f64| {
            let ca = EquationCandidate::new(parse_equation(eqs[a], 2).unwrap(), mse, alpha, 0, 1);
            let cb = EquationCandidate::new(parse_equation(eqs[b], 2).unwrap(), mse, alpha, 1, 1);
            let winner = select_best(&[ca.clone(), cb.clone()]).unwrap();
            (winner, ca.complexity.total, cb.complexity.total)
        };
        let (w1, ka, kb) = pick(alpha);
        let (w2, _, _) = pick(alpha * scale);
        prop_assert_eq!(w1, w2);
        prop_assert_eq!(w1, if ka <= kb { 0 } else { 1 });
    }

    #[test]
    fn zero_alpha_is_mse_argmin(a in 0usize..6, b in 0usize..6, ma in 0.0..10.0f64, mb in 0.0..10.0f64) {
        prop_assume!(ma != mb);
        let eqs = pool();
        let ca = EquationCandidate::new(parse_equation(eqs[a], 2).unwrap(), ma, 0.0, 0, 1);
        let cb = EquationCandidate::new(parse_equation(eqs[b], 2).unwrap(), mb, 0.0, 1, 1);
        prop_assert_eq!(select_best(&[ca, cb]).unwrap(), if ma < mb { 0 } else { 1 });
    }
}
