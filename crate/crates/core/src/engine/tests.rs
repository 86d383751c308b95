use super::*;
use crate::operators::{Crossover, Mutation};
use crate::selection::{PlannedPair, Provenance};
use crate::tsp::generate_rue;

fn small(n: usize, seed: u64) -> TspInstance {
    let mut inst = generate_rue(n, seed, crate::tsp::DEFAULT_EXTENT).unwrap();
    inst.solve_optimal().unwrap();
    inst
}

fn mock_config(seed: u64) -> EngineConfig {
    EngineConfig { seed, max_generations: 30, ..EngineConfig::default() }
}

#[test]
fn population_is_valid_and_seeded() {
    let inst = small(8, 1);
    let a = init_population(&inst, 16, 5);
    let b = init_population(&inst, 16, 5);
    let c = init_population(&inst, 16, 6);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 16);
    for ind in &a {
        crate::tsp::validate_tour(8, ind.tour()).unwrap();
    }
}

#[test]
fn single_generation_budget_records_only_the_start() {
    let inst = small(8, 2);
    let cfg = EngineConfig { max_generations: 1, early_stop_on_optimal: false, ..mock_config(3) };
    let mut sel = MockPairSelector::default();
    let rec = run(&inst, &cfg, &mut sel, RunMeta::default()).unwrap();
    assert_eq!(rec.generations.len(), 1);
    assert_eq!(rec.generations[0].generation, 0);
    assert!(rec.completed);
}

#[test]
fn best_length_never_increases_and_size_is_kept() {
    let inst = small(9, 4);
    let cfg = EngineConfig { strategy: StrategyKind::RandomLmea, early_stop_on_optimal: false, ..mock_config(8) };
    let mut state = EngineState::new(&inst, &cfg);
    let mut sel = RandomSelector::default();
    let mut last = state.best_length();
    for _ in 0..25 {
        let out = step_generation(&mut state, &inst, &cfg, &mut sel).unwrap();
        assert_eq!(state.population.len(), cfg.population_size);
        assert!(out.record.best_length <= last);
        assert_eq!(out.improved, out.record.best_length < last);
        last = out.record.best_length;
    }
}

#[test]
fn early_stop_at_optimum() {
    let inst = small(6, 11);
    let cfg = EngineConfig { max_generations: 200, ..mock_config(2) };
    let mut sel = MockPairSelector::default();
    let rec = run(&inst, &cfg, &mut sel, RunMeta::default()).unwrap();
    let step = rec.success_step.expect("six cities are solved quickly");
    assert_eq!(rec.generations.len(), step + 1);
    assert!((rec.best.length() - inst.optimal_length().unwrap()).abs() < 1e-9);
}

#[test]
fn early_stop_requires_an_optimum() {
    let inst = generate_rue(8, 1, 100.0).unwrap();
    let mut sel = MockPairSelector::default();
    let err = run(&inst, &mock_config(1), &mut sel, RunMeta::default()).unwrap_err();
    assert!(matches!(err.source, RunFailure::Config(_)));
    assert!(!err.partial.completed);
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let inst = small(10, 3);
    let cfg = EngineConfig { early_stop_on_optimal: false, ..mock_config(9) };
    let meta = RunMeta { run_id: "r".into(), model_label: "mock".into(), prompt_checksum: None };
    let a = run(&inst, &cfg, &mut MockPairSelector::default(), meta.clone()).unwrap();
    let b = run(&inst, &cfg, &mut MockPairSelector::default(), meta).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}

#[test]
fn jsonl_round_trip() {
    let inst = small(8, 5);
    let cfg = EngineConfig {
        strategy: StrategyKind::RandomLmea,
        early_stop_on_optimal: false,
        max_generations: 6,
        ..mock_config(1)
    };
    let rec = run(&inst, &cfg, &mut RandomSelector::default(), RunMeta::default()).unwrap();
    let text = rec.to_jsonl();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().last().unwrap().contains("\"record\":\"summary\""));
    let back = RunRecord::from_jsonl(&text).unwrap();
    assert_eq!(back.to_jsonl(), text);
    assert_eq!(back.generations, rec.generations);
    assert!(matches!(RunRecord::from_jsonl(""), Err(RecordError::MissingSummary)));
}

struct Failing;

impl Selector for Failing {
    fn select(&mut self, _: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        Err(SelectionError::Exhausted { attempts: 3, reason: "no records".into(), last_raw: "hello".into() })
    }
}

#[test]
fn failed_model_falls_back_to_mock() {
    let inst = small(8, 6);
    let cfg = EngineConfig {
        strategy: StrategyKind::PairLlm,
        early_stop_on_optimal: false,
        max_generations: 3,
        ..mock_config(1)
    };
    let rec = run(&inst, &cfg, &mut Failing, RunMeta::default()).unwrap();
    assert_eq!(rec.fallback_events.len(), 2);
    assert_eq!(rec.fallback_events[0].last_raw, "hello");
    assert!(rec.generations[1].fallback);

    let strict = EngineConfig { fallback_to_mock: false, ..cfg };
    let err = run(&inst, &strict, &mut Failing, RunMeta::default()).unwrap_err();
    assert_eq!(err.partial.generations.len(), 1);
    assert!(err.partial.error.is_some());
}

struct Reusing;

impl Selector for Reusing {
    fn select(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        let pairs = (0..req.offspring_needed).map(|_| PlannedPair::new(0, 1, Crossover::Ox, Mutation::Swap)).collect();
        Ok(PairingPlan::new(pairs, Provenance::Llm))
    }
}

#[test]
fn pair_strategies_reject_reused_parents() {
    let inst = small(8, 7);
    let cfg = EngineConfig { strategy: StrategyKind::PairLlm, early_stop_on_optimal: false, ..mock_config(1) };
    let mut state = EngineState::new(&inst, &cfg);
    assert!(matches!(step_generation(&mut state, &inst, &cfg, &mut Reusing), Err(StepError::Plan(_))));
    let random = EngineConfig { strategy: StrategyKind::RandomLmea, ..cfg };
    assert!(step_generation(&mut state, &inst, &random, &mut Reusing).is_ok());
}

#[test]
fn config_validation() {
    assert!(EngineConfig::default().validate().is_ok());
    assert!(EngineConfig { population_size: 1, ..Default::default() }.validate().is_err());
    assert!(EngineConfig { population_size: 2, ..Default::default() }.validate().is_err());
    assert!(EngineConfig { population_size: 2, strategy: StrategyKind::RandomLmea, ..Default::default() }
        .validate()
        .is_ok());
    assert!(EngineConfig { max_generations: 0, ..Default::default() }.validate().is_err());
    assert_eq!("random_lmea".parse::<StrategyKind>(), Ok(StrategyKind::RandomLmea));
    assert!("pair".parse::<StrategyKind>().is_err());
}

#[test]
fn temperature_is_recorded_before_advancing() {
    let inst = small(8, 9);
    let cfg = EngineConfig { early_stop_on_optimal: false, max_generations: 60, ..mock_config(4) };
    let rec = run(&inst, &cfg, &mut MockPairSelector::default(), RunMeta::default()).unwrap();
    for w in rec.generations.windows(2) {
        let expected = (1.0 + 0.05 * (w[0].stagnation / 20) as f64).min(2.0);
        assert!((w[1].temperature - expected).abs() < 1e-12);
    }
}
