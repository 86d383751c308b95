//! Whole-pipeline properties exercised through the public API.

use std::collections::HashMap;

use crate::engine::{init_population, run, step_generation, EngineConfig, EngineState, RunMeta, StrategyKind};
use crate::llm::ExecutionMode;
use crate::metrics::{optimality_gap, population_variance, render_diversity_trace};
use crate::operators::{Crossover, Mutation, OperatorCatalog};
use crate::selection::{
    select_random, MockPairSelector, PairingPlan, PlannedPair, Provenance, SelectionError, SelectionRequest, Selector,
};
use crate::tsp::{generate_clu, generate_rue, ClusterParams, Individual, TspInstance};

fn solved(mut inst: TspInstance) -> TspInstance {
    inst.solve_optimal().unwrap();
    inst
}

fn chi_square(counts: &[usize], expected: f64) -> f64 {
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn first_gene_is_uniform_over_seeds() {
    let inst = generate_rue(10, 1, 100.0).unwrap();
    let mut counts = [0usize; 10];
    for seed in 0..1000 {
        for ind in init_population(&inst, 4, seed) {
            counts[ind.tour()[0]] += 1;
        }
    }
    // 9 degrees of freedom, p = 0.001
    let stat = chi_square(&counts, 400.0);
    assert!(stat < 27.88, "chi-square {stat} for {counts:?}");
}

#[test]
fn random_pairs_are_uniform_over_seeds() {
    let inst = generate_rue(8, 2, 100.0).unwrap();
    let pool = init_population(&inst, 16, 3);
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for seed in 0..10_000 {
        let req = SelectionRequest { pool: &pool, offspring_needed: 16, instance: &inst, seed, temperature: 1.0 };
        for p in select_random(&req, &OperatorCatalog::default()).unwrap().pairs {
            assert_ne!(p.first, p.second);
            *counts.entry((p.first.min(p.second), p.first.max(p.second))).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), 120);
    let observed: Vec<usize> = counts.values().copied().collect();
    // 119 degrees of freedom, p = 0.001
    let stat = chi_square(&observed, 160_000.0 / 120.0);
    assert!(stat < 172.42, "chi-square {stat}");
}

fn scaled(base: &TspInstance, scale: f64) -> TspInstance {
    let coords: Vec<(f64, f64)> = base.nodes().iter().map(|p| (p.x * scale, p.y * scale)).collect();
    solved(TspInstance::from_coords(format!("scaled-{scale}"), &coords).unwrap())
}

#[test]
fn gap_is_scale_invariant() {
    let base = solved(generate_clu(9, ClusterParams::defaults(9, 100.0), 6, 100.0).unwrap());
    let tours = init_population(&base, 200, 8);
    for scale in [0.001, 0.25, 3.0, 1000.0] {
        let inst = scaled(&base, scale);
        let (opt, opt_base) = (inst.optimal_length().unwrap(), base.optimal_length().unwrap());
        assert!((opt - opt_base * scale).abs() <= 1e-12 * opt);
        for t in &tours {
            let here = Individual::new(&inst, t.tour().to_vec()).unwrap();
            let a = optimality_gap(t.length(), opt_base).unwrap();
            let b = optimality_gap(here.length(), opt).unwrap();
            assert!((a - b).abs() < 1e-12, "scale {scale}: {a} vs {b}");
        }
    }
}

#[test]
fn runs_at_exact_scales_have_identical_gaps() {
    // powers of two scale every length exactly, so the search takes the same path
    let base = solved(generate_clu(9, ClusterParams::defaults(9, 100.0), 6, 100.0).unwrap());
    let config =
        EngineConfig { seed: 12, max_generations: 40, early_stop_on_optimal: false, ..EngineConfig::default() };
    let gaps = |inst: &TspInstance| -> Vec<f64> {
        let rec = run(inst, &config, &mut MockPairSelector::default(), RunMeta::default()).unwrap();
        let opt = inst.optimal_length().unwrap();
        rec.generations.iter().map(|g| optimality_gap(g.best_length, opt).unwrap()).collect()
    };
    let reference = gaps(&base);
    for scale in [0.125, 4.0, 1024.0] {
        assert_eq!(gaps(&scaled(&base, scale)), reference, "scale {scale}");
    }
}

#[test]
fn diversity_trace_matches_stored_lengths() {
    let inst = solved(generate_clu(10, ClusterParams::defaults(10, 100.0), 8, 100.0).unwrap());
    let config = EngineConfig { seed: 3, max_generations: 30, early_stop_on_optimal: false, ..EngineConfig::default() };
    let record = run(&inst, &config, &mut MockPairSelector::default(), RunMeta::default()).unwrap();
    let trace = render_diversity_trace(&record);
    let rows: Vec<&str> = trace.lines().skip(1).collect();
    assert_eq!(rows.len(), record.generations.len());
    for (g, row) in record.generations.iter().zip(rows) {
        let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, population_variance(&g.lengths).unwrap());
        assert_eq!(g.best_length, g.lengths.iter().copied().fold(f64::INFINITY, f64::min));
    }
}

/// Returns the given children, one pair per child, in model-executes form.
struct Fixed(Vec<Vec<usize>>);

impl Selector for Fixed {
    fn select(&mut self, req: &SelectionRequest<'_>) -> Result<PairingPlan, SelectionError> {
        let pairs = self
            .0
            .iter()
            .enumerate()
            .map(|(k, child)| PlannedPair {
                first: (2 * k) % req.pool.len(),
                second: (2 * k + 1) % req.pool.len(),
                crossover: Crossover::Ox,
                mutation: Mutation::Swap,
                child: Some(child.clone()),
            })
            .collect();
        Ok(PairingPlan::new(pairs, Provenance::Llm))
    }
}

fn fixed_config(size: usize) -> EngineConfig {
    EngineConfig {
        strategy: StrategyKind::RandomLmea,
        mode: ExecutionMode::LlmExecutes,
        population_size: size,
        early_stop_on_optimal: false,
        ..EngineConfig::default()
    }
}

fn lengths(pop: &[Individual]) -> Vec<f64> {
    pop.iter().map(Individual::length).collect()
}

#[test]
fn optimal_population_is_a_fixed_point() {
    let mut inst = generate_rue(7, 4, 100.0).unwrap();
    let best = inst.solve_optimal().unwrap().tour;
    let pop = vec![Individual::new(&inst, best.clone()).unwrap(); 4];
    let mut worse = best.clone();
    worse.swap(1, 4);
    let config = fixed_config(4);
    let mut state = EngineState::from_population(pop.clone(), &config);
    let out = step_generation(&mut state, &inst, &config, &mut Fixed(vec![worse.clone(), best.clone(), worse, best]))
        .unwrap();
    assert!(!out.improved);
    assert_eq!(state.population, pop);
}

#[test]
fn worse_offspring_leave_parents_unchanged() {
    let inst = generate_rue(8, 9, 100.0).unwrap();
    let mut pop = init_population(&inst, 6, 1);
    pop.sort_by(|a, b| a.length().total_cmp(&b.length()));
    let worst = pop.last().unwrap().length();
    // children longer than every parent
    let mut children = Vec::new();
    let mut candidates = init_population(&inst, 500, 2).into_iter().filter(|c| c.length() > worst);
    while children.len() < 6 {
        children.push(candidates.next().expect("enough long tours").into_tour());
    }
    let config = fixed_config(6);
    let mut state = EngineState::from_population(pop.clone(), &config);
    step_generation(&mut state, &inst, &config, &mut Fixed(children)).unwrap();
    assert_eq!(state.population, pop);
}

#[test]
fn one_better_child_displaces_exactly_the_worst_parent() {
    let inst = generate_rue(8, 10, 100.0).unwrap();
    let pop = init_population(&inst, 6, 5);
    let mut sorted = lengths(&pop);
    sorted.sort_by(f64::total_cmp);
    let (worst, second_worst) = (sorted[5], sorted[4]);
    let pool = init_population(&inst, 2000, 6);
    let better = pool
        .iter()
        .find(|c| c.length() < worst && c.length() > second_worst)
        .or_else(|| pool.iter().find(|c| c.length() < worst))
        .expect("a tour shorter than the worst parent")
        .clone();
    let worse: Vec<Vec<usize>> =
        pool.iter().filter(|c| c.length() > worst).take(5).map(|c| c.tour().to_vec()).collect();
    let mut children = vec![better.tour().to_vec()];
    children.extend(worse);

    // independent top-N of the merged list
    let mut merged: Vec<Individual> = pop.clone();
    merged.push(better.clone());
    merged.extend(children[1..].iter().map(|t| Individual::new(&inst, t.clone()).unwrap()));
    merged.sort_by(|a, b| a.length().total_cmp(&b.length()));
    merged.truncate(6);

    let config = fixed_config(6);
    let mut state = EngineState::from_population(pop.clone(), &config);
    step_generation(&mut state, &inst, &config, &mut Fixed(children)).unwrap();
    assert_eq!(state.population, merged);
    assert!(state.population.contains(&better));
    assert!(!lengths(&state.population).contains(&worst));
}

#[test]
fn three_cities_are_solved_at_the_start() {
    let inst = solved(TspInstance::from_coords("tri", &[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]).unwrap());
    assert_eq!(inst.optimal_length(), Some(12.0));
    let config = EngineConfig { seed: 1, ..EngineConfig::default() };
    let rec = run(&inst, &config, &mut MockPairSelector::default(), RunMeta::default()).unwrap();
    assert_eq!(rec.success_step, Some(0));
    assert_eq!(rec.generations.len(), 1);
}

#[test]
fn mock_solves_a_ten_city_instance() {
    let inst = solved(generate_rue(10, 21, 100.0).unwrap());
    let config = EngineConfig { seed: 4, ..EngineConfig::default() };
    let rec = run(&inst, &config, &mut MockPairSelector::default(), RunMeta::default()).unwrap();
    assert_eq!(optimality_gap(rec.best.length(), inst.optimal_length().unwrap()).unwrap(), 0.0);
}
