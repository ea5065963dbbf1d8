mod common;

use common::{feasible_samples, highs_adapter, random_instance, GenParams};
use proptest::prelude::*;
use stagger::engine::meets_time_windows;
use stagger::matheuristic::{
    analyze_conflict, local_search_with, resolve_conflict, LocalSearchConfig, MatheuristicConfig, Phase, RunStatus,
};
use stagger::{construct_schedule, find_conflicts, run_matheuristic, validate_schedule, Schedule, StaggerVector};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn accepted_moves_improve_and_stay_exact(seed in 0u64..1_000_000, incremental: bool) {
        let inst = random_instance(seed, &GenParams::default());
        let cfg = LocalSearchConfig { incremental_queue: incremental, ..LocalSearchConfig::default() };
        for start in feasible_samples(&inst, seed, 5) {
            let mut seen: Vec<Schedule> = Vec::new();
            let mut obs = |s: &Schedule| seen.push(s.clone());
            let (out, stats) = local_search_with(&inst, start.clone(), &cfg, Some(&mut obs));
            prop_assert_eq!(seen.len(), stats.accepted);
            let mut prev = start.total_delay;
            for s in &seen {
                prop_assert!(s.total_delay < prev);
                prev = s.total_delay;
                prop_assert!(validate_schedule(&inst, s).is_feasible());
                let fresh = construct_schedule(&inst, &StaggerVector::from_vec_unchecked(s.start_shift.clone())).unwrap();
                prop_assert_eq!(s, &fresh);
            }
            prop_assert!(out.total_delay <= start.total_delay);
        }
    }

    #[test]
    fn resolved_schedules_equal_reconstruction(seed in 0u64..1_000_000) {
        let inst = random_instance(seed, &GenParams::default());
        for s in feasible_samples(&inst, seed, 5) {
            for c in find_conflicts(&inst, &s) {
                let item = analyze_conflict(&inst, &s, &c);
                if !item.resolvable() {
                    prop_assert!(resolve_conflict(&inst, &s, &item).is_err());
                    continue;
                }
                let r = resolve_conflict(&inst, &s, &item).unwrap();
                let fresh = construct_schedule(&inst, &StaggerVector::from_vec_unchecked(r.start_shift.clone())).unwrap();
                prop_assert_eq!(&r, &fresh);
                for t in 0..inst.num_trips() {
                    prop_assert!(r.start_shift[t] >= 0.0 && r.start_shift[t] <= inst.trip(t).max_stagger);
                }
            }
        }
    }
}

#[test]
fn heuristic_run_is_feasible_and_bounded() {
    for seed in 0..100 {
        let inst = random_instance(seed, &GenParams::default());
        let res = run_matheuristic(&inst, &MatheuristicConfig::default(), None).unwrap();
        assert!(validate_schedule(&inst, &res.schedule).is_feasible(), "seed {seed}");
        assert!(meets_time_windows(&inst, &res.schedule));
        assert!(res.upper_bound <= res.uncontrolled, "seed {seed}");
        assert!(res.lower_bound <= res.upper_bound + 1e-9, "seed {seed}");
        assert_eq!(res.shifts, res.schedule.start_shift);
        assert!(matches!(res.status, RunStatus::Optimal | RunStatus::Heuristic));
    }
}

#[test]
fn solver_run_log_is_monotone() {
    let Some(adapter) = highs_adapter() else {
        eprintln!("solver bindings missing, skipped");
        return;
    };
    let cfg = MatheuristicConfig {
        time_limit: 20.0,
        milp_slice: 10.0,
        ..MatheuristicConfig::default()
    };
    let mut milp_runs = 0;
    for seed in 0..15 {
        let inst = random_instance(seed, &GenParams { max_trips: 6, ..GenParams::default() });
        let res = run_matheuristic(&inst, &cfg, Some(&adapter)).unwrap();
        assert!(validate_schedule(&inst, &res.schedule).is_feasible(), "seed {seed}");
        assert!(res.lower_bound <= res.upper_bound + 1e-9);
        assert!(res.upper_bound >= res.initial_lb - 1e-9);
        for w in res.log.windows(2) {
            assert!(w[1].ub <= w[0].ub, "seed {seed}");
            assert!(w[1].lb >= w[0].lb, "seed {seed}");
        }
        milp_runs += res.log.iter().any(|r| r.phase == Phase::Milp) as usize;
    }
    eprintln!("{milp_runs} run(s) reached the solver");
    assert!(milp_runs > 0);
}
