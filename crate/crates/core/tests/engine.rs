mod common;

use common::{oracle_schedule, random_instance, random_shifts, GenParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagger::engine::{meets_time_windows, repropagate};
use stagger::{construct_schedule, find_conflicts, total_delay, validate_schedule, StaggerVector};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn construction_matches_pairwise_oracle(seed in 0u64..1_000_000, draw in 0u64..1000) {
        let inst = random_instance(seed, &GenParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let v = random_shifts(&inst, &mut rng);
        let s = construct_schedule(&inst, &v).unwrap();
        let o = oracle_schedule(&inst, v.as_slice());
        prop_assert_eq!(&s.entry, &o.entry);
        prop_assert_eq!(&s.flow, &o.flow);
        prop_assert_eq!(&s.delay, &o.delay);
    }

    #[test]
    fn repropagate_equals_full_construction(seed in 0u64..1_000_000, draw in 0u64..1000) {
        let inst = random_instance(seed, &GenParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let base = construct_schedule(&inst, &random_shifts(&inst, &mut rng)).unwrap();
        let target = random_shifts(&inst, &mut rng);
        let changed: Vec<_> = target.as_slice().iter().copied().enumerate().filter(|&(r, s)| r % 2 == 0 && s != base.start_shift[r]).collect();
        let mut full = base.start_shift.clone();
        for &(r, s) in &changed {
            full[r] = s;
        }
        let inc = repropagate(&inst, &base, &changed).unwrap();
        let fresh = construct_schedule(&inst, &StaggerVector::from_vec_unchecked(full)).unwrap();
        prop_assert_eq!(inc, fresh);
    }

    #[test]
    fn schedules_within_budget_are_consistent(seed in 0u64..1_000_000, draw in 0u64..1000) {
        let inst = random_instance(seed, &GenParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let s = construct_schedule(&inst, &random_shifts(&inst, &mut rng)).unwrap();
        prop_assert_eq!(s.total_delay, total_delay(&s));
        let report = validate_schedule(&inst, &s);
        // only the deadline may fail for a random vector
        prop_assert_eq!(report.is_feasible(), meets_time_windows(&inst, &s));
        for c in find_conflicts(&inst, &s) {
            prop_assert!(c.delay > 0.0);
            prop_assert!(s.delay[c.later][inst.position(c.later, c.arc).unwrap()] > 0.0);
        }
    }
}

#[test]
fn uncontrolled_schedule_is_feasible() {
    for seed in 0..200 {
        let inst = random_instance(seed, &GenParams::default());
        let s = construct_schedule(&inst, &StaggerVector::zeros(inst.num_trips())).unwrap();
        assert!(validate_schedule(&inst, &s).is_feasible(), "seed {seed}");
    }
}

#[test]
fn over_budget_vector_rejected() {
    let inst = random_instance(5, &GenParams::default());
    let mut v = vec![0.0; inst.num_trips()];
    v[0] = inst.trip(0).max_stagger + 1.0;
    assert!(StaggerVector::new(&inst, v).is_err());
}
