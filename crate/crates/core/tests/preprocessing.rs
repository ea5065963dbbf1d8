mod common;

use common::{feasible_samples, random_instance, random_shifts, GenParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use proptest::prelude::*;
use stagger::preprocessing::{overlapping_pairs, preprocess, Preprocessed};
use stagger::{construct_schedule, ArcKind, Instance, Schedule};

const TOL: f64 = 1e-6;

fn check_windows(inst: &Instance, pre: &Preprocessed, s: &Schedule) -> Result<(), TestCaseError> {
    let tw = &pre.windows;
    for r in 0..inst.num_trips() {
        for p in 0..inst.trip(r).route.len() {
            let x = s.entry[r][p];
            let y = s.exit(inst, r, p);
            prop_assert!(x >= tw.earliest_entry(r, p) - TOL, "entry {x} below {}", tw.earliest_entry(r, p));
            prop_assert!(x <= tw.latest_entry(r, p) + TOL, "entry {x} above {}", tw.latest_entry(r, p));
            prop_assert!(y >= tw.earliest_exit(r, p) - TOL);
            prop_assert!(y <= tw.latest_exit(r, p) + TOL, "exit {y} above {}", tw.latest_exit(r, p));
            prop_assert!(s.flow[r][p] >= tw.min_flow[r][p]);
            prop_assert!(s.flow[r][p] <= tw.max_flow[r][p]);
            prop_assert!(s.delay[r][p] >= tw.min_delay[r][p] - TOL);
        }
    }
    prop_assert!(pre.windows.initial_lb <= s.total_delay + TOL);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn windows_contain_feasible_schedules(seed in 0u64..1_000_000, passes in 0usize..3) {
        let inst = random_instance(seed, &GenParams::default());
        let pre = preprocess(&inst, passes).unwrap();
        for s in feasible_samples(&inst, seed, 100) {
            check_windows(&inst, &pre, &s)?;
        }
    }

    #[test]
    fn every_realized_overlap_is_a_listed_pair(seed in 0u64..1_000_000) {
        let inst = random_instance(seed, &GenParams::default());
        let pre = preprocess(&inst, 1).unwrap();
        let red = &pre.reduced;
        for s in feasible_samples(&inst, seed, 100) {
            for a in 0..inst.num_arcs() {
                let pairs = overlapping_pairs(&inst, &pre.windows, a);
                let on = inst.trips_on_arc(a);
                for &r in on {
                    let pr = inst.position(r, a).unwrap();
                    let x = s.entry[r][pr];
                    for &o in on {
                        let po = inst.position(o, a).unwrap();
                        if o != r && s.entry[o][po] <= x && x < s.exit(&inst, o, po) {
                            prop_assert!(pairs.contains(&(r, o)), "pair ({r},{o}) on arc {a} missing");
                        }
                    }
                    if s.delay[r][pr] > 0.0 {
                        // a delayed traversal must sit on a conflicting copy
                        let rr = red.reduced_trip[r].expect("delayed trip kept");
                        let hit = red.instance.trip(rr).route.iter().any(|&b| {
                            matches!(red.instance.arc(b).kind, ArcKind::Conflicting { parent } if parent == a)
                        });
                        prop_assert!(hit, "delayed traversal of trip {r} on arc {a} not conflicting");
                    }
                }
            }
        }
    }

    #[test]
    fn reduced_instance_preserves_delay_of_any_vector(seed in 0u64..1_000_000) {
        let inst = random_instance(seed, &GenParams::default());
        let pre = preprocess(&inst, 1).unwrap();
        let red = &pre.reduced;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // deadlines are irrelevant here: late vectors must match as well
        for v0 in (0..100).map(|_| random_shifts(&inst, &mut rng)) {
            let s = construct_schedule(&inst, &v0).unwrap();
            let v = red.reduce_shifts(&v0);
            let rs = construct_schedule(&red.instance, &v).unwrap();
            prop_assert!((rs.total_delay - s.total_delay).abs() <= 1e-9,
                "reduced {} vs original {}", rs.total_delay, s.total_delay);
            for (rr, &r) in red.source_trip.iter().enumerate() {
                for (p, &(lo, hi)) in red.spans[rr].iter().enumerate() {
                    prop_assert!((rs.entry[rr][p] - s.entry[r][lo]).abs() <= 1e-9);
                    let d: f64 = s.delay[r][lo..=hi].iter().sum();
                    prop_assert!((rs.delay[rr][p] - d).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn fixpoint_is_at_least_as_tight_as_one_pass() {
    for seed in 0..100 {
        let inst = random_instance(seed, &GenParams::default());
        let one = preprocess(&inst, 1).unwrap();
        let fix = preprocess(&inst, 0).unwrap();
        assert!(fix.windows.initial_lb >= one.windows.initial_lb - 1e-9, "seed {seed}");
        assert!(fix.windows.passes >= 1);
    }
}

#[test]
fn dropped_trips_have_no_conflicting_arc() {
    for seed in 0..100 {
        let inst = random_instance(seed, &GenParams::default());
        let pre = preprocess(&inst, 1).unwrap();
        for set in &pre.sets {
            for &r in &set.trips {
                assert!(pre.reduced.reduced_trip[r].is_some(), "seed {seed}");
            }
        }
        let kept = pre.reduced.reduced_trip.iter().flatten().count();
        assert_eq!(kept + pre.reduced.num_removed(), inst.num_trips());
    }
}
