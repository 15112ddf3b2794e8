//! Cheapest insertion against exhaustive enumeration of every position pair.

mod common;

use common::{enumerate, random_case, Case};
use crowdship::mdp::{evaluate_route, CostConfig, TIME_EPS};
use crowdship::policies::insertion::{delta_cheapest, materialize, reconstruct, remove_request};
use crowdship::policies::{best_insertion, DeltaResult, Planner, Positions};
use crowdship::{AverageSpeed, TravelTimeModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns whether a feasible placement existed.
fn check_against_oracle(case: &Case, planner: &Planner<'_>, oracle: &[common::Candidate]) -> bool {
    let base = planner.evaluate(&case.ctx, &case.route);
    let got = best_insertion(
        planner,
        &case.ctx,
        &case.route,
        &base,
        case.pickup,
        case.delivery,
        Positions::ALL,
    );
    let Some(min) = oracle.iter().map(|c| c.cost).reduce(f64::min) else {
        assert!(got.is_none(), "found a placement where none is feasible");
        return false;
    };
    let got = got.expect("a feasible placement exists");
    let tied: Vec<&common::Candidate> = oracle.iter().filter(|c| c.cost <= min + 1e-9).collect();
    let hit = tied
        .iter()
        .find(|c| c.i == got.pickup_at && c.j == got.delivery_at)
        .unwrap_or_else(|| {
            panic!(
                "chose ({}, {}), cheapest is ({}, {})",
                got.pickup_at, got.delivery_at, tied[0].i, tied[0].j
            )
        });
    assert_eq!(got.eval, hit.eval);
    let (delta, _) = delta_cheapest(planner, &case.ctx, &case.route, &base, case.pickup, case.delivery);
    assert_eq!(delta, DeltaResult::between(&base, &hit.eval));
    true
}

#[test]
fn cheapest_insertion_matches_enumeration_on_1000_routes() {
    let tt = TravelTimeModel::default_model();
    let config = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut placed = 0;
    for _ in 0..1000 {
        let case = random_case(&mut rng, tt.geography(), 6);
        let planner = Planner::new(&tt, config);
        placed += check_against_oracle(&case, &planner, &enumerate(&case, &tt, &tt, config.eta, &config)) as usize;
    }
    assert!(placed > 500, "only {placed} cases had a feasible placement");
}

#[test]
fn split_planners_match_enumeration() {
    let tt = TravelTimeModel::default_model();
    let config = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..600 {
        let case = random_case(&mut rng, tt.geography(), 6);
        if k % 2 == 0 {
            let planner = Planner::new(&tt, config).without_planned_waits();
            check_against_oracle(&case, &planner, &enumerate(&case, &tt, &tt, 0.0, &config));
        } else {
            let planner = Planner::new(&tt, config).with_plan_model(&AverageSpeed);
            check_against_oracle(
                &case,
                &planner,
                &enumerate(&case, &AverageSpeed, &tt, config.eta, &config),
            );
        }
    }
}

#[test]
fn empty_route_insertion_is_the_direct_trip() {
    let tt = TravelTimeModel::default_model();
    let config = CostConfig {
        eta: 0.0,
        ..CostConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let mut case = random_case(&mut rng, tt.geography(), 0);
        case.pickup.ready = f64::NEG_INFINITY;
        case.ctx.engaged = false;
        let planner = Planner::new(&tt, config);
        let base = planner.evaluate(&case.ctx, &case.route);
        let (delta, ins) = delta_cheapest(&planner, &case.ctx, &case.route, &base, case.pickup, case.delivery);
        let Some(ins) = ins else { continue };
        assert_eq!((ins.pickup_at, ins.delivery_at), (0, 0));
        let t0 = case.ctx.changed_epoch;
        let leg1 = tt.travel_time(&case.ctx.from, &case.pickup.loc, t0);
        let t1 = (t0 + leg1).ceil();
        let leg2 = tt.travel_time(&case.pickup.loc, &case.delivery.loc, t1);
        let t2 = (t1 + leg2).ceil();
        let home = tt.travel_time(&case.delivery.loc, &case.ctx.home, t2);
        assert!((delta.travel - (leg1 + leg2 + home)).abs() < 1e-9);
    }
}

#[test]
fn insert_then_remove_restores_the_route() {
    let tt = TravelTimeModel::default_model();
    let config = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let case = random_case(&mut rng, tt.geography(), 6);
        let planner = Planner::new(&tt, config);
        let base = planner.evaluate(&case.ctx, &case.route);
        let Some(ins) = best_insertion(
            &planner,
            &case.ctx,
            &case.route,
            &base,
            case.pickup,
            case.delivery,
            Positions::ALL,
        ) else {
            continue;
        };
        let mut grown = materialize(&case.route, case.pickup, case.delivery, ins.pickup_at, ins.delivery_at);
        assert_eq!(grown.len(), case.route.len() + 2);
        let pos_p = grown.iter().position(|s| *s == case.pickup).unwrap();
        let pos_d = grown.iter().position(|s| *s == case.delivery).unwrap();
        assert!(pos_p < pos_d);
        remove_request(&mut grown, case.pickup.request());
        assert_eq!(grown, case.route);
    }
}

#[test]
fn reconstruction_of_a_route_holding_only_the_request_is_cheapest_insertion() {
    let tt = TravelTimeModel::default_model();
    let config = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let case = random_case(&mut rng, tt.geography(), 0);
        let planner = Planner::new(&tt, config);
        let base = planner.evaluate(&case.ctx, &case.route);
        let direct = best_insertion(
            &planner,
            &case.ctx,
            &case.route,
            &base,
            case.pickup,
            case.delivery,
            Positions::ALL,
        );
        let rebuilt = reconstruct(&planner, &case.ctx, &case.route, case.pickup, case.delivery);
        match (direct, rebuilt) {
            (Some(ins), Some((route, eval))) => {
                assert_eq!(
                    route,
                    materialize(&case.route, case.pickup, case.delivery, ins.pickup_at, ins.delivery_at)
                );
                assert_eq!(eval, ins.eval);
            }
            (None, None) => {}
            other => panic!("reconstruction and insertion disagree: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn restricted_positions_never_beat_exhaustive(seed in any::<u64>()) {
        let tt = TravelTimeModel::default_model();
        let config = CostConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, tt.geography(), 8);
        let planner = Planner::new(&tt, config);
        let base = planner.evaluate(&case.ctx, &case.route);
        let all = best_insertion(&planner, &case.ctx, &case.route, &base, case.pickup, case.delivery, Positions::ALL);
        let restricted = best_insertion(&planner, &case.ctx, &case.route, &base, case.pickup, case.delivery, Positions::RESTRICTED);
        if let Some(r) = restricted {
            prop_assert!(r.pickup_at < 3 && r.delivery_at < r.pickup_at + 3);
            let all = all.expect("a restricted placement is also a placement");
            prop_assert!(planner.cost(&r.eval) >= planner.cost(&all.eval) - 1e-9);
        }
    }

    #[test]
    fn inserted_routes_respect_the_availability_end(seed in any::<u64>()) {
        let tt = TravelTimeModel::default_model();
        let config = CostConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, tt.geography(), 6);
        let planner = Planner::new(&tt, config).without_planned_waits();
        let base = planner.evaluate(&case.ctx, &case.route);
        if let Some(ins) = best_insertion(&planner, &case.ctx, &case.route, &base, case.pickup, case.delivery, Positions::ALL) {
            let cand = materialize(&case.route, case.pickup, case.delivery, ins.pickup_at, ins.delivery_at);
            let exec = evaluate_route(&case.ctx, &cand, &tt, &config);
            prop_assert!(exec.finish <= case.ctx.end + TIME_EPS);
            prop_assert!(ins.eval.finish >= case.ctx.changed_epoch.min(case.ctx.unchanged_epoch));
        }
    }
}
