#![allow(dead_code)]

use crowdship::mdp::{evaluate_route, CostConfig, RouteContext, RouteEval, TIME_EPS};
use crowdship::policies::insertion::materialize;
use crowdship::{Geography, Location, Request, RequestId, Stop, TravelTimes};
use rand::seq::SliceRandom;
use rand::Rng;

/// A vehicle's pending route plus one request to place into it.
#[derive(Clone, Debug)]
pub struct Case {
    pub ctx: RouteContext,
    pub route: Vec<Stop>,
    pub pickup: Stop,
    pub delivery: Stop,
}

pub fn random_location(rng: &mut impl Rng, geo: &Geography) -> Location {
    let x = rng.gen_range(0.0..geo.width());
    let y = rng.gen_range(0.0..geo.height());
    geo.locate(x, y).expect("inside the grid")
}

pub fn random_request(rng: &mut impl Rng, geo: &Geography, id: u32, t: f64) -> Request {
    let ready = (t + rng.gen_range(-30.0..120.0_f64)).round();
    Request {
        id: RequestId(id),
        pickup: random_location(rng, geo),
        delivery: random_location(rng, geo),
        arrival: t,
        ready,
        deadline: ready + rng.gen_range(30.0..240.0),
        bundle: None,
    }
}

/// Up to `max_stops` stops: whole requests in a random precedence-respecting
/// order, sometimes led by a delivery whose pickup already happened.
pub fn random_case(rng: &mut impl Rng, geo: &Geography, max_stops: usize) -> Case {
    let t = rng.gen_range(0..600) as f64;
    let mut route = Vec::new();
    let mut id = 0;
    if max_stops > 0 && rng.gen_bool(0.3) {
        route.push(Stop::delivery(&random_request(rng, geo, id, t)));
        id += 1;
    }
    let pairs = rng.gen_range(0..=(max_stops - route.len()) / 2);
    let mut pending: Vec<Vec<Stop>> = (0..pairs)
        .map(|_| {
            let r = random_request(rng, geo, id, t);
            id += 1;
            vec![Stop::delivery(&r), Stop::pickup(&r)]
        })
        .collect();
    while !pending.is_empty() {
        let k = rng.gen_range(0..pending.len());
        route.push(pending[k].pop().unwrap());
        if pending[k].is_empty() {
            pending.swap_remove(k);
        }
    }
    let new = random_request(rng, geo, 1000, t);
    let wait = *[0.0, 0.0, 5.0, 17.0].choose(rng).unwrap();
    let ctx = RouteContext {
        from: random_location(rng, geo),
        changed_epoch: t,
        unchanged_epoch: t + wait,
        next: route.first().map(|s: &Stop| s.kind),
        end: t + rng.gen_range(150.0..700.0_f64).round(),
        home: random_location(rng, geo),
        engaged: rng.gen_bool(0.5) || !route.is_empty(),
        homebound: false,
        arrival: t,
    };
    Case {
        ctx,
        route,
        pickup: Stop::pickup(&new),
        delivery: Stop::delivery(&new),
    }
}

pub struct Candidate {
    pub i: usize,
    pub j: usize,
    pub cost: f64,
    pub eval: RouteEval,
}

/// Every feasible placement, costed with the engine's own route evaluator.
pub fn enumerate(
    case: &Case,
    plan: &dyn TravelTimes,
    exec: &dyn TravelTimes,
    plan_eta: f64,
    config: &CostConfig,
) -> Vec<Candidate> {
    let n = case.route.len();
    let plan_config = CostConfig {
        eta: plan_eta,
        ..*config
    };
    let mut out = Vec::new();
    for i in 0..=n {
        for j in i..=n {
            let cand = materialize(&case.route, case.pickup, case.delivery, i, j);
            let mut eval = evaluate_route(&case.ctx, &cand, plan, &plan_config);
            eval.finish = evaluate_route(&case.ctx, &cand, exec, config).finish;
            if eval.finish <= case.ctx.end + TIME_EPS {
                out.push(Candidate {
                    i,
                    j,
                    cost: config.mu1 * eval.travel + config.mu2 * eval.late,
                    eval,
                });
            }
        }
    }
    out
}
