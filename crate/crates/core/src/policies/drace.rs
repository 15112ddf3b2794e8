//! Destroy-and-repair dispatching with a capacity-expiration cost term.

use crate::instances::RequestId;
use crate::mdp::{Action, CostConfig, Policy, RouteContext, RouteEval, SimState, Stop, TIME_EPS};
use crate::policies::insertion::{
    best_insertion, delta_cheapest, delta_reconstruct, materialize, DeltaResult, Planner, Positions,
};
use crate::traveltime::Minutes;

/// Assignment cost of a request to a vehicle: travel and lateness increase,
/// the crowdshipper fee, and a charge on the vehicle's remaining
/// availability. Infinite when the vehicle could not finish in time.
pub fn cfa_cost(delta: &DeltaResult, is_crowd: bool, end: Minutes, t: Minutes, config: &CostConfig) -> f64 {
    if !(delta.finish <= end + TIME_EPS) {
        return f64::INFINITY;
    }
    config.mu1 * delta.travel
        + config.mu2 * delta.late
        + if is_crowd { config.rho } else { 0.0 }
        + config.lambda * (end - t)
}

/// Index of the smallest finite cost; the lowest index wins ties.
pub fn argmin_cost(costs: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, c) in costs.into_iter().enumerate() {
        if c.is_finite() && best.is_none_or(|(b, _)| c < b) {
            best = Some((c, i));
        }
    }
    best.map(|(_, i)| i)
}

#[derive(Clone, Debug, Default)]
pub struct Drace {
    /// Plan with the average-speed model; feasibility still uses the
    /// simulator's travel times.
    pub average_planning: bool,
    /// Include strategic waits in the schedule used to cost routes.
    pub planned_waits: bool,
}

impl Drace {
    pub fn new() -> Self {
        Drace::default()
    }

    pub fn with_average_planning() -> Self {
        Drace {
            average_planning: true,
            ..Drace::default()
        }
    }
}

/// The routes and per-vehicle bookkeeping DRACE works on within one epoch.
pub struct Workspace {
    pub routes: Vec<Vec<Stop>>,
    pub contexts: Vec<RouteContext>,
    pub evals: Vec<RouteEval>,
}

impl Workspace {
    pub fn new(state: &SimState<'_>, planner: &Planner<'_>) -> Self {
        let routes: Vec<Vec<Stop>> = state.vehicles.iter().map(|v| v.route.clone()).collect();
        let contexts: Vec<RouteContext> = state.vehicles.iter().map(|v| v.route_context(state.t)).collect();
        let evals = routes
            .iter()
            .zip(&contexts)
            .map(|(r, c)| planner.evaluate(c, r))
            .collect();
        Workspace {
            routes,
            contexts,
            evals,
        }
    }

    pub fn set_route(&mut self, planner: &Planner<'_>, vi: usize, route: Vec<Stop>) {
        self.evals[vi] = planner.evaluate(&self.contexts[vi], &route);
        self.routes[vi] = route;
    }
}

/// Runs one DRACE decision on `state` with the given planner.
pub fn drace_decide(state: &SimState<'_>, planner: &Planner<'_>) -> Action {
    let config = &planner.config;
    let t = state.t;
    let mut ws = Workspace::new(state, planner);

    // Destroy: take out every outstanding request close to its ready time.
    // A vehicle whose remaining stops could no longer be finished in time
    // without them (longer waits) keeps its plan.
    let mut window = state.window_requests(config.gamma);
    if !window.is_empty() {
        let mut kept = Vec::new();
        for vi in 0..ws.routes.len() {
            let before = ws.routes[vi].len();
            let mut route = ws.routes[vi].clone();
            route.retain(|s| window.binary_search(&s.request()).is_err());
            if route.len() == before {
                continue;
            }
            let eval = planner.evaluate(&ws.contexts[vi], &route);
            if eval.finish <= state.vehicles[vi].spec.end + TIME_EPS {
                ws.routes[vi] = route;
                ws.evals[vi] = eval;
            } else {
                kept.extend(ws.routes[vi].iter().map(|s| s.request()));
            }
        }
        window.retain(|r| !kept.contains(r));
    }

    // Repair in order of deadline.
    let mut order: Vec<(RequestId, bool)> = state
        .new_requests
        .iter()
        .map(|&r| (r, false))
        .chain(window.iter().map(|&r| (r, true)))
        .collect();
    order.sort_by(|a, b| {
        let (ra, rb) = (state.request(a.0), state.request(b.0));
        ra.deadline.total_cmp(&rb.deadline).then(a.0.cmp(&b.0))
    });

    for (r, replanned) in order {
        let req = state.request(r);
        let (pickup, delivery) = (Stop::pickup(req), Stop::delivery(req));
        let mut costs = vec![f64::INFINITY; state.vehicles.len()];
        let mut rebuilt: Vec<Option<Vec<Stop>>> = vec![None; state.vehicles.len()];
        for (vi, vehicle) in state.vehicles.iter().enumerate() {
            if vehicle.homebound() {
                continue;
            }
            let (ctx, route, base) = (&ws.contexts[vi], &ws.routes[vi], &ws.evals[vi]);
            let delta = if replanned {
                let (d, r) = delta_reconstruct(planner, ctx, route, base, pickup, delivery);
                rebuilt[vi] = r;
                d
            } else {
                delta_cheapest(planner, ctx, route, base, pickup, delivery).0
            };
            costs[vi] = cfa_cost(&delta, vehicle.is_crowd(), vehicle.spec.end, t, config);
        }
        let Some(vi) = argmin_cost(costs) else {
            // No vehicle can take it; leave it on the first dedicated
            // vehicle so the engine reports the contract violation.
            if let Some(vi) = state.vehicles.iter().position(|v| !v.is_crowd()) {
                ws.routes[vi].push(pickup);
                ws.routes[vi].push(delivery);
            }
            continue;
        };
        let rebuilt = rebuilt[vi].take();
        let (ctx, route, base) = (&ws.contexts[vi], &ws.routes[vi], &ws.evals[vi]);
        match best_insertion(planner, ctx, route, base, pickup, delivery, Positions::ALL) {
            Some(ins) => {
                ws.routes[vi] = materialize(route, pickup, delivery, ins.pickup_at, ins.delivery_at);
                ws.evals[vi] = ins.eval;
            }
            None => {
                let rebuilt = rebuilt.expect("only rebuilt routes can lack a direct insertion");
                ws.set_route(planner, vi, rebuilt);
            }
        }
    }
    Action { routes: ws.routes }
}

impl Policy for Drace {
    fn name(&self) -> String {
        if self.average_planning {
            "drace-avg".into()
        } else {
            "drace".into()
        }
    }

    fn decide(&mut self, state: &SimState<'_>) -> Action {
        let planner = Planner::for_policy(state.travel, state.config, self.average_planning, self.planned_waits);
        drace_decide(state, &planner)
    }
}
