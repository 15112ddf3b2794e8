//! Myopic adaptive large neighbourhood search baseline.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{Request, RequestId};
use crate::mdp::{Action, Policy, RouteEval, SimState, Stop, TIME_EPS};
use crate::policies::drace::Workspace;
use crate::policies::insertion::{best_insertion, materialize, remove_request, Insertion, Planner, Positions};
use crate::traveltime::average_travel_time;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlnsConfig {
    /// Weight on location relatedness.
    pub phi: f64,
    /// Weight on time-window relatedness.
    pub chi: f64,
    /// Requests removed per random-removal iteration.
    pub removal: usize,
    pub iterations: usize,
    /// Ready-time window of requests open to re-planning.
    pub gamma: f64,
    /// Wall-clock cap on one decision's search, in milliseconds.
    pub budget_ms: Option<u64>,
}

impl Default for AlnsConfig {
    fn default() -> Self {
        AlnsConfig {
            phi: 9.0,
            chi: 3.0,
            removal: 4,
            iterations: 200,
            gamma: 45.0,
            budget_ms: Some(2000),
        }
    }
}

impl AlnsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi >= 0.0 && self.chi >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config("phi, chi and gamma must be non-negative".into()));
        }
        if self.removal == 0 {
            return Err(Error::Config("removal count must be at least 1".into()));
        }
        Ok(())
    }

    /// Requests taken out by a Shaw removal: the seed plus `ceil(n/2)`.
    pub fn shaw_count(&self) -> usize {
        self.removal.div_ceil(2) + 1
    }
}

/// Shaw removal around `seed`: the seed followed by the `count - 1` requests
/// of `pool` most related to it, ties broken by id.
pub fn shaw_select(seed: &Request, pool: &[&Request], phi: f64, chi: f64, count: usize) -> Vec<RequestId> {
    let mut others: Vec<(f64, RequestId)> = pool
        .iter()
        .filter(|r| r.id != seed.id)
        .map(|r| (relatedness(seed, r, phi, chi), r.id))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    std::iter::once(seed.id)
        .chain(others.into_iter().take(count.saturating_sub(1)).map(|(_, r)| r))
        .collect()
}

/// How alike two requests are; smaller is more related.
pub fn relatedness(a: &Request, b: &Request, phi: f64, chi: f64) -> f64 {
    phi * (average_travel_time(&a.pickup, &b.pickup) + average_travel_time(&a.delivery, &b.delivery))
        + chi * ((a.ready - b.ready).abs() + (a.deadline - b.deadline).abs())
}

pub struct Alns {
    pub config: AlnsConfig,
    pub average_planning: bool,
    /// Include strategic waits in the schedule used to cost routes.
    pub planned_waits: bool,
    rng: ChaCha8Rng,
    /// Cost of the incumbent after seeding and after every iteration of the
    /// latest decision.
    pub trace: Vec<f64>,
}

impl Alns {
    pub fn new(config: AlnsConfig, seed: u64) -> Self {
        Alns {
            config,
            average_planning: false,
            planned_waits: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Vec::new(),
        }
    }

    pub fn with_average_planning(mut self) -> Self {
        self.average_planning = true;
        self
    }

    fn vehicle_cost(planner: &Planner<'_>, ws: &Workspace, state: &SimState<'_>, vi: usize) -> f64 {
        let fees = if state.vehicles[vi].is_crowd() {
            planner.config.rho * ws.routes[vi].iter().filter(|s| s.kind.is_pickup()).count() as f64
        } else {
            0.0
        };
        planner.cost(&ws.evals[vi]) + fees
    }

    /// Seeds each new request at the end of a random vehicle that can take
    /// it, trying crowdshippers before dedicated vehicles.
    fn seed(&mut self, state: &SimState<'_>, planner: &Planner<'_>, ws: &mut Workspace) {
        for &r in &state.new_requests {
            let req = state.request(r);
            let (p, d) = (Stop::pickup(req), Stop::delivery(req));
            let mut placed = false;
            for crowd in [true, false] {
                let mut feasible: Vec<usize> = Vec::new();
                for (vi, v) in state.vehicles.iter().enumerate() {
                    if v.is_crowd() != crowd || v.homebound() {
                        continue;
                    }
                    let mut route = ws.routes[vi].clone();
                    route.push(p);
                    route.push(d);
                    if planner.evaluate(&ws.contexts[vi], &route).finish <= v.spec.end + TIME_EPS {
                        feasible.push(vi);
                    }
                }
                if let Some(&vi) = feasible.choose(&mut self.rng) {
                    let mut route = std::mem::take(&mut ws.routes[vi]);
                    route.push(p);
                    route.push(d);
                    ws.set_route(planner, vi, route);
                    placed = true;
                    break;
                }
            }
            if !placed && !insert_cheapest(state, planner, ws, req, Positions::ALL) {
                if let Some(vi) = state.vehicles.iter().position(|v| !v.is_crowd()) {
                    ws.routes[vi].push(p);
                    ws.routes[vi].push(d);
                }
            }
        }
    }

    fn pick_removals(&mut self, state: &SimState<'_>, candidates: &[RequestId]) -> Vec<RequestId> {
        let n = self.config.removal;
        if self.rng.gen_bool(0.5) {
            let k = n.min(candidates.len());
            candidates.choose_multiple(&mut self.rng, k).copied().collect()
        } else {
            let seed = *candidates.choose(&mut self.rng).expect("non-empty");
            let pool: Vec<&Request> = candidates.iter().map(|&r| state.request(r)).collect();
            shaw_select(
                state.request(seed),
                &pool,
                self.config.phi,
                self.config.chi,
                self.config.shaw_count(),
            )
        }
    }
}

/// Cheapest placement of a request over all vehicles, counting the
/// crowdshipper fee: `(vehicle, pickup_at, delivery_at, eval)`.
fn cheapest(
    state: &SimState<'_>,
    planner: &Planner<'_>,
    ws: &Workspace,
    req: &Request,
    positions: Positions,
) -> Option<(usize, usize, usize, RouteEval)> {
    let (p, d) = (Stop::pickup(req), Stop::delivery(req));
    let mut best: Option<(f64, usize, usize, usize, RouteEval)> = None;
    for (vi, v) in state.vehicles.iter().enumerate() {
        if v.homebound() {
            continue;
        }
        let base = &ws.evals[vi];
        let Some(ins) = best_insertion(planner, &ws.contexts[vi], &ws.routes[vi], base, p, d, positions) else {
            continue;
        };
        let fee = if v.is_crowd() { planner.config.rho } else { 0.0 };
        let cost = planner.cost(&ins.eval) - planner.cost(base) + fee;
        if best.as_ref().is_none_or(|b| cost < b.0 - 1e-9) {
            best = Some((cost, vi, ins.pickup_at, ins.delivery_at, ins.eval));
        }
    }
    best.map(|(_, vi, i, j, eval)| (vi, i, j, eval))
}

fn insert_cheapest(
    state: &SimState<'_>,
    planner: &Planner<'_>,
    ws: &mut Workspace,
    req: &Request,
    positions: Positions,
) -> bool {
    match cheapest(state, planner, ws, req, positions) {
        Some((vi, i, j, eval)) => {
            ws.routes[vi] = materialize(&ws.routes[vi], Stop::pickup(req), Stop::delivery(req), i, j);
            ws.evals[vi] = eval;
            true
        }
        None => false,
    }
}

/// Best insertions already computed this decision, per candidate and
/// vehicle, tagged with the route version they were computed against.
struct InsertionCache {
    versions: Vec<u64>,
    next_version: u64,
    vehicles: usize,
    restricted: Vec<Option<(u64, Option<Insertion>)>>,
    all: Vec<Option<(u64, Option<Insertion>)>>,
}

impl InsertionCache {
    fn new(candidates: usize, vehicles: usize) -> Self {
        InsertionCache {
            versions: vec![0; vehicles],
            next_version: 1,
            vehicles,
            restricted: vec![None; candidates * vehicles],
            all: vec![None; candidates * vehicles],
        }
    }

    fn bump(&mut self, vi: usize) {
        self.versions[vi] = self.next_version;
        self.next_version += 1;
    }

    /// Same choice as [`cheapest`], reusing unchanged per-vehicle results.
    fn cheapest(
        &mut self,
        state: &SimState<'_>,
        planner: &Planner<'_>,
        ws: &Workspace,
        slot: usize,
        req: &Request,
        positions: Positions,
    ) -> Option<(usize, usize, usize, RouteEval)> {
        let (p, d) = (Stop::pickup(req), Stop::delivery(req));
        let table = if positions == Positions::RESTRICTED {
            &mut self.restricted
        } else {
            &mut self.all
        };
        let mut best: Option<(f64, usize, usize, usize, RouteEval)> = None;
        for (vi, v) in state.vehicles.iter().enumerate() {
            if v.homebound() {
                continue;
            }
            let entry = &mut table[slot * self.vehicles + vi];
            let ins = match entry {
                Some((version, ins)) if *version == self.versions[vi] => ins.clone(),
                _ => {
                    let ins = best_insertion(
                        planner,
                        &ws.contexts[vi],
                        &ws.routes[vi],
                        &ws.evals[vi],
                        p,
                        d,
                        positions,
                    );
                    *entry = Some((self.versions[vi], ins.clone()));
                    ins
                }
            };
            let Some(ins) = ins else { continue };
            let fee = if v.is_crowd() { planner.config.rho } else { 0.0 };
            let cost = planner.cost(&ins.eval) - planner.cost(&ws.evals[vi]) + fee;
            if best.as_ref().is_none_or(|b| cost < b.0 - 1e-9) {
                best = Some((cost, vi, ins.pickup_at, ins.delivery_at, ins.eval));
            }
        }
        best.map(|(_, vi, i, j, eval)| (vi, i, j, eval))
    }
}

/// Vehicles changed by the current iteration and their previous plans.
struct Undo {
    saved: Vec<(usize, Vec<Stop>, RouteEval, u64)>,
}

impl Undo {
    fn touch(&mut self, ws: &Workspace, cache: &mut InsertionCache, vi: usize) {
        if !self.saved.iter().any(|(v, ..)| *v == vi) {
            self.saved
                .push((vi, ws.routes[vi].clone(), ws.evals[vi], cache.versions[vi]));
        }
        cache.bump(vi);
    }
}

/// Runs the search on `state` and returns the best plan found.
///
/// Only outstanding requests whose ready time falls within `gamma` of the
/// current epoch are moved; requests revealed now keep their seeded slot.
pub fn alns_decide(alns: &mut Alns, state: &SimState<'_>, planner: &Planner<'_>) -> Action {
    let mut ws = Workspace::new(state, planner);
    alns.trace.clear();
    alns.seed(state, planner, &mut ws);

    let candidates = state.window_requests(alns.config.gamma);
    let mut costs: Vec<f64> = (0..ws.routes.len())
        .map(|vi| Alns::vehicle_cost(planner, &ws, state, vi))
        .collect();
    let mut current: f64 = costs.iter().sum();
    alns.trace.push(current);
    if candidates.is_empty() {
        return Action { routes: ws.routes };
    }

    let mut cache = InsertionCache::new(candidates.len(), ws.routes.len());
    let mut undo = Undo { saved: Vec::new() };
    // Removal sets that left the current plan unchanged. Reinsertion is
    // deterministic, so they would do so again until the plan changes.
    let mut settled: HashSet<Vec<RequestId>> = HashSet::new();
    let started = Instant::now();
    let budget = alns.config.budget_ms.map(Duration::from_millis);
    for _ in 0..alns.config.iterations {
        if budget.is_some_and(|b| started.elapsed() >= b) {
            break;
        }
        let mut removed = alns.pick_removals(state, &candidates);
        removed.sort_by(|a, b| {
            let (ra, rb) = (state.request(*a), state.request(*b));
            ra.deadline.total_cmp(&rb.deadline).then(a.cmp(b))
        });
        if settled.contains(&removed) {
            alns.trace.push(current);
            continue;
        }
        undo.saved.clear();
        for &r in &removed {
            if let Some(vi) = ws
                .routes
                .iter()
                .position(|route| route.iter().any(|s| s.request() == r))
            {
                undo.touch(&ws, &mut cache, vi);
                let mut route = std::mem::take(&mut ws.routes[vi]);
                remove_request(&mut route, r);
                ws.set_route(planner, vi, route);
            }
        }
        let mut complete = true;
        for &r in &removed {
            let req = state.request(r);
            let slot = candidates.binary_search(&r).expect("removed requests are candidates");
            let found = cache
                .cheapest(state, planner, &ws, slot, req, Positions::RESTRICTED)
                .or_else(|| cache.cheapest(state, planner, &ws, slot, req, Positions::ALL));
            let Some((vi, i, j, eval)) = found else {
                complete = false;
                break;
            };
            undo.touch(&ws, &mut cache, vi);
            ws.routes[vi] = materialize(&ws.routes[vi], Stop::pickup(req), Stop::delivery(req), i, j);
            ws.evals[vi] = eval;
        }
        // Taking stops out can lengthen a route when it changes the waits.
        let feasible = complete
            && undo
                .saved
                .iter()
                .all(|(vi, ..)| ws.evals[*vi].finish <= state.vehicles[*vi].spec.end + TIME_EPS);
        let trial = if feasible {
            current
                + undo
                    .saved
                    .iter()
                    .map(|(vi, ..)| Alns::vehicle_cost(planner, &ws, state, *vi) - costs[*vi])
                    .sum::<f64>()
        } else {
            f64::INFINITY
        };
        if trial <= current + 1e-9 {
            current = trial;
            let mut changed = false;
            for (vi, route, _, version) in &undo.saved {
                if ws.routes[*vi] == *route {
                    cache.versions[*vi] = *version;
                } else {
                    changed = true;
                }
                costs[*vi] = Alns::vehicle_cost(planner, &ws, state, *vi);
            }
            if changed {
                settled.clear();
            } else {
                settled.insert(removed);
            }
        } else {
            settled.insert(removed);
            for (vi, route, eval, version) in undo.saved.drain(..) {
                ws.routes[vi] = route;
                ws.evals[vi] = eval;
                cache.versions[vi] = version;
            }
        }
        alns.trace.push(current);
    }
    Action { routes: ws.routes }
}

impl Policy for Alns {
    fn name(&self) -> String {
        if self.average_planning {
            "myopic-avg".into()
        } else {
            "myopic".into()
        }
    }

    fn decide(&mut self, state: &SimState<'_>) -> Action {
        let planner = Planner::for_policy(state.travel, state.config, self.average_planning, self.planned_waits);
        alns_decide(self, state, &planner)
    }
}
