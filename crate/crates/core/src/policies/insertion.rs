//! Route evaluation and request insertion shared by both policies.

use crate::instances::RequestId;
use crate::mdp::{ceil_epoch, departure, evaluate_route, CostConfig, RouteContext, RouteEval, Stop, TIME_EPS};
use crate::traveltime::{AverageSpeed, Location, Minutes, TravelTimes};

/// Travel-time models used while planning. Costs come from `plan`;
/// feasibility against availability ends always uses `exec`, the model the
/// simulator runs with.
#[derive(Clone, Copy)]
pub struct Planner<'a> {
    pub plan: &'a dyn TravelTimes,
    pub exec: &'a dyn TravelTimes,
    /// Planning and execution timing differ.
    pub split: bool,
    pub config: CostConfig,
    /// Strategic-wait fraction assumed when costing routes.
    pub plan_eta: f64,
}

impl<'a> Planner<'a> {
    pub fn new(exec: &'a dyn TravelTimes, config: CostConfig) -> Self {
        Planner {
            plan: exec,
            exec,
            split: false,
            config,
            plan_eta: config.eta,
        }
    }

    /// The planner a policy uses on `state`: average-speed costing when
    /// `average` is set, strategic waits in the costed schedule only when
    /// `planned_waits` is set.
    pub fn for_policy(exec: &'a dyn TravelTimes, config: CostConfig, average: bool, planned_waits: bool) -> Self {
        let mut planner = Planner::new(exec, config);
        if average {
            planner = planner.with_plan_model(&AverageSpeed);
        }
        if !planned_waits {
            planner = planner.without_planned_waits();
        }
        planner
    }

    /// Costs routes as if vehicles left as soon as the next stop allows.
    pub fn without_planned_waits(mut self) -> Self {
        self.plan_eta = 0.0;
        self.split = self.split || self.config.eta != 0.0;
        self
    }

    pub fn with_plan_model(mut self, plan: &'a dyn TravelTimes) -> Self {
        self.plan = plan;
        self.split = true;
        self
    }

    /// Evaluation under the planning model, with `finish` taken from the
    /// execution model.
    pub fn evaluate(&self, ctx: &RouteContext, route: &[Stop]) -> RouteEval {
        let plan_config = CostConfig {
            eta: self.plan_eta,
            ..self.config
        };
        let mut eval = evaluate_route(ctx, route, self.plan, &plan_config);
        if self.split {
            eval.finish = evaluate_route(ctx, route, self.exec, &self.config).finish;
        }
        eval
    }

    pub fn cost(&self, eval: &RouteEval) -> f64 {
        eval.cost(&self.config)
    }
}

/// Change in a vehicle's route caused by adding one request.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaResult {
    pub travel: Minutes,
    pub late: Minutes,
    /// Earliest arrival at the vehicle's end location; `+inf` if the
    /// request cannot be placed.
    pub finish: Minutes,
}

impl DeltaResult {
    pub const INFEASIBLE: DeltaResult = DeltaResult {
        travel: f64::INFINITY,
        late: f64::INFINITY,
        finish: f64::INFINITY,
    };

    pub fn between(before: &RouteEval, after: &RouteEval) -> Self {
        DeltaResult {
            travel: after.travel - before.travel,
            late: after.late - before.late,
            finish: after.finish,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.finish.is_finite()
    }
}

/// Which position pairs an insertion may use. Pickup index `i` places the
/// pickup before original stop `i`; delivery index `j >= i` places the
/// delivery before original stop `j` and after the pickup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Positions {
    pub pickups: usize,
    pub delivery_span: usize,
}

impl Positions {
    pub const ALL: Positions = Positions {
        pickups: usize::MAX,
        delivery_span: usize::MAX,
    };

    /// The first three pickup positions and the three positions following
    /// the pickup.
    pub const RESTRICTED: Positions = Positions {
        pickups: 3,
        delivery_span: 3,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct Insertion {
    pub pickup_at: usize,
    pub delivery_at: usize,
    /// Evaluation of the route with the request inserted.
    pub eval: RouteEval,
}

pub fn materialize(route: &[Stop], pickup: Stop, delivery: Stop, i: usize, j: usize) -> Vec<Stop> {
    let mut out = Vec::with_capacity(route.len() + 2);
    out.extend_from_slice(&route[..i]);
    out.push(pickup);
    out.extend_from_slice(&route[i..j]);
    out.push(delivery);
    out.extend_from_slice(&route[j..]);
    out
}

#[derive(Clone, Copy)]
struct Cursor {
    loc: Location,
    p: Minutes,
    travel: Minutes,
    late: Minutes,
}

impl Cursor {
    #[inline]
    fn visit(&mut self, tt: &dyn TravelTimes, stop: &Stop, end: Minutes, eta: f64) {
        let (dep, tau) = departure(tt, &self.loc, stop, self.p, end, eta);
        let arrive = dep + tau;
        self.travel += tau;
        self.late += (arrive - stop.due).max(0.0);
        self.loc = stop.loc;
        self.p = ceil_epoch(arrive);
    }
}

/// Minimum-cost feasible placement of a request's two stops into `route`.
///
/// Schedules before the pickup position are cached, and once a candidate's
/// schedule rejoins the original one (same stop, same decision epoch) the
/// original remainder is reused. The winning placement is re-evaluated in
/// full so the returned numbers do not depend on the shortcut.
pub fn best_insertion(
    planner: &Planner<'_>,
    ctx: &RouteContext,
    route: &[Stop],
    base: &RouteEval,
    pickup: Stop,
    delivery: Stop,
    positions: Positions,
) -> Option<Insertion> {
    if ctx.homebound {
        return None;
    }
    let config = &planner.config;
    let plan = Lane::new(planner.plan, ctx, route, planner.plan_eta, config.charge_endpoint_legs);
    let exec = planner
        .split
        .then(|| Lane::new(planner.exec, ctx, route, config.eta, config.charge_endpoint_legs));
    let end = ctx.end;
    let n = route.len();

    let base_cost = planner.cost(base);
    let mut best: Option<(f64, usize, usize)> = None;
    let last_pickup = n.min(positions.pickups.saturating_sub(1));
    for i in 0..=last_pickup {
        let mut s = plan.with_pickup(ctx, &pickup, i);
        let last_delivery = n.min(i.saturating_add(positions.delivery_span.saturating_sub(1)));
        for j in i..=last_delivery {
            let mut d = s;
            d.visit(plan.tt, &delivery, end, plan.eta);
            let (travel, late, finish) = plan.finish_from(d, j);
            let cost = config.mu1 * travel + config.mu2 * late - base_cost;
            if best.is_none_or(|(b, ..)| cost < b - 1e-9) {
                let finish = match &exec {
                    Some(exec) => exec.finish_with(ctx, &pickup, &delivery, i, j),
                    None => finish,
                };
                if finish <= end + TIME_EPS {
                    best = Some((cost, i, j));
                }
            }
            if j < n {
                s.visit(plan.tt, &route[j], end, plan.eta);
            }
        }
    }
    best.map(|(_, i, j)| {
        let cand = materialize(route, pickup, delivery, i, j);
        Insertion {
            pickup_at: i,
            delivery_at: j,
            eval: planner.evaluate(ctx, &cand),
        }
    })
}

/// One timing model's view of a route: the state before each original stop
/// and the totals of the unchanged route.
struct Lane<'r, 't> {
    tt: &'t dyn TravelTimes,
    route: &'r [Stop],
    eta: f64,
    end: Minutes,
    home: Location,
    charge_home: bool,
    pre: Vec<Cursor>,
    orig_home: Minutes,
    orig_finish: Minutes,
}

impl<'r, 't> Lane<'r, 't> {
    fn new(tt: &'t dyn TravelTimes, ctx: &RouteContext, route: &'r [Stop], eta: f64, charge_home: bool) -> Self {
        let mut pre = Vec::with_capacity(route.len() + 1);
        let mut c = Cursor {
            loc: ctx.from,
            p: ctx.first_epoch(route.first()),
            travel: 0.0,
            late: 0.0,
        };
        pre.push(c);
        for stop in route {
            c.visit(tt, stop, ctx.end, eta);
            pre.push(c);
        }
        let orig_home = tt.travel_time(&c.loc, &ctx.home, c.p);
        let orig_finish = if c.p < ctx.end { c.p + orig_home } else { f64::INFINITY };
        Lane {
            tt,
            route,
            eta,
            end: ctx.end,
            home: ctx.home,
            charge_home,
            pre,
            orig_home,
            orig_finish,
        }
    }

    /// State right after visiting `pickup` placed before original stop `i`.
    fn with_pickup(&self, ctx: &RouteContext, pickup: &Stop, i: usize) -> Cursor {
        let mut s = if i == 0 {
            Cursor {
                loc: ctx.from,
                p: ctx.first_epoch(Some(pickup)),
                travel: 0.0,
                late: 0.0,
            }
        } else {
            self.pre[i]
        };
        s.visit(self.tt, pickup, self.end, self.eta);
        s
    }

    /// Travel, lateness and finish after continuing from `s` with original
    /// stops `j..`. Once the schedule rejoins the original one (same stop,
    /// same decision epoch) the original remainder is reused.
    fn finish_from(&self, mut s: Cursor, j: usize) -> (Minutes, Minutes, Minutes) {
        let n = self.route.len();
        let (total_travel, total_late) = (self.pre[n].travel, self.pre[n].late);
        for k in j..n {
            if s.p == self.pre[k].p && s.loc == self.pre[k].loc {
                let travel = s.travel
                    + (total_travel - self.pre[k].travel)
                    + if self.charge_home { self.orig_home } else { 0.0 };
                let late = s.late + (total_late - self.pre[k].late);
                return (travel, late, self.orig_finish);
            }
            s.visit(self.tt, &self.route[k], self.end, self.eta);
        }
        let home = self.tt.travel_time(&s.loc, &self.home, s.p);
        let finish = if s.p < self.end { s.p + home } else { f64::INFINITY };
        (s.travel + if self.charge_home { home } else { 0.0 }, s.late, finish)
    }

    /// Finish time with the pickup before stop `i` and the delivery before
    /// stop `j`.
    fn finish_with(&self, ctx: &RouteContext, pickup: &Stop, delivery: &Stop, i: usize, j: usize) -> Minutes {
        let mut s = self.with_pickup(ctx, pickup, i);
        for stop in &self.route[i..j] {
            s.visit(self.tt, stop, self.end, self.eta);
        }
        s.visit(self.tt, delivery, self.end, self.eta);
        self.finish_from(s, j).2
    }
}

/// Requests whose pickup is still in `route`; their stops may be moved.
pub fn movable_requests(route: &[Stop]) -> Vec<RequestId> {
    route
        .iter()
        .filter(|s| s.kind.is_pickup())
        .map(|s| s.request())
        .collect()
}

pub fn remove_request(route: &mut Vec<Stop>, r: RequestId) {
    route.retain(|s| s.request() != r);
}

/// Rebuilds `route` with the request added: all movable requests are taken
/// out, the request is inserted first and the others follow in order of
/// deadline, each at its cheapest feasible position.
pub fn reconstruct(
    planner: &Planner<'_>,
    ctx: &RouteContext,
    route: &[Stop],
    pickup: Stop,
    delivery: Stop,
) -> Option<(Vec<Stop>, RouteEval)> {
    let movable = movable_requests(route);
    let mut others: Vec<(Stop, Stop)> = movable
        .iter()
        .map(|&r| {
            let p = *route
                .iter()
                .find(|s| s.kind.is_pickup() && s.request() == r)
                .expect("pickup present");
            let d = *route
                .iter()
                .find(|s| !s.kind.is_pickup() && s.request() == r)
                .expect("delivery present");
            (p, d)
        })
        .collect();
    others.sort_by(|a, b| a.1.due.total_cmp(&b.1.due).then(a.0.request().cmp(&b.0.request())));
    let mut current: Vec<Stop> = route
        .iter()
        .filter(|s| !movable.contains(&s.request()))
        .copied()
        .collect();
    let mut eval = planner.evaluate(ctx, &current);
    for (p, d) in std::iter::once((pickup, delivery)).chain(others) {
        let ins = best_insertion(planner, ctx, &current, &eval, p, d, Positions::ALL)?;
        current = materialize(&current, p, d, ins.pickup_at, ins.delivery_at);
        eval = ins.eval;
    }
    Some((current, eval))
}

/// Cheapest-insertion change for adding a request, as used by DRACE for
/// newly revealed requests.
pub fn delta_cheapest(
    planner: &Planner<'_>,
    ctx: &RouteContext,
    route: &[Stop],
    base: &RouteEval,
    pickup: Stop,
    delivery: Stop,
) -> (DeltaResult, Option<Insertion>) {
    match best_insertion(planner, ctx, route, base, pickup, delivery, Positions::ALL) {
        Some(ins) => (DeltaResult::between(base, &ins.eval), Some(ins)),
        None => (DeltaResult::INFEASIBLE, None),
    }
}

/// Reconstruction change for re-planning an outstanding request.
pub fn delta_reconstruct(
    planner: &Planner<'_>,
    ctx: &RouteContext,
    route: &[Stop],
    base: &RouteEval,
    pickup: Stop,
    delivery: Stop,
) -> (DeltaResult, Option<Vec<Stop>>) {
    match reconstruct(planner, ctx, route, pickup, delivery) {
        Some((rebuilt, eval)) => (DeltaResult::between(base, &eval), Some(rebuilt)),
        None => (DeltaResult::INFEASIBLE, None),
    }
}
