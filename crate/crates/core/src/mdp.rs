//! Epoch-by-epoch simulation of the dispatching process.
//!
//! Time advances in one-minute epochs. At every epoch the policy sees the
//! pre-decision state and returns a new stop sequence for each active vehicle.
//! The engine then applies the action: vehicles that just arrived, got a new
//! next stop, or reached their planned departure either leave immediately
//! or schedule a (possibly strategic) wait. Costs are charged on departure.
//! Finally the clock moves on, new requests and crowdshippers are revealed
//! and expired vehicles leave the system.
//!
//! Departures happen at integer epochs. A vehicle that reaches a stop at a
//! fractional time takes its next decision at the following epoch; legs of
//! zero length are chained within the same epoch.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{Instance, Request, RequestId, VehicleId, VehicleSpec};
use crate::traveltime::{Location, Minutes, TravelTimes};

/// Slack for floating point comparisons against availability ends.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Cost per travel minute.
    pub mu1: f64,
    /// Cost per minute of delivery past the deadline.
    pub mu2: f64,
    /// Fee per request served by a crowdshipper.
    pub rho: f64,
    /// Weight on remaining vehicle availability in the assignment cost.
    pub lambda: f64,
    /// Fraction of remaining availability a vehicle may wait strategically.
    pub eta: f64,
    /// Ready-time window for re-planning outstanding requests.
    pub gamma: f64,
    /// Count the final leg to the vehicle's end location as travel.
    pub charge_endpoint_legs: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            mu1: 1.0,
            mu2: 5.0,
            rho: 2.0,
            lambda: 0.05,
            eta: 0.20,
            gamma: 45.0,
            charge_endpoint_legs: true,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("gamma", self.gamma),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.eta >= 1.0 {
            return Err(Error::Config(format!("eta must be below 1, got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopKind {
    Pickup(RequestId),
    Delivery(RequestId),
}

impl StopKind {
    pub fn request(self) -> RequestId {
        match self {
            StopKind::Pickup(r) | StopKind::Delivery(r) => r,
        }
    }

    pub fn is_pickup(self) -> bool {
        matches!(self, StopKind::Pickup(_))
    }
}

/// A planned visit. Ready time and deadline are copied from the request so
/// schedules can be evaluated without looking it up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub kind: StopKind,
    pub loc: Location,
    /// Earliest useful arrival; `-inf` for deliveries.
    pub ready: Minutes,
    /// Deadline for deliveries; `+inf` for pickups.
    pub due: Minutes,
}

impl Stop {
    pub fn pickup(r: &Request) -> Self {
        Stop {
            kind: StopKind::Pickup(r.id),
            loc: r.pickup,
            ready: r.ready,
            due: f64::INFINITY,
        }
    }

    pub fn delivery(r: &Request) -> Self {
        Stop {
            kind: StopKind::Delivery(r.id),
            loc: r.delivery,
            ready: f64::NEG_INFINITY,
            due: r.deadline,
        }
    }

    pub fn request(&self) -> RequestId {
        self.kind.request()
    }
}

/// What the vehicle's current position (or current destination) is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Start,
    Stop(StopKind),
    /// Heading to or at the vehicle's end location; no further service.
    Endpoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub spec: VehicleSpec,
    pub anchor: Anchor,
    /// Location of the current position or destination.
    pub position: Location,
    /// Planned stops after `position`.
    pub route: Vec<Stop>,
    /// Arrival time at `position`.
    pub arrival: Minutes,
    /// Planned departure from `position`.
    pub depart: Minutes,
    /// Set once the vehicle has left for its first pickup.
    pub engaged: bool,
}

impl VehicleState {
    pub fn new(spec: VehicleSpec) -> Self {
        VehicleState {
            anchor: Anchor::Start,
            position: spec.start,
            route: Vec::new(),
            arrival: spec.appear,
            depart: spec.appear,
            engaged: false,
            spec,
        }
    }

    pub fn id(&self) -> VehicleId {
        self.spec.id
    }

    pub fn is_crowd(&self) -> bool {
        self.spec.is_crowd()
    }

    pub fn at_anchor(&self, t: Minutes) -> bool {
        self.arrival.ceil() <= t
    }

    pub fn homebound(&self) -> bool {
        self.anchor == Anchor::Endpoint
    }

    /// Timing context for evaluating candidate routes at epoch `t`.
    pub fn route_context(&self, t: Minutes) -> RouteContext {
        let (changed_epoch, unchanged_epoch) = if !self.at_anchor(t) {
            let p = self.arrival.ceil();
            (p, p)
        } else if self.depart <= t {
            (t, t)
        } else {
            (t, self.depart.ceil())
        };
        RouteContext {
            from: self.position,
            changed_epoch,
            unchanged_epoch,
            next: self.route.first().map(|s| s.kind),
            end: self.spec.end,
            home: self.spec.finish,
            engaged: self.engaged,
            homebound: self.homebound(),
            arrival: self.arrival,
        }
    }
}

/// Everything needed to replay the engine's timing rules on a candidate
/// stop sequence for one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouteContext {
    pub from: Location,
    /// First decision epoch if the candidate changes the next stop.
    pub changed_epoch: Minutes,
    /// First decision epoch if the next stop stays the same.
    pub unchanged_epoch: Minutes,
    /// Next stop in the pre-decision state.
    pub next: Option<StopKind>,
    pub end: Minutes,
    pub home: Location,
    pub engaged: bool,
    pub homebound: bool,
    pub arrival: Minutes,
}

impl RouteContext {
    pub fn first_epoch(&self, first: Option<&Stop>) -> Minutes {
        if first.map(|s| s.kind) == self.next {
            self.unchanged_epoch
        } else {
            self.changed_epoch
        }
    }
}

/// `x.ceil()` without the libm call; exact for every finite `f64`.
#[inline]
pub fn ceil_epoch(x: f64) -> f64 {
    if x.abs() < 4_503_599_627_370_496.0 {
        let i = x as i64 as f64;
        if i < x {
            i + 1.0
        } else {
            i
        }
    } else {
        x.ceil()
    }
}

/// Planned departure from the current stop when the next pickup is not yet
/// ready: the larger of a strategic share of the remaining availability and
/// the operational wait.
pub fn wait_time(t: Minutes, end: Minutes, ready: Minutes, tau: Minutes, eta: f64) -> Minutes {
    t + (eta * (end - t)).max(ready - t - tau)
}

/// Departure epoch and leg duration toward `to`, first deciding at epoch `p`
/// and re-deciding at each planned departure until the stop can be reached
/// no earlier than its ready time.
#[inline]
pub fn departure(
    tt: &dyn TravelTimes,
    from: &Location,
    to: &Stop,
    mut p: Minutes,
    end: Minutes,
    eta: f64,
) -> (Minutes, Minutes) {
    loop {
        let tau = tt.travel_time(from, &to.loc, p);
        if to.ready <= p + tau {
            return (p, tau);
        }
        p = ceil_epoch(wait_time(p, end, to.ready, tau, eta));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RouteEval {
    /// Travel minutes from the current position onward.
    pub travel: Minutes,
    /// Minutes past deadline summed over the route's deliveries.
    pub late: Minutes,
    /// Earliest arrival at the end location.
    pub finish: Minutes,
}

impl RouteEval {
    pub fn cost(&self, config: &CostConfig) -> f64 {
        config.mu1 * self.travel + config.mu2 * self.late
    }
}

/// Simulates the engine's timing rules on `route`.
pub fn evaluate_route(ctx: &RouteContext, route: &[Stop], tt: &dyn TravelTimes, config: &CostConfig) -> RouteEval {
    if ctx.homebound {
        return RouteEval {
            travel: 0.0,
            late: 0.0,
            finish: if route.is_empty() { ctx.arrival } else { f64::INFINITY },
        };
    }
    let mut loc = ctx.from;
    let mut p = ctx.first_epoch(route.first());
    let mut eval = RouteEval::default();
    for stop in route {
        let (dep, tau) = departure(tt, &loc, stop, p, ctx.end, config.eta);
        let arrive = dep + tau;
        eval.travel += tau;
        eval.late += (arrive - stop.due).max(0.0);
        loc = stop.loc;
        p = ceil_epoch(arrive);
    }
    let home = tt.travel_time(&loc, &ctx.home, p);
    // A vehicle cannot act at or after its end.
    eval.finish = if p < ctx.end { p + home } else { f64::INFINITY };
    if config.charge_endpoint_legs && (ctx.engaged || !route.is_empty()) {
        eval.travel += home;
    }
    eval
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RequestStatus {
    /// Not yet revealed.
    Pending,
    /// Revealed this epoch, not yet assigned.
    New,
    /// Assigned, pickup not yet started; may be reassigned.
    Outstanding(VehicleId),
    /// The vehicle has left for the pickup; assignment is final.
    InProcess(VehicleId),
    Delivered {
        vehicle: VehicleId,
        at: Minutes,
    },
}

impl RequestStatus {
    pub fn is_active(self) -> bool {
        matches!(
            self,
            RequestStatus::New | RequestStatus::Outstanding(_) | RequestStatus::InProcess(_)
        )
    }
}

/// Pre-decision state handed to policies.
pub struct SimState<'a> {
    pub t: Minutes,
    pub instance: &'a Instance,
    pub status: Vec<RequestStatus>,
    pub new_requests: Vec<RequestId>,
    /// Active vehicles in ascending id order.
    pub vehicles: Vec<VehicleState>,
    pub config: CostConfig,
    /// The travel times the engine executes with.
    pub travel: &'a dyn TravelTimes,
}

impl<'a> SimState<'a> {
    pub fn request(&self, id: RequestId) -> &'a Request {
        &self.instance.requests[id.index()]
    }

    /// Outstanding requests whose ready time is within `gamma` of now.
    pub fn window_requests(&self, gamma: Minutes) -> Vec<RequestId> {
        self.status
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                matches!(s, RequestStatus::Outstanding(_)) && self.instance.requests[*i].ready - self.t <= gamma
            })
            .map(|(i, _)| RequestId(i as u32))
            .collect()
    }

    pub fn is_outstanding(&self, id: RequestId) -> bool {
        matches!(self.status[id.index()], RequestStatus::Outstanding(_))
    }
}

/// Updated stop sequences, aligned with `SimState::vehicles`.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub routes: Vec<Vec<Stop>>,
}

impl Action {
    pub fn identity(state: &SimState<'_>) -> Self {
        Action {
            routes: state.vehicles.iter().map(|v| v.route.clone()).collect(),
        }
    }
}

/// Decision rule mapping pre-decision states to actions.
pub trait Policy {
    fn name(&self) -> String;
    fn decide(&mut self, state: &SimState<'_>) -> Action;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Appear,
    Depart,
    Wait,
    Home,
    Expire,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Appear => "appear",
            EventKind::Depart => "depart",
            EventKind::Wait => "wait",
            EventKind::Home => "home",
            EventKind::Expire => "expire",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub epoch: Minutes,
    pub vehicle: VehicleId,
    pub kind: EventKind,
    /// Stop the vehicle departs toward, if any.
    pub stop: Option<StopKind>,
    /// Destination, or current position for appear/wait/expire.
    pub x: f64,
    pub y: f64,
    /// Arrival time for departures, planned departure for waits.
    pub time: Minutes,
    pub cost: f64,
}

impl Event {
    /// `epoch vehicle kind stop x y time cost`
    pub fn to_line(&self) -> String {
        let stop = match self.stop {
            Some(StopKind::Pickup(r)) => format!("P{r}"),
            Some(StopKind::Delivery(r)) => format!("D{r}"),
            None => "-".into(),
        };
        format!(
            "{} {} {} {} {} {} {} {}",
            self.epoch, self.vehicle, self.kind, stop, self.x, self.y, self.time, self.cost
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub total_cost: f64,
    /// Travel cost plus crowdshipper fees.
    pub routing_cost: f64,
    pub travel_cost: f64,
    pub crowd_fees: f64,
    pub lateness_charge: f64,
    pub delayed_requests: u32,
    pub total_delay: Minutes,
    pub crowd_served: u32,
    pub dedicated_served: u32,
    pub requests: u32,
    pub end_epoch: Minutes,
}

impl KpiReport {
    pub fn crowd_share(&self) -> f64 {
        let served = self.crowd_served + self.dedicated_served;
        if served == 0 {
            0.0
        } else {
            self.crowd_served as f64 / served as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub decide_calls: u64,
    pub decide_total: Duration,
    pub decide_max: Duration,
}

#[derive(Clone, Debug)]
pub struct DayResult {
    pub kpi: KpiReport,
    pub log: Vec<Event>,
    pub stats: RunStats,
    pub status: Vec<RequestStatus>,
    /// Every vehicle that appeared, in its final state.
    pub vehicles: Vec<VehicleState>,
}

pub struct Simulator<'a> {
    state: SimState<'a>,
    next_request: usize,
    next_vehicle: Vec<VehicleSpec>,
    retired: Vec<VehicleState>,
    kpi: KpiReport,
    log: Vec<Event>,
}

impl<'a> Simulator<'a> {
    pub fn new(instance: &'a Instance, travel: &'a dyn TravelTimes, config: CostConfig) -> Result<Self> {
        config.validate()?;
        instance.validate()?;
        let mut upcoming = instance.fleet.clone();
        upcoming.sort_by(|a, b| b.appear.total_cmp(&a.appear).then(b.id.cmp(&a.id)));
        let mut sim = Simulator {
            state: SimState {
                t: 0.0,
                instance,
                status: vec![RequestStatus::Pending; instance.requests.len()],
                new_requests: Vec::new(),
                vehicles: Vec::new(),
                config,
                travel,
            },
            next_request: 0,
            next_vehicle: upcoming,
            retired: Vec::new(),
            kpi: KpiReport {
                requests: instance.requests.len() as u32,
                ..KpiReport::default()
            },
            log: Vec::new(),
        };
        sim.reveal();
        Ok(sim)
    }

    pub fn state(&self) -> &SimState<'a> {
        &self.state
    }

    pub fn kpi(&self) -> &KpiReport {
        &self.kpi
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    fn contract(&self, message: String) -> Error {
        Error::Contract {
            epoch: self.state.t,
            message,
        }
    }

    fn invariant(&self, message: String) -> Error {
        Error::Invariant {
            epoch: self.state.t,
            message,
        }
    }

    /// Reveals requests and crowdshippers due at the current epoch.
    fn reveal(&mut self) {
        let t = self.state.t;
        let requests = &self.state.instance.requests;
        self.state.new_requests.clear();
        while self.next_request < requests.len() && requests[self.next_request].arrival <= t {
            self.state.status[self.next_request] = RequestStatus::New;
            self.state.new_requests.push(RequestId(self.next_request as u32));
            self.next_request += 1;
        }
        while self.next_vehicle.last().is_some_and(|v| v.appear <= t) {
            let spec = self.next_vehicle.pop().expect("checked above");
            self.log.push(Event {
                epoch: t,
                vehicle: spec.id,
                kind: EventKind::Appear,
                stop: None,
                x: spec.start.x,
                y: spec.start.y,
                time: spec.appear,
                cost: 0.0,
            });
            let pos = self.state.vehicles.partition_point(|v| v.id() < spec.id);
            self.state.vehicles.insert(pos, VehicleState::new(spec));
        }
    }

    /// Checks an action against the current state without changing it.
    pub fn validate_action(&self, action: &Action) -> Result<()> {
        let s = &self.state;
        if action.routes.len() != s.vehicles.len() {
            return Err(self.contract(format!(
                "action has {} routes for {} active vehicles",
                action.routes.len(),
                s.vehicles.len()
            )));
        }
        // Position of each stop: (vehicle, index) for pickup and delivery.
        let n = s.status.len();
        let mut pickup_at: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut delivery_at: Vec<Option<(usize, usize)>> = vec![None; n];
        for (vi, (vehicle, route)) in s.vehicles.iter().zip(&action.routes).enumerate() {
            if vehicle.homebound() && !route.is_empty() {
                return Err(self.contract(format!("vehicle {} is heading home but was given stops", vehicle.id())));
            }
            for (k, stop) in route.iter().enumerate() {
                let r = stop.request();
                if r.index() >= n {
                    return Err(self.contract(format!("unknown request {r}")));
                }
                let req = s.request(r);
                let (slot, expected) = match stop.kind {
                    StopKind::Pickup(_) => (&mut pickup_at[r.index()], Stop::pickup(req)),
                    StopKind::Delivery(_) => (&mut delivery_at[r.index()], Stop::delivery(req)),
                };
                if *stop != expected {
                    return Err(self.contract(format!("stop data for request {r} does not match the request")));
                }
                if slot.replace((vi, k)).is_some() {
                    return Err(self.contract(format!("request {r} appears twice")));
                }
            }
        }
        for (i, status) in s.status.iter().enumerate() {
            let (p, d) = (pickup_at[i], delivery_at[i]);
            let ok = match *status {
                RequestStatus::New | RequestStatus::Outstanding(_) => match (p, d) {
                    (Some((pv, pk)), Some((dv, dk))) => pv == dv && pk < dk,
                    _ => false,
                },
                RequestStatus::InProcess(v) => p.is_none() && d.is_some_and(|(dv, _)| s.vehicles[dv].id() == v),
                RequestStatus::Pending | RequestStatus::Delivered { .. } => p.is_none() && d.is_none(),
            };
            if !ok {
                return Err(self.contract(format!("request {i} ({status:?}) is not routed consistently")));
            }
        }
        for (vehicle, route) in s.vehicles.iter().zip(&action.routes) {
            let ctx = vehicle.route_context(s.t);
            let eval = evaluate_route(&ctx, route, s.travel, &s.config);
            if eval.finish > vehicle.spec.end + TIME_EPS {
                return Err(self.contract(format!(
                    "vehicle {} cannot finish by {} (earliest {:.3})",
                    vehicle.id(),
                    vehicle.spec.end,
                    eval.finish
                )));
            }
        }
        Ok(())
    }

    /// Applies an action and executes this epoch's departures. Returns the
    /// cost incurred.
    pub fn apply_action(&mut self, action: Action) -> Result<f64> {
        self.validate_action(&action)?;
        let t = self.state.t;
        let config = self.state.config;
        let travel = self.state.travel;
        let mut epoch_cost = 0.0;
        let mut changed = vec![false; action.routes.len()];
        for (vi, route) in action.routes.into_iter().enumerate() {
            let v = &mut self.state.vehicles[vi];
            changed[vi] = v.route.first().map(|s| s.kind) != route.first().map(|s| s.kind);
            for stop in &route {
                if let StopKind::Pickup(r) = stop.kind {
                    self.state.status[r.index()] = RequestStatus::Outstanding(v.id());
                }
            }
            v.route = route;
        }
        self.state.new_requests.clear();

        for vi in 0..self.state.vehicles.len() {
            let v = &self.state.vehicles[vi];
            if !v.at_anchor(t) || v.homebound() {
                continue;
            }
            let mut triggered = v.arrival.ceil() == t || changed[vi] || v.depart <= t;
            while triggered {
                let v = &mut self.state.vehicles[vi];
                let Some(&stop) = v.route.first() else {
                    v.depart = t;
                    break;
                };
                let tau = travel.travel_time(&v.position, &stop.loc, t);
                if stop.ready > t + tau {
                    v.depart = wait_time(t, v.spec.end, stop.ready, tau, config.eta);
                    self.log.push(Event {
                        epoch: t,
                        vehicle: v.id(),
                        kind: EventKind::Wait,
                        stop: Some(stop.kind),
                        x: v.position.x,
                        y: v.position.y,
                        time: v.depart,
                        cost: 0.0,
                    });
                    break;
                }
                let arrive = t + tau;
                let mut cost = config.mu1 * tau;
                self.kpi.travel_cost += config.mu1 * tau;
                match stop.kind {
                    StopKind::Pickup(r) => {
                        self.state.status[r.index()] = RequestStatus::InProcess(v.id());
                        v.engaged = true;
                        if v.is_crowd() {
                            cost += config.rho;
                            self.kpi.crowd_fees += config.rho;
                            self.kpi.crowd_served += 1;
                        } else {
                            self.kpi.dedicated_served += 1;
                        }
                    }
                    StopKind::Delivery(r) => {
                        let late = (arrive - stop.due).max(0.0);
                        if late > 0.0 {
                            self.kpi.delayed_requests += 1;
                            self.kpi.total_delay += late;
                            self.kpi.lateness_charge += config.mu2 * late;
                            cost += config.mu2 * late;
                        }
                        self.state.status[r.index()] = RequestStatus::Delivered {
                            vehicle: v.id(),
                            at: arrive,
                        };
                    }
                }
                epoch_cost += cost;
                self.log.push(Event {
                    epoch: t,
                    vehicle: v.id(),
                    kind: EventKind::Depart,
                    stop: Some(stop.kind),
                    x: stop.loc.x,
                    y: stop.loc.y,
                    time: arrive,
                    cost,
                });
                v.anchor = Anchor::Stop(stop.kind);
                v.position = stop.loc;
                v.arrival = arrive;
                v.depart = arrive;
                v.route.remove(0);
                triggered = v.at_anchor(t);
            }

            // An idle crowdshipper heads home at the last epoch that still
            // gets it there in time.
            let v = &self.state.vehicles[vi];
            if v.is_crowd() && v.route.is_empty() && v.at_anchor(t) && !v.homebound() {
                let next = t + 1.0;
                if next >= v.spec.end || next + travel.travel_time(&v.position, &v.spec.finish, next) > v.spec.end {
                    epoch_cost += self.send_home(vi, t);
                }
            }
        }
        self.kpi.routing_cost = self.kpi.travel_cost + self.kpi.crowd_fees;
        self.kpi.total_cost = self.kpi.routing_cost + self.kpi.lateness_charge;
        Ok(epoch_cost)
    }

    fn send_home(&mut self, vi: usize, t: Minutes) -> f64 {
        let config = self.state.config;
        let v = &mut self.state.vehicles[vi];
        let tau = self.state.travel.travel_time(&v.position, &v.spec.finish, t);
        let cost = if config.charge_endpoint_legs && v.engaged {
            config.mu1 * tau
        } else {
            0.0
        };
        self.kpi.travel_cost += cost;
        v.anchor = Anchor::Endpoint;
        v.position = v.spec.finish;
        v.arrival = t + tau;
        v.depart = v.arrival;
        self.log.push(Event {
            epoch: t,
            vehicle: v.id(),
            kind: EventKind::Home,
            stop: None,
            x: v.position.x,
            y: v.position.y,
            time: v.arrival,
            cost,
        });
        cost
    }

    /// All requests revealed and delivered and every vehicle idle.
    pub fn finished(&self) -> bool {
        let s = &self.state;
        s.t >= s.instance.horizon
            && self.next_request == s.instance.requests.len()
            && s.status.iter().all(|st| matches!(st, RequestStatus::Delivered { .. }))
            && s.vehicles.iter().all(|v| v.at_anchor(s.t))
    }

    /// Moves to the next epoch: reveals new information and retires
    /// vehicles whose availability has ended.
    pub fn advance(&mut self) -> Result<()> {
        self.state.t += 1.0;
        let t = self.state.t;
        if t > self.state.instance.hard_end {
            return Err(self.invariant("the day did not finish by the hard end".into()));
        }
        self.reveal();
        let mut i = 0;
        while i < self.state.vehicles.len() {
            let v = &self.state.vehicles[i];
            if v.spec.end <= t {
                if !v.route.is_empty() || !v.at_anchor(t) && !v.homebound() {
                    return Err(self.invariant(format!("vehicle {} expired with work left", v.id())));
                }
                if v.is_crowd() && !(v.homebound() && v.arrival <= v.spec.end + TIME_EPS) {
                    return Err(self.invariant(format!("crowdshipper {} expired away from its end location", v.id())));
                }
                let v = self.state.vehicles.remove(i);
                self.log.push(Event {
                    epoch: t,
                    vehicle: v.id(),
                    kind: EventKind::Expire,
                    stop: None,
                    x: v.position.x,
                    y: v.position.y,
                    time: v.spec.end,
                    cost: 0.0,
                });
                self.retired.push(v);
            } else {
                i += 1;
            }
        }
        Ok(())
    }

    /// Sends every remaining vehicle to its end location and closes the day.
    pub fn finish(mut self) -> Result<(KpiReport, Vec<Event>, Vec<RequestStatus>, Vec<VehicleState>)> {
        let t = self.state.t;
        for vi in 0..self.state.vehicles.len() {
            if self.state.vehicles[vi].homebound() {
                continue;
            }
            self.send_home(vi, t);
            let v = &self.state.vehicles[vi];
            if v.arrival > v.spec.end + TIME_EPS {
                return Err(self.invariant(format!("vehicle {} cannot reach its end location in time", v.id())));
            }
        }
        self.kpi.routing_cost = self.kpi.travel_cost + self.kpi.crowd_fees;
        self.kpi.total_cost = self.kpi.routing_cost + self.kpi.lateness_charge;
        self.kpi.end_epoch = t;
        let mut vehicles = self.retired;
        vehicles.extend(self.state.vehicles);
        vehicles.sort_by_key(|v| v.id());
        Ok((self.kpi, self.log, self.state.status, vehicles))
    }
}

/// Runs one day under `policy`.
pub fn run_day(
    instance: &Instance,
    policy: &mut dyn Policy,
    travel: &dyn TravelTimes,
    config: CostConfig,
) -> Result<DayResult> {
    let mut sim = Simulator::new(instance, travel, config)?;
    let mut stats = RunStats::default();
    loop {
        let start = Instant::now();
        let action = policy.decide(sim.state());
        let spent = start.elapsed();
        stats.decide_calls += 1;
        stats.decide_total += spent;
        stats.decide_max = stats.decide_max.max(spent);
        sim.apply_action(action)?;
        if sim.finished() {
            break;
        }
        sim.advance()?;
    }
    let (kpi, log, status, vehicles) = sim.finish()?;
    Ok(DayResult {
        kpi,
        log,
        stats,
        status,
        vehicles,
    })
}
