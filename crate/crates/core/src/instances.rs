//! Daily problem instances: request streams and the delivery fleet.
//!
//! Four instance families share one synthetic geography:
//!
//! * `uo`  - homogeneous Poisson arrivals over a 7-hour day, ready 10 and due
//!   40 minutes after arrival.
//! * `nm`  - nonhomogeneous short-deadline arrivals and stationary
//!   long-deadline arrivals over a 10-hour day.
//! * `mto` - `nm` where long-deadline customers order from up to three
//!   businesses at once (n-to-1 bundles).
//! * `otm` - `nm` where a long-deadline request can trigger nearby customers
//!   to order from the same business within 30 minutes (1-to-n bundles).
//!
//! Store and customer locations come from fixed per-family pools so every
//! daily replication sees the same businesses and customers. The short- and
//! long-deadline streams use independent random streams, so `nm`, `mto` and
//! `otm` days generated from the same seed share their short-deadline requests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traveltime::{Geography, Location, Minutes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl RequestId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VehicleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceClass {
    Uo,
    Nm,
    Mto,
    Otm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandLevel {
    Low,
    Medium,
    High,
}

impl DemandLevel {
    pub const ALL: [DemandLevel; 3] = [DemandLevel::Low, DemandLevel::Medium, DemandLevel::High];

    fn index(self) -> usize {
        self as usize
    }
}

impl InstanceClass {
    pub const ALL: [InstanceClass; 4] = [
        InstanceClass::Uo,
        InstanceClass::Nm,
        InstanceClass::Mto,
        InstanceClass::Otm,
    ];

    /// Arrival horizon `T` in minutes.
    pub fn horizon(self) -> Minutes {
        match self {
            InstanceClass::Uo => 420.0,
            _ => 600.0,
        }
    }

    /// Hard end `T_hat` by which every vehicle must be back.
    pub fn hard_end(self) -> Minutes {
        self.horizon() + HARD_END_SLACK
    }
}

impl fmt::Display for InstanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceClass::Uo => "uo",
            InstanceClass::Nm => "nm",
            InstanceClass::Mto => "mto",
            InstanceClass::Otm => "otm",
        })
    }
}

impl FromStr for InstanceClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uo" => Ok(InstanceClass::Uo),
            "nm" => Ok(InstanceClass::Nm),
            "mto" => Ok(InstanceClass::Mto),
            "otm" => Ok(InstanceClass::Otm),
            other => Err(format!(
                "unknown instance class `{other}` (expected uo, nm, mto or otm)"
            )),
        }
    }
}

impl fmt::Display for DemandLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandLevel::Low => "low",
            DemandLevel::Medium => "medium",
            DemandLevel::High => "high",
        })
    }
}

impl FromStr for DemandLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(DemandLevel::Low),
            "medium" => Ok(DemandLevel::Medium),
            "high" => Ok(DemandLevel::High),
            other => Err(format!("unknown demand level `{other}` (expected low, medium or high)")),
        }
    }
}

/// One pickup-and-delivery job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub pickup: Location,
    pub delivery: Location,
    pub arrival: Minutes,
    /// Earliest pickup time `e_r`.
    pub ready: Minutes,
    /// Soft delivery deadline `l_r`.
    pub deadline: Minutes,
    /// Shared by requests generated together as one bundle.
    pub bundle: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Dedicated,
    Crowdshipper,
}

impl fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VehicleKind::Dedicated => "dedicated",
            VehicleKind::Crowdshipper => "crowd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub kind: VehicleKind,
    /// Appearance time `a_m`.
    pub appear: Minutes,
    /// Time `b_m` by which the vehicle must be at `finish`.
    pub end: Minutes,
    pub start: Location,
    pub finish: Location,
}

impl VehicleSpec {
    pub fn is_crowd(&self) -> bool {
        self.kind == VehicleKind::Crowdshipper
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub class: InstanceClass,
    pub level: DemandLevel,
    pub seed: u64,
    pub horizon: Minutes,
    pub hard_end: Minutes,
    /// Sorted by arrival; `requests[i].id == RequestId(i)`.
    pub requests: Vec<Request>,
    /// `fleet[i].id == VehicleId(i)`.
    pub fleet: Vec<VehicleSpec>,
}

impl Instance {
    pub fn request(&self, id: RequestId) -> &Request {
        &self.requests[id.index()]
    }

    pub fn vehicle(&self, id: VehicleId) -> &VehicleSpec {
        &self.fleet[id.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.hard_end > self.horizon) {
            return bad(format!(
                "hard end {} must exceed horizon {}",
                self.hard_end, self.horizon
            ));
        }
        let mut last_arrival = f64::NEG_INFINITY;
        for (i, r) in self.requests.iter().enumerate() {
            if r.id.index() != i {
                return bad(format!("request at position {i} has id {}", r.id));
            }
            if !(r.arrival <= r.ready && r.ready < r.deadline) {
                return bad(format!(
                    "request {}: need arrival <= ready < deadline, got {} / {} / {}",
                    r.id, r.arrival, r.ready, r.deadline
                ));
            }
            if r.arrival < 0.0 || r.arrival > self.horizon {
                return bad(format!(
                    "request {} arrives at {} outside [0, {}]",
                    r.id, r.arrival, self.horizon
                ));
            }
            if r.arrival < last_arrival {
                return bad(format!("request {} is out of arrival order", r.id));
            }
            last_arrival = r.arrival;
        }
        for (i, v) in self.fleet.iter().enumerate() {
            if v.id.index() != i {
                return bad(format!("vehicle at position {i} has id {}", v.id));
            }
            if !(v.appear < v.end) || v.appear < 0.0 {
                return bad(format!(
                    "vehicle {}: need 0 <= appear < end, got {} / {}",
                    v.id, v.appear, v.end
                ));
            }
        }
        if !self
            .fleet
            .iter()
            .any(|v| v.kind == VehicleKind::Dedicated && v.appear == 0.0 && v.end >= self.hard_end)
        {
            return bad("at least one dedicated vehicle must be available from 0 to the hard end".into());
        }
        Ok(())
    }
}

/// `T_hat - T`.
pub const HARD_END_SLACK: Minutes = 600.0;

pub const NM_PICKUP_POOL: usize = 248;
/// The first 110 stores serve short-deadline requests; the other 138 serve
/// long-deadline requests.
pub const SHORT_PICKUPS: usize = 110;
pub const UO_PICKUP_POOL: usize = 110;
pub const DELIVERY_POOL: usize = 32_000;

const NM_POOL_SEED: u64 = 0x4e4d_5f70_6f6f_6c73;
const UO_POOL_SEED: u64 = 0x554f_5f70_6f6f_6c73;

/// Hourly short/long arrival rates (requests per hour) for the 10-hour
/// nonhomogeneous day, indexed `[level][hour] = (short, long)`.
pub const NM_HOURLY_RATES: [[(f64, f64); 10]; 3] = [
    [
        (3.75, 11.25),
        (11.25, 11.25),
        (18.75, 11.25),
        (15.00, 11.25),
        (11.25, 11.25),
        (3.75, 11.25),
        (3.75, 11.25),
        (11.25, 11.25),
        (18.75, 11.25),
        (15.00, 11.25),
    ],
    [
        (5.0, 15.0),
        (15.0, 15.0),
        (25.0, 15.0),
        (20.0, 15.0),
        (15.0, 15.0),
        (5.0, 15.0),
        (5.0, 15.0),
        (15.0, 15.0),
        (25.0, 15.0),
        (20.0, 15.0),
    ],
    [
        (6.25, 18.75),
        (18.75, 18.75),
        (31.25, 18.75),
        (25.00, 18.75),
        (18.75, 18.75),
        (6.25, 18.75),
        (6.25, 18.75),
        (18.75, 18.75),
        (31.25, 18.75),
        (25.00, 18.75),
    ],
];

/// Homogeneous hourly rates of the 7-hour day.
pub const UO_RATES: [f64; 3] = [25.71, 34.29, 42.86];

/// Number of simultaneous requests a long-deadline customer places in the
/// n-to-1 family: P(1), P(2), P(3).
pub const MTO_BUNDLE_PROBS: [f64; 3] = [0.90, 0.075, 0.025];

/// Probability that a long-deadline request belongs to a 1-to-n bundle of
/// size n = 1..=6.
pub const OTM_REQUEST_PROBS: [f64; 6] = [0.782368, 0.192354, 0.023308, 0.001856, 0.000109, 0.000005];

pub const OTM_RADIUS_KM: f64 = 2.414;
pub const OTM_WINDOW_MIN: Minutes = 30.0;

/// Crowdshipper availability: (appear, end, origin lat, origin lon,
/// destination lat, destination lon).
pub const CROWDSHIPPERS: [(f64, f64, f64, f64, f64, f64); 28] = [
    (1.0, 120.0, 41.63562541, -91.51196350, 41.65909800, -91.55525400),
    (60.0, 180.0, 41.63562541, -91.51196354, 41.69834515, -91.58892941),
    (70.0, 310.0, 41.64128623, -91.56508335, 41.65806850, -91.53102480),
    (90.0, 270.0, 41.64885944, -91.55320966, 41.64506561, -91.52355511),
    (115.0, 295.0, 41.71443676, -91.58289955, 41.66152363, -91.47081150),
    (115.0, 355.0, 41.67312935, -91.57551051, 41.72164463, -91.59286545),
    (130.0, 250.0, 41.65001141, -91.46857959, 41.72164463, -91.59286545),
    (135.0, 315.0, 41.63917026, -91.51290389, 41.76164463, -91.69286545),
    (140.0, 320.0, 41.66699952, -91.48110701, 41.63562541, -91.51196354),
    (145.0, 385.0, 41.68153099, -91.57331503, 41.64128623, -91.56508335),
    (160.0, 340.0, 41.67950253, -91.57390402, 41.71443676, -91.58289955),
    (170.0, 350.0, 41.63511630, -91.51468220, 41.67312935, -91.57551051),
    (190.0, 430.0, 41.65263384, -91.58594751, 41.65001141, -91.46857959),
    (220.0, 400.0, 41.65345535, -91.52692116, 41.66699952, -91.48110701),
    (250.0, 370.0, 41.64186230, -91.56777907, 41.63917026, -91.51290389),
    (255.0, 495.0, 41.65787087, -91.46407211, 41.64885944, -91.55320966),
    (300.0, 420.0, 41.70314675, -91.60940027, 41.63583000, -91.51710000),
    (310.0, 390.0, 41.69834515, -91.58892941, 41.66309000, -91.57927000),
    (330.0, 450.0, 41.69986134, -91.56992240, 41.65371000, -91.49574000),
    (360.0, 580.0, 41.65778645, -91.56992240, 41.65529000, -91.53254000),
    (375.0, 535.0, 41.69835544, -91.58876611, 41.65430000, -91.54275000),
    (390.0, 540.0, 41.70713817, -91.58440115, 41.66103000, -91.54609000),
    (420.0, 620.0, 41.61927800, -91.53541100, 41.65157319, -91.48818436),
    (480.0, 630.0, 41.64975200, -91.51395990, 41.66605613, -91.51510378),
    (525.0, 660.0, 41.66704200, -91.53342870, 41.68642773, -91.51032070),
    (555.0, 705.0, 41.64885944, -91.55320966, 41.63202532, -91.50501068),
    (570.0, 720.0, 41.64199910, -91.52728740, 41.69894765, -91.50420625),
    (590.0, 750.0, 41.65911430, -91.54442830, 41.64894115, -91.58800303),
];

const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Equirectangular projection of (lat, lon) pairs to planar km about their
/// centroid, shifted to the centre of the geography and clamped into it.
pub fn project_lat_lon(points: &[(f64, f64)], geography: &Geography) -> Vec<Location> {
    let n = points.len() as f64;
    let lat0 = points.iter().map(|p| p.0).sum::<f64>() / n;
    let lon0 = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cos0 = lat0.to_radians().cos();
    let (cx, cy) = (0.5 * geography.width(), 0.5 * geography.height());
    points
        .iter()
        .map(|&(lat, lon)| {
            let x = EARTH_RADIUS_KM * (lon - lon0).to_radians() * cos0;
            let y = EARTH_RADIUS_KM * (lat - lat0).to_radians();
            geography.clamp(cx + x, cy + y)
        })
        .collect()
}

fn crowdshipper_locations(geography: &Geography) -> Vec<(Location, Location)> {
    let mut points = Vec::with_capacity(2 * CROWDSHIPPERS.len());
    for c in &CROWDSHIPPERS {
        points.push((c.2, c.3));
        points.push((c.4, c.5));
    }
    project_lat_lon(&points, geography)
        .chunks(2)
        .map(|p| (p[0], p[1]))
        .collect()
}

/// Fleet for an instance class: dedicated vehicles at the depot followed by
/// the crowdshippers, numbered from 0.
pub fn build_fleet(class: InstanceClass, geography: &Geography) -> Vec<VehicleSpec> {
    let (dedicated, crowd) = match class {
        InstanceClass::Uo => (3, 22),
        _ => (5, 28),
    };
    let depot = geography.centroid();
    let mut fleet = Vec::with_capacity(dedicated + crowd);
    for i in 0..dedicated {
        fleet.push(VehicleSpec {
            id: VehicleId(i as u32),
            kind: VehicleKind::Dedicated,
            appear: 0.0,
            end: class.hard_end(),
            start: depot,
            finish: depot,
        });
    }
    for (g, (start, finish)) in crowdshipper_locations(geography).into_iter().take(crowd).enumerate() {
        let (appear, end, ..) = CROWDSHIPPERS[g];
        fleet.push(VehicleSpec {
            id: VehicleId((dedicated + g) as u32),
            kind: VehicleKind::Crowdshipper,
            appear,
            end,
            start,
            finish,
        });
    }
    fleet
}

/// Fixed store and customer locations of an instance family.
#[derive(Clone, Debug)]
pub struct LocationPools {
    pub pickups: Vec<Location>,
    pub deliveries: Vec<Location>,
}

impl LocationPools {
    pub fn for_class(class: InstanceClass, geography: &Geography) -> Self {
        let (pickups, seed) = match class {
            InstanceClass::Uo => (UO_PICKUP_POOL, UO_POOL_SEED),
            _ => (NM_PICKUP_POOL, NM_POOL_SEED),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LocationPools {
            pickups: (0..pickups).map(|_| uniform_point(&mut rng, geography)).collect(),
            deliveries: (0..DELIVERY_POOL).map(|_| uniform_point(&mut rng, geography)).collect(),
        }
    }
}

fn uniform_point(rng: &mut impl Rng, geography: &Geography) -> Location {
    let x = rng.gen_range(0.0..geography.width());
    let y = rng.gen_range(0.0..geography.height());
    geography.clamp(x, y)
}

/// Derives an independent stream seed from a day seed.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SHORT_STREAM: u64 = 1;
const LONG_STREAM: u64 = 2;

/// Event times of a Poisson process with piecewise-constant hourly rates,
/// simulated one homogeneous hour at a time.
fn poisson_arrivals(rng: &mut impl Rng, hourly_rates: &[f64]) -> Vec<Minutes> {
    let mut out = Vec::new();
    for (h, &rate) in hourly_rates.iter().enumerate() {
        if rate <= 0.0 {
            continue;
        }
        let per_minute = rate / 60.0;
        let end = 60.0 * (h + 1) as f64;
        let mut t = 60.0 * h as f64;
        loop {
            let u: f64 = rng.gen();
            t += -(1.0 - u).ln() / per_minute;
            if t >= end {
                break;
            }
            out.push(t);
        }
    }
    out
}

/// Continuous event time to the epoch at which it is observed.
fn to_epoch(t: Minutes) -> Minutes {
    t.ceil().max(1.0)
}

fn sample_discrete(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Per-bundle size distribution and mean size of 1-to-n bundles, derived
/// from the per-request membership probabilities.
pub fn otm_bundle_distribution() -> ([f64; 6], f64) {
    let mut q = [0.0; 6];
    for (i, p) in OTM_REQUEST_PROBS.iter().enumerate() {
        q[i] = p / (i + 1) as f64;
    }
    let norm: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= norm);
    (q, 1.0 / norm * OTM_REQUEST_PROBS.iter().sum::<f64>())
}

pub fn mto_mean_bundle_size() -> f64 {
    MTO_BUNDLE_PROBS
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum()
}

struct Draft {
    arrival: Minutes,
    ready_offset: Minutes,
    due_offset: Minutes,
    pickup: Location,
    delivery: Location,
    bundle: Option<u32>,
}

fn finish(
    class: InstanceClass,
    level: DemandLevel,
    seed: u64,
    mut drafts: Vec<Draft>,
    geography: &Geography,
) -> Instance {
    // Stable sort keeps the generation order among equal arrival epochs.
    drafts.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    let requests = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| Request {
            id: RequestId(i as u32),
            pickup: d.pickup,
            delivery: d.delivery,
            arrival: d.arrival,
            ready: d.arrival + d.ready_offset,
            deadline: d.arrival + d.due_offset,
            bundle: d.bundle,
        })
        .collect();
    Instance {
        class,
        level,
        seed,
        horizon: class.horizon(),
        hard_end: class.hard_end(),
        requests,
        fleet: build_fleet(class, geography),
    }
}

const SHORT_OFFSETS: (Minutes, Minutes) = (20.0, 60.0);
const LONG_OFFSETS: (Minutes, Minutes) = (40.0, 120.0);
const UO_OFFSETS: (Minutes, Minutes) = (10.0, 40.0);

fn short_requests(level: DemandLevel, seed: u64, pools: &LocationPools) -> Vec<Draft> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, SHORT_STREAM));
    let rates: Vec<f64> = NM_HOURLY_RATES[level.index()].iter().map(|r| r.0).collect();
    poisson_arrivals(&mut rng, &rates)
        .into_iter()
        .map(|t| Draft {
            arrival: to_epoch(t),
            ready_offset: SHORT_OFFSETS.0,
            due_offset: SHORT_OFFSETS.1,
            pickup: pools.pickups[rng.gen_range(0..SHORT_PICKUPS)],
            delivery: pools.deliveries[rng.gen_range(0..pools.deliveries.len())],
            bundle: None,
        })
        .collect()
}

fn long_rates(level: DemandLevel, thinning: f64) -> Vec<f64> {
    NM_HOURLY_RATES[level.index()].iter().map(|r| r.1 / thinning).collect()
}

fn long_pickup(rng: &mut impl Rng, pools: &LocationPools) -> Location {
    pools.pickups[rng.gen_range(SHORT_PICKUPS..pools.pickups.len())]
}

fn long_draft(arrival: Minutes, pickup: Location, delivery: Location, bundle: Option<u32>) -> Draft {
    Draft {
        arrival,
        ready_offset: LONG_OFFSETS.0,
        due_offset: LONG_OFFSETS.1,
        pickup,
        delivery,
        bundle,
    }
}

/// Nonstationary mixed day.
pub fn generate_nm(level: DemandLevel, seed: u64, geography: &Geography) -> Instance {
    let pools = LocationPools::for_class(InstanceClass::Nm, geography);
    let mut drafts = short_requests(level, seed, &pools);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, LONG_STREAM));
    for t in poisson_arrivals(&mut rng, &long_rates(level, 1.0)) {
        let pickup = long_pickup(&mut rng, &pools);
        let delivery = pools.deliveries[rng.gen_range(0..pools.deliveries.len())];
        drafts.push(long_draft(to_epoch(t), pickup, delivery, None));
    }
    finish(InstanceClass::Nm, level, seed, drafts, geography)
}

/// Homogeneous 7-hour day.
pub fn generate_uo(level: DemandLevel, seed: u64, geography: &Geography) -> Instance {
    let pools = LocationPools::for_class(InstanceClass::Uo, geography);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, SHORT_STREAM));
    let rates = [UO_RATES[level.index()]; 7];
    let drafts = poisson_arrivals(&mut rng, &rates)
        .into_iter()
        .map(|t| Draft {
            arrival: to_epoch(t),
            ready_offset: UO_OFFSETS.0,
            due_offset: UO_OFFSETS.1,
            pickup: pools.pickups[rng.gen_range(0..pools.pickups.len())],
            delivery: pools.deliveries[rng.gen_range(0..pools.deliveries.len())],
            bundle: None,
        })
        .collect();
    finish(InstanceClass::Uo, level, seed, drafts, geography)
}

/// n-to-1 bundles: each long-deadline customer orders from 1-3 distinct
/// stores at once, with a single delivery address.
pub fn generate_mto(level: DemandLevel, seed: u64, geography: &Geography) -> Instance {
    let pools = LocationPools::for_class(InstanceClass::Mto, geography);
    let mut drafts = short_requests(level, seed, &pools);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, LONG_STREAM));
    let long_stores = pools.pickups.len() - SHORT_PICKUPS;
    let mut next_bundle = 0;
    for t in poisson_arrivals(&mut rng, &long_rates(level, mto_mean_bundle_size())) {
        let size = sample_discrete(&mut rng, &MTO_BUNDLE_PROBS) + 1;
        let delivery = pools.deliveries[rng.gen_range(0..pools.deliveries.len())];
        let bundle = (size > 1).then(|| {
            next_bundle += 1;
            next_bundle - 1
        });
        for store in sample(&mut rng, long_stores, size).iter() {
            let pickup = pools.pickups[SHORT_PICKUPS + store];
            drafts.push(long_draft(to_epoch(t), pickup, delivery, bundle));
        }
    }
    finish(InstanceClass::Mto, level, seed, drafts, geography)
}

/// 1-to-n bundles: a long-deadline request triggers up to five more orders
/// from the same store by customers living within `OTM_RADIUS_KM` of each
/// other, arriving within the following 30 minutes.
pub fn generate_otm(level: DemandLevel, seed: u64, geography: &Geography) -> Instance {
    let pools = LocationPools::for_class(InstanceClass::Otm, geography);
    let mut drafts = short_requests(level, seed, &pools);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, LONG_STREAM));
    let (bundle_probs, mean_size) = otm_bundle_distribution();
    let horizon = InstanceClass::Otm.horizon();
    let mut next_bundle = 0;
    for t in poisson_arrivals(&mut rng, &long_rates(level, mean_size)) {
        let size = sample_discrete(&mut rng, &bundle_probs) + 1;
        let pickup = long_pickup(&mut rng, &pools);
        let delivery = pools.deliveries[rng.gen_range(0..pools.deliveries.len())];
        let bundle = (size > 1).then(|| {
            next_bundle += 1;
            next_bundle - 1
        });
        drafts.push(long_draft(to_epoch(t), pickup, delivery, bundle));
        let mut members = vec![delivery];
        for _ in 1..size {
            let lag = OTM_WINDOW_MIN * (1.0 - rng.gen::<f64>());
            let arrival = to_epoch(t + lag).min(horizon);
            let point = neighbour_delivery(&mut rng, &members, geography);
            members.push(point);
            drafts.push(long_draft(arrival, pickup, point, bundle));
        }
    }
    finish(InstanceClass::Otm, level, seed, drafts, geography)
}

/// Uniform point of the disc around the first member, rejected until it is
/// inside the box and within the radius of every member.
fn neighbour_delivery(rng: &mut impl Rng, members: &[Location], geography: &Geography) -> Location {
    let centre = members[0];
    for _ in 0..10_000 {
        let r = OTM_RADIUS_KM * rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let (x, y) = (centre.x + r * phi.cos(), centre.y + r * phi.sin());
        if !geography.contains(x, y) {
            continue;
        }
        let p = geography.clamp(x, y);
        if members.iter().all(|m| m.distance(&p) <= OTM_RADIUS_KM) {
            return p;
        }
    }
    centre
}

pub fn generate(class: InstanceClass, level: DemandLevel, seed: u64, geography: &Geography) -> Instance {
    match class {
        InstanceClass::Uo => generate_uo(level, seed, geography),
        InstanceClass::Nm => generate_nm(level, seed, geography),
        InstanceClass::Mto => generate_mto(level, seed, geography),
        InstanceClass::Otm => generate_otm(level, seed, geography),
    }
}

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

impl Instance {
    /// Line-oriented text encoding:
    ///
    /// ```text
    /// # crowdship instance
    /// version 1
    /// class nm
    /// level low
    /// seed 7
    /// horizon 600
    /// hard_end 1200
    /// requests <n>
    /// R <id> <o_x> <o_y> <d_x> <d_y> <arrival> <ready> <deadline> <bundle|->
    /// vehicles <m>
    /// V <id> <dedicated|crowd> <appear> <end> <start_x> <start_y> <end_x> <end_y>
    /// ```
    ///
    /// Coordinates are km; floats are written in shortest round-trip form.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# crowdship instance");
        let _ = writeln!(s, "version {INSTANCE_FORMAT_VERSION}");
        let _ = writeln!(s, "class {}", self.class);
        let _ = writeln!(s, "level {}", self.level);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "horizon {}", self.horizon);
        let _ = writeln!(s, "hard_end {}", self.hard_end);
        let _ = writeln!(s, "requests {}", self.requests.len());
        for r in &self.requests {
            let bundle = r.bundle.map_or_else(|| "-".to_string(), |b| b.to_string());
            let _ = writeln!(
                s,
                "R {} {} {} {} {} {} {} {} {}",
                r.id, r.pickup.x, r.pickup.y, r.delivery.x, r.delivery.y, r.arrival, r.ready, r.deadline, bundle
            );
        }
        let _ = writeln!(s, "vehicles {}", self.fleet.len());
        for v in &self.fleet {
            let _ = writeln!(
                s,
                "V {} {} {} {} {} {} {} {}",
                v.id, v.kind, v.appear, v.end, v.start.x, v.start.y, v.finish.x, v.finish.y
            );
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path, geography: &Geography) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path, geography)
    }

    pub fn parse(text: &str, path: &Path, geography: &Geography) -> Result<Self> {
        let mut p = Parser {
            path: path.to_path_buf(),
            lines: text
                .lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
                .collect(),
            pos: 0,
            geography,
        };
        let version: u32 = p.header("version")?;
        if version != INSTANCE_FORMAT_VERSION {
            return Err(p.error(p.pos - 1, "version", format!("unsupported version {version}")));
        }
        let class: InstanceClass = p.header("class")?;
        let level: DemandLevel = p.header("level")?;
        let seed: u64 = p.header("seed")?;
        let horizon: f64 = p.header("horizon")?;
        let hard_end: f64 = p.header("hard_end")?;
        let n: usize = p.header("requests")?;
        let mut requests = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, fields) = p.record("R", 9)?;
            let bundle = match fields[8] {
                "-" => None,
                b => Some(p.field(line, "bundle", b)?),
            };
            requests.push(Request {
                id: RequestId(p.field(line, "id", fields[0])?),
                pickup: p.location(line, "pickup", fields[1], fields[2])?,
                delivery: p.location(line, "delivery", fields[3], fields[4])?,
                arrival: p.field(line, "arrival", fields[5])?,
                ready: p.field(line, "ready", fields[6])?,
                deadline: p.field(line, "deadline", fields[7])?,
                bundle,
            });
        }
        let m: usize = p.header("vehicles")?;
        let mut fleet = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, fields) = p.record("V", 8)?;
            let kind = match fields[1] {
                "dedicated" => VehicleKind::Dedicated,
                "crowd" => VehicleKind::Crowdshipper,
                other => return Err(p.error(line, "kind", format!("unknown vehicle kind `{other}`"))),
            };
            fleet.push(VehicleSpec {
                id: VehicleId(p.field(line, "id", fields[0])?),
                kind,
                appear: p.field(line, "appear", fields[2])?,
                end: p.field(line, "end", fields[3])?,
                start: p.location(line, "start", fields[4], fields[5])?,
                finish: p.location(line, "finish", fields[6], fields[7])?,
            });
        }
        if let Some(&(line, _)) = p.lines.get(p.pos) {
            return Err(p.error(line, "-", "unexpected trailing content".into()));
        }
        let instance = Instance {
            class,
            level,
            seed,
            horizon,
            hard_end,
            requests,
            fleet,
        };
        instance.validate()?;
        Ok(instance)
    }
}

struct Parser<'a> {
    path: PathBuf,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    geography: &'a Geography,
}

impl<'a> Parser<'a> {
    fn error(&self, line: usize, field: &str, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            field: field.to_string(),
            message,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self.lines.get(self.pos).copied().ok_or_else(|| {
            let last = self.lines.last().map_or(0, |l| l.0);
            self.error(last, what, "unexpected end of file".into())
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn field<T: FromStr>(&self, line: usize, name: &str, raw: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        raw.parse()
            .map_err(|e| self.error(line, name, format!("cannot parse `{raw}`: {e}")))
    }

    fn header<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let (line, text) = self.next_line(key)?;
        let mut parts = text.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => self.field(line, key, v),
            _ => Err(self.error(line, key, format!("expected `{key} <value>`, found `{text}`"))),
        }
    }

    fn record(&mut self, tag: &str, arity: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line, text) = self.next_line(tag)?;
        let mut parts = text.split_whitespace();
        if parts.next() != Some(tag) {
            return Err(self.error(line, tag, format!("expected a `{tag}` record, found `{text}`")));
        }
        let fields: Vec<&str> = parts.collect();
        if fields.len() != arity {
            return Err(self.error(line, tag, format!("expected {arity} fields, found {}", fields.len())));
        }
        Ok((line, fields))
    }

    fn location(&self, line: usize, name: &str, x: &str, y: &str) -> Result<Location> {
        let x: f64 = self.field(line, name, x)?;
        let y: f64 = self.field(line, name, y)?;
        self.geography
            .locate(x, y)
            .map_err(|_| self.error(line, name, format!("({x}, {y}) lies outside the service area")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traveltime::TravelTimeModel;

    fn geo() -> Geography {
        TravelTimeModel::default_model().geography().clone()
    }

    #[test]
    fn nm_rate_table_spot_values() {
        assert_eq!(NM_HOURLY_RATES[0][0], (3.75, 11.25));
        let daily: f64 = NM_HOURLY_RATES[0].iter().map(|r| r.0 + r.1).sum();
        assert!((daily - 225.0).abs() < 1e-9);
        for level in 0..3 {
            let short: f64 = NM_HOURLY_RATES[level].iter().map(|r| r.0).sum();
            let long: f64 = NM_HOURLY_RATES[level].iter().map(|r| r.1).sum();
            assert!((short - long).abs() < 1e-9, "50/50 mix at level {level}");
        }
    }

    #[test]
    fn bundle_tables_are_normalised() {
        assert!((MTO_BUNDLE_PROBS.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((OTM_REQUEST_PROBS.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        let (q, mean) = otm_bundle_distribution();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Sum_n n q_n is the mean bundle size.
        let m: f64 = q.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        assert!((m - mean).abs() < 1e-9);
    }

    #[test]
    fn fleet_matches_crowdshipper_table() {
        let g = geo();
        let fleet = build_fleet(InstanceClass::Nm, &g);
        assert_eq!(fleet.len(), 33);
        let crowd: Vec<_> = fleet.iter().filter(|v| v.is_crowd()).collect();
        assert_eq!(crowd.len(), 28);
        assert_eq!((crowd[0].appear, crowd[0].end), (1.0, 120.0));
        assert_eq!((crowd[27].appear, crowd[27].end), (590.0, 750.0));
        for v in fleet.iter().filter(|v| !v.is_crowd()) {
            assert_eq!(v.appear, 0.0);
            assert_eq!(v.start, g.centroid());
            assert_eq!(v.finish, g.centroid());
        }
        for v in &crowd {
            let span = v.end - v.appear;
            assert!((60.0..=240.0).contains(&span), "window {span}");
        }
        let uo = build_fleet(InstanceClass::Uo, &g);
        assert_eq!(uo.iter().filter(|v| !v.is_crowd()).count(), 3);
        assert_eq!(uo.iter().filter(|v| v.is_crowd()).count(), 22);
        // UO crowdshippers are the first 22 table entries at the same places.
        assert_eq!(uo[3].start, fleet[5].start);
        assert_eq!(uo[24].finish, fleet[26].finish);
    }

    #[test]
    fn offsets_hold_for_every_family() {
        let g = geo();
        for class in InstanceClass::ALL {
            for level in DemandLevel::ALL {
                let inst = generate(class, level, 11, &g);
                inst.validate().unwrap();
                for r in &inst.requests {
                    let (ready, due) = (r.ready - r.arrival, r.deadline - r.arrival);
                    let ok = match class {
                        InstanceClass::Uo => (ready, due) == UO_OFFSETS,
                        _ => (ready, due) == SHORT_OFFSETS || (ready, due) == LONG_OFFSETS,
                    };
                    assert!(ok, "{class} {level}: offsets {ready}/{due}");
                    if class == InstanceClass::Uo {
                        assert_eq!(r.deadline - r.ready, 30.0);
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = geo();
        assert_eq!(
            generate_otm(DemandLevel::Medium, 5, &g),
            generate_otm(DemandLevel::Medium, 5, &g)
        );
        assert_ne!(
            generate_nm(DemandLevel::Medium, 5, &g),
            generate_nm(DemandLevel::Medium, 6, &g)
        );
    }

    #[test]
    fn bundled_families_share_short_requests() {
        let g = geo();
        let short = |i: &Instance| -> Vec<(f64, f64, f64)> {
            i.requests
                .iter()
                .filter(|r| r.deadline - r.arrival == 60.0)
                .map(|r| (r.arrival, r.pickup.x, r.delivery.y))
                .collect()
        };
        let nm = generate_nm(DemandLevel::Low, 3, &g);
        assert_eq!(short(&nm), short(&generate_mto(DemandLevel::Low, 3, &g)));
        assert_eq!(short(&nm), short(&generate_otm(DemandLevel::Low, 3, &g)));
    }

    #[test]
    fn mto_bundles_share_arrival_and_delivery() {
        let g = geo();
        let inst = generate_mto(DemandLevel::High, 9, &g);
        let mut by_bundle = std::collections::BTreeMap::<u32, Vec<&Request>>::new();
        for r in &inst.requests {
            if let Some(b) = r.bundle {
                by_bundle.entry(b).or_default().push(r);
            }
        }
        assert!(!by_bundle.is_empty());
        for members in by_bundle.values() {
            assert!((2..=3).contains(&members.len()));
            for m in members {
                assert_eq!(m.arrival, members[0].arrival);
                assert_eq!(m.delivery, members[0].delivery);
                assert_eq!(m.deadline - m.arrival, 120.0);
            }
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    assert_ne!(a.pickup, b.pickup);
                }
            }
        }
    }

    #[test]
    fn otm_bundles_share_store_and_stay_close() {
        let g = geo();
        for seed in 0..5 {
            let inst = generate_otm(DemandLevel::High, seed, &g);
            let mut by_bundle = std::collections::BTreeMap::<u32, Vec<&Request>>::new();
            for r in &inst.requests {
                if let Some(b) = r.bundle {
                    by_bundle.entry(b).or_default().push(r);
                }
            }
            for members in by_bundle.values() {
                let first = members.iter().map(|m| m.arrival).fold(f64::INFINITY, f64::min);
                for a in members {
                    assert_eq!(a.pickup, members[0].pickup);
                    assert!(a.arrival - first <= OTM_WINDOW_MIN);
                    for b in members.iter() {
                        assert!(a.delivery.distance(&b.delivery) <= OTM_RADIUS_KM + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let g = geo();
        let dir = tempfile::tempdir().unwrap();
        for class in InstanceClass::ALL {
            let inst = generate(class, DemandLevel::Low, 21, &g);
            let path = dir.path().join(format!("{class}.inst"));
            inst.save(&path).unwrap();
            assert_eq!(Instance::load(&path, &g).unwrap(), inst);
        }
    }

    #[test]
    fn empty_day_is_valid() {
        let g = geo();
        let mut inst = generate_nm(DemandLevel::Low, 1, &g);
        inst.requests.clear();
        let back = Instance::parse(&inst.to_text(), Path::new("empty"), &g).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn parse_rejects_bad_windows_and_reports_lines() {
        let g = geo();
        let inst = generate_nm(DemandLevel::Low, 1, &g);
        let text = inst.to_text();
        // Make the first request's ready time equal its deadline.
        let r = &inst.requests[0];
        let line = text.lines().find(|l| l.starts_with("R 0 ")).unwrap();
        let broken = line.replace(
            &format!(" {} {} ", r.ready, r.deadline),
            &format!(" {} {} ", r.deadline, r.deadline),
        );
        let err = Instance::parse(&text.replace(line, &broken), Path::new("x"), &g).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");

        let garbled = text.replacen("seed 1", "seed one", 1);
        match Instance::parse(&garbled, Path::new("x"), &g).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 5);
                assert_eq!(field, "seed");
            }
            other => panic!("unexpected {other}"),
        }
        let short = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            Instance::parse(&short, Path::new("x"), &g).unwrap_err(),
            Error::Parse { .. }
        ));
    }
}
