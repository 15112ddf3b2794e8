//! Time- and region-dependent travel times.
//!
//! The service area is a rectangular box tiled by a grid of regions. Each
//! region has a piecewise-constant speed profile over the day. A trip whose
//! straight line crosses several regions moves at the area-weighted mean of
//! their speeds, and a trip that spans a period boundary consumes each period
//! at that period's speed.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes from the start of the operating day.
pub type Minutes = f64;

/// Average network speed (km/min) used by the average-travel-time planner and
/// by request relatedness: 0.4333... km/min.
pub const AVERAGE_SPEED_KM_PER_MIN: f64 = 13.0 / 30.0;

const SEGMENT_EPS: f64 = 1e-12;

/// Grids up to this many regions get a precomputed blend table.
const TABLE_REGIONS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u8);

impl RegionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A point of the planar service area, in kilometres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
    pub region: RegionId,
}

impl Location {
    pub fn distance(&self, other: &Location) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn same_point(&self, other: &Location) -> bool {
        self.x == other.x && self.y == other.y
    }
}

/// Bit set of regions; grids are limited to 64 cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct RegionSet(u64);

impl RegionSet {
    pub fn single(r: RegionId) -> Self {
        RegionSet(1 << r.0)
    }

    pub fn insert(&mut self, r: RegionId) {
        self.0 |= 1 << r.0;
    }

    pub fn contains(self, r: RegionId) -> bool {
        self.0 & (1 << r.0) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = RegionId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros();
                bits &= bits - 1;
                Some(RegionId(i as u8))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: RegionId,
    pub label: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn centroid(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Length (as a fraction of the segment parameter) of the part of
    /// `a -> b` inside this closed rectangle. Liang-Barsky clipping.
    #[cfg(test)]
    fn clip_fraction(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for (p, q) in [
            (-dx, a.0 - self.x0),
            (dx, self.x1 - a.0),
            (-dy, a.1 - self.y0),
            (dy, self.y1 - a.1),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return 0.0;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    lo = lo.max(r);
                } else {
                    hi = hi.min(r);
                }
            }
        }
        (hi - lo).max(0.0)
    }
}

/// A rectangular grid of regions over `[0, width] x [0, height]`, labelled
/// row-major starting at the south-west corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Geography {
    width: f64,
    height: f64,
    columns: usize,
    rows: usize,
    regions: Vec<Region>,
    /// Vertical grid lines, `columns + 1` of them, then horizontal ones.
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Geography {
    pub fn grid(width: f64, height: f64, columns: usize, rows: usize, labels: &[String]) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Config(format!(
                "box must have positive finite size, got {width} x {height}"
            )));
        }
        let n = columns * rows;
        if n == 0 || n > 64 {
            return Err(Error::Config(format!("grid must have between 1 and 64 cells, got {n}")));
        }
        if labels.len() != n {
            return Err(Error::Config(format!("{} labels given for {n} regions", labels.len())));
        }
        let cw = width / columns as f64;
        let ch = height / rows as f64;
        let mut regions = Vec::with_capacity(n);
        for row in 0..rows {
            for col in 0..columns {
                let id = row * columns + col;
                regions.push(Region {
                    id: RegionId(id as u8),
                    label: labels[id].clone(),
                    x0: col as f64 * cw,
                    y0: row as f64 * ch,
                    x1: if col + 1 == columns {
                        width
                    } else {
                        (col + 1) as f64 * cw
                    },
                    y1: if row + 1 == rows { height } else { (row + 1) as f64 * ch },
                });
            }
        }
        let xs = (0..=columns)
            .map(|c| if c == columns { width } else { c as f64 * cw })
            .collect();
        let ys = (0..=rows)
            .map(|r| if r == rows { height } else { r as f64 * ch })
            .collect();
        Ok(Geography {
            width,
            height,
            columns,
            rows,
            regions,
            xs,
            ys,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, id: RegionId) -> Option<&Region> {
        self.regions.get(id.index())
    }

    pub fn region_by_label(&self, label: &str) -> Option<RegionId> {
        self.regions.iter().find(|r| r.label == label).map(|r| r.id)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.height).contains(&y)
    }

    /// Point-in-region on half-open cells; the far edges of the box belong to
    /// the last row/column.
    pub fn region_of(&self, x: f64, y: f64) -> Option<RegionId> {
        if !self.contains(x, y) {
            return None;
        }
        let col = ((x / self.width * self.columns as f64) as usize).min(self.columns - 1);
        let row = ((y / self.height * self.rows as f64) as usize).min(self.rows - 1);
        Some(RegionId((row * self.columns + col) as u8))
    }

    pub fn locate(&self, x: f64, y: f64) -> Result<Location> {
        let region = self
            .region_of(x, y)
            .ok_or_else(|| Error::Validation(format!("point ({x}, {y}) lies outside the service area")))?;
        Ok(Location { x, y, region })
    }

    pub fn clamp(&self, x: f64, y: f64) -> Location {
        let x = x.clamp(0.0, self.width);
        let y = y.clamp(0.0, self.height);
        self.locate(x, y).expect("clamped point lies inside the box")
    }

    pub fn centroid(&self) -> Location {
        self.clamp(0.5 * self.width, 0.5 * self.height)
    }

    /// Regions with a positive-length intersection with the segment `a -> b`.
    /// A degenerate segment yields the region of its point.
    pub fn regions_crossed(&self, a: (f64, f64), b: (f64, f64)) -> RegionSet {
        let mut set = RegionSet::default();
        if a == b {
            if let Some(r) = self.region_of(a.0, a.1) {
                set.insert(r);
            }
            return set;
        }
        let (xmin, xmax) = (a.0.min(b.0), a.0.max(b.0));
        let (ymin, ymax) = (a.1.min(b.1), a.1.max(b.1));
        // Column and row ranges whose closed slabs meet the bounding box.
        let c0 = self.xs[1..].partition_point(|&x| x < xmin);
        let c1 = self.xs[..self.columns].partition_point(|&x| x <= xmax);
        let r0 = self.ys[1..].partition_point(|&y| y < ymin);
        let r1 = self.ys[..self.rows].partition_point(|&y| y <= ymax);
        if c1 == c0 + 1 && r1 == r0 + 1 {
            set.insert(RegionId((r0 * self.columns + c0) as u8));
            return set;
        }
        // Parameter interval of the segment inside each column and row; a
        // cell's share is the overlap of its column and row intervals.
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        for row in r0..r1 {
            let (rlo, rhi) = slab_interval(self.ys[row], self.ys[row + 1], a.1, dy);
            if rhi - rlo <= SEGMENT_EPS {
                continue;
            }
            for col in c0..c1 {
                let (clo, chi) = slab_interval(self.xs[col], self.xs[col + 1], a.0, dx);
                let lo = f64::max(clo, rlo);
                let hi = f64::min(chi, rhi);
                if (hi - lo).max(0.0) > SEGMENT_EPS {
                    set.insert(RegionId((row * self.columns + col) as u8));
                }
            }
        }
        if set.is_empty() {
            if let Some(r) = self.region_of(a.0, a.1) {
                set.insert(r);
            }
        }
        set
    }
}

/// Clipped parameter range of `a + s * d`, `s` in `[0, 1]`, within the slab
/// `[x0, x1]`; empty ranges come back with `lo > hi`.
#[inline]
fn slab_interval(x0: f64, x1: f64, a: f64, d: f64) -> (f64, f64) {
    if d == 0.0 {
        if a - x0 < 0.0 || x1 - a < 0.0 {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else if d > 0.0 {
        (f64::max(0.0, (x0 - a) / d), f64::min(1.0, (x1 - a) / d))
    } else {
        (f64::max(0.0, (x1 - a) / d), f64::min(1.0, (x0 - a) / d))
    }
}

/// Piecewise-constant speeds per region and period.
///
/// Period `w` covers `[boundaries[w], boundaries[w + 1])`; the last period is
/// open-ended so trips past the final boundary keep its speeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfile {
    boundaries: Vec<Minutes>,
    /// `speeds[region][period]` in km/min.
    speeds: Vec<Vec<f64>>,
    areas: Vec<f64>,
    /// `blend` for every region subset, indexed `set * periods + w`; only
    /// built for small grids.
    table: Vec<f64>,
}

impl SpeedProfile {
    /// `period_starts[0]` must be 0 and the list strictly increasing.
    pub fn new(period_starts: Vec<Minutes>, speeds: Vec<Vec<f64>>, areas: Vec<f64>) -> Result<Self> {
        if period_starts.first() != Some(&0.0) {
            return Err(Error::Config("the first period must start at minute 0".into()));
        }
        if period_starts.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Config(
                "period starts must be finite and strictly increasing".into(),
            ));
        }
        if speeds.len() != areas.len() {
            return Err(Error::Config(format!(
                "{} speed rows but {} region areas",
                speeds.len(),
                areas.len()
            )));
        }
        for (r, row) in speeds.iter().enumerate() {
            if row.len() != period_starts.len() {
                return Err(Error::Config(format!(
                    "region {r} has {} speeds for {} periods",
                    row.len(),
                    period_starts.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("region {r} has non-positive speed {v}")));
            }
        }
        if let Some(a) = areas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("region area must be positive, got {a}")));
        }
        let mut profile = SpeedProfile {
            boundaries: period_starts,
            speeds,
            areas,
            table: Vec::new(),
        };
        let n = profile.speeds.len();
        if n <= TABLE_REGIONS {
            let periods = profile.period_count();
            let mut table = vec![f64::NAN; (1usize << n) * periods];
            for bits in 1..1u64 << n {
                for w in 0..periods {
                    table[bits as usize * periods + w] = profile.blend_direct(RegionSet(bits), w);
                }
            }
            profile.table = table;
        }
        Ok(profile)
    }

    pub fn period_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn region_count(&self) -> usize {
        self.speeds.len()
    }

    pub fn period_starts(&self) -> &[Minutes] {
        &self.boundaries
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn speed(&self, region: RegionId, period: usize) -> f64 {
        self.speeds[region.index()][period]
    }

    #[inline]
    pub fn period_at(&self, t: Minutes) -> usize {
        let b = &self.boundaries;
        let mut w = 0;
        while w + 1 < b.len() && b[w + 1] <= t {
            w += 1;
        }
        w
    }

    /// End of period `w`, `+inf` for the last one.
    pub fn period_end(&self, w: usize) -> Minutes {
        self.boundaries.get(w + 1).copied().unwrap_or(f64::INFINITY)
    }

    /// Area-weighted mean speed of `set` in period `w`. A single region
    /// returns its own speed exactly.
    #[inline]
    pub fn blend(&self, set: RegionSet, w: usize) -> f64 {
        if !self.table.is_empty() {
            let v = self.table[set.0 as usize * self.boundaries.len() + w];
            debug_assert!(!v.is_nan(), "blend over an empty region set");
            return v;
        }
        self.blend_direct(set, w)
    }

    fn blend_direct(&self, set: RegionSet, w: usize) -> f64 {
        let mut it = set.iter();
        let first = it.next().expect("blend over an empty region set");
        if set.len() == 1 {
            return self.speed(first, w);
        }
        let mut weighted = 0.0;
        let mut total = 0.0;
        for r in set.iter() {
            let a = self.areas[r.index()];
            weighted += a * self.speed(r, w);
            total += a;
        }
        weighted / total
    }
}

/// Which segment decides the set of regions a trip crosses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendPath {
    /// The segment between the two actual locations.
    #[default]
    Endpoints,
    /// The segment between the centroids of the two regions.
    Centroids,
}

/// Anything that can quote a travel time for a departure.
pub trait TravelTimes: Sync {
    fn travel_time(&self, from: &Location, to: &Location, depart: Minutes) -> Minutes;
}

/// Time-dependent travel times over a [`Geography`] and [`SpeedProfile`].
/// Immutable once built.
#[derive(Clone, Debug)]
pub struct TravelTimeModel {
    geography: Geography,
    profile: SpeedProfile,
    path: BlendPath,
    /// Tags this model's entries in the per-thread region-set cache.
    id: u64,
}

impl PartialEq for TravelTimeModel {
    fn eq(&self, other: &Self) -> bool {
        self.geography == other.geography && self.profile == other.profile && self.path == other.path
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

const REGION_CACHE_SLOTS: usize = 1 << 12;

#[derive(Clone, Copy)]
struct CachedTrip {
    key: [u64; 5],
    set: RegionSet,
}

thread_local! {
    static REGION_CACHE: RefCell<[CachedTrip; REGION_CACHE_SLOTS]> = const {
        RefCell::new([CachedTrip { key: [0; 5], set: RegionSet(0) }; REGION_CACHE_SLOTS])
    };
}

impl TravelTimeModel {
    pub fn new(geography: Geography, profile: SpeedProfile, path: BlendPath) -> Result<Self> {
        if geography.regions().len() != profile.region_count() {
            return Err(Error::Config(format!(
                "geography has {} regions but the speed profile has {}",
                geography.regions().len(),
                profile.region_count()
            )));
        }
        Ok(TravelTimeModel {
            geography,
            profile,
            path,
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn geography(&self) -> &Geography {
        &self.geography
    }

    pub fn profile(&self) -> &SpeedProfile {
        &self.profile
    }

    pub fn blend_path(&self) -> BlendPath {
        self.path
    }

    /// Blended speed between two regions in period `w`, using the segment
    /// between the region centroids.
    pub fn blended_speed(&self, from: RegionId, to: RegionId, w: usize) -> Result<f64> {
        let a = self
            .geography
            .region(from)
            .ok_or_else(|| Error::Config(format!("unknown region {}", from.0)))?;
        let b = self
            .geography
            .region(to)
            .ok_or_else(|| Error::Config(format!("unknown region {}", to.0)))?;
        if w >= self.profile.period_count() {
            return Err(Error::Config(format!("unknown period {w}")));
        }
        if from == to {
            return Ok(self.profile.speed(from, w));
        }
        let set = self.geography.regions_crossed(a.centroid(), b.centroid());
        Ok(self.profile.blend(set, w))
    }

    /// Regions whose speeds govern a trip from `i` to `j`.
    pub fn trip_regions(&self, i: &Location, j: &Location) -> RegionSet {
        if self.path == BlendPath::Endpoints {
            let key = [self.id, i.x.to_bits(), i.y.to_bits(), j.x.to_bits(), j.y.to_bits()];
            let mut h = 0xcbf2_9ce4_8422_2325_u64;
            for k in key {
                h = (h ^ k).wrapping_mul(0x0100_0000_01b3).rotate_left(29);
            }
            let slot = (h as usize) & (REGION_CACHE_SLOTS - 1);
            return REGION_CACHE.with(|cache| {
                let mut cache = cache.borrow_mut();
                let entry = &mut cache[slot];
                if !entry.key.iter().zip(&key).all(|(a, b)| a == b) {
                    *entry = CachedTrip {
                        key,
                        set: self.geography.regions_crossed((i.x, i.y), (j.x, j.y)),
                    };
                }
                entry.set
            });
        }
        if i.region == j.region && self.path == BlendPath::Centroids {
            return RegionSet::single(i.region);
        }
        match self.path {
            BlendPath::Endpoints => self.geography.regions_crossed((i.x, i.y), (j.x, j.y)),
            BlendPath::Centroids => {
                let a = self.geography.regions[i.region.index()].centroid();
                let b = self.geography.regions[j.region.index()].centroid();
                self.geography.regions_crossed(a, b)
            }
        }
    }

    /// Duration to cover the straight-line distance from `i` to `j` when
    /// departing at `t`, consuming each period at its (blended) speed.
    pub fn travel_time(&self, i: &Location, j: &Location, t: Minutes) -> Minutes {
        let distance = i.distance(j);
        if distance == 0.0 {
            return 0.0;
        }
        let set = self.trip_regions(i, j);
        let bounds = &self.profile.boundaries;
        let mut w = self.profile.period_at(t);
        let mut clock = t;
        let mut remaining = distance;
        let mut elapsed = 0.0;
        loop {
            let v = self.profile.blend(set, w);
            let needed = remaining / v;
            let Some(&next) = bounds.get(w + 1) else {
                return elapsed + needed;
            };
            let available = next - clock;
            if needed <= available {
                return elapsed + needed;
            }
            elapsed += available;
            remaining -= available * v;
            clock = next;
            w += 1;
        }
    }

    /// Planning-time baseline: distance over the network average speed.
    pub fn average_travel_time(&self, i: &Location, j: &Location) -> Minutes {
        average_travel_time(i, j)
    }

    /// Builds the model from the structured text schema documented on
    /// [`SpeedProfileConfig`].
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SpeedProfileConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("speed profile: {e}")))?;
        config.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading speed profile {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// The shipped default: an 8-region 4x2 grid over a 20 km x 10 km box
    /// with the four-period speed table.
    pub fn default_model() -> Self {
        Self::from_toml(DEFAULT_PROFILE).expect("bundled speed profile is valid")
    }
}

impl TravelTimes for TravelTimeModel {
    fn travel_time(&self, from: &Location, to: &Location, depart: Minutes) -> Minutes {
        TravelTimeModel::travel_time(self, from, to, depart)
    }
}

pub fn average_travel_time(i: &Location, j: &Location) -> Minutes {
    i.distance(j) / AVERAGE_SPEED_KM_PER_MIN
}

/// Constant-speed travel times at [`AVERAGE_SPEED_KM_PER_MIN`].
#[derive(Clone, Copy, Debug, Default)]
pub struct AverageSpeed;

impl TravelTimes for AverageSpeed {
    fn travel_time(&self, from: &Location, to: &Location, _depart: Minutes) -> Minutes {
        average_travel_time(from, to)
    }
}

/// The bundled default speed profile.
pub const DEFAULT_PROFILE: &str = include_str!("../data/speed_profile.toml");

/// On-disk schema of a speed profile and its geography.
///
/// ```toml
/// version = 1
/// blend = "endpoints"          # or "centroids"
///
/// [geography]
/// width_km = 20.0
/// height_km = 10.0
/// columns = 4
/// rows = 2
/// labels = ["A", "B", "C", "D", "E", "F", "G", "H"]
/// # areas_km2 = { A = 25.0, ... }   optional, defaults to the cell areas
///
/// [[period]]
/// start = 0.0
/// end = 120.0                  # the last period's end is optional
///
/// [speeds]                     # km/min, one entry per period
/// A = [0.25, 0.40, 0.25, 0.40]
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedProfileConfig {
    pub version: u32,
    #[serde(default)]
    pub blend: BlendPath,
    pub geography: GeographyConfig,
    pub period: Vec<PeriodConfig>,
    pub speeds: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeographyConfig {
    pub width_km: f64,
    pub height_km: f64,
    pub columns: usize,
    pub rows: usize,
    pub labels: Vec<String>,
    #[serde(default)]
    pub areas_km2: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
}

impl SpeedProfileConfig {
    pub fn build(&self) -> Result<TravelTimeModel> {
        if self.version != 1 {
            return Err(Error::Config(format!(
                "unsupported speed profile version {}",
                self.version
            )));
        }
        let g = &self.geography;
        let geography = Geography::grid(g.width_km, g.height_km, g.columns, g.rows, &g.labels)?;
        for (i, p) in self.period.iter().enumerate() {
            match (p.end, self.period.get(i + 1)) {
                (Some(end), Some(next)) if end != next.start => {
                    return Err(Error::Config(format!(
                        "period {i} ends at {end} but period {} starts at {}",
                        i + 1,
                        next.start
                    )))
                }
                (None, Some(_)) => return Err(Error::Config(format!("period {i} needs an end"))),
                (Some(end), _) if !(end > p.start) => return Err(Error::Config(format!("period {i} is empty"))),
                _ => {}
            }
        }
        let starts: Vec<f64> = self.period.iter().map(|p| p.start).collect();
        for label in self.speeds.keys() {
            if geography.region_by_label(label).is_none() {
                return Err(Error::Config(format!("speeds given for unknown region `{label}`")));
            }
        }
        let mut speeds = Vec::new();
        let mut areas = Vec::new();
        for region in geography.regions() {
            let row = self
                .speeds
                .get(&region.label)
                .ok_or_else(|| Error::Config(format!("no speeds for region `{}`", region.label)))?;
            speeds.push(row.clone());
            let area = match &g.areas_km2 {
                Some(map) => *map
                    .get(&region.label)
                    .ok_or_else(|| Error::Config(format!("no area for region `{}`", region.label)))?,
                None => region.area(),
            };
            areas.push(area);
        }
        if let Some(map) = &g.areas_km2 {
            if map.len() != areas.len() {
                return Err(Error::Config("areas given for unknown regions".into()));
            }
        }
        let profile = SpeedProfile::new(starts, speeds, areas)?;
        TravelTimeModel::new(geography, profile, self.blend)
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
