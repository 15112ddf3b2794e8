//! Replicated experiments over generated days: paired policy runs, KPI
//! summaries, percent-reduction comparisons, confidence intervals and
//! parameter tuning.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, Max, Median, Min, Statistics};

use crate::error::{Error, Result};
use crate::instances::{generate, DemandLevel, InstanceClass};
use crate::mdp::{run_day, CostConfig, KpiReport};
use crate::policies::{PolicyKind, PolicySpec};
use crate::traveltime::TravelTimeModel;

/// Schema version written at the top of results files.
pub const RESULTS_VERSION: u32 = 1;
/// Schema version written at the top of summary files.
pub const SUMMARY_VERSION: u32 = 1;

/// One policy configuration run on every replication of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub policy: PolicySpec,
    pub config: CostConfig,
    /// Instance family for this variant; the plan's class when unset.
    pub class: Option<InstanceClass>,
}

impl Variant {
    pub fn new(name: impl Into<String>, policy: PolicySpec) -> Self {
        Variant {
            name: name.into(),
            policy,
            config: CostConfig::default(),
            class: None,
        }
    }

    pub fn drace() -> Self {
        Variant::new("drace", PolicySpec::new(PolicyKind::Drace))
    }

    pub fn myopic() -> Self {
        Variant::new("myopic", PolicySpec::new(PolicyKind::Myopic))
    }

    /// The same variant with strategic waiting switched off.
    pub fn without_strategic_wait(mut self) -> Self {
        self.name.push_str("-eta0");
        self.config.eta = 0.0;
        self
    }

    /// The same variant planning with average-speed travel times.
    pub fn with_average_planning(mut self) -> Self {
        self.name.push_str("-avg");
        self.policy.average_planning = true;
        self
    }

    /// The same variant on another instance family, paired by seed.
    pub fn on_class(mut self, class: InstanceClass) -> Self {
        self.name = format!("{}-{class}", self.name);
        self.class = Some(class);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub class: InstanceClass,
    pub level: DemandLevel,
    pub replications: usize,
    /// Replication `i` uses instance seed `seed_base + i`.
    pub seed_base: u64,
    pub variants: Vec<Variant>,
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
}

impl ExperimentPlan {
    pub fn new(class: InstanceClass, level: DemandLevel, replications: usize) -> Self {
        ExperimentPlan {
            class,
            level,
            replications,
            seed_base: 1,
            variants: Vec::new(),
            jobs: 1,
        }
    }

    pub fn with_variants(mut self, variants: impl IntoIterator<Item = Variant>) -> Self {
        self.variants.extend(variants);
        self
    }

    pub fn seed(&self, replication: usize) -> u64 {
        self.seed_base + replication as u64
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.variants.iter().enumerate() {
            if v.name.is_empty() || v.name.contains(',') {
                return Err(Error::Usage(format!(
                    "variant name `{}` must be nonempty and free of commas",
                    v.name
                )));
            }
            if self.variants[..i].iter().any(|u| u.name == v.name) {
                return Err(Error::Usage(format!("variant `{}` appears twice", v.name)));
            }
            v.config.validate()?;
            v.policy.alns.validate()?;
        }
        Ok(())
    }
}

/// KPIs of one day under one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replication: usize,
    pub seed: u64,
    pub variant: String,
    pub class: InstanceClass,
    pub level: DemandLevel,
    pub total_cost: f64,
    pub routing_cost: f64,
    pub travel_cost: f64,
    pub crowd_fees: f64,
    pub lateness_charge: f64,
    pub delayed_requests: u32,
    pub total_delay: f64,
    pub crowd_served: u32,
    pub dedicated_served: u32,
    pub requests: u32,
}

impl ResultRow {
    fn new(
        replication: usize,
        seed: u64,
        variant: &str,
        class: InstanceClass,
        level: DemandLevel,
        kpi: &KpiReport,
    ) -> Self {
        ResultRow {
            replication,
            seed,
            variant: variant.to_string(),
            class,
            level,
            total_cost: kpi.total_cost,
            routing_cost: kpi.routing_cost,
            travel_cost: kpi.travel_cost,
            crowd_fees: kpi.crowd_fees,
            lateness_charge: kpi.lateness_charge,
            delayed_requests: kpi.delayed_requests,
            total_delay: kpi.total_delay,
            crowd_served: kpi.crowd_served,
            dedicated_served: kpi.dedicated_served,
            requests: kpi.requests,
        }
    }

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
pub struct ExperimentResults {
    /// Ordered by replication, then by the plan's variant order.
    pub rows: Vec<ResultRow>,
    /// Slowest decision of each row's day. Not persisted.
    pub decide_max: Vec<Duration>,
}

impl ExperimentResults {
    /// Rows of one variant in replication order.
    pub fn variant(&self, name: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.variant == name).collect()
    }

    pub fn variant_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.variant) {
                names.push(r.variant.clone());
            }
        }
        names
    }
}

/// Runs every variant on every replication. All variants of replication
/// `i` see the same seed, so the same requests and crowdshippers (the
/// instance family may differ per variant).
pub fn run_experiment(plan: &ExperimentPlan, travel: &TravelTimeModel) -> Result<ExperimentResults> {
    plan.validate()?;
    let tasks: Vec<(usize, usize)> = (0..plan.replications)
        .flat_map(|rep| (0..plan.variants.len()).map(move |vi| (rep, vi)))
        .collect();
    let run = |&(rep, vi): &(usize, usize)| -> Result<(ResultRow, Duration)> {
        let variant = &plan.variants[vi];
        let seed = plan.seed(rep);
        let class = variant.class.unwrap_or(plan.class);
        let instance = generate(class, plan.level, seed, travel.geography());
        let mut policy = variant.policy.build(seed);
        let day = run_day(&instance, policy.as_mut(), travel, variant.config).map_err(|e| Error::Replication {
            seed,
            variant: variant.name.clone(),
            source: Box::new(e),
        })?;
        Ok((
            ResultRow::new(rep, seed, &variant.name, class, plan.level, &day.kpi),
            day.stats.decide_max,
        ))
    };
    let outcomes: Vec<Result<(ResultRow, Duration)>> = if plan.jobs == 1 {
        tasks.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run).collect())
    };
    let mut results = ExperimentResults::default();
    for outcome in outcomes {
        let (row, max) = outcome?;
        results.rows.push(row);
        results.decide_max.push(max);
    }
    Ok(results)
}

/// The per-day measures reported for every variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kpi {
    TotalCost,
    RoutingCost,
    LatenessCharge,
    DelayedRequests,
    TotalDelay,
    CrowdService,
    DedicatedService,
}

impl Kpi {
    pub const ALL: [Kpi; 7] = [
        Kpi::TotalCost,
        Kpi::RoutingCost,
        Kpi::LatenessCharge,
        Kpi::DelayedRequests,
        Kpi::TotalDelay,
        Kpi::CrowdService,
        Kpi::DedicatedService,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kpi::TotalCost => "total_cost",
            Kpi::RoutingCost => "routing_cost",
            Kpi::LatenessCharge => "lateness_charge",
            Kpi::DelayedRequests => "delayed_requests",
            Kpi::TotalDelay => "total_delay",
            Kpi::CrowdService => "crowd_served",
            Kpi::DedicatedService => "dedicated_served",
        }
    }

    pub fn of(self, row: &ResultRow) -> f64 {
        match self {
            Kpi::TotalCost => row.total_cost,
            Kpi::RoutingCost => row.routing_cost,
            Kpi::LatenessCharge => row.lateness_charge,
            Kpi::DelayedRequests => row.delayed_requests as f64,
            Kpi::TotalDelay => row.total_delay,
            Kpi::CrowdService => row.crowd_served as f64,
            Kpi::DedicatedService => row.dedicated_served as f64,
        }
    }
}

impl fmt::Display for Kpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kpi {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Kpi::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown KPI `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub average: f64,
    pub median: f64,
    /// Sample standard deviation; 0 for a single observation.
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let data = Data::new(values.to_vec());
        Some(Stats {
            average: values.mean(),
            median: data.median(),
            stdev: if values.len() > 1 { values.std_dev() } else { 0.0 },
            min: data.min(),
            max: data.max(),
        })
    }
}

/// Paired comparison of a candidate against a baseline on one KPI.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonSummary {
    pub baseline: String,
    pub candidate: String,
    pub kpi: Kpi,
    /// `(baseline, candidate)` per replication.
    pub pairs: Vec<(f64, f64)>,
    /// `(baseline - candidate) / baseline` per replication.
    pub reductions: Vec<f64>,
    pub reduction: Option<Stats>,
    /// Replications where the candidate is strictly lower.
    pub candidate_lower: usize,
    /// 95% paired-t interval on `baseline - candidate`; needs two pairs.
    pub difference_ci: Option<(f64, f64)>,
}

impl ComparisonSummary {
    pub fn candidate_lower_share(&self) -> f64 {
        if self.pairs.is_empty() {
            0.0
        } else {
            self.candidate_lower as f64 / self.pairs.len() as f64
        }
    }
}

pub fn percent_reduction(baseline: f64, candidate: f64) -> f64 {
    (baseline - candidate) / baseline
}

pub fn compare(results: &ExperimentResults, baseline: &str, candidate: &str) -> Result<ComparisonSummary> {
    compare_on(results, baseline, candidate, Kpi::TotalCost)
}

/// Pairs the two variants' rows by replication.
pub fn compare_on(results: &ExperimentResults, baseline: &str, candidate: &str, kpi: Kpi) -> Result<ComparisonSummary> {
    let a = results.variant(baseline);
    let b = results.variant(candidate);
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "`{baseline}` has {} rows but `{candidate}` has {}",
            a.len(),
            b.len()
        )));
    }
    let mut pairs = Vec::with_capacity(a.len());
    for (ra, rb) in a.iter().zip(&b) {
        if ra.replication != rb.replication || ra.seed != rb.seed {
            return Err(Error::Usage(format!(
                "rows of `{baseline}` and `{candidate}` are not paired at replication {}",
                ra.replication
            )));
        }
        pairs.push((kpi.of(ra), kpi.of(rb)));
    }
    let reductions: Vec<f64> = pairs.iter().map(|&(x, y)| percent_reduction(x, y)).collect();
    let diffs: Vec<f64> = pairs.iter().map(|&(x, y)| x - y).collect();
    Ok(ComparisonSummary {
        baseline: baseline.to_string(),
        candidate: candidate.to_string(),
        kpi,
        candidate_lower: pairs.iter().filter(|(x, y)| y < x).count(),
        reduction: Stats::of(&reductions),
        difference_ci: paired_ci(&diffs, 0.95).ok(),
        pairs,
        reductions,
    })
}

/// Student-t interval on the mean of paired differences.
pub fn paired_ci(diffs: &[f64], level: f64) -> Result<(f64, f64)> {
    if diffs.len() < 2 {
        return Err(Error::Usage(format!(
            "a paired interval needs at least 2 differences, got {}",
            diffs.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = diffs.len() as f64;
    let mean = diffs.mean();
    let sd = diffs.std_dev();
    if sd == 0.0 {
        return Ok((mean, mean));
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Config(format!("t distribution: {e}")))?
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * sd / n.sqrt();
    Ok((mean - half, mean + half))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantSummary {
    pub name: String,
    pub replications: usize,
    pub kpis: Vec<(Kpi, Stats)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub variants: Vec<VariantSummary>,
    pub comparisons: Vec<ComparisonSummary>,
}

/// Statistics for every variant present in `results` and total-cost
/// comparisons for the requested `(baseline, candidate)` pairs.
pub fn summarize(results: &ExperimentResults, comparisons: &[(String, String)]) -> Result<Summary> {
    let mut summary = Summary::default();
    for name in results.variant_names() {
        let rows = results.variant(&name);
        let kpis = Kpi::ALL
            .into_iter()
            .filter_map(|k| {
                let values: Vec<f64> = rows.iter().map(|r| k.of(r)).collect();
                Stats::of(&values).map(|s| (k, s))
            })
            .collect();
        summary.variants.push(VariantSummary {
            name,
            replications: rows.len(),
            kpis,
        });
    }
    for (a, b) in comparisons {
        summary.comparisons.push(compare(results, a, b)?);
    }
    Ok(summary)
}

/// Writes one row per (replication, variant), preceded by a version line.
pub fn write_results(out: &mut impl Write, results: &ExperimentResults) -> Result<()> {
    writeln!(out, "# crowdship-results v{RESULTS_VERSION}").map_err(|e| Error::io("writing results", e))?;
    let mut w = csv::Writer::from_writer(out);
    for row in &results.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("writing results", e))
}

pub fn read_results(input: impl Read) -> Result<ExperimentResults> {
    let mut text = String::new();
    let mut input = input;
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io("reading results", e))?;
    let expected = format!("# crowdship-results v{RESULTS_VERSION}");
    match text.lines().next() {
        Some(first) if first.trim() == expected => {}
        other => {
            return Err(Error::Validation(format!(
                "results file must start with `{expected}`, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let body = text.split_once('\n').map_or("", |(_, rest)| rest);
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut results = ExperimentResults::default();
    for row in reader.deserialize() {
        results.rows.push(row.map_err(csv_error)?);
        results.decide_max.push(Duration::ZERO);
    }
    Ok(results)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Validation(format!("results table: {e}"))
}

/// Writes the KPI table, then the comparison table; each is a CSV block
/// introduced by a `#` line.
pub fn write_summary(out: &mut impl Write, summary: &Summary) -> Result<()> {
    let io = |e| Error::io("writing summary", e);
    writeln!(out, "# crowdship-summary v{SUMMARY_VERSION}").map_err(io)?;
    writeln!(out, "# kpis").map_err(io)?;
    writeln!(out, "variant,kpi,n,average,median,stdev,min,max").map_err(io)?;
    for v in &summary.variants {
        for (k, s) in &v.kpis {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                v.name, k, v.replications, s.average, s.median, s.stdev, s.min, s.max
            )
            .map_err(io)?;
        }
    }
    writeln!(out, "# comparisons").map_err(io)?;
    writeln!(
        out,
        "baseline,candidate,kpi,n,candidate_lower,mean_reduction,median_reduction,min_reduction,max_reduction,ci_low,ci_high"
    )
    .map_err(io)?;
    for c in &summary.comparisons {
        let r = c
            .reduction
            .map_or([f64::NAN; 4], |s| [s.average, s.median, s.min, s.max]);
        let (lo, hi) = c.difference_ci.unwrap_or((f64::NAN, f64::NAN));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.baseline,
            c.candidate,
            c.kpi,
            c.pairs.len(),
            c.candidate_lower,
            r[0],
            r[1],
            r[2],
            r[3],
            lo,
            hi
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Parameter searched by [`tune`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TunedParameter {
    Lambda,
    Eta,
}

impl fmt::Display for TunedParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TunedParameter::Lambda => "lambda",
            TunedParameter::Eta => "eta",
        })
    }
}

impl FromStr for TunedParameter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(TunedParameter::Lambda),
            "eta" => Ok(TunedParameter::Eta),
            other => Err(format!("unknown parameter `{other}` (expected lambda or eta)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub parameter: TunedParameter,
    pub best: f64,
    /// `(value, mean total cost)` in ascending value order.
    pub points: Vec<(f64, f64)>,
    pub results: ExperimentResults,
}

/// Mean total cost of the plan's first variant at each grid value; the
/// lowest mean wins and ties go to the smaller value.
pub fn tune(
    parameter: TunedParameter,
    grid: &[f64],
    plan: &ExperimentPlan,
    travel: &TravelTimeModel,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::Usage(format!("the {parameter} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage(format!("the {parameter} grid holds a non-finite value")));
    }
    let base = plan.variants.first().cloned().unwrap_or_else(Variant::drace);
    let mut values = grid.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let variants = values.iter().map(|&v| {
        let mut variant = base.clone();
        variant.name = format!("{}-{parameter}={v}", base.name);
        match parameter {
            TunedParameter::Lambda => variant.config.lambda = v,
            TunedParameter::Eta => variant.config.eta = v,
        }
        variant
    });
    let sweep = ExperimentPlan {
        variants: variants.collect(),
        ..plan.clone()
    };
    let results = run_experiment(&sweep, travel)?;
    let mut points = Vec::with_capacity(values.len());
    let mut best: Option<(f64, f64)> = None;
    for (v, variant) in values.iter().zip(&sweep.variants) {
        let costs: Vec<f64> = results.variant(&variant.name).iter().map(|r| r.total_cost).collect();
        let mean = if costs.is_empty() {
            0.0
        } else {
            costs.iter().sum::<f64>() / costs.len() as f64
        };
        points.push((*v, mean));
        if best.is_none_or(|(_, m)| mean < m) {
            best = Some((*v, mean));
        }
    }
    Ok(TuneResult {
        parameter,
        best: best.expect("grid is nonempty").0,
        points,
        results,
    })
}
