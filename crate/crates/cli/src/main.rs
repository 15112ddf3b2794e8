mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{write_manifest, ParamArgs, Params};
use crowdship::harness::{
    read_results, run_experiment, summarize, tune, write_results, write_summary, ExperimentPlan, ExperimentResults,
    Kpi, Summary, TunedParameter,
};
use crowdship::instances::generate;
use crowdship::{run_day, DemandLevel, Error, Instance, InstanceClass, PolicyKind, Result};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "crowdship",
    version,
    about = "Same-day delivery with crowdshippers and a dedicated fleet"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance and write it to a file.
    Generate(GenerateArgs),
    /// Run one day under one policy.
    Simulate(SimulateArgs),
    /// Run policy variants over replications and summarize them.
    Experiment(ExperimentArgs),
    /// Grid search over lambda or eta.
    Tune(TuneArgs),
    /// Recompute a summary from a results file.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug)]
struct Family {
    #[arg(long, default_value = "nm")]
    class: InstanceClass,
    #[arg(long, default_value = "low")]
    level: DemandLevel,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    family: Family,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    speed_profile: Option<PathBuf>,
    /// Instance file; a manifest is written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Instance file; generated from --class/--level/--seed when absent.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["class", "level", "seed"])]
    instance: Option<PathBuf>,
    #[arg(long)]
    class: Option<InstanceClass>,
    #[arg(long)]
    level: Option<DemandLevel>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "drace")]
    policy: PolicyKind,
    #[command(flatten)]
    params: ParamArgs,
    /// Directory for kpi.json, events.log and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Replications {
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Seed of the first replication; replication i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    family: Family,
    #[command(flatten)]
    reps: Replications,
    /// Variants to run. The first is compared against each of the others.
    /// A variant is a policy with optional -avg, -eta0 and class suffixes.
    #[arg(long, value_delimiter = ',', default_value = "drace,myopic")]
    compare: Vec<String>,
    #[command(flatten)]
    params: ParamArgs,
    /// Directory for results.csv, summary.csv and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    param: TunedParameter,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    grid: Vec<f64>,
    #[arg(long, default_value = "drace")]
    policy: PolicyKind,
    #[command(flatten)]
    family: Family,
    #[command(flatten)]
    reps: Replications,
    #[command(flatten)]
    params: ParamArgs,
    /// Directory for tune.csv, results.csv and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// A results.csv written by `experiment` or `tune`.
    #[arg(long, value_name = "FILE")]
    results: PathBuf,
    /// Comparisons as candidate:baseline pairs.
    #[arg(long, value_delimiter = ',')]
    compare: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crowdship: {}", one_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Usage(_) | Error::Parse { .. } => 2,
        Error::Io { .. } => 3,
        Error::Replication { source, .. } if matches!(**source, Error::Io { .. }) => 3,
        _ => 1,
    }
}

fn run(command: Command, args: &[String]) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(a, args),
        Command::Simulate(a) => cmd_simulate(a, args),
        Command::Experiment(a) => cmd_experiment(a, args),
        Command::Tune(a) => cmd_tune(a, args),
        Command::Summarize(a) => cmd_summarize(a),
    }
}

/// Rejects output paths that name one of the inputs.
fn guard_outputs(inputs: &[Option<&Path>], outputs: &[&Path]) -> Result<()> {
    for input in inputs.iter().flatten() {
        let Ok(input) = input.canonicalize() else { continue };
        for out in outputs {
            let resolved = match out.canonicalize() {
                Ok(p) => p,
                Err(_) => continue,
            };
            if resolved == input {
                return Err(Error::Usage(format!("refusing to overwrite input {}", out.display())));
            }
        }
    }
    Ok(())
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    class: InstanceClass,
    level: DemandLevel,
    seed: u64,
    speed_profile: Option<&'a Path>,
    requests: usize,
    vehicles: usize,
}

fn cmd_generate(a: GenerateArgs, args: &[String]) -> Result<()> {
    let tt = Params::travel_model_from(a.speed_profile.as_deref())?;
    let manifest = manifest_path(&a.out);
    guard_outputs(&[a.speed_profile.as_deref()], &[&a.out, &manifest])?;
    let instance = generate(a.family.class, a.family.level, a.seed, tt.geography());
    instance.save(&a.out)?;
    write_manifest(
        &manifest,
        args,
        "generate",
        GenerateManifest {
            class: instance.class,
            level: instance.level,
            seed: instance.seed,
            speed_profile: a.speed_profile.as_deref(),
            requests: instance.requests.len(),
            vehicles: instance.fleet.len(),
        },
    )?;
    println!(
        "wrote {} ({} {} seed {}: {} requests, {} vehicles)",
        a.out.display(),
        instance.class,
        instance.level,
        instance.seed,
        instance.requests.len(),
        instance.fleet.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    instance: Option<&'a Path>,
    class: InstanceClass,
    level: DemandLevel,
    seed: u64,
    policy: PolicyKind,
    params: &'a Params,
}

fn cmd_simulate(a: SimulateArgs, args: &[String]) -> Result<()> {
    let params = a.params.resolve()?;
    let tt = params.travel_model()?;
    let instance = match &a.instance {
        Some(path) => Instance::load(path, tt.geography())?,
        None => generate(
            a.class.unwrap_or(InstanceClass::Nm),
            a.level.unwrap_or(DemandLevel::Low),
            a.seed.unwrap_or(1),
            tt.geography(),
        ),
    };
    let mut policy = params.policy(a.policy).build(instance.seed);
    let day = run_day(&instance, policy.as_mut(), &tt, params.cost)?;

    if let Some(dir) = &a.out {
        let files = [dir.join("kpi.json"), dir.join("events.log"), dir.join("manifest.json")];
        let inputs = [
            a.instance.as_deref(),
            a.params.config.as_deref(),
            a.params.speed_profile.as_deref(),
        ];
        guard_outputs(&inputs, &files.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
        out_dir(dir)?;
        let mut kpi = serde_json::to_string_pretty(&day.kpi).map_err(|e| Error::Config(format!("kpi: {e}")))?;
        kpi.push('\n');
        write_file(&files[0], kpi.as_bytes())?;
        let mut log = String::new();
        for event in &day.log {
            log.push_str(&event.to_line());
            log.push('\n');
        }
        write_file(&files[1], log.as_bytes())?;
        write_manifest(
            &files[2],
            args,
            "simulate",
            SimulateManifest {
                instance: a.instance.as_deref(),
                class: instance.class,
                level: instance.level,
                seed: instance.seed,
                policy: a.policy,
                params: &params,
            },
        )?;
    }

    let k = &day.kpi;
    println!(
        "{} {} seed {} under {}",
        instance.class, instance.level, instance.seed, a.policy
    );
    println!("{:<18}{:>12.2}", "total_cost", k.total_cost);
    println!("{:<18}{:>12.2}", "routing_cost", k.routing_cost);
    println!("{:<18}{:>12.2}", "lateness_charge", k.lateness_charge);
    println!("{:<18}{:>12}", "delayed_requests", k.delayed_requests);
    println!("{:<18}{:>12.1}", "total_delay", k.total_delay);
    println!("{:<18}{:>12}", "crowd_served", k.crowd_served);
    println!("{:<18}{:>12}", "dedicated_served", k.dedicated_served);
    println!("{:<18}{:>11.1}%", "crowd_share", 100.0 * k.crowd_share());
    println!(
        "decide: {} calls, max {:.1} ms",
        day.stats.decide_calls,
        day.stats.decide_max.as_secs_f64() * 1e3
    );
    Ok(())
}

#[derive(Serialize)]
struct ExperimentManifest<'a> {
    plan: &'a ExperimentPlan,
    params: &'a Params,
}

fn plan_for(family: &Family, reps: &Replications) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(family.class, family.level, reps.reps);
    plan.seed_base = reps.seed;
    plan.jobs = reps.jobs;
    plan
}

fn cmd_experiment(a: ExperimentArgs, args: &[String]) -> Result<()> {
    let params = a.params.resolve()?;
    let tt = params.travel_model()?;
    let names: Vec<&str> = a.compare.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::Usage("--compare names no variants".into()));
    }
    let variants = names.iter().map(|n| params.variant(n)).collect::<Result<Vec<_>>>()?;
    let plan = plan_for(&a.family, &a.reps).with_variants(variants);
    plan.validate()?;
    let pairs: Vec<(String, String)> = names[1..]
        .iter()
        .map(|b| (b.to_string(), names[0].to_string()))
        .collect();
    let outputs = a
        .out
        .as_ref()
        .map(|d| [d.join("results.csv"), d.join("summary.csv"), d.join("manifest.json")]);
    if let Some(files) = &outputs {
        let inputs = [a.params.config.as_deref(), a.params.speed_profile.as_deref()];
        guard_outputs(&inputs, &files.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    }

    let results = run_experiment(&plan, &tt)?;
    let summary = summarize(&results, &pairs)?;
    if let (Some(dir), Some(files)) = (&a.out, &outputs) {
        out_dir(dir)?;
        save_results(&files[0], &results)?;
        save_summary(&files[1], &summary)?;
        write_manifest(
            &files[2],
            args,
            "experiment",
            ExperimentManifest {
                plan: &plan,
                params: &params,
            },
        )?;
    }
    print_summary(&summary);
    if let Some(max) = results.decide_max.iter().max() {
        println!("slowest decision: {:.1} ms", max.as_secs_f64() * 1e3);
    }
    Ok(())
}

fn save_results(path: &Path, results: &ExperimentResults) -> Result<()> {
    let mut buf = Vec::new();
    write_results(&mut buf, results)?;
    write_file(path, &buf)
}

fn save_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut buf = Vec::new();
    write_summary(&mut buf, summary)?;
    write_file(path, &buf)
}

fn print_summary(summary: &Summary) {
    let shown = [
        Kpi::TotalCost,
        Kpi::RoutingCost,
        Kpi::LatenessCharge,
        Kpi::DelayedRequests,
        Kpi::CrowdService,
    ];
    print!("{:<24}{:>5}", "variant", "n");
    for k in shown {
        print!("{:>18}", k.name());
    }
    println!("{:>14}", "crowd_share");
    for v in &summary.variants {
        print!("{:<24}{:>5}", v.name, v.replications);
        let mean = |kpi: Kpi| v.kpis.iter().find(|(k, _)| *k == kpi).map(|(_, s)| s.average);
        for k in shown {
            match mean(k) {
                Some(m) => print!("{m:>18.2}"),
                None => print!("{:>18}", "-"),
            }
        }
        match (mean(Kpi::CrowdService), mean(Kpi::DedicatedService)) {
            (Some(c), Some(d)) if c + d > 0.0 => println!("{:>13.1}%", 100.0 * c / (c + d)),
            _ => println!("{:>14}", "-"),
        }
    }
    for c in &summary.comparisons {
        print!(
            "{} vs {}: {} of {} days lower",
            c.candidate,
            c.baseline,
            c.candidate_lower,
            c.pairs.len()
        );
        if let Some(r) = &c.reduction {
            print!(", median reduction {:.1}%", 100.0 * r.median);
        }
        if let Some((lo, hi)) = c.difference_ci {
            print!(", 95% CI of saving [{lo:.1}, {hi:.1}]");
        }
        println!();
    }
}

#[derive(Serialize)]
struct TuneManifest<'a> {
    parameter: TunedParameter,
    grid: &'a [f64],
    best: f64,
    plan: &'a ExperimentPlan,
    params: &'a Params,
}

fn cmd_tune(a: TuneArgs, args: &[String]) -> Result<()> {
    let params = a.params.resolve()?;
    let tt = params.travel_model()?;
    let mut base = params.variant(&a.policy.to_string())?;
    base.name = a.policy.to_string();
    let plan = plan_for(&a.family, &a.reps).with_variants([base]);
    let outputs = a
        .out
        .as_ref()
        .map(|d| [d.join("tune.csv"), d.join("results.csv"), d.join("manifest.json")]);
    if let Some(files) = &outputs {
        let inputs = [a.params.config.as_deref(), a.params.speed_profile.as_deref()];
        guard_outputs(&inputs, &files.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    }

    let result = tune(a.param, &a.grid, &plan, &tt)?;
    let mut table = format!("{},mean_total_cost\n", a.param);
    for (v, mean) in &result.points {
        table.push_str(&format!("{v},{mean}\n"));
    }
    if let (Some(dir), Some(files)) = (&a.out, &outputs) {
        out_dir(dir)?;
        write_file(&files[0], table.as_bytes())?;
        save_results(&files[1], &result.results)?;
        write_manifest(
            &files[2],
            args,
            "tune",
            TuneManifest {
                parameter: a.param,
                grid: &a.grid,
                best: result.best,
                plan: &plan,
                params: &params,
            },
        )?;
    }
    let mut stdout = std::io::stdout().lock();
    for (v, mean) in &result.points {
        let mark = if *v == result.best { "  <- best" } else { "" };
        let _ = writeln!(stdout, "{}={v:<10} mean total cost {mean:>12.2}{mark}", a.param);
    }
    Ok(())
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    let file = fs::File::open(&a.results).map_err(|e| Error::io(format!("reading {}", a.results.display()), e))?;
    let results = read_results(std::io::BufReader::new(file))?;
    let mut pairs = Vec::new();
    for spec in &a.compare {
        let Some((candidate, baseline)) = spec.split_once(':') else {
            return Err(Error::Usage(format!("comparison `{spec}` is not candidate:baseline")));
        };
        pairs.push((baseline.to_string(), candidate.to_string()));
    }
    let summary = summarize(&results, &pairs)?;
    let mut buf = Vec::new();
    write_summary(&mut buf, &summary)?;
    std::io::stdout()
        .write_all(&buf)
        .map_err(|e| Error::io("writing summary", e))
}
