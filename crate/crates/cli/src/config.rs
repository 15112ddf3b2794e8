//! Run parameters from flags and an optional parameter file, and the
//! manifest written beside every output.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use crowdship::harness::Variant;
use crowdship::{AlnsConfig, CostConfig, Error, InstanceClass, PolicyKind, PolicySpec, Result, TravelTimeModel};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FORMAT: u32 = 1;

/// Policy and cost parameters shared by every command that runs days.
#[derive(Args, Clone, Debug, Default)]
pub struct ParamArgs {
    /// TOML file with parameter values; flags given here override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Weight on remaining vehicle availability in DRACE's assignment cost.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Strategic-wait fraction of remaining availability.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Ready-time window (minutes) for re-planning outstanding requests.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// ALNS location-relatedness weight.
    #[arg(long)]
    pub phi: Option<f64>,
    /// ALNS time-relatedness weight.
    #[arg(long)]
    pub chi: Option<f64>,
    /// Requests removed per ALNS iteration.
    #[arg(long)]
    pub removal: Option<usize>,
    /// ALNS iteration limit per decision.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Wall-clock cap on one ALNS decision in milliseconds; 0 removes it.
    #[arg(long, value_name = "MS")]
    pub budget_ms: Option<u64>,
    /// Fee per request served by a crowdshipper.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Plan with average-speed travel times (execution stays time-dependent).
    #[arg(long)]
    pub avg_tt: bool,
    /// Disable strategic waiting (eta = 0).
    #[arg(long)]
    pub no_strategic_wait: bool,
    /// Include strategic waits in the schedules used to cost candidate routes.
    #[arg(long)]
    pub planned_waits: bool,
    /// Speed profile and geography in TOML; the bundled profile otherwise.
    #[arg(long, value_name = "FILE")]
    pub speed_profile: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    lambda: Option<f64>,
    eta: Option<f64>,
    gamma: Option<f64>,
    phi: Option<f64>,
    chi: Option<f64>,
    removal: Option<usize>,
    iterations: Option<usize>,
    budget_ms: Option<u64>,
    rho: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
    avg_tt: Option<bool>,
    strategic_wait: Option<bool>,
    planned_waits: Option<bool>,
    charge_endpoint_legs: Option<bool>,
}

/// Fully resolved parameters, as recorded in manifests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params {
    pub cost: CostConfig,
    pub alns: AlnsConfig,
    pub average_planning: bool,
    pub planned_waits: bool,
    pub speed_profile: Option<PathBuf>,
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<Params> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                toml::from_str::<ParamFile>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ParamFile::default(),
        };
        let mut cost = CostConfig::default();
        let mut alns = AlnsConfig::default();
        let pick = |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
        cost.lambda = pick(self.lambda, file.lambda, cost.lambda);
        cost.eta = pick(self.eta, file.eta, cost.eta);
        cost.gamma = pick(self.gamma, file.gamma, cost.gamma);
        cost.rho = pick(self.rho, file.rho, cost.rho);
        cost.mu1 = file.mu1.unwrap_or(cost.mu1);
        cost.mu2 = file.mu2.unwrap_or(cost.mu2);
        cost.charge_endpoint_legs = file.charge_endpoint_legs.unwrap_or(cost.charge_endpoint_legs);
        if self.no_strategic_wait || file.strategic_wait == Some(false) {
            if self.eta.is_some_and(|e| e != 0.0) {
                return Err(Error::Usage("--eta conflicts with --no-strategic-wait".into()));
            }
            cost.eta = 0.0;
        }
        alns.gamma = cost.gamma;
        alns.phi = pick(self.phi, file.phi, alns.phi);
        alns.chi = pick(self.chi, file.chi, alns.chi);
        alns.removal = self.removal.or(file.removal).unwrap_or(alns.removal);
        alns.iterations = self.iterations.or(file.iterations).unwrap_or(alns.iterations);
        if let Some(ms) = self.budget_ms.or(file.budget_ms) {
            alns.budget_ms = (ms > 0).then_some(ms);
        }
        cost.validate()?;
        alns.validate()?;
        Ok(Params {
            cost,
            alns,
            average_planning: self.avg_tt || file.avg_tt.unwrap_or(false),
            planned_waits: self.planned_waits || file.planned_waits.unwrap_or(false),
            speed_profile: self.speed_profile.clone(),
        })
    }
}

impl Params {
    pub fn travel_model(&self) -> Result<TravelTimeModel> {
        Params::travel_model_from(self.speed_profile.as_deref())
    }

    pub fn travel_model_from(speed_profile: Option<&Path>) -> Result<TravelTimeModel> {
        match speed_profile {
            Some(path) => TravelTimeModel::load(path),
            None => Ok(TravelTimeModel::default_model()),
        }
    }

    pub fn policy(&self, kind: PolicyKind) -> PolicySpec {
        PolicySpec {
            kind,
            average_planning: self.average_planning,
            planned_waits: self.planned_waits,
            alns: self.alns,
        }
    }

    /// Parses a variant name: a policy followed by optional `-avg`, `-eta0`
    /// and instance-class suffixes, for example `drace-eta0` or `myopic-mto`.
    pub fn variant(&self, name: &str) -> Result<Variant> {
        let mut parts = name.split('-');
        let kind: PolicyKind = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e: String| Error::Usage(format!("variant `{name}`: {e}")))?;
        let mut variant = Variant::new(name, self.policy(kind));
        variant.config = self.cost;
        for part in parts {
            match part {
                "avg" => variant.policy.average_planning = true,
                "eta0" => variant.config.eta = 0.0,
                other => {
                    let class: InstanceClass = other.parse().map_err(|_| {
                        Error::Usage(format!(
                            "variant `{name}`: unknown suffix `{other}` (expected avg, eta0 or a class)"
                        ))
                    })?;
                    variant.class = Some(class);
                }
            }
        }
        Ok(variant)
    }
}

#[derive(Serialize)]
pub struct Manifest<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub format: u32,
    /// Arguments after the program name.
    pub args: &'a [String],
    pub command: &'a str,
    pub resolved: T,
}

pub fn write_manifest<T: Serialize>(path: &Path, args: &[String], command: &str, resolved: T) -> Result<()> {
    let manifest = Manifest {
        tool: "crowdship",
        version: env!("CARGO_PKG_VERSION"),
        format: MANIFEST_FORMAT,
        args,
        command,
        resolved,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file_and_defaults_hold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.toml");
        fs::write(&path, "lambda = 0.1\nphi = 4.0\nbudget_ms = 0\n").unwrap();
        let args = ParamArgs {
            config: Some(path),
            lambda: Some(0.2),
            ..ParamArgs::default()
        };
        let p = args.resolve().unwrap();
        assert_eq!(p.cost.lambda, 0.2);
        assert_eq!(p.alns.phi, 4.0);
        assert_eq!(p.alns.budget_ms, None);
        assert_eq!(p.cost.eta, 0.20);
        assert_eq!(p.alns.chi, 3.0);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.toml");
        fs::write(&path, "lamda = 0.1\n").unwrap();
        let args = ParamArgs {
            config: Some(path),
            ..ParamArgs::default()
        };
        assert!(matches!(args.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn variant_names() {
        let p = ParamArgs::default().resolve().unwrap();
        let v = p.variant("drace-avg-eta0").unwrap();
        assert_eq!(v.policy.kind, PolicyKind::Drace);
        assert!(v.policy.average_planning);
        assert_eq!(v.config.eta, 0.0);
        assert_eq!(p.variant("myopic-otm").unwrap().class, Some(InstanceClass::Otm));
        assert!(p.variant("drace-fast").is_err());
        assert!(p.variant("greedy").is_err());
    }

    #[test]
    fn strategic_wait_switch() {
        let args = ParamArgs {
            no_strategic_wait: true,
            ..ParamArgs::default()
        };
        assert_eq!(args.resolve().unwrap().cost.eta, 0.0);
        let clash = ParamArgs {
            no_strategic_wait: true,
            eta: Some(0.3),
            ..ParamArgs::default()
        };
        assert!(matches!(clash.resolve(), Err(Error::Usage(_))));
    }
}
