//! Dynamic same-day pickup-and-delivery with a mixed fleet of dedicated
//! vehicles and occasional drivers (crowdshippers).

pub mod error;
pub mod harness;
pub mod instances;
pub mod mdp;
pub mod policies;
pub mod traveltime;

pub use error::{Error, Result};
pub use instances::{DemandLevel, Instance, InstanceClass, Request, RequestId, VehicleId, VehicleKind, VehicleSpec};
pub use mdp::{run_day, Action, CostConfig, DayResult, KpiReport, Policy, SimState, Simulator, Stop, StopKind};
pub use policies::{AlnsConfig, PolicyKind, PolicySpec};
pub use traveltime::{
    AverageSpeed, Geography, Location, Minutes, RegionId, SpeedProfile, TravelTimeModel, TravelTimes,
};
