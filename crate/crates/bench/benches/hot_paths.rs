use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use crowdship::instances::generate;
use crowdship::{
    CostConfig, DemandLevel, Instance, InstanceClass, Location, PolicyKind, PolicySpec, Simulator, TravelTimeModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn locations(tt: &TravelTimeModel, n: usize) -> Vec<Location> {
    let geo = tt.geography();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            geo.locate(rng.gen_range(0.0..geo.width()), rng.gen_range(0.0..geo.height()))
                .unwrap()
        })
        .collect()
}

fn travel_time(c: &mut Criterion) {
    let tt = TravelTimeModel::default_model();
    let locs = locations(&tt, 256);
    c.bench_function("travel_time/256_pairs", |b| {
        b.iter(|| {
            let mut sum = 0.0;
            for (i, from) in locs.iter().enumerate() {
                let to = &locs[(i * 7 + 3) % locs.len()];
                sum += tt.travel_time(from, to, black_box(i as f64 * 2.5));
            }
            sum
        })
    });
}

/// Advances a DRACE-run day to `until` so policies can be timed on a busy state.
fn busy_state<'a>(inst: &'a Instance, tt: &'a TravelTimeModel, until: f64) -> Simulator<'a> {
    let mut sim = Simulator::new(inst, tt, CostConfig::default()).unwrap();
    let mut policy = PolicySpec::new(PolicyKind::Drace).build(0);
    while sim.state().t < until && !sim.finished() {
        let action = policy.decide(sim.state());
        sim.apply_action(action).unwrap();
        sim.advance().unwrap();
    }
    sim
}

fn decide(c: &mut Criterion) {
    let tt = TravelTimeModel::default_model();
    let inst = generate(InstanceClass::Nm, DemandLevel::High, 1, tt.geography());
    let sim = busy_state(&inst, &tt, 240.0);
    c.bench_function("decide/drace_nm_high", |b| {
        let mut policy = PolicySpec::new(PolicyKind::Drace).build(0);
        b.iter(|| policy.decide(black_box(sim.state())))
    });
    let mut group = c.benchmark_group("decide");
    group.sample_size(20);
    group.bench_function("myopic_nm_high", |b| {
        b.iter(|| {
            PolicySpec::new(PolicyKind::Myopic)
                .build(1)
                .decide(black_box(sim.state()))
        })
    });
    group.finish();
}

fn whole_day(c: &mut Criterion) {
    let tt = TravelTimeModel::default_model();
    let inst = generate(InstanceClass::Nm, DemandLevel::Low, 1, tt.geography());
    let mut group = c.benchmark_group("day");
    group.sample_size(10);
    group.bench_function("drace_nm_low", |b| {
        b.iter(|| {
            let mut policy = PolicySpec::new(PolicyKind::Drace).build(1);
            crowdship::run_day(&inst, policy.as_mut(), &tt, CostConfig::default())
                .unwrap()
                .kpi
                .total_cost
        })
    });
    group.finish();
}

criterion_group!(benches, travel_time, decide, whole_day);
criterion_main!(benches);
