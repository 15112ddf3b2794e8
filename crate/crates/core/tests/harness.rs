use crowdship::harness::{
    compare, paired_ci, read_results, run_experiment, summarize, tune, write_results, write_summary, ExperimentPlan,
    Kpi, Stats, TunedParameter, Variant,
};
use crowdship::{DemandLevel, Error, InstanceClass, TravelTimeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Student-t density integrated with Simpson's rule, inverted by bisection.
fn t_quantile(p: f64, df: f64) -> f64 {
    let ln_gamma = |x: f64| -> f64 {
        // Lanczos, g = 7.
        const C: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let t = x + 7.5;
        let mut a = C[0];
        for (i, c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    };
    let norm = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| norm * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let cdf = |x: f64| {
        let n = 20_000;
        let h = x / n as f64;
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn paired_interval_matches_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (n, mu, sigma) in [(10usize, 5.0, 2.0), (20, -3.0, 10.0), (3, 0.0, 1.0)] {
        let normal = Normal::new(mu, sigma).unwrap();
        let diffs: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let half = t_quantile(0.975, n as f64 - 1.0) * (var / n as f64).sqrt();
        let (lo, hi) = paired_ci(&diffs, 0.95).unwrap();
        assert!((lo - (mean - half)).abs() < 1e-9, "n={n}: {lo} vs {}", mean - half);
        assert!((hi - (mean + half)).abs() < 1e-9, "n={n}: {hi} vs {}", mean + half);
    }
}

#[test]
fn paired_interval_degenerate_cases() {
    assert_eq!(paired_ci(&[0.0, 0.0, 0.0], 0.95).unwrap(), (0.0, 0.0));
    assert_eq!(paired_ci(&[7.0, 7.0], 0.95).unwrap(), (7.0, 7.0));
    assert!(matches!(paired_ci(&[7.0], 0.95), Err(Error::Usage(_))));
}

fn small_plan(replications: usize) -> ExperimentPlan {
    ExperimentPlan::new(InstanceClass::Uo, DemandLevel::Low, replications)
        .with_variants([Variant::drace(), Variant::myopic()])
}

#[test]
fn zero_replications_give_an_empty_summary() {
    let tt = TravelTimeModel::default_model();
    let results = run_experiment(&small_plan(0), &tt).unwrap();
    assert!(results.rows.is_empty());
    let summary = summarize(&results, &[]).unwrap();
    assert!(summary.variants.is_empty() && summary.comparisons.is_empty());
    let c = compare(&results, "myopic", "drace").unwrap();
    assert!(c.pairs.is_empty() && c.reduction.is_none() && c.difference_ci.is_none());
}

#[test]
fn experiments_are_reproducible_and_summaries_follow_from_the_rows() {
    let tt = TravelTimeModel::default_model();
    let plan = small_plan(2);
    let files: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let results = run_experiment(&plan, &tt).unwrap();
            let mut out = Vec::new();
            write_results(&mut out, &results).unwrap();
            out
        })
        .collect();
    assert_eq!(files[0], files[1]);

    let results = run_experiment(&plan, &tt).unwrap();
    let pairs = [("myopic".to_string(), "drace".to_string())];
    let summary = summarize(&results, &pairs).unwrap();
    let mut emitted = Vec::new();
    write_summary(&mut emitted, &summary).unwrap();

    let reread = read_results(files[0].as_slice()).unwrap();
    assert_eq!(reread.rows, results.rows);
    let mut recomputed = Vec::new();
    write_summary(&mut recomputed, &summarize(&reread, &pairs).unwrap()).unwrap();
    assert_eq!(
        String::from_utf8(emitted).unwrap(),
        String::from_utf8(recomputed).unwrap()
    );

    let text = String::from_utf8(files[0].clone()).unwrap();
    assert!(text.starts_with("# crowdship-results v1\nreplication,seed,variant,class,level,total_cost,"));
    assert_eq!(text.lines().count(), 2 + 4);
}

#[test]
fn variants_of_a_replication_share_the_sample_path() {
    let tt = TravelTimeModel::default_model();
    let mut twin = Variant::drace();
    twin.name = "drace-again".into();
    let plan = ExperimentPlan::new(InstanceClass::Nm, DemandLevel::Low, 2).with_variants([Variant::drace(), twin]);
    let results = run_experiment(&plan, &tt).unwrap();
    let c = compare(&results, "drace", "drace-again").unwrap();
    assert_eq!(c.pairs.len(), 2);
    assert!(c.pairs.iter().all(|(a, b)| a == b));
    let a = results.variant("drace");
    let b = results.variant("drace-again");
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            (x.seed, x.requests, x.crowd_served),
            (y.seed, y.requests, y.crowd_served)
        );
    }
}

#[test]
fn comparison_statistics() {
    let tt = TravelTimeModel::default_model();
    let results = run_experiment(&small_plan(3), &tt).unwrap();
    let c = compare(&results, "myopic", "drace").unwrap();
    let expected: Vec<f64> = c.pairs.iter().map(|(a, b)| (a - b) / a).collect();
    assert_eq!(c.reductions, expected);
    assert_eq!(c.reduction, Stats::of(&expected));
    assert_eq!(c.candidate_lower, c.pairs.iter().filter(|(a, b)| b < a).count());
    assert_eq!(c.kpi, Kpi::TotalCost);
    let diffs: Vec<f64> = c.pairs.iter().map(|(a, b)| a - b).collect();
    assert_eq!(c.difference_ci, Some(paired_ci(&diffs, 0.95).unwrap()));
}

#[test]
fn invalid_plans_are_rejected() {
    let tt = TravelTimeModel::default_model();
    let mut bad = Variant::drace();
    bad.config.eta = 1.5;
    let plan = ExperimentPlan::new(InstanceClass::Uo, DemandLevel::Low, 1).with_variants([bad]);
    assert!(run_experiment(&plan, &tt).is_err());
    let dup =
        ExperimentPlan::new(InstanceClass::Uo, DemandLevel::Low, 1).with_variants([Variant::drace(), Variant::drace()]);
    assert!(matches!(run_experiment(&dup, &tt), Err(Error::Usage(_))));
}

#[test]
fn tuning_grids() {
    let tt = TravelTimeModel::default_model();
    let plan = ExperimentPlan::new(InstanceClass::Nm, DemandLevel::Medium, 2).with_variants([Variant::drace()]);
    assert!(matches!(
        tune(TunedParameter::Lambda, &[], &plan, &tt),
        Err(Error::Usage(_))
    ));

    let single = tune(TunedParameter::Lambda, &[0.05], &plan, &tt).unwrap();
    assert_eq!(single.best, 0.05);

    let sweep = tune(TunedParameter::Lambda, &[0.1, 0.0, 0.05], &plan, &tt).unwrap();
    assert_eq!(
        sweep.points.iter().map(|p| p.0).collect::<Vec<_>>(),
        vec![0.0, 0.05, 0.1]
    );
    let best_mean = sweep.points.iter().find(|p| p.0 == sweep.best).unwrap().1;
    assert!(sweep.points.iter().all(|p| best_mean <= p.1));

    // With no replications every mean is equal; the smallest value wins.
    let empty = ExperimentPlan {
        replications: 0,
        ..plan
    };
    assert_eq!(
        tune(TunedParameter::Eta, &[0.3, 0.2, 0.1], &empty, &tt).unwrap().best,
        0.1
    );
}
