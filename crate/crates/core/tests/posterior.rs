use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use regseiqr::calendar::ymd;
use regseiqr::dynamics::initialize_region;
use regseiqr::posterior::{ModelContext, PosteriorModel, PriorSpec, RegionData};
use regseiqr::simstudy::{simulate_cases, SimScenario};

fn model(names: &[&str], share: bool, end: (u32, u32)) -> (PosteriorModel, SimScenario) {
    let ctx = ModelContext::default();
    let scenario = SimScenario::bc_2020().restricted(names).unwrap();
    let cases = simulate_cases(&scenario, &ctx, 7).unwrap();
    let provincial = scenario
        .init
        .provincial_state(scenario.provincial_population, &ctx.fixed)
        .unwrap();
    let data = scenario
        .regions
        .iter()
        .zip(&cases)
        .map(|(t, c)| {
            let init = initialize_region(&provincial, &t.region);
            let c = c.truncated(ymd(2020, end.0, end.1));
            RegionData::new(t.region.clone(), init, &c, &ctx).unwrap()
        })
        .collect();
    (
        PosteriorModel::new(PriorSpec::default(), ctx, data, share).unwrap(),
        scenario,
    )
}

#[test]
fn gradient_matches_central_differences() {
    let (m, scenario) = model(&["coastal", "interior"], true, (11, 20));
    let truth = m.layout.unconstrain(&scenario.truth(&m.layout).unwrap()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..5 {
        let u: Vec<f64> = truth.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        let (v, g) = m.log_posterior_and_gradient(&u).unwrap();
        assert!((v - m.log_posterior(&u)).abs() < 1e-8 * v.abs().max(1.0));
        for i in 0..u.len() {
            let h = 1e-5;
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (m.log_posterior(&up) - m.log_posterior(&dn)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
            assert!(rel < 1e-4, "coordinate {i}: analytic {} vs fd {fd}", g[i]);
        }
    }
}

#[test]
fn gradient_cost() {
    let (m, scenario) = model(
        &["coastal", "fraser", "interior", "island", "northern"],
        true,
        (12, 31),
    );
    let u = m.layout.unconstrain(&scenario.truth(&m.layout).unwrap()).unwrap();
    let t = Instant::now();
    for _ in 0..10 {
        m.log_posterior_and_gradient(&u).unwrap();
    }
    let grad = t.elapsed().as_secs_f64() / 10.0;
    let t = Instant::now();
    for _ in 0..10 {
        m.log_posterior(&u);
    }
    let value = t.elapsed().as_secs_f64() / 10.0;
    eprintln!("five regions: gradient {grad:.4}s, value {value:.4}s");
}

#[test]
fn gradient_cost_reduced() {
    let (m, scenario) = model(&["coastal", "fraser", "interior"], true, (8, 31));
    let u = m.layout.unconstrain(&scenario.truth(&m.layout).unwrap()).unwrap();
    let t = Instant::now();
    for _ in 0..20 {
        m.log_posterior_and_gradient(&u).unwrap();
    }
    eprintln!("three regions, six months: gradient {:.4}s", t.elapsed().as_secs_f64() / 20.0);
}
