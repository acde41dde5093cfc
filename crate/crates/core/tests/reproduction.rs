use regseiqr::calendar::ymd;
use regseiqr::dynamics::{bc_regions, FixedParams, RegionConfig};
use regseiqr::posterior::ParamLayout;
use regseiqr::reproduction::{r0_basic, r0_regional, r0_table, r0_timeseries, R0Summary};
use regseiqr::schedules::DistancingSchedule;

fn layout(names: &[&str], share: bool) -> ParamLayout {
    ParamLayout::new(names.iter().map(|s| s.to_string()).collect(), 6, 4, share)
}

/// Hierarchical draw with the given R0b and every f equal to `f`.
fn flat_draw(layout: &ParamLayout, r0b: f64, f: f64) -> Vec<f64> {
    let mut d = vec![r0b];
    for _ in 0..layout.n_regions() {
        d.extend(std::iter::repeat_n(f, layout.n_f));
        d.extend(std::iter::repeat_n(0.3, layout.n_psi));
        d.push(8.0);
    }
    d
}

fn csv(t: &R0Summary) -> String {
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn basic_number_examples() {
    let fixed = FixedParams::default();
    assert!((r0_basic(0.5, &fixed) - 3.0).abs() < 1e-12);
    assert_eq!(r0_basic(0.0, &fixed), 0.0);
    for r0b in [0.7, 2.6, 3.0, 5.5] {
        assert!((r0_basic(r0b / 6.0, &fixed) - r0b).abs() < 1e-12);
    }
    assert!((fixed.distancing_fraction() - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn full_contact_gives_five_beta() {
    let fixed = FixedParams::default();
    for beta in [0.1, 0.5, 1.3] {
        assert!((r0_regional(beta, 1.0, &fixed) / (5.0 * beta) - 1.0).abs() < 1e-4);
    }
}

#[test]
fn constant_draws_give_closed_form_cells() {
    let names = ["coastal", "fraser", "interior", "island", "northern"];
    let l = layout(&names, true);
    let draws = vec![flat_draw(&l, 3.0, 1.0); 40];
    let t = r0_table(&l, &draws, &bc_regions(), &FixedParams::default(), None).unwrap();
    let rows = t.regions.iter().chain(t.weighted.iter());
    for row in rows {
        for c in &row.cells {
            assert!((c.mean - 2.5).abs() < 1e-9);
            assert_eq!(c.lower, c.upper);
        }
    }
    assert!(t.provincial.is_none());
    let labels: Vec<String> = csv(&t).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    let mut expected: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    expected.push("weighted average".into());
    assert_eq!(labels, expected);
}

#[test]
fn weighted_average_of_identical_regions_is_the_common_value() {
    let l = layout(&["a", "b", "c"], true);
    let regions: Vec<RegionConfig> = [100.0, 300.0, 50.0]
        .iter()
        .zip(["a", "b", "c"])
        .map(|(n, name)| RegionConfig::new(name, *n, 1000.0))
        .collect();
    let draws: Vec<Vec<f64>> = (0..30).map(|k| flat_draw(&l, 2.0 + 0.05 * k as f64, 0.6)).collect();
    let t = r0_table(&l, &draws, &regions, &FixedParams::default(), None).unwrap();
    let w = t.weighted.as_ref().unwrap();
    for (j, c) in w.cells.iter().enumerate() {
        let r = &t.regions[0].cells[j];
        assert!((c.mean - r.mean).abs() < 1e-12);
        assert!((c.lower - r.lower).abs() < 1e-12 && (c.upper - r.upper).abs() < 1e-12);
        assert!(c.lower <= c.mean && c.mean <= c.upper && c.lower > 0.0);
    }
}

#[test]
fn weights_follow_population_ratios() {
    let l = layout(&["a", "b"], false);
    let regions = vec![RegionConfig::new("a", 300.0, 1000.0), RegionConfig::new("b", 100.0, 1000.0)];
    let mut draw = Vec::new();
    for r0b in [3.0, 6.0] {
        draw.push(r0b);
        draw.extend(std::iter::repeat_n(1.0, 6));
        draw.extend(std::iter::repeat_n(0.3, 4));
        draw.push(5.0);
    }
    let t = r0_table(&l, &[draw], &regions, &FixedParams::default(), None).unwrap();
    // R0 = 5 beta = 5 R0b / 6 per region; weights 3:1
    let expected = (0.75 * 2.5) + (0.25 * 5.0);
    assert!((t.weighted.unwrap().cells[0].mean - expected).abs() < 1e-9);
}

#[test]
fn provincial_row_is_appended_when_supplied() {
    let l = layout(&["coastal", "fraser"], true);
    let regions: Vec<RegionConfig> = bc_regions().into_iter().take(2).collect();
    let draws = vec![flat_draw(&l, 3.0, 0.5); 10];
    let pl = layout(&["province"], true);
    let pdraws = vec![flat_draw(&pl, 6.0, 1.0); 10];
    let t = r0_table(&l, &draws, &regions, &FixedParams::default(), Some((&pl, &pdraws))).unwrap();
    let row = t.provincial.as_ref().unwrap();
    assert!((row.cells[0].mean - 5.0).abs() < 1e-9);
    let text = csv(&t);
    assert!(text.lines().last().unwrap().starts_with("province,"));
    assert_eq!(text.lines().count(), 1 + 2 + 1 + 1);
}

#[test]
fn mismatched_regions_are_rejected() {
    let l = layout(&["coastal", "fraser"], true);
    let draws = vec![flat_draw(&l, 3.0, 0.5)];
    let mut regions: Vec<RegionConfig> = bc_regions().into_iter().take(2).collect();
    regions.reverse();
    assert!(r0_table(&l, &draws, &regions, &FixedParams::default(), None).is_err());
    assert!(r0_table(&l, &[], &bc_regions()[..2], &FixedParams::default(), None).is_err());
}

#[test]
fn timeseries_follows_the_contact_schedule() {
    let l = layout(&["interior"], true);
    let mut d = vec![3.0];
    let f = [0.2, 0.95, 0.5, 0.7, 0.8, 0.6];
    d.extend(f);
    d.extend([0.1, 0.2, 0.3, 0.4]);
    d.push(3.0);
    let sched = DistancingSchedule::bc_2020();
    let fixed = FixedParams::default();
    let dates = [ymd(2020, 2, 10), ymd(2020, 6, 10)];
    let ts = r0_timeseries(&l, &[d], 0, &sched, &fixed, &dates).unwrap();
    // before any change point f = 1; June 10 sits on the f3 plateau
    assert!((ts[0].1.mean - r0_regional(0.5, 1.0, &fixed)).abs() < 1e-12);
    assert!((ts[1].1.mean - r0_regional(0.5, 0.95, &fixed)).abs() < 1e-12);
    assert!(r0_timeseries(&l, &[], 1, &sched, &fixed, &dates).is_err());
}
