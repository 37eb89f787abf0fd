//! End-to-end checks across table building, persistence and averaging.

use std::sync::Arc;

use mdi_atten_core::sweep::{mode_label, DynamicMode, SIGMA2_LADDER};
use mdi_atten_core::turbulence::COARSE_GRID_STEP;
use mdi_atten_core::*;
use proptest::prelude::*;

fn reference() -> (SystemParams, DecoyParams) {
    let r = reference_points()[1];
    (r.system(), r.decoy)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn coarse_table(search: SearchSettings) -> AttenuationTable {
    let (sys, d) = reference();
    let g = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
    build_table(&g, &g, &sys, &d, &search).unwrap()
}

#[test]
fn grid_refinement_changes_rates_by_under_one_percent() {
    let (sys, d) = reference();
    let table = Arc::new(coarse_table(SearchSettings::default()));
    let coarse = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
    let fine = TransmittanceGrid::uniform(0.001).unwrap();
    for (loss, s2) in [(8.0, 0.2), (8.0, 1.2), (11.0, 0.8), (14.0, 0.4)] {
        let ch = ChannelModel::from_loss_db(loss, s2).unwrap();
        for mode in [
            AttenuationMode::Baseline,
            AttenuationMode::Dynamic(table.clone()),
        ] {
            let a = averaged_key_rate(&ScenarioConfig::symmetric(
                ch,
                sys,
                d,
                coarse.clone(),
                mode.clone(),
            ))
            .unwrap();
            let b = averaged_key_rate(&ScenarioConfig::symmetric(ch, sys, d, fine.clone(), mode))
                .unwrap();
            assert!(b.result.rate > 0.0);
            assert!(
                rel(a.result.rate, b.result.rate) < 0.01,
                "{loss} dB, sigma2 {s2}: {} vs {}",
                a.result.rate,
                b.result.rate
            );
        }
    }
}

#[test]
fn weak_turbulence_leaves_dynamic_and_baseline_within_one_percent() {
    let (sys, d) = reference();
    let table = Arc::new(coarse_table(SearchSettings::default()));
    let grid = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
    for loss in [8.0, 11.0, 14.0, 17.0] {
        let ch = ChannelModel::from_loss_db(loss, 0.001).unwrap();
        let base = ScenarioConfig::symmetric(ch, sys, d, grid.clone(), AttenuationMode::Baseline);
        let dynamic = base
            .clone()
            .with_mode(AttenuationMode::Dynamic(table.clone()));
        let (b, x) = (
            averaged_key_rate(&base).unwrap().result.rate,
            averaged_key_rate(&dynamic).unwrap().result.rate,
        );
        assert!(x >= b && rel(x, b) < 0.01, "{loss} dB: {x} vs {b}");
    }
}

#[test]
fn baseline_rate_falls_with_turbulence() {
    let (sys, d) = reference();
    let mut plan = SweepPlan::new(
        sys,
        d,
        TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap(),
    );
    plan.loss_db = vec![8.0];
    let rows = run_sweep(&plan).unwrap();
    assert_eq!(rows.len(), SIGMA2_LADDER.len());
    assert!(rows.windows(2).all(|w| w[1].rate <= w[0].rate), "{rows:?}");
}

#[test]
fn sweep_with_zero_table_reproduces_baseline() {
    let (sys, d) = reference();
    let grid = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
    let zeros =
        AttenuationTable::zeros(grid.clone(), grid.clone(), parameter_fingerprint(&sys, &d))
            .unwrap();
    let mut plan = SweepPlan::new(sys, d, grid);
    plan.loss_db = vec![11.0];
    plan.sigma2 = vec![0.4, 1.2];
    plan.dynamic = vec![DynamicMode {
        label: mode_label(Some(0.0)),
        table: Arc::new(zeros),
    }];
    let rows = run_sweep(&plan).unwrap();
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].rate.to_bits(), pair[1].rate.to_bits());
    }
}

#[test]
fn fine_table_query_matches_direct_optimum() {
    let (sys, d) = reference();
    let search = SearchSettings::default();
    // A window of the 0.001 grid around the spot point.
    let window = |lo: usize, hi: usize| {
        TransmittanceGrid::from_points((lo..hi).map(|i| (i as f64 + 0.5) * 0.001).collect(), 0.001)
            .unwrap()
    };
    let (ga, gb) = (window(140, 160), window(30, 50));
    let table = build_table(&ga, &gb, &sys, &d, &search).unwrap();
    let direct = optimal_attenuation(0.15, 0.04, &sys, &d, &search).unwrap();
    assert!((table.query(0.15, 0.04) - direct.attenuation_db).abs() <= search.step_db + 1e-9);
}

#[test]
fn table_has_zero_band_rising_with_imbalance() {
    let t = coarse_table(SearchSettings::default());
    let pts = t.grid_a().points();
    let j = t.grid_b().nearest_index(0.04);
    assert_eq!(t.value(j, j), 0.0);
    // Close to balance nothing is attenuated; far from it something is.
    assert_eq!(t.value(t.grid_a().nearest_index(0.045), j), 0.0);
    assert!(t.value(t.grid_a().nearest_index(0.3), j) > 0.0);
    // Along the row, the setting never drops as Alice's arm grows stronger.
    let row: Vec<f64> = (j..pts.len()).map(|i| t.value(i, j)).collect();
    assert!(row.windows(2).all(|w| w[1] + 1e-9 >= w[0]), "{row:?}");
}

#[test]
fn table_file_round_trip() {
    let t = coarse_table(SearchSettings::default().with_insertion(2.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    t.save(&path).unwrap();
    let back = AttenuationTable::load(&path).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.search().min_insertion_db, 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimum_never_loses_to_zero_attenuation(a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let (sys, d) = reference();
        let c = optimal_attenuation(a, b, &sys, &d, &SearchSettings::default()).unwrap();
        prop_assert!(c.rate >= c.unattenuated_rate);
        prop_assert!(c.attenuation_db >= 0.0 && c.attenuation_db <= 20.0 + 1e-9);
    }

    #[test]
    fn insertion_floor_is_respected(a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let (sys, d) = reference();
        let inline = SearchSettings::default().with_insertion(2.0);
        let bypass = SearchSettings { voa: VoaMode::Bypass, ..inline };
        let c = optimal_attenuation(a, b, &sys, &d, &inline).unwrap();
        prop_assert!(c.attenuation_db >= 2.0 - 1e-9);
        let c = optimal_attenuation(a, b, &sys, &d, &bypass).unwrap();
        prop_assert!(c.attenuation_db == 0.0 || c.attenuation_db >= 2.0 - 1e-9);
        prop_assert!(c.rate >= c.unattenuated_rate);
    }

    #[test]
    fn swapped_arms_give_identical_choices(a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let (sys, d) = reference();
        let s = SearchSettings::default();
        let x = optimal_attenuation(a, b, &sys, &d, &s).unwrap();
        let y = optimal_attenuation(b, a, &sys, &d, &s).unwrap();
        prop_assert_eq!(x, y);
    }
}
