use mrsense::io::read_json;
use mrsense::mrdmd::{decompose, LibraryInclude, MrdmdConfig};
use mrsense::reconstruct::{evaluate, reconstruct_field, sensor_readings};
use mrsense::sensors::place_sensors;
use mrsense::synth::{generate, Background, Seasonal, SynthSpec};

fn planted() -> SynthSpec {
    read_json(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/planted.json")).unwrap()
}

#[test]
fn noiseless_field_without_events_is_background_plus_season() {
    let spec = SynthSpec {
        rows: 3,
        cols: 5,
        n_days: 40,
        events: vec![],
        noise_sigma: 0.0,
        background: Background { west: 4.0, east: 2.0 },
        seasonal: Seasonal { amplitude: 0.5, period_days: 20.0, phase_lag: 1.0 },
        ..planted()
    };
    let (series, _) = generate(&spec).unwrap();
    for k in 0..series.n_cells() {
        let (_, c) = series.grid().cell_position(k);
        let frac = c as f64 / 4.0;
        for t in 0..40 {
            let season = 0.5 * (2.0 * std::f64::consts::PI * t as f64 / 20.0 - frac).sin();
            let want = 4.0 + (2.0 - 4.0) * frac + season;
            assert!((series.values()[(k, t)] - want).abs() < 1e-12, "cell {k} day {t}");
        }
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let spec = SynthSpec { n_days: 200, events: planted().events[..1].to_vec(), ..planted() };
    let (a, _) = generate(&spec).unwrap();
    let (b, _) = generate(&spec).unwrap();
    assert_eq!(a.values(), b.values());
    let (c, _) = generate(&SynthSpec { seed: spec.seed + 1, ..spec }).unwrap();
    assert_ne!(a.values(), c.values());
}

#[test]
fn noise_has_the_requested_spread() {
    let spec = planted();
    let (noisy, _) = generate(&spec).unwrap();
    let (clean, _) = generate(&SynthSpec { noise_sigma: 0.0, ..spec.clone() }).unwrap();
    let d = noisy.values() - clean.values();
    let count = (d.nrows() * d.ncols()) as f64;
    let sd = d.norm_l2() / count.sqrt();
    assert!((sd - spec.noise_sigma).abs() < 0.01 * spec.noise_sigma, "sd {sd}");
}

/// Pivot reconstruction of the planted series at p = r, scored against the
/// noisy series: the error cannot fall below the share of the field that is
/// noise, and should not rise far above it.
#[test]
fn pivot_reconstruction_sits_at_the_noise_floor() {
    let spec = planted();
    let (noisy, _) = generate(&spec).unwrap();
    let (clean, _) = generate(&SynthSpec { noise_sigma: 0.0, ..spec }).unwrap();
    let floor = (noisy.values() - clean.values()).norm_l2() / noisy.values().norm_l2();

    let tree = decompose(&noisy, &MrdmdConfig { max_level: 12, ..Default::default() }).unwrap();
    let library = tree.build_library(0, LibraryInclude::All).unwrap();
    let sensors = place_sensors(&library, noisy.grid(), library.n_columns()).unwrap();
    let y = sensor_readings(noisy.values().as_ref(), &sensors.pivots);
    let rec = reconstruct_field(&library, &sensors, y.as_ref()).unwrap();
    let report = evaluate(&noisy, rec.fields.as_ref()).unwrap();
    let ratio = report.relative_frobenius / floor;
    assert!(ratio < 1.1, "error {} vs noise floor {floor}", report.relative_frobenius);
    assert!(report.per_cell_rmse.len() == noisy.n_cells());
}
