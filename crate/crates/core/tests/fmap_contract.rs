//! Feature maps written by an external exporter load unchanged.

use std::path::Path;

use satloc::features::{load_feature_map, save_feature_map, FMAP_HEADER_LEN};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/scores_8x8.fmap");

/// Values the fixture was written with, rounded to f32.
fn expected(x: usize, y: usize, k: usize) -> f32 {
    ((x as f64 - 2.0 * y as f64 + 3.0 * k as f64) / 7.0 - 0.125 * (k * k) as f64) as f32
}

#[test]
fn fixture_loads_with_its_dimensions() {
    let map = load_feature_map(Path::new(FIXTURE)).unwrap();
    assert_eq!((map.width(), map.height(), map.channels()), (8, 8, 4));
    for y in 0..8 {
        for x in 0..8 {
            for k in 0..4 {
                assert_eq!(
                    map.pixel(x, y)[k].to_bits(),
                    expected(x, y, k).to_bits(),
                    "({x},{y},{k})"
                );
            }
        }
    }
}

#[test]
fn fixture_round_trips_bit_exactly() {
    let original = std::fs::read(FIXTURE).unwrap();
    assert_eq!(original.len(), FMAP_HEADER_LEN + 8 * 8 * 4 * 4);
    let map = load_feature_map(Path::new(FIXTURE)).unwrap();
    assert_eq!(map.to_fmap_bytes(), original);
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.fmap");
    save_feature_map(&map, &copy).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), original);
}
