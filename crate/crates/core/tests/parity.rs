use std::path::{Path, PathBuf};

use riskpath::nnheur::fixture::{fixture_paths, Fixture};
use riskpath::nnheur::{NnModel, TensorFile};

const TOLERANCE: f64 = 1e-5;

fn fixture_dirs() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    ["toy", "m4", "m8"].iter().map(|d| root.join(d)).collect()
}

#[test]
fn forward_matches_reference_fixtures() {
    let mut checked = 0;
    for dir in fixture_dirs() {
        let model = NnModel::load(dir.join("weights.asdw")).unwrap();
        for path in fixture_paths(&dir).unwrap() {
            let fx = Fixture::read(&path).unwrap();
            let got = model.predict(&fx.map, &fx.case).unwrap();
            assert_eq!(got.len(), fx.expected.len());
            let worst = got
                .iter()
                .zip(&fx.expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= TOLERANCE, "{}: max deviation {worst}", path.display());
            checked += 1;
        }
    }
    assert!(checked >= 10, "only {checked} fixtures found");
}

#[test]
fn toy_model_has_expected_shape() {
    let model = NnModel::load(fixture_dirs()[0].join("weights.asdw")).unwrap();
    let c = model.config;
    assert_eq!((c.d_r, c.d_model, c.n_heads, c.d_k), (4, 8, 1, 8));
    assert_eq!(c.map_side(), Some(2));
}

#[test]
fn reference_files_reserialize_byte_identically() {
    for dir in fixture_dirs() {
        let bytes = std::fs::read(dir.join("weights.asdw")).unwrap();
        let model = NnModel::load(dir.join("weights.asdw")).unwrap();
        assert_eq!(model.weights.to_tensors().to_bytes(), bytes, "{}", dir.display());
        assert_eq!(TensorFile::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
}

#[test]
fn fixture_write_read_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = fixture_paths(&fixture_dirs()[1]).unwrap();
    let fx = Fixture::read(&src[0]).unwrap();
    let out = dir.path().join("fixture_000.txt");
    fx.write(&out).unwrap();
    assert_eq!(Fixture::read(&out).unwrap(), fx);
    assert_eq!(fixture_paths(dir.path()).unwrap(), vec![out]);
}
