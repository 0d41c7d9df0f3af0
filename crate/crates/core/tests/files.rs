use fnsf_core::{load_cloud, save_cloud, CloudFormat, PointCloud};
use fnsf_core::pointcloud::{load_flow, save_flow};
use fnsf_core::FlowField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn random_points(n: usize, seed: u64) -> Vec<[f32; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [0; 3].map(|_| rng.random_range(-80.0f32..80.0)))
        .collect()
}

fn bits(p: &[[f32; 3]]) -> Vec<u32> {
    p.iter().flatten().map(|v| v.to_bits()).collect()
}

#[test]
fn binary_round_trip_is_bit_identical() {
    let dir = TempDir::new().unwrap();
    for (n, seed) in [(1000, 1), (10_000, 2)] {
        let cloud = PointCloud::new(random_points(n, seed)).unwrap();
        let path = dir.path().join(format!("c{n}.bin"));
        save_cloud(&cloud, &path, CloudFormat::Binary).unwrap();
        let back: PointCloud<f32> = load_cloud(&path, CloudFormat::Binary).unwrap();
        assert_eq!(bits(back.points()), bits(cloud.points()));
    }
}

#[test]
fn flow_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let flow = FlowField::new(random_points(500, 3)).unwrap();
    let path = dir.path().join("f.bin");
    save_flow(&flow, &path, CloudFormat::Binary).unwrap();
    let back: FlowField<f32> = load_flow(&path, CloudFormat::Binary).unwrap();
    assert_eq!(bits(back.vectors()), bits(flow.vectors()));
}

#[test]
fn text_files_use_shortest_decimals() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("one.xyz");
    save_cloud(&PointCloud::new(vec![[1.0f32, 2.0, 3.0]]).unwrap(), &path, CloudFormat::Text).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "1 2 3\n");

    std::fs::write(&path, "0 0 0\n1.5 2.0 -3.0\n").unwrap();
    let c: PointCloud<f64> = load_cloud(&path, CloudFormat::Text).unwrap();
    assert_eq!(c.points(), [[0.0, 0.0, 0.0], [1.5, 2.0, -3.0]]);
}

#[test]
fn empty_files() {
    let dir = TempDir::new().unwrap();
    let bin = dir.path().join("e.bin");
    save_cloud(&PointCloud::<f32>::empty(), &bin, CloudFormat::Binary).unwrap();
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 16);
    assert!(load_cloud::<f32>(&bin, CloudFormat::Binary).unwrap().is_empty());

    let txt = dir.path().join("e.xyz");
    std::fs::write(&txt, "").unwrap();
    assert!(load_cloud::<f32>(&txt, CloudFormat::Text).unwrap().is_empty());
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_cloud::<f32>("/nonexistent/dir/x.bin", CloudFormat::Binary).unwrap_err();
    assert!(matches!(err, fnsf_core::Error::Io { .. }), "{err:?}");
}
