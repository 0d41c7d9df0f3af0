use fnsf_core::dt::rasterize;
use fnsf_core::{build_dt, GridSpec, PointCloud};

// A few points in one horizontal layer: zero at the points, growing outward.
#[test]
fn slice_is_zero_on_points_and_grows_outward() {
    let spec = GridSpec::new([0.0; 3], 1.0, [32, 32, 1]).unwrap();
    let pts = vec![[4.5, 4.5, 0.5], [20.5, 8.5, 0.5], [10.5, 25.5, 0.5]];
    let map = build_dt(&rasterize(&PointCloud::new(pts.clone()).unwrap(), &spec).unwrap()).unwrap();
    for p in &pts {
        assert_eq!(map.at([p[0] as usize, p[1] as usize, 0]), 0.0);
    }
    let row: Vec<f32> = (4..13).map(|x| map.at([x, 4, 0])).collect();
    assert!(row.windows(2).all(|w| w[0] < w[1]), "{row:?}");
    assert!(map.values().iter().all(|&v| v >= 0.0));
    assert_eq!(map.values().iter().filter(|&&v| v == 0.0).count(), pts.len());
}
