use refrax_bench::{ball_scene, pattern};

#[test]
fn workloads_have_requested_sizes() {
    let scene = ball_scene(64, 48, Some((24, 16)));
    assert_eq!((scene.scene.camera.width, scene.scene.camera.height), (64, 48));
    assert!(scene.sphere_mesh.is_some());
    let img = pattern(20, 10);
    assert_eq!(img.dims(), (20, 10));
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
}
