//! Workloads shared by the kernel benchmarks.

use refrax::fixtures::{sphere_in_room, FixtureSpec, SphereFixture};
use refrax::imageops::{ColorSpace, ImagePlane};

/// Glass ball in the fixture room, tessellated when `mesh` is set.
pub fn ball_scene(width: usize, height: usize, mesh: Option<(usize, usize)>) -> SphereFixture {
    let spec = FixtureSpec { width, height, pano_height: height, mesh, ..Default::default() };
    sphere_in_room(&spec).expect("fixture scene is valid")
}

/// Smooth test pattern with detail at several scales.
pub fn pattern(width: usize, height: usize) -> ImagePlane {
    ImagePlane::from_fn(width, height, ColorSpace::Linear, |x, y| {
        let (u, v) = (x as f64, y as f64);
        [
            0.5 + 0.4 * (0.11 * u).sin() * (0.07 * v).cos(),
            0.5 + 0.4 * (0.9 * u + 0.3 * v).sin(),
            ((x / 8 + y / 8) % 2) as f64,
        ]
    })
}
