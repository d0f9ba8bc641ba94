//! Tour of the geometric layer: build a small dome rig, project points,
//! check the epipolar constraint, triangulate, and render the analytic
//! epipolar weight oracle for a few target cells.
//!
//!     cargo run --release --example epipolar_playground

use fuselab::geometry::{
    epipolar_line, fundamental_from_cameras, ideal_fusion_weight, point_line_distance, project,
    triangulate_dlt, Point3,
};
use fuselab::heatmap::GridShape;
use fuselab::rng::Stream;
use fuselab::synthworld::make_dome_rig;

fn main() {
    let grid = GridShape::new(24, 24);
    let rig = make_dome_rig(6, 4.0, grid, 7).unwrap();
    println!("rig `{}` with {} cameras", rig.id, rig.n_cams());
    for (i, cam) in rig.cameras.iter().enumerate() {
        let px = project(cam, &Point3::zeros()).unwrap();
        println!(
            "  cam {i}: center ({:+.2}, {:+.2}, {:+.2}), origin projects to ({:.2}, {:.2})",
            cam.center.x, cam.center.y, cam.center.z, px.x, px.y
        );
    }

    // Epipolar constraint on random world points.
    let f = fundamental_from_cameras(&rig.cameras[0], &rig.cameras[1]).unwrap();
    let mut rng = Stream::new(1);
    let mut worst_residual = 0.0f64;
    let mut worst_line_dist = 0.0f64;
    for _ in 0..1000 {
        let p = Point3::new(
            rng.uniform(-0.8, 0.8),
            rng.uniform(-0.8, 0.8),
            rng.uniform(-0.8, 0.8),
        );
        let (Ok(x1), Ok(x2)) = (project(&rig.cameras[0], &p), project(&rig.cameras[1], &p))
        else {
            continue;
        };
        worst_residual = worst_residual.max(f.residual(&x1, &x2).abs());
        let line = epipolar_line(&f, &x1).unwrap();
        worst_line_dist = worst_line_dist.max(point_line_distance(&line, &x2));
    }
    println!("pair (0,1): worst epipolar residual {worst_residual:.2e}, worst point-to-line distance {worst_line_dist:.2e}");
    println!("fundamental rank deficiency {:.2e}", f.rank_deficiency());

    // Triangulation as the left inverse of projection.
    let p = Point3::new(0.3, -0.2, 0.5);
    let pixels: Vec<_> = rig
        .cameras
        .iter()
        .map(|c| project(c, &p).unwrap())
        .collect();
    let rec = triangulate_dlt(&rig.cameras, &pixels).unwrap();
    println!(
        "triangulation of a noiseless 6-view observation: error {:.2e} world units",
        (rec - p).norm()
    );

    // The analytic fusion-weight oracle concentrates on the epipolar line.
    for cell in [(6usize, 6usize), (12, 18)] {
        let w = ideal_fusion_weight(&f, cell, grid, 1.5).unwrap();
        let (r, c) = w.argmax();
        let line = epipolar_line(&f, &grid.cell_center(cell.0, cell.1)).unwrap();
        let peak_dist = point_line_distance(&line, &grid.cell_center(r, c));
        println!(
            "ideal weight for target cell {cell:?}: mass {:.6}, peak at ({r}, {c}) sits {peak_dist:.3} cells from the line",
            w.sum()
        );
    }
}
