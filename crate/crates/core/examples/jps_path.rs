//! Shortest grid path on the dense world, searched on an inflated grid.

use ddopt::global_path::jps_search;
use ddopt::grid_world::{build_esdf, generate_world, WorldKind};
use ddopt::planner::{inflate, sample_free_point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let esdf = build_esdf(generate_world(&WorldKind::Dense, 3)?.grid);
    let blocked = inflate(&esdf, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = sample_free_point(&esdf, 0.5, &mut rng).ok_or("no free start")?;
    let goal = sample_free_point(&esdf, 0.5, &mut rng).ok_or("no free goal")?;
    let path = jps_search(&blocked, start, goal)?;
    println!("{} path points, length {:.2} m, grid cost {:.2} m", path.points.len(), path.length, path.grid_cost);
    for p in &path.points {
        println!("  ({:.2}, {:.2})  clearance {:.2}", p[0], p[1], esdf.value(*p));
    }
    Ok(())
}
