//! Generate the three benchmark worlds and query their signed distance fields.

use ddopt::grid_world::{build_esdf, generate_world, WorldKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for kind in [WorldKind::Sparse, WorldKind::Dense, WorldKind::Spiral] {
        let world = generate_world(&kind, 7)?;
        let g = &world.grid;
        println!(
            "{kind:?}: {}x{} cells at {} m, {} occupied",
            g.width(),
            g.height(),
            g.resolution(),
            g.occupied_count()
        );
        let esdf = build_esdf(world.grid);
        let p = world.start_hint.unwrap_or([5.0, 5.0]);
        let s = esdf.at(p);
        println!(
            "  distance at ({:.1}, {:.1}) = {:.3} m, gradient ({:.3}, {:.3})",
            p[0], p[1], s.value, s.gradient[0], s.gradient[1]
        );
    }

    // plain-text map round trip
    let small = ddopt::grid_world::OccupancyGrid::parse("0.5 4 3 0 0\n....\n.##.\n....\n")?;
    print!("{}", small.to_text());
    Ok(())
}
