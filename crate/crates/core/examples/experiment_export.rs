//! Small configured experiment written to plot-ready files.

use ddopt::bench::{run_and_export, Experiment, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::parse(
        r#"
        seed = 1
        record_timings = false
        [integral]
        worlds = ["sparse", "spiral"]
        runs = 5
        "#,
        false,
    )?;
    let dir = std::env::temp_dir().join("ddopt-example");
    for name in run_and_export(&cfg, Experiment::Integral, &dir, None)? {
        println!("{}", dir.join(name).display());
    }
    print!("{}", std::fs::read_to_string(dir.join("integral_summary.csv"))?);
    Ok(())
}
