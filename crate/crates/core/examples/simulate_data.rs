//! Writes a synthetic dataset and its design file, ready for the CLI.
//!
//!     cargo run --example simulate_data -- B 4000 7 /tmp/safe-rd-demo
//!     safe-rd learn --input /tmp/safe-rd-demo/data.csv --design /tmp/safe-rd-demo/design.toml --out /tmp/out

use std::fs;
use std::path::PathBuf;

use safe_rd::data::write_dataset;
use safe_rd::simlab::{generate, ScenarioId, ScenarioSpec};

fn main() -> safe_rd::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario: ScenarioId = args.next().unwrap_or_else(|| "B".into()).parse()?;
    let n: usize = args.next().map_or(4000, |s| s.parse().expect("n must be an integer"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "safe-rd-demo".into()));

    let spec = ScenarioSpec::new(scenario, n);
    let data = generate(&spec, seed);
    fs::create_dir_all(&dir)?;
    write_dataset(fs::File::create(dir.join("data.csv"))?, &data, b',')?;
    fs::write(dir.join("design.toml"), spec.design().to_toml_string())?;

    println!("scenario {scenario}, n = {n}, seed = {seed}");
    for g in data.design().groups() {
        println!("  group {} cutoff {} records {}", data.design().label(g), data.design().cutoff(g), data.group_count(g));
    }
    println!("wrote {}/data.csv and design.toml", dir.display());
    Ok(())
}
