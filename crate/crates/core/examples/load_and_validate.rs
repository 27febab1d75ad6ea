//! Loading a CSV against a design, and what validation failures look like.

use safe_rd::data::{load_dataset, LoadOptions};
use safe_rd::StudyDesign;

const DESIGN: &str = r#"
version = 1

[cutoffs]
north = -1.0
south = 1.0
"#;

fn main() -> safe_rd::Result<()> {
    let design = StudyDesign::from_toml_str(DESIGN)?;
    let opts = LoadOptions { min_per_group: 2, ..LoadOptions::default() };

    let good = "x,g,w,y\n-2.0,north,0,0.1\n-0.5,north,1,0.9\n0.5,south,0,0.3\n1.5,south,1,1.2\n";
    let data = load_dataset(good.as_bytes(), &design, &opts)?;
    println!("loaded {} records across {} groups", data.len(), data.design().num_groups());

    let cases = [
        ("missing column", "x,w,y\n0.0,1,1.0\n"),
        ("treatment disagrees with cutoff", "x,g,w,y\n-2.0,north,1,0.1\n-0.5,north,1,0.9\n0.5,south,0,0.3\n1.5,south,1,1.2\n"),
        ("unknown group", "x,g,w,y\n0.0,east,0,1.0\n"),
        ("non-numeric value", "x,g,w,y\nabc,north,0,1.0\n"),
    ];
    for (what, text) in cases {
        match load_dataset(text.as_bytes(), &design, &opts) {
            Ok(_) => println!("{what}: unexpectedly accepted"),
            Err(e) => println!("{what}: {e}"),
        }
    }
    Ok(())
}
