//! Regenerates the bundled two-class sine dataset:
//!
//! ```text
//! cargo run -p deepself-data --example make_synthetic -- data/synthetic
//! ```

use std::path::PathBuf;

use deepself_data::{write_sine_dataset, SineTask};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into()));
    let manifest = write_sine_dataset(&SineTask::new(5.0, 10.0), &dir, [100, 40, 40], 5, 2024)?;
    println!("{} rows in {}", manifest.len(), dir.join("manifest.csv").display());
    Ok(())
}
