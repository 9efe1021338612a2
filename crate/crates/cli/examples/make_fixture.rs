//! Writes a synthetic five-class fixture and a matching run config.
//!
//! Usage: `cargo run -p gradebal-cli --example make_fixture -- <dir> [per_class] [target]`

use std::path::PathBuf;

use gradebal_cli::fixture::{write_fixture, FixtureSpec};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture".into()));
    let per_class: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let target: usize = args.next().map_or(Ok(40), |s| s.parse())?;
    let fx = write_fixture(&dir, &FixtureSpec::five_class(per_class))?;
    let config = serde_json::json!({
        "task": "multiclass",
        "paths": {
            "manifest_csv": fx.manifest_csv.file_name().unwrap().to_str().unwrap(),
            "image_dir": "images",
            "out_dir": "out",
        },
        "balance": { "target_per_class": target },
        "pipeline": { "out_size": 64 },
        "train": { "max_epochs": 200 },
    });
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&config)?)?;
    println!("{}", dir.join("run.json").display());
    Ok(())
}
