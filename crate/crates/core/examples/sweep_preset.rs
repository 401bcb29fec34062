//! A small experiment grid from a TOML config, written to a temp directory
//! with its summary and chart.

use leakybias::experiment::{run_preset, ExperimentConfig};

fn main() -> leakybias::error::Result<()> {
    let out = std::env::temp_dir().join("leakybias_sweep_example");
    let text = format!(
        r#"
preset = "rank_vs_dimension"
seeds = [0, 1]
output_dir = "{}"
plot = true

[params]
n = 40
m = 32
steps = 30

[grid]
d = [256, 1024, 4096]
"#,
        out.display()
    );
    let cfg = ExperimentConfig::parse(&text)?;
    let summary = run_preset(&cfg, 1, true)?;
    for row in &summary.rows {
        println!("{:<8} seed {} rel srank {:.4}", row.params, row.seed, row.rel_srank.unwrap_or(f64::NAN));
    }
    if let Some(t) = &summary.trend {
        println!("{}: {}", t.description, if t.holds { "holds" } else { "violated" });
    }
    for chart in &summary.charts {
        println!("chart {}", chart.display());
    }
    Ok(())
}
