// Record gates in an eval-mode pass and print per-channel boxplot
// statistics and soft split points.

use std::sync::Arc;

use ordered_gnn::graph::synthetic::{random_features, random_graph};
use ordered_gnn::{ModelConfig, OrderedGnn};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let graph = Arc::new(random_graph(20, 0.2, 4));
    let x = random_features(20, 5, 5);
    let mut model = OrderedGnn::<f64>::new(
        ModelConfig {
            layers: 3,
            hidden: 8,
            chunk: 2,
            num_features: 5,
            num_classes: 2,
            ..ModelConfig::default()
        },
        9,
    )?;
    // Push all split-point mass to the first gate position at layer 1.
    model.force_gate_bias(1, &[40.0, 0.0, 0.0, 0.0])?;
    let (_, _, trace) = model.inspect(&graph, &x)?;
    print!("{}", trace.stats_tsv());
    let first = trace.layers[0].channel_stats();
    assert!((first[0].median - 1.0).abs() < 1e-12);
    assert!(first[1..].iter().all(|c| c.median < 1e-12));
    print!("{}", trace.split_points_tsv().lines().take(4).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
