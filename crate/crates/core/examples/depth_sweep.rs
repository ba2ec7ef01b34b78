// Accuracy as depth grows, with every other setting held fixed.

use std::sync::Arc;

use ordered_gnn::graph::synthetic::BlockModel;
use ordered_gnn::graph::{generate_splits, SplitRatios};
use ordered_gnn::train::{depth_sweep, Problem, TrainConfig};
use ordered_gnn::ModelConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (graph, data) = BlockModel {
        nodes_per_class: 20,
        classes: 2,
        p_in: 0.25,
        p_out: 0.03,
        features: 4,
        signal: 0.5,
    }
    .sample(21);
    let splits = generate_splits(graph.num_nodes(), &data.labels, 3, SplitRatios::default(), 2)?;
    let problem = Problem::<f64>::new(Arc::new(graph), &data)?;
    let template = ModelConfig {
        hidden: 8,
        chunk: 2,
        num_features: data.num_features(),
        num_classes: data.num_classes,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        lr: 0.01,
        max_epochs: 40,
        patience: 15,
        ..TrainConfig::default()
    };
    for (depth, r) in depth_sweep(&template, &[1, 4, 8], &problem, &splits.splits, &train)? {
        println!("depth {depth:2}: {}", r.summary_line());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
