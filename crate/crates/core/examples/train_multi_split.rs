// Train an ordered-gating model on several splits and report mean ± std.

use std::sync::Arc;

use ordered_gnn::graph::synthetic::BlockModel;
use ordered_gnn::graph::{generate_splits, SplitRatios};
use ordered_gnn::train::{multi_split_report, Problem, TrainConfig};
use ordered_gnn::{ModelConfig, Variant};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (graph, data) = BlockModel {
        nodes_per_class: 25,
        classes: 3,
        p_in: 0.2,
        p_out: 0.03,
        features: 8,
        signal: 0.6,
    }
    .sample(3);
    let splits = generate_splits(graph.num_nodes(), &data.labels, 1, SplitRatios::default(), 3)?;
    let problem = Problem::<f64>::new(Arc::new(graph), &data)?;
    let model = ModelConfig {
        layers: 3,
        hidden: 16,
        chunk: 4,
        variant: Variant::OrderedSoftor,
        num_features: data.num_features(),
        num_classes: data.num_classes,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        lr: 0.01,
        max_epochs: 60,
        patience: 20,
        ..TrainConfig::default()
    };
    let report = multi_split_report(&model, &problem, &splits.splits, &train)?;
    for (i, r) in report.runs.iter().enumerate() {
        println!("split {i}: best epoch {} val {:.3} test {:.3}", r.best_epoch, r.best_val_acc, r.test_acc);
    }
    println!("{}", report.summary_line());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
