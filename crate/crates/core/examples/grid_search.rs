// Search a small hyperparameter grid and print the leaderboard.

use std::sync::Arc;

use ordered_gnn::graph::synthetic::two_cliques;
use ordered_gnn::graph::{generate_splits, SplitRatios};
use ordered_gnn::train::grid::{grid_search, leaderboard_tsv, GridSpec};
use ordered_gnn::train::{Problem, TrainConfig};
use ordered_gnn::ModelConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (graph, data) = two_cliques(6);
    let splits = generate_splits(graph.num_nodes(), &data.labels, 2, SplitRatios::default(), 2)?;
    let problem = Problem::<f64>::new(Arc::new(graph), &data)?;
    let model = ModelConfig {
        layers: 2,
        hidden: 8,
        chunk: 2,
        num_features: data.num_features(),
        num_classes: data.num_classes,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        max_epochs: 30,
        patience: 10,
        ..TrainConfig::default()
    };
    let spec = GridSpec {
        dropout_theta: vec![0.0, 0.3],
        dropout_xi: vec![0.0],
        l2_theta: vec![5e-4],
        l2_xi: vec![5e-4],
        lr: vec![0.01, 0.001],
        mlp_layers: vec![1],
        tie_gates: vec![false],
    };
    let outcome = grid_search(&spec, &model, &train, &problem, &splits.splits, None, Vec::new(), &|_| Ok(()))?;
    print!("{}", leaderboard_tsv(&outcome.leaderboard));
    println!("best cell {:?}", outcome.best.map(|c| c.id));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
