// Receptive-field and permutation audits on a random graph.

use std::sync::Arc;

use ordered_gnn::graph::synthetic::{random_features, random_graph};
use ordered_gnn::oracle::{audit_model_config, permutation_audit, receptive_field_audit};
use ordered_gnn::OrderedGnn;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let graph = Arc::new(random_graph(15, 0.15, 11));
    let x = random_features(15, 3, 12);
    let model = OrderedGnn::new(audit_model_config(3, 3), 13)?;
    for k in 0..=3 {
        let r = receptive_field_audit(&model, &graph, &x, k, 20, k as u64)?;
        println!("k={k}: {}", r.line());
        assert!(r.passed());
    }
    let r = permutation_audit(&model, &graph, &x, 10, 1)?;
    println!("{}", r.line());
    assert!(r.passed());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
