// Save a model with its optimizer state and read it back bitwise.

use ordered_gnn::checkpoint::Checkpoint;
use ordered_gnn::train::{AdamState, TrainConfig};
use ordered_gnn::{ModelConfig, OrderedGnn};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = OrderedGnn::<f32>::new(
        ModelConfig {
            layers: 2,
            hidden: 8,
            chunk: 2,
            num_features: 3,
            num_classes: 2,
            ..ModelConfig::default()
        },
        1,
    )?;
    let ck = Checkpoint {
        optimizer: Some(AdamState::new(model.params())),
        model,
        train: Some(TrainConfig::default()),
        rng: None,
    };
    let bytes = ck.to_bytes()?;
    let back = Checkpoint::<f32>::from_bytes(&bytes)?;
    println!("{} bytes, {} parameters", bytes.len(), back.model.params().num_scalars());
    assert_eq!(back, ck);
    assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
