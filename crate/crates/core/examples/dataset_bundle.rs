// Sample a two-community graph, write it as a bundle, read it back.

use ordered_gnn::graph::synthetic::BlockModel;
use ordered_gnn::graph::{generate_splits, Bundle, RawCounts, SourceFormat, SplitRatios};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (graph, data) = BlockModel {
        nodes_per_class: 30,
        classes: 2,
        p_in: 0.2,
        p_out: 0.02,
        features: 6,
        signal: 1.0,
    }
    .sample(7);
    let splits = generate_splits(graph.num_nodes(), &data.labels, 0, SplitRatios::default(), 5)?;
    let raw = RawCounts {
        edge_records: graph.num_edges(),
        dangling_records: 0,
    };
    let bundle = Bundle::new(graph, data, Some(splits), SourceFormat::Synthetic, raw)?;

    let dir = std::env::temp_dir().join(format!("ognn-bundle-example-{}", std::process::id()));
    bundle.write(&dir)?;
    let back = Bundle::read(&dir)?;
    let m = &back.manifest;
    println!(
        "{}: {} nodes, {} edges, {} features, {} classes, homophily {:.2}, {} splits",
        m.name, m.nodes, m.edges, m.features, m.classes, m.homophily, m.splits
    );
    assert_eq!(back, bundle);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
