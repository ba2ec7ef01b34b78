use crate::matrix::{Matrix, Real};

/// Gate values recorded during an eval-mode forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateTrace<T> {
    pub layers: Vec<LayerGates<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGates<T> {
    /// Per-layer cumax output before accumulation, when the variant has one.
    pub raw: Option<Matrix<T>>,
    /// Gate applied in the combine step, `N × D_m`. Rounding residue from
    /// the softmax sum is clamped so every entry lies in `[0, 1]`.
    pub gates: Matrix<T>,
    /// Soft split point per node: the row sum of `gates`, in gate units.
    pub split_points: Vec<T>,
}

/// Boxplot statistics of one gate channel over all nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl<T: Real> LayerGates<T> {
    pub fn new(raw: Option<Matrix<T>>, gates: Matrix<T>) -> Self {
        let unit = |m: Matrix<T>| m.map(|v| v.max(T::zero()).min(T::one()));
        let raw = raw.map(unit);
        let gates = unit(gates);
        let split_points = (0..gates.rows())
            .map(|r| gates.row(r).iter().copied().sum())
            .collect();
        LayerGates {
            raw,
            gates,
            split_points,
        }
    }

    pub fn channel_stats(&self) -> Vec<ChannelStats> {
        (0..self.gates.cols())
            .map(|c| {
                let mut col: Vec<f64> = (0..self.gates.rows())
                    .map(|r| self.gates.get(r, c).to_f64_lossless())
                    .collect();
                col.sort_by(f64::total_cmp);
                ChannelStats {
                    min: col.first().copied().unwrap_or(f64::NAN),
                    q1: quantile(&col, 0.25),
                    median: quantile(&col, 0.5),
                    q3: quantile(&col, 0.75),
                    max: col.last().copied().unwrap_or(f64::NAN),
                }
            })
            .collect()
    }
}

impl<T: Real> GateTrace<T> {
    pub fn push(&mut self, layer: LayerGates<T>) {
        self.layers.push(layer);
    }

    /// Tab-separated per-channel statistics, one row per layer and channel.
    pub fn stats_tsv(&self) -> String {
        let mut out = String::from("layer\tchannel\tmin\tq1\tmedian\tq3\tmax\n");
        for (k, layer) in self.layers.iter().enumerate() {
            for (c, s) in layer.channel_stats().iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    k + 1,
                    c,
                    s.min,
                    s.q1,
                    s.median,
                    s.q3,
                    s.max
                ));
            }
        }
        out
    }

    /// Tab-separated soft split points, one row per node and one column per
    /// layer.
    pub fn split_points_tsv(&self) -> String {
        let mut out = String::from("node");
        for k in 1..=self.layers.len() {
            out.push_str(&format!("\tlayer_{k}"));
        }
        out.push('\n');
        let n = self.layers.first().map_or(0, |l| l.split_points.len());
        for v in 0..n {
            out.push_str(&v.to_string());
            for layer in &self.layers {
                out.push_str(&format!("\t{}", layer.split_points[v]));
            }
            out.push('\n');
        }
        out
    }
}

/// Quantile of sorted data with linear interpolation between order
/// statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}
