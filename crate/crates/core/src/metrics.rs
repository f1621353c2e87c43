//! Confusion matrix over the five modulation classes.

use crate::sigsynth::ModulationScheme;

const N: usize = ModulationScheme::ALL.len();

/// Rows are ground truth, columns are predictions, both in
/// [`ModulationScheme::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N]; N],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: ModulationScheme, predicted: ModulationScheme) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N).map(|i| self.counts[i][i]).sum()
    }

    /// trace / total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.trace() as f64 / t as f64
        }
    }

    pub fn row_totals(&self) -> [u64; N] {
        let mut out = [0; N];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            *o = row.iter().sum();
        }
        out
    }

    /// Row-normalized percentages (each non-empty row sums to 100).
    pub fn row_percentages(&self) -> [[f64; N]; N] {
        let mut out = [[0.0; N]; N];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            let s: u64 = row.iter().sum();
            if s > 0 {
                for (v, &c) in o.iter_mut().zip(row) {
                    *v = 100.0 * c as f64 / s as f64;
                }
            }
        }
        out
    }

    /// Symmetric off-diagonal mass of each unordered class pair, largest first.
    pub fn confused_pairs(&self) -> Vec<((ModulationScheme, ModulationScheme), u64)> {
        let mut pairs = Vec::new();
        for i in 0..N {
            for j in i + 1..N {
                pairs.push((
                    (ModulationScheme::ALL[i], ModulationScheme::ALL[j]),
                    self.counts[i][j] + self.counts[j][i],
                ));
            }
        }
        pairs.sort_by(|a, b| b.1.cmp(&a.1));
        pairs
    }
}
