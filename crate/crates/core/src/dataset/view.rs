use super::{Manifest, Modality, Sample};
use crate::features::FeatureLayout;

/// A read-only view of a manifest in which some modalities of some samples
/// are borrowed from other samples. Labels and tags never move.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    manifest: &'a Manifest,
    sources: [Option<Vec<usize>>; 4],
}

impl<'a> DatasetView<'a> {
    pub fn identity(manifest: &'a Manifest) -> Self {
        DatasetView {
            manifest,
            sources: [None, None, None, None],
        }
    }

    pub fn manifest(&self) -> &'a Manifest {
        self.manifest
    }

    /// Index of the sample whose `modality` sequence sample `i` shows.
    pub fn source(&self, modality: Modality, i: usize) -> usize {
        match &self.sources[modality.index()] {
            Some(map) => map[i],
            None => i,
        }
    }

    /// Let sample `target` show `modality` from sample `source`.
    pub fn assign(&mut self, modality: Modality, target: usize, source: usize) {
        let n = self.manifest.len();
        let map = self.sources[modality.index()].get_or_insert_with(|| (0..n).collect());
        map[target] = source;
    }

    /// True when no modality of any sample is borrowed.
    pub fn is_identity(&self) -> bool {
        self.sources
            .iter()
            .flatten()
            .all(|map| map.iter().enumerate().all(|(i, &s)| i == s))
    }

    pub fn sample_for(&self, modality: Modality, i: usize) -> &'a Sample {
        self.manifest.sample(self.source(modality, i))
    }

    pub fn label(&self, i: usize) -> bool {
        self.manifest.sample(i).label.is_cross()
    }

    pub fn flatten_row(&self, i: usize, layout: &FeatureLayout, out: &mut Vec<f64>) {
        layout.flatten_with(|m| self.sample_for(m, i), out);
    }

    /// Flatten the given samples into one row-major buffer.
    pub fn flatten_rows(&self, indices: &[usize], layout: &FeatureLayout) -> Vec<f64> {
        let mut data = Vec::with_capacity(indices.len() * layout.dim());
        let mut row = Vec::new();
        for &i in indices {
            self.flatten_row(i, layout, &mut row);
            data.extend_from_slice(&row);
        }
        data
    }

    /// Copy the view into a standalone manifest.
    pub fn materialize(&self) -> Manifest {
        let samples = (0..self.manifest.len())
            .map(|i| {
                let mut s = self.manifest.sample(i).clone();
                for m in Modality::ALL {
                    let src = self.source(m, i);
                    if src != i {
                        s.copy_modality_from(m, self.manifest.sample(src));
                    }
                }
                s
            })
            .collect();
        self.manifest.with_samples(samples)
    }
}
