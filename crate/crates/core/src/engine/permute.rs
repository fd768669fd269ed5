//! Seeded permutation of feature sequences within and across contexts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::dataset::{ContextSet, DatasetView, Manifest, Modality};
use crate::seed::derived_rng;

/// What moves in a shuffle. Only whole per-sample sequences are supported:
/// all frames of a modality travel together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationUnit {
    #[default]
    Sequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationPlan {
    pub feature: Modality,
    pub context: ContextSet,
    /// `N`, the number of independent full-context shuffles.
    pub repetitions: usize,
    pub base_seed: u64,
    pub unit: PermutationUnit,
}

impl PermutationPlan {
    /// A plan with `N` equal to the context cardinality (at least 1).
    pub fn new(feature: Modality, context: ContextSet, base_seed: u64) -> Self {
        let repetitions = context.cardinality().max(1);
        PermutationPlan {
            feature,
            context,
            repetitions,
            base_seed,
            unit: PermutationUnit::Sequence,
        }
    }

    pub fn with_repetitions(mut self, repetitions: usize) -> Result<Self, EngineError> {
        if repetitions == 0 {
            return Err(EngineError::ZeroRepetitions);
        }
        self.repetitions = repetitions;
        Ok(self)
    }

    /// Positions `pi` over the context members for repetition `j`: member
    /// `k` receives the sequence of member `pi[k]`. Depends only on
    /// `(base_seed, context notation, feature, j)`.
    pub fn permutation(&self, j: usize) -> Vec<usize> {
        let mut pi: Vec<usize> = (0..self.context.cardinality()).collect();
        let mut rng = derived_rng(self.base_seed, "within", &stream_label(&[&self.context.notation, self.feature.as_str()]), j as u64);
        pi.shuffle(&mut rng);
        pi
    }

    /// SHA-256 over every repetition's permutation, as lowercase hex.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for j in 0..self.repetitions {
            for k in self.permutation(j) {
                h.update((self.context.members[k] as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn stream_label(parts: &[&str]) -> String {
    parts.join("\u{1f}")
}

/// A permuted view together with the positions that produced it.
#[derive(Debug, Clone)]
pub struct PermutedView<'a> {
    pub view: DatasetView<'a>,
    pub permutation: Vec<usize>,
    /// Set when the context is too small for any shuffle to differ from
    /// the identity.
    pub warning: Option<String>,
}

/// Reassign `feature` among the plan's context members for repetition `j`.
/// The manifest is never touched.
pub fn permute_within_context<'a>(
    manifest: &'a Manifest,
    plan: &PermutationPlan,
    j: usize,
) -> Result<PermutedView<'a>, EngineError> {
    if j >= plan.repetitions {
        return Err(EngineError::RepetitionOutOfRange {
            j,
            repetitions: plan.repetitions,
        });
    }
    let permutation = plan.permutation(j);
    let view = apply_permutation(&DatasetView::identity(manifest), plan.feature, &plan.context.members, &permutation);
    let warning = (plan.context.cardinality() < 2).then(|| {
        format!(
            "context {} has {} member(s); permutation is the identity",
            plan.context.notation,
            plan.context.cardinality()
        )
    });
    Ok(PermutedView {
        view,
        permutation,
        warning,
    })
}

/// Compose a member-position permutation onto `view` for one modality.
pub fn apply_permutation<'a>(
    view: &DatasetView<'a>,
    feature: Modality,
    members: &[usize],
    permutation: &[usize],
) -> DatasetView<'a> {
    let mut out = view.clone();
    for (k, &p) in permutation.iter().enumerate() {
        let target = members[k];
        let source = view.source(feature, members[p]);
        if out.source(feature, target) != source {
            out.assign(feature, target, source);
        }
    }
    out
}

pub fn invert_permutation(permutation: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; permutation.len()];
    for (k, &p) in permutation.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// A cross-context donation: `donors[k]` is the manifest index whose
/// sequence source member `k` received.
#[derive(Debug, Clone)]
pub struct CrossPermuted<'a> {
    pub view: DatasetView<'a>,
    pub donors: Vec<usize>,
}

/// Replace every source member's `feature` sequence with that of a donor
/// drawn uniformly with replacement. Donors always give their original
/// sequences; members of both sets may donate and be replaced.
pub fn cross_context_permute<'a>(
    manifest: &'a Manifest,
    feature: Modality,
    source: &ContextSet,
    donor: &ContextSet,
    seed: u64,
) -> Result<CrossPermuted<'a>, EngineError> {
    if donor.is_empty() {
        return Err(EngineError::EmptyContext(donor.notation.clone()));
    }
    if source.is_empty() {
        return Err(EngineError::EmptyContext(source.notation.clone()));
    }
    let mut rng = derived_rng(seed, "cross", &stream_label(&[&source.notation, &donor.notation, feature.as_str()]), 0);
    let donors: Vec<usize> = source
        .members
        .iter()
        .map(|_| donor.members[rng.random_range(0..donor.members.len())])
        .collect();
    let mut view = DatasetView::identity(manifest);
    for (&target, &d) in source.members.iter().zip(&donors) {
        if target != d {
            view.assign(feature, target, d);
        }
    }
    Ok(CrossPermuted { view, donors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_subsets, ContextIndex};
    use crate::synth::{generate, GeneratorSpec};

    fn data() -> (Manifest, ContextIndex) {
        let mut spec = GeneratorSpec::new(60, 2);
        spec.dependency.speed = 1.0;
        let m = generate(&spec).unwrap();
        let idx = build_subsets(&m);
        (m, idx)
    }

    #[test]
    fn two_member_swap_moves_only_the_feature() {
        let (m, _) = data();
        let ctx = ContextSet::new("pair", vec![3, 8]);
        let plan = PermutationPlan::new(Modality::Speed, ctx, 0).with_repetitions(64).unwrap();
        let j = (0..64).find(|&j| plan.permutation(j) == vec![1, 0]).expect("some seed swaps");
        let p = permute_within_context(&m, &plan, j).unwrap();
        assert_eq!(p.view.sample_for(Modality::Speed, 3).speed, m.sample(8).speed);
        assert_eq!(p.view.sample_for(Modality::Speed, 8).speed, m.sample(3).speed);
        assert_eq!(p.view.source(Modality::Bbox, 3), 3);
        assert!(p.warning.is_none());
    }

    #[test]
    fn singleton_is_identity_with_warning() {
        let (m, _) = data();
        let plan = PermutationPlan::new(Modality::Pose, ContextSet::new("one", vec![5]), 9);
        let p = permute_within_context(&m, &plan, 0).unwrap();
        assert!(p.view.is_identity());
        assert!(p.warning.is_some());
        assert!(matches!(
            permute_within_context(&m, &plan, 1),
            Err(EngineError::RepetitionOutOfRange { .. })
        ));
    }

    #[test]
    fn inverse_restores_view() {
        let (m, idx) = data();
        let ctx = idx.get("S_NC").unwrap().clone();
        let plan = PermutationPlan::new(Modality::Bbox, ctx, 4);
        let p = permute_within_context(&m, &plan, 2).unwrap();
        let back = apply_permutation(&p.view, plan.feature, &plan.context.members, &invert_permutation(&p.permutation));
        assert!(back.is_identity());
        assert_eq!(back.materialize().to_json(), m.to_json());
    }

    #[test]
    fn streams_depend_on_context_feature_and_j() {
        let (_, idx) = data();
        let ctx = idx.get("S_NC").unwrap().clone();
        let a = PermutationPlan::new(Modality::Bbox, ctx.clone(), 4);
        let b = PermutationPlan::new(Modality::Pose, ctx, 4);
        assert_ne!(a.permutation(0), b.permutation(0));
        assert_ne!(a.permutation(0), a.permutation(1));
        assert_eq!(a.permutation(3), a.clone().permutation(3));
        assert_eq!(a.digest(), a.clone().digest());
    }

    #[test]
    fn single_donor_fills_every_source() {
        let (m, idx) = data();
        let source = idx.get("S_C").unwrap();
        let donor = ContextSet::new("d", vec![7]);
        let c = cross_context_permute(&m, Modality::Speed, source, &donor, 1).unwrap();
        for &i in &source.members {
            assert_eq!(c.view.source(Modality::Speed, i), 7);
        }
        assert!(c.view.sample_for(Modality::Bbox, source.members[0]).id == m.sample(source.members[0]).id);
        let empty = ContextSet::new("e", vec![]);
        assert!(cross_context_permute(&m, Modality::Speed, source, &empty, 1).is_err());
    }
}
