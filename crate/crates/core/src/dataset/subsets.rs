use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;

use super::algebra::SetExpr;
use super::tags::{Crosswalk, Proximity, Roadway, SpeedState, TrafficLight};
use super::{DatasetError, Manifest, Sample};

/// The seventeen scenario contexts, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseContext {
    Cross,
    NotCross,
    FourWay,
    Midblock,
    TJunction,
    Red,
    Yellow,
    Green,
    Zebra,
    NonZebra,
    CloseProximity,
    MediumProximity,
    FarProximity,
    Accelerating,
    Constant,
    Stopped,
    Decelerating,
}

impl BaseContext {
    pub const ALL: [BaseContext; 17] = [
        BaseContext::Cross,
        BaseContext::NotCross,
        BaseContext::FourWay,
        BaseContext::Midblock,
        BaseContext::TJunction,
        BaseContext::Red,
        BaseContext::Yellow,
        BaseContext::Green,
        BaseContext::Zebra,
        BaseContext::NonZebra,
        BaseContext::CloseProximity,
        BaseContext::MediumProximity,
        BaseContext::FarProximity,
        BaseContext::Accelerating,
        BaseContext::Constant,
        BaseContext::Stopped,
        BaseContext::Decelerating,
    ];

    pub fn notation(self) -> &'static str {
        use BaseContext::*;
        match self {
            Cross => "S_C",
            NotCross => "S_NC",
            FourWay => "S_FW",
            Midblock => "S_MB",
            TJunction => "S_TJ",
            Red => "S_Red",
            Yellow => "S_Yellow",
            Green => "S_Green",
            Zebra => "S_ZC",
            NonZebra => "S_NZC",
            CloseProximity => "S_CP",
            MediumProximity => "S_MP",
            FarProximity => "S_FP",
            Accelerating => "S_Acc",
            Constant => "S_Const",
            Stopped => "S_Stopped",
            Decelerating => "S_Dec",
        }
    }

    pub fn group(self) -> &'static str {
        use BaseContext::*;
        match self {
            Cross | NotCross => "Crossing State",
            FourWay | Midblock | TJunction => "Roadway Type",
            Red | Yellow | Green => "Traffic-Light State",
            Zebra | NonZebra => "Crosswalk State",
            CloseProximity | MediumProximity | FarProximity => "Proximity Level",
            Accelerating | Constant | Stopped | Decelerating => "Ego-Vehicle Speed",
        }
    }

    pub fn scenario(self) -> &'static str {
        use BaseContext::*;
        match self {
            Cross => "Cross",
            NotCross => "Not Cross",
            FourWay => "Four-Way Intersection",
            Midblock => "Midblock Crossing",
            TJunction => "T-Junction",
            Red => "Red",
            Yellow => "Yellow",
            Green => "Green",
            Zebra => "Zebra Crossing",
            NonZebra => "Non-Zebra Crossing",
            CloseProximity => "Close Proximity",
            MediumProximity => "Medium Proximity",
            FarProximity => "Far Proximity",
            Accelerating => "Accelerating",
            Constant => "Constant",
            Stopped => "Stopped",
            Decelerating => "Decelerating",
        }
    }

    /// Look up a notation. `S_CN` is accepted as an alias of `S_NC`.
    pub fn from_notation(s: &str) -> Option<BaseContext> {
        if s == "S_CN" {
            return Some(BaseContext::NotCross);
        }
        BaseContext::ALL.into_iter().find(|c| c.notation() == s)
    }

    pub fn contains(self, sample: &Sample) -> bool {
        use BaseContext::*;
        let t = &sample.tags;
        match self {
            Cross => sample.label.is_cross(),
            NotCross => !sample.label.is_cross(),
            FourWay => t.roadway == Roadway::FourWay,
            Midblock => t.roadway == Roadway::Midblock,
            TJunction => t.roadway == Roadway::TJunction,
            Red => t.light == TrafficLight::Red,
            Yellow => t.light == TrafficLight::Yellow,
            Green => t.light == TrafficLight::Green,
            Zebra => t.crosswalk == Crosswalk::Zebra,
            NonZebra => t.crosswalk == Crosswalk::NonZebra,
            CloseProximity => t.proximity == Proximity::Close,
            MediumProximity => t.proximity == Proximity::Medium,
            FarProximity => t.proximity == Proximity::Far,
            Accelerating => t.ego_speed_state == SpeedState::Accelerating,
            Constant => t.ego_speed_state == SpeedState::Constant,
            Stopped => t.ego_speed_state == SpeedState::Stopped,
            Decelerating => t.ego_speed_state == SpeedState::Decelerating,
        }
    }
}

/// A named subset of a manifest. Members are manifest indices in manifest order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextSet {
    pub notation: String,
    pub members: Vec<usize>,
}

impl ContextSet {
    pub fn new(notation: impl Into<String>, members: Vec<usize>) -> Self {
        ContextSet {
            notation: notation.into(),
            members,
        }
    }

    /// The cardinality C.
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_ids<'a>(&self, manifest: &'a Manifest) -> Vec<&'a str> {
        self.members
            .iter()
            .map(|&i| manifest.sample(i).id.as_str())
            .collect()
    }

    pub fn positives(&self, manifest: &Manifest) -> usize {
        self.members
            .iter()
            .filter(|&&i| manifest.sample(i).label.is_cross())
            .count()
    }
}

/// The base contexts of a manifest plus an evaluator for set expressions.
#[derive(Debug, Clone)]
pub struct ContextIndex {
    len: usize,
    sets: IndexMap<String, ContextSet>,
}

/// Build all seventeen base subsets. A sample may land in several of them.
pub fn build_subsets(manifest: &Manifest) -> ContextIndex {
    let mut sets = IndexMap::with_capacity(BaseContext::ALL.len());
    for ctx in BaseContext::ALL {
        let members = manifest
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| ctx.contains(s))
            .map(|(i, _)| i)
            .collect();
        sets.insert(ctx.notation().to_string(), ContextSet::new(ctx.notation(), members));
    }
    ContextIndex {
        len: manifest.len(),
        sets,
    }
}

impl ContextIndex {
    pub fn get(&self, notation: &str) -> Option<&ContextSet> {
        let key = BaseContext::from_notation(notation)?.notation();
        self.sets.get(key)
    }

    pub fn base_sets(&self) -> impl Iterator<Item = &ContextSet> {
        self.sets.values()
    }

    /// Number of samples in the indexed manifest.
    pub fn manifest_len(&self) -> usize {
        self.len
    }

    /// Evaluate a set expression such as `S_C ∩ (S_MB ∪ S_TJ) \ S_Red`.
    pub fn evaluate(&self, expr: &str) -> Result<ContextSet, DatasetError> {
        let parsed = SetExpr::parse(expr)?;
        self.evaluate_parsed(&parsed)
    }

    pub fn evaluate_parsed(&self, expr: &SetExpr) -> Result<ContextSet, DatasetError> {
        let mask = self.mask(expr)?;
        let members = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect();
        let notation = match expr {
            SetExpr::Name(n) => self.get(n).map(|s| s.notation.clone()).unwrap_or_else(|| n.clone()),
            other => other.to_string(),
        };
        Ok(ContextSet::new(notation, members))
    }

    fn mask(&self, expr: &SetExpr) -> Result<Vec<bool>, DatasetError> {
        Ok(match expr {
            SetExpr::Name(n) => {
                let set = self
                    .get(n)
                    .ok_or_else(|| DatasetError::UnknownNotation(n.clone()))?;
                let mut m = vec![false; self.len];
                for &i in &set.members {
                    m[i] = true;
                }
                m
            }
            SetExpr::Intersect(a, b) => zip_masks(self.mask(a)?, self.mask(b)?, |x, y| x && y),
            SetExpr::Union(a, b) => zip_masks(self.mask(a)?, self.mask(b)?, |x, y| x || y),
            SetExpr::Difference(a, b) => zip_masks(self.mask(a)?, self.mask(b)?, |x, y| x && !y),
        })
    }

    /// Cardinality table grouped like the context taxonomy.
    pub fn cardinality_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}| {:<22}| {:<10}| {:>6}", "Group Name", "Scenario Context", "Notation", "C");
        let _ = writeln!(out, "{}", "-".repeat(66));
        let mut last_group = "";
        for ctx in BaseContext::ALL {
            let group = if ctx.group() != last_group { ctx.group() } else { "" };
            last_group = ctx.group();
            let c = self.sets[ctx.notation()].cardinality();
            let _ = writeln!(out, "{:<22}| {:<22}| {:<10}| {:>6}", group, ctx.scenario(), ctx.notation(), c);
        }
        out
    }
}

fn zip_masks(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ContextTags, Dims, Label};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn sample(id: usize, cross: bool, tags: ContextTags) -> Sample {
        let t = 2;
        Sample {
            id: format!("s{id}"),
            label: Label::from(cross),
            tags,
            bbox: vec![[0.0, 0.0, 1.0, 1.0]; t],
            pose: vec![vec![0.0, 0.0]; t],
            local_context: vec![vec![0.0]; t],
            speed: vec![0.0; t],
            distance: None,
        }
    }

    fn tags(i: usize) -> ContextTags {
        ContextTags {
            roadway: Roadway::ALL[i % 4],
            light: TrafficLight::ALL[(i / 4) % 4],
            crosswalk: Crosswalk::ALL[(i / 2) % 2],
            proximity: Proximity::ALL[(i / 3) % 3],
            ego_speed_state: SpeedState::ALL[(i * 7 / 5) % 4],
        }
    }

    fn fixture(labels: &[bool]) -> Manifest {
        let dims = Dims { frames: 2, joints: 1, embed_dim: 1 };
        let samples = labels.iter().enumerate().map(|(i, &c)| sample(i, c, tags(i))).collect();
        Manifest::new(dims, samples, vec![]).unwrap()
    }

    #[test]
    fn four_way_green_accelerating_sample() {
        let t = ContextTags {
            roadway: Roadway::FourWay,
            light: TrafficLight::Green,
            crosswalk: Crosswalk::Zebra,
            proximity: Proximity::Far,
            ego_speed_state: SpeedState::Accelerating,
        };
        let dims = Dims { frames: 2, joints: 1, embed_dim: 1 };
        let m = Manifest::new(dims, vec![sample(0, false, t)], vec![]).unwrap();
        let idx = build_subsets(&m);
        let containing: Vec<&str> = idx
            .base_sets()
            .filter(|s| s.members == vec![0])
            .map(|s| s.notation.as_str())
            .collect();
        for n in ["S_FW", "S_Green", "S_Acc"] {
            assert!(containing.contains(&n), "{n} missing from {containing:?}");
        }
        assert!(!containing.contains(&"S_MB"));
    }

    #[test]
    fn empty_manifest_has_seventeen_empty_sets() {
        let m = Manifest::new(Dims::default(), vec![], vec![]).unwrap();
        let idx = build_subsets(&m);
        assert_eq!(idx.base_sets().count(), 17);
        assert!(idx.base_sets().all(|s| s.cardinality() == 0));
    }

    #[test]
    fn label_subsets_are_disjoint_and_cover() {
        let m = fixture(&[true, false, true, true, false]);
        let idx = build_subsets(&m);
        assert!(idx.evaluate("S_C ∩ S_NC").unwrap().is_empty());
        assert_eq!(idx.evaluate("S_C ∪ S_NC").unwrap().members, vec![0, 1, 2, 3, 4]);
        assert_eq!(idx.evaluate("S_C|S_CN").unwrap().cardinality(), 5);
    }

    #[test]
    fn unknown_notation_is_reported() {
        let m = fixture(&[true, false]);
        let idx = build_subsets(&m);
        match idx.evaluate("S_C ∩ S_Bogus") {
            Err(DatasetError::UnknownNotation(n)) => assert_eq!(n, "S_Bogus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn notation_records_expression() {
        let m = fixture(&[true, false]);
        let idx = build_subsets(&m);
        assert_eq!(idx.evaluate("S_C").unwrap().notation, "S_C");
        assert_eq!(idx.evaluate("S_CN").unwrap().notation, "S_NC");
        assert_eq!(idx.evaluate("S_C∩S_Acc").unwrap().notation, "S_C ∩ S_Acc");
    }

    fn brute(idx: &ContextIndex, m: &Manifest, name: &str) -> BTreeSet<String> {
        idx.get(name).unwrap().member_ids(m).into_iter().map(String::from).collect()
    }

    #[test]
    fn intersection_matches_brute_force_membership() {
        let m = fixture(&[true, false, true, false, true]);
        let idx = build_subsets(&m);
        let a = brute(&idx, &m, "S_C");
        let b = brute(&idx, &m, "S_ZC");
        let expected: BTreeSet<String> = m
            .samples()
            .iter()
            .filter(|s| a.contains(&s.id) && b.contains(&s.id))
            .map(|s| s.id.clone())
            .collect();
        let got: BTreeSet<String> = idx
            .evaluate("S_C ∩ S_ZC")
            .unwrap()
            .member_ids(&m)
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn partition_properties() {
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let m = fixture(&labels);
        let idx = build_subsets(&m);
        let count = |names: &[&str], i: usize| {
            names.iter().filter(|n| idx.get(n).unwrap().members.contains(&i)).count()
        };
        for i in 0..m.len() {
            assert_eq!(count(&["S_C", "S_NC"], i), 1);
            assert_eq!(count(&["S_CP", "S_MP", "S_FP"], i), 1);
            assert_eq!(count(&["S_Acc", "S_Const", "S_Stopped", "S_Dec"], i), 1);
            assert_eq!(count(&["S_ZC", "S_NZC"], i), 1);
            assert!(count(&["S_FW", "S_MB", "S_TJ"], i) <= 1);
            assert!(count(&["S_Red", "S_Yellow", "S_Green"], i) <= 1);
        }
        // axis sums count samples with a non-other / non-none value
        let roadway: usize = ["S_FW", "S_MB", "S_TJ"].iter().map(|n| idx.get(n).unwrap().cardinality()).sum();
        let tagged = m.samples().iter().filter(|s| s.tags.roadway != Roadway::Other).count();
        assert_eq!(roadway, tagged);
        let light: usize = ["S_Red", "S_Yellow", "S_Green"].iter().map(|n| idx.get(n).unwrap().cardinality()).sum();
        let lit = m.samples().iter().filter(|s| s.tags.light != TrafficLight::None).count();
        assert_eq!(light, lit);
    }

    #[test]
    fn cardinality_table_lists_every_notation() {
        let m = fixture(&[true, false, true]);
        let table = build_subsets(&m).cardinality_table();
        for ctx in BaseContext::ALL {
            assert!(table.contains(ctx.notation()));
        }
        assert!(table.contains("Ego-Vehicle Speed"));
    }

    const NAMES: [&str; 8] = ["S_C", "S_NC", "S_FW", "S_ZC", "S_CP", "S_Acc", "S_Green", "S_Dec"];

    proptest! {
        #[test]
        fn algebra_laws_hold_against_membership_oracle(
            labels in proptest::collection::vec(any::<bool>(), 0..30),
            a in 0usize..8, b in 0usize..8, c in 0usize..8,
        ) {
            let m = fixture(&labels);
            let idx = build_subsets(&m);
            let (a, b, c) = (NAMES[a], NAMES[b], NAMES[c]);
            let ev = |e: String| idx.evaluate(&e).unwrap().members;
            let set = |n: &str| -> BTreeSet<usize> { idx.get(n).unwrap().members.iter().copied().collect() };

            prop_assert_eq!(ev(format!("{a} ∩ {b}")), ev(format!("{b} ∩ {a}")));
            prop_assert_eq!(ev(format!("({a} ∩ {b}) ∩ {c}")), ev(format!("{a} ∩ ({b} ∩ {c})")));
            prop_assert_eq!(ev(format!("{a} ∩ {a}")), idx.get(a).unwrap().members.clone());
            let diff = ev(format!("{a} \\ {a}"));
            prop_assert!(diff.is_empty());

            let (sa, sb, sc) = (set(a), set(b), set(c));
            let oracle: Vec<usize> = (0..m.len())
                .filter(|i| (sa.contains(i) || sb.contains(i)) && !sc.contains(i))
                .collect();
            prop_assert_eq!(ev(format!("({a} ∪ {b}) \\ {c}")), oracle);
            let oracle: Vec<usize> = (0..m.len())
                .filter(|i| sa.contains(i) || (sb.contains(i) && sc.contains(i)))
                .collect();
            prop_assert_eq!(ev(format!("{a} ∪ {b} ∩ {c}")), oracle);
        }
    }
}
