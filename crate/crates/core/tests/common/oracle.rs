//! Independent reference implementations used as test oracles.

use std::collections::BTreeMap;

use lateral_core::adjudicator::{ParseStatus, Prediction};
use lateral_core::dataset::{DatasetSplit, PuzzleInstance, SplitRole, Subtask, Variant};
use lateral_core::retrieval::{EmbeddingRecord, EmbeddingStore};
use rand::seq::SliceRandom;
use rand::Rng;

/// Column counts as (correct, total) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub ori: (u64, u64),
    pub sem: (u64, u64),
    pub con: (u64, u64),
    pub ori_sem: (u64, u64),
    pub ori_sem_con: (u64, u64),
    pub overall: (u64, u64),
}

/// A synthetic scored run: the split, its predictions and the intended correctness bits.
pub struct SyntheticRun {
    pub split: DatasetSplit,
    pub predictions: Vec<Prediction>,
    pub correct: BTreeMap<String, bool>,
}

/// Scores from first principles over the correctness bits.
pub fn brute_force_score(split: &DatasetSplit, correct: &BTreeMap<String, bool>) -> Counts {
    let mut c = Counts::default();
    let mut groups: BTreeMap<&str, Vec<(Variant, bool)>> = BTreeMap::new();
    for inst in &split.instances {
        let ok = correct[&inst.id];
        let col = match inst.variant {
            Variant::Original => &mut c.ori,
            Variant::Semantic => &mut c.sem,
            Variant::Context => &mut c.con,
        };
        col.1 += 1;
        c.overall.1 += 1;
        if ok {
            col.0 += 1;
            c.overall.0 += 1;
        }
        groups.entry(&inst.group_id).or_default().push((inst.variant, ok));
    }
    for members in groups.values() {
        let find = |v: Variant| members.iter().find(|m| m.0 == v).map(|m| m.1);
        let (o, s, x) = (find(Variant::Original), find(Variant::Semantic), find(Variant::Context));
        if let (Some(o), Some(s)) = (o, s) {
            c.ori_sem.1 += 1;
            if o && s {
                c.ori_sem.0 += 1;
            }
            if let Some(x) = x {
                c.ori_sem_con.1 += 1;
                if o && s && x {
                    c.ori_sem_con.0 += 1;
                }
            }
        }
    }
    c
}

pub fn counts_of(report: &lateral_core::adjudicator::MetricsReport) -> Counts {
    let p = |f: lateral_core::adjudicator::Fraction| (f.num, f.den);
    Counts {
        ori: p(report.ori),
        sem: p(report.sem),
        con: p(report.con),
        ori_sem: p(report.ori_sem),
        ori_sem_con: p(report.ori_sem_con),
        overall: p(report.overall),
    }
}

fn instance(id: String, group: &str, variant: Variant, label: usize, n_choices: usize) -> PuzzleInstance {
    PuzzleInstance {
        question: format!("question {id}?"),
        choices: (0..n_choices).map(|i| format!("choice {i}")).collect(),
        id,
        subtask: Subtask::Sentence,
        label,
        variant,
        group_id: group.to_string(),
        distractors: None,
        extra: Default::default(),
    }
}

/// Prediction that is correct or not as requested, with varied parse outcomes.
pub fn prediction_for<R: Rng>(rng: &mut R, inst: &PuzzleInstance, correct: bool) -> Prediction {
    let n = inst.choices.len();
    let (predicted, status) = if correct {
        (Some(inst.label + 1), ParseStatus::Parsed)
    } else {
        match rng.random_range(0..4) {
            0 => (None, ParseStatus::Unparseable),
            1 => (None, ParseStatus::Ambiguous),
            2 => (None, ParseStatus::OutOfRange),
            _ => (Some((inst.label + 1) % n + 1), ParseStatus::Parsed),
        }
    };
    Prediction {
        instance_id: inst.id.clone(),
        predicted,
        raw_text: String::new(),
        parse_status: status,
    }
}

/// Up to `max_groups` groups, some incomplete, in shuffled file order.
pub fn synthetic_run<R: Rng>(rng: &mut R, max_groups: usize, complete_only: bool) -> SyntheticRun {
    let groups = rng.random_range(1..=max_groups);
    let mut instances = Vec::new();
    for g in 0..groups {
        let group = format!("g{g:03}");
        for variant in Variant::ALL {
            if complete_only || variant == Variant::Original || rng.random_bool(0.8) {
                let n = rng.random_range(2..=5);
                instances.push(instance(format!("{group}-{variant:?}"), &group, variant, rng.random_range(0..n), n));
            }
        }
    }
    instances.shuffle(rng);
    let mut correct = BTreeMap::new();
    let mut predictions = Vec::new();
    for inst in &instances {
        let ok = rng.random_bool(0.6);
        correct.insert(inst.id.clone(), ok);
        predictions.push(prediction_for(rng, inst, ok));
    }
    predictions.shuffle(rng);
    SyntheticRun {
        split: DatasetSplit {
            subtask: Subtask::Sentence,
            role: SplitRole::Test,
            instances,
        },
        predictions,
        correct,
    }
}

fn reference_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Exhaustive scan: repeatedly takes the best remaining candidate.
pub fn scan_top_n(query_id: &str, query: &[f64], store: &[EmbeddingRecord], n: usize) -> Vec<String> {
    let mut remaining: Vec<(f64, &str)> = store
        .iter()
        .filter(|r| r.instance_id != query_id)
        .map(|r| (reference_cosine(query, &r.vector), r.instance_id.as_str()))
        .collect();
    let mut out = Vec::new();
    while out.len() < n && !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (s, id) = remaining[i];
            let (bs, bid) = remaining[best];
            if s > bs || (s == bs && id < bid) {
                best = i;
            }
        }
        out.push(remaining.swap_remove(best).1.to_string());
    }
    out
}

/// Random store with engineered ties: exact duplicates and power-of-two rescalings.
pub fn random_store<R: Rng>(rng: &mut R, max_len: usize, max_dim: usize) -> Vec<EmbeddingRecord> {
    let dim = rng.random_range(1..=max_dim);
    let len = rng.random_range(1..=max_len);
    let mut records: Vec<EmbeddingRecord> = Vec::with_capacity(len);
    for i in 0..len {
        let vector = if !records.is_empty() && rng.random_bool(0.3) {
            let src = &records[rng.random_range(0..records.len())].vector;
            let scale = [0.5, 1.0, 2.0, 4.0][rng.random_range(0..4)];
            src.iter().map(|x| x * scale).collect()
        } else {
            loop {
                // small integers make exact ties between distinct vectors likely too
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-3i32..=3) as f64).collect();
                if v.iter().any(|x| *x != 0.0) {
                    break v;
                }
            }
        };
        records.push(EmbeddingRecord {
            instance_id: format!("t{:03}", rng.random_range(0..1000) * 1000 + i),
            provider_tag: "oracle".into(),
            vector,
        });
    }
    records
}

pub fn store_of(records: &[EmbeddingRecord]) -> EmbeddingStore {
    EmbeddingStore::from_records(records.to_vec()).expect("valid random store")
}
