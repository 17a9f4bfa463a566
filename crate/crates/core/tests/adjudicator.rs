mod common;

use std::collections::BTreeMap;

use common::oracle::{brute_force_score, counts_of, prediction_for, synthetic_run};
use lateral_core::adjudicator::{extract_choice, metrics_csv, score_run, ParseStatus, Prediction, ScoreError};
use lateral_core::dataset::{derive_groups, SplitRole, Subtask};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct CorpusCase {
    raw_text: String,
    choices: Vec<String>,
    expected_status: ParseStatus,
    expected_predicted: Option<usize>,
}

fn corpus() -> Vec<CorpusCase> {
    std::fs::read_to_string(common::fixture("parser_corpus.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn parser_corpus_agrees() {
    let cases = corpus();
    assert!(cases.len() >= 30);
    for case in cases {
        let p = extract_choice("x", &case.raw_text, &case.choices);
        assert_eq!(
            (p.parse_status, p.predicted),
            (case.expected_status, case.expected_predicted),
            "{:?}",
            case.raw_text
        );
    }
}

fn answer(id: &str, label: usize, correct: bool) -> Prediction {
    Prediction {
        instance_id: id.into(),
        predicted: Some(if correct { label + 1 } else { (label + 1) % 4 + 1 }),
        raw_text: String::new(),
        parse_status: ParseStatus::Parsed,
    }
}

#[test]
fn hand_scored_two_groups() {
    let split = common::split(Subtask::Sentence, SplitRole::Test);
    let groups = derive_groups(&split).unwrap();
    // group 1 misses its context variant; group 2 is all right
    let preds: Vec<Prediction> = split
        .instances
        .iter()
        .map(|i| answer(&i.id, i.label, i.id != "s_g1_con"))
        .collect();
    let m = score_run(&preds, &split, &groups).unwrap();
    assert_eq!(m.rendered(), ["1.000", "1.000", "0.500", "1.000", "0.500", "0.833"]);
    assert_eq!((m.overall.num, m.overall.den), (5, 6));
    assert_eq!(metrics_csv("row", &m).lines().nth(1).unwrap(), "row,1.000,1.000,0.500,1.000,0.500,0.833");
}

#[test]
fn perfect_and_degenerate_runs() {
    let split = common::split(Subtask::Word, SplitRole::Test);
    let groups = derive_groups(&split).unwrap();
    let perfect: Vec<Prediction> = split.instances.iter().map(|i| answer(&i.id, i.label, true)).collect();
    assert!(score_run(&perfect, &split, &groups)
        .unwrap()
        .rendered()
        .iter()
        .all(|c| c == "1.000"));

    let junk: Vec<Prediction> = split
        .instances
        .iter()
        .map(|i| extract_choice(&i.id, "I cannot answer that.", &i.choices))
        .collect();
    let m = score_run(&junk, &split, &groups).unwrap();
    assert!(m.rendered().iter().all(|c| c == "0.000"));
    assert_eq!(m.unparsed_count, 6);
}

#[test]
fn prediction_set_must_match_split() {
    let split = common::split(Subtask::Word, SplitRole::Test);
    let groups = derive_groups(&split).unwrap();
    let mut preds: Vec<Prediction> = split.instances.iter().map(|i| answer(&i.id, i.label, true)).collect();
    let last = preds.pop().unwrap();
    assert_eq!(
        score_run(&preds, &split, &groups).unwrap_err(),
        ScoreError::MissingPrediction(last.instance_id.clone())
    );
    preds.push(last);
    preds.push(answer("stranger", 0, true));
    assert_eq!(
        score_run(&preds, &split, &groups).unwrap_err(),
        ScoreError::UnknownInstance("stranger".into())
    );
}

#[test]
fn incomplete_groups_are_excluded_and_counted() {
    let mut split = common::split(Subtask::Sentence, SplitRole::Test);
    split.instances.retain(|i| i.id != "s_g2_con" && i.id != "s_g1_sem");
    let groups = derive_groups(&split).unwrap();
    let preds: Vec<Prediction> = split.instances.iter().map(|i| answer(&i.id, i.label, true)).collect();
    let m = score_run(&preds, &split, &groups).unwrap();
    assert_eq!((m.ori_sem.num, m.ori_sem.den), (1, 1));
    assert_eq!(m.ori_sem_con.den, 0);
    assert_eq!((m.excluded_from_ori_sem, m.excluded_from_ori_sem_con), (1, 2));
    assert_eq!(m.rendered()[4], "n/a");
}

#[test]
fn matches_brute_force_scorer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let run = synthetic_run(&mut rng, 50, false);
        let groups = derive_groups(&run.split).unwrap();
        let report = score_run(&run.predictions, &run.split, &groups).unwrap();
        assert_eq!(counts_of(&report), brute_force_score(&run.split, &run.correct));
    }
}

proptest! {
    #[test]
    fn flipping_to_correct_never_lowers_a_column(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = synthetic_run(&mut rng, 20, false);
        let groups = derive_groups(&run.split).unwrap();
        let before = score_run(&run.predictions, &run.split, &groups).unwrap();
        let wrong: Vec<&String> = run.correct.iter().filter(|(_, ok)| !**ok).map(|(id, _)| id).collect();
        prop_assume!(!wrong.is_empty());
        let flip = wrong[pick.index(wrong.len())].clone();
        let inst = run.split.get(&flip).unwrap();
        let preds: Vec<Prediction> = run
            .predictions
            .iter()
            .map(|p| if p.instance_id == flip { prediction_for(&mut rng, inst, true) } else { p.clone() })
            .collect();
        let after = score_run(&preds, &run.split, &groups).unwrap();
        for (b, a) in before.columns().iter().zip(after.columns()) {
            prop_assert!(a.num >= b.num && a.den == b.den);
        }
    }

    #[test]
    fn group_columns_are_bounded_when_complete(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = synthetic_run(&mut rng, 30, true);
        let groups = derive_groups(&run.split).unwrap();
        let m = score_run(&run.predictions, &run.split, &groups).unwrap();
        // equal denominators, so numerators compare directly
        prop_assert!(m.ori_sem_con.num <= m.ori_sem.num);
        prop_assert!(m.ori_sem.num <= m.ori.num.min(m.sem.num));
        prop_assert!(m.ori_sem_con.den == m.ori_sem.den && m.ori_sem.den == m.ori.den);
    }

    #[test]
    fn extraction_is_total(text in "\\PC{0,80}", n in 1usize..6) {
        let choices: Vec<String> = (0..n).map(|i| format!("choice {i}.")).collect();
        let p = extract_choice("x", &text, &choices);
        prop_assert_eq!(p.raw_text, text);
        match p.parse_status {
            ParseStatus::Parsed => prop_assert!(p.predicted.is_some_and(|k| (1..=n).contains(&k))),
            _ => prop_assert!(p.predicted.is_none()),
        }
    }

    #[test]
    fn explicit_option_mentions_parse(k in 1usize..5, filler in "[a-z ]{0,30}") {
        let choices = ["alpha", "beta", "gamma", "delta"];
        let p = extract_choice("x", &format!("{filler} Option {k} {filler}"), &choices);
        prop_assert_eq!(p.predicted, Some(k));
    }
}

#[test]
fn brute_force_oracle_sanity() {
    // the oracle itself on the hand-scored fixture
    let split = common::split(Subtask::Sentence, SplitRole::Test);
    let correct: BTreeMap<String, bool> = split.instances.iter().map(|i| (i.id.clone(), i.id != "s_g1_con")).collect();
    let c = brute_force_score(&split, &correct);
    assert_eq!((c.con, c.ori_sem_con, c.overall), ((1, 2), (1, 2), (5, 6)));
}
