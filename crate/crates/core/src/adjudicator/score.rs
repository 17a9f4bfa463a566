//! Instance and reconstruction-group metrics.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::extract::Prediction;
use crate::dataset::{DatasetSplit, Group, Variant};

/// Exact ratio kept as counts; rendered with 3 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        debug_assert!(num <= den);
        Self { num, den }
    }

    /// 0 for an empty denominator.
    pub fn value(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// Three decimals, exact round-half-to-even; `n/a` when the denominator is 0.
    pub fn render(&self) -> String {
        if self.den == 0 {
            return "n/a".into();
        }
        let scaled = self.num as u128 * 1000;
        let den = self.den as u128;
        let (mut q, r) = (scaled / den, scaled % den);
        if 2 * r > den || (2 * r == den && q % 2 == 1) {
            q += 1;
        }
        format!("{}.{:03}", q / 1000, q % 1000)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ori: Fraction,
    pub sem: Fraction,
    pub con: Fraction,
    pub ori_sem: Fraction,
    pub ori_sem_con: Fraction,
    pub overall: Fraction,
    pub instances: u64,
    pub groups: u64,
    pub unparsed_count: u64,
    /// Groups lacking an original or semantic instance.
    pub excluded_from_ori_sem: u64,
    /// Groups lacking any of the three variants.
    pub excluded_from_ori_sem_con: u64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 6] = ["Ori", "Sem", "Con", "Ori & Sem", "Ori & Sem & Con", "Overall"];

    /// Columns in table order.
    pub fn columns(&self) -> [Fraction; 6] {
        [self.ori, self.sem, self.con, self.ori_sem, self.ori_sem_con, self.overall]
    }

    pub fn rendered(&self) -> [String; 6] {
        self.columns().map(|f| f.render())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("no prediction for instance '{0}'")]
    MissingPrediction(String),
    #[error("prediction for unknown instance '{0}'")]
    UnknownInstance(String),
    #[error("more than one prediction for instance '{0}'")]
    DuplicatePrediction(String),
}

pub fn score_run(predictions: &[Prediction], split: &DatasetSplit, groups: &[Group]) -> Result<MetricsReport, ScoreError> {
    let index = split.index();
    let mut correct: HashMap<&str, bool> = HashMap::with_capacity(predictions.len());
    let mut unparsed = 0;
    for p in predictions {
        let instance = index
            .get(p.instance_id.as_str())
            .ok_or_else(|| ScoreError::UnknownInstance(p.instance_id.clone()))?;
        if correct.insert(&p.instance_id, p.is_correct(instance.label)).is_some() {
            return Err(ScoreError::DuplicatePrediction(p.instance_id.clone()));
        }
        if !p.is_parsed() {
            unparsed += 1;
        }
    }
    if let Some(missing) = split.instances.iter().find(|i| !correct.contains_key(i.id.as_str())) {
        return Err(ScoreError::MissingPrediction(missing.id.clone()));
    }

    let mut per_variant: HashMap<Variant, Fraction> = HashMap::new();
    let mut overall = Fraction::default();
    for inst in &split.instances {
        let ok = correct[inst.id.as_str()] as u64;
        let f = per_variant.entry(inst.variant).or_default();
        f.den += 1;
        f.num += ok;
        overall.den += 1;
        overall.num += ok;
    }

    let group_correct = |g: &Group, variants: &[Variant]| -> Option<bool> {
        variants
            .iter()
            .map(|v| g.get(*v).map(|id| correct.get(id).copied().unwrap_or(false)))
            .collect::<Option<Vec<bool>>>()
            .map(|oks| oks.into_iter().all(|b| b))
    };
    let mut ori_sem = Fraction::default();
    let mut ori_sem_con = Fraction::default();
    let (mut excl_os, mut excl_osc) = (0, 0);
    for g in groups {
        match group_correct(g, &[Variant::Original, Variant::Semantic]) {
            Some(ok) => {
                ori_sem.den += 1;
                ori_sem.num += ok as u64;
            }
            None => excl_os += 1,
        }
        match group_correct(g, &Variant::ALL) {
            Some(ok) => {
                ori_sem_con.den += 1;
                ori_sem_con.num += ok as u64;
            }
            None => excl_osc += 1,
        }
    }

    let column = |v: Variant| per_variant.get(&v).copied().unwrap_or_default();
    Ok(MetricsReport {
        ori: column(Variant::Original),
        sem: column(Variant::Semantic),
        con: column(Variant::Context),
        ori_sem,
        ori_sem_con,
        overall,
        instances: split.len() as u64,
        groups: groups.len() as u64,
        unparsed_count: unparsed,
        excluded_from_ori_sem: excl_os,
        excluded_from_ori_sem_con: excl_osc,
    })
}
