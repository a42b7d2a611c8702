//! Ranking score vectors and scoring rankings with average precision at k.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{SkillId, TitleRecord};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 20;

/// Skills in descending score order, ties by ascending skill id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSkillList {
    pub entries: Vec<(SkillId, f64)>,
}

impl RankedSkillList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skills(&self) -> impl Iterator<Item = &SkillId> {
        self.entries.iter().map(|(s, _)| s)
    }
}

/// The `top_k` best skills. `scores` is aligned with `skill_order`.
pub fn rank_skills(scores: &[f64], skill_order: &[SkillId], top_k: usize) -> RankedSkillList {
    let mut idx: Vec<usize> = (0..scores.len().min(skill_order.len())).collect();
    let cmp = |&a: &usize, &b: &usize| -> Ordering {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| skill_order[a].cmp(&skill_order[b]))
    };
    let k = top_k.min(idx.len());
    if k == 0 {
        return RankedSkillList { entries: Vec::new() };
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    RankedSkillList {
        entries: idx.into_iter().map(|i| (skill_order[i].clone(), scores[i])).collect(),
    }
}

/// `(1 / min(|relevant|, k)) * sum over hit positions i <= k of precision@i`.
pub fn average_precision_at_k(ranked: &RankedSkillList, relevant: &BTreeSet<SkillId>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, skill) in ranked.skills().take(k).enumerate() {
        if relevant.contains(skill) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub mean_ap: f64,
    pub per_title: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn from_per_title(k: usize, per_title: BTreeMap<String, f64>) -> Self {
        let mean_ap = if per_title.is_empty() {
            0.0
        } else {
            per_title.values().sum::<f64>() / per_title.len() as f64
        };
        Self { k, mean_ap, per_title }
    }
}

/// AP@k for every test title against its annotated skills, and their
/// unweighted mean. Titles without skills are skipped.
pub fn mean_average_precision<F>(test: &[TitleRecord], mut predictor: F, k: usize) -> Result<EvalReport>
where
    F: FnMut(&TitleRecord) -> Result<RankedSkillList>,
{
    if test.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    let mut seen = HashSet::new();
    let mut per_title = BTreeMap::new();
    for rec in test {
        if rec.skills.is_empty() {
            continue;
        }
        if !seen.insert(rec.title.as_str()) {
            return Err(Error::DuplicateId(rec.title.clone()));
        }
        let ranked = predictor(rec).map_err(|e| Error::for_title(&rec.title, e))?;
        per_title.insert(rec.title.clone(), average_precision_at_k(&ranked, &rec.skills, k)?);
    }
    Ok(EvalReport::from_per_title(k, per_title))
}
