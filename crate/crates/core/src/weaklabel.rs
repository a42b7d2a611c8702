//! Soft training targets from similar-title neighborhoods.
//!
//! For a training title `t` with neighborhood `N(t)` (every training title
//! whose embedding cosine with `t` reaches the threshold, `t` included), the
//! target for skill `s` is `|{u in N(t) : s in skills(u)}| / |N(t)|`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{SkillId, TitleRecord};
use crate::embedding::{dot, EmbeddingStore, NeighborhoodConfig};
use crate::{Error, Result};

pub type SkillLabels = BTreeMap<SkillId, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLabelSet {
    pub threshold: f64,
    pub provider: String,
    pub labels: BTreeMap<String, SkillLabels>,
}

pub fn relative_skill_frequencies(neighborhood: &[&TitleRecord]) -> Result<SkillLabels> {
    if neighborhood.is_empty() {
        return Err(Error::EmptyInput("neighborhood"));
    }
    let mut counts: BTreeMap<&SkillId, usize> = BTreeMap::new();
    for rec in neighborhood {
        for s in &rec.skills {
            *counts.entry(s).or_default() += 1;
        }
    }
    let n = neighborhood.len() as f64;
    Ok(counts.into_iter().map(|(s, c)| (s.clone(), c as f64 / n)).collect())
}

/// Builds labels for every training title, searching neighbors among the
/// training titles only. Anchors are processed in parallel; the result does
/// not depend on scheduling or on the order of `train`.
pub fn build_weak_labels(
    train: &[TitleRecord],
    store: &EmbeddingStore,
    config: &NeighborhoodConfig,
) -> Result<WeakLabelSet> {
    let mut seen = HashSet::with_capacity(train.len());
    for rec in train {
        if !seen.insert(rec.title.as_str()) {
            return Err(Error::DuplicateId(rec.title.clone()));
        }
    }
    let vectors = train
        .iter()
        .map(|r| store.get(&r.title).ok_or_else(|| Error::MissingEmbedding(r.title.clone())))
        .collect::<Result<Vec<_>>>()?;

    let labels = (0..train.len())
        .into_par_iter()
        .map(|i| {
            let anchor = vectors[i];
            let neighborhood: Vec<&TitleRecord> = (0..train.len())
                .filter(|&j| j == i || dot(anchor, vectors[j]) >= config.threshold)
                .map(|j| &train[j])
                .collect();
            relative_skill_frequencies(&neighborhood).map(|l| (train[i].title.clone(), l))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    Ok(WeakLabelSet {
        threshold: config.threshold,
        provider: store.provider().to_string(),
        labels,
    })
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LabelLine {
    Header { threshold: f64, provider: String },
    Labels { id: String, skills: SkillLabels },
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    threshold: f64,
    provider: &'a str,
}

#[derive(Serialize)]
struct LabelsOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    id: &'a str,
    skills: &'a SkillLabels,
}

impl WeakLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Every skill that receives a label, sorted.
    pub fn taxonomy(&self) -> Vec<SkillId> {
        let set: BTreeSet<&SkillId> = self.labels.values().flat_map(|l| l.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(
            &mut writer,
            &HeaderOut {
                kind: "header",
                threshold: self.threshold,
                provider: &self.provider,
            },
        )?;
        writer.write_all(b"\n")?;
        for (id, skills) in &self.labels {
            serde_json::to_writer(&mut writer, &LabelsOut { kind: "labels", id, skills })?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut set: Option<Self> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            match (parsed, set.as_mut()) {
                (LabelLine::Header { threshold, provider }, None) => {
                    set = Some(Self {
                        threshold,
                        provider,
                        labels: BTreeMap::new(),
                    })
                }
                (LabelLine::Header { .. }, Some(_)) => return Err(bad("repeated header".into())),
                (LabelLine::Labels { .. }, None) => return Err(Error::MissingHeader),
                (LabelLine::Labels { id, skills }, Some(set)) => {
                    if skills.is_empty() {
                        return Err(bad(format!("empty label map for {id:?}")));
                    }
                    if let Some((s, v)) = skills.iter().find(|(_, v)| !(**v > 0.0 && **v <= 1.0)) {
                        return Err(bad(format!("label {v} for skill {s} is outside (0, 1]")));
                    }
                    if set.labels.insert(id.clone(), skills).is_some() {
                        return Err(Error::DuplicateId(id));
                    }
                }
            }
        }
        set.ok_or(Error::MissingHeader)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;

    fn rec(title: &str, skills: &[&str]) -> TitleRecord {
        TitleRecord::new(title, skills).unwrap()
    }

    fn store(vs: &[(&str, Vec<f64>)]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(vs[0].1.len(), "test");
        for (id, v) in vs {
            s.insert(id, EmbeddingVector::normalized(v.clone()).unwrap()).unwrap();
        }
        s
    }

    fn labels(pairs: &[(&str, f64)]) -> SkillLabels {
        pairs.iter().map(|(s, v)| (SkillId::new(s).unwrap(), *v)).collect()
    }

    #[test]
    fn frequencies_examples() {
        let a = rec("a", &["python", "sql"]);
        let b = rec("b", &["python"]);
        assert_eq!(
            relative_skill_frequencies(&[&a, &b]).unwrap(),
            labels(&[("python", 1.0), ("sql", 0.5)])
        );
        let t = rec("t", &["therapy"]);
        assert_eq!(relative_skill_frequencies(&[&t]).unwrap(), labels(&[("therapy", 1.0)]));

        let four = [rec("a", &["x", "y"]), rec("b", &["x"]), rec("c", &["x"]), rec("d", &["x"])];
        let refs: Vec<&TitleRecord> = four.iter().collect();
        assert_eq!(relative_skill_frequencies(&refs).unwrap(), labels(&[("x", 1.0), ("y", 0.25)]));

        assert!(relative_skill_frequencies(&[]).is_err());
    }

    #[test]
    fn single_title_gets_its_own_skills() {
        let train = [rec("a", &["x", "y"])];
        let s = store(&[("a", vec![1.0, 0.0])]);
        let set = build_weak_labels(&train, &s, &NeighborhoodConfig::default()).unwrap();
        assert_eq!(set.labels["a"], labels(&[("x", 1.0), ("y", 1.0)]));
        assert_eq!(set.provider, "test");
    }

    #[test]
    fn identical_vectors_share_labels() {
        let train = [rec("a", &["x"]), rec("b", &["y"])];
        let s = store(&[("a", vec![1.0, 1.0]), ("b", vec![1.0, 1.0])]);
        let set = build_weak_labels(&train, &s, &NeighborhoodConfig::default()).unwrap();
        assert_eq!(set.labels["a"], labels(&[("x", 0.5), ("y", 0.5)]));
        assert_eq!(set.labels["b"], labels(&[("x", 0.5), ("y", 0.5)]));
    }

    #[test]
    fn orthogonal_vectors_give_singletons() {
        let train = [rec("a", &["x"]), rec("b", &["y", "z"]), rec("c", &["x"])];
        let s = store(&[("a", vec![1.0, 0.0, 0.0]), ("b", vec![0.0, 1.0, 0.0]), ("c", vec![0.0, 0.0, 1.0])]);
        let set = build_weak_labels(&train, &s, &NeighborhoodConfig::default()).unwrap();
        assert_eq!(set.labels["a"], labels(&[("x", 1.0)]));
        assert_eq!(set.labels["b"], labels(&[("y", 1.0), ("z", 1.0)]));
        assert_eq!(set.taxonomy().len(), 3);
    }

    #[test]
    fn missing_embedding_names_title() {
        let train = [rec("a", &["x"]), rec("ghost", &["y"])];
        let s = store(&[("a", vec![1.0, 0.0])]);
        match build_weak_labels(&train, &s, &NeighborhoodConfig::default()) {
            Err(Error::MissingEmbedding(t)) => assert_eq!(t, "ghost"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_round_trip_and_validation() {
        let train = [rec("a", &["x"]), rec("b", &["y"])];
        let s = store(&[("a", vec![1.0, 1.0]), ("b", vec![1.0, 0.9])]);
        let set = build_weak_labels(&train, &s, &NeighborhoodConfig::default()).unwrap();
        let mut buf = Vec::new();
        set.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"type\":\"header\",\"threshold\":0.75,\"provider\":\"test\"}\n"));
        assert_eq!(WeakLabelSet::load(buf.as_slice()).unwrap(), set);

        let bad = "{\"type\":\"header\",\"threshold\":0.75,\"provider\":\"p\"}\n\
                   {\"type\":\"labels\",\"id\":\"a\",\"skills\":{\"x\":1.5}}\n";
        assert!(matches!(WeakLabelSet::load(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
