//! Inverse document frequency of skills over training titles, and the
//! importance x IDF boost that pushes specialized skills above generic ones.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{SkillId, TitleRecord};
use crate::model::ImportanceVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::E => "e",
            LogBase::Two => "2",
            LogBase::Ten => "10",
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" => Ok(LogBase::E),
            "2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::InvalidConfig(format!("unsupported log base {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdfConfig {
    pub log_base: LogBase,
    /// Use `log((N + 1) / (f + 1))` instead of `log(N / f)`.
    pub smooth: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdfEntry {
    pub doc_freq: usize,
    pub idf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    n_titles: usize,
    log_base: LogBase,
    entries: BTreeMap<SkillId, IdfEntry>,
}

pub fn compute_idf(train: &[TitleRecord]) -> Result<IdfTable> {
    compute_idf_with(train, &IdfConfig::default())
}

/// `idf_s = log(N / f_s)` where `f_s` counts the training titles carrying `s`.
/// Skills absent from `train` get no entry.
pub fn compute_idf_with(train: &[TitleRecord], config: &IdfConfig) -> Result<IdfTable> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    let mut doc_freq: BTreeMap<&SkillId, usize> = BTreeMap::new();
    for rec in train {
        for s in &rec.skills {
            *doc_freq.entry(s).or_default() += 1;
        }
    }
    let n = train.len();
    let entries = doc_freq
        .into_iter()
        .map(|(s, f)| {
            let ratio = if config.smooth {
                (n + 1) as f64 / (f + 1) as f64
            } else {
                n as f64 / f as f64
            };
            // f == n must give exactly zero, whatever the base.
            let idf = if f == n { 0.0 } else { config.log_base.log(ratio) };
            (s.clone(), IdfEntry { doc_freq: f, idf })
        })
        .collect();
    Ok(IdfTable {
        n_titles: n,
        log_base: config.log_base,
        entries,
    })
}

/// `score_j = importance_j * idf(skill_j)`; skills without an entry use
/// `fallback_idf`.
pub fn boost_scores(
    importance: &ImportanceVector,
    skill_order: &[SkillId],
    table: &IdfTable,
    fallback_idf: f64,
) -> Vec<f64> {
    importance
        .iter()
        .zip(skill_order)
        .map(|(p, s)| p * table.idf(s.as_str()).unwrap_or(fallback_idf))
        .collect()
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum IdfLine {
    Header { n_titles: usize, log_base: String },
    Idf { skill: SkillId, f: usize, idf: f64 },
}

#[derive(Serialize)]
struct HeaderOut {
    #[serde(rename = "type")]
    kind: &'static str,
    n_titles: usize,
    log_base: &'static str,
}

#[derive(Serialize)]
struct EntryOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    skill: &'a SkillId,
    f: usize,
    idf: f64,
}

impl IdfTable {
    pub fn n_titles(&self) -> usize {
        self.n_titles
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn idf(&self, skill: &str) -> Option<f64> {
        self.entries.get(skill).map(|e| e.idf)
    }

    pub fn doc_freq(&self, skill: &str) -> Option<usize> {
        self.entries.get(skill).map(|e| e.doc_freq)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SkillId, &IdfEntry)> {
        self.entries.iter()
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(
            &mut writer,
            &HeaderOut {
                kind: "header",
                n_titles: self.n_titles,
                log_base: self.log_base.as_str(),
            },
        )?;
        writer.write_all(b"\n")?;
        for (skill, e) in &self.entries {
            serde_json::to_writer(
                &mut writer,
                &EntryOut {
                    kind: "idf",
                    skill,
                    f: e.doc_freq,
                    idf: e.idf,
                },
            )?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let parsed: IdfLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            match (parsed, table.as_mut()) {
                (IdfLine::Header { n_titles, log_base }, None) => {
                    if n_titles == 0 {
                        return Err(bad("n_titles must be positive".into()));
                    }
                    table = Some(Self {
                        n_titles,
                        log_base: log_base.parse()?,
                        entries: BTreeMap::new(),
                    });
                }
                (IdfLine::Header { .. }, Some(_)) => return Err(bad("repeated header".into())),
                (IdfLine::Idf { .. }, None) => return Err(Error::MissingHeader),
                (IdfLine::Idf { skill, f, idf }, Some(t)) => {
                    if f == 0 || f > t.n_titles {
                        return Err(bad(format!("document frequency {f} outside 1..={}", t.n_titles)));
                    }
                    if !(idf >= 0.0 && idf.is_finite()) {
                        return Err(bad(format!("idf {idf} for {skill} must be finite and non-negative")));
                    }
                    let name = skill.to_string();
                    if t.entries.insert(skill, IdfEntry { doc_freq: f, idf }).is_some() {
                        return Err(Error::DuplicateSkill(name));
                    }
                }
            }
        }
        table.ok_or(Error::MissingHeader)
    }
}
