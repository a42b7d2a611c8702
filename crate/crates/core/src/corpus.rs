//! Job-title corpora: cleaning, deduplication, splitting and a synthetic
//! generator for tests and demos.
//!
//! On disk a corpus is line-delimited JSON, one record per line:
//!
//! ```text
//! {"title":"python developer","skills":["python","sql"],"lang":"en"}
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Canonical taxonomy key: trimmed, lowercase, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SkillId(String);

impl SkillId {
    pub fn new(raw: &str) -> Result<Self> {
        let id = raw.trim().to_lowercase();
        if id.is_empty() {
            return Err(Error::InvalidSkill(raw.to_string()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SkillId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(&value)
    }
}

impl From<SkillId> for String {
    fn from(value: SkillId) -> Self {
        value.0
    }
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for SkillId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleRecord {
    pub title: String,
    pub skills: BTreeSet<SkillId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl TitleRecord {
    /// Builds a record from raw strings, normalizing the title and skills.
    pub fn new<S: AsRef<str>>(title: &str, skills: &[S]) -> Result<Self> {
        let skills = skills
            .iter()
            .map(|s| SkillId::new(s.as_ref()))
            .collect::<Result<BTreeSet<_>>>()?;
        if skills.is_empty() {
            return Err(Error::EmptyInput("skill list"));
        }
        Ok(Self {
            title: normalize_title(title)?,
            skills,
            lang: None,
        })
    }

    pub fn has_skill(&self, skill: &str) -> bool {
        self.skills.contains(skill)
    }
}

/// Lowercases, replaces every character other than a letter, digit, `+` or `#`
/// with a space, collapses space runs and trims.
pub fn normalize_title(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() || c == '+' || c == '#' {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyTitle);
    }
    Ok(out)
}

/// A corpus line as it appears in raw input, before cleaning.
#[derive(Debug, Clone, Deserialize)]
pub struct RawRecord {
    pub title: String,
    pub skills: Vec<String>,
    #[serde(default)]
    pub lang: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseSummary {
    pub lines: usize,
    pub records: usize,
    pub merged_duplicates: usize,
    pub rejected_empty_skills: usize,
    pub rejected_empty_title: usize,
}

/// Reads line-delimited raw records. Blank lines are skipped; a line that is
/// not a valid record fails the whole parse with its 1-based line number.
pub fn read_raw_records<R: BufRead>(reader: R) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Cleans raw records: titles are normalized, skills lowercased and
/// deduplicated, records sharing a normalized title are merged by skill union
/// in first-occurrence order. Records left without skills or without a title
/// are dropped and counted.
pub fn merge_records(raw: impl IntoIterator<Item = RawRecord>) -> (Vec<TitleRecord>, ParseSummary) {
    let mut summary = ParseSummary::default();
    let mut records: Vec<TitleRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for rec in raw {
        summary.lines += 1;
        let skills: BTreeSet<SkillId> = rec.skills.iter().filter_map(|s| SkillId::new(s).ok()).collect();
        if skills.is_empty() {
            summary.rejected_empty_skills += 1;
            continue;
        }
        let Ok(title) = normalize_title(&rec.title) else {
            summary.rejected_empty_title += 1;
            continue;
        };
        match index.get(&title) {
            Some(&i) => {
                summary.merged_duplicates += 1;
                let existing = &mut records[i];
                existing.skills.extend(skills);
                if existing.lang.is_none() {
                    existing.lang = rec.lang;
                }
            }
            None => {
                index.insert(title.clone(), records.len());
                records.push(TitleRecord {
                    title,
                    skills,
                    lang: rec.lang,
                });
            }
        }
    }
    summary.records = records.len();
    (records, summary)
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<(Vec<TitleRecord>, ParseSummary)> {
    Ok(merge_records(read_raw_records(reader)?))
}

pub fn write_corpus<W: Write>(records: &[TitleRecord], mut writer: W) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<TitleRecord>,
    pub dev: Vec<TitleRecord>,
    pub test: Vec<TitleRecord>,
    pub seed: u64,
}

/// Sizes of the 70:10:20 split for `n` records.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let dev = n / 10;
    (train, dev, n - train - dev)
}

/// Shuffles with [`SplitMix64`] seeded by `seed`, then cuts the shuffled list
/// into train, dev and test blocks of sizes given by [`split_sizes`].
pub fn split_dataset(records: &[TitleRecord], seed: u64) -> Result<DatasetSplit> {
    if records.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let mut shuffled = records.to_vec();
    SplitMix64::new(seed).shuffle(&mut shuffled);
    let (n_train, n_dev, _) = split_sizes(shuffled.len());
    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        dev,
        test,
        seed,
    })
}

const ROLES: [&str; 12] = [
    "developer",
    "engineer",
    "specialist",
    "analyst",
    "consultant",
    "manager",
    "officer",
    "associate",
    "technician",
    "coordinator",
    "expert",
    "lead",
];

const SENIORITY: [&str; 5] = ["senior", "junior", "chief", "principal", "assistant"];

const SYLLABLE_ONSETS: &[u8] = b"bcdfghklmnprstvz";
const SYLLABLE_VOWELS: &[u8] = b"aeiou";

/// Number of pseudo-words in a family stem.
const STEM_WORDS: usize = 4;

/// Parameters of the synthetic corpus.
///
/// Every family has a stem shared by all of its synonym titles and a set of
/// core skills carried by every one of those titles. Each title adds a few
/// noise skills drawn from outside its family core, and the generic skills
/// are attached to every title in the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub families: usize,
    pub synonyms_per_family: usize,
    pub skills: usize,
    pub generic_skills: usize,
    pub core_skills: usize,
    pub noise_skills: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(families: usize, synonyms_per_family: usize, skills: usize, seed: u64) -> Self {
        Self {
            families,
            synonyms_per_family,
            skills,
            generic_skills: 3,
            core_skills: 5,
            noise_skills: 2,
            seed,
        }
    }

    pub fn skill_name(&self, index: usize) -> String {
        let width = self.skills.saturating_sub(1).to_string().len().max(3);
        format!("skill-{index:0width$}")
    }

    /// The skills attached to every generated title.
    pub fn generic_skill_ids(&self) -> Vec<SkillId> {
        let (generic, _) = self.partition_skills(&mut SplitMix64::new(self.seed));
        generic
    }

    fn partition_skills(&self, rng: &mut SplitMix64) -> (Vec<SkillId>, Vec<SkillId>) {
        let mut all: Vec<SkillId> = (0..self.skills)
            .map(|i| SkillId(self.skill_name(i)))
            .collect();
        rng.shuffle(&mut all);
        let n_generic = self.generic_skills.min(self.skills);
        let specific = all.split_off(n_generic);
        let mut generic = all;
        generic.sort();
        (generic, specific)
    }
}

fn pseudo_word(rng: &mut SplitMix64, syllables: usize) -> String {
    let mut w = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        w.push(SYLLABLE_ONSETS[rng.below(SYLLABLE_ONSETS.len())] as char);
        w.push(SYLLABLE_VOWELS[rng.below(SYLLABLE_VOWELS.len())] as char);
    }
    w
}

fn role_name(index: usize) -> String {
    let base = ROLES[index % ROLES.len()];
    let tier = index / ROLES.len();
    match tier {
        0 => base.to_string(),
        t if t <= SENIORITY.len() => format!("{} {base}", SENIORITY[t - 1]),
        t => format!("{base} {t}"),
    }
}

pub fn generate_synthetic_corpus(
    families: usize,
    synonyms_per_family: usize,
    skills: usize,
    seed: u64,
) -> Vec<TitleRecord> {
    generate_synthetic(&SyntheticConfig::new(families, synonyms_per_family, skills, seed))
}

/// Deterministic under `config.seed`. Titles are unique and already
/// normalized; output order is family by family.
pub fn generate_synthetic(config: &SyntheticConfig) -> Vec<TitleRecord> {
    let mut rng = SplitMix64::new(config.seed);
    let (generic, specific) = config.partition_skills(&mut rng);

    let mut stems = BTreeSet::new();
    let mut records = Vec::with_capacity(config.families * config.synonyms_per_family);
    for _ in 0..config.families {
        let stem = loop {
            let words: Vec<String> = (0..STEM_WORDS).map(|_| pseudo_word(&mut rng, 3)).collect();
            let stem = words.join(" ");
            if stems.insert(stem.clone()) {
                break stem;
            }
        };
        let core = rng.sample(&specific, config.core_skills);
        let outside: Vec<SkillId> = specific.iter().filter(|s| !core.contains(s)).cloned().collect();

        for syn in 0..config.synonyms_per_family {
            let mut skills: BTreeSet<SkillId> = generic.iter().cloned().collect();
            skills.extend(core.iter().cloned());
            skills.extend(rng.sample(&outside, config.noise_skills));
            if skills.is_empty() {
                // Only reachable with every count knob at zero.
                skills.insert(SkillId(config.skill_name(0)));
            }
            records.push(TitleRecord {
                title: format!("{stem} {}", role_name(syn)),
                skills,
                lang: Some("en".to_string()),
            });
        }
    }
    records
}
