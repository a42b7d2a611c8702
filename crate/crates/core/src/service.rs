//! Request handling for the ranking endpoint, independent of any HTTP stack.

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_title, SkillId};
use crate::embedding::TitleEncoder;
use crate::idf::{boost_scores, IdfTable};
use crate::model::{forward, LinearHead};
use crate::rankeval::{rank_skills, RankedSkillList, DEFAULT_K};
use crate::{Error, Result};

fn default_top_k() -> usize {
    DEFAULT_K
}

fn default_use_idf() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    pub title: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_use_idf")]
    pub use_idf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSkill {
    pub skill: SkillId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub title: String,
    pub skills: Vec<ScoredSkill>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RankError {
    #[error("title is empty after normalization")]
    EmptyTitle,
    #[error("top_k must be between 1 and {max}, got {got}")]
    TopKOutOfRange { got: usize, max: usize },
    #[error("IDF boosting requested but no IDF table is loaded")]
    IdfUnavailable,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot embed title: {0}")]
    Unembeddable(String),
}

impl RankError {
    pub fn status(&self) -> u16 {
        match self {
            RankError::EmptyTitle | RankError::TopKOutOfRange { .. } | RankError::InvalidRequest(_) => 400,
            RankError::IdfUnavailable => 409,
            RankError::Unembeddable(_) => 422,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            RankError::EmptyTitle => "empty_title",
            RankError::TopKOutOfRange { .. } => "top_k_out_of_range",
            RankError::IdfUnavailable => "idf_unavailable",
            RankError::InvalidRequest(_) => "invalid_request",
            RankError::Unembeddable(_) => "unembeddable_title",
        }
    }

    pub fn body(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            error: &'a str,
            message: String,
        }
        serde_json::to_string(&Body {
            error: self.code(),
            message: self.to_string(),
        })
        .expect("error body serializes")
    }
}

/// A trained head with its IDF table and title encoder. Immutable once built,
/// so one instance can serve concurrent requests.
#[derive(Debug, Clone)]
pub struct RankService {
    head: LinearHead,
    idf: Option<IdfTable>,
    encoder: TitleEncoder,
    fallback_idf: f64,
}

impl RankService {
    pub fn new(head: LinearHead, idf: Option<IdfTable>, encoder: TitleEncoder) -> Result<Self> {
        if let Some(d) = encoder.dimension() {
            if d != head.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: head.dimension(),
                    found: d,
                });
            }
        }
        Ok(Self {
            head,
            idf,
            encoder,
            fallback_idf: 0.0,
        })
    }

    /// IDF used for skills missing from the table. Defaults to 0.
    pub fn with_fallback_idf(mut self, fallback_idf: f64) -> Self {
        self.fallback_idf = fallback_idf;
        self
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    pub fn has_idf(&self) -> bool {
        self.idf.is_some()
    }

    /// Scores for every skill of an already normalized title: raw importance,
    /// or importance x IDF when `use_idf`.
    pub fn scores(&self, title: &str, use_idf: bool) -> Result<Vec<f64>> {
        let x = self.encoder.encode(title)?;
        let importance = forward(&self.head, &x)?;
        match (use_idf, &self.idf) {
            (false, _) => Ok(importance.into_inner()),
            (true, Some(table)) => Ok(boost_scores(&importance, self.head.skill_order(), table, self.fallback_idf)),
            (true, None) => Err(Error::InvalidConfig("no IDF table loaded".into())),
        }
    }

    pub fn rank(&self, title: &str, top_k: usize, use_idf: bool) -> Result<RankedSkillList> {
        Ok(rank_skills(&self.scores(title, use_idf)?, self.head.skill_order(), top_k))
    }

    /// normalize -> embed -> forward -> optional boost -> top-k.
    pub fn handle_rank(&self, request: &RankRequest) -> Result<RankResponse, RankError> {
        let title = normalize_title(&request.title).map_err(|_| RankError::EmptyTitle)?;
        let max = self.head.num_skills();
        if request.top_k == 0 || request.top_k > max {
            return Err(RankError::TopKOutOfRange {
                got: request.top_k,
                max,
            });
        }
        if request.use_idf && self.idf.is_none() {
            return Err(RankError::IdfUnavailable);
        }
        let ranked = self
            .rank(&title, request.top_k, request.use_idf)
            .map_err(|e| RankError::Unembeddable(e.to_string()))?;
        Ok(RankResponse {
            title,
            skills: ranked
                .entries
                .into_iter()
                .map(|(skill, score)| ScoredSkill { skill, score })
                .collect(),
        })
    }

    /// Raw request bytes to `(status, JSON body)`.
    pub fn handle_rank_json(&self, body: &[u8]) -> (u16, String) {
        let outcome = serde_json::from_slice::<RankRequest>(body)
            .map_err(|e| RankError::InvalidRequest(e.to_string()))
            .and_then(|req| self.handle_rank(&req));
        match outcome {
            Ok(resp) => (200, serde_json::to_string(&resp).expect("response serializes")),
            Err(e) => (e.status(), e.body()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TitleRecord;
    use crate::embedding::FallbackEmbedder;
    use crate::idf::compute_idf;
    use crate::model::{train_head, TrainConfig};
    use crate::weaklabel::build_weak_labels;
    use crate::NeighborhoodConfig;

    fn service(with_idf: bool) -> RankService {
        let train = vec![
            TitleRecord::new("python developer", &["python", "sql", "communication"]).unwrap(),
            TitleRecord::new("python programmer", &["python", "django", "communication"]).unwrap(),
            TitleRecord::new("therapist", &["therapy", "communication"]).unwrap(),
        ];
        let store = FallbackEmbedder::new(64).unwrap().embed_all(train.iter().map(|r| r.title.as_str())).unwrap();
        let labels = build_weak_labels(&train, &store, &NeighborhoodConfig::default()).unwrap();
        let config = TrainConfig {
            learning_rate: 5.0,
            epochs: 50,
            patience: 50,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let (head, _) = train_head(&labels, &[], &store, &config).unwrap();
        let idf = with_idf.then(|| compute_idf(&train).unwrap());
        RankService::new(head, idf, TitleEncoder::with_store(store)).unwrap()
    }

    fn req(title: &str, top_k: usize, use_idf: bool) -> RankRequest {
        RankRequest {
            title: title.into(),
            top_k,
            use_idf,
        }
    }

    #[test]
    fn rank_returns_ordered_pairs() {
        let svc = service(true);
        let resp = svc.handle_rank(&req("Python Developer", 2, true)).unwrap();
        assert_eq!(resp.title, "python developer");
        assert_eq!(resp.skills.len(), 2);
        assert!(resp.skills[0].score >= resp.skills[1].score);
    }

    #[test]
    fn request_defaults() {
        let r: RankRequest = serde_json::from_str("{\"title\":\"x\"}").unwrap();
        assert_eq!(r, req("x", 20, true));
    }

    #[test]
    fn error_statuses() {
        let svc = service(false);
        let (status, body) = svc.handle_rank_json(b"{\"title\":\"   \"}");
        assert_eq!(status, 400);
        assert!(body.contains("\"error\":\"empty_title\""));
        let (status, body) = svc.handle_rank_json(b"{\"title\":\"nurse\",\"top_k\":0,\"use_idf\":false}");
        assert_eq!(status, 400);
        assert!(body.contains("top_k_out_of_range"));
        let (status, _) = svc.handle_rank_json(b"{\"title\":\"nurse\",\"top_k\":99,\"use_idf\":false}");
        assert_eq!(status, 400);
        let (status, body) = svc.handle_rank_json(b"{\"title\":\"nurse\",\"top_k\":3}");
        assert_eq!(status, 409);
        assert!(body.contains("idf_unavailable"));
        let (status, body) = svc.handle_rank_json(b"not json");
        assert_eq!(status, 400);
        assert!(body.contains("invalid_request"));
    }

    #[test]
    fn unknown_titles_use_fallback_and_are_deterministic() {
        let svc = service(true);
        let a = svc.handle_rank_json(b"{\"title\":\"python engineer\",\"top_k\":3}");
        let b = svc.handle_rank_json(b"{\"title\":\"python engineer\",\"top_k\":3}");
        assert_eq!(a.0, 200);
        assert_eq!(a, b);
    }

    #[test]
    fn idf_zeroes_generic_skill() {
        let svc = service(true);
        let raw = svc.handle_rank(&req("python developer", 5, false)).unwrap();
        let boosted = svc.handle_rank(&req("python developer", 5, true)).unwrap();
        let pos = |r: &RankResponse| r.skills.iter().position(|s| s.skill.as_str() == "communication");
        assert_eq!(pos(&raw), Some(0));
        let b = pos(&boosted).unwrap();
        assert_eq!(boosted.skills[b].score, 0.0);
        assert!(boosted.skills[..b].iter().all(|s| s.score > 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let head = LinearHead::zeros(8, vec![SkillId::new("a").unwrap()]).unwrap();
        assert!(RankService::new(head, None, TitleEncoder::fallback(16).unwrap()).is_err());
    }
}
