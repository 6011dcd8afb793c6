//! Explanation retrieval over a crowdsourced Q&A knowledge base.
//!
//! Posts are embedded with the shared encoder and indexed by tag. For a
//! query function the closest posts are retrieved, every answer is scored
//!
//! ```text
//! ranking = func_sim × (score_i / Σ_j score_j × asps)
//! asps    = 0.5·I(cause) + 0.3·I(impact) + 0.1·I(solution) + 0.1·I(accepted)
//! ```
//!
//! and root-cause / impact / solution spans are pulled out of the answer
//! body by an [`AspectExtractor`].

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{CodeEmbedder, EmbeddingVector, EncoderError};

pub const DEFAULT_MIN_SIM: f64 = 0.5;
pub const DEFAULT_K_POSTS: usize = 5;

pub const CAUSE_WEIGHT: f64 = 0.5;
pub const IMPACT_WEIGHT: f64 = 0.3;
pub const SOLUTION_WEIGHT: f64 = 0.1;
pub const ACCEPTED_WEIGHT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("knowledge base file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed post at line {line}: {reason}")]
    MalformedPost { line: usize, reason: String },
    #[error("duplicate post id {0:?}")]
    DuplicatePostId(String),
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("encoder: {0}")]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub answer_id: String,
    pub body: String,
    pub score: i64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgePost {
    pub post_id: String,
    pub title: String,
    pub body: String,
    pub code: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub answers: Vec<Answer>,
}

impl KnowledgePost {
    pub fn validate(&self) -> Result<(), String> {
        if self.code.trim().is_empty() {
            return Err("post has no code snippet".into());
        }
        if self.answers.is_empty() {
            return Err("post has no answers".into());
        }
        if self.answers.iter().filter(|a| a.accepted).count() > 1 {
            return Err("more than one accepted answer".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Cause,
    Impact,
    Solution,
}

/// Half-open range of character (Unicode scalar) offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        let byte = |c: usize| text.char_indices().nth(c).map_or(text.len(), |(b, _)| b);
        &text[byte(self.start)..byte(self.end)]
    }
}

/// Span-or-nothing extraction of one aspect from an answer body.
pub trait AspectExtractor {
    fn extract(&self, body: &str, aspect: Aspect) -> Option<Span>;
}

/// Sentence scorer driven by a fixed cue table. The best sentence is the one
/// with the most cue hits (earliest on ties); sentences without a hit are
/// never returned.
///
/// Sentences end at `.`, `!` or `?` followed by whitespace or the end of
/// the text. A cue matches case-insensitively when it starts a word, so
/// "crashes" hits the cue "crash".
#[derive(Debug, Clone, Default)]
pub struct CueExtractor;

pub const CAUSE_CUES: &[&str] = &["because", "due to", "caused by", "the reason"];
pub const IMPACT_CUES: &[&str] = &["crash", "leak", "overflow", "undefined behavior", "corrupt"];
pub const SOLUTION_CUES: &[&str] = &["fix", "instead", "you should", "replace", "declare"];

impl CueExtractor {
    pub fn cues(aspect: Aspect) -> &'static [&'static str] {
        match aspect {
            Aspect::Cause => CAUSE_CUES,
            Aspect::Impact => IMPACT_CUES,
            Aspect::Solution => SOLUTION_CUES,
        }
    }

    /// Number of word-initial cue occurrences in `text`.
    pub fn cue_hits(text: &str, aspect: Aspect) -> usize {
        let lower = text.to_lowercase();
        Self::cues(aspect)
            .iter()
            .map(|cue| {
                lower
                    .match_indices(cue)
                    .filter(|(pos, _)| !lower[..*pos].chars().next_back().is_some_and(char::is_alphanumeric))
                    .count()
            })
            .sum()
    }
}

/// Character spans of the sentences of `text`, leading/trailing whitespace
/// excluded.
pub fn sentence_spans(text: &str) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &c) in chars.iter().enumerate() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let ends = matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if ends {
            spans.push(Span {
                start: start.take().unwrap(),
                end: i + 1,
            });
        }
    }
    if let Some(s) = start {
        let mut end = chars.len();
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push(Span { start: s, end });
    }
    spans
}

impl AspectExtractor for CueExtractor {
    fn extract(&self, body: &str, aspect: Aspect) -> Option<Span> {
        let mut best: Option<(usize, Span)> = None;
        for span in sentence_spans(body) {
            let hits = Self::cue_hits(span.slice(body), aspect);
            if hits > 0 && best.is_none_or(|(h, _)| hits > h) {
                best = Some((hits, span));
            }
        }
        best.map(|(_, s)| s)
    }
}

pub fn extract_aspect(body: &str, aspect: Aspect, extractor: &dyn AspectExtractor) -> Option<Span> {
    extractor.extract(body, aspect)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AspectFlags {
    pub has_cause: bool,
    pub has_impact: bool,
    pub has_solution: bool,
}

pub fn aspect_flags(answer: &Answer, extractor: &dyn AspectExtractor) -> AspectFlags {
    AspectFlags {
        has_cause: extractor.extract(&answer.body, Aspect::Cause).is_some(),
        has_impact: extractor.extract(&answer.body, Aspect::Impact).is_some(),
        has_solution: extractor.extract(&answer.body, Aspect::Solution).is_some(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub asps: f64,
    pub share: f64,
    pub ranking_score: f64,
}

/// Aspect coverage weight of an answer.
pub fn asps(flags: AspectFlags, accepted: bool) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    CAUSE_WEIGHT * ind(flags.has_cause)
        + IMPACT_WEIGHT * ind(flags.has_impact)
        + SOLUTION_WEIGHT * ind(flags.has_solution)
        + ACCEPTED_WEIGHT * ind(accepted)
}

/// Quality-first score of one answer. `sibling_scores` are the votes of all
/// answers of the post, this one included. When they do not sum to a
/// positive value the vote share falls back to `1/N`.
pub fn ranking_score(
    func_sim: f64,
    answer_score: i64,
    sibling_scores: &[i64],
    flags: AspectFlags,
    accepted: bool,
) -> AnswerScore {
    let sum: i64 = sibling_scores.iter().sum();
    let share = if sum > 0 {
        answer_score as f64 / sum as f64
    } else {
        1.0 / sibling_scores.len().max(1) as f64
    };
    let asps = asps(flags, accepted);
    AnswerScore {
        asps,
        share,
        ranking_score: func_sim * (share * asps),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanText {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl SpanText {
    fn from_span(span: Span, body: &str) -> Self {
        Self {
            start: span.start,
            end: span.end,
            text: span.slice(body).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedExplanation {
    pub post_id: String,
    pub answer_id: String,
    pub func_sim: f64,
    pub answer_score: i64,
    pub accepted: bool,
    pub share: f64,
    pub asps: f64,
    pub ranking_score: f64,
    pub cause_span: Option<SpanText>,
    pub impact_span: Option<SpanText>,
    pub solution_span: Option<SpanText>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieved<'a> {
    pub post: &'a KnowledgePost,
    pub func_sim: f64,
}

/// Posts with their embeddings and a tag → post ids index. Immutable once
/// built.
pub struct KnowledgeBase {
    posts: Vec<KnowledgePost>,
    embeddings: Vec<EmbeddingVector>,
    tag_index: BTreeMap<String, Vec<String>>,
    embedder: Arc<dyn CodeEmbedder + Send + Sync>,
}

impl std::fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("posts", &self.posts.len())
            .field("tags", &self.tag_index.len())
            .finish()
    }
}

impl KnowledgeBase {
    /// Builds a knowledge base from already-parsed posts. Posts are numbered
    /// from 1 in error messages.
    pub fn from_posts(
        posts: Vec<KnowledgePost>,
        embedder: Arc<dyn CodeEmbedder + Send + Sync>,
    ) -> Result<Self, ExplainError> {
        let numbered = posts.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
        Self::build(numbered, embedder)
    }

    /// Reads a JSON-lines posts file; blank lines are skipped.
    pub fn ingest(path: &Path, embedder: Arc<dyn CodeEmbedder + Send + Sync>) -> Result<Self, ExplainError> {
        let file = File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ExplainError::MissingFile(path.to_path_buf())
            } else {
                ExplainError::Io(e)
            }
        })?;
        let mut posts = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let post: KnowledgePost = serde_json::from_str(&line).map_err(|e| ExplainError::MalformedPost {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            posts.push((idx + 1, post));
        }
        Self::build(posts, embedder)
    }

    fn build(
        posts: Vec<(usize, KnowledgePost)>,
        embedder: Arc<dyn CodeEmbedder + Send + Sync>,
    ) -> Result<Self, ExplainError> {
        let mut seen = HashSet::new();
        let mut tag_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut embeddings = Vec::with_capacity(posts.len());
        let mut kept = Vec::with_capacity(posts.len());
        for (line, post) in posts {
            post.validate().map_err(|reason| ExplainError::MalformedPost { line, reason })?;
            if !seen.insert(post.post_id.clone()) {
                return Err(ExplainError::DuplicatePostId(post.post_id));
            }
            for tag in &post.tags {
                tag_index.entry(tag.clone()).or_default().push(post.post_id.clone());
            }
            embeddings.push(embedder.embed(&post.code)?);
            kept.push(post);
        }
        Ok(Self {
            posts: kept,
            embeddings,
            tag_index,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn posts(&self) -> &[KnowledgePost] {
        &self.posts
    }

    pub fn tag_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.tag_index
    }

    pub fn posts_with_tag(&self, tag: &str) -> &[String] {
        self.tag_index.get(tag).map_or(&[], Vec::as_slice)
    }

    /// Up to `k` posts whose code similarity to the query is at least
    /// `min_sim`, ordered by similarity (descending) then post id.
    /// Similarity is the cosine clamped to `[0, 1]`.
    pub fn retrieve(&self, query_code: &str, k: usize, min_sim: f64) -> Result<Vec<Retrieved<'_>>, ExplainError> {
        if self.posts.is_empty() {
            return Err(ExplainError::EmptyKnowledgeBase);
        }
        let query = self.embedder.embed(query_code)?;
        let mut hits: Vec<Retrieved<'_>> = self
            .posts
            .iter()
            .zip(&self.embeddings)
            .map(|(post, e)| Retrieved {
                post,
                func_sim: query.dot(e).clamp(0.0, 1.0),
            })
            .filter(|r| r.func_sim >= min_sim)
            .collect();
        hits.sort_by(|a, b| {
            b.func_sim
                .total_cmp(&a.func_sim)
                .then_with(|| a.post.post_id.cmp(&b.post.post_id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Scores every answer of the retrieved posts and returns the best
    /// `top_m`, ordered by ranking score, then similarity, then votes, then
    /// answer id.
    pub fn rank_explanations(
        &self,
        query_code: &str,
        k_posts: usize,
        top_m: usize,
        min_sim: f64,
        extractor: &dyn AspectExtractor,
    ) -> Result<Vec<RankedExplanation>, ExplainError> {
        let mut out = Vec::new();
        for hit in self.retrieve(query_code, k_posts, min_sim)? {
            let votes: Vec<i64> = hit.post.answers.iter().map(|a| a.score).collect();
            for answer in &hit.post.answers {
                let spans = [Aspect::Cause, Aspect::Impact, Aspect::Solution]
                    .map(|a| extractor.extract(&answer.body, a));
                let flags = AspectFlags {
                    has_cause: spans[0].is_some(),
                    has_impact: spans[1].is_some(),
                    has_solution: spans[2].is_some(),
                };
                let score = ranking_score(hit.func_sim, answer.score, &votes, flags, answer.accepted);
                let [cause, impact, solution] = spans.map(|s| s.map(|s| SpanText::from_span(s, &answer.body)));
                out.push(RankedExplanation {
                    post_id: hit.post.post_id.clone(),
                    answer_id: answer.answer_id.clone(),
                    func_sim: hit.func_sim,
                    answer_score: answer.score,
                    accepted: answer.accepted,
                    share: score.share,
                    asps: score.asps,
                    ranking_score: score.ranking_score,
                    cause_span: cause,
                    impact_span: impact,
                    solution_span: solution,
                });
            }
        }
        out.sort_by(|a, b| {
            b.ranking_score
                .total_cmp(&a.ranking_score)
                .then_with(|| b.func_sim.total_cmp(&a.func_sim))
                .then_with(|| b.answer_score.cmp(&a.answer_score))
                .then_with(|| a.answer_id.cmp(&b.answer_id))
                .then_with(|| a.post_id.cmp(&b.post_id))
        });
        out.truncate(top_m);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, EncoderModel};
    use std::io::Write as _;

    fn answer(id: &str, body: &str, score: i64, accepted: bool) -> Answer {
        Answer {
            answer_id: id.into(),
            body: body.into(),
            score,
            accepted,
        }
    }

    fn post(id: &str, code: &str, tags: &[&str], answers: Vec<Answer>) -> KnowledgePost {
        KnowledgePost {
            post_id: id.into(),
            title: format!("title {id}"),
            body: String::new(),
            code: code.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            answers,
        }
    }

    fn encoder() -> Arc<dyn CodeEmbedder + Send + Sync> {
        let cfg = EncoderConfig {
            vocab_size: 512,
            d_embed: 16,
            d: 16,
            dropout_rate: 0.1,
            max_sequence_length: 128,
        };
        Arc::new(EncoderModel::new(cfg, 5).unwrap())
    }

    #[test]
    fn extractor_single_sentence_cause() {
        let body = "It crashes because the array is too small.";
        let span = CueExtractor.extract(body, Aspect::Cause).unwrap();
        assert_eq!((span.start, span.end), (0, body.chars().count()));
    }

    #[test]
    fn extractor_negative() {
        for a in [Aspect::Cause, Aspect::Impact, Aspect::Solution] {
            assert_eq!(CueExtractor.extract("Thanks, works now!", a), None);
            assert_eq!(CueExtractor.extract("", a), None);
        }
    }

    #[test]
    fn extractor_picks_second_sentence() {
        let body = "The buffer is small. Use strncpy instead of strcpy.";
        let spans = sentence_spans(body);
        assert_eq!(spans.len(), 2);
        // exhaustive scorer over both candidates
        let hits: Vec<usize> = spans.iter().map(|s| CueExtractor::cue_hits(s.slice(body), Aspect::Solution)).collect();
        assert_eq!(hits, vec![0, 1]);
        let got = CueExtractor.extract(body, Aspect::Solution).unwrap();
        assert_eq!(got, spans[1]);
        assert_eq!(got.slice(body), "Use strncpy instead of strcpy.");
    }

    #[test]
    fn cue_needs_word_start() {
        assert_eq!(CueExtractor::cue_hits("use a prefix", Aspect::Solution), 0);
        assert_eq!(CueExtractor::cue_hits("Fixed it; the FIX works", Aspect::Solution), 2);
        assert_eq!(CueExtractor::cue_hits("memory leaks everywhere", Aspect::Impact), 1);
    }

    #[test]
    fn spans_use_character_offsets() {
        let body = "Ça plante. Il faut fix ça!";
        let span = CueExtractor.extract(body, Aspect::Solution).unwrap();
        assert_eq!((span.start, span.end), (11, 26));
        assert_eq!(span.slice(body), "Il faut fix ça!");
    }

    #[test]
    fn flags_for_example_sentence() {
        let a = answer("a", "It crashes because the array is too small; declare it one larger.", 1, false);
        let f = aspect_flags(&a, &CueExtractor);
        assert_eq!(
            f,
            AspectFlags {
                has_cause: true,
                has_impact: true,
                has_solution: true
            }
        );
        assert_eq!(aspect_flags(&answer("b", "", 0, false), &CueExtractor), AspectFlags::default());
        assert_eq!(aspect_flags(&answer("c", "Works for me.", 0, false), &CueExtractor), AspectFlags::default());
    }

    #[test]
    fn ranking_score_examples() {
        let cause = AspectFlags {
            has_cause: true,
            ..Default::default()
        };
        let s = ranking_score(0.8, 5, &[5], cause, true);
        assert!((s.asps - 0.6).abs() < 1e-12);
        assert!((s.ranking_score - 0.48).abs() < 1e-12);

        let all = AspectFlags {
            has_cause: true,
            has_impact: true,
            has_solution: true,
        };
        assert_eq!(asps(all, true), 1.0);

        let cs = AspectFlags {
            has_cause: true,
            has_solution: true,
            ..Default::default()
        };
        let s = ranking_score(0.5, 3, &[3, 1], cs, false);
        assert!((s.asps - 0.6).abs() < 1e-12);
        assert_eq!(s.share, 0.75);
        assert!((s.ranking_score - 0.225).abs() < 1e-12);
    }

    #[test]
    fn non_positive_vote_sum_falls_back_to_uniform() {
        let s = ranking_score(1.0, -2, &[-2, 0, 1], AspectFlags::default(), true);
        assert!((s.share - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tag_index_and_validation() {
        let kb = KnowledgeBase::from_posts(
            vec![
                post("p1", "int a;", &["c++", "memory"], vec![answer("a1", "x", 1, false)]),
                post("p2", "int b;", &["c++"], vec![answer("a2", "y", 1, true)]),
            ],
            encoder(),
        )
        .unwrap();
        assert_eq!(kb.posts_with_tag("c++"), ["p1", "p2"]);
        assert_eq!(kb.posts_with_tag("memory"), ["p1"]);
        assert!(kb.posts_with_tag("rust").is_empty());

        let empty_code = KnowledgeBase::from_posts(vec![post("p", "  ", &[], vec![answer("a", "x", 1, false)])], encoder());
        assert!(matches!(empty_code, Err(ExplainError::MalformedPost { line: 1, .. })));
        let two_accepted = KnowledgeBase::from_posts(
            vec![post("p", "int x;", &[], vec![answer("a", "x", 1, true), answer("b", "y", 1, true)])],
            encoder(),
        );
        assert!(matches!(two_accepted, Err(ExplainError::MalformedPost { .. })));
        let dup = KnowledgeBase::from_posts(
            vec![
                post("p", "int x;", &[], vec![answer("a", "x", 1, false)]),
                post("p", "int y;", &[], vec![answer("b", "x", 1, false)]),
            ],
            encoder(),
        );
        assert!(matches!(dup, Err(ExplainError::DuplicatePostId(_))));
    }

    #[test]
    fn ingest_reports_line_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"post_id":"p1","title":"t","body":"b","code":"int a;","tags":["c"],"answers":[{{"answer_id":"a","body":"x","score":1,"accepted":false}}]}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"post_id":"p2","title":"t"}}"#).unwrap();
        match KnowledgeBase::ingest(f.path(), encoder()) {
            Err(ExplainError::MalformedPost { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn retrieve_self_similarity_and_truncation() {
        let codes = [
            "int f(char *s) { char b[8]; strcpy(b, s); return 0; }",
            "void g(int n) { int *p = malloc(n); free(p); free(p); }",
            "int h(int i) { int a[4]; return a[i]; }",
            "double k(double x) { return x * x + 1.0; }",
            "void m(FILE *f) { char line[64]; gets(line); fputs(line, f); }",
        ];
        let posts = codes
            .iter()
            .enumerate()
            .map(|(i, c)| post(&format!("p{i}"), c, &[], vec![answer("a", "x", 1, false)]))
            .collect();
        let kb = KnowledgeBase::from_posts(posts, encoder()).unwrap();
        let hits = kb.retrieve(codes[2], 5, 0.0).unwrap();
        assert_eq!(hits[0].post.post_id, "p2");
        assert!((hits[0].func_sim - 1.0).abs() < 1e-6);
        assert!(hits.windows(2).all(|w| w[0].func_sim >= w[1].func_sim));
        assert_eq!(kb.retrieve(codes[2], 2, 0.0).unwrap().len(), 2);
        assert!(kb.retrieve(codes[2], 5, 1.5).unwrap().is_empty());
        let empty = KnowledgeBase::from_posts(vec![], encoder()).unwrap();
        assert!(matches!(empty.retrieve("int x;", 1, 0.0), Err(ExplainError::EmptyKnowledgeBase)));
    }

    /// Embeds code as a fixed vector looked up by exact text.
    struct TableEmbedder(Vec<(&'static str, Vec<f64>)>);

    impl CodeEmbedder for TableEmbedder {
        fn embed(&self, code: &str) -> Result<EmbeddingVector, EncoderError> {
            self.0
                .iter()
                .find(|(c, _)| *c == code)
                .map(|(_, v)| EmbeddingVector::new(v.clone()))
                .ok_or(EncoderError::EmptyInput)
        }

        fn dim(&self) -> usize {
            2
        }
    }

    #[test]
    fn ranking_is_monotone_in_asps_and_similarity() {
        let emb = Arc::new(TableEmbedder(vec![
            ("q", vec![1.0, 0.0]),
            ("near", vec![0.9, (1.0f64 - 0.81).sqrt()]),
            ("far", vec![0.4, (1.0f64 - 0.16).sqrt()]),
        ]));
        let kb = KnowledgeBase::from_posts(
            vec![
                post(
                    "p1",
                    "near",
                    &[],
                    vec![
                        answer("low", "Thanks, accepted.", 2, true),
                        answer("high", "It fails because of the size.", 2, false),
                    ],
                ),
                post("p2", "far", &[], vec![answer("x", "It fails because of the size.", 2, false)]),
            ],
            emb,
        )
        .unwrap();
        let ranked = kb.rank_explanations("q", 5, 10, 0.0, &CueExtractor).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|r| r.answer_id.as_str()).collect();
        assert_eq!(ids, ["high", "x", "low"]);
        assert!(ranked[0].cause_span.as_ref().unwrap().text.contains("because"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn flags() -> impl Strategy<Value = AspectFlags> {
            (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(c, i, s)| AspectFlags {
                has_cause: c,
                has_impact: i,
                has_solution: s,
            })
        }

        proptest! {
            #[test]
            fn monotone_in_every_input(
                sim in 0.0f64..1.0, bump in 0.0f64..1.0, votes in prop::collection::vec(0i64..50, 1..6),
                f in flags(), acc in any::<bool>()
            ) {
                let base = ranking_score(sim, votes[0], &votes, f, acc).ranking_score;
                let hi_sim = ranking_score((sim + bump).min(1.0), votes[0], &votes, f, acc).ranking_score;
                prop_assert!(hi_sim >= base);
                let mut more = votes.clone();
                more[0] += 5;
                let hi_share = ranking_score(sim, more[0], &more, f, acc).ranking_score;
                prop_assert!(hi_share >= base - 1e-15);
                for set in 0..4 {
                    let mut g = f;
                    match set {
                        0 => g.has_cause = true,
                        1 => g.has_impact = true,
                        2 => g.has_solution = true,
                        _ => {}
                    }
                    let acc2 = acc || set == 3;
                    prop_assert!(ranking_score(sim, votes[0], &votes, g, acc2).ranking_score >= base);
                }
            }

            #[test]
            fn asps_is_a_subset_sum(f in flags(), acc in any::<bool>()) {
                let a = asps(f, acc);
                let subset_sums: Vec<f64> = (0..16u8).map(|m| {
                    [0.5, 0.3, 0.1, 0.1].iter().enumerate()
                        .filter(|(i, _)| m & (1 << i) != 0).map(|(_, w)| w).sum()
                }).collect();
                prop_assert!(subset_sums.iter().any(|s| (s - a).abs() < 1e-15));
                prop_assert!((0.0..=1.0).contains(&a));
            }

            #[test]
            fn shares_sum_to_one(votes in prop::collection::vec(0i64..40, 1..8)) {
                prop_assume!(votes.iter().sum::<i64>() > 0);
                let total: f64 = votes.iter()
                    .map(|&v| ranking_score(1.0, v, &votes, AspectFlags::default(), false).share).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }

            #[test]
            fn extracted_span_is_in_bounds_and_has_cue(
                words in prop::collection::vec(prop::sample::select(vec![
                    "the", "buffer", "because", "crash", "fix", "instead", "leak", ".", "!", "?", " ", "é", "Overflow"
                ]), 0..40),
                which in 0usize..3
            ) {
                let body = words.join(" ");
                let aspect = [Aspect::Cause, Aspect::Impact, Aspect::Solution][which];
                if let Some(span) = CueExtractor.extract(&body, aspect) {
                    prop_assert!(span.start < span.end && span.end <= body.chars().count());
                    prop_assert!(CueExtractor::cue_hits(span.slice(&body), aspect) >= 1);
                }
            }
        }
    }
}
