//! Feature extraction over a declarative group configuration.
//!
//! Eight feature groups exist; a configuration selects a subset and the
//! assembled vector concatenates the selected groups in the fixed canonical
//! order LF1, LF2, LF3, LF4, R, ST, SO, HF. The layout (group, feature name,
//! offset, width) is recorded alongside the values so trained models can
//! verify at prediction time that they are fed what they were trained on.

pub mod context;
pub mod embed;
pub mod text;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use context::{
    relational_features, social_features, structural_features, RelationalFeatures,
    SocialFeatures, StructuralFeatures,
};
pub use embed::{cosine, embed_tweet, EmbeddingProvider, MapEmbeddings};
pub use text::{
    bag_of_words, hawkes_text_features, local_surface_features, negation_count, pos_counts,
    swear_count, tokenize, SurfaceFeatures, SwearLexicon, Vocabulary,
};

use crate::thread::{ConversationThread, Tweet};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureError {
    /// A selected group needs a resource that was not provided.
    MissingResource(&'static str),
    /// Unknown feature-group code or feature name.
    UnknownFeature(String),
    /// A configuration must select at least one group.
    EmptyConfig,
}

impl core::fmt::Display for FeatureError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FeatureError::MissingResource(r) => write!(f, "missing resource: {r}"),
            FeatureError::UnknownFeature(name) => write!(f, "unknown feature: {name}"),
            FeatureError::EmptyConfig => write!(f, "feature configuration is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FeatureError {}

/// The eight feature groups, in canonical assembly order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum FeatureGroup {
    /// LF1: word embeddings, POS counts, negation, swear words.
    #[serde(rename = "LF1")]
    Lexicon,
    /// LF2: tweet length and word count.
    #[serde(rename = "LF2")]
    ContentFormatting,
    /// LF3: question and exclamation marks.
    #[serde(rename = "LF3")]
    Punctuation,
    /// LF4: URL attached.
    #[serde(rename = "LF4")]
    TweetFormatting,
    /// R: similarities to source, parent and thread.
    #[serde(rename = "R")]
    Relational,
    /// ST: leaf / source-tweet / source-user indicators.
    #[serde(rename = "ST")]
    Structural,
    /// SO: favourites, retweets, persistence, time difference.
    #[serde(rename = "SO")]
    Social,
    /// HF: bag of words plus timestamp.
    #[serde(rename = "HF")]
    HawkesBagOfWords,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 8] = [
        FeatureGroup::Lexicon,
        FeatureGroup::ContentFormatting,
        FeatureGroup::Punctuation,
        FeatureGroup::TweetFormatting,
        FeatureGroup::Relational,
        FeatureGroup::Structural,
        FeatureGroup::Social,
        FeatureGroup::HawkesBagOfWords,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FeatureGroup::Lexicon => "LF1",
            FeatureGroup::ContentFormatting => "LF2",
            FeatureGroup::Punctuation => "LF3",
            FeatureGroup::TweetFormatting => "LF4",
            FeatureGroup::Relational => "R",
            FeatureGroup::Structural => "ST",
            FeatureGroup::Social => "SO",
            FeatureGroup::HawkesBagOfWords => "HF",
        }
    }
}

/// A non-empty subset of feature groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    groups: BTreeSet<FeatureGroup>,
}

impl FeatureConfig {
    pub fn new(groups: impl IntoIterator<Item = FeatureGroup>) -> Result<Self, FeatureError> {
        let groups: BTreeSet<FeatureGroup> = groups.into_iter().collect();
        if groups.is_empty() {
            return Err(FeatureError::EmptyConfig);
        }
        Ok(FeatureConfig { groups })
    }

    /// Parse group tokens. Besides the canonical codes (LF1..LF4, R, ST, SO,
    /// HF), compound local codes such as "LF123" select several local
    /// subgroups at once, and "LF" alone selects all four.
    pub fn parse<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Result<Self, FeatureError> {
        let mut groups = BTreeSet::new();
        for token in tokens {
            let t = token.as_ref().trim().to_uppercase();
            match t.as_str() {
                "R" => {
                    groups.insert(FeatureGroup::Relational);
                }
                "ST" => {
                    groups.insert(FeatureGroup::Structural);
                }
                "SO" => {
                    groups.insert(FeatureGroup::Social);
                }
                "HF" => {
                    groups.insert(FeatureGroup::HawkesBagOfWords);
                }
                "LF" => {
                    groups.extend([
                        FeatureGroup::Lexicon,
                        FeatureGroup::ContentFormatting,
                        FeatureGroup::Punctuation,
                        FeatureGroup::TweetFormatting,
                    ]);
                }
                _ => {
                    let digits = t
                        .strip_prefix("LF")
                        .filter(|d| !d.is_empty() && d.chars().all(|c| ('1'..='4').contains(&c)));
                    match digits {
                        Some(digits) => {
                            for c in digits.chars() {
                                groups.insert(match c {
                                    '1' => FeatureGroup::Lexicon,
                                    '2' => FeatureGroup::ContentFormatting,
                                    '3' => FeatureGroup::Punctuation,
                                    _ => FeatureGroup::TweetFormatting,
                                });
                            }
                        }
                        None => {
                            return Err(FeatureError::UnknownFeature(t));
                        }
                    }
                }
            }
        }
        Self::new(groups)
    }

    pub fn contains(&self, group: FeatureGroup) -> bool {
        self.groups.contains(&group)
    }

    /// Selected groups in canonical order.
    pub fn groups(&self) -> impl Iterator<Item = FeatureGroup> + '_ {
        self.groups.iter().copied()
    }

    pub fn codes(&self) -> Vec<String> {
        self.groups().map(|g| g.code().to_string()).collect()
    }
}

/// One named block inside an assembled vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub group: FeatureGroup,
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

/// The deterministic layout of an assembled vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub entries: Vec<LayoutEntry>,
    pub width: usize,
}

impl FeatureLayout {
    /// Total width of one group's blocks.
    pub fn group_width(&self, group: FeatureGroup) -> usize {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.width)
            .sum()
    }
}

/// A dense feature vector plus the layout it was assembled under.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

/// External resources needed by some feature groups.
#[derive(Clone, Copy)]
pub struct FeatureResources<'a> {
    pub embeddings: Option<&'a dyn EmbeddingProvider>,
    pub swear_words: Option<&'a SwearLexicon>,
    /// Ordered POS tagset observed in the training folds.
    pub tagset: &'a [String],
    /// Bag-of-words vocabulary built from the training folds.
    pub vocabulary: Option<&'a Vocabulary>,
}

impl Default for FeatureResources<'_> {
    fn default() -> Self {
        FeatureResources {
            embeddings: None,
            swear_words: None,
            tagset: &[],
            vocabulary: None,
        }
    }
}

/// Assembles feature vectors for one fixed configuration and resource set.
pub struct FeatureExtractor<'a> {
    config: FeatureConfig,
    resources: FeatureResources<'a>,
    layout: Arc<FeatureLayout>,
}

impl<'a> FeatureExtractor<'a> {
    /// Checks that all resources required by the selected groups are present
    /// and freezes the vector layout.
    pub fn new(
        config: FeatureConfig,
        resources: FeatureResources<'a>,
    ) -> Result<Self, FeatureError> {
        let needs_embeddings = config.contains(FeatureGroup::Lexicon)
            || config.contains(FeatureGroup::Relational);
        if needs_embeddings && resources.embeddings.is_none() {
            return Err(FeatureError::MissingResource("word embeddings"));
        }
        if config.contains(FeatureGroup::Lexicon) && resources.swear_words.is_none() {
            return Err(FeatureError::MissingResource("swear-word list"));
        }
        if config.contains(FeatureGroup::HawkesBagOfWords) && resources.vocabulary.is_none() {
            return Err(FeatureError::MissingResource("bag-of-words vocabulary"));
        }

        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |group, name: &str, width: usize, offset: &mut usize| {
            entries.push(LayoutEntry {
                group,
                name: name.to_string(),
                offset: *offset,
                width,
            });
            *offset += width;
        };
        for group in config.groups() {
            match group {
                FeatureGroup::Lexicon => {
                    let d = resources.embeddings.expect("checked above").dimension();
                    push(group, "embedding", d, &mut offset);
                    push(group, "pos_counts", resources.tagset.len(), &mut offset);
                    push(group, "negation_count", 1, &mut offset);
                    push(group, "swear_count", 1, &mut offset);
                }
                FeatureGroup::ContentFormatting => {
                    push(group, "length", 1, &mut offset);
                    push(group, "word_count", 1, &mut offset);
                }
                FeatureGroup::Punctuation => {
                    push(group, "has_question", 1, &mut offset);
                    push(group, "has_exclamation", 1, &mut offset);
                }
                FeatureGroup::TweetFormatting => {
                    push(group, "has_url", 1, &mut offset);
                }
                FeatureGroup::Relational => {
                    push(group, "sim_source", 1, &mut offset);
                    push(group, "sim_parent", 1, &mut offset);
                    push(group, "sim_thread", 1, &mut offset);
                }
                FeatureGroup::Structural => {
                    push(group, "is_leaf", 1, &mut offset);
                    push(group, "is_source_tweet", 1, &mut offset);
                    push(group, "is_source_user", 1, &mut offset);
                }
                FeatureGroup::Social => {
                    push(group, "favourites", 1, &mut offset);
                    push(group, "retweets", 1, &mut offset);
                    push(group, "persistence", 1, &mut offset);
                    push(group, "time_difference", 1, &mut offset);
                }
                FeatureGroup::HawkesBagOfWords => {
                    let v = resources.vocabulary.expect("checked above").len();
                    push(group, "bag_of_words", v, &mut offset);
                    push(group, "timestamp", 1, &mut offset);
                }
            }
        }

        Ok(FeatureExtractor {
            config,
            resources,
            layout: Arc::new(FeatureLayout {
                entries,
                width: offset,
            }),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        &self.layout
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    /// Concatenate the selected groups for one tweet, in canonical order.
    pub fn assemble(&self, tweet: &Tweet, thread: &ConversationThread) -> FeatureVector {
        let mut values = Vec::with_capacity(self.layout.width);
        for group in self.config.groups() {
            match group {
                FeatureGroup::Lexicon => {
                    let provider = self.resources.embeddings.expect("validated in new");
                    values.extend(embed_tweet(&tweet.text, provider));
                    values.extend(pos_counts(tweet, self.resources.tagset));
                    values.push(negation_count(&tweet.text) as f64);
                    let lex = self.resources.swear_words.expect("validated in new");
                    values.push(swear_count(&tweet.text, lex) as f64);
                }
                FeatureGroup::ContentFormatting => {
                    let s = local_surface_features(&tweet.text);
                    values.push(s.length as f64);
                    values.push(s.word_count as f64);
                }
                FeatureGroup::Punctuation => {
                    let s = local_surface_features(&tweet.text);
                    values.push(s.has_question as u8 as f64);
                    values.push(s.has_exclamation as u8 as f64);
                }
                FeatureGroup::TweetFormatting => {
                    values.push(local_surface_features(&tweet.text).has_url as u8 as f64);
                }
                FeatureGroup::Relational => {
                    let provider = self.resources.embeddings.expect("validated in new");
                    let r = relational_features(tweet, thread, provider);
                    values.extend([r.sim_source, r.sim_parent, r.sim_thread]);
                }
                FeatureGroup::Structural => {
                    let s = structural_features(tweet, thread);
                    values.extend([
                        s.is_leaf as u8 as f64,
                        s.is_source_tweet as u8 as f64,
                        s.is_source_user as u8 as f64,
                    ]);
                }
                FeatureGroup::Social => {
                    let s = social_features(tweet, thread);
                    values.extend([s.favourites, s.retweets, s.persistence, s.time_difference]);
                }
                FeatureGroup::HawkesBagOfWords => {
                    let vocab = self.resources.vocabulary.expect("validated in new");
                    let start = values.len();
                    values.resize(start + vocab.len(), 0.0);
                    for (i, c) in bag_of_words(&tweet.text, vocab) {
                        values[start + i] = c as f64;
                    }
                    values.push(tweet.timestamp as f64);
                }
            }
        }
        debug_assert_eq!(values.len(), self.layout.width);
        debug_assert!(crate::numeric::all_finite(&values));
        FeatureVector {
            values,
            layout: Arc::clone(&self.layout),
        }
    }
}

/// One-shot assembly under a configuration (the extractor is the reusable
/// form).
pub fn assemble(
    tweet: &Tweet,
    thread: &ConversationThread,
    config: FeatureConfig,
    resources: FeatureResources<'_>,
) -> Result<FeatureVector, FeatureError> {
    Ok(FeatureExtractor::new(config, resources)?.assemble(tweet, thread))
}

/// Scalar features exportable for distribution analysis.
pub const SCALAR_FEATURE_NAMES: [&str; 17] = [
    "length",
    "word_count",
    "has_question",
    "has_exclamation",
    "has_url",
    "negation_count",
    "swear_count",
    "sim_source",
    "sim_parent",
    "sim_thread",
    "is_leaf",
    "is_source_tweet",
    "is_source_user",
    "favourites",
    "retweets",
    "persistence",
    "time_difference",
];

/// Evaluate one named scalar feature for a tweet.
pub fn scalar_feature(
    name: &str,
    tweet: &Tweet,
    thread: &ConversationThread,
    resources: &FeatureResources<'_>,
) -> Result<f64, FeatureError> {
    let surface = || local_surface_features(&tweet.text);
    let relational = || -> Result<RelationalFeatures, FeatureError> {
        let provider = resources
            .embeddings
            .ok_or(FeatureError::MissingResource("word embeddings"))?;
        Ok(relational_features(tweet, thread, provider))
    };
    Ok(match name {
        "length" => surface().length as f64,
        "word_count" => surface().word_count as f64,
        "has_question" => surface().has_question as u8 as f64,
        "has_exclamation" => surface().has_exclamation as u8 as f64,
        "has_url" => surface().has_url as u8 as f64,
        "negation_count" => negation_count(&tweet.text) as f64,
        "swear_count" => {
            let lex = resources
                .swear_words
                .ok_or(FeatureError::MissingResource("swear-word list"))?;
            swear_count(&tweet.text, lex) as f64
        }
        "sim_source" => relational()?.sim_source,
        "sim_parent" => relational()?.sim_parent,
        "sim_thread" => relational()?.sim_thread,
        "is_leaf" => structural_features(tweet, thread).is_leaf as u8 as f64,
        "is_source_tweet" => structural_features(tweet, thread).is_source_tweet as u8 as f64,
        "is_source_user" => structural_features(tweet, thread).is_source_user as u8 as f64,
        "favourites" => social_features(tweet, thread).favourites,
        "retweets" => social_features(tweet, thread).retweets,
        "persistence" => social_features(tweet, thread).persistence,
        "time_difference" => social_features(tweet, thread).time_difference,
        _ => return Err(FeatureError::UnknownFeature(name.to_string())),
    })
}
