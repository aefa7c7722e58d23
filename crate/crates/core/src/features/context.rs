//! Contextual features: relational similarities, structural position and
//! social activity of a tweet within its thread.

use alloc::vec;

use super::embed::{cosine, embed_tweet, EmbeddingProvider};
use crate::thread::{ConversationThread, Tweet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationalFeatures {
    /// Cosine similarity to the source tweet.
    pub sim_source: f64,
    /// Cosine similarity to the parent tweet (0 for the source).
    pub sim_parent: f64,
    /// Cosine similarity to the mean embedding of other-author tweets in the
    /// thread (0 when no such tweets exist).
    pub sim_thread: f64,
}

pub fn relational_features(
    tweet: &Tweet,
    thread: &ConversationThread,
    provider: &dyn EmbeddingProvider,
) -> RelationalFeatures {
    let own = embed_tweet(&tweet.text, provider);
    let source = embed_tweet(&thread.root().text, provider);
    let sim_source = cosine(&own, &source);

    let sim_parent = match &tweet.parent_id {
        Some(pid) => {
            let parent = thread.tweet(pid).expect("parent validated at parse time");
            cosine(&own, &embed_tweet(&parent.text, provider))
        }
        None => 0.0,
    };

    let mut acc = vec![0.0; provider.dimension()];
    let mut n = 0usize;
    for other in thread.tweets() {
        if other.author_id != tweet.author_id {
            let e = embed_tweet(&other.text, provider);
            for (a, x) in acc.iter_mut().zip(&e) {
                *a += x;
            }
            n += 1;
        }
    }
    let sim_thread = if n == 0 {
        0.0
    } else {
        for a in acc.iter_mut() {
            *a /= n as f64;
        }
        cosine(&own, &acc)
    };

    RelationalFeatures {
        sim_source,
        sim_parent,
        sim_thread,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralFeatures {
    pub is_leaf: bool,
    pub is_source_tweet: bool,
    /// Same author as the source tweet.
    pub is_source_user: bool,
}

pub fn structural_features(tweet: &Tweet, thread: &ConversationThread) -> StructuralFeatures {
    StructuralFeatures {
        is_leaf: thread.is_leaf(&tweet.id),
        is_source_tweet: tweet.parent_id.is_none(),
        is_source_user: tweet.author_id == thread.root().author_id,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialFeatures {
    pub favourites: f64,
    pub retweets: f64,
    /// Number of tweets by this author in the whole thread (including this one).
    pub persistence: f64,
    /// Seconds since the source tweet (may be negative on noisy data).
    pub time_difference: f64,
}

pub fn social_features(tweet: &Tweet, thread: &ConversationThread) -> SocialFeatures {
    let persistence = thread
        .tweets()
        .filter(|t| t.author_id == tweet.author_id)
        .count();
    SocialFeatures {
        favourites: tweet.favourites as f64,
        retweets: tweet.retweets as f64,
        persistence: persistence as f64,
        time_difference: (tweet.timestamp - thread.root().timestamp) as f64,
    }
}
