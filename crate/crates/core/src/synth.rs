//! Synthetic conversation-thread generator for harness tests and sanity
//! experiments: labels follow a Markov transition structure along reply
//! edges while the tweet text carries only a weak label signal.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::label::StanceLabel;
use crate::thread::{ConversationThread, Dataset, Tweet};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub events: usize,
    pub threads_per_event: usize,
    /// Tweets per thread beyond the root, drawn uniformly from this range.
    pub replies: (usize, usize),
    /// Probability that a tweet emits its label's signature word.
    pub signal: f64,
    /// Probability that a child's label follows the dominant transition.
    pub transition_strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            events: 4,
            threads_per_event: 30,
            replies: (3, 9),
            signal: 0.3,
            transition_strength: 0.8,
            seed: 7,
        }
    }
}

const NOISE_WORDS: [&str; 16] = [
    "the", "a", "to", "of", "and", "in", "on", "at", "it", "is", "was", "this", "that", "so",
    "just", "now",
];

fn signature_word(label: StanceLabel) -> &'static str {
    match label {
        StanceLabel::Support => "true",
        StanceLabel::Deny => "fake",
        StanceLabel::Query => "really",
        StanceLabel::Comment => "wow",
    }
}

fn root_label(rng: &mut ChaCha8Rng) -> StanceLabel {
    let r: f64 = rng.gen();
    if r < 0.45 {
        StanceLabel::Support
    } else if r < 0.55 {
        StanceLabel::Deny
    } else if r < 0.85 {
        StanceLabel::Query
    } else {
        StanceLabel::Comment
    }
}

/// Dominant child label under the transition structure: Deny follows
/// Support, Support follows Deny, Comment follows Query or Comment.
fn dominant_child(parent: StanceLabel) -> StanceLabel {
    match parent {
        StanceLabel::Support => StanceLabel::Deny,
        StanceLabel::Deny => StanceLabel::Support,
        StanceLabel::Query => StanceLabel::Comment,
        StanceLabel::Comment => StanceLabel::Comment,
    }
}

fn offbeat_child(rng: &mut ChaCha8Rng) -> StanceLabel {
    StanceLabel::ALL[rng.gen_range(0..4)]
}

fn child_label(parent: StanceLabel, strength: f64, rng: &mut ChaCha8Rng) -> StanceLabel {
    if rng.gen::<f64>() < strength {
        dominant_child(parent)
    } else {
        offbeat_child(rng)
    }
}

fn text_for(label: StanceLabel, signal: f64, rng: &mut ChaCha8Rng) -> String {
    let n_words = rng.gen_range(3..7);
    let mut words: Vec<&str> = (0..n_words)
        .map(|_| NOISE_WORDS[rng.gen_range(0..NOISE_WORDS.len())])
        .collect();
    if rng.gen::<f64>() < signal {
        let slot = rng.gen_range(0..words.len());
        words[slot] = signature_word(label);
    }
    words.join(" ")
}

/// Deterministic synthetic dataset with the configured number of events.
pub fn generate(config: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut threads = Vec::new();
    for e in 0..config.events {
        let event = format!("event{e}");
        for k in 0..config.threads_per_event {
            let thread_id = format!("{event}-t{k}");
            let n_replies = rng.gen_range(config.replies.0..=config.replies.1);
            let base_time = 1_000_000 + (e * 1000 + k) as i64 * 10_000;

            let mut labels = vec![root_label(&mut rng)];
            let mut parents: Vec<Option<usize>> = vec![None];
            let mut times = vec![base_time];
            for i in 1..=n_replies {
                let p = rng.gen_range(0..i);
                parents.push(Some(p));
                labels.push(child_label(labels[p], config.transition_strength, &mut rng));
                times.push(times[p] + rng.gen_range(10..600));
            }

            let tweets: Vec<Tweet> = (0..=n_replies)
                .map(|i| Tweet {
                    id: format!("{thread_id}-n{i}"),
                    parent_id: parents[i].map(|p| format!("{thread_id}-n{p}")),
                    author_id: format!("user{}", rng.gen_range(0..50)),
                    text: text_for(labels[i], config.signal, &mut rng),
                    timestamp: times[i],
                    favourites: rng.gen_range(0..5),
                    retweets: rng.gen_range(0..3),
                    pos_tags: None,
                    label: Some(labels[i]),
                })
                .collect();
            threads.push(
                ConversationThread::new(event.clone(), thread_id, tweets)
                    .expect("generated thread is a valid tree"),
            );
        }
    }
    Dataset::new(threads).expect("generated thread ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_labelled() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.events().len(), 4);
        assert_eq!(a.threads().len(), 120);
        assert_eq!(a.num_tweets(), b.num_tweets());
        for (x, y) in a.threads().iter().zip(b.threads()) {
            assert_eq!(x, y);
        }
        // every label occurs in every event (needed for inverse-frequency weights)
        for event in a.events() {
            let mut counts = [0u64; 4];
            for t in a.threads().iter().filter(|t| t.event() == event) {
                for tw in t.tweets() {
                    counts[tw.label.unwrap().index()] += 1;
                }
            }
            assert!(counts.iter().all(|&c| c > 0), "event {event}: {counts:?}");
        }
    }

    #[test]
    fn different_seed_changes_data() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig {
            seed: 8,
            ..Default::default()
        });
        assert_ne!(
            a.threads()[0].root().text,
            b.threads()[0].root().text
        );
    }
}
