//! Conversation threads: parsing, validation and structural decomposition.
//!
//! A thread is a rooted tree of tweets. Sequence models consume it either as
//! a whole tree, as root-to-leaf branches, or as a chronological event
//! stream. Branches overlap (every branch starts at the source tweet), so
//! each branch carries a novelty mask marking the first occurrence of every
//! tweet across the thread's branch enumeration.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::label::StanceLabel;

#[derive(Debug, Clone, PartialEq)]
pub enum ThreadError {
    /// Input does not conform to the canonical thread schema.
    MalformedInput(String),
    /// A reply references a parent id that is not in the thread.
    OrphanTweet { id: String, parent_id: String },
    /// More than one tweet has no parent.
    MultipleRoots { first: String, second: String },
    /// Parent links contain a cycle (some tweets are unreachable from the root).
    CycleDetected { id: String },
    /// Lookup of an id that is not in the thread.
    UnknownId(String),
}

impl core::fmt::Display for ThreadError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ThreadError::MalformedInput(msg) => write!(f, "malformed thread input: {msg}"),
            ThreadError::OrphanTweet { id, parent_id } => {
                write!(f, "tweet {id} replies to unknown parent {parent_id}")
            }
            ThreadError::MultipleRoots { first, second } => {
                write!(f, "multiple roots: {first} and {second}")
            }
            ThreadError::CycleDetected { id } => {
                write!(f, "cycle detected involving tweet {id}")
            }
            ThreadError::UnknownId(id) => write!(f, "unknown tweet id {id}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ThreadError {}

/// One post in a conversation thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tweet {
    pub id: String,
    /// Absent for the source tweet.
    #[serde(default)]
    pub parent_id: Option<String>,
    pub author_id: String,
    pub text: String,
    /// Seconds since epoch.
    pub timestamp: i64,
    pub favourites: u64,
    pub retweets: u64,
    #[serde(default)]
    pub pos_tags: Option<Vec<String>>,
    #[serde(default)]
    pub label: Option<StanceLabel>,
}

/// Canonical JSON form of a thread (tweets in document order).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThread {
    event: String,
    thread_id: String,
    tweets: Vec<Tweet>,
}

/// A validated conversation thread: exactly one root, parent links forming a
/// tree, children kept in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationThread {
    event: String,
    thread_id: String,
    root_id: String,
    tweets: BTreeMap<String, Tweet>,
    /// Document order of tweet ids.
    order: Vec<String>,
    /// Children of each tweet, in document order.
    children: BTreeMap<String, Vec<String>>,
}

impl ConversationThread {
    /// Validate a set of tweets as a thread. Children lists preserve the
    /// order of `tweets`.
    pub fn new(
        event: impl Into<String>,
        thread_id: impl Into<String>,
        tweets: Vec<Tweet>,
    ) -> Result<Self, ThreadError> {
        if tweets.is_empty() {
            return Err(ThreadError::MalformedInput("thread has no tweets".into()));
        }
        let mut map: BTreeMap<String, Tweet> = BTreeMap::new();
        let mut order = Vec::with_capacity(tweets.len());
        for t in tweets {
            if map.contains_key(&t.id) {
                return Err(ThreadError::MalformedInput(format!(
                    "duplicate tweet id {}",
                    t.id
                )));
            }
            order.push(t.id.clone());
            map.insert(t.id.clone(), t);
        }

        let mut root: Option<String> = None;
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for id in &order {
            children.entry(id.clone()).or_default();
        }
        for id in &order {
            let t = &map[id];
            match &t.parent_id {
                None => match &root {
                    None => root = Some(id.clone()),
                    Some(first) => {
                        return Err(ThreadError::MultipleRoots {
                            first: first.clone(),
                            second: id.clone(),
                        })
                    }
                },
                Some(pid) => {
                    if pid == id {
                        return Err(ThreadError::CycleDetected { id: id.clone() });
                    }
                    match children.get_mut(pid) {
                        Some(list) => list.push(id.clone()),
                        None => {
                            return Err(ThreadError::OrphanTweet {
                                id: id.clone(),
                                parent_id: pid.clone(),
                            })
                        }
                    }
                }
            }
        }
        let root_id = match root {
            Some(r) => r,
            // every tweet has a resolving parent, so some subset must cycle
            None => {
                return Err(ThreadError::CycleDetected {
                    id: order[0].clone(),
                })
            }
        };

        // reachability from the root; leftover tweets sit on a cycle
        let mut visited: BTreeSet<&str> = BTreeSet::new();
        let mut stack = alloc::vec![root_id.as_str()];
        while let Some(id) = stack.pop() {
            if visited.insert(id) {
                for c in &children[id] {
                    stack.push(c);
                }
            }
        }
        if visited.len() != order.len() {
            let id = order
                .iter()
                .find(|id| !visited.contains(id.as_str()))
                .expect("some id is unvisited")
                .clone();
            return Err(ThreadError::CycleDetected { id });
        }

        Ok(ConversationThread {
            event: event.into(),
            thread_id: thread_id.into(),
            root_id,
            tweets: map,
            order,
            children,
        })
    }

    pub fn event(&self) -> &str {
        &self.event
    }

    pub fn thread_id(&self) -> &str {
        &self.thread_id
    }

    pub fn root_id(&self) -> &str {
        &self.root_id
    }

    pub fn root(&self) -> &Tweet {
        &self.tweets[&self.root_id]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn tweet(&self, id: &str) -> Option<&Tweet> {
        self.tweets.get(id)
    }

    /// Tweets in document order.
    pub fn tweets(&self) -> impl Iterator<Item = &Tweet> {
        self.order.iter().map(move |id| &self.tweets[id])
    }

    /// Tweet ids in document order.
    pub fn ids(&self) -> &[String] {
        &self.order
    }

    pub fn children_of(&self, id: &str) -> &[String] {
        self.children.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        self.children_of(id).is_empty()
    }

    /// Number of parent hops from `id` to the root.
    pub fn depth_of(&self, id: &str) -> Result<usize, ThreadError> {
        let mut t = self
            .tweets
            .get(id)
            .ok_or_else(|| ThreadError::UnknownId(id.to_string()))?;
        let mut depth = 0;
        while let Some(pid) = &t.parent_id {
            t = &self.tweets[pid];
            depth += 1;
        }
        Ok(depth)
    }

    /// One branch per leaf, enumerated by depth-first traversal in children
    /// order; novelty masks mark first occurrences across that enumeration.
    pub fn extract_branches(&self) -> Vec<Branch> {
        let mut branches = Vec::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut path: Vec<&str> = Vec::new();
        let mut stack: Vec<(&str, usize)> = alloc::vec![(self.root_id.as_str(), 0)];
        while let Some((id, depth)) = stack.pop() {
            path.truncate(depth);
            path.push(id);
            let children = self.children_of(id);
            if children.is_empty() {
                branches.push(Branch {
                    tweet_ids: path.iter().map(|s| s.to_string()).collect(),
                    novelty_mask: path.iter().map(|s| seen.insert(s)).collect(),
                });
            } else {
                for c in children.iter().rev() {
                    stack.push((c, depth + 1));
                }
            }
        }
        branches
    }

    /// Tweet ids sorted by ascending timestamp, ties broken by ascending id.
    pub fn chronological_order(&self) -> Vec<String> {
        let mut ids = self.order.clone();
        ids.sort_by(|a, b| {
            let ta = self.tweets[a].timestamp;
            let tb = self.tweets[b].timestamp;
            ta.cmp(&tb).then_with(|| a.cmp(b))
        });
        ids
    }

    /// Serialize to the canonical JSON schema (tweets in document order).
    pub fn to_canonical_json(&self) -> String {
        let raw = RawThread {
            event: self.event.clone(),
            thread_id: self.thread_id.clone(),
            tweets: self.tweets().cloned().collect(),
        };
        serde_json::to_string(&raw).expect("thread serialization cannot fail")
    }
}

/// Parse one canonical-schema JSON document into a validated thread.
pub fn parse_thread(raw: &str) -> Result<ConversationThread, ThreadError> {
    let raw: RawThread =
        serde_json::from_str(raw).map_err(|e| ThreadError::MalformedInput(e.to_string()))?;
    ConversationThread::new(raw.event, raw.thread_id, raw.tweets)
}

/// A root-to-leaf path with its novelty mask (true at a tweet's first
/// occurrence across all branches of its thread).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub tweet_ids: Vec<String>,
    pub novelty_mask: Vec<bool>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.tweet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweet_ids.is_empty()
    }
}

/// True iff each tweet appearing in `branches` has exactly one mask-1
/// position, which also forces the mask bits to sum to the tweet count.
pub fn novelty_mask_check(branches: &[Branch]) -> bool {
    let mut ones: BTreeMap<&str, usize> = BTreeMap::new();
    let mut distinct: BTreeSet<&str> = BTreeSet::new();
    for b in branches {
        if b.tweet_ids.len() != b.novelty_mask.len() {
            return false;
        }
        for (id, &m) in b.tweet_ids.iter().zip(&b.novelty_mask) {
            distinct.insert(id);
            if m {
                *ones.entry(id).or_insert(0) += 1;
            }
        }
    }
    distinct.len() == ones.len() && ones.values().all(|&n| n == 1)
}

/// A collection of threads spanning one or more events.
#[derive(Debug, Clone)]
pub struct Dataset {
    threads: Vec<ConversationThread>,
    events: BTreeSet<String>,
}

impl Dataset {
    /// Thread ids must be globally unique.
    pub fn new(threads: Vec<ConversationThread>) -> Result<Self, ThreadError> {
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        for t in &threads {
            if !ids.insert(t.thread_id()) {
                return Err(ThreadError::MalformedInput(format!(
                    "duplicate thread id {}",
                    t.thread_id()
                )));
            }
        }
        let events = threads.iter().map(|t| t.event().to_string()).collect();
        Ok(Dataset { threads, events })
    }

    pub fn threads(&self) -> &[ConversationThread] {
        &self.threads
    }

    pub fn events(&self) -> &BTreeSet<String> {
        &self.events
    }

    pub fn num_tweets(&self) -> usize {
        self.threads.iter().map(|t| t.len()).sum()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::vec;

    pub(crate) fn tweet(
        id: &str,
        parent: Option<&str>,
        author: &str,
        text: &str,
        ts: i64,
        label: Option<StanceLabel>,
    ) -> Tweet {
        Tweet {
            id: id.to_string(),
            parent_id: parent.map(|s| s.to_string()),
            author_id: author.to_string(),
            text: text.to_string(),
            timestamp: ts,
            favourites: 0,
            retweets: 0,
            pos_tags: None,
            label,
        }
    }

    /// The six-tweet example thread: a source tweet, three direct replies,
    /// and a two-deep tail under the third reply.
    pub(crate) fn example_thread() -> ConversationThread {
        use StanceLabel::*;
        ConversationThread::new(
            "ottawashooting",
            "fig1",
            vec![
                tweet(
                    "t1",
                    None,
                    "u1",
                    "These are not timid colours; soldiers back guarding Tomb of \
                     Unknown Soldier after today's shooting #StandforCanada --PICTURE--",
                    100,
                    Some(Support),
                ),
                tweet(
                    "t2",
                    Some("t1"),
                    "u2",
                    "@u1 Apparently a hoax. Best to take Tweet down.",
                    110,
                    Some(Deny),
                ),
                tweet(
                    "t3",
                    Some("t1"),
                    "u3",
                    "@u1 This photo was taken this morning, before the shooting.",
                    120,
                    Some(Deny),
                ),
                tweet(
                    "t4",
                    Some("t1"),
                    "u4",
                    "@u1 I don't believe there are soldiers guarding this area right now.",
                    130,
                    Some(Deny),
                ),
                tweet(
                    "t5",
                    Some("t4"),
                    "u5",
                    "@u4 wondered as well. I've reached out to someone who would know \
                     just to confirm that. Hopefully get response soon.",
                    140,
                    Some(Comment),
                ),
                tweet("t6", Some("t5"), "u4", "@u5 ok, thanks.", 150, Some(Comment)),
            ],
        )
        .unwrap()
    }
}
