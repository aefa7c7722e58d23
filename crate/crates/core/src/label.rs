//! The four stance categories and their canonical order.

use serde::{Deserialize, Serialize};

/// Stance of a post towards the rumour under discussion.
///
/// The canonical order (support, deny, query, comment) is fixed: it defines
/// vector layouts, confusion-matrix axes and decoding tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Support,
    Deny,
    Query,
    Comment,
}

/// Number of stance categories.
pub const NUM_LABELS: usize = 4;

impl StanceLabel {
    pub const ALL: [StanceLabel; NUM_LABELS] = [
        StanceLabel::Support,
        StanceLabel::Deny,
        StanceLabel::Query,
        StanceLabel::Comment,
    ];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            StanceLabel::Support => 0,
            StanceLabel::Deny => 1,
            StanceLabel::Query => 2,
            StanceLabel::Comment => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<StanceLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Support => "support",
            StanceLabel::Deny => "deny",
            StanceLabel::Query => "query",
            StanceLabel::Comment => "comment",
        }
    }

    /// Parse a label name. Accepts the canonical nouns and the gerund forms
    /// used in annotation files ("supporting", ...).
    pub fn parse(s: &str) -> Option<StanceLabel> {
        match s {
            "support" | "supporting" => Some(StanceLabel::Support),
            "deny" | "denying" => Some(StanceLabel::Deny),
            "query" | "querying" => Some(StanceLabel::Query),
            "comment" | "commenting" => Some(StanceLabel::Comment),
            _ => None,
        }
    }
}

impl core::fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}
