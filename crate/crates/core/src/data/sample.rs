use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmentation {
    Subsample,
    Trim { first_two: bool, pair_at: Option<usize> },
}

/// One supervised unit: inputs, both traces and the action chunk.
///
/// Observations are stored as full latent pyramids (every scale), so the
/// sequence builder can pick any prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub episode: usize,
    pub start: usize,
    pub state: AgentState,
    pub instruction: Vec<String>,
    /// Front views before `start`, oldest first.
    pub history: Vec<Vec<u16>>,
    /// Left, front and right views at `start`.
    pub current: [Vec<u16>; 3],
    pub stop_count: usize,
    /// Textual trace words (without the think delimiters).
    pub text: Vec<String>,
    /// Front view after the chunk.
    pub visual: Vec<u16>,
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<Augmentation>,
}

impl TrainingSample {
    /// True when the supervised targets and current views match `other`.
    pub fn same_targets(&self, other: &Self) -> bool {
        self.text == other.text
            && self.visual == other.visual
            && self.actions == other.actions
            && self.current == other.current
            && self.instruction == other.instruction
            && self.stop_count == other.stop_count
    }
}
