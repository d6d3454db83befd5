use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentState;
use crate::movement::MovementEvent;
use crate::selection::{Segment, SwitchSchedule};

/// One entry of the event log. Every record carries the frame it refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Alignment {
        t: usize,
        state: AlignmentState,
        frames_used: usize,
        correspondences: Vec<usize>,
    },
    Misalignment {
        t: usize,
        d: Option<f64>,
        smoothed: Option<f64>,
    },
    Movement {
        t: usize,
        event: MovementEvent,
    },
    AreaAgreement {
        t: usize,
        #[serde(rename = "S")]
        s: f64,
    },
    Rehoming {
        t: usize,
        t_c: usize,
    },
    NoRehomingFound {
        t: usize,
        t_c: usize,
    },
    Switch {
        t: usize,
        end: usize,
        camera: usize,
    },
}

impl Record {
    pub fn t(&self) -> usize {
        match self {
            Record::Alignment { t, .. }
            | Record::Misalignment { t, .. }
            | Record::Movement { t, .. }
            | Record::AreaAgreement { t, .. }
            | Record::Rehoming { t, .. }
            | Record::NoRehomingFound { t, .. }
            | Record::Switch { t, .. } => *t,
        }
    }
}

/// Ordered record of what a pipeline run found.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub frames: usize,
    pub records: Vec<Record>,
}

impl EventLog {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    /// Stable sort by frame, keeping insertion order among equal frames.
    pub fn sort(&mut self) {
        self.records.sort_by_key(Record::t);
    }

    pub fn alignment_states(&self) -> Vec<&AlignmentState> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Alignment { state, .. } => Some(state),
                _ => None,
            })
            .collect()
    }

    pub fn movement_events(&self) -> Vec<&MovementEvent> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Movement { event, .. } => Some(event),
                _ => None,
            })
            .collect()
    }

    pub fn rehoming_times(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Rehoming { t, .. } => Some(*t),
                _ => None,
            })
            .collect()
    }

    pub fn schedule(&self) -> SwitchSchedule {
        SwitchSchedule {
            segments: self
                .records
                .iter()
                .filter_map(|r| match r {
                    Record::Switch { t, end, camera } => Some(Segment {
                        start: *t,
                        end: *end,
                        camera: *camera,
                    }),
                    _ => None,
                })
                .collect(),
        }
    }

    /// Frames never decrease, and every movement is answered by a re-homing
    /// (or an explicit failure) before the next movement.
    pub fn check(&self) -> Result<(), String> {
        for w in self.records.windows(2) {
            if w[1].t() < w[0].t() {
                return Err(format!("record at frame {} follows frame {}", w[1].t(), w[0].t()));
            }
        }
        let mut open: Option<usize> = None;
        for r in &self.records {
            match r {
                Record::Movement { t, .. } => {
                    if let Some(prev) = open {
                        return Err(format!("movement at {t} before the one at {prev} was resolved"));
                    }
                    open = Some(*t);
                }
                Record::Rehoming { t_c, .. } | Record::NoRehomingFound { t_c, .. } => {
                    if open != Some(*t_c) {
                        return Err(format!("re-homing for movement {t_c} without a matching movement"));
                    }
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(t) = open {
            return Err(format!("movement at {t} never resolved"));
        }
        let mut last = None;
        for s in self.alignment_states() {
            if last.is_some_and(|l| s.valid_from < l) {
                return Err("alignment valid_from decreased".into());
            }
            last = Some(s.valid_from);
        }
        Ok(())
    }
}
