//! Ground truth for the synthetic suite: how much of a question's evidence an
//! observation carries, and whether a memory holds enough of it to answer.

use std::collections::{BTreeMap, BTreeSet};

use super::{Cell, Observation, Question};
use crate::memory::Memory;

/// Answer returned whenever the memory does not support the true one.
pub const WRONG_ANSWER: &str = "unknown";

/// Heading bucket of 45 degrees, 0..8.
pub fn heading_bucket(heading: f64) -> u8 {
    ((super::normalize_heading(heading) / 45.0).floor() as u8).min(7)
}

/// Two sightings come from distinct viewpoints when their cells or their
/// heading buckets differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Viewpoint {
    pub cell: Cell,
    pub bucket: u8,
}

impl Viewpoint {
    pub fn of(obs: &Observation) -> Self {
        Viewpoint {
            cell: obs.pose.cell(),
            bucket: heading_bucket(obs.pose.heading),
        }
    }
}

/// An entity counts as evidenced when it is visible with its detail readable.
/// Objects always carry their attributes; a person's activity needs proximity.
fn evidences(obs: &Observation, entity: &str) -> bool {
    obs.sighting(entity).is_some_and(|s| s.detail.is_some())
}

/// Fraction of the question's required entities visible in `obs`, whether
/// or not their detail is readable.
pub fn evidence_fraction(obs: &Observation, question: &Question) -> f64 {
    let total = question.required_evidence.len();
    if total == 0 {
        return 0.0;
    }
    let hits = question
        .required_evidence
        .iter()
        .filter(|r| obs.sighting(&r.entity).is_some())
        .count();
    hits as f64 / total as f64
}

/// Distinct viewpoints per required entity across a set of observations.
pub fn sighting_counts<'a>(
    question: &Question,
    observations: impl IntoIterator<Item = &'a Observation>,
) -> BTreeMap<String, usize> {
    let mut views: BTreeMap<String, BTreeSet<Viewpoint>> = question
        .required_evidence
        .iter()
        .map(|r| (r.entity.clone(), BTreeSet::new()))
        .collect();
    for obs in observations {
        for (entity, set) in views.iter_mut() {
            if evidences(obs, entity) {
                set.insert(Viewpoint::of(obs));
            }
        }
    }
    views.into_iter().map(|(k, v)| (k, v.len())).collect()
}

/// Answers from admitted evidence only: correct iff every required entity
/// was seen from at least its required number of distinct viewpoints.
pub fn answer_oracle(question: &Question, memory: &Memory) -> (String, bool) {
    let counts = sighting_counts(question, memory.observations());
    let covered = question
        .required_evidence
        .iter()
        .all(|r| counts.get(&r.entity).copied().unwrap_or(0) >= r.min_viewpoints as usize);
    if covered {
        (question.answer.clone(), true)
    } else {
        (WRONG_ANSWER.to_owned(), question.answer == WRONG_ANSWER)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Category, EvidenceRequirement, Pose, Sighting};

    fn obs(x: i32, y: i32, heading: f64, t: u32, seen: &[(&str, bool)]) -> Observation {
        let pose = Pose::new(Cell::new(x, y), heading, t);
        Observation {
            id: Observation::id_for(&pose),
            pose,
            visible: seen
                .iter()
                .map(|(id, readable)| Sighting {
                    id: id.to_string(),
                    category: "thing".into(),
                    detail: readable.then(|| "color=red".to_string()),
                    cell: Cell::new(0, 0),
                })
                .collect(),
            occluded_ids: vec![],
        }
    }

    fn question(reqs: &[(&str, u32)]) -> Question {
        Question {
            id: "q".into(),
            world_id: "w".into(),
            text: "?".into(),
            category: Category::Attribute,
            answer: "red".into(),
            required_evidence: reqs
                .iter()
                .map(|(e, n)| EvidenceRequirement {
                    entity: e.to_string(),
                    min_viewpoints: *n,
                })
                .collect(),
            target_region: "room".into(),
            choices: None,
            start: None,
        }
    }

    fn memory_of(observations: Vec<Observation>) -> Memory {
        let mut m = Memory::new(4);
        for (i, o) in observations.into_iter().enumerate() {
            m.push_unchecked(i as u64, o, 0.9);
        }
        m
    }

    #[test]
    fn fraction_counts_visible_entities() {
        let q = question(&[("a", 1), ("b", 1)]);
        assert_eq!(evidence_fraction(&obs(1, 1, 0.0, 0, &[("a", true)]), &q), 0.5);
        assert_eq!(evidence_fraction(&obs(1, 1, 0.0, 0, &[("a", true), ("b", false)]), &q), 1.0);
        assert_eq!(evidence_fraction(&obs(1, 1, 0.0, 0, &[("a", true), ("b", true)]), &q), 1.0);
        assert_eq!(evidence_fraction(&obs(1, 1, 0.0, 0, &[]), &q), 0.0);
    }

    #[test]
    fn buckets() {
        assert_eq!(heading_bucket(0.0), 0);
        assert_eq!(heading_bucket(44.9), 0);
        assert_eq!(heading_bucket(45.0), 1);
        assert_eq!(heading_bucket(359.9), 7);
        assert_eq!(heading_bucket(-1.0), 7);
    }

    #[test]
    fn covered_memory_is_correct() {
        let q = question(&[("a", 2)]);
        let m = memory_of(vec![obs(1, 1, 0.0, 0, &[("a", true)]), obs(2, 1, 0.0, 10, &[("a", true)])]);
        assert_eq!(answer_oracle(&q, &m), ("red".to_string(), true));
    }

    #[test]
    fn missing_viewpoint_is_incorrect() {
        let q = question(&[("a", 2), ("b", 1)]);
        let m = memory_of(vec![obs(1, 1, 0.0, 0, &[("a", true), ("b", true)])]);
        assert_eq!(answer_oracle(&q, &m), (WRONG_ANSWER.to_string(), false));
        assert!(!answer_oracle(&q, &Memory::new(4)).1);
    }

    // Same cell, headings 10 and 30 share bucket 0: one viewpoint, not two.
    #[test]
    fn same_cell_same_bucket_is_one_viewpoint() {
        let q = question(&[("a", 2)]);
        let m = memory_of(vec![obs(1, 1, 10.0, 0, &[("a", true)]), obs(1, 1, 30.0, 10, &[("a", true)])]);
        assert!(!answer_oracle(&q, &m).1);
        let m = memory_of(vec![obs(1, 1, 10.0, 0, &[("a", true)]), obs(1, 1, 50.0, 10, &[("a", true)])]);
        assert!(answer_oracle(&q, &m).1);
    }

    #[test]
    fn unreadable_person_does_not_count() {
        let q = question(&[("h", 1), ("a", 1)]);
        let m = memory_of(vec![obs(1, 1, 0.0, 0, &[("h", false), ("a", true)])]);
        assert!(!answer_oracle(&q, &m).1);
    }
}
