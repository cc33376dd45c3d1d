use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::agentcore::{Action, StateDigest};
use crate::error::Result;
use crate::webenv::{PageId, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    S1,
    S2,
}

/// One step: the state observed, the action taken in it, and who chose it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: u32,
    pub state_digest: StateDigest,
    /// Page of the observed state, kept so goal predicates can be decided
    /// from the trajectory alone.
    pub page: PageId,
    pub action: Action,
    pub system: System,
    pub reasoning_tokens: u64,
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: Task,
    pub records: Vec<Record>,
    pub final_score: Option<u8>,
}

impl Trajectory {
    pub fn new(task: Task) -> Self {
        Trajectory {
            task,
            records: Vec::new(),
            final_score: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// 1 if some valid step satisfied the task's goal.
    pub fn evaluate(&self) -> u8 {
        self.records
            .iter()
            .any(|r| self.task.goal.satisfied_by(r.page, &r.action, r.invalid))
            as u8
    }

    pub fn s2_steps(&self) -> usize {
        self.records.iter().filter(|r| r.system == System::S2).count()
    }

    /// Append another trajectory's records, renumbering their steps.
    pub fn concat(&self, other: &Trajectory) -> Trajectory {
        let mut out = self.clone();
        let base = out.records.len() as u32;
        out.records.extend(other.records.iter().cloned().map(|mut r| {
            r.step += base;
            r
        }));
        out.final_score = None;
        out
    }
}

#[derive(Serialize, Deserialize)]
struct Line<'a> {
    episode: usize,
    task: u32,
    #[serde(flatten)]
    record: std::borrow::Cow<'a, Record>,
}

/// One JSON object per step, tagged with its episode index and task id.
pub fn write_trajectories_jsonl<W: Write>(mut w: W, trajectories: &[Trajectory]) -> Result<()> {
    for (episode, t) in trajectories.iter().enumerate() {
        for r in &t.records {
            let line = Line {
                episode,
                task: t.task.id,
                record: std::borrow::Cow::Borrowed(r),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read step lines back as `(episode, task id, record)`.
pub fn read_trajectories_jsonl<R: BufRead>(r: R) -> Result<Vec<(usize, u32, Record)>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line<'static> = serde_json::from_str(&line)?;
        out.push((l.episode, l.task, l.record.into_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webenv::{ElementId, Goal};

    fn record(step: u32, action: Action, system: System) -> Record {
        Record {
            step,
            state_digest: StateDigest(step as u64),
            page: PageId(0),
            action,
            system,
            reasoning_tokens: if system == System::S2 { 16 } else { 0 },
            invalid: false,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let task = Task {
            id: 4,
            goal: Goal::ReachPage { page: PageId(0) },
            intent: vec![1],
            nominal_steps: 1,
        };
        let mut t = Trajectory::new(task);
        t.records.push(record(0, Action::click(ElementId(2)), System::S2));
        t.records.push(record(1, Action::stop(), System::S1));
        let mut buf = Vec::new();
        write_trajectories_jsonl(&mut buf, std::slice::from_ref(&t)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"system\":\"S2\""));
        let back = read_trajectories_jsonl(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], (0, 4, t.records[1].clone()));
        assert_eq!(t.evaluate(), 1);
    }
}
