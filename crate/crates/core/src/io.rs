//! JSON Lines persistence for trajectories and execution traces.
//!
//! One record per line. A transition carries `t`, `episode_id`, the flat
//! state fields and `action`; the closing state of an episode is written
//! with `"action": null`.

use crate::state::{Action, EnvState, Trajectory};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
}

/// One `(s, a)` line of a trajectory file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: u64,
    pub episode_id: u64,
    #[serde(flatten)]
    pub state: EnvState,
    pub action: Option<Action>,
}

/// Write episodes to JSON Lines; episode `i` contributes `len+1` lines, the
/// last one with a null action.
pub fn write_trajectories(path: &Path, episodes: &[Trajectory]) -> Result<(), JsonlError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for (episode_id, traj) in episodes.iter().enumerate() {
        for (t, state) in traj.states.iter().enumerate() {
            let rec = TransitionRecord {
                t: t as u64,
                episode_id: episode_id as u64,
                state: state.clone(),
                action: traj.actions.get(t).copied(),
            };
            serde_json::to_writer(&mut w, &rec)
                .map_err(|source| JsonlError::Parse { line: 0, source })?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read episodes back, reconstructing trajectory boundaries from
/// `episode_id` and null actions.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, JsonlError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut episodes: Vec<Trajectory> = Vec::new();
    let mut states: Vec<EnvState> = Vec::new();
    let mut actions: Vec<Action> = Vec::new();
    let mut current_episode: Option<u64> = None;

    let flush =
        |states: &mut Vec<EnvState>, actions: &mut Vec<Action>, line: usize| -> Result<Trajectory, JsonlError> {
            if states.len() != actions.len() + 1 {
                return Err(JsonlError::Schema {
                    line,
                    msg: format!(
                        "episode ended with {} states and {} actions",
                        states.len(),
                        actions.len()
                    ),
                });
            }
            Ok(Trajectory::new(std::mem::take(states), std::mem::take(actions)))
        };

    let mut line_no = 0usize;
    for line in reader.lines() {
        line_no += 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord = serde_json::from_str(&line)
            .map_err(|source| JsonlError::Parse { line: line_no, source })?;
        if current_episode != Some(rec.episode_id) {
            if current_episode.is_some() && !states.is_empty() {
                episodes.push(flush(&mut states, &mut actions, line_no)?);
            }
            current_episode = Some(rec.episode_id);
        }
        states.push(rec.state);
        if let Some(a) = rec.action {
            actions.push(a);
        }
    }
    if !states.is_empty() {
        episodes.push(flush(&mut states, &mut actions, line_no)?);
    }
    Ok(episodes)
}
