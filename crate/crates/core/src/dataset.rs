//! Newline-delimited episode files.
//!
//! Each line is one JSON object:
//!
//! ```text
//! {"id":"ep-0","observations":[[0.0,1.0],[0.5,1.0]],"actions":[[1.0]],"rewards":[0.0,1.0],"terminals":[false,true]}
//! ```
//!
//! `observations` is required; `id`, `actions`, `rewards` and `terminals` are
//! optional. Labeled files carry an extra `source_expert` index. Floats are
//! written in shortest round-trip form, so reading a written file gives back
//! the same bits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeler::LabeledTrajectory;
use crate::measures::Trajectory;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {what} dimension {found} does not match {expected} of earlier episodes")]
    DimensionMismatch {
        line: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite value in {field}")]
    NonFiniteValue { line: usize, field: &'static str },
    #[error("episode {index} has no rewards")]
    RewardsMissing { index: usize },
    #[error("k must be at least 1")]
    InvalidK,
}

impl DatasetError {
    fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Metadata key set when fewer episodes than requested were available.
pub const WARNING_KEY: &str = "warning";

/// Episodes plus free-form string metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodicDataset {
    pub episodes: Vec<Trajectory>,
    pub metadata: BTreeMap<String, String>,
}

impl EpisodicDataset {
    pub fn new(episodes: Vec<Trajectory>) -> Self {
        let mut ds = EpisodicDataset {
            episodes,
            metadata: BTreeMap::new(),
        };
        ds.refresh_metadata();
        ds
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    fn refresh_metadata(&mut self) {
        self.metadata
            .insert("episodes".into(), self.episodes.len().to_string());
        if let Some(first) = self.episodes.first() {
            self.metadata
                .insert("obs_dim".into(), first.obs_dim().to_string());
        }
        if let Some(da) = self.episodes.iter().find_map(Trajectory::action_dim) {
            self.metadata.insert("action_dim".into(), da.to_string());
        }
    }

    pub fn action_dim(&self) -> Option<usize> {
        self.episodes.iter().find_map(Trajectory::action_dim)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    observations: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rewards: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminals: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_expert: Option<usize>,
}

impl EpisodeRecord {
    fn from_trajectory(t: &Trajectory, source_expert: Option<usize>) -> Self {
        EpisodeRecord {
            id: t.id.clone(),
            observations: t.observations.clone(),
            actions: t.actions.clone(),
            rewards: t.rewards.clone(),
            terminals: t.terminals.clone(),
            source_expert,
        }
    }
}

/// One record of a labeled file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub trajectory: Trajectory,
    pub source_expert: Option<usize>,
}

fn all_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> bool {
    values.all(|v| v.is_finite())
}

/// Reads every record, checking each episode and cross-episode dimensions.
pub fn read_records(path: &Path) -> Result<Vec<LabeledRecord>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Vec::new();
    let mut obs_dim = None;
    let mut act_dim = None;
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !all_finite(rec.observations.iter().flatten()) {
            return Err(DatasetError::NonFiniteValue {
                line: line_no,
                field: "observations",
            });
        }
        if !all_finite(rec.actions.iter().flatten().flatten()) {
            return Err(DatasetError::NonFiniteValue {
                line: line_no,
                field: "actions",
            });
        }
        if !all_finite(rec.rewards.iter().flatten()) {
            return Err(DatasetError::NonFiniteValue {
                line: line_no,
                field: "rewards",
            });
        }
        let trajectory = Trajectory {
            id: rec.id,
            observations: rec.observations,
            actions: rec.actions,
            rewards: rec.rewards,
            terminals: rec.terminals,
        };
        trajectory.validate().map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        check_dim(&mut obs_dim, trajectory.obs_dim(), line_no, "observation")?;
        if let Some(da) = trajectory.action_dim() {
            check_dim(&mut act_dim, da, line_no, "action")?;
        }
        out.push(LabeledRecord {
            trajectory,
            source_expert: rec.source_expert,
        });
    }
    Ok(out)
}

fn check_dim(
    seen: &mut Option<usize>,
    found: usize,
    line: usize,
    what: &'static str,
) -> Result<(), DatasetError> {
    match *seen {
        Some(expected) if expected != found => Err(DatasetError::DimensionMismatch {
            line,
            what,
            expected,
            found,
        }),
        _ => {
            *seen = Some(found);
            Ok(())
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<EpisodicDataset, DatasetError> {
    let episodes = read_records(path)?
        .into_iter()
        .map(|r| r.trajectory)
        .collect();
    let mut ds = EpisodicDataset::new(episodes);
    if let Some(stem) = path.file_stem() {
        ds.metadata
            .insert("name".into(), stem.to_string_lossy().into_owned());
    }
    Ok(ds)
}

/// Writes to a temporary file next to `path` and renames it into place, so a
/// failed write never leaves a partial file behind.
pub fn write_atomically(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), DatasetError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| DatasetError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(|e| DatasetError::io(path, e))?;
        w.flush().map_err(|e| DatasetError::io(path, e))?;
    }
    tmp.persist(path)
        .map_err(|e| DatasetError::io(path, e.error))?;
    Ok(())
}

fn write_records<'a>(
    path: &Path,
    records: impl Iterator<Item = EpisodeRecord> + 'a,
) -> Result<(), DatasetError> {
    write_atomically(path, |w| {
        for rec in records {
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_dataset(path: &Path, episodes: &[Trajectory]) -> Result<(), DatasetError> {
    write_records(path, episodes.iter().map(|t| EpisodeRecord::from_trajectory(t, None)))
}

/// Writes labeled episodes with `rewards` set to the final labels and the
/// chosen expert under `source_expert`.
pub fn write_labeled(path: &Path, dataset: &[LabeledTrajectory]) -> Result<(), DatasetError> {
    write_records(
        path,
        dataset
            .iter()
            .map(|l| EpisodeRecord::from_trajectory(&l.to_trajectory(), l.source_expert)),
    )
}

/// The `k` episodes with the largest summed reward, best first. Equal returns
/// keep their original order. Asking for more episodes than exist returns all
/// of them and sets a [`WARNING_KEY`] entry in the metadata.
pub fn select_top_k_experts(
    dataset: &EpisodicDataset,
    k: usize,
) -> Result<EpisodicDataset, DatasetError> {
    if k == 0 {
        return Err(DatasetError::InvalidK);
    }
    let mut ranked = dataset
        .episodes
        .iter()
        .enumerate()
        .map(|(index, e)| {
            e.episodic_return()
                .map(|r| (r, e))
                .ok_or(DatasetError::RewardsMissing { index })
        })
        .collect::<Result<Vec<_>, _>>()?;
    // stable sort: ties stay in input order
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut out = EpisodicDataset::new(ranked.into_iter().take(k).map(|(_, e)| e.clone()).collect());
    if let Some(name) = dataset.metadata.get("name") {
        out.metadata.insert("name".into(), name.clone());
    }
    if k > dataset.len() {
        out.metadata.insert(
            WARNING_KEY.into(),
            format!("requested {k} experts but the dataset has {}", dataset.len()),
        );
    }
    Ok(out)
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub episode_id: String,
    pub ground_truth_return: f64,
    pub otr_return: f64,
    pub source_expert: Option<usize>,
}

pub const DIAGNOSTICS_HEADER: &str = "episode_id,ground_truth_return,otr_return,source_expert";

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<(), DatasetError> {
    write_atomically(path, |w| {
        writeln!(w, "{DIAGNOSTICS_HEADER}")?;
        for r in rows {
            let source = r.source_expert.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{}",
                r.episode_id, r.ground_truth_return, r.otr_return, source
            )?;
        }
        Ok(())
    })
}
