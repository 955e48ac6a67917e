//! Recorded sessions on disk:
//!
//! ```text
//! dir/frames/0000.pgm (or .png), 0001.pgm, ...
//! dir/truth.csv       frame,sx,sy
//! dir/poses.csv       frame,wx,wy,wz,tx,ty,tz   (optional)
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{read_poses, read_truth};
use crate::geometry::HeadPose;
use crate::imageio::load_gray;
use crate::imgproc::GrayImage;
use crate::models::ScreenPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    pub index: u64,
    pub path: PathBuf,
    pub image: GrayImage,
    pub truth: ScreenPoint,
    pub pose: Option<HeadPose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<DatasetFrame>,
}

impl Dataset {
    pub fn has_poses(&self) -> bool {
        self.frames.iter().all(|f| f.pose.is_some())
    }
}

fn frame_path(dir: &Path, index: u64) -> Option<PathBuf> {
    ["pgm", "png"]
        .iter()
        .map(|ext| dir.join(format!("{index:04}.{ext}")))
        .find(|p| p.is_file())
}

/// Loads and cross-checks a session. Every truth row needs a frame image;
/// a pose file, when present, must cover the same frames.
pub fn ingest_dataset(dir: &Path) -> Result<Dataset> {
    let truth_path = dir.join("truth.csv");
    let truth = read_truth(&truth_path)?;
    if truth.is_empty() {
        return Err(Error::Ingest {
            path: truth_path,
            line: 1,
            message: "no frames".into(),
        });
    }
    let poses_path = dir.join("poses.csv");
    let poses = if poses_path.exists() {
        let poses = read_poses(&poses_path)?;
        if poses.len() < truth.len() {
            return Err(Error::Ingest {
                path: poses_path,
                line: poses.len() + 1,
                message: format!("{} poses for {} frames", poses.len(), truth.len()),
            });
        }
        if poses[0].0 != truth[0].0 {
            return Err(Error::Ingest {
                path: poses_path,
                line: 2,
                message: format!("poses start at frame {} but truth at frame {}", poses[0].0, truth[0].0),
            });
        }
        Some(poses)
    } else {
        None
    };

    let frames_dir = dir.join("frames");
    let mut frames = Vec::with_capacity(truth.len());
    for (row, &(index, point)) in truth.iter().enumerate() {
        let path = frame_path(&frames_dir, index).ok_or_else(|| Error::Ingest {
            path: truth_path.clone(),
            line: row + 2,
            message: format!("missing image {}/{index:04}.pgm|png", frames_dir.display()),
        })?;
        let image = load_gray(&path).map_err(|e| Error::Ingest {
            path: path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        frames.push(DatasetFrame {
            index,
            path,
            image,
            truth: point,
            pose: poses.as_ref().map(|p| p[row].1),
        });
    }
    Ok(Dataset {
        root: dir.to_path_buf(),
        frames,
    })
}
