//! Readers and writers for the KITTI-style interchange files: velodyne
//! `.bin` scans, odometry pose text, calibration text and per-point
//! `.label` files.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{assign_rings, CameraIntrinsics, Extrinsics, Label, LabeledCloud, LidarGeometry, LidarPoint, PoseSE3};

const SCAN_RECORD: usize = 16;

/// Largest rotation drift a pose or calibration line may carry before it
/// is rejected instead of repaired.
pub const MAX_POSE_DRIFT: f64 = 1e-3;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Decodes little-endian float32 `(x, y, z, intensity)` records. Rings are
/// left at zero.
pub fn decode_scan(bytes: &[u8], frame_id: u32) -> std::result::Result<LabeledCloud, String> {
    if bytes.len() % SCAN_RECORD != 0 {
        return Err(format!("{} bytes is not a multiple of {SCAN_RECORD}", bytes.len()));
    }
    let points = bytes
        .chunks_exact(SCAN_RECORD)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap());
            LidarPoint::new(f(0) as f64, f(1) as f64, f(2) as f64).with_intensity(f(3))
        })
        .collect();
    Ok(LabeledCloud::from_points(frame_id, points))
}

pub fn encode_scan(cloud: &LabeledCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * SCAN_RECORD);
    for p in cloud.points() {
        for v in [p.x as f32, p.y as f32, p.z as f32, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_scan_bin(path: &Path, geom: &LidarGeometry) -> Result<LabeledCloud> {
    let bytes = read(path)?;
    let frame_id = frame_id_from_path(path).unwrap_or(0);
    let cloud = decode_scan(&bytes, frame_id).map_err(|reason| Error::MalformedFile {
        path: path.into(),
        reason,
    })?;
    Ok(assign_rings(cloud, geom))
}

pub fn write_scan_bin(path: &Path, cloud: &LabeledCloud) -> Result<()> {
    write_atomic(path, &encode_scan(cloud))
}

/// Parses the numeric stem of `000042.bin` style names.
pub fn frame_id_from_path(path: &Path) -> Option<u32> {
    path.file_stem()?.to_str()?.parse().ok()
}

fn parse_floats(tokens: &[&str], line: usize) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                reason: format!("not a number: {t:?}"),
            })
        })
        .collect()
}

pub fn parse_poses(text: &str) -> Result<Vec<PoseSE3>> {
    let mut poses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 12 values, found {}", tokens.len()),
            });
        }
        let vals: [f64; 12] = parse_floats(&tokens, line)?.try_into().unwrap();
        let (r, t) = PoseSE3::split_row_major_3x4(&vals);
        let pose = PoseSE3::repaired(r, t, MAX_POSE_DRIFT).map_err(|e| match e {
            Error::InvalidPose(msg) => Error::InvalidPose(format!("line {line}: {msg}")),
            other => other,
        })?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn format_poses(poses: &[PoseSE3]) -> String {
    let mut s = String::new();
    for pose in poses {
        let row: Vec<String> = pose.to_row_major_3x4().iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn load_poses(path: &Path) -> Result<Vec<PoseSE3>> {
    parse_poses(&read_text(path)?)
}

pub fn write_poses(path: &Path, poses: &[PoseSE3]) -> Result<()> {
    write_atomic(path, format_poses(poses).as_bytes())
}

/// Image size used when a calibration file carries no `image_size:` line.
pub const DEFAULT_IMAGE_SIZE: (u32, u32) = (1242, 375);

pub fn parse_calib(text: &str) -> Result<(CameraIntrinsics, Extrinsics)> {
    let mut p_rect = None;
    let mut tr = None;
    let mut size = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let Some((key, rest)) = raw.split_once(':') else {
            continue;
        };
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        match key.trim() {
            "P_rect" | "P2" if p_rect.is_none() || key.trim() == "P_rect" => {
                let v = parse_floats(&tokens, line)?;
                let arr: [f64; 12] = v
                    .try_into()
                    .map_err(|_| Error::CalibFormat(format!("line {line}: P_rect needs 12 values")))?;
                p_rect = Some(arr);
            }
            "Tr_lidar_to_cam" | "Tr_velo_to_cam" if tr.is_none() || key.trim() == "Tr_lidar_to_cam" => {
                let v = parse_floats(&tokens, line)?;
                let arr: [f64; 12] = v
                    .try_into()
                    .map_err(|_| Error::CalibFormat(format!("line {line}: Tr_lidar_to_cam needs 12 values")))?;
                tr = Some(arr);
            }
            "image_size" => {
                let v = parse_floats(&tokens, line)?;
                if v.len() != 2 || v.iter().any(|x| *x <= 0.0 || x.fract() != 0.0) {
                    return Err(Error::CalibFormat(format!("line {line}: image_size needs two positive integers")));
                }
                size = Some((v[0] as u32, v[1] as u32));
            }
            _ => {}
        }
    }
    let p = p_rect.ok_or_else(|| Error::CalibFormat("missing key P_rect".into()))?;
    let tr = tr.ok_or_else(|| Error::CalibFormat("missing key Tr_lidar_to_cam".into()))?;
    let (width, height) = size.unwrap_or(DEFAULT_IMAGE_SIZE);
    let fu = p[0];
    let intr = CameraIntrinsics {
        fu,
        fv: p[5],
        cu: p[2],
        cv: p[6],
        bx: -p[3] / fu,
        width,
        height,
    };
    intr.validate()?;
    let (r, t) = PoseSE3::split_row_major_3x4(&tr);
    let pose = PoseSE3::repaired(r, t, MAX_POSE_DRIFT).map_err(|e| Error::InvalidCalib(e.to_string()))?;
    Ok((intr, Extrinsics { lidar_to_camera: pose }))
}

pub fn format_calib(intr: &CameraIntrinsics, extr: &Extrinsics) -> String {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    format!(
        "P_rect: {}\nTr_lidar_to_cam: {}\nimage_size: {} {}\n",
        fmt(&intr.p_rect()),
        fmt(&extr.lidar_to_camera.to_row_major_3x4()),
        intr.width,
        intr.height
    )
}

pub fn load_calib(path: &Path) -> Result<(CameraIntrinsics, Extrinsics)> {
    parse_calib(&read_text(path)?)
}

pub fn write_calib(path: &Path, intr: &CameraIntrinsics, extr: &Extrinsics) -> Result<()> {
    write_atomic(path, format_calib(intr, extr).as_bytes())
}

/// One little-endian `u32` per point.
pub fn encode_labels(ids: &[u32]) -> Vec<u8> {
    ids.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_labels(bytes: &[u8]) -> std::result::Result<Vec<u32>, String> {
    if bytes.len() % 4 != 0 {
        return Err(format!("{} bytes is not a multiple of 4", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_label_file(path: &Path, ids: &[u32]) -> Result<()> {
    write_atomic(path, &encode_labels(ids))
}

pub fn read_label_file(path: &Path) -> Result<Vec<u32>> {
    decode_labels(&read(path)?).map_err(|reason| Error::MalformedFile {
        path: path.into(),
        reason,
    })
}

/// Plain point list in the scan layout, with the class id stored in the
/// intensity slot. Used for curb point sets.
pub fn write_point_set(path: &Path, cloud: &LabeledCloud) -> Result<()> {
    let mut c = cloud.clone();
    let labels: Vec<_> = c.labels().to_vec();
    for (p, l) in c.points_mut().iter_mut().zip(labels) {
        p.intensity = l.id() as f32;
    }
    write_scan_bin(path, &c)
}

pub fn read_point_set(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let bytes = read(path)?;
    let cloud = decode_scan(&bytes, 0).map_err(|reason| Error::MalformedFile {
        path: path.into(),
        reason,
    })?;
    Ok(cloud.positions())
}

/// As [`read_point_set`], recovering the class stored in the intensity
/// slot.
pub fn read_labeled_point_set(path: &Path) -> Result<LabeledCloud> {
    let bytes = read(path)?;
    let cloud = decode_scan(&bytes, frame_id_from_path(path).unwrap_or(0)).map_err(|reason| Error::MalformedFile {
        path: path.into(),
        reason,
    })?;
    let labels = cloud
        .points()
        .iter()
        .map(|p| {
            let id = p.intensity;
            (id >= 0.0 && id.fract() == 0.0)
                .then(|| Label::from_id(id as u8))
                .flatten()
                .ok_or_else(|| Error::MalformedFile {
                    path: path.into(),
                    reason: format!("bad class id {id}"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let (frame_id, points, _) = cloud.into_parts();
    LabeledCloud::from_parts(frame_id, points, labels)
}

/// Per-point class ids of a labeled cloud as a `.label` file.
pub fn write_cloud_labels(path: &Path, cloud: &LabeledCloud) -> Result<()> {
    let ids: Vec<u32> = cloud.labels().iter().map(|l| l.id() as u32).collect();
    write_label_file(path, &ids)
}

/// Reads a `.label` file of class ids written by [`write_cloud_labels`].
pub fn read_cloud_labels(path: &Path) -> Result<Vec<Label>> {
    read_label_file(path)?
        .into_iter()
        .map(|id| {
            u8::try_from(id).ok().and_then(Label::from_id).ok_or_else(|| Error::MalformedFile {
                path: path.into(),
                reason: format!("bad class id {id}"),
            })
        })
        .collect()
}
