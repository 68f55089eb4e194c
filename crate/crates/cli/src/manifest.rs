//! Line-delimited dataset manifests.
//!
//! Each non-blank line is one JSON record. Paths are relative to the
//! manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use handsynth_core::compose::CompositionMode;
use handsynth_core::diffmath::rotation::{apply3, rodrigues};
use handsynth_core::occlusion::Camera;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MaskPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<String>,
}

/// Intrinsics plus an optional world-to-camera motion `p_c = R(rotation)·p_w + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub rotation: [f64; 3],
    #[serde(default)]
    pub translation: [f64; 3],
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Camera {
        Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }

    pub fn to_camera_frame(&self, p: [f64; 3]) -> [f64; 3] {
        let r = apply3(&rodrigues(self.rotation), p);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Record {
    pub id: String,
    /// Single image, for augmentation and spectrum analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syn: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<String>,
    #[serde(default)]
    pub masks: MaskPaths,
    /// Target mesh and joints (world frame).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CompositionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Record {
    /// Every referenced file, labelled by field.
    pub fn paths(&self) -> Vec<(&'static str, &str)> {
        let fields = [
            ("image", &self.image),
            ("syn", &self.syn),
            ("real", &self.real),
            ("masks.object", &self.masks.object),
            ("masks.arm", &self.masks.arm),
            ("masks.hand", &self.masks.hand),
            ("pose", &self.pose),
        ];
        fields
            .into_iter()
            .filter_map(|(name, v)| v.as_deref().map(|p| (name, p)))
            .collect()
    }

    pub fn has(&self, field: Field) -> bool {
        match field {
            Field::Image => self.image.is_some(),
            Field::Syn => self.syn.is_some(),
            Field::Real => self.real.is_some(),
            Field::ObjectMask => self.masks.object.is_some(),
            Field::ArmMask => self.masks.arm.is_some(),
            Field::Pose => self.pose.is_some(),
            Field::Camera => self.camera.is_some(),
        }
    }
}

/// Fields a subcommand can demand of every record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Image,
    Syn,
    Real,
    ObjectMask,
    ArmMask,
    Pose,
    Camera,
}

impl Field {
    fn name(self) -> &'static str {
        match self {
            Field::Image => "image",
            Field::Syn => "syn",
            Field::Real => "real",
            Field::ObjectMask => "masks.object",
            Field::ArmMask => "masks.arm",
            Field::Pose => "pose",
            Field::Camera => "camera",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub records: Vec<Record>,
}

impl Manifest {
    fn base(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base().join(relative)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub manifest: String,
    /// Records visited, each exactly once.
    pub records_checked: usize,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parses and checks a manifest: record schema, unique ids, required fields
/// and existence of every referenced file. All violations are collected.
pub fn validate_manifest(path: &Path, required: &[Field]) -> anyhow::Result<(Option<Manifest>, ValidationReport)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut report = ValidationReport {
        manifest: path.display().to_string(),
        ..Default::default()
    };
    let manifest_stub = Manifest {
        path: path.to_path_buf(),
        records: Vec::new(),
    };
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.records_checked += 1;
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                report.violations.push(format!("line {}: {e}", lineno + 1));
                continue;
            }
        };
        if record.id.is_empty() {
            report.violations.push(format!("line {}: empty id", lineno + 1));
        } else if !ids.insert(record.id.clone()) {
            report
                .violations
                .push(format!("line {}: duplicate id {:?}", lineno + 1, record.id));
        }
        for field in required {
            if !record.has(*field) {
                report
                    .violations
                    .push(format!("record {:?}: missing {}", record.id, field.name()));
            }
        }
        for (field, rel) in record.paths() {
            let full = manifest_stub.resolve(rel);
            if !full.is_file() {
                report.violations.push(format!(
                    "record {:?}: {field} file {} does not exist",
                    record.id,
                    full.display()
                ));
            }
        }
        records.push(record);
    }
    if report.records_checked == 0 {
        report.warnings.push("manifest is valid but empty".into());
    }
    let manifest = report.is_valid().then(|| Manifest {
        path: path.to_path_buf(),
        records,
    });
    Ok((manifest, report))
}

/// [`validate_manifest`] that fails with every violation listed.
pub fn load_manifest(path: &Path, required: &[Field]) -> anyhow::Result<Manifest> {
    let (manifest, report) = validate_manifest(path, required)?;
    match manifest {
        Some(m) => Ok(m),
        None => bail!(
            "manifest {} is invalid:\n  {}",
            path.display(),
            report.violations.join("\n  ")
        ),
    }
}
