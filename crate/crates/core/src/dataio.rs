//! On-disk data model: feature files, manifests and per-machine dataset bundles.
//!
//! Binary feature files are laid out as
//!
//! ```text
//! "FEAT" | version: u16 | n_rows: u32 | n_dims: u32 | n_rows*n_dims little-endian f32, row-major
//! ```
//!
//! Features are stored at 32-bit precision and widened to `f64` on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const FEATURE_VERSION: u16 = 1;
/// Size in bytes of the binary feature header.
pub const FEATURE_HEADER_LEN: usize = 4 + 2 + 4 + 4;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    /// Class index used by the probes: normal = 0, anomaly = 1.
    pub fn class_id(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Anomaly => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Binary,
    /// One row per clip, comma separated. `header` skips a leading line.
    Csv { header: bool },
}

impl FeatureFormat {
    /// `.csv` files are CSV without header, everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FeatureFormat::Csv { header: false },
            _ => FeatureFormat::Binary,
        }
    }
}

// ── Feature files ─────────────────────────────────────────────────────

pub fn read_feature_file(path: impl AsRef<Path>, format: FeatureFormat) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = match format {
        FeatureFormat::Binary => decode_binary(&bytes),
        FeatureFormat::Csv { header } => decode_csv(&bytes, header),
    };
    m.map_err(|e| e.context(path.display().to_string()))
}

/// Writes `data`. Nothing is written when the matrix holds a value that is not
/// finite at storage precision.
pub fn write_feature_file(path: impl AsRef<Path>, data: &Matrix, format: FeatureFormat) -> Result<()> {
    let path = path.as_ref();
    check_storable(data)?;
    let bytes = match format {
        FeatureFormat::Binary => encode_binary(data)?,
        FeatureFormat::Csv { header } => encode_csv(data, header),
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn check_storable(data: &Matrix) -> Result<()> {
    if data.rows() == 0 || data.cols() == 0 {
        return Err(Error::Data(format!(
            "cannot store an empty {}x{} matrix",
            data.rows(),
            data.cols()
        )));
    }
    if let Some(pos) = data.as_slice().iter().position(|v| !(*v as f32).is_finite()) {
        return Err(Error::Data(format!(
            "non-finite value at row {}, column {}",
            pos / data.cols(),
            pos % data.cols()
        )));
    }
    Ok(())
}

pub fn encode_binary(data: &Matrix) -> Result<Vec<u8>> {
    check_storable(data)?;
    let rows = u32::try_from(data.rows()).map_err(|_| Error::Data("too many rows".into()))?;
    let cols = u32::try_from(data.cols()).map_err(|_| Error::Data("too many columns".into()))?;
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * data.as_slice().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in data.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes one binary matrix from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_binary_prefix(bytes: &[u8]) -> Result<(Matrix, usize)> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::Format(format!(
            "file too short for header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::Format("bad magic, expected \"FEAT\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("invalid shape {rows}x{cols}")));
    }
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("shape {rows}x{cols} overflows")))?;
    let end = FEATURE_HEADER_LEN + payload;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "payload truncated: header declares {rows}x{cols} ({payload} bytes), found {}",
            bytes.len() - FEATURE_HEADER_LEN
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[FEATURE_HEADER_LEN..end].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
        data.push(f64::from(v));
    }
    Ok((Matrix::from_vec(rows, cols, data)?, end))
}

fn decode_binary(bytes: &[u8]) -> Result<Matrix> {
    let (m, used) = decode_binary_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - used
        )));
    }
    Ok(m)
}

fn encode_csv(data: &Matrix, header: bool) -> Vec<u8> {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (0..data.cols()).map(|j| format!("f{j}")).collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for r in data.iter_rows() {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn decode_csv(bytes: &[u8], header: bool) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("csv record {}: {e}", i + 1)))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!("row {}, column {}: {cell:?} is not a number", i + 1, j + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value at row {}, column {}", i + 1, j + 1)));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    Matrix::from_rows(&rows).map_err(|e| Error::Format(e.to_string()))
}

// ── Feature sets ──────────────────────────────────────────────────────

/// Labeled feature matrix for one machine/section/split group.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub machine: String,
    pub section: u16,
    pub split: Split,
    pub labels: Vec<Label>,
    pub data: Matrix,
}

impl FeatureSet {
    pub fn new(machine: impl Into<String>, section: u16, split: Split, labels: Vec<Label>, data: Matrix) -> Result<Self> {
        let set = Self {
            machine: machine.into(),
            section,
            split,
            labels,
            data,
        };
        set.validate()?;
        Ok(set)
    }

    /// A set whose rows all carry the same label.
    pub fn uniform(machine: impl Into<String>, section: u16, split: Split, label: Label, data: Matrix) -> Result<Self> {
        let labels = vec![label; data.rows()];
        Self::new(machine, section, split, labels, data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.rows() == 0 || self.data.cols() == 0 {
            return Err(Error::Schema(format!(
                "{}/section {}: empty feature matrix",
                self.machine, self.section
            )));
        }
        if self.labels.len() != self.data.rows() {
            return Err(Error::Schema(format!(
                "{}/section {}: {} labels for {} rows",
                self.machine,
                self.section,
                self.labels.len(),
                self.data.rows()
            )));
        }
        if !self.data.is_finite() {
            return Err(Error::Data(format!(
                "{}/section {}: non-finite feature value",
                self.machine, self.section
            )));
        }
        if self.split == Split::Train && self.labels.contains(&Label::Anomaly) {
            return Err(Error::Schema(format!(
                "{}/section {}: training data must contain only normal samples",
                self.machine, self.section
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.data.rows()
    }

    pub fn n_dims(&self) -> usize {
        self.data.cols()
    }
}

// ── Manifest ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub machine: String,
    pub section: u16,
    pub split: Split,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<FeatureFormat>,
}

/// Optional per-machine declaration of which sections must be present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineDecl {
    pub name: String,
    #[serde(default)]
    pub train_sections: Vec<u16>,
    #[serde(default)]
    pub test_sections: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub machines: Vec<MachineDecl>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
            Error::Format(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks entry-level invariants that do not need the files themselves.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Schema(format!("duplicate manifest path {:?}", e.path)));
            }
            if e.split == Split::Train && e.label == Label::Anomaly {
                return Err(Error::Schema(format!(
                    "{:?}: training entries must be labeled normal",
                    e.path
                )));
            }
        }
        Ok(())
    }
}

// ── Bundles ───────────────────────────────────────────────────────────

/// How the test sections of a bundle relate to its training sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRelation {
    /// Every test section also appears in training.
    InDomain,
    /// No test section appears in training.
    OutDomain,
    Mixed,
}

/// All data for one machine type.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub machine: String,
    pub train_sets: Vec<FeatureSet>,
    pub test_sets: Vec<FeatureSet>,
}

/// Pooled view of a bundle's test data; row ids index into `features`.
#[derive(Debug, Clone)]
pub struct TestTable {
    pub features: Matrix,
    pub labels: Vec<Label>,
    pub sections: Vec<u16>,
}

impl DatasetBundle {
    /// Sorts member sets into canonical order and checks bundle invariants.
    pub fn new(machine: impl Into<String>, mut train_sets: Vec<FeatureSet>, mut test_sets: Vec<FeatureSet>) -> Result<Self> {
        let key = |s: &FeatureSet| (s.section, s.labels.first().copied());
        train_sets.sort_by_key(key);
        test_sets.sort_by_key(key);
        let bundle = Self {
            machine: machine.into(),
            train_sets,
            test_sets,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        let mut dims = None;
        for set in self.train_sets.iter().chain(&self.test_sets) {
            set.validate()?;
            if set.machine != self.machine {
                return Err(Error::Schema(format!(
                    "set for machine {:?} inside bundle {:?}",
                    set.machine, self.machine
                )));
            }
            match dims {
                None => dims = Some(set.n_dims()),
                Some(d) if d != set.n_dims() => {
                    return Err(Error::Schema(format!(
                        "{}: feature dimension mismatch ({d} vs {} in section {})",
                        self.machine,
                        set.n_dims(),
                        set.section
                    )))
                }
                _ => {}
            }
        }
        for s in &self.train_sets {
            if s.split != Split::Train {
                return Err(Error::Schema("test set listed among training sets".into()));
            }
        }
        for s in &self.test_sets {
            if s.split != Split::Test {
                return Err(Error::Schema("training set listed among test sets".into()));
            }
        }
        Ok(())
    }

    pub fn n_dims(&self) -> usize {
        self.train_sets
            .iter()
            .chain(&self.test_sets)
            .next()
            .map_or(0, FeatureSet::n_dims)
    }

    pub fn train_sections(&self) -> BTreeSet<u16> {
        self.train_sets.iter().map(|s| s.section).collect()
    }

    pub fn test_sections(&self) -> BTreeSet<u16> {
        self.test_sets.iter().map(|s| s.section).collect()
    }

    pub fn domain_relation(&self) -> DomainRelation {
        let train = self.train_sections();
        let test = self.test_sections();
        if test.is_subset(&train) {
            DomainRelation::InDomain
        } else if test.is_disjoint(&train) {
            DomainRelation::OutDomain
        } else {
            DomainRelation::Mixed
        }
    }

    /// All normal training rows, pooled across sections.
    pub fn train_normals(&self) -> Result<Matrix> {
        Matrix::vstack(self.train_sets.iter().map(|s| &s.data))
            .map_err(|_| Error::Schema(format!("{}: no training data", self.machine)))
    }

    /// Test sets concatenated in canonical (section, label) order.
    pub fn test_table(&self) -> Result<TestTable> {
        let features = Matrix::vstack(self.test_sets.iter().map(|s| &s.data))
            .map_err(|_| Error::Schema(format!("{}: no test data", self.machine)))?;
        let mut labels = Vec::with_capacity(features.rows());
        let mut sections = Vec::with_capacity(features.rows());
        for s in &self.test_sets {
            labels.extend_from_slice(&s.labels);
            sections.extend(std::iter::repeat(s.section).take(s.n_rows()));
        }
        Ok(TestTable {
            features,
            labels,
            sections,
        })
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads every machine listed in the manifest, sorted by machine name.
pub fn load_manifest(manifest_path: impl AsRef<Path>) -> Result<Vec<DatasetBundle>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::read(manifest_path)?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut entries = manifest.entries.clone();
    entries.sort_by(|a, b| {
        (&a.machine, a.split, a.section, a.label, &a.path).cmp(&(&b.machine, b.split, b.section, b.label, &b.path))
    });

    let mut by_machine: BTreeMap<String, (Vec<FeatureSet>, Vec<FeatureSet>)> = BTreeMap::new();
    for e in &entries {
        let path = resolve(base, &e.path);
        let format = e.format.unwrap_or_else(|| FeatureFormat::from_path(&path));
        let data = read_feature_file(&path, format)?;
        let set = FeatureSet::uniform(e.machine.clone(), e.section, e.split, e.label, data)?;
        let slot = by_machine.entry(e.machine.clone()).or_default();
        match e.split {
            Split::Train => slot.0.push(set),
            Split::Test => slot.1.push(set),
        }
    }

    let mut bundles = Vec::with_capacity(by_machine.len());
    for (machine, (train, test)) in by_machine {
        let bundle = DatasetBundle::new(machine, train, test)?;
        check_test_groups(&bundle)?;
        if let Some(decl) = manifest.machines.iter().find(|m| m.name == bundle.machine) {
            check_declared(&bundle, decl)?;
        }
        bundles.push(bundle);
    }
    for decl in &manifest.machines {
        if !bundles.iter().any(|b| b.machine == decl.name) {
            return Err(Error::Schema(format!("declared machine {:?} has no entries", decl.name)));
        }
    }
    Ok(bundles)
}

/// Loads a manifest that describes exactly one machine.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let mut bundles = load_manifest(manifest_path)?;
    match bundles.len() {
        1 => Ok(bundles.pop().unwrap()),
        0 => Err(Error::Schema("manifest has no entries".into())),
        n => Err(Error::Schema(format!("manifest describes {n} machines, expected one"))),
    }
}

fn check_test_groups(bundle: &DatasetBundle) -> Result<()> {
    for section in bundle.test_sections() {
        let labels: BTreeSet<Label> = bundle
            .test_sets
            .iter()
            .filter(|s| s.section == section)
            .flat_map(|s| s.labels.iter().copied())
            .collect();
        if labels.len() != 2 {
            return Err(Error::Schema(format!(
                "{}: test section {section} needs both a normal and an anomaly group",
                bundle.machine
            )));
        }
    }
    Ok(())
}

fn check_declared(bundle: &DatasetBundle, decl: &MachineDecl) -> Result<()> {
    let want_train: BTreeSet<u16> = decl.train_sections.iter().copied().collect();
    let want_test: BTreeSet<u16> = decl.test_sections.iter().copied().collect();
    if !want_train.is_empty() && want_train != bundle.train_sections() {
        return Err(Error::Schema(format!(
            "{}: declared train sections {:?}, found {:?}",
            bundle.machine,
            want_train,
            bundle.train_sections()
        )));
    }
    if !want_test.is_empty() && want_test != bundle.test_sections() {
        return Err(Error::Schema(format!(
            "{}: declared test sections {:?}, found {:?}",
            bundle.machine,
            want_test,
            bundle.test_sections()
        )));
    }
    Ok(())
}

/// Serializes every set of `bundles` as binary feature files, returning the
/// manifest and `(relative path, bytes)` pairs without touching the disk.
pub fn encode_bundles(bundles: &[DatasetBundle]) -> Result<(Manifest, Vec<(String, Vec<u8>)>)> {
    let mut entries = Vec::new();
    let mut machines = Vec::new();
    let mut files = Vec::new();
    for b in bundles {
        let mut counters: BTreeMap<(Split, u16, Label), usize> = BTreeMap::new();
        for set in b.train_sets.iter().chain(&b.test_sets) {
            let label = set.labels[0];
            if set.labels.iter().any(|l| *l != label) {
                return Err(Error::Schema(format!(
                    "{}/section {}: mixed-label sets cannot be written as one manifest entry",
                    b.machine, set.section
                )));
            }
            let n = counters.entry((set.split, set.section, label)).or_default();
            let split = match set.split {
                Split::Train => "train",
                Split::Test => "test",
            };
            let label_s = match label {
                Label::Normal => "normal",
                Label::Anomaly => "anomaly",
            };
            let suffix = if *n == 0 { String::new() } else { format!("_{n}") };
            *n += 1;
            let rel = format!("{}_{split}_s{:02}_{label_s}{suffix}.feat", b.machine, set.section);
            files.push((rel.clone(), encode_binary(&set.data)?));
            entries.push(ManifestEntry {
                path: rel,
                machine: b.machine.clone(),
                section: set.section,
                split: set.split,
                label,
                format: None,
            });
        }
        machines.push(MachineDecl {
            name: b.machine.clone(),
            train_sections: b.train_sections().into_iter().collect(),
            test_sections: b.test_sections().into_iter().collect(),
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        machines,
        entries,
    };
    manifest.validate()?;
    Ok((manifest, files))
}

/// Writes every set of `bundles` under `dir` as binary feature files and
/// returns the manifest describing them (also written to `dir/manifest.json`).
pub fn write_bundles(dir: impl AsRef<Path>, bundles: &[DatasetBundle]) -> Result<Manifest> {
    let dir = dir.as_ref();
    let (manifest, files) = encode_bundles(bundles)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (rel, bytes) in files {
        let path = dir.join(rel);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    manifest.write(dir.join("manifest.json"))?;
    Ok(manifest)
}
