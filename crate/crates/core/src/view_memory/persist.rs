//! On-disk layout: `manifest.json` with ordered record metadata and a digest
//! per record, plus `frames/<sha256>` holding the frame bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{frame_hash, ViewError, ViewRecord, ViewStore};

pub const MANIFEST_FILE: &str = "manifest.json";
const FRAMES_DIR: &str = "frames";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    replace_on_sweep: bool,
    stale: bool,
    records: Vec<ManifestRecord>,
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    #[serde(flatten)]
    record: ViewRecord,
    /// SHA-256 over the record's canonical JSON.
    digest: String,
}

fn record_digest(record: &ViewRecord) -> String {
    let json = serde_json::to_vec(record).expect("view records serialize");
    hex::encode(Sha256::digest(json))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ViewError + '_ {
    move |source| ViewError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_store(store: &ViewStore, root: &Path) -> Result<(), ViewError> {
    let frames = root.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames).map_err(io_err(&frames))?;
    for record in &store.records {
        let bytes = store
            .blob(&record.frame_hash)
            .ok_or_else(|| ViewError::MissingFrame(record.frame_id.clone()))?;
        let path = frames.join(&record.frame_hash);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        replace_on_sweep: store.replace_on_sweep,
        stale: store.stale,
        records: store
            .records
            .iter()
            .map(|r| ManifestRecord {
                record: r.clone(),
                digest: record_digest(r),
            })
            .collect(),
    };
    let path = root.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(io_err(&path))
}

pub fn load_store(root: &Path) -> Result<ViewStore, ViewError> {
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest_loc = path.display().to_string();
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|_| ViewError::CorruptRecord(manifest_loc.clone()))?;
    let items = raw
        .get("records")
        .and_then(|r| r.as_array())
        .cloned()
        .ok_or_else(|| ViewError::CorruptRecord(manifest_loc.clone()))?;
    let flag = |key: &str| raw.get(key).and_then(serde_json::Value::as_bool);
    let (Some(replace_on_sweep), Some(stale)) = (flag("replace_on_sweep"), flag("stale")) else {
        return Err(ViewError::CorruptRecord(manifest_loc));
    };
    if raw.get("version").and_then(serde_json::Value::as_u64) != Some(u64::from(FORMAT_VERSION)) {
        return Err(ViewError::CorruptRecord(manifest_loc));
    }

    let mut records = Vec::with_capacity(items.len());
    let mut blobs = BTreeMap::new();
    for (i, item) in items.into_iter().enumerate() {
        let loc = format!("{manifest_loc}#records[{i}]");
        let entry: ManifestRecord = serde_json::from_value(item).map_err(|_| ViewError::CorruptRecord(loc.clone()))?;
        if record_digest(&entry.record) != entry.digest {
            return Err(ViewError::CorruptRecord(loc));
        }
        let record = entry.record;
        if !blobs.contains_key(&record.frame_hash) {
            let blob_path = root.join(FRAMES_DIR).join(&record.frame_hash);
            let bytes = match std::fs::read(&blob_path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(ViewError::MissingFrame(record.frame_id.clone()))
                }
                Err(e) => return Err(io_err(&blob_path)(e)),
            };
            if frame_hash(&bytes) != record.frame_hash {
                return Err(ViewError::CorruptRecord(blob_path.display().to_string()));
            }
            blobs.insert(record.frame_hash.clone(), bytes);
        }
        records.push(record);
    }
    Ok(ViewStore::from_parts(records, blobs, replace_on_sweep, stale))
}
