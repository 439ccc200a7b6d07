use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use mcloc::geometry::{CameraRig, RigRecord};
use mcloc::map::{load_map, GlobalMap};
use mcloc::matcher::{read_frames, QueryFrame};

use crate::{config_err, runtime_err, CliError};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Writes through a buffered file, creating parent directories.
pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))?;
    }
    let file = File::create(path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    write_file(path, |w| writeln!(w, "{text}"))
}

pub(crate) fn read_rig(path: &Path) -> Result<CameraRig, CliError> {
    let record: RigRecord = read_json(path)?;
    CameraRig::from_record(&record).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub(crate) fn read_map(path: &Path) -> Result<GlobalMap, CliError> {
    load_map(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub(crate) fn read_queries(path: &Path) -> Result<Vec<QueryFrame>, CliError> {
    read_frames(open(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Reads one JSON value per non-empty line.
pub(crate) fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| config_err(format!("{}: line {}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}
