//! Local object store standing in for the public initial-condition archive.
//!
//! Objects live at `<root>/<cycle ISO-8601 basic>/<variable>.grid`, each a
//! self-describing [`GridBlob`].

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use super::blob::GridBlob;
use super::{FetchRequest, IngestError};
use crate::cycle::iso8601_basic;
use crate::grid::{ForecastTensor, VariableId};

#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
}

impl FixtureStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn object_path(&self, cycle: DateTime<Utc>, variable: &str) -> PathBuf {
        object_path(&self.root, cycle, variable)
    }

    pub fn put(&self, blob: &GridBlob) -> io::Result<()> {
        let path = self.object_path(blob.cycle_time, blob.variable.as_str());
        fs::create_dir_all(path.parent().expect("object has a cycle directory"))?;
        let tmp = path.with_extension("grid.tmp");
        fs::write(&tmp, blob.encode())?;
        fs::rename(tmp, path)
    }

    pub fn get(&self, cycle: DateTime<Utc>, variable: &str) -> Result<GridBlob, IngestError> {
        read_object(&self.root, cycle, variable)
    }

    /// Write every variable of a lead-0 state as one object per variable.
    pub fn put_state(&self, state: &ForecastTensor, grid: crate::grid::GridSpec) -> io::Result<()> {
        let cycle = state.coords().time()[0];
        for (v, id) in state.coords().variables().iter().enumerate() {
            self.put(&GridBlob {
                grid,
                variable: id.clone(),
                cycle_time: cycle,
                values: state.field(0, 0, 0, v).to_vec(),
            })?;
        }
        Ok(())
    }

    /// Request for `variables` at `cycle` rooted at this store.
    pub fn request(&self, cycle: DateTime<Utc>, variables: Vec<VariableId>) -> FetchRequest {
        FetchRequest::new(cycle, variables, self.root.clone())
    }
}

pub(crate) fn object_path(root: &Path, cycle: DateTime<Utc>, variable: &str) -> PathBuf {
    root.join(iso8601_basic(cycle)).join(format!("{variable}.grid"))
}

pub(crate) fn read_object(root: &Path, cycle: DateTime<Utc>, variable: &str) -> Result<GridBlob, IngestError> {
    let path = object_path(root, cycle, variable);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(IngestError::MissingVariable { cycle, variable: variable.to_owned() })
        }
        Err(e) => return Err(IngestError::Data(format!("{}: {e}", path.display()))),
    };
    let blob = GridBlob::decode(&bytes).map_err(|e| IngestError::Data(format!("{}: {e}", path.display())))?;
    if blob.cycle_time != cycle || blob.variable.as_str() != variable {
        return Err(IngestError::Data(format!(
            "{} describes {} at {}",
            path.display(),
            blob.variable,
            blob.cycle_time
        )));
    }
    Ok(blob)
}
