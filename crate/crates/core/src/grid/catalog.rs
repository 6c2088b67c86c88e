//! The 75-variable atmospheric catalog consumed by the forecast model.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GridError;

/// Standard 13-level operational pressure set, millibars, ascending.
pub const PRESSURE_LEVELS: [u32; 13] = [50, 100, 150, 200, 250, 300, 400, 500, 600, 700, 850, 925, 1000];

const SURFACE: [(&str, &str); 8] = [
    ("u10m", "m s-1"),
    ("v10m", "m s-1"),
    ("u100m", "m s-1"),
    ("v100m", "m s-1"),
    ("t2m", "K"),
    ("sp", "Pa"),
    ("msl", "Pa"),
    ("tcwv", "mm"),
];

const PRESSURE: [(&str, &str); 5] = [
    ("u", "m s-1"),
    ("v", "m s-1"),
    ("z", "m2 s-2"),
    ("t", "K"),
    ("q", "kg kg-1"),
];

const OCEAN_PRECIP: [(&str, &str); 2] = [("sst", "K"), ("tp", "mm")];

/// Short variable name such as `t2m` or `z500`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableId(String);

impl VariableId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VariableId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    Surface,
    PressureLevel,
    OceanPrecip,
}

impl VariableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Surface => "surface",
            VariableKind::PressureLevel => "pressure-level",
            VariableKind::OceanPrecip => "ocean-precip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableEntry {
    pub id: VariableId,
    pub kind: VariableKind,
    /// Pressure level in millibars, for pressure-level variables only.
    pub level: Option<u32>,
    pub units: &'static str,
    /// Base quantity (`z` for `z500`, the id itself otherwise).
    pub quantity: &'static str,
}

/// Ordered variable catalog with total name lookup.
#[derive(Debug, Clone)]
pub struct VariableCatalog {
    entries: Vec<VariableEntry>,
    by_name: HashMap<String, usize>,
}

/// The canonical 75-entry catalog: surface, then pressure-level grouped by
/// quantity with ascending level, then `sst`, `tp`.
pub fn build_catalog() -> VariableCatalog {
    VariableCatalog::with_pressure_levels(&PRESSURE_LEVELS).expect("standard levels are valid")
}

impl VariableCatalog {
    /// Catalog over a custom pressure-level set. Levels must be strictly ascending.
    pub fn with_pressure_levels(levels: &[u32]) -> Result<Self, GridError> {
        if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GridError::InvalidCatalog(format!(
                "pressure levels must be non-empty and strictly ascending, got {levels:?}"
            )));
        }
        let mut entries = Vec::with_capacity(SURFACE.len() + PRESSURE.len() * levels.len() + 2);
        for (name, units) in SURFACE {
            entries.push(VariableEntry {
                id: VariableId::from(name),
                kind: VariableKind::Surface,
                level: None,
                units,
                quantity: name,
            });
        }
        for (quantity, units) in PRESSURE {
            for &level in levels {
                entries.push(VariableEntry {
                    id: VariableId::new(format!("{quantity}{level}")),
                    kind: VariableKind::PressureLevel,
                    level: Some(level),
                    units,
                    quantity,
                });
            }
        }
        for (name, units) in OCEAN_PRECIP {
            entries.push(VariableEntry {
                id: VariableId::from(name),
                kind: VariableKind::OceanPrecip,
                level: None,
                units,
                quantity: name,
            });
        }
        let mut by_name = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if by_name.insert(e.id.as_str().to_owned(), i).is_some() {
                return Err(GridError::InvalidCatalog(format!("duplicate variable {}", e.id)));
            }
        }
        Ok(Self { entries, by_name })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VariableEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &VariableId> {
        self.entries.iter().map(|e| &e.id)
    }

    pub fn get(&self, name: &str) -> Option<&VariableEntry> {
        self.index_of(name).map(|i| &self.entries[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn count_kind(&self, kind: VariableKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    /// Plain-text table (name, kind, level, units) for documentation.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:<15} {:>6}  {}\n", "name", "kind", "level", "units");
        for e in &self.entries {
            let level = e.level.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<8} {:<15} {:>6}  {}\n",
                e.id.as_str(),
                e.kind.as_str(),
                level,
                e.units
            ));
        }
        out
    }
}
