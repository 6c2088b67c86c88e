use std::collections::HashMap;

use serde::Deserialize;

use super::ServeError;

const BUNDLED: &str = include_str!("../../data/gazetteer.json");

#[derive(Debug, Clone, Deserialize)]
struct Entry {
    name: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    aliases: Vec<String>,
}

/// Place-name table. Keys are trimmed and lower-cased; canonical names win
/// over aliases.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    names: HashMap<String, usize>,
    aliases: HashMap<String, usize>,
    entries: Vec<Entry>,
}

fn key(name: &str) -> String {
    name.trim().to_lowercase()
}

impl Gazetteer {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled gazetteer is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let entries: Vec<Entry> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut names = HashMap::new();
        let mut aliases = HashMap::new();
        for (k, e) in entries.iter().enumerate() {
            if !(-90.0..=90.0).contains(&e.lat) || !e.lon.is_finite() {
                return Err(format!("{}: invalid coordinates ({}, {})", e.name, e.lat, e.lon));
            }
            if names.insert(key(&e.name), k).is_some() {
                return Err(format!("duplicate place {}", e.name));
            }
            for a in &e.aliases {
                aliases.entry(key(a)).or_insert(k);
            }
        }
        Ok(Self { names, aliases, entries })
    }

    pub fn lookup(&self, name: &str) -> Option<(f64, f64)> {
        let k = key(name);
        let i = self.names.get(&k).or_else(|| self.aliases.get(&k))?;
        let e = &self.entries[*i];
        Some((e.lat, e.lon))
    }

    /// Canonical spelling of the place `name` resolves to.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        let k = key(name);
        let i = self.names.get(&k).or_else(|| self.aliases.get(&k))?;
        Some(&self.entries[*i].name)
    }

    /// Canonical names in table order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn geocode(name: &str, gz: &Gazetteer) -> Result<(f64, f64), ServeError> {
    gz.lookup(name).ok_or_else(|| ServeError::GeocodeMiss(name.to_owned()))
}
