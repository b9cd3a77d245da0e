//! The 19-channel 10-20 target montage and the electrode coordinate table.

use std::path::Path;

use crate::error::{config, data, LeadError, Result};

/// Alignment targets in output order.
pub const STANDARD_19: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz",
    "P4", "T6", "O1", "O2",
];

/// Modern 10-10 names for the four renamed temporal/parietal sites.
pub const ALIASES: [(&str, &str); 4] = [("T7", "T3"), ("T8", "T4"), ("P7", "T5"), ("P8", "T6")];

const BUILTIN: &str = include_str!("../../resources/montage_1020.txt");
const HEADER: &str = "# lead-montage v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Electrode {
    pub name: String,
    pub pos: [f64; 3],
}

/// Coordinate table plus the ordered 19 alignment targets drawn from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    targets: Vec<Electrode>,
    table: Vec<Electrode>,
}

/// Lower-cased name with the 10-10 aliases folded onto their 10-20 names.
pub fn canonical_name(name: &str) -> String {
    let trimmed = name.trim();
    for (modern, classic) in ALIASES {
        if trimmed.eq_ignore_ascii_case(modern) {
            return classic.to_ascii_lowercase();
        }
    }
    trimmed.to_ascii_lowercase()
}

impl Montage {
    /// The bundled idealized spherical layout.
    pub fn standard() -> Self {
        Self::parse(BUILTIN).expect("bundled montage resource is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LeadError::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    /// Parse `name x y z` lines. The first line must be the version header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == HEADER => {}
            other => {
                return Err(LeadError::Format(format!(
                    "montage must start with '{HEADER}', found {other:?}"
                )))
            }
        }
        let mut table: Vec<Electrode> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(LeadError::Format(format!(
                    "montage line {}: expected 'name x y z', got '{line}'",
                    lineno + 2
                )));
            }
            let mut pos = [0.0f64; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                pos[k] = f.parse().map_err(|_| {
                    LeadError::Format(format!("montage line {}: bad number '{f}'", lineno + 2))
                })?;
            }
            let norm = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(data(format!(
                    "montage entry {} is not on the unit sphere (|r| = {norm})",
                    fields[0]
                )));
            }
            let key = canonical_name(fields[0]);
            if table.iter().any(|e| canonical_name(&e.name) == key) {
                return Err(data(format!("montage entry {} is duplicated", fields[0])));
            }
            table.push(Electrode {
                name: fields[0].to_string(),
                pos,
            });
        }
        let mut targets = Vec::with_capacity(STANDARD_19.len());
        for name in STANDARD_19 {
            let key = canonical_name(name);
            let e = table
                .iter()
                .find(|e| canonical_name(&e.name) == key)
                .ok_or_else(|| config(format!("montage is missing target channel {name}")))?;
            targets.push(Electrode {
                name: name.to_string(),
                pos: e.pos,
            });
        }
        Ok(Montage { targets, table })
    }

    pub fn targets(&self) -> &[Electrode] {
        &self.targets
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|e| e.name.clone()).collect()
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.table
    }

    /// Alias-aware, case-insensitive coordinate lookup.
    pub fn position(&self, name: &str) -> Option<[f64; 3]> {
        let key = canonical_name(name);
        self.table
            .iter()
            .find(|e| canonical_name(&e.name) == key)
            .map(|e| e.pos)
    }

    /// Coordinates for every name, failing on the first unknown channel.
    pub fn positions(&self, names: &[String]) -> Result<Vec<[f64; 3]>> {
        names
            .iter()
            .map(|n| {
                self.position(n).ok_or_else(|| {
                    data(format!(
                        "channel '{n}' has no coordinates in the montage table; add a '{n} x y z' line"
                    ))
                })
            })
            .collect()
    }
}
