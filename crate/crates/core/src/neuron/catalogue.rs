//! Versioned model catalogue shipped with the crate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::rates::GatingKinetics;
use super::{ConductanceModel, IonicCurrent, NeuronParams};
use crate::error::{Error, Result};

/// The catalogue compiled into the library.
pub const BUILTIN_CATALOGUE: &str = include_str!("../../catalogue/models.toml");

const SUPPORTED_VERSION: &str = "1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogueFile {
    version: String,
    currents: BTreeMap<String, CurrentEntry>,
    cells: BTreeMap<String, CellEntry>,
    models: BTreeMap<String, ModelEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurrentEntry {
    g: f64,
    v_rev: f64,
    m_exponent: u32,
    n_exponent: u32,
    m_gate: Option<GatingKinetics>,
    n_gate: Option<GatingKinetics>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellEntry {
    capacitance: f64,
    g_leak: f64,
    v_leak: f64,
    currents: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    cells: Vec<String>,
    coupling_siemens: Vec<Vec<f64>>,
}

/// Parsed catalogue: named models assembled from shared cell and current
/// definitions.
#[derive(Debug)]
pub struct Catalogue {
    file: CatalogueFile,
}

impl Catalogue {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CATALOGUE).expect("built-in model catalogue is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: CatalogueFile =
            toml::from_str(text).map_err(|e| Error::Catalogue(e.to_string()))?;
        if file.version != SUPPORTED_VERSION {
            return Err(Error::Catalogue(format!(
                "unsupported catalogue version {:?}",
                file.version
            )));
        }
        Ok(Self { file })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn model_names(&self) -> impl Iterator<Item = &str> {
        self.file.models.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str) -> Result<ConductanceModel> {
        let entry = self
            .file
            .models
            .get(name)
            .ok_or_else(|| Error::Catalogue(format!("no model named {name:?}")))?;
        let neurons = entry
            .cells
            .iter()
            .map(|cell| self.neuron(cell))
            .collect::<Result<Vec<_>>>()?;
        // S -> mS
        let coupling = entry
            .coupling_siemens
            .iter()
            .map(|row| row.iter().map(|e| e * 1e3).collect())
            .collect();
        ConductanceModel::new(name, neurons, coupling)
    }

    fn neuron(&self, cell: &str) -> Result<NeuronParams> {
        let entry = self
            .file
            .cells
            .get(cell)
            .ok_or_else(|| Error::Catalogue(format!("no cell named {cell:?}")))?;
        let currents = entry
            .currents
            .iter()
            .map(|name| self.current(name))
            .collect::<Result<Vec<_>>>()?;
        Ok(NeuronParams {
            capacitance: entry.capacitance,
            g_leak: entry.g_leak,
            v_leak: entry.v_leak,
            currents,
        })
    }

    fn current(&self, name: &str) -> Result<IonicCurrent> {
        let c = self
            .file
            .currents
            .get(name)
            .ok_or_else(|| Error::Catalogue(format!("no current named {name:?}")))?;
        Ok(IonicCurrent {
            name: name.to_string(),
            g: c.g,
            v_rev: c.v_rev,
            m_exponent: c.m_exponent,
            n_exponent: c.n_exponent,
            m_gate: c.m_gate,
            n_gate: c.n_gate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lists_both_models() {
        let cat = Catalogue::builtin();
        let names: Vec<_> = cat.model_names().collect();
        assert_eq!(names, ["ffpair", "fs"]);
    }

    #[test]
    fn missing_key_fails_loudly() {
        let broken = BUILTIN_CATALOGUE.replace("g_leak = 0.015\n", "");
        let err = Catalogue::parse(&broken).unwrap_err();
        assert!(err.to_string().contains("g_leak"), "{err}");
    }

    #[test]
    fn unknown_model_is_an_error() {
        assert!(Catalogue::builtin().build("pyramidal").is_err());
    }

    #[test]
    fn exponent_without_kinetics_is_rejected() {
        let broken = BUILTIN_CATALOGUE.replace(
            "n_gate.alpha = { form = \"linexp\", rate = 0.1, v_half = -55.0, slope = -10.0 }\n\
             n_gate.beta = { form = \"exp\", rate = 0.125, v_half = -65.0, slope = -80.0 }\n",
            "",
        );
        assert_ne!(broken, BUILTIN_CATALOGUE);
        let err = Catalogue::parse(&broken).unwrap().build("fs").unwrap_err();
        assert!(err.to_string().contains("kdr"), "{err}");
    }
}
