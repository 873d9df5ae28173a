//! Run configuration, read from TOML.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::BasisKind;
use crate::error::{Error, Result};
use crate::greens::SourceKind;
use crate::medium::{DecompositionSettings, IndexGroup};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub point: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: OutputFormat,
    /// Optional debug dumps.
    pub mesh_dump: Option<String>,
    pub system_dump: Option<String>,
}

/// `"nyquist"` or an explicit mode count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtnTruncation {
    Modes(usize),
    #[default]
    #[serde(with = "nyquist")]
    Nyquist,
}

mod nyquist {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("nyquist")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "nyquist" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"nyquist\" or a count, got \"{s}\"")))
        }
    }
}

impl DtnTruncation {
    pub fn resolve(&self) -> Option<usize> {
        match self {
            DtnTruncation::Modes(l) => Some(*l),
            DtnTruncation::Nyquist => None,
        }
    }
}

/// Fine solve used as the reference for the incident-field examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(rename = "N")]
    pub copies: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: f64,
    pub period: f64,
    pub h0: f64,
    pub h1: f64,
    pub height: f64,
    #[serde(rename = "N")]
    pub copies: usize,
    pub h: f64,
    pub index_group: String,
    pub source: SourceConfig,
    /// Fourier band of the lower layer, default 8N.
    pub band: Option<usize>,
    /// Samples in x₁ over the supercell (default 1000N) and in x₂.
    pub samples_x1: Option<usize>,
    pub samples_x2: usize,
    pub dtn_truncation: DtnTruncation,
    pub basis: BasisKind,
    pub solver: SolverConfig,
    /// Lattice-sum cap for the Bloch transform of `n1 G`.
    pub jmax: usize,
    pub reference: Option<ReferenceConfig>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 1.0,
            period: 2.0 * PI,
            h0: 1.0,
            h1: 2.0,
            height: 3.0,
            copies: 10,
            h: 0.16,
            index_group: "group1".into(),
            source: SourceConfig {
                kind: SourceKind::Volume,
                point: [0.5, 0.4],
            },
            band: None,
            samples_x1: None,
            samples_x2: 1000,
            dtn_truncation: DtnTruncation::Nyquist,
            basis: BasisKind::Modulated,
            solver: SolverConfig::default(),
            jmax: 200,
            reference: None,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.k > 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.period > 0.0) {
            return bad(format!("period must be positive, got {}", self.period));
        }
        if !(self.h0 < self.h1 && self.h1 < self.height) {
            return bad(format!(
                "need h0 < H1 < H, got {} {} {}",
                self.h0, self.h1, self.height
            ));
        }
        if self.copies < 1 {
            return bad("N must be at least 1".into());
        }
        if !(self.h > 0.0) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        IndexGroup::from_name(&self.index_group).map_err(|e| Error::Config(e.to_string()))?;
        let y2 = self.source.point[1];
        match self.source.kind {
            SourceKind::Volume if !(y2 > 0.0 && y2 < self.h0) => {
                return bad(format!("volume source needs 0 < y2 < h0, got {y2}"));
            }
            SourceKind::Incident if !(y2 > self.height) => {
                return bad(format!("incident source needs y2 > H, got {y2}"));
            }
            _ => {}
        }
        if let Some(r) = self.reference {
            if r.copies < 1 || !(r.h > 0.0) {
                return bad("reference needs N >= 1 and h > 0".into());
            }
        }
        if self.jmax == 0 {
            return bad("jmax must be at least 1".into());
        }
        Ok(())
    }

    pub fn group(&self) -> Result<IndexGroup> {
        IndexGroup::from_name(&self.index_group)
    }

    pub fn decomposition(&self) -> DecompositionSettings {
        let d = DecompositionSettings::default_for(self.copies);
        DecompositionSettings {
            samples_x1: self.samples_x1.unwrap_or(d.samples_x1),
            samples_x2: self.samples_x2,
            band: self.band.unwrap_or(d.band),
        }
    }

    /// One `key=value` pair per line, for result headers.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("k".into(), self.k.to_string()),
            ("period".into(), self.period.to_string()),
            ("h0".into(), self.h0.to_string()),
            ("H1".into(), self.h1.to_string()),
            ("H".into(), self.height.to_string()),
            ("N".into(), self.copies.to_string()),
            ("h".into(), self.h.to_string()),
            ("index_group".into(), self.index_group.clone()),
            (
                "source".into(),
                format!(
                    "{:?}@({},{})",
                    self.source.kind, self.source.point[0], self.source.point[1]
                )
                .to_lowercase(),
            ),
        ];
        let d = self.decomposition();
        out.push(("band".into(), d.band.to_string()));
        out.push(("samples".into(), format!("{}x{}", d.samples_x1, d.samples_x2)));
        out.push((
            "dtn_truncation".into(),
            match self.dtn_truncation {
                DtnTruncation::Nyquist => "nyquist".into(),
                DtnTruncation::Modes(l) => l.to_string(),
            },
        ));
        out.push(("basis".into(), self.basis.name().into()));
        out.push(("solver".into(), self.solver.method.name().into()));
        out.push(("jmax".into(), self.jmax.to_string()));
        if let Some(r) = self.reference {
            out.push(("reference".into(), format!("N={} h={}", r.copies, r.h)));
        }
        out.push(("trace_quadrature".into(), "trapezoid on top-trace nodes".into()));
        out
    }
}
