//! Extraction settings, their flat `key = value` file format and the
//! per-dataset presets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, VesselError};
use crate::frangi::FrangiParams;
use crate::raster::{write_bytes_atomic, ClaheParams};
use crate::scalespace::WidthSet;
use crate::tortuosity::TortuosityParams;
use crate::vesselmaps::GammaParams;

impl Serialize for WidthSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WidthSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Retinal,
    Scleral,
}

/// Which enhancement drives binarization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Combined,
    Redness,
    Structural,
}

impl FromStr for MapSource {
    type Err = VesselError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "combined" => Ok(Self::Combined),
            "redness" => Ok(Self::Redness),
            "structural" => Ok(Self::Structural),
            _ => Err(VesselError::param("map_source", format!("unknown source '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub kind: ImageKind,
    pub widths: WidthSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard_widths: Option<WidthSet>,
    pub alpha: f64,
    pub beta: f64,
    pub c_factor: f64,
    pub gamma_r: f64,
    pub gamma_s: f64,
    pub gamma_c: f64,
    pub t: f64,
    pub strict_t: bool,
    pub clahe_tiles: usize,
    pub clahe_clip: f64,
    pub min_segment_length: usize,
    pub smooth_window: usize,
    pub resize_target: usize,
    pub map_source: MapSource,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Preset::Drive.config()
    }
}

const KEY_DOCS: &str = "\
# kind                retinal | scleral
# widths              vessel widths to extract, px at the resize target (e.g. 7-12 or 4,5,6)
# guard_widths        optional thicker widths whose extraction is subtracted; all > max(widths)
# alpha               surround size ratio in [0, 1); sets the width-to-scale constant
# beta                blobness sensitivity, > 0
# c_factor            structuredness constant as a fraction of the largest Hessian norm, > 0
# gamma_r/s/c         gamma of the redness, structural and combined maps, >= 0
# t                   component size threshold in (0, 1]
# strict_t            keep components with d > t instead of d >= t
# clahe_tiles         CLAHE tiles per axis, >= 1
# clahe_clip          CLAHE clip limit, > 0
# min_segment_length  shortest traced centerline kept, points
# smooth_window       moving-average window for curvature, samples
# resize_target       side of the square working canvas, px
# map_source          combined | redness | structural
";

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        let p = VesselError::param;
        if let Some(g) = &self.guard_widths {
            if g.min() <= self.widths.max() {
                return Err(p(
                    "guard_widths",
                    format!("{g} must all exceed max(widths) = {}", self.widths.max()),
                ));
            }
        }
        self.frangi().validate()?;
        GammaParams::new(self.gamma_r, self.gamma_s, self.gamma_c)?;
        if !(self.t > 0.0 && self.t <= 1.0) {
            return Err(p("t", format!("{} must lie in (0, 1]", self.t)));
        }
        if self.clahe_tiles == 0 {
            return Err(p("clahe_tiles", "must be at least 1".into()));
        }
        if !(self.clahe_clip > 0.0) {
            return Err(p("clahe_clip", "must be positive".into()));
        }
        if self.min_segment_length < 2 {
            return Err(p("min_segment_length", "must be at least 2".into()));
        }
        if self.smooth_window == 0 {
            return Err(p("smooth_window", "must be at least 1".into()));
        }
        if self.resize_target < 16 {
            return Err(p("resize_target", "must be at least 16".into()));
        }
        Ok(())
    }

    pub fn frangi(&self) -> FrangiParams {
        FrangiParams {
            beta: self.beta,
            c_factor: self.c_factor,
            alpha: self.alpha,
        }
    }

    pub fn gamma(&self) -> Result<GammaParams> {
        GammaParams::new(self.gamma_r, self.gamma_s, self.gamma_c)
    }

    pub fn clahe(&self) -> ClaheParams {
        ClaheParams {
            tiles: self.clahe_tiles,
            clip_limit: self.clahe_clip,
        }
    }

    pub fn tortuosity(&self) -> TortuosityParams {
        TortuosityParams {
            min_segment_length: self.min_segment_length,
            smooth_window: self.smooth_window,
        }
    }

    /// Parses and validates. Keys missing from the text take the DRIVE
    /// preset values.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            VesselError::Config {
                line,
                reason: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialized form with a comment block documenting every key.
    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("flat config always serializes");
        format!("{KEY_DOCS}\n{body}")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(VesselError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| VesselError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes_atomic(path, self.to_text().as_bytes())
    }
}

/// Dataset parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Drive,
    Sbvpi,
    ReidaR,
    ReidaEe,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Self::Drive, Self::Sbvpi, Self::ReidaR, Self::ReidaEe];

    pub fn name(self) -> &'static str {
        match self {
            Self::Drive => "drive",
            Self::Sbvpi => "sbvpi",
            Self::ReidaR => "reida-r",
            Self::ReidaEe => "reida-ee",
        }
    }

    pub fn config(self) -> ExtractionConfig {
        let (kind, widths, (gamma_r, gamma_s, gamma_c), t) = match self {
            Self::Drive => (ImageKind::Retinal, (7, 12), (0.4, 0.7, 0.8), 0.05),
            Self::Sbvpi => (ImageKind::Scleral, (4, 8), (0.7, 0.1, 0.9), 0.3),
            Self::ReidaR => (ImageKind::Retinal, (7, 12), (0.9, 0.4, 0.5), 0.05),
            Self::ReidaEe => (ImageKind::Scleral, (4, 8), (0.7, 0.7, 0.7), 0.2),
        };
        ExtractionConfig {
            kind,
            widths: WidthSet::range(widths.0, widths.1).expect("preset widths are valid"),
            guard_widths: None,
            alpha: 0.9,
            beta: 0.5,
            c_factor: 0.5,
            gamma_r,
            gamma_s,
            gamma_c,
            t,
            strict_t: false,
            clahe_tiles: 8,
            clahe_clip: 2.0,
            min_segment_length: 10,
            smooth_window: 5,
            resize_target: 512,
            map_source: MapSource::Combined,
        }
    }
}

impl FromStr for Preset {
    type Err = VesselError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                VesselError::param(
                    "preset",
                    format!("unknown preset '{s}' (expected drive, sbvpi, reida-r or reida-ee)"),
                )
            })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
