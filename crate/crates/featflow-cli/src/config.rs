//! Plain-text sectioned `key = value` run configuration.
//!
//! Unknown sections or keys are errors so that typos in long sweeps surface
//! immediately. Parsing a serialized configuration reproduces it exactly.

use std::fmt;
use std::str::FromStr;

use featflow::assembly::{LstsqBackend, SolveOptions};
use featflow::basis::Activation;
use featflow::geometry::PouKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("missing required key '{key}' in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("invalid value for '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Manufactured,
    Cells,
}

/// Cell-model section: physical parameters plus initial placement.
#[derive(Debug, Clone, PartialEq)]
pub struct CellsConfig {
    pub shape_relax: f64,
    pub interface_width: f64,
    pub area_stiffness: f64,
    pub repulsion: f64,
    pub target_radius: f64,
    pub friction: f64,
    pub activity: f64,
    pub count: usize,
    pub initial_radius: f64,
    /// Optional rejection-sampling separation for random centers.
    pub min_separation: Option<f64>,
    /// Explicit centers override random placement when present.
    pub centers: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: [f64; 4], // x_min, x_max, y_min, y_max
    pub nx: usize,
    pub ny: usize,
    pub pou: PouKind,
    pub features: usize,
    pub magnitude: f64,
    pub activation: Activation,
    pub seed: u64,
    pub regenerate_each_step: bool,
    pub qx: usize,
    pub qy: usize,
    pub qtest_x: usize,
    pub qtest_y: usize,
    pub t_final: f64,
    pub steps: usize,
    pub tableau: String,
    pub model: ModelKind,
    pub cells: Option<CellsConfig>,
    pub rescale_c: f64,
    pub backend: LstsqBackend,
    pub rtol: f64,
    pub output_dir: String,
    pub snapshot_stride: usize,
}

impl RunConfig {
    pub fn solve_options(&self) -> SolveOptions<f64> {
        SolveOptions {
            backend: self.backend,
            rtol: self.rtol,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.domain[1] <= self.domain[0] || self.domain[3] <= self.domain[2] {
            return Err(ConfigError::Invalid("degenerate domain bounds".to_string()));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(ConfigError::Invalid("partition counts must be positive".to_string()));
        }
        if self.qx < 2 || self.qy < 2 || self.qtest_x < 2 || self.qtest_y < 2 {
            return Err(ConfigError::Invalid(
                "collocation and test grids need at least 2 points per direction".to_string(),
            ));
        }
        if self.features == 0 {
            return Err(ConfigError::Invalid("need at least one feature".to_string()));
        }
        if !(self.magnitude > 0.0) {
            return Err(ConfigError::Invalid("parameter magnitude must be positive".to_string()));
        }
        if !(self.t_final > 0.0) && self.steps > 0 {
            return Err(ConfigError::Invalid("final time must be positive".to_string()));
        }
        if !matches!(self.tableau.as_str(), "heun" | "midpoint" | "euler") {
            return Err(ConfigError::Invalid(format!("unknown tableau '{}'", self.tableau)));
        }
        match self.model {
            ModelKind::Cells => {
                let cells = self.cells.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("cell model requires a [cells] section".to_string())
                })?;
                if cells.count == 0 {
                    return Err(ConfigError::Invalid("need at least one cell".to_string()));
                }
                if !cells.centers.is_empty() && cells.centers.len() != cells.count {
                    return Err(ConfigError::Invalid(format!(
                        "{} explicit centers for {} cells",
                        cells.centers.len(),
                        cells.count
                    )));
                }
            }
            ModelKind::Manufactured => {}
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        RunConfig {
            domain: [0.0, two_pi, 0.0, two_pi],
            nx: 3,
            ny: 3,
            pou: PouKind::Indicator,
            features: 200,
            magnitude: 1.7,
            activation: Activation::Tanh,
            seed: 11,
            regenerate_each_step: true,
            qx: 20,
            qy: 20,
            qtest_x: 40,
            qtest_y: 40,
            t_final: 1.0,
            steps: 20,
            tableau: "heun".to_string(),
            model: ModelKind::Manufactured,
            cells: None,
            rescale_c: 100.0,
            backend: LstsqBackend::QrColPiv,
            rtol: 1e-12,
            output_dir: "out".to_string(),
            snapshot_stride: 10,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().unwrap(), v);
    s
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[domain]")?;
        writeln!(f, "x_min = {}", fmt_f64(self.domain[0]))?;
        writeln!(f, "x_max = {}", fmt_f64(self.domain[1]))?;
        writeln!(f, "y_min = {}", fmt_f64(self.domain[2]))?;
        writeln!(f, "y_max = {}", fmt_f64(self.domain[3]))?;
        writeln!(f)?;
        writeln!(f, "[partition]")?;
        writeln!(f, "nx = {}", self.nx)?;
        writeln!(f, "ny = {}", self.ny)?;
        writeln!(
            f,
            "pou = {}",
            match self.pou {
                PouKind::Indicator => "indicator",
                PouKind::SinBlend => "sin_blend",
            }
        )?;
        writeln!(f)?;
        writeln!(f, "[basis]")?;
        writeln!(f, "features = {}", self.features)?;
        writeln!(f, "magnitude = {}", fmt_f64(self.magnitude))?;
        writeln!(
            f,
            "activation = {}",
            match self.activation {
                Activation::Tanh => "tanh",
                Activation::Cos => "cos",
            }
        )?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "regenerate_each_step = {}", self.regenerate_each_step)?;
        writeln!(f)?;
        writeln!(f, "[collocation]")?;
        writeln!(f, "qx = {}", self.qx)?;
        writeln!(f, "qy = {}", self.qy)?;
        writeln!(f, "qtest_x = {}", self.qtest_x)?;
        writeln!(f, "qtest_y = {}", self.qtest_y)?;
        writeln!(f)?;
        writeln!(f, "[time]")?;
        writeln!(f, "t_final = {}", fmt_f64(self.t_final))?;
        writeln!(f, "steps = {}", self.steps)?;
        writeln!(f, "tableau = {}", self.tableau)?;
        writeln!(f)?;
        writeln!(f, "[model]")?;
        writeln!(
            f,
            "kind = {}",
            match self.model {
                ModelKind::Manufactured => "manufactured",
                ModelKind::Cells => "cells",
            }
        )?;
        if let Some(cells) = &self.cells {
            writeln!(f)?;
            writeln!(f, "[cells]")?;
            writeln!(f, "shape_relax = {}", fmt_f64(cells.shape_relax))?;
            writeln!(f, "interface_width = {}", fmt_f64(cells.interface_width))?;
            writeln!(f, "area_stiffness = {}", fmt_f64(cells.area_stiffness))?;
            writeln!(f, "repulsion = {}", fmt_f64(cells.repulsion))?;
            writeln!(f, "target_radius = {}", fmt_f64(cells.target_radius))?;
            writeln!(f, "friction = {}", fmt_f64(cells.friction))?;
            writeln!(f, "activity = {}", fmt_f64(cells.activity))?;
            writeln!(f, "count = {}", cells.count)?;
            writeln!(f, "initial_radius = {}", fmt_f64(cells.initial_radius))?;
            if let Some(sep) = cells.min_separation {
                writeln!(f, "min_separation = {}", fmt_f64(sep))?;
            }
            if !cells.centers.is_empty() {
                let list: Vec<String> = cells
                    .centers
                    .iter()
                    .map(|c| format!("{},{}", fmt_f64(c[0]), fmt_f64(c[1])))
                    .collect();
                writeln!(f, "centers = {}", list.join("; "))?;
            }
        }
        writeln!(f)?;
        writeln!(f, "[rescale]")?;
        writeln!(f, "c = {}", fmt_f64(self.rescale_c))?;
        writeln!(f)?;
        writeln!(f, "[solve]")?;
        writeln!(
            f,
            "backend = {}",
            match self.backend {
                LstsqBackend::QrColPiv => "qr",
                LstsqBackend::Svd => "svd",
            }
        )?;
        writeln!(f, "rtol = {}", fmt_f64(self.rtol))?;
        writeln!(f)?;
        writeln!(f, "[output]")?;
        writeln!(f, "directory = {}", self.output_dir)?;
        writeln!(f, "snapshot_stride = {}", self.snapshot_stride)?;
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_centers(key: &str, value: &str) -> Result<Vec<[f64; 2]>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let coords: Vec<&str> = part.split(',').map(str::trim).collect();
        if coords.len() != 2 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                message: format!("center '{part}' is not 'x,y'"),
            });
        }
        out.push([parse_value(key, coords[0])?, parse_value(key, coords[1])?]);
    }
    Ok(out)
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        let mut cells = CellsConfig {
            shape_relax: 0.01,
            interface_width: 2.5,
            area_stiffness: 3.0,
            repulsion: 0.1,
            target_radius: 8.0,
            friction: 2.0,
            activity: 0.005,
            count: 8,
            initial_radius: 6.0,
            min_separation: None,
            centers: Vec::new(),
        };
        let mut saw_cells_section = false;
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                    line: lineno + 1,
                    message: "unterminated section header".to_string(),
                })?;
                section = name.trim().to_string();
                match section.as_str() {
                    "domain" | "partition" | "basis" | "collocation" | "time" | "model"
                    | "cells" | "rescale" | "solve" | "output" => {}
                    other => return Err(ConfigError::UnknownSection(other.to_string())),
                }
                if section == "cells" {
                    saw_cells_section = true;
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
                line: lineno + 1,
                message: "expected 'key = value'".to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let unknown = || ConfigError::UnknownKey {
                section: section.clone(),
                key: key.to_string(),
            };
            match (section.as_str(), key) {
                ("domain", "x_min") => config.domain[0] = parse_value(key, value)?,
                ("domain", "x_max") => config.domain[1] = parse_value(key, value)?,
                ("domain", "y_min") => config.domain[2] = parse_value(key, value)?,
                ("domain", "y_max") => config.domain[3] = parse_value(key, value)?,
                ("partition", "nx") => config.nx = parse_value(key, value)?,
                ("partition", "ny") => config.ny = parse_value(key, value)?,
                ("partition", "pou") => {
                    config.pou = match value {
                        "indicator" => PouKind::Indicator,
                        "sin_blend" => PouKind::SinBlend,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.to_string(),
                                message: format!("unknown partition of unity '{other}'"),
                            })
                        }
                    }
                }
                ("basis", "features") => config.features = parse_value(key, value)?,
                ("basis", "magnitude") => config.magnitude = parse_value(key, value)?,
                ("basis", "activation") => {
                    config.activation = match value {
                        "tanh" => Activation::Tanh,
                        "cos" => Activation::Cos,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.to_string(),
                                message: format!("unknown activation '{other}'"),
                            })
                        }
                    }
                }
                ("basis", "seed") => config.seed = parse_value(key, value)?,
                ("basis", "regenerate_each_step") => {
                    config.regenerate_each_step = parse_value(key, value)?
                }
                ("collocation", "qx") => config.qx = parse_value(key, value)?,
                ("collocation", "qy") => config.qy = parse_value(key, value)?,
                ("collocation", "qtest_x") => config.qtest_x = parse_value(key, value)?,
                ("collocation", "qtest_y") => config.qtest_y = parse_value(key, value)?,
                ("time", "t_final") => config.t_final = parse_value(key, value)?,
                ("time", "steps") => config.steps = parse_value(key, value)?,
                ("time", "tableau") => config.tableau = value.to_string(),
                ("model", "kind") => {
                    config.model = match value {
                        "manufactured" => ModelKind::Manufactured,
                        "cells" => ModelKind::Cells,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.to_string(),
                                message: format!("unknown model kind '{other}'"),
                            })
                        }
                    }
                }
                ("cells", "shape_relax") => cells.shape_relax = parse_value(key, value)?,
                ("cells", "interface_width") => cells.interface_width = parse_value(key, value)?,
                ("cells", "area_stiffness") => cells.area_stiffness = parse_value(key, value)?,
                ("cells", "repulsion") => cells.repulsion = parse_value(key, value)?,
                ("cells", "target_radius") => cells.target_radius = parse_value(key, value)?,
                ("cells", "friction") => cells.friction = parse_value(key, value)?,
                ("cells", "activity") => cells.activity = parse_value(key, value)?,
                ("cells", "count") => cells.count = parse_value(key, value)?,
                ("cells", "initial_radius") => cells.initial_radius = parse_value(key, value)?,
                ("cells", "min_separation") => {
                    cells.min_separation = Some(parse_value(key, value)?)
                }
                ("cells", "centers") => cells.centers = parse_centers(key, value)?,
                ("rescale", "c") => config.rescale_c = parse_value(key, value)?,
                ("solve", "backend") => {
                    config.backend = match value {
                        "qr" => LstsqBackend::QrColPiv,
                        "svd" => LstsqBackend::Svd,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.to_string(),
                                message: format!("unknown backend '{other}'"),
                            })
                        }
                    }
                }
                ("solve", "rtol") => config.rtol = parse_value(key, value)?,
                ("output", "directory") => config.output_dir = value.to_string(),
                ("output", "snapshot_stride") => config.snapshot_stride = parse_value(key, value)?,
                ("", _) => {
                    return Err(ConfigError::Parse {
                        line: lineno + 1,
                        message: "key outside any section".to_string(),
                    })
                }
                _ => return Err(unknown()),
            }
        }
        if saw_cells_section || config.model == ModelKind::Cells {
            config.cells = Some(cells);
        }
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cells_config() -> RunConfig {
        RunConfig {
            domain: [0.0, 50.0, 0.0, 50.0],
            nx: 2,
            ny: 2,
            model: ModelKind::Cells,
            cells: Some(CellsConfig {
                shape_relax: 0.01,
                interface_width: 2.5,
                area_stiffness: 3.0,
                repulsion: 0.1,
                target_radius: 8.0,
                friction: 2.0,
                activity: 0.005,
                count: 8,
                initial_radius: 6.0,
                min_separation: Some(6.0),
                centers: vec![[1.5, 2.0], [30.0, 40.0]],
            }),
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let mut config = cells_config();
        config.cells.as_mut().unwrap().count = 2;
        let text = config.to_string();
        let parsed: RunConfig = text.parse().unwrap();
        assert_eq!(parsed, config);

        let manufactured = RunConfig::default();
        let parsed: RunConfig = manufactured.to_string().parse().unwrap();
        assert_eq!(parsed, manufactured);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[basis]\nfeatures = 10\nmagnitue = 1.7\n";
        match text.parse::<RunConfig>() {
            Err(ConfigError::UnknownKey { section, key }) => {
                assert_eq!(section, "basis");
                assert_eq!(key, "magnitue");
            }
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_sections_are_rejected() {
        assert!(matches!(
            "[basis2]\nfeatures = 4\n".parse::<RunConfig>(),
            Err(ConfigError::UnknownSection(_))
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# leading comment\n[basis]\nfeatures = 17 # trailing\n\n";
        let config: RunConfig = text.parse().unwrap();
        assert_eq!(config.features, 17);
    }

    #[test]
    fn cells_model_requires_the_section() {
        let text = "[model]\nkind = cells\n";
        // defaults fill the [cells] section when the model asks for it
        let config: RunConfig = text.parse().unwrap();
        assert!(config.cells.is_some());
        assert_eq!(config.cells.unwrap().count, 8);
    }

    #[test]
    fn mismatched_center_count_is_invalid() {
        let mut config = cells_config();
        config.cells.as_mut().unwrap().count = 5;
        assert!(config.validate().is_err());
    }

    proptest! {
        #[test]
        fn round_trip_random_numeric_fields(
            features in 1usize..500,
            seed in 0u64..u64::MAX,
            magnitude in 0.01f64..10.0,
            t_final in 0.001f64..100.0,
            steps in 0usize..5000,
            stride in 1usize..100,
        ) {
            let config = RunConfig {
                features,
                seed,
                magnitude,
                t_final,
                steps,
                snapshot_stride: stride,
                ..Default::default()
            };
            let parsed: RunConfig = config.to_string().parse().unwrap();
            prop_assert_eq!(parsed, config);
        }
    }
}
