//! Run configuration: one table drives the flags, the config-file keys, the
//! defaults and the manifest echo.
//!
//! Precedence is flag, then config file, then default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cellmig::dataio::parse_key_values;
use cellmig::metrics::{AogmWeights, MatchRule};
use cellmig::sampler::SamplerConfig;
use cellmig::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Register,
    Normalize,
    SamplePatches,
    DetectProtrusions,
    EvaluateSeg,
    EvaluateTra,
    Link,
    Pipeline,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Register,
        Command::Normalize,
        Command::SamplePatches,
        Command::DetectProtrusions,
        Command::EvaluateSeg,
        Command::EvaluateTra,
        Command::Link,
        Command::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Register => "register",
            Command::Normalize => "normalize",
            Command::SamplePatches => "sample-patches",
            Command::DetectProtrusions => "detect-protrusions",
            Command::EvaluateSeg => "evaluate-seg",
            Command::EvaluateTra => "evaluate-tra",
            Command::Link => "link",
            Command::Pipeline => "pipeline",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Register => "Correct translational drift and crop to the common field of view",
            Command::Normalize => "Percentile-normalize every frame to 16-bit",
            Command::SamplePatches => "Draw foreground-weighted training patches",
            Command::DetectProtrusions => "Report protrusion tips of every cell in a mask video",
            Command::EvaluateSeg => "Score result masks against ground truth with SEG",
            Command::EvaluateTra => "Score result tracks against ground truth with TRA",
            Command::Link => "Link instance masks over time by overlap",
            Command::Pipeline => "Register, normalize, ingest masks, detect protrusions and evaluate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

use Command::*;

/// A configuration key. `required` keys have no default and must be given.
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
    pub multiple: bool,
    pub commands: &'static [Command],
    pub required_for: &'static [Command],
}

const fn key(name: &'static str, default: Option<&'static str>, help: &'static str, commands: &'static [Command]) -> Key {
    Key {
        name,
        default,
        help,
        multiple: false,
        commands,
        required_for: &[],
    }
}

pub const KEYS: &[Key] = &[
    Key {
        required_for: &[Register, Normalize, SamplePatches, Pipeline],
        ..key("input", None, "Video directory with frames tNNN.tif", &[Register, Normalize, SamplePatches, Pipeline])
    },
    Key {
        required_for: &[DetectProtrusions, Link, Pipeline],
        ..key(
            "masks",
            None,
            "Directory of instance masks maskNNN.tif (sample-patches falls back to the video's SEG ground truth)",
            &[SamplePatches, DetectProtrusions, Link, Pipeline],
        )
    },
    Key {
        multiple: true,
        required_for: &[EvaluateSeg, EvaluateTra],
        ..key(
            "gt",
            None,
            "Ground truth. evaluate-*: CTC video directory with a sibling _GT, repeat once per video. \
             pipeline: one directory holding SEG/ and/or TRA/ in registered coordinates",
            &[EvaluateSeg, EvaluateTra, Pipeline],
        )
    },
    Key {
        multiple: true,
        required_for: &[EvaluateSeg, EvaluateTra],
        ..key("res", None, "Result directory paired with the --gt of the same position", &[EvaluateSeg, EvaluateTra])
    },
    Key {
        required_for: &Command::ALL,
        ..key("output", None, "Output directory", &Command::ALL)
    },
    key("execution", Some("parallel"), "parallel or sequential", &Command::ALL),
    key("max_shift", Some("20"), "Largest drift searched between consecutive frames, in pixels", &[Register, Pipeline]),
    key("p_low", Some("0.1"), "Lower normalization percentile", &[Normalize, SamplePatches, Pipeline]),
    key("p_high", Some("99.1"), "Upper normalization percentile", &[Normalize, SamplePatches, Pipeline]),
    key("pixel_size", Some("0.802"), "Pixel size in µm", &[DetectProtrusions, Pipeline]),
    key("min_protrusion_um", Some("20"), "Shortest reported protrusion, in µm", &[DetectProtrusions, Pipeline]),
    Key {
        required_for: &[SamplePatches],
        ..key("seed", None, "Sampler seed", &[SamplePatches])
    },
    key("count", Some("64"), "Number of patches to draw", &[SamplePatches]),
    key("foreground_weight", Some("50000"), "Sampling weight of foreground pixels", &[SamplePatches]),
    key("background_weight", Some("1"), "Sampling weight of background pixels", &[SamplePatches]),
    key("patch_size", Some("256"), "Patch height and width, in pixels", &[SamplePatches]),
    key("frame_window", Some("5"), "Consecutive frames per patch stack", &[SamplePatches]),
    key("augment", Some("true"), "Apply a random flip or rotation before each draw", &[SamplePatches]),
    key("min_iou", Some("0.3"), "Smallest overlap (IoU) that links two objects", &[Link, Pipeline]),
    key("match_rule", Some("covers-gt"), "SEG majority rule: covers-gt or covers-result", &[EvaluateSeg, Pipeline]),
    key("aogm_ns", Some("5"), "AOGM weight of a node split", &[EvaluateTra, Pipeline]),
    key("aogm_fn", Some("10"), "AOGM weight of a false-negative node", &[EvaluateTra, Pipeline]),
    key("aogm_fp", Some("1"), "AOGM weight of a false-positive node", &[EvaluateTra, Pipeline]),
    key("aogm_ed", Some("1"), "AOGM weight of a redundant edge", &[EvaluateTra, Pipeline]),
    key("aogm_ea", Some("1.5"), "AOGM weight of a missing edge", &[EvaluateTra, Pipeline]),
    key("aogm_ec", Some("1"), "AOGM weight of an edge with wrong semantics", &[EvaluateTra, Pipeline]),
];

pub fn keys_for(command: Command) -> impl Iterator<Item = &'static Key> {
    KEYS.iter().filter(move |k| k.commands.contains(&command))
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    File,
    Default,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Flag => "flag",
            Source::File => "file",
            Source::Default => "default",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Raw settings after precedence, before typing.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: Command,
    values: BTreeMap<&'static str, (Vec<String>, Source)>,
}

impl Settings {
    /// Merges flags over the optional config file over defaults.
    pub fn resolve(
        command: Command,
        flags: &BTreeMap<String, Vec<String>>,
        config_file: Option<&Path>,
    ) -> Result<Self, ConfigError> {
        let mut file: BTreeMap<String, (String, usize)> = BTreeMap::new();
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            let kv = parse_key_values(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            for k in kv.keys() {
                if !KEYS.iter().any(|key| key.name == k) {
                    return Err(ConfigError(format!(
                        "{}:{}: unknown key `{k}`",
                        path.display(),
                        kv.line_of(k).unwrap_or(0)
                    )));
                }
                file.insert(k.to_string(), (kv.get(k).unwrap_or_default().to_string(), kv.line_of(k).unwrap_or(0)));
            }
        }
        let mut values = BTreeMap::new();
        for k in keys_for(command) {
            let entry = if let Some(v) = flags.get(k.name) {
                Some((v.clone(), Source::Flag))
            } else if let Some((v, _)) = file.get(k.name) {
                let list = if k.multiple {
                    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
                } else {
                    vec![v.clone()]
                };
                Some((list, Source::File))
            } else {
                k.default.map(|d| (vec![d.to_string()], Source::Default))
            };
            match entry {
                Some(e) => {
                    values.insert(k.name, e);
                }
                None if k.required_for.contains(&command) => {
                    return Err(ConfigError(format!(
                        "{command}: missing `{}` (pass --{} or set {}= in the config file)",
                        k.name,
                        flag_name(k.name),
                        k.name
                    )));
                }
                None => {}
            }
        }
        Ok(Self { command, values })
    }

    pub fn raw(&self, key: &str) -> Option<&[String]> {
        self.values.get(key).map(|(v, _)| v.as_slice())
    }

    fn one(&self, key: &str) -> Option<&str> {
        self.raw(key).and_then(|v| v.first()).map(String::as_str)
    }

    fn source(&self, key: &str) -> &'static str {
        self.values.get(key).map_or("unset", |(_, s)| s.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.one(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    ConfigError(format!("`{key}` ({}): cannot parse {v:?}: {e}", self.source(key)))
                })
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| ConfigError(format!("`{key}` is not used by {}", self.command)))
    }

    /// Resolved values and their sources in table order, for the manifest.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for k in keys_for(self.command) {
            if let Some((v, s)) = self.values.get(k.name) {
                out.push((format!("config.{}", k.name), v.join(",")));
                out.push((format!("config_source.{}", k.name), s.as_str().to_string()));
            }
        }
        out
    }

    fn check(&self, key: &str, ok: bool, what: &str) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(ConfigError(format!(
                "`{key}` ({}) = {:?}: {what}",
                self.source(key),
                self.raw(key).map(|v| v.join(",")).unwrap_or_default()
            )))
        }
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.require(key)?;
        self.check(key, v.is_finite() && v > 0.0, "must be a positive number")?;
        Ok(v)
    }

    fn paths(&self, key: &str) -> Vec<PathBuf> {
        self.raw(key).unwrap_or_default().iter().map(PathBuf::from).collect()
    }
}

/// Fully typed and validated configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub settings: Settings,
    pub input: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub gt: Vec<PathBuf>,
    pub res: Vec<PathBuf>,
    pub output: PathBuf,
    pub execution: Execution,
    pub max_shift: usize,
    pub p_low: f64,
    pub p_high: f64,
    pub pixel_size: f64,
    pub min_protrusion_um: f64,
    pub seed: Option<u64>,
    pub count: usize,
    pub sampler: SamplerConfig,
    pub min_iou: f64,
    pub match_rule: MatchRule,
    pub aogm: AogmWeights,
}

impl RunConfig {
    /// Types and range-checks every setting the command uses.
    pub fn from_settings(s: Settings) -> Result<Self, ConfigError> {
        let used = |k: &str| s.raw(k).is_some();
        let execution = match s.one("execution").unwrap_or("parallel") {
            "parallel" => Execution::Parallel,
            "sequential" => Execution::Sequential,
            _ => return Err(s.check("execution", false, "expected parallel or sequential").unwrap_err()),
        };
        let (mut p_low, mut p_high) = (0.0, 100.0);
        if used("p_low") {
            p_low = s.require("p_low")?;
            p_high = s.require("p_high")?;
            s.check("p_low", (0.0..=100.0).contains(&p_low), "must lie in [0, 100]")?;
            s.check("p_high", (0.0..=100.0).contains(&p_high), "must lie in [0, 100]")?;
            s.check("p_high", p_low < p_high, "must exceed p_low")?;
        }
        let pixel_size = if used("pixel_size") { s.positive("pixel_size")? } else { cellmig::DEFAULT_PIXEL_SIZE_UM };
        let mut min_protrusion_um = cellmig::morphology::DEFAULT_MIN_PROTRUSION_UM;
        if used("min_protrusion_um") {
            min_protrusion_um = s.require("min_protrusion_um")?;
            s.check(
                "min_protrusion_um",
                min_protrusion_um.is_finite() && min_protrusion_um >= 0.0,
                "must be a non-negative number",
            )?;
        }
        let mut sampler = SamplerConfig::default();
        let mut count = 0;
        if used("count") {
            count = s.require("count")?;
            s.check("count", count > 0, "must be positive")?;
            sampler.foreground_weight = s.positive("foreground_weight")?;
            sampler.background_weight = s.positive("background_weight")?;
            let size: usize = s.require("patch_size")?;
            s.check("patch_size", size > 0, "must be positive")?;
            sampler.patch_height = size;
            sampler.patch_width = size;
            sampler.frame_window = s.require("frame_window")?;
            s.check("frame_window", sampler.frame_window > 0, "must be positive")?;
            sampler.augment = s.require("augment")?;
        }
        let mut min_iou = 0.0;
        if used("min_iou") {
            min_iou = s.require("min_iou")?;
            s.check("min_iou", (0.0..=1.0).contains(&min_iou), "must lie in [0, 1]")?;
        }
        let match_rule = match s.one("match_rule") {
            None | Some("covers-gt") => MatchRule::CoversGroundTruth,
            Some("covers-result") => MatchRule::CoversResult,
            Some(_) => return Err(s.check("match_rule", false, "expected covers-gt or covers-result").unwrap_err()),
        };
        let mut aogm = AogmWeights::default();
        if used("aogm_ns") {
            aogm = AogmWeights {
                split: s.require("aogm_ns")?,
                false_negative: s.require("aogm_fn")?,
                false_positive: s.require("aogm_fp")?,
                redundant_edge: s.require("aogm_ed")?,
                missing_edge: s.require("aogm_ea")?,
                wrong_semantics: s.require("aogm_ec")?,
            };
            aogm.validate().map_err(|e| ConfigError(format!("AOGM weights: {e}")))?;
        }
        let (gt, res) = (s.paths("gt"), s.paths("res"));
        if s.command != Pipeline && gt.len() != res.len() {
            return Err(ConfigError(format!(
                "{} --gt and {} --res given; they pair up by position",
                gt.len(),
                res.len()
            )));
        }
        if s.command == Pipeline && gt.len() > 1 {
            return Err(ConfigError("pipeline takes at most one --gt".into()));
        }
        Ok(Self {
            command: s.command,
            input: s.paths("input").pop(),
            masks: s.paths("masks").pop(),
            gt,
            res,
            output: s.paths("output").pop().expect("output is required"),
            execution,
            max_shift: if used("max_shift") { s.require("max_shift")? } else { 0 },
            p_low,
            p_high,
            pixel_size,
            min_protrusion_um,
            seed: s.parse("seed")?,
            count,
            sampler,
            min_iou,
            match_rule,
            aogm,
            settings: s,
        })
    }

    /// Every input directory, for existence and overlap checks.
    pub fn input_dirs(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = self.input.iter().chain(&self.masks).map(PathBuf::as_path).collect();
        out.extend(self.gt.iter().chain(&self.res).map(PathBuf::as_path));
        out
    }
}
