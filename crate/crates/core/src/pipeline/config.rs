use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::bsp::BspConfig;
use crate::error::{Error, Result};
use crate::gdo::SurfaceSamples;
use crate::tensor::AdamConfig;

/// Which parts of the model are trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Parameterization and grid deformation trained jointly.
    Full,
    /// No parameterization: the input itself is the target `S`.
    SparseOnly,
    /// Grid vertices move by a learned free offset instead of along the
    /// SDF gradient.
    OffsetAblation,
    /// The parameterization is trained alone for the first half of the
    /// iterations, then frozen while the grid is optimised.
    BspFrozen,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::SparseOnly => "sparse_only",
            Mode::OffsetAblation => "offset_ablation",
            Mode::BspFrozen => "bsp_frozen",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Mode::Full,
            "sparse_only" => Mode::SparseOnly,
            "offset_ablation" => Mode::OffsetAblation,
            "bsp_frozen" => Mode::BspFrozen,
            other => return Err(Error::invalid(format!("unknown mode `{other}`"))),
        })
    }
}

/// Every knob of a training run. The key names double as config-file keys.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub iterations: usize,
    pub lr: f64,
    pub patch_size: usize,
    pub k: usize,
    pub resolution: usize,
    /// `T`, surface samples per iteration; 0 uses the mesh vertices.
    pub samples: usize,
    pub seed: u64,
    pub mode: Mode,
    pub feature_dim: usize,
    pub pool_size: usize,
    pub condition_tokens: usize,
    pub sdf_width: usize,
    pub sdf_depth: usize,
    pub init_radius: f64,
    pub offset_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 10.0,
            lambda2: 0.01,
            iterations: 3000,
            lr: 1e-3,
            patch_size: 10,
            k: 8,
            resolution: 24,
            samples: 5000,
            seed: 0,
            mode: Mode::Full,
            feature_dim: 32,
            pool_size: 2048,
            condition_tokens: 8,
            sdf_width: 32,
            sdf_depth: 4,
            init_radius: 0.35,
            offset_width: 32,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 17] = [
        "lambda1",
        "lambda2",
        "iterations",
        "lr",
        "patch_size",
        "k",
        "resolution",
        "samples",
        "seed",
        "mode",
        "feature_dim",
        "pool_size",
        "condition_tokens",
        "sdf_width",
        "sdf_depth",
        "init_radius",
        "offset_width",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "resolution" => self.resolution = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = value.trim().parse()?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "pool_size" => self.pool_size = parse(key, value)?,
            "condition_tokens" => self.condition_tokens = parse(key, value)?,
            "sdf_width" => self.sdf_width = parse(key, value)?,
            "sdf_depth" => self.sdf_depth = parse(key, value)?,
            "init_radius" => self.init_radius = parse(key, value)?,
            "offset_width" => self.offset_width = parse(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lambda1" => format!("{:?}", self.lambda1),
            "lambda2" => format!("{:?}", self.lambda2),
            "iterations" => self.iterations.to_string(),
            "lr" => format!("{:?}", self.lr),
            "patch_size" => self.patch_size.to_string(),
            "k" => self.k.to_string(),
            "resolution" => self.resolution.to_string(),
            "samples" => self.samples.to_string(),
            "seed" => self.seed.to_string(),
            "mode" => self.mode.to_string(),
            "feature_dim" => self.feature_dim.to_string(),
            "pool_size" => self.pool_size.to_string(),
            "condition_tokens" => self.condition_tokens.to_string(),
            "sdf_width" => self.sdf_width.to_string(),
            "sdf_depth" => self.sdf_depth.to_string(),
            "init_radius" => format!("{:?}", self.init_radius),
            "offset_width" => self.offset_width.to_string(),
            _ => return None,
        })
    }

    /// `key=value` lines in [`TrainConfig::KEYS`] order. Floats use the
    /// shortest round-trip representation, so parsing this text gives back
    /// an equal config.
    pub fn canonical(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line without `=`: {line}")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 8 bytes of the SHA-256 of [`TrainConfig::canonical`].
    pub fn hash(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lambda1", self.lambda1)?;
        positive("lambda2", self.lambda2)?;
        positive("lr", self.lr)?;
        positive("init_radius", self.init_radius)?;
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.k == 0 || self.patch_size == 0 || self.feature_dim == 0 || self.sdf_width == 0 {
            return Err(Error::invalid(
                "k, patch_size, feature_dim and sdf_width must be positive",
            ));
        }
        if !(1..=crate::gdo::MAX_RESOLUTION).contains(&self.resolution) {
            return Err(Error::invalid(format!(
                "resolution {} out of range",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn bsp(&self) -> BspConfig {
        BspConfig {
            feature_dim: self.feature_dim,
            k: self.k,
            patch_size: self.patch_size,
            pool_size: self.pool_size,
            condition_tokens: self.condition_tokens,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn surface_samples(&self) -> SurfaceSamples {
        if self.samples == 0 {
            SurfaceSamples::MeshVertices
        } else {
            SurfaceSamples::Resampled(self.samples)
        }
    }
}
