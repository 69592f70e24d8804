//! Run configuration: a key-value file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use orclsim_core::bcp::BcpConfig;
use orclsim_core::events::{DEFAULT_RADIUS, DEFAULT_TOLERANCE};
use orclsim_core::gaze::{CameraModel, EntropyParams, FixationFilter};
use orclsim_core::ingest::SessionManifest;
use orclsim_core::kv::KeyValues;

use crate::CliError;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_SEPARATION: usize = 5;
pub const DEFAULT_MAX_PARSE_ERROR_FRACTION: f64 = 0.05;

/// Recognized configuration keys with a one-line description each.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("sessions", "comma-separated session descriptor paths"),
    ("session_id, participant_id, mode", "inline single session (with road_network)"),
    ("road_network, pose, gaze, watch, annotations", "inline session file paths"),
    ("column_map, offset.<stream>", "inline session header renames and clock offsets"),
    ("seed", "seed for every sampler in the run"),
    ("threshold", "posterior probability needed for a change event"),
    ("min_separation", "minimum samples between change events"),
    ("bcp.gamma, bcp.lambda", "prior upper limits"),
    ("bcp.iterations, bcp.burn_in", "Gibbs sweeps in total and discarded"),
    ("entropy.window, entropy.hop", "rolling window and step, seconds"),
    ("entropy.bin_size", "screen bin edge, pixels"),
    ("entropy.min_valid_fraction", "share of nominal samples a window needs"),
    ("entropy.exclude_self_transitions", "drop repeated bins from transition counts"),
    ("fixation.max_dispersion, fixation.min_duration", "enable dispersion fixation filtering"),
    ("camera.horizontal_fov, camera.width, camera.height", "screen-recording camera"),
    ("tolerance", "correlation tolerance, seconds"),
    ("radius", "intersection attribution radius, meters"),
    ("max_parse_error_fraction", "per-file rejected-row share that fails the run"),
    ("out", "output directory"),
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub sessions: Vec<SessionManifest>,
    pub bcp: BcpConfig,
    pub threshold: f64,
    pub min_separation: usize,
    pub entropy: EntropyParams,
    pub camera: CameraModel,
    pub tolerance: f64,
    pub radius: f64,
    pub max_parse_error_fraction: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// Effective settings, echoed into the report (output directory excluded).
    pub echo: KeyValues,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sessions: Vec::new(),
            bcp: BcpConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            min_separation: DEFAULT_MIN_SEPARATION,
            entropy: EntropyParams::default(),
            camera: CameraModel::default(),
            tolerance: DEFAULT_TOLERANCE,
            radius: DEFAULT_RADIUS,
            max_parse_error_fraction: DEFAULT_MAX_PARSE_ERROR_FRACTION,
            out: PathBuf::from("orclsim-out"),
            seed: 0,
            echo: KeyValues::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub sessions: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub window: Option<f64>,
    pub bin_size: Option<f64>,
    pub tolerance: Option<f64>,
}

fn bad(e: orclsim_core::Error) -> CliError {
    CliError::Input(e.to_string())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let (kv, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                let kv = KeyValues::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                (kv, p.parent().unwrap_or(Path::new(".")).to_path_buf())
            }
            None => (KeyValues::default(), PathBuf::from(".")),
        };
        Self::from_key_values(&kv, &base, overrides)
    }

    pub fn from_key_values(kv: &KeyValues, base: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let d = Self::default();
        let mut echo = KeyValues::default();

        let mut sessions = Vec::new();
        let mut sources: Vec<String> = Vec::new();
        if let Some(list) = kv.get("sessions") {
            for p in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                sessions.push(read_descriptor(&base.join(p))?);
                sources.push(p.to_string());
            }
        }
        if kv.get("road_network").is_some() {
            sessions.push(SessionManifest::parse(&kv.to_text(), base).map_err(bad)?);
            for key in kv.keys().filter(|k| is_inline_key(k)) {
                echo.insert(key, kv.get(key).unwrap_or_default());
            }
        }
        for p in &overrides.sessions {
            sessions.push(read_descriptor(p)?);
            sources.push(p.display().to_string());
        }
        if !sources.is_empty() {
            echo.insert("sessions", sources.join(", "));
        }

        let seed = match overrides.seed {
            Some(s) => s,
            None => kv.parsed_or("seed", d.seed).map_err(bad)?,
        };
        let bcp = BcpConfig {
            gamma: kv.parsed_or("bcp.gamma", d.bcp.gamma).map_err(bad)?,
            lambda: kv.parsed_or("bcp.lambda", d.bcp.lambda).map_err(bad)?,
            mcmc_iterations: kv.parsed_or("bcp.iterations", d.bcp.mcmc_iterations).map_err(bad)?,
            burn_in: kv.parsed_or("bcp.burn_in", d.bcp.burn_in).map_err(bad)?,
            seed,
        };
        let fixation_filter = match (
            kv.parsed::<f64>("fixation.max_dispersion").map_err(bad)?,
            kv.parsed::<f64>("fixation.min_duration").map_err(bad)?,
        ) {
            (None, None) => None,
            (a, b) => {
                let f = FixationFilter::default();
                Some(FixationFilter {
                    max_dispersion: a.unwrap_or(f.max_dispersion),
                    min_duration: b.unwrap_or(f.min_duration),
                })
            }
        };
        let entropy = EntropyParams {
            window: overrides
                .window
                .map_or_else(|| kv.parsed_or("entropy.window", d.entropy.window), Ok)
                .map_err(bad)?,
            hop: kv.parsed_or("entropy.hop", d.entropy.hop).map_err(bad)?,
            bin_size: overrides
                .bin_size
                .map_or_else(|| kv.parsed_or("entropy.bin_size", d.entropy.bin_size), Ok)
                .map_err(bad)?,
            min_valid_fraction: kv
                .parsed_or("entropy.min_valid_fraction", d.entropy.min_valid_fraction)
                .map_err(bad)?,
            exclude_self_transitions: kv
                .parsed_or("entropy.exclude_self_transitions", d.entropy.exclude_self_transitions)
                .map_err(bad)?,
            fixation_filter,
        };
        let camera = CameraModel {
            horizontal_fov: kv.parsed_or("camera.horizontal_fov", d.camera.horizontal_fov).map_err(bad)?,
            image_width: kv.parsed_or("camera.width", d.camera.image_width).map_err(bad)?,
            image_height: kv.parsed_or("camera.height", d.camera.image_height).map_err(bad)?,
            projection: d.camera.projection,
        };
        let cfg = Self {
            sessions,
            bcp,
            threshold: overrides
                .threshold
                .map_or_else(|| kv.parsed_or("threshold", d.threshold), Ok)
                .map_err(bad)?,
            min_separation: kv.parsed_or("min_separation", d.min_separation).map_err(bad)?,
            entropy,
            camera,
            tolerance: overrides
                .tolerance
                .map_or_else(|| kv.parsed_or("tolerance", d.tolerance), Ok)
                .map_err(bad)?,
            radius: kv.parsed_or("radius", d.radius).map_err(bad)?,
            max_parse_error_fraction: kv
                .parsed_or("max_parse_error_fraction", d.max_parse_error_fraction)
                .map_err(bad)?,
            out: overrides
                .out
                .clone()
                .or_else(|| kv.get("out").map(|o| base.join(o)))
                .unwrap_or(d.out),
            seed,
            echo,
        };
        cfg.validate()?;
        Ok(cfg.with_echo())
    }

    fn with_echo(mut self) -> Self {
        let e = &mut self.echo;
        e.insert("seed", self.seed.to_string());
        e.insert("threshold", self.threshold.to_string());
        e.insert("min_separation", self.min_separation.to_string());
        e.insert("bcp.gamma", self.bcp.gamma.to_string());
        e.insert("bcp.lambda", self.bcp.lambda.to_string());
        e.insert("bcp.iterations", self.bcp.mcmc_iterations.to_string());
        e.insert("bcp.burn_in", self.bcp.burn_in.to_string());
        e.insert("entropy.window", self.entropy.window.to_string());
        e.insert("entropy.hop", self.entropy.hop.to_string());
        e.insert("entropy.bin_size", self.entropy.bin_size.to_string());
        e.insert("entropy.min_valid_fraction", self.entropy.min_valid_fraction.to_string());
        e.insert(
            "entropy.exclude_self_transitions",
            self.entropy.exclude_self_transitions.to_string(),
        );
        if let Some(f) = &self.entropy.fixation_filter {
            e.insert("fixation.max_dispersion", f.max_dispersion.to_string());
            e.insert("fixation.min_duration", f.min_duration.to_string());
        }
        e.insert("camera.horizontal_fov", self.camera.horizontal_fov.to_string());
        e.insert("camera.width", self.camera.image_width.to_string());
        e.insert("camera.height", self.camera.image_height.to_string());
        e.insert("tolerance", self.tolerance.to_string());
        e.insert("radius", self.radius.to_string());
        e.insert("max_parse_error_fraction", self.max_parse_error_fraction.to_string());
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Input(format!("configuration: {m}")));
        self.bcp.validate().map_err(bad)?;
        self.camera.validate().map_err(bad)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if !(self.entropy.window > 0.0 && self.entropy.hop > 0.0 && self.entropy.bin_size > 0.0) {
            return fail("entropy window, hop and bin size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.entropy.min_valid_fraction) {
            return fail("entropy.min_valid_fraction must lie in [0, 1]".into());
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return fail(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", self.radius));
        }
        if !(0.0..=1.0).contains(&self.max_parse_error_fraction) {
            return fail("max_parse_error_fraction must lie in [0, 1]".into());
        }
        for s in &self.sessions {
            let named = [Some(&s.road_network), s.pose.as_ref(), s.gaze.as_ref(), s.watch.as_ref()];
            for p in named.into_iter().flatten().chain(s.annotations.as_ref()) {
                if !p.exists() {
                    return Err(CliError::Input(format!(
                        "{}: file not found (session {})",
                        p.display(),
                        s.session_id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn is_inline_key(k: &str) -> bool {
    matches!(
        k,
        "session_id"
            | "participant_id"
            | "mode"
            | "road_network"
            | "pose"
            | "gaze"
            | "watch"
            | "annotations"
            | "column_map"
    ) || k.starts_with("offset.")
}

fn read_descriptor(path: &Path) -> Result<SessionManifest, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    SessionManifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
