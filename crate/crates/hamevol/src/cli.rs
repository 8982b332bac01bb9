//! Command-line front end: mode selection, layered configuration
//! (defaults ← config file ← flags), the informational header, and the
//! probability output file.
//!
//! Exit codes are a stable contract: 0 on success, 1 for usage/configuration
//! problems, 2 for numerical failures.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::neutrino::{
    DensityProfile, HamiltonianModel, MassSpectrum, MixingParameters, PhysicsError,
    ResonanceConvention, AVOGADRO, EARTH_CORE_DENSITY, EARTH_CORE_FRACTION, EARTH_MANTLE_DENSITY,
    G_F, M_EV, R_EARTH_M, R_SUN_M, SOLAR_LAMBDA, SOLAR_N0,
};
use crate::propagation::{
    adaptive_scan_streaming, propagate_trajectory, OuterLoopConfig, PropagationError,
    TrajectoryMode, TrajectoryModel, TrajectoryRecord, TrajectorySpec,
};
use crate::rk::StepControl;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot access {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{0}")]
    Numerical(#[from] PropagationError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<PhysicsError> for CliError {
    fn from(e: PhysicsError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandKind {
    Trajectory,
    Scan,
    ResonanceInfo,
}

impl CommandKind {
    fn as_key(&self) -> &'static str {
        match self {
            CommandKind::Trajectory => "trajectory",
            CommandKind::Scan => "scan",
            CommandKind::ResonanceInfo => "resonance-info",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Solar,
    Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "hamevol",
    about = "Neutrino flavor-conversion probabilities along a matter trajectory",
    disable_version_flag = true
)]
struct Args {
    /// Propagation mode: 0 = Sun only, 1 = Sun plus Earth
    #[arg(value_parser = clap::value_parser!(u8).range(0..=1))]
    option: u8,
    /// Flat key = value configuration file ('#' starts a comment)
    #[arg(long)]
    config: Option<PathBuf>,
    /// What to compute
    #[arg(long, value_enum)]
    command: Option<CommandKind>,
    /// Relative accuracy of the inner Runge-Kutta integration
    #[arg(long)]
    eps: Option<f64>,
    /// Probability output file
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write (coordinate, P_e) pairs to this file
    #[arg(long)]
    plot_data: Option<PathBuf>,
    /// Evolve an antineutrino instead of a neutrino
    #[arg(long)]
    antineutrino: bool,
}

/// Fully resolved run configuration; every field has a default, the config
/// file overrides defaults, command-line flags override the file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: TrajectoryMode,
    pub command: CommandKind,
    pub n_flavors: usize,
    pub theta12: f64,
    pub theta13: f64,
    pub theta23: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub mass3: f64,
    /// Beam energy in eV.
    pub energy: f64,
    pub profile: ProfileKind,
    pub n0: f64,
    pub lambda: f64,
    pub sun_radius_m: f64,
    pub earth_radius_m: f64,
    pub earth_core_density: f64,
    pub earth_mantle_density: f64,
    pub earth_core_fraction: f64,
    pub density_table: Option<PathBuf>,
    /// Vacuum gap between Sun surface and Earth, 1/eV.
    pub gap_length: f64,
    /// 1-based flavor index of the initial state (1 = electron).
    pub initial_flavor: usize,
    pub samples: usize,
    pub antineutrino: bool,
    pub control: StepControl,
    pub outer: OuterLoopConfig,
    pub resonance_convention: ResonanceConvention,
    pub output: PathBuf,
    pub plot_data: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: TrajectoryMode::SunOnly,
            command: CommandKind::Trajectory,
            n_flavors: 2,
            theta12: std::f64::consts::FRAC_PI_3,
            theta13: 0.0,
            theta23: 0.0,
            mass1: 1e-2,
            mass2: 1e-1,
            mass3: 0.0,
            energy: 1e9,
            profile: ProfileKind::Solar,
            n0: SOLAR_N0,
            lambda: SOLAR_LAMBDA,
            sun_radius_m: R_SUN_M,
            earth_radius_m: R_EARTH_M,
            earth_core_density: EARTH_CORE_DENSITY,
            earth_mantle_density: EARTH_MANTLE_DENSITY,
            earth_core_fraction: EARTH_CORE_FRACTION,
            density_table: None,
            gap_length: 0.0,
            initial_flavor: 1,
            samples: 200,
            antineutrino: false,
            control: StepControl::default(),
            outer: OuterLoopConfig::default(),
            resonance_convention: ResonanceConvention::AsPrinted,
            output: PathBuf::from("runge.out"),
            plot_data: None,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{value}` as a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{value}` as an integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!(
            "key `{key}`: expected true or false, got `{value}`"
        ))),
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment. Unknown keys are errors.
    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "command" => {
                self.command = match value {
                    "trajectory" => CommandKind::Trajectory,
                    "scan" => CommandKind::Scan,
                    "resonance-info" => CommandKind::ResonanceInfo,
                    _ => {
                        return Err(CliError::Config(format!(
                            "key `command`: unknown command `{value}`"
                        )))
                    }
                }
            }
            "n_flavors" => self.n_flavors = parse_usize(key, value)?,
            "theta12" => self.theta12 = parse_f64(key, value)?,
            "theta13" => self.theta13 = parse_f64(key, value)?,
            "theta23" => self.theta23 = parse_f64(key, value)?,
            "mass1" => self.mass1 = parse_f64(key, value)?,
            "mass2" => self.mass2 = parse_f64(key, value)?,
            "mass3" => self.mass3 = parse_f64(key, value)?,
            "energy" => self.energy = parse_f64(key, value)?,
            "profile" => {
                self.profile = match value {
                    "solar" => ProfileKind::Solar,
                    "table" => ProfileKind::Table,
                    _ => {
                        return Err(CliError::Config(format!(
                            "key `profile`: expected solar or table, got `{value}`"
                        )))
                    }
                }
            }
            "n0" => self.n0 = parse_f64(key, value)?,
            "lambda" => self.lambda = parse_f64(key, value)?,
            "sun_radius_m" => self.sun_radius_m = parse_f64(key, value)?,
            "earth_radius_m" => self.earth_radius_m = parse_f64(key, value)?,
            "earth_core_density" => self.earth_core_density = parse_f64(key, value)?,
            "earth_mantle_density" => self.earth_mantle_density = parse_f64(key, value)?,
            "earth_core_fraction" => self.earth_core_fraction = parse_f64(key, value)?,
            "density_table" => self.density_table = Some(PathBuf::from(value)),
            "gap_length" => self.gap_length = parse_f64(key, value)?,
            "initial_flavor" => self.initial_flavor = parse_usize(key, value)?,
            "samples" => self.samples = parse_usize(key, value)?,
            "antineutrino" => self.antineutrino = parse_bool(key, value)?,
            "eps" => self.control.eps = parse_f64(key, value)?,
            "h1" => self.control.h1 = parse_f64(key, value)?,
            "hmin" => self.control.hmin = parse_f64(key, value)?,
            "maxstp" => self.control.maxstp = parse_usize(key, value)?,
            "safety" => self.control.safety = parse_f64(key, value)?,
            "pgrow" => self.control.pgrow = parse_f64(key, value)?,
            "pshrnk" => self.control.pshrnk = parse_f64(key, value)?,
            "errcon" => self.control.errcon = parse_f64(key, value)?,
            "tiny" => self.control.tiny = parse_f64(key, value)?,
            "max_steps" => self.outer.max_steps = parse_usize(key, value)?,
            "min_steps" => self.outer.min_steps = parse_usize(key, value)?,
            "init_steps" => self.outer.init_steps = parse_usize(key, value)?,
            "decrease" => self.outer.decrease = parse_f64(key, value)?,
            "increase" => self.outer.increase = parse_f64(key, value)?,
            "prob_error" => self.outer.prob_error = parse_f64(key, value)?,
            "var_start" => self.outer.var_start = parse_f64(key, value)?,
            "var_end" => self.outer.var_end = parse_f64(key, value)?,
            "resonance_convention" => {
                self.resonance_convention = match value {
                    "printed" => ResonanceConvention::AsPrinted,
                    "conventional" => ResonanceConvention::Conventional,
                    _ => {
                        return Err(CliError::Config(format!(
                    "key `resonance_convention`: expected printed or conventional, got `{value}`"
                )))
                    }
                }
            }
            "output" => self.output = PathBuf::from(value),
            "plot_data" => self.plot_data = Some(PathBuf::from(value)),
            _ => {
                return Err(CliError::Config(format!(
                    "unknown configuration key `{key}`"
                )))
            }
        }
        Ok(())
    }

    fn apply_config_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        }
        Ok(())
    }

    /// Sun radius in 1/eV.
    pub fn sun_radius(&self) -> f64 {
        self.sun_radius_m * M_EV
    }

    /// Earth radius in 1/eV.
    pub fn earth_radius(&self) -> f64 {
        self.earth_radius_m * M_EV
    }

    fn masses(&self) -> Vec<f64> {
        let all = [self.mass1, self.mass2, self.mass3];
        all[..self.n_flavors].to_vec()
    }

    fn mixing(&self) -> Result<MixingParameters, CliError> {
        Ok(match self.n_flavors {
            2 => MixingParameters::two_flavor(self.theta12)?,
            3 => MixingParameters::three_flavor(self.theta12, self.theta23, self.theta13)?,
            n => {
                return Err(CliError::Config(format!(
                    "n_flavors must be 2 or 3, got {n}"
                )))
            }
        })
    }

    fn sun_profile(&self) -> Result<DensityProfile, CliError> {
        match self.profile {
            ProfileKind::Solar => Ok(DensityProfile::solar(
                self.n0,
                self.lambda,
                self.sun_radius(),
            )?),
            ProfileKind::Table => {
                let path = self.density_table.as_ref().ok_or_else(|| {
                    CliError::Config("profile = table requires density_table = <path>".into())
                })?;
                Ok(DensityProfile::tabulated_from_file(
                    path,
                    self.sun_radius(),
                )?)
            }
        }
    }

    fn sun_model(&self) -> Result<HamiltonianModel, CliError> {
        let spectrum = MassSpectrum::new(self.masses(), self.energy)?;
        if !spectrum.is_relativistic() {
            eprintln!(
                "warning: energy {} eV is below 100x the heaviest mass; the relativistic \
                 approximation degrades",
                self.energy
            );
        }
        Ok(HamiltonianModel::new(
            self.mixing()?,
            spectrum,
            self.sun_profile()?,
            self.antineutrino,
        )?)
    }

    fn earth_model(&self) -> Result<HamiltonianModel, CliError> {
        let profile = DensityProfile::earth_two_layer(
            self.earth_core_density,
            self.earth_mantle_density,
            self.earth_core_fraction,
            self.earth_radius(),
        )?;
        let spectrum = MassSpectrum::new(self.masses(), self.energy)?;
        Ok(HamiltonianModel::new(
            self.mixing()?,
            spectrum,
            profile,
            self.antineutrino,
        )?)
    }

    fn trajectory_model(&self) -> Result<TrajectoryModel, CliError> {
        let sun = self.sun_model()?;
        Ok(match self.mode {
            TrajectoryMode::SunOnly => TrajectoryModel::sun_only(sun),
            TrajectoryMode::SunPlusEarth => TrajectoryModel::with_earth(sun, self.earth_model()?),
        })
    }

    fn trajectory_spec(&self) -> Result<TrajectorySpec, CliError> {
        if self.initial_flavor == 0 || self.initial_flavor > self.n_flavors {
            return Err(CliError::Config(format!(
                "initial_flavor must lie in 1..={}, got {}",
                self.n_flavors, self.initial_flavor
            )));
        }
        let mut spec = match self.mode {
            TrajectoryMode::SunOnly => TrajectorySpec::sun_only(self.sun_radius()),
            TrajectoryMode::SunPlusEarth => {
                TrajectorySpec::sun_plus_earth(self.sun_radius(), 2.0 * self.earth_radius())
            }
        };
        spec.gap = self.gap_length;
        spec.initial_flavor = self.initial_flavor - 1;
        Ok(spec)
    }

    /// The informational header: a status line, then every effective
    /// parameter as a `key = value` line that can be fed back as a config
    /// file, then the fixed physical constants as comments.
    pub fn header(&self) -> String {
        let mut out = String::new();
        let mode_name = match self.mode {
            TrajectoryMode::SunOnly => "Sun",
            TrajectoryMode::SunPlusEarth => "Sun and Earth",
        };
        let _ = writeln!(out, "Starting evolution in the {mode_name}");
        let _ = writeln!(out, "Used parameters:");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("command", self.command.as_key().into());
        kv("n_flavors", self.n_flavors.to_string());
        kv("theta12", fmt_f64(self.theta12));
        kv("theta13", fmt_f64(self.theta13));
        kv("theta23", fmt_f64(self.theta23));
        kv("mass1", fmt_f64(self.mass1));
        kv("mass2", fmt_f64(self.mass2));
        kv("mass3", fmt_f64(self.mass3));
        kv("energy", fmt_f64(self.energy));
        kv(
            "profile",
            match self.profile {
                ProfileKind::Solar => "solar".into(),
                ProfileKind::Table => "table".into(),
            },
        );
        kv("n0", fmt_f64(self.n0));
        kv("lambda", fmt_f64(self.lambda));
        kv("sun_radius_m", fmt_f64(self.sun_radius_m));
        kv("earth_radius_m", fmt_f64(self.earth_radius_m));
        kv("earth_core_density", fmt_f64(self.earth_core_density));
        kv("earth_mantle_density", fmt_f64(self.earth_mantle_density));
        kv("earth_core_fraction", fmt_f64(self.earth_core_fraction));
        if let Some(p) = &self.density_table {
            kv("density_table", p.display().to_string());
        }
        kv("gap_length", fmt_f64(self.gap_length));
        kv("initial_flavor", self.initial_flavor.to_string());
        kv("samples", self.samples.to_string());
        kv("antineutrino", self.antineutrino.to_string());
        kv("eps", fmt_f64(self.control.eps));
        kv("h1", fmt_f64(self.control.h1));
        kv("hmin", fmt_f64(self.control.hmin));
        kv("maxstp", self.control.maxstp.to_string());
        kv("safety", fmt_f64(self.control.safety));
        kv("pgrow", fmt_f64(self.control.pgrow));
        kv("pshrnk", fmt_f64(self.control.pshrnk));
        kv("errcon", fmt_f64(self.control.errcon));
        kv("tiny", fmt_f64(self.control.tiny));
        kv("max_steps", self.outer.max_steps.to_string());
        kv("min_steps", self.outer.min_steps.to_string());
        kv("init_steps", self.outer.init_steps.to_string());
        kv("decrease", fmt_f64(self.outer.decrease));
        kv("increase", fmt_f64(self.outer.increase));
        kv("prob_error", fmt_f64(self.outer.prob_error));
        kv("var_start", fmt_f64(self.outer.var_start));
        kv("var_end", fmt_f64(self.outer.var_end));
        kv(
            "resonance_convention",
            match self.resonance_convention {
                ResonanceConvention::AsPrinted => "printed".into(),
                ResonanceConvention::Conventional => "conventional".into(),
            },
        );
        kv("output", self.output.display().to_string());
        if let Some(p) = &self.plot_data {
            kv("plot_data", p.display().to_string());
        }
        let mode_flag = match self.mode {
            TrajectoryMode::SunOnly => 0,
            TrajectoryMode::SunPlusEarth => 1,
        };
        let _ = writeln!(out, "# mode = {mode_flag} ({mode_name})");
        let _ = writeln!(out, "# gf = {} (1/eV^2)", fmt_f64(G_F));
        let _ = writeln!(out, "# avogadro = {}", fmt_f64(AVOGADRO));
        let _ = writeln!(out, "# m_to_inv_ev = {}", fmt_f64(M_EV));
        let _ = writeln!(out, "# sun_radius = {} (1/eV)", fmt_f64(self.sun_radius()));
        let _ = writeln!(
            out,
            "# earth_radius = {} (1/eV)",
            fmt_f64(self.earth_radius())
        );
        out
    }
}

/// Shortest-exact float formatting, switching to exponent notation away from
/// unit scale so the header stays readable.
fn fmt_f64(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Outcome of argument parsing: a run to execute, or help text to print.
pub enum Parsed {
    Run(Box<RunConfig>),
    Help(String),
}

/// Resolve the command line (and optional config file) into a [`RunConfig`].
pub fn parse_and_validate<I, T>(argv: I) -> Result<Parsed, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) if e.kind() == ErrorKind::DisplayHelp => {
            return Ok(Parsed::Help(e.to_string()));
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };

    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        config.apply_config_file(path)?;
    }
    config.mode = match args.option {
        0 => TrajectoryMode::SunOnly,
        _ => TrajectoryMode::SunPlusEarth,
    };
    if let Some(command) = args.command {
        config.command = command;
    }
    if let Some(eps) = args.eps {
        config.control.eps = eps;
    }
    if let Some(output) = args.output {
        config.output = output;
    }
    if let Some(plot) = args.plot_data {
        config.plot_data = Some(plot);
    }
    if args.antineutrino {
        config.antineutrino = true;
    }
    Ok(Parsed::Run(Box::new(config)))
}

/// Streaming writer for the whitespace-separated record format: a commented
/// column-name header, then one row per record with the coordinate, the
/// probabilities clamped to [0, 1] at six decimal places, and the norm
/// deviation in scientific notation.
struct RecordWriter {
    writer: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

const FLAVOR_NAMES: [&str; 3] = ["P_e", "P_mu", "P_tau"];

impl RecordWriter {
    fn create(path: &Path, coordinate_label: &str, n_flavors: usize) -> Result<Self, CliError> {
        let file = std::fs::File::create(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut writer = std::io::BufWriter::new(file);
        let mut header = format!("# {coordinate_label}");
        for name in FLAVOR_NAMES.iter().take(n_flavors) {
            header.push(' ');
            header.push_str(name);
        }
        header.push_str(" norm_deviation");
        writeln!(writer, "{header}").map_err(|e| CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    fn write(&mut self, record: &TrajectoryRecord) -> Result<(), CliError> {
        let mut row = fmt_f64(record.position_or_var);
        for p in &record.probabilities {
            let _ = write!(row, " {:.6}", p.clamp(0.0, 1.0));
        }
        let _ = write!(row, " {:e}", record.norm_deviation);
        writeln!(self.writer, "{row}").map_err(|e| CliError::Io {
            path: self.path.display().to_string(),
            reason: e.to_string(),
        })
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::Io {
            path: self.path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Write a non-empty record list to `path`.
pub fn write_records(
    records: &[TrajectoryRecord],
    path: &Path,
    coordinate_label: &str,
) -> Result<(), CliError> {
    let n_flavors = match records.first() {
        Some(r) => r.probabilities.len(),
        None => return Err(CliError::Config("no records to write".into())),
    };
    let mut writer = RecordWriter::create(path, coordinate_label, n_flavors)?;
    for record in records {
        writer.write(record)?;
    }
    writer.finish()
}

fn write_plot_data(records: &[TrajectoryRecord], path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut writer = std::io::BufWriter::new(file);
    for r in records {
        let p_e = r
            .probabilities
            .first()
            .copied()
            .unwrap_or(0.0)
            .clamp(0.0, 1.0);
        writeln!(writer, "{} {:.6}", fmt_f64(r.position_or_var), p_e).map_err(|e| {
            CliError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            }
        })?;
    }
    writer.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn run_trajectory(config: &RunConfig) -> Result<(), CliError> {
    let model = config.trajectory_model()?;
    let spec = config.trajectory_spec()?;
    let records = propagate_trajectory(&model, &spec, &config.control, config.samples)?;
    // Output coordinates in solar-radius fractions.
    let scaled: Vec<TrajectoryRecord> = records
        .iter()
        .map(|r| TrajectoryRecord {
            position_or_var: r.position_or_var / config.sun_radius(),
            probabilities: r.probabilities.clone(),
            norm_deviation: r.norm_deviation,
        })
        .collect();
    write_records(&scaled, &config.output, "r/Rsun")?;
    if let Some(plot) = &config.plot_data {
        write_plot_data(&scaled, plot)?;
    }
    println!(
        "wrote {} records to {}",
        scaled.len(),
        config.output.display()
    );
    Ok(())
}

fn run_scan(config: &RunConfig) -> Result<(), CliError> {
    // The scan walks Var = log10(dm^2 / (2E) in eV) with a two-flavor model.
    let spec = {
        let mut spec = match config.mode {
            TrajectoryMode::SunOnly => TrajectorySpec::sun_only(config.sun_radius()),
            TrajectoryMode::SunPlusEarth => {
                TrajectorySpec::sun_plus_earth(config.sun_radius(), 2.0 * config.earth_radius())
            }
        };
        spec.gap = config.gap_length;
        spec
    };
    let theta12 = config.theta12;
    let energy = config.energy;
    let sun_profile = config.sun_profile()?;
    let earth_model = match config.mode {
        TrajectoryMode::SunPlusEarth => Some(config.earth_model()?),
        TrajectoryMode::SunOnly => None,
    };
    let antineutrino = config.antineutrino;
    let factory = move |var: f64| {
        let splitting = 10f64.powf(var);
        let m2 = (2.0 * energy * splitting).sqrt();
        let mixing = MixingParameters::two_flavor(theta12).expect("validated theta12");
        let spectrum = MassSpectrum::new(vec![0.0, m2], energy).expect("validated energy");
        let sun = HamiltonianModel::new(mixing, spectrum, sun_profile.clone(), antineutrino)
            .expect("validated model");
        TrajectoryModel {
            sun,
            earth: earth_model.clone(),
        }
    };
    // Validate the angle once up front; the factory itself is total.
    let _ = MixingParameters::two_flavor(theta12)?;

    let mut writer = RecordWriter::create(&config.output, "Var", 2)?;
    let mut plot_records = Vec::new();
    let keep_plot = config.plot_data.is_some();
    let mut write_error = None;
    let mut count = 0usize;
    let result =
        adaptive_scan_streaming(factory, &spec, &config.outer, &config.control, |record| {
            count += 1;
            if keep_plot {
                plot_records.push(record.clone());
            }
            if write_error.is_none() {
                if let Err(e) = writer.write(record) {
                    write_error = Some(e);
                }
            }
        });
    writer.finish()?;
    if let Some(e) = write_error {
        return Err(e);
    }
    result?;
    if let Some(plot) = &config.plot_data {
        write_plot_data(&plot_records, plot)?;
    }
    println!("wrote {count} records to {}", config.output.display());
    Ok(())
}

fn run_resonance_info(config: &RunConfig) -> Result<(), CliError> {
    let model = config.sun_model()?;
    let convention_name = match config.resonance_convention {
        ResonanceConvention::AsPrinted => "printed",
        ResonanceConvention::Conventional => "conventional",
    };
    match model.resonance_position(config.resonance_convention) {
        Some(r) => {
            println!(
                "resonance position ({convention_name} form): r = {:e} 1/eV (r/R = {:.6})",
                r,
                r / config.sun_radius()
            );
        }
        None => println!("no resonance ({convention_name} form)"),
    }
    Ok(())
}

/// Print the header, execute the selected command, report the elapsed time.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    print!("{}", config.header());
    match config.command {
        CommandKind::Trajectory => run_trajectory(config)?,
        CommandKind::Scan => run_scan(config)?,
        CommandKind::ResonanceInfo => run_resonance_info(config)?,
    }
    println!("t={:.3}", started.elapsed().as_secs_f64());
    Ok(())
}

/// Whole-program entry point used by the binary: returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_and_validate(argv) {
        Ok(Parsed::Run(config)) => config,
        Ok(Parsed::Help(text)) => {
            println!("{text}");
            return 0;
        }
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
