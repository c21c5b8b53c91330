//! Scenario configuration, seeded sampling and result persistence.
//!
//! # File format
//!
//! A scenario is a flat key-value text file: one `key = value` per line,
//! `#` starts a comment, blank lines are ignored. dB-valued quantities are
//! accepted in the units they are usually quoted in (`beta_db`,
//! `n0_dbm_per_hz`) and converted to linear/W at load time; the linear keys
//! (`beta_linear`, `n0_w_per_hz`) are accepted too and are what
//! [`format_scenario`] emits, so a written file reloads to the exact same
//! spec.
//!
//! # Reproducibility
//!
//! All sampling uses ChaCha8 seeded with the scenario seed; run `r` reads
//! stream `r` of that generator, so runs are independent and any run can be
//! regenerated in isolation. Per device the draw order is: distance, task
//! size, cycles per bit, idle power.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::power::CircuitPowerModel;
use crate::radio;

/// Which circuit-power model the experiment runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerModelKind {
    /// Measured transmit-chain coefficients and the sampled idle power.
    Practical,
    /// Circuit electronics are free: `P_c = P_RF = P_BB = P_on = 0`.
    Unrealistic,
}

impl PowerModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PowerModelKind::Practical => "practical",
            PowerModelKind::Unrealistic => "unrealistic",
        }
    }
}

/// Global network constants shared by all devices.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Per-device uplink bandwidth B [Hz].
    pub bandwidth_hz: f64,
    /// Noise spectral density N0 [W/Hz].
    pub noise_density_w_per_hz: f64,
    /// Path-loss coefficient at the 1 km reference distance (linear scale).
    pub pathloss_beta: f64,
    /// Path-loss exponent.
    pub pathloss_alpha: f64,
    /// Fog-node CPU capacity shared by all devices [cycle/s].
    pub cpu_cap_hz: f64,
    /// CPU energy coefficient lambda [J s^2 / cycle^3].
    pub cpu_energy_lambda: f64,
    /// Circuit-power model switch.
    pub power_model: PowerModelKind,
    /// Number of devices K.
    pub device_count: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("n0_w_per_hz", self.noise_density_w_per_hz),
            ("beta_linear", self.pathloss_beta),
            ("alpha", self.pathloss_alpha),
            ("cpu_cap_hz", self.cpu_cap_hz),
            ("lambda", self.cpu_energy_lambda),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ScenarioError::Validation {
                    field: name.to_string(),
                    message: format!("must be a positive finite number, got {v}"),
                });
            }
        }
        if self.device_count == 0 {
            return Err(ScenarioError::Validation {
                field: "device_count".to_string(),
                message: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }

    /// Circuit-power coefficients for the configured model.
    pub fn circuit_model(&self) -> CircuitPowerModel {
        match self.power_model {
            PowerModelKind::Practical => CircuitPowerModel::practical(),
            PowerModelKind::Unrealistic => CircuitPowerModel::unrealistic(),
        }
    }

    /// Idle power that actually enters the energy model for `device`.
    ///
    /// The unrealistic model forces `P_on = 0` downstream while leaving the
    /// sampled value (and hence the RNG stream) untouched.
    pub fn effective_idle_power_w(&self, device: &Device) -> f64 {
        match self.power_model {
            PowerModelKind::Practical => device.idle_power_w,
            PowerModelKind::Unrealistic => 0.0,
        }
    }

    /// Noise floor over the device bandwidth, `B * N0` [W].
    pub fn noise_floor_w(&self) -> f64 {
        self.bandwidth_hz * self.noise_density_w_per_hz
    }
}

/// One IoT node: position, task and power limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    /// Distance to the base station [km].
    pub distance_km: f64,
    /// Task size D [bit].
    pub task_bits: f64,
    /// CPU cycles per bit C.
    pub cycles_per_bit: f64,
    /// Transmit power cap [W].
    pub max_power_w: f64,
    /// Idle (keep-alive) power [W].
    pub idle_power_w: f64,
    /// Large-scale channel gain, derived from the distance.
    pub gain: f64,
}

impl Device {
    pub fn new(
        distance_km: f64,
        task_bits: f64,
        cycles_per_bit: f64,
        max_power_w: f64,
        idle_power_w: f64,
        cfg: &NetworkConfig,
    ) -> Result<Self, ScenarioError> {
        let checks = [
            ("distance_km", distance_km),
            ("task_bits", task_bits),
            ("cycles_per_bit", cycles_per_bit),
            ("max_power_w", max_power_w),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ScenarioError::Validation {
                    field: name.to_string(),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if idle_power_w < 0.0 || !idle_power_w.is_finite() {
            return Err(ScenarioError::Validation {
                field: "idle_power_w".to_string(),
                message: format!("must be nonnegative, got {idle_power_w}"),
            });
        }
        let gain = radio::pathloss_gain(distance_km, cfg).map_err(|e| ScenarioError::Validation {
            field: "distance_km".to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            distance_km,
            task_bits,
            cycles_per_bit,
            max_power_w,
            idle_power_w,
            gain,
        })
    }

    /// Total CPU cycles of the task, `C * D`.
    pub fn task_cycles(&self) -> f64 {
        self.cycles_per_bit * self.task_bits
    }
}

/// Everything needed to generate experiment instances deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub network: NetworkConfig,
    /// Cell radius [km]; devices are placed uniformly over the disk.
    pub cell_radius_km: f64,
    /// Task size range [bit].
    pub task_bits_range: (f64, f64),
    /// Cycles-per-bit range.
    pub cycles_range: (f64, f64),
    /// Idle power range [W].
    pub idle_power_range: (f64, f64),
    /// Per-device transmit power cap [W], common to all devices.
    pub max_power_w: f64,
    /// Master seed for all sampling.
    pub seed: u64,
    /// Number of Monte-Carlo runs.
    pub runs: u32,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.network.validate()?;
        if !(self.cell_radius_km > 0.0) {
            return Err(ScenarioError::Validation {
                field: "cell_radius_km".to_string(),
                message: "must be positive".to_string(),
            });
        }
        if !(self.max_power_w > 0.0) {
            return Err(ScenarioError::Validation {
                field: "max_power_w".to_string(),
                message: "must be positive".to_string(),
            });
        }
        let ranges = [
            ("task_bits", self.task_bits_range),
            ("cycles_per_bit", self.cycles_range),
            ("idle_power_w", self.idle_power_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(ScenarioError::Validation {
                    field: format!("{name}_lo/{name}_hi"),
                    message: format!("range [{lo}, {hi}] must satisfy lo <= hi"),
                });
            }
            if lo <= 0.0 && name != "idle_power_w" {
                return Err(ScenarioError::Validation {
                    field: format!("{name}_lo"),
                    message: "must be positive".to_string(),
                });
            }
            if lo < 0.0 {
                return Err(ScenarioError::Validation {
                    field: format!("{name}_lo"),
                    message: "must be nonnegative".to_string(),
                });
            }
        }
        if self.runs == 0 {
            return Err(ScenarioError::Validation {
                field: "runs".to_string(),
                message: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: field `{field}` {message}")]
    Validation { field: String, message: String },
    #[error("missing required field `{field}`")]
    MissingField { field: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run index {run_index} out of range (runs = {runs})")]
    RunOutOfRange { run_index: u32, runs: u32 },
    #[error("no rows to write")]
    EmptyRows,
}

/// dB to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to W.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct KvFile {
    entries: Vec<(String, String, usize)>, // key, value, line number
}

impl KvFile {
    fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() || value.is_empty() {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: "empty key or value".to_string(),
                });
            }
            if entries.iter().any(|(k, _, _)| k == key) {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.push((key.to_string(), value.to_string(), line_no));
        }
        Ok(Self { entries })
    }

    fn take(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn f64_of(&self, key: &str) -> Result<Option<f64>, ScenarioError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<f64>().map(Some).map_err(|_| ScenarioError::Parse {
                line,
                message: format!("`{key}` is not a number: `{v}`"),
            }),
        }
    }

    fn required_f64(&self, key: &str) -> Result<f64, ScenarioError> {
        self.f64_of(key)?.ok_or_else(|| ScenarioError::MissingField {
            field: key.to_string(),
        })
    }
}

/// Parse a scenario from its text form. See the module docs for the format.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let kv = KvFile::parse(text)?;

    // dB and linear spellings are both accepted, but not simultaneously.
    let beta = match (kv.f64_of("beta_db")?, kv.f64_of("beta_linear")?) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Validation {
                field: "beta_db".to_string(),
                message: "given together with beta_linear; use one".to_string(),
            })
        }
        (Some(db), None) => db_to_linear(db),
        (None, Some(lin)) => lin,
        (None, None) => {
            return Err(ScenarioError::MissingField {
                field: "beta_db".to_string(),
            })
        }
    };
    let n0 = match (kv.f64_of("n0_dbm_per_hz")?, kv.f64_of("n0_w_per_hz")?) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Validation {
                field: "n0_dbm_per_hz".to_string(),
                message: "given together with n0_w_per_hz; use one".to_string(),
            })
        }
        (Some(dbm), None) => dbm_to_w(dbm),
        (None, Some(w)) => w,
        (None, None) => {
            return Err(ScenarioError::MissingField {
                field: "n0_dbm_per_hz".to_string(),
            })
        }
    };

    let power_model = match kv.take("power_model") {
        None => PowerModelKind::Practical,
        Some(("practical", _)) => PowerModelKind::Practical,
        Some(("unrealistic", _)) => PowerModelKind::Unrealistic,
        Some((other, line)) => {
            return Err(ScenarioError::Parse {
                line,
                message: format!("power_model must be `practical` or `unrealistic`, got `{other}`"),
            })
        }
    };

    let device_count = kv.required_f64("device_count")?;
    if device_count.fract() != 0.0 || device_count < 1.0 {
        return Err(ScenarioError::Validation {
            field: "device_count".to_string(),
            message: format!("must be a positive integer, got {device_count}"),
        });
    }
    let seed = kv.required_f64("seed")?;
    if seed.fract() != 0.0 || seed < 0.0 {
        return Err(ScenarioError::Validation {
            field: "seed".to_string(),
            message: "must be a nonnegative integer".to_string(),
        });
    }
    let runs = kv.required_f64("runs")?;
    if runs.fract() != 0.0 || runs < 1.0 {
        return Err(ScenarioError::Validation {
            field: "runs".to_string(),
            message: "must be a positive integer".to_string(),
        });
    }

    let spec = ScenarioSpec {
        network: NetworkConfig {
            bandwidth_hz: kv.required_f64("bandwidth_hz")?,
            noise_density_w_per_hz: n0,
            pathloss_beta: beta,
            pathloss_alpha: kv.required_f64("alpha")?,
            cpu_cap_hz: kv.required_f64("cpu_cap_hz")?,
            cpu_energy_lambda: kv.required_f64("lambda")?,
            power_model,
            device_count: device_count as usize,
        },
        cell_radius_km: kv.required_f64("cell_radius_km")?,
        task_bits_range: (kv.required_f64("task_bits_lo")?, kv.required_f64("task_bits_hi")?),
        cycles_range: (
            kv.required_f64("cycles_per_bit_lo")?,
            kv.required_f64("cycles_per_bit_hi")?,
        ),
        idle_power_range: (
            kv.required_f64("idle_power_w_lo")?,
            kv.required_f64("idle_power_w_hi")?,
        ),
        max_power_w: kv.required_f64("max_power_w")?,
        seed: seed as u64,
        runs: runs as u32,
    };
    spec.validate()?;
    Ok(spec)
}

/// Load and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

/// Render a spec in the scenario file format.
///
/// Numbers print with Rust's shortest round-trip representation and the
/// linear keys are used, so `parse_scenario(format_scenario(s)) == s` exactly.
pub fn format_scenario(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    let n = &spec.network;
    let _ = writeln!(out, "# network");
    let _ = writeln!(out, "bandwidth_hz = {}", n.bandwidth_hz);
    let _ = writeln!(out, "n0_w_per_hz = {}", n.noise_density_w_per_hz);
    let _ = writeln!(out, "beta_linear = {}", n.pathloss_beta);
    let _ = writeln!(out, "alpha = {}", n.pathloss_alpha);
    let _ = writeln!(out, "cpu_cap_hz = {}", n.cpu_cap_hz);
    let _ = writeln!(out, "lambda = {}", n.cpu_energy_lambda);
    let _ = writeln!(out, "power_model = {}", n.power_model.as_str());
    let _ = writeln!(out, "device_count = {}", n.device_count);
    let _ = writeln!(out, "# sampling");
    let _ = writeln!(out, "cell_radius_km = {}", spec.cell_radius_km);
    let _ = writeln!(out, "task_bits_lo = {}", spec.task_bits_range.0);
    let _ = writeln!(out, "task_bits_hi = {}", spec.task_bits_range.1);
    let _ = writeln!(out, "cycles_per_bit_lo = {}", spec.cycles_range.0);
    let _ = writeln!(out, "cycles_per_bit_hi = {}", spec.cycles_range.1);
    let _ = writeln!(out, "idle_power_w_lo = {}", spec.idle_power_range.0);
    let _ = writeln!(out, "idle_power_w_hi = {}", spec.idle_power_range.1);
    let _ = writeln!(out, "max_power_w = {}", spec.max_power_w);
    let _ = writeln!(out, "seed = {}", spec.seed);
    let _ = writeln!(out, "runs = {}", spec.runs);
    out
}

/// Write a spec to disk in the scenario file format.
pub fn write_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, format_scenario(spec)).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    // collapses to `lo` exactly when lo == hi
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draw the `run_index`-th device population of the scenario.
///
/// Distances are uniform over the disk area (`r = R * sqrt(u)` with
/// `u in (0, 1]`, so `r in (0, R]`); task size, cycles per bit and idle
/// power are uniform in their configured ranges. Deterministic given
/// `(spec.seed, run_index)`.
pub fn sample_devices(spec: &ScenarioSpec, run_index: u32) -> Result<Vec<Device>, ScenarioError> {
    if run_index >= spec.runs {
        return Err(ScenarioError::RunOutOfRange {
            run_index,
            runs: spec.runs,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run_index as u64);
    let mut devices = Vec::with_capacity(spec.network.device_count);
    for _ in 0..spec.network.device_count {
        let u: f64 = 1.0 - rng.random::<f64>(); // in (0, 1]
        let distance = spec.cell_radius_km * u.sqrt();
        let task_bits = uniform_in(&mut rng, spec.task_bits_range.0, spec.task_bits_range.1);
        let cycles = uniform_in(&mut rng, spec.cycles_range.0, spec.cycles_range.1);
        let idle = uniform_in(&mut rng, spec.idle_power_range.0, spec.idle_power_range.1);
        devices.push(Device::new(
            distance,
            task_bits,
            cycles,
            spec.max_power_w,
            idle,
            &spec.network,
        )?);
    }
    Ok(devices)
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Fixed-width scientific format with 9 significant digits, the CSV contract.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn opt_sig9(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

/// One row type per CSV-producing command.
pub trait CsvRecord {
    fn header() -> &'static str;
    fn to_line(&self) -> String;
}

/// Row of a Pareto boundary sweep; values are averages over devices and runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub eta: f64,
    pub t_s: f64,
    pub e_j: f64,
    pub f_hz: f64,
    pub p_w: f64,
    pub y: f64,
}

impl CsvRecord for ParetoPoint {
    fn header() -> &'static str {
        "eta,t_s,e_j,f_hz,p_w,y"
    }
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            sig9(self.eta),
            sig9(self.t_s),
            sig9(self.e_j),
            sig9(self.f_hz),
            sig9(self.p_w),
            sig9(self.y)
        )
    }
}

/// Row of the CPU-capacity sweep: equilibrium means next to the equal-share
/// baseline means.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fmax_hz: f64,
    pub eta: f64,
    pub t_s: f64,
    pub e_j: f64,
    pub baseline_t_s: f64,
    pub baseline_e_j: f64,
}

impl CsvRecord for SweepRow {
    fn header() -> &'static str {
        "fmax_hz,eta,t_s,e_j,baseline_t_s,baseline_e_j"
    }
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            sig9(self.fmax_hz),
            sig9(self.eta),
            sig9(self.t_s),
            sig9(self.e_j),
            sig9(self.baseline_t_s),
            sig9(self.baseline_e_j)
        )
    }
}

/// Per-device equilibrium row; each run closes with a `summary` row carrying
/// the product utility and the BCD iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumRow {
    pub run: u32,
    pub eta: f64,
    /// Device index, or `None` for the per-run summary row.
    pub device: Option<usize>,
    pub f_hz: Option<f64>,
    pub p_w: Option<f64>,
    pub y: Option<f64>,
    pub t_s: Option<f64>,
    pub e_j: Option<f64>,
    pub product_utility: Option<f64>,
    pub iterations: Option<u32>,
}

impl CsvRecord for EquilibriumRow {
    fn header() -> &'static str {
        "run,eta,k,f_hz,p_w,y,t_s,e_j,product_utility,iterations"
    }
    fn to_line(&self) -> String {
        let k = match self.device {
            Some(i) => i.to_string(),
            None => "summary".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.run,
            sig9(self.eta),
            k,
            opt_sig9(self.f_hz),
            opt_sig9(self.p_w),
            opt_sig9(self.y),
            opt_sig9(self.t_s),
            opt_sig9(self.e_j),
            opt_sig9(self.product_utility),
            self.iterations.map(|i| i.to_string()).unwrap_or_default()
        )
    }
}

/// Per-device equal-share baseline row.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub run: u32,
    pub device: usize,
    pub f_hz: f64,
    pub p_w: f64,
    pub t_s: f64,
    pub e_j: f64,
}

impl CsvRecord for BaselineRow {
    fn header() -> &'static str {
        "run,k,f_hz,p_w,t_s,e_j"
    }
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.run,
            self.device,
            sig9(self.f_hz),
            sig9(self.p_w),
            sig9(self.t_s),
            sig9(self.e_j)
        )
    }
}

/// Render rows to the CSV text form (UTF-8, `,` separator, `.` decimals).
pub fn format_results<R: CsvRecord>(rows: &[R]) -> Result<String, ScenarioError> {
    if rows.is_empty() {
        return Err(ScenarioError::EmptyRows);
    }
    let mut out = String::with_capacity(rows.len() * 64);
    out.push_str(R::header());
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    Ok(out)
}

/// Write rows as CSV, atomically: a temp file in the target directory is
/// populated first and then renamed over `path`.
pub fn write_results<R: CsvRecord>(rows: &[R], path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let text = format_results(rows)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
        )),
        None => PathBuf::from(format!(".{}.tmp", path.display())),
    };
    let io_err = |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(text.as_bytes()).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}
