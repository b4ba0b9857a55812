//! Run configuration: a TOML file with nested sections for the video,
//! the two bandwidth hops, QoE and cost parameters, both policies and the
//! sweep. Defaults follow the bundled experiment setups; `validate`
//! mirrors the library's invariants with file-level diagnostics.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use edgedash_core::bandwidth::{
    load_trace, generate_markov_timeline, BandwidthTimeline, MarkovBandwidthModel, TraceSource,
};
use edgedash_core::baseline::BaselineConfig;
use edgedash_core::qoe::{CostParams, QoeParams};
use edgedash_core::scheduler::SchedulerConfig;
use edgedash_core::simcore::{SweepParameter, VideoManifest};
use edgedash_core::units::{Rate, TimeNs, Volume};
use edgedash_core::{Result, SimError};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub run: RunSection,
    pub video: VideoSection,
    pub core: HopSection,
    pub edge: HopSection,
    #[serde(default)]
    pub qoe: QoeSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_policy() -> String {
    "both".into()
}

fn default_repetitions() -> usize {
    5
}

fn default_out_dir() -> String {
    "results".into()
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            policy: default_policy(),
            repetitions: default_repetitions(),
            seed: 0,
            out_dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoSection {
    pub duration_s: f64,
    #[serde(default = "default_segment_s")]
    pub segment_s: f64,
    pub ladder_kbps: Vec<i64>,
}

fn default_segment_s() -> f64 {
    2.0
}

impl Default for VideoSection {
    fn default() -> Self {
        VideoSection {
            duration_s: 300.0,
            segment_s: 2.0,
            ladder_kbps: vec![100, 400, 1000],
        }
    }
}

/// Exactly one bandwidth source per hop.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopSection {
    pub source: String,
    #[serde(default)]
    pub markov: Option<MarkovSection>,
    #[serde(default)]
    pub trace: Option<TraceSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSection {
    pub transition: Vec<Vec<f64>>,
    pub rates_kbps: Vec<i64>,
    #[serde(default = "default_dwell_s")]
    pub dwell_s: f64,
    #[serde(default)]
    pub initial_state: Option<usize>,
}

fn default_dwell_s() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub path: String,
    #[serde(default = "default_quantization_s")]
    pub quantization_s: f64,
}

fn default_quantization_s() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QoeSection {
    pub alpha: f64,
    pub beta: f64,
    pub eta_up: f64,
    pub gamma_down: f64,
    pub memory_window: usize,
}

impl Default for QoeSection {
    fn default() -> Self {
        let p = QoeParams::default();
        QoeSection {
            alpha: p.alpha,
            beta: p.beta,
            eta_up: p.eta_up,
            gamma_down: p.gamma_down,
            memory_window: p.memory_window,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub enabled: bool,
    pub bandwidth_price: f64,
    pub storage_price: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub window_s: f64,
    pub holdback_s: f64,
    pub prune_floor: bool,
    pub max_downswitches: Option<u32>,
    pub cache_cap_kbit: Option<i64>,
    pub force_first_min: bool,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        SchedulerSection {
            window_s: 10.0,
            holdback_s: 4.0,
            prune_floor: true,
            max_downswitches: None,
            cache_cap_kbit: None,
            force_first_min: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub history_k: usize,
    pub safety_factor: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            history_k: 5,
            safety_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// `buffer_size`, `window_size` or `none`.
    pub parameter: String,
    pub values_s: Vec<f64>,
    /// Client buffer when the sweep does not vary it.
    pub buffer_s: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            parameter: "none".into(),
            values_s: vec![],
            buffer_s: 20.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub runs_csv: String,
    pub summary_csv: String,
    /// Empty string disables the per-segment log.
    pub per_segment_csv: String,
    pub emit_timelines: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            runs_csv: "runs.csv".into(),
            summary_csv: "summary.csv".into(),
            per_segment_csv: String::new(),
            emit_timelines: false,
        }
    }
}

/// Which policies a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Anticipative,
    Baseline,
    Both,
}

impl PolicyChoice {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "anticipative" => Ok(PolicyChoice::Anticipative),
            "baseline" => Ok(PolicyChoice::Baseline),
            "both" => Ok(PolicyChoice::Both),
            other => Err(SimError::Config(format!(
                "unknown policy '{other}' (expected anticipative | baseline | both)"
            ))),
        }
    }
}

/// One hop's bandwidth source, resolved and validated.
#[derive(Debug, Clone)]
pub enum HopSource {
    Markov(MarkovBandwidthModel),
    Trace {
        source: TraceSource,
        quantization: TimeNs,
    },
}

impl HopSource {
    /// Realizes this hop for one seed, covering at least `horizon`.
    /// Markov hops draw their chain from the seed; trace hops replay the
    /// fixed quantized recording.
    pub fn realize(&self, seed: u64, horizon: TimeNs) -> Result<BandwidthTimeline> {
        match self {
            HopSource::Markov(model) => {
                let mut m = model.clone();
                m.seed = seed;
                generate_markov_timeline(&m, horizon)
            }
            HopSource::Trace {
                source,
                quantization,
            } => {
                let tl = load_trace(source, *quantization)?;
                if tl.horizon() < horizon {
                    return Err(SimError::Horizon(format!(
                        "trace '{}' covers {} but the session needs {horizon}",
                        source.origin,
                        tl.horizon()
                    )));
                }
                Ok(tl)
            }
        }
    }
}

/// Fully resolved, validated run configuration.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub policy: PolicyChoice,
    pub repetitions: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub manifest: VideoManifest,
    pub core: HopSource,
    pub edge: HopSource,
    pub scheduler: SchedulerConfig,
    pub baseline: BaselineConfig,
    pub sweep_parameter: Option<SweepParameter>,
    pub sweep_values: Vec<TimeNs>,
    pub fixed_buffer: TimeNs,
    pub output: OutputSection,
}

fn resolve_hop(section: &HopSection, name: &str, config_dir: &Path) -> Result<HopSource> {
    match section.source.as_str() {
        "markov" => {
            let m = section.markov.as_ref().ok_or_else(|| {
                SimError::Config(format!("[{name}] source = \"markov\" needs a [{name}.markov] table"))
            })?;
            if section.trace.is_some() {
                return Err(SimError::Config(format!(
                    "[{name}] declares both markov and trace tables; exactly one source per hop"
                )));
            }
            let mut model = MarkovBandwidthModel::new(
                m.transition.clone(),
                m.rates_kbps.iter().map(|&k| Rate::from_kbps(k)).collect(),
                0,
            )
            .with_dwell(TimeNs::from_secs_f64(m.dwell_s));
            if let Some(init) = m.initial_state {
                model = model.with_initial_state(init);
            }
            model
                .validate()
                .map_err(|e| SimError::Config(format!("[{name}.markov] {e}")))?;
            Ok(HopSource::Markov(model))
        }
        "trace" => {
            let t = section.trace.as_ref().ok_or_else(|| {
                SimError::Config(format!("[{name}] source = \"trace\" needs a [{name}.trace] table"))
            })?;
            if section.markov.is_some() {
                return Err(SimError::Config(format!(
                    "[{name}] declares both markov and trace tables; exactly one source per hop"
                )));
            }
            let path = config_dir.join(&t.path);
            let source = TraceSource::from_csv_path(&path)?;
            let quantization = TimeNs::from_secs_f64(t.quantization_s);
            // quantize once up front so malformed traces fail at validation
            load_trace(&source, quantization)?;
            Ok(HopSource::Trace {
                source,
                quantization,
            })
        }
        other => Err(SimError::Config(format!(
            "[{name}] unknown source '{other}' (expected markov | trace)"
        ))),
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    /// Validates every section and resolves sources, paths and units.
    /// `config_dir` anchors relative trace paths.
    pub fn resolve(&self, config_dir: &Path) -> Result<ResolvedConfig> {
        let policy = PolicyChoice::parse(&self.run.policy)?;
        if self.run.repetitions < 1 {
            return Err(SimError::Config("[run] repetitions must be >= 1".into()));
        }

        let segment = TimeNs::from_secs_f64(self.video.segment_s);
        if segment <= TimeNs::ZERO {
            return Err(SimError::Config("[video] segment_s must be positive".into()));
        }
        let duration = TimeNs::from_secs_f64(self.video.duration_s);
        let count = duration.as_nanos() / segment.as_nanos();
        if count < 1 || segment * { count } != duration {
            return Err(SimError::Config(format!(
                "[video] duration_s {} is not a positive multiple of segment_s {}",
                self.video.duration_s, self.video.segment_s
            )));
        }
        let manifest = VideoManifest::new(
            count as usize,
            segment,
            self.video
                .ladder_kbps
                .iter()
                .map(|&k| Rate::from_kbps(k))
                .collect(),
        )
        .map_err(|e| SimError::Config(format!("[video] {e}")))?;

        let core = resolve_hop(&self.core, "core", config_dir)?;
        let edge = resolve_hop(&self.edge, "edge", config_dir)?;

        let qoe = QoeParams {
            alpha: self.qoe.alpha,
            beta: self.qoe.beta,
            eta_up: self.qoe.eta_up,
            gamma_down: self.qoe.gamma_down,
            memory_window: self.qoe.memory_window,
        };
        qoe.validate().map_err(|e| SimError::Config(format!("[qoe] {e}")))?;
        let cost = CostParams {
            bandwidth_price: self.cost.bandwidth_price,
            storage_price: self.cost.storage_price,
            enabled: self.cost.enabled,
        };
        cost.validate()
            .map_err(|e| SimError::Config(format!("[cost] {e}")))?;

        let scheduler = SchedulerConfig {
            window: TimeNs::from_secs_f64(self.scheduler.window_s),
            interleave_holdback: TimeNs::from_secs_f64(self.scheduler.holdback_s),
            max_downswitches: self.scheduler.max_downswitches,
            prune_floor: self.scheduler.prune_floor,
            cache_cap: self.scheduler.cache_cap_kbit.map(Volume::from_kbits),
            force_first_min: self.scheduler.force_first_min,
            qoe,
            cost,
        };
        scheduler
            .validate()
            .map_err(|e| SimError::Config(format!("[scheduler] {e}")))?;

        let baseline = BaselineConfig {
            history_k: self.baseline.history_k,
            buffer_limit: TimeNs::from_secs_f64(self.sweep.buffer_s),
            safety_factor: self.baseline.safety_factor,
        };
        baseline
            .validate()
            .map_err(|e| SimError::Config(format!("[baseline] {e}")))?;

        let sweep_parameter = match self.sweep.parameter.as_str() {
            "buffer_size" => Some(SweepParameter::BufferSize),
            "window_size" => Some(SweepParameter::WindowSize),
            "none" => None,
            other => {
                return Err(SimError::Config(format!(
                    "[sweep] unknown parameter '{other}' (expected buffer_size | window_size | none)"
                )))
            }
        };
        let sweep_values: Vec<TimeNs> = self
            .sweep
            .values_s
            .iter()
            .map(|&v| TimeNs::from_secs_f64(v))
            .collect();
        if sweep_parameter.is_some() && sweep_values.is_empty() {
            return Err(SimError::Config(
                "[sweep] a swept parameter needs at least one value in values_s".into(),
            ));
        }
        let fixed_buffer = TimeNs::from_secs_f64(self.sweep.buffer_s);
        if fixed_buffer < manifest.segment_duration {
            return Err(SimError::Config(format!(
                "[sweep] buffer_s {} cannot hold one {}s segment",
                self.sweep.buffer_s, self.video.segment_s
            )));
        }
        for v in &sweep_values {
            let ok = match sweep_parameter {
                Some(SweepParameter::BufferSize) => *v >= manifest.segment_duration,
                Some(SweepParameter::WindowSize) => *v > TimeNs::ZERO,
                None => true,
            };
            if !ok {
                return Err(SimError::Config(format!(
                    "[sweep] value {}s out of range for {}",
                    v.as_secs_f64(),
                    self.sweep.parameter
                )));
            }
        }

        Ok(ResolvedConfig {
            policy,
            repetitions: self.run.repetitions,
            seed: self.run.seed,
            out_dir: PathBuf::from(&self.run.out_dir),
            manifest,
            core,
            edge,
            scheduler,
            baseline,
            sweep_parameter,
            sweep_values,
            fixed_buffer,
            output: self.output.clone(),
        })
    }
}

/// Human-readable dump of the effective configuration, defaults applied.
pub fn describe(config: &ResolvedConfig) -> String {
    let mut out = String::new();
    let m = &config.manifest;
    out.push_str(&format!(
        "policy: {:?}\nrepetitions: {}\nseed: {}\nout_dir: {}\n",
        config.policy,
        config.repetitions,
        config.seed,
        config.out_dir.display()
    ));
    out.push_str(&format!(
        "video: {} segments x {}, ladder {:?} kbps\n",
        m.segment_count,
        m.segment_duration,
        m.ladder.iter().map(|r| r.as_kbps_f64()).collect::<Vec<_>>()
    ));
    for (name, hop) in [("core", &config.core), ("edge", &config.edge)] {
        match hop {
            HopSource::Markov(model) => out.push_str(&format!(
                "{name}: markov, {} states, dwell {}, initial state {}\n",
                model.state_rates.len(),
                model.dwell,
                model.initial_state
            )),
            HopSource::Trace {
                source,
                quantization,
            } => out.push_str(&format!(
                "{name}: trace '{}', {} samples, quantization {}\n",
                source.origin,
                source.samples.len(),
                quantization
            )),
        }
    }
    let s = &config.scheduler;
    out.push_str(&format!(
        "scheduler: window {}, holdback {}, prune_floor {}, max_downswitches {:?}, cache_cap {:?}\n",
        s.window, s.interleave_holdback, s.prune_floor, s.max_downswitches,
        s.cache_cap.map(|v| v.as_kbits_f64()),
    ));
    out.push_str(&format!(
        "qoe: alpha {}, beta {}, eta_up {}, gamma_down {}\n",
        s.qoe.alpha, s.qoe.beta, s.qoe.eta_up, s.qoe.gamma_down
    ));
    out.push_str(&format!(
        "cost: enabled {}, bandwidth_price {}, storage_price {}\n",
        s.cost.enabled, s.cost.bandwidth_price, s.cost.storage_price
    ));
    out.push_str(&format!(
        "baseline: history_k {}, safety_factor {}\n",
        config.baseline.history_k, config.baseline.safety_factor
    ));
    match config.sweep_parameter {
        Some(p) => out.push_str(&format!(
            "sweep: {} over {:?} s, fixed buffer {}\n",
            p.as_str(),
            config
                .sweep_values
                .iter()
                .map(|v| v.as_secs_f64())
                .collect::<Vec<_>>(),
            config.fixed_buffer
        )),
        None => out.push_str(&format!("sweep: none, buffer {}\n", config.fixed_buffer)),
    }
    out
}
