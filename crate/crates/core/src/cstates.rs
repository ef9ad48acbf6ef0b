//! Package C-state lattice, per-state power profiles and transition costs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DramState, Scheme, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PackageCState {
    C0,
    C2,
    C3,
    C6,
    C7,
    /// C7 with the video decoder clock-gated.
    C7P,
    C8,
    C9,
    C10,
}

impl PackageCState {
    /// Shallowest first.
    pub const ALL: [PackageCState; 9] = [
        PackageCState::C0,
        PackageCState::C2,
        PackageCState::C3,
        PackageCState::C6,
        PackageCState::C7,
        PackageCState::C7P,
        PackageCState::C8,
        PackageCState::C9,
        PackageCState::C10,
    ];

    pub fn depth(&self) -> usize {
        *self as usize
    }

    pub fn name(&self) -> &'static str {
        match self {
            PackageCState::C0 => "C0",
            PackageCState::C2 => "C2",
            PackageCState::C3 => "C3",
            PackageCState::C6 => "C6",
            PackageCState::C7 => "C7",
            PackageCState::C7P => "C7P",
            PackageCState::C8 => "C8",
            PackageCState::C9 => "C9",
            PackageCState::C10 => "C10",
        }
    }

    pub fn parse(s: &str) -> Result<PackageCState> {
        let t = s.trim().replace('′', "P").replace('\'', "P").to_ascii_uppercase();
        PackageCState::ALL
            .into_iter()
            .find(|x| x.name() == t)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown package C-state '{s}'")))
    }

    /// DRAM is active in C0 and C2 and self-refreshing in every deeper state.
    pub fn default_dram_state(&self) -> DramState {
        match self {
            PackageCState::C0 | PackageCState::C2 => DramState::Active,
            _ => DramState::SelfRefresh,
        }
    }

    /// A representative activity vector satisfying the state's entry conditions.
    pub fn canonical_activity(&self) -> Activity {
        let mut a = Activity::all_off();
        match self {
            PackageCState::C0 => {
                a.cores = CoreState::Executing;
                a.dram = DramState::Active;
                a.io_power_gated = false;
                a.dc = DcState::Fetching;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C2 => {
                a.dram = DramState::Active;
                a.io_power_gated = false;
                a.dc = DcState::Fetching;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C3 => {
                a.cores = CoreState::ClockGated;
                a.io_power_gated = false;
                a.dc = DcState::Draining;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C6 => {
                a.io_power_gated = false;
                a.vd = IpState::Active;
                a.dc = DcState::Draining;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C7 => {
                a.vd = IpState::Active;
                a.dc = DcState::Receiving;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C7P => {
                a.vd = IpState::ClockGated;
                a.dc = DcState::Draining;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C8 => {
                a.dc = DcState::Draining;
                a.edp_source = true;
                a.edp_sink = true;
                a.panel = PanelState::Streaming;
            }
            PackageCState::C9 => {}
            PackageCState::C10 => a.panel = PanelState::Off,
        }
        a
    }
}

impl fmt::Display for PackageCState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreState {
    Executing,
    /// CC3: clocks stopped, caches retained.
    ClockGated,
    /// CC6 and deeper.
    PowerGated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpuState {
    Executing,
    /// Projection streamed chunk by chunk into the display controller.
    PipelinedProjection,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpState {
    Active,
    ClockGated,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcState {
    /// Pulling a chunk from DRAM.
    Fetching,
    /// Taking a chunk straight from the decoder.
    Receiving,
    Draining,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelState {
    Streaming,
    Psr,
    Off,
}

/// Which components are on. Each field is ordered from most to least active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Activity {
    pub cores: CoreState,
    pub gpu: GpuState,
    pub vd: IpState,
    pub dc: DcState,
    pub edp_source: bool,
    pub edp_sink: bool,
    pub dram: DramState,
    /// IO and memory-controller domains power-gated.
    pub io_power_gated: bool,
    pub panel: PanelState,
}

impl Activity {
    pub fn all_off() -> Activity {
        Activity {
            cores: CoreState::PowerGated,
            gpu: GpuState::Idle,
            vd: IpState::Off,
            dc: DcState::Off,
            edp_source: false,
            edp_sink: false,
            dram: DramState::SelfRefresh,
            io_power_gated: true,
            panel: PanelState::Psr,
        }
    }
}

/// Deepest package state whose entry conditions the activity vector satisfies.
pub fn deepest_state(a: &Activity) -> Result<PackageCState> {
    let dram_up = a.dram == DramState::Active;
    if a.dc == DcState::Fetching && !dram_up {
        return Err(Error::Consistency("display controller fetching while DRAM is not active".into()));
    }
    if dram_up && a.io_power_gated {
        return Err(Error::Consistency("DRAM active behind power-gated memory IO".into()));
    }
    if a.edp_sink && a.panel == PanelState::Off {
        return Err(Error::Consistency("link receiver on while the panel is off".into()));
    }
    if a.dc == DcState::Receiving && a.vd != IpState::Active && a.gpu != GpuState::PipelinedProjection {
        return Err(Error::Consistency("display controller receiving with no producer".into()));
    }

    if a.cores == CoreState::Executing || a.gpu == GpuState::Executing {
        return Ok(PackageCState::C0);
    }
    if dram_up {
        return Ok(PackageCState::C2);
    }
    if a.cores == CoreState::ClockGated {
        return Ok(PackageCState::C3);
    }
    if !a.io_power_gated {
        return Ok(PackageCState::C6);
    }
    if a.vd == IpState::Active || a.gpu == GpuState::PipelinedProjection {
        return Ok(PackageCState::C7);
    }
    if a.vd == IpState::ClockGated {
        return Ok(PackageCState::C7P);
    }
    if a.dc != DcState::Off || a.edp_source || a.edp_sink {
        return Ok(PackageCState::C8);
    }
    if a.panel == PanelState::Off {
        return Ok(PackageCState::C10);
    }
    Ok(PackageCState::C9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePower {
    pub power_mw: f64,
    pub dram_background_mw: f64,
    pub display_mw: f64,
    pub others_mw: f64,
    /// Overrides the state's default DRAM power state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dram_state: Option<DramState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub entry_power_mw: f64,
    pub entry_latency_s: f64,
    pub exit_power_mw: f64,
    pub exit_latency_s: f64,
}

impl TransitionSpec {
    pub const ZERO: TransitionSpec =
        TransitionSpec { entry_power_mw: 0.0, entry_latency_s: 0.0, exit_power_mw: 0.0, exit_latency_s: 0.0 };

    pub fn latency(&self) -> f64 {
        self.entry_latency_s + self.exit_latency_s
    }

    pub fn energy_j(&self) -> f64 {
        (self.entry_power_mw * self.entry_latency_s + self.exit_power_mw * self.exit_latency_s) * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: PackageCState,
    pub to: PackageCState,
    #[serde(flatten)]
    pub cost: TransitionSpec,
}

fn default_drfb() -> f64 {
    58.0
}
fn default_ref_pixels() -> u64 {
    1920 * 1080
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfile {
    pub states: BTreeMap<PackageCState, StatePower>,
    #[serde(default)]
    pub transitions: Vec<TransitionEntry>,
    /// Used for any ordered pair missing from `transitions`.
    pub default_transition: TransitionSpec,
    #[serde(default = "default_drfb")]
    pub drfb_active_power_adder_mw: f64,
    /// Panel power growth per megapixel above `panel_reference_pixels`, in every state.
    #[serde(default)]
    pub panel_power_per_mpixel_mw: f64,
    #[serde(default = "default_ref_pixels")]
    pub panel_reference_pixels: u64,
    /// Added while the GPU projects chunks inside C7.
    #[serde(default)]
    pub gpu_active_power_mw: f64,
    /// Added while frame-buffer compression runs alongside decode.
    #[serde(default)]
    pub fbc_compute_power_mw: f64,
}

impl PowerProfile {
    pub fn state(&self, s: PackageCState) -> Result<&StatePower> {
        self.states.get(&s).ok_or(Error::MissingState(s))
    }

    pub fn power_mw(&self, s: PackageCState) -> Result<f64> {
        Ok(self.state(s)?.power_mw)
    }

    pub fn dram_state(&self, s: PackageCState) -> DramState {
        self.states.get(&s).and_then(|p| p.dram_state).unwrap_or_else(|| s.default_dram_state())
    }

    pub fn transition(&self, from: PackageCState, to: PackageCState) -> TransitionSpec {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.to == to)
            .map(|t| t.cost)
            .unwrap_or(self.default_transition)
    }

    /// Panel power above the reference size, in milliwatts.
    pub fn panel_adder_mw(&self, pixels: u64) -> f64 {
        self.panel_power_per_mpixel_mw * pixels.saturating_sub(self.panel_reference_pixels) as f64 / 1e6
    }

    pub fn validate(&self, system: Option<&SystemConfig>) -> Result<()> {
        for (s, p) in &self.states {
            let parts = [p.power_mw, p.dram_background_mw, p.display_mw, p.others_mw];
            if parts.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::CalibrationInconsistency(format!("{s}: negative or non-finite power")));
            }
            let sum = p.dram_background_mw + p.display_mw + p.others_mw;
            if (sum - p.power_mw).abs() > 0.5 {
                return Err(Error::CalibrationInconsistency(format!(
                    "{s}: split sums to {sum:.3} mW but total is {:.3} mW",
                    p.power_mw
                )));
            }
            if let Some(sys) = system {
                let bg = sys.dram_background_power.watts(self.dram_state(*s)) * 1e3;
                if (bg - p.dram_background_mw).abs() > 0.5 {
                    return Err(Error::CalibrationInconsistency(format!(
                        "{s}: DRAM background {:.3} mW does not match the system's {:.3} mW",
                        p.dram_background_mw, bg
                    )));
                }
            }
        }
        let t = std::iter::once(&self.default_transition).chain(self.transitions.iter().map(|e| &e.cost));
        for c in t {
            let v = [c.entry_power_mw, c.entry_latency_s, c.exit_power_mw, c.exit_latency_s];
            if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::CalibrationInconsistency("negative transition power or latency".into()));
            }
        }
        let adders = [
            self.drfb_active_power_adder_mw,
            self.panel_power_per_mpixel_mw,
            self.gpu_active_power_mw,
            self.fbc_compute_power_mw,
        ];
        if adders.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::CalibrationInconsistency("negative power adder".into()));
        }
        Ok(())
    }
}

/// Latency and energy of moving between two states.
pub fn transition_cost(profile: &PowerProfile, from: PackageCState, to: PackageCState) -> (f64, f64) {
    let t = profile.transition(from, to);
    (t.latency(), t.energy_j())
}

/// Named per-scheme profiles plus the system parameters they were fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSet {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub profiles: BTreeMap<String, PowerProfile>,
    /// Profile name used for each scheme.
    pub schemes: BTreeMap<Scheme, String>,
    pub system: SystemConfig,
}

impl CalibrationSet {
    pub fn from_json(text: &str) -> Result<CalibrationSet> {
        let c: CalibrationSet = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<CalibrationSet> {
        let text = std::fs::read_to_string(path)?;
        CalibrationSet::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn profile(&self, scheme: Scheme) -> Result<&PowerProfile> {
        let name = self
            .schemes
            .get(&scheme)
            .ok_or_else(|| Error::CalibrationInconsistency(format!("no profile mapped for scheme {scheme}")))?;
        self.profiles
            .get(name)
            .ok_or_else(|| Error::CalibrationInconsistency(format!("scheme {scheme} maps to missing profile '{name}'")))
    }

    pub fn profile_mut(&mut self, scheme: Scheme) -> Result<&mut PowerProfile> {
        let name = self
            .schemes
            .get(&scheme)
            .cloned()
            .ok_or_else(|| Error::CalibrationInconsistency(format!("no profile mapped for scheme {scheme}")))?;
        self.profiles
            .get_mut(&name)
            .ok_or_else(|| Error::CalibrationInconsistency(format!("scheme {scheme} maps to missing profile '{name}'")))
    }

    pub fn validate(&self) -> Result<()> {
        for s in Scheme::ALL {
            self.profile(s)?;
        }
        for p in self.profiles.values() {
            p.validate(Some(&self.system))?;
        }
        Ok(())
    }
}
