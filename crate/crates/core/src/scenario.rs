//! Experiment descriptions and the transmitters they define.
//!
//! A scenario is read from a small text file of `key = value` lines grouped
//! under `[section]` headers (the TOML subset):
//!
//! ```text
//! antennas = 100
//! users = 10
//! seed = 1
//! realizations = 20
//! victims = 20
//! nfft = 4096
//!
//! [channel]
//! kind = "rayleigh"        # or "los"
//! taps = 75                # rayleigh: taps per link on the T/κ grid
//! # angles_deg = [...]     # los: fixed user azimuths; drawn when absent
//! max_angle_deg = 60.0     # los: sector for drawn azimuths
//! spacing = 0.5            # los: element spacing in wavelengths
//!
//! [pulse]
//! rolloff = 0.22
//! span = 32
//! oversampling = 5
//! symbol_period = 1.0
//!
//! [pa]
//! coefficients = [[1.0, 0.0], [-0.03491, 0.00565]]   # (re, im) per odd order
//!
//! [operating_point]
//! mode = "compression-1db"  # or "input-power", "unscaled"
//! scaling = "global"        # or "per-antenna"
//! # power = 1.0             # input-power mode only
//!
//! [allocation]
//! # xi = [...]              # per-user power split; equal when absent
//! # pathloss = [...]        # per-user large-scale fading; 1 when absent
//! victim_pathloss = 1.0
//!
//! [victim]
//! # taps = 75               # Rayleigh victim taps; channel taps when absent
//!
//! [mc]
//! symbols = 200000
//! segment = 4096
//! overlap = 0.5
//! symbol_kind = "gaussian"  # or "qam16", "qam64", ...
//!
//! [fig3]
//! freqs_over_b = [0.0, 0.5, 1.0, 1.5]
//!
//! [sweep]
//! # allocations = [[...], ...]
//! # pathlosses = [[...], ...]
//! ```
//!
//! Every key is optional; omitted keys take the values shown.

use std::path::Path;

use serde::Deserialize;

use crate::channel::{gen_los, gen_rayleigh, gen_user_angles, ChannelModel, VictimKind, HALF_WAVELENGTH};
use crate::error::{ensure, Error, Result};
use crate::metrics::VictimSpec;
use crate::mc::{McConfig, SymbolKind};
use crate::pa::{PaModel, ScalingMode, REFERENCE_B1, REFERENCE_B2};
use crate::precode::PowerAllocation;
use crate::rng::{stream, Stream};
use crate::signal::Pulse;
use crate::system::{DriveLevel, Transmitter};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub antennas: usize,
    pub users: usize,
    pub seed: u64,
    pub realizations: usize,
    pub victims: usize,
    pub nfft: usize,
    pub channel: ChannelSection,
    pub pulse: PulseSection,
    pub pa: PaSection,
    pub operating_point: OperatingPointSection,
    pub allocation: AllocationSection,
    pub victim: VictimSection,
    pub mc: McSection,
    pub fig3: Fig3Section,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKindName {
    Rayleigh,
    Los,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub kind: ChannelKindName,
    pub taps: usize,
    pub angles_deg: Option<Vec<f64>>,
    pub max_angle_deg: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub rolloff: f64,
    pub span: usize,
    pub oversampling: usize,
    pub symbol_period: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaSection {
    pub coefficients: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMode {
    #[serde(rename = "compression-1db")]
    Compression1db,
    InputPower,
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingName {
    Global,
    PerAntenna,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingPointSection {
    pub mode: DriveMode,
    pub scaling: ScalingName,
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationSection {
    pub xi: Option<Vec<f64>>,
    pub pathloss: Option<Vec<f64>>,
    pub victim_pathloss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VictimSection {
    pub taps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub symbols: usize,
    pub segment: usize,
    pub overlap: f64,
    pub symbol_kind: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3Section {
    pub freqs_over_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub allocations: Vec<Vec<f64>>,
    pub pathlosses: Vec<Vec<f64>>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            antennas: 100,
            users: 10,
            seed: 1,
            realizations: 20,
            victims: 20,
            nfft: crate::system::DEFAULT_NFFT,
            channel: ChannelSection::default(),
            pulse: PulseSection::default(),
            pa: PaSection::default(),
            operating_point: OperatingPointSection::default(),
            allocation: AllocationSection::default(),
            victim: VictimSection::default(),
            mc: McSection::default(),
            fig3: Fig3Section::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            kind: ChannelKindName::Rayleigh,
            taps: 75,
            angles_deg: None,
            max_angle_deg: 60.0,
            spacing: HALF_WAVELENGTH,
        }
    }
}

impl Default for PulseSection {
    fn default() -> Self {
        PulseSection {
            rolloff: 0.22,
            span: 32,
            oversampling: 5,
            symbol_period: 1.0,
        }
    }
}

impl Default for PaSection {
    fn default() -> Self {
        PaSection {
            coefficients: vec![[REFERENCE_B1.re, REFERENCE_B1.im], [REFERENCE_B2.re, REFERENCE_B2.im]],
        }
    }
}

impl Default for OperatingPointSection {
    fn default() -> Self {
        OperatingPointSection {
            mode: DriveMode::Compression1db,
            scaling: ScalingName::Global,
            power: None,
        }
    }
}

impl Default for AllocationSection {
    fn default() -> Self {
        AllocationSection {
            xi: None,
            pathloss: None,
            victim_pathloss: 1.0,
        }
    }
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            symbols: crate::mc::DEFAULT_SYMBOLS,
            segment: crate::mc::DEFAULT_SEGMENT,
            overlap: crate::mc::DEFAULT_OVERLAP,
            symbol_kind: "gaussian".into(),
        }
    }
}

impl Default for Fig3Section {
    fn default() -> Self {
        Fig3Section {
            freqs_over_b: vec![0.0, 0.5, 1.0, 1.5],
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The default scenario with a line-of-sight channel.
    pub fn los() -> Self {
        let mut s = Scenario::default();
        s.channel.kind = ChannelKindName::Los;
        s
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |cond: bool, msg: String| if cond { Ok(()) } else { Err(Error::Config(msg)) };
        cfg(self.antennas >= 1, "antennas must be at least 1".into())?;
        cfg(
            self.users >= 1 && self.users <= self.antennas,
            format!("users must lie in 1..={} (got {})", self.antennas, self.users),
        )?;
        cfg(self.realizations >= 1, "realizations must be at least 1".into())?;
        cfg(self.victims >= 1, "victims must be at least 1".into())?;
        cfg(self.nfft >= 16, "nfft must be at least 16".into())?;
        cfg(self.pulse.oversampling >= 2, "pulse.oversampling must be at least 2".into())?;
        cfg(
            (0.0..=1.0).contains(&self.pulse.rolloff),
            "pulse.rolloff must lie in [0, 1]".into(),
        )?;
        cfg(self.pulse.span >= 1, "pulse.span must be at least 1".into())?;
        cfg(self.pulse.symbol_period > 0.0, "pulse.symbol_period must be positive".into())?;
        cfg(!self.pa.coefficients.is_empty(), "pa.coefficients must not be empty".into())?;
        cfg(
            self.pa.coefficients.iter().flatten().all(|c| c.is_finite()),
            "pa.coefficients must be finite".into(),
        )?;
        match self.channel.kind {
            ChannelKindName::Rayleigh => cfg(self.channel.taps >= 1, "channel.taps must be at least 1".into())?,
            ChannelKindName::Los => {
                cfg(self.channel.spacing > 0.0, "channel.spacing must be positive".into())?;
                if let Some(a) = &self.channel.angles_deg {
                    cfg(
                        a.len() == self.users,
                        format!("channel.angles_deg lists {} angles for {} users", a.len(), self.users),
                    )?;
                    cfg(
                        a.iter().all(|x| x.abs() < 90.0),
                        "channel.angles_deg must lie inside (-90, 90)".into(),
                    )?;
                } else {
                    cfg(
                        self.channel.max_angle_deg > 0.0 && self.channel.max_angle_deg < 90.0,
                        "channel.max_angle_deg must lie inside (0, 90)".into(),
                    )?;
                }
            }
        }
        if let Some(xi) = &self.allocation.xi {
            cfg(xi.len() == self.users, format!("allocation.xi has {} entries for {} users", xi.len(), self.users))?;
        }
        if let Some(b) = &self.allocation.pathloss {
            cfg(
                b.len() == self.users,
                format!("allocation.pathloss has {} entries for {} users", b.len(), self.users),
            )?;
        }
        cfg(self.allocation.victim_pathloss > 0.0, "allocation.victim_pathloss must be positive".into())?;
        if self.operating_point.mode == DriveMode::InputPower {
            cfg(
                self.operating_point.power.is_some_and(|p| p > 0.0),
                "operating_point.power must be positive in input-power mode".into(),
            )?;
        }
        self.mc_config().map_err(|e| Error::Config(e.to_string()))?;
        for xi in &self.sweep.allocations {
            cfg(xi.len() == self.users, "sweep.allocations rows need one entry per user".into())?;
        }
        for b in &self.sweep.pathlosses {
            cfg(b.len() == self.users, "sweep.pathlosses rows need one entry per user".into())?;
        }
        Ok(())
    }

    pub fn pulse(&self) -> Result<Pulse> {
        Pulse::root_raised_cosine(
            self.pulse.rolloff,
            self.pulse.span,
            self.pulse.oversampling,
            self.pulse.symbol_period,
        )
    }

    pub fn pa_model(&self) -> Result<PaModel> {
        PaModel::memoryless(
            self.pa
                .coefficients
                .iter()
                .map(|c| num_complex::Complex64::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn drive(&self) -> DriveLevel {
        let mode = match self.operating_point.scaling {
            ScalingName::Global => ScalingMode::Global,
            ScalingName::PerAntenna => ScalingMode::PerAntenna,
        };
        match self.operating_point.mode {
            DriveMode::Compression1db => DriveLevel::Compression1db(mode),
            DriveMode::InputPower => DriveLevel::InputPower(self.operating_point.power.unwrap_or(1.0), mode),
            DriveMode::Unscaled => DriveLevel::Unscaled,
        }
    }

    pub fn allocation(&self) -> Result<PowerAllocation> {
        match &self.allocation.xi {
            Some(xi) => PowerAllocation::from_weights(xi.clone()),
            None => Ok(PowerAllocation::equal(self.users)),
        }
    }

    /// Minimum `sin θ` separation of drawn line-of-sight users: one
    /// first-null beamwidth `λ / (M Δ)`.
    pub fn beam_separation(&self) -> f64 {
        1.0 / (self.antennas as f64 * self.channel.spacing)
    }

    /// User azimuths (radians) of line-of-sight realization `r`.
    pub fn user_angles(&self, r: usize) -> Result<Vec<f64>> {
        match &self.channel.angles_deg {
            Some(a) => Ok(a.iter().map(|x| x.to_radians()).collect()),
            None => gen_user_angles(
                self.users,
                self.channel.max_angle_deg.to_radians(),
                self.beam_separation(),
                &mut stream(self.seed, Stream::UserChannel, 2 * r as u64 + 1),
            ),
        }
    }

    /// User channels of realization `r`, with the configured pathlosses.
    pub fn channel_model(&self, r: usize) -> Result<ChannelModel> {
        self.channel_model_with(r, self.antennas)
    }

    fn channel_model_with(&self, r: usize, antennas: usize) -> Result<ChannelModel> {
        let k = self.pulse.oversampling;
        let t = self.pulse.symbol_period;
        let mut rng = stream(self.seed, Stream::UserChannel, 2 * r as u64);
        let ch = match self.channel.kind {
            ChannelKindName::Rayleigh => gen_rayleigh(antennas, self.users, self.channel.taps, k, t, &mut rng)?,
            ChannelKindName::Los => gen_los(&self.user_angles(r)?, antennas, self.channel.spacing, k, t, &mut rng)?,
        };
        match &self.allocation.pathloss {
            Some(b) => ch.with_pathloss(b.clone()),
            None => Ok(ch),
        }
    }

    /// The transmitter of realization `r`.
    pub fn transmitter(&self, r: usize) -> Result<Transmitter> {
        Transmitter::new(
            self.pulse()?,
            self.channel_model(r)?,
            self.allocation()?,
            self.pa_model()?,
            self.drive(),
        )
    }

    /// The same scenario with a single transmit antenna, realization `r`.
    pub fn single_antenna_transmitter(&self, r: usize) -> Result<Transmitter> {
        Transmitter::new(
            self.pulse()?,
            self.channel_model_with(r, 1)?,
            self.allocation()?,
            self.pa_model()?,
            self.drive(),
        )
    }

    pub fn victim_spec(&self) -> VictimSpec {
        let taps = self.victim.taps.unwrap_or(match self.channel.kind {
            ChannelKindName::Rayleigh => self.channel.taps,
            ChannelKindName::Los => ChannelSection::default().taps,
        });
        VictimSpec {
            kind: VictimKind::Rayleigh { taps },
            pathloss: self.allocation.victim_pathloss,
        }
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let kind = parse_symbol_kind(&self.mc.symbol_kind)?;
        let mc = McConfig {
            n_symbols: self.mc.symbols,
            welch_segment: self.mc.segment,
            welch_overlap: self.mc.overlap,
            symbol_kind: kind,
            seed: self.seed,
        };
        mc.validate()?;
        Ok(mc)
    }
}

fn parse_symbol_kind(name: &str) -> Result<SymbolKind> {
    if name == "gaussian" {
        return Ok(SymbolKind::Gaussian);
    }
    let order = name
        .strip_prefix("qam")
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| Error::Config(format!("unknown symbol kind '{name}'")))?;
    ensure!(order >= 4, Config, "QAM order {order} is too small");
    Ok(SymbolKind::Qam(order))
}
