//! Atom-chip wire layout: rectangular wire prisms driven by current channels,
//! a uniform bias field, and per-group current limits.
//!
//! Everything is stored in SI units. The JSON layout format declares its own
//! units and is converted on load.

use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a current channel on the chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireGroup {
    /// Wires perpendicular to the transport axis that move the trap.
    Shifting,
    /// Wires parallel to the transport axis that provide transverse confinement.
    Guiding,
}

impl fmt::Display for WireGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireGroup::Shifting => f.write_str("shifting"),
            WireGroup::Guiding => f.write_str("guiding"),
        }
    }
}

/// A straight conductor of rectangular cross-section carrying a uniform
/// current density along `direction`.
///
/// `height` is measured along the chip normal (the component of `z` orthogonal
/// to `direction`), `width` along the remaining transverse axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WirePrism {
    pub center: Vector3<f64>,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub direction: Vector3<f64>,
    pub channel: usize,
}

/// Uniform external field in tesla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasField(pub Vector3<f64>);

/// Current limits per wire group, amperes (symmetric, `|I| <= limit`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipLimits {
    pub shifting: f64,
    pub guiding: f64,
}

impl ClipLimits {
    pub fn for_group(&self, group: WireGroup) -> f64 {
        match group {
            WireGroup::Shifting => self.shifting,
            WireGroup::Guiding => self.guiding,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipLayout {
    pub prisms: Vec<WirePrism>,
    pub bias: BiasField,
    pub channel_groups: Vec<WireGroup>,
    pub clip_limits: ClipLimits,
}

/// One current value per channel, amperes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentVector(pub Vec<f64>);

impl CurrentVector {
    pub fn zeros(n: usize) -> Self {
        CurrentVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CurrentVector(self.0.iter().map(|v| v * factor).collect())
    }

    /// Checks length and finiteness against a layout.
    pub fn check(&self, layout: &ChipLayout) -> Result<()> {
        if self.len() != layout.channel_count() {
            return Err(Error::domain(format!(
                "current vector has {} entries but the layout has {} channels",
                self.len(),
                layout.channel_count()
            )));
        }
        if let Some(k) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("current on channel {k} is not finite")));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for CurrentVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl ChipLayout {
    pub fn channel_count(&self) -> usize {
        self.channel_groups.len()
    }

    /// Group of the channel driving prism `i`.
    pub fn prism_group(&self, i: usize) -> WireGroup {
        self.channel_groups[self.prisms[i].channel]
    }

    /// Per-channel clip limit expanded from the group limits.
    pub fn channel_limits(&self) -> Vec<f64> {
        self.channel_groups
            .iter()
            .map(|g| self.clip_limits.for_group(*g))
            .collect()
    }

    pub fn channels_in(&self, group: WireGroup) -> Vec<usize> {
        (0..self.channel_count())
            .filter(|&k| self.channel_groups[k] == group)
            .collect()
    }

    pub fn prisms_on_channel(&self, channel: usize) -> impl Iterator<Item = &WirePrism> {
        self.prisms.iter().filter(move |p| p.channel == channel)
    }

    /// Same layout with a different bias field.
    pub fn with_bias(&self, bias: Vector3<f64>) -> Self {
        ChipLayout {
            bias: BiasField(bias),
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A single invariant violation, tagged with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

const UNIT_TOLERANCE: f64 = 1e-12;

/// Lists every invariant violation in `layout`. An empty list means the
/// layout is usable.
pub fn validate_layout(layout: &ChipLayout) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |path: String, message: String| out.push(Diagnostic { path, message });
    let n = layout.channel_count();

    if n == 0 {
        push("channels".into(), "layout declares no channels".into());
    }
    for (i, p) in layout.prisms.iter().enumerate() {
        let path = format!("wires[{i}]");
        for (name, v) in [("length", p.length), ("width", p.width), ("height", p.height)] {
            if !(v.is_finite() && v > 0.0) {
                push(format!("{path}.{name}"), format!("must be positive, got {v}"));
            }
        }
        if !p.center.iter().all(|c| c.is_finite()) {
            push(format!("{path}.center"), "must be finite".into());
        }
        let norm = p.direction.norm();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            push(
                format!("{path}.direction"),
                format!("must be a unit vector, |direction| = {norm}"),
            );
        }
        if p.channel >= n {
            push(
                format!("{path}.channel"),
                format!("channel {} does not exist ({n} channels declared)", p.channel),
            );
        }
    }
    if !layout.bias.0.iter().all(|c| c.is_finite()) {
        push("bias".into(), "all components must be finite".into());
    }
    for (name, v) in [
        ("shifting", layout.clip_limits.shifting),
        ("guiding", layout.clip_limits.guiding),
    ] {
        if !(v.is_finite() && v > 0.0) {
            push(format!("clip_limits.{name}"), format!("must be positive, got {v}"));
        }
    }
    for k in 0..n {
        if !layout.prisms.iter().any(|p| p.channel == k) {
            push(format!("channels[{k}]"), "no wire is driven by this channel".into());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// JSON layout file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsFile {
    length: String,
    current: String,
    field: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    group: WireGroup,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFile {
    center: [f64; 3],
    length: f64,
    width: f64,
    height: f64,
    direction: [f64; 3],
    channel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    units: UnitsFile,
    channels: Vec<ChannelFile>,
    bias: [f64; 3],
    clip_limits: ClipLimits,
    wires: Vec<WireFile>,
}

fn unit_factor(kind: &'static str, unit: &str) -> Result<f64> {
    let f = match (kind, unit) {
        ("length", "m") => 1.0,
        ("length", "mm") => 1e-3,
        ("length", "um") | ("length", "μm") => 1e-6,
        ("current", "A") => 1.0,
        ("current", "mA") => 1e-3,
        ("field", "T") => 1.0,
        ("field", "mT") => 1e-3,
        ("field", "G") => 1e-4,
        _ => {
            return Err(Error::Validation(vec![format!(
                "units.{kind}: unsupported unit `{unit}`"
            )]))
        }
    };
    Ok(f)
}

/// Parses a layout document from a JSON string and validates it.
pub fn parse_layout(text: &str) -> Result<ChipLayout> {
    let file: LayoutFile = serde_json::from_str(text)?;
    let length = unit_factor("length", &file.units.length)?;
    let current = unit_factor("current", &file.units.current)?;
    let field = unit_factor("field", &file.units.field)?;
    let v3 = |a: [f64; 3], s: f64| Vector3::new(a[0] * s, a[1] * s, a[2] * s);

    let layout = ChipLayout {
        prisms: file
            .wires
            .iter()
            .map(|w| WirePrism {
                center: v3(w.center, length),
                length: w.length * length,
                width: w.width * length,
                height: w.height * length,
                direction: v3(w.direction, 1.0),
                channel: w.channel,
            })
            .collect(),
        bias: BiasField(v3(file.bias, field)),
        channel_groups: file.channels.iter().map(|c| c.group).collect(),
        clip_limits: ClipLimits {
            shifting: file.clip_limits.shifting * current,
            guiding: file.clip_limits.guiding * current,
        },
    };
    let diagnostics = validate_layout(&layout);
    if diagnostics.is_empty() {
        Ok(layout)
    } else {
        Err(Error::Validation(
            diagnostics.iter().map(ToString::to_string).collect(),
        ))
    }
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<ChipLayout> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layout(&text)
}

/// Serializes a layout in SI units, so that reloading is bit-exact.
pub fn layout_to_json(layout: &ChipLayout) -> String {
    let a = |v: &Vector3<f64>| [v.x, v.y, v.z];
    let file = LayoutFile {
        units: UnitsFile {
            length: "m".into(),
            current: "A".into(),
            field: "T".into(),
        },
        channels: layout
            .channel_groups
            .iter()
            .map(|&group| ChannelFile { group })
            .collect(),
        bias: a(&layout.bias.0),
        clip_limits: layout.clip_limits,
        wires: layout
            .prisms
            .iter()
            .map(|p| WireFile {
                center: a(&p.center),
                length: p.length,
                width: p.width,
                height: p.height,
                direction: a(&p.direction),
                channel: p.channel,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("layout serialization is infallible")
}

pub fn save_layout(layout: &ChipLayout, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, layout_to_json(layout)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Built-in reference layout
// ---------------------------------------------------------------------------

pub const SHIFTING_CHANNELS: usize = 6;
pub const GUIDING_CHANNELS: usize = 9;
pub const SHIFTING_PERIODS: usize = 5;

/// Centre-to-centre spacing of adjacent shifting wires (2.4 mm over six wires).
pub const SHIFTING_PITCH: f64 = 0.4e-3;
pub const SHIFTING_WIDTH: f64 = 0.1e-3;
pub const SHIFTING_HEIGHT: f64 = 0.01e-3;
/// Chosen so the transverse trap frequencies land near 350 Hz.
pub const GUIDING_PITCH: f64 = 1.8e-3;
pub const GUIDING_WIDTH: f64 = 0.5e-3;
pub const GUIDING_HEIGHT: f64 = 0.1e-3;
pub const WIRE_LENGTH: f64 = 10e-3;
/// Insulating gap between the shifting layer and the guiding layer beneath it.
pub const LAYER_GAP: f64 = 0.09e-3;

/// Bias field calibrated so that [`initial_currents`] put the trap minimum at
/// z = 0.33 mm (see `trap::calibrate_bias_scale`).
pub const REFERENCE_BIAS: [f64; 3] = [7.41e-5, -1.35339e-3, 0.0];

pub const SHIFTING_LIMIT: f64 = 3.5;
pub const GUIDING_LIMIT: f64 = 70.0;

/// The built-in chip: nine guiding wires along x and five periods of six
/// shifting wires along y.
///
/// The chip surface is the plane z = 0 with atoms at z > 0. Shifting wires
/// sit on the surface, guiding wires one insulating gap below them. Channel
/// `k` of period `p` lies at x = (p - 2) * 6 * pitch + (k - 2) * pitch, so
/// shifting wire 2 of the central period is at the origin. Each shifting
/// channel is one continuous wire, so its direction flips from one period to
/// the next.
pub fn reference_layout() -> ChipLayout {
    let mut prisms = Vec::with_capacity(SHIFTING_CHANNELS * SHIFTING_PERIODS + GUIDING_CHANNELS);
    let period = SHIFTING_CHANNELS as f64 * SHIFTING_PITCH;
    for p in 0..SHIFTING_PERIODS {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        for k in 0..SHIFTING_CHANNELS {
            let x = (p as f64 - 2.0) * period + (k as f64 - 2.0) * SHIFTING_PITCH;
            prisms.push(WirePrism {
                center: Vector3::new(x, 0.0, -0.5 * SHIFTING_HEIGHT),
                length: WIRE_LENGTH,
                width: SHIFTING_WIDTH,
                height: SHIFTING_HEIGHT,
                direction: Vector3::new(0.0, sign, 0.0),
                channel: k,
            });
        }
    }
    let guide_z = -(SHIFTING_HEIGHT + LAYER_GAP + 0.5 * GUIDING_HEIGHT);
    for j in 0..GUIDING_CHANNELS {
        let y = (j as f64 - 4.0) * GUIDING_PITCH;
        prisms.push(WirePrism {
            center: Vector3::new(0.0, y, guide_z),
            length: WIRE_LENGTH,
            width: GUIDING_WIDTH,
            height: GUIDING_HEIGHT,
            direction: Vector3::new(1.0, 0.0, 0.0),
            channel: SHIFTING_CHANNELS + j,
        });
    }
    let mut channel_groups = vec![WireGroup::Shifting; SHIFTING_CHANNELS];
    channel_groups.extend(std::iter::repeat(WireGroup::Guiding).take(GUIDING_CHANNELS));

    ChipLayout {
        prisms,
        bias: BiasField(Vector3::from(REFERENCE_BIAS)),
        channel_groups,
        clip_limits: ClipLimits {
            shifting: SHIFTING_LIMIT,
            guiding: GUIDING_LIMIT,
        },
    }
}

/// Currents at the start of transport: six shifting channels (left to right)
/// followed by nine guiding channels.
pub fn initial_currents() -> CurrentVector {
    CurrentVector(vec![
        0.6, 1.05, -0.90, 1.05, 0.60, 0.0, // shifting
        0.0, 13.79, 13.76, -3.78, -3.78, -3.78, 13.76, 13.79, 0.0, // guiding
    ])
}
