use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ConfigError;
use crate::Millis;

/// Caption design parameters shared by both faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionConfig {
    pub char_size_pt: f64,
    pub color_rgba: [u8; 4],
    pub opacity: f64,
    pub font_id: String,
    /// Graphemes revealed per second.
    pub reveal_rate: f64,
    pub max_lines: usize,
    /// Line width in grapheme columns.
    pub line_width: usize,
    /// How long a final caption stays up after its last grapheme is revealed.
    pub linger_ms: Millis,
    /// How long a retracted caption stays up, flagged, after retraction.
    pub retract_linger_ms: Millis,
    /// Scale of the mirrored hearing-face caption.
    pub mirror_scale: f64,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        Self {
            char_size_pt: 32.0,
            color_rgba: [255, 255, 255, 255],
            opacity: 1.0,
            font_id: "sans-serif".to_owned(),
            reveal_rate: 15.0,
            max_lines: 3,
            line_width: 24,
            linger_ms: 4000,
            retract_linger_ms: 1500,
            mirror_scale: 0.5,
        }
    }
}

impl CaptionConfig {
    /// Every field as a patch, e.g. for logging the full config.
    pub fn to_patch(&self) -> ConfigPatch {
        match serde_json::to_value(self) {
            Ok(Value::Object(map)) => ConfigPatch(map),
            _ => unreachable!("config serializes to an object"),
        }
    }
}

/// One offending field in a rejected patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A partial config: field name to raw JSON value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigPatch(pub Map<String, Value>);

impl ConfigPatch {
    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        match value {
            Value::Object(map) => Ok(Self(map)),
            other => Err(ConfigError::NotAnObject(json_kind(&other))),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>> FromIterator<(K, Value)> for ConfigPatch {
    fn from_iter<I: IntoIterator<Item = (K, Value)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

enum Bound {
    Closed(f64, f64),
    /// (lo, hi]
    OpenLow(f64, f64),
}

impl Bound {
    fn contains(&self, x: f64) -> bool {
        match *self {
            Bound::Closed(lo, hi) => (lo..=hi).contains(&x),
            Bound::OpenLow(lo, hi) => x > lo && x <= hi,
        }
    }

    fn describe(&self) -> String {
        match *self {
            Bound::Closed(lo, hi) => format!("must be within [{lo}, {hi}]"),
            Bound::OpenLow(lo, hi) => format!("must be within ({lo}, {hi}]"),
        }
    }
}

fn number(v: &Value, bound: Bound) -> Result<f64, String> {
    let x = v.as_f64().ok_or_else(|| format!("expected a number, got {}", json_kind(v)))?;
    if x.is_finite() && bound.contains(x) {
        Ok(x)
    } else {
        Err(format!("{x} {}", bound.describe()))
    }
}

fn integer(v: &Value, lo: i64, hi: i64) -> Result<i64, String> {
    let x = v
        .as_i64()
        .ok_or_else(|| format!("expected an integer, got {v}"))?;
    if (lo..=hi).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} must be within [{lo}, {hi}]"))
    }
}

fn color(v: &Value) -> Result<[u8; 4], String> {
    let channels = v
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| "expected an array of four channels".to_owned())?;
    let mut rgba = [0u8; 4];
    for (slot, c) in rgba.iter_mut().zip(channels) {
        *slot = c
            .as_u64()
            .and_then(|c| u8::try_from(c).ok())
            .ok_or_else(|| format!("channel {c} must be an integer within [0, 255]"))?;
    }
    Ok(rgba)
}

/// Merges `patch` over `current`.
///
/// Either every field is valid and the merged config is returned, or nothing
/// is applied: unknown field names are reported first, then every field that
/// failed its range check.
pub fn validate_config(
    patch: &ConfigPatch,
    current: &CaptionConfig,
) -> Result<CaptionConfig, ConfigError> {
    const FIELDS: [&str; 10] = [
        "char_size_pt",
        "color_rgba",
        "opacity",
        "font_id",
        "reveal_rate",
        "max_lines",
        "line_width",
        "linger_ms",
        "retract_linger_ms",
        "mirror_scale",
    ];

    let unknown: Vec<String> = patch
        .0
        .keys()
        .filter(|k| !FIELDS.contains(&k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownField(unknown));
    }

    let mut next = current.clone();
    let mut violations = Vec::new();
    for (field, value) in &patch.0 {
        let applied = match field.as_str() {
            "char_size_pt" => number(value, Bound::Closed(8.0, 96.0)).map(|x| next.char_size_pt = x),
            "color_rgba" => color(value).map(|c| next.color_rgba = c),
            "opacity" => number(value, Bound::Closed(0.0, 1.0)).map(|x| next.opacity = x),
            "font_id" => match value.as_str() {
                Some(s) if !s.trim().is_empty() => {
                    next.font_id = s.to_owned();
                    Ok(())
                }
                _ => Err("expected a non-empty string".to_owned()),
            },
            "reveal_rate" => number(value, Bound::Closed(1.0, 120.0)).map(|x| next.reveal_rate = x),
            "max_lines" => integer(value, 1, 8).map(|x| next.max_lines = x as usize),
            "line_width" => integer(value, 8, 80).map(|x| next.line_width = x as usize),
            "linger_ms" => integer(value, 500, 60_000).map(|x| next.linger_ms = x),
            "retract_linger_ms" => integer(value, 0, 10_000).map(|x| next.retract_linger_ms = x),
            "mirror_scale" => number(value, Bound::OpenLow(0.0, 1.0)).map(|x| next.mirror_scale = x),
            _ => unreachable!("unknown fields rejected above"),
        };
        if let Err(message) = applied {
            violations.push(FieldViolation { field: field.clone(), message });
        }
    }

    if violations.is_empty() {
        Ok(next)
    } else {
        Err(ConfigError::OutOfRange(violations))
    }
}
