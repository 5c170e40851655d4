//! Parsing and formatting of unit-suffixed quantities.
//!
//! Config files write every dimensioned value as `"<number> <unit>"`
//! (for example `"50 um"` or `"0.241 S/m"`). The loader converts to the
//! fixed internal units — mm, s, V, S/m and combinations thereof — and
//! the writer always emits the canonical internal unit, so values
//! round-trip bit-exactly.

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Voltage,
    /// Electric field magnitude, V/mm internally.
    FieldStrength,
    Conductivity,
    /// mm^2/s internally.
    Diffusivity,
    /// mm/s internally.
    Velocity,
    /// 1/mm internally.
    InverseLength,
}

impl Dimension {
    /// Accepted unit symbols and their factor to the internal unit.
    fn table(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Length => &[("mm", 1.0), ("um", 1e-3), ("µm", 1e-3), ("cm", 10.0), ("m", 1e3)],
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("min", 60.0)],
            Dimension::Voltage => &[("V", 1.0), ("mV", 1e-3), ("kV", 1e3)],
            Dimension::FieldStrength => &[
                ("V/mm", 1.0),
                ("V/m", 1e-3),
                ("kV/m", 1.0),
                ("V/cm", 0.1),
                ("kV/cm", 100.0),
            ],
            Dimension::Conductivity => &[("S/m", 1.0), ("mS/m", 1e-3), ("S/cm", 100.0), ("mS/cm", 0.1)],
            Dimension::Diffusivity => &[
                ("mm^2/s", 1.0),
                ("mm2/s", 1.0),
                ("um^2/s", 1e-6),
                ("cm^2/s", 100.0),
                ("m^2/s", 1e6),
            ],
            Dimension::Velocity => &[("mm/s", 1.0), ("um/s", 1e-3), ("cm/s", 10.0), ("m/s", 1e3)],
            Dimension::InverseLength => &[
                ("/mm", 1.0),
                ("1/mm", 1.0),
                ("/cm", 0.1),
                ("1/cm", 0.1),
                ("/m", 1e-3),
                ("1/m", 1e-3),
            ],
        }
    }

    pub fn canonical_unit(self) -> &'static str {
        self.table()[0].0
    }
}

/// Parses `"<number> <unit>"` into the internal unit for `dim`.
pub fn parse_quantity(text: &str, dim: Dimension, field: &str) -> Result<f64, ConfigError> {
    let err = |message: String| ConfigError::Unit {
        field: field.to_string(),
        message,
    };
    let trimmed = text.trim();
    let (num_part, unit_part) = match trimmed.split_once(char::is_whitespace) {
        Some((n, u)) => (n, u.trim()),
        None => {
            return Err(err(format!(
                "`{trimmed}` is missing a unit suffix (expected e.g. `1.0 {}`)",
                dim.canonical_unit()
            )))
        }
    };
    let value: f64 = num_part
        .parse()
        .map_err(|_| err(format!("`{num_part}` is not a number")))?;
    if !value.is_finite() {
        return Err(err(format!("`{num_part}` is not finite")));
    }
    for &(symbol, factor) in dim.table() {
        if symbol == unit_part {
            return Ok(value * factor);
        }
    }
    let accepted: Vec<&str> = dim.table().iter().map(|&(s, _)| s).collect();
    Err(err(format!(
        "unknown unit `{unit_part}` (accepted: {})",
        accepted.join(", ")
    )))
}

/// Formats a value in the canonical internal unit of `dim`.
///
/// Uses shortest round-trip float formatting, so `parse_quantity` of the
/// result returns the identical f64.
pub fn format_quantity(value: f64, dim: Dimension) -> String {
    format!("{} {}", value, dim.canonical_unit())
}
