//! Numeric arguments with optional unit suffixes, e.g. `1e-26 e*cm`,
//! `11 kV/cm`, `180s`. A bare number is taken in the canonical unit.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// e·cm
    Dipole,
    /// rad per e·cm
    Kick,
    /// V·s/cm
    FieldTime,
    /// V/cm
    Field,
    /// s
    Time,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Dipole => &[("e*cm", 1.0), ("ecm", 1.0)],
            Dimension::Kick => &[("1/(e*cm)", 1.0), ("rad/(e*cm)", 1.0)],
            Dimension::FieldTime => &[("V*s/cm", 1.0), ("kV*s/cm", 1e3)],
            Dimension::Field => &[("V/cm", 1.0), ("kV/cm", 1e3), ("MV/cm", 1e6)],
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3)],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dimension::Dipole => "dipole",
            Dimension::Kick => "kick",
            Dimension::FieldTime => "field-time",
            Dimension::Field => "field",
            Dimension::Time => "time",
        }
    }
}

/// A number followed by an optional known unit. Spaces and `·` are
/// normalised away, so units are matched as suffixes: a unit starting with a
/// digit, like `1/(e*cm)`, would otherwise merge into the number.
pub fn parse(text: &str, dim: Dimension) -> Result<f64, String> {
    let compact: String = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| if c == '·' { '*' } else { c })
        .collect();
    let finite = |value: f64| {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(format!("`{text}` is not finite"))
        }
    };
    if let Ok(value) = compact.parse::<f64>() {
        return finite(value);
    }
    for (unit, factor) in dim.units() {
        if let Some(value) = compact.strip_suffix(unit).and_then(|n| n.parse::<f64>().ok()) {
            return finite(value).map(|v| v * factor);
        }
    }
    let split = (1..=compact.len())
        .rev()
        .filter(|&i| compact.is_char_boundary(i))
        .find(|&i| compact[..i].parse::<f64>().is_ok())
        .ok_or_else(|| format!("`{text}` does not start with a number"))?;
    let allowed: Vec<&str> = dim.units().iter().map(|(u, _)| *u).collect();
    Err(format!(
        "unknown {} unit `{}` (expected one of: {})",
        dim.name(),
        &compact[split..],
        allowed.join(", ")
    ))
}

pub fn dipole(s: &str) -> Result<f64, String> {
    parse(s, Dimension::Dipole)
}

pub fn kick(s: &str) -> Result<f64, String> {
    parse(s, Dimension::Kick)
}

pub fn field_time(s: &str) -> Result<f64, String> {
    parse(s, Dimension::FieldTime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(dipole("1e-26").unwrap(), 1e-26);
        assert_eq!(dipole("1e-26 e*cm").unwrap(), 1e-26);
        assert_eq!(dipole("1e-26e*cm").unwrap(), 1e-26);
        assert_eq!(dipole("1e-26 e·cm").unwrap(), 1e-26);
        assert_eq!(kick("1e13 1/(e*cm)").unwrap(), 1e13);
        assert_eq!(field_time("2 kV*s/cm").unwrap(), 2e3);
        assert_eq!(parse("11kV/cm", Dimension::Field).unwrap(), 11e3);
        assert_eq!(parse("250 ms", Dimension::Time).unwrap(), 0.25);
        assert_eq!(dipole("-3").unwrap(), -3.0);
    }

    #[test]
    fn malformed() {
        assert!(dipole("").is_err());
        assert!(dipole("abc").is_err());
        assert!(dipole("1e-26 V/cm").is_err());
        assert!(dipole("inf").is_err());
        assert!(dipole("NaN").is_err());
        assert!(parse("3 furlongs", Dimension::Time).is_err());
    }
}
