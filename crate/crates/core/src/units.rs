//! Unit conventions.
//!
//! Every quantity stored in the library uses one canonical unit per
//! dimension: picoseconds for time, kilometres for distance, gigahertz for
//! frequency and watts for power. Products that mix frequency and time
//! (for instance `β₂·δν²`) go through [`ghz_to_inv_ps`], so `1 GHz·ps = 1e-3`.

/// Time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Time {
    Second,
    Millisecond,
    Nanosecond,
    Picosecond,
    Femtosecond,
}

/// Distance units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Metre,
    Kilometre,
}

/// Frequency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Hertz,
    Gigahertz,
    Terahertz,
}

/// Power units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Power {
    Watt,
    Milliwatt,
}

/// Scale of a unit relative to the canonical one (value in canonical units
/// per one of this unit).
pub trait UnitScale: Copy {
    fn scale(self) -> f64;
}

impl UnitScale for Time {
    fn scale(self) -> f64 {
        match self {
            Time::Second => 1e12,
            Time::Millisecond => 1e9,
            Time::Nanosecond => 1e3,
            Time::Picosecond => 1.0,
            Time::Femtosecond => 1e-3,
        }
    }
}

impl UnitScale for Distance {
    fn scale(self) -> f64 {
        match self {
            Distance::Metre => 1e-3,
            Distance::Kilometre => 1.0,
        }
    }
}

impl UnitScale for Frequency {
    fn scale(self) -> f64 {
        match self {
            Frequency::Hertz => 1e-9,
            Frequency::Gigahertz => 1.0,
            Frequency::Terahertz => 1e3,
        }
    }
}

impl UnitScale for Power {
    fn scale(self) -> f64 {
        match self {
            Power::Watt => 1.0,
            Power::Milliwatt => 1e-3,
        }
    }
}

/// Converts `value` expressed in `unit` to the canonical unit.
pub fn to_canonical<U: UnitScale>(value: f64, unit: U) -> f64 {
    value * unit.scale()
}

/// Converts a canonical value to `unit`.
pub fn from_canonical<U: UnitScale>(value: f64, unit: U) -> f64 {
    value / unit.scale()
}

/// Converts between two units of the same dimension.
pub fn convert<U: UnitScale>(value: f64, from: U, to: U) -> f64 {
    from_canonical(to_canonical(value, from), to)
}

/// Frequency in GHz expressed as cycles per picosecond.
pub fn ghz_to_inv_ps(f_ghz: f64) -> f64 {
    f_ghz * 1e-3
}
