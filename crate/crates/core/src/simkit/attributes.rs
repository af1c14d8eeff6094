//! The canonical attribute vocabulary and per-image tag sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// The 17 canonical attributes. Display names (including punctuation) are the
/// wire format used in manifests and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    Bcc,
    BeamOffImage,
    CircBeamstop,
    DiffuseHighQ,
    DiffuseLowQ,
    Fcc,
    Halo,
    HighBackground,
    HigherOrders,
    LinearBeamstop,
    ManyRings,
    Polycrystalline,
    Ring,
    StrongScattering,
    StructureFactor,
    WeakScattering,
    WedgeBeamstop,
}

impl Attribute {
    pub const ALL: [Attribute; 17] = [
        Attribute::Bcc,
        Attribute::BeamOffImage,
        Attribute::CircBeamstop,
        Attribute::DiffuseHighQ,
        Attribute::DiffuseLowQ,
        Attribute::Fcc,
        Attribute::Halo,
        Attribute::HighBackground,
        Attribute::HigherOrders,
        Attribute::LinearBeamstop,
        Attribute::ManyRings,
        Attribute::Polycrystalline,
        Attribute::Ring,
        Attribute::StrongScattering,
        Attribute::StructureFactor,
        Attribute::WeakScattering,
        Attribute::WedgeBeamstop,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Attribute::Bcc => "BCC",
            Attribute::BeamOffImage => "Beam Off Image",
            Attribute::CircBeamstop => "Circ. Beamstop",
            Attribute::DiffuseHighQ => "Diffuse high-q",
            Attribute::DiffuseLowQ => "Diffuse low-q",
            Attribute::Fcc => "FCC",
            Attribute::Halo => "Halo",
            Attribute::HighBackground => "High background",
            Attribute::HigherOrders => "Higher orders",
            Attribute::LinearBeamstop => "Linear beamstop",
            Attribute::ManyRings => "Many rings",
            Attribute::Polycrystalline => "Polycrystalline",
            Attribute::Ring => "Ring",
            Attribute::StrongScattering => "Strong scattering",
            Attribute::StructureFactor => "Structure factor",
            Attribute::WeakScattering => "Weak scattering",
            Attribute::WedgeBeamstop => "Wedge beamstop",
        }
    }

    pub fn from_name(name: &str) -> Option<Attribute> {
        Attribute::ALL.iter().copied().find(|a| a.name() == name)
    }
}

impl std::fmt::Display for Attribute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Attribute {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Attribute::from_name(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown attribute `{s}`")))
    }
}

/// Tags carried by one image: a subset of the canonical vocabulary plus
/// free-form extended tags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub canonical: BTreeSet<Attribute>,
    pub extended: BTreeSet<String>,
}

impl AttributeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, attr: Attribute) {
        self.canonical.insert(attr);
    }

    pub fn insert_extended(&mut self, tag: impl Into<String>) {
        self.extended.insert(tag.into());
    }

    pub fn contains(&self, attr: Attribute) -> bool {
        self.canonical.contains(&attr)
    }

    pub fn is_canonically_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    /// Canonical names in stable (sorted) order.
    pub fn canonical_names(&self) -> Vec<&'static str> {
        self.canonical.iter().map(|a| a.name()).collect()
    }
}
